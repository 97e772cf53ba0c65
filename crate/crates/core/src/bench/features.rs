use crate::codec::{median, Column, Table};
use crate::error::{Error, Result};
use crate::grad::Tensor2;

#[derive(Clone, Debug, PartialEq)]
enum Feature {
    Value { column: String, fill: f64 },
    OneHot { column: String, categories: Vec<String> },
}

/// Maps tables to numeric feature matrices: continuous cells as-is with
/// missing values filled by the training median, discrete cells one-hot
/// over the training categories. The target column is excluded.
#[derive(Clone, Debug, PartialEq)]
pub struct Featurizer {
    target: String,
    features: Vec<Feature>,
}

impl Featurizer {
    pub fn fit(train: &Table, target: &str) -> Result<Self> {
        if train.index_of(target).is_none() {
            return Err(Error::data(format!("no target column {target}")));
        }
        let mut features = Vec::new();
        for (name, col) in train.names().iter().zip(train.columns()) {
            if name == target {
                continue;
            }
            features.push(match col {
                Column::Continuous(v) => {
                    let mut present: Vec<f64> = v.iter().copied().filter(|x| !x.is_nan()).collect();
                    let fill = if present.is_empty() { 0.0 } else { median(&mut present) };
                    Feature::Value { column: name.clone(), fill }
                }
                Column::Discrete(v) => {
                    let mut categories = v.clone();
                    categories.sort();
                    categories.dedup();
                    Feature::OneHot { column: name.clone(), categories }
                }
            });
        }
        Ok(Self {
            target: target.to_string(),
            features,
        })
    }

    pub fn width(&self) -> usize {
        self.features
            .iter()
            .map(|f| match f {
                Feature::Value { .. } => 1,
                Feature::OneHot { categories, .. } => categories.len(),
            })
            .sum()
    }

    pub fn transform(&self, table: &Table) -> Result<Tensor2> {
        let n = table.n_rows();
        let mut out = Tensor2::zeros(n, self.width());
        let mut offset = 0;
        for f in &self.features {
            match f {
                Feature::Value { column, fill } => {
                    let Some(Column::Continuous(v)) = table.column(column) else {
                        return Err(Error::data(format!("{column} is not a continuous column")));
                    };
                    for (r, &x) in v.iter().enumerate() {
                        out.set(r, offset, if x.is_nan() { *fill } else { x });
                    }
                    offset += 1;
                }
                Feature::OneHot { column, categories } => {
                    let v = table.discrete(column)?;
                    for (r, x) in v.iter().enumerate() {
                        if let Ok(k) = categories.binary_search(x) {
                            out.set(r, offset + k, 1.0);
                        }
                    }
                    offset += categories.len();
                }
            }
        }
        Ok(out)
    }

    /// 1 for `positive`, 0 for every other target value.
    pub fn labels(&self, table: &Table, positive: &str) -> Result<Vec<usize>> {
        Ok(table
            .discrete(&self.target)?
            .iter()
            .map(|v| usize::from(v == positive))
            .collect())
    }
}
