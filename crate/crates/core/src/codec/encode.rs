use rand::Rng;

use super::gmm::{nearest_mode, responsibilities};
use super::schema::{ColumnMeta, Span, TableSchema, ALPHA_SCALE};
use super::table::{Column, Table};
use crate::error::{Error, Result};
use crate::grad::{argmax, Tensor2};

/// Encoded rows together with the span index that maps slices back to
/// source columns.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedMatrix {
    pub data: Tensor2,
    pub spans: Vec<Span>,
}

impl EncodedMatrix {
    pub fn rows(&self) -> usize {
        self.data.rows()
    }

    pub fn width(&self) -> usize {
        self.data.cols()
    }
}

/// Picks the mode a continuous value is encoded under: a draw from the
/// posterior responsibilities restricted to modes whose clip range
/// contains the value, or the nearest mode when none does.
fn assign_mode<R: Rng + ?Sized>(meta_modes: &[super::gmm::Mode], c: f64, rng: &mut R) -> usize {
    let mut r = responsibilities(meta_modes, c);
    for (k, m) in meta_modes.iter().enumerate() {
        if (c - m.mean).abs() > ALPHA_SCALE * m.std {
            r[k] = 0.0;
        }
    }
    let total: f64 = r.iter().sum();
    if !(total > 0.0) {
        return nearest_mode(meta_modes, c);
    }
    let mut u = rng.random::<f64>() * total;
    for (k, &p) in r.iter().enumerate() {
        if p > 0.0 {
            if u < p {
                return k;
            }
            u -= p;
        }
    }
    r.iter().rposition(|&p| p > 0.0).expect("positive mass")
}

/// Mode-specific normalization for continuous columns, one-hot for
/// discrete ones. Columns are matched to the schema by name.
pub fn encode<R: Rng + ?Sized>(table: &Table, schema: &TableSchema, rng: &mut R) -> Result<EncodedMatrix> {
    let n = table.n_rows();
    let width = schema.encoded_width();
    let mut data = Tensor2::zeros(n, width);
    let mut offset = 0;
    for meta in schema.columns() {
        let col = table
            .column(meta.name())
            .ok_or_else(|| Error::data(format!("table lacks column {}", meta.name())))?;
        match (meta, col) {
            (ColumnMeta::Continuous { modes, median, name }, Column::Continuous(values)) => {
                for (r, &v) in values.iter().enumerate() {
                    let c = if v.is_nan() { *median } else { v };
                    if !c.is_finite() {
                        return Err(Error::data(format!("non-finite value in {name}")));
                    }
                    let k = assign_mode(modes, c, rng);
                    let m = &modes[k];
                    let alpha = ((c - m.mean) / (ALPHA_SCALE * m.std)).clamp(-1.0, 1.0);
                    let row = data.row_mut(r);
                    row[offset] = alpha;
                    row[offset + 1 + k] = 1.0;
                }
            }
            (ColumnMeta::Discrete { categories, name, .. }, Column::Discrete(values)) => {
                for (r, v) in values.iter().enumerate() {
                    let k = categories.iter().position(|c| c == v).ok_or_else(|| {
                        Error::UnknownCategory {
                            column: name.clone(),
                            value: v.clone(),
                        }
                    })?;
                    data.row_mut(r)[offset + k] = 1.0;
                }
            }
            _ => {
                return Err(Error::data(format!(
                    "column {} kind differs from schema",
                    meta.name()
                )))
            }
        }
        offset += meta.encoded_width();
    }
    Ok(EncodedMatrix {
        data,
        spans: schema.spans(),
    })
}

/// Inverse of [`encode`]. One-hot slices are read by argmax, so soft
/// (activated) generator output decodes directly; α is clamped to
/// `[-1, 1]` before inversion.
pub fn decode(m: &Tensor2, schema: &TableSchema) -> Result<Table> {
    if m.cols() != schema.encoded_width() {
        return Err(Error::shape(
            "decode",
            format!("width {} but schema expects {}", m.cols(), schema.encoded_width()),
        ));
    }
    let n = m.rows();
    let mut names = Vec::new();
    let mut columns = Vec::new();
    let mut offset = 0;
    for meta in schema.columns() {
        names.push(meta.name().to_string());
        match meta {
            ColumnMeta::Continuous { modes, .. } => {
                let vals = (0..n)
                    .map(|r| {
                        let row = m.row(r);
                        let k = argmax(&row[offset + 1..offset + 1 + modes.len()]);
                        let alpha = row[offset].clamp(-1.0, 1.0);
                        alpha * ALPHA_SCALE * modes[k].std + modes[k].mean
                    })
                    .collect();
                columns.push(Column::Continuous(vals));
            }
            ColumnMeta::Discrete { categories, .. } => {
                let vals = (0..n)
                    .map(|r| {
                        let row = m.row(r);
                        categories[argmax(&row[offset..offset + categories.len()])].clone()
                    })
                    .collect();
                columns.push(Column::Discrete(vals));
            }
        }
        offset += meta.encoded_width();
    }
    Table::new(names, columns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::gmm::Mode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn schema() -> TableSchema {
        TableSchema::new(
            vec![
                ColumnMeta::Continuous {
                    name: "x".into(),
                    modes: vec![
                        Mode { weight: 0.5, mean: 10.0, std: 2.0 },
                        Mode { weight: 0.5, mean: 100.0, std: 5.0 },
                    ],
                    median: 10.0,
                },
                ColumnMeta::Discrete {
                    name: "y".into(),
                    categories: vec!["a".into(), "b".into()],
                    counts: vec![1, 1],
                },
            ],
            "y",
        )
        .unwrap()
    }

    fn one(x: f64, y: &str) -> Table {
        Table::new(
            vec!["x".into(), "y".into()],
            vec![Column::Continuous(vec![x]), Column::Discrete(vec![y.into()])],
        )
        .unwrap()
    }

    #[test]
    fn mean_encodes_to_zero_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let e = encode(&one(10.0, "a"), &schema(), &mut rng).unwrap();
        assert_eq!(e.data.row(0), &[0.0, 1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn four_sigma_is_alpha_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let e = encode(&one(18.0, "b"), &schema(), &mut rng).unwrap();
        assert_eq!(e.data.get(0, 0), 1.0);
        assert_eq!(e.data.get(0, 1), 1.0);
    }

    #[test]
    fn unknown_category() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            encode(&one(1.0, "zzz"), &schema(), &mut rng),
            Err(Error::UnknownCategory { .. })
        ));
    }

    #[test]
    fn soft_one_hot_decodes_by_argmax() {
        let m = Tensor2::from_vec(1, 5, vec![0.0, 0.2, 0.8, 0.1, 0.9]).unwrap();
        let t = decode(&m, &schema()).unwrap();
        assert_eq!(t.discrete("y").unwrap(), &["b"]);
        let Column::Continuous(x) = t.column("x").unwrap() else { panic!() };
        assert_eq!(x[0], 100.0);
    }

    #[test]
    fn alpha_clamped_before_inversion() {
        let m = Tensor2::from_vec(1, 5, vec![3.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        let t = decode(&m, &schema()).unwrap();
        let Column::Continuous(x) = t.column("x").unwrap() else { panic!() };
        assert_eq!(x[0], 18.0);
    }

    #[test]
    fn width_mismatch() {
        assert!(decode(&Tensor2::zeros(1, 4), &schema()).is_err());
    }
}
