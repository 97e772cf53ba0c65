//! SMOTE: new minority rows interpolated between a minority row and one
//! of its nearest minority neighbours.

use rand::Rng;

use crate::codec::{median, Column, Table};
use crate::error::{Error, Result};
use crate::grad::Tensor2;

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of the `k` nearest other rows of each row (Euclidean, ties by
/// lower index).
pub fn nearest_neighbours(x: &Tensor2, k: usize) -> Vec<Vec<usize>> {
    let n = x.rows();
    (0..n)
        .map(|i| {
            let mut others: Vec<(f64, usize)> =
                (0..n).filter(|&j| j != i).map(|j| (dist2(x.row(i), x.row(j)), j)).collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            others.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

/// One synthetic row: which minority row it started from, which
/// neighbour it moved toward, and how far.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoteDraw {
    pub base: usize,
    pub neighbour: usize,
    pub gap: f64,
}

/// Generates `count` rows from the minority matrix `x`. With a single
/// minority row every draw copies it.
pub fn smote_matrix<R: Rng + ?Sized>(x: &Tensor2, count: usize, k: usize, rng: &mut R) -> Result<(Tensor2, Vec<SmoteDraw>)> {
    let m = x.rows();
    if m == 0 {
        return Err(Error::data("SMOTE needs at least one minority row"));
    }
    if k == 0 {
        return Err(Error::Config("SMOTE k must be positive".into()));
    }
    let nn = nearest_neighbours(x, k.min(m - 1));
    let mut out = Tensor2::zeros(count, x.cols());
    let mut draws = Vec::with_capacity(count);
    for r in 0..count {
        let base = rng.random_range(0..m);
        let (neighbour, gap) = if nn[base].is_empty() {
            (base, 0.0)
        } else {
            (nn[base][rng.random_range(0..nn[base].len())], rng.random::<f64>())
        };
        for (c, o) in out.row_mut(r).iter_mut().enumerate() {
            let a = x.get(base, c);
            *o = a + gap * (x.get(neighbour, c) - a);
        }
        draws.push(SmoteDraw { base, neighbour, gap });
    }
    Ok((out, draws))
}

/// Table-level SMOTE over the rows whose target is `positive`.
/// Continuous columns are interpolated (missing cells first filled with the
/// minority median); discrete columns are copied from the base row.
pub fn smote<R: Rng + ?Sized>(
    train: &Table,
    target: &str,
    positive: &str,
    count: usize,
    k: usize,
    rng: &mut R,
) -> Result<Table> {
    let labels = train.discrete(target)?;
    let ids: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == positive).collect();
    let minority = train.select_rows(&ids);
    let cont: Vec<usize> = (0..minority.n_cols())
        .filter(|&c| matches!(minority.columns()[c], Column::Continuous(_)))
        .collect();
    let mut x = Tensor2::zeros(minority.n_rows(), cont.len());
    for (j, &c) in cont.iter().enumerate() {
        let Column::Continuous(v) = &minority.columns()[c] else { unreachable!() };
        let mut present: Vec<f64> = v.iter().copied().filter(|x| !x.is_nan()).collect();
        let fill = if present.is_empty() { 0.0 } else { median(&mut present) };
        for (r, &val) in v.iter().enumerate() {
            x.set(r, j, if val.is_nan() { fill } else { val });
        }
    }
    let (new, draws) = smote_matrix(&x, count, k, rng)?;
    let columns = minority
        .columns()
        .iter()
        .enumerate()
        .map(|(c, col)| match col {
            Column::Continuous(_) => {
                let j = cont.iter().position(|&cc| cc == c).expect("continuous index");
                Column::Continuous((0..count).map(|r| new.get(r, j)).collect())
            }
            Column::Discrete(v) => Column::Discrete(draws.iter().map(|d| v[d.base].clone()).collect()),
        })
        .collect();
    Table::new(minority.names().to_vec(), columns)
}
