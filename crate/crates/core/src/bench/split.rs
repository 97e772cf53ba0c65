use rand::seq::SliceRandom;
use rand::Rng;

use crate::codec::Table;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    /// Normal rows kept per failure row in each split; `None` keeps every
    /// available normal row split by `train_fraction`.
    pub ratio: Option<f64>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            ratio: Some(100.0),
        }
    }
}

/// Parses `1:100`-style ratios (normal rows per failure row) or `natural`.
pub fn parse_ratio(s: &str) -> Result<Option<f64>> {
    let s = s.trim();
    if s == "natural" {
        return Ok(None);
    }
    let bad = || Error::Config(format!("bad ratio {s:?}, expected like 1:100 or natural"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    if !(a > 0.0 && b > 0.0) {
        return Err(bad());
    }
    Ok(Some(b / a))
}

pub fn format_ratio(r: Option<f64>) -> String {
    match r {
        None => "natural".into(),
        Some(r) => format!("1:{r}"),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: Table,
    pub test: Table,
    /// Source row ids, in output order.
    pub train_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
    pub counts: SplitCounts,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitCounts {
    pub train_failure: usize,
    pub train_normal: usize,
    pub test_failure: usize,
    pub test_normal: usize,
}

/// Stratified train/test split. Failure rows are split by
/// `train_fraction` (rounded); normal rows are subsampled to `ratio`
/// times the failure count of each split.
pub fn build_dataset<R: Rng + ?Sized>(
    table: &Table,
    target: &str,
    failure: &str,
    spec: &SplitSpec,
    rng: &mut R,
) -> Result<Split> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::Config("train_fraction must be in (0,1)".into()));
    }
    let labels = table.discrete(target)?;
    let mut fail: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == failure).collect();
    let mut normal: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != failure).collect();
    fail.shuffle(rng);
    normal.shuffle(rng);
    let train_f = (fail.len() as f64 * spec.train_fraction).round() as usize;
    let test_f = fail.len() - train_f;
    if train_f == 0 || test_f == 0 {
        return Err(Error::data(format!(
            "{} failure rows cannot fill both splits",
            fail.len()
        )));
    }
    let (train_n, test_n) = match spec.ratio {
        Some(r) => ((train_f as f64 * r).round() as usize, (test_f as f64 * r).round() as usize),
        None => {
            let t = (normal.len() as f64 * spec.train_fraction).round() as usize;
            (t, normal.len() - t)
        }
    };
    if train_n + test_n > normal.len() || train_n == 0 || test_n == 0 {
        return Err(Error::data(format!(
            "need {} normal rows for ratio {}, have {}",
            train_n + test_n,
            format_ratio(spec.ratio),
            normal.len()
        )));
    }
    let mut train_ids: Vec<usize> = fail[..train_f].iter().chain(&normal[..train_n]).copied().collect();
    let mut test_ids: Vec<usize> = fail[train_f..]
        .iter()
        .chain(&normal[train_n..train_n + test_n])
        .copied()
        .collect();
    train_ids.sort_unstable();
    test_ids.sort_unstable();
    Ok(Split {
        train: table.select_rows(&train_ids),
        test: table.select_rows(&test_ids),
        train_ids,
        test_ids,
        counts: SplitCounts {
            train_failure: train_f,
            train_normal: train_n,
            test_failure: test_f,
            test_normal: test_n,
        },
    })
}
