//! Two-class benchmark tables with known generating distributions.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::codec::{Column, Mode, Table};
use crate::error::{Error, Result};

pub const SYNTHETIC_TARGET: &str = "label";
pub const SYNTHETIC_NORMAL: &str = "0";
pub const SYNTHETIC_FAILURE: &str = "1";
pub const SYNTHETIC_CHANNEL: &str = "channel";
const CHANNELS: [&str; 3] = ["a", "b", "c"];

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n_rows: usize,
    /// Normal rows per failure row.
    pub ratio: f64,
    pub n_continuous: usize,
    /// Shift of each failure mode from its normal counterpart, in units of
    /// the component standard deviation.
    pub separation: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_rows: 5050,
            ratio: 100.0,
            n_continuous: 8,
            separation: 1.5,
        }
    }
}

/// Generating parameters of one continuous feature, per class.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTruth {
    pub name: String,
    pub normal: Vec<Mode>,
    pub failure: Vec<Mode>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub features: Vec<FeatureTruth>,
    /// Channel probabilities for normal and failure rows.
    pub channel_normal: [f64; 3],
    pub channel_failure: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub table: Table,
    pub truth: GroundTruth,
    pub failures: usize,
}

fn draw_mixture<R: Rng + ?Sized>(modes: &[Mode], rng: &mut R) -> f64 {
    let mut u: f64 = rng.random();
    let m = modes
        .iter()
        .find(|m| {
            u -= m.weight;
            u < 0.0
        })
        .unwrap_or(&modes[modes.len() - 1]);
    Normal::new(m.mean, m.std).expect("positive std").sample(rng)
}

fn draw_category<R: Rng + ?Sized>(p: &[f64; 3], rng: &mut R) -> &'static str {
    let mut u: f64 = rng.random();
    for (k, &pk) in p.iter().enumerate() {
        u -= pk;
        if u < 0.0 {
            return CHANNELS[k];
        }
    }
    CHANNELS[2]
}

/// Each continuous feature is a two-component Gaussian mixture per class;
/// failure components sit `separation` standard deviations away from the
/// normal ones, in a direction that alternates by feature. The `channel`
/// column leans toward `a` for normal rows and `c` for failures.
pub fn make_synthetic_benchmark<R: Rng + ?Sized>(spec: &SyntheticSpec, rng: &mut R) -> Result<SyntheticData> {
    if spec.n_continuous == 0 || !(spec.ratio > 0.0) || !spec.separation.is_finite() {
        return Err(Error::Config("synthetic benchmark needs features, a positive ratio and finite separation".into()));
    }
    let failures = (spec.n_rows as f64 / (spec.ratio + 1.0)).round() as usize;
    if failures == 0 || failures >= spec.n_rows {
        return Err(Error::Config(format!(
            "{} rows at ratio 1:{} leave a class empty",
            spec.n_rows, spec.ratio
        )));
    }
    let features: Vec<FeatureTruth> = (0..spec.n_continuous)
        .map(|j| {
            let spread = 1.0 + 0.25 * j as f64;
            let base = [(-3.0 * spread, spread), (3.0 * spread, spread)];
            let dir = if j % 2 == 0 { 1.0 } else { -1.0 };
            let normal = base
                .iter()
                .zip([0.6, 0.4])
                .map(|(&(mean, std), weight)| Mode { weight, mean, std })
                .collect();
            let failure = base
                .iter()
                .zip([0.5, 0.5])
                .map(|(&(mean, std), weight)| Mode { weight, mean: mean + dir * spec.separation * std, std })
                .collect();
            FeatureTruth {
                name: format!("f{j}"),
                normal,
                failure,
            }
        })
        .collect();
    let truth = GroundTruth {
        features,
        channel_normal: [0.6, 0.3, 0.1],
        channel_failure: [0.2, 0.3, 0.5],
    };

    let mut is_failure: Vec<bool> = (0..spec.n_rows).map(|i| i < failures).collect();
    is_failure.shuffle(rng);
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(spec.n_rows); spec.n_continuous];
    let mut channel = Vec::with_capacity(spec.n_rows);
    let mut label = Vec::with_capacity(spec.n_rows);
    for &f in &is_failure {
        for (col, ft) in columns.iter_mut().zip(&truth.features) {
            col.push(draw_mixture(if f { &ft.failure } else { &ft.normal }, rng));
        }
        let p = if f { &truth.channel_failure } else { &truth.channel_normal };
        channel.push(draw_category(p, rng).to_string());
        label.push(if f { SYNTHETIC_FAILURE } else { SYNTHETIC_NORMAL }.to_string());
    }
    let mut names: Vec<String> = truth.features.iter().map(|f| f.name.clone()).collect();
    names.push(SYNTHETIC_CHANNEL.into());
    names.push(SYNTHETIC_TARGET.into());
    let mut cols: Vec<Column> = columns.into_iter().map(Column::Continuous).collect();
    cols.push(Column::Discrete(channel));
    cols.push(Column::Discrete(label));
    Ok(SyntheticData {
        table: Table::new(names, cols)?,
        truth,
        failures,
    })
}
