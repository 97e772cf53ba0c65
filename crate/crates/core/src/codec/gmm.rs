//! One-dimensional Gaussian mixtures fitted by EM, with the component
//! count chosen by BIC.

use std::f64::consts::PI;

/// One retained mixture component.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mode {
    pub weight: f64,
    pub mean: f64,
    pub std: f64,
}

impl Mode {
    pub fn log_density(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.std;
        -0.5 * z * z - self.std.ln() - 0.5 * (2.0 * PI).ln()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmmConfig {
    pub max_modes: usize,
    pub min_weight: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub std_floor: f64,
    /// EM runs on at most this many (evenly strided) points.
    pub max_samples: usize,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            max_modes: 10,
            min_weight: 0.005,
            max_iter: 100,
            tol: 1e-6,
            std_floor: 1e-6,
            max_samples: 5000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureFit {
    pub modes: Vec<Mode>,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
}

/// Relative std floor inside the standardized space.
const STD_FLOOR_STANDARDIZED: f64 = 1e-3;

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Posterior component responsibilities at `x`.
pub fn responsibilities(modes: &[Mode], x: f64) -> Vec<f64> {
    let logs: Vec<f64> = modes
        .iter()
        .map(|m| m.weight.ln() + m.log_density(x))
        .collect();
    let z = log_sum_exp(&logs);
    if !z.is_finite() {
        let mut r = vec![0.0; modes.len()];
        let nearest = nearest_mode(modes, x);
        r[nearest] = 1.0;
        return r;
    }
    logs.iter().map(|l| (l - z).exp()).collect()
}

/// Component with the smallest standardized distance to `x`.
pub fn nearest_mode(modes: &[Mode], x: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, m) in modes.iter().enumerate() {
        let d = ((x - m.mean) / m.std).abs();
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// EM for a fixed component count on (already standardized) data.
pub fn fit_fixed(x: &[f64], k: usize, cfg: &GmmConfig) -> MixtureFit {
    let n = x.len();
    debug_assert!(n > 0 && k > 0);
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();

    let global_std = {
        let mean = x.iter().sum::<f64>() / n as f64;
        (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64)
            .sqrt()
            .max(STD_FLOOR_STANDARDIZED)
    };
    let mut modes: Vec<Mode> = (0..k)
        .map(|i| {
            let q = ((i as f64 + 0.5) / k as f64 * sorted.len() as f64) as usize;
            Mode {
                weight: 1.0 / k as f64,
                mean: sorted[q.min(sorted.len() - 1)],
                std: global_std / k as f64,
            }
        })
        .collect();

    let mut resp = vec![0.0; n * k];
    let mut logs = vec![0.0; k];
    let mut prev_ll = f64::NEG_INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let mut ll = f64::NEG_INFINITY;
    for iter in 0..cfg.max_iter {
        iterations = iter + 1;
        // E step
        ll = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            for (j, m) in modes.iter().enumerate() {
                logs[j] = m.weight.ln() + m.log_density(xi);
            }
            let z = log_sum_exp(&logs);
            ll += z;
            for j in 0..k {
                resp[i * k + j] = (logs[j] - z).exp();
            }
        }
        ll /= n as f64;
        if (ll - prev_ll).abs() < cfg.tol {
            converged = true;
            break;
        }
        prev_ll = ll;
        // M step
        for (j, m) in modes.iter_mut().enumerate() {
            let nk: f64 = (0..n).map(|i| resp[i * k + j]).sum::<f64>() + 1e-12;
            let mean = (0..n).map(|i| resp[i * k + j] * x[i]).sum::<f64>() / nk;
            let var = (0..n)
                .map(|i| resp[i * k + j] * (x[i] - mean).powi(2))
                .sum::<f64>()
                / nk;
            m.weight = nk / n as f64;
            m.mean = mean;
            m.std = var.sqrt().max(STD_FLOOR_STANDARDIZED);
        }
    }
    MixtureFit {
        modes,
        converged,
        iterations,
        log_likelihood: ll * n as f64,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeSelection {
    pub modes: Vec<Mode>,
    /// Set when no multi-component fit converged and a single mode was used.
    pub fell_back: bool,
}

/// Fits a mixture to raw (unstandardized, finite) values: standardize,
/// choose the component count by BIC among converged EM runs, prune light
/// components, and map the parameters back to the original scale.
pub fn fit_modes(values: &[f64], cfg: &GmmConfig) -> ModeSelection {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    if !(std > 0.0) || !std.is_finite() {
        return ModeSelection {
            modes: vec![Mode {
                weight: 1.0,
                mean,
                std: cfg.std_floor,
            }],
            fell_back: false,
        };
    }

    let m = n.min(cfg.max_samples.max(1));
    let z: Vec<f64> = (0..m).map(|i| (values[i * n / m] - mean) / std).collect();
    let mut distinct = z.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let max_k = cfg.max_modes.max(1).min(distinct.len());

    let single = fit_fixed(&z, 1, cfg);
    let bic = |fit: &MixtureFit, k: usize| -2.0 * fit.log_likelihood + (3 * k - 1) as f64 * (m as f64).ln();
    let mut best_bic = bic(&single, 1);
    let mut best = single;
    let mut any_multi_converged = false;
    let mut misses = 0;
    for k in 2..=max_k {
        let fit = fit_fixed(&z, k, cfg);
        if !fit.converged {
            continue;
        }
        any_multi_converged = true;
        let b = bic(&fit, k);
        if b < best_bic {
            best_bic = b;
            best = fit;
            misses = 0;
        } else {
            misses += 1;
            if misses >= 2 {
                break;
            }
        }
    }

    let mut kept: Vec<Mode> = best
        .modes
        .into_iter()
        .filter(|md| md.weight >= cfg.min_weight)
        .collect();
    if kept.is_empty() {
        kept.push(Mode {
            weight: 1.0,
            mean: 0.0,
            std: 1.0,
        });
    }
    let total: f64 = kept.iter().map(|md| md.weight).sum();
    let modes = kept
        .into_iter()
        .map(|md| Mode {
            weight: md.weight / total,
            mean: md.mean * std + mean,
            std: (md.std * std).max(cfg.std_floor),
        })
        .collect();
    ModeSelection {
        modes,
        fell_back: max_k > 1 && !any_multi_converged,
    }
}
