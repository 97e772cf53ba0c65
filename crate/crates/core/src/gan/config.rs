use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grad::AdamConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GanMode {
    /// Residual critic plus auxiliary classifier.
    Rctgan,
    /// Baseline: plain critic, no classifier.
    Ctgan,
}

impl fmt::Display for GanMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GanMode::Rctgan => "rctgan",
            GanMode::Ctgan => "ctgan",
        })
    }
}

impl FromStr for GanMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rctgan" => Ok(GanMode::Rctgan),
            "ctgan" => Ok(GanMode::Ctgan),
            _ => Err(Error::Config(format!("unknown mode {s:?} (rctgan|ctgan)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GanConfig {
    pub mode: GanMode,
    pub noise_dim: usize,
    pub pac: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub gp_lambda: f64,
    pub gumbel_tau: f64,
    pub generator_dims: Vec<usize>,
    pub critic_dims: Vec<usize>,
    pub classifier_dims: Vec<usize>,
    pub classifier_dropout: f64,
    pub leaky_alpha: f64,
    /// `None` follows the mode (residual for rctgan, plain for ctgan).
    pub critic_residual: Option<bool>,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            mode: GanMode::Rctgan,
            noise_dim: 128,
            pac: 10,
            batch_size: 500,
            epochs: 300,
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            gp_lambda: 10.0,
            gumbel_tau: 0.2,
            generator_dims: vec![256, 256],
            critic_dims: vec![256, 256],
            classifier_dims: vec![256, 128],
            classifier_dropout: 0.5,
            leaky_alpha: 0.2,
            critic_residual: None,
        }
    }
}

/// Documented configuration keys with their defaults.
pub const GAN_KEYS: &[(&str, &str)] = &[
    ("mode", "rctgan | ctgan"),
    ("noise_dim", "generator noise width"),
    ("pac", "rows packed into one critic input"),
    ("batch_size", "rows per training step (multiple of pac)"),
    ("epochs", "passes over the training rows"),
    ("lr", "Adam learning rate for all three networks"),
    ("beta1", "Adam first-moment decay"),
    ("beta2", "Adam second-moment decay"),
    ("adam_eps", "Adam denominator epsilon"),
    ("gp_lambda", "gradient-penalty weight"),
    ("gumbel_tau", "Gumbel-softmax temperature"),
    ("generator_dims", "residual block widths of the generator"),
    ("critic_dims", "hidden widths of the critic"),
    ("classifier_dims", "hidden widths of the auxiliary classifier"),
    ("classifier_dropout", "classifier dropout rate"),
    ("leaky_alpha", "LeakyReLU slope"),
    ("critic_residual", "auto | true | false"),
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

pub(crate) fn parse_dims(key: &str, value: &str) -> Result<Vec<usize>> {
    let dims: Vec<usize> = value
        .split(',')
        .map(|v| parse(key, v))
        .collect::<Result<_>>()?;
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::Config(format!("{key} needs positive widths")));
    }
    Ok(dims)
}

fn join(dims: &[usize]) -> String {
    dims.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl GanConfig {
    pub fn residual_critic(&self) -> bool {
        self.critic_residual.unwrap_or(self.mode == GanMode::Rctgan)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("noise_dim", self.noise_dim),
            ("pac", self.pac),
            ("batch_size", self.batch_size),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{k} must be positive")));
            }
        }
        if self.batch_size % self.pac != 0 {
            return Err(Error::Config(format!(
                "batch_size {} is not divisible by pac {}",
                self.batch_size, self.pac
            )));
        }
        if !(self.lr > 0.0) || !(self.gumbel_tau > 0.0) || !(self.gp_lambda >= 0.0) {
            return Err(Error::Config("lr and gumbel_tau must be positive, gp_lambda non-negative".into()));
        }
        for (k, v) in [
            ("classifier_dropout", self.classifier_dropout),
            ("leaky_alpha", self.leaky_alpha),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{k} must be in (0,1)")));
            }
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "mode" => self.mode = value.trim().parse()?,
            "noise_dim" => self.noise_dim = parse(key, value)?,
            "pac" => self.pac = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "beta1" => self.beta1 = parse(key, value)?,
            "beta2" => self.beta2 = parse(key, value)?,
            "adam_eps" => self.adam_eps = parse(key, value)?,
            "gp_lambda" => self.gp_lambda = parse(key, value)?,
            "gumbel_tau" => self.gumbel_tau = parse(key, value)?,
            "generator_dims" => self.generator_dims = parse_dims(key, value)?,
            "critic_dims" => self.critic_dims = parse_dims(key, value)?,
            "classifier_dims" => self.classifier_dims = parse_dims(key, value)?,
            "classifier_dropout" => self.classifier_dropout = parse(key, value)?,
            "leaky_alpha" => self.leaky_alpha = parse(key, value)?,
            "critic_residual" => {
                self.critic_residual = match value.trim() {
                    "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            _ => return Err(Error::Config(format!("unknown GAN key {key}"))),
        }
        Ok(())
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("mode", self.mode.to_string()),
            ("noise_dim", self.noise_dim.to_string()),
            ("pac", self.pac.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("lr", self.lr.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("adam_eps", self.adam_eps.to_string()),
            ("gp_lambda", self.gp_lambda.to_string()),
            ("gumbel_tau", self.gumbel_tau.to_string()),
            ("generator_dims", join(&self.generator_dims)),
            ("critic_dims", join(&self.critic_dims)),
            ("classifier_dims", join(&self.classifier_dims)),
            ("classifier_dropout", self.classifier_dropout.to_string()),
            ("leaky_alpha", self.leaky_alpha.to_string()),
            (
                "critic_residual",
                self.critic_residual
                    .map_or_else(|| "auto".to_string(), |b| b.to_string()),
            ),
        ]
    }

    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = GanConfig::default();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got {line:?}")))?;
            cfg.set(k.trim(), v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
