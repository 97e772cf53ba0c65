//! Flat `key=value` run configuration shared by every command.

use rctgan::bench::{
    format_ratio, parse_ratio, ClassifierKind, ExperimentConfig, Strategy, SyntheticSpec,
};
use rctgan::codec::{Layout, LoadOptions, BACKBLAZE_TARGET};
use rctgan::gan::{GanConfig, GAN_KEYS};
use rctgan::{Error, Result};

/// Keys outside the GAN config, with descriptions.
const RUN_KEYS: &[(&str, &str)] = &[
    ("seed", "base seed; experiments run seed, seed+1, ..."),
    ("seeds", "number of seeds per experiment cell"),
    ("jobs", "worker threads for experiment seeds"),
    ("target", "target column of --data"),
    ("positive", "target value treated as failure"),
    ("layout", "generic | backblaze"),
    ("backblaze_model", "keep only this drive model (empty keeps all)"),
    ("strategies", "experiment strategies: none,smote,ctgan,rctgan"),
    ("classifiers", "experiment classifiers: DT,RF,MLP"),
    ("strategy", "evaluate: single strategy"),
    ("classifier", "evaluate: single classifier"),
    ("train_fraction", "share of failure rows used for training"),
    ("ratio", "normal rows per failure row in each split (1:N | natural)"),
    ("policy", "synthetic row count: parity | literal-1to1"),
    ("smote_k", "SMOTE neighbours"),
    ("n_trees", "random forest size"),
    ("bootstrap", "random forest bootstrap sampling"),
    ("max_features", "random forest features per split (auto = sqrt d)"),
    ("mlp_hidden", "MLP hidden widths"),
    ("mlp_lr", "MLP Adam learning rate"),
    ("mlp_epochs", "MLP training epochs"),
    ("mlp_batch", "MLP minibatch size"),
    ("projections", "write 2-D projections of real and synthetic rows"),
    ("synthetic_failures", "failure rows in the synthetic benchmark"),
    ("synthetic_continuous", "continuous features in the synthetic benchmark"),
    ("synthetic_separation", "failure shift in the synthetic benchmark, in stds"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub target: String,
    pub positive: String,
    pub layout: String,
    pub backblaze_model: String,
    pub strategy: Strategy,
    pub classifier: ClassifierKind,
    pub synthetic_failures: usize,
    pub synthetic_continuous: usize,
    pub synthetic_separation: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let spec = SyntheticSpec::default();
        Self {
            experiment: ExperimentConfig::default(),
            target: BACKBLAZE_TARGET.to_string(),
            positive: "1".to_string(),
            layout: "generic".to_string(),
            backblaze_model: String::new(),
            strategy: Strategy::Rctgan,
            classifier: ClassifierKind::Dt,
            synthetic_failures: (spec.n_rows as f64 / (spec.ratio + 1.0)).round() as usize,
            synthetic_continuous: spec.n_continuous,
            synthetic_separation: spec.separation,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

fn parse_list<T: std::str::FromStr<Err = Error>>(value: &str) -> Result<Vec<T>> {
    let items = value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<T>>>()?;
    if items.is_empty() {
        return Err(Error::Config(format!("empty list {value:?}")));
    }
    Ok(items)
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let e = &mut self.experiment;
        let v = value.trim();
        match key {
            "seed" => e.seed = parse(key, v)?,
            "seeds" => e.seeds = parse(key, v)?,
            "jobs" => e.jobs = parse(key, v)?,
            "target" => self.target = v.to_string(),
            "positive" => self.positive = v.to_string(),
            "layout" => match v {
                "generic" | "backblaze" => self.layout = v.to_string(),
                _ => return Err(Error::Config(format!("unknown layout {v:?} (generic|backblaze)"))),
            },
            "backblaze_model" => self.backblaze_model = v.to_string(),
            "strategies" => e.strategies = parse_list(v)?,
            "classifiers" => e.classifiers = parse_list(v)?,
            "strategy" => self.strategy = v.parse()?,
            "classifier" => self.classifier = v.parse()?,
            "train_fraction" => e.split.train_fraction = parse(key, v)?,
            "ratio" => e.split.ratio = parse_ratio(v)?,
            "policy" => e.policy = v.parse()?,
            "smote_k" => e.smote_k = parse(key, v)?,
            "n_trees" => e.forest.n_trees = parse(key, v)?,
            "bootstrap" => e.forest.bootstrap = parse(key, v)?,
            "max_features" => {
                e.forest.max_features = match v {
                    "auto" => None,
                    _ => Some(parse(key, v)?),
                }
            }
            "mlp_hidden" => e.mlp.hidden = parse_list::<Dim>(v)?.into_iter().map(|d| d.0).collect(),
            "mlp_lr" => e.mlp.lr = parse(key, v)?,
            "mlp_epochs" => e.mlp.epochs = parse(key, v)?,
            "mlp_batch" => e.mlp.batch_size = parse(key, v)?,
            "projections" => e.projections = parse(key, v)?,
            "synthetic_failures" => self.synthetic_failures = parse(key, v)?,
            "synthetic_continuous" => self.synthetic_continuous = parse(key, v)?,
            "synthetic_separation" => self.synthetic_separation = parse(key, v)?,
            _ if GAN_KEYS.iter().any(|(k, _)| *k == key) => e.gan.set(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let e = &self.experiment;
        let mut out = vec![
            ("seed", e.seed.to_string()),
            ("seeds", e.seeds.to_string()),
            ("jobs", e.jobs.to_string()),
            ("target", self.target.clone()),
            ("positive", self.positive.clone()),
            ("layout", self.layout.clone()),
            ("backblaze_model", self.backblaze_model.clone()),
            ("strategies", join(&e.strategies)),
            ("classifiers", join(&e.classifiers)),
            ("strategy", self.strategy.to_string()),
            ("classifier", self.classifier.to_string()),
            ("train_fraction", e.split.train_fraction.to_string()),
            ("ratio", format_ratio(e.split.ratio)),
            ("policy", e.policy.as_str().to_string()),
            ("smote_k", e.smote_k.to_string()),
            ("n_trees", e.forest.n_trees.to_string()),
            ("bootstrap", e.forest.bootstrap.to_string()),
            ("max_features", e.forest.max_features.map_or_else(|| "auto".into(), |m| m.to_string())),
            ("mlp_hidden", join(&e.mlp.hidden)),
            ("mlp_lr", e.mlp.lr.to_string()),
            ("mlp_epochs", e.mlp.epochs.to_string()),
            ("mlp_batch", e.mlp.batch_size.to_string()),
            ("projections", e.projections.to_string()),
            ("synthetic_failures", self.synthetic_failures.to_string()),
            ("synthetic_continuous", self.synthetic_continuous.to_string()),
            ("synthetic_separation", self.synthetic_separation.to_string()),
        ];
        out.extend(e.gan.entries());
        out
    }

    /// Applies a config file: one `key=value` per line, `#` starts a
    /// comment, blank lines are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {line:?}", n + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| Error::Config(format!("line {}: {}", n + 1, strip(e))))?;
        }
        Ok(())
    }

    pub fn apply_assignment(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects key=value, got {kv:?}")))?;
        self.set(k.trim(), v)
    }

    pub fn gan(&self) -> &GanConfig {
        &self.experiment.gan
    }

    pub fn load_options(&self) -> LoadOptions {
        let layout = match self.layout.as_str() {
            "backblaze" => Layout::Backblaze {
                model: (!self.backblaze_model.is_empty()).then(|| self.backblaze_model.clone()),
            },
            _ => Layout::Generic,
        };
        LoadOptions {
            layout,
            target: Some(self.target.clone()),
            ..LoadOptions::default()
        }
    }

    /// Benchmark sized so the configured split ratio has enough normal rows.
    pub fn synthetic_spec(&self) -> SyntheticSpec {
        let ratio = self.experiment.split.ratio.unwrap_or(SyntheticSpec::default().ratio);
        SyntheticSpec {
            n_rows: (self.synthetic_failures as f64 * (ratio + 1.0)).round() as usize,
            ratio,
            n_continuous: self.synthetic_continuous,
            separation: self.synthetic_separation,
        }
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

struct Dim(usize);

impl std::str::FromStr for Dim {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().parse() {
            Ok(d) if d > 0 => Ok(Dim(d)),
            _ => Err(Error::Config(format!("bad width {s:?}"))),
        }
    }
}

/// Every key with its default and description, for `--help`.
pub fn keys_help() -> String {
    let defaults = RunConfig::default().entries();
    let described = RUN_KEYS.iter().chain(GAN_KEYS);
    let width = defaults.iter().map(|(k, v)| k.len() + v.len() + 1).max().unwrap_or(0);
    let mut out = String::from("Config keys (key=default), settable in --config files or with --set:\n");
    for (key, desc) in described {
        let value = defaults
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .unwrap_or_default();
        let kv = format!("{key}={value}");
        out.push_str(&format!("  {kv:<width$}  {desc}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_is_described_and_round_trips() {
        let cfg = RunConfig::default();
        let entries = cfg.entries();
        assert_eq!(entries.len(), RUN_KEYS.len() + GAN_KEYS.len());
        let mut again = RunConfig::default();
        for (k, v) in &entries {
            assert!(RUN_KEYS.iter().chain(GAN_KEYS).any(|(d, _)| d == k), "{k}");
            again.set(k, v).unwrap();
        }
        assert_eq!(again, cfg);
    }

    #[test]
    fn file_comments_and_unknown_keys() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# comment\nepochs = 3  # trailing\n\nratio=1:500\nstrategies=none,smote\n").unwrap();
        assert_eq!(cfg.gan().epochs, 3);
        assert_eq!(cfg.experiment.split.ratio, Some(500.0));
        assert_eq!(cfg.experiment.strategies, vec![Strategy::None, Strategy::Smote]);
        let err = cfg.apply_text("epochs=1\nbogus=2\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(cfg.apply_text("no equals sign").is_err());
    }

    #[test]
    fn synthetic_spec_follows_ratio() {
        let mut cfg = RunConfig::default();
        assert_eq!(cfg.synthetic_spec().n_rows, 5050);
        cfg.set("ratio", "1:500").unwrap();
        assert_eq!(cfg.synthetic_spec().n_rows, 50 * 501);
    }

    #[test]
    fn help_lists_defaults() {
        let h = keys_help();
        for key in ["epochs=300", "batch_size=500", "pac=10", "ratio=1:100", "seeds=5", "mode=rctgan"] {
            assert!(h.contains(key), "{key} missing");
        }
    }
}
