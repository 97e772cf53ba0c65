//! Strategy × classifier × seed evaluation matrix.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::features::Featurizer;
use super::metrics::{g_mean, ConfusionMatrix};
use super::mlp::{Mlp, MlpConfig};
use super::pca::{project_2d, ProjectedPoint};
use super::smote::smote;
use super::split::{build_dataset, SplitSpec};
use super::tree::{DecisionTree, ForestConfig, RandomForest};
use crate::codec::{fit_schema, GmmConfig, Table};
use crate::error::{Error, Result};
use crate::gan::{GanConfig, GanMode, StepMetrics, Synthesizer, Trainer};
use crate::grad::Tensor2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Strategy {
    None,
    Smote,
    Ctgan,
    Rctgan,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::None, Strategy::Smote, Strategy::Ctgan, Strategy::Rctgan];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::Smote => "smote",
            Strategy::Ctgan => "ctgan",
            Strategy::Rctgan => "rctgan",
        }
    }

    fn gan_mode(self) -> Option<GanMode> {
        match self {
            Strategy::Ctgan => Some(GanMode::Ctgan),
            Strategy::Rctgan => Some(GanMode::Rctgan),
            _ => None,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?} (none|smote|ctgan|rctgan)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClassifierKind {
    Dt,
    Rf,
    Mlp,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] = [ClassifierKind::Dt, ClassifierKind::Rf, ClassifierKind::Mlp];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::Dt => "DT",
            ClassifierKind::Rf => "RF",
            ClassifierKind::Mlp => "MLP",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClassifierKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown classifier {s:?} (dt|rf|mlp)")))
    }
}

/// How many synthetic failure rows an augmentation adds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MixPolicy {
    /// Until failure and normal counts are equal.
    Parity,
    /// As many as there are real training rows.
    Literal1to1,
}

impl MixPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            MixPolicy::Parity => "parity",
            MixPolicy::Literal1to1 => "literal-1to1",
        }
    }
}

impl FromStr for MixPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "parity" => Ok(MixPolicy::Parity),
            "literal-1to1" => Ok(MixPolicy::Literal1to1),
            _ => Err(Error::Config(format!("unknown policy {s:?} (parity|literal-1to1)"))),
        }
    }
}

pub fn synthetic_count(train: &Table, target: &str, positive: &str, policy: MixPolicy) -> Result<usize> {
    let labels = train.discrete(target)?;
    let failures = labels.iter().filter(|v| *v == positive).count();
    Ok(match policy {
        MixPolicy::Parity => (labels.len() - failures).saturating_sub(failures),
        MixPolicy::Literal1to1 => labels.len(),
    })
}

/// Appends `synthetic` to `train` and shuffles the result. An empty
/// `synthetic` leaves `train` untouched.
pub fn mix<R: rand::Rng + ?Sized>(train: &Table, synthetic: &Table, rng: &mut R) -> Result<Table> {
    if synthetic.n_rows() == 0 {
        return Ok(train.clone());
    }
    let mut all = train.clone();
    all.append(synthetic)?;
    let mut order: Vec<usize> = (0..all.n_rows()).collect();
    order.shuffle(rng);
    Ok(all.select_rows(&order))
}

/// SplitMix64 finalizer, used to give each pipeline stage its own stream.
pub fn derive_seed(seed: u64, stage: u64) -> u64 {
    let mut z = seed ^ stage.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const STAGE_SPLIT: u64 = 1;
const STAGE_GAN: u64 = 2;
const STAGE_SAMPLE: u64 = 3;
const STAGE_SMOTE: u64 = 4;
const STAGE_MIX: u64 = 5;
const STAGE_CLASSIFIER: u64 = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub strategies: Vec<Strategy>,
    pub classifiers: Vec<ClassifierKind>,
    pub seed: u64,
    pub seeds: usize,
    pub split: SplitSpec,
    pub policy: MixPolicy,
    pub smote_k: usize,
    pub gan: GanConfig,
    pub forest: ForestConfig,
    pub mlp: MlpConfig,
    pub jobs: usize,
    pub projections: bool,
    pub verbose: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            strategies: Strategy::ALL.to_vec(),
            classifiers: ClassifierKind::ALL.to_vec(),
            seed: 7,
            seeds: 5,
            split: SplitSpec::default(),
            policy: MixPolicy::Parity,
            smote_k: 5,
            gan: GanConfig::default(),
            forest: ForestConfig::default(),
            mlp: MlpConfig::default(),
            jobs: 1,
            projections: true,
            verbose: false,
        }
    }
}

impl ExperimentConfig {
    /// The seeds actually run: `seed, seed + 1, ...`.
    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub table: Table,
    pub target: String,
    /// Target value treated as the positive (failure) class.
    pub positive: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub strategy: Strategy,
    pub classifier: ClassifierKind,
    pub seed: u64,
    pub outcome: std::result::Result<(ConfusionMatrix, f64), String>,
    pub wall: Duration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GanRun {
    pub strategy: Strategy,
    pub seed: u64,
    pub metrics: Vec<StepMetrics>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub strategy: Strategy,
    pub seed: u64,
    pub points: Vec<ProjectedPoint>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub strategies: Vec<Strategy>,
    pub classifiers: Vec<ClassifierKind>,
    pub seeds: Vec<u64>,
    pub cells: Vec<Cell>,
    pub gan_runs: Vec<GanRun>,
    pub projections: Vec<Projection>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

impl ExperimentReport {
    pub fn g_means(&self, strategy: Strategy, classifier: ClassifierKind) -> Vec<f64> {
        self.cells
            .iter()
            .filter(|c| c.strategy == strategy && c.classifier == classifier)
            .filter_map(|c| c.outcome.as_ref().ok().map(|(_, g)| *g))
            .collect()
    }

    /// Median G-mean over the seeds that succeeded.
    pub fn median(&self, strategy: Strategy, classifier: ClassifierKind) -> Option<f64> {
        median(self.g_means(strategy, classifier))
    }

    pub fn all_failed(&self) -> bool {
        self.cells.iter().all(|c| c.outcome.is_err())
    }

    /// Per-seed rows followed by one median row per strategy and
    /// classifier. Wall time is left out so reruns compare byte for byte.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["strategy", "classifier", "seed", "g_mean", "tp", "fn", "fp", "tn", "status"])?;
        for c in &self.cells {
            let seed = c.seed.to_string();
            match &c.outcome {
                Ok((m, g)) => w.write_record([
                    c.strategy.as_str(),
                    c.classifier.as_str(),
                    &seed,
                    &g.to_string(),
                    &m.tp.to_string(),
                    &m.fn_.to_string(),
                    &m.fp.to_string(),
                    &m.tn.to_string(),
                    "ok",
                ])?,
                Err(e) => w.write_record([c.strategy.as_str(), c.classifier.as_str(), &seed, "", "", "", "", "", e])?,
            }
        }
        for &s in &self.strategies {
            for &k in &self.classifiers {
                let n = self.g_means(s, k).len();
                let (g, status) = match self.median(s, k) {
                    Some(g) => (g.to_string(), format!("median of {n}")),
                    None => (String::new(), "no successful seeds".to_string()),
                };
                w.write_record([s.as_str(), k.as_str(), "median", &g, "", "", "", "", &status])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    /// Median G-mean in percent, strategies as rows and classifiers as
    /// columns.
    pub fn to_table(&self) -> String {
        let mut rows = vec![std::iter::once("strategy".to_string())
            .chain(self.classifiers.iter().map(|k| k.as_str().to_string()))
            .collect::<Vec<_>>()];
        for &s in &self.strategies {
            let mut r = vec![s.as_str().to_string()];
            for &k in &self.classifiers {
                r.push(self.median(s, k).map_or_else(|| "-".into(), |g| format!("{:.2}", g * 100.0)));
            }
            rows.push(r);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for r in &rows {
            let line: Vec<String> = r
                .iter()
                .enumerate()
                .map(|(c, v)| if c == 0 { format!("{v:<w$}", w = widths[c]) } else { format!("{v:>w$}", w = widths[c]) })
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

pub fn metrics_csv(metrics: &[StepMetrics]) -> String {
    let mut s = String::from("step,loss_d,loss_c,loss_g,gp\n");
    for m in metrics {
        s.push_str(&format!("{},{},{},{},{}\n", m.step, m.loss_d, m.loss_c, m.loss_g, m.gp));
    }
    s
}

/// Mean `|loss_d|` over the last `fraction` of the steps.
pub fn tail_mean_abs_loss_d(metrics: &[StepMetrics], fraction: f64) -> Option<f64> {
    let k = ((metrics.len() as f64) * fraction).ceil() as usize;
    if k == 0 {
        return None;
    }
    let tail = &metrics[metrics.len() - k..];
    Some(tail.iter().map(|m| m.loss_d.abs()).sum::<f64>() / k as f64)
}

pub fn fit_classifier_predict(
    kind: ClassifierKind,
    x: &Tensor2,
    y: &[usize],
    test: &Tensor2,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STAGE_CLASSIFIER));
    match kind {
        ClassifierKind::Dt => DecisionTree::fit(x, y)?.predict(test),
        ClassifierKind::Rf => RandomForest::fit(x, y, &cfg.forest, &mut rng)?.predict(test),
        ClassifierKind::Mlp => Mlp::fit(x, y, &cfg.mlp, &mut rng)?.predict(test),
    }
}

/// Trains a GAN of the given mode on the training split only.
pub fn train_gan(
    train: &Table,
    target: &str,
    gan: &GanConfig,
    mode: GanMode,
    seed: u64,
    metrics: &mut Vec<StepMetrics>,
) -> Result<Synthesizer> {
    let (schema, _) = fit_schema(train, target, &GmmConfig::default())?;
    let cfg = GanConfig { mode, ..gan.clone() };
    let mut trainer = Trainer::new(train, schema, cfg, seed)?;
    for _ in 0..trainer.total_steps() {
        metrics.push(trainer.step()?);
    }
    Ok(trainer.into_model())
}

struct SeedOutput {
    cells: Vec<Cell>,
    gan_runs: Vec<GanRun>,
    projections: Vec<Projection>,
}

fn log(cfg: &ExperimentConfig, msg: impl FnOnce() -> String) {
    if cfg.verbose {
        eprintln!("{}", msg());
    }
}

fn run_seed(data: &Dataset, cfg: &ExperimentConfig, seed: u64) -> SeedOutput {
    let mut out = SeedOutput { cells: Vec::new(), gan_runs: Vec::new(), projections: Vec::new() };
    let fail_all = |out: &mut SeedOutput, msg: String| {
        for &s in &cfg.strategies {
            for &k in &cfg.classifiers {
                out.cells.push(Cell { strategy: s, classifier: k, seed, outcome: Err(msg.clone()), wall: Duration::ZERO });
            }
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STAGE_SPLIT));
    let split = match build_dataset(&data.table, &data.target, &data.positive, &cfg.split, &mut rng) {
        Ok(s) => s,
        Err(e) => {
            fail_all(&mut out, e.to_string());
            return out;
        }
    };
    assert!(
        split.train_ids.iter().all(|i| split.test_ids.binary_search(i).is_err()),
        "train and test rows overlap"
    );
    log(cfg, || format!("seed {seed}: split {:?}", split.counts));
    let prepared = Featurizer::fit(&split.train, &data.target).and_then(|f| {
        let xt = f.transform(&split.test)?;
        let yt = f.labels(&split.test, &data.positive)?;
        Ok((f, xt, yt))
    });
    let (feat, x_test, y_test) = match prepared {
        Ok(p) => p,
        Err(e) => {
            fail_all(&mut out, e.to_string());
            return out;
        }
    };

    for &strategy in &cfg.strategies {
        let started = Instant::now();
        let mut synthetic_rows: Option<Table> = None;
        let augmented: Result<Table> = (|| {
            let count = synthetic_count(&split.train, &data.target, &data.positive, cfg.policy)?;
            let synthetic = match strategy {
                Strategy::None => return Ok(split.train.clone()),
                Strategy::Smote => {
                    let mut r = ChaCha8Rng::seed_from_u64(derive_seed(seed, STAGE_SMOTE));
                    smote(&split.train, &data.target, &data.positive, count, cfg.smote_k, &mut r)?
                }
                Strategy::Ctgan | Strategy::Rctgan => {
                    let mode = strategy.gan_mode().expect("gan strategy");
                    let mut metrics = Vec::new();
                    let fitted = train_gan(&split.train, &data.target, &cfg.gan, mode, derive_seed(seed, STAGE_GAN), &mut metrics);
                    out.gan_runs.push(GanRun {
                        strategy,
                        seed,
                        metrics,
                        error: fitted.as_ref().err().map(ToString::to_string),
                    });
                    let model = fitted?;
                    let mut r = ChaCha8Rng::seed_from_u64(derive_seed(seed, STAGE_SAMPLE));
                    model.sample(count, Some(&data.positive), &mut r)?
                }
            };
            let mut r = ChaCha8Rng::seed_from_u64(derive_seed(seed, STAGE_MIX));
            let mixed = mix(&split.train, &synthetic, &mut r)?;
            synthetic_rows = Some(synthetic);
            Ok(mixed)
        })();
        let prep = started.elapsed();
        log(cfg, || format!("seed {seed}: {strategy} augmentation in {prep:.1?}"));

        let train_xy = augmented.and_then(|t| Ok((feat.transform(&t)?, feat.labels(&t, &data.positive)?)));
        if let (true, Some(syn), Ok(_)) = (cfg.projections && strategy.gan_mode().is_some(), &synthetic_rows, &train_xy) {
            let projected = (|| {
                let xr = feat.transform(&split.train)?;
                let xs = feat.transform(syn)?;
                let cr = split.train.discrete(&data.target)?;
                let cs = syn.discrete(&data.target)?;
                project_2d(&xr, cr, &xs, cs)
            })();
            if let Ok(points) = projected {
                out.projections.push(Projection { strategy, seed, points });
            }
        }
        for &classifier in &cfg.classifiers {
            let t0 = Instant::now();
            let outcome = match &train_xy {
                Err(e) => Err(e.to_string()),
                Ok((x, y)) => fit_classifier_predict(classifier, x, y, &x_test, cfg, seed)
                    .and_then(|pred| {
                        let m = ConfusionMatrix::from_predictions(&y_test, &pred, 1)?;
                        Ok((m, g_mean(&m)?))
                    })
                    .map_err(|e| e.to_string()),
            };
            let wall = prep + t0.elapsed();
            log(cfg, || match &outcome {
                Ok((m, g)) => format!("seed {seed}: {strategy}/{classifier} g_mean {g:.4} {m:?} in {wall:.1?}"),
                Err(e) => format!("seed {seed}: {strategy}/{classifier} failed: {e}"),
            });
            out.cells.push(Cell { strategy, classifier, seed, outcome, wall });
        }
    }
    out
}

/// Runs every strategy × classifier cell for each seed. Seeds run on up to
/// `cfg.jobs` threads; output order does not depend on scheduling.
pub fn run_experiment(data: &Dataset, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    if cfg.strategies.is_empty() || cfg.classifiers.is_empty() || cfg.seeds == 0 {
        return Err(Error::Config("experiment needs strategies, classifiers and seeds".into()));
    }
    if cfg.strategies.iter().any(|s| s.gan_mode().is_some()) {
        cfg.gan.validate()?;
    }
    let seeds = cfg.seed_list();
    let slots: Vec<Mutex<Option<SeedOutput>>> = seeds.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let jobs = cfg.jobs.clamp(1, seeds.len());
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= seeds.len() {
                    break;
                }
                let r = run_seed(data, cfg, seeds[i]);
                *slots[i].lock().expect("no poisoned slot") = Some(r);
            });
        }
    });
    let mut report = ExperimentReport {
        strategies: cfg.strategies.clone(),
        classifiers: cfg.classifiers.clone(),
        seeds: seeds.clone(),
        cells: Vec::new(),
        gan_runs: Vec::new(),
        projections: Vec::new(),
    };
    let mut outputs: Vec<SeedOutput> = slots
        .into_iter()
        .map(|m| m.into_inner().expect("no poisoned slot").expect("every seed ran"))
        .collect();
    for o in &mut outputs {
        report.gan_runs.append(&mut o.gan_runs);
        report.projections.append(&mut o.projections);
    }
    // Group cells by strategy, classifier, then seed.
    let mut cells: Vec<Cell> = outputs.into_iter().flat_map(|o| o.cells).collect();
    let pos = |s: Strategy, k: ClassifierKind| {
        (
            cfg.strategies.iter().position(|&x| x == s).unwrap_or(usize::MAX),
            cfg.classifiers.iter().position(|&x| x == k).unwrap_or(usize::MAX),
        )
    };
    cells.sort_by_key(|c| {
        let (a, b) = pos(c.strategy, c.classifier);
        (a, b, seeds.iter().position(|&s| s == c.seed))
    });
    report.cells = cells;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::Column;

    #[test]
    fn parse_names() {
        assert_eq!("rctgan".parse::<Strategy>().unwrap(), Strategy::Rctgan);
        assert_eq!("dt".parse::<ClassifierKind>().unwrap(), ClassifierKind::Dt);
        assert!("svm".parse::<ClassifierKind>().is_err());
        assert_eq!("literal-1to1".parse::<MixPolicy>().unwrap(), MixPolicy::Literal1to1);
    }

    #[test]
    fn parity_counts() {
        let labels: Vec<String> = (0..17574).map(|i| if i < 174 { "1" } else { "0" }.to_string()).collect();
        let t = Table::new(vec!["y".into()], vec![Column::Discrete(labels)]).unwrap();
        assert_eq!(synthetic_count(&t, "y", "1", MixPolicy::Parity).unwrap(), 17226);
        assert_eq!(synthetic_count(&t, "y", "1", MixPolicy::Literal1to1).unwrap(), 17574);
    }

    #[test]
    fn tail_mean() {
        let m: Vec<StepMetrics> = (1..=10)
            .map(|i| StepMetrics { step: i, loss_d: if i > 8 { -2.0 } else { 9.0 }, loss_c: 0.0, loss_g: 0.0, gp: 0.0 })
            .collect();
        assert_eq!(tail_mean_abs_loss_d(&m, 0.2), Some(2.0));
        assert_eq!(tail_mean_abs_loss_d(&[], 0.2), None);
    }

    #[test]
    fn seeds_are_distinct_streams() {
        assert_ne!(derive_seed(7, 1), derive_seed(7, 2));
        assert_ne!(derive_seed(7, 1), derive_seed(8, 1));
    }
}
