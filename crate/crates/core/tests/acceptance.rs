//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any fails.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rctgan::bench::{
    build_dataset, g_mean, make_synthetic_benchmark, metrics_csv, parse_ratio, run_experiment, tail_mean_abs_loss_d,
    ClassifierKind, ConfusionMatrix, Dataset, ExperimentConfig, ExperimentReport, SplitCounts, SplitSpec, Strategy,
    SyntheticSpec, SYNTHETIC_FAILURE, SYNTHETIC_TARGET,
};
use rctgan::codec::{decode, encode, fit_schema, Column, ColumnMeta, ConditionSampler, GmmConfig, Table, TableSchema};
use rctgan::gan::{classifier, critic, generator, gradient_penalty, GanConfig, GanMode, Networks};
use rctgan::grad::{LayerKind, Mode, Net, ParamSet, Tape, Tensor2};

mod common;
use common::{check_net, check_op, op_cases, wide_schema};

/// GAN budget for the end-to-end run: full network sizes, smaller
/// batches and fewer epochs than the defaults.
fn end_to_end_gan() -> GanConfig {
    GanConfig {
        batch_size: 100,
        epochs: 60,
        ..GanConfig::default()
    }
}

/// Small networks for the report-layout and determinism runs.
fn tiny_gan() -> GanConfig {
    GanConfig {
        noise_dim: 16,
        pac: 5,
        batch_size: 50,
        epochs: 1,
        generator_dims: vec![32, 32],
        critic_dims: vec![32, 32],
        classifier_dims: vec![32, 16],
        ..GanConfig::default()
    }
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn gradients() -> Outcome {
    let started = Instant::now();
    let mut worst = 0.0f64;
    let mut failed = Vec::new();
    let mut checked = 0;
    for case in op_cases() {
        let r = check_op(&case);
        worst = worst.max(r.worst);
        checked += 1;
        if !r.ok(20) {
            failed.push(case.name.to_string());
        }
    }
    let schema = wide_schema();
    let cfg = GanConfig::default();
    let ctgan = GanConfig { mode: GanMode::Ctgan, ..cfg.clone() };
    let nets = [
        (generator(&cfg, &schema).unwrap(), 8),
        (critic(&cfg, &schema).unwrap(), 4),
        (critic(&ctgan, &schema).unwrap(), 4),
        (classifier(&cfg, &schema).unwrap(), 6),
    ];
    for (i, (net, rows)) in nets.iter().enumerate() {
        let r = check_net(net, *rows, i as u64 + 1);
        worst = worst.max(r.worst);
        checked += 1;
        if !r.ok(20) {
            failed.push(format!("{}#{i}", net.name()));
        }
    }
    let elapsed = started.elapsed();
    let pass = failed.is_empty() && elapsed < Duration::from_secs(60);
    outcome(
        pass,
        format!("{checked} ops/nets, worst rel err {worst:.1e}, {elapsed:.1?}, failing {failed:?}"),
    )
}

fn linear_critic(w: &[f64]) -> (Net, ParamSet) {
    let net = Net::new("critic", w.len(), &[LayerKind::Linear(1)]).unwrap();
    let mut ps = ParamSet::new();
    ps.insert("critic.0.weight", Tensor2::from_vec(w.len(), 1, w.to_vec()).unwrap());
    ps.insert("critic.0.bias", Tensor2::zeros(1, 1));
    (net, ps)
}

fn penalty_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let real = Tensor2::random_uniform(8, 3, 1.0, &mut rng);
    let fake = Tensor2::random_uniform(8, 3, 1.0, &mut rng);
    let mut values = Vec::new();
    for w in [[2.0, 2.0, 1.0], [0.6, 0.0, 0.8]] {
        let (net, ps) = linear_critic(&w);
        let mut tape = Tape::new(Mode::Training);
        let gp = gradient_penalty(&net, &ps, &real, &fake, 10.0, &mut tape, &mut rng).unwrap();
        values.push(tape.value(gp).item());
    }
    let pass = (values[0] - 40.0).abs() < 1e-6 && values[1].abs() < 1e-9;
    outcome(pass, format!("|w|=3 -> {:.9}, |w|=1 -> {:.1e}", values[0], values[1]))
}

fn shapes() -> Outcome {
    let schema = wide_schema();
    let nets = Networks::build(&GanConfig::default(), &schema).unwrap();
    let g = nets.generator.width_profile();
    let c = nets.critic.width_profile();
    let k = nets.classifier.as_ref().map(Net::out_dim);
    let pass = schema.encoded_width() == 69
        && g == [130, 386, 642, 69]
        && c == [710, 966, 1222, 1]
        && k == Some(3);
    outcome(pass, format!("generator {g:?}, critic {c:?}, classifier out {k:?}"))
}

fn codec_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 1000;
    let centers = [-20.0, 5.0, 300.0];
    let a: Vec<f64> = (0..n).map(|_| centers[rng.random_range(0..3)] + rng.random_range(-2.0..2.0)).collect();
    let b: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1e-2)).collect();
    let c: Vec<String> = (0..n).map(|_| ["x", "y", "z"][rng.random_range(0..3)].to_string()).collect();
    let t: Vec<String> = (0..n).map(|i| if i % 20 == 0 { "1" } else { "0" }.to_string()).collect();
    let table = Table::new(
        vec!["a".into(), "b".into(), "c".into(), "t".into()],
        vec![Column::Continuous(a), Column::Continuous(b), Column::Discrete(c), Column::Discrete(t)],
    )
    .unwrap();
    let (schema, _) = fit_schema(&table, "t", &GmmConfig::default()).unwrap();
    let enc = encode(&table, &schema, &mut rng).unwrap();
    let back = decode(&enc.data, &schema).unwrap();
    let mut worst = 0.0f64;
    let mut discrete_ok = true;
    for (x, y) in table.columns().iter().zip(back.columns()) {
        match (x, y) {
            (Column::Continuous(x), Column::Continuous(y)) => {
                for (u, v) in x.iter().zip(y) {
                    worst = worst.max((u - v).abs() / u.abs().max(f64::MIN_POSITIVE));
                }
            }
            (Column::Discrete(x), Column::Discrete(y)) => discrete_ok &= x == y,
            _ => discrete_ok = false,
        }
    }
    outcome(discrete_ok && worst < 1e-9, format!("{n} rows, discrete exact {discrete_ok}, worst continuous rel err {worst:.1e}"))
}

fn sampler_distribution() -> Outcome {
    let schema = TableSchema::new(
        vec![ColumnMeta::Discrete {
            name: "t".into(),
            categories: vec!["a".into(), "b".into()],
            counts: vec![99_000, 1_000],
        }],
        "t",
    )
    .unwrap();
    let w = [99_001f64.ln(), 1_001f64.ln()];
    let expected = [w[0] / (w[0] + w[1]), w[1] / (w[0] + w[1])];
    let sampler = ConditionSampler::new(&schema).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 100_000;
    let mut hist = [0usize; 2];
    for _ in 0..n {
        hist[sampler.sample(&mut rng).category] += 1;
    }
    let rel: Vec<f64> = (0..2).map(|k| (hist[k] as f64 / n as f64 - expected[k]).abs() / expected[k]).collect();
    outcome(
        rel.iter().all(|&r| r < 0.02),
        format!("rates {:?} vs {expected:.4?}, rel err {rel:.4?}", hist.map(|h| h as f64 / n as f64)),
    )
}

fn dataset_counts() -> Outcome {
    let n = 218 + 110_000;
    let table = Table::new(
        vec!["failure".into()],
        vec![Column::Discrete((0..n).map(|i| if i < 218 { "1" } else { "0" }.to_string()).collect())],
    )
    .unwrap();
    let mut lines = Vec::new();
    let mut pass = true;
    for (ratio, want) in [
        ("1:100", SplitCounts { train_failure: 174, train_normal: 17_400, test_failure: 44, test_normal: 4_400 }),
        ("1:500", SplitCounts { train_failure: 174, train_normal: 87_000, test_failure: 44, test_normal: 22_000 }),
    ] {
        let spec = SplitSpec { ratio: parse_ratio(ratio).unwrap(), ..SplitSpec::default() };
        let got = build_dataset(&table, "failure", "1", &spec, &mut ChaCha8Rng::seed_from_u64(6)).unwrap().counts;
        pass &= got == want;
        lines.push(format!(
            "{ratio}: train {}/{} test {}/{}",
            got.train_failure, got.train_normal, got.test_failure, got.test_normal
        ));
    }
    outcome(pass, lines.join(", "))
}

fn g_mean_oracle() -> Outcome {
    let a = g_mean(&ConfusionMatrix::new(44, 0, 0, 4400)).unwrap();
    let b = g_mean(&ConfusionMatrix::new(0, 44, 0, 4400)).unwrap();
    let c = g_mean(&ConfusionMatrix::new(40, 4, 44, 4356)).unwrap();
    outcome(a == 1.0 && b == 0.0 && (c - 0.948683).abs() < 1e-6, format!("{a}, {b}, {c:.6}"))
}

fn benchmark() -> Dataset {
    let data = make_synthetic_benchmark(&SyntheticSpec::default(), &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
    Dataset {
        table: data.table,
        target: SYNTHETIC_TARGET.into(),
        positive: SYNTHETIC_FAILURE.into(),
    }
}

fn artifacts_dir() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn end_to_end() -> (Outcome, Outcome) {
    let started = Instant::now();
    let cfg = ExperimentConfig {
        strategies: vec![Strategy::None, Strategy::Rctgan],
        classifiers: vec![ClassifierKind::Dt],
        gan: end_to_end_gan(),
        projections: false,
        ..ExperimentConfig::default()
    };
    let report = run_experiment(&benchmark(), &cfg).unwrap();
    let elapsed = started.elapsed();
    let none = report.g_means(Strategy::None, ClassifierKind::Dt);
    let gan = report.g_means(Strategy::Rctgan, ClassifierKind::Dt);
    let (mn, mg) = (
        report.median(Strategy::None, ClassifierKind::Dt),
        report.median(Strategy::Rctgan, ClassifierKind::Dt),
    );
    let gain = match (mn, mg) {
        (Some(a), Some(b)) => b - a,
        _ => f64::NEG_INFINITY,
    };
    let pass8 = gain >= 0.10 && elapsed < Duration::from_secs(15 * 60);
    let c8 = outcome(
        pass8,
        format!(
            "DT median none {:.4} rctgan {:.4} (gain {gain:+.4}, need +0.10); per seed none {none:.3?} rctgan {gan:.3?}; {elapsed:.0?}",
            mn.unwrap_or(f64::NAN),
            mg.unwrap_or(f64::NAN),
        ),
    );

    let dir = artifacts_dir();
    let mut tails = Vec::new();
    let mut unstable = Vec::new();
    for run in &report.gan_runs {
        let tail = tail_mean_abs_loss_d(&run.metrics, 0.2);
        let ok = run.error.is_none() && tail.is_some_and(|t| t < 1.0);
        tails.push(tail.unwrap_or(f64::NAN));
        if !ok {
            let path = dir.join(format!("losses_seed{}.csv", run.seed));
            std::fs::write(&path, metrics_csv(&run.metrics)).unwrap();
            unstable.push(path.display().to_string());
        }
    }
    let stable = report.gan_runs.len() - unstable.len();
    let c9 = outcome(
        stable >= 4,
        format!("tail mean |loss_d| per seed {tails:.3?}; {stable}/5 below 1.0; curves of the rest: {unstable:?}"),
    );
    (c8, c9)
}

fn comparison_cfg(jobs: usize) -> ExperimentConfig {
    ExperimentConfig {
        strategies: Strategy::ALL.to_vec(),
        classifiers: vec![ClassifierKind::Dt],
        gan: tiny_gan(),
        jobs,
        projections: false,
        ..ExperimentConfig::default()
    }
}

fn side_by_side(report: &ExperimentReport) -> Outcome {
    let csv = report.to_csv().unwrap();
    let table = report.to_table();
    let mut missing = Vec::new();
    for s in ["ctgan", "rctgan"] {
        for seed in report.seeds.iter() {
            if !csv.lines().any(|l| l.starts_with(&format!("{s},DT,{seed},"))) {
                missing.push(format!("{s} seed {seed}"));
            }
        }
        if !csv.lines().any(|l| l.starts_with(&format!("{s},DT,median,"))) {
            missing.push(format!("{s} median"));
        }
        if !table.lines().any(|l| l.split_whitespace().next() == Some(s)) {
            missing.push(format!("{s} table row"));
        }
    }
    let row = |s| table.lines().find(|l| l.split_whitespace().next() == Some(s)).unwrap_or("").trim().to_string();
    outcome(missing.is_empty(), format!("table rows [{}] [{}]; missing {missing:?}", row("ctgan"), row("rctgan")))
}

fn determinism(first: &ExperimentReport) -> Outcome {
    let again = run_experiment(&benchmark(), &comparison_cfg(3)).unwrap();
    let (a, b) = (first.to_csv().unwrap(), again.to_csv().unwrap());
    outcome(a == b, format!("{} report bytes, identical across 1 and 3 jobs: {}", a.len(), a == b))
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "gradient correctness", gradients()),
        (2, "gradient-penalty oracle", penalty_oracle()),
        (3, "network shapes", shapes()),
        (4, "codec round trip", codec_round_trip()),
        (5, "training-by-sampling distribution", sampler_distribution()),
        (6, "dataset counts", dataset_counts()),
        (7, "g-mean oracle", g_mean_oracle()),
    ];
    let (c8, c9) = end_to_end();
    results.push((8, "end-to-end rctgan vs none", c8));
    results.push((9, "training stability", c9));
    let comparison = run_experiment(&benchmark(), &comparison_cfg(1)).unwrap();
    results.push((10, "rctgan vs ctgan report", side_by_side(&comparison)));
    results.push((11, "determinism", determinism(&comparison)));

    let mut failed = 0;
    for (n, name, o) in &results {
        println!("criterion {n:>2} {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {}/{} passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
