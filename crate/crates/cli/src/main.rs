mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rctgan::atomic::write_atomic;
use rctgan::bench::{
    make_synthetic_benchmark, metrics_csv, projections_csv, run_experiment, Dataset, ExperimentReport,
    SYNTHETIC_FAILURE, SYNTHETIC_TARGET,
};
use rctgan::codec::{fit_schema, load_csv, GmmConfig};
use rctgan::gan::{checkpoint, fit, GanMode, Synthesizer};
use rctgan::Error;

use config::{keys_help, RunConfig};

const USAGE: u8 = 1;
const DATA: u8 = 2;
const DIVERGENCE: u8 = 3;
const IO: u8 = 4;

/// Synthesizes minority-class rows for imbalanced tables and evaluates
/// them with downstream classifiers.
#[derive(Parser, Debug)]
#[command(name = "rctgan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a synthesizer and write model.rctg, schema.txt and losses.csv.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Draw rows from a trained synthesizer.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Target value every row should carry.
        #[arg(long)]
        class: Option<String>,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run one strategy with one classifier over the configured seeds.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        classifier: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the full strategy x classifier x seed matrix.
    Experiment {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Print checkpoint metadata.
    Inspect {
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Input CSV.
    #[arg(long, conflicts_with = "synthetic_benchmark", required_unless_present = "synthetic_benchmark")]
    data: Option<PathBuf>,
    /// Use the built-in two-class benchmark instead of --data.
    #[arg(long)]
    synthetic_benchmark: bool,
    #[arg(long)]
    target: Option<String>,
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Config file of key=value lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Normal rows per failure row, like 1:100, or natural.
    #[arg(long)]
    ratio: Option<String>,
    /// Progress on stderr.
    #[arg(long, short)]
    verbose: bool,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) => USAGE,
            Error::Divergence { .. } | Error::NonFinite(_) => DIVERGENCE,
            Error::Io(_) => IO,
            Error::Csv(c) if matches!(c.kind(), csv::ErrorKind::Io(_)) => IO,
            _ => DATA,
        };
        Failure { code, message: e.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure { code: IO, message: format!("{}: {e}", path.display()) }
}

fn build_config(common: &CommonArgs, target: Option<&str>) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
        cfg.apply_text(&text)?;
    }
    for kv in &common.set {
        cfg.apply_assignment(kv)?;
    }
    let flags = [
        ("seed", common.seed.map(|v| v.to_string())),
        ("seeds", common.seeds.map(|v| v.to_string())),
        ("jobs", common.jobs.map(|v| v.to_string())),
        ("mode", common.mode.clone()),
        ("epochs", common.epochs.map(|v| v.to_string())),
        ("ratio", common.ratio.clone()),
        ("target", target.map(str::to_string)),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    cfg.experiment.verbose = common.verbose;
    if cfg.experiment.jobs == 0 {
        return Err(Error::Config("jobs must be at least 1".into()).into());
    }
    Ok(cfg)
}

fn load_dataset(data: &DataArgs, cfg: &RunConfig) -> CliResult<Dataset> {
    if data.synthetic_benchmark {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.experiment.seed);
        let bench = make_synthetic_benchmark(&cfg.synthetic_spec(), &mut rng)?;
        return Ok(Dataset {
            table: bench.table,
            target: SYNTHETIC_TARGET.into(),
            positive: SYNTHETIC_FAILURE.into(),
        });
    }
    let path = data.data.as_ref().expect("clap requires --data");
    let loaded = load_csv(path, &cfg.load_options()).map_err(|e| match e {
        Error::Io(io) => io_failure(path, io),
        other => other.into(),
    })?;
    if loaded.skipped_rows > 0 {
        eprintln!("skipped {} rows with unparseable numbers", loaded.skipped_rows);
    }
    let target = loaded.target.unwrap_or_else(|| cfg.target.clone());
    Ok(Dataset { table: loaded.table, target, positive: cfg.positive.clone() })
}

fn write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    write_atomic(path, bytes).map_err(|e| io_failure(path, e))
}

fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| io_failure(path, e))
}

fn cmd_fit(data: &DataArgs, out: &Path, common: &CommonArgs) -> CliResult<()> {
    let cfg = build_config(common, data.target.as_deref())?;
    cfg.gan().validate()?;
    let ds = load_dataset(data, &cfg)?;
    let (schema, report) = fit_schema(&ds.table, &ds.target, &GmmConfig::default())?;
    if !report.fallback_columns.is_empty() {
        eprintln!("single-mode fallback for: {}", report.fallback_columns.join(", "));
    }
    create_dir(out)?;
    let mut metrics = Vec::new();
    let verbose = common.verbose;
    let model = fit(&ds.table, schema, cfg.gan().clone(), cfg.experiment.seed, |m| {
        if verbose {
            eprintln!("step {} loss_d {:.4} loss_c {:.4} loss_g {:.4} gp {:.4}", m.step, m.loss_d, m.loss_c, m.loss_g, m.gp);
        }
        metrics.push(m.clone());
    });
    let model = match model {
        Ok(m) => m,
        Err(e) => {
            write(&out.join("losses.csv"), metrics_csv(&metrics).as_bytes())?;
            return Err(e.into());
        }
    };
    write(&out.join("model.rctg"), &checkpoint::to_bytes(&model))?;
    write(&out.join("schema.txt"), model.schema().to_text().as_bytes())?;
    write(&out.join("losses.csv"), metrics_csv(&metrics).as_bytes())?;
    match metrics.last() {
        Some(m) => println!(
            "trained {} steps: loss_d {:.4} loss_c {:.4} loss_g {:.4} gp {:.4}",
            metrics.len(),
            m.loss_d,
            m.loss_c,
            m.loss_g,
            m.gp
        ),
        None => println!("trained 0 steps"),
    }
    println!("wrote {}", out.join("model.rctg").display());
    Ok(())
}

fn load_model(path: &Path) -> CliResult<Synthesizer> {
    let bytes = std::fs::read(path).map_err(|e| io_failure(path, e))?;
    Ok(checkpoint::from_bytes(&bytes)?)
}

fn cmd_sample(
    model: &Path,
    count: usize,
    class: Option<&str>,
    out: Option<&Path>,
    common: &CommonArgs,
) -> CliResult<()> {
    let cfg = build_config(common, None)?;
    let model = load_model(model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.experiment.seed);
    let rows = model.sample(count, class, &mut rng)?;
    let text = rows.to_csv_string()?;
    match out {
        Some(path) => write(path, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}

fn write_report(report: &ExperimentReport, out: &Path) -> CliResult<()> {
    create_dir(out)?;
    write(&out.join("report.csv"), report.to_csv()?.as_bytes())?;
    write(&out.join("report.txt"), report.to_table().as_bytes())?;
    if !report.gan_runs.is_empty() {
        let dir = out.join("losses");
        create_dir(&dir)?;
        for run in &report.gan_runs {
            let name = format!("{}_seed{}.csv", run.strategy, run.seed);
            write(&dir.join(name), metrics_csv(&run.metrics).as_bytes())?;
        }
    }
    if !report.projections.is_empty() {
        let dir = out.join("projections");
        create_dir(&dir)?;
        for p in &report.projections {
            let name = format!("{}_seed{}.csv", p.strategy, p.seed);
            write(&dir.join(name), projections_csv(&p.points).as_bytes())?;
        }
    }
    Ok(())
}

fn finish(report: &ExperimentReport) -> CliResult<()> {
    for run in report.gan_runs.iter().filter(|r| r.error.is_some()) {
        eprintln!("{} seed {}: {}", run.strategy, run.seed, run.error.as_deref().unwrap_or_default());
    }
    if report.all_failed() {
        let first = report.cells.iter().find_map(|c| c.outcome.as_ref().err()).cloned().unwrap_or_default();
        let code = if report.gan_runs.iter().any(|r| r.error.as_deref().is_some_and(|e| e.contains("diverged"))) {
            DIVERGENCE
        } else {
            DATA
        };
        return Err(Failure { code, message: format!("every cell failed; first error: {first}") });
    }
    Ok(())
}

fn cmd_evaluate(
    data: &DataArgs,
    strategy: Option<&str>,
    classifier: Option<&str>,
    out: Option<&Path>,
    common: &CommonArgs,
) -> CliResult<()> {
    let mut cfg = build_config(common, data.target.as_deref())?;
    if let Some(s) = strategy {
        cfg.set("strategy", s)?;
    }
    if let Some(k) = classifier {
        cfg.set("classifier", k)?;
    }
    cfg.experiment.strategies = vec![cfg.strategy];
    cfg.experiment.classifiers = vec![cfg.classifier];
    cfg.experiment.projections = false;
    let ds = load_dataset(data, &cfg)?;
    let report = run_experiment(&ds, &cfg.experiment)?;
    for c in &report.cells {
        match &c.outcome {
            Ok((m, g)) => println!(
                "seed {}: g_mean {:.4} (tp {} fn {} fp {} tn {})",
                c.seed, g, m.tp, m.fn_, m.fp, m.tn
            ),
            Err(e) => println!("seed {}: failed: {e}", c.seed),
        }
    }
    if let Some(g) = report.median(cfg.strategy, cfg.classifier) {
        println!("{}/{} median g_mean {:.2}%", cfg.strategy, cfg.classifier, g * 100.0);
    }
    if let Some(out) = out {
        write_report(&report, out)?;
    }
    finish(&report)
}

fn cmd_experiment(data: &DataArgs, out: &Path, common: &CommonArgs) -> CliResult<()> {
    let cfg = build_config(common, data.target.as_deref())?;
    let ds = load_dataset(data, &cfg)?;
    let report = run_experiment(&ds, &cfg.experiment)?;
    write_report(&report, out)?;
    print!("{}", report.to_table());
    finish(&report)
}

fn cmd_inspect(model: &Path) -> CliResult<()> {
    let m = load_model(model)?;
    let cfg = m.config();
    let schema = m.schema();
    println!("seed: {}", m.seed());
    println!("mode: {}", cfg.mode);
    println!("target: {} {:?}", schema.target_name(), schema.target_categories());
    println!("encoded width: {}  cond width: {}", schema.encoded_width(), schema.cond_width());
    let p = m.params();
    let count = |ps: &rctgan::grad::ParamSet| ps.blocks().values().map(|t| t.rows() * t.cols()).sum::<usize>();
    println!("generator parameters: {}", count(&p.generator));
    println!("critic parameters: {} ({})", count(&p.critic), if cfg.residual_critic() { "residual" } else { "plain" });
    match (&p.classifier, cfg.mode) {
        (Some(c), GanMode::Rctgan) => println!("classifier parameters: {}", count(c)),
        _ => println!("classifier: none"),
    }
    println!("config:");
    for (k, v) in cfg.entries() {
        println!("  {k}={v}");
    }
    println!("columns:");
    for c in schema.columns() {
        println!("  {} ({}, encoded width {})", c.name(), c.kind().as_str(), c.encoded_width());
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Fit { data, out, common } => cmd_fit(data, out, common),
        Command::Sample { model, count, class, out, common } => {
            cmd_sample(model, *count, class.as_deref(), out.as_deref(), common)
        }
        Command::Evaluate { data, strategy, classifier, out, common } => {
            cmd_evaluate(data, strategy.as_deref(), classifier.as_deref(), out.as_deref(), common)
        }
        Command::Experiment { data, out, common } => cmd_experiment(data, out, common),
        Command::Inspect { model } => cmd_inspect(model),
    }
}

fn main() -> ExitCode {
    let keys = keys_help();
    let command = Cli::command()
        .after_help(keys.clone())
        .mut_subcommands(|s| s.after_help(keys.clone()));
    let cli = match command.try_get_matches().and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
