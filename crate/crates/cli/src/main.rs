use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};

use dtx_core::analysis;
use dtx_core::datagen::{self, GenPlan, Manifest, NORM_FILE};
use dtx_core::experiments::{self, ExperimentKind, ExperimentSpec};
use dtx_core::features::NormStats;
use dtx_core::neural::{self, ModelParams, TrainConfig};
use dtx_core::session::{Mode, SessionConfig};
use dtx_core::traders::StrategyKind;
use dtx_core::{pool, selfcheck};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(
    name = "dtx",
    version,
    about = "Double auction simulator with an LSTM trader"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run legacy-trader sessions and write a snapshot corpus.
    Datagen(DatagenArgs),
    /// Train the DTX network on a corpus.
    Train(TrainArgs),
    /// Run paired trials of two strategies.
    Experiment(ExperimentArgs),
    /// Summarize a trials file.
    Report(ReportArgs),
    /// Run quick invariant checks.
    Selftest,
}

#[derive(Debug, Args)]
struct SessionArgs {
    /// Session settings file (`key = value` lines).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Deterministic single-threaded scheduling.
    #[arg(long)]
    lockstep: bool,
    /// Session length in seconds.
    #[arg(long)]
    duration: Option<f64>,
}

impl SessionArgs {
    fn template(&self) -> Result<SessionConfig> {
        let mut cfg = match &self.config {
            Some(path) => SessionConfig::load(path)?,
            None => SessionConfig {
                mode: Mode::Threaded,
                ..SessionConfig::default()
            },
        };
        if self.lockstep {
            cfg.mode = Mode::Lockstep;
        }
        if let Some(d) = self.duration {
            cfg.duration = d;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct DatagenArgs {
    /// `builtin` or a file of proportion tuples, one per line.
    #[arg(long, default_value = "builtin")]
    schedules: String,
    /// Sessions per schedule.
    #[arg(long, default_value_t = 2)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Use this many schedules, spread evenly over the enumeration.
    #[arg(long, value_name = "N")]
    schedule_count: Option<usize>,
    #[command(flatten)]
    session: SessionArgs,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Manifest written by `datagen`.
    #[arg(long, value_name = "MANIFEST")]
    corpus: PathBuf,
    #[arg(long, default_value = "model.dtx")]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 16384)]
    batch: usize,
    #[arg(long, default_value_t = 1.5e-5)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Snapshots per input window.
    #[arg(long, default_value_t = 1)]
    seq_len: usize,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// Named experiment, e.g. `bgt-zic` or `otm-aa`.
    #[arg(long, conflicts_with_all = ["kind", "a", "b"])]
    preset: Option<String>,
    #[arg(long, value_parser = ["bgt", "otm"])]
    kind: Option<String>,
    /// Strategy A.
    #[arg(long)]
    a: Option<String>,
    /// Strategy B.
    #[arg(long)]
    b: Option<String>,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Model file; required when either strategy is DTX.
    #[arg(long, value_name = "PATH")]
    model: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[command(flatten)]
    session: SessionArgs,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// `trials.csv` from `experiment`.
    #[arg(long, value_name = "FILE")]
    trials: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

/// A problem with the invocation rather than with the run.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn header(command: &str, seed: Option<u64>, mode: Option<Mode>, settings: &[(&str, String)]) {
    println!("# dtx {VERSION} {command}");
    println!(
        "# seed = {}",
        seed.map_or("-".to_string(), |s| s.to_string())
    );
    println!(
        "# mode = {}",
        mode.map_or("-".to_string(), |m| m.to_string())
    );
    for (k, v) in settings {
        println!("# {k} = {v}");
    }
}

fn session_settings(cfg: &SessionConfig) -> Vec<(&'static str, String)> {
    vec![
        ("duration", cfg.duration.to_string()),
        ("range_low", cfg.range_low.to_string()),
        ("range_high", cfg.range_high.to_string()),
        ("issue_interval", cfg.issue_interval.to_string()),
        ("stepmode", cfg.stepmode.to_string()),
        ("tick", cfg.tick.to_string()),
        ("realtime_tick_us", cfg.realtime_tick_us.to_string()),
    ]
}

fn datagen(args: DatagenArgs, workers: usize) -> Result<()> {
    if args.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    let template = args.session.template()?;
    let bases = if args.schedules == "builtin" {
        datagen::BASE_TUPLES.to_vec()
    } else {
        let path = Path::new(&args.schedules);
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        datagen::parse_tuples(&text, &path.display().to_string())?
    };
    let mut schedules = datagen::enumerate_schedules(&bases)?;
    if let Some(n) = args.schedule_count {
        if n == 0 || n > schedules.len() {
            return Err(usage(format!(
                "--schedule-count must be between 1 and {}",
                schedules.len()
            )));
        }
        schedules = datagen::select_evenly(&schedules, n);
    }
    let plan = GenPlan {
        schedules,
        trials_per_schedule: args.trials,
        base_seed: args.seed,
        template,
    };
    let mut settings = vec![
        ("schedules", args.schedules.clone()),
        ("schedule_count", plan.schedules.len().to_string()),
        ("trials", args.trials.to_string()),
        ("sessions", plan.sessions().to_string()),
        ("workers", workers.to_string()),
        ("out", args.out.display().to_string()),
    ];
    settings.extend(session_settings(&plan.template));
    header(
        "datagen",
        Some(args.seed),
        Some(plan.template.mode),
        &settings,
    );

    let total = plan.sessions();
    let manifest = datagen::generate(&plan, &args.out, |index, row| {
        eprintln!(
            "session {}/{total} {} rows={}",
            index + 1,
            row.schedule.label(),
            row.rows
        );
    })?;
    println!(
        "wrote {} sessions, {} rows, manifest {}",
        manifest.rows.len(),
        manifest.total_rows(),
        args.out.join(datagen::MANIFEST_FILE).display()
    );
    Ok(())
}

fn load_or_fit_norm(manifest: &Path) -> Result<NormStats> {
    let path = manifest.parent().unwrap_or(Path::new("")).join(NORM_FILE);
    if path.exists() {
        Ok(NormStats::load(&path)?)
    } else {
        Ok(datagen::fit_norm_stats(manifest)?)
    }
}

fn train(args: TrainArgs) -> Result<()> {
    let cfg = TrainConfig {
        batch_size: args.batch,
        epochs: args.epochs,
        learning_rate: args.lr,
        seed: args.seed,
        seq_len: args.seq_len,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    header(
        "train",
        Some(args.seed),
        None,
        &[
            ("corpus", args.corpus.display().to_string()),
            ("out", args.out.display().to_string()),
            ("epochs", cfg.epochs.to_string()),
            ("batch", cfg.batch_size.to_string()),
            ("lr", cfg.learning_rate.to_string()),
            ("seq_len", cfg.seq_len.to_string()),
        ],
    );

    let manifest = Manifest::load(&args.corpus)?;
    let norm = load_or_fit_norm(&args.corpus)?;
    let sessions = datagen::load_corpus(&args.corpus)?;
    let samples: Vec<_> = sessions
        .iter()
        .flat_map(|records| neural::samples_from_records(records, &norm, cfg.seq_len))
        .collect();
    println!(
        "corpus: {} sessions, {} samples",
        manifest.rows.len(),
        samples.len()
    );

    let (model, report) = neural::train_with_progress(&samples, norm, &cfg, |epoch, loss| {
        println!("epoch {epoch} loss {loss:.9e}");
    })?;
    neural::save_model(&model, &args.out)?;
    let first = report.epoch_losses.first().copied().unwrap_or(f64::NAN);
    let last = report.epoch_losses.last().copied().unwrap_or(f64::NAN);
    println!(
        "wrote {} (loss {first:.6e} -> {last:.6e})",
        args.out.display()
    );
    Ok(())
}

fn parse_strategy(flag: &str, value: Option<&String>) -> Result<StrategyKind> {
    let value = value.ok_or_else(|| usage(format!("--{flag} is required without --preset")))?;
    value
        .parse()
        .map_err(|e: dtx_core::Error| usage(e.to_string()))
}

fn experiment(args: ExperimentArgs, workers: usize) -> Result<()> {
    let mut spec = match &args.preset {
        Some(name) => experiments::preset(name).ok_or_else(|| {
            let names: Vec<String> = experiments::presets().into_iter().map(|(n, _)| n).collect();
            usage(format!(
                "unknown preset `{name}`; expected one of {}",
                names.join(", ")
            ))
        })?,
        None => {
            let kind: ExperimentKind = args
                .kind
                .as_deref()
                .ok_or_else(|| usage("--kind is required without --preset"))?
                .parse()?;
            let a = parse_strategy("a", args.a.as_ref())?;
            let b = parse_strategy("b", args.b.as_ref())?;
            if a == b {
                return Err(usage("--a and --b must name different strategies"));
            }
            ExperimentSpec::new(kind, a, b, args.trials, args.seed)
        }
    };
    if args.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    spec.trials = args.trials;
    spec.base_seed = args.seed;
    spec.template = args.session.template()?;
    if spec.needs_model() && args.model.is_none() {
        return Err(usage("--model is required when an experiment includes DTX"));
    }

    let mut settings = vec![
        ("kind", spec.kind.to_string()),
        ("a", spec.strategy_a.to_string()),
        ("b", spec.strategy_b.to_string()),
        ("trials", spec.trials.to_string()),
        (
            "model",
            args.model
                .as_ref()
                .map_or("-".to_string(), |p| p.display().to_string()),
        ),
        ("workers", workers.to_string()),
        ("out", args.out.display().to_string()),
    ];
    settings.extend(session_settings(&spec.template));
    header(
        "experiment",
        Some(spec.base_seed),
        Some(spec.template.mode),
        &settings,
    );

    let model: Option<Arc<ModelParams>> = match &args.model {
        Some(p) => Some(Arc::new(neural::load_model(p)?)),
        None => None,
    };
    let total = spec.trials;
    let rows = experiments::run_experiment(&spec, model.as_ref(), |row| {
        eprintln!(
            "trial {}/{total} ppt_a={:.3} ppt_b={:.3}",
            row.trial + 1,
            row.ppt_a,
            row.ppt_b
        );
    })?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let path = args.out.join("trials.csv");
    fs::write(&path, analysis::write_trials(&rows))
        .with_context(|| format!("writing {}", path.display()))?;
    let mean =
        |f: fn(&analysis::TrialRow) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
    println!(
        "wrote {} ({} trials, mean ppt {} {:.3}, {} {:.3})",
        path.display(),
        rows.len(),
        spec.strategy_a,
        mean(|r| r.ppt_a),
        spec.strategy_b,
        mean(|r| r.ppt_b)
    );
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    header(
        "report",
        None,
        None,
        &[
            ("trials", args.trials.display().to_string()),
            ("out", args.out.display().to_string()),
        ],
    );
    let report = analysis::report(&args.trials, &args.out)?;
    print!("{}", report.summary_text());
    Ok(())
}

fn selftest() -> Result<()> {
    header("selftest", None, Some(Mode::Lockstep), &[]);
    let outcomes = selfcheck::run_all();
    for o in &outcomes {
        println!(
            "{} {}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.detail
        );
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if failed > 0 {
        bail!("{failed} self-test check(s) failed");
    }
    Ok(())
}

/// The error and its causes, skipping causes already spelled out above them.
fn describe(e: &anyhow::Error) -> String {
    let mut out = e.to_string();
    for cause in e.chain().skip(1) {
        let text = cause.to_string();
        if !out.contains(&text) {
            out.push_str(": ");
            out.push_str(&text);
        }
    }
    out
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Datagen(_) => "datagen",
            Command::Train(_) => "train",
            Command::Experiment(_) => "experiment",
            Command::Report(_) => "report",
            Command::Selftest => "selftest",
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let workers = pool::init_from_env()?;
    match cli.command {
        Command::Datagen(a) => datagen(a, workers),
        Command::Train(a) => train(a),
        Command::Experiment(a) => experiment(a, workers),
        Command::Report(a) => report(a),
        Command::Selftest => selftest(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    ExitCode::SUCCESS
                }
                _ => {
                    let _ = e.print();
                    ExitCode::from(1)
                }
            };
        }
    };
    let name = cli.command.name();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<Usage>() => {
            let mut cmd = Cli::command();
            cmd.build();
            let usage = cmd
                .find_subcommand_mut(name)
                .map(|c| c.render_usage())
                .unwrap_or_default();
            eprintln!("error: {e}\n\n{usage}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
    }
}
