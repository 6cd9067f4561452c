use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mixsep::datagen::MomStrategy;
use mixsep::pipeline::{ExperimentConfig, ModelId, SelectionMode, Workspace};
use mixsep::separator::gradcheck_suite;
use mixsep::Error;

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 3;
const EXIT_PREREQUISITE: u8 = 4;
const EXIT_GRADCHECK: u8 = 5;

const GRADCHECK_MAX_REL_ERR: f64 = 1e-3;

/// Teacher-student mixture invariant training for source separation.
#[derive(Parser, Debug)]
#[command(name = "mixsep", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// Experiment file (TOML). The built-in toy experiment is used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config file (default: ./work).
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    /// Worker threads; 1 gives the reference schedule.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum StrategyArg {
    TwoSrc,
    OneOrTwoSrc,
}

impl From<StrategyArg> for MomStrategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::TwoSrc => MomStrategy::TwoSrc,
            StrategyArg::OneOrTwoSrc => MomStrategy::OneOrTwoSrc,
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ModeArg {
    Direct,
    Energy,
    Oracle,
}

impl From<ModeArg> for SelectionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Direct => SelectionMode::Direct,
            ModeArg::Energy => SelectionMode::Energy,
            ModeArg::Oracle => SelectionMode::Oracle,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the synthetic corpus: manifest, WAV files, MoM preview.
    Simulate,
    /// Train a MixIT teacher on mixtures of mixtures.
    TrainTeacher {
        /// Mixture-of-mixtures strategy (default: the config's strategy).
        #[arg(long, value_enum)]
        strategy: Option<StrategyArg>,
    },
    /// Generate energy-selected pseudo-targets with the teacher.
    Pseudo,
    /// Train the PIT student on the pseudo-targets.
    TrainStudent,
    /// Fine-tune the student on the supervised subset.
    Finetune,
    /// Distill the fine-tuned model into the second architecture.
    Distill,
    /// Train the supervised-subset-only baseline.
    TrainSupervised,
    /// Evaluate a trained model on the test split; prints `si_snri_db=<value>`.
    Eval {
        /// teacher_2src, teacher_1or2src, student, finetune, distill or supervised.
        #[arg(long)]
        model: String,
        #[arg(long, value_enum, default_value = "direct")]
        mode: ModeArg,
    },
    /// Compare analytic and finite-difference gradients on three random networks.
    Gradcheck {
        /// Parameter coordinates sampled per network.
        #[arg(long, default_value_t = 40)]
        coordinates: usize,
    },
    /// Run every stage and print the results table.
    RunAll,
}

#[derive(Debug)]
enum Failure {
    Core(Error),
    Gradcheck(f64),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Core(Error::Config(_)) => EXIT_CONFIG,
            Failure::Core(Error::MissingPrerequisite(_)) => EXIT_PREREQUISITE,
            Failure::Core(_) => EXIT_RUNTIME,
            Failure::Gradcheck(_) => EXIT_GRADCHECK,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Failure::Core(Error::Config(_)) => "config",
            Failure::Core(Error::MissingPrerequisite(_)) => "missing_prerequisite",
            Failure::Core(_) => "runtime",
            Failure::Gradcheck(_) => "gradcheck",
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Core(e) => e.to_string(),
            Failure::Gradcheck(err) => {
                format!("max relative error {err:e} exceeds {GRADCHECK_MAX_REL_ERR:e}")
            }
        }
    }
}

fn load_config(global: &GlobalArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &global.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn workspace(global: &GlobalArgs, cfg: &ExperimentConfig) -> Workspace {
    let root = global
        .workdir
        .clone()
        .or_else(|| cfg.workdir.clone())
        .unwrap_or_else(|| PathBuf::from("work"));
    Workspace::new(root)
}

fn report_training(label: &str, outcome: &mixsep::pipeline::TrainOutcome) {
    if let Some((first, last)) = outcome.first_and_last_epoch_loss() {
        println!("{label}_first_epoch_loss_db={first:.6}");
        println!("{label}_last_epoch_loss_db={last:.6}");
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Command::Gradcheck { coordinates } = cli.command {
        let seed = cli.global.seed.unwrap_or(0);
        let reports = gradcheck_suite(seed, coordinates)?;
        let mut worst: f64 = 0.0;
        for r in &reports {
            println!(
                "config=\"{}\" coordinates={} max_rel_err={:e} frac_within_1e-4={:.4}",
                r.label, r.coordinates, r.max_rel_err, r.frac_within_1e4
            );
            worst = worst.max(r.max_rel_err);
        }
        let frac = reports.iter().map(|r| r.frac_within_1e4).fold(1.0, f64::min);
        println!("max_rel_err={worst:e}");
        println!("min_frac_within_1e-4={frac:.4}");
        if worst > GRADCHECK_MAX_REL_ERR {
            return Err(Failure::Gradcheck(worst));
        }
        return Ok(());
    }

    let cfg = load_config(&cli.global)?;
    let ws = workspace(&cli.global, &cfg);
    match cli.command {
        Command::Simulate => {
            let manifest = ws.simulate(&cfg)?;
            println!("manifest={}", ws.data_dir().join("manifest.jsonl").display());
            println!("records={}", manifest.records.len());
        }
        Command::TrainTeacher { strategy } => {
            let strategy = strategy.map(Into::into).unwrap_or(cfg.data.strategy);
            let outcome = ws.train_teacher(&cfg, strategy)?;
            report_training(&ModelId::Teacher(strategy).name(), &outcome);
        }
        Command::Pseudo => {
            let set = ws.pseudo(&cfg)?;
            println!("kept={}", set.examples.len());
            println!("dropped={}", set.dropped.len());
        }
        Command::TrainStudent => report_training("student", &ws.train_student(&cfg)?),
        Command::Finetune => report_training("finetune", &ws.finetune(&cfg)?),
        Command::Distill => report_training("distill", &ws.distill(&cfg)?),
        Command::TrainSupervised => report_training("supervised", &ws.train_supervised(&cfg)?),
        Command::Eval { model, mode } => {
            let model: ModelId = model.parse()?;
            let report = ws.evaluate(&cfg, model, mode.into())?;
            println!("si_snri_db={:.6}", report.mean_si_snri_db);
        }
        Command::RunAll => {
            let summary = ws.run_all(&cfg)?;
            eprint!("{}", summary.to_table());
            for row in &summary.rows {
                println!("{}_{}_si_snri_db={:.6}", row.model, row.mode, row.mean_si_snri_db);
            }
        }
        Command::Gradcheck { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    if let Some(threads) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("mixsep-error code={EXIT_RUNTIME} kind=runtime message=\"{e}\"");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let msg = f.message().replace('"', "'");
            eprintln!("mixsep-error code={} kind={} message=\"{}\"", f.code(), f.kind(), msg);
            ExitCode::from(f.code())
        }
    }
}
