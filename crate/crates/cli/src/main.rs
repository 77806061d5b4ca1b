//! `irac`: command-line front end for the IRAC solvers and experiments.
//!
//! Exit codes: 0 success, 2 invalid input (validation, parse or domain
//! errors), 3 solver failure, 1 anything else (I/O).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use irac_core::harness::{
    case_study, compare_solvers, configure_threads_from_env, format_compare_table, parse_solvers,
    run_experiment, run_solver, ExperimentConfig, SolverContext, SolverKind,
};
use irac_core::ilo::{self, Dataset, IloModel, TrainConfig};
use irac_core::instance::generate_instance;
use irac_core::metrics::{rendering_error, ssim, Image};
use irac_core::units::parse_power;
use irac_core::{Instance, IracError, PmmParams, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "irac",
    version,
    about = "Joint edge collaboration and power allocation for edge-assisted Gaussian splatting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one instance and write it as JSON.
    Gen(GenArgs),
    /// Solve one instance with one solver and print the solution JSON.
    Solve(SolveArgs),
    /// Run several solvers on one instance and print a table.
    Compare(CompareArgs),
    /// Run a Monte-Carlo sweep described by a TOML config.
    Experiment(ExperimentArgs),
    /// Per-user decisions of each configured solver on one instance.
    CaseStudy(ExperimentArgs),
    /// Imitation-learned solver: data, training, inference, evaluation.
    #[command(subcommand)]
    Ilo(IloCommand),
    /// Image metrics.
    #[command(subcommand)]
    Metrics(MetricsCommand),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario TOML; omitted fields keep the paper-truck defaults.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.scenario {
            Some(p) => {
                ScenarioConfig::load(p).with_context(|| format!("reading {}", p.display()))?
            }
            None => ScenarioConfig::paper_truck(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value_t = 0)]
    run: u64,
    /// Power budget, e.g. `40mW` or `16dBm`.
    #[arg(long, value_parser = power_arg)]
    power: Option<f64>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolverArgs {
    /// PMM parameters as TOML.
    #[arg(long)]
    pmm: Option<PathBuf>,
    /// Trained model, needed by the `ilo` solver.
    #[arg(long)]
    model: Option<PathBuf>,
}

impl SolverArgs {
    fn context(&self) -> Result<SolverContext> {
        let params = match &self.pmm {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading {}", p.display()))?;
                let params: PmmParams = toml::from_str(&text)
                    .map_err(|e| IracError::Parse(format!("{}: {e}", p.display())))?;
                let issues = params.validate();
                if !issues.is_empty() {
                    return Err(IracError::Validation(issues).into());
                }
                params
            }
            None => PmmParams::default(),
        };
        let mut ctx = SolverContext::new(params);
        if let Some(m) = &self.model {
            ctx.ilo_model = Some(
                IloModel::load(m)
                    .with_context(|| format!("loading {}", m.display()))?
                    .into(),
            );
        }
        Ok(ctx)
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    solver: String,
    #[arg(long)]
    instance: PathBuf,
    #[command(flatten)]
    solver_args: SolverArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Comma-separated solver names.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "user_gs,max_rate,greedy,local_search,rounding,pmm"
    )]
    solvers: Vec<String>,
    #[command(flatten)]
    solver_args: SolverArgs,
    /// Omit the wall-time column so output is reproducible.
    #[arg(long)]
    no_time: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl ExperimentArgs {
    fn load(&self) -> Result<(ExperimentConfig, PathBuf)> {
        let cfg = ExperimentConfig::load(&self.config)?;
        let dir = self
            .output_dir
            .clone()
            .unwrap_or_else(|| cfg.output_dir.clone());
        Ok((cfg, dir))
    }
}

#[derive(Subcommand)]
enum IloCommand {
    /// Solve generated instances with PMM and store them as a dataset.
    GenData(GenDataArgs),
    /// Train a network on a dataset.
    Train(TrainArgs),
    /// Predict a decision for one instance.
    Infer(InferArgs),
    /// Accuracy, PSNR gap and speed of a model on a dataset.
    Eval(EvalArgs),
}

#[derive(Args)]
struct GenDataArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value_t = 4000)]
    samples: usize,
    /// Comma-separated power budgets cycled over samples; the scenario's
    /// budget when omitted.
    #[arg(long, value_delimiter = ',', value_parser = power_arg)]
    powers: Vec<f64>,
    #[arg(long)]
    pmm: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Train on the first N samples and report test metrics on the rest;
    /// all samples are used for training when omitted.
    #[arg(long)]
    split: Option<usize>,
    /// Training config TOML.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch loss and accuracy as CSV.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Skip the first N samples (e.g. the training part).
    #[arg(long, default_value_t = 0)]
    skip: usize,
    /// Re-run PMM on every instance to compare wall times.
    #[arg(long)]
    time_pmm: bool,
}

#[derive(Subcommand)]
enum MetricsCommand {
    /// Rendering error and SSIM between two binary PPM images.
    Score(ScoreArgs),
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    /// Weight of the structural (1 − SSIM) term.
    #[arg(long, default_value_t = 0.2)]
    lambda: f64,
}

fn power_arg(s: &str) -> Result<f64, String> {
    parse_power(s).map_err(|e| e.to_string())
}

fn emit_json(value: &impl serde::Serialize, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => {
            std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}")?;
        }
    }
    Ok(())
}

fn read_instance(path: &Path) -> Result<Instance> {
    Instance::read(path).with_context(|| format!("reading {}", path.display()))
}

fn solve_one(args: &SolveArgs) -> Result<()> {
    let kind: SolverKind = args.solver.parse()?;
    let inst = read_instance(&args.instance)?;
    let ctx = args.solver_args.context()?;
    let sol = run_solver(kind, &inst, &ctx)?;
    match &args.out {
        Some(p) => sol.write(p)?,
        None => emit_json(&sol, None)?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(args) => {
            let cfg = args.scenario.load()?;
            let mut inst = generate_instance(&cfg, args.run)?;
            if let Some(p) = args.power {
                inst = inst.with_power_budget(p);
                inst.ensure_valid()?;
            }
            match &args.out {
                Some(p) => inst.write(p)?,
                None => println!(
                    "{}",
                    irac_core::schema::to_json(irac_core::schema::INSTANCE_SCHEMA, &inst)?
                ),
            }
        }
        Command::Solve(args) => solve_one(&args)?,
        Command::Compare(args) => {
            let kinds = parse_solvers(&args.solvers)?;
            let inst = read_instance(&args.instance)?;
            let ctx = args.solver_args.context()?;
            let rows = compare_solvers(&inst, &kinds, &ctx)?;
            print!("{}", format_compare_table(&rows, !args.no_time));
        }
        Command::Experiment(args) => {
            let (cfg, dir) = args.load()?;
            log::info!(
                "running {} x {} runs x {} power levels",
                cfg.solvers.len(),
                cfg.num_runs,
                cfg.power_sweep.len()
            );
            let report = run_experiment(&cfg)?;
            for p in report.write(&dir, &cfg.formats)? {
                log::info!("wrote {}", p.display());
            }
            print!("{}", report.summary_csv()?);
        }
        Command::CaseStudy(args) => {
            let (cfg, dir) = args.load()?;
            let cs = case_study(&cfg)?;
            let path = cs.write(&dir)?;
            log::info!("wrote {}", path.display());
            print!("{}", cs.to_csv()?);
        }
        Command::Ilo(cmd) => run_ilo(cmd)?,
        Command::Metrics(MetricsCommand::Score(args)) => {
            let a = Image::read_ppm(&args.a)
                .with_context(|| format!("reading {}", args.a.display()))?;
            let b = Image::read_ppm(&args.b)
                .with_context(|| format!("reading {}", args.b.display()))?;
            let value = serde_json::json!({
                "rendering_error": rendering_error(&a, &b, args.lambda)?,
                "ssim": ssim(&a, &b)?,
                "lambda": args.lambda,
            });
            emit_json(&value, None)?;
        }
    }
    Ok(())
}

fn run_ilo(cmd: IloCommand) -> Result<()> {
    match cmd {
        IloCommand::GenData(args) => {
            let cfg = args.scenario.load()?;
            let ctx = SolverArgs {
                pmm: args.pmm.clone(),
                model: None,
            }
            .context()?;
            let data = ilo::generate_dataset(&cfg, args.samples, cfg.seed, &args.powers, &ctx.pmm)?;
            data.write(&args.out)?;
            log::info!(
                "wrote {} samples ({} skipped) to {}",
                data.len(),
                data.skipped,
                args.out.display()
            );
        }
        IloCommand::Train(args) => {
            let mut cfg = match &args.config {
                Some(p) => {
                    let text = std::fs::read_to_string(p)?;
                    toml::from_str::<TrainConfig>(&text)
                        .map_err(|e| IracError::Parse(format!("{}: {e}", p.display())))?
                }
                None => TrainConfig::default(),
            };
            if let Some(v) = args.epochs {
                cfg.epochs = v;
            }
            if let Some(v) = args.learning_rate {
                cfg.learning_rate = v;
            }
            if let Some(v) = args.batch_size {
                cfg.batch_size = v;
            }
            if let Some(v) = args.seed {
                cfg.seed = v;
            }
            let data = Dataset::read(&args.data)
                .with_context(|| format!("reading {}", args.data.display()))?;
            let (train_set, test_set) = match args.split {
                Some(n) => {
                    let (a, b) = data.split(n);
                    (a, Some(b).filter(|b| !b.is_empty()))
                }
                None => (data, None),
            };
            let (model, history) = ilo::train(&train_set, test_set.as_ref(), &cfg)?;
            model.save(&args.out)?;
            if let Some(h) = &args.history {
                std::fs::write(h, ilo::history_csv(&history)?)?;
            }
            if let Some(last) = history.last() {
                emit_json(last, None)?;
            }
        }
        IloCommand::Infer(args) => {
            let model = IloModel::load(&args.model)?;
            let inst = read_instance(&args.instance)?;
            let sol = ilo::infer(&model, &inst)?;
            match &args.out {
                Some(p) => sol.write(p)?,
                None => emit_json(&sol, None)?,
            }
        }
        IloCommand::Eval(args) => {
            let model = IloModel::load(&args.model)?;
            let data = Dataset::read(&args.data)?;
            let (_, rest) = data.split(args.skip);
            let params = PmmParams::default();
            let ev = ilo::evaluate_model(&model, &rest, args.time_pmm.then_some(&params))?;
            emit_json(&ev, None)?;
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<IracError>()) {
        Some(IracError::Solver(_)) => 3,
        Some(
            IracError::Validation(_)
            | IracError::Parse(_)
            | IracError::Domain(_)
            | IracError::Json(_)
            | IracError::Csv(_),
        ) => 2,
        Some(IracError::Io(_)) | None => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if let Err(e) = configure_threads_from_env() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
