//! The `otr` command line.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::cost::CostKind;
use crate::dataset::{
    read_dataset, read_records, select_top_k_experts, write_dataset, write_diagnostics,
    write_labeled, DatasetError, DiagnosticRow, WARNING_KEY,
};
use crate::harness::{parse_config, run_demo, HarnessError, LabelerChoice};
use crate::labeler::{label_dataset, LabelConfig, LabelError, PostScale, Preset, ScaleMode};
use crate::measures::FeatureMode;
use crate::stats::{pearson, spearman, Correlation};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_IO: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "otr", version, about = "Label unlabeled trajectories with optimal transport rewards")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Label every episode of UNLABELED against the episodes of EXPERTS.
    Label(LabelArgs),
    /// Keep the K episodes with the highest return.
    SelectExperts {
        dataset: PathBuf,
        k: usize,
        out: PathBuf,
    },
    /// Compare labeled returns with ground-truth returns.
    Diagnose {
        labeled: PathBuf,
        truth: PathBuf,
        out_csv: PathBuf,
    },
    /// Generate a gridworld dataset, label it, fit offline Q and evaluate.
    DemoGridworld {
        config: PathBuf,
        #[arg(long, default_value = "otr")]
        labeler: LabelerChoice,
        /// Also write the generated and labeled datasets here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    pub unlabeled: PathBuf,
    pub experts: PathBuf,
    pub out: PathBuf,
    /// Constants for squashing and post-scaling: locomotion, antmaze or plain.
    #[arg(long, default_value = "plain")]
    pub preset: Preset,
    /// cosine or sqeuclidean.
    #[arg(long)]
    pub cost: Option<CostKind>,
    /// state or state-action.
    #[arg(long)]
    pub features: Option<FeatureMode>,
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Marginal residual that counts as converged.
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    /// locomotion, antmaze or plain.
    #[arg(long)]
    pub squash_mode: Option<ScaleMode>,
    /// The T of the squashing exponent.
    #[arg(long)]
    pub episode_length: Option<usize>,
    /// Defaults to the dataset's action dimension.
    #[arg(long)]
    pub action_dim: Option<usize>,
    /// none, return-range[:TARGET] or shift:DELTA.
    #[arg(long, allow_hyphen_values = true)]
    pub post_scale: Option<PostScale>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    pub parallelism: Option<usize>,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Display) -> Self {
        CliError {
            code,
            message: message.to_string(),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        let code = match e {
            DatasetError::Io { .. } => EXIT_IO,
            DatasetError::InvalidK => EXIT_USAGE,
            _ => EXIT_PARSE,
        };
        CliError::new(code, e)
    }
}

impl From<LabelError> for CliError {
    fn from(e: LabelError) -> Self {
        let code = match e {
            LabelError::InvalidConfig(_) => EXIT_USAGE,
            LabelError::Measure(_) | LabelError::ExpertRewardsMissing { .. } => EXIT_PARSE,
            LabelError::EmptyExpertSet => EXIT_PARSE,
            LabelError::Solver(crate::ot::SolverError::InvalidParams(_)) => EXIT_USAGE,
            _ => EXIT_NUMERIC,
        };
        CliError::new(code, e)
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Label(inner) => inner.into(),
            HarnessError::Config { .. } | HarnessError::InvalidEnv(_) | HarnessError::InvalidCounts(_) => {
                CliError::new(EXIT_USAGE, e)
            }
            _ => CliError::new(EXIT_PARSE, e),
        }
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Label(args) => cmd_label(&args),
        Command::SelectExperts { dataset, k, out } => cmd_select_experts(&dataset, k, &out),
        Command::Diagnose {
            labeled,
            truth,
            out_csv,
        } => cmd_diagnose(&labeled, &truth, &out_csv),
        Command::DemoGridworld {
            config,
            labeler,
            out_dir,
        } => cmd_demo_gridworld(&config, labeler, out_dir.as_deref()),
    }
}

fn label_config(args: &LabelArgs, dataset_action_dim: Option<usize>) -> Result<LabelConfig, CliError> {
    let mut cfg = LabelConfig::preset(args.preset, args.action_dim.or(dataset_action_dim));
    if let Some(v) = args.cost {
        cfg.cost = v;
    }
    if let Some(v) = args.features {
        cfg.features = v;
    }
    if let Some(v) = args.epsilon {
        cfg.sinkhorn.epsilon = v;
    }
    if let Some(v) = args.max_iters {
        cfg.sinkhorn.max_iterations = v;
    }
    if let Some(v) = args.tolerance {
        cfg.sinkhorn.marginal_tolerance = v;
    }
    if let Some(v) = args.alpha {
        cfg.squash_alpha = v;
    }
    if let Some(v) = args.beta {
        cfg.squash_beta = v;
    }
    if let Some(v) = args.squash_mode {
        cfg.squash_scale = v;
    }
    if let Some(v) = args.episode_length {
        cfg.episode_length = v;
    }
    if let Some(v) = args.post_scale {
        cfg.post_scale = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_label(args: &LabelArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let unlabeled = read_dataset(&args.unlabeled)?;
    let experts = read_dataset(&args.experts)?;
    let cfg = label_config(args, unlabeled.action_dim().or(experts.action_dim()))?;
    let threads = match args.parallelism {
        Some(0) => return Err(CliError::new(EXIT_USAGE, "--parallelism must be at least 1")),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::new(EXIT_USAGE, e))?;
    let labeled = pool.install(|| label_dataset(&unlabeled.episodes, &experts.episodes, &cfg))?;
    write_labeled(&args.out, &labeled)?;

    let returns: Vec<f64> = labeled.iter().map(|l| l.episodic_return()).collect();
    let unconverged = labeled.iter().filter(|l| !l.converged).count();
    println!("episodes labeled: {}", labeled.len());
    if !returns.is_empty() {
        let mean = returns.iter().sum::<f64>() / returns.len() as f64;
        let min = returns.iter().copied().fold(f64::INFINITY, f64::min);
        let max = returns.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        println!("episodic return: mean {mean:.6} min {min:.6} max {max:.6}");
    }
    if unconverged > 0 {
        eprintln!(
            "warning: {unconverged} episode(s) had a Sinkhorn solve stop at --max-iters {}",
            cfg.sinkhorn.max_iterations
        );
    }
    println!("wall time: {:.3}s", started.elapsed().as_secs_f64());
    Ok(())
}

pub fn cmd_select_experts(dataset: &Path, k: usize, out: &Path) -> Result<(), CliError> {
    let data = read_dataset(dataset)?;
    let selected = select_top_k_experts(&data, k)?;
    if let Some(w) = selected.metadata.get(WARNING_KEY) {
        eprintln!("warning: {w}");
    }
    write_dataset(out, &selected.episodes)?;
    println!("selected {} of {} episodes", selected.len(), data.len());
    Ok(())
}

fn describe(name: &str, c: Correlation) -> String {
    if c.degenerate {
        eprintln!("warning: {name} correlation undefined (zero variance), reported as 0");
    }
    format!("{name}: {:.6}", c.value)
}

pub fn cmd_diagnose(labeled: &Path, truth: &Path, out_csv: &Path) -> Result<(), CliError> {
    let labeled = read_records(labeled)?;
    let truth = read_dataset(truth)?;
    if labeled.len() != truth.len() {
        return Err(CliError::new(
            EXIT_PARSE,
            format!(
                "id mismatch: {} labeled episodes but {} ground-truth episodes",
                labeled.len(),
                truth.len()
            ),
        ));
    }
    let mut rows = Vec::with_capacity(labeled.len());
    for (index, (l, t)) in labeled.iter().zip(&truth.episodes).enumerate() {
        let id = match (&l.trajectory.id, &t.id) {
            (Some(a), Some(b)) if a == b => a.clone(),
            (None, None) => index.to_string(),
            (a, b) => {
                return Err(CliError::new(
                    EXIT_PARSE,
                    format!("id mismatch at episode {index}: labeled {a:?}, ground truth {b:?}"),
                ))
            }
        };
        let missing = |index| CliError::from(DatasetError::RewardsMissing { index });
        rows.push(DiagnosticRow {
            episode_id: id,
            ground_truth_return: t.episodic_return().ok_or_else(|| missing(index))?,
            otr_return: l.trajectory.episodic_return().ok_or_else(|| missing(index))?,
            source_expert: l.source_expert,
        });
    }
    write_diagnostics(out_csv, &rows)?;
    let x: Vec<f64> = rows.iter().map(|r| r.otr_return).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.ground_truth_return).collect();
    println!("episodes: {}", rows.len());
    println!("{}", describe("pearson", pearson(&x, &y)));
    println!("{}", describe("spearman", spearman(&x, &y)));
    Ok(())
}

pub fn cmd_demo_gridworld(
    config: &Path,
    labeler: LabelerChoice,
    out_dir: Option<&Path>,
) -> Result<(), CliError> {
    let text = std::fs::read_to_string(config)
        .map_err(|e| CliError::new(EXIT_IO, format!("{}: {e}", config.display())))?;
    let cfg = parse_config(&text)?;
    let report = run_demo(&cfg, labeler)?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::new(EXIT_IO, format!("{}: {e}", dir.display())))?;
        write_dataset(&dir.join("experts.jsonl"), &report.data.experts.episodes)?;
        write_dataset(&dir.join("unlabeled.jsonl"), &report.data.unlabeled.episodes)?;
        write_dataset(&dir.join("truth.jsonl"), &report.data.truth.episodes)?;
        write_dataset(&dir.join("training.jsonl"), &report.training)?;
    }
    println!("labeler: {labeler:?}");
    println!("training episodes: {}", report.training.len());
    println!(
        "q-iteration: {} sweeps ({})",
        report.q_sweeps,
        if report.q_converged { "converged" } else { "sweep limit" }
    );
    if let (Some(p), Some(s)) = (report.pearson, report.spearman) {
        println!("{}", describe("pearson", p));
        println!("{}", describe("spearman", s));
    }
    println!("success_rate: {}", report.success_rate);
    println!(
        "time: label {:.3}s, fit {:.3}s",
        report.label_time.as_secs_f64(),
        report.fit_time.as_secs_f64()
    );
    Ok(())
}
