use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use gnn_assoc::ablation::{run_ablation, AblationConfig};
use gnn_assoc::assoc::AssociationResult;
use gnn_assoc::autodiff::Tensor;
use gnn_assoc::config::RunConfig;
use gnn_assoc::gradsuite::{format_table, run_suite};
use gnn_assoc::metrics::{evaluate, ground_truth};
use gnn_assoc::model::{AssociationModel, Variant};
use gnn_assoc::plot::{write_loss_curve, write_overlays};
use gnn_assoc::scenario::{generate_sequence, read_sequence, training_set, write_sequence};
use gnn_assoc::solvers::{
    brute_force, greedy, hungarian, solve_with_birth_death, ExactAssignment, BRUTE_FORCE_CAP,
    DEFAULT_BIRTH_DEATH_THRESHOLD,
};
use gnn_assoc::tracker::{read_tracks, write_tracks, SolverKind, Tracker};
use gnn_assoc::train::{read_history, train, write_history};

/// Learned data association for online multi-object tracking.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run config; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let cfg = match &self.config {
            Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => RunConfig::default(),
        };
        let cfg = match self.seed {
            Some(s) => cfg.with_seed(s),
            None => cfg,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic sequence file.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Output sequence file (JSON lines).
        #[arg(long, default_value = "sequence.jsonl")]
        out: PathBuf,
    },
    /// Train a model; writes model.ckpt, history.csv, and config.json.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "run")]
        out_dir: PathBuf,
        /// Train the variant without message passing.
        #[arg(long)]
        no_gnn: bool,
        /// Overrides train.iterations.
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Run every classical solver on a problem file.
    Solve {
        /// JSON object with `affinity` (rows of numbers) and optional `threshold`.
        problem: PathBuf,
        /// Write the solutions here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference checks over every differentiable operation.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Track a sequence file; writes a track CSV.
    Track {
        #[command(flatten)]
        common: Common,
        sequence: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// learned | affinity-only | hungarian-baseline | hungarian-iou | oracle
        #[arg(long)]
        solver: Option<String>,
        #[arg(long, default_value = "tracks.csv")]
        out: PathBuf,
    },
    /// Score a track CSV against a sequence file's ground truth.
    Eval {
        #[command(flatten)]
        common: Common,
        sequence: PathBuf,
        tracks: PathBuf,
        /// Also write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the full model with the no-GNN and no-assembly variants.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "ablation")]
        out_dir: PathBuf,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long, default_value_t = 4)]
        test_sequences: usize,
    },
    /// Per-frame overlays and an optional loss curve.
    Plot {
        #[command(flatten)]
        common: Common,
        sequence: PathBuf,
        tracks: PathBuf,
        #[arg(long, default_value = "overlays")]
        out_dir: PathBuf,
        /// Loss history CSV; renders loss.png next to the overlays.
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long, default_value_t = 480)]
        size: u32,
    },
}

fn echo_config(dir: &Path, cfg: &RunConfig) -> anyhow::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.json"), cfg.to_json() + "\n")?;
    Ok(())
}

fn parent_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

fn parse_solver(name: &str) -> anyhow::Result<SolverKind> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .with_context(|| format!("unknown solver {name:?}"))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    affinity: Vec<Vec<f64>>,
    threshold: Option<f64>,
}

#[derive(Serialize)]
struct Solutions {
    hungarian: ExactAssignment,
    brute_force: Option<ExactAssignment>,
    greedy: ExactAssignment,
    threshold: f64,
    birth_death: AssociationResult,
}

fn solve(problem: &Path) -> anyhow::Result<Solutions> {
    let text = fs::read_to_string(problem).with_context(|| format!("reading {}", problem.display()))?;
    let p: ProblemFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", problem.display()))?;
    let s = Tensor::from_rows(&p.affinity)?;
    let threshold = p.threshold.unwrap_or(DEFAULT_BIRTH_DEATH_THRESHOLD);
    Ok(Solutions {
        hungarian: hungarian(&s)?,
        brute_force: if s.rows().min(s.cols()) <= BRUTE_FORCE_CAP {
            Some(brute_force(&s)?)
        } else {
            None
        },
        greedy: greedy(&s)?,
        threshold,
        birth_death: solve_with_birth_death(&s, threshold)?,
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate { common, out } => {
            let cfg = common.resolve()?;
            let frames = generate_sequence(&cfg.scenario)?;
            if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            write_sequence(&out, &frames)?;
            echo_config(parent_dir(&out), &cfg)?;
            println!("wrote {} frames to {}", frames.len(), out.display());
        }
        Command::Train {
            common,
            out_dir,
            no_gnn,
            iterations,
        } => {
            let mut cfg = common.resolve()?;
            if let Some(n) = iterations {
                cfg.train.iterations = n;
            }
            let data = match &cfg.train.data {
                Some(p) => {
                    let frames = read_sequence(p).with_context(|| format!("reading {}", p.display()))?;
                    gnn_assoc::scenario::to_training_problems(&frames, cfg.model.tracklet_len)?.0
                }
                None => training_set(&cfg.scenario, cfg.train.sequences, cfg.model.tracklet_len)?,
            };
            let variant = if no_gnn { Variant::NoGnn } else { Variant::Full };
            let mut model = AssociationModel::new(cfg.model.clone(), variant)?;
            let history = train(&mut model, &data, &cfg.train)?;
            echo_config(&out_dir, &cfg)?;
            let ckpt = cfg.train.checkpoint.clone().unwrap_or_else(|| out_dir.join("model.ckpt"));
            model.save(&ckpt)?;
            write_history(out_dir.join("history.csv"), &history)?;
            if let Some(last) = history.last() {
                println!(
                    "{} instances, {} iterations, final loss {:.4}",
                    data.len(),
                    history.len(),
                    last.loss.total
                );
            }
            println!("checkpoint {}", ckpt.display());
        }
        Command::Solve { problem, out } => {
            let json = serde_json::to_string_pretty(&solve(&problem)?)?;
            match out {
                Some(p) => fs::write(p, json + "\n")?,
                None => println!("{json}"),
            }
        }
        Command::Gradcheck { instances, seed } => {
            if instances == 0 {
                bail!("--instances must be positive");
            }
            let rows = run_suite(seed, instances)?;
            print!("{}", format_table(&rows));
            let failed = rows.iter().filter(|r| !r.passed()).count();
            if failed > 0 {
                bail!("{failed} gradient checks failed");
            }
        }
        Command::Track {
            common,
            sequence,
            checkpoint,
            solver,
            out,
        } => {
            let mut cfg = common.resolve()?;
            if let Some(c) = checkpoint {
                cfg.tracker.checkpoint = Some(c);
            }
            if let Some(s) = solver {
                cfg.tracker.solver = parse_solver(&s)?;
            }
            let frames = read_sequence(&sequence).with_context(|| format!("reading {}", sequence.display()))?;
            let mut tracker = Tracker::from_config(cfg.tracker.clone())?;
            let tracks = tracker.run(&frames)?;
            if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            write_tracks(&out, &tracks)?;
            echo_config(parent_dir(&out), &cfg)?;
            println!("wrote {} track rows to {}", tracks.len(), out.display());
        }
        Command::Eval {
            common,
            sequence,
            tracks,
            out,
        } => {
            let cfg = common.resolve()?;
            let frames = read_sequence(&sequence).with_context(|| format!("reading {}", sequence.display()))?;
            let predicted = read_tracks(&tracks).with_context(|| format!("reading {}", tracks.display()))?;
            let report = evaluate(&predicted, &ground_truth(&frames), &cfg.metrics)?;
            print!("{}", report.to_table());
            if let Some(p) = out {
                fs::write(p, serde_json::to_string_pretty(&report)? + "\n")?;
            }
        }
        Command::Ablate {
            common,
            out_dir,
            iterations,
            test_sequences,
        } => {
            let mut run = common.resolve()?;
            if let Some(n) = iterations {
                run.train.iterations = n;
            }
            let cfg = AblationConfig { run, test_sequences };
            let report = run_ablation(&cfg)?;
            echo_config(&out_dir, &cfg.run)?;
            fs::write(out_dir.join("ablation.json"), serde_json::to_string_pretty(&report)? + "\n")?;
            print!("{}", report.to_table());
        }
        Command::Plot {
            common,
            sequence,
            tracks,
            out_dir,
            history,
            size,
        } => {
            let cfg = common.resolve()?;
            let frames = read_sequence(&sequence).with_context(|| format!("reading {}", sequence.display()))?;
            let predicted = read_tracks(&tracks).with_context(|| format!("reading {}", tracks.display()))?;
            let n = write_overlays(&out_dir, &frames, &predicted, cfg.scenario.arena, size)?;
            println!("wrote {n} overlays to {}", out_dir.display());
            if let Some(h) = history {
                let rows = read_history(&h).with_context(|| format!("reading {}", h.display()))?;
                write_loss_curve(out_dir.join("loss.png"), &rows)?;
                println!("wrote {}", out_dir.join("loss.png").display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
