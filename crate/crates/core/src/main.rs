use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};

use visreason::harness::{self, load_dataset, read_report, render_text, write_report, Config, Engine, MetricMode};
use visreason::knowledge::curation::{self, load_candidates, load_items, write_jsonl};
use visreason::knowledge::{CandidateKind, CurationConfig};

#[derive(Parser)]
#[command(name = "visreason", version, about = "Knowledge-enriched visual question answering pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Answer every question in a dataset and write trajectories and a report.
    Run {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        metric: Option<Metric>,
        #[arg(long)]
        concurrency: Option<usize>,
        #[arg(long)]
        max_reflections: Option<u32>,
    },
    /// Sample teacher outputs, judge them and emit training records.
    Curate {
        #[arg(long, value_enum)]
        kind: Kind,
        /// JSON lines of {id, image, description, analysis?}.
        #[arg(long, required_unless_present = "analysis")]
        dataset: Option<PathBuf>,
        /// Caption curation from the retained candidates of an earlier
        /// analysis curation run.
        #[arg(long, conflicts_with = "dataset")]
        analysis: Option<PathBuf>,
        #[arg(long)]
        config: PathBuf,
        /// Directory image paths are relative to; defaults to the directory
        /// of the input file.
        #[arg(long)]
        image_root: Option<PathBuf>,
        #[arg(long)]
        samples_per_item: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute a report from a trajectory file.
    Eval {
        #[arg(long)]
        trajectories: PathBuf,
        #[arg(long, value_enum)]
        metric: Option<Metric>,
        /// Directory to write report.json and report.txt into.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute the report from a trajectory file and check it against the
    /// report written by the original run.
    Replay {
        #[arg(long)]
        trajectories: PathBuf,
        /// Defaults to report.json next to the trajectory file.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Exact,
    Consensus,
}

impl From<Metric> for MetricMode {
    fn from(m: Metric) -> Self {
        match m {
            Metric::Exact => MetricMode::Exact,
            Metric::Consensus => MetricMode::Consensus,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Analysis,
    Caption,
}

/// Error with the exit status it maps to.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<harness::HarnessError> for Failure {
    fn from(e: harness::HarnessError) -> Self {
        if e.is_usage_error() {
            Failure::Usage(e.into())
        } else {
            Failure::Runtime(e.into())
        }
    }
}

fn usage<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Usage(e.into())
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { dataset, config, out, metric, concurrency, max_reflections } => {
            let mut config = Config::load(&config).map_err(usage)?;
            if let Some(m) = metric {
                config.run.metric = m.into();
            }
            if let Some(c) = concurrency {
                config.run.concurrency = c;
            }
            if let Some(r) = max_reflections {
                config.reasoner.max_reflections = r;
            }
            config.validate().map_err(usage)?;
            let samples = load_dataset(&dataset).map_err(usage)?;
            let engine = Engine::new(config).map_err(usage)?;
            let outcome = engine.run_batch(&samples, parent_dir(&dataset), &out)?;
            print!("{}", render_text(&outcome.report));
            eprintln!("wrote {}", out.display());
            Ok(())
        }
        Command::Curate { kind, dataset, analysis, config, image_root, samples_per_item, out } => {
            let config = Config::load(&config).map_err(usage)?;
            let kind = match kind {
                Kind::Analysis => CandidateKind::Analysis,
                Kind::Caption => CandidateKind::Caption,
            };
            let (items, base_dir) = match (&dataset, &analysis) {
                (Some(path), _) => (load_items(path).map_err(usage)?, parent_dir(path).to_path_buf()),
                (None, Some(path)) => {
                    if kind != CandidateKind::Caption {
                        return Err(usage(anyhow!("--analysis input only applies to --kind caption")));
                    }
                    let records = load_candidates(path).map_err(usage)?;
                    (curation::items_from_retained(&records), parent_dir(path).to_path_buf())
                }
                (None, None) => return Err(usage(anyhow!("either --dataset or --analysis is required"))),
            };
            let backends = config.build_backends().map_err(usage)?;
            let prompts = config.load_prompts().map_err(usage)?;
            let curation_config = CurationConfig {
                samples_per_item: samples_per_item.unwrap_or(config.curation.samples_per_item),
                tau: config.thresholds.tau,
                concurrency: config.run.concurrency,
                base_dir: image_root.unwrap_or(base_dir),
            };
            if curation_config.samples_per_item == 0 {
                return Err(usage(anyhow!("--samples-per-item must be at least 1")));
            }
            let outcome = curation::curate(&backends, &prompts, kind, &items, &curation_config).map_err(usage)?;
            let retained = outcome.retained();
            let training = curation::emit_training_records(&retained, &prompts).map_err(runtime)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display())).map_err(runtime)?;
            write_jsonl(&out.join("candidates.jsonl"), &outcome.candidates).map_err(runtime)?;
            write_jsonl(&out.join("retained.jsonl"), &retained).map_err(runtime)?;
            write_jsonl(&out.join("training.jsonl"), &training).map_err(runtime)?;
            write_jsonl(&out.join("failures.jsonl"), &outcome.failures).map_err(runtime)?;
            println!(
                "candidates: {}\nretained: {}\ntraining records: {}\nfailed items: {}",
                outcome.candidates.len(),
                retained.len(),
                training.len(),
                outcome.failures.len()
            );
            if !outcome.failures.is_empty() && outcome.candidates.is_empty() {
                return Err(runtime(anyhow!("every item failed; see failures.jsonl")));
            }
            Ok(())
        }
        Command::Eval { trajectories, metric, out } => {
            let report = harness::replay(&trajectories, metric.map(Into::into))?;
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display())).map_err(runtime)?;
                write_report(&dir, &report)?;
            }
            print!("{}", render_text(&report));
            Ok(())
        }
        Command::Replay { trajectories, report } => {
            let recomputed = harness::replay(&trajectories, None)?;
            let report_path = report.unwrap_or_else(|| parent_dir(&trajectories).join(harness::REPORT_JSON));
            let original = read_report(&report_path)?;
            print!("{}", render_text(&recomputed));
            if recomputed != original {
                return Err(runtime(anyhow!("recomputed report differs from {}", report_path.display())));
            }
            eprintln!("report matches {}", report_path.display());
            Ok(())
        }
    }
}

/// The error and its causes, skipping causes already spelled out by the
/// message before them.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if out.contains(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out
}

fn parent_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new(""))
}
