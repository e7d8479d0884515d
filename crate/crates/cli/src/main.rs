//! `pvos` command line: generate scenario datasets, run the engine over a
//! manifest, evaluate predictions, print dataset statistics, and validate
//! manifests.
//!
//! Exit codes: 0 ok, 2 config error, 3 data error, 4 internal error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use pvos_core::ast::AstConfig;
use pvos_core::dataset::{dataset_stats, validate_manifest, Manifest, StatsRow};
use pvos_core::eval::{eval_dataset, render_csv, ProtocolKind};
use pvos_core::memory::MemoryConfig;
use pvos_core::pipeline::EngineConfig;
use pvos_core::runner::{run_manifest, scenario_to_manifest, ModalityFilter, RunOptions, ScenarioFileConfig};

#[derive(Parser)]
#[command(name = "pvos", version, about = "Promptable video object segmentation engine")]
struct Cli {
    /// Seed override for scenario generation and scene reconstruction.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON run-config file (see README for the schema).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for per-masklet parallelism.
    #[arg(long, global = true)]
    parallel: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModalityArg {
    All,
    Visual,
    Text,
    Audio,
}

impl From<ModalityArg> for ModalityFilter {
    fn from(m: ModalityArg) -> Self {
        match m {
            ModalityArg::All => ModalityFilter::All,
            ModalityArg::Visual => ModalityFilter::Visual,
            ModalityArg::Text => ModalityFilter::Text,
            ModalityArg::Audio => ModalityFilter::Audio,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ProtocolArg {
    /// Score every frame from the start of the video.
    FirstFrame,
    /// Score from each masklet's visual prompt frame.
    PromptFrame,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario dataset: manifest with ground truth, prompts,
    /// and oracle bindings.
    GenScenario {
        /// Scenario config JSON.
        scenario: PathBuf,
    },
    /// Run the engine over every prompt in a manifest.
    Run {
        manifest: PathBuf,
        /// Restrict to one prompt modality.
        #[arg(long, value_enum, default_value_t = ModalityArg::All)]
        modality: ModalityArg,
        /// Disable consensus-based fallback on linguistic streams.
        #[arg(long)]
        no_exit_gate: bool,
        /// Write a memory-bank snapshot per task.
        #[arg(long)]
        dump_memory: bool,
    },
    /// Evaluate a predictions manifest against ground truth.
    Eval {
        gt_manifest: PathBuf,
        predictions: PathBuf,
        #[arg(long, value_enum, default_value_t = ProtocolArg::FirstFrame)]
        protocol: ProtocolArg,
    },
    /// Print dataset statistics for a manifest.
    Stats { manifest: PathBuf },
    /// Validate a manifest's structure.
    Validate { manifest: PathBuf },
}

/// Optional run-config file; every field has the engine default.
#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct FileRunConfig {
    ast: Option<AstConfig>,
    memory: Option<MemoryConfig>,
    exit_gate: Option<bool>,
    modality: Option<String>,
    parallelism: Option<usize>,
    seed: Option<u64>,
    dump_memory: Option<bool>,
}

enum CliError {
    Config(String),
    Data(String),
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Internal(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Internal(m) => m,
        }
    }
}

fn config_err(context: &str, err: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{context}: {err}"))
}

fn data_err(context: &str, err: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{context}: {err}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.code())
        }
    }
}

fn load_manifest(path: &Path) -> Result<Manifest, CliError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| data_err(&format!("reading {}", path.display()), e))?;
    Manifest::from_json_str(&raw).map_err(|e| data_err(&format!("parsing {}", path.display()), e))
}

fn ensure_out_dir(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| data_err("creating output directory", e))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let file_config: FileRunConfig = match &cli.config {
        Some(path) => {
            let raw = std::fs::read_to_string(path)
                .map_err(|e| config_err(&format!("reading {}", path.display()), e))?;
            serde_json::from_str(&raw)
                .map_err(|e| config_err(&format!("parsing {}", path.display()), e))?
        }
        None => FileRunConfig::default(),
    };

    match cli.command {
        Command::GenScenario { scenario } => {
            let raw = std::fs::read_to_string(&scenario)
                .map_err(|e| config_err(&format!("reading {}", scenario.display()), e))?;
            let spec: ScenarioFileConfig = serde_json::from_str(&raw)
                .map_err(|e| config_err(&format!("parsing {}", scenario.display()), e))?;
            let seed = cli.seed.or(file_config.seed);
            let manifest =
                scenario_to_manifest(&spec, seed).map_err(|e| config_err("generating scenario", e))?;
            ensure_out_dir(&cli.out)?;
            let path = cli.out.join("manifest.json");
            manifest.save(&path).map_err(|e| data_err("writing manifest", e))?;
            println!(
                "wrote {} ({} video(s), {} masklet(s), {} prompt(s))",
                path.display(),
                manifest.videos.len(),
                manifest.videos.iter().map(|v| v.masklets.len()).sum::<usize>(),
                manifest.videos.iter().map(|v| v.prompts.len()).sum::<usize>(),
            );
            Ok(())
        }

        Command::Run { manifest, modality, no_exit_gate, dump_memory } => {
            let manifest = load_manifest(&manifest)?;
            validate_manifest(&manifest).map_err(|e| data_err("validating manifest", e))?;

            let modality = if modality == ModalityArg::All {
                match file_config.modality.as_deref() {
                    None | Some("all") => ModalityFilter::All,
                    Some("visual") => ModalityFilter::Visual,
                    Some("text") => ModalityFilter::Text,
                    Some("audio") => ModalityFilter::Audio,
                    Some(other) => {
                        return Err(CliError::Config(format!("unknown modality {other:?} in config")))
                    }
                }
            } else {
                modality.into()
            };
            let engine = EngineConfig {
                ast: file_config.ast.unwrap_or_default(),
                memory: file_config.memory.unwrap_or_default(),
                exit_gate: if no_exit_gate { false } else { file_config.exit_gate.unwrap_or(true) },
            };
            engine.ast.validate().map_err(|e| config_err("ast config", e))?;
            engine.memory.validate().map_err(|e| config_err("memory config", e))?;
            let options = RunOptions {
                modality,
                engine,
                workers: cli.parallel.or(file_config.parallelism).unwrap_or(1),
                seed: cli.seed.or(file_config.seed),
                dump_memory: dump_memory || file_config.dump_memory.unwrap_or(false),
            };

            let artifacts = run_manifest(&manifest, &options).map_err(|e| data_err("run", e))?;
            ensure_out_dir(&cli.out)?;
            let predictions_path = cli.out.join("predictions.json");
            artifacts
                .predictions
                .save(&predictions_path)
                .map_err(|e| data_err("writing predictions", e))?;
            let events_dir = cli.out.join("events");
            std::fs::create_dir_all(&events_dir).map_err(|e| data_err("creating events dir", e))?;
            for task in &artifacts.tasks {
                let log_path = events_dir.join(format!("{}.jsonl", task.log_name()));
                std::fs::write(&log_path, task.events_jsonl())
                    .map_err(|e| data_err("writing event log", e))?;
                if let Some(snapshot) = &task.memory_snapshot {
                    let mem_path = events_dir.join(format!("{}.memory.json", task.log_name()));
                    let json = serde_json::to_string_pretty(snapshot)
                        .map_err(|e| CliError::Internal(format!("memory snapshot: {e}")))?;
                    std::fs::write(&mem_path, json + "\n")
                        .map_err(|e| data_err("writing memory snapshot", e))?;
                }
            }
            println!(
                "ran {} task(s); predictions at {}",
                artifacts.tasks.len(),
                predictions_path.display()
            );
            Ok(())
        }

        Command::Eval { gt_manifest, predictions, protocol } => {
            let gt = load_manifest(&gt_manifest)?;
            let pred = load_manifest(&predictions)?;
            let protocol = match protocol {
                ProtocolArg::FirstFrame => ProtocolKind::FromFirstFrame,
                ProtocolArg::PromptFrame => ProtocolKind::FromPromptFrame,
            };
            let workers = cli.parallel.or(file_config.parallelism).unwrap_or(1);
            let report =
                eval_dataset(&gt, &pred, protocol, workers).map_err(|e| data_err("eval", e))?;
            ensure_out_dir(&cli.out)?;
            let csv_path = cli.out.join("eval.csv");
            std::fs::write(&csv_path, render_csv(&report))
                .map_err(|e| data_err("writing csv", e))?;
            for agg in &report.aggregates {
                println!(
                    "{}: J&F {:.1}  J {:.1}  F {:.1}  ({} masklet(s))",
                    agg.dataset,
                    (agg.j + agg.f) * 50.0,
                    agg.j * 100.0,
                    agg.f * 100.0,
                    agg.masklets
                );
            }
            println!("wrote {}", csv_path.display());
            Ok(())
        }

        Command::Stats { manifest } => {
            let manifest = load_manifest(&manifest)?;
            validate_manifest(&manifest).map_err(|e| data_err("validating manifest", e))?;
            let rows = dataset_stats(&manifest);
            print!("{}", render_stats_table(&rows));
            Ok(())
        }

        Command::Validate { manifest } => {
            let manifest = load_manifest(&manifest)?;
            validate_manifest(&manifest).map_err(|e| data_err("invalid manifest", e))?;
            println!(
                "ok: {} video(s), {} masklet(s)",
                manifest.videos.len(),
                manifest.videos.iter().map(|v| v.masklets.len()).sum::<usize>()
            );
            Ok(())
        }
    }
}

/// Aligned text table of per-dataset statistics plus a totals row.
fn render_stats_table(rows: &[StatsRow]) -> String {
    let headers =
        ["Dataset", "Video", "Frame", "Masklet (whole)", "Mask (whole)", "Masklet (part)", "Mask (part)", "Avg. Dur. (s)"];
    let mut table: Vec<[String; 8]> = rows
        .iter()
        .map(|r| {
            [
                r.dataset.clone(),
                r.videos.to_string(),
                r.frames.to_string(),
                r.masklets_whole.to_string(),
                r.masks_whole.to_string(),
                if r.masklets_part == 0 { "-".into() } else { r.masklets_part.to_string() },
                if r.masks_part == 0 { "-".into() } else { r.masks_part.to_string() },
                format!("{:.0}", r.avg_duration_secs),
            ]
        })
        .collect();
    if rows.len() > 1 {
        let videos: usize = rows.iter().map(|r| r.videos).sum();
        let total_duration: f64 =
            rows.iter().map(|r| r.avg_duration_secs * r.videos as f64).sum();
        table.push([
            "total".into(),
            videos.to_string(),
            rows.iter().map(|r| r.frames).sum::<usize>().to_string(),
            rows.iter().map(|r| r.masklets_whole).sum::<usize>().to_string(),
            rows.iter().map(|r| r.masks_whole).sum::<usize>().to_string(),
            rows.iter().map(|r| r.masklets_part).sum::<usize>().to_string(),
            rows.iter().map(|r| r.masks_part).sum::<usize>().to_string(),
            if videos > 0 { format!("{:.0}", total_duration / videos as f64) } else { "0".into() },
        ]);
    }

    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in &table {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    let render_row = |cells: &[String]| -> String {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{:>width$}", c, width = widths[i]))
            .collect::<Vec<_>>()
            .join("  ")
            + "\n"
    };
    out.push_str(&render_row(&headers.iter().map(|s| s.to_string()).collect::<Vec<_>>()));
    for row in &table {
        out.push_str(&render_row(row));
    }
    out
}
