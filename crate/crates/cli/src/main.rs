use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use scgan::checkpoint::load_checkpoint;
use scgan::config::{parse_kv, Experiment};
use scgan::data::{load_dataset, write_pair, DomainPair, Loaded};
use scgan::eval::{accuracy_from_predictions, export_embeddings, export_image_grid, run_ablation, target_accuracy, Accuracy};
use scgan::networks::predict;
use scgan::oracle::{gradcheck, Fixture, GradcheckSize, DEFAULT_ABS_FLOOR, DEFAULT_EPS, DEFAULT_REL_TOL};
use scgan::trainer::{adapt, fit, write_manifest, RunDir};
use scgan::types::stack_pixels;
use scgan::ScganError;

#[derive(Parser)]
#[command(name = "scgan", version, about = "Semantic-consistent GAN domain adaptation at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// key = value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in preset used when the config file names none
    #[arg(long, default_value = "two_moons")]
    preset: String,
    /// Seed for data synthesis, initialization and batch order
    #[arg(long)]
    seed: Option<u64>,
    /// Extra KEY=VALUE overrides, applied after the config file
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic domain pair as a dataset directory
    Synth {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain on source, then adapt to target
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Dataset directory; synthesized from the config when omitted
        #[arg(long)]
        data: Option<PathBuf>,
        /// Run directory (default: runs/<preset>_seed<seed>)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from a checkpoint instead of pretraining
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Target accuracy of a checkpoint
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset directory or single dataset file
        #[arg(long)]
        data: Option<PathBuf>,
        /// Config of the run; defaults to the manifest next to the checkpoint
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// With/without semantic-consistency comparison over several seeds
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Comma-separated seeds (at least 3)
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Analytic vs finite-difference gradients on a fixed problem
    Gradcheck {
        #[arg(long, default_value = "TINY")]
        size: GradcheckSize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Six-column translation grid as PNG
    ExportGrid {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        rows: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Pixel repeat factor per tile
        #[arg(long, default_value_t = 8)]
        scale: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Latent codes with a 2-D principal-component projection as CSV
    ExportEmbeddings {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Keep only these classes
        #[arg(long, value_delimiter = ',')]
        classes: Option<Vec<usize>>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Input rejected before any work started.
#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn resolve(cfg: &ConfigArgs) -> Result<Experiment> {
    let text = cfg.config.as_deref().map(read_text).transpose()?;
    let mut overrides = Vec::new();
    for kv in &cfg.set {
        let Some((k, v)) = kv.split_once('=') else {
            return Err(invalid(format!("--set expects KEY=VALUE, got {kv:?}")));
        };
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(seed) = cfg.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    Ok(Experiment::resolve(&cfg.preset, text.as_deref(), &overrides)?)
}

const MANIFEST_EXTRA_KEYS: [&str; 6] = [
    "run_seed",
    "source_digest",
    "target_digest",
    "source_count",
    "target_count",
    "code_version",
];

/// Experiment recorded in a run manifest.
fn experiment_from_manifest(text: &str) -> Result<Experiment> {
    let kept: Vec<(String, String)> = parse_kv(text)?
        .into_iter()
        .filter(|(k, _)| !MANIFEST_EXTRA_KEYS.contains(&k.as_str()))
        .collect();
    Ok(Experiment::resolve("two_moons", None, &kept)?)
}

fn experiment_for_checkpoint(checkpoint: &Path, config: Option<&Path>) -> Result<Experiment> {
    if let Some(path) = config {
        let text = read_text(path)?;
        return if text.contains("code_version") {
            experiment_from_manifest(&text)
        } else {
            Ok(Experiment::resolve("two_moons", Some(&text), &[])?)
        };
    }
    let mut dir = checkpoint.parent();
    for _ in 0..2 {
        let Some(d) = dir else { break };
        let m = d.join("manifest.txt");
        if m.exists() {
            return experiment_from_manifest(&read_text(&m)?);
        }
        dir = d.parent();
    }
    Err(invalid(format!("no manifest.txt near {}; pass --config", checkpoint.display())))
}

enum EvalData {
    Pair(DomainPair),
    Single(scgan::data::Dataset),
}

fn load_data(data: Option<&Path>, exp: &Experiment) -> Result<EvalData> {
    Ok(match data {
        None => EvalData::Pair(exp.data.generate(exp.run.seed)?),
        Some(p) => match load_dataset(p)? {
            Loaded::Pair(pair) => EvalData::Pair(pair),
            Loaded::Single(ds) => EvalData::Single(ds),
        },
    })
}

fn load_pair_or_synth(data: Option<&Path>, exp: &Experiment) -> Result<DomainPair> {
    match load_data(data, exp)? {
        EvalData::Pair(p) => Ok(p),
        EvalData::Single(_) => Err(invalid("expected a dataset directory with source and target files")),
    }
}

fn print_accuracy(a: &Accuracy) {
    println!("target_accuracy = {:.4}", a.accuracy);
    for (i, row) in a.confusion.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        println!("confusion[{i}] = {}", cells.join(" "));
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { cfg, out } => {
            let exp = resolve(&cfg)?;
            let pair = exp.data.generate(exp.run.seed)?;
            write_pair(&out, &pair)?;
            write_manifest(&out.join("manifest.txt"), &exp.to_kv(), exp.run.seed, Some(&pair))?;
            println!(
                "wrote {} source and {} target samples to {}",
                pair.source.len(),
                pair.target.len(),
                out.display()
            );
        }
        Command::Train { cfg, data, out, resume } => {
            let exp = resolve(&cfg)?;
            let out = out.unwrap_or_else(|| PathBuf::from(format!("runs/{}_seed{}", exp.preset, exp.run.seed)));
            let pair = load_pair_or_synth(data.as_deref(), &exp)?;
            if let Some(ckpt) = resume {
                let mut state = load_checkpoint(&ckpt, &exp.run)?;
                let mut run = RunDir::create(&out)?;
                write_manifest(&out.join("manifest.txt"), &exp.to_kv(), exp.run.seed, Some(&pair))?;
                let from = state.step;
                adapt(&mut state, &exp.run, &pair, Some(&mut run))?;
                scgan::checkpoint::save_checkpoint(&state, &out.join("final.ckpt"))?;
                println!("resumed at step {from}, finished at step {}", state.step);
                if pair.target_labels().is_some() {
                    print_accuracy(&target_accuracy(&state.params, &pair)?);
                }
            } else {
                let outcome = fit(&exp.run, &pair, Some((&out, &exp.to_kv())))?;
                if let Some(a) = &outcome.source_only {
                    println!("source_only_accuracy = {:.4}", a.accuracy);
                }
                if let Some(a) = &outcome.final_accuracy {
                    print_accuracy(a);
                }
                println!("run written to {}", out.display());
            }
        }
        Command::Eval {
            checkpoint,
            data,
            config,
            out,
        } => {
            let exp = experiment_for_checkpoint(&checkpoint, config.as_deref())?;
            let state = load_checkpoint(&checkpoint, &exp.run)?;
            let (acc, pair) = match load_data(data.as_deref(), &exp)? {
                EvalData::Pair(pair) => (target_accuracy(&state.params, &pair)?, Some(pair)),
                EvalData::Single(ds) => {
                    let truth = ds.labels().ok_or(ScganError::MissingEvalLabels)?;
                    let samples: Vec<_> = ds
                        .records
                        .iter()
                        .map(|r| scgan::types::Sample::unlabeled(r.pixels.clone()))
                        .collect::<scgan::Result<_>>()?;
                    let x = stack_pixels(&samples, ds.shape)?;
                    (accuracy_from_predictions(&predict(&state.params, &x)?, &truth, ds.n_classes)?, None)
                }
            };
            print_accuracy(&acc);
            if let Some(out) = out {
                fs::create_dir_all(&out)?;
                write_manifest(&out.join("manifest.txt"), &exp.to_kv(), exp.run.seed, pair.as_ref())?;
                fs::write(out.join("eval.json"), serde_json::to_string_pretty(&acc)?)?;
            }
        }
        Command::Ablate { cfg, seeds, data, out } => {
            let exp = resolve(&cfg)?;
            if seeds.len() < 3 {
                return Err(invalid(format!("--seeds needs at least 3 values, got {}", seeds.len())));
            }
            let pair = load_pair_or_synth(data.as_deref(), &exp)?;
            let table = run_ablation(&exp.run, &pair, &seeds)?;
            print!("{}", table.to_csv());
            println!("gap (with - without) = {:.4}", table.gap());
            if let Some(out) = out {
                fs::create_dir_all(&out)?;
                write_manifest(&out.join("manifest.txt"), &exp.to_kv(), exp.run.seed, Some(&pair))?;
                fs::write(out.join("ablation.csv"), table.to_csv())?;
                fs::write(out.join("ablation.json"), serde_json::to_string_pretty(&table)?)?;
            }
        }
        Command::Gradcheck { size, seed, out } => {
            let config = size.config();
            let fx = Fixture::new(config.clone(), seed);
            let rows = gradcheck(&fx, DEFAULT_EPS, DEFAULT_REL_TOL, DEFAULT_ABS_FLOOR)?;
            println!("loss  group  params  worst_abs_err  worst_ratio  result");
            for r in &rows {
                let c = &r.comparison;
                println!(
                    "{:<5} {:<6} {:>6}  {:>13.3e}  {:>11.3e}  {}",
                    r.loss,
                    r.group,
                    r.n_params,
                    c.worst_abs_err,
                    c.worst_ratio,
                    if c.passed { "pass" } else { "FAIL" }
                );
            }
            if let Some(out) = out {
                fs::create_dir_all(&out)?;
                let exp = Experiment {
                    preset: format!("gradcheck_{size:?}").to_lowercase(),
                    run: config,
                    data: scgan::config::DataSpec::TwoMoons {
                        n_per_domain: 0,
                        rotation_deg: 0.0,
                        noise_sd: 0.0,
                    },
                };
                write_manifest(&out.join("manifest.txt"), &exp.to_kv(), seed, None)?;
                fs::write(out.join("gradcheck.json"), serde_json::to_string_pretty(&rows)?)?;
            }
            if let Some(bad) = rows.iter().find(|r| !r.comparison.passed) {
                bail!("gradient check failed for {} / {}", bad.loss, bad.group);
            }
        }
        Command::ExportGrid {
            checkpoint,
            data,
            config,
            rows,
            seed,
            scale,
            out,
        } => {
            let exp = experiment_for_checkpoint(&checkpoint, config.as_deref())?;
            let state = load_checkpoint(&checkpoint, &exp.run)?;
            let pair = load_pair_or_synth(data.as_deref(), &exp)?;
            let layout = export_image_grid(&state.params, &pair, rows, seed, scale, &out)?;
            println!(
                "wrote {}x{} tiles ({} rows x 6 columns) to {}",
                layout.tile_width,
                layout.tile_height,
                layout.rows,
                out.display()
            );
        }
        Command::ExportEmbeddings {
            checkpoint,
            data,
            config,
            classes,
            out,
        } => {
            let exp = experiment_for_checkpoint(&checkpoint, config.as_deref())?;
            let state = load_checkpoint(&checkpoint, &exp.run)?;
            let pair = load_pair_or_synth(data.as_deref(), &exp)?;
            let summary = export_embeddings(&state.params, &pair, classes.as_deref(), &out)?;
            println!("wrote {} rows to {}", summary.rows, out.display());
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Invalid>().is_some() {
        return 1;
    }
    match err.downcast_ref::<ScganError>() {
        Some(ScganError::Config(_)) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
