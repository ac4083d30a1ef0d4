//! The `zsml` command line.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for data and validation
//! errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::{Result, ZsmlError};
use crate::experiment::{
    load_inputs, predict_with, provenance_comment, run_experiment, train_model, write_json,
    ExperimentConfig, Manifest,
};
use crate::io::{load_label_columns, save_label_columns};
use crate::metrics::EvalReport;
use crate::regression::RegressionModel;
use crate::synth::{generate, mean_by_cell, run_benchmark, write_bench_csv, BenchConfig, SynthConfig};

#[derive(Debug, Parser)]
#[command(name = "zsml", version, about = "Multi-label zero-shot prediction in a word-vector space")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    SynthGen {
        /// Generator settings (JSON); defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the seed in the generator settings.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the regressor on the source split and save it.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Project the target split with a saved model and predict label sets.
    Predict {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against ground truth.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Per-label scores for the ranking metrics; the binary predictions
        /// are used when omitted.
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run a full experiment.
    Run {
        #[arg(long, required_unless_present = "manifest", conflicts_with = "manifest")]
        config: Option<PathBuf>,
        /// Re-run the experiment recorded in a manifest.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Output directory; defaults to the config's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the synthetic benchmark matrix.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// CSV destination; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("ZSML_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| ZsmlError::Usage(format!("ZSML_THREADS must be a positive integer, got `{value}`")))?;
    // A pool may already exist when called more than once in one process.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| ZsmlError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| ZsmlError::json(format!("{what} {}", path.display()), e))
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::SynthGen { config, seed, out } => {
            let mut cfg: SynthConfig = match config {
                Some(p) => read_json(&p, "synth config")?,
                None => SynthConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let data = generate(&cfg)?;
            data.save(&out)?;
            let experiment = serde_json::json!({
                "embeddings": "embeddings.txt",
                "source": "source.csv",
                "target": "target.csv",
                "seed": cfg.seed,
            });
            write_json(&out.join("experiment.json"), &experiment)?;
            println!(
                "wrote {} source and {} target instances to {}",
                data.source.len(),
                data.target.len(),
                out.display()
            );
        }
        Command::Train { config, model } => {
            let cfg = ExperimentConfig::load(&config)?;
            let inputs = load_inputs(&cfg)?;
            let trained = train_model(&cfg, &inputs)?;
            trained.save(&model)?;
            println!("wrote {} regressor to {}", trained.kind(), model.display());
        }
        Command::Predict { config, model, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let inputs = load_inputs(&cfg)?;
            let model = RegressionModel::load(&model)?;
            let outcome = predict_with(&cfg, &inputs, &model)?;
            std::fs::create_dir_all(&out).map_err(|e| ZsmlError::io(&out, e))?;
            let comment = provenance_comment(&cfg.hash(), cfg.seed);
            let (ids, vocab) = (&inputs.target.ids, &inputs.target.vocabulary);
            let p = &outcome.prediction;
            save_label_columns(out.join("predictions.csv"), Some(&comment), ids, vocab, |i, j| {
                p.binary[(i, j)].to_string()
            })?;
            save_label_columns(out.join("scores.csv"), Some(&comment), ids, vocab, |i, j| {
                p.scores[(i, j)].to_string()
            })?;
            let y_hat = model.predict(&inputs.target.features)?;
            let dims: Vec<String> = (1..=y_hat.cols()).map(|d| d.to_string()).collect();
            save_label_columns(out.join("projections.csv"), Some(&comment), ids, &dims, |i, j| {
                y_hat.as_matrix()[(i, j)].to_string()
            })?;
            for d in &p.diagnostics {
                eprintln!("warning: {d}");
            }
            println!("wrote predictions for {} instances to {}", ids.len(), out.display());
        }
        Command::Evaluate {
            pred,
            truth,
            scores,
            json,
        } => {
            let truth = load_label_columns(&truth)?;
            let pred = load_label_columns(&pred)?.aligned_to(&truth.ids)?;
            if pred.vocabulary != truth.vocabulary {
                return Err(ZsmlError::Validation(
                    "prediction and truth label columns differ".into(),
                ));
            }
            let score_values = match scores {
                Some(p) => {
                    let s = load_label_columns(&p)?.aligned_to(&truth.ids)?;
                    if s.vocabulary != truth.vocabulary {
                        return Err(ZsmlError::Validation(
                            "score and truth label columns differ".into(),
                        ));
                    }
                    s.values
                }
                None => pred.values.clone(),
            };
            let report = EvalReport::compute(&pred.binary()?, &score_values, &truth.binary()?)?;
            print!("{}", report.to_table());
            if let Some(p) = json {
                write_json(&p, &report)?;
            }
        }
        Command::Run {
            config,
            manifest,
            out,
        } => {
            let cfg = match (config, &manifest) {
                (Some(p), _) => ExperimentConfig::load(&p)?,
                (None, Some(m)) => {
                    let m = Manifest::load(m)?;
                    m.verify_inputs()?;
                    m.config
                }
                (None, None) => unreachable!("clap requires one of --config or --manifest"),
            };
            let out = out.or_else(|| cfg.output_dir.clone()).ok_or_else(|| {
                ZsmlError::Usage("no output directory: pass --out or set output_dir".into())
            })?;
            let result = run_experiment(&cfg, &out)?;
            for d in &result.outcome.prediction.diagnostics {
                eprintln!("warning: {d}");
            }
            print!("{}", result.report.to_table());
            println!("config_hash {} seed {}", result.manifest.config_hash, cfg.seed);
        }
        Command::Compare { config, out } => {
            let cfg: BenchConfig = read_json(&config, "benchmark config")?;
            let rows = run_benchmark(&cfg)?;
            match out {
                Some(p) => {
                    let file = std::fs::File::create(&p).map_err(|e| ZsmlError::io(&p, e))?;
                    let mut w = std::io::BufWriter::new(file);
                    write_bench_csv(&rows, &mut w)?;
                    w.flush().map_err(|e| ZsmlError::io(&p, e))?;
                }
                None => write_bench_csv(&rows, std::io::stdout().lock())?,
            }
            eprintln!("{:<20} {:>9} {:>9} {:>9} {:>9} {:>9}", "method", "selftrain", "hamming", "microf1", "rankloss", "ap");
            for (m, s, mean) in mean_by_cell(&rows) {
                eprintln!(
                    "{:<20} {:>9} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
                    m.to_string(),
                    if s { "on" } else { "off" },
                    mean.hamming,
                    mean.micro_f1,
                    mean.ranking_loss,
                    mean.average_precision
                );
            }
        }
    }
    Ok(())
}
