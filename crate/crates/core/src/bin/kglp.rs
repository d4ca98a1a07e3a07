use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use kglp::assemble::{assembled_from_jsonl, assembled_to_jsonl, Assembler};
use kglp::config::RunConfig;
use kglp::error::{Error, Result};
use kglp::graph::{compute_stats, load_triples, Split, Symbols};
use kglp::metrics;
use kglp::pipeline::{self, Dataset, ARTIFACT_VERSION};
use kglp::samples::{build_samples, samples_from_jsonl, samples_to_jsonl, EntityIndex, SampleSet};
use kglp::text::{load_descriptions, shorten_tsv, WhitespaceTokenizer};
use kglp::train::{self, checkpoint, TrainData};

#[derive(Parser)]
#[command(name = "kglp", about = "Extreme multi-label link prediction over knowledge graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Config file plus `key=value` overrides; overrides win.
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// TOML config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set strategy=top_k`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self, extra: &[(&str, Option<&Path>)]) -> Result<RunConfig> {
        let mut overrides = self.overrides.clone();
        for (key, path) in extra {
            if let Some(p) = path {
                overrides.push(format!("{key}={}", toml_string(&p.to_string_lossy())));
            }
        }
        RunConfig::load(self.config.as_deref(), &overrides)
    }
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_owned()).to_string()
}

#[derive(Subcommand)]
enum Command {
    /// Print dataset statistics.
    Stats {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: Option<PathBuf>,
        /// Print the statistics as a JSON object instead.
        #[arg(long)]
        json: bool,
    },
    /// Group triples into multi-label samples.
    BuildSamples {
        #[arg(long)]
        triples: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Also write the label index built from these triples.
        #[arg(long)]
        index: Option<PathBuf>,
    },
    /// Keep each description up to its first `;`.
    ShortenDescriptions {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Mean token counts of full and shortened descriptions.
    DescStats {
        #[arg(long)]
        descriptions: PathBuf,
    },
    /// Build model inputs for a samples file.
    Assemble {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        descriptions: Option<PathBuf>,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Train a classifier on assembled inputs.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        assembled: PathBuf,
        #[arg(long)]
        index: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Stage log destination.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on assembled inputs.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        assembled: PathBuf,
        /// Write the report as JSON here as well.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run stats, samples, assembly, training and evaluation.
    Pipeline {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Stats { train, test, json } => {
            let mut symbols = Symbols::new();
            let train = load_triples(&train, Split::Train, &mut symbols)?;
            let test = match test {
                Some(p) => load_triples(&p, Split::Test, &mut symbols)?,
                None => Vec::new(),
            };
            let stats = compute_stats(&train, &test, &build_samples(&train), &build_samples(&test));
            if json {
                println!("{}", serde_json::to_string_pretty(&stats)?);
            } else {
                print!("{}", stats.to_report());
            }
        }
        Command::BuildSamples { triples, out, index } => {
            let mut symbols = Symbols::new();
            let triples = load_triples(&triples, Split::Train, &mut symbols)?;
            write(&out, samples_to_jsonl(&build_samples(&triples), &symbols))?;
            if let Some(index) = index {
                write(&index, EntityIndex::from_triples(&triples).to_text(&symbols))?;
            }
        }
        Command::ShortenDescriptions { input, out } => {
            write(&out, shorten_tsv(&read(&input)?)?)?;
        }
        Command::DescStats { descriptions } => {
            let store = load_descriptions(&descriptions, &mut Symbols::new())?;
            let tokenizer = WhitespaceTokenizer::new();
            println!("descriptions: {}", store.len());
            println!("mean_tokens_full: {:.3}", store.mean_tokens(&tokenizer));
            let short = store.with_lazy_shortening(true);
            println!("mean_tokens_short: {:.3}", short.mean_tokens(&tokenizer));
        }
        Command::Assemble {
            config,
            train,
            descriptions,
            samples,
            out,
        } => {
            let config = config.resolve(&[
                ("train", train.as_deref()),
                ("descriptions", descriptions.as_deref()),
            ])?;
            let mut data = Dataset::load(&config)?;
            let set: SampleSet = samples_from_jsonl(&read(&samples)?, &mut data.symbols)?;
            let tokenizer = data.tokenizer();
            let provider = pipeline::make_provider(&config)?;
            let assembler = Assembler {
                symbols: &data.symbols,
                graph: &data.graph,
                store: &data.store,
                tokenizer: &tokenizer,
                provider: provider.as_ref(),
                config: config.assembler(),
            };
            let inputs = assembler.assemble_all(&set, config.workers)?;
            write(&out, assembled_to_jsonl(&inputs, &data.symbols))?;
        }
        Command::Train {
            config,
            assembled,
            index,
            out,
            log,
        } => {
            let config = config.resolve(&[])?;
            let rows = assembled_from_jsonl(&read(&assembled)?)?;
            let labels: Vec<String> = read(&index)?
                .lines()
                .filter(|l| !l.is_empty())
                .map(str::to_owned)
                .collect();
            let tokenizer = WhitespaceTokenizer::with_atoms(
                labels
                    .iter()
                    .map(String::as_str)
                    .chain(rows.iter().map(|r| r.given.as_str())),
            );
            let data = TrainData::from_texts(
                rows.iter().map(|r| (r.text.as_str(), r.labels.as_slice())),
                labels,
                &tokenizer,
            )?;
            let (mut model, stage_log) = train::train(&data, &config.trainer())?;
            model.fingerprint = config.fingerprint();
            checkpoint::save(&model, &out)?;
            if let Some(log) = log {
                write(&log, stage_log.to_jsonl())?;
            }
            if let Some((recall, p1)) = stage_log.last_holdout() {
                println!("holdout recall {recall:.4}, P@1 {p1:.4}");
            }
        }
        Command::Eval {
            config,
            checkpoint: ckpt,
            assembled,
            json,
        } => {
            let model = checkpoint::load(&ckpt)?;
            let settings = config.resolve(&[])?;
            if config.config.is_some() || !config.overrides.is_empty() {
                let fp = settings.fingerprint();
                if fp != model.fingerprint {
                    log::warn!("config fingerprint {fp} differs from the checkpoint's {}", model.fingerprint);
                }
            }
            let rows = assembled_from_jsonl(&read(&assembled)?)?;
            let (samples, dropped) =
                model.encode_rows(rows.iter().map(|r| (r.text.as_str(), r.labels.as_slice())));
            if dropped > 0 {
                log::warn!("{dropped} labels are not in the checkpoint's label space and were dropped");
            }
            let report = metrics::evaluate(
                &model,
                &samples,
                &settings.eval_ks,
                settings.threshold,
                &model.fingerprint,
            )?;
            print!("{}", report.to_table());
            if let Some(path) = json {
                write(&path, serde_json::to_string_pretty(&report)?)?;
            }
        }
        Command::Pipeline { config, out } => {
            let config = config.resolve(&[])?;
            let summary = pipeline::run_pipeline(&config, &out)?;
            print!("{}", summary.report.to_table());
            println!("fingerprint {}", summary.fingerprint);
        }
    }
    Ok(())
}

fn stage_name(command: &Command) -> &'static str {
    match command {
        Command::Stats { .. } => "stats",
        Command::BuildSamples { .. } => "build-samples",
        Command::ShortenDescriptions { .. } => "shorten-descriptions",
        Command::DescStats { .. } => "desc-stats",
        Command::Assemble { .. } => "assemble",
        Command::Train { .. } => "train",
        Command::Eval { .. } => "eval",
        Command::Pipeline { .. } => "pipeline",
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let version = format!(
        "{} (artifact format {ARTIFACT_VERSION}, checkpoint format {})",
        env!("CARGO_PKG_VERSION"),
        checkpoint::FORMAT_VERSION
    );
    let matches = Cli::command().version(version).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let stage = stage_name(&cli.command);
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Pipeline errors already name the failing stage.
            match e {
                Error::Stage { .. } => eprintln!("error: {e}"),
                e => eprintln!("error: [{stage}] {e}"),
            }
            ExitCode::FAILURE
        }
    }
}
