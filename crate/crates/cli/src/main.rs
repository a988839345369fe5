use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use tnh::codes::{read_codes, write_codes};
use tnh::dataset::{read_features, read_labels, read_splits, write_features, write_labels, write_splits};
use tnh::experiment::{encode, load_dataset, run_arm, run_experiment_on};
use tnh::network::{read_checkpoint, write_checkpoint};
use tnh::retrieval::{mean_ap, RetrievalIndex};
use tnh::{gen_synthetic, ApNormalization, Arm, Cutoff, ExperimentConfig, SplitSpec, SyntheticSpec};

#[derive(Parser)]
#[command(name = "tnh", version, about = "Ternary hash codes learned by continuation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArmArg {
    Continuation,
    TwoStep,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic Gaussian-cluster dataset (PREFIX.tfv, .labels, .splits)
    Gen {
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value_t = 500)]
        per_class: usize,
        #[arg(long, default_value_t = 128)]
        dim: usize,
        #[arg(long, default_value_t = 0.3)]
        spread: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0.1)]
        query_fraction: f64,
        #[arg(long, default_value_t = 100)]
        train_per_class: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one network on the train split and write a TNH1 checkpoint
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override a config entry, `key=value`; repeatable
        #[arg(long = "set")]
        overrides: Vec<String>,
        /// Network seed; defaults to the first entry of `seeds`
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "continuation")]
        arm: ArmArg,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch log (loss, k, lr, quantization error)
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Ternarize features with a trained checkpoint and write TNC1 codes
    Encode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate mAP of query codes against retrieval codes
    Eval {
        #[arg(long)]
        codes: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Splits file naming the query and retrieval items
        #[arg(long)]
        splits: PathBuf,
        /// `all` or a positive integer
        #[arg(long, default_value = "all")]
        k: String,
        #[arg(long, default_value = "relevant_in_top_k")]
        ap_normalization: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the joint-vs-two-step comparison described by a config
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set")]
        overrides: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ExperimentConfig::parse_with_overrides(&text, overrides).with_context(|| format!("in {}", path.display()))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .with_context(|| format!("opening {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("creating {}", path.display()))
}

fn with_suffix(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen {
            classes,
            per_class,
            dim,
            spread,
            seed,
            query_fraction,
            train_per_class,
            out,
        } => {
            let ds = gen_synthetic(&SyntheticSpec {
                classes,
                per_class,
                input_dim: dim,
                spread,
                seed,
                split: SplitSpec {
                    query_fraction,
                    train_per_class,
                },
            })?;
            write_features(create(&with_suffix(&out, "tfv"))?, &ds.features)?;
            write_labels(create(&with_suffix(&out, "labels"))?, &ds.labels)?;
            write_splits(create(&with_suffix(&out, "splits"))?, &ds.splits)?;
        }
        Command::Train {
            config,
            overrides,
            seed,
            arm,
            out,
            log,
        } => {
            let cfg = read_config(&config, &overrides)?;
            let ds = load_dataset(&cfg)?;
            let seed = seed.unwrap_or(cfg.seeds[0]);
            let net_cfg = cfg.network_config(ds.input_dim(), ds.num_classes(), seed)?;
            let arm = match arm {
                ArmArg::Continuation => Arm::Continuation,
                ArmArg::TwoStep => Arm::TwoStep,
            };
            let result = run_arm(&ds, &net_cfg, &cfg.train, arm)?;
            write_checkpoint(create(&out)?, &result.network, &cfg.train.schedule)?;
            if let Some(p) = log {
                fs::write(&p, result.log.to_text()).with_context(|| format!("writing {}", p.display()))?;
            }
        }
        Command::Encode { model, features, out } => {
            let ck = read_checkpoint(open(&model)?).with_context(|| format!("in {}", model.display()))?;
            let x = read_features(open(&features)?).with_context(|| format!("in {}", features.display()))?;
            let codes = encode(&ck.network, x.mapv(f64::from).view())?;
            write_codes(create(&out)?, ck.network.config().code_dim, &codes)?;
        }
        Command::Eval {
            codes,
            labels,
            splits,
            k,
            ap_normalization,
            out,
        } => {
            let cutoff: Cutoff = k.parse()?;
            let norm: ApNormalization = ap_normalization.parse()?;
            let (_, codes) = read_codes(open(&codes)?).with_context(|| format!("in {}", codes.display()))?;
            let labels = read_labels(open(&labels)?)?;
            let splits = read_splits(open(&splits)?)?;
            if codes.len() != labels.len() {
                bail!("{} codes but {} label lines", codes.len(), labels.len());
            }
            let pick = |ids: &[usize]| -> Result<Vec<usize>> {
                match ids.iter().find(|&&i| i >= codes.len()) {
                    Some(i) => bail!("split id {i} out of range for {} codes", codes.len()),
                    None => Ok(ids.to_vec()),
                }
            };
            let (query, retrieval) = (pick(&splits.query)?, pick(&splits.retrieval)?);
            let index = RetrievalIndex::new(
                &retrieval.iter().map(|&i| codes[i].clone()).collect::<Vec<_>>(),
                retrieval.iter().map(|&i| labels[i].clone()).collect(),
            )?;
            let mut report = mean_ap(
                &index,
                &query.iter().map(|&i| codes[i].clone()).collect::<Vec<_>>(),
                &query.iter().map(|&i| labels[i].clone()).collect::<Vec<_>>(),
                cutoff,
                norm,
            )?;
            report.query_ids = query;
            emit(&report.to_text(), out.as_deref())?;
        }
        Command::Compare { config, overrides, out } => {
            let cfg = read_config(&config, &overrides)?;
            let ds = load_dataset(&cfg)?;
            let report = run_experiment_on(&cfg, &ds)?;
            emit(&report.to_text(), out.as_deref())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("{first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
