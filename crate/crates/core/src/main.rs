use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use selamr_core::autodiff::checkpoint;
use selamr_core::eval::report::{
    ablation_rows, history_rows, snr_rows, summary_rows, write_confusion, write_csv, SummaryRow,
};
use selamr_core::eval::{plot, split_records, RunConfig};
use selamr_core::preprocess::preprocess_records;
use selamr_core::siggen::io::{read_dir, read_records, write_container};
use selamr_core::siggen::{generate_dataset, generate_records, ModulationScheme, SignalRecord};
use selamr_core::train::{compact_labels, evaluate, snr_grid, train_seeds, TrainOutcome, Variant};
use selamr_core::{Error, Result};

/// Modulation recognition with graph embeddings and semi-supervised label
/// propagation.
#[derive(Debug, Parser)]
#[command(name = "selamr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Dataset files or directories; overrides `data.paths`.
    inputs: Vec<PathBuf>,
    /// The inputs are already preprocessed.
    #[arg(long)]
    preprocessed: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesise a labelled dataset.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Resample, normalise and denoise records.
    Preprocess {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Train one variant over the configured seeds.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_parser = parse_variant)]
        variant: Option<Variant>,
    },
    /// Score a checkpoint on the split drawn with the run seed.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_parser = parse_variant)]
        variant: Option<Variant>,
    },
    /// Train every ablation variant and tabulate macro precision.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Render SVG charts from metrics, per-SNR or ablation CSV files.
    Plot {
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn read_path(p: &Path) -> Result<Vec<SignalRecord>> {
    if p.is_dir() {
        read_dir(p)
    } else {
        read_records(p)
    }
}

/// Preprocessed records from the inputs, the configured paths, or the
/// generator, in that order of preference.
fn load_records(cfg: &RunConfig, data: &DataArgs) -> Result<Vec<SignalRecord>> {
    let paths = if data.inputs.is_empty() { &cfg.data.paths } else { &data.inputs };
    let raw = if paths.is_empty() {
        info!("no dataset given; generating with seed {}", cfg.seed);
        generate_records(&cfg.generate, cfg.seed)?
    } else {
        let mut all = Vec::new();
        for p in paths {
            all.extend(read_path(p)?);
        }
        all
    };
    if raw.is_empty() {
        return Err(Error::Contract("the dataset is empty".into()));
    }
    if data.preprocessed || cfg.data.preprocessed {
        Ok(raw)
    } else {
        preprocess_records(&raw, &cfg.preprocess)
    }
}

fn class_names(records: &[SignalRecord]) -> Result<Vec<String>> {
    let labels = records
        .iter()
        .map(|r| r.label.map(|l| l.class_id()))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::Contract("every record needs a label".into()))?;
    Ok(compact_labels(&labels)
        .0
        .into_iter()
        .map(|id| ModulationScheme::from_class_id(id).map_or_else(|| id.to_string(), |m| m.name().to_string()))
        .collect())
}

fn write_outcomes(out: &Path, outcomes: &[TrainOutcome], names: &[String]) -> Result<()> {
    for o in outcomes {
        write_csv(&out.join(format!("metrics_seed{}.csv", o.seed)), &history_rows(o))?;
        write_confusion(&out.join(format!("confusion_seed{}.csv", o.seed)), &o.test, names)?;
        checkpoint::save(&o.params, &out.join(format!("model_seed{}.ckpt", o.seed)))?;
    }
    write_csv(&out.join("summary.csv"), &summary_rows(outcomes))?;
    let reports: Vec<_> = outcomes.iter().map(|o| (o.seed, &o.test)).collect();
    write_csv(&out.join("per_snr.csv"), &snr_rows(&reports))?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { common } => {
            let cfg = load_config(&common)?;
            for p in generate_dataset(&cfg.generate, cfg.seed, &common.out)? {
                println!("{}", p.display());
            }
        }
        Command::Preprocess { common, data } => {
            let cfg = load_config(&common)?;
            let records = load_records(&cfg, &data)?;
            std::fs::create_dir_all(&common.out)?;
            let mut geometries: Vec<(usize, usize)> = records.iter().map(|r| (r.channel.n_tx, r.channel.n_rx)).collect();
            geometries.sort_unstable();
            geometries.dedup();
            for (t, r) in geometries {
                let group: Vec<&SignalRecord> =
                    records.iter().filter(|x| x.channel.n_tx == t && x.channel.n_rx == r).collect();
                let path = common.out.join(format!("preprocessed_{t}x{r}.csv"));
                write_container(&path, &group)?;
                println!("{}", path.display());
            }
        }
        Command::Train { common, data, variant } => {
            let cfg = load_config(&common)?;
            let variant = variant.unwrap_or(cfg.variant);
            let records = load_records(&cfg, &data)?;
            std::fs::create_dir_all(&common.out)?;
            std::fs::write(common.out.join("config.toml"), cfg.to_toml()?)?;
            let outcomes = train_seeds(&records, &cfg.split, &cfg.model(), variant, &cfg.seed_list())?;
            write_outcomes(&common.out, &outcomes, &class_names(&records)?)?;
            let mean = outcomes.iter().map(|o| o.test.accuracy).sum::<f64>() / outcomes.len() as f64;
            println!("{variant}: mean test accuracy {mean:.4} over {} seeds", outcomes.len());
        }
        Command::Evaluate { common, data, checkpoint: ckpt, variant } => {
            let cfg = load_config(&common)?;
            let variant = variant.unwrap_or(cfg.variant);
            let records = load_records(&cfg, &data)?;
            let params = checkpoint::load(&ckpt)?;
            let split = split_records(&records, &cfg.split, cfg.seed)?;
            let grid = cfg.train.snr_grid.clone().unwrap_or_else(|| snr_grid(&records));
            let (val, test) = evaluate(&records, &split, &cfg.model(), variant, &params, &grid)?;
            std::fs::create_dir_all(&common.out)?;
            let rows: Vec<SummaryRow> = [("val", &val), ("test", &test)]
                .into_iter()
                .map(|(s, r)| SummaryRow {
                    seed: cfg.seed.to_string(),
                    split: s.into(),
                    accuracy: r.accuracy,
                    macro_precision: r.macro_precision,
                    best_epoch: None,
                    runtime_secs: r.runtime_secs,
                })
                .collect();
            write_csv(&common.out.join("eval_summary.csv"), &rows)?;
            write_csv(&common.out.join("eval_per_snr.csv"), &snr_rows(&[(cfg.seed, &test)]))?;
            write_confusion(&common.out.join("eval_confusion.csv"), &test, &class_names(&records)?)?;
            println!("test accuracy {:.4}, macro precision {:.4}", test.accuracy, test.macro_precision);
        }
        Command::Ablate { common, data } => {
            let cfg = load_config(&common)?;
            let records = load_records(&cfg, &data)?;
            std::fs::create_dir_all(&common.out)?;
            std::fs::write(common.out.join("config.toml"), cfg.to_toml()?)?;
            let mut results = Vec::with_capacity(Variant::ALL.len());
            for v in Variant::ALL {
                results.push((v, train_seeds(&records, &cfg.split, &cfg.model(), v, &cfg.seed_list())?));
            }
            let (rows, per_seed) = ablation_rows(&results);
            write_csv(&common.out.join("ablation.csv"), &rows)?;
            write_csv(&common.out.join("ablation_seeds.csv"), &per_seed)?;
            for r in &rows {
                println!("{:<36} {:.4}", r.variant, r.macro_precision);
            }
        }
        Command::Plot { out, inputs } => {
            for input in &inputs {
                for p in plot::plot_csv(input, &out)? {
                    println!("{}", p.display());
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
