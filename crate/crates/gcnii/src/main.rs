use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gcnii::dataset::{load_dataset, save_dataset};
use gcnii::harness::{spectral_command, verify_filter, Signal, VerifyFilterConfig};
use gcnii::sweep::{derive_seeds, full_supervised_protocol, sweep, SplitSource, SweepOptions};
use gcnii::synthetic::{planted_partition, SyntheticSpec};
use gcnii::train::{train, TrainOptions};
use gcnii_core::{ModelConfig, ModelKind};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "gcnii", version, about = "Deep graph convolution training and spectral checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model on one split.
    Train(TrainArgs),
    /// Train over a grid of depths and seeds.
    Sweep(SweepArgs),
    /// Average test accuracy over several (possibly generated) splits.
    FullSupervised(FullArgs),
    /// Check lazy-walk convergence against its spectral bounds.
    Spectral(SpectralArgs),
    /// Recover deep-network weights for polynomial filters and compare.
    VerifyFilter(VerifyArgs),
    /// Write a synthetic planted-partition dataset directory.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Gcn,
    GcnRes,
    GcnDropedge,
    Appnp,
    Gcnii,
    GcniiStar,
}

impl From<Kind> for ModelKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Gcn => ModelKind::Gcn,
            Kind::GcnRes => ModelKind::GcnRes,
            Kind::GcnDropedge => ModelKind::GcnDropEdge,
            Kind::Appnp => ModelKind::Appnp,
            Kind::Gcnii => ModelKind::Gcnii,
            Kind::GcniiStar => ModelKind::GcniiStar,
        }
    }
}

/// Hyperparameters shared by every training command. Defaults are the Cora
/// semi-supervised GCNII settings.
#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "gcnii")]
    model: Kind,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    #[arg(long, default_value_t = 0.6)]
    dropout: f64,
    #[arg(long, default_value_t = 0.0)]
    drop_edge: f64,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 0.01)]
    wd_conv: f64,
    #[arg(long, default_value_t = 5e-4)]
    wd_dense: f64,
    #[arg(long, default_value_t = 100)]
    patience: usize,
    #[arg(long, default_value_t = 1500)]
    max_epochs: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    no_initial_residual: bool,
    #[arg(long)]
    no_identity_map: bool,
    /// Which split of splits.json to use.
    #[arg(long, default_value_t = 0)]
    split: usize,
}

impl ModelArgs {
    fn config(&self, layers: usize) -> ModelConfig {
        ModelConfig {
            model_kind: self.model.into(),
            num_layers: layers,
            hidden_dim: self.hidden,
            alpha: self.alpha,
            lambda: self.lambda,
            dropout: self.dropout,
            drop_edge: self.drop_edge,
            lr: self.lr,
            wd_conv: self.wd_conv,
            wd_dense: self.wd_dense,
            patience: self.patience,
            max_epochs: self.max_epochs,
            seed: self.seed,
            use_initial_residual: !self.no_initial_residual,
            use_identity_map: !self.no_identity_map,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 64)]
    layers: usize,
    #[arg(long)]
    degree_buckets: bool,
    #[arg(long)]
    weight_spectrum: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32,64")]
    layers: Vec<usize>,
    /// Number of seeds, counting up from --seed.
    #[arg(long, default_value_t = 5)]
    seeds: usize,
    #[arg(long)]
    degree_buckets: bool,
    #[arg(long)]
    weight_spectrum: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FullArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 16)]
    layers: usize,
    #[arg(long, default_value_t = 10)]
    splits: usize,
    /// Ignore shipped splits and generate stratified 60/20/20 ones.
    #[arg(long)]
    generate_splits: bool,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SpectralArgs {
    #[arg(long)]
    data: PathBuf,
    /// ones, feature:J or random
    #[arg(long, default_value = "ones")]
    signal: String,
    #[arg(long, default_value_t = 64)]
    k_max: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Use this dataset's graph instead of small random graphs.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    order: usize,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fixed coefficients θ_0,..,θ_{K-1} of the filter in powers of L̃.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    theta: Option<Vec<f64>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 600)]
    nodes: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 80)]
    features: usize,
    #[arg(long, default_value_t = 10)]
    train_per_class: usize,
    #[arg(long, default_value_t = 150)]
    val: usize,
    #[arg(long, default_value_t = 300)]
    test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut stdout = io::stdout().lock();
    serde_json::to_writer(&mut stdout, value)?;
    writeln!(stdout)?;
    if let Some(path) = path {
        let text = serde_json::to_string_pretty(value)?;
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn load(dir: &Path) -> Result<gcnii::DatasetBundle> {
    load_dataset(dir).with_context(|| format!("loading dataset {}", dir.display()))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(args) => {
            let data = load(&args.model.data)?;
            let config = args.model.config(args.layers);
            let mut stdout = io::stdout().lock();
            let outcome = train(
                &config,
                &data,
                args.model.split,
                TrainOptions {
                    degree_buckets: args.degree_buckets,
                    weight_spectrum: args.weight_spectrum,
                    epoch_log: Some(&mut stdout),
                },
            )?;
            drop(stdout);
            write_json(args.out.as_deref(), &outcome.result)
        }
        Command::Sweep(args) => {
            if args.layers.is_empty() || args.seeds == 0 {
                bail!("sweep needs at least one depth and one seed");
            }
            let data = load(&args.model.data)?;
            let template = args.model.config(args.layers[0]);
            let seeds = derive_seeds(args.model.seed, args.seeds);
            let options = SweepOptions {
                degree_buckets: args.degree_buckets,
                weight_spectrum: args.weight_spectrum,
            };
            let report = sweep(&template, &data, args.model.split, &args.layers, &seeds, options);
            write_json(args.out.as_deref(), &report)
        }
        Command::FullSupervised(args) => {
            let data = load(&args.model.data)?;
            let config = args.model.config(args.layers);
            let source = if args.generate_splits {
                SplitSource::Generate { seed: args.split_seed }
            } else {
                SplitSource::Dataset {
                    fallback_seed: args.split_seed,
                }
            };
            let report = full_supervised_protocol(&data, &config, args.splits, source)?;
            write_json(args.out.as_deref(), &report)
        }
        Command::Spectral(args) => {
            let data = load(&args.data)?;
            let signal: Signal = args.signal.parse()?;
            let report = spectral_command(&data, signal, args.k_max, args.seed)?;
            write_json(args.out.as_deref(), &report)
        }
        Command::VerifyFilter(args) => {
            let data = args.data.as_deref().map(load).transpose()?;
            let order = args.theta.as_ref().map_or(args.order, Vec::len);
            let config = VerifyFilterConfig {
                order,
                trials: args.trials,
                seed: args.seed,
                theta: args.theta,
            };
            let report = verify_filter(&config, data.as_ref().map(|d| &d.graph))?;
            write_json(args.out.as_deref(), &report)?;
            if report.failed > 0 {
                bail!("{} of {} trials exceeded the error tolerance", report.failed, report.trials.len());
            }
            Ok(())
        }
        Command::Synth(args) => {
            let spec = SyntheticSpec {
                nodes: args.nodes,
                classes: args.classes,
                features: args.features,
                train_per_class: args.train_per_class,
                val: args.val,
                test: args.test,
                seed: args.seed,
                ..SyntheticSpec::default()
            };
            let wanted = args.train_per_class * args.classes + args.val + args.test;
            if args.classes == 0 || wanted > args.nodes {
                bail!("{} nodes cannot hold {wanted} split nodes over {} classes", args.nodes, args.classes);
            }
            let data = planted_partition(&spec);
            save_dataset(&data, &args.out)?;
            write_json(None, &data.meta())
        }
    }
}
