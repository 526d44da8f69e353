//! The `docl` command line.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autoencoder::FeatureVector;
use crate::data::{self, BlobSpec, CsvScaling, LabeledDataset};
use crate::error::{Error, Result};
use crate::eval;
use crate::filter::{FilterRegistry, GuardConfig};
use crate::trainer::{train_user, TrainingConfig};
use crate::wire::{self, Client, ParamsDocument, ADDR_ENV, DEFAULT_ADDR};

#[derive(Debug, Parser)]
#[command(name = "docl", version, about = "Distributed one-class upload filter")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one user's autoencoder and write a .docl.json params file.
    Train(TrainArgs),
    /// Run the filter service.
    Serve(ServeArgs),
    /// Upload a params file to a running service.
    Register(RegisterArgs),
    /// Ask a running service to share or block one feature vector.
    Classify(ClassifyArgs),
    /// Train every class and report argmin classification metrics (JSON).
    Eval(ExperimentArgs),
    /// Sweep the Guard's alpha and write `alpha,block_acc,accept_rate`.
    SweepAlpha(SweepArgs),
    /// Build the adversary/victim block-accuracy matrix.
    Adversary(AdversaryArgs),
    /// Grow the registry and record per-class accuracy by size.
    Scale(ScaleArgs),
    /// Generate a synthetic blob dataset as feature CSV.
    GenBlobs(GenBlobsArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Header-less `label,f1,...` CSV.
    #[arg(long, conflicts_with = "idx")]
    pub csv: Option<PathBuf>,
    /// IDX images and labels files.
    #[arg(long, num_args = 2, value_names = ["IMAGES", "LABELS"])]
    pub idx: Option<Vec<PathBuf>>,
    /// Take CSV values verbatim (they must already be in [0, 1]).
    #[arg(long)]
    pub no_normalize: bool,
    /// Keep only the first N examples of each class.
    #[arg(long)]
    pub per_class: Option<usize>,
}

impl DataArgs {
    fn load(&self) -> Result<LabeledDataset> {
        let ds = match (&self.csv, &self.idx) {
            (Some(p), None) => {
                let scaling = if self.no_normalize {
                    CsvScaling::AsIs
                } else {
                    CsvScaling::MinMax
                };
                data::load_feature_csv_with(p, scaling)?
            }
            (None, Some(pair)) => data::load_idx(&pair[0], &pair[1])?,
            _ => return Err(Error::contract("give exactly one of --csv or --idx")),
        };
        Ok(match self.per_class {
            Some(n) => ds.take_per_class(n),
            None => ds,
        })
    }
}

#[derive(Debug, Args)]
pub struct TrainingArgs {
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 32)]
    pub latent_dim: usize,
    #[arg(long, default_value_t = 0.95)]
    pub rho: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub opt_eps: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl TrainingArgs {
    fn config(&self) -> TrainingConfig {
        TrainingConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            rho: self.rho,
            opt_eps: self.opt_eps,
            latent_dim: self.latent_dim,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Train on rows with this label (all rows when omitted).
    #[arg(long)]
    pub class: Option<usize>,
    #[arg(long)]
    pub user_id: String,
    #[command(flatten)]
    pub training: TrainingArgs,
    /// Output params file (.docl.json).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = ADDR_ENV, default_value = DEFAULT_ADDR)]
    pub addr: String,
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
    /// Params files to register before accepting connections.
    #[arg(long = "model")]
    pub models: Vec<PathBuf>,
    /// Unused; accepted so every subcommand takes a seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    #[arg(long, env = ADDR_ENV, default_value = DEFAULT_ADDR)]
    pub addr: String,
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long, env = ADDR_ENV, default_value = DEFAULT_ADDR)]
    pub addr: String,
    #[arg(long)]
    pub uploader: Option<String>,
    /// Comma-separated feature values in [0, 1].
    #[arg(long, allow_hyphen_values = true)]
    pub features: String,
    /// Write the decision as JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Held-out test data; when absent each class is split by --train-fraction.
    #[arg(long)]
    pub test_csv: Option<PathBuf>,
    #[arg(long, num_args = 2, value_names = ["IMAGES", "LABELS"])]
    pub test_idx: Option<Vec<PathBuf>>,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
}

impl SplitArgs {
    fn load(&self) -> Result<(LabeledDataset, LabeledDataset)> {
        let all = self.data.load()?;
        let scaling = if self.data.no_normalize {
            CsvScaling::AsIs
        } else {
            CsvScaling::MinMax
        };
        match (&self.test_csv, &self.test_idx) {
            (Some(p), None) => Ok((all, data::load_feature_csv_with(p, scaling)?)),
            (None, Some(pair)) => Ok((all, data::load_idx(&pair[0], &pair[1])?)),
            (None, None) => Ok(all.split_per_class(self.train_fraction)),
            _ => Err(Error::contract(
                "give at most one of --test-csv or --test-idx",
            )),
        }
    }
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Non-sensitive probes (feature CSV, taken as-is); uniform noise when absent.
    #[arg(long)]
    pub outliers_csv: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    pub n_outliers: usize,
    #[arg(long, default_value_t = 1.0)]
    pub alpha_min: f64,
    #[arg(long, default_value_t = 2.0)]
    pub alpha_max: f64,
    #[arg(long, default_value_t = 11)]
    pub steps: usize,
}

#[derive(Debug, Args)]
pub struct AdversaryArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
}

#[derive(Debug, Args)]
pub struct ScaleArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[arg(long, value_delimiter = ',', default_value = "1,3,5,7,9")]
    pub counts: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct GenBlobsArgs {
    #[arg(long, default_value_t = 4)]
    pub n_classes: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 200)]
    pub per_class: usize,
    #[arg(long, default_value_t = 0.8)]
    pub center_spread: f64,
    #[arg(long, default_value_t = 0.05)]
    pub noise_sigma: f64,
    /// Rank of each class's own variation subspace (0 = isotropic blobs).
    #[arg(long, default_value_t = 0)]
    pub style_rank: usize,
    /// Std-dev of the in-subspace variation, in units of `noise_sigma`.
    #[arg(long, default_value_t = 0.0)]
    pub style_gain: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::contract(e.to_string()))?;
    run(cli)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::Serve(a) => serve(a),
        Command::Register(a) => {
            let model = wire::read_params_file(&a.params)?;
            let id = Client::connect(&a.addr)?.register(ParamsDocument::from_model(&model))?;
            println!("registered {id}");
            Ok(())
        }
        Command::Classify(a) => classify(a),
        Command::Eval(a) => eval_cmd(a),
        Command::SweepAlpha(a) => sweep(a),
        Command::Adversary(a) => adversary(a),
        Command::Scale(a) => scale(a),
        Command::GenBlobs(a) => gen_blobs(a),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn write_json<T: serde::Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let mut out = output(path)?;
    serde_json::to_writer_pretty(&mut out, value)
        .map_err(|e| Error::format("json output", e.to_string()))?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let ds = a.data.load()?;
    let features = match a.class {
        Some(k) => ds.class_features(k),
        None => ds.features,
    };
    let model = train_user(&a.user_id, &features, &a.training.config())?;
    wire::write_params_file(&a.out, &model)?;
    eprintln!(
        "trained {} on {} vectors: mu={} sigma={}",
        model.user_id, model.training_size, model.profile.mu, model.profile.sigma
    );
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let guard = GuardConfig::new(a.alpha)?;
    let mut registry = FilterRegistry::new();
    for p in &a.models {
        registry.register_user(wire::read_params_file(p)?)?;
    }
    eprintln!("serving {} models on {}", registry.len(), a.addr);
    wire::serve(registry, guard, a.addr.as_str())
}

fn classify(a: ClassifyArgs) -> Result<()> {
    let features = a
        .features
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::contract(format!("`{s}` is not a number")))
        })
        .collect::<Result<Vec<_>>>()?;
    let decision = Client::connect(&a.addr)?.classify(a.uploader.as_deref(), &features)?;
    let msg = wire::Message::from(&decision);
    write_json(&msg, a.out.as_deref())
}

fn trained_registry(
    split: &SplitArgs,
    training: &TrainingArgs,
) -> Result<(FilterRegistry, LabeledDataset)> {
    let (train, test) = split.load()?;
    let models = eval::train_users(&data::split_per_user(&train), &training.config())?;
    Ok((eval::build_registry(models)?, test))
}

fn eval_cmd(a: ExperimentArgs) -> Result<()> {
    let (registry, test) = trained_registry(&a.split, &a.training)?;
    let report = eval::eval_classification(&registry, &test)?;
    eprintln!("overall accuracy {:.4}", report.overall_accuracy);
    write_json(&report, a.out.as_deref())
}

fn uniform_outliers(n: usize, dim: usize, seed: u64) -> Result<Vec<FeatureVector>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(7);
    (0..n)
        .map(|_| FeatureVector::new((0..dim).map(|_| rng.random::<f64>()).collect()))
        .collect()
}

fn sweep(a: SweepArgs) -> Result<()> {
    let e = &a.experiment;
    let (registry, test) = trained_registry(&e.split, &e.training)?;
    let outliers = match &a.outliers_csv {
        Some(p) => data::load_feature_csv_with(p, CsvScaling::AsIs)?.features,
        None => {
            let dim = registry.input_dim().ok_or(Error::EmptyRegistry)?;
            uniform_outliers(a.n_outliers, dim, e.training.seed)?
        }
    };
    let result = eval::run_alpha_sweep(
        &registry,
        (a.alpha_min, a.alpha_max),
        &test,
        &outliers,
        a.steps,
    )?;
    eprintln!("argmin accuracy {:.4}", result.argmin_accuracy);
    result.write_csv(output(e.out.as_deref())?)
}

fn adversary(a: AdversaryArgs) -> Result<()> {
    let e = &a.experiment;
    let (train, test) = e.split.load()?;
    let matrix = eval::run_adversary_matrix(
        &data::split_per_user(&train),
        &data::split_per_user(&test),
        &e.training.config(),
        &GuardConfig::new(a.alpha)?,
    )?;
    matrix.write_csv(output(e.out.as_deref())?)
}

fn scale(a: ScaleArgs) -> Result<()> {
    let e = &a.experiment;
    let (train, test) = e.split.load()?;
    let report = eval::run_scalability_sweep(
        &data::split_per_user(&train),
        &test,
        &a.counts,
        &e.training.config(),
    )?;
    if !report.prior_entries_unchanged {
        return Err(Error::contract(
            "registered entries changed while the registry grew",
        ));
    }
    report.write_csv(output(e.out.as_deref())?)
}

fn gen_blobs(a: GenBlobsArgs) -> Result<()> {
    let spec = BlobSpec {
        n_classes: a.n_classes,
        dim: a.dim,
        per_class_count: a.per_class,
        center_spread: a.center_spread,
        noise_sigma: a.noise_sigma,
        seed: a.seed,
        style_rank: a.style_rank,
        style_gain: a.style_gain,
    };
    let ds = data::gen_blobs(&spec)?;
    data::write_feature_csv(&ds, BufWriter::new(File::create(&a.out)?))
}
