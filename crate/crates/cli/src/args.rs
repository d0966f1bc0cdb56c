use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "monogram", version, about = "Train, index and evaluate multimodal binary monograms")]
pub struct Cli {
    /// TOML run configuration; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Overwrite existing output files.
    #[arg(long, global = true)]
    pub force: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labelled synthetic two-modality dataset.
    Synth(SynthArgs),
    /// Fit the scaler and both cross-modal autoencoders on a dataset.
    TrainAe(TrainAeArgs),
    /// Encode a dataset into latent pairs with trained autoencoders.
    Encode(EncodeArgs),
    /// Train the fusion network on latent pairs.
    TrainFusion(TrainFusionArgs),
    /// Generate monograms for latent pairs and store them as an archive.
    Index(IndexArgs),
    /// Rank archive entries against a query.
    Search(SearchArgs),
    /// Full k-fold cross-validation with every report table.
    Evaluate(EvaluateArgs),
    /// XOR dissimilarity, PCA and reconstruction reports.
    #[command(subcommand)]
    Report(ReportCommand),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    #[arg(long, default_value_t = 64)]
    pub image_dim: usize,
    #[arg(long, default_value_t = 64)]
    pub sequence_dim: usize,
    #[arg(long, default_value_t = 0.5)]
    pub image_signal: f64,
    #[arg(long, default_value_t = 0.5)]
    pub sequence_signal: f64,
    #[arg(long, default_value_t = 0.3)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Autoencoder hyperparameter overrides.
#[derive(Debug, Args, Default)]
pub struct AeOverrides {
    #[arg(long)]
    pub ae_image_epochs: Option<usize>,
    #[arg(long)]
    pub ae_image_lr: Option<f64>,
    #[arg(long)]
    pub ae_sequence_epochs: Option<usize>,
    #[arg(long)]
    pub ae_sequence_lr: Option<f64>,
}

/// Fusion hyperparameter overrides.
#[derive(Debug, Args, Default)]
pub struct FusionOverrides {
    #[arg(long)]
    pub fusion_epochs: Option<usize>,
    #[arg(long)]
    pub fusion_lr: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainAeArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub ae: AeOverrides,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Directory written by `train-ae`.
    #[arg(long)]
    pub models: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainFusionArgs {
    /// Latent dump written by `encode`.
    #[arg(long)]
    pub latents: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub fusion: FusionOverrides,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[arg(long)]
    pub latents: PathBuf,
    /// Fusion checkpoint written by `train-fusion`.
    #[arg(long)]
    pub fusion: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// `0` or `0.5`.
    #[arg(long)]
    pub threshold: Option<String>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub archive: PathBuf,
    /// Query with an archived case.
    #[arg(long, conflicts_with = "query")]
    pub case_id: Option<String>,
    /// Embedding dump holding one case's image and sequence rows.
    #[arg(long, requires_all = ["models", "fusion"])]
    pub query: Option<PathBuf>,
    /// Directory written by `train-ae` (for `--query`).
    #[arg(long)]
    pub models: Option<PathBuf>,
    /// Fusion checkpoint (for `--query`).
    #[arg(long)]
    pub fusion: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long)]
    pub exclude_self: bool,
    /// hamming, euclidean or cosine.
    #[arg(long, default_value = "hamming")]
    pub metric: String,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub fold_seed: Option<u64>,
    #[arg(long)]
    pub threshold: Option<String>,
    #[command(flatten)]
    pub ae: AeOverrides,
    #[command(flatten)]
    pub fusion: FusionOverrides,
}

#[derive(Debug, Subcommand)]
pub enum ReportCommand {
    /// Pairwise XOR dissimilarity matrix and per-bit change grids.
    Xor(XorArgs),
    /// PCA projection of one tag of an embedding dump.
    Pca(PcaArgs),
    /// Cross-modal reconstruction cosine and MSE per case.
    Reconstruction(ReconstructionArgs),
}

#[derive(Debug, Args)]
pub struct XorArgs {
    #[arg(long)]
    pub archive: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Cases sampled per class.
    #[arg(long, default_value_t = 19)]
    pub per_class: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct PcaArgs {
    /// Any embedding dump (dataset, latents).
    #[arg(long)]
    pub input: PathBuf,
    /// Row tag to project, e.g. `image` or `latent-u`.
    #[arg(long)]
    pub tag: String,
    #[arg(long, default_value_t = 64)]
    pub components: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReconstructionArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub models: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}
