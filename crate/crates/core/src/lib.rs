//! Fuses two per-case embedding modalities into a 64-bit binary code via a
//! pair of cross-modal autoencoders and a triplet-trained fusion network, and
//! searches archives of such codes by Hamming distance.
//!
//! Pipeline:
//!
//! 1. [`datamodel`]: ingest or synthesise cases, min-max scale, assign folds.
//! 2. [`latent`]: train image→sequence and sequence→image autoencoders and
//!    take their 128-wide bottlenecks as the latent pair `(u, v)`.
//! 3. [`monogram`]: flatten `u ⊗ v` through a 16384→1024→256→64 tanh trunk;
//!    the sign pattern of the output is the 8×8 monogram.
//! 4. [`archive`]: index monograms, search top-k, majority-vote.
//! 5. [`eval`]: leave-one-out metrics, cross-validation, baselines, XOR
//!    dissimilarity, PCA export.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the storage type used by the command-line tool.

pub mod archive;
pub mod datamodel;
pub mod error;
pub mod eval;
pub mod latent;
pub mod monogram;
pub mod nn;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Dataset32 = datamodel::Dataset<f32>;
pub type Dataset64 = datamodel::Dataset<f64>;
pub type Autoencoder32 = latent::HybridAutoencoder<f32>;
pub type Autoencoder64 = latent::HybridAutoencoder<f64>;
pub type FusionNetwork32 = monogram::FusionNetwork<f32>;
pub type FusionNetwork64 = monogram::FusionNetwork<f64>;
pub type Monogram32 = monogram::Monogram<f32>;
pub type Archive32 = archive::Archive<f32>;
pub type Archive64 = archive::Archive<f64>;
