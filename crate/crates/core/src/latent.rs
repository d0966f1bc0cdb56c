//! Cross-modal ("hybrid") autoencoders and the latent pair they produce.
//!
//! `ImageToSeq` reads the image embedding and reconstructs the sequence
//! embedding; `SeqToImage` does the reverse. Both share the layer plan
//! `in → 512 → 256 → 128 → 256 → 512 → out`; the 128-wide bottleneck output is
//! the latent (`u` for image-to-sequence, `v` for sequence-to-image).

use std::collections::BTreeMap;
use std::io::Write;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{validate_token, Dataset, EmbeddingDump, Modality};
use crate::error::{check_len, Error, Result};
use crate::nn::{mse_loss_batch, Activation, AdamConfig, Mlp, MlpOptimizer, ModelKind};
use crate::scalar::{all_finite, cosine, Scalar};

pub const ENCODER_SIZES: [usize; 2] = [512, 256];
pub const LATENT_DIM: usize = 128;
pub const DECODER_SIZES: [usize; 2] = [256, 512];
/// Layers `0..ENCODER_LAYERS` form the encoder, the bottleneck included.
pub const ENCODER_LAYERS: usize = 3;
/// Training aborts when an epoch's loss exceeds this multiple of the initial loss.
pub const DIVERGENCE_FACTOR: f64 = 1e3;

pub const LATENT_U_TAG: &str = "latent-u";
pub const LATENT_V_TAG: &str = "latent-v";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    ImageToSeq,
    SeqToImage,
}

impl Direction {
    pub fn source(self) -> Modality {
        match self {
            Direction::ImageToSeq => Modality::Image,
            Direction::SeqToImage => Modality::Sequence,
        }
    }

    pub fn target(self) -> Modality {
        self.source().other()
    }

    pub fn model_kind(self) -> ModelKind {
        match self {
            Direction::ImageToSeq => ModelKind::ImageToSeq,
            Direction::SeqToImage => ModelKind::SeqToImage,
        }
    }

    /// Training defaults: 150 epochs at 1e-5 for image→sequence, 50 epochs at
    /// 1e-4 for sequence→image.
    pub fn default_hyper(self) -> AeHyper {
        match self {
            Direction::ImageToSeq => AeHyper {
                epochs: 150,
                lr: 1e-5,
                ..AeHyper::default()
            },
            Direction::SeqToImage => AeHyper {
                epochs: 50,
                lr: 1e-4,
                ..AeHyper::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AeHyper {
    pub epochs: usize,
    pub lr: f64,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl Default for AeHyper {
    fn default() -> Self {
        Self {
            epochs: 150,
            lr: 1e-5,
            batch_size: None,
            seed: 0,
        }
    }
}

impl AeHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Invalid(format!("autoencoder lr {} must be > 0", self.lr)));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Invalid("autoencoder batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-epoch loss curve of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub losses: Vec<f64>,
    pub epochs: usize,
    pub lr: f64,
    pub final_loss: Option<f64>,
}

impl TrainReport {
    pub(crate) fn new(epochs: usize, lr: f64) -> Self {
        Self {
            losses: Vec::with_capacity(epochs),
            epochs,
            lr,
            final_loss: None,
        }
    }

    pub(crate) fn record(&mut self, loss: f64) {
        self.losses.push(loss);
        self.final_loss = Some(loss);
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,loss")?;
        for (i, l) in self.losses.iter().enumerate() {
            writeln!(w, "{},{l}", i + 1)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridAutoencoder<T> {
    pub direction: Direction,
    pub net: Mlp<T>,
}

impl<T: Scalar> HybridAutoencoder<T> {
    pub fn new(direction: Direction, input_dim: usize, output_dim: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::Invalid("autoencoder dimensions must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes = [
            input_dim,
            ENCODER_SIZES[0],
            ENCODER_SIZES[1],
            LATENT_DIM,
            DECODER_SIZES[0],
            DECODER_SIZES[1],
            output_dim,
        ];
        let mut acts = [Activation::Relu; 6];
        acts[5] = Activation::Linear;
        Ok(Self {
            direction,
            net: Mlp::glorot(&sizes, &acts, &mut rng)?,
        })
    }

    /// Rebuild from a checkpointed stack, checking the layer plan.
    pub fn from_mlp(direction: Direction, net: Mlp<T>) -> Result<Self> {
        let dims = net.dims();
        let plan_ok = dims.len() == 7
            && dims[1..6] == [ENCODER_SIZES[0], ENCODER_SIZES[1], LATENT_DIM, DECODER_SIZES[0], DECODER_SIZES[1]];
        if !plan_ok {
            return Err(Error::Checkpoint(format!("not an autoencoder layer plan: {dims:?}")));
        }
        Ok(Self { direction, net })
    }

    /// `[in, 512, 256, 128, 256, 512, out]`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        self.net.dims()
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.net.output_dim()
    }

    /// Full reconstruction of one vector.
    pub fn reconstruct(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(self.reconstruct_batch(row(x)?.view())?.into_raw_vec_and_offset().0)
    }

    pub fn reconstruct_batch(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.net.forward_range_batch(x, 0..self.net.layers.len())
    }

    pub fn encode_batch(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.net.forward_range_batch(x, 0..ENCODER_LAYERS)
    }

    pub fn decode_batch(&self, z: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.net.forward_range_batch(z, ENCODER_LAYERS..self.net.layers.len())
    }

    fn encode_checked(&self, expected: Direction, x: &[T]) -> Result<Vec<T>> {
        if self.direction != expected {
            return Err(Error::Invalid(format!(
                "expected a {expected:?} autoencoder, got {:?}",
                self.direction
            )));
        }
        if !all_finite(x) {
            return Err(Error::NonFinite("latent encoder input".into()));
        }
        Ok(self.encode_batch(row(x)?.view())?.into_raw_vec_and_offset().0)
    }
}

fn row<T: Scalar>(x: &[T]) -> Result<Array2<T>> {
    Array2::from_shape_vec((1, x.len()), x.to_vec()).map_err(|e| Error::Invalid(e.to_string()))
}

fn stack<T: Scalar>(rows: &[&[T]]) -> Result<Array2<T>> {
    let width = rows.first().map_or(0, |r| r.len());
    let mut out = Array2::zeros((rows.len(), width));
    for (mut dst, src) in out.rows_mut().into_iter().zip(rows) {
        check_len(width, src.len())?;
        dst.assign(&ndarray::ArrayView1::from(*src));
    }
    Ok(out)
}

/// `u = E_I(f)` from an image-to-sequence model.
pub fn encode_image_latent<T: Scalar>(model: &HybridAutoencoder<T>, f: &[T]) -> Result<Vec<T>> {
    model.encode_checked(Direction::ImageToSeq, f)
}

/// `v = E_S(g)` from a sequence-to-image model.
pub fn encode_seq_latent<T: Scalar>(model: &HybridAutoencoder<T>, g: &[T]) -> Result<Vec<T>> {
    model.encode_checked(Direction::SeqToImage, g)
}

/// Train one autoencoder on `(f, g)` pairs with Adam and mean squared error.
pub fn train_hybrid<T: Scalar>(
    direction: Direction,
    pairs: &[(&[T], &[T])],
    hyper: &AeHyper,
) -> Result<(HybridAutoencoder<T>, TrainReport)> {
    hyper.validate()?;
    if pairs.is_empty() {
        return Err(Error::Empty("autoencoder training pairs"));
    }
    let (sources, targets): (Vec<&[T]>, Vec<&[T]>) = pairs
        .iter()
        .map(|&(f, g)| match direction {
            Direction::ImageToSeq => (f, g),
            Direction::SeqToImage => (g, f),
        })
        .unzip();
    let x = stack(&sources)?;
    let y = stack(&targets)?;
    if !x.iter().chain(y.iter()).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("autoencoder training data".into()));
    }
    let mut model = HybridAutoencoder::new(direction, x.ncols(), y.ncols(), hyper.seed)?;
    let mut report = TrainReport::new(hyper.epochs, hyper.lr);
    if hyper.epochs == 0 {
        return Ok((model, report));
    }

    let n = x.nrows();
    let batch = hyper.batch_size.unwrap_or(n).min(n);
    let mut opt = MlpOptimizer::new(AdamConfig::with_lr(hyper.lr), &model.net);
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed ^ 0x5eed_ae00);
    let mut order: Vec<usize> = (0..n).collect();
    let initial = mse_loss_batch(model.reconstruct_batch(x.view())?.view(), y.view())?
        .0
        .as_f64();

    for epoch in 1..=hyper.epochs {
        if batch < n {
            order.shuffle(&mut rng);
        }
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            let (xb, yb) = if batch < n {
                (x.select(Axis(0), chunk), y.select(Axis(0), chunk))
            } else {
                (x.clone(), y.clone())
            };
            let cache = model.net.forward_batch(xb.view())?;
            let (loss, d_out) = mse_loss_batch(cache.output().view(), yb.view())?;
            let (grads, _) = model.net.backward_batch(&cache, d_out.view(), false)?;
            opt.step(&mut model.net, &grads)?;
            total += loss.as_f64() * chunk.len() as f64;
        }
        let loss = total / n as f64;
        if !loss.is_finite() || (initial > 0.0 && loss > DIVERGENCE_FACTOR * initial) {
            return Err(Error::Divergence { epoch, loss });
        }
        log::debug!("{direction:?} epoch {epoch}: mse {loss:.6}");
        report.record(loss);
    }
    Ok((model, report))
}

/// Train on the (already scaled) cases of a dataset.
pub fn train_hybrid_on<T: Scalar>(
    dataset: &Dataset<T>,
    direction: Direction,
    hyper: &AeHyper,
) -> Result<(HybridAutoencoder<T>, TrainReport)> {
    let pairs: Vec<(&[T], &[T])> = dataset
        .cases()
        .iter()
        .map(|c| (c.image.values.as_slice(), c.sequence.values.as_slice()))
        .collect();
    train_hybrid(direction, &pairs, hyper)
}

/// The latent pair of one case: `u` from the image-to-sequence encoder, `v`
/// from the sequence-to-image encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPair<T> {
    pub case_id: String,
    pub label: String,
    pub u: Vec<T>,
    pub v: Vec<T>,
}

/// Encode every case of a scaled dataset with both encoders.
pub fn encode_dataset<T: Scalar>(
    image_to_seq: &HybridAutoencoder<T>,
    seq_to_image: &HybridAutoencoder<T>,
    dataset: &Dataset<T>,
) -> Result<Vec<LatentPair<T>>> {
    if image_to_seq.direction != Direction::ImageToSeq || seq_to_image.direction != Direction::SeqToImage {
        return Err(Error::Invalid("encode_dataset: autoencoder directions swapped".into()));
    }
    if dataset.is_empty() {
        return Ok(Vec::new());
    }
    let f = stack(&dataset.vectors(Modality::Image))?;
    let g = stack(&dataset.vectors(Modality::Sequence))?;
    let u = image_to_seq.encode_batch(f.view())?;
    let v = seq_to_image.encode_batch(g.view())?;
    Ok(dataset
        .cases()
        .iter()
        .zip(u.rows())
        .zip(v.rows())
        .map(|((c, u), v)| LatentPair {
            case_id: c.case_id.clone(),
            label: c.label.clone(),
            u: u.to_vec(),
            v: v.to_vec(),
        })
        .collect())
}

pub fn latents_to_dump<T: Scalar>(latents: &[LatentPair<T>]) -> Result<EmbeddingDump<T>> {
    let width = latents.first().map_or(LATENT_DIM, |l| l.u.len());
    let mut dump = EmbeddingDump::new(BTreeMap::from([
        (LATENT_U_TAG.to_owned(), width),
        (LATENT_V_TAG.to_owned(), latents.first().map_or(LATENT_DIM, |l| l.v.len())),
    ]));
    for l in latents {
        dump.push(&l.case_id, &l.label, LATENT_U_TAG, l.u.clone())?;
        dump.push(&l.case_id, &l.label, LATENT_V_TAG, l.v.clone())?;
    }
    Ok(dump)
}

/// Pair `latent-u`/`latent-v` rows back into [`LatentPair`]s, in first-seen order.
pub fn latents_from_dump<T: Scalar>(dump: EmbeddingDump<T>) -> Result<Vec<LatentPair<T>>> {
    let mut order = Vec::new();
    let mut parts: BTreeMap<String, (String, Option<Vec<T>>, Option<Vec<T>>)> = BTreeMap::new();
    for row in dump.rows {
        validate_token(&row.case_id, "case_id")?;
        let e = parts.entry(row.case_id.clone()).or_insert_with(|| {
            order.push(row.case_id.clone());
            (row.label.clone(), None, None)
        });
        if e.0 != row.label {
            return Err(Error::Ingestion(format!("case `{}` has conflicting labels", row.case_id)));
        }
        match row.tag.as_str() {
            LATENT_U_TAG => e.1 = Some(row.values),
            LATENT_V_TAG => e.2 = Some(row.values),
            other => return Err(Error::Ingestion(format!("unexpected tag `{other}` in latent dump"))),
        }
    }
    order
        .into_iter()
        .map(|id| {
            let (label, u, v) = parts.remove(&id).expect("recorded");
            match (u, v) {
                (Some(u), Some(v)) => Ok(LatentPair { case_id: id, label, u, v }),
                _ => Err(Error::Ingestion(format!("case `{id}` lacks one latent"))),
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Reconstruction quality
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionRow {
    pub case_id: String,
    /// Modality being reconstructed.
    pub modality: Modality,
    /// `None` when either vector has zero norm.
    pub cosine: Option<f64>,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionSummary {
    pub modality: Modality,
    pub median_cosine: Option<f64>,
    pub mean_mse: f64,
    pub flagged: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionReport {
    pub rows: Vec<ReconstructionRow>,
    pub summaries: Vec<ReconstructionSummary>,
}

impl ReconstructionReport {
    pub fn summary(&self, modality: Modality) -> Option<&ReconstructionSummary> {
        self.summaries.iter().find(|s| s.modality == modality)
    }

    /// `case_id,modality,cosine,mse`; flagged cosines are written as `NA`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "case_id,modality,cosine,mse")?;
        for r in &self.rows {
            match r.cosine {
                Some(c) => writeln!(w, "{},{},{c:.6},{:.6}", r.case_id, r.modality, r.mse)?,
                None => writeln!(w, "{},{},NA,{:.6}", r.case_id, r.modality, r.mse)?,
            }
        }
        Ok(())
    }
}

pub(crate) fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    })
}

/// Per-case cosine and MSE between each embedding and its cross-modal
/// reconstruction: `g` vs `A_I(f)` and `f` vs `A_S(g)`.
pub fn reconstruction_report<T: Scalar>(
    image_to_seq: &HybridAutoencoder<T>,
    seq_to_image: &HybridAutoencoder<T>,
    test: &Dataset<T>,
) -> Result<ReconstructionReport> {
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for model in [image_to_seq, seq_to_image] {
        let src = model.direction.source();
        let dst = model.direction.target();
        let x = stack(&test.vectors(src))?;
        let recon = if test.is_empty() {
            Array2::zeros((0, model.output_dim()))
        } else {
            model.reconstruct_batch(x.view())?
        };
        let mut cosines = Vec::new();
        let mut mse_sum = 0.0;
        let mut flagged = 0;
        for (case, r) in test.cases().iter().zip(recon.rows()) {
            let target = &case.embedding(dst).values;
            let r = r.to_vec();
            check_len(target.len(), r.len())?;
            let cos = cosine(target, &r).map(|c| c.as_f64());
            let mse = target
                .iter()
                .zip(&r)
                .map(|(&a, &b)| (a - b).as_f64().powi(2))
                .sum::<f64>()
                / target.len().max(1) as f64;
            match cos {
                Some(c) => cosines.push(c),
                None => {
                    flagged += 1;
                    log::warn!("case `{}`: zero-norm vector, cosine undefined", case.case_id);
                }
            }
            mse_sum += mse;
            rows.push(ReconstructionRow {
                case_id: case.case_id.clone(),
                modality: dst,
                cosine: cos,
                mse,
            });
        }
        summaries.push(ReconstructionSummary {
            modality: dst,
            median_cosine: median(&mut cosines),
            mean_mse: if test.is_empty() { 0.0 } else { mse_sum / test.len() as f64 },
            flagged,
        });
    }
    Ok(ReconstructionReport { rows, summaries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{CaseRecord, Embedding, Schema};

    #[test]
    fn architecture_matches_plan() {
        let ae = HybridAutoencoder::<f32>::new(Direction::ImageToSeq, 768, 768, 0).unwrap();
        assert_eq!(ae.layer_sizes(), vec![768, 512, 256, 128, 256, 512, 768]);
        let acts = ae.net.activations();
        assert_eq!(acts[..5], [Activation::Relu; 5]);
        assert_eq!(acts[5], Activation::Linear);
    }

    #[test]
    fn encoder_is_prefix_of_full_pass() {
        let ae = HybridAutoencoder::<f64>::new(Direction::ImageToSeq, 10, 6, 3).unwrap();
        let f: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        let u = encode_image_latent(&ae, &f).unwrap();
        assert_eq!(u.len(), LATENT_DIM);
        assert_eq!(u, encode_image_latent(&ae, &f).unwrap());
        let via_layers = ae.net.forward_range(&f, 0..ENCODER_LAYERS).unwrap();
        for (a, b) in u.iter().zip(&via_layers) {
            assert!((a - b).abs() < 1e-12);
        }
        let z = Array2::from_shape_vec((1, LATENT_DIM), u).unwrap();
        let full = ae.reconstruct(&f).unwrap();
        let dec = ae.decode_batch(z.view()).unwrap();
        assert_eq!(dec.row(0).to_vec(), full);
    }

    #[test]
    fn wrong_direction_rejected() {
        let ae = HybridAutoencoder::<f64>::new(Direction::SeqToImage, 4, 4, 0).unwrap();
        assert!(encode_image_latent(&ae, &[0.0; 4]).is_err());
        assert_eq!(encode_seq_latent(&ae, &[0.5; 4]).unwrap().len(), 128);
    }

    #[test]
    fn zero_epochs_returns_initialisation() {
        let f = [0.1f32, 0.2];
        let g = [0.3f32];
        let hyper = AeHyper {
            epochs: 0,
            seed: 5,
            ..AeHyper::default()
        };
        let (m, r) = train_hybrid(Direction::ImageToSeq, &[(&f[..], &g[..])], &hyper).unwrap();
        assert_eq!(m, HybridAutoencoder::new(Direction::ImageToSeq, 2, 1, 5).unwrap());
        assert!(r.losses.is_empty());
        assert_eq!(r.final_loss, None);
    }

    #[test]
    fn empty_pairs_rejected() {
        let r = train_hybrid::<f32>(Direction::ImageToSeq, &[], &AeHyper::default());
        assert!(matches!(r, Err(Error::Empty(_))));
    }

    #[test]
    fn huge_learning_rate_reports_divergence() {
        let f: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 / 8.0; 4]).collect();
        let g: Vec<Vec<f64>> = (0..8).map(|i| vec![1.0 - i as f64 / 8.0; 3]).collect();
        let pairs: Vec<(&[f64], &[f64])> = f.iter().zip(&g).map(|(a, b)| (a.as_slice(), b.as_slice())).collect();
        let hyper = AeHyper {
            epochs: 50,
            lr: 1e6,
            ..AeHyper::default()
        };
        match train_hybrid(Direction::ImageToSeq, &pairs, &hyper) {
            Err(Error::Divergence { epoch, .. }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {:?}", other.map(|(_, r)| r)),
        }
    }

    fn tiny_dataset(rows: &[([f64; 2], [f64; 2])]) -> Dataset<f64> {
        let cases = rows
            .iter()
            .enumerate()
            .map(|(i, (f, g))| CaseRecord {
                case_id: format!("c{i}"),
                label: "A".into(),
                image: Embedding::new(Modality::Image, f.to_vec()).unwrap(),
                sequence: Embedding::new(Modality::Sequence, g.to_vec()).unwrap(),
            })
            .collect();
        Dataset::new(
            Schema {
                image_dim: 2,
                sequence_dim: 2,
            },
            cases,
        )
        .unwrap()
    }

    #[test]
    fn reconstruction_report_flags_zero_norm() {
        let ds = tiny_dataset(&[([0.2, 0.4], [0.0, 0.0]), ([0.9, 0.1], [0.5, 0.5])]);
        let a = HybridAutoencoder::new(Direction::ImageToSeq, 2, 2, 1).unwrap();
        let b = HybridAutoencoder::new(Direction::SeqToImage, 2, 2, 2).unwrap();
        let rep = reconstruction_report(&a, &b, &ds).unwrap();
        assert_eq!(rep.rows.len(), 4);
        let seq = rep.summary(Modality::Sequence).unwrap();
        assert!(seq.flagged >= 1);
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("case_id,modality,cosine,mse\n"));
        assert!(text.contains("c0,sequence,NA,"));
    }

    #[test]
    fn median_handles_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }
}
