//! Fusion of a latent pair into a 64-bit monogram.
//!
//! The outer product `u ⊗ v` (128 × 128) is flattened row-major and passed
//! through a single shared trunk `16384 → 1024 → 256 → 64` with tanh
//! activations. The real 64-vector is the *real code*; its sign pattern,
//! packed with bit `i` = entry `i` (row `i / 8`, column `i % 8`), is the
//! binary monogram. Training uses hard triplets and the hinge loss
//! `max(d(a,p) - d(a,n) + alpha, 0)` on real codes.

use std::collections::BTreeMap;
use std::fmt;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::latent::{LatentPair, TrainReport, LATENT_DIM};
use crate::nn::{flatten_grads, triplet_loss, Activation, AdamConfig, LayerGrads, Mlp, MlpOptimizer};
use crate::scalar::{all_finite, euclidean, Scalar};

pub const CODE_BITS: usize = 64;
pub const GRID_SIDE: usize = 8;
pub const TRUNK_HIDDEN: [usize; 2] = [1024, 256];
/// Forward passes over more rows than this are chunked.
const FORWARD_CHUNK: usize = 256;

/// Decision threshold applied to real codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Threshold {
    /// `bit = code > 0`.
    #[default]
    Zero,
    /// `bit = code > 0.5`.
    Half,
}

impl Threshold {
    pub fn value(self) -> f64 {
        match self {
            Threshold::Zero => 0.0,
            Threshold::Half => 0.5,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "0" | "zero" => Ok(Threshold::Zero),
            "0.5" | "half" => Ok(Threshold::Half),
            other => Err(Error::Invalid(format!("unknown threshold `{other}`"))),
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Threshold::Zero => "0",
            Threshold::Half => "0.5",
        })
    }
}

/// Binary 8×8 code plus the real vector it was thresholded from.
#[derive(Debug, Clone, PartialEq)]
pub struct Monogram<T> {
    pub bits: u64,
    pub real_code: Vec<T>,
}

impl<T: Scalar> Monogram<T> {
    pub fn from_real(real_code: Vec<T>, threshold: Threshold) -> Result<Self> {
        Ok(Self {
            bits: binarize(&real_code, threshold)?,
            real_code,
        })
    }

    pub fn bit(&self, row: usize, col: usize) -> bool {
        self.bits >> (row * GRID_SIDE + col) & 1 == 1
    }

    pub fn grid(&self) -> [[bool; GRID_SIDE]; GRID_SIDE] {
        let mut g = [[false; GRID_SIDE]; GRID_SIDE];
        for (r, row) in g.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell = self.bit(r, c);
            }
        }
        g
    }

    pub fn hex(&self) -> String {
        format!("{:016X}", self.bits)
    }
}

/// Pack the sign pattern of a 64-vector; bit `i` is set iff `code[i] > threshold`.
pub fn binarize<T: Scalar>(code: &[T], threshold: Threshold) -> Result<u64> {
    check_len(CODE_BITS, code.len())?;
    let t = T::of(threshold.value());
    Ok(code
        .iter()
        .enumerate()
        .fold(0u64, |acc, (i, &x)| if x > t { acc | (1 << i) } else { acc }))
}

/// `M[i][j] = u[i] * v[j]`.
pub fn outer_product<T: Scalar>(u: &[T], v: &[T]) -> Result<Array2<T>> {
    check_len(u.len(), v.len())?;
    Ok(Array2::from_shape_fn((u.len(), v.len()), |(i, j)| u[i] * v[j]))
}

/// Row-major flattening of `u ⊗ v` written into `out`.
fn flatten_outer<T: Scalar>(u: &[T], v: &[T], out: &mut [T]) {
    for (chunk, &ui) in out.chunks_exact_mut(v.len()).zip(u) {
        for (o, &vj) in chunk.iter_mut().zip(v) {
            *o = ui * vj;
        }
    }
}

/// One of the three logical triplet branches; all share the same trunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Anchor,
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionNetwork<T> {
    latent_dim: usize,
    trunk: Mlp<T>,
}

impl<T: Scalar> FusionNetwork<T> {
    /// Full-size network for 128-wide latents.
    pub fn new(seed: u64) -> Self {
        Self::with_shape(LATENT_DIM, &TRUNK_HIDDEN, seed).expect("standard shape is valid")
    }

    /// Custom latent width and hidden sizes; output stays 64-wide tanh.
    pub fn with_shape(latent_dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        if latent_dim == 0 || hidden.contains(&0) {
            return Err(Error::Invalid("fusion shape must be positive".into()));
        }
        let mut sizes = vec![latent_dim * latent_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(CODE_BITS);
        let acts = vec![Activation::Tanh; sizes.len() - 1];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            latent_dim,
            trunk: Mlp::glorot(&sizes, &acts, &mut rng)?,
        })
    }

    pub fn from_mlp(trunk: Mlp<T>) -> Result<Self> {
        let input = trunk.input_dim();
        let latent_dim = (input as f64).sqrt().round() as usize;
        if latent_dim * latent_dim != input || trunk.output_dim() != CODE_BITS {
            return Err(Error::Checkpoint(format!("not a fusion trunk: {:?}", trunk.dims())));
        }
        if trunk.activations().last() != Some(&Activation::Tanh) {
            return Err(Error::Checkpoint("fusion trunk must end in tanh".into()));
        }
        Ok(Self { latent_dim, trunk })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    /// The single parameter set behind every branch.
    pub fn trunk(&self) -> &Mlp<T> {
        &self.trunk
    }

    pub fn trunk_mut(&mut self) -> &mut Mlp<T> {
        &mut self.trunk
    }

    pub fn branch(&self, _which: Branch) -> &Mlp<T> {
        &self.trunk
    }

    /// `[16384, 1024, 256, 64]` for the standard shape.
    pub fn layer_sizes(&self) -> Vec<usize> {
        self.trunk.dims()
    }

    /// Flattened outer products, one row per latent pair.
    pub fn fused_inputs(&self, pairs: &[(&[T], &[T])]) -> Result<Array2<T>> {
        let width = self.latent_dim * self.latent_dim;
        let mut x = Array2::zeros((pairs.len(), width));
        for (mut row, &(u, v)) in x.rows_mut().into_iter().zip(pairs) {
            check_len(self.latent_dim, u.len())?;
            check_len(self.latent_dim, v.len())?;
            if !all_finite(u) || !all_finite(v) {
                return Err(Error::NonFinite("latent pair".into()));
            }
            flatten_outer(u, v, row.as_slice_mut().expect("standard layout"));
        }
        Ok(x)
    }

    /// Real codes for many latent pairs, one row each.
    pub fn real_codes(&self, pairs: &[(&[T], &[T])]) -> Result<Array2<T>> {
        let mut out = Array2::zeros((pairs.len(), CODE_BITS));
        for (start, chunk) in (0..).step_by(FORWARD_CHUNK).zip(pairs.chunks(FORWARD_CHUNK)) {
            let x = self.fused_inputs(chunk)?;
            let codes = self.trunk.forward_range_batch(x.view(), 0..self.trunk.layers.len())?;
            out.slice_mut(ndarray::s![start..start + chunk.len(), ..]).assign(&codes);
        }
        Ok(out)
    }

    pub fn branch_forward(&self, which: Branch, u: &[T], v: &[T]) -> Result<Vec<T>> {
        let x = self.fused_inputs(&[(u, v)])?;
        let m = self.branch(which);
        Ok(m.forward_range_batch(x.view(), 0..m.layers.len())?.into_raw_vec_and_offset().0)
    }
}

/// Outer product, flatten, trunk; returns the real code and its monogram.
pub fn fusion_forward<T: Scalar>(
    q: &FusionNetwork<T>,
    u: &[T],
    v: &[T],
    threshold: Threshold,
) -> Result<(Vec<T>, Monogram<T>)> {
    let code = q.branch_forward(Branch::Anchor, u, v)?;
    let mono = Monogram::from_real(code.clone(), threshold)?;
    Ok((code, mono))
}

pub fn generate_monogram<T: Scalar>(q: &FusionNetwork<T>, u: &[T], v: &[T], threshold: Threshold) -> Result<Monogram<T>> {
    Ok(fusion_forward(q, u, v, threshold)?.1)
}

/// Monograms for a batch of latent pairs.
pub fn generate_monograms<T: Scalar>(
    q: &FusionNetwork<T>,
    latents: &[LatentPair<T>],
    threshold: Threshold,
) -> Result<Vec<Monogram<T>>> {
    let pairs: Vec<(&[T], &[T])> = latents.iter().map(|l| (l.u.as_slice(), l.v.as_slice())).collect();
    let codes = q.real_codes(&pairs)?;
    codes
        .rows()
        .into_iter()
        .map(|r| Monogram::from_real(r.to_vec(), threshold))
        .collect()
}

// ---------------------------------------------------------------------------
// Hard triplet mining
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

/// For every anchor: the farthest same-label case and the closest
/// different-label case under Euclidean distance; ties go to the lowest index.
/// Anchors whose class has a single member are skipped.
pub fn mine_triplets<T: Scalar, S: AsRef<str>>(labels: &[S], points: &[&[T]]) -> Result<Vec<Triplet>> {
    check_len(labels.len(), points.len())?;
    let n = labels.len();
    let mut class_sizes: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        *class_sizes.entry(l.as_ref()).or_default() += 1;
    }
    if class_sizes.len() < 2 {
        return Err(Error::Invalid("triplet mining needs at least two classes".into()));
    }
    for (class, &size) in &class_sizes {
        if size < 2 {
            log::warn!("class `{class}` has a single case; it is never an anchor");
        }
    }
    let mut dist = vec![T::zero(); n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = euclidean(points[i], points[j]);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let mut out = Vec::with_capacity(n);
    for a in 0..n {
        let la = labels[a].as_ref();
        let mut pos: Option<(usize, T)> = None;
        let mut neg: Option<(usize, T)> = None;
        for j in 0..n {
            if j == a {
                continue;
            }
            let d = dist[a * n + j];
            if labels[j].as_ref() == la {
                if pos.is_none_or(|(_, best)| d > best) {
                    pos = Some((j, d));
                }
            } else if neg.is_none_or(|(_, best)| d < best) {
                neg = Some((j, d));
            }
        }
        if let (Some((p, _)), Some((q, _))) = (pos, neg) {
            out.push(Triplet {
                anchor: a,
                positive: p,
                negative: q,
            });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Space in which hard triplets are mined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MiningSpace {
    /// Current real codes, re-mined each epoch.
    #[default]
    RealCode,
    /// Concatenated `(u, v)` latents (fixed across epochs).
    Latent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionHyper {
    pub epochs: usize,
    pub lr: f64,
    pub alpha: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub mining: MiningSpace,
}

impl Default for FusionHyper {
    fn default() -> Self {
        Self {
            epochs: 150,
            lr: 1e-5,
            alpha: 1.0,
            batch_size: 32,
            seed: 0,
            mining: MiningSpace::RealCode,
        }
    }
}

impl FusionHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Invalid(format!("fusion lr {} must be > 0", self.lr)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Invalid(format!("fusion alpha {} must be >= 0", self.alpha)));
        }
        if self.batch_size == 0 {
            return Err(Error::Invalid("fusion batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Summed loss and per-row code gradients of the batch mean.
struct TripletBatch<T> {
    loss_sum: T,
    d_codes: Array2<T>,
}

fn triplet_batch_grads<T: Scalar>(
    codes: ArrayView2<'_, T>,
    row_of: &BTreeMap<usize, usize>,
    triplets: &[Triplet],
    alpha: T,
) -> Result<TripletBatch<T>> {
    let mut d_codes = Array2::zeros(codes.dim());
    let scale = T::one() / T::of(triplets.len() as f64);
    let mut loss_sum = T::zero();
    for t in triplets {
        let (ra, rp, rn) = (row_of[&t.anchor], row_of[&t.positive], row_of[&t.negative]);
        let a = codes.row(ra).to_vec();
        let p = codes.row(rp).to_vec();
        let n = codes.row(rn).to_vec();
        let l = triplet_loss(&a, &p, &n, alpha)?;
        loss_sum = loss_sum + l.loss;
        for (row, g) in [ra, rp, rn].into_iter().zip(&l.grads) {
            for (d, &gi) in d_codes.row_mut(row).iter_mut().zip(g) {
                *d = *d + gi * scale;
            }
        }
    }
    Ok(TripletBatch { loss_sum, d_codes })
}

/// Summed triplet loss of a batch and the trunk gradients of its mean.
fn batch_grads<T: Scalar>(
    q: &FusionNetwork<T>,
    latents: &[LatentPair<T>],
    triplets: &[Triplet],
    alpha: T,
) -> Result<(T, Vec<LayerGrads<T>>)> {
    let mut row_of = BTreeMap::new();
    for t in triplets {
        for i in [t.anchor, t.positive, t.negative] {
            let next = row_of.len();
            row_of.entry(i).or_insert(next);
        }
    }
    let mut order: Vec<(usize, usize)> = row_of.iter().map(|(&i, &r)| (r, i)).collect();
    order.sort_unstable();
    let pairs: Vec<(&[T], &[T])> = order
        .iter()
        .map(|&(_, i)| (latents[i].u.as_slice(), latents[i].v.as_slice()))
        .collect();
    let x = q.fused_inputs(&pairs)?;
    let cache = q.trunk.forward_batch(x.view())?;
    let batch = triplet_batch_grads(cache.output().view(), &row_of, triplets, alpha)?;
    let (grads, _) = q.trunk.backward_batch(&cache, batch.d_codes.view(), false)?;
    Ok((batch.loss_sum, grads))
}

fn concat_latents<T: Scalar>(latents: &[LatentPair<T>]) -> Vec<Vec<T>> {
    latents
        .iter()
        .map(|l| l.u.iter().chain(&l.v).copied().collect())
        .collect()
}

/// Train the shared trunk under the triplet hinge loss.
///
/// Triplets are re-mined at the start of every epoch (on the current real
/// codes by default), shuffled, and consumed in mini-batches; each batch's
/// loss is the mean over its triplets.
pub fn train_fusion<T: Scalar>(
    mut q: FusionNetwork<T>,
    latents: &[LatentPair<T>],
    hyper: &FusionHyper,
) -> Result<(FusionNetwork<T>, TrainReport)> {
    hyper.validate()?;
    let mut report = TrainReport::new(hyper.epochs, hyper.lr);
    if latents.is_empty() {
        return Err(Error::Empty("fusion training latents"));
    }
    let labels: Vec<&str> = latents.iter().map(|l| l.label.as_str()).collect();
    let pairs: Vec<(&[T], &[T])> = latents.iter().map(|l| (l.u.as_slice(), l.v.as_slice())).collect();
    let latent_points = match hyper.mining {
        MiningSpace::Latent => Some(concat_latents(latents)),
        MiningSpace::RealCode => None,
    };
    let alpha = T::of(hyper.alpha);
    let mut opt = MlpOptimizer::new(AdamConfig::with_lr(hyper.lr), &q.trunk);
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed ^ 0x5eed_f00d);
    let mut initial: Option<f64> = None;

    for epoch in 1..=hyper.epochs {
        let mut triplets = match &latent_points {
            Some(points) => {
                let refs: Vec<&[T]> = points.iter().map(Vec::as_slice).collect();
                mine_triplets(&labels, &refs)?
            }
            None => {
                let codes = q.real_codes(&pairs)?;
                let refs: Vec<&[T]> = codes.rows().into_iter().map(|r| r.to_slice().expect("contiguous")).collect();
                mine_triplets(&labels, &refs)?
            }
        };
        if triplets.is_empty() {
            return Err(Error::Invalid("no valid triplets".into()));
        }
        triplets.shuffle(&mut rng);
        let mut total = T::zero();
        for batch in triplets.chunks(hyper.batch_size) {
            let (loss_sum, grads) = batch_grads(&q, latents, batch, alpha)?;
            opt.step(&mut q.trunk, &grads)?;
            total = total + loss_sum;
        }
        let loss = total.as_f64() / triplets.len() as f64;
        let first = *initial.get_or_insert(loss);
        if !loss.is_finite() || !q.trunk.is_finite() || (first > 0.0 && loss > 1e3 * first) {
            return Err(Error::Divergence { epoch, loss });
        }
        log::debug!("fusion epoch {epoch}: triplet loss {loss:.6} over {} triplets", triplets.len());
        report.record(loss);
    }
    Ok((q, report))
}

/// Mean triplet loss of `triplets` under the current network, without
/// updating it.
pub fn triplet_objective<T: Scalar>(q: &FusionNetwork<T>, latents: &[LatentPair<T>], triplets: &[Triplet], alpha: f64) -> Result<T> {
    if triplets.is_empty() {
        return Err(Error::Empty("triplets"));
    }
    let pairs: Vec<(&[T], &[T])> = latents.iter().map(|l| (l.u.as_slice(), l.v.as_slice())).collect();
    let codes = q.real_codes(&pairs)?;
    let mut sum = T::zero();
    for t in triplets {
        let l = triplet_loss(
            codes.row(t.anchor).as_slice().expect("contiguous"),
            codes.row(t.positive).as_slice().expect("contiguous"),
            codes.row(t.negative).as_slice().expect("contiguous"),
            T::of(alpha),
        )?;
        sum = sum + l.loss;
    }
    Ok(sum / T::of(triplets.len() as f64))
}

/// Analytic gradient of [`triplet_objective`] with respect to the flattened
/// trunk parameters (weights then bias, layer by layer).
pub fn triplet_objective_grad<T: Scalar>(
    q: &FusionNetwork<T>,
    latents: &[LatentPair<T>],
    triplets: &[Triplet],
    alpha: f64,
) -> Result<Vec<T>> {
    if triplets.is_empty() {
        return Err(Error::Empty("triplets"));
    }
    let (_, grads) = batch_grads(q, latents, triplets, T::of(alpha))?;
    Ok(flatten_grads(&grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outer_product_small() {
        let m = outer_product(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(m, ndarray::arr2(&[[3.0, 4.0], [6.0, 8.0]]));
        let z = outer_product(&[0.0; 3], &[1.0, 2.0, 3.0]).unwrap();
        assert!(z.iter().all(|&x| x == 0.0));
        assert!(outer_product(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn binarize_bit_order() {
        assert_eq!(binarize(&[0.9f32; 64], Threshold::Zero).unwrap(), u64::MAX);
        assert_eq!(binarize(&[-0.9f32; 64], Threshold::Zero).unwrap(), 0);
        let alt: Vec<f32> = (0..64).map(|i| if i % 2 == 0 { 0.3 } else { -0.3 }).collect();
        assert_eq!(binarize(&alt, Threshold::Zero).unwrap(), 0x5555_5555_5555_5555);
        assert_eq!(binarize(&[0.0f64; 64], Threshold::Zero).unwrap(), 0);
        assert_eq!(binarize(&[0.4f64; 64], Threshold::Half).unwrap(), 0);
        assert!(binarize(&[0.1f64; 63], Threshold::Zero).is_err());
    }

    #[test]
    fn monogram_grid_layout() {
        let mut code = vec![-0.5f64; 64];
        code[8 * 2 + 5] = 0.5;
        let m = Monogram::from_real(code, Threshold::Zero).unwrap();
        assert_eq!(m.bits, 1 << 21);
        assert!(m.grid()[2][5]);
        assert_eq!(m.grid().iter().flatten().filter(|&&b| b).count(), 1);
        assert_eq!(m.hex(), "0000000000200000");
    }

    #[test]
    fn mining_tie_and_skip_rules() {
        // Equidistant positives: lowest index wins.
        let pts: Vec<Vec<f64>> = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![5.0, 5.0]];
        let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
        let t = mine_triplets(&["A", "A", "A", "B"], &refs).unwrap();
        assert_eq!(t[0], Triplet { anchor: 0, positive: 1, negative: 3 });
        // B has one member and is never an anchor.
        assert_eq!(t.len(), 3);
        assert!(t.iter().all(|t| t.anchor != 3));
        assert!(mine_triplets(&["A", "A"], &refs[..2]).is_err());
    }

    #[test]
    fn standard_trunk_shape() {
        let q = FusionNetwork::<f32>::new(0);
        assert_eq!(q.layer_sizes(), vec![16384, 1024, 256, 64]);
        assert_eq!(q.trunk().activations().last(), Some(&Activation::Tanh));
    }

    #[test]
    fn zero_latent_collapses_to_bias_path() {
        let q = FusionNetwork::<f64>::with_shape(4, &[6, 5], 2).unwrap();
        let zero = [0.0; 4];
        let a = fusion_forward(&q, &zero, &[0.3, 0.1, 0.9, 0.2], Threshold::Zero).unwrap();
        let b = fusion_forward(&q, &zero, &[0.7, 0.5, 0.1, 0.0], Threshold::Zero).unwrap();
        assert_eq!(a, b);
        assert!(a.0.iter().all(|x| x.abs() < 1.0));
    }

    #[test]
    fn non_finite_latent_rejected() {
        let q = FusionNetwork::<f64>::with_shape(2, &[3], 2).unwrap();
        assert!(fusion_forward(&q, &[f64::NAN, 0.0], &[0.0, 0.0], Threshold::Zero).is_err());
    }
}
