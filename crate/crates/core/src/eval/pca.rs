use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::datamodel::EmbeddingDump;
use crate::error::{check_len, Error, Result};
use crate::Scalar;

pub const PCA_TAG: &str = "pca";

/// Principal-component projection of a sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca<T> {
    pub mean: Vec<T>,
    /// Unit-length principal axes, by descending variance.
    pub components: Vec<Vec<T>>,
    /// Eigenvalues of the sample covariance for the kept components.
    pub explained_variance: Vec<f64>,
    pub explained_ratio: Vec<f64>,
    /// Trace of the sample covariance.
    pub total_variance: f64,
    /// One row per input sample.
    pub projected: Vec<Vec<T>>,
}

/// Mean-centred projection onto the top `n_components` eigenvectors of the
/// sample covariance (`n - 1` normalisation). Each axis is signed so that
/// its largest-magnitude coordinate is positive. Directions with
/// numerically zero variance are dropped with a warning.
pub fn pca_project<T: Scalar>(vectors: &[&[T]], n_components: usize) -> Result<Pca<T>> {
    if n_components == 0 {
        return Err(Error::Invalid("n_components must be >= 1".into()));
    }
    let n = vectors.len();
    let d = vectors.first().map_or(0, |v| v.len());
    if n < n_components || n < 2 {
        return Err(Error::Invalid(format!("PCA with {n_components} components needs at least that many samples, got {n}")));
    }
    if d < n_components {
        return Err(Error::Invalid(format!("PCA with {n_components} components on {d}-dimensional vectors")));
    }
    for v in vectors {
        check_len(d, v.len())?;
    }
    let mut x = DMatrix::<f64>::from_fn(n, d, |i, j| vectors[i][j].as_f64());
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("PCA input".into()));
    }
    let mean: Vec<f64> = (0..d).map(|j| x.column(j).mean()).collect();
    for (j, m) in mean.iter().enumerate() {
        x.column_mut(j).add_scalar_mut(-m);
    }
    let cov = (x.transpose() * &x) / (n as f64 - 1.0);
    let total_variance = cov.trace();
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let tol = eig.eigenvalues.amax().max(f64::MIN_POSITIVE) * 1e-12 * d as f64;
    let kept: Vec<usize> = order
        .into_iter()
        .take(n_components)
        .filter(|&i| eig.eigenvalues[i] > tol)
        .collect();
    if kept.len() < n_components {
        log::warn!("data has rank {} below the requested {n_components} components", kept.len());
    }

    let mut components = Vec::with_capacity(kept.len());
    let mut explained_variance = Vec::with_capacity(kept.len());
    for &i in &kept {
        let mut axis: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        let pivot = axis
            .iter()
            .copied()
            .fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if pivot < 0.0 {
            axis.iter_mut().for_each(|v| *v = -*v);
        }
        components.push(axis);
        explained_variance.push(eig.eigenvalues[i]);
    }
    let projected = (0..n)
        .map(|r| {
            components
                .iter()
                .map(|axis| T::of(x.row(r).iter().zip(axis).map(|(a, b)| a * b).sum()))
                .collect()
        })
        .collect();
    let explained_ratio = explained_variance
        .iter()
        .map(|v| if total_variance > 0.0 { v / total_variance } else { 0.0 })
        .collect();
    Ok(Pca {
        mean: mean.into_iter().map(T::of).collect(),
        components: components
            .into_iter()
            .map(|c| c.into_iter().map(T::of).collect())
            .collect(),
        explained_variance,
        explained_ratio,
        total_variance,
        projected,
    })
}

/// Projected rows in the embedding-dump format under the `pca` tag.
pub fn pca_to_dump<T: Scalar, S: AsRef<str>>(ids: &[S], labels: &[S], pca: &Pca<T>) -> Result<EmbeddingDump<T>> {
    check_len(pca.projected.len(), ids.len())?;
    check_len(pca.projected.len(), labels.len())?;
    let width = pca.components.len();
    let mut dump = EmbeddingDump::new(BTreeMap::from([(PCA_TAG.to_owned(), width)]));
    for ((id, label), row) in ids.iter().zip(labels).zip(&pca.projected) {
        dump.push(id.as_ref(), label.as_ref(), PCA_TAG, row.clone())?;
    }
    Ok(dump)
}
