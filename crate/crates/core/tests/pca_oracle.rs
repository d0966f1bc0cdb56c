use monogram_core::eval::pca_project;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Cyclic Jacobi eigenvalues of a symmetric matrix, descending.
fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

fn sample(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scales: Vec<f64> = (0..d).map(|j| 1.0 / (1.0 + j as f64)).collect();
    let mix: Vec<Vec<f64>> = (0..d).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    (0..n)
        .map(|_| {
            let z: Vec<f64> = scales.iter().map(|s| s * rng.random_range(-1.0..1.0)).collect();
            (0..d).map(|j| 3.0 + (0..d).map(|k| mix[j][k] * z[k]).sum::<f64>()).collect()
        })
        .collect()
}

fn covariance(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, d) = (x.len(), x[0].len());
    let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    (0..d)
        .map(|a| {
            (0..d)
                .map(|b| x.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / (n as f64 - 1.0))
                .collect()
        })
        .collect()
}

#[test]
fn eigenvalues_match_jacobi_oracle() {
    let x = sample(40, 8, 3);
    let refs: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
    let pca = pca_project(&refs, 8).unwrap();
    let oracle = jacobi_eigenvalues(covariance(&x));
    for (got, want) in pca.explained_variance.iter().zip(&oracle) {
        assert!((got - want).abs() < 1e-9 * want.abs().max(1.0), "{got} vs {want}");
    }
}

#[test]
fn discarded_variance_equals_reconstruction_error() {
    let x = sample(50, 10, 5);
    let refs: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
    let oracle = jacobi_eigenvalues(covariance(&x));
    for k in [1, 3, 6] {
        let pca = pca_project(&refs, k).unwrap();
        let mut err = 0.0;
        for (row, proj) in x.iter().zip(&pca.projected) {
            for j in 0..row.len() {
                let recon = pca.mean[j] + (0..k).map(|c| proj[c] * pca.components[c][j]).sum::<f64>();
                err += (row[j] - recon).powi(2);
            }
        }
        let err = err / (x.len() as f64 - 1.0);
        let discarded: f64 = oracle[k..].iter().sum();
        assert!((err - discarded).abs() < 1e-9, "k={k}: {err} vs {discarded}");
    }
}

#[test]
fn components_are_orthonormal() {
    let x = sample(80, 70, 9);
    let refs: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
    let pca = pca_project(&refs, 64).unwrap();
    assert_eq!(pca.components.len(), 64);
    for (i, a) in pca.components.iter().enumerate() {
        for (j, b) in pca.components.iter().enumerate() {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((dot - want).abs() < 1e-6);
        }
    }
    let f32_rows: Vec<Vec<f32>> = x.iter().map(|r| r.iter().map(|&v| v as f32).collect()).collect();
    let refs: Vec<&[f32]> = f32_rows.iter().map(Vec::as_slice).collect();
    let pca = pca_project(&refs, 64).unwrap();
    for a in &pca.components {
        let norm: f64 = a.iter().map(|&v| f64::from(v).powi(2)).sum();
        assert!((norm - 1.0).abs() < 1e-6);
    }
}

#[test]
fn rank_deficient_input_returns_fewer_components() {
    let x: Vec<Vec<f64>> = (0..20).map(|i| {
        let t = i as f64;
        vec![t, 2.0 * t, 1.0, t - 3.0, 0.5 * t * t]
    }).collect();
    let refs: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
    let pca = pca_project(&refs, 4).unwrap();
    assert_eq!(pca.components.len(), 2);
    assert!((pca.explained_ratio.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}
