//! Two-sample distribution statistics: Gaussian Bhattacharyya distance and
//! the unbiased MMD² estimator with a permutation test.
//!
//! Both operate on row-major sample matrices (`n × d`). The Bhattacharyya
//! statistic assumes Gaussian classes and regularizes covariances by
//! `λI, λ = reg·tr(Σ̄)/d` before inversion; MMD is nonparametric with a
//! Gaussian RBF kernel whose bandwidth comes from the median heuristic on
//! the pooled sample.

use crate::error::CoreError;
use crate::rng::stream;
use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;

/// Sample mean and (n−1)-normalized covariance of the rows.
pub fn mean_cov(x: ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
    let (n, d) = x.dim();
    assert!(n > 1, "covariance needs at least two rows");
    let mean = x.sum_axis(ndarray::Axis(0)) / n as f64;
    let mut cov = Array2::zeros((d, d));
    for row in x.rows() {
        for i in 0..d {
            let di = row[i] - mean[i];
            for j in i..d {
                cov[[i, j]] += di * (row[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[[i, j]] / (n - 1) as f64;
            cov[[i, j]] = v;
            cov[[j, i]] = v;
        }
    }
    (mean, cov)
}

/// Lower-triangular Cholesky factor, or `None` if `a` is not positive
/// definite.
fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let d = a.nrows();
    let mut l: Array2<f64> = Array2::zeros((d, d));
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[[i, j]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    Some(l)
}

fn log_det(l: &Array2<f64>) -> f64 {
    2.0 * (0..l.nrows()).map(|i| l[[i, i]].ln()).sum::<f64>()
}

/// Solve `L z = b` by forward substitution.
fn forward_solve(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let d = b.len();
    let mut z = Array1::zeros(d);
    for i in 0..d {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * z[k];
        }
        z[i] = s / l[[i, i]];
    }
    z
}

/// Bhattacharyya distance between Gaussian fits of `x` and `y`:
///
/// `D = ⅛ Δμᵀ Σ̄⁻¹ Δμ + ½ ln(det Σ̄ / √(det Σx · det Σy))`, `Σ̄ = (Σx+Σy)/2`,
///
/// with `λI` added to every covariance, `λ = reg · tr(Σ̄)/d`.
pub fn bhattacharyya_gaussian(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    reg: f64,
) -> Result<f64, CoreError> {
    let d = x.ncols();
    if y.ncols() != d {
        return Err(CoreError::shape(
            "bhattacharyya",
            format!("{d} columns"),
            format!("{}", y.ncols()),
        ));
    }
    if x.nrows() <= d || y.nrows() <= d {
        return Err(CoreError::InvalidData(format!(
            "need more than {d} samples per side, got {} and {}",
            x.nrows(),
            y.nrows()
        )));
    }
    let (mx, mut cx) = mean_cov(x);
    let (my, mut cy) = mean_cov(y);
    let mut pooled = Array2::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            pooled[[i, j]] = 0.5 * (cx[[i, j]] + cy[[i, j]]);
        }
    }
    let lambda = reg * (0..d).map(|i| pooled[[i, i]]).sum::<f64>() / d as f64;
    for i in 0..d {
        cx[[i, i]] += lambda;
        cy[[i, i]] += lambda;
        pooled[[i, i]] += lambda;
    }
    let not_pd =
        || CoreError::InvalidData("covariance not positive definite after regularization".into());
    let lp = cholesky(&pooled).ok_or_else(not_pd)?;
    let lx = cholesky(&cx).ok_or_else(not_pd)?;
    let ly = cholesky(&cy).ok_or_else(not_pd)?;
    let delta = &mx - &my;
    let z = forward_solve(&lp, &delta);
    let mahalanobis = z.iter().map(|v| v * v).sum::<f64>();
    let log_ratio = log_det(&lp) - 0.5 * (log_det(&lx) + log_det(&ly));
    Ok(0.125 * mahalanobis + 0.5 * log_ratio)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median pairwise Euclidean distance over the rows (the RBF bandwidth
/// heuristic). Falls back to 1 when the rows coincide.
pub fn median_bandwidth(pooled: ArrayView2<f64>) -> f64 {
    let rows: Vec<&[f64]> = pooled.rows().into_iter().map(|r| r.to_slice().unwrap()).collect();
    let n = rows.len();
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            dists.push(sq_dist(rows[i], rows[j]).sqrt());
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    let mid = dists.len() / 2;
    dists.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).unwrap());
    let median = dists[mid];
    if median > 0.0 {
        median
    } else {
        1.0
    }
}

fn rbf(a: &[f64], b: &[f64], bandwidth: f64) -> f64 {
    (-sq_dist(a, b) / (2.0 * bandwidth * bandwidth)).exp()
}

/// Unbiased U-statistic estimator of squared MMD with an RBF kernel:
///
/// `Σ_{i≠j} k(xᵢ,xⱼ)/(n(n−1)) + Σ_{i≠j} k(yᵢ,yⱼ)/(m(m−1)) − 2Σ k(xᵢ,yⱼ)/(nm)`.
///
/// May be negative for close distributions.
pub fn mmd2_unbiased(x: ArrayView2<f64>, y: ArrayView2<f64>, bandwidth: f64) -> f64 {
    let (n, m) = (x.nrows(), y.nrows());
    assert!(n >= 2 && m >= 2, "MMD needs at least two samples per side");
    assert!(bandwidth > 0.0);
    let xr: Vec<&[f64]> = x.rows().into_iter().map(|r| r.to_slice().unwrap()).collect();
    let yr: Vec<&[f64]> = y.rows().into_iter().map(|r| r.to_slice().unwrap()).collect();
    let mut s_xx = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s_xx += rbf(xr[i], xr[j], bandwidth);
        }
    }
    let mut s_yy = 0.0;
    for i in 0..m {
        for j in i + 1..m {
            s_yy += rbf(yr[i], yr[j], bandwidth);
        }
    }
    let mut s_xy = 0.0;
    for xi in &xr {
        for yj in &yr {
            s_xy += rbf(xi, yj, bandwidth);
        }
    }
    2.0 * s_xx / (n * (n - 1)) as f64 + 2.0 * s_yy / (m * (m - 1)) as f64
        - 2.0 * s_xy / (n * m) as f64
}

/// Result of one permutation test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmdTest {
    pub mmd2: f64,
    pub bandwidth: f64,
    pub p_raw: f64,
    pub p_corrected: f64,
}

/// Permutation test of `H₀: X and Y share a distribution` using the MMD²
/// statistic with a median-heuristic bandwidth fixed on the pooled sample.
///
/// `p_raw = (1 + #{permuted ≥ observed}) / (n_perm + 1)`; the corrected
/// value multiplies by `bonferroni_factor` (the number of hypotheses in the
/// family) and caps at 1.
pub fn mmd_permutation_test(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    n_perm: usize,
    bonferroni_factor: usize,
    seed: u64,
) -> MmdTest {
    let (n, m) = (x.nrows(), y.nrows());
    assert!(n >= 2 && m >= 2, "permutation test needs 2 samples per side");
    let total = n + m;
    let mut pooled = Array2::zeros((total, x.ncols()));
    pooled.slice_mut(ndarray::s![..n, ..]).assign(&x);
    pooled.slice_mut(ndarray::s![n.., ..]).assign(&y);
    let bandwidth = median_bandwidth(pooled.view());
    let rows: Vec<&[f64]> = pooled.rows().into_iter().map(|r| r.to_slice().unwrap()).collect();

    // Precompute the kernel matrix once; every permutation reuses it.
    let mut k = vec![0.0; total * total];
    let mut total_sum = 0.0;
    for i in 0..total {
        for j in i + 1..total {
            let v = rbf(rows[i], rows[j], bandwidth);
            k[i * total + j] = v;
            k[j * total + i] = v;
            total_sum += v;
        }
    }
    // MMD² from a membership assignment, using S_xy = S_all − S_xx − S_yy.
    let stat = |idx: &[usize]| -> f64 {
        let mut s_xx = 0.0;
        for a in 0..n {
            for b in a + 1..n {
                s_xx += k[idx[a] * total + idx[b]];
            }
        }
        let mut s_yy = 0.0;
        for a in n..total {
            for b in a + 1..total {
                s_yy += k[idx[a] * total + idx[b]];
            }
        }
        let s_xy = total_sum - s_xx - s_yy;
        2.0 * s_xx / (n * (n - 1)) as f64 + 2.0 * s_yy / (m * (m - 1)) as f64
            - 2.0 * s_xy / (n * m) as f64
    };

    let identity: Vec<usize> = (0..total).collect();
    let observed = stat(&identity);
    let mut rng = stream(seed, "mmd-permutation");
    let mut idx = identity;
    let mut at_least = 0usize;
    for _ in 0..n_perm {
        // Fisher–Yates over the pooled membership.
        for i in (1..total).rev() {
            let j = rng.gen_range(0..=i);
            idx.swap(i, j);
        }
        if stat(&idx) >= observed {
            at_least += 1;
        }
    }
    let p_raw = (1 + at_least) as f64 / (n_perm + 1) as f64;
    MmdTest {
        mmd2: observed,
        bandwidth,
        p_raw,
        p_corrected: (p_raw * bonferroni_factor as f64).min(1.0),
    }
}
