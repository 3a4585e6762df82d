//! Nearest-PD repair of a sample correlation matrix: clip eigenvalues, rescale
//! to unit diagonal, factorize, add jitter if the factorization still fails.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EPS_EIG: f64 = 1e-8;
pub const JITTER_START: f64 = 1e-10;
pub const JITTER_MAX: f64 = 1e-6;
/// Relative slack on the eigenvalue floor when deciding whether to clip.
pub const EIG_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RepairReport {
    /// Extreme eigenvalues before repair (`None` if the matrix was already
    /// positive definite beyond the floor and no eigensolve was needed).
    pub min_eigenvalue: Option<f64>,
    pub max_eigenvalue: Option<f64>,
    pub clipped: usize,
    pub jitter: f64,
}

pub struct Repaired {
    pub sigma: DMatrix<f64>,
    pub chol: DMatrix<f64>,
    pub report: RepairReport,
}

/// True if every eigenvalue of `a` exceeds the clip floor.
fn above_floor(a: &DMatrix<f64>) -> bool {
    let mut shifted = a.clone();
    for i in 0..a.nrows() {
        shifted[(i, i)] -= EPS_EIG * (1.0 - EIG_TOL);
    }
    Cholesky::new(shifted).is_some()
}

/// Scale to unit diagonal, symmetrize, and pin the diagonal to exactly 1.
fn rescale(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    let d: Vec<f64> = (0..n).map(|i| a[(i, i)].sqrt()).collect();
    for j in 0..n {
        for i in 0..n {
            a[(i, j)] /= d[i] * d[j];
        }
    }
    for j in 0..n {
        for i in j + 1..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
        a[(j, j)] = 1.0;
    }
}

/// Cholesky of `sigma`, with diagonal jitter `(A + dI) / (1 + d)` if needed.
fn factorize(mut sigma: DMatrix<f64>, mut report: RepairReport) -> Result<Repaired> {
    if let Some(c) = Cholesky::new(sigma.clone()) {
        return Ok(Repaired {
            chol: c.unpack(),
            sigma,
            report,
        });
    }
    let n = sigma.nrows();
    let mut delta = JITTER_START;
    while delta <= JITTER_MAX {
        let mut a = sigma.clone();
        for i in 0..n {
            a[(i, i)] += delta;
        }
        a /= 1.0 + delta;
        for i in 0..n {
            a[(i, i)] = 1.0;
        }
        if let Some(c) = Cholesky::new(a.clone()) {
            report.jitter = delta;
            sigma = a;
            return Ok(Repaired {
                chol: c.unpack(),
                sigma,
                report,
            });
        }
        delta *= 2.0;
    }
    Err(Error::FactorizationFailed(delta / 2.0))
}

/// Repair `corr` (symmetric, unit diagonal) into a positive definite
/// correlation matrix and return it with its lower Cholesky factor.
pub fn repair(corr: &DMatrix<f64>) -> Result<Repaired> {
    let n = corr.nrows();
    let mut report = RepairReport::default();
    if above_floor(corr) {
        return factorize(corr.clone(), report);
    }
    let eig = SymmetricEigen::new(corr.clone());
    let vals = &eig.eigenvalues;
    report.min_eigenvalue = Some(vals.min());
    report.max_eigenvalue = Some(vals.max());
    report.clipped = vals.iter().filter(|&&l| l < EPS_EIG).count();
    // V diag(sqrt(clipped)), so that the product with its transpose is V diag(clipped) V'.
    let mut w = eig.eigenvectors;
    for (j, &l) in vals.iter().enumerate() {
        w.column_mut(j).scale_mut(l.max(EPS_EIG).sqrt());
    }
    let wt = w.transpose();
    let mut a = &w * &wt;
    debug_assert_eq!(a.nrows(), n);
    rescale(&mut a);
    factorize(a, report)
}

/// The same repair for `corr = y'y` (plus unit diagonal entries on columns
/// where `y` is zero), using the eigendecomposition of the smaller `y y'`
/// when `y` has fewer rows than columns.
///
/// With `y y' = U L U'`, the eigenvectors of `y'y` with nonzero eigenvalue are
/// `y' U L^(-1/2)`. Clipping every other eigenvalue up to the floor gives
/// `B B' + eps I` where `B = y' U diag(sqrt((l - eps) / l))` over `l > eps`.
pub fn repair_low_rank(corr: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Repaired> {
    let (m, d) = y.shape();
    if m >= d || above_floor(corr) {
        return repair(corr);
    }
    let yt = y.transpose();
    let gram = y * &yt;
    let eig = SymmetricEigen::new(gram);
    let vals = &eig.eigenvalues;
    let special = (0..d).filter(|&k| y.column(k).iter().all(|&v| v == 0.0)).count();
    let kept: Vec<usize> = (0..m).filter(|&i| vals[i] > EPS_EIG).collect();
    let mut report = RepairReport {
        min_eigenvalue: Some(vals.min().min(0.0)),
        max_eigenvalue: Some(if special > 0 { vals.max().max(1.0) } else { vals.max() }),
        clipped: d - special - kept.len(),
        jitter: 0.0,
    };
    let mut u = DMatrix::zeros(m, kept.len());
    for (c, &i) in kept.iter().enumerate() {
        let s = ((vals[i] - EPS_EIG) / vals[i]).sqrt();
        u.set_column(c, &(eig.eigenvectors.column(i) * s));
    }
    let b = &yt * u;
    let bt = b.transpose();
    let mut a = &b * &bt;
    for k in 0..d {
        a[(k, k)] += EPS_EIG;
    }
    rescale(&mut a);
    if report.clipped == 0 {
        report.min_eigenvalue = None;
    }
    factorize(a, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn min_eig(a: &DMatrix<f64>) -> f64 {
        SymmetricEigen::new(a.clone()).eigenvalues.min()
    }

    #[test]
    fn perfectly_correlated_pair() {
        let corr = DMatrix::from_element(2, 2, 1.0);
        let r = repair(&corr).unwrap();
        assert_eq!(r.sigma[(0, 0)], 1.0);
        let off = r.sigma[(0, 1)];
        assert!(off < 1.0 && off > 1.0 - 1e-7, "{off}");
        assert_eq!(r.report.clipped, 1);
        assert!(min_eig(&r.sigma) > 0.0);
    }

    #[test]
    fn indefinite_input_is_repaired() {
        // Symmetric with unit diagonal but one negative eigenvalue.
        let corr = DMatrix::from_row_slice(3, 3, &[1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0]);
        assert!(min_eig(&corr) < 0.0);
        let r = repair(&corr).unwrap();
        for i in 0..3 {
            assert_eq!(r.sigma[(i, i)], 1.0);
            for j in 0..3 {
                assert_eq!(r.sigma[(i, j)], r.sigma[(j, i)]);
                assert!(r.sigma[(i, j)].abs() <= 1.0);
            }
        }
        assert!(min_eig(&r.sigma) > 0.0);
        let rebuilt = &r.chol * r.chol.transpose();
        assert!((&rebuilt - &r.sigma).norm() / r.sigma.norm() <= 1e-8);
    }

    #[test]
    fn valid_matrix_is_untouched() {
        let corr = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
        let r = repair(&corr).unwrap();
        assert_eq!(r.sigma, corr);
        assert_eq!(r.report.jitter, 0.0);
        assert!(r.report.min_eigenvalue.is_none());
    }

    #[test]
    fn low_rank_path_matches_full_clip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (m, d) = (12, 20);
        let mut y = DMatrix::from_fn(m, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        for j in 0..d {
            let mean = y.column(j).mean();
            y.column_mut(j).add_scalar_mut(-mean);
            let norm = y.column(j).norm();
            y.column_mut(j).scale_mut(1.0 / norm);
        }
        y.column_mut(5).fill(0.0);
        let mut corr = y.transpose() * &y;
        corr[(5, 5)] = 1.0;
        let full = repair(&corr).unwrap();
        let fast = repair_low_rank(&corr, &y).unwrap();
        let diff = (&full.sigma - &fast.sigma).amax();
        assert!(diff <= 1e-9);
        assert_eq!(full.report.clipped, fast.report.clipped);
        assert_eq!(fast.sigma[(5, 5)], 1.0);
        assert_eq!(fast.sigma[(5, 0)], 0.0);
        assert!(min_eig(&fast.sigma) > 0.0);
    }
}
