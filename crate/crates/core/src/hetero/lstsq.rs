//! Least squares by Householder QR with column pivoting, with a ridge refit
//! when the design is numerically rank deficient.

use nalgebra::{DMatrix, DVector};

/// Relative threshold on `|R_kk| / |R_00|` (columns normalized to unit norm).
pub const RANK_TOL: f64 = 1e-10;
/// Ridge strength relative to `trace(X'X) / n_features`.
pub const RIDGE_SCALE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LstsqFit {
    pub coef: Vec<f64>,
    /// Numerical rank found by the pivoted QR.
    pub rank: usize,
    /// The ridge refit was used.
    pub ridge: bool,
}

/// Minimize `||y - X b||`. Falls back to ridge when `rank(X) < ncols`.
pub fn lstsq(x: &DMatrix<f64>, y: &[f64]) -> LstsqFit {
    let (n, p) = x.shape();
    assert_eq!(n, y.len(), "row count mismatch");
    if let Some(fit) = qr_solve(x, y) {
        return fit;
    }
    let rank = qr_rank(x);
    LstsqFit {
        coef: ridge_solve(x, y),
        rank: rank.min(p),
        ridge: true,
    }
}

fn sumsq(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Qr {
    /// Column-major, `R` in the upper triangle (diagonal kept separately).
    a: Vec<f64>,
    diag: Vec<f64>,
    perm: Vec<usize>,
    scale: Vec<f64>,
    rank: usize,
    qty: Vec<f64>,
}

fn factor(x: &DMatrix<f64>, y: Option<&[f64]>) -> Qr {
    let (n, p) = x.shape();
    // nalgebra storage is column-major already.
    let mut a = x.as_slice().to_vec();
    let mut scale = vec![1.0; p];
    for j in 0..p {
        let s = sumsq(&a[j * n..(j + 1) * n]).sqrt();
        if s > 0.0 {
            scale[j] = s;
            a[j * n..(j + 1) * n].iter_mut().for_each(|v| *v /= s);
        }
    }
    let mut qty = y.map(<[f64]>::to_vec).unwrap_or_default();
    let mut perm: Vec<usize> = (0..p).collect();
    let mut diag = vec![0.0; p];
    let mut v = vec![0.0; n];
    let mut r00 = 0.0;
    let mut rank = p.min(n);
    for k in 0..p.min(n) {
        let (best, best_norm) = (k..p)
            .map(|j| (j, sumsq(&a[j * n + k..(j + 1) * n])))
            .fold((k, -1.0), |acc, c| if c.1 > acc.1 { c } else { acc });
        if best != k {
            for i in 0..n {
                a.swap(k * n + i, best * n + i);
            }
            perm.swap(k, best);
        }
        let norm = best_norm.sqrt();
        if k == 0 {
            r00 = norm;
        }
        if norm == 0.0 || norm <= RANK_TOL * r00 {
            rank = k;
            break;
        }
        let col = &a[k * n + k..(k + 1) * n];
        let alpha = if col[0] > 0.0 { -norm } else { norm };
        let m = n - k;
        v[..m].copy_from_slice(col);
        v[0] -= alpha;
        let vv = sumsq(&v[..m]);
        diag[k] = alpha;
        if vv > 0.0 {
            for j in k + 1..p {
                let cj = &mut a[j * n + k..(j + 1) * n];
                let f = 2.0 * dot(&v[..m], cj) / vv;
                cj.iter_mut().zip(&v[..m]).for_each(|(c, vi)| *c -= f * vi);
            }
            if !qty.is_empty() {
                let t = &mut qty[k..];
                let f = 2.0 * dot(&v[..m], t) / vv;
                t.iter_mut().zip(&v[..m]).for_each(|(c, vi)| *c -= f * vi);
            }
        }
    }
    if n < p {
        rank = rank.min(n);
    }
    Qr {
        a,
        diag,
        perm,
        scale,
        rank,
        qty,
    }
}

fn qr_rank(x: &DMatrix<f64>) -> usize {
    factor(x, None).rank
}

fn qr_solve(x: &DMatrix<f64>, y: &[f64]) -> Option<LstsqFit> {
    let (n, p) = x.shape();
    let qr = factor(x, Some(y));
    if qr.rank < p {
        return None;
    }
    let mut z = vec![0.0; p];
    for k in (0..p).rev() {
        let mut s = qr.qty[k];
        for (j, zj) in z.iter().enumerate().skip(k + 1) {
            s -= qr.a[j * n + k] * zj;
        }
        z[k] = s / qr.diag[k];
    }
    let mut coef = vec![0.0; p];
    for (k, &j) in qr.perm.iter().enumerate() {
        coef[j] = z[k] / qr.scale[j];
    }
    Some(LstsqFit {
        coef,
        rank: p,
        ridge: false,
    })
}

fn ridge_solve(x: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    let p = x.ncols();
    let mut xtx = x.tr_mul(x);
    let xty = x.tr_mul(&DVector::from_column_slice(y));
    let trace = xtx.trace();
    if trace <= 0.0 {
        return vec![0.0; p];
    }
    let lambda = RIDGE_SCALE * trace / p as f64;
    for i in 0..p {
        xtx[(i, i)] += lambda;
    }
    match xtx.cholesky() {
        Some(c) => c.solve(&xty).iter().copied().collect(),
        None => vec![0.0; p],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_system(n: usize, p: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, j| if j == 0 { 1.0 } else { rng.sample(StandardNormal) });
        let y = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) * 3.0).collect();
        (x, y)
    }

    /// Independent oracle: solve the normal equations with LU.
    fn normal_equations(x: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
        let xtx = x.transpose() * x;
        let xty = x.transpose() * DVector::from_column_slice(y);
        xtx.lu().solve(&xty).unwrap().iter().copied().collect()
    }

    #[test]
    fn matches_normal_equations() {
        for seed in 0..20 {
            let (x, y) = random_system(50, 5, seed);
            let fit = lstsq(&x, &y);
            assert!(!fit.ridge);
            let oracle = normal_equations(&x, &y);
            for (a, b) in fit.coef.iter().zip(&oracle) {
                assert!((a - b).abs() <= 1e-8 * b.abs().max(1e-12), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn exact_linear_data_is_interpolated() {
        let (x, _) = random_system(40, 4, 7);
        let truth = [1.5, -2.0, 0.25, 8.0];
        let y: Vec<f64> = (0..40).map(|i| (0..4).map(|j| x[(i, j)] * truth[j]).sum()).collect();
        let fit = lstsq(&x, &y);
        for i in 0..40 {
            let yhat: f64 = (0..4).map(|j| x[(i, j)] * fit.coef[j]).sum();
            assert!((yhat - y[i]).abs() <= 1e-9);
        }
    }

    #[test]
    fn slope_only_line() {
        let x = DMatrix::from_fn(20, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let y: Vec<f64> = (0..20).map(|i| 2.0 * i as f64).collect();
        let fit = lstsq(&x, &y);
        assert!(fit.coef[0].abs() < 1e-12);
        assert!((fit.coef[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_columns_trigger_ridge() {
        let (mut x, y) = random_system(60, 4, 3);
        for i in 0..60 {
            x[(i, 3)] = 2.0 * x[(i, 1)] - x[(i, 2)];
        }
        let fit = lstsq(&x, &y);
        assert!(fit.ridge);
        assert_eq!(fit.rank, 3);
        assert!(fit.coef.iter().all(|c| c.is_finite()));
        // The ridge solution still fits about as well as the rank-3 one.
        let reduced = x.columns(0, 3).into_owned();
        let r3 = lstsq(&reduced, &y);
        let sse = |c: &[f64], m: &DMatrix<f64>| -> f64 {
            (0..60)
                .map(|i| {
                    let f: f64 = (0..m.ncols()).map(|j| m[(i, j)] * c[j]).sum();
                    (y[i] - f).powi(2)
                })
                .sum()
        };
        assert!(sse(&fit.coef, &x) <= sse(&r3.coef, &reduced) * (1.0 + 1e-6));
    }

    #[test]
    fn underdetermined_uses_ridge() {
        let (x, y) = random_system(3, 5, 1);
        assert!(lstsq(&x, &y).ridge);
    }
}
