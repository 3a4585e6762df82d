//! Gaussian copula over the flattened (farm, horizon) index.

mod repair;

pub use repair::{repair, repair_low_rank, RepairReport, Repaired, EIG_TOL, EPS_EIG, JITTER_MAX, JITTER_START};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hetero::EcdfTable;
use crate::stats::{norm_cdf, norm_inv};

/// Fewest complete rows accepted by [`estimate_correlation`].
pub const MIN_ROWS: usize = 100;

pub fn to_gaussian(u: f64, ecdf: &EcdfTable) -> f64 {
    norm_inv(ecdf.eval(u))
}

pub fn from_gaussian(g: f64, ecdf: &EcdfTable) -> f64 {
    ecdf.inverse_clamped(norm_cdf(g))
}

/// Ranks `F(u)` in `[p_min, 1 - p_min]`.
pub fn rank_transform(u: &[f64], ecdf: &EcdfTable) -> Vec<f64> {
    u.iter().map(|&v| ecdf.eval(v)).collect()
}

/// `k = w * n_tau + (tau - 1)`, zero-based, farm-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexMap {
    pub n_farms: usize,
    pub n_tau: usize,
}

impl IndexMap {
    pub fn new(n_farms: usize, n_tau: usize) -> Self {
        Self { n_farms, n_tau }
    }

    pub fn dim(&self) -> usize {
        self.n_farms * self.n_tau
    }

    pub fn flat(&self, w: usize, tau: usize) -> usize {
        debug_assert!(w < self.n_farms && tau >= 1 && tau <= self.n_tau);
        w * self.n_tau + tau - 1
    }

    pub fn unflat(&self, k: usize) -> (usize, usize) {
        (k / self.n_tau, k % self.n_tau + 1)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CopulaDiagnostics {
    pub rows_used: usize,
    pub rows_incomplete: usize,
    /// Fewer complete rows than half the dimension.
    pub low_sample: bool,
    /// Columns with zero variance, replaced by identity rows and columns.
    pub zero_variance: Vec<usize>,
    /// Columns excluded by the caller (fallback models), also identity.
    pub excluded: Vec<usize>,
    pub repair: RepairReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CopulaModel {
    pub index: IndexMap,
    pub sigma_n: DMatrix<f64>,
    /// Lower triangular, `chol * chol' = sigma_n`.
    pub chol: DMatrix<f64>,
    pub diagnostics: CopulaDiagnostics,
}

impl CopulaModel {
    pub fn dim(&self) -> usize {
        self.index.dim()
    }

    pub fn identity(index: IndexMap) -> Self {
        let d = index.dim();
        Self {
            index,
            sigma_n: DMatrix::identity(d, d),
            chol: DMatrix::identity(d, d),
            diagnostics: CopulaDiagnostics::default(),
        }
    }
}

/// Centered rows scaled so that `y'y` is the sample correlation
/// (`1/(n-1)` normalization). Only rows finite in every non-excluded column
/// are used; zero-variance and excluded columns are left at zero.
fn normalized_rows(g: &DMatrix<f64>, excluded: &[usize]) -> Result<(DMatrix<f64>, CopulaDiagnostics)> {
    let (n, d) = g.shape();
    let mut active = vec![true; d];
    for &k in excluded {
        if k >= d {
            return Err(Error::DimensionMismatch { expected: d, actual: k + 1 });
        }
        active[k] = false;
    }
    let complete: Vec<usize> = (0..n)
        .filter(|&i| (0..d).all(|j| !active[j] || g[(i, j)].is_finite()))
        .collect();
    let m = complete.len();
    if m < MIN_ROWS {
        return Err(Error::TooFewRows {
            rows: m,
            required: MIN_ROWS,
        });
    }
    let mut y = DMatrix::zeros(m, d);
    let mut zero_variance = Vec::new();
    for j in (0..d).filter(|&j| active[j]) {
        let col = g.column(j);
        let mean = complete.iter().map(|&i| col[i]).sum::<f64>() / m as f64;
        let mut out = y.column_mut(j);
        for (r, &i) in complete.iter().enumerate() {
            out[r] = col[i] - mean;
        }
        let ss = out.norm_squared();
        if ss / ((m - 1) as f64) > 1e-24 {
            out.scale_mut(1.0 / ss.sqrt());
        } else {
            out.fill(0.0);
            zero_variance.push(j);
        }
    }
    let mut excluded = excluded.to_vec();
    excluded.sort_unstable();
    excluded.dedup();
    let diag = CopulaDiagnostics {
        rows_used: m,
        rows_incomplete: n - m,
        low_sample: (m as f64) < 0.5 * d as f64,
        zero_variance,
        excluded,
        ..CopulaDiagnostics::default()
    };
    Ok((y, diag))
}

fn correlation_of(y: &DMatrix<f64>) -> DMatrix<f64> {
    // Explicit transpose so the product goes through the blocked gemm path.
    let yt = y.transpose();
    let mut corr = &yt * y;
    for j in 0..corr.ncols() {
        corr[(j, j)] = 1.0;
        for i in j + 1..corr.nrows() {
            let v = corr[(i, j)].clamp(-1.0, 1.0);
            corr[(i, j)] = v;
            corr[(j, i)] = v;
        }
    }
    corr
}

/// Sample correlation over rows that are finite in every column, `1/(n-1)`
/// normalization. Zero-variance columns get identity rows and columns.
pub fn sample_correlation(g: &DMatrix<f64>) -> Result<(DMatrix<f64>, CopulaDiagnostics)> {
    let (y, diag) = normalized_rows(g, &[])?;
    Ok((correlation_of(&y), diag))
}

/// Estimate, repair and factorize the copula correlation from the
/// Gaussian-transformed residuals `g` (`samples x dim`, `NaN` = missing).
pub fn estimate_correlation(g: &DMatrix<f64>, index: IndexMap) -> Result<CopulaModel> {
    estimate_correlation_excluding(g, index, &[])
}

/// As [`estimate_correlation`], with `excluded` columns ignored when selecting
/// complete rows and given identity rows and columns.
pub fn estimate_correlation_excluding(g: &DMatrix<f64>, index: IndexMap, excluded: &[usize]) -> Result<CopulaModel> {
    if g.ncols() != index.dim() {
        return Err(Error::DimensionMismatch {
            expected: index.dim(),
            actual: g.ncols(),
        });
    }
    let (y, mut diagnostics) = normalized_rows(g, excluded)?;
    let corr = correlation_of(&y);
    let fixed = repair_low_rank(&corr, &y)?;
    diagnostics.repair = fixed.report;
    Ok(CopulaModel {
        index,
        sigma_n: fixed.sigma,
        chol: fixed.chol,
        diagnostics,
    })
}

/// `S` rows of correlated standard-normal draws, row-major `[s * dim + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSampleBlock {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f64>,
    pub seed: u64,
}

impl GaussianSampleBlock {
    pub fn row(&self, s: usize) -> &[f64] {
        &self.data[s * self.dim..(s + 1) * self.dim]
    }
}

const DRAW_CHUNK: usize = 256;

/// Rows of `chol * z`, `z` iid standard normal drawn sample by sample from a
/// ChaCha8 stream seeded with `seed`.
pub fn draw_block(model: &CopulaModel, rows: usize, seed: u64) -> GaussianSampleBlock {
    let dim = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(rows * dim);
    let mut start = 0;
    while start < rows {
        let c = DRAW_CHUNK.min(rows - start);
        // Column j of z is sample start + j, so draws stay in sample-major order.
        let z: Vec<f64> = (0..dim * c).map(|_| rng.sample(StandardNormal)).collect();
        let z = DMatrix::from_vec(dim, c, z);
        let g = &model.chol * z;
        data.extend_from_slice(g.as_slice());
        start += c;
    }
    GaussianSampleBlock { rows, dim, data, seed }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_two_sample, pearson};

    fn normal_table(n: usize, seed: u64) -> EcdfTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        EcdfTable::new((0..n).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
    }

    fn equicorrelated(d: usize, rho: f64) -> DMatrix<f64> {
        DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { rho })
    }

    fn model_for(corr: DMatrix<f64>) -> CopulaModel {
        let d = corr.nrows();
        let chol = corr.clone().cholesky().unwrap().unpack();
        CopulaModel {
            index: IndexMap::new(1, d),
            sigma_n: corr,
            chol,
            diagnostics: CopulaDiagnostics::default(),
        }
    }

    fn block_matrix(b: &GaussianSampleBlock) -> DMatrix<f64> {
        DMatrix::from_row_slice(b.rows, b.dim, &b.data)
    }

    #[test]
    fn index_map_is_farm_major() {
        let m = IndexMap::new(3, 4);
        assert_eq!(m.flat(0, 1), 0);
        assert_eq!(m.flat(1, 1), 4);
        assert_eq!(m.flat(2, 4), 11);
        for k in 0..12 {
            let (w, t) = m.unflat(k);
            assert_eq!(m.flat(w, t), k);
        }
    }

    #[test]
    fn gaussian_transform_basics() {
        let t = EcdfTable::new(vec![-2.0, -1.0, 0.0, 1.0, 2.0]).unwrap();
        assert_eq!(to_gaussian(0.0, &t), 0.0);
        assert_eq!(from_gaussian(0.0, &t), 0.0);
        assert_eq!(from_gaussian(8.0, &t), 2.0);
        assert_eq!(from_gaussian(-8.0, &t), -2.0);
        assert_eq!(from_gaussian(f64::INFINITY, &t), 2.0);
        assert_eq!(rank_transform(&[-2.0], &t), vec![t.p_min()]);
        let r = rank_transform(&[-1.5, -0.2, 0.3, 1.9], &t);
        assert!(r.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn normal_residuals_map_to_themselves() {
        let t = normal_table(10_000, 8);
        for i in 0..=30 {
            let u = -1.5 + 0.1 * i as f64;
            assert!((to_gaussian(u, &t) - u).abs() < 0.05);
        }
    }

    #[test]
    fn from_gaussian_reproduces_table_distribution() {
        let t = normal_table(2_000, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let draws: Vec<f64> = (0..20_000)
            .map(|_| from_gaussian(rng.sample(StandardNormal), &t))
            .collect();
        let d = crate::stats::ks_statistic(&draws, |z| {
            // exact CDF of the interpolated table, extended by the clamped tails
            if z < t.min() {
                0.0
            } else if z >= t.max() {
                1.0
            } else {
                t.eval(z)
            }
        });
        assert!(d <= 1.63 / (draws.len() as f64).sqrt(), "ks {d}");
    }

    #[test]
    fn round_trip_inside_table() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for case in 0..200 {
            let t = normal_table(rng.random_range(2..3000), case);
            for _ in 0..20 {
                let u = rng.random_range(t.min()..t.max());
                assert!((from_gaussian(to_gaussian(u, &t), &t) - u).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn identical_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let col: Vec<f64> = (0..500).map(|_| rng.sample(StandardNormal)).collect();
        let g = DMatrix::from_fn(500, 2, |i, _| col[i]);
        let (corr, _) = sample_correlation(&g).unwrap();
        assert!((corr[(0, 1)] - 1.0).abs() < 1e-12);
        let m = estimate_correlation(&g, IndexMap::new(1, 2)).unwrap();
        assert!(m.sigma_n[(0, 1)] < 1.0 && m.sigma_n[(0, 1)] > 1.0 - 1e-7);
    }

    #[test]
    fn independent_columns_and_known_rho() {
        for (rho, seed) in [(0.0, 3u64), (0.6, 4)] {
            let truth = equicorrelated(4, rho);
            let block = draw_block(&model_for(truth), 4000, seed);
            let m = estimate_correlation(&block_matrix(&block), IndexMap::new(1, 4)).unwrap();
            for i in 0..4 {
                assert_eq!(m.sigma_n[(i, i)], 1.0);
                for j in 0..4 {
                    if i != j {
                        assert!((m.sigma_n[(i, j)] - rho).abs() <= 0.05);
                    }
                }
            }
        }
    }

    #[test]
    fn too_few_rows_and_missing_rows() {
        let g = DMatrix::from_fn(99, 2, |i, j| (i * (j + 1)) as f64);
        assert!(matches!(sample_correlation(&g), Err(Error::TooFewRows { rows: 99, .. })));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut g = DMatrix::from_fn(300, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        g[(5, 1)] = f64::NAN;
        g[(7, 2)] = f64::NAN;
        let (_, diag) = sample_correlation(&g).unwrap();
        assert_eq!(diag.rows_used, 298);
        assert_eq!(diag.rows_incomplete, 2);
        assert!(!diag.low_sample);
    }

    #[test]
    fn zero_variance_column_becomes_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = DMatrix::from_fn(200, 3, |_, j| if j == 1 { 4.0 } else { rng.sample(StandardNormal) });
        let m = estimate_correlation(&g, IndexMap::new(1, 3)).unwrap();
        assert_eq!(m.diagnostics.zero_variance, vec![1]);
        assert_eq!(m.sigma_n[(0, 1)], 0.0);
        assert_eq!(m.sigma_n[(1, 2)], 0.0);
        assert_eq!(m.sigma_n[(1, 1)], 1.0);
    }

    #[test]
    fn relabeling_permutes_estimate() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let block = draw_block(&model_for(equicorrelated(5, 0.4)), 400, 9);
        let g = block_matrix(&block).map(|v| v + 0.01 * rng.random_range(0.0..1.0));
        let perm = [3usize, 0, 4, 1, 2];
        let gp = DMatrix::from_fn(g.nrows(), 5, |i, j| g[(i, perm[j])]);
        let (a, _) = sample_correlation(&g).unwrap();
        let (b, _) = sample_correlation(&gp).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(b[(i, j)], a[(perm[i], perm[j])]);
            }
        }
    }

    #[test]
    fn draws_are_reproducible_and_standardized() {
        let model = CopulaModel::identity(IndexMap::new(2, 3));
        let a = draw_block(&model, 4000, 77);
        let b = draw_block(&model, 4000, 77);
        assert_eq!(a, b);
        let m = block_matrix(&a);
        let s = 4000.0f64;
        for k in 0..6 {
            let col: Vec<f64> = m.column(k).iter().copied().collect();
            let mean = crate::stats::mean(&col);
            let var = crate::stats::std_dev(&col).powi(2);
            assert!(mean.abs() <= 3.0 / s.sqrt());
            assert!((var - 1.0).abs() <= 0.1);
            for j in 0..k {
                let other: Vec<f64> = m.column(j).iter().copied().collect();
                assert!(pearson(&col, &other).abs() <= 0.05);
            }
        }
        // A prefix of a longer block equals the shorter block.
        let c = draw_block(&model, 1000, 77);
        assert_eq!(&a.data[..c.data.len()], c.data.as_slice());
    }

    #[test]
    fn sample_correlation_converges() {
        let truth = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, -0.2, 0.5, 1.0, 0.1, -0.2, 0.1, 1.0]);
        let s = 20_000;
        let block = draw_block(&model_for(truth.clone()), s, 5);
        let (est, _) = sample_correlation(&block_matrix(&block)).unwrap();
        assert!((&est - &truth).norm() <= 3.0 * 3.0 / (s as f64).sqrt());
    }

    #[test]
    fn copula_recovery_through_monotone_marginals() {
        let rho = 0.6;
        let block = draw_block(&model_for(equicorrelated(3, rho)), 4000, 31);
        let g = block_matrix(&block);
        // arbitrary monotone marginals
        let u = DMatrix::from_fn(4000, 3, |i, j| match j {
            0 => g[(i, j)].exp(),
            1 => g[(i, j)].powi(3) + g[(i, j)],
            _ => (2.0 * g[(i, j)]).tanh(),
        });
        let tables: Vec<EcdfTable> = (0..3)
            .map(|j| EcdfTable::new(u.column(j).iter().copied().collect()).unwrap())
            .collect();
        let back = DMatrix::from_fn(4000, 3, |i, j| to_gaussian(u[(i, j)], &tables[j]));
        let m = estimate_correlation(&back, IndexMap::new(3, 1)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!((m.sigma_n[(i, j)] - rho).abs() <= 0.05);
                }
            }
            let col: Vec<f64> = back.column(i).iter().copied().collect();
            let orig: Vec<f64> = g.column(i).iter().copied().collect();
            assert!(ks_two_sample(&col, &orig) < 0.05);
        }
    }
}
