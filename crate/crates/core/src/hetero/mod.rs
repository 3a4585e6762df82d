//! Conditional heteroscedastic error model for one (farm, horizon):
//! `y = f1(x) + u * f2(x)` with linear `f1`, `f2` and an empirical
//! distribution for `u`.

mod ecdf;
pub mod lstsq;

pub use ecdf::EcdfTable;
pub use lstsq::{lstsq, LstsqFit, RANK_TOL, RIDGE_SCALE};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Dataset, FeatureLayout};
use crate::stats::norm_inv;

/// Regression rows required per expanded feature.
pub const MIN_ROWS_PER_FEATURE: usize = 10;
/// Residuals required to build an ECDF.
pub const MIN_ECDF_SAMPLES: usize = 500;

/// Lower bound on the predicted scale.
pub fn h_floor_for(capacity_mw: f64) -> f64 {
    (1e-4 * capacity_mw).max(1e-3)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelFlags {
    pub ridge_point: bool,
    pub ridge_scale: bool,
    /// Too little data; the model is a capacity-scaled climatology.
    pub climatological: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeteroModel {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub ecdf: EcdfTable,
    pub layout: FeatureLayout,
    pub h_floor: f64,
    pub flags: ModelFlags,
}

pub fn fit_point(ds: &Dataset) -> LstsqFit {
    lstsq(&ds.x, &ds.y)
}

/// Least-squares fit of `|y - X alpha|` onto `X`.
pub fn fit_scale(ds: &Dataset, alpha: &[f64]) -> LstsqFit {
    let abs_resid: Vec<f64> = residuals(ds, alpha).into_iter().map(f64::abs).collect();
    lstsq(&ds.x, &abs_resid)
}

fn dot(a: &[f64], b: impl Iterator<Item = f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn residuals(ds: &Dataset, alpha: &[f64]) -> Vec<f64> {
    (0..ds.rows())
        .map(|i| ds.y[i] - dot(alpha, ds.x.row(i).iter().copied()))
        .collect()
}

/// `u = (y - x.alpha) / max(x.beta, h_floor)` for every row.
pub fn standardize(ds: &Dataset, alpha: &[f64], beta: &[f64], h_floor: f64) -> Vec<f64> {
    (0..ds.rows())
        .map(|i| {
            let row = ds.x.row(i);
            let (y_hat, h) = predict_raw(alpha, beta, h_floor, row.iter().copied());
            (ds.y[i] - y_hat) / h
        })
        .collect()
}

pub fn predict_raw(alpha: &[f64], beta: &[f64], h_floor: f64, x: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let y_hat = dot(alpha, x.clone());
    let h = dot(beta, x).max(h_floor);
    (y_hat, h)
}

impl HeteroModel {
    /// Point forecast of the NWP error and its scale.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.alpha.len() {
            return Err(Error::DimensionMismatch {
                expected: self.alpha.len(),
                actual: x.len(),
            });
        }
        Ok(predict_raw(&self.alpha, &self.beta, self.h_floor, x.iter().copied()))
    }

    /// Zero mean, scale `0.1 * capacity`, standard normal `u`.
    pub fn climatological(layout: FeatureLayout, capacity_mw: f64) -> Self {
        let p = layout.len();
        let mut beta = vec![0.0; p];
        beta[0] = 0.1 * capacity_mw;
        let n = MIN_ECDF_SAMPLES;
        let u = (0..n).map(|i| norm_inv((i as f64 + 0.5) / n as f64)).collect();
        Self {
            alpha: vec![0.0; p],
            beta,
            ecdf: EcdfTable::new(u).expect("finite quantiles"),
            layout,
            h_floor: h_floor_for(capacity_mw),
            flags: ModelFlags {
                climatological: true,
                ..ModelFlags::default()
            },
        }
    }

    /// Regression fit only; the ECDF is filled in by [`with_residuals`](Self::with_residuals).
    /// Returns `None` when there are too few rows.
    pub fn fit_regression(ds: &Dataset, capacity_mw: f64) -> Option<RegressionFit> {
        if ds.rows() < MIN_ROWS_PER_FEATURE * ds.layout.len() {
            return None;
        }
        let point = fit_point(ds);
        let scale = fit_scale(ds, &point.coef);
        Some(RegressionFit {
            alpha: point.coef,
            beta: scale.coef,
            h_floor: h_floor_for(capacity_mw),
            flags: ModelFlags {
                ridge_point: point.ridge,
                ridge_scale: scale.ridge,
                climatological: false,
            },
        })
    }

    /// Full fit: regressions on `regression`, ECDF of the standardized
    /// residuals over `residual`. Falls back to climatology when either set is
    /// too small.
    pub fn fit(regression: &Dataset, residual: &Dataset, capacity_mw: f64) -> Self {
        match Self::fit_regression(regression, capacity_mw) {
            Some(fit) => fit
                .with_residuals(regression.layout.clone(), residual)
                .unwrap_or_else(|| Self::climatological(regression.layout.clone(), capacity_mw)),
            None => Self::climatological(regression.layout.clone(), capacity_mw),
        }
    }
}

/// Fitted `alpha`, `beta` before the residual distribution is known.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub h_floor: f64,
    pub flags: ModelFlags,
}

impl RegressionFit {
    /// Multiply `beta` and the scale floor by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            beta: self.beta.iter().map(|b| b * c).collect(),
            h_floor: self.h_floor * c,
            ..self.clone()
        }
    }

    pub fn with_residuals(self, layout: FeatureLayout, residual: &Dataset) -> Option<HeteroModel> {
        if residual.rows() < MIN_ECDF_SAMPLES {
            return None;
        }
        let u = standardize(residual, &self.alpha, &self.beta, self.h_floor);
        let ecdf = EcdfTable::new(u).ok()?;
        Some(HeteroModel {
            alpha: self.alpha,
            beta: self.beta,
            ecdf,
            layout,
            h_floor: self.h_floor,
            flags: self.flags,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureSpec, Source};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn dataset(x: DMatrix<f64>, y: Vec<f64>) -> Dataset {
        let p = x.ncols();
        let mut layout = FeatureLayout::from_parts(&FeatureSpec::nwp_only(), &[], 0, 1, 1).unwrap();
        while layout.columns.len() < p {
            let mut c = layout.columns[1].clone();
            c.name = format!("x{}", layout.columns.len());
            c.source = Source::Power { lag: layout.columns.len() };
            layout.columns.push(c);
        }
        layout.columns.truncate(p);
        let n = y.len();
        Dataset {
            x,
            y,
            slots: (0..n).collect(),
            row_times: vec![chrono::DateTime::UNIX_EPOCH; n],
            layout,
            dropped: 0,
        }
    }

    /// Standard errors of an OLS fit, from `s^2 (X'X)^-1`.
    fn standard_errors(x: &DMatrix<f64>, y: &[f64], coef: &[f64]) -> Vec<f64> {
        let (n, p) = x.shape();
        let sse: f64 = (0..n)
            .map(|i| (y[i] - (0..p).map(|j| x[(i, j)] * coef[j]).sum::<f64>()).powi(2))
            .sum();
        let s2 = sse / (n - p) as f64;
        let inv = (x.transpose() * x).try_inverse().unwrap();
        (0..p).map(|j| (s2 * inv[(j, j)]).sqrt()).collect()
    }

    #[test]
    fn homoscedastic_noise_gives_flat_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 5000;
        let x = DMatrix::from_fn(n, 3, |_, j| if j == 0 { 1.0 } else { rng.random_range(0.0..100.0) });
        let y: Vec<f64> = (0..n)
            .map(|i| 0.3 * x[(i, 1)] - 0.1 * x[(i, 2)] + 2.0 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let ds = dataset(x.clone(), y);
        let alpha = fit_point(&ds).coef;
        let beta = fit_scale(&ds, &alpha).coef;
        let abs_r: Vec<f64> = residuals(&ds, &alpha).into_iter().map(f64::abs).collect();
        let se = standard_errors(&x, &abs_r, &beta);
        for j in 1..3 {
            assert!(beta[j].abs() <= 3.0 * se[j], "beta[{j}] = {} se {}", beta[j], se[j]);
        }
        assert!((beta[0] - 2.0 * (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.1);
    }

    #[test]
    fn zero_residuals_floor_the_scale() {
        let x = DMatrix::from_fn(30, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let y: Vec<f64> = (0..30).map(|i| 3.0 - 0.5 * i as f64).collect();
        let ds = dataset(x, y);
        let fit = HeteroModel::fit_regression(&ds, 20.0).unwrap();
        let floor = h_floor_for(20.0);
        for i in 0..30 {
            let (_, h) = predict_raw(&fit.alpha, &fit.beta, floor, ds.x.row(i).iter().copied());
            assert_eq!(h, floor);
        }
        assert_eq!(floor, 2e-3);
        assert_eq!(h_floor_for(1.0), 1e-3);
    }

    #[test]
    fn proportional_scale_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 10_000;
        let x = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { rng.random_range(1.0..50.0) });
        let c = 0.4;
        let y: Vec<f64> = (0..n)
            .map(|i| 5.0 + c * x[(i, 1)] * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let ds = dataset(x, y);
        let alpha = fit_point(&ds).coef;
        let beta = fit_scale(&ds, &alpha).coef;
        let expected = c * (2.0 / std::f64::consts::PI).sqrt();
        assert!((beta[1] / expected - 1.0).abs() < 0.10, "beta {beta:?}");
    }

    #[test]
    fn standardize_arithmetic() {
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let ds = dataset(x, vec![5.0]);
        // y_hat = 1 + 2*0.5 = 2, h = 0.5 + 2*0.5 = 1.5
        let u = standardize(&ds, &[1.0, 0.5], &[0.5, 0.5], 1e-3);
        assert_eq!(u, vec![2.0]);
        let u = standardize(&ds, &[1.0, 2.0], &[0.5, 0.5], 1e-3);
        assert_eq!(u, vec![0.0]);
    }

    #[test]
    fn predict_matches_training_rows_and_floors() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 600;
        let x = DMatrix::from_fn(n, 3, |_, j| if j == 0 { 1.0 } else { rng.random_range(-1.0..1.0) });
        let y: Vec<f64> = (0..n).map(|i| x[(i, 1)] + 0.2 * rng.sample::<f64, _>(StandardNormal)).collect();
        let ds = dataset(x, y);
        let model = HeteroModel::fit(&ds, &ds, 10.0);
        assert!(!model.flags.climatological);
        for i in [0, 17, 599] {
            let row: Vec<f64> = ds.x.row(i).iter().copied().collect();
            let (y_hat, _) = model.predict(&row).unwrap();
            let fitted: f64 = row.iter().zip(&model.alpha).map(|(a, b)| a * b).sum();
            assert_eq!(y_hat, fitted);
        }
        let mut neg = model.clone();
        neg.beta = vec![-1.0, 0.0, 0.0];
        assert_eq!(neg.predict(&[1.0, 0.0, 0.0]).unwrap().1, neg.h_floor);
        assert!(matches!(model.predict(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn small_sets_fall_back_to_climatology() {
        let x = DMatrix::from_fn(25, 3, |i, j| (i * (j + 1)) as f64);
        let ds = dataset(x, vec![1.0; 25]);
        let m = HeteroModel::fit(&ds, &ds, 80.0);
        assert!(m.flags.climatological);
        assert_eq!(m.beta[0], 8.0);
        assert!(m.alpha.iter().all(|&a| a == 0.0));
        assert_eq!(m.ecdf.len(), MIN_ECDF_SAMPLES);
        assert!(m.ecdf.median().abs() < 1e-12);
    }
}
