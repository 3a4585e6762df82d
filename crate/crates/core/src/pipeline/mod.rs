//! Offline training and online scenario assembly.
//!
//! Training fits the regressions on the recent window, standardizes the
//! residuals over the longer window, builds the per-model ECDFs and the
//! copula, and draws a block of standardized scenario errors `u` once.
//! Online generation computes `(y_hat, h_hat)` for every model and then only
//! scales and shifts rows of that block.

pub mod bench;
pub mod bundle;
pub mod config;

pub use bundle::{load_bundle, save_bundle, BUNDLE_MAGIC, BUNDLE_VERSION};
pub use config::RunConfig;

use chrono::{DateTime, Duration, Utc};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copula::{
    draw_block, estimate_correlation_excluding, from_gaussian, to_gaussian, CopulaDiagnostics, CopulaModel, IndexMap,
};
use crate::error::{Error, Result};
use crate::features::{build_dataset_over, online_row_at, FeatureLayout, FeatureSpec};
use crate::hetero::{standardize, EcdfTable, HeteroModel, ModelFlags, RegressionFit, MIN_ECDF_SAMPLES, MIN_ROWS_PER_FEATURE};
use crate::timeseries::{format_instant, FarmRegistry, HorizonGrid, SeriesPanel};

/// Spread of the fallback distribution as a fraction of capacity.
pub const FALLBACK_SPREAD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    /// Candidate slots after striding.
    pub slots: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub farm_id: String,
    pub tau: usize,
    pub features: usize,
    pub regression_rows: usize,
    pub regression_dropped: usize,
    pub residual_rows: usize,
    pub residual_dropped: usize,
    pub flags: ModelFlags,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub seed: u64,
    pub config_hash: String,
    pub regression_window: Window,
    pub residual_window: Window,
    /// One entry per flat index.
    pub models: Vec<ModelReport>,
    pub missing_power_cells: usize,
    pub copula: CopulaDiagnostics,
    /// `(max L_ii / min L_ii)^2` of the Cholesky factor, a cheap lower bound
    /// on the condition number of the copula correlation.
    pub sigma_condition_estimate: f64,
}

impl TrainingReport {
    pub fn fallbacks(&self) -> impl Iterator<Item = &ModelReport> {
        self.models.iter().filter(|m| m.flags.climatological)
    }

    pub fn ridge_models(&self) -> usize {
        self.models
            .iter()
            .filter(|m| m.flags.ridge_point || m.flags.ridge_scale)
            .count()
    }

    pub fn regression_rows_dropped(&self) -> usize {
        self.models.iter().map(|m| m.regression_dropped).sum()
    }

    pub fn residual_rows_dropped(&self) -> usize {
        self.models.iter().map(|m| m.residual_dropped).sum()
    }
}

/// Everything the online path needs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedBundle {
    pub registry: FarmRegistry,
    pub grid: HorizonGrid,
    pub features: FeatureSpec,
    /// Indexed by the flat index of `copula.index`.
    pub models: Vec<HeteroModel>,
    pub copula: CopulaModel,
    pub s_max: usize,
    /// Standardized scenario errors, row-major `[s * dim + k]`.
    pub u_block: Vec<f64>,
    pub seed: u64,
    pub report: TrainingReport,
}

impl TrainedBundle {
    pub fn index(&self) -> IndexMap {
        self.copula.index
    }

    pub fn dim(&self) -> usize {
        self.copula.dim()
    }

    pub fn u_row(&self, s: usize) -> &[f64] {
        let d = self.dim();
        &self.u_block[s * d..(s + 1) * d]
    }

    /// Structural checks run after loading.
    pub fn validate(&self) -> Result<()> {
        let index = self.index();
        let d = index.dim();
        if index.n_farms != self.registry.len() || index.n_tau != self.grid.n_tau {
            return Err(Error::BundleFormat("index does not match registry and grid".into()));
        }
        let mismatch = |expected, actual| Error::DimensionMismatch { expected, actual };
        if self.models.len() != d {
            return Err(mismatch(d, self.models.len()));
        }
        if self.copula.sigma_n.shape() != (d, d) || self.copula.chol.shape() != (d, d) {
            return Err(mismatch(d, self.copula.sigma_n.nrows()));
        }
        if self.u_block.len() != self.s_max * d {
            return Err(mismatch(self.s_max * d, self.u_block.len()));
        }
        for (k, m) in self.models.iter().enumerate() {
            let (w, tau) = index.unflat(k);
            if m.layout.farm != w || m.layout.tau != tau {
                return Err(Error::BundleFormat(format!("model {k} is for ({}, {})", m.layout.farm, m.layout.tau)));
            }
            if m.alpha.len() != m.layout.len() || m.beta.len() != m.layout.len() {
                return Err(mismatch(m.layout.len(), m.alpha.len()));
            }
        }
        Ok(())
    }
}

/// Regression fits for every model, before the residual window is used.
#[derive(Debug, Clone)]
pub struct FittedGrid {
    pub index: IndexMap,
    pub layouts: Vec<FeatureLayout>,
    pub fits: Vec<Option<RegressionFit>>,
    pub reports: Vec<ModelReport>,
    pub regression_window: Window,
}

impl FittedGrid {
    /// Multiply every scale coefficient by `c`.
    pub fn scale_beta(&mut self, c: f64) {
        for fit in self.fits.iter_mut().flatten() {
            *fit = fit.scaled(c);
        }
    }
}

fn check_grid(panel: &SeriesPanel, cfg: &RunConfig) -> Result<()> {
    if panel.grid() != cfg.horizon {
        return Err(Error::Config(format!(
            "panel has {} horizons of {} min, configuration expects {} of {} min",
            panel.n_tau(),
            panel.grid().step_minutes,
            cfg.horizon.n_tau,
            cfg.horizon.step_minutes
        )));
    }
    Ok(())
}

/// `(window, first slot, end slot)` of the `days`-long window ending at the
/// configured training end.
fn training_window(panel: &SeriesPanel, cfg: &RunConfig, days: u32, stride: usize) -> Result<(Window, usize, usize)> {
    let end = cfg.training_end(panel.end());
    let start = end - Duration::days(days as i64);
    let s0 = panel.slot_ceil(start);
    let e = panel.slot_ceil(end);
    if s0 >= e {
        return Err(Error::EmptyWindow {
            start: format_instant(start),
            end: format_instant(end),
        });
    }
    let window = Window {
        start: panel.timestamp(s0),
        end: panel.timestamp(e),
        slots: (e - s0).div_ceil(stride),
    };
    Ok((window, s0, e))
}

fn empty_report(panel: &SeriesPanel, w: usize, tau: usize, features: usize) -> ModelReport {
    ModelReport {
        farm_id: panel.registry().farm(w).id.clone(),
        tau,
        features,
        regression_rows: 0,
        regression_dropped: 0,
        residual_rows: 0,
        residual_dropped: 0,
        flags: ModelFlags::default(),
    }
}

/// Point and scale regressions on the regression window.
pub fn fit_regressions(panel: &SeriesPanel, cfg: &RunConfig) -> Result<FittedGrid> {
    check_grid(panel, cfg)?;
    let index = IndexMap::new(panel.n_farms(), panel.n_tau());
    let stride = cfg.windows.regression_stride;
    let (regression_window, s0, e) = training_window(panel, cfg, cfg.windows.regression_days, stride)?;
    let results: Vec<Result<(FeatureLayout, Option<RegressionFit>, ModelReport)>> = (0..index.dim())
        .into_par_iter()
        .map(|k| {
            let (w, tau) = index.unflat(k);
            let layout = FeatureLayout::new(&cfg.features, panel, w, tau)?;
            let mut report = empty_report(panel, w, tau, layout.len());
            let slots = (s0..e).step_by(stride).filter(|t| t + tau < e);
            let fit = match build_dataset_over(panel, w, tau, &cfg.features, slots) {
                Ok(ds) => {
                    report.regression_rows = ds.rows();
                    report.regression_dropped = ds.dropped;
                    HeteroModel::fit_regression(&ds, panel.registry().capacity(w))
                }
                Err(Error::InsufficientHistory { .. }) => None,
                Err(err) => return Err(err),
            };
            if let Some(f) = &fit {
                report.flags = f.flags;
            }
            Ok((layout, fit, report))
        })
        .collect();
    let mut layouts = Vec::with_capacity(index.dim());
    let mut fits = Vec::with_capacity(index.dim());
    let mut reports = Vec::with_capacity(index.dim());
    for r in results {
        let (layout, fit, report) = r?;
        layouts.push(layout);
        fits.push(fit);
        reports.push(report);
    }
    if fits.iter().all(Option::is_none) {
        let (k, best) = reports
            .iter()
            .enumerate()
            .max_by_key(|(_, r)| r.regression_rows)
            .expect("at least one model");
        let (w, tau) = index.unflat(k);
        return Err(Error::InsufficientHistory {
            farm: w,
            tau,
            usable: best.regression_rows,
            required: MIN_ROWS_PER_FEATURE * best.features,
        });
    }
    Ok(FittedGrid {
        index,
        layouts,
        fits,
        reports,
        regression_window,
    })
}

/// Residual distributions, copula, and the standardized block.
pub fn calibrate(panel: &SeriesPanel, cfg: &RunConfig, fitted: FittedGrid) -> Result<TrainedBundle> {
    check_grid(panel, cfg)?;
    let index = fitted.index;
    let dim = index.dim();
    let n_tau = panel.n_tau();
    let stride = cfg.windows.residual_stride;
    let (residual_window, r0, e) = training_window(panel, cfg, cfg.windows.residual_days, stride)?;
    // Rows align across models, so every target must fall inside the window.
    let slots: Vec<usize> = (r0..e).step_by(stride).filter(|t| t + n_tau < e).collect();
    let rows = slots.len();

    let FittedGrid {
        layouts,
        fits,
        mut reports,
        regression_window,
        ..
    } = fitted;
    let per_model: Vec<Result<(HeteroModel, Option<Vec<f64>>, usize, usize)>> = layouts
        .into_par_iter()
        .zip(fits.into_par_iter())
        .enumerate()
        .map(|(k, (layout, fit))| {
            let (w, tau) = index.unflat(k);
            let cap = panel.registry().capacity(w);
            let Some(fit) = fit else {
                return Ok((HeteroModel::climatological(layout, cap), None, 0, 0));
            };
            let ds = match build_dataset_over(panel, w, tau, &cfg.features, slots.iter().copied()) {
                Ok(ds) => ds,
                Err(Error::InsufficientHistory { .. }) => {
                    return Ok((HeteroModel::climatological(layout, cap), None, 0, 0));
                }
                Err(err) => return Err(err),
            };
            if ds.rows() < MIN_ECDF_SAMPLES {
                return Ok((HeteroModel::climatological(layout, cap), None, ds.rows(), ds.dropped));
            }
            let u = standardize(&ds, &fit.alpha, &fit.beta, fit.h_floor);
            let ecdf = EcdfTable::new(u.clone())?;
            let mut g = vec![f64::NAN; rows];
            for (i, &slot) in ds.slots.iter().enumerate() {
                g[(slot - r0) / stride] = to_gaussian(u[i], &ecdf);
            }
            let model = HeteroModel {
                alpha: fit.alpha,
                beta: fit.beta,
                ecdf,
                layout,
                h_floor: fit.h_floor,
                flags: fit.flags,
            };
            Ok((model, Some(g), ds.rows(), ds.dropped))
        })
        .collect();

    let mut models = Vec::with_capacity(dim);
    let mut g = DMatrix::from_element(rows, dim, f64::NAN);
    let mut excluded = Vec::new();
    for (k, r) in per_model.into_iter().enumerate() {
        let (model, column, used, dropped) = r?;
        reports[k].residual_rows = used;
        reports[k].residual_dropped = dropped;
        reports[k].flags = model.flags;
        match column {
            Some(col) => g.set_column(k, &nalgebra::DVector::from_vec(col)),
            None => excluded.push(k),
        }
        models.push(model);
    }
    let copula = if excluded.len() == dim {
        let mut c = CopulaModel::identity(index);
        c.diagnostics.excluded = excluded;
        c
    } else {
        estimate_correlation_excluding(&g, index, &excluded)?
    };
    drop(g);

    let u_block = draw_standardized_block(&copula, &models, cfg.copula.s_max, cfg.seed);
    let diag: Vec<f64> = copula.chol.diagonal().iter().copied().collect();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let report = TrainingReport {
        seed: cfg.seed,
        config_hash: cfg.hash(),
        regression_window,
        residual_window,
        models: reports,
        missing_power_cells: panel.missing_power_cells(),
        copula: copula.diagnostics.clone(),
        sigma_condition_estimate: (hi / lo).powi(2),
    };
    Ok(TrainedBundle {
        registry: panel.registry().clone(),
        grid: panel.grid(),
        features: cfg.features.clone(),
        models,
        copula,
        s_max: cfg.copula.s_max,
        u_block,
        seed: cfg.seed,
        report,
    })
}

/// Correlated Gaussian rows mapped through each model's ECDF.
pub fn draw_standardized_block(copula: &CopulaModel, models: &[HeteroModel], rows: usize, seed: u64) -> Vec<f64> {
    let dim = copula.dim();
    let mut data = draw_block(copula, rows, seed).data;
    data.par_chunks_mut(dim).for_each(|row| {
        for (v, m) in row.iter_mut().zip(models) {
            *v = from_gaussian(*v, &m.ecdf);
        }
    });
    data
}

/// Every offline stage: regressions, residual ECDFs, copula and sample block.
pub fn train(panel: &SeriesPanel, cfg: &RunConfig) -> Result<TrainedBundle> {
    let fitted = fit_regressions(panel, cfg)?;
    calibrate(panel, cfg, fitted)
}

/// How the online parameters of one model were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnlineStatus {
    Model,
    /// The model itself is a training-time fallback.
    Climatological,
    /// A feature was unavailable; zero correction with fallback spread.
    MissingFeatures,
    /// No forecast; persistence of the last measurement with fallback spread.
    MissingNwp,
}

/// Online predictions at one issue time, shared by every scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineState {
    pub issue_time: DateTime<Utc>,
    pub slot: usize,
    /// `F_t^tau` per flat index.
    pub nwp: Vec<f64>,
    pub y_hat: Vec<f64>,
    pub h_hat: Vec<f64>,
    pub status: Vec<OnlineStatus>,
}

fn fallback_scale(model: &HeteroModel, cap: f64) -> f64 {
    let sd = model.ecdf.std_dev();
    let sd = if sd.is_finite() && sd > 0.0 { sd } else { 1.0 };
    (FALLBACK_SPREAD * cap / sd).max(model.h_floor)
}

fn check_panel(bundle: &TrainedBundle, panel: &SeriesPanel) -> Result<()> {
    let same_farms = panel.registry().len() == bundle.registry.len()
        && panel
            .registry()
            .farms()
            .iter()
            .zip(bundle.registry.farms())
            .all(|(a, b)| a.id == b.id);
    if !same_farms {
        return Err(Error::Config("panel farms differ from the trained bundle".into()));
    }
    if panel.grid() != bundle.grid {
        return Err(Error::DimensionMismatch {
            expected: bundle.grid.n_tau,
            actual: panel.n_tau(),
        });
    }
    Ok(())
}

/// `(y_hat, h_hat)` for every model at `t_now`.
pub fn prepare(bundle: &TrainedBundle, panel: &SeriesPanel, t_now: DateTime<Utc>) -> Result<OnlineState> {
    check_panel(bundle, panel)?;
    let slot = panel
        .slot_of(t_now)
        .filter(|&s| s < panel.len())
        .ok_or_else(|| Error::OutOfPanel(format_instant(t_now)))?;
    let index = bundle.index();
    let per: Vec<Result<(f64, f64, f64, OnlineStatus)>> = bundle
        .models
        .par_iter()
        .enumerate()
        .map(|(k, model)| {
            let (w, tau) = index.unflat(k);
            let cap = bundle.registry.capacity(w);
            let Some(f) = panel.nwp(slot, w, tau) else {
                let p = panel.power(slot, w).unwrap_or(0.5 * cap);
                return Ok((p, 0.0, fallback_scale(model, cap), OnlineStatus::MissingNwp));
            };
            match online_row_at(&model.layout, panel, slot) {
                Ok(x) => {
                    let (y, h) = model.predict(&x)?;
                    let status = if model.flags.climatological {
                        OnlineStatus::Climatological
                    } else {
                        OnlineStatus::Model
                    };
                    Ok((f, y, h, status))
                }
                Err(Error::UnavailableFeature(_)) => {
                    Ok((f, 0.0, fallback_scale(model, cap), OnlineStatus::MissingFeatures))
                }
                Err(err) => Err(err),
            }
        })
        .collect();
    let d = index.dim();
    let mut state = OnlineState {
        issue_time: t_now,
        slot,
        nwp: Vec::with_capacity(d),
        y_hat: Vec::with_capacity(d),
        h_hat: Vec::with_capacity(d),
        status: Vec::with_capacity(d),
    };
    for r in per {
        let (f, y, h, s) = r?;
        state.nwp.push(f);
        state.y_hat.push(y);
        state.h_hat.push(h);
        state.status.push(s);
    }
    Ok(state)
}

/// Equally weighted joint trajectories of all farms over all horizons.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub issue_time: DateTime<Utc>,
    pub farm_ids: Vec<String>,
    pub capacities: Vec<f64>,
    pub n_tau: usize,
    /// MW, `[s * dim + k]` with `k = w * n_tau + tau - 1`.
    pub scenarios: Vec<f64>,
    /// MW, `[k]`.
    pub point_forecast: Vec<f64>,
    pub weights: Vec<f64>,
    pub status: Vec<OnlineStatus>,
    /// Fraction of scenario values moved by clamping to `[0, capacity]`.
    pub clamp_rate: f64,
}

impl ScenarioSet {
    pub fn n_farms(&self) -> usize {
        self.farm_ids.len()
    }

    pub fn dim(&self) -> usize {
        self.n_farms() * self.n_tau
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.scenarios[s * self.dim()..(s + 1) * self.dim()]
    }

    pub fn value(&self, s: usize, w: usize, tau: usize) -> f64 {
        self.scenarios[s * self.dim() + w * self.n_tau + tau - 1]
    }

    /// Fleet total per scenario, `[s * n_tau + tau - 1]`, summed in farm order.
    pub fn aggregate(&self) -> Vec<f64> {
        let n_tau = self.n_tau;
        let mut out = vec![0.0; self.len() * n_tau];
        for (s, agg) in out.chunks_mut(n_tau).enumerate() {
            for farm in self.row(s).chunks(n_tau) {
                for (a, v) in agg.iter_mut().zip(farm) {
                    *a += v;
                }
            }
        }
        out
    }

    /// Fleet total of the point forecast, `[tau - 1]`.
    pub fn aggregate_point(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_tau];
        for farm in self.point_forecast.chunks(self.n_tau) {
            for (a, v) in out.iter_mut().zip(farm) {
                *a += v;
            }
        }
        out
    }
}

/// `F + y_hat + u * h_hat` for the first `s` rows of the block,
/// clamped to `[0, capacity]`.
pub fn assemble(state: &OnlineState, bundle: &TrainedBundle, s: usize) -> Result<ScenarioSet> {
    if s == 0 {
        return Err(Error::Usage("scenario count must be at least 1".into()));
    }
    if s > bundle.s_max {
        return Err(Error::TooManyScenarios {
            requested: s,
            available: bundle.s_max,
        });
    }
    let index = bundle.index();
    let dim = index.dim();
    let caps: Vec<f64> = (0..dim).map(|k| bundle.registry.capacity(index.unflat(k).0)).collect();
    let shift: Vec<f64> = state.nwp.iter().zip(&state.y_hat).map(|(f, y)| f + y).collect();
    let mut scenarios = vec![0.0; s * dim];
    let clamped: usize = scenarios
        .par_chunks_mut(dim)
        .zip(bundle.u_block[..s * dim].par_chunks(dim))
        .map(|(out, u)| {
            let mut n = 0;
            for k in 0..dim {
                let v = shift[k] + u[k] * state.h_hat[k];
                let c = v.clamp(0.0, caps[k]);
                n += (c != v) as usize;
                out[k] = c;
            }
            n
        })
        .sum();
    let point_forecast = shift.iter().zip(&caps).map(|(v, &c)| v.clamp(0.0, c)).collect();
    Ok(ScenarioSet {
        issue_time: state.issue_time,
        farm_ids: bundle.registry.farms().iter().map(|f| f.id.clone()).collect(),
        capacities: (0..index.n_farms).map(|w| bundle.registry.capacity(w)).collect(),
        n_tau: index.n_tau,
        scenarios,
        point_forecast,
        weights: vec![1.0 / s as f64; s],
        status: state.status.clone(),
        clamp_rate: clamped as f64 / (s * dim) as f64,
    })
}

/// [`prepare`] then [`assemble`].
pub fn generate(bundle: &TrainedBundle, panel: &SeriesPanel, t_now: DateTime<Utc>, s: usize) -> Result<ScenarioSet> {
    let state = prepare(bundle, panel, t_now)?;
    assemble(&state, bundle, s)
}
