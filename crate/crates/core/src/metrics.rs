//! Point, probabilistic and multivariate scenario scores.
//!
//! Score definitions (all negatively oriented):
//!
//! * energy: `(1/S) sum_s |x - x_s| - (1/(2 S^2)) sum_{s,s'} |x_s - x_s'|`, Euclidean norm
//! * integrated distance: `sum_s sum_d |x_d - x_{s,d}|`, not divided by `S`
//! * variogram of order `p`: `sum_{i<j} (|x_i - x_j|^p - (1/S) sum_s |x_{s,i} - x_{s,j}|^p)^2`
//!
//! Reliability counts a realization equal to the forecast quantile as a hit,
//! so a point-mass forecast that is always exactly right scores 1 at every level.

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::online_row_at;
use crate::pipeline::{generate, prepare, train, RunConfig, TrainedBundle};
use crate::stats::{norm_cdf, norm_inv, pearson};
use crate::timeseries::{format_instant, SeriesPanel};

/// Evaluation counts below this are flagged.
pub const MIN_EVAL_POINTS: usize = 200;
/// Site id of the single-site panel used by the aggregate-only mode.
pub const AGGREGATE_ID: &str = "AGGREGATE";

pub fn rmse(actual: &[f64], forecast: &[f64]) -> Result<f64> {
    if actual.is_empty() {
        return Err(Error::EmptyInput);
    }
    if actual.len() != forecast.len() {
        return Err(Error::DimensionMismatch {
            expected: actual.len(),
            actual: forecast.len(),
        });
    }
    let ss: f64 = actual.iter().zip(forecast).map(|(a, f)| (a - f) * (a - f)).sum();
    Ok((ss / actual.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReliabilityCurve {
    pub levels: Vec<f64>,
    pub observed: Vec<f64>,
    /// Same count with a normal of the ECDF's standard deviation in place of the ECDF.
    pub gaussian_observed: Vec<f64>,
    pub n_eval: usize,
    pub low_sample: bool,
}

impl ReliabilityCurve {
    pub fn max_deviation(&self) -> f64 {
        max_dev(&self.levels, &self.observed)
    }

    pub fn gaussian_max_deviation(&self) -> f64 {
        max_dev(&self.levels, &self.gaussian_observed)
    }
}

fn max_dev(levels: &[f64], observed: &[f64]) -> f64 {
    levels
        .iter()
        .zip(observed)
        .map(|(q, o)| (q - o).abs())
        .fold(0.0, f64::max)
}

fn check_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(&q) = levels.iter().find(|&&q| !(q > 0.0 && q < 1.0)) {
        return Err(Error::ProbabilityOutOfRange(q));
    }
    if levels.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::Config("levels must be strictly increasing".into()));
    }
    Ok(())
}

/// Observed frequency of `realized[i] <= quantiles[i][j]` per level `j`.
pub fn reliability_from_quantiles(levels: &[f64], realized: &[f64], quantiles: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_levels(levels)?;
    if realized.is_empty() {
        return Err(Error::EmptyInput);
    }
    if quantiles.len() != realized.len() {
        return Err(Error::DimensionMismatch {
            expected: realized.len(),
            actual: quantiles.len(),
        });
    }
    let mut hits = vec![0usize; levels.len()];
    for (y, qs) in realized.iter().zip(quantiles) {
        if qs.len() != levels.len() {
            return Err(Error::DimensionMismatch {
                expected: levels.len(),
                actual: qs.len(),
            });
        }
        for (h, q) in hits.iter_mut().zip(qs) {
            *h += (y <= q) as usize;
        }
    }
    Ok(hits.iter().map(|&h| h as f64 / realized.len() as f64).collect())
}

/// Realized error and model inputs of one (farm, horizon) at slot `t`, if
/// every cell is present.
fn realized_with_prediction(bundle: &TrainedBundle, panel: &SeriesPanel, k: usize, t: usize) -> Option<(f64, f64, f64)> {
    let (w, tau) = bundle.index().unflat(k);
    let model = &bundle.models[k];
    let f = panel.nwp(t, w, tau)?;
    let p = panel.power(t + tau, w)?;
    let x = online_row_at(&model.layout, panel, t).ok()?;
    let (y_hat, h_hat) = model.predict(&x).ok()?;
    Some((p - f, y_hat, h_hat))
}

/// Reliability of model (`w`, `tau`) over the issue `slots`: the share of
/// realized errors at or below `y_hat + h_hat * F^-1(q)` for each level.
pub fn reliability(
    bundle: &TrainedBundle,
    panel: &SeriesPanel,
    w: usize,
    tau: usize,
    slots: &[usize],
    levels: &[f64],
) -> Result<ReliabilityCurve> {
    check_levels(levels)?;
    let k = bundle.index().flat(w, tau);
    let ecdf = &bundle.models[k].ecdf;
    let sd = ecdf.std_dev();
    let model_u: Vec<f64> = levels.iter().map(|&q| ecdf.inverse_clamped(q)).collect();
    let gauss_u: Vec<f64> = levels.iter().map(|&q| sd * norm_inv(q)).collect();
    let mut hits = vec![0usize; levels.len()];
    let mut gauss_hits = vec![0usize; levels.len()];
    let mut n = 0usize;
    for &t in slots {
        let Some((y, y_hat, h_hat)) = realized_with_prediction(bundle, panel, k, t) else {
            continue;
        };
        n += 1;
        for j in 0..levels.len() {
            hits[j] += (y <= y_hat + h_hat * model_u[j]) as usize;
            gauss_hits[j] += (y <= y_hat + h_hat * gauss_u[j]) as usize;
        }
    }
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let freq = |h: Vec<usize>| h.into_iter().map(|c| c as f64 / n as f64).collect();
    Ok(ReliabilityCurve {
        levels: levels.to_vec(),
        observed: freq(hits),
        gaussian_observed: freq(gauss_hits),
        n_eval: n,
        low_sample: n < MIN_EVAL_POINTS,
    })
}

/// Issue slots in `[start, end)` every `cadence_minutes`, phased on the first
/// forecast issue in the window, with every horizon realized inside the panel.
pub fn evaluation_slots(
    panel: &SeriesPanel,
    start: DateTime<Utc>,
    end: DateTime<Utc>,
    cadence_minutes: i64,
) -> Result<Vec<usize>> {
    let s0 = panel.slot_ceil(start);
    let s1 = panel.slot_ceil(end);
    let step = (cadence_minutes / panel.grid().step_minutes).max(1) as usize;
    let first = panel
        .issue_slots()
        .iter()
        .copied()
        .find(|&s| s >= s0 && s < s1)
        .unwrap_or(s0);
    let n_tau = panel.n_tau();
    let slots: Vec<usize> = (first..s1).step_by(step).filter(|t| t + n_tau < panel.len()).collect();
    if slots.is_empty() {
        return Err(Error::EmptyWindow {
            start: format_instant(start),
            end: format_instant(end),
        });
    }
    Ok(slots)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonRmse {
    pub tau: usize,
    pub n: usize,
    pub model: f64,
    pub nwp: f64,
}

/// RMSE of the point forecast and of the raw NWP per horizon, pooled over
/// farms and issue `slots`.
pub fn rmse_by_horizon(bundle: &TrainedBundle, panel: &SeriesPanel, slots: &[usize]) -> Result<Vec<HorizonRmse>> {
    let index = bundle.index();
    let n_tau = index.n_tau;
    let mut actual = vec![Vec::new(); n_tau];
    let mut model = vec![Vec::new(); n_tau];
    let mut nwp = vec![Vec::new(); n_tau];
    for &t in slots {
        let state = prepare(bundle, panel, panel.timestamp(t))?;
        for k in 0..index.dim() {
            let (w, tau) = index.unflat(k);
            let (Some(p), Some(f)) = (panel.power(t + tau, w), panel.nwp(t, w, tau)) else {
                continue;
            };
            let cap = bundle.registry.capacity(w);
            actual[tau - 1].push(p);
            model[tau - 1].push((state.nwp[k] + state.y_hat[k]).clamp(0.0, cap));
            nwp[tau - 1].push(f);
        }
    }
    (0..n_tau)
        .map(|i| {
            Ok(HorizonRmse {
                tau: i + 1,
                n: actual[i].len(),
                model: rmse(&actual[i], &model[i])?,
                nwp: rmse(&actual[i], &nwp[i])?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ScoreTriple {
    pub energy: f64,
    pub integrated_distance: f64,
    pub variogram: f64,
}

impl ScoreTriple {
    pub fn add(&self, o: &ScoreTriple) -> ScoreTriple {
        ScoreTriple {
            energy: self.energy + o.energy,
            integrated_distance: self.integrated_distance + o.integrated_distance,
            variogram: self.variogram + o.variogram,
        }
    }

    pub fn scale(&self, c: f64) -> ScoreTriple {
        ScoreTriple {
            energy: self.energy * c,
            integrated_distance: self.integrated_distance * c,
            variogram: self.variogram * c,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.energy.is_finite() && self.integrated_distance.is_finite() && self.variogram.is_finite()
    }
}

/// Number of scenarios in `scenarios` (row-major, `S x x.len()`).
fn scenario_count(x: &[f64], scenarios: &[f64]) -> Result<usize> {
    let d = x.len();
    if d == 0 || scenarios.is_empty() {
        return Err(Error::EmptyInput);
    }
    if scenarios.len() % d != 0 {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: scenarios.len() % d,
        });
    }
    Ok(scenarios.len() / d)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

pub fn energy_score(x: &[f64], scenarios: &[f64]) -> Result<f64> {
    let s = scenario_count(x, scenarios)?;
    let d = x.len();
    let rows: Vec<&[f64]> = scenarios.chunks(d).collect();
    let first: f64 = rows.iter().map(|r| dist(x, r)).sum::<f64>() / s as f64;
    let mut pairs = 0.0;
    for i in 0..s {
        for j in i + 1..s {
            pairs += dist(rows[i], rows[j]);
        }
    }
    // Each unordered pair appears twice in the full double sum.
    let second = 2.0 * pairs / (2.0 * (s * s) as f64);
    Ok((first - second).max(0.0))
}

pub fn integrated_distance(x: &[f64], scenarios: &[f64]) -> Result<f64> {
    scenario_count(x, scenarios)?;
    Ok(scenarios
        .chunks(x.len())
        .map(|r| r.iter().zip(x).map(|(a, b)| (a - b).abs()).sum::<f64>())
        .sum())
}

pub fn variogram_score(x: &[f64], scenarios: &[f64], p: f64) -> Result<f64> {
    let s = scenario_count(x, scenarios)?;
    let d = x.len();
    let mut total = 0.0;
    for i in 0..d {
        for j in i + 1..d {
            let obs = (x[i] - x[j]).abs().powf(p);
            // Mean taken relative to `obs` so identical scenarios give exactly 0.
            let diff = scenarios
                .chunks(d)
                .map(|r| (r[i] - r[j]).abs().powf(p) - obs)
                .sum::<f64>()
                / s as f64;
            total += diff * diff;
        }
    }
    Ok(total)
}

pub fn score_triple(x: &[f64], scenarios: &[f64], variogram_order: f64) -> Result<ScoreTriple> {
    Ok(ScoreTriple {
        energy: energy_score(x, scenarios)?,
        integrated_distance: integrated_distance(x, scenarios)?,
        variogram: variogram_score(x, scenarios, variogram_order)?,
    })
}

/// Rank-domain view of the dependence between two models.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankScatter {
    /// `(F_a(u_a), F_b(u_b))` of the realized standardized errors.
    pub real: Vec<(f64, f64)>,
    /// Ranks of `samples` bivariate normal draws at correlation `rho`.
    pub sampled: Vec<(f64, f64)>,
    /// Pearson correlation of the Gaussian transforms of the real ranks.
    pub rho: f64,
    /// The bundle's copula entry for the pair.
    pub model_rho: f64,
}

/// Standardized error of model `k` at slot `t`.
fn standardized_at(bundle: &TrainedBundle, panel: &SeriesPanel, k: usize, t: usize) -> Option<f64> {
    let (y, y_hat, h_hat) = realized_with_prediction(bundle, panel, k, t)?;
    Some((y - y_hat) / h_hat)
}

pub fn rank_scatter(
    bundle: &TrainedBundle,
    panel: &SeriesPanel,
    a: (usize, usize),
    b: (usize, usize),
    slots: &[usize],
    samples: usize,
    seed: u64,
) -> Result<RankScatter> {
    let index = bundle.index();
    let ka = index.flat(a.0, a.1);
    let kb = index.flat(b.0, b.1);
    let (ea, eb) = (&bundle.models[ka].ecdf, &bundle.models[kb].ecdf);
    let real: Vec<(f64, f64)> = slots
        .iter()
        .filter_map(|&t| {
            let ua = standardized_at(bundle, panel, ka, t)?;
            let ub = standardized_at(bundle, panel, kb, t)?;
            Some((ea.eval(ua), eb.eval(ub)))
        })
        .collect();
    if real.len() < 2 {
        return Err(Error::TooFewRows {
            rows: real.len(),
            required: 2,
        });
    }
    let ga: Vec<f64> = real.iter().map(|r| norm_inv(r.0)).collect();
    let gb: Vec<f64> = real.iter().map(|r| norm_inv(r.1)).collect();
    let rho = pearson(&ga, &gb).clamp(-1.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = (1.0 - rho * rho).max(0.0).sqrt();
    let sampled = (0..samples)
        .map(|_| {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            (norm_cdf(z1), norm_cdf(rho * z1 + c * z2))
        })
        .collect();
    Ok(RankScatter {
        real,
        sampled,
        rho,
        model_rho: bundle.copula.sigma_n[(ka, kb)],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IssueScores {
    pub issue_time: DateTime<Utc>,
    pub per_farm: ScoreTriple,
    pub aggregate_only: ScoreTriple,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepresentationComparison {
    pub issues: Vec<IssueScores>,
    pub per_farm_total: ScoreTriple,
    pub aggregate_only_total: ScoreTriple,
    pub per_farm_mean: ScoreTriple,
    pub aggregate_only_mean: ScoreTriple,
    pub scenarios: usize,
}

impl RepresentationComparison {
    /// Whether per-farm modelling scored lower on energy, integrated distance
    /// and variogram.
    pub fn per_farm_better(&self) -> [bool; 3] {
        let (a, b) = (&self.per_farm_total, &self.aggregate_only_total);
        [
            a.energy <= b.energy,
            a.integrated_distance <= b.integrated_distance,
            a.variogram <= b.variogram,
        ]
    }
}

/// Fleet-total realization over all horizons at issue slot `t`.
fn aggregate_realization(agg: &SeriesPanel, t: usize) -> Option<Vec<f64>> {
    (1..=agg.n_tau()).map(|tau| agg.power(t + tau, 0)).collect()
}

/// Score the fleet total from per-farm scenarios (summed over farms) against
/// scenarios from a model of the aggregate alone, over the evaluation window.
pub fn compare_representations(panel: &SeriesPanel, cfg: &RunConfig) -> Result<RepresentationComparison> {
    let per_farm = train(panel, cfg)?;
    let agg_panel = panel.aggregate(AGGREGATE_ID)?;
    let agg_bundle = train(&agg_panel, cfg)?;
    compare_with_bundles(panel, &agg_panel, &per_farm, &agg_bundle, cfg)
}

/// [`compare_representations`] with already trained bundles.
pub fn compare_with_bundles(
    panel: &SeriesPanel,
    agg_panel: &SeriesPanel,
    per_farm: &TrainedBundle,
    agg_bundle: &TrainedBundle,
    cfg: &RunConfig,
) -> Result<RepresentationComparison> {
    let (start, end) = cfg.evaluation_window(panel.end());
    for b in [per_farm, agg_bundle] {
        if b.report.regression_window.end > start || b.report.residual_window.end > start {
            return Err(Error::Config("evaluation window overlaps the training windows".into()));
        }
    }
    let slots = evaluation_slots(panel, start, end, cfg.metrics.issue_every_minutes)?;
    let s = cfg.metrics.scenarios;
    let p = cfg.metrics.variogram_order;
    let mut issues = Vec::with_capacity(slots.len());
    for t in slots {
        let Some(x) = aggregate_realization(agg_panel, t) else {
            continue;
        };
        let at = panel.timestamp(t);
        let farm_set = generate(per_farm, panel, at, s)?;
        let agg_set = generate(agg_bundle, agg_panel, at, s)?;
        issues.push(IssueScores {
            issue_time: at,
            per_farm: score_triple(&x, &farm_set.aggregate(), p)?,
            aggregate_only: score_triple(&x, &agg_set.scenarios, p)?,
        });
    }
    if issues.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sum = |f: fn(&IssueScores) -> ScoreTriple| {
        issues
            .iter()
            .fold(ScoreTriple::default(), |acc, i| acc.add(&f(i)))
    };
    let per_farm_total = sum(|i| i.per_farm);
    let aggregate_only_total = sum(|i| i.aggregate_only);
    let n = issues.len() as f64;
    Ok(RepresentationComparison {
        per_farm_mean: per_farm_total.scale(1.0 / n),
        aggregate_only_mean: aggregate_only_total.scale(1.0 / n),
        per_farm_total,
        aggregate_only_total,
        issues,
        scenarios: s,
    })
}
