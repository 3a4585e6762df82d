//! Synthetic power and NWP feed from a fully known process.
//!
//! Latent state per farm is a stationary AR(1) `z_t = phi z_{t-1} + sqrt(1-phi^2) e_t`
//! with spatially correlated innovations `e_t ~ N(0, R)`. Power is
//! `P = cap * logistic(a + b z)`. An issue at slot `t` forecasts the latent
//! state `m = z_{t+tau} - delta_t - zeta_{t,tau}` and maps it through the same
//! curve. `delta` is a slowly varying AR(1) bias, `zeta` a jitter whose spread
//! grows with the horizon, correlated across horizons (`rho_h^|i-j|`) and
//! across farms (`R`). Because the curve flattens near 0 and capacity, the
//! error spread in MW depends on the forecast level.

use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::stats::{logistic, norm_cdf, norm_inv};
use crate::timeseries::{parse_instant, Farm, FarmRegistry, HorizonGrid, SeriesPanel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialCorrelation {
    /// `exp(-d / length)` between farm sites on the unit square.
    Exponential { length: f64 },
    /// Same correlation for every pair.
    Uniform { rho: f64 },
    Matrix { rows: Vec<Vec<f64>> },
}

/// Shape of the standardized jitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    Normal,
    /// Student t with `nu > 2` degrees of freedom, scaled to unit variance.
    ScaledT { nu: f64 },
}

impl NoiseFamily {
    /// Quantile of the unit-variance distribution.
    pub fn quantile(&self, p: f64) -> f64 {
        match *self {
            NoiseFamily::Normal => norm_inv(p),
            NoiseFamily::ScaledT { nu } => {
                let t = StudentsT::new(0.0, 1.0, nu).expect("validated nu");
                t.inverse_cdf(p) * ((nu - 2.0) / nu).sqrt()
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            NoiseFamily::Normal => norm_cdf(x),
            NoiseFamily::ScaledT { nu } => {
                let t = StudentsT::new(0.0, 1.0, nu).expect("validated nu");
                t.cdf(x / ((nu - 2.0) / nu).sqrt())
            }
        }
    }

    /// Density of the unit-variance distribution.
    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            NoiseFamily::Normal => crate::stats::norm_pdf(x),
            NoiseFamily::ScaledT { nu } => {
                let s = ((nu - 2.0) / nu).sqrt();
                let z = x / s;
                let ln_c = statrs::function::gamma::ln_gamma((nu + 1.0) / 2.0)
                    - statrs::function::gamma::ln_gamma(nu / 2.0)
                    - 0.5 * (nu * std::f64::consts::PI).ln();
                (ln_c - (nu + 1.0) / 2.0 * (1.0 + z * z / nu).ln()).exp() / s
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NwpNoise {
    /// Per-step AR coefficient of the bias `delta`.
    pub bias_ar: f64,
    /// Stationary standard deviation of `delta`.
    pub bias_sd: f64,
    /// Jitter spread at horizon `tau` is `jitter_base + jitter_slope * tau`.
    pub jitter_base: f64,
    pub jitter_slope: f64,
    pub horizon_correlation: f64,
    pub family: NoiseFamily,
}

impl Default for NwpNoise {
    fn default() -> Self {
        Self {
            bias_ar: 0.995,
            bias_sd: 0.3,
            jitter_base: 0.05,
            jitter_slope: 0.01,
            horizon_correlation: 0.9,
            family: NoiseFamily::Normal,
        }
    }
}

impl NwpNoise {
    pub fn none() -> Self {
        Self {
            bias_sd: 0.0,
            jitter_base: 0.0,
            jitter_slope: 0.0,
            ..Self::default()
        }
    }

    pub fn jitter_sd(&self, tau: usize) -> f64 {
        self.jitter_base + self.jitter_slope * tau as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSpec {
    pub n_farms: usize,
    /// Per-farm capacity in MW; a deterministic 40 to 164 MW spread when empty.
    pub capacities: Vec<f64>,
    pub spatial: SpatialCorrelation,
    /// Per-step AR(1) coefficient of the latent state.
    pub ar: f64,
    pub curve_center: f64,
    pub curve_slope: f64,
    pub nwp: NwpNoise,
    pub n_tau: usize,
    /// NWP issue cadence in 5-minute slots.
    pub issue_every: usize,
    /// Registry neighbors per farm, chosen by descending spatial correlation.
    pub neighbors: usize,
    pub start: DateTime<Utc>,
    pub seed: u64,
    /// Keep the forecast latent `m` for [`GroundTruth::context`].
    pub record_forecast_latent: bool,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self {
            n_farms: 5,
            capacities: Vec::new(),
            spatial: SpatialCorrelation::Exponential { length: 0.5 },
            ar: 0.995,
            curve_center: 0.0,
            curve_slope: 1.5,
            nwp: NwpNoise::default(),
            n_tau: 36,
            issue_every: 3,
            neighbors: 2,
            start: parse_instant("2021-06-01T00:00:00Z").expect("literal"),
            seed: 1,
            record_forecast_latent: true,
        }
    }
}

/// Deterministic spread of capacities.
pub fn default_capacity(w: usize) -> f64 {
    40.0 + 124.0 * ((w * 7919 % 97) as f64 / 96.0)
}

fn site(w: usize) -> (f64, f64) {
    let f = |x: f64| x - x.floor();
    (f(0.5 + w as f64 * 0.618_033_988_7), f(0.5 + w as f64 * 0.754_877_666_2))
}

impl OracleSpec {
    pub fn capacities(&self) -> Vec<f64> {
        if self.capacities.is_empty() {
            (0..self.n_farms).map(default_capacity).collect()
        } else {
            self.capacities.clone()
        }
    }

    pub fn spatial_matrix(&self) -> DMatrix<f64> {
        let n = self.n_farms;
        match &self.spatial {
            SpatialCorrelation::Exponential { length } => DMatrix::from_fn(n, n, |i, j| {
                let (a, b) = (site(i), site(j));
                let d = ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
                (-d / length).exp()
            }),
            SpatialCorrelation::Uniform { rho } => {
                DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { *rho })
            }
            SpatialCorrelation::Matrix { rows } => {
                DMatrix::from_fn(n, n, |i, j| rows.get(i).and_then(|r| r.get(j)).copied().unwrap_or(f64::NAN))
            }
        }
    }

    pub fn horizon_matrix(&self) -> DMatrix<f64> {
        let r = self.nwp.horizon_correlation;
        DMatrix::from_fn(self.n_tau, self.n_tau, |i, j| r.powi((i as i32 - j as i32).abs()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidOracle(m.to_string()));
        if self.n_farms == 0 || self.n_tau == 0 || self.issue_every == 0 {
            return bad("n_farms, n_tau and issue_every must be positive");
        }
        if !(self.ar > -1.0 && self.ar < 1.0) || !(self.nwp.bias_ar > -1.0 && self.nwp.bias_ar < 1.0) {
            return bad("AR coefficients must lie in (-1, 1)");
        }
        if !(self.nwp.horizon_correlation > -1.0 && self.nwp.horizon_correlation < 1.0) {
            return bad("horizon correlation must lie in (-1, 1)");
        }
        let caps = self.capacities();
        if caps.len() != self.n_farms || caps.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return bad("need one positive capacity per farm");
        }
        if self.nwp.bias_sd < 0.0 || self.nwp.jitter_base < 0.0 || self.nwp.jitter_sd(self.n_tau) < 0.0 {
            return bad("noise spreads must be non-negative");
        }
        if let NoiseFamily::ScaledT { nu } = self.nwp.family {
            if !(nu > 2.0) {
                return bad("scaled t needs nu > 2");
            }
        }
        if !(self.curve_slope > 0.0) {
            return bad("curve slope must be positive");
        }
        let r = self.spatial_matrix();
        if r.iter().any(|v| !v.is_finite()) || (0..self.n_farms).any(|i| r[(i, i)] != 1.0) {
            return bad("spatial correlation must be finite with unit diagonal");
        }
        if (&r - r.transpose()).amax() > 0.0 {
            return bad("spatial correlation must be symmetric");
        }
        if psd_factor(&r).is_none() {
            return bad("spatial correlation is not positive semidefinite");
        }
        Ok(())
    }
}

/// Lower factor `L` with `L L' = a` for a PSD `a` (eigen-based, so singular
/// matrices such as all-ones are accepted).
fn psd_factor(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if let Some(c) = a.clone().cholesky() {
        return Some(c.unpack());
    }
    let eig = a.clone().symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(1.0);
    if eig.eigenvalues.min() < -1e-10 * scale {
        return None;
    }
    let mut v = eig.eigenvectors;
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        v.column_mut(j).scale_mut(l.max(0.0).sqrt());
    }
    Some(v)
}

/// Latent quantities behind a generated feed.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub spec: OracleSpec,
    pub capacities: Vec<f64>,
    pub spatial: DMatrix<f64>,
    /// `[slot * n_w + w]`, length `len + n_tau` slots.
    pub z: Vec<f64>,
    /// `[slot * n_w + w]`
    pub delta: Vec<f64>,
    /// `[(issue * n_w + w) * n_tau + tau - 1]` when recorded.
    pub m: Vec<f64>,
    pub issue_slots: Vec<usize>,
}

/// Everything the generating process conditions on for one forecast.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthContext {
    pub z_now: f64,
    pub delta: f64,
    pub m: f64,
    pub forecast_mw: f64,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    provenance: Option<&'a str>,
    spec: &'a OracleSpec,
    capacities: &'a [f64],
    spatial_correlation: Vec<Vec<f64>>,
    horizon_correlation: Vec<Vec<f64>>,
    jitter_sd: Vec<f64>,
    neighbors: Vec<Vec<usize>>,
}

impl GroundTruth {
    fn n_w(&self) -> usize {
        self.capacities.len()
    }

    /// Conditioning context of the forecast issued at `slot`; `None` when no
    /// issue happened there or the latent forecast was not recorded.
    pub fn context(&self, panel: &SeriesPanel, w: usize, slot: usize, tau: usize) -> Option<TruthContext> {
        let issue = self.issue_slots.binary_search(&slot).ok()?;
        let n_w = self.n_w();
        let m = *self.m.get((issue * n_w + w) * self.spec.n_tau + tau - 1)?;
        Some(TruthContext {
            z_now: self.z[slot * n_w + w],
            delta: self.delta[slot * n_w + w],
            m,
            forecast_mw: panel.nwp(slot, w, tau)?,
        })
    }

    /// Posterior mean and variance of `z_{t+tau}` given a normal jitter.
    pub fn latent_posterior(&self, ctx: &TruthContext, tau: usize) -> (f64, f64) {
        let phi_tau = self.spec.ar.powi(tau as i32);
        let v = 1.0 - phi_tau * phi_tau;
        let s2 = self.spec.nwp.jitter_sd(tau).powi(2);
        let prior_mean = phi_tau * ctx.z_now;
        if s2 == 0.0 {
            return (ctx.m + ctx.delta, 0.0);
        }
        let mean = (s2 * prior_mean + v * (ctx.m + ctx.delta)) / (v + s2);
        (mean, v * s2 / (v + s2))
    }

    /// Quantile `q` of `z_{t+tau}` given the context.
    pub fn latent_quantile(&self, ctx: &TruthContext, tau: usize, q: f64) -> f64 {
        match self.spec.nwp.family {
            NoiseFamily::Normal => {
                let (mean, var) = self.latent_posterior(ctx, tau);
                mean + var.sqrt() * norm_inv(q)
            }
            family @ NoiseFamily::ScaledT { .. } => {
                let phi_tau = self.spec.ar.powi(tau as i32);
                let prior_sd = (1.0 - phi_tau * phi_tau).sqrt();
                let prior_mean = phi_tau * ctx.z_now;
                let s = self.spec.nwp.jitter_sd(tau);
                let obs = ctx.m + ctx.delta;
                if s == 0.0 {
                    return obs;
                }
                let density = |z: f64| {
                    crate::stats::norm_pdf((z - prior_mean) / prior_sd) * family.pdf((z - obs) / s)
                };
                quantile_by_quadrature(density, prior_mean, prior_sd, q)
            }
        }
    }

    /// Quantile `q` of the target `y = P_{t+tau} - F_t^tau` in MW.
    pub fn true_quantile(&self, ctx: &TruthContext, w: usize, tau: usize, q: f64) -> f64 {
        let z = self.latent_quantile(ctx, tau, q);
        let cap = self.capacities[w];
        cap * logistic(self.spec.curve_center + self.spec.curve_slope * z) - ctx.forecast_mw
    }

    pub fn write_sidecar(&self, path: &Path, registry: &FarmRegistry, provenance: Option<&str>) -> Result<()> {
        let rows = |m: &DMatrix<f64>| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        let sidecar = Sidecar {
            provenance,
            spec: &self.spec,
            capacities: &self.capacities,
            spatial_correlation: rows(&self.spatial),
            horizon_correlation: rows(&self.spec.horizon_matrix()),
            jitter_sd: (1..=self.spec.n_tau).map(|t| self.spec.nwp.jitter_sd(t)).collect(),
            neighbors: (0..registry.len()).map(|w| registry.neighbors(w).to_vec()).collect(),
        };
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(f, &sidecar)?;
        Ok(())
    }
}

/// Quantile of an unnormalized density concentrated within a few `scale`
/// of `center`, by trapezoid integration on a fine grid.
fn quantile_by_quadrature(density: impl Fn(f64) -> f64, center: f64, scale: f64, q: f64) -> f64 {
    const N: usize = 20_000;
    let lo = center - 12.0 * scale;
    let hi = center + 12.0 * scale;
    let h = (hi - lo) / N as f64;
    let f: Vec<f64> = (0..=N).map(|i| density(lo + i as f64 * h)).collect();
    let mut cum = vec![0.0; N + 1];
    for i in 1..=N {
        cum[i] = cum[i - 1] + 0.5 * h * (f[i - 1] + f[i]);
    }
    let target = q * cum[N];
    let k = cum.partition_point(|&c| c < target).clamp(1, N);
    let (c0, c1) = (cum[k - 1], cum[k]);
    let frac = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.5 };
    lo + (k as f64 - 1.0 + frac) * h
}

/// Registry for the spec: ids `WF001`..., neighbors by correlation rank.
pub fn oracle_registry(spec: &OracleSpec) -> Result<FarmRegistry> {
    let r = spec.spatial_matrix();
    let caps = spec.capacities();
    let n = spec.n_farms;
    let id = |w: usize| format!("WF{:03}", w + 1);
    let farms = (0..n)
        .map(|w| {
            let mut others: Vec<usize> = (0..n).filter(|&j| j != w).collect();
            others.sort_by(|&a, &b| r[(w, b)].total_cmp(&r[(w, a)]).then(a.cmp(&b)));
            Farm {
                id: id(w),
                capacity_mw: caps[w],
                neighbors: others.into_iter().take(spec.neighbors).map(id).collect(),
            }
        })
        .collect();
    FarmRegistry::new(farms)
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Generate `duration` worth of 5-minute data.
pub fn generate_feed(spec: &OracleSpec, duration: Duration) -> Result<(SeriesPanel, GroundTruth)> {
    spec.validate()?;
    let len = (duration.num_minutes() / 5) as usize;
    if len == 0 {
        return Err(Error::InvalidOracle("duration shorter than one slot".into()));
    }
    let n_w = spec.n_farms;
    let n_tau = spec.n_tau;
    let caps = spec.capacities();
    let registry = oracle_registry(spec)?;
    let r = spec.spatial_matrix();
    let l_r = psd_factor(&r).expect("validated");
    let l_t = psd_factor(&spec.horizon_matrix()).expect("valid horizon correlation");

    let mut rng_z = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut rng_d = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut rng_j = ChaCha8Rng::seed_from_u64(spec.seed ^ 0xd1b5_4a32_d192_ed03);
    let correlated = |rng: &mut ChaCha8Rng| {
        let e = DVector::from_fn(n_w, |_, _| rng.sample::<f64, _>(StandardNormal));
        &l_r * e
    };

    let total = len + n_tau;
    let phi = spec.ar;
    let innov = (1.0 - phi * phi).sqrt();
    let mut z = Vec::with_capacity(total * n_w);
    z.extend(correlated(&mut rng_z).iter());
    for t in 1..total {
        let e = correlated(&mut rng_z);
        for w in 0..n_w {
            let prev = z[(t - 1) * n_w + w];
            z.push(phi * prev + innov * e[w]);
        }
    }

    let rho_b = spec.nwp.bias_ar;
    let bias_innov = spec.nwp.bias_sd * (1.0 - rho_b * rho_b).sqrt();
    let mut delta = Vec::with_capacity(len * n_w);
    delta.extend(correlated(&mut rng_d).iter().map(|v| v * spec.nwp.bias_sd));
    for t in 1..len {
        let e = correlated(&mut rng_d);
        for w in 0..n_w {
            let prev = delta[(t - 1) * n_w + w];
            delta.push(rho_b * prev + bias_innov * e[w]);
        }
    }

    let curve = |w: usize, x: f64| round3(caps[w] * logistic(spec.curve_center + spec.curve_slope * x));
    let power: Vec<f64> = (0..len * n_w).map(|i| curve(i % n_w, z[i])).collect();

    let issue_slots: Vec<usize> = (0..len).step_by(spec.issue_every).collect();
    let mut nwp = Vec::with_capacity(issue_slots.len() * n_w * n_tau);
    let mut m_all = if spec.record_forecast_latent {
        Vec::with_capacity(issue_slots.len() * n_w * n_tau)
    } else {
        Vec::new()
    };
    let l_r_t = l_r.transpose();
    let sd: Vec<f64> = (1..=n_tau).map(|t| spec.nwp.jitter_sd(t)).collect();
    let family = spec.nwp.family;
    for &t in &issue_slots {
        let raw: Vec<f64> = (0..n_tau * n_w).map(|_| rng_j.sample(StandardNormal)).collect();
        // rows: horizons, columns: farms
        let g = &l_t * DMatrix::from_row_slice(n_tau, n_w, &raw) * &l_r_t;
        for w in 0..n_w {
            for ti in 0..n_tau {
                let zeta = match family {
                    NoiseFamily::Normal => sd[ti] * g[(ti, w)],
                    f => sd[ti] * f.quantile(norm_cdf(g[(ti, w)])),
                };
                let m = z[(t + ti + 1) * n_w + w] - delta[t * n_w + w] - zeta;
                nwp.push(curve(w, m));
                if spec.record_forecast_latent {
                    m_all.push(m);
                }
            }
        }
    }

    let panel = SeriesPanel::from_parts(
        registry,
        HorizonGrid::new(n_tau),
        spec.start,
        len,
        power,
        issue_slots.clone(),
        nwp,
    )?;
    let truth = GroundTruth {
        spec: spec.clone(),
        capacities: caps,
        spatial: r,
        z,
        delta,
        m: m_all,
        issue_slots,
    };
    Ok((panel, truth))
}

/// Draws from a Gaussian copula with correlation `corr`, returned as the
/// latent normal scores `[n x dim]`.
pub fn gaussian_copula_sample(corr: &DMatrix<f64>, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    let l = psd_factor(corr).ok_or_else(|| Error::InvalidOracle("correlation is not PSD".into()))?;
    let d = corr.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
    Ok(DMatrix::from_row_slice(n, d, &raw) * l.transpose())
}

/// `y = X alpha + (X beta) u` with `u` from `family`; column 0 of `X` is the
/// intercept, the rest uniform on `[0, x_max)`.
pub struct RegressionSample {
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
}

pub fn regression_sample(
    alpha: &[f64],
    beta: &[f64],
    family: NoiseFamily,
    n: usize,
    x_max: f64,
    seed: u64,
) -> RegressionSample {
    let p = alpha.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    let mut u = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..p)
            .map(|j| if j == 0 { 1.0 } else { rng.random_range(0.0..x_max) })
            .collect();
        let g: f64 = rng.sample(StandardNormal);
        let ui = match family {
            NoiseFamily::Normal => g,
            f => f.quantile(norm_cdf(g)),
        };
        let mean: f64 = row.iter().zip(alpha).map(|(a, b)| a * b).sum();
        let scale: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
        y.push(mean + scale * ui);
        u.push(ui);
        data.extend(row);
    }
    RegressionSample {
        x: DMatrix::from_row_slice(n, p, &data),
        y,
        u,
    }
}
