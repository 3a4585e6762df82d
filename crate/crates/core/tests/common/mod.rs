#![allow(dead_code)]

use chrono::Duration;
use windscen::features::online_row_at;
use windscen::pipeline::{RunConfig, TrainedBundle};
use windscen::synth::{generate_feed, GroundTruth, OracleSpec};
use windscen::timeseries::{HorizonGrid, SeriesPanel};

pub fn small_spec(n_farms: usize, n_tau: usize, seed: u64) -> OracleSpec {
    OracleSpec {
        n_farms,
        n_tau,
        neighbors: 2.min(n_farms - 1),
        seed,
        ..OracleSpec::default()
    }
}

pub fn feed(spec: &OracleSpec, days: i64) -> (SeriesPanel, GroundTruth) {
    generate_feed(spec, Duration::days(days)).unwrap()
}

pub fn config_for(n_tau: usize, s_max: usize) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.horizon = HorizonGrid::new(n_tau);
    cfg.copula.s_max = s_max;
    cfg
}

/// Oracle whose latent state and NWP bias forget within about ten slots, so
/// consecutive issues are close to independent; a forecast every slot.
pub fn short_memory_spec(n_farms: usize, n_tau: usize, seed: u64) -> OracleSpec {
    let mut spec = OracleSpec {
        ar: 0.9,
        issue_every: 1,
        ..small_spec(n_farms, n_tau, seed)
    };
    spec.nwp.bias_ar = 0.9;
    spec
}

/// Model forecast of `P_{t+tau}` at level `q`, unclamped, when every input is present.
pub fn model_quantile(bundle: &TrainedBundle, panel: &SeriesPanel, w: usize, tau: usize, t: usize, q: f64) -> Option<f64> {
    let model = &bundle.models[bundle.index().flat(w, tau)];
    let f = panel.nwp(t, w, tau)?;
    let x = online_row_at(&model.layout, panel, t).ok()?;
    let (y_hat, h_hat) = model.predict(&x).ok()?;
    Some(f + y_hat + h_hat * model.ecdf.inverse_clamped(q))
}

/// Issue slots of the last `days` of the panel whose horizons lie inside it.
pub fn held_out_slots(panel: &SeriesPanel, days: i64) -> Vec<usize> {
    let n = panel.len();
    let start = n - (days * 288) as usize;
    (start..n - panel.n_tau()).collect()
}
