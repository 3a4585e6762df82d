//! Single-threaded timing of the online path, with prediction and scenario
//! assembly timed separately.

use std::time::Instant;

use chrono::{DateTime, Duration, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{assemble, prepare, train, RunConfig, TrainedBundle};
use crate::error::{Error, Result};
use crate::synth::{generate_feed, OracleSpec};
use crate::timeseries::SeriesPanel;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub farms: usize,
    pub horizons: usize,
    pub scenarios: usize,
    pub repetition: usize,
    pub prepare_seconds: f64,
    pub assemble_seconds: f64,
    /// Digest of the generated values; identical across repetitions and runs.
    pub checksum: String,
}

impl BenchRow {
    pub fn online_seconds(&self) -> f64 {
        self.prepare_seconds + self.assemble_seconds
    }
}

fn digest(values: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn single_thread<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(pool.install(f))
}

/// Time `repetitions` runs of [`prepare`] and [`assemble`] at `t_now` for every count in
/// `scenarios`, on one thread.
pub fn bench(
    bundle: &TrainedBundle,
    panel: &SeriesPanel,
    t_now: DateTime<Utc>,
    scenarios: &[usize],
    repetitions: usize,
) -> Result<Vec<BenchRow>> {
    single_thread(|| {
        let mut rows = Vec::new();
        for &s in scenarios {
            for repetition in 0..repetitions {
                let t0 = Instant::now();
                let state = prepare(bundle, panel, t_now)?;
                let t1 = Instant::now();
                let set = assemble(&state, bundle, s)?;
                let t2 = Instant::now();
                rows.push(BenchRow {
                    farms: bundle.registry.len(),
                    horizons: bundle.grid.n_tau,
                    scenarios: s,
                    repetition,
                    prepare_seconds: (t1 - t0).as_secs_f64(),
                    assemble_seconds: (t2 - t1).as_secs_f64(),
                    checksum: digest(&set.scenarios),
                });
            }
        }
        Ok(rows)
    })?
}

/// Synthetic feed and configuration sized for one benchmark cell.
pub fn bench_setup(cfg: &RunConfig, farms: usize, horizons: usize) -> Result<(SeriesPanel, RunConfig)> {
    let days = cfg.bench.feed_days;
    let spec = OracleSpec {
        n_farms: farms,
        capacities: Vec::new(),
        n_tau: horizons,
        neighbors: cfg.synth.oracle.neighbors.min(farms.saturating_sub(1)),
        seed: cfg.seed,
        record_forecast_latent: false,
        ..cfg.synth.oracle.clone()
    };
    let (panel, _) = generate_feed(&spec, Duration::days(days as i64))?;
    let mut run = cfg.clone();
    run.horizon = panel.grid();
    run.windows.train_end = Some(panel.end());
    run.windows.regression_days = run.windows.regression_days.min(days);
    run.windows.residual_days = run.windows.residual_days.min(days);
    run.copula.s_max = cfg.bench.scenarios.iter().copied().max().unwrap_or(1);
    Ok((panel, run))
}

/// Train on a synthetic feed for every (farms, horizons) size and time the
/// online path at the last forecast issue of the feed.
pub fn bench_grid(cfg: &RunConfig) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &farms in &cfg.bench.farms {
        for &horizons in &cfg.bench.horizons {
            let (panel, run) = bench_setup(cfg, farms, horizons)?;
            let bundle = train(&panel, &run)?;
            let t_now = panel.timestamp(*panel.issue_slots().last().expect("feed has issues"));
            rows.extend(bench(&bundle, &panel, t_now, &cfg.bench.scenarios, cfg.bench.repetitions)?);
        }
    }
    Ok(rows)
}
