//! Time online generation at several scenario counts.

use chrono::Duration;
use windscen::pipeline::bench::bench;
use windscen::pipeline::{train, RunConfig};
use windscen::synth::{generate_feed, OracleSpec};
use windscen::timeseries::HorizonGrid;

fn main() -> windscen::Result<()> {
    let n_tau = 12;
    let spec = OracleSpec {
        n_farms: 10,
        n_tau,
        neighbors: 2,
        seed: 9,
        ..OracleSpec::default()
    };
    let (panel, _) = generate_feed(&spec, Duration::days(35))?;
    let mut cfg = RunConfig::default();
    cfg.horizon = HorizonGrid::new(n_tau);
    cfg.windows.regression_days = 14;
    cfg.windows.residual_days = 20;
    cfg.copula.s_max = 2000;
    let bundle = train(&panel, &cfg)?;
    let t = panel.timestamp(*panel.issue_slots().last().expect("issues"));
    for r in bench(&bundle, &panel, t, &[100, 1000, 2000], 3)? {
        println!(
            "S={:>5} rep {}: prepare {:.4} s, assemble {:.4} s, checksum {}",
            r.scenarios, r.repetition, r.prepare_seconds, r.assemble_seconds, r.checksum
        );
    }
    Ok(())
}
