//! Score per-farm scenarios against fleet-only scenarios on a held-out window.

use chrono::Duration;
use windscen::metrics::{compare_representations, evaluation_slots, reliability, rmse_by_horizon};
use windscen::pipeline::{train, RunConfig};
use windscen::synth::{generate_feed, OracleSpec};
use windscen::timeseries::HorizonGrid;

fn main() -> windscen::Result<()> {
    let n_tau = 6;
    let spec = OracleSpec {
        n_farms: 3,
        n_tau,
        neighbors: 2,
        seed: 4,
        ..OracleSpec::default()
    };
    let (panel, _) = generate_feed(&spec, Duration::days(45))?;
    let mut cfg = RunConfig::default();
    cfg.horizon = HorizonGrid::new(n_tau);
    cfg.windows.residual_days = 30;
    cfg.metrics.eval_days = 2;
    cfg.metrics.scenarios = 100;

    let bundle = train(&panel, &cfg)?;
    let (start, end) = cfg.evaluation_window(panel.end());
    let issues = evaluation_slots(&panel, start, end, cfg.metrics.issue_every_minutes)?;
    for r in rmse_by_horizon(&bundle, &panel, &issues)? {
        println!("horizon {}: model RMSE {:.2} MW, NWP RMSE {:.2} MW", r.tau, r.model, r.nwp);
    }
    let every = evaluation_slots(&panel, start, end, 5)?;
    let rel = reliability(&bundle, &panel, 0, 1, &every, &cfg.metrics.levels)?;
    println!(
        "reliability max deviation: ECDF {:.3}, normal {:.3} over {} points",
        rel.max_deviation(),
        rel.gaussian_max_deviation(),
        rel.n_eval
    );

    let cmp = compare_representations(&panel, &cfg)?;
    println!("{} issues", cmp.issues.len());
    println!("per farm       {:?}", cmp.per_farm_mean);
    println!("aggregate only {:?}", cmp.aggregate_only_mean);
    Ok(())
}
