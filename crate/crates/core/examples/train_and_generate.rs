//! Train on a synthetic feed and generate scenarios for the latest forecast issue.

use chrono::Duration;
use windscen::pipeline::{generate, train, RunConfig};
use windscen::synth::{generate_feed, OracleSpec};
use windscen::timeseries::HorizonGrid;

fn main() -> windscen::Result<()> {
    let n_tau = 12;
    let spec = OracleSpec {
        n_farms: 3,
        n_tau,
        neighbors: 2,
        seed: 21,
        ..OracleSpec::default()
    };
    let (panel, _) = generate_feed(&spec, Duration::days(40))?;
    let mut cfg = RunConfig::default();
    cfg.horizon = HorizonGrid::new(n_tau);
    cfg.windows.regression_days = 14;
    cfg.windows.residual_days = 20;
    cfg.copula.s_max = 500;
    let bundle = train(&panel, &cfg)?;
    println!("trained {} models; copula from {} rows", bundle.models.len(), bundle.report.copula.rows_used);

    let t = panel.timestamp(*panel.issue_slots().last().expect("issues"));
    let set = generate(&bundle, &panel, t, 5)?;
    println!("issue {t}");
    for (w, id) in set.farm_ids.iter().enumerate() {
        let point: Vec<String> = (1..=n_tau).map(|tau| format!("{:.1}", set.point_forecast[w * n_tau + tau - 1])).collect();
        println!("  {id} point  {}", point.join(" "));
        for s in 0..set.len() {
            let v: Vec<String> = (1..=n_tau).map(|tau| format!("{:.1}", set.value(s, w, tau))).collect();
            println!("  {id} s={s}    {}", v.join(" "));
        }
    }
    println!("fleet totals, first scenario: {:.1?}", &set.aggregate()[..n_tau]);
    Ok(())
}
