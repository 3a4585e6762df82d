//! Save a trained bundle, load it back and check it generates the same scenarios.

use chrono::Duration;
use windscen::pipeline::{generate, load_bundle, save_bundle, train, RunConfig};
use windscen::synth::{generate_feed, OracleSpec};
use windscen::timeseries::HorizonGrid;

fn main() -> windscen::Result<()> {
    let spec = OracleSpec {
        n_farms: 2,
        n_tau: 6,
        neighbors: 1,
        seed: 2,
        ..OracleSpec::default()
    };
    let (panel, _) = generate_feed(&spec, Duration::days(40))?;
    let mut cfg = RunConfig::default();
    cfg.horizon = HorizonGrid::new(6);
    cfg.windows.residual_days = 30;
    let bundle = train(&panel, &cfg)?;

    let path = std::env::temp_dir().join("windscen-example.bundle");
    save_bundle(&bundle, &path)?;
    let loaded = load_bundle(&path)?;
    println!("bundle {} bytes, config hash {}", std::fs::metadata(&path)?.len(), loaded.report.config_hash);

    let t = panel.timestamp(*panel.issue_slots().last().expect("issues"));
    let a = generate(&bundle, &panel, t, 50)?;
    let b = generate(&loaded, &panel, t, 50)?;
    println!("identical scenarios after reload: {}", a.scenarios == b.scenarios);
    Ok(())
}
