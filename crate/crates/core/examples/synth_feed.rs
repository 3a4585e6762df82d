//! Generate a synthetic feed and write it as the CSV files the CLI reads.

use chrono::Duration;
use windscen::synth::{generate_feed, OracleSpec};
use windscen::timeseries::write_panel;

fn main() -> windscen::Result<()> {
    let spec = OracleSpec {
        n_farms: 4,
        n_tau: 12,
        neighbors: 2,
        seed: 7,
        ..OracleSpec::default()
    };
    let (panel, truth) = generate_feed(&spec, Duration::days(10))?;
    let dir = std::env::temp_dir().join("windscen-synth-feed");
    std::fs::create_dir_all(&dir)?;
    panel.registry().write(&dir.join("registry.csv"), None)?;
    write_panel(&panel, &dir.join("power.csv"), &dir.join("forecast.csv"), None)?;
    truth.write_sidecar(&dir.join("truth.json"), panel.registry(), None)?;

    println!("{} farms, {} slots, {} NWP issues", panel.n_farms(), panel.len(), panel.issue_slots().len());
    for w in 0..panel.n_farms() {
        let farm = panel.registry().farm(w);
        println!("  {} capacity {:.1} MW, neighbors {:?}", farm.id, farm.capacity_mw, farm.neighbors);
    }
    println!("written to {}", dir.display());
    Ok(())
}
