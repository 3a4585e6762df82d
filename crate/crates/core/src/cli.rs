//! Command-line front end: `synth`, `train`, `generate`, `evaluate`, `bench`.
//!
//! Every output is staged as `<name>.partial` and renamed only after the whole
//! command succeeds; on error the staged files are removed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::Duration;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{
    compare_with_bundles, evaluation_slots, rank_scatter, reliability, rmse_by_horizon, ScoreTriple, AGGREGATE_ID,
};
use crate::pipeline::bench::{bench, bench_grid, BenchRow};
use crate::pipeline::{generate, load_bundle, save_bundle, train, RunConfig, ScenarioSet, TrainedBundle};
use crate::synth::generate_feed;
use crate::timeseries::{format_instant, load_panel, parse_instant, write_panel, FarmRegistry, SeriesPanel};

#[derive(Debug, Parser)]
#[command(name = "windscen", version, about = "Correlated wind-farm power scenarios")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides `paths.output_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic registry, power and forecast feed plus its ground truth.
    Synth,
    /// Fit every model and the copula; write the bundle and a training report.
    Train,
    /// Scenarios, fleet totals and point forecast for one issue time.
    Generate {
        /// Issue time (RFC 3339); the latest forecast issue when omitted.
        #[arg(long)]
        at: Option<String>,
        #[arg(long, default_value_t = 15)]
        scenarios: usize,
    },
    /// RMSE, reliability, rank scatter and scenario scores over the evaluation window.
    Evaluate {
        /// Overrides `metrics.scenarios`.
        #[arg(long)]
        scenarios: Option<usize>,
    },
    /// Online timing over the configured (farms, horizons, scenarios) grid.
    Bench {
        /// Time the trained bundle on the configured feed at this count only.
        #[arg(long)]
        scenarios: Option<usize>,
        #[arg(long)]
        at: Option<String>,
    },
}

/// Files written by one command, renamed into place by [`Staged::commit`].
struct Staged {
    files: Vec<(PathBuf, PathBuf)>,
}

impl Staged {
    fn new() -> Self {
        Self { files: Vec::new() }
    }

    /// Staging path for `target`.
    fn path(&mut self, target: &Path) -> Result<PathBuf> {
        if let Some(dir) = target.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut partial = target.as_os_str().to_owned();
        partial.push(".partial");
        let partial = PathBuf::from(partial);
        self.files.push((partial.clone(), target.to_path_buf()));
        Ok(partial)
    }

    fn commit(mut self) -> Result<Vec<PathBuf>> {
        let files = std::mem::take(&mut self.files);
        let mut done = Vec::with_capacity(files.len());
        for (partial, target) in files {
            std::fs::rename(&partial, &target)?;
            done.push(target);
        }
        Ok(done)
    }
}

impl Drop for Staged {
    fn drop(&mut self) {
        for (partial, _) in &self.files {
            let _ = std::fs::remove_file(partial);
        }
    }
}

fn create(path: &Path, provenance: &str) -> Result<BufWriter<File>> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# {provenance}")?;
    Ok(out)
}

fn write_json<T: Serialize>(path: &Path, provenance: &str, value: &T) -> Result<()> {
    #[derive(Serialize)]
    struct WithProvenance<'a, T> {
        provenance: &'a str,
        #[serde(flatten)]
        value: &'a T,
    }
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, &WithProvenance { provenance, value })?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// Configuration after the file, the environment and the flags.
pub fn resolve_config(args: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.paths.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_inputs(cfg: &RunConfig) -> Result<SeriesPanel> {
    let registry = FarmRegistry::load(&cfg.paths.registry)?;
    load_panel(&cfg.paths.power, &cfg.paths.forecast, &registry, cfg.horizon)
}

/// Run one parsed command line; returns the files written.
pub fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    let cfg = resolve_config(&cli.global)?;
    match cli.command {
        Command::Synth => cmd_synth(&cfg),
        Command::Train => cmd_train(&cfg),
        Command::Generate { at, scenarios } => cmd_generate(&cfg, at.as_deref(), scenarios),
        Command::Evaluate { scenarios } => {
            let mut cfg = cfg;
            if let Some(s) = scenarios {
                cfg.metrics.scenarios = s;
            }
            cmd_evaluate(&cfg)
        }
        Command::Bench { scenarios, at } => cmd_bench(&cfg, scenarios, at.as_deref()),
    }
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let mut spec = cfg.synth.oracle.clone();
    spec.seed = cfg.seed;
    spec.n_tau = cfg.horizon.n_tau;
    let (panel, truth) = generate_feed(&spec, Duration::days(cfg.synth.days as i64))?;
    let prov = cfg.provenance();
    let mut staged = Staged::new();
    let registry = staged.path(&cfg.paths.registry)?;
    let power = staged.path(&cfg.paths.power)?;
    let forecast = staged.path(&cfg.paths.forecast)?;
    let sidecar = staged.path(&cfg.paths.output_dir.join("truth.json"))?;
    panel.registry().write(&registry, Some(&prov))?;
    write_panel(&panel, &power, &forecast, Some(&prov))?;
    truth.write_sidecar(&sidecar, panel.registry(), Some(&prov))?;
    staged.commit()
}

pub fn cmd_train(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let panel = load_inputs(cfg)?;
    let bundle = train(&panel, cfg)?;
    let mut staged = Staged::new();
    let bundle_path = staged.path(&cfg.paths.bundle)?;
    let report = staged.path(&cfg.paths.output_dir.join("training_report.json"))?;
    save_bundle(&bundle, &bundle_path)?;
    write_json(&report, &cfg.provenance(), &bundle.report)?;
    staged.commit()
}

fn issue_time(panel: &SeriesPanel, at: Option<&str>) -> Result<chrono::DateTime<chrono::Utc>> {
    match at {
        Some(s) => parse_instant(s).ok_or_else(|| Error::Usage(format!("cannot parse timestamp `{s}`"))),
        None => panel
            .issue_slots()
            .last()
            .map(|&s| panel.timestamp(s))
            .ok_or(Error::EmptyInput),
    }
}

fn write_scenarios(staged: &mut Staged, dir: &Path, prov: &str, set: &ScenarioSet) -> Result<()> {
    let ts = format_instant(set.issue_time);
    let n_tau = set.n_tau;

    let mut out = create(&staged.path(&dir.join("scenarios.csv"))?, prov)?;
    writeln!(out, "issue_time,scenario,farm_id,horizon_steps,power_mw")?;
    for s in 0..set.len() {
        for (w, id) in set.farm_ids.iter().enumerate() {
            for tau in 1..=n_tau {
                writeln!(out, "{ts},{s},{id},{tau},{}", set.value(s, w, tau))?;
            }
        }
    }
    out.flush()?;

    let mut out = create(&staged.path(&dir.join("scenarios_aggregate.csv"))?, prov)?;
    writeln!(out, "issue_time,scenario,horizon_steps,power_mw")?;
    for (s, row) in set.aggregate().chunks(n_tau).enumerate() {
        for (i, v) in row.iter().enumerate() {
            writeln!(out, "{ts},{s},{},{v}", i + 1)?;
        }
    }
    out.flush()?;

    let mut out = create(&staged.path(&dir.join("point_forecast.csv"))?, prov)?;
    writeln!(out, "issue_time,farm_id,horizon_steps,power_mw,status")?;
    for (w, id) in set.farm_ids.iter().enumerate() {
        for tau in 1..=n_tau {
            let k = w * n_tau + tau - 1;
            let status = serde_json::to_value(set.status[k])?;
            let status = status.as_str().unwrap_or_default();
            writeln!(out, "{ts},{id},{tau},{},{status}", set.point_forecast[k])?;
        }
    }
    for (i, v) in set.aggregate_point().iter().enumerate() {
        writeln!(out, "{ts},{AGGREGATE_ID},{},{v},", i + 1)?;
    }
    out.flush()?;
    Ok(())
}

pub fn cmd_generate(cfg: &RunConfig, at: Option<&str>, scenarios: usize) -> Result<Vec<PathBuf>> {
    if scenarios == 0 {
        return Err(Error::Usage("--scenarios must be at least 1".into()));
    }
    let panel = load_inputs(cfg)?;
    let bundle = load_bundle(&cfg.paths.bundle)?;
    let t = issue_time(&panel, at)?;
    let started = Instant::now();
    let set = generate(&bundle, &panel, t, scenarios)?;
    let elapsed = started.elapsed().as_secs_f64();
    let mut staged = Staged::new();
    write_scenarios(&mut staged, &cfg.paths.output_dir, &cfg.provenance(), &set)?;
    let files = staged.commit()?;
    println!(
        "generated {} scenarios for {} at {} in {elapsed:.3} s",
        set.len(),
        set.farm_ids.len(),
        format_instant(t)
    );
    Ok(files)
}

fn check_held_out(bundle: &TrainedBundle, start: chrono::DateTime<chrono::Utc>) -> Result<()> {
    let r = &bundle.report;
    if r.regression_window.end > start || r.residual_window.end > start {
        return Err(Error::Config(format!(
            "evaluation starts at {} but training ran until {}",
            format_instant(start),
            format_instant(r.regression_window.end.max(r.residual_window.end))
        )));
    }
    Ok(())
}

fn write_scores(path: &Path, prov: &str, rows: impl Iterator<Item = (String, ScoreTriple)>) -> Result<()> {
    let mut out = create(path, prov)?;
    writeln!(out, "issue_time,energy,integrated_distance,variogram")?;
    for (ts, s) in rows {
        writeln!(out, "{ts},{},{},{}", s.energy, s.integrated_distance, s.variogram)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct EvaluationSummary {
    window_start: String,
    window_end: String,
    issues: usize,
    reliability_farm: String,
    reliability_tau: usize,
    reliability_points: usize,
    reliability_low_sample: bool,
    rank_rho: f64,
    rank_model_rho: f64,
    scores_per_farm_total: ScoreTriple,
    scores_aggregate_only_total: ScoreTriple,
    per_farm_better: [bool; 3],
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let panel = load_inputs(cfg)?;
    let bundle = load_bundle(&cfg.paths.bundle)?;
    let (start, end) = cfg.evaluation_window(panel.end());
    check_held_out(&bundle, start)?;
    let m = &cfg.metrics;
    let n_w = panel.n_farms();
    for &(w, tau) in [(m.reliability_farm, m.reliability_tau)].iter().chain(&m.rank_pair) {
        if w >= n_w || tau == 0 || tau > panel.n_tau() {
            return Err(Error::Config(format!("(farm {w}, horizon {tau}) is not in the model grid")));
        }
    }
    let issues = evaluation_slots(&panel, start, end, m.issue_every_minutes)?;
    let every_slot = evaluation_slots(&panel, start, end, panel.grid().step_minutes)?;

    let rmse = rmse_by_horizon(&bundle, &panel, &issues)?;
    let rel = reliability(&bundle, &panel, m.reliability_farm, m.reliability_tau, &every_slot, &m.levels)?;
    let ranks = rank_scatter(&bundle, &panel, m.rank_pair[0], m.rank_pair[1], &every_slot, m.rank_samples, cfg.seed)?;
    let agg_panel = panel.aggregate(AGGREGATE_ID)?;
    let mut agg_cfg = cfg.clone();
    agg_cfg.windows.train_end = Some(bundle.report.regression_window.end.max(bundle.report.residual_window.end));
    let agg_bundle = train(&agg_panel, &agg_cfg)?;
    let cmp = compare_with_bundles(&panel, &agg_panel, &bundle, &agg_bundle, cfg)?;

    let prov = cfg.provenance();
    let dir = &cfg.paths.output_dir;
    let mut staged = Staged::new();

    let mut out = create(&staged.path(&dir.join("rmse.csv"))?, &prov)?;
    writeln!(out, "horizon_steps,n,model_rmse,nwp_rmse")?;
    for r in &rmse {
        writeln!(out, "{},{},{},{}", r.tau, r.n, r.model, r.nwp)?;
    }
    out.flush()?;

    let mut out = create(&staged.path(&dir.join("reliability.csv"))?, &prov)?;
    writeln!(out, "level,observed,gaussian_observed")?;
    for ((q, o), g) in rel.levels.iter().zip(&rel.observed).zip(&rel.gaussian_observed) {
        writeln!(out, "{q},{o},{g}")?;
    }
    out.flush()?;

    let mut out = create(&staged.path(&dir.join("rank_scatter.csv"))?, &prov)?;
    writeln!(out, "source,r1,r2")?;
    for (a, b) in &ranks.real {
        writeln!(out, "real,{a},{b}")?;
    }
    for (a, b) in &ranks.sampled {
        writeln!(out, "model,{a},{b}")?;
    }
    out.flush()?;

    write_scores(
        &staged.path(&dir.join("scores.csv"))?,
        &prov,
        cmp.issues.iter().map(|i| (format_instant(i.issue_time), i.per_farm)),
    )?;
    write_scores(
        &staged.path(&dir.join("scores_aggregate_only.csv"))?,
        &prov,
        cmp.issues.iter().map(|i| (format_instant(i.issue_time), i.aggregate_only)),
    )?;

    let mut out = create(&staged.path(&dir.join("representations.csv"))?, &prov)?;
    writeln!(out, "mode,statistic,energy,integrated_distance,variogram")?;
    for (mode, total, mean) in [
        ("per_farm", cmp.per_farm_total, cmp.per_farm_mean),
        ("aggregate_only", cmp.aggregate_only_total, cmp.aggregate_only_mean),
    ] {
        for (stat, s) in [("sum", total), ("mean", mean)] {
            writeln!(out, "{mode},{stat},{},{},{}", s.energy, s.integrated_distance, s.variogram)?;
        }
    }
    out.flush()?;

    let summary = EvaluationSummary {
        window_start: format_instant(start),
        window_end: format_instant(end),
        issues: cmp.issues.len(),
        reliability_farm: panel.registry().farm(m.reliability_farm).id.clone(),
        reliability_tau: m.reliability_tau,
        reliability_points: rel.n_eval,
        reliability_low_sample: rel.low_sample,
        rank_rho: ranks.rho,
        rank_model_rho: ranks.model_rho,
        scores_per_farm_total: cmp.per_farm_total,
        scores_aggregate_only_total: cmp.aggregate_only_total,
        per_farm_better: cmp.per_farm_better(),
    };
    write_json(&staged.path(&dir.join("evaluation_summary.json"))?, &prov, &summary)?;
    staged.commit()
}

fn write_bench(path: &Path, prov: &str, rows: &[BenchRow]) -> Result<()> {
    let mut out = create(path, prov)?;
    writeln!(
        out,
        "farms,horizons,scenarios,repetition,checksum,prepare_seconds,assemble_seconds,online_seconds"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.farms,
            r.horizons,
            r.scenarios,
            r.repetition,
            r.checksum,
            r.prepare_seconds,
            r.assemble_seconds,
            r.online_seconds()
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn cmd_bench(cfg: &RunConfig, scenarios: Option<usize>, at: Option<&str>) -> Result<Vec<PathBuf>> {
    let rows = match scenarios {
        Some(s) => {
            let panel = load_inputs(cfg)?;
            let bundle = load_bundle(&cfg.paths.bundle)?;
            let t = issue_time(&panel, at)?;
            bench(&bundle, &panel, t, &[s], cfg.bench.repetitions)?
        }
        None => bench_grid(cfg)?,
    };
    let mut staged = Staged::new();
    write_bench(&staged.path(&cfg.paths.output_dir.join("bench.csv"))?, &cfg.provenance(), &rows)?;
    let files = staged.commit()?;
    for r in &rows {
        println!(
            "farms={} horizons={} scenarios={} rep={} online={:.4}s (prepare {:.4}s, assemble {:.4}s)",
            r.farms,
            r.horizons,
            r.scenarios,
            r.repetition,
            r.online_seconds(),
            r.prepare_seconds,
            r.assemble_seconds
        );
    }
    Ok(files)
}
