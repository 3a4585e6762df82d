//! Run configuration: one TOML file, every key overridable from the
//! environment as `WINDSCEN_SECTION__KEY=value`.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::FeatureSpec;
use crate::synth::OracleSpec;
use crate::timeseries::HorizonGrid;

pub const ENV_PREFIX: &str = "WINDSCEN_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub registry: PathBuf,
    pub power: PathBuf,
    pub forecast: PathBuf,
    pub bundle: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            registry: "data/registry.csv".into(),
            power: "data/power.csv".into(),
            forecast: "data/forecast.csv".into(),
            bundle: "out/model.bundle".into(),
            output_dir: "out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Windows {
    /// Window for the point and scale regressions.
    pub regression_days: u32,
    /// Window for the residual distributions and the copula.
    pub residual_days: u32,
    /// Use every `regression_stride`-th slot of the regression window.
    pub regression_stride: usize,
    /// Use every `residual_stride`-th slot of the residual window.
    pub residual_stride: usize,
    /// Exclusive end of both windows; the start of the evaluation window
    /// when unset, so the evaluation period is always held out.
    pub train_end: Option<DateTime<Utc>>,
}

impl Default for Windows {
    fn default() -> Self {
        Self {
            regression_days: 28,
            residual_days: 90,
            regression_stride: 1,
            residual_stride: 6,
            train_end: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CopulaConfig {
    /// Rows of the pre-drawn standardized scenario block.
    pub s_max: usize,
}

impl Default for CopulaConfig {
    fn default() -> Self {
        Self { s_max: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub levels: Vec<f64>,
    pub variogram_order: f64,
    pub scenarios: usize,
    /// Minutes between evaluation issues.
    pub issue_every_minutes: i64,
    pub eval_start: Option<DateTime<Utc>>,
    pub eval_end: Option<DateTime<Utc>>,
    /// Evaluation length when `eval_start` is unset, counted back from
    /// `eval_end` or the end of the panel.
    pub eval_days: u32,
    pub reliability_farm: usize,
    pub reliability_tau: usize,
    /// Two (farm index, horizon) pairs for the rank-domain scatter.
    pub rank_pair: [(usize, usize); 2],
    /// Model-sampled rank pairs drawn for the scatter.
    pub rank_samples: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            levels: (1..=19).map(|i| i as f64 * 0.05).collect(),
            variogram_order: 0.5,
            scenarios: 200,
            issue_every_minutes: 15,
            eval_start: None,
            eval_end: None,
            eval_days: 6,
            reliability_farm: 0,
            reliability_tau: 1,
            rank_pair: [(0, 1), (1, 1)],
            rank_samples: 4000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub days: u32,
    pub oracle: OracleSpec,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            days: 120,
            oracle: OracleSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub farms: Vec<usize>,
    pub horizons: Vec<usize>,
    pub scenarios: Vec<usize>,
    pub repetitions: usize,
    /// Length of the synthetic feed each benchmark bundle is trained on.
    pub feed_days: u32,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            farms: vec![2, 10],
            horizons: vec![3, 36],
            scenarios: vec![10, 1000, 10_000],
            repetitions: 3,
            feed_days: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub horizon: HorizonGrid,
    pub windows: Windows,
    pub features: FeatureSpec,
    pub copula: CopulaConfig,
    pub metrics: MetricsConfig,
    pub synth: SynthConfig,
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            paths: Paths::default(),
            horizon: HorizonGrid::default(),
            windows: Windows::default(),
            features: FeatureSpec::default(),
            copula: CopulaConfig::default(),
            metrics: MetricsConfig::default(),
            synth: SynthConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load `path` (defaults when `None`) and apply environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)?,
            None => String::new(),
        };
        let base: toml::Table = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        let vars: Vec<(String, String)> = std::env::vars().collect();
        let merged = apply_overrides(base, vars.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
        let cfg: Self = merged.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.horizon.validate()?;
        if self.horizon.step_minutes != 5 {
            return Err(Error::Config("only the 5-minute grid is supported".into()));
        }
        let w = &self.windows;
        if w.regression_days == 0 || w.residual_days == 0 || w.regression_stride == 0 || w.residual_stride == 0 {
            return Err(Error::Config("training windows and strides must be positive".into()));
        }
        if self.copula.s_max == 0 {
            return Err(Error::Config("copula.s_max must be positive".into()));
        }
        let m = &self.metrics;
        if m.levels.is_empty()
            || m.levels.windows(2).any(|p| p[0] >= p[1])
            || m.levels.iter().any(|&q| !(q > 0.0 && q < 1.0))
        {
            return Err(Error::Config("metrics.levels must be strictly increasing inside (0, 1)".into()));
        }
        if m.issue_every_minutes <= 0 || m.issue_every_minutes % 5 != 0 {
            return Err(Error::Config("metrics.issue_every_minutes must be a positive multiple of 5".into()));
        }
        if !(m.variogram_order > 0.0) {
            return Err(Error::Config("metrics.variogram_order must be positive".into()));
        }
        let p = &self.paths;
        let all = [&p.registry, &p.power, &p.forecast, &p.bundle, &p.output_dir];
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                if all[i] == all[j] {
                    return Err(Error::Config(format!("paths must be distinct: {}", all[i].display())));
                }
            }
        }
        Ok(())
    }

    /// Evaluation window `[start, end)` for a panel ending at `panel_end`.
    pub fn evaluation_window(&self, panel_end: DateTime<Utc>) -> (DateTime<Utc>, DateTime<Utc>) {
        let end = self.metrics.eval_end.unwrap_or(panel_end);
        let start = self
            .metrics
            .eval_start
            .unwrap_or(end - Duration::days(self.metrics.eval_days as i64));
        (start, end)
    }

    /// Exclusive end of the training windows for a panel ending at `panel_end`.
    pub fn training_end(&self, panel_end: DateTime<Utc>) -> DateTime<Utc> {
        self.windows
            .train_end
            .unwrap_or_else(|| self.evaluation_window(panel_end).0)
    }

    /// Short hex digest of the effective configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// `seed=... config=...` line embedded in every output.
    pub fn provenance(&self) -> String {
        format!("windscen seed={} config={}", self.seed, self.hash())
    }
}

/// Merge `WINDSCEN_A__B=value` pairs into `table` at key path `a.b`.
/// Values are parsed as TOML when possible and kept as strings otherwise.
pub fn apply_overrides<'a>(
    mut table: toml::Table,
    vars: impl IntoIterator<Item = (&'a str, &'a str)>,
) -> Result<toml::Table> {
    let mut vars: Vec<(&str, &str)> = vars
        .into_iter()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX) && k.len() > ENV_PREFIX.len())
        .collect();
    vars.sort();
    for (key, raw) in vars {
        let path: Vec<String> = key[ENV_PREFIX.len()..]
            .split("__")
            .map(str::to_ascii_lowercase)
            .collect();
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let (last, parents) = path.split_last().expect("non-empty");
        let mut cur = &mut table;
        for p in parents {
            let entry = cur
                .entry(p.clone())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            cur = entry
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("{key}: `{p}` is not a section")))?;
        }
        cur.insert(last.clone(), value);
    }
    Ok(table)
}
