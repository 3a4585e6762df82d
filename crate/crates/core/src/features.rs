//! Regression features and targets for one (farm, horizon) model.
//!
//! A row at execution slot `t` for horizon `tau` holds, in this order:
//! intercept, `F_t^tau` (with its powers), trailing forecasts `F_t^{tau-i}`,
//! power lags `P_{t-j}`, own past NWP errors `E = P_t - F_{t-o}^o`, and the
//! same past errors for the first `neighbor_count` registry neighbors.
//! The target is `y = P_{t+tau} - F_t^tau`.

use chrono::{DateTime, Utc};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::SeriesPanel;

/// Offsets `o` of the past-error features `P_t - F_{t-o}^o`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorLags {
    /// Offsets `m * tau` for each multiplier `m`.
    HorizonMultiples(Vec<usize>),
    /// The same offsets for every horizon.
    Offsets(Vec<usize>),
}

/// Polynomial degree per feature family. Degree 0 drops the family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisSpec {
    pub nwp: u32,
    pub trailing: u32,
    pub power: u32,
    pub error: u32,
}

impl Default for BasisSpec {
    fn default() -> Self {
        Self {
            nwp: 2,
            trailing: 1,
            power: 1,
            error: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSpec {
    pub nwp_trailing_lags: usize,
    pub power_lags: usize,
    pub error_lags: ErrorLags,
    pub neighbor_count: usize,
    pub basis: BasisSpec,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            nwp_trailing_lags: 2,
            power_lags: 3,
            error_lags: ErrorLags::HorizonMultiples(vec![1, 2]),
            neighbor_count: 2,
            basis: BasisSpec::default(),
        }
    }
}

impl FeatureSpec {
    /// Intercept and `F_t^tau` only.
    pub fn nwp_only() -> Self {
        Self {
            nwp_trailing_lags: 0,
            power_lags: 0,
            error_lags: ErrorLags::Offsets(vec![]),
            neighbor_count: 0,
            basis: BasisSpec {
                nwp: 1,
                ..BasisSpec::default()
            },
        }
    }

    /// Error offsets usable at horizon `tau`, ascending, without duplicates.
    pub fn error_offsets(&self, tau: usize, n_tau: usize) -> Vec<usize> {
        let mut v: Vec<usize> = match &self.error_lags {
            ErrorLags::HorizonMultiples(m) => m.iter().map(|m| m * tau).collect(),
            ErrorLags::Offsets(o) => o.clone(),
        };
        v.retain(|&o| o >= 1 && o <= n_tau);
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Raw input behind a feature column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    Intercept,
    /// `F_t^lead`
    Nwp { lead: usize },
    /// `P_{t-lag}`
    Power { lag: usize },
    /// `P_t - F_{t-offset}^offset` for `farm`
    Error { farm: usize, offset: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub source: Source,
    pub degree: u32,
}

/// Expanded column layout of one (farm, horizon) model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub farm: usize,
    pub tau: usize,
    pub columns: Vec<Column>,
}

impl FeatureLayout {
    pub fn new(spec: &FeatureSpec, panel: &SeriesPanel, w: usize, tau: usize) -> Result<Self> {
        Self::from_parts(spec, panel.registry().neighbors(w), w, tau, panel.n_tau())
    }

    pub fn from_parts(spec: &FeatureSpec, neighbors: &[usize], w: usize, tau: usize, n_tau: usize) -> Result<Self> {
        if tau == 0 || tau > n_tau {
            return Err(Error::Config(format!("horizon {tau} outside 1..={n_tau}")));
        }
        let mut columns = vec![Column {
            name: "intercept".into(),
            source: Source::Intercept,
            degree: 1,
        }];
        let mut push = |base: String, source: Source, max_degree: u32| {
            for d in 1..=max_degree {
                let name = if d == 1 { base.clone() } else { format!("{base}^{d}") };
                columns.push(Column {
                    name,
                    source,
                    degree: d,
                });
            }
        };
        push("nwp".into(), Source::Nwp { lead: tau }, spec.basis.nwp);
        for i in 1..=spec.nwp_trailing_lags.min(tau - 1) {
            push(format!("nwp_trail_{i}"), Source::Nwp { lead: tau - i }, spec.basis.trailing);
        }
        for j in 0..spec.power_lags {
            push(format!("power_lag_{j}"), Source::Power { lag: j }, spec.basis.power);
        }
        let offsets = spec.error_offsets(tau, n_tau);
        for &o in &offsets {
            push(format!("err_lag_{o}"), Source::Error { farm: w, offset: o }, spec.basis.error);
        }
        for (j, &nb) in neighbors.iter().take(spec.neighbor_count).enumerate() {
            for &o in &offsets {
                push(
                    format!("nbr{}_err_lag_{o}", j + 1),
                    Source::Error { farm: nb, offset: o },
                    spec.basis.error,
                );
            }
        }
        if columns.len() == 1 {
            return Err(Error::DegenerateSpec);
        }
        Ok(Self { farm: w, tau, columns })
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    /// Deepest power look-back in slots.
    pub fn history_depth(&self) -> usize {
        self.columns
            .iter()
            .map(|c| match c.source {
                Source::Power { lag } => lag,
                Source::Error { offset, .. } => offset,
                _ => 0,
            })
            .max()
            .unwrap_or(0)
    }

    /// Fill `row` with the features at slot `t`. On failure returns the index
    /// of the first unavailable column and whether it was a missing cell
    /// (as opposed to falling outside the panel).
    fn fill_row(&self, panel: &SeriesPanel, t: usize, row: &mut [f64]) -> std::result::Result<(), (usize, bool)> {
        let mut last: Option<(Source, f64)> = None;
        for (i, c) in self.columns.iter().enumerate() {
            let base = match last {
                Some((s, v)) if s == c.source => v,
                _ => {
                    let v = raw_value(panel, self.farm, t, c.source).map_err(|missing| (i, missing))?;
                    last = Some((c.source, v));
                    v
                }
            };
            row[i] = base.powi(c.degree as i32);
        }
        Ok(())
    }
}

/// Value of one raw input at slot `t`. `Err(true)` means a missing cell,
/// `Err(false)` an index outside the panel.
fn raw_value(panel: &SeriesPanel, w: usize, t: usize, source: Source) -> std::result::Result<f64, bool> {
    match source {
        Source::Intercept => Ok(1.0),
        Source::Nwp { lead } => panel.nwp(t, w, lead).ok_or(true),
        Source::Power { lag } => {
            let s = t.checked_sub(lag).ok_or(false)?;
            panel.power(s, w).ok_or(true)
        }
        Source::Error { farm, offset } => {
            let s = t.checked_sub(offset).ok_or(false)?;
            let p = panel.power(t, farm).ok_or(true)?;
            let f = panel.nwp(s, farm, offset).ok_or(true)?;
            Ok(p - f)
        }
    }
}

/// `y = P_{t+tau} - F_t^tau`, `Err(true)` when a cell is missing.
fn target(panel: &SeriesPanel, w: usize, t: usize, tau: usize) -> std::result::Result<f64, bool> {
    if t + tau >= panel.len() {
        return Err(false);
    }
    let p = panel.power(t + tau, w).ok_or(true)?;
    let f = panel.nwp(t, w, tau).ok_or(true)?;
    Ok(p - f)
}

/// Training matrix for one (farm, horizon) model.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub slots: Vec<usize>,
    pub row_times: Vec<DateTime<Utc>>,
    pub layout: FeatureLayout,
    /// Rows skipped because a feature or target cell was missing.
    pub dropped: usize,
}

impl Dataset {
    pub fn rows(&self) -> usize {
        self.y.len()
    }
}

/// Dataset over every slot of the panel.
pub fn build_dataset(panel: &SeriesPanel, w: usize, tau: usize, spec: &FeatureSpec) -> Result<Dataset> {
    build_dataset_over(panel, w, tau, spec, 0..panel.len())
}

/// Dataset over the given candidate slots; slots without a complete row are skipped.
pub fn build_dataset_over(
    panel: &SeriesPanel,
    w: usize,
    tau: usize,
    spec: &FeatureSpec,
    slots: impl IntoIterator<Item = usize>,
) -> Result<Dataset> {
    let layout = FeatureLayout::new(spec, panel, w, tau)?;
    let p = layout.len();
    let mut data = Vec::new();
    let mut y = Vec::new();
    let mut used = Vec::new();
    let mut dropped = 0;
    let mut row = vec![0.0; p];
    for t in slots {
        if t >= panel.len() {
            break;
        }
        let target = match target(panel, w, t, tau) {
            Ok(v) => v,
            Err(missing) => {
                dropped += missing as usize;
                continue;
            }
        };
        match layout.fill_row(panel, t, &mut row) {
            Ok(()) => {
                data.extend_from_slice(&row);
                y.push(target);
                used.push(t);
            }
            Err((_, missing)) => dropped += missing as usize,
        }
    }
    if y.is_empty() {
        return Err(Error::InsufficientHistory {
            farm: w,
            tau,
            usable: 0,
            required: 1,
        });
    }
    let x = DMatrix::from_row_slice(y.len(), p, &data);
    let row_times = used.iter().map(|&s| panel.timestamp(s)).collect();
    Ok(Dataset {
        x,
        y,
        slots: used,
        row_times,
        layout,
        dropped,
    })
}

/// The feature row `build_dataset` would produce at `t_now`, without the target.
pub fn build_online_row(
    panel: &SeriesPanel,
    t_now: DateTime<Utc>,
    w: usize,
    tau: usize,
    spec: &FeatureSpec,
) -> Result<Vec<f64>> {
    let layout = FeatureLayout::new(spec, panel, w, tau)?;
    let t = panel
        .slot_of(t_now)
        .filter(|&s| s < panel.len())
        .ok_or_else(|| Error::OutOfPanel(crate::timeseries::format_instant(t_now)))?;
    online_row_at(&layout, panel, t)
}

pub fn online_row_at(layout: &FeatureLayout, panel: &SeriesPanel, t: usize) -> Result<Vec<f64>> {
    let mut row = vec![0.0; layout.len()];
    layout
        .fill_row(panel, t, &mut row)
        .map_err(|(i, _)| Error::UnavailableFeature(layout.columns[i].name.clone()))?;
    Ok(row)
}
