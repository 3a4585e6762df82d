//! Farm registry, the aligned 5-minute panel of power and NWP forecasts, and
//! the CSV formats they are exchanged in.
//!
//! Missing cells are stored as `NaN` internally and surface as `None` through
//! the accessors. The grid is dense: a gap in the input becomes a run of
//! missing cells, never a skipped timestamp.
//!
//! NWP forecasts are kept per issue time. A slot without its own issue reads
//! the most recent earlier issue, shifted so the value still targets the same
//! instant: `F_t^tau` at `t = issue + d` is the issue's horizon `tau + d`
//! forecast, and is missing once `tau + d > n_tau`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const POWER_HEADER: [&str; 3] = ["timestamp", "farm_id", "power_mw"];
pub const FORECAST_HEADER: [&str; 4] = ["issue_time", "farm_id", "horizon_steps", "forecast_mw"];
pub const REGISTRY_HEADER: [&str; 3] = ["farm_id", "capacity_mw", "neighbors"];

const NO_ISSUE: u32 = u32::MAX;

pub fn format_instant(t: DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

pub fn parse_instant(s: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s.trim())
        .ok()
        .map(|t| t.with_timezone(&Utc))
}

/// Look-ahead grid: `n_tau` horizons of `step_minutes` each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HorizonGrid {
    pub n_tau: usize,
    pub step_minutes: i64,
}

impl Default for HorizonGrid {
    fn default() -> Self {
        Self {
            n_tau: 36,
            step_minutes: 5,
        }
    }
}

impl HorizonGrid {
    pub fn new(n_tau: usize) -> Self {
        Self {
            n_tau,
            ..Self::default()
        }
    }

    pub fn step(&self) -> Duration {
        Duration::minutes(self.step_minutes)
    }

    pub fn span(&self) -> Duration {
        Duration::minutes(self.step_minutes * self.n_tau as i64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_tau == 0 || self.step_minutes <= 0 {
            return Err(Error::Config(format!(
                "horizon grid needs n_tau >= 1 and a positive step, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Farm {
    pub id: String,
    pub capacity_mw: f64,
    pub neighbors: Vec<String>,
}

/// Ordered set of farms. The order defines the canonical farm index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Farm>", into = "Vec<Farm>")]
pub struct FarmRegistry {
    farms: Vec<Farm>,
    neighbor_index: Vec<Vec<usize>>,
    index: HashMap<String, usize>,
}

impl TryFrom<Vec<Farm>> for FarmRegistry {
    type Error = Error;

    fn try_from(farms: Vec<Farm>) -> Result<Self> {
        Self::new(farms)
    }
}

impl From<FarmRegistry> for Vec<Farm> {
    fn from(r: FarmRegistry) -> Self {
        r.farms
    }
}

impl FarmRegistry {
    pub fn new(farms: Vec<Farm>) -> Result<Self> {
        let mut index = HashMap::with_capacity(farms.len());
        for (i, f) in farms.iter().enumerate() {
            if f.id.is_empty() || f.id.contains([',', ';']) {
                return Err(Error::InvalidRegistry(format!("bad farm id `{}`", f.id)));
            }
            if !(f.capacity_mw > 0.0 && f.capacity_mw.is_finite()) {
                return Err(Error::InvalidRegistry(format!(
                    "farm `{}` has non-positive capacity",
                    f.id
                )));
            }
            if index.insert(f.id.clone(), i).is_some() {
                return Err(Error::InvalidRegistry(format!("duplicate farm id `{}`", f.id)));
            }
        }
        let mut neighbor_index = Vec::with_capacity(farms.len());
        for f in &farms {
            let mut ids = Vec::with_capacity(f.neighbors.len());
            for n in &f.neighbors {
                if *n == f.id {
                    return Err(Error::InvalidRegistry(format!(
                        "farm `{}` lists itself as a neighbor",
                        f.id
                    )));
                }
                let j = *index.get(n).ok_or_else(|| {
                    Error::InvalidRegistry(format!("farm `{}` has unknown neighbor `{n}`", f.id))
                })?;
                ids.push(j);
            }
            neighbor_index.push(ids);
        }
        Ok(Self {
            farms,
            neighbor_index,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.farms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.farms.is_empty()
    }

    pub fn farms(&self) -> &[Farm] {
        &self.farms
    }

    pub fn farm(&self, w: usize) -> &Farm {
        &self.farms[w]
    }

    pub fn capacity(&self, w: usize) -> f64 {
        self.farms[w].capacity_mw
    }

    pub fn total_capacity(&self) -> f64 {
        self.farms.iter().map(|f| f.capacity_mw).sum()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Neighbor farm indices of `w`, in registry order of the neighbor list.
    pub fn neighbors(&self, w: usize) -> &[usize] {
        &self.neighbor_index[w]
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut rdr = csv_reader(path)?;
        check_header(&mut rdr, path, &REGISTRY_HEADER)?;
        let mut farms = Vec::new();
        let mut rec = csv::StringRecord::new();
        while rdr.read_record(&mut rec)? {
            let line = rec.position().map_or(0, |p| p.line());
            let bad = |message: String| Error::MalformedRow {
                path: path.to_path_buf(),
                line,
                message,
            };
            if rec.len() != 3 {
                return Err(bad(format!("expected 3 fields, got {}", rec.len())));
            }
            let capacity_mw: f64 = rec[1]
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad capacity `{}`", &rec[1])))?;
            let neighbors = rec[2]
                .split(';')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect();
            farms.push(Farm {
                id: rec[0].trim().to_string(),
                capacity_mw,
                neighbors,
            });
        }
        Self::new(farms)
    }

    pub fn write(&self, path: &Path, provenance: Option<&str>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        write_provenance(&mut out, provenance)?;
        writeln!(out, "{}", REGISTRY_HEADER.join(","))?;
        for f in &self.farms {
            writeln!(out, "{},{:.3},{}", f.id, f.capacity_mw, f.neighbors.join(";"))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Cells dropped at load because they violated `[0, capacity]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadWarnings {
    pub power_out_of_range: usize,
    pub nwp_out_of_range: usize,
}

impl LoadWarnings {
    pub fn total(&self) -> usize {
        self.power_out_of_range + self.nwp_out_of_range
    }
}

/// Aligned power measurements and NWP forecasts for every farm.
#[derive(Debug, Clone)]
pub struct SeriesPanel {
    registry: FarmRegistry,
    grid: HorizonGrid,
    start: DateTime<Utc>,
    len: usize,
    /// `[slot * n_w + w]`
    power: Vec<f64>,
    issue_slots: Vec<usize>,
    /// `[issue * n_w * n_tau + w * n_tau + (tau - 1)]`
    nwp: Vec<f64>,
    issue_for_slot: Vec<u32>,
    warnings: LoadWarnings,
}

impl SeriesPanel {
    /// Assemble a panel from dense arrays. Non-finite values mean missing;
    /// values outside `[0, capacity]` are marked missing and counted.
    pub fn from_parts(
        registry: FarmRegistry,
        grid: HorizonGrid,
        start: DateTime<Utc>,
        len: usize,
        mut power: Vec<f64>,
        issue_slots: Vec<usize>,
        mut nwp: Vec<f64>,
    ) -> Result<Self> {
        grid.validate()?;
        let n_w = registry.len();
        if power.len() != len * n_w {
            return Err(Error::DimensionMismatch {
                expected: len * n_w,
                actual: power.len(),
            });
        }
        if nwp.len() != issue_slots.len() * n_w * grid.n_tau {
            return Err(Error::DimensionMismatch {
                expected: issue_slots.len() * n_w * grid.n_tau,
                actual: nwp.len(),
            });
        }
        if issue_slots.windows(2).any(|w| w[0] >= w[1]) || issue_slots.last().is_some_and(|&s| s >= len)
        {
            return Err(Error::Config(
                "issue slots must be strictly increasing and inside the panel".into(),
            ));
        }
        let mut warnings = LoadWarnings::default();
        for (i, v) in power.iter_mut().enumerate() {
            let cap = registry.capacity(i % n_w);
            if v.is_finite() && !(0.0..=cap).contains(v) {
                *v = f64::NAN;
                warnings.power_out_of_range += 1;
            } else if !v.is_finite() {
                *v = f64::NAN;
            }
        }
        for (i, v) in nwp.iter_mut().enumerate() {
            let cap = registry.capacity((i / grid.n_tau) % n_w);
            if v.is_finite() && !(0.0..=cap).contains(v) {
                *v = f64::NAN;
                warnings.nwp_out_of_range += 1;
            } else if !v.is_finite() {
                *v = f64::NAN;
            }
        }
        let mut issue_for_slot = vec![NO_ISSUE; len];
        let mut next = 0usize;
        let mut current = NO_ISSUE;
        for (slot, entry) in issue_for_slot.iter_mut().enumerate() {
            while next < issue_slots.len() && issue_slots[next] <= slot {
                current = next as u32;
                next += 1;
            }
            if current != NO_ISSUE && slot - issue_slots[current as usize] < grid.n_tau {
                *entry = current;
            }
        }
        Ok(Self {
            registry,
            grid,
            start,
            len,
            power,
            issue_slots,
            nwp,
            issue_for_slot,
            warnings,
        })
    }

    pub fn registry(&self) -> &FarmRegistry {
        &self.registry
    }

    pub fn grid(&self) -> HorizonGrid {
        self.grid
    }

    pub fn n_farms(&self) -> usize {
        self.registry.len()
    }

    pub fn n_tau(&self) -> usize {
        self.grid.n_tau
    }

    /// Number of 5-minute slots.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    /// Exclusive end of the grid.
    pub fn end(&self) -> DateTime<Utc> {
        self.timestamp(self.len)
    }

    pub fn timestamp(&self, slot: usize) -> DateTime<Utc> {
        self.start + self.grid.step() * slot as i32
    }

    pub fn timestamps(&self) -> impl Iterator<Item = DateTime<Utc>> + '_ {
        (0..self.len).map(|s| self.timestamp(s))
    }

    /// Slot index of an instant exactly on the grid (may equal `len()` for the end).
    pub fn slot_of(&self, t: DateTime<Utc>) -> Option<usize> {
        let d = (t - self.start).num_seconds();
        let step = self.grid.step_minutes * 60;
        if d < 0 || d % step != 0 {
            return None;
        }
        let s = (d / step) as usize;
        (s <= self.len).then_some(s)
    }

    /// First slot at or after `t`, clamped to `[0, len]`.
    pub fn slot_ceil(&self, t: DateTime<Utc>) -> usize {
        let d = (t - self.start).num_seconds();
        if d <= 0 {
            return 0;
        }
        let step = self.grid.step_minutes * 60;
        (((d + step - 1) / step) as usize).min(self.len)
    }

    pub fn power(&self, slot: usize, w: usize) -> Option<f64> {
        let v = self.power[slot * self.n_farms() + w];
        (!v.is_nan()).then_some(v)
    }

    /// `F_slot^tau`: the latest forecast available at `slot` for the instant
    /// `tau` steps ahead.
    pub fn nwp(&self, slot: usize, w: usize, tau: usize) -> Option<f64> {
        debug_assert!(tau >= 1);
        let issue = *self.issue_for_slot.get(slot)?;
        if issue == NO_ISSUE {
            return None;
        }
        let lead = tau + slot - self.issue_slots[issue as usize];
        if lead > self.grid.n_tau {
            return None;
        }
        let v = self.nwp[self.nwp_offset(issue as usize, w, lead)];
        (!v.is_nan()).then_some(v)
    }

    fn nwp_offset(&self, issue: usize, w: usize, tau: usize) -> usize {
        (issue * self.n_farms() + w) * self.grid.n_tau + tau - 1
    }

    pub fn issue_slots(&self) -> &[usize] {
        &self.issue_slots
    }

    /// Power values, `[slot * n_w + w]`, `NaN` for missing.
    pub fn power_values(&self) -> &[f64] {
        &self.power
    }

    /// Forecast values per issue, `[(issue * n_w + w) * n_tau + tau - 1]`.
    pub fn nwp_values(&self) -> &[f64] {
        &self.nwp
    }

    pub fn warnings(&self) -> LoadWarnings {
        self.warnings
    }

    pub fn missing_power_cells(&self) -> usize {
        self.power.iter().filter(|v| v.is_nan()).count()
    }

    /// Sum all farms into a single site whose capacity is the fleet total.
    /// A cell is missing if any farm is missing there.
    pub fn aggregate(&self, site_id: &str) -> Result<SeriesPanel> {
        let n_w = self.n_farms();
        let n_tau = self.grid.n_tau;
        let registry = FarmRegistry::new(vec![Farm {
            id: site_id.to_string(),
            capacity_mw: self.registry.total_capacity(),
            neighbors: Vec::new(),
        }])?;
        let power = self.power.chunks(n_w).map(|row| row.iter().sum()).collect();
        let mut nwp = Vec::with_capacity(self.issue_slots.len() * n_tau);
        for issue in self.nwp.chunks(n_w * n_tau) {
            for tau in 0..n_tau {
                nwp.push((0..n_w).map(|w| issue[w * n_tau + tau]).sum());
            }
        }
        Self::from_parts(
            registry,
            self.grid,
            self.start,
            self.len,
            power,
            self.issue_slots.clone(),
            nwp,
        )
    }
}

/// Timestamps of `panel` in `[start, end)`; issues are kept only if their
/// issue time falls inside the window.
pub fn slice_window(panel: &SeriesPanel, start: DateTime<Utc>, end: DateTime<Utc>) -> Result<SeriesPanel> {
    let empty = || Error::EmptyWindow {
        start: format_instant(start),
        end: format_instant(end),
    };
    if start >= end {
        return Err(empty());
    }
    let s0 = panel.slot_ceil(start);
    let s1 = panel.slot_ceil(end);
    if s0 >= s1 {
        return Err(empty());
    }
    let n_w = panel.n_farms();
    let n_tau = panel.n_tau();
    let power = panel.power[s0 * n_w..s1 * n_w].to_vec();
    let mut issue_slots = Vec::new();
    let mut nwp = Vec::new();
    for (i, &slot) in panel.issue_slots.iter().enumerate() {
        if (s0..s1).contains(&slot) {
            issue_slots.push(slot - s0);
            nwp.extend_from_slice(&panel.nwp[i * n_w * n_tau..(i + 1) * n_w * n_tau]);
        }
    }
    let mut out = SeriesPanel::from_parts(
        panel.registry.clone(),
        panel.grid,
        panel.timestamp(s0),
        s1 - s0,
        power,
        issue_slots,
        nwp,
    )?;
    out.warnings = LoadWarnings::default();
    Ok(out)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)?)
}

fn check_header(rdr: &mut csv::Reader<File>, path: &Path, expected: &[&str]) -> Result<()> {
    let mut rec = csv::StringRecord::new();
    if !rdr.read_record(&mut rec)? || rec.iter().ne(expected.iter().copied()) {
        return Err(Error::MalformedRow {
            path: path.to_path_buf(),
            line: rec.position().map_or(1, |p| p.line()),
            message: format!("expected header `{}`", expected.join(",")),
        });
    }
    Ok(())
}

fn write_provenance(out: &mut impl Write, provenance: Option<&str>) -> Result<()> {
    if let Some(p) = provenance {
        writeln!(out, "# {p}")?;
    }
    Ok(())
}

struct PowerRow {
    t: DateTime<Utc>,
    w: usize,
    value: f64,
    line: u64,
}

struct ForecastRow {
    t: DateTime<Utc>,
    w: usize,
    tau: usize,
    value: f64,
    line: u64,
}

/// Read the power and forecast CSVs onto one 5-minute grid spanning both.
pub fn load_panel(
    power_file: &Path,
    forecast_file: &Path,
    registry: &FarmRegistry,
    grid: HorizonGrid,
) -> Result<SeriesPanel> {
    grid.validate()?;
    let power_rows = read_power_rows(power_file, registry)?;
    let forecast_rows = read_forecast_rows(forecast_file, registry, grid)?;

    let first = power_rows
        .first()
        .map(|r| r.t)
        .into_iter()
        .chain(forecast_rows.first().map(|r| r.t))
        .min()
        .ok_or(Error::EmptyInput)?;
    let last = power_rows
        .last()
        .map(|r| r.t)
        .into_iter()
        .chain(forecast_rows.last().map(|r| r.t))
        .max()
        .ok_or(Error::EmptyInput)?;
    let step = grid.step_minutes * 60;
    let slot = |t: DateTime<Utc>, path: &Path, line: u64| -> Result<usize> {
        let d = (t - first).num_seconds();
        if d % step != 0 {
            return Err(Error::MalformedRow {
                path: path.to_path_buf(),
                line,
                message: format!("timestamp {} is off the {}-minute grid", format_instant(t), grid.step_minutes),
            });
        }
        Ok((d / step) as usize)
    };
    let len = slot(last, power_file, 0).unwrap_or(((last - first).num_seconds() / step) as usize) + 1;
    let n_w = registry.len();

    let mut power = vec![f64::NAN; len * n_w];
    for r in &power_rows {
        let s = slot(r.t, power_file, r.line)?;
        let cell = &mut power[s * n_w + r.w];
        if !cell.is_nan() {
            return Err(Error::MalformedRow {
                path: power_file.to_path_buf(),
                line: r.line,
                message: "duplicate (timestamp, farm_id) row".into(),
            });
        }
        *cell = r.value;
    }

    let mut issue_slots: Vec<usize> = Vec::new();
    let mut issue_pos: HashMap<usize, usize> = HashMap::new();
    for r in &forecast_rows {
        let s = slot(r.t, forecast_file, r.line)?;
        if issue_slots.last() != Some(&s) {
            issue_pos.insert(s, issue_slots.len());
            issue_slots.push(s);
        }
    }
    let block = n_w * grid.n_tau;
    let mut nwp = vec![f64::NAN; issue_slots.len() * block];
    for r in &forecast_rows {
        let s = slot(r.t, forecast_file, r.line)?;
        let i = issue_pos[&s];
        let cell = &mut nwp[i * block + r.w * grid.n_tau + r.tau - 1];
        if !cell.is_nan() {
            return Err(Error::MalformedRow {
                path: forecast_file.to_path_buf(),
                line: r.line,
                message: "duplicate (issue_time, farm_id, horizon_steps) row".into(),
            });
        }
        *cell = r.value;
    }
    SeriesPanel::from_parts(registry.clone(), grid, first, len, power, issue_slots, nwp)
}

fn read_power_rows(path: &Path, registry: &FarmRegistry) -> Result<Vec<PowerRow>> {
    let mut rdr = csv_reader(path)?;
    check_header(&mut rdr, path, &POWER_HEADER)?;
    let mut rows = Vec::new();
    let mut rec = csv::StringRecord::new();
    while rdr.read_record(&mut rec)? {
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::MalformedRow {
            path: path.to_path_buf(),
            line,
            message,
        };
        if rec.len() != 3 {
            return Err(bad(format!("expected 3 fields, got {}", rec.len())));
        }
        let t = parse_instant(&rec[0]).ok_or_else(|| bad(format!("bad timestamp `{}`", &rec[0])))?;
        let w = registry.index_of(&rec[1]).ok_or_else(|| Error::UnknownFarm {
            path: path.to_path_buf(),
            line,
            farm_id: rec[1].to_string(),
        })?;
        let value: f64 = rec[2]
            .parse()
            .map_err(|_| bad(format!("bad power value `{}`", &rec[2])))?;
        if rows.last().is_some_and(|p: &PowerRow| p.t > t) {
            return Err(Error::NonMonotoneTimestamps {
                path: path.to_path_buf(),
                line,
            });
        }
        rows.push(PowerRow { t, w, value, line });
    }
    Ok(rows)
}

fn read_forecast_rows(path: &Path, registry: &FarmRegistry, grid: HorizonGrid) -> Result<Vec<ForecastRow>> {
    let mut rdr = csv_reader(path)?;
    check_header(&mut rdr, path, &FORECAST_HEADER)?;
    let mut rows = Vec::new();
    let mut rec = csv::StringRecord::new();
    while rdr.read_record(&mut rec)? {
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::MalformedRow {
            path: path.to_path_buf(),
            line,
            message,
        };
        if rec.len() != 4 {
            return Err(bad(format!("expected 4 fields, got {}", rec.len())));
        }
        let t = parse_instant(&rec[0]).ok_or_else(|| bad(format!("bad issue time `{}`", &rec[0])))?;
        let w = registry.index_of(&rec[1]).ok_or_else(|| Error::UnknownFarm {
            path: path.to_path_buf(),
            line,
            farm_id: rec[1].to_string(),
        })?;
        let tau: usize = rec[2]
            .parse()
            .map_err(|_| bad(format!("bad horizon `{}`", &rec[2])))?;
        if tau == 0 || tau > grid.n_tau {
            return Err(bad(format!("horizon {tau} outside 1..={}", grid.n_tau)));
        }
        let value: f64 = rec[3]
            .parse()
            .map_err(|_| bad(format!("bad forecast value `{}`", &rec[3])))?;
        if rows.last().is_some_and(|p: &ForecastRow| p.t > t) {
            return Err(Error::NonMonotoneTimestamps {
                path: path.to_path_buf(),
                line,
            });
        }
        rows.push(ForecastRow { t, w, tau, value, line });
    }
    Ok(rows)
}

/// Write the panel in the power and forecast CSV schemas, 3 decimals, missing
/// cells omitted.
pub fn write_panel(
    panel: &SeriesPanel,
    power_file: &Path,
    forecast_file: &Path,
    provenance: Option<&str>,
) -> Result<()> {
    let n_w = panel.n_farms();
    let ids: Vec<&str> = panel.registry.farms.iter().map(|f| f.id.as_str()).collect();

    let mut out = BufWriter::new(File::create(power_file)?);
    write_provenance(&mut out, provenance)?;
    writeln!(out, "{}", POWER_HEADER.join(","))?;
    for slot in 0..panel.len {
        let ts = format_instant(panel.timestamp(slot));
        for (w, id) in ids.iter().enumerate() {
            let v = panel.power[slot * n_w + w];
            if !v.is_nan() {
                writeln!(out, "{ts},{id},{v:.3}")?;
            }
        }
    }
    out.flush()?;

    let n_tau = panel.n_tau();
    let mut out = BufWriter::new(File::create(forecast_file)?);
    write_provenance(&mut out, provenance)?;
    writeln!(out, "{}", FORECAST_HEADER.join(","))?;
    for (i, &slot) in panel.issue_slots.iter().enumerate() {
        let ts = format_instant(panel.timestamp(slot));
        for (w, id) in ids.iter().enumerate() {
            for tau in 1..=n_tau {
                let v = panel.nwp[panel.nwp_offset(i, w, tau)];
                if !v.is_nan() {
                    writeln!(out, "{ts},{id},{tau},{v:.3}")?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}
