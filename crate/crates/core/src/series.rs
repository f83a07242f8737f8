//! Price ingestion, panel synchronization, normalized returns and profiles.
//!
//! Timestamps are epoch milliseconds throughout. Every series carries its
//! sampling interval so that wall-clock windows (days, minutes) can be turned
//! into sample counts without guessing.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};

use crate::error::{invalid, Error, Result};

pub const MINUTE_MS: i64 = 60_000;
pub const HOUR_MS: i64 = 60 * MINUTE_MS;
pub const DAY_MS: i64 = 24 * HOUR_MS;

/// Default forward-fill cap, in sampling intervals.
pub const DEFAULT_MAX_FILL: usize = 60;

/// A price path for one asset.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub asset_id: String,
    pub timestamps: Vec<i64>,
    pub prices: Vec<f64>,
    pub sampling_interval_ms: i64,
}

impl PriceSeries {
    pub fn new(
        asset_id: impl Into<String>,
        timestamps: Vec<i64>,
        prices: Vec<f64>,
        sampling_interval_ms: i64,
    ) -> Result<Self> {
        let asset_id = asset_id.into();
        if timestamps.len() != prices.len() {
            return Err(invalid(format!("{asset_id}: {} timestamps but {} prices", timestamps.len(), prices.len())));
        }
        if sampling_interval_ms <= 0 {
            return Err(invalid("sampling interval must be positive"));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(invalid(format!("{asset_id}: timestamps not strictly increasing at index {}", i + 1)));
        }
        if let Some(i) = prices.iter().position(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(invalid(format!("{asset_id}: non-positive price {} at index {i}", prices[i])));
        }
        Ok(Self { asset_id, timestamps, prices, sampling_interval_ms })
    }

    /// Evenly spaced series starting at `start_ms`.
    pub fn regular(
        asset_id: impl Into<String>,
        start_ms: i64,
        sampling_interval_ms: i64,
        prices: Vec<f64>,
    ) -> Result<Self> {
        let timestamps = (0..prices.len() as i64).map(|i| start_ms + i * sampling_interval_ms).collect();
        Self::new(asset_id, timestamps, prices, sampling_interval_ms)
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }
}

/// Normalized logarithmic returns: zero mean, unit population variance.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    pub asset_id: String,
    pub timestamps: Vec<i64>,
    pub values: Vec<f64>,
    pub raw_mean: f64,
    pub raw_std: f64,
}

impl ReturnSeries {
    /// Z-scores `raw` with its mean and population standard deviation.
    pub fn from_raw(asset_id: impl Into<String>, timestamps: Vec<i64>, raw: &[f64]) -> Result<Self> {
        let asset_id = asset_id.into();
        if timestamps.len() != raw.len() {
            return Err(invalid(format!("{asset_id}: {} timestamps but {} values", timestamps.len(), raw.len())));
        }
        let (values, raw_mean, raw_std) =
            standardize(raw).ok_or_else(|| Error::Degenerate(format!("{asset_id}: returns have zero variance")))?;
        Ok(Self { asset_id, timestamps, values, raw_mean, raw_std })
    }

    /// Synthetic convenience: one-minute grid starting at zero.
    pub fn from_values(asset_id: impl Into<String>, raw: &[f64]) -> Result<Self> {
        let ts = (0..raw.len() as i64).map(|i| i * MINUTE_MS).collect();
        Self::from_raw(asset_id, ts, raw)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sub-range re-normalized on its own mean and deviation.
    pub fn window(&self, range: std::ops::Range<usize>) -> Result<Self> {
        Self::from_raw(self.asset_id.clone(), self.timestamps[range.clone()].to_vec(), &self.values[range])
    }
}

/// Mean, population deviation and z-scores; `None` if the deviation is zero.
pub(crate) fn standardize(raw: &[f64]) -> Option<(Vec<f64>, f64, f64)> {
    if raw.is_empty() {
        return None;
    }
    let n = raw.len() as f64;
    let mean = compensated_sum(raw.iter().copied()) / n;
    let var = compensated_sum(raw.iter().map(|v| (v - mean) * (v - mean))) / n;
    let std = var.sqrt();
    if !(std > 0.0 && std.is_finite()) {
        return None;
    }
    Some((raw.iter().map(|v| (v - mean) / std).collect(), mean, std))
}

/// Neumaier summation.
pub(crate) fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Integrated, mean-subtracted signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    values: Vec<f64>,
}

impl Profile {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn last(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

/// Cumulative sum of `x - mean(x)`.
///
/// Both the mean and the running sum are compensated so the final element is
/// zero to within a few ulps of the largest partial sum.
pub fn profile(x: &[f64]) -> Result<Profile> {
    if x.len() < 2 {
        return Err(invalid("profile needs at least two samples"));
    }
    let mean = compensated_sum(x.iter().copied()) / x.len() as f64;
    let mut values = Vec::with_capacity(x.len());
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for &v in x {
        let d = v - mean;
        let t = sum + d;
        if sum.abs() >= d.abs() {
            c += (sum - t) + d;
        } else {
            c += (d - t) + sum;
        }
        sum = t;
        values.push(sum + c);
    }
    Ok(Profile { values })
}

/// Logarithmic returns over `lag_ms`, z-scored.
///
/// Each return is stamped with the later of its two price instants.
pub fn to_returns(series: &PriceSeries, lag_ms: i64) -> Result<ReturnSeries> {
    if lag_ms <= 0 || lag_ms % series.sampling_interval_ms != 0 {
        return Err(invalid(format!(
            "lag {lag_ms} ms is not a positive multiple of the {} ms sampling interval",
            series.sampling_interval_ms
        )));
    }
    if series.len() < 3 {
        return Err(Error::TooShort { asset: series.asset_id.clone(), series_len: series.len(), needed: 3 });
    }
    let lag = (lag_ms / series.sampling_interval_ms) as usize;
    if lag >= series.len() {
        return Err(Error::TooShort { asset: series.asset_id.clone(), series_len: series.len(), needed: lag + 1 });
    }
    let raw: Vec<f64> = series.prices.iter().zip(&series.prices[lag..]).map(|(p0, p1)| (p1 / p0).ln()).collect();
    ReturnSeries::from_raw(series.asset_id.clone(), series.timestamps[lag..].to_vec(), &raw)
}

/// Column mapping for price CSV files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub timestamp_column: String,
    pub price_column: String,
    /// Present for multi-asset files.
    pub asset_column: Option<String>,
    pub sampling_interval_ms: i64,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            timestamp_column: "timestamp".into(),
            price_column: "price".into(),
            asset_column: None,
            sampling_interval_ms: MINUTE_MS,
        }
    }
}

/// Parses epoch milliseconds or an ISO-8601 instant (naive values are UTC).
pub fn parse_timestamp(raw: &str) -> Option<i64> {
    let raw = raw.trim();
    if let Ok(ms) = raw.parse::<i64>() {
        return Some(ms);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.timestamp_millis());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(dt.and_utc().timestamp_millis());
        }
    }
    None
}

/// Reads every asset in a price file, ordered by asset id.
///
/// Without an asset column the file stem names the single asset. Rows are
/// sorted by time; a repeated timestamp keeps the last row seen.
pub fn load_price_file(path: &Path, schema: &CsvSchema) -> Result<Vec<PriceSeries>> {
    let mut reader =
        csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => Error::Io { path: path.to_path_buf(), source },
            other => Error::Csv { path: path.to_path_buf(), reason: format!("{other:?}") },
        })?;
    let headers = reader.headers().map_err(|e| Error::Csv { path: path.to_path_buf(), reason: e.to_string() })?.clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Csv { path: path.to_path_buf(), reason: format!("missing column `{name}`") })
    };
    let ts_col = find(&schema.timestamp_column)?;
    let price_col = find(&schema.price_column)?;
    let asset_col = schema.asset_column.as_deref().map(find).transpose()?;
    let default_asset = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "asset".into());

    let mut by_asset: BTreeMap<String, BTreeMap<i64, f64>> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        // header is row 1
        let row = i + 2;
        let row_err = |reason: String| Error::Row { path: path.to_path_buf(), row, reason };
        let record = record.map_err(|e| row_err(e.to_string()))?;
        let ts_raw = record.get(ts_col).unwrap_or("");
        let ts = parse_timestamp(ts_raw).ok_or_else(|| row_err(format!("unparseable timestamp `{ts_raw}`")))?;
        let price_raw = record.get(price_col).unwrap_or("");
        let price: f64 = price_raw.parse().map_err(|_| row_err(format!("unparseable price `{price_raw}`")))?;
        if !(price.is_finite() && price > 0.0) {
            return Err(row_err(format!("non-positive price {price}")));
        }
        let asset = match asset_col {
            Some(c) => record.get(c).unwrap_or("").to_string(),
            None => default_asset.clone(),
        };
        by_asset.entry(asset).or_default().insert(ts, price);
    }
    if by_asset.is_empty() {
        return Err(Error::Csv { path: path.to_path_buf(), reason: "no data rows".into() });
    }
    by_asset
        .into_iter()
        .map(|(asset, rows)| {
            let (ts, px) = rows.into_iter().unzip();
            PriceSeries::new(asset, ts, px, schema.sampling_interval_ms)
        })
        .collect()
}

/// Reads a single-asset price file.
pub fn load_prices(path: &Path, schema: &CsvSchema) -> Result<PriceSeries> {
    let mut all = load_price_file(path, schema)?;
    if all.len() != 1 {
        return Err(Error::Csv {
            path: path.to_path_buf(),
            reason: format!("expected one asset, found {}", all.len()),
        });
    }
    Ok(all.remove(0))
}

/// Writes a price series in the ingestion schema (`timestamp,price`).
pub fn write_prices(path: &Path, series: &PriceSeries) -> Result<()> {
    let out_err = |source: std::io::Error| Error::Output { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_path(path).map_err(|e| out_err(e.into()))?;
    w.write_record(["timestamp", "price"]).map_err(|e| out_err(e.into()))?;
    for (t, p) in series.timestamps.iter().zip(&series.prices) {
        w.write_record([t.to_string(), p.to_string()]).map_err(|e| out_err(e.into()))?;
    }
    w.flush().map_err(out_err)
}

/// Writes several assets to one file as `timestamp,asset,price` rows,
/// asset by asset.
pub fn write_price_file(path: &Path, series: &[PriceSeries]) -> Result<()> {
    let out_err = |source: std::io::Error| Error::Output { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_path(path).map_err(|e| out_err(e.into()))?;
    w.write_record(["timestamp", "asset", "price"]).map_err(|e| out_err(e.into()))?;
    for s in series {
        for (t, p) in s.timestamps.iter().zip(&s.prices) {
            w.write_record([t.to_string(), s.asset_id.clone(), p.to_string()]).map_err(|e| out_err(e.into()))?;
        }
    }
    w.flush().map_err(out_err)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PanelKind {
    Prices,
    Returns,
}

/// Assets aligned on a shared, evenly spaced grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    assets: Vec<String>,
    grid: Vec<i64>,
    columns: Vec<Vec<f64>>,
    interval_ms: i64,
    kind: PanelKind,
}

impl Panel {
    pub fn new(
        assets: Vec<String>,
        grid: Vec<i64>,
        columns: Vec<Vec<f64>>,
        interval_ms: i64,
        kind: PanelKind,
    ) -> Result<Self> {
        if assets.len() != columns.len() {
            return Err(invalid("one column per asset required"));
        }
        if columns.iter().any(|c| c.len() != grid.len()) {
            return Err(invalid("every column must match the grid length"));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = assets.iter().find(|a| !seen.insert(a.as_str())) {
            return Err(invalid(format!("duplicate asset id {dup}")));
        }
        Ok(Self { assets, grid, columns, interval_ms, kind })
    }

    /// Returns panel from series that already share a grid.
    pub fn from_returns(series: &[ReturnSeries], interval_ms: i64) -> Result<Self> {
        let first = series.first().ok_or_else(|| invalid("empty panel"))?;
        if series.iter().any(|s| s.timestamps != first.timestamps) {
            return Err(invalid("return series do not share a grid"));
        }
        Self::new(
            series.iter().map(|s| s.asset_id.clone()).collect(),
            first.timestamps.clone(),
            series.iter().map(|s| s.values.clone()).collect(),
            interval_ms,
            PanelKind::Returns,
        )
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn grid(&self) -> &[i64] {
        &self.grid
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn interval_ms(&self) -> i64 {
        self.interval_ms
    }

    pub fn kind(&self) -> PanelKind {
        self.kind
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn index_of(&self, asset: &str) -> Option<usize> {
        self.assets.iter().position(|a| a == asset)
    }

    pub fn column(&self, asset: &str) -> Option<&[f64]> {
        self.index_of(asset).map(|i| self.columns[i].as_slice())
    }

    pub fn price_series(&self, i: usize) -> Result<PriceSeries> {
        PriceSeries::new(self.assets[i].clone(), self.grid.clone(), self.columns[i].clone(), self.interval_ms)
    }

    /// Every column as its own price series, in panel order.
    pub fn to_price_series(&self) -> Result<Vec<PriceSeries>> {
        (0..self.n_assets()).map(|i| self.price_series(i)).collect()
    }

    pub fn return_series(&self, i: usize) -> Result<ReturnSeries> {
        ReturnSeries::from_raw(self.assets[i].clone(), self.grid.clone(), &self.columns[i])
    }

    /// Normalized log returns of every price column.
    pub fn to_returns(&self, lag_ms: i64) -> Result<Panel> {
        if self.kind != PanelKind::Prices {
            return Err(invalid("panel already holds returns"));
        }
        let returns = self.to_price_series()?.iter().map(|s| to_returns(s, lag_ms)).collect::<Result<Vec<_>>>()?;
        Panel::from_returns(&returns, self.interval_ms)
    }

    /// Rows `range`, columns untouched.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Panel {
        Panel {
            assets: self.assets.clone(),
            grid: self.grid[range.clone()].to_vec(),
            columns: self.columns.iter().map(|c| c[range.clone()].to_vec()).collect(),
            interval_ms: self.interval_ms,
            kind: self.kind,
        }
    }

    /// Subset of assets in the given order.
    pub fn select(&self, assets: &[String]) -> Result<Panel> {
        let mut columns = Vec::with_capacity(assets.len());
        for a in assets {
            let i = self.index_of(a).ok_or_else(|| Error::UnknownAsset(a.clone()))?;
            columns.push(self.columns[i].clone());
        }
        Panel::new(assets.to_vec(), self.grid.clone(), columns, self.interval_ms, self.kind)
    }

    /// Appends a series already sampled on this panel's grid.
    pub fn push(&mut self, series: PriceSeries) -> Result<()> {
        if series.timestamps != self.grid {
            return Err(invalid(format!("{} is not on the panel grid", series.asset_id)));
        }
        if self.index_of(&series.asset_id).is_some() {
            return Err(invalid(format!("duplicate asset id {}", series.asset_id)));
        }
        self.assets.push(series.asset_id);
        self.columns.push(series.prices);
        Ok(())
    }

    /// `timestamp,<asset>,...` with one row per grid point.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["timestamp".to_string()];
        header.extend(self.assets.iter().cloned());
        w.write_record(&header)?;
        let mut row = Vec::with_capacity(self.n_assets() + 1);
        for (r, t) in self.grid.iter().enumerate() {
            row.clear();
            row.push(t.to_string());
            row.extend(self.columns.iter().map(|c| c[r].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Aligns price series on a common grid with the default fill cap.
pub fn synchronize(series: &[PriceSeries], interval_ms: i64) -> Result<Panel> {
    synchronize_with(series, interval_ms, DEFAULT_MAX_FILL)
}

/// Aligns price series on the grid spanning their common time range.
///
/// The grid runs from the latest first observation to the earliest last
/// observation. Missing grid points take the previous tick, provided that
/// tick is at most `max_fill` intervals old.
pub fn synchronize_with(series: &[PriceSeries], interval_ms: i64, max_fill: usize) -> Result<Panel> {
    if series.is_empty() {
        return Err(invalid("synchronize needs at least one series"));
    }
    if interval_ms <= 0 {
        return Err(invalid("synchronization interval must be positive"));
    }
    if let Some(s) = series.iter().find(|s| s.is_empty()) {
        return Err(invalid(format!("{} has no observations", s.asset_id)));
    }
    let start = series.iter().map(|s| s.timestamps[0]).max().unwrap_or(0);
    let end = series.iter().map(|s| *s.timestamps.last().unwrap_or(&0)).min().unwrap_or(0);
    if start > end {
        return Err(Error::EmptyOverlap);
    }
    let n = ((end - start) / interval_ms) as usize + 1;
    let grid: Vec<i64> = (0..n as i64).map(|i| start + i * interval_ms).collect();
    let limit = interval_ms.saturating_mul(max_fill as i64);

    let mut columns = Vec::with_capacity(series.len());
    for s in series {
        let mut col = Vec::with_capacity(n);
        // index of the last observation at or before the grid point
        let mut j = 0usize;
        for &t in &grid {
            while j + 1 < s.timestamps.len() && s.timestamps[j + 1] <= t {
                j += 1;
            }
            let seen = s.timestamps[j];
            if seen > t {
                return Err(invalid(format!("{} has no observation before the grid start", s.asset_id)));
            }
            if t - seen > limit {
                let next = s.timestamps.get(j + 1).copied().unwrap_or(seen);
                return Err(Error::GapTooLong { asset: s.asset_id.clone(), from_ms: seen, to_ms: next, max_fill });
            }
            col.push(s.prices[j]);
        }
        columns.push(col);
    }
    Panel::new(series.iter().map(|s| s.asset_id.clone()).collect(), grid, columns, interval_ms, PanelKind::Prices)
}

/// How member prices enter an equal-weight index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexMode {
    /// Plain sum of raw prices.
    #[default]
    RawSum,
    /// Each member divided by its first price before summing.
    Rebased,
}

/// Equal-weight index over `members`, summed in panel column order.
pub fn build_index(
    panel: &Panel,
    members: &[String],
    mode: IndexMode,
    index_id: impl Into<String>,
) -> Result<PriceSeries> {
    if panel.kind != PanelKind::Prices {
        return Err(invalid("index requires a price panel"));
    }
    if members.is_empty() {
        return Err(invalid("index needs at least one member"));
    }
    let mut picked = vec![false; panel.n_assets()];
    for m in members {
        let i = panel.index_of(m).ok_or_else(|| Error::UnknownAsset(m.clone()))?;
        picked[i] = true;
    }
    let mut index = vec![0.0; panel.len()];
    for (col, _) in panel.columns.iter().zip(&picked).filter(|(_, p)| **p) {
        let scale = match mode {
            IndexMode::RawSum => 1.0,
            IndexMode::Rebased => 1.0 / col[0],
        };
        for (acc, p) in index.iter_mut().zip(col) {
            *acc += match mode {
                IndexMode::RawSum => *p,
                IndexMode::Rebased => p * scale,
            };
        }
    }
    PriceSeries::new(index_id, panel.grid.clone(), index, panel.interval_ms)
}
