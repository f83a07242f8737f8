//! Segment-wise detrended covariances and q-order fluctuation functions.
//!
//! A profile of length `T` is cut into `floor(T/s)` non-overlapping segments
//! of `s` samples (optionally a second pass counted from the end). In each
//! segment both profiles are detrended by a degree-`m` least-squares
//! polynomial and the residuals are multiplied and averaged, giving a signed
//! covariance per segment. The q-order fluctuation function averages the
//! signed powers `sign(F²)|F²|^{q/2}` over segments.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detrend::{dot, Detrender};
use crate::error::{invalid, Error, Result};
use crate::series::{compensated_sum, profile, Profile};

/// Relative zero floor applied for negative q, in units of the input variance.
pub const DEFAULT_ZERO_FLOOR_REL: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Segments counted from the start only.
    #[default]
    Forward,
    /// Segments counted from the start and again from the end.
    Bidirectional,
}

/// Segmentation of a profile at one scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentationConfig {
    pub scale: usize,
    pub poly_degree: usize,
    pub direction: Direction,
}

impl SegmentationConfig {
    pub fn new(scale: usize) -> Self {
        Self { scale, poly_degree: 2, direction: Direction::Forward }
    }

    pub fn with_degree(mut self, m: usize) -> Self {
        self.poly_degree = m;
        self
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = direction;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale < self.poly_degree + 2 {
            return Err(invalid(format!(
                "scale {} must be at least poly_degree + 2 = {}",
                self.scale,
                self.poly_degree + 2
            )));
        }
        Ok(())
    }

    /// Segment count for a profile of length `len`.
    pub fn segment_count(&self, len: usize) -> usize {
        let forward = len / self.scale;
        match self.direction {
            Direction::Forward => forward,
            Direction::Bidirectional => 2 * forward,
        }
    }

    fn segment_starts(&self, len: usize) -> impl Iterator<Item = usize> + '_ {
        let s = self.scale;
        let m = len / s;
        let backward = match self.direction {
            Direction::Forward => 0,
            Direction::Bidirectional => m,
        };
        (0..m).map(move |v| v * s).chain((0..backward).map(move |v| len - (v + 1) * s))
    }
}

/// Scale-independent detrending settings used across a scale grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluctuationConfig {
    pub poly_degree: usize,
    pub direction: Direction,
    /// Segments with `|F²|` below `zero_floor_rel * sqrt(var(x) var(y))` are
    /// dropped from negative-q averages.
    pub zero_floor_rel: f64,
}

impl Default for FluctuationConfig {
    fn default() -> Self {
        Self { poly_degree: 2, direction: Direction::Forward, zero_floor_rel: DEFAULT_ZERO_FLOOR_REL }
    }
}

impl FluctuationConfig {
    pub fn at_scale(&self, scale: usize) -> SegmentationConfig {
        SegmentationConfig { scale, poly_degree: self.poly_degree, direction: self.direction }
    }
}

/// Detrended residuals of one profile at one scale, segment after segment.
#[derive(Debug, Clone)]
pub struct DetrendedProfile {
    scale: usize,
    segments: usize,
    residuals: Vec<f64>,
}

impl DetrendedProfile {
    pub fn scale(&self) -> usize {
        self.scale
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn segment(&self, v: usize) -> &[f64] {
        &self.residuals[v * self.scale..(v + 1) * self.scale]
    }
}

/// Removes the local polynomial trend from every segment of `profile`.
pub fn detrend(profile: &Profile, cfg: &SegmentationConfig) -> Result<DetrendedProfile> {
    let detrender = Detrender::new(cfg.scale, cfg.poly_degree)?;
    detrend_with(profile.values(), cfg, &detrender)
}

pub(crate) fn detrend_with(
    values: &[f64],
    cfg: &SegmentationConfig,
    detrender: &Detrender,
) -> Result<DetrendedProfile> {
    cfg.validate()?;
    let s = cfg.scale;
    if values.len() < s {
        return Err(invalid(format!("profile length {} shorter than scale {s}", values.len())));
    }
    let segments = cfg.segment_count(values.len());
    let mut residuals = vec![0.0; segments * s];
    for (start, out) in cfg.segment_starts(values.len()).zip(residuals.chunks_exact_mut(s)) {
        detrender.residual_into(&values[start..start + s], out);
    }
    Ok(DetrendedProfile { scale: s, segments, residuals })
}

/// Signed detrended covariance per segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentCovariances {
    pub scale: usize,
    pub values: Vec<f64>,
}

impl SegmentCovariances {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-segment `(1/s) Σ_k rx(k) ry(k)` of two detrended profiles.
pub fn covariances(x: &DetrendedProfile, y: &DetrendedProfile) -> Result<SegmentCovariances> {
    if x.scale != y.scale || x.segments != y.segments {
        return Err(invalid("detrended profiles use different segmentations"));
    }
    let s = x.scale as f64;
    let values = (0..x.segments).map(|v| dot(x.segment(v), y.segment(v)) / s).collect();
    Ok(SegmentCovariances { scale: x.scale, values })
}

/// Detrended covariances of two equally long profiles.
pub fn detrended_covariances(
    x_profile: &Profile,
    y_profile: &Profile,
    cfg: &SegmentationConfig,
) -> Result<SegmentCovariances> {
    if x_profile.len() != y_profile.len() {
        return Err(invalid(format!("profile lengths differ: {} vs {}", x_profile.len(), y_profile.len())));
    }
    let detrender = Detrender::new(cfg.scale, cfg.poly_degree)?;
    let dx = detrend_with(x_profile.values(), cfg, &detrender)?;
    let dy = detrend_with(y_profile.values(), cfg, &detrender)?;
    covariances(&dx, &dy)
}

/// One q-order fluctuation value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QFluctuation {
    /// `(1/M) Σ sign(F²)|F²|^{q/2}` over the segments kept.
    pub moment: f64,
    /// `sign(moment)|moment|^{1/q}`.
    pub value: f64,
    pub excluded: usize,
}

/// q-order average of the segment covariances.
///
/// For `q < 0`, segments with `|F²|` below `zero_floor` (and exact zeros) are
/// left out.
pub fn fluctuation_function(cov: &SegmentCovariances, q: f64, zero_floor: f64) -> Result<QFluctuation> {
    if q == 0.0 || !q.is_finite() {
        return Err(invalid(format!("q must be finite and non-zero, got {q}")));
    }
    if cov.is_empty() {
        return Err(invalid("no segments"));
    }
    let half = q / 2.0;
    let keep = |f2: f64| q > 0.0 || (f2 != 0.0 && f2.abs() >= zero_floor);
    let kept = cov.values.iter().filter(|f| keep(**f)).count();
    if kept == 0 {
        return Err(Error::AllSegmentsExcluded(cov.len()));
    }
    let total = compensated_sum(cov.values.iter().filter(|f| keep(**f)).map(|f| f.signum() * f.abs().powf(half)));
    let moment = total / kept as f64;
    Ok(QFluctuation { moment, value: signed_root(moment, q), excluded: cov.len() - kept })
}

fn signed_root(moment: f64, q: f64) -> f64 {
    if moment == 0.0 {
        return 0.0;
    }
    moment.signum() * moment.abs().powf(1.0 / q)
}

/// `F(q, s)` on a grid, rows by scale and columns by q.
#[derive(Debug, Clone, PartialEq)]
pub struct FluctuationSurface {
    pub q_grid: Vec<f64>,
    pub s_grid: Vec<usize>,
    values: Vec<f64>,
    moments: Vec<f64>,
    excluded: Vec<usize>,
    pub single_signal: bool,
}

impl FluctuationSurface {
    /// Builds a surface from explicit values (row-major, `s` by `q`).
    pub fn from_values(q_grid: Vec<f64>, s_grid: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if values.len() != q_grid.len() * s_grid.len() {
            return Err(invalid("surface values do not match the grid"));
        }
        let moments = values
            .iter()
            .zip(s_grid.iter().flat_map(|_| q_grid.iter()))
            .map(|(v, q)| v.signum() * v.abs().powf(*q))
            .collect();
        let n = values.len();
        Ok(Self { q_grid, s_grid, values, moments, excluded: vec![0; n], single_signal: true })
    }

    fn idx(&self, si: usize, qi: usize) -> usize {
        si * self.q_grid.len() + qi
    }

    /// `F(q_grid[qi], s_grid[si])`; NaN where the point is invalid.
    pub fn value(&self, si: usize, qi: usize) -> f64 {
        self.values[self.idx(si, qi)]
    }

    pub fn moment(&self, si: usize, qi: usize) -> f64 {
        self.moments[self.idx(si, qi)]
    }

    pub fn excluded(&self, si: usize, qi: usize) -> usize {
        self.excluded[self.idx(si, qi)]
    }

    pub fn is_valid(&self, si: usize, qi: usize) -> bool {
        self.value(si, qi).is_finite()
    }

    /// Column of values at `q_grid[qi]`, one per scale.
    pub fn column(&self, qi: usize) -> Vec<f64> {
        (0..self.s_grid.len()).map(|si| self.value(si, qi)).collect()
    }

    /// Rows are scales, columns are q values.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        self.write_grid(out, |si, qi| self.value(si, qi).to_string())
    }

    /// Same layout as [`write_csv`](Self::write_csv), holding exclusion counts.
    pub fn write_exclusions_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        self.write_grid(out, |si, qi| self.excluded(si, qi).to_string())
    }

    fn write_grid<W: Write>(&self, out: W, cell: impl Fn(usize, usize) -> String) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["s".to_string()];
        header.extend(self.q_grid.iter().map(|q| format!("q={q}")));
        w.write_record(&header)?;
        for (si, s) in self.s_grid.iter().enumerate() {
            let mut row = vec![s.to_string()];
            row.extend((0..self.q_grid.len()).map(|qi| cell(si, qi)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_grids(len: usize, q_grid: &[f64], s_grid: &[usize], cfg: &FluctuationConfig) -> Result<()> {
    if q_grid.is_empty() || s_grid.is_empty() {
        return Err(invalid("q and s grids must be non-empty"));
    }
    if let Some(q) = q_grid.iter().find(|q| **q == 0.0 || !q.is_finite()) {
        return Err(invalid(format!("q grid contains {q}; q must be finite and non-zero")));
    }
    let max_s = *s_grid.iter().max().unwrap_or(&0);
    if max_s > len / 4 {
        return Err(invalid(format!("largest scale {max_s} leaves fewer than 4 segments in {len} samples")));
    }
    for &s in s_grid {
        cfg.at_scale(s).validate()?;
    }
    Ok(())
}

fn population_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = compensated_sum(x.iter().copied()) / n;
    compensated_sum(x.iter().map(|v| (v - mean) * (v - mean))) / n
}

/// Fluctuation surface of a single signal.
pub fn fluctuation_surface_single(
    x: &[f64],
    q_grid: &[f64],
    s_grid: &[usize],
    cfg: &FluctuationConfig,
) -> Result<FluctuationSurface> {
    check_grids(x.len(), q_grid, s_grid, cfg)?;
    let prof = profile(x)?;
    let zero_floor = cfg.zero_floor_rel * population_variance(x);
    let rows = s_grid
        .par_iter()
        .map(|&s| {
            let seg = cfg.at_scale(s);
            let d = Detrender::new(s, cfg.poly_degree)?;
            let dx = detrend_with(prof.values(), &seg, &d)?;
            let cov = covariances(&dx, &dx)?;
            Ok(surface_row(&cov, q_grid, zero_floor))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(q_grid, s_grid, rows, true))
}

/// Fluctuation surface of the pair `(x, y)`.
///
/// When `y` holds the same samples as `x` this is the single-signal surface.
pub fn fluctuation_surface(
    x: &[f64],
    y: &[f64],
    q_grid: &[f64],
    s_grid: &[usize],
    cfg: &FluctuationConfig,
) -> Result<FluctuationSurface> {
    if x.len() != y.len() {
        return Err(invalid(format!("series lengths differ: {} vs {}", x.len(), y.len())));
    }
    if x == y {
        return fluctuation_surface_single(x, q_grid, s_grid, cfg);
    }
    check_grids(x.len(), q_grid, s_grid, cfg)?;
    let px = profile(x)?;
    let py = profile(y)?;
    let zero_floor = cfg.zero_floor_rel * (population_variance(x) * population_variance(y)).sqrt();
    let rows = s_grid
        .par_iter()
        .map(|&s| {
            let seg = cfg.at_scale(s);
            let d = Detrender::new(s, cfg.poly_degree)?;
            let dx = detrend_with(px.values(), &seg, &d)?;
            let dy = detrend_with(py.values(), &seg, &d)?;
            let cov = covariances(&dx, &dy)?;
            Ok(surface_row(&cov, q_grid, zero_floor))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(q_grid, s_grid, rows, false))
}

type Row = Vec<(f64, f64, usize)>;

fn surface_row(cov: &SegmentCovariances, q_grid: &[f64], zero_floor: f64) -> Row {
    q_grid
        .iter()
        .map(|&q| match fluctuation_function(cov, q, zero_floor) {
            Ok(f) if f.value.is_finite() => (f.value, f.moment, f.excluded),
            Ok(f) => (f64::NAN, f.moment, f.excluded),
            Err(_) => (f64::NAN, f64::NAN, cov.len()),
        })
        .collect()
}

fn assemble(q_grid: &[f64], s_grid: &[usize], rows: Vec<Row>, single: bool) -> FluctuationSurface {
    let n = q_grid.len() * s_grid.len();
    let mut values = Vec::with_capacity(n);
    let mut moments = Vec::with_capacity(n);
    let mut excluded = Vec::with_capacity(n);
    for (v, m, e) in rows.into_iter().flatten() {
        values.push(v);
        moments.push(m);
        excluded.push(e);
    }
    FluctuationSurface {
        q_grid: q_grid.to_vec(),
        s_grid: s_grid.to_vec(),
        values,
        moments,
        excluded,
        single_signal: single,
    }
}

/// About `count` distinct integers spaced logarithmically in `[min, max]`.
pub fn log_spaced_scales(min: usize, max: usize, count: usize) -> Vec<usize> {
    if min == 0 || max < min || count == 0 {
        return Vec::new();
    }
    if count == 1 || max == min {
        return vec![min];
    }
    let (lo, hi) = ((min as f64).ln(), (max as f64).ln());
    let mut out: Vec<usize> = (0..count)
        .map(|i| (lo + (hi - lo) * i as f64 / (count - 1) as f64).exp().round() as usize)
        .map(|s| s.clamp(min, max))
        .collect();
    out.dedup();
    out
}

/// Twenty log-spaced scales between 10 and `len / 4`.
pub fn default_scales(len: usize) -> Vec<usize> {
    log_spaced_scales(10, len / 4, 20)
}

/// `{-3.0, -2.8, ..., 3.0}` without zero.
pub fn default_q_grid() -> Vec<f64> {
    q_range(-3.0, 3.0, 0.2)
}

/// Evenly stepped q values from `min` to `max` inclusive, zero removed.
pub fn q_range(min: f64, max: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || max < min {
        return Vec::new();
    }
    let n = ((max - min) / step + 1e-9).floor() as i64;
    (0..=n)
        .map(|i| {
            let q = min + i as f64 * step;
            // snap to a 1e-9 grid
            (q * 1e9).round() / 1e9
        })
        .filter(|q| *q != 0.0)
        .collect()
}
