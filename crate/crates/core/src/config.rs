//! Declarative run configuration (TOML) and its static validation.
//!
//! ```toml
//! out_dir = "out"
//! seed = 7
//!
//! [input]
//! files = ["data/*.csv"]
//!
//! [spectrum]
//! window = "30d"
//! step = "5d"
//!
//! [rho]
//! q = [1.0, 4.0]
//! s = ["10m", "360m"]
//! ```
//!
//! Every table rejects unknown keys. Omitted analysis tables are disabled;
//! an empty table enables the block with its defaults.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::fluctuation::{q_range, Direction, DEFAULT_ZERO_FLOOR_REL};
use crate::network::MetricOptions;
use crate::rho::MIN_SEGMENTS;
use crate::series::{CsvSchema, IndexMode, DEFAULT_MAX_FILL, MINUTE_MS};
use crate::spectrum::DEFAULT_R2_MIN;
use crate::synth::GeneratorKind;
use crate::tail::{TailMethod, DEFAULT_TAIL_FRACTION};

/// A wall-clock duration written as text (`"30d"`, `"10m"`, `"6h"`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub ms: i64,
}

impl Span {
    pub const fn minutes(m: i64) -> Self {
        Self { ms: m * MINUTE_MS }
    }

    pub const fn days(d: i64) -> Self {
        Self { ms: d * 24 * 60 * MINUTE_MS }
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let d = humantime::parse_duration(text.trim()).map_err(|e| format!("bad duration `{text}`: {e}"))?;
        let ms = i64::try_from(d.as_millis()).map_err(|_| format!("duration `{text}` too long"))?;
        if ms <= 0 {
            return Err(format!("duration `{text}` must be positive"));
        }
        Ok(Self { ms })
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = std::time::Duration::from_millis(self.ms.max(0) as u64);
        write!(f, "{}", humantime::format_duration(d))
    }
}

impl Serialize for Span {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Span {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Span::parse(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    /// Glob patterns, expanded and sorted.
    pub files: Vec<String>,
    pub timestamp_column: String,
    pub price_column: String,
    pub asset_column: Option<String>,
    pub sampling_interval: Span,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self {
            files: Vec::new(),
            timestamp_column: "timestamp".into(),
            price_column: "price".into(),
            asset_column: None,
            sampling_interval: Span::minutes(1),
        }
    }
}

impl InputConfig {
    pub fn schema(&self) -> CsvSchema {
        CsvSchema {
            timestamp_column: self.timestamp_column.clone(),
            price_column: self.price_column.clone(),
            asset_column: self.asset_column.clone(),
            sampling_interval_ms: self.sampling_interval.ms,
        }
    }
}

/// A generated input. Prices follow `exp(scale · cumsum(z))` where `z` is the
/// z-scored generator output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticInput {
    /// One id, or two for a correlated pair.
    pub assets: Vec<String>,
    pub generator: GeneratorKind,
    /// Number of returns.
    pub length: usize,
    /// Defaults to the run seed plus the entry's position.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub start_ms: i64,
    #[serde(default = "default_return_scale")]
    pub return_scale: f64,
}

fn default_return_scale() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyncConfig {
    pub interval: Span,
    pub max_fill: usize,
    pub return_lag: Span,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self { interval: Span::minutes(1), max_fill: DEFAULT_MAX_FILL, return_lag: Span::minutes(1) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexConfig {
    pub id: String,
    pub members: Vec<String>,
    pub mode: IndexMode,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            id: "INDEX".into(),
            members: ["BTC", "ETH", "XRP", "BCH", "LTC", "ADA", "BNB", "EOS"].iter().map(|s| s.to_string()).collect(),
            mode: IndexMode::RawSum,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumBlock {
    pub enabled: bool,
    /// Assets to analyze; all (including the index) when empty.
    pub assets: Vec<String>,
    pub window: Span,
    pub step: Span,
    pub q_min: f64,
    pub q_max: f64,
    pub q_step: f64,
    /// Explicit q values; overrides the range when set.
    pub q_grid: Option<Vec<f64>>,
    /// Scales in samples; twenty log-spaced values in `[10, window/4]` when unset.
    pub scales: Option<Vec<usize>>,
    pub fit_min: Option<usize>,
    pub fit_max: Option<usize>,
    pub poly_degree: usize,
    pub direction: Direction,
    pub r2_min: f64,
    pub zero_floor_rel: f64,
}

impl Default for SpectrumBlock {
    fn default() -> Self {
        Self {
            enabled: true,
            assets: Vec::new(),
            window: Span::days(30),
            step: Span::days(5),
            q_min: -3.0,
            q_max: 3.0,
            q_step: 0.2,
            q_grid: None,
            scales: None,
            fit_min: None,
            fit_max: None,
            poly_degree: 2,
            direction: Direction::Forward,
            r2_min: DEFAULT_R2_MIN,
            zero_floor_rel: DEFAULT_ZERO_FLOOR_REL,
        }
    }
}

impl SpectrumBlock {
    pub fn q_values(&self) -> Vec<f64> {
        match &self.q_grid {
            Some(q) => q.clone(),
            None => q_range(self.q_min, self.q_max, self.q_step),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TailsBlock {
    pub enabled: bool,
    pub assets: Vec<String>,
    pub window: Span,
    pub step: Span,
    pub tail_fraction: f64,
    pub method: TailMethod,
}

impl Default for TailsBlock {
    fn default() -> Self {
        Self {
            enabled: true,
            assets: Vec::new(),
            window: Span::days(30),
            step: Span::days(5),
            tail_fraction: DEFAULT_TAIL_FRACTION,
            method: TailMethod::Hill,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RhoBlock {
    pub enabled: bool,
    /// Explicit pairs; every pair of assets when empty.
    pub pairs: Vec<[String; 2]>,
    pub window: Span,
    pub step: Span,
    pub q: Vec<f64>,
    pub s: Vec<Span>,
    pub poly_degree: usize,
    pub direction: Direction,
}

impl Default for RhoBlock {
    fn default() -> Self {
        Self {
            enabled: true,
            pairs: Vec::new(),
            window: Span::days(10),
            step: Span::days(1),
            q: vec![1.0, 4.0],
            s: vec![Span::minutes(10), Span::minutes(360)],
            poly_degree: 2,
            direction: Direction::Forward,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MstBlock {
    pub enabled: bool,
    /// Assets in the tree; all when empty.
    pub assets: Vec<String>,
    pub window: Span,
    pub step: Span,
    pub q: Vec<f64>,
    pub s: Vec<Span>,
    pub poly_degree: usize,
    pub direction: Direction,
    pub metrics: MetricOptions,
    pub write_edges: bool,
}

impl Default for MstBlock {
    fn default() -> Self {
        Self {
            enabled: true,
            assets: Vec::new(),
            window: Span::days(7),
            step: Span::days(1),
            q: vec![1.0, 4.0],
            s: vec![Span::minutes(10), Span::minutes(60), Span::minutes(360)],
            poly_degree: 2,
            direction: Direction::Forward,
            metrics: MetricOptions::default(),
            write_edges: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses the available parallelism.
    pub threads: usize,
    pub seed: u64,
    pub input: InputConfig,
    pub synthetic: Vec<SyntheticInput>,
    pub sync: SyncConfig,
    pub index: Option<IndexConfig>,
    pub spectrum: Option<SpectrumBlock>,
    pub tails: Option<TailsBlock>,
    pub rho: Option<RhoBlock>,
    pub mst: Option<MstBlock>,
}

impl Default for RunConfig {
    /// Every block enabled with its default parameters.
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            threads: 0,
            seed: 0,
            input: InputConfig::default(),
            synthetic: Vec::new(),
            sync: SyncConfig::default(),
            index: None,
            spectrum: Some(SpectrumBlock::default()),
            tails: Some(TailsBlock::default()),
            rho: Some(RhoBlock::default()),
            mst: Some(MstBlock::default()),
        }
    }
}

impl RunConfig {
    /// Parses TOML text. Analysis tables that are absent stay disabled.
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        // `Default` enables every block; parsed configs only enable what they name.
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        for (name, slot) in [("spectrum", 0), ("tails", 1), ("rho", 2), ("mst", 3)] {
            if !table.contains_key(name) {
                match slot {
                    0 => cfg.spectrum = None,
                    1 => cfg.tails = None,
                    2 => cfg.rho = None,
                    _ => cfg.mst = None,
                }
            }
        }
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).unwrap_or_default()
    }

    pub fn spectrum_enabled(&self) -> Option<&SpectrumBlock> {
        self.spectrum.as_ref().filter(|b| b.enabled)
    }

    pub fn tails_enabled(&self) -> Option<&TailsBlock> {
        self.tails.as_ref().filter(|b| b.enabled)
    }

    pub fn rho_enabled(&self) -> Option<&RhoBlock> {
        self.rho.as_ref().filter(|b| b.enabled)
    }

    pub fn mst_enabled(&self) -> Option<&MstBlock> {
        self.mst.as_ref().filter(|b| b.enabled)
    }
}

/// One failed validation rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub reason: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

struct Checker {
    out: Vec<Violation>,
    interval: i64,
}

impl Checker {
    fn push(&mut self, field: impl Into<String>, reason: impl Into<String>) {
        self.out.push(Violation { field: field.into(), reason: reason.into() });
    }

    /// Samples in `span`, reporting a violation if it is not whole.
    fn samples(&mut self, field: &str, span: Span) -> Option<usize> {
        if self.interval <= 0 {
            return None;
        }
        if span.ms % self.interval != 0 {
            self.push(field, format!("{span} is not a multiple of the {} sync interval", Span { ms: self.interval }));
            return None;
        }
        Some((span.ms / self.interval) as usize)
    }

    fn window(&mut self, block: &str, window: Span, step: Span) -> Option<usize> {
        self.samples(&format!("{block}.step"), step);
        self.samples(&format!("{block}.window"), window)
    }

    fn segment_floor(&mut self, block: &str, window: Option<usize>, scales: &[Span], degree: usize) {
        if scales.is_empty() {
            self.push(format!("{block}.s"), "at least one scale required");
        }
        for (i, s) in scales.iter().enumerate() {
            let field = format!("{block}.s[{i}]");
            let Some(samples) = self.samples(&field, *s) else { continue };
            if samples < degree + 2 {
                self.push(&field, format!("scale of {samples} samples is below poly_degree + 2 = {}", degree + 2));
            }
            if let Some(w) = window {
                let segments = w / samples.max(1);
                if segments < MIN_SEGMENTS {
                    self.push(
                        &field,
                        format!("{s} leaves only {segments} segments in a {w}-sample window; at least {MIN_SEGMENTS} required"),
                    );
                }
            }
        }
    }

    fn positive_q(&mut self, block: &str, qs: &[f64]) {
        if qs.is_empty() {
            self.push(format!("{block}.q"), "at least one q value required");
        }
        for q in qs {
            if !(*q > 0.0 && q.is_finite()) {
                self.push(format!("{block}.q"), format!("q = {q}: ρ(q,s) is defined here for q > 0 only"));
            }
        }
    }
}

/// Static checks of every enabled block; an empty list means the config is
/// runnable (inputs are resolved only at run time).
pub fn validate(cfg: &RunConfig) -> Vec<Violation> {
    let mut c = Checker { out: Vec::new(), interval: cfg.sync.interval.ms };
    if cfg.sync.interval.ms % cfg.input.sampling_interval.ms != 0 {
        c.push("sync.interval", "must be a multiple of input.sampling_interval");
    }
    c.samples("sync.return_lag", cfg.sync.return_lag);
    for (i, syn) in cfg.synthetic.iter().enumerate() {
        let field = format!("synthetic[{i}]");
        let want = if matches!(syn.generator, GeneratorKind::CorrelatedPair { .. }) { 2 } else { 1 };
        if syn.assets.len() != want {
            c.push(format!("{field}.assets"), format!("{want} asset id(s) expected"));
        }
        if syn.length < 3 {
            c.push(format!("{field}.length"), "at least 3 samples required");
        }
        if !(syn.return_scale > 0.0 && syn.return_scale.is_finite()) {
            c.push(format!("{field}.return_scale"), "must be positive");
        }
    }
    if let Some(idx) = &cfg.index {
        if idx.members.is_empty() {
            c.push("index.members", "at least one member required");
        }
    }
    if let Some(b) = cfg.spectrum_enabled() {
        let w = c.window("spectrum", b.window, b.step);
        let span = (b.q_max - b.q_min) / b.q_step;
        let stepped = b.q_step > 0.0 && span.is_finite() && (0.0..=1000.0).contains(&span);
        if b.q_grid.is_none() && !stepped {
            c.push("spectrum.q_step", "q_min, q_max and q_step must give between 1 and 1000 steps");
        }
        let q = if b.q_grid.is_some() || stepped { b.q_values() } else { Vec::new() };
        if q.len() < 5 {
            c.push("spectrum.q_grid", format!("{} q values; at least 5 needed for the spectrum", q.len()));
        }
        if q.contains(&0.0) {
            c.push("spectrum.q_grid", "contains 0; the fluctuation function requires q ≠ 0");
        }
        if q.windows(2).any(|p| p[1] <= p[0]) {
            c.push("spectrum.q_grid", "must be strictly increasing");
        }
        if let Some(scales) = &b.scales {
            for s in scales {
                if *s < b.poly_degree + 2 {
                    c.push("spectrum.scales", format!("scale {s} below poly_degree + 2"));
                }
                if let Some(w) = w {
                    if *s > w / 4 {
                        c.push("spectrum.scales", format!("scale {s} leaves fewer than 4 segments per window"));
                    }
                }
            }
        } else if let Some(w) = w {
            if w / 4 < 10 {
                c.push("spectrum.window", "too short for the default scale range [10, window/4]");
            }
        }
        if let (Some(a), Some(b)) = (b.fit_min, b.fit_max) {
            if a >= b {
                c.push("spectrum.fit_min", "must be below fit_max");
            }
        }
        if !(0.0..=1.0).contains(&b.r2_min) {
            c.push("spectrum.r2_min", "must lie in [0, 1]");
        }
        if !(b.zero_floor_rel >= 0.0) {
            c.push("spectrum.zero_floor_rel", "must be non-negative");
        }
    }
    if let Some(b) = cfg.tails_enabled() {
        c.window("tails", b.window, b.step);
        if !(b.tail_fraction > 0.0 && b.tail_fraction < 1.0) {
            c.push("tails.tail_fraction", "must lie in (0, 1)");
        }
    }
    if let Some(b) = cfg.rho_enabled() {
        let w = c.window("rho", b.window, b.step);
        c.positive_q("rho", &b.q);
        c.segment_floor("rho", w, &b.s, b.poly_degree);
        for (i, [a, bb]) in b.pairs.iter().enumerate() {
            if a == bb {
                c.push(format!("rho.pairs[{i}]"), "pair of identical assets");
            }
        }
    }
    if let Some(b) = cfg.mst_enabled() {
        let w = c.window("mst", b.window, b.step);
        c.positive_q("mst", &b.q);
        c.segment_floor("mst", w, &b.s, b.poly_degree);
        if b.assets.len() == 1 {
            c.push("mst.assets", "a tree needs at least two assets");
        }
    }
    c.out
}

/// Parses and validates config text in one step.
pub fn validate_text(text: &str) -> Vec<Violation> {
    match RunConfig::from_toml(text) {
        Ok(cfg) => validate(&cfg),
        Err(e) => vec![Violation { field: "config".into(), reason: e.to_string() }],
    }
}
