//! Config-driven batch runs: load, synchronize, analyze, write.
//!
//! ```no_run
//! use mfcca::config::RunConfig;
//!
//! let cfg = RunConfig::from_path("run.toml".as_ref())?;
//! let report = mfcca::pipeline::run(&cfg)?;
//! assert!(report.success());
//! # Ok::<(), mfcca::Error>(())
//! ```
//!
//! Outputs land in `out_dir`:
//!
//! | file | content |
//! |------|---------|
//! | `spectrum_<asset>.csv` | rolling singularity-spectrum summary |
//! | `tails_<asset>.csv` | rolling tail exponent and regime |
//! | `rho_<a>__<b>.csv` | rolling ρ(q,s) per pair |
//! | `mst_metrics.csv` | rolling tree metrics |
//! | `mst_edges/<end>_q<q>_s<s>.{csv,net}` | tree edges per window |
//! | `manifest.json` | config echo, inputs, per-block status and timings |
//!
//! Every file except the timing fields of the manifest is byte-identical
//! across runs and thread counts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::config::{validate, MstBlock, RhoBlock, RunConfig, SpectrumBlock, SyntheticInput, TailsBlock};
use crate::error::{Error, Result};
use crate::fluctuation::FluctuationConfig;
use crate::network::{rolling_mst, write_mst_metrics, MstParams};
use crate::rho::{rolling_rho, write_rho_timeline};
use crate::series::{build_index, load_price_file, synchronize_with, Panel, PriceSeries};
use crate::spectrum::{rolling_spectrum, FitRange, SpectrumParams};
use crate::synth::{returns_to_prices, GeneratorSpec};
use crate::tail::{rolling_tail, write_tail_timeline};
use crate::window::{samples_in, RollingWindow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockStatus {
    Ok,
    Failed,
}

/// Outcome of one analysis block.
#[derive(Debug, Clone, Serialize)]
pub struct BlockReport {
    pub name: String,
    pub status: BlockStatus,
    pub error: Option<String>,
    /// Paths relative to `out_dir`.
    pub outputs: Vec<String>,
    pub records: usize,
    /// Records carrying at least one flag.
    pub flagged: usize,
    #[serde(skip)]
    pub elapsed_ms: u128,
}

#[derive(Debug, Clone, Serialize)]
pub struct InputSummary {
    pub asset: String,
    pub rows: usize,
    pub source: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub inputs: Vec<InputSummary>,
    pub assets: Vec<String>,
    pub grid_start: i64,
    pub grid_end: i64,
    pub grid_len: usize,
    pub blocks: Vec<BlockReport>,
}

impl RunReport {
    /// True when every enabled block finished.
    pub fn success(&self) -> bool {
        self.blocks.iter().all(|b| b.status == BlockStatus::Ok)
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a RunConfig,
    report: &'a RunReport,
    timings_ms: BTreeMap<String, u128>,
}

/// File-name-safe rendering of an asset id.
pub fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' }).collect()
}

fn out_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Output { path: path.to_path_buf(), source }
}

fn write_file(dir: &Path, rel: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(out_err(parent))?;
    }
    std::fs::write(&path, bytes).map_err(out_err(&path))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| Error::InvalidInput(format!("csv encoding: {e}")))?;
    Ok(buf)
}

/// Price series of one synthetic entry; `index` picks the default seed.
pub fn synthetic_prices(
    entry: &SyntheticInput,
    index: usize,
    run_seed: u64,
    interval_ms: i64,
) -> Result<Vec<PriceSeries>> {
    let seed = entry.seed.unwrap_or(run_seed.wrapping_add(index as u64));
    let spec = GeneratorSpec { kind: entry.generator, length: entry.length, seed };
    let series = spec.generate()?;
    if series.len() != entry.assets.len() {
        return Err(Error::Config(format!(
            "generator yields {} series for {} asset ids",
            series.len(),
            entry.assets.len()
        )));
    }
    series
        .iter()
        .zip(&entry.assets)
        .map(|(r, id)| {
            PriceSeries::regular(
                id.clone(),
                entry.start_ms,
                interval_ms,
                returns_to_prices(r, 100.0, entry.return_scale),
            )
        })
        .collect()
}

/// Files matched by the input globs, sorted and de-duplicated.
pub fn resolve_inputs(patterns: &[String]) -> Result<Vec<PathBuf>> {
    let mut paths = std::collections::BTreeSet::new();
    for pat in patterns {
        let matches = glob::glob(pat).map_err(|e| Error::Config(format!("input pattern `{pat}`: {e}")))?;
        let mut any = false;
        for m in matches {
            let p = m.map_err(|e| Error::Io {
                path: e.path().to_path_buf(),
                source: std::io::Error::new(e.error().kind(), e.error().to_string()),
            })?;
            any = true;
            paths.insert(p);
        }
        if !any {
            return Err(Error::Config(format!("input pattern `{pat}` matched no files")));
        }
    }
    Ok(paths.into_iter().collect())
}

/// Loads every input and builds the synchronized price panel, with the index
/// column appended when configured.
pub fn load_panel(cfg: &RunConfig) -> Result<(Panel, Vec<InputSummary>)> {
    let mut by_asset: BTreeMap<String, (PriceSeries, String)> = BTreeMap::new();
    let mut add = |s: PriceSeries, source: String| -> Result<()> {
        if let Some((_, prev)) = by_asset.get(&s.asset_id) {
            return Err(Error::Config(format!("asset {} appears in both {prev} and {source}", s.asset_id)));
        }
        by_asset.insert(s.asset_id.clone(), (s, source));
        Ok(())
    };
    let schema = cfg.input.schema();
    for path in resolve_inputs(&cfg.input.files)? {
        for s in load_price_file(&path, &schema)? {
            add(s, path.display().to_string())?;
        }
    }
    for (i, entry) in cfg.synthetic.iter().enumerate() {
        for s in synthetic_prices(entry, i, cfg.seed, cfg.input.sampling_interval.ms)? {
            add(s, format!("synthetic[{i}]"))?;
        }
    }
    if by_asset.is_empty() {
        return Err(Error::Config("no inputs: set input.files or add a [[synthetic]] entry".into()));
    }
    let inputs = by_asset
        .values()
        .map(|(s, src)| InputSummary { asset: s.asset_id.clone(), rows: s.len(), source: src.clone() })
        .collect();
    let series: Vec<PriceSeries> = by_asset.into_values().map(|(s, _)| s).collect();
    let mut panel = synchronize_with(&series, cfg.sync.interval.ms, cfg.sync.max_fill)?;
    if let Some(idx) = &cfg.index {
        let index = build_index(&panel, &idx.members, idx.mode, idx.id.clone())?;
        panel.push(index)?;
    }
    Ok((panel, inputs))
}

fn selected(all: &[String], wanted: &[String], exclude: Option<&str>) -> Result<Vec<String>> {
    if wanted.is_empty() {
        return Ok(all.iter().filter(|a| Some(a.as_str()) != exclude).cloned().collect());
    }
    for w in wanted {
        if !all.contains(w) {
            return Err(Error::UnknownAsset(w.clone()));
        }
    }
    Ok(wanted.to_vec())
}

struct Ctx<'a> {
    out: &'a Path,
    returns: &'a Panel,
    index_id: Option<&'a str>,
}

impl Ctx<'_> {
    fn window(&self, window_ms: i64, step_ms: i64) -> Result<RollingWindow> {
        RollingWindow::from_durations(window_ms, step_ms, self.returns.interval_ms())
    }

    fn scales(&self, spans: &[crate::config::Span]) -> Result<Vec<usize>> {
        spans.iter().map(|s| samples_in(s.ms, self.returns.interval_ms())).collect()
    }
}

#[derive(Default)]
struct Tally {
    outputs: Vec<String>,
    records: usize,
    flagged: usize,
}

fn spectrum_block(ctx: &Ctx, b: &SpectrumBlock, t: &mut Tally) -> Result<()> {
    let window = ctx.window(b.window.ms, b.step.ms)?;
    let params = SpectrumParams {
        q_grid: b.q_values(),
        s_grid: b.scales.clone(),
        fit_range: match (b.fit_min, b.fit_max) {
            (None, None) => None,
            (lo, hi) => {
                let d = FitRange::default_for(window.len);
                Some(FitRange::new(lo.unwrap_or(d.min), hi.unwrap_or(d.max)))
            }
        },
        fluctuation: FluctuationConfig {
            poly_degree: b.poly_degree,
            direction: b.direction,
            zero_floor_rel: b.zero_floor_rel,
        },
        r2_min: b.r2_min,
    };
    for asset in selected(ctx.returns.assets(), &b.assets, None)? {
        let i = ctx.returns.index_of(&asset).ok_or_else(|| Error::UnknownAsset(asset.clone()))?;
        let timeline = rolling_spectrum(&ctx.returns.return_series(i)?, window, &params)?;
        t.records += timeline.len();
        t.flagged += timeline.records.iter().filter(|r| !r.flags.is_empty()).count();
        let rel = format!("spectrum_{}.csv", file_stem(&asset));
        write_file(ctx.out, &rel, &csv_bytes(|buf| timeline.write_csv(buf))?)?;
        t.outputs.push(rel);
    }
    Ok(())
}

fn tails_block(ctx: &Ctx, b: &TailsBlock, t: &mut Tally) -> Result<()> {
    let window = ctx.window(b.window.ms, b.step.ms)?;
    for asset in selected(ctx.returns.assets(), &b.assets, None)? {
        let i = ctx.returns.index_of(&asset).ok_or_else(|| Error::UnknownAsset(asset.clone()))?;
        let recs = rolling_tail(&ctx.returns.return_series(i)?, window, b.tail_fraction, b.method)?;
        t.records += recs.len();
        t.flagged += recs.iter().filter(|r| !r.flags.is_empty()).count();
        let rel = format!("tails_{}.csv", file_stem(&asset));
        write_file(ctx.out, &rel, &csv_bytes(|buf| write_tail_timeline(&recs, b.method, buf))?)?;
        t.outputs.push(rel);
    }
    Ok(())
}

fn rho_block(ctx: &Ctx, b: &RhoBlock, t: &mut Tally) -> Result<()> {
    let window = ctx.window(b.window.ms, b.step.ms)?;
    let scales = ctx.scales(&b.s)?;
    let pairs: Vec<[String; 2]> = if b.pairs.is_empty() {
        let assets = selected(ctx.returns.assets(), &[], ctx.index_id)?;
        let mut p = Vec::new();
        for i in 0..assets.len() {
            for j in i + 1..assets.len() {
                p.push([assets[i].clone(), assets[j].clone()]);
            }
        }
        p
    } else {
        b.pairs.clone()
    };
    for [a, c] in &pairs {
        let ia = ctx.returns.index_of(a).ok_or_else(|| Error::UnknownAsset(a.clone()))?;
        let ic = ctx.returns.index_of(c).ok_or_else(|| Error::UnknownAsset(c.clone()))?;
        let recs = rolling_rho(
            &ctx.returns.return_series(ia)?,
            &ctx.returns.return_series(ic)?,
            window,
            &b.q,
            &scales,
            b.poly_degree,
            b.direction,
        )?;
        t.records += recs.len();
        t.flagged += recs.iter().filter(|r| !r.rho.is_finite()).count();
        let rel = format!("rho_{}__{}.csv", file_stem(a), file_stem(c));
        write_file(ctx.out, &rel, &csv_bytes(|buf| write_rho_timeline(&recs, buf))?)?;
        t.outputs.push(rel);
    }
    Ok(())
}

fn mst_block(ctx: &Ctx, b: &MstBlock, t: &mut Tally) -> Result<()> {
    let window = ctx.window(b.window.ms, b.step.ms)?;
    let assets = selected(ctx.returns.assets(), &b.assets, ctx.index_id)?;
    let panel = ctx.returns.select(&assets)?;
    let params = MstParams {
        qs: b.q.clone(),
        scales: ctx.scales(&b.s)?,
        poly_degree: b.poly_degree,
        direction: b.direction,
        options: b.metrics,
        keep_edges: b.write_edges,
    };
    let recs = rolling_mst(&panel, window, &params)?;
    t.records += recs.len();
    t.flagged += recs.iter().filter(|r| !r.flags.is_empty()).count();
    let rel = "mst_metrics.csv".to_string();
    write_file(ctx.out, &rel, &csv_bytes(|buf| write_mst_metrics(&recs, buf))?)?;
    t.outputs.push(rel);
    for r in recs.iter().filter(|r| r.tree.is_some()) {
        let tree = r.tree.as_ref().expect("filtered");
        let stem = format!("mst_edges/{}_q{}_s{}", r.window_end, r.q, r.s);
        let csv_rel = format!("{stem}.csv");
        write_file(ctx.out, &csv_rel, &csv_bytes(|buf| tree.write_edges_csv(buf))?)?;
        let mut net = Vec::new();
        tree.write_pajek(&mut net).map_err(out_err(&ctx.out.join(&stem)))?;
        let net_rel = format!("{stem}.net");
        write_file(ctx.out, &net_rel, &net)?;
        t.outputs.push(csv_rel);
        t.outputs.push(net_rel);
    }
    Ok(())
}

fn run_block(name: &str, f: impl FnOnce(&mut Tally) -> Result<()>) -> BlockReport {
    let start = Instant::now();
    let mut tally = Tally::default();
    let res = f(&mut tally);
    BlockReport {
        name: name.to_string(),
        status: if res.is_ok() { BlockStatus::Ok } else { BlockStatus::Failed },
        error: res.err().map(|e| e.to_string()),
        outputs: tally.outputs,
        records: tally.records,
        flagged: tally.flagged,
        elapsed_ms: start.elapsed().as_millis(),
    }
}

/// Validates `cfg`, then runs every enabled block on a dedicated thread pool.
///
/// Invalid configs and input problems fail the whole run; a failing block is
/// recorded in the report and the remaining blocks still run.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    let violations = validate(cfg);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(Error::Config(list.join("; ")));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_inner(cfg))
}

fn run_inner(cfg: &RunConfig) -> Result<RunReport> {
    let started = Instant::now();
    let out = cfg.out_dir.as_path();
    std::fs::create_dir_all(out).map_err(out_err(out))?;

    let (prices, inputs) = load_panel(cfg)?;
    let returns = prices.to_returns(cfg.sync.return_lag.ms)?;
    let load_ms = started.elapsed().as_millis();
    let ctx = Ctx { out, returns: &returns, index_id: cfg.index.as_ref().map(|i| i.id.as_str()) };

    let mut blocks = Vec::new();
    if let Some(b) = cfg.spectrum_enabled() {
        blocks.push(run_block("spectrum", |t| spectrum_block(&ctx, b, t)));
    }
    if let Some(b) = cfg.tails_enabled() {
        blocks.push(run_block("tails", |t| tails_block(&ctx, b, t)));
    }
    if let Some(b) = cfg.rho_enabled() {
        blocks.push(run_block("rho", |t| rho_block(&ctx, b, t)));
    }
    if let Some(b) = cfg.mst_enabled() {
        blocks.push(run_block("mst", |t| mst_block(&ctx, b, t)));
    }

    let grid = returns.grid();
    let report = RunReport {
        out_dir: cfg.out_dir.clone(),
        inputs,
        assets: returns.assets().to_vec(),
        grid_start: grid.first().copied().unwrap_or(0),
        grid_end: grid.last().copied().unwrap_or(0),
        grid_len: grid.len(),
        blocks,
    };
    let mut timings_ms = BTreeMap::new();
    timings_ms.insert("load".to_string(), load_ms);
    for b in &report.blocks {
        timings_ms.insert(b.name.clone(), b.elapsed_ms);
    }
    timings_ms.insert("total".to_string(), started.elapsed().as_millis());
    let manifest =
        Manifest { tool: "mfcca", version: env!("CARGO_PKG_VERSION"), config: cfg, report: &report, timings_ms };
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::InvalidInput(format!("manifest: {e}")))?;
    write_file(out, "manifest.json", &json)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Span;
    use crate::synth::GeneratorKind;

    fn small_config(out: &Path) -> RunConfig {
        let mut cfg = RunConfig::from_toml(
            r#"
            [[synthetic]]
            assets = ["AAA", "BBB"]
            generator = { kind = "correlated_pair", c = 0.6 }
            length = 4000

            [[synthetic]]
            assets = ["CCC"]
            generator = { kind = "iid_gaussian" }
            length = 4000

            [spectrum]
            window = "2000m"
            step = "1000m"
            [tails]
            window = "2000m"
            step = "1000m"
            [rho]
            window = "1000m"
            step = "500m"
            s = ["10m", "50m"]
            [mst]
            window = "1000m"
            step = "1000m"
            s = ["20m"]
            "#,
        )
        .unwrap();
        cfg.out_dir = out.to_path_buf();
        cfg
    }

    #[test]
    fn end_to_end_small() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path());
        let rep = run(&cfg).unwrap();
        assert!(rep.success(), "{:?}", rep.blocks);
        assert_eq!(rep.assets, vec!["AAA", "BBB", "CCC"]);
        for f in [
            "spectrum_AAA.csv",
            "tails_CCC.csv",
            "rho_AAA__BBB.csv",
            "rho_BBB__CCC.csv",
            "mst_metrics.csv",
            "manifest.json",
        ] {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
        let rho = std::fs::read_to_string(dir.path().join("rho_AAA__BBB.csv")).unwrap();
        // windows × scales × q
        assert_eq!(rho.lines().count(), 1 + 7 * 2 * 2);
        let mst = std::fs::read_to_string(dir.path().join("mst_metrics.csv")).unwrap();
        assert_eq!(mst.lines().count(), 1 + 4 * 2);
        assert!(dir.path().join("mst_edges").read_dir().unwrap().count() == 16);
    }

    #[test]
    fn failing_block_does_not_stop_others() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path());
        cfg.tails.as_mut().unwrap().assets = vec!["ZZZ".into()];
        let rep = run(&cfg).unwrap();
        assert!(!rep.success());
        let tails = rep.blocks.iter().find(|b| b.name == "tails").unwrap();
        assert_eq!(tails.status, BlockStatus::Failed);
        assert!(tails.error.as_deref().unwrap().contains("ZZZ"));
        assert!(rep.blocks.iter().filter(|b| b.name != "tails").all(|b| b.status == BlockStatus::Ok));
    }

    #[test]
    fn invalid_config_fails_before_running() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path());
        cfg.rho.as_mut().unwrap().s = vec![Span::minutes(200)];
        let err = run(&cfg).unwrap_err().to_string();
        assert!(err.contains("rho.s[0]"), "{err}");
        assert!(!dir.path().join("manifest.json").exists());
    }

    #[test]
    fn no_inputs_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig { out_dir: dir.path().into(), ..RunConfig::default() };
        assert!(run(&cfg).unwrap_err().to_string().contains("no inputs"));
    }

    #[test]
    fn duplicate_asset_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path());
        cfg.synthetic[1].assets = vec!["AAA".into()];
        assert!(run(&cfg).unwrap_err().to_string().contains("AAA"));
    }

    #[test]
    fn synthetic_seed_defaults_to_run_seed_plus_position() {
        let e = SyntheticInput {
            assets: vec!["X".into()],
            generator: GeneratorKind::IidGaussian,
            length: 50,
            seed: None,
            start_ms: 0,
            return_scale: 1e-3,
        };
        let a = synthetic_prices(&e, 2, 10, 60_000).unwrap();
        let b = synthetic_prices(&SyntheticInput { seed: Some(12), ..e.clone() }, 0, 0, 60_000).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].len(), 51);
    }

    #[test]
    fn file_stems_are_safe() {
        assert_eq!(file_stem("BTC/USD"), "BTC_USD");
        assert_eq!(file_stem("a-b.c_d"), "a-b.c_d");
    }
}
