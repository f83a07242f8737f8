//! q-dependent detrended cross-correlation coefficient ρ(q, s).
//!
//! `ρ(q,s) = F^q_xy(s) / sqrt(F^q_xx(s) F^q_yy(s))`, where the `F^q` are the
//! q-order moments of the segment covariances (before the `1/q` root). All
//! three terms share one segmentation. For `q > 0` the value lies in
//! `[-1, 1]`; negative q is rejected.

use std::io::Write;

use rayon::prelude::*;

use crate::detrend::Detrender;
use crate::error::{invalid, Error, Result};
use crate::fluctuation::{covariances, detrend, fluctuation_function, DetrendedProfile, SegmentationConfig};
use crate::series::{profile, Panel, ReturnSeries};
use crate::window::RollingWindow;

/// Fewest segments a window may hold at the largest scale.
pub const MIN_SEGMENTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoValue {
    pub q: f64,
    pub s: usize,
    pub value: f64,
    pub excluded_segments: usize,
}

fn check_q(q: f64) -> Result<()> {
    if !(q > 0.0 && q.is_finite()) {
        return Err(invalid(format!("ρ(q,s) requires q > 0, got {q}")));
    }
    Ok(())
}

fn ratio(xy: f64, xx: f64, yy: f64) -> Option<f64> {
    let den = (xx * yy).sqrt();
    if den > 0.0 && den.is_finite() {
        Some(xy / den)
    } else {
        None
    }
}

/// ρ(q, s) of two equally long signals.
pub fn rho_q(x: &[f64], y: &[f64], q: f64, cfg: &SegmentationConfig) -> Result<RhoValue> {
    check_q(q)?;
    cfg.validate()?;
    if x.len() != y.len() {
        return Err(invalid(format!("series lengths differ: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 4 * cfg.scale {
        return Err(invalid(format!("{} samples hold fewer than 4 segments of {}", x.len(), cfg.scale)));
    }
    let dx = detrend(&profile(x)?, cfg)?;
    let dy = detrend(&profile(y)?, cfg)?;
    let mxx = fluctuation_function(&covariances(&dx, &dx)?, q, 0.0)?;
    let myy = fluctuation_function(&covariances(&dy, &dy)?, q, 0.0)?;
    let mxy = fluctuation_function(&covariances(&dx, &dy)?, q, 0.0)?;
    let value = ratio(mxy.moment, mxx.moment, myy.moment)
        .ok_or_else(|| Error::Degenerate("zero detrended variance in ρ(q,s) denominator".into()))?;
    Ok(RhoValue { q, s: cfg.scale, value, excluded_segments: mxy.excluded })
}

/// Symmetric matrix of ρ(q, s) over a panel.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoMatrix {
    pub assets: Vec<String>,
    pub q: f64,
    pub s: usize,
    values: Vec<f64>,
    /// First and last timestamps of the data behind the matrix.
    pub window: Option<(i64, i64)>,
    /// Assets whose detrended variance vanished; their rows are NaN.
    pub degenerate: Vec<String>,
}

impl RhoMatrix {
    /// Builds a matrix from full row-major entries.
    pub fn from_entries(assets: Vec<String>, q: f64, s: usize, values: Vec<f64>) -> Result<Self> {
        let n = assets.len();
        if values.len() != n * n {
            return Err(invalid("matrix entries do not match the asset count"));
        }
        Ok(Self { assets, q, s, values, window: None, degenerate: Vec::new() })
    }

    pub fn n(&self) -> usize {
        self.assets.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n() + j]
    }

    /// The `N(N−1)/2` entries above the diagonal, row by row.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let n = self.n();
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| self.get(i, j)).collect()
    }

    /// Asset-id header row and first column.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![String::new()];
        header.extend(self.assets.iter().cloned());
        w.write_record(&header)?;
        for (i, a) in self.assets.iter().enumerate() {
            let mut row = vec![a.clone()];
            row.extend((0..self.n()).map(|j| self.get(i, j).to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct AssetTerms {
    detrended: DetrendedProfile,
    // F^q_xx per q; None when the asset is degenerate
    moments: Option<Vec<f64>>,
}

fn asset_terms(x: &[f64], qs: &[f64], cfg: &SegmentationConfig, d: &Detrender) -> Result<AssetTerms> {
    let prof = profile(x)?;
    let detrended = crate::fluctuation::detrend_with(prof.values(), cfg, d)?;
    let cov = covariances(&detrended, &detrended)?;
    let moments =
        qs.iter().map(|&q| fluctuation_function(&cov, q, 0.0).map(|f| f.moment)).collect::<Result<Vec<_>>>()?;
    let ok = moments.iter().all(|m| *m > 0.0 && m.is_finite());
    Ok(AssetTerms { detrended, moments: ok.then_some(moments) })
}

/// ρ(q, s) matrices for every q in `qs` at one scale.
///
/// Each asset is profiled and detrended once; pairs reuse those residuals.
pub fn rho_matrices(
    assets: &[String],
    columns: &[&[f64]],
    qs: &[f64],
    cfg: &SegmentationConfig,
) -> Result<Vec<RhoMatrix>> {
    let n = assets.len();
    if n < 2 || columns.len() != n {
        return Err(invalid("ρ matrix needs at least two assets, one column each"));
    }
    for &q in qs {
        check_q(q)?;
    }
    cfg.validate()?;
    let len = columns[0].len();
    if columns.iter().any(|c| c.len() != len) {
        return Err(invalid("panel columns differ in length"));
    }
    if len < 4 * cfg.scale {
        return Err(invalid(format!("{len} samples hold fewer than 4 segments of {}", cfg.scale)));
    }
    let d = Detrender::new(cfg.scale, cfg.poly_degree)?;
    let terms = columns.par_iter().map(|c| asset_terms(c, qs, cfg, &d)).collect::<Result<Vec<_>>>()?;

    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let pair_values = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (Some(mx), Some(my)) = (&terms[i].moments, &terms[j].moments) else {
                return Ok(vec![f64::NAN; qs.len()]);
            };
            let cov = covariances(&terms[i].detrended, &terms[j].detrended)?;
            qs.iter()
                .enumerate()
                .map(|(k, &q)| {
                    let mxy = fluctuation_function(&cov, q, 0.0)?.moment;
                    Ok(ratio(mxy, mx[k], my[k]).unwrap_or(f64::NAN))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let degenerate: Vec<String> =
        terms.iter().zip(assets).filter(|(t, _)| t.moments.is_none()).map(|(_, a)| a.clone()).collect();
    Ok(qs
        .iter()
        .enumerate()
        .map(|(k, &q)| {
            let mut values = vec![0.0; n * n];
            for i in 0..n {
                values[i * n + i] = if terms[i].moments.is_some() { 1.0 } else { f64::NAN };
            }
            for (&(i, j), v) in pairs.iter().zip(&pair_values) {
                values[i * n + j] = v[k];
                values[j * n + i] = v[k];
            }
            RhoMatrix { assets: assets.to_vec(), q, s: cfg.scale, values, window: None, degenerate: degenerate.clone() }
        })
        .collect())
}

/// ρ(q, s) matrix of every column of a returns panel.
pub fn rho_matrix(panel: &Panel, q: f64, cfg: &SegmentationConfig) -> Result<RhoMatrix> {
    let columns: Vec<&[f64]> = panel.columns().iter().map(|c| c.as_slice()).collect();
    let mut m = rho_matrices(panel.assets(), &columns, &[q], cfg)?;
    let mut out = m.remove(0);
    if let (Some(a), Some(b)) = (panel.grid().first(), panel.grid().last()) {
        out.window = Some((*a, *b));
    }
    Ok(out)
}

/// One point of a rolling ρ timeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoRecord {
    pub window_end: i64,
    pub q: f64,
    pub s: usize,
    pub rho: f64,
    pub excluded_segments: usize,
}

/// Checks that every scale leaves at least [`MIN_SEGMENTS`] segments per window.
pub fn check_segment_floor(window_len: usize, scales: &[usize]) -> Result<()> {
    for &s in scales {
        if s == 0 || window_len / s < MIN_SEGMENTS {
            return Err(invalid(format!(
                "window of {window_len} samples gives {} segments at s = {s}; at least {MIN_SEGMENTS} needed",
                window_len.checked_div(s).unwrap_or(0)
            )));
        }
    }
    Ok(())
}

/// ρ(q, s) in a moving window for every `(q, s)` combination.
///
/// Records are ordered by window, then scale, then q.
pub fn rolling_rho(
    x: &ReturnSeries,
    y: &ReturnSeries,
    window: RollingWindow,
    qs: &[f64],
    scales: &[usize],
    poly_degree: usize,
    direction: crate::fluctuation::Direction,
) -> Result<Vec<RhoRecord>> {
    if x.timestamps != y.timestamps {
        return Err(invalid(format!("{} and {} are not on the same grid", x.asset_id, y.asset_id)));
    }
    for &q in qs {
        check_q(q)?;
    }
    check_segment_floor(window.len, scales)?;
    let ranges: Vec<_> = window.ranges(x.len()).collect();
    let per_window = ranges
        .into_par_iter()
        .map(|r| {
            let end = x.timestamps[r.end - 1];
            let cols = [&x.values[r.clone()], &y.values[r]];
            let mut out = Vec::with_capacity(scales.len() * qs.len());
            for &s in scales {
                let cfg = SegmentationConfig { scale: s, poly_degree, direction };
                let assets = [x.asset_id.clone(), y.asset_id.clone()];
                let mats = rho_matrices(&assets, &cols, qs, &cfg)?;
                for m in mats {
                    out.push(RhoRecord { window_end: end, q: m.q, s, rho: m.get(0, 1), excluded_segments: 0 });
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_window.into_iter().flatten().collect())
}

pub fn write_rho_timeline<W: Write>(records: &[RhoRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["window_end", "q", "s", "rho", "excluded_segments"])?;
    for r in records {
        w.write_record([
            r.window_end.to_string(),
            r.q.to_string(),
            r.s.to_string(),
            r.rho.to_string(),
            r.excluded_segments.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
