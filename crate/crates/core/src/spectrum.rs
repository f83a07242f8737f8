//! Scaling exponents, singularity spectra and their rolling-window evolution.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::fluctuation::{
    default_q_grid, default_scales, fluctuation_surface_single, FluctuationConfig, FluctuationSurface,
};
use crate::series::{standardize, ReturnSeries};
use crate::window::{Flags, RollingWindow};

/// Fits with r² below this are flagged as non-scaling.
pub const DEFAULT_R2_MIN: f64 = 0.98;

/// Inclusive scale range used for the log-log fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitRange {
    pub min: usize,
    pub max: usize,
}

impl FitRange {
    pub fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }

    /// `[10, T/10]`.
    pub fn default_for(len: usize) -> Self {
        Self { min: 10, max: len / 10 }
    }

    pub fn contains(&self, s: usize) -> bool {
        (self.min..=self.max).contains(&s)
    }
}

/// `h(q)` (single signal) or `λ(q)` (pair) with fit diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingExponents {
    pub q_grid: Vec<f64>,
    /// NaN where the q value could not be fitted.
    pub exponents: Vec<f64>,
    pub fit_r2: Vec<f64>,
    pub fit_range: FitRange,
    pub non_scaling: Vec<bool>,
    /// Scales at which the signed fluctuation came out negative (pair case).
    pub negative_points: Vec<usize>,
}

impl ScalingExponents {
    /// Exponent at the grid point closest to `q`.
    pub fn at(&self, q: f64) -> Option<f64> {
        self.q_grid.iter().position(|v| (v - q).abs() < 1e-9).map(|i| self.exponents[i])
    }

    pub fn min_r2(&self) -> f64 {
        self.fit_r2.iter().copied().filter(|r| r.is_finite()).fold(f64::INFINITY, f64::min)
    }
}

/// Slope, intercept and r² of the least-squares line through `(x, y)`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, my - slope * mx, r2)
}

/// Per-q least-squares slope of `ln F(q,s)` against `ln s`.
pub fn fit_scaling(surface: &FluctuationSurface, range: FitRange, r2_min: f64) -> Result<ScalingExponents> {
    let rows: Vec<usize> = (0..surface.s_grid.len()).filter(|&si| range.contains(surface.s_grid[si])).collect();
    if rows.len() < 4 {
        return Err(invalid(format!(
            "only {} scales inside the fit range [{}, {}]; at least 4 needed",
            rows.len(),
            range.min,
            range.max
        )));
    }
    let nq = surface.q_grid.len();
    let mut exponents = vec![f64::NAN; nq];
    let mut fit_r2 = vec![f64::NAN; nq];
    let mut non_scaling = vec![true; nq];
    let mut negative_points = vec![0; nq];
    for qi in 0..nq {
        let mut xs = Vec::with_capacity(rows.len());
        let mut ys = Vec::with_capacity(rows.len());
        let mut usable = true;
        for &si in &rows {
            let f = surface.value(si, qi);
            if f < 0.0 {
                negative_points[qi] += 1;
            }
            if !f.is_finite() || f == 0.0 || (surface.single_signal && f < 0.0) {
                usable = false;
                break;
            }
            xs.push((surface.s_grid[si] as f64).ln());
            ys.push(f.abs().ln());
        }
        if !usable {
            continue;
        }
        let (slope, _, r2) = ols(&xs, &ys);
        exponents[qi] = slope;
        fit_r2[qi] = r2;
        non_scaling[qi] = !(r2 >= r2_min);
    }
    Ok(ScalingExponents {
        q_grid: surface.q_grid.clone(),
        exponents,
        fit_r2,
        fit_range: range,
        non_scaling,
        negative_points,
    })
}

/// Hölder exponents and spectrum values with summary shape statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularitySpectrum {
    pub q: Vec<f64>,
    pub alpha: Vec<f64>,
    pub f_alpha: Vec<f64>,
    pub alpha_min: f64,
    pub alpha0: f64,
    pub alpha_max: f64,
    pub delta_alpha: f64,
    /// `((α_max − α0) − (α0 − α_min)) / Δα`; positive for a longer right
    /// shoulder, zero for a point spectrum.
    pub asymmetry: f64,
    /// α(q) is not monotonically non-increasing.
    pub non_concave: bool,
}

/// Spectrum from `h(q)` via `α = h + q h'`, `f = q (α − h) + 1`.
///
/// `h'` is the central difference on the (possibly uneven) q grid, one-sided
/// at both ends. Unfitted q values are skipped.
pub fn singularity_spectrum(exps: &ScalingExponents) -> Result<SingularitySpectrum> {
    let (q, h): (Vec<f64>, Vec<f64>) =
        exps.q_grid.iter().zip(&exps.exponents).filter(|(_, h)| h.is_finite()).map(|(q, h)| (*q, *h)).unzip();
    if q.len() < 5 {
        return Err(invalid(format!("{} fitted q values; at least 5 needed", q.len())));
    }
    if q.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("q grid must be strictly increasing"));
    }
    let n = q.len();
    let dh: Vec<f64> = (0..n)
        .map(|i| {
            let (a, b) = match i {
                0 => (0, 1),
                i if i == n - 1 => (n - 2, n - 1),
                i => (i - 1, i + 1),
            };
            (h[b] - h[a]) / (q[b] - q[a])
        })
        .collect();
    let alpha: Vec<f64> = (0..n).map(|i| h[i] + q[i] * dh[i]).collect();
    let f_alpha: Vec<f64> = (0..n).map(|i| q[i] * (alpha[i] - h[i]) + 1.0).collect();

    // α at q = 0 from the bracketing pair, or the two nearest points.
    let j = match q.iter().position(|v| *v > 0.0) {
        Some(0) => 0,
        Some(p) => p - 1,
        None => n - 2,
    };
    let alpha0 = alpha[j] + (0.0 - q[j]) * (alpha[j + 1] - alpha[j]) / (q[j + 1] - q[j]);

    let non_concave = alpha.windows(2).any(|w| w[1] > w[0]);
    let (alpha_min, alpha_max) = if non_concave {
        alpha.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), a| (lo.min(*a), hi.max(*a)))
    } else {
        (alpha[n - 1], alpha[0])
    };
    let delta_alpha = alpha_max - alpha_min;
    let asymmetry = if delta_alpha > 0.0 { ((alpha_max - alpha0) - (alpha0 - alpha_min)) / delta_alpha } else { 0.0 };
    Ok(SingularitySpectrum { q, alpha, f_alpha, alpha_min, alpha0, alpha_max, delta_alpha, asymmetry, non_concave })
}

/// Settings for the per-window spectrum chain.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumParams {
    pub q_grid: Vec<f64>,
    /// Defaults to [`default_scales`] of the window length.
    pub s_grid: Option<Vec<usize>>,
    /// Defaults to `[10, window/10]`.
    pub fit_range: Option<FitRange>,
    pub fluctuation: FluctuationConfig,
    pub r2_min: f64,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        Self {
            q_grid: default_q_grid(),
            s_grid: None,
            fit_range: None,
            fluctuation: FluctuationConfig::default(),
            r2_min: DEFAULT_R2_MIN,
        }
    }
}

/// Everything computed for one series (or one window of it).
#[derive(Debug, Clone)]
pub struct SpectrumAnalysis {
    pub surface: FluctuationSurface,
    pub exponents: ScalingExponents,
    pub spectrum: SingularitySpectrum,
}

/// Surface, fit and spectrum for a single signal.
pub fn analyze(x: &[f64], params: &SpectrumParams) -> Result<SpectrumAnalysis> {
    let s_grid = params.s_grid.clone().unwrap_or_else(|| default_scales(x.len()));
    let range = params.fit_range.unwrap_or_else(|| FitRange::default_for(x.len()));
    let surface = fluctuation_surface_single(x, &params.q_grid, &s_grid, &params.fluctuation)?;
    let exponents = fit_scaling(&surface, range, params.r2_min)?;
    let spectrum = singularity_spectrum(&exponents)?;
    Ok(SpectrumAnalysis { surface, exponents, spectrum })
}

/// Spectrum summary for one window position.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumRecord {
    pub window_end: i64,
    pub alpha_min: f64,
    pub alpha0: f64,
    pub alpha_max: f64,
    pub delta_alpha: f64,
    pub asymmetry: f64,
    pub min_r2: f64,
    pub flags: Flags,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumTimeline {
    pub records: Vec<SpectrumRecord>,
}

impl SpectrumTimeline {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "window_end",
            "alpha_min",
            "alpha0",
            "alpha_max",
            "delta_alpha",
            "asymmetry",
            "min_r2",
            "flags",
        ])?;
        for r in &self.records {
            w.write_record([
                r.window_end.to_string(),
                r.alpha_min.to_string(),
                r.alpha0.to_string(),
                r.alpha_max.to_string(),
                r.delta_alpha.to_string(),
                r.asymmetry.to_string(),
                r.min_r2.to_string(),
                r.flags.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn window_record(window_end: i64, values: &[f64], params: &SpectrumParams) -> SpectrumRecord {
    let mut rec = SpectrumRecord {
        window_end,
        alpha_min: f64::NAN,
        alpha0: f64::NAN,
        alpha_max: f64::NAN,
        delta_alpha: f64::NAN,
        asymmetry: f64::NAN,
        min_r2: f64::NAN,
        flags: Flags::default(),
    };
    let Some((z, _, _)) = standardize(values) else {
        rec.flags.set("degenerate");
        return rec;
    };
    let analysis = match analyze(&z, params) {
        Ok(a) => a,
        Err(_) => {
            rec.flags.set("failed");
            return rec;
        }
    };
    let sp = &analysis.spectrum;
    rec.alpha_min = sp.alpha_min;
    rec.alpha0 = sp.alpha0;
    rec.alpha_max = sp.alpha_max;
    rec.delta_alpha = sp.delta_alpha;
    rec.asymmetry = sp.asymmetry;
    rec.min_r2 = analysis.exponents.min_r2();
    if analysis.exponents.exponents.iter().any(|h| !h.is_finite()) {
        rec.flags.set("unfitted_q");
    }
    if analysis.exponents.non_scaling.iter().any(|b| *b) {
        rec.flags.set("non_scaling");
    }
    if sp.non_concave {
        rec.flags.set("non_concave");
    }
    rec
}

/// Spectrum summaries over a moving window, keyed by each window's last
/// timestamp. Returns are re-normalized inside every window.
pub fn rolling_spectrum(
    series: &ReturnSeries,
    window: RollingWindow,
    params: &SpectrumParams,
) -> Result<SpectrumTimeline> {
    if window.len > series.len() {
        return Err(invalid(format!(
            "window of {} samples longer than the {}-sample series",
            window.len,
            series.len()
        )));
    }
    let ranges: Vec<_> = window.ranges(series.len()).collect();
    let records = ranges
        .into_par_iter()
        .map(|r| window_record(series.timestamps[r.end - 1], &series.values[r], params))
        .collect();
    Ok(SpectrumTimeline { records })
}
