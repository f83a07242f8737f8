//! Power-law exponent of the return-magnitude tail, `P(X > |r|) ~ |r|^{-γ}`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::series::ReturnSeries;
use crate::spectrum::ols;
use crate::window::{Flags, RollingWindow};

pub const DEFAULT_TAIL_FRACTION: f64 = 0.01;

/// Fits on fewer tail points are flagged `low_sample`.
pub const MIN_TAIL_SAMPLES: usize = 50;

/// Boundary of the Lévy-stable regime (inclusive).
pub const LEVY_STABLE_MAX_GAMMA: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMethod {
    /// Hill maximum-likelihood estimator.
    #[default]
    Hill,
    /// Least-squares slope of the log empirical survival function.
    LsLoglog,
}

impl std::fmt::Display for TailMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TailMethod::Hill => "hill",
            TailMethod::LsLoglog => "ls_loglog",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailFit {
    pub gamma: f64,
    pub tail_fraction: f64,
    /// Number of order statistics in the tail.
    pub k: usize,
    /// `x_(k+1)`, the largest magnitude left out of the tail.
    pub threshold: f64,
    pub method: TailMethod,
    /// r² of the log-log line (`ls_loglog` only).
    pub r2: Option<f64>,
    pub low_sample: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    LevyStable,
    Unstable,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::LevyStable => "levy_stable",
            Regime::Unstable => "unstable",
        })
    }
}

/// Non-zero magnitudes sorted in descending order.
fn sorted_magnitudes(values: &[f64]) -> Vec<f64> {
    let mut m: Vec<f64> = values.iter().map(|v| v.abs()).filter(|v| *v > 0.0 && v.is_finite()).collect();
    m.sort_by(|a, b| b.total_cmp(a));
    m
}

/// Tail fit on the largest `ceil(fraction · n)` magnitudes.
///
/// Signs are discarded and zeros dropped before ranking.
pub fn fit_tail(values: &[f64], tail_fraction: f64, method: TailMethod) -> Result<TailFit> {
    if !(tail_fraction > 0.0 && tail_fraction < 1.0) {
        return Err(invalid(format!("tail fraction {tail_fraction} outside (0, 1)")));
    }
    let sorted = sorted_magnitudes(values);
    let k = (tail_fraction * sorted.len() as f64).ceil() as usize;
    let mut fit = fit_sorted(&sorted, k, method)?;
    fit.tail_fraction = tail_fraction;
    Ok(fit)
}

/// Tail fit on exactly the `k` largest magnitudes.
pub fn fit_tail_k(values: &[f64], k: usize, method: TailMethod) -> Result<TailFit> {
    let sorted = sorted_magnitudes(values);
    let mut fit = fit_sorted(&sorted, k, method)?;
    fit.tail_fraction = k as f64 / sorted.len() as f64;
    Ok(fit)
}

fn fit_sorted(sorted: &[f64], k: usize, method: TailMethod) -> Result<TailFit> {
    if k == 0 || k >= sorted.len() {
        return Err(invalid(format!("tail of {k} points needs more than {} non-zero magnitudes", sorted.len())));
    }
    let threshold = sorted[k];
    let (gamma, r2) = match method {
        TailMethod::Hill => {
            let sum: f64 = sorted[..k].iter().map(|x| (x / threshold).ln()).sum();
            (k as f64 / sum, None)
        }
        TailMethod::LsLoglog => {
            let n = sorted.len() as f64;
            let lx: Vec<f64> = sorted[..k].iter().map(|x| x.ln()).collect();
            let lp: Vec<f64> = (1..=k).map(|i| (i as f64 / n).ln()).collect();
            if k < 2 {
                return Err(invalid("log-log fit needs at least two tail points"));
            }
            let (slope, _, r2) = ols(&lx, &lp);
            (-slope, Some(r2))
        }
    };
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(invalid("tied magnitudes leave the tail exponent undefined"));
    }
    Ok(TailFit { gamma, tail_fraction: f64::NAN, k, threshold, method, r2, low_sample: k < MIN_TAIL_SAMPLES })
}

/// Lévy-stable iff `γ ≤ 2`.
pub fn classify_regime(fit: &TailFit) -> Regime {
    classify_gamma(fit.gamma)
}

pub fn classify_gamma(gamma: f64) -> Regime {
    if gamma <= LEVY_STABLE_MAX_GAMMA {
        Regime::LevyStable
    } else {
        Regime::Unstable
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailRecord {
    pub window_end: i64,
    /// `None` when the window could not be fitted.
    pub fit: Option<TailFit>,
    pub flags: Flags,
}

/// Tail fit in every window position.
pub fn rolling_tail(
    series: &ReturnSeries,
    window: RollingWindow,
    tail_fraction: f64,
    method: TailMethod,
) -> Result<Vec<TailRecord>> {
    if !(tail_fraction > 0.0 && tail_fraction < 1.0) {
        return Err(invalid(format!("tail fraction {tail_fraction} outside (0, 1)")));
    }
    let ranges: Vec<_> = window.ranges(series.len()).collect();
    Ok(ranges
        .into_par_iter()
        .map(|r| {
            let window_end = series.timestamps[r.end - 1];
            let mut flags = Flags::default();
            let fit = match fit_tail(&series.values[r], tail_fraction, method) {
                Ok(f) => {
                    if f.low_sample {
                        flags.set("low_sample");
                    }
                    Some(f)
                }
                Err(_) => {
                    flags.set("failed");
                    None
                }
            };
            TailRecord { window_end, fit, flags }
        })
        .collect())
}

pub fn write_tail_timeline<W: Write>(records: &[TailRecord], method: TailMethod, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["window_end", "gamma", "k", "threshold", "method", "regime", "flags"])?;
    for r in records {
        let (gamma, k, threshold, regime) = match &r.fit {
            Some(f) => (f.gamma.to_string(), f.k.to_string(), f.threshold.to_string(), classify_regime(f).to_string()),
            None => ("NaN".into(), "0".into(), "NaN".into(), String::new()),
        };
        w.write_record([
            r.window_end.to_string(),
            gamma,
            k,
            threshold,
            method.to_string(),
            regime,
            r.flags.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
