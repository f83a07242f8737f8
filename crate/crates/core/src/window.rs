//! Moving-window arithmetic shared by the rolling analyses.

use crate::error::{invalid, Result};

/// A window of `len` samples advanced by `step` samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RollingWindow {
    pub len: usize,
    pub step: usize,
}

impl RollingWindow {
    pub fn new(len: usize, step: usize) -> Result<Self> {
        if len == 0 || step == 0 {
            return Err(invalid("window length and step must be positive"));
        }
        Ok(Self { len, step })
    }

    /// Converts wall-clock window and step into sample counts.
    pub fn from_durations(window_ms: i64, step_ms: i64, interval_ms: i64) -> Result<Self> {
        Self::new(samples_in(window_ms, interval_ms)?, samples_in(step_ms, interval_ms)?)
    }

    /// `floor((total - len) / step) + 1`, or zero when the series is shorter
    /// than one window.
    pub fn count(&self, total: usize) -> usize {
        if total < self.len {
            0
        } else {
            (total - self.len) / self.step + 1
        }
    }

    /// Sample ranges of every window position over `total` samples.
    pub fn ranges(&self, total: usize) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        (0..self.count(total)).map(move |i| {
            let start = i * self.step;
            start..start + self.len
        })
    }
}

/// Whole number of sampling intervals in `duration_ms`.
pub fn samples_in(duration_ms: i64, interval_ms: i64) -> Result<usize> {
    if interval_ms <= 0 || duration_ms <= 0 {
        return Err(invalid("durations and intervals must be positive"));
    }
    if duration_ms % interval_ms != 0 {
        return Err(invalid(format!("duration {duration_ms} ms is not a multiple of the {interval_ms} ms interval")));
    }
    Ok((duration_ms / interval_ms) as usize)
}

/// Free-form markers attached to a timeline record.
#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize)]
pub struct Flags(Vec<&'static str>);

impl Flags {
    pub fn set(&mut self, flag: &'static str) {
        if !self.0.contains(&flag) {
            self.0.push(flag);
        }
    }

    pub fn contains(&self, flag: &str) -> bool {
        self.0.contains(&flag)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::fmt::Display for Flags {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0.join(";"))
    }
}
