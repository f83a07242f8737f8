//! Synthetic series with known scaling and tail properties.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`), a counter-based generator
//! whose output is specified independently of platform. A generator seeded
//! with `seed` draws from stream 0; where a routine needs several independent
//! sequences it uses streams 1, 2, ... of the same seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Stream `stream` of the ChaCha8 generator keyed by `seed`.
pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Where the larger cascade weight goes when a cell splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Placement {
    /// Left or right with equal probability, per cell.
    #[default]
    Random,
    /// Always left.
    Deterministic,
}

/// Binomial multiplicative cascade of `2^levels` cells with total mass one.
pub fn binomial_cascade(levels: u32, p: f64, seed: u64) -> Result<Vec<f64>> {
    binomial_cascade_with(levels, p, seed, Placement::Random)
}

pub fn binomial_cascade_with(levels: u32, p: f64, seed: u64, placement: Placement) -> Result<Vec<f64>> {
    if !(8..=24).contains(&levels) {
        return Err(invalid(format!("cascade levels {levels} outside [8, 24]")));
    }
    if !(p > 0.5 && p < 1.0) {
        return Err(invalid(format!("cascade weight p = {p} outside (0.5, 1)")));
    }
    let mut r = rng(seed, 0);
    let mut cells = vec![1.0f64];
    for _ in 0..levels {
        let mut next = Vec::with_capacity(cells.len() * 2);
        for v in &cells {
            let (big, small) = (v * p, v * (1.0 - p));
            let left_big = match placement {
                Placement::Random => r.random_bool(0.5),
                Placement::Deterministic => true,
            };
            if left_big {
                next.extend_from_slice(&[big, small]);
            } else {
                next.extend_from_slice(&[small, big]);
            }
        }
        cells = next;
    }
    Ok(cells)
}

/// Generalized Hurst exponent of the binomial cascade,
/// `1/q − log₂(p^q + (1−p)^q)/q`.
pub fn cascade_hurst(q: f64, p: f64) -> f64 {
    1.0 / q - (p.powf(q) + (1.0 - p).powf(q)).log2() / q
}

/// Autocovariance of unit-variance fractional Gaussian noise at lag `k`.
pub fn fgn_autocovariance(k: usize, hurst: f64) -> f64 {
    let k = k as f64;
    let e = 2.0 * hurst;
    0.5 * ((k + 1.0).powf(e) - 2.0 * k.powf(e) + (k - 1.0).abs().powf(e))
}

/// Unit-variance fractional Gaussian noise by circulant embedding.
///
/// The autocovariance is embedded in a circulant of size `2·len`, whose
/// eigenvalues are non-negative for every `H ∈ (0, 1)`; the real part of the
/// Fourier transform of eigenvalue-weighted complex white noise then has
/// exactly the target covariance.
pub fn fgn(hurst: f64, len: usize, seed: u64) -> Result<Vec<f64>> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(invalid(format!("Hurst exponent {hurst} outside (0, 1)")));
    }
    if len < 2 || !len.is_power_of_two() {
        return Err(invalid(format!("fGn length {len} must be a power of two")));
    }
    let m = 2 * len;
    let mut c: Vec<Complex<f64>> = (0..m)
        .map(|j| {
            let k = if j <= len { j } else { m - j };
            Complex::new(fgn_autocovariance(k, hurst), 0.0)
        })
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(m);
    fft.process(&mut c);
    let mut r = rng(seed, 0);
    let mut w: Vec<Complex<f64>> = Vec::with_capacity(m);
    for lam in &c {
        let lam = lam.re;
        if lam < -1e-8 {
            return Err(invalid(format!("circulant embedding not positive definite ({lam})")));
        }
        let a = (lam.max(0.0) / m as f64).sqrt();
        let re: f64 = StandardNormal.sample(&mut r);
        let im: f64 = StandardNormal.sample(&mut r);
        w.push(Complex::new(a * re, a * im));
    }
    fft.process(&mut w);
    Ok(w[..len].iter().map(|z| z.re).collect())
}

/// Independent standard Gaussian samples.
pub fn iid_gaussian(len: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed, 0);
    (0..len).map(|_| StandardNormal.sample(&mut r)).collect()
}

/// Pareto samples with `P(X > x) = x^{-γ}` for `x ≥ 1`.
pub fn pareto(gamma: f64, len: usize, seed: u64) -> Result<Vec<f64>> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(invalid(format!("tail exponent {gamma} must be positive")));
    }
    let mut r = rng(seed, 0);
    Ok((0..len)
        .map(|_| {
            // 1 - U lies in (0, 1]
            let u: f64 = 1.0 - r.random::<f64>();
            u.powf(-1.0 / gamma)
        })
        .collect())
}

/// `y = c·x + sqrt(1 − c²)·z` with independent standard Gaussian `x`, `z`
/// (streams 0 and 1).
pub fn correlated_pair(c: f64, len: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(-1.0..=1.0).contains(&c) {
        return Err(invalid(format!("target correlation {c} outside [-1, 1]")));
    }
    let mut rx = rng(seed, 0);
    let mut rz = rng(seed, 1);
    let x: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rx)).collect();
    let k = (1.0 - c * c).sqrt();
    let y = x
        .iter()
        .map(|xi| {
            let z: f64 = StandardNormal.sample(&mut rz);
            c * xi + k * z
        })
        .collect();
    Ok((x, y))
}

/// What to generate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorKind {
    Cascade { p: f64 },
    Fgn { hurst: f64 },
    IidGaussian,
    Pareto { gamma: f64 },
    CorrelatedPair { c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    /// For cascades this must be a power of two.
    pub length: usize,
    pub seed: u64,
}

impl GeneratorSpec {
    /// One series, or two for a correlated pair.
    pub fn generate(&self) -> Result<Vec<Vec<f64>>> {
        Ok(match self.kind {
            GeneratorKind::Cascade { p } => {
                if !self.length.is_power_of_two() {
                    return Err(invalid(format!("cascade length {} must be 2^levels", self.length)));
                }
                vec![binomial_cascade(self.length.trailing_zeros(), p, self.seed)?]
            }
            GeneratorKind::Fgn { hurst } => vec![fgn(hurst, self.length, self.seed)?],
            GeneratorKind::IidGaussian => vec![iid_gaussian(self.length, self.seed)],
            GeneratorKind::Pareto { gamma } => {
                // random sign so the series reads as returns
                let mut signs = rng(self.seed, 1);
                let v = pareto(gamma, self.length, self.seed)?
                    .into_iter()
                    .map(|x| if signs.random_bool(0.5) { x } else { -x })
                    .collect();
                vec![v]
            }
            GeneratorKind::CorrelatedPair { c } => {
                let (x, y) = correlated_pair(c, self.length, self.seed)?;
                vec![x, y]
            }
        })
    }
}

/// Price path whose log returns are `scale` times the z-scored `returns`.
pub fn returns_to_prices(returns: &[f64], start_price: f64, scale: f64) -> Vec<f64> {
    let z = crate::series::standardize(returns).map(|(z, _, _)| z).unwrap_or_else(|| vec![0.0; returns.len()]);
    let mut log_p = start_price.ln();
    let mut out = Vec::with_capacity(returns.len() + 1);
    out.push(start_price);
    for r in z {
        log_p += scale * r;
        out.push(log_p.exp());
    }
    out
}
