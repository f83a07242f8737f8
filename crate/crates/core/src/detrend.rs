//! Least-squares polynomial detrending on a fixed segment length.
//!
//! The abscissae `k = 1..s` are centred and scaled to `[-1, 1]` and the
//! monomials on them are orthonormalized once per `(s, m)`. Removing the
//! projection onto that basis is the ordinary least-squares fit, without
//! forming the ill-conditioned normal equations.

use crate::error::{invalid, Result};

#[derive(Debug, Clone)]
pub struct Detrender {
    len: usize,
    degree: usize,
    // (degree + 1) orthonormal rows of length `len`
    basis: Vec<f64>,
}

impl Detrender {
    pub fn new(len: usize, degree: usize) -> Result<Self> {
        if len < degree + 2 {
            return Err(invalid(format!(
                "segment length {len} too short for a degree-{degree} fit (needs at least {})",
                degree + 2
            )));
        }
        let half = len as f64 / 2.0;
        let centre = (len as f64 + 1.0) / 2.0;
        let u: Vec<f64> = (1..=len).map(|k| (k as f64 - centre) / half).collect();
        let mut basis: Vec<f64> = Vec::with_capacity((degree + 1) * len);
        for d in 0..=degree {
            let mut v: Vec<f64> = u.iter().map(|x| x.powi(d as i32)).collect();
            // two passes of modified Gram-Schmidt
            for _ in 0..2 {
                for row in basis.chunks_exact(len) {
                    let c = dot(row, &v);
                    v.iter_mut().zip(row).for_each(|(a, b)| *a -= c * b);
                }
            }
            let norm = dot(&v, &v).sqrt();
            if norm <= f64::EPSILON * len as f64 {
                return Err(invalid("rank-deficient polynomial basis"));
            }
            v.iter_mut().for_each(|a| *a /= norm);
            basis.extend_from_slice(&v);
        }
        Ok(Self { len, degree, basis })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Writes `segment` minus its least-squares polynomial into `out`.
    pub fn residual_into(&self, segment: &[f64], out: &mut [f64]) {
        debug_assert_eq!(segment.len(), self.len);
        // Shift by the first value; the constant term absorbs it and the
        // projections stay small.
        let shift = segment[0];
        out.iter_mut().zip(segment).for_each(|(o, s)| *o = s - shift);
        for row in self.basis.chunks_exact(self.len) {
            let c = dot(row, out);
            out.iter_mut().zip(row).for_each(|(a, b)| *a -= c * b);
        }
    }

    pub fn residual(&self, segment: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        self.residual_into(segment, &mut out);
        out
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_fit_on_four_points() {
        let d = Detrender::new(4, 1).unwrap();
        let r = d.residual(&[1.0, 2.0, 1.0, 2.0]);
        let want = [-0.2, 0.6, -0.6, 0.2];
        for (a, b) in r.iter().zip(want) {
            assert!((a - b).abs() < 1e-14, "{r:?}");
        }
    }

    #[test]
    fn polynomials_up_to_degree_vanish() {
        let d = Detrender::new(50, 2).unwrap();
        let seg: Vec<f64> = (1..=50)
            .map(|k| {
                let k = k as f64;
                3.0 - 0.25 * k + 0.01 * k * k
            })
            .collect();
        let r = d.residual(&seg);
        assert!(r.iter().all(|v| v.abs() < 1e-11), "{r:?}");
    }

    #[test]
    fn too_short_segment_rejected() {
        assert!(Detrender::new(3, 2).is_err());
        assert!(Detrender::new(4, 2).is_ok());
    }

    #[test]
    fn residual_is_orthogonal_to_basis() {
        let d = Detrender::new(37, 3).unwrap();
        let seg: Vec<f64> = (0..37).map(|i| ((i * 7919) % 31) as f64 - 15.0).collect();
        let r = d.residual(&seg);
        for p in 0..=3 {
            let m: f64 = (1..=37).map(|k| (k as f64).powi(p)).zip(&r).map(|(a, b)| a * b).sum();
            let scale: f64 = (1..=37).map(|k| (k as f64).powi(p)).sum::<f64>();
            assert!(m.abs() < 1e-10 * scale, "degree {p}: {m}");
        }
    }
}
