//! Truncated real Fourier series on the two-torus.
//!
//! A series is a sum of terms `c cos(k·x) + s sin(k·x)` with integer wave
//! vectors `k = (k1, k2)`. Values, gradients and Hessians are evaluated in
//! closed form.

use serde::{Deserialize, Serialize};

/// One term `cos_coeff·cos(k1 x1 + k2 x2) + sin_coeff·sin(k1 x1 + k2 x2)`.
///
/// Serialized as the four-element array `[k1, k2, cos_coeff, sin_coeff]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(i32, i32, f64, f64)", into = "(i32, i32, f64, f64)")]
pub struct FourierTerm {
    pub k: [i32; 2],
    pub cos_coeff: f64,
    pub sin_coeff: f64,
}

impl From<(i32, i32, f64, f64)> for FourierTerm {
    fn from((k1, k2, c, s): (i32, i32, f64, f64)) -> Self {
        Self {
            k: [k1, k2],
            cos_coeff: c,
            sin_coeff: s,
        }
    }
}

impl From<FourierTerm> for (i32, i32, f64, f64) {
    fn from(t: FourierTerm) -> Self {
        (t.k[0], t.k[1], t.cos_coeff, t.sin_coeff)
    }
}

/// Value, gradient and Hessian of a scalar function of `x ∈ T²`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: [[f64; 2]; 2],
}

impl Jet {
    pub fn constant(value: f64) -> Self {
        Self {
            value,
            ..Self::default()
        }
    }

    /// `self + factor·other`
    pub fn add_scaled(&self, factor: f64, other: &Jet) -> Jet {
        let mut out = *self;
        out.value += factor * other.value;
        for i in 0..2 {
            out.grad[i] += factor * other.grad[i];
            for j in 0..2 {
                out.hess[i][j] += factor * other.hess[i][j];
            }
        }
        out
    }
}

/// Largest wavenumber kept in a [`Harmonics`] table.
const TABLE: usize = 16;

/// `cos(k·x_i)` and `sin(k·x_i)` for `0 ≤ k ≤ K`, built by the Chebyshev
/// recurrence and shared between all series evaluated at the same point.
#[derive(Debug, Clone)]
pub struct Harmonics {
    x: [f64; 2],
    len: usize,
    c: [[f64; TABLE + 1]; 2],
    s: [[f64; TABLE + 1]; 2],
}

impl Harmonics {
    pub fn new(x: [f64; 2], kmax: usize) -> Self {
        let len = kmax.min(TABLE) + 1;
        let mut c = [[0.0; TABLE + 1]; 2];
        let mut s = [[0.0; TABLE + 1]; 2];
        for i in 0..2 {
            c[i][0] = 1.0;
            if len > 1 {
                let (s1, c1) = x[i].sin_cos();
                c[i][1] = c1;
                s[i][1] = s1;
                for k in 2..len {
                    c[i][k] = 2.0 * c1 * c[i][k - 1] - c[i][k - 2];
                    s[i][k] = 2.0 * c1 * s[i][k - 1] - s[i][k - 2];
                }
            }
        }
        Self { x, len, c, s }
    }

    /// `(sin, cos)` of `k1 x1 + k2 x2`.
    #[inline]
    pub fn sin_cos(&self, k: [i32; 2]) -> (f64, f64) {
        let a = k[0].unsigned_abs() as usize;
        let b = k[1].unsigned_abs() as usize;
        if a >= self.len || b >= self.len {
            return (k[0] as f64 * self.x[0] + k[1] as f64 * self.x[1]).sin_cos();
        }
        let (c1, s1) = (self.c[0][a], self.s[0][a] * k[0].signum() as f64);
        let (c2, s2) = (self.c[1][b], self.s[1][b] * k[1].signum() as f64);
        (s1 * c2 + c1 * s2, c1 * c2 - s1 * s2)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FourierSeries {
    pub terms: Vec<FourierTerm>,
}

impl FourierSeries {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self::from_terms(vec![FourierTerm::from((0, 0, c, 0.0))])
    }

    pub fn from_terms(terms: Vec<FourierTerm>) -> Self {
        Self { terms }
    }

    /// `c cos(k1 x1 + k2 x2) + s sin(k1 x1 + k2 x2)` as a one-term series.
    pub fn mode(k1: i32, k2: i32, c: f64, s: f64) -> Self {
        Self::from_terms(vec![FourierTerm::from((k1, k2, c, s))])
    }

    pub fn is_zero(&self) -> bool {
        self.terms
            .iter()
            .all(|t| t.cos_coeff == 0.0 && (t.sin_coeff == 0.0 || t.k == [0, 0]))
    }

    /// Largest |k1| or |k2| appearing in the series.
    pub fn max_wavenumber(&self) -> i32 {
        self.terms
            .iter()
            .map(|t| t.k[0].abs().max(t.k[1].abs()))
            .max()
            .unwrap_or(0)
    }

    /// Sum of two series (terms concatenated, not merged).
    pub fn plus(&self, other: &FourierSeries) -> FourierSeries {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        FourierSeries { terms }
    }

    pub fn scaled(&self, factor: f64) -> FourierSeries {
        FourierSeries {
            terms: self
                .terms
                .iter()
                .map(|t| FourierTerm {
                    k: t.k,
                    cos_coeff: factor * t.cos_coeff,
                    sin_coeff: factor * t.sin_coeff,
                })
                .collect(),
        }
    }

    /// The series composed with the reflection `x2 ↦ −x2`.
    pub fn reflect_x2(&self) -> FourierSeries {
        FourierSeries {
            terms: self
                .terms
                .iter()
                .map(|t| FourierTerm {
                    k: [t.k[0], -t.k[1]],
                    ..*t
                })
                .collect(),
        }
    }

    pub fn value(&self, x: [f64; 2]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let phase = t.k[0] as f64 * x[0] + t.k[1] as f64 * x[1];
                let (s, c) = phase.sin_cos();
                t.cos_coeff * c + t.sin_coeff * s
            })
            .sum()
    }

    pub fn jet(&self, x: [f64; 2]) -> Jet {
        self.jet_with(&Harmonics::new(x, self.max_wavenumber() as usize))
    }

    pub fn jet_with(&self, h: &Harmonics) -> Jet {
        let mut jet = Jet::default();
        for t in &self.terms {
            let k = [t.k[0] as f64, t.k[1] as f64];
            let (s, c) = h.sin_cos(t.k);
            let f = t.cos_coeff * c + t.sin_coeff * s;
            let df = -t.cos_coeff * s + t.sin_coeff * c;
            jet.value += f;
            for i in 0..2 {
                jet.grad[i] += k[i] * df;
                for j in 0..2 {
                    jet.hess[i][j] -= k[i] * k[j] * f;
                }
            }
        }
        jet
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonics_table_matches_direct_evaluation() {
        let x = [0.37, -2.1];
        let h = Harmonics::new(x, 5);
        for k1 in -7..=7 {
            for k2 in -7..=7 {
                let (s, c) = h.sin_cos([k1, k2]);
                let (s0, c0) = (k1 as f64 * x[0] + k2 as f64 * x[1]).sin_cos();
                assert!((s - s0).abs() < 1e-13 && (c - c0).abs() < 1e-13, "{k1} {k2}");
            }
        }
    }

    #[test]
    fn serializes_as_four_element_arrays() {
        let series = FourierSeries::from_terms(vec![
            FourierTerm::from((1, 0, 0.5, 0.0)),
            FourierTerm::from((2, -1, 0.0, 0.25)),
        ]);
        let text = serde_json::to_string(&series).unwrap();
        assert_eq!(text, "[[1,0,0.5,0.0],[2,-1,0.0,0.25]]");
        let back: FourierSeries = serde_json::from_str(&text).unwrap();
        assert_eq!(back, series);
    }

    #[test]
    fn jet_matches_finite_differences() {
        let series = FourierSeries::from_terms(vec![
            FourierTerm::from((1, 2, 0.3, -0.2)),
            FourierTerm::from((-2, 1, 0.1, 0.4)),
            FourierTerm::from((0, 0, 1.5, 0.0)),
        ]);
        let x = [0.7, -1.3];
        let jet = series.jet(x);
        let h = 1e-5;
        for i in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fd = (series.value(xp) - series.value(xm)) / (2.0 * h);
            assert!((fd - jet.grad[i]).abs() < 1e-8);
            let gp = series.jet(xp).grad;
            let gm = series.jet(xm).grad;
            for j in 0..2 {
                let fd2 = (gp[j] - gm[j]) / (2.0 * h);
                assert!((fd2 - jet.hess[i][j]).abs() < 1e-7);
            }
        }
        assert!((jet.value - series.value(x)).abs() < 1e-15);
    }

    #[test]
    fn reflection_flips_second_wavenumber() {
        let series = FourierSeries::mode(1, 1, 0.0, 1.0);
        let x = [0.4, 0.9];
        let r = series.reflect_x2();
        assert!((r.value(x) - series.value([x[0], -x[1]])).abs() < 1e-15);
    }
}
