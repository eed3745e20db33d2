//! Fourier-parametrized Tonelli Lagrangians on the two-torus
//!
//! `L(x, v) = ½⟨A(x)v, v⟩ − U(x) − εP(x)` with `A` symmetric positive
//! definite, and its Legendre dual `H(x, y) = ½⟨A(x)⁻¹y, y⟩ + U(x) + εP(x)`.
//!
//! Phase-space quantities in canonical coordinates use the ordering
//! `z = (x1, x2, y1, y2)`.

use std::f64::consts::TAU;
use std::path::Path;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{OrbitError, Result};
use crate::fourier::{FourierSeries, Harmonics, Jet};

/// Entries of the symmetric kinetic matrix `A(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticTable {
    pub a11: FourierSeries,
    #[serde(default)]
    pub a12: FourierSeries,
    pub a22: FourierSeries,
}

impl KineticTable {
    pub fn identity() -> Self {
        Self {
            a11: FourierSeries::constant(1.0),
            a12: FourierSeries::zero(),
            a22: FourierSeries::constant(1.0),
        }
    }
}

/// Serialized description of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kinetic: KineticTable,
    #[serde(default)]
    pub potential: FourierSeries,
    #[serde(default)]
    pub perturbation: FourierSeries,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "default_cutoff")]
    pub cutoff: i32,
}

fn default_cutoff() -> i32 {
    8
}

impl ModelSpec {
    pub fn new(kinetic: KineticTable, potential: FourierSeries) -> Self {
        Self {
            kinetic,
            potential,
            perturbation: FourierSeries::zero(),
            epsilon: 0.0,
            cutoff: default_cutoff(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Structural checks that do not need a grid scan.
    fn check_structure(&self) -> Result<()> {
        if self.cutoff < 1 {
            return Err(OrbitError::InvalidModel(format!(
                "cutoff must be >= 1, got {}",
                self.cutoff
            )));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(OrbitError::InvalidModel(format!(
                "epsilon must be a finite non-negative number, got {}",
                self.epsilon
            )));
        }
        let tables = [
            ("kinetic.a11", &self.kinetic.a11),
            ("kinetic.a12", &self.kinetic.a12),
            ("kinetic.a22", &self.kinetic.a22),
            ("potential", &self.potential),
            ("perturbation", &self.perturbation),
        ];
        for (name, series) in tables {
            for term in &series.terms {
                if !term.cos_coeff.is_finite() || !term.sin_coeff.is_finite() {
                    return Err(OrbitError::InvalidModel(format!(
                        "{name}: non-finite coefficient for k = {:?}",
                        term.k
                    )));
                }
            }
            if series.max_wavenumber() > self.cutoff {
                return Err(OrbitError::InvalidModel(format!(
                    "{name}: wavenumber {} exceeds cutoff {}",
                    series.max_wavenumber(),
                    self.cutoff
                )));
            }
        }
        Ok(())
    }
}

/// Outcome of validating a [`ModelSpec`] on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Smallest eigenvalue of `A(x)` over the validation grid.
    pub m_l: f64,
    /// Where that eigenvalue is attained.
    pub argmin: [f64; 2],
    pub grid: usize,
}

pub const VALIDATION_GRID: usize = 64;

/// A validated model, ready for evaluation.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    /// `U + εP`, merged once.
    total_potential: FourierSeries,
    /// Largest wavenumber of any coefficient series.
    kmax: usize,
    report: ValidationReport,
}

/// Value, gradient and Hessian of `H` in `z = (x1, x2, y1, y2)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct HamiltonianJet {
    pub value: f64,
    pub grad: [f64; 4],
    pub hess: [[f64; 4]; 4],
}

struct KineticJet {
    a: Matrix2<f64>,
    da: [Matrix2<f64>; 2],
    dda: [[Matrix2<f64>; 2]; 2],
}

impl Model {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        Self::with_grid(spec, VALIDATION_GRID)
    }

    pub fn with_grid(spec: ModelSpec, grid: usize) -> Result<Self> {
        spec.check_structure()?;
        let total_potential = spec
            .potential
            .plus(&spec.perturbation.scaled(spec.epsilon));
        let kmax = [
            &spec.kinetic.a11,
            &spec.kinetic.a12,
            &spec.kinetic.a22,
            &total_potential,
        ]
        .iter()
        .map(|f| f.max_wavenumber() as usize)
        .max()
        .unwrap_or(0);
        let mut model = Self {
            spec,
            total_potential,
            kmax,
            report: ValidationReport {
                m_l: f64::NAN,
                argmin: [0.0, 0.0],
                grid,
            },
        };
        model.report = model.scan_kinetic(grid)?;
        Ok(model)
    }

    fn scan_kinetic(&self, grid: usize) -> Result<ValidationReport> {
        let mut best = ValidationReport {
            m_l: f64::INFINITY,
            argmin: [0.0, 0.0],
            grid,
        };
        for i in 0..grid {
            for j in 0..grid {
                let x = [TAU * i as f64 / grid as f64, TAU * j as f64 / grid as f64];
                let a = self.kinetic_matrix(x);
                let min_eig = symmetric_min_eigenvalue(&a);
                if !(min_eig > 0.0) {
                    return Err(OrbitError::NotPositiveDefinite {
                        x1: x[0],
                        x2: x[1],
                        min_eig,
                    });
                }
                if min_eig < best.m_l {
                    best.m_l = min_eig;
                    best.argmin = x;
                }
            }
        }
        Ok(best)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn report(&self) -> ValidationReport {
        self.report
    }

    pub fn m_l(&self) -> f64 {
        self.report.m_l
    }

    /// The model with `c` added to the potential.
    pub fn with_potential_shift(&self, c: f64) -> Result<Self> {
        let mut spec = self.spec.clone();
        spec.potential = spec.potential.plus(&FourierSeries::constant(c));
        Model::with_grid(spec, self.report.grid)
    }

    /// The model with `eps·p` added to the potential energy, i.e. `L ↦ L − eps·p`.
    pub fn with_added_potential(&self, p: &FourierSeries, eps: f64) -> Result<Self> {
        let mut spec = self.spec.clone();
        spec.potential = spec.potential.plus(&p.scaled(eps));
        spec.cutoff = spec.cutoff.max(p.max_wavenumber());
        Model::with_grid(spec, self.report.grid)
    }

    /// The model pulled back by the reflection `x2 ↦ −x2`.
    pub fn reflected_x2(&self) -> Result<Self> {
        let spec = &self.spec;
        let reflected = ModelSpec {
            kinetic: KineticTable {
                a11: spec.kinetic.a11.reflect_x2(),
                a12: spec.kinetic.a12.reflect_x2().scaled(-1.0),
                a22: spec.kinetic.a22.reflect_x2(),
            },
            potential: spec.potential.reflect_x2(),
            perturbation: spec.perturbation.reflect_x2(),
            epsilon: spec.epsilon,
            cutoff: spec.cutoff,
        };
        Model::with_grid(reflected, self.report.grid)
    }

    pub fn kinetic_matrix(&self, x: [f64; 2]) -> Matrix2<f64> {
        let a11 = self.spec.kinetic.a11.value(x);
        let a12 = self.spec.kinetic.a12.value(x);
        let a22 = self.spec.kinetic.a22.value(x);
        Matrix2::new(a11, a12, a12, a22)
    }

    /// `U(x) + εP(x)`
    pub fn potential(&self, x: [f64; 2]) -> f64 {
        self.total_potential.value(x)
    }

    pub fn potential_jet(&self, x: [f64; 2]) -> Jet {
        self.total_potential.jet(x)
    }

    fn harmonics(&self, x: [f64; 2]) -> Harmonics {
        Harmonics::new(x, self.kmax)
    }

    fn kinetic_jet(&self, h: &Harmonics) -> KineticJet {
        let j11 = self.spec.kinetic.a11.jet_with(h);
        let j12 = self.spec.kinetic.a12.jet_with(h);
        let j22 = self.spec.kinetic.a22.jet_with(h);
        let mat = |a: f64, b: f64, c: f64| Matrix2::new(a, b, b, c);
        let a = mat(j11.value, j12.value, j22.value);
        let da = [0, 1].map(|k| mat(j11.grad[k], j12.grad[k], j22.grad[k]));
        let dda = [0, 1].map(|k| {
            [0, 1].map(|l| mat(j11.hess[k][l], j12.hess[k][l], j22.hess[k][l]))
        });
        KineticJet { a, da, dda }
    }

    pub fn lagrangian(&self, x: [f64; 2], v: [f64; 2]) -> f64 {
        let a = self.kinetic_matrix(x);
        let v = Vector2::from(v);
        0.5 * v.dot(&(a * v)) - self.potential(x)
    }

    /// `∂L/∂v = A(x)v`
    pub fn momentum(&self, x: [f64; 2], v: [f64; 2]) -> [f64; 2] {
        let y = self.kinetic_matrix(x) * Vector2::from(v);
        [y[0], y[1]]
    }

    pub fn hamiltonian(&self, x: [f64; 2], y: [f64; 2]) -> f64 {
        let b = inverse2(&self.kinetic_matrix(x));
        let y = Vector2::from(y);
        0.5 * y.dot(&(b * y)) + self.potential(x)
    }

    /// Energy of a state given in velocity form.
    pub fn energy(&self, x: [f64; 2], v: [f64; 2]) -> f64 {
        let a = self.kinetic_matrix(x);
        let v = Vector2::from(v);
        0.5 * v.dot(&(a * v)) + self.potential(x)
    }

    /// Legendre transform `v ↦ (y, H)` with `y = ∂L/∂v`, `H = ⟨y, v⟩ − L`.
    pub fn legendre(&self, x: [f64; 2], v: [f64; 2]) -> ([f64; 2], f64) {
        let y = self.momentum(x, v);
        let h = y[0] * v[0] + y[1] * v[1] - self.lagrangian(x, v);
        (y, h)
    }

    /// Inverse Legendre map: Newton iteration on `∂L/∂v(x, v) = y`.
    pub fn velocity(&self, x: [f64; 2], y: [f64; 2]) -> Result<[f64; 2]> {
        let a = self.kinetic_matrix(x);
        let a_inv = inverse2(&a);
        let target = Vector2::from(y);
        let scale = 1.0 + target.amax();
        let mut v = Vector2::zeros();
        for _ in 0..50 {
            let residual = a * v - target;
            if residual.amax() <= 1e-15 * scale {
                return Ok([v[0], v[1]]);
            }
            v -= a_inv * residual;
        }
        let residual = (a * v - target).amax();
        if residual <= 1e-12 * scale {
            Ok([v[0], v[1]])
        } else {
            Err(OrbitError::NewtonDivergence(format!(
                "inverse Legendre map: residual {residual:.3e}"
            )))
        }
    }

    /// `H` with gradient and Hessian in `z = (x1, x2, y1, y2)`.
    pub fn hamiltonian_jet(&self, x: [f64; 2], y: [f64; 2]) -> HamiltonianJet {
        let h = self.harmonics(x);
        let kin = self.kinetic_jet(&h);
        let pot = self.total_potential.jet_with(&h);
        let b = inverse2(&kin.a);
        jet_from_parts(&kin, &pot, &b, y)
    }

    /// Solve `H(x, y1, y2) = energy` for `y2` on the branch `∂H/∂y2 > 0`
    /// and return the root with the Hamiltonian jet there.
    ///
    /// `H` is quadratic in `y2`, so the root is explicit. Returns `None` when
    /// the energy shell has no point above `(x, y1)`.
    pub fn energy_shell_jet(
        &self,
        x: [f64; 2],
        y1: f64,
        energy: f64,
    ) -> Option<(f64, HamiltonianJet)> {
        let h = self.harmonics(x);
        let kin = self.kinetic_jet(&h);
        let pot = self.total_potential.jet_with(&h);
        let b = inverse2(&kin.a);
        // B22 y2² + 2 B12 y1 y2 + (B11 y1² + 2(V − E)) = 0
        let qa = b[(1, 1)];
        let qb = b[(0, 1)] * y1;
        let qc = b[(0, 0)] * y1 * y1 + 2.0 * (pot.value - energy);
        let disc = qb * qb - qa * qc;
        if !(disc >= 0.0) {
            return None;
        }
        let root = disc.sqrt();
        // root with ∂H/∂y2 = B12 y1 + B22 y2 = +√disc, without cancellation
        let y2 = if qb <= 0.0 {
            (root - qb) / qa
        } else {
            -qc / (qb + root)
        };
        Some((y2, jet_from_parts(&kin, &pot, &b, [y1, y2])))
    }
}

fn jet_from_parts(kin: &KineticJet, pot: &Jet, b: &Matrix2<f64>, y: [f64; 2]) -> HamiltonianJet {
    let b = *b;
    let yv = Vector2::from(y);
    let v = b * yv;
    // ∂_k B = −B ∂_k A B
    let db = kin.da.map(|da| -(b * da * b));
    let mut out = HamiltonianJet {
        value: 0.5 * yv.dot(&v) + pot.value,
        ..HamiltonianJet::default()
    };
    for k in 0..2 {
        out.grad[k] = 0.5 * yv.dot(&(db[k] * yv)) + pot.grad[k];
        out.grad[2 + k] = v[k];
    }
    for j in 0..2 {
        for k in 0..2 {
            // ∂_j∂_k B = B(∂_jA B ∂_kA + ∂_kA B ∂_jA − ∂_j∂_kA)B
            let ddb =
                b * (kin.da[j] * b * kin.da[k] + kin.da[k] * b * kin.da[j] - kin.dda[j][k]) * b;
            out.hess[j][k] = 0.5 * yv.dot(&(ddb * yv)) + pot.hess[j][k];
            out.hess[2 + j][2 + k] = b[(j, k)];
        }
        let dby = db[j] * yv;
        for k in 0..2 {
            out.hess[j][2 + k] = dby[k];
            out.hess[2 + k][j] = dby[k];
        }
    }
    out
}

pub(crate) fn inverse2(a: &Matrix2<f64>) -> Matrix2<f64> {
    let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
    Matrix2::new(a[(1, 1)], -a[(0, 1)], -a[(1, 0)], a[(0, 0)]) / det
}

fn symmetric_min_eigenvalue(a: &Matrix2<f64>) -> f64 {
    let mean = 0.5 * (a[(0, 0)] + a[(1, 1)]);
    let half_diff = 0.5 * (a[(0, 0)] - a[(1, 1)]);
    mean - (half_diff * half_diff + a[(0, 1)] * a[(0, 1)]).sqrt()
}

/// Reduce an angle to `[0, 2π)`.
pub fn wrap_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Signed distance `a − b` on the circle, in `(−π, π]`.
pub fn circle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    if d > std::f64::consts::PI {
        d - TAU
    } else {
        d
    }
}
