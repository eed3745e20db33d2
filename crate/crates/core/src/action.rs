//! Broken geodesics of the reduced system.
//!
//! The period `[0, 2π]` is cut at `T_i = 2πi/m`. Sub-arc `i` is the minimizer
//! of `∫ L̄` on `[T_i, T_{i+1}]` between lifted endpoints `x`, `x'`; its value
//! `F_i(x, x')` generates the time-`2π/m` map of the reduced flow, so all
//! derivatives come from endpoint momenta and the linearized flow.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{OrbitError, Result};
use crate::par;
use crate::reduction::{ArcSample, ReducedFlow, ReducedSystem};
use crate::settings::Settings;

use std::f64::consts::TAU;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubArcResult {
    pub i: usize,
    pub x: f64,
    pub x_prime: f64,
    pub energy: f64,
    /// `F_i(x, x')`
    pub value: f64,
    pub d_x: f64,
    pub d_xp: f64,
    pub d_xx: f64,
    pub d_xpxp: f64,
    /// `B_i`; negative for a twist arc.
    pub d_xxp: f64,
    /// Real time spent on the arc.
    pub time: f64,
    /// `∂(x', y')/∂(x, y)` of the time-`2π/m` map.
    pub jacobian: [[f64; 2]; 2],
    #[serde(skip)]
    pub arc: Vec<ArcSample>,
}

impl SubArcResult {
    pub fn y_start(&self) -> f64 {
        -self.d_x
    }

    pub fn y_end(&self) -> f64 {
        self.d_xp
    }

    /// Start momentum of the arc with moved endpoints, to first order.
    pub fn predict_momentum(&self, x: f64, x_prime: f64) -> f64 {
        let [[a, b], _] = self.jacobian;
        self.y_start() + ((x_prime - self.x_prime) - a * (x - self.x)) / b
    }

    fn from_flow(i: usize, x: f64, x_prime: f64, y: f64, energy: f64, flow: ReducedFlow) -> Self {
        let [[a, b], [_, d]] = flow.jacobian;
        Self {
            i,
            x,
            x_prime,
            energy,
            value: flow.action,
            d_x: -y,
            d_xp: flow.y,
            d_xx: a / b,
            d_xpxp: d / b,
            d_xxp: -1.0 / b,
            time: flow.time,
            jacobian: flow.jacobian,
            arc: flow.samples,
        }
    }
}

pub fn arc_interval(i: usize, m: usize) -> (f64, f64) {
    (TAU * i as f64 / m as f64, TAU * (i + 1) as f64 / m as f64)
}

/// Solve sub-arc `i` of `m` from scratch: direct minimization, then shooting.
pub fn subarc_action(
    rs: &ReducedSystem,
    i: usize,
    x: f64,
    x_prime: f64,
    m: usize,
    settings: &Settings,
) -> Result<SubArcResult> {
    check_gap(x, x_prime, settings)?;
    let (y0, _) = direct_method(rs, i, x, x_prime, m, 0.0, settings)?;
    shoot(rs, i, x, x_prime, m, y0, settings)
}

/// Shooting from a momentum guess, with a fallback to [`subarc_action`].
pub fn subarc_action_from(
    rs: &ReducedSystem,
    i: usize,
    x: f64,
    x_prime: f64,
    m: usize,
    y_guess: f64,
    settings: &Settings,
) -> Result<SubArcResult> {
    check_gap(x, x_prime, settings)?;
    match shoot(rs, i, x, x_prime, m, y_guess, settings) {
        Ok(r) => Ok(r),
        Err(OrbitError::StripExit(_)) | Err(OrbitError::BvpNonConvergence(_))
        | Err(OrbitError::OutsideEnergyShell { .. }) | Err(OrbitError::BranchViolation(_)) => {
            subarc_action(rs, i, x, x_prime, m, settings)
        }
        Err(e) => Err(e),
    }
}

/// Largest node distance between the direct minimizers started from a
/// straight and from a bowed initial curve.
pub fn subarc_uniqueness(
    rs: &ReducedSystem,
    i: usize,
    x: f64,
    x_prime: f64,
    m: usize,
    settings: &Settings,
) -> Result<f64> {
    let bow = 0.25 * (x_prime - x).abs().max(0.1);
    let (_, straight) = direct_method(rs, i, x, x_prime, m, 0.0, settings)?;
    let (_, bowed) = direct_method(rs, i, x, x_prime, m, bow, settings)?;
    Ok(straight
        .iter()
        .zip(&bowed)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

fn check_gap(x: f64, x_prime: f64, settings: &Settings) -> Result<()> {
    let gap = (x_prime - x).abs();
    if !(gap <= settings.max_gap) {
        return Err(OrbitError::BvpNonConvergence(format!(
            "endpoint gap {gap:.3} exceeds {}",
            settings.max_gap
        )));
    }
    Ok(())
}

fn shoot(
    rs: &ReducedSystem,
    i: usize,
    x: f64,
    x_prime: f64,
    m: usize,
    mut y: f64,
    settings: &Settings,
) -> Result<SubArcResult> {
    let (t0, t1) = arc_interval(i, m);
    let steps = settings.steps_per_arc;
    let tol = settings.shoot_tolerance.max(8.0 * f64::EPSILON * x_prime.abs());
    let mut flow = rs.flow(t0, t1, x, y, steps, true)?;
    let mut r = flow.x - x_prime;
    for _ in 0..settings.max_shoot_iterations {
        if r.abs() <= tol {
            if !(flow.jacobian[0][1] > 0.0) {
                return Err(OrbitError::BvpNonConvergence(format!(
                    "arc {i} has lost the twist (∂x'/∂y = {:.3e})",
                    flow.jacobian[0][1]
                )));
            }
            return Ok(SubArcResult::from_flow(i, x, x_prime, y, rs.energy(), flow));
        }
        let b = flow.jacobian[0][1];
        if !(b > 0.0) {
            return Err(OrbitError::BvpNonConvergence(format!(
                "arc {i}: shooting derivative {b:.3e} is not positive"
            )));
        }
        let mut step = r / b;
        let mut last_err = None;
        let mut accepted = false;
        for _ in 0..30 {
            match rs.flow(t0, t1, x, y - step, steps, true) {
                Ok(next) if (next.x - x_prime).abs() < r.abs() => {
                    y -= step;
                    r = next.x - x_prime;
                    flow = next;
                    accepted = true;
                    break;
                }
                Ok(_) => {}
                Err(e) => last_err = Some(e),
            }
            step *= 0.5;
        }
        if !accepted {
            if r.abs() <= 1e3 * tol {
                return Ok(SubArcResult::from_flow(i, x, x_prime, y, rs.energy(), flow));
            }
            return Err(last_err.unwrap_or_else(|| {
                OrbitError::BvpNonConvergence(format!("arc {i}: shooting stalled at {r:.3e}"))
            }));
        }
    }
    Err(OrbitError::BvpNonConvergence(format!(
        "arc {i}: shooting residual {r:.3e} after {} iterations",
        settings.max_shoot_iterations
    )))
}

/// Newton on the midpoint-rule discrete action of a piecewise-linear curve.
/// Returns the start momentum `−∂S/∂q₀` and the interior nodes.
fn direct_method(
    rs: &ReducedSystem,
    i: usize,
    x: f64,
    x_prime: f64,
    m: usize,
    bow: f64,
    settings: &Settings,
) -> Result<(f64, Vec<f64>)> {
    let n = settings.direct_nodes;
    let segs = n + 1;
    let (t0, t1) = arc_interval(i, m);
    let dt = (t1 - t0) / segs as f64;
    let mut q: Vec<f64> = (0..=segs)
        .map(|k| {
            let s = k as f64 / segs as f64;
            x + (x_prime - x) * s + bow * (std::f64::consts::PI * s).sin()
        })
        .collect();
    let mut moments = vec![0.0; segs];

    let fail = |msg: String| OrbitError::BvpNonConvergence(format!("arc {i}: {msg}"));

    // Gradient, tridiagonal Hessian and value of the discrete action.
    let assemble = |q: &[f64], moments: &mut [f64]| -> Result<(f64, Vec<f64>, Vec<f64>, Vec<f64>, f64)> {
        let mut grad = vec![0.0; segs + 1];
        let mut diag = vec![0.0; segs + 1];
        let mut off = vec![0.0; segs];
        let mut value = 0.0;
        let mut y0 = 0.0;
        for k in 0..segs {
            let mid = 0.5 * (q[k] + q[k + 1]);
            let v = (q[k + 1] - q[k]) / dt;
            let tau = t0 + (k as f64 + 0.5) * dt;
            let j = rs.lbar_jet(mid, v, tau, moments[k])?;
            moments[k] = j.lv;
            value += dt * j.value;
            grad[k] += 0.5 * dt * j.lx - j.lv;
            grad[k + 1] += 0.5 * dt * j.lx + j.lv;
            diag[k] += 0.25 * dt * j.lxx - j.lxv + j.lvv / dt;
            diag[k + 1] += 0.25 * dt * j.lxx + j.lxv + j.lvv / dt;
            off[k] += 0.25 * dt * j.lxx - j.lvv / dt;
            if k == 0 {
                y0 = j.lv - 0.5 * dt * j.lx;
            }
        }
        Ok((value, grad, diag, off, y0))
    };

    let (mut value, mut grad, mut diag, mut off, mut y0) = assemble(&q, &mut moments)?;
    for _ in 0..60 {
        let gnorm = grad[1..segs].iter().fold(0.0f64, |a, g| a.max(g.abs()));
        if gnorm < 1e-11 {
            return Ok((y0, q[1..segs].to_vec()));
        }
        let rhs: Vec<f64> = grad[1..segs].iter().map(|g| -g).collect();
        let step = solve_tridiagonal(&off[1..segs - 1], &diag[1..segs], &off[1..segs - 1], &rhs)
            .ok_or_else(|| fail("singular discrete Hessian".into()))?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let mut trial = q.clone();
            for (k, s) in step.iter().enumerate() {
                trial[k + 1] += t * s;
            }
            let mut trial_moments = moments.clone();
            if let Ok(next) = assemble(&trial, &mut trial_moments) {
                let next_norm = next.1[1..segs].iter().fold(0.0f64, |a, g| a.max(g.abs()));
                if next.0 <= value + 1e-12 * value.abs().max(1.0) || next_norm < 0.5 * gnorm {
                    q = trial;
                    moments = trial_moments;
                    (value, grad, diag, off, y0) = next;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            if gnorm < 1e-8 {
                return Ok((y0, q[1..segs].to_vec()));
            }
            return Err(fail(format!("line search failed at gradient {gnorm:.3e}")));
        }
    }
    Err(fail("direct method did not converge".into()))
}

/// Thomas algorithm; row `k` reads `lower[k−1]·u[k−1] + diag[k]·u[k] + upper[k]·u[k+1]`.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    if n == 0 {
        return Some(Vec::new());
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if denom == 0.0 || !denom.is_finite() {
        return None;
    }
    c[0] = if n > 1 { upper[0] / denom } else { 0.0 };
    d[0] = rhs[0] / denom;
    for k in 1..n {
        denom = diag[k] - lower[k - 1] * c[k - 1];
        if denom == 0.0 || !denom.is_finite() {
            return None;
        }
        c[k] = if k + 1 < n { upper[k] / denom } else { 0.0 };
        d[k] = (rhs[k] - lower[k - 1] * d[k - 1]) / denom;
    }
    for k in (0..n - 1).rev() {
        d[k] -= c[k] * d[k + 1];
    }
    Some(d)
}

/// Symmetric tridiagonal solve that fails on a non-positive pivot, i.e. when
/// the matrix is not positive definite.
pub fn solve_spd_tridiagonal(diag: &[f64], off: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for k in 0..n {
        let (lo, prev_c, prev_d) = if k > 0 { (off[k - 1], c[k - 1], d[k - 1]) } else { (0.0, 0.0, 0.0) };
        let pivot = diag[k] - lo * prev_c;
        if !(pivot > 0.0) || !pivot.is_finite() {
            return None;
        }
        c[k] = if k + 1 < n { off[k] / pivot } else { 0.0 };
        d[k] = (rhs[k] - lo * prev_d) / pivot;
    }
    for k in (0..n.saturating_sub(1)).rev() {
        d[k] -= c[k] * d[k + 1];
    }
    Some(d)
}

/// Diagonal and off-diagonal of `J_{m−1}`, the block of interior nodes `1..m−1`.
pub fn interior_block(arcs: &[SubArcResult]) -> (Vec<f64>, Vec<f64>) {
    let m = arcs.len();
    let diag = (1..m).map(|i| arcs[i - 1].d_xpxp + arcs[i].d_xx).collect();
    let off = (1..m - 1).map(|i| arcs[i].d_xxp).collect();
    (diag, off)
}

/// `dX_i/dx₀` for the interior nodes of a critical configuration.
pub fn interior_sensitivity(arcs: &[SubArcResult]) -> Option<Vec<f64>> {
    let m = arcs.len();
    let (diag, off) = interior_block(arcs);
    let mut c = vec![0.0; m - 1];
    c[0] -= arcs[0].d_xxp;
    c[m - 2] -= arcs[m - 1].d_xxp;
    solve_spd_tridiagonal(&diag, &off, &c)
}

/// `∂²F/∂x₀²` as the Schur complement of `J_{m−1}` in `J`.
pub fn schur_hessian(arcs: &[SubArcResult]) -> Option<f64> {
    let m = arcs.len();
    let u = interior_sensitivity(arcs)?;
    let a0 = arcs[m - 1].d_xpxp + arcs[0].d_xx;
    Some(a0 + arcs[0].d_xxp * u[0] + arcs[m - 1].d_xxp * u[m - 2])
}

/// Time-`2π/m` map of the reduced flow on `[T_i, T_{i+1}]`.
pub fn twist_map(
    rs: &ReducedSystem,
    i: usize,
    x: f64,
    y: f64,
    m: usize,
    settings: &Settings,
) -> Result<(f64, f64)> {
    let (t0, t1) = arc_interval(i, m);
    let flow = rs.flow(t0, t1, x, y, settings.steps_per_arc, false)?;
    Ok((flow.x, flow.y))
}

/// A periodic broken-geodesic configuration `x₀, …, x_{m−1}` with
/// `x_m = x₀ + 2π·winding`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub points: Vec<f64>,
    pub winding: i64,
    pub energy: f64,
}

impl Configuration {
    pub fn new(points: Vec<f64>, energy: f64) -> Self {
        Self {
            points,
            winding: 0,
            energy,
        }
    }

    pub fn constant(x0: f64, m: usize, energy: f64) -> Self {
        Self::new(vec![x0; m], energy)
    }

    pub fn m(&self) -> usize {
        self.points.len()
    }

    /// Lifted node `i` for `0 ≤ i ≤ m`.
    pub fn node(&self, i: usize) -> f64 {
        let m = self.m();
        if i == m {
            self.points[0] + TAU * self.winding as f64
        } else {
            self.points[i]
        }
    }

    pub fn base(&self) -> f64 {
        self.points[0]
    }

    /// Shift every node by `2πk`.
    pub fn translated(&self, k: i64) -> Self {
        let shift = TAU * k as f64;
        Self {
            points: self.points.iter().map(|p| p + shift).collect(),
            ..self.clone()
        }
    }

    /// The `2m` configuration through the arc midpoints.
    pub fn refined(&self, arcs: &[SubArcResult]) -> Option<Self> {
        let mut points = Vec::with_capacity(2 * self.m());
        for (k, arc) in arcs.iter().enumerate() {
            if arc.arc.len() % 2 == 0 {
                return None;
            }
            points.push(self.points[k]);
            points.push(arc.arc[arc.arc.len() / 2].x);
        }
        Some(Self {
            points,
            winding: self.winding,
            energy: self.energy,
        })
    }
}

/// Solve every sub-arc of `cfg`, warm-starting from `previous` when given.
pub fn evaluate_configuration(
    cfg: &Configuration,
    rs: &ReducedSystem,
    settings: &Settings,
    previous: Option<&[SubArcResult]>,
) -> Result<Vec<SubArcResult>> {
    let m = cfg.m();
    if m < 3 {
        return Err(OrbitError::InvalidConfig(format!("configuration needs m ≥ 3, got {m}")));
    }
    let previous = previous.filter(|p| p.len() == m);
    par::map(m, |i| {
        let (x, xp) = (cfg.node(i), cfg.node(i + 1));
        match previous {
            Some(p) if p[i].jacobian[0][1] > 0.0 => {
                let guess = p[i].predict_momentum(x, xp);
                subarc_action_from(rs, i, x, xp, m, guess, settings)
            }
            _ => subarc_action(rs, i, x, xp, m, settings),
        }
    })
    .into_iter()
    .collect()
}

pub fn total_action(cfg: &Configuration, rs: &ReducedSystem, settings: &Settings) -> Result<f64> {
    Ok(action_sum(&evaluate_configuration(cfg, rs, settings, None)?))
}

pub fn action_sum(arcs: &[SubArcResult]) -> f64 {
    arcs.iter().map(|a| a.value).sum()
}

pub fn el_residual(cfg: &Configuration, rs: &ReducedSystem, settings: &Settings) -> Result<Vec<f64>> {
    Ok(residual_of(&evaluate_configuration(cfg, rs, settings, None)?))
}

/// `∂F_{i−1}/∂x' + ∂F_i/∂x`, i.e. the momentum jump at node `i`.
pub fn residual_of(arcs: &[SubArcResult]) -> Vec<f64> {
    let m = arcs.len();
    (0..m).map(|i| arcs[(i + m - 1) % m].d_xp + arcs[i].d_x).collect()
}

pub fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// The cyclic Jacobi matrix of the discrete action.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JacobiMatrix {
    pub diag: Vec<f64>,
    pub offdiag: Vec<f64>,
    pub corner: f64,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Eigenvector of the smallest eigenvalue with first entry 1.
    pub ground_vector: Vec<f64>,
    pub positive_definite: bool,
    /// Positive definiteness of the block without node 0.
    pub interior_positive_definite: bool,
}

impl JacobiMatrix {
    pub fn from_arcs(arcs: &[SubArcResult]) -> Result<Self> {
        let (diag, offdiag, corner) = jacobi_entries(arcs);
        Self::from_entries(diag, offdiag, corner)
    }

    pub fn from_entries(diag: Vec<f64>, offdiag: Vec<f64>, corner: f64) -> Result<Self> {
        let m = diag.len();
        let dense = dense_cyclic(&diag, &offdiag, corner);
        if dense.iter().any(|v| !v.is_finite()) {
            return Err(OrbitError::EigenFailure("non-finite Jacobi entries".into()));
        }
        let eig = SymmetricEigen::try_new(dense.clone(), f64::EPSILON, 0)
            .ok_or_else(|| OrbitError::EigenFailure(format!("no convergence for m = {m}")))?;
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        if eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(OrbitError::EigenFailure("non-finite eigenvalue".into()));
        }
        let col = eig.eigenvectors.column(order[0]);
        let peak = col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let scale = if col[0].abs() > 1e-12 * peak {
            col[0]
        } else {
            let k = col.iamax();
            col[k].signum() * peak
        };
        let ground_vector = col.iter().map(|v| v / scale).collect();
        let positive_definite = dense.clone().cholesky().is_some();
        let interior_positive_definite = dense.view((1, 1), (m - 1, m - 1)).into_owned().cholesky().is_some();
        Ok(Self {
            diag,
            offdiag,
            corner,
            eigenvalues,
            ground_vector,
            positive_definite,
            interior_positive_definite,
        })
    }

    pub fn m(&self) -> usize {
        self.diag.len()
    }

    pub fn dense(&self) -> DMatrix<f64> {
        dense_cyclic(&self.diag, &self.offdiag, self.corner)
    }

    pub fn lambda0(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn lambda1(&self) -> f64 {
        self.eigenvalues[1]
    }

    pub fn spectrum_gap(&self) -> f64 {
        self.lambda1() - self.lambda0()
    }

    pub fn ground_vector_positive(&self) -> bool {
        self.ground_vector.iter().all(|v| *v > 0.0)
    }

    /// `max |Jξ₀ − λ₀ξ₀|` for the unit-norm ground vector.
    pub fn spectral_residual(&self) -> f64 {
        let xi = nalgebra::DVector::from_vec(self.ground_vector.clone()).normalize();
        let r = self.dense() * &xi - &xi * self.lambda0();
        r.amax()
    }

    pub fn twist_holds(&self) -> bool {
        self.offdiag.iter().all(|b| *b < 0.0) && self.corner < 0.0
    }

    /// Coupling of node 0 to the interior nodes `1..m−1`.
    fn base_column(&self) -> Vec<f64> {
        let m = self.m();
        let mut c = vec![0.0; m - 1];
        c[0] += self.offdiag[0];
        c[m - 2] += self.corner;
        c
    }

    /// Solve `J_{m−1} u = rhs` on the interior nodes.
    pub fn solve_interior(&self, rhs: &[f64]) -> Option<Vec<f64>> {
        let m = self.m();
        let off = &self.offdiag[1..m - 1];
        solve_tridiagonal(off, &self.diag[1..], off, rhs)
    }

    /// `dX_i/dx₀` of the interior solution.
    pub fn interior_sensitivity(&self) -> Option<Vec<f64>> {
        let c: Vec<f64> = self.base_column().iter().map(|v| -v).collect();
        self.solve_interior(&c)
    }

    /// `∂²F/∂x₀²`: the Schur complement of `J_{m−1}` in `J`.
    pub fn schur_complement(&self) -> Option<f64> {
        let c = self.base_column();
        let u = self.solve_interior(&c)?;
        Some(self.diag[0] - c.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>())
    }
}

/// `A_i`, `B_0…B_{m−2}` and the corner `B_{m−1}`.
pub fn jacobi_entries(arcs: &[SubArcResult]) -> (Vec<f64>, Vec<f64>, f64) {
    let m = arcs.len();
    let diag = (0..m).map(|i| arcs[(i + m - 1) % m].d_xpxp + arcs[i].d_xx).collect();
    let offdiag = arcs[..m - 1].iter().map(|a| a.d_xxp).collect();
    (diag, offdiag, arcs[m - 1].d_xxp)
}

pub fn jacobi_dense(arcs: &[SubArcResult]) -> DMatrix<f64> {
    let (diag, offdiag, corner) = jacobi_entries(arcs);
    dense_cyclic(&diag, &offdiag, corner)
}

fn dense_cyclic(diag: &[f64], offdiag: &[f64], corner: f64) -> DMatrix<f64> {
    let m = diag.len();
    let mut j = DMatrix::zeros(m, m);
    for i in 0..m {
        j[(i, i)] = diag[i];
    }
    for (i, b) in offdiag.iter().enumerate() {
        j[(i, i + 1)] += b;
        j[(i + 1, i)] += b;
    }
    j[(m - 1, 0)] += corner;
    j[(0, m - 1)] += corner;
    j
}

/// Assemble `J` at `cfg`. Unless `exploratory`, the configuration must be critical.
pub fn assemble_jacobi(
    cfg: &Configuration,
    rs: &ReducedSystem,
    settings: &Settings,
    exploratory: bool,
) -> Result<JacobiMatrix> {
    let arcs = evaluate_configuration(cfg, rs, settings, None)?;
    if !exploratory {
        let r = max_norm(&residual_of(&arcs));
        if r > settings.residual_tolerance {
            return Err(OrbitError::InvalidConfig(format!(
                "configuration is not critical (residual {r:.3e}); pass exploratory to assemble anyway"
            )));
        }
    }
    JacobiMatrix::from_arcs(&arcs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks;
    use crate::model::Model;

    fn system(spec: crate::ModelSpec, energy: f64) -> ReducedSystem {
        ReducedSystem::simple(&Model::new(spec).unwrap(), energy).unwrap()
    }

    #[test]
    fn free_subarc_is_straight() {
        let rs = system(benchmarks::flat_torus(), 1.0);
        let s = Settings::default();
        let m = 32;
        let (x, xp) = (0.3, 0.37);
        let arc = subarc_action(&rs, 5, x, xp, m, &s).unwrap();
        let h = TAU / m as f64;
        let free = (2.0f64).sqrt() * (h * h + (xp - x) * (xp - x)).sqrt();
        assert!((arc.value - free).abs() < 1e-12, "{} vs {free}", arc.value);
        assert!(arc.d_xxp < 0.0);
        for w in arc.arc.windows(2) {
            let slope = (w[1].x - w[0].x) / (w[1].tau - w[0].tau);
            assert!((slope - (xp - x) / h).abs() < 1e-10);
        }
    }

    #[test]
    fn subarc_partials_match_finite_differences() {
        let (spec, e) = benchmarks::random_model(7);
        let rs = system(spec, e);
        let s = Settings::default();
        let (x, xp) = (0.4, 0.47);
        let f = |a: f64, b: f64| subarc_action(&rs, 3, a, b, 32, &s).unwrap();
        let base = f(x, xp);
        let h = 1e-4;
        let fx = (f(x + h, xp).value - f(x - h, xp).value) / (2.0 * h);
        let fxp = (f(x, xp + h).value - f(x, xp - h).value) / (2.0 * h);
        assert!((fx - base.d_x).abs() < 1e-5 * base.d_x.abs().max(1e-3));
        assert!((fxp - base.d_xp).abs() < 1e-5 * base.d_xp.abs().max(1e-3));
        let fxx = (f(x + h, xp).d_x - f(x - h, xp).d_x) / (2.0 * h);
        let fpp = (f(x, xp + h).d_xp - f(x, xp - h).d_xp) / (2.0 * h);
        let fxp2 = (f(x, xp + h).d_x - f(x, xp - h).d_x) / (2.0 * h);
        assert!((fxx - base.d_xx).abs() < 1e-5 * base.d_xx.abs());
        assert!((fpp - base.d_xpxp).abs() < 1e-5 * base.d_xpxp.abs());
        assert!((fxp2 - base.d_xxp).abs() < 1e-5 * base.d_xxp.abs());
    }

    #[test]
    fn endpoint_momentum_matches_reduced_lagrangian() {
        let rs = system(benchmarks::separable_ridge(0.1), 1.0);
        let s = Settings::default();
        let arc = subarc_action(&rs, 0, 0.2, 0.25, 32, &s).unwrap();
        let first = arc.arc[0];
        let v = rs.hbar_jet(first.x, first.y, first.tau).unwrap().velocity();
        let (_, y) = rs.reduced_lagrangian(first.x, v, first.tau).unwrap();
        assert!((-arc.d_x - y).abs() < 1e-8);
    }

    #[test]
    fn warm_start_agrees_with_cold_solve() {
        let (spec, e) = benchmarks::random_model(3);
        let rs = system(spec, e);
        let s = Settings::default();
        let cold = subarc_action(&rs, 2, 1.0, 1.05, 16, &s).unwrap();
        let warm = subarc_action_from(&rs, 2, 1.001, 1.049, 16, cold.predict_momentum(1.001, 1.049), &s).unwrap();
        let again = subarc_action(&rs, 2, 1.001, 1.049, 16, &s).unwrap();
        assert!((warm.value - again.value).abs() < 1e-13);
        assert!((warm.d_x - again.d_x).abs() < 1e-11);
    }

    #[test]
    fn short_subarc_is_unique() {
        let (spec, e) = benchmarks::random_model(11);
        let rs = system(spec, e);
        let d = subarc_uniqueness(&rs, 1, 0.5, 0.6, 32, &Settings::default()).unwrap();
        assert!(d < 1e-8, "{d}");
    }

    #[test]
    fn oversized_gap_is_rejected() {
        let rs = system(benchmarks::flat_torus(), 1.0);
        assert!(matches!(
            subarc_action(&rs, 0, 0.0, 3.0, 32, &Settings::default()),
            Err(OrbitError::BvpNonConvergence(_))
        ));
    }

    #[test]
    fn twist_map_preserves_area_and_twists() {
        let (spec, e) = benchmarks::random_model(5);
        let rs = system(spec, e);
        let s = Settings::default();
        let (x, y, h) = (0.7, 0.1, 1e-5);
        let px = (twist_map(&rs, 4, x + h, y, 32, &s).unwrap(), twist_map(&rs, 4, x - h, y, 32, &s).unwrap());
        let py = (twist_map(&rs, 4, x, y + h, 32, &s).unwrap(), twist_map(&rs, 4, x, y - h, 32, &s).unwrap());
        let a = (px.0 .0 - px.1 .0) / (2.0 * h);
        let c = (px.0 .1 - px.1 .1) / (2.0 * h);
        let b = (py.0 .0 - py.1 .0) / (2.0 * h);
        let d = (py.0 .1 - py.1 .1) / (2.0 * h);
        assert!((a * d - b * c - 1.0).abs() < 1e-7);
        assert!(b > 0.0);
        let arc = subarc_action(&rs, 4, x, twist_map(&rs, 4, x, y, 32, &s).unwrap().0, 32, &s).unwrap();
        assert!((arc.y_start() - y).abs() < 1e-9);
        assert!((arc.y_end() - twist_map(&rs, 4, x, y, 32, &s).unwrap().1).abs() < 1e-9);
    }

    #[test]
    fn free_configuration_is_critical_and_degenerate() {
        let rs = system(benchmarks::flat_torus(), 1.0);
        let s = Settings::default();
        let cfg = Configuration::constant(1.0, 32, 1.0);
        let arcs = evaluate_configuration(&cfg, &rs, &s, None).unwrap();
        assert!(max_norm(&residual_of(&arcs)) < 1e-14);
        let free = TAU * 2f64.sqrt();
        assert!((action_sum(&arcs) - free).abs() < 1e-11);
        let j = JacobiMatrix::from_arcs(&arcs).unwrap();
        assert!(j.lambda0().abs() < 1e-10);
        assert!(j.lambda1() > 1e-3);
        assert!(j.twist_holds());
    }

    #[test]
    fn ridge_line_is_a_nondegenerate_minimum() {
        let rs = system(benchmarks::separable_ridge(0.1), 1.0);
        let s = Settings::default();
        let cfg = Configuration::constant(0.0, 32, 1.0);
        let arcs = evaluate_configuration(&cfg, &rs, &s, None).unwrap();
        assert!(max_norm(&residual_of(&arcs)) < 1e-9);
        let j = JacobiMatrix::from_arcs(&arcs).unwrap();
        assert!(j.lambda0() > 0.0 && j.lambda1() > j.lambda0());
        assert!(j.ground_vector_positive());
        assert!(j.positive_definite && j.interior_positive_definite);
        assert!(j.spectral_residual() < 1e-8);
        let dense = j.dense();
        let direct = SymmetricEigen::new(dense).eigenvalues.min();
        assert!((direct - j.lambda0()).abs() < 1e-10);
        assert!(j.schur_complement().unwrap() > 0.0);
    }

    #[test]
    fn residual_is_the_action_gradient() {
        let (spec, e) = benchmarks::random_model(2);
        let rs = system(spec, e);
        let s = Settings::default();
        let m = 16;
        let cfg = Configuration::new((0..m).map(|k| 0.5 + 0.05 * (k as f64).sin()).collect(), e);
        let r = el_residual(&cfg, &rs, &s).unwrap();
        let h = 1e-5;
        for &k in &[0usize, 5, 15] {
            let mut up = cfg.clone();
            up.points[k] += h;
            let mut dn = cfg.clone();
            dn.points[k] -= h;
            let fd = (total_action(&up, &rs, &s).unwrap() - total_action(&dn, &rs, &s).unwrap()) / (2.0 * h);
            assert!((fd - r[k]).abs() < 1e-5 * r[k].abs().max(1e-3), "node {k}: {fd} vs {}", r[k]);
        }
    }

    #[test]
    fn schur_complement_matches_dense_inverse() {
        let j = JacobiMatrix::from_entries(vec![3.0, 2.5, 2.8, 3.1, 2.2], vec![-1.0, -0.7, -0.9, -1.1], -0.6).unwrap();
        let inv = j.dense().try_inverse().unwrap();
        assert!((j.schur_complement().unwrap() - 1.0 / inv[(0, 0)]).abs() < 1e-12);
    }

    #[test]
    fn spd_solver_rejects_indefinite() {
        assert!(solve_spd_tridiagonal(&[1.0, 1.0], &[2.0], &[1.0, 1.0]).is_none());
        let u = solve_spd_tridiagonal(&[2.0, 2.0, 2.0], &[-1.0, -1.0], &[1.0, 0.0, 1.0]).unwrap();
        for v in u {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn schur_hessian_agrees_with_jacobi_matrix() {
        let rs = system(benchmarks::separable_ridge(0.1), 1.0);
        let arcs = evaluate_configuration(&Configuration::constant(0.0, 16, 1.0), &rs, &Settings::default(), None).unwrap();
        let j = JacobiMatrix::from_arcs(&arcs).unwrap();
        assert!((schur_hessian(&arcs).unwrap() - j.schur_complement().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn tridiagonal_solver_matches_dense() {
        let lower = [1.0, -0.5, 0.25];
        let diag = [4.0, 3.0, 5.0, 2.0];
        let upper = [0.5, 1.5, -1.0];
        let rhs = [1.0, 2.0, 3.0, 4.0];
        let u = solve_tridiagonal(&lower, &diag, &upper, &rhs).unwrap();
        for k in 0..4 {
            let mut s = diag[k] * u[k];
            if k > 0 {
                s += lower[k - 1] * u[k - 1];
            }
            if k < 3 {
                s += upper[k] * u[k + 1];
            }
            assert!((s - rhs[k]).abs() < 1e-13);
        }
    }
}
