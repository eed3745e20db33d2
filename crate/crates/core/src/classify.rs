//! Minimal closed orbits at a fixed energy.
//!
//! For each base angle `x₀` the interior nodes are solved from the discrete
//! Euler–Lagrange equations, which yields the one-variable action `F(x₀)`.
//! Its minima are the minimal configurations; each one is classified twice,
//! by the ground eigenvalue of the Jacobi matrix and by the Floquet
//! multipliers of the corresponding closed orbit of the full flow.

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::action::{
    action_sum, evaluate_configuration, interior_block, interior_sensitivity, max_norm, residual_of,
    schur_hessian, solve_spd_tridiagonal, subarc_uniqueness, Configuration, JacobiMatrix, SubArcResult,
};
use crate::dynamics::{integrate_el_adaptive, monodromy, FloquetVerdict, MonodromyResult, PhasePoint, Trajectory};
use crate::error::{OrbitError, Result};
use crate::model::{circle_diff, wrap_angle};
use crate::par;
use crate::reduction::{Orientation, ReducedSystem};
use crate::settings::Settings;

use std::f64::consts::TAU;

/// A configuration whose interior nodes solve the discrete Euler–Lagrange
/// equations for a fixed base point.
#[derive(Debug, Clone)]
pub struct InnerSolution {
    pub configuration: Configuration,
    pub arcs: Vec<SubArcResult>,
}

impl InnerSolution {
    pub fn base(&self) -> f64 {
        self.configuration.base()
    }

    pub fn action(&self) -> f64 {
        action_sum(&self.arcs)
    }

    /// `∂F/∂x₀`, the momentum jump at the base point.
    pub fn slope(&self) -> f64 {
        residual_of(&self.arcs)[0]
    }

    pub fn interior_residual(&self) -> f64 {
        max_norm(&residual_of(&self.arcs)[1..])
    }

    /// `∂²F/∂x₀²`
    pub fn hessian(&self) -> Option<f64> {
        schur_hessian(&self.arcs)
    }

    pub fn period(&self) -> f64 {
        self.arcs.iter().map(|a| a.time).sum()
    }

    /// `|ẋ(0) − ẋ(2π)|` of the closed broken curve.
    pub fn corner(&self, rs: &ReducedSystem) -> Result<f64> {
        let m = self.arcs.len();
        let first = &self.arcs[0];
        let last = &self.arcs[m - 1];
        let v0 = rs.hbar_jet(first.x, first.y_start(), 0.0)?.velocity();
        let v1 = rs.hbar_jet(last.x_prime, last.y_end(), TAU)?.velocity();
        Ok((v0 - v1).abs())
    }

    /// First-order prediction of the solution at another base point.
    pub fn predict(&self, x0: f64) -> Configuration {
        let delta = x0 - self.base();
        let mut cfg = self.configuration.clone();
        match interior_sensitivity(&self.arcs) {
            Some(s) => {
                for (p, ds) in cfg.points[1..].iter_mut().zip(&s) {
                    *p += ds * delta;
                }
            }
            None => {
                for p in cfg.points[1..].iter_mut() {
                    *p += delta;
                }
            }
        }
        cfg.points[0] = x0;
        cfg
    }
}

/// Newton on the interior nodes with `J_{m−1}` as system matrix.
fn newton_interior(
    rs: &ReducedSystem,
    mut cfg: Configuration,
    mut arcs: Vec<SubArcResult>,
    settings: &Settings,
) -> Result<InnerSolution> {
    let x0 = cfg.base();
    let diverged = |msg: String| OrbitError::NewtonDivergence(format!("x0 = {x0:.6}: {msg}"));
    for _ in 0..settings.max_newton_iterations {
        let r = residual_of(&arcs);
        let norm = max_norm(&r[1..]);
        if norm <= settings.residual_tolerance {
            return Ok(InnerSolution { configuration: cfg, arcs });
        }
        let (diag, off) = interior_block(&arcs);
        let rhs: Vec<f64> = r[1..].iter().map(|v| -v).collect();
        let mut delta = solve_spd_tridiagonal(&diag, &off, &rhs)
            .ok_or_else(|| diverged("J_{m−1} is not positive definite".into()))?;
        let biggest = max_norm(&delta);
        if biggest > settings.max_newton_step {
            let s = settings.max_newton_step / biggest;
            delta.iter_mut().for_each(|d| *d *= s);
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let mut trial = cfg.clone();
            for (p, d) in trial.points[1..].iter_mut().zip(&delta) {
                *p += t * d;
            }
            if let Ok(next) = evaluate_configuration(&trial, rs, settings, Some(&arcs)) {
                if max_norm(&residual_of(&next)[1..]) < norm {
                    cfg = trial;
                    arcs = next;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            if norm <= 100.0 * settings.residual_tolerance {
                return Ok(InnerSolution { configuration: cfg, arcs });
            }
            return Err(diverged(format!("line search failed at residual {norm:.3e}")));
        }
    }
    Err(diverged("iteration budget exhausted".into()))
}

/// Gradient descent on the interior nodes with Armijo backtracking; node 0 stays fixed.
fn descent(rs: &ReducedSystem, mut cfg: Configuration, settings: &Settings) -> Result<(Configuration, Vec<SubArcResult>)> {
    let mut arcs = evaluate_configuration(&cfg, rs, settings, None)?;
    let mut value = action_sum(&arcs);
    let mut t = 0.05;
    for _ in 0..500 {
        let r = residual_of(&arcs);
        let g = &r[1..];
        let gn = max_norm(g);
        if gn < 1e-6 {
            break;
        }
        let g2: f64 = g.iter().map(|v| v * v).sum();
        let mut accepted = false;
        for _ in 0..40 {
            let s = t * (settings.max_newton_step / (t * gn)).min(1.0);
            let mut trial = cfg.clone();
            for (p, gk) in trial.points[1..].iter_mut().zip(g) {
                *p -= s * gk;
            }
            if let Ok(next) = evaluate_configuration(&trial, rs, settings, Some(&arcs)) {
                let v = action_sum(&next);
                if v <= value - 1e-4 * s * g2 {
                    cfg = trial;
                    arcs = next;
                    value = v;
                    accepted = true;
                    t *= 2.0;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok((cfg, arcs))
}

/// Solve the interior nodes for base point `x0` starting from `init`.
///
/// Falls back to gradient descent followed by Newton when Newton alone fails.
pub fn inner_solve(rs: &ReducedSystem, x0: f64, init: &Configuration, settings: &Settings) -> Result<InnerSolution> {
    let mut cfg = init.clone();
    cfg.points[0] = x0;
    cfg.energy = rs.energy();
    let first = evaluate_configuration(&cfg, rs, settings, None)
        .and_then(|arcs| newton_interior(rs, cfg.clone(), arcs, settings));
    match first {
        Ok(sol) => Ok(sol),
        Err(err) => {
            debug!("inner solve at x0 = {x0:.6} falls back to descent: {err}");
            let start = if evaluate_configuration(&cfg, rs, settings, None).is_ok() {
                cfg
            } else {
                Configuration::constant(x0, init.m(), rs.energy())
            };
            let (cfg, arcs) = descent(rs, start, settings)?;
            newton_interior(rs, cfg, arcs, settings)
        }
    }
}

/// [`inner_solve`] warm-started from a neighbouring solution.
pub fn inner_solve_warm(rs: &ReducedSystem, x0: f64, prev: &InnerSolution, settings: &Settings) -> Result<InnerSolution> {
    let cfg = prev.predict(x0);
    let warm = evaluate_configuration(&cfg, rs, settings, Some(&prev.arcs))
        .and_then(|arcs| newton_interior(rs, cfg.clone(), arcs, settings));
    match warm {
        Ok(sol) => Ok(sol),
        Err(_) => inner_solve(rs, x0, &cfg, settings),
    }
}

/// `F(x₀, E)` from a cold start at the vertical line through `x0`.
pub fn action_of_base(rs: &ReducedSystem, x0: f64, settings: &Settings) -> Result<f64> {
    let init = Configuration::constant(x0, settings.m, rs.energy());
    Ok(inner_solve(rs, x0, &init, settings)?.action())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActionProfile {
    pub energy: f64,
    pub base_points: Vec<f64>,
    pub values: Vec<f64>,
    /// Intervals around the minima on which both sweeps agree.
    pub smooth_windows: Vec<[f64; 2]>,
}

impl ActionProfile {
    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_flat(&self, tolerance: f64) -> bool {
        self.max() - self.min() <= tolerance
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x0,F\n");
        for (x, f) in self.base_points.iter().zip(&self.values) {
            out.push_str(&format!("{x:.12},{f:.15}\n"));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ProfileScan {
    pub profile: ActionProfile,
    pub solutions: Vec<InnerSolution>,
    /// Grid points where the forward and backward sweeps found the same solution.
    pub agree: Vec<bool>,
    pub cyclic: bool,
}

fn sweep<I: Iterator<Item = usize>>(
    rs: &ReducedSystem,
    grid: &[f64],
    order: I,
    mut prev: Option<InnerSolution>,
    settings: &Settings,
    out: &mut [Option<InnerSolution>],
) {
    for j in order {
        let x0 = grid[j];
        let sol = match &prev {
            Some(p) => inner_solve_warm(rs, x0, p, settings),
            None => inner_solve(rs, x0, &Configuration::constant(x0, settings.m, rs.energy()), settings),
        };
        match sol {
            Ok(s) => {
                prev = Some(s.clone());
                out[j] = Some(s);
            }
            Err(e) => debug!("profile point x0 = {x0:.6} failed: {e}"),
        }
    }
}

/// `F(·, E)` on a uniform grid, from a forward and a backward warm-started sweep.
pub fn action_profile(rs: &ReducedSystem, settings: &Settings) -> Result<ProfileScan> {
    let n = settings.profile_points;
    let strip = rs.strip();
    let cyclic = strip.is_full();
    let grid: Vec<f64> = if cyclic {
        (0..=n).map(|j| TAU * j as f64 / n as f64).collect()
    } else {
        (0..n).map(|j| strip.lo + (strip.hi - strip.lo) * j as f64 / (n - 1) as f64).collect()
    };
    let len = grid.len();
    let mut forward = vec![None; len];
    sweep(rs, &grid, 0..len, None, settings, &mut forward);
    let seed = forward.iter().rev().flatten().next().cloned();
    let mut backward = vec![None; len];
    sweep(rs, &grid, (0..len).rev(), seed, settings, &mut backward);

    let mut solutions = Vec::with_capacity(n);
    let mut agree = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for j in 0..n {
        let mut options: Vec<InnerSolution> = Vec::new();
        options.extend(forward[j].clone());
        options.extend(backward[j].clone());
        if cyclic && j == 0 {
            // The sweep endpoint at 2π is another solution over x0 = 0.
            for s in forward[n].iter().chain(backward[n].iter()) {
                let mut s = s.clone();
                s.configuration = s.configuration.translated(-1);
                for a in s.arcs.iter_mut() {
                    a.x -= TAU;
                    a.x_prime -= TAU;
                    for p in a.arc.iter_mut() {
                        p.x -= TAU;
                    }
                }
                options.push(s);
            }
        }
        if options.is_empty() {
            return Err(OrbitError::NoMinimumFound(format!(
                "inner solve failed at x0 = {:.6} in both sweeps",
                grid[j]
            )));
        }
        let lo = options.iter().map(|s| s.action()).fold(f64::INFINITY, f64::min);
        let hi = options.iter().map(|s| s.action()).fold(f64::NEG_INFINITY, f64::max);
        agree.push(options.len() >= 2 && hi - lo <= 1e-8 * lo.abs().max(1.0));
        let best = options
            .into_iter()
            .min_by(|a, b| a.action().total_cmp(&b.action()))
            .expect("non-empty");
        values.push(best.action());
        solutions.push(best);
    }
    Ok(ProfileScan {
        profile: ActionProfile {
            energy: rs.energy(),
            base_points: grid[..n].to_vec(),
            values,
            smooth_windows: Vec::new(),
        },
        solutions,
        agree,
        cyclic,
    })
}

impl ProfileScan {
    /// Grid indices of local minima, lowest first, at most `limit`.
    pub fn candidates(&self, limit: usize) -> Vec<usize> {
        let v = &self.profile.values;
        let n = v.len();
        let mut out: Vec<usize> = (0..n)
            .filter(|&j| {
                let left = if j > 0 { Some(v[j - 1]) } else if self.cyclic { Some(v[n - 1]) } else { None };
                let right = if j + 1 < n { Some(v[j + 1]) } else if self.cyclic { Some(v[0]) } else { None };
                left.map_or(true, |l| v[j] <= l) && right.map_or(true, |r| v[j] <= r)
            })
            .collect();
        out.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
        out.truncate(limit);
        out
    }

    fn neighbour(&self, j: usize, step: isize) -> Option<f64> {
        let n = self.profile.base_points.len() as isize;
        let k = j as isize + step;
        if (0..n).contains(&k) {
            Some(self.profile.base_points[k as usize])
        } else if self.cyclic {
            Some(self.profile.base_points[k.rem_euclid(n) as usize] + TAU * (k.div_euclid(n)) as f64)
        } else {
            None
        }
    }

    /// Maximal run of agreeing grid points around `j`.
    fn window(&self, j: usize) -> [f64; 2] {
        let n = self.agree.len();
        let ok = |k: isize| self.agree[k.rem_euclid(n as isize) as usize];
        let (mut lo, mut hi) = (j as isize, j as isize);
        if !ok(lo) {
            let x = self.profile.base_points[j];
            return [x, x];
        }
        while ok(lo - 1) && (self.cyclic || lo > 0) && (hi - lo) < n as isize - 1 {
            lo -= 1;
        }
        while ok(hi + 1) && (self.cyclic || (hi as usize) + 1 < n) && (hi - lo) < n as isize - 1 {
            hi += 1;
        }
        let at = |k: isize| self.neighbour(j, k - j as isize).unwrap_or(self.profile.base_points[j]);
        [at(lo), at(hi)]
    }
}

/// Safeguarded Newton on `F'(x₀) = 0` inside `[a, b]`.
fn polish(rs: &ReducedSystem, start: InnerSolution, bracket: (f64, f64), settings: &Settings) -> Result<InnerSolution> {
    let (mut a, mut b) = bracket;
    let mut sol = start;
    for _ in 0..60 {
        let g = sol.slope();
        if g.abs() <= settings.residual_tolerance {
            break;
        }
        let x = sol.base();
        if g > 0.0 {
            b = b.min(x);
        } else {
            a = a.max(x);
        }
        let h = sol.hessian().unwrap_or(0.0);
        let mut next = if h > 0.0 { x - g / h } else { f64::NAN };
        if !(next > a && next < b) {
            next = 0.5 * (a + b);
        }
        if (next - x).abs() <= 1e-14 * x.abs().max(1.0) {
            break;
        }
        sol = inner_solve_warm(rs, next, &sol, settings)?;
    }
    Ok(sol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Hyperbolic,
    Degenerate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CornerFit {
    /// `(F(x* + δ) − F(x*), |ẋ(0) − ẋ(2π)|)`
    pub samples: Vec<(f64, f64)>,
    pub fitted_theta: f64,
    pub fitted_exponent: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinimizerRecord {
    pub energy: f64,
    pub x_star: f64,
    pub configuration: Configuration,
    pub action: f64,
    pub lambda0: f64,
    pub lambda1: f64,
    pub spectrum_gap: f64,
    /// `∂²F/∂x₀²` at `x_star`.
    pub hessian_f: f64,
    /// Max-norm of the discrete Euler–Lagrange residual.
    pub residual: f64,
    pub twist: bool,
    pub ground_vector_positive: bool,
    pub period: f64,
    pub monodromy: MonodromyResult,
    pub verdict: Verdict,
    pub m: usize,
    /// `|F_{2m} − F_m|` at the minimizer.
    pub refinement_change: Option<f64>,
    /// Constant action profile: every base point is minimal.
    pub flat_profile: bool,
    pub corner_fit: Option<CornerFit>,
}

impl MinimizerRecord {
    pub fn variational_hyperbolic(&self, settings: &Settings) -> bool {
        self.twist && self.lambda0 > settings.degeneracy_threshold * self.lambda1
    }

    pub fn floquet_hyperbolic(&self) -> bool {
        self.monodromy.verdict == FloquetVerdict::Hyperbolic
    }
}

/// The closed orbit of the full flow through the start of the configuration.
pub fn closed_orbit(rs: &ReducedSystem, sol: &InnerSolution, settings: &Settings) -> Result<Trajectory> {
    let x1 = sol.configuration.points[0];
    let y1 = sol.arcs[0].y_start();
    let y2 = rs.hbar_jet(x1, y1, 0.0)?.y2;
    let y2 = match rs.orientation() {
        Orientation::Forward => y2,
        Orientation::Backward => -y2,
    };
    let x = rs.torus_point(x1, 0.0);
    let model = rs.model();
    let v = model.velocity(x, [y1, y2])?;
    integrate_el_adaptive(model, PhasePoint::new(x, v), sol.period(), settings)
}

/// Populate a record for a critical configuration.
pub fn build_record(rs: &ReducedSystem, sol: &InnerSolution, settings: &Settings, flat: bool) -> Result<MinimizerRecord> {
    let jacobi = JacobiMatrix::from_arcs(&sol.arcs)?;
    let orbit = closed_orbit(rs, sol, settings)?;
    let mono = monodromy(rs.model(), &orbit, settings)?;
    let twist = jacobi.twist_holds();
    let variational = twist && jacobi.lambda0() > settings.degeneracy_threshold * jacobi.lambda1();
    let verdict = if variational && mono.verdict == FloquetVerdict::Hyperbolic {
        Verdict::Hyperbolic
    } else {
        Verdict::Degenerate
    };
    let mut configuration = sol.configuration.clone();
    let x_star = wrap_angle(configuration.base());
    let shift = ((x_star - configuration.base()) / TAU).round() as i64;
    configuration = configuration.translated(shift);
    Ok(MinimizerRecord {
        energy: rs.energy(),
        x_star,
        configuration,
        action: sol.action(),
        lambda0: jacobi.lambda0(),
        lambda1: jacobi.lambda1(),
        spectrum_gap: jacobi.spectrum_gap(),
        hessian_f: sol.hessian().unwrap_or(f64::NAN),
        residual: max_norm(&residual_of(&sol.arcs)),
        twist,
        ground_vector_positive: jacobi.ground_vector_positive(),
        period: sol.period(),
        monodromy: mono,
        verdict,
        m: sol.configuration.m(),
        refinement_change: None,
        flat_profile: flat,
        corner_fit: None,
    })
}

/// Polished, deduplicated local minima of the profile, lowest action first.
pub fn local_minima(rs: &ReducedSystem, scan: &ProfileScan, settings: &Settings) -> Result<Vec<InnerSolution>> {
    let candidates = scan.candidates(16);
    let polished: Vec<Result<InnerSolution>> = par::map(candidates.len(), |k| {
        let j = candidates[k];
        let x = scan.profile.base_points[j];
        let a = scan.neighbour(j, -1).unwrap_or(x);
        let b = scan.neighbour(j, 1).unwrap_or(x);
        polish(rs, scan.solutions[j].clone(), (a, b), settings)
    });
    let mut found: Vec<InnerSolution> = Vec::new();
    for p in polished {
        match p {
            Ok(s) => found.push(s),
            Err(e) => debug!("polish failed: {e}"),
        }
    }
    if found.is_empty() {
        return Err(OrbitError::NoMinimumFound(format!("no candidate converged at E = {}", rs.energy())));
    }
    found.sort_by(|a, b| wrap_angle(a.base()).total_cmp(&wrap_angle(b.base())));
    let mut merged: Vec<InnerSolution> = Vec::new();
    for s in found {
        let close = merged.iter().position(|t| circle_diff(s.base(), t.base()).abs() < settings.dedup_distance);
        match close {
            Some(k) if s.action() < merged[k].action() => merged[k] = s,
            Some(_) => {}
            None => merged.push(s),
        }
    }
    merged.sort_by(|a, b| a.action().total_cmp(&b.action()).then(wrap_angle(a.base()).total_cmp(&wrap_angle(b.base()))));
    Ok(merged)
}

/// Uniqueness of every sub-arc and the action change under `m → 2m`.
pub fn refinement_check(rs: &ReducedSystem, sol: &InnerSolution, settings: &Settings) -> Result<(f64, f64)> {
    let m = sol.configuration.m();
    let spread = par::map(m, |i| {
        let a = &sol.arcs[i];
        subarc_uniqueness(rs, i, a.x, a.x_prime, m, settings)
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?
    .into_iter()
    .fold(0.0, f64::max);
    let fine = sol
        .configuration
        .refined(&sol.arcs)
        .ok_or_else(|| OrbitError::InvalidConfig("steps_per_arc must be even".into()))?;
    let fine_settings = settings.with_m(2 * m);
    let refined = inner_solve(rs, sol.base(), &fine, &fine_settings)?;
    Ok((spread, (refined.action() - sol.action()).abs()))
}

fn find_minima_at(rs: &ReducedSystem, settings: &Settings) -> Result<(Vec<MinimizerRecord>, Vec<InnerSolution>, ProfileScan)> {
    let mut scan = action_profile(rs, settings)?;
    let flat_tol = settings.tie_tolerance.max(1e-12 * scan.profile.min().abs());
    if scan.profile.is_flat(flat_tol) {
        let sol = scan.solutions[0].clone();
        let record = build_record(rs, &sol, settings, true)?;
        let x = scan.profile.base_points[0];
        scan.profile.smooth_windows = vec![[x, x + TAU]];
        return Ok((vec![record], vec![sol], scan));
    }
    let minima = local_minima(rs, &scan, settings)?;
    let best = minima[0].action();
    let global: Vec<InnerSolution> = minima
        .into_iter()
        .filter(|s| s.action() - best <= settings.tie_tolerance)
        .collect();
    if global.len() > 2 {
        warn!("{} co-global minima at E = {}; symmetric model?", global.len(), rs.energy());
    }
    for s in &global {
        let j = nearest_index(&scan.profile.base_points, s.base());
        let w = scan.window(j);
        scan.profile.smooth_windows.push(w);
    }
    let records = par::map(global.len(), |k| build_record(rs, &global[k], settings, false))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok((records, global, scan))
}

fn nearest_index(grid: &[f64], x: f64) -> usize {
    (0..grid.len())
        .min_by(|&a, &b| circle_diff(grid[a], x).abs().total_cmp(&circle_diff(grid[b], x).abs()))
        .unwrap_or(0)
}

/// Global minimizers of `F(·, E)` with their classification.
pub fn find_minima(rs: &ReducedSystem, settings: &Settings) -> Result<Vec<MinimizerRecord>> {
    Ok(find_minima_full(rs, settings)?.records)
}

/// Everything [`find_minima`] computes, including the profile and solutions.
#[derive(Debug, Clone)]
pub struct MinimaSearch {
    pub records: Vec<MinimizerRecord>,
    pub solutions: Vec<InnerSolution>,
    pub profile: ActionProfile,
    pub settings: Settings,
}

/// [`find_minima`] keeping the profile, the solved configurations and the
/// settings after the `m`-doubling schedule.
pub fn find_minima_full(rs: &ReducedSystem, settings: &Settings) -> Result<MinimaSearch> {
    settings.validate()?;
    let mut s = settings.clone();
    loop {
        let (mut records, solutions, scan) = find_minima_at(rs, &s)?;
        let (spread, change) = refinement_check(rs, &solutions[0], &s)?;
        let converged = spread < 1e-8 && change < 1e-6;
        if converged || 2 * s.m > s.m_max {
            if !converged {
                warn!("m = {} not converged: sub-arc spread {spread:.2e}, action change {change:.2e}", s.m);
            }
            for r in records.iter_mut() {
                r.refinement_change = Some(change);
            }
            return Ok(MinimaSearch {
                records,
                solutions,
                profile: scan.profile,
                settings: s,
            });
        }
        debug!("doubling m to {}: spread {spread:.2e}, change {change:.2e}", 2 * s.m);
        s = s.with_m(2 * s.m);
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub x_star: f64,
    pub variational_hyperbolic: bool,
    pub floquet_hyperbolic: bool,
    pub lambda0: f64,
    pub lambda1: f64,
    pub transverse_modulus: f64,
    pub twist: bool,
}

/// Compare the Jacobi-spectrum verdict with the Floquet verdict.
pub fn classify_equivalence(record: &MinimizerRecord, settings: &Settings) -> Result<EquivalenceReport> {
    let report = EquivalenceReport {
        x_star: record.x_star,
        variational_hyperbolic: record.variational_hyperbolic(settings),
        floquet_hyperbolic: record.floquet_hyperbolic(),
        lambda0: record.lambda0,
        lambda1: record.lambda1,
        transverse_modulus: record.monodromy.transverse_modulus(),
        twist: record.twist,
    };
    if report.variational_hyperbolic != report.floquet_hyperbolic {
        let bundle = serde_json::json!({
            "report": &report,
            "multipliers": &record.monodromy.multipliers,
            "residual": record.residual,
            "hessian_f": record.hessian_f,
            "energy": record.energy,
        });
        return Err(OrbitError::CriterionDisagreement(bundle.to_string()));
    }
    Ok(report)
}

/// Corner sizes of the minimizers of `F(x* + δ)` against the action excess.
pub fn corner_probe(rs: &ReducedSystem, record: &MinimizerRecord, offsets: &[f64], settings: &Settings) -> Result<CornerFit> {
    let s = settings.with_m(record.m);
    let base = inner_solve(rs, record.configuration.base(), &record.configuration, &s)?;
    let f0 = base.action();
    let mut samples = Vec::with_capacity(offsets.len());
    for &d in offsets {
        let sol = inner_solve_warm(rs, base.base() + d, &base, &s)?;
        samples.push((sol.action() - f0, sol.corner(rs)?));
    }
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(df, c)| *df > 0.0 && *c > 0.0)
        .map(|(df, c)| (df.ln(), c.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(OrbitError::InvalidConfig(
            "corner probe needs two offsets with a positive action excess".into(),
        ));
    }
    let (slope, intercept) = linear_fit(&pts);
    Ok(CornerFit {
        samples,
        fitted_theta: intercept.exp(),
        fitted_exponent: slope,
    })
}

/// Least-squares line through `(x, y)` pairs: `(slope, intercept)`.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks;
    use crate::model::Model;

    fn system(spec: crate::ModelSpec, energy: f64) -> ReducedSystem {
        ReducedSystem::simple(&Model::new(spec).unwrap(), energy).unwrap()
    }

    fn coarse() -> Settings {
        Settings {
            m: 16,
            profile_points: 32,
            ..Settings::default()
        }
    }

    #[test]
    fn ridge_inner_solve_is_constant_at_the_ridge() {
        let rs = system(benchmarks::separable_ridge(0.1), 1.0);
        let s = coarse();
        let init = Configuration::new((0..16).map(|k| 0.05 * (k as f64).cos()).collect(), 1.0);
        let sol = inner_solve(&rs, 0.0, &init, &s).unwrap();
        assert!(max_norm(&sol.configuration.points) < 1e-9);
    }

    #[test]
    fn free_inner_solve_is_straight() {
        let rs = system(benchmarks::flat_torus(), 1.0);
        let s = coarse();
        let sol = inner_solve(&rs, 0.7, &Configuration::constant(0.3, 16, 1.0), &s).unwrap();
        assert!(sol.configuration.points.iter().all(|p| (p - 0.7).abs() < 1e-9));
    }

    #[test]
    fn ridge_profile_is_even() {
        let rs = system(benchmarks::separable_ridge(0.1), 1.0);
        let s = coarse();
        let up = action_of_base(&rs, 0.3, &s).unwrap();
        let dn = action_of_base(&rs, -0.3, &s).unwrap();
        assert!((up - dn).abs() < 1e-8);
        assert!(action_of_base(&rs, 0.0, &s).unwrap() < up);
    }

    #[test]
    fn ridge_has_one_hyperbolic_minimum() {
        let rs = system(benchmarks::separable_ridge(0.1), 1.0);
        let records = find_minima(&rs, &coarse()).unwrap();
        assert_eq!(records.len(), 1);
        let r = &records[0];
        assert!(circle_diff(r.x_star, 0.0).abs() < 1e-6);
        assert_eq!(r.verdict, Verdict::Hyperbolic);
        assert!(r.hessian_f > 0.0);
        classify_equivalence(r, &coarse()).unwrap();
        let exact = TAU * (2.0f64 * 0.9).sqrt();
        assert!((r.action - exact).abs() < 1e-8);
    }

    #[test]
    fn double_ridge_ties() {
        let rs = system(benchmarks::double_ridge(0.1), 1.0);
        let records = find_minima(&rs, &coarse()).unwrap();
        assert_eq!(records.len(), 2);
        let mut xs: Vec<f64> = records.iter().map(|r| r.x_star).collect();
        xs.sort_by(f64::total_cmp);
        assert!(circle_diff(xs[0], 0.0).abs() < 1e-6);
        assert!((xs[1] - std::f64::consts::PI).abs() < 1e-6);
        assert!(records.iter().all(|r| r.verdict == Verdict::Hyperbolic));
    }

    #[test]
    fn flat_torus_is_degenerate() {
        let rs = system(benchmarks::flat_torus(), 1.0);
        let search = find_minima_full(&rs, &coarse()).unwrap();
        assert!(search.profile.is_flat(1e-9));
        let r = &search.records[0];
        assert!(r.flat_profile);
        assert_eq!(r.verdict, Verdict::Degenerate);
        assert!(r.lambda0.abs() < 1e-8);
        classify_equivalence(r, &coarse()).unwrap();
    }

    #[test]
    fn schur_hessian_matches_profile_curvature() {
        let rs = system(benchmarks::separable_ridge(0.1), 1.0);
        let s = coarse();
        let h = 1e-3;
        let f = |x: f64| action_of_base(&rs, x, &s).unwrap();
        let fd = (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h);
        let sol = inner_solve(&rs, 0.0, &Configuration::constant(0.0, 16, 1.0), &s).unwrap();
        let schur = sol.hessian().unwrap();
        assert!((fd - schur).abs() < 1e-4 * schur, "{fd} vs {schur}");
    }

    #[test]
    fn corner_vanishes_at_the_minimum_and_scales() {
        let rs = system(benchmarks::separable_ridge(0.1), 1.0);
        let s = coarse();
        let r = &find_minima(&rs, &s).unwrap()[0];
        let fit = corner_probe(&rs, r, &[0.0, 1e-2, 5e-3, 2.5e-3], &s).unwrap();
        assert!(fit.samples[0].1 < 1e-9);
        assert!(fit.fitted_exponent > 0.45, "{}", fit.fitted_exponent);
    }

    #[test]
    fn linear_fit_recovers_line() {
        let (a, b) = linear_fit(&[(0.0, 1.0), (1.0, 3.0), (2.0, 5.0)]);
        assert!((a - 2.0).abs() < 1e-14 && (b - 1.0).abs() < 1e-14);
    }
}
