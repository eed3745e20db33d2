//! Branches of minimal orbits over an energy interval.
//!
//! Each non-degenerate minimum is followed in `E` by natural-parameter
//! continuation. Cold-start audits seed branches that the continuation
//! missed, and exchanges of the global minimum between branches are located
//! by bisection on the action gap.

use std::collections::BTreeMap;

use log::{debug, info, warn};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::action::{evaluate_configuration, jacobi_dense, max_norm, residual_of, Configuration, JacobiMatrix, SubArcResult};
use crate::classify::{build_record, find_minima_full, InnerSolution, MinimaSearch, Verdict};
use crate::error::{OrbitError, Result};
use crate::model::{circle_diff, wrap_angle, Model};
use crate::par;
use crate::reduction::{Orientation, ReducedSystem, Strip};
use crate::settings::Settings;

/// The reduced systems of one model at every energy.
#[derive(Debug, Clone)]
pub struct ReducedFamily {
    model: Model,
    strip: Strip,
    orientation: Orientation,
}

impl ReducedFamily {
    pub fn new(model: &Model, strip: Strip, orientation: Orientation) -> Self {
        Self {
            model: model.clone(),
            strip,
            orientation,
        }
    }

    pub fn simple(model: &Model) -> Self {
        Self::new(model, Strip::full(), Orientation::Forward)
    }

    pub fn at(&self, energy: f64) -> Result<ReducedSystem> {
        ReducedSystem::new(&self.model, energy, self.strip, self.orientation)
    }

    pub fn model(&self) -> &Model {
        &self.model
    }
}

/// Newton on all `m` nodes with the cyclic Jacobi matrix.
pub fn solve_critical(
    rs: &ReducedSystem,
    guess: &Configuration,
    warm: Option<&[SubArcResult]>,
    settings: &Settings,
) -> Result<InnerSolution> {
    let mut cfg = guess.clone();
    cfg.energy = rs.energy();
    let mut arcs = evaluate_configuration(&cfg, rs, settings, warm)?;
    let fail = |msg: String| OrbitError::NewtonDivergence(format!("critical solve at E = {}: {msg}", rs.energy()));
    for _ in 0..settings.max_newton_iterations {
        let r = residual_of(&arcs);
        let norm = max_norm(&r);
        if norm <= settings.residual_tolerance {
            return Ok(InnerSolution { configuration: cfg, arcs });
        }
        let j = jacobi_dense(&arcs);
        let rhs = -DVector::from_vec(r);
        let delta = match j.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => j.lu().solve(&rhs).ok_or_else(|| fail("singular Jacobi matrix".into()))?,
        };
        let mut delta: Vec<f64> = delta.iter().copied().collect();
        let biggest = max_norm(&delta);
        if biggest > settings.max_newton_step {
            let s = settings.max_newton_step / biggest;
            delta.iter_mut().for_each(|d| *d *= s);
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let mut trial = cfg.clone();
            for (p, d) in trial.points.iter_mut().zip(&delta) {
                *p += t * d;
            }
            if let Ok(next) = evaluate_configuration(&trial, rs, settings, Some(&arcs)) {
                if max_norm(&residual_of(&next)) < norm {
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
            return Err(fail(format!("line search failed at residual {norm:.3e}")));
        }
    }
    Err(fail("iteration budget exhausted".into()))
}

/// `E_a, E_a + dE, …, E_d`; the last step may be shorter.
pub fn energy_grid(range: [f64; 2], de: f64) -> Result<Vec<f64>> {
    let [a, d] = range;
    if !(a < d) || !a.is_finite() || !d.is_finite() {
        return Err(OrbitError::InvalidConfig(format!("energy range needs E_a < E_d, got [{a}, {d}]")));
    }
    if !(de > 0.0) || !de.is_finite() {
        return Err(OrbitError::InvalidConfig(format!("dE must be positive, got {de}")));
    }
    let n = ((d - a) / de - 1e-9).ceil().max(1.0) as usize;
    if n > 100_000 {
        return Err(OrbitError::InvalidConfig(format!("{n} continuation steps requested")));
    }
    Ok((0..=n).map(|k| if k == n { d } else { a + k as f64 * de }).collect())
}

/// `(seed grid index, ordinal)`
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BranchId(pub usize, pub usize);

impl std::fmt::Display for BranchId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.0, self.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BranchEnd {
    RangeEnd,
    Degenerate { energy: f64 },
    StepFailure { energy: f64, reason: String },
    Jump { energy: f64, distance: f64 },
    Merged { energy: f64, into: BranchId },
}

#[derive(Debug, Clone)]
struct BranchPoint {
    k: usize,
    energy: f64,
    solution: InnerSolution,
    lambda0: f64,
    lambda1: f64,
    nondegenerate: bool,
}

impl BranchPoint {
    fn new(k: usize, energy: f64, solution: InnerSolution, settings: &Settings) -> Result<Self> {
        let j = JacobiMatrix::from_arcs(&solution.arcs)?;
        Ok(Self {
            k,
            energy,
            lambda0: j.lambda0(),
            lambda1: j.lambda1(),
            nondegenerate: j.twist_holds() && j.lambda0() > settings.degeneracy_threshold * j.lambda1(),
            solution,
        })
    }

    fn x(&self) -> f64 {
        self.solution.base()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Branch {
    pub id: BranchId,
    pub energies: Vec<f64>,
    pub base_points: Vec<f64>,
    pub actions: Vec<f64>,
    pub lambda0s: Vec<f64>,
    pub lambda1s: Vec<f64>,
    pub periods: Vec<f64>,
    pub global_flags: Vec<bool>,
    /// Transverse Floquet modulus where the branch is global.
    pub multiplier_moduli: Vec<Option<f64>>,
    /// How the branch ended below and above its seed.
    pub ends: [BranchEnd; 2],
    #[serde(skip)]
    grid_index: Vec<usize>,
    #[serde(skip)]
    solutions: Vec<InnerSolution>,
}

impl Branch {
    fn from_points(id: BranchId, points: Vec<BranchPoint>, ends: [BranchEnd; 2]) -> Self {
        let n = points.len();
        let mut b = Branch {
            id,
            energies: Vec::with_capacity(n),
            base_points: Vec::with_capacity(n),
            actions: Vec::with_capacity(n),
            lambda0s: Vec::with_capacity(n),
            lambda1s: Vec::with_capacity(n),
            periods: Vec::with_capacity(n),
            global_flags: vec![false; n],
            multiplier_moduli: vec![None; n],
            ends,
            grid_index: Vec::with_capacity(n),
            solutions: Vec::with_capacity(n),
        };
        for p in points {
            b.energies.push(p.energy);
            b.base_points.push(p.x());
            b.actions.push(p.solution.action());
            b.lambda0s.push(p.lambda0);
            b.lambda1s.push(p.lambda1);
            b.periods.push(p.solution.period());
            b.grid_index.push(p.k);
            b.solutions.push(p.solution);
        }
        b
    }

    fn position(&self, k: usize) -> Option<usize> {
        self.grid_index.binary_search(&k).ok()
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    /// Solved configuration at the `i`-th branch point.
    pub fn solution(&self, i: usize) -> &InnerSolution {
        &self.solutions[i]
    }
}

/// Move a critical configuration from `e0` to `e1`, halving the step on failure.
fn step(family: &ReducedFamily, prev: &InnerSolution, e0: f64, e1: f64, settings: &Settings) -> Result<InnerSolution> {
    let full = e1 - e0;
    let min_step = full.abs() * settings.min_step_fraction;
    let mut cur = prev.clone();
    let mut e = e0;
    let mut h = full;
    while (e1 - e) * full.signum() > 1e-15 * e1.abs().max(1.0) {
        let target = if h.abs() >= (e1 - e).abs() { e1 } else { e + h };
        match family
            .at(target)
            .and_then(|rs| solve_critical(&rs, &cur.configuration, Some(&cur.arcs), settings))
        {
            Ok(sol) => {
                cur = sol;
                e = target;
            }
            Err(err) => {
                h *= 0.5;
                if h.abs() < min_step {
                    return Err(OrbitError::StepFailure {
                        energy: target,
                        reason: err.to_string(),
                    });
                }
            }
        }
    }
    Ok(cur)
}

/// Follow a critical configuration from grid index `k0` in both directions.
fn trace(
    family: &ReducedFamily,
    grid: &[f64],
    k0: usize,
    seed: InnerSolution,
    id: BranchId,
    settings: &Settings,
    existing: &[Branch],
) -> Result<Branch> {
    let first = BranchPoint::new(k0, grid[k0], seed, settings)?;
    if !first.nondegenerate {
        return Err(OrbitError::InvalidConfig(format!(
            "seed at E = {} is degenerate (λ₀ = {:.3e})",
            grid[k0], first.lambda0
        )));
    }
    let mut points = vec![first.clone()];
    let mut ends = [BranchEnd::RangeEnd, BranchEnd::RangeEnd];
    for (side, dir) in [(0usize, -1isize), (1, 1)] {
        let mut prev = first.clone();
        loop {
            let next_k = prev.k as isize + dir;
            if next_k < 0 || next_k as usize >= grid.len() {
                break;
            }
            let k = next_k as usize;
            let sol = match step(family, &prev.solution, prev.energy, grid[k], settings) {
                Ok(s) => s,
                Err(OrbitError::StepFailure { energy, reason }) => {
                    ends[side] = BranchEnd::StepFailure { energy, reason };
                    break;
                }
                Err(e) => return Err(e),
            };
            let distance = circle_diff(sol.base(), prev.x()).abs();
            if distance > settings.max_branch_jump {
                ends[side] = BranchEnd::Jump { energy: grid[k], distance };
                break;
            }
            if let Some(other) = existing.iter().find(|b| {
                b.position(k)
                    .is_some_and(|i| circle_diff(b.base_points[i], sol.base()).abs() < 1e-6)
            }) {
                ends[side] = BranchEnd::Merged { energy: grid[k], into: other.id };
                break;
            }
            let point = BranchPoint::new(k, grid[k], sol, settings)?;
            let degenerate = !point.nondegenerate;
            points.push(point.clone());
            if degenerate {
                ends[side] = BranchEnd::Degenerate { energy: grid[k] };
                break;
            }
            prev = point;
        }
    }
    points.sort_by_key(|p| p.k);
    Ok(Branch::from_points(id, points, ends))
}

/// Continue the minimum of `seed` over `range` with step `de`.
pub fn continue_branch(
    family: &ReducedFamily,
    seed: &crate::classify::MinimizerRecord,
    range: [f64; 2],
    de: f64,
    settings: &Settings,
) -> Result<Branch> {
    let grid = energy_grid(range, de)?;
    let k0 = (0..grid.len())
        .min_by(|&a, &b| (grid[a] - seed.energy).abs().total_cmp(&(grid[b] - seed.energy).abs()))
        .unwrap_or(0);
    let s = settings.with_m(seed.m);
    if seed.verdict != Verdict::Hyperbolic && !seed.variational_hyperbolic(&s) {
        return Err(OrbitError::InvalidConfig(format!(
            "seed at E = {} is degenerate (λ₀ = {:.3e})",
            seed.energy, seed.lambda0
        )));
    }
    let rs = family.at(grid[k0])?;
    let sol = solve_critical(&rs, &seed.configuration, None, &s)?;
    trace(family, &grid, k0, sol, BranchId(k0, 0), &s, &[])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossingEvent {
    pub e_star: f64,
    pub branch_a: BranchId,
    pub branch_b: BranchId,
    pub x_a: f64,
    pub x_b: f64,
    pub action: f64,
    /// `F_a − F_b` at `e_star`.
    pub gap: f64,
    /// `dF/dE` along each branch at `e_star`.
    pub slope_a: f64,
    pub slope_b: f64,
    pub gap_derivative: f64,
    /// Periods, which equal the slopes.
    pub period_a: f64,
    pub period_b: f64,
    pub verdict_a: Verdict,
    pub verdict_b: Verdict,
    pub lambda0_a: f64,
    pub lambda0_b: f64,
    pub modulus_a: f64,
    pub modulus_b: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRow {
    pub energy: f64,
    pub n_global: usize,
    pub min_action: f64,
    pub lambda0: f64,
    pub multiplier_modulus: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Audit {
    pub energy: f64,
    pub minima: Vec<f64>,
    pub verdicts: Vec<Verdict>,
    /// Largest distance from an audited global minimum to its branch point.
    pub max_deviation: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DegenerateMinimum {
    pub energy: f64,
    pub x_star: f64,
    pub lambda0: f64,
    pub lambda1: f64,
    pub flat_profile: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlobalStructure {
    pub energies: Vec<f64>,
    pub m: usize,
    pub branches: Vec<Branch>,
    pub crossings: Vec<CrossingEvent>,
    /// Pairs of branches tied at two or more consecutive grid energies.
    pub symmetric_ties: Vec<(BranchId, BranchId)>,
    pub audits: Vec<Audit>,
    /// Global minima found by audits that cannot seed a branch.
    pub degenerate_minima: Vec<DegenerateMinimum>,
    pub summary: Vec<SummaryRow>,
}

impl GlobalStructure {
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("E,n_global,min_action,lambda0,multiplier_modulus\n");
        for r in &self.summary {
            out.push_str(&format!(
                "{:.12},{},{:.15},{:.12e},{:.12}\n",
                r.energy, r.n_global, r.min_action, r.lambda0, r.multiplier_modulus
            ));
        }
        out
    }

    /// Smallest `λ₀/λ₁` over every global minimizer that was computed.
    pub fn min_ground_ratio(&self) -> f64 {
        let mut ratio = f64::INFINITY;
        for b in &self.branches {
            for i in 0..b.len() {
                if b.global_flags[i] {
                    ratio = ratio.min(b.lambda0s[i] / b.lambda1s[i]);
                }
            }
        }
        for d in &self.degenerate_minima {
            ratio = ratio.min(d.lambda0 / d.lambda1);
        }
        if self.branches.is_empty() && self.degenerate_minima.is_empty() {
            0.0
        } else {
            ratio
        }
    }
}

fn audit_indices(n: usize, every: usize) -> Vec<usize> {
    let every = every.max(1);
    let mut ks: Vec<usize> = (0..n).filter(|k| k % every == 0).collect();
    if ks.last() != Some(&(n - 1)) {
        ks.push(n - 1);
    }
    ks
}

fn explained(branches: &[Branch], k: usize, x: f64) -> Option<f64> {
    branches
        .iter()
        .filter_map(|b| b.position(k).map(|i| circle_diff(b.base_points[i], x).abs()))
        .filter(|d| *d < 1e-6)
        .reduce(f64::min)
}

/// Branches, crossings and the per-energy summary over `range`.
pub fn global_structure(family: &ReducedFamily, range: [f64; 2], de: f64, settings: &Settings) -> Result<GlobalStructure> {
    let grid = energy_grid(range, de)?;
    let first = find_minima_full(&family.at(grid[0])?, settings)?;
    let s = first.settings.clone();
    let ks = audit_indices(grid.len(), s.audit_every);
    let later: Vec<Result<MinimaSearch>> = par::map(ks.len() - 1, |i| {
        let e = grid[ks[i + 1]];
        family.at(e).and_then(|rs| find_minima_full(&rs, &s))
    });
    let mut searches: BTreeMap<usize, MinimaSearch> = BTreeMap::new();
    searches.insert(0, first);
    for (i, r) in later.into_iter().enumerate() {
        searches.insert(ks[i + 1], r?);
    }

    let mut branches: Vec<Branch> = Vec::new();
    let mut degenerate_minima = Vec::new();
    for (&k, search) in &searches {
        let mut ordinal = 0;
        for (rec, sol) in search.records.iter().zip(&search.solutions) {
            if explained(&branches, k, rec.x_star).is_some() {
                continue;
            }
            if rec.flat_profile || !rec.variational_hyperbolic(&s) {
                degenerate_minima.push(DegenerateMinimum {
                    energy: grid[k],
                    x_star: rec.x_star,
                    lambda0: rec.lambda0,
                    lambda1: rec.lambda1,
                    flat_profile: rec.flat_profile,
                });
                continue;
            }
            let id = BranchId(k, ordinal);
            ordinal += 1;
            debug!("seeding branch {id} at E = {} x = {:.6}", grid[k], rec.x_star);
            match trace(family, &grid, k, sol.clone(), id, &s, &branches) {
                Ok(b) => branches.push(b),
                Err(e) => {
                    return Err(OrbitError::AuditMismatch {
                        energy: grid[k],
                        x: rec.x_star,
                    })
                    .inspect_err(|_| warn!("branch {id} could not be seeded: {e}"));
                }
            }
        }
    }

    let mut audits = Vec::new();
    for (&k, search) in &searches {
        let mut max_deviation: f64 = 0.0;
        for rec in &search.records {
            let degenerate = degenerate_minima
                .iter()
                .any(|d| d.energy == grid[k] && circle_diff(d.x_star, rec.x_star).abs() < 1e-12);
            if degenerate {
                continue;
            }
            match explained(&branches, k, rec.x_star) {
                Some(d) => max_deviation = max_deviation.max(d),
                None => {
                    return Err(OrbitError::AuditMismatch {
                        energy: grid[k],
                        x: rec.x_star,
                    })
                }
            }
        }
        audits.push(Audit {
            energy: grid[k],
            minima: search.records.iter().map(|r| r.x_star).collect(),
            verdicts: search.records.iter().map(|r| r.verdict).collect(),
            max_deviation,
        });
    }

    mark_global(family, &grid, &mut branches, &s)?;
    let (crossings, symmetric_ties) = find_crossings(family, &grid, &branches, &s)?;
    let summary = summarize(&grid, &branches, &crossings, &searches);
    info!(
        "{} branches, {} crossings, {} symmetric ties over [{}, {}]",
        branches.len(),
        crossings.len(),
        symmetric_ties.len(),
        range[0],
        range[1]
    );
    Ok(GlobalStructure {
        energies: grid,
        m: s.m,
        branches,
        crossings,
        symmetric_ties,
        audits,
        degenerate_minima,
        summary,
    })
}

fn global_at(branches: &[Branch], k: usize, tie: f64) -> Vec<(usize, usize)> {
    let alive: Vec<(usize, usize)> = branches
        .iter()
        .enumerate()
        .filter_map(|(bi, b)| b.position(k).map(|i| (bi, i)))
        .collect();
    let best = alive
        .iter()
        .map(|&(bi, i)| branches[bi].actions[i])
        .fold(f64::INFINITY, f64::min);
    alive
        .into_iter()
        .filter(|&(bi, i)| branches[bi].actions[i] - best <= tie)
        .collect()
}

fn mark_global(family: &ReducedFamily, grid: &[f64], branches: &mut [Branch], s: &Settings) -> Result<()> {
    let mut jobs = Vec::new();
    for k in 0..grid.len() {
        for (bi, i) in global_at(branches, k, s.tie_tolerance) {
            branches[bi].global_flags[i] = true;
            jobs.push((bi, i, k));
        }
    }
    let moduli: Vec<Result<f64>> = par::map(jobs.len(), |j| {
        let (bi, i, k) = jobs[j];
        let rs = family.at(grid[k])?;
        Ok(build_record(&rs, &branches[bi].solutions[i], s, false)?.monodromy.transverse_modulus())
    });
    for (&(bi, i, _), m) in jobs.iter().zip(moduli) {
        branches[bi].multiplier_moduli[i] = Some(m?);
    }
    Ok(())
}

fn find_crossings(
    family: &ReducedFamily,
    grid: &[f64],
    branches: &[Branch],
    s: &Settings,
) -> Result<(Vec<CrossingEvent>, Vec<(BranchId, BranchId)>)> {
    let global: Vec<Vec<usize>> = (0..grid.len())
        .map(|k| global_at(branches, k, s.tie_tolerance).into_iter().map(|(bi, _)| bi).collect())
        .collect();
    let mut crossings = Vec::new();
    let mut symmetric = Vec::new();
    for ai in 0..branches.len() {
        for bi in ai + 1..branches.len() {
            let (a, b) = (&branches[ai], &branches[bi]);
            // Gap sign at every grid energy where both branches exist and one is global.
            let mut signs: Vec<(usize, i8)> = Vec::new();
            for k in 0..grid.len() {
                let (Some(ia), Some(ib)) = (a.position(k), b.position(k)) else {
                    continue;
                };
                if !global[k].contains(&ai) && !global[k].contains(&bi) {
                    continue;
                }
                let gap = a.actions[ia] - b.actions[ib];
                let sign = if gap.abs() <= s.tie_tolerance { 0 } else { gap.signum() as i8 };
                signs.push((k, sign));
            }
            let longest_tie = signs
                .chunk_by(|x, y| x.1 == 0 && y.1 == 0 && y.0 == x.0 + 1)
                .filter(|run| run[0].1 == 0)
                .map(|run| run.len())
                .max()
                .unwrap_or(0);
            if longest_tie >= 2 {
                warn!("branches {} and {} tie persistently; symmetric model", a.id, b.id);
                symmetric.push((a.id, b.id));
                continue;
            }
            let nonzero: Vec<(usize, i8)> = signs.into_iter().filter(|x| x.1 != 0).collect();
            for w in nonzero.windows(2) {
                let ((k1, s1), (k2, s2)) = (w[0], w[1]);
                if s1 == s2 || k2 - k1 > 2 {
                    continue;
                }
                let (ia, ib) = (a.position(k1).unwrap_or(0), b.position(k1).unwrap_or(0));
                crossings.push(locate_crossing(family, (a, ia), (b, ib), grid[k1], grid[k2], s)?);
            }
        }
    }
    crossings.sort_by(|x, y| x.e_star.total_cmp(&y.e_star));
    Ok((crossings, symmetric))
}

fn locate_crossing(
    family: &ReducedFamily,
    (a, ia): (&Branch, usize),
    (b, ib): (&Branch, usize),
    e_lo: f64,
    e_hi: f64,
    s: &Settings,
) -> Result<CrossingEvent> {
    let solve_pair = |e: f64, sa: &InnerSolution, sb: &InnerSolution| -> Result<(InnerSolution, InnerSolution)> {
        let rs = family.at(e)?;
        let na = solve_critical(&rs, &sa.configuration, Some(&sa.arcs), s)?;
        let nb = solve_critical(&rs, &sb.configuration, Some(&sb.arcs), s)?;
        Ok((na, nb))
    };
    let (mut lo, mut hi) = (e_lo, e_hi);
    let mut sa = a.solutions[ia].clone();
    let mut sb = b.solutions[ib].clone();
    let mut g_lo = sa.action() - sb.action();
    let (ha, hb) = solve_pair(hi, &sa, &sb)?;
    let mut g_hi = ha.action() - hb.action();
    let mut exact = None;
    while hi - lo > s.crossing_resolution {
        let mid = 0.5 * (lo + hi);
        let (na, nb) = solve_pair(mid, &sa, &sb)?;
        let g = na.action() - nb.action();
        if g.abs() <= 1e-3 * s.tie_tolerance {
            exact = Some(mid);
            break;
        }
        if (g <= 0.0) == (g_lo <= 0.0) {
            lo = mid;
            g_lo = g;
            sa = na;
            sb = nb;
        } else {
            hi = mid;
            g_hi = g;
        }
    }
    let e_star = if let Some(e) = exact {
        e
    } else if g_hi != g_lo { lo - g_lo * (hi - lo) / (g_hi - g_lo) } else { 0.5 * (lo + hi) };
    let (ca, cb) = solve_pair(e_star, &sa, &sb)?;
    let gap = ca.action() - cb.action();
    if gap.abs() > s.tie_tolerance {
        warn!("crossing at E = {e_star}: residual gap {gap:.3e}");
    }
    let h = 1e-4;
    let (pa, pb) = solve_pair(e_star + h, &ca, &cb)?;
    let (ma, mb) = solve_pair(e_star - h, &ca, &cb)?;
    let slope_a = (pa.action() - ma.action()) / (2.0 * h);
    let slope_b = (pb.action() - mb.action()) / (2.0 * h);
    for (slope, sol) in [(slope_a, &ca), (slope_b, &cb)] {
        if (slope - sol.period()).abs() > 1e-5 * sol.period() {
            warn!("dF/dE = {slope} differs from the period {}", sol.period());
        }
    }
    let rs = family.at(e_star)?;
    let ra = build_record(&rs, &ca, s, false)?;
    let rb = build_record(&rs, &cb, s, false)?;
    Ok(CrossingEvent {
        e_star,
        branch_a: a.id,
        branch_b: b.id,
        x_a: wrap_angle(ca.base()),
        x_b: wrap_angle(cb.base()),
        action: ca.action().min(cb.action()),
        gap,
        slope_a,
        slope_b,
        gap_derivative: slope_a - slope_b,
        period_a: ca.period(),
        period_b: cb.period(),
        verdict_a: ra.verdict,
        verdict_b: rb.verdict,
        lambda0_a: ra.lambda0,
        lambda0_b: rb.lambda0,
        modulus_a: ra.monodromy.transverse_modulus(),
        modulus_b: rb.monodromy.transverse_modulus(),
    })
}

fn summarize(
    grid: &[f64],
    branches: &[Branch],
    crossings: &[CrossingEvent],
    searches: &BTreeMap<usize, MinimaSearch>,
) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for (k, &e) in grid.iter().enumerate() {
        let global: Vec<(usize, usize)> = branches
            .iter()
            .enumerate()
            .filter_map(|(bi, b)| b.position(k).filter(|&i| b.global_flags[i]).map(|i| (bi, i)))
            .collect();
        if let Some(&(bi, i)) = global
            .iter()
            .min_by(|x, y| branches[x.0].actions[x.1].total_cmp(&branches[y.0].actions[y.1]))
        {
            let b = &branches[bi];
            rows.push(SummaryRow {
                energy: e,
                n_global: global.len(),
                min_action: b.actions[i],
                lambda0: global.iter().map(|&(bj, j)| branches[bj].lambda0s[j]).fold(f64::INFINITY, f64::min),
                multiplier_modulus: b.multiplier_moduli[i].unwrap_or(f64::NAN),
            });
        } else if let Some(search) = searches.get(&k) {
            let r = &search.records[0];
            rows.push(SummaryRow {
                energy: e,
                n_global: search.records.len(),
                min_action: r.action,
                lambda0: search.records.iter().map(|r| r.lambda0).fold(f64::INFINITY, f64::min),
                multiplier_modulus: r.monodromy.transverse_modulus(),
            });
        }
    }
    for c in crossings {
        rows.push(SummaryRow {
            energy: c.e_star,
            n_global: 2,
            min_action: c.action,
            lambda0: c.lambda0_a.min(c.lambda0_b),
            multiplier_modulus: c.modulus_a.min(c.modulus_b),
        });
    }
    rows.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks;
    use crate::classify::find_minima;

    fn coarse() -> Settings {
        Settings {
            m: 16,
            profile_points: 32,
            ..Settings::default()
        }
    }

    #[test]
    fn grid_ends_exactly_at_the_range_end() {
        let g = energy_grid([1.0, 1.25], 0.1).unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(*g.last().unwrap(), 1.25);
        assert!(energy_grid([1.0, 1.0], 0.1).is_err());
        assert!(energy_grid([1.0, 2.0], 0.0).is_err());
    }

    #[test]
    fn ridge_branch_stays_on_the_ridge() {
        let model = Model::new(benchmarks::separable_ridge(0.1)).unwrap();
        let family = ReducedFamily::simple(&model);
        let s = coarse();
        let seed = &find_minima(&family.at(1.0).unwrap(), &s).unwrap()[0];
        let b = continue_branch(&family, seed, [1.0, 1.3], 0.05, &s).unwrap();
        assert_eq!(b.len(), 7);
        assert!(b.base_points.iter().all(|x| circle_diff(*x, 0.0).abs() < 1e-8));
        assert!(b.lambda0s.iter().all(|l| *l > 0.0));
        for (e, f) in b.energies.iter().zip(&b.actions) {
            let exact = std::f64::consts::TAU * (2.0 * (e - 0.1)).sqrt();
            assert!((f - exact).abs() < 1e-8);
        }
    }

    #[test]
    fn flat_seed_is_rejected() {
        let model = Model::new(benchmarks::flat_torus()).unwrap();
        let family = ReducedFamily::simple(&model);
        let s = coarse();
        let seed = &find_minima(&family.at(1.0).unwrap(), &s).unwrap()[0];
        assert!(continue_branch(&family, seed, [1.0, 1.3], 0.05, &s).is_err());
    }

    #[test]
    fn single_ridge_has_no_crossing() {
        let model = Model::new(benchmarks::separable_ridge(0.1)).unwrap();
        let g = global_structure(&ReducedFamily::simple(&model), [1.0, 1.2], 0.05, &coarse()).unwrap();
        assert_eq!(g.branches.len(), 1);
        assert!(g.crossings.is_empty());
        assert!(g.summary.iter().all(|r| r.n_global == 1));
    }

    #[test]
    fn symmetric_double_ridge_is_flagged() {
        let model = Model::new(benchmarks::double_ridge(0.1)).unwrap();
        let g = global_structure(&ReducedFamily::simple(&model), [1.0, 1.1], 0.05, &coarse()).unwrap();
        assert!(g.crossings.is_empty());
        assert_eq!(g.symmetric_ties.len(), 1);
        assert!(g.summary.iter().all(|r| r.n_global == 2));
    }
    #[test]
    fn asymmetric_ridges_exchange_once() {
        let model = Model::new(benchmarks::asymmetric_two_ridge()).unwrap();
        let g = global_structure(&ReducedFamily::simple(&model), [1.0, 1.4], 0.05, &coarse()).unwrap();
        assert_eq!(g.crossings.len(), 1);
        let c = &g.crossings[0];
        assert!((c.e_star - 1.2).abs() < 1e-7, "{}", c.e_star);
        let exact = |a22: f64, h: f64| std::f64::consts::TAU * a22 * (2.0 * a22 * (c.e_star - h)).sqrt().recip();
        let slopes = [exact(1.1, 0.2), exact(1.0, 0.1)];
        for s in [c.slope_a, c.slope_b] {
            assert!(slopes.iter().any(|t| (s - t).abs() < 1e-5), "{s} vs {slopes:?}");
        }
        assert!(c.gap_derivative.abs() > 1e-6);
        assert_eq!((c.verdict_a, c.verdict_b), (Verdict::Hyperbolic, Verdict::Hyperbolic));
        assert!(g.symmetric_ties.is_empty());
        let csv = g.summary_csv();
        assert_eq!(csv.lines().count(), 1 + 9 + 1);
    }
}
