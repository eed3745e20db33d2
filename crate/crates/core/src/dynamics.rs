//! Euler–Lagrange flow of the full two-degree-of-freedom system and Floquet
//! analysis of its periodic orbits.
//!
//! The flow is integrated in canonical coordinates `(x, y)`, where the
//! Euler–Lagrange equations read `ẋ = ∂H/∂y`, `ẏ = −∂H/∂x`. States handed in
//! and out use velocities.

use std::f64::consts::TAU;

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::error::{OrbitError, Result};
use crate::model::{wrap_angle, Model};
use crate::ode::rk4_step;
use crate::settings::Settings;

/// A point of `TT²` (or `T*T²`): angles plus velocity or momentum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: [f64; 2],
    pub v: [f64; 2],
}

impl PhasePoint {
    pub fn new(x: [f64; 2], v: [f64; 2]) -> Self {
        Self { x, v }
    }

    /// Same point with angles reduced to `[0, 2π)`.
    pub fn canonical(&self) -> Self {
        Self {
            x: [wrap_angle(self.x[0]), wrap_angle(self.x[1])],
            v: self.v,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Angles reduced to `[0, 2π)`.
    pub states: Vec<PhasePoint>,
    pub energies: Vec<f64>,
    /// Homology class of the curve closed up by a short segment.
    pub winding: [i64; 2],
    /// Lifted position at the first and last sample.
    pub start_lift: [f64; 2],
    pub end_lift: [f64; 2],
}

impl Trajectory {
    pub fn period(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn steps(&self) -> usize {
        self.times.len().saturating_sub(1)
    }

    pub fn max_energy_drift(&self) -> f64 {
        let e0 = self.energies[0];
        self.energies
            .iter()
            .map(|e| (e - e0).abs())
            .fold(0.0, f64::max)
    }

    /// Mismatch between the end state and the start state translated by the winding.
    pub fn closure_error(&self) -> f64 {
        let first = self.states[0];
        let last = self.states[self.states.len() - 1];
        let mut err: f64 = 0.0;
        for k in 0..2 {
            let dx = self.end_lift[k] - self.start_lift[k] - TAU * self.winding[k] as f64;
            err = err.max(dx.abs()).max((last.v[k] - first.v[k]).abs());
        }
        err
    }
}

/// Canonical vector field `(∂H/∂y, −∂H/∂x)`.
fn hamilton_field(model: &Model, z: &[f64; 4]) -> [f64; 4] {
    let jet = model.hamiltonian_jet([z[0], z[1]], [z[2], z[3]]);
    [jet.grad[2], jet.grad[3], -jet.grad[0], -jet.grad[1]]
}

/// Euler–Lagrange flow from `p0` over `[0, period]` with fixed RK4 steps.
pub fn integrate_el(
    model: &Model,
    p0: PhasePoint,
    period: f64,
    steps: usize,
    drift_tolerance: f64,
) -> Result<Trajectory> {
    if steps < 64 {
        return Err(OrbitError::InvalidConfig(format!("steps must be >= 64, got {steps}")));
    }
    if !(period > 0.0) {
        return Err(OrbitError::InvalidConfig(format!("period must be positive, got {period}")));
    }
    let h = period / steps as f64;
    let y0 = model.momentum(p0.x, p0.v);
    let mut z = [p0.x[0], p0.x[1], y0[0], y0[1]];
    let mut field = |_t: f64, z: &[f64; 4]| hamilton_field(model, z);

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut energies = Vec::with_capacity(steps + 1);
    let mut record = |t: f64, z: &[f64; 4]| -> Result<()> {
        let x = [z[0], z[1]];
        let v = model.velocity(x, [z[2], z[3]])?;
        times.push(t);
        states.push(PhasePoint::new(x, v).canonical());
        energies.push(model.hamiltonian(x, [z[2], z[3]]));
        Ok(())
    };
    record(0.0, &z)?;
    for i in 0..steps {
        z = rk4_step(&mut field, i as f64 * h, &z, h);
        let t = if i + 1 == steps { period } else { (i + 1) as f64 * h };
        record(t, &z)?;
    }
    let end_lift = [z[0], z[1]];
    let winding = [
        ((end_lift[0] - p0.x[0]) / TAU).round() as i64,
        ((end_lift[1] - p0.x[1]) / TAU).round() as i64,
    ];
    let traj = Trajectory {
        times,
        states,
        energies,
        winding,
        start_lift: p0.x,
        end_lift,
    };
    let drift = traj.max_energy_drift();
    if drift > drift_tolerance {
        return Err(OrbitError::EnergyDriftExceeded {
            drift,
            tolerance: drift_tolerance,
            steps,
        });
    }
    Ok(traj)
}

/// [`integrate_el`] starting from `settings.orbit_steps`, doubling the step
/// count until the energy drift is within tolerance.
pub fn integrate_el_adaptive(
    model: &Model,
    p0: PhasePoint,
    period: f64,
    settings: &Settings,
) -> Result<Trajectory> {
    let mut steps = settings.orbit_steps;
    let mut last_err = None;
    for _ in 0..=settings.max_doublings {
        match integrate_el(model, p0, period, steps, settings.drift_tolerance) {
            Ok(traj) => return Ok(traj),
            Err(err @ OrbitError::EnergyDriftExceeded { .. }) => {
                last_err = Some(err);
                steps *= 2;
            }
            Err(err) => return Err(err),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Multiplier {
    pub re: f64,
    pub im: f64,
}

impl Multiplier {
    pub fn real(re: f64) -> Self {
        Self { re, im: 0.0 }
    }

    pub fn modulus(&self) -> f64 {
        self.re.hypot(self.im)
    }

    pub fn times(&self, other: &Multiplier) -> Multiplier {
        Multiplier {
            re: self.re * other.re - self.im * other.im,
            im: self.re * other.im + self.im * other.re,
        }
    }

    pub fn distance_to_one(&self) -> f64 {
        (self.re - 1.0).hypot(self.im)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FloquetVerdict {
    Hyperbolic,
    NonHyperbolic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonodromyResult {
    /// Linearized period map in canonical coordinates `(x1, x2, y1, y2)`.
    pub matrix: [[f64; 4]; 4],
    /// Eigenvalues, sorted by modulus.
    pub multipliers: Vec<Multiplier>,
    /// The pair left after removing the two unit multipliers; larger modulus first.
    pub transverse_pair: [Multiplier; 2],
    pub verdict: FloquetVerdict,
    /// All four multipliers within the hyperbolicity margin of 1.
    pub degenerate: bool,
    pub determinant: f64,
    pub period: f64,
}

impl MonodromyResult {
    /// Modulus of the dominant transverse multiplier.
    pub fn transverse_modulus(&self) -> f64 {
        self.transverse_pair[0].modulus()
    }
}

/// Linearized period map of a closed orbit and its Floquet multipliers.
///
/// The variational equations `Φ̇ = D(J∇H)Φ` are integrated alongside the
/// flow with the step count of `orbit`. Because the spectrum of a symplectic
/// 4×4 matrix with a double unit multiplier is `{1, 1, λ, 1/λ}`, the
/// transverse pair is recovered from `λ + 1/λ = tr M − 2`.
pub fn monodromy(model: &Model, orbit: &Trajectory, settings: &Settings) -> Result<MonodromyResult> {
    let closure = orbit.closure_error();
    if !(closure <= settings.closure_tolerance) {
        return Err(OrbitError::NotClosed(closure));
    }
    let period = orbit.period();
    let steps = orbit.steps().max(64);
    let p0 = orbit.states[0];
    let y0 = model.momentum(p0.x, p0.v);

    let mut state = [0.0; 20];
    state[0] = orbit.start_lift[0];
    state[1] = orbit.start_lift[1];
    state[2] = y0[0];
    state[3] = y0[1];
    for i in 0..4 {
        state[4 + 5 * i] = 1.0;
    }
    let mut field = |_t: f64, s: &[f64; 20]| {
        let jet = model.hamiltonian_jet([s[0], s[1]], [s[2], s[3]]);
        let mut out = [0.0; 20];
        out[0] = jet.grad[2];
        out[1] = jet.grad[3];
        out[2] = -jet.grad[0];
        out[3] = -jet.grad[1];
        // D(J∇H) = [[H_yx, H_yy], [−H_xx, −H_xy]]
        let mut d = [[0.0; 4]; 4];
        for r in 0..2 {
            for c in 0..4 {
                d[r][c] = jet.hess[2 + r][c];
                d[2 + r][c] = -jet.hess[r][c];
            }
        }
        for r in 0..4 {
            for c in 0..4 {
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += d[r][k] * s[4 + 4 * k + c];
                }
                out[4 + 4 * r + c] = acc;
            }
        }
        out
    };
    let h = period / steps as f64;
    for i in 0..steps {
        state = rk4_step(&mut field, i as f64 * h, &state, h);
    }
    let mut matrix = [[0.0; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            matrix[r][c] = state[4 + 4 * r + c];
        }
    }
    Ok(analyze_monodromy(matrix, period, settings.hyperbolicity_margin))
}

/// Floquet data of a given 4×4 period map.
pub fn analyze_monodromy(matrix: [[f64; 4]; 4], period: f64, margin: f64) -> MonodromyResult {
    let m = Matrix4::from_fn(|r, c| matrix[r][c]);
    let determinant = m.determinant();
    let mut multipliers: Vec<Multiplier> = m
        .complex_eigenvalues()
        .iter()
        .map(|z| Multiplier { re: z.re, im: z.im })
        .collect();
    multipliers.sort_by(|a, b| {
        a.modulus()
            .total_cmp(&b.modulus())
            .then(a.re.total_cmp(&b.re))
            .then(a.im.total_cmp(&b.im))
    });

    let s = m.trace() - 2.0;
    let disc = s * s - 4.0;
    let transverse_pair = if disc >= 0.0 {
        let root = disc.sqrt();
        let big = if s >= 0.0 { 0.5 * (s + root) } else { 0.5 * (s - root) };
        [Multiplier::real(big), Multiplier::real(1.0 / big)]
    } else {
        let re = 0.5 * s;
        let im = 0.5 * (-disc).sqrt();
        [Multiplier { re, im }, Multiplier { re, im: -im }]
    };
    let degenerate = multipliers.iter().all(|z| z.distance_to_one() <= margin);
    let verdict = if !degenerate && transverse_pair[0].modulus() >= 1.0 + margin {
        FloquetVerdict::Hyperbolic
    } else {
        FloquetVerdict::NonHyperbolic
    };
    MonodromyResult {
        matrix,
        multipliers,
        transverse_pair,
        verdict,
        degenerate,
        determinant,
        period,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks;
    use crate::model::ModelSpec;

    #[test]
    fn free_motion_is_a_straight_line() {
        let model = Model::new(benchmarks::flat_torus()).unwrap();
        let p0 = PhasePoint::new([0.3, 0.0], [0.2, 1.0]);
        let traj = integrate_el(&model, p0, 2.0, 128, 1e-12).unwrap();
        let last = traj.end_lift;
        assert!((last[0] - (0.3 + 0.4)).abs() < 1e-13);
        assert!((last[1] - 2.0).abs() < 1e-13);
        assert!(traj.max_energy_drift() < 1e-15);
    }

    #[test]
    fn ridge_symmetry_plane_is_invariant() {
        let model = Model::new(benchmarks::separable_ridge(0.1)).unwrap();
        let v2 = (2.0f64 * (1.0 - 0.1)).sqrt();
        let period = TAU / v2;
        let traj =
            integrate_el_adaptive(&model, PhasePoint::new([0.0, 0.0], [0.0, v2]), period, &Settings::default())
                .unwrap();
        for s in &traj.states {
            let d = if s.x[0] > std::f64::consts::PI { s.x[0] - TAU } else { s.x[0] };
            assert!(d.abs() < 1e-8);
        }
        assert_eq!(traj.winding, [0, 1]);
        assert!(traj.max_energy_drift() < 1e-8);
    }

    #[test]
    fn rejects_bad_arguments() {
        let model = Model::new(benchmarks::flat_torus()).unwrap();
        let p0 = PhasePoint::new([0.0, 0.0], [0.0, 1.0]);
        assert!(integrate_el(&model, p0, 1.0, 10, 1e-8).is_err());
        assert!(integrate_el(&model, p0, -1.0, 100, 1e-8).is_err());
    }

    #[test]
    fn too_coarse_integration_reports_drift() {
        let model = Model::new(ModelSpec::new(
            crate::model::KineticTable::identity(),
            crate::fourier::FourierSeries::mode(1, 1, 0.8, 0.0),
        ))
        .unwrap();
        let p0 = PhasePoint::new([0.2, 0.1], [1.3, 2.1]);
        let err = integrate_el(&model, p0, 40.0, 64, 1e-12).unwrap_err();
        assert!(matches!(err, OrbitError::EnergyDriftExceeded { .. }));
    }

    #[test]
    fn free_torus_monodromy_is_unipotent() {
        let model = Model::new(benchmarks::flat_torus()).unwrap();
        let v2 = 2f64.sqrt();
        let traj = integrate_el(&model, PhasePoint::new([1.0, 0.0], [0.0, v2]), TAU / v2, 256, 1e-10)
            .unwrap();
        let mono = monodromy(&model, &traj, &Settings::default()).unwrap();
        for z in &mono.multipliers {
            assert!(z.distance_to_one() < 1e-6);
        }
        assert!(mono.degenerate);
        assert_eq!(mono.verdict, FloquetVerdict::NonHyperbolic);
        assert!((mono.determinant - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ridge_monodromy_matches_linearization() {
        let eps0 = 0.1;
        let model = Model::new(benchmarks::separable_ridge(eps0)).unwrap();
        let v2 = (2.0f64 * (1.0 - eps0)).sqrt();
        let period = TAU / v2;
        let settings = Settings::default();
        let traj =
            integrate_el_adaptive(&model, PhasePoint::new([0.0, 0.0], [0.0, v2]), period, &settings).unwrap();
        let mono = monodromy(&model, &traj, &settings).unwrap();
        let expected = (eps0.sqrt() * period).exp();
        let got = mono.transverse_modulus();
        assert!((got / expected - 1.0).abs() < 1e-6, "{got} vs {expected}");
        assert_eq!(mono.verdict, FloquetVerdict::Hyperbolic);
        assert!((mono.determinant - 1.0).abs() < 1e-8);
        // reciprocal pairs
        for a in &mono.multipliers {
            assert!(mono
                .multipliers
                .iter()
                .any(|b| { let p = a.times(b); (p.re - 1.0).hypot(p.im) < 1e-6 }));
        }
    }

    #[test]
    fn open_orbit_is_rejected() {
        let model = Model::new(benchmarks::flat_torus()).unwrap();
        let traj = integrate_el(&model, PhasePoint::new([0.0, 0.0], [0.1, 1.0]), 3.0, 128, 1e-10).unwrap();
        assert!(matches!(
            monodromy(&model, &traj, &Settings::default()),
            Err(OrbitError::NotClosed(_))
        ));
    }
}
