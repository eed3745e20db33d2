//! Isoenergetic reduction to a time-periodic system with one degree of freedom.
//!
//! On the energy level `H = E`, with `x2` playing the role of time `τ`, the
//! momentum `y2` is solved from `H(x1, τ, y1, y2) = E` on the branch
//! `∂H/∂y2 > 0`. The reduced Hamiltonian is `H̄(x1, y1, τ) = −y2` and the
//! reduced Lagrangian is `L̄ = ẋ1·y1 − H̄`, where `ẋ1 = dx1/dτ = ∂H̄/∂y1`.
//! With this orientation `L̄` is strictly convex in `ẋ1` and `∫L̄ dτ` is the
//! Maupertuis action `∫⟨y, dx⟩` of the closed curve.
//!
//! Orbits that run towards decreasing `x2` are handled by reducing the model
//! pulled back through `x2 ↦ −x2` ([`Orientation::Backward`]).

use serde::{Deserialize, Serialize};

use crate::error::{OrbitError, Result};
use crate::fourier::FourierSeries;
use crate::model::{HamiltonianJet, Model};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Orientation {
    /// `τ = x2`
    #[default]
    Forward,
    /// `τ = −x2`
    Backward,
}

/// Admissible band of lifted `x1` values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Strip {
    pub lo: f64,
    pub hi: f64,
}

impl Strip {
    pub fn full() -> Self {
        Self {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn contains(&self, x1: f64) -> bool {
        x1 >= self.lo && x1 <= self.hi
    }

    pub fn is_full(&self) -> bool {
        self.lo == f64::NEG_INFINITY && self.hi == f64::INFINITY
    }
}

impl Default for Strip {
    fn default() -> Self {
        Self::full()
    }
}

/// Smallest `∂H/∂y2` accepted on the selected root.
const BRANCH_FLOOR: f64 = 1e-10;

/// Derivatives of `H̄(x1, y1, τ)` in `(x1, y1)` at fixed `τ`, plus root data.
#[derive(Debug, Clone, Copy)]
pub struct HbarJet {
    pub value: f64,
    pub hx: f64,
    pub hy: f64,
    pub hxx: f64,
    pub hxy: f64,
    pub hyy: f64,
    /// The solved momentum `y2`.
    pub y2: f64,
    /// `∂H/∂y2` at the root, i.e. `dx2/dt`.
    pub dh_dy2: f64,
}

impl HbarJet {
    /// `dx1/dτ`
    pub fn velocity(&self) -> f64 {
        self.hy
    }

    /// Real time per unit of `τ`.
    pub fn dt_dtau(&self) -> f64 {
        1.0 / self.dh_dy2
    }
}

/// Derivatives of `L̄(x1, ẋ1, τ)` at fixed `τ`.
#[derive(Debug, Clone, Copy)]
pub struct LbarJet {
    pub value: f64,
    pub lx: f64,
    /// `∂L̄/∂ẋ = y1`
    pub lv: f64,
    pub lxx: f64,
    pub lxv: f64,
    pub lvv: f64,
}

#[derive(Debug, Clone)]
pub struct ReducedSystem {
    model: Model,
    oriented: Model,
    energy: f64,
    strip: Strip,
    orientation: Orientation,
}

impl ReducedSystem {
    pub fn new(model: &Model, energy: f64, strip: Strip, orientation: Orientation) -> Result<Self> {
        if !energy.is_finite() {
            return Err(OrbitError::InvalidConfig(format!("energy must be finite, got {energy}")));
        }
        if !(strip.lo < strip.hi) {
            return Err(OrbitError::InvalidConfig(format!(
                "strip must satisfy lo < hi, got [{}, {}]",
                strip.lo, strip.hi
            )));
        }
        let oriented = match orientation {
            Orientation::Forward => model.clone(),
            Orientation::Backward => model.reflected_x2()?,
        };
        let rs = Self {
            model: model.clone(),
            oriented,
            energy,
            strip,
            orientation,
        };
        rs.check_shell()?;
        Ok(rs)
    }

    /// Forward orientation on the whole circle.
    pub fn simple(model: &Model, energy: f64) -> Result<Self> {
        Self::new(model, energy, Strip::full(), Orientation::Forward)
    }

    fn check_shell(&self) -> Result<()> {
        let n = 64;
        let (lo, hi) = if self.strip.is_full() {
            (0.0, std::f64::consts::TAU)
        } else {
            (self.strip.lo, self.strip.hi)
        };
        let mut min_v = f64::INFINITY;
        for i in 0..=n {
            let x1 = lo + (hi - lo) * i as f64 / n as f64;
            for j in 0..n {
                let tau = std::f64::consts::TAU * j as f64 / n as f64;
                min_v = min_v.min(self.oriented.potential([x1, tau]));
            }
        }
        if self.energy <= min_v {
            return Err(OrbitError::InvalidConfig(format!(
                "energy {} does not exceed the potential minimum {min_v} on the strip",
                self.energy
            )));
        }
        Ok(())
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    /// The model in the coordinates where `τ = x2`.
    pub fn oriented_model(&self) -> &Model {
        &self.oriented
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn strip(&self) -> Strip {
        self.strip
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    /// The same reduction at another energy.
    pub fn at_energy(&self, energy: f64) -> Result<Self> {
        Self::new(&self.model, energy, self.strip, self.orientation)
    }

    /// The reduction of `L − eps·p` at the same energy.
    pub fn with_added_potential(&self, p: &FourierSeries, eps: f64) -> Result<Self> {
        Self::new(
            &self.model.with_added_potential(p, eps)?,
            self.energy,
            self.strip,
            self.orientation,
        )
    }

    /// Torus point in the user's coordinates for reduced coordinates `(x1, τ)`.
    pub fn torus_point(&self, x1: f64, tau: f64) -> [f64; 2] {
        match self.orientation {
            Orientation::Forward => [x1, tau],
            Orientation::Backward => [x1, -tau],
        }
    }

    fn shell(&self, x1: f64, y1: f64, tau: f64) -> Result<(f64, HamiltonianJet)> {
        let (y2, jet) = self
            .oriented
            .energy_shell_jet([x1, tau], y1, self.energy)
            .ok_or(OrbitError::OutsideEnergyShell { x1, y1, tau })?;
        if !(jet.grad[3] > BRANCH_FLOOR) {
            return Err(OrbitError::BranchViolation(jet.grad[3]));
        }
        Ok((y2, jet))
    }

    /// `H̄(x1, y1, τ)`: the value with `H(x1, τ, y1, −H̄) = E` on the branch
    /// `∂H/∂y2 > 0`, polished by Newton until the back-substitution residual
    /// is below `1e−12`.
    pub fn solve_hbar(&self, x1: f64, y1: f64, tau: f64) -> Result<f64> {
        let (mut y2, _) = self.shell(x1, y1, tau)?;
        let x = [x1, tau];
        for _ in 0..5 {
            let jet = self.oriented.hamiltonian_jet(x, [y1, y2]);
            let residual = jet.value - self.energy;
            if residual.abs() < 1e-12 * (1.0 + self.energy.abs()) {
                break;
            }
            y2 -= residual / jet.grad[3];
        }
        let dh = self.oriented.hamiltonian_jet(x, [y1, y2]).grad[3];
        if !(dh > BRANCH_FLOOR) {
            return Err(OrbitError::BranchViolation(dh));
        }
        Ok(-y2)
    }

    /// `G = −(∂H/∂y2)⁻¹` at the root.
    pub fn g_factor(&self, x1: f64, y1: f64, tau: f64) -> Result<f64> {
        let (_, jet) = self.shell(x1, y1, tau)?;
        Ok(-1.0 / jet.grad[3])
    }

    /// Derivatives of `H̄` by implicit differentiation of `H(x1, τ, y1, y2) = E`.
    pub fn hbar_jet(&self, x1: f64, y1: f64, tau: f64) -> Result<HbarJet> {
        let (y2, jet) = self.shell(x1, y1, tau)?;
        let g = &jet.grad;
        let h = &jet.hess;
        let h3 = g[3];
        // z ordering: x1 = 0, x2 = 1, y1 = 2, y2 = 3
        let yx = -g[0] / h3;
        let yy = -g[2] / h3;
        let yxx = -(h[0][0] + 2.0 * h[0][3] * yx + h[3][3] * yx * yx) / h3;
        let yyy = -(h[2][2] + 2.0 * h[2][3] * yy + h[3][3] * yy * yy) / h3;
        let yxy = -(h[0][2] + h[0][3] * yy + h[2][3] * yx + h[3][3] * yx * yy) / h3;
        Ok(HbarJet {
            value: -y2,
            hx: -yx,
            hy: -yy,
            hxx: -yxx,
            hxy: -yxy,
            hyy: -yyy,
            y2,
            dh_dy2: h3,
        })
    }

    /// Solve `ẋ = ∂H̄/∂y1(x1, y1, τ)` for `y1` by damped Newton.
    pub fn momentum_for_velocity(&self, x1: f64, xdot: f64, tau: f64, guess: f64) -> Result<f64> {
        let fail = |reason: String| OrbitError::MomentumSolveFailure { xdot, reason };
        let mut y = guess;
        let mut jet = match self.hbar_jet(x1, y, tau) {
            Ok(j) => j,
            Err(_) => {
                y = 0.0;
                self.hbar_jet(x1, y, tau).map_err(|e| fail(e.to_string()))?
            }
        };
        for _ in 0..80 {
            let residual = jet.hy - xdot;
            if residual.abs() <= 1e-14 * (1.0 + xdot.abs()) {
                return Ok(y);
            }
            if !(jet.hyy > 0.0) {
                return Err(fail(format!("non-convex reduced Hamiltonian (H̄_yy = {})", jet.hyy)));
            }
            let mut step = residual / jet.hyy;
            let mut accepted = false;
            for _ in 0..60 {
                match self.hbar_jet(x1, y - step, tau) {
                    Ok(next) => {
                        y -= step;
                        jet = next;
                        accepted = true;
                        break;
                    }
                    Err(_) => step *= 0.5,
                }
            }
            if !accepted {
                return Err(fail("step cannot stay inside the energy shell".into()));
            }
            if step.abs() <= 1e-16 * (1.0 + y.abs()) {
                return Ok(y);
            }
        }
        let residual = jet.hy - xdot;
        if residual.abs() <= 1e-10 * (1.0 + xdot.abs()) {
            Ok(y)
        } else {
            Err(fail(format!("residual {residual:.3e} after iteration budget")))
        }
    }

    /// `L̄(x1, ẋ1, τ)` and the momentum `y1` that realizes it.
    pub fn reduced_lagrangian(&self, x1: f64, xdot: f64, tau: f64) -> Result<(f64, f64)> {
        let jet = self.lbar_jet(x1, xdot, tau, 0.0)?;
        Ok((jet.value, jet.lv))
    }

    /// `L̄` with first and second derivatives, obtained through the Legendre duality
    /// with `H̄`. `guess` seeds the momentum solve.
    pub fn lbar_jet(&self, x1: f64, xdot: f64, tau: f64, guess: f64) -> Result<LbarJet> {
        let y = self.momentum_for_velocity(x1, xdot, tau, guess)?;
        let h = self.hbar_jet(x1, y, tau)?;
        Ok(LbarJet {
            value: xdot * y - h.value,
            lx: -h.hx,
            lv: y,
            lxx: -h.hxx + h.hxy * h.hxy / h.hyy,
            lxv: -h.hxy / h.hyy,
            lvv: 1.0 / h.hyy,
        })
    }

    /// Reduced Hamiltonian vector field `(∂H̄/∂y, −∂H̄/∂x)` at time `τ`.
    pub fn vector_field(&self, x1: f64, y1: f64, tau: f64) -> Result<[f64; 2]> {
        let j = self.hbar_jet(x1, y1, tau)?;
        Ok([j.hy, -j.hx])
    }

    /// Reduced flow over `[tau0, tau1]` with the action `∫L̄ dτ`, the elapsed
    /// real time and the linearized map, optionally recording samples.
    pub fn flow(
        &self,
        tau0: f64,
        tau1: f64,
        x1: f64,
        y1: f64,
        steps: usize,
        record: bool,
    ) -> Result<ReducedFlow> {
        let h = (tau1 - tau0) / steps as f64;
        let mut state = [x1, y1, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0];
        let mut samples = Vec::with_capacity(if record { steps + 1 } else { 0 });
        let field = |tau: f64, s: &[f64; 8]| -> Result<([f64; 8], f64)> {
            let j = self.hbar_jet(s[0], s[1], tau)?;
            let (a, b, c, d) = (j.hxy, j.hyy, -j.hxx, -j.hxy);
            let dt = 1.0 / j.dh_dy2;
            Ok((
                [
                    j.hy,
                    -j.hx,
                    s[1] * j.hy - j.value,
                    dt,
                    a * s[4] + b * s[6],
                    a * s[5] + b * s[7],
                    c * s[4] + d * s[6],
                    c * s[5] + d * s[7],
                ],
                dt,
            ))
        };
        let axpy = |y: &[f64; 8], t: f64, k: &[f64; 8]| {
            let mut out = *y;
            for i in 0..8 {
                out[i] += t * k[i];
            }
            out
        };
        let mut tau = tau0;
        let (mut k1, mut dt) = field(tau, &state)?;
        for k in 0..=steps {
            if !self.strip.contains(state[0]) {
                return Err(OrbitError::StripExit(state[0]));
            }
            if record {
                samples.push(ArcSample {
                    tau,
                    x: state[0],
                    y: state[1],
                    dt_dtau: dt,
                });
            }
            if k == steps {
                break;
            }
            // classical RK4; the first stage doubles as the sample above
            let (k2, _) = field(tau + 0.5 * h, &axpy(&state, 0.5 * h, &k1))?;
            let (k3, _) = field(tau + 0.5 * h, &axpy(&state, 0.5 * h, &k2))?;
            let (k4, _) = field(tau + h, &axpy(&state, h, &k3))?;
            for i in 0..8 {
                state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            tau = if k + 1 == steps { tau1 } else { tau0 + (k + 1) as f64 * h };
            if k + 1 < steps || record {
                (k1, dt) = field(tau, &state)?;
            }
        }
        Ok(ReducedFlow {
            x: state[0],
            y: state[1],
            action: state[2],
            time: state[3],
            jacobian: [[state[4], state[5]], [state[6], state[7]]],
            samples,
        })
    }
}

/// A sample of a reduced arc.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArcSample {
    pub tau: f64,
    pub x: f64,
    pub y: f64,
    /// `1/(∂H/∂y2) = −G`
    pub dt_dtau: f64,
}

#[derive(Debug, Clone)]
pub struct ReducedFlow {
    pub x: f64,
    pub y: f64,
    pub action: f64,
    pub time: f64,
    /// `∂(x, y)_end / ∂(x, y)_start`
    pub jacobian: [[f64; 2]; 2],
    pub samples: Vec<ArcSample>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks;
    use crate::model::{KineticTable, ModelSpec};
    use crate::fourier::FourierTerm;

    fn ridge(eps0: f64, energy: f64) -> ReducedSystem {
        let model = Model::new(benchmarks::separable_ridge(eps0)).unwrap();
        ReducedSystem::simple(&model, energy).unwrap()
    }

    fn coupled() -> ReducedSystem {
        let spec = ModelSpec {
            kinetic: KineticTable {
                a11: FourierSeries::from_terms(vec![
                    FourierTerm::from((0, 0, 1.1, 0.0)),
                    FourierTerm::from((1, 1, 0.1, 0.05)),
                ]),
                a12: FourierSeries::mode(1, 0, 0.08, 0.03),
                a22: FourierSeries::from_terms(vec![
                    FourierTerm::from((0, 0, 0.95, 0.0)),
                    FourierTerm::from((0, 1, 0.05, -0.04)),
                ]),
            },
            potential: FourierSeries::from_terms(vec![
                FourierTerm::from((1, 0, 0.12, 0.03)),
                FourierTerm::from((1, -1, 0.02, 0.01)),
            ]),
            perturbation: FourierSeries::zero(),
            epsilon: 0.0,
            cutoff: 4,
        };
        ReducedSystem::simple(&Model::new(spec).unwrap(), 1.3).unwrap()
    }

    #[test]
    fn separable_root_matches_closed_form() {
        let rs = ridge(0.1, 1.0);
        for &(x1, y1) in &[(0.0, 0.0), (0.5, 0.3), (2.0, -0.8)] {
            let hbar = rs.solve_hbar(x1, y1, 0.7).unwrap();
            let y2 = (2.0 * (1.0 - 0.1 * f64::cos(x1)) - y1 * y1).sqrt();
            assert!((hbar + y2).abs() < 1e-13);
            let back = rs.oriented_model().hamiltonian([x1, 0.7], [y1, -hbar]);
            assert!((back - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn outside_shell_is_reported() {
        let rs = ridge(0.1, 1.0);
        assert!(matches!(
            rs.solve_hbar(0.0, 1.5, 0.0),
            Err(OrbitError::OutsideEnergyShell { .. })
        ));
    }

    #[test]
    fn g_factor_closed_form_and_sign() {
        let rs = ridge(0.1, 1.0);
        let x1: f64 = 0.8;
        let y2 = (2.0 * (1.0 - 0.1 * x1.cos())).sqrt();
        assert!((rs.g_factor(x1, 0.0, 0.0).unwrap() + 1.0 / y2).abs() < 1e-14);
        let rs = coupled();
        for i in 0..20 {
            let x1 = 0.31 * i as f64;
            let y1 = 0.05 * (i as f64 - 10.0);
            let g = rs.g_factor(x1, y1, 0.2 * i as f64).unwrap();
            assert!(g < 0.0);
            let jet = rs.hbar_jet(x1, y1, 0.2 * i as f64).unwrap();
            assert!((g.abs() * jet.dh_dy2 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hbar_jet_matches_finite_differences() {
        let rs = coupled();
        let (x1, y1, tau) = (0.4, 0.25, 1.3);
        let j = rs.hbar_jet(x1, y1, tau).unwrap();
        let hb = |x: f64, y: f64| rs.hbar_jet(x, y, tau).unwrap();
        let h = 1e-5;
        let fx = (hb(x1 + h, y1).value - hb(x1 - h, y1).value) / (2.0 * h);
        let fy = (hb(x1, y1 + h).value - hb(x1, y1 - h).value) / (2.0 * h);
        assert!((fx - j.hx).abs() < 1e-8);
        assert!((fy - j.hy).abs() < 1e-8);
        let fxx = (hb(x1 + h, y1).hx - hb(x1 - h, y1).hx) / (2.0 * h);
        let fyy = (hb(x1, y1 + h).hy - hb(x1, y1 - h).hy) / (2.0 * h);
        let fxy = (hb(x1, y1 + h).hx - hb(x1, y1 - h).hx) / (2.0 * h);
        assert!((fxx - j.hxx).abs() < 1e-7);
        assert!((fyy - j.hyy).abs() < 1e-7);
        assert!((fxy - j.hxy).abs() < 1e-7);
    }

    #[test]
    fn symmetric_point_has_zero_momentum() {
        let rs = ridge(0.1, 1.0);
        let (_, y) = rs.reduced_lagrangian(0.0, 0.0, 0.3).unwrap();
        assert!(y.abs() < 1e-14);
        let (_, y) = rs.reduced_lagrangian(std::f64::consts::PI, 0.0, 0.3).unwrap();
        assert!(y.abs() < 1e-14);
    }

    #[test]
    fn reduced_lagrangian_is_convex() {
        let rs = coupled();
        let m_l = rs.model().m_l();
        let h = 1e-3;
        for i in 0..25 {
            let x1 = 0.25 * i as f64;
            let v = -0.6 + 0.05 * i as f64;
            let tau = 0.4 * i as f64;
            let l = |v: f64| rs.reduced_lagrangian(x1, v, tau).unwrap().0;
            let second = (l(v + h) - 2.0 * l(v) + l(v - h)) / (h * h);
            assert!(second >= 0.5 * m_l, "second difference {second} at sample {i}");
            let jet = rs.lbar_jet(x1, v, tau, 0.0).unwrap();
            assert!((jet.lvv - second).abs() < 1e-4 * jet.lvv);
        }
    }

    #[test]
    fn backward_orientation_reduces_reflected_model() {
        let model = Model::new(benchmarks::separable_ridge(0.1)).unwrap();
        let rs = ReducedSystem::new(&model, 1.0, Strip::full(), Orientation::Backward).unwrap();
        assert_eq!(rs.torus_point(0.3, 0.5), [0.3, -0.5]);
        assert!((rs.solve_hbar(0.2, 0.1, 0.4).unwrap() - ridge(0.1, 1.0).solve_hbar(0.2, 0.1, -0.4).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn energy_below_potential_is_rejected() {
        let model = Model::new(benchmarks::separable_ridge(0.1)).unwrap();
        assert!(ReducedSystem::simple(&model, -0.5).is_err());
    }

    #[test]
    fn strip_exit_is_detected() {
        let model = Model::new(benchmarks::separable_ridge(0.1)).unwrap();
        let rs = ReducedSystem::new(&model, 1.0, Strip { lo: -0.1, hi: 0.1 }, Orientation::Forward).unwrap();
        assert!(matches!(rs.flow(0.0, 1.0, 0.0, 0.5, 32, false), Err(OrbitError::StripExit(_))));
    }
}
