use serde::{Deserialize, Serialize};

use crate::error::{OrbitError, Result};

/// Numerical parameters shared by the whole pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Settings {
    /// Number of sub-arcs of the broken geodesic.
    pub m: usize,
    /// Upper bound for the m-doubling schedule.
    pub m_max: usize,
    /// RK4 steps per sub-arc; kept even for Simpson quadrature.
    pub steps_per_arc: usize,
    /// Interior nodes of the direct-method initializer.
    pub direct_nodes: usize,
    pub shoot_tolerance: f64,
    pub max_shoot_iterations: usize,
    /// Max-norm tolerance on the discrete Euler–Lagrange residual.
    pub residual_tolerance: f64,
    pub max_newton_iterations: usize,
    /// Largest Newton step (radians) on any configuration node.
    pub max_newton_step: f64,
    /// Largest admissible `|x' − x|` for a sub-arc.
    pub max_gap: f64,
    pub profile_points: usize,
    /// `λ₀ > degeneracy_threshold·λ₁` is non-degenerate.
    pub degeneracy_threshold: f64,
    /// Floquet modulus must exceed `1 + hyperbolicity_margin`.
    pub hyperbolicity_margin: f64,
    pub tie_tolerance: f64,
    pub dedup_distance: f64,
    pub closure_tolerance: f64,
    /// RK4 steps per period for the full 2-DOF flow.
    pub orbit_steps: usize,
    pub drift_tolerance: f64,
    pub max_doublings: usize,
    /// Audit a continuation every this many steps.
    pub audit_every: usize,
    pub crossing_resolution: f64,
    /// Smallest continuation step as a fraction of `dE`.
    pub min_step_fraction: f64,
    /// Largest jump of `x*` accepted between continuation steps.
    pub max_branch_jump: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            m: 32,
            m_max: 128,
            steps_per_arc: 16,
            direct_nodes: 16,
            shoot_tolerance: 1e-13,
            max_shoot_iterations: 40,
            residual_tolerance: 1e-10,
            max_newton_iterations: 60,
            max_newton_step: 0.5,
            max_gap: 1.5,
            profile_points: 256,
            degeneracy_threshold: 1e-6,
            hyperbolicity_margin: 1e-4,
            tie_tolerance: 1e-9,
            dedup_distance: 1e-6,
            closure_tolerance: 1e-6,
            orbit_steps: 2048,
            drift_tolerance: 1e-8,
            max_doublings: 6,
            audit_every: 10,
            crossing_resolution: 1e-8,
            min_step_fraction: 1.0 / 64.0,
            max_branch_jump: 0.25,
        }
    }
}

impl Settings {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("shoot_tolerance", self.shoot_tolerance),
            ("residual_tolerance", self.residual_tolerance),
            ("max_newton_step", self.max_newton_step),
            ("max_gap", self.max_gap),
            ("degeneracy_threshold", self.degeneracy_threshold),
            ("hyperbolicity_margin", self.hyperbolicity_margin),
            ("tie_tolerance", self.tie_tolerance),
            ("dedup_distance", self.dedup_distance),
            ("closure_tolerance", self.closure_tolerance),
            ("drift_tolerance", self.drift_tolerance),
            ("crossing_resolution", self.crossing_resolution),
            ("min_step_fraction", self.min_step_fraction),
            ("max_branch_jump", self.max_branch_jump),
        ];
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(OrbitError::InvalidConfig(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        if self.m < 3 {
            return Err(OrbitError::InvalidConfig(format!("m must be >= 3, got {}", self.m)));
        }
        if self.m_max < self.m {
            return Err(OrbitError::InvalidConfig("m_max must be >= m".into()));
        }
        if self.steps_per_arc < 2 || self.steps_per_arc % 2 != 0 {
            return Err(OrbitError::InvalidConfig(format!(
                "steps_per_arc must be even and >= 2, got {}",
                self.steps_per_arc
            )));
        }
        if self.direct_nodes < 1 {
            return Err(OrbitError::InvalidConfig("direct_nodes must be >= 1".into()));
        }
        if self.profile_points < 8 {
            return Err(OrbitError::InvalidConfig("profile_points must be >= 8".into()));
        }
        if self.orbit_steps < 64 {
            return Err(OrbitError::InvalidConfig("orbit_steps must be >= 64".into()));
        }
        if self.audit_every == 0 {
            return Err(OrbitError::InvalidConfig("audit_every must be >= 1".into()));
        }
        Ok(())
    }

    /// Same settings with a different number of sub-arcs.
    pub fn with_m(&self, m: usize) -> Self {
        Self {
            m,
            ..self.clone()
        }
    }
}
