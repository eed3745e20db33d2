//! Minimal periodic orbits of Tonelli Lagrangians on the two-torus.
//!
//! The pipeline reduces the autonomous system at a fixed energy to a
//! time-periodic one-degree-of-freedom Lagrangian, discretizes closed curves
//! as broken geodesics, and certifies the hyperbolicity of minimal orbits
//! twice: through the spectrum of the cyclic Jacobi matrix of the discrete
//! action, and through the Floquet multipliers of the full flow.

pub mod action;
pub mod benchmarks;
pub mod classify;
pub mod continuation;
pub mod dynamics;
pub mod error;
pub mod fourier;
pub mod model;
pub mod ode;
pub mod par;
pub mod perturbation;
pub mod reduction;
pub mod settings;

pub use dynamics::{
    integrate_el, integrate_el_adaptive, monodromy, FloquetVerdict, MonodromyResult, Multiplier,
    PhasePoint, Trajectory,
};
pub use error::{OrbitError, Result};
pub use fourier::{FourierSeries, FourierTerm, Jet};
pub use model::{KineticTable, Model, ModelSpec, ValidationReport};
pub use reduction::{Orientation, ReducedSystem, Strip};
pub use settings::Settings;
pub use classify::{find_minima, find_minima_full, ActionProfile, MinimizerRecord, Verdict};
pub use continuation::{global_structure, Branch, CrossingEvent, GlobalStructure, ReducedFamily};
pub use perturbation::{monte_carlo_nondegeneracy, FourierPerturbation, MonteCarloConfig, MonteCarloReport};
