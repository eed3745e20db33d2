//! Benchmark models with known minimal orbits.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::fourier::{FourierSeries, FourierTerm};
use crate::model::{KineticTable, ModelSpec};

/// `A = I`, `U = eps0·cos x1`. The line `x1 = 0` is the ridge.
pub fn separable_ridge(eps0: f64) -> ModelSpec {
    ModelSpec::new(KineticTable::identity(), FourierSeries::mode(1, 0, eps0, 0.0))
}

/// `A = I`, `U = eps0·cos 2x1`: two symmetric ridges at 0 and π.
pub fn double_ridge(eps0: f64) -> ModelSpec {
    ModelSpec::new(KineticTable::identity(), FourierSeries::mode(2, 0, eps0, 0.0))
}

/// `A = I`, `U ≡ 0`.
pub fn flat_torus() -> ModelSpec {
    ModelSpec::new(KineticTable::identity(), FourierSeries::zero())
}

/// Ridges at `x1 = 0` and `x1 = π` with potential heights `h0`, `h_pi` and
/// kinetic weights `a22(0) = a0`, `a22(π) = a_pi`.
///
/// `U = c1 cos x1 + c2 cos 2x1` and `a22 = (a0 + a_pi)/2 + (a0 − a_pi)/2 · cos x1`,
/// so both lines are critical. The straight orbit on the ridge at `c` has
/// reduced action `2π √(2 a22(c) (E − U(c)))`; when `a0 ≠ a_pi` the two
/// actions exchange order at a single energy.
pub fn two_ridge(h0: f64, h_pi: f64, a0: f64, a_pi: f64) -> ModelSpec {
    let c1 = 0.5 * (h0 - h_pi);
    let c2 = 0.5 * (h0 + h_pi);
    let kinetic = KineticTable {
        a11: FourierSeries::constant(1.0),
        a12: FourierSeries::zero(),
        a22: FourierSeries::from_terms(vec![
            FourierTerm::from((0, 0, 0.5 * (a0 + a_pi), 0.0)),
            FourierTerm::from((1, 0, 0.5 * (a0 - a_pi), 0.0)),
        ]),
    };
    let potential = FourierSeries::from_terms(vec![
        FourierTerm::from((1, 0, c1, 0.0)),
        FourierTerm::from((2, 0, c2, 0.0)),
    ]);
    ModelSpec::new(kinetic, potential)
}

/// The asymmetric two-ridge benchmark: exchange of the global minimum at `E = 1.2`.
pub fn asymmetric_two_ridge() -> ModelSpec {
    two_ridge(0.2, 0.1, 1.1, 1.0)
}

/// Reduced action of the straight ridge orbit, `2π √(2 a22 (E − h))`.
pub fn straight_orbit_action(a22: f64, height: f64, energy: f64) -> f64 {
    std::f64::consts::TAU * (2.0 * a22 * (energy - height)).sqrt()
}

/// A seeded random model together with an energy for it.
///
/// The potential carries a dominant `x1` mode of amplitude in `[0.08, 0.2]`
/// plus weak `x2`-dependent terms, and the kinetic matrix is a small
/// perturbation of the identity. Energies are drawn from `[1, 2]`.
pub fn random_model(seed: u64) -> (ModelSpec, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let small = |rng: &mut ChaCha8Rng, amp: f64| rng.gen_range(-amp..amp);
    let kinetic = KineticTable {
        a11: FourierSeries::from_terms(vec![
            FourierTerm::from((0, 0, 1.0, 0.0)),
            FourierTerm::from((1, 0, small(&mut rng, 0.05), small(&mut rng, 0.05))),
            FourierTerm::from((0, 1, small(&mut rng, 0.05), small(&mut rng, 0.05))),
        ]),
        a12: FourierSeries::mode(1, 1, small(&mut rng, 0.03), small(&mut rng, 0.03)),
        a22: FourierSeries::from_terms(vec![
            FourierTerm::from((0, 0, 1.0, 0.0)),
            FourierTerm::from((1, -1, small(&mut rng, 0.05), small(&mut rng, 0.05))),
        ]),
    };
    let amplitude = rng.gen_range(0.08..0.2);
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let potential = FourierSeries::from_terms(vec![
        FourierTerm::from((1, 0, amplitude * phase.cos(), amplitude * phase.sin())),
        FourierTerm::from((2, 0, small(&mut rng, 0.02), small(&mut rng, 0.02))),
        FourierTerm::from((1, 1, small(&mut rng, 0.02), small(&mut rng, 0.02))),
        FourierTerm::from((0, 1, small(&mut rng, 0.02), small(&mut rng, 0.02))),
    ]);
    let energy = rng.gen_range(1.0..2.0);
    (ModelSpec::new(kinetic, potential), energy)
}
