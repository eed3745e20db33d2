//! First-order response of the action profile to potential perturbations.

use std::f64::consts::{PI, TAU};

use log::{debug, info};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::{evaluate_configuration, Configuration, SubArcResult};
use crate::classify::{inner_solve, linear_fit, ActionProfile, InnerSolution};
use crate::continuation::{global_structure, ReducedFamily};
use crate::error::{OrbitError, Result};
use crate::fourier::{FourierSeries, FourierTerm};
use crate::model::Model;
use crate::par;
use crate::reduction::ReducedSystem;
use crate::settings::Settings;

/// `ε Σ_{ℓ=1,2} (A_ℓ cos ℓx₁ + B_ℓ sin ℓx₁)` with coefficients in `[1, 2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierPerturbation {
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
    pub epsilon: f64,
}

impl FourierPerturbation {
    pub fn new(a1: f64, b1: f64, a2: f64, b2: f64, epsilon: f64) -> Result<Self> {
        for (name, v) in [("A1", a1), ("B1", b1), ("A2", a2), ("B2", b2)] {
            if !(1.0..=2.0).contains(&v) {
                return Err(OrbitError::InvalidConfig(format!("{name} = {v} lies outside [1, 2]")));
            }
        }
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(OrbitError::InvalidConfig(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(Self { a1, b1, a2, b2, epsilon })
    }

    /// Uniform sample from the cube.
    pub fn sample<R: Rng>(rng: &mut R, epsilon: f64) -> Self {
        let mut c = || rng.gen_range(1.0..=2.0);
        Self {
            a1: c(),
            b1: c(),
            a2: c(),
            b2: c(),
            epsilon,
        }
    }

    pub fn params(&self) -> [f64; 4] {
        [self.a1, self.b1, self.a2, self.b2]
    }

    /// The unscaled potential; independent of `x2`.
    pub fn as_potential(&self) -> FourierSeries {
        FourierSeries::from_terms(vec![
            FourierTerm::from((1, 0, self.a1, self.b1)),
            FourierTerm::from((2, 0, self.a2, self.b2)),
        ])
    }

    pub fn apply(&self, model: &Model) -> Result<Model> {
        model.with_added_potential(&self.as_potential(), self.epsilon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSample {
    pub x: f64,
    pub energy: f64,
    pub value: f64,
    /// Richardson estimate of the quadrature error.
    pub quadrature_error: f64,
    /// Size of the nonlinear remainder, filled in by [`first_order_check`].
    pub remainder_estimate: Option<f64>,
}

fn simpson(f: &[f64], h: f64) -> f64 {
    let n = f.len() - 1;
    debug_assert!(n % 2 == 0 && n >= 2);
    let mut s = f[0] + f[n];
    for (i, v) in f.iter().enumerate().take(n).skip(1) {
        s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    s * h / 3.0
}

/// `∫ G·P dτ` over the stored samples of every sub-arc.
fn kernel_quadrature(rs: &ReducedSystem, arcs: &[SubArcResult], p: &FourierSeries) -> f64 {
    arcs.iter()
        .map(|a| {
            let n = a.arc.len();
            let h = (a.arc[n - 1].tau - a.arc[0].tau) / (n - 1) as f64;
            let f: Vec<f64> = a
                .arc
                .iter()
                .map(|s| -s.dt_dtau * p.value(rs.torus_point(s.x, s.tau)))
                .collect();
            simpson(&f, h)
        })
        .sum()
}

/// The inner minimizer over `x0`, or `NonUniqueMinimizer` when competing
/// starts end on distinct configurations of equal action.
pub fn unique_minimizer(rs: &ReducedSystem, x0: f64, settings: &Settings) -> Result<InnerSolution> {
    let m = settings.m;
    let starts: Vec<Configuration> = [0.0, 0.75, -0.75]
        .iter()
        .map(|&bow| {
            let pts = (0..m).map(|i| x0 + bow * (PI * i as f64 / m as f64).sin()).collect();
            Configuration::new(pts, rs.energy())
        })
        .collect();
    let found: Vec<InnerSolution> = starts
        .iter()
        .filter_map(|c| inner_solve(rs, x0, c, settings).ok())
        .collect();
    let best = found
        .iter()
        .min_by(|a, b| a.action().total_cmp(&b.action()))
        .cloned()
        .ok_or_else(|| OrbitError::NoMinimumFound(format!("no inner minimizer over x0 = {x0}")))?;
    let tie = 1e-9 * best.action().abs().max(1.0);
    for other in &found {
        let distance = other
            .configuration
            .points
            .iter()
            .zip(&best.configuration.points)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if distance > 1e-4 && (other.action() - best.action()).abs() <= tie {
            return Err(OrbitError::NonUniqueMinimizer(x0));
        }
    }
    Ok(best)
}

/// `𝒦_E P(x₀)` with a quadrature error estimate.
pub fn kernel_sample(rs: &ReducedSystem, x0: f64, p: &FourierSeries, settings: &Settings) -> Result<KernelSample> {
    let sol = unique_minimizer(rs, x0, settings)?;
    kernel_on(rs, &sol, p, settings)
}

/// The kernel along an already solved minimizer.
pub fn kernel_on(rs: &ReducedSystem, sol: &InnerSolution, p: &FourierSeries, settings: &Settings) -> Result<KernelSample> {
    let coarse = kernel_quadrature(rs, &sol.arcs, p);
    let fine_settings = Settings {
        steps_per_arc: 2 * settings.steps_per_arc,
        ..settings.clone()
    };
    let fine_arcs = evaluate_configuration(&sol.configuration, rs, &fine_settings, Some(&sol.arcs))?;
    let fine = kernel_quadrature(rs, &fine_arcs, p);
    Ok(KernelSample {
        x: sol.base(),
        energy: rs.energy(),
        value: fine + (fine - coarse) / 15.0,
        quadrature_error: (fine - coarse).abs() / 15.0,
        remainder_estimate: None,
    })
}

/// `𝒦_E P(x₀)`.
#[allow(non_snake_case)]
pub fn kernel_K(rs: &ReducedSystem, x0: f64, p: &FourierSeries, settings: &Settings) -> Result<f64> {
    Ok(kernel_sample(rs, x0, p, settings)?.value)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FirstOrderEntry {
    pub epsilon: f64,
    pub action: f64,
    /// `F_ε − F − ε𝒦P`
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FirstOrderReport {
    pub kernel: KernelSample,
    pub base_action: f64,
    pub entries: Vec<FirstOrderEntry>,
    /// Log-log slope of `|residual|` against `ε`.
    pub fitted_order: f64,
}

/// Compare `F` of `L + εP` with its first-order prediction for each `ε`.
pub fn first_order_check(
    rs: &ReducedSystem,
    x0: f64,
    p: &FourierSeries,
    eps_list: &[f64],
    settings: &Settings,
) -> Result<FirstOrderReport> {
    let base = unique_minimizer(rs, x0, settings)?;
    let mut kernel = kernel_on(rs, &base, p, settings)?;
    let f0 = base.action();
    let entries = par::map(eps_list.len(), |k| -> Result<FirstOrderEntry> {
        let eps = eps_list[k];
        if eps == 0.0 {
            return Ok(FirstOrderEntry { epsilon: 0.0, action: f0, residual: 0.0 });
        }
        let perturbed = rs.with_added_potential(p, eps)?;
        let sol = inner_solve(&perturbed, x0, &base.configuration, settings)?;
        Ok(FirstOrderEntry {
            epsilon: eps,
            action: sol.action(),
            residual: sol.action() - f0 - eps * kernel.value,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> = entries
        .iter()
        .filter(|e| e.epsilon > 0.0 && e.residual != 0.0)
        .map(|e| (e.epsilon.ln(), e.residual.abs().ln()))
        .collect();
    let fitted_order = if pts.len() >= 2 { linear_fit(&pts).0 } else { f64::NAN };
    kernel.remainder_estimate = entries
        .iter()
        .filter(|e| e.epsilon > 0.0)
        .map(|e| e.residual.abs() / e.epsilon)
        .reduce(f64::max);
    Ok(FirstOrderReport {
        kernel,
        base_action: f0,
        entries,
        fitted_order,
    })
}

/// `(u_ℓ, v_ℓ)` on `x_grid` from `𝒦 cos ℓx₁ = u cos ℓx − v sin ℓx` and
/// `𝒦 sin ℓx₁ = u sin ℓx + v cos ℓx`.
pub fn fourier_response(rs: &ReducedSystem, x_grid: &[f64], ell: i32, settings: &Settings) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(ell == 1 || ell == 2) {
        return Err(OrbitError::InvalidConfig(format!("ell must be 1 or 2, got {ell}")));
    }
    let cos_lift = FourierSeries::mode(ell, 0, 1.0, 0.0);
    let sin_lift = FourierSeries::mode(ell, 0, 0.0, 1.0);
    let pairs = par::map(x_grid.len(), |j| -> Result<(f64, f64)> {
        let x = x_grid[j];
        let sol = unique_minimizer(rs, x, settings)?;
        let kc = kernel_on(rs, &sol, &cos_lift, settings)?.value;
        let ks = kernel_on(rs, &sol, &sin_lift, settings)?.value;
        Ok(response_from_kernels(kc, ks, ell as f64 * x))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(pairs.into_iter().unzip())
}

/// Solve the 2×2 system for `(u, v)` given the two kernel values at phase `θ = ℓx`.
pub fn response_from_kernels(kc: f64, ks: f64, theta: f64) -> (f64, f64) {
    let m = nalgebra::Matrix2::new(theta.cos(), -theta.sin(), theta.sin(), theta.cos());
    let uv = m
        .lu()
        .solve(&nalgebra::Vector2::new(kc, ks))
        .expect("rotation matrices are invertible");
    (uv[0], uv[1])
}

/// `12⁻¹ max |∂⁴F|` from five-point differences on the profile grid.
pub fn quartic_constant(profile: &ActionProfile) -> f64 {
    let v = &profile.values;
    let n = v.len();
    if n < 5 {
        return 0.0;
    }
    let h = TAU / n as f64;
    let at = |j: isize| v[j.rem_euclid(n as isize) as usize];
    let max = (0..n as isize)
        .map(|j| (at(j - 2) - 4.0 * at(j - 1) + 6.0 * at(j) - 4.0 * at(j + 1) + at(j + 2)).abs())
        .fold(0.0, f64::max);
    max / h.powi(4) / 12.0
}

/// `Osc_I F ≥ M|I|⁴` on the grid points of `interval`. `M` defaults to
/// [`quartic_constant`]. A numerically flat interval never passes.
pub fn osc_criterion(profile: &ActionProfile, interval: [f64; 2], m: Option<f64>) -> bool {
    let [a, b] = interval;
    if !(b > a) {
        return false;
    }
    let inside: Vec<f64> = profile
        .base_points
        .iter()
        .zip(&profile.values)
        .filter(|(x, _)| a + (*x - a).rem_euclid(TAU) <= b)
        .map(|(_, f)| *f)
        .collect();
    if inside.len() < 2 {
        return false;
    }
    let hi = inside.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = inside.iter().copied().fold(f64::INFINITY, f64::min);
    let osc = hi - lo;
    if osc <= 1e-12 * lo.abs().max(1.0) {
        return false;
    }
    let m = m.unwrap_or_else(|| quartic_constant(profile));
    osc >= m * (b - a).powi(4)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub epsilon: f64,
    pub n_samples: usize,
    pub energy_range: [f64; 2],
    pub de: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleFailure {
    pub index: usize,
    pub params: [f64; 4],
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub fraction: f64,
    pub ci: [f64; 2],
    pub failures: Vec<SampleFailure>,
    pub seed: u64,
    pub n_samples: usize,
    pub epsilon: f64,
    pub energy_range: [f64; 2],
    pub de: f64,
    pub threshold: f64,
    /// Smallest `λ₀/λ₁` over the global minimizers of each sample; `None` on error.
    pub min_ratios: Vec<Option<f64>>,
}

impl MonteCarloReport {
    /// Pass fraction under another degeneracy threshold.
    pub fn fraction_at(&self, threshold: f64) -> f64 {
        let pass = self.min_ratios.iter().filter(|r| r.is_some_and(|r| r > threshold)).count();
        pass as f64 / self.n_samples as f64
    }
}

/// Wilson score interval at 95%.
pub fn wilson_interval(successes: usize, n: usize) -> [f64; 2] {
    if n == 0 {
        return [0.0, 1.0];
    }
    let z = 1.96f64;
    let nf = n as f64;
    let p = successes as f64 / nf;
    let denom = 1.0 + z * z / nf;
    let centre = (p + z * z / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / denom;
    [(centre - half).max(0.0), (centre + half).min(1.0)]
}

/// Fraction of random Fourier perturbations of `base` whose global
/// minimizers are non-degenerate over the whole energy range.
pub fn monte_carlo_nondegeneracy(base: &Model, cfg: &MonteCarloConfig, settings: &Settings) -> Result<MonteCarloReport> {
    if cfg.n_samples == 0 {
        return Err(OrbitError::InvalidConfig("n_samples must be positive".into()));
    }
    if cfg.n_samples < 100 {
        debug!("only {} Monte Carlo samples", cfg.n_samples);
    }
    if !(cfg.epsilon > 0.0) {
        return Err(OrbitError::InvalidConfig(format!("epsilon must be positive, got {}", cfg.epsilon)));
    }
    crate::continuation::energy_grid(cfg.energy_range, cfg.de)?;
    settings.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let samples: Vec<FourierPerturbation> = (0..cfg.n_samples)
        .map(|_| FourierPerturbation::sample(&mut rng, cfg.epsilon))
        .collect();
    let outcomes = par::map(samples.len(), |i| -> Result<f64> {
        let model = samples[i].apply(base)?;
        let g = global_structure(&ReducedFamily::simple(&model), cfg.energy_range, cfg.de, settings)?;
        Ok(g.min_ground_ratio())
    });
    let mut failures = Vec::new();
    let mut min_ratios = Vec::with_capacity(samples.len());
    for (i, (outcome, sample)) in outcomes.into_iter().zip(&samples).enumerate() {
        match outcome {
            Ok(r) => {
                if !(r > settings.degeneracy_threshold) {
                    failures.push(SampleFailure {
                        index: i,
                        params: sample.params(),
                        reason: format!("λ₀/λ₁ = {r:.3e}"),
                    });
                }
                min_ratios.push(Some(r));
            }
            Err(e) => {
                failures.push(SampleFailure {
                    index: i,
                    params: sample.params(),
                    reason: e.to_string(),
                });
                min_ratios.push(None);
            }
        }
    }
    let passes = cfg.n_samples - failures.len();
    let fraction = passes as f64 / cfg.n_samples as f64;
    info!("{passes}/{} samples non-degenerate", cfg.n_samples);
    Ok(MonteCarloReport {
        fraction,
        ci: wilson_interval(passes, cfg.n_samples),
        failures,
        seed: cfg.seed,
        n_samples: cfg.n_samples,
        epsilon: cfg.epsilon,
        energy_range: cfg.energy_range,
        de: cfg.de,
        threshold: settings.degeneracy_threshold,
        min_ratios,
    })
}
