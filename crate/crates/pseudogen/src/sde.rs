//! Time integration of Hamiltonian, Langevin, Smoluchowski, and
//! generalized-coordinate Smoluchowski dynamics, plus equilibrium sampling
//! and the momentum-relaxation kernel.
//!
//! Noise amplitudes are always derived from the friction through
//! `σσᵀ = 2γ/β`; no integrator takes an independent noise input.

use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::small;
use crate::potentials::{Domain, Potential, PotentialModel};

/// Simulation parameters shared by all integrators.
///
/// `gamma` and `mass` are symmetric positive definite; they must commute
/// so that the momentum relaxation `exp(−γM⁻¹t)` stays symmetric. Scalars
/// enter as multiples of the identity.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub dim: usize,
    pub beta: f64,
    pub gamma: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    pub dt: f64,
    pub n_steps: usize,
    pub master_seed: u64,
}

impl SimConfig {
    /// Scalar friction and unit mass in `dim` dimensions.
    pub fn isotropic(dim: usize, beta: f64, gamma: f64, dt: f64) -> Self {
        SimConfig {
            dim,
            beta,
            gamma: DMatrix::identity(dim, dim) * gamma,
            mass: DMatrix::identity(dim, dim),
            dt,
            n_steps: 0,
            master_seed: 0,
        }
    }

    pub fn with_mass(mut self, mass: DMatrix<f64>) -> Self {
        self.mass = mass;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn with_steps(mut self, n: usize) -> Self {
        self.n_steps = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta <= 0.0 {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if self.dt <= 0.0 {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.gamma.nrows() != self.dim || self.mass.nrows() != self.dim {
            return Err(Error::Config("gamma/mass dimension mismatch".into()));
        }
        if self.mass.clone().cholesky().is_none() {
            return Err(Error::NotSpd { name: "mass" });
        }
        // gamma = 0 (pure Hamiltonian dynamics) is allowed; otherwise SPD.
        let gnorm = self.gamma.norm();
        if gnorm > 0.0 && self.gamma.clone().cholesky().is_none() {
            return Err(Error::NotSpd { name: "gamma" });
        }
        let minv = self
            .mass
            .clone()
            .try_inverse()
            .ok_or(Error::NotSpd { name: "mass" })?;
        let a = &self.gamma * &minv;
        let skew = (&a - a.transpose()).norm();
        if skew > 1e-10 * (1.0 + a.norm()) {
            return Err(Error::Config(
                "gamma and mass must commute (gamma * mass^-1 symmetric)".into(),
            ));
        }
        Ok(())
    }
}

/// Phase point and elapsed time.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub t: f64,
}

impl SimState {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Self {
        SimState { q, p, t: 0.0 }
    }

    pub fn at_rest(q: Vec<f64>) -> Self {
        let d = q.len();
        SimState { q, p: vec![0.0; d], t: 0.0 }
    }
}

/// Total energy `H = ½ pᵀM⁻¹p + V(q)`.
pub fn hamiltonian(state: &SimState, cfg: &SimConfig, model: &dyn Potential) -> f64 {
    let minv = cfg.mass.clone().try_inverse().expect("mass not invertible");
    let p = nalgebra::DVector::from_column_slice(&state.p);
    0.5 * p.dot(&(&minv * &p)) + model.energy(&state.q)
}

fn check_finite(grad: &[f64], q: &[f64]) -> Result<()> {
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite { what: "force", position: q.to_vec() });
    }
    Ok(())
}

/// BAOAB splitting for the Langevin equation.
///
/// The O-step applies the exact Ornstein-Uhlenbeck update
/// `p ← E p + L ξ` with `E = exp(−γM⁻¹ dt)` and `L Lᵀ = (M − E M Eᵀ)/β`,
/// so with `γ = 0` the scheme reduces exactly to velocity Verlet.
pub struct LangevinStepper {
    dim: usize,
    half_dt: f64,
    dt: f64,
    minv: Vec<f64>,
    relax: Vec<f64>,
    noise_l: Vec<f64>,
    has_noise: bool,
    grad: Vec<f64>,
    grad_fresh: bool,
    scratch: Vec<f64>,
    scratch2: Vec<f64>,
}

impl LangevinStepper {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.dim;
        let minv_m = cfg
            .mass
            .clone()
            .try_inverse()
            .ok_or(Error::NotSpd { name: "mass" })?;
        let a = &cfg.gamma * &minv_m;
        let relax_m = (-a * cfg.dt).exp();
        // Momentum covariance after one O-step: (M − E M Eᵀ)/β.
        let sigma = (&cfg.mass - &relax_m * &cfg.mass * relax_m.transpose()) / cfg.beta;
        let has_noise = sigma.norm() > 0.0;
        let noise_l = if has_noise {
            sigma
                .clone()
                .cholesky()
                .ok_or(Error::NotSpd { name: "O-step covariance" })?
                .l()
        } else {
            DMatrix::zeros(d, d)
        };
        let to_flat = |m: &DMatrix<f64>| {
            let mut out = vec![0.0; d * d];
            for i in 0..d {
                for j in 0..d {
                    out[i * d + j] = m[(i, j)];
                }
            }
            out
        };
        Ok(LangevinStepper {
            dim: d,
            half_dt: 0.5 * cfg.dt,
            dt: cfg.dt,
            minv: to_flat(&minv_m),
            relax: to_flat(&relax_m),
            noise_l: to_flat(&noise_l),
            has_noise,
            grad: vec![0.0; d],
            grad_fresh: false,
            scratch: vec![0.0; d],
            scratch2: vec![0.0; d],
        })
    }

    /// Advances `state` by one BAOAB step.
    pub fn step<R: Rng>(
        &mut self,
        state: &mut SimState,
        model: &dyn Potential,
        rng: &mut R,
    ) -> Result<()> {
        let d = self.dim;
        let domain = model.domain();

        // B: half kick. The gradient cached from the previous step's final
        // B is still valid because q has not moved since.
        if !self.grad_fresh {
            model.gradient(&state.q, &mut self.grad);
            check_finite(&self.grad, &state.q)?;
        }
        for i in 0..d {
            state.p[i] -= self.half_dt * self.grad[i];
        }

        // A: half drift.
        small::matvec(&self.minv, &state.p, &mut self.scratch, d);
        for i in 0..d {
            state.q[i] += self.half_dt * self.scratch[i];
        }
        domain.fold(&mut state.q, Some(&mut state.p));

        // O: exact momentum relaxation plus fluctuation.
        small::matvec(&self.relax, &state.p, &mut self.scratch, d);
        if self.has_noise {
            for z in self.scratch2.iter_mut() {
                *z = rng.sample(StandardNormal);
            }
            for i in 0..d {
                let mut noise = 0.0;
                for j in 0..=i {
                    noise += self.noise_l[i * d + j] * self.scratch2[j];
                }
                state.p[i] = self.scratch[i] + noise;
            }
        } else {
            state.p.copy_from_slice(&self.scratch);
        }

        // A: half drift.
        small::matvec(&self.minv, &state.p, &mut self.scratch, d);
        for i in 0..d {
            state.q[i] += self.half_dt * self.scratch[i];
        }
        domain.fold(&mut state.q, Some(&mut state.p));

        // B: half kick with a fresh gradient, cached for the next step.
        model.gradient(&state.q, &mut self.grad);
        check_finite(&self.grad, &state.q)?;
        for i in 0..d {
            state.p[i] -= self.half_dt * self.grad[i];
        }
        self.grad_fresh = true;

        state.t += self.dt;
        Ok(())
    }

    /// Invalidates the gradient cache (call after moving `q` externally).
    pub fn reset_cache(&mut self) {
        self.grad_fresh = false;
    }
}

/// One BAOAB step; convenience wrapper that rebuilds coefficients.
pub fn step_langevin<R: Rng>(
    state: &SimState,
    cfg: &SimConfig,
    model: &dyn Potential,
    rng: &mut R,
) -> Result<SimState> {
    let mut stepper = LangevinStepper::new(cfg)?;
    let mut next = state.clone();
    stepper.step(&mut next, model, rng)?;
    Ok(next)
}

/// Euler-Maruyama scheme for the Smoluchowski equation
/// `γ dq = −∇V dt + σ dw`; momenta are ignored.
pub struct SmoluchowskiStepper {
    dim: usize,
    dt: f64,
    drift: Vec<f64>,   // dt · γ⁻¹
    noise_l: Vec<f64>, // Cholesky factor of 2 dt γ⁻¹ / β
    grad: Vec<f64>,
    z: Vec<f64>,
}

impl SmoluchowskiStepper {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.dim;
        let ginv = cfg
            .gamma
            .clone()
            .try_inverse()
            .ok_or(Error::NotSpd { name: "gamma" })?;
        let cov = &ginv * (2.0 * cfg.dt / cfg.beta);
        let l = cov
            .cholesky()
            .ok_or(Error::NotSpd { name: "gamma" })?
            .l();
        let mut drift = vec![0.0; d * d];
        let mut noise_l = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                drift[i * d + j] = cfg.dt * ginv[(i, j)];
                noise_l[i * d + j] = l[(i, j)];
            }
        }
        Ok(SmoluchowskiStepper {
            dim: d,
            dt: cfg.dt,
            drift,
            noise_l,
            grad: vec![0.0; d],
            z: vec![0.0; d],
        })
    }

    pub fn step<R: Rng>(
        &mut self,
        state: &mut SimState,
        model: &dyn Potential,
        rng: &mut R,
    ) -> Result<()> {
        let d = self.dim;
        model.gradient(&state.q, &mut self.grad);
        check_finite(&self.grad, &state.q)?;
        for z in self.z.iter_mut() {
            *z = rng.sample(StandardNormal);
        }
        for i in 0..d {
            let mut dq = 0.0;
            for j in 0..d {
                dq -= self.drift[i * d + j] * self.grad[j];
            }
            for j in 0..=i {
                dq += self.noise_l[i * d + j] * self.z[j];
            }
            state.q[i] += dq;
        }
        model.domain().fold(&mut state.q, None);
        state.t += self.dt;
        Ok(())
    }
}

/// One Euler-Maruyama Smoluchowski step; convenience wrapper.
pub fn step_smoluchowski<R: Rng>(
    state: &SimState,
    cfg: &SimConfig,
    model: &dyn Potential,
    rng: &mut R,
) -> Result<SimState> {
    let mut stepper = SmoluchowskiStepper::new(cfg)?;
    let mut next = state.clone();
    stepper.step(&mut next, model, rng)?;
    Ok(next)
}

/// Coefficient supplier for the Smoluchowski equation in generalized
/// coordinates: position-dependent friction, the geometric Itô drift, and
/// the pulled-back potential gradient. Implemented by `geometry`.
pub trait GeneralizedDynamics: Send + Sync {
    fn dim(&self) -> usize;
    fn domain(&self) -> &Domain;
    /// Writes `γ(u)` row-major into `out` (`dim*dim` entries).
    fn friction(&self, u: &[f64], out: &mut [f64]);
    /// Writes the geometric drift `g(u)` into `out`.
    fn geometric_drift(&self, u: &[f64], out: &mut [f64]);
    /// Writes `∇(V∘Φ)(u)` into `out`.
    fn potential_gradient(&self, u: &[f64], out: &mut [f64]);
}

/// Euler-Maruyama scheme for `γ(u) du = (−∇V(u) + g(u)) dt + σ(u) dw`
/// with `σ(u)σ(u)ᵀ = 2γ(u)/β`.
pub struct GeneralizedStepper {
    dim: usize,
    dt: f64,
    beta: f64,
    gamma: Vec<f64>,
    rhs: Vec<f64>,
    drift: Vec<f64>,
    noise: Vec<f64>,
    grad: Vec<f64>,
}

impl GeneralizedStepper {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        if cfg.beta <= 0.0 || cfg.dt <= 0.0 {
            return Err(Error::Config("beta and dt must be positive".into()));
        }
        let d = cfg.dim;
        Ok(GeneralizedStepper {
            dim: d,
            dt: cfg.dt,
            beta: cfg.beta,
            gamma: vec![0.0; d * d],
            rhs: vec![0.0; d],
            drift: vec![0.0; d],
            noise: vec![0.0; d],
            grad: vec![0.0; d],
        })
    }

    pub fn step<R: Rng>(
        &mut self,
        state: &mut SimState,
        dynamics: &dyn GeneralizedDynamics,
        rng: &mut R,
    ) -> Result<()> {
        let d = self.dim;
        dynamics.friction(&state.q, &mut self.gamma);
        if !small::cholesky_in_place(&mut self.gamma, d) {
            return Err(Error::Geometry(format!(
                "friction not positive definite at u = {:?}",
                state.q
            )));
        }
        // self.gamma now holds the Cholesky factor L of γ(u).
        dynamics.potential_gradient(&state.q, &mut self.grad);
        check_finite(&self.grad, &state.q)?;
        dynamics.geometric_drift(&state.q, &mut self.drift);

        // Drift: solve γ x = (−∇V + g) dt.
        for i in 0..d {
            self.rhs[i] = (self.drift[i] - self.grad[i]) * self.dt;
        }
        small::solve_cholesky(&self.gamma, &mut self.rhs, d);

        // Noise: cov(L⁻ᵀ z) = γ⁻¹, scaled by sqrt(2 dt / β).
        let amp = (2.0 * self.dt / self.beta).sqrt();
        for z in self.noise.iter_mut() {
            *z = rng.sample(StandardNormal);
        }
        small::solve_lower_transpose(&self.gamma, &mut self.noise, d);

        for i in 0..d {
            state.q[i] += self.rhs[i] + amp * self.noise[i];
        }
        dynamics.domain().fold(&mut state.q, None);
        state.t += self.dt;
        Ok(())
    }
}

/// One generalized-coordinate Smoluchowski step; convenience wrapper.
pub fn step_generalized_smoluchowski<R: Rng>(
    state: &SimState,
    cfg: &SimConfig,
    dynamics: &dyn GeneralizedDynamics,
    rng: &mut R,
) -> Result<SimState> {
    let mut stepper = GeneralizedStepper::new(cfg)?;
    let mut next = state.clone();
    stepper.step(&mut next, dynamics, rng)?;
    Ok(next)
}

/// Options for [`sample_canonical`].
#[derive(Debug, Clone)]
pub struct SamplerOptions {
    pub n_chains: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub target_acceptance: f64,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        SamplerOptions {
            n_chains: 8,
            burn_in: 1000,
            thinning: 10,
            target_acceptance: 0.4,
        }
    }
}

/// Diagnostics from the equilibrium sampler, surfaced in run manifests.
#[derive(Debug, Clone, Default)]
pub struct SamplerReport {
    pub acceptance_rates: Vec<f64>,
    pub proposal_widths: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Draws `n` phase points from the canonical density: positions by a
/// Metropolis random walk targeting `f_Q`, momenta exactly from the
/// Gaussian `f_P` with covariance `M/β`. Position and momentum draws are
/// independent.
///
/// Chains run over disjoint RNG streams and are merged in chain order, so
/// the output is independent of the thread count.
pub fn sample_canonical(
    n: usize,
    cfg: &SimConfig,
    model: &PotentialModel,
    opts: &SamplerOptions,
) -> Result<(Vec<SimState>, SamplerReport)> {
    if n == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    cfg.validate()?;
    let d = cfg.dim;
    let n_chains = opts.n_chains.max(1).min(n);
    let mass_l = cfg
        .mass
        .clone()
        .cholesky()
        .ok_or(Error::NotSpd { name: "mass" })?
        .l();
    let p_scale = 1.0 / cfg.beta.sqrt();

    let per_chain: Vec<usize> = (0..n_chains)
        .map(|c| n / n_chains + usize::from(c < n % n_chains))
        .collect();

    let chains: Vec<(Vec<SimState>, f64, f64)> = crate::parallel::indexed_map(n_chains, |c| {
        let mut rng = crate::rng::stream(cfg.master_seed, c as u64);
        let want = per_chain[c];
        let domain = model.domain();
        // Deterministic spread of chain starts across the domain.
        let frac = (c as f64 + 0.5) / n_chains as f64;
        let mut q: Vec<f64> = domain
            .axes
            .iter()
            .map(|ax| ax.lo + frac * ax.len())
            .collect();
        let mut energy = model.energy(&q);
        let mut width: f64 = 0.25 * domain.axes.iter().map(|ax| ax.len()).fold(f64::INFINITY, f64::min);

        let mut accepted = 0usize;
        let mut proposed = 0usize;
        let mut window_accepted = 0usize;
        let propose = |q: &[f64], width: f64, rng: &mut rand_chacha::ChaCha8Rng| {
            let mut cand: Vec<f64> = q
                .iter()
                .map(|&qi| qi + width * rng.sample::<f64, _>(StandardNormal))
                .collect();
            domain.fold(&mut cand, None);
            cand
        };

        // Burn-in with multiplicative width adaptation towards the target
        // acceptance rate; the width is frozen afterwards.
        for step in 0..opts.burn_in {
            let cand = propose(&q, width, &mut rng);
            let cand_energy = model.energy(&cand);
            let log_ratio = -cfg.beta * (cand_energy - energy);
            if log_ratio >= 0.0 || rng.gen::<f64>() < log_ratio.exp() {
                q = cand;
                energy = cand_energy;
                window_accepted += 1;
            }
            if (step + 1) % 100 == 0 {
                let rate = window_accepted as f64 / 100.0;
                if rate > opts.target_acceptance + 0.05 {
                    width *= 1.15;
                } else if rate < opts.target_acceptance - 0.05 {
                    width /= 1.15;
                }
                window_accepted = 0;
            }
        }

        let mut out = Vec::with_capacity(want);
        while out.len() < want {
            for _ in 0..opts.thinning {
                let cand = propose(&q, width, &mut rng);
                let cand_energy = model.energy(&cand);
                let log_ratio = -cfg.beta * (cand_energy - energy);
                proposed += 1;
                if log_ratio >= 0.0 || rng.gen::<f64>() < log_ratio.exp() {
                    q = cand;
                    energy = cand_energy;
                    accepted += 1;
                }
            }
            // Independent exact Gaussian momentum draw.
            let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let mut p = vec![0.0; d];
            for i in 0..d {
                for j in 0..=i {
                    p[i] += mass_l[(i, j)] * z[j] * p_scale;
                }
            }
            out.push(SimState::new(q.clone(), p));
        }
        let rate = if proposed > 0 {
            accepted as f64 / proposed as f64
        } else {
            0.0
        };
        (out, rate, width)
    });

    let mut samples = Vec::with_capacity(n);
    let mut report = SamplerReport::default();
    for (c, (chain, rate, width)) in chains.into_iter().enumerate() {
        samples.extend(chain);
        if !(0.1..=0.9).contains(&rate) {
            report
                .warnings
                .push(format!("chain {c}: acceptance rate {rate:.3} outside [0.1, 0.9]"));
        }
        report.acceptance_rates.push(rate);
        report.proposal_widths.push(width);
    }
    Ok((samples, report))
}

/// Momentum marginal `f_P(p)` of the canonical density.
pub fn momentum_density(p: &[f64], cfg: &SimConfig) -> f64 {
    let d = cfg.dim;
    let minv = cfg.mass.clone().try_inverse().expect("mass not invertible");
    let pv = nalgebra::DVector::from_column_slice(p);
    let quad = pv.dot(&(&minv * &pv));
    let det_m = cfg.mass.determinant();
    let norm = (2.0 * std::f64::consts::PI / cfg.beta).powf(d as f64 / 2.0) * det_m.sqrt();
    (-0.5 * cfg.beta * quad).exp() / norm
}

/// Ornstein-Uhlenbeck relaxation kernel `K(t, p, r)`: the density at `p`
/// after time `t` of pure momentum dynamics started at `r`, with mean
/// `exp(−γM⁻¹t) r` and covariance `β⁻¹ M (id − exp(−2γM⁻¹t))`. Converges
/// pointwise to `f_P(p)` as `t → ∞`.
pub fn ou_kernel(t: f64, p: &[f64], r: &[f64], cfg: &SimConfig) -> Result<f64> {
    if t <= 0.0 {
        return Err(Error::Config(format!("ou_kernel requires t > 0, got {t}")));
    }
    cfg.validate()?;
    let d = cfg.dim;
    let minv = cfg
        .mass
        .clone()
        .try_inverse()
        .ok_or(Error::NotSpd { name: "mass" })?;
    let a = &cfg.gamma * &minv;
    let relax = (-&a * t).exp();
    let cov = (&cfg.mass - (&a * (-2.0 * t)).exp() * &cfg.mass) / cfg.beta;
    let chol = cov
        .clone()
        .cholesky()
        .ok_or(Error::NotSpd { name: "OU covariance" })?;
    let mean = &relax * nalgebra::DVector::from_column_slice(r);
    let diff = nalgebra::DVector::from_column_slice(p) - mean;
    let sol = chol.solve(&diff);
    let quad = diff.dot(&sol);
    let det = chol.determinant();
    let norm = (2.0 * std::f64::consts::PI).powf(d as f64 / 2.0) * det.sqrt();
    Ok((-0.5 * quad).exp() / norm)
}

/// Writes rows `t, q1..qd, p1..pd` for every `stride`-th state.
pub fn write_trajectory_csv<W: Write>(
    out: &mut W,
    dim: usize,
    states: &[SimState],
    stride: usize,
) -> Result<()> {
    let stride = stride.max(1);
    let mut header = String::from("t");
    for i in 1..=dim {
        header.push_str(&format!(",q{i}"));
    }
    for i in 1..=dim {
        header.push_str(&format!(",p{i}"));
    }
    writeln!(out, "{header}")?;
    for state in states.iter().step_by(stride) {
        let mut row = format!("{}", state.t);
        for v in &state.q {
            row.push_str(&format!(",{v}"));
        }
        for v in &state.p {
            row.push_str(&format!(",{v}"));
        }
        writeln!(out, "{row}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{
        builtin_flat_periodic, builtin_periodic_double_well, BoltzmannDensity, Harmonic1d,
        Polynomial1d,
    };
    use crate::stats;
    use approx::assert_relative_eq;
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    use std::sync::Arc;

    #[test]
    fn frictionless_langevin_conserves_energy() {
        // Harmonic oscillator over one full period.
        let model: PotentialModel = Arc::new(Harmonic1d::new(1.0, 0.0, -8.0, 8.0));
        let cfg = SimConfig::isotropic(1, 1.0, 0.0, 1e-3);
        let mut stepper = LangevinStepper::new(&cfg).unwrap();
        let mut state = SimState::new(vec![1.0], vec![0.0]);
        let h0 = hamiltonian(&state, &cfg, model.as_ref());
        let mut rng = crate::rng::stream(0, 0);
        let steps = (2.0 * std::f64::consts::PI / cfg.dt) as usize;
        let mut max_drift: f64 = 0.0;
        for _ in 0..steps {
            stepper.step(&mut state, model.as_ref(), &mut rng).unwrap();
            let h = hamiltonian(&state, &cfg, model.as_ref());
            max_drift = max_drift.max(((h - h0) / h0).abs());
        }
        assert!(max_drift < 1e-4, "energy drift {max_drift}");
    }

    #[test]
    fn frictionless_langevin_is_velocity_verlet() {
        let model: PotentialModel = Arc::new(Harmonic1d::new(1.3, 0.2, -8.0, 8.0));
        let cfg = SimConfig::isotropic(1, 1.0, 0.0, 1e-3);
        let mut stepper = LangevinStepper::new(&cfg).unwrap();
        let mut state = SimState::new(vec![0.7], vec![-0.3]);
        let mut rng = crate::rng::stream(0, 0);

        let (mut q, mut p) = (0.7_f64, -0.3_f64);
        let grad = |q: f64| 1.3 * (q - 0.2);
        for _ in 0..1000 {
            stepper.step(&mut state, model.as_ref(), &mut rng).unwrap();
            // Reference velocity-Verlet step.
            p -= 0.5 * cfg.dt * grad(q);
            q += cfg.dt * p;
            p -= 0.5 * cfg.dt * grad(q);
        }
        assert_relative_eq!(state.q[0], q, epsilon = 1e-9);
        assert_relative_eq!(state.p[0], p, epsilon = 1e-9);
    }

    #[test]
    fn fixed_point_without_force_and_noise() {
        let model = builtin_flat_periodic(1);
        let cfg = SimConfig::isotropic(1, 1.0, 0.0, 1e-3);
        let state = SimState::new(vec![0.4], vec![0.0]);
        let mut rng = crate::rng::stream(0, 0);
        let next = step_langevin(&state, &cfg, model.as_ref(), &mut rng).unwrap();
        assert_eq!(next.q, state.q);
        assert_eq!(next.p, state.p);
        assert_relative_eq!(next.t, 1e-3);
    }

    #[test]
    fn langevin_double_well_histogram_matches_boltzmann() {
        let model = builtin_periodic_double_well();
        let cfg = SimConfig::isotropic(1, 1.0, 5.0, 1e-3);
        let density = BoltzmannDensity::new(&model, cfg.beta).unwrap();
        let mut stepper = LangevinStepper::new(&cfg).unwrap();
        let mut rng = crate::rng::stream(100, 0);
        let mut state = SimState::new(vec![0.318], vec![0.0]);
        let bins = 64;
        let mut counts = vec![0.0; bins];
        let n_steps = 10_000_000;
        for _ in 0..n_steps {
            stepper.step(&mut state, model.as_ref(), &mut rng).unwrap();
            let idx = ((state.q[0] * bins as f64) as usize).min(bins - 1);
            counts[idx] += 1.0;
        }
        for c in counts.iter_mut() {
            *c /= n_steps as f64;
        }
        let dist = stats::l1_histogram_distance(&counts, 0.0, 1.0, |x| density.eval(&[x]));
        assert!(dist < 0.05, "L1 distance to f_Q: {dist}");
    }

    #[test]
    fn smoluchowski_pure_diffusion_increments() {
        // Flat potential on a huge box so no reflections occur.
        let model: PotentialModel = Arc::new(Polynomial1d::new(vec![0.0], -1e6, 1e6));
        let cfg = SimConfig::isotropic(1, 1.0, 1.0, 1e-3);
        let mut stepper = SmoluchowskiStepper::new(&cfg).unwrap();
        let mut rng = crate::rng::stream(7, 0);
        let mut state = SimState::at_rest(vec![0.0]);
        let n = 100_000;
        let var = 2.0 * cfg.dt / cfg.beta;
        let mut sum = 0.0;
        let mut chi2 = 0.0;
        let mut prev = state.q[0];
        for _ in 0..n {
            stepper.step(&mut state, model.as_ref(), &mut rng).unwrap();
            let inc = state.q[0] - prev;
            prev = state.q[0];
            sum += inc;
            chi2 += inc * inc / var;
        }
        // Mean within 4 sigma.
        let se = (var * n as f64).sqrt();
        assert!(sum.abs() < 4.0 * se, "increment mean {} vs se {se}", sum / n as f64);
        // Two-sided chi-squared test on the variance, p > 0.001.
        let dist = ChiSquared::new(n as f64).unwrap();
        let cdf = dist.cdf(chi2);
        let p = 2.0 * cdf.min(1.0 - cdf);
        assert!(p > 0.001, "chi2 p-value {p}");
    }

    #[test]
    fn smoluchowski_double_well_histogram_matches_boltzmann() {
        // gamma = 5 keeps the effective Euler-Maruyama step dt/gamma small
        // enough for the stiff wells of this potential (|V''| ~ 240).
        let model = builtin_periodic_double_well();
        let cfg = SimConfig::isotropic(1, 1.0, 5.0, 1e-3);
        let density = BoltzmannDensity::new(&model, cfg.beta).unwrap();
        let mut stepper = SmoluchowskiStepper::new(&cfg).unwrap();
        let mut rng = crate::rng::stream(8, 0);
        let mut state = SimState::at_rest(vec![0.318]);
        let bins = 64;
        let mut counts = vec![0.0; bins];
        let n_steps = 10_000_000;
        for _ in 0..n_steps {
            stepper.step(&mut state, model.as_ref(), &mut rng).unwrap();
            let idx = ((state.q[0] * bins as f64) as usize).min(bins - 1);
            counts[idx] += 1.0;
        }
        for c in counts.iter_mut() {
            *c /= n_steps as f64;
        }
        let dist = stats::l1_histogram_distance(&counts, 0.0, 1.0, |x| density.eval(&[x]));
        assert!(dist < 0.05, "L1 distance to f_Q: {dist}");
    }

    #[test]
    fn gamma_rescaling_is_exact_time_rescaling() {
        // EM with friction 2γ at step dt is arithmetically identical to
        // friction γ at step dt/2 (power-of-two dt keeps products exact).
        let model = builtin_periodic_double_well();
        let dt = 2.0_f64.powi(-10);
        let cfg_fast = SimConfig::isotropic(1, 1.0, 2.0, dt);
        let cfg_slow = SimConfig::isotropic(1, 1.0, 1.0, dt / 2.0);
        let mut sa = SmoluchowskiStepper::new(&cfg_fast).unwrap();
        let mut sb = SmoluchowskiStepper::new(&cfg_slow).unwrap();
        let mut rng_a = crate::rng::stream(9, 0);
        let mut rng_b = crate::rng::stream(9, 0);
        let mut a = SimState::at_rest(vec![0.3]);
        let mut b = SimState::at_rest(vec![0.3]);
        for _ in 0..1000 {
            sa.step(&mut a, model.as_ref(), &mut rng_a).unwrap();
            sb.step(&mut b, model.as_ref(), &mut rng_b).unwrap();
        }
        assert_eq!(a.q, b.q, "time-rescaled trajectories must coincide");
        assert_relative_eq!(a.t, 2.0 * b.t, epsilon = 1e-12);
    }

    #[test]
    fn sampler_uniform_on_flat_potential() {
        let model = builtin_flat_periodic(1);
        let cfg = SimConfig::isotropic(1, 1.0, 1.0, 1e-3).with_seed(13);
        let (samples, report) =
            sample_canonical(100_000, &cfg, &model, &SamplerOptions::default()).unwrap();
        let mut qs: Vec<f64> = samples.iter().map(|s| s.q[0]).collect();
        let p = stats::ks_uniform_pvalue(&mut qs, 0.0, 1.0);
        assert!(p > 0.001, "KS p-value {p}");
        // Flat potential accepts every proposal; the warning path fires.
        assert!(report.acceptance_rates.iter().all(|&r| r > 0.9));
        assert!(!report.warnings.is_empty());
    }

    #[test]
    fn sampler_momentum_covariance_matches_mass() {
        let mass = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let model: PotentialModel = Arc::new(crate::potentials::SeparableDoubleWell2d::new(
            std::f64::consts::TAU,
            2.0,
        ));
        let cfg = SimConfig::isotropic(2, 2.0, 1.0, 1e-3)
            .with_mass(mass.clone())
            .with_seed(21);
        let (samples, _) =
            sample_canonical(100_000, &cfg, &model, &SamplerOptions::default()).unwrap();
        let ps: Vec<Vec<f64>> = samples.iter().map(|s| s.p.clone()).collect();
        let (_, cov) = stats::mean_and_covariance(&ps, 2);
        for i in 0..2 {
            for j in 0..2 {
                let expected = mass[(i, j)] / cfg.beta;
                assert!(
                    (cov[i * 2 + j] - expected).abs() <= 0.02 * mass[(0, 0)] / cfg.beta,
                    "cov[{i}{j}] = {} vs {expected}",
                    cov[i * 2 + j]
                );
            }
        }
    }

    #[test]
    fn sampler_double_well_marginal() {
        let model = builtin_periodic_double_well();
        let cfg = SimConfig::isotropic(1, 1.0, 1.0, 1e-3).with_seed(22);
        let density = BoltzmannDensity::new(&model, cfg.beta).unwrap();
        let (samples, report) =
            sample_canonical(100_000, &cfg, &model, &SamplerOptions::default()).unwrap();
        let hist = stats::histogram(samples.iter().map(|s| s.q[0]), 0.0, 1.0, 64);
        let dist = stats::l1_histogram_distance(&hist, 0.0, 1.0, |x| density.eval(&[x]));
        assert!(dist < 0.05, "L1 distance {dist}");
        assert!(report.warnings.is_empty(), "warnings: {:?}", report.warnings);
    }

    #[test]
    fn sampler_is_deterministic() {
        let model = builtin_periodic_double_well();
        let cfg = SimConfig::isotropic(1, 1.0, 1.0, 1e-3).with_seed(5);
        let (a, _) = sample_canonical(1000, &cfg, &model, &SamplerOptions::default()).unwrap();
        let (b, _) = sample_canonical(1000, &cfg, &model, &SamplerOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ou_kernel_reaches_stationary_momentum_density() {
        let cfg = SimConfig::isotropic(1, 1.0, 1.0, 1e-3);
        for &p in &[-2.0, -0.5, 0.0, 1.0, 2.5] {
            let k = ou_kernel(50.0, &[p], &[1.7], &cfg).unwrap();
            let f_p = momentum_density(&[p], &cfg);
            assert!((k - f_p).abs() < 1e-10, "p={p}: {k} vs {f_p}");
        }
    }

    #[test]
    fn ou_kernel_scalar_covariance_closed_form() {
        // gamma = M = beta = 1, t = 1: variance C(t) = 1 - e^{-2}.
        let cfg = SimConfig::isotropic(1, 1.0, 1.0, 1e-3);
        let var = 1.0 - (-2.0_f64).exp();
        assert_relative_eq!(var, 0.8646647167633873, epsilon = 1e-12);
        let (p, r) = (0.4, 1.1);
        let mean = r * (-1.0_f64).exp();
        let expected = (-0.5 * (p - mean) * (p - mean) / var).exp()
            / (2.0 * std::f64::consts::PI * var).sqrt();
        assert_relative_eq!(ou_kernel(1.0, &[p], &[r], &cfg).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn ou_kernel_mean_matches_direct_simulation() {
        // Euler-Maruyama integration of dp = -gamma p dt + sqrt(2 gamma/beta) dW
        // as an independent oracle for the kernel's short-time mean.
        let (gamma, beta, t, r) = (1.0, 1.0, 0.1, 2.0);
        let n_traj = 2_000_000;
        let n_sub = 100;
        let dt = t / n_sub as f64;
        let amp = (2.0 * gamma / beta * dt).sqrt();
        let sums: Vec<f64> = crate::parallel::indexed_map(64, |w| {
            let mut rng = crate::rng::stream(33, w as u64);
            let mut acc = 0.0;
            for _ in 0..n_traj / 64 {
                let mut p = r;
                for _ in 0..n_sub {
                    let z: f64 = rng.sample(StandardNormal);
                    p += -gamma * p * dt + amp * z;
                }
                acc += p;
            }
            acc
        });
        let mean = sums.iter().sum::<f64>() / (64 * (n_traj / 64)) as f64;
        let predicted = r * (-gamma * t).exp();
        assert!(
            (mean - predicted).abs() < 1e-3,
            "simulated mean {mean} vs kernel mean {predicted}"
        );
    }

    #[test]
    fn ou_kernel_rejects_nonpositive_time() {
        let cfg = SimConfig::isotropic(1, 1.0, 1.0, 1e-3);
        assert!(ou_kernel(0.0, &[0.0], &[0.0], &cfg).is_err());
        assert!(ou_kernel(-1.0, &[0.0], &[0.0], &cfg).is_err());
    }

    #[test]
    fn baoab_noise_satisfies_fluctuation_dissipation() {
        // Accumulated one-step momentum statistics against the exact
        // O-step law: mean e^{-gamma dt} p0, variance (1-e^{-2 gamma dt})/beta.
        let model = builtin_flat_periodic(1);
        let (gamma, beta, dt, p0) = (5.0, 2.0, 1e-2, 1.5);
        let mut cfg = SimConfig::isotropic(1, beta, gamma, dt);
        cfg.master_seed = 77;
        let mut stepper = LangevinStepper::new(&cfg).unwrap();
        let mut rng = crate::rng::stream(cfg.master_seed, 0);
        let n = 1_000_000;
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for _ in 0..n {
            let mut state = SimState::new(vec![0.5], vec![p0]);
            stepper.step(&mut state, model.as_ref(), &mut rng).unwrap();
            stepper.reset_cache();
            sum += state.p[0];
            sumsq += state.p[0] * state.p[0];
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        let e: f64 = (-gamma * dt).exp();
        let expected_var = (1.0 - e * e) / beta;
        assert!((mean - e * p0).abs() < 4.0 * (expected_var / n as f64).sqrt() + 1e-6);
        assert_relative_eq!(var, expected_var, max_relative = 0.01);
    }

    #[test]
    fn nonfinite_force_reports_position() {
        struct Bad(Domain);
        impl Potential for Bad {
            fn dim(&self) -> usize {
                1
            }
            fn domain(&self) -> &Domain {
                &self.0
            }
            fn energy(&self, _q: &[f64]) -> f64 {
                f64::NAN
            }
            fn gradient(&self, _q: &[f64], out: &mut [f64]) {
                out[0] = f64::NAN;
            }
        }
        let model = Bad(Domain::periodic_unit(1));
        let cfg = SimConfig::isotropic(1, 1.0, 1.0, 1e-3);
        let state = SimState::at_rest(vec![0.25]);
        let mut rng = crate::rng::stream(0, 0);
        let err = step_smoluchowski(&state, &cfg, &model, &mut rng).unwrap_err();
        assert!(err.to_string().contains("0.25"), "diagnostic: {err}");
    }

    #[test]
    fn trajectory_csv_has_header_and_stride() {
        let states = vec![
            SimState { q: vec![0.1, 0.2], p: vec![1.0, -1.0], t: 0.0 },
            SimState { q: vec![0.3, 0.4], p: vec![0.5, -0.5], t: 0.1 },
            SimState { q: vec![0.5, 0.6], p: vec![0.2, -0.2], t: 0.2 },
        ];
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, 2, &states, 2).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,q1,q2,p1,p2");
        assert_eq!(lines.len(), 3); // header + rows 0 and 2
        assert!(lines[1].starts_with("0,0.1,0.2"));
    }

    #[test]
    fn config_rejects_noncommuting_friction_and_mass() {
        let mut cfg = SimConfig::isotropic(2, 1.0, 1.0, 1e-3);
        cfg.gamma = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        cfg.mass = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]);
        assert!(cfg.validate().is_err());
    }
}
