//! Potential-energy models, their domains, and Boltzmann weights.

use std::f64::consts::TAU;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature;

/// One coordinate axis of a simulation box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub periodic: bool,
}

impl Axis {
    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Product-box domain: each axis is either periodic or a reflecting wall.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub axes: Vec<Axis>,
}

impl Domain {
    pub fn periodic_unit(dim: usize) -> Self {
        Domain {
            axes: vec![Axis { lo: 0.0, hi: 1.0, periodic: true }; dim],
        }
    }

    pub fn boxed(bounds: &[(f64, f64)]) -> Self {
        Domain {
            axes: bounds
                .iter()
                .map(|&(lo, hi)| Axis { lo, hi, periodic: false })
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    /// Wraps periodic coordinates into `[lo, hi)` and reflects bounded ones
    /// at the walls, flipping the matching momentum component if given.
    pub fn fold(&self, q: &mut [f64], mut p: Option<&mut [f64]>) {
        for (i, ax) in self.axes.iter().enumerate() {
            let len = ax.len();
            if ax.periodic {
                q[i] -= len * ((q[i] - ax.lo) / len).floor();
            } else {
                // Reflect as many times as needed for large excursions.
                while q[i] < ax.lo || q[i] > ax.hi {
                    if q[i] < ax.lo {
                        q[i] = 2.0 * ax.lo - q[i];
                    } else {
                        q[i] = 2.0 * ax.hi - q[i];
                    }
                    if let Some(p) = p.as_deref_mut() {
                        p[i] = -p[i];
                    }
                }
            }
        }
    }

    pub fn contains(&self, q: &[f64]) -> bool {
        q.iter()
            .zip(&self.axes)
            .all(|(&qi, ax)| qi >= ax.lo && qi <= ax.hi)
    }

    pub fn volume(&self) -> f64 {
        self.axes.iter().map(Axis::len).product()
    }
}

/// A potential-energy model: energy, analytic gradient, and its domain.
///
/// Implementations must be immutable after construction so that many
/// workers can evaluate them concurrently.
pub trait Potential: Send + Sync {
    fn dim(&self) -> usize;
    fn domain(&self) -> &Domain;
    fn energy(&self, q: &[f64]) -> f64;
    fn gradient(&self, q: &[f64], out: &mut [f64]);

    fn gradient_vec(&self, q: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.gradient(q, &mut g);
        g
    }
}

/// Shared-ownership handle used wherever a model crosses thread boundaries.
pub type PotentialModel = Arc<dyn Potential>;

/// The periodic double-well `V(q) = 1 + 3 cos(2πq) + 3 cos²(2πq) − cos³(2πq)`
/// on the unit interval. Wells near q ≈ 0.318 and 0.682, barriers at q = 0
/// (high) and q = 0.5 (low).
#[derive(Debug, Clone)]
pub struct PeriodicDoubleWell {
    domain: Domain,
}

impl PeriodicDoubleWell {
    pub fn new() -> Self {
        PeriodicDoubleWell { domain: Domain::periodic_unit(1) }
    }

    pub fn energy_1d(q: f64) -> f64 {
        let c = (TAU * q).cos();
        1.0 + 3.0 * c + 3.0 * c * c - c * c * c
    }

    pub fn gradient_1d(q: f64) -> f64 {
        let (s, c) = (TAU * q).sin_cos();
        // dV/dc = 3 + 6c − 3c², dc/dq = −2π sin(2πq)
        -(3.0 + 6.0 * c - 3.0 * c * c) * TAU * s
    }
}

impl Default for PeriodicDoubleWell {
    fn default() -> Self {
        Self::new()
    }
}

impl Potential for PeriodicDoubleWell {
    fn dim(&self) -> usize {
        1
    }
    fn domain(&self) -> &Domain {
        &self.domain
    }
    fn energy(&self, q: &[f64]) -> f64 {
        Self::energy_1d(q[0])
    }
    fn gradient(&self, q: &[f64], out: &mut [f64]) {
        out[0] = Self::gradient_1d(q[0]);
    }
}

/// Returns the paper-style periodic double-well model.
pub fn builtin_periodic_double_well() -> PotentialModel {
    Arc::new(PeriodicDoubleWell::new())
}

/// Separable 2-D model `V(q₁,q₂) = V_dw(q₁) + ½ ω² q₂²`: periodic double
/// well along the first axis, harmonic confinement on a reflecting box
/// along the second. The projection onto q₁ has analytically known
/// coefficients, which makes it the reference case for reaction-coordinate
/// estimates.
#[derive(Debug, Clone)]
pub struct SeparableDoubleWell2d {
    pub omega: f64,
    domain: Domain,
}

impl SeparableDoubleWell2d {
    pub fn new(omega: f64, half_width: f64) -> Self {
        let domain = Domain {
            axes: vec![
                Axis { lo: 0.0, hi: 1.0, periodic: true },
                Axis { lo: -half_width, hi: half_width, periodic: false },
            ],
        };
        SeparableDoubleWell2d { omega, domain }
    }
}

impl Potential for SeparableDoubleWell2d {
    fn dim(&self) -> usize {
        2
    }
    fn domain(&self) -> &Domain {
        &self.domain
    }
    fn energy(&self, q: &[f64]) -> f64 {
        PeriodicDoubleWell::energy_1d(q[0]) + 0.5 * self.omega * self.omega * q[1] * q[1]
    }
    fn gradient(&self, q: &[f64], out: &mut [f64]) {
        out[0] = PeriodicDoubleWell::gradient_1d(q[0]);
        out[1] = self.omega * self.omega * q[1];
    }
}

/// Returns the separable 2-D double well with `ω = 2π` on `q₂ ∈ [−2, 2]`.
pub fn builtin_separable_double_well_2d() -> PotentialModel {
    Arc::new(SeparableDoubleWell2d::new(TAU, 2.0))
}

/// The zero potential on a periodic unit box (pure diffusion).
#[derive(Debug, Clone)]
pub struct FlatPeriodic {
    domain: Domain,
}

impl FlatPeriodic {
    pub fn new(dim: usize) -> Self {
        FlatPeriodic { domain: Domain::periodic_unit(dim) }
    }
}

impl Potential for FlatPeriodic {
    fn dim(&self) -> usize {
        self.domain.dim()
    }
    fn domain(&self) -> &Domain {
        &self.domain
    }
    fn energy(&self, _q: &[f64]) -> f64 {
        0.0
    }
    fn gradient(&self, _q: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

pub fn builtin_flat_periodic(dim: usize) -> PotentialModel {
    Arc::new(FlatPeriodic::new(dim))
}

/// `V(q) = ½ k (q − c)²` on a reflecting interval.
#[derive(Debug, Clone)]
pub struct Harmonic1d {
    pub stiffness: f64,
    pub center: f64,
    domain: Domain,
}

impl Harmonic1d {
    pub fn new(stiffness: f64, center: f64, lo: f64, hi: f64) -> Self {
        Harmonic1d {
            stiffness,
            center,
            domain: Domain::boxed(&[(lo, hi)]),
        }
    }
}

impl Potential for Harmonic1d {
    fn dim(&self) -> usize {
        1
    }
    fn domain(&self) -> &Domain {
        &self.domain
    }
    fn energy(&self, q: &[f64]) -> f64 {
        let d = q[0] - self.center;
        0.5 * self.stiffness * d * d
    }
    fn gradient(&self, q: &[f64], out: &mut [f64]) {
        out[0] = self.stiffness * (q[0] - self.center);
    }
}

/// Periodic trigonometric series `V(q) = Σ_k a_k cos(2πkq) + b_k sin(2πkq)`,
/// the config-file escape hatch for custom 1-D periodic potentials.
#[derive(Debug, Clone)]
pub struct TrigSeries1d {
    pub cos_coeffs: Vec<f64>,
    pub sin_coeffs: Vec<f64>,
    domain: Domain,
}

impl TrigSeries1d {
    /// `cos_coeffs[k]` multiplies `cos(2π(k+1)q)`; likewise for sines.
    pub fn new(cos_coeffs: Vec<f64>, sin_coeffs: Vec<f64>) -> Self {
        TrigSeries1d {
            cos_coeffs,
            sin_coeffs,
            domain: Domain::periodic_unit(1),
        }
    }
}

impl Potential for TrigSeries1d {
    fn dim(&self) -> usize {
        1
    }
    fn domain(&self) -> &Domain {
        &self.domain
    }
    fn energy(&self, q: &[f64]) -> f64 {
        let mut v = 0.0;
        for (k, &a) in self.cos_coeffs.iter().enumerate() {
            v += a * (TAU * (k + 1) as f64 * q[0]).cos();
        }
        for (k, &b) in self.sin_coeffs.iter().enumerate() {
            v += b * (TAU * (k + 1) as f64 * q[0]).sin();
        }
        v
    }
    fn gradient(&self, q: &[f64], out: &mut [f64]) {
        let mut g = 0.0;
        for (k, &a) in self.cos_coeffs.iter().enumerate() {
            let w = TAU * (k + 1) as f64;
            g -= a * w * (w * q[0]).sin();
        }
        for (k, &b) in self.sin_coeffs.iter().enumerate() {
            let w = TAU * (k + 1) as f64;
            g += b * w * (w * q[0]).cos();
        }
        out[0] = g;
    }
}

/// Polynomial `V(q) = Σ_k c_k q^k` on a reflecting interval, the second
/// config escape hatch.
#[derive(Debug, Clone)]
pub struct Polynomial1d {
    pub coeffs: Vec<f64>,
    domain: Domain,
}

impl Polynomial1d {
    pub fn new(coeffs: Vec<f64>, lo: f64, hi: f64) -> Self {
        Polynomial1d { coeffs, domain: Domain::boxed(&[(lo, hi)]) }
    }
}

impl Potential for Polynomial1d {
    fn dim(&self) -> usize {
        1
    }
    fn domain(&self) -> &Domain {
        &self.domain
    }
    fn energy(&self, q: &[f64]) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * q[0] + c)
    }
    fn gradient(&self, q: &[f64], out: &mut [f64]) {
        let mut g = 0.0;
        for (k, &c) in self.coeffs.iter().enumerate().skip(1) {
            g += k as f64 * c * q[0].powi(k as i32 - 1);
        }
        out[0] = g;
    }
}

/// Boltzmann density `f_Q(q) = exp(−βV(q)) / Z_Q` on the model's domain.
#[derive(Clone)]
pub struct BoltzmannDensity {
    pub beta: f64,
    pub z_q: f64,
    model: PotentialModel,
}

impl BoltzmannDensity {
    /// Computes the normalization by quadrature; only 1-D and 2-D domains
    /// are supported on this path.
    pub fn new(model: &PotentialModel, beta: f64) -> Result<Self> {
        let z_q = normalization_constant(model, beta)?;
        Ok(BoltzmannDensity { beta, z_q, model: Arc::clone(model) })
    }

    /// Normalized density value at `q`.
    pub fn eval(&self, q: &[f64]) -> f64 {
        (-self.beta * self.model.energy(q)).exp() / self.z_q
    }

    /// Unnormalized weight `exp(−βV(q))`.
    pub fn weight(&self, q: &[f64]) -> f64 {
        (-self.beta * self.model.energy(q)).exp()
    }

    pub fn model(&self) -> &PotentialModel {
        &self.model
    }
}

/// `Z_Q = ∫ exp(−βV) dq` over the model's domain, by composite quadrature
/// with relative error below 1e-8. Rejects dimensions above two.
pub fn normalization_constant(model: &PotentialModel, beta: f64) -> Result<f64> {
    if beta <= 0.0 {
        return Err(Error::Config(format!("beta must be positive, got {beta}")));
    }
    let domain = model.domain();
    let z = match domain.dim() {
        1 => {
            let ax = domain.axes[0];
            quadrature::integrate_1d(|x| (-beta * model.energy(&[x])).exp(), ax.lo, ax.hi, 1e-9)
        }
        2 => {
            let (a0, a1) = (domain.axes[0], domain.axes[1]);
            quadrature::integrate_2d(
                |x, y| (-beta * model.energy(&[x, y])).exp(),
                [a0.lo, a1.lo],
                [a0.hi, a1.hi],
                1e-9,
            )
        }
        d => return Err(Error::QuadratureUnsupported { dim: d }),
    };
    debug_assert!(z > 0.0);
    Ok(z)
}
