//! Discretizations of the spatial transfer operator, the Smoluchowski
//! propagator, the second pseudo-generator, and its Taylor and exponential
//! reconstructions.

mod assemble;
mod generator;
mod phase;
mod pseudo_fd;

pub use assemble::{build_smoluchowski_transfer, build_smoluchowski_transfer_multi,
    build_spatial_transfer, build_spatial_transfer_multi};
pub use generator::{build_g2_matrix, exponential_operator, taylor_operator,
    transition_probability};
pub use phase::PhaseEngine;
pub use pseudo_fd::{pseudo_generator_fd, PseudoFdEstimate};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::potentials::PotentialModel;
use crate::quadrature;

/// Tolerance on row sums of normalized transfer matrices.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Entries of a matrix exponential below this are clipped to zero;
/// anything more negative is an assembly error.
pub const EXP_NEGATIVITY_TOL: f64 = -1e-12;

/// Box partition of configuration space with Boltzmann cell weights.
#[derive(Debug, Clone)]
pub struct UlamGrid {
    pub cells_per_axis: Vec<usize>,
    pub domain: crate::potentials::Domain,
    pub beta: f64,
    /// `w_i = ∫_cell f_Q`, normalized to sum to one.
    pub weights: Vec<f64>,
    /// Per-cell upper bound on the unnormalized Boltzmann weight
    /// `exp(−βV)`, used by the in-cell rejection sampler.
    pub cell_bounds: Vec<f64>,
}

impl UlamGrid {
    /// Builds the grid and computes cell weights by per-cell quadrature.
    pub fn new(model: &PotentialModel, beta: f64, cells_per_axis: &[usize]) -> Result<Self> {
        let domain = model.domain().clone();
        let dim = domain.dim();
        if cells_per_axis.len() != dim {
            return Err(Error::Config(format!(
                "expected {dim} cell counts, got {}",
                cells_per_axis.len()
            )));
        }
        if cells_per_axis.iter().any(|&n| n < 2) {
            return Err(Error::Config("need at least 2 cells per axis".into()));
        }
        if dim > 2 {
            return Err(Error::QuadratureUnsupported { dim });
        }
        let n_cells: usize = cells_per_axis.iter().product();
        let mut weights = vec![0.0; n_cells];
        let mut bounds = vec![0.0; n_cells];
        let mut grid = UlamGrid {
            cells_per_axis: cells_per_axis.to_vec(),
            domain,
            beta,
            weights: Vec::new(),
            cell_bounds: Vec::new(),
        };
        for idx in 0..n_cells {
            let b = grid.cell_box(idx);
            let (integral, bound) = match dim {
                1 => {
                    let f = |x: f64| (-beta * model.energy(&[x])).exp();
                    let mut max = 0.0_f64;
                    let samples = 33;
                    for s in 0..=samples {
                        let x = b[0].0 + (b[0].1 - b[0].0) * s as f64 / samples as f64;
                        max = max.max(f(x));
                    }
                    (quadrature::integrate_1d(f, b[0].0, b[0].1, 1e-10), max)
                }
                _ => {
                    let f = |x: f64, y: f64| (-beta * model.energy(&[x, y])).exp();
                    let mut max = 0.0_f64;
                    let samples = 9;
                    for sx in 0..=samples {
                        for sy in 0..=samples {
                            let x = b[0].0 + (b[0].1 - b[0].0) * sx as f64 / samples as f64;
                            let y = b[1].0 + (b[1].1 - b[1].0) * sy as f64 / samples as f64;
                            max = max.max(f(x, y));
                        }
                    }
                    (
                        quadrature::integrate_2d(f, [b[0].0, b[1].0], [b[0].1, b[1].1], 1e-9),
                        max,
                    )
                }
            };
            weights[idx] = integral;
            // Safety margin on the sub-grid maximum for rejection sampling.
            bounds[idx] = bound * 1.05;
        }
        let total: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= total;
        }
        grid.weights = weights;
        grid.cell_bounds = bounds;
        Ok(grid)
    }

    pub fn dim(&self) -> usize {
        self.cells_per_axis.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells_per_axis.iter().product()
    }

    /// Cell width along `axis`.
    pub fn cell_width(&self, axis: usize) -> f64 {
        self.domain.axes[axis].len() / self.cells_per_axis[axis] as f64
    }

    /// Decomposes a flat cell index (first axis fastest).
    pub fn unflatten(&self, mut idx: usize) -> Vec<usize> {
        let mut coords = Vec::with_capacity(self.dim());
        for &n in &self.cells_per_axis {
            coords.push(idx % n);
            idx /= n;
        }
        coords
    }

    pub fn flatten(&self, coords: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (c, &n) in coords.iter().zip(&self.cells_per_axis) {
            idx += c * stride;
            stride *= n;
        }
        idx
    }

    /// Flat index of the cell containing `q` (after folding into the domain).
    pub fn cell_index(&self, q: &[f64]) -> usize {
        let mut folded = q.to_vec();
        self.domain.fold(&mut folded, None);
        let coords: Vec<usize> = folded
            .iter()
            .zip(self.domain.axes.iter())
            .zip(self.cells_per_axis.iter())
            .map(|((&x, ax), &n)| {
                let rel = (x - ax.lo) / ax.len() * n as f64;
                (rel.floor() as usize).min(n - 1)
            })
            .collect();
        self.flatten(&coords)
    }

    pub fn cell_center(&self, idx: usize) -> Vec<f64> {
        self.unflatten(idx)
            .iter()
            .zip(self.domain.axes.iter())
            .zip(self.cells_per_axis.iter())
            .map(|((&c, ax), &n)| ax.lo + (c as f64 + 0.5) * ax.len() / n as f64)
            .collect()
    }

    /// Axis-aligned bounds of a cell.
    pub fn cell_box(&self, idx: usize) -> Vec<(f64, f64)> {
        self.unflatten(idx)
            .iter()
            .zip(self.domain.axes.iter())
            .zip(self.cells_per_axis.iter())
            .map(|((&c, ax), &n)| {
                let w = ax.len() / n as f64;
                (ax.lo + c as f64 * w, ax.lo + (c as f64 + 1.0) * w)
            })
            .collect()
    }

    /// Neighbor of cell `idx` one step along `axis` in direction `dir`
    /// (±1); `None` across a reflecting boundary.
    pub fn neighbor(&self, idx: usize, axis: usize, dir: isize) -> Option<usize> {
        let mut coords = self.unflatten(idx);
        let n = self.cells_per_axis[axis] as isize;
        let c = coords[axis] as isize + dir;
        if self.domain.axes[axis].periodic {
            coords[axis] = c.rem_euclid(n) as usize;
            Some(self.flatten(&coords))
        } else if (0..n).contains(&c) {
            coords[axis] = c as usize;
            Some(self.flatten(&coords))
        } else {
            None
        }
    }

    /// Weighted inner product `⟨u, v⟩_w = Σ w_i u_i v_i`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter()
            .zip(v)
            .zip(&self.weights)
            .map(|((a, b), w)| w * a * b)
            .sum()
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).sqrt()
    }
}

/// What a discretized operator represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    SpatialTransfer,
    SmoluchowskiTransfer,
    GeneratorG2,
    Taylor,
    Exponential,
}

impl OperatorKind {
    pub fn label(&self) -> &'static str {
        match self {
            OperatorKind::SpatialTransfer => "spatial_transfer",
            OperatorKind::SmoluchowskiTransfer => "smoluchowski_transfer",
            OperatorKind::GeneratorG2 => "generator_g2",
            OperatorKind::Taylor => "taylor",
            OperatorKind::Exponential => "exponential",
        }
    }

    /// Kinds that are self-adjoint in the w-inner product by construction.
    pub fn certified_self_adjoint(&self) -> bool {
        matches!(
            self,
            OperatorKind::GeneratorG2 | OperatorKind::Taylor | OperatorKind::Exponential
        )
    }

    pub fn is_transfer(&self) -> bool {
        matches!(
            self,
            OperatorKind::SpatialTransfer | OperatorKind::SmoluchowskiTransfer
        )
    }
}

/// A dense `N x N` operator on cell functions. Rows index the source cell
/// for transfer kinds; the action on densities-with-respect-to-`f_Q` is
/// `u ↦ M u`.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub matrix: DMatrix<f64>,
    pub lag: f64,
    pub kind: OperatorKind,
    pub n_samples_per_cell: Option<usize>,
    pub warnings: Vec<String>,
}

impl OperatorMatrix {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    /// Largest deviation of a row sum from the transfer-kind target 1
    /// (or 0 for the generator).
    pub fn max_row_sum_error(&self) -> f64 {
        let target = if self.kind.is_transfer() { 1.0 } else { 0.0 };
        (0..self.n())
            .map(|i| (self.matrix.row(i).sum() - target).abs())
            .fold(0.0, f64::max)
    }

    /// Applies the operator to a cell function.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let v = nalgebra::DVector::from_column_slice(u);
        (&self.matrix * v).data.into()
    }

    /// Relative Frobenius defect of self-adjointness in `⟨·,·⟩_w`:
    /// `‖D_w M − Mᵀ D_w‖_F / ‖D_w M‖_F`.
    pub fn self_adjointness_defect(&self, grid: &UlamGrid) -> f64 {
        let n = self.n();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            for j in 0..n {
                let a = grid.weights[i] * self.matrix[(i, j)];
                let b = grid.weights[j] * self.matrix[(j, i)];
                num += (a - b) * (a - b);
                den += a * a;
            }
        }
        (num / den.max(f64::MIN_POSITIVE)).sqrt()
    }
}
