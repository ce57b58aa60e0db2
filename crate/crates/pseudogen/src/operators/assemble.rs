//! Ulam-style Monte Carlo assembly of the spatial transfer operator
//! (Langevin trajectories with momentum averaging) and the Smoluchowski
//! transfer operator (position-only trajectories).
//!
//! Cell `i` of the partition is populated with `n_per_cell` starting
//! points drawn from `f_Q` restricted to the cell (rejection against the
//! cell bound); momenta, where present, are exact `f_P` draws. Each cell
//! owns RNG stream `i`, so assembly is deterministic at any thread count.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{OperatorKind, OperatorMatrix, UlamGrid};
use crate::error::{Error, Result};
use crate::potentials::PotentialModel;
use crate::sde::{LangevinStepper, SimConfig, SimState, SmoluchowskiStepper};

/// Cells with less Boltzmann mass than this get an identity row and a
/// manifest warning instead of samples.
const EMPTY_CELL_WEIGHT: f64 = 1e-14;

enum Dynamics {
    Langevin,
    Smoluchowski,
}

/// Spatial transfer operator `S^t` at a single lag.
pub fn build_spatial_transfer(
    grid: &UlamGrid,
    t: f64,
    cfg: &SimConfig,
    model: &PotentialModel,
    n_per_cell: usize,
) -> Result<OperatorMatrix> {
    Ok(build_spatial_transfer_multi(grid, &[t], cfg, model, n_per_cell)?.remove(0))
}

/// `S^t` at several lags from one trajectory ensemble: each start point is
/// integrated once up to the largest lag, recording its bin as it passes
/// every requested lag. Lags must be positive and strictly increasing.
pub fn build_spatial_transfer_multi(
    grid: &UlamGrid,
    lags: &[f64],
    cfg: &SimConfig,
    model: &PotentialModel,
    n_per_cell: usize,
) -> Result<Vec<OperatorMatrix>> {
    assemble(grid, lags, cfg, model, n_per_cell, Dynamics::Langevin)
}

/// Smoluchowski transfer operator `P^t_Smol` at a single lag.
pub fn build_smoluchowski_transfer(
    grid: &UlamGrid,
    t: f64,
    cfg: &SimConfig,
    model: &PotentialModel,
    n_per_cell: usize,
) -> Result<OperatorMatrix> {
    Ok(build_smoluchowski_transfer_multi(grid, &[t], cfg, model, n_per_cell)?.remove(0))
}

/// `P^t_Smol` at several lags from one trajectory ensemble.
pub fn build_smoluchowski_transfer_multi(
    grid: &UlamGrid,
    lags: &[f64],
    cfg: &SimConfig,
    model: &PotentialModel,
    n_per_cell: usize,
) -> Result<Vec<OperatorMatrix>> {
    assemble(grid, lags, cfg, model, n_per_cell, Dynamics::Smoluchowski)
}

fn assemble(
    grid: &UlamGrid,
    lags: &[f64],
    cfg: &SimConfig,
    model: &PotentialModel,
    n_per_cell: usize,
    dynamics: Dynamics,
) -> Result<Vec<OperatorMatrix>> {
    cfg.validate()?;
    if n_per_cell < 100 {
        return Err(Error::Config(format!(
            "n_per_cell must be at least 100, got {n_per_cell}"
        )));
    }
    if lags.is_empty() || lags[0] <= 0.0 || lags.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(format!(
            "lags must be positive and strictly increasing, got {lags:?}"
        )));
    }
    let dim = grid.dim();
    if cfg.dim != dim || model.dim() != dim {
        return Err(Error::Config("grid/config/model dimension mismatch".into()));
    }
    let n = grid.n_cells();
    let kind = match dynamics {
        Dynamics::Langevin => OperatorKind::SpatialTransfer,
        Dynamics::Smoluchowski => OperatorKind::SmoluchowskiTransfer,
    };

    // Step counts per lag (at least one step each, strictly increasing).
    let mut steps_at_lag = Vec::with_capacity(lags.len());
    let mut prev = 0usize;
    for &t in lags {
        let s = ((t / cfg.dt).round() as usize).max(prev + 1);
        steps_at_lag.push(s);
        prev = s;
    }

    let mass_l = cfg
        .mass
        .clone()
        .cholesky()
        .ok_or(Error::NotSpd { name: "mass" })?
        .l();
    let p_amp = 1.0 / cfg.beta.sqrt();

    struct CellRows {
        counts: Vec<Vec<u32>>, // one row of counts per lag
        empty: bool,
    }

    let rows: Vec<Result<CellRows>> = crate::parallel::indexed_map(n, |cell| {
        let mut rng = crate::rng::stream(cfg.master_seed, cell as u64);
        let mut counts = vec![vec![0u32; n]; lags.len()];
        if grid.weights[cell] < EMPTY_CELL_WEIGHT {
            for (k, _) in lags.iter().enumerate() {
                counts[k][cell] = n_per_cell as u32;
            }
            return Ok(CellRows { counts, empty: true });
        }
        let bounds = grid.cell_box(cell);
        let bound = grid.cell_bounds[cell];
        let mut langevin = match dynamics {
            Dynamics::Langevin => Some(LangevinStepper::new(cfg)?),
            Dynamics::Smoluchowski => None,
        };
        let mut smol = match dynamics {
            Dynamics::Smoluchowski => Some(SmoluchowskiStepper::new(cfg)?),
            Dynamics::Langevin => None,
        };
        for _ in 0..n_per_cell {
            // Rejection sampling of q ~ f_Q restricted to the cell.
            let mut q = vec![0.0; dim];
            let mut tries = 0usize;
            loop {
                for (d, (lo, hi)) in q.iter_mut().zip(&bounds) {
                    *d = rng.gen_range(*lo..*hi);
                }
                let w = (-cfg.beta * model.energy(&q)).exp();
                if rng.gen::<f64>() * bound <= w {
                    break;
                }
                tries += 1;
                if tries > 1_000_000 {
                    return Err(Error::Estimation(format!(
                        "rejection sampler stalled in cell {cell}"
                    )));
                }
            }
            // Momentum draw p ~ f_P (Langevin only).
            let mut p = vec![0.0; dim];
            if matches!(dynamics, Dynamics::Langevin) {
                let z: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                for i in 0..dim {
                    for j in 0..=i {
                        p[i] += mass_l[(i, j)] * z[j] * p_amp;
                    }
                }
            }
            let mut state = SimState::new(q, p);
            let mut done = 0usize;
            for (k, &target) in steps_at_lag.iter().enumerate() {
                while done < target {
                    match dynamics {
                        Dynamics::Langevin => {
                            let st = langevin.as_mut().unwrap();
                            st.step(&mut state, model.as_ref(), &mut rng)?;
                        }
                        Dynamics::Smoluchowski => {
                            let st = smol.as_mut().unwrap();
                            st.step(&mut state, model.as_ref(), &mut rng)?;
                        }
                    }
                    done += 1;
                }
                counts[k][grid.cell_index(&state.q)] += 1;
            }
            if let Some(st) = langevin.as_mut() {
                st.reset_cache();
            }
        }
        Ok(CellRows { counts, empty: false })
    });

    let mut warnings = Vec::new();
    let mut matrices: Vec<DMatrix<f64>> = (0..lags.len()).map(|_| DMatrix::zeros(n, n)).collect();
    for (cell, row) in rows.into_iter().enumerate() {
        let row = row?;
        if row.empty {
            warnings.push(format!(
                "cell {cell}: weight below {EMPTY_CELL_WEIGHT:.0e}, using identity row"
            ));
        }
        for (k, counts) in row.counts.iter().enumerate() {
            for (j, &c) in counts.iter().enumerate() {
                matrices[k][(cell, j)] = c as f64 / n_per_cell as f64;
            }
        }
    }

    Ok(matrices
        .into_iter()
        .zip(lags)
        .map(|(m, &t)| OperatorMatrix {
            matrix: m,
            lag: t,
            kind,
            n_samples_per_cell: Some(n_per_cell),
            warnings: warnings.clone(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{build_g2_matrix, UlamGrid};
    use crate::potentials::{builtin_flat_periodic, builtin_periodic_double_well};

    #[test]
    fn rows_are_stochastic_and_deterministic() {
        let model = builtin_periodic_double_well();
        let grid = UlamGrid::new(&model, 1.0, &[32]).unwrap();
        let cfg = SimConfig::isotropic(1, 1.0, 5.0, 1e-3).with_seed(4);
        let a = build_spatial_transfer(&grid, 0.05, &cfg, &model, 200).unwrap();
        let b = build_spatial_transfer(&grid, 0.05, &cfg, &model, 200).unwrap();
        assert_eq!(a.matrix, b.matrix, "same seed must give identical matrices");
        assert!(a.max_row_sum_error() < 1e-12);
        assert!(a.matrix.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn single_step_lag_is_near_identity() {
        // At t = dt the matrix should leak at most one cell: mass outside
        // the 3-cell band around the start stays below 5%.
        let model = builtin_periodic_double_well();
        let n = 64;
        let grid = UlamGrid::new(&model, 1.0, &[n]).unwrap();
        let cfg = SimConfig::isotropic(1, 1.0, 5.0, 1e-3).with_seed(5);
        let s = build_spatial_transfer(&grid, cfg.dt, &cfg, &model, 500).unwrap();
        let mut leaked = 0.0;
        for i in 0..n {
            let mut near = 0.0;
            for off in [-1isize, 0, 1] {
                let j = (i as isize + off).rem_euclid(n as isize) as usize;
                near += s.matrix[(i, j)];
            }
            leaked += grid.weights[i] * (1.0 - near);
        }
        assert!(leaked < 0.05, "one-cell leakage {leaked}");
    }

    #[test]
    fn constant_vector_is_invariant() {
        let model = builtin_periodic_double_well();
        let grid = UlamGrid::new(&model, 1.0, &[32]).unwrap();
        let cfg = SimConfig::isotropic(1, 1.0, 5.0, 1e-3).with_seed(6);
        let s = build_spatial_transfer(&grid, 0.1, &cfg, &model, 200).unwrap();
        let out = s.apply(&vec![1.0; 32]);
        for v in out {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_smoluchowski_mixes_to_uniform() {
        // Pure diffusion: rows approach the uniform distribution once
        // 2t/(βγ) is large against the domain size.
        let model = builtin_flat_periodic(1);
        let n = 16;
        let grid = UlamGrid::new(&model, 1.0, &[n]).unwrap();
        let cfg = SimConfig::isotropic(1, 1.0, 1.0, 1e-3).with_seed(7);
        let s = build_smoluchowski_transfer(&grid, 2.0, &cfg, &model, 4000).unwrap();
        for i in 0..n {
            let tv: f64 = (0..n)
                .map(|j| (s.matrix[(i, j)] - 1.0 / n as f64).abs())
                .sum::<f64>()
                / 2.0;
            assert!(tv < 0.02, "row {i} TV distance to uniform {tv}");
        }
    }

    #[test]
    fn stationary_weights_are_preserved() {
        let model = builtin_periodic_double_well();
        let n = 32;
        let grid = UlamGrid::new(&model, 1.0, &[n]).unwrap();
        let cfg = SimConfig::isotropic(1, 1.0, 1.0, 2e-4).with_seed(8);
        let s = build_smoluchowski_transfer(&grid, 0.05, &cfg, &model, 4000).unwrap();
        // Left action of the weights: wᵀ P ≈ wᵀ.
        let mut err = 0.0;
        for j in 0..n {
            let mut col = 0.0;
            for i in 0..n {
                col += grid.weights[i] * s.matrix[(i, j)];
            }
            err += (col - grid.weights[j]).abs();
        }
        assert!(err < 0.02, "stationarity defect {err}");
    }

    #[test]
    fn smoluchowski_spectral_mapping_against_g2() {
        // Eigenvalues of the sampled propagator at lag t against
        // exp(t eig(G₂)) from the finite-volume generator on the same grid.
        let model = builtin_periodic_double_well();
        let n = 128;
        let grid = UlamGrid::new(&model, 1.0, &[n]).unwrap();
        let cfg = SimConfig::isotropic(1, 1.0, 1.0, 2e-5).with_seed(9);
        let t = 0.01;
        let s = build_smoluchowski_transfer(&grid, t, &cfg, &model, 4000).unwrap();
        let g2 = build_g2_matrix(&grid, 1.0, &model).unwrap();

        let d: Vec<f64> = grid.weights.iter().map(|w| w.sqrt()).collect();
        let sym = DMatrix::from_fn(n, n, |i, j| d[i] * g2.matrix[(i, j)] / d[j]);
        let mut expected: Vec<f64> = nalgebra::SymmetricEigen::new(sym)
            .eigenvalues
            .iter()
            .map(|&l| (t * l).exp())
            .collect();
        expected.sort_by(|a, b| b.partial_cmp(a).unwrap());

        let evd = crate::linalg::RealEvd::new(&s.matrix).unwrap();
        let mut got: Vec<f64> = evd.re.clone();
        got.sort_by(|a, b| b.partial_cmp(a).unwrap());

        for k in 0..5 {
            let rel = (got[k] - expected[k]).abs() / expected[k].abs();
            assert!(
                rel < 0.05,
                "mode {k}: sampled {} vs exp(t eig) {} (rel {rel})",
                got[k],
                expected[k]
            );
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let model = builtin_periodic_double_well();
        let grid = UlamGrid::new(&model, 1.0, &[16]).unwrap();
        let cfg = SimConfig::isotropic(1, 1.0, 5.0, 1e-3);
        assert!(build_spatial_transfer(&grid, 0.1, &cfg, &model, 50).is_err());
        assert!(build_spatial_transfer(&grid, -0.1, &cfg, &model, 200).is_err());
        assert!(
            build_spatial_transfer_multi(&grid, &[0.2, 0.1], &cfg, &model, 200).is_err(),
            "non-increasing lags must be rejected"
        );
    }
}
