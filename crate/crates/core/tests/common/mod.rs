//! Shared fixtures for the integration suites.
#![allow(dead_code)] // each suite uses its own subset

use del_core::solver::{run, EnergyLedger, SolverConfig, ViscosityModel};
use del_core::state::{ConservedField, EosParams, TorusGrid, Trajectory};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const PI: f64 = std::f64::consts::PI;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Small-amplitude standing acoustic perturbation, 1D.
pub fn acoustic_1d(n: usize, amp: f64) -> ConservedField {
    let grid = TorusGrid::new(1, n).unwrap();
    ConservedField::from_fn(grid, |x| (1.0 + amp * (PI * x[0]).sin(), [0.0, 0.0])).unwrap()
}

/// Random low-mode smooth field with density bounded away from vacuum.
pub fn random_smooth_field(r: &mut ChaCha8Rng, grid: TorusGrid) -> ConservedField {
    let dim = grid.dim();
    let mut rho_coef = [[0.0; 2]; 3];
    let mut mom_coef = [[[0.0; 2]; 2]; 3];
    for k in 0..3 {
        for c in 0..2 {
            rho_coef[k][c] = r.gen_range(-0.08..0.08);
            for axis in 0..2 {
                mom_coef[k][axis][c] = r.gen_range(-0.1..0.1);
            }
        }
    }
    let base = r.gen_range(0.8..1.4);
    ConservedField::from_fn(grid, |x| {
        let mut rho = base;
        let mut mom = [0.0, 0.0];
        for (k, coef) in rho_coef.iter().enumerate() {
            let a = PI * (k + 1) as f64;
            let phase = a * x[0] + if dim == 2 { a * x[1] } else { 0.0 };
            rho += coef[0] * phase.sin() + coef[1] * phase.cos();
            for axis in 0..dim {
                mom[axis] +=
                    mom_coef[k][axis][0] * phase.sin() + mom_coef[k][axis][1] * phase.cos();
            }
        }
        (rho, mom)
    })
    .unwrap()
}

pub fn solve(
    initial: &ConservedField,
    eos: &EosParams,
    epsilon: f64,
    config: &SolverConfig,
) -> (Trajectory, EnergyLedger) {
    let model = ViscosityModel::new(epsilon, 1.0, 1.0).unwrap();
    run(initial, eos, &model, config).unwrap()
}

/// Restrict a fine field to a coarser grid by block averaging; `factor` is
/// the refinement ratio between the two grids.
pub fn restrict(field: &ConservedField, factor: usize) -> ConservedField {
    let partition =
        del_core::defect::BlockPartition::new(field.grid(), factor).unwrap();
    del_core::defect::coarse_grain(field, &partition).unwrap()
}

/// Sub-trajectory at the given absolute times (plus the initial snapshot).
pub fn at_checkpoints(traj: &Trajectory, times: &[f64]) -> Trajectory {
    let mut snaps = vec![traj.first().clone()];
    for &t in times {
        if let Some(i) = traj.index_at_time(t, 1e-12 * (1.0 + t.abs())) {
            if traj.snapshots()[i].time > snaps.last().unwrap().time {
                snaps.push(traj.snapshots()[i].clone());
            }
        }
    }
    Trajectory::new(snaps).unwrap()
}

/// L1 distance between densities of two fields on one grid.
pub fn l1_rho_distance(a: &ConservedField, b: &ConservedField) -> f64 {
    assert_eq!(a.grid(), b.grid());
    a.rho
        .iter()
        .zip(b.rho.iter())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        * a.grid().cell_volume()
}
