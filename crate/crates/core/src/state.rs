//! Equation of state, energy functions, grids, and field containers.
//!
//! The spatial domain is the flat torus `[-1, 1]^d`, `d = 1, 2`, discretized
//! by `N` cells per axis with spacing `h = 2 / N`. States are carried in the
//! conservative variables: density `rho >= 0` and momentum `m`.

use crate::error::{Error, Result};
use crate::linalg::{norm_sq, Vec2};

/// Default density floor used when reconstructing velocity from momentum.
pub const DENSITY_FLOOR: f64 = 1e-10;

/// Isentropic equation of state `p(rho) = a rho^gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EosParams {
    pub a: f64,
    pub gamma: f64,
}

impl EosParams {
    pub fn new(a: f64, gamma: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::InvalidParameter { name: "a", value: a });
        }
        if !(gamma > 1.0) {
            return Err(Error::InvalidParameter { name: "gamma", value: gamma });
        }
        Ok(EosParams { a, gamma })
    }

    /// Pressure `p(rho) = a rho^gamma`.
    pub fn pressure(&self, rho: f64) -> Result<f64> {
        if rho < 0.0 {
            return Err(Error::NegativeDensity(rho));
        }
        Ok(self.p(rho))
    }

    /// Pressure potential `P(rho) = a / (gamma - 1) rho^gamma`, the internal
    /// energy density. Satisfies `P'(rho) rho - P(rho) = p(rho)`.
    pub fn pressure_potential(&self, rho: f64) -> Result<f64> {
        if rho < 0.0 {
            return Err(Error::NegativeDensity(rho));
        }
        Ok(self.pot(rho))
    }

    /// Derivative `P'(rho) = a gamma / (gamma - 1) rho^(gamma-1)`.
    pub fn pressure_potential_derivative(&self, rho: f64) -> Result<f64> {
        if rho < 0.0 {
            return Err(Error::NegativeDensity(rho));
        }
        Ok(self.a * self.gamma / (self.gamma - 1.0) * rho.powf(self.gamma - 1.0))
    }

    /// Sound speed `c = sqrt(gamma p / rho)`; zero at vacuum.
    pub fn sound_speed(&self, rho: f64) -> f64 {
        if rho <= 0.0 {
            0.0
        } else {
            (self.gamma * self.a * rho.powf(self.gamma - 1.0)).sqrt()
        }
    }

    #[inline]
    pub(crate) fn p(&self, rho: f64) -> f64 {
        self.a * rho.powf(self.gamma)
    }

    #[inline]
    pub(crate) fn pot(&self, rho: f64) -> f64 {
        self.a / (self.gamma - 1.0) * rho.powf(self.gamma)
    }
}

impl Default for EosParams {
    fn default() -> Self {
        EosParams { a: 1.0, gamma: 1.4 }
    }
}

/// Uniform periodic grid on `[-1, 1]^dim`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TorusGrid {
    dim: usize,
    n: usize,
}

impl TorusGrid {
    pub fn new(dim: usize, cells_per_axis: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::BadDimension(dim));
        }
        if cells_per_axis == 0 {
            return Err(Error::InvalidParameter { name: "cells_per_axis", value: 0.0 });
        }
        Ok(TorusGrid { dim, n: cells_per_axis })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells_per_axis(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        2.0 / self.n as f64
    }

    pub fn total_cells(&self) -> usize {
        if self.dim == 1 {
            self.n
        } else {
            self.n * self.n
        }
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn domain_volume(&self) -> f64 {
        2.0_f64.powi(self.dim as i32)
    }

    /// Linear index of cell `(ix, iy)`; `iy` must be 0 in 1D.
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        debug_assert!(ix < self.n && (self.dim == 2 || iy == 0));
        iy * self.n + ix
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.n, idx / self.n)
    }

    /// Wrap a possibly negative axis index onto the torus.
    pub fn wrap(&self, i: isize) -> usize {
        i.rem_euclid(self.n as isize) as usize
    }

    /// Neighbor of `idx` shifted by `step` cells along `axis`, with wrap.
    pub fn neighbor(&self, idx: usize, axis: usize, step: isize) -> usize {
        let (ix, iy) = self.coords(idx);
        match axis {
            0 => self.index(self.wrap(ix as isize + step), iy),
            _ => self.index(ix, self.wrap(iy as isize + step)),
        }
    }

    pub fn cell_center(&self, idx: usize) -> Vec2 {
        let h = self.spacing();
        let (ix, iy) = self.coords(idx);
        let x = -1.0 + (ix as f64 + 0.5) * h;
        let y = if self.dim == 2 { -1.0 + (iy as f64 + 0.5) * h } else { 0.0 };
        [x, y]
    }

    /// Lower corner of a cell (for exact integration over cells).
    pub fn cell_lower(&self, idx: usize) -> Vec2 {
        let h = self.spacing();
        let (ix, iy) = self.coords(idx);
        let x = -1.0 + ix as f64 * h;
        let y = if self.dim == 2 { -1.0 + iy as f64 * h } else { 0.0 };
        [x, y]
    }
}

/// Conservative state `(rho, m)` on a torus grid at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ConservedField {
    grid: TorusGrid,
    pub rho: Vec<f64>,
    pub mom: Vec<Vec2>,
    pub time: f64,
}

impl ConservedField {
    /// Build a field, validating admissibility: `rho >= 0` everywhere, zero
    /// momentum on vacuum cells, and no `y` momentum in 1D.
    pub fn new(grid: TorusGrid, rho: Vec<f64>, mom: Vec<Vec2>, time: f64) -> Result<Self> {
        if rho.len() != grid.total_cells() || mom.len() != grid.total_cells() {
            return Err(Error::InadmissibleField(format!(
                "field length {} / {} does not match grid cell count {}",
                rho.len(),
                mom.len(),
                grid.total_cells()
            )));
        }
        let field = ConservedField { grid, rho, mom, time };
        field.validate_admissible()?;
        Ok(field)
    }

    pub fn constant(grid: TorusGrid, rho0: f64, mom0: Vec2) -> Result<Self> {
        let cells = grid.total_cells();
        Self::new(grid, vec![rho0; cells], vec![mom0; cells], 0.0)
    }

    /// Build a field by sampling `f` at cell centers.
    pub fn from_fn(grid: TorusGrid, mut f: impl FnMut(Vec2) -> (f64, Vec2)) -> Result<Self> {
        let cells = grid.total_cells();
        let mut rho = Vec::with_capacity(cells);
        let mut mom = Vec::with_capacity(cells);
        for idx in 0..cells {
            let (r, m) = f(grid.cell_center(idx));
            rho.push(r);
            mom.push(m);
        }
        Self::new(grid, rho, mom, 0.0)
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn validate_admissible(&self) -> Result<()> {
        for (idx, (&r, &m)) in self.rho.iter().zip(self.mom.iter()).enumerate() {
            if r < 0.0 || !r.is_finite() {
                return Err(Error::InadmissibleField(format!(
                    "cell {idx}: density {r}"
                )));
            }
            if r == 0.0 && norm_sq(m) > 0.0 {
                return Err(Error::InadmissibleField(format!(
                    "cell {idx}: vacuum with nonzero momentum"
                )));
            }
            if self.grid.dim() == 1 && m[1] != 0.0 {
                return Err(Error::InadmissibleField(format!(
                    "cell {idx}: nonzero y momentum in 1D"
                )));
            }
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        self.rho.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn total_momentum(&self) -> Vec2 {
        let mut s = [0.0, 0.0];
        for m in &self.mom {
            s[0] += m[0];
            s[1] += m[1];
        }
        let v = self.grid.cell_volume();
        [s[0] * v, s[1] * v]
    }

    pub fn min_density(&self) -> f64 {
        self.rho.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Convex lower-semicontinuous extension of `|m|^2 / rho`:
/// `0` when `m = 0`, `|m|^2 / rho` when `rho > 0`, `+inf` otherwise.
pub fn kinetic_extended(rho: f64, mom: Vec2) -> f64 {
    let m2 = norm_sq(mom);
    if m2 == 0.0 {
        0.0
    } else if rho > 0.0 {
        m2 / rho
    } else {
        f64::INFINITY
    }
}

/// Total energy density `E = 1/2 |m|^2 / rho + P(rho)`; the kinetic part uses
/// the convex extension, so the `+inf` branch propagates.
pub fn total_energy_density(rho: f64, mom: Vec2, eos: &EosParams) -> f64 {
    0.5 * kinetic_extended(rho, mom) + eos.pot(rho.max(0.0))
}

/// Cell-volume-weighted total energy of a field; `+inf` if any cell sits on
/// the infinite branch.
pub fn total_energy(field: &ConservedField, eos: &EosParams) -> f64 {
    let mut sum = 0.0;
    for (&r, &m) in field.rho.iter().zip(field.mom.iter()) {
        let e = total_energy_density(r, m, eos);
        if e.is_infinite() {
            return f64::INFINITY;
        }
        sum += e;
    }
    sum * field.grid.cell_volume()
}

/// Velocity reconstruction `u = m / max(rho, floor)`.
pub fn velocity_from_conservative(field: &ConservedField, floor: f64) -> Result<Vec<Vec2>> {
    if !(floor > 0.0) {
        return Err(Error::InvalidParameter { name: "floor", value: floor });
    }
    Ok(field
        .rho
        .iter()
        .zip(field.mom.iter())
        .map(|(&r, &m)| {
            let d = r.max(floor);
            [m[0] / d, m[1] / d]
        })
        .collect())
}

/// Time-ordered list of snapshots sharing one grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    snapshots: Vec<ConservedField>,
}

impl Trajectory {
    pub fn new(snapshots: Vec<ConservedField>) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(Error::InadmissibleField("empty trajectory".into()));
        }
        let grid = snapshots[0].grid();
        for pair in snapshots.windows(2) {
            if pair[1].grid() != grid {
                return Err(Error::GridMismatch);
            }
            if !(pair[1].time > pair[0].time) {
                return Err(Error::InadmissibleField(format!(
                    "snapshot times not strictly increasing: {} then {}",
                    pair[0].time, pair[1].time
                )));
            }
        }
        Ok(Trajectory { snapshots })
    }

    pub fn from_initial(field: ConservedField) -> Self {
        Trajectory { snapshots: vec![field] }
    }

    pub fn push(&mut self, field: ConservedField) -> Result<()> {
        if field.grid() != self.grid() {
            return Err(Error::GridMismatch);
        }
        if let Some(last) = self.snapshots.last() {
            if !(field.time > last.time) {
                return Err(Error::InadmissibleField(format!(
                    "snapshot time {} not after {}",
                    field.time, last.time
                )));
            }
        }
        self.snapshots.push(field);
        Ok(())
    }

    pub fn grid(&self) -> TorusGrid {
        self.snapshots[0].grid()
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    /// Always false: trajectories hold at least the initial snapshot.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn snapshots(&self) -> &[ConservedField] {
        &self.snapshots
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    pub fn first(&self) -> &ConservedField {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &ConservedField {
        self.snapshots.last().unwrap()
    }

    /// Index of the snapshot at time `t` (within `tol`), if any.
    pub fn index_at_time(&self, t: f64, tol: f64) -> Option<usize> {
        self.snapshots.iter().position(|s| (s.time - t).abs() <= tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eos(a: f64, gamma: f64) -> EosParams {
        EosParams::new(a, gamma).unwrap()
    }

    #[test]
    fn pressure_closed_form() {
        let e = eos(1.0, 2.0);
        assert_eq!(e.pressure(3.0).unwrap(), 9.0);
        assert_eq!(e.pressure(0.0).unwrap(), 0.0);
        let e14 = eos(1.0, 1.4);
        assert!((e14.pressure(1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(e.pressure(-1.0).is_err());
    }

    #[test]
    fn pressure_potential_closed_form_and_identity() {
        let e = eos(1.0, 2.0);
        assert_eq!(e.pressure_potential(2.0).unwrap(), 4.0);
        assert_eq!(e.pressure_potential(0.0).unwrap(), 0.0);
        // P'(2) * 2 - P(2) = 8 - 4 = 4 = p(2)
        let lhs = e.pressure_potential_derivative(2.0).unwrap() * 2.0
            - e.pressure_potential(2.0).unwrap();
        assert!((lhs - e.pressure(2.0).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn eos_identity_on_log_spaced_sample() {
        for &(a, gamma) in &[(1.0, 1.4), (0.5, 2.0), (2.0, 5.0 / 3.0)] {
            let e = eos(a, gamma);
            for i in -8..=8 {
                let rho = 10f64.powi(i);
                let p = e.pressure(rho).unwrap();
                let lhs = e.pressure_potential_derivative(rho).unwrap() * rho
                    - e.pressure_potential(rho).unwrap();
                assert!(
                    (lhs - p).abs() <= 1e-12 * p.abs().max(1e-300),
                    "identity failed at rho = {rho}: {lhs} vs {p}"
                );
            }
        }
    }

    #[test]
    fn eos_parameter_validation() {
        assert!(EosParams::new(0.0, 1.4).is_err());
        assert!(EosParams::new(1.0, 1.0).is_err());
        assert!(EosParams::new(1.0, 0.9).is_err());
    }

    #[test]
    fn kinetic_extension_branches() {
        assert_eq!(kinetic_extended(0.0, [0.0, 0.0]), 0.0);
        assert_eq!(kinetic_extended(2.0, [2.0, 0.0]), 2.0);
        assert!(kinetic_extended(0.0, [1.0, 0.0]).is_infinite());
    }

    #[test]
    fn kinetic_matches_ratio_away_from_vacuum() {
        for i in 0..200 {
            let rho = 1e-8 + i as f64 * 0.05;
            let m = [0.3 * i as f64, -0.1 * i as f64];
            let direct = norm_sq(m) / rho;
            let ext = kinetic_extended(rho, m);
            assert!((ext - direct).abs() <= 1e-15 * direct.max(1.0));
        }
    }

    #[test]
    fn energy_density_examples() {
        let e = eos(1.0, 2.0);
        assert!((total_energy_density(1.0, [2.0, 0.0], &e) - 3.0).abs() < 1e-15);
        assert!((total_energy_density(1.0, [0.0, 0.0], &e) - 1.0).abs() < 1e-15);
        assert_eq!(total_energy_density(0.0, [0.0, 0.0], &e), 0.0);
    }

    #[test]
    fn total_energy_constant_state_2d() {
        let g = TorusGrid::new(2, 8).unwrap();
        let f = ConservedField::constant(g, 1.0, [0.0, 0.0]).unwrap();
        let e = eos(1.0, 1.4);
        // P(1) * |Omega| = 1/(gamma-1) * 4
        let expect = 4.0 / 0.4;
        assert!((total_energy(&f, &e) - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn doubling_momentum_quadruples_kinetic_part() {
        let g = TorusGrid::new(1, 16).unwrap();
        let e = eos(1.0, 1.4);
        let f1 = ConservedField::from_fn(g, |x| (1.5 + 0.2 * (std::f64::consts::PI * x[0]).sin(), [0.3, 0.0])).unwrap();
        let f2 = ConservedField::new(
            g,
            f1.rho.clone(),
            f1.mom.iter().map(|m| scale2(*m)).collect(),
            0.0,
        )
        .unwrap();
        let rest = ConservedField::new(g, f1.rho.clone(), vec![[0.0, 0.0]; g.total_cells()], 0.0).unwrap();
        let kin1 = total_energy(&f1, &e) - total_energy(&rest, &e);
        let kin2 = total_energy(&f2, &e) - total_energy(&rest, &e);
        assert!((kin2 - 4.0 * kin1).abs() < 1e-12 * kin1.abs());
    }

    fn scale2(m: Vec2) -> Vec2 {
        [2.0 * m[0], 2.0 * m[1]]
    }

    #[test]
    fn total_energy_matches_per_cell_oracle() {
        // brute-force per-cell summation oracle
        let g = TorusGrid::new(2, 6).unwrap();
        let e = eos(0.7, 1.4);
        let f = ConservedField::from_fn(g, |x| {
            (
                1.0 + 0.5 * (x[0] * 3.0).sin().abs(),
                [x[1] * 0.2, (x[0] * 2.0).cos() * 0.1],
            )
        })
        .unwrap();
        let mut oracle = 0.0;
        for idx in 0..g.total_cells() {
            let r = f.rho[idx];
            let m = f.mom[idx];
            oracle += (0.5 * (m[0] * m[0] + m[1] * m[1]) / r + 0.7 / 0.4 * r.powf(1.4))
                * g.cell_volume();
        }
        assert!((total_energy(&f, &e) - oracle).abs() < 1e-13 * oracle);
    }

    #[test]
    fn total_energy_infinite_on_vacuum_momentum_cell() {
        let g = TorusGrid::new(1, 4).unwrap();
        // bypass the validating constructor to hit the infinite branch
        let f = ConservedField {
            grid: g,
            rho: vec![0.0, 1.0, 1.0, 1.0],
            mom: vec![[1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]],
            time: 0.0,
        };
        assert!(total_energy(&f, &eos(1.0, 1.4)).is_infinite());
    }

    #[test]
    fn velocity_reconstruction_with_floor() {
        let g = TorusGrid::new(1, 3).unwrap();
        let f = ConservedField::new(
            g,
            vec![2.0, 0.0, 1e-14],
            vec![[4.0, 0.0], [0.0, 0.0], [1e-14, 0.0]],
            0.0,
        )
        .unwrap();
        let u = velocity_from_conservative(&f, 1e-10).unwrap();
        assert!((u[0][0] - 2.0).abs() < 1e-15);
        assert_eq!(u[1], [0.0, 0.0]);
        assert!((u[2][0] - 1e-4).abs() < 1e-18);
        assert!(velocity_from_conservative(&f, 0.0).is_err());
    }

    #[test]
    fn admissibility_rejects_vacuum_momentum() {
        let g = TorusGrid::new(1, 2).unwrap();
        assert!(ConservedField::new(g, vec![0.0, 1.0], vec![[0.1, 0.0], [0.0, 0.0]], 0.0).is_err());
        assert!(ConservedField::new(g, vec![-0.1, 1.0], vec![[0.0, 0.0], [0.0, 0.0]], 0.0).is_err());
        assert!(ConservedField::new(g, vec![1.0, 1.0], vec![[0.0, 0.5], [0.0, 0.0]], 0.0).is_err());
    }

    #[test]
    fn trajectory_requires_increasing_times() {
        let g = TorusGrid::new(1, 4).unwrap();
        let f0 = ConservedField::constant(g, 1.0, [0.0, 0.0]).unwrap();
        let mut f1 = f0.clone();
        f1.time = 0.5;
        let t = Trajectory::new(vec![f0.clone(), f1]).unwrap();
        assert_eq!(t.len(), 2);
        let mut bad = f0.clone();
        bad.time = 0.0;
        let mut t2 = t;
        assert!(t2.push(bad).is_err());
        assert_eq!(t2.index_at_time(0.5, 1e-12), Some(1));
        assert_eq!(t2.index_at_time(0.25, 1e-12), None);
    }

    #[test]
    fn grid_wrap_and_centers() {
        let g = TorusGrid::new(1, 4).unwrap();
        assert_eq!(g.spacing(), 0.5);
        assert_eq!(g.wrap(-1), 3);
        assert_eq!(g.wrap(4), 0);
        assert_eq!(g.neighbor(0, 0, -1), 3);
        assert!((g.cell_center(0)[0] + 0.75).abs() < 1e-15);
        let g2 = TorusGrid::new(2, 4).unwrap();
        assert_eq!(g2.total_cells(), 16);
        assert_eq!(g2.neighbor(g2.index(3, 0), 0, 1), g2.index(0, 0));
        assert_eq!(g2.neighbor(g2.index(1, 3), 1, 1), g2.index(1, 0));
        assert!(TorusGrid::new(3, 4).is_err());
    }
}
