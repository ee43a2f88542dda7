//! Turbulent defect fields from block coarse graining.
//!
//! Measures are represented as piecewise-constant densities on a coarse
//! block partition: per block a symmetric Reynolds matrix `Rv` and a scalar
//! pressure defect `Rp >= 0`. Both arise as Jensen gaps of block averaging
//! and are positive (semi-definite) by convexity.

use crate::error::{Error, Result};
use crate::linalg::{SymMat, Vec2};
use crate::state::{kinetic_extended, ConservedField, EosParams, TorusGrid, Trajectory};

/// Coarse partition of a torus grid into `(N/H)^d` blocks of `H^d` cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockPartition {
    grid: TorusGrid,
    block: usize,
}

impl BlockPartition {
    pub fn new(grid: TorusGrid, block: usize) -> Result<Self> {
        if block == 0 || grid.cells_per_axis() % block != 0 {
            return Err(Error::IncompatiblePartition { block, n: grid.cells_per_axis() });
        }
        Ok(BlockPartition { grid, block })
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn block_factor(&self) -> usize {
        self.block
    }

    pub fn blocks_per_axis(&self) -> usize {
        self.grid.cells_per_axis() / self.block
    }

    pub fn num_blocks(&self) -> usize {
        let b = self.blocks_per_axis();
        if self.grid.dim() == 1 {
            b
        } else {
            b * b
        }
    }

    pub fn cells_per_block(&self) -> usize {
        if self.grid.dim() == 1 {
            self.block
        } else {
            self.block * self.block
        }
    }

    pub fn block_volume(&self) -> f64 {
        (self.grid.spacing() * self.block as f64).powi(self.grid.dim() as i32)
    }

    /// The coarse grid whose cells are the blocks.
    pub fn coarse_grid(&self) -> TorusGrid {
        TorusGrid::new(self.grid.dim(), self.blocks_per_axis()).expect("valid by construction")
    }

    pub fn block_of_cell(&self, idx: usize) -> usize {
        let (ix, iy) = self.grid.coords(idx);
        let bx = ix / self.block;
        let by = iy / self.block;
        by * self.blocks_per_axis() + bx
    }

    /// Fine-grid cell indices belonging to block `b`.
    pub fn cells_of_block(&self, b: usize) -> Vec<usize> {
        let bpa = self.blocks_per_axis();
        let (bx, by) = (b % bpa, b / bpa);
        let mut cells = Vec::with_capacity(self.cells_per_block());
        let jy_range = if self.grid.dim() == 1 { 0..1 } else { 0..self.block };
        for jy in jy_range {
            for jx in 0..self.block {
                cells.push(self.grid.index(bx * self.block + jx, by * self.block + jy));
            }
        }
        cells
    }

    pub fn block_center(&self, b: usize) -> Vec2 {
        self.coarse_grid().cell_center(b)
    }
}

/// Reynolds and pressure defect densities on a block partition.
#[derive(Debug, Clone, PartialEq)]
pub struct DefectField {
    partition: BlockPartition,
    pub rv: Vec<SymMat>,
    pub rp: Vec<f64>,
}

impl DefectField {
    pub fn new(partition: BlockPartition, rv: Vec<SymMat>, rp: Vec<f64>) -> Result<Self> {
        if rv.len() != partition.num_blocks() || rp.len() != partition.num_blocks() {
            return Err(Error::IncompatiblePartition {
                block: partition.block_factor(),
                n: rv.len(),
            });
        }
        Ok(DefectField { partition, rv, rp })
    }

    pub fn zero(partition: BlockPartition) -> Self {
        let n = partition.num_blocks();
        DefectField { partition, rv: vec![SymMat::ZERO; n], rp: vec![0.0; n] }
    }

    pub fn partition(&self) -> BlockPartition {
        self.partition
    }

    /// Total defect energy `sum_B (1/2 tr Rv + Rp / (gamma - 1)) |B|`, the
    /// quantity charged by the energy inequality.
    pub fn energy_mass(&self, eos: &EosParams) -> f64 {
        let vol = self.partition.block_volume();
        let mut total = 0.0;
        for (rv, &rp) in self.rv.iter().zip(self.rp.iter()) {
            total += 0.5 * rv.trace() + rp / (eos.gamma - 1.0);
        }
        total * vol
    }

    /// Positivity audit: `Rp >= -tol_p` and smallest `Rv` eigenvalue above
    /// `-tol_v`, with tolerances scaled by the field's own magnitude.
    pub fn validate(&self) -> Result<()> {
        let dim = self.partition.grid().dim();
        let scale_v = self
            .rv
            .iter()
            .map(|m| m.trace().abs())
            .fold(0.0_f64, f64::max)
            .max(1e-30);
        let scale_p = self.rp.iter().map(|p| p.abs()).fold(0.0_f64, f64::max).max(1e-30);
        for (b, (rv, &rp)) in self.rv.iter().zip(self.rp.iter()).enumerate() {
            if rp < -1e-12 * scale_p {
                return Err(Error::InadmissibleField(format!(
                    "block {b}: pressure defect {rp:e} negative"
                )));
            }
            let lam = rv.min_eigenvalue(dim);
            if lam < -1e-12 * scale_v {
                return Err(Error::InadmissibleField(format!(
                    "block {b}: Reynolds defect eigenvalue {lam:e} negative"
                )));
            }
        }
        Ok(())
    }
}

/// Time-indexed defect fields aligned with trajectory snapshots.
#[derive(Debug, Clone)]
pub struct DefectSeries {
    pub times: Vec<f64>,
    pub fields: Vec<DefectField>,
}

impl DefectSeries {
    pub fn new(times: Vec<f64>, fields: Vec<DefectField>) -> Result<Self> {
        if times.len() != fields.len() || times.is_empty() {
            return Err(Error::InadmissibleField("defect series shape mismatch".into()));
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InadmissibleField(
                    "defect series times not increasing".into(),
                ));
            }
        }
        let p = fields[0].partition();
        if fields.iter().any(|f| f.partition() != p) {
            return Err(Error::GridMismatch);
        }
        Ok(DefectSeries { times, fields })
    }

    /// Zero defects at every snapshot of a trajectory.
    pub fn zero_like(traj: &Trajectory, partition: BlockPartition) -> Result<Self> {
        Self::new(
            traj.times(),
            traj.snapshots().iter().map(|_| DefectField::zero(partition)).collect(),
        )
    }

    /// Defects of every snapshot of a trajectory under one partition.
    pub fn from_trajectory(
        traj: &Trajectory,
        partition: BlockPartition,
        eos: &EosParams,
    ) -> Result<Self> {
        let fields = traj
            .snapshots()
            .iter()
            .map(|s| defect_field(s, &partition, eos))
            .collect::<Result<Vec<_>>>()?;
        Self::new(traj.times(), fields)
    }

    pub fn partition(&self) -> BlockPartition {
        self.fields[0].partition()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn index_at_time(&self, t: f64, tol: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() <= tol)
    }

    /// Defect energy mass as a time series.
    pub fn energy_mass_series(&self, eos: &EosParams) -> Vec<f64> {
        self.fields.iter().map(|f| f.energy_mass(eos)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for f in &self.fields {
            f.validate()?;
        }
        Ok(())
    }
}

fn check_compatible(field: &ConservedField, partition: &BlockPartition) -> Result<()> {
    if field.grid() != partition.grid() {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// Block means of density and momentum, as a field on the coarse grid.
/// Mass and momentum totals are preserved exactly.
pub fn coarse_grain(field: &ConservedField, partition: &BlockPartition) -> Result<ConservedField> {
    check_compatible(field, partition)?;
    let nb = partition.num_blocks();
    let inv = 1.0 / partition.cells_per_block() as f64;
    let mut rho = vec![0.0; nb];
    let mut mom = vec![[0.0, 0.0]; nb];
    for b in 0..nb {
        for idx in partition.cells_of_block(b) {
            rho[b] += field.rho[idx];
            mom[b][0] += field.mom[idx][0];
            mom[b][1] += field.mom[idx][1];
        }
        rho[b] *= inv;
        mom[b][0] *= inv;
        mom[b][1] *= inv;
        // guard tiny negative roundoff on momentum of vacuum blocks
        if rho[b] == 0.0 {
            mom[b] = [0.0, 0.0];
        }
    }
    ConservedField::new(partition.coarse_grid(), rho, mom, field.time)
}

/// Pressure defect `<p(rho)>_B - p(<rho>_B)`, non-negative by Jensen.
pub fn pressure_defect(
    field: &ConservedField,
    partition: &BlockPartition,
    eos: &EosParams,
) -> Result<Vec<f64>> {
    check_compatible(field, partition)?;
    let nb = partition.num_blocks();
    let inv = 1.0 / partition.cells_per_block() as f64;
    let mut out = vec![0.0; nb];
    for b in 0..nb {
        let mut mean_p = 0.0;
        let mut mean_rho = 0.0;
        for idx in partition.cells_of_block(b) {
            mean_p += eos.p(field.rho[idx]);
            mean_rho += field.rho[idx];
        }
        mean_p *= inv;
        mean_rho *= inv;
        out[b] = mean_p - eos.p(mean_rho);
    }
    Ok(out)
}

/// Reynolds defect `<m (x) m / rho>_B - mbar (x) mbar / rhobar`, positive
/// semi-definite by the quadratic-form convexity argument.
pub fn reynolds_defect(
    field: &ConservedField,
    partition: &BlockPartition,
) -> Result<Vec<SymMat>> {
    check_compatible(field, partition)?;
    let nb = partition.num_blocks();
    let inv = 1.0 / partition.cells_per_block() as f64;
    let mut out = vec![SymMat::ZERO; nb];
    for b in 0..nb {
        let mut mean = SymMat::ZERO;
        let mut rho_bar = 0.0;
        let mut m_bar = [0.0, 0.0];
        for idx in partition.cells_of_block(b) {
            let m = field.mom[idx];
            let r = field.rho[idx];
            if r > 0.0 {
                mean = mean.plus(&SymMat::outer(m).scaled(1.0 / r));
            }
            // r == 0 with m == 0 contributes zero (convex extension)
            rho_bar += r;
            m_bar[0] += m[0];
            m_bar[1] += m[1];
        }
        mean = mean.scaled(inv);
        rho_bar *= inv;
        m_bar[0] *= inv;
        m_bar[1] *= inv;
        let coarse = if rho_bar > 0.0 {
            SymMat::outer(m_bar).scaled(1.0 / rho_bar)
        } else if m_bar[0] == 0.0 && m_bar[1] == 0.0 {
            SymMat::ZERO
        } else {
            return Err(Error::InadmissibleBlock(b));
        };
        out[b] = mean.minus(&coarse);
    }
    Ok(out)
}

/// Both defects of one snapshot.
pub fn defect_field(
    field: &ConservedField,
    partition: &BlockPartition,
    eos: &EosParams,
) -> Result<DefectField> {
    let rv = reynolds_defect(field, partition)?;
    let rp = pressure_defect(field, partition, eos)?;
    DefectField::new(*partition, rv, rp)
}

/// Residuals of the exact block energy identity
/// `<1/2 |m|^2/rho + P>_B = 1/2 |mbar|^2/rhobar + P(rhobar)
///  + 1/2 tr Rv + Rp / (gamma - 1)`.
#[derive(Debug, Clone)]
pub struct BookkeepingReport {
    pub residuals: Vec<f64>,
    pub max_abs_residual: f64,
    /// Largest block energy density, for relative comparisons.
    pub scale: f64,
}

pub fn energy_bookkeeping(
    field: &ConservedField,
    partition: &BlockPartition,
    eos: &EosParams,
) -> Result<BookkeepingReport> {
    check_compatible(field, partition)?;
    let coarse = coarse_grain(field, partition)?;
    let defects = defect_field(field, partition, eos)?;
    let inv = 1.0 / partition.cells_per_block() as f64;
    let nb = partition.num_blocks();
    let mut residuals = Vec::with_capacity(nb);
    let mut max_abs: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for b in 0..nb {
        let mut fine_mean = 0.0;
        for idx in partition.cells_of_block(b) {
            fine_mean += 0.5 * kinetic_extended(field.rho[idx], field.mom[idx])
                + eos.pot(field.rho[idx]);
        }
        fine_mean *= inv;
        let coarse_density = 0.5 * kinetic_extended(coarse.rho[b], coarse.mom[b])
            + eos.pot(coarse.rho[b]);
        let reconstructed = coarse_density
            + 0.5 * defects.rv[b].trace()
            + defects.rp[b] / (eos.gamma - 1.0);
        let r = fine_mean - reconstructed;
        residuals.push(r);
        max_abs = max_abs.max(r.abs());
        scale = scale.max(fine_mean.abs());
    }
    Ok(BookkeepingReport { residuals, max_abs_residual: max_abs, scale })
}

/// One member of a vanishing-viscosity sequence.
#[derive(Debug, Clone, Copy)]
pub struct SequenceMember<'a> {
    pub epsilon: f64,
    pub trajectory: &'a Trajectory,
}

/// Defect estimate from a vanishing-viscosity sequence at one snapshot time:
/// the finest member's block defects plus Cauchy diagnostics for the weak-*
/// limit of the block pairings.
#[derive(Debug, Clone)]
pub struct SequenceDefect {
    pub defects: DefectField,
    /// Per consecutive pair, the largest block-mean density difference.
    pub cauchy_rho: Vec<f64>,
    /// Per consecutive pair, the largest block-mean momentum difference.
    pub cauchy_mom: Vec<f64>,
}

pub fn sequence_defect(
    members: &[SequenceMember<'_>],
    partition: &BlockPartition,
    eos: &EosParams,
    t: f64,
) -> Result<SequenceDefect> {
    if members.len() < 3 {
        return Err(Error::SequenceTooShort(members.len()));
    }
    for w in members.windows(2) {
        if !(w[1].epsilon < w[0].epsilon) {
            return Err(Error::NonDecreasingEpsilons);
        }
    }
    let grid = members[0].trajectory.grid();
    if members.iter().any(|m| m.trajectory.grid() != grid) || grid != partition.grid() {
        return Err(Error::GridMismatch);
    }
    let tol = 1e-10 * (1.0 + t.abs());
    let mut coarse_fields = Vec::with_capacity(members.len());
    let mut snaps = Vec::with_capacity(members.len());
    for member in members {
        let idx = member
            .trajectory
            .index_at_time(t, tol)
            .ok_or(Error::NotASnapshotTime(t))?;
        let snap = &member.trajectory.snapshots()[idx];
        coarse_fields.push(coarse_grain(snap, partition)?);
        snaps.push(snap);
    }
    let mut cauchy_rho = Vec::with_capacity(members.len() - 1);
    let mut cauchy_mom = Vec::with_capacity(members.len() - 1);
    for w in coarse_fields.windows(2) {
        let mut dr: f64 = 0.0;
        let mut dm: f64 = 0.0;
        for b in 0..partition.num_blocks() {
            dr = dr.max((w[1].rho[b] - w[0].rho[b]).abs());
            dm = dm
                .max((w[1].mom[b][0] - w[0].mom[b][0]).abs())
                .max((w[1].mom[b][1] - w[0].mom[b][1]).abs());
        }
        cauchy_rho.push(dr);
        cauchy_mom.push(dm);
    }
    let defects = defect_field(snaps.last().unwrap(), partition, eos)?;
    Ok(SequenceDefect { defects, cauchy_rho, cauchy_mom })
}
