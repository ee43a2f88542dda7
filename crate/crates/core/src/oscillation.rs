//! Patchwork construction bookkeeping and weak-*-vs-strong convergence
//! fixtures.
//!
//! Genuine convex-integration momenta are out of reach of a constructive
//! library; this module verifies supplied candidate block fields (the
//! overdetermined kinetic constraint, the no-flux weak formulations, the
//! initial-end state condition, and the time-periodic pasting) and ships
//! synthetic oscillating sequences that exercise the convergence
//! diagnostics: weak-* pairings contracting while L1 separation persists.

use crate::bank::{SpatialFn, TestFunctionBank};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm_sq, SymMat, Vec2};
use crate::state::{ConservedField, EosParams, TorusGrid, Trajectory};

/// Axis-aligned box of cells `[lo, hi)` per axis; in 1D the y range is
/// `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AxisBox {
    pub lo: [usize; 2],
    pub hi: [usize; 2],
}

impl AxisBox {
    pub fn cell_count(&self) -> usize {
        (self.hi[0] - self.lo[0]) * (self.hi[1] - self.lo[1])
    }

    pub fn cells(&self, grid: TorusGrid) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.cell_count());
        for iy in self.lo[1]..self.hi[1] {
            for ix in self.lo[0]..self.hi[0] {
                out.push(grid.index(ix, iy));
            }
        }
        out
    }

    /// Center and half-widths in physical coordinates.
    pub fn geometry(&self, grid: TorusGrid) -> (Vec2, Vec2) {
        let h = grid.spacing();
        let cx = -1.0 + 0.5 * (self.lo[0] + self.hi[0]) as f64 * h;
        let wx = 0.5 * (self.hi[0] - self.lo[0]) as f64 * h;
        if grid.dim() == 1 {
            ([cx, 0.0], [wx, 0.0])
        } else {
            let cy = -1.0 + 0.5 * (self.lo[1] + self.hi[1]) as f64 * h;
            let wy = 0.5 * (self.hi[1] - self.lo[1]) as f64 * h;
            ([cx, cy], [wx, wy])
        }
    }
}

/// Partition of the cube into constant-density patches with the shared
/// kinetic constant.
#[derive(Debug, Clone)]
pub struct PatchSpec {
    pub grid: TorusGrid,
    pub blocks: Vec<AxisBox>,
    pub rho: Vec<f64>,
    pub period: f64,
    pub lambda: f64,
}

impl PatchSpec {
    pub fn new(
        grid: TorusGrid,
        blocks: Vec<AxisBox>,
        rho: Vec<f64>,
        period: f64,
        lambda: f64,
        eos: &EosParams,
    ) -> Result<Self> {
        if blocks.len() != rho.len() || blocks.is_empty() {
            return Err(Error::BadPatchCover("one density per block required".into()));
        }
        if !(period > 0.0) {
            return Err(Error::InvalidParameter { name: "period", value: period });
        }
        // disjoint cover check by counting
        let mut cover = vec![0usize; grid.total_cells()];
        for b in &blocks {
            if b.hi[0] > grid.cells_per_axis()
                || (grid.dim() == 2 && b.hi[1] > grid.cells_per_axis())
                || (grid.dim() == 1 && (b.lo[1] != 0 || b.hi[1] != 1))
                || b.lo[0] >= b.hi[0]
                || b.lo[1] >= b.hi[1]
            {
                return Err(Error::BadPatchCover(format!("bad box {b:?}")));
            }
            for idx in b.cells(grid) {
                cover[idx] += 1;
            }
        }
        if cover.iter().any(|&c| c != 1) {
            return Err(Error::BadPatchCover(
                "blocks must cover every cell exactly once".into(),
            ));
        }
        let mut required: f64 = 0.0;
        for &r in &rho {
            if !(r > 0.0) {
                return Err(Error::InvalidParameter { name: "rho_i", value: r });
            }
            required = required.max(eos.p(r) * grid.dim() as f64 / 2.0);
        }
        if lambda < required {
            return Err(Error::InfeasibleConstraint { lambda, required });
        }
        Ok(PatchSpec { grid, blocks, rho, period, lambda })
    }
}

/// Momentum magnitude solving the kinetic constraint
/// `1/2 |m|^2 / rho = Lambda - p(rho) d / 2`.
pub fn kinetic_constraint_momentum(
    rho_i: f64,
    lambda: f64,
    eos: &EosParams,
    dim: usize,
) -> Result<f64> {
    if rho_i < 0.0 {
        return Err(Error::NegativeDensity(rho_i));
    }
    let required = eos.p(rho_i) * dim as f64 / 2.0;
    if lambda < required {
        return Err(Error::InfeasibleConstraint { lambda, required });
    }
    Ok((2.0 * rho_i * (lambda - required)).sqrt())
}

/// Trace-free convective tensor `m (x) m / rho - |m|^2 / (d rho) I`.
pub fn oscillation_tensor(m: Vec2, rho: f64, dim: usize) -> SymMat {
    if rho <= 0.0 {
        return SymMat::ZERO;
    }
    let outer = SymMat::outer(m).scaled(1.0 / rho);
    outer.minus(&SymMat::identity(dim).scaled(norm_sq(m) / (dim as f64 * rho)))
}

/// Time-sampled momentum field on one patch over `[0, period]`.
#[derive(Debug, Clone)]
pub struct BlockMotion {
    pub times: Vec<f64>,
    /// `frames[k][local]` with `local` row-major inside the box.
    pub frames: Vec<Vec<Vec2>>,
}

impl BlockMotion {
    pub fn at_rest(box_: &AxisBox, period: f64, samples: usize) -> Self {
        let times = (0..=samples).map(|k| period * k as f64 / samples as f64).collect();
        let frames = (0..=samples).map(|_| vec![[0.0, 0.0]; box_.cell_count()]).collect();
        BlockMotion { times, frames }
    }
}

const END_STATE_TOL: f64 = 1e-12;

/// Paste per-block motions into one global trajectory over `[0, horizon]`,
/// extending each block time-periodically. The density never changes.
pub fn patchwork_assemble(
    spec: &PatchSpec,
    motions: &[BlockMotion],
    horizon: f64,
) -> Result<Trajectory> {
    if motions.len() != spec.blocks.len() {
        return Err(Error::BadPatchCover("one motion per block required".into()));
    }
    let times = &motions[0].times;
    if times.first().copied() != Some(0.0)
        || (times.last().copied().unwrap_or(-1.0) - spec.period).abs() > 1e-12 * spec.period
    {
        return Err(Error::InadmissibleField(
            "block motion must sample [0, period]".into(),
        ));
    }
    for (b, motion) in motions.iter().enumerate() {
        if motion.times.len() != times.len()
            || motion
                .times
                .iter()
                .zip(times.iter())
                .any(|(a, c)| (a - c).abs() > 1e-12 * (1.0 + c.abs()))
        {
            return Err(Error::InadmissibleField(format!(
                "block {b}: motion time grid differs"
            )));
        }
        if motion.frames.len() != motion.times.len()
            || motion.frames.iter().any(|f| f.len() != spec.blocks[b].cell_count())
        {
            return Err(Error::InadmissibleField(format!("block {b}: frame shape")));
        }
        for frame in [motion.frames.first().unwrap(), motion.frames.last().unwrap()] {
            let worst = frame.iter().map(|m| norm_sq(*m).sqrt()).fold(0.0, f64::max);
            if worst > END_STATE_TOL {
                return Err(Error::EndStateViolation(worst));
            }
        }
    }

    // global density, never time-dependent
    let mut rho = vec![0.0; spec.grid.total_cells()];
    for (b, box_) in spec.blocks.iter().enumerate() {
        for idx in box_.cells(spec.grid) {
            rho[idx] = spec.rho[b];
        }
    }

    let mut snapshots = Vec::new();
    let mut m_period = 0usize;
    'outer: loop {
        let t_base = m_period as f64 * spec.period;
        for (j, &tj) in times.iter().enumerate() {
            if m_period > 0 && j == 0 {
                continue; // same instant as the previous period's end
            }
            let t = t_base + tj;
            if t > horizon + 1e-12 * horizon.max(1.0) {
                break 'outer;
            }
            let mut mom = vec![[0.0, 0.0]; spec.grid.total_cells()];
            for (b, box_) in spec.blocks.iter().enumerate() {
                for (local, idx) in box_.cells(spec.grid).into_iter().enumerate() {
                    mom[idx] = motions[b].frames[j][local];
                }
            }
            snapshots.push(ConservedField::new(spec.grid, rho.clone(), mom, t)?);
        }
        m_period += 1;
        if m_period > 100_000 {
            return Err(Error::InadmissibleField("horizon too long".into()));
        }
    }
    Trajectory::new(snapshots)
}

/// Residuals of the no-flux weak formulations on one block: the
/// divergence-free pairing (scalar test functions, no boundary conditions)
/// and the momentum pairing with the trace-free tensor.
#[derive(Debug, Clone)]
pub struct NofluxReport {
    pub mass: Vec<(String, f64)>,
    pub momentum: Vec<(String, f64)>,
    pub max_abs_mass: f64,
    pub max_abs_momentum: f64,
}

/// Monomial test functions in block-normalized coordinates, C1 on the closed
/// block with no boundary constraint.
fn block_monomials(dim: usize) -> Vec<(String, [u32; 2])> {
    let mut out = vec![
        ("1".to_string(), [0, 0]),
        ("x".to_string(), [1, 0]),
        ("x2".to_string(), [2, 0]),
        ("x3".to_string(), [3, 0]),
    ];
    if dim == 2 {
        out.push(("y".to_string(), [0, 1]));
        out.push(("y2".to_string(), [0, 2]));
        out.push(("xy".to_string(), [1, 1]));
    }
    out
}

fn monomial_eval(p: [u32; 2], xh: Vec2) -> f64 {
    xh[0].powi(p[0] as i32) * xh[1].powi(p[1] as i32)
}

fn monomial_grad(p: [u32; 2], xh: Vec2, halfwidth: Vec2) -> Vec2 {
    let gx = if p[0] == 0 {
        0.0
    } else {
        p[0] as f64 * xh[0].powi(p[0] as i32 - 1) * xh[1].powi(p[1] as i32) / halfwidth[0]
    };
    let gy = if p[1] == 0 {
        0.0
    } else {
        p[1] as f64 * xh[0].powi(p[0] as i32) * xh[1].powi(p[1] as i32 - 1) / halfwidth[1]
    };
    [gx, gy]
}

pub fn noflux_weak_residual(
    spec: &PatchSpec,
    block_idx: usize,
    motion: &BlockMotion,
) -> Result<NofluxReport> {
    let box_ = &spec.blocks[block_idx];
    if motion.frames.iter().any(|f| f.len() != box_.cell_count()) {
        return Err(Error::InadmissibleField("motion does not fit block".into()));
    }
    let grid = spec.grid;
    let dim = grid.dim();
    let rho_i = spec.rho[block_idx];
    let (center, halfwidth) = box_.geometry(grid);
    let hw = [halfwidth[0], if dim == 2 { halfwidth[1] } else { 1.0 }];
    let cells = box_.cells(grid);
    let vol = grid.cell_volume();
    let time_factors: [(&str, fn(f64, f64) -> f64, fn(f64, f64) -> f64); 3] = [
        ("1", |_t, _p| 1.0, |_t, _p| 0.0),
        ("t", |t, p| t / p, |_t, p| 1.0 / p),
        (
            "bump",
            |t, p| {
                let s = t / p;
                4.0 * s * (1.0 - s)
            },
            |t, p| (4.0 - 8.0 * t / p) / p,
        ),
    ];

    let mut mass = Vec::new();
    let mut momentum = Vec::new();
    for (mono_id, p) in block_monomials(dim) {
        for (tf_id, tf, dtf) in time_factors.iter() {
            // (O5a): int int m . grad(phi) over the block
            let mut mass_integrand = Vec::with_capacity(motion.times.len());
            for (k, &t) in motion.times.iter().enumerate() {
                let mut acc = 0.0;
                for (local, &idx) in cells.iter().enumerate() {
                    let x = grid.cell_center(idx);
                    let xh = [(x[0] - center[0]) / hw[0], if dim == 2 {
                        (x[1] - center[1]) / hw[1]
                    } else {
                        0.0
                    }];
                    let g = monomial_grad(p, xh, hw);
                    acc += dot(motion.frames[k][local], g);
                }
                mass_integrand.push(tf(t, spec.period) * acc * vol);
            }
            let mut r_mass = 0.0;
            for k in 1..motion.times.len() {
                r_mass += 0.5
                    * (mass_integrand[k] + mass_integrand[k - 1])
                    * (motion.times[k] - motion.times[k - 1]);
            }
            mass.push((format!("{mono_id}|{tf_id}"), r_mass));

            // (O5): int int [ m . dt(phi e_a) + T : grad(phi e_a) ]
            for axis in 0..dim {
                let mut integrand = Vec::with_capacity(motion.times.len());
                for (k, &t) in motion.times.iter().enumerate() {
                    let mut acc = 0.0;
                    for (local, &idx) in cells.iter().enumerate() {
                        let x = grid.cell_center(idx);
                        let xh = [(x[0] - center[0]) / hw[0], if dim == 2 {
                            (x[1] - center[1]) / hw[1]
                        } else {
                            0.0
                        }];
                        let m = motion.frames[k][local];
                        let phi = monomial_eval(p, xh);
                        let g = monomial_grad(p, xh, hw);
                        let tensor = oscillation_tensor(m, rho_i, dim);
                        acc += m[axis] * dtf(t, spec.period) * phi
                            + tf(t, spec.period) * dot(tensor.row(axis), g);
                    }
                    integrand.push(acc * vol);
                }
                let mut r = 0.0;
                for k in 1..motion.times.len() {
                    r += 0.5
                        * (integrand[k] + integrand[k - 1])
                        * (motion.times[k] - motion.times[k - 1]);
                }
                momentum.push((format!("{mono_id}|{tf_id}|e{axis}"), r));
            }
        }
    }
    let max_abs_mass = mass.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max);
    let max_abs_momentum = momentum.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max);
    Ok(NofluxReport { mass, momentum, max_abs_mass, max_abs_momentum })
}

/// Synthetic oscillating sequence with a weak-* limit candidate.
#[derive(Debug, Clone)]
pub struct OscillatingSequence {
    pub members: Vec<ConservedField>,
    pub target: ConservedField,
    /// PASS threshold for the L1 separation verdict.
    pub separation_threshold: f64,
}

impl OscillatingSequence {
    pub fn new(
        members: Vec<ConservedField>,
        target: ConservedField,
        separation_threshold: f64,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::SequenceTooShort(0));
        }
        if members.iter().any(|m| m.grid() != target.grid()) {
            return Err(Error::GridMismatch);
        }
        Ok(OscillatingSequence { members, target, separation_threshold })
    }
}

/// Dyadic stripe fixture: member `n` oscillates `rho_bar +- delta` on
/// `2^(n+1)` stripes along x, with zero momentum; the target is the constant
/// `rho_bar`. Members are diagnostic fields, not Euler solutions.
pub fn checkerboard_sequence(
    rho_bar: f64,
    delta: f64,
    n_max: usize,
    grid: TorusGrid,
) -> Result<OscillatingSequence> {
    if !(delta > 0.0 && delta < rho_bar) {
        return Err(Error::InvalidParameter { name: "delta", value: delta });
    }
    let n = grid.cells_per_axis();
    let finest_stripes = 1usize << (n_max + 1);
    if n % finest_stripes != 0 {
        return Err(Error::IncompatiblePartition { block: finest_stripes, n });
    }
    let mut members = Vec::with_capacity(n_max + 1);
    for level in 0..=n_max {
        let stripes = 1usize << (level + 1);
        let width = n / stripes;
        let f = ConservedField::from_fn(grid, |x| {
            let ix = (((x[0] + 1.0) / grid.spacing()).floor() as usize).min(n - 1);
            let stripe = ix / width;
            let sign = if stripe % 2 == 0 { 1.0 } else { -1.0 };
            (rho_bar + sign * delta, [0.0, 0.0])
        })?;
        members.push(f);
    }
    let target = ConservedField::constant(grid, rho_bar, [0.0, 0.0])?;
    let threshold = 0.5 * delta * grid.domain_volume();
    OscillatingSequence::new(members, target, threshold)
}

/// Weak-* convergence table: pairings of `rho_n - rho_target` and `m_n`
/// against the spatial parts of the bank, using exact cell integrals of the
/// test functions (piecewise-constant fields pair exactly).
#[derive(Debug, Clone)]
pub struct WeakstarRow {
    pub id: String,
    /// `|<rho_n - rho_0, phi>|` per member.
    pub rho: Vec<f64>,
    /// `max_axis |<m_n[axis], phi>|` per member.
    pub mom: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct WeakstarTable {
    pub rows: Vec<WeakstarRow>,
}

impl WeakstarTable {
    pub fn row(&self, id: &str) -> Option<&WeakstarRow> {
        self.rows.iter().find(|r| r.id == id)
    }

    /// Level-to-level contraction ratios of the density pairing for one row.
    pub fn decay_ratios(&self, id: &str) -> Option<Vec<f64>> {
        let row = self.row(id)?;
        Some(
            row.rho
                .windows(2)
                .map(|w| if w[0] == 0.0 { 0.0 } else { w[1] / w[0] })
                .collect(),
        )
    }
}

/// Unique spatial members of a bank (per spatial id, first occurrence).
fn unique_spatial(bank: &TestFunctionBank) -> Vec<(String, SpatialFn)> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for tf in &bank.scalar {
        let sid = tf.space.id();
        if seen.insert(sid.clone()) {
            out.push((sid, tf.space.clone()));
        }
    }
    out
}

pub fn weakstar_diagnostics(
    seq: &OscillatingSequence,
    bank: &TestFunctionBank,
) -> Result<WeakstarTable> {
    if seq.members.len() < 3 {
        return Err(Error::SequenceTooShort(seq.members.len()));
    }
    let grid = seq.target.grid();
    let mut rows = Vec::new();
    for (id, space) in unique_spatial(bank) {
        let integrals: Vec<f64> =
            (0..grid.total_cells()).map(|idx| space.cell_integral(grid, idx)).collect();
        let mut rho = Vec::with_capacity(seq.members.len());
        let mut mom = Vec::with_capacity(seq.members.len());
        for member in &seq.members {
            let mut pr = 0.0;
            let mut pmx = 0.0;
            let mut pmy = 0.0;
            for idx in 0..grid.total_cells() {
                pr += (member.rho[idx] - seq.target.rho[idx]) * integrals[idx];
                pmx += member.mom[idx][0] * integrals[idx];
                pmy += member.mom[idx][1] * integrals[idx];
            }
            rho.push(pr.abs());
            mom.push(pmx.abs().max(pmy.abs()));
        }
        rows.push(WeakstarRow { id, rho, mom });
    }
    Ok(WeakstarTable { rows })
}

#[derive(Debug, Clone)]
pub struct L1Report {
    pub per_member: Vec<f64>,
    pub liminf_estimate: f64,
    pub threshold: f64,
    /// True when the sequence stays L1-separated from its weak-* target.
    pub separated: bool,
}

/// `min_n int |rho_n - rho_0|`: strict positivity demonstrates that weak-*
/// convergence is not strong.
pub fn l1_separation(seq: &OscillatingSequence) -> Result<L1Report> {
    if seq.members.len() < 3 {
        return Err(Error::SequenceTooShort(seq.members.len()));
    }
    let grid = seq.target.grid();
    let vol = grid.cell_volume();
    let per_member: Vec<f64> = seq
        .members
        .iter()
        .map(|m| {
            m.rho
                .iter()
                .zip(seq.target.rho.iter())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                * vol
        })
        .collect();
    let liminf = per_member.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(L1Report {
        per_member,
        liminf_estimate: liminf,
        threshold: seq.separation_threshold,
        separated: liminf >= seq.separation_threshold,
    })
}
