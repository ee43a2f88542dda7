//! Dissipative-solution records and the compatibility machinery: one-sided
//! Lipschitz estimation, the Gronwall defect bound, Besov seminorms, and the
//! relative-energy gap against a reference trajectory.

use crate::bank::Envelope;
use crate::defect::{BlockPartition, DefectSeries};
use crate::error::{Error, Result};
use crate::linalg::{Mat2, Vec2};
use crate::solver::{velocity_gradients, EnergyLedger};
use crate::state::{
    kinetic_extended, total_energy, velocity_from_conservative, ConservedField, EosParams,
    TorusGrid, Trajectory, DENSITY_FLOOR,
};
use crate::weak_form::{energy_inequality_slack, SlackReport};

/// A dissipative-solution candidate: trajectory, time-indexed defect fields,
/// energy ledger, and a free-form note on how it was generated.
///
/// The energy inequality controls `E(rho, m) + defect energy`, so the field
/// and the defects must form a consistent pair: either block means with
/// their block defects ([`DissipativeRecord::coarse_grained`], where the sum
/// equals the fine energy exactly), or a resolved field with vanishing
/// defects. Attaching coarse-block defects to the fine field double-counts
/// the fluctuation energy and the audit will flag it.
#[derive(Debug, Clone)]
pub struct DissipativeRecord {
    pub trajectory: Trajectory,
    pub defects: DefectSeries,
    pub ledger: EnergyLedger,
    pub provenance: String,
}

impl DissipativeRecord {
    pub fn new(
        trajectory: Trajectory,
        defects: DefectSeries,
        ledger: EnergyLedger,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let times = trajectory.times();
        if defects.times.len() != times.len()
            || defects
                .times
                .iter()
                .zip(times.iter())
                .any(|(a, b)| (a - b).abs() > 1e-10 * (1.0 + b.abs()))
        {
            return Err(Error::InadmissibleField(
                "defect series times do not match trajectory snapshots".into(),
            ));
        }
        Ok(DissipativeRecord {
            trajectory,
            defects,
            ledger,
            provenance: provenance.into(),
        })
    }

    /// Assemble a record from a solver output: defects of every snapshot on
    /// the given partition.
    pub fn assemble(
        trajectory: Trajectory,
        ledger: EnergyLedger,
        partition: BlockPartition,
        eos: &EosParams,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let defects = DefectSeries::from_trajectory(&trajectory, partition, eos)?;
        Self::new(trajectory, defects, ledger, provenance)
    }

    /// Coarse-grained record: block means as the trajectory, block defects
    /// taken from the fine fields. The energy ledger carries the combined
    /// field + defect energy, which equals the fine energy exactly.
    pub fn coarse_grained(
        fine: &Trajectory,
        partition: BlockPartition,
        eos: &EosParams,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let defects = DefectSeries::from_trajectory(fine, partition, eos)?;
        let coarse_snaps = fine
            .snapshots()
            .iter()
            .map(|s| crate::defect::coarse_grain(s, &partition))
            .collect::<Result<Vec<_>>>()?;
        let trajectory = Trajectory::new(coarse_snaps)?;
        let mut ledger = EnergyLedger::default();
        for snap in fine.snapshots() {
            ledger.push(snap.time, total_energy(snap, eos), 0.0);
        }
        Self::new(trajectory, defects, ledger, provenance)
    }

    pub fn grid(&self) -> TorusGrid {
        self.trajectory.grid()
    }

    pub fn partition(&self) -> BlockPartition {
        self.defects.partition()
    }

    pub fn times(&self) -> Vec<f64> {
        self.trajectory.times()
    }

    pub fn initial_energy(&self, eos: &EosParams) -> f64 {
        total_energy(self.trajectory.first(), eos)
            + self.defects.fields[0].energy_mass(eos)
    }

    /// `G(t) = E(rho, m)(t) + defect energy mass(t)`, the quantity the energy
    /// inequality controls.
    pub fn total_energy_series(&self, eos: &EosParams) -> Vec<f64> {
        self.trajectory
            .snapshots()
            .iter()
            .zip(self.defects.fields.iter())
            .map(|(s, d)| total_energy(s, eos) + d.energy_mass(eos))
            .collect()
    }

    /// Energy-inequality audit including defect contributions.
    pub fn energy_inequality(&self, envelopes: &[Envelope], eos: &EosParams) -> SlackReport {
        let times = self.times();
        let total = self.total_energy_series(eos);
        let tol = 1e-6 * total.first().copied().unwrap_or(0.0).abs();
        energy_inequality_slack(&times, &total, envelopes, tol)
    }

    /// Full invariant audit: defect positivity at every time and the energy
    /// inequality over the record's own envelope family.
    pub fn validate(&self, eos: &EosParams) -> Result<()> {
        self.defects.validate()?;
        let t_end = self.trajectory.last().time;
        let envelopes = crate::bank::default_envelopes(t_end.max(f64::MIN_POSITIVE));
        let report = self.energy_inequality(&envelopes, eos);
        if !report.pass {
            return Err(Error::InadmissibleField(format!(
                "energy inequality slack {:e} below tolerance",
                report.min_slack
            )));
        }
        Ok(())
    }
}

/// Smallest eigenvalue deficit of the symmetric velocity gradient: the
/// smallest `d` with `Du + d I >= 0` everywhere (may be negative).
pub fn one_sided_lipschitz_from_grads(grads: &[Mat2], dim: usize) -> f64 {
    grads
        .iter()
        .map(|g| -g.sym().min_eigenvalue(dim))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// One-sided Lipschitz rate of a velocity field via periodic central
/// differences.
pub fn one_sided_lipschitz_d(u: &[Vec2], grid: TorusGrid) -> f64 {
    let grads = velocity_gradients(u, grid);
    one_sided_lipschitz_from_grads(&grads, grid.dim())
}

#[derive(Debug, Clone)]
pub struct GronwallReport {
    pub times: Vec<f64>,
    /// Total defect energy `D(t)`.
    pub defect_mass: Vec<f64>,
    /// Envelope `(D(t0) + seed) exp(C int d(s) ds)`.
    pub bound: Vec<f64>,
    pub max_ratio: f64,
    pub pass: bool,
    /// Set when more than 1% of cells sit at the density floor, making the
    /// reconstructed velocity (hence `d`) unreliable.
    pub unreliable_velocity: bool,
}

/// Gronwall envelope for the defect mass: `D(tau) <= (D(t0) + seed) *
/// exp(C int_t0^tau d(s) ds)` with `C = max(gamma - 1, 2) / 2` and seed
/// `1e-6 E(0)` (without the seed the bound is vacuous whenever the initial
/// defects vanish exactly).
pub fn gronwall_defect_bound(
    record: &DissipativeRecord,
    eos: &EosParams,
    interval: (f64, f64),
) -> Result<GronwallReport> {
    let all_times = record.times();
    let idx: Vec<usize> = all_times
        .iter()
        .enumerate()
        .filter(|(_, &t)| t >= interval.0 - 1e-12 && t <= interval.1 + 1e-12)
        .map(|(i, _)| i)
        .collect();
    if idx.len() < 2 {
        return Err(Error::NotASnapshotTime(interval.0));
    }
    let grid = record.grid();
    let mut unreliable = false;
    let mut d_rate = Vec::with_capacity(idx.len());
    let mut defect_mass = Vec::with_capacity(idx.len());
    let mut times = Vec::with_capacity(idx.len());
    for &i in &idx {
        let snap = &record.trajectory.snapshots()[i];
        let floored = snap.rho.iter().filter(|&&r| r <= DENSITY_FLOOR).count();
        if floored as f64 > 0.01 * grid.total_cells() as f64 {
            unreliable = true;
        }
        let u = velocity_from_conservative(snap, DENSITY_FLOOR)?;
        d_rate.push(one_sided_lipschitz_d(&u, grid));
        defect_mass.push(record.defects.fields[i].energy_mass(eos));
        times.push(snap.time);
    }
    let e0 = record.initial_energy(eos);
    let seed = 1e-6 * e0.abs();
    let c = (eos.gamma - 1.0).max(2.0) / 2.0;
    let mut bound = Vec::with_capacity(times.len());
    let mut integral = 0.0;
    bound.push(defect_mass[0] + seed);
    for k in 1..times.len() {
        integral += 0.5 * (d_rate[k] + d_rate[k - 1]) * (times[k] - times[k - 1]);
        bound.push((defect_mass[0] + seed) * (c * integral).exp());
    }
    let max_ratio = defect_mass
        .iter()
        .zip(bound.iter())
        .map(|(d, b)| d / b)
        .fold(0.0, f64::max);
    Ok(GronwallReport {
        times,
        defect_mass,
        bound,
        max_ratio,
        pass: max_ratio <= 1.0 + 1e-9,
        unreliable_velocity: unreliable,
    })
}

/// Measured smoothness of a record, feeding the compatibility verdict.
#[derive(Debug, Clone)]
pub struct SmoothnessReport {
    pub rho_min: f64,
    /// Largest central-difference velocity-gradient entry over the run.
    pub max_velocity_gradient: f64,
    /// Trapezoid of `max(d, 0)` over the run.
    pub d_integral: f64,
    /// Largest defect energy mass over the run.
    pub max_defect_mass: f64,
    pub initial_energy: f64,
}

pub fn measure_smoothness(record: &DissipativeRecord, eos: &EosParams) -> Result<SmoothnessReport> {
    let grid = record.grid();
    let mut rho_min = f64::INFINITY;
    let mut max_grad: f64 = 0.0;
    let mut d_vals = Vec::new();
    let times = record.times();
    for snap in record.trajectory.snapshots() {
        rho_min = rho_min.min(snap.min_density());
        let u = velocity_from_conservative(snap, DENSITY_FLOOR)?;
        let grads = velocity_gradients(&u, grid);
        for g in &grads {
            for row in g.0 {
                for v in row {
                    max_grad = max_grad.max(v.abs());
                }
            }
        }
        d_vals.push(one_sided_lipschitz_from_grads(&grads, grid.dim()).max(0.0));
    }
    let mut d_integral = 0.0;
    for k in 1..times.len() {
        d_integral += 0.5 * (d_vals[k] + d_vals[k - 1]) * (times[k] - times[k - 1]);
    }
    let max_defect_mass = record
        .defects
        .fields
        .iter()
        .map(|f| f.energy_mass(eos))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(SmoothnessReport {
        rho_min,
        max_velocity_gradient: max_grad,
        d_integral,
        max_defect_mass,
        initial_energy: record.initial_energy(eos),
    })
}

/// Hypotheses of the classical-compatibility theorem, checked at desk scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    DensityLowerBound,
    GradientBound,
    LipschitzIntegrability,
    DefectMass,
}

#[derive(Debug, Clone, Copy)]
pub struct CompatibilityThresholds {
    pub rho_floor: f64,
    pub gradient_bound: f64,
    pub d_integral_bound: f64,
    /// Defect mass must stay below `factor * E(0)`.
    pub defect_mass_factor: f64,
}

impl Default for CompatibilityThresholds {
    fn default() -> Self {
        CompatibilityThresholds {
            rho_floor: 1e-2,
            gradient_bound: 100.0,
            d_integral_bound: 50.0,
            defect_mass_factor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CompatibilityVerdict {
    Classical,
    Dissipative { violated: Vec<Hypothesis> },
}

impl CompatibilityVerdict {
    pub fn is_classical(&self) -> bool {
        matches!(self, CompatibilityVerdict::Classical)
    }
}

/// CLASSICAL iff the density stays away from vacuum, gradients and the
/// one-sided Lipschitz rate stay bounded, and the total defect mass is
/// negligible against `E(0)`; otherwise DISSIPATIVE with the violated
/// hypotheses named.
pub fn compatibility_check(
    smoothness: &SmoothnessReport,
    thresholds: &CompatibilityThresholds,
) -> CompatibilityVerdict {
    let mut violated = Vec::new();
    if smoothness.rho_min < thresholds.rho_floor {
        violated.push(Hypothesis::DensityLowerBound);
    }
    if smoothness.max_velocity_gradient > thresholds.gradient_bound {
        violated.push(Hypothesis::GradientBound);
    }
    if smoothness.d_integral > thresholds.d_integral_bound {
        violated.push(Hypothesis::LipschitzIntegrability);
    }
    if smoothness.max_defect_mass > thresholds.defect_mass_factor * smoothness.initial_energy {
        violated.push(Hypothesis::DefectMass);
    }
    if violated.is_empty() {
        CompatibilityVerdict::Classical
    } else {
        CompatibilityVerdict::Dissipative { violated }
    }
}

#[derive(Debug, Clone)]
pub struct BesovEstimate {
    pub lq_norm: f64,
    /// `sup_xi ||v(.+xi) - v||_q / |xi|^alpha` over axis-aligned grid shifts
    /// up to half the domain. An under-estimate of the continuum seminorm.
    pub seminorm: f64,
}

fn lq_norm(values: impl Iterator<Item = f64>, q: f64, cell_volume: f64) -> f64 {
    if q.is_infinite() {
        values.fold(0.0, |acc, v| acc.max(v.abs()))
    } else {
        let mut acc = 0.0;
        for v in values {
            acc += v.abs().powf(q);
        }
        (acc * cell_volume).powf(1.0 / q)
    }
}

/// Discrete Besov seminorm of a scalar field on the torus.
pub fn besov_seminorm(
    values: &[f64],
    grid: TorusGrid,
    alpha: f64,
    q: f64,
) -> Result<BesovEstimate> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter { name: "alpha", value: alpha });
    }
    if !(q >= 1.0) {
        return Err(Error::InvalidParameter { name: "q", value: q });
    }
    if values.len() != grid.total_cells() {
        return Err(Error::GridMismatch);
    }
    let h = grid.spacing();
    let vol = grid.cell_volume();
    let norm = lq_norm(values.iter().copied(), q, vol);
    let mut seminorm: f64 = 0.0;
    let half = grid.cells_per_axis() / 2;
    for axis in 0..grid.dim() {
        for j in 1..=half.max(1) {
            let xi = j as f64 * h;
            let shifted = (0..values.len()).map(|idx| {
                values[grid.neighbor(idx, axis, j as isize)] - values[idx]
            });
            let diff_norm = lq_norm(shifted, q, vol);
            seminorm = seminorm.max(diff_norm / xi.powf(alpha));
        }
    }
    Ok(BesovEstimate { lq_norm: norm, seminorm })
}

/// Space-time variant: shifts along the (non-periodic) time axis restrict to
/// the overlap, space shifts wrap. Snapshot times must be uniformly spaced.
pub fn besov_seminorm_spacetime(
    frames: &[Vec<f64>],
    times: &[f64],
    grid: TorusGrid,
    alpha: f64,
    q: f64,
) -> Result<BesovEstimate> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter { name: "alpha", value: alpha });
    }
    if !(q >= 1.0) {
        return Err(Error::InvalidParameter { name: "q", value: q });
    }
    if frames.len() != times.len() || frames.len() < 2 {
        return Err(Error::InadmissibleField("need at least two frames".into()));
    }
    let dt = times[1] - times[0];
    for w in times.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt {
            return Err(Error::InadmissibleField(
                "space-time Besov needs uniform snapshot spacing".into(),
            ));
        }
    }
    let nt = frames.len();
    let vol = grid.cell_volume() * dt;
    let norm = lq_norm(frames.iter().flat_map(|f| f.iter().copied()), q, vol);
    let mut seminorm: f64 = 0.0;
    // space shifts (periodic), applied frame by frame
    let half = grid.cells_per_axis() / 2;
    for axis in 0..grid.dim() {
        for j in 1..=half.max(1) {
            let xi = j as f64 * grid.spacing();
            let diffs = frames.iter().flat_map(|f| {
                (0..f.len()).map(move |idx| f[grid.neighbor(idx, axis, j as isize)] - f[idx])
            });
            let diff_norm = lq_norm(diffs, q, vol);
            seminorm = seminorm.max(diff_norm / xi.powf(alpha));
        }
    }
    // time shifts (overlap only)
    for j in 1..=(nt / 2).max(1) {
        if j >= nt {
            break;
        }
        let xi = j as f64 * dt;
        let diffs = (0..nt - j)
            .flat_map(|k| (0..frames[k].len()).map(move |idx| frames[k + j][idx] - frames[k][idx]));
        let diff_norm = lq_norm(diffs, q, vol);
        seminorm = seminorm.max(diff_norm / xi.powf(alpha));
    }
    Ok(BesovEstimate { lq_norm: norm, seminorm })
}

/// Bregman-type relative energy
/// `int [ 1/2 rho |m/rho - U|^2 + P(rho) - P'(r)(rho - r) - P(r) ]`.
///
/// Non-negative, zero exactly at `(rho, m) = (r, r U)`.
pub fn relative_energy(
    rho: &[f64],
    mom: &[Vec2],
    r_ref: &[f64],
    u_ref: &[Vec2],
    grid: TorusGrid,
    eos: &EosParams,
    r_min: f64,
) -> Result<f64> {
    if !(r_min > 0.0) {
        return Err(Error::InvalidParameter { name: "r_min", value: r_min });
    }
    if rho.len() != grid.total_cells()
        || mom.len() != rho.len()
        || r_ref.len() != rho.len()
        || u_ref.len() != rho.len()
    {
        return Err(Error::GridMismatch);
    }
    let mut acc = 0.0;
    for idx in 0..rho.len() {
        let r = r_ref[idx];
        if r < r_min {
            return Err(Error::ReferenceDensityBelowFloor(r, r_min));
        }
        let u = u_ref[idx];
        let rel_m = [mom[idx][0] - rho[idx] * u[0], mom[idx][1] - rho[idx] * u[1]];
        // 1/2 rho |m/rho - U|^2 via the convex extension of |.|^2 / rho
        let kinetic = 0.5 * kinetic_extended(rho[idx], rel_m);
        let p_pot = eos.pot(rho[idx]);
        let p_ref = eos.pot(r);
        let dp_ref = eos.a * eos.gamma / (eos.gamma - 1.0) * r.powf(eos.gamma - 1.0);
        acc += kinetic + p_pot - dp_ref * (rho[idx] - r) - p_ref;
    }
    Ok(acc * grid.cell_volume())
}

/// Relative energy of a candidate field against a reference field, with the
/// reference velocity reconstructed at `DENSITY_FLOOR`.
pub fn relative_energy_fields(
    field: &ConservedField,
    reference: &ConservedField,
    eos: &EosParams,
    r_min: f64,
) -> Result<f64> {
    if field.grid() != reference.grid() {
        return Err(Error::GridMismatch);
    }
    let u_ref = velocity_from_conservative(reference, DENSITY_FLOOR)?;
    relative_energy(&field.rho, &field.mom, &reference.rho, &u_ref, field.grid(), eos, r_min)
}

#[derive(Debug, Clone)]
pub struct GapReport {
    pub times: Vec<f64>,
    /// Relative energy plus defect mass at each common snapshot time.
    pub gap: Vec<f64>,
    pub gap0: f64,
    /// Smallest rate with `gap(t) <= (gap(0) + consistency) exp(lambda t)`.
    pub lambda: f64,
}

/// Relative-energy gap of a record against a (classical) reference
/// trajectory on the same grid, evaluated at common snapshot times.
pub fn weak_strong_gap(
    record: &DissipativeRecord,
    reference: &Trajectory,
    eos: &EosParams,
    r_min: f64,
) -> Result<GapReport> {
    if record.grid() != reference.grid() {
        return Err(Error::GridMismatch);
    }
    let tol = 1e-10;
    let mut times = Vec::new();
    let mut gap = Vec::new();
    for (k, snap) in record.trajectory.snapshots().iter().enumerate() {
        let Some(ri) = reference.index_at_time(snap.time, tol * (1.0 + snap.time.abs())) else {
            continue;
        };
        let rel =
            relative_energy_fields(snap, &reference.snapshots()[ri], eos, r_min)?;
        gap.push(rel + record.defects.fields[k].energy_mass(eos));
        times.push(snap.time);
    }
    if times.len() < 2 {
        return Err(Error::NotASnapshotTime(record.trajectory.first().time));
    }
    let e0 = record.initial_energy(eos);
    let gap0 = gap[0];
    let consistency = 1e-12 * e0.abs().max(1.0);
    let mut lambda = f64::NEG_INFINITY;
    let t0 = times[0];
    let mut any = false;
    for k in 1..times.len() {
        if gap[k] > consistency {
            lambda = lambda.max(((gap[k]) / (gap0 + consistency)).ln() / (times[k] - t0));
            any = true;
        }
    }
    if !any {
        lambda = 0.0;
    }
    Ok(GapReport { times, gap, gap0, lambda })
}
