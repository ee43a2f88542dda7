//! Weak-formulation residuals and consistency-error functionals.
//!
//! Quadrature is midpoint in space (the natural rule for cell-wise data) and
//! trapezoid over snapshot times. Each residual carries a quadrature-error
//! estimate built from two independent probes: Richardson extrapolation in
//! time (recompute with every other snapshot) and the gap between midpoint
//! and exact-cell-integral evaluation in space. Residuals are reported, never
//! thresholded, except for the energy inequality whose tolerance is explicit.
//!
//! On the torus there is no boundary, so the normal-trace condition on vector
//! test functions is vacuous and not represented.

use crate::bank::{Envelope, TestFunction, TestFunctionBank, VectorTestFunction};
use crate::defect::DefectSeries;
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::state::{total_energy, ConservedField, EosParams, Trajectory};

#[derive(Debug, Clone)]
pub struct ResidualEntry {
    pub id: String,
    pub residual: f64,
    pub quadrature_estimate: f64,
}

#[derive(Debug, Clone)]
pub struct ResidualReport {
    pub entries: Vec<ResidualEntry>,
    pub max_abs: f64,
}

impl ResidualReport {
    fn from_entries(entries: Vec<ResidualEntry>) -> Self {
        let max_abs = entries.iter().map(|e| e.residual.abs()).fold(0.0, f64::max);
        ResidualReport { entries, max_abs }
    }

    pub fn entry(&self, id: &str) -> Option<&ResidualEntry> {
        self.entries.iter().find(|e| e.id == id)
    }
}

const TIME_TOL: f64 = 1e-10;

/// Snapshot indices covering `[t0, tau]`; `tau` must itself be a snapshot.
fn snapshot_range(traj: &Trajectory, tau: f64) -> Result<Vec<usize>> {
    let times = traj.times();
    let end = times
        .iter()
        .position(|&t| (t - tau).abs() <= TIME_TOL * (1.0 + tau.abs()))
        .ok_or(Error::NotASnapshotTime(tau))?;
    Ok((0..=end).collect())
}

/// Thin a sampled integrand to every other point (keeping both endpoints) for
/// the Richardson time-quadrature probe.
fn thin<T: Copy>(xs: &[T]) -> Vec<T> {
    if xs.len() < 3 {
        return xs.to_vec();
    }
    let mut out: Vec<T> = xs.iter().copied().step_by(2).collect();
    if xs.len() % 2 == 0 {
        out.push(*xs.last().unwrap());
    }
    out
}

/// Block-average every snapshot onto a coarser grid, for the
/// data-resolution probe of the error estimate (coarse-fine discrepancy,
/// no extrapolation constant).
fn coarsen_data(traj: &Trajectory, range: &[usize]) -> Option<Vec<ConservedField>> {
    let grid = traj.grid();
    if grid.cells_per_axis() % 2 != 0 || grid.cells_per_axis() < 8 {
        return None;
    }
    let factor = 2;
    let partition = crate::defect::BlockPartition::new(grid, factor).ok()?;
    range
        .iter()
        .map(|&i| crate::defect::coarse_grain(&traj.snapshots()[i], &partition).ok())
        .collect()
}

/// Spatial evaluation mode: midpoint rule or exact cell integrals.
#[derive(Clone, Copy, PartialEq)]
enum SpaceRule {
    Midpoint,
    ExactCell,
}

/// Sampled pairings of one weak form: `pair[k]` multiplies `psi` in the
/// bracket and `psi'` under the time integral; `flux[k]` multiplies `psi`
/// under the time integral.
struct Pieces {
    pair: Vec<f64>,
    flux: Vec<f64>,
}

impl Pieces {
    /// Residual `[psi pair]_0^tau - int (psi' pair + psi flux) dt`, with the
    /// envelope integrated exactly against piecewise-linear samples of `pair`
    /// and trapezoid for the flux term.
    fn residual(&self, times: &[f64], env: &Envelope) -> f64 {
        let n = times.len();
        let bracket = env.eval(times[n - 1]) * self.pair[n - 1] - env.eval(times[0]) * self.pair[0];
        let mut integral = 0.0;
        for k in 1..n {
            integral += env.weighted_deriv_integral(
                times[k - 1],
                times[k],
                self.pair[k - 1],
                self.pair[k],
            );
            integral += 0.5
                * (env.eval(times[k]) * self.flux[k] + env.eval(times[k - 1]) * self.flux[k - 1])
                * (times[k] - times[k - 1]);
        }
        bracket - integral
    }

    fn thinned(&self) -> Pieces {
        Pieces { pair: thin(&self.pair), flux: thin(&self.flux) }
    }

    fn scale(&self, horizon: f64) -> f64 {
        let p = self.pair.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let f = self.flux.iter().map(|v| v.abs()).fold(0.0, f64::max);
        p + f * horizon
    }
}

fn continuity_pieces(snaps: &[&ConservedField], tf: &TestFunction, rule: SpaceRule) -> Pieces {
    let grid = snaps[0].grid();
    let vol = grid.cell_volume();
    let mut pair = Vec::with_capacity(snaps.len());
    let mut flux = Vec::with_capacity(snaps.len());
    for &snap in snaps {
        let mut mass_pair = 0.0;
        let mut flux_pair = 0.0;
        for idx in 0..grid.total_cells() {
            let x = grid.cell_center(idx);
            let (phi_w, grad_w) = match rule {
                SpaceRule::Midpoint => {
                    let g = tf.space.grad(x);
                    (tf.space.eval(x) * vol, [g[0] * vol, g[1] * vol])
                }
                SpaceRule::ExactCell => (
                    tf.space.cell_integral(grid, idx),
                    tf.space.cell_integral_grad(grid, idx),
                ),
            };
            mass_pair += snap.rho[idx] * phi_w;
            flux_pair += dot(snap.mom[idx], grad_w);
        }
        pair.push(mass_pair);
        flux.push(flux_pair);
    }
    Pieces { pair, flux }
}

/// Weak continuity residual
/// `[int rho phi]_0^tau - int_0^tau int (rho d_t phi + m . grad phi)`
/// for every scalar bank member.
pub fn continuity_residual(
    traj: &Trajectory,
    bank: &TestFunctionBank,
    tau: f64,
) -> Result<ResidualReport> {
    let range = snapshot_range(traj, tau)?;
    let snaps: Vec<&ConservedField> = range.iter().map(|&i| &traj.snapshots()[i]).collect();
    let times: Vec<f64> = snaps.iter().map(|s| s.time).collect();
    let thin_times = thin(&times);
    let horizon = tau - times[0];
    let coarse_data = coarsen_data(traj, &range);
    let mut entries = Vec::with_capacity(bank.scalar.len());
    for tf in &bank.scalar {
        let mid = continuity_pieces(&snaps, tf, SpaceRule::Midpoint);
        let residual = mid.residual(&times, &tf.time);

        let exact = continuity_pieces(&snaps, tf, SpaceRule::ExactCell);
        let r_exact = exact.residual(&times, &tf.time);
        let r_thin = mid.thinned().residual(&thin_times, &tf.time);
        let r_coarse = coarse_data.as_ref().map(|cs| {
            let refs: Vec<&ConservedField> = cs.iter().collect();
            continuity_pieces(&refs, tf, SpaceRule::Midpoint).residual(&times, &tf.time)
        });
        let data_part = r_coarse.map(|rc| (residual - rc).abs()).unwrap_or(0.0);
        let estimate = (residual - r_thin).abs() / 3.0
            + (residual - r_exact).abs()
            + data_part
            + 1e-14 * (1.0 + mid.scale(horizon));
        entries.push(ResidualEntry { id: tf.id.clone(), residual, quadrature_estimate: estimate });
    }
    Ok(ResidualReport::from_entries(entries))
}

fn momentum_pieces(
    snaps: &[&ConservedField],
    vf: &VectorTestFunction,
    eos: &EosParams,
    rule: SpaceRule,
) -> Pieces {
    let grid = snaps[0].grid();
    let vol = grid.cell_volume();
    let axis = vf.axis;
    let mut pair = Vec::with_capacity(snaps.len());
    let mut flux = Vec::with_capacity(snaps.len());
    for &snap in snaps {
        let mut mom_pair = 0.0;
        let mut flux_pair = 0.0;
        for idx in 0..grid.total_cells() {
            let x = grid.cell_center(idx);
            let (phi_w, grad_w) = match rule {
                SpaceRule::Midpoint => {
                    let g = vf.space.grad(x);
                    (vf.space.eval(x) * vol, [g[0] * vol, g[1] * vol])
                }
                SpaceRule::ExactCell => (
                    vf.space.cell_integral(grid, idx),
                    vf.space.cell_integral_grad(grid, idx),
                ),
            };
            let m = snap.mom[idx];
            let r = snap.rho[idx];
            mom_pair += m[axis] * phi_w;
            // (m (x) m / rho) : grad(phi e_a) = (m_a / rho) m . grad phi,
            // zero on admissible vacuum cells (convex extension)
            let convective = if r > 0.0 { m[axis] / r * dot(m, grad_w) } else { 0.0 };
            flux_pair += convective + eos.p(r) * grad_w[axis];
        }
        pair.push(mom_pair);
        flux.push(flux_pair);
    }
    Pieces { pair, flux }
}

/// Block pairing `sum_B grad(phi e_a)(X_B) : (Rv_B + Rp_B I) |B|` at one
/// series index (the envelope factor is applied by the caller).
fn defect_pairing(series: &DefectSeries, vf: &VectorTestFunction, si: usize) -> f64 {
    let partition = series.partition();
    let vol = partition.block_volume();
    let field = &series.fields[si];
    let mut acc = 0.0;
    for b in 0..partition.num_blocks() {
        let x = partition.block_center(b);
        let g = vf.space.grad(x);
        // grad(phi e_a) : (Rv + Rp I) = Rv row a . grad phi + Rp d_a phi
        acc += dot(field.rv[b].row(vf.axis), g) + field.rp[b] * g[vf.axis];
    }
    acc * vol
}

/// Weak momentum residual with the pressure term; when `defects` is given,
/// the measure pairing `int grad(phi) : d[Rv + Rp I]` enters as well.
///
/// The defect partition must live either on the trajectory's own grid or on
/// the fine grid whose block-coarsening is the trajectory's grid.
pub fn momentum_residual(
    traj: &Trajectory,
    bank: &TestFunctionBank,
    tau: f64,
    eos: &EosParams,
    defects: Option<&DefectSeries>,
) -> Result<ResidualReport> {
    let range = snapshot_range(traj, tau)?;
    let snaps: Vec<&ConservedField> = range.iter().map(|&i| &traj.snapshots()[i]).collect();
    let times: Vec<f64> = snaps.iter().map(|s| s.time).collect();
    let coarse_data = coarsen_data(traj, &range);

    let mut series_idx: Vec<usize> = Vec::new();
    if let Some(series) = defects {
        let p = series.partition();
        if p.grid() != traj.grid() && p.coarse_grid() != traj.grid() {
            return Err(Error::GridMismatch);
        }
        for &t in &times {
            let si = series
                .index_at_time(t, TIME_TOL * (1.0 + t.abs()))
                .ok_or(Error::NotASnapshotTime(t))?;
            series_idx.push(si);
        }
    }

    let thin_times = thin(&times);
    let horizon = tau - times[0];
    let mut entries = Vec::with_capacity(bank.vector.len());
    for vf in &bank.vector {
        if vf.axis >= traj.grid().dim() {
            continue;
        }
        let mut mid = momentum_pieces(&snaps, vf, eos, SpaceRule::Midpoint);
        let mut exact = momentum_pieces(&snaps, vf, eos, SpaceRule::ExactCell);
        let mut coarse = coarse_data.as_ref().map(|cs| {
            let refs: Vec<&ConservedField> = cs.iter().collect();
            momentum_pieces(&refs, vf, eos, SpaceRule::Midpoint)
        });
        if let Some(series) = defects {
            for k in 0..times.len() {
                let p = defect_pairing(series, vf, series_idx[k]);
                mid.flux[k] += p;
                exact.flux[k] += p;
                if let Some(c) = coarse.as_mut() {
                    c.flux[k] += p;
                }
            }
        }
        let residual = mid.residual(&times, &vf.time);
        let r_exact = exact.residual(&times, &vf.time);
        let r_thin = mid.thinned().residual(&thin_times, &vf.time);
        let data_part = coarse
            .map(|c| (residual - c.residual(&times, &vf.time)).abs())
            .unwrap_or(0.0);
        let estimate = (residual - r_thin).abs() / 3.0
            + (residual - r_exact).abs()
            + data_part
            + 1e-14 * (1.0 + mid.scale(horizon));
        entries.push(ResidualEntry { id: vf.id.clone(), residual, quadrature_estimate: estimate });
    }
    Ok(ResidualReport::from_entries(entries))
}

/// Slack of the energy inequality for one envelope.
#[derive(Debug, Clone)]
pub struct EnvelopeSlack {
    pub id: String,
    pub min_slack: f64,
    /// The `(tau1, tau2)` pair attaining the minimum.
    pub at: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct SlackReport {
    pub entries: Vec<EnvelopeSlack>,
    pub min_slack: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Weighted energy inequality on a sampled total-energy series
/// `total[k] = G(t_k)` (defect contributions included by the caller): for
/// every envelope and every snapshot pair `tau1 <= tau2`,
/// `int_{tau1}^{tau2} psi' G dt - [psi G]_{tau1}^{tau2} >= -tol`.
pub fn energy_inequality_slack(
    times: &[f64],
    total: &[f64],
    envelopes: &[Envelope],
    tol: f64,
) -> SlackReport {
    assert_eq!(times.len(), total.len());
    let mut entries = Vec::with_capacity(envelopes.len());
    let mut global_min = f64::INFINITY;
    for env in envelopes {
        // slack(i, j) = B_j - B_i with B_k = cum_k - psi_k G_k, where cum is
        // the running integral of psi' G (envelope handled exactly against
        // piecewise-linear G); minimize over i <= j.
        let mut cum = 0.0;
        let mut running_max = -env.eval(times[0]) * total[0];
        let mut max_at = times[0];
        let mut min_slack = 0.0;
        let mut at = (times[0], times[0]);
        for k in 1..times.len() {
            cum += env.weighted_deriv_integral(times[k - 1], times[k], total[k - 1], total[k]);
            let b = cum - env.eval(times[k]) * total[k];
            let slack = b - running_max;
            if slack < min_slack {
                min_slack = slack;
                at = (max_at, times[k]);
            }
            if b > running_max {
                running_max = b;
                max_at = times[k];
            }
        }
        global_min = global_min.min(min_slack);
        entries.push(EnvelopeSlack { id: env.id().to_string(), min_slack, at });
    }
    let pass = global_min >= -tol;
    SlackReport { entries, min_slack: global_min, tol, pass }
}

/// Energy inequality audit of a bare trajectory (no defect contributions),
/// with the standard tolerance `1e-6 E(0)`.
pub fn energy_inequality_check_trajectory(
    traj: &Trajectory,
    envelopes: &[Envelope],
    eos: &EosParams,
) -> SlackReport {
    let times = traj.times();
    let total: Vec<f64> = traj.snapshots().iter().map(|s| total_energy(s, eos)).collect();
    let tol = 1e-6 * total.first().copied().unwrap_or(0.0).abs();
    energy_inequality_slack(&times, &total, envelopes, tol)
}

/// One member of a consistency sweep: a trajectory with its viscosity scale.
#[derive(Debug, Clone, Copy)]
pub struct ConsistencyMember<'a> {
    pub epsilon: f64,
    pub trajectory: &'a Trajectory,
}

#[derive(Debug, Clone)]
pub struct ConsistencyRow {
    pub epsilon: f64,
    /// Continuity error per scalar bank member.
    pub e1: Vec<f64>,
    /// Momentum error per vector bank member.
    pub e2: Vec<f64>,
    /// Energy error per envelope.
    pub e3: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ConsistencyTable {
    pub scalar_ids: Vec<String>,
    pub vector_ids: Vec<String>,
    pub envelope_ids: Vec<String>,
    pub rows: Vec<ConsistencyRow>,
}

impl ConsistencyTable {
    fn monotone(cols: Vec<Vec<f64>>, floor: f64) -> bool {
        for w in cols.windows(2) {
            for (a, b) in w[0].iter().zip(w[1].iter()) {
                if *b > *a && *b > floor {
                    return false;
                }
            }
        }
        true
    }

    /// Whether each error family decays monotonically member-to-member for
    /// every fixed test function; entries below `floor` count as converged
    /// (conservation-exact test functions sit at rounding level).
    pub fn monotone_decay(&self, floor: f64) -> (bool, bool, bool) {
        (
            Self::monotone(self.rows.iter().map(|r| r.e1.clone()).collect(), floor),
            Self::monotone(self.rows.iter().map(|r| r.e2.clone()).collect(), floor),
            Self::monotone(self.rows.iter().map(|r| r.e3.clone()).collect(), floor),
        )
    }

    /// Smallest constant `c` with `E3[psi] <= c ||psi||_inf` across the sweep
    /// (the built-in envelopes have sup-norm one).
    pub fn e3_uniform_constant(&self) -> f64 {
        self.rows.iter().flat_map(|r| r.e3.iter().copied()).fold(0.0, f64::max)
    }
}

/// Consistency errors `E1, E2, E3` per member per fixed test function.
///
/// Members may live on different grids (a sweep typically refines the grid
/// together with the viscosity) but must share the time horizon so that one
/// bank applies to all of them.
pub fn consistency_sweep(
    members: &[ConsistencyMember<'_>],
    bank: &TestFunctionBank,
    eos: &EosParams,
) -> Result<ConsistencyTable> {
    if members.len() < 3 {
        return Err(Error::SequenceTooShort(members.len()));
    }
    let t_end = members[0].trajectory.last().time;
    for m in members {
        if (m.trajectory.last().time - t_end).abs() > TIME_TOL * (1.0 + t_end.abs()) {
            return Err(Error::NotASnapshotTime(m.trajectory.last().time));
        }
    }
    let dim = members[0].trajectory.grid().dim();
    let mut rows = Vec::with_capacity(members.len());
    for m in members {
        let tau = m.trajectory.last().time;
        let cont = continuity_residual(m.trajectory, bank, tau)?;
        let mom = momentum_residual(m.trajectory, bank, tau, eos, None)?;
        let times = m.trajectory.times();
        let energy: Vec<f64> =
            m.trajectory.snapshots().iter().map(|s| total_energy(s, eos)).collect();
        let mut e3 = Vec::with_capacity(bank.envelopes.len());
        for env in &bank.envelopes {
            let mut integral = 0.0;
            for k in 1..times.len() {
                integral +=
                    env.weighted_deriv_integral(times[k - 1], times[k], energy[k - 1], energy[k]);
            }
            e3.push((env.eval(times[0]) * energy[0] + integral).abs());
        }
        rows.push(ConsistencyRow {
            epsilon: m.epsilon,
            e1: cont.entries.iter().map(|e| e.residual.abs()).collect(),
            e2: mom.entries.iter().map(|e| e.residual.abs()).collect(),
            e3,
        });
    }
    Ok(ConsistencyTable {
        scalar_ids: bank.scalar.iter().map(|f| f.id.clone()).collect(),
        vector_ids: bank
            .vector
            .iter()
            .filter(|f| f.axis < dim)
            .map(|f| f.id.clone())
            .collect(),
        envelope_ids: bank.envelopes.iter().map(|e| e.id().to_string()).collect(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bank::{Axis1Fn, SpatialFn};
    use crate::defect::{BlockPartition, DefectField};
    use crate::linalg::SymMat;
    use crate::state::TorusGrid;

    fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 1..times.len() {
            acc += 0.5 * (values[i] + values[i - 1]) * (times[i] - times[i - 1]);
        }
        acc
    }

    fn constant_traj(n: usize, steps: usize, t_end: f64) -> Trajectory {
        let g = TorusGrid::new(1, n).unwrap();
        let f = ConservedField::constant(g, 1.2, [0.3, 0.0]).unwrap();
        let mut traj = Trajectory::from_initial(f.clone());
        for k in 1..=steps {
            let mut s = f.clone();
            s.time = t_end * k as f64 / steps as f64;
            traj.push(s).unwrap();
        }
        traj
    }

    #[test]
    fn constant_state_residuals_at_quadrature_floor() {
        let traj = constant_traj(32, 20, 0.5);
        let bank = TestFunctionBank::trigonometric(1, 3, 0.5);
        let rep = continuity_residual(&traj, &bank, 0.5).unwrap();
        assert!(rep.max_abs < 1e-10, "max {}", rep.max_abs);
        let eos = EosParams::default();
        let mom = momentum_residual(&traj, &bank, 0.5, &eos, None).unwrap();
        assert!(mom.max_abs < 1e-10, "max {}", mom.max_abs);
        for e in rep.entries.iter().chain(mom.entries.iter()) {
            assert!(
                e.residual.abs() <= 10.0 * e.quadrature_estimate,
                "{}: {} vs {}",
                e.id,
                e.residual,
                e.quadrature_estimate
            );
        }
    }

    #[test]
    fn phi_equals_one_measures_mass_conservation() {
        let traj = constant_traj(16, 10, 0.4);
        let bank = TestFunctionBank::trigonometric(1, 1, 0.4);
        let rep = continuity_residual(&traj, &bank, 0.4).unwrap();
        let plateau_one = rep.entry("1|plateau").unwrap();
        assert!(plateau_one.residual.abs() < 1e-13);
    }

    #[test]
    fn tau_must_be_a_snapshot_time() {
        let traj = constant_traj(16, 10, 0.4);
        let bank = TestFunctionBank::trigonometric(1, 1, 0.4);
        assert!(matches!(
            continuity_residual(&traj, &bank, 0.123),
            Err(Error::NotASnapshotTime(_))
        ));
    }

    #[test]
    fn residual_is_linear_in_the_test_function() {
        // arbitrary sampled trajectory; linearity holds regardless of whether
        // it solves anything
        let g = TorusGrid::new(1, 48).unwrap();
        let pi = std::f64::consts::PI;
        let mut traj = Trajectory::from_initial(
            ConservedField::from_fn(g, |x| {
                (1.0 + 0.3 * (pi * x[0]).sin(), [0.1 * (pi * x[0]).cos(), 0.0])
            })
            .unwrap(),
        );
        for k in 1..=12 {
            let t = 0.3 * k as f64 / 12.0;
            let mut f = ConservedField::from_fn(g, |x| {
                (
                    1.0 + 0.3 * (pi * (x[0] - t)).sin(),
                    [0.1 * (pi * (x[0] - t)).cos(), 0.0],
                )
            })
            .unwrap();
            f.time = t;
            traj.push(f).unwrap();
        }
        let env = Envelope::Bump { t_end: 0.3 };
        let f1 = SpatialFn::one_d(Axis1Fn::Cos(1));
        let f2 = SpatialFn::one_d(Axis1Fn::Sin(2));
        let combo = SpatialFn::Combo(vec![(1.0, f1.clone()), (1.0, f2.clone())]);
        let mk = |s: SpatialFn| TestFunctionBank {
            max_mode: 3,
            scalar: vec![TestFunction::new(s.clone(), env)],
            vector: vec![VectorTestFunction::new(s, env, 0)],
            envelopes: vec![env],
        };
        let r1 = continuity_residual(&traj, &mk(f1.clone()), 0.3).unwrap().entries[0].residual;
        let r2 = continuity_residual(&traj, &mk(f2.clone()), 0.3).unwrap().entries[0].residual;
        let rc = continuity_residual(&traj, &mk(combo.clone()), 0.3).unwrap().entries[0].residual;
        assert!((rc - (r1 + r2)).abs() < 1e-12, "{rc} vs {}", r1 + r2);

        let eos = EosParams::default();
        let m1 = momentum_residual(&traj, &mk(f1), 0.3, &eos, None).unwrap().entries[0].residual;
        let m2 = momentum_residual(&traj, &mk(f2), 0.3, &eos, None).unwrap().entries[0].residual;
        let mc =
            momentum_residual(&traj, &mk(combo), 0.3, &eos, None).unwrap().entries[0].residual;
        assert!((mc - (m1 + m2)).abs() < 1e-12);
    }

    #[test]
    fn defect_pairing_shifts_momentum_residual_by_block_term() {
        // constant trajectory, synthetic constant defect: the pairing is an
        // exact time-space integral with a closed form.
        let traj = constant_traj(16, 8, 0.4);
        let g = traj.grid();
        let partition = BlockPartition::new(g, 4).unwrap();
        let rv = vec![SymMat { xx: 0.7, xy: 0.0, yy: 0.0 }; partition.num_blocks()];
        let rp = vec![0.2; partition.num_blocks()];
        let fields: Vec<DefectField> = traj
            .times()
            .iter()
            .map(|_| DefectField::new(partition, rv.clone(), rp.clone()).unwrap())
            .collect();
        let series = DefectSeries::new(traj.times(), fields).unwrap();
        let env = Envelope::Plateau { knee: 0.3, t_end: 0.4 };
        let space = SpatialFn::one_d(Axis1Fn::Sin(1));
        let bank = TestFunctionBank {
            max_mode: 1,
            scalar: vec![],
            vector: vec![VectorTestFunction::new(space.clone(), env, 0)],
            envelopes: vec![env],
        };
        let eos = EosParams::default();
        let without =
            momentum_residual(&traj, &bank, 0.4, &eos, None).unwrap().entries[0].residual;
        let with = momentum_residual(&traj, &bank, 0.4, &eos, Some(&series)).unwrap().entries[0]
            .residual;
        // pairing = (int psi dt) * sum_B (Rv + Rp) phi'(X_B) |B|
        let times = traj.times();
        let psi_vals: Vec<f64> = times.iter().map(|&t| env.eval(t)).collect();
        let psi_int = trapezoid(&times, &psi_vals);
        let mut block_sum = 0.0;
        for b in 0..partition.num_blocks() {
            let x = partition.block_center(b);
            block_sum += (0.7 + 0.2) * space.grad(x)[0] * partition.block_volume();
        }
        let expect = psi_int * block_sum;
        assert!(
            ((without - with) - expect).abs() < 1e-12,
            "shift {} vs expected {expect}",
            without - with
        );
    }

    #[test]
    fn defect_pairing_contracts_full_matrix_in_2d() {
        // constant 2D trajectory with a constant anisotropic defect: the
        // pairing must contract grad(phi e_a) against the full Rv row.
        let g = TorusGrid::new(2, 8).unwrap();
        let f = ConservedField::constant(g, 1.0, [0.2, -0.1]).unwrap();
        let mut traj = Trajectory::from_initial(f.clone());
        for k in 1..=6 {
            let mut s = f.clone();
            s.time = 0.3 * k as f64 / 6.0;
            traj.push(s).unwrap();
        }
        let partition = BlockPartition::new(g, 4).unwrap();
        let rv = vec![SymMat { xx: 0.7, xy: 0.2, yy: 0.3 }; partition.num_blocks()];
        let rp = vec![0.1; partition.num_blocks()];
        let fields: Vec<DefectField> = traj
            .times()
            .iter()
            .map(|_| DefectField::new(partition, rv.clone(), rp.clone()).unwrap())
            .collect();
        let series = DefectSeries::new(traj.times(), fields).unwrap();
        let env = Envelope::Bump { t_end: 0.3 };
        let space = SpatialFn::tensor(crate::bank::Axis1Fn::Cos(1), crate::bank::Axis1Fn::Sin(1));
        let eos = EosParams::default();
        for axis in 0..2 {
            let bank = TestFunctionBank {
                max_mode: 1,
                scalar: vec![],
                vector: vec![VectorTestFunction::new(space.clone(), env, axis)],
                envelopes: vec![env],
            };
            let without =
                momentum_residual(&traj, &bank, 0.3, &eos, None).unwrap().entries[0].residual;
            let with = momentum_residual(&traj, &bank, 0.3, &eos, Some(&series)).unwrap().entries
                [0]
            .residual;
            // closed form: (int psi) * sum_B [Rv row axis . grad phi + Rp d_a phi] |B|
            let times = traj.times();
            let psi_vals: Vec<f64> = times.iter().map(|&t| env.eval(t)).collect();
            let psi_int = trapezoid(&times, &psi_vals);
            let mut block_sum = 0.0;
            for b in 0..partition.num_blocks() {
                let grad = space.grad(partition.block_center(b));
                block_sum += (dot(rv[b].row(axis), grad) + rp[b] * grad[axis])
                    * partition.block_volume();
            }
            let expect = psi_int * block_sum;
            assert!(
                ((without - with) - expect).abs() < 1e-12 * (1.0 + expect.abs()),
                "axis {axis}: shift {} vs {expect}",
                without - with
            );
        }
    }

    #[test]
    fn energy_inequality_monotone_series_passes_and_inflated_fails() {
        let times: Vec<f64> = (0..=20).map(|k| 0.02 * k as f64).collect();
        let envs = crate::bank::default_envelopes(0.4);
        let decayed: Vec<f64> = times.iter().map(|t| 5.0 * (-t).exp()).collect();
        let rep = energy_inequality_slack(&times, &decayed, &envs, 1e-6 * 5.0);
        assert!(rep.pass, "min slack {}", rep.min_slack);

        // energy jumps up mid-run: some envelope pair must catch it
        let inflated: Vec<f64> =
            times.iter().map(|&t| if t < 0.2 { 5.0 } else { 5.5 }).collect();
        let rep2 = energy_inequality_slack(&times, &inflated, &envs, 1e-6 * 5.0);
        assert!(!rep2.pass, "min slack {}", rep2.min_slack);
        assert!(rep2.min_slack < -0.4);
    }

    #[test]
    fn steady_state_energy_inequality_has_zero_slack() {
        let traj = constant_traj(16, 10, 0.4);
        let envs = crate::bank::default_envelopes(0.4);
        let rep = energy_inequality_check_trajectory(&traj, &envs, &EosParams::default());
        assert!(rep.pass);
        assert!(rep.min_slack.abs() < 1e-12);
    }

    #[test]
    fn consistency_sweep_validates_member_count_and_horizon() {
        let t1 = constant_traj(16, 6, 0.4);
        let t2 = constant_traj(16, 6, 0.4);
        let t3 = constant_traj(16, 6, 0.5);
        let bank = TestFunctionBank::trigonometric(1, 1, 0.4);
        let eos = EosParams::default();
        let short = vec![
            ConsistencyMember { epsilon: 0.1, trajectory: &t1 },
            ConsistencyMember { epsilon: 0.05, trajectory: &t2 },
        ];
        assert!(matches!(
            consistency_sweep(&short, &bank, &eos),
            Err(Error::SequenceTooShort(2))
        ));
        let mismatched = vec![
            ConsistencyMember { epsilon: 0.1, trajectory: &t1 },
            ConsistencyMember { epsilon: 0.05, trajectory: &t2 },
            ConsistencyMember { epsilon: 0.025, trajectory: &t3 },
        ];
        assert!(consistency_sweep(&mismatched, &bank, &eos).is_err());
    }

    #[test]
    fn consistency_sweep_exact_sequence_sits_at_floor() {
        let t1 = constant_traj(16, 6, 0.4);
        let t2 = constant_traj(24, 6, 0.4);
        let t3 = constant_traj(32, 6, 0.4);
        let bank = TestFunctionBank::trigonometric(1, 2, 0.4);
        let eos = EosParams::default();
        let members = vec![
            ConsistencyMember { epsilon: 0.1, trajectory: &t1 },
            ConsistencyMember { epsilon: 0.05, trajectory: &t2 },
            ConsistencyMember { epsilon: 0.025, trajectory: &t3 },
        ];
        let table = consistency_sweep(&members, &bank, &eos).unwrap();
        for row in &table.rows {
            for v in row.e1.iter().chain(row.e2.iter()).chain(row.e3.iter()) {
                assert!(*v < 1e-10, "error {v} above floor");
            }
        }
        assert!(table.e3_uniform_constant() < 1e-10);
    }
}
