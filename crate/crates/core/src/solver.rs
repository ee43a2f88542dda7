//! Finite-volume integrator for the viscosity approximation of the Euler
//! system, with the discrete energy ledger.
//!
//! The scheme is a conservative flux-difference update (Rusanov by default)
//! plus a Newtonian viscous stress scaled by `epsilon`. Mass is conserved
//! exactly by periodic telescoping; the energy inequality is audited after
//! the fact through [`EnergyLedger`], never enforced inside the stepper.

use crate::error::{Error, Result};
use crate::linalg::{Mat2, SymMat, Vec2};
use crate::state::{
    total_energy, velocity_from_conservative, ConservedField, EosParams, Trajectory,
    DENSITY_FLOOR,
};

/// Smallest timestep `run` will attempt before declaring a stall.
pub const DT_MIN: f64 = 1e-12;

/// Viscosity scale `epsilon` (the `1/n` prefactor) and Newtonian coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViscosityModel {
    pub epsilon: f64,
    pub shear_mu: f64,
    pub bulk_eta: f64,
}

impl ViscosityModel {
    pub fn new(epsilon: f64, shear_mu: f64, bulk_eta: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidParameter { name: "epsilon", value: epsilon });
        }
        if shear_mu < 0.0 {
            return Err(Error::InvalidParameter { name: "shear_mu", value: shear_mu });
        }
        if bulk_eta < 0.0 {
            return Err(Error::InvalidParameter { name: "bulk_eta", value: bulk_eta });
        }
        if shear_mu == 0.0 && bulk_eta == 0.0 {
            return Err(Error::DegenerateViscosity);
        }
        Ok(ViscosityModel { epsilon, shear_mu, bulk_eta })
    }

    /// Same Newtonian coefficients with a different `epsilon`.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        ViscosityModel::new(epsilon, self.shear_mu, self.bulk_eta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluxScheme {
    /// Local Lax-Friedrichs: dissipation from the larger of the two face
    /// wave speeds.
    Rusanov,
    /// Central average with one global wave-speed dissipation coefficient.
    CentralDissipative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeScheme {
    Euler,
    Rk2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub cfl: f64,
    pub end_time: f64,
    pub flux: FluxScheme,
    pub time_scheme: TimeScheme,
    /// Keep every `output_stride`-th accepted step as a snapshot (the initial
    /// and final states are always kept).
    pub output_stride: usize,
    /// Absolute times the integrator must hit exactly and snapshot, so that
    /// independent runs can be compared at shared instants.
    pub checkpoint_times: Vec<f64>,
}

impl SolverConfig {
    pub fn new(
        cfl: f64,
        end_time: f64,
        flux: FluxScheme,
        time_scheme: TimeScheme,
        output_stride: usize,
    ) -> Result<Self> {
        if !(cfl > 0.0 && cfl < 1.0) {
            return Err(Error::InvalidParameter { name: "cfl", value: cfl });
        }
        if !(end_time > 0.0) {
            return Err(Error::InvalidParameter { name: "end_time", value: end_time });
        }
        if output_stride == 0 {
            return Err(Error::InvalidParameter { name: "output_stride", value: 0.0 });
        }
        Ok(SolverConfig {
            cfl,
            end_time,
            flux,
            time_scheme,
            output_stride,
            checkpoint_times: Vec::new(),
        })
    }

    /// Uniformly spaced checkpoints `k * end / count` for `k = 1..=count`.
    pub fn with_uniform_checkpoints(mut self, count: usize) -> Self {
        self.checkpoint_times =
            (1..=count).map(|k| self.end_time * k as f64 / count as f64).collect();
        self
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            cfl: 0.4,
            end_time: 0.1,
            flux: FluxScheme::Rusanov,
            time_scheme: TimeScheme::Rk2,
            output_stride: 8,
            checkpoint_times: Vec::new(),
        }
    }
}

/// Per-step record of total energy and cumulative viscous dissipation
/// `epsilon * integral S : Du`.
#[derive(Debug, Clone, Default)]
pub struct EnergyLedger {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub dissipation: Vec<f64>,
}

impl EnergyLedger {
    pub fn push(&mut self, time: f64, energy: f64, cumulative_dissipation: f64) {
        self.times.push(time);
        self.energy.push(energy);
        self.dissipation.push(cumulative_dissipation);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn initial_energy(&self) -> f64 {
        self.energy.first().copied().unwrap_or(0.0)
    }

    /// Slack `E(0) - E(t_k) - D(t_k)` of the discrete energy inequality.
    pub fn slack(&self) -> Vec<f64> {
        let e0 = self.initial_energy();
        self.energy
            .iter()
            .zip(self.dissipation.iter())
            .map(|(&e, &d)| e0 - e - d)
            .collect()
    }

    pub fn min_slack(&self) -> f64 {
        self.slack().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn dissipation_nondecreasing(&self) -> bool {
        self.dissipation.windows(2).all(|w| w[1] >= w[0])
    }

    pub fn max_energy(&self) -> f64 {
        self.energy.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Audit the discrete energy inequality with absolute tolerance `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        if !self.dissipation_nondecreasing() {
            return Err(Error::InadmissibleField(
                "cumulative dissipation decreased".into(),
            ));
        }
        let min = self.min_slack();
        if min < -tol {
            return Err(Error::InadmissibleField(format!(
                "energy inequality violated: slack {min:e} below -{tol:e}"
            )));
        }
        Ok(())
    }
}

/// Newtonian stress `S = 2 mu D0(u) + eta (div u) I` from a velocity gradient.
pub fn viscous_stress(grad_u: Mat2, dim: usize, model: &ViscosityModel) -> SymMat {
    let d = grad_u.sym();
    let d0 = d.deviatoric(dim);
    let divergence = d.trace();
    d0.scaled(2.0 * model.shear_mu)
        .plus(&SymMat::identity(dim).scaled(model.bulk_eta * divergence))
}

/// Fenchel-Young split of the stress pairing: `S : D = F(D) + F*(S)` holds
/// exactly at `S = viscous_stress(D)`; otherwise `gap < 0`.
#[derive(Debug, Clone, Copy)]
pub struct FenchelSplit {
    pub f: f64,
    pub f_star: f64,
    pub gap: f64,
}

/// Potential `F(D) = mu |D0|^2 + eta/2 (tr D)^2` for the Newtonian model.
pub fn dissipation_potential(d: &SymMat, dim: usize, model: &ViscosityModel) -> f64 {
    let d0 = d.deviatoric(dim);
    model.shear_mu * d0.frob_norm_sq() + 0.5 * model.bulk_eta * d.trace() * d.trace()
}

/// Conjugate `F*(S)`; infinite outside the range of the stress map when a
/// coefficient vanishes.
pub fn dissipation_conjugate(s: &SymMat, dim: usize, model: &ViscosityModel) -> f64 {
    let s0 = s.deviatoric(dim);
    let ts = s.trace();
    let dev = if model.shear_mu > 0.0 {
        s0.frob_norm_sq() / (4.0 * model.shear_mu)
    } else if s0.frob_norm_sq() == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    let dd = dim as f64;
    let tr = if model.bulk_eta > 0.0 {
        ts * ts / (2.0 * model.bulk_eta * dd * dd)
    } else if ts == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    dev + tr
}

pub fn fenchel_decomposition(
    d: &SymMat,
    s: &SymMat,
    dim: usize,
    model: &ViscosityModel,
) -> Result<FenchelSplit> {
    if model.shear_mu == 0.0 && model.bulk_eta == 0.0 {
        return Err(Error::DegenerateViscosity);
    }
    let f = dissipation_potential(d, dim, model);
    let f_star = dissipation_conjugate(s, dim, model);
    let gap = s.frob(d) - f - f_star;
    Ok(FenchelSplit { f, f_star, gap })
}

/// CFL timestep: the acoustic bound `h / (|u| + c)` and the parabolic bound
/// `h^2 rho_min / (2 epsilon (2 mu + eta))`, scaled by `cfl`.
pub fn stable_dt(
    field: &ConservedField,
    eos: &EosParams,
    model: &ViscosityModel,
    cfl: f64,
) -> Result<f64> {
    if !(cfl > 0.0 && cfl < 1.0) {
        return Err(Error::InvalidParameter { name: "cfl", value: cfl });
    }
    let grid = field.grid();
    let h = grid.spacing();
    let u = velocity_from_conservative(field, DENSITY_FLOOR)?;
    let mut wave: f64 = 0.0;
    let mut rho_min_pos = f64::INFINITY;
    for (idx, &r) in field.rho.iter().enumerate() {
        if r > 0.0 {
            rho_min_pos = rho_min_pos.min(r);
        }
        let c = eos.sound_speed(r);
        for axis in 0..grid.dim() {
            wave = wave.max(u[idx][axis].abs() + c);
        }
    }
    if !rho_min_pos.is_finite() {
        return Err(Error::VacuumField);
    }
    let dt_acoustic = if wave > 0.0 { h / wave } else { f64::INFINITY };
    let coef = model.epsilon * (2.0 * model.shear_mu + model.bulk_eta);
    let dt_viscous = if coef > 0.0 {
        h * h * rho_min_pos / (2.0 * coef)
    } else {
        f64::INFINITY
    };
    let dt = cfl * dt_acoustic.min(dt_viscous);
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::VacuumField);
    }
    Ok(dt)
}

struct Increment {
    drho: Vec<f64>,
    dmom: Vec<Vec2>,
}

/// Velocity gradient at cell centers by periodic central differences.
pub fn velocity_gradients(u: &[Vec2], grid: crate::state::TorusGrid) -> Vec<Mat2> {
    let h = grid.spacing();
    let mut out = vec![Mat2::ZERO; grid.total_cells()];
    for idx in 0..grid.total_cells() {
        let mut g = Mat2::ZERO;
        for axis in 0..grid.dim() {
            let plus = grid.neighbor(idx, axis, 1);
            let minus = grid.neighbor(idx, axis, -1);
            for comp in 0..2 {
                g.0[comp][axis] = (u[plus][comp] - u[minus][comp]) / (2.0 * h);
            }
        }
        out[idx] = g;
    }
    out
}

/// Instantaneous viscous dissipation `epsilon * sum_cells S(Du) : Du h^d`,
/// with cell-centered central-difference gradients. Non-negative by the
/// Fenchel identity.
pub fn viscous_dissipation_rate(field: &ConservedField, model: &ViscosityModel) -> f64 {
    let grid = field.grid();
    let u = match velocity_from_conservative(field, DENSITY_FLOOR) {
        Ok(u) => u,
        Err(_) => return 0.0,
    };
    let grads = velocity_gradients(&u, grid);
    let mut rate = 0.0;
    for g in &grads {
        let s = viscous_stress(*g, grid.dim(), model);
        rate += s.frob(&g.sym());
    }
    model.epsilon * rate * grid.cell_volume()
}

fn face_wave_speed(rho: f64, u_normal: f64, eos: &EosParams) -> f64 {
    u_normal.abs() + eos.sound_speed(rho)
}

fn increment(
    field: &ConservedField,
    eos: &EosParams,
    model: &ViscosityModel,
    flux: FluxScheme,
) -> Increment {
    let grid = field.grid();
    let dim = grid.dim();
    let h = grid.spacing();
    let cells = grid.total_cells();
    let u = velocity_from_conservative(field, DENSITY_FLOOR).expect("positive floor");
    let p: Vec<f64> = field.rho.iter().map(|&r| eos.p(r.max(0.0))).collect();

    let global_speed = match flux {
        FluxScheme::CentralDissipative => {
            let mut s: f64 = 0.0;
            for idx in 0..cells {
                let c = eos.sound_speed(field.rho[idx]);
                for axis in 0..dim {
                    s = s.max(u[idx][axis].abs() + c);
                }
            }
            Some(s)
        }
        FluxScheme::Rusanov => None,
    };

    let mut drho = vec![0.0; cells];
    let mut dmom = vec![[0.0, 0.0]; cells];

    for axis in 0..dim {
        // Face fluxes keyed by the cell on their left (lower) side.
        let mut f_rho = vec![0.0; cells];
        let mut f_mom = vec![[0.0, 0.0]; cells];
        for left in 0..cells {
            let right = grid.neighbor(left, axis, 1);
            let s = match global_speed {
                Some(s) => s,
                None => face_wave_speed(field.rho[left], u[left][axis], eos)
                    .max(face_wave_speed(field.rho[right], u[right][axis], eos)),
            };
            let frho = 0.5 * (field.mom[left][axis] + field.mom[right][axis])
                - 0.5 * s * (field.rho[right] - field.rho[left]);
            let mut fmom = [0.0, 0.0];
            for comp in 0..2 {
                fmom[comp] = 0.5
                    * (field.mom[left][comp] * u[left][axis]
                        + field.mom[right][comp] * u[right][axis])
                    - 0.5 * s * (field.mom[right][comp] - field.mom[left][comp]);
            }
            fmom[axis] += 0.5 * (p[left] + p[right]);

            // Viscous flux from the face velocity gradient: the normal
            // derivative is the compact difference, transverse derivatives
            // average the two central differences.
            let mut g = Mat2::ZERO;
            for comp in 0..2 {
                g.0[comp][axis] = (u[right][comp] - u[left][comp]) / h;
            }
            if dim == 2 {
                let t = 1 - axis;
                let lp = grid.neighbor(left, t, 1);
                let lm = grid.neighbor(left, t, -1);
                let rp = grid.neighbor(right, t, 1);
                let rm = grid.neighbor(right, t, -1);
                for comp in 0..2 {
                    g.0[comp][t] = 0.25 * (u[lp][comp] - u[lm][comp] + u[rp][comp] - u[rm][comp]) / h;
                }
            }
            let stress = viscous_stress(g, dim, model);
            let visc = stress.row(axis);
            fmom[0] -= model.epsilon * visc[0];
            fmom[1] -= model.epsilon * visc[1];

            f_rho[left] = frho;
            f_mom[left] = fmom;
        }
        for cell in 0..cells {
            let left_face = grid.neighbor(cell, axis, -1);
            drho[cell] -= (f_rho[cell] - f_rho[left_face]) / h;
            dmom[cell][0] -= (f_mom[cell][0] - f_mom[left_face][0]) / h;
            dmom[cell][1] -= (f_mom[cell][1] - f_mom[left_face][1]) / h;
        }
    }

    Increment { drho, dmom }
}

fn apply(field: &ConservedField, inc: &Increment, dt: f64, new_time: f64) -> Result<ConservedField> {
    let cells = field.grid().total_cells();
    let mut rho = Vec::with_capacity(cells);
    let mut mom = Vec::with_capacity(cells);
    for idx in 0..cells {
        let r = field.rho[idx] + dt * inc.drho[idx];
        if r < 0.0 || !r.is_finite() {
            return Err(Error::TimestepRejected);
        }
        rho.push(r);
        mom.push([
            field.mom[idx][0] + dt * inc.dmom[idx][0],
            field.mom[idx][1] + dt * inc.dmom[idx][1],
        ]);
    }
    ConservedField::new(field.grid(), rho, mom, new_time)
}

fn average_states(a: &ConservedField, b: &ConservedField, new_time: f64) -> Result<ConservedField> {
    let cells = a.grid().total_cells();
    let mut rho = Vec::with_capacity(cells);
    let mut mom = Vec::with_capacity(cells);
    for idx in 0..cells {
        let r = 0.5 * (a.rho[idx] + b.rho[idx]);
        if r < 0.0 || !r.is_finite() {
            return Err(Error::TimestepRejected);
        }
        rho.push(r);
        mom.push([
            0.5 * (a.mom[idx][0] + b.mom[idx][0]),
            0.5 * (a.mom[idx][1] + b.mom[idx][1]),
        ]);
    }
    ConservedField::new(a.grid(), rho, mom, new_time)
}

/// One conservative step of the chosen time scheme. Fails with
/// [`Error::TimestepRejected`] if any stage produces negative density; the
/// caller is expected to halve `dt` and retry.
pub fn step(
    field: &ConservedField,
    eos: &EosParams,
    model: &ViscosityModel,
    dt: f64,
    flux: FluxScheme,
    time_scheme: TimeScheme,
) -> Result<ConservedField> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter { name: "dt", value: dt });
    }
    let t1 = field.time + dt;
    match time_scheme {
        TimeScheme::Euler => {
            let inc = increment(field, eos, model, flux);
            apply(field, &inc, dt, t1)
        }
        TimeScheme::Rk2 => {
            // Heun: full Euler stage, then average with a second stage.
            let inc1 = increment(field, eos, model, flux);
            let stage = apply(field, &inc1, dt, t1)?;
            let inc2 = increment(&stage, eos, model, flux);
            let stage2 = apply(&stage, &inc2, dt, t1)?;
            average_states(field, &stage2, t1)
        }
    }
}

/// Integrate to `end_time`, producing snapshots and the energy ledger.
///
/// The timestep follows [`stable_dt`]; rejected steps are retried with half
/// the step until [`DT_MIN`], after which the run fails as stalled.
pub fn run(
    initial: &ConservedField,
    eos: &EosParams,
    model: &ViscosityModel,
    config: &SolverConfig,
) -> Result<(Trajectory, EnergyLedger)> {
    initial.validate_admissible()?;
    let e0 = total_energy(initial, eos);
    if !e0.is_finite() {
        return Err(Error::InadmissibleField("initial energy not finite".into()));
    }
    let t_end = initial.time + config.end_time;
    let mut checkpoints: Vec<f64> = config
        .checkpoint_times
        .iter()
        .copied()
        .filter(|&t| t > initial.time && t <= t_end + 1e-13 * config.end_time)
        .collect();
    checkpoints.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut next_checkpoint = 0usize;

    let mut current = initial.clone();
    let mut traj = Trajectory::from_initial(current.clone());
    let mut ledger = EnergyLedger::default();
    ledger.push(current.time, e0, 0.0);
    let mut cumulative = 0.0;
    let mut steps: usize = 0;

    while current.time < t_end - 1e-13 * config.end_time {
        let mut dt = stable_dt(&current, eos, model, config.cfl)?.min(t_end - current.time);
        while next_checkpoint < checkpoints.len()
            && checkpoints[next_checkpoint] <= current.time + 1e-13 * (1.0 + current.time.abs())
        {
            next_checkpoint += 1;
        }
        let mut at_checkpoint = false;
        if next_checkpoint < checkpoints.len() {
            let gap = checkpoints[next_checkpoint] - current.time;
            if gap <= dt {
                dt = gap;
                at_checkpoint = true;
            }
        }
        let rate = viscous_dissipation_rate(&current, model);
        let next = loop {
            match step(&current, eos, model, dt, config.flux, config.time_scheme) {
                Ok(next) => break next,
                Err(Error::TimestepRejected) => {
                    dt *= 0.5;
                    at_checkpoint = false;
                    if dt < DT_MIN {
                        return Err(Error::SolverStall(dt));
                    }
                }
                Err(e) => return Err(e),
            }
        };
        cumulative += dt * rate;
        current = next;
        if at_checkpoint {
            // land exactly on the requested instant
            current.time = checkpoints[next_checkpoint];
            next_checkpoint += 1;
        }
        steps += 1;
        ledger.push(current.time, total_energy(&current, eos), cumulative);
        let keep_stride =
            steps % config.output_stride == 0 && current.time < t_end - 1e-13 * config.end_time;
        if keep_stride || at_checkpoint {
            traj.push(current.clone())?;
        }
        if steps > 20_000_000 {
            return Err(Error::SolverStall(dt));
        }
    }
    if traj.last().time < current.time {
        traj.push(current)?;
    }
    Ok((traj, ledger))
}
