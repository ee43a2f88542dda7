//! The six batch commands. Each builds its inputs from the configuration,
//! writes artifacts under the run directory, and records every file in the
//! run manifest. A command returns `Ok(true)` when a verification verdict
//! failed (process exit 2).

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use del_core::analysis::{
    compatibility_check, gronwall_defect_bound, measure_smoothness, CompatibilityThresholds,
    CompatibilityVerdict, DissipativeRecord,
};
use del_core::bank::TestFunctionBank;
use del_core::defect::{
    energy_bookkeeping, sequence_defect, BlockPartition, DefectSeries, SequenceMember,
};
use del_core::io::{
    consistency_csv, ledger_csv, residual_csv, slack_csv, weakstar_csv, write_defect,
    write_field, write_string, RunManifest,
};
use del_core::oscillation::{checkerboard_sequence, l1_separation, weakstar_diagnostics};
use del_core::riemann::{RiemannState, TorusRiemann};
use del_core::solver::{run, EnergyLedger, FluxScheme, SolverConfig, TimeScheme, ViscosityModel};
use del_core::state::{ConservedField, EosParams, TorusGrid, Trajectory};
use del_core::weak_form::{
    consistency_sweep, continuity_residual, momentum_residual, ConsistencyMember,
};

use crate::config::Config;

pub struct RunContext {
    pub config: Config,
    pub out: PathBuf,
    pub seed: u64,
    pub threads: usize,
}

impl RunContext {
    fn manifest(&self, command: &str) -> RunManifest {
        RunManifest::new(command, self.seed, self.threads, self.config.raw.clone())
    }
}

fn grid(cfg: &Config) -> anyhow::Result<TorusGrid> {
    let dim = cfg.usize_or("domain.dim", 1)?;
    let cells = cfg.usize_or("domain.cells", 128)?;
    Ok(TorusGrid::new(dim, cells)?)
}

fn eos(cfg: &Config) -> anyhow::Result<EosParams> {
    Ok(EosParams::new(cfg.f64_or("eos.a", 1.0)?, cfg.f64_or("eos.gamma", 1.4)?)?)
}

fn viscosity(cfg: &Config, epsilon: Option<f64>) -> anyhow::Result<ViscosityModel> {
    let eps = match epsilon {
        Some(e) => e,
        None => cfg.f64_or("viscosity.epsilon", 1e-2)?,
    };
    Ok(ViscosityModel::new(
        eps,
        cfg.f64_or("viscosity.shear_mu", 1.0)?,
        cfg.f64_or("viscosity.bulk_eta", 1.0)?,
    )?)
}

fn solver_config(cfg: &Config) -> anyhow::Result<SolverConfig> {
    let flux = match cfg.str_or("solver.flux", "rusanov") {
        "rusanov" => FluxScheme::Rusanov,
        "central-dissipative" => FluxScheme::CentralDissipative,
        other => bail!("solver.flux: unknown scheme {other:?}"),
    };
    let time_scheme = match cfg.str_or("solver.time_scheme", "rk2") {
        "rk2" => TimeScheme::Rk2,
        "euler" => TimeScheme::Euler,
        other => bail!("solver.time_scheme: unknown scheme {other:?}"),
    };
    let base = SolverConfig::new(
        cfg.f64_or("solver.cfl", 0.4)?,
        cfg.f64_or("solver.end_time", 0.1)?,
        flux,
        time_scheme,
        cfg.usize_or("solver.output_stride", 8)?,
    )?;
    let checkpoints = cfg.usize_or("solver.checkpoints", 8)?;
    Ok(if checkpoints > 0 { base.with_uniform_checkpoints(checkpoints) } else { base })
}

fn partition(cfg: &Config, grid: TorusGrid) -> anyhow::Result<BlockPartition> {
    let default_h = (grid.cells_per_axis() / 16).max(1);
    let h = cfg.usize_or("defects.block", default_h)?;
    Ok(BlockPartition::new(grid, h)?)
}

fn bank(cfg: &Config, dim: usize, t_end: f64) -> anyhow::Result<TestFunctionBank> {
    let modes = cfg.usize_or("bank.modes", 3)? as u32;
    Ok(if cfg.bool_or("bank.include_bumps", false)? {
        TestFunctionBank::with_bumps(dim, modes, t_end)
    } else {
        TestFunctionBank::trigonometric(dim, modes, t_end)
    })
}

fn initial(cfg: &Config, grid: TorusGrid, eos: &EosParams, seed: u64) -> anyhow::Result<ConservedField> {
    const PI: f64 = std::f64::consts::PI;
    match cfg.str_or("initial.kind", "acoustic") {
        "constant" => {
            let rho = cfg.f64_or("initial.rho", 1.0)?;
            let mx = cfg.f64_or("initial.mom_x", 0.0)?;
            let my = cfg.f64_or("initial.mom_y", 0.0)?;
            Ok(ConservedField::constant(grid, rho, [mx, if grid.dim() == 2 { my } else { 0.0 }])?)
        }
        "acoustic" => {
            let amp = cfg.f64_or("initial.amplitude", 0.05)?;
            let rho0 = cfg.f64_or("initial.rho", 1.0)?;
            if amp.abs() >= rho0 {
                bail!("initial.amplitude must stay below initial.rho");
            }
            Ok(ConservedField::from_fn(grid, |x| {
                let phase = PI * x[0] + if grid.dim() == 2 { PI * x[1] } else { 0.0 };
                (rho0 + amp * phase.sin(), [0.0, 0.0])
            })?)
        }
        "riemann" => {
            let tr = TorusRiemann::solve(
                RiemannState {
                    rho: cfg.f64_or("initial.rho_left", 2.0)?,
                    u: cfg.f64_or("initial.u_left", 0.0)?,
                },
                RiemannState {
                    rho: cfg.f64_or("initial.rho_right", 0.5)?,
                    u: cfg.f64_or("initial.u_right", 0.0)?,
                },
                *eos,
            )?;
            Ok(tr.sample_field(grid, 0.0)?)
        }
        "random" => {
            let amp = cfg.f64_or("initial.amplitude", 0.1)?;
            let rho0 = cfg.f64_or("initial.rho", 1.0)?;
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let mut coefs = [[0.0f64; 4]; 3];
            for row in &mut coefs {
                for c in row.iter_mut() {
                    *c = r.gen_range(-1.0..1.0);
                }
            }
            Ok(ConservedField::from_fn(grid, |x| {
                let mut rho = rho0;
                let mut mom = [0.0, 0.0];
                for (k, c) in coefs.iter().enumerate() {
                    let a = PI * (k + 1) as f64;
                    let phase = a * x[0] + if grid.dim() == 2 { a * x[1] } else { 0.0 };
                    rho += amp * 0.3 * (c[0] * phase.sin() + c[1] * phase.cos());
                    mom[0] += amp * 0.3 * c[2] * phase.sin();
                    if grid.dim() == 2 {
                        mom[1] += amp * 0.3 * c[3] * phase.cos();
                    }
                }
                (rho, mom)
            })?)
        }
        other => bail!("initial.kind: unknown kind {other:?}"),
    }
}

/// Snapshots at the configured checkpoint instants (plus the initial state),
/// so that independent runs share their comparison ladder.
fn checkpoints_only(traj: &Trajectory, config: &SolverConfig) -> anyhow::Result<Trajectory> {
    let mut snaps = vec![traj.first().clone()];
    for &t in &config.checkpoint_times {
        if let Some(i) = traj.index_at_time(t, 1e-12 * (1.0 + t.abs())) {
            if traj.snapshots()[i].time > snaps.last().unwrap().time {
                snaps.push(traj.snapshots()[i].clone());
            }
        }
    }
    Ok(Trajectory::new(snaps)?)
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("building thread pool")?;
    Ok(pool.install(f))
}

fn write_snapshots(
    dir: &Path,
    rel_dir: &str,
    traj: &Trajectory,
    manifest: &mut RunManifest,
) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir.join(rel_dir))?;
    for (k, snap) in traj.snapshots().iter().enumerate() {
        let rel = format!("{rel_dir}/snap_{k:04}.bin");
        write_field(dir.join(&rel), snap)?;
        manifest.add_artifact(dir, &rel)?;
    }
    Ok(())
}

fn put(
    dir: &Path,
    rel: &str,
    content: &str,
    manifest: &mut RunManifest,
) -> anyhow::Result<()> {
    write_string(dir.join(rel), content)?;
    manifest.add_artifact(dir, rel)?;
    Ok(())
}

pub fn solve(ctx: &RunContext) -> anyhow::Result<bool> {
    let cfg = &ctx.config;
    let grid = grid(cfg)?;
    let eos = eos(cfg)?;
    let model = viscosity(cfg, None)?;
    let config = solver_config(cfg)?;
    let initial = initial(cfg, grid, &eos, ctx.seed)?;
    let (traj, ledger) = run(&initial, &eos, &model, &config)?;

    let mut manifest = ctx.manifest("solve");
    write_snapshots(&ctx.out, "fields", &traj, &mut manifest)?;
    put(&ctx.out, "ledger.csv", &ledger_csv(&ledger), &mut manifest)?;
    let e0 = ledger.initial_energy();
    let ok = ledger.validate(1e-6 * e0).is_ok();
    manifest.set_verdict("energy_inequality", if ok { "PASS" } else { "FAIL" });
    manifest.set_verdict("snapshots", traj.len().to_string());
    manifest.write(ctx.out.join("manifest.json"))?;
    Ok(!ok)
}

pub fn sweep(ctx: &RunContext) -> anyhow::Result<bool> {
    let cfg = &ctx.config;
    let grid = grid(cfg)?;
    let eos = eos(cfg)?;
    let config = solver_config(cfg)?;
    let epsilons = cfg
        .f64_list("sweep.epsilons")?
        .ok_or_else(|| anyhow!("sweep.epsilons is required"))?;
    if epsilons.len() < 3 {
        bail!("sweep.epsilons needs at least 3 entries");
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        bail!("sweep.epsilons must be strictly decreasing");
    }
    let initial = initial(cfg, grid, &eos, ctx.seed)?;
    let runs: Vec<(Trajectory, EnergyLedger)> = with_pool(ctx.threads, || {
        epsilons
            .par_iter()
            .map(|&eps| {
                let model = viscosity(cfg, Some(eps)).expect("validated epsilon");
                run(&initial, &eos, &model, &config)
            })
            .collect::<del_core::error::Result<Vec<_>>>()
    })?
    .context("sweep member run failed")?;

    let mut manifest = ctx.manifest("sweep");
    for (i, (traj, ledger)) in runs.iter().enumerate() {
        put(&ctx.out, &format!("ledger_{i}.csv"), &ledger_csv(ledger), &mut manifest)?;
        write_snapshots(&ctx.out, &format!("fields/member_{i}"), traj, &mut manifest)?;
    }

    // consistency table over the sweep
    let bank = bank(cfg, grid.dim(), config.end_time)?;
    let members: Vec<ConsistencyMember> = runs
        .iter()
        .zip(epsilons.iter())
        .map(|((traj, _), &epsilon)| ConsistencyMember { epsilon, trajectory: traj })
        .collect();
    let table = consistency_sweep(&members, &bank, &eos)?;
    put(&ctx.out, "consistency.csv", &consistency_csv(&table), &mut manifest)?;
    let e0 = del_core::state::total_energy(&initial, &eos);
    let (m1, m2, m3) = table.monotone_decay(1e-11 * e0);
    manifest.set_verdict("consistency_monotone", format!("E1={m1} E2={m2} E3={m3}"));
    manifest.set_verdict("e3_uniform_constant", format!("{:.6e}", table.e3_uniform_constant()));

    // relative-energy gap of each member against the finest member, at the
    // shared checkpoint instants
    if !config.checkpoint_times.is_empty() {
        let finest = checkpoints_only(&runs[runs.len() - 1].0, &config)?;
        let fine_grid_partition = BlockPartition::new(grid, 1)?;
        for (i, (traj, _)) in runs.iter().enumerate().take(runs.len() - 1) {
            let member = DissipativeRecord::assemble(
                checkpoints_only(traj, &config)?,
                EnergyLedger::default(),
                fine_grid_partition,
                &eos,
                format!("sweep member {i}"),
            );
            let member = match member {
                Ok(m) => m,
                Err(_) => continue,
            };
            if let Ok(gap) = del_core::analysis::weak_strong_gap(&member, &finest, &eos, 1e-8) {
                put(&ctx.out, &format!("gap_{i}.csv"), &del_core::io::gap_csv(&gap), &mut manifest)?;
            }
        }
    }

    // sequence defects of the finest member at the end time
    let partition = partition(cfg, grid)?;
    let seq_members: Vec<SequenceMember> = runs
        .iter()
        .zip(epsilons.iter())
        .map(|((traj, _), &epsilon)| SequenceMember { epsilon, trajectory: traj })
        .collect();
    let t_end = runs[0].0.last().time;
    let sd = sequence_defect(&seq_members, &partition, &eos, t_end)?;
    std::fs::create_dir_all(ctx.out.join("defects"))?;
    write_defect(ctx.out.join("defects/sequence_defect.bin"), &sd.defects, t_end)?;
    manifest.add_artifact(&ctx.out, "defects/sequence_defect.bin")?;
    let mut cauchy = String::from("pair,rho_diff,mom_diff\n");
    for (k, (r, m)) in sd.cauchy_rho.iter().zip(sd.cauchy_mom.iter()).enumerate() {
        cauchy.push_str(&format!("{k},{r:.17e},{m:.17e}\n"));
    }
    put(&ctx.out, "cauchy.csv", &cauchy, &mut manifest)?;
    manifest.write(ctx.out.join("manifest.json"))?;
    Ok(false)
}

pub fn defects(ctx: &RunContext) -> anyhow::Result<bool> {
    let cfg = &ctx.config;
    let grid = grid(cfg)?;
    let eos = eos(cfg)?;
    let model = viscosity(cfg, None)?;
    let config = solver_config(cfg)?;
    let initial = initial(cfg, grid, &eos, ctx.seed)?;
    let (traj, _) = run(&initial, &eos, &model, &config)?;
    let partition = partition(cfg, grid)?;
    let series = DefectSeries::from_trajectory(&traj, partition, &eos)?;

    let mut manifest = ctx.manifest("defects");
    std::fs::create_dir_all(ctx.out.join("defects"))?;
    for (k, (field, &t)) in series.fields.iter().zip(series.times.iter()).enumerate() {
        let rel = format!("defects/defect_{k:04}.bin");
        write_defect(ctx.out.join(&rel), field, t)?;
        manifest.add_artifact(&ctx.out, &rel)?;
    }
    let mut mass_csv = String::from("time,defect_energy_mass,max_bookkeeping_residual\n");
    for (snap, &t) in traj.snapshots().iter().zip(series.times.iter()) {
        let report = energy_bookkeeping(snap, &partition, &eos)?;
        let k = series.index_at_time(t, 1e-12).unwrap();
        mass_csv.push_str(&format!(
            "{t:.17e},{:.17e},{:.17e}\n",
            series.fields[k].energy_mass(&eos),
            report.max_abs_residual
        ));
    }
    put(&ctx.out, "defect_mass.csv", &mass_csv, &mut manifest)?;
    let ok = series.validate().is_ok();
    manifest.set_verdict("defect_positivity", if ok { "PASS" } else { "FAIL" });
    manifest.write(ctx.out.join("manifest.json"))?;
    Ok(!ok)
}

pub fn verify(ctx: &RunContext) -> anyhow::Result<bool> {
    let cfg = &ctx.config;
    let grid = grid(cfg)?;
    let eos = eos(cfg)?;
    let model = viscosity(cfg, None)?;
    let config = solver_config(cfg)?;
    let initial = initial(cfg, grid, &eos, ctx.seed)?;
    let (traj, ledger) = run(&initial, &eos, &model, &config)?;
    let partition = partition(cfg, grid)?;
    // the block means together with the block defects form the consistent
    // dissipative pair; their combined energy equals the fine energy exactly
    let record = DissipativeRecord::coarse_grained(&traj, partition, &eos, "verify run")?;

    let t_end = record.trajectory.last().time;
    let bank = bank(cfg, grid.dim(), t_end)?;
    let cont = continuity_residual(&record.trajectory, &bank, t_end)?;
    let mom_without = momentum_residual(&record.trajectory, &bank, t_end, &eos, None)?;
    let mom_with =
        momentum_residual(&record.trajectory, &bank, t_end, &eos, Some(&record.defects))?;
    let slack = record.energy_inequality(&bank.envelopes, &eos);
    let smoothness = measure_smoothness(&record, &eos)?;
    let verdict = compatibility_check(&smoothness, &CompatibilityThresholds::default());
    let gronwall = gronwall_defect_bound(&record, &eos, (0.0, t_end))?;

    let mut manifest = ctx.manifest("verify");
    put(&ctx.out, "ledger.csv", &ledger_csv(&ledger), &mut manifest)?;
    put(&ctx.out, "residual_continuity.csv", &residual_csv(&cont), &mut manifest)?;
    put(&ctx.out, "residual_momentum.csv", &residual_csv(&mom_without), &mut manifest)?;
    put(&ctx.out, "residual_momentum_with_defects.csv", &residual_csv(&mom_with), &mut manifest)?;
    put(&ctx.out, "energy_slack.csv", &slack_csv(&slack), &mut manifest)?;
    let mut gr = String::from("time,defect_mass,bound\n");
    for k in 0..gronwall.times.len() {
        gr.push_str(&format!(
            "{:.17e},{:.17e},{:.17e}\n",
            gronwall.times[k], gronwall.defect_mass[k], gronwall.bound[k]
        ));
    }
    put(&ctx.out, "gronwall.csv", &gr, &mut manifest)?;

    let defects_ok = record.defects.validate().is_ok();
    let verdict_str = match &verdict {
        CompatibilityVerdict::Classical => "CLASSICAL".to_string(),
        CompatibilityVerdict::Dissipative { violated } => format!("DISSIPATIVE {violated:?}"),
    };
    manifest.set_verdict("energy_inequality", if slack.pass { "PASS" } else { "FAIL" });
    manifest.set_verdict("defect_positivity", if defects_ok { "PASS" } else { "FAIL" });
    manifest.set_verdict("compatibility", &verdict_str);
    manifest.set_verdict("gronwall", if gronwall.pass { "PASS" } else { "FAIL" });
    manifest.set_verdict(
        "max_continuity_residual",
        format!("{:.6e}", cont.max_abs),
    );
    manifest.write(ctx.out.join("manifest.json"))?;

    let mut failed = !slack.pass || !defects_ok;
    if cfg.bool_or("verify.require_classical", false)? && !verdict.is_classical() {
        failed = true;
    }
    Ok(failed)
}

pub fn oscillate(ctx: &RunContext) -> anyhow::Result<bool> {
    let cfg = &ctx.config;
    let grid = grid(cfg)?;
    let eos = eos(cfg)?;
    let _ = eos;
    let rho_bar = cfg.f64_or("oscillate.rho_bar", 1.0)?;
    let delta = cfg.f64_or("oscillate.delta", 0.25)?;
    let levels = cfg.usize_or("oscillate.levels", 6)?;
    let seq = checkerboard_sequence(rho_bar, delta, levels, grid)?;
    let bank = TestFunctionBank::with_bumps(
        grid.dim(),
        cfg.usize_or("bank.modes", 3)? as u32,
        1.0,
    );
    let table = weakstar_diagnostics(&seq, &bank)?;
    let l1 = l1_separation(&seq)?;

    let mut manifest = ctx.manifest("oscillate");
    put(&ctx.out, "weakstar.csv", &weakstar_csv(&table), &mut manifest)?;
    let mut l1_csv = String::from("member,l1_distance\n");
    for (n, v) in l1.per_member.iter().enumerate() {
        l1_csv.push_str(&format!("{n},{v:.17e}\n"));
    }
    l1_csv.push_str(&format!("# liminf,{:.17e}\n# threshold,{:.17e}\n", l1.liminf_estimate, l1.threshold));
    put(&ctx.out, "l1_separation.csv", &l1_csv, &mut manifest)?;
    manifest.set_verdict(
        "l1_separation",
        if l1.separated { "SEPARATED" } else { "NO-SEPARATION" },
    );
    manifest.write(ctx.out.join("manifest.json"))?;
    Ok(!l1.separated)
}

pub fn select(ctx: &RunContext) -> anyhow::Result<bool> {
    let cfg = &ctx.config;
    let grid = grid(cfg)?;
    let eos = eos(cfg)?;
    let config = solver_config(cfg)?;
    if config.checkpoint_times.is_empty() {
        bail!("select needs solver.checkpoints > 0 for a common comparison ladder");
    }
    let count = cfg.usize_or("select.members", 5)?;
    if count == 0 {
        bail!("select.members must be positive");
    }
    let eps_max = cfg.f64_or("select.epsilon_max", 5e-2)?;
    let eps_min = cfg.f64_or("select.epsilon_min", 5e-3)?;
    if !(eps_min > 0.0 && eps_max >= eps_min) {
        bail!("select.epsilon_min/epsilon_max must satisfy 0 < min <= max");
    }
    // members ordered from most to least viscous
    let epsilons: Vec<f64> = (0..count)
        .map(|k| {
            if count == 1 {
                eps_max
            } else {
                let s = k as f64 / (count - 1) as f64;
                eps_max * (eps_min / eps_max).powf(s)
            }
        })
        .collect();
    let initial = initial(cfg, grid, &eos, ctx.seed)?;
    let partition = partition(cfg, grid)?;
    let runs: Vec<(Trajectory, EnergyLedger)> = with_pool(ctx.threads, || {
        epsilons
            .par_iter()
            .map(|&eps| {
                let model = viscosity(cfg, Some(eps)).expect("validated epsilon");
                run(&initial, &eos, &model, &config)
            })
            .collect::<del_core::error::Result<Vec<_>>>()
    })?
    .context("ensemble member run failed")?;

    let mut members = Vec::with_capacity(count);
    for (i, (traj, _)) in runs.iter().enumerate() {
        let at_cp = checkpoints_only(traj, &config)?;
        members.push(DissipativeRecord::coarse_grained(
            &at_cp,
            partition,
            &eos,
            format!("member {i}: epsilon = {}", epsilons[i]),
        )?);
    }
    let ensemble = del_core::selection::Ensemble::new(members)?;
    ensemble.validate(&eos)?;
    let selection = del_core::selection::select_admissible(&ensemble, &eos)?;

    let mut manifest = ctx.manifest("select");
    let mut csv = String::from("member,epsilon,functional,precedes_verdict\n");
    for i in 0..ensemble.len() {
        let verdict = if i == selection.winner {
            "WINNER".to_string()
        } else {
            let v = selection
                .certificate
                .iter()
                .find(|(j, _)| *j == i)
                .map(|(_, v)| v)
                .unwrap();
            format!("{v:?}")
        };
        csv.push_str(&format!(
            "{i},{:.6e},{:.17e},{verdict}\n",
            epsilons[i], selection.functional[i]
        ));
    }
    put(&ctx.out, "selection.csv", &csv, &mut manifest)?;
    // winner's gap curve against itself stays zero; store its defect series
    std::fs::create_dir_all(ctx.out.join("defects"))?;
    let winner = &ensemble.members[selection.winner];
    for (k, (field, &t)) in winner
        .defects
        .fields
        .iter()
        .zip(winner.defects.times.iter())
        .enumerate()
    {
        let rel = format!("defects/winner_defect_{k:04}.bin");
        write_defect(ctx.out.join(&rel), field, t)?;
        manifest.add_artifact(&ctx.out, &rel)?;
    }
    manifest.set_verdict("winner", selection.winner.to_string());
    manifest.set_verdict(
        "strictly_preceded",
        if selection.strictly_preceded { "YES" } else { "NO" },
    );
    manifest.write(ctx.out.join("manifest.json"))?;
    Ok(false)
}
