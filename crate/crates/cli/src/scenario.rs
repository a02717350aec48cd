//! Scenario orchestration: builds the initial state, advances every
//! representation the scenario needs in lock step and assembles the report.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use edlab_core::ensemble::{
    ensemble_density, evolve_ensemble, Ensemble, EvolveOptions, FieldGradient, Snapshot, TimeStepConfig,
    UniformGradient,
};
use edlab_core::hydro::{
    coupled_step_with, energy, entropy_from_phase, hj_residual, phase_from_entropy, HydrodynamicState,
};
use edlab_core::kernel::build_exact_kernel;
use edlab_core::propagation::{bayes_reverse_kernel, ck_propagate, reversal_asymmetry};
use edlab_core::schrodinger::{discrete_ground_state, to_wavefunction, AnalyticState, CnPropagator};
use edlab_core::{normalize_density, FieldRole, PhysicalConstants, ScalarField, SpatialGrid};

use crate::config::{has_energy_oracle, is_free_gaussian, InitialKind, PotentialKind, Scenario, ScenarioConfig};
use crate::error::{HarnessError, Result};
use crate::report::{ComparisonReport, Direction, Distance, EnergySample, PerRepresentation, SnapshotReport};

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: ComparisonReport,
    /// Positions of the first `dump_walkers` walkers after every ensemble step.
    pub trajectories: Vec<Snapshot>,
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ComparisonReport> {
    simulate(cfg, &mut |_| Ok(())).map(|out| out.report)
}

/// Runs the scenario, handing each snapshot to `sink` as soon as it exists.
pub fn simulate(cfg: &ScenarioConfig, sink: &mut dyn FnMut(&SnapshotReport) -> Result<()>) -> Result<RunOutput> {
    match cfg.scenario {
        Scenario::ArrowOfTime => arrow_of_time(cfg, sink),
        _ => field_pipeline(cfg, sink),
    }
}

fn field(grid: SpatialGrid, role: FieldRole, f: impl Fn(f64) -> f64) -> Result<ScalarField> {
    Ok(ScalarField::from_fn(grid, role, f)?)
}

pub fn potential(cfg: &ScenarioConfig, grid: SpatialGrid, consts: &PhysicalConstants) -> Result<ScalarField> {
    let p = &cfg.potential;
    match p.kind {
        PotentialKind::Free => Ok(ScalarField::zeros(grid, FieldRole::Potential)),
        PotentialKind::Harmonic => {
            let k = consts.mass() * p.omega * p.omega;
            field(grid, FieldRole::Potential, |x| 0.5 * k * x * x)
        }
        PotentialKind::Tabulated => Ok(ScalarField::new(grid, p.values.clone(), FieldRole::Potential)?),
    }
}

/// Initial density and entropy-derived phase.
pub fn initial_state(
    cfg: &ScenarioConfig,
    grid: SpatialGrid,
    v: &ScalarField,
    consts: &PhysicalConstants,
) -> Result<HydrodynamicState> {
    let i = &cfg.initial;
    let (rho, phi) = match i.kind {
        InitialKind::Gaussian => {
            let rho = field(grid, FieldRole::Density, |x| (-(x - i.x0).powi(2) / (2.0 * i.s0 * i.s0)).exp())?;
            let phi = field(grid, FieldRole::Phase, |x| i.k0 * (x - i.x0))?;
            (rho, phi)
        }
        InitialKind::HarmonicGround => {
            let (rho, _) = discrete_ground_state(&grid, v, consts)?;
            (rho, ScalarField::zeros(grid, FieldRole::Phase))
        }
        InitialKind::Modulated | InitialKind::Tabulated => {
            let (rho, s) = density_and_entropy(cfg, grid)?;
            let phi = phase_from_entropy(&s, &rho)?.phase;
            (rho, phi)
        }
    };
    Ok(HydrodynamicState::new(normalize_density(&rho)?, phi, 0.0)?)
}

/// `rho` and `S` for the kinds that specify them directly.
fn density_and_entropy(cfg: &ScenarioConfig, grid: SpatialGrid) -> Result<(ScalarField, ScalarField)> {
    let i = &cfg.initial;
    match i.kind {
        InitialKind::Modulated => {
            let u = |x: f64| 2.0 * PI * (x - grid.x_min()) / grid.extent();
            let rho = field(grid, FieldRole::Density, |x| 1.0 + i.amplitude * u(x).cos())?;
            let s = field(grid, FieldRole::Entropy, |x| i.entropy_amplitude * u(x).sin())?;
            Ok((normalize_density(&rho)?, s))
        }
        InitialKind::Tabulated => {
            let rho = ScalarField::new(grid, i.rho.clone(), FieldRole::Density)?;
            let s = ScalarField::new(grid, i.entropy.clone(), FieldRole::Entropy)?;
            Ok((normalize_density(&rho)?, s))
        }
        kind => Err(HarnessError::config(format!("initial kind {kind:?} does not specify an entropy"))),
    }
}

fn analytic_reference(cfg: &ScenarioConfig) -> Option<AnalyticState> {
    if is_free_gaussian(cfg) {
        let i = &cfg.initial;
        Some(AnalyticState::FreeGaussian { s0: i.s0, k0: i.k0, x0: i.x0 })
    } else if has_energy_oracle(cfg) {
        Some(AnalyticState::HarmonicGround { omega: cfg.potential.omega })
    } else {
        None
    }
}

/// Steps (multiples of `substeps`) at which snapshots are taken.
pub fn snapshot_steps(steps: usize, substeps: usize, count: usize) -> BTreeSet<usize> {
    if count == 0 {
        return BTreeSet::new();
    }
    (0..=count).map(|k| k * steps / count / substeps * substeps).chain([steps]).collect()
}

fn build_snapshot(
    grid: &SpatialGrid,
    step: usize,
    t: f64,
    density: PerRepresentation<Vec<f64>>,
    walkers: Option<&Ensemble>,
    analytic_variance: Option<f64>,
) -> Result<SnapshotReport> {
    let mut mean = PerRepresentation::default();
    let mut variance = PerRepresentation::default();
    let slots = |p: &mut PerRepresentation<f64>, name: &str, v: f64| match name {
        "fields" => p.fields = Some(v),
        "schrodinger" => p.schrodinger = Some(v),
        "ck" => p.ck = Some(v),
        _ => p.ensemble = Some(v),
    };
    for (name, rho) in density.named() {
        if let Some(rho) = rho {
            let (m, v) = match (name, walkers) {
                ("ensemble", Some(e)) => (e.mean()[0], e.variance()[0]),
                _ => ScalarField::new(*grid, rho.clone(), FieldRole::Density)?.moments(),
            };
            slots(&mut mean, name, m);
            slots(&mut variance, name, v);
        }
    }
    let mut distances = std::collections::BTreeMap::new();
    let named = density.named();
    for (a, (na, ra)) in named.iter().enumerate() {
        for (nb, rb) in &named[a + 1..] {
            if let (Some(ra), Some(rb)) = (ra, rb) {
                distances.insert(format!("{na}_vs_{nb}"), Distance::between(grid, ra, rb));
            }
        }
    }
    Ok(SnapshotReport { step, t, density, mean, variance, analytic_variance, distances })
}

fn field_pipeline(cfg: &ScenarioConfig, sink: &mut dyn FnMut(&SnapshotReport) -> Result<()>) -> Result<RunOutput> {
    let consts = cfg.physical_constants();
    let grid = cfg.spatial_grid();
    let v = potential(cfg, grid, &consts)?;
    let mut state = initial_state(cfg, grid, &v, &consts)?;
    let rho0 = state.rho().clone();
    let analytic = analytic_reference(cfg);
    let opts = cfg.solver_options();
    let (dt, steps, substeps) = (cfg.time.dt, cfg.time.steps, cfg.ensemble.substeps);
    let dt_coarse = cfg.coarse_dt();
    let coarse_cfg = TimeStepConfig::new(dt_coarse, 1)?;
    let alpha = coarse_cfg.alpha(&consts);

    let cn = CnPropagator::new(grid, &v, dt, &consts)?;
    let mut psi = to_wavefunction(&state)?;
    let n_walkers = cfg.ensemble.walkers;
    let mut walkers = if n_walkers > 0 { Some(Ensemble::sample_density(&rho0, n_walkers, cfg.ensemble.seed)?) } else { None };
    let mut rho_ck = walkers.as_ref().map(|_| rho0.clone());
    let evolve_opts = EvolveOptions { domain: Some(grid), ..Default::default() };

    let mut report = ComparisonReport::empty(cfg.scenario.name(), cfg.ensemble.seed);
    report.x = grid.coords();
    let mut trajectories = Vec::new();
    let dump = cfg.ensemble.dump_walkers;
    let record_walkers = |e: &Ensemble, out: &mut Vec<Snapshot>| {
        if dump > 0 {
            out.push(Snapshot { step: e.step_index(), t: e.t(), positions: e.positions()[..dump].to_vec() });
        }
    };
    if let Some(e) = &walkers {
        record_walkers(e, &mut trajectories);
    }

    let e0 = energy(&state, &v, &consts)?;
    let scale = if e0.total.abs() > 0.0 { e0.total.abs() } else { 1.0 };
    let mut max_energy_drift = 0.0f64;
    let mut max_density_drift = 0.0f64;
    let snaps = snapshot_steps(steps, substeps, cfg.outputs.snapshots);

    for step in 0..=steps {
        let t = step as f64 * dt;
        if snaps.contains(&step) {
            let density = PerRepresentation {
                fields: Some(state.rho().values().to_vec()),
                schrodinger: Some(psi.density_values()),
                ck: rho_ck.as_ref().map(|r| r.values().to_vec()),
                ensemble: match &walkers {
                    Some(e) => Some(ensemble_density(e, &grid)?.into_values()),
                    None => None,
                },
            };
            let snap =
                build_snapshot(&grid, step, t, density, walkers.as_ref(), analytic.map(|a| a.variance(t, &consts)))?;
            sink(&snap)?;
            report.snapshots.push(snap);
            report.energy.push(EnergySample::new(t, &energy(&state, &v, &consts)?));
        }
        if step == steps {
            break;
        }
        if step % substeps == 0 {
            if let (Some(e), Some(r)) = (walkers.as_mut(), rho_ck.as_mut()) {
                let s = entropy_from_phase(state.phi(), state.rho())?;
                let kernel = build_exact_kernel(&s, alpha, &consts)?;
                *r = ck_propagate(r, &kernel)?;
                *e = evolve_ensemble(e, &FieldGradient::new(&s), &coarse_cfg, &consts, &evolve_opts)?.ensemble;
                record_walkers(e, &mut trajectories);
            }
        }
        state = coupled_step_with(&state, &v, dt, &consts, &opts)?.state;
        psi = cn.step(&psi)?;
        let e = energy(&state, &v, &consts)?;
        max_energy_drift = max_energy_drift.max((e.total - e0.total).abs() / scale);
        let drift = state.rho().values().iter().zip(rho0.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        max_density_drift = max_density_drift.max(drift);
    }

    let tol = &cfg.tolerances;
    report.observe("initial_energy", e0.total);
    if let Some(d) = report.max_distance("fields_vs_schrodinger", |d| d.l2) {
        report.check("fields_vs_schrodinger_l2", d, tol.fields_vs_schrodinger_l2, Direction::AtMost);
    }
    report.check("energy_drift", max_energy_drift, tol.energy_drift, Direction::AtMost);
    report.check("density_drift", max_density_drift, tol.density_drift, Direction::AtMost);
    if let Some(a) = analytic {
        if is_free_gaussian(cfg) {
            let worst = report
                .snapshots
                .iter()
                .filter_map(|s| Some((s.variance.fields? - s.analytic_variance?).abs() / s.analytic_variance?))
                .fold(0.0, f64::max);
            report.check("variance_rel_error", worst, tol.variance_rel_error, Direction::AtMost);
        }
        report.check("energy_vs_oracle", (e0.total - a.energy(&consts)).abs(), tol.energy_vs_oracle, Direction::AtMost);
    }
    if n_walkers > 0 {
        if let Some(d) = report.max_distance("ck_vs_ensemble", |d| d.l1) {
            report.check("ensemble_vs_ck_l1", d, tol.ensemble_vs_ck_l1, Direction::AtMost);
        }
        if let Some(d) = report.max_distance("fields_vs_ck", |d| d.l1) {
            report.check("ck_vs_fields_l1", d, tol.ck_vs_fields_l1, Direction::AtMost);
        }
    }
    if cfg.scenario == Scenario::ClassicalLimit {
        classical_checks(cfg, &consts, &mut report)?;
    }
    Ok(RunOutput { report, trajectories })
}

/// Single-step displacement variance per unit time of `n` walkers under a
/// uniform gradient.
fn fluctuation_rate(consts: &PhysicalConstants, dt: f64, n: usize, seed: u64) -> Result<f64> {
    let e = Ensemble::at_point(&[0.0], n, seed)?;
    let cfg = TimeStepConfig::new(dt, 1)?;
    let out = evolve_ensemble(&e, &UniformGradient(vec![0.0]), &cfg, consts, &EvolveOptions::default())?;
    Ok(out.ensemble.variance()[0] / dt)
}

fn classical_checks(cfg: &ScenarioConfig, consts: &PhysicalConstants, report: &mut ComparisonReport) -> Result<()> {
    let tol = &cfg.tolerances;
    let factor = cfg.constants.mass_scale;
    let dt = cfg.coarse_dt();
    let n = cfg.ensemble.walkers;
    let seed = cfg.ensemble.seed;
    // Independent streams for the two masses.
    let base = fluctuation_rate(&cfg.base_constants(), dt, n, seed.wrapping_add(1))?;
    let scaled = fluctuation_rate(consts, dt, n, seed.wrapping_add(2))?;
    report.observe("fluctuation_rate_base", base);
    report.observe("fluctuation_rate_scaled", scaled);
    report.check("fluctuation_ratio_error", (base / scaled / factor - 1.0).abs(), tol.fluctuation_ratio_error, Direction::AtMost);

    // Classical characteristic x(t) = x0 + v0 t.
    let i = &cfg.initial;
    let (m, eta) = (consts.mass(), consts.eta());
    let v0 = eta * i.k0 / m;
    let total_t = cfg.time.dt * cfg.time.steps as f64;
    let travel = (v0 * total_t).abs().max(i.s0);
    let worst = report
        .snapshots
        .iter()
        .filter_map(|s| Some((s.mean.ensemble? - (i.x0 + v0 * s.t)).abs()))
        .fold(0.0, f64::max);
    report.observe("classical_velocity", v0);
    report.check("mean_tracking_error", worst / travel, tol.mean_tracking_error, Direction::AtMost);

    // Free-particle Hamilton–Jacobi phase, evaluated on a wall-bounded copy
    // of the grid so the linear phase is not wrapped.
    let g = cfg.spatial_grid();
    let open = SpatialGrid::reflecting(g.x_min(), g.x_max(), g.len())?;
    let phi = field(open, FieldRole::Phase, |x| (m * v0 * (x - i.x0) - 0.5 * m * v0 * v0 * total_t) / eta)?;
    let phi_dot = ScalarField::constant(open, FieldRole::Generic, -m * v0 * v0 / (2.0 * eta))?;
    let r = hj_residual(&phi, &ScalarField::zeros(open, FieldRole::Potential), &phi_dot, consts)?;
    let worst = r.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    report.check("hj_residual", worst, tol.hj_residual, Direction::AtMost);
    Ok(())
}

fn arrow_of_time(cfg: &ScenarioConfig, sink: &mut dyn FnMut(&SnapshotReport) -> Result<()>) -> Result<RunOutput> {
    let consts = cfg.physical_constants();
    let grid = cfg.spatial_grid();
    let (rho0, s) = density_and_entropy(cfg, grid)?;
    let alpha = TimeStepConfig::new(cfg.time.dt, 1)?.alpha(&consts);
    let kernel = build_exact_kernel(&s, alpha, &consts)?;

    let mut report = ComparisonReport::empty(cfg.scenario.name(), cfg.ensemble.seed);
    report.x = grid.coords();
    let snaps = snapshot_steps(cfg.time.steps, 1, cfg.outputs.snapshots);
    let mut rho = rho0.clone();
    let mut worst_identity = 0.0f64;
    let mut asymmetry = None;
    for step in 0..=cfg.time.steps {
        if snaps.contains(&step) {
            let density = PerRepresentation { ck: Some(rho.values().to_vec()), ..Default::default() };
            let snap = build_snapshot(&grid, step, step as f64 * cfg.time.dt, density, None, None)?;
            sink(&snap)?;
            report.snapshots.push(snap);
        }
        if step == cfg.time.steps {
            break;
        }
        let next = ck_propagate(&rho, &kernel)?;
        let reverse = bayes_reverse_kernel(&kernel, &rho, &next)?;
        let back = ck_propagate(&next, &reverse)?;
        let residual = back.values().iter().zip(rho.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst_identity = worst_identity.max(residual);
        asymmetry.get_or_insert(reversal_asymmetry(&kernel, &reverse)?);
        rho = next;
    }

    // Control: uniform density, constant entropy.
    let uniform = normalize_density(&ScalarField::constant(grid, FieldRole::Density, 1.0)?)?;
    let flat = build_exact_kernel(&ScalarField::zeros(grid, FieldRole::Entropy), alpha, &consts)?;
    let uniform_next = ck_propagate(&uniform, &flat)?;
    let uniform_asymmetry = reversal_asymmetry(&flat, &bayes_reverse_kernel(&flat, &uniform, &uniform_next)?)?;

    let tol = &cfg.tolerances;
    report.observe("alpha", alpha);
    report.check("reverse_identity", worst_identity, tol.reverse_identity, Direction::AtMost);
    if let Some(a) = asymmetry {
        report.check("asymmetry_min", a, tol.asymmetry_min, Direction::AtLeast);
    }
    report.check("uniform_asymmetry", uniform_asymmetry, tol.uniform_asymmetry, Direction::AtMost);
    Ok(RunOutput { report, trajectories: Vec::new() })
}
