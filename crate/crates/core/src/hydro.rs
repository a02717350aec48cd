//! Density/phase (Madelung) field dynamics.
//!
//! ```text
//! d_t rho       = -d(rho v),     v = (eta/m) d phi
//! eta d_t phi   = -(eta^2/2m)(d phi)^2 - V + (eta^2/2m) lap(sqrt rho)/sqrt rho
//! ```
//!
//! The coupled solver uses a compact discretization derived from the
//! discrete energy
//!
//! ```text
//! E_h = sum_faces h (eta^2/2m) [ rho_f (D phi)^2 + (D sqrt rho)^2 ] + sum_i w_i V_i rho_i
//! ```
//!
//! with `D` the one-sided face difference and `rho_f` the face average.
//! The two update rules are exactly `-dE_h/d phi` and `-dE_h/d rho` (per
//! quadrature weight), so the scheme inherits the Hamiltonian structure
//! of the continuum equations.
//!
//! Where the density is negligible the phase is physically meaningless and
//! numerically ill-conditioned. Nodes with `rho <= theta * max rho` are
//! therefore frozen and their phase is continued smoothly from the nearest
//! resolved node (see [`SolverOptions::vacuum_threshold`]).

use std::io::{self, Write};

use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::field::{
    check_no_interior_nodes, clamped_density, gradient, laplacian_values, normalize_density, wrap_phase, FieldRole,
    ScalarField, DENSITY_FLOOR,
};
use crate::grid::SpatialGrid;
use crate::io::CsvWriter;

pub const DEFAULT_VACUUM_THRESHOLD: f64 = 1e-8;
/// Phase change per step above which a step is declared unstable.
pub const INSTABILITY_GROWTH: f64 = 1e6;
/// Courant bound `max |v| dt / h` of the continuity update.
pub const CFL_LIMIT: f64 = 0.5;
/// Bound on `dt eta / (m h^2)` for the explicit phase update.
pub const DISPERSIVE_LIMIT: f64 = 1.0;
/// Number of nodes over which the extrapolated phase keeps its curvature
/// before continuing linearly.
const EXTRAPOLATION_REACH: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct HydrodynamicState {
    rho: ScalarField,
    phi: ScalarField,
    t: f64,
}

impl HydrodynamicState {
    /// Validates and normalizes the density; rejects interior nodes of `rho`.
    pub fn new(rho: ScalarField, phi: ScalarField, t: f64) -> Result<Self> {
        rho.grid().ensure_same(phi.grid(), "hydrodynamic state")?;
        if !t.is_finite() {
            return Err(Error::NonFinite("state time".into()));
        }
        let rho = normalize_density(&rho)?;
        check_no_interior_nodes(&rho)?;
        let phi = phi.with_role(FieldRole::Phase)?;
        Ok(Self { rho, phi, t })
    }

    fn from_parts(grid: SpatialGrid, rho: Vec<f64>, phi: Vec<f64>, t: f64) -> Self {
        Self {
            rho: ScalarField::from_parts(grid, rho, FieldRole::Density),
            phi: ScalarField::from_parts(grid, phi, FieldRole::Phase),
            t,
        }
    }

    pub fn rho(&self) -> &ScalarField {
        &self.rho
    }

    pub fn phi(&self) -> &ScalarField {
        &self.phi
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn grid(&self) -> &SpatialGrid {
        self.rho.grid()
    }

    pub fn into_parts(self) -> (ScalarField, ScalarField, f64) {
        (self.rho, self.phi, self.t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityFields {
    pub drift_b: ScalarField,
    pub osmotic_u: ScalarField,
    pub current_v: ScalarField,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub kinetic_current: f64,
    pub kinetic_osmotic: f64,
    pub potential: f64,
    pub total: f64,
}

impl EnergyReport {
    fn new(kinetic_current: f64, kinetic_osmotic: f64, potential: f64) -> Self {
        Self { kinetic_current, kinetic_osmotic, potential, total: kinetic_current + kinetic_osmotic + potential }
    }
}

/// `b = (sigma2/tau) dS`.
pub fn drift_velocity(s: &ScalarField, consts: &PhysicalConstants) -> ScalarField {
    scaled(gradient(s), consts.diffusion())
}

/// `u = -(sigma2/tau) d log sqrt(rho)`, with `rho` clamped at the density floor.
pub fn osmotic_velocity(rho: &ScalarField, consts: &PhysicalConstants) -> Result<ScalarField> {
    let clamped = clamped_density(rho)?;
    let log_half = clamped.iter().map(|r| 0.5 * r.ln()).collect();
    let f = ScalarField::from_parts(*rho.grid(), log_half, FieldRole::Generic);
    Ok(scaled(gradient(&f), -consts.diffusion()))
}

/// `v = (eta/m) d phi`.
pub fn current_velocity(phi: &ScalarField, consts: &PhysicalConstants) -> ScalarField {
    scaled(gradient(phi), consts.eta() / consts.mass())
}

pub fn velocity_fields(s: &ScalarField, rho: &ScalarField, consts: &PhysicalConstants) -> Result<VelocityFields> {
    s.grid().ensure_same(rho.grid(), "velocity decomposition")?;
    let drift_b = drift_velocity(s, consts);
    let osmotic_u = osmotic_velocity(rho, consts)?;
    let v = drift_b.values().iter().zip(osmotic_u.values()).map(|(b, u)| b + u).collect();
    let current_v = ScalarField::from_parts(*s.grid(), v, FieldRole::Generic);
    Ok(VelocityFields { drift_b, osmotic_u, current_v })
}

fn scaled(f: ScalarField, c: f64) -> ScalarField {
    let grid = *f.grid();
    ScalarField::from_parts(grid, f.into_values().into_iter().map(|v| c * v).collect(), FieldRole::Generic)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMap {
    pub phase: ScalarField,
    /// Nodes whose density was raised to the floor before taking the logarithm.
    pub clamped_nodes: usize,
}

impl PhaseMap {
    pub fn clamped(&self) -> bool {
        self.clamped_nodes > 0
    }
}

/// `phi = S - log sqrt(rho)`.
pub fn phase_from_entropy(s: &ScalarField, rho: &ScalarField) -> Result<PhaseMap> {
    s.grid().ensure_same(rho.grid(), "phase map")?;
    let clamped = clamped_density(rho)?;
    let clamped_nodes = rho.values().iter().zip(&clamped).filter(|(a, b)| a != b).count();
    let phi = s.values().iter().zip(&clamped).map(|(s, r)| s - 0.5 * r.ln()).collect();
    Ok(PhaseMap { phase: ScalarField::new(*s.grid(), phi, FieldRole::Phase)?, clamped_nodes })
}

/// `S = phi + log sqrt(rho)`, the inverse of [`phase_from_entropy`].
pub fn entropy_from_phase(phi: &ScalarField, rho: &ScalarField) -> Result<ScalarField> {
    phi.grid().ensure_same(rho.grid(), "entropy map")?;
    let clamped = clamped_density(rho)?;
    let s = phi.values().iter().zip(&clamped).map(|(p, r)| p + 0.5 * r.ln()).collect();
    ScalarField::new(*phi.grid(), s, FieldRole::Entropy)
}

// ---------------------------------------------------------------------------
// Discrete operators
// ---------------------------------------------------------------------------

/// `phi[f+1] - phi[f]` for every face, wrapped to the principal branch on
/// periodic grids.
fn face_differences(grid: &SpatialGrid, phi: &[f64]) -> Vec<f64> {
    let n = grid.len();
    (0..grid.face_count())
        .map(|f| {
            let d = phi[(f + 1) % n] - phi[f];
            if grid.is_periodic() { wrap_phase(d) } else { d }
        })
        .collect()
}

fn face_velocities(grid: &SpatialGrid, phi: &[f64], consts: &PhysicalConstants) -> Vec<f64> {
    let c = consts.eta() / (consts.mass() * grid.spacing());
    face_differences(grid, phi).into_iter().map(|d| c * d).collect()
}

/// Conservative rate `-(F_{i+1/2} - F_{i-1/2}) / w_i` with `F = v_f rho_f`.
/// Reflecting walls carry no flux.
fn continuity_rate(grid: &SpatialGrid, rho: &[f64], v_face: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let mut rate = vec![0.0; n];
    for (f, v) in v_face.iter().enumerate() {
        let r = (f + 1) % n;
        let flux = v * 0.5 * (rho[f] + rho[r]);
        rate[f] -= flux;
        rate[r] += flux;
    }
    for (i, q) in rate.iter_mut().enumerate() {
        *q /= grid.weight(i);
    }
    rate
}

/// Squared face difference seen by node `i` on each side. Reflecting end
/// nodes mirror their single face.
fn side_faces(grid: &SpatialGrid, i: usize) -> (usize, usize) {
    let n = grid.len();
    let right = if grid.is_periodic() || i + 1 < n { i } else { n - 2 };
    let left = grid.left(i).unwrap_or_default();
    (left, right)
}

/// `d_t phi` of the compact scheme, not masked.
fn phase_rate_values(
    grid: &SpatialGrid,
    phi: &[f64],
    rho: &[f64],
    v: &[f64],
    consts: &PhysicalConstants,
) -> Result<Vec<f64>> {
    let n = grid.len();
    let h = grid.spacing();
    let c = consts.eta() / (2.0 * consts.mass());
    let max = rho.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(Error::density("density is zero everywhere"));
    }
    let sqrt: Vec<f64> = rho.iter().map(|r| r.max(DENSITY_FLOOR * max).sqrt()).collect();
    let lap = laplacian_values(grid, &sqrt);
    let d = face_differences(grid, phi);
    Ok((0..n)
        .map(|i| {
            let (l, r) = side_faces(grid, i);
            let kinetic = c * 0.5 * (d[l] * d[l] + d[r] * d[r]) / (h * h);
            -kinetic - v[i] / consts.eta() + c * lap[i] / sqrt[i]
        })
        .collect())
}

/// Nodes whose density exceeds `theta * max rho`.
fn active_nodes(rho: &[f64], theta: f64) -> Vec<bool> {
    let max = rho.iter().copied().fold(0.0, f64::max);
    rho.iter().map(|&r| r > theta * max).collect()
}

/// Continues the phase into every inactive run from its active neighbours:
/// quadratic for a few nodes, then linear. Interior runs are split between
/// the two sides.
fn extrapolate_phase(grid: &SpatialGrid, phi: &mut [f64], active: &[bool]) {
    let n = grid.len();
    let Some(anchor) = active.iter().position(|&a| a) else { return };
    if active.iter().all(|&a| a) {
        return;
    }
    let periodic = grid.is_periodic();
    let idx = |k: isize| -> Option<usize> {
        if periodic {
            Some(k.rem_euclid(n as isize) as usize)
        } else if (0..n as isize).contains(&k) {
            Some(k as usize)
        } else {
            None
        }
    };
    let diff = |a: usize, b: usize, phi: &[f64]| {
        let d = phi[b] - phi[a];
        if periodic { wrap_phase(d) } else { d }
    };
    // Collect inactive runs as (first node offset from anchor, length).
    let mut runs = Vec::new();
    let span = n;
    let start = if periodic { anchor as isize } else { 0 };
    let mut k = 0;
    while k < span {
        let i = idx(start + k as isize).unwrap();
        if active[i] {
            k += 1;
            continue;
        }
        let first = start + k as isize;
        let mut len = 0;
        while k < span && !active[idx(start + k as isize).unwrap()] {
            len += 1;
            k += 1;
        }
        runs.push((first, len));
    }
    for (first, len) in runs {
        let left = idx(first - 1).filter(|&i| active[i]);
        let right = idx(first + len as isize).filter(|&i| active[i]);
        let (from_left, from_right) = match (left, right) {
            (Some(_), Some(_)) => (len - len / 2, len / 2),
            (Some(_), None) => (len, 0),
            (None, Some(_)) => (0, len),
            (None, None) => (0, 0),
        };
        for (boundary, count, dir) in [(first - 1, from_left, 1isize), (first + len as isize, from_right, -1)] {
            if count == 0 {
                continue;
            }
            let c = idx(boundary).unwrap();
            let b = idx(boundary - dir).filter(|&i| active[i]);
            let a = idx(boundary - 2 * dir).filter(|&i| active[i]);
            let d1 = b.map_or(0.0, |b| diff(b, c, phi));
            let d2 = match (a, b) {
                (Some(a), Some(b)) => d1 - diff(a, b, phi),
                _ => 0.0,
            };
            let base = phi[c];
            for j in 1..=count {
                let jj = j.min(EXTRAPOLATION_REACH);
                let jf = jj as f64;
                let value = base + d1 * jf + d2 * jf * (jf + 1.0) / 2.0 + (j - jj) as f64 * (d1 + d2 * jf);
                phi[idx(boundary + dir * j as isize).unwrap()] = value;
            }
        }
    }
}

fn check_cfl(grid: &SpatialGrid, rho: &[f64], v_face: &[f64], dt: f64) -> Result<()> {
    let n = grid.len();
    let max = rho.iter().copied().fold(0.0, f64::max);
    let floor = DENSITY_FLOOR * max;
    let h = grid.spacing();
    let worst = v_face
        .iter()
        .enumerate()
        .filter(|(f, _)| 0.5 * (rho[*f] + rho[(f + 1) % n]) > floor)
        .map(|(f, v)| (f, v.abs() * dt / h))
        .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    if !worst.1.is_finite() || worst.1 > CFL_LIMIT {
        return Err(Error::StepSize {
            bound: "CFL |v| dt / h <= 0.5",
            detail: format!("Courant number {:.4} at face {} (dt = {dt}, h = {h})", worst.1, worst.0),
        });
    }
    Ok(())
}

fn check_dispersive(grid: &SpatialGrid, dt: f64, consts: &PhysicalConstants) -> Result<()> {
    let h = grid.spacing();
    let ratio = dt * consts.eta() / (consts.mass() * h * h);
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::StepSize { bound: "dt > 0", detail: format!("dt = {dt}") });
    }
    if ratio > DISPERSIVE_LIMIT {
        return Err(Error::StepSize {
            bound: "dispersive dt eta / (m h^2) <= 1",
            detail: format!("ratio {ratio:.4} with dt = {dt}, h = {h}, eta/m = {}", consts.eta() / consts.mass()),
        });
    }
    Ok(())
}

/// Clips negative densities, restores the previous mass and returns the
/// clipped amount.
fn clip_negative(grid: &SpatialGrid, rho: &mut [f64], target_mass: f64) -> f64 {
    let mut clipped = 0.0;
    for (i, r) in rho.iter_mut().enumerate() {
        if *r < 0.0 {
            clipped -= *r * grid.weight(i);
            *r = 0.0;
        }
    }
    if clipped > 0.0 {
        let mass: f64 = rho.iter().enumerate().map(|(i, r)| r * grid.weight(i)).sum();
        rho.iter_mut().for_each(|r| *r *= target_mass / mass);
    }
    clipped
}

fn mass(grid: &SpatialGrid, rho: &[f64]) -> f64 {
    rho.iter().enumerate().map(|(i, r)| r * grid.weight(i)).sum()
}

// ---------------------------------------------------------------------------
// Continuity step
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct FpOutcome {
    pub rho: ScalarField,
    /// Mass removed by clipping negative values (before renormalization).
    pub clipped_mass: f64,
}

/// One Heun step of `d_t rho = -d(v rho)` with nodal velocities averaged
/// onto the faces.
pub fn fp_step(rho: &ScalarField, v: &ScalarField, dt: f64) -> Result<FpOutcome> {
    rho.grid().ensure_same(v.grid(), "continuity step")?;
    let grid = *rho.grid();
    let n = grid.len();
    let vv = v.values();
    let faces: Vec<f64> = (0..grid.face_count()).map(|f| 0.5 * (vv[f] + vv[(f + 1) % n])).collect();
    fp_step_faces(rho, &faces, dt)
}

/// As [`fp_step`] with velocities given directly on the faces
/// (`face f` joins nodes `f` and `f + 1`).
pub fn fp_step_faces(rho: &ScalarField, v_face: &[f64], dt: f64) -> Result<FpOutcome> {
    let grid = *rho.grid();
    if v_face.len() != grid.face_count() {
        return Err(Error::config(format!("expected {} face velocities, got {}", grid.face_count(), v_face.len())));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::StepSize { bound: "dt > 0", detail: format!("dt = {dt}") });
    }
    check_cfl(&grid, rho.values(), v_face, dt)?;
    let (values, clipped_mass) = heun_continuity(&grid, rho.values(), v_face, dt);
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("density after continuity step".into()));
    }
    Ok(FpOutcome { rho: ScalarField::from_parts(grid, values, FieldRole::Density), clipped_mass })
}

fn heun_continuity(grid: &SpatialGrid, rho: &[f64], v_face: &[f64], dt: f64) -> (Vec<f64>, f64) {
    let m0 = mass(grid, rho);
    let k1 = continuity_rate(grid, rho, v_face);
    let r1: Vec<f64> = rho.iter().zip(&k1).map(|(r, k)| r + dt * k).collect();
    let k2 = continuity_rate(grid, &r1, v_face);
    let mut out: Vec<f64> = rho.iter().zip(&r1).zip(&k2).map(|((r, r1), k)| 0.5 * (r + r1 + dt * k)).collect();
    let clipped = clip_negative(grid, &mut out, m0);
    (out, clipped)
}

// ---------------------------------------------------------------------------
// Phase and coupled steps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Splitting {
    /// Half phase step, full continuity step, half phase step.
    Strang,
    /// Classical fourth-order Runge–Kutta on the joint system.
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative density below which the phase is frozen and extrapolated.
    pub vacuum_threshold: f64,
    pub scheme: Splitting,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { vacuum_threshold: DEFAULT_VACUUM_THRESHOLD, scheme: Splitting::Strang }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if !(self.vacuum_threshold > 0.0 && self.vacuum_threshold < 1.0) {
            return Err(Error::config(format!("vacuum threshold must lie in (0, 1), got {}", self.vacuum_threshold)));
        }
        Ok(())
    }
}

/// `d_t phi` from Eq. (20) divided by `eta`, evaluated at every node.
pub fn phase_rate(
    phi: &ScalarField,
    rho: &ScalarField,
    v: &ScalarField,
    consts: &PhysicalConstants,
) -> Result<ScalarField> {
    let grid = *phi.grid();
    grid.ensure_same(rho.grid(), "phase rate")?;
    grid.ensure_same(v.grid(), "phase rate potential")?;
    let rate = phase_rate_values(&grid, phi.values(), rho.values(), v.values(), consts)?;
    Ok(ScalarField::from_parts(grid, rate, FieldRole::Generic))
}

/// `d_t rho` of the coupled scheme: the compact flux divergence with face
/// velocities `(eta/m) D phi`.
pub fn density_rate(state: &HydrodynamicState, consts: &PhysicalConstants) -> ScalarField {
    let grid = *state.grid();
    let faces = face_velocities(&grid, state.phi.values(), consts);
    ScalarField::from_parts(grid, continuity_rate(&grid, state.rho.values(), &faces), FieldRole::Generic)
}

/// Bohm potential `-(eta^2/2m) lap(sqrt rho)/sqrt rho`.
pub fn quantum_potential(rho: &ScalarField, consts: &PhysicalConstants) -> Result<ScalarField> {
    let grid = *rho.grid();
    let sqrt: Vec<f64> = clamped_density(rho)?.into_iter().map(f64::sqrt).collect();
    let lap = laplacian_values(&grid, &sqrt);
    let c = consts.eta() * consts.eta() / (2.0 * consts.mass());
    let q = lap.iter().zip(&sqrt).map(|(l, s)| -c * l / s).collect();
    Ok(ScalarField::from_parts(grid, q, FieldRole::Potential))
}

struct PhaseStepper<'a> {
    grid: SpatialGrid,
    v: &'a [f64],
    consts: &'a PhysicalConstants,
}

impl PhaseStepper<'_> {
    fn masked_rate(&self, phi: &[f64], rho: &[f64], active: &[bool]) -> Result<Vec<f64>> {
        let mut rate = phase_rate_values(&self.grid, phi, rho, self.v, self.consts)?;
        for (r, a) in rate.iter_mut().zip(active) {
            if !a {
                *r = 0.0;
            }
        }
        Ok(rate)
    }

    fn heun(&self, phi: &[f64], rho: &[f64], active: &[bool], dt: f64) -> Result<Vec<f64>> {
        let k1 = self.masked_rate(phi, rho, active)?;
        let mut p1: Vec<f64> = phi.iter().zip(&k1).map(|(p, k)| p + dt * k).collect();
        extrapolate_phase(&self.grid, &mut p1, active);
        let k2 = self.masked_rate(&p1, rho, active)?;
        let mut out: Vec<f64> = phi.iter().zip(&p1).zip(&k2).map(|((p, p1), k)| 0.5 * (p + p1 + dt * k)).collect();
        extrapolate_phase(&self.grid, &mut out, active);
        Ok(out)
    }
}

/// One explicit Heun step of the phase equation at fixed density.
pub fn phase_step(
    phi: &ScalarField,
    rho: &ScalarField,
    v: &ScalarField,
    dt: f64,
    consts: &PhysicalConstants,
) -> Result<ScalarField> {
    phase_step_with(phi, rho, v, dt, consts, &SolverOptions::default())
}

pub fn phase_step_with(
    phi: &ScalarField,
    rho: &ScalarField,
    v: &ScalarField,
    dt: f64,
    consts: &PhysicalConstants,
    opts: &SolverOptions,
) -> Result<ScalarField> {
    opts.validate()?;
    let grid = *phi.grid();
    grid.ensure_same(rho.grid(), "phase step")?;
    grid.ensure_same(v.grid(), "phase step potential")?;
    check_dispersive(&grid, dt, consts)?;
    let active = active_nodes(rho.values(), opts.vacuum_threshold);
    let mut start = phi.values().to_vec();
    extrapolate_phase(&grid, &mut start, &active);
    let stepper = PhaseStepper { grid, v: v.values(), consts };
    let out = stepper.heun(&start, rho.values(), &active, dt)?;
    check_growth(&start, &out, &active)?;
    Ok(ScalarField::from_parts(grid, out, FieldRole::Phase))
}

fn check_growth(before: &[f64], after: &[f64], active: &[bool]) -> Result<()> {
    if let Some(i) = after.iter().position(|v| !v.is_finite()) {
        return Err(Error::Instability(format!("phase became non-finite at node {i}")));
    }
    let (node, growth) = before
        .iter()
        .zip(after)
        .zip(active)
        .enumerate()
        .filter(|(_, (_, a))| **a)
        .map(|(i, ((b, a), _))| (i, (a - b).abs()))
        .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    if growth > INSTABILITY_GROWTH {
        return Err(Error::Instability(format!("phase changed by {growth:.3e} at node {node} in one step")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: HydrodynamicState,
    pub clipped_mass: f64,
}

pub fn coupled_step(
    state: &HydrodynamicState,
    v: &ScalarField,
    dt: f64,
    consts: &PhysicalConstants,
) -> Result<HydrodynamicState> {
    coupled_step_with(state, v, dt, consts, &SolverOptions::default()).map(|o| o.state)
}

/// Advances `(rho, phi)` by `dt` with the configured scheme.
pub fn coupled_step_with(
    state: &HydrodynamicState,
    v: &ScalarField,
    dt: f64,
    consts: &PhysicalConstants,
    opts: &SolverOptions,
) -> Result<StepOutcome> {
    opts.validate()?;
    let grid = *state.grid();
    grid.ensure_same(v.grid(), "coupled step potential")?;
    check_dispersive(&grid, dt, consts)?;
    let stepper = PhaseStepper { grid, v: v.values(), consts };
    let rho0 = state.rho.values();
    let mut phi0 = state.phi.values().to_vec();
    let active0 = active_nodes(rho0, opts.vacuum_threshold);
    extrapolate_phase(&grid, &mut phi0, &active0);

    let (rho, phi, clipped_mass) = match opts.scheme {
        Splitting::Strang => {
            let phi_half = stepper.heun(&phi0, rho0, &active0, 0.5 * dt)?;
            let faces = face_velocities(&grid, &phi_half, consts);
            check_cfl(&grid, rho0, &faces, dt)?;
            let (rho, clipped) = heun_continuity(&grid, rho0, &faces, dt);
            let active = active_nodes(&rho, opts.vacuum_threshold);
            let mut phi_mid = phi_half;
            extrapolate_phase(&grid, &mut phi_mid, &active);
            let phi = stepper.heun(&phi_mid, &rho, &active, 0.5 * dt)?;
            (rho, phi, clipped)
        }
        Splitting::Rk4 => rk4(&stepper, rho0, &phi0, &active0, dt, opts.vacuum_threshold)?,
    };
    if let Some(i) = rho.iter().position(|r| !r.is_finite()) {
        return Err(Error::Instability(format!("density became non-finite at node {i}")));
    }
    check_growth(&phi0, &phi, &active0)?;
    Ok(StepOutcome { state: HydrodynamicState::from_parts(grid, rho, phi, state.t + dt), clipped_mass })
}

fn rk4(
    stepper: &PhaseStepper<'_>,
    rho0: &[f64],
    phi0: &[f64],
    active: &[bool],
    dt: f64,
    theta: f64,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let grid = stepper.grid;
    let consts = stepper.consts;
    let rates = |rho: &[f64], phi: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> {
        let faces = face_velocities(&grid, phi, consts);
        check_cfl(&grid, rho, &faces, dt)?;
        Ok((continuity_rate(&grid, rho, &faces), stepper.masked_rate(phi, rho, active)?))
    };
    let stage = |base: &[f64], k: &[f64], c: f64| -> Vec<f64> { base.iter().zip(k).map(|(b, k)| b + c * k).collect() };
    let (kr1, kp1) = rates(rho0, phi0)?;
    let mut p = stage(phi0, &kp1, 0.5 * dt);
    extrapolate_phase(&grid, &mut p, active);
    let (kr2, kp2) = rates(&stage(rho0, &kr1, 0.5 * dt), &p)?;
    let mut p = stage(phi0, &kp2, 0.5 * dt);
    extrapolate_phase(&grid, &mut p, active);
    let (kr3, kp3) = rates(&stage(rho0, &kr2, 0.5 * dt), &p)?;
    let mut p = stage(phi0, &kp3, dt);
    extrapolate_phase(&grid, &mut p, active);
    let (kr4, kp4) = rates(&stage(rho0, &kr3, dt), &p)?;
    let combine = |y: &[f64], k1: &[f64], k2: &[f64], k3: &[f64], k4: &[f64]| -> Vec<f64> {
        (0..y.len()).map(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
    };
    let mut rho = combine(rho0, &kr1, &kr2, &kr3, &kr4);
    let mut phi = combine(phi0, &kp1, &kp2, &kp3, &kp4);
    let clipped = clip_negative(&grid, &mut rho, mass(&grid, rho0));
    extrapolate_phase(&grid, &mut phi, &active_nodes(&rho, theta));
    Ok((rho, phi, clipped))
}

// ---------------------------------------------------------------------------
// Energy and the classical limit
// ---------------------------------------------------------------------------

/// Discrete energy `E_h` of a state; its variations are the right-hand
/// sides of the coupled scheme.
pub fn energy(state: &HydrodynamicState, v: &ScalarField, consts: &PhysicalConstants) -> Result<EnergyReport> {
    energy_of(&state.rho, &state.phi, v, consts)
}

/// [`energy`] on raw fields, without requiring a normalized density.
pub fn energy_of(
    rho: &ScalarField,
    phi: &ScalarField,
    v: &ScalarField,
    consts: &PhysicalConstants,
) -> Result<EnergyReport> {
    let grid = *rho.grid();
    grid.ensure_same(phi.grid(), "energy")?;
    grid.ensure_same(v.grid(), "energy")?;
    let n = grid.len();
    let h = grid.spacing();
    let c = consts.eta() * consts.eta() / (2.0 * consts.mass());
    let rho = rho.values();
    let d = face_differences(&grid, phi.values());
    let sqrt: Vec<f64> = rho.iter().map(|r| r.sqrt()).collect();
    let mut current = 0.0;
    let mut osmotic = 0.0;
    for (f, df) in d.iter().enumerate() {
        let r = (f + 1) % n;
        current += 0.5 * (rho[f] + rho[r]) * df * df;
        osmotic += (sqrt[r] - sqrt[f]).powi(2);
    }
    let potential = (0..n).map(|i| grid.weight(i) * v.get(i) * rho[i]).sum();
    Ok(EnergyReport::new(c * current / h, c * osmotic / h, potential))
}

/// Classical Hamilton–Jacobi residual `d_t S_HJ + (d S_HJ)^2 / 2m + V` with
/// `S_HJ = eta phi`.
pub fn hj_residual(
    phi: &ScalarField,
    v: &ScalarField,
    phi_dot: &ScalarField,
    consts: &PhysicalConstants,
) -> Result<ScalarField> {
    let grid = *phi.grid();
    grid.ensure_same(v.grid(), "Hamilton-Jacobi residual")?;
    grid.ensure_same(phi_dot.grid(), "Hamilton-Jacobi residual")?;
    let eta = consts.eta();
    let m = consts.mass();
    let g = gradient(phi);
    let r = (0..grid.len())
        .map(|i| eta * phi_dot.get(i) + (eta * g.get(i)).powi(2) / (2.0 * m) + v.get(i))
        .collect();
    Ok(ScalarField::from_parts(grid, r, FieldRole::Generic))
}

/// Energy time series with columns `t, kinetic_current, kinetic_osmotic, potential, total`.
pub fn write_energy_csv<W: Write>(out: W, series: &[(f64, EnergyReport)]) -> io::Result<()> {
    let mut w = CsvWriter::new(out, &["t", "kinetic_current", "kinetic_osmotic", "potential", "total"])?;
    for (t, e) in series {
        w.row(&[*t, e.kinetic_current, e.kinetic_osmotic, e.potential, e.total])?;
    }
    w.finish().map(drop)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extrapolation_continues_quadratic_then_linear() {
        let g = SpatialGrid::reflecting(0.0, 1.0, 30).unwrap();
        let mut phi: Vec<f64> = (0..30).map(|i| (i as f64).powi(2)).collect();
        let truth = phi.clone();
        let active: Vec<bool> = (0..30).map(|i| i < 10).collect();
        phi[10..].fill(0.0);
        extrapolate_phase(&g, &mut phi, &active);
        for i in 10..=(9 + EXTRAPOLATION_REACH) {
            assert!((phi[i] - truth[i]).abs() < 1e-9, "node {i}: {} vs {}", phi[i], truth[i]);
        }
        let slope = phi[29] - phi[28];
        assert!((slope - (phi[20] - phi[19])).abs() < 1e-9);
    }

    #[test]
    fn extrapolation_splits_periodic_gap() {
        let g = SpatialGrid::periodic(0.0, 1.0, 20).unwrap();
        let mut phi = vec![5.0; 20];
        let active: Vec<bool> = (0..20).map(|i| (5..15).contains(&i)).collect();
        for i in (0..5).chain(15..20) {
            phi[i] = -100.0;
        }
        extrapolate_phase(&g, &mut phi, &active);
        assert!(phi.iter().all(|&p| (p - 5.0).abs() < 1e-12));
    }

    #[test]
    fn cfl_violation_names_bound() {
        let g = SpatialGrid::periodic(0.0, 1.0, 64).unwrap();
        let rho = ScalarField::constant(g, FieldRole::Density, 1.0).unwrap();
        let v = ScalarField::constant(g, FieldRole::Generic, 10.0).unwrap();
        match fp_step(&rho, &v, 0.01) {
            Err(Error::StepSize { bound, .. }) => assert!(bound.contains("CFL")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dispersive_bound_enforced() {
        let g = SpatialGrid::periodic(0.0, 1.0, 64).unwrap();
        let rho = ScalarField::constant(g, FieldRole::Density, 1.0).unwrap();
        let st = HydrodynamicState::new(rho, ScalarField::zeros(g, FieldRole::Phase), 0.0).unwrap();
        let v = ScalarField::zeros(g, FieldRole::Potential);
        let err = coupled_step(&st, &v, 1e-3, &PhysicalConstants::natural()).unwrap_err();
        assert!(matches!(err, Error::StepSize { .. }), "{err}");
    }

    #[test]
    fn nodal_state_rejected() {
        let g = SpatialGrid::periodic(-1.0, 1.0, 64).unwrap();
        let rho = ScalarField::from_fn(g, FieldRole::Density, |x| (std::f64::consts::PI * x).sin().powi(2)).unwrap();
        let err = HydrodynamicState::new(rho, ScalarField::zeros(g, FieldRole::Phase), 0.0).unwrap_err();
        assert!(matches!(err, Error::NodalState { .. }), "{err}");
    }
}
