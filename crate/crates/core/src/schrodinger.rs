//! Reference Schrödinger solvers for `i eta d_t psi = -(eta^2/2m) lap psi + V psi`.

use std::f64::consts::PI;
use std::io::{self, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::field::{check_no_interior_nodes, integrate_values, wrap_phase, FieldRole, ScalarField, DENSITY_FLOOR};
use crate::grid::SpatialGrid;
use crate::hydro::HydrodynamicState;
use crate::io::CsvWriter;
use crate::tridiag::{CyclicTridiagonal, Tridiagonal};

/// Largest wrapped phase jump between resolved neighbours accepted by
/// [`from_wavefunction`]; anything closer to `pi` is indistinguishable from
/// an under-resolved oscillation.
pub const ALIASING_LIMIT: f64 = 0.9 * PI;

#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    grid: SpatialGrid,
    amplitudes: Vec<Complex64>,
    t: f64,
}

impl WaveFunction {
    /// Validates finiteness and normalizes to unit norm.
    pub fn new(grid: SpatialGrid, amplitudes: Vec<Complex64>, t: f64) -> Result<Self> {
        if amplitudes.len() != grid.len() {
            return Err(Error::config(format!("{} amplitudes for {} nodes", amplitudes.len(), grid.len())));
        }
        if let Some(i) = amplitudes.iter().position(|a| !(a.re.is_finite() && a.im.is_finite())) {
            return Err(Error::NonFinite(format!("wavefunction amplitude at node {i}")));
        }
        let mut psi = Self { grid, amplitudes, t };
        let norm = psi.norm();
        if !(norm > 0.0) {
            return Err(Error::density("wavefunction has zero norm"));
        }
        let s = 1.0 / norm.sqrt();
        psi.amplitudes.iter_mut().for_each(|a| *a *= s);
        Ok(psi)
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// `integral |psi|^2` with the grid quadrature.
    pub fn norm(&self) -> f64 {
        integrate_values(&self.grid, &self.density_values())
    }

    pub fn density_values(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn density(&self) -> ScalarField {
        ScalarField::from_parts(self.grid, self.density_values(), FieldRole::Density)
    }

    /// Phase unwrapped from the leftmost node.
    pub fn unwrapped_phase(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.amplitudes.len());
        let mut prev_arg = 0.0;
        let mut acc = 0.0;
        for (i, a) in self.amplitudes.iter().enumerate() {
            let arg = a.arg();
            acc = if i == 0 { arg } else { acc + wrap_phase(arg - prev_arg) };
            prev_arg = arg;
            out.push(acc);
        }
        out
    }

    /// Complex conjugate, i.e. the time-reversed state.
    pub fn conj(&self) -> Self {
        Self { grid: self.grid, amplitudes: self.amplitudes.iter().map(|a| a.conj()).collect(), t: self.t }
    }

    /// `(integral |psi - other|^2)^(1/2)`.
    pub fn l2_distance(&self, other: &WaveFunction) -> Result<f64> {
        self.grid.ensure_same(&other.grid, "wavefunction distance")?;
        let d: Vec<f64> = self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| (a - b).norm_sqr()).collect();
        Ok(integrate_values(&self.grid, &d).sqrt())
    }

    /// Snapshot with columns `x, re, im, rho, phi_unwrapped`.
    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut w = CsvWriter::new(out, &["x", "re", "im", "rho", "phi_unwrapped"])?;
        let phase = self.unwrapped_phase();
        for (i, a) in self.amplitudes.iter().enumerate() {
            w.row(&[self.grid.coord(i), a.re, a.im, a.norm_sqr(), phase[i]])?;
        }
        w.finish().map(drop)
    }
}

/// `psi = sqrt(rho) e^{i phi}`.
pub fn to_wavefunction(state: &HydrodynamicState) -> Result<WaveFunction> {
    let amps = state
        .rho()
        .values()
        .iter()
        .zip(state.phi().values())
        .map(|(r, p)| Complex64::from_polar(r.sqrt(), *p))
        .collect();
    WaveFunction::new(*state.grid(), amps, state.t())
}

/// `rho = |psi|^2` and the phase unwrapped from the leftmost node.
pub fn from_wavefunction(psi: &WaveFunction) -> Result<HydrodynamicState> {
    let grid = psi.grid;
    let rho = ScalarField::new(grid, psi.density_values(), FieldRole::Density)?;
    check_no_interior_nodes(&rho)?;
    let floor = DENSITY_FLOOR * rho.max();
    let n = grid.len();
    let faces = grid.face_count();
    for f in 0..faces {
        let g = (f + 1) % n;
        if rho.get(f) > floor && rho.get(g) > floor {
            let jump = wrap_phase(psi.amplitudes[g].arg() - psi.amplitudes[f].arg());
            if jump.abs() > ALIASING_LIMIT {
                return Err(Error::Aliasing { node: f, next: g, jump });
            }
        }
    }
    let phi = ScalarField::new(grid, psi.unwrapped_phase(), FieldRole::Phase)?;
    HydrodynamicState::new(rho, phi, psi.t)
}

fn check_potential(grid: &SpatialGrid, v: &ScalarField) -> Result<()> {
    grid.ensure_same(v.grid(), "Schrödinger potential")
}

enum Factor {
    Plain(Tridiagonal<Complex64>),
    Cyclic(CyclicTridiagonal<Complex64>),
}

/// Crank–Nicolson propagator with a cached factorization of
/// `1 + i dt H / 2 eta`.
pub struct CnPropagator {
    grid: SpatialGrid,
    dt: f64,
    factor: Factor,
    /// Explicit half step `1 - i dt H / 2 eta` as three diagonals.
    sub: Vec<Complex64>,
    diag: Vec<Complex64>,
    sup: Vec<Complex64>,
}

impl CnPropagator {
    pub fn new(grid: SpatialGrid, v: &ScalarField, dt: f64, consts: &PhysicalConstants) -> Result<Self> {
        check_potential(&grid, v)?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::StepSize { bound: "dt > 0", detail: format!("dt = {dt}") });
        }
        let n = grid.len();
        let h2 = grid.spacing().powi(2);
        let k = consts.eta() / (2.0 * consts.mass() * h2);
        // H / eta = -k (shift + shift^-1 - 2) + V / eta, mirror ghosts at reflecting walls.
        let mut hsub = vec![-k; n];
        let mut hsup = vec![-k; n];
        let hdiag: Vec<f64> = (0..n).map(|i| 2.0 * k + v.get(i) / consts.eta()).collect();
        if !grid.is_periodic() {
            hsup[0] = -2.0 * k;
            hsub[n - 1] = -2.0 * k;
            hsub[0] = 0.0;
            hsup[n - 1] = 0.0;
        }
        let c = Complex64::new(0.0, 0.5 * dt);
        let one = Complex64::new(1.0, 0.0);
        let lhs = |hd: f64| one + c * hd;
        let a: Vec<Complex64> = hsub.iter().map(|&x| c * x).collect();
        let b: Vec<Complex64> = hdiag.iter().map(|&x| lhs(x)).collect();
        let cc: Vec<Complex64> = hsup.iter().map(|&x| c * x).collect();
        let factor = if grid.is_periodic() {
            Factor::Cyclic(CyclicTridiagonal::new(&a, &b, &cc)?)
        } else {
            Factor::Plain(Tridiagonal::new(&a, &b, &cc)?)
        };
        Ok(Self {
            grid,
            dt,
            factor,
            sub: hsub.iter().map(|&x| -c * x).collect(),
            diag: hdiag.iter().map(|&x| one - c * x).collect(),
            sup: hsup.iter().map(|&x| -c * x).collect(),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, psi: &WaveFunction) -> Result<WaveFunction> {
        self.grid.ensure_same(&psi.grid, "Crank-Nicolson step")?;
        let n = self.grid.len();
        let p = &psi.amplitudes;
        let mut rhs: Vec<Complex64> = (0..n)
            .map(|i| {
                let l = if i == 0 { n - 1 } else { i - 1 };
                let r = if i + 1 == n { 0 } else { i + 1 };
                self.sub[i] * p[l] + self.diag[i] * p[i] + self.sup[i] * p[r]
            })
            .collect();
        match &self.factor {
            Factor::Plain(f) => f.solve_in_place(&mut rhs),
            Factor::Cyclic(f) => f.solve_in_place(&mut rhs),
        }
        if rhs.iter().any(|a| !(a.re.is_finite() && a.im.is_finite())) {
            return Err(Error::Internal("Crank-Nicolson solve produced non-finite amplitudes".into()));
        }
        Ok(WaveFunction { grid: self.grid, amplitudes: rhs, t: psi.t + self.dt })
    }
}

/// One Crank–Nicolson step. Build a [`CnPropagator`] when stepping repeatedly.
pub fn cn_step(psi: &WaveFunction, v: &ScalarField, dt: f64, consts: &PhysicalConstants) -> Result<WaveFunction> {
    CnPropagator::new(psi.grid, v, dt, consts)?.step(psi)
}

/// Strang-split Fourier propagator on periodic grids.
pub struct SplitStepPropagator {
    grid: SpatialGrid,
    dt: f64,
    half_potential: Vec<Complex64>,
    kinetic: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl SplitStepPropagator {
    pub fn new(grid: SpatialGrid, v: &ScalarField, dt: f64, consts: &PhysicalConstants) -> Result<Self> {
        if !grid.is_periodic() {
            return Err(Error::config("split-step propagation requires a periodic grid"));
        }
        check_potential(&grid, v)?;
        if !(dt.is_finite() && dt >= 0.0) {
            return Err(Error::StepSize { bound: "dt >= 0", detail: format!("dt = {dt}") });
        }
        let n = grid.len();
        let l = grid.extent();
        let half_potential = (0..n).map(|i| Complex64::from_polar(1.0, -0.5 * dt * v.get(i) / consts.eta())).collect();
        let kinetic = (0..n)
            .map(|j| {
                let m = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
                let k = 2.0 * PI * m / l;
                Complex64::from_polar(1.0, -consts.eta() * k * k * dt / (2.0 * consts.mass()))
            })
            .collect();
        let mut planner = FftPlanner::new();
        Ok(Self {
            grid,
            dt,
            half_potential,
            kinetic,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        })
    }

    pub fn step(&self, psi: &WaveFunction) -> Result<WaveFunction> {
        self.grid.ensure_same(&psi.grid, "split-step")?;
        if self.dt == 0.0 {
            return Ok(psi.clone());
        }
        let n = self.grid.len() as f64;
        let mut a: Vec<Complex64> = psi.amplitudes.iter().zip(&self.half_potential).map(|(p, v)| p * v).collect();
        self.forward.process(&mut a);
        a.iter_mut().zip(&self.kinetic).for_each(|(x, k)| *x *= k);
        self.inverse.process(&mut a);
        a.iter_mut().zip(&self.half_potential).for_each(|(x, v)| *x *= v / n);
        Ok(WaveFunction { grid: self.grid, amplitudes: a, t: psi.t + self.dt })
    }
}

pub fn splitstep_step(
    psi: &WaveFunction,
    v: &ScalarField,
    dt: f64,
    consts: &PhysicalConstants,
) -> Result<WaveFunction> {
    SplitStepPropagator::new(psi.grid, v, dt, consts)?.step(psi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnalyticState {
    /// Spreading Gaussian packet with initial width `s0`, wavenumber `k0`
    /// and centre `x0`.
    FreeGaussian { s0: f64, k0: f64, x0: f64 },
    /// Ground state of `V = m omega^2 x^2 / 2`.
    HarmonicGround { omega: f64 },
}

impl AnalyticState {
    pub fn free_gaussian(s0: f64, k0: f64) -> Self {
        AnalyticState::FreeGaussian { s0, k0, x0: 0.0 }
    }

    /// Closed-form position variance at time `t`.
    pub fn variance(&self, t: f64, consts: &PhysicalConstants) -> f64 {
        match *self {
            AnalyticState::FreeGaussian { s0, .. } => {
                let a = consts.eta() * t / (2.0 * consts.mass() * s0 * s0);
                s0 * s0 * (1.0 + a * a)
            }
            AnalyticState::HarmonicGround { omega } => consts.eta() / (2.0 * consts.mass() * omega),
        }
    }

    /// Closed-form mean position at time `t`.
    pub fn mean(&self, t: f64, consts: &PhysicalConstants) -> f64 {
        match *self {
            AnalyticState::FreeGaussian { k0, x0, .. } => x0 + consts.eta() * k0 / consts.mass() * t,
            AnalyticState::HarmonicGround { .. } => 0.0,
        }
    }

    /// Energy expectation value.
    pub fn energy(&self, consts: &PhysicalConstants) -> f64 {
        match *self {
            AnalyticState::FreeGaussian { s0, k0, .. } => {
                consts.eta().powi(2) / (2.0 * consts.mass()) * (k0 * k0 + 1.0 / (4.0 * s0 * s0))
            }
            AnalyticState::HarmonicGround { omega } => 0.5 * consts.eta() * omega,
        }
    }

    /// Amplitude at `(x, t)`.
    pub fn amplitude(&self, x: f64, t: f64, consts: &PhysicalConstants) -> Complex64 {
        let eta = consts.eta();
        let m = consts.mass();
        match *self {
            AnalyticState::FreeGaussian { s0, k0, x0 } => {
                let a = eta * t / (2.0 * m * s0 * s0);
                let one_ia = Complex64::new(1.0, a);
                let v = eta * k0 / m;
                let y = x - x0 - v * t;
                let exponent = -Complex64::new(y * y, 0.0) / (4.0 * s0 * s0 * one_ia)
                    + Complex64::new(0.0, k0 * (x - x0) - eta * k0 * k0 * t / (2.0 * m));
                (2.0 * PI * s0 * s0).powf(-0.25) / one_ia.sqrt() * exponent.exp()
            }
            AnalyticState::HarmonicGround { omega } => {
                let norm = (m * omega / (PI * eta)).powf(0.25);
                Complex64::from_polar(norm * (-m * omega * x * x / (2.0 * eta)).exp(), -0.5 * omega * t)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            AnalyticState::FreeGaussian { s0, k0, x0 } => s0 > 0.0 && s0.is_finite() && k0.is_finite() && x0.is_finite(),
            AnalyticState::HarmonicGround { omega } => omega > 0.0 && omega.is_finite(),
        };
        if ok { Ok(()) } else { Err(Error::Domain(format!("unphysical reference state {self:?}"))) }
    }
}

/// Closed-form solution sampled on `grid` at time `t`.
pub fn analytic_oracle(
    kind: AnalyticState,
    t: f64,
    grid: &SpatialGrid,
    consts: &PhysicalConstants,
) -> Result<WaveFunction> {
    kind.validate()?;
    let amps = grid.coords().into_iter().map(|x| kind.amplitude(x, t, consts)).collect();
    WaveFunction::new(*grid, amps, t)
}

/// Lowest eigenpair of the discrete Hamiltonian used by [`CnPropagator`],
/// by shifted inverse iteration. Returns the (positive) ground-state
/// density and its energy.
pub fn discrete_ground_state(
    grid: &SpatialGrid,
    v: &ScalarField,
    consts: &PhysicalConstants,
) -> Result<(ScalarField, f64)> {
    check_potential(grid, v)?;
    let n = grid.len();
    let k = consts.eta().powi(2) / (2.0 * consts.mass() * grid.spacing().powi(2));
    let shift = v.min();
    let mut sub = vec![-k; n];
    let mut sup = vec![-k; n];
    let diag: Vec<f64> = (0..n).map(|i| 2.0 * k + v.get(i) - shift).collect();
    if !grid.is_periodic() {
        sup[0] = -2.0 * k;
        sub[n - 1] = -2.0 * k;
        sub[0] = 0.0;
        sup[n - 1] = 0.0;
    }
    // A small regularizing shift keeps the system non-singular when V is constant.
    let eps = 1e-9 * k.max(1.0);
    let diag_shifted: Vec<f64> = diag.iter().map(|d| d + eps).collect();
    let (cyclic, plain) = if grid.is_periodic() {
        (Some(CyclicTridiagonal::new(&sub, &diag_shifted, &sup)?), None)
    } else {
        (None, Some(Tridiagonal::new(&sub, &diag_shifted, &sup)?))
    };
    let solve = |x: &mut [f64]| match (&cyclic, &plain) {
        (Some(f), _) => f.solve_in_place(x),
        (_, Some(f)) => f.solve_in_place(x),
        _ => unreachable!(),
    };
    let weights = grid.weights();
    let normalize = |x: &mut [f64]| {
        let s: f64 = x.iter().zip(&weights).map(|(a, w)| a * a * w).sum::<f64>().sqrt();
        x.iter_mut().for_each(|a| *a /= s);
    };
    let apply = |x: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let l = if i == 0 { n - 1 } else { i - 1 };
                let r = if i + 1 == n { 0 } else { i + 1 };
                sub[i] * x[l] + diag[i] * x[i] + sup[i] * x[r]
            })
            .collect()
    };
    let mut x: Vec<f64> = vec![1.0; n];
    normalize(&mut x);
    let mut energy = f64::INFINITY;
    for _ in 0..500 {
        let mut y = x.clone();
        solve(&mut y);
        normalize(&mut y);
        let hy = apply(&y);
        let e: f64 = y.iter().zip(&hy).zip(&weights).map(|((a, b), w)| a * b * w).sum();
        x = y;
        if (e - energy).abs() <= 1e-15 * e.abs().max(1e-300) {
            energy = e;
            break;
        }
        energy = e;
    }
    let rho: Vec<f64> = x.iter().map(|a| a * a).collect();
    let rho = crate::field::normalize_density(&ScalarField::new(*grid, rho, FieldRole::Density)?)?;
    Ok((rho, energy + shift))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitstep_requires_periodic() {
        let g = SpatialGrid::reflecting(0.0, 1.0, 32).unwrap();
        let v = ScalarField::zeros(g, FieldRole::Potential);
        assert!(matches!(
            SplitStepPropagator::new(g, &v, 0.01, &PhysicalConstants::natural()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn unphysical_oracle_rejected() {
        let g = SpatialGrid::periodic(-5.0, 5.0, 64).unwrap();
        let c = PhysicalConstants::natural();
        assert!(analytic_oracle(AnalyticState::HarmonicGround { omega: -1.0 }, 0.0, &g, &c).is_err());
        assert!(analytic_oracle(AnalyticState::free_gaussian(0.0, 1.0), 0.0, &g, &c).is_err());
    }

    #[test]
    fn aliased_phase_rejected() {
        let g = SpatialGrid::periodic(0.0, 1.0, 16).unwrap();
        let h = g.spacing();
        let k = 0.95 * PI / h;
        let amps = g.coords().into_iter().map(|x| Complex64::from_polar(1.0, k * x)).collect();
        let psi = WaveFunction::new(g, amps, 0.0).unwrap();
        assert!(matches!(from_wavefunction(&psi), Err(Error::Aliasing { .. })));
    }
}
