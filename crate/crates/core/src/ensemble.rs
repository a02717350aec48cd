//! Walker ensembles driven by the Wiener step law
//!
//! ```text
//! dx = b dt + dw,   b = (sigma2/tau) dS,   <dw dw> = (sigma2/tau) dt
//! ```

use std::io::{self, Write};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::field::{gradient, FieldRole, ScalarField};
use crate::grid::{Boundary, SpatialGrid};
use crate::io::CsvWriter;
use crate::rng::{WalkerStreams, INIT_STEP};

pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeStepConfig {
    dt: f64,
    n_steps: usize,
}

impl TimeStepConfig {
    pub fn new(dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::config(format!("time step must be finite and positive, got {dt}")));
        }
        Ok(Self { dt, n_steps })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    /// Multiplier implied by the step, `alpha = tau / dt`.
    pub fn alpha(&self, consts: &PhysicalConstants) -> f64 {
        consts.tau() / self.dt
    }
}

/// Walker positions (walker-major, `dim` coordinates each) plus the state
/// of the counter-based generator.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    dim: usize,
    positions: Vec<f64>,
    t: f64,
    seed: u64,
    step: u64,
}

impl Ensemble {
    pub fn new(dim: usize, positions: Vec<f64>, seed: u64) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::config(format!("ensemble dimension must be 1..={MAX_DIM}, got {dim}")));
        }
        if positions.is_empty() || positions.len() % dim != 0 {
            return Err(Error::config(format!(
                "{} coordinates do not form a non-empty set of {dim}-D walkers",
                positions.len()
            )));
        }
        if let Some(k) = positions.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("initial position of walker {}", k / dim)));
        }
        Ok(Self { dim, positions, t: 0.0, seed, step: 0 })
    }

    /// `n` walkers all starting at `x0`.
    pub fn at_point(x0: &[f64], n: usize, seed: u64) -> Result<Self> {
        let positions = x0.iter().copied().cycle().take(x0.len() * n).collect();
        Self::new(x0.len(), positions, seed)
    }

    /// Draws `n` 1-D walkers from a gridded density. Cell `i` carries mass
    /// `rho_i w_i` and is sampled uniformly, so [`ensemble_density`] on the
    /// same grid is unbiased.
    pub fn sample_density(rho: &ScalarField, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("ensemble needs at least one walker"));
        }
        let grid = *rho.grid();
        let mut cdf = Vec::with_capacity(grid.len());
        let mut acc = 0.0;
        for (i, r) in rho.values().iter().enumerate() {
            acc += r * grid.weight(i);
            cdf.push(acc);
        }
        if !(acc > 0.0 && acc.is_finite()) {
            return Err(Error::density("cannot sample walkers from a density with zero mass"));
        }
        let streams = WalkerStreams::new(seed);
        let h = grid.spacing();
        let unit = Uniform::new(0.0, 1.0).map_err(|e| Error::Internal(e.to_string()))?;
        let positions = exec::map_indices(Execution::default(), n, |w| {
            let mut rng = streams.rng(w as u64, INIT_STEP);
            let u = unit.sample(&mut rng) * acc;
            let i = cdf.partition_point(|&c| c <= u).min(grid.len() - 1);
            let (lo, hi) = match grid.boundary() {
                Boundary::Reflecting if i == 0 => (0.0, 0.5),
                Boundary::Reflecting if i + 1 == grid.len() => (-0.5, 0.0),
                _ => (-0.5, 0.5),
            };
            let offset = lo + (hi - lo) * unit.sample(&mut rng);
            grid.fold(grid.coord(i) + offset * h)
        });
        Self::new(1, positions, seed)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn walker(&self, w: usize) -> &[f64] {
        &self.positions[w * self.dim..(w + 1) * self.dim]
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of steps taken so far; the next step draws from this slot.
    pub fn step_index(&self) -> u64 {
        self.step
    }

    /// Sample mean per axis.
    pub fn mean(&self) -> Vec<f64> {
        let n = self.len() as f64;
        (0..self.dim).map(|a| self.positions.iter().skip(a).step_by(self.dim).sum::<f64>() / n).collect()
    }

    /// Unbiased sample variance per axis.
    pub fn variance(&self) -> Vec<f64> {
        let mean = self.mean();
        let n = self.len() as f64;
        (0..self.dim)
            .map(|a| {
                self.positions.iter().skip(a).step_by(self.dim).map(|x| (x - mean[a]).powi(2)).sum::<f64>()
                    / (n - 1.0).max(1.0)
            })
            .collect()
    }
}

/// Supplies `dS` at a position and time. Implementations must be pure so
/// that walkers can be evaluated in any order.
pub trait EntropyGradient: Sync {
    fn gradient(&self, t: f64, x: &[f64], out: &mut [f64]);
}

impl<F> EntropyGradient for F
where
    F: Fn(f64, &[f64], &mut [f64]) + Sync,
{
    fn gradient(&self, t: f64, x: &[f64], out: &mut [f64]) {
        self(t, x, out)
    }
}

/// Spatially constant gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformGradient(pub Vec<f64>);

impl EntropyGradient for UniformGradient {
    fn gradient(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.0);
    }
}

/// Gradient of a gridded 1-D entropy field, linearly interpolated between nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGradient {
    grid: SpatialGrid,
    values: Vec<f64>,
}

impl FieldGradient {
    pub fn new(s: &ScalarField) -> Self {
        Self { grid: *s.grid(), values: gradient(s).into_values() }
    }

    pub fn at(&self, x: f64) -> f64 {
        let g = &self.grid;
        let n = g.len();
        let y = (g.fold(x) - g.x_min()) / g.spacing();
        let i = y.floor();
        let f = y - i;
        let i = i as usize;
        match g.boundary() {
            Boundary::Periodic => {
                let i = i % n;
                (1.0 - f) * self.values[i] + f * self.values[(i + 1) % n]
            }
            Boundary::Reflecting => {
                if i + 1 >= n {
                    self.values[n - 1]
                } else {
                    (1.0 - f) * self.values[i] + f * self.values[i + 1]
                }
            }
        }
    }
}

impl EntropyGradient for FieldGradient {
    fn gradient(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out[0] = self.at(x[0]);
    }
}

/// Piecewise-constant-in-time sequence of entropy fields: the field whose
/// start time is the latest one not after `t` is used.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSchedule {
    starts: Vec<f64>,
    fields: Vec<FieldGradient>,
}

impl GradientSchedule {
    pub fn new() -> Self {
        Self { starts: Vec::new(), fields: Vec::new() }
    }

    /// Appends a field valid from `t0` on; start times must increase.
    pub fn push(&mut self, t0: f64, s: &ScalarField) -> Result<()> {
        if self.starts.last().is_some_and(|&last| t0 <= last) {
            return Err(Error::config("schedule start times must increase"));
        }
        self.starts.push(t0);
        self.fields.push(FieldGradient::new(s));
        Ok(())
    }
}

impl Default for GradientSchedule {
    fn default() -> Self {
        Self::new()
    }
}

impl EntropyGradient for GradientSchedule {
    fn gradient(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let k = self.starts.partition_point(|&s| s <= t + 1e-12 * t.abs().max(1.0));
        match k.checked_sub(1) {
            Some(k) => self.fields[k].gradient(t, x, out),
            None if !self.fields.is_empty() => self.fields[0].gradient(t, x, out),
            None => out.fill(f64::NAN),
        }
    }
}

/// Moves `x` by drift and fluctuation in place. With a grid the position is
/// wrapped (periodic) or the drift is stopped at the wall and the
/// fluctuation mirrored (reflecting), axis by axis.
fn advance<R: Rng + ?Sized>(
    x: &mut [f64],
    grad_s: &[f64],
    dt: f64,
    consts: &PhysicalConstants,
    domain: Option<&SpatialGrid>,
    rng: &mut R,
) {
    let d = consts.diffusion();
    let sd = (d * dt).sqrt();
    for (xa, ga) in x.iter_mut().zip(grad_s) {
        let noise: f64 = StandardNormal.sample(rng);
        let drift = d * ga * dt;
        *xa = match domain {
            None => *xa + drift + sd * noise,
            Some(g) if g.is_periodic() => g.fold(*xa + drift + sd * noise),
            Some(g) => g.fold((*xa + drift).clamp(g.x_min(), g.x_max()) + sd * noise),
        };
    }
}

/// One Euler–Maruyama step `x + b dt + dw` from an explicit gradient.
pub fn sample_step<R: Rng + ?Sized>(
    x: &[f64],
    grad_s: &[f64],
    cfg: &TimeStepConfig,
    consts: &PhysicalConstants,
    domain: Option<&SpatialGrid>,
    rng: &mut R,
) -> Vec<f64> {
    let mut y = x.to_vec();
    advance(&mut y, grad_s, cfg.dt, consts, domain, rng);
    y
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvolveOptions {
    /// Bounding grid; `None` means free space.
    pub domain: Option<SpatialGrid>,
    /// Record positions every `k` steps (plus the initial state).
    pub record_every: Option<usize>,
    pub exec: Execution,
}


#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: u64,
    pub t: f64,
    pub positions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub ensemble: Ensemble,
    pub history: Vec<Snapshot>,
}

/// Applies `cfg.n_steps()` steps. The gradient is evaluated at the start
/// instant of every step.
pub fn evolve_ensemble<G: EntropyGradient + ?Sized>(
    e: &Ensemble,
    s: &G,
    cfg: &TimeStepConfig,
    consts: &PhysicalConstants,
    opts: &EvolveOptions,
) -> Result<Evolution> {
    if let Some(g) = &opts.domain {
        if !g.is_periodic() && e.positions.iter().any(|&x| x < g.x_min() || x > g.x_max()) {
            return Err(Error::Domain("walkers start outside the reflecting domain".into()));
        }
    }
    let record = opts.record_every.filter(|&k| k > 0);
    let mut out = e.clone();
    let mut history = Vec::new();
    let snap = |en: &Ensemble| Snapshot { step: en.step, t: en.t, positions: en.positions.clone() };
    if record.is_some() {
        history.push(snap(&out));
    }
    let streams = WalkerStreams::new(e.seed);
    let dim = e.dim;
    let t0 = e.t;
    let step0 = e.step;
    for k in 0..cfg.n_steps {
        let t = t0 + k as f64 * cfg.dt;
        let step = step0 + k as u64;
        exec::try_fill_chunks(opts.exec, &mut out.positions, dim, |w, x| {
            let mut g = [0.0; MAX_DIM];
            let g = &mut g[..dim];
            s.gradient(t, x, g);
            if let Some(a) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "entropy gradient {} on axis {a} for walker {w} at x = {x:?}, t = {t}, step {step}",
                    g[a]
                )));
            }
            let mut rng = streams.rng(w as u64, step);
            advance(x, g, cfg.dt, consts, opts.domain.as_ref(), &mut rng);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("position of walker {w} after step {step}")));
            }
            Ok(())
        })?;
        out.step = step + 1;
        out.t = t0 + (k + 1) as f64 * cfg.dt;
        if record.is_some_and(|r| (k + 1) % r == 0) {
            history.push(snap(&out));
        }
    }
    Ok(Evolution { ensemble: out, history })
}

/// Normalized histogram of a 1-D ensemble on node-centred cells.
pub fn ensemble_density(e: &Ensemble, grid: &SpatialGrid) -> Result<ScalarField> {
    if e.dim != 1 {
        return Err(Error::config(format!("density estimate needs a 1-D ensemble, got dim {}", e.dim)));
    }
    if e.is_empty() {
        return Err(Error::density("empty ensemble"));
    }
    let mut counts = vec![0u64; grid.len()];
    for (w, &x) in e.positions.iter().enumerate() {
        match grid.cell_index(x) {
            Some(i) => counts[i] += 1,
            None => return Err(Error::Domain(format!("walker {w} at x = {x} lies outside the grid"))),
        }
    }
    let n = e.len() as f64;
    let values = counts.iter().enumerate().map(|(i, &c)| c as f64 / (n * grid.weight(i))).collect();
    ScalarField::new(*grid, values, FieldRole::Density)
}

/// Trajectory dump with columns `step, walker_id, x[, y, z]`.
pub fn write_trajectory_csv<W: Write>(out: W, dim: usize, history: &[Snapshot]) -> io::Result<()> {
    let axes = ["x", "y", "z"];
    let mut header = vec!["step", "walker_id"];
    header.extend(&axes[..dim.clamp(1, MAX_DIM)]);
    let mut w = CsvWriter::new(out, &header)?;
    for snap in history {
        for (id, x) in snap.positions.chunks(dim).enumerate() {
            w.row_with_ids(&[snap.step, id as u64], x)?;
        }
    }
    w.finish().map(drop)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_step_and_dimension() {
        assert!(TimeStepConfig::new(0.0, 3).is_err());
        assert!(Ensemble::new(4, vec![0.0; 8], 1).is_err());
        assert!(Ensemble::new(2, vec![0.0; 3], 1).is_err());
    }

    #[test]
    fn nan_gradient_aborts_with_walker() {
        let e = Ensemble::at_point(&[0.0], 10, 3).unwrap();
        let bad = |_t: f64, x: &[f64], out: &mut [f64]| out[0] = if x[0] > 1e9 { 0.0 } else { f64::NAN };
        let cfg = TimeStepConfig::new(0.01, 2).unwrap();
        let err = evolve_ensemble(&e, &bad, &cfg, &PhysicalConstants::natural(), &EvolveOptions::default())
            .unwrap_err();
        assert!(err.to_string().contains("walker 0"), "{err}");
    }

    #[test]
    fn reflecting_walkers_stay_inside() {
        let g = SpatialGrid::reflecting(0.0, 1.0, 16).unwrap();
        let e = Ensemble::at_point(&[0.05], 500, 9).unwrap();
        let cfg = TimeStepConfig::new(0.01, 50).unwrap();
        let opts = EvolveOptions { domain: Some(g), ..Default::default() };
        let out = evolve_ensemble(&e, &UniformGradient(vec![-30.0]), &cfg, &PhysicalConstants::natural(), &opts)
            .unwrap();
        assert!(out.ensemble.positions().iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn field_gradient_interpolates() {
        let g = SpatialGrid::reflecting(0.0, 1.0, 11).unwrap();
        let s = ScalarField::from_fn(g, FieldRole::Entropy, |x| x * x).unwrap();
        let fg = FieldGradient::new(&s);
        assert!((fg.at(0.35) - 0.7).abs() < 1e-12);
        let p = SpatialGrid::periodic(0.0, 1.0, 64).unwrap();
        let s = ScalarField::from_fn(p, FieldRole::Entropy, |x| (2.0 * std::f64::consts::PI * x).sin()).unwrap();
        let fg = FieldGradient::new(&s);
        assert!((fg.at(0.999) - fg.at(-0.001)).abs() < 1e-12);
    }

    #[test]
    fn schedule_uses_start_of_interval() {
        let g = SpatialGrid::periodic(0.0, 1.0, 16).unwrap();
        let mut sch = GradientSchedule::new();
        sch.push(0.0, &ScalarField::from_fn(g, FieldRole::Entropy, |x| x).unwrap()).unwrap();
        sch.push(1.0, &ScalarField::zeros(g, FieldRole::Entropy)).unwrap();
        assert!(sch.push(0.5, &ScalarField::zeros(g, FieldRole::Entropy)).is_err());
        let mut out = [0.0];
        sch.gradient(1.0, &[0.5], &mut out);
        assert_eq!(out[0], 0.0);
        sch.gradient(0.99, &[0.5], &mut out);
        assert!((out[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trajectory_csv_columns() {
        let snap = Snapshot { step: 2, t: 0.2, positions: vec![1.0, 2.0, 3.0, 4.0] };
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, 2, &[snap]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "step,walker_id,x,y\n2,0,1,2\n2,1,3,4\n");
    }
}
