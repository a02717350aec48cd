//! Maximum-entropy transition kernels for a single short step.
//!
//! Row `i` of a kernel holds the probability mass of landing on node `j`
//! when starting from node `i`, i.e. `P(x_j | x_i) * w_j` with `w_j` the
//! quadrature weight of the target node. The continuous density is
//!
//! ```text
//! P(x'|x) = exp[S(x') - (alpha / 2 sigma2) (x' - x)^2] / zeta(x)
//! ```
//!
//! and its Gaussian approximation expands `S` to first order about `x`.

use std::io::Write;

use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::field::{gradient, ScalarField};
use crate::grid::SpatialGrid;
use crate::io::fmt_f64;

/// Entries smaller than this after normalization are flushed to zero.
pub const FLUSH_THRESHOLD: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelForm {
    Exact,
    Gaussian,
    /// Produced by Bayes' theorem from a forward kernel and its marginals.
    BayesReverse,
    /// Matrix product of two kernels.
    Composed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    grid: SpatialGrid,
    matrix: Vec<f64>,
    alpha: f64,
    sigma2: f64,
    form: KernelForm,
}

/// Mean and spread of the displacement out of one source node. The kernel
/// lives on a 1-D grid, so the covariance matrix has a single entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMoments {
    pub mean_step: f64,
    pub covariance: f64,
}

impl TransitionKernel {
    pub(crate) fn from_matrix(grid: SpatialGrid, matrix: Vec<f64>, alpha: f64, sigma2: f64, form: KernelForm) -> Self {
        debug_assert_eq!(matrix.len(), grid.len() * grid.len());
        Self { grid, matrix, alpha, sigma2, form }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn form(&self) -> KernelForm {
        self.form
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.len();
        &self.matrix[i * n..(i + 1) * n]
    }

    /// Probability mass moving from node `i` to node `j`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.len() + j]
    }

    /// Transition density `P(x_j | x_i)`.
    pub fn density(&self, i: usize, j: usize) -> f64 {
        self.entry(i, j) / self.grid.weight(j)
    }

    /// Largest deviation of a row sum from one.
    pub fn row_sum_error(&self) -> f64 {
        (0..self.len()).map(|i| (self.row(i).iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Row-major CSV: a header of target-node coordinates, then one line per
    /// source node starting with its coordinate.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let coords = self.grid.coords();
        let mut line = String::from("x_source");
        for x in &coords {
            line.push(',');
            line.push_str(&fmt_f64(*x));
        }
        writeln!(w, "{line}")?;
        for (i, x) in coords.iter().enumerate() {
            line.clear();
            line.push_str(&fmt_f64(*x));
            for v in self.row(i) {
                line.push(',');
                line.push_str(&fmt_f64(*v));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("multiplier alpha must be finite and positive, got {alpha}")))
    }
}

/// Fills one row from its exponents: subtracts the maximum, applies the
/// target weights, normalizes, flushes denormal-range entries and
/// renormalizes.
fn finish_row(grid: &SpatialGrid, row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (j, e) in row.iter_mut().enumerate() {
        *e = grid.weight(j) * (*e - max).exp();
        sum += *e;
    }
    let mut flushed = false;
    for e in row.iter_mut() {
        *e /= sum;
        if *e < FLUSH_THRESHOLD {
            flushed |= *e != 0.0;
            *e = 0.0;
        }
    }
    if flushed {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|e| *e /= s);
    }
}

fn build_rows<F>(exec: Execution, grid: &SpatialGrid, exponent: F) -> Vec<f64>
where
    F: Fn(usize, usize) -> f64 + Sync + Send,
{
    let n = grid.len();
    let mut matrix = vec![0.0; n * n];
    exec::fill_chunks(exec, &mut matrix, n, |i, row| {
        for (j, e) in row.iter_mut().enumerate() {
            *e = exponent(i, j);
        }
        finish_row(grid, row);
    });
    matrix
}

fn check_entropy(s: &ScalarField) -> Result<()> {
    if let Some(i) = s.values().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("entropy at node {i}")));
    }
    Ok(())
}

pub fn build_exact_kernel(s: &ScalarField, alpha: f64, consts: &PhysicalConstants) -> Result<TransitionKernel> {
    build_exact_kernel_with(Execution::default(), s, alpha, consts)
}

pub fn build_exact_kernel_with(
    exec: Execution,
    s: &ScalarField,
    alpha: f64,
    consts: &PhysicalConstants,
) -> Result<TransitionKernel> {
    check_alpha(alpha)?;
    check_entropy(s)?;
    let grid = *s.grid();
    let coords = grid.coords();
    let sv = s.values();
    let scale = alpha / (2.0 * consts.sigma2());
    let matrix = build_rows(exec, &grid, |i, j| {
        let d = grid.displacement(coords[i], coords[j]);
        sv[j] - scale * d * d
    });
    Ok(TransitionKernel::from_matrix(grid, matrix, alpha, consts.sigma2(), KernelForm::Exact))
}

pub fn build_gaussian_kernel(s: &ScalarField, alpha: f64, consts: &PhysicalConstants) -> Result<TransitionKernel> {
    build_gaussian_kernel_with(Execution::default(), s, alpha, consts)
}

/// Row `i` is the Gaussian with mean `x_i + (sigma2/alpha) dS(x_i)` and
/// variance `sigma2/alpha`, sampled at the nodes.
pub fn build_gaussian_kernel_with(
    exec: Execution,
    s: &ScalarField,
    alpha: f64,
    consts: &PhysicalConstants,
) -> Result<TransitionKernel> {
    check_alpha(alpha)?;
    check_entropy(s)?;
    let grid = *s.grid();
    let coords = grid.coords();
    let variance = consts.sigma2() / alpha;
    let shifts: Vec<f64> = gradient(s).values().iter().map(|g| variance * g).collect();
    let matrix = build_rows(exec, &grid, |i, j| {
        let d = grid.displacement(coords[i], coords[j]) - shifts[i];
        -d * d / (2.0 * variance)
    });
    Ok(TransitionKernel::from_matrix(grid, matrix, alpha, consts.sigma2(), KernelForm::Gaussian))
}

/// Discrete mean and variance of the displacement out of `source`.
pub fn kernel_moments(k: &TransitionKernel, source: usize) -> Result<StepMoments> {
    if source >= k.len() {
        return Err(Error::config(format!("source index {source} out of range for {} nodes", k.len())));
    }
    let grid = k.grid;
    let x0 = grid.coord(source);
    let row = k.row(source);
    let mean: f64 = row.iter().enumerate().map(|(j, p)| p * grid.displacement(x0, grid.coord(j))).sum();
    let covariance = row
        .iter()
        .enumerate()
        .map(|(j, p)| p * (grid.displacement(x0, grid.coord(j)) - mean).powi(2))
        .sum();
    Ok(StepMoments { mean_step: mean, covariance })
}

/// `<gamma_ab dx^a dx^b> = <dx^2> / sigma2` for every source row.
pub fn squared_step_lengths(k: &TransitionKernel) -> Vec<f64> {
    let grid = k.grid;
    let coords = grid.coords();
    (0..k.len())
        .map(|i| {
            k.row(i)
                .iter()
                .enumerate()
                .map(|(j, p)| p * grid.displacement(coords[i], coords[j]).powi(2))
                .sum::<f64>()
                / k.sigma2
        })
        .collect()
}

/// Outcome of the multiplier search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaFit {
    pub alpha: f64,
    /// Grid-averaged squared step length at `alpha`.
    pub mean_sq_step: f64,
    /// Largest relative deviation of a single row's squared step length from `kappa`.
    pub pointwise_spread: f64,
    pub iterations: usize,
}

/// Finds the single multiplier `alpha` for which the grid-averaged squared
/// step length of the exact kernel equals `kappa`, by bisection on `log alpha`.
pub fn solve_alpha(s: &ScalarField, kappa: f64, consts: &PhysicalConstants) -> Result<AlphaFit> {
    solve_alpha_with(Execution::default(), s, kappa, consts)
}

pub fn solve_alpha_with(exec: Execution, s: &ScalarField, kappa: f64, consts: &PhysicalConstants) -> Result<AlphaFit> {
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(Error::Domain(format!("kappa must be finite and positive, got {kappa}")));
    }
    check_entropy(s)?;
    let grid = *s.grid();
    let weights = grid.weights();
    let extent = grid.extent();
    let average = |alpha: f64| -> Result<(f64, Vec<f64>)> {
        let k = build_exact_kernel_with(exec, s, alpha, consts)?;
        let per_row = squared_step_lengths(&k);
        let mean = per_row.iter().zip(&weights).map(|(l, w)| l * w).sum::<f64>() / extent;
        Ok((mean, per_row))
    };

    // The squared step length decreases monotonically in alpha.
    let guess = 1.0 / kappa;
    let mut lo = guess;
    let mut iterations = 0;
    let mut f_lo = average(lo)?.0 - kappa;
    while f_lo <= 0.0 {
        lo /= 4.0;
        iterations += 1;
        if lo < guess * 1e-12 {
            let reachable = f_lo + kappa;
            return Err(Error::NoSolution(format!(
                "kappa = {kappa} cannot be reached on this grid: the squared step length saturates \
                 at {reachable:.6e} as alpha -> 0 (extent {extent}, sigma2 {})",
                consts.sigma2()
            )));
        }
        f_lo = average(lo)?.0 - kappa;
    }
    let mut hi = guess.max(lo * 4.0);
    while average(hi)?.0 - kappa >= 0.0 {
        hi *= 4.0;
        iterations += 1;
        if hi > guess * 1e12 {
            return Err(Error::NoSolution(format!("could not bracket alpha for kappa = {kappa}")));
        }
    }

    let mut mid = (lo * hi).sqrt();
    let (mut value, mut per_row) = average(mid)?;
    while iterations < 400 {
        iterations += 1;
        if ((value - kappa) / kappa).abs() < 1e-11 || hi / lo - 1.0 < 1e-15 {
            break;
        }
        if value > kappa {
            lo = mid;
        } else {
            hi = mid;
        }
        mid = (lo * hi).sqrt();
        (value, per_row) = average(mid)?;
    }
    let pointwise_spread = per_row.iter().map(|l| ((l - kappa) / kappa).abs()).fold(0.0, f64::max);
    Ok(AlphaFit { alpha: mid, mean_sq_step: value, pointwise_spread, iterations })
}

/// Largest total-variation distance between corresponding rows.
pub fn max_row_total_variation(a: &TransitionKernel, b: &TransitionKernel) -> Result<f64> {
    a.grid.ensure_same(&b.grid, "kernel comparison")?;
    Ok((0..a.len())
        .map(|i| 0.5 * a.row(i).iter().zip(b.row(i)).map(|(p, q)| (p - q).abs()).sum::<f64>())
        .fold(0.0, f64::max))
}

/// Largest entrywise difference.
pub fn max_entry_difference(a: &TransitionKernel, b: &TransitionKernel) -> Result<f64> {
    a.grid.ensure_same(&b.grid, "kernel comparison")?;
    Ok(a.matrix.iter().zip(&b.matrix).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max))
}
