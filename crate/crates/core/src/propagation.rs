//! Chapman–Kolmogorov propagation of densities and the Bayes-reversed kernel.

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::field::{FieldRole, ScalarField, DENSITY_FLOOR};
use crate::kernel::{KernelForm, TransitionKernel};

/// Tolerance for the posterior supplied to [`bayes_reverse_kernel`].
pub const POSTERIOR_TOLERANCE: f64 = 1e-8;

/// `rho'(x_j) = sum_i rho(x_i) w_i P(x_j | x_i)`.
pub fn ck_propagate(rho: &ScalarField, k: &TransitionKernel) -> Result<ScalarField> {
    let grid = *rho.grid();
    grid.ensure_same(k.grid(), "Chapman-Kolmogorov propagation")?;
    let n = grid.len();
    let mut mass = vec![0.0; n];
    for (i, r) in rho.values().iter().enumerate() {
        let m = r * grid.weight(i);
        if m == 0.0 {
            continue;
        }
        for (acc, p) in mass.iter_mut().zip(k.row(i)) {
            *acc += m * p;
        }
    }
    let values = mass.iter().enumerate().map(|(j, m)| (m / grid.weight(j)).max(0.0)).collect();
    ScalarField::new(grid, values, FieldRole::Density)
}

/// Kernel of two consecutive steps, `C = A B`.
pub fn compose(a: &TransitionKernel, b: &TransitionKernel) -> Result<TransitionKernel> {
    compose_with(Execution::default(), a, b)
}

pub fn compose_with(exec: Execution, a: &TransitionKernel, b: &TransitionKernel) -> Result<TransitionKernel> {
    a.grid().ensure_same(b.grid(), "kernel composition")?;
    let n = a.len();
    let mut matrix = vec![0.0; n * n];
    exec::fill_chunks(exec, &mut matrix, n, |i, row| {
        for (j, p) in a.row(i).iter().enumerate() {
            if *p != 0.0 {
                for (c, q) in row.iter_mut().zip(b.row(j)) {
                    *c += p * q;
                }
            }
        }
    });
    // Step variances add, so the effective multiplier is the harmonic sum.
    let alpha = 1.0 / (1.0 / a.alpha() + 1.0 / b.alpha());
    Ok(TransitionKernel::from_matrix(*a.grid(), matrix, alpha, a.sigma2(), KernelForm::Composed))
}

/// Reverse kernel `P(x|x') = rho(x) P(x'|x) / rho'(x')`, row-indexed by `x'`.
///
/// The posterior must be the Chapman–Kolmogorov image of the prior. Rows of
/// nodes that no mass can reach are set to the identity.
pub fn bayes_reverse_kernel(
    k: &TransitionKernel,
    prior: &ScalarField,
    posterior: &ScalarField,
) -> Result<TransitionKernel> {
    let grid = *k.grid();
    grid.ensure_same(prior.grid(), "reverse kernel prior")?;
    grid.ensure_same(posterior.grid(), "reverse kernel posterior")?;
    let expected = ck_propagate(prior, k)?;
    let scale = expected.max().max(f64::MIN_POSITIVE);
    if let Some((j, d)) = expected
        .values()
        .iter()
        .zip(posterior.values())
        .map(|(a, b)| (a - b).abs() / scale)
        .enumerate()
        .find(|(_, d)| *d > POSTERIOR_TOLERANCE)
    {
        return Err(Error::config(format!(
            "posterior is not the propagated prior: relative mismatch {d:.3e} at node {j} exceeds {POSTERIOR_TOLERANCE:e}"
        )));
    }
    let n = grid.len();
    let floor = DENSITY_FLOOR * posterior.max();
    for j in 0..n {
        let reachable = (0..n).any(|i| prior.get(i) > 0.0 && k.entry(i, j) > 0.0);
        if reachable && posterior.get(j) <= floor {
            return Err(Error::SingularReversal { node: j, x: grid.coord(j), posterior: posterior.get(j) });
        }
    }
    let mut matrix = vec![0.0; n * n];
    exec::fill_chunks(Execution::default(), &mut matrix, n, |j, row| {
        let denom = grid.weight(j) * posterior.get(j);
        let mut sum = 0.0;
        for (i, r) in row.iter_mut().enumerate() {
            *r = prior.get(i) * grid.weight(i) * k.entry(i, j);
            sum += *r;
        }
        if sum == 0.0 {
            row[j] = 1.0;
            return;
        }
        // Dividing by the given posterior keeps the exact Bayes form; the
        // final rescale only removes the (<1e-8) consistency residual.
        let mut total = 0.0;
        for r in row.iter_mut() {
            *r /= denom;
            total += *r;
        }
        row.iter_mut().for_each(|r| *r /= total);
    });
    Ok(TransitionKernel::from_matrix(grid, matrix, k.alpha(), k.sigma2(), KernelForm::BayesReverse))
}

/// `max |P_rev[j][i] - P_fwd[i][j]|`: how far the reverse kernel is from the
/// transposed forward kernel, in probability mass.
pub fn reversal_asymmetry(forward: &TransitionKernel, reverse: &TransitionKernel) -> Result<f64> {
    forward.grid().ensure_same(reverse.grid(), "asymmetry metric")?;
    let n = forward.len();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for i in 0..n {
            worst = worst.max((reverse.entry(j, i) - forward.entry(i, j)).abs());
        }
    }
    Ok(worst)
}
