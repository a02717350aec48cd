//! Real-valued fields on a [`SpatialGrid`] and the discrete calculus used by
//! every solver: gradient, Laplacian, quadrature and density normalization.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{Boundary, SpatialGrid};

/// Relative density floor. Values below `DENSITY_FLOOR * max(rho)` are
/// clamped before any logarithm or division by `rho`.
pub const DENSITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldRole {
    Density,
    Entropy,
    Phase,
    Potential,
    Generic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: SpatialGrid,
    values: Vec<f64>,
    role: FieldRole,
}

impl ScalarField {
    pub fn new(grid: SpatialGrid, values: Vec<f64>, role: FieldRole) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::config(format!(
                "field has {} values but the grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{role:?} field value at node {i} is {}", values[i])));
        }
        if role == FieldRole::Density {
            if let Some(i) = values.iter().position(|&v| v < 0.0) {
                return Err(Error::density(format!("negative density {} at node {i}", values[i])));
            }
        }
        Ok(Self { grid, values, role })
    }

    pub fn from_fn(grid: SpatialGrid, role: FieldRole, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.coords().into_iter().map(f).collect();
        Self::new(grid, values, role)
    }

    pub fn constant(grid: SpatialGrid, role: FieldRole, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.len()], role)
    }

    pub fn zeros(grid: SpatialGrid, role: FieldRole) -> Self {
        Self { grid, values: vec![0.0; grid.len()], role }
    }

    /// Internal constructor for values already known to satisfy the invariants.
    pub(crate) fn from_parts(grid: SpatialGrid, values: Vec<f64>, role: FieldRole) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values, role }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn role(&self) -> FieldRole {
        self.role
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn with_role(mut self, role: FieldRole) -> Result<Self> {
        if role == FieldRole::Density {
            return Self::new(self.grid, self.values, role);
        }
        self.role = role;
        Ok(self)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Nodewise map; the result is checked for finiteness.
    pub fn map(&self, role: FieldRole, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values = self.values.iter().enumerate().map(|(i, &v)| f(self.grid.coord(i), v)).collect();
        Self::new(self.grid, values, role)
    }

    pub fn integrate(&self) -> f64 {
        integrate(self)
    }

    /// First moment and variance of a density field. On periodic grids the
    /// moments are taken about the grid centre without unwrapping.
    pub fn moments(&self) -> (f64, f64) {
        let w = self.grid.weights();
        let mass: f64 = self.values.iter().zip(&w).map(|(r, w)| r * w).sum();
        let mean = self.values.iter().enumerate().map(|(i, r)| r * w[i] * self.grid.coord(i)).sum::<f64>() / mass;
        let var = self
            .values
            .iter()
            .enumerate()
            .map(|(i, r)| r * w[i] * (self.grid.coord(i) - mean).powi(2))
            .sum::<f64>()
            / mass;
        (mean, var)
    }
}

/// Principal value of a phase difference, in `(-pi, pi]`.
pub fn wrap_phase(d: f64) -> f64 {
    let w = d - 2.0 * PI * (d / (2.0 * PI)).round();
    if w <= -PI { w + 2.0 * PI } else { w }
}

/// Difference `f[j] - f[i]` between neighbouring nodes. Phase fields on
/// periodic grids are only defined modulo 2π, so their differences are
/// reduced to the principal value.
pub(crate) fn node_difference(f: &ScalarField, i: usize, j: usize) -> f64 {
    let d = f.values[j] - f.values[i];
    if f.role == FieldRole::Phase && f.grid.is_periodic() { wrap_phase(d) } else { d }
}

/// Central-difference derivative. Periodic grids wrap; reflecting grids use
/// the second-order one-sided stencil at the two end nodes.
pub fn gradient(f: &ScalarField) -> ScalarField {
    let g = f.grid;
    let n = g.len();
    let h = g.spacing();
    let v = &f.values;
    let mut out = vec![0.0; n];
    match g.boundary() {
        Boundary::Periodic => {
            for (i, o) in out.iter_mut().enumerate() {
                let l = (i + n - 1) % n;
                let r = (i + 1) % n;
                *o = (node_difference(f, i, r) + node_difference(f, l, i)) / (2.0 * h);
            }
        }
        Boundary::Reflecting => {
            for i in 1..n - 1 {
                out[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
            }
            out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
            out[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h);
        }
    }
    ScalarField::from_parts(g, out, FieldRole::Generic)
}

/// Three-point second difference. Reflecting grids use mirror ghosts
/// (`f[-1] = f[1]`), i.e. homogeneous Neumann walls.
pub fn laplacian_values(grid: &SpatialGrid, v: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let h2 = grid.spacing().powi(2);
    (0..n)
        .map(|i| {
            let l = grid.left(i).unwrap_or(1);
            let r = grid.right(i).unwrap_or(n - 2);
            (v[l] + v[r] - 2.0 * v[i]) / h2
        })
        .collect()
}

pub fn laplacian(f: &ScalarField) -> ScalarField {
    ScalarField::from_parts(f.grid, laplacian_values(&f.grid, &f.values), FieldRole::Generic)
}

/// Quadrature over the grid: trapezoid rule on reflecting grids, rectangle
/// rule on periodic ones.
pub fn integrate(f: &ScalarField) -> f64 {
    integrate_values(&f.grid, &f.values)
}

pub(crate) fn integrate_values(grid: &SpatialGrid, v: &[f64]) -> f64 {
    let h = grid.spacing();
    let sum: f64 = v.iter().sum();
    match grid.boundary() {
        Boundary::Periodic => h * sum,
        Boundary::Reflecting => h * (sum - 0.5 * (v[0] + v[v.len() - 1])),
    }
}

/// Rescales a non-negative field to unit integral.
pub fn normalize_density(f: &ScalarField) -> Result<ScalarField> {
    if let Some(i) = f.values.iter().position(|&v| v < 0.0) {
        return Err(Error::density(format!("negative value {} at node {i}", f.values[i])));
    }
    let total = integrate(f);
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::density(format!("cannot normalize a field with integral {total}")));
    }
    let values = f.values.iter().map(|v| v / total).collect();
    ScalarField::new(f.grid, values, FieldRole::Density)
}

/// Density values with everything below `DENSITY_FLOOR * max` raised to that floor.
pub fn clamped_density(rho: &ScalarField) -> Result<Vec<f64>> {
    let max = rho.max();
    if !(max > 0.0) {
        return Err(Error::density("density is zero everywhere"));
    }
    let floor = DENSITY_FLOOR * max;
    Ok(rho.values.iter().map(|&r| r.max(floor)).collect())
}

/// Rejects densities with an interior zero: a node below the floor that
/// has above-floor mass on both sides.
pub fn check_no_interior_nodes(rho: &ScalarField) -> Result<()> {
    let max = rho.max();
    if !(max > 0.0) {
        return Err(Error::density("density is zero everywhere"));
    }
    let floor = DENSITY_FLOOR * max;
    let above: Vec<bool> = rho.values.iter().map(|&r| r > floor).collect();
    let n = above.len();
    if rho.grid.is_periodic() {
        // Walk the circle starting from an above-floor node; a nodal state is
        // a below-floor run that is followed by another above-floor run.
        let Some(start) = above.iter().position(|&a| a) else { return Ok(()) };
        let mut runs = 0;
        let mut first_gap = None;
        let mut prev = true;
        for k in 1..=n {
            let i = (start + k) % n;
            if prev && !above[i] {
                runs += 1;
                first_gap.get_or_insert(i);
            }
            prev = above[i];
        }
        if runs > 1 {
            let node = first_gap.unwrap_or(0);
            return Err(Error::NodalState { node, x: rho.grid.coord(node) });
        }
    } else {
        let first = above.iter().position(|&a| a);
        let last = above.iter().rposition(|&a| a);
        if let (Some(a), Some(b)) = (first, last) {
            if let Some(k) = (a..=b).find(|&k| !above[k]) {
                return Err(Error::NodalState { node: k, x: rho.grid.coord(k) });
            }
        }
    }
    Ok(())
}
