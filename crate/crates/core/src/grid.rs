use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Boundary {
    /// Nodes `x_min + i h`, `i < n`; `x_max` is identified with `x_min`.
    Periodic,
    /// Nodes include both end points; zero-flux (Neumann) walls.
    Reflecting,
}

pub const MIN_NODES: usize = 8;

/// Uniform 1-D grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid {
    x_min: f64,
    x_max: f64,
    n: usize,
    boundary: Boundary,
}

impl SpatialGrid {
    pub fn new(x_min: f64, x_max: f64, n: usize, boundary: Boundary) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) || x_max <= x_min {
            return Err(Error::config(format!("grid bounds must satisfy x_min < x_max, got [{x_min}, {x_max}]")));
        }
        if n < MIN_NODES {
            return Err(Error::config(format!("grid needs at least {MIN_NODES} nodes, got {n}")));
        }
        Ok(Self { x_min, x_max, n, boundary })
    }

    pub fn periodic(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        Self::new(x_min, x_max, n, Boundary::Periodic)
    }

    pub fn reflecting(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        Self::new(x_min, x_max, n, Boundary::Reflecting)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn is_periodic(&self) -> bool {
        self.boundary == Boundary::Periodic
    }

    pub fn extent(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn spacing(&self) -> f64 {
        match self.boundary {
            Boundary::Periodic => self.extent() / self.n as f64,
            Boundary::Reflecting => self.extent() / (self.n - 1) as f64,
        }
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.spacing()
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.coord(i)).collect()
    }

    /// Quadrature weight of node `i`: rectangle rule on periodic grids,
    /// trapezoid rule on reflecting ones.
    pub fn weight(&self, i: usize) -> f64 {
        let h = self.spacing();
        match self.boundary {
            Boundary::Reflecting if i == 0 || i + 1 == self.n => 0.5 * h,
            _ => h,
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.weight(i)).collect()
    }

    /// Signed displacement `to - from`, using the minimum image on periodic grids.
    pub fn displacement(&self, from: f64, to: f64) -> f64 {
        let d = to - from;
        match self.boundary {
            Boundary::Periodic => {
                let l = self.extent();
                d - l * (d / l).round()
            }
            Boundary::Reflecting => d,
        }
    }

    /// Maps a position back into the domain: wrap on periodic grids,
    /// mirror at the walls on reflecting ones.
    pub fn fold(&self, x: f64) -> f64 {
        let l = self.extent();
        match self.boundary {
            Boundary::Periodic => {
                let y = (x - self.x_min).rem_euclid(l);
                // rem_euclid can round up to exactly l
                if y >= l { self.x_min } else { self.x_min + y }
            }
            Boundary::Reflecting => {
                let y = (x - self.x_min).rem_euclid(2.0 * l);
                let y = if y > l { 2.0 * l - y } else { y };
                (self.x_min + y).clamp(self.x_min, self.x_max)
            }
        }
    }

    /// Index of the histogram cell containing `x`. Cells are centred on the
    /// nodes; on reflecting grids the two end cells are half-width.
    pub fn cell_index(&self, x: f64) -> Option<usize> {
        if !x.is_finite() {
            return None;
        }
        let h = self.spacing();
        match self.boundary {
            Boundary::Periodic => {
                let y = self.fold(x) - self.x_min;
                Some(((y / h + 0.5).floor() as usize) % self.n)
            }
            Boundary::Reflecting => {
                if x < self.x_min || x > self.x_max {
                    return None;
                }
                let k = ((x - self.x_min) / h + 0.5).floor() as usize;
                Some(k.min(self.n - 1))
            }
        }
    }

    /// Neighbour index on the left/right, or `None` past a reflecting wall.
    pub fn left(&self, i: usize) -> Option<usize> {
        match (self.boundary, i) {
            (Boundary::Periodic, 0) => Some(self.n - 1),
            (Boundary::Reflecting, 0) => None,
            _ => Some(i - 1),
        }
    }

    pub fn right(&self, i: usize) -> Option<usize> {
        if i + 1 < self.n {
            Some(i + 1)
        } else {
            match self.boundary {
                Boundary::Periodic => Some(0),
                Boundary::Reflecting => None,
            }
        }
    }

    /// Number of cell faces between nodes: `n` when periodic, `n - 1` otherwise.
    /// Face `k` joins node `k` and node `k + 1` (mod `n`).
    pub fn face_count(&self) -> usize {
        match self.boundary {
            Boundary::Periodic => self.n,
            Boundary::Reflecting => self.n - 1,
        }
    }

    pub fn same_as(&self, other: &SpatialGrid) -> bool {
        self == other
    }

    pub(crate) fn ensure_same(&self, other: &SpatialGrid, what: &str) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::config(format!("grid mismatch in {what}: {self:?} vs {other:?}")))
        }
    }
}
