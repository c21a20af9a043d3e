//! Uniform periodic 1-D grids and densities carried on them.

use crate::error::{domain, Result};
use crate::scalar::Real;

/// Uniform grid `x_j = xmin + j * dx`, `j = 0..n`, treated as periodic with
/// period `n * dx` by the spectral routines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1<T> {
    pub xmin: T,
    pub dx: T,
    pub n: usize,
}

impl<T: Real> Grid1<T> {
    /// Grid covering `[xmin, xmax)` with `n` nodes.
    pub fn new(xmin: T, xmax: T, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(domain("n", format!("grid needs at least 2 nodes, got {n}")));
        }
        if !(xmax > xmin) || !xmin.is_finite() || !xmax.is_finite() {
            return Err(domain("xmax", "grid bounds must be finite with xmax > xmin"));
        }
        Ok(Self {
            xmin,
            dx: (xmax - xmin) / T::from_usize_lossy(n),
            n,
        })
    }

    /// Grid symmetric about zero, `x_j = (j - n/2) dx`. Requires even `n`, so
    /// the origin is a node and every node except the first has its mirror.
    pub fn symmetric(half_width: T, n: usize) -> Result<Self> {
        if !n.is_multiple_of(2) {
            return Err(domain("n", "symmetric grid needs an even point count"));
        }
        Self::new(-half_width, half_width, n)
    }

    #[inline]
    pub fn x(&self, j: usize) -> T {
        self.xmin + self.dx * T::from_usize_lossy(j)
    }

    pub fn xmax(&self) -> T {
        self.x(self.n)
    }

    pub fn points(&self) -> Vec<T> {
        (0..self.n).map(|j| self.x(j)).collect()
    }

    pub fn length(&self) -> T {
        self.dx * T::from_usize_lossy(self.n)
    }

    /// Index of the node closest to `x`, clamped to the grid.
    pub fn nearest(&self, x: T) -> usize {
        let r = ((x - self.xmin) / self.dx).round();
        if r <= T::zero() {
            0
        } else {
            r.to_usize().unwrap_or(usize::MAX).min(self.n - 1)
        }
    }

    /// Same nodes at twice the resolution.
    pub fn refined(&self) -> Self {
        Self {
            xmin: self.xmin,
            dx: self.dx / T::lit(2.0),
            n: self.n * 2,
        }
    }
}

/// Filter density on a [`Grid1`], unnormalized unless `normalized` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity<T> {
    pub grid: Grid1<T>,
    pub values: Vec<T>,
    pub time: T,
    pub normalized: bool,
}

impl<T: Real> GridDensity<T> {
    pub fn new(grid: Grid1<T>, values: Vec<T>, time: T) -> Result<Self> {
        if values.len() != grid.n {
            return Err(domain(
                "values",
                format!("expected {} values, got {}", grid.n, values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(domain("values", "density values must be finite and nonnegative"));
        }
        Ok(Self {
            grid,
            values,
            time,
            normalized: false,
        })
    }

    /// Samples `f` at the nodes and normalizes.
    pub fn from_fn(grid: Grid1<T>, time: T, f: impl Fn(T) -> T) -> Result<Self> {
        let values = grid.points().into_iter().map(f).collect();
        let mut d = Self::new(grid, values, time)?;
        d.normalize()?;
        Ok(d)
    }

    /// Normal density `N(mean, sd^2)` on `grid`, normalized.
    pub fn gaussian(grid: Grid1<T>, mean: T, sd: T) -> Result<Self> {
        if !(sd > T::zero()) {
            return Err(domain("sd", "standard deviation must be positive"));
        }
        let two = T::lit(2.0);
        Self::from_fn(grid, T::zero(), |x| {
            let z = (x - mean) / sd;
            (-z * z / two).exp()
        })
    }

    /// Trapezoidal (periodic) integral of the values.
    pub fn mass(&self) -> T {
        self.values.iter().copied().sum::<T>() * self.grid.dx
    }

    /// Rescales to unit mass and returns the mass before rescaling.
    pub fn normalize(&mut self) -> Result<T> {
        let m = self.mass();
        if !(m > T::zero()) || !m.is_finite() {
            return Err(domain("values", "density has no finite positive mass"));
        }
        let inv = m.recip();
        for v in &mut self.values {
            *v *= inv;
        }
        self.normalized = true;
        Ok(m)
    }

    /// `∫ phi(x) p(x) dx / ∫ p(x) dx`.
    pub fn expect(&self, phi: impl Fn(T) -> T) -> T {
        let mut num = T::zero();
        let mut den = T::zero();
        for (j, &v) in self.values.iter().enumerate() {
            num += phi(self.grid.x(j)) * v;
            den += v;
        }
        num / den
    }

    pub fn mean(&self) -> T {
        self.expect(|x| x)
    }

    pub fn variance(&self) -> T {
        let m = self.mean();
        self.expect(|x| (x - m) * (x - m))
    }

    /// Mass within one cell of either end of the grid, relative to the total.
    pub fn boundary_mass(&self) -> T {
        let n = self.values.len();
        let edge = self.values[0] + self.values[n - 1];
        edge * self.grid.dx / self.mass()
    }

    /// Cumulative distribution at the right edge of each cell.
    pub fn cdf(&self) -> Vec<T> {
        let total: T = self.values.iter().copied().sum();
        let mut acc = T::zero();
        self.values
            .iter()
            .map(|&v| {
                acc += v;
                acc / total
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_grid_contains_origin() {
        let g = Grid1::<f64>::symmetric(30.0, 1024).unwrap();
        assert_eq!(g.x(512), 0.0);
        assert!((g.x(1) + g.x(1023)).abs() < 1e-12);
        assert!(Grid1::<f64>::symmetric(1.0, 11).is_err());
    }

    #[test]
    fn gaussian_moments() {
        let g = Grid1::<f64>::new(-8.0, 8.0, 1024).unwrap();
        let d = GridDensity::gaussian(g, 0.5, 0.7).unwrap();
        assert!((d.mass() - 1.0).abs() < 1e-12);
        assert!((d.mean() - 0.5).abs() < 1e-10);
        assert!((d.variance() - 0.49).abs() < 1e-10);
    }

    #[test]
    fn rejects_negative_values() {
        let g = Grid1::new(0.0, 1.0, 4).unwrap();
        assert!(GridDensity::new(g, vec![1.0, -1.0, 0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn nearest_clamps() {
        let g = Grid1::new(0.0, 1.0, 10).unwrap();
        assert_eq!(g.nearest(-5.0), 0);
        assert_eq!(g.nearest(0.31), 3);
        assert_eq!(g.nearest(50.0), 9);
    }
}
