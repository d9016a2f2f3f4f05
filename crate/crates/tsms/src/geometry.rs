//! Sphere and tangent-space primitives.
//!
//! Directions live on the unit sphere `S^{d-1}`. Estimation error is measured
//! after projecting onto the tangent space at the true direction, and several
//! internal computations change coordinates to an orthonormal basis whose
//! first vector is a given direction.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Unit-norm tolerance accepted by [`Direction::from_unit`].
const UNIT_TOL: f64 = 1e-12;

/// A point on the unit sphere `S^{d-1}`, `d >= 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction {
    coords: Array1<f64>,
}

impl Direction {
    /// Builds a direction from a vector that is already unit norm (within
    /// `1e-12`).
    pub fn from_unit(coords: Array1<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::Dimension(format!(
                "direction needs d >= 2, got d = {}",
                coords.len()
            )));
        }
        let norm = coords.dot(&coords).sqrt();
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidArgument(format!(
                "direction norm {norm} differs from 1 by more than {UNIT_TOL}"
            )));
        }
        Ok(Self { coords })
    }

    /// Normalizes an arbitrary nonzero vector onto the sphere.
    pub fn normalized(coords: Array1<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::Dimension(format!(
                "direction needs d >= 2, got d = {}",
                coords.len()
            )));
        }
        let norm = coords.dot(&coords).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "cannot normalize vector with norm {norm}"
            )));
        }
        Ok(Self {
            coords: coords / norm,
        })
    }

    /// The d=2 direction `(cos angle, sin angle)`.
    pub fn from_angle(angle: f64) -> Self {
        Self {
            coords: ndarray::array![angle.cos(), angle.sin()],
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> ArrayView1<'_, f64> {
        self.coords.view()
    }

    pub fn dot(&self, other: ArrayView1<'_, f64>) -> f64 {
        self.coords.dot(&other)
    }

    /// Angle in `[0, 2*pi)`; only defined for d=2.
    pub fn angle(&self) -> f64 {
        debug_assert_eq!(self.dim(), 2);
        let a = self.coords[1].atan2(self.coords[0]);
        if a < 0.0 {
            a + 2.0 * std::f64::consts::PI
        } else {
            a
        }
    }
}

/// Orthonormal `d x d` basis whose first column is a given direction.
#[derive(Debug, Clone)]
pub struct OrthonormalFrame {
    columns: Array2<f64>,
}

impl OrthonormalFrame {
    pub fn dim(&self) -> usize {
        self.columns.nrows()
    }

    /// The basis matrix `T` with the reference direction in column 0.
    pub fn matrix(&self) -> &Array2<f64> {
        &self.columns
    }

    /// Coordinates of `x` in the frame basis, `T' x`.
    pub fn to_frame(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        self.columns.t().dot(&x)
    }

    /// Maps frame coordinates back to the ambient basis, `T u`.
    pub fn from_frame(&self, u: ArrayView1<'_, f64>) -> Array1<f64> {
        self.columns.dot(&u)
    }
}

/// Draws a uniform direction on `S^{d-1}` by normalizing a standard Gaussian
/// vector.
pub fn unit_sphere_sample<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<Direction> {
    if d < 2 {
        return Err(Error::Dimension(format!(
            "unit_sphere_sample needs d >= 2, got d = {d}"
        )));
    }
    loop {
        let v: Array1<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.dot(&v).sqrt();
        if norm > 1e-12 {
            return Ok(Direction { coords: v / norm });
        }
    }
}

/// Projects `theta - theta0` onto the tangent space of the sphere at
/// `theta0`, i.e. returns `(I - theta0 theta0') (theta - theta0)`.
///
/// Since both inputs are unit vectors this equals
/// `theta - (theta0' theta) theta0`, which is what is computed.
pub fn tangent_project(theta0: &Direction, theta: &Direction) -> Result<Array1<f64>> {
    if theta0.dim() != theta.dim() {
        return Err(Error::Dimension(format!(
            "tangent_project dimension mismatch: {} vs {}",
            theta0.dim(),
            theta.dim()
        )));
    }
    let c = theta0.coords().dot(&theta.coords());
    Ok(&theta.coords - &(c * &theta0.coords))
}

/// Completes `theta0` to an orthonormal basis of `R^d` by Gram-Schmidt over
/// the canonical basis, skipping the canonical vector most parallel to
/// `theta0`.
pub fn change_basis(theta0: &Direction) -> OrthonormalFrame {
    let d = theta0.dim();
    let mut cols: Vec<Array1<f64>> = Vec::with_capacity(d);
    cols.push(theta0.coords().to_owned());

    // Skipping the most-parallel canonical vector keeps the remaining set
    // linearly independent even when theta0 is (nearly) canonical.
    let skip = theta0
        .coords()
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a.abs().partial_cmp(&b.abs()).unwrap())
        .map(|(k, _)| k)
        .unwrap();

    for k in 0..d {
        if k == skip {
            continue;
        }
        let mut v = Array1::<f64>::zeros(d);
        v[k] = 1.0;
        for c in &cols {
            let proj = c.dot(&v);
            v -= &(proj * c);
        }
        // Re-orthogonalize once; plain Gram-Schmidt loses digits when the
        // residual after the first pass is small.
        for c in &cols {
            let proj = c.dot(&v);
            v -= &(proj * c);
        }
        let norm = v.dot(&v).sqrt();
        cols.push(v / norm);
    }

    let mut columns = Array2::<f64>::zeros((d, d));
    for (j, c) in cols.iter().enumerate() {
        columns.column_mut(j).assign(c);
    }
    OrthonormalFrame { columns }
}

/// Deterministic quasi-uniform grid of `resolution` directions on `S^{d-1}`.
///
/// For d=2 the grid is the exact angular lattice `2*pi*k/resolution`. For
/// d=3 it is the Fibonacci spiral; for d>=4 a Kronecker low-discrepancy
/// sequence is pushed through the Gaussian quantile map and normalized.
pub fn sphere_grid(d: usize, resolution: usize) -> Result<Vec<Direction>> {
    if d < 2 {
        return Err(Error::Dimension(format!(
            "sphere_grid needs d >= 2, got d = {d}"
        )));
    }
    if resolution < 4 {
        return Err(Error::InvalidArgument(format!(
            "sphere_grid needs resolution >= 4, got {resolution}"
        )));
    }
    let pts = match d {
        2 => (0..resolution)
            .map(|k| {
                Direction::from_angle(2.0 * std::f64::consts::PI * k as f64 / resolution as f64)
            })
            .collect(),
        3 => fibonacci_sphere(resolution),
        _ => kronecker_sphere(d, resolution),
    };
    Ok(pts)
}

fn fibonacci_sphere(n: usize) -> Vec<Direction> {
    let golden = (1.0 + 5.0_f64.sqrt()) / 2.0;
    (0..n)
        .map(|k| {
            let z = 1.0 - (2.0 * k as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = 2.0 * std::f64::consts::PI * (k as f64 / golden).fract();
            Direction {
                coords: ndarray::array![r * phi.cos(), r * phi.sin(), z],
            }
        })
        .collect()
}

/// Kronecker (generalized golden ratio) sequence mapped to the sphere.
fn kronecker_sphere(d: usize, n: usize) -> Vec<Direction> {
    // Unique positive root of x^(d+1) = x + 1.
    let mut phi = 1.5_f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (d as f64 + 1.0));
    }
    let alphas: Vec<f64> = (1..=d).map(|j| (1.0 / phi).powi(j as i32)).collect();
    let normal = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
    use statrs::distribution::ContinuousCDF;
    (0..n)
        .map(|k| {
            let v: Array1<f64> = alphas
                .iter()
                .map(|a| {
                    let u = ((k as f64 + 0.5) * a).fract().clamp(1e-12, 1.0 - 1e-12);
                    normal.inverse_cdf(u)
                })
                .collect();
            let norm = v.dot(&v).sqrt();
            Direction { coords: v / norm }
        })
        .collect()
}
