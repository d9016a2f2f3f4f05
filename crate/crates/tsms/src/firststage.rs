//! Nadaraya-Watson kernel first stage.
//!
//! `hhat(x)` estimates the centered regression function with a Gaussian
//! product kernel. Two evaluation modes: the known-density form divides by
//! the uniform unit-ball density, the estimated-density form divides by a
//! kernel density estimate (used when the design density is unknown, e.g.
//! for stacked multi-index covariates). Evaluation is brute force `O(n)`
//! per point; fits are immutable and safe to evaluate concurrently.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, CowArray, Ix2};
use rayon::prelude::*;
use statrs::function::gamma::gamma;

use crate::dgp::{Dataset, MultiDataset};
use crate::error::{Error, Result};

/// Relative density floor for the estimated-density mode: evaluation errors
/// when `phat(x) < 1e-6 * ball_density(d)` instead of returning a huge
/// ratio.
const DENSITY_FLOOR_REL: f64 = 1e-6;

/// Standard d-dimensional Gaussian density `(2 pi)^(-d/2) exp(-||u||^2/2)`.
pub fn gaussian_kernel(d: usize, u: ArrayView1<'_, f64>) -> f64 {
    debug_assert_eq!(u.len(), d);
    let q = u.dot(&u);
    (2.0 * std::f64::consts::PI).powf(-(d as f64) / 2.0) * (-0.5 * q).exp()
}

/// Density of the uniform distribution on the open unit ball in `R^d`:
/// `pi^(-d/2) Gamma(d/2 + 1)`.
pub fn ball_density(d: usize) -> f64 {
    std::f64::consts::PI.powf(-(d as f64) / 2.0) * gamma(d as f64 / 2.0 + 1.0)
}

/// How the kernel average is normalized into a regression estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityMode {
    /// Divide by the known uniform-ball density.
    KnownBall,
    /// Divide by a kernel density estimate with the same bandwidth.
    Estimated,
}

/// An evaluable kernel regression fit.
#[derive(Debug, Clone)]
pub struct FirstStageFit<'a> {
    points: CowArray<'a, f64, Ix2>,
    response: Array1<f64>,
    bandwidth: f64,
    mode: DensityMode,
}

impl<'a> FirstStageFit<'a> {
    /// Fit on binary data with the known uniform-ball density; responses
    /// are the centered outcomes `y - 1/2`.
    pub fn known_density(data: &'a Dataset, bandwidth: f64) -> Result<Self> {
        Self::with_response(
            data.x().into(),
            data.centered_y(),
            bandwidth,
            DensityMode::KnownBall,
        )
    }

    /// Fit on binary data with a kernel density estimate in the
    /// denominator.
    pub fn estimated_density(data: &'a Dataset, bandwidth: f64) -> Result<Self> {
        Self::with_response(
            data.x().into(),
            data.centered_y(),
            bandwidth,
            DensityMode::Estimated,
        )
    }

    /// Fit on multi-index data: covariate blocks are stacked to vectors in
    /// `R^(J*d)` and the density is estimated, since the stacked design is
    /// not uniform on a ball.
    pub fn multi_index(data: &MultiDataset, bandwidth: f64) -> Result<FirstStageFit<'static>> {
        FirstStageFit::with_response(
            data.flat_matrix().into(),
            Array1::from_vec(data.y().to_vec()),
            bandwidth,
            DensityMode::Estimated,
        )
    }

    /// General constructor with explicit responses, one per point row.
    pub fn with_response(
        points: CowArray<'a, f64, Ix2>,
        response: Array1<f64>,
        bandwidth: f64,
        mode: DensityMode,
    ) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(Error::InvalidArgument(
                "kernel fit needs a nonempty dataset".into(),
            ));
        }
        if response.len() != points.nrows() {
            return Err(Error::Dimension(format!(
                "{} responses for {} points",
                response.len(),
                points.nrows()
            )));
        }
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        Ok(Self {
            points,
            response,
            bandwidth,
            mode,
        })
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn mode(&self) -> DensityMode {
        self.mode
    }

    /// Kernel-weighted sums at `x`: `(sum_i r_i k_i, sum_i k_i)` with
    /// `k_i = exp(-||x - X_i||^2 / (2 b^2))`.
    fn kernel_sums(&self, x: ArrayView1<'_, f64>) -> (f64, f64) {
        let inv_2b2 = 0.5 / (self.bandwidth * self.bandwidth);
        let mut num = 0.0;
        let mut den = 0.0;
        for (row, r) in self.points.rows().into_iter().zip(self.response.iter()) {
            let mut q = 0.0;
            for (a, b) in x.iter().zip(row.iter()) {
                let diff = a - b;
                q += diff * diff;
            }
            let k = (-q * inv_2b2).exp();
            num += r * k;
            den += k;
        }
        (num, den)
    }

    /// Evaluates the fit at a point, dispatching on the density mode.
    pub fn evaluate(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "point has dimension {}, fit has {}",
                x.len(),
                self.dim()
            )));
        }
        let d = self.dim();
        let (num, den) = self.kernel_sums(x);
        let scale = (2.0 * std::f64::consts::PI).powf(-(d as f64) / 2.0)
            / (self.n() as f64 * self.bandwidth.powi(d as i32));
        match self.mode {
            DensityMode::KnownBall => Ok(num * scale / ball_density(d)),
            DensityMode::Estimated => {
                let phat = den * scale;
                let floor = DENSITY_FLOOR_REL * ball_density(d);
                if phat < floor {
                    return Err(Error::OutOfSupport {
                        density: phat,
                        floor,
                    });
                }
                Ok(num / den)
            }
        }
    }

    /// Evaluates the fit at many points in parallel, preserving row order.
    pub fn evaluate_rows(&self, rows: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        let vals: Vec<f64> = rows
            .rows()
            .into_iter()
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|row| self.evaluate(row))
            .collect::<Result<Vec<f64>>>()?;
        Ok(Array1::from_vec(vals))
    }
}

/// Known-density Nadaraya-Watson evaluation,
/// `(1/p_x) (1/(n b^d)) sum_i (y_i - 1/2) phi_d((x - X_i)/b)`.
pub fn nw_estimate(fit: &FirstStageFit<'_>, x: ArrayView1<'_, f64>) -> Result<f64> {
    if fit.mode() != DensityMode::KnownBall {
        return Err(Error::InvalidArgument(
            "nw_estimate requires a known-density fit".into(),
        ));
    }
    fit.evaluate(x)
}

/// Estimated-density variant: kernel-weighted response sum divided by the
/// kernel density estimate. Errors below the density floor.
pub fn nw_estimate_with_density(fit: &FirstStageFit<'_>, x: ArrayView1<'_, f64>) -> Result<f64> {
    if fit.mode() != DensityMode::Estimated {
        return Err(Error::InvalidArgument(
            "nw_estimate_with_density requires an estimated-density fit".into(),
        ));
    }
    fit.evaluate(x)
}

/// Maximum absolute deviation `max_grid |hhat(x) - h0(x)|`.
pub fn sup_norm_error<F>(
    fit: &FirstStageFit<'_>,
    h0_oracle: F,
    grid: &Array2<f64>,
) -> Result<f64>
where
    F: Fn(ArrayView1<'_, f64>) -> f64 + Sync,
{
    if grid.nrows() == 0 {
        return Err(Error::InvalidArgument(
            "sup_norm_error needs a nonempty grid".into(),
        ));
    }
    let hhat = fit.evaluate_rows(grid.view())?;
    let mut worst = 0.0_f64;
    for (row, h) in grid.rows().into_iter().zip(hhat.iter()) {
        worst = worst.max((h - h0_oracle(row)).abs());
    }
    Ok(worst)
}
