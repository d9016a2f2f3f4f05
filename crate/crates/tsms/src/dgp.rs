//! Data-generating processes on the open unit ball.
//!
//! Binary outcomes follow `y = 1{x' theta0 + eps >= 0}` with covariates
//! uniform on the unit ball and errors whose conditional median is zero.
//! The regression function `h0(x) = E[y - 1/2 | X = x] = F(x' theta0 | x) - 1/2`
//! is available in closed form for every error family, which gives the test
//! suite an analytic ground truth. The multi-index process generates `J`
//! covariate blocks and an outcome with conditional mean built from a
//! strictly increasing link of the averaged indices, so the single-crossing
//! sign restrictions hold by construction.

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::ContinuousCDF;

use crate::error::{Error, Result};
use crate::geometry::Direction;

/// Error distribution families, all with conditional median zero and a
/// strictly positive conditional density.
#[derive(Debug, Clone, PartialEq)]
pub enum ErrorSpec {
    /// Logistic with fixed scale.
    Logistic { scale: f64 },
    /// Centered Gaussian with fixed standard deviation.
    Gaussian { sd: f64 },
    /// Logistic whose scale varies with the covariates:
    /// `scale(x) = base * exp(slope' x)`, bounded away from 0 and infinity
    /// on the unit ball. The conditional median stays zero even though the
    /// error is not mean-independent of `x`.
    HeteroskedasticLogistic { base_scale: f64, slope: Vec<f64> },
    /// Point mass at zero, so `y = 1{x' theta0 >= 0}` exactly. Test-only:
    /// it violates the positive-density requirement, and simulation logs a
    /// warning when it is used.
    Degenerate,
}

impl ErrorSpec {
    pub fn logistic(scale: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "logistic scale must be positive, got {scale}"
            )));
        }
        Ok(Self::Logistic { scale })
    }

    pub fn gaussian(sd: f64) -> Result<Self> {
        if !(sd > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "gaussian sd must be positive, got {sd}"
            )));
        }
        Ok(Self::Gaussian { sd })
    }

    pub fn heteroskedastic_logistic(base_scale: f64, slope: Vec<f64>) -> Result<Self> {
        if !(base_scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "base scale must be positive, got {base_scale}"
            )));
        }
        Ok(Self::HeteroskedasticLogistic { base_scale, slope })
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, Self::Degenerate)
    }

    /// Conditional scale of the error given covariates `x`.
    fn scale_at(&self, x: ArrayView1<'_, f64>) -> f64 {
        match self {
            Self::Logistic { scale } => *scale,
            Self::Gaussian { sd } => *sd,
            Self::HeteroskedasticLogistic { base_scale, slope } => {
                let mut s = 0.0;
                for (a, b) in slope.iter().zip(x.iter()) {
                    s += a * b;
                }
                base_scale * s.exp()
            }
            Self::Degenerate => 0.0,
        }
    }

    /// Conditional CDF `F(e | x)` evaluated at `e`.
    pub fn conditional_cdf(&self, e: f64, x: ArrayView1<'_, f64>) -> f64 {
        match self {
            Self::Logistic { .. } | Self::HeteroskedasticLogistic { .. } => {
                let s = self.scale_at(x);
                1.0 / (1.0 + (-e / s).exp())
            }
            Self::Gaussian { sd } => {
                let normal = statrs::distribution::Normal::new(0.0, *sd).unwrap();
                normal.cdf(e)
            }
            Self::Degenerate => {
                if e < 0.0 {
                    0.0
                } else if e > 0.0 {
                    1.0
                } else {
                    0.5
                }
            }
        }
    }

    /// Draws one error realization conditional on covariates `x`.
    fn draw<R: Rng + ?Sized>(&self, x: ArrayView1<'_, f64>, rng: &mut R) -> f64 {
        match self {
            Self::Logistic { .. } | Self::HeteroskedasticLogistic { .. } => {
                let s = self.scale_at(x);
                let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                s * (u / (1.0 - u)).ln()
            }
            Self::Gaussian { sd } => {
                let z: f64 = rng.sample(StandardNormal);
                sd * z
            }
            Self::Degenerate => 0.0,
        }
    }
}

/// Binary-outcome sample with covariate rows on the open unit ball.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<u8>,
    x: Array2<f64>,
}

impl Dataset {
    pub fn new(y: Vec<u8>, x: Array2<f64>) -> Result<Self> {
        if y.len() != x.nrows() {
            return Err(Error::Dimension(format!(
                "y has {} entries but X has {} rows",
                y.len(),
                x.nrows()
            )));
        }
        if y.is_empty() {
            return Err(Error::InvalidArgument("dataset needs n >= 1".into()));
        }
        if let Some(bad) = y.iter().position(|v| *v > 1) {
            return Err(Error::InvalidArgument(format!(
                "y must be 0/1; row {bad} has {}",
                y[bad]
            )));
        }
        for (i, row) in x.rows().into_iter().enumerate() {
            let norm = row.dot(&row).sqrt();
            if !(norm < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "covariate row {i} has norm {norm} outside the open unit ball"
                )));
            }
        }
        Ok(Self { y, x })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &[u8] {
        &self.y
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.x.row(i)
    }

    /// Centered responses `y_i - 1/2`.
    pub fn centered_y(&self) -> Array1<f64> {
        self.y.iter().map(|v| *v as f64 - 0.5).collect()
    }

    /// Splits the sample into the first `k` rows and the rest, for
    /// split-sample first stages.
    pub fn split_at(&self, k: usize) -> Result<(Dataset, Dataset)> {
        if k == 0 || k >= self.n() {
            return Err(Error::InvalidArgument(format!(
                "split point {k} outside 1..{}",
                self.n()
            )));
        }
        let first = Dataset {
            y: self.y[..k].to_vec(),
            x: self.x.slice(ndarray::s![..k, ..]).to_owned(),
        };
        let second = Dataset {
            y: self.y[k..].to_vec(),
            x: self.x.slice(ndarray::s![k.., ..]).to_owned(),
        };
        Ok((first, second))
    }
}

/// Multi-index sample: `J` covariate blocks per observation and a real
/// outcome whose conditional mean is the single-crossing regression
/// function.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiDataset {
    y: Vec<f64>,
    /// n x J x d covariate tensor.
    x: Array3<f64>,
}

impl MultiDataset {
    /// Builds a multi-index dataset; requires `J >= 2` (use
    /// [`MultiDataset::single_index`] for the degenerate one-block view).
    pub fn new(y: Vec<f64>, x: Array3<f64>) -> Result<Self> {
        if x.dim().1 < 2 {
            return Err(Error::InvalidArgument(format!(
                "multi-index data needs J >= 2, got J = {}",
                x.dim().1
            )));
        }
        Self::build(y, x)
    }

    /// Views a single-index dataset as a one-block multi-index dataset with
    /// responses `y - 1/2`. Exists so the one-block criterion can be
    /// compared against the binary two-stage criterion.
    pub fn single_index(data: &Dataset) -> Self {
        let (n, d) = (data.n(), data.d());
        let mut x = Array3::<f64>::zeros((n, 1, d));
        x.index_axis_mut(Axis(1), 0).assign(&data.x());
        Self {
            y: data.centered_y().to_vec(),
            x,
        }
    }

    fn build(y: Vec<f64>, x: Array3<f64>) -> Result<Self> {
        if y.len() != x.dim().0 {
            return Err(Error::Dimension(format!(
                "y has {} entries but X has {} observations",
                y.len(),
                x.dim().0
            )));
        }
        if y.is_empty() {
            return Err(Error::InvalidArgument("dataset needs n >= 1".into()));
        }
        for i in 0..x.dim().0 {
            for j in 0..x.dim().1 {
                let block = x.slice(ndarray::s![i, j, ..]);
                let norm = block.dot(&block).sqrt();
                if !(norm < 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "covariate block ({i}, {j}) has norm {norm} outside the open unit ball"
                    )));
                }
            }
        }
        Ok(Self { y, x })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn j(&self) -> usize {
        self.x.dim().1
    }

    pub fn d(&self) -> usize {
        self.x.dim().2
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &Array3<f64> {
        &self.x
    }

    pub fn block(&self, i: usize, j: usize) -> ArrayView1<'_, f64> {
        self.x.slice(ndarray::s![i, j, ..])
    }

    /// Observation `i` flattened to `vec(X_i)` of length `J * d`.
    pub fn flat_row(&self, i: usize) -> Vec<f64> {
        self.x
            .index_axis(Axis(0), i)
            .iter()
            .copied()
            .collect()
    }

    /// All observations flattened to an `n x (J*d)` matrix.
    pub fn flat_matrix(&self) -> Array2<f64> {
        let (n, j, d) = self.x.dim();
        let mut out = Array2::<f64>::zeros((n, j * d));
        for i in 0..n {
            for (k, v) in self.x.index_axis(Axis(0), i).iter().enumerate() {
                out[[i, k]] = *v;
            }
        }
        out
    }
}

/// Link for the multi-index regression function: a strictly increasing
/// smooth function with `G(0) = 0` applied to the mean of the `J` indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinkSpec {
    /// `G(t) = 1 / (1 + exp(-t)) - 1/2`, bounded by 1/2 in absolute value.
    #[default]
    CenteredLogistic,
}

impl LinkSpec {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            LinkSpec::CenteredLogistic => 1.0 / (1.0 + (-t).exp()) - 0.5,
        }
    }
}

/// Draws `n` rows i.i.d. uniform on the open unit ball in `R^d` (Gaussian
/// direction scaled by `U^(1/d)`).
pub fn sample_covariates_ball<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    rng: &mut R,
) -> Result<Array2<f64>> {
    if n < 1 {
        return Err(Error::InvalidArgument("need n >= 1".into()));
    }
    if d < 2 {
        return Err(Error::Dimension(format!("need d >= 2, got {d}")));
    }
    let mut x = Array2::<f64>::zeros((n, d));
    for mut row in x.rows_mut() {
        loop {
            let v: Array1<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.dot(&v).sqrt();
            if norm > 1e-12 {
                let u: f64 = rng.gen_range(0.0..1.0);
                let radius = u.powf(1.0 / d as f64);
                // radius < 1 almost surely; clamp the measure-zero edge.
                let radius = radius.min(1.0 - 1e-12);
                row.assign(&(v * (radius / norm)));
                break;
            }
        }
    }
    Ok(x)
}

/// Simulates the binary choice model `y_i = 1{X_i' theta0 + eps_i >= 0}`.
pub fn simulate_binary<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    theta0: &Direction,
    err: &ErrorSpec,
    rng: &mut R,
) -> Result<Dataset> {
    if theta0.dim() != d {
        return Err(Error::Dimension(format!(
            "theta0 has dimension {} but d = {d}",
            theta0.dim()
        )));
    }
    if err.is_degenerate() {
        log::warn!(
            "simulating with the degenerate (noiseless) error spec; this is a \
             test-only configuration with no error density"
        );
    }
    let x = sample_covariates_ball(n, d, rng)?;
    let y = x
        .rows()
        .into_iter()
        .map(|row| {
            let eps = err.draw(row, rng);
            u8::from(theta0.dot(row) + eps >= 0.0)
        })
        .collect();
    Dataset::new(y, x)
}

/// Analytic regression function `h0(x) = F(x' theta0 | x) - 1/2`. Its sign
/// equals the sign of `x' theta0` for every error family.
pub fn true_h0(x: ArrayView1<'_, f64>, theta0: &Direction, err: &ErrorSpec) -> f64 {
    err.conditional_cdf(theta0.dot(x), x) - 0.5
}

/// Multi-index regression function `G(mean_j x_j' theta0)` for an
/// observation given as an iterator over blocks.
pub fn multi_h0(blocks: &Array2<f64>, theta0: &Direction, link: LinkSpec) -> f64 {
    let j = blocks.nrows() as f64;
    let mean_index: f64 = blocks
        .rows()
        .into_iter()
        .map(|b| theta0.dot(b))
        .sum::<f64>()
        / j;
    link.eval(mean_index)
}

/// Simulates the multi-index model: blocks i.i.d. uniform on the ball,
/// `y_i = h0(X_i) + noise`, `h0(X_i) = G(mean_j X_ij' theta0)`.
pub fn simulate_multi_index<R: Rng + ?Sized>(
    n: usize,
    j: usize,
    d: usize,
    theta0: &Direction,
    link: LinkSpec,
    noise_sd: f64,
    rng: &mut R,
) -> Result<MultiDataset> {
    if j < 2 {
        return Err(Error::InvalidArgument(format!(
            "multi-index simulation needs J >= 2, got J = {j}"
        )));
    }
    if theta0.dim() != d {
        return Err(Error::Dimension(format!(
            "theta0 has dimension {} but d = {d}",
            theta0.dim()
        )));
    }
    if noise_sd < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "noise sd must be nonnegative, got {noise_sd}"
        )));
    }
    let mut x = Array3::<f64>::zeros((n, j, d));
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let blocks = sample_covariates_ball(j, d, rng)?;
        x.index_axis_mut(Axis(0), i).assign(&blocks);
        let h = multi_h0(&blocks, theta0, link);
        let z: f64 = rng.sample(StandardNormal);
        y.push(h + noise_sd * z);
    }
    MultiDataset::new(y, x)
}
