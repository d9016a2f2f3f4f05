//! Sample criteria for score-type estimators.
//!
//! Four criteria share the same maximizer-on-the-sphere interface: the
//! maximum score criterion, its smoothed variant, the two-stage criterion
//! with first-stage weights replacing the raw outcomes, and the multi-index
//! rectifier criterion. First-stage values at the sample points are cached
//! at construction so one criterion evaluation costs `O(n)`.
//!
//! The module also carries a numeric check of the identity linking the
//! smoothed population criterion of the two-stage estimator to the smoothed
//! sample criterion: integrating the kernel regression against the uniform
//! design over a half-plane reproduces the smoothed criterion exactly.

use ndarray::ArrayView2;
use statrs::function::erf::erfc;

use crate::dgp::{Dataset, MultiDataset};
use crate::error::{Error, Result};
use crate::firststage::{ball_density, FirstStageFit};
use crate::geometry::Direction;

/// Standard normal CDF.
pub(crate) fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// An objective over the unit sphere.
pub trait Criterion: Sync {
    fn dim(&self) -> usize;
    fn value(&self, theta: &Direction) -> f64;
}

fn check_dim(expected: usize, theta: &Direction) {
    assert_eq!(
        expected,
        theta.dim(),
        "criterion dimension {expected} does not match direction dimension {}",
        theta.dim()
    );
}

/// Weighted indicator sum `(1/n) sum_i w_i 1{x_i' theta >= 0}` shared by the
/// maximum score and two-stage criteria.
fn indicator_criterion(x: ArrayView2<'_, f64>, w: &[f64], theta: &Direction) -> f64 {
    let d = x.ncols();
    let n = x.nrows();
    let mut sum = 0.0;
    if d == 2 {
        let flat = x.as_slice().expect("covariates are standard layout");
        let c = theta.coords();
        let (c0, c1) = (c[0], c[1]);
        for (row, wi) in flat.chunks_exact(2).zip(w) {
            let t = row[0] * c0 + row[1] * c1;
            if t >= 0.0 {
                sum += wi;
            }
        }
    } else {
        for (row, wi) in x.rows().into_iter().zip(w) {
            if theta.dot(row) >= 0.0 {
                sum += wi;
            }
        }
    }
    sum / n as f64
}

/// Maximum score criterion `(1/n) sum (y_i - 1/2) 1{X_i' theta >= 0}`.
#[derive(Debug, Clone)]
pub struct MsCriterion<'a> {
    data: &'a Dataset,
    weights: Vec<f64>,
}

impl<'a> MsCriterion<'a> {
    pub fn new(data: &'a Dataset) -> Self {
        let weights = data.centered_y().to_vec();
        Self { data, weights }
    }
}

impl Criterion for MsCriterion<'_> {
    fn dim(&self) -> usize {
        self.data.d()
    }

    fn value(&self, theta: &Direction) -> f64 {
        check_dim(self.data.d(), theta);
        indicator_criterion(self.data.x(), &self.weights, theta)
    }
}

/// Smoothed maximum score criterion
/// `(1/n) sum (y_i - 1/2) Phi(X_i' theta / b)`.
#[derive(Debug, Clone)]
pub struct SmsCriterion<'a> {
    data: &'a Dataset,
    weights: Vec<f64>,
    bandwidth: f64,
}

impl<'a> SmsCriterion<'a> {
    pub fn new(data: &'a Dataset, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "smoothing bandwidth must be positive, got {bandwidth}"
            )));
        }
        Ok(Self {
            data,
            weights: data.centered_y().to_vec(),
            bandwidth,
        })
    }
}

impl Criterion for SmsCriterion<'_> {
    fn dim(&self) -> usize {
        self.data.d()
    }

    fn value(&self, theta: &Direction) -> f64 {
        check_dim(self.data.d(), theta);
        let mut sum = 0.0;
        for (row, wi) in self.data.x().rows().into_iter().zip(&self.weights) {
            sum += wi * normal_cdf(theta.dot(row) / self.bandwidth);
        }
        sum / self.data.n() as f64
    }
}

/// Two-stage criterion `(1/n) sum hhat(X_i) 1{X_i' theta >= 0}` with the
/// first-stage values cached at construction.
#[derive(Debug, Clone)]
pub struct TsmsCriterion<'a> {
    data: &'a Dataset,
    weights: Vec<f64>,
}

impl<'a> TsmsCriterion<'a> {
    /// Caches `hhat` at every sample point. The fit may have been built on
    /// the same sample (the default) or on an independent split.
    pub fn new(data: &'a Dataset, hhat: &FirstStageFit<'_>) -> Result<Self> {
        let weights = hhat.evaluate_rows(data.x())?.to_vec();
        Ok(Self { data, weights })
    }

    /// Uses externally supplied weights in place of first-stage values,
    /// e.g. an analytic regression function in tests.
    pub fn with_weights(data: &'a Dataset, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != data.n() {
            return Err(Error::Dimension(format!(
                "{} weights for {} observations",
                weights.len(),
                data.n()
            )));
        }
        Ok(Self { data, weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl Criterion for TsmsCriterion<'_> {
    fn dim(&self) -> usize {
        self.data.d()
    }

    fn value(&self, theta: &Direction) -> f64 {
        check_dim(self.data.d(), theta);
        indicator_criterion(self.data.x(), &self.weights, theta)
    }
}

/// Multi-index two-stage criterion: the negated rectifier penalty
/// `-(1/n) sum { [hhat]_+ prod_j 1{X_ij' theta < 0} + [-hhat]_+ prod_j 1{X_ij' theta > 0} }`.
///
/// Always nonpositive; zero exactly when no observation is penalized.
#[derive(Debug, Clone)]
pub struct TsmsMmiCriterion<'a> {
    data: &'a MultiDataset,
    weights: Vec<f64>,
}

impl<'a> TsmsMmiCriterion<'a> {
    pub fn new(data: &'a MultiDataset, hhat: &FirstStageFit<'_>) -> Result<Self> {
        let weights = hhat.evaluate_rows(data.flat_matrix().view())?.to_vec();
        Ok(Self { data, weights })
    }

    pub fn with_weights(data: &'a MultiDataset, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != data.n() {
            return Err(Error::Dimension(format!(
                "{} weights for {} observations",
                weights.len(),
                data.n()
            )));
        }
        Ok(Self { data, weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl Criterion for TsmsMmiCriterion<'_> {
    fn dim(&self) -> usize {
        self.data.d()
    }

    fn value(&self, theta: &Direction) -> f64 {
        check_dim(self.data.d(), theta);
        let n = self.data.n();
        let j = self.data.j();
        let mut penalty = 0.0;
        for (i, wi) in self.weights.iter().enumerate() {
            if *wi == 0.0 {
                continue;
            }
            let mut all_neg = true;
            let mut all_pos = true;
            for jj in 0..j {
                let t = theta.dot(self.data.block(i, jj));
                all_neg &= t < 0.0;
                all_pos &= t > 0.0;
                if !all_neg && !all_pos {
                    break;
                }
            }
            if *wi > 0.0 && all_neg {
                penalty += wi;
            } else if *wi < 0.0 && all_pos {
                penalty += -wi;
            }
        }
        -penalty / n as f64
    }
}

/// Maximum score criterion value.
pub fn ms_criterion(data: &Dataset, theta: &Direction) -> f64 {
    MsCriterion::new(data).value(theta)
}

/// Smoothed maximum score criterion value.
pub fn sms_criterion(data: &Dataset, theta: &Direction, bandwidth: f64) -> Result<f64> {
    Ok(SmsCriterion::new(data, bandwidth)?.value(theta))
}

/// Two-stage criterion value. Prefer [`TsmsCriterion`] when evaluating at
/// many directions; this convenience form rebuilds the first-stage cache on
/// every call.
pub fn tsms_criterion(
    data: &Dataset,
    hhat: &FirstStageFit<'_>,
    theta: &Direction,
) -> Result<f64> {
    Ok(TsmsCriterion::new(data, hhat)?.value(theta))
}

/// Multi-index two-stage criterion value.
pub fn tsms_mmi_criterion(
    data: &MultiDataset,
    hhat: &FirstStageFit<'_>,
    theta: &Direction,
) -> Result<f64> {
    Ok(TsmsMmiCriterion::new(data, hhat)?.value(theta))
}

/// Target agreement for the population-identity quadrature.
const QUADRATURE_TOL: f64 = 1e-7;
/// Gauss-Legendre nodes per panel and per axis.
const QUADRATURE_NODES: usize = 16;

/// Checks numerically that integrating the kernel regression against the
/// uniform design over the half-plane `{x' theta >= 0}` reproduces the
/// smoothed criterion: returns `(quadrature integral, smoothed criterion)`.
///
/// The kernel regression is evaluated literally off-support. The plane is
/// rotated so the half-plane boundary is an axis, the domain is truncated
/// at `1 + 8b` beyond which the kernel mass is below 1e-14, and panelized
/// Gauss-Legendre integration is refined by panel doubling until successive
/// estimates differ by less than 1e-7.
pub fn population_identity_check(
    data: &Dataset,
    bandwidth: f64,
    theta: &Direction,
) -> Result<(f64, f64)> {
    if data.d() != 2 || theta.dim() != 2 {
        return Err(Error::Dimension(
            "population_identity_check is implemented for d = 2".into(),
        ));
    }
    if !(bandwidth > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bandwidth must be positive, got {bandwidth}"
        )));
    }
    let rhs = sms_criterion(data, theta, bandwidth)?;

    let fit = FirstStageFit::known_density(data, bandwidth)?;
    let density = ball_density(2);
    let c = theta.coords();
    let perp = [-c[1], c[0]];
    let limit = 1.0 + 8.0 * bandwidth;

    // Integrand in rotated coordinates (u1 along theta, u2 along the
    // boundary); the half-plane indicator becomes the u1 >= 0 domain bound.
    let integrand = |u1: f64, u2: f64| -> f64 {
        let x = ndarray::array![u1 * c[0] + u2 * perp[0], u1 * c[1] + u2 * perp[1]];
        fit.evaluate(x.view()).expect("known-density evaluation is total") * density
    };

    let (nodes, weights) = gauss_legendre(QUADRATURE_NODES);
    let estimate = |panels: usize| -> f64 {
        let mut total = 0.0;
        for p1 in 0..panels {
            let (a1, b1) = panel_bounds(0.0, limit, p1, panels);
            for p2 in 0..panels {
                let (a2, b2) = panel_bounds(-limit, limit, p2, panels);
                let mut acc = 0.0;
                for (t1, w1) in nodes.iter().zip(&weights) {
                    let u1 = 0.5 * (a1 + b1) + 0.5 * (b1 - a1) * t1;
                    for (t2, w2) in nodes.iter().zip(&weights) {
                        let u2 = 0.5 * (a2 + b2) + 0.5 * (b2 - a2) * t2;
                        acc += w1 * w2 * integrand(u1, u2);
                    }
                }
                total += acc * 0.25 * (b1 - a1) * (b2 - a2);
            }
        }
        total
    };

    let mut panels = 2;
    let mut prev = estimate(panels);
    let mut achieved = f64::INFINITY;
    while panels <= 32 {
        panels *= 2;
        let next = estimate(panels);
        achieved = (next - prev).abs();
        prev = next;
        if achieved < QUADRATURE_TOL {
            return Ok((next, rhs));
        }
    }
    Err(Error::QuadratureNonConvergence {
        achieved,
        requested: QUADRATURE_TOL,
    })
}

fn panel_bounds(lo: f64, hi: f64, index: usize, panels: usize) -> (f64, f64) {
    let width = (hi - lo) / panels as f64;
    (lo + width * index as f64, lo + width * (index + 1) as f64)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on the
/// Legendre recurrence.
pub(crate) fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for k in 0..m.div_ceil(2) {
        // Chebyshev-based initial guess.
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=m {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[k] = -x;
        nodes[m - 1 - k] = x;
        weights[k] = w;
        weights[m - 1 - k] = w;
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{
        sample_covariates_ball, simulate_binary, simulate_multi_index, true_h0, ErrorSpec,
        LinkSpec,
    };
    use crate::geometry::{sphere_grid, unit_sphere_sample};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_point_data() -> Dataset {
        Dataset::new(vec![1, 0], array![[0.5, 0.0], [-0.5, 0.0]]).unwrap()
    }

    fn east() -> Direction {
        Direction::from_unit(array![1.0, 0.0]).unwrap()
    }

    #[test]
    fn ms_two_point_values() {
        let data = two_point_data();
        assert_eq!(ms_criterion(&data, &east()), 0.25);
        let west = Direction::from_unit(array![-1.0, 0.0]).unwrap();
        assert_eq!(ms_criterion(&data, &west), -0.25);
    }

    #[test]
    fn ms_all_ones_halfspace() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // Points concentrated in the right half-plane; y all 1.
        let mut x = sample_covariates_ball(100, 2, &mut rng).unwrap();
        x.column_mut(0).mapv_inplace(|v| 0.1 + v.abs() * 0.5);
        let data = Dataset::new(vec![1; 100], x).unwrap();
        assert_eq!(ms_criterion(&data, &east()), 0.5);
    }

    #[test]
    fn sms_two_point_value() {
        let data = two_point_data();
        // (2 Phi(0.5) - 1) / 4, recomputed from the normal CDF.
        let want = (2.0 * normal_cdf(0.5) - 1.0) / 4.0;
        assert_abs_diff_eq!(want, 0.0957312, epsilon = 1e-7);
        let got = sms_criterion(&data, &east(), 1.0).unwrap();
        assert_abs_diff_eq!(got, want, epsilon = 1e-15);
    }

    #[test]
    fn sms_at_orthogonal_direction_is_half_weighted() {
        let data = two_point_data();
        let north = Direction::from_unit(array![0.0, 1.0]).unwrap();
        // All indices zero: Phi(0) = 1/2, so the value is half the mean
        // centered outcome; here the outcomes balance to zero.
        assert_abs_diff_eq!(
            sms_criterion(&data, &north, 0.7).unwrap(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn sms_tends_to_ms_as_bandwidth_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let theta0 = unit_sphere_sample(2, &mut rng).unwrap();
        let err = ErrorSpec::logistic(1.0).unwrap();
        let data = simulate_binary(200, 2, &theta0, &err, &mut rng).unwrap();
        let theta = unit_sphere_sample(2, &mut rng).unwrap();
        let ms = ms_criterion(&data, &theta);
        let sms = sms_criterion(&data, &theta, 1e-8).unwrap();
        assert!((ms - sms).abs() < 1e-12);
    }

    #[test]
    fn tsms_zero_weights_vanish() {
        let data = two_point_data();
        let crit = TsmsCriterion::with_weights(&data, vec![0.0, 0.0]).unwrap();
        for theta in sphere_grid(2, 16).unwrap() {
            assert_eq!(crit.value(&theta), 0.0);
        }
    }

    #[test]
    fn tsms_single_point_weight_passthrough() {
        let data = Dataset::new(vec![1], array![[0.3, -0.2]]).unwrap();
        let crit = TsmsCriterion::with_weights(&data, vec![0.25]).unwrap();
        let theta = Direction::normalized(array![0.3, -0.2]).unwrap();
        assert_eq!(crit.value(&theta), 0.25);
    }

    #[test]
    fn tsms_oracle_weights_maximized_at_theta0() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let theta0 = east();
        let err = ErrorSpec::logistic(1.0).unwrap();
        let data = simulate_binary(400, 2, &theta0, &ErrorSpec::Degenerate, &mut rng).unwrap();
        let weights: Vec<f64> = data
            .x()
            .rows()
            .into_iter()
            .map(|x| true_h0(x, &theta0, &err))
            .collect();
        let crit = TsmsCriterion::with_weights(&data, weights).unwrap();
        let at_truth = crit.value(&theta0);
        let mut grid = sphere_grid(2, 256).unwrap();
        grid.push(theta0.clone());
        for theta in &grid {
            assert!(crit.value(theta) <= at_truth + 1e-15);
        }
    }

    #[test]
    fn mmi_term_contributions() {
        // One observation, J = 2. Positive weight with both indices
        // negative is penalized; both positive is not.
        let x = ndarray::Array3::from_shape_vec((1, 2, 2), vec![0.3, 0.1, 0.5, 0.2]).unwrap();
        let data = MultiDataset::new(vec![0.3], x).unwrap();
        let crit = TsmsMmiCriterion::with_weights(&data, vec![0.3]).unwrap();
        // Both indices positive under east.
        assert_eq!(crit.value(&east()), 0.0);
        // Both indices negative under west: penalty 0.3.
        let west = Direction::from_unit(array![-1.0, 0.0]).unwrap();
        assert_eq!(crit.value(&west), -0.3);
    }

    #[test]
    fn mmi_nonpositive_and_zero_iff_unpenalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let theta0 = east();
        let data =
            simulate_multi_index(300, 2, 2, &theta0, LinkSpec::default(), 0.2, &mut rng).unwrap();
        let weights: Vec<f64> = (0..data.n())
            .map(|i| {
                crate::dgp::multi_h0(
                    &data.x().index_axis(ndarray::Axis(0), i).to_owned(),
                    &theta0,
                    LinkSpec::default(),
                )
            })
            .collect();
        let crit = TsmsMmiCriterion::with_weights(&data, weights).unwrap();
        for theta in sphere_grid(2, 64).unwrap() {
            assert!(crit.value(&theta) <= 0.0);
        }
        // Analytic weights at the truth: no penalized observation.
        assert_eq!(crit.value(&theta0), 0.0);
        for theta in sphere_grid(2, 64).unwrap() {
            assert!(crit.value(&theta) <= crit.value(&theta0));
        }
    }

    #[test]
    fn mmi_single_block_matches_binary_argmax() {
        // With J = 1 the multi-index and binary two-stage criteria pick the
        // same maximizer on a grid (values differ by a constant).
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let theta0 = Direction::normalized(array![0.8, 0.6]).unwrap();
        let err = ErrorSpec::logistic(1.0).unwrap();
        let data = simulate_binary(300, 2, &theta0, &err, &mut rng).unwrap();
        let fit = FirstStageFit::known_density(&data, 0.3).unwrap();
        let weights = fit.evaluate_rows(data.x()).unwrap().to_vec();
        let tsms = TsmsCriterion::with_weights(&data, weights.clone()).unwrap();
        let multi = MultiDataset::single_index(&data);
        let mmi = TsmsMmiCriterion::with_weights(&multi, weights).unwrap();

        let grid = sphere_grid(2, 360).unwrap();
        let argmax = |f: &dyn Fn(&Direction) -> f64| -> usize {
            let mut best = 0;
            for (k, theta) in grid.iter().enumerate() {
                if f(theta) > f(&grid[best]) {
                    best = k;
                }
            }
            best
        };
        let a = argmax(&|t| tsms.value(t));
        let b = argmax(&|t| mmi.value(t));
        assert_eq!(a, b);
    }

    #[test]
    fn split_sample_first_stage_is_supported() {
        // Fit on one half, score the other half: the criterion accepts any
        // fit and only evaluates it at its own rows.
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let theta0 = east();
        let err = ErrorSpec::logistic(1.0).unwrap();
        let data = simulate_binary(400, 2, &theta0, &err, &mut rng).unwrap();
        let (train, score) = data.split_at(200).unwrap();
        let fit = FirstStageFit::known_density(&train, 0.3).unwrap();
        let crit = TsmsCriterion::new(&score, &fit).unwrap();
        assert_eq!(crit.weights().len(), score.n());
        // Same-sample weights differ from split-sample weights.
        let own_fit = FirstStageFit::known_density(&score, 0.3).unwrap();
        let own = TsmsCriterion::new(&score, &own_fit).unwrap();
        assert_ne!(crit.weights(), own.weights());
        let theta = unit_sphere_sample(2, &mut rng).unwrap();
        assert!(crit.value(&theta).is_finite());
    }

    #[test]
    fn indicator_criteria_are_piecewise_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let theta0 = east();
        let err = ErrorSpec::logistic(1.0).unwrap();
        let data = simulate_binary(100, 2, &theta0, &err, &mut rng).unwrap();
        let theta = Direction::from_angle(0.7361);
        // A perturbation small enough to keep every sign fixed.
        let nudged = Direction::from_angle(0.7361 + 1e-9);
        assert_eq!(ms_criterion(&data, &theta), ms_criterion(&data, &nudged));
    }

    #[test]
    fn criteria_invariant_to_renormalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let theta0 = east();
        let err = ErrorSpec::logistic(1.0).unwrap();
        let data = simulate_binary(50, 2, &theta0, &err, &mut rng).unwrap();
        let v = array![0.31, -0.87];
        let a = Direction::normalized(v.clone()).unwrap();
        let b = Direction::normalized(3.7 * &v).unwrap();
        assert_eq!(ms_criterion(&data, &a), ms_criterion(&data, &b));
        let sa = sms_criterion(&data, &a, 0.2).unwrap();
        let sb = sms_criterion(&data, &b, 0.2).unwrap();
        assert!((sa - sb).abs() < 1e-14);
    }

    #[test]
    fn identity_check_two_point_dataset() {
        let data = two_point_data();
        let (lhs, rhs) = population_identity_check(&data, 0.5, &east()).unwrap();
        assert!((lhs - rhs).abs() < 1e-6, "lhs {lhs}, rhs {rhs}");
    }

    #[test]
    fn identity_check_balanced_pairs_vanish() {
        // Same covariate with opposite outcomes: both sides are zero for
        // any direction.
        let data = Dataset::new(
            vec![1, 0, 1, 0],
            array![[0.4, 0.2], [0.4, 0.2], [-0.3, 0.6], [-0.3, 0.6]],
        )
        .unwrap();
        let theta = Direction::from_angle(1.234);
        let (lhs, rhs) = population_identity_check(&data, 0.4, &theta).unwrap();
        assert!(lhs.abs() < 1e-6, "lhs {lhs}");
        assert!(rhs.abs() < 1e-15, "rhs {rhs}");
    }

    #[test]
    fn identity_check_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let theta0 = east();
        let err = ErrorSpec::logistic(1.0).unwrap();
        let data = simulate_binary(20, 2, &theta0, &err, &mut rng).unwrap();
        let mut worst = 0.0_f64;
        for _ in 0..5 {
            let theta = unit_sphere_sample(2, &mut rng).unwrap();
            let (lhs, rhs) = population_identity_check(&data, 0.3, &theta).unwrap();
            worst = worst.max((lhs - rhs).abs());
        }
        assert!(worst <= 1e-5, "worst deviation {worst}");
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        // Degree 2m-1 exactness on a few cases.
        let (nodes, weights) = gauss_legendre(8);
        let integral: f64 = nodes
            .iter()
            .zip(&weights)
            .map(|(x, w)| w * (x.powi(6) - 2.0 * x.powi(3) + 1.0))
            .sum();
        // int_{-1}^{1} x^6 - 2x^3 + 1 = 2/7 + 2.
        assert_abs_diff_eq!(integral, 2.0 / 7.0 + 2.0, epsilon = 1e-13);
        let total: f64 = weights.iter().sum();
        assert_abs_diff_eq!(total, 2.0, epsilon = 1e-13);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        prop_compose! {
            fn arb_instance()(
                seed in 0u64..1000,
                angle in 0.0f64..std::f64::consts::TAU,
            ) -> (Dataset, Direction) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let theta0 = Direction::from_unit(array![1.0, 0.0]).unwrap();
                let err = ErrorSpec::logistic(1.0).unwrap();
                let data = simulate_binary(40, 2, &theta0, &err, &mut rng).unwrap();
                (data, Direction::from_angle(angle))
            }
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn ms_bounded_by_half((data, theta) in arb_instance()) {
                let v = ms_criterion(&data, &theta);
                prop_assert!(v.abs() <= 0.5);
            }

            #[test]
            fn sign_perturbation_stability((data, theta) in arb_instance()) {
                // Nudge below the smallest sign margin: bit-identical value.
                let margin = data
                    .x()
                    .rows()
                    .into_iter()
                    .map(|r| theta.dot(r).abs())
                    .fold(f64::INFINITY, f64::min);
                prop_assume!(margin > 1e-7);
                let nudged = Direction::from_angle(theta.angle() + margin / 10.0);
                prop_assert_eq!(ms_criterion(&data, &theta), ms_criterion(&data, &nudged));
            }
        }
    }
}
