//! Monte Carlo harness: rate recovery, distributional diagnostics, and
//! empirical-process probes.
//!
//! Replications are fully deterministic: every (sample size, replication)
//! cell derives its own seed from the base seed, so adding grid points or
//! reordering execution never perturbs existing cells. Replications run in
//! parallel and are reduced in (n, replication) order.

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::criteria::normal_cdf;
use crate::dgp::{
    sample_covariates_ball, simulate_binary, simulate_multi_index, true_h0, ErrorSpec, LinkSpec,
};
use crate::error::{Error, Result};
use crate::firststage::{sup_norm_error, FirstStageFit};
use crate::geometry::{tangent_project, unit_sphere_sample, Direction};
use crate::optimizer::{estimate, CriterionSpec, OptimizerConfig};
use crate::rates::optimal_bandwidth;

/// splitmix64 finalizer, the mixing core of the seed derivation.
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic per-cell seed: a 64-bit mix of the base seed, the sample
/// size, and the replication index.
pub fn derive_seed(base: u64, n: usize, replication: usize) -> u64 {
    splitmix64(splitmix64(base ^ splitmix64(n as u64)) ^ splitmix64(replication as u64 | 1 << 63))
}

/// Estimator exercised by a rate experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Ms,
    Sms,
    Tsms,
    /// Two-stage criterion with the analytic regression function injected
    /// in place of the kernel fit.
    TsmsOracle,
    TsmsMmi,
}

impl EstimatorKind {
    pub fn label(&self) -> &'static str {
        match self {
            EstimatorKind::Ms => "ms",
            EstimatorKind::Sms => "sms",
            EstimatorKind::Tsms => "tsms",
            EstimatorKind::TsmsOracle => "tsms-oracle",
            EstimatorKind::TsmsMmi => "tsms-mmi",
        }
    }
}

/// How the smoothing/first-stage bandwidth is chosen per sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum BandwidthRule {
    /// Bandwidth optimizing the second-stage convergence rate for the
    /// dimension regime.
    RegimeOptimal,
    /// Bandwidth optimizing the first-stage sup-norm rate,
    /// `n^(-1/(d_fs + 4))` with `d_fs` the first-stage regression
    /// dimension.
    FirstStageOptimal,
    Fixed(f64),
}

impl BandwidthRule {
    /// Resolves the bandwidth. `d` is the covariate dimension and `d_fs`
    /// the dimension of the first-stage regression (`J * d` for the
    /// multi-index estimator).
    pub fn bandwidth(&self, d: usize, d_fs: usize, n: usize) -> Result<f64> {
        match self {
            BandwidthRule::RegimeOptimal => optimal_bandwidth(d, n, 2),
            BandwidthRule::FirstStageOptimal => {
                Ok((n as f64).powf(-1.0 / (d_fs as f64 + 4.0)))
            }
            BandwidthRule::Fixed(b) => {
                if *b > 0.0 {
                    Ok(*b)
                } else {
                    Err(Error::InvalidArgument(format!(
                        "fixed bandwidth must be positive, got {b}"
                    )))
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            BandwidthRule::RegimeOptimal => "regime-optimal".into(),
            BandwidthRule::FirstStageOptimal => "first-stage-optimal".into(),
            BandwidthRule::Fixed(b) => format!("fixed({b})"),
        }
    }
}

/// Full description of a rate-recovery experiment.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub estimator: EstimatorKind,
    pub d: usize,
    /// Covariate blocks per observation; used by the multi-index estimator.
    pub j: usize,
    pub theta0: Direction,
    pub error: ErrorSpec,
    pub link: LinkSpec,
    pub noise_sd: f64,
    pub n_grid: Vec<usize>,
    pub replications: usize,
    pub bandwidth_rule: BandwidthRule,
    pub base_seed: u64,
    pub optimizer: OptimizerConfig,
}

impl ExperimentSpec {
    /// A spec with harness defaults: logistic errors with unit scale,
    /// logistic link with noise 0.25, and the dimension-default optimizer.
    pub fn new(
        estimator: EstimatorKind,
        d: usize,
        theta0: Direction,
        n_grid: Vec<usize>,
        replications: usize,
        bandwidth_rule: BandwidthRule,
        base_seed: u64,
    ) -> Result<Self> {
        let spec = Self {
            estimator,
            d,
            j: 2,
            theta0,
            error: ErrorSpec::logistic(1.0)?,
            link: LinkSpec::default(),
            noise_sd: 0.25,
            n_grid,
            replications,
            bandwidth_rule,
            base_seed,
            optimizer: OptimizerConfig::default_for_dim(d),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta0.dim() != self.d {
            return Err(Error::Dimension(format!(
                "theta0 dimension {} but d = {}",
                self.theta0.dim(),
                self.d
            )));
        }
        if self.n_grid.len() < 4 {
            return Err(Error::InvalidArgument(
                "n-grid needs at least 4 sample sizes".into(),
            ));
        }
        if !self.n_grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument(
                "n-grid must be strictly increasing".into(),
            ));
        }
        if self.replications < 50 {
            return Err(Error::InvalidArgument(
                "need at least 50 replications".into(),
            ));
        }
        if self.estimator == EstimatorKind::TsmsMmi && self.j < 2 {
            return Err(Error::InvalidArgument(
                "multi-index estimator needs J >= 2".into(),
            ));
        }
        Ok(())
    }

    /// First-stage regression dimension for the bandwidth rule.
    fn d_fs(&self) -> usize {
        match self.estimator {
            EstimatorKind::TsmsMmi => self.j * self.d,
            _ => self.d,
        }
    }
}

/// One successful replication.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicationRecord {
    pub n: usize,
    pub replication: usize,
    pub seed: u64,
    /// Tangent-space error vector `(I - theta0 theta0')(theta_hat - theta0)`.
    pub tangent: Vec<f64>,
    /// Norm of the tangent error, the primary error metric.
    pub tangent_norm: f64,
    /// Raw error norm `||theta_hat - theta0||`.
    pub raw_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FailureRecord {
    pub n: usize,
    pub replication: usize,
    pub seed: u64,
    pub message: String,
}

/// Per-sample-size summary of tangent error norms.
#[derive(Debug, Clone, Serialize)]
pub struct CellSummary {
    pub n: usize,
    pub bandwidth: Option<f64>,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub mean: f64,
    pub successes: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub estimator: String,
    pub d: usize,
    pub j: usize,
    pub bandwidth_rule: String,
    pub base_seed: u64,
    pub replications: usize,
    pub per_n: Vec<CellSummary>,
    /// OLS slope of log median tangent error on log n.
    pub slope: f64,
    pub slope_stderr: f64,
    pub records: Vec<ReplicationRecord>,
    pub failures: Vec<FailureRecord>,
    pub elapsed_seconds: f64,
}

/// Interpolated quantile of a sorted slice (linear between order
/// statistics).
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let k = sorted.len();
    if k == 1 {
        return sorted[0];
    }
    let pos = p * (k - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Runs the full replication grid for a spec: simulate, fit the first
/// stage under the bandwidth rule, maximize, and record tangent-projected
/// errors; aggregates per-n summaries and the fitted log-log slope.
pub fn run_rate_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let started = std::time::Instant::now();
    let cells: Vec<(usize, usize)> = spec
        .n_grid
        .iter()
        .flat_map(|n| (0..spec.replications).map(move |r| (*n, r)))
        .collect();

    let outcomes: Vec<(usize, usize, u64, Result<ReplicationRecord>)> = cells
        .par_iter()
        .map(|(n, r)| {
            let seed = derive_seed(spec.base_seed, *n, *r);
            (*n, *r, seed, run_single_replication(spec, *n, *r, seed))
        })
        .collect();
    aggregate_outcomes(spec, outcomes, started.elapsed().as_secs_f64())
}

/// Reduces per-replication outcomes into the experiment result. Split out
/// of [`run_rate_experiment`] so failure accounting is testable.
fn aggregate_outcomes(
    spec: &ExperimentSpec,
    outcomes: Vec<(usize, usize, u64, Result<ReplicationRecord>)>,
    elapsed_seconds: f64,
) -> Result<ExperimentResult> {
    let total = outcomes.len();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (n, r, seed, outcome) in outcomes {
        match outcome {
            Ok(rec) => records.push(rec),
            Err(e) => failures.push(FailureRecord {
                n,
                replication: r,
                seed,
                message: e.to_string(),
            }),
        }
    }
    if failures.len() * 20 > total {
        return Err(Error::TooManyFailures {
            failed: failures.len(),
            total,
            first: failures[0].message.clone(),
        });
    }

    let mut per_n = Vec::with_capacity(spec.n_grid.len());
    for n in &spec.n_grid {
        let mut errs: Vec<f64> = records
            .iter()
            .filter(|r| r.n == *n)
            .map(|r| r.tangent_norm)
            .collect();
        errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let failures_n = failures.iter().filter(|f| f.n == *n).count();
        if errs.is_empty() {
            return Err(Error::TooManyFailures {
                failed: failures_n,
                total: spec.replications,
                first: format!("no successful replication at n = {n}"),
            });
        }
        let bandwidth = match spec.estimator {
            EstimatorKind::Ms | EstimatorKind::TsmsOracle => None,
            _ => Some(spec.bandwidth_rule.bandwidth(spec.d, spec.d_fs(), *n)?),
        };
        per_n.push(CellSummary {
            n: *n,
            bandwidth,
            median: quantile_sorted(&errs, 0.5),
            q25: quantile_sorted(&errs, 0.25),
            q75: quantile_sorted(&errs, 0.75),
            mean: errs.iter().sum::<f64>() / errs.len() as f64,
            successes: errs.len(),
            failures: failures_n,
        });
    }

    // Medians stabilize the desk-scale regression; score-type error
    // distributions are heavy tailed.
    let points: Vec<(f64, f64)> = per_n
        .iter()
        .map(|c| (c.n as f64, c.median))
        .collect();
    let (slope, slope_stderr) = fit_loglog_slope(&points)?;

    Ok(ExperimentResult {
        estimator: spec.estimator.label().to_string(),
        d: spec.d,
        j: spec.j,
        bandwidth_rule: spec.bandwidth_rule.label(),
        base_seed: spec.base_seed,
        replications: spec.replications,
        per_n,
        slope,
        slope_stderr,
        records,
        failures,
        elapsed_seconds,
    })
}

fn run_single_replication(
    spec: &ExperimentSpec,
    n: usize,
    replication: usize,
    seed: u64,
) -> Result<ReplicationRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta_hat = match spec.estimator {
        EstimatorKind::Ms => {
            let data = simulate_binary(n, spec.d, &spec.theta0, &spec.error, &mut rng)?;
            estimate(&CriterionSpec::Ms { data: &data }, &spec.optimizer, &mut rng)?.argmax
        }
        EstimatorKind::Sms => {
            let data = simulate_binary(n, spec.d, &spec.theta0, &spec.error, &mut rng)?;
            let b = spec.bandwidth_rule.bandwidth(spec.d, spec.d_fs(), n)?;
            estimate(
                &CriterionSpec::Sms { data: &data, bandwidth: b },
                &spec.optimizer,
                &mut rng,
            )?
            .argmax
        }
        EstimatorKind::Tsms => {
            let data = simulate_binary(n, spec.d, &spec.theta0, &spec.error, &mut rng)?;
            let b = spec.bandwidth_rule.bandwidth(spec.d, spec.d_fs(), n)?;
            let fit = FirstStageFit::known_density(&data, b)?;
            estimate(
                &CriterionSpec::Tsms { data: &data, hhat: &fit },
                &spec.optimizer,
                &mut rng,
            )?
            .argmax
        }
        EstimatorKind::TsmsOracle => {
            let data = simulate_binary(n, spec.d, &spec.theta0, &spec.error, &mut rng)?;
            let weights: Vec<f64> = data
                .x()
                .rows()
                .into_iter()
                .map(|x| true_h0(x, &spec.theta0, &spec.error))
                .collect();
            estimate(
                &CriterionSpec::TsmsWeights { data: &data, weights },
                &spec.optimizer,
                &mut rng,
            )?
            .argmax
        }
        EstimatorKind::TsmsMmi => {
            let data = simulate_multi_index(
                n,
                spec.j,
                spec.d,
                &spec.theta0,
                spec.link,
                spec.noise_sd,
                &mut rng,
            )?;
            let b = spec.bandwidth_rule.bandwidth(spec.d, spec.d_fs(), n)?;
            let fit = FirstStageFit::multi_index(&data, b)?;
            estimate(
                &CriterionSpec::TsmsMmi { data: &data, hhat: &fit },
                &spec.optimizer,
                &mut rng,
            )?
            .argmax
        }
    };
    let tangent = tangent_project(&spec.theta0, &theta_hat)?;
    let raw = &theta_hat.coords() - &spec.theta0.coords();
    Ok(ReplicationRecord {
        n,
        replication,
        seed,
        tangent_norm: tangent.dot(&tangent).sqrt(),
        raw_norm: raw.dot(&raw).sqrt(),
        tangent: tangent.to_vec(),
    })
}

/// OLS of `log(error)` on `log(n)`: returns the slope and its standard
/// error. Needs at least three points with positive errors.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "slope fit needs >= 3 points, got {}",
            points.len()
        )));
    }
    if let Some((x, y)) = points.iter().find(|(x, y)| !(*x > 0.0) || !(*y > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "slope fit needs positive coordinates, got ({x}, {y})"
        )));
    }
    let k = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|(x, _)| x.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, y)| y.ln()).collect();
    let xbar = xs.iter().sum::<f64>() / k;
    let ybar = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - xbar) * (y - ybar))
        .sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument(
            "slope fit needs at least two distinct x values".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let sigma2 = rss / (k - 2.0);
    Ok((slope, (sigma2 / sxx).sqrt()))
}

/// Per-delta output of [`smoothing_envelope_probe`].
#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeProbePoint {
    pub delta: f64,
    /// Largest `|h0(x)|` among draws whose half-space indicator disagrees
    /// between the perturbed and true directions.
    pub max_abs_h0: f64,
    /// Monte Carlo mean of `h0(x)^2 * 1{indicators disagree}` over all
    /// draws.
    pub mean_sq_disagree: f64,
    pub disagreement_count: usize,
    /// Set when no draw disagreed (the statistics are reported as zero).
    pub empty: bool,
}

/// Samples the indicator-disagreement sets: for each `delta`, draws a
/// direction at chord distance `delta` from `theta0` and measures how
/// large the regression function can be where the two half-space
/// indicators disagree, together with the mean of its square over the
/// disagreement event.
pub fn smoothing_envelope_probe<R: Rng + ?Sized>(
    theta0: &Direction,
    err: &ErrorSpec,
    delta_list: &[f64],
    m: usize,
    rng: &mut R,
) -> Result<Vec<EnvelopeProbePoint>> {
    if m < 10_000 {
        return Err(Error::InvalidArgument(format!(
            "envelope probe needs m >= 10000 draws, got {m}"
        )));
    }
    let d = theta0.dim();
    let mut out = Vec::with_capacity(delta_list.len());
    for &delta in delta_list {
        if !(0.0..=0.5).contains(&delta) {
            return Err(Error::InvalidArgument(format!(
                "delta must lie in [0, 1/2], got {delta}"
            )));
        }
        let theta = direction_at_chord_distance(theta0, delta, rng)?;
        let x = sample_covariates_ball(m, d, rng)?;
        let mut max_abs = 0.0_f64;
        let mut sum_sq = 0.0_f64;
        let mut count = 0usize;
        for row in x.rows() {
            let disagree = (theta0.dot(row) >= 0.0) != (theta.dot(row) >= 0.0);
            if disagree {
                let h = true_h0(row, theta0, err);
                max_abs = max_abs.max(h.abs());
                sum_sq += h * h;
                count += 1;
            }
        }
        out.push(EnvelopeProbePoint {
            delta,
            max_abs_h0: max_abs,
            mean_sq_disagree: sum_sq / m as f64,
            disagreement_count: count,
            empty: count == 0,
        });
    }
    Ok(out)
}

/// Draws a direction at exactly the given chord distance from `theta0`
/// (uniform over the sphere of such directions).
fn direction_at_chord_distance<R: Rng + ?Sized>(
    theta0: &Direction,
    chord: f64,
    rng: &mut R,
) -> Result<Direction> {
    if chord == 0.0 {
        return Ok(theta0.clone());
    }
    let angle = 2.0 * (0.5 * chord).asin();
    let d = theta0.dim();
    // Random unit tangent at theta0.
    let tangent = loop {
        let raw = unit_sphere_sample(d, rng)?;
        let c = theta0.coords().dot(&raw.coords());
        let t = &raw.coords() - &(c * &theta0.coords().to_owned());
        let norm = t.dot(&t).sqrt();
        if norm > 1e-9 {
            break t / norm;
        }
    };
    let coords = angle.cos() * &theta0.coords().to_owned() + angle.sin() * tangent;
    Direction::normalized(coords)
}

/// Which weight multiplies the half-space indicator difference in the
/// empirical-process probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeWeight {
    /// The analytic regression function (two-stage criterion geometry).
    H0,
    /// Constant one (maximum-score criterion geometry).
    Unit,
}

/// Per-delta output of [`empirical_process_probe`].
#[derive(Debug, Clone, Serialize)]
pub struct EmpiricalProcessPoint {
    pub delta: f64,
    /// Mean over replications of the supremum over the direction grid of
    /// `|sqrt(n) (P_n - P)(g_theta - g_theta0)|`.
    pub mean_sup: f64,
}

/// Measures the modulus of the centered empirical process over
/// direction balls of radius `delta`: the population term comes from a
/// one-time large oracle sample, fresh data are drawn per replication,
/// and the supremum runs over a grid of directions within each ball.
pub fn empirical_process_probe<R: Rng + ?Sized>(
    theta0: &Direction,
    err: &ErrorSpec,
    n: usize,
    delta_list: &[f64],
    reps: usize,
    weight: ProbeWeight,
    oracle_size: usize,
    rng: &mut R,
) -> Result<Vec<EmpiricalProcessPoint>> {
    if reps < 100 {
        return Err(Error::InvalidArgument(format!(
            "empirical-process probe needs >= 100 replications, got {reps}"
        )));
    }
    let d = theta0.dim();
    // One-time oracle sample approximating the population measure.
    let oracle_x = sample_covariates_ball(oracle_size, d, rng)?;
    let oracle_w: Vec<f64> = match weight {
        ProbeWeight::H0 => oracle_x
            .rows()
            .into_iter()
            .map(|row| true_h0(row, theta0, err))
            .collect(),
        ProbeWeight::Unit => vec![1.0; oracle_size],
    };

    let grid_per_side = 10usize;
    let mut out = Vec::with_capacity(delta_list.len());
    let rep_seeds: Vec<u64> = (0..reps).map(|_| rng.gen()).collect();
    for &delta in delta_list {
        // Direction grid in the delta-ball around theta0.
        let mut grid: Vec<Direction> = Vec::with_capacity(2 * grid_per_side);
        for k in 1..=grid_per_side {
            let chord = delta * k as f64 / grid_per_side as f64;
            for side in [1.0, -1.0] {
                grid.push(offset_direction(theta0, chord, side, d, rng)?);
            }
        }
        // Population term per grid direction from the oracle sample.
        let p_terms: Vec<f64> = grid
            .par_iter()
            .map(|theta| {
                let mut sum = 0.0;
                for (row, w) in oracle_x.rows().into_iter().zip(&oracle_w) {
                    sum += w * indicator_difference(row, theta, theta0);
                }
                sum / oracle_size as f64
            })
            .collect();

        let sups: Vec<f64> = rep_seeds
            .par_iter()
            .map(|seed| -> Result<f64> {
                let mut local = ChaCha8Rng::seed_from_u64(*seed ^ delta.to_bits());
                let x = sample_covariates_ball(n, d, &mut local)?;
                let w: Vec<f64> = match weight {
                    ProbeWeight::H0 => x
                        .rows()
                        .into_iter()
                        .map(|row| true_h0(row, theta0, err))
                        .collect(),
                    ProbeWeight::Unit => vec![1.0; n],
                };
                let mut sup = 0.0_f64;
                for (theta, p_term) in grid.iter().zip(&p_terms) {
                    let mut pn = 0.0;
                    for (row, wi) in x.rows().into_iter().zip(&w) {
                        pn += wi * indicator_difference(row, theta, theta0);
                    }
                    pn /= n as f64;
                    sup = sup.max(((n as f64).sqrt() * (pn - p_term)).abs());
                }
                Ok(sup)
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push(EmpiricalProcessPoint {
            delta,
            mean_sup: sups.iter().sum::<f64>() / reps as f64,
        });
    }
    Ok(out)
}

fn indicator_difference(x: ArrayView1<'_, f64>, theta: &Direction, theta0: &Direction) -> f64 {
    let a = theta.dot(x) >= 0.0;
    let b = theta0.dot(x) >= 0.0;
    f64::from(a) - f64::from(b)
}

/// Deterministic-side offset within the tangent circle for d = 2;
/// random tangent otherwise.
fn offset_direction<R: Rng + ?Sized>(
    theta0: &Direction,
    chord: f64,
    side: f64,
    d: usize,
    rng: &mut R,
) -> Result<Direction> {
    if d == 2 {
        let angle = side * 2.0 * (0.5 * chord).asin();
        Ok(Direction::from_angle(theta0.angle() + angle))
    } else {
        direction_at_chord_distance(theta0, chord, rng)
    }
}

/// Per-coordinate output of [`normality_diagnostic`].
#[derive(Debug, Clone, Serialize)]
pub struct CoordinateDiagnostic {
    pub coordinate: usize,
    pub mean: f64,
    pub sd: f64,
    /// Kolmogorov-Smirnov distance of the standardized coordinate to the
    /// standard normal; `None` when degenerate.
    pub ks_distance: Option<f64>,
    pub ks_critical: f64,
    pub ks_pass: bool,
    pub skewness: Option<f64>,
    pub excess_kurtosis: Option<f64>,
    /// Zero-variance coordinate, as in the degenerate-limit regime.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalityReport {
    pub sample_size: usize,
    pub ks_level: f64,
    pub coordinates: Vec<CoordinateDiagnostic>,
}

/// Standardizes each tangent coordinate of the input vectors and tests it
/// against the standard normal: Kolmogorov-Smirnov distance with an
/// asymptotic critical value at `ks_level`, skewness, and excess
/// kurtosis. Zero-variance coordinates are flagged as degenerate.
pub fn normality_diagnostic(errors: &[Vec<f64>], ks_level: f64) -> Result<NormalityReport> {
    let r = errors.len();
    if r < 200 {
        return Err(Error::InvalidArgument(format!(
            "normality diagnostic needs >= 200 vectors, got {r}"
        )));
    }
    if !(0.0 < ks_level && ks_level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "ks level must lie in (0, 1), got {ks_level}"
        )));
    }
    let d = errors[0].len();
    if errors.iter().any(|v| v.len() != d) {
        return Err(Error::Dimension("ragged error vectors".into()));
    }
    // Asymptotic Kolmogorov critical value c(level)/sqrt(R).
    let ks_critical = (0.5 * (2.0 / ks_level).ln()).sqrt() / (r as f64).sqrt();

    let mut coordinates = Vec::with_capacity(d);
    for k in 0..d {
        let vals: Vec<f64> = errors.iter().map(|v| v[k]).collect();
        let mean = vals.iter().sum::<f64>() / r as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / r as f64;
        let sd = var.sqrt();
        let scale = vals.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
        if sd <= 1e-12 * scale {
            coordinates.push(CoordinateDiagnostic {
                coordinate: k,
                mean,
                sd,
                ks_distance: None,
                ks_critical,
                ks_pass: false,
                skewness: None,
                excess_kurtosis: None,
                degenerate: true,
            });
            continue;
        }
        let mut z: Vec<f64> = vals.iter().map(|v| (v - mean) / sd).collect();
        z.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut ks = 0.0_f64;
        for (i, zi) in z.iter().enumerate() {
            let cdf = normal_cdf(*zi);
            ks = ks.max((cdf - i as f64 / r as f64).abs());
            ks = ks.max(((i + 1) as f64 / r as f64 - cdf).abs());
        }
        let m3 = z.iter().map(|v| v.powi(3)).sum::<f64>() / r as f64;
        let m4 = z.iter().map(|v| v.powi(4)).sum::<f64>() / r as f64;
        coordinates.push(CoordinateDiagnostic {
            coordinate: k,
            mean,
            sd,
            ks_distance: Some(ks),
            ks_critical,
            ks_pass: ks < ks_critical,
            skewness: Some(m3),
            excess_kurtosis: Some(m4 - 3.0),
            degenerate: false,
        });
    }
    Ok(NormalityReport {
        sample_size: r,
        ks_level,
        coordinates,
    })
}

/// Median first-stage sup-norm error over replications at one sample size,
/// measured on a deterministic interior lattice (radius `grid_radius`,
/// step `grid_step`). Supports the first-stage rate experiment.
pub fn supnorm_error_cell(
    theta0: &Direction,
    err: &ErrorSpec,
    n: usize,
    bandwidth: f64,
    grid_radius: f64,
    grid_step: f64,
    replications: usize,
    base_seed: u64,
) -> Result<f64> {
    let d = theta0.dim();
    let grid = interior_lattice(d, grid_radius, grid_step)?;
    let mut sups: Vec<f64> = (0..replications)
        .into_par_iter()
        .map(|r| -> Result<f64> {
            let seed = derive_seed(base_seed, n, r);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = simulate_binary(n, d, theta0, err, &mut rng)?;
            let fit = FirstStageFit::known_density(&data, bandwidth)?;
            sup_norm_error(&fit, |x| true_h0(x, theta0, err), &grid)
        })
        .collect::<Result<Vec<f64>>>()?;
    sups.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(quantile_sorted(&sups, 0.5))
}

/// Axis-aligned lattice of step `step` inside the ball of radius
/// `radius`, for d in {2, 3}.
fn interior_lattice(d: usize, radius: f64, step: f64) -> Result<Array2<f64>> {
    if !(radius > 0.0 && radius < 1.0) || !(step > 0.0) {
        return Err(Error::InvalidArgument(
            "lattice needs 0 < radius < 1 and step > 0".into(),
        ));
    }
    let half = (radius / step).floor() as i64;
    let mut rows: Vec<f64> = Vec::new();
    let mut count = 0usize;
    match d {
        2 => {
            for i in -half..=half {
                for jj in -half..=half {
                    let (x, y) = (i as f64 * step, jj as f64 * step);
                    if (x * x + y * y).sqrt() <= radius {
                        rows.extend_from_slice(&[x, y]);
                        count += 1;
                    }
                }
            }
        }
        3 => {
            for i in -half..=half {
                for jj in -half..=half {
                    for kk in -half..=half {
                        let (x, y, z) = (i as f64 * step, jj as f64 * step, kk as f64 * step);
                        if (x * x + y * y + z * z).sqrt() <= radius {
                            rows.extend_from_slice(&[x, y, z]);
                            count += 1;
                        }
                    }
                }
            }
        }
        _ => {
            return Err(Error::Dimension(
                "interior lattice supports d in {2, 3}".into(),
            ))
        }
    }
    Ok(Array2::from_shape_vec((count, d), rows).expect("consistent lattice shape"))
}
