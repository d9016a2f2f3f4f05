//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (run with `--nocapture` to see lines for passing tests).
//!
//! The heavy Monte Carlo runs are shared across criteria through lazy
//! statics, and every run is seeded, so the suite is deterministic.

use std::sync::OnceLock;

use ndarray::array;
use num_rational::Rational64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use tsms::criteria::{population_identity_check, MsCriterion, TsmsCriterion};
use tsms::dgp::{simulate_binary, true_h0, ErrorSpec};
use tsms::experiments::{
    derive_seed, empirical_process_probe, fit_loglog_slope, normality_diagnostic,
    run_rate_experiment, smoothing_envelope_probe, supnorm_error_cell, BandwidthRule,
    EstimatorKind, ExperimentResult, ExperimentSpec, ProbeWeight,
};
use tsms::firststage::FirstStageFit;
use tsms::geometry::{tangent_project, unit_sphere_sample, Direction};
use tsms::optimizer::{exact_argmax_2d, maximize_on_sphere, OptimizerConfig};
use tsms::rates::{classify_regime, theoretical_rate, RegimeKind};

const BASE_SEED: u64 = 20260810;

fn theta0() -> Direction {
    Direction::normalized(array![0.6, 0.8]).unwrap()
}

fn rate_grid() -> Vec<usize> {
    vec![250, 500, 1000, 2000, 4000, 8000]
}

fn rate_experiment(kind: EstimatorKind) -> ExperimentResult {
    let spec = ExperimentSpec::new(
        kind,
        2,
        theta0(),
        rate_grid(),
        200,
        BandwidthRule::RegimeOptimal,
        BASE_SEED,
    )
    .unwrap();
    run_rate_experiment(&spec).unwrap()
}

fn ms_result() -> &'static ExperimentResult {
    static CELL: OnceLock<ExperimentResult> = OnceLock::new();
    CELL.get_or_init(|| rate_experiment(EstimatorKind::Ms))
}

fn tsms_result() -> &'static ExperimentResult {
    static CELL: OnceLock<ExperimentResult> = OnceLock::new();
    CELL.get_or_init(|| rate_experiment(EstimatorKind::Tsms))
}

fn sms_result() -> &'static ExperimentResult {
    static CELL: OnceLock<ExperimentResult> = OnceLock::new();
    CELL.get_or_init(|| rate_experiment(EstimatorKind::Sms))
}

fn report(criterion: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {criterion}: {verdict} - {detail}");
    assert!(pass, "ACCEPTANCE {criterion}: FAIL - {detail}");
}

#[test]
fn a01_ms_rate_cube_root() {
    let res = ms_result();
    let ok = res.slope >= -0.43 && res.slope <= -0.23;
    report(
        "1 (maximum score rate)",
        ok,
        &format!(
            "slope {:.4} in [-0.43, -0.23], target -1/3 (se {:.4})",
            res.slope, res.slope_stderr
        ),
    );
}

#[test]
fn a02_tsms_rate_low_dim() {
    let res = tsms_result();
    let ok = res.slope >= -0.50 && res.slope <= -0.30;
    report(
        "2 (two-stage rate, low dimension)",
        ok,
        &format!(
            "slope {:.4} in [-0.50, -0.30], target -2/5 (se {:.4})",
            res.slope, res.slope_stderr
        ),
    );
}

#[test]
fn a03_sms_rate_and_equivalence() {
    let sms = sms_result();
    let tsms = tsms_result();
    let slope_ok = sms.slope >= -0.50 && sms.slope <= -0.30;
    let sms_median = sms.per_n.last().unwrap().median;
    let tsms_median = tsms.per_n.last().unwrap().median;
    let ratio = tsms_median / sms_median;
    let ratio_ok = ratio <= 2.0 && ratio >= 0.5;
    report(
        "3 (smoothed rate and asymptotic equivalence)",
        slope_ok && ratio_ok,
        &format!(
            "smoothed slope {:.4} in [-0.50, -0.30]; median ratio two-stage/smoothed at n=8000 \
             is {ratio:.3} in [0.5, 2.0]",
            sms.slope
        ),
    );
}

#[test]
fn a04_population_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(BASE_SEED ^ 0x04);
    let err = ErrorSpec::logistic(1.0).unwrap();
    let bandwidths = [0.2, 0.3, 0.5];
    let mut worst = 0.0_f64;
    for k in 0..20 {
        let data = simulate_binary(20, 2, &theta0(), &err, &mut rng).unwrap();
        let theta = unit_sphere_sample(2, &mut rng).unwrap();
        let b = bandwidths[k % bandwidths.len()];
        let (lhs, rhs) = population_identity_check(&data, b, &theta).unwrap();
        worst = worst.max((lhs - rhs).abs());
    }
    report(
        "4 (population identity)",
        worst <= 1e-5,
        &format!("max |quadrature - smoothed criterion| = {worst:.3e} <= 1e-5 over 20 triples"),
    );
}

#[test]
fn a05_smoothing_envelope() {
    let mut rng = ChaCha8Rng::seed_from_u64(BASE_SEED ^ 0x05);
    let err = ErrorSpec::logistic(1.0).unwrap();
    let t0 = theta0();

    // Empirical sup-gradient bound by central differences on a 10^4-point
    // lattice.
    let mut sup_grad = 0.0_f64;
    let cells = 100;
    for i in 0..cells {
        for j in 0..cells {
            let x0 = -0.9 + 1.8 * i as f64 / (cells - 1) as f64;
            let x1 = -0.9 + 1.8 * j as f64 / (cells - 1) as f64;
            if (x0 * x0 + x1 * x1).sqrt() >= 0.999 {
                continue;
            }
            let step = 1e-5;
            let mut g2 = 0.0;
            for k in 0..2 {
                let mut hi = array![x0, x1];
                let mut lo = hi.clone();
                hi[k] += step;
                lo[k] -= step;
                let g = (true_h0(hi.view(), &t0, &err) - true_h0(lo.view(), &t0, &err))
                    / (2.0 * step);
                g2 += g * g;
            }
            sup_grad = sup_grad.max(g2.sqrt());
        }
    }

    let deltas = [0.2, 0.1, 0.05, 0.025];
    let points = smoothing_envelope_probe(&t0, &err, &deltas, 200_000, &mut rng).unwrap();
    let envelope_ok = points
        .iter()
        .all(|p| p.max_abs_h0 <= sup_grad * p.delta);
    let fit_points: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.delta, p.mean_sq_disagree))
        .collect();
    let (exponent, _) = fit_loglog_slope(&fit_points).unwrap();
    let exponent_ok = (2.5..=3.5).contains(&exponent);
    report(
        "5 (smoothing envelope)",
        envelope_ok && exponent_ok,
        &format!(
            "max|h0| <= {sup_grad:.4}*delta on every disagreement set: {envelope_ok}; \
             squared-envelope exponent {exponent:.3} in [2.5, 3.5]"
        ),
    );
}

#[test]
fn a06_empirical_process_modulus() {
    let err = ErrorSpec::logistic(1.0).unwrap();
    let t0 = theta0();
    let deltas = [0.4, 0.2, 0.1, 0.05];
    let mut exponents = Vec::new();
    for weight in [ProbeWeight::H0, ProbeWeight::Unit] {
        let mut rng = ChaCha8Rng::seed_from_u64(BASE_SEED ^ 0x06);
        let points =
            empirical_process_probe(&t0, &err, 2000, &deltas, 200, weight, 1_000_000, &mut rng)
                .unwrap();
        let fit_points: Vec<(f64, f64)> =
            points.iter().map(|p| (p.delta, p.mean_sup)).collect();
        exponents.push(fit_loglog_slope(&fit_points).unwrap().0);
    }
    let h0_ok = (1.2..=1.8).contains(&exponents[0]);
    let unit_ok = (0.3..=0.7).contains(&exponents[1]);
    report(
        "6 (empirical-process modulus)",
        h0_ok && unit_ok,
        &format!(
            "regression-weighted exponent {:.3} in [1.2, 1.8]; unit-weighted exponent {:.3} \
             in [0.3, 0.7]",
            exponents[0], exponents[1]
        ),
    );
}

#[test]
fn a07_first_stage_supnorm_rate() {
    let err = ErrorSpec::logistic(1.0).unwrap();
    let t0 = theta0();
    let mut points = Vec::new();
    for n in [500usize, 1000, 2000, 4000, 8000, 16000, 32000] {
        let b = (n as f64).powf(-1.0 / 6.0);
        let median =
            supnorm_error_cell(&t0, &err, n, b, 0.5, 0.05, 50, BASE_SEED ^ 0x07).unwrap();
        points.push((n as f64, median));
    }
    let (slope, stderr) = fit_loglog_slope(&points).unwrap();
    let ok = (-0.43..=-0.23).contains(&slope);
    report(
        "7 (first-stage sup-norm rate)",
        ok,
        &format!("slope {slope:.4} in [-0.43, -0.23], target -1/3 up to log factors (se {stderr:.4})"),
    );
}

#[test]
fn a08_normality_diagnostic() {
    let t0 = theta0();
    let err = ErrorSpec::logistic(1.0).unwrap();
    let n = 8000usize;
    let cfg = OptimizerConfig::default_for_dim(2);
    let vectors: Vec<Vec<f64>> = (0..500usize)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(BASE_SEED ^ 0x08, n, r);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = simulate_binary(n, 2, &t0, &err, &mut rng).unwrap();
            let b = (n as f64).powf(-0.2);
            let fit = FirstStageFit::known_density(&data, b).unwrap();
            let res = tsms::optimizer::estimate(
                &tsms::optimizer::CriterionSpec::Tsms { data: &data, hhat: &fit },
                &cfg,
                &mut rng,
            )
            .unwrap();
            tangent_project(&t0, &res.argmax).unwrap().to_vec()
        })
        .collect();
    let diag = normality_diagnostic(&vectors, 0.01).unwrap();
    let mut ok = true;
    let mut details = Vec::new();
    for c in &diag.coordinates {
        if c.degenerate {
            details.push(format!("coord {} degenerate", c.coordinate));
            continue;
        }
        let skew = c.skewness.unwrap();
        ok &= c.ks_pass && skew.abs() < 0.35;
        details.push(format!(
            "coord {}: ks {:.4} (crit {:.4}), skew {:.3}",
            c.coordinate,
            c.ks_distance.unwrap(),
            c.ks_critical,
            skew
        ));
    }
    report(
        "8 (asymptotic normality diagnostic)",
        ok,
        &format!(
            "two-stage estimator, n=8000, 500 replications: {}",
            details.join("; ")
        ),
    );
}

#[test]
fn a09_rate_table_exactness() {
    let r = |num: i64, den: i64| Rational64::new(num, den);
    let mut ok = true;

    // p = 2 table: {2/5; 4/(d+6) with beta 1/3; 2/d with beta 4/d},
    // thresholds {4, 6}.
    for d in 2..=12usize {
        let (rate, regime) = theoretical_rate(d, 2).unwrap();
        ok &= regime.thresholds == (4, 6);
        if d < 4 {
            ok &= regime.kind == RegimeKind::LowDim
                && rate.alpha == r(2, 5)
                && rate.beta == r(0, 1);
        } else if d < 6 {
            ok &= regime.kind == RegimeKind::MidDim
                && rate.alpha == r(4, d as i64 + 6)
                && rate.beta == r(1, 3);
        } else {
            ok &= regime.kind == RegimeKind::HighDim
                && rate.alpha == r(2, d as i64)
                && rate.beta == r(4, d as i64);
        }
    }

    // General p: {p/(2p+1), 2p/(3p+d), p/d} with thresholds {p+2, 3p}.
    for p in [2usize, 4, 6] {
        for d in 2..=(3 * p + 3) {
            let (rate, regime) = theoretical_rate(d, p).unwrap();
            ok &= regime.thresholds == ((p + 2) as u32, (3 * p) as u32);
            let (pi, di) = (p as i64, d as i64);
            if d < p + 2 {
                ok &= rate.alpha == r(pi, 2 * pi + 1) && rate.beta == r(0, 1);
            } else if d < 3 * p {
                ok &= rate.alpha == r(2 * pi, 3 * pi + di) && rate.beta == r(1, 3);
            } else {
                ok &= rate.alpha == r(pi, di) && rate.beta == r(2 * pi, di);
            }
        }
    }
    report(
        "9 (rate-table exactness)",
        ok,
        "exact rational match of all regime exponents and thresholds",
    );
}

#[test]
fn a10_multi_index_consistency() {
    let spec = ExperimentSpec::new(
        EstimatorKind::TsmsMmi,
        2,
        theta0(),
        vec![500, 1000, 2000, 4000, 8000],
        100,
        BandwidthRule::FirstStageOptimal,
        BASE_SEED ^ 0x10,
    )
    .unwrap();
    let res = run_rate_experiment(&spec).unwrap();
    let medians: Vec<f64> = res.per_n.iter().map(|c| c.median).collect();
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    let slope_ok = res.slope <= -0.2;
    report(
        "10 (multi-index consistency)",
        decreasing && slope_ok,
        &format!(
            "medians {:?} strictly decreasing: {decreasing}; slope {:.4} <= -0.2",
            medians
                .iter()
                .map(|m| format!("{m:.4}"))
                .collect::<Vec<_>>(),
            res.slope
        ),
    );
}

#[test]
fn a11_optimizer_oracle_equivalence() {
    let t0 = Direction::from_unit(array![1.0, 0.0]).unwrap();
    let err = ErrorSpec::logistic(1.0).unwrap();
    let failures: Vec<u64> = (0..100u64)
        .into_par_iter()
        .filter(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(BASE_SEED ^ (0x11 + seed));
            let n = 50 + (*seed as usize * 37) % 451;
            let data = simulate_binary(n, 2, &t0, &err, &mut rng).unwrap();
            let cfg = OptimizerConfig {
                resolution: 720.max(16 * n),
                rounds: 8,
                shrink: 0.5,
                multistart: 64,
            };
            let (exact_value, grid_value) = if seed % 2 == 0 {
                let crit = MsCriterion::new(&data);
                let e = exact_argmax_2d(&crit, data.x()).unwrap();
                let g = maximize_on_sphere(&crit, 2, &cfg, &mut rng).unwrap();
                (e.value, g.value)
            } else {
                let b = (n as f64).powf(-0.2);
                let fit = FirstStageFit::known_density(&data, b).unwrap();
                let crit = TsmsCriterion::new(&data, &fit).unwrap();
                let e = exact_argmax_2d(&crit, data.x()).unwrap();
                let g = maximize_on_sphere(&crit, 2, &cfg, &mut rng).unwrap();
                (e.value, g.value)
            };
            grid_value != exact_value
        })
        .collect();
    report(
        "11 (optimizer oracle equivalence)",
        failures.is_empty(),
        &format!(
            "grid+refine equals the exact arrangement value on {}/100 instances{}",
            100 - failures.len(),
            if failures.is_empty() {
                String::new()
            } else {
                format!("; failing seeds {failures:?}")
            }
        ),
    );
}

#[test]
fn a12_excluded_regimes_covered_symbolically() {
    // Quantitative reproduction of the d >= 6 limit theory is out of desk
    // scale by design; the regime classification and rate calculus cover
    // those claims symbolically.
    let mut ok = true;
    for d in [6usize, 8, 10, 20] {
        let regime = classify_regime(d, 2).unwrap();
        ok &= regime.kind == RegimeKind::HighDim;
        let (rate, _) = theoretical_rate(d, 2).unwrap();
        ok &= rate.alpha == Rational64::new(2, d as i64);
    }
    // Mid-dim band where the Gaussian-process limit lives.
    for d in [4usize, 5] {
        ok &= classify_regime(d, 2).unwrap().kind == RegimeKind::MidDim;
    }
    report(
        "12 (excluded regimes, symbolic coverage)",
        ok,
        "high-dimension and mid-dimension regimes classified exactly; quantitative limit \
         laws excluded at desk scale",
    );
}
