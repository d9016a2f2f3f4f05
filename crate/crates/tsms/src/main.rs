//! Command-line interface over the estimation library.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use tsms::dgp::LinkSpec;
use tsms::error::Error;
use tsms::experiments::{
    empirical_process_probe, fit_loglog_slope, run_rate_experiment, smoothing_envelope_probe,
    supnorm_error_cell, ProbeWeight,
};
use tsms::firststage::FirstStageFit;
use tsms::geometry::Direction;
use tsms::io::{
    experiment_spec_from_config, load_dataset_csv, parse_bandwidth_rule, parse_direction,
    parse_error_spec, parse_flat_config, save_dataset_csv, save_multi_dataset_csv,
    save_summary_csv, write_json, LoadedDataset,
};
use tsms::optimizer::{estimate, CriterionSpec, OptMethod, OptimizerConfig};
use tsms::rates::{classify_regime, optimal_bandwidth, theoretical_rate};

#[derive(Parser)]
#[command(
    name = "tsms",
    about = "Two-stage maximum score estimation: simulation, estimation, \
             rate tables, and Monte Carlo experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EstimatorArg {
    Ms,
    Sms,
    Tsms,
    TsmsMmi,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProbeKind {
    Envelope,
    EmpiricalProcess,
    Supnorm,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset and write it as CSV.
    Simulate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        seed: u64,
        /// Unit direction as comma-separated coordinates; defaults to the
        /// first canonical basis vector.
        #[arg(long)]
        theta0: Option<String>,
        /// Error family: logistic:<scale>, gaussian:<sd>,
        /// hetlogistic:<base>:<s1,..,sd>, degenerate.
        #[arg(long, default_value = "logistic:1.0")]
        error: String,
        /// Number of covariate blocks; values >= 2 produce a multi-index
        /// dataset.
        #[arg(long, default_value_t = 1)]
        j: usize,
        /// Outcome noise standard deviation (multi-index only).
        #[arg(long, default_value_t = 0.25)]
        noise_sd: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate a direction from a dataset CSV and print JSON.
    Estimate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        estimator: EstimatorArg,
        /// regime, first-stage, or a positive float.
        #[arg(long, default_value = "regime")]
        bandwidth: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sphere grid size (defaults to the dimension default).
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Run a Monte Carlo rate experiment from a flat config file.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_json: PathBuf,
        #[arg(long)]
        out_csv: PathBuf,
    },
    /// Print the convergence-rate table for (d, p, n).
    Rates {
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 2)]
        p: usize,
        #[arg(long)]
        n: usize,
    },
    /// Run a diagnostic probe and print JSON.
    Probe {
        #[arg(long, value_enum)]
        kind: ProbeKind,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long)]
        theta0: Option<String>,
        #[arg(long, default_value = "logistic:1.0")]
        error: String,
        #[arg(long, default_value = "0.2,0.1,0.05,0.025")]
        deltas: String,
        /// Draws per delta (envelope probe).
        #[arg(long, default_value_t = 200_000)]
        m: usize,
        /// Sample size per replication (empirical-process probe).
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 200)]
        reps: usize,
        /// h0-weighted or unit-weighted process.
        #[arg(long, default_value = "h0")]
        weight: String,
        #[arg(long, default_value_t = 1_000_000)]
        oracle_size: usize,
        /// Sample sizes for the sup-norm rate probe.
        #[arg(long, default_value = "500,1000,2000,4000,8000,16000,32000")]
        n_grid: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Serialize)]
struct EstimateOutput {
    estimator: String,
    theta_hat: Vec<f64>,
    value: f64,
    bandwidth: Option<f64>,
    evaluations: usize,
    method: String,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Ok(threads) = std::env::var("TSMS_THREADS") {
        match threads.parse::<usize>() {
            Ok(k) if k >= 1 => {
                // Ignore failure: the pool may already exist in-process.
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(k)
                    .build_global();
            }
            _ => {
                eprintln!("error[validation]: TSMS_THREADS must be a positive integer");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let class = match &e {
                Error::InvalidArgument(_)
                | Error::Dimension(_)
                | Error::DatasetParse(_)
                | Error::ConfigParse(_) => "validation",
                _ => "runtime",
            };
            eprintln!("error[{class}]: {e}");
            ExitCode::from(if class == "validation" { 2 } else { 1 })
        }
    }
}

fn default_theta0(d: usize, text: &Option<String>) -> Result<Direction, Error> {
    match text {
        Some(t) => {
            let dir = parse_direction(t)?;
            if dir.dim() != d {
                return Err(Error::Dimension(format!(
                    "theta0 has dimension {}, expected {d}",
                    dir.dim()
                )));
            }
            Ok(dir)
        }
        None => {
            let mut v = ndarray::Array1::<f64>::zeros(d);
            v[0] = 1.0;
            Direction::from_unit(v)
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate {
            n,
            d,
            seed,
            theta0,
            error,
            j,
            noise_sd,
            out,
        } => {
            let theta0 = default_theta0(d, &theta0)?;
            let err = parse_error_spec(&error)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            if j >= 2 {
                let data = tsms::dgp::simulate_multi_index(
                    n,
                    j,
                    d,
                    &theta0,
                    LinkSpec::default(),
                    noise_sd,
                    &mut rng,
                )?;
                save_multi_dataset_csv(&data, &out)?;
            } else {
                let data = tsms::dgp::simulate_binary(n, d, &theta0, &err, &mut rng)?;
                save_dataset_csv(&data, &out)?;
            }
            Ok(())
        }
        Command::Estimate {
            input,
            estimator,
            bandwidth,
            seed,
            resolution,
        } => {
            let loaded = load_dataset_csv(&input)?;
            let rule = parse_bandwidth_rule(&bandwidth)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (label, d, d_fs, n) = match (&loaded, estimator) {
                (LoadedDataset::Single(data), EstimatorArg::Ms) => {
                    ("ms", data.d(), data.d(), data.n())
                }
                (LoadedDataset::Single(data), EstimatorArg::Sms) => {
                    ("sms", data.d(), data.d(), data.n())
                }
                (LoadedDataset::Single(data), EstimatorArg::Tsms) => {
                    ("tsms", data.d(), data.d(), data.n())
                }
                (LoadedDataset::Multi(data), EstimatorArg::TsmsMmi) => {
                    ("tsms-mmi", data.d(), data.j() * data.d(), data.n())
                }
                (LoadedDataset::Single(_), EstimatorArg::TsmsMmi) => {
                    return Err(Error::InvalidArgument(
                        "tsms-mmi needs a multi-index dataset".into(),
                    ));
                }
                (LoadedDataset::Multi(_), _) => {
                    return Err(Error::InvalidArgument(
                        "multi-index datasets support only the tsms-mmi estimator".into(),
                    ));
                }
            };
            let mut cfg = OptimizerConfig::default_for_dim(d);
            if let Some(r) = resolution {
                cfg.resolution = r;
            }
            let needs_bandwidth = estimator != EstimatorArg::Ms;
            let b = if needs_bandwidth {
                Some(rule.bandwidth(d, d_fs, n)?)
            } else {
                None
            };
            let result = match (&loaded, estimator) {
                (LoadedDataset::Single(data), EstimatorArg::Ms) => {
                    estimate(&CriterionSpec::Ms { data }, &cfg, &mut rng)?
                }
                (LoadedDataset::Single(data), EstimatorArg::Sms) => estimate(
                    &CriterionSpec::Sms {
                        data,
                        bandwidth: b.unwrap(),
                    },
                    &cfg,
                    &mut rng,
                )?,
                (LoadedDataset::Single(data), EstimatorArg::Tsms) => {
                    let fit = FirstStageFit::known_density(data, b.unwrap())?;
                    estimate(&CriterionSpec::Tsms { data, hhat: &fit }, &cfg, &mut rng)?
                }
                (LoadedDataset::Multi(data), EstimatorArg::TsmsMmi) => {
                    let fit = FirstStageFit::multi_index(data, b.unwrap())?;
                    estimate(&CriterionSpec::TsmsMmi { data, hhat: &fit }, &cfg, &mut rng)?
                }
                _ => unreachable!("combinations rejected above"),
            };
            let output = EstimateOutput {
                estimator: label.to_string(),
                theta_hat: result.argmax.coords().to_vec(),
                value: result.value,
                bandwidth: b,
                evaluations: result.evaluations,
                method: match result.method {
                    OptMethod::Exact2d => "exact2d".into(),
                    OptMethod::GridRefine => "grid-refine".into(),
                },
            };
            println!("{}", serde_json::to_string_pretty(&output)?);
            Ok(())
        }
        Command::Experiment {
            config,
            out_json,
            out_csv,
        } => {
            let text = std::fs::read_to_string(&config)?;
            let spec = experiment_spec_from_config(&parse_flat_config(&text)?)?;
            let result = run_rate_experiment(&spec)?;
            write_json(&result, &out_json)?;
            save_summary_csv(&result, &out_csv)?;
            println!(
                "estimator = {}\nslope = {:.6}\nslope_stderr = {:.6}",
                result.estimator, result.slope, result.slope_stderr
            );
            Ok(())
        }
        Command::Rates { d, p, n } => {
            let (rate, regime) = theoretical_rate(d, p)?;
            println!("d = {d}");
            println!("p = {p}");
            println!("n = {n}");
            println!("regime = {}", regime.kind.label());
            println!(
                "thresholds = ({}, {})",
                regime.thresholds.0, regime.thresholds.1
            );
            println!("alpha = {}", rate.alpha);
            println!("beta = {}", rate.beta);
            println!("rate = {}", rate.pretty());
            if p == 2 {
                println!("bandwidth = {}", optimal_bandwidth(d, n, p)?);
            }
            let regime_row = |dd: usize| -> Result<String, Error> {
                let (r, reg) = theoretical_rate(dd, p)?;
                Ok(format!(
                    "d = {dd}: regime = {}, rate = {}",
                    reg.kind.label(),
                    r.pretty()
                ))
            };
            println!("table:");
            for dd in [2, classify_regime(d, p)?.thresholds.0 as usize, 3 * p] {
                println!("  {}", regime_row(dd)?);
            }
            Ok(())
        }
        Command::Probe {
            kind,
            d,
            theta0,
            error,
            deltas,
            m,
            n,
            reps,
            weight,
            oracle_size,
            n_grid,
            seed,
        } => {
            let theta0 = default_theta0(d, &theta0)?;
            let err = parse_error_spec(&error)?;
            let delta_list: Vec<f64> = deltas
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| Error::ConfigParse("deltas must be floats".into()))
                })
                .collect::<Result<_, Error>>()?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            match kind {
                ProbeKind::Envelope => {
                    let points = smoothing_envelope_probe(&theta0, &err, &delta_list, m, &mut rng)?;
                    let fit_points: Vec<(f64, f64)> = points
                        .iter()
                        .filter(|p| p.mean_sq_disagree > 0.0)
                        .map(|p| (p.delta, p.mean_sq_disagree))
                        .collect();
                    let exponent = fit_loglog_slope(&fit_points).ok().map(|(s, _)| s);
                    #[derive(Serialize)]
                    struct Out<T: Serialize> {
                        points: T,
                        mean_sq_exponent: Option<f64>,
                    }
                    println!(
                        "{}",
                        serde_json::to_string_pretty(&Out {
                            points,
                            mean_sq_exponent: exponent
                        })?
                    );
                }
                ProbeKind::EmpiricalProcess => {
                    let w = match weight.as_str() {
                        "h0" => ProbeWeight::H0,
                        "unit" => ProbeWeight::Unit,
                        other => {
                            return Err(Error::ConfigParse(format!(
                                "weight must be 'h0' or 'unit', got '{other}'"
                            )));
                        }
                    };
                    let points = empirical_process_probe(
                        &theta0,
                        &err,
                        n,
                        &delta_list,
                        reps,
                        w,
                        oracle_size,
                        &mut rng,
                    )?;
                    let fit_points: Vec<(f64, f64)> =
                        points.iter().map(|p| (p.delta, p.mean_sup)).collect();
                    let exponent = fit_loglog_slope(&fit_points).ok().map(|(s, _)| s);
                    #[derive(Serialize)]
                    struct Out<T: Serialize> {
                        points: T,
                        exponent: Option<f64>,
                    }
                    println!(
                        "{}",
                        serde_json::to_string_pretty(&Out { points, exponent })?
                    );
                }
                ProbeKind::Supnorm => {
                    let sizes: Vec<usize> = n_grid
                        .split(',')
                        .map(|s| {
                            s.trim().parse().map_err(|_| {
                                Error::ConfigParse("n_grid must be integers".into())
                            })
                        })
                        .collect::<Result<_, Error>>()?;
                    #[derive(Serialize)]
                    struct SupnormPoint {
                        n: usize,
                        bandwidth: f64,
                        median_sup_error: f64,
                    }
                    let mut points = Vec::new();
                    for nn in &sizes {
                        let b = (*nn as f64).powf(-1.0 / (d as f64 + 4.0));
                        let med = supnorm_error_cell(
                            &theta0,
                            &err,
                            *nn,
                            b,
                            0.5,
                            0.05,
                            reps.max(50),
                            seed,
                        )?;
                        points.push(SupnormPoint {
                            n: *nn,
                            bandwidth: b,
                            median_sup_error: med,
                        });
                    }
                    let fit_points: Vec<(f64, f64)> = points
                        .iter()
                        .map(|p| (p.n as f64, p.median_sup_error))
                        .collect();
                    let (slope, stderr) = fit_loglog_slope(&fit_points)?;
                    #[derive(Serialize)]
                    struct Out<T: Serialize> {
                        points: T,
                        slope: f64,
                        slope_stderr: f64,
                    }
                    println!(
                        "{}",
                        serde_json::to_string_pretty(&Out {
                            points,
                            slope,
                            slope_stderr: stderr
                        })?
                    );
                }
            }
            Ok(())
        }
    }
}
