//! Dataset CSV ingestion/emission, flat config parsing, and result
//! serialization.
//!
//! Single-index files carry the header `y,x1,...,xd`; multi-index files
//! carry `y,x1_1,...,x1_d,...,xJ_1,...,xJ_d` with `J` inferred from the
//! header. Floats are written with 17 significant digits so files round
//! trip to the exact stored values.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Array3};
use serde::Serialize;

use crate::dgp::{Dataset, ErrorSpec, MultiDataset};
use crate::error::{Error, Result};
use crate::experiments::{BandwidthRule, EstimatorKind, ExperimentResult, ExperimentSpec};
use crate::geometry::Direction;
use crate::optimizer::OptimizerConfig;

/// A parsed dataset file.
#[derive(Debug, Clone)]
pub enum LoadedDataset {
    Single(Dataset),
    Multi(MultiDataset),
}

/// 17-significant-digit decimal form; round trips through `f64` parsing.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Loads a dataset CSV, inferring single- vs multi-index from the header.
/// Rows violating the open-unit-ball support are rejected with their row
/// numbers.
pub fn load_dataset_csv(path: &Path) -> Result<LoadedDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.to_string())
        .collect();
    if header.first().map(String::as_str) != Some("y") {
        return Err(Error::DatasetParse(format!(
            "header must start with 'y', got {:?}",
            header.first()
        )));
    }
    let layout = parse_header_layout(&header[1..])?;

    let mut y_raw: Vec<f64> = Vec::new();
    let mut cells: Vec<f64> = Vec::new();
    let mut bad_rows: Vec<usize> = Vec::new();
    for (row_index, record) in reader.records().enumerate() {
        let record = record?;
        let row_number = row_index + 1;
        if record.len() != header.len() {
            return Err(Error::DatasetParse(format!(
                "row {row_number} has {} fields, expected {}",
                record.len(),
                header.len()
            )));
        }
        let mut row_vals = Vec::with_capacity(header.len());
        for (field, name) in record.iter().zip(&header) {
            let v: f64 = field.parse().map_err(|_| {
                Error::DatasetParse(format!(
                    "row {row_number}, column '{name}': non-numeric cell '{field}'"
                ))
            })?;
            row_vals.push(v);
        }
        // Support check per covariate block.
        let (j, d) = match layout {
            HeaderLayout::Single { d } => (1, d),
            HeaderLayout::Multi { j, d } => (j, d),
        };
        let mut ok = true;
        for block in 0..j {
            let from = 1 + block * d;
            let norm2: f64 = row_vals[from..from + d].iter().map(|v| v * v).sum();
            if !(norm2.sqrt() < 1.0) {
                ok = false;
            }
        }
        if !ok {
            bad_rows.push(row_number);
            continue;
        }
        y_raw.push(row_vals[0]);
        cells.extend_from_slice(&row_vals[1..]);
    }
    if !bad_rows.is_empty() {
        return Err(Error::DatasetParse(format!(
            "rows outside the open unit ball: {}",
            bad_rows
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }
    if y_raw.is_empty() {
        return Err(Error::DatasetParse("dataset has no rows".into()));
    }

    match layout {
        HeaderLayout::Single { d } => {
            let n = y_raw.len();
            let y: Vec<u8> = y_raw
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    if *v == 0.0 {
                        Ok(0u8)
                    } else if *v == 1.0 {
                        Ok(1u8)
                    } else {
                        Err(Error::DatasetParse(format!(
                            "row {}: binary outcome must be 0 or 1, got {v}",
                            i + 1
                        )))
                    }
                })
                .collect::<Result<_>>()?;
            let x = Array2::from_shape_vec((n, d), cells)
                .map_err(|e| Error::DatasetParse(e.to_string()))?;
            Ok(LoadedDataset::Single(Dataset::new(y, x)?))
        }
        HeaderLayout::Multi { j, d } => {
            let n = y_raw.len();
            let x = Array3::from_shape_vec((n, j, d), cells)
                .map_err(|e| Error::DatasetParse(e.to_string()))?;
            Ok(LoadedDataset::Multi(MultiDataset::new(y_raw, x)?))
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum HeaderLayout {
    Single { d: usize },
    Multi { j: usize, d: usize },
}

fn parse_header_layout(columns: &[String]) -> Result<HeaderLayout> {
    if columns.is_empty() {
        return Err(Error::DatasetParse("header has no covariate columns".into()));
    }
    if columns[0] == "x1" {
        // Single index: x1..xd in order.
        for (k, name) in columns.iter().enumerate() {
            if *name != format!("x{}", k + 1) {
                return Err(Error::DatasetParse(format!(
                    "malformed header: expected x{}, got '{name}'",
                    k + 1
                )));
            }
        }
        Ok(HeaderLayout::Single { d: columns.len() })
    } else if columns[0] == "x1_1" {
        // Multi index: x1_1..x1_d, x2_1.., .., xJ_d.
        let d = columns
            .iter()
            .take_while(|name| name.starts_with("x1_"))
            .count();
        if d == 0 || columns.len() % d != 0 {
            return Err(Error::DatasetParse(format!(
                "malformed multi-index header: {} columns with block size {d}",
                columns.len()
            )));
        }
        let j = columns.len() / d;
        for block in 0..j {
            for k in 0..d {
                let want = format!("x{}_{}", block + 1, k + 1);
                if columns[block * d + k] != want {
                    return Err(Error::DatasetParse(format!(
                        "malformed header: expected {want}, got '{}'",
                        columns[block * d + k]
                    )));
                }
            }
        }
        Ok(HeaderLayout::Multi { j, d })
    } else {
        Err(Error::DatasetParse(format!(
            "malformed header: first covariate column must be x1 or x1_1, got '{}'",
            columns[0]
        )))
    }
}

/// Writes a single-index dataset as CSV.
pub fn save_dataset_csv(data: &Dataset, path: &Path) -> Result<()> {
    let mut out = std::fs::File::create(path)?;
    let header: Vec<String> = std::iter::once("y".to_string())
        .chain((1..=data.d()).map(|k| format!("x{k}")))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for (yi, row) in data.y().iter().zip(data.x().rows()) {
        let mut fields = vec![yi.to_string()];
        fields.extend(row.iter().map(|v| format_float(*v)));
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Writes a multi-index dataset as CSV.
pub fn save_multi_dataset_csv(data: &MultiDataset, path: &Path) -> Result<()> {
    let mut out = std::fs::File::create(path)?;
    let mut header = vec!["y".to_string()];
    for j in 1..=data.j() {
        for k in 1..=data.d() {
            header.push(format!("x{j}_{k}"));
        }
    }
    writeln!(out, "{}", header.join(","))?;
    for i in 0..data.n() {
        let mut fields = vec![format_float(data.y()[i])];
        fields.extend(data.flat_row(i).iter().map(|v| format_float(*v)));
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Writes the per-n summary table `n, median, q25, q75, mean`.
pub fn save_summary_csv(result: &ExperimentResult, path: &Path) -> Result<()> {
    let mut out = std::fs::File::create(path)?;
    writeln!(out, "n,median,q25,q75,mean")?;
    for cell in &result.per_n {
        writeln!(
            out,
            "{},{},{},{},{}",
            cell.n,
            format_float(cell.median),
            format_float(cell.q25),
            format_float(cell.q75),
            format_float(cell.mean)
        )?;
    }
    Ok(())
}

/// Serializes any result as pretty JSON (struct field order is
/// declaration order, so key order is stable).
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(file, value)?;
    Ok(())
}

/// Parses flat `key = value` config text: one pair per line, `#` comments.
pub fn parse_flat_config(text: &str) -> Result<HashMap<String, String>> {
    let mut map = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::ConfigParse(format!(
                "line {}: expected 'key = value', got '{raw}'",
                lineno + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// Parses an error family spec such as `logistic:1.0`, `gaussian:0.5`,
/// `hetlogistic:1.0:0.5,-0.2`, or `degenerate`.
pub fn parse_error_spec(text: &str) -> Result<ErrorSpec> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = |msg: &str| Error::ConfigParse(format!("error spec '{text}': {msg}"));
    match parts[0] {
        "logistic" => {
            let scale: f64 = parts
                .get(1)
                .ok_or_else(|| bad("missing scale"))?
                .parse()
                .map_err(|_| bad("non-numeric scale"))?;
            ErrorSpec::logistic(scale)
        }
        "gaussian" => {
            let sd: f64 = parts
                .get(1)
                .ok_or_else(|| bad("missing sd"))?
                .parse()
                .map_err(|_| bad("non-numeric sd"))?;
            ErrorSpec::gaussian(sd)
        }
        "hetlogistic" => {
            let base: f64 = parts
                .get(1)
                .ok_or_else(|| bad("missing base scale"))?
                .parse()
                .map_err(|_| bad("non-numeric base scale"))?;
            let slope: Vec<f64> = parts
                .get(2)
                .ok_or_else(|| bad("missing slope vector"))?
                .split(',')
                .map(|s| s.trim().parse().map_err(|_| bad("non-numeric slope")))
                .collect::<Result<_>>()?;
            ErrorSpec::heteroskedastic_logistic(base, slope)
        }
        "degenerate" => Ok(ErrorSpec::Degenerate),
        other => Err(bad(&format!("unknown family '{other}'"))),
    }
}

/// Parses a bandwidth rule: `regime`, `first-stage`, or a positive
/// float.
pub fn parse_bandwidth_rule(text: &str) -> Result<BandwidthRule> {
    match text {
        "regime" | "regime-optimal" => Ok(BandwidthRule::RegimeOptimal),
        "first-stage" | "first-stage-optimal" => Ok(BandwidthRule::FirstStageOptimal),
        other => {
            let b: f64 = other.parse().map_err(|_| {
                Error::ConfigParse(format!(
                    "bandwidth must be 'regime', 'first-stage', or a float; got '{other}'"
                ))
            })?;
            if b > 0.0 {
                Ok(BandwidthRule::Fixed(b))
            } else {
                Err(Error::ConfigParse(format!(
                    "fixed bandwidth must be positive, got {b}"
                )))
            }
        }
    }
}

/// Parses a comma-separated direction and normalizes it.
pub fn parse_direction(text: &str) -> Result<Direction> {
    let coords: Vec<f64> = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::ConfigParse(format!("non-numeric coordinate '{s}'")))
        })
        .collect::<Result<_>>()?;
    Direction::normalized(ndarray::Array1::from_vec(coords))
}

/// Builds an [`ExperimentSpec`] from a flat config map.
pub fn experiment_spec_from_config(map: &HashMap<String, String>) -> Result<ExperimentSpec> {
    let get = |key: &str| -> Result<&String> {
        map.get(key)
            .ok_or_else(|| Error::ConfigParse(format!("missing key '{key}'")))
    };
    let parse_usize = |key: &str| -> Result<usize> {
        get(key)?
            .parse()
            .map_err(|_| Error::ConfigParse(format!("key '{key}' must be a positive integer")))
    };

    let estimator = match get("estimator")?.as_str() {
        "ms" => EstimatorKind::Ms,
        "sms" => EstimatorKind::Sms,
        "tsms" => EstimatorKind::Tsms,
        "tsms-oracle" => EstimatorKind::TsmsOracle,
        "tsms-mmi" => EstimatorKind::TsmsMmi,
        other => {
            return Err(Error::ConfigParse(format!("unknown estimator '{other}'")));
        }
    };
    let d = parse_usize("d")?;
    let theta0 = match map.get("theta0") {
        Some(text) => parse_direction(text)?,
        None => {
            let mut v = ndarray::Array1::<f64>::zeros(d);
            v[0] = 1.0;
            Direction::from_unit(v)?
        }
    };
    let n_grid: Vec<usize> = get("n_grid")?
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::ConfigParse("n_grid must be comma-separated integers".into()))
        })
        .collect::<Result<_>>()?;

    let mut spec = ExperimentSpec::new(
        estimator,
        d,
        theta0,
        n_grid,
        parse_usize("replications")?,
        parse_bandwidth_rule(get("bandwidth")?)?,
        get("seed")?
            .parse()
            .map_err(|_| Error::ConfigParse("seed must be a u64".into()))?,
    )?;
    if let Some(j) = map.get("j") {
        spec.j = j
            .parse()
            .map_err(|_| Error::ConfigParse("j must be a positive integer".into()))?;
    }
    if let Some(err) = map.get("error") {
        spec.error = parse_error_spec(err)?;
    }
    if let Some(sd) = map.get("noise_sd") {
        spec.noise_sd = sd
            .parse()
            .map_err(|_| Error::ConfigParse("noise_sd must be a float".into()))?;
    }
    let mut optimizer = OptimizerConfig::default_for_dim(d);
    if let Some(v) = map.get("resolution") {
        optimizer.resolution = v
            .parse()
            .map_err(|_| Error::ConfigParse("resolution must be an integer".into()))?;
    }
    if let Some(v) = map.get("rounds") {
        optimizer.rounds = v
            .parse()
            .map_err(|_| Error::ConfigParse("rounds must be an integer".into()))?;
    }
    if let Some(v) = map.get("shrink") {
        optimizer.shrink = v
            .parse()
            .map_err(|_| Error::ConfigParse("shrink must be a float".into()))?;
    }
    if let Some(v) = map.get("multistart") {
        optimizer.multistart = v
            .parse()
            .map_err(|_| Error::ConfigParse("multistart must be an integer".into()))?;
    }
    spec.optimizer = optimizer;
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::simulate_binary;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn csv_parses_two_point_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, "y,x1,x2\n1,0.5,0\n0,-0.5,0\n").unwrap();
        let LoadedDataset::Single(data) = load_dataset_csv(&path).unwrap() else {
            panic!("expected single-index dataset");
        };
        assert_eq!(data.n(), 2);
        assert_eq!(data.d(), 2);
        assert_eq!(data.y(), &[1, 0]);
    }

    #[test]
    fn csv_rejects_out_of_ball_rows_by_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, "y,x1,x2\n1,1.2,0\n0,0.1,0\n").unwrap();
        let err = load_dataset_csv(&path).unwrap_err();
        assert!(err.to_string().contains("rows outside"), "{err}");
        assert!(err.to_string().contains('1'), "{err}");
    }

    #[test]
    fn csv_infers_multi_index_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(
            &path,
            "y,x1_1,x1_2,x2_1,x2_2\n0.25,0.1,0.2,-0.1,0.3\n-0.5,0.0,0.1,0.2,0.2\n",
        )
        .unwrap();
        let LoadedDataset::Multi(data) = load_dataset_csv(&path).unwrap() else {
            panic!("expected multi-index dataset");
        };
        assert_eq!(data.n(), 2);
        assert_eq!(data.j(), 2);
        assert_eq!(data.d(), 2);
    }

    #[test]
    fn csv_rejects_malformed_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, "y,a,b\n1,0.5,0\n").unwrap();
        assert!(load_dataset_csv(&path).is_err());
        std::fs::write(&path, "y,x1,x2\n1,0.5,zzz\n").unwrap();
        assert!(load_dataset_csv(&path).is_err());
        std::fs::write(&path, "y,x1,x2\n0.5,0.5,0\n").unwrap();
        assert!(load_dataset_csv(&path).is_err());
    }

    #[test]
    fn csv_round_trips_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let theta0 = Direction::from_unit(ndarray::array![1.0, 0.0]).unwrap();
        let err = ErrorSpec::logistic(1.0).unwrap();
        let data = simulate_binary(50, 2, &theta0, &err, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("roundtrip.csv");
        save_dataset_csv(&data, &path).unwrap();
        let LoadedDataset::Single(back) = load_dataset_csv(&path).unwrap() else {
            panic!("expected single-index dataset");
        };
        assert_eq!(data, back);
    }

    #[test]
    fn flat_config_parses_comments_and_pairs() {
        let text = "# comment\nestimator = ms\n\nn_grid = 1,2 # trailing\n";
        let map = parse_flat_config(text).unwrap();
        assert_eq!(map["estimator"], "ms");
        assert_eq!(map["n_grid"], "1,2");
        assert!(parse_flat_config("just a line").is_err());
    }

    #[test]
    fn error_spec_parsing() {
        assert!(matches!(
            parse_error_spec("logistic:0.7").unwrap(),
            ErrorSpec::Logistic { .. }
        ));
        assert!(matches!(
            parse_error_spec("hetlogistic:1.0:0.5,-0.2").unwrap(),
            ErrorSpec::HeteroskedasticLogistic { .. }
        ));
        assert!(parse_error_spec("cauchy:1").is_err());
        assert!(parse_error_spec("logistic:-1").is_err());
    }

    #[test]
    fn experiment_config_end_to_end() {
        let text = "\
estimator = tsms
d = 2
n_grid = 100,200,400,800
replications = 50
bandwidth = regime
seed = 11
";
        let map = parse_flat_config(text).unwrap();
        let spec = experiment_spec_from_config(&map).unwrap();
        assert_eq!(spec.estimator, EstimatorKind::Tsms);
        assert_eq!(spec.n_grid, vec![100, 200, 400, 800]);
        assert_eq!(spec.bandwidth_rule, BandwidthRule::RegimeOptimal);
    }
}
