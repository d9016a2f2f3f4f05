//! Global criterion maximization over the unit sphere.
//!
//! Score-type criteria are piecewise constant with zero derivative almost
//! everywhere, so only direct search is sound. Two paths:
//!
//! - `exact_argmax_2d` enumerates, for d = 2, every angle at which some
//!   observation's index changes sign and evaluates the criterion at all
//!   arc midpoints and breakpoints. Piecewise-constant criteria change
//!   value only at those angles, so the scan is exhaustive.
//! - `maximize_on_sphere` evaluates a deterministic sphere grid, then runs
//!   shrinking random pattern search in the tangent space from the best
//!   grid cells. Smooth criteria share this path.
//!
//! Everything is deterministic given the configuration and seed, including
//! tie-breaking.

use ndarray::{Array1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::criteria::{
    Criterion, MsCriterion, SmsCriterion, TsmsCriterion, TsmsMmiCriterion,
};
use crate::dgp::{Dataset, MultiDataset};
use crate::error::{Error, Result};
use crate::firststage::FirstStageFit;
use crate::geometry::{sphere_grid, Direction};

/// Random probes per refinement round and start point: scales with the
/// grid so refinement can resolve value slivers the grid steps over.
fn probes_per_round(resolution: usize) -> usize {
    (resolution / 8).max(48)
}

/// Deterministic tie rule: among equal criterion values keep the direction
/// with lexicographically smallest coordinates.
fn lex_less(a: &Direction, b: &Direction) -> bool {
    for (x, y) in a.coords().iter().zip(b.coords().iter()) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

/// Search configuration for [`maximize_on_sphere`].
#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    /// Sphere grid size for the global stage.
    pub resolution: usize,
    /// Local refinement rounds per start.
    pub rounds: usize,
    /// Radius contraction per round, in (0, 1).
    pub shrink: f64,
    /// Number of top grid cells kept as refinement starts.
    pub multistart: usize,
}

impl OptimizerConfig {
    /// Defaults sized so the d = 2 grid path reproduces the exact solver on
    /// moderate instances: resolution 720 (d=2), 4096 (d=3), 8192*d above.
    pub fn default_for_dim(d: usize) -> Self {
        let resolution = match d {
            0..=2 => 720,
            3 => 4096,
            _ => 8192 * d,
        };
        Self {
            resolution,
            rounds: 8,
            shrink: 0.5,
            multistart: 8,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.resolution < 8 {
            return Err(Error::InvalidArgument(format!(
                "resolution must be >= 8, got {}",
                self.resolution
            )));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "shrink factor must lie in (0, 1), got {}",
                self.shrink
            )));
        }
        if self.multistart == 0 {
            return Err(Error::InvalidArgument("multistart must be >= 1".into()));
        }
        Ok(())
    }

    /// Total refinement evaluations, spent regardless of progress.
    pub fn refinement_budget(&self) -> usize {
        self.multistart * self.rounds * probes_per_round(self.resolution)
    }
}

/// Which search path produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptMethod {
    Exact2d,
    GridRefine,
}

/// Maximization outcome. `value` is the criterion evaluated at `argmax`, so
/// re-evaluating reproduces it bit for bit.
#[derive(Debug, Clone)]
pub struct OptResult {
    pub argmax: Direction,
    pub value: f64,
    pub evaluations: usize,
    pub method: OptMethod,
}

/// Exact global maximizer for d = 2 criteria that are piecewise constant in
/// the signs of `X_i' theta`.
///
/// Enumerates the at most `2n` breakpoint angles where some row's index
/// changes sign, and evaluates the criterion at every breakpoint (the
/// indicator convention is closed at zero) and at every arc midpoint. Ties
/// go to the smallest angle in `[0, 2*pi)`.
pub fn exact_argmax_2d<C: Criterion>(criterion: &C, data_rows: ArrayView2<'_, f64>) -> Result<OptResult> {
    if criterion.dim() != 2 || data_rows.ncols() != 2 {
        return Err(Error::Dimension(
            "exact_argmax_2d requires a two-dimensional criterion and rows".into(),
        ));
    }
    let tau = 2.0 * std::f64::consts::PI;
    let mut breakpoints = Vec::with_capacity(2 * data_rows.nrows());
    for row in data_rows.rows() {
        if row[0] == 0.0 && row[1] == 0.0 {
            continue;
        }
        let phi = row[1].atan2(row[0]);
        for offset in [0.5 * std::f64::consts::PI, -0.5 * std::f64::consts::PI] {
            let mut a = (phi + offset) % tau;
            if a < 0.0 {
                a += tau;
            }
            breakpoints.push(a);
        }
    }
    breakpoints.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breakpoints.dedup();

    let mut candidates = Vec::with_capacity(2 * breakpoints.len().max(1));
    if breakpoints.is_empty() {
        candidates.push(0.0);
    } else {
        for (k, angle) in breakpoints.iter().enumerate() {
            candidates.push(*angle);
            let next = if k + 1 < breakpoints.len() {
                breakpoints[k + 1]
            } else {
                breakpoints[0] + tau
            };
            let mut mid = 0.5 * (angle + next) % tau;
            if mid < 0.0 {
                mid += tau;
            }
            candidates.push(mid);
        }
    }

    let values: Vec<f64> = candidates
        .par_iter()
        .map(|angle| criterion.value(&Direction::from_angle(*angle)))
        .collect();
    // Ties break by smallest angle; the wraparound arc midpoint can carry
    // the smallest angle despite being generated last.
    let mut best_angle = candidates[0];
    let mut best_value = values[0];
    for (angle, value) in candidates.iter().zip(&values).skip(1) {
        if *value > best_value || (*value == best_value && *angle < best_angle) {
            best_value = *value;
            best_angle = *angle;
        }
    }

    let argmax = Direction::from_angle(best_angle);
    let value = criterion.value(&argmax);
    Ok(OptResult {
        argmax,
        value,
        evaluations: candidates.len(),
        method: OptMethod::Exact2d,
    })
}

/// Grid search over a deterministic sphere grid followed by shrinking
/// random pattern search from the best `multistart` cells.
pub fn maximize_on_sphere<C: Criterion, R: Rng + ?Sized>(
    criterion: &C,
    d: usize,
    cfg: &OptimizerConfig,
    rng: &mut R,
) -> Result<OptResult> {
    cfg.validate()?;
    if criterion.dim() != d {
        return Err(Error::Dimension(format!(
            "criterion dimension {} does not match d = {d}",
            criterion.dim()
        )));
    }
    let grid = sphere_grid(d, cfg.resolution)?;
    let values: Vec<f64> = grid
        .par_iter()
        .map(|theta| criterion.value(theta))
        .collect();

    // Best grid point under the lexicographic tie rule.
    let mut grid_best = 0usize;
    for k in 1..grid.len() {
        if values[k] > values[grid_best]
            || (values[k] == values[grid_best] && lex_less(&grid[k], &grid[grid_best]))
        {
            grid_best = k;
        }
    }

    // Typical grid spacing, the base scale of the refinement radius.
    let spacing = match d {
        2 => 2.0 * std::f64::consts::PI / cfg.resolution as f64,
        _ => 2.0 * std::f64::consts::PI / (cfg.resolution as f64).powf(1.0 / (d as f64 - 1.0)),
    };

    // Start cells: top `multistart` grid values. Piecewise-constant
    // criteria tie over wide plateaus and near-tie across neighboring grid
    // cells, so equal-value tiers are sampled evenly over their extent and
    // starts keep a minimum separation (distinct basins).
    let starts = select_starts(&grid, &values, cfg.multistart, 3.0 * spacing);

    // Each start's initial radius covers the gap to its neighboring starts
    // (d = 2), so spread starts jointly cover a tied plateau.
    let radii = start_radii(&grid, &starts, spacing, d);

    let probes = probes_per_round(cfg.resolution);
    let seeds: Vec<u64> = (0..starts.len()).map(|_| rng.gen()).collect();
    let refined: Vec<(Direction, f64)> = starts
        .par_iter()
        .zip(radii.par_iter())
        .zip(seeds.par_iter())
        .map(|((start, r0), seed)| {
            let mut local = ChaCha8Rng::seed_from_u64(*seed);
            let mut center = grid[*start].clone();
            let mut best_dir = center.clone();
            let mut best = values[*start];
            let mut radius = *r0;
            for _ in 0..cfg.rounds {
                let mut round_best: Option<(Direction, f64)> = None;
                for p in 0..probes {
                    let probe = tangent_probe(&center, radius, p, probes, &mut local);
                    let v = criterion.value(&probe);
                    if round_best.as_ref().map_or(true, |(_, rv)| v > *rv) {
                        round_best = Some((probe, v));
                    }
                }
                if let Some((probe, v)) = round_best {
                    if v > best {
                        best = v;
                        center = probe;
                        best_dir = center.clone();
                    }
                }
                radius *= cfg.shrink;
            }
            (best_dir, best)
        })
        .collect();

    let mut argmax = grid[grid_best].clone();
    let mut value = values[grid_best];
    for (center, best) in refined {
        if best > value || (best == value && lex_less(&center, &argmax)) {
            value = best;
            argmax = center;
        }
    }
    // Ties between refined centers and the grid best resolve to the grid
    // representative: centers move only on strict improvement, so an
    // unimproved center IS its seed grid point.
    let value = criterion.value(&argmax);
    Ok(OptResult {
        argmax,
        value,
        evaluations: cfg.resolution + cfg.refinement_budget(),
        method: OptMethod::GridRefine,
    })
}

/// Per-start initial refinement radii. For d = 2 a start must reach halfway
/// to its flanking starts on the circle; in higher dimensions a fixed
/// multiple of the grid spacing is used.
fn start_radii(grid: &[Direction], starts: &[usize], spacing: f64, d: usize) -> Vec<f64> {
    let floor = 4.0 * spacing;
    if d != 2 || starts.len() < 2 {
        return vec![floor; starts.len()];
    }
    let tau = 2.0 * std::f64::consts::PI;
    let mut angles: Vec<(usize, f64)> = starts
        .iter()
        .enumerate()
        .map(|(pos, k)| (pos, grid[*k].angle()))
        .collect();
    angles.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    let m = angles.len();
    let gaps: Vec<f64> = (0..m)
        .map(|i| {
            let next = if i + 1 < m { angles[i + 1].1 } else { angles[0].1 + tau };
            next - angles[i].1
        })
        .collect();
    // The largest gap is usually the void outside a cluster of good starts;
    // capping at the second largest keeps edge starts from chasing it.
    let mut sorted_gaps = gaps.clone();
    sorted_gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cap = sorted_gaps[m.saturating_sub(2)];
    let mut radii = vec![floor; m];
    for i in 0..m {
        let left = if i > 0 { gaps[i - 1] } else { gaps[m - 1] };
        let reach = 0.75 * left.max(gaps[i]).min(cap);
        radii[angles[i].0] = reach.max(floor);
    }
    radii
}

fn chord_distance(a: &Direction, b: &Direction) -> f64 {
    let diff = &a.coords() - &b.coords();
    diff.dot(&diff).sqrt()
}

/// Spreads `count` start indices across the ranked grid values: equal-value
/// tiers are sampled evenly over their extent so a tied plateau cannot
/// absorb every start, and starts keep a minimum pairwise separation so
/// near-ties in one basin do not either. Falls back to unseparated ranking
/// if the filter exhausts the grid.
fn select_starts(grid: &[Direction], values: &[f64], count: usize, min_sep: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|a, b| values[*b].partial_cmp(&values[*a]).unwrap().then(a.cmp(b)));
    let mut starts: Vec<usize> = Vec::with_capacity(count);
    let separated = |starts: &[usize], k: usize| {
        starts
            .iter()
            .all(|s| chord_distance(&grid[k], &grid[*s]) >= min_sep)
    };
    let mut tier_from = 0;
    while starts.len() < count && tier_from < order.len() {
        let tier_value = values[order[tier_from]];
        let mut tier_to = tier_from;
        while tier_to < order.len() && values[order[tier_to]] == tier_value {
            tier_to += 1;
        }
        let mut tier: Vec<usize> = order[tier_from..tier_to].to_vec();
        tier.sort_unstable();
        let want = count - starts.len();
        if tier.len() <= want {
            for k in tier {
                if separated(&starts, k) {
                    starts.push(k);
                }
            }
        } else {
            for i in 0..want {
                let k = tier[i * tier.len() / want];
                if separated(&starts, k) {
                    starts.push(k);
                }
            }
        }
        tier_from = tier_to;
    }
    for &k in &order {
        if starts.len() >= count {
            break;
        }
        if !starts.contains(&k) {
            starts.push(k);
        }
    }
    starts
}

/// Random step of length at most `radius` in the tangent space at `center`,
/// re-normalized onto the sphere. Step lengths are stratified over the
/// probe index so a round covers its radius densely; directions are the
/// two tangent signs in alternation for d = 2 and uniform random tangents
/// above.
fn tangent_probe<R: Rng + ?Sized>(
    center: &Direction,
    radius: f64,
    probe_index: usize,
    probes: usize,
    rng: &mut R,
) -> Direction {
    let d = center.dim();
    if d == 2 {
        let c = center.coords();
        let tangent = ndarray::array![-c[1], c[0]];
        let side = if probe_index % 2 == 0 { 1.0 } else { -1.0 };
        let stratum = (probe_index / 2) as f64;
        let strata = (probes / 2).max(1) as f64;
        let u: f64 = rng.gen_range(0.0..1.0);
        let mag = radius * (stratum + u) / strata;
        let stepped = &c.to_owned() + &(tangent * (side * mag));
        return Direction::normalized(stepped).expect("tangent step stays away from zero");
    }
    loop {
        let raw: Array1<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let c = center.coords().dot(&raw);
        let tangent = &raw - &(c * &center.coords().to_owned());
        let norm = tangent.dot(&tangent).sqrt();
        if norm < 1e-12 {
            continue;
        }
        let stratum = probe_index as f64;
        let u: f64 = rng.gen_range(0.0..1.0);
        let mag = radius * (stratum + u) / probes as f64;
        let stepped = &center.coords().to_owned() + &(tangent * (mag / norm));
        if let Ok(dir) = Direction::normalized(stepped) {
            return dir;
        }
    }
}

/// Criterion selector for [`estimate`].
pub enum CriterionSpec<'a, 'b> {
    Ms {
        data: &'a Dataset,
    },
    Sms {
        data: &'a Dataset,
        bandwidth: f64,
    },
    Tsms {
        data: &'a Dataset,
        hhat: &'a FirstStageFit<'b>,
    },
    /// Two-stage criterion with precomputed weights (oracle injection).
    TsmsWeights {
        data: &'a Dataset,
        weights: Vec<f64>,
    },
    TsmsMmi {
        data: &'a MultiDataset,
        hhat: &'a FirstStageFit<'b>,
    },
}

impl CriterionSpec<'_, '_> {
    fn dim(&self) -> usize {
        match self {
            CriterionSpec::Ms { data }
            | CriterionSpec::Sms { data, .. }
            | CriterionSpec::Tsms { data, .. }
            | CriterionSpec::TsmsWeights { data, .. } => data.d(),
            CriterionSpec::TsmsMmi { data, .. } => data.d(),
        }
    }
}

/// Maximizes the selected criterion, dispatching to the exact arrangement
/// solver for two-dimensional piecewise-constant criteria and to grid
/// search with refinement otherwise.
pub fn estimate<R: Rng + ?Sized>(
    spec: &CriterionSpec<'_, '_>,
    cfg: &OptimizerConfig,
    rng: &mut R,
) -> Result<OptResult> {
    let d = spec.dim();
    match spec {
        CriterionSpec::Ms { data } => {
            let crit = MsCriterion::new(data);
            if d == 2 {
                exact_argmax_2d(&crit, data.x())
            } else {
                maximize_on_sphere(&crit, d, cfg, rng)
            }
        }
        CriterionSpec::Tsms { data, hhat } => {
            let crit = TsmsCriterion::new(data, hhat)?;
            if d == 2 {
                exact_argmax_2d(&crit, data.x())
            } else {
                maximize_on_sphere(&crit, d, cfg, rng)
            }
        }
        CriterionSpec::TsmsWeights { data, weights } => {
            let crit = TsmsCriterion::with_weights(data, weights.clone())?;
            if d == 2 {
                exact_argmax_2d(&crit, data.x())
            } else {
                maximize_on_sphere(&crit, d, cfg, rng)
            }
        }
        CriterionSpec::Sms { data, bandwidth } => {
            let crit = SmsCriterion::new(data, *bandwidth)?;
            maximize_on_sphere(&crit, d, cfg, rng)
        }
        CriterionSpec::TsmsMmi { data, hhat } => {
            let crit = TsmsMmiCriterion::new(data, hhat)?;
            maximize_on_sphere(&crit, d, cfg, rng)
        }
    }
}
