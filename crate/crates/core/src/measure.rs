//! Finite-support probability measures on a metric state grid, weight
//! functions, weighted norms and grid-tabulated Lipschitz functions.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Atoms whose weight falls below this are treated as absent.
pub const NORMALIZATION_TOL: f64 = 1e-12;
/// Tolerance for metric comparisons (Lipschitz checks, duality gaps).
pub const METRIC_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Euclidean1d,
    Discrete,
    ExplicitTable,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Euclidean1d => "euclidean_1d",
            MetricKind::Discrete => "discrete",
            MetricKind::ExplicitTable => "explicit_table",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Metric {
    Euclidean1d,
    Discrete,
    /// Row-major `n x n` distance table.
    Table(Vec<f64>),
}

/// The state space: finitely many points with a metric.
///
/// In 1-D mode the points are real coordinates, strictly increasing. In the
/// discrete and explicit-table modes the point values are labels only and
/// distances come from the metric.
#[derive(Debug, Clone, PartialEq)]
pub struct StateGrid {
    points: Vec<f64>,
    metric: Metric,
}

pub type GridRef = Arc<StateGrid>;

impl StateGrid {
    pub fn euclidean_1d(points: Vec<f64>) -> Result<GridRef> {
        check_points(&points)?;
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("points must be strictly increasing".into()));
        }
        Ok(Arc::new(StateGrid {
            points,
            metric: Metric::Euclidean1d,
        }))
    }

    /// Uniform 1-D grid `lo, lo + step, ...` up to and including `hi` (within
    /// half a step).
    pub fn uniform_1d(lo: f64, hi: f64, step: f64) -> Result<GridRef> {
        if !(step > 0.0) || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "bad uniform grid lo={lo} hi={hi} step={step}"
            )));
        }
        let n = ((hi - lo) / step + 0.5).floor() as usize + 1;
        let points = (0..n).map(|i| lo + step * i as f64).collect();
        Self::euclidean_1d(points)
    }

    /// `d(x, y) = 1` for distinct points.
    pub fn discrete(points: Vec<f64>) -> Result<GridRef> {
        check_points(&points)?;
        check_distinct_labels(&points)?;
        Ok(Arc::new(StateGrid {
            points,
            metric: Metric::Discrete,
        }))
    }

    /// Arbitrary finite metric given by a full distance table (rows of
    /// length `n`). Symmetry, zero diagonal, positivity off the diagonal and
    /// the triangle inequality are checked.
    pub fn explicit(points: Vec<f64>, table: Vec<Vec<f64>>) -> Result<GridRef> {
        check_points(&points)?;
        check_distinct_labels(&points)?;
        let n = points.len();
        if table.len() != n || table.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidGrid(format!("distance table must be {n}x{n}")));
        }
        let flat: Vec<f64> = table.into_iter().flatten().collect();
        for i in 0..n {
            if flat[i * n + i] != 0.0 {
                return Err(Error::InvalidGrid(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let dij = flat[i * n + j];
                if !dij.is_finite() || dij < 0.0 {
                    return Err(Error::InvalidGrid(format!("bad distance d({i},{j})={dij}")));
                }
                if i != j && dij <= 0.0 {
                    return Err(Error::InvalidGrid(format!("d({i},{j}) must be positive")));
                }
                if (dij - flat[j * n + i]).abs() > METRIC_TOL {
                    return Err(Error::InvalidGrid(format!("asymmetric at ({i},{j})")));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if flat[i * n + k] > flat[i * n + j] + flat[j * n + k] + METRIC_TOL {
                        return Err(Error::InvalidGrid(format!(
                            "triangle inequality fails for ({i},{j},{k})"
                        )));
                    }
                }
            }
        }
        Ok(Arc::new(StateGrid {
            points,
            metric: Metric::Table(flat),
        }))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn kind(&self) -> MetricKind {
        match self.metric {
            Metric::Euclidean1d => MetricKind::Euclidean1d,
            Metric::Discrete => MetricKind::Discrete,
            Metric::Table(_) => MetricKind::ExplicitTable,
        }
    }

    pub fn distance_table(&self) -> Option<Vec<Vec<f64>>> {
        match &self.metric {
            Metric::Table(t) => Some(t.chunks(self.len()).map(|r| r.to_vec()).collect()),
            _ => None,
        }
    }

    #[inline]
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        match &self.metric {
            Metric::Euclidean1d => (self.points[i] - self.points[j]).abs(),
            Metric::Discrete => {
                if i == j {
                    0.0
                } else {
                    1.0
                }
            }
            Metric::Table(t) => t[i * self.points.len() + j],
        }
    }

    /// Index of a grid point carrying exactly this label/coordinate.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        self.points.iter().position(|&p| (p - x).abs() <= 1e-12 * (1.0 + x.abs()))
    }

    /// Distance from an anchor `x0` to grid point `i`. Off-grid anchors are
    /// only meaningful on a 1-D grid.
    pub fn distance_from(&self, x0: f64, i: usize) -> Result<f64> {
        match self.metric {
            Metric::Euclidean1d => Ok((self.points[i] - x0).abs()),
            _ => {
                let j = self.index_of(x0).ok_or_else(|| {
                    Error::InvalidGrid(format!("anchor {x0} is not a grid point"))
                })?;
                Ok(self.distance(j, i))
            }
        }
    }

    pub fn same_as(&self, other: &StateGrid) -> bool {
        std::ptr::eq(self, other) || self == other
    }

    pub(crate) fn require_1d(&self) -> Result<()> {
        if self.kind() == MetricKind::Euclidean1d {
            Ok(())
        } else {
            Err(Error::MetricKindMismatch {
                expected: "euclidean_1d",
                found: self.kind().name(),
            })
        }
    }
}

fn check_points(points: &[f64]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::InvalidGrid("no points".into()));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidGrid("non-finite point".into()));
    }
    Ok(())
}

fn check_distinct_labels(points: &[f64]) -> Result<()> {
    let mut sorted = points.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidGrid("duplicate point labels".into()));
    }
    Ok(())
}

pub(crate) fn check_same_grid(a: &StateGrid, b: &StateGrid) -> Result<()> {
    if a.same_as(b) {
        Ok(())
    } else {
        Err(Error::DimensionMismatch("objects live on different grids".into()))
    }
}

/// A probability measure supported on the points of a [`StateGrid`],
/// stored densely (one weight per grid point).
#[derive(Debug, Clone)]
pub struct DiscreteMeasure {
    grid: GridRef,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Clamps negative weights to zero and normalizes to unit mass.
    pub fn new(grid: GridRef, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} grid points",
                weights.len(),
                grid.len()
            )));
        }
        if weights.iter().any(|w| w.is_nan()) {
            return Err(Error::NonPositiveMass(f64::NAN));
        }
        let mut weights: Vec<f64> = weights.into_iter().map(|w| w.max(0.0)).collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::NonPositiveMass(total));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(DiscreteMeasure { grid, weights })
    }

    /// Builds from weights that are already nonnegative with positive mass;
    /// only rescales.
    pub(crate) fn from_unnormalized(grid: GridRef, mut weights: Vec<f64>) -> Self {
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        DiscreteMeasure { grid, weights }
    }

    pub fn dirac(grid: GridRef, index: usize) -> Result<Self> {
        if index >= grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "dirac index {index} out of range {}",
                grid.len()
            )));
        }
        let mut weights = vec![0.0; grid.len()];
        weights[index] = 1.0;
        Ok(DiscreteMeasure { grid, weights })
    }

    pub fn uniform(grid: GridRef) -> Self {
        let n = grid.len();
        DiscreteMeasure {
            grid,
            weights: vec![1.0 / n as f64; n],
        }
    }

    /// `kappa * a + (1 - kappa) * b`.
    pub fn mixture(kappa: f64, a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<Self> {
        check_same_grid(&a.grid, &b.grid)?;
        if !(0.0..=1.0).contains(&kappa) {
            return Err(Error::DimensionMismatch(format!("mixture weight {kappa} outside [0,1]")));
        }
        let weights = a
            .weights
            .iter()
            .zip(&b.weights)
            .map(|(x, y)| kappa * x + (1.0 - kappa) * y)
            .collect();
        DiscreteMeasure::new(a.grid.clone(), weights)
    }

    pub fn grid(&self) -> &GridRef {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Indices of atoms with positive weight.
    pub fn support(&self) -> Vec<usize> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    /// Drops atoms lighter than `threshold` and renormalizes. Leaves the
    /// measure unchanged if that would remove everything.
    pub fn pruned(mut self, threshold: f64) -> Self {
        let kept: f64 = self.weights.iter().filter(|&&w| w >= threshold).sum();
        if kept > 0.0 && self.weights.iter().any(|&w| w > 0.0 && w < threshold) {
            for w in &mut self.weights {
                if *w < threshold {
                    *w = 0.0;
                } else {
                    *w /= kept;
                }
            }
        }
        self
    }

    /// Atom-wise maximum absolute weight difference.
    pub fn max_abs_diff(&self, other: &DiscreteMeasure) -> f64 {
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(self.grid.points()).map(|(w, x)| w * x).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.weights
            .iter()
            .zip(self.grid.points())
            .map(|(w, x)| w * (x - m) * (x - m))
            .sum()
    }
}

/// `w(x) = 1 + k d(x0, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightFunction {
    pub x0: f64,
    pub k: f64,
}

impl WeightFunction {
    pub fn new(x0: f64, k: f64) -> Result<Self> {
        if !(k > 0.0) || !k.is_finite() || !x0.is_finite() {
            return Err(Error::InvalidModel(format!("weight function needs k > 0 (k={k})")));
        }
        Ok(WeightFunction { x0, k })
    }

    /// `w` evaluated at every grid point.
    pub fn values_on(&self, grid: &StateGrid) -> Result<Vec<f64>> {
        (0..grid.len())
            .map(|i| Ok(1.0 + self.k * grid.distance_from(self.x0, i)?))
            .collect()
    }
}

/// `w~(mu) = sum_i w(x_i) mu_i`, always `>= 1`.
pub fn tilde_w(wf: &WeightFunction, mu: &DiscreteMeasure) -> Result<f64> {
    let w = wf.values_on(&mu.grid)?;
    Ok(tilde_w_with(&w, mu))
}

/// [`tilde_w`] with precomputed grid weights.
#[inline]
pub fn tilde_w_with(w: &[f64], mu: &DiscreteMeasure) -> f64 {
    w.iter().zip(&mu.weights).map(|(a, b)| a * b).sum()
}

/// Empirical weighted sup-norm `max_i |v_i| / w~(mu_i)` over a belief sample.
pub fn weighted_norm(
    values: &[f64],
    beliefs: &[DiscreteMeasure],
    wf: &WeightFunction,
) -> Result<f64> {
    if values.is_empty() || beliefs.is_empty() {
        return Err(Error::EmptySample);
    }
    if values.len() != beliefs.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} values for {} beliefs",
            values.len(),
            beliefs.len()
        )));
    }
    let w = wf.values_on(&beliefs[0].grid)?;
    let mut best = 0.0f64;
    for (v, mu) in values.iter().zip(beliefs) {
        check_same_grid(&beliefs[0].grid, &mu.grid)?;
        best = best.max(v.abs() / tilde_w_with(&w, mu));
    }
    Ok(best)
}

/// A real function tabulated on a grid with its Lipschitz seminorm.
///
/// Off-grid evaluation (1-D only) interpolates linearly between neighbours
/// and extrapolates by the boundary value, which keeps the seminorm.
#[derive(Debug, Clone)]
pub struct LipschitzFn {
    grid: GridRef,
    values: Vec<f64>,
    lip_const: f64,
}

impl LipschitzFn {
    pub fn new(grid: GridRef, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} grid points",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue);
        }
        let lip_const = lipschitz_seminorm(&grid, &values);
        Ok(LipschitzFn {
            grid,
            values,
            lip_const,
        })
    }

    pub fn constant(grid: GridRef, c: f64) -> Self {
        let n = grid.len();
        LipschitzFn {
            grid,
            values: vec![c; n],
            lip_const: 0.0,
        }
    }

    pub fn zero(grid: GridRef) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn from_fn(grid: GridRef, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.points().iter().map(|&x| f(x)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &GridRef {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn lip_const(&self) -> f64 {
        self.lip_const
    }

    /// `f + c`; the seminorm is unchanged.
    pub fn shifted(&self, c: f64) -> Self {
        LipschitzFn {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v + c).collect(),
            lip_const: self.lip_const,
        }
    }

    pub fn sup_distance(&self, other: &LipschitzFn) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Evaluation at an arbitrary coordinate of a 1-D grid.
    pub fn eval_at(&self, x: f64) -> Result<f64> {
        self.grid.require_1d()?;
        let pts = self.grid.points();
        let n = pts.len();
        if x <= pts[0] {
            return Ok(self.values[0]);
        }
        if x >= pts[n - 1] {
            return Ok(self.values[n - 1]);
        }
        let hi = pts.partition_point(|&p| p <= x);
        let lo = hi - 1;
        let t = (x - pts[lo]) / (pts[hi] - pts[lo]);
        Ok(self.values[lo] + t * (self.values[hi] - self.values[lo]))
    }
}

fn lipschitz_seminorm(grid: &StateGrid, values: &[f64]) -> f64 {
    let n = values.len();
    let mut best = 0.0f64;
    if grid.kind() == MetricKind::Euclidean1d {
        // piecewise-linear extension: adjacent slopes are the whole story
        for i in 1..n {
            best = best.max((values[i] - values[i - 1]).abs() / grid.distance(i - 1, i));
        }
    } else {
        for i in 0..n {
            for j in i + 1..n {
                best = best.max((values[i] - values[j]).abs() / grid.distance(i, j));
            }
        }
    }
    best
}

/// `sum_i f(x_i) mu_i`.
pub fn integrate(f: &LipschitzFn, mu: &DiscreteMeasure) -> Result<f64> {
    check_same_grid(&f.grid, &mu.grid)?;
    Ok(dot(&f.values, &mu.weights))
}

/// Integral against atoms `(point, weight)` that may sit off the grid
/// (1-D grids only).
pub fn integrate_atoms(f: &LipschitzFn, atoms: &[(f64, f64)]) -> Result<f64> {
    let mut acc = 0.0;
    for &(x, w) in atoms {
        acc += f.eval_at(x)? * w;
    }
    Ok(acc)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
