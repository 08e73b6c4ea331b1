//! The POMDP model: grids, kernels in density form, rewards and the
//! weighted-norm certificate (`r_bar`, `beta`, `gamma = alpha * beta`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{DiscreteMeasure, GridRef, MetricKind, StateGrid, WeightFunction};

/// Row sums of the transition table must be within this of one.
pub const TRANSITION_TOL: f64 = 1e-10;
/// `sum_j phi_j q(y_j | x', a)` must be within this of one before
/// renormalization.
pub const QUADRATURE_TOL: f64 = 1e-3;

/// Quadrature nodes `y_j` and positive weights `phi_j` of the reference
/// measure on the observation space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationQuadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ObservationQuadrature {
    pub fn new(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != weights.len() {
            return Err(Error::InvalidModel(format!(
                "{} quadrature nodes with {} weights",
                nodes.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidModel("quadrature weights must be positive".into()));
        }
        Ok(ObservationQuadrature { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Raw ingredients of a model, indexed action-major:
/// `transition[a][x][x']`, `obs_density[a][x'][j]`, `reward[a][x]`.
#[derive(Debug, Clone)]
pub struct ModelParts {
    pub grid: GridRef,
    pub actions: Vec<String>,
    pub observations: ObservationQuadrature,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub obs_density: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<f64>>,
    pub alpha: f64,
    pub weight: WeightFunction,
    pub init_obs: Option<Vec<Vec<f64>>>,
    pub initial_belief: Option<Vec<f64>>,
}

/// A validated POMDP with a finite state grid, finitely many actions and an
/// observation kernel given by a density against a quadrature reference
/// measure.
///
/// `init_obs` (the density of the initial observation) is carried through
/// but not used by the solvers: it only changes the initial belief, which
/// callers supply directly.
#[derive(Debug, Clone)]
pub struct PomdpModel {
    grid: GridRef,
    actions: Vec<String>,
    observations: ObservationQuadrature,
    /// `[a]`, row-major `n x n` over `(x, x')`.
    transition: Vec<Vec<f64>>,
    /// `[a]`, row-major `n x J` over `(x', j)`, renormalized.
    obs_density: Vec<Vec<f64>>,
    reward: Vec<Vec<f64>>,
    alpha: f64,
    weight: WeightFunction,
    weight_values: Vec<f64>,
    init_obs: Option<Vec<Vec<f64>>>,
    initial_belief: Option<Vec<f64>>,
}

impl PomdpModel {
    pub fn new(parts: ModelParts) -> Result<Self> {
        let ModelParts {
            grid,
            actions,
            observations,
            transition,
            obs_density,
            reward,
            alpha,
            weight,
            init_obs,
            initial_belief,
        } = parts;
        let n = grid.len();
        let na = actions.len();
        let nj = observations.len();
        if na == 0 {
            return Err(Error::InvalidModel("no actions".into()));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidModel(format!("discount {alpha} not in (0,1)")));
        }
        let weight_values = weight.values_on(&grid)?;
        if transition.len() != na || obs_density.len() != na || reward.len() != na {
            return Err(Error::DimensionMismatch(
                "transition, obs_density and reward need one entry per action".into(),
            ));
        }

        let mut trans_flat = Vec::with_capacity(na);
        for (a, table) in transition.into_iter().enumerate() {
            if table.len() != n || table.iter().any(|r| r.len() != n) {
                return Err(Error::DimensionMismatch(format!(
                    "transition table for action {a} must be {n}x{n}"
                )));
            }
            let mut flat = Vec::with_capacity(n * n);
            for (x, row) in table.into_iter().enumerate() {
                if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                    return Err(Error::InvalidModel(format!(
                        "negative or non-finite transition entry in row ({x}, {a})"
                    )));
                }
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > TRANSITION_TOL {
                    return Err(Error::InvalidModel(format!(
                        "transition row ({x}, {a}) sums to {s}"
                    )));
                }
                flat.extend(row.into_iter().map(|p| p / s));
            }
            trans_flat.push(flat);
        }

        let mut q_flat = Vec::with_capacity(na);
        for (a, table) in obs_density.into_iter().enumerate() {
            if table.len() != n || table.iter().any(|r| r.len() != nj) {
                return Err(Error::DimensionMismatch(format!(
                    "obs_density for action {a} must be {n}x{nj}"
                )));
            }
            let mut flat = Vec::with_capacity(n * nj);
            for (x, row) in table.into_iter().enumerate() {
                if row.iter().any(|&q| !(q >= 0.0) || !q.is_finite()) {
                    return Err(Error::InvalidModel(format!(
                        "negative or non-finite observation density at ({x}, {a})"
                    )));
                }
                let s: f64 = row.iter().zip(&observations.weights).map(|(q, w)| q * w).sum();
                if (s - 1.0).abs() > QUADRATURE_TOL {
                    return Err(Error::InvalidModel(format!(
                        "observation density at ({x}, {a}) integrates to {s} under the quadrature"
                    )));
                }
                flat.extend(row.into_iter().map(|q| q / s));
            }
            q_flat.push(flat);
        }

        for (a, row) in reward.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "reward row for action {a} has {} entries, expected {n}",
                    row.len()
                )));
            }
        }
        if let Some(q0) = &init_obs {
            if q0.len() != n || q0.iter().any(|r| r.len() != nj) {
                return Err(Error::DimensionMismatch(format!("init_obs must be {n}x{nj}")));
            }
        }
        if let Some(b) = &initial_belief {
            DiscreteMeasure::new(grid.clone(), b.clone())?;
        }

        Ok(PomdpModel {
            grid,
            actions,
            observations,
            transition: trans_flat,
            obs_density: q_flat,
            reward,
            alpha,
            weight,
            weight_values,
            init_obs,
            initial_belief,
        })
    }

    pub fn grid(&self) -> &GridRef {
        &self.grid
    }

    pub fn n_states(&self) -> usize {
        self.grid.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.observations.len()
    }

    pub fn action_names(&self) -> &[String] {
        &self.actions
    }

    pub fn observations(&self) -> &ObservationQuadrature {
        &self.observations
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn weight(&self) -> &WeightFunction {
        &self.weight
    }

    /// `w(x)` on the grid.
    pub fn weight_values(&self) -> &[f64] {
        &self.weight_values
    }

    /// `p(. | x, a)` over next states.
    #[inline]
    pub fn transition_row(&self, a: usize, x: usize) -> &[f64] {
        let n = self.n_states();
        &self.transition[a][x * n..(x + 1) * n]
    }

    /// `q(y_j | x', a)` over nodes `j`.
    #[inline]
    pub fn obs_row(&self, a: usize, x_next: usize) -> &[f64] {
        let nj = self.n_nodes();
        &self.obs_density[a][x_next * nj..(x_next + 1) * nj]
    }

    #[inline]
    pub fn obs_density(&self, a: usize, x_next: usize, j: usize) -> f64 {
        self.obs_density[a][x_next * self.n_nodes() + j]
    }

    /// `r(., a)` over states.
    #[inline]
    pub fn reward_row(&self, a: usize) -> &[f64] {
        &self.reward[a]
    }

    pub fn init_obs(&self) -> Option<&Vec<Vec<f64>>> {
        self.init_obs.as_ref()
    }

    /// The initial belief stored with the model, or uniform.
    pub fn initial_belief(&self) -> DiscreteMeasure {
        match &self.initial_belief {
            Some(b) => DiscreteMeasure::new(self.grid.clone(), b.clone())
                .expect("validated at construction"),
            None => DiscreteMeasure::uniform(self.grid.clone()),
        }
    }

    pub fn with_initial_belief(mut self, belief: &DiscreteMeasure) -> Result<Self> {
        crate::measure::check_same_grid(&self.grid, belief.grid())?;
        self.initial_belief = Some(belief.weights().to_vec());
        Ok(self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        file.into_model()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn to_file(&self) -> ModelFile {
        let n = self.n_states();
        let nj = self.n_nodes();
        ModelFile {
            states: self.grid.points().to_vec(),
            metric: self.grid.kind(),
            distances: self.grid.distance_table(),
            actions: self.actions.clone(),
            observations: self.observations.clone(),
            transition: self
                .transition
                .iter()
                .map(|t| t.chunks(n).map(|r| r.to_vec()).collect())
                .collect(),
            obs_density: self
                .obs_density
                .iter()
                .map(|t| t.chunks(nj).map(|r| r.to_vec()).collect())
                .collect(),
            reward: self.reward.clone(),
            alpha: self.alpha,
            weight: self.weight,
            init_obs: self.init_obs.clone(),
            initial_belief: self.initial_belief.clone(),
        }
    }
}

/// On-disk JSON layout of a model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub states: Vec<f64>,
    pub metric: MetricKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distances: Option<Vec<Vec<f64>>>,
    pub actions: Vec<String>,
    pub observations: ObservationQuadrature,
    /// `[action][state][next_state]`
    pub transition: Vec<Vec<Vec<f64>>>,
    /// `[action][next_state][node]`
    pub obs_density: Vec<Vec<Vec<f64>>>,
    /// `[action][state]`
    pub reward: Vec<Vec<f64>>,
    pub alpha: f64,
    pub weight: WeightFunction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_obs: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_belief: Option<Vec<f64>>,
}

impl ModelFile {
    pub fn into_model(self) -> Result<PomdpModel> {
        let grid = match self.metric {
            MetricKind::Euclidean1d => StateGrid::euclidean_1d(self.states)?,
            MetricKind::Discrete => StateGrid::discrete(self.states)?,
            MetricKind::ExplicitTable => {
                let table = self.distances.ok_or_else(|| {
                    Error::InvalidModel("explicit_table metric needs `distances`".into())
                })?;
                StateGrid::explicit(self.states, table)?
            }
        };
        let observations =
            ObservationQuadrature::new(self.observations.nodes, self.observations.weights)?;
        PomdpModel::new(ModelParts {
            grid,
            actions: self.actions,
            observations,
            transition: self.transition,
            obs_density: self.obs_density,
            reward: self.reward,
            alpha: self.alpha,
            weight: WeightFunction::new(self.weight.x0, self.weight.k)?,
            init_obs: self.init_obs,
            initial_belief: self.initial_belief,
        })
    }
}

/// Constants of the weighted-norm contraction certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifiedConstants {
    /// Smallest `r_bar` with `|r(x,a)| <= r_bar w(x)` on the grid.
    pub r_bar: f64,
    /// Drift constant: `sum_x' w(x') p(x'|x,a) <= beta w(x)`.
    pub beta: f64,
    /// `alpha * beta`, strictly below one.
    pub gamma: f64,
    pub alpha: f64,
    /// Weight scale `k`.
    pub k: f64,
    /// Drift offset `K` when the weight was derived from a linear drift bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_offset: Option<f64>,
}

impl CertifiedConstants {
    /// A zero reward makes the value function identically zero.
    pub fn is_degenerate(&self) -> bool {
        self.r_bar == 0.0
    }

    /// A-priori bound `r_bar gamma^t / (1 - gamma)` after `t` iterations.
    pub fn a_priori_bound(&self, t: usize) -> f64 {
        self.r_bar * self.gamma.powi(t as i32) / (1.0 - self.gamma)
    }

    /// First `t` with `a_priori_bound(t) <= epsilon`.
    pub fn iterations_for(&self, epsilon: f64) -> usize {
        if self.r_bar <= 0.0 {
            return 0;
        }
        let mut t = ((epsilon * (1.0 - self.gamma) / self.r_bar).ln() / self.gamma.ln())
            .ceil()
            .max(0.0) as usize;
        // guard the closed form against rounding at the boundary
        while t > 0 && self.a_priori_bound(t - 1) <= epsilon {
            t -= 1;
        }
        while self.a_priori_bound(t) > epsilon {
            t += 1;
        }
        t
    }
}

/// A model together with its verified contraction constants. Solvers only
/// accept this type.
#[derive(Debug, Clone)]
pub struct CertifiedModel {
    model: PomdpModel,
    constants: CertifiedConstants,
}

impl CertifiedModel {
    pub fn model(&self) -> &PomdpModel {
        &self.model
    }

    pub fn constants(&self) -> &CertifiedConstants {
        &self.constants
    }

    pub fn into_parts(self) -> (PomdpModel, CertifiedConstants) {
        (self.model, self.constants)
    }
}

impl std::ops::Deref for CertifiedModel {
    type Target = PomdpModel;

    fn deref(&self) -> &PomdpModel {
        &self.model
    }
}

/// Measures `r_bar` and `beta` on the grid and checks `alpha * beta < 1`.
pub fn certify(model: PomdpModel) -> Result<CertifiedModel> {
    let r_bar = validate_reward_bound(&model)?;
    let beta = estimate_drift_beta(&model)?;
    let constants = CertifiedConstants {
        r_bar,
        beta,
        gamma: model.alpha * beta,
        alpha: model.alpha,
        k: model.weight.k,
        drift_offset: None,
    };
    Ok(CertifiedModel { model, constants })
}

/// Certifies with a caller-chosen drift constant, which must dominate the
/// measured one and stay below `1/alpha`.
pub fn certify_with_beta(
    model: PomdpModel,
    beta: f64,
    drift_offset: Option<f64>,
) -> Result<CertifiedModel> {
    let mut cert = certify(model)?;
    let limit = 1.0 / cert.model.alpha;
    if beta >= limit {
        return Err(Error::DriftViolation { beta, limit });
    }
    if beta < cert.constants.beta {
        return Err(Error::DriftDerivationFailed {
            measured: cert.constants.beta,
            beta,
        });
    }
    cert.constants.beta = beta;
    cert.constants.gamma = cert.model.alpha * beta;
    cert.constants.drift_offset = drift_offset;
    Ok(cert)
}

/// `max_{x,a} |r(x,a)| / w(x)`.
pub fn validate_reward_bound(model: &PomdpModel) -> Result<f64> {
    let mut r_bar = 0.0f64;
    for a in 0..model.n_actions() {
        for (x, (&r, &w)) in model.reward[a].iter().zip(&model.weight_values).enumerate() {
            if !r.is_finite() {
                return Err(Error::NonFiniteReward { state: x, action: a });
            }
            r_bar = r_bar.max(r.abs() / w);
        }
    }
    Ok(r_bar)
}

/// `max_{x,a} sum_x' w(x') p(x'|x,a) / w(x)`; fails when `alpha * beta >= 1`.
pub fn estimate_drift_beta(model: &PomdpModel) -> Result<f64> {
    let w = &model.weight_values;
    let mut beta = 0.0f64;
    for a in 0..model.n_actions() {
        for x in 0..model.n_states() {
            let drift: f64 = model.transition_row(a, x).iter().zip(w).map(|(p, w)| p * w).sum();
            beta = beta.max(drift / w[x]);
        }
    }
    let limit = 1.0 / model.alpha;
    if beta >= limit {
        return Err(Error::DriftViolation { beta, limit });
    }
    Ok(beta)
}

/// Total-variation distance `1/2 sum_j phi_j |q1_j - q2_j|` between two
/// observation densities on the quadrature nodes.
pub fn tv_on_nodes(quadrature: &ObservationQuadrature, q1: &[f64], q2: &[f64]) -> f64 {
    0.5 * quadrature
        .weights
        .iter()
        .zip(q1.iter().zip(q2))
        .map(|(w, (a, b))| w * (a - b).abs())
        .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TvProbe {
    pub distance: f64,
    pub tv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TvReport {
    pub probes: Vec<TvProbe>,
}

impl TvReport {
    /// TV is nonincreasing as the state distance shrinks.
    pub fn monotone(&self) -> bool {
        let mut sorted = self.probes.clone();
        sorted.sort_by(|a, b| b.distance.total_cmp(&a.distance));
        sorted.windows(2).all(|w| w[1].tv <= w[0].tv + 1e-15)
    }

    pub fn last_tv(&self) -> Option<f64> {
        self.probes
            .iter()
            .min_by(|a, b| a.distance.total_cmp(&b.distance))
            .map(|p| p.tv)
    }
}

/// Probes total-variation continuity of the observation kernel between
/// grid state/action pairs `((x, a), (x', a'))`.
pub fn probe_q_tv_continuity(
    model: &PomdpModel,
    pairs: &[((usize, usize), (usize, usize))],
) -> Result<TvReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidModel("no probe pairs".into()));
    }
    let mut probes = Vec::with_capacity(pairs.len());
    for &((x, a), (x2, a2)) in pairs {
        if x.max(x2) >= model.n_states() || a.max(a2) >= model.n_actions() {
            return Err(Error::DimensionMismatch("probe index out of range".into()));
        }
        let tv = tv_on_nodes(&model.observations, model.obs_row(a, x), model.obs_row(a2, x2));
        probes.push(TvProbe {
            distance: model.grid.distance(x, x2),
            tv,
        });
    }
    Ok(TvReport { probes })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_model(
        points: Vec<f64>,
        transition: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<f64>>,
        weight: WeightFunction,
    ) -> PomdpModel {
        let grid = StateGrid::euclidean_1d(points).unwrap();
        let n = grid.len();
        let na = transition.len();
        PomdpModel::new(ModelParts {
            grid,
            actions: (0..na).map(|a| format!("a{a}")).collect(),
            observations: ObservationQuadrature::new(vec![0.0], vec![1.0]).unwrap(),
            transition,
            obs_density: vec![vec![vec![1.0]; n]; na],
            reward,
            alpha: 0.9,
            weight,
            init_obs: None,
            initial_belief: None,
        })
        .unwrap()
    }

    fn identity(n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect()
    }

    #[test]
    fn reward_bound_examples() {
        let pts = vec![-2.0, -1.0, 0.0, 1.0, 3.0];
        let wf = WeightFunction::new(0.0, 1.0).unwrap();
        let zero = line_model(pts.clone(), vec![identity(5)], vec![vec![0.0; 5]], wf);
        assert_eq!(validate_reward_bound(&zero).unwrap(), 0.0);
        assert!(certify(zero).unwrap().constants().is_degenerate());

        let neg_abs: Vec<f64> = pts.iter().map(|x: &f64| -x.abs()).collect();
        let m = line_model(pts.clone(), vec![identity(5)], vec![neg_abs], wf);
        let r_bar = validate_reward_bound(&m).unwrap();
        assert_eq!(r_bar, 3.0 / 4.0);
        assert!(r_bar < 1.0);

        let w: Vec<f64> = pts.iter().map(|x: &f64| 1.0 + x.abs()).collect();
        let m = line_model(pts.clone(), vec![identity(5)], vec![w], wf);
        assert_eq!(validate_reward_bound(&m).unwrap(), 1.0);

        let mut bad = vec![0.0; 5];
        bad[2] = f64::NAN;
        let m = line_model(pts, vec![identity(5)], vec![bad], wf);
        assert!(matches!(validate_reward_bound(&m), Err(Error::NonFiniteReward { .. })));
    }

    #[test]
    fn drift_examples() {
        let pts = vec![-1.0, 0.0, 2.0];
        let wf = WeightFunction::new(0.0, 0.5).unwrap();
        let to_anchor = vec![vec![0.0, 1.0, 0.0]; 3];
        let m = line_model(pts.clone(), vec![to_anchor], vec![vec![0.0; 3]], wf);
        assert_eq!(estimate_drift_beta(&m).unwrap(), 1.0);
        let m = line_model(pts.clone(), vec![identity(3)], vec![vec![0.0; 3]], wf);
        assert_eq!(estimate_drift_beta(&m).unwrap(), 1.0);

        // everything jumps to x = 2: w = 2 from the anchor, ratio 2 >= 1/0.9
        let outward = vec![vec![0.0, 0.0, 1.0]; 3];
        let m = line_model(pts, vec![outward], vec![vec![0.0; 3]], wf);
        assert!(matches!(estimate_drift_beta(&m), Err(Error::DriftViolation { .. })));
        assert!(matches!(certify(m), Err(Error::DriftViolation { .. })));
    }

    #[test]
    fn rejects_bad_rows_and_discount() {
        let grid = StateGrid::euclidean_1d(vec![0.0, 1.0]).unwrap();
        let base = ModelParts {
            grid,
            actions: vec!["a".into()],
            observations: ObservationQuadrature::new(vec![0.0], vec![1.0]).unwrap(),
            transition: vec![vec![vec![0.5, 0.5], vec![0.7, 0.2]]],
            obs_density: vec![vec![vec![1.0], vec![1.0]]],
            reward: vec![vec![0.0, 0.0]],
            alpha: 0.9,
            weight: WeightFunction::new(0.0, 1.0).unwrap(),
            init_obs: None,
            initial_belief: None,
        };
        assert!(matches!(PomdpModel::new(base.clone()), Err(Error::InvalidModel(_))));
        let mut ok = base.clone();
        ok.transition = vec![identity(2)];
        assert!(PomdpModel::new(ok.clone()).is_ok());
        let mut bad_alpha = ok.clone();
        bad_alpha.alpha = 1.0;
        assert!(PomdpModel::new(bad_alpha).is_err());
        let mut bad_q = ok;
        bad_q.obs_density = vec![vec![vec![0.9], vec![1.0]]];
        assert!(PomdpModel::new(bad_q).is_err());
    }

    #[test]
    fn quadrature_is_renormalized() {
        let grid = StateGrid::euclidean_1d(vec![0.0, 1.0]).unwrap();
        let m = PomdpModel::new(ModelParts {
            grid,
            actions: vec!["a".into()],
            observations: ObservationQuadrature::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap(),
            transition: vec![identity(2)],
            obs_density: vec![vec![vec![1.0004, 1.0], vec![0.5, 1.5]]],
            reward: vec![vec![0.0, 0.0]],
            alpha: 0.5,
            weight: WeightFunction::new(0.0, 1.0).unwrap(),
            init_obs: None,
            initial_belief: None,
        })
        .unwrap();
        for x in 0..2 {
            let s: f64 = m.obs_row(0, x).iter().map(|q| 0.5 * q).sum();
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn tv_probe_examples() {
        let grid = StateGrid::euclidean_1d(vec![0.0, 1.0, 2.0]).unwrap();
        let m = PomdpModel::new(ModelParts {
            grid,
            actions: vec!["a".into()],
            observations: ObservationQuadrature::new(vec![0.0, 1.0], vec![1.0, 1.0]).unwrap(),
            transition: vec![identity(3)],
            obs_density: vec![vec![vec![0.5, 0.5], vec![0.5, 0.5], vec![0.9, 0.1]]],
            reward: vec![vec![0.0; 3]],
            alpha: 0.5,
            weight: WeightFunction::new(0.0, 1.0).unwrap(),
            init_obs: None,
            initial_belief: None,
        })
        .unwrap();
        let r = probe_q_tv_continuity(&m, &[((0, 0), (0, 0)), ((0, 0), (1, 0))]).unwrap();
        assert_eq!(r.probes[0].tv, 0.0);
        assert_eq!(r.probes[1].tv, 0.0);
        let r = probe_q_tv_continuity(&m, &[((0, 0), (2, 0))]).unwrap();
        assert!((r.probes[0].tv - 0.4).abs() < 1e-15);
        assert!(probe_q_tv_continuity(&m, &[]).is_err());
    }

    #[test]
    fn iterations_for_matches_closed_form() {
        let c = CertifiedConstants {
            r_bar: 2.0,
            beta: 1.05,
            gamma: 0.9 * 1.05,
            alpha: 0.9,
            k: 0.1,
            drift_offset: None,
        };
        for eps in [1e-1, 1e-3, 1e-6] {
            let t = c.iterations_for(eps);
            let closed = ((eps * (1.0 - c.gamma) / c.r_bar).ln() / c.gamma.ln()).ceil() as usize;
            assert_eq!(t, closed);
            assert!(c.a_priori_bound(t) <= eps);
            assert!(c.a_priori_bound(t - 1) > eps);
        }
    }

    #[test]
    fn json_round_trip() {
        let pts = vec![0.0, 1.0];
        let wf = WeightFunction::new(0.0, 1.0).unwrap();
        let m = line_model(pts, vec![identity(2)], vec![vec![1.0, -1.0]], wf);
        let text = m.to_json().unwrap();
        let back = PomdpModel::from_json(&text).unwrap();
        assert_eq!(back.to_json().unwrap(), text);
    }
}
