//! Bellman backups on belief-tabulated value functions and value iteration
//! with the weighted-norm a-priori certificate.
//!
//! A backup at a sampled belief needs the current value at every posterior,
//! and posteriors leave any finite sample. The iterate is therefore carried
//! by a generalizer: by default the alpha-function set whose envelope agrees
//! with the table on the sample, otherwise a W1-nearest-neighbour lookup with
//! a Lipschitz correction (a lower-bound heuristic).

use rayon::prelude::*;

use crate::conjugate::{eval_sup, prune, set_backup, AlphaSet};
use crate::error::{Error, Result};
use crate::filter::branch;
use crate::measure::{weighted_norm, DiscreteMeasure, LipschitzFn};
use crate::model::CertifiedModel;
use crate::sample::BeliefSample;
use crate::transport::w1;

/// A value function that can be evaluated at arbitrary beliefs.
pub trait ValueFunction: Sync {
    fn value(&self, mu: &DiscreteMeasure) -> Result<f64>;
}

impl<F> ValueFunction for F
where
    F: Fn(&DiscreteMeasure) -> f64 + Sync,
{
    fn value(&self, mu: &DiscreteMeasure) -> Result<f64> {
        Ok(self(mu))
    }
}

impl ValueFunction for AlphaSet {
    fn value(&self, mu: &DiscreteMeasure) -> Result<f64> {
        Ok(eval_sup(self, mu)?.0)
    }
}

/// Values over a [`BeliefSample`], index-aligned with its beliefs.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedValue {
    pub values: Vec<f64>,
}

impl TabulatedValue {
    pub fn zeros(n: usize) -> Self {
        TabulatedValue { values: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Greedy action per sampled belief.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selector {
    pub actions: Vec<usize>,
}

/// Value lookup at the W1-nearest sampled belief, minus `lipschitz * W1`.
pub struct NearestNeighbor<'a> {
    pub sample: &'a BeliefSample,
    pub values: &'a [f64],
    pub lipschitz: f64,
}

impl ValueFunction for NearestNeighbor<'_> {
    fn value(&self, mu: &DiscreteMeasure) -> Result<f64> {
        let (idx, dist) = nearest_belief(self.sample, mu)?;
        Ok(self.values[idx] - self.lipschitz * dist)
    }
}

/// Index of the W1-closest sampled belief (lowest index on ties) and the
/// distance to it.
pub fn nearest_belief(sample: &BeliefSample, mu: &DiscreteMeasure) -> Result<(usize, f64)> {
    let mut best = (0usize, f64::INFINITY);
    for (i, b) in sample.beliefs().iter().enumerate() {
        let d = w1(mu, b)?;
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok(best)
}

/// Default correction slope for [`NearestNeighbor`]: the largest reward
/// seminorm scaled by the discounted horizon. Heuristic.
pub fn default_nn_lipschitz(model: &CertifiedModel) -> Result<f64> {
    let mut lip = 0.0f64;
    for a in 0..model.n_actions() {
        let r = LipschitzFn::new(model.grid().clone(), model.reward_row(a).to_vec())?;
        lip = lip.max(r.lip_const());
    }
    Ok(lip / (1.0 - model.alpha()))
}

/// `r~(mu,a) + alpha sum_j phi_j lambda_j V(M(mu,a,y_j))`, skipping null
/// nodes.
pub fn bellman_backup_point(
    model: &CertifiedModel,
    value: &dyn ValueFunction,
    mu: &DiscreteMeasure,
    a: usize,
) -> Result<f64> {
    let b = branch(model, mu, a)?;
    let mut acc = 0.0;
    for (j, post) in b.posteriors.iter().enumerate() {
        if let Some(post) = post {
            let v = value.value(post)?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue);
            }
            acc += b.marginal.probability(j) * v;
        }
    }
    Ok(b.reward + model.alpha() * acc)
}

/// Result of one Bellman sweep over a sample.
#[derive(Debug, Clone)]
pub struct Backup {
    pub values: TabulatedValue,
    pub selector: Selector,
    /// `[belief][action]` one-step values.
    pub per_action: Vec<Vec<f64>>,
}

/// `max_a T_a(V)` at every sampled belief; ties go to the lowest action.
pub fn bellman_backup(
    model: &CertifiedModel,
    value: &dyn ValueFunction,
    sample: &BeliefSample,
) -> Result<Backup> {
    sample.check_model(model)?;
    let rows = sample
        .beliefs()
        .par_iter()
        .map(|mu| {
            (0..model.n_actions())
                .map(|a| bellman_backup_point(model, value, mu, a))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut values = Vec::with_capacity(rows.len());
    let mut actions = Vec::with_capacity(rows.len());
    for row in &rows {
        let (a, v) = argmax(row);
        values.push(v);
        actions.push(a);
    }
    Ok(Backup {
        values: TabulatedValue { values },
        selector: Selector { actions },
        per_action: rows,
    })
}

/// First index of the maximum.
pub(crate) fn argmax(xs: &[f64]) -> (usize, f64) {
    let mut best = (0, xs[0]);
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > best.1 {
            best = (i, x);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeneralizerKind {
    AlphaSet,
    /// `None` uses [`default_nn_lipschitz`].
    NearestNeighbor { lipschitz: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopRule {
    /// Stop once `r_bar gamma^t / (1 - gamma) <= epsilon`.
    APriori,
    /// Also stop when the sampled successive difference drops below
    /// `epsilon (1 - gamma) / gamma`.
    APrioriOrSuccessive,
}

#[derive(Debug, Clone)]
pub struct ViOptions {
    pub epsilon: f64,
    pub max_iters: usize,
    pub generalizer: GeneralizerKind,
    pub stop: StopRule,
}

impl Default for ViOptions {
    fn default() -> Self {
        ViOptions {
            epsilon: 1e-3,
            max_iters: 10_000,
            generalizer: GeneralizerKind::AlphaSet,
            stop: StopRule::APriori,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    /// Weighted sup-norm of `phi_t - phi_{t-1}` over the sample.
    pub sup_diff: f64,
    pub bound: f64,
}

#[derive(Debug, Clone)]
pub struct ViSolution {
    pub values: TabulatedValue,
    pub selector: Selector,
    pub iters: usize,
    /// Certified weighted-norm distance to the optimal value function.
    pub error_bound: f64,
    pub converged: bool,
    pub trace: Vec<IterRecord>,
    /// Pruned generalizer set after the last sweep (alpha-set mode only).
    pub alpha_set: Option<AlphaSet>,
}

impl ViSolution {
    pub fn require_converged(&self) -> Result<&Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::MaxItersExceeded {
                iters: self.iters,
                bound: self.error_bound,
            })
        }
    }
}

/// Jacobi value iteration from `phi_0 = 0`.
///
/// Always performs at least one sweep. On hitting `max_iters` the last
/// iterate is returned with `converged == false`.
pub fn solve_vi(
    model: &CertifiedModel,
    sample: &BeliefSample,
    opts: &ViOptions,
) -> Result<ViSolution> {
    sample.check_model(model)?;
    if !(opts.epsilon > 0.0) {
        return Err(Error::InvalidModel(format!("epsilon must be positive ({})", opts.epsilon)));
    }
    let c = *model.constants();
    let n = sample.len();
    let wf = *model.weight();
    let nn_lip = match opts.generalizer {
        GeneralizerKind::NearestNeighbor { lipschitz: Some(l) } => l,
        GeneralizerKind::NearestNeighbor { lipschitz: None } => default_nn_lipschitz(model)?,
        GeneralizerKind::AlphaSet => 0.0,
    };

    let mut values = TabulatedValue::zeros(n);
    let mut selector = Selector {
        actions: vec![0; n],
    };
    let mut set = AlphaSet::zero(model.grid().clone());
    let mut trace = Vec::new();
    let mut converged = false;
    let mut error_bound = c.a_priori_bound(0);
    let mut iters = 0;

    for t in 1..=opts.max_iters.max(1) {
        let backup = match opts.generalizer {
            GeneralizerKind::AlphaSet => {
                let b = bellman_backup(model, &set, sample)?;
                set = prune(&set_backup(model, &set, sample)?.set, sample)?;
                b
            }
            GeneralizerKind::NearestNeighbor { .. } => {
                let nn = NearestNeighbor {
                    sample,
                    values: &values.values,
                    lipschitz: nn_lip,
                };
                bellman_backup(model, &nn, sample)?
            }
        };
        let diff: Vec<f64> = backup
            .values
            .values
            .iter()
            .zip(&values.values)
            .map(|(a, b)| a - b)
            .collect();
        let sup_diff = weighted_norm(&diff, sample.beliefs(), &wf)?;
        let bound = c.a_priori_bound(t);
        trace.push(IterRecord {
            iter: t,
            sup_diff,
            bound,
        });
        values = backup.values;
        selector = backup.selector;
        iters = t;
        error_bound = bound;

        if bound <= opts.epsilon {
            converged = true;
            break;
        }
        if opts.stop == StopRule::APrioriOrSuccessive
            && c.gamma > 0.0
            && sup_diff <= opts.epsilon * (1.0 - c.gamma) / c.gamma
        {
            error_bound = bound.min(c.gamma / (1.0 - c.gamma) * sup_diff);
            converged = true;
            break;
        }
    }

    Ok(ViSolution {
        values,
        selector,
        iters,
        error_bound,
        converged,
        trace,
        alpha_set: match opts.generalizer {
            GeneralizerKind::AlphaSet => Some(set),
            _ => None,
        },
    })
}
