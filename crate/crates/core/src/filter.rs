//! Belief-MDP reduction: expected reward, predicted measure, observation
//! marginal and the Bayes posterior in density form.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::measure::{check_same_grid, dot, DiscreteMeasure};
use crate::model::PomdpModel;

/// Observation nodes with likelihood at or below this are null events.
pub const ZERO_LIKELIHOOD: f64 = 1e-300;
/// Posterior atoms lighter than this are dropped.
pub const POSTERIOR_PRUNE: f64 = 1e-15;

/// `P~(. | mu, a)`, the one-step predicted state distribution.
#[derive(Debug, Clone)]
pub struct PredictedMeasure {
    pub measure: DiscreteMeasure,
    pub action: usize,
}

/// Per-node observation likelihoods `lambda_j`; node `j` has probability
/// `phi_j * lambda_j`.
#[derive(Debug, Clone)]
pub struct ObservationMarginal {
    pub lambda: Vec<f64>,
    pub node_weights: Vec<f64>,
}

impl ObservationMarginal {
    pub fn probability(&self, j: usize) -> f64 {
        self.node_weights[j] * self.lambda[j]
    }

    pub fn probabilities(&self) -> Vec<f64> {
        (0..self.lambda.len()).map(|j| self.probability(j)).collect()
    }
}

fn check_inputs(model: &PomdpModel, mu: &DiscreteMeasure, a: usize) -> Result<()> {
    check_same_grid(model.grid(), mu.grid())?;
    if a >= model.n_actions() {
        return Err(Error::DimensionMismatch(format!(
            "action {a} out of range {}",
            model.n_actions()
        )));
    }
    Ok(())
}

/// `r~(mu, a) = sum_x r(x, a) mu(x)`.
pub fn expected_reward(model: &PomdpModel, mu: &DiscreteMeasure, a: usize) -> Result<f64> {
    check_inputs(model, mu, a)?;
    Ok(dot(model.reward_row(a), mu.weights()))
}

pub fn predict(model: &PomdpModel, mu: &DiscreteMeasure, a: usize) -> Result<PredictedMeasure> {
    check_inputs(model, mu, a)?;
    let weights = predict_weights(model, mu.weights(), a);
    Ok(PredictedMeasure {
        measure: DiscreteMeasure::from_unnormalized(mu.grid().clone(), weights),
        action: a,
    })
}

/// `sum_x mu_x p(. | x, a)` on raw weight vectors.
pub(crate) fn predict_weights(model: &PomdpModel, mu: &[f64], a: usize) -> Vec<f64> {
    let mut out = vec![0.0; model.n_states()];
    for (x, &m) in mu.iter().enumerate() {
        if m > 0.0 {
            for (o, p) in out.iter_mut().zip(model.transition_row(a, x)) {
                *o += m * p;
            }
        }
    }
    out
}

/// `lambda_j = sum_x' P~(x') q(y_j | x', a)`.
pub(crate) fn likelihoods(model: &PomdpModel, predicted: &[f64], a: usize) -> Vec<f64> {
    let mut lambda = vec![0.0; model.n_nodes()];
    for (x, &p) in predicted.iter().enumerate() {
        if p > 0.0 {
            for (l, q) in lambda.iter_mut().zip(model.obs_row(a, x)) {
                *l += p * q;
            }
        }
    }
    lambda
}

pub fn obs_marginal(
    model: &PomdpModel,
    mu: &DiscreteMeasure,
    a: usize,
) -> Result<ObservationMarginal> {
    check_inputs(model, mu, a)?;
    let predicted = predict_weights(model, mu.weights(), a);
    Ok(ObservationMarginal {
        lambda: likelihoods(model, &predicted, a),
        node_weights: model.observations().weights.clone(),
    })
}

/// Posterior `M(. | mu, a, y_j)`.
pub fn bayes_update(
    model: &PomdpModel,
    mu: &DiscreteMeasure,
    a: usize,
    j: usize,
) -> Result<DiscreteMeasure> {
    check_inputs(model, mu, a)?;
    if j >= model.n_nodes() {
        return Err(Error::DimensionMismatch(format!("node {j} out of range")));
    }
    let predicted = predict_weights(model, mu.weights(), a);
    posterior_from_predicted(model, mu, &predicted, a, j)
}

pub(crate) fn posterior_from_predicted(
    model: &PomdpModel,
    mu: &DiscreteMeasure,
    predicted: &[f64],
    a: usize,
    j: usize,
) -> Result<DiscreteMeasure> {
    let mut post: Vec<f64> = Vec::with_capacity(predicted.len());
    let mut lambda = 0.0;
    for (x, &p) in predicted.iter().enumerate() {
        let v = if p > 0.0 { p * model.obs_density(a, x, j) } else { 0.0 };
        lambda += v;
        post.push(v);
    }
    if !(lambda > ZERO_LIKELIHOOD) {
        return Err(Error::ZeroLikelihood {
            node: j,
            likelihood: lambda,
        });
    }
    Ok(DiscreteMeasure::from_unnormalized(mu.grid().clone(), post).pruned(POSTERIOR_PRUNE))
}

/// Everything a one-step backup needs at `(mu, a)`: expected reward,
/// predicted weights, likelihoods and the posterior at every node with
/// positive likelihood.
#[derive(Debug, Clone)]
pub struct Branching {
    pub reward: f64,
    pub predicted: Vec<f64>,
    pub marginal: ObservationMarginal,
    /// `None` where the node is a null event.
    pub posteriors: Vec<Option<DiscreteMeasure>>,
}

pub fn branch(model: &PomdpModel, mu: &DiscreteMeasure, a: usize) -> Result<Branching> {
    check_inputs(model, mu, a)?;
    let reward = dot(model.reward_row(a), mu.weights());
    let predicted = predict_weights(model, mu.weights(), a);
    let lambda = likelihoods(model, &predicted, a);
    let posteriors = lambda
        .iter()
        .enumerate()
        .map(|(j, &l)| {
            if l > ZERO_LIKELIHOOD {
                posterior_from_predicted(model, mu, &predicted, a, j).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Branching {
        reward,
        predicted,
        marginal: ObservationMarginal {
            lambda,
            node_weights: model.observations().weights.clone(),
        },
        posteriors,
    })
}

/// Draws an observation node from the marginal and returns it with the
/// posterior. Deterministic in `seed`.
pub fn sample_transition(
    model: &PomdpModel,
    mu: &DiscreteMeasure,
    a: usize,
    seed: u64,
) -> Result<(usize, DiscreteMeasure)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_transition_with(model, mu, a, &mut rng)
}

pub fn sample_transition_with<R: Rng>(
    model: &PomdpModel,
    mu: &DiscreteMeasure,
    a: usize,
    rng: &mut R,
) -> Result<(usize, DiscreteMeasure)> {
    let marginal = obs_marginal(model, mu, a)?;
    let j = sample_index(&marginal.probabilities(), rng);
    let post = bayes_update(model, mu, a, j)?;
    Ok((j, post))
}

/// Inverse-CDF draw from nonnegative weights (need not sum to one exactly).
pub(crate) fn sample_index<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}
