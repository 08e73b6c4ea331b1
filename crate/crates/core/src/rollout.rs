//! Monte Carlo evaluation of belief-feedback policies on simulated hidden
//! trajectories.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filter::{bayes_update, sample_index};
use crate::measure::{check_same_grid, DiscreteMeasure};
use crate::model::{CertifiedConstants, CertifiedModel, PomdpModel};
use crate::sample::BeliefSample;
use crate::value_iteration::{
    argmax, bellman_backup_point, nearest_belief, Selector, ValueFunction,
};

/// A map from beliefs to actions.
pub trait Policy: Sync {
    fn action(&self, mu: &DiscreteMeasure) -> Result<usize>;

    /// `Some(a)` when the policy plays `a` at every belief; rollouts then
    /// skip filtering.
    fn constant_action(&self) -> Option<usize> {
        None
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantPolicy(pub usize);

impl Policy for ConstantPolicy {
    fn action(&self, _mu: &DiscreteMeasure) -> Result<usize> {
        Ok(self.0)
    }

    fn constant_action(&self) -> Option<usize> {
        Some(self.0)
    }
}

/// Plays the tabulated action of the W1-nearest sampled belief.
pub struct SelectorPolicy<'a> {
    pub sample: &'a BeliefSample,
    pub selector: &'a Selector,
}

impl Policy for SelectorPolicy<'_> {
    fn action(&self, mu: &DiscreteMeasure) -> Result<usize> {
        Ok(self.selector.actions[nearest_belief(self.sample, mu)?.0])
    }

    fn constant_action(&self) -> Option<usize> {
        let first = *self.selector.actions.first()?;
        self.selector
            .actions
            .iter()
            .all(|&a| a == first)
            .then_some(first)
    }
}

/// One-step lookahead on a value function; ties go to the lowest action.
pub struct GreedyPolicy<'a> {
    pub model: &'a CertifiedModel,
    pub value: &'a dyn ValueFunction,
}

impl Policy for GreedyPolicy<'_> {
    fn action(&self, mu: &DiscreteMeasure) -> Result<usize> {
        let q = (0..self.model.n_actions())
            .map(|a| bellman_backup_point(self.model, self.value, mu, a))
            .collect::<Result<Vec<_>>>()?;
        Ok(argmax(&q).0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub paths: usize,
    pub horizon: usize,
}

/// Smallest `T` with `r_bar gamma^(T+1) / (1 - gamma) < epsilon / 10`.
pub fn horizon_for(c: &CertifiedConstants, epsilon: f64) -> usize {
    let mut t = 0;
    while c.a_priori_bound(t + 1) >= epsilon / 10.0 {
        t += 1;
    }
    t
}

/// Mean and standard error of `sum_{t <= T} alpha^t r(x_t, a_t)` over
/// `n_paths` simulated trajectories. Path `i` draws from its own ChaCha8
/// stream, so the estimate does not depend on the thread count.
pub fn rollout_estimate(
    model: &PomdpModel,
    policy: &dyn Policy,
    mu0: &DiscreteMeasure,
    horizon: usize,
    n_paths: usize,
    seed: u64,
) -> Result<RolloutEstimate> {
    check_same_grid(model.grid(), mu0.grid())?;
    if n_paths == 0 {
        return Err(Error::EmptySample);
    }
    let returns = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            simulate_path(model, policy, mu0, horizon, &mut rng)
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = n_paths as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = if n_paths > 1 {
        returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(RolloutEstimate {
        mean,
        stderr: (var / n).sqrt(),
        paths: n_paths,
        horizon,
    })
}

fn simulate_path(
    model: &PomdpModel,
    policy: &dyn Policy,
    mu0: &DiscreteMeasure,
    horizon: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let fixed = policy.constant_action();
    let phi = &model.observations().weights;
    let mut x = sample_index(mu0.weights(), rng);
    let mut mu = mu0.clone();
    let mut total = 0.0;
    let mut discount = 1.0;
    let mut node_probs = vec![0.0; model.n_nodes()];
    for t in 0..=horizon {
        let a = match fixed {
            Some(a) => a,
            None => policy.action(&mu)?,
        };
        total += discount * model.reward_row(a)[x];
        if t == horizon {
            break;
        }
        discount *= model.alpha();
        x = sample_index(model.transition_row(a, x), rng);
        if fixed.is_none() {
            for (p, (w, q)) in node_probs.iter_mut().zip(phi.iter().zip(model.obs_row(a, x))) {
                *p = w * q;
            }
            let j = sample_index(&node_probs, rng);
            mu = bayes_update(model, &mu, a, j)?;
        }
    }
    Ok(total)
}
