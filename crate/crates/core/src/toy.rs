//! A small finite POMDP used in tests, examples and the `example toy` CLI
//! subcommand.
//!
//! Two states under the discrete metric, two actions, two observations with
//! counting reference measure. `stay` pays 1 in state 0 and nothing in
//! state 1 and mostly keeps the state; `reset` pays 0.3 everywhere and sends
//! the system to state 0 with probability 0.8. Observations report the
//! current state correctly with probability 0.85.

use crate::measure::{StateGrid, WeightFunction};
use crate::model::{ModelParts, ObservationQuadrature, PomdpModel};

pub fn toy_parts() -> ModelParts {
    let grid = StateGrid::discrete(vec![0.0, 1.0]).expect("valid grid");
    let q = vec![vec![0.85, 0.15], vec![0.15, 0.85]];
    ModelParts {
        grid,
        actions: vec!["stay".into(), "reset".into()],
        observations: ObservationQuadrature::new(vec![0.0, 1.0], vec![1.0, 1.0])
            .expect("valid quadrature"),
        transition: vec![
            vec![vec![0.9, 0.1], vec![0.1, 0.9]],
            vec![vec![0.8, 0.2], vec![0.8, 0.2]],
        ],
        obs_density: vec![q.clone(), q],
        reward: vec![vec![1.0, 0.0], vec![0.3, 0.3]],
        alpha: 0.9,
        weight: WeightFunction::new(0.0, 0.1).expect("valid weight"),
        init_obs: None,
        initial_belief: Some(vec![0.5, 0.5]),
    }
}

pub fn toy_model() -> PomdpModel {
    PomdpModel::new(toy_parts()).expect("toy model is valid")
}

/// The toy model with a third action `idle` that copies the `stay` kernels
/// but pays 0.5 less in every state.
pub fn toy_model_with_dominated() -> PomdpModel {
    let mut parts = toy_parts();
    parts.actions.push("idle".into());
    parts.transition.push(parts.transition[0].clone());
    parts.obs_density.push(parts.obs_density[0].clone());
    parts.reward.push(parts.reward[0].iter().map(|r| r - 0.5).collect());
    PomdpModel::new(parts).expect("toy model is valid")
}
