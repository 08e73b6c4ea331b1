#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wbpomdp::model::{certify, ModelParts, ObservationQuadrature};
use wbpomdp::{CertifiedModel, DiscreteMeasure, GridRef, LipschitzFn, PomdpModel, StateGrid, WeightFunction};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn grid_1d(rng: &mut ChaCha8Rng, n: usize) -> GridRef {
    let mut x = rng.gen_range(-2.0..0.0);
    let pts = (0..n)
        .map(|_| {
            x += rng.gen_range(0.05..1.0);
            x
        })
        .collect();
    StateGrid::euclidean_1d(pts).unwrap()
}

pub fn discrete_grid(n: usize) -> GridRef {
    StateGrid::discrete((0..n).map(|i| i as f64).collect()).unwrap()
}

/// A measure with at most `max_atoms` atoms at random grid positions.
pub fn measure(rng: &mut ChaCha8Rng, grid: &GridRef, max_atoms: usize) -> DiscreteMeasure {
    let n = grid.len();
    let atoms = rng.gen_range(1..=max_atoms.min(n));
    let mut w = vec![0.0; n];
    for _ in 0..atoms {
        w[rng.gen_range(0..n)] += rng.gen_range(0.05..1.0);
    }
    DiscreteMeasure::new(grid.clone(), w).unwrap()
}

pub fn full_measure(rng: &mut ChaCha8Rng, grid: &GridRef) -> DiscreteMeasure {
    let w = (0..grid.len()).map(|_| rng.gen_range(0.01..1.0)).collect();
    DiscreteMeasure::new(grid.clone(), w).unwrap()
}

pub fn lipschitz(rng: &mut ChaCha8Rng, grid: &GridRef, scale: f64) -> LipschitzFn {
    let v = (0..grid.len()).map(|_| rng.gen_range(-scale..scale)).collect();
    LipschitzFn::new(grid.clone(), v).unwrap()
}

fn stochastic_row(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n)
        .map(|_| if rng.gen_bool(0.8) { rng.gen_range(0.0..1.0) } else { 0.0 })
        .collect();
    let s: f64 = raw.iter().sum();
    if s == 0.0 {
        let mut r = vec![0.0; n];
        r[rng.gen_range(0..n)] = 1.0;
        return r;
    }
    raw.into_iter().map(|p| p / s).collect()
}

/// A random finite model with a strictly positive observation density, on
/// either a 1-D grid or the discrete metric. Discount and weight are chosen
/// so that certification always succeeds.
pub fn model(rng: &mut ChaCha8Rng) -> CertifiedModel {
    let n = rng.gen_range(2..=5);
    let na = rng.gen_range(1..=3);
    let nj = rng.gen_range(1..=3);
    let grid = if rng.gen_bool(0.5) {
        grid_1d(rng, n)
    } else {
        discrete_grid(n)
    };
    let phi: Vec<f64> = (0..nj).map(|_| rng.gen_range(0.2..2.0)).collect();
    let obs_density = (0..na)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let raw: Vec<f64> = (0..nj).map(|_| rng.gen_range(0.05..1.0)).collect();
                    let s: f64 = raw.iter().zip(&phi).map(|(q, w)| q * w).sum();
                    raw.into_iter().map(|q| q / s).collect()
                })
                .collect()
        })
        .collect();
    let parts = ModelParts {
        grid: grid.clone(),
        actions: (0..na).map(|a| format!("a{a}")).collect(),
        observations: ObservationQuadrature::new((0..nj).map(|j| j as f64).collect(), phi).unwrap(),
        transition: (0..na)
            .map(|_| (0..n).map(|_| stochastic_row(rng, n)).collect())
            .collect(),
        obs_density,
        reward: (0..na)
            .map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect(),
        alpha: rng.gen_range(0.3..0.75),
        weight: WeightFunction::new(grid.points()[0], 0.05).unwrap(),
        init_obs: None,
        initial_belief: None,
    };
    certify(PomdpModel::new(parts).unwrap()).unwrap()
}
