mod common;

use proptest::prelude::*;
use rand::Rng;

use wbpomdp::conjugate::{
    conjugate_rho, eval_sup, normalize_null_level, prune, second_conjugate, solve_sets, AlphaSet,
    SetOptions,
};
use wbpomdp::filter::branch;
use wbpomdp::measure::{integrate, tilde_w};
use wbpomdp::model::certify;
use wbpomdp::sample::{reachability_sample, BeliefSample, ReachabilityConfig};
use wbpomdp::toy::toy_model;
use wbpomdp::transport::w1;
use wbpomdp::value_iteration::{bellman_backup, bellman_backup_point, solve_vi, ViOptions};
use wbpomdp::{CertifiedModel, DiscreteMeasure, LipschitzFn};

fn random_set(rng: &mut rand_chacha::ChaCha8Rng, model: &CertifiedModel, size: usize) -> AlphaSet {
    AlphaSet::new((0..size).map(|_| common::lipschitz(rng, model.grid(), 3.0)).collect()).unwrap()
}

fn shallow_sample(model: &CertifiedModel) -> BeliefSample {
    let cfg = ReachabilityConfig {
        depth: 2,
        cap: 60,
        ..Default::default()
    };
    reachability_sample(model, &model.initial_belief(), &cfg).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    /// `|T phi - T psi|` on the sample is bounded by `gamma` times the
    /// weighted distance of `phi` and `psi` over every posterior the
    /// backups touch.
    #[test]
    fn bellman_operator_contracts(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let model = common::model(&mut rng);
        let sample = shallow_sample(&model);
        let phi = random_set(&mut rng, &model, 3);
        let psi = random_set(&mut rng, &model, 3);
        let tp = bellman_backup(&model, &phi, &sample).unwrap();
        let tq = bellman_backup(&model, &psi, &sample).unwrap();

        let wf = *model.weight();
        let mut input_norm = 0.0f64;
        for mu in sample.beliefs() {
            for a in 0..model.n_actions() {
                for post in branch(&model, mu, a).unwrap().posteriors.into_iter().flatten() {
                    let d = eval_sup(&phi, &post).unwrap().0 - eval_sup(&psi, &post).unwrap().0;
                    input_norm = input_norm.max(d.abs() / tilde_w(&wf, &post).unwrap());
                }
            }
        }
        for (i, mu) in sample.beliefs().iter().enumerate() {
            let d = (tp.values.values[i] - tq.values.values[i]).abs() / tilde_w(&wf, mu).unwrap();
            prop_assert!(d <= model.constants().gamma * input_norm + 1e-9);
        }
    }

    #[test]
    fn bellman_operator_is_monotone(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let model = common::model(&mut rng);
        let sample = shallow_sample(&model);
        let phi = random_set(&mut rng, &model, 2);
        let more = random_set(&mut rng, &model, 2);
        let psi = AlphaSet::union(&[phi.clone(), more]).unwrap();
        let tp = bellman_backup(&model, &phi, &sample).unwrap();
        let tq = bellman_backup(&model, &psi, &sample).unwrap();
        for (a, b) in tp.values.values.iter().zip(&tq.values.values) {
            prop_assert!(*a <= b + 1e-12);
        }
    }

    #[test]
    fn backup_of_an_envelope_is_convex(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let model = common::model(&mut rng);
        let phi = random_set(&mut rng, &model, 4);
        let tv = |mu: &DiscreteMeasure| {
            (0..model.n_actions())
                .map(|a| bellman_backup_point(&model, &phi, mu, a).unwrap())
                .fold(f64::NEG_INFINITY, f64::max)
        };
        for _ in 0..10 {
            let m1 = common::measure(&mut rng, model.grid(), model.n_states());
            let m2 = common::measure(&mut rng, model.grid(), model.n_states());
            for kappa in [0.25, 0.5, 0.75] {
                let mix = DiscreteMeasure::mixture(kappa, &m1, &m2).unwrap();
                prop_assert!(tv(&mix) <= kappa * tv(&m1) + (1.0 - kappa) * tv(&m2) + 1e-8);
            }
        }
    }

    #[test]
    fn envelope_is_convex_and_lipschitz(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let model = common::model(&mut rng);
        let set = random_set(&mut rng, &model, 5);
        let v = |mu: &DiscreteMeasure| eval_sup(&set, mu).unwrap().0;
        for _ in 0..20 {
            let m1 = common::measure(&mut rng, model.grid(), 4);
            let m2 = common::measure(&mut rng, model.grid(), 4);
            for kappa in [0.25, 0.5, 0.75] {
                let mix = DiscreteMeasure::mixture(kappa, &m1, &m2).unwrap();
                prop_assert!(v(&mix) <= kappa * v(&m1) + (1.0 - kappa) * v(&m2) + 1e-12);
            }
            let d = w1(&m1, &m2).unwrap();
            prop_assert!((v(&m1) - v(&m2)).abs() <= set.max_lip() * d + 1e-9);
        }
    }

    #[test]
    fn conjugate_properties(seed in any::<u64>(), c in -5.0f64..5.0, bump in 0.0f64..2.0) {
        let mut rng = common::rng(seed);
        let model = common::model(&mut rng);
        let sample = shallow_sample(&model);
        let set = random_set(&mut rng, &model, 4);
        let f = common::lipschitz(&mut rng, model.grid(), 3.0);
        let rho = conjugate_rho(&f, &set, &sample).unwrap();
        let shifted = conjugate_rho(&f.shifted(c), &set, &sample).unwrap();
        prop_assert!((shifted - (rho + c)).abs() <= 1e-12);

        let g_vals: Vec<f64> = f.values().iter().map(|v| v + bump * rng.gen::<f64>()).collect();
        let g = LipschitzFn::new(model.grid().clone(), g_vals).unwrap();
        prop_assert!(rho <= conjugate_rho(&g, &set, &sample).unwrap());

        for member in set.fns() {
            prop_assert!(conjugate_rho(member, &set, &sample).unwrap() <= 1e-12);
        }
        for mu in sample.beliefs() {
            let sc = second_conjugate(mu, set.fns(), &set, &sample).unwrap();
            prop_assert!((sc - eval_sup(&set, mu).unwrap().0).abs() <= 1e-9);
            let any = second_conjugate(mu, &[f.clone(), g.clone()], &set, &sample).unwrap();
            prop_assert!(any <= eval_sup(&set, mu).unwrap().0 + 1e-9);
        }

        // after normalization f touches the envelope from below
        let n = normalize_null_level(&f, &set, &sample).unwrap();
        prop_assert!(conjugate_rho(&n, &set, &sample).unwrap().abs() <= 1e-12);
        let touch = sample
            .beliefs()
            .iter()
            .map(|mu| (integrate(&n, mu).unwrap() - eval_sup(&set, mu).unwrap().0).abs())
            .fold(f64::INFINITY, f64::min);
        prop_assert!(touch <= 1e-12);
    }

    #[test]
    fn pruning_keeps_the_sampled_envelope(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let model = common::model(&mut rng);
        let set = random_set(&mut rng, &model, 10);
        let beliefs: Vec<_> = (0..50).map(|_| common::measure(&mut rng, model.grid(), 3)).collect();
        let sample = BeliefSample::new(beliefs).unwrap();
        let pruned = prune(&set, &sample).unwrap();
        prop_assert!(!pruned.is_empty() && pruned.len() <= set.len());
        for mu in sample.beliefs() {
            let a = eval_sup(&set, mu).unwrap().0;
            let b = eval_sup(&pruned, mu).unwrap().0;
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn pruning_keeps_a_set_whose_members_all_win() {
    let grid = common::discrete_grid(2);
    let set = AlphaSet::new(vec![
        LipschitzFn::new(grid.clone(), vec![1.0, 0.0]).unwrap(),
        LipschitzFn::new(grid.clone(), vec![0.0, 1.0]).unwrap(),
    ])
    .unwrap();
    let sample = BeliefSample::new(vec![
        DiscreteMeasure::dirac(grid.clone(), 0).unwrap(),
        DiscreteMeasure::dirac(grid, 1).unwrap(),
    ])
    .unwrap();
    assert_eq!(prune(&set, &sample).unwrap().len(), 2);
}

#[test]
fn set_values_increase_from_zero_with_nonnegative_rewards() {
    let model = certify(toy_model()).unwrap();
    let sample = shallow_sample(&model);
    let mut prev = vec![0.0; sample.len()];
    for t in 1..=8 {
        let sol = solve_sets(
            &model,
            &sample,
            &SetOptions {
                max_iters: t,
                ..Default::default()
            },
        )
        .unwrap();
        for (a, b) in prev.iter().zip(&sol.values.values) {
            assert!(*b >= a - 1e-12);
        }
        prev = sol.values.values;
    }
}

#[test]
fn returned_set_is_certified_against_value_iteration() {
    let model = certify(toy_model()).unwrap();
    let sample = reachability_sample(&model, &model.initial_belief(), &ReachabilityConfig::default())
        .unwrap();
    let eps = 1e-3;
    let vi = solve_vi(
        &model,
        &sample,
        &ViOptions {
            epsilon: eps,
            ..Default::default()
        },
    )
    .unwrap();
    let sets = solve_sets(
        &model,
        &sample,
        &SetOptions {
            epsilon: eps,
            ..Default::default()
        },
    )
    .unwrap();
    let wf = *model.weight();
    for (i, mu) in sample.beliefs().iter().enumerate() {
        let w = tilde_w(&wf, mu).unwrap();
        for f in sets.set.fns() {
            let lhs = integrate(f, mu).unwrap() - sets.error_bound * w;
            assert!(lhs <= vi.values.values[i] + vi.error_bound * w);
        }
    }
}

#[test]
fn solvers_agree_on_random_models() {
    let mut rng = common::rng(11);
    for _ in 0..10 {
        let model = common::model(&mut rng);
        let sample = shallow_sample(&model);
        let vi = solve_vi(&model, &sample, &ViOptions::default()).unwrap();
        let sets = solve_sets(&model, &sample, &SetOptions::default()).unwrap();
        assert!(vi.converged && sets.converged);
        let wf = *model.weight();
        for (i, mu) in sample.beliefs().iter().enumerate() {
            let d = (vi.values.values[i] - sets.values.values[i]).abs();
            assert!(d <= (vi.error_bound + sets.error_bound) * tilde_w(&wf, mu).unwrap());
        }
    }
}
