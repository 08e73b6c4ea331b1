//! Value functions as upper envelopes of finite sets of Lipschitz functions:
//! envelope evaluation, the sample-level Fenchel conjugate and biconjugate,
//! and the set-iteration backups (plain and per-action).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filter::{likelihoods, predict_weights, ZERO_LIKELIHOOD};
use crate::measure::{
    check_same_grid, dot, integrate, weighted_norm, DiscreteMeasure, GridRef, LipschitzFn,
};
use crate::model::CertifiedModel;
use crate::sample::BeliefSample;
use crate::value_iteration::{argmax, Selector, TabulatedValue, ValueFunction};

/// Sup-norm distance below which two backed-up functions are merged.
pub const DUPLICATE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetTag {
    Plain,
    PerAction(usize),
}

/// A nonempty finite set of functions on one grid. Each member remembers
/// the action whose backup produced it, if any.
#[derive(Debug, Clone)]
pub struct AlphaSet {
    grid: GridRef,
    fns: Vec<LipschitzFn>,
    actions: Vec<Option<usize>>,
    tag: SetTag,
}

impl AlphaSet {
    pub fn new(fns: Vec<LipschitzFn>) -> Result<Self> {
        let n = fns.len();
        Self::with_actions(fns, vec![None; n], SetTag::Plain)
    }

    pub fn with_actions(
        fns: Vec<LipschitzFn>,
        actions: Vec<Option<usize>>,
        tag: SetTag,
    ) -> Result<Self> {
        let first = fns.first().ok_or(Error::EmptySample)?;
        if actions.len() != fns.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} action tags for {} functions",
                actions.len(),
                fns.len()
            )));
        }
        let grid = first.grid().clone();
        for f in &fns {
            check_same_grid(&grid, f.grid())?;
        }
        Ok(AlphaSet {
            grid,
            fns,
            actions,
            tag,
        })
    }

    /// `{0}`.
    pub fn zero(grid: GridRef) -> Self {
        AlphaSet {
            fns: vec![LipschitzFn::zero(grid.clone())],
            grid,
            actions: vec![None],
            tag: SetTag::Plain,
        }
    }

    pub fn grid(&self) -> &GridRef {
        &self.grid
    }

    pub fn fns(&self) -> &[LipschitzFn] {
        &self.fns
    }

    pub fn actions(&self) -> &[Option<usize>] {
        &self.actions
    }

    pub fn tag(&self) -> SetTag {
        self.tag
    }

    pub fn len(&self) -> usize {
        self.fns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fns.is_empty()
    }

    pub fn max_lip(&self) -> f64 {
        self.fns.iter().map(|f| f.lip_const()).fold(0.0, f64::max)
    }

    /// `max - min` over all values of all members.
    pub fn oscillation(&self) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for f in &self.fns {
            for &v in f.values() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        hi - lo
    }

    fn retag(mut self, tag: SetTag) -> Self {
        self.tag = tag;
        self
    }

    /// Drops members within [`DUPLICATE_TOL`] (sup-norm) of an earlier one.
    pub fn merge_duplicates(self) -> Self {
        let mut fns: Vec<LipschitzFn> = Vec::with_capacity(self.fns.len());
        let mut actions = Vec::with_capacity(self.fns.len());
        for (f, a) in self.fns.into_iter().zip(self.actions) {
            if !fns.iter().any(|g| g.sup_distance(&f) < DUPLICATE_TOL) {
                fns.push(f);
                actions.push(a);
            }
        }
        AlphaSet {
            grid: self.grid,
            fns,
            actions,
            tag: self.tag,
        }
    }

    /// Concatenation in argument order.
    pub fn union(sets: &[AlphaSet]) -> Result<Self> {
        let mut fns = Vec::new();
        let mut actions = Vec::new();
        for s in sets {
            fns.extend(s.fns.iter().cloned());
            actions.extend(s.actions.iter().copied());
        }
        Self::with_actions(fns, actions, SetTag::Plain)
    }
}

/// `max_f integrate(f, mu)` with the first maximizing index.
pub fn eval_sup(set: &AlphaSet, mu: &DiscreteMeasure) -> Result<(f64, usize)> {
    check_same_grid(&set.grid, mu.grid())?;
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, f) in set.fns.iter().enumerate() {
        let v = dot(f.values(), mu.weights());
        if v > best.0 {
            best = (v, i);
        }
    }
    Ok(best)
}

/// Sample-level conjugate `max_i (integrate(f, mu_i) - phi(mu_i))`, a lower
/// bound on the conjugate over all beliefs.
pub fn conjugate_rho(
    f: &LipschitzFn,
    value: &dyn ValueFunction,
    sample: &BeliefSample,
) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for mu in sample.beliefs() {
        let v = value.value(mu)?;
        if !v.is_finite() {
            return Err(Error::NonFiniteValue);
        }
        best = best.max(integrate(f, mu)? - v);
    }
    Ok(best)
}

/// `max_f (integrate(f, mu) - rho(f))` over the candidates.
pub fn second_conjugate(
    mu: &DiscreteMeasure,
    candidates: &[LipschitzFn],
    value: &dyn ValueFunction,
    sample: &BeliefSample,
) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut best = f64::NEG_INFINITY;
    for f in candidates {
        best = best.max(integrate(f, mu)? - conjugate_rho(f, value, sample)?);
    }
    Ok(best)
}

/// `f - rho(f)`, which has conjugate zero on the same sample.
pub fn normalize_null_level(
    f: &LipschitzFn,
    value: &dyn ValueFunction,
    sample: &BeliefSample,
) -> Result<LipschitzFn> {
    let rho = conjugate_rho(f, value, sample)?;
    if !rho.is_finite() {
        return Err(Error::NonFiniteValue);
    }
    Ok(f.shifted(-rho))
}

/// Per-node winning function indices and the one-step value at `(mu, a)`.
struct ActionChoice {
    value: f64,
    winners: Vec<usize>,
}

/// Picks, per quadrature node, the candidate maximizing the unnormalized
/// posterior functional `sum_x' f(x') P~(x') q(y_j | x', a)`. Null nodes
/// contribute nothing and keep winner 0.
fn choose(
    model: &CertifiedModel,
    candidates: &[&LipschitzFn],
    mu: &DiscreteMeasure,
    a: usize,
) -> ActionChoice {
    let n = model.n_states();
    let nj = model.n_nodes();
    let predicted = predict_weights(model, mu.weights(), a);
    let lambda = likelihoods(model, &predicted, a);
    let phi = &model.observations().weights;

    // u[j][x'] = P~(x') q(y_j | x', a)
    let mut u = vec![0.0; nj * n];
    for (x, &p) in predicted.iter().enumerate() {
        if p > 0.0 {
            for (j, q) in model.obs_row(a, x).iter().enumerate() {
                u[j * n + x] = p * q;
            }
        }
    }

    let mut cont = 0.0;
    let mut winners = vec![0; nj];
    for j in 0..nj {
        if !(lambda[j] > ZERO_LIKELIHOOD) {
            continue;
        }
        let uj = &u[j * n..(j + 1) * n];
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, f) in candidates.iter().enumerate() {
            let s = dot(f.values(), uj);
            if s > best.0 {
                best = (s, i);
            }
        }
        winners[j] = best.1;
        cont += phi[j] * best.0;
    }
    ActionChoice {
        value: dot(model.reward_row(a), mu.weights()) + model.alpha() * cont,
        winners,
    }
}

/// `g(x) = r(x,a) + alpha sum_x' p(x'|x,a) sum_j phi_j f*_j(x') q(y_j|x',a)`.
fn assemble(
    model: &CertifiedModel,
    candidates: &[&LipschitzFn],
    a: usize,
    winners: &[usize],
) -> Result<LipschitzFn> {
    let n = model.n_states();
    let phi = &model.observations().weights;
    let h: Vec<f64> = (0..n)
        .map(|xn| {
            model
                .obs_row(a, xn)
                .iter()
                .zip(phi)
                .zip(winners)
                .map(|((q, w), &i)| w * q * candidates[i].values()[xn])
                .sum()
        })
        .collect();
    let r = model.reward_row(a);
    let g = (0..n)
        .map(|x| r[x] + model.alpha() * dot(model.transition_row(a, x), &h))
        .collect();
    LipschitzFn::new(model.grid().clone(), g)
}

/// Bound on the seminorm of any backed-up function:
/// `max_a [lip(r_a) + alpha * osc / 2 * C_a]` with `C_a` the largest
/// `||p(.|x,a) - p(.|x~,a)||_1 / d(x,x~)` over the pairs the seminorm uses.
pub fn backup_lip_bound(model: &CertifiedModel, previous: &AlphaSet) -> Result<f64> {
    let osc = previous.oscillation();
    let grid = model.grid();
    let n = model.n_states();
    let pairs: Vec<(usize, usize)> = if grid.kind() == crate::measure::MetricKind::Euclidean1d {
        (1..n).map(|i| (i - 1, i)).collect()
    } else {
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
    };
    let mut bound = 0.0f64;
    for a in 0..model.n_actions() {
        let r = LipschitzFn::new(grid.clone(), model.reward_row(a).to_vec())?;
        let mut c = 0.0f64;
        for &(i, j) in &pairs {
            let l1: f64 = model
                .transition_row(a, i)
                .iter()
                .zip(model.transition_row(a, j))
                .map(|(p, q)| (p - q).abs())
                .sum();
            c = c.max(l1 / grid.distance(i, j));
        }
        bound = bound.max(r.lip_const() + model.alpha() * 0.5 * osc * c);
    }
    Ok(bound)
}

#[derive(Debug, Clone)]
pub struct SetBackup {
    pub set: AlphaSet,
    pub values: TabulatedValue,
    pub selector: Selector,
    /// `[belief][action]` one-step values.
    pub per_action: Vec<Vec<f64>>,
}

/// One plain set-iteration step: per sampled belief, the backed-up function
/// of the maximizing action (lowest index on ties), duplicates merged.
pub fn set_backup(
    model: &CertifiedModel,
    set: &AlphaSet,
    sample: &BeliefSample,
) -> Result<SetBackup> {
    sample.check_model(model)?;
    check_same_grid(model.grid(), &set.grid)?;
    let candidates: Vec<&LipschitzFn> = set.fns.iter().collect();
    let per_belief = sample
        .beliefs()
        .par_iter()
        .map(|mu| {
            let choices: Vec<ActionChoice> = (0..model.n_actions())
                .map(|a| choose(model, &candidates, mu, a))
                .collect();
            let vals: Vec<f64> = choices.iter().map(|c| c.value).collect();
            let (a_star, _) = argmax(&vals);
            let g = assemble(model, &candidates, a_star, &choices[a_star].winners)?;
            let v = integrate(&g, mu)?;
            Ok((g, a_star, v, vals))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut fns = Vec::with_capacity(per_belief.len());
    let mut actions = Vec::with_capacity(per_belief.len());
    let mut values = Vec::with_capacity(per_belief.len());
    let mut selector = Vec::with_capacity(per_belief.len());
    let mut per_action = Vec::with_capacity(per_belief.len());
    for (g, a, v, vals) in per_belief {
        fns.push(g);
        actions.push(Some(a));
        values.push(v);
        selector.push(a);
        per_action.push(vals);
    }
    let set = AlphaSet::with_actions(fns, actions, SetTag::Plain)?.merge_duplicates();
    Ok(SetBackup {
        set,
        values: TabulatedValue { values },
        selector: Selector { actions: selector },
        per_action,
    })
}

#[derive(Debug, Clone)]
pub struct QSetBackup {
    /// One set per action, tagged [`SetTag::PerAction`].
    pub sets: Vec<AlphaSet>,
    pub values: TabulatedValue,
    pub selector: Selector,
    pub per_action: Vec<Vec<f64>>,
}

/// One per-action set-iteration step. The per-node sup ranges over the
/// union of all per-action sets; `g_{mu,a}` is filed under `a`.
pub fn q_set_backup(
    model: &CertifiedModel,
    qsets: &[AlphaSet],
    sample: &BeliefSample,
) -> Result<QSetBackup> {
    sample.check_model(model)?;
    if qsets.len() != model.n_actions() {
        return Err(Error::DimensionMismatch(format!(
            "{} per-action sets for {} actions",
            qsets.len(),
            model.n_actions()
        )));
    }
    for s in qsets {
        check_same_grid(model.grid(), &s.grid)?;
    }
    let candidates: Vec<&LipschitzFn> = qsets.iter().flat_map(|s| s.fns.iter()).collect();
    let per_belief = sample
        .beliefs()
        .par_iter()
        .map(|mu| {
            (0..model.n_actions())
                .map(|a| {
                    let c = choose(model, &candidates, mu, a);
                    let g = assemble(model, &candidates, a, &c.winners)?;
                    let v = integrate(&g, mu)?;
                    Ok((g, v))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let na = model.n_actions();
    let mut by_action: Vec<Vec<LipschitzFn>> = vec![Vec::new(); na];
    let mut values = Vec::with_capacity(per_belief.len());
    let mut selector = Vec::with_capacity(per_belief.len());
    let mut per_action = Vec::with_capacity(per_belief.len());
    for row in per_belief {
        let vals: Vec<f64> = row.iter().map(|(_, v)| *v).collect();
        let (a_star, v) = argmax(&vals);
        values.push(v);
        selector.push(a_star);
        per_action.push(vals);
        for (a, (g, _)) in row.into_iter().enumerate() {
            by_action[a].push(g);
        }
    }
    let sets = by_action
        .into_iter()
        .enumerate()
        .map(|(a, fns)| {
            let k = fns.len();
            Ok(AlphaSet::with_actions(fns, vec![Some(a); k], SetTag::PerAction(a))?
                .merge_duplicates())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QSetBackup {
        sets,
        values: TabulatedValue { values },
        selector: Selector { actions: selector },
        per_action,
    })
}

/// Keeps only members that win [`eval_sup`] at some sampled belief, in
/// their original order. Never returns an empty set.
pub fn prune(set: &AlphaSet, sample: &BeliefSample) -> Result<AlphaSet> {
    let mut keep = vec![false; set.len()];
    for mu in sample.beliefs() {
        keep[eval_sup(set, mu)?.1] = true;
    }
    let mut fns = Vec::new();
    let mut actions = Vec::new();
    for (i, k) in keep.iter().enumerate() {
        if *k {
            fns.push(set.fns[i].clone());
            actions.push(set.actions[i]);
        }
    }
    Ok(AlphaSet::with_actions(fns, actions, set.tag)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetAlgorithm {
    /// One set, outer max over actions inside the backup.
    Alg1,
    /// One set per action, sup over their union.
    Alg2,
}

impl std::str::FromStr for SetAlgorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "alg1" => Ok(SetAlgorithm::Alg1),
            "alg2" => Ok(SetAlgorithm::Alg2),
            other => Err(format!("unknown algorithm '{other}' (expected alg1 or alg2)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SetOptions {
    pub epsilon: f64,
    pub max_iters: usize,
    pub algorithm: SetAlgorithm,
    pub prune: bool,
}

impl Default for SetOptions {
    fn default() -> Self {
        SetOptions {
            epsilon: 1e-3,
            max_iters: 10_000,
            algorithm: SetAlgorithm::Alg1,
            prune: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetIterRecord {
    pub iter: usize,
    pub sup_diff: f64,
    pub bound: f64,
    pub set_size: usize,
    /// Largest seminorm among the freshly backed-up functions.
    pub lip_measured: f64,
    /// [`backup_lip_bound`] for the previous set.
    pub lip_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArgmaxRecord {
    pub belief: usize,
    pub function: usize,
    pub action: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct SetSolution {
    /// The final set; for [`SetAlgorithm::Alg2`] the union of `action_sets`.
    pub set: AlphaSet,
    pub action_sets: Option<Vec<AlphaSet>>,
    pub values: TabulatedValue,
    pub selector: Selector,
    pub iters: usize,
    pub error_bound: f64,
    pub converged: bool,
    pub trace: Vec<SetIterRecord>,
    /// Winning member of `set` per sampled belief.
    pub argmax_trace: Vec<ArgmaxRecord>,
}

impl SetSolution {
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

/// Set iteration from `{0}` until the a-priori bound reaches `epsilon`
/// (no sweep at all when it already does).
pub fn solve_sets(
    model: &CertifiedModel,
    sample: &BeliefSample,
    opts: &SetOptions,
) -> Result<SetSolution> {
    sample.check_model(model)?;
    if !(opts.epsilon > 0.0) {
        return Err(Error::InvalidModel(format!("epsilon must be positive ({})", opts.epsilon)));
    }
    let c = *model.constants();
    let wf = *model.weight();
    let n = sample.len();
    let grid = model.grid().clone();

    let mut values = TabulatedValue::zeros(n);
    let mut selector = Selector {
        actions: vec![0; n],
    };
    let mut sets: Vec<AlphaSet> = match opts.algorithm {
        SetAlgorithm::Alg1 => vec![AlphaSet::zero(grid.clone())],
        SetAlgorithm::Alg2 => (0..model.n_actions())
            .map(|a| AlphaSet::zero(grid.clone()).retag(SetTag::PerAction(a)))
            .collect(),
    };
    let mut trace = Vec::new();
    let mut iters = 0;
    let mut error_bound = c.a_priori_bound(0);

    while error_bound > opts.epsilon && iters < opts.max_iters {
        let union = AlphaSet::union(&sets)?;
        let lip_bound = backup_lip_bound(model, &union)?;
        let (new_sets, new_values, new_selector) = match opts.algorithm {
            SetAlgorithm::Alg1 => {
                let b = set_backup(model, &sets[0], sample)?;
                (vec![b.set], b.values, b.selector)
            }
            SetAlgorithm::Alg2 => {
                let b = q_set_backup(model, &sets, sample)?;
                (b.sets, b.values, b.selector)
            }
        };
        let lip_measured = new_sets.iter().map(|s| s.max_lip()).fold(0.0, f64::max);
        sets = if opts.prune {
            new_sets
                .iter()
                .map(|s| prune(s, sample))
                .collect::<Result<Vec<_>>>()?
        } else {
            new_sets
        };
        let diff: Vec<f64> = new_values
            .values
            .iter()
            .zip(&values.values)
            .map(|(a, b)| a - b)
            .collect();
        iters += 1;
        error_bound = c.a_priori_bound(iters);
        trace.push(SetIterRecord {
            iter: iters,
            sup_diff: weighted_norm(&diff, sample.beliefs(), &wf)?,
            bound: error_bound,
            set_size: sets.iter().map(|s| s.len()).sum(),
            lip_measured,
            lip_bound,
        });
        values = new_values;
        selector = new_selector;
    }

    let set = match opts.algorithm {
        SetAlgorithm::Alg1 => sets[0].clone(),
        SetAlgorithm::Alg2 => AlphaSet::union(&sets)?,
    };
    let argmax_trace = sample
        .beliefs()
        .iter()
        .enumerate()
        .map(|(i, mu)| {
            let (_, f) = eval_sup(&set, mu)?;
            Ok(ArgmaxRecord {
                belief: i,
                function: f,
                action: set.actions[f],
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SetSolution {
        set,
        action_sets: match opts.algorithm {
            SetAlgorithm::Alg1 => None,
            SetAlgorithm::Alg2 => Some(sets),
        },
        values,
        selector,
        iters,
        converged: error_bound <= opts.epsilon,
        error_bound,
        trace,
        argmax_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::StateGrid;
    use crate::model::certify;
    use crate::sample::{reachability_sample, ReachabilityConfig};
    use crate::toy::{toy_model, toy_model_with_dominated};
    use crate::value_iteration::bellman_backup_point;

    fn two_state() -> GridRef {
        StateGrid::discrete(vec![0.0, 1.0]).unwrap()
    }

    fn lf(grid: &GridRef, v: &[f64]) -> LipschitzFn {
        LipschitzFn::new(grid.clone(), v.to_vec()).unwrap()
    }

    fn bel(grid: &GridRef, p: f64) -> DiscreteMeasure {
        DiscreteMeasure::new(grid.clone(), vec![p, 1.0 - p]).unwrap()
    }

    fn toy_sample(depth: usize) -> (CertifiedModel, BeliefSample) {
        let model = certify(toy_model()).unwrap();
        let cfg = ReachabilityConfig {
            depth,
            ..Default::default()
        };
        let s = reachability_sample(&model, &model.initial_belief(), &cfg).unwrap();
        (model, s)
    }

    #[test]
    fn eval_sup_examples() {
        let g = two_state();
        let f = lf(&g, &[1.0, -2.0]);
        let mu = bel(&g, 0.3);
        let single = AlphaSet::new(vec![f.clone()]).unwrap();
        assert_eq!(eval_sup(&single, &mu).unwrap(), (integrate(&f, &mu).unwrap(), 0));
        let shifted = AlphaSet::new(vec![f.clone(), f.shifted(1.0)]).unwrap();
        assert_eq!(eval_sup(&shifted, &mu).unwrap().1, 1);

        // f1 = (1, 0), f2 = (0, 1) cross at p = 1/2
        let crossing = AlphaSet::new(vec![lf(&g, &[1.0, 0.0]), lf(&g, &[0.0, 1.0])]).unwrap();
        for p in [0.0, 0.2, 0.49, 0.5, 0.51, 0.8, 1.0] {
            let (v, i) = eval_sup(&crossing, &bel(&g, p)).unwrap();
            assert!((v - p.max(1.0 - p)).abs() < 1e-15);
            // the tie at p = 1/2 goes to the lower index
            assert_eq!(i, if p >= 0.5 { 0 } else { 1 }, "p = {p}");
        }
    }

    #[test]
    fn merge_and_prune() {
        let g = two_state();
        let f = lf(&g, &[1.0, 0.5]);
        let set = AlphaSet::new(vec![f.clone(), f.shifted(1e-12), f.shifted(-1.0)]).unwrap();
        assert_eq!(set.clone().merge_duplicates().len(), 2);
        let sample = BeliefSample::new(vec![bel(&g, 0.1), bel(&g, 0.9)]).unwrap();
        let pruned = prune(&set.clone().merge_duplicates(), &sample).unwrap();
        assert_eq!(pruned.len(), 1);
        assert_eq!(pruned.fns()[0].values(), f.values());
    }

    #[test]
    fn conjugate_examples() {
        let g = two_state();
        let sample =
            BeliefSample::new((0..=10).map(|i| bel(&g, i as f64 / 10.0)).collect()).unwrap();
        let f = lf(&g, &[0.7, -0.4]);
        let h = lf(&g, &[-0.2, 0.9]);
        let set = AlphaSet::new(vec![f.clone(), h.clone()]).unwrap();

        let nonneg = |mu: &DiscreteMeasure| mu.weights()[0] * 3.0;
        let rho0 = conjugate_rho(&LipschitzFn::zero(g.clone()), &nonneg, &sample).unwrap();
        assert_eq!(rho0, 0.0);

        let r = conjugate_rho(&f, &set, &sample).unwrap();
        assert!(r <= 1e-15);
        let r5 = conjugate_rho(&f.shifted(5.0), &set, &sample).unwrap();
        assert!((r5 - (r + 5.0)).abs() < 1e-12);

        for mu in sample.beliefs() {
            let sc = second_conjugate(mu, set.fns(), &set, &sample).unwrap();
            assert!((sc - eval_sup(&set, mu).unwrap().0).abs() < 1e-12);
        }

        let lifted = normalize_null_level(&f.shifted(5.0), &set, &sample).unwrap();
        assert!(conjugate_rho(&lifted, &set, &sample).unwrap().abs() < 1e-12);
        assert!(lifted.sup_distance(&f) < 1e-12);
    }

    #[test]
    fn first_backup_is_reward() {
        let (model, sample) = toy_sample(2);
        let zero = AlphaSet::zero(model.grid().clone());
        let b = set_backup(&model, &zero, &sample).unwrap();
        for (i, mu) in sample.beliefs().iter().enumerate() {
            let best = (0..2)
                .map(|a| dot(model.reward_row(a), mu.weights()))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((b.values.values[i] - best).abs() < 1e-15);
        }
        for (f, a) in b.set.fns().iter().zip(b.set.actions()) {
            assert_eq!(f.values(), model.reward_row(a.unwrap()));
        }
    }

    #[test]
    fn backup_matches_bellman_point() {
        let (model, sample) = toy_sample(2);
        let mut set = AlphaSet::zero(model.grid().clone());
        for _ in 0..4 {
            let b = set_backup(&model, &set, &sample).unwrap();
            for (i, mu) in sample.beliefs().iter().enumerate() {
                for a in 0..2 {
                    let want = bellman_backup_point(&model, &set, mu, a).unwrap();
                    assert!((b.per_action[i][a] - want).abs() < 1e-9);
                }
                assert!((b.values.values[i] - eval_sup(&b.set, mu).unwrap().0).abs() < 1e-12);
            }
            set = b.set;
        }
    }

    #[test]
    fn single_action_q_backup_is_set_backup() {
        let mut parts = crate::toy::toy_parts();
        parts.actions.truncate(1);
        parts.transition.truncate(1);
        parts.obs_density.truncate(1);
        parts.reward.truncate(1);
        let model = certify(crate::model::PomdpModel::new(parts).unwrap()).unwrap();
        let sample = reachability_sample(
            &model,
            &model.initial_belief(),
            &ReachabilityConfig::default(),
        )
        .unwrap();
        let mut plain = AlphaSet::zero(model.grid().clone());
        let mut q = vec![AlphaSet::zero(model.grid().clone())];
        for _ in 0..3 {
            let a = set_backup(&model, &plain, &sample).unwrap();
            let b = q_set_backup(&model, &q, &sample).unwrap();
            assert_eq!(a.values, b.values);
            assert_eq!(a.set.len(), b.sets[0].len());
            for (f, g) in a.set.fns().iter().zip(b.sets[0].fns()) {
                assert_eq!(f.values(), g.values());
            }
            plain = a.set;
            q = b.sets;
        }
    }

    #[test]
    fn algorithms_agree_and_dominated_action_unused() {
        let model = certify(toy_model_with_dominated()).unwrap();
        let sample = reachability_sample(
            &model,
            &model.initial_belief(),
            &ReachabilityConfig::default(),
        )
        .unwrap();
        for t in 1..=3 {
            let opts = SetOptions {
                max_iters: t,
                ..Default::default()
            };
            let a1 = solve_sets(&model, &sample, &opts).unwrap();
            let a2 = solve_sets(
                &model,
                &sample,
                &SetOptions {
                    algorithm: SetAlgorithm::Alg2,
                    ..opts
                },
            )
            .unwrap();
            assert_eq!(a1.iters, t);
            for (x, y) in a1.values.values.iter().zip(&a2.values.values) {
                assert!((x - y).abs() < 1e-12);
            }
            assert!(a2.argmax_trace.iter().all(|r| r.action != Some(2)));
        }
    }

    #[test]
    fn zero_reward_stays_zero() {
        let mut parts = crate::toy::toy_parts();
        parts.reward = vec![vec![0.0; 2]; 2];
        let model = certify(crate::model::PomdpModel::new(parts).unwrap()).unwrap();
        let sample = BeliefSample::new(vec![model.initial_belief()]).unwrap();
        let sol = solve_sets(&model, &sample, &SetOptions::default()).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.iters, 0);
        assert_eq!(sol.set.len(), 1);
        assert!(sol.set.fns()[0].values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn termination_iteration_and_lip_diagnostic() {
        let (model, sample) = toy_sample(3);
        let eps = 1e-3;
        let sol = solve_sets(
            &model,
            &sample,
            &SetOptions {
                epsilon: eps,
                ..Default::default()
            },
        )
        .unwrap();
        let c = model.constants();
        let want = ((eps * (1.0 - c.gamma) / c.r_bar).ln() / c.gamma.ln()).ceil() as usize;
        assert_eq!(sol.iters, want);
        assert!(sol.converged);
        for rec in &sol.trace {
            assert!(rec.lip_measured <= rec.lip_bound + 1e-9, "{rec:?}");
        }
    }
}
