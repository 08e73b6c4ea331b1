//! Finite belief samples over which value functions are tabulated.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::filter::branch;
use crate::measure::{check_same_grid, DiscreteMeasure, MetricKind};
use crate::model::PomdpModel;
use crate::transport::{w1_1d_unchecked, w1_lp};

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    UserSupplied,
    ReachabilityTree { depth: usize, seed: u64 },
}

/// A nonempty list of beliefs on a common grid.
#[derive(Debug, Clone)]
pub struct BeliefSample {
    beliefs: Vec<DiscreteMeasure>,
    provenance: Provenance,
}

impl BeliefSample {
    pub fn new(beliefs: Vec<DiscreteMeasure>) -> Result<Self> {
        Self::with_provenance(beliefs, Provenance::UserSupplied)
    }

    fn with_provenance(beliefs: Vec<DiscreteMeasure>, provenance: Provenance) -> Result<Self> {
        let first = beliefs.first().ok_or(Error::EmptySample)?;
        for b in &beliefs {
            check_same_grid(first.grid(), b.grid())?;
        }
        Ok(BeliefSample { beliefs, provenance })
    }

    pub fn beliefs(&self) -> &[DiscreteMeasure] {
        &self.beliefs
    }

    pub fn len(&self) -> usize {
        self.beliefs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beliefs.is_empty()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub(crate) fn check_model(&self, model: &PomdpModel) -> Result<()> {
        check_same_grid(model.grid(), self.beliefs[0].grid())
    }
}

#[derive(Debug, Clone)]
pub struct ReachabilityConfig {
    pub depth: usize,
    pub cap: usize,
    /// Random pairwise mixtures appended after the tree, while below `cap`.
    pub mixtures: usize,
    pub dedup_tol: f64,
    pub seed: u64,
}

impl Default for ReachabilityConfig {
    fn default() -> Self {
        ReachabilityConfig {
            depth: 3,
            cap: 5000,
            mixtures: 0,
            dedup_tol: 1e-6,
            seed: 0,
        }
    }
}

/// Breadth-first reachability tree from `root`: all posteriors over all
/// actions and observation nodes, level by level, deduplicated at
/// `W1 < dedup_tol`. A level that would overflow the cap is shuffled with
/// the seeded generator and truncated. The root is always belief 0.
pub fn reachability_sample(
    model: &PomdpModel,
    root: &DiscreteMeasure,
    cfg: &ReachabilityConfig,
) -> Result<BeliefSample> {
    check_same_grid(model.grid(), root.grid())?;
    if cfg.cap == 0 {
        return Err(Error::EmptySample);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dedup = Dedup::new(cfg.dedup_tol);
    dedup.insert(root.clone());
    let mut frontier = vec![root.clone()];

    for _ in 0..cfg.depth {
        if dedup.len() >= cfg.cap || frontier.is_empty() {
            break;
        }
        let mut children = Vec::new();
        for mu in &frontier {
            for a in 0..model.n_actions() {
                children.extend(branch(model, mu, a)?.posteriors.into_iter().flatten());
            }
        }
        let room = cfg.cap - dedup.len();
        if children.len() > room {
            children.shuffle(&mut rng);
        }
        let mut next = Vec::new();
        for child in children {
            if dedup.len() >= cfg.cap {
                break;
            }
            if dedup.insert(child.clone()) {
                next.push(child);
            }
        }
        frontier = next;
    }

    let mut attempts = 0;
    let mut added = 0;
    while added < cfg.mixtures && dedup.len() < cfg.cap && attempts < 10 * cfg.mixtures {
        attempts += 1;
        let n = dedup.len();
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        let kappa: f64 = rng.gen();
        let mix = DiscreteMeasure::mixture(kappa, &dedup.items[i], &dedup.items[j])?;
        if dedup.insert(mix) {
            added += 1;
        }
    }

    BeliefSample::with_provenance(
        dedup.items,
        Provenance::ReachabilityTree {
            depth: cfg.depth,
            seed: cfg.seed,
        },
    )
}

struct Dedup {
    tol: f64,
    items: Vec<DiscreteMeasure>,
    means: Vec<f64>,
}

impl Dedup {
    fn new(tol: f64) -> Self {
        Dedup {
            tol,
            items: Vec::new(),
            means: Vec::new(),
        }
    }

    fn len(&self) -> usize {
        self.items.len()
    }

    /// Adds `mu` unless it is within `tol` of a stored belief.
    fn insert(&mut self, mu: DiscreteMeasure) -> bool {
        let grid = mu.grid().clone();
        let mean = mu.mean();
        let dup = match grid.kind() {
            MetricKind::Euclidean1d => self.items.iter().zip(&self.means).any(|(other, &m)| {
                // |mean difference| lower-bounds W1
                (m - mean).abs() < self.tol
                    && w1_1d_unchecked(grid.points(), mu.weights(), other.weights()) < self.tol
            }),
            _ => {
                let dmin = min_positive_distance(&grid);
                self.items.iter().any(|other| {
                    let tv = 0.5
                        * mu.weights()
                            .iter()
                            .zip(other.weights())
                            .map(|(a, b)| (a - b).abs())
                            .sum::<f64>();
                    dmin * tv < self.tol
                        && w1_lp(&mu, other).map(|d| d < self.tol).unwrap_or(false)
                })
            }
        };
        if dup {
            return false;
        }
        self.means.push(mean);
        self.items.push(mu);
        true
    }
}

fn min_positive_distance(grid: &crate::measure::StateGrid) -> f64 {
    let n = grid.len();
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            best = best.min(grid.distance(i, j));
        }
    }
    if best.is_finite() {
        best
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::toy_model;

    #[test]
    fn tree_is_rooted_deduplicated_and_capped() {
        let model = toy_model();
        let root = model.initial_belief();
        let cfg = ReachabilityConfig {
            depth: 3,
            ..Default::default()
        };
        let s = reachability_sample(&model, &root, &cfg).unwrap();
        assert!(s.beliefs()[0].max_abs_diff(&root) == 0.0);
        // 2 actions x 2 observations: at most 1 + 4 + 16 + 64
        assert!(s.len() <= 85 && s.len() > 20);
        for (i, a) in s.beliefs().iter().enumerate() {
            for b in &s.beliefs()[..i] {
                assert!(w1_lp(a, b).unwrap() >= 1e-6);
            }
        }
        let capped = reachability_sample(&model, &root, &ReachabilityConfig { cap: 10, ..cfg })
            .unwrap();
        assert_eq!(capped.len(), 10);
    }

    #[test]
    fn mixtures_fill_up_to_cap() {
        let model = toy_model();
        let root = model.initial_belief();
        let cfg = ReachabilityConfig {
            depth: 1,
            cap: 40,
            mixtures: 100,
            seed: 7,
            ..Default::default()
        };
        let s = reachability_sample(&model, &root, &cfg).unwrap();
        assert_eq!(s.len(), 40);
        let again = reachability_sample(&model, &root, &cfg).unwrap();
        for (a, b) in s.beliefs().iter().zip(again.beliefs()) {
            assert_eq!(a.weights(), b.weights());
        }
    }

    #[test]
    fn empty_sample_rejected() {
        assert!(matches!(BeliefSample::new(vec![]), Err(Error::EmptySample)));
    }
}
