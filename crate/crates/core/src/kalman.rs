//! The controlled scalar linear-Gaussian model
//! `x' = d + b(a) x + sigma n`, `y = h(x', a) + sigma~ n~`, truncated to a
//! uniform grid, with a weight function derived from its linear drift bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{DiscreteMeasure, StateGrid, WeightFunction};
use crate::model::{
    certify_with_beta, estimate_drift_beta, tv_on_nodes, CertifiedModel, ModelParts,
    ObservationQuadrature, PomdpModel, TvProbe, TvReport,
};
use crate::quadrature::{nodes_and_weights, QuadratureRule};

/// Rows keeping less than this much mass on the grid are rejected.
pub const MIN_ROW_MASS: f64 = 0.99;

/// `h(x, a) = offset + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineObs {
    pub offset: f64,
    pub slope: f64,
}

/// `r(x, a) = offset + abs_coef * |x| + lin_coef * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub offset: f64,
    pub abs_coef: f64,
    pub lin_coef: f64,
}

impl RewardSpec {
    pub fn eval(&self, x: f64) -> f64 {
        self.offset + self.abs_coef * x.abs() + self.lin_coef * x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObsSpec {
    pub nodes: usize,
    #[serde(default)]
    pub rule: QuadratureRule,
    /// Half-margin around the range of `h`, in units of `sigma~`.
    pub margin_sigmas: f64,
}

impl Default for ObsSpec {
    fn default() -> Self {
        ObsSpec {
            nodes: 33,
            rule: QuadratureRule::Midpoint,
            margin_sigmas: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KalmanSpec {
    pub d: f64,
    /// Feedback coefficient per action; `max |b| < 1`.
    pub b: Vec<f64>,
    pub sigma: f64,
    /// Observation mean per action.
    pub h: Vec<AffineObs>,
    pub sigma_tilde: f64,
    /// Reward per action.
    pub reward: Vec<RewardSpec>,
    pub alpha: f64,
    pub grid: GridSpec,
    #[serde(default)]
    pub obs: ObsSpec,
    /// Gaussian initial belief, discretized on the grid. Defaults to N(0, 2^2).
    #[serde(default)]
    pub prior: Option<PriorSpec>,
}

impl KalmanSpec {
    /// Three actions `b in {-0.5, 0, 0.5}`, `d = 0`, `sigma = 1`, `h = x`,
    /// `sigma~ = 0.5`, `r = -|x|`, `alpha = 0.9` on `[-8, 8]` with step 0.1.
    pub fn reference() -> Self {
        KalmanSpec {
            d: 0.0,
            b: vec![-0.5, 0.0, 0.5],
            sigma: 1.0,
            h: vec![
                AffineObs {
                    offset: 0.0,
                    slope: 1.0
                };
                3
            ],
            sigma_tilde: 0.5,
            reward: vec![
                RewardSpec {
                    offset: 0.0,
                    abs_coef: -1.0,
                    lin_coef: 0.0
                };
                3
            ],
            alpha: 0.9,
            grid: GridSpec {
                lo: -8.0,
                hi: 8.0,
                step: 0.1,
            },
            obs: ObsSpec::default(),
            prior: None,
        }
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.grid.step = step;
        self
    }

    pub fn n_actions(&self) -> usize {
        self.b.len()
    }

    /// `max_a |b(a)|`.
    pub fn epsilon(&self) -> f64 {
        self.b.iter().fold(0.0f64, |m, b| m.max(b.abs()))
    }

    pub fn validate(&self) -> Result<()> {
        let na = self.b.len();
        if na == 0 {
            return Err(Error::InvalidModel("no actions".into()));
        }
        if self.h.len() != na || self.reward.len() != na {
            return Err(Error::DimensionMismatch(format!(
                "b, h and reward need one entry per action ({na})"
            )));
        }
        if !(self.epsilon() < 1.0) {
            return Err(Error::InvalidModel(format!(
                "max |b| = {} must be below 1",
                self.epsilon()
            )));
        }
        if !(self.sigma > 0.0) || !(self.sigma_tilde > 0.0) {
            return Err(Error::InvalidModel("sigma and sigma_tilde must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidModel(format!("discount {} not in (0,1)", self.alpha)));
        }
        if self.obs.nodes == 0 || !(self.obs.margin_sigmas > 0.0) {
            return Err(Error::InvalidModel("observation quadrature needs nodes and a margin".into()));
        }
        if let Some(p) = &self.prior {
            if !(p.std > 0.0) {
                return Err(Error::InvalidModel("prior std must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn action_names(&self) -> Vec<String> {
        self.b.iter().map(|b| format!("b={b}")).collect()
    }

    fn mean_next(&self, a: usize, x: f64) -> f64 {
        self.d + self.b[a] * x
    }

    fn h(&self, a: usize, x: f64) -> f64 {
        self.h[a].offset + self.h[a].slope * x
    }
}

fn normal_pdf(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    (-0.5 * z * z).exp() / (std * (2.0 * std::f64::consts::PI).sqrt())
}

/// Weight-function parameters derived from the drift bound
/// `E|x'| <= sqrt(sigma^2 + (d + b x)^2) <= beta~ |x| + K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightChoice {
    pub k: f64,
    pub beta: f64,
    pub beta_tilde: f64,
    pub big_k: f64,
}

/// `beta~ = (1 + eps) / 2`, `K` the grid maximum of
/// `sqrt(sigma^2 + (d + b x)^2) - beta~ |x|` over actions, `beta` the
/// midpoint of `(1, 1/alpha)` and `k = (beta - 1) / K`.
pub fn choose_weight(spec: &KalmanSpec) -> Result<WeightChoice> {
    spec.validate()?;
    let grid = state_grid(spec)?;
    let beta_tilde = 0.5 * (1.0 + spec.epsilon());
    let mut big_k = f64::NEG_INFINITY;
    for &x in grid.points() {
        for a in 0..spec.n_actions() {
            let m = spec.mean_next(a, x);
            big_k = big_k.max((spec.sigma * spec.sigma + m * m).sqrt() - beta_tilde * x.abs());
        }
    }
    // sqrt(sigma^2 + m^2) >= sigma > 0 at the grid point nearest 0
    let beta = 0.5 * (1.0 + 1.0 / spec.alpha);
    Ok(WeightChoice {
        k: (beta - 1.0) / big_k,
        beta,
        beta_tilde,
        big_k,
    })
}

fn state_grid(spec: &KalmanSpec) -> Result<crate::measure::GridRef> {
    StateGrid::uniform_1d(spec.grid.lo, spec.grid.hi, spec.grid.step)
}

/// Lengths of the cells `[midpoint to left neighbour, midpoint to right
/// neighbour]`, clipped at the grid ends.
fn cell_widths(points: &[f64]) -> Vec<f64> {
    let n = points.len();
    (0..n)
        .map(|i| {
            let left = if i == 0 { points[0] } else { 0.5 * (points[i - 1] + points[i]) };
            let right = if i + 1 == n {
                points[n - 1]
            } else {
                0.5 * (points[i] + points[i + 1])
            };
            right - left
        })
        .collect()
}

/// Observation nodes and weights over `[min h - m, max h + m]`.
pub fn observation_quadrature(spec: &KalmanSpec) -> Result<ObservationQuadrature> {
    let grid = state_grid(spec)?;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for a in 0..spec.n_actions() {
        for &x in grid.points() {
            let h = spec.h(a, x);
            lo = lo.min(h);
            hi = hi.max(h);
        }
    }
    let m = spec.obs.margin_sigmas * spec.sigma_tilde;
    let (nodes, weights) = nodes_and_weights(spec.obs.rule, spec.obs.nodes, lo - m, hi + m);
    ObservationQuadrature::new(nodes, weights)
}

/// Builds the grid model. Transition rows are Gaussian densities times cell
/// widths, renormalized; the weight comes from [`choose_weight`] and is
/// checked against the measured drift of the built kernel.
pub fn build_model(spec: &KalmanSpec) -> Result<PomdpModel> {
    let choice = choose_weight(spec)?;
    let grid = state_grid(spec)?;
    let points = grid.points().to_vec();
    let widths = cell_widths(&points);
    let na = spec.n_actions();

    let mut transition = Vec::with_capacity(na);
    for a in 0..na {
        let mut table = Vec::with_capacity(points.len());
        for (x, &xv) in points.iter().enumerate() {
            let mean = spec.mean_next(a, xv);
            let mut row: Vec<f64> = points
                .iter()
                .zip(&widths)
                .map(|(&xn, &w)| w * normal_pdf(xn, mean, spec.sigma))
                .collect();
            let mass: f64 = row.iter().sum();
            if !(mass >= MIN_ROW_MASS) {
                return Err(Error::GridTooCoarse {
                    state: x,
                    action: a,
                    mass,
                });
            }
            row.iter_mut().for_each(|p| *p /= mass);
            table.push(row);
        }
        transition.push(table);
    }

    let observations = observation_quadrature(spec)?;
    let obs_density = (0..na)
        .map(|a| {
            points
                .iter()
                .map(|&xn| {
                    observations
                        .nodes
                        .iter()
                        .map(|&y| normal_pdf(y, spec.h(a, xn), spec.sigma_tilde))
                        .collect()
                })
                .collect()
        })
        .collect();

    let reward = spec
        .reward
        .iter()
        .map(|r| points.iter().map(|&x| r.eval(x)).collect())
        .collect();

    let prior = spec.prior.unwrap_or(PriorSpec {
        mean: 0.0,
        std: 2.0,
    });
    let initial: Vec<f64> = points
        .iter()
        .zip(&widths)
        .map(|(&x, &w)| w * normal_pdf(x, prior.mean, prior.std))
        .collect();
    let initial = DiscreteMeasure::new(grid.clone(), initial)?;

    let model = PomdpModel::new(ModelParts {
        grid,
        actions: spec.action_names(),
        observations,
        transition,
        obs_density,
        reward,
        alpha: spec.alpha,
        weight: WeightFunction::new(0.0, choice.k)?,
        init_obs: None,
        initial_belief: Some(initial.weights().to_vec()),
    })?;

    let measured = estimate_drift_beta(&model)?;
    if measured > choice.beta + 1e-6 {
        return Err(Error::DriftDerivationFailed {
            measured,
            beta: choice.beta,
        });
    }
    Ok(model)
}

/// [`build_model`] certified with the derived `beta` and `K`.
pub fn build_certified(spec: &KalmanSpec) -> Result<CertifiedModel> {
    let choice = choose_weight(spec)?;
    let model = build_model(spec)?;
    certify_with_beta(model, choice.beta, Some(choice.big_k))
}

/// TV between the observation laws at `x0` and at `x0 + 0.5 * 2^-n`, for
/// one anchor and action, on the model's quadrature nodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TvSequence {
    pub x0: f64,
    pub action: usize,
    pub report: TvReport,
}

impl TvSequence {
    pub fn passes(&self, tol: f64) -> bool {
        self.report.monotone() && self.report.last_tv().is_some_and(|tv| tv < tol)
    }
}

/// Probes observation-kernel continuity along `x_n -> x0` for the anchors
/// `0`, `1.5` and `-3` and every action, stopping once TV drops below 1e-3.
pub fn tv_continuity_report(spec: &KalmanSpec) -> Result<Vec<TvSequence>> {
    spec.validate()?;
    let quad = observation_quadrature(spec)?;
    let q_at = |a: usize, x: f64| -> Vec<f64> {
        let raw: Vec<f64> = quad
            .nodes
            .iter()
            .map(|&y| normal_pdf(y, spec.h(a, x), spec.sigma_tilde))
            .collect();
        let s: f64 = raw.iter().zip(&quad.weights).map(|(q, w)| q * w).sum();
        raw.into_iter().map(|q| q / s).collect()
    };
    let mut out = Vec::new();
    for &x0 in &[0.0, 1.5, -3.0] {
        for a in 0..spec.n_actions() {
            let base = q_at(a, x0);
            let mut probes = Vec::new();
            for n in 0..60 {
                let delta = 0.5 * 0.5f64.powi(n);
                let tv = tv_on_nodes(&quad, &base, &q_at(a, x0 + delta));
                probes.push(TvProbe {
                    distance: delta,
                    tv,
                });
                if tv < 1e-3 {
                    break;
                }
            }
            out.push(TvSequence {
                x0,
                action: a,
                report: TvReport { probes },
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_reward_bound;

    #[test]
    fn reference_weight_choice() {
        let spec = KalmanSpec::reference();
        let c = choose_weight(&spec).unwrap();
        assert!((c.beta - (1.0 + 1.0 / 0.9) / 2.0).abs() < 1e-15);
        assert!(c.beta > 1.0 && c.beta < 1.0 / 0.9);
        assert!((c.beta_tilde - 0.75).abs() < 1e-15);
        // the maximum sits at x = 0 where the drift bound is sigma
        assert!((c.big_k - 1.0).abs() < 1e-12);
        assert!((c.k - (c.beta - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn reference_model_certifies() {
        let spec = KalmanSpec::reference();
        let model = build_model(&spec).unwrap();
        assert_eq!(model.n_states(), 161);
        assert_eq!(model.n_actions(), 3);
        assert_eq!(model.n_nodes(), 33);
        let r_bar = validate_reward_bound(&model).unwrap();
        assert!(r_bar.is_finite() && r_bar > 1.0);
        let cert = build_certified(&spec).unwrap();
        assert!(cert.constants().gamma < 1.0);
        assert_eq!(cert.constants().drift_offset, Some(1.0));
    }

    #[test]
    fn state_free_dynamics_give_identical_rows() {
        let mut spec = KalmanSpec::reference();
        spec.b = vec![0.0, 0.0];
        spec.h.truncate(2);
        spec.reward.truncate(2);
        let c = choose_weight(&spec).unwrap();
        assert!((c.big_k - spec.sigma).abs() < 1e-12);
        let model = build_model(&spec).unwrap();
        let first = model.transition_row(0, 0).to_vec();
        for x in 0..model.n_states() {
            assert_eq!(model.transition_row(0, x), first.as_slice());
        }
    }

    #[test]
    fn narrow_noise_is_nearly_deterministic() {
        let mut spec = KalmanSpec::reference();
        spec.sigma = 0.06;
        let model = build_model(&spec).unwrap();
        let pts = model.grid().points();
        for a in 0..3 {
            for x in (0..model.n_states()).step_by(7) {
                let row = model.transition_row(a, x);
                let arg = (0..row.len()).max_by(|&i, &j| row[i].total_cmp(&row[j])).unwrap();
                let target = spec.b[a] * pts[x];
                // a nearest grid point; targets halfway between two are ties
                assert!((pts[arg] - target).abs() <= 0.05 + 1e-9);
            }
        }
    }

    #[test]
    fn truncated_grid_is_rejected() {
        let mut spec = KalmanSpec::reference();
        spec.d = 7.0;
        assert!(matches!(build_model(&spec), Err(Error::GridTooCoarse { .. })));
    }

    #[test]
    fn drift_certificate_across_resolutions() {
        for step in [0.2, 0.1, 0.05] {
            let spec = KalmanSpec::reference().with_step(step);
            let c = choose_weight(&spec).unwrap();
            let model = build_model(&spec).unwrap();
            assert!(estimate_drift_beta(&model).unwrap() <= c.beta + 1e-6);
        }
    }

    #[test]
    fn tv_sequences_decrease() {
        for seq in tv_continuity_report(&KalmanSpec::reference()).unwrap() {
            assert!(seq.passes(1e-3), "{seq:?}");
        }
    }

    #[test]
    fn rejects_expansive_feedback() {
        let mut spec = KalmanSpec::reference();
        spec.b[0] = -1.0;
        assert!(matches!(choose_weight(&spec), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = KalmanSpec::reference();
        let text = serde_json::to_string(&spec).unwrap();
        let back: KalmanSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(spec, back);
    }
}
