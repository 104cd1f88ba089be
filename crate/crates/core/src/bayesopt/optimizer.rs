use std::fmt::Display;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::acquisition::expected_improvement;
use super::gp::{fit_surrogate_with, GpConfig, SurrogateState};
use super::space::{rotated_halton, Observation, ParameterSpace, DIM};
use super::BayesOptError;
use crate::forest::ForestParams;
use crate::objective::EvaluationResult;
use crate::seeding::{self, tags, StreamRng};

/// Quasi-random candidates scored per suggestion.
pub const CANDIDATE_POINTS: usize = 2048;
/// Golden-section steps per coordinate when refining the best candidate.
pub const REFINEMENT_STEPS: usize = 20;
/// Half-width of the refinement window on each coordinate.
const REFINEMENT_RADIUS: f64 = 0.08;
const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Anything with a loss to minimize.
pub trait Scored {
    fn loss(&self) -> f64;
}

impl Scored for f64 {
    fn loss(&self) -> f64 {
        *self
    }
}

impl Scored for EvaluationResult {
    fn loss(&self) -> f64 {
        self.loss
    }
}

fn tie_key(params: &ForestParams) -> (usize, usize) {
    (params.n_trees, params.max_depth.unwrap_or(usize::MAX))
}

struct Scoring<'a> {
    state: &'a SurrogateState,
    space: &'a ParameterSpace,
    best: f64,
}

impl Scoring<'_> {
    /// EI at the rounded image of `x`, which is what would be evaluated.
    fn score(&self, x: &[f64; DIM]) -> f64 {
        expected_improvement(self.state, &self.space.snap(x), self.best)
    }

    fn golden_section(&self, x: &mut [f64; DIM], d: usize) {
        let (mut a, mut b) = ((x[d] - REFINEMENT_RADIUS).max(0.0), (x[d] + REFINEMENT_RADIUS).min(1.0));
        let at = |t: f64| {
            let mut probe = *x;
            probe[d] = t;
            self.score(&probe)
        };
        let mut c = b - INV_PHI * (b - a);
        let mut e = a + INV_PHI * (b - a);
        let (mut fc, mut fe) = (at(c), at(e));
        for _ in 0..REFINEMENT_STEPS {
            if fc >= fe {
                b = e;
                e = c;
                fe = fc;
                c = b - INV_PHI * (b - a);
                fc = at(c);
            } else {
                a = c;
                c = e;
                fc = fe;
                e = a + INV_PHI * (b - a);
                fe = at(e);
            }
        }
        let t = 0.5 * (a + b);
        if at(t) > self.score(x) {
            x[d] = t;
        }
    }
}

/// Next setting to evaluate: the expected-improvement maximizer over
/// [`CANDIDATE_POINTS`] rotated Halton points, refined coordinate-wise by
/// golden-section search, then rounded into `space`. Equal scores prefer
/// fewer trees, then shallower trees.
pub fn suggest_next(
    state: &SurrogateState,
    space: &ParameterSpace,
    rng: &mut StreamRng,
) -> ForestParams {
    let scoring = Scoring {
        state,
        space,
        best: state.best_standardized(),
    };
    let offset: [f64; DIM] = [rng.random(), rng.random(), rng.random()];
    let mut best: Option<([f64; DIM], f64, (usize, usize))> = None;
    for i in 0..CANDIDATE_POINTS {
        let x = rotated_halton(i as u64 + 1, &offset);
        let ei = scoring.score(&x);
        let key = tie_key(&space.denormalize(&x));
        let better = match &best {
            None => true,
            Some((_, best_ei, best_key)) => ei > *best_ei || (ei == *best_ei && key < *best_key),
        };
        if better {
            best = Some((x, ei, key));
        }
    }
    let (mut x, _, _) = best.expect("at least one candidate");
    for d in 0..DIM {
        scoring.golden_section(&mut x, d);
    }
    space.denormalize(&x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeConfig {
    pub n_init: usize,
    pub n_iter: usize,
    pub seed: u64,
    #[serde(default)]
    pub gp: GpConfig,
}

impl OptimizeConfig {
    pub fn new(n_init: usize, n_iter: usize, seed: u64) -> Self {
        Self {
            n_init,
            n_iter,
            seed,
            gp: GpConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Initial,
    Acquisition,
}

/// One evaluation in the optimisation trace. Failed evaluations carry the
/// error text and the penalty value that was recorded instead of a loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry<R> {
    pub iteration: usize,
    pub phase: Phase,
    #[serde(flatten)]
    pub observation: Observation,
    pub result: Option<R>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct OptimizeOutcome<R> {
    pub best_params: ForestParams,
    pub best: R,
    pub best_index: usize,
    pub trace: Vec<TraceEntry<R>>,
}

impl<R> OptimizeOutcome<R> {
    /// Best loss seen after each trace entry.
    pub fn running_best(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.trace
            .iter()
            .map(|entry| {
                if entry.result.is_some() {
                    best = best.min(entry.observation.value);
                }
                best
            })
            .collect()
    }
}

/// Penalty for a failed evaluation: the worst loss so far plus one standard
/// deviation of the losses so far (or plus one when that is undefined).
fn failure_value(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 1.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let worst = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    worst + if sd > 0.0 { sd } else { 1.0 }
}

/// Minimizes `evaluator` over `space`: `n_init` quasi-random settings, then
/// `n_iter` surrogate-guided ones. Returns the best observed setting.
pub fn optimize<R, E, F>(
    mut evaluator: F,
    space: &ParameterSpace,
    config: &OptimizeConfig,
) -> Result<OptimizeOutcome<R>, BayesOptError>
where
    R: Scored + Clone,
    E: Display,
    F: FnMut(&ForestParams) -> Result<R, E>,
{
    space.validate()?;
    if config.n_init == 0 {
        return Err(BayesOptError::NoInitialDesign);
    }
    let mut trace: Vec<TraceEntry<R>> = Vec::with_capacity(config.n_init + config.n_iter);
    let mut last_error = String::new();
    let mut record = |params: ForestParams, phase: Phase, trace: &mut Vec<TraceEntry<R>>| {
        let iteration = trace.len();
        let successes: Vec<f64> = trace
            .iter()
            .filter(|e| e.result.is_some())
            .map(|e| e.observation.value)
            .collect();
        let (value, result, error) = match evaluator(&params) {
            Ok(r) if r.loss().is_finite() => (r.loss(), Some(r), None),
            Ok(r) => {
                let msg = format!("non-finite loss {}", r.loss());
                (failure_value(&successes), None, Some(msg))
            }
            Err(e) => (failure_value(&successes), None, Some(e.to_string())),
        };
        if let Some(msg) = &error {
            log::warn!("evaluation {iteration} failed for {params:?}: {msg}");
            last_error = msg.clone();
        }
        trace.push(TraceEntry {
            iteration,
            phase,
            observation: Observation {
                point: space.normalize(&params),
                params,
                value,
            },
            result,
            error,
        });
    };

    let mut design_rng = seeding::rng_from(seeding::derive(config.seed, &[tags::DESIGN]));
    let offset: [f64; DIM] = [design_rng.random(), design_rng.random(), design_rng.random()];
    for i in 0..config.n_init {
        let params = space.denormalize(&rotated_halton(i as u64 + 1, &offset));
        record(params, Phase::Initial, &mut trace);
    }
    for step in 0..config.n_iter {
        let observations: Vec<Observation> = trace.iter().map(|e| e.observation.clone()).collect();
        let state = fit_surrogate_with(&observations, &config.gp)?;
        let mut rng = seeding::rng_from(seeding::derive(config.seed, &[tags::ACQUISITION, step as u64]));
        let params = suggest_next(&state, space, &mut rng);
        record(params, Phase::Acquisition, &mut trace);
    }

    let (best_index, best) = trace
        .iter()
        .enumerate()
        .filter_map(|(i, e)| e.result.as_ref().map(|r| (i, r)))
        .min_by(|a, b| a.1.loss().total_cmp(&b.1.loss()))
        .ok_or(BayesOptError::AllEvaluationsFailed(last_error))?;
    Ok(OptimizeOutcome {
        best_params: trace[best_index].observation.params.clone(),
        best: best.clone(),
        best_index,
        trace,
    })
}
