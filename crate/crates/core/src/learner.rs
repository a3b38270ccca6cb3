//! Maximum-likelihood weight learning by gradient ascent.
//!
//! The gradient of ln P(O) with respect to the weight of source rule i is
//! `-E[n_i | O] + E[n_i]`. In exact mode both expectations come from the
//! enumerated model space; in mcmc mode they are estimated from MC-ASP
//! chains over the sign-normalized program.

use std::collections::HashMap;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grounder::{false_counts, ground, GroundProgram};
use crate::model::{Interpretation, Observation, Program, Weight};
use crate::sampler::{rng_from_seed, Chain, UniformStrategy};
use crate::semantics::ModelSpace;
use crate::solver::ClampSet;
use crate::transforms::{coherence_report, negate_ground, unsat_counts, NEG};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Exact,
    Mcmc,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Mode::Exact),
            "mcmc" => Ok(Mode::Mcmc),
            other => Err(Error::Usage(format!("unknown mode `{other}` (expected exact or mcmc)"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LearnConfig {
    pub learning_rate: f64,
    /// Stop once no weight moves by this much or more in one iteration.
    pub delta: f64,
    pub max_iterations: usize,
    /// MC-ASP samples per chain and iteration.
    pub samples: usize,
    pub mode: Mode,
    /// Defaults to all zeros.
    pub initial_weights: Option<Vec<f64>>,
    pub seed: u64,
    pub strategy: UniformStrategy,
    /// Step size at iteration j is `learning_rate / (1 + decay * j)`.
    pub decay: Option<f64>,
    /// Iterations run before the δ test applies. A sampled gradient can be
    /// exactly zero by chance, which would otherwise end an mcmc run early.
    pub min_iterations: usize,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            learning_rate: 0.1,
            delta: 0.001,
            max_iterations: 50,
            samples: 50,
            mode: Mode::Exact,
            initial_weights: None,
            seed: 0,
            strategy: UniformStrategy::Exact,
            decay: None,
            min_iterations: 0,
        }
    }
}

impl LearnConfig {
    fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 || self.delta.is_nan() || self.delta <= 0.0 {
            return Err(Error::Usage("learning rate and delta must be positive".into()));
        }
        if self.max_iterations == 0 || self.samples == 0 {
            return Err(Error::Usage("iteration and sample counts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    /// Weights after the update.
    pub weights: Vec<f64>,
    pub gradient: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnResult {
    pub weights: Vec<f64>,
    pub trace: Vec<IterationRecord>,
    pub converged: bool,
    pub gradient_norms: Vec<f64>,
    pub seed: u64,
}

impl LearnResult {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

fn require_parameters(program: &Program) -> Result<usize> {
    if !program.is_parameterized() {
        return Err(Error::Usage(
            "program has no @w(i) parameters to learn".into(),
        ));
    }
    Ok(program.parameter_count())
}

/// Parameter index (0-based) of every source rule, if any.
fn parameter_of_origin(g: &GroundProgram) -> Vec<Option<usize>> {
    (1..=g.origin_count())
        .map(|o| match g.origin_weight(o) {
            Some(Weight::Param(i)) => Some(i - 1),
            _ => None,
        })
        .collect()
}

fn accumulate(grad: &mut [f64], params: &[Option<usize>], per_origin: &[f64], scale: f64) {
    for (o, &x) in per_origin.iter().enumerate() {
        if let Some(p) = params[o] {
            grad[p] += scale * x;
        }
    }
}

/// Exact log-likelihood and gradient of a parameterized program, with the
/// model space built once.
#[derive(Clone, Debug)]
pub struct ExactObjective {
    ground: GroundProgram,
    space: ModelSpace,
    clamps: Vec<Option<Vec<Option<bool>>>>,
    params: Vec<Option<usize>>,
    parameter_count: usize,
}

impl ExactObjective {
    pub fn new(program: &Program, observations: &[Observation]) -> Result<Self> {
        let parameter_count = require_parameters(program)?;
        let ground = ground(program)?;
        let space = ModelSpace::build(&ground)?;
        if space.is_empty() {
            return Err(Error::no_stable_model());
        }
        let clamps = observations
            .iter()
            .map(|o| ClampSet::from(o).resolve(&ground))
            .collect::<Result<_>>()?;
        Ok(ExactObjective {
            params: parameter_of_origin(&ground),
            ground,
            space,
            clamps,
            parameter_count,
        })
    }

    pub fn ground(&self) -> &GroundProgram {
        &self.ground
    }

    fn clamp(&self, k: usize) -> Result<&[Option<bool>]> {
        self.clamps[k].as_deref().ok_or_else(Error::zero_probability)
    }

    pub fn log_likelihood(&self, weights: &[f64]) -> Result<f64> {
        let rw = self.ground.rule_weights_with(weights)?;
        (0..self.clamps.len())
            .map(|k| self.space.log_probability_of(&rw, self.clamp(k)?))
            .sum()
    }

    pub fn gradient(&self, weights: &[f64]) -> Result<Vec<f64>> {
        let rw = self.ground.rule_weights_with(weights)?;
        let free = self.space.expected_false_counts(&rw)?;
        let mut grad = vec![0.0; self.parameter_count];
        for k in 0..self.clamps.len() {
            let clamped = self.space.expected_false_counts_given(&rw, self.clamp(k)?)?;
            accumulate(&mut grad, &self.params, &clamped, -1.0);
            accumulate(&mut grad, &self.params, &free, 1.0);
        }
        Ok(grad)
    }
}

/// Σ_k ln P(O_k) for a parameterized program at `weights`.
pub fn log_likelihood(program: &Program, weights: &[f64], observations: &[Observation]) -> Result<f64> {
    ExactObjective::new(program, observations)?.log_likelihood(weights)
}

pub fn gradient_exact(program: &Program, weights: &[f64], observations: &[Observation]) -> Result<Vec<f64>> {
    ExactObjective::new(program, observations)?.gradient(weights)
}

/// Model space of the sign-normalized program together with the map back
/// to the atoms of the original ground program.
struct NegSpace {
    space: ModelSpace,
    to_original: Vec<Option<usize>>,
    clamps: Vec<Option<Vec<Option<bool>>>>,
}

enum Target {
    /// Complete observation: per-origin false counts, fixed.
    Fixed(Vec<f64>),
    /// Partial observation: estimated with a clamped chain.
    Clamped(Option<Chain>),
}

/// MC-ASP gradient estimates; chains and model spaces persist across calls.
pub struct McmcEstimator {
    ground: GroundProgram,
    observations: Vec<Observation>,
    params: Vec<Option<usize>>,
    parameter_count: usize,
    samples: usize,
    strategy: UniformStrategy,
    rng: ChaCha8Rng,
    spaces: HashMap<u64, NegSpace>,
    current: Option<u64>,
    /// One unclamped chain per observation, as if each example were an
    /// independent copy of the program.
    free: Vec<Chain>,
    targets: Vec<Target>,
    /// Last sampled state on the original atoms: free chains first, then
    /// the clamped chain of each observation.
    states: Vec<Option<Vec<bool>>>,
}

impl McmcEstimator {
    pub fn new(
        program: &Program,
        observations: &[Observation],
        samples: usize,
        strategy: UniformStrategy,
        seed: u64,
    ) -> Result<Self> {
        let parameter_count = require_parameters(program)?;
        if program.has_predicate(NEG) {
            return Err(Error::NameCollision(NEG.to_string()));
        }
        let ground = ground(program)?;
        let mut targets = Vec::with_capacity(observations.len());
        for o in observations {
            let clamp = ClampSet::from(o).resolve(&ground)?;
            let complete = ground.atoms().iter().all(|a| o.clamped_true().contains(a) || o.clamped_false().contains(a));
            targets.push(match clamp {
                Some(_) if complete => {
                    let interp: Interpretation = o.clamped_true().iter().cloned().collect();
                    let counts = unsat_counts(program, &interp)?;
                    Target::Fixed(counts.into_iter().map(|c| c as f64).collect())
                }
                Some(_) => Target::Clamped(None),
                None => return Err(Error::zero_probability()),
            });
        }
        Ok(McmcEstimator {
            params: parameter_of_origin(&ground),
            ground,
            observations: observations.to_vec(),
            parameter_count,
            samples,
            strategy,
            rng: rng_from_seed(seed),
            spaces: HashMap::new(),
            current: None,
            free: Vec::new(),
            states: vec![None; 2 * observations.len()],
            targets,
        })
    }

    fn prepare(&mut self, weights: &[f64]) -> Result<Vec<f64>> {
        let neg = negate_ground(&self.ground.bind(weights)?)?;
        let key = neg.structure_key();
        if !self.spaces.contains_key(&key) {
            let space = ModelSpace::build(&neg)?;
            if space.is_empty() {
                return Err(Error::no_stable_model());
            }
            let to_original = self.ground.atoms().iter().map(|a| neg.atom_id(a)).collect();
            let clamps = self
                .observations
                .iter()
                .map(|o| ClampSet::from(o).resolve(&neg))
                .collect::<Result<_>>()?;
            self.spaces.insert(key, NegSpace { space, to_original, clamps });
        }
        if self.current != Some(key) {
            self.current = Some(key);
            self.rebuild_chains(key)?;
        }
        neg.rule_weights()
    }

    /// Lifts an assignment of the original atoms into the normalized space:
    /// `neg` atoms hold exactly when their defining rule's body does.
    fn lift(ns: &NegSpace, original: &[bool]) -> Vec<bool> {
        let g = ns.space.ground();
        let mut truth = vec![false; g.atoms().len()];
        for (o, n) in ns.to_original.iter().enumerate() {
            if let Some(n) = n {
                truth[*n] = original[o];
            }
        }
        for r in g.rules() {
            if r.head.len() == 1 && g.atom(r.head[0]).predicate == NEG && r.body_true(&truth) {
                truth[r.head[0]] = true;
            }
        }
        truth
    }

    fn rebuild_chains(&mut self, key: u64) -> Result<()> {
        let ns = &self.spaces[&key];
        let n = self.targets.len();
        self.free.clear();
        for k in 0..n {
            let mut free = Chain::new(&ns.space, None)?;
            if let Some(s) = &self.states[k] {
                free.set_state(&ns.space, &Self::lift(ns, s))?;
            }
            self.free.push(free);
        }
        for (k, t) in self.targets.iter_mut().enumerate() {
            if let Target::Clamped(chain) = t {
                let clamp = ns.clamps[k].as_deref().ok_or_else(Error::zero_probability)?;
                let mut c = Chain::new(&ns.space, Some(clamp))?;
                if let Some(s) = &self.states[n + k] {
                    c.set_state(&ns.space, &Self::lift(ns, s))?;
                }
                *chain = Some(c);
            }
        }
        Ok(())
    }

    fn project(ns: &NegSpace, truth: &[bool]) -> Vec<bool> {
        ns.to_original
            .iter()
            .map(|n| n.is_some_and(|n| truth[n]))
            .collect()
    }

    fn run(
        chain: &mut Chain,
        ns: &NegSpace,
        ground: &GroundProgram,
        weights: &[f64],
        samples: usize,
        strategy: UniformStrategy,
        rng: &mut ChaCha8Rng,
    ) -> (Vec<f64>, Vec<bool>) {
        let mut sum = vec![0.0; ground.origin_count()];
        let mut last = Vec::new();
        for _ in 0..samples {
            chain.step(&ns.space, weights, strategy, rng);
            last = Self::project(ns, &chain.truth(&ns.space));
            for (s, c) in sum.iter_mut().zip(false_counts(ground, &last)) {
                *s += c as f64;
            }
        }
        sum.iter_mut().for_each(|s| *s /= samples as f64);
        (sum, last)
    }

    /// One gradient estimate at `weights`.
    pub fn gradient(&mut self, weights: &[f64]) -> Result<Vec<f64>> {
        let rw = self.prepare(weights)?;
        let key = self.current.expect("prepared");
        let ns = &self.spaces[&key];
        let mut grad = vec![0.0; self.parameter_count];
        let n = self.targets.len();
        for (k, free) in self.free.iter_mut().enumerate() {
            let (expected, last) = Self::run(free, ns, &self.ground, &rw, self.samples, self.strategy, &mut self.rng);
            self.states[k] = Some(last);
            accumulate(&mut grad, &self.params, &expected, 1.0);
        }
        for (k, t) in self.targets.iter_mut().enumerate() {
            match t {
                Target::Fixed(counts) => accumulate(&mut grad, &self.params, counts, -1.0),
                Target::Clamped(chain) => {
                    let chain = chain.as_mut().expect("prepared");
                    let (clamped, last) =
                        Self::run(chain, ns, &self.ground, &rw, self.samples, self.strategy, &mut self.rng);
                    self.states[n + k] = Some(last);
                    accumulate(&mut grad, &self.params, &clamped, -1.0);
                }
            }
        }
        Ok(grad)
    }
}

type GradientFn = Box<dyn FnMut(&[f64]) -> Result<Vec<f64>>>;

/// Gradient ascent from the configured initial weights.
pub fn learn(program: &Program, observations: &[Observation], config: &LearnConfig) -> Result<LearnResult> {
    config.validate()?;
    let m = require_parameters(program)?;
    let mut weights = config.initial_weights.clone().unwrap_or_else(|| vec![0.0; m]);
    if weights.len() != m {
        return Err(Error::Usage(format!("expected {m} initial weights, got {}", weights.len())));
    }
    let mut gradient: GradientFn = match config.mode {
        Mode::Exact => {
            let objective = ExactObjective::new(program, observations)?;
            Box::new(move |w| objective.gradient(w))
        }
        Mode::Mcmc => {
            let mut estimator =
                McmcEstimator::new(program, observations, config.samples, config.strategy, config.seed)?;
            Box::new(move |w| estimator.gradient(w))
        }
    };
    let mut result = LearnResult {
        weights: weights.clone(),
        trace: Vec::new(),
        converged: false,
        gradient_norms: Vec::new(),
        seed: config.seed,
    };
    for j in 0..config.max_iterations {
        let g = gradient(&weights)?;
        let rate = config.learning_rate / (1.0 + config.decay.unwrap_or(0.0) * j as f64);
        let mut largest: f64 = 0.0;
        for (w, d) in weights.iter_mut().zip(&g) {
            let step = rate * d;
            *w += step;
            largest = largest.max(step.abs());
        }
        result.gradient_norms.push(g.iter().map(|x| x * x).sum::<f64>().sqrt());
        result.trace.push(IterationRecord {
            weights: weights.clone(),
            gradient: g,
        });
        if j + 1 >= config.min_iterations && largest < config.delta {
            result.converged = true;
            break;
        }
    }
    result.weights = weights;
    Ok(result)
}

/// Closed-form maximum-likelihood weights `ln(m_i / n_i)` for a simple,
/// k-coherent program and one complete observation, where m_i and n_i count
/// the true and false ground instances of parameter i's probabilistic facts.
pub fn learn_closed_form(program: &Program, observation: &Observation) -> Result<Vec<f64>> {
    let m = require_parameters(program)?;
    let report = coherence_report(program)?;
    if !report.is_simple || report.k.is_none() {
        return Err(Error::Precondition(format!(
            "closed form needs a simple k-coherent program: {}",
            report.failure.unwrap_or_default()
        )));
    }
    let g = ground(program)?;
    if !g
        .atoms()
        .iter()
        .all(|a| observation.clamped_true().contains(a) || observation.clamped_false().contains(a))
    {
        return Err(Error::Precondition(
            "observation is incomplete; use learn() instead".into(),
        ));
    }
    let mut counts = vec![(0usize, 0usize); m];
    let mut label: Vec<Option<String>> = vec![None; m];
    for pf in &report.probabilistic_facts {
        if pf.origins.len() != 1 {
            return Err(Error::Precondition(format!(
                "probabilistic fact {} comes from several rules",
                pf.atom
            )));
        }
        let Some(Weight::Param(i)) = g.origin_weight(pf.origins[0]) else {
            continue;
        };
        label[i - 1].get_or_insert_with(|| pf.atom.predicate.clone());
        if observation.clamped_true().contains(&pf.atom) {
            counts[i - 1].0 += 1;
        } else {
            counts[i - 1].1 += 1;
        }
    }
    counts
        .iter()
        .zip(&label)
        .enumerate()
        .map(|(i, (&(t, f), name))| {
            if t == 0 || f == 0 {
                Err(Error::DegenerateCount {
                    atom: name.clone().unwrap_or_else(|| format!("@w({})", i + 1)),
                    true_count: t,
                    false_count: f,
                })
            } else {
                Ok((t as f64 / f as f64).ln())
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_evidence, parse_program};

    #[test]
    fn soft_fact_gradient() {
        let p = parse_program("@w(1) a.").unwrap();
        let obs = parse_evidence(":- not a.").unwrap();
        let g = gradient_exact(&p, &[0.0], &obs).unwrap();
        assert!((g[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn coin_log_likelihood() {
        let p = parse_program("{flip}. @w(1) head :- flip.").unwrap();
        let obs = parse_evidence(":- not flip. :- head.").unwrap();
        let ll = log_likelihood(&p, &[0.0], &obs).unwrap();
        assert!((ll - (1.0f64 / 3.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn coin_stationary_at_mle() {
        let p = parse_program("{flip}. @w(1) head :- flip.").unwrap();
        let obs = parse_evidence(
            "#example(1). :- not flip. :- head.\n#example(2). :- not flip. :- head.\n#example(3). :- not flip. :- not head.",
        )
        .unwrap();
        let g = gradient_exact(&p, &[-(4f64.ln())], &obs).unwrap();
        assert!(g[0].abs() < 1e-9, "{g:?}");
    }

    #[test]
    fn closed_form_counts() {
        let p = parse_program("d(1). d(2). d(3). d(4). @w(1) f(X) :- d(X).").unwrap();
        let obs = parse_evidence(":- not f(1). :- f(2). :- f(3). :- f(4). :- not d(1). :- not d(2). :- not d(3). :- not d(4).").unwrap();
        let w = learn_closed_form(&p, &obs[0]).unwrap();
        assert!((w[0] - (1.0f64 / 3.0).ln()).abs() < 1e-12);
        let none = parse_evidence(":- f(1). :- f(2). :- f(3). :- f(4). :- not d(1). :- not d(2). :- not d(3). :- not d(4).").unwrap();
        assert!(matches!(learn_closed_form(&p, &none[0]), Err(Error::DegenerateCount { .. })));
    }
}
