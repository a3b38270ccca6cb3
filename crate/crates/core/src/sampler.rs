//! MC-ASP: a Markov chain over probabilistic stable models of a program
//! whose soft weights are all non-positive.
//!
//! Each step keeps every currently violated soft rule with probability
//! `1 - e^w` in a forbidden set M, then draws a stable model uniformly among
//! those violating every rule of M. The qualifying set factorizes over
//! components, so the draw is done independently per component over the
//! cached model lists.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grounder::{false_counts, ground, GroundProgram};
use crate::model::{Interpretation, Program, Weight};
use crate::semantics::{ComponentModels, ModelSpace};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum UniformStrategy {
    /// Uniform over the enumerated qualifying models.
    #[default]
    Exact,
    /// Random parity constraints over the component's atoms; the number of
    /// constraints is `floor(log2 |qualifying|) - slack`. A draw is uniform
    /// among the survivors; after `trials` empty attempts it falls back to
    /// the exact draw.
    XorHash { slack: usize, trials: usize },
}

impl UniformStrategy {
    pub fn xor() -> Self {
        UniformStrategy::XorHash { slack: 1, trials: 8 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            UniformStrategy::Exact => "exact",
            UniformStrategy::XorHash { .. } => "xor",
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct SamplerOptions {
    pub strategy: UniformStrategy,
    pub burn_in: usize,
    /// Keep every `thinning`-th state (0 is treated as 1).
    pub thinning: usize,
    /// Starting state; defaults to the lexicographically first member.
    pub initial: Option<Interpretation>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub samples: Vec<Interpretation>,
    /// Per sample, false ground instances per source rule.
    pub false_counts: Vec<Vec<usize>>,
    pub seed: u64,
    pub strategy: UniformStrategy,
    /// Size of M at each step, burn-in included.
    pub forbidden_sizes: Vec<usize>,
    /// XOR draws that fell back to the exact draw.
    pub xor_fallbacks: usize,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean_false_counts(&self) -> Vec<f64> {
        let m = self.false_counts.first().map_or(0, Vec::len);
        let mut out = vec![0.0; m];
        for c in &self.false_counts {
            for (o, &x) in out.iter_mut().zip(c) {
                *o += x as f64;
            }
        }
        let n = self.false_counts.len().max(1) as f64;
        out.iter_mut().for_each(|x| *x /= n);
        out
    }
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn is_subset(small: &[usize], big: &[usize]) -> bool {
    let mut it = big.iter();
    small.iter().all(|x| it.by_ref().any(|y| y == x))
}

fn pick_xor(
    c: &ComponentModels,
    candidates: &[usize],
    slack: usize,
    trials: usize,
    rng: &mut ChaCha8Rng,
    fallbacks: &mut usize,
) -> usize {
    let bits = usize::BITS - 1 - candidates.len().leading_zeros();
    let constraints = (bits as usize).saturating_sub(slack);
    if constraints > 0 {
        let n = c.atoms.len();
        for _ in 0..trials {
            let xors: Vec<(Vec<bool>, bool)> = (0..constraints)
                .map(|_| ((0..n).map(|_| rng.gen::<bool>()).collect(), rng.gen::<bool>()))
                .collect();
            let survivors: Vec<usize> = candidates
                .iter()
                .copied()
                .filter(|&m| {
                    xors.iter().all(|(mask, parity)| {
                        let x = mask
                            .iter()
                            .zip(&c.models[m])
                            .filter(|(s, v)| **s && **v)
                            .count()
                            % 2
                            == 1;
                        x == *parity
                    })
                })
                .collect();
            if !survivors.is_empty() {
                return survivors[rng.gen_range(0..survivors.len())];
            }
        }
        *fallbacks += 1;
    }
    candidates[rng.gen_range(0..candidates.len())]
}

fn pick(
    c: &ComponentModels,
    candidates: &[usize],
    strategy: UniformStrategy,
    rng: &mut ChaCha8Rng,
    fallbacks: &mut usize,
) -> usize {
    match strategy {
        UniformStrategy::Exact => candidates[rng.gen_range(0..candidates.len())],
        UniformStrategy::XorHash { slack, trials } => pick_xor(c, candidates, slack, trials, rng, fallbacks),
    }
}

/// A chain state over a model space: one model index per component.
#[derive(Clone, Debug)]
pub(crate) struct Chain {
    /// Model indices each component may use (all, or those matching clamps).
    allowed: Vec<Vec<usize>>,
    pub state: Vec<usize>,
    pub xor_fallbacks: usize,
}

impl Chain {
    /// Starts at the lexicographically first allowed model of every component.
    pub fn new(space: &ModelSpace, clamp: Option<&[Option<bool>]>) -> Result<Self> {
        if space.is_empty() {
            return Err(Error::no_stable_model());
        }
        let allowed: Vec<Vec<usize>> = space
            .components()
            .iter()
            .map(|c| match clamp {
                Some(clamp) => c.consistent(clamp),
                None => (0..c.models.len()).collect(),
            })
            .collect();
        if allowed.iter().any(Vec::is_empty) {
            return Err(Error::zero_probability());
        }
        let state = allowed.iter().map(|a| a[0]).collect();
        Ok(Chain {
            allowed,
            state,
            xor_fallbacks: 0,
        })
    }

    /// Moves to the member matching `truth` on the component atoms.
    pub fn set_state(&mut self, space: &ModelSpace, truth: &[bool]) -> Result<()> {
        for (k, c) in space.components().iter().enumerate() {
            let want: Vec<bool> = c.atoms.iter().map(|&a| truth[a]).collect();
            match self.allowed[k].iter().find(|&&m| c.models[m] == want) {
                Some(&m) => self.state[k] = m,
                None => {
                    return Err(Error::Precondition(
                        "initial state is not a probabilistic stable model".into(),
                    ))
                }
            }
        }
        Ok(())
    }

    /// One MC-ASP transition; returns |M|.
    pub fn step(
        &mut self,
        space: &ModelSpace,
        rule_weights: &[f64],
        strategy: UniformStrategy,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        let mut total = 0;
        for (k, c) in space.components().iter().enumerate() {
            let forbidden: Vec<usize> = c.violated[self.state[k]]
                .iter()
                .copied()
                .filter(|&r| rng.gen::<f64>() < 1.0 - rule_weights[r].exp())
                .collect();
            total += forbidden.len();
            let candidates: Vec<usize> = self.allowed[k]
                .iter()
                .copied()
                .filter(|&m| is_subset(&forbidden, &c.violated[m]))
                .collect();
            // The current model always qualifies.
            debug_assert!(!candidates.is_empty());
            self.state[k] = pick(c, &candidates, strategy, rng, &mut self.xor_fallbacks);
        }
        total
    }

    pub fn truth(&self, space: &ModelSpace) -> Vec<bool> {
        let mut truth = vec![false; space.ground().atoms().len()];
        for (k, c) in space.components().iter().enumerate() {
            for (j, &a) in c.atoms.iter().enumerate() {
                truth[a] = c.models[self.state[k]][j];
            }
        }
        truth
    }
}

fn check_non_positive(g: &GroundProgram) -> Result<Vec<f64>> {
    let weights = g.rule_weights()?;
    if let Some((r, w)) = g
        .rules()
        .iter()
        .zip(&weights)
        .find(|(r, &w)| !r.is_hard() && w > 0.0)
    {
        return Err(Error::Precondition(format!(
            "soft rule {} has positive weight {w}; sample from to_negative(program) instead",
            r.origin
        )));
    }
    Ok(weights)
}

/// Runs MC-ASP on an already built model space.
pub fn mc_asp_space(space: &ModelSpace, n: usize, seed: u64, options: &SamplerOptions) -> Result<SampleSet> {
    let g = space.ground();
    let weights = check_non_positive(g)?;
    let mut chain = Chain::new(space, None)?;
    if let Some(init) = &options.initial {
        let truth = g.encode(init)?;
        chain.set_state(space, &truth)?;
    }
    let mut rng = rng_from_seed(seed);
    let thinning = options.thinning.max(1);
    let mut out = SampleSet {
        samples: Vec::with_capacity(n),
        false_counts: Vec::with_capacity(n),
        seed,
        strategy: options.strategy,
        forbidden_sizes: Vec::with_capacity(options.burn_in + n * thinning),
        xor_fallbacks: 0,
    };
    for step in 0..options.burn_in + n * thinning {
        out.forbidden_sizes
            .push(chain.step(space, &weights, options.strategy, &mut rng));
        if step >= options.burn_in && (step - options.burn_in + 1).is_multiple_of(thinning) {
            let truth = chain.truth(space);
            out.false_counts.push(false_counts(g, &truth));
            out.samples.push(g.decode(&truth));
        }
    }
    out.xor_fallbacks = chain.xor_fallbacks;
    Ok(out)
}

pub fn mc_asp_with(program: &Program, n: usize, seed: u64, options: &SamplerOptions) -> Result<SampleSet> {
    if program.is_parameterized() {
        return Err(Error::Usage("program has unbound @w(i) weights".into()));
    }
    if let Some(r) = program
        .rules()
        .iter()
        .find(|r| matches!(r.weight, Weight::Soft(w) if w > 0.0))
    {
        return Err(Error::Precondition(format!(
            "rule {} has a positive weight; sample from to_negative(program) instead",
            r.index
        )));
    }
    let g = ground(program)?;
    let space = ModelSpace::build(&g)?;
    mc_asp_space(&space, n, seed, options)
}

pub fn mc_asp(program: &Program, n: usize, strategy: UniformStrategy, seed: u64) -> Result<SampleSet> {
    let options = SamplerOptions {
        strategy,
        ..SamplerOptions::default()
    };
    mc_asp_with(program, n, seed, &options)
}

/// A member of SM drawn among those that violate every ground rule in
/// `forbidden` (ids into the ground program's rules).
pub fn uniform_stable_model(
    space: &ModelSpace,
    forbidden: &[usize],
    strategy: UniformStrategy,
    rng: &mut ChaCha8Rng,
) -> Result<Interpretation> {
    if space.is_empty() {
        return Err(Error::no_stable_model());
    }
    let mut forbidden = forbidden.to_vec();
    forbidden.sort_unstable();
    let constant = space.constant_soft_rules();
    let mut truth = vec![false; space.ground().atoms().len()];
    let mut fallbacks = 0;
    for c in space.components() {
        let local: Vec<usize> = forbidden
            .iter()
            .copied()
            .filter(|r| c.soft_rules.binary_search(r).is_ok())
            .collect();
        let candidates: Vec<usize> = (0..c.models.len())
            .filter(|&m| is_subset(&local, &c.violated[m]))
            .collect();
        if candidates.is_empty() {
            return Err(Error::Precondition(
                "no stable model violates every rule of the forbidden set".into(),
            ));
        }
        let m = pick(c, &candidates, strategy, rng, &mut fallbacks);
        for (j, &a) in c.atoms.iter().enumerate() {
            truth[a] = c.models[m][j];
        }
    }
    let covered = |r: &usize| {
        constant.contains(r) || space.components().iter().any(|c| c.soft_rules.binary_search(r).is_ok())
    };
    if !forbidden.iter().all(covered) {
        return Err(Error::Precondition(
            "forbidden set contains a rule that no stable model can violate".into(),
        ));
    }
    Ok(space.ground().decode(&truth))
}
