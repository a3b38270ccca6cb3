//! Probabilistic stable models, their weights and marginals, plus a small
//! ground MLN evaluator.
//!
//! The distribution factorizes over connected components of the ground
//! program, so members of SM are enumerated per component and combined only
//! when a flat table is requested.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grounder::{encode_lenient, GroundProgram, GroundRule};
use crate::model::{Atom, Constant, Interpretation, Observation};
use crate::solver::{is_sm_member, product, split_components, Component, SolverLimits};

/// Boolean query over ground atoms.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Query {
    Atom(Atom),
    Not(Box<Query>),
    And(Vec<Query>),
    Or(Vec<Query>),
}

impl Query {
    pub fn atom(a: Atom) -> Self {
        Query::Atom(a)
    }

    pub fn atoms(&self) -> Vec<&Atom> {
        match self {
            Query::Atom(a) => vec![a],
            Query::Not(q) => q.atoms(),
            Query::And(v) | Query::Or(v) => v.iter().flat_map(Query::atoms).collect(),
        }
    }

    pub fn holds(&self, value: &dyn Fn(&Atom) -> bool) -> bool {
        match self {
            Query::Atom(a) => value(a),
            Query::Not(q) => !q.holds(value),
            Query::And(v) => v.iter().all(|q| q.holds(value)),
            Query::Or(v) => v.iter().any(|q| q.holds(value)),
        }
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Query::Atom(a) => write!(f, "{a}"),
            Query::Not(q) => write!(f, "not {q}"),
            Query::And(v) => {
                let parts: Vec<String> = v.iter().map(ToString::to_string).collect();
                f.write_str(&parts.join(", "))
            }
            Query::Or(v) => {
                let parts: Vec<String> = v.iter().map(ToString::to_string).collect();
                f.write_str(&parts.join(" ; "))
            }
        }
    }
}

pub fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Members of SM for one component.
#[derive(Clone, Debug)]
pub struct ComponentModels {
    /// Global atom ids, ascending.
    pub atoms: Vec<usize>,
    /// Global ids of the component's soft rules.
    pub soft_rules: Vec<usize>,
    /// Truth values over `atoms`, lexicographically ordered.
    pub models: Vec<Vec<bool>>,
    /// Per model, the soft rules it violates (ascending global ids).
    pub violated: Vec<Vec<usize>>,
    pub(crate) component: Component,
}

impl ComponentModels {
    pub fn log_weights(&self, rule_weights: &[f64]) -> Vec<f64> {
        self.violated
            .iter()
            .map(|v| -v.iter().map(|&r| rule_weights[r]).sum::<f64>())
            .collect()
    }

    /// Normalized probabilities over the component's models.
    pub fn probabilities(&self, rule_weights: &[f64]) -> Vec<f64> {
        let lw = self.log_weights(rule_weights);
        let z = log_sum_exp(lw.iter().copied());
        lw.iter().map(|w| (w - z).exp()).collect()
    }

    /// Indices of models agreeing with global clamps.
    pub fn consistent(&self, clamp: &[Option<bool>]) -> Vec<usize> {
        (0..self.models.len())
            .filter(|&m| {
                self.atoms
                    .iter()
                    .enumerate()
                    .all(|(j, &a)| clamp[a].is_none_or(|v| v == self.models[m][j]))
            })
            .collect()
    }
}

/// SM of a ground program, enumerated per component.
#[derive(Clone, Debug)]
pub struct ModelSpace {
    ground: GroundProgram,
    components: Vec<ComponentModels>,
    /// Soft rules without atoms: false in every interpretation.
    constant_soft: Vec<usize>,
    empty: bool,
}

impl ModelSpace {
    pub fn build(ground: &GroundProgram) -> Result<Self> {
        Self::build_with(ground, SolverLimits::default())
    }

    pub fn build_with(ground: &GroundProgram, limits: SolverLimits) -> Result<Self> {
        let hard: Vec<bool> = ground.rules().iter().map(GroundRule::is_hard).collect();
        let split = split_components(ground, &hard);
        let constant_soft: Vec<usize> = split
            .constant_rules
            .iter()
            .copied()
            .filter(|&r| !hard[r])
            .collect();
        let components: Vec<ComponentModels> = split
            .components
            .into_par_iter()
            .map(|c| {
                let free = vec![None; c.atoms.len()];
                let models = c.enumerate(&free, limits)?;
                let soft_rules: Vec<usize> = c.rules.iter().copied().filter(|&r| !hard[r]).collect();
                let violated = models
                    .iter()
                    .map(|m| {
                        let mut truth = vec![false; ground.atoms().len()];
                        for (j, &a) in c.atoms.iter().enumerate() {
                            truth[a] = m[j];
                        }
                        soft_rules
                            .iter()
                            .copied()
                            .filter(|&r| ground.rules()[r].is_false(&truth))
                            .collect()
                    })
                    .collect();
                Ok(ComponentModels {
                    atoms: c.atoms.clone(),
                    soft_rules,
                    models,
                    violated,
                    component: c,
                })
            })
            .collect::<Result<_>>()?;
        let empty = split.constant_hard_violation || components.iter().any(|c| c.models.is_empty());
        Ok(ModelSpace {
            ground: ground.clone(),
            components,
            constant_soft,
            empty,
        })
    }

    pub fn ground(&self) -> &GroundProgram {
        &self.ground
    }

    pub fn components(&self) -> &[ComponentModels] {
        &self.components
    }

    pub fn constant_soft_rules(&self) -> &[usize] {
        &self.constant_soft
    }

    pub fn is_empty(&self) -> bool {
        self.empty
    }

    /// Number of members of SM (saturating).
    pub fn len(&self) -> usize {
        if self.empty {
            return 0;
        }
        self.components
            .iter()
            .fold(1usize, |acc, c| acc.saturating_mul(c.models.len()))
    }

    /// Component index of every atom.
    pub fn component_of(&self) -> Vec<usize> {
        let mut out = vec![usize::MAX; self.ground.atoms().len()];
        for (k, c) in self.components.iter().enumerate() {
            for &a in &c.atoms {
                out[a] = k;
            }
        }
        out
    }

    /// Every member of SM as a global truth vector, lexicographically ordered.
    pub fn flat_models(&self, cap: usize) -> Result<Vec<Vec<bool>>> {
        if self.empty {
            return Ok(Vec::new());
        }
        let comps: Vec<Component> = self.components.iter().map(|c| c.component.clone()).collect();
        let models: Vec<Vec<Vec<bool>>> = self.components.iter().map(|c| c.models.clone()).collect();
        product(self.ground.atoms().len(), &comps, &models, cap)
    }

    fn ensure_nonempty(&self) -> Result<()> {
        if self.empty {
            Err(Error::no_stable_model())
        } else {
            Ok(())
        }
    }

    /// Expected false count per origin under the distribution.
    pub fn expected_false_counts(&self, rule_weights: &[f64]) -> Result<Vec<f64>> {
        self.ensure_nonempty()?;
        let all: Vec<Vec<usize>> = self.components.iter().map(|c| (0..c.models.len()).collect()).collect();
        Ok(self.expected_over(rule_weights, &all))
    }

    /// Expected false count per origin given clamps (models restricted per component).
    pub fn expected_false_counts_given(&self, rule_weights: &[f64], clamp: &[Option<bool>]) -> Result<Vec<f64>> {
        self.ensure_nonempty()?;
        let allowed = self.allowed(clamp)?;
        Ok(self.expected_over(rule_weights, &allowed))
    }

    fn allowed(&self, clamp: &[Option<bool>]) -> Result<Vec<Vec<usize>>> {
        let allowed: Vec<Vec<usize>> = self.components.iter().map(|c| c.consistent(clamp)).collect();
        if allowed.iter().any(Vec::is_empty) {
            return Err(Error::zero_probability());
        }
        Ok(allowed)
    }

    fn expected_over(&self, rule_weights: &[f64], allowed: &[Vec<usize>]) -> Vec<f64> {
        let rules = self.ground.rules();
        let mut out = vec![0.0; self.ground.origin_count()];
        for &r in &self.constant_soft {
            out[rules[r].origin - 1] += 1.0;
        }
        for (c, ids) in self.components.iter().zip(allowed) {
            let lw = c.log_weights(rule_weights);
            let z = log_sum_exp(ids.iter().map(|&m| lw[m]));
            for &m in ids {
                let p = (lw[m] - z).exp();
                for &r in &c.violated[m] {
                    out[rules[r].origin - 1] += p;
                }
            }
        }
        out
    }

    /// ln P(clamps) = ln Σ_{I ⊨ clamps} W(I) − ln Z.
    pub fn log_probability_of(&self, rule_weights: &[f64], clamp: &[Option<bool>]) -> Result<f64> {
        self.ensure_nonempty()?;
        let allowed = self.allowed(clamp)?;
        Ok(self
            .components
            .iter()
            .zip(&allowed)
            .map(|(c, ids)| {
                let lw = c.log_weights(rule_weights);
                log_sum_exp(ids.iter().map(|&m| lw[m])) - log_sum_exp(lw.iter().copied())
            })
            .sum())
    }

    /// Clamp vector for an observation; `None` when an atom clamped true
    /// cannot hold in any member.
    pub fn clamp_vector(&self, obs: &Observation) -> Result<Option<Vec<Option<bool>>>> {
        crate::solver::ClampSet::from(obs).resolve(&self.ground)
    }

    /// Marginal probability of `query`.
    pub fn marginal(&self, rule_weights: &[f64], query: &Query) -> Result<f64> {
        self.ensure_nonempty()?;
        let comp_of = self.component_of();
        let mut involved: Vec<usize> = Vec::new();
        for a in query.atoms() {
            match self.ground.atom_id(a) {
                Some(i) => {
                    if !involved.contains(&comp_of[i]) {
                        involved.push(comp_of[i]);
                    }
                }
                None if self.ground.in_herbrand_base(a) => {}
                None => return Err(Error::Domain(format!("unknown atom {a}"))),
            }
        }
        involved.sort_unstable();
        let probs: Vec<Vec<f64>> = involved
            .iter()
            .map(|&k| self.components[k].probabilities(rule_weights))
            .collect();
        let mut idx = vec![0usize; involved.len()];
        let mut total = 0.0;
        loop {
            let p: f64 = idx.iter().zip(&probs).map(|(&i, p)| p[i]).product();
            let value = |a: &Atom| -> bool {
                match self.ground.atom_id(a) {
                    None => false,
                    Some(i) => {
                        let k = involved.binary_search(&comp_of[i]).unwrap();
                        let c = &self.components[involved[k]];
                        let j = c.atoms.binary_search(&i).unwrap();
                        c.models[idx[k]][j]
                    }
                }
            };
            if query.holds(&value) {
                total += p;
            }
            let mut k = involved.len();
            loop {
                if k == 0 {
                    return Ok(total.clamp(0.0, 1.0));
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < probs[k].len() {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    /// Log weight of a global truth vector assumed to be a member.
    pub fn log_weight_of(&self, rule_weights: &[f64], truth: &[bool]) -> f64 {
        -self
            .ground
            .rules()
            .iter()
            .zip(rule_weights)
            .filter(|(r, _)| !r.is_hard() && r.is_false(truth))
            .map(|(_, w)| w)
            .sum::<f64>()
    }
}

/// Every member of SM, lexicographically ordered.
pub fn sm_set(ground: &GroundProgram) -> Result<Vec<Interpretation>> {
    let space = ModelSpace::build(ground)?;
    Ok(space
        .flat_models(SolverLimits::default().max_models)?
        .iter()
        .map(|t| ground.decode(t))
        .collect())
}

/// ln W(I) = −Σ w_i n_i(I); −∞ when `interp` is not a member of SM.
pub fn weight_of(ground: &GroundProgram, interp: &Interpretation) -> Result<f64> {
    let weights = ground.rule_weights()?;
    let truth = encode_lenient(ground, interp)?;
    if interp.iter().any(|a| ground.atom_id(a).is_none()) || !is_sm_member(ground, &truth)? {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(-ground
        .rules()
        .iter()
        .zip(&weights)
        .filter(|(r, _)| !r.is_hard() && r.is_false(&truth))
        .map(|(_, w)| w)
        .sum::<f64>())
}

/// Σ w over soft ground rules satisfied by `interp`; −∞ for non-members.
pub fn reward_log_weight(ground: &GroundProgram, interp: &Interpretation) -> Result<f64> {
    let weights = ground.rule_weights()?;
    let truth = encode_lenient(ground, interp)?;
    if interp.iter().any(|a| ground.atom_id(a).is_none()) || !is_sm_member(ground, &truth)? {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(ground
        .rules()
        .iter()
        .zip(&weights)
        .filter(|(r, _)| !r.is_hard() && !r.is_false(&truth))
        .map(|(_, w)| w)
        .sum())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TableEntry {
    pub interpretation: Interpretation,
    pub log_weight: f64,
    pub probability: f64,
}

#[derive(Clone, Debug)]
pub struct ProbabilityTable {
    pub atoms: Vec<Atom>,
    pub entries: Vec<TableEntry>,
    /// ln Z.
    pub normalizer: f64,
    pub fingerprint: u64,
    signature: BTreeMap<String, usize>,
    universe: Vec<Constant>,
}

impl ProbabilityTable {
    pub fn probability_of(&self, interp: &Interpretation) -> f64 {
        self.entries
            .iter()
            .find(|e| &e.interpretation == interp)
            .map_or(0.0, |e| e.probability)
    }

    /// CSV with one column per atom (0/1), then log-weight and probability.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = self
            .atoms
            .iter()
            .map(|a| format!("\"{}\"", a.to_string().replace('"', "\"\"")))
            .chain(["log_weight".to_string(), "probability".to_string()])
            .collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for e in &self.entries {
            let mut row: Vec<String> = self
                .atoms
                .iter()
                .map(|a| if e.interpretation.contains(a) { "1" } else { "0" }.to_string())
                .collect();
            row.push(format!("{:.12e}", e.log_weight));
            row.push(format!("{:.12e}", e.probability));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    fn knows(&self, a: &Atom) -> bool {
        self.atoms.contains(a)
            || (self.signature.get(&a.predicate) == Some(&a.arity())
                && a.constants().count() == a.arity()
                && a.constants().all(|c| self.universe.binary_search(c).is_ok()))
    }
}

pub fn probability_table(ground: &GroundProgram) -> Result<ProbabilityTable> {
    let weights = ground.rule_weights()?;
    let space = ModelSpace::build(ground)?;
    table_from_space(&space, &weights)
}

pub(crate) fn table_from_space(space: &ModelSpace, weights: &[f64]) -> Result<ProbabilityTable> {
    space.ensure_nonempty()?;
    let ground = space.ground();
    let flat = space.flat_models(SolverLimits::default().max_models)?;
    let lw: Vec<f64> = flat.iter().map(|t| space.log_weight_of(weights, t)).collect();
    let z = log_sum_exp(lw.iter().copied());
    let entries = flat
        .iter()
        .zip(&lw)
        .map(|(t, &w)| TableEntry {
            interpretation: ground.decode(t),
            log_weight: w,
            probability: (w - z).exp(),
        })
        .collect();
    let signature = ground
        .atoms()
        .iter()
        .map(|a| (a.predicate.clone(), a.arity()))
        .collect();
    Ok(ProbabilityTable {
        atoms: ground.atoms().to_vec(),
        entries,
        normalizer: z,
        fingerprint: ground.fingerprint(),
        signature,
        universe: ground.herbrand_universe().iter().cloned().collect(),
    })
}

pub fn marginal(table: &ProbabilityTable, query: &Query) -> Result<f64> {
    if let Some(a) = query.atoms().into_iter().find(|a| !table.knows(a)) {
        return Err(Error::Domain(format!("unknown atom {a}")));
    }
    let p: f64 = table
        .entries
        .iter()
        .filter(|e| query.holds(&|a: &Atom| e.interpretation.contains(a)))
        .map(|e| e.probability)
        .sum();
    Ok(p.clamp(0.0, 1.0))
}

/// Propositional formula over atom ids of an [`MlnModel`].
#[derive(Clone, Debug, PartialEq)]
pub enum Formula {
    True,
    False,
    Atom(usize),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn eval(&self, t: &[bool]) -> bool {
        match self {
            Formula::True => true,
            Formula::False => false,
            Formula::Atom(a) => t[*a],
            Formula::Not(f) => !f.eval(t),
            Formula::And(v) => v.iter().all(|f| f.eval(t)),
            Formula::Or(v) => v.iter().any(|f| f.eval(t)),
            Formula::Implies(a, b) => !a.eval(t) || b.eval(t),
        }
    }

    pub fn and(mut v: Vec<Formula>) -> Formula {
        match v.len() {
            0 => Formula::True,
            1 => v.pop().unwrap(),
            _ => Formula::And(v),
        }
    }

    pub fn or(mut v: Vec<Formula>) -> Formula {
        match v.len() {
            0 => Formula::False,
            1 => v.pop().unwrap(),
            _ => Formula::Or(v),
        }
    }

    fn write(&self, atoms: &[Atom], f: &mut fmt::Formatter<'_>, top: bool) -> fmt::Result {
        let paren = |f: &mut fmt::Formatter<'_>, inner: &dyn Fn(&mut fmt::Formatter<'_>) -> fmt::Result| {
            if top {
                inner(f)
            } else {
                f.write_str("(")?;
                inner(f)?;
                f.write_str(")")
            }
        };
        match self {
            Formula::True => f.write_str("true"),
            Formula::False => f.write_str("false"),
            Formula::Atom(a) => write!(f, "{}", atoms[*a]),
            Formula::Not(x) => {
                f.write_str("!")?;
                x.write(atoms, f, false)
            }
            Formula::And(v) | Formula::Or(v) => {
                let op = if matches!(self, Formula::And(_)) { " & " } else { " | " };
                paren(f, &|f| {
                    for (i, x) in v.iter().enumerate() {
                        if i > 0 {
                            f.write_str(op)?;
                        }
                        x.write(atoms, f, false)?;
                    }
                    Ok(())
                })
            }
            Formula::Implies(a, b) => paren(f, &|f| {
                a.write(atoms, f, false)?;
                f.write_str(" -> ")?;
                b.write(atoms, f, false)
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MlnWeight {
    Hard,
    Soft(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlnFormula {
    pub weight: MlnWeight,
    pub formula: Formula,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlnModel {
    pub atoms: Vec<Atom>,
    pub formulas: Vec<MlnFormula>,
}

impl fmt::Display for MlnModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for x in &self.formulas {
            match x.weight {
                MlnWeight::Hard => f.write_str("hard: ")?,
                MlnWeight::Soft(w) => write!(f, "{w}: ")?,
            }
            x.formula.write(&self.atoms, f, true)?;
            writeln!(f)?;
        }
        Ok(())
    }
}

const MLN_ATOM_CAP: usize = 24;

/// Probability of every interpretation satisfying the hard formulas, keyed
/// by truth vector over `model.atoms`.
pub fn mln_distribution(model: &MlnModel) -> Result<Vec<(Vec<bool>, f64)>> {
    let n = model.atoms.len();
    if n > MLN_ATOM_CAP {
        return Err(Error::Resource(format!(
            "MLN enumeration over {n} atoms exceeds the cap of {MLN_ATOM_CAP}"
        )));
    }
    let mut worlds = Vec::new();
    let mut t = vec![false; n];
    for mask in 0u64..(1u64 << n) {
        for (a, v) in t.iter_mut().enumerate() {
            *v = mask >> a & 1 == 1;
        }
        let mut score = 0.0;
        let mut ok = true;
        for x in &model.formulas {
            let sat = x.formula.eval(&t);
            match x.weight {
                MlnWeight::Hard if !sat => {
                    ok = false;
                    break;
                }
                MlnWeight::Hard => {}
                MlnWeight::Soft(w) => {
                    if sat {
                        score += w;
                    }
                }
            }
        }
        if ok {
            worlds.push((t.clone(), score));
        }
    }
    if worlds.is_empty() {
        return Err(Error::Semantic("no interpretation satisfies the hard formulas".into()));
    }
    let z = log_sum_exp(worlds.iter().map(|w| w.1));
    Ok(worlds.into_iter().map(|(t, s)| (t, (s - z).exp())).collect())
}

pub fn mln_probability(model: &MlnModel, interp: &Interpretation) -> Result<f64> {
    let mut target = vec![false; model.atoms.len()];
    for a in interp.iter() {
        match model.atoms.iter().position(|b| b == a) {
            Some(i) => target[i] = true,
            None => return Err(Error::Domain(format!("atom {a} is not in the model"))),
        }
    }
    Ok(mln_distribution(model)?
        .into_iter()
        .find(|(t, _)| *t == target)
        .map_or(0.0, |(_, p)| p))
}
