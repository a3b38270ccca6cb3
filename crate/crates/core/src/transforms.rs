//! Program rewritings: the unsat translation, sign normalization, example
//! indexing, noise atoms, ground completion to an MLN, coherence checks for
//! simple programs, and the logit/sigmoid maps to ProbLog probabilities.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grounder::{encode_lenient, ground, GroundProgram, GroundRule};
use crate::model::{Atom, Constant, Interpretation, Literal, Observation, Program, Sign, Term, Weight, WeightedRule};
use crate::semantics::{Formula, MlnFormula, MlnModel, MlnWeight, ModelSpace};

pub const UNSAT: &str = "unsat";
pub const NEG: &str = "neg";
pub const EXAMPLE_INDEX: &str = "ex_index";

/// Filler for the unused trailing slots of `unsat`/`neg` atoms, whose arity
/// must be the same for every rule.
fn pad() -> Term {
    Term::Const(Constant::Str(String::new()))
}

fn ensure_fresh(program: &Program, name: &str) -> Result<()> {
    if program.has_predicate(name) {
        Err(Error::NameCollision(name.to_string()))
    } else {
        Ok(())
    }
}

fn ensure_bound(program: &Program) -> Result<()> {
    if program.is_parameterized() {
        Err(Error::Usage("program has unbound @w(i) weights".into()))
    } else {
        Ok(())
    }
}

fn weight_token(w: f64) -> Term {
    Term::Const(Constant::Str(format!("{w}")))
}

/// Result of the unsat translation: a hard program plus the penalty
/// attached to each soft rule's `unsat` atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct UnsatTranslation {
    pub program: Program,
    /// Source rule index → weight charged per true `unsat(index, …)` atom.
    pub penalties: BTreeMap<usize, f64>,
}

impl UnsatTranslation {
    /// Number of true `unsat(i, …)` atoms per source rule index (1-based
    /// position in the returned vector + 1).
    pub fn counts(&self, interp: &Interpretation, rule_count: usize) -> Vec<usize> {
        let mut out = vec![0; rule_count];
        for a in interp.iter().filter(|a| a.predicate == UNSAT) {
            if let Some(Term::Const(Constant::Int(i))) = a.args.first() {
                if let Some(slot) = out.get_mut(*i as usize - 1) {
                    *slot += 1;
                }
            }
        }
        out
    }

    /// Σ penalties of true `unsat` atoms.
    pub fn penalty(&self, interp: &Interpretation) -> f64 {
        let counts = self.counts(interp, self.penalties.keys().max().copied().unwrap_or(0));
        self.penalties
            .iter()
            .map(|(&i, &w)| w * counts[i - 1] as f64)
            .sum()
    }
}

impl std::fmt::Display for UnsatTranslation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.program)?;
        for (i, w) in &self.penalties {
            writeln!(f, "% penalty {UNSAT}({i}, ...) = {w}")?;
        }
        Ok(())
    }
}

pub fn unsat_translation(program: &Program) -> Result<UnsatTranslation> {
    ensure_bound(program)?;
    ensure_fresh(program, UNSAT)?;
    let width = program
        .rules()
        .iter()
        .filter(|r| r.weight.is_soft())
        .map(|r| r.variables().len())
        .max()
        .unwrap_or(0);
    let mut rules = Vec::new();
    let mut penalties = BTreeMap::new();
    for r in program.rules() {
        let Weight::Soft(w) = r.weight else {
            rules.push(r.clone());
            continue;
        };
        let mut args = vec![Term::Const(Constant::Int(r.index as i64)), weight_token(w)];
        args.extend(r.variables().iter().map(|v| Term::var(v)));
        args.resize(width + 2, pad());
        let unsat = Atom::new(UNSAT, args);
        let mut body = r.body.clone();
        body.extend(r.head.iter().cloned().map(Literal::not));
        rules.push(WeightedRule::new(Weight::Hard, vec![unsat.clone()], body).with_guards(r.guards.clone()));
        let mut body = r.body.clone();
        body.push(Literal::not(unsat));
        rules.push(WeightedRule::new(Weight::Hard, r.head.clone(), body).with_guards(r.guards.clone()));
        penalties.insert(r.index, w);
    }
    Ok(UnsatTranslation {
        program: Program::new(rules)?,
        penalties,
    })
}

/// Per-rule false counts read off the `unsat` atoms of the translation's
/// stable model that agrees with `interp` on the original atoms.
pub fn unsat_counts(program: &Program, interp: &Interpretation) -> Result<Vec<usize>> {
    let bound = if program.is_parameterized() {
        program.bind(&vec![0.0; program.parameter_count()])?
    } else {
        program.clone()
    };
    let translation = unsat_translation(&bound)?;
    let g = ground(&translation.program)?;
    let mut truth = encode_lenient(&g, interp)?;
    for r in g.rules() {
        if r.head.len() == 1 && g.atom(r.head[0]).predicate == UNSAT && r.body_true(&truth) {
            truth[r.head[0]] = true;
        }
    }
    Ok(translation.counts(&g.decode(&truth), program.rules().len()))
}

/// Sign normalization at the ground level: every soft ground rule with a
/// positive weight `w` becomes `0: rule`, hard `neg(i, x) :- body, not head`
/// and `-w: :- not neg(i, x)`. The result is re-grounded so that it can be
/// solved like any other program.
pub fn negate_ground(g: &GroundProgram) -> Result<GroundProgram> {
    if g.atoms().iter().any(|a| a.predicate == NEG) {
        return Err(Error::NameCollision(NEG.to_string()));
    }
    let weights = g.rule_weights()?;
    let width = g
        .rules()
        .iter()
        .zip(&weights)
        .filter(|(r, &w)| !r.is_hard() && w > 0.0)
        .map(|(r, _)| r.bindings.len())
        .max()
        .unwrap_or(0);
    let mut rules = Vec::with_capacity(g.rules().len());
    for (r, &w) in g.rules().iter().zip(&weights) {
        let source = g.rule_to_source(r);
        if r.is_hard() || w <= 0.0 {
            rules.push(source);
            continue;
        }
        let mut args = vec![Term::Const(Constant::Int(r.origin as i64))];
        args.extend(r.bindings.iter().cloned().map(Term::Const));
        args.resize(width + 1, pad());
        let neg = Atom::new(NEG, args);
        let mut body = source.body.clone();
        body.extend(source.head.iter().cloned().map(Literal::not));
        rules.push(WeightedRule::new(Weight::Soft(0.0), source.head.clone(), source.body.clone()));
        rules.push(WeightedRule::new(Weight::Hard, vec![neg.clone()], body));
        rules.push(WeightedRule::new(Weight::Soft(-w), vec![], vec![Literal::not(neg)]));
    }
    ground(&Program::new(rules)?)
}

/// Program-level Π^neg. Built from the ground program: a non-ground
/// `:- not neg(i, X)` would be unsafe, so the rewrite is done per instance.
pub fn to_negative(program: &Program) -> Result<Program> {
    ensure_bound(program)?;
    ensure_fresh(program, NEG)?;
    if program.rules().iter().all(|r| match r.weight {
        Weight::Soft(w) => w <= 0.0,
        _ => true,
    }) {
        return Ok(program.clone());
    }
    negate_ground(&ground(program)?)?.to_program()
}

fn fresh_var(rule: &WeightedRule) -> String {
    let vars = rule.variables();
    (0..)
        .map(|i| if i == 0 { "K".to_string() } else { format!("K{i}") })
        .find(|v| !vars.contains(v))
        .unwrap()
}

/// Adds a trailing example argument to every predicate; the argument ranges
/// over `ex_index(1..m)`.
pub fn index_for_multi(program: &Program, m: usize) -> Result<Program> {
    if m == 0 {
        return Err(Error::Usage("example count must be at least 1".into()));
    }
    ensure_fresh(program, EXAMPLE_INDEX)?;
    let mut rules = Vec::with_capacity(program.rules().len() + m);
    for r in program.rules() {
        let k = Term::var(&fresh_var(r));
        let extend = |a: &Atom| {
            let mut a = a.clone();
            a.args.push(k.clone());
            a
        };
        let mut body = vec![Literal::pos(Atom::new(EXAMPLE_INDEX, vec![k.clone()]))];
        body.extend(r.body.iter().map(|l| Literal {
            sign: l.sign,
            atom: extend(&l.atom),
        }));
        rules.push(
            WeightedRule::new(r.weight, r.head.iter().map(extend).collect(), body)
                .with_guards(r.guards.clone()),
        );
    }
    for i in 1..=m {
        rules.push(WeightedRule::new(
            Weight::Hard,
            vec![Atom::new(EXAMPLE_INDEX, vec![Term::int(i as i64)])],
            vec![],
        ));
    }
    Program::new(rules)
}

fn with_index(a: &Atom, i: usize) -> Atom {
    let mut a = a.clone();
    a.args.push(Term::int(i as i64));
    a
}

/// Union of the observations with example `i` appended to every atom of
/// observation `i` (1-based).
pub fn merge_observations(observations: &[Observation]) -> Result<Observation> {
    let mut t = BTreeSet::new();
    let mut f = BTreeSet::new();
    for (i, o) in observations.iter().enumerate() {
        t.extend(o.clamped_true().iter().map(|a| with_index(a, i + 1)));
        f.extend(o.clamped_false().iter().map(|a| with_index(a, i + 1)));
    }
    Observation::new(t, f, None)
}

pub fn noise_name(predicate: &str) -> String {
    format!("noise_{predicate}")
}

/// Default noise penalty: comfortably above every weight in the program.
pub fn default_noise_weight(program: &Program) -> f64 {
    10.0 + program.max_abs_weight()
}

/// For every ground atom `p(t)` of an observed predicate, adds hard
/// `p(t) :- noise_p(t).` and `-u: noise_p(t).` Atoms come from the ground
/// program plus `extra` (typically the evidence atoms).
pub fn noise_augment_with(program: &Program, observed: &[String], extra: &[Atom], u: f64) -> Result<Program> {
    if !(u > 0.0 && u.is_finite()) {
        return Err(Error::Domain(format!("noise weight must be positive, got {u}")));
    }
    if observed.is_empty() {
        return Ok(program.clone());
    }
    for p in observed {
        ensure_fresh(program, &noise_name(p))?;
    }
    let g = ground(program)?;
    let mut atoms: Vec<Atom> = g
        .atoms()
        .iter()
        .filter(|a| observed.contains(&a.predicate))
        .cloned()
        .collect();
    for a in extra {
        if observed.contains(&a.predicate) && !atoms.contains(a) {
            atoms.push(a.clone());
        }
    }
    let mut rules = program.rules().to_vec();
    for a in atoms {
        let noise = Atom::new(&noise_name(&a.predicate), a.args.clone());
        rules.push(WeightedRule::new(Weight::Hard, vec![a], vec![Literal::pos(noise.clone())]));
        rules.push(WeightedRule::new(Weight::Soft(-u), vec![noise], vec![]));
    }
    Program::new(rules)
}

pub fn noise_augment(program: &Program, observed: &[String], u: f64) -> Result<Program> {
    noise_augment_with(program, observed, &[], u)
}

/// A cycle in the positive dependency graph given as (head, positive body)
/// edges, if any.
pub fn positive_cycle(edges: impl IntoIterator<Item = (Atom, Vec<Atom>)>) -> Option<Vec<Atom>> {
    let mut graph: BTreeMap<Atom, BTreeSet<Atom>> = BTreeMap::new();
    for (head, body) in edges {
        graph.entry(head).or_default().extend(body);
    }
    // 1 = on stack, 2 = done
    let mut state: HashMap<Atom, u8> = HashMap::new();
    let mut stack: Vec<Atom> = Vec::new();
    fn visit(
        a: &Atom,
        graph: &BTreeMap<Atom, BTreeSet<Atom>>,
        state: &mut HashMap<Atom, u8>,
        stack: &mut Vec<Atom>,
    ) -> Option<Vec<Atom>> {
        state.insert(a.clone(), 1);
        stack.push(a.clone());
        for b in graph.get(a).into_iter().flatten() {
            match state.get(b) {
                Some(1) => {
                    let start = stack.iter().position(|x| x == b).unwrap();
                    let mut cycle = stack[start..].to_vec();
                    cycle.push(b.clone());
                    return Some(cycle);
                }
                Some(_) => {}
                None => {
                    if let Some(c) = visit(b, graph, state, stack) {
                        return Some(c);
                    }
                }
            }
        }
        stack.pop();
        state.insert(a.clone(), 2);
        None
    }
    for a in graph.keys() {
        if !state.contains_key(a) {
            if let Some(c) = visit(a, &graph, &mut state, &mut stack) {
                return Some(c);
            }
        }
    }
    None
}

fn ground_edges(g: &GroundProgram) -> impl Iterator<Item = (Atom, Vec<Atom>)> + '_ {
    g.rules().iter().flat_map(move |r| {
        r.head.iter().map(move |&h| {
            (g.atom(h).clone(), r.pos.iter().map(|&b| g.atom(b).clone()).collect())
        })
    })
}

fn body_formula(r: &GroundRule) -> Vec<Formula> {
    r.pos
        .iter()
        .chain(&r.negneg)
        .map(|&a| Formula::Atom(a))
        .chain(r.neg.iter().map(|&a| Formula::Not(Box::new(Formula::Atom(a)))))
        .collect()
}

/// Ground Clark completion: every rule as a weighted (or hard) implication
/// plus, per atom, the hard support formula `a -> ∨ (body ∧ ¬other heads)`.
pub fn completion(program: &Program) -> Result<MlnModel> {
    ensure_bound(program)?;
    let g = ground(program)?;
    // Variable-free rules are checked as written, including instances the
    // grounder drops as never applicable (such as `a :- a.`).
    let written = program
        .rules()
        .iter()
        .filter(|r| r.variables().is_empty())
        .flat_map(|r| {
            let body: Vec<Atom> = r
                .body
                .iter()
                .filter(|l| l.sign == Sign::Pos)
                .map(|l| l.atom.clone())
                .collect();
            r.head.iter().map(move |h| (h.clone(), body.clone()))
        });
    if let Some(cycle) = positive_cycle(ground_edges(&g).chain(written)) {
        return Err(Error::NotTight(cycle.iter().map(ToString::to_string).collect()));
    }
    completion_ground(&g)
}

pub fn completion_ground(g: &GroundProgram) -> Result<MlnModel> {
    if let Some(cycle) = positive_cycle(ground_edges(g)) {
        return Err(Error::NotTight(cycle.iter().map(ToString::to_string).collect()));
    }
    let weights = g.rule_weights()?;
    let mut formulas = Vec::new();
    for (r, &w) in g.rules().iter().zip(&weights) {
        let head = Formula::or(r.head.iter().map(|&a| Formula::Atom(a)).collect());
        let body = body_formula(r);
        let formula = if body.is_empty() {
            head
        } else {
            Formula::Implies(Box::new(Formula::and(body)), Box::new(head))
        };
        formulas.push(MlnFormula {
            weight: if r.is_hard() { MlnWeight::Hard } else { MlnWeight::Soft(w) },
            formula,
        });
    }
    for a in 0..g.atoms().len() {
        let supports: Vec<Formula> = g
            .rules()
            .iter()
            .filter(|r| r.head.contains(&a))
            .map(|r| {
                let mut parts = body_formula(r);
                parts.extend(
                    r.head
                        .iter()
                        .filter(|&&h| h != a)
                        .map(|&h| Formula::Not(Box::new(Formula::Atom(h)))),
                );
                Formula::and(parts)
            })
            .collect();
        formulas.push(MlnFormula {
            weight: MlnWeight::Hard,
            formula: Formula::Implies(Box::new(Formula::Atom(a)), Box::new(Formula::or(supports))),
        });
    }
    Ok(MlnModel {
        atoms: g.atoms().to_vec(),
        formulas,
    })
}

/// A soft atomic fact after merging duplicates.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilisticFact {
    pub atom: Atom,
    /// Source rules contributing this atom.
    pub origins: Vec<usize>,
    /// Summed weight when every contribution is numeric.
    pub weight: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoherenceReport {
    pub is_simple: bool,
    /// Present only when the program is simple and k-coherence was verified.
    pub k: Option<usize>,
    pub probabilistic_facts: Vec<ProbabilisticFact>,
    pub hard_part: Vec<WeightedRule>,
    /// Distinct numbers of models observed over all PF assignments.
    pub model_counts: BTreeSet<usize>,
    pub failure: Option<String>,
}

pub const COHERENCE_PF_CAP: usize = 16;

/// Inspects a program for simplicity and determines the number of stable
/// models per PF assignment. `k` is filled in when that number is constant.
pub fn coherence_report(program: &Program) -> Result<CoherenceReport> {
    let g = ground(program)?;
    let mut report = CoherenceReport {
        is_simple: true,
        k: None,
        probabilistic_facts: Vec::new(),
        hard_part: g
            .rules()
            .iter()
            .filter(|r| r.is_hard())
            .map(|r| g.rule_to_source(r))
            .collect(),
        model_counts: BTreeSet::new(),
        failure: None,
    };
    let mut pf_index: HashMap<usize, usize> = HashMap::new();
    for r in g.rules().iter().filter(|r| !r.is_hard()) {
        let atomic = r.head.len() == 1 && r.pos.is_empty() && r.neg.is_empty() && r.negneg.is_empty();
        if !atomic {
            report.is_simple = false;
            report.failure = Some(format!("soft rule `{}` is not an atomic fact", g.rule_to_source(r)));
            return Ok(report);
        }
        let w = match r.weight {
            Weight::Soft(w) => Some(w),
            _ => None,
        };
        let a = r.head[0];
        match pf_index.get(&a) {
            Some(&k) => {
                let pf = &mut report.probabilistic_facts[k];
                pf.origins.push(r.origin);
                pf.weight = pf.weight.zip(w).map(|(x, y)| x + y);
            }
            None => {
                pf_index.insert(a, report.probabilistic_facts.len());
                report.probabilistic_facts.push(ProbabilisticFact {
                    atom: g.atom(a).clone(),
                    origins: vec![r.origin],
                    weight: w,
                });
            }
        }
    }
    if let Some(r) = g
        .rules()
        .iter()
        .find(|r| r.is_hard() && r.head.iter().any(|a| pf_index.contains_key(a)))
    {
        report.is_simple = false;
        report.failure = Some(format!("soft atom occurs in the head of hard rule `{}`", g.rule_to_source(r)));
        return Ok(report);
    }

    let space = ModelSpace::build(&g)?;
    if space.is_empty() {
        report.model_counts.insert(0);
        report.failure = Some("the hard part has no stable model".into());
        return Ok(report);
    }
    let per_component: Vec<Result<BTreeSet<usize>>> = space
        .components()
        .par_iter()
        .map(|c| {
            let pf: Vec<usize> = (0..c.atoms.len())
                .filter(|&j| pf_index.contains_key(&c.atoms[j]))
                .collect();
            if pf.len() > COHERENCE_PF_CAP {
                return Err(Error::Resource(format!(
                    "component has {} probabilistic facts; coherence checking is capped at {COHERENCE_PF_CAP}",
                    pf.len()
                )));
            }
            let mut counts: HashMap<Vec<bool>, usize> = HashMap::new();
            for m in &c.models {
                *counts.entry(pf.iter().map(|&j| m[j]).collect()).or_default() += 1;
            }
            let mut distinct: BTreeSet<usize> = counts.values().copied().collect();
            if counts.len() < 1 << pf.len() {
                distinct.insert(0);
            }
            Ok(distinct)
        })
        .collect();
    let mut k = Some(1usize);
    let mut all: BTreeSet<usize> = BTreeSet::from([1]);
    for distinct in per_component {
        let distinct = distinct?;
        all = all
            .iter()
            .flat_map(|x| distinct.iter().map(move |y| x.saturating_mul(*y)))
            .collect();
        k = match (k, distinct.len()) {
            (Some(acc), 1) => Some(acc.saturating_mul(*distinct.first().unwrap())),
            _ => None,
        };
    }
    report.model_counts = all;
    if k == Some(0) {
        k = None;
    }
    if k.is_none() {
        report.failure = Some(format!(
            "the number of stable models varies with the PF assignment: {:?}",
            report.model_counts
        ));
    }
    report.k = k;
    Ok(report)
}

/// Checks that `program` is simple and k-coherent for the given `k`.
pub fn coherence_check(program: &Program, k: usize) -> Result<CoherenceReport> {
    let mut report = coherence_report(program)?;
    if let Some(found) = report.k {
        if found != k {
            report.failure = Some(format!("program is {found}-coherent, not {k}-coherent"));
            report.k = None;
        }
    }
    Ok(report)
}

/// w = ln(p / (1 - p)).
pub fn problog_weight_map(probabilities: &[f64]) -> Result<Vec<f64>> {
    probabilities
        .iter()
        .map(|&p| {
            if p > 0.0 && p < 1.0 {
                Ok((p / (1.0 - p)).ln())
            } else {
                Err(Error::Domain(format!("probability {p} is not strictly between 0 and 1")))
            }
        })
        .collect()
}

/// p = e^w / (1 + e^w).
pub fn problog_probability_map(weights: &[f64]) -> Vec<f64> {
    weights.iter().map(|&w| 1.0 / (1.0 + (-w).exp())).collect()
}

fn problog_literal(l: &Literal) -> Result<String> {
    match l.sign {
        Sign::Pos => Ok(l.atom.to_string()),
        Sign::Not => Ok(format!("\\+{}", l.atom)),
        Sign::NotNot => Err(Error::Semantic(
            "choice rules have no ProbLog counterpart".into(),
        )),
    }
}

/// ProbLog rendering of a simple program: `p::a.` for every probabilistic
/// fact and the hard rules as clauses.
pub fn to_problog(program: &Program) -> Result<String> {
    ensure_bound(program)?;
    let mut out = String::new();
    for r in program.rules() {
        match r.weight {
            Weight::Soft(w) if r.is_fact() => {
                out.push_str(&format!("{}::{}.\n", problog_probability_map(&[w])[0], r.head[0]));
            }
            Weight::Soft(_) | Weight::Param(_) => {
                return Err(Error::Semantic(format!(
                    "soft rule {} is not an atomic fact; only simple programs map to ProbLog",
                    r.index
                )))
            }
            Weight::Hard => {
                if r.head.len() > 1 {
                    return Err(Error::Semantic("disjunctive heads have no ProbLog counterpart".into()));
                }
                let mut body: Vec<String> = r.body.iter().map(problog_literal).collect::<Result<_>>()?;
                body.extend(r.guards.iter().map(|g| format!("{} \\= {}", g.left, g.right)));
                let head = r.head.first().map_or("false".to_string(), ToString::to_string);
                if body.is_empty() {
                    out.push_str(&format!("{head}.\n"));
                } else {
                    out.push_str(&format!("{head} :- {}.\n", body.join(", ")));
                }
            }
        }
    }
    Ok(out)
}
