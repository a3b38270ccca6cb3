//! Instantiation of programs over their Herbrand universe.
//!
//! Rules are instantiated against the atoms that could possibly be derived
//! (a fixpoint over positive bodies, ignoring negation). Instances whose
//! positive body mentions an underivable atom are false in every stable
//! model and are skipped. Hard facts are then propagated into rule bodies so
//! that shared domain atoms do not tie independent parts of the program
//! together.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::model::{
    Atom, Constant, Interpretation, Literal, Program, Sign, Term, Weight, WeightedRule,
};

#[derive(Clone, Debug, PartialEq)]
pub struct GroundRule {
    pub weight: Weight,
    pub head: Vec<usize>,
    pub pos: Vec<usize>,
    pub neg: Vec<usize>,
    pub negneg: Vec<usize>,
    /// 1-based index of the source rule.
    pub origin: usize,
    /// Values of the source rule's variables, in first-occurrence order.
    pub bindings: Vec<Constant>,
}

impl GroundRule {
    pub fn body_true(&self, truth: &[bool]) -> bool {
        self.pos.iter().all(|&a| truth[a])
            && self.neg.iter().all(|&a| !truth[a])
            && self.negneg.iter().all(|&a| truth[a])
    }

    /// Classical falsity: body true and every head atom false.
    pub fn is_false(&self, truth: &[bool]) -> bool {
        self.body_true(truth) && self.head.iter().all(|&a| !truth[a])
    }

    pub fn atoms(&self) -> impl Iterator<Item = usize> + '_ {
        self.head
            .iter()
            .chain(&self.pos)
            .chain(&self.neg)
            .chain(&self.negneg)
            .copied()
    }

    pub fn is_hard(&self) -> bool {
        self.weight.is_hard()
    }
}

#[derive(Clone, Debug)]
pub struct GroundProgram {
    rules: Vec<GroundRule>,
    atoms: Vec<Atom>,
    index: HashMap<Atom, usize>,
    origin_weights: Vec<Weight>,
    signature: BTreeMap<String, usize>,
    universe: BTreeSet<Constant>,
}

impl PartialEq for GroundProgram {
    fn eq(&self, other: &Self) -> bool {
        self.rules == other.rules && self.atoms == other.atoms
    }
}

impl GroundProgram {
    pub fn rules(&self) -> &[GroundRule] {
        &self.rules
    }

    /// Ground atoms that occur in some rule, in first-appearance order.
    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom(&self, id: usize) -> &Atom {
        &self.atoms[id]
    }

    pub fn atom_id(&self, atom: &Atom) -> Option<usize> {
        self.index.get(atom).copied()
    }

    pub fn origin_count(&self) -> usize {
        self.origin_weights.len()
    }

    pub fn origin_weight(&self, origin: usize) -> Option<Weight> {
        origin
            .checked_sub(1)
            .and_then(|i| self.origin_weights.get(i))
            .copied()
    }

    pub fn herbrand_universe(&self) -> &BTreeSet<Constant> {
        &self.universe
    }

    /// Whether `atom` is built from the program's predicates and constants.
    /// Atoms of the Herbrand base that do not occur in any rule are false in
    /// every stable model.
    pub fn in_herbrand_base(&self, atom: &Atom) -> bool {
        self.signature.get(&atom.predicate) == Some(&atom.arity())
            && atom.args.iter().all(|t| match t {
                Term::Const(c) => self.universe.contains(c),
                Term::Var(_) => false,
            })
    }

    pub fn is_parameterized(&self) -> bool {
        self.origin_weights
            .iter()
            .any(|w| matches!(w, Weight::Param(_)))
    }

    /// Truth vector over `atoms()`; atoms of `interp` outside the program's
    /// base are rejected.
    pub fn encode(&self, interp: &Interpretation) -> Result<Vec<bool>> {
        let mut truth = vec![false; self.atoms.len()];
        for a in interp.iter() {
            match self.index.get(a) {
                Some(&i) => truth[i] = true,
                None => {
                    return Err(Error::Domain(format!(
                        "atom {a} does not occur in the ground program"
                    )))
                }
            }
        }
        Ok(truth)
    }

    pub fn decode(&self, truth: &[bool]) -> Interpretation {
        truth
            .iter()
            .zip(&self.atoms)
            .filter(|(t, _)| **t)
            .map(|(_, a)| a.clone())
            .collect()
    }

    /// Numeric weight of every ground rule (0 for hard rules).
    pub fn rule_weights(&self) -> Result<Vec<f64>> {
        self.rules
            .iter()
            .map(|r| match r.weight {
                Weight::Hard => Ok(0.0),
                Weight::Soft(w) => Ok(w),
                Weight::Param(i) => Err(Error::Usage(format!(
                    "weight @w({i}) is unbound; bind parameters first"
                ))),
            })
            .collect()
    }

    /// Numeric weight of every ground rule with parameters taken from `params`.
    pub fn rule_weights_with(&self, params: &[f64]) -> Result<Vec<f64>> {
        self.rules
            .iter()
            .map(|r| match r.weight {
                Weight::Hard => Ok(0.0),
                Weight::Soft(w) => Ok(w),
                Weight::Param(i) => params.get(i - 1).copied().ok_or_else(|| {
                    Error::Usage(format!("no value supplied for @w({i})"))
                }),
            })
            .collect()
    }

    pub fn bind(&self, params: &[f64]) -> Result<GroundProgram> {
        let mut g = self.clone();
        for r in &mut g.rules {
            if let Weight::Param(i) = r.weight {
                let w = params
                    .get(i - 1)
                    .ok_or_else(|| Error::Usage(format!("no value supplied for @w({i})")))?;
                r.weight = Weight::Soft(*w);
            }
        }
        for w in &mut g.origin_weights {
            if let Weight::Param(i) = *w {
                *w = Weight::Soft(params[i - 1]);
            }
        }
        Ok(g)
    }

    /// The ground rules as a program, one rule per ground instance. Fails
    /// when a `@w(i)` rule has several instances, since a parameter may
    /// label only one rule; bind the weights first.
    pub fn to_program(&self) -> Result<Program> {
        let rules = self
            .rules
            .iter()
            .map(|r| self.rule_to_source(r))
            .collect();
        Program::new(rules)
    }

    pub fn rule_to_source(&self, r: &GroundRule) -> WeightedRule {
        let atom = |i: &usize| self.atoms[*i].clone();
        let body = r
            .pos
            .iter()
            .map(|i| Literal::pos(atom(i)))
            .chain(r.neg.iter().map(|i| Literal::not(atom(i))))
            .chain(r.negneg.iter().map(|i| Literal::not_not(atom(i))))
            .collect();
        WeightedRule::new(r.weight, r.head.iter().map(atom).collect(), body)
    }

    /// Structural fingerprint ignoring soft weight values.
    pub fn structure_key(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.atoms.hash(&mut h);
        for r in &self.rules {
            r.weight.is_hard().hash(&mut h);
            r.head.hash(&mut h);
            r.pos.hash(&mut h);
            r.neg.hash(&mut h);
            r.negneg.hash(&mut h);
        }
        h.finish()
    }

    /// Fingerprint including weights.
    pub fn fingerprint(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.structure_key().hash(&mut h);
        for r in &self.rules {
            match r.weight {
                Weight::Hard => 0u64.hash(&mut h),
                Weight::Soft(w) => w.to_bits().hash(&mut h),
                Weight::Param(i) => (i as u64).hash(&mut h),
            }
        }
        h.finish()
    }
}

impl fmt::Display for GroundProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rules {
            writeln!(f, "{} % origin {}", self.rule_to_source(r), r.origin)?;
        }
        Ok(())
    }
}

type Subst = HashMap<String, Constant>;

struct Relation {
    tuples: Vec<Vec<Constant>>,
    set: HashSet<Vec<Constant>>,
}

#[derive(Default)]
struct Derivable {
    rels: HashMap<String, Relation>,
}

impl Derivable {
    fn insert(&mut self, pred: &str, tuple: Vec<Constant>) -> bool {
        let rel = self.rels.entry(pred.to_string()).or_insert_with(|| Relation {
            tuples: Vec::new(),
            set: HashSet::new(),
        });
        if rel.set.insert(tuple.clone()) {
            rel.tuples.push(tuple);
            true
        } else {
            false
        }
    }

    fn contains(&self, pred: &str, tuple: &[Constant]) -> bool {
        self.rels
            .get(pred)
            .is_some_and(|r| r.set.contains(tuple))
    }

    fn tuples(&self, pred: &str) -> &[Vec<Constant>] {
        self.rels.get(pred).map_or(&[], |r| &r.tuples)
    }
}

fn subst_term(t: &Term, s: &Subst) -> Constant {
    match t {
        Term::Const(c) => c.clone(),
        Term::Var(v) => s[v].clone(),
    }
}

fn subst_args(a: &Atom, s: &Subst) -> Vec<Constant> {
    a.args.iter().map(|t| subst_term(t, s)).collect()
}

fn ground_atom(pred: &str, args: Vec<Constant>) -> Atom {
    Atom::new(pred, args.into_iter().map(Term::Const).collect())
}

/// All substitutions that make every positive body atom derivable and every
/// guard true.
fn substitutions(rule: &WeightedRule, pos: &[&Atom], db: &Derivable) -> Vec<Subst> {
    fn go(
        k: usize,
        pos: &[&Atom],
        db: &Derivable,
        s: &mut Subst,
        rule: &WeightedRule,
        out: &mut Vec<Subst>,
    ) {
        if k == pos.len() {
            if rule
                .guards
                .iter()
                .all(|g| subst_term(&g.left, s) != subst_term(&g.right, s))
            {
                out.push(s.clone());
            }
            return;
        }
        let atom = pos[k];
        'tuples: for tuple in db.tuples(&atom.predicate) {
            if tuple.len() != atom.args.len() {
                continue;
            }
            let mut bound = Vec::new();
            for (t, c) in atom.args.iter().zip(tuple) {
                match t {
                    Term::Const(k) if k != c => {
                        for v in bound.drain(..) {
                            s.remove(&v);
                        }
                        continue 'tuples;
                    }
                    Term::Const(_) => {}
                    Term::Var(v) => match s.get(v) {
                        Some(x) if x != c => {
                            for v in bound.drain(..) {
                                s.remove(&v);
                            }
                            continue 'tuples;
                        }
                        Some(_) => {}
                        None => {
                            s.insert(v.clone(), c.clone());
                            bound.push(v.clone());
                        }
                    },
                }
            }
            go(k + 1, pos, db, s, rule, out);
            for v in bound {
                s.remove(&v);
            }
        }
    }
    let mut out = Vec::new();
    go(0, pos, db, &mut Subst::new(), rule, &mut out);
    out
}

struct Raw {
    weight: Weight,
    head: Vec<Atom>,
    pos: Vec<Atom>,
    neg: Vec<Atom>,
    negneg: Vec<Atom>,
    origin: usize,
    bindings: Vec<Constant>,
}

pub fn ground(program: &Program) -> Result<GroundProgram> {
    let rules = program.rules();
    let universe: BTreeSet<Constant> = rules
        .iter()
        .flat_map(|r| {
            r.atoms()
                .flat_map(|a| a.constants().cloned().collect::<Vec<_>>())
                .chain(
                    r.guards
                        .iter()
                        .flat_map(|g| [&g.left, &g.right])
                        .filter_map(|t| match t {
                            Term::Const(c) => Some(c.clone()),
                            Term::Var(_) => None,
                        }),
                )
                .collect::<Vec<_>>()
        })
        .collect();
    if universe.is_empty() && rules.iter().any(|r| !r.variables().is_empty()) {
        return Err(Error::Grounding(
            "the Herbrand universe is empty but the program has variables".into(),
        ));
    }
    for r in rules {
        if let Some(v) = r.unsafe_variables().first() {
            return Err(Error::Grounding(format!(
                "rule {} is unsafe in variable {v}",
                r.index
            )));
        }
    }
    let positive: Vec<Vec<&Atom>> = rules
        .iter()
        .map(|r| {
            r.body
                .iter()
                .filter(|l| l.sign == Sign::Pos)
                .map(|l| &l.atom)
                .collect()
        })
        .collect();

    let mut db = Derivable::default();
    loop {
        let mut changed = false;
        for (r, pos) in rules.iter().zip(&positive) {
            if r.head.is_empty() {
                continue;
            }
            for s in substitutions(r, pos, &db) {
                for h in &r.head {
                    changed |= db.insert(&h.predicate, subst_args(h, &s));
                }
            }
        }
        if !changed {
            break;
        }
    }

    let mut raw: Vec<Raw> = Vec::new();
    for (r, pos) in rules.iter().zip(&positive) {
        let vars = r.variables();
        let mut instances: Vec<Raw> = Vec::new();
        'subst: for s in substitutions(r, pos, &db) {
            let mut inst = Raw {
                weight: r.weight,
                head: Vec::new(),
                pos: Vec::new(),
                neg: Vec::new(),
                negneg: Vec::new(),
                origin: r.index,
                bindings: vars.iter().map(|v| s[v].clone()).collect(),
            };
            for h in &r.head {
                inst.head.push(ground_atom(&h.predicate, subst_args(h, &s)));
            }
            for l in &r.body {
                let args = subst_args(&l.atom, &s);
                let derivable = db.contains(&l.atom.predicate, &args);
                let a = ground_atom(&l.atom.predicate, args);
                match l.sign {
                    Sign::Pos => inst.pos.push(a),
                    Sign::Not if derivable => inst.neg.push(a),
                    Sign::Not => {}
                    Sign::NotNot if derivable => inst.negneg.push(a),
                    Sign::NotNot => continue 'subst,
                }
            }
            instances.push(inst);
        }
        instances.sort_by(|a, b| a.bindings.cmp(&b.bindings));
        raw.extend(instances);
    }

    loop {
        simplify_facts(&mut raw);
        if !prune_underivable(&mut raw) {
            break;
        }
    }

    // Collapse duplicates per origin.
    let mut seen: HashSet<(usize, Vec<Vec<Atom>>)> = HashSet::new();
    raw.retain(|r| {
        let key = |v: &Vec<Atom>| {
            let mut v = v.clone();
            v.sort();
            v.dedup();
            v
        };
        seen.insert((
            r.origin,
            vec![key(&r.head), key(&r.pos), key(&r.neg), key(&r.negneg)],
        ))
    });

    let mut atoms: Vec<Atom> = Vec::new();
    let mut index: HashMap<Atom, usize> = HashMap::new();
    let mut out = Vec::with_capacity(raw.len());
    for r in raw {
        let mut id = |a: Atom| -> usize {
            if let Some(&i) = index.get(&a) {
                return i;
            }
            atoms.push(a.clone());
            index.insert(a, atoms.len() - 1);
            atoms.len() - 1
        };
        let mut ids = |v: Vec<Atom>| {
            let mut v: Vec<usize> = v.into_iter().map(&mut id).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        let head = ids(r.head);
        let pos = ids(r.pos);
        let neg = ids(r.neg);
        let negneg = ids(r.negneg);
        out.push(GroundRule {
            weight: r.weight,
            head,
            pos,
            neg,
            negneg,
            origin: r.origin,
            bindings: r.bindings,
        });
    }

    Ok(GroundProgram {
        rules: out,
        atoms,
        index,
        origin_weights: rules.iter().map(|r| r.weight).collect(),
        signature: program.signature().into_iter().collect(),
        universe,
    })
}

/// Recomputes positive derivability over the instances that survived
/// simplification and drops what became unreachable. Returns whether
/// anything changed.
fn prune_underivable(raw: &mut Vec<Raw>) -> bool {
    let mut derivable: HashSet<&Atom> = HashSet::new();
    loop {
        let before = derivable.len();
        for r in raw.iter() {
            if r.pos.iter().all(|a| derivable.contains(a)) {
                derivable.extend(r.head.iter());
            }
        }
        if derivable.len() == before {
            break;
        }
    }
    let derivable: HashSet<Atom> = derivable.into_iter().cloned().collect();
    let before = raw.len();
    raw.retain(|r| {
        r.pos.iter().all(|a| derivable.contains(a)) && r.negneg.iter().all(|a| derivable.contains(a))
    });
    let mut changed = raw.len() != before;
    for r in raw.iter_mut() {
        let n = r.neg.len();
        r.neg.retain(|a| derivable.contains(a));
        changed |= r.neg.len() != n;
    }
    changed
}

/// Propagates hard facts: removes them from positive bodies, drops rules
/// blocked by `not fact`, and drops hard rules whose head already holds a
/// fact (other than the fact rules themselves).
fn simplify_facts(raw: &mut Vec<Raw>) {
    let mut fixed: HashSet<Atom> = HashSet::new();
    loop {
        let mut grew = false;
        for r in raw.iter_mut() {
            r.pos.retain(|a| !fixed.contains(a));
            r.negneg.retain(|a| !fixed.contains(a));
            if r.weight.is_hard()
                && r.head.len() == 1
                && r.pos.is_empty()
                && r.neg.is_empty()
                && r.negneg.is_empty()
                && fixed.insert(r.head[0].clone())
            {
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }
    raw.retain(|r| {
        if r.neg.iter().any(|a| fixed.contains(a)) {
            return false;
        }
        let is_fact = r.head.len() == 1 && r.pos.is_empty() && r.neg.is_empty() && r.negneg.is_empty();
        !(r.weight.is_hard() && !is_fact && r.head.iter().any(|a| fixed.contains(a)))
    });
}

/// Number of ground instances of source rule `origin` that are false in `interp`.
pub fn false_count(ground: &GroundProgram, origin: usize, interp: &Interpretation) -> Result<usize> {
    if origin == 0 || origin > ground.origin_count() {
        return Err(Error::Domain(format!("unknown rule index {origin}")));
    }
    let truth = encode_lenient(ground, interp)?;
    Ok(ground
        .rules
        .iter()
        .filter(|r| r.origin == origin && r.is_false(&truth))
        .count())
}

/// Encodes an interpretation, accepting true atoms of the Herbrand base that
/// occur in no rule (they do not affect any rule).
pub(crate) fn encode_lenient(ground: &GroundProgram, interp: &Interpretation) -> Result<Vec<bool>> {
    let mut truth = vec![false; ground.atoms.len()];
    for a in interp.iter() {
        match ground.index.get(a) {
            Some(&i) => truth[i] = true,
            None if ground.in_herbrand_base(a) => {}
            None => return Err(Error::Domain(format!("atom {a} is outside the Herbrand base"))),
        }
    }
    Ok(truth)
}

/// Per-origin false counts for a truth vector.
pub fn false_counts(ground: &GroundProgram, truth: &[bool]) -> Vec<usize> {
    let mut counts = vec![0; ground.origin_count()];
    for r in &ground.rules {
        if r.is_false(truth) {
            counts[r.origin - 1] += 1;
        }
    }
    counts
}
