//! Value types shared by every stage: terms, atoms, rules, programs,
//! interpretations and observations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Constant {
    Int(i64),
    Sym(String),
    Str(String),
}

impl fmt::Display for Constant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constant::Int(n) => write!(f, "{n}"),
            Constant::Sym(s) => f.write_str(s),
            Constant::Str(s) => write!(f, "\"{s}\""),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Const(Constant),
    Var(String),
}

impl Term {
    pub fn sym(s: &str) -> Self {
        Term::Const(Constant::Sym(s.to_string()))
    }

    pub fn str(s: &str) -> Self {
        Term::Const(Constant::Str(s.to_string()))
    }

    pub fn int(n: i64) -> Self {
        Term::Const(Constant::Int(n))
    }

    pub fn var(s: &str) -> Self {
        Term::Var(s.to_string())
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(c) => c.fmt(f),
            Term::Var(v) => f.write_str(v),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(predicate: &str, args: Vec<Term>) -> Self {
        Atom {
            predicate: predicate.to_string(),
            args,
        }
    }

    /// Zero-arity atom.
    pub fn prop(predicate: &str) -> Self {
        Atom::new(predicate, Vec::new())
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(|t| !t.is_var())
    }

    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.args.iter().filter_map(|t| match t {
            Term::Var(v) => Some(v.as_str()),
            Term::Const(_) => None,
        })
    }

    pub fn constants(&self) -> impl Iterator<Item = &Constant> {
        self.args.iter().filter_map(|t| match t {
            Term::Const(c) => Some(c),
            Term::Var(_) => None,
        })
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.predicate)?;
        if !self.args.is_empty() {
            f.write_str("(")?;
            for (i, t) in self.args.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{t}")?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sign {
    Pos,
    Not,
    NotNot,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Literal {
    pub sign: Sign,
    pub atom: Atom,
}

impl Literal {
    pub fn pos(atom: Atom) -> Self {
        Literal {
            sign: Sign::Pos,
            atom,
        }
    }

    pub fn not(atom: Atom) -> Self {
        Literal {
            sign: Sign::Not,
            atom,
        }
    }

    pub fn not_not(atom: Atom) -> Self {
        Literal {
            sign: Sign::NotNot,
            atom,
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sign {
            Sign::Pos => write!(f, "{}", self.atom),
            Sign::Not => write!(f, "not {}", self.atom),
            Sign::NotNot => write!(f, "not not {}", self.atom),
        }
    }
}

/// `left != right`, evaluated during grounding.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Inequality {
    pub left: Term,
    pub right: Term,
}

impl fmt::Display for Inequality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} != {}", self.left, self.right)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Weight {
    Hard,
    Soft(f64),
    /// 1-based parameter index.
    Param(usize),
}

impl Weight {
    pub fn is_hard(&self) -> bool {
        matches!(self, Weight::Hard)
    }

    pub fn is_soft(&self) -> bool {
        !self.is_hard()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedRule {
    pub weight: Weight,
    /// Disjunction; empty for constraints.
    pub head: Vec<Atom>,
    pub body: Vec<Literal>,
    pub guards: Vec<Inequality>,
    /// 1-based position in the program.
    pub index: usize,
}

impl WeightedRule {
    pub fn new(weight: Weight, head: Vec<Atom>, body: Vec<Literal>) -> Self {
        WeightedRule {
            weight,
            head,
            body,
            guards: Vec::new(),
            index: 0,
        }
    }

    pub fn with_guards(mut self, guards: Vec<Inequality>) -> Self {
        self.guards = guards;
        self
    }

    pub fn is_fact(&self) -> bool {
        self.head.len() == 1 && self.body.is_empty() && self.guards.is_empty()
    }

    pub fn is_ground(&self) -> bool {
        self.head.iter().all(Atom::is_ground) && self.body.iter().all(|l| l.atom.is_ground())
    }

    /// Variables in order of first occurrence (head, body, guards).
    pub fn variables(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut push = |v: &str| {
            if !out.iter().any(|x| x == v) {
                out.push(v.to_string());
            }
        };
        for a in &self.head {
            a.vars().for_each(&mut push);
        }
        for l in &self.body {
            l.atom.vars().for_each(&mut push);
        }
        for g in &self.guards {
            for t in [&g.left, &g.right] {
                if let Term::Var(v) = t {
                    push(v);
                }
            }
        }
        out
    }

    /// Variables that violate safety, in order of first occurrence.
    pub fn unsafe_variables(&self) -> Vec<String> {
        let bound: BTreeSet<&str> = self
            .body
            .iter()
            .filter(|l| l.sign == Sign::Pos)
            .flat_map(|l| l.atom.vars())
            .collect();
        self.variables()
            .into_iter()
            .filter(|v| !bound.contains(v.as_str()))
            .collect()
    }

    pub fn atoms(&self) -> impl Iterator<Item = &Atom> {
        self.head.iter().chain(self.body.iter().map(|l| &l.atom))
    }
}

impl fmt::Display for WeightedRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.weight {
            Weight::Hard => {}
            Weight::Soft(w) => write!(f, "{w} ")?,
            Weight::Param(i) => write!(f, "@w({i}) ")?,
        }
        for (i, a) in self.head.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{a}")?;
        }
        let body: Vec<String> = self
            .body
            .iter()
            .map(ToString::to_string)
            .chain(self.guards.iter().map(ToString::to_string))
            .collect();
        if !body.is_empty() {
            if !self.head.is_empty() {
                f.write_str(" ")?;
            }
            write!(f, ":- {}", body.join(", "))?;
        } else if self.head.is_empty() {
            f.write_str(":-")?;
        }
        f.write_str(".")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Program {
    rules: Vec<WeightedRule>,
}

impl Program {
    /// Validates safety, arity consistency and parameter numbering, and
    /// renumbers rules 1..n in the given order.
    pub fn new(rules: Vec<WeightedRule>) -> Result<Self> {
        let mut rules = rules;
        for (i, r) in rules.iter_mut().enumerate() {
            r.index = i + 1;
        }
        let program = Program { rules };
        program.validate()?;
        Ok(program)
    }

    fn validate(&self) -> Result<()> {
        let mut arities: BTreeMap<&str, usize> = BTreeMap::new();
        let mut params: BTreeSet<usize> = BTreeSet::new();
        for r in &self.rules {
            let unsafe_vars = r.unsafe_variables();
            if !unsafe_vars.is_empty() {
                return Err(Error::InvalidProgram(format!(
                    "rule {} is unsafe: variable {} does not occur in a positive body literal",
                    r.index, unsafe_vars[0]
                )));
            }
            for a in r.atoms() {
                match arities.get(a.predicate.as_str()) {
                    Some(&n) if n != a.arity() => {
                        return Err(Error::InvalidProgram(format!(
                            "predicate `{}` used with arity {} and {}",
                            a.predicate,
                            n,
                            a.arity()
                        )))
                    }
                    Some(_) => {}
                    None => {
                        arities.insert(&a.predicate, a.arity());
                    }
                }
            }
            match r.weight {
                Weight::Param(0) => {
                    return Err(Error::InvalidProgram("parameter indices start at 1".into()))
                }
                Weight::Param(i) => {
                    if !params.insert(i) {
                        return Err(Error::InvalidProgram(format!(
                            "parameter @w({i}) is used more than once"
                        )));
                    }
                }
                Weight::Soft(w) if !w.is_finite() => {
                    return Err(Error::InvalidProgram(format!(
                        "rule {} has a non-finite weight",
                        r.index
                    )))
                }
                _ => {}
            }
        }
        if let Some(&max) = params.iter().next_back() {
            if max != params.len() {
                return Err(Error::InvalidProgram(format!(
                    "parameter indices must be dense 1..{}, found {:?}",
                    params.len(),
                    params
                )));
            }
        }
        Ok(())
    }

    pub fn rules(&self) -> &[WeightedRule] {
        &self.rules
    }

    pub fn into_rules(self) -> Vec<WeightedRule> {
        self.rules
    }

    pub fn is_parameterized(&self) -> bool {
        self.rules
            .iter()
            .any(|r| matches!(r.weight, Weight::Param(_)))
    }

    pub fn parameter_count(&self) -> usize {
        self.rules
            .iter()
            .filter(|r| matches!(r.weight, Weight::Param(_)))
            .count()
    }

    /// Rule index carrying parameter `p`.
    pub fn parameter_rule(&self, p: usize) -> Option<&WeightedRule> {
        self.rules.iter().find(|r| r.weight == Weight::Param(p))
    }

    /// Replaces every `@w(i)` by `weights[i-1]`.
    pub fn bind(&self, weights: &[f64]) -> Result<Program> {
        if weights.len() != self.parameter_count() {
            return Err(Error::Usage(format!(
                "expected {} weights, got {}",
                self.parameter_count(),
                weights.len()
            )));
        }
        let rules = self
            .rules
            .iter()
            .map(|r| {
                let mut r = r.clone();
                if let Weight::Param(i) = r.weight {
                    r.weight = Weight::Soft(weights[i - 1]);
                }
                r
            })
            .collect();
        Program::new(rules)
    }

    /// Replaces every soft weight by a fresh parameter, numbered in rule order.
    pub fn parameterize(&self) -> Program {
        let mut next = 0;
        let rules = self
            .rules
            .iter()
            .map(|r| {
                let mut r = r.clone();
                if r.weight.is_soft() {
                    next += 1;
                    r.weight = Weight::Param(next);
                }
                r
            })
            .collect();
        Program { rules }
    }

    /// Predicate names with their arities.
    pub fn signature(&self) -> BTreeMap<String, usize> {
        self.rules
            .iter()
            .flat_map(|r| r.atoms())
            .map(|a| (a.predicate.clone(), a.arity()))
            .collect()
    }

    pub fn has_predicate(&self, name: &str) -> bool {
        self.rules
            .iter()
            .flat_map(|r| r.atoms())
            .any(|a| a.predicate == name)
    }

    pub fn max_abs_weight(&self) -> f64 {
        self.rules
            .iter()
            .filter_map(|r| match r.weight {
                Weight::Soft(w) => Some(w.abs()),
                _ => None,
            })
            .fold(0.0, f64::max)
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rules {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}

/// A set of true ground atoms; every other atom of the base it is used with is false.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Interpretation(BTreeSet<Atom>);

impl Interpretation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, atom: &Atom) -> bool {
        self.0.contains(atom)
    }

    pub fn insert(&mut self, atom: Atom) -> bool {
        self.0.insert(atom)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Atom> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn atoms(&self) -> &BTreeSet<Atom> {
        &self.0
    }
}

impl FromIterator<Atom> for Interpretation {
    fn from_iter<T: IntoIterator<Item = Atom>>(iter: T) -> Self {
        Interpretation(iter.into_iter().collect())
    }
}

impl fmt::Display for Interpretation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str("}")
    }
}

/// Training data as clamped ground atoms.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Observation {
    clamped_true: BTreeSet<Atom>,
    clamped_false: BTreeSet<Atom>,
    pub example_id: Option<String>,
}

impl Observation {
    pub fn new(
        clamped_true: BTreeSet<Atom>,
        clamped_false: BTreeSet<Atom>,
        example_id: Option<String>,
    ) -> Result<Self> {
        if let Some(a) = clamped_true.iter().find(|a| clamped_false.contains(*a)) {
            return Err(Error::Data(format!("atom {a} is clamped both true and false")));
        }
        if let Some(a) = clamped_true.iter().chain(&clamped_false).find(|a| !a.is_ground()) {
            return Err(Error::Data(format!("observed atom {a} is not ground")));
        }
        Ok(Observation {
            clamped_true,
            clamped_false,
            example_id,
        })
    }

    /// The complete observation of `interp` over `base`.
    pub fn from_interpretation<'a>(
        interp: &Interpretation,
        base: impl IntoIterator<Item = &'a Atom>,
    ) -> Self {
        let mut clamped_true = BTreeSet::new();
        let mut clamped_false = BTreeSet::new();
        for a in base {
            if interp.contains(a) {
                clamped_true.insert(a.clone());
            } else {
                clamped_false.insert(a.clone());
            }
        }
        for a in interp.iter() {
            clamped_true.insert(a.clone());
        }
        Observation {
            clamped_true,
            clamped_false,
            example_id: None,
        }
    }

    pub fn clamped_true(&self) -> &BTreeSet<Atom> {
        &self.clamped_true
    }

    pub fn clamped_false(&self) -> &BTreeSet<Atom> {
        &self.clamped_false
    }

    pub fn atoms(&self) -> impl Iterator<Item = &Atom> {
        self.clamped_true.iter().chain(&self.clamped_false)
    }

    pub fn len(&self) -> usize {
        self.clamped_true.len() + self.clamped_false.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn satisfied_by(&self, interp: &Interpretation) -> bool {
        self.clamped_true.iter().all(|a| interp.contains(a))
            && !self.clamped_false.iter().any(|a| interp.contains(a))
    }
}

impl fmt::Display for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(id) = &self.example_id {
            writeln!(f, "#example({id}).")?;
        }
        for a in &self.clamped_true {
            writeln!(f, ":- not {a}.")?;
        }
        for a in &self.clamped_false {
            writeln!(f, ":- {a}.")?;
        }
        Ok(())
    }
}

pub fn is_complete(obs: &Observation, base: &BTreeSet<Atom>) -> Result<bool> {
    if let Some(a) = obs.atoms().find(|a| !base.contains(*a)) {
        return Err(Error::Domain(format!("observed atom {a} is outside the base")));
    }
    Ok(obs.len() == base.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(names: &[&str]) -> BTreeSet<Atom> {
        names.iter().map(|n| Atom::prop(n)).collect()
    }

    #[test]
    fn completeness() {
        let base = set(&["a", "b"]);
        let full = Observation::new(set(&["a"]), set(&["b"]), None).unwrap();
        assert!(is_complete(&full, &base).unwrap());
        let part = Observation::new(set(&["a"]), set(&[]), None).unwrap();
        assert!(!is_complete(&part, &base).unwrap());
        assert!(Observation::new(set(&["a"]), set(&["a"]), None).is_err());
        let outside = Observation::new(set(&["c"]), set(&[]), None).unwrap();
        assert!(matches!(is_complete(&outside, &base), Err(Error::Domain(_))));
    }

    #[test]
    fn rejects_duplicate_and_sparse_parameters() {
        let r = |p| WeightedRule::new(Weight::Param(p), vec![Atom::prop("a")], vec![]);
        assert!(Program::new(vec![r(1), r(1)]).is_err());
        assert!(Program::new(vec![r(1), r(3)]).is_err());
        assert!(Program::new(vec![r(2), r(1)]).is_ok());
    }

    #[test]
    fn unsafe_rule_is_rejected() {
        let rule = WeightedRule::new(
            Weight::Soft(1.5),
            vec![Atom::new("p", vec![Term::var("X")])],
            vec![],
        );
        assert!(matches!(Program::new(vec![rule]), Err(Error::InvalidProgram(_))));
    }

    #[test]
    fn bind_replaces_parameters() {
        let p = Program::new(vec![WeightedRule::new(
            Weight::Param(1),
            vec![Atom::prop("a")],
            vec![],
        )])
        .unwrap();
        assert!(p.is_parameterized());
        let b = p.bind(&[-0.5]).unwrap();
        assert!(!b.is_parameterized());
        assert_eq!(b.rules()[0].weight, Weight::Soft(-0.5));
    }
}
