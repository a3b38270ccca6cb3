//! Random program generators and brute-force oracles shared by the
//! integration tests. The oracles work on bitmasks over a propositional
//! vocabulary `p0..p{n-1}` and share no code with the library.

#![allow(dead_code)]

use std::collections::BTreeMap;

use lpmln::{Atom, Interpretation, Literal, Observation, Program, Weight, WeightedRule};
use proptest::prelude::*;

pub type Mask = u32;

#[derive(Clone, Debug)]
pub struct PropRule {
    /// `None` for a hard rule.
    pub weight: Option<f64>,
    pub head: Vec<usize>,
    pub pos: Vec<usize>,
    pub neg: Vec<usize>,
    pub negneg: Vec<usize>,
}

impl PropRule {
    fn body_holds(&self, m: Mask) -> bool {
        self.pos.iter().all(|&a| has(m, a))
            && self.neg.iter().all(|&a| !has(m, a))
            && self.negneg.iter().all(|&a| has(m, a))
    }

    pub fn satisfied(&self, m: Mask) -> bool {
        !self.body_holds(m) || self.head.iter().any(|&a| has(m, a))
    }

    pub fn to_rule(&self) -> WeightedRule {
        let weight = match self.weight {
            None => Weight::Hard,
            Some(w) => Weight::Soft(w),
        };
        let body = self
            .pos
            .iter()
            .map(|&a| Literal::pos(atom(a)))
            .chain(self.neg.iter().map(|&a| Literal::not(atom(a))))
            .chain(self.negneg.iter().map(|&a| Literal::not_not(atom(a))))
            .collect();
        WeightedRule::new(weight, self.head.iter().map(|&a| atom(a)).collect(), body)
    }
}

#[derive(Clone, Debug)]
pub struct PropProgram {
    pub atoms: usize,
    pub rules: Vec<PropRule>,
}

pub fn has(m: Mask, a: usize) -> bool {
    m >> a & 1 == 1
}

pub fn atom(i: usize) -> Atom {
    Atom::prop(&format!("p{i}"))
}

pub fn mask_of(interp: &Interpretation) -> Mask {
    interp
        .iter()
        .map(|a| {
            let i: usize = a.predicate[1..].parse().expect("propositional atom");
            1 << i
        })
        .sum()
}

pub fn interp_of(m: Mask, atoms: usize) -> Interpretation {
    (0..atoms).filter(|&a| has(m, a)).map(atom).collect()
}

/// Whether `m` is a stable model of `rules`: it satisfies them and is a
/// minimal model of their reduct.
pub fn stable_for(rules: &[&PropRule], m: Mask) -> bool {
    if !rules.iter().all(|r| r.satisfied(m)) {
        return false;
    }
    let reduct: Vec<(&[usize], &[usize])> = rules
        .iter()
        .filter(|r| r.neg.iter().all(|&a| !has(m, a)) && r.negneg.iter().all(|&a| has(m, a)))
        .map(|r| (r.head.as_slice(), r.pos.as_slice()))
        .collect();
    let is_model = |j: Mask| {
        reduct
            .iter()
            .all(|(h, b)| !b.iter().all(|&a| has(j, a)) || h.iter().any(|&a| has(j, a)))
    };
    if reduct.iter().all(|(h, _)| h.len() <= 1) {
        // least model by forward chaining
        let mut least: Mask = 0;
        loop {
            let mut next = least;
            for (h, b) in &reduct {
                if let [a] = h {
                    if b.iter().all(|&x| has(least, x)) {
                        next |= 1 << a;
                    }
                }
            }
            if next == least {
                break;
            }
            least = next;
        }
        return least == m;
    }
    // disjunctive: no proper subset of m may be a model of the reduct
    let mut sub = m;
    while sub != 0 {
        sub = (sub - 1) & m;
        if is_model(sub) {
            return false;
        }
    }
    true
}

impl PropProgram {
    pub fn to_program(&self) -> Program {
        Program::new(self.rules.iter().map(PropRule::to_rule).collect()).expect("propositional rules are valid")
    }

    pub fn masks(&self) -> impl Iterator<Item = Mask> {
        0..(1 as Mask) << self.atoms
    }

    /// Ordinary stable models, weights ignored.
    pub fn stable_models(&self) -> Vec<Mask> {
        let all: Vec<&PropRule> = self.rules.iter().collect();
        self.masks().filter(|&m| stable_for(&all, m)).collect()
    }

    /// Members of SM: satisfy every hard rule and are stable for the rules
    /// they satisfy.
    pub fn sm(&self) -> Vec<Mask> {
        self.masks()
            .filter(|&m| {
                self.rules.iter().all(|r| r.weight.is_some() || r.satisfied(m)) && {
                    let sat: Vec<&PropRule> = self.rules.iter().filter(|r| r.satisfied(m)).collect();
                    stable_for(&sat, m)
                }
            })
            .collect()
    }

    /// Σ w over satisfied soft rules.
    pub fn reward(&self, m: Mask) -> f64 {
        self.rules
            .iter()
            .filter_map(|r| r.weight.filter(|_| r.satisfied(m)))
            .sum()
    }

    /// Exact distribution over SM.
    pub fn distribution(&self) -> BTreeMap<Mask, f64> {
        let members = self.sm();
        let rewards: Vec<f64> = members.iter().map(|&m| self.reward(m)).collect();
        let top = rewards.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = rewards.iter().map(|r| (r - top).exp()).sum();
        members
            .into_iter()
            .zip(rewards)
            .map(|(m, r)| (m, (r - top).exp() / z))
            .collect()
    }

    /// Atoms that occur in some rule; the others are outside the base.
    pub fn mentioned(&self) -> Mask {
        self.rules
            .iter()
            .flat_map(|r| r.head.iter().chain(&r.pos).chain(&r.neg).chain(&r.negneg))
            .map(|&a| 1 << a)
            .fold(0, |m, b| m | b)
    }

    pub fn soft_count(&self) -> usize {
        self.rules.iter().filter(|r| r.weight.is_some()).count()
    }
}

/// `cases` runs without writing regression files next to the sources.
pub fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Shape {
    pub atoms: usize,
    pub rules: usize,
    pub disjunctive: bool,
    /// Probability weight of a rule being soft, out of 4.
    pub soft: u32,
}

fn atom_list(n: usize, max: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..n, 0..=max).prop_map(|mut v| {
        v.sort();
        v.dedup();
        v
    })
}

fn rule(shape: Shape) -> impl Strategy<Value = PropRule> {
    let n = shape.atoms;
    let max_head = if shape.disjunctive { 2 } else { 1 };
    let weight = prop_oneof![
        (4 - shape.soft) => Just(None),
        shape.soft => (-30i32..=30).prop_map(|w| Some(w as f64 / 10.0)),
    ];
    // kinds: 0 normal, 1 choice, 2 constraint, 3 fact
    (0u8..4, weight, atom_list(n, max_head), atom_list(n, 2), atom_list(n, 2), atom_list(n, 1)).prop_map(
        move |(kind, weight, head, pos, neg, negneg)| {
            let head = if head.is_empty() { vec![0] } else { head };
            match kind {
                1 => PropRule { weight, negneg: vec![head[0]], head: vec![head[0]], pos, neg },
                2 => PropRule { weight, head: vec![], pos, neg, negneg },
                3 => PropRule { weight, head: vec![head[0]], pos: vec![], neg: vec![], negneg: vec![] },
                _ => PropRule { weight, head, pos, neg, negneg },
            }
        },
    )
}

/// Random propositional programs mixing normal rules, choice rules,
/// constraints, facts and (optionally) two-atom disjunctive heads.
pub fn program(shape: Shape) -> impl Strategy<Value = PropProgram> {
    (1..=shape.atoms).prop_flat_map(move |n| {
        let s = Shape { atoms: n, ..shape };
        prop::collection::vec(rule(s), 1..=shape.rules).prop_map(move |rules| PropProgram { atoms: n, rules })
    })
}

/// Tight programs: positive bodies only mention lower-numbered atoms than the head.
pub fn tight_program(atoms: usize, rules: usize) -> impl Strategy<Value = PropProgram> {
    program(Shape { atoms, rules, disjunctive: false, soft: 2 }).prop_map(|mut p| {
        for r in &mut p.rules {
            if let Some(&h) = r.head.first() {
                r.pos.retain(|&b| b < h);
            }
        }
        p
    })
}

pub fn total_variation(a: &BTreeMap<Mask, f64>, b: &BTreeMap<Mask, f64>) -> f64 {
    let keys: std::collections::BTreeSet<&Mask> = a.keys().chain(b.keys()).collect();
    keys.into_iter()
        .map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
        / 2.0
}

pub fn sigmoid(w: f64) -> f64 {
    1.0 / (1.0 + (-w).exp())
}

#[derive(Clone, Copy, Debug)]
pub enum Kind {
    Complete,
    Multiple,
    Partial,
}

/// A parameterized program, observations drawn from its members, and a
/// weight vector.
pub fn instance(kind: Kind) -> impl Strategy<Value = (Program, Vec<Observation>, Vec<f64>)> {
    (program(Shape { atoms: 5, rules: 6, disjunctive: false, soft: 2 }), prop::collection::vec(0usize..1000, 3), prop::collection::vec(-20i32..=20, 6), any::<u32>())
        .prop_filter_map("needs members and a parameter", move |(p, picks, w, drop): (PropProgram, _, _, _)| {
            let members = p.sm();
            if members.is_empty() || p.soft_count() == 0 {
                return None;
            }
            let program = p.to_program().parameterize();
            let base: Vec<Atom> = lpmln::ground(&program).ok()?.atoms().to_vec();
            let observe = |k: usize| Observation::from_interpretation(&interp_of(members[k % members.len()], p.atoms), &base);
            let obs = match kind {
                Kind::Complete => vec![observe(picks[0])],
                Kind::Multiple => picks.iter().map(|&k| observe(k)).collect(),
                Kind::Partial => {
                    let full = observe(picks[0]);
                    let keep = |a: &Atom| {
                        let i = base.iter().position(|b| b == a).unwrap();
                        drop >> i & 1 == 1
                    };
                    let t = full.clamped_true().iter().filter(|a| keep(a)).cloned().collect();
                    let f = full.clamped_false().iter().filter(|a| keep(a)).cloned().collect();
                    vec![Observation::new(t, f, None).unwrap()]
                }
            };
            let weights = w[..program.parameter_count()].iter().map(|&x| x as f64 / 10.0).collect();
            Some((program, obs, weights))
        })
}


/// Largest relative error between the exact gradient and central finite
/// differences (h = 1e-5) of the log-likelihood. Errors are measured
/// against max(|analytic|, |numeric|, 1e-3).
pub fn gradient_error(program: &Program, obs: &[Observation], w: &[f64]) -> f64 {
    let objective = lpmln::learner::ExactObjective::new(program, obs).unwrap();
    let g = objective.gradient(w).unwrap();
    let h = 1e-5;
    (0..w.len())
        .map(|i| {
            let mut up = w.to_vec();
            let mut down = w.to_vec();
            up[i] += h;
            down[i] -= h;
            let fd = (objective.log_likelihood(&up).unwrap() - objective.log_likelihood(&down).unwrap()) / (2.0 * h);
            (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-3)
        })
        .fold(0.0, f64::max)
}
