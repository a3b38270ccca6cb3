//! Stable model enumeration for ground programs.
//!
//! Backtracking over atoms in base order (false first) with clause
//! propagation on hard rules and support propagation on true atoms; every
//! complete assignment is confirmed by a reduct-based stability check. The
//! same engine serves plain stable models (all rules hard) and the weighted
//! membership test, where soft rules only count if the candidate satisfies
//! them.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::grounder::{encode_lenient, GroundProgram, GroundRule};
use crate::model::{Atom, Interpretation, Observation};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClampSet {
    forced_true: BTreeSet<Atom>,
    forced_false: BTreeSet<Atom>,
}

impl ClampSet {
    pub fn new(forced_true: BTreeSet<Atom>, forced_false: BTreeSet<Atom>) -> Result<Self> {
        if let Some(a) = forced_true.intersection(&forced_false).next() {
            return Err(Error::Data(format!("atom {a} is clamped both true and false")));
        }
        Ok(ClampSet {
            forced_true,
            forced_false,
        })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn forced_true(&self) -> &BTreeSet<Atom> {
        &self.forced_true
    }

    pub fn forced_false(&self) -> &BTreeSet<Atom> {
        &self.forced_false
    }

    /// Local clamp vector over the program's atoms, or `None` if an atom
    /// forced true never occurs in the program (no model can satisfy it).
    pub(crate) fn resolve(&self, ground: &GroundProgram) -> Result<Option<Vec<Option<bool>>>> {
        let mut v = vec![None; ground.atoms().len()];
        for a in &self.forced_true {
            match ground.atom_id(a) {
                Some(i) => v[i] = Some(true),
                None if ground.in_herbrand_base(a) => return Ok(None),
                None => return Err(Error::Domain(format!("atom {a} is outside the Herbrand base"))),
            }
        }
        for a in &self.forced_false {
            match ground.atom_id(a) {
                Some(i) => v[i] = Some(false),
                None if ground.in_herbrand_base(a) => {}
                None => return Err(Error::Domain(format!("atom {a} is outside the Herbrand base"))),
            }
        }
        Ok(Some(v))
    }
}

impl From<&Observation> for ClampSet {
    fn from(obs: &Observation) -> Self {
        ClampSet {
            forced_true: obs.clamped_true().clone(),
            forced_false: obs.clamped_false().clone(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolverLimits {
    /// Largest number of true atoms for the brute-force minimality check of
    /// disjunctive reducts.
    pub minimality_cap: usize,
    /// Largest number of models enumerated for one component or returned as
    /// a flat list.
    pub max_models: usize,
}

impl Default for SolverLimits {
    fn default() -> Self {
        SolverLimits {
            minimality_cap: 20,
            max_models: 1 << 20,
        }
    }
}

/// A rule of a reduct: `head_1 ; ... ; head_n :- body`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PositiveRule {
    pub head: Vec<Atom>,
    pub body: Vec<Atom>,
}

/// Reduct of all rules of `ground` relative to `interp`.
pub fn reduct(ground: &GroundProgram, interp: &Interpretation) -> Result<Vec<PositiveRule>> {
    let truth = encode_lenient(ground, interp)?;
    let atom = |i: &usize| ground.atom(*i).clone();
    Ok(ground
        .rules()
        .iter()
        .filter(|r| survives_reduct(r.neg.iter(), r.negneg.iter(), &truth))
        .map(|r| PositiveRule {
            head: r.head.iter().map(atom).collect(),
            body: r.pos.iter().map(atom).collect(),
        })
        .collect())
}

fn survives_reduct<'a>(
    mut neg: impl Iterator<Item = &'a usize>,
    mut negneg: impl Iterator<Item = &'a usize>,
    truth: &[bool],
) -> bool {
    neg.all(|&a| !truth[a]) && negneg.all(|&a| truth[a])
}

/// Whether `interp` is a stable model of all rules of `ground`, weights ignored.
pub fn is_stable(ground: &GroundProgram, interp: &Interpretation) -> Result<bool> {
    is_stable_with(ground, interp, SolverLimits::default())
}

pub fn is_stable_with(
    ground: &GroundProgram,
    interp: &Interpretation,
    limits: SolverLimits,
) -> Result<bool> {
    let truth = encode_lenient(ground, interp)?;
    if interp.iter().any(|a| ground.atom_id(a).is_none()) {
        // A true atom no rule mentions is unsupported.
        return Ok(false);
    }
    let rules: Vec<LRule> = ground.rules().iter().map(|r| LRule::from_global(r, None, true)).collect();
    if rules.iter().any(|r| r.is_false(&truth)) {
        return Ok(false);
    }
    stable_on(&rules, &truth, limits.minimality_cap)
}

/// Whether `truth` belongs to SM of the weighted program: it satisfies every
/// hard rule and is a stable model of the rules it satisfies.
pub fn is_sm_member(ground: &GroundProgram, truth: &[bool]) -> Result<bool> {
    let rules: Vec<LRule> = ground
        .rules()
        .iter()
        .map(|r| LRule::from_global(r, None, r.is_hard()))
        .collect();
    if rules.iter().any(|r| r.hard && r.is_false(truth)) {
        return Ok(false);
    }
    stable_on(&rules, truth, SolverLimits::default().minimality_cap)
}

/// All members of SM of `ground` that agree with `clamps`: candidates that
/// satisfy every hard rule and are stable models of the rules they satisfy.
/// For a program without soft rules these are its ordinary stable models.
pub fn stable_models(ground: &GroundProgram, clamps: &ClampSet) -> Result<Vec<Interpretation>> {
    stable_models_with(ground, clamps, SolverLimits::default())
}

pub fn stable_models_with(
    ground: &GroundProgram,
    clamps: &ClampSet,
    limits: SolverLimits,
) -> Result<Vec<Interpretation>> {
    let Some(clamp) = clamps.resolve(ground)? else {
        return Ok(Vec::new());
    };
    let hard: Vec<bool> = ground.rules().iter().map(GroundRule::is_hard).collect();
    let split = split_components(ground, &hard);
    if split.constant_hard_violation {
        return Ok(Vec::new());
    }
    let mut per_component = Vec::with_capacity(split.components.len());
    for c in &split.components {
        let local_clamp: Vec<Option<bool>> = c.atoms.iter().map(|&a| clamp[a]).collect();
        let models = c.enumerate(&local_clamp, limits)?;
        if models.is_empty() {
            return Ok(Vec::new());
        }
        per_component.push(models);
    }
    let flat = product(ground.atoms().len(), &split.components, &per_component, limits.max_models)?;
    Ok(flat.iter().map(|t| ground.decode(t)).collect())
}

/// Cartesian product of per-component models as global truth vectors,
/// sorted lexicographically over base order with false before true.
pub(crate) fn product(
    n_atoms: usize,
    comps: &[Component],
    models: &[Vec<Vec<bool>>],
    cap: usize,
) -> Result<Vec<Vec<bool>>> {
    let total = models
        .iter()
        .try_fold(1usize, |acc, m| acc.checked_mul(m.len()))
        .filter(|&t| t <= cap)
        .ok_or_else(|| Error::Resource(format!("more than {cap} models in the product")))?;
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; comps.len()];
    if models.iter().any(Vec::is_empty) {
        return Ok(out);
    }
    loop {
        let mut truth = vec![false; n_atoms];
        for (k, c) in comps.iter().enumerate() {
            for (j, &a) in c.atoms.iter().enumerate() {
                truth[a] = models[k][idx[k]][j];
            }
        }
        out.push(truth);
        let mut k = comps.len();
        loop {
            if k == 0 {
                out.sort();
                return Ok(out);
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < models[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct LRule {
    pub head: Vec<usize>,
    pub pos: Vec<usize>,
    pub neg: Vec<usize>,
    pub negneg: Vec<usize>,
    pub hard: bool,
}

impl LRule {
    fn from_global(r: &GroundRule, map: Option<&dyn Fn(usize) -> usize>, hard: bool) -> Self {
        let m = |v: &Vec<usize>| -> Vec<usize> {
            match map {
                Some(f) => v.iter().map(|&a| f(a)).collect(),
                None => v.clone(),
            }
        };
        LRule {
            head: m(&r.head),
            pos: m(&r.pos),
            neg: m(&r.neg),
            negneg: m(&r.negneg),
            hard,
        }
    }

    fn body_true(&self, t: &[bool]) -> bool {
        self.pos.iter().all(|&a| t[a]) && self.neg.iter().all(|&a| !t[a]) && self.negneg.iter().all(|&a| t[a])
    }

    pub(crate) fn is_false(&self, t: &[bool]) -> bool {
        self.body_true(t) && self.head.iter().all(|&a| !t[a])
    }
}

/// Stability of `truth` for the rules it satisfies (hard rules are assumed
/// satisfied by the caller).
fn stable_on(rules: &[LRule], truth: &[bool], cap: usize) -> Result<bool> {
    let reduct: Vec<(&[usize], &[usize])> = rules
        .iter()
        .filter(|r| !r.is_false(truth))
        .filter(|r| r.neg.iter().all(|&a| !truth[a]) && r.negneg.iter().all(|&a| truth[a]))
        .map(|r| (r.head.as_slice(), r.pos.as_slice()))
        .collect();
    if reduct.iter().all(|(h, _)| h.len() <= 1) {
        let mut lm = vec![false; truth.len()];
        loop {
            let mut changed = false;
            for (h, b) in &reduct {
                if let [a] = h {
                    if !lm[*a] && b.iter().all(|&x| lm[x]) {
                        lm[*a] = true;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        return Ok(lm == truth);
    }
    let on: Vec<usize> = (0..truth.len()).filter(|&a| truth[a]).collect();
    if on.len() > cap {
        return Err(Error::Resource(format!(
            "disjunctive minimality check over {} true atoms exceeds the cap of {cap}",
            on.len()
        )));
    }
    let mut sub = vec![false; truth.len()];
    let full = (1u64 << on.len()) - 1;
    for mask in 0..full {
        for (k, &a) in on.iter().enumerate() {
            sub[a] = mask >> k & 1 == 1;
        }
        let model = reduct
            .iter()
            .all(|(h, b)| !b.iter().all(|&x| sub[x]) || h.iter().any(|&x| sub[x]));
        if model {
            return Ok(false);
        }
    }
    Ok(true)
}

/// A connected group of atoms and the rules over them.
#[derive(Clone, Debug)]
pub(crate) struct Component {
    /// Global atom ids, ascending.
    pub atoms: Vec<usize>,
    /// Global rule ids, ascending.
    pub rules: Vec<usize>,
    lrules: Vec<LRule>,
    occ: Vec<Vec<usize>>,
    supp: Vec<Vec<usize>>,
    watch: Vec<Vec<usize>>,
}

pub(crate) struct Split {
    pub components: Vec<Component>,
    /// Rules mentioning no atom at all.
    pub constant_rules: Vec<usize>,
    /// A hard rule without atoms (`:- .`) makes every candidate fail.
    pub constant_hard_violation: bool,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

pub(crate) fn split_components(ground: &GroundProgram, hard: &[bool]) -> Split {
    let n = ground.atoms().len();
    let mut parent: Vec<usize> = (0..n).collect();
    let mut constant_rules = Vec::new();
    let mut constant_hard_violation = false;
    for (i, r) in ground.rules().iter().enumerate() {
        let mut it = r.atoms();
        match it.next() {
            None => {
                constant_rules.push(i);
                constant_hard_violation |= hard[i];
            }
            Some(first) => {
                for a in it {
                    let (x, y) = (find(&mut parent, first), find(&mut parent, a));
                    if x != y {
                        parent[x.max(y)] = x.min(y);
                    }
                }
            }
        }
    }
    let mut comp_of = vec![usize::MAX; n];
    let mut groups: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    for a in 0..n {
        let root = find(&mut parent, a);
        if comp_of[root] == usize::MAX {
            comp_of[root] = groups.len();
            groups.push((Vec::new(), Vec::new()));
        }
        comp_of[a] = comp_of[root];
        groups[comp_of[a]].0.push(a);
    }
    for (i, r) in ground.rules().iter().enumerate() {
        if let Some(a) = r.atoms().next() {
            groups[comp_of[a]].1.push(i);
        }
    }
    let components = groups
        .into_iter()
        .map(|(atoms, rules)| Component::build(ground, atoms, rules, hard))
        .collect();
    Split {
        components,
        constant_rules,
        constant_hard_violation,
    }
}

impl Component {
    fn build(ground: &GroundProgram, atoms: Vec<usize>, rules: Vec<usize>, hard: &[bool]) -> Self {
        let local = |g: usize| atoms.binary_search(&g).expect("atom belongs to component");
        let lrules: Vec<LRule> = rules
            .iter()
            .map(|&i| LRule::from_global(&ground.rules()[i], Some(&local), hard[i]))
            .collect();
        let n = atoms.len();
        let mut occ = vec![Vec::new(); n];
        let mut supp = vec![Vec::new(); n];
        for (k, r) in lrules.iter().enumerate() {
            let mut seen = BTreeSet::new();
            for &a in r.head.iter().chain(&r.pos).chain(&r.neg).chain(&r.negneg) {
                if seen.insert(a) {
                    occ[a].push(k);
                }
            }
            for &h in &r.head {
                supp[h].push(k);
            }
        }
        let mut watch: Vec<BTreeSet<usize>> = (0..n).map(|a| BTreeSet::from([a])).collect();
        for (h, rules) in supp.iter().enumerate() {
            for &k in rules {
                let r = &lrules[k];
                for &a in r.head.iter().chain(&r.pos).chain(&r.neg).chain(&r.negneg) {
                    watch[a].insert(h);
                }
            }
        }
        Component {
            atoms,
            rules,
            lrules,
            occ,
            supp,
            watch: watch.into_iter().map(|s| s.into_iter().collect()).collect(),
        }
    }

    /// All members of the component's model set agreeing with `clamp`, in
    /// lexicographic order.
    pub fn enumerate(&self, clamp: &[Option<bool>], limits: SolverLimits) -> Result<Vec<Vec<bool>>> {
        let mut s = Search {
            c: self,
            val: vec![-1; self.atoms.len()],
            trail: Vec::new(),
            queue: Vec::new(),
            limits,
        };
        let mut out = Vec::new();
        let mut ok = true;
        for (a, v) in clamp.iter().enumerate() {
            if let Some(v) = v {
                ok &= s.assign(a, *v);
            }
        }
        if ok && s.initial() {
            s.dfs(&mut out)?;
        }
        Ok(out)
    }

    /// Whether a complete local assignment is a member (hard rules satisfied
    /// and stable for the rules it satisfies).
    pub fn accepts(&self, truth: &[bool], cap: usize) -> Result<bool> {
        if self.lrules.iter().any(|r| r.hard && r.is_false(truth)) {
            return Ok(false);
        }
        stable_on(&self.lrules, truth, cap)
    }
}

struct Search<'a> {
    c: &'a Component,
    val: Vec<i8>,
    trail: Vec<usize>,
    queue: Vec<usize>,
    limits: SolverLimits,
}

impl Search<'_> {
    fn assign(&mut self, a: usize, v: bool) -> bool {
        let want = v as i8;
        match self.val[a] {
            -1 => {
                self.val[a] = want;
                self.trail.push(a);
                self.queue.push(a);
                true
            }
            x => x == want,
        }
    }

    fn undo(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let a = self.trail.pop().unwrap();
            self.val[a] = -1;
        }
        self.queue.clear();
    }

    fn initial(&mut self) -> bool {
        for k in 0..self.c.lrules.len() {
            if !self.check_clause(k) {
                return false;
            }
        }
        for a in 0..self.c.atoms.len() {
            if !self.check_support(a) {
                return false;
            }
        }
        self.propagate()
    }

    fn propagate(&mut self) -> bool {
        let c = self.c;
        while let Some(a) = self.queue.pop() {
            for &k in &c.occ[a] {
                if !self.check_clause(k) {
                    return false;
                }
            }
            for &h in &c.watch[a] {
                if !self.check_support(h) {
                    return false;
                }
            }
        }
        true
    }

    /// Unit propagation of a hard rule read as a clause.
    fn check_clause(&mut self, k: usize) -> bool {
        let r = &self.c.lrules[k];
        if !r.hard {
            return true;
        }
        let mut unit: Option<(usize, bool)> = None;
        let mut open = 0;
        for &h in &r.head {
            match self.val[h] {
                1 => return true,
                0 => {}
                _ => {
                    open += 1;
                    unit = Some((h, true));
                }
            }
        }
        for (lits, body_true_when) in [(&r.pos, 1i8), (&r.neg, 0), (&r.negneg, 1)] {
            for &a in lits {
                match self.val[a] {
                    -1 => {
                        open += 1;
                        unit = Some((a, body_true_when == 0));
                    }
                    v if v == body_true_when => {}
                    _ => return true,
                }
            }
        }
        match open {
            0 => false,
            1 => {
                let (a, v) = unit.unwrap();
                self.assign(a, v)
            }
            _ => true,
        }
    }

    fn body_possible(&self, r: &LRule) -> bool {
        r.pos.iter().all(|&a| self.val[a] != 0)
            && r.neg.iter().all(|&a| self.val[a] != 1)
            && r.negneg.iter().all(|&a| self.val[a] != 0)
    }

    /// A true atom needs a rule with a true body whose other head atoms are false.
    fn check_support(&mut self, a: usize) -> bool {
        if self.val[a] == 0 {
            return true;
        }
        let c = self.c;
        let mut only = None;
        let mut count = 0;
        for &k in &c.supp[a] {
            let r = &c.lrules[k];
            if self.body_possible(r) && r.head.iter().all(|&h| h == a || self.val[h] != 1) {
                count += 1;
                only = Some(k);
                if count > 1 {
                    return true;
                }
            }
        }
        match (count, self.val[a]) {
            (0, 1) => false,
            (0, _) => self.assign(a, false),
            (1, 1) => {
                let r = &c.lrules[only.unwrap()];
                r.pos.iter().all(|&x| self.assign(x, true))
                    && r.neg.iter().all(|&x| self.assign(x, false))
                    && r.negneg.iter().all(|&x| self.assign(x, true))
                    && r.head.iter().all(|&h| h == a || self.assign(h, false))
            }
            _ => true,
        }
    }

    fn dfs(&mut self, out: &mut Vec<Vec<bool>>) -> Result<()> {
        let Some(a) = self.val.iter().position(|&v| v == -1) else {
            let truth: Vec<bool> = self.val.iter().map(|&v| v == 1).collect();
            if self.c.accepts(&truth, self.limits.minimality_cap)? {
                if out.len() >= self.limits.max_models {
                    return Err(Error::Resource(format!(
                        "more than {} models in one component",
                        self.limits.max_models
                    )));
                }
                out.push(truth);
            }
            return Ok(());
        };
        for v in [false, true] {
            let mark = self.trail.len();
            if self.assign(a, v) && self.propagate() {
                self.dfs(out)?;
            }
            self.undo(mark);
        }
        Ok(())
    }
}
