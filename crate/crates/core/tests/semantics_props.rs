mod common;

use std::collections::BTreeMap;

use common::{mask_of, program, sigmoid, Mask, Shape};
use lpmln::semantics::{log_sum_exp, reward_log_weight};
use lpmln::transforms::coherence_report;
use lpmln::{ground, marginal, parse_program, parse_query, probability_table, sm_set, weight_of, Query};
use proptest::prelude::*;

const SHAPE: Shape = Shape { atoms: 7, rules: 8, disjunctive: true, soft: 2 };

/// A k-coherent program: soft facts `pf_j`, a hard part deriving atoms from
/// them, and independent even loops and exclusive triples that multiply the
/// number of stable models per assignment by a constant.
#[derive(Clone, Debug)]
struct Coherent {
    weights: Vec<f64>,
    loops: usize,
    triples: usize,
    derived: Vec<(usize, usize)>,
}

impl Coherent {
    fn k(&self) -> usize {
        2usize.pow(self.loops as u32) * 3usize.pow(self.triples as u32)
    }

    fn text(&self) -> String {
        let mut out = String::new();
        for (j, w) in self.weights.iter().enumerate() {
            out.push_str(&format!("{w} pf{j}.\n"));
        }
        for l in 0..self.loops {
            out.push_str(&format!("a{l} :- not b{l}.\nb{l} :- not a{l}.\n"));
        }
        for t in 0..self.triples {
            for i in 0..3 {
                let others: Vec<String> = (0..3).filter(|&o| o != i).map(|o| format!("not x{t}_{o}")).collect();
                out.push_str(&format!("x{t}_{i} :- {}.\n", others.join(", ")));
            }
        }
        for (n, (i, j)) in self.derived.iter().enumerate() {
            out.push_str(&format!("d{n} :- pf{i}, not pf{j}.\n"));
        }
        out
    }
}

fn coherent() -> impl Strategy<Value = Coherent> {
    (1usize..=4).prop_flat_map(|n| {
        (
            prop::collection::vec((-25i32..=25).prop_map(|w| w as f64 / 10.0), n),
            0usize..=2,
            0usize..=1,
            prop::collection::vec((0..n, 0..n), 0..3),
        )
            .prop_map(|(weights, loops, triples, derived)| Coherent { weights, loops, triples, derived })
    })
}

proptest! {
    #![proptest_config(common::config(300))]

    #[test]
    fn table_matches_brute_force_distribution(p in program(SHAPE)) {
        let oracle = p.distribution();
        let g = ground(&p.to_program()).unwrap();
        match probability_table(&g) {
            Ok(t) => {
                let ours: BTreeMap<Mask, f64> = t.entries.iter().map(|e| (mask_of(&e.interpretation), e.probability)).collect();
                prop_assert_eq!(ours.keys().collect::<Vec<_>>(), oracle.keys().collect::<Vec<_>>());
                for (m, q) in &oracle {
                    prop_assert!((ours[m] - q).abs() <= 1e-9, "{} vs {}", ours[m], q);
                }
            }
            Err(_) => prop_assert!(oracle.is_empty()),
        }
    }

    #[test]
    fn probabilities_sum_to_one(p in program(SHAPE)) {
        let g = ground(&p.to_program()).unwrap();
        if let Ok(t) = probability_table(&g) {
            let total: f64 = t.entries.iter().map(|e| e.probability).sum();
            prop_assert!((total - 1.0).abs() <= 1e-12, "{}", total);
        }
    }

    #[test]
    fn penalty_and_reward_forms_agree(p in program(SHAPE)) {
        let g = ground(&p.to_program()).unwrap();
        let members = sm_set(&g).unwrap();
        prop_assume!(!members.is_empty());
        let penalty: Vec<f64> = members.iter().map(|i| weight_of(&g, i).unwrap()).collect();
        let reward: Vec<f64> = members.iter().map(|i| reward_log_weight(&g, i).unwrap()).collect();
        let (zp, zr) = (log_sum_exp(penalty.iter().copied()), log_sum_exp(reward.iter().copied()));
        for (a, b) in penalty.iter().zip(&reward) {
            prop_assert!(((a - zp).exp() - (b - zr).exp()).abs() <= 1e-12);
        }
    }

    #[test]
    fn non_members_have_no_weight(p in program(SHAPE)) {
        let g = ground(&p.to_program()).unwrap();
        let sm: Vec<Mask> = p.sm();
        let base = p.mentioned();
        for m in p.masks().filter(|m| m & !base == 0 && !sm.contains(m)) {
            let interp = common::interp_of(m, p.atoms);
            prop_assert_eq!(weight_of(&g, &interp).unwrap(), f64::NEG_INFINITY);
        }
    }

    #[test]
    fn coherent_normalizer_and_sigmoid_marginals(c in coherent()) {
        let program = parse_program(&c.text()).unwrap();
        let report = coherence_report(&program).unwrap();
        prop_assert!(report.is_simple);
        prop_assert_eq!(report.k, Some(c.k()));
        let g = ground(&program).unwrap();
        let members = sm_set(&g).unwrap();
        let z: f64 = members.iter().map(|i| reward_log_weight(&g, i).unwrap().exp()).sum();
        let expected = c.k() as f64 * c.weights.iter().map(|w| 1.0 + w.exp()).product::<f64>();
        prop_assert!((z - expected).abs() <= 1e-9 * expected.max(1.0), "{} vs {}", z, expected);
        let table = probability_table(&g).unwrap();
        for (j, w) in c.weights.iter().enumerate() {
            let p = marginal(&table, &parse_query(&format!("pf{j}")).unwrap()).unwrap();
            prop_assert!((p - sigmoid(*w)).abs() <= 1e-9);
        }
    }
}

#[test]
fn queries_combine_atoms() {
    let g = ground(&parse_program("{a}.\n{b}.\n1 a.\n-1 b.").unwrap()).unwrap();
    let t = probability_table(&g).unwrap();
    let pa = sigmoid(1.0);
    let pb = sigmoid(-1.0);
    let q = |s: &str| marginal(&t, &parse_query(s).unwrap()).unwrap();
    assert!((q("a, b") - pa * pb).abs() < 1e-12);
    assert!((q("a ; b") - (pa + pb - pa * pb)).abs() < 1e-12);
    assert!((q("not a") - (1.0 - pa)).abs() < 1e-12);
    assert!(matches!(Query::atom(lpmln::parse_atom("zz").unwrap()), Query::Atom(_)));
    assert!(marginal(&t, &parse_query("zz").unwrap()).is_err());
}
