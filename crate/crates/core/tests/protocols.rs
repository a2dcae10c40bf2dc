mod common;

use std::collections::BTreeMap;

use nmk_core::markov::{build_markov, random_components};
use nmk_core::scenario::{
    apply_step, classify_script, dilution_conversion_cost, parse_script, prop1_script, random_cq_state, random_step,
    run_script, CostLedger, OperationClass, Scenario, StepKind,
};
use nmk_core::{sample, zoo, Error, Party, Register, RegisterLayout};
use rand::Rng;

fn by_party(s: &nmk_core::DensityState) -> f64 {
    let regs = s.layout().registers();
    let of = |p: Party| (0..regs.len()).filter(|&i| regs[i].party == p).collect::<Vec<_>>();
    0.5 * common::cqmi(s.matrix(), &s.layout().dims(), &of(Party::Alice), &of(Party::Bob), &of(Party::Eve))
}

#[test]
fn non_free_examples_reach_their_values() {
    for (class, expected) in [("le_minus_re", 0.5), ("q_e_to_a", 1.0), ("q_e_to_b", 1.0), ("s_ab", 0.5), ("q_ab", 1.0)] {
        let item = zoo::zoo("sII_E_script", &BTreeMap::from([("class".to_string(), class.to_string())]), None).unwrap();
        let run = item.run().unwrap().unwrap();
        assert!((by_party(&run.scenario.state) - expected).abs() < 1e-9, "{class}");
        assert_ne!(run.class, OperationClass::Omega);
    }
}

#[test]
fn ledgers_add_up_over_scripts() {
    let mut rng = sample::rng(71);
    let regs = [("A", 2, Party::Alice), ("B", 2, Party::Bob), ("E", 2, Party::Eve)];
    for _ in 0..30 {
        let s = random_cq_state(&regs, "M", 2, &mut rng).unwrap();
        let mut sc = Scenario::new(s.clone());
        let mut steps = Vec::new();
        let mut sum = CostLedger::default();
        for _ in 0..3 {
            if sc.state.dim() > 48 {
                break;
            }
            let kind = StepKind::OMEGA_STAR[rng.random_range(0..StepKind::OMEGA_STAR.len())];
            let Ok(step) = random_step(kind, &sc.state, &mut rng) else { continue };
            let next = match apply_step(&sc, &step) {
                Err(Error::BudgetExceeded { .. }) => continue,
                r => r.unwrap(),
            };
            let delta = CostLedger {
                qc_bits: next.ledger.qc_bits - sc.ledger.qc_bits,
                cdown_bits: next.ledger.cdown_bits - sc.ledger.cdown_bits,
            };
            sum = sum.add(&delta);
            sc = next;
            steps.push(step);
        }
        let run = run_script(&Scenario::new(s), &steps).unwrap();
        assert_eq!(run.scenario.ledger, sum);
        assert_eq!(run.scenario.ledger, sc.ledger);
        assert!(matches!(classify_script(&steps), OperationClass::Omega | OperationClass::OmegaStar));
    }
}

#[test]
fn construction_protocol_is_free_and_exact() {
    let mut rng = sample::rng(72);
    let dummy =
        RegisterLayout::new(vec![Register::new("A", 1, Party::Alice), Register::new("B", 1, Party::Bob), Register::new("E", 1, Party::Eve)])
            .unwrap();
    for _ in 0..5 {
        let c = random_components(rng.random_range(1..=3), 2, 2, rng.random_range(1..=2), 2, &mut rng).unwrap();
        let steps = prop1_script(&c, &dummy).unwrap();
        let json = serde_json::to_string(&steps).unwrap();
        let steps = parse_script(&json).unwrap();
        let start = zoo::resolve_ref("zoo:dummy", 0).unwrap();
        let run = run_script(&Scenario::new(start), &steps).unwrap();
        assert_eq!(run.class, OperationClass::Omega);
        assert_eq!(run.scenario.ledger, CostLedger::default());
        let out = run.scenario.state.trace_out(&["E"]).unwrap().permute(&["A", "B", "E0", "EL", "ER"]).unwrap();
        let out = out.merge(&["E0", "EL", "ER"], "E", Party::Eve).unwrap();
        assert!(out.trace_distance(&build_markov(&c).unwrap()).unwrap() < 1e-9);
        assert!(by_party(&run.scenario.state).abs() < 1e-9);
    }
}

#[test]
fn empty_script_is_identity() {
    let s = zoo::resolve_ref("zoo:hs_random", 3).unwrap();
    let run = run_script(&Scenario::new(s.clone()), &[]).unwrap();
    assert_eq!(run.scenario.state, s);
    assert_eq!(run.class, OperationClass::Omega);
}

#[test]
fn dilution_arithmetic() {
    let c = dilution_conversion_cost(&[4], 2).unwrap();
    assert_eq!((c.total_bits, c.lemma6_bound), (2.0, 4.0));
    let c = dilution_conversion_cost(&[2], 1).unwrap();
    assert_eq!((c.per_step_bits[0], c.lemma6_bound), (1.0, 1.5));
    let c = dilution_conversion_cost(&[2, 2], 4).unwrap();
    assert_eq!((c.total_bits, c.lemma6_bound), (4.0, 6.0));
    let c = dilution_conversion_cost(&[3, 5, 7], 3).unwrap();
    // ceil(sqrt(27)) = 6, ceil(sqrt(125)) = 12, ceil(sqrt(343)) = 19
    let expected = [6f64, 12.0, 19.0].map(f64::log2);
    for (a, b) in c.per_step_bits.iter().zip(expected) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!(c.total_bits <= c.lemma6_bound);
    assert!(matches!(dilution_conversion_cost(&[1], 2), Err(Error::BadMu(_))));
    assert!(matches!(dilution_conversion_cost(&[4], 0), Err(Error::BadMu(_))));
}
