mod common;

use nmk_core::entropy::{cqmi, entropy, m_i, mutual_information};
use nmk_core::{apply_channel, sample, ChannelMap, DensityState, Party, RegisterLayout};
use proptest::prelude::*;

fn abe(a: usize, b: usize, e: usize) -> [(&'static str, usize, Party); 3] {
    [("A", a, Party::Alice), ("B", b, Party::Bob), ("E", e, Party::Eve)]
}

fn dims() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..=3, 1usize..=3, 1usize..=3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn entropies_match_the_oracle(seed in any::<u64>(), (a, b, e) in dims()) {
        let s = sample::density_hs(&abe(a, b, e), seed).unwrap();
        let d = [a, b, e];
        for keep in [vec![0], vec![1], vec![2], vec![0, 1], vec![0, 2], vec![1, 2], vec![0, 1, 2]] {
            let labels: Vec<&str> = keep.iter().map(|&i| ["A", "B", "E"][i]).collect();
            let lib = entropy(&s, &labels).unwrap();
            prop_assert!((lib - common::s(s.matrix(), &d, &keep)).abs() < 1e-9);
        }
        let oracle = common::cqmi(s.matrix(), &d, &[0], &[1], &[2]);
        prop_assert!((cqmi(&s, &["A"], &["B"], &["E"]).unwrap() - oracle).abs() < 1e-9);
        prop_assert!(oracle >= -1e-9);
    }

    #[test]
    fn partial_trace_matches_the_oracle(seed in any::<u64>(), (a, b, e) in dims()) {
        let s = sample::density_hs(&abe(a, b, e), seed).unwrap();
        let lib = s.partial_trace(&["A", "E"]).unwrap();
        let oracle = common::ptrace(s.matrix(), &[a, b, e], &[0, 2]);
        prop_assert!((lib.matrix() - oracle).norm() < 1e-12);
    }

    #[test]
    fn local_unitaries_leave_m_i_unchanged(seed in any::<u64>()) {
        let s = sample::density_hs(&abe(2, 2, 2), seed).unwrap();
        let before = m_i(&s, &["A"], &["B"], &["E"]).unwrap();
        let mut after = s.clone();
        for (i, label) in ["A", "B", "E"].iter().enumerate() {
            let u = ChannelMap::unitary(sample::unitary(2, seed.wrapping_add(i as u64)).unwrap()).unwrap();
            let out = RegisterLayout::new(vec![after.layout().get(label).unwrap().clone()]).unwrap();
            after = apply_channel(&after, &u, &[label.to_string()], &out).unwrap();
        }
        prop_assert!((m_i(&after, &["A"], &["B"], &["E"]).unwrap() - before).abs() < 1e-9);
    }

    #[test]
    fn pure_states_have_complementary_entropies(seed in any::<u64>(), (a, b, e) in dims()) {
        let psi = sample::pure(&abe(a, b, e), seed).unwrap().to_density();
        let sa = entropy(&psi, &["A"]).unwrap();
        prop_assert!((sa - entropy(&psi, &["B", "E"]).unwrap()).abs() < 1e-9);
        // for pure states M_I = I(A:B)/2
        let half = 0.5 * mutual_information(&psi, &["A"], &["B"]).unwrap();
        prop_assert!((m_i(&psi, &["A"], &["B"], &["E"]).unwrap() - half).abs() < 1e-9);
    }

    #[test]
    fn entropy_is_additive_on_products(s1 in any::<u64>(), s2 in any::<u64>()) {
        let x = sample::density_hs(&[("X", 2, Party::Alice)], s1).unwrap();
        let y = sample::density_hs(&[("Y", 3, Party::Bob)], s2).unwrap();
        let xy = x.tensor(&y).unwrap();
        let sum = entropy(&x, &["X"]).unwrap() + entropy(&y, &["Y"]).unwrap();
        prop_assert!((entropy(&xy, &["X", "Y"]).unwrap() - sum).abs() < 1e-9);
        prop_assert!(mutual_information(&xy, &["X"], &["Y"]).unwrap().abs() < 1e-9);
    }

    #[test]
    fn states_survive_json(seed in any::<u64>()) {
        let s = sample::density_hs(&abe(2, 1, 3), seed).unwrap();
        let back = nmk_core::io::parse_state(&nmk_core::io::state_to_json(&s)).unwrap();
        prop_assert!(s.trace_distance(&back).unwrap() < 1e-12);
    }
}

#[test]
fn maximally_mixed_has_log_dim_entropy() {
    let s = DensityState::maximally_mixed("A", 5, Party::Alice).unwrap();
    assert!((entropy(&s, &["A"]).unwrap() - 5f64.log2()).abs() < 1e-12);
}
