mod common;

use nmk_core::entropy::entropy;
use nmk_core::markov::{build_markov, random_components};
use nmk_core::nmf::{baseline_witnesses, continuity_bound, estimate, markov_witness, EstimateConfig};
use nmk_core::{sample, Party};
use rand::Rng;

fn abe(a: usize, b: usize, e: usize) -> [(&'static str, usize, Party); 3] {
    [("A", a, Party::Alice), ("B", b, Party::Bob), ("E", e, Party::Eve)]
}

fn quick(seed: u64) -> EstimateConfig {
    EstimateConfig { restarts: 2, max_iters: 60, seed, ..EstimateConfig::default() }
}

#[test]
fn estimates_sit_between_m_i_and_local_entropies() {
    for seed in 0..20 {
        let s = sample::density_hs(&abe(2, 2, 2), seed).unwrap();
        let est = estimate(&s, &EstimateConfig { ext_schedule: vec![[1, 1, 1]], ..quick(seed) }).unwrap();
        let d = [2, 2, 2];
        let lower = 0.5 * common::cqmi(s.matrix(), &d, &[0], &[1], &[2]);
        let cap = entropy(&s, &["A"]).unwrap().min(entropy(&s, &["B"]).unwrap());
        assert!((est.lower_bits - lower).abs() < 1e-9);
        assert!(est.lower_bits <= est.upper_bits + 1e-9);
        assert!(est.upper_bits <= cap + 1e-9, "{} > {cap}", est.upper_bits);
    }
}

#[test]
fn pure_states_are_exact() {
    for seed in 0..30 {
        let psi = sample::pure(&abe(2, 2, 2), seed).unwrap().to_density();
        let half_i = 0.5 * common::mutual(psi.matrix(), &[2, 2, 2], &[0], &[1]);
        let est = estimate(&psi, &quick(seed)).unwrap();
        assert!(est.gap <= 1e-6);
        assert!((est.upper_bits - half_i).abs() <= 1e-6);
        let base = baseline_witnesses(&psi).unwrap();
        assert!(base.iter().any(|w| (w.objective() - half_i).abs() < 1e-9));
    }
}

#[test]
fn seeded_markov_states_reach_zero() {
    let mut rng = sample::rng(31);
    for _ in 0..10 {
        let entries = rng.random_range(1..=3);
        let c = random_components(entries, 2, 2, 2, 2, &mut rng).unwrap();
        let s = build_markov(&c).unwrap();
        let w = markov_witness(&c).unwrap();
        assert!(w.objective().abs() < 1e-9);
        let cfg = EstimateConfig { ext_schedule: vec![[1, 1, 1]], restarts: 1, max_iters: 10, seeds: vec![w], ..EstimateConfig::default() };
        let est = estimate(&s, &cfg).unwrap();
        assert!(est.upper_bits <= 1e-3);
        assert!(est.lower_bits.abs() < 1e-9);
    }
}

#[test]
fn classical_correlation_closes_at_one_half() {
    let s = nmk_core::zoo::resolve_ref("zoo:classical_corr_e0", 0).unwrap();
    let est = estimate(&s, &EstimateConfig { k: Some(2), ..quick(1) }).unwrap();
    assert!((est.lower_bits - 0.5).abs() < 1e-9);
    assert!((est.upper_bits - 0.5).abs() < 1e-3);
}

#[test]
fn continuity_covers_nearby_pure_states() {
    let mut rng = sample::rng(41);
    for _ in 0..100 {
        let d = [2, rng.random_range(2..=3), 2];
        let psi = sample::pure_with(&abe(d[0], d[1], d[2]), &mut rng).unwrap();
        let n = psi.amplitudes().len();
        let delta = 10f64.powf(rng.random_range(-4.0..-0.5));
        let g = sample::gaussian_matrix(n, 1, &mut rng);
        let v = psi.amplitudes() + g.column(0).scale(delta);
        let phi = nmk_core::PureState::normalized(psi.layout().clone(), v).unwrap();
        let (p, q) = (psi.to_density(), phi.to_density());
        let eps = p.trace_distance(&q).unwrap();
        let di = 0.5 * (common::mutual(p.matrix(), &d, &[0], &[1]) - common::mutual(q.matrix(), &d, &[0], &[1]));
        assert!(di.abs() <= continuity_bound(eps, d[0], d[1]).unwrap() + 1e-9);
    }
}

#[test]
fn continuity_bound_formula() {
    // 4 sqrt(eps) log(dA dB) + 3 (1 + sqrt(eps)) h(sqrt(eps) / (1 + sqrt(eps)))
    let r = 0.1f64;
    let expected = 4.0 * r * 4f64.log2() + 3.0 * (1.0 + r) * common::h2(r / (1.0 + r));
    assert!((continuity_bound(0.01, 2, 2).unwrap() - expected).abs() < 1e-12);
}
