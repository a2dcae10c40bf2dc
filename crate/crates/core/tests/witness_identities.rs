mod common;

use common::{ptrace, projector, s, M};
use nmk_core::fuzz::random_witness;
use nmk_core::nmf::{witness_mix, witness_tensor, Role, Witness, WitnessRegister};
use nmk_core::sample;
use rand::Rng;

fn positions(w: &Witness, roles: &[Role]) -> Vec<usize> {
    (0..w.registers().len()).filter(|&i| roles.contains(&w.registers()[i].role)).collect()
}

/// `1/2 [S(AB|E) + sum_k p_k (S(AA') + S(BB') - S(A'B'))_{phi_k}]`.
fn lambda_form(w: &Witness) -> f64 {
    let dims = w.dims();
    let abe = positions(w, &[Role::A, Role::B, Role::E]);
    let abe_dims: Vec<usize> = abe.iter().map(|&i| dims[i]).collect();
    let e_in_abe: Vec<usize> = (0..abe.len()).filter(|&j| w.registers()[abe[j]].role == Role::E).collect();
    let n: usize = abe_dims.iter().product();
    let mut marginal = M::zeros(n, n);
    let mut lam = 0.0;
    let aa = positions(w, &[Role::A, Role::AExt]);
    let bb = positions(w, &[Role::B, Role::BExt]);
    let ext_ab = positions(w, &[Role::AExt, Role::BExt]);
    for m in w.members() {
        let rho = projector(m.amplitudes.as_slice());
        marginal += ptrace(&rho, &dims, &abe).scale(m.p);
        lam += m.p * (s(&rho, &dims, &aa) + s(&rho, &dims, &bb) - s(&rho, &dims, &ext_ab));
    }
    let all: Vec<usize> = (0..abe.len()).collect();
    0.5 * (s(&marginal, &abe_dims, &all) - s(&marginal, &abe_dims, &e_in_abe) + lam)
}

fn random_core<R: Rng>(rng: &mut R) -> Vec<(&'static str, usize, Role)> {
    let mut core = vec![("A", rng.random_range(1..=2), Role::A), ("B", rng.random_range(1..=2), Role::B)];
    if rng.random_bool(0.8) {
        core.push(("E", rng.random_range(1..=3), Role::E));
    }
    core
}

fn ext<R: Rng>(rng: &mut R) -> [usize; 3] {
    [rng.random_range(1..=2), rng.random_range(1..=2), rng.random_range(1..=2)]
}

#[test]
fn objective_matches_lambda_form() {
    let mut rng = sample::rng(101);
    for _ in 0..200 {
        let core = random_core(&mut rng);
        let k = rng.random_range(1..=3);
        let w = random_witness(&core, ext(&mut rng), k, &mut rng).unwrap();
        let (o, l) = (w.objective(), lambda_form(&w));
        assert!((o - l).abs() < 1e-8, "{o} vs {l}");
        assert!((o - w.objective_dense().unwrap()).abs() < 1e-8);
    }
}

fn suffix(w: &Witness, sfx: &str) -> Witness {
    let regs = w.registers().iter().map(|r| WitnessRegister::new(format!("{}{sfx}", r.label), r.dim, r.role)).collect();
    Witness::from_ensemble(regs, w.members().to_vec()).unwrap()
}

#[test]
fn tensor_is_additive() {
    let mut rng = sample::rng(102);
    for _ in 0..100 {
        let c1 = random_core(&mut rng);
        let c2 = random_core(&mut rng);
        let w1 = random_witness(&c1, ext(&mut rng), rng.random_range(1..=2), &mut rng).unwrap();
        let w2 = suffix(&random_witness(&c2, ext(&mut rng), rng.random_range(1..=2), &mut rng).unwrap(), "_2");
        let t = witness_tensor(&w1, &w2).unwrap();
        assert!((t.objective() - w1.objective() - w2.objective()).abs() < 1e-9);
        assert!((lambda_form(&t) - t.objective()).abs() < 1e-8);
    }
}

#[test]
fn mix_is_linear() {
    let mut rng = sample::rng(103);
    for _ in 0..100 {
        let core = random_core(&mut rng);
        let n = rng.random_range(2..=3);
        let r = sample::probabilities(n, &mut rng);
        let parts: Vec<(f64, Witness)> = r
            .iter()
            .map(|&p| (p, random_witness(&core, ext(&mut rng), rng.random_range(1..=2), &mut rng).unwrap()))
            .collect();
        let mix = witness_mix(&parts, "M").unwrap();
        let linear: f64 = parts.iter().map(|(p, w)| p * w.objective()).sum();
        assert!((mix.objective() - linear).abs() < 1e-9);
        // the mixture witness reproduces sum_m r_m rho_m (x) |m><m|
        let t = mix.target();
        assert_eq!(t.layout().get("M").unwrap().dim, n);
    }
}

#[test]
fn regroup_never_increases() {
    let mut rng = sample::rng(104);
    for _ in 0..100 {
        let core = [("A", 2, Role::A), ("A0", rng.random_range(1..=3), Role::A), ("B", 2, Role::B), ("E", 2, Role::E)];
        let w = random_witness(&core, ext(&mut rng), rng.random_range(1..=3), &mut rng).unwrap();
        let moved = w.regroup("A0").unwrap();
        assert!(moved.objective() <= w.objective() + 1e-9);
        assert!((lambda_form(&moved) - moved.objective()).abs() < 1e-8);
    }
}
