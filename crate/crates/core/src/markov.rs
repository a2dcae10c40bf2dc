//! Quantum Markov chains: construction from block components and
//! scoring of arbitrary states by CQMI and Petz-recovery fidelity.

use serde::{Deserialize, Serialize};

use crate::entropy::{self, Partition};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::state::{DensityState, Party, Register, RegisterLayout};

pub const DEFAULT_MARKOV_TOL: f64 = 1e-8;

/// One block `p_j |j><j| (x) sigma_j^{A E_L} (x) tau_j^{B E_R}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovEntry {
    pub p: f64,
    /// Two registers: Alice's system then the `E_L` share.
    pub sigma: DensityState,
    /// Two registers: Bob's system then the `E_R` share.
    pub tau: DensityState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovComponents {
    pub entries: Vec<MarkovEntry>,
}

/// Dimensions shared by all entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkovDims {
    pub a: usize,
    pub b: usize,
    pub e0: usize,
    pub e_l: usize,
    pub e_r: usize,
}

impl MarkovDims {
    pub fn e(&self) -> usize {
        self.e0 * self.e_l * self.e_r
    }
}

impl MarkovComponents {
    pub fn new(entries: Vec<MarkovEntry>) -> Result<Self> {
        let c = Self { entries };
        c.dims()?;
        Ok(c)
    }

    /// Validates probabilities and dimension consistency.
    pub fn dims(&self) -> Result<MarkovDims> {
        let first = self.entries.first().ok_or_else(|| Error::BadProbabilities("no entries".into()))?;
        let total: f64 = self.entries.iter().map(|e| e.p).sum();
        if self.entries.iter().any(|e| !(0.0..=1.0).contains(&e.p)) || (total - 1.0).abs() > 1e-10 {
            return Err(Error::BadProbabilities(format!("p_j must be in [0,1] and sum to 1 (sum {total})")));
        }
        let two = |s: &DensityState, what: &str| -> Result<(usize, usize)> {
            match s.layout().dims()[..] {
                [x, y] => Ok((x, y)),
                _ => Err(Error::InconsistentDims(format!("{what} must have exactly two registers"))),
            }
        };
        let (a, e_l) = two(&first.sigma, "sigma")?;
        let (b, e_r) = two(&first.tau, "tau")?;
        for (j, e) in self.entries.iter().enumerate() {
            if two(&e.sigma, "sigma")? != (a, e_l) || two(&e.tau, "tau")? != (b, e_r) {
                return Err(Error::InconsistentDims(format!("entry {j} differs from entry 0")));
            }
        }
        Ok(MarkovDims { a, b, e0: self.entries.len(), e_l, e_r })
    }
}

/// Layout `A, B, E` with `E = E0 (x) E_L (x) E_R` fused into one register.
pub fn markov_layout(d: &MarkovDims) -> RegisterLayout {
    RegisterLayout::new(vec![
        Register::new("A", d.a, Party::Alice),
        Register::new("B", d.b, Party::Bob),
        Register::new("E", d.e(), Party::Eve),
    ])
    .expect("fixed labels are distinct")
}

/// `sum_j p_j |j><j|^{E0} (x) sigma_j (x) tau_j`, reordered to `A, B, E`.
pub fn build_markov(c: &MarkovComponents) -> Result<DensityState> {
    let d = c.dims()?;
    let n = d.a * d.b * d.e();
    // staging order: E0, A, E_L, B, E_R
    let mut staged = CMatrix::zeros(n, n);
    let block = d.a * d.e_l * d.b * d.e_r;
    for (j, e) in c.entries.iter().enumerate() {
        let local = linalg::kron(e.sigma.matrix(), e.tau.matrix()).scale(e.p);
        staged.view_mut((j * block, j * block), (block, block)).copy_from(&local);
    }
    let dims = [d.e0, d.a, d.e_l, d.b, d.e_r];
    let m = linalg::permute_matrix(&staged, &dims, &[1, 3, 0, 2, 4]);
    Ok(DensityState::from_parts(markov_layout(&d), m))
}

/// Recovered state with the trace it had before renormalization.
#[derive(Debug, Clone)]
pub struct PetzRecovery {
    pub state: DensityState,
    pub pre_normalization_trace: f64,
}

/// Petz map `E -> BE` applied to `rho^{AE}`:
/// `rho_BE^{1/2} (rho_E^{-1/2} rho_AE rho_E^{-1/2} (x) I_B) rho_BE^{1/2}`,
/// with inverses taken on supports. The output lives on the `A, B, E`
/// registers in their original relative order.
pub fn petz_recover(s: &DensityState, p: &Partition) -> Result<PetzRecovery> {
    p.check(s.layout())?;
    let mut abe: Vec<String> = p.a.clone();
    abe.extend(p.b.iter().cloned());
    abe.extend(p.e.iter().cloned());
    let reduced = s.partial_trace(&abe)?;
    let grouped = reduced.permute(&abe)?;
    let da = reduced.layout().dim_of(&p.a)?;
    let db = reduced.layout().dim_of(&p.b)?;
    let de = reduced.layout().dim_of(&p.e)?;

    let mut ae = p.a.clone();
    ae.extend(p.e.iter().cloned());
    let mut be = p.b.clone();
    be.extend(p.e.iter().cloned());
    let rho_ae = grouped.partial_trace(&ae)?.permute(&ae)?;
    let rho_be = grouped.partial_trace(&be)?.permute(&be)?;
    let rho_e = grouped.partial_trace(&p.e)?.permute(&p.e)?;

    let e_inv = linalg::kron(&linalg::identity(da), &linalg::psd_inv_sqrt(rho_e.matrix()));
    let x = &e_inv * rho_ae.matrix() * &e_inv;
    // X (x) I_B laid out in A, B, E order
    let n = da * db * de;
    let mut y = CMatrix::zeros(n, n);
    for a in 0..da {
        for a2 in 0..da {
            for b in 0..db {
                for e in 0..de {
                    for e2 in 0..de {
                        y[((a * db + b) * de + e, (a2 * db + b) * de + e2)] = x[(a * de + e, a2 * de + e2)];
                    }
                }
            }
        }
    }
    let be_half = linalg::kron(&linalg::identity(da), &linalg::psd_sqrt(rho_be.matrix()));
    let z = linalg::hermitize(&(&be_half * y * &be_half));
    let tr = linalg::trace(&z).re;
    if tr <= 0.0 {
        return Err(Error::InvalidState("recovered operator has no weight".into()));
    }
    let recovered = DensityState::from_parts(grouped.layout().clone(), z.unscale(tr));
    let original_order = reduced.layout().labels();
    Ok(PetzRecovery { state: recovered.permute(&original_order)?, pre_normalization_trace: tr })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkovScore {
    pub cqmi_bits: f64,
    pub recovery_fidelity: f64,
    /// `cqmi_bits <= tol`; the fidelity is diagnostic only.
    pub verdict: bool,
    pub tol: f64,
}

pub fn markov_score(s: &DensityState, p: &Partition, tol: f64) -> Result<MarkovScore> {
    let cqmi_bits = entropy::cqmi_partition(s, p)?;
    let rec = petz_recover(s, p)?;
    let mut abe = p.a.clone();
    abe.extend(p.b.iter().cloned());
    abe.extend(p.e.iter().cloned());
    let target = s.partial_trace(&abe)?;
    let recovery_fidelity = rec.state.fidelity(&target)?;
    Ok(MarkovScore { cqmi_bits, recovery_fidelity, verdict: cqmi_bits <= tol, tol })
}

/// Random components: flat-Dirichlet weights and Hilbert-Schmidt blocks.
pub fn random_components<R: rand::Rng + ?Sized>(
    entries: usize,
    a: usize,
    b: usize,
    e_l: usize,
    e_r: usize,
    rng: &mut R,
) -> Result<MarkovComponents> {
    if entries == 0 {
        return Err(Error::BadParams("at least one entry is required".into()));
    }
    let p = crate::sample::probabilities(entries, rng);
    let entries = p
        .into_iter()
        .map(|p| {
            let sigma = crate::sample::density_hs_with(&[("A", a, Party::Alice), ("EL", e_l, Party::Eve)], rng)?;
            let tau = crate::sample::density_hs_with(&[("B", b, Party::Bob), ("ER", e_r, Party::Eve)], rng)?;
            Ok(MarkovEntry { p, sigma, tau })
        })
        .collect::<Result<Vec<_>>>()?;
    MarkovComponents::new(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample;
    use crate::state::PureState;

    pub(crate) fn ghz_components() -> MarkovComponents {
        let e = |label: &str, party, i| {
            DensityState::basis(label, 2, party, i)
                .unwrap()
                .tensor(&DensityState::basis(&format!("{label}x"), 1, Party::Eve, 0).unwrap())
                .unwrap()
        };
        MarkovComponents::new(
            (0..2)
                .map(|j| MarkovEntry { p: 0.5, sigma: e("A", Party::Alice, j), tau: e("B", Party::Bob, j) })
                .collect(),
        )
        .unwrap()
    }

    fn abe(s: &DensityState) -> Partition {
        Partition::from_parties(s.layout())
    }

    #[test]
    fn single_product_entry_gives_product_state() {
        let sigma = sample::pure(&[("A", 2, Party::Alice), ("L", 1, Party::Eve)], 1).unwrap().to_density();
        let tau = sample::pure(&[("B", 2, Party::Bob), ("R", 1, Party::Eve)], 2).unwrap().to_density();
        let c = MarkovComponents::new(vec![MarkovEntry { p: 1.0, sigma, tau }]).unwrap();
        let s = build_markov(&c).unwrap();
        assert!(entropy::cqmi_partition(&s, &abe(&s)).unwrap().abs() < 1e-10);
        assert!(entropy::mutual_information(&s, &["A"], &["B"]).unwrap().abs() < 1e-10);
    }

    #[test]
    fn ghz_components_give_ghz_diagonal() {
        let s = build_markov(&ghz_components()).unwrap();
        assert!((s.matrix()[(0, 0)].re - 0.5).abs() < 1e-15);
        assert!((s.matrix()[(7, 7)].re - 0.5).abs() < 1e-15);
        assert!(markov_score(&s, &abe(&s), DEFAULT_MARKOV_TOL).unwrap().verdict);
    }

    #[test]
    fn bad_probabilities_rejected() {
        let mut c = ghz_components();
        c.entries[0].p = 0.7;
        assert!(matches!(build_markov(&c), Err(Error::BadProbabilities(_))));
    }

    #[test]
    fn inconsistent_dims_rejected() {
        let mut c = ghz_components();
        c.entries[1].sigma = DensityState::basis("A", 3, Party::Alice, 0)
            .unwrap()
            .tensor(&DensityState::basis("Ax", 1, Party::Eve, 0).unwrap())
            .unwrap();
        assert!(matches!(build_markov(&c), Err(Error::InconsistentDims(_))));
    }

    #[test]
    fn bell_state_is_not_recoverable() {
        let s = PureState::bell(("A", Party::Alice), ("B", Party::Bob))
            .unwrap()
            .to_density()
            .tensor(&DensityState::basis("E", 2, Party::Eve, 0).unwrap())
            .unwrap();
        let score = markov_score(&s, &abe(&s), DEFAULT_MARKOV_TOL).unwrap();
        assert!(!score.verdict);
        assert!(score.recovery_fidelity < 0.9);
    }

    #[test]
    fn product_state_recovers() {
        let a = sample::density_hs(&[("A", 2, Party::Alice)], 1).unwrap();
        let b = sample::density_hs(&[("B", 2, Party::Bob)], 2).unwrap();
        let e = sample::density_hs(&[("E", 2, Party::Eve)], 3).unwrap();
        let s = a.tensor(&b).unwrap().tensor(&e).unwrap();
        let score = markov_score(&s, &abe(&s), DEFAULT_MARKOV_TOL).unwrap();
        assert!(score.verdict && score.recovery_fidelity >= 1.0 - 1e-9);
    }

    #[test]
    fn classical_correlation_with_noise_fails_verdict() {
        let mut m = CMatrix::zeros(4, 4);
        m[(0, 0)] = linalg::c(0.5, 0.0);
        m[(3, 3)] = linalg::c(0.5, 0.0);
        let ab = DensityState::new(
            RegisterLayout::new(vec![Register::new("A", 2, Party::Alice), Register::new("B", 2, Party::Bob)])
                .unwrap(),
            m,
        )
        .unwrap();
        let s = ab.tensor(&DensityState::maximally_mixed("E", 2, Party::Eve).unwrap()).unwrap();
        let score = markov_score(&s, &abe(&s), DEFAULT_MARKOV_TOL).unwrap();
        assert!(!score.verdict);
        assert!((score.cqmi_bits - 1.0).abs() < 1e-10);
    }

    #[test]
    fn random_components_are_markov_and_recoverable() {
        let mut rng = sample::rng(21);
        let c = random_components(3, 2, 2, 2, 2, &mut rng).unwrap();
        let s = build_markov(&c).unwrap();
        let score = markov_score(&s, &abe(&s), DEFAULT_MARKOV_TOL).unwrap();
        assert!(score.cqmi_bits < 1e-10, "{}", score.cqmi_bits);
        assert!(score.recovery_fidelity >= 1.0 - 1e-8, "{}", score.recovery_fidelity);
    }

    #[test]
    fn components_json_round_trip() {
        let c = ghz_components();
        let json = serde_json::to_string(&c).unwrap();
        let back: MarkovComponents = serde_json::from_str(&json).unwrap();
        assert_eq!(back.dims().unwrap(), c.dims().unwrap());
    }
}
