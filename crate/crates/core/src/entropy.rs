//! Von Neumann entropy and the mutual-information family, in bits.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{DensityState, Party, RegisterLayout};

/// Eigenvalues at or below this contribute nothing (`0 log 0 = 0`).
pub const EIGEN_CLAMP: f64 = 1e-12;

/// `-sum p log2 p` over a spectrum, ignoring entries `<= EIGEN_CLAMP`.
pub fn shannon_bits(spectrum: &[f64]) -> f64 {
    let s: f64 = spectrum
        .iter()
        .filter(|&&p| p > EIGEN_CLAMP)
        .map(|&p| -p * p.log2())
        .sum();
    s.max(0.0)
}

/// Binary entropy `h(x)`.
pub fn binary_entropy(x: f64) -> f64 {
    shannon_bits(&[x, 1.0 - x])
}

/// `S(X)` of the reduced state on `subset`. The empty set has entropy 0.
pub fn entropy<S: AsRef<str>>(s: &DensityState, subset: &[S]) -> Result<f64> {
    if subset.is_empty() {
        return Ok(0.0);
    }
    let reduced = s.partial_trace(subset)?;
    Ok(shannon_bits(&reduced.spectrum()))
}

fn union(parts: &[&[String]]) -> Vec<String> {
    parts.iter().flat_map(|p| p.iter().cloned()).collect()
}

/// Register groups `A`, `B`, `E`; registers outside the union are traced
/// out before any functional is evaluated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub a: Vec<String>,
    pub b: Vec<String>,
    pub e: Vec<String>,
}

impl Partition {
    pub fn new<S: AsRef<str>>(a: &[S], b: &[S], e: &[S]) -> Result<Self> {
        let own = |v: &[S]| v.iter().map(|x| x.as_ref().to_string()).collect::<Vec<_>>();
        let p = Self { a: own(a), b: own(b), e: own(e) };
        let mut seen = HashSet::new();
        for l in p.a.iter().chain(&p.b).chain(&p.e) {
            if !seen.insert(l) {
                return Err(Error::OverlappingPartition(l.clone()));
            }
        }
        Ok(p)
    }

    /// Alice's, Bob's and Eve's registers of a layout.
    pub fn from_parties(layout: &RegisterLayout) -> Self {
        Self {
            a: layout.labels_of(Party::Alice),
            b: layout.labels_of(Party::Bob),
            e: layout.labels_of(Party::Eve),
        }
    }

    pub fn check(&self, layout: &RegisterLayout) -> Result<()> {
        for l in self.a.iter().chain(&self.b).chain(&self.e) {
            layout.index_of(l)?;
        }
        Ok(())
    }
}

/// `I(X:Y) = S(X) + S(Y) - S(XY)`.
pub fn mutual_information<S: AsRef<str>>(s: &DensityState, x: &[S], y: &[S]) -> Result<f64> {
    let x: Vec<String> = x.iter().map(|l| l.as_ref().to_string()).collect();
    let y: Vec<String> = y.iter().map(|l| l.as_ref().to_string()).collect();
    let p = Partition::new(&x, &y, &[])?;
    Ok(entropy(s, &p.a)? + entropy(s, &p.b)? - entropy(s, &union(&[&p.a, &p.b]))?)
}

/// `S(X|Y) = S(XY) - S(Y)`.
pub fn conditional_entropy<S: AsRef<str>>(s: &DensityState, x: &[S], y: &[S]) -> Result<f64> {
    let x: Vec<String> = x.iter().map(|l| l.as_ref().to_string()).collect();
    let y: Vec<String> = y.iter().map(|l| l.as_ref().to_string()).collect();
    Partition::new(&x, &y, &[])?;
    Ok(entropy(s, &union(&[&x, &y]))? - entropy(s, &y)?)
}

/// `I(A:B|E) = S(AE) + S(BE) - S(ABE) - S(E)`.
pub fn cqmi<S: AsRef<str>>(s: &DensityState, a: &[S], b: &[S], e: &[S]) -> Result<f64> {
    let p = Partition::new(a, b, e)?;
    cqmi_partition(s, &p)
}

pub fn cqmi_partition(s: &DensityState, p: &Partition) -> Result<f64> {
    p.check(s.layout())?;
    let abe = union(&[&p.a, &p.b, &p.e]);
    let reduced = s.partial_trace(&abe)?;
    let ae = union(&[&p.a, &p.e]);
    let be = union(&[&p.b, &p.e]);
    Ok(entropy(&reduced, &ae)? + entropy(&reduced, &be)? - shannon_bits(&reduced.spectrum())
        - entropy(&reduced, &p.e)?)
}

/// `M_I = I(A:B|E) / 2`.
pub fn m_i<S: AsRef<str>>(s: &DensityState, a: &[S], b: &[S], e: &[S]) -> Result<f64> {
    Ok(0.5 * cqmi(s, a, b, e)?)
}

/// `M_I` over the Alice/Bob/Eve party groups of the state's layout.
pub fn m_i_parties(s: &DensityState) -> Result<f64> {
    Ok(0.5 * cqmi_partition(s, &Partition::from_parties(s.layout()))?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub partition: Partition,
    pub s_a: f64,
    pub s_b: f64,
    pub s_e: f64,
    pub s_ab: f64,
    pub s_ae: f64,
    pub s_be: f64,
    pub s_abe: f64,
    /// `S(AB|E)`
    pub s_ab_given_e: f64,
    /// `S(A|E)`
    pub s_a_given_e: f64,
    pub i_a_b: f64,
    pub i_a_e: f64,
    pub i_b_e: f64,
    pub i_a_b_given_e: f64,
    pub m_i: f64,
}

impl EntropyReport {
    pub fn compute(s: &DensityState, p: &Partition) -> Result<Self> {
        p.check(s.layout())?;
        let ent = |parts: &[&[String]]| entropy(s, &union(parts));
        let (s_a, s_b, s_e) = (ent(&[&p.a])?, ent(&[&p.b])?, ent(&[&p.e])?);
        let (s_ab, s_ae, s_be) = (ent(&[&p.a, &p.b])?, ent(&[&p.a, &p.e])?, ent(&[&p.b, &p.e])?);
        let s_abe = ent(&[&p.a, &p.b, &p.e])?;
        let cq = s_ae + s_be - s_abe - s_e;
        Ok(Self {
            partition: p.clone(),
            s_a,
            s_b,
            s_e,
            s_ab,
            s_ae,
            s_be,
            s_abe,
            s_ab_given_e: s_abe - s_e,
            s_a_given_e: s_ae - s_e,
            i_a_b: s_a + s_b - s_ab,
            i_a_e: s_a + s_e - s_ae,
            i_b_e: s_b + s_e - s_be,
            i_a_b_given_e: cq,
            m_i: 0.5 * cq,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, CMatrix};
    use crate::sample;
    use crate::state::{PureState, Register};

    fn abe_layout() -> RegisterLayout {
        RegisterLayout::new(vec![
            Register::new("A", 2, Party::Alice),
            Register::new("B", 2, Party::Bob),
            Register::new("E", 2, Party::Eve),
        ])
        .unwrap()
    }

    fn ghz_diag() -> DensityState {
        let mut m = CMatrix::zeros(8, 8);
        m[(0, 0)] = c(0.5, 0.0);
        m[(7, 7)] = c(0.5, 0.0);
        DensityState::new(abe_layout(), m).unwrap()
    }

    #[test]
    fn maximally_mixed_qubit_has_one_bit() {
        let s = DensityState::maximally_mixed("A", 2, Party::Alice).unwrap();
        assert!((entropy(&s, &["A"]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pure_state_has_zero_entropy() {
        let p = sample::pure(&[("A", 2, Party::Alice), ("B", 3, Party::Bob)], 5).unwrap();
        assert!(entropy(&p.to_density(), &["A", "B"]).unwrap().abs() < 1e-10);
    }

    #[test]
    fn binary_entropy_quarter() {
        let s = DensityState::diagonal("A", Party::Alice, &[0.75, 0.25]).unwrap();
        assert!((entropy(&s, &["A"]).unwrap() - 0.811278).abs() < 1e-6);
    }

    #[test]
    fn ghz_diagonal_is_markov() {
        assert!(cqmi(&ghz_diag(), &["A"], &["B"], &["E"]).unwrap().abs() < 1e-10);
    }

    #[test]
    fn classical_correlation_with_mixed_e() {
        let mut m = CMatrix::zeros(4, 4);
        m[(0, 0)] = c(0.5, 0.0);
        m[(3, 3)] = c(0.5, 0.0);
        let ab = DensityState::new(
            RegisterLayout::new(vec![Register::new("A", 2, Party::Alice), Register::new("B", 2, Party::Bob)])
                .unwrap(),
            m,
        )
        .unwrap();
        let s = ab.tensor(&DensityState::maximally_mixed("E", 2, Party::Eve).unwrap()).unwrap();
        assert!((cqmi(&s, &["A"], &["B"], &["E"]).unwrap() - 1.0).abs() < 1e-10);
        assert!((m_i_parties(&s).unwrap() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn bell_with_pure_e() {
        let s = PureState::bell(("A", Party::Alice), ("B", Party::Bob))
            .unwrap()
            .to_density()
            .tensor(&DensityState::basis("E", 2, Party::Eve, 0).unwrap())
            .unwrap();
        assert!((cqmi(&s, &["A"], &["B"], &["E"]).unwrap() - 2.0).abs() < 1e-10);
        assert!((m_i(&s, &["A"], &["B"], &["E"]).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn product_state_has_zero_m_i() {
        let a = sample::density_hs(&[("A", 2, Party::Alice)], 1).unwrap();
        let b = sample::density_hs(&[("B", 2, Party::Bob)], 2).unwrap();
        let e = sample::density_hs(&[("E", 3, Party::Eve)], 3).unwrap();
        let s = a.tensor(&b).unwrap().tensor(&e).unwrap();
        assert!(m_i(&s, &["A"], &["B"], &["E"]).unwrap().abs() < 1e-10);
    }

    #[test]
    fn overlapping_partition_rejected() {
        let err = cqmi(&ghz_diag(), &["A"], &["A"], &["E"]).unwrap_err();
        assert!(matches!(err, Error::OverlappingPartition(_)));
    }

    #[test]
    fn symmetric_in_a_and_b() {
        let s = sample::density_hs(&[("A", 2, Party::Alice), ("B", 2, Party::Bob), ("E", 2, Party::Eve)], 4)
            .unwrap();
        let ab = cqmi(&s, &["A"], &["B"], &["E"]).unwrap();
        let ba = cqmi(&s, &["B"], &["A"], &["E"]).unwrap();
        assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn report_is_consistent() {
        let s = sample::density_hs(&[("A", 2, Party::Alice), ("B", 2, Party::Bob), ("E", 2, Party::Eve)], 6)
            .unwrap();
        let r = EntropyReport::compute(&s, &Partition::from_parties(s.layout())).unwrap();
        assert!((r.m_i * 2.0 - r.i_a_b_given_e).abs() < 1e-15);
        assert!(r.i_a_b >= -1e-9 && r.i_a_b_given_e >= -1e-9);
    }
}
