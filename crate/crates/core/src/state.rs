//! Multipartite density matrices with labelled, party-tagged registers.
//!
//! Matrices are stored in the big-endian register order of their layout:
//! the first register is the most significant digit of the basis index.
//! Values are immutable once built; every operation returns a new state.

use std::collections::HashSet;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, CVector, SUPPORT_TOL};

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-9;
pub const NORM_TOL: f64 = 1e-10;
pub const DEFAULT_DIM_BUDGET: usize = 4096;

/// Largest total dimension a dense state may have. `NMK_DIM_BUDGET`
/// overrides the default of 4096.
pub fn dim_budget() -> usize {
    static BUDGET: OnceLock<usize> = OnceLock::new();
    *BUDGET.get_or_init(|| {
        std::env::var("NMK_DIM_BUDGET")
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .filter(|&v| v > 0)
            .unwrap_or(DEFAULT_DIM_BUDGET)
    })
}

pub fn check_budget(dim: usize) -> Result<()> {
    let budget = dim_budget();
    if dim > budget {
        return Err(Error::BudgetExceeded { dim, budget });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Party {
    Alice,
    Bob,
    Eve,
    Reference,
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Party::Alice => "alice",
            Party::Bob => "bob",
            Party::Eve => "eve",
            Party::Reference => "reference",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Register {
    pub label: String,
    pub dim: usize,
    pub party: Party,
}

impl Register {
    pub fn new(label: impl Into<String>, dim: usize, party: Party) -> Self {
        Self { label: label.into(), dim, party }
    }
}

/// Ordered list of registers. Labels are unique and dimensions positive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RegisterLayout {
    registers: Vec<Register>,
}

impl<'de> Deserialize<'de> for RegisterLayout {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let registers = Vec::<Register>::deserialize(d)?;
        RegisterLayout::new(registers).map_err(serde::de::Error::custom)
    }
}

impl RegisterLayout {
    pub fn new(registers: Vec<Register>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &registers {
            if !seen.insert(r.label.as_str()) {
                return Err(Error::DuplicateLabel(r.label.clone()));
            }
            if r.dim == 0 {
                return Err(Error::BadDims(format!("register `{}` has dimension 0", r.label)));
            }
        }
        Ok(Self { registers })
    }

    pub fn empty() -> Self {
        Self { registers: Vec::new() }
    }

    pub fn registers(&self) -> &[Register] {
        &self.registers
    }

    pub fn len(&self) -> usize {
        self.registers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.registers.is_empty()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.registers.iter().map(|r| r.dim).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.registers.iter().map(|r| r.dim).product()
    }

    pub fn labels(&self) -> Vec<String> {
        self.registers.iter().map(|r| r.label.clone()).collect()
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.registers
            .iter()
            .position(|r| r.label == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn get(&self, label: &str) -> Result<&Register> {
        Ok(&self.registers[self.index_of(label)?])
    }

    pub fn contains(&self, label: &str) -> bool {
        self.registers.iter().any(|r| r.label == label)
    }

    /// Labels of all registers owned by `party`, in layout order.
    pub fn labels_of(&self, party: Party) -> Vec<String> {
        self.registers
            .iter()
            .filter(|r| r.party == party)
            .map(|r| r.label.clone())
            .collect()
    }

    /// Indices of `labels`, in the order given.
    pub fn indices<S: AsRef<str>>(&self, labels: &[S]) -> Result<Vec<usize>> {
        let mut seen = HashSet::new();
        labels
            .iter()
            .map(|l| {
                let l = l.as_ref();
                if !seen.insert(l.to_string()) {
                    return Err(Error::OverlappingPartition(l.to_string()));
                }
                self.index_of(l)
            })
            .collect()
    }

    pub fn dim_of<S: AsRef<str>>(&self, labels: &[S]) -> Result<usize> {
        Ok(self.indices(labels)?.iter().map(|&i| self.registers[i].dim).product())
    }

    pub fn concat(&self, other: &RegisterLayout) -> Result<RegisterLayout> {
        let mut regs = self.registers.clone();
        regs.extend(other.registers.iter().cloned());
        RegisterLayout::new(regs)
    }

    fn select(&self, idx: &[usize]) -> RegisterLayout {
        RegisterLayout { registers: idx.iter().map(|&i| self.registers[i].clone()).collect() }
    }

    fn with_party(&self, label: &str, party: Party) -> Result<RegisterLayout> {
        let i = self.index_of(label)?;
        let mut regs = self.registers.clone();
        regs[i].party = party;
        Ok(RegisterLayout { registers: regs })
    }
}

/// A validated density matrix over a register layout.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    layout: RegisterLayout,
    matrix: CMatrix,
}

impl DensityState {
    /// Validates the Hermitian, unit-trace and PSD invariants and the
    /// dimension budget.
    pub fn new(layout: RegisterLayout, matrix: CMatrix) -> Result<Self> {
        let d = layout.total_dim();
        check_budget(d)?;
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::InvalidState(format!(
                "matrix side: expected {d}x{d} for the layout, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let herm = linalg::max_abs(&(&matrix - matrix.adjoint()));
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("hermiticity: max |M - M^dag| = {herm:.3e}")));
        }
        let tr = linalg::trace(&matrix);
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("unit trace: trace = {:.12}", tr.re)));
        }
        let min_eig = linalg::eigvalsh(&matrix).last().copied().unwrap_or(0.0);
        if min_eig < -PSD_TOL {
            return Err(Error::InvalidState(format!(
                "positive semidefinite: minimum eigenvalue {min_eig:.3e}"
            )));
        }
        Ok(Self { layout, matrix })
    }

    /// Builds a state from parts known to satisfy the invariants, e.g. the
    /// output of a trace-preserving map applied to a valid state.
    pub(crate) fn from_parts(layout: RegisterLayout, matrix: CMatrix) -> Self {
        debug_assert_eq!(layout.total_dim(), matrix.nrows());
        Self { layout, matrix }
    }

    /// Normalizes a PSD matrix to unit trace and validates it.
    pub fn from_unnormalized(layout: RegisterLayout, matrix: CMatrix) -> Result<Self> {
        let tr = linalg::trace(&matrix).re;
        if tr <= 0.0 {
            return Err(Error::InvalidState("unit trace: trace is not positive".into()));
        }
        Self::new(layout, linalg::hermitize(&matrix).scale(1.0 / tr))
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Maximally mixed state on a single register.
    pub fn maximally_mixed(label: &str, dim: usize, party: Party) -> Result<Self> {
        let layout = RegisterLayout::new(vec![Register::new(label, dim, party)])?;
        Ok(Self::from_parts(layout, linalg::identity(dim).scale(1.0 / dim as f64)))
    }

    /// `|index><index|` on a single register.
    pub fn basis(label: &str, dim: usize, party: Party, index: usize) -> Result<Self> {
        PureState::basis(label, dim, party, index).map(|p| p.to_density())
    }

    /// Diagonal state with the given probabilities on a single register.
    pub fn diagonal(label: &str, party: Party, probs: &[f64]) -> Result<Self> {
        let layout = RegisterLayout::new(vec![Register::new(label, probs.len(), party)])?;
        let m = CMatrix::from_diagonal(&CVector::from_iterator(
            probs.len(),
            probs.iter().map(|&p| c(p, 0.0)),
        ));
        Self::new(layout, m)
    }

    /// Kronecker product; labels must be disjoint.
    pub fn tensor(&self, other: &DensityState) -> Result<DensityState> {
        let layout = self.layout.concat(&other.layout)?;
        check_budget(layout.total_dim())?;
        Ok(Self::from_parts(layout, linalg::kron(&self.matrix, &other.matrix)))
    }

    /// Reduced state on `keep`, kept registers in their original order.
    pub fn partial_trace<S: AsRef<str>>(&self, keep: &[S]) -> Result<DensityState> {
        let mut idx = self.layout.indices(keep)?;
        idx.sort_unstable();
        let m = linalg::partial_trace_matrix(&self.matrix, &self.layout.dims(), &idx);
        Ok(Self::from_parts(self.layout.select(&idx), m))
    }

    /// Traces out the listed registers.
    pub fn trace_out<S: AsRef<str>>(&self, drop: &[S]) -> Result<DensityState> {
        let dropped = self.layout.indices(drop)?;
        let keep: Vec<String> = self
            .layout
            .registers()
            .iter()
            .enumerate()
            .filter(|(i, _)| !dropped.contains(i))
            .map(|(_, r)| r.label.clone())
            .collect();
        self.partial_trace(&keep)
    }

    /// Reorders registers; `order` must name every register exactly once.
    pub fn permute<S: AsRef<str>>(&self, order: &[S]) -> Result<DensityState> {
        let idx = self.layout.indices(order)?;
        if idx.len() != self.layout.len() {
            return Err(Error::LayoutMismatch(format!(
                "permutation names {} of {} registers",
                idx.len(),
                self.layout.len()
            )));
        }
        let m = linalg::permute_matrix(&self.matrix, &self.layout.dims(), &idx);
        Ok(Self::from_parts(self.layout.select(&idx), m))
    }

    /// Fuses `labels` into one register placed where the first of them sits.
    pub fn merge<S: AsRef<str>>(&self, labels: &[S], new_label: &str, party: Party) -> Result<DensityState> {
        let idx = self.layout.indices(labels)?;
        if idx.is_empty() {
            return Err(Error::BadDims("nothing to merge".into()));
        }
        let first = *idx.iter().min().unwrap();
        let mut order: Vec<usize> = Vec::new();
        for i in 0..self.layout.len() {
            if i == first {
                order.extend(&idx);
            } else if !idx.contains(&i) {
                order.push(i);
            }
        }
        let m = linalg::permute_matrix(&self.matrix, &self.layout.dims(), &order);
        let merged_dim: usize = idx.iter().map(|&i| self.layout.registers[i].dim).product();
        let mut regs = Vec::new();
        for i in 0..self.layout.len() {
            if i == first {
                regs.push(Register::new(new_label, merged_dim, party));
            } else if !idx.contains(&i) {
                regs.push(self.layout.registers[i].clone());
            }
        }
        Ok(Self::from_parts(RegisterLayout::new(regs)?, m))
    }

    pub fn with_party(&self, label: &str, party: Party) -> Result<DensityState> {
        Ok(Self::from_parts(self.layout.with_party(label, party)?, self.matrix.clone()))
    }

    pub fn relabel(&self, label: &str, new_label: &str) -> Result<DensityState> {
        let i = self.layout.index_of(label)?;
        let mut regs = self.layout.registers.clone();
        regs[i].label = new_label.to_string();
        Ok(Self::from_parts(RegisterLayout::new(regs)?, self.matrix.clone()))
    }

    /// Eigenvalues, descending, with `[-PSD_TOL, 0)` clamped to zero.
    pub fn spectrum(&self) -> Vec<f64> {
        linalg::eigvalsh(&self.matrix)
            .into_iter()
            .map(|x| if x < 0.0 && x >= -PSD_TOL { 0.0 } else { x })
            .collect()
    }

    pub fn rank(&self) -> usize {
        self.spectrum().iter().filter(|&&x| x > SUPPORT_TOL).count()
    }

    /// Canonical purification with the reference register appended last.
    ///
    /// The reference has dimension equal to the rank. Eigenvectors are
    /// taken in descending eigenvalue order and each is rotated so that
    /// its first non-negligible amplitude is real and positive.
    pub fn purify(&self, ref_label: &str) -> Result<PureState> {
        let (vals, vecs) = linalg::eigh(&self.matrix);
        let support: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > SUPPORT_TOL).collect();
        let rank = support.len().max(1);
        let d = self.dim();
        let mut amps = CVector::zeros(d * rank);
        let total: f64 = support.iter().map(|&i| vals[i]).sum();
        for (r, &i) in support.iter().enumerate() {
            let col = vecs.column(i);
            let phase = col
                .iter()
                .find(|z| z.norm() > 1e-9)
                .map(|z| z.conj() / z.norm())
                .unwrap_or(linalg::ONE);
            let weight = (vals[i] / total).sqrt();
            for a in 0..d {
                amps[a * rank + r] = col[a] * phase * weight;
            }
        }
        let mut regs = self.layout.registers.clone();
        regs.push(Register::new(ref_label, rank, Party::Reference));
        PureState::new(RegisterLayout::new(regs)?, amps)
    }

    /// Half the trace norm of the difference.
    pub fn trace_distance(&self, other: &DensityState) -> Result<f64> {
        if self.layout != other.layout {
            return Err(Error::LayoutMismatch(format!(
                "{:?} vs {:?}",
                self.layout.labels(),
                other.layout.labels()
            )));
        }
        Ok((0.5 * linalg::trace_norm_hermitian(&(&self.matrix - &other.matrix))).clamp(0.0, 1.0))
    }

    /// Uhlmann fidelity `(Tr|sqrt(rho) sqrt(sigma)|)^2`.
    pub fn fidelity(&self, other: &DensityState) -> Result<f64> {
        if self.layout.dims() != other.layout.dims() {
            return Err(Error::LayoutMismatch("fidelity needs matching dimensions".into()));
        }
        let s = linalg::psd_sqrt(&self.matrix);
        let inner = &s * &other.matrix * &s;
        let root: f64 = linalg::eigvalsh(&inner).iter().map(|x| x.max(0.0).sqrt()).sum();
        Ok((root * root).clamp(0.0, 1.0))
    }

    /// Conjugates the whole matrix by a unitary of matching size.
    pub fn conjugate(&self, u: &CMatrix) -> Result<DensityState> {
        if u.nrows() != self.dim() || u.ncols() != self.dim() {
            return Err(Error::DimensionMismatch("unitary size".into()));
        }
        Ok(Self::from_parts(self.layout.clone(), u * &self.matrix * u.adjoint()))
    }

    /// Mixture `sum_i w_i rho_i` of states sharing a layout.
    pub fn mixture(parts: &[(f64, &DensityState)]) -> Result<DensityState> {
        let (_, first) = parts.first().ok_or_else(|| Error::BadProbabilities("empty mixture".into()))?;
        let total: f64 = parts.iter().map(|(w, _)| w).sum();
        if parts.iter().any(|(w, _)| *w < 0.0) || (total - 1.0).abs() > 1e-10 {
            return Err(Error::BadProbabilities(format!("weights sum to {total}")));
        }
        let mut m = CMatrix::zeros(first.dim(), first.dim());
        for (w, s) in parts {
            if s.layout != first.layout {
                return Err(Error::LayoutMismatch("mixture components differ in layout".into()));
            }
            m += s.matrix.scale(*w);
        }
        Ok(Self::from_parts(first.layout.clone(), m))
    }
}

/// A unit vector over a register layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    layout: RegisterLayout,
    amplitudes: CVector,
}

impl PureState {
    pub fn new(layout: RegisterLayout, amplitudes: CVector) -> Result<Self> {
        check_budget(layout.total_dim())?;
        if amplitudes.len() != layout.total_dim() {
            return Err(Error::InvalidState(format!(
                "vector length: expected {}, got {}",
                layout.total_dim(),
                amplitudes.len()
            )));
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidState(format!("unit norm: norm = {norm:.12}")));
        }
        Ok(Self { layout, amplitudes })
    }

    pub fn normalized(layout: RegisterLayout, amplitudes: CVector) -> Result<Self> {
        let n = amplitudes.norm();
        if n < 1e-300 {
            return Err(Error::InvalidState("unit norm: zero vector".into()));
        }
        Self::new(layout, amplitudes.unscale(n))
    }

    pub fn basis(label: &str, dim: usize, party: Party, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::BadDims(format!("basis index {index} >= dim {dim}")));
        }
        let layout = RegisterLayout::new(vec![Register::new(label, dim, party)])?;
        let mut v = CVector::zeros(dim);
        v[index] = linalg::ONE;
        Self::new(layout, v)
    }

    /// `(|00> + |11>)/sqrt(2)` on two labelled qubits.
    pub fn bell(a: (&str, Party), b: (&str, Party)) -> Result<Self> {
        let layout = RegisterLayout::new(vec![Register::new(a.0, 2, a.1), Register::new(b.0, 2, b.1)])?;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self::new(layout, CVector::from_vec(vec![c(s, 0.0), linalg::ZERO, linalg::ZERO, c(s, 0.0)]))
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn to_density(&self) -> DensityState {
        let v = &self.amplitudes;
        DensityState::from_parts(self.layout.clone(), v * v.adjoint())
    }

    pub fn tensor(&self, other: &PureState) -> Result<PureState> {
        let layout = self.layout.concat(&other.layout)?;
        check_budget(layout.total_dim())?;
        Ok(Self { layout, amplitudes: linalg::kron_vec(&self.amplitudes, &other.amplitudes) })
    }

    pub fn permute<S: AsRef<str>>(&self, order: &[S]) -> Result<PureState> {
        let idx = self.layout.indices(order)?;
        if idx.len() != self.layout.len() {
            return Err(Error::LayoutMismatch("permutation must name every register".into()));
        }
        let v = linalg::permute_vector(&self.amplitudes, &self.layout.dims(), &idx);
        Ok(Self { layout: self.layout.select(&idx), amplitudes: v })
    }

    /// Spectrum of the reduced state on `keep`.
    pub fn reduced_spectrum<S: AsRef<str>>(&self, keep: &[S]) -> Result<Vec<f64>> {
        let idx = self.layout.indices(keep)?;
        Ok(linalg::pure_reduced_spectrum(&self.amplitudes, &self.layout.dims(), &idx))
    }

    /// `|<self|other>|^2`.
    pub fn overlap(&self, other: &PureState) -> f64 {
        self.amplitudes.dotc(&other.amplitudes).norm_sqr()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample;

    fn qubit(label: &str, party: Party, i: usize) -> DensityState {
        DensityState::basis(label, 2, party, i).unwrap()
    }

    #[test]
    fn tensor_of_basis_states() {
        let s = qubit("A", Party::Alice, 0).tensor(&qubit("B", Party::Bob, 0)).unwrap();
        assert_eq!(s.matrix()[(0, 0)], linalg::ONE);
        assert!(linalg::trace(s.matrix()).re == 1.0);
    }

    #[test]
    fn tensor_rejects_duplicate_labels() {
        let a = qubit("A", Party::Alice, 0);
        assert!(matches!(a.tensor(&a), Err(Error::DuplicateLabel(_))));
    }

    #[test]
    fn tensor_of_maximally_mixed() {
        let a = DensityState::maximally_mixed("A", 2, Party::Alice).unwrap();
        let b = DensityState::maximally_mixed("B", 2, Party::Bob).unwrap();
        let ab = a.tensor(&b).unwrap();
        assert!(linalg::max_abs(&(ab.matrix() - linalg::identity(4).scale(0.25))) < 1e-15);
    }

    #[test]
    fn bell_marginal_is_maximally_mixed() {
        let phi = PureState::bell(("A", Party::Alice), ("B", Party::Bob)).unwrap().to_density();
        let a = phi.partial_trace(&["A"]).unwrap();
        assert!(linalg::max_abs(&(a.matrix() - linalg::identity(2).scale(0.5))) < 1e-15);
    }

    #[test]
    fn ghz_diagonal_trace_e() {
        let mut m = CMatrix::zeros(8, 8);
        m[(0, 0)] = c(0.5, 0.0);
        m[(7, 7)] = c(0.5, 0.0);
        let layout = RegisterLayout::new(vec![
            Register::new("A", 2, Party::Alice),
            Register::new("B", 2, Party::Bob),
            Register::new("E", 2, Party::Eve),
        ])
        .unwrap();
        let s = DensityState::new(layout, m).unwrap();
        let ab = s.partial_trace(&["A", "B"]).unwrap();
        let mut expect = CMatrix::zeros(4, 4);
        expect[(0, 0)] = c(0.5, 0.0);
        expect[(3, 3)] = c(0.5, 0.0);
        assert!(linalg::max_abs(&(ab.matrix() - expect)) < 1e-15);
    }

    #[test]
    fn partial_trace_unknown_label() {
        let a = qubit("A", Party::Alice, 0);
        assert!(matches!(a.partial_trace(&["Z"]), Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn partial_trace_of_product_returns_factor() {
        let a = sample::density_hs(&[("A", 2, Party::Alice)], 3).unwrap();
        let b = sample::density_hs(&[("B", 3, Party::Bob)], 4).unwrap();
        let e = sample::density_hs(&[("E", 2, Party::Eve)], 5).unwrap();
        let abe = a.tensor(&b).unwrap().tensor(&e).unwrap();
        let back = abe.partial_trace(&["B"]).unwrap();
        assert!(linalg::max_abs(&(back.matrix() - b.matrix())) < 1e-12);
    }

    #[test]
    fn purify_maximally_mixed_qubit() {
        let s = DensityState::maximally_mixed("A", 2, Party::Alice).unwrap();
        let p = s.purify("R").unwrap();
        assert_eq!(p.layout().get("R").unwrap().dim, 2);
        let back = p.to_density().partial_trace(&["A"]).unwrap();
        assert!(back.trace_distance(&s).unwrap() < 1e-12);
        // Bell-type: reference marginal also maximally mixed
        let spec = p.reduced_spectrum(&["R"]).unwrap();
        assert!((spec[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn purify_pure_input_has_trivial_reference() {
        let s = qubit("A", Party::Alice, 1);
        let p = s.purify("R").unwrap();
        assert_eq!(p.layout().get("R").unwrap().dim, 1);
    }

    #[test]
    fn purify_rank3_qutrit_round_trip() {
        let s = sample::density_hs(&[("A", 3, Party::Alice)], 17).unwrap();
        let p = s.purify("R").unwrap();
        assert_eq!(p.layout().get("R").unwrap().dim, 3);
        let back = p.to_density().partial_trace(&["A"]).unwrap();
        assert!(back.trace_distance(&s).unwrap() < 1e-10);
    }

    #[test]
    fn purify_is_deterministic() {
        let s = sample::density_hs(&[("A", 2, Party::Alice), ("B", 2, Party::Bob)], 9).unwrap();
        assert_eq!(s.purify("R").unwrap(), s.purify("R").unwrap());
    }

    #[test]
    fn trace_distance_examples() {
        let z0 = qubit("A", Party::Alice, 0);
        let z1 = qubit("A", Party::Alice, 1);
        let mm = DensityState::maximally_mixed("A", 2, Party::Alice).unwrap();
        assert!(z0.trace_distance(&z0).unwrap() < 1e-15);
        assert!((z0.trace_distance(&z1).unwrap() - 1.0).abs() < 1e-12);
        assert!((z0.trace_distance(&mm).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn trace_distance_layout_mismatch() {
        let a = qubit("A", Party::Alice, 0);
        let b = qubit("B", Party::Bob, 0);
        assert!(matches!(a.trace_distance(&b), Err(Error::LayoutMismatch(_))));
    }

    #[test]
    fn validation_names_invariant() {
        let layout = RegisterLayout::new(vec![Register::new("A", 2, Party::Alice)]).unwrap();
        let m = CMatrix::from_diagonal(&CVector::from_vec(vec![c(0.7, 0.0), c(0.7, 0.0)]));
        let err = DensityState::new(layout.clone(), m).unwrap_err().to_string();
        assert!(err.contains("unit trace"), "{err}");
        let m = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.5, 0.0), c(-0.5, 0.0)]));
        let err = DensityState::new(layout.clone(), m).unwrap_err().to_string();
        assert!(err.contains("positive semidefinite"), "{err}");
        let mut m = CMatrix::from_diagonal(&CVector::from_vec(vec![c(0.5, 0.0), c(0.5, 0.0)]));
        m[(0, 1)] = c(0.1, 0.0);
        let err = DensityState::new(layout, m).unwrap_err().to_string();
        assert!(err.contains("hermiticity"), "{err}");
    }

    #[test]
    fn merge_and_permute() {
        let s = sample::density_hs(&[("A", 2, Party::Alice), ("B", 3, Party::Bob), ("C", 2, Party::Eve)], 2)
            .unwrap();
        let p = s.permute(&["C", "A", "B"]).unwrap();
        let back = p.permute(&["A", "B", "C"]).unwrap();
        assert!(linalg::max_abs(&(back.matrix() - s.matrix())) < 1e-15);
        let m = s.merge(&["A", "C"], "AC", Party::Alice).unwrap();
        assert_eq!(m.layout().dims(), vec![4, 3]);
        let direct = s.permute(&["A", "C", "B"]).unwrap();
        assert!(linalg::max_abs(&(m.matrix() - direct.matrix())) < 1e-15);
    }
}
