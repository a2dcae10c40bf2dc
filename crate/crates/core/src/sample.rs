//! Seeded random states, unitaries and isometries.
//!
//! Every sampler is a pure function of its seed (ChaCha8 stream), so fuzz
//! counterexamples and estimator restarts replay exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, CVector};
use crate::state::{DensityState, Party, PureState, Register, RegisterLayout};

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer over `(master, counter)`; used to give each worker
/// or restart its own stream.
pub fn derive_seed(master: u64, counter: u64) -> u64 {
    let mut z = master ^ counter.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn gaussian_complex<R: Rng + ?Sized>(rng: &mut R) -> num_complex::Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(re, im)
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    // column-major fill order is part of the determinism contract
    CMatrix::from_fn(rows, cols, |_, _| gaussian_complex(rng))
}

/// GUE-like Hermitian matrix with unit Frobenius norm.
pub fn hermitian_direction<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let g = gaussian_matrix(n, n, rng);
    let h = linalg::hermitize(&g);
    let norm = h.norm();
    if norm > 0.0 {
        h.unscale(norm)
    } else {
        h
    }
}

fn layout_of(regs: &[(&str, usize, Party)]) -> Result<RegisterLayout> {
    if regs.iter().any(|r| r.1 == 0) {
        return Err(Error::BadDims("register dimension must be positive".into()));
    }
    RegisterLayout::new(regs.iter().map(|&(l, d, p)| Register::new(l, d, p)).collect())
}

pub fn pure_with<R: Rng + ?Sized>(regs: &[(&str, usize, Party)], rng: &mut R) -> Result<PureState> {
    let layout = layout_of(regs)?;
    let d = layout.total_dim();
    let v = CVector::from_fn(d, |_, _| gaussian_complex(rng));
    PureState::normalized(layout, v)
}

pub fn pure(regs: &[(&str, usize, Party)], seed: u64) -> Result<PureState> {
    pure_with(regs, &mut rng(seed))
}

/// Hilbert-Schmidt measure: `G G† / Tr(G G†)` with square Gaussian `G`.
pub fn density_hs_with<R: Rng + ?Sized>(regs: &[(&str, usize, Party)], rng: &mut R) -> Result<DensityState> {
    let layout = layout_of(regs)?;
    let d = layout.total_dim();
    density_rank_with(layout, d, rng)
}

pub fn density_hs(regs: &[(&str, usize, Party)], seed: u64) -> Result<DensityState> {
    density_hs_with(regs, &mut rng(seed))
}

/// Induced measure with a `d x rank` Gaussian factor; rank-deficient when
/// `rank < d`.
pub fn density_rank_with<R: Rng + ?Sized>(layout: RegisterLayout, rank: usize, rng: &mut R) -> Result<DensityState> {
    let d = layout.total_dim();
    if rank == 0 {
        return Err(Error::BadDims("rank must be positive".into()));
    }
    let g = gaussian_matrix(d, rank, rng);
    let m = &g * g.adjoint();
    DensityState::from_unnormalized(layout, m)
}

pub fn unitary_with<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<CMatrix> {
    isometry_with(n, n, rng)
}

pub fn unitary(n: usize, seed: u64) -> Result<CMatrix> {
    unitary_with(n, &mut rng(seed))
}

/// `output x input` matrix `W` with `W†W = I`, from orthonormalized
/// Gaussian columns.
pub fn isometry_with<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Result<CMatrix> {
    if input == 0 || output < input {
        return Err(Error::BadDims(format!("isometry {input} -> {output} needs 0 < input <= output")));
    }
    loop {
        let g = gaussian_matrix(output, input, rng);
        if let Some(q) = linalg::orthonormalize_columns(&g) {
            return Ok(q);
        }
    }
}

pub fn isometry(input: usize, output: usize, seed: u64) -> Result<CMatrix> {
    isometry_with(input, output, &mut rng(seed))
}

/// Random probability vector (flat Dirichlet).
pub fn probabilities<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleKind {
    Pure,
    DensityHs,
    Unitary,
    Isometry,
}

#[derive(Debug, Clone)]
pub enum Sampled {
    Pure(PureState),
    Density(DensityState),
    Matrix(CMatrix),
}

/// Dispatcher over the samplers. State kinds take one qubit-labelled
/// register per entry of `dims` (`R0`, `R1`, ...); `Unitary` takes
/// `[n]`; `Isometry` takes `[input, output]`.
pub fn sample(kind: SampleKind, dims: &[usize], seed: u64) -> Result<Sampled> {
    let labels: Vec<String> = (0..dims.len()).map(|i| format!("R{i}")).collect();
    let regs: Vec<(&str, usize, Party)> =
        labels.iter().zip(dims).map(|(l, &d)| (l.as_str(), d, Party::Alice)).collect();
    match kind {
        SampleKind::Pure => pure(&regs, seed).map(Sampled::Pure),
        SampleKind::DensityHs => density_hs(&regs, seed).map(Sampled::Density),
        SampleKind::Unitary => match dims {
            [n] => unitary(*n, seed).map(Sampled::Matrix),
            _ => Err(Error::BadDims("unitary takes one dimension".into())),
        },
        SampleKind::Isometry => match dims {
            [i, o] => isometry(*i, *o, seed).map(Sampled::Matrix),
            _ => Err(Error::BadDims("isometry takes [input, output]".into())),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_is_deterministic() {
        let a = pure(&[("A", 2, Party::Alice)], 42).unwrap();
        let b = pure(&[("A", 2, Party::Alice)], 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hs_state_is_valid() {
        let s = density_hs(&[("A", 2, Party::Alice), ("B", 2, Party::Bob)], 7).unwrap();
        // re-validate through the checked constructor
        DensityState::new(s.layout().clone(), s.matrix().clone()).unwrap();
    }

    #[test]
    fn isometry_two_to_four() {
        let w = isometry(2, 4, 11).unwrap();
        assert!(linalg::max_abs(&(w.adjoint() * &w - linalg::identity(2))) < 1e-12);
    }

    #[test]
    fn isometry_rejects_shrinking() {
        assert!(matches!(isometry(4, 2, 1), Err(Error::BadDims(_))));
        assert!(matches!(sample(SampleKind::Isometry, &[3, 2], 1), Err(Error::BadDims(_))));
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_eq!(derive_seed(5, 3), derive_seed(5, 3));
    }
}
