//! Reference computations written directly from the definitions, sharing
//! no code with the library: explicit index loops for partial traces and
//! the real-symmetric embedding for spectra.
#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type M = DMatrix<Complex64>;

fn digits(mut i: usize, dims: &[usize]) -> Vec<usize> {
    let mut d = vec![0; dims.len()];
    for k in (0..dims.len()).rev() {
        d[k] = i % dims[k];
        i /= dims[k];
    }
    d
}

fn index(d: &[usize], dims: &[usize]) -> usize {
    d.iter().zip(dims).fold(0, |acc, (&x, &n)| acc * n + x)
}

/// `Tr_{not keep} rho`, `keep` in increasing order.
pub fn ptrace(rho: &M, dims: &[usize], keep: &[usize]) -> M {
    let rest: Vec<usize> = (0..dims.len()).filter(|k| !keep.contains(k)).collect();
    let kd: Vec<usize> = keep.iter().map(|&k| dims[k]).collect();
    let rd: Vec<usize> = rest.iter().map(|&k| dims[k]).collect();
    let (n, t): (usize, usize) = (kd.iter().product(), rd.iter().product());
    // full index of (kept digits, traced digits)
    let full = |a: usize, r: usize| {
        let mut d = vec![0; dims.len()];
        for (pos, x) in keep.iter().zip(digits(a, &kd)) {
            d[*pos] = x;
        }
        for (pos, x) in rest.iter().zip(digits(r, &rd)) {
            d[*pos] = x;
        }
        index(&d, dims)
    };
    let table: Vec<Vec<usize>> = (0..n).map(|a| (0..t).map(|r| full(a, r)).collect()).collect();
    M::from_fn(n, n, |a, b| (0..t).map(|r| rho[(table[a][r], table[b][r])]).sum())
}

pub fn projector(v: &[Complex64]) -> M {
    let n = v.len();
    M::from_fn(n, n, |i, j| v[i] * v[j].conj())
}

/// Eigenvalues of a Hermitian matrix via `[[X, -Y], [Y, X]]`, where each
/// appears twice.
pub fn eigenvalues(h: &M) -> Vec<f64> {
    let n = h.nrows();
    if n == 0 {
        return vec![];
    }
    let r = DMatrix::<f64>::from_fn(2 * n, 2 * n, |i, j| {
        let z = (h[(i % n, j % n)] + h[(j % n, i % n)].conj()) * 0.5;
        match (i < n, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    let mut v: Vec<f64> = r.symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v.into_iter().step_by(2).collect()
}

pub fn entropy_bits(h: &M) -> f64 {
    eigenvalues(h).into_iter().filter(|&x| x > 1e-14).map(|x| -x * x.log2()).sum()
}

/// `S(rho_keep)`; the empty set has entropy 0.
pub fn s(rho: &M, dims: &[usize], keep: &[usize]) -> f64 {
    if keep.is_empty() {
        return 0.0;
    }
    let mut k = keep.to_vec();
    k.sort();
    entropy_bits(&ptrace(rho, dims, &k))
}

pub fn union(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut v: Vec<usize> = a.iter().chain(b).copied().collect();
    v.sort();
    v.dedup();
    v
}

pub fn cqmi(rho: &M, dims: &[usize], a: &[usize], b: &[usize], e: &[usize]) -> f64 {
    s(rho, dims, &union(a, e)) + s(rho, dims, &union(b, e)) - s(rho, dims, &union(&union(a, b), e)) - s(rho, dims, e)
}

pub fn mutual(rho: &M, dims: &[usize], a: &[usize], b: &[usize]) -> f64 {
    s(rho, dims, a) + s(rho, dims, b) - s(rho, dims, &union(a, b))
}

pub fn h2(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
    }
}
