//! Dense complex linear-algebra helpers shared by the state, channel and
//! estimator modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Eigenvalues below this are treated as zero when ranks and supports are taken.
pub const SUPPORT_TOL: f64 = 1e-12;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn dagger(m: &CMatrix) -> CMatrix {
    m.adjoint()
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// Kronecker product, first factor most significant.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn kron_vec(a: &CVector, b: &CVector) -> CVector {
    a.kronecker(b)
}

/// `(M + M†)/2`.
pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Spectral decomposition of a Hermitian matrix with eigenvalues sorted in
/// descending order. Column `i` of the returned matrix is the eigenvector
/// of eigenvalue `i`.
pub fn eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    // diagonal input: keep the computational basis inside degenerate
    // eigenspaces instead of whatever rotation the iterative solver returns
    if (0..n).all(|j| (0..n).all(|i| i == j || m[(i, j)] == ZERO)) {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| m[(j, j)].re.total_cmp(&m[(i, i)].re));
        let values = order.iter().map(|&i| m[(i, i)].re).collect();
        let vectors = CMatrix::from_fn(n, n, |i, j| if i == order[j] { ONE } else { ZERO });
        return (values, vectors);
    }
    let (raw_values, raw_vectors) = raw_eigh(&hermitize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| raw_values[j].total_cmp(&raw_values[i]));
    let values = order.iter().map(|&i| raw_values[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &raw_vectors.column(src));
    }
    (values, vectors)
}

fn finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// Shifts tried when the complex solver breaks down; it occasionally
/// returns NaN on matrices with many exact zeros, and a shift moves it off
/// the bad path without changing eigenvectors.
const SHIFTS: [f64; 3] = [0.5, 1.0, 0.37];

/// Unsorted eigenpairs of a Hermitian matrix, with fallbacks for solver
/// breakdowns.
fn raw_eigh(h: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = h.clone().symmetric_eigen();
    if finite(eig.eigenvalues.as_slice()) && eig.eigenvectors.iter().all(|z| z.is_finite()) {
        return (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors);
    }
    let n = h.nrows();
    for c in SHIFTS {
        let eig = (h + identity(n).scale(c)).symmetric_eigen();
        if finite(eig.eigenvalues.as_slice()) && eig.eigenvectors.iter().all(|z| z.is_finite()) {
            return (eig.eigenvalues.iter().map(|x| x - c).collect(), eig.eigenvectors);
        }
    }
    real_embedding_eigh(h)
}

/// `H = X + iY` as the real symmetric `[[X, -Y], [Y, X]]`: every eigenvalue
/// appears twice, and `(x; y)` maps to the eigenvector `x + iy`. One
/// vector per pair is kept by Gram-Schmidt.
fn real_embedding_eigh(h: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = h.nrows();
    let r = DMatrix::<f64>::from_fn(2 * n, 2 * n, |i, j| {
        let z = h[(i % n, j % n)];
        match (i < n, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    let eig = r.symmetric_eigen();
    let mut order: Vec<usize> = (0..2 * n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let mut values = Vec::with_capacity(n);
    let mut vectors = CMatrix::zeros(n, n);
    for &src in &order {
        if values.len() == n {
            break;
        }
        let col = eig.eigenvectors.column(src);
        let mut v = CVector::from_fn(n, |i, _| c(col[i], col[i + n]));
        for j in 0..values.len() {
            let proj = vectors.column(j).dotc(&v);
            v -= vectors.column(j) * proj;
        }
        let norm = v.norm();
        if norm > 0.5 {
            vectors.set_column(values.len(), &v.unscale(norm));
            values.push(eig.eigenvalues[src]);
        }
    }
    assert_eq!(values.len(), n, "real embedding lost eigenvectors");
    (values, vectors)
}

/// Eigenvalues only, descending.
pub fn eigvalsh(m: &CMatrix) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let h = hermitize(m);
    let mut v: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    if !finite(&v) {
        v = raw_eigh(&h).0;
    }
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Applies `f` to the spectrum of a Hermitian matrix.
pub fn hermitian_fn(m: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let (vals, vecs) = eigh(m);
    let n = m.nrows();
    let mut scaled = vecs.clone();
    for (j, &lam) in vals.iter().enumerate() {
        let s = f(lam);
        for i in 0..n {
            scaled[(i, j)] *= s;
        }
    }
    scaled * vecs.adjoint()
}

/// PSD square root; negative round-off is clamped to zero.
pub fn psd_sqrt(m: &CMatrix) -> CMatrix {
    hermitian_fn(m, |x| x.max(0.0).sqrt())
}

/// Pseudo-inverse square root on the support of a PSD matrix.
pub fn psd_inv_sqrt(m: &CMatrix) -> CMatrix {
    hermitian_fn(m, |x| if x > SUPPORT_TOL { 1.0 / x.sqrt() } else { 0.0 })
}

/// Trace norm `Tr|M|` of a Hermitian matrix.
pub fn trace_norm_hermitian(m: &CMatrix) -> f64 {
    eigvalsh(m).iter().map(|x| x.abs()).sum()
}

/// Unitary Cayley transform `(I - iX/2)^{-1}(I + iX/2)` of a Hermitian `X`.
pub fn cayley(x: &CMatrix) -> CMatrix {
    let n = x.nrows();
    let half_i = c(0.0, 0.5);
    let plus = identity(n) + x.map(|z| z * half_i);
    let minus = identity(n) - x.map(|z| z * half_i);
    let inv = minus
        .lu()
        .try_inverse()
        .expect("I - iX/2 is invertible for Hermitian X");
    inv * plus
}

/// Modified Gram-Schmidt on the columns of `m`. Returns `None` if the
/// columns are numerically dependent.
pub fn orthonormalize_columns(m: &CMatrix) -> Option<CMatrix> {
    let mut q = m.clone();
    for j in 0..q.ncols() {
        for i in 0..j {
            let proj = q.column(i).dotc(&q.column(j));
            let qi = q.column(i).clone_owned();
            let mut col = q.column_mut(j);
            col -= qi * proj;
        }
        let norm = q.column(j).norm();
        if norm < 1e-12 {
            return None;
        }
        let mut col = q.column_mut(j);
        col /= c(norm, 0.0);
    }
    Some(q)
}

/// Mixed-radix strides for big-endian register order.
pub fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

/// For a register permutation `order` (new position -> old register),
/// returns `map[new_index] = old_index` over the full product space.
pub fn permutation_map(dims: &[usize], order: &[usize]) -> Vec<usize> {
    let total: usize = dims.iter().product();
    let old_strides = strides(dims);
    let new_dims: Vec<usize> = order.iter().map(|&o| dims[o]).collect();
    let mut map = vec![0usize; total];
    let mut digits = vec![0usize; new_dims.len()];
    for slot in map.iter_mut() {
        *slot = digits
            .iter()
            .zip(order)
            .map(|(&d, &o)| d * old_strides[o])
            .sum();
        for pos in (0..digits.len()).rev() {
            digits[pos] += 1;
            if digits[pos] < new_dims[pos] {
                break;
            }
            digits[pos] = 0;
        }
    }
    map
}

pub fn permute_vector(v: &CVector, dims: &[usize], order: &[usize]) -> CVector {
    let map = permutation_map(dims, order);
    CVector::from_iterator(map.len(), map.iter().map(|&i| v[i]))
}

pub fn permute_matrix(m: &CMatrix, dims: &[usize], order: &[usize]) -> CMatrix {
    let map = permutation_map(dims, order);
    let n = map.len();
    CMatrix::from_fn(n, n, |i, j| m[(map[i], map[j])])
}

/// Partial trace keeping the registers in `keep` (indices into `dims`, in
/// the order given).
pub fn partial_trace_matrix(m: &CMatrix, dims: &[usize], keep: &[usize]) -> CMatrix {
    let traced: Vec<usize> = (0..dims.len()).filter(|i| !keep.contains(i)).collect();
    let mut order = keep.to_vec();
    order.extend(&traced);
    let dk: usize = keep.iter().map(|&i| dims[i]).product();
    let dt: usize = traced.iter().map(|&i| dims[i]).product();
    let map = permutation_map(dims, &order);
    let mut out = CMatrix::zeros(dk, dk);
    for i in 0..dk {
        for j in 0..dk {
            let mut acc = ZERO;
            for t in 0..dt {
                acc += m[(map[i * dt + t], map[j * dt + t])];
            }
            out[(i, j)] = acc;
        }
    }
    out
}

/// Reduced density matrix `Tr_rest |v><v|` on `keep`, in the order given.
pub fn pure_reduced_matrix(v: &CVector, dims: &[usize], keep: &[usize]) -> CMatrix {
    let traced: Vec<usize> = (0..dims.len()).filter(|i| !keep.contains(i)).collect();
    let dk: usize = keep.iter().map(|&i| dims[i]).product();
    let dt: usize = traced.iter().map(|&i| dims[i]).product();
    let mut order = keep.to_vec();
    order.extend(&traced);
    let map = permutation_map(dims, &order);
    let m = CMatrix::from_fn(dk, dt, |i, j| v[map[i * dt + j]]);
    &m * m.adjoint()
}

/// Reduced density matrix of a pure vector on the registers `keep`.
/// Uses the smaller of `M M†` and `(M† M)^T` and is intended for spectra.
pub fn pure_reduced_spectrum(v: &CVector, dims: &[usize], keep: &[usize]) -> Vec<f64> {
    let traced: Vec<usize> = (0..dims.len()).filter(|i| !keep.contains(i)).collect();
    let dk: usize = keep.iter().map(|&i| dims[i]).product();
    let dt: usize = traced.iter().map(|&i| dims[i]).product();
    if dk == 1 || dt == 1 {
        return vec![v.norm_squared()];
    }
    let mut order = keep.to_vec();
    order.extend(&traced);
    let map = permutation_map(dims, &order);
    let m = CMatrix::from_fn(dk, dt, |i, j| v[map[i * dt + j]]);
    if dk <= dt {
        eigvalsh(&(&m * m.adjoint()))
    } else {
        eigvalsh(&(m.adjoint() * &m))
    }
}
