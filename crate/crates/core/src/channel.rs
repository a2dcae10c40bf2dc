//! CPTP maps in Kraus form and their action on registers of a state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix};
use crate::state::{check_budget, DensityState, Register, RegisterLayout};

pub const COMPLETENESS_TOL: f64 = 1e-9;
pub const INVERSE_TOL: f64 = 1e-8;

/// Kraus operators `K_i` (output side x input side) with an optional
/// declared inverse channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMap {
    kraus: Vec<CMatrix>,
    inverse: Option<Box<ChannelMap>>,
}

impl ChannelMap {
    /// Checks shape agreement and `sum K†K = I`.
    pub fn new(kraus: Vec<CMatrix>) -> Result<Self> {
        let first = kraus.first().ok_or_else(|| Error::InvalidChannel("no Kraus operators".into()))?;
        let (s, r) = first.shape();
        if kraus.iter().any(|k| k.shape() != (s, r)) {
            return Err(Error::InvalidChannel("Kraus operators differ in shape".into()));
        }
        let mut sum = CMatrix::zeros(r, r);
        for k in &kraus {
            sum += k.adjoint() * k;
        }
        let dev = linalg::max_abs(&(sum - linalg::identity(r)));
        if dev > COMPLETENESS_TOL {
            return Err(Error::InvalidChannel(format!("completeness: max |sum K^dag K - I| = {dev:.3e}")));
        }
        Ok(Self { kraus, inverse: None })
    }

    /// Attaches an inverse and verifies `inverse o self = id` on every
    /// matrix unit of the input space.
    pub fn with_inverse(mut self, inverse: ChannelMap) -> Result<Self> {
        if inverse.input_dim() != self.output_dim() || inverse.output_dim() != self.input_dim() {
            return Err(Error::IrreversibleEveOp("declared inverse has the wrong shape".into()));
        }
        let r = self.input_dim();
        for i in 0..r {
            for j in 0..r {
                let mut unit = CMatrix::zeros(r, r);
                unit[(i, j)] = linalg::ONE;
                let back = inverse.apply_matrix(&self.apply_matrix(&unit));
                let dev = linalg::max_abs(&(back - &unit));
                if dev > INVERSE_TOL {
                    return Err(Error::IrreversibleEveOp(format!(
                        "inverse o channel deviates from identity by {dev:.3e} on |{i}><{j}|"
                    )));
                }
            }
        }
        self.inverse = Some(Box::new(inverse));
        Ok(self)
    }

    pub fn kraus(&self) -> &[CMatrix] {
        &self.kraus
    }

    pub fn inverse(&self) -> Option<&ChannelMap> {
        self.inverse.as_deref()
    }

    pub fn input_dim(&self) -> usize {
        self.kraus[0].ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.kraus[0].nrows()
    }

    pub fn identity(d: usize) -> Self {
        let id = Self { kraus: vec![linalg::identity(d)], inverse: None };
        Self { inverse: Some(Box::new(id.clone())), ..id }
    }

    /// Conjugation by a unitary, with its adjoint declared as inverse.
    pub fn unitary(u: CMatrix) -> Result<Self> {
        let inv = Self::new(vec![u.adjoint()])?;
        Self::new(vec![u])?.with_inverse(inv)
    }

    /// Conjugation by an isometry `W` (output x input). The declared
    /// inverse maps the range back and spreads the orthogonal complement
    /// uniformly so that it is trace preserving.
    pub fn isometry(w: CMatrix) -> Result<Self> {
        let (s, r) = w.shape();
        let forward = Self::new(vec![w.clone()])?;
        let proj_complement = linalg::identity(s) - &w * w.adjoint();
        let mut inv_kraus = vec![w.adjoint()];
        if s > r {
            // K_{j,b} = |j><b| P_perp / sqrt(r), so sum K^dag K = P_perp.
            let scale = 1.0 / (r as f64).sqrt();
            for j in 0..r {
                for basis in 0..s {
                    let mut k = CMatrix::zeros(r, s);
                    for col in 0..s {
                        k[(j, col)] = proj_complement[(basis, col)] * c(scale, 0.0);
                    }
                    inv_kraus.push(k);
                }
            }
        }
        let inverse = Self::new(inv_kraus)?;
        forward.with_inverse(inverse)
    }

    /// Mixture of unitaries `sum_i p_i U_i . U_i†` (no declared inverse).
    pub fn random_unitary(parts: &[(f64, CMatrix)]) -> Result<Self> {
        let kraus = parts.iter().map(|(p, u)| u.scale(p.sqrt())).collect();
        Self::new(kraus)
    }

    /// Dephasing in the computational basis.
    pub fn dephasing(d: usize) -> Self {
        let kraus = (0..d)
            .map(|i| {
                let mut k = CMatrix::zeros(d, d);
                k[(i, i)] = linalg::ONE;
                k
            })
            .collect();
        Self { kraus, inverse: None }
    }

    /// Discards a `d`-dimensional input (output dimension 1).
    pub fn discard(d: usize) -> Self {
        let kraus = (0..d)
            .map(|i| {
                let mut k = CMatrix::zeros(1, d);
                k[(0, i)] = linalg::ONE;
                k
            })
            .collect();
        Self { kraus, inverse: None }
    }

    /// Prepares a fixed state from nothing (input dimension 1).
    pub fn prepare(state: &DensityState) -> Self {
        let (vals, vecs) = linalg::eigh(state.matrix());
        let kraus = vals
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > linalg::SUPPORT_TOL)
            .map(|(i, &v)| vecs.column(i).scale(v.sqrt()).into_owned())
            .map(|col| CMatrix::from_column_slice(col.len(), 1, col.as_slice()))
            .collect::<Vec<_>>();
        let norm: f64 = vals.iter().filter(|&&v| v > linalg::SUPPORT_TOL).sum();
        let kraus = kraus.into_iter().map(|k| k.unscale(norm.sqrt())).collect();
        Self { kraus, inverse: None }
    }

    /// Stinespring isometry `V = sum_i K_i (x) |i>` with the environment as
    /// the least significant factor: shape `(output * n) x input`.
    pub fn stinespring(&self) -> CMatrix {
        let n = self.kraus.len();
        let (s, r) = self.kraus[0].shape();
        let mut v = CMatrix::zeros(s * n, r);
        for (i, k) in self.kraus.iter().enumerate() {
            for o in 0..s {
                for a in 0..r {
                    v[(o * n + i, a)] = k[(o, a)];
                }
            }
        }
        v
    }

    pub fn apply_matrix(&self, x: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.output_dim(), self.output_dim());
        for k in &self.kraus {
            out += k * x * k.adjoint();
        }
        out
    }

    /// `other o self`.
    pub fn then(&self, other: &ChannelMap) -> Result<ChannelMap> {
        if other.input_dim() != self.output_dim() {
            return Err(Error::DimensionMismatch("channel composition".into()));
        }
        let mut kraus = Vec::new();
        for b in &other.kraus {
            for a in &self.kraus {
                kraus.push(b * a);
            }
        }
        ChannelMap::new(kraus)
    }

    pub fn to_spec(&self) -> ChannelSpec {
        ChannelSpec {
            kraus: self.kraus.iter().map(ComplexMatrixJson::from).collect(),
            inverse: self.inverse.as_ref().map(|i| Box::new(i.to_spec())),
        }
    }
}

/// Applies `channel` to the registers `on`, replacing them with the
/// registers of `out`. Output registers take the position of the first
/// input register (or are appended when `on` is empty); all other
/// registers are untouched.
pub fn apply_channel<S: AsRef<str>>(
    state: &DensityState,
    channel: &ChannelMap,
    on: &[S],
    out: &RegisterLayout,
) -> Result<DensityState> {
    let layout = state.layout();
    let on_idx = layout.indices(on)?;
    let din: usize = on_idx.iter().map(|&i| layout.registers()[i].dim).product();
    if din != channel.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "channel input dimension {} vs registers of dimension {din}",
            channel.input_dim()
        )));
    }
    if out.total_dim() != channel.output_dim() {
        return Err(Error::DimensionMismatch(format!(
            "channel output dimension {} vs output layout of dimension {}",
            channel.output_dim(),
            out.total_dim()
        )));
    }
    let rest_idx: Vec<usize> = (0..layout.len()).filter(|i| !on_idx.contains(i)).collect();
    for r in out.registers() {
        if rest_idx.iter().any(|&i| layout.registers()[i].label == r.label) {
            return Err(Error::DuplicateLabel(r.label.clone()));
        }
    }
    let dr: usize = rest_idx.iter().map(|&i| layout.registers()[i].dim).product();
    let dout = channel.output_dim();
    check_budget(dr * dout)?;

    // Bring the state to (rest, on) so the channel acts on contiguous blocks.
    let mut order = rest_idx.clone();
    order.extend(&on_idx);
    let m = linalg::permute_matrix(state.matrix(), &layout.dims(), &order);
    let mut result = CMatrix::zeros(dr * dout, dr * dout);
    for a in 0..dr {
        for b in 0..dr {
            let block = m.view((a * din, b * din), (din, din)).into_owned();
            let mapped = channel.apply_matrix(&block);
            result.view_mut((a * dout, b * dout), (dout, dout)).copy_from(&mapped);
        }
    }

    let mut regs: Vec<Register> = rest_idx.iter().map(|&i| layout.registers()[i].clone()).collect();
    regs.extend(out.registers().iter().cloned());
    let staged = DensityState::from_parts(RegisterLayout::new(regs)?, result);

    // Final order: out registers where the first input register sat.
    let insert_at = on_idx.iter().min().copied().unwrap_or(layout.len());
    let mut final_labels = Vec::new();
    for i in 0..layout.len() {
        if i == insert_at {
            final_labels.extend(out.labels());
        }
        if !on_idx.contains(&i) {
            final_labels.push(layout.registers()[i].label.clone());
        }
    }
    if insert_at == layout.len() {
        final_labels.extend(out.labels());
    }
    staged.permute(&final_labels)
}

/// JSON form of a complex matrix: row-major real and imaginary parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrixJson {
    pub re: Vec<Vec<f64>>,
    #[serde(default)]
    pub im: Vec<Vec<f64>>,
}

impl From<&CMatrix> for ComplexMatrixJson {
    fn from(m: &CMatrix) -> Self {
        let rows = |f: fn(&num_complex::Complex64) -> f64| {
            (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect()).collect()
        };
        Self { re: rows(|z| z.re), im: rows(|z| z.im) }
    }
}

impl ComplexMatrixJson {
    pub fn to_matrix(&self) -> Result<CMatrix> {
        let rows = self.re.len();
        let cols = self.re.first().map_or(0, Vec::len);
        if self.re.iter().any(|r| r.len() != cols) {
            return Err(Error::BadDims("ragged real part".into()));
        }
        let has_im = !self.im.is_empty();
        if has_im && (self.im.len() != rows || self.im.iter().any(|r| r.len() != cols)) {
            return Err(Error::BadDims("imaginary part shape differs from real part".into()));
        }
        Ok(CMatrix::from_fn(rows, cols, |i, j| {
            c(self.re[i][j], if has_im { self.im[i][j] } else { 0.0 })
        }))
    }
}

/// Serialized channel: Kraus list and optional declared inverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub kraus: Vec<ComplexMatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inverse: Option<Box<ChannelSpec>>,
}

impl ChannelSpec {
    pub fn build(&self) -> Result<ChannelMap> {
        let kraus = self.kraus.iter().map(|k| k.to_matrix()).collect::<Result<Vec<_>>>()?;
        let ch = ChannelMap::new(kraus)?;
        match &self.inverse {
            Some(inv) => ch.with_inverse(inv.build()?),
            None => Ok(ch),
        }
    }
}

impl Serialize for ChannelMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_spec().serialize(s)
    }
}

impl<'de> Deserialize<'de> for ChannelMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        ChannelSpec::deserialize(d)?.build().map_err(serde::de::Error::custom)
    }
}
