//! Feasible points of the witness infimum: ensembles `{p_k, |phi_k>}` of
//! pure states on `A A' B B' E E'` whose `A B E` marginal is the target,
//! together with the classical flag `K` that labels the members.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelMap;
use crate::entropy::shannon_bits;
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, CVector};
use crate::markov::{MarkovComponents, MarkovDims};
use crate::state::{check_budget, DensityState, Party, Register, RegisterLayout};

/// Group a register belongs to in the witness objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    A,
    AExt,
    B,
    BExt,
    E,
    EExt,
}

impl Role {
    pub fn is_ext(self) -> bool {
        matches!(self, Role::AExt | Role::BExt | Role::EExt)
    }

    fn party(self) -> Party {
        match self {
            Role::A | Role::AExt => Party::Alice,
            Role::B | Role::BExt => Party::Bob,
            Role::E | Role::EExt => Party::Eve,
        }
    }

    fn from_party(p: Party) -> Option<Role> {
        match p {
            Party::Alice => Some(Role::A),
            Party::Bob => Some(Role::B),
            Party::Eve => Some(Role::E),
            Party::Reference => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessRegister {
    pub label: String,
    pub dim: usize,
    pub role: Role,
}

impl WitnessRegister {
    pub fn new(label: impl Into<String>, dim: usize, role: Role) -> Self {
        Self { label: label.into(), dim, role }
    }
}

/// Dimensions of the extension registers and the flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtDims {
    pub a: usize,
    pub b: usize,
    pub e: usize,
    pub k: usize,
}

impl ExtDims {
    pub fn product(&self) -> usize {
        self.a * self.b * self.e * self.k
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub p: f64,
    pub amplitudes: CVector,
}

/// How a witness was produced; kept for reports.
#[derive(Debug, Clone, PartialEq)]
pub enum WitnessSource {
    Ensemble,
    /// Isometry from the purifying reference into `A' B' E' K`.
    Isometry(CMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    registers: Vec<WitnessRegister>,
    members: Vec<Member>,
    source: WitnessSource,
}

const PROB_TOL: f64 = 1e-10;

impl Witness {
    pub fn from_ensemble(registers: Vec<WitnessRegister>, members: Vec<Member>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for r in &registers {
            if !seen.insert(r.label.clone()) {
                return Err(Error::DuplicateLabel(r.label.clone()));
            }
            if r.dim == 0 {
                return Err(Error::BadDims(format!("register `{}` has dimension 0", r.label)));
            }
        }
        let d: usize = registers.iter().map(|r| r.dim).product();
        check_budget(d)?;
        if members.is_empty() {
            return Err(Error::BadProbabilities("empty ensemble".into()));
        }
        let total: f64 = members.iter().map(|m| m.p).sum();
        if members.iter().any(|m| m.p < 0.0) || (total - 1.0).abs() > PROB_TOL {
            return Err(Error::BadProbabilities(format!("ensemble weights sum to {total}")));
        }
        for m in &members {
            if m.amplitudes.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "member vector of length {} for layout of dimension {d}",
                    m.amplitudes.len()
                )));
            }
            if (m.amplitudes.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidState("unit norm: ensemble member is not normalized".into()));
            }
        }
        Ok(Self { registers, members, source: WitnessSource::Ensemble })
    }

    pub fn registers(&self) -> &[WitnessRegister] {
        &self.registers
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn source(&self) -> &WitnessSource {
        &self.source
    }

    pub fn dims(&self) -> Vec<usize> {
        self.registers.iter().map(|r| r.dim).collect()
    }

    fn role_dim(&self, role: Role) -> usize {
        self.registers.iter().filter(|r| r.role == role).map(|r| r.dim).product()
    }

    pub fn ext_dims(&self) -> ExtDims {
        ExtDims {
            a: self.role_dim(Role::AExt),
            b: self.role_dim(Role::BExt),
            e: self.role_dim(Role::EExt),
            k: self.members.len(),
        }
    }

    pub(crate) fn indices_of(&self, roles: &[Role]) -> Vec<usize> {
        (0..self.registers.len()).filter(|&i| roles.contains(&self.registers[i].role)).collect()
    }

    fn index_of(&self, label: &str) -> Result<usize> {
        self.registers
            .iter()
            .position(|r| r.label == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    /// Registers that carry the target state, in witness order.
    pub fn target_layout(&self) -> RegisterLayout {
        let regs = self
            .indices_of(&[Role::A, Role::B, Role::E])
            .into_iter()
            .map(|i| {
                let r = &self.registers[i];
                Register::new(r.label.clone(), r.dim, r.role.party())
            })
            .collect();
        RegisterLayout::new(regs).expect("witness labels are unique")
    }

    fn mixed_marginal(&self, keep: &[usize]) -> CMatrix {
        let dims = self.dims();
        let dk: usize = keep.iter().map(|&i| dims[i]).product();
        let mut m = CMatrix::zeros(dk, dk);
        for mem in &self.members {
            m += linalg::pure_reduced_matrix(&mem.amplitudes, &dims, keep).scale(mem.p);
        }
        m
    }

    /// `sum_k p_k Tr_{A'B'E'} |phi_k><phi_k|` on the `A, B, E` registers.
    pub fn target(&self) -> DensityState {
        let keep = self.indices_of(&[Role::A, Role::B, Role::E]);
        DensityState::from_parts(self.target_layout(), self.mixed_marginal(&keep))
    }

    /// Trace distance between the witness marginal and `rho` (compared
    /// after ordering the marginal like `rho`).
    pub fn marginal_distance(&self, rho: &DensityState) -> Result<f64> {
        let t = self.target().permute(&rho.layout().labels())?;
        if t.layout().dims() != rho.layout().dims() {
            return Err(Error::LayoutMismatch("witness marginal and target differ in dimensions".into()));
        }
        let t = DensityState::from_parts(rho.layout().clone(), t.matrix().clone());
        t.trace_distance(rho)
    }

    /// `varrho = sum_k p_k |phi_k><phi_k| (x) |k><k|^K` as a dense state.
    pub fn realize(&self, k_label: &str) -> Result<DensityState> {
        let d: usize = self.dims().iter().product();
        let k = self.members.len();
        check_budget(d * k)?;
        let mut m = CMatrix::zeros(d * k, d * k);
        for (j, mem) in self.members.iter().enumerate() {
            let v = &mem.amplitudes;
            for a in 0..d {
                for b in 0..d {
                    m[(a * k + j, b * k + j)] = v[a] * v[b].conj() * c(mem.p, 0.0);
                }
            }
        }
        let mut regs: Vec<Register> =
            self.registers.iter().map(|r| Register::new(r.label.clone(), r.dim, r.role.party())).collect();
        regs.push(Register::new(k_label, k, Party::Reference));
        Ok(DensityState::from_parts(RegisterLayout::new(regs)?, m))
    }

    /// `1/2 [ I(AA':BB'|K) + I(AB:E'K|E) ]` on `varrho`, in bits.
    ///
    /// `K` is classical, so every entropy of a set containing `K` splits
    /// into `H(p) + sum_k p_k S(.)_{phi_k}`; the `H(p)` terms cancel. The
    /// two remaining entropies without `K` are taken on the mixed `ABE`
    /// and `E` marginals.
    pub fn objective(&self) -> f64 {
        let abe = self.indices_of(&[Role::A, Role::B, Role::E]);
        let marginal = self.mixed_marginal(&abe);
        let e_pos: Vec<usize> = abe
            .iter()
            .enumerate()
            .filter(|(_, &i)| self.registers[i].role == Role::E)
            .map(|(pos, _)| pos)
            .collect();
        let abe_dims: Vec<usize> = abe.iter().map(|&i| self.registers[i].dim).collect();
        let s_abe = shannon_bits(&linalg::eigvalsh(&marginal));
        let s_e = if e_pos.is_empty() {
            0.0
        } else {
            shannon_bits(&linalg::eigvalsh(&linalg::partial_trace_matrix(&marginal, &abe_dims, &e_pos)))
        };
        member_objective(self, s_abe, s_e)
    }

    /// Same functional evaluated by brute force on the realized dense
    /// `varrho` via generic CQMI calls.
    pub fn objective_dense(&self) -> Result<f64> {
        let rho = self.realize("__K")?;
        let labels = |roles: &[Role]| -> Vec<String> {
            self.indices_of(roles).into_iter().map(|i| self.registers[i].label.clone()).collect()
        };
        let k = vec!["__K".to_string()];
        let first = crate::entropy::cqmi(&rho, &labels(&[Role::A, Role::AExt]), &labels(&[Role::B, Role::BExt]), &k)?;
        let mut e_ext_k = labels(&[Role::EExt]);
        e_ext_k.push("__K".into());
        let second = crate::entropy::cqmi(&rho, &labels(&[Role::A, Role::B]), &e_ext_k, &labels(&[Role::E]))?;
        Ok(0.5 * (first + second))
    }

    fn with_roles(&self, label: &str, from: Role, to: Role) -> Result<Witness> {
        let i = self.index_of(label)?;
        if self.registers[i].role != from {
            return Err(Error::UnknownLabel(format!("`{label}` is not in the {from:?} group")));
        }
        let mut w = self.clone();
        w.registers[i].role = to;
        w.source = WitnessSource::Ensemble;
        Ok(w)
    }

    /// Moves an Alice-side register into the conditioning group (the
    /// state is unchanged, only the grouping).
    pub fn regroup(&self, label: &str) -> Result<Witness> {
        self.with_roles(label, Role::A, Role::E)
    }

    /// Moves one of Eve's registers to Alice, as when it is sent to her.
    pub fn move_to_alice(&self, label: &str) -> Result<Witness> {
        self.with_roles(label, Role::E, Role::A)
    }

    /// Applies the matrix `v` (columns indexed by the joint basis of `on`)
    /// to every member and replaces `on` with `out`, placed where the first
    /// of `on` sat. `v` must be an isometry.
    pub fn transport(&self, on: &[&str], v: &CMatrix, out: Vec<WitnessRegister>) -> Result<Witness> {
        let on_idx = on.iter().map(|l| self.index_of(l)).collect::<Result<Vec<_>>>()?;
        let din: usize = on_idx.iter().map(|&i| self.registers[i].dim).product();
        let dout: usize = out.iter().map(|r| r.dim).product();
        if v.ncols() != din || v.nrows() != dout {
            return Err(Error::DimensionMismatch(format!(
                "transport matrix is {}x{}, registers need {dout}x{din}",
                v.nrows(),
                v.ncols()
            )));
        }
        if linalg::max_abs(&(v.adjoint() * v - linalg::identity(din))) > 1e-9 {
            return Err(Error::BadDims("transport matrix is not an isometry".into()));
        }
        let rest: Vec<usize> = (0..self.registers.len()).filter(|i| !on_idx.contains(i)).collect();
        let dr: usize = rest.iter().map(|&i| self.registers[i].dim).product();
        let mut order = rest.clone();
        order.extend(&on_idx);
        let dims = self.dims();

        let mut staged_regs: Vec<WitnessRegister> = rest.iter().map(|&i| self.registers[i].clone()).collect();
        staged_regs.extend(out.iter().cloned());
        let insert_at = on_idx.iter().min().copied().unwrap_or(self.registers.len());
        let mut final_labels = Vec::new();
        for i in 0..self.registers.len() {
            if i == insert_at {
                final_labels.extend(out.iter().map(|r| r.label.clone()));
            }
            if !on_idx.contains(&i) {
                final_labels.push(self.registers[i].label.clone());
            }
        }
        if insert_at == self.registers.len() {
            final_labels.extend(out.iter().map(|r| r.label.clone()));
        }
        let final_order: Vec<usize> = final_labels
            .iter()
            .map(|l| staged_regs.iter().position(|r| &r.label == l))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::DuplicateLabel("transport output".into()))?;
        let staged_dims: Vec<usize> = staged_regs.iter().map(|r| r.dim).collect();

        let members = self
            .members
            .iter()
            .map(|m| {
                let permuted = linalg::permute_vector(&m.amplitudes, &dims, &order);
                let block = CMatrix::from_fn(dr, din, |r, i| permuted[r * din + i]);
                let mapped = block * v.transpose();
                let staged = CVector::from_fn(dr * dout, |idx, _| mapped[(idx / dout, idx % dout)]);
                Member { p: m.p, amplitudes: linalg::permute_vector(&staged, &staged_dims, &final_order) }
            })
            .collect();
        let registers = final_order.iter().map(|&i| staged_regs[i].clone()).collect();
        Witness::from_ensemble(registers, members)
    }

    /// Runs a channel of Alice or Bob on `label` through its Stinespring
    /// isometry; the environment becomes an extension register of the
    /// same side, so the marginal is the channel output.
    pub fn apply_local_channel(&self, label: &str, ch: &ChannelMap, env_label: &str) -> Result<Witness> {
        let i = self.index_of(label)?;
        let (role, ext) = match self.registers[i].role {
            Role::A => (Role::A, Role::AExt),
            Role::B => (Role::B, Role::BExt),
            other => return Err(Error::UnknownLabel(format!("`{label}` is in the {other:?} group"))),
        };
        if ch.input_dim() != self.registers[i].dim {
            return Err(Error::DimensionMismatch(format!("channel input {} on `{label}`", ch.input_dim())));
        }
        let out = vec![
            WitnessRegister::new(label, ch.output_dim(), role),
            WitnessRegister::new(env_label, ch.kraus().len(), ext),
        ];
        self.transport(&[label], &ch.stinespring(), out)
    }

    /// Ensemble-form JSON.
    pub fn to_json(&self) -> WitnessJson {
        WitnessJson {
            registers: self.registers.clone(),
            members: self
                .members
                .iter()
                .map(|m| MemberJson {
                    p: m.p,
                    re: m.amplitudes.iter().map(|z| z.re).collect(),
                    im: m.amplitudes.iter().map(|z| z.im).collect(),
                })
                .collect(),
        }
    }
}

/// Shared by the public objective and the optimizer fast path, which
/// supplies cached `S(ABE)` and `S(E)` of the (fixed) target.
pub(crate) fn member_objective(w: &Witness, s_abe: f64, s_e: f64) -> f64 {
    let dims = w.dims();
    let aa = w.indices_of(&[Role::A, Role::AExt]);
    let bb = w.indices_of(&[Role::B, Role::BExt]);
    let aabb = w.indices_of(&[Role::A, Role::AExt, Role::B, Role::BExt]);
    let ee = w.indices_of(&[Role::E, Role::EExt]);
    let abee = w.indices_of(&[Role::A, Role::B, Role::E, Role::EExt]);
    let s = |v: &CVector, keep: &[usize]| {
        if keep.is_empty() {
            0.0
        } else {
            shannon_bits(&linalg::pure_reduced_spectrum(v, &dims, keep))
        }
    };
    let mut cond_ab = 0.0;
    let mut s_ee = 0.0;
    let mut s_abee = 0.0;
    for m in &w.members {
        if m.p == 0.0 {
            continue;
        }
        let v = &m.amplitudes;
        cond_ab += m.p * (s(v, &aa) + s(v, &bb) - s(v, &aabb));
        s_ee += m.p * s(v, &ee);
        s_abee += m.p * s(v, &abee);
    }
    let second = s_abe + s_ee - s_abee - s_e;
    0.5 * (cond_ab + second)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberJson {
    pub p: f64,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessJson {
    pub registers: Vec<WitnessRegister>,
    pub members: Vec<MemberJson>,
}

impl WitnessJson {
    pub fn to_witness(&self) -> Result<Witness> {
        let members = self
            .members
            .iter()
            .map(|m| {
                if m.re.len() != m.im.len() {
                    return Err(Error::BadDims("member re/im lengths differ".into()));
                }
                Ok(Member {
                    p: m.p,
                    amplitudes: CVector::from_iterator(m.re.len(), m.re.iter().zip(&m.im).map(|(&r, &i)| c(r, i))),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Witness::from_ensemble(self.registers.clone(), members)
    }
}

impl Serialize for Witness {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Witness {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        WitnessJson::deserialize(d)?.to_witness().map_err(serde::de::Error::custom)
    }
}

/// Target registers of `rho` as witness registers, dropping
/// reference-party registers after tracing them out.
pub(crate) fn target_registers(rho: &DensityState) -> Result<(DensityState, Vec<WitnessRegister>)> {
    let keep: Vec<String> = rho
        .layout()
        .registers()
        .iter()
        .filter(|r| r.party != Party::Reference)
        .map(|r| r.label.clone())
        .collect();
    let reduced = rho.partial_trace(&keep)?;
    let regs = reduced
        .layout()
        .registers()
        .iter()
        .map(|r| WitnessRegister::new(r.label.clone(), r.dim, Role::from_party(r.party).expect("filtered")))
        .collect();
    Ok((reduced, regs))
}

pub const EXT_LABELS: [&str; 3] = ["A'", "B'", "E'"];

fn ext_registers(core: &[WitnessRegister], ext: &ExtDims) -> Result<Vec<WitnessRegister>> {
    for l in EXT_LABELS {
        if core.iter().any(|r| r.label == l) {
            return Err(Error::LayoutClash(format!("state already has a register named `{l}`")));
        }
    }
    Ok(vec![
        WitnessRegister::new(EXT_LABELS[0], ext.a, Role::AExt),
        WitnessRegister::new(EXT_LABELS[1], ext.b, Role::BExt),
        WitnessRegister::new(EXT_LABELS[2], ext.e, Role::EExt),
    ])
}

/// Precomputed purification of a target, from which witnesses are cut by
/// isometries `W: R -> A' B' E' K`.
#[derive(Debug, Clone)]
pub struct Purified {
    pub(crate) core: Vec<WitnessRegister>,
    /// `d_core x rank`, amplitude of `|core>|r>`.
    pub(crate) psi: CMatrix,
    pub(crate) s_abe: f64,
    pub(crate) s_e: f64,
    pub(crate) target: DensityState,
}

impl Purified {
    pub fn new(rho: &DensityState) -> Result<Self> {
        let (target, core) = target_registers(rho)?;
        let pure = target.purify("__R")?;
        let rank = pure.layout().get("__R")?.dim;
        let d = target.dim();
        let amps = pure.amplitudes();
        let psi = CMatrix::from_fn(d, rank, |i, r| amps[i * rank + r]);
        let s_abe = shannon_bits(&target.spectrum());
        let e_labels: Vec<String> = core.iter().filter(|r| r.role == Role::E).map(|r| r.label.clone()).collect();
        let s_e = crate::entropy::entropy(&target, &e_labels)?;
        Ok(Self { core, psi, s_abe, s_e, target })
    }

    pub fn rank(&self) -> usize {
        self.psi.ncols()
    }

    pub fn target(&self) -> &DensityState {
        &self.target
    }

    pub(crate) fn witness(&self, w: &CMatrix, ext: &ExtDims) -> Result<Witness> {
        let rank = self.rank();
        if ext.product() < rank {
            return Err(Error::DimensionTooSmall(format!(
                "a'b'e'k = {} is below the rank {rank}",
                ext.product()
            )));
        }
        if w.nrows() != ext.product() || w.ncols() != rank {
            return Err(Error::DimensionMismatch(format!(
                "isometry is {}x{}, expected {}x{rank}",
                w.nrows(),
                w.ncols(),
                ext.product()
            )));
        }
        if linalg::max_abs(&(w.adjoint() * w - linalg::identity(rank))) > 1e-9 {
            return Err(Error::BadDims("W is not an isometry".into()));
        }
        let mut regs = self.core.clone();
        regs.extend(ext_registers(&self.core, ext)?);
        let core_d = self.psi.nrows();
        let ext_d = ext.a * ext.b * ext.e;
        // Psi[core, (ext, k)] with k least significant
        let big = &self.psi * w.transpose();
        let mut members = Vec::with_capacity(ext.k);
        for k in 0..ext.k {
            let v = CVector::from_fn(core_d * ext_d, |idx, _| big[(idx / ext_d, (idx % ext_d) * ext.k + k)]);
            let p = v.norm_squared();
            if p > 1e-300 {
                members.push(Member { p, amplitudes: v.unscale(p.sqrt()) });
            }
        }
        let total: f64 = members.iter().map(|m| m.p).sum();
        for m in &mut members {
            m.p /= total;
        }
        let mut wit = Witness::from_ensemble(regs, members)?;
        wit.source = WitnessSource::Isometry(w.clone());
        Ok(wit)
    }

    /// Objective with the cached target entropies.
    pub(crate) fn evaluate(&self, w: &CMatrix, ext: &ExtDims) -> Result<f64> {
        let wit = self.witness(w, ext)?;
        Ok(member_objective(&wit, self.s_abe, self.s_e))
    }
}

/// Purifies `rho`, applies `w` to the reference and dephases `K`.
pub fn witness_from_isometry(rho: &DensityState, w: &CMatrix, ext: ExtDims) -> Result<Witness> {
    Purified::new(rho)?.witness(w, &ext)
}

/// The two witnesses with all extensions trivial except the purifying
/// register, given to Bob in the first and to Alice in the second.
pub fn baseline_witnesses(rho: &DensityState) -> Result<Vec<Witness>> {
    let pur = Purified::new(rho)?;
    let r = pur.rank();
    let id = linalg::identity(r);
    Ok(vec![
        pur.witness(&id, &ExtDims { a: 1, b: r, e: 1, k: 1 })?,
        pur.witness(&id, &ExtDims { a: r, b: 1, e: 1, k: 1 })?,
    ])
}

fn purification_matrix(s: &DensityState, width: usize) -> Result<CMatrix> {
    let p = s.purify("__R")?;
    let rank = p.layout().get("__R")?.dim;
    let d = s.dim();
    let amps = p.amplitudes();
    Ok(CMatrix::from_fn(d, width, |i, r| if r < rank { amps[i * rank + r] } else { linalg::ZERO }))
}

/// Zero-extension witness of a Markov state built from `c`: member `k`
/// is `|k>^{E0} |psi_sigma_k>^{A A' E_L} |psi_tau_k>^{B B' E_R}`, with
/// `E'` trivial. Register order is `A, B, E, A', B', E'`, matching the
/// layout of `build_markov(c)`.
pub fn markov_witness(c: &MarkovComponents) -> Result<Witness> {
    let d: MarkovDims = c.dims()?;
    let ra = c.entries.iter().map(|e| e.sigma.rank()).max().unwrap_or(1).max(1);
    let rb = c.entries.iter().map(|e| e.tau.rank()).max().unwrap_or(1).max(1);
    let regs = vec![
        WitnessRegister::new("A", d.a, Role::A),
        WitnessRegister::new("B", d.b, Role::B),
        WitnessRegister::new("E", d.e(), Role::E),
        WitnessRegister::new(EXT_LABELS[0], ra, Role::AExt),
        WitnessRegister::new(EXT_LABELS[1], rb, Role::BExt),
        WitnessRegister::new(EXT_LABELS[2], 1, Role::EExt),
    ];
    let total = d.a * d.b * d.e() * ra * rb;
    check_budget(total)?;
    let mut members = Vec::new();
    for (k, e) in c.entries.iter().enumerate() {
        if e.p == 0.0 {
            continue;
        }
        // sigma purification rows (a, e_l), columns a'
        let ps = purification_matrix(&e.sigma, ra)?;
        let pt = purification_matrix(&e.tau, rb)?;
        let mut v = CVector::zeros(total);
        for a in 0..d.a {
            for b in 0..d.b {
                for el in 0..d.e_l {
                    for er in 0..d.e_r {
                        let eidx = (k * d.e_l + el) * d.e_r + er;
                        for x in 0..ra {
                            for y in 0..rb {
                                let amp = ps[(a * d.e_l + el, x)] * pt[(b * d.e_r + er, y)];
                                let idx = (((a * d.b + b) * d.e() + eidx) * ra + x) * rb + y;
                                v[idx] = amp;
                            }
                        }
                    }
                }
            }
        }
        members.push(Member { p: e.p, amplitudes: v });
    }
    let total_p: f64 = members.iter().map(|m| m.p).sum();
    for m in &mut members {
        m.p /= total_p;
    }
    Witness::from_ensemble(regs, members)
}

/// Product witness `{p_k q_l, phi_k (x) chi_l}` for `rho (x) sigma`.
pub fn witness_tensor(w1: &Witness, w2: &Witness) -> Result<Witness> {
    for r in &w2.registers {
        if w1.registers.iter().any(|x| x.label == r.label) {
            return Err(Error::LayoutClash(format!("both witnesses have a register `{}`", r.label)));
        }
    }
    let mut regs = w1.registers.clone();
    regs.extend(w2.registers.iter().cloned());
    check_budget(regs.iter().map(|r| r.dim).product())?;
    let mut members = Vec::with_capacity(w1.members.len() * w2.members.len());
    for a in &w1.members {
        for b in &w2.members {
            members.push(Member { p: a.p * b.p, amplitudes: linalg::kron_vec(&a.amplitudes, &b.amplitudes) });
        }
    }
    Witness::from_ensemble(regs, members)
}

/// Canonical form: target registers in order, then the merged `A'`, `B'`,
/// `E'` registers padded to the requested sizes.
fn canonical_members(w: &Witness, pad: (usize, usize, usize)) -> Vec<Member> {
    let core = w.indices_of(&[Role::A, Role::B, Role::E]);
    let ea = w.indices_of(&[Role::AExt]);
    let eb = w.indices_of(&[Role::BExt]);
    let ee = w.indices_of(&[Role::EExt]);
    let mut order = core.clone();
    order.extend(&ea);
    order.extend(&eb);
    order.extend(&ee);
    let dims = w.dims();
    let prod = |ix: &[usize]| ix.iter().map(|&i| dims[i]).product::<usize>();
    let (dc, da, db, de) = (prod(&core), prod(&ea), prod(&eb), prod(&ee));
    let (pa, pb, pe) = pad;
    w.members
        .iter()
        .map(|m| {
            let v = linalg::permute_vector(&m.amplitudes, &dims, &order);
            let mut out = CVector::zeros(dc * pa * pb * pe);
            for x in 0..dc {
                for a in 0..da {
                    for b in 0..db {
                        for e in 0..de {
                            out[((x * pa + a) * pb + b) * pe + e] = v[((x * da + a) * db + b) * de + e];
                        }
                    }
                }
            }
            Member { p: m.p, amplitudes: out }
        })
        .collect()
}

/// Block witness for `sum_m r_m rho_m (x) |m><m|^M` with `M` appended to
/// Eve's group, from witnesses of the parts. Extension registers are
/// merged per side and zero-padded to a common size.
pub fn witness_mix(parts: &[(f64, Witness)], m_label: &str) -> Result<Witness> {
    let (_, first) = parts.first().ok_or_else(|| Error::BadProbabilities("no parts".into()))?;
    let total: f64 = parts.iter().map(|(r, _)| r).sum();
    if parts.iter().any(|(r, _)| *r < 0.0) || (total - 1.0).abs() > PROB_TOL {
        return Err(Error::BadProbabilities(format!("mixing weights sum to {total}")));
    }
    let core_of = |w: &Witness| -> Vec<WitnessRegister> {
        w.indices_of(&[Role::A, Role::B, Role::E]).into_iter().map(|i| w.registers[i].clone()).collect()
    };
    let core = core_of(first);
    for (_, w) in parts {
        if core_of(w) != core {
            return Err(Error::LayoutClash("parts have different target layouts".into()));
        }
    }
    if core.iter().any(|r| r.label == m_label) || EXT_LABELS.contains(&m_label) {
        return Err(Error::LayoutClash(format!("label `{m_label}` is taken")));
    }
    let pad = parts.iter().fold((1, 1, 1), |acc, (_, w)| {
        let e = w.ext_dims();
        (acc.0.max(e.a), acc.1.max(e.b), acc.2.max(e.e))
    });
    let n = parts.len();
    let mut regs = core.clone();
    regs.extend([
        WitnessRegister::new(EXT_LABELS[0], pad.0, Role::AExt),
        WitnessRegister::new(EXT_LABELS[1], pad.1, Role::BExt),
        WitnessRegister::new(EXT_LABELS[2], pad.2, Role::EExt),
        WitnessRegister::new(m_label, n, Role::E),
    ]);
    let mut members = Vec::new();
    for (m, (r, w)) in parts.iter().enumerate() {
        let mut flag = CVector::zeros(n);
        flag[m] = linalg::ONE;
        for mem in canonical_members(w, pad) {
            members.push(Member { p: r * mem.p, amplitudes: linalg::kron_vec(&mem.amplitudes, &flag) });
        }
    }
    members.retain(|m| m.p > 0.0);
    Witness::from_ensemble(regs, members)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy;
    use crate::sample;

    fn abe_regs() -> [(&'static str, usize, Party); 3] {
        [("A", 2, Party::Alice), ("B", 2, Party::Bob), ("E", 2, Party::Eve)]
    }

    #[test]
    fn pure_target_with_trivial_isometry_is_singleton() {
        let psi = sample::pure(&abe_regs(), 3).unwrap();
        let rho = psi.to_density();
        let w = witness_from_isometry(&rho, &linalg::identity(1), ExtDims { a: 1, b: 1, e: 1, k: 1 }).unwrap();
        assert_eq!(w.members().len(), 1);
        assert!(w.marginal_distance(&rho).unwrap() < 1e-10);
        let half_i = 0.5 * entropy::mutual_information(&rho, &["A"], &["B"]).unwrap();
        assert!((w.objective() - half_i).abs() < 1e-10);
    }

    #[test]
    fn maximally_mixed_ab_into_k_gives_basis_products() {
        let rho = DensityState::maximally_mixed("A", 2, Party::Alice)
            .unwrap()
            .tensor(&DensityState::maximally_mixed("B", 2, Party::Bob).unwrap())
            .unwrap()
            .tensor(&DensityState::basis("E", 2, Party::Eve, 0).unwrap())
            .unwrap();
        let w = witness_from_isometry(&rho, &linalg::identity(4), ExtDims { a: 1, b: 1, e: 1, k: 4 }).unwrap();
        assert_eq!(w.members().len(), 4);
        for m in w.members() {
            assert!((m.p - 0.25).abs() < 1e-12);
            // each member is a computational-basis product: one unit amplitude
            let big = m.amplitudes.iter().filter(|z| z.norm() > 1e-9).count();
            assert_eq!(big, 1);
        }
        // product members, but K is perfectly correlated with AB: (0 + S(AB)) / 2
        assert!((w.objective() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn small_extension_is_rejected() {
        let rho = sample::density_hs(&abe_regs(), 1).unwrap();
        let w = sample::isometry(8, 8, 2).unwrap();
        let err = witness_from_isometry(&rho, &w, ExtDims { a: 1, b: 1, e: 1, k: 4 }).unwrap_err();
        assert!(matches!(err, Error::DimensionTooSmall(_)));
    }

    #[test]
    fn objective_matches_dense_realization() {
        let rho = sample::density_hs(&abe_regs(), 5).unwrap();
        let ext = ExtDims { a: 2, b: 1, e: 2, k: 3 };
        let w = sample::isometry(8, ext.product(), 6).unwrap();
        let wit = witness_from_isometry(&rho, &w, ext).unwrap();
        assert!(wit.marginal_distance(&rho).unwrap() < 1e-10);
        let fast = wit.objective();
        let dense = wit.objective_dense().unwrap();
        assert!((fast - dense).abs() < 1e-9, "{fast} vs {dense}");
    }

    #[test]
    fn baselines_hit_half_mutual_information() {
        let rho = sample::density_hs(&abe_regs(), 8).unwrap();
        let b = baseline_witnesses(&rho).unwrap();
        let pure = rho.purify("R").unwrap().to_density();
        let i_a_bb = entropy::mutual_information(&pure, &["A"], &["B", "R"]).unwrap();
        let i_b_aa = entropy::mutual_information(&pure, &["B"], &["A", "R"]).unwrap();
        assert!((b[0].objective() - 0.5 * i_a_bb).abs() < 1e-9);
        assert!((b[1].objective() - 0.5 * i_b_aa).abs() < 1e-9);
        let s_a = entropy::entropy(&rho, &["A"]).unwrap();
        assert!(b[0].objective() <= s_a + 1e-9);
    }

    #[test]
    fn markov_witness_reproduces_state_with_zero_objective() {
        let mut rng = sample::rng(4);
        let c = crate::markov::random_components(3, 2, 2, 2, 2, &mut rng).unwrap();
        let rho = crate::markov::build_markov(&c).unwrap();
        let w = markov_witness(&c).unwrap();
        assert!(w.marginal_distance(&rho).unwrap() < 1e-10);
        assert!(w.objective().abs() < 1e-9, "{}", w.objective());
    }

    #[test]
    fn tensor_clash_detected() {
        let rho = sample::density_hs(&abe_regs(), 1).unwrap();
        let b = baseline_witnesses(&rho).unwrap();
        assert!(matches!(witness_tensor(&b[0], &b[1]), Err(Error::LayoutClash(_))));
    }

    #[test]
    fn regroup_rejects_non_alice_register() {
        let rho = sample::density_hs(&abe_regs(), 1).unwrap();
        let b = baseline_witnesses(&rho).unwrap();
        assert!(matches!(b[0].regroup("B"), Err(Error::UnknownLabel(_))));
        assert!(matches!(b[0].regroup("Z"), Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn transport_by_unitary_on_e_keeps_objective() {
        let rho = sample::density_hs(&abe_regs(), 12).unwrap();
        let ext = ExtDims { a: 1, b: 2, e: 1, k: 4 };
        let wit = witness_from_isometry(&rho, &sample::isometry(8, 8, 13).unwrap(), ext).unwrap();
        let v = sample::isometry(2, 3, 14).unwrap();
        let moved = wit.transport(&["E"], &v, vec![WitnessRegister::new("E", 3, Role::E)]).unwrap();
        assert!((moved.objective() - wit.objective()).abs() < 1e-9);
    }

    #[test]
    fn json_round_trip() {
        let rho = sample::density_hs(&abe_regs(), 2).unwrap();
        let w = &baseline_witnesses(&rho).unwrap()[0];
        let back = w.to_json().to_witness().unwrap();
        assert!((back.objective() - w.objective()).abs() < 1e-12);
    }
}
