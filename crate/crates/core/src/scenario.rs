//! Party-restricted operations as script steps, their classification into
//! the free classes and the communication-cost ledger.
//!
//! Classical messages are stored in fresh registers that are diagonal in
//! the computational basis; later steps may treat them like any other
//! register.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{apply_channel, ChannelMap};
use crate::entropy;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::markov::MarkovComponents;
use crate::sample;
use crate::state::{DensityState, Party, Register, RegisterLayout};

/// Tolerance for the block-diagonal test on message registers.
pub const CLASSICAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    /// Quantum bits sent from Eve to Alice or Bob.
    pub qc_bits: f64,
    /// Classical bits sent from Eve to Alice or Bob.
    pub cdown_bits: f64,
}

impl CostLedger {
    pub fn add(&self, other: &CostLedger) -> CostLedger {
        CostLedger { qc_bits: self.qc_bits + other.qc_bits, cdown_bits: self.cdown_bits + other.cdown_bits }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub state: DensityState,
    pub ledger: CostLedger,
}

impl Scenario {
    pub fn new(state: DensityState) -> Self {
        Self { state, ledger: CostLedger::default() }
    }

    pub fn m_i(&self) -> Result<f64> {
        entropy::m_i_parties(&self.state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    ToEve,
    FromEve,
}

/// Output register of a local step; the party is that of the actor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutRegister {
    pub label: String,
    pub dim: usize,
}

impl OutRegister {
    pub fn new(label: impl Into<String>, dim: usize) -> Self {
        Self { label: label.into(), dim }
    }
}

/// One operation of a script.
///
/// Message-carrying steps either measure the sender's registers `on` with
/// `measurement` (Kraus operators, one per outcome, square on `on`) into a
/// new register `message`, or, when `measurement` is absent, send the
/// existing register `message`, which must then be classical. Copies of
/// the message go to the receivers under the `copies` labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Step {
    /// Alice's channel on `on`; `channel: null` discards `on`.
    LocalA {
        on: Vec<String>,
        #[serde(default)]
        channel: Option<ChannelMap>,
        #[serde(default)]
        out: Vec<OutRegister>,
    },
    LocalB {
        on: Vec<String>,
        #[serde(default)]
        channel: Option<ChannelMap>,
        #[serde(default)]
        out: Vec<OutRegister>,
    },
    /// Eve's channel; it must be reversible unless `bypass` is set, which
    /// makes the script non-free.
    ReversibleE {
        on: Vec<String>,
        channel: ChannelMap,
        #[serde(default)]
        out: Vec<OutRegister>,
        #[serde(default)]
        bypass: bool,
    },
    QuantumToE {
        label: String,
        from: Party,
    },
    QuantumFromE {
        label: String,
        to: Party,
    },
    BroadcastA {
        #[serde(default)]
        on: Vec<String>,
        #[serde(default)]
        measurement: Option<ChannelMap>,
        message: String,
        /// Bob's and Eve's copies.
        copies: [String; 2],
    },
    BroadcastB {
        #[serde(default)]
        on: Vec<String>,
        #[serde(default)]
        measurement: Option<ChannelMap>,
        message: String,
        /// Alice's and Eve's copies.
        copies: [String; 2],
    },
    ClassicalAE {
        direction: Direction,
        #[serde(default)]
        on: Vec<String>,
        #[serde(default)]
        measurement: Option<ChannelMap>,
        message: String,
        copy: String,
    },
    ClassicalBE {
        direction: Direction,
        #[serde(default)]
        on: Vec<String>,
        #[serde(default)]
        measurement: Option<ChannelMap>,
        message: String,
        copy: String,
    },
    /// Classical message between Alice and Bob that Eve does not receive.
    SecretAB {
        from: Party,
        #[serde(default)]
        on: Vec<String>,
        #[serde(default)]
        measurement: Option<ChannelMap>,
        message: String,
        copy: String,
    },
    QuantumAB {
        label: String,
        to: Party,
    },
}

/// What a step needs from the operation class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Need {
    Free,
    ClassicalDown,
    QuantumDown,
    Forbidden,
}

impl Step {
    pub fn name(&self) -> &'static str {
        match self {
            Step::LocalA { .. } => "local_a",
            Step::LocalB { .. } => "local_b",
            Step::ReversibleE { .. } => "reversible_e",
            Step::QuantumToE { .. } => "quantum_to_e",
            Step::QuantumFromE { .. } => "quantum_from_e",
            Step::BroadcastA { .. } => "broadcast_a",
            Step::BroadcastB { .. } => "broadcast_b",
            Step::ClassicalAE { .. } => "classical_ae",
            Step::ClassicalBE { .. } => "classical_be",
            Step::SecretAB { .. } => "secret_ab",
            Step::QuantumAB { .. } => "quantum_ab",
        }
    }

    fn need(&self) -> Need {
        match self {
            Step::ReversibleE { bypass: true, .. } | Step::SecretAB { .. } | Step::QuantumAB { .. } => Need::Forbidden,
            Step::ClassicalAE { direction: Direction::FromEve, .. }
            | Step::ClassicalBE { direction: Direction::FromEve, .. } => Need::ClassicalDown,
            Step::QuantumFromE { .. } => Need::QuantumDown,
            _ => Need::Free,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperationClass {
    Omega,
    OmegaStar,
    OmegaQ,
    NonFree,
}

/// Smallest class among `Omega`, `OmegaStar`, `OmegaQ` containing every
/// step; classical and quantum downward communication together, or any
/// forbidden step, give `NonFree`.
pub fn classify_script(steps: &[Step]) -> OperationClass {
    let needs: Vec<Need> = steps.iter().map(Step::need).collect();
    let has = |n: Need| needs.contains(&n);
    if has(Need::Forbidden) || (has(Need::ClassicalDown) && has(Need::QuantumDown)) {
        OperationClass::NonFree
    } else if has(Need::ClassicalDown) {
        OperationClass::OmegaStar
    } else if has(Need::QuantumDown) {
        OperationClass::OmegaQ
    } else {
        OperationClass::Omega
    }
}

fn require_party(s: &DensityState, labels: &[String], party: Party) -> Result<()> {
    for l in labels {
        let r = s.layout().get(l)?;
        if r.party != party {
            return Err(Error::WrongParty(format!("`{l}` belongs to {:?}, not {party:?}", r.party)));
        }
    }
    Ok(())
}

fn out_layout(out: &[OutRegister], party: Party) -> Result<RegisterLayout> {
    RegisterLayout::new(out.iter().map(|r| Register::new(r.label.clone(), r.dim, party)).collect())
}

fn local(s: &DensityState, party: Party, on: &[String], ch: Option<&ChannelMap>, out: &[OutRegister]) -> Result<DensityState> {
    require_party(s, on, party)?;
    match ch {
        None => {
            if !out.is_empty() {
                return Err(Error::BadParams("a discard has no output registers".into()));
            }
            s.trace_out(on)
        }
        Some(ch) => apply_channel(s, ch, on, &out_layout(out, party)?),
    }
}

/// Is `rho` block diagonal with respect to the computational basis of
/// register `label`?
pub fn is_classical(rho: &DensityState, label: &str) -> Result<bool> {
    let layout = rho.layout();
    let i = layout.index_of(label)?;
    let dims = layout.dims();
    let strides = linalg::strides(&dims);
    let (d, st) = (dims[i], strides[i]);
    let m = rho.matrix();
    let n = m.nrows();
    for r in 0..n {
        for c in 0..n {
            if (r / st) % d != (c / st) % d && m[(r, c)].norm() > CLASSICAL_TOL {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Instrument `K_x = M_x (x) |x>` from `on` to `on, message`.
fn measure(s: &DensityState, party: Party, on: &[String], m: &ChannelMap, message: &str) -> Result<DensityState> {
    require_party(s, on, party)?;
    if on.is_empty() {
        return Err(Error::BadParams("a measurement needs registers to act on".into()));
    }
    let din = s.layout().dim_of(on)?;
    if m.input_dim() != din || m.output_dim() != din {
        return Err(Error::DimensionMismatch(format!(
            "measurement operators must be {din}x{din} on the measured registers"
        )));
    }
    let n = m.kraus().len();
    let kraus = m
        .kraus()
        .iter()
        .enumerate()
        .map(|(x, k)| {
            let mut flag = CMatrix::zeros(n, 1);
            flag[(x, 0)] = linalg::ONE;
            linalg::kron(k, &flag)
        })
        .collect();
    let mut out: Vec<Register> = on.iter().map(|l| s.layout().get(l).cloned()).collect::<Result<_>>()?;
    out.push(Register::new(message, n, party));
    let ch = ChannelMap::new(kraus)?;
    apply_channel(s, &ch, on, &RegisterLayout::new(out)?)
}

/// Copies the classical register `message` into new registers, one per
/// `(label, party)`, appended at the end.
fn copy_message(s: &DensityState, message: &str, copies: &[(&str, Party)]) -> Result<DensityState> {
    if !is_classical(s, message)? {
        return Err(Error::NotClassical(format!("`{message}` carries coherences")));
    }
    let d = s.layout().get(message)?.dim;
    let nc = copies.len();
    let out_dim = d.pow(nc as u32 + 1);
    let kraus = (0..d)
        .map(|m| {
            let mut k = CMatrix::zeros(out_dim, d);
            // |m> on the message and every copy
            let idx = (0..=nc).fold(0, |acc, _| acc * d + m);
            k[(idx, m)] = linalg::ONE;
            k
        })
        .collect();
    let ch = ChannelMap::new(kraus)?;
    let original = s.layout().get(message)?.clone();
    let mut out = vec![original];
    out.extend(copies.iter().map(|(l, p)| Register::new(*l, d, *p)));
    let applied = apply_channel(s, &ch, &[message], &RegisterLayout::new(out)?)?;
    let mut order: Vec<String> =
        applied.layout().labels().into_iter().filter(|l| !copies.iter().any(|(c, _)| c == l)).collect();
    order.extend(copies.iter().map(|(l, _)| l.to_string()));
    applied.permute(&order)
}

fn send_message(
    s: &DensityState,
    sender: Party,
    on: &[String],
    measurement: Option<&ChannelMap>,
    message: &str,
    copies: &[(&str, Party)],
) -> Result<DensityState> {
    let s = match measurement {
        Some(m) => measure(s, sender, on, m, message)?,
        None => {
            require_party(s, &[message.to_string()], sender)?;
            s.clone()
        }
    };
    copy_message(&s, message, copies)
}

fn other_party(p: Party) -> Result<Party> {
    match p {
        Party::Alice => Ok(Party::Bob),
        Party::Bob => Ok(Party::Alice),
        _ => Err(Error::WrongParty(format!("{p:?} is neither Alice nor Bob"))),
    }
}

/// Reversible channel for Eve: its declared inverse, or the canonical one
/// of a single isometric Kraus operator.
fn reversible(ch: &ChannelMap) -> Result<ChannelMap> {
    if ch.inverse().is_some() {
        return Ok(ch.clone());
    }
    if let [w] = ch.kraus() {
        return ChannelMap::isometry(w.clone());
    }
    Err(Error::IrreversibleEveOp(format!(
        "channel with {} Kraus operators and no declared inverse",
        ch.kraus().len()
    )))
}

pub fn apply_step(sc: &Scenario, step: &Step) -> Result<Scenario> {
    let s = &sc.state;
    let mut ledger = sc.ledger;
    let state = match step {
        Step::LocalA { on, channel, out } => local(s, Party::Alice, on, channel.as_ref(), out)?,
        Step::LocalB { on, channel, out } => local(s, Party::Bob, on, channel.as_ref(), out)?,
        Step::ReversibleE { on, channel, out, bypass } => {
            require_party(s, on, Party::Eve)?;
            let ch = if *bypass { channel.clone() } else { reversible(channel)? };
            apply_channel(s, &ch, on, &out_layout(out, Party::Eve)?)?
        }
        Step::QuantumToE { label, from } => {
            if *from == Party::Eve || *from == Party::Reference {
                return Err(Error::WrongParty(format!("{from:?} cannot send to Eve")));
            }
            require_party(s, &[label.clone()], *from)?;
            s.with_party(label, Party::Eve)?
        }
        Step::QuantumFromE { label, to } => {
            other_party(*to)?;
            require_party(s, &[label.clone()], Party::Eve)?;
            ledger.qc_bits += (s.layout().get(label)?.dim as f64).log2();
            s.with_party(label, *to)?
        }
        Step::BroadcastA { on, measurement, message, copies } => send_message(
            s,
            Party::Alice,
            on,
            measurement.as_ref(),
            message,
            &[(&copies[0], Party::Bob), (&copies[1], Party::Eve)],
        )?,
        Step::BroadcastB { on, measurement, message, copies } => send_message(
            s,
            Party::Bob,
            on,
            measurement.as_ref(),
            message,
            &[(&copies[0], Party::Alice), (&copies[1], Party::Eve)],
        )?,
        Step::ClassicalAE { direction, on, measurement, message, copy }
        | Step::ClassicalBE { direction, on, measurement, message, copy } => {
            let side = if matches!(step, Step::ClassicalAE { .. }) { Party::Alice } else { Party::Bob };
            match direction {
                Direction::ToEve => send_message(s, side, on, measurement.as_ref(), message, &[(copy, Party::Eve)])?,
                Direction::FromEve => {
                    if measurement.is_some() {
                        return Err(Error::IrreversibleEveOp(
                            "Eve can only send registers that are already classical".into(),
                        ));
                    }
                    let out = send_message(s, Party::Eve, on, None, message, &[(copy, side)])?;
                    ledger.cdown_bits += (s.layout().get(message)?.dim as f64).log2();
                    out
                }
            }
        }
        Step::SecretAB { from, on, measurement, message, copy } => {
            let to = other_party(*from)?;
            send_message(s, *from, on, measurement.as_ref(), message, &[(copy, to)])?
        }
        Step::QuantumAB { label, to } => {
            let from = other_party(*to)?;
            require_party(s, &[label.clone()], from)?;
            s.with_party(label, *to)?
        }
    };
    Ok(Scenario { state, ledger })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub kind: String,
    pub m_i_after: f64,
    pub ledger: CostLedger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRun {
    pub scenario: Scenario,
    pub class: OperationClass,
    pub m_i_before: f64,
    pub m_i_after: f64,
    pub steps: Vec<StepRecord>,
}

pub fn run_script(sc: &Scenario, steps: &[Step]) -> Result<ScriptRun> {
    let m_i_before = sc.m_i()?;
    let mut cur = sc.clone();
    let mut records = Vec::with_capacity(steps.len());
    for step in steps {
        let next = apply_step(&cur, step)?;
        records.push(StepRecord {
            kind: step.name().into(),
            m_i_after: next.m_i()?,
            ledger: CostLedger {
                qc_bits: next.ledger.qc_bits - cur.ledger.qc_bits,
                cdown_bits: next.ledger.cdown_bits - cur.ledger.cdown_bits,
            },
        });
        cur = next;
    }
    Ok(ScriptRun { m_i_after: cur.m_i()?, scenario: cur, class: classify_script(steps), m_i_before, steps: records })
}

pub fn parse_script(json: &str) -> Result<Vec<Step>> {
    Ok(serde_json::from_str(json)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilutionCost {
    pub per_step_bits: Vec<f64>,
    pub total_bits: f64,
    pub lemma6_bound: f64,
}

/// `ceil(sqrt(mu^l))` for the coherent-communication rounds, against the
/// `(l/2 + 1) sum log2 mu` bound.
pub fn dilution_conversion_cost(mu: &[u64], l: u32) -> Result<DilutionCost> {
    if l == 0 {
        return Err(Error::BadMu("l must be positive".into()));
    }
    if let Some(bad) = mu.iter().find(|&&m| m < 2) {
        return Err(Error::BadMu(format!("message alphabet {bad} is below 2")));
    }
    let per_step_bits: Vec<f64> = mu.iter().map(|&m| ceil_sqrt_pow_log2(m, l)).collect();
    let total_bits = per_step_bits.iter().sum();
    let lemma6_bound = (l as f64 / 2.0 + 1.0) * mu.iter().map(|&m| (m as f64).log2()).sum::<f64>();
    debug_assert!(total_bits <= lemma6_bound + 1e-12);
    Ok(DilutionCost { per_step_bits, total_bits, lemma6_bound })
}

/// `log2 ceil(sqrt(m^l))`, exact while `m^l` fits in 128 bits.
fn ceil_sqrt_pow_log2(m: u64, l: u32) -> f64 {
    match (m as u128).checked_pow(l) {
        Some(x) => {
            let mut r = (x as f64).sqrt() as u128;
            while r * r > x {
                r -= 1;
            }
            while r * r < x {
                r += 1;
            }
            (r as f64).log2()
        }
        // the ceiling changes log2 by far less than f64 resolution here
        None => l as f64 * (m as f64).log2() / 2.0,
    }
}

/// The operation kinds the fuzzers draw from: the classes of `Omega*`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    LocalA,
    LocalB,
    ReversibleE,
    QuantumAToE,
    QuantumBToE,
    BroadcastA,
    BroadcastB,
    ClassicalAToE,
    ClassicalEToA,
    ClassicalBToE,
    ClassicalEToB,
}

impl StepKind {
    pub const OMEGA_STAR: [StepKind; 11] = [
        StepKind::LocalA,
        StepKind::LocalB,
        StepKind::ReversibleE,
        StepKind::QuantumAToE,
        StepKind::QuantumBToE,
        StepKind::BroadcastA,
        StepKind::BroadcastB,
        StepKind::ClassicalAToE,
        StepKind::ClassicalEToA,
        StepKind::ClassicalBToE,
        StepKind::ClassicalEToB,
    ];

    pub fn in_omega(self) -> bool {
        !matches!(self, StepKind::ClassicalEToA | StepKind::ClassicalEToB)
    }
}

/// Random channel `d -> d_out` with `n` Kraus operators cut from a random
/// isometry; `n` is raised to `ceil(d / d_out)` if needed.
pub fn random_channel<R: Rng + ?Sized>(d: usize, d_out: usize, n: usize, rng: &mut R) -> Result<ChannelMap> {
    if d_out == 0 {
        return Err(Error::BadDims("channel output dimension 0".into()));
    }
    let n = n.max(d.div_ceil(d_out));
    let w = sample::isometry_with(d, d_out * n, rng)?;
    let kraus = (0..n).map(|j| CMatrix::from_fn(d_out, d, |o, i| w[(o * n + j, i)])).collect();
    ChannelMap::new(kraus)
}

fn fresh_label(s: &DensityState, stem: &str) -> String {
    (0..).map(|i| format!("{stem}{i}")).find(|l| !s.layout().contains(l)).expect("labels are unbounded")
}

fn pick<R: Rng + ?Sized>(labels: &[String], rng: &mut R) -> Option<String> {
    if labels.is_empty() {
        None
    } else {
        Some(labels[rng.random_range(0..labels.len())].clone())
    }
}

/// A random step of `kind` that is valid on `s`. Registers stay small:
/// channels keep or shrink dimensions, messages have 2 or 3 outcomes.
/// `ClassicalEToA`/`ClassicalEToB` need a classical register of Eve.
pub fn random_step<R: Rng + ?Sized>(kind: StepKind, s: &DensityState, rng: &mut R) -> Result<Step> {
    let of = |p: Party| s.layout().labels_of(p);
    let missing = |what: &str| Error::BadParams(format!("state has no {what} register"));
    let local_step = |party: Party, rng: &mut R| -> Result<Step> {
        let label = pick(&of(party), rng).ok_or_else(|| missing("local"))?;
        let d = s.layout().get(&label)?.dim;
        let (channel, out) = if rng.random_bool(0.15) && of(party).len() > 1 {
            (None, vec![])
        } else {
            let d_out = rng.random_range(1..=d.max(2).min(3));
            let n = rng.random_range(1..=3);
            (Some(random_channel(d, d_out, n, rng)?), vec![OutRegister::new(label.clone(), d_out)])
        };
        Ok(match party {
            Party::Alice => Step::LocalA { on: vec![label], channel, out },
            _ => Step::LocalB { on: vec![label], channel, out },
        })
    };
    let instrument = |party: Party, rng: &mut R| -> Result<(Vec<String>, ChannelMap, String)> {
        let label = pick(&of(party), rng).ok_or_else(|| missing("sender"))?;
        let d = s.layout().get(&label)?.dim;
        let outcomes = rng.random_range(2..=3);
        let m = random_channel(d, d, outcomes, rng)?;
        Ok((vec![label], m, fresh_label(s, "m")))
    };
    let eve_classical = || -> Result<String> {
        of(Party::Eve)
            .into_iter()
            .find(|l| is_classical(s, l).unwrap_or(false))
            .ok_or_else(|| missing("classical Eve"))
    };
    Ok(match kind {
        StepKind::LocalA => local_step(Party::Alice, rng)?,
        StepKind::LocalB => local_step(Party::Bob, rng)?,
        StepKind::ReversibleE => {
            let label = pick(&of(Party::Eve), rng).ok_or_else(|| missing("Eve"))?;
            let d = s.layout().get(&label)?.dim;
            let d_out = d + rng.random_range(0..=1);
            let channel = ChannelMap::isometry(sample::isometry_with(d, d_out, rng)?)?;
            Step::ReversibleE { on: vec![label.clone()], channel, out: vec![OutRegister::new(label, d_out)], bypass: false }
        }
        StepKind::QuantumAToE => {
            Step::QuantumToE { label: pick(&of(Party::Alice), rng).ok_or_else(|| missing("Alice"))?, from: Party::Alice }
        }
        StepKind::QuantumBToE => {
            Step::QuantumToE { label: pick(&of(Party::Bob), rng).ok_or_else(|| missing("Bob"))?, from: Party::Bob }
        }
        StepKind::BroadcastA | StepKind::BroadcastB => {
            let party = if kind == StepKind::BroadcastA { Party::Alice } else { Party::Bob };
            let (on, m, message) = instrument(party, rng)?;
            let copies = [format!("{message}c"), format!("{message}e")];
            if party == Party::Alice {
                Step::BroadcastA { on, measurement: Some(m), message, copies }
            } else {
                Step::BroadcastB { on, measurement: Some(m), message, copies }
            }
        }
        StepKind::ClassicalAToE | StepKind::ClassicalBToE => {
            let party = if kind == StepKind::ClassicalAToE { Party::Alice } else { Party::Bob };
            let (on, m, message) = instrument(party, rng)?;
            let copy = format!("{message}e");
            let measurement = Some(m);
            if party == Party::Alice {
                Step::ClassicalAE { direction: Direction::ToEve, on, measurement, message, copy }
            } else {
                Step::ClassicalBE { direction: Direction::ToEve, on, measurement, message, copy }
            }
        }
        StepKind::ClassicalEToA | StepKind::ClassicalEToB => {
            let message = eve_classical()?;
            let copy = fresh_label(s, "c");
            let (on, measurement, direction) = (vec![], None, Direction::FromEve);
            if kind == StepKind::ClassicalEToA {
                Step::ClassicalAE { direction, on, measurement, message, copy }
            } else {
                Step::ClassicalBE { direction, on, measurement, message, copy }
            }
        }
    })
}

/// `sum_m r_m |m><m|^M (x) rho_m` with `M` Eve's, over HS-random `rho_m`
/// on `regs`; a state on which Eve has a classical register to send.
pub fn random_cq_state<R: Rng + ?Sized>(regs: &[(&str, usize, Party)], m_label: &str, n: usize, rng: &mut R) -> Result<DensityState> {
    let r = sample::probabilities(n, rng);
    let parts = (0..n)
        .map(|_| sample::density_hs_with(regs, rng))
        .collect::<Result<Vec<_>>>()?;
    let flags = (0..n).map(|m| DensityState::basis(m_label, n, Party::Eve, m)).collect::<Result<Vec<_>>>()?;
    let blocks = parts.iter().zip(&flags).map(|(p, f)| p.tensor(f)).collect::<Result<Vec<_>>>()?;
    DensityState::mixture(&r.iter().copied().zip(blocks.iter()).collect::<Vec<_>>())
}

/// The free protocol generating the Markov state of `c` from the dummy
/// state on `A, B, E`: Alice samples `J` and broadcasts it (Eve keeps her
/// copy as `E0`), Alice and Bob prepare `sigma_J`, `tau_J` and send `E_L`,
/// `E_R` to Eve, then discard their copies of `J`. The result is
/// `build_markov(c)` with `E` split into `E0, EL, ER`, next to Eve's
/// untouched dummy register `E`.
pub fn prop1_script(c: &MarkovComponents, dummy: &RegisterLayout) -> Result<Vec<Step>> {
    let d = c.dims()?;
    let (da_in, db_in) = (dummy.get("A")?.dim, dummy.get("B")?.dim);
    let p = DensityState::diagonal("J", Party::Alice, &c.entries.iter().map(|e| e.p).collect::<Vec<_>>())?;
    let sigmas: Vec<&DensityState> = c.entries.iter().map(|e| &e.sigma).collect();
    let taus: Vec<&DensityState> = c.entries.iter().map(|e| &e.tau).collect();
    let n = d.e0;
    Ok(vec![
        Step::LocalA { on: vec![], channel: Some(ChannelMap::prepare(&p)), out: vec![OutRegister::new("J", n)] },
        Step::BroadcastA { on: vec![], measurement: None, message: "J".into(), copies: ["JB".into(), "E0".into()] },
        Step::LocalA {
            on: vec!["A".into(), "J".into()],
            channel: Some(controlled_preparation(da_in, &sigmas)?),
            out: vec![OutRegister::new("A", d.a), OutRegister::new("EL", d.e_l), OutRegister::new("J", n)],
        },
        Step::QuantumToE { label: "EL".into(), from: Party::Alice },
        Step::LocalB {
            on: vec!["B".into(), "JB".into()],
            channel: Some(controlled_preparation(db_in, &taus)?),
            out: vec![OutRegister::new("B", d.b), OutRegister::new("ER", d.e_r), OutRegister::new("JB", n)],
        },
        Step::QuantumToE { label: "ER".into(), from: Party::Bob },
        Step::LocalA { on: vec!["J".into()], channel: None, out: vec![] },
        Step::LocalB { on: vec!["JB".into()], channel: None, out: vec![] },
    ])
}

/// `(in, J) -> (state_J, J)`: discards `in` and prepares `states[j]` when
/// the control reads `j`.
fn controlled_preparation(d_in: usize, states: &[&DensityState]) -> Result<ChannelMap> {
    let n = states.len();
    let d_out = states[0].dim();
    let mut kraus = Vec::new();
    for (j, st) in states.iter().enumerate() {
        let (vals, vecs) = linalg::eigh(st.matrix());
        for (r, &lam) in vals.iter().enumerate() {
            if lam <= linalg::SUPPORT_TOL {
                continue;
            }
            for x in 0..d_in {
                let mut k = CMatrix::zeros(d_out * n, d_in * n);
                for o in 0..d_out {
                    k[(o * n + j, x * n + j)] = vecs[(o, r)] * lam.sqrt();
                }
                kraus.push(k);
            }
        }
    }
    ChannelMap::new(kraus)
}
