//! Randomized invariant suites. Every trial draws its randomness from
//! `derive_seed(seed, trial)`, so reports do not depend on how trials are
//! spread over worker threads.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entropy::{self, cqmi_partition, m_i_parties, mutual_information, Partition};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};
use crate::markov::{build_markov, random_components};
use crate::nmf::{baseline_witnesses, estimate, EstimateConfig, witness_mix, witness_tensor, Member, Role, Witness, WitnessRegister};
use crate::sample;
use crate::scenario::{self, random_cq_state, random_step, Scenario, Step, StepKind};
use crate::state::{DensityState, Party, Register, RegisterLayout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    /// `I(A:B|E) >= 0` on Hilbert-Schmidt random states.
    Ssa,
    /// `M_I` does not increase under any single step of the free classes.
    Lemma1,
    /// Bracket and witness identities of the non-Markovianity of formation.
    PSuite,
    /// Random `Omega` scripts keep Markov chains Markov.
    MarkovClosure,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Ssa, Suite::Lemma1, Suite::PSuite, Suite::MarkovClosure];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Ssa => "ssa",
            Suite::Lemma1 => "lemma1",
            Suite::PSuite => "p_suite",
            Suite::MarkovClosure => "markov_closure",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| Error::UnknownName(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzConfig {
    pub trials: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        Self { trials: 100, seed: 0, tol: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub check: String,
    pub trial: usize,
    pub value: f64,
    pub bound: f64,
    pub state: DensityState,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckCount {
    pub check: String,
    pub passed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzReport {
    pub suite: Suite,
    pub config: FuzzConfig,
    pub checks: Vec<CheckCount>,
    pub passed: usize,
    pub failed: usize,
    pub counterexamples: Vec<Counterexample>,
    pub notes: Vec<String>,
}

impl FuzzReport {
    pub fn ok(&self) -> bool {
        self.failed == 0
    }
}

struct Outcome {
    check: String,
    value: f64,
    bound: f64,
    state: Option<DensityState>,
    steps: Vec<Step>,
}

impl Outcome {
    /// Passes when `value <= bound`.
    fn le(check: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { check: check.into(), value, bound, state: None, steps: vec![] }
    }

    fn on(mut self, s: &DensityState, steps: &[Step]) -> Self {
        self.state = Some(s.clone());
        self.steps = steps.to_vec();
        self
    }

    fn passed(&self) -> bool {
        self.value <= self.bound
    }
}

pub fn run_suite(suite: Suite, cfg: &FuzzConfig) -> Result<FuzzReport> {
    let (jobs, notes): (usize, Vec<String>) = match suite {
        Suite::Ssa => (
            cfg.trials + cfg.trials / 5,
            vec![format!("{} states on (2,2,2) and {} on (2,2,4)", cfg.trials, cfg.trials / 5)],
        ),
        Suite::Lemma1 => (
            cfg.trials * StepKind::OMEGA_STAR.len(),
            vec![format!("{} (state, step) pairs for each of {} step kinds", cfg.trials, StepKind::OMEGA_STAR.len())],
        ),
        Suite::PSuite => (
            cfg.trials,
            vec!["additivity/linearity of the optimized value itself is open; only witness-level identities are checked, mixtures are observed without a verdict".into()],
        ),
        Suite::MarkovClosure => (cfg.trials, vec![]),
    };
    let outcomes: Vec<Vec<Outcome>> = (0..jobs)
        .into_par_iter()
        .map(|t| {
            let mut rng = sample::rng(sample::derive_seed(cfg.seed, t as u64));
            match suite {
                Suite::Ssa => ssa_trial(t, cfg, &mut rng),
                Suite::Lemma1 => lemma1_trial(StepKind::OMEGA_STAR[t / cfg.trials.max(1)], cfg, &mut rng),
                Suite::PSuite => p_trial(cfg, &mut rng),
                Suite::MarkovClosure => closure_trial(&mut rng),
            }
        })
        .collect::<Result<_>>()?;

    let mut checks: Vec<CheckCount> = Vec::new();
    let mut counterexamples = Vec::new();
    for (trial, os) in outcomes.into_iter().enumerate() {
        for o in os {
            let ok = o.passed();
            let pos = match checks.iter().position(|c| c.check == o.check) {
                Some(p) => p,
                None => {
                    checks.push(CheckCount { check: o.check.clone(), passed: 0, failed: 0 });
                    checks.len() - 1
                }
            };
            if ok {
                checks[pos].passed += 1;
            } else {
                checks[pos].failed += 1;
                if let Some(state) = o.state {
                    counterexamples.push(Counterexample { check: o.check, trial, value: o.value, bound: o.bound, state, steps: o.steps });
                }
            }
        }
    }
    let mut notes = notes;
    if suite == Suite::PSuite {
        notes.push(mixture_observations(cfg)?);
    }
    let passed = checks.iter().map(|c| c.passed).sum();
    let failed = checks.iter().map(|c| c.failed).sum();
    Ok(FuzzReport { suite, config: cfg.clone(), checks, passed, failed, counterexamples, notes })
}

const MIXTURE_SAMPLES: usize = 10;

/// Whether the optimized value is linear on flagged mixtures is open.
/// Brackets for `sum_m r_m rho_m (x) |m><m|^M` (M with Eve) are compared
/// against the mixed brackets of the parts; a disjoint pair is reported,
/// not counted as a failure, since it may just be a loose upper bound.
fn mixture_observations(cfg: &FuzzConfig) -> Result<String> {
    let n = cfg.trials.min(MIXTURE_SAMPLES);
    let base = sample::derive_seed(cfg.seed, u64::MAX);
    let disjoint: Vec<bool> = (0..n)
        .into_par_iter()
        .map(|t| {
            let seed = sample::derive_seed(base, t as u64);
            let mut rng = sample::rng(seed);
            let quick = EstimateConfig { ext_schedule: vec![[1, 1, 1]], restarts: 2, max_iters: 60, seed, ..EstimateConfig::default() };
            let r = rng.random_range(0.1..0.9);
            let parts = [sample::density_hs_with(&abe(2, 2, 2), &mut rng)?, sample::density_hs_with(&abe(2, 2, 2), &mut rng)?];
            let mut flagged = CMatrix::zeros(16, 16);
            for (m, (w, rho)) in [r, 1.0 - r].iter().zip(&parts).enumerate() {
                let mut flag = CMatrix::zeros(2, 2);
                flag[(m, m)] = 1.0.into();
                flagged += linalg::kron(rho.matrix(), &flag).scale(*w);
            }
            let layout = parts[0].layout().concat(&RegisterLayout::new(vec![Register::new("M", 2, Party::Eve)])?)?;
            let mix = estimate(&DensityState::new(layout, flagged)?, &quick)?;
            let (e0, e1) = (estimate(&parts[0], &quick)?, estimate(&parts[1], &quick)?);
            let lo = r * e0.lower_bits + (1.0 - r) * e1.lower_bits;
            let hi = r * e0.upper_bits + (1.0 - r) * e1.upper_bits;
            Ok(mix.upper_bits < lo - cfg.tol || mix.lower_bits > hi + cfg.tol)
        })
        .collect::<Result<_>>()?;
    let k = disjoint.iter().filter(|&&d| d).count();
    Ok(format!("mixture linearity of the optimized value (open): {k} of {n} flagged mixtures had brackets disjoint from the mixed brackets of their parts"))
}

fn abe(a: usize, b: usize, e: usize) -> [(&'static str, usize, Party); 3] {
    [("A", a, Party::Alice), ("B", b, Party::Bob), ("E", e, Party::Eve)]
}

fn ssa_trial<R: Rng + ?Sized>(t: usize, cfg: &FuzzConfig, rng: &mut R) -> Result<Vec<Outcome>> {
    let e = if t < cfg.trials { 2 } else { 4 };
    let s = sample::density_hs_with(&abe(2, 2, e), rng)?;
    let i = entropy::cqmi(&s, &["A"], &["B"], &["E"])?;
    Ok(vec![Outcome::le(format!("cqmi_nonnegative/22{e}"), -i, cfg.tol).on(&s, &[])])
}

/// A state for step `kind`: Hilbert-Schmidt random on `A B E`, or
/// classical-quantum with an extra classical register of Eve (always for
/// the downward kinds, which need one).
fn lemma1_state<R: Rng + ?Sized>(kind: StepKind, rng: &mut R) -> Result<DensityState> {
    let down = matches!(kind, StepKind::ClassicalEToA | StepKind::ClassicalEToB);
    if down || rng.random_bool(0.3) {
        let n = rng.random_range(2..=3);
        random_cq_state(&abe(2, 2, 2), "M", n, rng)
    } else {
        sample::density_hs_with(&abe(2, 2, 2), rng)
    }
}

fn lemma1_trial<R: Rng + ?Sized>(kind: StepKind, cfg: &FuzzConfig, rng: &mut R) -> Result<Vec<Outcome>> {
    let s = lemma1_state(kind, rng)?;
    let step = random_step(kind, &s, rng)?;
    let sc = Scenario::new(s.clone());
    let before = sc.m_i()?;
    let after = scenario::apply_step(&sc, &step)?.m_i()?;
    let steps = [step];
    let mut out = vec![Outcome::le(format!("m_i_nonincrease/{kind:?}"), after - before, cfg.tol).on(&s, &steps)];
    if kind == StepKind::ReversibleE {
        out.push(Outcome::le("reversible_invariance", (after - before).abs(), cfg.tol).on(&s, &steps));
    }
    Ok(out)
}

const CLOSURE_MAX_DIM: usize = 512;

fn closure_trial<R: Rng + ?Sized>(rng: &mut R) -> Result<Vec<Outcome>> {
    let entries = rng.random_range(1..=3);
    let (el, er) = (rng.random_range(1..=2), rng.random_range(1..=2));
    let c = random_components(entries, 2, 2, el, er, rng)?;
    let initial = build_markov(&c)?;
    let omega: Vec<StepKind> = StepKind::OMEGA_STAR.into_iter().filter(|k| k.in_omega()).collect();
    let len = rng.random_range(1..=4);
    let mut sc = Scenario::new(initial.clone());
    let mut steps = Vec::new();
    let mut attempts = 0;
    while steps.len() < len && attempts < 20 {
        attempts += 1;
        let kind = omega[rng.random_range(0..omega.len())];
        // a kind can be unavailable, e.g. once Alice has given everything away
        let Ok(step) = random_step(kind, &sc.state, rng) else { continue };
        // keep the states small: skip steps that would grow past the cap
        match scenario::apply_step(&sc, &step) {
            Ok(next) if next.state.dim() <= CLOSURE_MAX_DIM => sc = next,
            Ok(_) | Err(Error::BudgetExceeded { .. }) => continue,
            Err(e) => return Err(e),
        }
        steps.push(step);
    }
    let i = cqmi_partition(&sc.state, &Partition::from_parties(sc.state.layout()))?;
    Ok(vec![Outcome::le("markov_closure", i, 1e-8).on(&initial, &steps)])
}

/// Random witness with target registers `core` (dims and roles) and
/// extension sizes `(a', b', e')`, with `k` Haar-random members.
pub fn random_witness<R: Rng + ?Sized>(core: &[(&str, usize, Role)], ext: [usize; 3], k: usize, rng: &mut R) -> Result<Witness> {
    let mut regs: Vec<WitnessRegister> = core.iter().map(|&(l, d, r)| WitnessRegister::new(l, d, r)).collect();
    for ((l, d), r) in crate::nmf::EXT_LABELS.iter().zip(ext).zip([Role::AExt, Role::BExt, Role::EExt]) {
        regs.push(WitnessRegister::new(*l, d, r));
    }
    let d: usize = regs.iter().map(|r| r.dim).product();
    let members = sample::probabilities(k, rng)
        .into_iter()
        .map(|p| {
            let g: CVector = sample::gaussian_matrix(d, 1, rng).column(0).into_owned();
            let n = g.norm();
            Member { p, amplitudes: g.unscale(n) }
        })
        .collect();
    Witness::from_ensemble(regs, members)
}

fn suffixed(core: &[(&str, usize, Role)], suffix: &str) -> Vec<(String, usize, Role)> {
    core.iter().map(|&(l, d, r)| (format!("{l}{suffix}"), d, r)).collect()
}

fn p_trial<R: Rng + ?Sized>(cfg: &FuzzConfig, rng: &mut R) -> Result<Vec<Outcome>> {
    let tol = cfg.tol;
    let mut out = Vec::new();
    let best = |s: &DensityState| -> Result<f64> {
        Ok(baseline_witnesses(s)?.iter().map(Witness::objective).fold(f64::INFINITY, f64::min))
    };

    // lower and upper brackets of the baselines
    let s = sample::density_hs_with(&abe(2, 2, 2), rng)?;
    let upper = best(&s)?;
    let cap = entropy::entropy(&s, &["A"])?.min(entropy::entropy(&s, &["B"])?);
    out.push(Outcome::le("bracket_lower", m_i_parties(&s)? - upper, tol).on(&s, &[]));
    out.push(Outcome::le("bracket_upper", upper - cap, tol).on(&s, &[]));

    // pure states: the baseline is exact
    let psi = sample::pure_with(&abe(2, 2, 2), rng)?.to_density();
    let half_i = 0.5 * mutual_information(&psi, &["A"], &["B"])?;
    out.push(Outcome::le("pure_exact", (best(&psi)? - half_i).abs(), tol).on(&psi, &[]));

    // witness identities
    let ext = |rng: &mut R| [rng.random_range(1..=2), rng.random_range(1..=2), rng.random_range(1..=2)];
    let core = [("A", 2, Role::A), ("A0", 2, Role::A), ("B", 2, Role::B), ("E", 2, Role::E)];
    let e1 = ext(rng);
    let k1 = rng.random_range(1..=3);
    let w1 = random_witness(&core, e1, k1, rng)?;
    let o1 = w1.objective();
    out.push(Outcome::le("objective_forms", (o1 - w1.objective_dense()?).abs(), 1e-8));

    let small = [("A", 2, Role::A), ("B", 2, Role::B), ("E", 1, Role::E)];
    let owned = suffixed(&small, "2");
    let core2: Vec<(&str, usize, Role)> = owned.iter().map(|(l, d, r)| (l.as_str(), *d, *r)).collect();
    let e2 = ext(rng);
    let w2 = random_witness(&core2, e2, rng.random_range(1..=2), rng)?;
    let w2 = relabel_ext(&w2, "2")?;
    let t = witness_tensor(&w1, &w2)?;
    out.push(Outcome::le("tensor_additivity", (t.objective() - o1 - w2.objective()).abs(), tol));

    let w3 = random_witness(&core, ext(rng), rng.random_range(1..=3), rng)?;
    let r = rng.random_range(0.05..0.95);
    let mix = witness_mix(&[(r, w1.clone()), (1.0 - r, w3.clone())], "M")?;
    out.push(Outcome::le("mix_linearity", (mix.objective() - r * o1 - (1.0 - r) * w3.objective()).abs(), tol));

    out.push(Outcome::le("regroup_monotone", w1.regroup("A0")?.objective() - o1, tol));

    let dq = if rng.random_bool(0.5) { 2 } else { 4 };
    let with_q = [("A", 2, Role::A), ("B", 2, Role::B), ("E", 2, Role::E), ("Q", dq, Role::E)];
    let wq = random_witness(&with_q, ext(rng), rng.random_range(1..=2), rng)?;
    let moved = wq.move_to_alice("Q")?.objective() - wq.objective();
    out.push(Outcome::le("transport_increment", moved, (dq as f64).log2() + tol));
    Ok(out)
}

/// Gives the extension registers of `w` a suffix so it can be tensored
/// with a witness that uses the default extension labels.
fn relabel_ext(w: &Witness, suffix: &str) -> Result<Witness> {
    let regs = w
        .registers()
        .iter()
        .map(|r| {
            let label = if r.role.is_ext() { format!("{}{suffix}", r.label) } else { r.label.clone() };
            WitnessRegister::new(label, r.dim, r.role)
        })
        .collect();
    Witness::from_ensemble(regs, w.members().to_vec())
}
