//! Derivative-free local search over isometries `W: R -> A' B' E' K`.
//!
//! Each restart walks `W <- cayley(t H) W` with `H` a random unit Hermitian
//! direction, keeps a move only when it lowers the objective, and halves
//! `t` after `patience` consecutive rejections. Restarts run on the rayon
//! pool with seeds derived from the master seed, and the best result is
//! chosen by `(objective, restart_id)`, so the outcome does not depend on
//! the number of workers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::witness::{baseline_witnesses, ExtDims, Purified, Witness};
use crate::entropy::{self, Partition};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::sample;
use crate::state::{check_budget, dim_budget, DensityState};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateConfig {
    /// `(a', b', e')` tried in order, each with every restart.
    pub ext_schedule: Vec<[usize; 3]>,
    /// Number of flag values; defaults to the rank of the target.
    pub k: Option<usize>,
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
    /// A restart stops once its step falls below this.
    pub tol: f64,
    pub initial_step: f64,
    pub patience: usize,
    /// Extra candidates (e.g. a known Markov witness), evaluated as given.
    #[serde(skip)]
    pub seeds: Vec<Witness>,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            ext_schedule: vec![[1, 1, 1], [2, 2, 2]],
            k: None,
            restarts: 16,
            max_iters: 400,
            seed: 0,
            tol: 1e-4,
            initial_step: 0.5,
            patience: 8,
            seeds: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub restart_id: usize,
    /// `baseline`, `seed` or `search`.
    pub kind: String,
    pub ext: ExtDims,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NmfEstimate {
    /// `M_I` of the target.
    pub lower_bits: f64,
    /// Smallest witness objective found.
    pub upper_bits: f64,
    pub gap: f64,
    pub best: Witness,
    pub best_restart: usize,
    pub trace: Vec<TraceEntry>,
    /// Extension sizes skipped because the witness would exceed the
    /// dimension budget; the estimate is then best-so-far.
    pub skipped: Vec<ExtDims>,
    pub budget_exhausted: bool,
    pub config: EstimateConfig,
}

struct Outcome {
    entry: TraceEntry,
    witness: Witness,
}

/// Brackets `M_F(rho)` between `M_I(rho)` and the best witness objective.
/// Registers with the reference party are traced out first.
pub fn estimate(rho: &DensityState, cfg: &EstimateConfig) -> Result<NmfEstimate> {
    let pur = Purified::new(rho)?;
    let target = pur.target().clone();
    let lower_bits = 0.5 * entropy::cqmi_partition(&target, &Partition::from_parties(target.layout()))?;
    let rank = pur.rank();
    let k = cfg.k.unwrap_or(rank);
    if k == 0 || cfg.ext_schedule.iter().any(|e| e.contains(&0)) {
        return Err(Error::BadDims("extension and flag dimensions must be positive".into()));
    }

    let mut outcomes: Vec<Outcome> = Vec::new();
    let mut next_id = 0usize;
    let mut skipped = Vec::new();

    match baseline_witnesses(&target) {
        Ok(base) => {
            for w in base {
                outcomes.push(evaluated(next_id, "baseline", w, 0));
                next_id += 1;
            }
        }
        Err(Error::BudgetExceeded { .. }) => skipped.push(ExtDims { a: rank, b: rank, e: 1, k: 1 }),
        Err(e) => return Err(e),
    }
    for w in &cfg.seeds {
        if w.marginal_distance(&target)? > 1e-9 {
            return Err(Error::BadEnsemble("seed witness does not reproduce the target".into()));
        }
        outcomes.push(evaluated(next_id, "seed", w.clone(), 0));
        next_id += 1;
    }

    let mut jobs = Vec::new();
    for e in &cfg.ext_schedule {
        let ext = ExtDims { a: e[0], b: e[1], e: e[2], k };
        if ext.product() < rank {
            return Err(Error::DimensionTooSmall(format!(
                "a'b'e'k = {} is below the rank {rank} for extension {e:?}",
                ext.product()
            )));
        }
        if check_budget(target.dim() * ext.product()).is_err() {
            skipped.push(ext);
            continue;
        }
        for r in 0..cfg.restarts {
            jobs.push((next_id, ext, r));
            next_id += 1;
        }
    }
    let searched: Vec<Result<Outcome>> =
        jobs.par_iter().map(|&(id, ext, r)| search(&pur, ext, r == 0, id, cfg)).collect();
    for o in searched {
        outcomes.push(o?);
    }
    if outcomes.is_empty() {
        return Err(Error::BudgetExceeded { dim: target.dim() * rank * rank, budget: dim_budget() });
    }

    let best_idx = (0..outcomes.len())
        .min_by(|&i, &j| {
            let (a, b) = (&outcomes[i].entry, &outcomes[j].entry);
            a.objective.total_cmp(&b.objective).then(a.restart_id.cmp(&b.restart_id))
        })
        .expect("nonempty");
    let upper_bits = outcomes[best_idx].entry.objective;
    let best_restart = outcomes[best_idx].entry.restart_id;
    let best = outcomes[best_idx].witness.clone();
    let trace = outcomes.into_iter().map(|o| o.entry).collect();
    Ok(NmfEstimate {
        lower_bits,
        upper_bits,
        gap: (upper_bits - lower_bits).max(0.0),
        best,
        best_restart,
        trace,
        budget_exhausted: !skipped.is_empty(),
        skipped,
        config: cfg.clone(),
    })
}

fn evaluated(id: usize, kind: &str, w: Witness, iterations: usize) -> Outcome {
    let entry = TraceEntry { restart_id: id, kind: kind.into(), ext: w.ext_dims(), objective: w.objective(), iterations };
    Outcome { entry, witness: w }
}

/// One restart. The first restart of each extension size starts from the
/// eigenbasis embedding (reference index into the low slots); the others
/// from a random isometry.
fn search(pur: &Purified, ext: ExtDims, eigen_start: bool, id: usize, cfg: &EstimateConfig) -> Result<Outcome> {
    let mut rng = sample::rng(sample::derive_seed(cfg.seed, id as u64));
    let n = ext.product();
    let rank = pur.rank();
    let w = if eigen_start {
        // reference r -> K = r when k >= rank, otherwise spread over (ext, K)
        CMatrix::from_fn(n, rank, |i, j| {
            let slot = if ext.k >= rank { j } else { j * (n / rank) };
            if i == slot {
                linalg::ONE
            } else {
                linalg::ZERO
            }
        })
    } else {
        sample::isometry_with(rank, n, &mut rng)?
    };
    let (w, f, iters) = local_search(w, |w| pur.evaluate(w, &ext), &cfg.search(), &mut rng)?;
    let witness = pur.witness(&w, &ext)?;
    let entry = TraceEntry { restart_id: id, kind: "search".into(), ext, objective: f, iterations: iters };
    Ok(Outcome { entry, witness })
}

/// Step-size schedule of the local search.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SearchParams {
    pub max_iters: usize,
    pub tol: f64,
    pub initial_step: f64,
    pub patience: usize,
}

impl EstimateConfig {
    pub(crate) fn search(&self) -> SearchParams {
        SearchParams { max_iters: self.max_iters, tol: self.tol, initial_step: self.initial_step, patience: self.patience }
    }
}

/// Accept-if-better walk `W <- cayley(t H) W` from `w`; returns the final
/// isometry, its objective and the number of proposals made.
pub(crate) fn local_search<R: rand::Rng + ?Sized>(
    mut w: CMatrix,
    f: impl Fn(&CMatrix) -> Result<f64>,
    p: &SearchParams,
    rng: &mut R,
) -> Result<(CMatrix, f64, usize)> {
    let n = w.nrows();
    let mut best = f(&w)?;
    let mut step = p.initial_step;
    let mut fails = 0usize;
    let mut iters = 0usize;
    if n < 2 {
        return Ok((w, best, 0));
    }
    while iters < p.max_iters && step >= p.tol {
        iters += 1;
        let h = sample::hermitian_direction(n, rng);
        let mut cand = linalg::cayley(&h.scale(step)) * &w;
        if iters % 64 == 0 {
            cand = linalg::orthonormalize_columns(&cand).unwrap_or(cand);
        }
        let g = f(&cand)?;
        if g < best {
            w = cand;
            best = g;
            fails = 0;
        } else {
            fails += 1;
            if fails >= p.patience {
                step *= 0.5;
                fails = 0;
            }
        }
    }
    Ok((w, best, iters))
}

/// Single-copy bracket next to the per-copy bracket of `rho (x) rho`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorPowerBracket {
    pub single: [f64; 2],
    pub per_copy: [f64; 2],
}

/// Per-copy bracket on two copies; the second copy's registers get a `#2`
/// suffix. Only meant for tiny states: the two-copy witness space grows
/// quickly.
pub fn tensor_power_bracket(rho: &DensityState, cfg: &EstimateConfig) -> Result<TensorPowerBracket> {
    let one = estimate(rho, cfg)?;
    let mut copy = rho.clone();
    for l in rho.layout().labels() {
        copy = copy.relabel(&l, &format!("{l}#2"))?;
    }
    let two = rho.tensor(&copy)?;
    let cfg2 = EstimateConfig { seeds: Vec::new(), ..cfg.clone() };
    let est2 = estimate(&two, &cfg2)?;
    Ok(TensorPowerBracket {
        single: [one.lower_bits, one.upper_bits],
        per_copy: [est2.lower_bits / 2.0, est2.upper_bits.min(2.0 * one.upper_bits) / 2.0],
    })
}
