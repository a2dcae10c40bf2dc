//! Non-Markovianity of formation: witnesses of the extension infimum, the
//! restart-parallel estimator that searches over them, and the
//! asymptotic-continuity bound.

mod estimate;
mod witness;

pub(crate) use estimate::{local_search, SearchParams};
pub use estimate::{estimate, tensor_power_bracket, EstimateConfig, NmfEstimate, TensorPowerBracket, TraceEntry};
pub use witness::{
    baseline_witnesses, markov_witness, witness_from_isometry, witness_mix, witness_tensor, ExtDims, Member,
    MemberJson, Purified, Role, Witness, WitnessJson, WitnessRegister, WitnessSource, EXT_LABELS,
};

use crate::entropy::binary_entropy;
use crate::error::{Error, Result};

/// `4 sqrt(eps) log2(dA dB) + 3 (1 + sqrt(eps)) h(sqrt(eps) / (1 + sqrt(eps)))`.
pub fn continuity_bound(eps: f64, d_a: usize, d_b: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::BadRange(format!("eps = {eps} is outside [0, 1]")));
    }
    if d_a == 0 || d_b == 0 {
        return Err(Error::BadRange("dimensions must be positive".into()));
    }
    let r = eps.sqrt();
    Ok(4.0 * r * ((d_a * d_b) as f64).log2() + 3.0 * (1.0 + r) * binary_entropy(r / (1.0 + r)))
}
