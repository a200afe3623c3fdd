use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::HmmParams;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SampledSequence {
    pub deltas: Vec<f64>,
    pub states: Vec<u8>,
}

/// Draws `t` intervals and their hidden states; deterministic in `seed`.
pub fn sample_sequence(params: &HmmParams, t: usize, seed: u64) -> Result<SampledSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_sequence_with(params, t, &mut rng)
}

/// Same as [`sample_sequence`] but drawing from a caller-owned generator.
pub fn sample_sequence_with<R: Rng + ?Sized>(
    params: &HmmParams,
    t: usize,
    rng: &mut R,
) -> Result<SampledSequence> {
    params.validate()?;
    if t == 0 {
        return Err(Error::Domain("sequence length must be at least 1".into()));
    }
    let exps = [
        Exp::new(params.rates[0]).map_err(|e| Error::Domain(e.to_string()))?,
        Exp::new(params.rates[1]).map_err(|e| Error::Domain(e.to_string()))?,
    ];
    let mut deltas = Vec::with_capacity(t);
    let mut states = Vec::with_capacity(t);
    let mut q = usize::from(rng.random::<f64>() < params.pi[1]);
    for i in 0..t {
        if i > 0 {
            q = usize::from(rng.random::<f64>() < params.trans[q][1]);
        }
        states.push(q as u8);
        deltas.push(exps[q].sample(rng));
    }
    Ok(SampledSequence { deltas, states })
}
