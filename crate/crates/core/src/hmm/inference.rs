use super::{log_add_exp, HmmParams, LogParams};
use crate::{Error, Result};

/// Most likely hidden path for one observation sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSequence {
    /// `states[i]` is the state of the interval `deltas[i]`.
    pub states: Vec<u8>,
    /// Log joint probability of the path and the observations.
    pub log_joint: f64,
}

/// Log-domain Viterbi scores and backpointers.
#[derive(Debug, Clone)]
pub struct ViterbiTable {
    pub delta_table: Vec<[f64; 2]>,
    /// `backpointers[i][j]`: best predecessor of state `j` at step `i` (unused at 0).
    pub backpointers: Vec<[u8; 2]>,
}

/// Log-domain forward variables `alpha[i][j] = log P(Δ_1..Δ_{i+1}, Q_{i+1} = j)`.
#[derive(Debug, Clone)]
pub struct ForwardTable {
    pub alpha_table: Vec<[f64; 2]>,
}

impl ForwardTable {
    pub fn loglik(&self) -> f64 {
        self.alpha_table
            .last()
            .map(|a| log_add_exp(a[0], a[1]))
            .unwrap_or(f64::NEG_INFINITY)
    }
}

fn check_inputs(deltas: &[f64], params: &HmmParams) -> Result<LogParams> {
    if deltas.is_empty() {
        return Err(Error::EmptySequence);
    }
    if let Some(d) = deltas.iter().find(|d| !(**d >= 0.0) || !d.is_finite()) {
        return Err(Error::Domain(format!(
            "interval must be finite and non-negative, got {d}"
        )));
    }
    params.validate()?;
    Ok(params.logs())
}

/// Log of the joint probability of a state path and the observations.
///
/// The emission of the first interval is included, consistent with the
/// Viterbi and forward initialisations.
pub fn log_joint(deltas: &[f64], states: &[u8], params: &HmmParams) -> f64 {
    assert_eq!(
        deltas.len(),
        states.len(),
        "path length must match observations"
    );
    if deltas.is_empty() {
        return 0.0;
    }
    let lp = params.logs();
    let mut acc = lp.pi[states[0] as usize] + lp.emission(states[0] as usize, deltas[0]);
    for i in 1..deltas.len() {
        let (k, j) = (states[i - 1] as usize, states[i] as usize);
        acc += lp.trans[k][j] + lp.emission(j, deltas[i]);
    }
    acc
}

pub fn viterbi_table(deltas: &[f64], params: &HmmParams) -> Result<ViterbiTable> {
    let lp = check_inputs(deltas, params)?;
    Ok(viterbi_table_unchecked(deltas, &lp))
}

fn viterbi_table_unchecked(deltas: &[f64], lp: &LogParams) -> ViterbiTable {
    let t = deltas.len();
    let mut delta_table = Vec::with_capacity(t);
    let mut backpointers = Vec::with_capacity(t);
    delta_table.push([
        lp.pi[0] + lp.emission(0, deltas[0]),
        lp.pi[1] + lp.emission(1, deltas[0]),
    ]);
    backpointers.push([0, 0]);
    for &d in &deltas[1..] {
        let prev: [f64; 2] = *delta_table.last().expect("non-empty");
        let mut row = [0.0; 2];
        let mut bp = [0u8; 2];
        for j in 0..2 {
            let via0 = prev[0] + lp.trans[0][j];
            let via1 = prev[1] + lp.trans[1][j];
            // ties go to state 0
            let (best, k) = if via1 > via0 { (via1, 1) } else { (via0, 0) };
            row[j] = best + lp.emission(j, d);
            bp[j] = k;
        }
        delta_table.push(row);
        backpointers.push(bp);
    }
    ViterbiTable {
        delta_table,
        backpointers,
    }
}

/// Most likely state path; ties are broken toward state 0.
pub fn viterbi_decode(deltas: &[f64], params: &HmmParams) -> Result<StateSequence> {
    let lp = check_inputs(deltas, params)?;
    let table = viterbi_table_unchecked(deltas, &lp);
    let t = deltas.len();
    let last = table.delta_table[t - 1];
    let mut state: u8 = if last[1] > last[0] { 1 } else { 0 };
    let log_joint = last[state as usize];
    let mut states = vec![0u8; t];
    states[t - 1] = state;
    for i in (1..t).rev() {
        state = table.backpointers[i][state as usize];
        states[i - 1] = state;
    }
    Ok(StateSequence { states, log_joint })
}

pub fn forward_table(deltas: &[f64], params: &HmmParams) -> Result<ForwardTable> {
    let lp = check_inputs(deltas, params)?;
    Ok(forward_table_unchecked(deltas, &lp))
}

pub(crate) fn forward_table_unchecked(deltas: &[f64], lp: &LogParams) -> ForwardTable {
    let mut alpha_table = Vec::with_capacity(deltas.len());
    alpha_table.push([
        lp.pi[0] + lp.emission(0, deltas[0]),
        lp.pi[1] + lp.emission(1, deltas[0]),
    ]);
    for &d in &deltas[1..] {
        let prev: [f64; 2] = *alpha_table.last().expect("non-empty");
        let mut row = [0.0; 2];
        for (j, slot) in row.iter_mut().enumerate() {
            *slot =
                log_add_exp(prev[0] + lp.trans[0][j], prev[1] + lp.trans[1][j]) + lp.emission(j, d);
        }
        alpha_table.push(row);
    }
    ForwardTable { alpha_table }
}

/// `log P(Δ_1..Δ_T)` with the hidden states summed out.
pub fn forward_loglik(deltas: &[f64], params: &HmmParams) -> Result<f64> {
    let lp = check_inputs(deltas, params)?;
    // Rolling two-slot recursion; the table is only needed by callers that ask for it.
    let mut alpha = [
        lp.pi[0] + lp.emission(0, deltas[0]),
        lp.pi[1] + lp.emission(1, deltas[0]),
    ];
    for &d in &deltas[1..] {
        alpha = [
            log_add_exp(alpha[0] + lp.trans[0][0], alpha[1] + lp.trans[1][0]) + lp.emission(0, d),
            log_add_exp(alpha[0] + lp.trans[0][1], alpha[1] + lp.trans[1][1]) + lp.emission(1, d),
        ];
    }
    Ok(log_add_exp(alpha[0], alpha[1]))
}

/// `beta[i][j] = log P(Δ_{i+2}..Δ_T | Q_{i+1} = j)`.
pub(crate) fn backward_table_unchecked(deltas: &[f64], lp: &LogParams) -> Vec<[f64; 2]> {
    let t = deltas.len();
    let mut beta = vec![[0.0f64; 2]; t];
    for i in (0..t.saturating_sub(1)).rev() {
        let next = beta[i + 1];
        let d = deltas[i + 1];
        let e = [lp.emission(0, d) + next[0], lp.emission(1, d) + next[1]];
        for k in 0..2 {
            beta[i][k] = log_add_exp(lp.trans[k][0] + e[0], lp.trans[k][1] + e[1]);
        }
    }
    beta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::log_sum_exp;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive oracle: every one of the 2^T paths, scored independently of
    /// the recursions above.
    fn brute_force(deltas: &[f64], p: &HmmParams) -> (Vec<u8>, f64, f64) {
        let t = deltas.len();
        let emit = |j: usize, d: f64| p.rates[j].ln() - p.rates[j] * d;
        let mut best_path = vec![];
        let mut best = f64::NEG_INFINITY;
        let mut all = Vec::with_capacity(1 << t);
        for mask in 0u32..(1 << t) {
            let path: Vec<u8> = (0..t).map(|i| ((mask >> (t - 1 - i)) & 1) as u8).collect();
            let mut s = p.pi[path[0] as usize].ln() + emit(path[0] as usize, deltas[0]);
            for i in 1..t {
                s += p.trans[path[i - 1] as usize][path[i] as usize].ln()
                    + emit(path[i] as usize, deltas[i]);
            }
            // masks enumerate in lexicographic order, so strict > keeps the
            // lexicographically smallest (most state-0) path on ties
            if s > best {
                best = s;
                best_path = path;
            }
            all.push(s);
        }
        (best_path, best, log_sum_exp(&all))
    }

    fn random_params(rng: &mut ChaCha8Rng) -> HmmParams {
        let p1: f64 = rng.random_range(0.01..0.99);
        let b01: f64 = rng.random_range(0.01..0.99);
        let b10: f64 = rng.random_range(0.01..0.99);
        let l0 = 10f64.powf(rng.random_range(-6.5..-4.0));
        let l1 = 10f64.powf(rng.random_range(-3.5..-1.0));
        HmmParams::from_switching(p1, b01, b10, [l0, l1]).unwrap()
    }

    fn random_deltas(rng: &mut ChaCha8Rng, t: usize) -> Vec<f64> {
        (0..t)
            .map(|_| 10f64.powf(rng.random_range(0.0..7.0)).round().max(1.0))
            .collect()
    }

    #[test]
    fn single_step_prefers_fast_state() {
        let p = HmmParams::new([0.5, 0.5], [[0.9, 0.1], [0.1, 0.9]], [0.001, 0.1]).unwrap();
        let s = viterbi_decode(&[5.0], &p).unwrap();
        assert_eq!(s.states, vec![1]);
        let expected = (0.5f64 * 0.1 * (-0.5f64).exp()).ln();
        assert!((s.log_joint - expected).abs() < 1e-12);
    }

    #[test]
    fn equal_emissions_follow_initial_mass() {
        let p = HmmParams::new([1.0, 0.0], [[0.9, 0.1], [0.5, 0.5]], [0.01, 0.01]).unwrap();
        let s = viterbi_decode(&[10.0, 1.0, 1e5, 3.0, 7.0], &p).unwrap();
        assert_eq!(s.states, vec![0; 5]);
    }

    #[test]
    fn empty_sequence_errors() {
        let p = HmmParams::new([0.5, 0.5], [[0.9, 0.1], [0.1, 0.9]], [0.001, 0.1]).unwrap();
        assert!(matches!(viterbi_decode(&[], &p), Err(Error::EmptySequence)));
        assert!(matches!(forward_loglik(&[], &p), Err(Error::EmptySequence)));
        assert!(matches!(forward_loglik(&[-1.0], &p), Err(Error::Domain(_))));
    }

    #[test]
    fn forward_single_step_and_identity_chain() {
        let p = HmmParams::new([0.3, 0.7], [[0.8, 0.2], [0.4, 0.6]], [1e-4, 1e-2]).unwrap();
        let d: f64 = 250.0;
        let expected = (0.3 * 1e-4 * (-1e-4 * d).exp() + 0.7 * 1e-2 * (-1e-2 * d).exp()).ln();
        assert!((forward_loglik(&[d], &p).unwrap() - expected).abs() < 1e-12);

        let p = HmmParams::new([1.0, 0.0], [[1.0, 0.0], [0.0, 1.0]], [1e-4, 1e-2]).unwrap();
        let ds = [10.0, 5000.0, 3.0, 1e6];
        let expected: f64 = ds.iter().map(|&d| (1e-4f64).ln() - 1e-4 * d).sum();
        assert!((forward_loglik(&ds, &p).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn recursions_match_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..300 {
            let p = random_params(&mut rng);
            let t = rng.random_range(1..=10);
            let ds = random_deltas(&mut rng, t);
            let (path, best, total) = brute_force(&ds, &p);
            let v = viterbi_decode(&ds, &p).unwrap();
            assert_eq!(v.states, path);
            assert!((v.log_joint - best).abs() <= 1e-9 * best.abs());
            let f = forward_loglik(&ds, &p).unwrap();
            assert!((f - total).abs() <= 1e-9 * total.abs());
            assert!((forward_table(&ds, &p).unwrap().loglik() - f).abs() <= 1e-12 * f.abs());
            assert!(f >= v.log_joint);
        }
    }

    #[test]
    fn backward_and_forward_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let p = random_params(&mut rng);
            let ds = random_deltas(&mut rng, 20);
            let lp = p.logs();
            let fwd = forward_table_unchecked(&ds, &lp);
            let bwd = backward_table_unchecked(&ds, &lp);
            let ll = fwd.loglik();
            for i in 0..ds.len() {
                let via = log_add_exp(
                    fwd.alpha_table[i][0] + bwd[i][0],
                    fwd.alpha_table[i][1] + bwd[i][1],
                );
                assert!((via - ll).abs() <= 1e-9 * ll.abs());
            }
        }
    }

    #[test]
    fn viterbi_scores_match_log_joint() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_params(&mut rng);
        let ds = random_deltas(&mut rng, 40);
        let v = viterbi_decode(&ds, &p).unwrap();
        assert!((log_joint(&ds, &v.states, &p) - v.log_joint).abs() < 1e-9 * v.log_joint.abs());
    }
}
