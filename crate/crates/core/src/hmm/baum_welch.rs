use super::inference::{backward_table_unchecked, forward_table_unchecked};
use super::{kmeans2_log_intervals, HmmParams, LogParams};
use crate::exec::Execution;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct BaumWelchConfig {
    pub max_iter: usize,
    /// Stop once `|ΔLL| / |LL|` falls below this.
    pub tol: f64,
    pub exec: Execution,
}

impl Default for BaumWelchConfig {
    fn default() -> Self {
        BaumWelchConfig {
            max_iter: 200,
            tol: 1e-6,
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HmmFit {
    pub params: HmmParams,
    /// Total log-likelihood of the parameters entering each E-step.
    pub log_likelihoods: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Expected sufficient statistics of one or more sequences.
#[derive(Debug, Clone, Copy, Default)]
struct Stats {
    loglik: f64,
    gamma: [f64; 2],
    gamma_delta: [f64; 2],
    gamma_first: [f64; 2],
    xi: [[f64; 2]; 2],
}

impl Stats {
    fn add(&mut self, o: &Stats) {
        self.loglik += o.loglik;
        for j in 0..2 {
            self.gamma[j] += o.gamma[j];
            self.gamma_delta[j] += o.gamma_delta[j];
            self.gamma_first[j] += o.gamma_first[j];
            for k in 0..2 {
                self.xi[j][k] += o.xi[j][k];
            }
        }
    }
}

fn e_step(deltas: &[f64], lp: &LogParams) -> Stats {
    let fwd = forward_table_unchecked(deltas, lp);
    let alpha = &fwd.alpha_table;
    let beta = backward_table_unchecked(deltas, lp);
    let ll = fwd.loglik();
    let mut s = Stats {
        loglik: ll,
        ..Stats::default()
    };
    for (i, &d) in deltas.iter().enumerate() {
        for j in 0..2 {
            let g = (alpha[i][j] + beta[i][j] - ll).exp();
            s.gamma[j] += g;
            s.gamma_delta[j] += g * d;
            if i == 0 {
                s.gamma_first[j] = g;
            }
        }
        if i > 0 {
            for k in 0..2 {
                for j in 0..2 {
                    s.xi[k][j] +=
                        (alpha[i - 1][k] + lp.trans[k][j] + lp.emission(j, d) + beta[i][j] - ll)
                            .exp();
                }
            }
        }
    }
    s
}

fn m_step(s: &Stats, prev: &HmmParams) -> HmmParams {
    let mut next = *prev;
    for j in 0..2 {
        if s.gamma[j] > 0.0 && s.gamma_delta[j] > 0.0 {
            next.rates[j] = s.gamma[j] / s.gamma_delta[j];
        }
    }
    for k in 0..2 {
        let row = s.xi[k][0] + s.xi[k][1];
        if row > 0.0 {
            let a01 = s.xi[k][1] / row;
            next.trans[k] = [1.0 - a01, a01];
        }
    }
    let first = s.gamma_first[0] + s.gamma_first[1];
    if first > 0.0 {
        let p1 = s.gamma_first[1] / first;
        next.pi = [1.0 - p1, p1];
    }
    next
}

/// k-means initialisation: `λ_j = 1/μ_j` from the log-scale split of all
/// pooled intervals, sticky transitions and a uniform start distribution.
pub fn initial_params<S: AsRef<[f64]>>(sequences: &[S]) -> Result<HmmParams> {
    let pooled: Vec<f64> = sequences
        .iter()
        .flat_map(|s| s.as_ref().iter().copied())
        .collect();
    let split = kmeans2_log_intervals(&pooled)?;
    HmmParams::new(
        [0.5, 0.5],
        [[0.9, 0.1], [0.1, 0.9]],
        [1.0 / split.mu_slow, 1.0 / split.mu_fast],
    )
}

/// Baum-Welch over all sequences jointly, initialised by [`initial_params`].
pub fn baum_welch_fit<S: AsRef<[f64]> + Sync>(
    sequences: &[S],
    config: &BaumWelchConfig,
) -> Result<HmmFit> {
    let usable: Vec<&[f64]> = sequences
        .iter()
        .map(|s| s.as_ref())
        .filter(|s| !s.is_empty())
        .collect();
    if usable.is_empty() {
        return Err(Error::InsufficientData(
            "no sequence with at least one interval".into(),
        ));
    }
    let init = initial_params(&usable)?;
    baum_welch_fit_from(&usable, init, config)
}

/// Baum-Welch from explicit starting parameters.
///
/// Empty sequences are skipped. The E-step is mapped over sequences through
/// `config.exec` and reduced in input order, so the result does not depend on
/// the thread count.
pub fn baum_welch_fit_from<S: AsRef<[f64]> + Sync>(
    sequences: &[S],
    init: HmmParams,
    config: &BaumWelchConfig,
) -> Result<HmmFit> {
    init.validate()?;
    let usable: Vec<&[f64]> = sequences
        .iter()
        .map(|s| s.as_ref())
        .filter(|s| !s.is_empty())
        .collect();
    if usable.is_empty() {
        return Err(Error::InsufficientData(
            "no sequence with at least one interval".into(),
        ));
    }
    if let Some(d) = usable
        .iter()
        .flat_map(|s| s.iter())
        .find(|d| !(**d >= 0.0) || !d.is_finite())
    {
        return Err(Error::Domain(format!(
            "interval must be finite and non-negative, got {d}"
        )));
    }

    let mut params = init;
    let mut log_likelihoods = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iter {
        let lp = params.logs();
        let per_seq = config.exec.map(&usable, |s| e_step(s, &lp));
        let mut total = Stats::default();
        for s in &per_seq {
            total.add(s);
        }
        let ll = total.loglik;
        if let Some(&prev) = log_likelihoods.last() {
            let prev: f64 = prev;
            log_likelihoods.push(ll);
            if (ll - prev).abs() <= config.tol * prev.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        } else {
            log_likelihoods.push(ll);
        }
        params = m_step(&total, &params);
        iterations += 1;
    }

    Ok(HmmFit {
        params: params.canonical(),
        log_likelihoods,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::sample_sequence;

    fn fig1_params() -> HmmParams {
        HmmParams::from_switching(0.5, 0.3, 0.2, [1.0 / 2_073_600.0, 1.0 / 720.0]).unwrap()
    }

    fn sample_many(p: &HmmParams, n: usize, t: usize, seed: u64) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                sample_sequence(p, t, seed * 1_000_003 + i as u64)
                    .unwrap()
                    .deltas
            })
            .collect()
    }

    fn assert_monotone(trace: &[f64]) {
        for w in trace.windows(2) {
            assert!(
                w[1] >= w[0] - 1e-8 * w[0].abs().max(1.0),
                "EM decreased: {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn symmetric_start_recovers_pooled_mle() {
        let seqs = vec![
            vec![10.0, 200.0, 3000.0],
            vec![5.0],
            vec![1e5, 7.0, 7.0, 900.0],
        ];
        let n: f64 = seqs.iter().map(|s| s.len() as f64).sum();
        let total: f64 = seqs.iter().flatten().sum();
        let init = HmmParams::new([0.5, 0.5], [[0.9, 0.1], [0.1, 0.9]], [1e-3, 1e-3]).unwrap();
        let fit = baum_welch_fit_from(&seqs, init, &BaumWelchConfig::default()).unwrap();
        let mle = n / total;
        for r in fit.params.rates {
            assert!((r - mle).abs() <= 1e-9 * mle);
        }
        assert_monotone(&fit.log_likelihoods);
    }

    #[test]
    fn recovers_fig1_modes() {
        let truth = fig1_params();
        let seqs = sample_many(&truth, 200, 50, 17);
        assert_eq!(seqs.iter().map(Vec::len).sum::<usize>(), 10_000);
        let fit = baum_welch_fit(&seqs, &BaumWelchConfig::default()).unwrap();
        assert_monotone(&fit.log_likelihoods);
        for j in 0..2 {
            let rel = (fit.params.rates[j] - truth.rates[j]).abs() / truth.rates[j];
            assert!(
                rel < 0.10,
                "rate {j}: {} vs {}",
                fit.params.rates[j],
                truth.rates[j]
            );
        }
        assert!(fit.params.rates[1] > fit.params.rates[0]);
    }

    #[test]
    fn swapped_start_is_canonicalised() {
        let truth = fig1_params();
        let seqs = sample_many(&truth, 50, 40, 3);
        let init = HmmParams::new(
            [0.5, 0.5],
            [[0.8, 0.2], [0.2, 0.8]],
            [1.0 / 1000.0, 1.0 / 1e6],
        )
        .unwrap();
        let fit = baum_welch_fit_from(&seqs, init, &BaumWelchConfig::default()).unwrap();
        assert!(fit.params.rates[1] > fit.params.rates[0]);
        fit.params.validate().unwrap();
    }

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let seqs = sample_many(&fig1_params(), 64, 30, 5);
        let seq = baum_welch_fit(
            &seqs,
            &BaumWelchConfig {
                exec: Execution::Sequential,
                ..Default::default()
            },
        )
        .unwrap();
        let par = baum_welch_fit(
            &seqs,
            &BaumWelchConfig {
                exec: Execution::Parallel,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(seq.params, par.params);
        assert_eq!(seq.log_likelihoods, par.log_likelihoods);
    }

    #[test]
    fn insufficient_data() {
        let empty: Vec<Vec<f64>> = vec![vec![], vec![]];
        assert!(matches!(
            baum_welch_fit(&empty, &BaumWelchConfig::default()),
            Err(Error::InsufficientData(_))
        ));
    }
}
