//! Two-state hidden Markov model with exponential emissions.
//!
//! State 0 is the inactive (slow) mode and state 1 the active (fast) mode;
//! observations are inter-arrival times in seconds. All inference runs in the
//! log domain: per-step densities are routinely around 1e-7, so linear-domain
//! products underflow after a few dozen steps.

mod baum_welch;
mod inference;
mod kmeans;
mod sample;

pub use baum_welch::{
    baum_welch_fit, baum_welch_fit_from, initial_params, BaumWelchConfig, HmmFit,
};
pub use inference::{
    forward_loglik, forward_table, log_joint, viterbi_decode, viterbi_table, ForwardTable,
    StateSequence, ViterbiTable,
};
pub use kmeans::{kmeans2_log_intervals, KmeansSplit};
pub use sample::{sample_sequence, sample_sequence_with, SampledSequence};

use crate::textfmt::{self, KvDoc};
use crate::{Error, Result};

const PROB_TOL: f64 = 1e-9;

/// `log λ - λ·delta`, the log-density of an exponential at `delta`.
pub fn exp_logpdf(delta: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!(
            "rate must be positive and finite, got {lambda}"
        )));
    }
    if !(delta >= 0.0) {
        return Err(Error::Domain(format!(
            "interval must be non-negative, got {delta}"
        )));
    }
    Ok(lambda.ln() - lambda * delta)
}

/// Stable `log(exp(a) + exp(b))`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Stable `log Σ exp(x)`; `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Initial distribution, row-stochastic transition matrix and per-state rates.
///
/// `trans[k][j]` is P(Q_i = j | Q_{i-1} = k). Rates are in 1/seconds. Fitted
/// parameters always satisfy `rates[1] >= rates[0]`; hand-built ones may not.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HmmParams {
    pub pi: [f64; 2],
    pub trans: [[f64; 2]; 2],
    pub rates: [f64; 2],
}

impl HmmParams {
    pub fn new(pi: [f64; 2], trans: [[f64; 2]; 2], rates: [f64; 2]) -> Result<Self> {
        let p = HmmParams { pi, trans, rates };
        p.validate()?;
        Ok(p)
    }

    /// Builds from the switching probabilities `beta01 = a_01`, `beta10 = a_10`.
    pub fn from_switching(
        pi_active: f64,
        beta01: f64,
        beta10: f64,
        rates: [f64; 2],
    ) -> Result<Self> {
        Self::new(
            [1.0 - pi_active, pi_active],
            [[1.0 - beta01, beta01], [beta10, 1.0 - beta10]],
            rates,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let check_dist = |name: &str, row: &[f64; 2]| -> Result<()> {
            if row.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(Error::Domain(format!(
                    "{name} has entries outside [0, 1]: {row:?}"
                )));
            }
            if ((row[0] + row[1]) - 1.0).abs() > PROB_TOL {
                return Err(Error::Domain(format!("{name} does not sum to 1: {row:?}")));
            }
            Ok(())
        };
        check_dist("pi", &self.pi)?;
        check_dist("transition row 0", &self.trans[0])?;
        check_dist("transition row 1", &self.trans[1])?;
        for &r in &self.rates {
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::Domain(format!(
                    "rates must be positive and finite: {:?}",
                    self.rates
                )));
            }
        }
        Ok(())
    }

    /// Mean inter-arrival time per state, `1/λ`.
    pub fn mean_intervals(&self) -> [f64; 2] {
        [1.0 / self.rates[0], 1.0 / self.rates[1]]
    }

    /// Relabels states 0 ↔ 1.
    pub fn swapped(&self) -> Self {
        HmmParams {
            pi: [self.pi[1], self.pi[0]],
            trans: [
                [self.trans[1][1], self.trans[1][0]],
                [self.trans[0][1], self.trans[0][0]],
            ],
            rates: [self.rates[1], self.rates[0]],
        }
    }

    /// Orders states so that state 1 has the larger rate.
    pub fn canonical(self) -> Self {
        if self.rates[0] > self.rates[1] {
            self.swapped()
        } else {
            self
        }
    }

    pub fn with_uniform_transitions(mut self) -> Self {
        self.trans = [[0.5, 0.5], [0.5, 0.5]];
        self
    }

    pub(crate) fn logs(&self) -> LogParams {
        LogParams {
            pi: self.pi.map(f64::ln),
            trans: self.trans.map(|row| row.map(f64::ln)),
            log_rates: self.rates.map(f64::ln),
            rates: self.rates,
        }
    }

    pub(crate) fn write_entries(&self, out: &mut String) {
        use std::fmt::Write;
        let f = textfmt::fmt_f64;
        let _ = writeln!(out, "pi = {} {}", f(self.pi[0]), f(self.pi[1]));
        let _ = writeln!(
            out,
            "trans = {} {} {} {}",
            f(self.trans[0][0]),
            f(self.trans[0][1]),
            f(self.trans[1][0]),
            f(self.trans[1][1])
        );
        let _ = writeln!(out, "rates = {} {}", f(self.rates[0]), f(self.rates[1]));
    }

    pub(crate) fn from_entries(entries: &[(String, String)]) -> Result<Self> {
        let pi = textfmt::parse_floats::<2>("pi", textfmt::get(entries, "pi")?)?;
        let t = textfmt::parse_floats::<4>("trans", textfmt::get(entries, "trans")?)?;
        let rates = textfmt::parse_floats::<2>("rates", textfmt::get(entries, "rates")?)?;
        Self::new(pi, [[t[0], t[1]], [t[2], t[3]]], rates)
    }

    /// Plain-text `key = value` document with 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        self.write_entries(&mut s);
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let doc = KvDoc::parse(text)?;
        Self::from_entries(doc.section("").unwrap_or(&[]))
    }
}

/// Parameters pre-transformed to logs for the inner loops.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogParams {
    pub pi: [f64; 2],
    pub trans: [[f64; 2]; 2],
    pub log_rates: [f64; 2],
    pub rates: [f64; 2],
}

impl LogParams {
    #[inline]
    pub fn emission(&self, state: usize, delta: f64) -> f64 {
        self.log_rates[state] - self.rates[state] * delta
    }
}
