//! Labeled HMM: one two-state HMM per class plus a class prior.
//!
//! A user is classified by comparing `log P(Δ | Y = y) + log P(Y = y)` across
//! the two classes, where the class-conditional likelihood marginalises the
//! hidden states with the forward recursion. The shared evidence term
//! `P(Δ)` is never computed.

use crate::datamodel::{Label, UserSequence};
use crate::exec::Execution;
use crate::hmm::{baum_welch_fit, forward_loglik, BaumWelchConfig, HmmParams};
use crate::textfmt::{self, KvDoc};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LhmmParams {
    /// P(Y = spam).
    pub prior: f64,
    pub params_pos: HmmParams,
    pub params_neg: HmmParams,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LhmmConfig {
    pub baum_welch: BaumWelchConfig,
    /// Replace both learned transition matrices by uniform rows (the UT ablation).
    pub uniform_transitions: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationResult {
    pub user_id: String,
    pub predicted: Label,
    pub log_posterior_pos: f64,
    pub log_posterior_neg: f64,
    /// `log_posterior_pos - log_posterior_neg`; spam iff `>= 0`.
    pub spam_log_odds: f64,
}

impl ClassificationResult {
    /// Normalised posterior probability of the spam class.
    pub fn spam_posterior(&self) -> f64 {
        1.0 / (1.0 + (-self.spam_log_odds).exp())
    }
}

impl LhmmParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.prior) {
            return Err(Error::Domain(format!(
                "prior must lie in [0, 1], got {}",
                self.prior
            )));
        }
        self.params_pos.validate()?;
        self.params_neg.validate()
    }

    pub fn params_for(&self, label: Label) -> &HmmParams {
        match label {
            Label::Spam => &self.params_pos,
            Label::Genuine => &self.params_neg,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("prior = {}\n\n[pos]\n", textfmt::fmt_f64(self.prior));
        self.params_pos.write_entries(&mut s);
        s.push_str("\n[neg]\n");
        self.params_neg.write_entries(&mut s);
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let doc = KvDoc::parse(text)?;
        let head = doc.section("").unwrap_or(&[]);
        let [prior] = textfmt::parse_floats::<1>("prior", textfmt::get(head, "prior")?)?;
        let section = |name: &str| {
            doc.section(name)
                .ok_or_else(|| Error::Validation(format!("missing [{name}] section")))
        };
        let p = LhmmParams {
            prior,
            params_pos: HmmParams::from_entries(section("pos")?)?,
            params_neg: HmmParams::from_entries(section("neg")?)?,
        };
        p.validate()?;
        Ok(p)
    }
}

/// Fits the class prior by counting and one HMM per class by Baum-Welch.
///
/// Unlabeled sequences are ignored. Each class needs at least one sequence
/// with two or more intervals.
pub fn lhmm_fit(sequences: &[UserSequence], config: &LhmmConfig) -> Result<LhmmParams> {
    let labeled: Vec<&UserSequence> = sequences.iter().filter(|s| s.label.is_some()).collect();
    let n_spam = labeled
        .iter()
        .filter(|s| s.label == Some(Label::Spam))
        .count();

    let fit_class = |label: Label| -> Result<HmmParams> {
        let class: Vec<&[f64]> = labeled
            .iter()
            .filter(|s| s.label == Some(label))
            .map(|s| s.deltas.as_slice())
            .filter(|d| !d.is_empty())
            .collect();
        if !class.iter().any(|d| d.len() >= 2) {
            return Err(Error::InsufficientData(format!(
                "class `{label}` has no sequence with at least two intervals"
            )));
        }
        let fit = baum_welch_fit(&class, &config.baum_welch)?;
        Ok(if config.uniform_transitions {
            fit.params.with_uniform_transitions()
        } else {
            fit.params
        })
    };

    let params_pos = fit_class(Label::Spam)?;
    let params_neg = fit_class(Label::Genuine)?;
    Ok(LhmmParams {
        prior: n_spam as f64 / labeled.len() as f64,
        params_pos,
        params_neg,
    })
}

/// Bayes decision between the two classes; ties go to spam.
///
/// With no intervals both likelihood terms are zero and the prior decides.
pub fn lhmm_classify(seq: &UserSequence, params: &LhmmParams) -> Result<ClassificationResult> {
    params.validate()?;
    let (ll_pos, ll_neg) = if seq.deltas.is_empty() {
        (0.0, 0.0)
    } else {
        (
            forward_loglik(&seq.deltas, &params.params_pos)?,
            forward_loglik(&seq.deltas, &params.params_neg)?,
        )
    };
    Ok(decide(
        &seq.user_id,
        ll_pos + params.prior.ln(),
        ll_neg + (1.0 - params.prior).ln(),
    ))
}

fn decide(user_id: &str, log_posterior_pos: f64, log_posterior_neg: f64) -> ClassificationResult {
    let spam_log_odds = if log_posterior_pos == log_posterior_neg {
        // also covers both being -inf, where the subtraction would be NaN
        0.0
    } else {
        log_posterior_pos - log_posterior_neg
    };
    ClassificationResult {
        user_id: user_id.to_string(),
        predicted: if spam_log_odds >= 0.0 {
            Label::Spam
        } else {
            Label::Genuine
        },
        log_posterior_pos,
        log_posterior_neg,
        spam_log_odds,
    }
}

/// Classifies every sequence, preserving input order.
pub fn lhmm_classify_all(
    sequences: &[UserSequence],
    params: &LhmmParams,
    exec: Execution,
) -> Result<Vec<ClassificationResult>> {
    exec.map(sequences, |s| lhmm_classify(s, params))
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::{log_sum_exp, sample_sequence};

    fn seq(user: &str, deltas: Vec<f64>, label: Option<Label>) -> UserSequence {
        let mut ts = vec![0i64];
        for d in &deltas {
            ts.push(ts.last().unwrap() + *d as i64);
        }
        UserSequence {
            user_id: user.into(),
            timestamps: ts,
            deltas,
            label,
        }
    }

    fn genuine_params() -> HmmParams {
        HmmParams::from_switching(0.4, 0.2, 0.4, [1.0 / 5_000_000.0, 1.0 / 1800.0]).unwrap()
    }

    fn spam_params() -> HmmParams {
        HmmParams::from_switching(0.6, 0.3, 0.15, [1.0 / 2_000_000.0, 1.0 / 720.0]).unwrap()
    }

    fn sampled(
        prefix: &str,
        p: &HmmParams,
        n: usize,
        t: usize,
        label: Label,
        seed: u64,
    ) -> Vec<UserSequence> {
        (0..n)
            .map(|i| {
                let s = sample_sequence(p, t, seed + i as u64).unwrap();
                let deltas = s.deltas.iter().map(|d| d.round().max(1.0)).collect();
                seq(&format!("{prefix}{i}"), deltas, Some(label))
            })
            .collect()
    }

    #[test]
    fn prior_is_counted() {
        let mut seqs = sampled("s", &spam_params(), 30, 20, Label::Spam, 1);
        seqs.extend(sampled(
            "g",
            &genuine_params(),
            70,
            20,
            Label::Genuine,
            1000,
        ));
        seqs.push(seq("x", vec![5.0, 6.0, 7.0], None));
        let p = lhmm_fit(&seqs, &LhmmConfig::default()).unwrap();
        assert!((p.prior - 0.3).abs() < 1e-15);
    }

    #[test]
    fn per_class_rates_recovered() {
        let mut seqs = sampled("s", &spam_params(), 150, 60, Label::Spam, 10);
        seqs.extend(sampled(
            "g",
            &genuine_params(),
            150,
            60,
            Label::Genuine,
            20_000,
        ));
        let p = lhmm_fit(&seqs, &LhmmConfig::default()).unwrap();
        for (fit, truth) in [
            (p.params_pos, spam_params()),
            (p.params_neg, genuine_params()),
        ] {
            for j in 0..2 {
                let rel = (fit.rates[j] - truth.rates[j]).abs() / truth.rates[j];
                assert!(
                    rel < 0.10,
                    "state {j}: {} vs {}",
                    fit.rates[j],
                    truth.rates[j]
                );
            }
        }
    }

    #[test]
    fn single_class_is_an_error() {
        let seqs = sampled("s", &spam_params(), 10, 10, Label::Spam, 1);
        match lhmm_fit(&seqs, &LhmmConfig::default()) {
            Err(Error::InsufficientData(msg)) => assert!(msg.contains("genuine")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn uniform_transition_flag() {
        let mut seqs = sampled("s", &spam_params(), 20, 20, Label::Spam, 1);
        seqs.extend(sampled("g", &genuine_params(), 20, 20, Label::Genuine, 500));
        let cfg = LhmmConfig {
            uniform_transitions: true,
            ..Default::default()
        };
        let p = lhmm_fit(&seqs, &cfg).unwrap();
        assert_eq!(p.params_pos.trans, [[0.5, 0.5], [0.5, 0.5]]);
        assert_eq!(p.params_neg.trans, [[0.5, 0.5], [0.5, 0.5]]);
    }

    #[test]
    fn prior_decides_when_likelihoods_tie() {
        let same = genuine_params();
        let p = LhmmParams {
            prior: 0.9,
            params_pos: same,
            params_neg: same,
        };
        let r = lhmm_classify(&seq("u", vec![100.0, 5000.0], None), &p).unwrap();
        assert_eq!(r.predicted, Label::Spam);

        let even = LhmmParams { prior: 0.5, ..p };
        let r = lhmm_classify(&seq("u", vec![100.0, 5000.0, 3.0], None), &even).unwrap();
        assert_eq!(r.spam_log_odds, 0.0);
        assert_eq!(r.predicted, Label::Spam);
    }

    #[test]
    fn empty_sequence_uses_prior_only() {
        let p = LhmmParams {
            prior: 0.2,
            params_pos: spam_params(),
            params_neg: genuine_params(),
        };
        let r = lhmm_classify(&seq("u", vec![], None), &p).unwrap();
        assert_eq!(r.predicted, Label::Genuine);
        assert!((r.spam_log_odds - (0.2f64.ln() - 0.8f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn well_separated_classes_are_confident() {
        let pos = HmmParams::from_switching(0.5, 0.2, 0.2, [1.0 / 100_000.0, 1.0 / 60.0]).unwrap();
        let neg =
            HmmParams::from_switching(0.5, 0.2, 0.2, [1.0 / 1_000_000.0, 1.0 / 600.0]).unwrap();
        let p = LhmmParams {
            prior: 0.5,
            params_pos: pos,
            params_neg: neg,
        };
        for seed in 0..20 {
            let s = sample_sequence(&pos, 50, seed).unwrap();
            let r = lhmm_classify(&seq("u", s.deltas, None), &p).unwrap();
            assert_eq!(r.predicted, Label::Spam);
            assert!(r.spam_posterior() > 0.99);
        }
    }

    #[test]
    fn decision_matches_enumeration() {
        let p = LhmmParams {
            prior: 0.35,
            params_pos: spam_params(),
            params_neg: genuine_params(),
        };
        let brute = |d: &[f64], h: &HmmParams| {
            let t = d.len();
            let emit = |j: usize, x: f64| h.rates[j].ln() - h.rates[j] * x;
            let scores: Vec<f64> = (0u32..1 << t)
                .map(|mask| {
                    let q: Vec<usize> = (0..t).map(|i| ((mask >> i) & 1) as usize).collect();
                    let mut s = h.pi[q[0]].ln() + emit(q[0], d[0]);
                    for i in 1..t {
                        s += h.trans[q[i - 1]][q[i]].ln() + emit(q[i], d[i]);
                    }
                    s
                })
                .collect();
            log_sum_exp(&scores)
        };
        for seed in 0..200u64 {
            let t = 1 + (seed % 10) as usize;
            let src = if seed % 2 == 0 {
                spam_params()
            } else {
                genuine_params()
            };
            let s = sample_sequence(&src, t, seed).unwrap();
            let pos = brute(&s.deltas, &p.params_pos) + p.prior.ln();
            let neg = brute(&s.deltas, &p.params_neg) + (1.0 - p.prior).ln();
            let expected = if pos >= neg {
                Label::Spam
            } else {
                Label::Genuine
            };
            let r = lhmm_classify(&seq("u", s.deltas, None), &p).unwrap();
            assert_eq!(r.predicted, expected);
            assert!((r.spam_log_odds - (pos - neg)).abs() < 1e-9 * pos.abs().max(1.0));
        }
    }

    #[test]
    fn shift_invariance() {
        for shift in [-1e6, -3.0, 0.0, 42.0, 1e6] {
            let a = decide("u", -10.0 + shift, -12.0 + shift);
            assert_eq!(a.predicted, Label::Spam);
            let b = decide("u", -15.0 + shift, -12.0 + shift);
            assert_eq!(b.predicted, Label::Genuine);
        }
    }

    #[test]
    fn text_round_trip() {
        let p = LhmmParams {
            prior: 0.3,
            params_pos: spam_params(),
            params_neg: genuine_params(),
        };
        assert_eq!(LhmmParams::from_text(&p.to_text()).unwrap(), p);
        assert!(LhmmParams::from_text("prior = 0.5\n").is_err());
    }
}
