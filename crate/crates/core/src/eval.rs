//! k-fold cross validation of the labeled HMM, spammer as the positive class.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datamodel::{build_user_sequences, Dataset, Label, UserSequence};
use crate::exec::Execution;
use crate::lhmm::{lhmm_classify, lhmm_fit, LhmmConfig};
use crate::{Error, Result};

const MAX_REDRAWS: u64 = 10;

/// Seed-keyed shuffle followed by a contiguous split; the first `n % k`
/// folds get one extra item.
pub fn kfold_split<T: Clone>(items: &[T], k: usize, seed: u64) -> Result<Vec<Vec<T>>> {
    if k < 2 {
        return Err(Error::Config(format!("k must be at least 2, got {k}")));
    }
    if items.len() < k {
        return Err(Error::InsufficientData(format!(
            "{} items cannot fill {k} folds",
            items.len()
        )));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (items.len() / k, items.len() % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(
            order[start..start + size]
                .iter()
                .map(|&i| items[i].clone())
                .collect(),
        );
        start += size;
    }
    Ok(folds)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn from_predictions(preds: &[Label], labels: &[Label]) -> Self {
        let mut c = ConfusionCounts::default();
        for (&p, &l) in preds.iter().zip(labels) {
            match (p.is_spam(), l.is_spam()) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    fn add(&mut self, o: &ConfusionCounts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: ConfusionCounts,
    /// No positive predictions: precision reported as 0.
    pub precision_undefined: bool,
    /// No positive labels: recall reported as 0.
    pub recall_undefined: bool,
}

impl MetricsReport {
    pub fn from_counts(counts: ConfusionCounts) -> Result<Self> {
        let n = counts.total();
        if n == 0 {
            return Err(Error::InsufficientData("no predictions to score".into()));
        }
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(counts.tp, counts.tp + counts.fp);
        let recall = ratio(counts.tp, counts.tp + counts.fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Ok(MetricsReport {
            accuracy: (counts.tp + counts.tn) as f64 / n as f64,
            precision,
            recall,
            f1,
            counts,
            precision_undefined: counts.tp + counts.fp == 0,
            recall_undefined: counts.tp + counts.fn_ == 0,
        })
    }
}

/// Accuracy, precision, recall and F1 with spam as the positive class.
pub fn classification_metrics(preds: &[Label], labels: &[Label]) -> Result<MetricsReport> {
    if preds.len() != labels.len() {
        return Err(Error::Validation(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    MetricsReport::from_counts(ConfusionCounts::from_predictions(preds, labels))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CvConfig {
    pub lhmm: LhmmConfig,
    /// Folds run through this; each fold's own fit uses `lhmm.baum_welch.exec`.
    pub exec: Execution,
}

/// Unweighted mean over folds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub folds: Vec<MetricsReport>,
    pub mean: MeanMetrics,
    /// Metrics of the confusion counts summed over folds.
    pub pooled: MetricsReport,
    /// Seed actually used for the split after any redraws.
    pub seed_used: u64,
}

impl CvReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "folds = {}", self.folds.len());
        let _ = writeln!(s, "seed_used = {}", self.seed_used);
        let _ = writeln!(s, "mean_accuracy = {}", self.mean.accuracy);
        let _ = writeln!(s, "mean_precision = {}", self.mean.precision);
        let _ = writeln!(s, "mean_recall = {}", self.mean.recall);
        let _ = writeln!(s, "mean_f1 = {}", self.mean.f1);
        let _ = writeln!(s, "pooled_accuracy = {}", self.pooled.accuracy);
        let _ = writeln!(s, "pooled_precision = {}", self.pooled.precision);
        let _ = writeln!(s, "pooled_recall = {}", self.pooled.recall);
        let _ = writeln!(s, "pooled_f1 = {}", self.pooled.f1);
        let c = self.pooled.counts;
        let _ = writeln!(
            s,
            "pooled_tp = {}\npooled_fp = {}\npooled_fn = {}\npooled_tn = {}",
            c.tp, c.fp, c.fn_, c.tn
        );
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("fold,accuracy,precision,recall,f1,tp,fp,fn,tn\n");
        for (i, f) in self.folds.iter().enumerate() {
            let c = f.counts;
            let _ = writeln!(
                s,
                "{i},{},{},{},{},{},{},{},{}",
                f.accuracy, f.precision, f.recall, f.f1, c.tp, c.fp, c.fn_, c.tn
            );
        }
        let c = self.pooled.counts;
        let _ = writeln!(
            s,
            "mean,{},{},{},{},{},{},{},{}",
            self.mean.accuracy,
            self.mean.precision,
            self.mean.recall,
            self.mean.f1,
            c.tp,
            c.fp,
            c.fn_,
            c.tn
        );
        s
    }
}

fn trainable(train: &[&UserSequence]) -> bool {
    [Label::Spam, Label::Genuine].iter().all(|&l| {
        train
            .iter()
            .any(|s| s.label == Some(l) && s.deltas.len() >= 2)
    })
}

/// Cross-validates on the dataset's labeled users.
pub fn cross_validate(ds: &Dataset, k: usize, seed: u64, config: &CvConfig) -> Result<CvReport> {
    let seqs: Vec<UserSequence> = build_user_sequences(ds)
        .into_iter()
        .filter(|s| s.label.is_some())
        .collect();
    cross_validate_sequences(&seqs, k, seed, config)
}

/// Cross-validates pre-built sequences (unlabeled ones are ignored).
///
/// If some training split lacks a usable sequence of either class, the split
/// is redrawn with `seed + 1`, `seed + 2`, … up to ten times.
pub fn cross_validate_sequences(
    sequences: &[UserSequence],
    k: usize,
    seed: u64,
    config: &CvConfig,
) -> Result<CvReport> {
    let labeled: Vec<&UserSequence> = sequences.iter().filter(|s| s.label.is_some()).collect();
    let ids: Vec<usize> = (0..labeled.len()).collect();

    let mut chosen = None;
    for attempt in 0..MAX_REDRAWS {
        let s = seed.wrapping_add(attempt);
        let folds = kfold_split(&ids, k, s)?;
        let ok = (0..k).all(|f| {
            let train: Vec<&UserSequence> = folds
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, fold)| fold.iter().map(|&i| labeled[i]))
                .collect();
            trainable(&train)
        });
        if ok {
            chosen = Some((s, folds));
            break;
        }
    }
    let (seed_used, folds) = chosen.ok_or_else(|| {
        Error::Stratification(format!(
            "a training split lacked one class after {MAX_REDRAWS} draws"
        ))
    })?;

    let results: Vec<Result<MetricsReport>> = config.exec.map_range(k, |f| {
        let train: Vec<UserSequence> = folds
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, fold)| fold.iter().map(|&i| labeled[i].clone()))
            .collect();
        let params = lhmm_fit(&train, &config.lhmm)?;
        let mut preds = Vec::with_capacity(folds[f].len());
        let mut truth = Vec::with_capacity(folds[f].len());
        for &i in &folds[f] {
            preds.push(lhmm_classify(labeled[i], &params)?.predicted);
            truth.push(labeled[i].label.expect("labeled"));
        }
        classification_metrics(&preds, &truth)
    });
    let folds: Vec<MetricsReport> = results.into_iter().collect::<Result<_>>()?;

    let kf = folds.len() as f64;
    let mean = MeanMetrics {
        accuracy: folds.iter().map(|f| f.accuracy).sum::<f64>() / kf,
        precision: folds.iter().map(|f| f.precision).sum::<f64>() / kf,
        recall: folds.iter().map(|f| f.recall).sum::<f64>() / kf,
        f1: folds.iter().map(|f| f.f1).sum::<f64>() / kf,
    };
    let mut pooled = ConfusionCounts::default();
    for f in &folds {
        pooled.add(&f.counts);
    }
    Ok(CvReport {
        folds,
        mean,
        pooled: MetricsReport::from_counts(pooled)?,
        seed_used,
    })
}
