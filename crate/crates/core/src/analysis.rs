//! Data exports for plotting: interval histograms, per-user state means,
//! consecutive interval pairs and restaurant activity correlation.

use std::fmt::Write as _;

use crate::coburst::{csv_field, StateAnnotatedDataset};
use crate::datamodel::{build_user_sequences, Dataset, Label};
use crate::{Error, Result};

const DAY: i64 = 86_400;

/// Counts over equal-width bins of `log10(Δ)` spanning the observed range.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub log10_min: f64,
    pub log10_max: f64,
    pub counts: Vec<u64>,
    /// Present when split by label: intervals of spam-labeled users.
    pub spam: Option<Vec<u64>>,
    pub genuine: Option<Vec<u64>>,
}

impl Histogram {
    pub fn bin_edges(&self) -> Vec<f64> {
        let n = self.counts.len();
        let w = (self.log10_max - self.log10_min) / n as f64;
        (0..=n).map(|i| self.log10_min + w * i as f64).collect()
    }

    /// `bin,log10_lo,log10_hi,count[,spam,genuine]`.
    pub fn to_csv(&self) -> String {
        let edges = self.bin_edges();
        let split = self.spam.is_some();
        let mut s = String::from("bin,log10_lo,log10_hi,count");
        s.push_str(if split { ",spam,genuine\n" } else { "\n" });
        for (i, c) in self.counts.iter().enumerate() {
            let _ = write!(s, "{i},{},{},{c}", edges[i], edges[i + 1]);
            if let (Some(sp), Some(ge)) = (&self.spam, &self.genuine) {
                let _ = write!(s, ",{},{}", sp[i], ge[i]);
            }
            s.push('\n');
        }
        s
    }
}

/// Histogram of all inter-arrival times on a log10 scale.
pub fn interarrival_histogram(
    ds: &Dataset,
    bins: usize,
    split_by_label: bool,
) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::Config("bins must be positive".into()));
    }
    let seqs = build_user_sequences(ds);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for d in seqs.iter().flat_map(|s| s.deltas.iter()) {
        let x = d.log10();
        lo = lo.min(x);
        hi = hi.max(x);
    }
    if lo > hi {
        return Err(Error::InsufficientData(
            "no inter-arrival times in dataset".into(),
        ));
    }
    let width = (hi - lo) / bins as f64;
    let bin_of = |d: f64| -> usize {
        if width == 0.0 {
            return 0;
        }
        (((d.log10() - lo) / width).floor() as usize).min(bins - 1)
    };
    let mut counts = vec![0u64; bins];
    let mut spam = vec![0u64; bins];
    let mut genuine = vec![0u64; bins];
    for s in &seqs {
        for &d in &s.deltas {
            let b = bin_of(d);
            counts[b] += 1;
            match s.label {
                Some(Label::Spam) => spam[b] += 1,
                Some(Label::Genuine) => genuine[b] += 1,
                None => {}
            }
        }
    }
    Ok(Histogram {
        log10_min: lo,
        log10_max: hi,
        counts,
        spam: split_by_label.then_some(spam),
        genuine: split_by_label.then_some(genuine),
    })
}

/// Mean interval per decoded state for one user.
#[derive(Debug, Clone, PartialEq)]
pub struct UserStateMeans {
    pub user_id: String,
    pub label: Option<Label>,
    /// Mean of inactive-state intervals, absent if there are none.
    pub mu_0: Option<f64>,
    pub mu_1: Option<f64>,
}

/// Groups each user's intervals by the state of the review that closes them.
pub fn user_state_means(ads: &StateAnnotatedDataset<'_>) -> Vec<UserStateMeans> {
    let ds = ads.dataset;
    let labels = ds.user_labels();
    ds.by_user()
        .iter()
        .map(|(user, idx)| {
            let mut sum = [0.0; 2];
            let mut n = [0usize; 2];
            for w in idx.windows(2) {
                let d = ((ds.reviews()[w[1]].timestamp - ds.reviews()[w[0]].timestamp) as f64)
                    .max(crate::datamodel::EPS_TIME);
                let s = ads.states[w[1]] as usize;
                sum[s] += d;
                n[s] += 1;
            }
            let mean = |j: usize| (n[j] > 0).then(|| sum[j] / n[j] as f64);
            UserStateMeans {
                user_id: user.clone(),
                label: labels.get(user).copied(),
                mu_0: mean(0),
                mu_1: mean(1),
            }
        })
        .collect()
}

pub fn state_means_csv(rows: &[UserStateMeans]) -> String {
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut s = String::from("user_id,label,mu_0,mu_1\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            csv_field(&r.user_id),
            r.label.map(Label::as_str).unwrap_or(""),
            opt(r.mu_0),
            opt(r.mu_1)
        );
    }
    s
}

/// One `(Δ_{i-1}, Δ_i)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalPair {
    pub user_id: String,
    pub label: Option<Label>,
    pub prev: f64,
    pub current: f64,
}

/// Every consecutive interval pair of every user with at least two intervals.
pub fn consecutive_pairs(ds: &Dataset) -> Result<Vec<IntervalPair>> {
    let rows: Vec<IntervalPair> = build_user_sequences(ds)
        .into_iter()
        .flat_map(|s| {
            let user = s.user_id.clone();
            let label = s.label;
            s.deltas
                .windows(2)
                .map(|w| IntervalPair {
                    user_id: user.clone(),
                    label,
                    prev: w[0],
                    current: w[1],
                })
                .collect::<Vec<_>>()
        })
        .collect();
    if rows.is_empty() {
        return Err(Error::InsufficientData(
            "no user has two or more intervals".into(),
        ));
    }
    Ok(rows)
}

/// `user_id,prev,current[,label]`.
pub fn consecutive_pairs_csv(rows: &[IntervalPair], split_by_label: bool) -> String {
    let mut s = String::from(if split_by_label {
        "user_id,prev,current,label\n"
    } else {
        "user_id,prev,current\n"
    });
    for r in rows {
        let _ = write!(s, "{},{},{}", csv_field(&r.user_id), r.prev, r.current);
        if split_by_label {
            let _ = write!(s, ",{}", r.label.map(Label::as_str).unwrap_or(""));
        }
        s.push('\n');
    }
    s
}

fn daily_counts(ds: &Dataset, restaurant: &str, first_day: i64, n_days: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_days];
    for &i in &ds.by_restaurant()[restaurant] {
        out[(ds.reviews()[i].timestamp.div_euclid(DAY) - first_day) as usize] += 1.0;
    }
    out
}

/// Moving average over every full window of `width` consecutive values.
pub fn moving_average(xs: &[f64], width: usize) -> Vec<f64> {
    if width == 0 || xs.len() < width {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(xs.len() - width + 1);
    let mut acc: f64 = xs[..width].iter().sum();
    out.push(acc / width as f64);
    for i in width..xs.len() {
        acc += xs[i] - xs[i - width];
        out.push(acc / width as f64);
    }
    out
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Err(Error::CorrelationUndefined(
            "a smoothed series has zero variance".into(),
        ));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation of two restaurants' smoothed daily review counts.
///
/// Counts are zero-filled over the union of both restaurants' active days and
/// smoothed with a `smooth_days`-wide moving average.
pub fn restaurant_correlation(
    ds: &Dataset,
    rest_a: &str,
    rest_b: &str,
    smooth_days: usize,
) -> Result<f64> {
    if smooth_days == 0 {
        return Err(Error::Config("smooth_days must be positive".into()));
    }
    for r in [rest_a, rest_b] {
        if !ds.by_restaurant().contains_key(r) {
            return Err(Error::Validation(format!("unknown restaurant `{r}`")));
        }
    }
    let days = [rest_a, rest_b].into_iter().flat_map(|r| {
        ds.by_restaurant()[r]
            .iter()
            .map(|&i| ds.reviews()[i].timestamp.div_euclid(DAY))
    });
    let (first, last) = days.fold((i64::MAX, i64::MIN), |(lo, hi), d| (lo.min(d), hi.max(d)));
    let n_days = (last - first + 1) as usize;
    if n_days < smooth_days + 2 {
        return Err(Error::CorrelationUndefined(format!(
            "span of {n_days} days is shorter than {} days",
            smooth_days + 2
        )));
    }
    let a = moving_average(&daily_counts(ds, rest_a, first, n_days), smooth_days);
    let b = moving_average(&daily_counts(ds, rest_b, first, n_days), smooth_days);
    pearson(&a, &b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::Review;

    fn review(id: usize, user: &str, rest: &str, ts: i64, label: Option<Label>) -> Review {
        Review {
            review_id: format!("r{id}"),
            user_id: user.into(),
            restaurant_id: rest.into(),
            timestamp: ts,
            label,
        }
    }

    #[test]
    fn histogram_hand_binning() {
        // user u: deltas 10, 10; user v: delta 1000
        let ds = Dataset::from_reviews(vec![
            review(0, "u", "s", 0, None),
            review(1, "u", "s", 10, None),
            review(2, "u", "s", 20, None),
            review(3, "v", "s", 0, Some(Label::Spam)),
            review(4, "v", "s", 1000, Some(Label::Spam)),
        ])
        .unwrap();
        let h = interarrival_histogram(&ds, 2, true).unwrap();
        assert_eq!(h.counts, vec![2, 1]);
        assert_eq!(h.spam, Some(vec![0, 1]));
        assert_eq!(h.genuine, Some(vec![0, 0]));
        assert_eq!(h.bin_edges(), vec![1.0, 2.0, 3.0]);
        assert!(h
            .to_csv()
            .starts_with("bin,log10_lo,log10_hi,count,spam,genuine\n0,1,2,2,0,0\n"));
    }

    #[test]
    fn histogram_needs_intervals() {
        assert!(matches!(
            interarrival_histogram(&Dataset::empty(), 4, false),
            Err(Error::InsufficientData(_))
        ));
        let one = Dataset::from_reviews(vec![review(0, "u", "s", 0, None)]).unwrap();
        assert!(interarrival_histogram(&one, 4, false).is_err());
    }

    #[test]
    fn state_means() {
        let ds = Dataset::from_reviews(vec![
            review(0, "u", "s", 0, None),
            review(1, "u", "s", 100, None),
            review(2, "u", "s", 300, None),
            review(3, "w", "s", 0, None),
            review(4, "w", "s", 50, None),
        ])
        .unwrap();
        // canonical order: r0(0) r3(0) r4(50) r1(100) r2(300)
        let ads = StateAnnotatedDataset::new(&ds, vec![1, 1, 1, 1, 0]).unwrap();
        let m = user_state_means(&ads);
        assert_eq!(m[0].mu_1, Some(100.0));
        assert_eq!(m[0].mu_0, Some(200.0));
        assert_eq!(m[1].mu_1, Some(50.0));
        assert_eq!(m[1].mu_0, None);
        assert!(state_means_csv(&m).contains("w,,,50\n"));
    }

    #[test]
    fn pairs_slide_over_intervals() {
        let ds = Dataset::from_reviews(vec![
            review(0, "u", "s", 0, None),
            review(1, "u", "s", 5, None),
            review(2, "u", "s", 12, None),
            review(3, "u", "s", 20, None),
            review(4, "v", "s", 0, None),
            review(5, "v", "s", 9, None),
        ])
        .unwrap();
        let rows = consecutive_pairs(&ds).unwrap();
        let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.prev, r.current)).collect();
        assert_eq!(pairs, vec![(5.0, 7.0), (7.0, 8.0)]);
        assert_eq!(consecutive_pairs_csv(&rows, true).lines().count(), 3);

        let short = Dataset::from_reviews(vec![
            review(0, "u", "s", 0, None),
            review(1, "u", "s", 5, None),
        ])
        .unwrap();
        assert!(matches!(
            consecutive_pairs(&short),
            Err(Error::InsufficientData(_))
        ));
    }

    fn series_dataset(a: &[usize], b: &[usize]) -> Dataset {
        let mut rs = Vec::new();
        let mut id = 0;
        for (rest, counts) in [("a", a), ("b", b)] {
            for (day, &c) in counts.iter().enumerate() {
                for _ in 0..c {
                    rs.push(review(id, "u", rest, day as i64 * DAY + 3600, None));
                    id += 1;
                }
            }
        }
        Dataset::from_reviews(rs).unwrap()
    }

    #[test]
    fn correlation_extremes() {
        let x: Vec<usize> = (0..40).map(|i| (i * 7 % 11) + (i / 5)).collect();
        let ds = series_dataset(&x, &x);
        assert!((restaurant_correlation(&ds, "a", "b", 14).unwrap() - 1.0).abs() < 1e-12);

        let y: Vec<usize> = x.iter().map(|v| 30 - v).collect();
        let ds = series_dataset(&x, &y);
        assert!((restaurant_correlation(&ds, "a", "b", 14).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn correlation_errors() {
        let ds = series_dataset(&[1; 10], &[2; 10]);
        assert!(matches!(
            restaurant_correlation(&ds, "a", "b", 14),
            Err(Error::CorrelationUndefined(_))
        ));
        let ds = series_dataset(&[1; 30], &[2; 30]);
        assert!(matches!(
            restaurant_correlation(&ds, "a", "b", 14),
            Err(Error::CorrelationUndefined(_))
        ));
        assert!(restaurant_correlation(&ds, "a", "zzz", 14).is_err());
    }

    #[test]
    fn moving_average_window() {
        assert_eq!(
            moving_average(&[1.0, 2.0, 3.0, 4.0], 2),
            vec![1.5, 2.5, 3.5]
        );
        assert!(moving_average(&[1.0], 2).is_empty());
    }
}
