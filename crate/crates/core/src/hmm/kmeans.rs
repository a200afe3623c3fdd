use crate::{Error, Result};

const MAX_ROUNDS: usize = 1000;

/// Two-cluster split of inter-arrival times on a log10 scale.
#[derive(Debug, Clone, PartialEq)]
pub struct KmeansSplit {
    /// Mean raw interval of the slow cluster (cluster 0).
    pub mu_slow: f64,
    /// Mean raw interval of the fast cluster (cluster 1).
    pub mu_fast: f64,
    /// Cluster per input value: 0 = slow, 1 = fast.
    pub assignments: Vec<u8>,
}

/// Lloyd's algorithm with k = 2 on `log10(delta)`.
///
/// The slow centroid starts at the maximum and the fast one at the minimum.
/// A point equidistant from both centroids goes to the slow cluster. An
/// empty cluster reports its centroid (back on the raw scale) as its mean.
pub fn kmeans2_log_intervals(deltas: &[f64]) -> Result<KmeansSplit> {
    if deltas.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "k-means needs at least 2 intervals, got {}",
            deltas.len()
        )));
    }
    if let Some(d) = deltas.iter().find(|d| !(**d > 0.0) || !d.is_finite()) {
        return Err(Error::Domain(format!(
            "intervals must be positive, got {d}"
        )));
    }
    let logs: Vec<f64> = deltas.iter().map(|d| d.log10()).collect();
    let mut centroids = [
        logs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        logs.iter().copied().fold(f64::INFINITY, f64::min),
    ];
    let mut assignments = vec![u8::MAX; logs.len()];
    for _ in 0..MAX_ROUNDS {
        let mut changed = false;
        for (a, &x) in assignments.iter_mut().zip(&logs) {
            let c = if (x - centroids[1]).abs() < (x - centroids[0]).abs() {
                1
            } else {
                0
            };
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sum = [0.0; 2];
        let mut n = [0usize; 2];
        for (&a, &x) in assignments.iter().zip(&logs) {
            sum[a as usize] += x;
            n[a as usize] += 1;
        }
        for c in 0..2 {
            if n[c] > 0 {
                centroids[c] = sum[c] / n[c] as f64;
            }
        }
    }

    let mut raw_sum = [0.0; 2];
    let mut n = [0usize; 2];
    for (&a, &d) in assignments.iter().zip(deltas) {
        raw_sum[a as usize] += d;
        n[a as usize] += 1;
    }
    let mean = |c: usize| {
        if n[c] > 0 {
            raw_sum[c] / n[c] as f64
        } else {
            10f64.powf(centroids[c])
        }
    };
    let (mut mu_slow, mut mu_fast) = (mean(0), mean(1));
    if mu_slow < mu_fast {
        // one-dimensional Lloyd keeps centroid order, so this is unreachable in
        // practice; keep the documented contract regardless
        std::mem::swap(&mut mu_slow, &mut mu_fast);
        for a in &mut assignments {
            *a = 1 - *a;
        }
    }
    Ok(KmeansSplit {
        mu_slow,
        mu_fast,
        assignments,
    })
}
