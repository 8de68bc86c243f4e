//! Metrics and audits.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::channel::OfdmChannel;
use crate::codebook::RateProfile;
use crate::dataset::{vectorize, BLOCKED_CLASS};
use crate::scene::Point3;
use crate::{Error, Result};

/// Fraction of samples whose target is among the first `k` predicted indices.
pub fn top_k_accuracy(predictions: &[Vec<usize>], targets: &[usize], k: usize) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if targets.is_empty() {
        return Ok(0.0);
    }
    let hits = predictions
        .iter()
        .zip(targets)
        .filter(|(p, t)| p.iter().take(k).any(|i| i == *t))
        .count();
    Ok(hits as f64 / targets.len() as f64)
}

/// Mean best-of-`k` achieved rate and the mean oracle rate.
pub fn rate_of_predictions(profiles: &[RateProfile], predictions: &[Vec<usize>], k: usize) -> Result<(f64, f64)> {
    if profiles.len() != predictions.len() {
        return Err(Error::invalid(format!(
            "{} rate profiles for {} predictions",
            profiles.len(),
            predictions.len()
        )));
    }
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if profiles.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mut achieved = 0.0;
    let mut bound = 0.0;
    for (profile, pred) in profiles.iter().zip(predictions) {
        let mut best = f64::NEG_INFINITY;
        for &i in pred.iter().take(k) {
            let r = *profile
                .rates
                .get(i)
                .ok_or_else(|| Error::invalid(format!("predicted beam {i} outside the codebook")))?;
            best = best.max(r);
        }
        if pred.is_empty() {
            return Err(Error::invalid("empty prediction list"));
        }
        achieved += best;
        bound += profile.best_rate();
    }
    let n = profiles.len() as f64;
    Ok((achieved / n, bound / n))
}

/// Unnormalized real-stacked channel vector used for the distance audits.
pub fn embedding(channel: &OfdmChannel) -> Vec<f64> {
    vectorize(channel, 1.0)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Leading principal direction by power iteration. Any unit vector keeps the
/// pruning exact; a high-variance one makes it effective.
fn projection_axis(points: &[&[f64]]) -> Vec<f64> {
    let dim = points.first().map_or(0, |p| p.len());
    let n = points.len().max(1) as f64;
    let mut mean = vec![0.0; dim];
    for p in points {
        mean.iter_mut().zip(p.iter()).for_each(|(m, v)| *m += v / n);
    }
    let mut axis: Vec<f64> = (0..dim).map(|i| 1.0 + (i as f64 * 0.618_033_988_75).fract()).collect();
    for _ in 0..30 {
        let mut next = vec![0.0; dim];
        for p in points {
            let s: f64 = p.iter().zip(&mean).zip(&axis).map(|((v, m), a)| (v - m) * a).sum();
            next.iter_mut().zip(p.iter().zip(&mean)).for_each(|(x, (v, m))| *x += s * (v - m));
        }
        let norm = next.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            break;
        }
        axis = next.into_iter().map(|v| v / norm).collect();
    }
    let norm = axis.iter().map(|v| v * v).sum::<f64>().sqrt();
    axis.into_iter().map(|v| v / norm).collect()
}

/// Scans every pair accepted by `consider` whose distance could be below
/// `max(tolerance, best so far)`. Pairs are pruned by their gap along one
/// projection axis, which lower-bounds the Euclidean distance.
fn pair_scan(points: &[&[f64]], tolerance: f64, consider: impl Fn(usize, usize) -> bool) -> (usize, f64) {
    let axis = projection_axis(points);
    let proj: Vec<f64> = points
        .iter()
        .map(|p| p.iter().zip(&axis).map(|(v, a)| v * a).sum())
        .collect();
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| proj[a].total_cmp(&proj[b]).then(a.cmp(&b)));
    let mut collisions = 0;
    let mut best = f64::INFINITY;
    for (oi, &i) in order.iter().enumerate() {
        for &j in &order[oi + 1..] {
            let gap = proj[j] - proj[i];
            if gap >= best.max(tolerance) {
                break;
            }
            if !consider(i, j) {
                continue;
            }
            let d = distance(points[i], points[j]);
            if d < tolerance {
                collisions += 1;
            }
            best = best.min(d);
        }
    }
    (collisions, best)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BijectivityReport {
    /// Pairs of distinct positions whose channels are closer than the tolerance.
    pub collision_count: usize,
    /// Smallest distance between channels of distinct positions; `+inf` when
    /// there is no such pair.
    pub min_pairwise_distance: f64,
}

/// Checks that distinct positions map to distinguishable sub-6 GHz channels.
pub fn bijectivity_check(channels: &[OfdmChannel], positions: &[Point3], tolerance: f64) -> Result<BijectivityReport> {
    if channels.len() != positions.len() {
        return Err(Error::invalid("one position per channel is required"));
    }
    let vectors: Vec<Vec<f64>> = channels.iter().map(embedding).collect();
    let points: Vec<&[f64]> = vectors.iter().map(Vec::as_slice).collect();
    let (collision_count, min_pairwise_distance) = pair_scan(&points, tolerance, |i, j| positions[i] != positions[j]);
    Ok(BijectivityReport {
        collision_count,
        min_pairwise_distance,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisjointnessReport {
    pub cross_collision_count: usize,
    /// Smallest blocked-to-unblocked channel distance; `+inf` if a set is empty.
    pub margin: f64,
}

/// Checks that blocked and unblocked channel sets do not overlap.
pub fn disjointness_check(blocked: &[OfdmChannel], unblocked: &[OfdmChannel], tolerance: f64) -> DisjointnessReport {
    let vectors: Vec<Vec<f64>> = blocked.iter().chain(unblocked).map(embedding).collect();
    let points: Vec<&[f64]> = vectors.iter().map(Vec::as_slice).collect();
    let nb = blocked.len();
    let (cross_collision_count, margin) = pair_scan(&points, tolerance, |i, j| (i < nb) != (j < nb));
    DisjointnessReport {
        cross_collision_count,
        margin,
    }
}

/// Binary confusion counts with "blocked" as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_positive: usize,
    pub false_negative: usize,
    pub false_positive: usize,
    pub true_negative: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.true_positive + self.false_negative + self.false_positive + self.true_negative
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            return 0.0;
        }
        (self.true_positive + self.true_negative) as f64 / self.total() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockageReport {
    pub accuracy: f64,
    pub confusion: Confusion,
}

/// Compares predicted and true class indices (`0` blocked, `1` unblocked).
pub fn blockage_report(predictions: &[usize], ground_truth: &[usize]) -> Result<BlockageReport> {
    if predictions.len() != ground_truth.len() {
        return Err(Error::invalid("predictions and ground truth differ in length"));
    }
    let mut c = Confusion::default();
    for (&p, &t) in predictions.iter().zip(ground_truth) {
        if p > 1 || t > 1 {
            return Err(Error::invalid("blockage labels must be 0 or 1"));
        }
        match (t == BLOCKED_CLASS, p == BLOCKED_CLASS) {
            (true, true) => c.true_positive += 1,
            (true, false) => c.false_negative += 1,
            (false, true) => c.false_positive += 1,
            (false, false) => c.true_negative += 1,
        }
    }
    Ok(BlockageReport {
        accuracy: c.accuracy(),
        confusion: c,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub snr_db: f64,
    pub top_k_accuracy: BTreeMap<usize, f64>,
    pub mean_rate_topk: BTreeMap<usize, f64>,
    pub upper_bound_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blockage: Option<BlockageReport>,
    pub tie_count: usize,
}

pub const CSV_HEADER: &str = "snr_db,k,accuracy,mean_rate,upper_bound_rate";

impl EvalReport {
    /// Beam-prediction report for ranked predictions.
    pub fn for_beams(
        snr_db: f64,
        ranked: &[Vec<usize>],
        profiles: &[RateProfile],
        ks: &[usize],
    ) -> Result<EvalReport> {
        let targets: Vec<usize> = profiles.iter().map(|p| p.best_index).collect();
        let mut report = EvalReport {
            snr_db,
            tie_count: profiles.iter().filter(|p| p.tie_count() > 0).count(),
            ..Default::default()
        };
        for &k in ks {
            report.top_k_accuracy.insert(k, top_k_accuracy(ranked, &targets, k)?);
            let (rate, bound) = rate_of_predictions(profiles, ranked, k)?;
            report.mean_rate_topk.insert(k, rate);
            report.upper_bound_rate = bound;
        }
        Ok(report)
    }

    pub fn top(&self, k: usize) -> f64 {
        self.top_k_accuracy.get(&k).copied().unwrap_or(f64::NAN)
    }

    pub fn rate(&self, k: usize) -> f64 {
        self.mean_rate_topk.get(&k).copied().unwrap_or(f64::NAN)
    }

    /// CSV rows (without header), one per `k`.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for (k, acc) in &self.top_k_accuracy {
            let rate = self.mean_rate_topk.get(k).map_or(String::new(), |r| r.to_string());
            out.push_str(&format!("{},{},{},{},{}\n", self.snr_db, k, acc, rate, self.upper_bound_rate));
        }
        out
    }
}

pub fn reports_to_csv(reports: &[EvalReport]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in reports {
        out.push_str(&r.csv_rows());
    }
    out
}
