//! Tolerance-swept spotting mAP.
//!
//! For each class and tolerance δ a prediction is a true positive when it
//! falls within `[t − δ/2, t + δ/2]` of a still unmatched ground-truth time
//! `t`; predictions are matched greedily in decreasing confidence. Precision
//! and recall are taken at 200 confidence thresholds, summarized by
//! 11-point interpolated AP, and averaged over δ with the trapezoid rule.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{EventClass, TrackedMatch, NUM_CLASSES};
use crate::spotter::SpottingPrediction;

pub const N_THRESHOLDS: usize = 200;
pub const RECALL_GRID: usize = 11;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("need at least two tolerance values, got {0}")]
    TooFewDeltas(usize),
    #[error("MissingDelta: report has no curves at δ = {0} s")]
    MissingDelta(f64),
}

/// Tolerances 5, 10, ..., 60 seconds.
pub fn default_deltas() -> Vec<f64> {
    (1..=12).map(|i| 5.0 * i as f64).collect()
}

/// Thresholds `i / 200` for `i = 1..=200`.
pub fn thresholds() -> Vec<f64> {
    (1..=N_THRESHOLDS)
        .map(|i| i as f64 / N_THRESHOLDS as f64)
        .collect()
}

/// `(time_s, confidence)` sorted by decreasing confidence, earlier first on
/// ties.
fn sort_by_confidence(preds: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut p = preds.to_vec();
    p.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.total_cmp(&b.0)));
    p
}

/// TP flags for predictions already sorted by decreasing confidence. Each
/// prediction takes the nearest unmatched ground truth within tolerance
/// (the earlier one on distance ties).
pub fn match_tp(sorted_preds: &[(f64, f64)], gts: &[f64], delta_s: f64) -> Vec<bool> {
    let half = delta_s / 2.0;
    let mut used = vec![false; gts.len()];
    sorted_preds
        .iter()
        .map(|&(t, _)| {
            let mut best: Option<usize> = None;
            for (j, &g) in gts.iter().enumerate() {
                if used[j] || (t - g).abs() > half {
                    continue;
                }
                best = match best {
                    Some(b) => {
                        let (db, dj) = ((t - gts[b]).abs(), (t - g).abs());
                        if dj < db || (dj == db && g < gts[b]) {
                            Some(j)
                        } else {
                            Some(b)
                        }
                    }
                    None => Some(j),
                };
            }
            if let Some(j) = best {
                used[j] = true;
                true
            } else {
                false
            }
        })
        .collect()
}

/// Counts accumulated over one or more matches for one class and δ.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ThresholdCounts {
    /// Per threshold: (true positives, predictions passing).
    pub counts: Vec<(usize, usize)>,
    pub n_gt: usize,
}

impl ThresholdCounts {
    pub fn new() -> Self {
        Self {
            counts: vec![(0, 0); N_THRESHOLDS],
            n_gt: 0,
        }
    }

    /// Adds one match's predictions and ground truths.
    pub fn add(&mut self, preds: &[(f64, f64)], gts: &[f64], delta_s: f64) {
        let sorted = sort_by_confidence(preds);
        let tp = match_tp(&sorted, gts, delta_s);
        self.n_gt += gts.len();
        // sorted confidences are non-increasing, so the predictions passing
        // a threshold form a prefix
        let mut prefix_tp = Vec::with_capacity(sorted.len() + 1);
        prefix_tp.push(0usize);
        for &f in &tp {
            prefix_tp.push(prefix_tp.last().unwrap() + usize::from(f));
        }
        for (slot, thr) in self.counts.iter_mut().zip(thresholds()) {
            let passing = sorted.partition_point(|p| p.1 >= thr);
            slot.0 += prefix_tp[passing];
            slot.1 += passing;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    /// Predictions passing the threshold.
    pub n_pred: usize,
}

/// Precision/recall at each threshold. Precision is 1 when nothing passes;
/// recall is 0 when there is no ground truth.
pub fn pr_curve(counts: &ThresholdCounts) -> Vec<PrPoint> {
    counts
        .counts
        .iter()
        .zip(thresholds())
        .map(|(&(tp, n), threshold)| PrPoint {
            threshold,
            precision: if n == 0 { 1.0 } else { tp as f64 / n as f64 },
            recall: if counts.n_gt == 0 {
                0.0
            } else {
                tp as f64 / counts.n_gt as f64
            },
            n_pred: n,
        })
        .collect()
}

/// 11-point interpolated AP. Points where no prediction passes carry no
/// detection and are left out of the envelope.
pub fn ap_11pt(points: &[PrPoint]) -> f64 {
    let mut total = 0.0;
    for i in 0..RECALL_GRID {
        let r = i as f64 / (RECALL_GRID - 1) as f64;
        let env = points
            .iter()
            .filter(|p| p.n_pred > 0 && p.recall >= r - 1e-12)
            .map(|p| p.precision)
            .fold(0.0, f64::max);
        total += env;
    }
    total / RECALL_GRID as f64
}

/// Trapezoidal mean of `values` sampled at increasing `xs`.
pub fn trapezoid_mean(xs: &[f64], values: &[f64]) -> Result<f64, EvalError> {
    if xs.len() < 2 {
        return Err(EvalError::TooFewDeltas(xs.len()));
    }
    let area: f64 = xs
        .windows(2)
        .zip(values.windows(2))
        .map(|(x, v)| (x[1] - x[0]) * (v[0] + v[1]) / 2.0)
        .sum();
    Ok(area / (xs[xs.len() - 1] - xs[0]))
}

/// Per-match input for one class: predictions `(time_s, confidence)` and
/// ground-truth times.
pub type ClassInstance<'a> = (&'a [(f64, f64)], &'a [f64]);

/// AP at each δ and their trapezoidal mean for one class.
pub fn class_ap(
    instances: &[ClassInstance<'_>],
    deltas: &[f64],
) -> Result<(Vec<f64>, f64), EvalError> {
    let aps: Vec<f64> = deltas
        .iter()
        .map(|&d| {
            let mut counts = ThresholdCounts::new();
            for &(p, g) in instances {
                counts.add(p, g, d);
            }
            ap_11pt(&pr_curve(&counts))
        })
        .collect();
    let mean = trapezoid_mean(deltas, &aps)?;
    Ok((aps, mean))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[derive(Default)]
pub struct EvalOptions {
    /// Count classes without ground truth as AP 0 instead of leaving them
    /// out of the mean.
    pub include_zero_gt_classes: bool,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub class: EventClass,
    pub delta_s: f64,
    pub ap: f64,
    pub points: Vec<PrPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: EventClass,
    pub n_gt: usize,
    pub n_pred: usize,
    pub ap_per_delta: Vec<f64>,
    pub average_ap: f64,
    /// Left out of the mAP because there is no ground truth.
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub deltas_s: Vec<f64>,
    pub options: EvalOptions,
    pub classes: Vec<ClassReport>,
    pub map: f64,
    pub notes: Vec<String>,
    pub curves: Vec<PrCurve>,
}

/// One match's predictions with its ground truth.
pub struct MatchEval<'a> {
    pub predictions: &'a [SpottingPrediction],
    pub ground_truth: &'a TrackedMatch,
}

pub fn evaluate(
    matches: &[MatchEval<'_>],
    deltas: &[f64],
    options: EvalOptions,
) -> Result<EvalReport, EvalError> {
    if deltas.len() < 2 {
        return Err(EvalError::TooFewDeltas(deltas.len()));
    }
    // per match, per class: predictions and ground-truth times
    let per_match: Vec<Vec<(Vec<(f64, f64)>, Vec<f64>)>> = matches
        .iter()
        .map(|m| {
            let mut v: Vec<(Vec<(f64, f64)>, Vec<f64>)> =
                vec![(Vec::new(), Vec::new()); NUM_CLASSES];
            for p in m.predictions {
                v[p.class.index()].0.push((p.time_s, p.confidence));
            }
            for e in &m.ground_truth.events {
                v[e.class.index()]
                    .1
                    .push(m.ground_truth.time_of(e.frame_index));
            }
            v
        })
        .collect();
    let mut classes = Vec::with_capacity(NUM_CLASSES);
    let mut curves = Vec::new();
    let mut notes = Vec::new();
    for class in EventClass::ALL {
        let c = class.index();
        let n_gt: usize = per_match.iter().map(|m| m[c].1.len()).sum();
        let n_pred: usize = per_match.iter().map(|m| m[c].0.len()).sum();
        let mut aps = Vec::with_capacity(deltas.len());
        for &d in deltas {
            let mut counts = ThresholdCounts::new();
            for m in &per_match {
                counts.add(&m[c].0, &m[c].1, d);
            }
            let points = pr_curve(&counts);
            let ap = if n_gt == 0 { 0.0 } else { ap_11pt(&points) };
            aps.push(ap);
            curves.push(PrCurve {
                class,
                delta_s: d,
                ap,
                points,
            });
        }
        let excluded = n_gt == 0 && !options.include_zero_gt_classes;
        if n_gt == 0 {
            notes.push(if excluded {
                format!(
                    "NoGroundTruth: {} has no ground-truth events and is excluded from the mAP",
                    class.name()
                )
            } else {
                format!(
                    "NoGroundTruth: {} has no ground-truth events and counts as AP 0 in the mAP",
                    class.name()
                )
            });
        }
        classes.push(ClassReport {
            class,
            n_gt,
            n_pred,
            average_ap: trapezoid_mean(deltas, &aps)?,
            ap_per_delta: aps,
            excluded,
        });
    }
    let counted: Vec<f64> = classes
        .iter()
        .filter(|c| !c.excluded)
        .map(|c| c.average_ap)
        .collect();
    let map = if counted.is_empty() {
        0.0
    } else {
        counted.iter().sum::<f64>() / counted.len() as f64
    };
    Ok(EvalReport {
        deltas_s: deltas.to_vec(),
        options,
        classes,
        map,
        notes,
        curves,
    })
}

impl EvalReport {
    pub fn curves_at(&self, delta_s: f64) -> Result<Vec<&PrCurve>, EvalError> {
        let v: Vec<&PrCurve> = self
            .curves
            .iter()
            .filter(|c| (c.delta_s - delta_s).abs() < 1e-9)
            .collect();
        if v.is_empty() {
            Err(EvalError::MissingDelta(delta_s))
        } else {
            Ok(v)
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes one `threshold,precision,recall` CSV body for a (class, δ).
    pub fn write_pr_csv<W: Write>(curve: &PrCurve, mut w: W) -> std::io::Result<()> {
        writeln!(w, "threshold,precision,recall")?;
        for p in &curve.points {
            writeln!(w, "{},{},{}", p.threshold, p.precision, p.recall)?;
        }
        Ok(())
    }
}

/// Comparison table with one row per labeled report: total mAP followed
/// by each class's average AP, in percent. Excluded classes print `-`.
pub fn format_table(rows: &[(String, &EvalReport)]) -> String {
    let label_w = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(6);
    let mut s = String::new();
    let _ = write!(s, "{:<label_w$} | {:>6} |", "", "Total");
    for class in EventClass::ALL {
        let _ = write!(s, " {:>11}", class.title());
    }
    s.push('\n');
    let width = s.trim_end().chars().count();
    s.push_str(&"-".repeat(width));
    s.push('\n');
    for (label, report) in rows {
        let _ = write!(s, "{:<label_w$} | {:>6.1} |", label, 100.0 * report.map);
        for c in &report.classes {
            if c.excluded {
                let _ = write!(s, " {:>11}", "-");
            } else {
                let _ = write!(s, " {:>11.1}", 100.0 * c.average_ap);
            }
        }
        s.push('\n');
    }
    s
}
