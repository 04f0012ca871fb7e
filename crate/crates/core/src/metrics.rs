//! Evaluation metrics (video-level accuracy, per-phase precision/recall, F1)
//! and the per-phase highest/lowest-attention frame extraction.
//!
//! Precision/recall aggregation is fixed here once for the whole project:
//! per video, over the phases present in that video's ground truth, then
//! averaged over phases and videos. F1 is the harmonic mean of the
//! aggregated precision and recall. All reported values are percentages.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::FrameConfidence;
use crate::model::AttentionRecord;
use crate::tensor::Tensor;

/// Row-wise argmax; ties break toward the lowest class index.
pub fn predict_labels(probs: &Tensor) -> Vec<usize> {
    let (rows, cols) = probs.dims2().expect("predict_labels expects a 2D tensor");
    (0..rows)
        .map(|r| {
            let row = probs.row(r);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            let _ = cols;
            best
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMetrics {
    pub video: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseMetrics {
    pub phase: usize,
    pub precision: f64,
    pub recall: f64,
    /// Number of videos whose ground truth contains this phase.
    pub videos: usize,
}

/// Metrics for one evaluation set (e.g. one fold's test videos).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_video: Vec<VideoMetrics>,
    pub per_phase: Vec<PhaseMetrics>,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Frame-wise comparison of predicted against ground-truth label sequences.
pub fn evaluate_metrics(
    predictions: &[Vec<usize>],
    ground_truth: &[Vec<usize>],
) -> Result<MetricsReport> {
    if predictions.len() != ground_truth.len() {
        return Err(Error::invalid(format!(
            "{} prediction sequences vs {} ground-truth sequences",
            predictions.len(),
            ground_truth.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::invalid("no videos to evaluate"));
    }
    let mut per_video = Vec::with_capacity(predictions.len());
    // phase -> (sum precision, sum recall, videos containing it)
    let mut phase_acc: std::collections::BTreeMap<usize, (f64, f64, usize)> =
        std::collections::BTreeMap::new();

    for (v, (pred, gt)) in predictions.iter().zip(ground_truth).enumerate() {
        if pred.len() != gt.len() {
            return Err(Error::invalid(format!(
                "video {v}: {} predictions vs {} labels",
                pred.len(),
                gt.len()
            )));
        }
        if gt.is_empty() {
            return Err(Error::invalid(format!("video {v} is empty")));
        }
        let correct = pred.iter().zip(gt).filter(|(p, g)| p == g).count();
        let accuracy = 100.0 * correct as f64 / gt.len() as f64;

        let mut phases: Vec<usize> = gt.to_vec();
        phases.sort_unstable();
        phases.dedup();

        let mut p_sum = 0.0;
        let mut r_sum = 0.0;
        for &phase in &phases {
            let tp = pred.iter().zip(gt).filter(|&(&p, &g)| p == phase && g == phase).count();
            let gt_count = gt.iter().filter(|&&g| g == phase).count();
            let pred_count = pred.iter().filter(|&&p| p == phase).count();
            let recall = tp as f64 / gt_count as f64;
            let precision = if pred_count > 0 { tp as f64 / pred_count as f64 } else { 0.0 };
            p_sum += precision;
            r_sum += recall;
            let entry = phase_acc.entry(phase).or_insert((0.0, 0.0, 0));
            entry.0 += precision;
            entry.1 += recall;
            entry.2 += 1;
        }
        per_video.push(VideoMetrics {
            video: v,
            accuracy,
            precision: 100.0 * p_sum / phases.len() as f64,
            recall: 100.0 * r_sum / phases.len() as f64,
        });
    }

    let n = per_video.len() as f64;
    let accuracy = per_video.iter().map(|m| m.accuracy).sum::<f64>() / n;
    let precision = per_video.iter().map(|m| m.precision).sum::<f64>() / n;
    let recall = per_video.iter().map(|m| m.recall).sum::<f64>() / n;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    let per_phase = phase_acc
        .into_iter()
        .map(|(phase, (p, r, count))| PhaseMetrics {
            phase,
            precision: 100.0 * p / count as f64,
            recall: 100.0 * r / count as f64,
            videos: count,
        })
        .collect();

    Ok(MetricsReport { per_video, per_phase, accuracy, precision, recall, f1 })
}

/// Mean and population standard deviation (divide by n).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Spearman rank correlation with average ranks for ties. Returns 0 when
/// either input has zero rank variance.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "spearman inputs must have equal length");
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx.sqrt() * vy.sqrt())
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

// ── Highest / lowest attention frames ────────────────────────────────

/// Per-phase extremes of the layer-summed frame attention, with the model
/// prediction and backbone CEE at those frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseExtremes {
    pub phase: usize,
    pub ha_frame: usize,
    pub ha_score: f64,
    pub ha_prediction: usize,
    pub ha_correct: bool,
    pub ha_cee: f64,
    pub la_frame: usize,
    pub la_score: f64,
    pub la_prediction: usize,
    pub la_correct: bool,
    pub la_cee: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HaLaReport {
    pub phases: Vec<PhaseExtremes>,
}

/// For every phase with at least one ground-truth frame, locate the frames
/// with the highest and lowest summed attention (ties break toward the
/// earliest frame).
pub fn extract_ha_la(
    record: &AttentionRecord,
    labels: &[usize],
    predictions: &[usize],
    conf: &FrameConfidence,
) -> Result<HaLaReport> {
    let t = labels.len();
    if record.frame_scores.len() != t || predictions.len() != t || conf.cee.len() != t {
        return Err(Error::invalid(format!(
            "extract_ha_la: inconsistent lengths (scores {}, labels {}, predictions {}, cee {})",
            record.frame_scores.len(),
            t,
            predictions.len(),
            conf.cee.len()
        )));
    }
    let mut phases: Vec<usize> = labels.to_vec();
    phases.sort_unstable();
    phases.dedup();

    let mut out = Vec::with_capacity(phases.len());
    for phase in phases {
        let mut ha = None;
        let mut la = None;
        for (frame, &label) in labels.iter().enumerate() {
            if label != phase {
                continue;
            }
            let score = record.frame_scores[frame];
            match ha {
                None => ha = Some((frame, score)),
                Some((_, best)) if score > best => ha = Some((frame, score)),
                _ => {}
            }
            match la {
                None => la = Some((frame, score)),
                Some((_, worst)) if score < worst => la = Some((frame, score)),
                _ => {}
            }
        }
        let (ha_frame, ha_score) = ha.unwrap();
        let (la_frame, la_score) = la.unwrap();
        out.push(PhaseExtremes {
            phase,
            ha_frame,
            ha_score,
            ha_prediction: predictions[ha_frame],
            ha_correct: predictions[ha_frame] == phase,
            ha_cee: conf.cee[ha_frame],
            la_frame,
            la_score,
            la_prediction: predictions[la_frame],
            la_correct: predictions[la_frame] == phase,
            la_cee: conf.cee[la_frame],
        });
    }
    Ok(HaLaReport { phases: out })
}
