//! Frame-level and event-level mean average precision.
//!
//! AP is the uninterpolated all-point estimate: rank by score (descending, ties in
//! input order), then sum precision at every true positive divided by the number
//! of positives. Classes with no positives are excluded from the mean.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::Interval;
use crate::error::{Error, Result};
use crate::io_util::write_atomic;
use crate::tensor::TimeMatrix;

/// Per-class AP and the mean over classes that had positives.
#[derive(Debug, Clone, PartialEq)]
pub struct ApResult {
    /// `None` marks a class with zero positives (excluded from the mean).
    pub per_class: Vec<Option<f64>>,
    pub mean: f64,
}

impl ApResult {
    fn from_per_class(per_class: Vec<Option<f64>>) -> Result<Self> {
        let included: Vec<f64> = per_class.iter().flatten().copied().collect();
        if included.is_empty() {
            return Err(Error::InvalidArgument(
                "no class has any positive instance; mAP is undefined".into(),
            ));
        }
        let mean = included.iter().sum::<f64>() / included.len() as f64;
        Ok(Self { per_class, mean })
    }

    pub fn excluded(&self) -> Vec<usize> {
        (0..self.per_class.len())
            .filter(|&c| self.per_class[c].is_none())
            .collect()
    }
}

/// AP from a list of `(score, is_positive)`; `None` when there are no positives.
pub fn frame_ap(scores: &[(f64, bool)]) -> Option<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].0.total_cmp(&scores[a].0));
    ap_from_ranked(order.iter().map(|&i| scores[i].1), scores.iter().filter(|s| s.1).count())
}

/// AP over a ranked hit sequence given the total number of positives.
fn ap_from_ranked(hits: impl Iterator<Item = bool>, positives: usize) -> Option<f64> {
    if positives == 0 {
        return None;
    }
    let mut tp = 0usize;
    let mut sum = 0.0;
    for (rank, hit) in hits.enumerate() {
        if hit {
            tp += 1;
            sum += tp as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / positives as f64)
}

/// Frame mAP: per class, all frames of all videos pooled into one ranking.
pub fn frame_map(probs: &[TimeMatrix], labels: &[TimeMatrix]) -> Result<ApResult> {
    if probs.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation set".into()));
    }
    if probs.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} prediction sets for {} label sets",
            probs.len(),
            labels.len()
        )));
    }
    let n_classes = probs[0].channels();
    for (p, l) in probs.iter().zip(labels) {
        p.ensure_same_shape(l, "frame_map")?;
        if p.channels() != n_classes {
            return Err(Error::shape("frame_map", "videos disagree on class count"));
        }
    }
    let per_class = (0..n_classes)
        .map(|c| {
            let scores: Vec<(f64, bool)> = probs
                .iter()
                .zip(labels)
                .flat_map(|(p, l)| (0..p.steps()).map(move |t| (p.get(t, c), l.get(t, c) > 0.5)))
                .collect();
            frame_ap(&scores)
        })
        .collect();
    ApResult::from_per_class(per_class)
}

/// A scored detected interval `[start, end)` in frames.
#[derive(Debug, Clone, PartialEq)]
pub struct EventDetection {
    pub class: usize,
    pub start: usize,
    pub end: usize,
    pub score: f64,
}

/// Per class, every maximal run of steps with probability `>= tau` becomes one
/// event scored by the mean probability over the run.
pub fn extract_events(probs: &TimeMatrix, tau: f64) -> Result<Vec<EventDetection>> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidArgument(format!("threshold must be in (0, 1), got {tau}")));
    }
    let mut events = Vec::new();
    for c in 0..probs.channels() {
        let mut run: Option<(usize, f64)> = None;
        for t in 0..=probs.steps() {
            let p = (t < probs.steps()).then(|| probs.get(t, c)).filter(|&p| p >= tau);
            match (p, run) {
                (Some(p), Some((s, acc))) => run = Some((s, acc + p)),
                (Some(p), None) => run = Some((t, p)),
                (None, Some((s, acc))) => {
                    events.push(EventDetection {
                        class: c,
                        start: s,
                        end: t,
                        score: acc / (t - s) as f64,
                    });
                    run = None;
                }
                (None, None) => {}
            }
        }
    }
    Ok(events)
}

/// Intersection over union of half-open frame intervals.
pub fn temporal_iou(a: (usize, usize), b: (usize, usize)) -> f64 {
    let inter = a.1.min(b.1).saturating_sub(a.0.max(b.0));
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    if union == 0 {
        return 0.0;
    }
    inter as f64 / union as f64
}

/// Event mAP at IoU threshold `theta`.
///
/// Per class, detections from all videos are ranked by score. Each one is matched
/// to the still-unmatched ground-truth interval of the same video and class with
/// the highest IoU (lowest index on ties); it is a true positive if that IoU is at
/// least `theta`, and only then is the ground truth consumed.
pub fn event_map(
    detections: &[Vec<EventDetection>],
    ground_truth: &[Vec<Interval>],
    n_classes: usize,
    theta: f64,
) -> Result<ApResult> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidArgument(format!("IoU threshold must be in (0, 1], got {theta}")));
    }
    if detections.len() != ground_truth.len() {
        return Err(Error::InvalidArgument(format!(
            "{} detection sets for {} ground-truth sets",
            detections.len(),
            ground_truth.len()
        )));
    }
    if detections.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation set".into()));
    }
    let per_class = (0..n_classes)
        .map(|c| {
            let gts: Vec<Vec<(usize, usize)>> = ground_truth
                .iter()
                .map(|v| v.iter().filter(|g| g.class == c).map(|g| (g.start, g.end)).collect())
                .collect();
            let positives: usize = gts.iter().map(Vec::len).sum();
            let mut ranked: Vec<(usize, &EventDetection)> = detections
                .iter()
                .enumerate()
                .flat_map(|(v, d)| d.iter().filter(|e| e.class == c).map(move |e| (v, e)))
                .collect();
            ranked.sort_by(|a, b| b.1.score.total_cmp(&a.1.score));
            let mut used: Vec<Vec<bool>> = gts.iter().map(|g| vec![false; g.len()]).collect();
            let hits = ranked.iter().map(|&(v, det)| {
                let best = gts[v]
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !used[v][*i])
                    .map(|(i, &g)| (i, temporal_iou((det.start, det.end), g)))
                    .fold(None, |acc: Option<(usize, f64)>, (i, iou)| match acc {
                        Some((_, best)) if best >= iou => acc,
                        _ => Some((i, iou)),
                    });
                match best {
                    Some((i, iou)) if iou >= theta => {
                        used[v][i] = true;
                        true
                    }
                    _ => false,
                }
            });
            let hits: Vec<bool> = hits.collect();
            ap_from_ranked(hits.into_iter(), positives)
        })
        .collect();
    ApResult::from_per_class(per_class)
}

/// One row of a per-class report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub class: usize,
    pub name: String,
    pub instances: usize,
    pub ap: Option<f64>,
}

/// Rows ordered by instance count (descending), ties by class id.
pub fn per_class_report(result: &ApResult, names: &[String], instances: &[usize]) -> Result<Vec<ReportRow>> {
    let n = result.per_class.len();
    if names.len() != n || instances.len() != n {
        return Err(Error::InvalidArgument(format!(
            "report for {n} classes given {} names and {} counts",
            names.len(),
            instances.len()
        )));
    }
    let mut rows: Vec<ReportRow> = (0..n)
        .map(|c| ReportRow {
            class: c,
            name: names[c].clone(),
            instances: instances[c],
            ap: result.per_class[c],
        })
        .collect();
    rows.sort_by_key(|r| std::cmp::Reverse(r.instances));
    Ok(rows)
}

/// Frame AP plus event AP at each IoU threshold for one prediction set.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub frame: ApResult,
    pub events: Vec<(f64, ApResult)>,
}

/// Frame mAP over `probs` and event mAP at every threshold in `thetas`, with
/// events extracted from `probs` at `tau`.
pub fn evaluate(
    probs: &[TimeMatrix],
    labels: &[TimeMatrix],
    ground_truth: &[Vec<Interval>],
    tau: f64,
    thetas: &[f64],
) -> Result<Evaluation> {
    let frame = frame_map(probs, labels)?;
    let n_classes = probs[0].channels();
    let detections: Vec<Vec<EventDetection>> = probs
        .iter()
        .map(|p| extract_events(p, tau))
        .collect::<Result<_>>()?;
    let events = thetas
        .iter()
        .map(|&theta| Ok((theta, event_map(&detections, ground_truth, n_classes, theta)?)))
        .collect::<Result<_>>()?;
    Ok(Evaluation { frame, events })
}

fn fmt_ap(ap: Option<f64>) -> String {
    ap.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"))
}

/// Tab-separated results table: one row per class in report order, then the mAP row.
pub fn results_table(eval: &Evaluation, names: &[String], instances: &[usize]) -> Result<String> {
    let rows = per_class_report(&eval.frame, names, instances)?;
    let mut out = String::from("class_id\tname\tinstances\tframe_ap");
    for (theta, _) in &eval.events {
        let _ = write!(out, "\tevent_ap@{theta}");
    }
    out.push('\n');
    for row in rows {
        let _ = write!(out, "{}\t{}\t{}\t{}", row.class, row.name, row.instances, fmt_ap(row.ap));
        for (_, r) in &eval.events {
            let _ = write!(out, "\t{}", fmt_ap(r.per_class[row.class]));
        }
        out.push('\n');
    }
    let total: usize = instances.iter().sum();
    let _ = write!(out, "mAP\tall\t{total}\t{:.6}", eval.frame.mean);
    for (_, r) in &eval.events {
        let _ = write!(out, "\t{:.6}", r.mean);
    }
    out.push('\n');
    Ok(out)
}

pub fn write_results(path: &Path, eval: &Evaluation, names: &[String], instances: &[usize]) -> Result<()> {
    write_atomic(path, results_table(eval, names, instances)?.as_bytes())
}
