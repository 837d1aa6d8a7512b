//! Pixel metrics for drivable masks, tolerance metrics for curb points and
//! dataset-level aggregation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelMask;
use crate::spatial::HashGrid;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn population(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            tn: self.tn + o.tn,
            fn_: self.fn_ + o.fn_,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
    pub population: u64,
    /// Some ratio had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

pub fn confusion_counts(pred: &LabelMask, truth: &LabelMask) -> Result<ConfusionCounts> {
    if (pred.width(), pred.height()) != (truth.width(), truth.height()) {
        return Err(Error::DimensionMismatch(format!(
            "prediction {}x{} vs truth {}x{}",
            pred.width(),
            pred.height(),
            truth.width(),
            truth.height()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.values().iter().zip(truth.values()) {
        match (p != 0, t != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// `num / den`, or 0 with the flag raised when `den` is 0.
fn ratio(num: f64, den: f64, degenerate: &mut bool) -> f64 {
    if den == 0.0 {
        *degenerate = true;
        0.0
    } else {
        num / den
    }
}

fn f1_of(precision: f64, recall: f64, degenerate: &mut bool) -> f64 {
    ratio(2.0 * precision * recall, precision + recall, degenerate)
}

pub fn mask_metrics(c: &ConfusionCounts) -> Result<MetricReport> {
    let n = c.population();
    if n == 0 {
        return Err(Error::InvalidArgument("empty population".into()));
    }
    let (tp, fp, tn, fneg) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let mut degenerate = false;
    let precision = ratio(tp, tp + fp, &mut degenerate);
    let recall = ratio(tp, tp + fneg, &mut degenerate);
    let f1 = f1_of(precision, recall, &mut degenerate);
    let iou = ratio(tp, tp + fp + fneg, &mut degenerate);
    Ok(MetricReport {
        accuracy: (tp + tn) / n as f64,
        precision,
        recall,
        f1,
        iou,
        population: n,
        degenerate,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CurbReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Predicted points within tolerance of some truth point.
    pub true_positives: u64,
    pub predicted: u64,
    /// Truth points within tolerance of some predicted point.
    pub matched_truth: u64,
    pub truth: u64,
    pub degenerate: bool,
}

impl CurbReport {
    fn from_counts(true_positives: u64, predicted: u64, matched_truth: u64, truth: u64) -> Self {
        let mut degenerate = false;
        let precision = ratio(true_positives as f64, predicted as f64, &mut degenerate);
        let recall = ratio(matched_truth as f64, truth as f64, &mut degenerate);
        let f1 = f1_of(precision, recall, &mut degenerate);
        Self {
            precision,
            recall,
            f1,
            true_positives,
            predicted,
            matched_truth,
            truth,
            degenerate,
        }
    }
}

fn count_matched(points: &[Vector3<f64>], against: &[Vector3<f64>], tol: f64) -> u64 {
    if against.is_empty() {
        return 0;
    }
    let grid = HashGrid::new(against.to_vec(), tol.max(0.05));
    points.iter().filter(|p| grid.nearest_within(p, tol).is_some()).count() as u64
}

/// Proximity metrics: a prediction is correct when some truth point lies
/// within `tolerance`, and a truth point is recalled when some prediction
/// does.
pub fn curb_metrics(pred: &[Vector3<f64>], truth: &[Vector3<f64>], tolerance: f64) -> Result<CurbReport> {
    if !(tolerance > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tolerance}")));
    }
    Ok(CurbReport::from_counts(
        count_matched(pred, truth, tolerance),
        pred.len() as u64,
        count_matched(truth, pred, tolerance),
        truth.len() as u64,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// PNG masks, 255 = drivable.
    Masks,
    /// Point sets in the scan layout, matched with a distance tolerance.
    Curbs { tolerance: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub frame: String,
    pub report: MetricReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counts: Option<ConfusionCounts>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curb: Option<CurbReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub mode: EvalMode,
    pub frames: Vec<FrameReport>,
    /// Metrics of the pooled counts.
    pub micro: MetricReport,
    /// Mean of the per-frame metrics.
    pub macro_avg: MetricReport,
}

fn list_frames(dir: &Path, ext: &str) -> Result<BTreeMap<String, PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = BTreeMap::new();
    for entry in rd {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), path);
            }
        }
    }
    Ok(out)
}

fn mean_report(frames: &[FrameReport]) -> MetricReport {
    let n = frames.len() as f64;
    let mut m = MetricReport::default();
    for f in frames {
        let r = &f.report;
        m.accuracy += r.accuracy / n;
        m.precision += r.precision / n;
        m.recall += r.recall / n;
        m.f1 += r.f1 / n;
        m.iou += r.iou / n;
        m.population += r.population;
        m.degenerate |= r.degenerate;
    }
    m
}

fn curb_as_metric(c: &CurbReport) -> MetricReport {
    MetricReport {
        precision: c.precision,
        recall: c.recall,
        f1: c.f1,
        population: c.predicted + c.truth,
        degenerate: c.degenerate,
        ..MetricReport::default()
    }
}

/// Matches frames by file stem and aggregates per-frame metrics. Curb
/// reports leave accuracy and IoU at 0.
pub fn evaluate_dataset(pred_dir: &Path, truth_dir: &Path, mode: EvalMode) -> Result<DatasetReport> {
    let ext = match mode {
        EvalMode::Masks => "png",
        EvalMode::Curbs { .. } => "bin",
    };
    let pred = list_frames(pred_dir, ext)?;
    let truth = list_frames(truth_dir, ext)?;
    let unmatched: Vec<String> = pred.keys().filter(|k| !truth.contains_key(*k)).cloned().collect();
    if !unmatched.is_empty() {
        return Err(Error::UnmatchedFrames(unmatched));
    }
    if pred.is_empty() {
        return Err(Error::InvalidArgument(format!("no .{ext} frames in {}", pred_dir.display())));
    }
    let mut frames = Vec::with_capacity(pred.len());
    let mut pooled = ConfusionCounts::default();
    let mut pooled_curb = CurbReport::default();
    for (name, p) in &pred {
        let t = &truth[name];
        let fr = match mode {
            EvalMode::Masks => {
                let c = confusion_counts(&LabelMask::load_png(p)?, &LabelMask::load_png(t)?)?;
                pooled = pooled + c;
                FrameReport {
                    frame: name.clone(),
                    report: mask_metrics(&c)?,
                    counts: Some(c),
                    curb: None,
                }
            }
            EvalMode::Curbs { tolerance } => {
                let c = curb_metrics(&crate::io::read_point_set(p)?, &crate::io::read_point_set(t)?, tolerance)?;
                pooled_curb.true_positives += c.true_positives;
                pooled_curb.predicted += c.predicted;
                pooled_curb.matched_truth += c.matched_truth;
                pooled_curb.truth += c.truth;
                FrameReport {
                    frame: name.clone(),
                    report: curb_as_metric(&c),
                    counts: None,
                    curb: Some(c),
                }
            }
        };
        frames.push(fr);
    }
    let micro = match mode {
        EvalMode::Masks => mask_metrics(&pooled)?,
        EvalMode::Curbs { .. } => curb_as_metric(&CurbReport::from_counts(
            pooled_curb.true_positives,
            pooled_curb.predicted,
            pooled_curb.matched_truth,
            pooled_curb.truth,
        )),
    };
    let macro_avg = mean_report(&frames);
    Ok(DatasetReport {
        mode,
        frames,
        micro,
        macro_avg,
    })
}

/// Plain-text table: one row per frame plus the micro and macro rows.
pub fn format_report_table(report: &DatasetReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<12} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "frame", "accuracy", "precision", "recall", "f1", "iou"
    );
    let row = |s: &mut String, name: &str, r: &MetricReport| {
        let _ = writeln!(
            s,
            "{:<12} {:>9.2} {:>9.2} {:>9.2} {:>9.2} {:>9.2}",
            name,
            100.0 * r.accuracy,
            100.0 * r.precision,
            100.0 * r.recall,
            100.0 * r.f1,
            100.0 * r.iou
        );
    };
    for f in &report.frames {
        row(&mut s, &f.frame, &f.report);
    }
    row(&mut s, "micro", &report.micro);
    row(&mut s, "macro", &report.macro_avg);
    s
}
