use std::io::{BufRead, BufReader};
use std::path::Path;

use image::{GrayAlphaImage, RgbImage};
use serde::{Deserialize, Serialize};

use super::images::{compute_adi, overlay_curbs, render_bev, ReviewImageParams};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Extrinsics, Label, LabeledCloud};
use crate::labels::project_points;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Retain,
    Discard,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictSource {
    Remote,
    Heuristic,
    /// The frame could not be reviewed; it is discarded with confidence 0.
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewVerdict {
    pub frame_id: u32,
    pub decision: Decision,
    pub confidence: f64,
    pub reason: String,
    pub source: VerdictSource,
}

impl ReviewVerdict {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::InvalidArgument(format!(
                "frame {}: confidence {} outside [0, 1]",
                self.frame_id, self.confidence
            )));
        }
        Ok(())
    }

    pub fn retained(&self) -> bool {
        self.decision == Decision::Retain
    }

    /// Discard verdict for a frame whose review failed.
    pub fn failed(frame_id: u32, reason: impl Into<String>) -> Self {
        Self {
            frame_id,
            decision: Decision::Discard,
            confidence: 0.0,
            reason: reason.into(),
            source: VerdictSource::Error,
        }
    }
}

/// Per-frame facts the heuristic reviewer decides on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReviewMetadata {
    pub left_count: usize,
    pub right_count: usize,
    /// Boundary fit residual of the frame's curb detection, meters.
    pub residual_rms: f64,
    /// Shorter of the two sides' forward extents, meters.
    pub curb_span: f64,
}

impl ReviewMetadata {
    /// Counts and spans of the curb labels of one frame, given in its
    /// sensor frame.
    pub fn from_curbs(curbs: &LabeledCloud, residual_rms: f64) -> Self {
        let side = |label: Label| {
            let xs: Vec<f64> = curbs
                .iter()
                .filter(|(p, l)| *l == label && p.is_finite())
                .map(|(p, _)| p.x)
                .collect();
            let span = match (xs.iter().copied().reduce(f64::min), xs.iter().copied().reduce(f64::max)) {
                (Some(lo), Some(hi)) => hi - lo,
                _ => 0.0,
            };
            (xs.len(), span)
        };
        let (left_count, left_span) = side(Label::CurbLeft);
        let (right_count, right_span) = side(Label::CurbRight);
        Self {
            left_count,
            right_count,
            residual_rms,
            curb_span: left_span.min(right_span),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReviewSample {
    pub frame_id: u32,
    pub rgb_overlay: RgbImage,
    pub adi: GrayAlphaImage,
    pub bev: RgbImage,
    pub metadata: ReviewMetadata,
}

impl ReviewSample {
    /// Builds the three review images for one labeled frame. `scan` and
    /// `curbs` are in the frame's sensor frame.
    pub fn build(
        frame_id: u32,
        rgb: &RgbImage,
        scan: &LabeledCloud,
        curbs: &LabeledCloud,
        residual_rms: f64,
        calib: (&CameraIntrinsics, &Extrinsics),
        params: &ReviewImageParams,
    ) -> Result<Self> {
        params.validate()?;
        if rgb.width() == 0 || rgb.height() == 0 {
            return Err(Error::InvalidArgument(format!("frame {frame_id}: empty camera image")));
        }
        let (intr, extr) = calib;
        let pixels = project_points(curbs, intr, extr);
        Ok(Self {
            frame_id,
            rgb_overlay: overlay_curbs(rgb, &pixels),
            adi: compute_adi(scan, params.adi_resolution, params.extent)?,
            bev: render_bev(scan, &curbs.positions(), params.bev_resolution, params.extent)?,
            metadata: ReviewMetadata::from_curbs(curbs, residual_rms),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeuristicThresholds {
    /// Fewest curb points required on each side.
    pub min_points: usize,
    /// Largest acceptable boundary fit residual, meters.
    pub max_residual: f64,
    /// Shortest acceptable curb span along the road, meters.
    pub min_span: f64,
}

impl Default for HeuristicThresholds {
    fn default() -> Self {
        Self {
            min_points: 30,
            max_residual: 0.2,
            min_span: 10.0,
        }
    }
}

impl HeuristicThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_points > 0 && self.max_residual > 0.0 && self.min_span > 0.0) {
            return Err(Error::InvalidArgument(format!("review thresholds must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Check names, in evaluation order. A discard verdict's reason is the
/// first failing one.
pub const HEURISTIC_CHECKS: [&str; 4] = ["left count", "right count", "residual", "span"];

/// Deterministic retain/discard decision from the frame metadata.
///
/// Each check has a relative margin `|value - threshold| / threshold`.
/// Confidence is the smallest margin among all checks for a retain and
/// among the failing checks for a discard, clipped to [0, 1].
pub fn review_heuristic(frame_id: u32, meta: &ReviewMetadata, th: &HeuristicThresholds) -> ReviewVerdict {
    let n = th.min_points as f64;
    // (passes, margin) per check, in HEURISTIC_CHECKS order.
    let residual = if meta.residual_rms.is_finite() { meta.residual_rms } else { f64::INFINITY };
    let checks = [
        (meta.left_count >= th.min_points, (meta.left_count as f64 - n).abs() / n),
        (meta.right_count >= th.min_points, (meta.right_count as f64 - n).abs() / n),
        (residual <= th.max_residual, (th.max_residual - residual).abs() / th.max_residual),
        (meta.curb_span >= th.min_span, (meta.curb_span - th.min_span).abs() / th.min_span),
    ];
    let first_failure = checks.iter().position(|c| !c.0);
    let retain = first_failure.is_none();
    let confidence = checks
        .iter()
        .filter(|c| retain || !c.0)
        .map(|c| c.1)
        .fold(f64::INFINITY, f64::min);
    let confidence = if confidence.is_nan() { 0.0 } else { confidence.clamp(0.0, 1.0) };
    ReviewVerdict {
        frame_id,
        decision: if retain { Decision::Retain } else { Decision::Discard },
        confidence,
        reason: match first_failure {
            Some(i) => HEURISTIC_CHECKS[i].to_string(),
            None => "all checks passed".to_string(),
        },
        source: VerdictSource::Heuristic,
    }
}

/// One JSON object per line, in the given order.
pub fn write_verdicts(path: &Path, verdicts: &[ReviewVerdict]) -> Result<()> {
    let mut text = String::new();
    for v in verdicts {
        text.push_str(&serde_json::to_string(v)?);
        text.push('\n');
    }
    crate::io::write_atomic(path, text.as_bytes())
}

pub fn read_verdicts(path: &Path) -> Result<Vec<ReviewVerdict>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v: ReviewVerdict = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            reason: e.to_string(),
        })?;
        v.validate()?;
        out.push(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::LidarPoint;
    use proptest::prelude::*;

    fn meta(l: usize, r: usize, res: f64, span: f64) -> ReviewMetadata {
        ReviewMetadata {
            left_count: l,
            right_count: r,
            residual_rms: res,
            curb_span: span,
        }
    }

    #[test]
    fn clean_frame_is_retained() {
        let v = review_heuristic(3, &meta(200, 200, 0.05, 25.0), &HeuristicThresholds::default());
        assert_eq!(v.decision, Decision::Retain);
        assert_eq!(v.source, VerdictSource::Heuristic);
        // Margins: 170/30, 170/30, 0.15/0.2, 15/10.
        assert!((v.confidence - 0.75).abs() < 1e-12);
    }

    #[test]
    fn failures_name_the_first_check() {
        let th = HeuristicThresholds::default();
        let v = review_heuristic(0, &meta(0, 0, 0.0, 0.0), &th);
        assert_eq!((v.decision, v.reason.as_str()), (Decision::Discard, "left count"));
        assert_eq!(v.confidence, 1.0);
        let v = review_heuristic(0, &meta(200, 200, 0.5, 25.0), &th);
        assert_eq!((v.decision, v.reason.as_str()), (Decision::Discard, "residual"));
        assert!((v.confidence - 1.0).abs() < 1e-12);
        let v = review_heuristic(0, &meta(200, 12, 0.05, 9.0), &th);
        assert_eq!(v.reason, "right count");
        assert!((v.confidence - 0.1).abs() < 1e-12);
        let v = review_heuristic(0, &meta(30, 30, 0.2, 10.0), &th);
        assert_eq!(v.decision, Decision::Retain);
        assert_eq!(v.confidence, 0.0);
        let v = review_heuristic(0, &meta(30, 30, f64::NAN, 10.0), &th);
        assert_eq!(v.reason, "residual");
    }

    #[test]
    fn metadata_counts_sides_and_spans() {
        let mut c = LabeledCloud::new(0);
        for x in [2.0, 5.0, 14.0] {
            c.push(LidarPoint::new(x, 4.0, -1.6), Label::CurbLeft);
        }
        for x in [3.0, 9.0] {
            c.push(LidarPoint::new(x, -4.0, -1.6), Label::CurbRight);
        }
        c.push(LidarPoint::new(40.0, 0.0, 0.0), Label::Drivable);
        let m = ReviewMetadata::from_curbs(&c, 0.03);
        assert_eq!(m, meta(3, 2, 0.03, 6.0));
        assert_eq!(ReviewMetadata::from_curbs(&LabeledCloud::new(0), 0.0).curb_span, 0.0);
    }

    #[test]
    fn verdict_lines_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("verdicts.jsonl");
        let vs = vec![
            review_heuristic(0, &meta(200, 200, 0.05, 25.0), &HeuristicThresholds::default()),
            review_heuristic(1, &meta(0, 200, 0.05, 25.0), &HeuristicThresholds::default()),
        ];
        write_verdicts(&path, &vs).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with(r#"{"frame_id":0,"decision":"retain","#));
        assert_eq!(read_verdicts(&path).unwrap(), vs);
        std::fs::write(&path, r#"{"frame_id":0,"decision":"maybe","confidence":0.5,"reason":"","source":"remote"}"#).unwrap();
        assert!(matches!(read_verdicts(&path), Err(Error::Parse { line: 1, .. })));
    }

    proptest! {
        #[test]
        fn heuristic_matches_rule_and_is_deterministic(
            l in 0usize..100, r in 0usize..100, res in 0.0..0.5f64, span in 0.0..30.0f64,
        ) {
            let th = HeuristicThresholds::default();
            let m = meta(l, r, res, span);
            let v = review_heuristic(7, &m, &th);
            let want = l >= 30 && r >= 30 && res <= 0.2 && span >= 10.0;
            prop_assert_eq!(v.retained(), want);
            prop_assert!((0.0..=1.0).contains(&v.confidence));
            prop_assert_eq!(&v, &review_heuristic(7, &m, &th));
            prop_assert!(v.validate().is_ok());
        }
    }
}
