//! End-to-end orchestration: detect, map, localize, label and review a
//! sequence, driven by one config file, with a per-frame run manifest.

mod config;
mod stages;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{EvalConfig, MappingConfig, PathsConfig, PipelineConfig, RunConfig};
pub use stages::{
    artifact_location, artifact_paths, read_all_verdicts, read_localization, stage_detect, stage_eval, stage_label,
    stage_localize, stage_map, stage_review, stage_synth, with_pool, ArtifactLocation, EvalSummary, FrameRange,
    LocalizationRecord, OutputLayout, Sequence, StageReport,
};

use crate::error::{Error, Result};
use crate::review::ReviewVerdict;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameStatus {
    Labeled,
    Skipped,
    Quarantined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub frame_id: u32,
    pub status: FrameStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    /// Label artifacts, relative to the output directory.
    pub artifacts: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub localization: Option<LocalizationRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<ReviewVerdict>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameError {
    pub frame_id: u32,
    pub stage: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    /// One entry per input frame, ascending.
    pub frames: Vec<FrameEntry>,
    pub errors: Vec<FrameError>,
    /// Wall-clock seconds per stage and in total.
    pub timings: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn count(&self, status: FrameStatus) -> usize {
        self.frames.iter().filter(|f| f.status == status).count()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn assemble_manifest(cfg: &PipelineConfig, frames: &[u32], reports: &[StageReport]) -> Result<RunManifest> {
    let out = &cfg.paths.output;
    let labels = out.join(OutputLayout::LABELS);
    let locs = read_localization(out)?;
    let verdicts = read_all_verdicts(out)?;
    let mut errors = Vec::new();
    for r in reports {
        for (id, msg) in &r.failures {
            errors.push(FrameError {
                frame_id: *id,
                stage: r.stage.clone(),
                message: msg.clone(),
            });
        }
    }
    errors.sort_by_key(|e| e.frame_id);
    let entries = frames
        .iter()
        .map(|&id| {
            let verdict = verdicts.get(&id).cloned();
            let (status, reason) = match artifact_location(&labels, id) {
                Some(ArtifactLocation::Live) => (FrameStatus::Labeled, None),
                Some(ArtifactLocation::Quarantine) => {
                    (FrameStatus::Quarantined, verdict.as_ref().map(|v| v.reason.clone()))
                }
                None => {
                    // The earliest stage that left the frame behind.
                    let why = reports.iter().find_map(|r| {
                        r.failures
                            .get(&id)
                            .or_else(|| r.skipped.get(&id))
                            .map(|m| format!("{}: {m}", r.stage))
                    });
                    (FrameStatus::Skipped, Some(why.unwrap_or_else(|| "no label artifacts".into())))
                }
            };
            FrameEntry {
                frame_id: id,
                status,
                reason,
                artifacts: artifact_paths(out, id),
                localization: locs.get(&id).cloned(),
                verdict: if status == FrameStatus::Skipped { None } else { verdict },
            }
        })
        .collect();
    let mut timings: BTreeMap<String, f64> = reports.iter().map(|r| (r.stage.clone(), r.seconds)).collect();
    timings.insert("total".into(), reports.iter().map(|r| r.seconds).sum());
    Ok(RunManifest {
        config_hash: cfg.hash(),
        frames: entries,
        errors,
        timings,
    })
}

/// Runs detect, map, localize, label and review over the selected frames
/// of the configured sequence and writes `manifest.json` last. Frame-level
/// failures are recorded in the manifest; configuration and I/O errors
/// abort the run.
pub fn run_pipeline(cfg: &PipelineConfig, range: Option<FrameRange>) -> Result<RunManifest> {
    let start = Instant::now();
    cfg.validate()?;
    let seq = Sequence::open(&cfg.paths.sequence)?;
    let frames = seq.select(range);
    if frames.is_empty() {
        return Err(Error::Config(format!("no frames of {} in range {range:?}", seq.dir.display())));
    }
    let out = cfg.paths.output.clone();
    let reports = with_pool(cfg.run.parallelism, || -> Result<Vec<StageReport>> {
        let detect = stage_detect(cfg, &seq, &frames, &out)?;
        let map = stage_map(cfg, &seq, &detect.processed, &out)?;
        let localize = stage_localize(cfg, &seq, &detect.processed, &out)?;
        let label = stage_label(cfg, &seq, &localize.processed, &out)?;
        let (review, _) = stage_review(cfg, &seq, &frames, &out)?;
        Ok(vec![detect, map, localize, label, review])
    })??;
    let mut manifest = assemble_manifest(cfg, &frames, &reports)?;
    manifest.timings.insert("total".into(), start.elapsed().as_secs_f64());
    crate::io::write_atomic(&out.join(OutputLayout::MANIFEST), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(manifest)
}
