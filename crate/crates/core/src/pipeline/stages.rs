//! Stage functions. Each reads its inputs from the sequence and output
//! directories and writes its results there, so stages compose by files.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use image::RgbImage;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use crate::curb::{detect_curbs, CurbDetection};
use crate::error::{Error, Result};
use crate::eval::{evaluate_dataset, format_report_table, DatasetReport, EvalMode};
use crate::geometry::{CameraIntrinsics, Extrinsics, LabeledCloud, PoseSE3};
use crate::io;
use crate::labels::{export_curb_labels, generate_frame_labels, write_frame_labels, FrameLabels, LabelPaths, SkipRecord};
use crate::mapping::{load_map, register_scan, save_map, MapBuilder, SemanticMap};
use crate::review::{
    filter_dataset, read_verdicts, review_sample, write_verdicts, RetainedManifest, ReviewSample, ReviewVerdict,
    QUARANTINE_DIR,
};
use crate::synth::{generate_scene, write_sequence, SceneSpec, SequenceLayout};

/// Frames reviewed per batch, bounding the rendered images held at once.
const REVIEW_BATCH: usize = 16;

/// Paths below the output directory.
pub struct OutputLayout;

impl OutputLayout {
    pub const DETECTIONS: &'static str = "detections";
    pub const MAP: &'static str = "map.ply";
    pub const LOCALIZATION: &'static str = "localization.jsonl";
    pub const LABELS: &'static str = "labels";
    pub const VERDICTS: &'static str = "review/verdicts.jsonl";
    pub const EVAL: &'static str = "eval";
    pub const TRUTH_CURBS: &'static str = "eval/truth_curbs";
    pub const MANIFEST: &'static str = "manifest.json";

    pub fn detection(out: &Path, id: u32) -> PathBuf {
        out.join(Self::DETECTIONS).join(format!("{id:06}.json"))
    }

    pub fn detection_labels(out: &Path, id: u32) -> PathBuf {
        out.join(Self::DETECTIONS).join(format!("{id:06}.label"))
    }
}

/// Half-open frame id interval given as `a..b`, `a..`, `..b` or `a`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameRange {
    pub start: u32,
    pub end: u32,
}

impl FrameRange {
    pub fn contains(&self, id: u32) -> bool {
        (self.start..self.end).contains(&id)
    }

    pub fn select(&self, frames: &[u32]) -> Vec<u32> {
        frames.iter().copied().filter(|&f| self.contains(f)).collect()
    }
}

impl std::str::FromStr for FrameRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("frame range {s:?}: expected a..b, a.., ..b or a"));
        let num = |t: &str| t.trim().parse::<u32>().map_err(|_| bad());
        let r = match s.split_once("..") {
            Some((a, b)) => FrameRange {
                start: if a.trim().is_empty() { 0 } else { num(a)? },
                end: if b.trim().is_empty() { u32::MAX } else { num(b)? },
            },
            None => {
                let a = num(s)?;
                FrameRange {
                    start: a,
                    end: a.checked_add(1).ok_or_else(bad)?,
                }
            }
        };
        if r.start >= r.end {
            return Err(bad());
        }
        Ok(r)
    }
}

/// An input sequence: scans, poses and calibration.
#[derive(Clone, Debug)]
pub struct Sequence {
    pub dir: PathBuf,
    /// Ids of the scans present, ascending.
    pub frames: Vec<u32>,
    pub poses: Vec<PoseSE3>,
    pub intr: CameraIntrinsics,
    pub extr: Extrinsics,
}

impl Sequence {
    /// Checks the layout and reads poses and calibration. Scans are read
    /// by the stages.
    pub fn open(dir: &Path) -> Result<Self> {
        let scans = dir.join(SequenceLayout::SCANS);
        if !scans.is_dir() {
            return Err(Error::Config(format!("scans directory {} not found", scans.display())));
        }
        let mut frames = Vec::new();
        for entry in std::fs::read_dir(&scans).map_err(|e| Error::io(&scans, e))? {
            let path = entry.map_err(|e| Error::io(&scans, e))?.path();
            if path.extension().and_then(|e| e.to_str()) == Some("bin") {
                if let Some(id) = io::frame_id_from_path(&path) {
                    frames.push(id);
                }
            }
        }
        frames.sort_unstable();
        if frames.is_empty() {
            return Err(Error::Config(format!("no scans in {}", scans.display())));
        }
        let poses = io::load_poses(&dir.join(SequenceLayout::POSES))?;
        let last = *frames.last().expect("nonempty");
        if poses.len() <= last as usize {
            return Err(Error::Config(format!("{} poses for scan id {last}", poses.len())));
        }
        let (intr, extr) = io::load_calib(&dir.join(SequenceLayout::CALIB))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            frames,
            poses,
            intr,
            extr,
        })
    }

    pub fn scan_path(&self, id: u32) -> PathBuf {
        self.dir.join(SequenceLayout::SCANS).join(format!("{id:06}.bin"))
    }

    pub fn image_path(&self, id: u32) -> PathBuf {
        self.dir.join(SequenceLayout::IMAGES).join(format!("{id:06}.png"))
    }

    pub fn pose(&self, id: u32) -> &PoseSE3 {
        &self.poses[id as usize]
    }

    /// Frames inside `range`, or all of them.
    pub fn select(&self, range: Option<FrameRange>) -> Vec<u32> {
        match range {
            Some(r) => r.select(&self.frames),
            None => self.frames.clone(),
        }
    }
}

/// Outcome of one stage over a set of frames.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub processed: Vec<u32>,
    /// Frames left without output by a regular outcome, with the reason.
    pub skipped: BTreeMap<u32, String>,
    /// Frames whose processing failed, with the error.
    pub failures: BTreeMap<u32, String>,
    pub seconds: f64,
}

impl StageReport {
    fn new(stage: &str) -> Self {
        Self {
            stage: stage.to_string(),
            ..Self::default()
        }
    }

    fn finish(mut self, start: Instant) -> Self {
        self.seconds = start.elapsed().as_secs_f64();
        self
    }
}

/// Pose used for labeling one frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationRecord {
    pub frame_id: u32,
    pub pose: PoseSE3,
    /// False when the supplied pose was used as is.
    pub refined: bool,
    pub rms_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub inlier_fraction: f64,
}

pub(crate) fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                reason: format!("{}: {e}", path.display()),
            })
        })
        .collect()
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut text = String::new();
    for it in items {
        text.push_str(&serde_json::to_string(it)?);
        text.push('\n');
    }
    io::write_atomic(path, text.as_bytes())
}

/// Keeps the records of frames outside `replaced` and adds `new`, sorted
/// by frame id.
fn merge_records<T>(old: Vec<T>, new: Vec<T>, replaced: &BTreeSet<u32>, id: impl Fn(&T) -> u32) -> Vec<T> {
    let mut by_id: BTreeMap<u32, T> = old.into_iter().filter(|r| !replaced.contains(&id(r))).map(|r| (id(&r), r)).collect();
    by_id.extend(new.into_iter().map(|r| (id(&r), r)));
    by_id.into_values().collect()
}

fn collect_outcomes<T>(report: &mut StageReport, results: Vec<(u32, Result<T>)>) -> Vec<(u32, T)> {
    let mut ok = Vec::new();
    for (id, r) in results {
        match r {
            Ok(v) => {
                report.processed.push(id);
                ok.push((id, v));
            }
            Err(e) => {
                report.failures.insert(id, e.to_string());
            }
        }
    }
    ok
}

/// Runs `f` on a thread pool of `parallelism` workers, 0 meaning one per
/// core.
pub fn with_pool<T: Send>(parallelism: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn read_detection(out: &Path, id: u32) -> Result<CurbDetection> {
    let path = OutputLayout::detection(out, id);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Scan points labeled drivable or curb by the frame's detection.
fn detection_cloud(cfg: &PipelineConfig, seq: &Sequence, out: &Path, id: u32) -> Result<LabeledCloud> {
    let scan = io::load_scan_bin(&seq.scan_path(id), &cfg.sensor)?;
    let labels = io::read_cloud_labels(&OutputLayout::detection_labels(out, id))?;
    let (_, points, _) = scan.into_parts();
    Ok(LabeledCloud::from_parts(id, points, labels)?.filter(|_, l| l.is_mappable()))
}

/// Curb detection per frame: `detections/{id}.json` plus the per-point
/// classes in `detections/{id}.label`.
pub fn stage_detect(cfg: &PipelineConfig, seq: &Sequence, frames: &[u32], out: &Path) -> Result<StageReport> {
    let start = Instant::now();
    let mut report = StageReport::new("detect");
    let results: Vec<(u32, Result<()>)> = frames
        .par_iter()
        .map(|&id| {
            let r = (|| {
                let scan = io::load_scan_bin(&seq.scan_path(id), &cfg.sensor)?;
                let det = detect_curbs(&scan, &cfg.sensor, &cfg.ground, &cfg.curb, &cfg.gpr)?;
                let labeled = det.labeled_cloud(scan.points())?;
                io::write_cloud_labels(&OutputLayout::detection_labels(out, id), &labeled)?;
                io::write_atomic(&OutputLayout::detection(out, id), serde_json::to_string_pretty(&det)?.as_bytes())
            })();
            (id, r)
        })
        .collect();
    collect_outcomes(&mut report, results);
    Ok(report.finish(start))
}

/// Accumulates the detections of `frames`, in frame order, at the
/// supplied poses into `map.ply`.
pub fn stage_map(cfg: &PipelineConfig, seq: &Sequence, frames: &[u32], out: &Path) -> Result<StageReport> {
    let start = Instant::now();
    let mut report = StageReport::new("map");
    let results: Vec<(u32, Result<LabeledCloud>)> =
        frames.par_iter().map(|&id| (id, detection_cloud(cfg, seq, out, id))).collect();
    let clouds = collect_outcomes(&mut report, results);
    if clouds.is_empty() {
        return Err(Error::Precondition("no frame detections to build a map from".into()));
    }
    let mut builder = MapBuilder::new(cfg.mapping.voxel_size)?;
    for (id, cloud) in &clouds {
        builder.add_frame(cloud, seq.pose(*id));
    }
    save_map(&builder.finish(), &out.join(OutputLayout::MAP))?;
    Ok(report.finish(start))
}

fn localize_frame(cfg: &PipelineConfig, seq: &Sequence, out: &Path, map: &SemanticMap, id: u32) -> Result<LocalizationRecord> {
    let initial = *seq.pose(id);
    if !cfg.mapping.localize {
        return Ok(LocalizationRecord {
            frame_id: id,
            pose: initial,
            refined: false,
            rms_residual: 0.0,
            iterations: 0,
            converged: true,
            inlier_fraction: 0.0,
        });
    }
    let cloud = detection_cloud(cfg, seq, out, id)?;
    let r = register_scan(&cloud, map, &initial, &cfg.mapping.registration)?;
    Ok(LocalizationRecord {
        frame_id: id,
        pose: r.pose,
        refined: true,
        rms_residual: r.rms_residual,
        iterations: r.iterations_used,
        converged: r.converged,
        inlier_fraction: r.inlier_fraction,
    })
}

/// Registers each frame's detection against the map, seeded with the
/// supplied pose, and records the result in `localization.jsonl`.
pub fn stage_localize(cfg: &PipelineConfig, seq: &Sequence, frames: &[u32], out: &Path) -> Result<StageReport> {
    let start = Instant::now();
    let mut report = StageReport::new("localize");
    let map = load_map(&out.join(OutputLayout::MAP))?;
    let results: Vec<_> = frames.par_iter().map(|&id| (id, localize_frame(cfg, seq, out, &map, id))).collect();
    let records: Vec<LocalizationRecord> = collect_outcomes(&mut report, results).into_iter().map(|(_, r)| r).collect();
    let path = out.join(OutputLayout::LOCALIZATION);
    let replaced: BTreeSet<u32> = frames.iter().copied().collect();
    write_jsonl(&path, &merge_records(read_jsonl(&path)?, records, &replaced, |r: &LocalizationRecord| r.frame_id))?;
    Ok(report.finish(start))
}

pub fn read_localization(out: &Path) -> Result<BTreeMap<u32, LocalizationRecord>> {
    let records: Vec<LocalizationRecord> = read_jsonl(&out.join(OutputLayout::LOCALIZATION))?;
    Ok(records.into_iter().map(|r| (r.frame_id, r)).collect())
}

fn artifact_files(labels: &Path, id: u32) -> [PathBuf; 3] {
    let p = LabelPaths::new(labels, id);
    [p.mask, p.curbs, LabelPaths::curb_labels(labels, id)]
}

/// Removes a frame's label artifacts from the live and quarantine trees.
fn clear_frame(labels: &Path, id: u32) -> Result<()> {
    for root in [labels.to_path_buf(), labels.join(QUARANTINE_DIR)] {
        for f in artifact_files(&root, id) {
            if f.exists() {
                std::fs::remove_file(&f).map_err(|e| Error::io(&f, e))?;
            }
        }
    }
    Ok(())
}

enum LabelOutcome {
    Labeled,
    Skipped(String),
}

fn label_frame(
    cfg: &PipelineConfig,
    seq: &Sequence,
    map: &SemanticMap,
    loc: Option<&LocalizationRecord>,
    labels: &Path,
    id: u32,
) -> Result<LabelOutcome> {
    clear_frame(labels, id)?;
    let Some(loc) = loc else {
        return Err(Error::Precondition(format!("frame {id} has no localization")));
    };
    match generate_frame_labels(id, &loc.pose, map, &seq.intr, &seq.extr, &cfg.projection)? {
        FrameLabels::Labeled(art) => {
            write_frame_labels(&art, labels)?;
            let scan = io::load_scan_bin(&seq.scan_path(id), &cfg.sensor)?;
            export_curb_labels(
                &scan,
                &art.curbs.positions(),
                cfg.projection.curb_tolerance,
                &LabelPaths::curb_labels(labels, id),
            )?;
            Ok(LabelOutcome::Labeled)
        }
        FrameLabels::Skipped(s) => Ok(LabelOutcome::Skipped(s.reason)),
    }
}

/// Map-based masks, curb point sets and per-point curb labels below
/// `labels/`; frames without a usable hull go to `labels/skipped.jsonl`.
/// Earlier artifacts of the processed frames are replaced.
pub fn stage_label(cfg: &PipelineConfig, seq: &Sequence, frames: &[u32], out: &Path) -> Result<StageReport> {
    let start = Instant::now();
    let mut report = StageReport::new("label");
    let map = load_map(&out.join(OutputLayout::MAP))?;
    let locs = read_localization(out)?;
    let labels = out.join(OutputLayout::LABELS);
    let results: Vec<_> = frames
        .par_iter()
        .map(|&id| (id, label_frame(cfg, seq, &map, locs.get(&id), &labels, id)))
        .collect();
    let mut skips = Vec::new();
    for (id, outcome) in collect_outcomes(&mut report, results) {
        if let LabelOutcome::Skipped(reason) = outcome {
            report.skipped.insert(id, reason.clone());
            skips.push(SkipRecord { frame_id: id, reason });
        }
    }
    let path = labels.join(LabelPaths::SKIPPED);
    let replaced: BTreeSet<u32> = frames.iter().copied().collect();
    write_jsonl(&path, &merge_records(read_jsonl(&path)?, skips, &replaced, |r: &SkipRecord| r.frame_id))?;
    Ok(report.finish(start))
}

/// Where a frame's label artifacts currently are.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArtifactLocation {
    Live,
    Quarantine,
}

pub fn artifact_location(labels: &Path, id: u32) -> Option<ArtifactLocation> {
    let has = |root: &Path| artifact_files(root, id).iter().any(|f| f.exists());
    if has(labels) {
        Some(ArtifactLocation::Live)
    } else if has(&labels.join(QUARANTINE_DIR)) {
        Some(ArtifactLocation::Quarantine)
    } else {
        None
    }
}

/// Artifact paths of a frame relative to `out`.
pub fn artifact_paths(out: &Path, id: u32) -> Vec<String> {
    let labels = out.join(OutputLayout::LABELS);
    let root = match artifact_location(&labels, id) {
        Some(ArtifactLocation::Live) => labels,
        Some(ArtifactLocation::Quarantine) => labels.join(QUARANTINE_DIR),
        None => return Vec::new(),
    };
    artifact_files(&root, id)
        .iter()
        .filter(|f| f.exists())
        .filter_map(|f| f.strip_prefix(out).ok().map(|p| p.to_string_lossy().into_owned()))
        .collect()
}

fn build_sample(cfg: &PipelineConfig, seq: &Sequence, out: &Path, id: u32) -> Result<ReviewSample> {
    let labels = out.join(OutputLayout::LABELS);
    let root = match artifact_location(&labels, id) {
        Some(ArtifactLocation::Quarantine) => labels.join(QUARANTINE_DIR),
        _ => labels,
    };
    let curbs = io::read_labeled_point_set(&LabelPaths::new(&root, id).curbs)?;
    let scan = io::load_scan_bin(&seq.scan_path(id), &cfg.sensor)?;
    let residual = read_detection(out, id)?.residual_rms;
    let image_path = seq.image_path(id);
    let rgb = if image_path.exists() {
        image::open(&image_path)?.to_rgb8()
    } else {
        RgbImage::new(seq.intr.width, seq.intr.height)
    };
    ReviewSample::build(id, &rgb, &scan, &curbs, residual, (&seq.intr, &seq.extr), &cfg.review.images)
}

/// Reviews the labeled frames among `frames`, appends the verdicts to
/// `review/verdicts.jsonl` and moves discarded frames to quarantine. A
/// frame that cannot be reviewed is discarded with an error verdict.
pub fn stage_review(
    cfg: &PipelineConfig,
    seq: &Sequence,
    frames: &[u32],
    out: &Path,
) -> Result<(StageReport, RetainedManifest)> {
    let start = Instant::now();
    let mut report = StageReport::new("review");
    cfg.review.validate()?;
    let labels = out.join(OutputLayout::LABELS);
    let todo: Vec<u32> = frames.iter().copied().filter(|&id| artifact_location(&labels, id).is_some()).collect();
    let review_pool = rayon::ThreadPoolBuilder::new()
        .num_threads(if cfg.review.use_remote { cfg.review.max_in_flight } else { 1 })
        .build()
        .map_err(|e| Error::Config(format!("review thread pool: {e}")))?;
    let mut verdicts = Vec::with_capacity(todo.len());
    for batch in todo.chunks(REVIEW_BATCH) {
        let samples: Vec<(u32, Result<ReviewSample>)> =
            batch.par_iter().map(|&id| (id, build_sample(cfg, seq, out, id))).collect();
        let reviewed: Vec<(u32, Result<ReviewVerdict>)> = if cfg.review.use_remote {
            review_pool.install(|| {
                samples
                    .into_par_iter()
                    .map(|(id, s)| (id, s.and_then(|s| review_sample(&s, &cfg.review))))
                    .collect()
            })
        } else {
            samples
                .into_iter()
                .map(|(id, s)| (id, s.and_then(|s| review_sample(&s, &cfg.review))))
                .collect()
        };
        for (id, v) in reviewed {
            match v {
                Ok(v) => {
                    report.processed.push(id);
                    verdicts.push(v);
                }
                Err(e) => {
                    report.failures.insert(id, e.to_string());
                    verdicts.push(ReviewVerdict::failed(id, format!("review failed: {e}")));
                }
            }
        }
    }
    let path = out.join(OutputLayout::VERDICTS);
    let old = if path.exists() { read_verdicts(&path)? } else { Vec::new() };
    let replaced: BTreeSet<u32> = todo.iter().copied().collect();
    let all = merge_records(old, verdicts, &replaced, |v: &ReviewVerdict| v.frame_id);
    write_verdicts(&path, &all)?;
    let manifest = filter_dataset(&all, &labels)?;
    Ok((report.finish(start), manifest))
}

pub fn read_all_verdicts(out: &Path) -> Result<BTreeMap<u32, ReviewVerdict>> {
    let path = out.join(OutputLayout::VERDICTS);
    let vs = if path.exists() { read_verdicts(&path)? } else { Vec::new() };
    Ok(vs.into_iter().map(|v| (v.frame_id, v)).collect())
}

/// Reports written by the eval stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub masks: Option<DatasetReport>,
    pub curbs: Option<DatasetReport>,
}

fn write_report(out: &Path, name: &str, report: &DatasetReport) -> Result<()> {
    let dir = out.join(OutputLayout::EVAL);
    io::write_atomic(&dir.join(format!("{name}.json")), serde_json::to_string_pretty(report)?.as_bytes())?;
    io::write_atomic(&dir.join(format!("{name}.txt")), format_report_table(report).as_bytes())
}

fn live_frames(dir: &Path, ext: &str) -> Result<Vec<u32>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut ids = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(ext) {
            ids.extend(io::frame_id_from_path(&path));
        }
    }
    ids.sort_unstable();
    Ok(ids)
}

/// Scores the retained masks against `truth_masks/` and, when the
/// sequence carries its scene description, the retained curb point sets
/// against the analytic curbs. Every retained frame is scored.
pub fn stage_eval(cfg: &PipelineConfig, seq: &Sequence, out: &Path) -> Result<EvalSummary> {
    let labels = out.join(OutputLayout::LABELS);
    let masks_dir = labels.join(LabelPaths::MASKS);
    let truth_masks = seq.dir.join(SequenceLayout::TRUTH_MASKS);
    let masks = if truth_masks.is_dir() && !live_frames(&masks_dir, "png")?.is_empty() {
        let r = evaluate_dataset(&masks_dir, &truth_masks, EvalMode::Masks)?;
        write_report(out, "masks", &r)?;
        Some(r)
    } else {
        None
    };
    let scene_path = seq.dir.join(SequenceLayout::SCENE);
    let curbs_dir = labels.join(LabelPaths::CURBS);
    let curb_frames = live_frames(&curbs_dir, "bin")?;
    let curbs = if scene_path.exists() && !curb_frames.is_empty() {
        let text = std::fs::read_to_string(&scene_path).map_err(|e| Error::io(&scene_path, e))?;
        let spec: SceneSpec = serde_json::from_str(&text)?;
        let truth = generate_scene(&spec, &cfg.sensor)?;
        let stations = truth.observed_stations(cfg.eval.truth_near, cfg.eval.truth_reach);
        let truth_dir = out.join(OutputLayout::TRUTH_CURBS);
        curb_frames.par_iter().try_for_each(|&id| {
            let mut t = truth.curbs_in_region(seq.pose(id), cfg.projection.query_radius, stations);
            t.set_frame_id(id);
            io::write_point_set(&truth_dir.join(format!("{id:06}.bin")), &t)
        })?;
        let r = evaluate_dataset(&curbs_dir, &truth_dir, EvalMode::Curbs { tolerance: cfg.eval.curb_tolerance })?;
        write_report(out, "curbs", &r)?;
        Some(r)
    } else {
        None
    };
    if masks.is_none() && curbs.is_none() {
        return Err(Error::Precondition("nothing to evaluate: no retained labels with matching truth".into()));
    }
    Ok(EvalSummary { masks, curbs })
}

/// Generates the configured synthetic scene and writes it as a sequence
/// to `dir`.
pub fn stage_synth(cfg: &PipelineConfig, dir: &Path) -> Result<()> {
    cfg.synth.validate()?;
    let truth = generate_scene(&cfg.synth, &cfg.sensor)?;
    write_sequence(&truth, &cfg.sensor, &CameraIntrinsics::kitti_like(), &Extrinsics::kitti_like(), dir)
}
