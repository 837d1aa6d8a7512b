use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::verdict::ReviewVerdict;
use crate::error::{Error, Result};
use crate::labels::LabelPaths;

/// Subdirectory of a label directory that receives discarded frames.
pub const QUARANTINE_DIR: &str = "quarantine";
pub const RETAINED_MANIFEST: &str = "retained.json";

/// Per-frame artifact subdirectories moved as a unit.
pub const ARTIFACT_DIRS: [&str; 3] = [LabelPaths::MASKS, LabelPaths::CURBS, LabelPaths::CURB_LABELS];

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetainedManifest {
    pub retained: Vec<u32>,
    pub quarantined: Vec<u32>,
}

/// Artifact files of every frame found in the live or quarantine tree,
/// as paths relative to either root.
fn generated_frames(dir: &Path) -> Result<BTreeMap<u32, Vec<PathBuf>>> {
    let mut frames: BTreeMap<u32, Vec<PathBuf>> = BTreeMap::new();
    for root in [dir.to_path_buf(), dir.join(QUARANTINE_DIR)] {
        for sub in ARTIFACT_DIRS {
            let d = root.join(sub);
            if !d.is_dir() {
                continue;
            }
            for entry in std::fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
                let path = entry.map_err(|e| Error::io(&d, e))?.path();
                if !path.is_file() {
                    continue;
                }
                let Some(id) = crate::io::frame_id_from_path(&path) else {
                    continue;
                };
                let rel = Path::new(sub).join(path.file_name().expect("listed file has a name"));
                let files = frames.entry(id).or_default();
                if !files.contains(&rel) {
                    files.push(rel);
                }
            }
        }
    }
    Ok(frames)
}

fn move_file(from: &Path, to: &Path) -> Result<()> {
    if let Some(parent) = to.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::rename(from, to).map_err(|e| Error::io(from, e))
}

/// Moves the artifacts of discarded frames below [`QUARANTINE_DIR`] and
/// those of retained frames back to the live tree, then writes
/// [`RETAINED_MANIFEST`]. Nothing is deleted. Every frame with artifacts
/// needs a verdict.
pub fn filter_dataset(verdicts: &[ReviewVerdict], dir: &Path) -> Result<RetainedManifest> {
    let mut by_frame: BTreeMap<u32, &ReviewVerdict> = BTreeMap::new();
    for v in verdicts {
        v.validate()?;
        if let Some(prev) = by_frame.insert(v.frame_id, v) {
            if prev.decision != v.decision {
                return Err(Error::InvalidArgument(format!("conflicting verdicts for frame {}", v.frame_id)));
            }
        }
    }
    let frames = generated_frames(dir)?;
    let missing: Vec<u32> = frames.keys().filter(|id| !by_frame.contains_key(id)).copied().collect();
    if !missing.is_empty() {
        return Err(Error::MissingVerdict(missing));
    }
    for id in by_frame.keys().filter(|id| !frames.contains_key(id)) {
        log::warn!("verdict for frame {id} has no artifacts");
    }
    let quarantine = dir.join(QUARANTINE_DIR);
    let mut manifest = RetainedManifest::default();
    for (id, files) in &frames {
        let keep = by_frame[id].retained();
        let (from_root, to_root) = if keep { (&quarantine, &dir.to_path_buf()) } else { (&dir.to_path_buf(), &quarantine) };
        for rel in files {
            let src = from_root.join(rel);
            if src.exists() {
                move_file(&src, &to_root.join(rel))?;
            }
        }
        if keep {
            manifest.retained.push(*id);
        } else {
            manifest.quarantined.push(*id);
        }
    }
    crate::io::write_atomic(&dir.join(RETAINED_MANIFEST), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(manifest)
}
