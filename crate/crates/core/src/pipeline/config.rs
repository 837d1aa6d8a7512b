use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::curb::{CurbParams, GprParams};
use crate::error::{Error, Result};
use crate::geometry::LidarGeometry;
use crate::ground::GroundParams;
use crate::labels::ProjectionParams;
use crate::mapping::RegistrationConfig;
use crate::review::ReviewConfig;
use crate::synth::SceneSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Sequence directory: `scans/`, `poses.txt`, `calib.txt`, and
    /// optionally `images/`, `truth_masks/` and `truth/`.
    pub sequence: PathBuf,
    pub output: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            sequence: PathBuf::from("sequence"),
            output: PathBuf::from("output"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Worker threads for the per-frame stages; 0 uses every core.
    pub parallelism: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MappingConfig {
    pub voxel_size: f64,
    /// Refine the supplied poses against the map before labeling.
    pub localize: bool,
    pub registration: RegistrationConfig,
}

impl Default for MappingConfig {
    fn default() -> Self {
        Self {
            voxel_size: 0.2,
            localize: true,
            registration: RegistrationConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Curb matching tolerance, meters.
    pub curb_tolerance: f64,
    /// Truth curbs are taken from this far ahead of the first frame...
    pub truth_near: f64,
    /// ...to this far ahead of the last frame, meters.
    pub truth_reach: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            curb_tolerance: 0.2,
            truth_near: 3.0,
            truth_reach: 15.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub run: RunConfig,
    pub sensor: LidarGeometry,
    pub ground: GroundParams,
    pub curb: CurbParams,
    pub gpr: GprParams,
    pub mapping: MappingConfig,
    pub projection: ProjectionParams,
    pub review: ReviewConfig,
    pub eval: EvalConfig,
    pub synth: SceneSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            paths: PathsConfig::default(),
            run: RunConfig::default(),
            sensor: LidarGeometry::kitti_like(),
            ground: GroundParams::default(),
            curb: CurbParams::default(),
            gpr: GprParams::default(),
            mapping: MappingConfig::default(),
            projection: ProjectionParams::default(),
            review: ReviewConfig::default(),
            eval: EvalConfig::default(),
            synth: SceneSpec::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file. Relative paths in `[paths]` are taken relative
    /// to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.paths.sequence, &mut cfg.paths.output] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |section: &str, r: Result<()>| r.map_err(|e| Error::Config(format!("[{section}] {e}")));
        wrap("sensor", self.sensor.validate())?;
        wrap("ground", self.ground.validate())?;
        wrap("curb", self.curb.validate())?;
        wrap("gpr", self.gpr.validate())?;
        wrap("mapping", self.mapping.registration.validate())?;
        if !(self.mapping.voxel_size > 0.0 && self.mapping.voxel_size.is_finite()) {
            return Err(Error::Config(format!("[mapping] voxel_size must be positive, got {}", self.mapping.voxel_size)));
        }
        wrap("projection", self.projection.validate())?;
        wrap("review", self.review.validate())?;
        wrap("synth", self.synth.validate())?;
        let e = &self.eval;
        if !(e.curb_tolerance > 0.0 && e.truth_near >= 0.0 && e.truth_reach >= 0.0) {
            return Err(Error::Config(format!("[eval] values out of range: {e:?}")));
        }
        Ok(())
    }

    /// Hex SHA-256 of the config's canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}
