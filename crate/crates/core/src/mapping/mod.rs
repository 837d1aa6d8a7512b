//! Global semantic map: fusion of per-frame detections, scan-to-map
//! registration, region queries and PLY persistence.

mod map;
mod ply;
mod register;

pub use map::{build_map, query_region, MapBuilder, MapPoint, SemanticMap, VoxelKey};
pub use ply::{decode_map, encode_map, load_map, save_map};
pub use register::{register_scan, RegistrationConfig, RegistrationResult, WeightScheme};
