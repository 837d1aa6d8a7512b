//! Curb detection on single LiDAR scans.

pub mod beam;
pub mod detect;
pub mod features;
pub mod gpr;

pub use beam::{build_beam_model, classify_left_right, estimate_road_direction, BeamModel, BeamParams, RoadDirection};
pub use detect::{detect_curbs, CurbDetection, CurbParams};
pub use features::{
    adaptive_window, extract_candidates, height_difference_pass, height_stats, height_values_pass, smoothness, split_into_rings, AdaptiveWindow,
    CurbThresholds, HeightStats, RingList, RingNeighborhood, WindowParams,
};
pub use gpr::{gpr_filter, gpr_fit, GpPosterior, GprFilterResult, GprParams};
