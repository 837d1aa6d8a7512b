//! Image-plane drivable-area masks and per-point curb labels.

pub mod hull;
pub mod project;
pub mod raster;

pub use hull::{concave_hull, concave_hull_points, convex_hull, DEFAULT_HULL_K};
pub use project::{project_points, project_points_with_margin, PixelPoint};
pub use raster::{point_in_polygon, rasterize_mask, LabelMask};
pub mod generate;

pub use generate::{
    curb_label_ids, export_curb_labels, generate_frame_labels, mask_from_drivable, write_frame_labels, FrameLabels,
    LabelArtifacts, LabelPaths, ProjectionParams, SkipRecord, CURB_CLASS_ID,
};
