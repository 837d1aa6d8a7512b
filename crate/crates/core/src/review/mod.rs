//! Review of generated labels: camera overlay, altitude difference and
//! top-down renderings, a remote or heuristic retain/discard verdict, and
//! quarantine of discarded frames.

mod filter;
mod images;
mod remote;
mod verdict;

pub use filter::{filter_dataset, RetainedManifest, ARTIFACT_DIRS, QUARANTINE_DIR, RETAINED_MANIFEST};
pub use images::{
    adi_meters, compute_adi, overlay_curbs, render_bev, ReviewImageParams, ADI_FULL_SCALE, BEV_BACKGROUND, BEV_CURB,
    CURB_MARKER,
};
pub use remote::{
    decode_response, encode_request, review_remote, review_sample, review_samples, RemoteConfig, ReviewConfig,
    DEFAULT_INSTRUCTIONS,
};
pub use verdict::{
    read_verdicts, review_heuristic, write_verdicts, Decision, HeuristicThresholds, ReviewMetadata, ReviewSample,
    ReviewVerdict, VerdictSource, HEURISTIC_CHECKS,
};
