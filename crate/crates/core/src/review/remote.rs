//! JSON-over-HTTP client for an external review service.

use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use image::ImageFormat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::verdict::{review_heuristic, Decision, HeuristicThresholds, ReviewSample, ReviewVerdict, VerdictSource};
use super::images::ReviewImageParams;
use crate::error::{Error, Result};

pub const DEFAULT_INSTRUCTIONS: &str = "You review automatically generated road labels. Image 1 is the camera \
image with projected curb points in magenta, image 2 is an altitude difference image (brighter means a larger \
height step within the cell), image 3 is a top-down view of the LiDAR scan with curb points in orange. Retain the \
sample if the curb annotations follow the visible road edges on both sides; otherwise discard it. Answer with JSON \
{\"decision\": \"retain\" | \"discard\", \"confidence\": number in [0, 1], \"reason\": short text}.";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub timeout_secs: f64,
    /// Environment variable holding a bearer token; unset means no
    /// authorization header.
    pub token_env: String,
    pub instructions: String,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8080/review".to_string(),
            timeout_secs: 30.0,
            token_env: "MADL_REVIEW_TOKEN".to_string(),
            instructions: DEFAULT_INSTRUCTIONS.to_string(),
        }
    }
}

#[derive(Serialize)]
struct ReviewRequest<'a> {
    frame_id: u32,
    instructions: &'a str,
    images: [String; 3],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReviewResponse {
    decision: String,
    confidence: f64,
    reason: String,
}

fn png_base64<P, C>(img: &image::ImageBuffer<P, C>) -> Result<String>
where
    P: image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    let mut bytes = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut bytes), ImageFormat::Png)?;
    Ok(STANDARD.encode(bytes))
}

fn remote_err(frame_id: u32, msg: impl std::fmt::Display) -> Error {
    Error::RemoteReview(format!("frame {frame_id}: {msg}"))
}

/// Request body sent for `sample`: frame id, instructions and the three
/// images as base64 PNG in the order overlay, ADI, BEV.
pub fn encode_request(sample: &ReviewSample, instructions: &str) -> Result<String> {
    let req = ReviewRequest {
        frame_id: sample.frame_id,
        instructions,
        images: [png_base64(&sample.rgb_overlay)?, png_base64(&sample.adi)?, png_base64(&sample.bev)?],
    };
    Ok(serde_json::to_string(&req)?)
}

/// Maps a response body to a verdict, rejecting anything outside the
/// protocol.
pub fn decode_response(frame_id: u32, body: &str) -> Result<ReviewVerdict> {
    let r: ReviewResponse =
        serde_json::from_str(body).map_err(|e| remote_err(frame_id, format!("malformed response: {e}")))?;
    let decision = match r.decision.as_str() {
        "retain" => Decision::Retain,
        "discard" => Decision::Discard,
        other => return Err(remote_err(frame_id, format!("malformed response: decision {other:?}"))),
    };
    if !(0.0..=1.0).contains(&r.confidence) {
        return Err(remote_err(frame_id, format!("malformed response: confidence {}", r.confidence)));
    }
    Ok(ReviewVerdict {
        frame_id,
        decision,
        confidence: r.confidence,
        reason: r.reason,
        source: VerdictSource::Remote,
    })
}

/// Sends one sample to the review service. The whole exchange, connect
/// included, is bounded by `timeout_secs`.
pub fn review_remote(sample: &ReviewSample, cfg: &RemoteConfig) -> Result<ReviewVerdict> {
    let id = sample.frame_id;
    if !(cfg.timeout_secs > 0.0 && cfg.timeout_secs.is_finite()) {
        return Err(Error::InvalidArgument(format!("review timeout must be positive, got {}", cfg.timeout_secs)));
    }
    let body = encode_request(sample, &cfg.instructions)?;
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_secs)))
        .http_status_as_error(false)
        .build()
        .into();
    let mut req = agent.post(&cfg.endpoint).header("Content-Type", "application/json");
    if let Ok(token) = std::env::var(&cfg.token_env) {
        if !token.is_empty() {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
    }
    let mut resp = req.send(body.as_str()).map_err(|e| remote_err(id, e))?;
    let status = resp.status().as_u16();
    if !(200..300).contains(&status) {
        return Err(remote_err(id, format!("http status {status}")));
    }
    let text = resp.body_mut().read_to_string().map_err(|e| remote_err(id, e))?;
    decode_response(id, &text)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReviewConfig {
    /// Ask the remote service; otherwise only the heuristic is used.
    pub use_remote: bool,
    /// On a remote failure, use the heuristic verdict instead of failing.
    pub fallback_to_heuristic: bool,
    /// Most remote requests in flight at once.
    pub max_in_flight: usize,
    pub thresholds: HeuristicThresholds,
    pub remote: RemoteConfig,
    pub images: ReviewImageParams,
}

impl Default for ReviewConfig {
    fn default() -> Self {
        Self {
            use_remote: false,
            fallback_to_heuristic: true,
            max_in_flight: 4,
            thresholds: HeuristicThresholds::default(),
            remote: RemoteConfig::default(),
            images: ReviewImageParams::default(),
        }
    }
}

impl ReviewConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_in_flight == 0 {
            return Err(Error::InvalidArgument("max_in_flight must be at least 1".into()));
        }
        self.thresholds.validate()?;
        self.images.validate()
    }
}

/// Verdict for one sample according to `cfg`.
pub fn review_sample(sample: &ReviewSample, cfg: &ReviewConfig) -> Result<ReviewVerdict> {
    let heuristic = || review_heuristic(sample.frame_id, &sample.metadata, &cfg.thresholds);
    if !cfg.use_remote {
        return Ok(heuristic());
    }
    match review_remote(sample, &cfg.remote) {
        Ok(v) => Ok(v),
        Err(e) if cfg.fallback_to_heuristic => {
            log::warn!("{e}; using the heuristic verdict");
            Ok(heuristic())
        }
        Err(e) => Err(e),
    }
}

/// Reviews all samples, at most `max_in_flight` at a time. Verdicts come
/// back in sample order.
pub fn review_samples(samples: &[ReviewSample], cfg: &ReviewConfig) -> Result<Vec<ReviewVerdict>> {
    cfg.validate()?;
    if !cfg.use_remote {
        return samples.iter().map(|s| review_sample(s, cfg)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.max_in_flight)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("review thread pool: {e}")))?;
    pool.install(|| samples.par_iter().map(|s| review_sample(s, cfg)).collect())
}
