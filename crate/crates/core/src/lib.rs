pub mod curb;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod ground;
pub mod io;
pub mod labels;
pub mod mapping;
pub mod pipeline;
pub mod review;
pub mod spatial;
pub mod synth;

pub use error::{Error, Result};
