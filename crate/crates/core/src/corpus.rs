//! The bundled example pipelines.

use crate::ir::{parse_pipeline, Pipeline};

pub const GAUSSIAN_SOURCE: &str = include_str!("../pipelines/gaussian.pipe");
pub const UNSHARP_SOURCE: &str = include_str!("../pipelines/unsharp.pipe");

/// Separable Gaussian blur, 256x256.
pub fn gaussian() -> Pipeline {
    parse_pipeline(GAUSSIAN_SOURCE).expect("bundled gaussian.pipe parses")
}

/// Unsharp masking, 2560x1600x3.
pub fn unsharp() -> Pipeline {
    parse_pipeline(UNSHARP_SOURCE).expect("bundled unsharp.pipe parses")
}

/// Looks up a bundled pipeline source by name (`gaussian` or `unsharp`).
pub fn source(name: &str) -> Option<&'static str> {
    match name {
        "gaussian" => Some(GAUSSIAN_SOURCE),
        "unsharp" => Some(UNSHARP_SOURCE),
        _ => None,
    }
}
