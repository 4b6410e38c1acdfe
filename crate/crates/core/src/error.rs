use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid quaternion: norm {0} is not usable")]
    DegenerateQuaternion(f64),

    #[error(
        "grid level {level} exceeds the materialization limit {max}; \
         use hierarchical refinement (refine_top_cells) for finer grids"
    )]
    GridTooLarge { level: u32, max: u32 },

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("entry {index} is not strictly positive ({value}); {kind} requires positive weights")]
    NonPositive {
        kind: &'static str,
        index: usize,
        value: f64,
    },

    #[error("mesh is not watertight ({open_edges} open edges); signed distance is undefined")]
    NotWatertight { open_edges: usize },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("symmetry group is not closed: {0}")]
    NotAGroup(String),

    #[error("marker centre is {distance} away from the surface")]
    MarkerOffSurface { distance: f64 },

    #[error("object is not visible: the rendered silhouette is empty")]
    EmptySilhouette,

    #[error("object intersects or lies behind the camera (nearest depth {0})")]
    BehindCamera(f64),

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("mask size {got_w}x{got_h} does not match {want_w}x{want_h}")]
    MaskSize {
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },

    #[error("top pool of {pool} requested but the distribution has only {len} entries")]
    PoolTooLarge { pool: usize, len: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
