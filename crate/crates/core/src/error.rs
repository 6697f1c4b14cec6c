use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("track has {0} points, at least 2 are required")]
    EmptyTrack(usize),

    #[error("degenerate segment: endpoints coincide")]
    DegenerateSegment,

    #[error("invalid coordinate: {0}")]
    InvalidCoordinate(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("ingest error: {0}")]
    Ingest(String),

    #[error(
        "no clusters found among {waypoints} waypoints (dbscan eps={eps} m, n_min={n_min})"
    )]
    EmptyGraph {
        waypoints: usize,
        eps: f64,
        n_min: usize,
    },

    #[error("edit {index} ({edit}): {reason}")]
    Edit {
        index: usize,
        edit: String,
        reason: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training aborted: {0}")]
    Training(String),

    #[error("class balance error: {0}")]
    Balance(String),

    #[error("ordering error: {0}")]
    Ordering(String),

    #[error("injection error: {0}")]
    Injection(String),

    #[error("geojson error: {0}")]
    GeoJson(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
