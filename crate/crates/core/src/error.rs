use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown benchmark preset `{0}`")]
    UnknownPreset(String),

    #[error("refinement level {level} exceeds the memory budget for {dim}D meshes (max {max})")]
    LevelBudget { level: usize, dim: usize, max: usize },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("interface {interface}: mortar and trace grids are not coplanar")]
    NonCoplanar { interface: usize },

    #[error("interface {interface}: 3D mortar and trace grids do not match and polygon clipping is disabled")]
    NonMatching3d { interface: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("inconsistent boundary data: {0}")]
    InconsistentTags(String),

    #[error("structurally singular system: empty {block} row {row}")]
    StructurallySingular { block: &'static str, row: usize },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("residual check failed: {residual:.3e} > {bound:.3e}")]
    Residual { residual: f64, bound: f64 },

    #[error("problem too large for {what}: {size} > {limit}")]
    SizeGuard { what: &'static str, size: usize, limit: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
