use thiserror::Error;

/// Errors produced anywhere in the discretization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty node set")]
    EmptyNodeSet,

    #[error("need at least {needed} nodes, got {got}")]
    TooFewNodes { needed: usize, got: usize },

    #[error("stencil larger than node set ({requested} > {available})")]
    StencilTooLarge { requested: usize, available: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("kernel too rough for operator (r^{exponent} with a second-order operator)")]
    KernelTooRough { exponent: u32 },

    #[error("singular stencil")]
    SingularStencil,

    #[error("ill-conditioned stencil")]
    IllConditionedStencil,

    #[error("node {index}: {source}")]
    Node {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("boundary node {index} on segment {segment} has no boundary condition")]
    MissingBoundaryCondition { index: usize, segment: i32 },

    #[error("singular matrix (pivot {pivot:e} at column {column})")]
    SingularMatrix { column: usize, pivot: f64 },

    #[error("iterative solver did not converge: relative residual {residual:e} after {iterations} iterations")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("{stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_node(index: usize, source: Error) -> Self {
        Error::Node {
            index,
            source: Box::new(source),
        }
    }

    pub(crate) fn in_stage(stage: &'static str, source: Error) -> Self {
        Error::Stage {
            stage,
            source: Box::new(source),
        }
    }

    /// True for failures of the numerics (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::SingularStencil
            | Error::IllConditionedStencil
            | Error::KernelTooRough { .. }
            | Error::SingularMatrix { .. }
            | Error::NotConverged { .. } => true,
            Error::Node { source, .. } | Error::Stage { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
