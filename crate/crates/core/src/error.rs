use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vertex {0} out of range (n = {1})")]
    VertexOutOfRange(usize, usize),
    #[error("expected a tree, found a cycle or disconnected component")]
    NotATree,
    #[error("{op}: size guard exceeded (n = {n}, limit = {limit})")]
    SizeGuard { op: &'static str, n: usize, limit: usize },
    #[error("invalid offspring law: {0}")]
    BadLaw(String),
    #[error("size-biased kernel undefined: A({0},{1}) = 0")]
    ZeroMeanEntry(usize, usize),
    #[error("mean matrix is not positive regular")]
    NotPositiveRegular,
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("bound violated: {what} = {got} but requires >= {bound}")]
    BoundViolated { what: &'static str, got: f64, bound: f64 },
    #[error("graph file: {0}")]
    BadGraphFile(String),
    #[error("experiment config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
