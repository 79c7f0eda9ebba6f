use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed graph: {0}")]
    MalformedGraph(String),

    #[error("vertex {vertex} out of range for a graph on {n} vertices")]
    VertexOutOfRange { vertex: usize, n: usize },

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("intervention in context {context} is not valid: post-intervention graph has a cycle")]
    InvalidIntervention { context: usize },

    #[error("corrupted state: {0}")]
    CorruptedState(String),

    #[error("graphs have no oppositely oriented edge")]
    NoEdge,

    #[error("pairs are not I-Markov equivalent")]
    NotEquivalent,

    #[error("capacity exceeded: {what} (limit {limit}, reached {reached})")]
    Capacity {
        what: &'static str,
        limit: usize,
        reached: usize,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid hyperparameter: {0}")]
    Hyperparameter(String),

    #[error("invalid operator scope: {0}")]
    InvalidScope(String),

    #[error("data error: {0}")]
    Data(String),
}
