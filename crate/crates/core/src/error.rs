use thiserror::Error;

/// Errors raised by the graph, flow, packing and protocol layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("vertex {vertex} is not in a graph with {n} vertices")]
    VertexOutOfRange { vertex: usize, n: usize },

    #[error("{0} and {1} are disconnected")]
    Unreachable(usize, usize),

    #[error("search exceeded cutoff of {cutoff} rounds")]
    CutoffExceeded { cutoff: usize },

    /// The level-vector extraction needs an instance that cannot carry `needed` units.
    #[error("instance is routable: flow {flow} reaches the requested {needed} units")]
    Routable { flow: u64, needed: u64 },

    #[error("invalid vertex sets: {0}")]
    InvalidSets(String),

    #[error("demand is not {bound}-bounded (max row/column sum {observed})")]
    NotBounded { bound: f64, observed: f64 },

    #[error("infeasible: {reason} (achieved {achieved}, required {required})")]
    Infeasible {
        reason: String,
        achieved: f64,
        required: f64,
    },

    #[error("terminal {terminal} has only {found} short paths to the anchor, needs {needed}")]
    DeficientTerminal {
        terminal: usize,
        found: usize,
        needed: usize,
    },

    #[error("linear program failed: {0}")]
    Solver(String),

    #[error("contract violation: {0}")]
    Contract(String),

    /// A party in the two-party simulation needed a bit it could not know.
    #[error("two-party simulation needs unknown bit x^{round}_({from},{to})")]
    UnknownBit {
        round: usize,
        from: usize,
        to: usize,
    },

    #[error("retry budget of {budget} exhausted: {detail}")]
    RetriesExhausted { budget: usize, detail: String },

    #[error("protocol did not finish within {max_rounds} rounds")]
    MaxRounds { max_rounds: usize },

    #[error("input rejected: {0}")]
    InvalidInput(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
