//! Round complexity laboratory for synchronous point-to-point networks.
//!
//! Computes routing and packing bounds on small graphs, runs protocols bit by
//! bit in a simulator, and checks measured rounds against the bounds.

pub mod aggregate;
pub mod bfs;
pub mod circuit;
pub mod compile;
pub mod error;
pub mod expander;
pub mod flow;
pub mod graph;
pub mod mcf;
pub mod oracles;
pub mod problems;
pub mod program;
pub mod report;
pub mod router;
pub mod schedule;
pub mod sim;
pub mod steiner;
pub mod timed;
pub mod twoparty;

pub use error::{Error, Result};
pub use graph::{contract_sides, Graph};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/model.md")]
    struct Model;
    #[doc = include_str!("../../../book/src/routing.md")]
    struct Routing;
    #[doc = include_str!("../../../book/src/steiner.md")]
    struct Steiner;
    #[doc = include_str!("../../../book/src/circuits.md")]
    struct Circuits;
    #[doc = include_str!("../../../book/src/graph-problems.md")]
    struct GraphProblems;
}
