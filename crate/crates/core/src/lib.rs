//! Quantum Markov states on finite trees.
//!
//! Builds finite-volume states from localized transition expectations,
//! decomposes them into commuting block potentials, constructs a diagonal
//! algebra with its conditional expectation, and extracts the classical
//! Markov measure living on its spectrum. Every fast path has a brute-force
//! counterpart in [`oracle`].

pub mod analysis;
pub mod check;
pub mod diagonal;
pub mod matrixalg;
pub mod measure;
pub mod models;
pub mod oracle;
pub mod potential;
pub mod qms;
pub mod scenario;
pub mod subalgebra;
pub mod tree;

use thiserror::Error;

pub use matrixalg::{AlgebraError, CMatrix, Operator, SiteSpec, StateDensity, Tolerance, C64};
pub use tree::{build_tree, TreeError, TreeGraph, VertexId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error("map is not idempotent (deviation {0:.3e})")]
    NotIdempotent(f64),
    #[error("map is not unital (deviation {0:.3e})")]
    NotUnital(f64),
    #[error("span is not closed under products and adjoints (residual {0:.3e})")]
    NotClosed(f64),
    #[error("block is not a factor: {0}")]
    NotAFactor(String),
    #[error("map is not a Umegaki conditional expectation (residual {0:.3e})")]
    NotUmegaki(f64),
    #[error("map is not completely positive (Choi eigenvalue {0:.3e})")]
    NotCompletelyPositive(f64),
    #[error("no transition expectation for vertex {0}")]
    MissingTransition(VertexId),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("ergodic average did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("dimension {dim} exceeds the cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("volume {n} exceeds tree depth {depth}")]
    Volume { n: usize, depth: usize },
    #[error("negative point mass {0:.3e}")]
    NegativeMass(f64),
    #[error("malformed input: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, Error>;
