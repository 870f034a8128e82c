//! Exact probability propagation in tree-structured belief networks that also
//! tracks the variance of every inferred probability, where the variance comes
//! from uncertainty about the stored conditional probabilities.

pub mod bounds;
pub mod cli;
pub mod error;
pub mod generate;
pub mod model;
pub mod oracle;
pub mod propagation;

pub use error::{Error, Result};
pub use model::{
    moments_of, validate_network, MomentSet, NetworkSpec, NodeId, NodeSpec, UncertainDistribution,
    ValidatedNetwork,
};
pub use oracle::{
    enumerate_uncertainty, exact_inference, mc_uncertainty, OracleMode, OracleReport,
};
pub use propagation::{posterior, propagate, query_node, Evidence, NodePosterior, PosteriorReport};
