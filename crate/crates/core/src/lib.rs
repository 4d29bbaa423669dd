//! Disagreement detection on comment-reply pairs with an entity-conditioned
//! graph attention network.
//!
//! Pipeline: [`corpus`] loads pairs and the entity list, [`featurize`] turns
//! each (pair, entity) co-occurrence into a feature row, [`graph`] builds
//! the parent → child interaction graph, [`gat`] holds the model, [`train`]
//! fits it and [`eval`] reports metrics, ablations and attention analyses.

pub mod checks;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod featurize;
pub mod gat;
pub mod graph;
pub mod nn;
mod par;
pub mod pipeline;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};
pub use par::is_parallel;
