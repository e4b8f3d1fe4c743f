//! Attribute-level causal graphs, their grounding over tuples, summary
//! functions and structural models.

pub mod dag;
pub mod ground;
pub mod scm;
pub mod summary;

pub use dag::{canonical_dag, CausalDag, DagConfig, Edge, EdgeConfig};
pub use ground::{ground, Cell, GroundCausalGraph};
pub use scm::{Scm, ScmConfig};
pub use summary::{augment_with_aggregates, summarize, SummaryConfig, SummarySpec};
