//! Built-in execution engine: CSV sources to canonical N-Triples, following
//! a bushy tree with eager duplicate removal.

pub mod base36;
pub mod exec;
pub mod extsort;
pub mod triples;

use std::path::PathBuf;

use crate::partition::GroupId;

pub use base36::{decode_base36, encode_base36, ResourceDictionary};
pub use exec::{
    canonicalize, execute_tree, materialize_group, union_triples, Codec, ExecOptions, ExecutionReport,
    LeafContext, LeafReport, LeafStatus, TripleSet, UnionReport,
};

#[derive(Debug, thiserror::Error)]
pub enum MaterializeError {
    #[error("unknown source {0}")]
    UnknownSource(String),
    #[error("tree refers to unknown group {0}")]
    UnknownGroup(GroupId),
    #[error("{path}: {message}")]
    Source { path: PathBuf, message: String },
    #[error("source {source_id}: column {column:?} not in header")]
    MissingColumn { source_id: String, column: String },
    #[error("leaf timed out")]
    Timeout,
    #[error("plan soundness violated: NDR inputs both contain {triple}")]
    Soundness { triple: String },
    #[error("corrupt intermediate data: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
