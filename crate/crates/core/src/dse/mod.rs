//! Design repository and weighted-constraint queries: hard filtering,
//! min-max normalized scoring, deterministic ranking and Pareto analysis.

pub mod query;
pub mod rank;
pub mod repo;
pub mod seed;

use thiserror::Error;

pub use query::{
    parse_dsl, query_json_schema, Bound, Comparator, ConstraintQuery, Direction, HardConstraint, Metric, Scalar,
    SoftObjective,
};
pub use rank::{
    filter_hard, nearest_miss, pareto_front, parse_objectives, rank, score, NearestMiss, NormStats, Ranked,
    RankedSelection,
};
pub use repo::{
    from_csv, from_jsonl, load_repository, save_repository, seed_paper_table, to_csv, to_jsonl, Repository,
    SharedRepository, CSV_COLUMNS,
};
pub use seed::{paper_rows, PaperRow};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DseError {
    #[error("query{}: {message}", line.map(|l| format!(" line {l}")).unwrap_or_default())]
    Query { line: Option<usize>, message: String },
    #[error("repository is empty")]
    EmptyRepository,
    #[error("no feasible design; nearest miss is {}", .0.design_key)]
    NoFeasible(Box<NearestMiss>),
    #[error("duplicate design key {key}{}", row.map(|r| format!(" at row {r}")).unwrap_or_default())]
    DuplicateKey { key: String, row: Option<usize> },
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
    #[error("{0}")]
    Format(String),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
}
