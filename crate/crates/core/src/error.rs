use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("no interactions")]
    NoInteractions,

    #[error("filter removed all users")]
    EmptyAfterFilter,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("item {item} has conflicting suppliers {first} and {second}")]
    ConflictingSupplier {
        item: String,
        first: String,
        second: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("distribution dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("user {0} has an empty profile")]
    EmptyProfile(String),

    #[error("item list is empty")]
    EmptyList,

    #[error("unknown user {0}")]
    UnknownUser(String),

    #[error("item {0} has no group assignment")]
    UnassignedItem(String),

    #[error("item {0} has no supplier")]
    MissingSupplier(String),

    #[error("at least {required} users are required, got {actual}")]
    TooFewUsers { required: usize, actual: usize },

    #[error("no evaluable users")]
    NoEvaluableUsers,

    #[error("catalog must contain at least two items")]
    CatalogTooSmall,

    #[error("infeasible flow network: {0}")]
    Infeasible(String),
}
