pub mod corpus;
pub mod encoders;
pub(crate) mod fsutil;
pub mod neuralcore;
pub mod eval;
pub mod msense;
pub mod synthetic;
pub mod baselines;
pub mod ingest;
pub mod annotation;
pub mod cli;
