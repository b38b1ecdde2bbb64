//! Datasets, checkpoints, experiment drivers and self-checks.

pub mod data;
pub mod checkpoint;
pub mod experiment;
pub mod mnist;
pub mod verify;
