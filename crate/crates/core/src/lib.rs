//! Decentralized SGD simulator with adaptive asynchronous gossip.

pub mod cli;
pub mod consensus;
pub mod engine;
pub mod metrics;
pub mod pathsearch;
pub mod problems;
pub mod theory;
pub mod topology;
