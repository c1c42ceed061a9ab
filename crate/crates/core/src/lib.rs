pub mod bench;
pub mod cli;
pub mod client;
pub mod crypto;
pub mod engine;
pub mod error;
pub mod group;
pub mod ids;
pub mod metrics;
pub mod policy;
pub mod service;
pub mod snapshot;
pub mod wire;
