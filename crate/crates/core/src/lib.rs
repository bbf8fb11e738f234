//! Self-hosted annotation server core.
//!
//! A deployment is described by one YAML task file ([`config::TaskConfig`]).
//! Instances are ingested from data files ([`data`]), annotators are assigned
//! queues and resume where they left off ([`session`]), the queue can be
//! reordered by an uncertainty-sampling classifier ([`active`]), keywords are
//! highlighted with seeded decoys ([`highlight`]), and quality control runs
//! prestudy tests, attention checks and surveys ([`quality`]). The HTTP API
//! lives in [`server`].

pub mod active;
pub mod config;
pub mod data;
pub mod error;
pub mod export;
pub mod gallery;
pub mod highlight;
pub mod quality;
pub mod render;
pub mod scheme;
pub mod server;
pub mod session;
pub mod template;
pub mod tokenize;
pub mod wizard;

pub use config::{load_config, TaskConfig};
pub use error::{Error, Result};
