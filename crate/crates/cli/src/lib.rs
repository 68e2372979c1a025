//! Library side of the `scene-annotate` tool: manifests, synthetic corpora,
//! configuration layering, model bundles and the command implementations.

pub mod bundle;
pub mod commands;
pub mod config;
pub mod corpus;
pub mod dataset;
pub mod exit;
pub mod fsutil;
pub mod pipeline;

pub use bundle::ModelBundle;
pub use config::{Config, Overrides};
pub use dataset::{Dataset, Split};
pub use exit::{exit_code, UsageError};
