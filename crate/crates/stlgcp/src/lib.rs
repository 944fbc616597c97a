pub mod config;
pub mod formats;
pub mod pipeline;
pub mod provenance;
