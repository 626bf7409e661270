//! File formats, pipelines, validation suite and live session service
//! built on `jobmarket-core`.

pub mod config;
pub mod formats;
pub mod service;
pub mod study;
pub mod validation;
