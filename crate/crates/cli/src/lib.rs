//! Command-line pipeline and HTTP service built on the `reviewsense` core.

pub mod artifacts;
pub mod commands;
pub mod service;
