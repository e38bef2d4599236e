//! HTTP service, persistence and admin commands around `arise-core`.

pub mod api;
pub mod app;
pub mod config;
pub mod store;

pub use app::{AppState, ServiceError};
pub use config::ServiceConfig;
