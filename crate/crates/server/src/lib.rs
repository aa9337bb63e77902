//! HTTP service and command line tool around rule-guided discovery.

pub mod api;
pub mod cli;
pub mod store;

pub use api::router;
pub use store::AppState;
