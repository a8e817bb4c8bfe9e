//! Command line front end and HTTP session service for `seqchart-core`.

pub mod cli;
pub mod http;
pub mod service;

pub use service::{ExternalEvent, ServiceError, SessionService, SessionView};
