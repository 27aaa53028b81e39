//! The dress workflow as a service: [`service::Service`] holds every
//! operation independent of transport, [`http`] exposes it over HTTP.

pub mod error;
pub mod http;
pub mod service;

pub use error::{ErrorBody, ServiceError};
pub use http::{router, serve, AppState, Auth};
pub use service::{Service, ServiceConfig, DEFAULT_BANK_ID};
