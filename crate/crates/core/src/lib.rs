//! Typed service-contract evolution.
//!
//! Modules declare definitions under immutable element keys and reference
//! other modules' definitions by key. A deployment manager admits a batch of
//! modules only when the running system can keep talking to it, and a
//! simulator runs the proxy handshake that adapts values between versions
//! without losing fields.

#![allow(clippy::result_large_err)]

pub mod adapter;
pub mod analyzer;
pub mod compat;
pub mod manager;
pub mod model;
pub mod runtime;
pub mod scenario;
pub mod syntax;
pub mod typeck;
pub mod wire;

pub use model::*;
