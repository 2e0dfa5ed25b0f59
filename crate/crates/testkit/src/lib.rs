//! Test-only helpers: an expression-tree oracle for arithmetic questions, a
//! random driver that plays legal command sequences against a session, and
//! an in-process client for the HTTP service.

pub mod driver;
pub mod expr;
pub mod invariants;
pub mod service;
