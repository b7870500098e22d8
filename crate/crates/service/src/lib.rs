//! Command line and HTTP front ends for guided pipeline scheduling.

pub mod api;
pub mod state;
pub mod store;
