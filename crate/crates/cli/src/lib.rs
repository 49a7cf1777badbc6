//! Command line and HTTP front ends. Both go through
//! [`whyplan_core::service`], so they answer identically.

pub mod cli;
pub mod http;
