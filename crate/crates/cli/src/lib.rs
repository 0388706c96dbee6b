//! Library surface of the experiment harness; the binary is a thin
//! argument-parsing wrapper so the whole pipeline stays testable.

pub mod commands;
pub mod config;
