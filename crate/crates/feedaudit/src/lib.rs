//! IO and experiment harness around `feedaudit-core`: the JSON config
//! schema, file formats, content hashing for report provenance, and the
//! command implementations behind the `feedaudit` binary.

#![forbid(unsafe_code)]
#![warn(missing_docs)]

pub mod commands;
pub mod config;
pub mod formats;
pub mod hash;
