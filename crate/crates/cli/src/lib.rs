// SPDX-License-Identifier: Apache-2.0

//! Operational surface of the twin: configuration, the HTTP service and
//! the command implementations behind the `twin` binary.

pub mod cli;
pub mod config;
pub mod error;
pub mod service;
pub mod twin;
