//! Shared by the integration suites and the acceptance gate.
#![allow(dead_code)]

pub mod oracles;
pub mod props;
