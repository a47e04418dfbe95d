//! Host side of the thought memory engine: store files, audit logs, remote
//! model backends, evaluation reports, the HTTP service, and the CLI.

use std::time::Instant;

use thoughtmem_core::pipeline::Clock;

pub mod audit;
pub mod cli;
pub mod config;
pub mod documents;
pub mod remote;
pub mod reports;
pub mod service;
pub mod store_file;

pub use thoughtmem_core as core;

/// Monotonic wall clock for stage timings.
#[derive(Debug, Clone, Copy)]
pub struct SystemClock {
    start: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        Self { start: Instant::now() }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now_micros(&self) -> u64 {
        self.start.elapsed().as_micros() as u64
    }
}
