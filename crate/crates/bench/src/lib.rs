//! Fixtures shared by the benchmarks.

use chaoscorr_core::pipeline::RunConfig;
use chaoscorr_core::{simulate_streams, TimeTagStream};

/// Desk-scale configuration shortened to `duration_s`.
pub fn desk_config(duration_s: f64) -> RunConfig {
    let mut config = RunConfig::desk_scale();
    config.duration_s = duration_s;
    config
}

/// Three chaotic-light channels at the desk-scale rate.
pub fn desk_streams(duration_s: f64) -> [TimeTagStream; 3] {
    simulate_streams(&desk_config(duration_s)).expect("valid desk configuration")
}
