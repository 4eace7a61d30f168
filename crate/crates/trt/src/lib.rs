//! Grey thermal radiative transfer driver: JSON configuration, the lattice
//! and hohlraum presets, the time loop and CSV/VTK output. The numerics live
//! in `trt-core`.

pub mod analysis;
pub mod config;
pub mod output;
pub mod presets;
pub mod run;

pub use config::{load_config, parse_config, Config, ConfigError, Method};
pub use run::{run, RunError, RunSummary, Simulation};
