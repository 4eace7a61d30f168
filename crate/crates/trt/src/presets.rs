//! Built-in problems. The JSON sources live in `presets/` next to the crate
//! manifest and use the inline problem format of the config file.

use crate::config::{parse_json, ConfigError, ProblemSpec};

const SOURCES: [(&str, &str); 2] = [
    ("lattice", include_str!("../presets/lattice.json")),
    ("hohlraum", include_str!("../presets/hohlraum.json")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    SOURCES.iter().map(|(n, _)| *n)
}

pub fn preset(name: &str) -> Result<ProblemSpec, ConfigError> {
    let (_, text) = SOURCES
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| {
            ConfigError::Invalid(format!(
                "unknown preset `{name}` (available: {})",
                names().collect::<Vec<_>>().join(", ")
            ))
        })?;
    parse_json(text, &format!("preset {name}"))
}

pub fn lattice() -> ProblemSpec {
    preset("lattice").expect("built-in lattice preset parses")
}

pub fn hohlraum() -> ProblemSpec {
    preset("hohlraum").expect("built-in hohlraum preset parses")
}
