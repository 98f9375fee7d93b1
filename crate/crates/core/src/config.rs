//! Strict JSON configuration files.
//!
//! Keys are exactly the [`PhysicalConfig`] field names. Missing keys take
//! the standard constants; unknown keys are rejected.

use std::path::Path;

use crate::error::{Error, Result};
use crate::params::{validate_config, PhysicalConfig};

pub fn load_config(path: &Path) -> Result<PhysicalConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text, &path.display().to_string())
}

/// Parses and validates; `origin` only labels error messages.
pub fn parse_config(text: &str, origin: &str) -> Result<PhysicalConfig> {
    let cfg = parse_config_unchecked(text, origin)?;
    validate_config(&cfg).into_result()?;
    Ok(cfg)
}

/// Parses without running the physical validation.
pub fn parse_config_unchecked(text: &str, origin: &str) -> Result<PhysicalConfig> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_string(),
        message: e.to_string(),
    })
}

/// Pretty JSON with every field present.
pub fn config_to_json(cfg: &PhysicalConfig) -> String {
    serde_json::to_string_pretty(cfg).expect("configuration always serializes")
}
