// SPDX-License-Identifier: Apache-2.0

use std::path::Path;

use sctkit::sim::TraceConfig;

use crate::Failure;

/// Reads trace and process defaults from TOML, or JSON when the file ends in `.json`.
/// Missing fields keep their built-in values.
pub fn load(path: Option<&Path>) -> Result<TraceConfig, Failure> {
    let Some(path) = path else {
        return Ok(TraceConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    let cfg: TraceConfig = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text)
            .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?
    } else {
        toml::from_str(&text)
            .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?
    };
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_toml_keeps_defaults() {
        let cfg: TraceConfig =
            toml::from_str("noise_sigma = 2.0\n[process]\nlambda_um = 10.0\n").unwrap();
        assert_eq!(cfg.noise_sigma, 2.0);
        assert_eq!(cfg.process.lambda_um, 10.0);
        assert_eq!(cfg.sample_rate, TraceConfig::default().sample_rate);
        assert_eq!(
            cfg.process.global_delay_sigma,
            TraceConfig::default().process.global_delay_sigma
        );
    }
}
