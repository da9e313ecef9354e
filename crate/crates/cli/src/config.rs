use std::path::Path;

use anyhow::{bail, Context, Result};
use latentnav::experiment::Preset;
use serde_json::Value;

/// Starts from a named preset and overlays a TOML or JSON file, key by key.
pub fn load_preset(name: &str, overlay: Option<&Path>) -> Result<Preset> {
    let base = Preset::named(name)?;
    let Some(path) = overlay else {
        return Ok(base);
    };
    if !path.exists() {
        return Err(latentnav::Error::MissingArtifact(path.to_path_buf()).into());
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let patch: Value = match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
        Some("json") => serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
        _ => bail!("config {} must end in .toml or .json", path.display()),
    };
    let mut merged = serde_json::to_value(&base)?;
    merge(&mut merged, patch);
    let preset: Preset = serde_json::from_value(merged).map_err(|e| latentnav::Error::InvalidConfig(e.to_string()))?;
    preset.train.validate()?;
    preset.codec.validate()?;
    Ok(preset)
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlay_replaces_leaves_only() {
        let mut a = serde_json::json!({"train": {"seed": 0, "batch_size": 8}, "name": "desk"});
        merge(&mut a, serde_json::json!({"train": {"seed": 3}}));
        assert_eq!(a, serde_json::json!({"train": {"seed": 3, "batch_size": 8}, "name": "desk"}));
    }
}
