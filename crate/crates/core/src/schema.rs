//! Versioned JSON documents with path-precise parse errors.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Deserialize `text`, reporting the JSON path of the first offending field.
pub fn parse_json<T: DeserializeOwned>(text: &str, source_name: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Schema {
            source_name: source_name.to_string(),
            path: if path.is_empty() { ".".into() } else { path },
            message: e.into_inner().to_string(),
        }
    })
}

/// TOML counterpart of [`parse_json`].
pub fn parse_toml<T: DeserializeOwned>(text: &str, source_name: &str) -> Result<T> {
    let schema_err = |path: String, message: String| Error::Schema {
        source_name: source_name.to_string(),
        path: if path.is_empty() { ".".into() } else { path },
        message,
    };
    let de = toml::Deserializer::parse(text).map_err(|e| {
        let at = e.span().map(|s| format!("byte {}", s.start)).unwrap_or_default();
        schema_err(at, e.message().to_string())
    })?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        schema_err(path, e.into_inner().message().to_string())
    })
}

/// Deserialize an already parsed JSON value, keeping the offending path.
pub fn from_value<T: DeserializeOwned>(value: serde_json::Value, source_name: &str) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        Error::Schema {
            source_name: source_name.to_string(),
            path: if path.is_empty() { ".".into() } else { path },
            message: e.into_inner().to_string(),
        }
    })
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_json(&text, &path.display().to_string())
}

pub fn to_pretty_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_pretty_json(value)?).map_err(|e| Error::io(path, e))
}

/// Check a `schema_version` field against the newest version this build reads.
pub fn check_version(found: u32, supported: u32, source_name: &str) -> Result<()> {
    if found == 0 || found > supported {
        return Err(Error::Schema {
            source_name: source_name.to_string(),
            path: "schema_version".into(),
            message: format!("unsupported schema version {found} (this build reads up to {supported})"),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stimgen::TrialPlan;

    #[test]
    fn error_names_nested_path() {
        let err = parse_json::<TrialPlan>(
            r#"{"schema_version":1,"experiment":"preattentive","seed":1,"grid":{"rows":"x"}}"#,
            "plan.json",
        )
        .unwrap_err();
        match err {
            Error::Schema { path, source_name, .. } => {
                assert_eq!(path, "grid.rows");
                assert_eq!(source_name, "plan.json");
            }
            other => panic!("{other}"),
        }
    }
}
