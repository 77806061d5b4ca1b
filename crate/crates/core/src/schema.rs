//! Versioned JSON envelopes: every persisted document carries a `schema`
//! tag such as `"irac-instance/1"` that is checked on load.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{IracError, Result};

pub const INSTANCE_SCHEMA: &str = "irac-instance/1";
pub const SOLUTION_SCHEMA: &str = "irac-solution/1";
pub const DATASET_SCHEMA: &str = "irac-dataset/1";
pub const MODEL_SCHEMA: &str = "irac-model/1";
pub const REPORT_SCHEMA: &str = "irac-report/1";

#[derive(Debug, Serialize, Deserialize)]
pub struct Versioned<T> {
    pub schema: String,
    #[serde(flatten)]
    pub body: T,
}

pub fn to_json<T: Serialize>(schema: &str, body: &T) -> Result<String> {
    #[derive(Serialize)]
    struct Out<'a, T> {
        schema: &'a str,
        #[serde(flatten)]
        body: &'a T,
    }
    Ok(serde_json::to_string_pretty(&Out { schema, body })?)
}

pub fn from_json<T: DeserializeOwned>(schema: &str, text: &str) -> Result<T> {
    let v: Versioned<T> = serde_json::from_str(text)
        .map_err(|e| IracError::Parse(format!("{schema} document: {e}")))?;
    if v.schema != schema {
        return Err(IracError::Parse(format!(
            "expected schema {schema:?}, found {:?}",
            v.schema
        )));
    }
    Ok(v.body)
}

pub fn write_json<T: Serialize>(path: &Path, schema: &str, body: &T) -> Result<()> {
    let mut text = to_json(schema, body)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path, schema: &str) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    from_json(schema, &text)
}
