//! Versioned model files.
//!
//! A model file is JSON with a `format`/`version` header. Every real number
//! is stored as a hexadecimal float string, so save → load is bit-exact.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::decompose::CompositeDecomposition;
use crate::error::{Error, Result};
use crate::fuse::DcModel;

pub const MODEL_FORMAT: &str = "fsdc-model";
pub const DECOMPOSITION_FORMAT: &str = "fsdc-decomposition";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format: String,
    version: u32,
    seed: u64,
    body: T,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

fn encode<T: Serialize>(format: &str, seed: u64, body: &T) -> Result<String> {
    let env = Envelope {
        format: format.to_string(),
        version: VERSION,
        seed,
        body,
    };
    serde_json::to_string_pretty(&env).map_err(|e| Error::Format(e.to_string()))
}

fn decode<T: DeserializeOwned>(format: &str, text: &str) -> Result<T> {
    let header: Header = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    if header.format != format {
        return Err(Error::Format(format!(
            "expected a {format} file, found {:?}",
            header.format
        )));
    }
    if header.version != VERSION {
        return Err(Error::Format(format!(
            "version mismatch: file is version {}, this build reads version {VERSION}",
            header.version
        )));
    }
    let env: Envelope<T> = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    Ok(env.body)
}

pub fn model_to_string(model: &DcModel) -> Result<String> {
    encode(MODEL_FORMAT, model.config.seed, model)
}

pub fn model_from_str(text: &str) -> Result<DcModel> {
    decode(MODEL_FORMAT, text)
}

pub fn save_model(model: &DcModel, path: &Path) -> Result<()> {
    fs::write(path, model_to_string(model)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<DcModel> {
    model_from_str(&fs::read_to_string(path)?)
}

pub fn decomposition_to_string(d: &CompositeDecomposition, seed: u64) -> Result<String> {
    encode(DECOMPOSITION_FORMAT, seed, d)
}

pub fn decomposition_from_str(text: &str) -> Result<CompositeDecomposition> {
    decode(DECOMPOSITION_FORMAT, text)
}
