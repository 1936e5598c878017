//! Model persistence: a self-describing JSON container holding the kind,
//! hyperparameters, schema and all factor matrices with explicit shape
//! headers. Round-trips are bit-exact for finite values.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::SimilarityModel;
use crate::error::{Error, Result};
use crate::models::FactorModel;

pub const MODEL_FORMAT: &str = "tenrec-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Any trainable model the CLI can persist.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model_type", rename_all = "lowercase")]
pub enum SavedModel {
    Factor(FactorModel),
    Similarity(SimilarityModel),
}

#[derive(Serialize, Deserialize)]
struct Container {
    format: String,
    version: u32,
    model: SavedModel,
}

pub fn save_model(path: &Path, model: &SavedModel) -> Result<()> {
    let file = File::create(path)?;
    let container = Container {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_FORMAT_VERSION,
        model: model.clone(),
    };
    serde_json::to_writer_pretty(BufWriter::new(file), &container)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<SavedModel> {
    let file = File::open(path)?;
    let container: Container = serde_json::from_reader(BufReader::new(file))?;
    if container.format != MODEL_FORMAT {
        return Err(Error::InvalidModel(format!(
            "unexpected format '{}'",
            container.format
        )));
    }
    Ok(container.model)
}

pub fn load_factor_model(path: &Path) -> Result<FactorModel> {
    match load_model(path)? {
        SavedModel::Factor(m) => Ok(m),
        SavedModel::Similarity(_) => Err(Error::InvalidModel(
            "expected a factor model, found a similarity model".into(),
        )),
    }
}
