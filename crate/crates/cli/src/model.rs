use std::path::Path;

use dplr_core::data::Dataset;
use dplr_core::hilr::HilrModel;
use dplr_core::ilr::IlrModel;
use dplr_core::predictive::{Prediction, PredictionMode};
use dplr_core::Result;
use nalgebra::DMatrix;

/// Mass fraction above which a component counts as an expert.
pub const EXPERT_THRESHOLD: f64 = 0.01;

pub enum Model {
    Ilr(IlrModel),
    Hilr(HilrModel),
}

impl Model {
    /// Dispatch on the `kind` field of a saved model.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        match value.get("kind").and_then(|k| k.as_str()) {
            Some("hilr") => Ok(Model::Hilr(HilrModel::from_json(&text)?)),
            _ => Ok(Model::Ilr(IlrModel::from_json(&text)?)),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        match self {
            Model::Ilr(m) => m.save(path),
            Model::Hilr(m) => m.save(path),
        }
    }

    pub fn dim_x(&self) -> usize {
        match self {
            Model::Ilr(m) => m.feature_spec().dim_x(),
            Model::Hilr(m) => m.feature_spec().dim_x(),
        }
    }

    pub fn dim_y(&self) -> usize {
        match self {
            Model::Ilr(m) => m.feature_spec().dim_y(),
            Model::Hilr(m) => m.feature_spec().dim_y(),
        }
    }

    pub fn predict_many(&self, x: &DMatrix<f64>, mode: PredictionMode) -> Result<Vec<Prediction>> {
        match self {
            Model::Ilr(m) => m.predict_many(x, mode),
            Model::Hilr(m) => m.predict_many(x, mode),
        }
    }

    /// Local models holding more than 1% of the responsibility mass on
    /// `data`; for HILR these are `(m, k)` cells.
    pub fn experts(&self, data: &Dataset) -> Result<usize> {
        match self {
            Model::Ilr(m) => m.active_components(data, EXPERT_THRESHOLD),
            Model::Hilr(m) => {
                let joint = m.e_step(data)?.joint();
                let cut = EXPERT_THRESHOLD * data.len() as f64;
                Ok(joint.column_iter().filter(|c| c.sum() > cut).count())
            }
        }
    }
}
