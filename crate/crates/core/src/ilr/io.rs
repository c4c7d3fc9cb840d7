use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IlrModel;
use crate::distributions::DofConvention;
use crate::error::{Error, Result};
use crate::features::FeatureSpec;
use crate::serial::{parse_all, MnwJson, NwJson, SticksJson, FORMAT_VERSION};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriorsJson {
    sticks: SticksJson,
    activation: Vec<NwJson>,
    regression: Vec<MnwJson>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IlrFile {
    format_version: u32,
    kind: String,
    truncation: usize,
    #[serde(default)]
    convention: DofConvention,
    feature_spec: FeatureSpec,
    sticks: SticksJson,
    activation: Vec<NwJson>,
    regression: Vec<MnwJson>,
    priors: PriorsJson,
}

impl IlrModel {
    pub fn to_json(&self) -> Result<String> {
        let file = IlrFile {
            format_version: FORMAT_VERSION,
            kind: "ilr".into(),
            truncation: self.truncation(),
            convention: self.convention,
            feature_spec: self.feature_spec.clone(),
            sticks: SticksJson::new(&self.sticks, self.alpha0),
            activation: self.activation.iter().map(NwJson::from).collect(),
            regression: self.regression.iter().map(MnwJson::from).collect(),
            priors: PriorsJson {
                sticks: SticksJson::new(&self.sticks_prior, self.alpha0),
                activation: self.activation_prior.iter().map(NwJson::from).collect(),
                regression: self.regression_prior.iter().map(MnwJson::from).collect(),
            },
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: IlrFile = serde_json::from_str(s)?;
        if f.format_version != FORMAT_VERSION {
            return Err(Error::arg(format!("unsupported model format version {}", f.format_version)));
        }
        if f.kind != "ilr" {
            return Err(Error::arg(format!("expected an ilr model, found {:?}", f.kind)));
        }
        let k = f.truncation;
        IlrModel::from_parts(
            f.feature_spec,
            f.sticks.alpha0,
            f.convention,
            f.priors.sticks.parse(k)?,
            f.sticks.parse(k)?,
            parse_all(&f.priors.activation, k, "prior activation", NwJson::parse)?,
            parse_all(&f.activation, k, "activation", NwJson::parse)?,
            parse_all(&f.priors.regression, k, "prior regression", MnwJson::parse)?,
            parse_all(&f.regression, k, "regression", MnwJson::parse)?,
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
