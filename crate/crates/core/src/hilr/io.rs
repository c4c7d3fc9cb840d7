use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HilrModel;
use crate::distributions::DofConvention;
use crate::error::{Error, Result};
use crate::features::FeatureSpec;
use crate::serial::{parse_all, MnwJson, SticksJson, FORMAT_VERSION};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriorsJson {
    upper_sticks: SticksJson,
    lower_sticks: SticksJson,
    activation: MnwJson,
    regression: MnwJson,
}

/// Lower-level blocks of one upper component. `activation.M` has columns
/// `[τ_m, μ_m1, …, μ_mK]`; `regression.M` has columns `[A_m, c_m1, …, c_mK]`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UpperJson {
    lower_sticks: SticksJson,
    activation: MnwJson,
    regression: MnwJson,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HilrFile {
    format_version: u32,
    kind: String,
    upper_truncation: usize,
    lower_truncation: usize,
    #[serde(default)]
    convention: DofConvention,
    feature_spec: FeatureSpec,
    upper_sticks: SticksJson,
    components: Vec<UpperJson>,
    priors: PriorsJson,
}

impl HilrModel {
    pub fn to_json(&self) -> Result<String> {
        let components = (0..self.upper_truncation())
            .map(|m| UpperJson {
                lower_sticks: SticksJson::new(&self.lower[m], self.alpha0),
                activation: MnwJson::from(&self.activation[m]),
                regression: MnwJson::from(&self.regression[m]),
            })
            .collect();
        let file = HilrFile {
            format_version: FORMAT_VERSION,
            kind: "hilr".into(),
            upper_truncation: self.upper_truncation(),
            lower_truncation: self.lower_truncation(),
            convention: self.convention,
            feature_spec: self.feature_spec.clone(),
            upper_sticks: SticksJson::new(&self.upper, self.beta0),
            components,
            priors: PriorsJson {
                upper_sticks: SticksJson::new(&self.upper_prior, self.beta0),
                lower_sticks: SticksJson::new(&self.lower_prior, self.alpha0),
                activation: MnwJson::from(&self.activation_prior),
                regression: MnwJson::from(&self.regression_prior),
            },
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: HilrFile = serde_json::from_str(s)?;
        if f.format_version != FORMAT_VERSION {
            return Err(Error::arg(format!("unsupported model format version {}", f.format_version)));
        }
        if f.kind != "hilr" {
            return Err(Error::arg(format!("expected an hilr model, found {:?}", f.kind)));
        }
        let (m, k) = (f.upper_truncation, f.lower_truncation);
        let comps = parse_all(&f.components, m, "components", |c| {
            Ok((c.lower_sticks.parse(k)?, c.activation.parse()?, c.regression.parse()?))
        })?;
        let mut lower = Vec::with_capacity(m);
        let mut activation = Vec::with_capacity(m);
        let mut regression = Vec::with_capacity(m);
        for (l, a, r) in comps {
            lower.push(l);
            activation.push(a);
            regression.push(r);
        }
        HilrModel::from_parts(
            f.feature_spec,
            f.priors.lower_sticks.alpha0,
            f.upper_sticks.alpha0,
            f.convention,
            f.priors.upper_sticks.parse(m)?,
            f.upper_sticks.parse(m)?,
            f.priors.lower_sticks.parse(k)?,
            lower,
            f.priors.activation.parse()?,
            activation,
            f.priors.regression.parse()?,
            regression,
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
