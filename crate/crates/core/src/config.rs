//! Campaign configuration: a JSON document mirroring the model types.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::acquisition::{Campaign, ScanPlan, SteadyStateParams, TemperatureLoopParams};
use crate::analysis::AnalysisSettings;
use crate::error::{CampaignError, ConfigError, FieldError};
use crate::physics::{CellGeometry, PhysicalConstants, ReferenceAtmosphere};
use crate::sim::{ElectrometerModel, GroundTruthCell, HeaterModel, Plant, PlantSetup, ThermalState};

/// Oven and cell temperatures at virtual time zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialTemperatures {
    pub oven_c: f64,
    pub cell_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub geometry: CellGeometry,
    pub atmosphere: ReferenceAtmosphere,
    pub cell: GroundTruthCell,
    pub heater: HeaterModel,
    #[serde(default)]
    pub electrometer: ElectrometerModel,
    #[serde(default)]
    pub steady_state: SteadyStateParams,
    pub scan: ScanPlan,
    pub temperature: TemperatureLoopParams,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub analysis: AnalysisSettings,
    /// Defaults to both at the heater's ambient temperature.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialTemperatures>,
}

const STOCK: &[(&str, &str)] = &[
    ("ysz-700C", include_str!("../configs/ysz-700C.json")),
    ("ysz-700C-legacy", include_str!("../configs/ysz-700C-legacy.json")),
];

impl CampaignConfig {
    pub fn stock_names() -> impl Iterator<Item = &'static str> {
        STOCK.iter().map(|(name, _)| *name)
    }

    pub fn stock(name: &str) -> Option<Self> {
        STOCK
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| Self::from_json(text).expect("stock configs are valid"))
    }

    /// Parses and validates a config document.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if inner.is_syntax() || inner.is_eof() || path.is_empty() || path == "." {
                ConfigError::Syntax(inner.to_string())
            } else {
                ConfigError::Invalid(vec![FieldError::new(path, inner.to_string())])
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// A stock config name, or else a file path.
    pub fn resolve(name_or_path: &str) -> Result<Self, ConfigError> {
        match Self::stock(name_or_path) {
            Some(c) => Ok(c),
            None => Self::load(Path::new(name_or_path)),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errors: Vec<FieldError> = Vec::new();
        errors.extend(self.geometry.validate("geometry"));
        errors.extend(self.atmosphere.validate("atmosphere"));
        errors.extend(self.cell.validate("cell"));
        errors.extend(self.heater.validate("heater"));
        errors.extend(self.electrometer.validate("electrometer"));
        errors.extend(self.steady_state.validate("steady_state"));
        errors.extend(self.scan.validate("scan"));
        errors.extend(self.temperature.validate("temperature"));
        errors.extend(self.analysis.validate("analysis"));
        if let Some(init) = &self.initial {
            for (name, v) in [("oven_c", init.oven_c), ("cell_c", init.cell_c)] {
                if !v.is_finite() {
                    errors.push(FieldError::new(format!("initial.{name}"), "must be finite"));
                }
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errors))
        }
    }

    /// Pretty JSON with `output_dir` removed, as stored next to the results.
    pub fn to_stored_json(&self) -> String {
        let stored = Self {
            output_dir: None,
            ..self.clone()
        };
        let mut text = serde_json::to_string_pretty(&stored).expect("config serializes");
        text.push('\n');
        text
    }

    pub fn constants(&self) -> PhysicalConstants {
        PhysicalConstants::CODATA
    }

    pub fn initial_state(&self) -> ThermalState {
        let init = self.initial.unwrap_or(InitialTemperatures {
            oven_c: self.heater.ambient_c,
            cell_c: self.heater.ambient_c,
        });
        ThermalState::at(init.oven_c, init.cell_c)
    }

    pub fn plant(&self) -> Plant {
        Plant::new(PlantSetup {
            geometry: self.geometry,
            atmosphere: self.atmosphere,
            cell: self.cell,
            heater: self.heater,
            electrometer: self.electrometer,
            seed: self.seed,
            initial: self.initial_state(),
        })
    }

    pub fn campaign(&self) -> Result<Campaign, CampaignError> {
        Campaign::new(self.scan, self.steady_state, self.temperature, self.plant())
    }
}
