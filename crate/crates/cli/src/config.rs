//! TOML run configuration.
//!
//! ```toml
//! [campaign]
//! true_dn_e_cm = 2e-26
//! e_field_v_per_cm = 11000.0
//! cycles = 10000
//!
//! [units]
//! geometric_factor = 0.5773502691896258
//!
//! [inference]
//! cl = 0.95
//! ```
//!
//! Every key is checked against the schema before typed parsing so that all
//! offending keys are reported at once.

use std::collections::BTreeSet;
use std::path::Path;

use nedm_core::comagnetometer::CampaignConfig;
use nedm_core::quantities::{PhysicalConstants, UnitSystem};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::output::read_file;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnitsSection {
    /// κ in rad per (e·cm · V/cm · s).
    pub kappa_rad_per_e_cm_v_s_per_cm: f64,
    pub geometric_factor: f64,
}

impl Default for UnitsSection {
    fn default() -> Self {
        let u = UnitSystem::default();
        Self {
            kappa_rad_per_e_cm_v_s_per_cm: u.phase_per_edm_field_time,
            geometric_factor: u.geometric_factor,
        }
    }
}

impl UnitsSection {
    pub fn resolve(&self) -> CliResult<UnitSystem> {
        Ok(UnitSystem::new(
            self.kappa_rad_per_e_cm_v_s_per_cm,
            self.geometric_factor,
        )?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantsSection {
    pub gamma_n_rad_per_s_t: f64,
    pub gamma_hg_rad_per_s_t: f64,
    pub mu_n_rad_per_s_t: f64,
}

impl Default for ConstantsSection {
    fn default() -> Self {
        let c = PhysicalConstants::default();
        Self {
            gamma_n_rad_per_s_t: c.gamma_n,
            gamma_hg_rad_per_s_t: c.gamma_hg,
            mu_n_rad_per_s_t: c.mu_n,
        }
    }
}

impl ConstantsSection {
    pub fn resolve(&self) -> CliResult<PhysicalConstants> {
        Ok(PhysicalConstants::new(
            self.gamma_n_rad_per_s_t,
            self.gamma_hg_rad_per_s_t,
            self.mu_n_rad_per_s_t,
        )?)
    }
}

/// Unset entries fall back to the dataset-derived search box.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceSection {
    pub cl: Option<f64>,
    pub grid_points: Option<usize>,
    pub resolution: Option<f64>,
    pub dn_min_e_cm: Option<f64>,
    pub dn_max_e_cm: Option<f64>,
    pub delta_min_e_cm: Option<f64>,
    pub delta_max_e_cm: Option<f64>,
}

const INFERENCE_KEYS: [&str; 7] = [
    "cl",
    "grid_points",
    "resolution",
    "dn_min_e_cm",
    "dn_max_e_cm",
    "delta_min_e_cm",
    "delta_max_e_cm",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub campaign: CampaignConfig,
    pub units: UnitsSection,
    pub constants: ConstantsSection,
    pub inference: InferenceSection,
}

fn keys_of<T: Serialize>(value: &T) -> BTreeSet<String> {
    match toml::Value::try_from(value) {
        Ok(toml::Value::Table(t)) => t.keys().cloned().collect(),
        _ => BTreeSet::new(),
    }
}

fn unknown_keys(table: &toml::Table) -> Vec<String> {
    let schema: [(&str, BTreeSet<String>); 4] = [
        ("campaign", keys_of(&CampaignConfig::default())),
        ("units", keys_of(&UnitsSection::default())),
        ("constants", keys_of(&ConstantsSection::default())),
        ("inference", INFERENCE_KEYS.iter().map(|k| k.to_string()).collect()),
    ];
    let mut unknown = Vec::new();
    for (section, value) in table {
        let Some((_, known)) = schema.iter().find(|(name, _)| name == section) else {
            unknown.push(section.clone());
            continue;
        };
        match value {
            toml::Value::Table(entries) => {
                for key in entries.keys() {
                    if !known.contains(key) {
                        unknown.push(format!("{section}.{key}"));
                    }
                }
            }
            _ => unknown.push(section.clone()),
        }
    }
    unknown
}

pub fn parse_config(text: &str) -> CliResult<FileConfig> {
    let table: toml::Table =
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
    let unknown = unknown_keys(&table);
    if !unknown.is_empty() {
        return Err(CliError::UnknownKeys(unknown));
    }
    let cfg: FileConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e| CliError::Usage(format!("config: {e}")))?;
    cfg.campaign.validate()?;
    cfg.units.resolve()?;
    cfg.constants.resolve()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> CliResult<FileConfig> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes)
        .map_err(|_| CliError::Usage(format!("{}: not UTF-8", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        CliError::Usage(msg) => CliError::Usage(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nedm_core::comagnetometer::CountingMode;

    #[test]
    fn empty_config_is_all_defaults() {
        assert_eq!(parse_config("").unwrap(), FileConfig::default());
    }

    #[test]
    fn sections_parse() {
        let cfg = parse_config(
            "[campaign]\ntrue_dn_e_cm = 2e-26\ncycles = 40\ncounting = \"exact\"\n\n[units]\ngeometric_factor = 0.5\n\n[inference]\ncl = 0.9\n",
        )
        .unwrap();
        assert_eq!(cfg.campaign.true_dn_e_cm, 2e-26);
        assert_eq!(cfg.campaign.cycles, 40);
        assert_eq!(cfg.campaign.counting, CountingMode::Exact);
        assert_eq!(cfg.units.geometric_factor, 0.5);
        assert_eq!(cfg.inference.cl, Some(0.9));
    }

    #[test]
    fn all_unknown_keys_listed() {
        let err = parse_config("[campaign]\ne_field = 1.0\ncycle = 3\n[units]\nkappa = 1\n[extra]\na = 1\n")
            .unwrap_err();
        match err {
            CliError::UnknownKeys(keys) => {
                assert_eq!(keys, ["campaign.cycle", "campaign.e_field", "extra", "units.kappa"]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_types_and_values_are_usage_errors() {
        assert_eq!(parse_config("[campaign]\ncycles = \"many\"\n").unwrap_err().exit_code(), 2);
        assert_eq!(parse_config("[campaign]\nvisibility = 1.5\n").unwrap_err().exit_code(), 2);
        assert_eq!(parse_config("[units]\ngeometric_factor = -1.0\n").unwrap_err().exit_code(), 2);
        assert_eq!(parse_config("not toml [").unwrap_err().exit_code(), 2);
    }
}
