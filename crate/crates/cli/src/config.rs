//! Run configuration. Flags build a [`PipelineConfig`]; a TOML file, if
//! given, is overlaid on top of it key by key.

use std::path::PathBuf;

use retarget_core::cem::CemConfig;
use retarget_core::feasibility::{FeasibilityTolerances, DEFAULT_CONTACT_THRESHOLD};
use retarget_core::{CostWeights, DynamicsConfig};
use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gr,
    Idr,
    Ddr,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Gr, Method::Idr, Method::Ddr];

    pub fn name(self) -> &'static str {
        match self {
            Method::Gr => "gr",
            Method::Idr => "idr",
            Method::Ddr => "ddr",
        }
    }

    pub fn is_stochastic(self) -> bool {
        self != Method::Gr
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Fast,
    #[default]
    Standard,
    Thorough,
}

impl Profile {
    pub fn cem(self) -> CemConfig {
        match self {
            Profile::Fast => CemConfig::fast(),
            Profile::Standard => CemConfig::default(),
            Profile::Thorough => CemConfig::thorough(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Robot model document; the bundled mini-humanoid when absent.
    #[serde(default)]
    pub model: Option<PathBuf>,
    pub reference: PathBuf,
    /// Ground-truth contact labels for the contact error rate.
    #[serde(default)]
    pub truth_contacts: Option<PathBuf>,
    /// Reference configurations for the joint RMSE.
    #[serde(default)]
    pub reference_trajectory: Option<PathBuf>,
    pub method: Method,
    pub seeds: Vec<u64>,
    pub weights: CostWeights,
    pub cem: CemConfig,
    pub dynamics: DynamicsConfig,
    pub contact_threshold: f64,
    pub tolerances: FeasibilityTolerances,
    pub out: PathBuf,
}

impl PipelineConfig {
    pub fn new(reference: PathBuf, method: Method, out: PathBuf) -> Self {
        Self {
            model: None,
            reference,
            truth_contacts: None,
            reference_trajectory: None,
            method,
            seeds: vec![0],
            weights: CostWeights::default(),
            cem: CemConfig::default(),
            dynamics: DynamicsConfig::default(),
            contact_threshold: DEFAULT_CONTACT_THRESHOLD,
            tolerances: FeasibilityTolerances::default(),
            out,
        }
    }

    /// Overlays the keys present in `text` (TOML) onto this configuration.
    pub fn overlay_toml(&self, text: &str) -> CliResult<Self> {
        let overlay: toml::Table = text
            .parse()
            .map_err(|e| CliError::Config(format!("config file: {e}")))?;
        let mut base = toml::Table::try_from(self).map_err(|e| CliError::Config(e.to_string()))?;
        merge(&mut base, overlay);
        let cfg: PipelineConfig = toml::Value::Table(base)
            .try_into()
            .map_err(|e| CliError::Config(format!("config file: {e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> CliResult<()> {
        if self.seeds.is_empty() {
            return Err(CliError::Config("at least one seed is required".into()));
        }
        if self.reference.as_os_str().is_empty() || self.out.as_os_str().is_empty() {
            return Err(CliError::Config("reference and output paths must be non-empty".into()));
        }
        if !(self.contact_threshold > 0.0) {
            return Err(CliError::Config(format!(
                "contact threshold {} must be > 0",
                self.contact_threshold
            )));
        }
        self.weights.check()?;
        self.cem.check()?;
        self.dynamics.contact.check()?;
        Ok(())
    }
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parses `3`, `0..4` (inclusive) or `1,5,9`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let s = s.trim();
    let bad = || format!("bad seed list `{s}` (examples: 3, 0..4, 1,5,9)");
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if b < a {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("0..4").unwrap(), vec![0, 1, 2, 3, 4]);
        assert_eq!(parse_seeds("7").unwrap(), vec![7]);
        assert_eq!(parse_seeds("1, 5,9").unwrap(), vec![1, 5, 9]);
        assert!(parse_seeds("4..1").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn file_overrides_flags_key_by_key() {
        let mut cfg = PipelineConfig::new("ref.txt".into(), Method::Ddr, "out".into());
        cfg.cem = Profile::Fast.cem();
        let text = "seeds = [3, 4]\n[cem]\npopulation = 40\n[dynamics]\nsubsteps = 4\n";
        let merged = cfg.overlay_toml(text).unwrap();
        assert_eq!(merged.seeds, vec![3, 4]);
        assert_eq!(merged.cem.population, 40);
        assert_eq!(merged.cem.horizon, CemConfig::fast().horizon);
        assert_eq!(merged.dynamics.substeps, 4);
        assert_eq!(merged.method, Method::Ddr);
        assert!(cfg.overlay_toml("[cem]\nelites = 500\n").is_err());
        assert!(cfg.overlay_toml("method = \"walk\"\n").is_err());
    }

    #[test]
    fn roundtrips_through_toml() {
        let cfg = PipelineConfig::new("r".into(), Method::Gr, "o".into());
        assert_eq!(cfg.overlay_toml("").unwrap(), cfg);
    }
}
