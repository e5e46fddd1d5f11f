use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic_cohort, load_cohort_with, Cohort, SyntheticConfig};
use crate::error::{Error, Result};
use crate::hcrf::HcrfTrainConfig;
use crate::io::read_json;
use crate::pspi::DEFAULT_MAX_PSPI;
use crate::regressor::RegressorConfig;

/// Which per-frame signal feeds the HCRF.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FirstStage {
    #[serde(rename = "bilstm")]
    Bilstm,
    #[serde(rename = "ffn")]
    Ffn,
    /// Scaled ground-truth PSPI.
    #[serde(rename = "gt-pspi")]
    GtPspi,
    /// PCA-projected landmarks.
    #[serde(rename = "raw")]
    Raw,
}

impl FirstStage {
    pub fn name(self) -> &'static str {
        match self {
            FirstStage::Bilstm => "bilstm",
            FirstStage::Ffn => "ffn",
            FirstStage::GtPspi => "gt-pspi",
            FirstStage::Raw => "raw",
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(self, FirstStage::Bilstm | FirstStage::Ffn)
    }
}

impl fmt::Display for FirstStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FirstStage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bilstm" => Ok(FirstStage::Bilstm),
            "ffn" => Ok(FirstStage::Ffn),
            "gt-pspi" | "ground-truth-pspi" => Ok(FirstStage::GtPspi),
            "raw" | "raw-features" => Ok(FirstStage::Raw),
            other => Err(Error::invalid(format!(
                "unknown first stage {other:?} (expected bilstm, ffn, gt-pspi or raw)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CohortSource {
    /// A cohort manifest JSON with per-sequence CSV files.
    Manifest { path: PathBuf },
    Synthetic { config: SyntheticConfig, seed: u64 },
}

impl Default for CohortSource {
    fn default() -> Self {
        CohortSource::Synthetic {
            config: SyntheticConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub n_train: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { n_train: 15, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub cohort: CohortSource,
    pub split: SplitConfig,
    pub first_stage: FirstStage,
    pub alphas: Vec<usize>,
    pub repetitions: usize,
    /// Every training and repetition seed derives from this value.
    pub seed: u64,
    pub regressor: RegressorConfig,
    pub hcrf: HcrfTrainConfig,
    pub pca_variance: f64,
    pub max_pspi: u8,
    /// Fraction of training persons held out when picking lambda from the grid.
    pub lambda_validation_fraction: f64,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            cohort: CohortSource::default(),
            split: SplitConfig::default(),
            first_stage: FirstStage::Bilstm,
            alphas: vec![0, 1, 2],
            repetitions: 5,
            seed: 0,
            regressor: RegressorConfig::default(),
            hcrf: HcrfTrainConfig::default(),
            pca_variance: 0.95,
            max_pspi: DEFAULT_MAX_PSPI,
            lambda_validation_fraction: 0.3,
            out_dir: None,
        }
    }
}

#[derive(Deserialize)]
struct ManifestConfig {
    config: ExperimentConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::invalid("repetitions must be >= 1"));
        }
        if self.alphas.is_empty() {
            return Err(Error::invalid("alphas must not be empty"));
        }
        if !(self.pca_variance > 0.0 && self.pca_variance <= 1.0) {
            return Err(Error::invalid(format!("pca_variance must be in (0, 1], got {}", self.pca_variance)));
        }
        if !(self.max_pspi == 15 || self.max_pspi == 16) {
            return Err(Error::invalid(format!("max_pspi must be 15 or 16, got {}", self.max_pspi)));
        }
        if !(self.lambda_validation_fraction > 0.0 && self.lambda_validation_fraction < 1.0) {
            return Err(Error::invalid("lambda_validation_fraction must be in (0, 1)"));
        }
        if self.hcrf.num_classes < 11 {
            return Err(Error::invalid("the HCRF needs at least 11 classes to cover VAS 0..=10"));
        }
        self.hcrf.lbfgs.validate()
    }

    /// Reads a config file, or the `config` member of a run manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let value: serde_json::Value = read_json(path)?;
        let parsed = if value.get("config").is_some() {
            serde_json::from_value::<ManifestConfig>(value).map(|m| m.config)
        } else {
            serde_json::from_value::<ExperimentConfig>(value)
        };
        parsed.map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load_cohort(&self) -> Result<Cohort> {
        match &self.cohort {
            CohortSource::Manifest { path } => load_cohort_with(path, self.max_pspi),
            CohortSource::Synthetic { config, seed } => generate_synthetic_cohort(config, *seed),
        }
    }
}

/// Mixes a base seed with a stream index (splitmix64 finalizer).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) mod stream {
    pub const REGRESSOR_INIT: u64 = 1;
    pub const REGRESSOR_SHUFFLE: u64 = 2;
    pub const HCRF_INIT: u64 = 3;
    pub const LAMBDA_SPLIT: u64 = 4;
    /// Per-person streams start here.
    pub const PERSON_BASE: u64 = 1_000;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_stage_names_round_trip() {
        for s in [FirstStage::Bilstm, FirstStage::Ffn, FirstStage::GtPspi, FirstStage::Raw] {
            assert_eq!(s.name().parse::<FirstStage>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.name()));
        }
        assert!("svr".parse::<FirstStage>().is_err());
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"first_stage": "raw", "alphas": [0, 3]}"#).unwrap();
        assert_eq!(cfg.first_stage, FirstStage::Raw);
        assert_eq!(cfg.alphas, vec![0, 3]);
        assert_eq!(cfg.repetitions, 5);
        cfg.validate().unwrap();
    }

    #[test]
    fn validation() {
        let bad = [
            ExperimentConfig {
                repetitions: 0,
                ..ExperimentConfig::default()
            },
            ExperimentConfig {
                max_pspi: 14,
                ..ExperimentConfig::default()
            },
            ExperimentConfig {
                alphas: vec![],
                ..ExperimentConfig::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn loads_from_manifest_wrapper() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            seed: 42,
            ..ExperimentConfig::default()
        };
        let p = dir.path().join("m.json");
        crate::io::write_json(&p, &serde_json::json!({ "config": cfg, "other": 1 })).unwrap();
        assert_eq!(ExperimentConfig::load(&p).unwrap(), cfg);
        let q = dir.path().join("c.json");
        crate::io::write_json(&q, &cfg).unwrap();
        assert_eq!(ExperimentConfig::load(&q).unwrap(), cfg);
    }

    #[test]
    fn derived_seeds_differ_by_stream() {
        let a: Vec<u64> = (0..50).map(|s| derive_seed(7, s)).collect();
        let mut b = a.clone();
        b.sort_unstable();
        b.dedup();
        assert_eq!(b.len(), 50);
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }
}
