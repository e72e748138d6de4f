//! Run configuration: one TOML document with a section per module.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::SynthConfig;
use crate::error::{Error, Result};
use crate::event::ExtractorConfig;
use crate::scorer::ScorerConfig;
use crate::stf::StfConfig;

/// Input locations. Unset files resolve inside `data_dir`, which defaults
/// to `<output.dir>/data`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub data_dir: Option<PathBuf>,
    pub labeled: Option<PathBuf>,
    pub unlabeled: Option<PathBuf>,
    pub heldout: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub amr: Option<PathBuf>,
    pub flags: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write one extractor checkpoint per training epoch.
    pub epoch_checkpoints: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("runs/default"),
            epoch_checkpoints: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// When set, overrides the seed of every section.
    pub seed: Option<u64>,
    pub synth: SynthConfig,
    pub extractor: ExtractorConfig,
    pub scorer: ScorerConfig,
    pub stf: StfConfig,
    pub paths: PathsConfig,
    pub output: OutputConfig,
}

pub const LABELED_FILE: &str = "labeled.jsonl";
pub const UNLABELED_FILE: &str = "unlabeled.jsonl";
pub const HELDOUT_FILE: &str = "heldout.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const AMR_FILE: &str = "amr.penman";
pub const FLAGS_FILE: &str = "gold_flags.jsonl";
pub const UNLABELED_GOLD_FILE: &str = "unlabeled_gold.jsonl";

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Pushes the top-level seed into every section.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.synth.seed = seed;
        self.extractor.seed = seed;
        self.scorer.seed = seed;
        self.stf.seed = seed;
    }

    /// Applies the top-level seed, if any, and validates every section.
    pub fn finalize(mut self) -> Result<Self> {
        if let Some(s) = self.seed {
            self.apply_seed(s);
        }
        self.synth.validate()?;
        let (a, b) = (self.synth.label_noise_rate, self.stf.label_noise_rate);
        if a != 0.0 && b != 0.0 && a != b {
            return Err(Error::Config(format!(
                "synth.label_noise_rate = {a} conflicts with stf.label_noise_rate = {b}"
            )));
        }
        self.stf.label_noise_rate = a.max(b);
        self.stf.validate()?;
        if self.extractor.d_model == 0 || self.scorer.d_model == 0 {
            return Err(Error::Config("d_model must be positive".into()));
        }
        Ok(self)
    }

    /// Seed recorded in artifacts.
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(self.stf.seed)
    }

    /// SHA-256 of the canonical JSON form of the sections that affect
    /// results. Paths and output settings are left out.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(&(&self.seed, &self.synth, &self.extractor, &self.scorer, &self.stf))
            .expect("config serialises");
        hex::encode(Sha256::digest(json))
    }

    pub fn data_dir(&self) -> PathBuf {
        self.paths
            .data_dir
            .clone()
            .unwrap_or_else(|| self.output.dir.join("data"))
    }

    fn resolve(&self, set: &Option<PathBuf>, file: &str) -> PathBuf {
        set.clone().unwrap_or_else(|| self.data_dir().join(file))
    }

    pub fn labeled_path(&self) -> PathBuf {
        self.resolve(&self.paths.labeled, LABELED_FILE)
    }
    pub fn unlabeled_path(&self) -> PathBuf {
        self.resolve(&self.paths.unlabeled, UNLABELED_FILE)
    }
    pub fn heldout_path(&self) -> PathBuf {
        self.resolve(&self.paths.heldout, HELDOUT_FILE)
    }
    pub fn test_path(&self) -> PathBuf {
        self.resolve(&self.paths.test, TEST_FILE)
    }
    pub fn amr_path(&self) -> PathBuf {
        self.resolve(&self.paths.amr, AMR_FILE)
    }
    pub fn flags_path(&self) -> PathBuf {
        self.resolve(&self.paths.flags, FLAGS_FILE)
    }

    /// Every explicitly configured path must exist.
    pub fn check_paths(&self) -> Result<()> {
        let p = &self.paths;
        for (name, path) in [
            ("data_dir", &p.data_dir),
            ("labeled", &p.labeled),
            ("unlabeled", &p.unlabeled),
            ("heldout", &p.heldout),
            ("test", &p.test),
            ("amr", &p.amr),
            ("flags", &p.flags),
        ] {
            if let Some(path) = path {
                if !path.exists() {
                    return Err(Error::Config(format!("paths.{name} = {} does not exist", path.display())));
                }
            }
        }
        Ok(())
    }
}
