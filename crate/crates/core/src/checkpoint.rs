//! Self-describing JSON checkpoints for extractors and scorers.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autograd::ParamStore;
use crate::error::{Error, Result};
use crate::event::{EventModel, ExtractorConfig, FeatureTemplate, LabelSchema};
use crate::nn::Vocab;
use crate::scorer::{CompatibilityScorer, ScorerConfig};
use crate::tensor::Tensor;

pub const FORMAT_TAG: &str = "stf-ee.ckpt.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum ModelSpec {
    Extractor {
        config: ExtractorConfig,
        templates: Vec<FeatureTemplate>,
    },
    Scorer {
        config: ScorerConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config_hash: String,
    pub seed: u64,
    pub epoch: Option<usize>,
    pub model: ModelSpec,
    pub schema: LabelSchema,
    pub vocab: Vocab,
    pub params: Vec<NamedTensor>,
}

fn named(store: &ParamStore) -> Vec<NamedTensor> {
    store
        .iter()
        .map(|(_, name, t)| NamedTensor {
            name: name.to_string(),
            rows: t.rows,
            cols: t.cols,
            data: t.data.clone(),
        })
        .collect()
}

fn to_store(params: &[NamedTensor]) -> Result<ParamStore> {
    let mut store = ParamStore::new();
    for p in params {
        if p.rows * p.cols != p.data.len() {
            return Err(Error::Checkpoint(format!("tensor {} has wrong length", p.name)));
        }
        if store.find(&p.name).is_some() {
            return Err(Error::Checkpoint(format!("duplicate tensor {}", p.name)));
        }
        store.add(p.name.clone(), Tensor::from_vec(p.rows, p.cols, p.data.clone()));
    }
    Ok(store)
}

/// SHA-256 over parameter names, shapes and the exact bits of every value.
pub fn params_hash(store: &ParamStore) -> String {
    let mut h = Sha256::new();
    for (_, name, t) in store.iter() {
        h.update(name.as_bytes());
        h.update((t.rows as u64).to_le_bytes());
        h.update((t.cols as u64).to_le_bytes());
        for x in &t.data {
            h.update(x.to_bits().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

impl Checkpoint {
    pub fn from_extractor(m: &EventModel, config_hash: &str, seed: u64, epoch: Option<usize>) -> Self {
        Self {
            format: FORMAT_TAG.into(),
            config_hash: config_hash.into(),
            seed,
            epoch,
            model: ModelSpec::Extractor {
                config: m.config.clone(),
                templates: m.templates().to_vec(),
            },
            schema: m.schema.clone(),
            vocab: m.vocab.clone(),
            params: named(&m.params),
        }
    }

    pub fn from_scorer(s: &CompatibilityScorer, config_hash: &str, seed: u64) -> Self {
        Self {
            format: FORMAT_TAG.into(),
            config_hash: config_hash.into(),
            seed,
            epoch: None,
            model: ModelSpec::Scorer {
                config: s.config.clone(),
            },
            schema: s.schema.clone(),
            vocab: s.vocab.clone(),
            params: named(&s.params),
        }
    }

    pub fn to_extractor(&self) -> Result<EventModel> {
        let ModelSpec::Extractor { config, templates } = &self.model else {
            return Err(Error::Checkpoint("not an extractor checkpoint".into()));
        };
        let mut m = EventModel::new(
            self.schema.clone(),
            self.vocab.clone(),
            config.clone(),
            templates.clone(),
        );
        m.load_params(&to_store(&self.params)?)?;
        Ok(m)
    }

    pub fn to_scorer(&self) -> Result<CompatibilityScorer> {
        let ModelSpec::Scorer { config } = &self.model else {
            return Err(Error::Checkpoint("not a scorer checkpoint".into()));
        };
        let mut s = CompatibilityScorer::new(self.schema.clone(), self.vocab.clone(), config.clone())?;
        s.load_params(&to_store(&self.params)?)?;
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c: Checkpoint = serde_json::from_slice(&fs::read(path)?)?;
        if c.format != FORMAT_TAG {
            return Err(Error::Checkpoint(format!("unknown format tag `{}`", c.format)));
        }
        Ok(c)
    }

    pub fn params_hash(&self) -> Result<String> {
        Ok(params_hash(&to_store(&self.params)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> EventModel {
        let schema = LabelSchema::new(vec!["A".into()], vec!["R".into(), "S".into()]).unwrap();
        let vocab = Vocab::from_words(vec!["x".into(), "y".into()]);
        let cfg = ExtractorConfig {
            d_model: 4,
            layers: 1,
            max_len: 8,
            seed: 2,
        };
        EventModel::with_default_features(schema, vocab, cfg)
    }

    #[test]
    fn extractor_round_trip_is_bit_exact() {
        let m = model();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt.json");
        Checkpoint::from_extractor(&m, "h", 1, Some(3)).save(&p).unwrap();
        let c = Checkpoint::load(&p).unwrap();
        assert_eq!(c.epoch, Some(3));
        let back = c.to_extractor().unwrap();
        assert_eq!(params_hash(&back.params), params_hash(&m.params));
        assert!(c.to_scorer().is_err());
    }

    #[test]
    fn rejects_foreign_format() {
        let m = model();
        let mut c = Checkpoint::from_extractor(&m, "h", 1, None);
        c.format = "other".into();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        c.save(&p).unwrap();
        assert!(matches!(Checkpoint::load(&p), Err(Error::Checkpoint(_))));
    }
}
