//! End-to-end runs shared by the command line, the examples and the
//! acceptance suite.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::amr::AmrGraph;
use crate::config::{
    RunConfig, AMR_FILE, FLAGS_FILE, HELDOUT_FILE, LABELED_FILE, TEST_FILE, UNLABELED_FILE,
    UNLABELED_GOLD_FILE,
};
use crate::corpus::{
    load_amr_bundle, load_labeled, read_jsonl, save_amr_bundle, save_labeled, write_jsonl,
    FlaggedPrediction, LabeledSentence, SyntheticCorpus,
};
use crate::error::{Error, Result};
use crate::eval::{average_compatibility, evaluate_model, scorer_agreement, Agreement, Prf};
use crate::event::{EventModel, ExtractorConfig, LabelSchema, NULL_ROLE};
use crate::nn::Vocab;
use crate::scorer::{training_set, CompatibilityScorer, ScorerConfig, ScorerTrainReport};
use crate::stf::{Feedback, Method, RunInputs, StfConfig, TrainOutcome, Trainer};

pub const SCHEMA_FILE: &str = "schema.json";

/// Everything a run reads.
#[derive(Debug, Clone)]
pub struct RunData {
    pub schema: LabelSchema,
    pub labeled: Vec<LabeledSentence>,
    pub unlabeled: Vec<LabeledSentence>,
    /// Annotations of the unlabeled pool when known; only oracle feedback
    /// reads them.
    pub unlabeled_gold: Option<Vec<LabeledSentence>>,
    pub heldout: Vec<LabeledSentence>,
    pub test: Vec<LabeledSentence>,
    pub amr: BTreeMap<String, AmrGraph>,
    pub flags: Vec<FlaggedPrediction>,
}

impl RunData {
    pub fn from_synthetic(c: SyntheticCorpus) -> Self {
        Self {
            schema: c.schema,
            labeled: c.labeled,
            unlabeled: c.unlabeled,
            unlabeled_gold: Some(c.unlabeled_gold),
            heldout: c.heldout,
            test: c.test,
            amr: c.amr,
            flags: c.gold_flags,
        }
    }

    /// Writes the files [`RunData::load`] reads.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        save_labeled(&dir.join(LABELED_FILE), &self.labeled)?;
        save_labeled(&dir.join(UNLABELED_FILE), &self.unlabeled)?;
        if let Some(g) = &self.unlabeled_gold {
            save_labeled(&dir.join(UNLABELED_GOLD_FILE), g)?;
        }
        save_labeled(&dir.join(HELDOUT_FILE), &self.heldout)?;
        save_labeled(&dir.join(TEST_FILE), &self.test)?;
        write_jsonl(&dir.join(FLAGS_FILE), &self.flags)?;
        let tokens = self
            .labeled
            .iter()
            .chain(&self.unlabeled)
            .chain(&self.heldout)
            .chain(&self.test)
            .map(|s| (s.sent_id.clone(), s.tokens.clone()))
            .collect();
        save_amr_bundle(&dir.join(AMR_FILE), &self.amr, &tokens)?;
        std::fs::write(dir.join(SCHEMA_FILE), serde_json::to_vec_pretty(&self.schema)?)?;
        Ok(())
    }

    /// Loads the files named by `cfg`. Optional inputs that are absent
    /// load as empty; the schema comes from `schema.json` next to the
    /// labeled file or is derived from the labeled data.
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        cfg.check_paths()?;
        let labeled_path = cfg.labeled_path();
        if !labeled_path.exists() {
            return Err(Error::Config(format!(
                "labeled data {} not found; run gen-data or set paths.labeled",
                labeled_path.display()
            )));
        }
        let labeled = load_labeled(&labeled_path)?;
        let optional = |p: std::path::PathBuf| -> Result<Vec<LabeledSentence>> {
            if p.exists() {
                load_labeled(&p)
            } else {
                Ok(Vec::new())
            }
        };
        let unlabeled = optional(cfg.unlabeled_path())?;
        let heldout = optional(cfg.heldout_path())?;
        let test = optional(cfg.test_path())?;
        let gold_path = cfg.data_dir().join(UNLABELED_GOLD_FILE);
        let unlabeled_gold = if gold_path.exists() { Some(load_labeled(&gold_path)?) } else { None };
        let amr = if cfg.amr_path().exists() {
            load_amr_bundle(&cfg.amr_path())?
        } else {
            BTreeMap::new()
        };
        let flags = if cfg.flags_path().exists() {
            read_jsonl(&cfg.flags_path())?
        } else {
            Vec::new()
        };
        let schema_path = labeled_path.with_file_name(SCHEMA_FILE);
        let schema = if schema_path.exists() {
            serde_json::from_slice(&std::fs::read(&schema_path)?)?
        } else {
            derive_schema(&labeled)?
        };
        Ok(Self {
            schema,
            labeled,
            unlabeled,
            unlabeled_gold,
            heldout,
            test,
            amr,
            flags,
        })
    }

    /// Vocabulary over every sentence the models train on.
    pub fn vocab(&self) -> Vocab {
        Vocab::build(self.labeled.iter().chain(&self.unlabeled).map(|s| s.tokens.as_slice()))
    }

    pub fn inputs(&self) -> RunInputs<'_> {
        RunInputs {
            labeled: &self.labeled,
            unlabeled: &self.unlabeled,
            amr: &self.amr,
            dev: &self.heldout,
            heldout: &self.heldout,
        }
    }
}

/// Sorted distinct event types and roles of `sentences`.
pub fn derive_schema(sentences: &[LabeledSentence]) -> Result<LabelSchema> {
    let mut types = std::collections::BTreeSet::new();
    let mut roles = std::collections::BTreeSet::new();
    for s in sentences {
        for ev in &s.events {
            types.insert(ev.trigger.event_type.clone());
            for a in &ev.args {
                if a.role != NULL_ROLE {
                    roles.insert(a.role.clone());
                }
            }
        }
    }
    LabelSchema::new(types.into_iter().collect(), roles.into_iter().collect())
}

pub fn new_extractor(data: &RunData, config: &ExtractorConfig) -> EventModel {
    EventModel::with_default_features(data.schema.clone(), data.vocab(), config.clone())
}

/// Trains a scorer on gold positives and role-swap negatives from the
/// labeled set.
pub fn train_scorer(data: &RunData, config: &ScorerConfig) -> Result<(CompatibilityScorer, ScorerTrainReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e6);
    let amr = config.use_amr.then_some(&data.amr);
    let examples = training_set(&data.labeled, &data.schema, amr, &mut rng)?;
    let mut scorer = CompatibilityScorer::new(data.schema.clone(), data.vocab(), config.clone())?;
    let report = scorer.train(&examples)?;
    Ok((scorer, report))
}

/// Agreement with the generator's correctness flags.
pub fn flag_agreement(scorer: &CompatibilityScorer, data: &RunData) -> Result<Agreement> {
    scorer_agreement(scorer, &data.flags, &data.heldout, &data.amr)
}

/// Final metrics of one trained extractor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub method: String,
    pub config_hash: String,
    pub seed: u64,
    pub tri_c: Prf,
    pub arg_c: Prf,
    /// Held-out mean compatibility under the run's scorer.
    pub mean_compat: Option<f64>,
    pub epochs: usize,
}

pub fn method_metrics(
    method: &str,
    model: &EventModel,
    data: &RunData,
    scorer: Option<&CompatibilityScorer>,
    config_hash: &str,
    seed: u64,
    epochs: usize,
) -> Result<MethodMetrics> {
    let eval_set = if data.test.is_empty() { &data.heldout } else { &data.test };
    let (tri_c, arg_c) = evaluate_model(model, eval_set)?;
    let mean_compat = match scorer {
        Some(sc) if !data.heldout.is_empty() => Some(average_compatibility(model, sc, &data.heldout, &data.amr)?.mean),
        _ => None,
    };
    Ok(MethodMetrics {
        method: method.into(),
        config_hash: config_hash.into(),
        seed,
        tri_c,
        arg_c,
        mean_compat,
        epochs,
    })
}

/// Runs stage 2 with `method` from a copy of `stage1`. For STF the
/// feedback comes from `scorer`, or from the pool's gold annotations when
/// `oracle` is set.
#[allow(clippy::too_many_arguments)]
pub fn continue_from(
    stage1: &EventModel,
    data: &RunData,
    stf: &StfConfig,
    scorer: Option<&CompatibilityScorer>,
    method: Method,
    oracle: bool,
    checkpoint_dir: Option<&Path>,
    config_hash: &str,
) -> Result<TrainOutcome> {
    let mut model = stage1.clone();
    let mut t = Trainer::new(stf, data.inputs());
    t.scorer = scorer;
    t.checkpoint_dir = checkpoint_dir;
    t.config_hash = config_hash;
    if oracle {
        let gold = data
            .unlabeled_gold
            .as_deref()
            .ok_or_else(|| Error::Config("oracle feedback needs unlabeled gold annotations".into()))?;
        t.feedback = Some(Feedback::Oracle(gold));
    }
    t.stage2(&mut model, method)
}

/// Stage 1 alone.
pub fn train_stage1(
    data: &RunData,
    extractor: &ExtractorConfig,
    stf: &StfConfig,
    checkpoint_dir: Option<&Path>,
    config_hash: &str,
) -> Result<(EventModel, TrainOutcome)> {
    let mut model = new_extractor(data, extractor);
    let mut t = Trainer::new(stf, data.inputs());
    t.checkpoint_dir = checkpoint_dir;
    t.config_hash = config_hash;
    let out = t.stage1(&mut model)?;
    Ok((model, out))
}
