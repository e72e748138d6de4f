//! Labeled event data, AMR bundles and the synthetic corpus generator.

mod io;
mod synth;
mod types;

pub use io::{
    apply_alignments, load_amr_bundle, load_labeled, parse_amr_bundle, read_jsonl,
    save_amr_bundle, save_labeled, write_jsonl,
};
pub use synth::{
    generate_synthetic, inject_amr_noise, role_relation_group, FlaggedPrediction, SynthConfig,
    SyntheticCorpus, MAX_ROLES,
};
pub use types::{ArgumentAnnotation, EventMention, LabeledSentence, TriggerAnnotation};
