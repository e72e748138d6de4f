//! Trains STF with a certainty filter at several thresholds and reports
//! test Arg-C F1 and how many pseudo pairs each threshold keeps.
//!
//!     cargo run --release --example threshold_sweep -- [config.toml]

use stf_ee::config::RunConfig;
use stf_ee::corpus::generate_synthetic;
use stf_ee::eval::{evaluate_model, sweep_report, SweepRow};
use stf_ee::pipeline::{continue_from, train_scorer, train_stage1, RunData};
use stf_ee::stf::{generate_pseudo_labels, threshold_filter, Method};

fn main() -> stf_ee::Result<()> {
    env_logger::init();
    let cfg = match std::env::args().nth(1) {
        Some(p) => RunConfig::load(p.as_ref())?,
        None => RunConfig::default(),
    }
    .finalize()?;
    let data = RunData::from_synthetic(generate_synthetic(&cfg.synth)?);
    let (scorer, _) = train_scorer(&data, &cfg.scorer)?;
    let (stage1, _) = train_stage1(&data, &cfg.extractor, &cfg.stf, None, "")?;
    let pool = generate_pseudo_labels(&stage1, &data.unlabeled, &scorer, &data.amr)?;

    let mut rows = Vec::new();
    for s in [0.5, 0.6, 0.7, 0.8, 0.9] {
        let mut stf = cfg.stf.clone();
        stf.certainty_threshold = Some(s);
        let out = continue_from(&stage1, &data, &stf, Some(&scorer), Method::Stf, false, None, "")?;
        rows.push(SweepRow {
            threshold: s,
            f1: evaluate_model(&out.model, &data.test)?.1.f1,
            retained: threshold_filter(&pool, s)?.len(),
        });
    }
    println!("{} pseudo pairs before filtering\n", pool.len());
    print!("{}", sweep_report(rows).to_table());
    Ok(())
}
