//! End to end: scorer, supervised warm-up, scored pseudo labels, then
//! feedback-weighted self-training.
//!
//!     cargo run --release --example stf_pipeline -- [config.toml]

use stf_ee::config::RunConfig;
use stf_ee::corpus::generate_synthetic;
use stf_ee::eval::{average_compatibility, evaluate_model};
use stf_ee::pipeline::{continue_from, train_scorer, train_stage1, RunData};
use stf_ee::stf::{generate_pseudo_labels, Method};

fn main() -> stf_ee::Result<()> {
    env_logger::init();
    let cfg = match std::env::args().nth(1) {
        Some(p) => RunConfig::load(p.as_ref())?,
        None => RunConfig::default(),
    }
    .finalize()?;
    let data = RunData::from_synthetic(generate_synthetic(&cfg.synth)?);

    let (scorer, report) = train_scorer(&data, &cfg.scorer)?;
    println!(
        "scorer: loss {:.4} -> {:.4}, training accuracy {:.3}",
        report.initial_loss,
        report.curve.last().copied().unwrap_or(report.initial_loss),
        report.accuracy
    );

    let (stage1, _) = train_stage1(&data, &cfg.extractor, &cfg.stf, None, "")?;
    let pseudo = generate_pseudo_labels(&stage1, &data.unlabeled, &scorer, &data.amr)?;
    println!("\n{} pseudo pairs from {} unlabeled sentences", pseudo.len(), data.unlabeled.len());
    for p in pseudo.iter().take(6) {
        let s = &data.unlabeled[p.sentence];
        println!(
            "  {:<10} {:<12} -> {:<12} {:<10} c={:.2} w={:+.2}",
            data.schema.type_name(p.event_type),
            s.tokens[p.trigger.start..p.trigger.end].join(" "),
            s.tokens[p.argument.start..p.argument.end].join(" "),
            data.schema.role_name(p.role),
            p.compatibility,
            p.weight
        );
    }

    let out = continue_from(&stage1, &data, &cfg.stf, Some(&scorer), Method::Stf, false, None, "")?;
    println!("\nepoch  beta   pseudo  mean_c  dev Arg-C");
    for e in &out.log {
        println!(
            "{:>5}  {:.3}  {:>6}  {:>6}  {:>9}",
            e.epoch,
            e.beta,
            e.pseudo_count,
            e.mean_compatibility.map(|c| format!("{c:.3}")).unwrap_or_default(),
            e.dev_metrics.as_ref().map(|d| format!("{:.3}", d.arg_c)).unwrap_or_default()
        );
    }

    for (name, m) in [("stage 1", &stage1), ("stf", &out.model)] {
        let (tri, arg) = evaluate_model(m, &data.test)?;
        let c = average_compatibility(m, &scorer, &data.heldout, &data.amr)?.mean;
        println!("{name:<8} Tri-C {:.3}  Arg-C {:.3}  held-out compatibility {c:.3}", tri.f1, arg.f1);
    }
    Ok(())
}
