//! Trains the event extractor on labeled synthetic data only and prints
//! test metrics and one decoded sentence.
//!
//!     cargo run --release --example train_extractor -- [config.toml]

use stf_ee::config::RunConfig;
use stf_ee::corpus::generate_synthetic;
use stf_ee::eval::evaluate_model;
use stf_ee::pipeline::{train_stage1, RunData};

fn main() -> stf_ee::Result<()> {
    env_logger::init();
    let cfg = match std::env::args().nth(1) {
        Some(p) => RunConfig::load(p.as_ref())?,
        None => RunConfig::default(),
    }
    .finalize()?;
    let data = RunData::from_synthetic(generate_synthetic(&cfg.synth)?);
    println!(
        "{} labeled, {} test sentences, {} event types, {} roles",
        data.labeled.len(),
        data.test.len(),
        data.schema.n_types(),
        data.schema.n_roles()
    );

    let (model, out) = train_stage1(&data, &cfg.extractor, &cfg.stf, None, "")?;
    for e in &out.log {
        let dev = e.dev_metrics.as_ref().map(|d| format!("dev Arg-C {:.3}", d.arg_c)).unwrap_or_default();
        println!("epoch {:>3}  loss {:>9.4}  {dev}", e.epoch, e.labeled_loss);
    }
    let (tri, arg) = evaluate_model(&model, &data.test)?;
    println!("test Tri-C F1 {:.3}  Arg-C F1 {:.3}", tri.f1, arg.f1);

    let s = &data.test[0];
    let g = model.predict(&s.tokens)?;
    println!("\n{}", s.tokens.join(" "));
    for (i, t) in g.triggers.iter().enumerate() {
        let word = s.tokens[t.span.start..t.span.end].join(" ");
        println!("  {} [{word}] p={:.2}", data.schema.type_name(t.event_type), t.prob);
        for a in g.arguments.iter().filter(|a| a.trigger == i) {
            let arg = s.tokens[a.span.start..a.span.end].join(" ");
            println!("    {} = {arg} p={:.2}", data.schema.role_name(a.role), a.prob);
        }
    }
    Ok(())
}
