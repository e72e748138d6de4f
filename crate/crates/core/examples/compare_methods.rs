//! Supervised continuation vs vanilla self-training vs STF on the
//! synthetic corpus, over several seeds.
//!
//!     cargo run --release --example compare_methods -- [config.toml] [seeds]
//!
//! `seeds` is a comma-separated list, default `1,2,3`.

use std::time::Instant;

use stf_ee::config::RunConfig;
use stf_ee::corpus::generate_synthetic;
use stf_ee::eval::average_compatibility;
use stf_ee::pipeline::{continue_from, flag_agreement, train_scorer, train_stage1, RunData};
use stf_ee::stf::Method;

fn main() -> stf_ee::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let base_cfg = match args.first() {
        Some(p) if p.ends_with(".toml") => RunConfig::load(p.as_ref())?,
        _ => RunConfig::default(),
    };
    let seeds: Vec<u64> = args
        .iter()
        .find(|a| !a.ends_with(".toml"))
        .map(|s| s.split(',').map(|x| x.parse().expect("seed")).collect())
        .unwrap_or_else(|| vec![1, 2, 3]);

    println!("seed  method         Tri-C   Arg-C   compat  secs");
    for seed in seeds {
        let mut cfg = base_cfg.clone();
        cfg.apply_seed(seed);
        let cfg = cfg.finalize()?;
        let data = RunData::from_synthetic(generate_synthetic(&cfg.synth)?);

        let t = Instant::now();
        let (scorer, _) = train_scorer(&data, &cfg.scorer)?;
        let agree = flag_agreement(&scorer, &data)?;
        println!("{seed:>4}  scorer agreement {:.3}  ({:.1}s)", agree.accuracy, t.elapsed().as_secs_f64());

        let t = Instant::now();
        let (stage1, _) = train_stage1(&data, &cfg.extractor, &cfg.stf, None, "")?;
        let c1 = average_compatibility(&stage1, &scorer, &data.heldout, &data.amr)?.mean;
        let (tri, arg) = stf_ee::eval::evaluate_model(&stage1, &data.test)?;
        println!(
            "{seed:>4}  {:<13} {:>6.2}  {:>6.2}  {:>6.3}  {:>5.1}",
            "stage1",
            100.0 * tri.f1,
            100.0 * arg.f1,
            c1,
            t.elapsed().as_secs_f64()
        );

        for method in [Method::Supervised, Method::SelfTraining, Method::Stf] {
            let t = Instant::now();
            let out = continue_from(&stage1, &data, &cfg.stf, Some(&scorer), method, false, None, "")?;
            let (tri, arg) = stf_ee::eval::evaluate_model(&out.model, &data.test)?;
            let c = average_compatibility(&out.model, &scorer, &data.heldout, &data.amr)?.mean;
            println!(
                "{seed:>4}  {:<13} {:>6.2}  {:>6.2}  {:>6.3}  {:>5.1}",
                method.name(),
                100.0 * tri.f1,
                100.0 * arg.f1,
                c,
                t.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
