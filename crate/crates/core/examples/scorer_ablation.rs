//! Trains the compatibility scorer with and without AMR paths and reports
//! agreement with the generator's correctness flags.
//!
//!     cargo run --release --example scorer_ablation -- [config.toml] [seeds]

use stf_ee::config::RunConfig;
use stf_ee::corpus::generate_synthetic;
use stf_ee::pipeline::{flag_agreement, train_scorer, RunData};

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

    let (mut sum_amr, mut sum_plain) = (0.0, 0.0);
    for &seed in &seeds {
        let mut cfg = base_cfg.clone();
        cfg.apply_seed(seed);
        let cfg = cfg.finalize()?;
        let data = RunData::from_synthetic(generate_synthetic(&cfg.synth)?);
        let mut plain_cfg = cfg.scorer.clone();
        plain_cfg.use_amr = false;
        let (with_amr, _) = train_scorer(&data, &cfg.scorer)?;
        let (plain, _) = train_scorer(&data, &plain_cfg)?;
        let a = flag_agreement(&with_amr, &data)?;
        let p = flag_agreement(&plain, &data)?;
        println!(
            "seed {seed}: with AMR {:.1}%  (F1 {:.1})   without {:.1}%  (F1 {:.1})",
            100.0 * a.accuracy,
            100.0 * a.prf.f1,
            100.0 * p.accuracy,
            100.0 * p.prf.f1
        );
        sum_amr += a.accuracy;
        sum_plain += p.accuracy;
    }
    let n = seeds.len() as f64;
    println!("mean: with AMR {:.1}%  without {:.1}%", 100.0 * sum_amr / n, 100.0 * sum_plain / n);
    Ok(())
}
