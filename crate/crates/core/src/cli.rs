//! Command-line front end. [`dispatch`] parses argv, runs one subcommand
//! and returns the process exit code.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::corpus::{generate_synthetic, load_labeled, read_jsonl, LabeledSentence};
use crate::error::{Error, Result};
use crate::eval::{
    f1_argument_classification, f1_trigger_classification, select_checkpoint, sweep_report,
    CheckpointRecord, SelectionCriterion, SweepRow,
};
use crate::event::{EventGraphPrediction, EventModel, LabelSchema};
use crate::pipeline::{
    continue_from, derive_schema, flag_agreement, method_metrics, train_scorer, MethodMetrics,
    RunData,
};
use crate::scorer::CompatibilityScorer;
use crate::stf::{predict_pool, score_predictions, threshold_filter, EpochLog, Feedback, Method, TrainOutcome};

pub const THREADS_ENV: &str = "STF_EE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "stf-ee", version, about = "Event extraction with AMR-compatibility feedback self-training")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true, value_name = "INT")]
    pub seed: Option<u64>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Only print results and errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CriterionArg {
    DevF1,
    AvgCompat,
}

impl From<CriterionArg> for SelectionCriterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::DevF1 => SelectionCriterion::DevF1,
            CriterionArg::AvgCompat => SelectionCriterion::AvgCompat,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic corpus into `<out>/data`.
    GenData,
    /// Stage-1 supervised training of the extractor.
    TrainEe,
    /// Train the compatibility scorer on the labeled set.
    TrainScorer {
        /// Train the path-free ablation instead.
        #[arg(long)]
        no_amr: bool,
    },
    /// Compatibility-feedback self-training from the stage-1 extractor.
    StfRun {
        /// Stage-1 checkpoint; defaults to `<out>/base/final.ckpt.json`,
        /// trained first when missing.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Scorer checkpoint; defaults to `<out>/scorer/scorer.ckpt.json`,
        /// trained first when missing.
        #[arg(long)]
        scorer: Option<PathBuf>,
        /// Use gold pool annotations as feedback instead of the scorer.
        #[arg(long)]
        oracle: bool,
        /// Certainty threshold; overrides `stf.certainty_threshold`.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Vanilla self-training from the stage-1 extractor.
    SelfTrain {
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Tri-C and Arg-C of predictions against gold annotations.
    Evaluate {
        /// Gold JSON Lines file.
        #[arg(long)]
        gold: PathBuf,
        /// Predicted JSON Lines file.
        #[arg(long, conflicts_with = "model", required_unless_present = "model")]
        pred: Option<PathBuf>,
        /// Extractor checkpoint to predict with.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// STF over a grid of certainty thresholds.
    SweepThreshold {
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.6, 0.7, 0.8, 0.9])]
        grid: Vec<f64>,
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        scorer: Option<PathBuf>,
    },
    /// Pick the best epoch checkpoint of a method run.
    SelectModel {
        /// Method directory, e.g. `<out>/stf`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum, default_value = "avg-compat")]
        criterion: CriterionArg,
    },
    /// Comparison table and plot series from a run directory.
    Report {
        /// Defaults to the output directory.
        #[arg(long)]
        run: Option<PathBuf>,
    },
}

/// Exit status of an error: 1 for invalid input or configuration, 2 for
/// failures while running.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::Schema { .. }
        | Error::UnknownLabel(_)
        | Error::DuplicateSentId(_)
        | Error::MalformedPenman { .. }
        | Error::MissingLogs(_)
        | Error::MissingAmr(_)
        | Error::OutOfRange(_)
        | Error::Checkpoint(_) => 1,
        _ => 2,
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    init_logging(cli.quiet);
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return exit_code(&e);
    }
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn init_logging(quiet: bool) {
    let level = if quiet { log::LevelFilter::Error } else { log::LevelFilter::Info };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .try_init();
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV}={v} is not a positive integer")))?;
    // A second call in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Resolved configuration plus the values every artifact records.
pub struct Context {
    pub config: RunConfig,
    pub hash: String,
    pub seed: u64,
    pub out: PathBuf,
    pub quiet: bool,
}

impl Context {
    pub fn from_cli(cli: &Cli) -> Result<Self> {
        let mut config = match &cli.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = cli.seed {
            config.seed = Some(s);
        }
        if let Some(o) = &cli.out {
            config.output.dir = o.clone();
        }
        let config = config.finalize()?;
        Ok(Self {
            hash: config.hash(),
            seed: config.seed(),
            out: config.output.dir.clone(),
            quiet: cli.quiet,
            config,
        })
    }

    fn dir(&self, name: &str) -> Result<PathBuf> {
        let d = self.out.join(name);
        fs::create_dir_all(&d)?;
        Ok(d)
    }

    fn stamp(&self) -> Stamp {
        Stamp {
            config_hash: self.hash.clone(),
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Stamp {
    config_hash: String,
    seed: u64,
}

/// Event-log line as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub config_hash: String,
    pub seed: u64,
    #[serde(flatten)]
    pub entry: EpochLog,
}

pub fn run(cli: &Cli) -> Result<()> {
    let ctx = Context::from_cli(cli)?;
    match &cli.command {
        Command::GenData => gen_data(&ctx),
        Command::TrainEe => {
            let data = RunData::load(&ctx.config)?;
            train_base(&ctx, &data).map(|_| ())
        }
        Command::TrainScorer { no_amr } => {
            let data = RunData::load(&ctx.config)?;
            scorer_command(&ctx, &data, !no_amr).map(|_| ())
        }
        Command::StfRun {
            init,
            scorer,
            oracle,
            threshold,
        } => {
            let data = RunData::load(&ctx.config)?;
            let base = load_or_train_base(&ctx, &data, init.as_deref())?;
            let sc = load_or_train_scorer(&ctx, &data, scorer.as_deref())?;
            let mut stf = ctx.config.stf.clone();
            if let Some(s) = threshold {
                stf.certainty_threshold = Some(*s);
                stf.validate()?;
            }
            let dir = ctx.dir(Method::Stf.name())?;
            let out = continue_from(
                &base,
                &data,
                &stf,
                Some(&sc),
                Method::Stf,
                *oracle,
                checkpoint_dir(&ctx, &dir)?.as_deref(),
                &ctx.hash,
            )?;
            write_method(&ctx, &dir, Method::Stf.name(), &out, &data, Some(&sc))
        }
        Command::SelfTrain { init } => {
            let data = RunData::load(&ctx.config)?;
            let base = load_or_train_base(&ctx, &data, init.as_deref())?;
            let sc = existing_scorer(&ctx)?;
            let dir = ctx.dir(Method::SelfTraining.name())?;
            let out = continue_from(
                &base,
                &data,
                &ctx.config.stf,
                sc.as_ref(),
                Method::SelfTraining,
                false,
                checkpoint_dir(&ctx, &dir)?.as_deref(),
                &ctx.hash,
            )?;
            write_method(&ctx, &dir, Method::SelfTraining.name(), &out, &data, sc.as_ref())
        }
        Command::Evaluate { gold, pred, model } => evaluate(gold, pred.as_deref(), model.as_deref()),
        Command::SweepThreshold { grid, init, scorer } => {
            let data = RunData::load(&ctx.config)?;
            sweep(&ctx, &data, grid, init.as_deref(), scorer.as_deref())
        }
        Command::SelectModel { run, criterion } => select_model(run, (*criterion).into()),
        Command::Report { run } => {
            let dir = run.clone().unwrap_or_else(|| ctx.out.clone());
            let r = report(&dir)?;
            fs::write(dir.join("report.md"), &r.markdown)?;
            fs::write(dir.join("report.csv"), &r.csv)?;
            fs::write(dir.join("series.csv"), &r.series)?;
            print!("{}", r.markdown);
            Ok(())
        }
    }
}

fn progress(ctx: &Context, msg: impl AsRef<str>) {
    if !ctx.quiet {
        log::info!("{}", msg.as_ref());
    }
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(v)?)?;
    Ok(())
}

fn gen_data(ctx: &Context) -> Result<()> {
    let corpus = generate_synthetic(&ctx.config.synth)?;
    let dir = ctx.config.data_dir();
    let data = RunData::from_synthetic(corpus);
    data.save(&dir)?;
    #[derive(Serialize)]
    struct Manifest<'a> {
        #[serde(flatten)]
        stamp: Stamp,
        labeled: usize,
        unlabeled: usize,
        heldout: usize,
        test: usize,
        amr_graphs: usize,
        gold_flags: usize,
        synth: &'a crate::corpus::SynthConfig,
    }
    write_json(
        &dir.join("manifest.json"),
        &Manifest {
            stamp: ctx.stamp(),
            labeled: data.labeled.len(),
            unlabeled: data.unlabeled.len(),
            heldout: data.heldout.len(),
            test: data.test.len(),
            amr_graphs: data.amr.len(),
            gold_flags: data.flags.len(),
            synth: &ctx.config.synth,
        },
    )?;
    println!(
        "wrote {} labeled, {} unlabeled, {} held-out, {} test sentences to {}",
        data.labeled.len(),
        data.unlabeled.len(),
        data.heldout.len(),
        data.test.len(),
        dir.display()
    );
    Ok(())
}

fn checkpoint_dir(ctx: &Context, dir: &Path) -> Result<Option<PathBuf>> {
    if !ctx.config.output.epoch_checkpoints {
        return Ok(None);
    }
    let d = dir.join("checkpoints");
    fs::create_dir_all(&d)?;
    Ok(Some(d))
}

const BASE_DIR: &str = "base";
const FINAL_CKPT: &str = "final.ckpt.json";
const BEST_CKPT: &str = "best.ckpt.json";
const LOG_FILE: &str = "log.jsonl";
const METRICS_FILE: &str = "metrics.json";
const SCORER_CKPT: &str = "scorer.ckpt.json";

fn train_base(ctx: &Context, data: &RunData) -> Result<EventModel> {
    progress(ctx, format!("stage 1: {} epochs on {} sentences", ctx.config.stf.stage1_epochs, data.labeled.len()));
    let dir = ctx.dir(BASE_DIR)?;
    let (model, out) = crate::pipeline::train_stage1(
        data,
        &ctx.config.extractor,
        &ctx.config.stf,
        checkpoint_dir(ctx, &dir)?.as_deref(),
        &ctx.hash,
    )?;
    let sc = existing_scorer(ctx)?;
    write_method(ctx, &dir, Method::Supervised.name(), &out, data, sc.as_ref())?;
    Ok(model)
}

fn load_or_train_base(ctx: &Context, data: &RunData, init: Option<&Path>) -> Result<EventModel> {
    let path = init.map(Path::to_path_buf).unwrap_or_else(|| ctx.out.join(BASE_DIR).join(FINAL_CKPT));
    if !path.exists() {
        if init.is_some() {
            return Err(Error::Config(format!("--init {} does not exist", path.display())));
        }
        return train_base(ctx, data);
    }
    let ckpt = Checkpoint::load(&path)?;
    if ckpt.config_hash != ctx.hash {
        log::warn!("{} was trained under config {}", path.display(), ckpt.config_hash);
    }
    let m = ckpt.to_extractor()?;
    check_compatible(&m.schema, &data.schema, &path)?;
    progress(ctx, format!("loaded stage-1 extractor from {}", path.display()));
    Ok(m)
}

fn check_compatible(a: &LabelSchema, b: &LabelSchema, path: &Path) -> Result<()> {
    if a != b {
        return Err(Error::Checkpoint(format!("{} uses a different label schema", path.display())));
    }
    Ok(())
}

fn existing_scorer(ctx: &Context) -> Result<Option<CompatibilityScorer>> {
    let p = ctx.out.join("scorer").join(SCORER_CKPT);
    if p.exists() {
        Ok(Some(Checkpoint::load(&p)?.to_scorer()?))
    } else {
        Ok(None)
    }
}

fn load_or_train_scorer(ctx: &Context, data: &RunData, path: Option<&Path>) -> Result<CompatibilityScorer> {
    match path {
        Some(p) => {
            let s = Checkpoint::load(p)?.to_scorer()?;
            check_compatible(&s.schema, &data.schema, p)?;
            Ok(s)
        }
        None => match existing_scorer(ctx)? {
            Some(s) => Ok(s),
            None => scorer_command(ctx, data, true),
        },
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ScorerMetrics {
    #[serde(flatten)]
    stamp: Stamp,
    use_amr: bool,
    initial_loss: f64,
    final_loss: Option<f64>,
    train_accuracy: f64,
    agreement: Option<crate::eval::Agreement>,
}

fn scorer_command(ctx: &Context, data: &RunData, use_amr: bool) -> Result<CompatibilityScorer> {
    let mut cfg = ctx.config.scorer.clone();
    cfg.use_amr = use_amr;
    progress(ctx, format!("training scorer (use_amr = {use_amr}) for {} epochs", cfg.epochs));
    let (scorer, rep) = train_scorer(data, &cfg)?;
    let dir = ctx.dir(if use_amr { "scorer" } else { "scorer_no_amr" })?;
    Checkpoint::from_scorer(&scorer, &ctx.hash, ctx.seed).save(&dir.join(SCORER_CKPT))?;
    let agreement = if data.flags.is_empty() { None } else { Some(flag_agreement(&scorer, data)?) };
    let m = ScorerMetrics {
        stamp: ctx.stamp(),
        use_amr,
        initial_loss: rep.initial_loss,
        final_loss: rep.curve.last().copied(),
        train_accuracy: rep.accuracy,
        agreement,
    };
    write_json(&dir.join(METRICS_FILE), &m)?;
    match agreement {
        Some(a) => println!("scorer agreement accuracy {:.3} over {} flagged predictions", a.accuracy, a.n),
        None => println!("scorer train accuracy {:.3}", rep.accuracy),
    }
    Ok(scorer)
}

fn write_method(
    ctx: &Context,
    dir: &Path,
    method: &str,
    out: &TrainOutcome,
    data: &RunData,
    scorer: Option<&CompatibilityScorer>,
) -> Result<()> {
    let mut log = String::new();
    for entry in &out.log {
        let line = LogLine {
            config_hash: ctx.hash.clone(),
            seed: ctx.seed,
            entry: entry.clone(),
        };
        log.push_str(&serde_json::to_string(&line)?);
        log.push('\n');
    }
    fs::write(dir.join(LOG_FILE), log)?;
    Checkpoint::from_extractor(&out.model, &ctx.hash, ctx.seed, Some(out.log.len())).save(&dir.join(FINAL_CKPT))?;
    Checkpoint::from_extractor(&out.best, &ctx.hash, ctx.seed, None).save(&dir.join(BEST_CKPT))?;
    let m = method_metrics(method, &out.model, data, scorer, &ctx.hash, ctx.seed, out.log.len())?;
    write_json(&dir.join(METRICS_FILE), &m)?;
    println!(
        "{method}: Tri-C F1 {:.3}  Arg-C F1 {:.3}{}",
        m.tri_c.f1,
        m.arg_c.f1,
        m.mean_compat.map(|c| format!("  mean_compat {c:.3}")).unwrap_or_default()
    );
    Ok(())
}

fn evaluate(gold: &Path, pred: Option<&Path>, model: Option<&Path>) -> Result<()> {
    let gold = load_labeled(gold)?;
    let (schema, pred_graphs) = match (pred, model) {
        (Some(p), _) => {
            let pred = load_labeled(p)?;
            let by_id: BTreeMap<&str, &LabeledSentence> = pred.iter().map(|s| (s.sent_id.as_str(), s)).collect();
            let mut all = gold.clone();
            all.extend(pred.iter().cloned());
            let schema = derive_schema(&all)?;
            let graphs = gold
                .iter()
                .map(|g| match by_id.get(g.sent_id.as_str()) {
                    Some(p) => EventGraphPrediction::from_gold(p, &schema),
                    None => Ok(EventGraphPrediction::default()),
                })
                .collect::<Result<Vec<_>>>()?;
            (schema, graphs)
        }
        (None, Some(m)) => {
            let model = Checkpoint::load(m)?.to_extractor()?;
            let graphs = predict_pool(&model, &gold)?;
            (model.schema.clone(), graphs)
        }
        (None, None) => return Err(Error::Config("evaluate needs --pred or --model".into())),
    };
    let gold_graphs = gold
        .iter()
        .map(|g| EventGraphPrediction::from_gold(g, &schema))
        .collect::<Result<Vec<_>>>()?;
    let tri = f1_trigger_classification(&pred_graphs, &gold_graphs)?;
    let arg = f1_argument_classification(&pred_graphs, &gold_graphs)?;
    for (name, p) in [("Tri-C", tri), ("Arg-C", arg)] {
        println!("{name}  P {:.3}  R {:.3}  F1 {:.3}", p.precision, p.recall, p.f1);
    }
    Ok(())
}

fn sweep(
    ctx: &Context,
    data: &RunData,
    grid: &[f64],
    init: Option<&Path>,
    scorer: Option<&Path>,
) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config("empty threshold grid".into()));
    }
    let base = load_or_train_base(ctx, data, init)?;
    let sc = load_or_train_scorer(ctx, data, scorer)?;
    // Retained counts come from one pseudo-label pool so that they are
    // comparable across thresholds.
    let preds = predict_pool(&base, &data.unlabeled)?;
    let (samples, _) = score_predictions(&preds, &data.unlabeled, &data.schema, Feedback::Scorer(&sc), &data.amr)?;
    let dir = ctx.dir("sweep")?;
    let mut rows = Vec::with_capacity(grid.len());
    for &s in grid {
        let retained = threshold_filter(&samples, s)?.len();
        let mut stf = ctx.config.stf.clone();
        stf.certainty_threshold = Some(s);
        stf.validate()?;
        progress(ctx, format!("threshold {s}: {retained} of {} samples retained", samples.len()));
        let out = continue_from(&base, data, &stf, Some(&sc), Method::Stf, false, None, &ctx.hash)?;
        let m = method_metrics("stf", &out.model, data, Some(&sc), &ctx.hash, ctx.seed, out.log.len())?;
        rows.push(SweepRow {
            threshold: s,
            f1: m.arg_c.f1,
            retained,
        });
    }
    let rep = sweep_report(rows);
    let header = format!("# config_hash={} seed={}\n", ctx.hash, ctx.seed);
    fs::write(dir.join("sweep.csv"), format!("{header}{}", rep.to_csv()))?;
    #[derive(Serialize)]
    struct SweepFile<'a> {
        #[serde(flatten)]
        stamp: Stamp,
        total_samples: usize,
        rows: &'a [SweepRow],
    }
    write_json(
        &dir.join("sweep.json"),
        &SweepFile {
            stamp: ctx.stamp(),
            total_samples: samples.len(),
            rows: &rep.rows,
        },
    )?;
    fs::write(dir.join("sweep.txt"), rep.to_table())?;
    print!("{}", rep.to_csv());
    Ok(())
}

/// Reads a method directory's event log.
pub fn read_log(dir: &Path) -> Result<Vec<LogLine>> {
    let p = dir.join(LOG_FILE);
    if !p.exists() {
        return Err(Error::MissingLogs(p));
    }
    read_jsonl(&p)
}

fn select_model(run: &Path, criterion: SelectionCriterion) -> Result<()> {
    let log = read_log(run)?;
    let records: Vec<CheckpointRecord> = log
        .iter()
        .map(|l| CheckpointRecord {
            epoch: l.entry.epoch,
            dev_f1: l.entry.dev_metrics.map(|d| d.arg_c).unwrap_or(0.0),
            avg_compat: l.entry.heldout_compatibility.unwrap_or(0.0),
            path: Some(
                run.join("checkpoints")
                    .join(format!("{}-epoch{:03}.ckpt.json", l.entry.method, l.entry.epoch))
                    .display()
                    .to_string(),
            ),
        })
        .collect();
    let best = select_checkpoint(&records, criterion)?;
    let src = PathBuf::from(best.path.as_deref().expect("set above"));
    if src.exists() {
        fs::copy(&src, run.join("selected.ckpt.json"))?;
    } else {
        log::warn!("{} is missing; epoch checkpoints were not kept", src.display());
    }
    println!(
        "selected epoch {} (dev Arg-C F1 {:.3}, held-out compatibility {:.3})",
        best.epoch, best.dev_f1, best.avg_compat
    );
    Ok(())
}

/// Rendered report files.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub markdown: String,
    pub csv: String,
    pub series: String,
}

const METHOD_ORDER: [&str; 3] = ["base", "self_training", "stf"];

/// Builds the comparison from the method directories under `dir`. Reads
/// only logs and metrics, so repeated calls give identical bytes.
pub fn report(dir: &Path) -> Result<Report> {
    let mut found: Vec<(String, MethodMetrics, Vec<LogLine>)> = Vec::new();
    let mut names: Vec<String> = match fs::read_dir(dir) {
        Ok(rd) => rd
            .filter_map(|e| e.ok())
            .filter(|e| e.path().join(METRICS_FILE).exists() && e.path().join(LOG_FILE).exists())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect(),
        Err(_) => Vec::new(),
    };
    names.sort_by_key(|n| (METHOD_ORDER.iter().position(|m| m == n).unwrap_or(METHOD_ORDER.len()), n.clone()));
    for name in names {
        let d = dir.join(&name);
        let m: MethodMetrics = serde_json::from_slice(&fs::read(d.join(METRICS_FILE))?)?;
        found.push((name, m, read_log(&d)?));
    }
    if found.is_empty() {
        return Err(Error::MissingLogs(dir.to_path_buf()));
    }
    let pct = |x: f64| format!("{:.2}", 100.0 * x);
    let compat = |c: Option<f64>| c.map(|c| format!("{:.4}", c)).unwrap_or_else(|| "-".into());

    let mut md = String::from("| method | Tri-C F1 | Arg-C F1 | mean_compat |\n|---|---|---|---|\n");
    let mut csv = String::from("method,Tri-C F1,Arg-C F1,mean_compat\n");
    for (name, m, _) in &found {
        let _ = writeln!(md, "| {name} | {} | {} | {} |", pct(m.tri_c.f1), pct(m.arg_c.f1), compat(m.mean_compat));
        let _ = writeln!(
            csv,
            "{name},{},{},{}",
            pct(m.tri_c.f1),
            pct(m.arg_c.f1),
            m.mean_compat.map(|c| format!("{c:.6}")).unwrap_or_default()
        );
    }
    let hashes: std::collections::BTreeSet<(String, u64)> =
        found.iter().map(|(_, m, _)| (m.config_hash.clone(), m.seed)).collect();
    md.push('\n');
    for (h, s) in &hashes {
        let _ = writeln!(md, "config hash `{h}`, seed {s}");
    }

    let mut series = String::from("method,epoch,stage,beta,labeled_loss,stf_loss,pseudo_count,dev_arg_c,heldout_compat\n");
    for (name, _, log) in &found {
        for l in log {
            let e = &l.entry;
            let _ = writeln!(
                series,
                "{name},{},{},{:.6},{:.6},{:.6},{},{},{}",
                e.epoch,
                e.stage,
                e.beta,
                e.labeled_loss,
                e.stf_loss,
                e.pseudo_count,
                e.dev_metrics.map(|d| format!("{:.6}", d.arg_c)).unwrap_or_default(),
                e.heldout_compatibility.map(|c| format!("{c:.6}")).unwrap_or_default()
            );
        }
    }
    let sweep = dir.join("sweep").join("sweep.txt");
    if sweep.exists() {
        md.push_str("\nThreshold sweep (Arg-C F1 by certainty threshold):\n\n```\n");
        md.push_str(&fs::read_to_string(sweep)?);
        md.push_str("```\n");
    }
    let stamp: Vec<String> = hashes.iter().map(|(h, s)| format!("# config_hash={h} seed={s}")).collect();
    let head = format!("{}\n", stamp.join("\n"));
    Ok(Report {
        markdown: md,
        csv: format!("{head}{csv}"),
        series: format!("{head}{series}"),
    })
}
