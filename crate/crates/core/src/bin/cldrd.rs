use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cldrd::config::{RunConfig, TeacherKind};
use cldrd::curriculum::{generate_iteration_data, write_dataset, StudentView};
use cldrd::data::{
    load_collection, load_qrels, load_queries, load_run, write_run, Corpus, Qrels, RankedList,
};
use cldrd::encoder::{EncoderParams, FeaturizerConfig};
use cldrd::error::{Error, Result};
use cldrd::eval::{compare_reports, standard_reports, MetricReport};
use cldrd::index::{build_index, DenseIndex};
use cldrd::synth::{generate_world, SynthConfig};
use cldrd::teacher::{rank_corpus, rerank, Bm25, FileTeacher, OracleTeacher, TeacherAdapter};
use cldrd::trainer::{retrieve_all, run_curriculum, Validation};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(
    name = "cldrd",
    version,
    about = "Curriculum distillation for dense retrieval"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic retrieval world.
    Synth(SynthArgs),
    /// Run the curriculum and write checkpoints, datasets and metrics.
    Train(TrainArgs),
    /// Dump one iteration's training data for a checkpoint.
    GenerateData(GenerateArgs),
    /// Encode a collection into a dense index file.
    Index(IndexArgs),
    /// Retrieve with a student checkpoint and optionally score the run.
    Retrieve(RetrieveArgs),
    /// Rank with the teacher, over a candidate run or the whole collection.
    Rerank(RerankArgs),
    /// Score a run file against qrels.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    num_topics: Option<usize>,
    #[arg(long)]
    docs_per_topic: Option<usize>,
    #[arg(long)]
    train_queries: Option<usize>,
    #[arg(long)]
    eval_queries: Option<usize>,
    #[arg(long)]
    grade_levels: Option<u32>,
}

/// Config file plus overrides shared by the model commands.
#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    collection: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects key=value, got {kv:?}")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(p) = &self.collection {
            cfg.collection = Some(p.clone());
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: ConfigArgs,
    #[arg(long)]
    train_queries: Option<PathBuf>,
    #[arg(long)]
    eval_queries: Option<PathBuf>,
    #[arg(long)]
    eval_qrels: Option<PathBuf>,
    #[arg(long)]
    teacher_file: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run only the first N iterations.
    #[arg(long)]
    iterations: Option<usize>,
    /// Anti-curriculum: hardest iteration first.
    #[arg(long)]
    reverse: bool,
    /// Effective peak learning rate for every iteration, bypassing the multiplier.
    #[arg(long)]
    peak_lr: Option<f64>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: ConfigArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    teacher_file: Option<PathBuf>,
    /// Position of the iteration in the (possibly reversed) schedule, from 1.
    #[arg(long, default_value_t = 1)]
    delta: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IndexArgs {
    #[command(flatten)]
    common: ConfigArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RetrieveArgs {
    #[command(flatten)]
    common: ConfigArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Prebuilt index; built from the collection when absent.
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value_t = 1000)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "cldrd")]
    tag: String,
    #[command(flatten)]
    metrics: MetricArgs,
}

#[derive(Args)]
struct RerankArgs {
    #[command(flatten)]
    common: ConfigArgs,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, value_parser = ["oracle", "file", "bm25"])]
    teacher: Option<String>,
    #[arg(long)]
    teacher_file: Option<PathBuf>,
    /// Candidate run to rerank; ranks the whole collection when absent.
    #[arg(long)]
    run: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "teacher")]
    tag: String,
    #[command(flatten)]
    metrics: MetricArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: ConfigArgs,
    #[arg(long)]
    run: PathBuf,
    #[command(flatten)]
    metrics: MetricArgs,
}

#[derive(Args)]
struct MetricArgs {
    #[arg(long)]
    qrels: Option<PathBuf>,
    /// Second run for a paired t-test on every metric.
    #[arg(long)]
    compare: Option<PathBuf>,
    /// Also print per-query values.
    #[arg(long)]
    per_query: bool,
}

fn set_path(slot: &mut Option<PathBuf>, flag: &Option<PathBuf>) {
    if let Some(p) = flag {
        *slot = Some(p.clone());
    }
}

fn load_corpus(cfg: &RunConfig) -> Result<Corpus> {
    load_collection(cfg.require(&cfg.collection, "collection")?)
}

fn build_teacher(cfg: &RunConfig, corpus: &Corpus) -> Result<TeacherAdapter> {
    Ok(match cfg.teacher {
        TeacherKind::Oracle => {
            let grades = load_qrels(cfg.require(&cfg.teacher_file, "teacher_file")?)?;
            TeacherAdapter::Oracle(OracleTeacher::new(grades, cfg.oracle_noise, cfg.seed)?)
        }
        TeacherKind::File => TeacherAdapter::File(FileTeacher::load(
            cfg.require(&cfg.teacher_file, "teacher_file")?,
        )?),
        TeacherKind::Bm25 => TeacherAdapter::Lexical(Bm25::new(corpus)),
    })
}

/// Loads a checkpoint and aligns the featurizer's bucket count with it.
fn load_student(cfg: &RunConfig, path: &Path) -> Result<(EncoderParams, FeaturizerConfig)> {
    let params = EncoderParams::load(path)?;
    let mut featurizer = cfg.featurizer();
    featurizer.vocab_size = params.vocab_size();
    featurizer.validate()?;
    Ok((params, featurizer))
}

fn print_reports(reports: &[MetricReport], per_query: bool) {
    for r in reports {
        println!("{}", r.summary_line());
    }
    if per_query {
        for r in reports {
            print!("{}", r.per_query_lines());
        }
    }
}

fn report_metrics(run: &[RankedList], args: &MetricArgs, cfg: &RunConfig) -> Result<()> {
    let Some(qrels_path) = &args.qrels else {
        if args.compare.is_some() {
            return Err(Error::Config("--compare needs --qrels".into()));
        }
        return Ok(());
    };
    let qrels: Qrels = load_qrels(qrels_path)?;
    let reports = standard_reports(run, &qrels, cfg.rel_threshold, cfg.gain)?;
    print_reports(&reports, args.per_query);
    if let Some(other) = &args.compare {
        let other_run = load_run(other)?;
        let other_reports = standard_reports(&other_run, &qrels, cfg.rel_threshold, cfg.gain)?;
        for (a, b) in reports.iter().zip(&other_reports) {
            let t = compare_reports(a, b)?;
            println!(
                "{}\t{}\tdelta {:.6}\tt {:.4}\tp {:.4}\tn {}",
                a.metric,
                a.cutoff,
                a.mean - b.mean,
                t.t,
                t.p,
                t.n
            );
        }
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let mut cfg = SynthConfig {
        seed: args.seed,
        ..SynthConfig::default()
    };
    if let Some(v) = args.num_topics {
        cfg.num_topics = v;
    }
    if let Some(v) = args.docs_per_topic {
        cfg.docs_per_topic = v;
    }
    if let Some(v) = args.train_queries {
        cfg.num_train_queries = v;
    }
    if let Some(v) = args.eval_queries {
        cfg.num_eval_queries = v;
    }
    if let Some(v) = args.grade_levels {
        cfg.grade_levels = v;
    }
    let world = generate_world(&cfg)?;
    world.write(&args.out)?;
    log::info!(
        "wrote {} documents, {} train and {} eval queries to {}",
        world.corpus.len(),
        world.train_queries.len(),
        world.eval_queries.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut cfg = args.common.resolve()?;
    set_path(&mut cfg.train_queries, &args.train_queries);
    set_path(&mut cfg.eval_queries, &args.eval_queries);
    set_path(&mut cfg.eval_qrels, &args.eval_qrels);
    set_path(&mut cfg.teacher_file, &args.teacher_file);
    set_path(&mut cfg.out_dir, &args.out);
    if args.iterations.is_some() {
        cfg.iterations = args.iterations;
    }
    if args.reverse {
        cfg.reverse = true;
    }
    if let Some(lr) = args.peak_lr {
        cfg.peak_lr = vec![lr];
        cfg.lr_multiplier = 1.0;
    }
    cfg.validate()?;
    let schedule = cfg.schedule()?;
    let out_dir = cfg.require(&cfg.out_dir, "out_dir")?.to_path_buf();
    fs::create_dir_all(&out_dir)
        .map_err(|e| Error::Config(format!("{}: {e}", out_dir.display())))?;

    let corpus = load_corpus(&cfg)?;
    let queries = load_queries(cfg.require(&cfg.train_queries, "train_queries")?)?;
    let teacher = build_teacher(&cfg, &corpus)?;
    let eval_data = match (&cfg.eval_queries, &cfg.eval_qrels) {
        (Some(q), Some(r)) => Some((load_queries(q)?, load_qrels(r)?)),
        (None, None) => None,
        _ => {
            return Err(Error::Config(
                "eval_queries and eval_qrels go together".into(),
            ))
        }
    };
    let validation = eval_data.as_ref().map(|(queries, qrels)| Validation {
        queries,
        qrels,
        rel_threshold: cfg.rel_threshold,
    });

    let init = EncoderParams::init(cfg.vocab_size, cfg.dim, cfg.shared, cfg.seed)?;
    init.save(out_dir.join("init.ckpt"))?;
    let metrics_path = out_dir.join("metrics.jsonl");
    let file = File::create(&metrics_path)
        .map_err(|e| Error::Config(format!("{}: {e}", metrics_path.display())))?;
    let mut metrics = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::Config(format!("{}: {e}", metrics_path.display()));

    let mut hook = |record: &cldrd::trainer::IterationRecord,
                    params: &EncoderParams,
                    data: &cldrd::TrainingDataset| {
        params.save(out_dir.join(format!("iter{}.ckpt", record.delta)))?;
        write_dataset(data, out_dir.join(format!("data.iter{}.tsv", record.delta)))?;
        writeln!(metrics, "{}", record.to_json_line()).map_err(io_err)?;
        metrics.flush().map_err(io_err)?;
        Ok(())
    };
    let outcome = run_curriculum(
        &schedule,
        init,
        &teacher,
        &queries,
        &corpus,
        &cfg.train_options(),
        validation,
        &mut hook,
    )?;
    outcome.params.save(out_dir.join("final.ckpt"))?;
    Ok(())
}

fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let mut cfg = args.common.resolve()?;
    set_path(&mut cfg.teacher_file, &args.teacher_file);
    cfg.validate()?;
    let schedule = cfg.schedule()?;
    let ordered = schedule.ordered();
    let config = args
        .delta
        .checked_sub(1)
        .and_then(|i| ordered.get(i))
        .ok_or_else(|| Error::Config(format!("delta must be between 1 and {}", ordered.len())))?;
    let corpus = load_corpus(&cfg)?;
    let queries = load_queries(&args.queries)?;
    let teacher = build_teacher(&cfg, &corpus)?;
    let (params, featurizer) = load_student(&cfg, &args.checkpoint)?;
    let index = build_index(&params, &corpus, &featurizer)?;
    let data = generate_iteration_data(
        config,
        schedule.depth,
        StudentView {
            params: &params,
            index: &index,
            featurizer: &featurizer,
        },
        &teacher,
        &queries,
        &corpus,
        cfg.seed,
        args.delta,
    )?;
    write_dataset(&data, &args.out)
}

fn cmd_index(args: &IndexArgs) -> Result<()> {
    let cfg = args.common.resolve()?;
    let (params, featurizer) = load_student(&cfg, &args.checkpoint)?;
    let corpus = load_corpus(&cfg)?;
    build_index(&params, &corpus, &featurizer)?.save(&args.out)
}

fn cmd_retrieve(args: &RetrieveArgs) -> Result<()> {
    let cfg = args.common.resolve()?;
    let (params, featurizer) = load_student(&cfg, &args.checkpoint)?;
    let index = match &args.index {
        Some(p) => {
            let index = DenseIndex::load(p)?;
            if index.dim() != params.dim() {
                return Err(Error::Config(format!(
                    "index dim {} does not match checkpoint dim {}",
                    index.dim(),
                    params.dim()
                )));
            }
            index
        }
        None => build_index(&params, &load_corpus(&cfg)?, &featurizer)?,
    };
    let queries = load_queries(&args.queries)?;
    let run = retrieve_all(&params, &index, &queries, &featurizer, args.k)?;
    write_run(&run, &args.tag, &args.out)?;
    report_metrics(&run, &args.metrics, &cfg)
}

fn cmd_rerank(args: &RerankArgs) -> Result<()> {
    let mut cfg = args.common.resolve()?;
    set_path(&mut cfg.teacher_file, &args.teacher_file);
    if let Some(t) = &args.teacher {
        cfg.set("teacher", t)?;
    }
    let corpus = load_corpus(&cfg)?;
    let queries = load_queries(&args.queries)?;
    let teacher = build_teacher(&cfg, &corpus)?;
    let run = match &args.run {
        Some(path) => load_run(path)?
            .iter()
            .map(|candidates| {
                let q = queries.get(&candidates.query_id).ok_or_else(|| {
                    Error::Config(format!("run query {} not in queries", candidates.query_id))
                })?;
                let mut ranked = rerank(&teacher, q, candidates, &corpus)?;
                ranked.truncate(args.k);
                Ok(ranked)
            })
            .collect::<Result<Vec<_>>>()?,
        None => queries
            .iter()
            .map(|q| rank_corpus(&teacher, q, &corpus, args.k))
            .collect::<Result<Vec<_>>>()?,
    };
    write_run(&run, &args.tag, &args.out)?;
    report_metrics(&run, &args.metrics, &cfg)
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let cfg = args.common.resolve()?;
    if args.metrics.qrels.is_none() {
        return Err(Error::Config("evaluate needs --qrels".into()));
    }
    report_metrics(&load_run(&args.run)?, &args.metrics, &cfg)
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("CLDRD_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::Config(format!(
            "CLDRD_THREADS must be a positive integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::GenerateData(a) => cmd_generate(a),
        Command::Index(a) => cmd_index(a),
        Command::Retrieve(a) => cmd_retrieve(a),
        Command::Rerank(a) => cmd_rerank(a),
        Command::Evaluate(a) => cmd_evaluate(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() {
                EXIT_NUMERIC
            } else {
                EXIT_CONFIG
            })
        }
    }
}
