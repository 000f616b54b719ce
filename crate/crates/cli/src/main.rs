mod config;

use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pdgvd::autodiff::gradcheck::{check_registered_ops, REL_TOL};
use pdgvd::corpus::{build_graphs, generate_planted_corpus, load_corpus, write_corpus, CorpusError};
use pdgvd::explainer::ExplanationReport;
use pdgvd::frontend::{export_dot, export_pdg_json, parse_source, FrontendError};
use pdgvd::model::check::detection_loss_error;
use pdgvd::model::{DetectionModel, ModelError, RankedDetection};
use pdgvd::patterns::{abstract_subgraph, mine_report, PatternError, SizeMeasure};
use pdgvd::pipeline::{self, Method, PipelineError};
use rayon::prelude::*;
use serde::Serialize;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "pdgvd", version, about = "Vulnerability detection and explanation over program dependence graphs")]
struct Cli {
    /// JSON run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-method work.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Tune,
    Test,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Print the PDG-JSON of every method in the given files.
    Parse {
        files: Vec<PathBuf>,
        /// Write `<method>.pdg.json` and `<method>.dot` into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print DOT instead of JSON.
        #[arg(long)]
        dot: bool,
    },
    /// Write a planted-vulnerability corpus.
    GenCorpus {
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train on the training split and save a checkpoint.
    Train {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank the methods of a split by score.
    Detect {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Explain the given methods, or every method of the split detected as vulnerable.
    Explain {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long = "method")]
        methods: Vec<String>,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
        /// Edges kept per explanation.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write one highlighted DOT graph per method into this directory.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Ranking, classification and interpretation metrics.
    Evaluate {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        explanations: Option<PathBuf>,
        /// Statements of each explanation compared with the fix.
        #[arg(long, default_value_t = 5)]
        top: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Frequent patterns among abstracted explanation sub-graphs.
    Mine {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        explanations: PathBuf,
        #[arg(long)]
        min_support: Option<usize>,
        #[arg(long)]
        min_size: Option<usize>,
        #[arg(long)]
        max_size: Option<usize>,
        #[arg(long, value_enum)]
        measure: Option<Measure>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write one DOT graph per pattern into this directory.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Finite-difference check of every tensor operation and the full losses.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        seeds: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Measure {
    Edges,
    Nodes,
}

/// Bad input (exit 1) or a failure of our own (exit 2).
enum Failure {
    Invalid(String),
    Internal(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Invalid(m) | Failure::Internal(m) => f.write_str(m),
        }
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        Failure::Invalid(e.to_string())
    }
}

impl From<FrontendError> for Failure {
    fn from(e: FrontendError) -> Self {
        Failure::Invalid(e.to_string())
    }
}

impl From<PatternError> for Failure {
    fn from(e: PatternError) -> Self {
        Failure::Invalid(e.to_string())
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Tensor(_) => Failure::Internal(e.to_string()),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Model(m) => m.into(),
            PipelineError::Corpus(c) => c.into(),
            other => Failure::Invalid(other.to_string()),
        }
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn invalid(m: impl fmt::Display) -> Failure {
    Failure::Invalid(m.to_string())
}

fn internal(m: impl fmt::Display) -> Failure {
    Failure::Internal(m.to_string())
}

fn log(msg: impl fmt::Display) {
    eprintln!("pdgvd: {msg}");
}

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| internal(format!("{}: {e}", p.display()))),
        None => {
            let mut o = std::io::stdout().lock();
            o.write_all(text.as_bytes()).map_err(internal)
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("reports serialize") + "\n"
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Outcome<T> {
    let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| invalid(format!("{}: {}: {}", path.display(), e.path(), e.inner())))
}

fn required(flag: Option<PathBuf>, from_config: &Option<PathBuf>, name: &str) -> Outcome<PathBuf> {
    flag.or_else(|| from_config.clone())
        .ok_or_else(|| invalid(format!("--{name} is required (or set paths.{name} in the config)")))
}

/// Parses every corpus entry, reporting the ones that fail.
fn load_methods(path: &Path) -> Outcome<Vec<Method>> {
    let entries = load_corpus(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let (ok, failed) = build_graphs(&entries);
    for (id, err) in &failed {
        log(format!("skipping {id}: {err}"));
    }
    log(format!("{} methods loaded, {} skipped", ok.len(), failed.len()));
    Ok(ok)
}

fn select(methods: Vec<Method>, cfg: &RunConfig, which: Split) -> Outcome<Vec<Method>> {
    if let Split::All = which {
        return Ok(methods);
    }
    let s = pipeline::split_methods(&methods, &cfg.split_spec())?;
    Ok(match which {
        Split::Train => s.train,
        Split::Tune => s.tune,
        Split::Test => s.test,
        Split::All => unreachable!(),
    })
}

fn load_model(path: &Path) -> Outcome<DetectionModel> {
    let f = File::open(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    DetectionModel::load(BufReader::new(f)).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn make_dir(dir: &Path) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| internal(format!("{}: {e}", dir.display())))
}

fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn parse(files: &[PathBuf], out: Option<&Path>, dot: bool) -> Outcome {
    if files.is_empty() {
        return Err(invalid("no input files"));
    }
    if let Some(dir) = out {
        make_dir(dir)?;
    }
    let mut text = String::new();
    for f in files {
        let src = fs::read_to_string(f).map_err(|e| invalid(format!("{}: {e}", f.display())))?;
        let graphs = parse_source(&src).map_err(|e| invalid(format!("{}: {e}", f.display())))?;
        for g in graphs {
            let json = export_pdg_json(&g);
            let dot_text = export_dot(&g, None)?;
            match out {
                Some(dir) => {
                    let base = dir.join(file_stem(&g.method));
                    fs::write(base.with_extension("pdg.json"), &json).map_err(internal)?;
                    fs::write(base.with_extension("dot"), &dot_text).map_err(internal)?;
                }
                None if dot => text += &dot_text,
                None => text += &json,
            }
        }
    }
    if out.is_none() {
        emit(None, &text)?;
    }
    Ok(())
}

fn train(cfg: &RunConfig, corpus: &Path, out: &Path) -> Outcome {
    let methods = load_methods(corpus)?;
    let splits = pipeline::split_methods(&methods, &cfg.split_spec())?;
    log(format!(
        "split: train {}, tune {}, test {}",
        splits.train.len(),
        splits.tune.len(),
        splits.test.len()
    ));
    let (model, summary) = pipeline::train_model(&splits, cfg.model, &cfg.train_config())?;
    for e in &summary.epochs {
        log(format!(
            "epoch {} loss {:.6} tuning auc {}",
            e.epoch,
            e.loss,
            e.tuning_auc.map_or("n/a".into(), |a| format!("{a:.4}"))
        ));
    }
    log(format!("threshold {:.6} (tuning F1 {:.4})", summary.threshold, summary.tuning_f1));
    let f = File::create(out).map_err(|e| internal(format!("{}: {e}", out.display())))?;
    model.save(BufWriter::new(f))?;
    log(format!("checkpoint written to {}", out.display()));
    Ok(())
}

fn explain(cfg: &RunConfig, model: &DetectionModel, methods: &[Method], ids: &[String], dot: Option<&Path>) -> Outcome<Vec<ExplanationReport>> {
    let chosen: Vec<&Method> = if ids.is_empty() {
        let detections = pipeline::detect(model, methods)?;
        pipeline::detected(&detections, methods)?
    } else {
        ids.iter()
            .map(|id| methods.iter().find(|m| &m.0.id == id).ok_or_else(|| invalid(format!("unknown method {id:?}"))))
            .collect::<Outcome<_>>()?
    };
    log(format!("explaining {} methods", chosen.len()));
    let reports = pipeline::explain_methods(model, &chosen, &cfg.explainer)?;
    if let Some(dir) = dot {
        make_dir(dir)?;
        for (r, (_, g)) in reports.iter().zip(&chosen) {
            let text = r.subgraph().to_dot(g)?;
            fs::write(dir.join(format!("{}.dot", file_stem(&r.method))), text).map_err(internal)?;
        }
    }
    Ok(reports)
}

fn mine(cfg: &RunConfig, methods: &[Method], explanations: &[ExplanationReport], out: Option<&Path>, dot: Option<&Path>) -> Outcome {
    let graphs = explanations
        .iter()
        .map(|x| {
            let (_, g) = methods.iter().find(|m| m.0.id == x.method).ok_or_else(|| invalid(format!("unknown method {:?}", x.method)))?;
            Ok(abstract_subgraph(&x.subgraph(), g))
        })
        .collect::<Outcome<Vec<_>>>()?;
    let m = &cfg.mine;
    let report = mine_report(&graphs, m.min_support, (m.min_size, m.max_size), m.measure)?;
    log(format!("{} patterns", report.patterns.len()));
    if let Some(dir) = dot {
        make_dir(dir)?;
        for (i, p) in report.patterns.iter().enumerate() {
            fs::write(dir.join(format!("pattern-{:03}.dot", i + 1)), p.graph.to_dot()).map_err(internal)?;
        }
    }
    emit(out, &to_json(&report))
}

fn gradcheck(seeds: u64) -> Outcome {
    let mut rows: Vec<(String, f64)> = check_registered_ops(seeds)
        .map_err(internal)?
        .into_iter()
        .map(|r| (r.name.to_string(), r.worst_rel_err))
        .collect();
    for (name, soft) in [("detection_loss", false), ("explainer_loss", true)] {
        let worst = (0..seeds)
            .into_par_iter()
            .map(|s| detection_loss_error(s, soft))
            .collect::<Result<Vec<f64>, _>>()?
            .into_iter()
            .fold(0.0, f64::max);
        rows.push((name.to_string(), worst));
    }
    let mut text = format!("{:<20} {:>12}  result\n", "op", "rel. error");
    let mut ok = true;
    for (name, err) in &rows {
        let pass = *err < REL_TOL;
        ok &= pass;
        text += &format!("{name:<20} {err:>12.3e}  {}\n", if pass { "PASS" } else { "FAIL" });
    }
    emit(None, &text)?;
    if ok {
        Ok(())
    } else {
        Err(internal("gradient check failed"))
    }
}

fn run(cli: Cli) -> Outcome {
    let mut cfg = RunConfig::load(cli.config.as_deref()).map_err(invalid)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.max(1))
        .build_global()
        .map_err(internal)?;
    match cli.command {
        Command::Parse { files, out, dot } => parse(&files, out.as_deref(), dot),
        Command::GenCorpus { n, out } => {
            if n < 20 {
                return Err(invalid("--n must be at least 20"));
            }
            emit(out.as_deref(), &write_corpus(&generate_planted_corpus(n, cfg.seed)))
        }
        Command::Train { corpus, out } => {
            let corpus = required(corpus, &cfg.paths.corpus, "corpus")?;
            let out = required(out, &cfg.paths.checkpoint, "checkpoint")?;
            train(&cfg, &corpus, &out)
        }
        Command::Detect { corpus, checkpoint, split, out } => {
            let corpus = required(corpus, &cfg.paths.corpus, "corpus")?;
            let model = load_model(&required(checkpoint, &cfg.paths.checkpoint, "checkpoint")?)?;
            let methods = select(load_methods(&corpus)?, &cfg, split)?;
            let ranked = pipeline::detect(&model, &methods)?;
            emit(out.as_deref(), &to_json(&ranked))
        }
        Command::Explain { corpus, checkpoint, methods, split, k, out, dot } => {
            if let Some(k) = k {
                cfg.explainer.k = k;
            }
            if cfg.explainer.k == 0 {
                return Err(invalid("--k must be at least 1"));
            }
            let corpus = required(corpus, &cfg.paths.corpus, "corpus")?;
            let model = load_model(&required(checkpoint, &cfg.paths.checkpoint, "checkpoint")?)?;
            let pool = load_methods(&corpus)?;
            let pool = if methods.is_empty() { select(pool, &cfg, split)? } else { pool };
            let reports = explain(&cfg, &model, &pool, &methods, dot.as_deref())?;
            emit(out.as_deref(), &to_json(&reports))
        }
        Command::Evaluate { corpus, detections, explanations, top, out } => {
            let corpus = required(corpus, &cfg.paths.corpus, "corpus")?;
            let methods = load_methods(&corpus)?;
            let detections: Vec<RankedDetection> = read_json(&detections)?;
            let explanations: Vec<ExplanationReport> = match explanations {
                Some(p) => read_json(&p)?,
                None => Vec::new(),
            };
            let report = pipeline::evaluate(&detections, &explanations, &methods, top)?;
            emit(out.as_deref(), &to_json(&report))
        }
        Command::Mine { corpus, explanations, min_support, min_size, max_size, measure, out, dot } => {
            let m = &mut cfg.mine;
            m.min_support = min_support.unwrap_or(m.min_support);
            m.min_size = min_size.unwrap_or(m.min_size);
            m.max_size = max_size.unwrap_or(m.max_size);
            if let Some(measure) = measure {
                m.measure = match measure {
                    Measure::Edges => SizeMeasure::Edges,
                    Measure::Nodes => SizeMeasure::Nodes,
                };
            }
            let corpus = required(corpus, &cfg.paths.corpus, "corpus")?;
            let methods = load_methods(&corpus)?;
            let explanations: Vec<ExplanationReport> = read_json(&explanations)?;
            mine(&cfg, &methods, &explanations, out.as_deref(), dot.as_deref())
        }
        Command::Gradcheck { seeds } => gradcheck(seeds),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(m)) => {
            log(format!("error: {m}"));
            ExitCode::from(1)
        }
        Err(Failure::Internal(m)) => {
            log(format!("internal error: {m}"));
            ExitCode::from(2)
        }
    }
}
