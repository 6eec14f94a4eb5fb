//! The `kgqa` command: ingest graphs, build indexes, fetch descriptions, ask
//! single questions and run evaluations.
//!
//! Exit status is 0 on success (including questions left unanswered), 1 for
//! usage errors, 2 for data errors and 3 for backend errors.

pub mod config;
pub mod error;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use kgqa_core::embed::{Chunking, EmbeddingIndex, Embedder, FewShotCorpus, HashEmbedder, HttpEmbedder};
use kgqa_core::eval::{self, EvalConfig, QuestionInstance, Sample};
use kgqa_core::ir::{IrConfig, IrEngine, MetaqaEngine, PathCatalog};
use kgqa_core::llm::{ChatBackend, GatewayConfig, HttpChatBackend, LlmGateway, ScriptedBackend};
use kgqa_core::pipeline::{AnswerSet, QaPipeline};
use kgqa_core::sp::{
    fetch_descriptions, HttpDescriptionSource, HttpSparqlEndpoint, MockSparqlEndpoint, SpConfig,
    SpEngine, SparqlEndpoint, TermCatalog, TermIndex, TermKind,
};
use kgqa_core::store::{
    load_graph, read_snapshot, write_snapshot, CvtPolicy, GraphFormat, KnowledgeGraph,
    LoadOptions,
};
use kgqa_core::trace::write_jsonl;

pub use config::{BackendKind, RunConfig, Strategy};
pub use error::{CliError, ExitKind};

#[derive(Debug, Parser)]
#[command(name = "kgqa", version, about = "Question answering over knowledge graphs with LLM skills")]
pub struct Cli {
    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for sampling and hashing embedders.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// `scripted` or `remote`.
    #[arg(long, global = true)]
    pub backend: Option<String>,
    /// Write trace records to standard error.
    #[arg(long, global = true)]
    pub trace: bool,
    /// Configuration override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a graph file and write a binary snapshot.
    Ingest(IngestArgs),
    /// Embed a few-shot corpus or a description catalog.
    Index(IndexArgs),
    /// Fetch missing term descriptions into a cache file.
    FetchDescriptions(FetchArgs),
    /// Answer one question.
    Ask(AskArgs),
    /// Evaluate a strategy over a dataset split.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// tsv, pipe (metaqa) or ntriples.
    #[arg(long)]
    pub format: Option<String>,
    /// File of CVT node ids, one per line.
    #[arg(long)]
    pub cvt_ids: Option<PathBuf>,
    /// Snapshot output path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Few-shot examples as JSONL.
    #[arg(long, conflicts_with = "descriptions")]
    pub corpus: Option<PathBuf>,
    /// Description catalog TSV.
    #[arg(long)]
    pub descriptions: Option<PathBuf>,
    /// entity or predicate, for description catalogs.
    #[arg(long, default_value = "entity")]
    pub kind: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub chunk_size: usize,
    #[arg(long, default_value_t = 32)]
    pub overlap: usize,
}

#[derive(Debug, Args)]
pub struct FetchArgs {
    /// Lines of `id` or `id<TAB>kind`.
    #[arg(long)]
    pub ids: PathBuf,
    /// Kind for lines without one.
    #[arg(long, default_value = "entity")]
    pub kind: String,
    /// URL with `{id}` in place of the term id.
    #[arg(long)]
    pub url: String,
    /// TSV cache, created if missing.
    #[arg(long)]
    pub cache: PathBuf,
}

#[derive(Debug, Args)]
pub struct AskArgs {
    pub question: String,
    /// Topic entity reference, repeatable.
    #[arg(long = "topic")]
    pub topics: Vec<String>,
    #[arg(long)]
    pub strategy: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: Option<String>,
    /// Dataset file in its native layout.
    #[arg(long)]
    pub data: PathBuf,
    /// Report directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub strategy: Option<String>,
    /// Evaluate only this many instances.
    #[arg(long)]
    pub sample: Option<usize>,
    /// Draw the sample at random with the seed instead of taking the first N.
    #[arg(long, requires = "sample")]
    pub random: bool,
    /// Continue from the checkpoint in the report directory.
    #[arg(long)]
    pub resume: bool,
    /// Stop after this many instances, leaving a checkpoint.
    #[arg(long, hide = true)]
    pub interrupt_after: Option<usize>,
}

/// Parses arguments, runs the command and returns the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { ExitKind::Usage as i32 } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match execute(&cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.code()
        }
    }
}

fn build_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut c = RunConfig::default();
    if let Some(p) = &cli.config {
        c.apply_file(p)?;
    }
    for kv in &cli.overrides {
        c.apply_override(kv)?;
    }
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    if let Some(w) = cli.workers {
        c.workers = w.max(1);
    }
    if let Some(b) = &cli.backend {
        c.backend = b.parse()?;
    }
    Ok(c)
}

pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let mut config = build_config(cli)?;
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(&mut config, a, out),
        Command::Index(a) => cmd_index(&config, a, out),
        Command::FetchDescriptions(a) => cmd_fetch(&config, a, out),
        Command::Ask(a) => {
            if let Some(s) = &a.strategy {
                config.strategy = s.parse()?;
            }
            cmd_ask(&config, a, cli.trace, out, err)
        }
        Command::Eval(a) => {
            if let Some(s) = &a.strategy {
                config.strategy = s.parse()?;
            }
            if let Some(d) = &a.dataset {
                config.set("dataset", d, None)?;
            }
            cmd_eval(&config, a, out)
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::data(anyhow::anyhow!("{}: {e}", path.display()))
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::data(anyhow::anyhow!("writing output: {e}")))
}

fn load_options(config: &RunConfig) -> Result<LoadOptions, CliError> {
    let format: GraphFormat = config.graph_format.parse()?;
    let mut opts = LoadOptions::new(format);
    if let Some(p) = &config.cvt_ids {
        opts = opts.with_cvt(CvtPolicy::from_id_file(p)?);
    }
    Ok(opts)
}

pub fn cmd_ingest(config: &mut RunConfig, args: &IngestArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if let Some(g) = &args.graph {
        config.graph = Some(g.clone());
    }
    if let Some(f) = &args.format {
        config.graph_format = f.clone();
    }
    if let Some(c) = &args.cvt_ids {
        config.cvt_ids = Some(c.clone());
    }
    let graph_path = config.graph.clone().ok_or_else(|| CliError::usage("ingest needs --graph"))?;
    let (graph, report) = load_graph(&graph_path, &load_options(config)?)?;
    let file = std::fs::File::create(&args.out).map_err(|e| io_err(&args.out, e))?;
    let digest = write_snapshot(&graph, std::io::BufWriter::new(file))?;
    emit(out, &format!("{report}digest={digest}\n"))
}

fn load_graph_for(config: &RunConfig) -> Result<KnowledgeGraph, CliError> {
    if let Some(p) = &config.snapshot {
        let file = std::fs::File::open(p).map_err(|e| io_err(p, e))?;
        return Ok(read_snapshot(std::io::BufReader::new(file))?);
    }
    let p = config
        .graph
        .as_ref()
        .ok_or_else(|| CliError::usage("this strategy needs `graph` or `snapshot`"))?;
    Ok(load_graph(p, &load_options(config)?)?.0)
}

fn embedder_for(config: &RunConfig) -> Result<Arc<dyn Embedder>, CliError> {
    match (&config.embed_url, config.backend) {
        (Some(url), BackendKind::Remote) => Ok(Arc::new(HttpEmbedder::new(
            url.clone(),
            config.embed_model.clone(),
            config.embed_dim,
            Duration::from_secs(config.timeout_secs),
        )?)),
        _ => Ok(Arc::new(HashEmbedder::new(config.embed_dim.max(1), config.seed))),
    }
}

fn gateway_for(config: &RunConfig) -> Result<Arc<LlmGateway>, CliError> {
    let backend: Arc<dyn ChatBackend> = match config.backend {
        BackendKind::Scripted => {
            let p = config
                .script
                .as_ref()
                .ok_or_else(|| CliError::usage("the scripted backend needs `script`"))?;
            Arc::new(ScriptedBackend::from_jsonl(p).map_err(CliError::data)?)
        }
        BackendKind::Remote => {
            let url = config
                .llm_url
                .as_ref()
                .ok_or_else(|| CliError::usage("the remote backend needs `llm_url`"))?;
            Arc::new(HttpChatBackend::new(url.clone(), config.llm_model.clone()).map_err(CliError::backend)?)
        }
    };
    let gw = GatewayConfig {
        window: config.window,
        max_concurrency: config.workers.max(1),
        timeout: Duration::from_secs(config.timeout_secs),
        ..GatewayConfig::default()
    };
    Ok(Arc::new(LlmGateway::new(backend, gw)))
}

fn few_shot_for(config: &RunConfig, embedder: &dyn Embedder) -> Result<Option<Arc<FewShotCorpus>>, CliError> {
    let Some(p) = &config.few_shot else {
        return Ok(None);
    };
    let examples = FewShotCorpus::read_examples(p)?;
    let corpus = match &config.few_shot_index {
        Some(ix) => FewShotCorpus::from_parts(examples, EmbeddingIndex::load(ix)?)?,
        None => FewShotCorpus::build(embedder, examples)?,
    };
    Ok(Some(Arc::new(corpus)))
}

fn endpoint_for(config: &RunConfig) -> Result<Option<Arc<dyn SparqlEndpoint>>, CliError> {
    if let Some(p) = &config.endpoint_fixtures {
        return Ok(Some(Arc::new(MockSparqlEndpoint::from_jsonl(p).map_err(CliError::data)?)));
    }
    match &config.endpoint {
        Some(url) => Ok(Some(Arc::new(
            HttpSparqlEndpoint::new(url.clone(), Duration::from_secs(config.timeout_secs)).map_err(CliError::backend)?,
        ))),
        None => Ok(None),
    }
}

fn pipeline_for(config: &RunConfig) -> Result<Box<dyn QaPipeline>, CliError> {
    let embedder = embedder_for(config)?;
    let gateway = gateway_for(config)?;
    let few_shot = few_shot_for(config, embedder.as_ref())?;
    match config.strategy {
        Strategy::Ir => {
            let graph = Arc::new(load_graph_for(config)?);
            let ir = IrConfig {
                k: config.k,
                max_hops: config.max_hops,
                retries: config.retries,
                few_shot_n: config.few_shot_n,
                always_few_shot: config.always_few_shot,
            };
            let mut e = IrEngine::new(graph, gateway, embedder, ir);
            if let Some(c) = few_shot {
                e = e.with_few_shot(c);
            }
            Ok(Box::new(e))
        }
        Strategy::MetaqaPath => {
            let graph = Arc::new(load_graph_for(config)?);
            let catalog = match &config.path_catalog {
                Some(p) => PathCatalog::read(p)?,
                None => PathCatalog::builtin(),
            };
            let mut e = MetaqaEngine::new(graph, gateway, embedder, catalog, config.path_strategy)
                .with_budgets(config.retries, config.few_shot_n);
            if let Some(c) = few_shot {
                e = e.with_few_shot(c);
            }
            Ok(Box::new(e))
        }
        Strategy::Sp => {
            let endpoint = endpoint_for(config)?
                .ok_or_else(|| CliError::usage("the sp strategy needs `endpoint` or `endpoint_fixtures`"))?;
            let sp = SpConfig {
                dialect: config.dialect,
                k_entities: config.k_entities,
                k_predicates: config.k_predicates,
                few_shot_n: config.few_shot_n,
                retries: config.retries,
                known_entities: config.known_entities,
            };
            let mut e = SpEngine::new(gateway, endpoint, embedder.clone(), sp);
            if let Some(p) = &config.descriptions {
                let catalog = TermCatalog::read_tsv(p)?;
                for kind in [TermKind::Entity, TermKind::Predicate] {
                    if catalog.of_kind(kind).next().is_none() {
                        continue;
                    }
                    let index = Arc::new(TermIndex::build(&catalog, kind, embedder.as_ref(), Chunking::default())?);
                    e = match kind {
                        TermKind::Entity => e.with_entity_index(index),
                        TermKind::Predicate => e.with_predicate_index(index),
                    };
                }
            }
            if let Some(c) = few_shot {
                e = e.with_few_shot(c);
            }
            Ok(Box::new(e))
        }
    }
}

pub fn cmd_index(config: &RunConfig, args: &IndexArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let embedder = embedder_for(config)?;
    let chunking = Chunking::new(args.chunk_size, args.overlap)?;
    let (documents, index) = match (&args.corpus, &args.descriptions) {
        (Some(p), None) => {
            let examples = FewShotCorpus::read_examples(p)?;
            if examples.is_empty() {
                return Err(CliError::data(anyhow::anyhow!("{}: corpus is empty", p.display())));
            }
            let n = examples.len();
            let corpus = FewShotCorpus::build(embedder.as_ref(), examples)?;
            (n, corpus.index().clone())
        }
        (None, Some(p)) => {
            let kind: TermKind = args.kind.parse()?;
            let catalog = TermCatalog::read_tsv(p)?;
            let mut index = EmbeddingIndex::new(embedder.dim());
            let mut n = 0;
            for e in catalog.of_kind(kind) {
                let text = e.description.clone().unwrap_or_else(|| e.id.clone());
                index.add(embedder.as_ref(), &e.id, &text, chunking)?;
                n += 1;
            }
            if n == 0 {
                return Err(CliError::data(anyhow::anyhow!("{}: no {kind} descriptions", p.display())));
            }
            (n, index)
        }
        _ => return Err(CliError::usage("index needs exactly one of --corpus or --descriptions")),
    };
    index.save(&args.out)?;
    emit(out, &format!("documents={documents}\nchunks={}\ndim={}\n", index.len(), index.dim()))
}

pub fn cmd_fetch(config: &RunConfig, args: &FetchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let default_kind: TermKind = args.kind.parse()?;
    let text = std::fs::read_to_string(&args.ids).map_err(|e| io_err(&args.ids, e))?;
    let mut ids = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let (id, kind) = match line.split_once('\t') {
            Some((id, k)) => (id.trim(), k.trim().parse::<TermKind>()?),
            None => (line, default_kind),
        };
        ids.push((id.to_owned(), kind));
    }
    let source = HttpDescriptionSource::new(args.url.clone(), Duration::from_secs(config.timeout_secs))?;
    let catalog = fetch_descriptions(&ids, &source, Some(&args.cache), config.workers)?;
    let missing = catalog.unfetched().count();
    emit(
        out,
        &format!("requested={}\ndescribed={}\nmissing={missing}\n", catalog.len(), catalog.len() - missing),
    )
}

fn ask_instance(config: &RunConfig, args: &AskArgs) -> QuestionInstance {
    QuestionInstance {
        id: "ask".into(),
        question: args.question.clone(),
        topic_entities: (!args.topics.is_empty()).then(|| args.topics.clone()),
        gold_answers: Vec::new(),
        gold_sparql: None,
        dataset: config.dataset.unwrap_or(eval::DatasetTag::Webqsp),
        extras: Default::default(),
    }
}

pub fn cmd_ask(
    config: &RunConfig,
    args: &AskArgs,
    trace: bool,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    let pipeline = pipeline_for(config)?;
    let instance = ask_instance(config, args);
    if matches!(config.strategy, Strategy::Ir | Strategy::MetaqaPath) && instance.topic_entities.is_none() {
        return Err(CliError::usage("this strategy needs at least one --topic"));
    }
    let answer: AnswerSet = pipeline
        .answer(&instance)
        .map_err(|e| CliError::data(anyhow::anyhow!("{e}")))?;
    if trace {
        write_jsonl(&answer.trace, &mut *err).map_err(|e| CliError::data(anyhow::anyhow!("{e}")))?;
    }
    let mut text = String::new();
    if answer.accepted {
        for a in &answer.answers {
            text.push_str(a);
            text.push('\n');
        }
    } else {
        text.push_str("no answer\n");
    }
    text.push_str(&format!("accepted={}\nllm_calls={}\n", answer.accepted, answer.llm_calls));
    if let Some(f) = &answer.failure {
        text.push_str(&format!("failure={f}\n"));
    }
    emit(out, &text)
}

pub fn cmd_eval(config: &RunConfig, args: &EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let tag = config.dataset.ok_or_else(|| CliError::usage("eval needs --dataset"))?;
    let loaded = eval::load_dataset(tag, &args.data)?;
    let mut instances = loaded.instances;
    if instances.iter().any(|i| i.gold_answers.is_empty() && i.gold_sparql.is_some()) {
        if let Some(endpoint) = endpoint_for(config)? {
            eval::fill_gold_answers(&mut instances, endpoint.as_ref(), config.gold_cache.as_deref())?;
        }
    }
    let pipeline = pipeline_for(config)?;
    let sample = match (args.sample, args.random) {
        (None, _) => Sample::All,
        (Some(n), false) => Sample::First(n),
        (Some(n), true) => Sample::Random { n, seed: config.seed },
    };
    std::fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;
    let eval_config = EvalConfig {
        normalize: config.normalize_for(Some(tag)),
        workers: config.workers,
        sample,
        checkpoint: Some(args.out.join("checkpoint.jsonl")),
        resume: args.resume,
        interrupt_after: args.interrupt_after,
    };
    let report = eval::evaluate(pipeline.as_ref(), &instances, &eval_config)?;
    report.write(&args.out)?;
    emit(out, &format!("dataset={tag}\nrecords={}\n{}", loaded.records, report.summary_text()))
}
