//! `repograph`: build, annotate, query and search repository graphs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde_json::json;

use repograph::annotate::{annotate_graph, embed_graph, AnnotateError, DEFAULT_EMBED_BATCH, DEFAULT_SIZE_LIMIT};
use repograph::builder::{build, kind_histogram, BuildOptions};
use repograph::cypher::{execute, parse_cypher};
use repograph::encoders::wire::{DESCRIBE_URL_VAR, EMBED_URL_VAR, RERANK_URL_VAR, TIMEOUT_VAR, TRANSLATE_URL_VAR};
use repograph::encoders::{
    Describer, Embedder, LocalDescriber, LocalEmbedder, LocalReranker, Reranker, WireConfig, WireDescriber,
    WireEmbedder, WireReranker,
};
use repograph::eval::{run_benchmark, Mode, Qrels, Retrieval};
use repograph::graph::CodeGraph;
use repograph::mcts::{search, Extraction, SearchConfig, SearchError};
use repograph::parser::ScanOptions;
use repograph::router::{route, PromptStyle, QueryTranslator, RuleBasedTranslator, WireTranslator};

#[derive(Parser, Debug)]
#[command(name = "repograph", version, about = "Repository code graphs with structural and semantic retrieval")]
struct Cli {
    /// Log level for stderr: error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse a repository into a graph file.
    Index(IndexArgs),
    /// Describe and embed every annotatable node.
    Annotate(AnnotateArgs),
    /// Run a Cypher-subset query.
    Query(QueryArgs),
    /// Tree search for nodes relevant to a natural-language query.
    Search(SearchArgs),
    /// Try an entity lookup first, fall back to tree search.
    Route(RouteArgs),
    /// Score retrieval against relevance judgments.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
struct IndexArgs {
    root: PathBuf,
    #[arg(long)]
    repo_name: String,
    #[arg(long)]
    out: PathBuf,
    /// Glob of files to keep; repeatable.
    #[arg(long)]
    include: Vec<String>,
    /// Glob of files to drop; repeatable.
    #[arg(long)]
    exclude: Vec<String>,
}

#[derive(Args, Debug)]
struct AnnotateArgs {
    #[arg(long)]
    graph: PathBuf,
    /// `local` or a describer URL.
    #[arg(long)]
    describer: Option<String>,
    /// `local` or an embedder URL.
    #[arg(long)]
    embedder: Option<String>,
    /// Source size in characters above which descriptions are composed from members.
    #[arg(long, default_value_t = DEFAULT_SIZE_LIMIT)]
    size_limit: usize,
    /// Output path; defaults to overwriting the input graph.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct QueryArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, required_unless_present = "file", conflicts_with = "file")]
    cypher: Option<String>,
    #[arg(long)]
    file: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct SearchFlags {
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    k_init: Option<usize>,
    #[arg(long)]
    k_min: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, value_enum, default_value = "simulation-mean")]
    extraction: ExtractionArg,
    /// `local` or a reranker URL.
    #[arg(long)]
    reranker: Option<String>,
    /// `local` or an embedder URL.
    #[arg(long)]
    embedder: Option<String>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ExtractionArg {
    SimulationMean,
    VisitMean,
}

#[derive(Args, Debug)]
struct SearchArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    query: String,
    #[command(flatten)]
    flags: SearchFlags,
}

#[derive(Args, Debug, Clone)]
struct TranslatorFlags {
    /// `local` or a translator URL.
    #[arg(long)]
    translator: Option<String>,
    #[arg(long, value_enum, default_value = "completion")]
    prompt: PromptArg,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum PromptArg {
    Completion,
    Snippet,
}

#[derive(Args, Debug)]
struct RouteArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    query: String,
    #[command(flatten)]
    translator: TranslatorFlags,
    #[command(flatten)]
    flags: SearchFlags,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ModeArg {
    Mcts,
    Entity,
    Router,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Comma-separated iteration counts.
    #[arg(long, value_delimiter = ',')]
    sweep: Option<Vec<usize>>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the sweep curves as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Record wall-clock timings; makes the report non-reproducible.
    #[arg(long)]
    timings: bool,
    #[command(flatten)]
    translator: TranslatorFlags,
    #[command(flatten)]
    flags: SearchFlags,
}

/// A failed run and the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

const USAGE: u8 = 1;
const BACKEND: u8 = 2;

fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: USAGE, error: error.into() }
}

fn backend(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: BACKEND, error: error.into() }
}

fn search_failure(e: SearchError) -> Failure {
    match e {
        SearchError::Encoder(_) => backend(e),
        _ => usage(e),
    }
}

fn annotate_failure(e: AnnotateError) -> Failure {
    match e {
        AnnotateError::DescriberUnavailable(_) | AnnotateError::EmbedderUnavailable(_) => backend(e),
        _ => usage(e),
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return ExitCode::SUCCESS;
            }
            if let Some(name) = std::env::args().skip(1).find(|a| !a.starts_with('-')) {
                print_subcommand_help(&name);
            }
            return ExitCode::from(USAGE);
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    let (name, result) = match cli.command {
        Command::Index(a) => ("index", index(a)),
        Command::Annotate(a) => ("annotate", annotate(a)),
        Command::Query(a) => ("query", query(a)),
        Command::Search(a) => ("search", run_search(a)),
        Command::Route(a) => ("route", run_route(a)),
        Command::Eval(a) => ("eval", eval(a)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            if f.code == USAGE {
                print_subcommand_help(name);
            }
            ExitCode::from(f.code)
        }
    }
}

fn print_subcommand_help(name: &str) {
    let mut cmd = Cli::command();
    cmd.build();
    if let Some(sub) = cmd.find_subcommand_mut(name) {
        eprintln!();
        let _ = sub.write_help(&mut std::io::stderr());
    }
}

/// Print one line to stdout; a closed pipe is not an error.
fn emit(text: &str) -> Outcome {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(usage(e)),
        _ => Ok(()),
    }
}

fn wire_config(url: &str) -> WireConfig {
    let mut cfg = WireConfig::new(url);
    if let Some(ms) = std::env::var(TIMEOUT_VAR).ok().and_then(|v| v.parse::<u64>().ok()) {
        cfg.timeout = Duration::from_millis(ms);
    }
    cfg
}

/// The flag value, else the environment variable, else `local`.
fn backend_choice(flag: &Option<String>, var: &str) -> Option<String> {
    let choice = flag
        .clone()
        .or_else(|| std::env::var(var).ok().filter(|v| !v.trim().is_empty()))
        .unwrap_or_else(|| "local".into());
    (choice != "local").then_some(choice)
}

fn make_embedder(flag: &Option<String>, graph: &CodeGraph) -> Box<dyn Embedder> {
    match backend_choice(flag, EMBED_URL_VAR) {
        Some(url) => Box::new(WireEmbedder::new(wire_config(&url), graph.embedding_dim())),
        None => match graph.embedding_dim() {
            Some(d) => Box::new(LocalEmbedder::new(d)),
            None => Box::new(LocalEmbedder::default()),
        },
    }
}

fn make_reranker(flag: &Option<String>) -> Box<dyn Reranker> {
    match backend_choice(flag, RERANK_URL_VAR) {
        Some(url) => Box::new(WireReranker::new(wire_config(&url))),
        None => Box::new(LocalReranker),
    }
}

fn make_describer(flag: &Option<String>) -> Box<dyn Describer> {
    match backend_choice(flag, DESCRIBE_URL_VAR) {
        Some(url) => Box::new(WireDescriber::new(wire_config(&url))),
        None => Box::new(LocalDescriber::default()),
    }
}

fn make_translator(flags: &TranslatorFlags) -> Box<dyn QueryTranslator> {
    match backend_choice(&flags.translator, TRANSLATE_URL_VAR) {
        Some(url) => {
            let style = match flags.prompt {
                PromptArg::Completion => PromptStyle::Completion,
                PromptArg::Snippet => PromptStyle::Snippet,
            };
            Box::new(WireTranslator::new(wire_config(&url), style))
        }
        None => Box::new(RuleBasedTranslator),
    }
}

fn load_graph(path: &Path) -> Result<CodeGraph, Failure> {
    CodeGraph::load(path).with_context(|| format!("loading graph {}", path.display())).map_err(usage)
}

fn save_graph(graph: &CodeGraph, path: &Path) -> Outcome {
    graph.save(path).with_context(|| format!("writing graph {}", path.display())).map_err(usage)
}

fn write_file(path: &Path, contents: &str) -> Outcome {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display())).map_err(usage)
}

/// A graph without any embedding is annotated in memory with the local
/// describer and embedded with the chosen embedder.
fn ensure_embedded(graph: &mut CodeGraph, embedder: &dyn Embedder) -> Outcome {
    if graph.embedding_dim().is_some() {
        return Ok(());
    }
    warn!("graph has no embeddings; annotating in memory with the local describer");
    annotate_graph(graph, &LocalDescriber::default(), DEFAULT_SIZE_LIMIT).map_err(annotate_failure)?;
    embed_graph(graph, embedder, DEFAULT_EMBED_BATCH).map_err(annotate_failure)?;
    Ok(())
}

fn search_config(graph: &CodeGraph, flags: &SearchFlags) -> Result<SearchConfig, Failure> {
    let mut cfg = SearchConfig::defaults_for(graph);
    if let Some(v) = flags.iterations {
        cfg.iterations = v;
    }
    if let Some(v) = flags.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = flags.c {
        cfg.c = v;
    }
    if let Some(v) = flags.k_min {
        cfg.k_min = v;
    }
    if let Some(v) = flags.k_init {
        cfg.k_init = v;
    } else {
        cfg.k_init = cfg.k_init.max(cfg.k_min);
    }
    if let Some(v) = flags.budget {
        cfg.budget = v;
    }
    cfg.extraction = match flags.extraction {
        ExtractionArg::SimulationMean => Extraction::SimulationMean,
        ExtractionArg::VisitMean => Extraction::VisitMean,
    };
    cfg.validate().map_err(usage)?;
    info!(
        "search config: T={} alpha={} c={} k_init={} k_min={} B={}",
        cfg.iterations, cfg.alpha, cfg.c, cfg.k_init, cfg.k_min, cfg.budget
    );
    Ok(cfg)
}

fn resolution_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "graph".into());
    out.with_file_name(format!("{stem}.resolution.json"))
}

fn index(a: IndexArgs) -> Outcome {
    let options = BuildOptions { scan: ScanOptions { include: a.include, exclude: a.exclude } };
    let built = build(&a.root, &a.repo_name, &options)
        .with_context(|| format!("indexing {}", a.root.display()))
        .map_err(usage)?;
    for d in &built.diagnostics {
        warn!("{}: {}", d.path, d.message);
    }
    save_graph(&built.graph, &a.out)?;
    write_file(&resolution_path(&a.out), &built.report.to_json())?;
    let kinds: serde_json::Map<String, serde_json::Value> = kind_histogram(&built.graph)
        .into_iter()
        .map(|(k, n)| (k.as_str().to_string(), json!(n)))
        .collect();
    let summary = json!({
        "nodes": built.graph.node_count(),
        "edges": built.graph.edge_count(),
        "kinds": kinds,
        "imports_resolved": built.report.resolved,
        "imports_unresolved": built.report.unresolved.len(),
        "diagnostics": built.diagnostics.len(),
    });
    emit(&summary.to_string())?;
    Ok(())
}

fn annotate(a: AnnotateArgs) -> Outcome {
    let mut graph = load_graph(&a.graph)?;
    let describer = make_describer(&a.describer);
    let embedder = make_embedder(&a.embedder, &CodeGraph::default());
    let described = annotate_graph(&mut graph, describer.as_ref(), a.size_limit).map_err(annotate_failure)?;
    let embedded = embed_graph(&mut graph, embedder.as_ref(), DEFAULT_EMBED_BATCH).map_err(annotate_failure)?;
    save_graph(&graph, a.out.as_deref().unwrap_or(&a.graph))?;
    let summary = json!({
        "described_direct": described.direct,
        "described_composed": described.composed,
        "undescribed": described.skipped.len(),
        "embedded": embedded.embedded,
        "dim": graph.embedding_dim(),
    });
    emit(&summary.to_string())?;
    if !described.skipped.is_empty() {
        return Err(backend(anyhow!("{} nodes left undescribed; rerun once the describer is reachable", described.skipped.len())));
    }
    Ok(())
}

fn query(a: QueryArgs) -> Outcome {
    let graph = load_graph(&a.graph)?;
    let text = match (a.cypher, a.file) {
        (Some(t), _) => t,
        (None, Some(f)) => fs::read_to_string(&f).with_context(|| format!("reading {}", f.display())).map_err(usage)?,
        (None, None) => return Err(usage(anyhow!("one of --cypher or --file is required"))),
    };
    let plan = parse_cypher(&text).map_err(usage)?;
    let table = execute(&graph, &plan);
    emit(&table.to_json())?;
    Ok(())
}

fn run_search(a: SearchArgs) -> Outcome {
    let mut graph = load_graph(&a.graph)?;
    let embedder = make_embedder(&a.flags.embedder, &graph);
    let reranker = make_reranker(&a.flags.reranker);
    ensure_embedded(&mut graph, embedder.as_ref())?;
    let cfg = search_config(&graph, &a.flags)?;
    let result = search(&graph, &a.query, embedder.as_ref(), reranker.as_ref(), &cfg).map_err(search_failure)?;
    emit(&result.to_json())?;
    if result.partial {
        return Err(backend(anyhow!("reranker failed after {} iterations; ranking is partial", result.iterations_run)));
    }
    Ok(())
}

fn run_route(a: RouteArgs) -> Outcome {
    let mut graph = load_graph(&a.graph)?;
    let embedder = make_embedder(&a.flags.embedder, &graph);
    let reranker = make_reranker(&a.flags.reranker);
    let translator = make_translator(&a.translator);
    ensure_embedded(&mut graph, embedder.as_ref())?;
    let cfg = search_config(&graph, &a.flags)?;
    let response = route(&graph, &a.query, translator.as_ref(), embedder.as_ref(), reranker.as_ref(), &cfg)
        .map_err(search_failure)?;
    emit(&response.to_json())?;
    if response.ranked_nodes.as_ref().is_some_and(|r| r.partial) {
        return Err(backend(anyhow!("reranker failed during the search fallback; ranking is partial")));
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Outcome {
    let mut graph = load_graph(&a.graph)?;
    let qrels = Qrels::load(&a.qrels).with_context(|| format!("loading qrels {}", a.qrels.display())).map_err(usage)?;
    let embedder = make_embedder(&a.flags.embedder, &graph);
    let reranker = make_reranker(&a.flags.reranker);
    let translator = make_translator(&a.translator);
    let mode = match a.mode {
        ModeArg::Mcts => Mode::Mcts,
        ModeArg::Entity => Mode::Entity,
        ModeArg::Router => Mode::Router,
    };
    if mode != Mode::Entity {
        ensure_embedded(&mut graph, embedder.as_ref())?;
    }
    let config = search_config(&graph, &a.flags)?;
    if let Some(s) = &a.sweep {
        if s.is_empty() || s.contains(&0) {
            return Err(usage(anyhow!("--sweep needs positive iteration counts")));
        }
    }
    let retrieval = Retrieval {
        mode,
        embedder: embedder.as_ref(),
        reranker: reranker.as_ref(),
        translator: translator.as_ref(),
        config,
        timings: a.timings,
    };
    let report = run_benchmark(&graph, &qrels, &retrieval, a.sweep.as_deref());
    write_file(&a.out, &report.to_json())?;
    if let Some(path) = &a.csv {
        match report.sweep_csv() {
            Some(csv) => write_file(path, &csv)?,
            None => warn!("--csv given without --sweep; nothing written"),
        }
    }
    for qid in &report.failed_queries {
        warn!("query {qid} failed");
    }
    let summary = json!({
        "mode": report.mode,
        "scored_queries": report.scored_queries,
        "excluded_queries": report.excluded_queries.len(),
        "failed_queries": report.failed_queries.len(),
        "aggregate": report.aggregate,
    });
    emit(&summary.to_string())?;
    let attempted = qrels.queries.len();
    if attempted > 0 && report.failed_queries.len() == attempted {
        return Err(backend(anyhow!("every query failed; see the report for errors")));
    }
    Ok(())
}
