//! `intentbridge`: run the recommendation service, query it, evaluate a
//! system over a labeled test set, or rank commonsense relations.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use intentbridge_client::ServiceClient;
use intentbridge_core::api::{Overrides, RecommendRequest};
use intentbridge_core::config::BackendConfig;
use intentbridge_core::evaluator::{load_dataset, ExampleError, RunMetadata, RunReport};
use intentbridge_core::selector::{load_trigger_corpus, rank_scores, trigger_scores, Aggregation};
use intentbridge_core::{AppCatalog, EvalMode, Pipeline, PipelineConfig, Relation, SystemKind};
use intentbridge_server::{AppState, SessionLog};

#[derive(Parser)]
#[command(name = "intentbridge", version, about = "Zero-shot bot recommendation from high-level utterances")]
struct Cli {
    #[command(flatten)]
    global: Global,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML configuration file (also read from INTENTBRIDGE_CONFIG).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Point both language-model backends at one HTTP inference server.
    #[arg(long, global = true)]
    backend_url: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        listen: Option<String>,
        #[arg(long)]
        session_log: Option<PathBuf>,
    },
    /// Ask a running service for recommendations.
    Recommend(RecommendArgs),
    /// Score a system on a labeled JSON Lines test set.
    Evaluate(EvaluateArgs),
    /// Rank relations by trigger score over a corpus.
    SelectRelations(SelectArgs),
}

#[derive(Args)]
struct RecommendArgs {
    utterance: String,
    #[arg(long, env = "INTENTBRIDGE_SERVER", default_value = "http://127.0.0.1:8080")]
    server: String,
    #[arg(long)]
    system: Option<SystemKind>,
    #[arg(long)]
    k_keep: Option<u32>,
    /// Comma-separated relation tags.
    #[arg(long, value_delimiter = ',')]
    relations: Option<Vec<Relation>>,
    /// Continue an existing session.
    #[arg(long)]
    session: Option<String>,
    #[arg(long)]
    trace: bool,
    /// Print the raw JSON response.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, default_value = "proposed")]
    system: SystemKind,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    catalog: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Averaging mode marked as primary in the report (both are computed).
    #[arg(long)]
    mode: Option<EvalMode>,
    /// Query a running service instead of running the pipeline in-process.
    #[arg(long)]
    server: Option<String>,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 5)]
    top: usize,
    #[arg(long, default_value = "sum_mean_logprob")]
    aggregation: Aggregation,
    /// Candidate relations; defaults to all 23.
    #[arg(long, value_delimiter = ',')]
    relations: Option<Vec<Relation>>,
    /// Also write the ranking as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_config(cli: &Global) -> Result<PipelineConfig> {
    let mut config = PipelineConfig::from_env(cli.config.as_deref())?;
    if let Some(url) = &cli.backend_url {
        for b in [&mut config.backends.intent, &mut config.backends.app] {
            *b = match b {
                BackendConfig::Http { timeout_ms, max_retries, .. } => BackendConfig::Http {
                    url: url.clone(),
                    timeout_ms: *timeout_ms,
                    max_retries: *max_retries,
                },
                BackendConfig::Fixture { .. } => BackendConfig::Http {
                    url: url.clone(),
                    timeout_ms: 60_000,
                    max_retries: 2,
                },
            };
        }
    }
    Ok(config)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

async fn serve(cli: &Global, listen: Option<String>, session_log: Option<PathBuf>) -> Result<()> {
    let mut config = load_config(cli)?;
    if let Some(l) = listen {
        config.service.listen = l;
    }
    if let Some(p) = session_log {
        config.service.session_log = Some(p);
    }
    let sessions = match &config.service.session_log {
        Some(p) => SessionLog::open(p)?,
        None => SessionLog::in_memory(),
    };
    let addr = config.service.listen.clone();
    let pipeline = Pipeline::from_config(config)?;
    intentbridge_server::serve(AppState::new(pipeline, sessions), &addr)
        .await
        .with_context(|| format!("serving on {addr}"))
}

async fn recommend(args: RecommendArgs) -> Result<()> {
    let client = ServiceClient::new(&args.server)?;
    let overrides = Overrides {
        k_keep: args.k_keep,
        relations: args.relations,
        system: args.system,
    };
    let request = RecommendRequest {
        utterance: args.utterance,
        session_id: args.session,
        overrides: (overrides != Overrides::default()).then_some(overrides),
    };
    let resp = client.recommend(&request, args.trace).await?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&resp)?);
        return Ok(());
    }
    println!("session {} turn {} ({})", resp.session_id, resp.turn, resp.system);
    for r in &resp.recommendations {
        let relation = r.relation.map(|r| format!(" [{r}]")).unwrap_or_default();
        println!("- {} ({}){relation}", r.app, r.category);
        if let Some(rationale) = &r.rationale {
            println!("    {rationale}");
        }
    }
    for f in &resp.failures {
        eprintln!("warning: {f}");
    }
    if let Some(trace) = &resp.trace {
        println!("{}", serde_json::to_string_pretty(trace)?);
    }
    Ok(())
}

async fn evaluate(cli: &Global, args: EvaluateArgs) -> Result<()> {
    let dataset = load_dataset(open(&args.dataset)?)
        .with_context(|| format!("reading dataset {}", args.dataset.display()))?;
    if dataset.is_empty() {
        bail!("dataset {} has no examples", args.dataset.display());
    }
    if !args.catalog.exists() {
        bail!("catalog file {} does not exist", args.catalog.display());
    }
    let catalog = AppCatalog::load(&args.catalog)
        .with_context(|| format!("reading catalog {}", args.catalog.display()))?;

    let mut predictions: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut errors = Vec::new();
    let (config_hash, intent_backend, app_backend, default_mode);
    match &args.server {
        Some(url) => {
            let client = ServiceClient::new(url)?;
            let remote = client.config().await?;
            let health = client.health().await?;
            config_hash = remote.config_hash;
            default_mode = remote.config.eval_mode;
            intent_backend = health.intent_backend;
            app_backend = health.app_backend;
            let overrides = Overrides {
                system: Some(args.system),
                ..Default::default()
            };
            for ex in &dataset {
                let req = RecommendRequest {
                    utterance: ex.utterance.text().to_string(),
                    session_id: None,
                    overrides: Some(overrides.clone()),
                };
                match client.recommend(&req, false).await {
                    Ok(resp) => {
                        predictions.insert(ex.id.clone(), resp.recommendations.into_iter().map(|r| r.app).collect());
                    }
                    Err(e) => errors.push(ExampleError { id: ex.id.clone(), message: e.to_string() }),
                }
            }
        }
        None => {
            let mut config = load_config(cli)?;
            config.catalog = Some(args.catalog.clone());
            config_hash = config.hash();
            default_mode = config.eval_mode;
            let pipeline = Pipeline::from_config(config)?;
            intent_backend = pipeline.intent_backend().id();
            app_backend = pipeline.app_backend().id();
            let overrides = Overrides {
                system: Some(args.system),
                ..Default::default()
            };
            for ex in &dataset {
                match pipeline.run(&ex.utterance, &overrides).await {
                    Ok(set) => {
                        predictions.insert(ex.id.clone(), set.recommendations.into_iter().map(|r| r.app).collect());
                    }
                    Err(e) => errors.push(ExampleError { id: ex.id.clone(), message: e.to_string() }),
                }
            }
        }
    }
    for e in &errors {
        eprintln!("warning: example {}: {}", e.id, e.message);
    }
    let metadata = RunMetadata {
        system: args.system,
        config_hash,
        intent_backend,
        app_backend,
        dataset: args.dataset.display().to_string(),
        catalog: args.catalog.display().to_string(),
        examples: dataset.len(),
        failed_examples: errors.len(),
    };
    let report = RunReport::build(
        metadata,
        args.mode.unwrap_or(default_mode),
        &dataset,
        &predictions,
        &catalog,
        errors,
    )?;
    std::fs::write(&args.out, serde_json::to_string_pretty(&report)?)
        .with_context(|| format!("writing {}", args.out.display()))?;
    print!("{}", report.render_table());
    Ok(())
}

async fn select_relations(cli: &Global, args: SelectArgs) -> Result<()> {
    let corpus = load_trigger_corpus(open(&args.corpus)?)
        .with_context(|| format!("reading corpus {}", args.corpus.display()))?;
    let config = load_config(cli)?;
    let backend = config.backends.intent.build("intent")?;
    let candidates = args.relations.unwrap_or_else(|| Relation::ALL.to_vec());
    let scores = trigger_scores(
        &candidates,
        &corpus,
        backend.as_ref(),
        args.aggregation,
        config.max_concurrency,
    )
    .await?;
    let ranked = rank_scores(&scores)?;
    println!("{:<4} {:<12} {:>14} {:>6}", "rank", "relation", "T(r)", "pairs");
    for (i, s) in ranked.iter().enumerate() {
        let mark = if i < args.top { "*" } else { "" };
        println!("{:<4} {:<12} {:>14.6} {:>6} {mark}", i + 1, s.relation.tag(), s.value, s.pair_count);
    }
    let selected: Vec<&str> = ranked.iter().take(args.top).map(|s| s.relation.tag()).collect();
    println!("selected: {}", selected.join(", "));
    if let Some(out) = &args.out {
        let doc = serde_json::json!({
            "aggregation": args.aggregation,
            "corpus_entries": corpus.len(),
            "scores": ranked,
            "selected": selected,
        });
        std::fs::write(out, serde_json::to_string_pretty(&doc)?)
            .with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

/// Joins the error chain, skipping causes whose text an outer message
/// already includes.
fn render_error(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if out.contains(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let Cli { global, command } = Cli::parse();
    let outcome = match command {
        Command::Serve { listen, session_log } => serve(&global, listen, session_log).await,
        Command::Recommend(a) => recommend(a).await,
        Command::Evaluate(a) => evaluate(&global, a).await,
        Command::SelectRelations(a) => select_relations(&global, a).await,
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render_error(&e));
            ExitCode::FAILURE
        }
    }
}
