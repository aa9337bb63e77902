use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use rulemine_core::{
    batch_stats, discover, CsvConfig, DiscoveryConfig, EventLog, FallbackPolicy, ProcessTree,
};
use rulemine_llm::evaluation::select;
use rulemine_llm::{
    load_cases, run_suite, Granularity, HttpClient, LlmClient, PromptVariant, Provider,
    ProviderConfig, ScriptedClient, SuiteOptions,
};
use thiserror::Error;

use crate::api::{router, rules_from_document, DEFAULT_SUP};
use crate::store::{load_log, AppState, LogFormat};

#[derive(Debug, Parser)]
#[command(name = "rulemine", version, about = "Rule-guided process discovery")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Discover a process tree from a log, constrained by rules.
    Discover {
        #[arg(long)]
        log: PathBuf,
        /// Rules in the interchange format; omit for unconstrained discovery.
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SUP)]
        sup: f64,
        /// Where to write the model; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Defaults to the extension of --out, else text.
        #[arg(long, value_enum)]
        format: Option<ModelFormat>,
        #[arg(long, value_enum, default_value_t = Fallback::Warn)]
        fallback: Fallback,
    },
    /// Print support and confidence of each rule on a log.
    CheckRules {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        rules: PathBuf,
    },
    /// Score rule extraction on a case file.
    Evaluate {
        #[arg(long)]
        cases: PathBuf,
        /// `scripted:<transcript file>` or `<provider>:<model>`.
        #[arg(long)]
        client: String,
        #[arg(long, value_enum, default_value_t = Variant::Few)]
        prompt_variant: Variant,
        #[arg(long, value_enum, default_value_t = Level::S2s)]
        granularity: Level,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        concurrency: usize,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, env = "RULEMINE_PORT", default_value_t = 8080)]
        port: u16,
        /// Keep JSON snapshots of logs and sessions here.
        #[arg(long)]
        state_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelFormat {
    Text,
    Json,
    Dot,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Fallback {
    Warn,
    Abort,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Variant {
    Zero,
    Few,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Level {
    S2s,
    Par,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Input(String),
    #[error("server error: {0}")]
    Serve(std::io::Error),
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_log(path: &Path) -> Result<EventLog, CliError> {
    let bytes = read(path)?;
    let (log, skipped) = load_log(&bytes, LogFormat::from_path(path), &CsvConfig::default())
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    if skipped > 0 {
        eprintln!("warning: skipped {skipped} events without an activity name");
    }
    Ok(log)
}

fn read_rules(path: &Path, log: &EventLog) -> Result<Vec<rulemine_core::Rule>, CliError> {
    let bytes = read(path)?;
    let text = String::from_utf8(bytes)
        .map_err(|_| CliError::Input(format!("{}: not UTF-8", path.display())))?;
    rules_from_document(&text, Some(log.alphabet()))
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn render(tree: &ProcessTree, format: ModelFormat) -> String {
    match format {
        ModelFormat::Text => tree.to_text() + "\n",
        ModelFormat::Json => {
            serde_json::to_string_pretty(&tree.to_json()).expect("tree JSON serializes") + "\n"
        }
        ModelFormat::Dot => tree.to_dot(),
    }
}

fn format_for(out: Option<&Path>) -> ModelFormat {
    match out.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
        Some("json") => ModelFormat::Json,
        Some("dot" | "gv") => ModelFormat::Dot,
        _ => ModelFormat::Text,
    }
}

fn build_client(spec: &str) -> Result<Box<dyn LlmClient>, CliError> {
    let (kind, rest) = spec
        .split_once(':')
        .ok_or_else(|| CliError::Input(format!("client {spec:?} is not kind:value")))?;
    if kind == "scripted" {
        let bytes = read(Path::new(rest))?;
        let text = String::from_utf8_lossy(&bytes);
        let client = ScriptedClient::from_transcript(&text)
            .map_err(|e| CliError::Input(format!("{rest}: {e}")))?;
        return Ok(Box::new(client));
    }
    let provider = Provider::from_name(kind).ok_or_else(|| {
        CliError::Input(format!(
            "unknown provider {kind:?}; use scripted, openai or anthropic"
        ))
    })?;
    let config = ProviderConfig::new(provider, rest).with_env_key();
    let client = HttpClient::new(config).map_err(|e| CliError::Input(e.to_string()))?;
    Ok(Box::new(client))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Discover {
            log,
            rules,
            sup,
            out,
            format,
            fallback,
        } => {
            let log = read_log(&log)?;
            let rules = match rules {
                Some(path) => read_rules(&path, &log)?,
                None => Vec::new(),
            };
            let policy = match fallback {
                Fallback::Warn => FallbackPolicy::WarnAndIgnoreRules,
                Fallback::Abort => FallbackPolicy::Abort,
            };
            let config = DiscoveryConfig::new(sup)
                .map_err(|e| CliError::Input(e.to_string()))?
                .with_fallback(policy);
            let result =
                discover(&log, &rules, &config).map_err(|e| CliError::Input(e.to_string()))?;
            for w in &result.warnings {
                eprintln!("warning: {w}");
            }
            let format = format.unwrap_or_else(|| format_for(out.as_deref()));
            let rendered = render(&result.tree, format);
            match out {
                Some(path) => write(&path, &rendered)?,
                None => print!("{rendered}"),
            }
            Ok(())
        }
        Command::CheckRules { log, rules } => {
            let log = read_log(&log)?;
            let rules = read_rules(&rules, &log)?;
            for stats in batch_stats(&rules, &log) {
                let stats = stats.map_err(|e| CliError::Input(e.to_string()))?;
                println!("{}", stats.report_line());
            }
            Ok(())
        }
        Command::Evaluate {
            cases,
            client,
            prompt_variant,
            granularity,
            out,
            concurrency,
        } => {
            let bytes = read(&cases)?;
            let all = load_cases(&String::from_utf8_lossy(&bytes))
                .map_err(|e| CliError::Input(format!("{}: {e}", cases.display())))?;
            let level = match granularity {
                Level::S2s => Granularity::S2s,
                Level::Par => Granularity::Par,
            };
            let chosen = select(&all, level);
            let client = build_client(&client)?;
            let options = SuiteOptions {
                variant: match prompt_variant {
                    Variant::Zero => PromptVariant::ZeroShot,
                    Variant::Few => PromptVariant::FewShot,
                },
                concurrency,
                ..SuiteOptions::default()
            };
            let report = run_suite(&chosen, client.as_ref(), options);
            eprintln!(
                "cases {}  recall {:.4}  precision {:.4}  error rate {:.4}  failure rate {:.4}",
                report.case_count,
                report.recall,
                report.precision,
                report.error_rate,
                report.failure_rate
            );
            let json = serde_json::to_string_pretty(&report).expect("reports serialize") + "\n";
            match out {
                Some(path) => write(&path, &json)?,
                None => print!("{json}"),
            }
            Ok(())
        }
        Command::Serve { port, state_dir } => {
            let state = match state_dir {
                Some(dir) => AppState::with_state_dir(&dir)
                    .map_err(|source| CliError::Io { path: dir, source })?,
                None => AppState::in_memory(),
            };
            let runtime = tokio::runtime::Runtime::new().map_err(CliError::Serve)?;
            runtime
                .block_on(serve(Arc::new(state), port))
                .map_err(CliError::Serve)?;
            runtime.shutdown_timeout(Duration::from_secs(1));
            Ok(())
        }
    }
}

async fn serve(state: Arc<AppState>, port: u16) -> std::io::Result<()> {
    let addr = SocketAddr::from(([0, 0, 0, 0], port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
