use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use duplexcap_asr::{inject_errors, read_script, ReplayMode, ReplaySource};
use duplexcap_core::{validate_config, CaptionConfig, ConfigPatch, SessionId};
use duplexcap_server::{
    merge_inputs, read_commands, replay_log, serve, ReplayError, Runtime, ServerOptions, SessionHandle,
};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "duplexcap", version, about = "Dual-face live caption session service")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Speed {
    Realtime,
    Fast,
}

#[derive(Subcommand)]
enum Command {
    /// Run the live session server.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// JSON file with config fields; unset fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory for the session log.
        #[arg(long)]
        log_dir: Option<PathBuf>,
        #[arg(long, default_value = "default")]
        session_id: String,
        /// Feed a transcript script in real time instead of waiting for ASR input.
        #[arg(long)]
        script: Option<PathBuf>,
    },
    /// Run a script through the session and print one JSON line per broadcast.
    Replay {
        #[arg(long)]
        script: PathBuf,
        #[arg(long, value_enum, default_value_t = Speed::Fast)]
        speed: Speed,
        /// Control commands to interleave, JSON lines with `at_ms`.
        #[arg(long)]
        commands: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Word substitution rate applied to finals.
        #[arg(long)]
        error_rate: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "default")]
        session_id: String,
    },
    /// Replay a session log, verify its frame digests and summarize it.
    InspectLog { file: PathBuf },
}

fn load_config(path: Option<&Path>) -> anyhow::Result<CaptionConfig> {
    let Some(path) = path else { return Ok(CaptionConfig::default()) };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let patch = ConfigPatch::from_value(serde_json::from_str(&text)?)?;
    Ok(validate_config(&patch, &CaptionConfig::default())?)
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Serve { port, config, log_dir, session_id, script } => {
            let options = ServerOptions {
                session_id: SessionId::from(session_id),
                config: load_config(config.as_deref())?,
                log_dir,
            };
            run_server(port, options, script).await
        }
        Command::Replay { script, speed, commands, config, error_rate, seed, session_id } => {
            let entries = read_script(&script)?;
            let source = ReplaySource::new(SessionId::from(session_id.clone()), entries)?;
            let mut events: Vec<_> = source.fast_events().collect();
            if let Some(rate) = error_rate {
                anyhow::ensure!((0.0..=1.0).contains(&rate), "--error-rate must be in [0, 1]");
                events = inject_errors(events, rate, seed).collect();
            }
            let commands = match commands {
                Some(p) => read_commands(p)?,
                None => Vec::new(),
            };
            let inputs = merge_inputs(events, commands);
            let mut runtime = Runtime::new(session_id.into(), &load_config(config.as_deref())?, 0);
            runtime.set_logging(false);
            let start = tokio::time::Instant::now();
            for b in duplexcap_server::replay::VirtualDriver::new(&mut runtime, &inputs) {
                if let Speed::Realtime = speed {
                    tokio::time::sleep_until(start + Duration::from_millis(b.frame_ts().max(0) as u64)).await;
                }
                println!("{}", b.record_line());
            }
            Ok(())
        }
        Command::InspectLog { file } => inspect_log(&file),
    }
}

async fn run_server(port: u16, options: ServerOptions, script: Option<PathBuf>) -> anyhow::Result<()> {
    let handle = SessionHandle::spawn(options)?;
    if let Some(path) = script {
        let source = ReplaySource::new(handle.session_id().clone(), read_script(&path)?)?;
        let feeder = handle.clone();
        tokio::spawn(async move {
            let mut stream = source.stream(ReplayMode::Realtime);
            while let Some(event) = stream.next().await {
                feeder.submit_event(event).await;
            }
            tracing::info!("script finished");
        });
    }
    let listener = tokio::net::TcpListener::bind(SocketAddr::from(([0, 0, 0, 0], port))).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    if let Some(p) = handle.log_path() {
        tracing::info!("session log at {}", p.display());
    }
    serve(listener, handle, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    Ok(())
}

fn inspect_log(path: &Path) -> anyhow::Result<()> {
    let replayed = match replay_log(path) {
        Ok(r) => r,
        Err(ReplayError::CorruptLog { line, reason, partial }) => {
            eprintln!("corrupt at line {line}: {reason}; {} records before it", partial.records);
            std::process::exit(2);
        }
        Err(ReplayError::DigestMismatch { line, partial }) => {
            eprintln!("digest mismatch at line {line}; {} digests matched before it", partial.digests_verified);
            std::process::exit(3);
        }
        Err(e) => return Err(e.into()),
    };
    let session = replayed.runtime.session();
    println!("session {}", session.session_id());
    println!("records {}", replayed.records);
    println!("digests verified {}", replayed.digests_verified);
    println!("config_rev {}", session.config_rev());
    for u in &session.state().utterances {
        println!("{} {:?} {:?}", u.utterance_id, u.status, u.text());
    }
    Ok(())
}
