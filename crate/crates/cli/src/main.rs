use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use studymate::{
    load_or_setup, run_setup_wizard, MockServer, MockServerConfig, Store,
};
use studymate_cli::app::{
    build_engine, chat_loop, load_config, open_store, replay_fixture, student_of, LinePrompter,
    Overrides,
};

#[derive(Debug, Parser)]
#[command(name = "studymate", version, about = "Learner-profiled study companion")]
struct Cli {
    /// Configuration file written by `init`.
    #[arg(long, global = true, default_value = "studymate.toml")]
    config: PathBuf,
    /// Profile and memory database; overrides the configured path.
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    /// Keyword dictionary JSON; overrides the bundled one.
    #[arg(long, global = true)]
    dict: Option<PathBuf>,
    /// Provider name, or `mock` for the offline echo provider.
    #[arg(long, global = true)]
    provider: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the four-step setup wizard and save the configuration.
    Init {
        /// Ask again even when a configuration already exists.
        #[arg(long)]
        force: bool,
    },
    /// Chat with the companions. Runs the wizard first if needed.
    Chat {
        /// Print profile changes and fired strategy rules after each turn.
        #[arg(long)]
        show_internals: bool,
    },
    /// Show stored learner data.
    Profile {
        #[command(subcommand)]
        action: ProfileAction,
    },
    /// Print the five-dimension assessment table.
    Report {
        #[arg(long)]
        student: Option<String>,
    },
    /// Replay a scripted fixture against the mock provider.
    Replay {
        fixture: PathBuf,
        #[arg(long)]
        show_internals: bool,
    },
    /// Serve the JSON API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8787")]
        addr: SocketAddr,
    },
    /// Run an OpenAI-compatible mock chat server for local testing.
    MockServer {
        #[arg(long, default_value = "127.0.0.1:8000")]
        addr: SocketAddr,
        /// Reply used when no scripted pattern matches.
        #[arg(long)]
        reply: Option<String>,
        /// Answer this many initial requests with an error status.
        #[arg(long, default_value_t = 0)]
        fail_first: u32,
    },
}

#[derive(Debug, Subcommand)]
enum ProfileAction {
    Show {
        #[arg(long)]
        student: Option<String>,
    },
}

async fn ctrl_c() {
    let _ = tokio::signal::ctrl_c().await;
}

async fn run(cli: Cli) -> Result<ExitCode> {
    let overrides = Overrides {
        store: cli.store.clone(),
        dict: cli.dict.clone(),
        provider: cli.provider.clone(),
    };
    let stdin = io::stdin();
    let mut stdout = io::stdout();

    match cli.command {
        Command::Init { force } => {
            let base = load_config(&cli.config, &overrides)?;
            let mut io = LinePrompter::new(stdin.lock(), io::stdout());
            if force {
                let (config, profile) = run_setup_wizard(base, &mut io)?;
                config.save(&cli.config)?;
                let store = open_store(&config)?;
                if store.load_profile(&profile.student_id)?.is_none() {
                    store.save_profile(&profile)?;
                }
                println!("Saved {}", cli.config.display());
            } else {
                let store = open_store(&base)?;
                let setup = load_or_setup(&cli.config, base, store.as_ref(), &mut io)?;
                if setup.loaded_existing {
                    println!(
                        "Loaded existing configuration {} for {}. Use --force to start over.",
                        cli.config.display(),
                        setup.profile.student_id
                    );
                } else {
                    println!("Saved {}", cli.config.display());
                }
            }
        }
        Command::Chat { show_internals } => {
            let base = load_config(&cli.config, &overrides)?;
            let setup = {
                let store = open_store(&base)?;
                let mut io = LinePrompter::new(stdin.lock(), io::stdout());
                load_or_setup(&cli.config, base, store.as_ref(), &mut io)?
            };
            let mut config = setup.config;
            overrides.apply(&mut config);
            let engine = build_engine(&config, open_store(&config)?)?;
            engine.register_learner(&setup.profile).await?;
            let session = engine.open_session(&setup.profile.student_id).await?;
            println!(
                "Hi {}! Ask me anything about your studies. (provider: {})",
                setup.profile.student_id,
                engine.provider_name()
            );
            chat_loop(&engine, &session.session_id, stdin.lock(), &mut stdout, show_internals)
                .await?;
            let summary = engine.close_session(&session.session_id).await?;
            println!("{}", summary.content);
        }
        Command::Profile {
            action: ProfileAction::Show { student },
        } => {
            let config = load_config(&cli.config, &overrides)?;
            let id = student_of(&config, student.as_deref())?;
            let profile = open_store(&config)?
                .load_profile(&id)?
                .with_context(|| format!("no profile stored for {id}"))?;
            println!("{}", serde_json::to_string_pretty(&profile)?);
        }
        Command::Report { student } => {
            let config = load_config(&cli.config, &overrides)?;
            let id = student_of(&config, student.as_deref())?;
            let engine = build_engine(&config, open_store(&config)?)?;
            print!("{}", engine.assessment(&id)?.render_table());
        }
        Command::Replay {
            fixture,
            show_internals,
        } => {
            let (text, passed) = replay_fixture(&fixture, show_internals).await?;
            print!("{text}");
            if !passed {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Serve { addr } => {
            let config = load_config(&cli.config, &overrides)?;
            let engine = Arc::new(build_engine(&config, open_store(&config)?)?);
            println!("Serving on http://{addr} (provider: {})", engine.provider_name());
            studymate_cli::serve(engine, addr, ctrl_c()).await?;
        }
        Command::MockServer {
            addr,
            reply,
            fail_first,
        } => {
            let mut config = MockServerConfig {
                fail_first,
                ..MockServerConfig::default()
            };
            if let Some(r) = reply {
                config.fallback = r;
            }
            let server = MockServer::bind(addr, config).await?;
            println!("Mock chat server at {}/v1/chat/completions", server.url());
            stdout.flush()?;
            ctrl_c().await;
            server.shutdown().await;
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")),
        )
        .with_writer(io::stderr)
        .init();
    match run(Cli::parse()).await {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
