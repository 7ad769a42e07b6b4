use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use stemgate::cognition::{Agent, AgentConfig};
use stemgate::gateway::{admin, Gateway, GatewayConfig, CONFIG_ENV};
use stemgate::session::{self, Script};
use stemgate::skills::PluginDefinition;
use stemgate::toolhub::{demo::demo_provider, stdio};

macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "stemgate", version, about = "Adaptive multi-protocol agent gateway")]
struct Cli {
    /// Store location for profiles, skills and memory.
    #[arg(long, global = true, env = "STEMGATE_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Compact JSON on standard output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP gateway until SIGINT or SIGTERM.
    Serve {
        #[arg(long, env = CONFIG_ENV)]
        config: Option<PathBuf>,
        #[arg(long)]
        port: Option<u16>,
    },
    /// Scripted sessions.
    Session {
        #[command(subcommand)]
        command: SessionCommand,
    },
    /// Caller profiles.
    Profile {
        #[command(subcommand)]
        command: ProfileCommand,
    },
    /// Skill registry.
    Skills {
        #[command(subcommand)]
        command: SkillsCommand,
    },
    /// Memory layers.
    Memory {
        #[command(subcommand)]
        command: MemoryCommand,
    },
    /// Built-in tools.
    Tools {
        #[command(subcommand)]
        command: ToolsCommand,
    },
}

#[derive(Subcommand)]
enum SessionCommand {
    /// Replay a script; exits 1 if any assertion fails.
    Run {
        script: PathBuf,
        /// Base URL of a running gateway instead of an embedded agent.
        #[arg(long)]
        remote: Option<String>,
        #[arg(long, env = "STEMGATE_API_KEY")]
        api_key: Option<String>,
    },
}

#[derive(Subcommand)]
enum ProfileCommand {
    Show { caller_id: String },
}

#[derive(Subcommand)]
enum SkillsCommand {
    List,
    /// Register a plugin skill from a JSON definition file.
    Register {
        definition: PathBuf,
        #[arg(long)]
        remote: Option<String>,
        #[arg(long, env = "STEMGATE_API_KEY")]
        api_key: Option<String>,
    },
}

#[derive(Subcommand)]
enum MemoryCommand {
    Stats,
}

#[derive(Subcommand)]
enum ToolsCommand {
    /// Serve the demo tools as line-delimited JSON-RPC on stdin/stdout.
    ServeStdio,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self { code: EXIT_FAILURE, message: message.into() }
    }
}

fn emit(json_mode: bool, value: &Value) {
    if json_mode {
        say!("{value}");
    } else {
        say!("{}", serde_json::to_string_pretty(value).unwrap_or_default());
    }
}

async fn open_agent(data_dir: Option<&Path>) -> Result<Agent, Failure> {
    let config = AgentConfig { data_dir: data_dir.map(Path::to_path_buf), ..AgentConfig::default() };
    Agent::new(config).await.map_err(|e| Failure::runtime(format!("cannot open agent: {e}")))
}

async fn checkpoint(agent: &Agent, data_dir: Option<&Path>) -> Result<(), Failure> {
    agent.settle().await;
    match data_dir {
        Some(dir) => agent.checkpoint(dir).await.map_err(|e| Failure::runtime(format!("checkpoint failed: {e}"))),
        None => Ok(()),
    }
}

fn read_json(path: &Path) -> Result<Value, Failure> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::usage(format!("invalid JSON in {}: {e}", path.display())))
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = match signal(SignalKind::terminate()) {
            Ok(s) => s,
            Err(_) => {
                let _ = tokio::signal::ctrl_c().await;
                return;
            }
        };
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}

async fn serve(cli: &Cli, config: Option<&Path>, port: Option<u16>) -> Result<(), Failure> {
    let mut cfg = match config {
        Some(path) => GatewayConfig::from_file(path).map_err(|e| Failure::usage(e.to_string()))?,
        None => GatewayConfig::default(),
    };
    if let Some(p) = port {
        cfg.port = p;
    }
    if cli.data_dir.is_some() {
        cfg.data_dir = cli.data_dir.clone();
    }
    cfg.validate().map_err(|e| Failure::usage(e.to_string()))?;
    let data_dir = cfg.agent_config().data_dir;
    let gateway = Gateway::from_config(cfg).await.map_err(|e| Failure::usage(e.to_string()))?;
    let handle = gateway.serve().await.map_err(|e| Failure::runtime(e.to_string()))?;
    if cli.json {
        say!("{}", json!({ "listening": handle.addr().to_string() }));
    } else {
        say!("listening on {}", handle.addr());
    }
    shutdown_signal().await;
    let agent = handle.agent().clone();
    handle.shutdown().await.map_err(|e| Failure::runtime(format!("shutdown: {e}")))?;
    checkpoint(&agent, data_dir.as_deref()).await
}

async fn session_run(cli: &Cli, script: &Path, remote: Option<&str>, api_key: Option<&str>) -> Result<(), Failure> {
    let script = Script::from_file(script).map_err(Failure::usage)?;
    let report = match remote {
        Some(url) => session::run_remote(url, api_key, &script).await.map_err(Failure::runtime)?,
        None => {
            let agent = open_agent(cli.data_dir.as_deref()).await?;
            let report = session::run_embedded(&agent, &script).await;
            checkpoint(&agent, cli.data_dir.as_deref()).await?;
            report
        }
    };
    if cli.json {
        say!("{}", json!(report));
    } else {
        for t in &report.turns {
            let shortcut = t.result.get("skill_shortcut_used").and_then(Value::as_bool).unwrap_or(false);
            let phases: Vec<&str> = t
                .result
                .get("trace")
                .and_then(Value::as_array)
                .map(|a| a.iter().filter_map(|e| e.get("phase").and_then(Value::as_str)).collect())
                .unwrap_or_default();
            let status = if t.passed { "ok" } else { "FAIL" };
            say!("turn {} [{status}] {}: shortcut={shortcut} phases={}", t.turn, t.caller_id, phases.join(","));
        }
        say!("skills: {}", report.skills.len());
        for f in &report.failures {
            say!("failure: {f}");
        }
        say!("{}", if report.passed { "session passed" } else { "session failed" });
    }
    if report.passed {
        Ok(())
    } else {
        Err(Failure { code: EXIT_FAILURE, message: String::new() })
    }
}

async fn skills_register(cli: &Cli, path: &Path, remote: Option<&str>, api_key: Option<&str>) -> Result<(), Failure> {
    let raw = read_json(path)?;
    if let Some(url) = remote {
        let mut req = reqwest::Client::new().post(format!("{}/admin/skills", url.trim_end_matches('/'))).json(&raw);
        if let Some(k) = api_key {
            req = req.header("x-api-key", k);
        }
        let res = req.send().await.map_err(|e| Failure::runtime(e.to_string()))?;
        let ok = res.status().is_success();
        let body: Value = res.json().await.map_err(|e| Failure::runtime(e.to_string()))?;
        emit(cli.json, &body);
        return if ok { Ok(()) } else { Err(Failure { code: EXIT_FAILURE, message: String::new() }) };
    }
    let Some(dir) = cli.data_dir.as_deref() else {
        return Err(Failure::usage("skills register needs --data-dir, STEMGATE_DATA_DIR or --remote"));
    };
    let def: PluginDefinition =
        serde_json::from_value(raw).map_err(|e| Failure::usage(format!("invalid skill definition: {e}")))?;
    let agent = open_agent(Some(dir)).await?;
    let skill = admin::register_plugin(&agent, def).map_err(|e| Failure::runtime(e.to_string()))?;
    checkpoint(&agent, Some(dir)).await?;
    emit(cli.json, &json!(skill));
    Ok(())
}

async fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Serve { config, port } => serve(cli, config.as_deref(), *port).await,
        Command::Session { command: SessionCommand::Run { script, remote, api_key } } => {
            session_run(cli, script, remote.as_deref(), api_key.as_deref()).await
        }
        Command::Profile { command: ProfileCommand::Show { caller_id } } => {
            let agent = open_agent(cli.data_dir.as_deref()).await?;
            emit(cli.json, &admin::profile_view(&agent, caller_id));
            Ok(())
        }
        Command::Skills { command: SkillsCommand::List } => {
            let agent = open_agent(cli.data_dir.as_deref()).await?;
            emit(cli.json, &admin::skills_view(&agent));
            Ok(())
        }
        Command::Skills { command: SkillsCommand::Register { definition, remote, api_key } } => {
            skills_register(cli, definition, remote.as_deref(), api_key.as_deref()).await
        }
        Command::Memory { command: MemoryCommand::Stats } => {
            let agent = open_agent(cli.data_dir.as_deref()).await?;
            emit(cli.json, &json!(agent.memory().stats()));
            Ok(())
        }
        Command::Tools { command: ToolsCommand::ServeStdio } => {
            let provider = demo_provider();
            let stdin = tokio::io::BufReader::new(tokio::io::stdin());
            stdio::serve(&provider, stdin, tokio::io::stdout()).await.map_err(|e| Failure::runtime(e.to_string()))
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match dispatch(&cli).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("error: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}
