//! The `bpfcontain` operator tool: lint policies, replay traces and explain
//! single decisions.
//!
//! Exit codes: 0 success, 1 policy parse or validation error (or an
//! unknown policy), 2 I/O failure, 3 trace or event format error.

mod commands;

use std::io::{self, Write};
use std::path::PathBuf;
use std::str::FromStr;

use bpfcontain_core::compiler::{Capacities, MapCategory, DEFAULT_POLICY_DIR, POLICY_DIR_ENV};
use bpfcontain_core::state::ContainerState;
use bpfcontain_core::trace::TraceError;
use clap::{ArgAction, Parser, Subcommand};
use thiserror::Error;

pub use commands::{cmd_explain, cmd_lint, cmd_run};

#[derive(Debug, Parser)]
#[command(name = "bpfcontain", version, about = "Container confinement policy engine")]
pub struct Cli {
    /// Directory holding the policy files.
    #[arg(long, global = true, env = POLICY_DIR_ENV, default_value = DEFAULT_POLICY_DIR)]
    pub policy_dir: PathBuf,

    /// Override a capacity, e.g. `file=1024` or `containers=64`. Repeatable.
    #[arg(long = "capacity", value_name = "CATEGORY=N", global = true)]
    pub capacities: Vec<CapacityOverride>,

    /// More output; repeat for more.
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate every policy in the policy directory.
    Lint,
    /// Replay a JSONL event trace and summarize the decisions.
    Run {
        /// The trace to replay.
        #[arg(long)]
        trace: PathBuf,
        /// Write the audit log here as JSON Lines.
        #[arg(long)]
        audit: Option<PathBuf>,
    },
    /// Decide one event for a fresh container running the given policy.
    Explain {
        /// Name of a policy in the policy directory.
        #[arg(long)]
        policy: String,
        /// The event as inline JSON. `pid` may be omitted.
        #[arg(long)]
        event: String,
        /// Start the container tainted.
        #[arg(long)]
        tainted: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapacityTarget {
    Map(MapCategory),
    Containers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CapacityOverride {
    pub target: CapacityTarget,
    pub entries: usize,
}

impl FromStr for CapacityOverride {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, n) = s
            .split_once('=')
            .ok_or_else(|| format!("expected CATEGORY=N, got `{s}`"))?;
        let entries = n
            .parse()
            .map_err(|_| format!("`{n}` is not a valid capacity"))?;
        let target = match name {
            "containers" => CapacityTarget::Containers,
            other => CapacityTarget::Map(other.parse()?),
        };
        Ok(CapacityOverride { target, entries })
    }
}

/// Settings shared by every subcommand.
#[derive(Debug, Clone)]
pub struct CliConfig {
    pub policy_dir: PathBuf,
    pub capacities: Capacities,
    pub container_capacity: usize,
    pub verbosity: u8,
}

impl CliConfig {
    pub fn new(policy_dir: PathBuf) -> Self {
        CliConfig {
            policy_dir,
            capacities: Capacities::default(),
            container_capacity: ContainerState::DEFAULT_CAPACITY,
            verbosity: 0,
        }
    }

    pub fn apply(&mut self, o: CapacityOverride) {
        match o.target {
            CapacityTarget::Map(c) => self.capacities.set(c, o.entries),
            CapacityTarget::Containers => self.container_capacity = o.entries,
        }
    }
}

impl From<&Cli> for CliConfig {
    fn from(cli: &Cli) -> Self {
        let mut config = CliConfig::new(cli.policy_dir.clone());
        config.verbosity = cli.verbose;
        for o in &cli.capacities {
            config.apply(*o);
        }
        config
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Policy(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Format(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Policy(_) => 1,
            CliError::Io { .. } => 2,
            CliError::Format(_) => 3,
        }
    }

    fn io(context: impl Into<String>, source: io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    fn trace(context: &str, e: TraceError) -> Self {
        match e {
            TraceError::Io(source) => CliError::io(context, source),
            TraceError::Engine(e) => CliError::Policy(e.to_string()),
            other => CliError::Format(format!("{context}: {other}")),
        }
    }
}

/// Run a parsed command line, writing to the given streams. Returns the exit code.
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let config = CliConfig::from(cli);
    let result = match &cli.command {
        Command::Lint => cmd_lint(&config, out, err),
        Command::Run { trace, audit } => cmd_run(&config, trace, audit.as_deref(), out, err),
        Command::Explain {
            policy,
            event,
            tainted,
        } => cmd_explain(&config, policy, event, *tainted, out, err),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            // Nothing sensible to do if stderr itself is gone.
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
