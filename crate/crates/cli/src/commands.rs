use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use bpfcontain_core::compiler::{compile, load_policy_dir, CompiledPolicyStore};
use bpfcontain_core::engine::{decide, HookEvent};
use bpfcontain_core::policy::{validate_policy_set, PolicyDocument};
use bpfcontain_core::state::{ContainerState, NamespaceInfo, NsId};
use bpfcontain_core::trace::{
    parse_trace, replay_into, AuditRecord, AuditSink, JsonlAuditWriter, TraceError,
};
use serde_json::Value;

use crate::{CliConfig, CliError};

/// The pid `explain` confines when the event does not name one.
const EXPLAIN_PID: u32 = 1;

struct LintReport {
    docs: Vec<PolicyDocument>,
    files: usize,
    errors: Vec<String>,
    warnings: Vec<String>,
}

fn lint_dir(config: &CliConfig) -> Result<LintReport, CliError> {
    let dir = &config.policy_dir;
    let loaded = load_policy_dir(dir)
        .map_err(|e| CliError::io(format!("reading {}", dir.display()), e))?;
    let mut report = LintReport {
        docs: Vec::new(),
        files: loaded.len(),
        errors: Vec::new(),
        warnings: Vec::new(),
    };
    for l in loaded {
        match l.result {
            Ok(doc) => report.docs.push(doc),
            Err(e) => report.errors.push(format!("error: {}: {e}", l.path.display())),
        }
    }
    for issue in validate_policy_set(&report.docs) {
        if issue.is_error() {
            report.errors.push(issue.to_string());
        } else {
            report.warnings.push(issue.to_string());
        }
    }
    // Name clashes were reported above; compiling would only repeat them.
    if report.errors.is_empty() {
        if let Err(e) = compile(&report.docs, config.capacities) {
            report.errors.push(format!("error: {e}"));
        }
    }
    Ok(report)
}

fn load_store(config: &CliConfig, err: &mut dyn Write) -> Result<CompiledPolicyStore, CliError> {
    let report = lint_dir(config)?;
    for w in &report.warnings {
        let _ = writeln!(err, "{w}");
    }
    if !report.errors.is_empty() {
        for e in &report.errors {
            let _ = writeln!(err, "{e}");
        }
        return Err(CliError::Policy(format!(
            "{} has {} policy error(s); run `bpfcontain lint`",
            config.policy_dir.display(),
            report.errors.len()
        )));
    }
    compile(&report.docs, config.capacities).map_err(|e| CliError::Policy(e.to_string()))
}

pub fn cmd_lint(config: &CliConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let report = lint_dir(config)?;
    let stdout = |e| CliError::io("writing output", e);
    for e in &report.errors {
        writeln!(out, "{e}").map_err(stdout)?;
    }
    for w in &report.warnings {
        writeln!(out, "{w}").map_err(stdout)?;
    }
    if config.verbosity > 0 {
        for doc in &report.docs {
            let _ = writeln!(err, "parsed {}", doc.name);
        }
    }
    writeln!(
        out,
        "{} file(s), {} policy(ies), {} error(s), {} warning(s)",
        report.files,
        report.docs.len(),
        report.errors.len(),
        report.warnings.len()
    )
    .map_err(stdout)?;
    if report.errors.is_empty() {
        Ok(())
    } else {
        Err(CliError::Policy("policy directory is not lint-clean".into()))
    }
}

/// Echoes records to stderr in verbose mode before passing them on.
struct Tee<'a, 'b> {
    inner: &'a mut dyn AuditSink,
    echo: Option<&'b mut dyn Write>,
}

impl AuditSink for Tee<'_, '_> {
    fn record(&mut self, record: AuditRecord) -> std::io::Result<()> {
        if let Some(w) = self.echo.as_mut() {
            let _ = writeln!(w, "[{}] {} | {}", record.seq, record.event, record.reason);
        }
        self.inner.record(record)
    }

    fn dropped(&self) -> u64 {
        self.inner.dropped()
    }
}

/// Counts records without keeping them.
struct Discard;

impl AuditSink for Discard {
    fn record(&mut self, _: AuditRecord) -> std::io::Result<()> {
        Ok(())
    }
}

pub fn cmd_run(
    config: &CliConfig,
    trace_path: &Path,
    audit_out: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    let store = load_store(config, err)?;
    let context = trace_path.display().to_string();
    let file = File::open(trace_path).map_err(|e| CliError::io(format!("opening {context}"), e))?;
    let trace = parse_trace(BufReader::new(file)).map_err(|e| CliError::trace(&context, e))?;
    // Reject ordering problems before any audit output is written.
    if let Some(w) = trace.windows(2).find(|w| w[1].seq <= w[0].seq) {
        let e = TraceError::OutOfOrderTrace {
            seq: w[1].seq,
            previous: w[0].seq,
        };
        return Err(CliError::trace(&context, e));
    }

    let state = ContainerState::new(config.container_capacity);
    let echo = (config.verbosity > 0).then_some(&mut *err);
    let summary = match audit_out {
        Some(path) => {
            let audit_context = path.display().to_string();
            let io_err = |e| CliError::io(format!("writing {audit_context}"), e);
            let file = File::create(path).map_err(io_err)?;
            let mut writer = JsonlAuditWriter::new(BufWriter::new(file)).map_err(io_err)?;
            let mut tee = Tee {
                inner: &mut writer,
                echo,
            };
            let (_, summary) = replay_into(&trace, &store, state, &mut tee)
                .map_err(|e| CliError::trace(&audit_context, e))?;
            writer.finish().map_err(io_err)?;
            summary
        }
        None => {
            let mut discard = Discard;
            let mut tee = Tee {
                inner: &mut discard,
                echo,
            };
            replay_into(&trace, &store, state, &mut tee)
                .map_err(|e| CliError::trace(&context, e))?
                .1
        }
    };
    writeln!(out, "{summary}").map_err(|e| CliError::io("writing output", e))
}

pub fn cmd_explain(
    config: &CliConfig,
    policy_name: &str,
    event_json: &str,
    tainted: bool,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    let store = load_store(config, err)?;
    let (policy, meta) = store
        .policy_by_name(policy_name)
        .ok_or_else(|| CliError::Policy(format!("unknown policy `{policy_name}`")))?;
    let event = parse_event(event_json)?;

    let mut state = ContainerState::new(config.container_capacity);
    let ns = NamespaceInfo {
        mount_ns: NsId(1),
        ipc_ns: NsId(1),
    };
    let container = state
        .confine_with(event.pid(), policy, meta.tainted_from_start || tainted, ns)
        .map_err(|e| CliError::Policy(e.to_string()))?;
    let started_tainted = container.tainted;
    let verdict = decide(&event, &state, &store).map_err(|e| CliError::Policy(e.to_string()))?;

    let stdout = |e| CliError::io("writing output", e);
    if config.verbosity > 0 {
        writeln!(out, "policy:  {} ({})", meta.name, policy).map_err(stdout)?;
        writeln!(out, "state:   {}", if started_tainted { "tainted" } else { "untainted" })
            .map_err(stdout)?;
        writeln!(out, "event:   {event}").map_err(stdout)?;
    }
    writeln!(out, "{}", verdict.explain()).map_err(stdout)
}

/// Parse an inline event, filling in the confined pid when it is omitted.
fn parse_event(text: &str) -> Result<HookEvent, CliError> {
    let bad = |reason: String| CliError::Format(format!("malformed event: {reason}"));
    let mut value: Value = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| bad("expected a JSON object".into()))?;
    obj.entry("pid").or_insert(Value::from(EXPLAIN_PID));
    serde_json::from_value(value).map_err(|e| bad(e.to_string()))
}
