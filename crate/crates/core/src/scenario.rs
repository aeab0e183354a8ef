//! Scripted deployment scenarios.
//!
//! One command per line; lines starting with `#` are comments.
//!
//! ```text
//! seed 7
//! fuel 500
//! deploy catalog_v1.cem marketing_v1.cem
//! call Backoffice.Improve(1)
//! expect "OK"
//! expect Rejected = 2
//! deploy catalog_v3.cem
//! expect reject k5
//! undeploy Backoffice
//! expect accept
//! ```
//!
//! `expect <literal>` checks the value of the last call, `expect <Event> = n`
//! counts events in its trace, and `expect accept|reject [key]` checks the
//! last deploy or undeploy.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::manager::{Registry, Rejection};
use crate::model::{Key, Module, Value};
use crate::runtime::{RunStatus, SchedulerPolicy, TraceEntry, DEFAULT_FUEL};
use crate::syntax::{parse_modules, parse_value, render_value};

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Seed(u64),
    Fuel(usize),
    Deploy(Vec<String>),
    Undeploy(Vec<String>),
    Call { service: String, function: String, arg: Value },
    ExpectValue(Value),
    ExpectEvents { kind: String, count: usize },
    ExpectAccept,
    ExpectReject(Option<Key>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{file}: {message}")]
    Load { file: String, message: String },
}

const EVENT_KINDS: [&str; 8] =
    ["ExprStep", "Invoked", "Resolved", "Rejected", "ProxyGenerated", "Deployed", "Undeployed", "Started"];

pub fn parse_scenario(text: &str) -> Result<Vec<(usize, Command)>, ScenarioError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let err = |message: String| ScenarioError::Syntax { line, message };
        let (word, rest) = t.split_once(char::is_whitespace).map_or((t, ""), |(w, r)| (w, r.trim()));
        let words = || rest.split_whitespace().map(String::from).collect::<Vec<_>>();
        let cmd = match word {
            "seed" => Command::Seed(rest.parse().map_err(|_| err(format!("bad seed {rest:?}")))?),
            "fuel" => Command::Fuel(rest.parse().map_err(|_| err(format!("bad fuel {rest:?}")))?),
            "deploy" if !rest.is_empty() => Command::Deploy(words()),
            "undeploy" => Command::Undeploy(words()),
            "call" => {
                let (target, arg) = rest
                    .split_once('(')
                    .and_then(|(t, a)| a.strip_suffix(')').map(|a| (t.trim(), a)))
                    .ok_or_else(|| err("expected call Service.function(literal)".into()))?;
                let (service, function) =
                    target.split_once('.').ok_or_else(|| err("expected Service.function".into()))?;
                let arg = parse_value(arg).map_err(|e| err(e.to_string()))?;
                Command::Call { service: service.into(), function: function.into(), arg }
            }
            "expect" => match rest.split_whitespace().collect::<Vec<_>>().as_slice() {
                ["accept"] => Command::ExpectAccept,
                ["reject"] => Command::ExpectReject(None),
                ["reject", key] => Command::ExpectReject(Some(Key::new(*key))),
                [kind, "=", n] if EVENT_KINDS.contains(kind) => Command::ExpectEvents {
                    kind: kind.to_string(),
                    count: n.parse().map_err(|_| err(format!("bad count {n:?}")))?,
                },
                _ => Command::ExpectValue(parse_value(rest).map_err(|e| err(e.to_string()))?),
            },
            other => return Err(err(format!("unknown command {other:?}"))),
        };
        out.push((line, cmd));
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScenarioReport {
    /// Human-readable log, one entry per command.
    pub log: Vec<String>,
    /// Every run's trace, in order, with steps numbered across the scenario.
    pub trace: Vec<TraceEntry>,
    pub failures: Vec<String>,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

enum Last {
    Nothing,
    Op(Result<(), Rejection>),
    Call { value: Option<Value>, trace: Vec<TraceEntry> },
}

/// Runs the commands against `registry`. `load` returns the text of a module
/// file named in a deploy command.
pub fn run_scenario(
    commands: &[(usize, Command)],
    registry: &mut Registry,
    load: impl Fn(&str) -> Result<String, String>,
    seed: Option<u64>,
    fuel: Option<usize>,
) -> Result<ScenarioReport, ScenarioError> {
    let mut report = ScenarioReport::default();
    let mut policy = seed.map_or(SchedulerPolicy::RoundRobin, SchedulerPolicy::Seeded);
    let mut fuel = fuel.unwrap_or(DEFAULT_FUEL);
    let mut last = Last::Nothing;
    for (line, cmd) in commands {
        let mut fail = |msg: String, log: &mut Vec<String>| {
            log.push(format!("  FAILED: {msg}"));
            report.failures.push(format!("line {line}: {msg}"));
        };
        match cmd {
            Command::Seed(s) => policy = SchedulerPolicy::Seeded(*s),
            Command::Fuel(f) => fuel = *f,
            Command::Deploy(files) => {
                let mut modules: Vec<Module> = Vec::new();
                for f in files {
                    let text = load(f).map_err(|message| ScenarioError::Load { file: f.clone(), message })?;
                    let parsed = parse_modules(&text)
                        .map_err(|e| ScenarioError::Load { file: f.clone(), message: e.to_string() })?;
                    modules.extend(parsed);
                }
                let names: Vec<&str> = modules.iter().map(|m| m.name.as_str()).collect();
                let outcome = registry.preflight_deploy(&modules);
                match &outcome {
                    Ok(a) => report.log.push(format!("deploy {}: {a}", names.join(","))),
                    Err(r) => {
                        report.log.push(format!("deploy {}: rejected", names.join(",")));
                        report.log.extend(r.lines().into_iter().map(|l| format!("  {l}")));
                    }
                }
                last = Last::Op(outcome.map(|_| ()));
            }
            Command::Undeploy(names) => {
                let set: BTreeSet<String> = names.iter().cloned().collect();
                let outcome = registry.preflight_undeploy(&set);
                match &outcome {
                    Ok(()) => report.log.push(format!("undeploy {}: accepted", names.join(","))),
                    Err(r) => report.log.push(format!("undeploy {}: rejected: {r}", names.join(","))),
                }
                last = Last::Op(outcome);
            }
            Command::Call { service, function, arg } => {
                let head = format!("call {service}.{function}({})", render_value(arg));
                match registry.call_endpoint(service, function, arg, policy, fuel) {
                    Ok(out) => {
                        let offset = report.trace.len();
                        let trace: Vec<TraceEntry> = out
                            .report
                            .trace
                            .iter()
                            .map(|t| TraceEntry { step: t.step + offset, ..t.clone() })
                            .collect();
                        report.trace.extend(trace.iter().cloned());
                        let shown = out.value.as_ref().map_or_else(|| "<unfinished>".to_string(), render_value);
                        report.log.push(format!("{head} = {shown} ({} steps)", trace.len()));
                        if out.report.status != RunStatus::Quiescent {
                            fail(format!("run ended with {:?}", out.report.status), &mut report.log);
                        }
                        last = Last::Call { value: out.value, trace };
                    }
                    Err(e) => {
                        report.log.push(format!("{head}: error: {e}"));
                        fail(e.to_string(), &mut report.log);
                        last = Last::Call { value: None, trace: Vec::new() };
                    }
                }
            }
            Command::ExpectValue(want) => match &last {
                Last::Call { value: Some(v), .. } if v == want => {
                    report.log.push(format!("expect {}: ok", render_value(want)))
                }
                Last::Call { value, .. } => fail(
                    format!(
                        "expected {}, got {}",
                        render_value(want),
                        value.as_ref().map_or("nothing".to_string(), render_value)
                    ),
                    &mut report.log,
                ),
                _ => fail("expect value without a preceding call".into(), &mut report.log),
            },
            Command::ExpectEvents { kind, count } => match &last {
                Last::Call { trace, .. } => {
                    let n = trace.iter().filter(|t| t.event.kind() == kind).count();
                    if n == *count {
                        report.log.push(format!("expect {kind} = {count}: ok"));
                    } else {
                        fail(format!("expected {count} {kind} events, saw {n}"), &mut report.log);
                    }
                }
                _ => fail("expect events without a preceding call".into(), &mut report.log),
            },
            Command::ExpectAccept => match &last {
                Last::Op(Ok(())) => report.log.push("expect accept: ok".into()),
                Last::Op(Err(r)) => fail(format!("expected acceptance, got rejection: {r}"), &mut report.log),
                _ => fail("expect accept without a preceding deploy or undeploy".into(), &mut report.log),
            },
            Command::ExpectReject(key) => match (&last, key) {
                (Last::Op(Err(r)), Some(k)) if !r.cites(k) => {
                    fail(format!("rejection does not cite {k}"), &mut report.log)
                }
                (Last::Op(Err(_)), _) => report.log.push("expect reject: ok".into()),
                (Last::Op(Ok(())), _) => fail("expected rejection, operation was accepted".into(), &mut report.log),
                _ => fail("expect reject without a preceding deploy or undeploy".into(), &mut report.log),
            },
        }
    }
    Ok(report)
}
