//! Registry of deployed modules with the preflight gate in front of the raw
//! runtime transitions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compat::{self, CompatVerdict};
use crate::model::*;
use crate::runtime::{self, RunReport, RunStatus, RuntimeError, SchedulerPolicy};
use crate::typeck::{self, Diagnostic, Diagnostics, GlobalEnv, LocalEnvs, TypeError};

/// ρ, θ and μ of one deployed module.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleFacts {
    pub produced: BTreeSet<Key>,
    pub consumed: BTreeSet<Key>,
    pub used: BTreeSet<Key>,
}

impl ModuleFacts {
    pub fn of(m: &Module) -> Self {
        ModuleFacts { produced: m.producer_keys(), consumed: m.consumer_keys(), used: compat::module_used_keys(m) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Operation {
    Deploy(Vec<String>),
    Undeploy(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub operation: Operation,
    pub accepted: bool,
    pub detail: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Rejection {
    #[error("module {0} appears twice in the batch")]
    DuplicateModule(String),
    #[error("type errors:\n{0}")]
    Type(Diagnostics),
    #[error("incompatible with the running system:\n{}", .0.report())]
    Incompatible(CompatVerdict),
    #[error("service {0} has running threads")]
    NotQuiescent(String),
    #[error("unknown service {0}")]
    UnknownService(String),
    #[error("still consumed by other services: {}", join(.0))]
    NotDisconnected(BTreeSet<Key>),
    #[error("runtime refused the transition: {0}")]
    Runtime(String),
}

fn join(keys: &BTreeSet<Key>) -> String {
    keys.iter().map(Key::as_str).collect::<Vec<_>>().join(",")
}

impl Rejection {
    /// One line per finding.
    pub fn lines(&self) -> Vec<String> {
        match self {
            Rejection::Type(d) => d.0.iter().map(|d| d.to_string()).collect(),
            Rejection::Incompatible(v) => v.violations.iter().map(|v| v.to_string()).collect(),
            other => vec![other.to_string()],
        }
    }

    /// Whether the rejection names `key` anywhere.
    pub fn cites(&self, key: &Key) -> bool {
        match self {
            Rejection::Incompatible(v) => v.violations.iter().any(|v| v.cites(key)),
            Rejection::Type(d) => d.0.iter().any(|d| {
                d.key.as_ref() == Some(key)
                    || matches!(&d.error, TypeError::RefIncompatible { field: Some(f), .. } if f == key)
            }),
            Rejection::NotDisconnected(keys) => keys.contains(key),
            _ => false,
        }
    }
}

impl From<RuntimeError> for Rejection {
    fn from(e: RuntimeError) -> Self {
        match e {
            RuntimeError::NotQuiescent(n) => Rejection::NotQuiescent(n),
            RuntimeError::UnknownService(n) => Rejection::UnknownService(n),
            other => Rejection::Runtime(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeployAccepted {
    pub labels: Vec<DeployLabel>,
    pub signature: Signature,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CallError {
    #[error("unknown service {0}")]
    UnknownService(String),
    #[error("{service} defines no function {name}")]
    UnknownFunction { service: String, name: String },
    #[error("argument does not fit the parameter: {0}")]
    ArgumentType(TypeError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CallOutcome {
    pub thread: ThreadId,
    /// `None` when the run stopped before the call finished.
    pub value: Option<Value>,
    pub report: RunReport,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Registry {
    pub system: System,
    pub phi: Signature,
    pub facts: BTreeMap<String, ModuleFacts>,
    pub history: Vec<HistoryEntry>,
}

impl Registry {
    pub fn new() -> Self {
        Registry { system: System::empty(), ..Default::default() }
    }

    fn record(&mut self, operation: Operation, outcome: Result<Vec<String>, &Rejection>) {
        let (accepted, detail) = match outcome {
            Ok(detail) => (true, detail),
            Err(r) => (false, r.lines()),
        };
        self.history.push(HistoryEntry { operation, accepted, detail });
    }

    /// Typechecks the batch against the rest of the system, checks it is
    /// compatible with what is running, then deploys it. Rejection leaves the
    /// system and signature untouched.
    pub fn preflight_deploy(&mut self, modules: &[Module]) -> Result<DeployAccepted, Rejection> {
        let op = Operation::Deploy(modules.iter().map(|m| m.name.clone()).collect());
        match self.try_deploy(modules) {
            Ok(accepted) => {
                let detail = accepted.labels.iter().map(|l| l.to_string()).collect();
                self.record(op, Ok(detail));
                Ok(accepted)
            }
            Err(r) => {
                self.record(op, Err(&r));
                Err(r)
            }
        }
    }

    fn try_deploy(&mut self, modules: &[Module]) -> Result<DeployAccepted, Rejection> {
        let mut names = BTreeSet::new();
        for m in modules {
            if !names.insert(m.name.clone()) {
                return Err(Rejection::DuplicateModule(m.name.clone()));
            }
            if let Some(s) = self.system.service(&m.name) {
                if !s.is_quiescent() {
                    return Err(Rejection::NotQuiescent(m.name.clone()));
                }
            }
        }
        let labels = self.system.peek_labels(modules.len());
        let c_base = typeck::system_env(&self.system).map_err(Rejection::Type)?.without_modules(&names);

        let mut diags = Vec::new();
        let mut p = GlobalEnv::new();
        for (m, label) in modules.iter().zip(&labels) {
            let sig = match signature_of(m) {
                Ok(sig) => sig,
                Err(e) => {
                    diags.push(Diagnostic { service: Some(m.name.clone()), key: None, error: e });
                    continue;
                }
            };
            match p.union(&GlobalEnv::from_signature(&sig, Some(label))) {
                Ok(merged) => p = merged,
                Err(k) => diags.push(Diagnostic {
                    service: Some(m.name.clone()),
                    key: Some(k.clone()),
                    error: TypeError::DuplicateKey(k),
                }),
            }
        }
        if !diags.is_empty() {
            return Err(Rejection::Type(Diagnostics(diags)));
        }
        let c = c_base.union(&p).map_err(|k| {
            Rejection::Type(Diagnostics(vec![Diagnostic {
                service: None,
                key: Some(k.clone()),
                error: TypeError::DuplicateKey(k),
            }]))
        })?;
        for (m, label) in modules.iter().zip(&labels) {
            if let Err(d) = typeck::check_module(&c.without_module(&m.name), m, Some(label)) {
                diags.extend(d.0);
            }
        }
        if !diags.is_empty() {
            return Err(Rejection::Type(Diagnostics(diags)));
        }

        let deployed: Vec<Module> = self.system.services.iter().map(|s| s.module.clone()).collect();
        let (verdict, next) = compat::module_compatibility(&self.phi, &deployed, modules, &c, &p);
        if !verdict.ok() {
            return Err(Rejection::Incompatible(verdict));
        }

        let (system, _) = runtime::deploy(&self.system, modules)?;
        self.system = system;
        self.phi = next.clone();
        for m in modules {
            self.facts.insert(m.name.clone(), ModuleFacts::of(m));
        }
        Ok(DeployAccepted { labels, signature: next })
    }

    /// Removes services nobody else depends on.
    pub fn preflight_undeploy(&mut self, names: &BTreeSet<String>) -> Result<(), Rejection> {
        let op = Operation::Undeploy(names.iter().cloned().collect());
        let outcome = self.try_undeploy(names);
        match &outcome {
            Ok(()) => self.record(op, Ok(Vec::new())),
            Err(r) => self.record(op, Err(r)),
        }
        outcome
    }

    fn try_undeploy(&mut self, names: &BTreeSet<String>) -> Result<(), Rejection> {
        let consumed = compat::consumed_keys(&self.system, names)
            .map_err(|compat::CompatError::UnknownService(n)| Rejection::UnknownService(n))?;
        if !consumed.is_empty() {
            return Err(Rejection::NotDisconnected(consumed));
        }
        let (system, _) = runtime::undeploy(&self.system, names)?;
        self.system = system;
        self.phi.entries.retain(|_, e| !names.contains(&e.module));
        self.facts.retain(|n, _| !names.contains(n));
        Ok(())
    }

    /// Starts `service.function(arg)` after checking the argument type.
    pub fn start_call(&mut self, service: &str, function: &str, arg: &Value) -> Result<ThreadId, CallError> {
        let s = self.system.service(service).ok_or_else(|| CallError::UnknownService(service.to_string()))?;
        let unknown = || CallError::UnknownFunction { service: service.to_string(), name: function.to_string() };
        let Some(Definition::Value { .. }) = s.module.def(function) else { return Err(unknown()) };
        let envs = LocalEnvs::for_module(&s.module).map_err(CallError::ArgumentType)?;
        let Some(Type::Arrow(param, _)) = envs.delta.get(function) else { return Err(unknown()) };
        typeck::check_value(arg, param).map_err(CallError::ArgumentType)?;
        let (system, id, _) = runtime::start(&self.system, service, Expr::apply(Expr::fun(function), arg.to_expr()))?;
        self.system = system;
        Ok(id)
    }

    /// Runs the live system and keeps the resulting state.
    pub fn run(&mut self, policy: SchedulerPolicy, fuel: usize) -> RunReport {
        self.run_observed(policy, fuel, |_, _| {})
    }

    pub fn run_observed(
        &mut self,
        policy: SchedulerPolicy,
        fuel: usize,
        observe: impl FnMut(&System, &runtime::Event),
    ) -> RunReport {
        let report = runtime::run_observed(&self.system, policy, fuel, observe);
        self.system = report.system.clone();
        report
    }

    /// Calls an endpoint and runs until the system settles.
    pub fn call_endpoint(
        &mut self,
        service: &str,
        function: &str,
        arg: &Value,
        policy: SchedulerPolicy,
        fuel: usize,
    ) -> Result<CallOutcome, CallError> {
        let thread = self.start_call(service, function, arg)?;
        let report = self.run(policy, fuel);
        let value = report.results.get(&thread).cloned();
        Ok(CallOutcome { thread, value, report })
    }

    pub fn query_signature(&self, name: &str) -> Result<(Signature, DeployLabel), Rejection> {
        let s = self.system.service(name).ok_or_else(|| Rejection::UnknownService(name.to_string()))?;
        Ok((self.phi.of_module(name), s.label.clone()))
    }

    /// Φ rebuilt from the deployed modules alone.
    pub fn recompute_phi(&self) -> Signature {
        let mut sig = Signature::new();
        for s in &self.system.services {
            if let Ok(own) = signature_of(&s.module) {
                sig.extend(&own);
            }
        }
        sig
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("registries always serialise")
    }

    pub fn from_json(text: &str) -> Result<Registry, serde_json::Error> {
        serde_json::from_str(text)
    }
}

impl fmt::Display for DeployAccepted {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels: Vec<String> = self.labels.iter().map(|l| l.to_string()).collect();
        write!(f, "accepted labels={} keys={}", labels.join(","), self.signature.len())
    }
}

/// Whether a finished run left the call's value behind.
pub fn finished(outcome: &CallOutcome) -> bool {
    outcome.report.status == RunStatus::Quiescent && outcome.value.is_some()
}
