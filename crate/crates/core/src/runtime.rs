//! Small-step semantics of threads and the transition system of services:
//! local evaluation, the remote-call handshake and the raw deploy, undeploy
//! and start transitions. Nothing here checks that a transition is safe.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::adapter::{self, AdapterError};
use crate::model::*;
use crate::typeck::{LocalEnvs, TypeError};
use crate::wire::{self, WireError};

pub const DEFAULT_FUEL: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuntimeError {
    #[error("stuck: {0}")]
    Stuck(String),
    #[error("unknown service {0}")]
    UnknownService(String),
    #[error("service {0} has running threads")]
    NotQuiescent(String),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Type(#[from] TypeError),
}

fn stuck(detail: impl Into<String>) -> RuntimeError {
    RuntimeError::Stuck(detail.into())
}

/// Why a thread cannot take a local step.
#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    Await(ThreadId),
    Remote { name: String, arg: Value },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Next(Expr),
    Done(Value),
    Blocked(Block),
}

enum Hole {
    Redex,
    Call(String, Value),
    Await(ThreadId),
}

fn is_remote(m: &Module, name: &str) -> bool {
    m.def(name).is_none() && m.value_ref(name).is_some()
}

/// Leftmost-innermost position to work on, or `None` for a value.
fn find(m: &Module, e: &Expr, path: &mut Vec<usize>) -> Option<Hole> {
    let child = |i: usize, c: &Expr, path: &mut Vec<usize>| {
        path.push(i);
        let h = find(m, c, path);
        if h.is_none() {
            path.pop();
        }
        h
    };
    match e {
        Expr::Int(_) | Expr::Str(_) | Expr::Lambda { .. } => None,
        Expr::Var(_) | Expr::Fun(_) => Some(Hole::Redex),
        Expr::Await(t) => Some(Hole::Await(*t)),
        Expr::BinOp(_, l, r) => child(0, l, path).or_else(|| child(1, r, path)).or(Some(Hole::Redex)),
        Expr::Apply(f, a) => match &**f {
            Expr::Fun(name) if is_remote(m, name) => {
                child(1, a, path).or_else(|| Some(a.as_value().map_or(Hole::Redex, |v| Hole::Call(name.clone(), v))))
            }
            _ => child(0, f, path).or_else(|| child(1, a, path)).or(Some(Hole::Redex)),
        },
        Expr::Record { fields, unknown } => {
            for (i, f) in fields.iter().enumerate() {
                if let Some(h) = child(i, &f.value, path) {
                    return Some(h);
                }
            }
            for (j, (_, u)) in unknown.iter().enumerate() {
                if let Some(h) = child(fields.len() + j, u, path) {
                    return Some(h);
                }
            }
            None
        }
        Expr::Select(t, _) => child(0, t, path).or(Some(Hole::Redex)),
        Expr::Update(t, fields) => {
            if let Some(h) = child(0, t, path) {
                return Some(h);
            }
            for (i, f) in fields.iter().enumerate() {
                if let Some(h) = child(1 + i, &f.value, path) {
                    return Some(h);
                }
            }
            Some(Hole::Redex)
        }
        Expr::Convert { inner, .. } => child(0, inner, path).or(Some(Hole::Redex)),
    }
}

fn at_path<'a>(e: &'a Expr, path: &[usize]) -> &'a Expr {
    path.iter().fold(e, |e, &i| match e {
        Expr::BinOp(_, l, r) | Expr::Apply(l, r) => {
            if i == 0 {
                l
            } else {
                r
            }
        }
        Expr::Record { fields, unknown } => {
            if i < fields.len() {
                &fields[i].value
            } else {
                &unknown[i - fields.len()].1
            }
        }
        Expr::Select(t, _) | Expr::Convert { inner: t, .. } => t,
        Expr::Update(t, fields) => {
            if i == 0 {
                t
            } else {
                &fields[i - 1].value
            }
        }
        _ => unreachable!("path leads through a leaf"),
    })
}

fn at_path_mut<'a>(e: &'a mut Expr, path: &[usize]) -> &'a mut Expr {
    path.iter().fold(e, |e, &i| match e {
        Expr::BinOp(_, l, r) | Expr::Apply(l, r) => {
            if i == 0 {
                l
            } else {
                r
            }
        }
        Expr::Record { fields, unknown } => {
            let n = fields.len();
            if i < n {
                &mut fields[i].value
            } else {
                &mut unknown[i - n].1
            }
        }
        Expr::Select(t, _) | Expr::Convert { inner: t, .. } => t,
        Expr::Update(t, fields) => {
            if i == 0 {
                t
            } else {
                &mut fields[i - 1].value
            }
        }
        _ => unreachable!("path leads through a leaf"),
    })
}

fn plug(e: &Expr, path: &[usize], replacement: Expr) -> Expr {
    let mut out = e.clone();
    *at_path_mut(&mut out, path) = replacement;
    out
}

fn subst(e: &Expr, x: &str, v: &Expr) -> Expr {
    let go = |c: &Expr| Box::new(subst(c, x, v));
    let inits = |fs: &[FieldInit]| {
        fs.iter()
            .map(|f| FieldInit { label: f.label.clone(), key: f.key.clone(), value: subst(&f.value, x, v) })
            .collect()
    };
    match e {
        Expr::Var(n) if n == x => v.clone(),
        Expr::Int(_) | Expr::Str(_) | Expr::Var(_) | Expr::Fun(_) | Expr::Await(_) => e.clone(),
        Expr::Lambda { param, .. } if param == x => e.clone(),
        Expr::Lambda { param, ty, body } => Expr::Lambda { param: param.clone(), ty: ty.clone(), body: go(body) },
        Expr::BinOp(op, l, r) => Expr::BinOp(*op, go(l), go(r)),
        Expr::Apply(f, a) => Expr::Apply(go(f), go(a)),
        Expr::Record { fields, unknown } => Expr::Record {
            fields: inits(fields),
            unknown: unknown.iter().map(|(k, u)| (k.clone(), subst(u, x, v))).collect(),
        },
        Expr::Select(t, l) => Expr::Select(go(t), l.clone()),
        Expr::Update(t, fs) => Expr::Update(go(t), inits(fs)),
        Expr::Convert { from, to, inner } => Expr::Convert { from: from.clone(), to: to.clone(), inner: go(inner) },
    }
}

/// Contracts a redex whose subterms are all values.
fn reduce(m: &Module, e: &Expr) -> Result<Expr, RuntimeError> {
    match e {
        Expr::Fun(name) => {
            if let Some(Definition::Value { body, .. }) = m.def(name) {
                return Ok(body.clone());
            }
            if m.value_ref(name).is_some() {
                let envs = LocalEnvs::for_module(m)?;
                let Some(Type::Arrow(p, _)) = envs.delta.get(name) else {
                    return Err(stuck(format!("{name} has no function type")));
                };
                let x = "x";
                return Ok(Expr::lambda(x, (**p).clone(), Expr::apply(Expr::fun(name.clone()), Expr::var(x))));
            }
            Err(stuck(format!("{name} is not a function of {}", m.name)))
        }
        Expr::Var(x) => Err(stuck(format!("free variable {x}"))),
        Expr::BinOp(BinOp::Add, l, r) => match (&**l, &**r) {
            (Expr::Int(a), Expr::Int(b)) => Ok(Expr::Int(a.wrapping_add(*b))),
            (Expr::Str(a), Expr::Str(b)) => Ok(Expr::Str(format!("{a}{b}"))),
            _ => Err(stuck("operands of + differ in type")),
        },
        Expr::Apply(f, a) => match &**f {
            Expr::Lambda { param, body, .. } => Ok(subst(body, param, a)),
            _ => Err(stuck("application of a non-function")),
        },
        Expr::Select(t, label) => {
            let Some(Value::Record(r)) = t.as_value() else { return Err(stuck("selection from a non-record")) };
            r.by_label(label).map(Value::to_expr).ok_or_else(|| stuck(format!("no field {label}")))
        }
        Expr::Update(t, fields) => {
            let Some(Value::Record(mut r)) = t.as_value() else { return Err(stuck("update of a non-record")) };
            for f in fields {
                let value = f.value.as_value().ok_or_else(|| stuck("update with a non-value"))?;
                let slot =
                    r.known.iter_mut().find(|k| k.key == f.key).ok_or_else(|| stuck(format!("no field {}", f.key)))?;
                slot.label = f.label.clone();
                slot.value = value;
            }
            Ok(Value::Record(r).to_expr())
        }
        Expr::Convert { from, to, inner } => {
            let v = inner.as_value().ok_or_else(|| stuck("conversion of a non-value"))?;
            Ok(adapter::convert(&v, from, to)?.to_expr())
        }
        _ => Err(stuck("not a redex")),
    }
}

/// One local step of `e` under the definitions of `m`.
pub fn step_expr(m: &Module, e: &Expr) -> Result<Step, RuntimeError> {
    let mut path = Vec::new();
    match find(m, e, &mut path) {
        None => e.as_value().map(Step::Done).ok_or_else(|| stuck("irreducible non-value")),
        Some(Hole::Redex) => Ok(Step::Next(plug(e, &path, reduce(m, at_path(e, &path))?))),
        Some(Hole::Call(name, arg)) => Ok(Step::Blocked(Block::Remote { name, arg })),
        Some(Hole::Await(t)) => Ok(Step::Blocked(Block::Await(t))),
    }
}

// ---------------------------------------------------------------------------
// Scheduling
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchedulerPolicy {
    RoundRobin,
    Seeded(u64),
}

/// Picks one enabled transition per step.
#[derive(Debug, Clone)]
pub struct Scheduler {
    cursor: usize,
    rng: Option<ChaCha8Rng>,
}

impl Scheduler {
    pub fn new(policy: SchedulerPolicy) -> Self {
        match policy {
            SchedulerPolicy::RoundRobin => Scheduler { cursor: 0, rng: None },
            SchedulerPolicy::Seeded(seed) => Scheduler { cursor: 0, rng: Some(ChaCha8Rng::seed_from_u64(seed)) },
        }
    }

    fn pick(&mut self, n: usize) -> usize {
        match &mut self.rng {
            Some(rng) => rng.gen_range(0..n),
            None => {
                let i = self.cursor % n;
                self.cursor = self.cursor.wrapping_add(1);
                i
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event")]
pub enum Event {
    ExprStep {
        service: String,
        thread: ThreadId,
    },
    Invoked {
        consumer: String,
        producer: String,
        local: String,
        remote: String,
        caller: ThreadId,
        thread: ThreadId,
        payload: String,
    },
    Resolved {
        producer: String,
        thread: ThreadId,
        consumer: String,
        payload: String,
    },
    Rejected {
        consumer: String,
        producer: String,
        stale: DeployLabel,
        current: DeployLabel,
    },
    ProxyGenerated {
        consumer: String,
        producer: String,
        label: DeployLabel,
    },
    Deployed {
        modules: Vec<String>,
        labels: Vec<DeployLabel>,
    },
    Undeployed {
        names: Vec<String>,
    },
    Started {
        service: String,
        thread: ThreadId,
    },
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::ExprStep { .. } => "ExprStep",
            Event::Invoked { .. } => "Invoked",
            Event::Resolved { .. } => "Resolved",
            Event::Rejected { .. } => "Rejected",
            Event::ProxyGenerated { .. } => "ProxyGenerated",
            Event::Deployed { .. } => "Deployed",
            Event::Undeployed { .. } => "Undeployed",
            Event::Started { .. } => "Started",
        }
    }
}

enum Candidate {
    GenProxy { service: usize, proxy: usize },
    Expr { service: usize, thread: usize, path: Vec<usize> },
    Invoke { service: usize, thread: usize, path: Vec<usize>, name: String, arg: Value, producer: usize },
    Reject { service: usize, producer: usize },
    Resolve { service: usize, thread: usize, path: Vec<usize>, awaited: ThreadId },
}

/// Signature and label a stale proxy should be rebuilt from: the producer's
/// current ones if it moved on since the token was taken.
fn proxy_source(u: &System, producer: &str, token: &Signature, label: &DeployLabel) -> (Signature, DeployLabel) {
    if let Some(p) = u.service(producer) {
        if &p.label != label {
            if let Ok(sig) = signature_of(&p.module) {
                return (sig, p.label.clone());
            }
        }
    }
    (token.clone(), label.clone())
}

fn candidates(u: &System) -> Vec<Candidate> {
    let mut out = Vec::new();
    for (si, s) in u.services.iter().enumerate() {
        for (pi, p) in s.proxies.iter().enumerate() {
            if let Proxy::Outdated { producer, signature, label } = p {
                let (sig, _) = proxy_source(u, producer, signature, label);
                let empty = Reference { producer: producer.clone(), items: Vec::new() };
                let refs = s.module.refs_to(producer).unwrap_or(&empty);
                if adapter::gen_proxies(producer, refs, &sig).is_ok() {
                    out.push(Candidate::GenProxy { service: si, proxy: pi });
                }
            }
        }
        for (ti, t) in s.threads.iter().enumerate() {
            let mut path = Vec::new();
            match find(&s.module, &t.expr, &mut path) {
                None => {}
                Some(Hole::Redex) => out.push(Candidate::Expr { service: si, thread: ti, path }),
                Some(Hole::Await(awaited)) => {
                    if let Some((_, th)) = u.find_thread(awaited) {
                        if th.expr.is_value() {
                            out.push(Candidate::Resolve { service: si, thread: ti, path, awaited });
                        }
                    }
                }
                Some(Hole::Call(name, arg)) => {
                    let Some((producer, _)) = s.module.value_ref(&name) else { continue };
                    let Some(pi) = u.services.iter().position(|p| p.name() == producer) else { continue };
                    match s.proxy(producer) {
                        Some(Proxy::Ready { label, .. }) if *label == u.services[pi].label => {
                            out.push(Candidate::Invoke { service: si, thread: ti, path, name, arg, producer: pi })
                        }
                        Some(Proxy::Outdated { .. }) => {}
                        _ => out.push(Candidate::Reject { service: si, producer: pi }),
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Stepped(System, Event),
    /// Nothing enabled and every thread holds a value.
    Quiescent,
    /// Nothing enabled but some thread is still waiting.
    Blocked,
}

pub fn step_system(u: &System, sched: &mut Scheduler) -> Result<StepOutcome, RuntimeError> {
    let mut cands = candidates(u);
    if cands.is_empty() {
        let idle = u.services.iter().all(|s| s.threads.iter().all(|t| t.expr.is_value()));
        return Ok(if idle { StepOutcome::Quiescent } else { StepOutcome::Blocked });
    }
    let chosen = cands.swap_remove(sched.pick(cands.len()));
    let (next, event) = apply(u, chosen)?;
    Ok(StepOutcome::Stepped(next, event))
}

fn apply(u: &System, c: Candidate) -> Result<(System, Event), RuntimeError> {
    let mut next = u.clone();
    let event = match c {
        Candidate::GenProxy { service, proxy } => {
            let s = &next.services[service];
            let Proxy::Outdated { producer, signature, label } = &s.proxies[proxy] else { unreachable!() };
            let (sig, label) = proxy_source(u, producer, signature, label);
            let empty = Reference { producer: producer.clone(), items: Vec::new() };
            let entries = adapter::gen_proxies(producer, s.module.refs_to(producer).unwrap_or(&empty), &sig)?;
            let producer = producer.clone();
            let consumer = s.name().to_string();
            next.services[service].proxies[proxy] =
                Proxy::Ready { producer: producer.clone(), entries, label: label.clone() };
            Event::ProxyGenerated { consumer, producer, label }
        }
        Candidate::Expr { service, thread, path } => {
            let s = &next.services[service];
            let t = &s.threads[thread];
            let reduced = reduce(&s.module, at_path(&t.expr, &path))?;
            let (name, id) = (s.name().to_string(), t.id);
            *at_path_mut(&mut next.services[service].threads[thread].expr, &path) = reduced;
            Event::ExprStep { service: name, thread: id }
        }
        Candidate::Reject { service, producer } => {
            let p = &u.services[producer];
            let current = p.label.clone();
            let signature = signature_of(&p.module)?;
            let s = &mut next.services[service];
            let token = Proxy::Outdated { producer: p.name().to_string(), signature, label: current.clone() };
            let stale = match s.proxies.iter().position(|x| x.producer() == p.name()) {
                Some(i) => std::mem::replace(&mut s.proxies[i], token).label().clone(),
                None => {
                    s.proxies.push(token);
                    s.label.clone()
                }
            };
            Event::Rejected { consumer: s.name().to_string(), producer: p.name().to_string(), stale, current }
        }
        Candidate::Invoke { service, thread, path, name, arg, producer } => {
            let s = &u.services[service];
            let Some(Proxy::Ready { entries, .. }) = s.proxy(u.services[producer].name()) else { unreachable!() };
            let entry = entries
                .iter()
                .find(|e| e.local == name)
                .ok_or_else(|| stuck(format!("proxy of {} has no entry for {name}", s.name())))?;
            let envs = LocalEnvs::for_module(&s.module)?;
            let Some(Type::Arrow(ref_param, ref_result)) = envs.delta.get(&name) else {
                return Err(stuck(format!("{name} has no function type")));
            };
            let sent = adapter::convert(&arg, ref_param, &Type::Base(entry.param.clone()))?;
            let payload = wire::encode_to_string(&sent, &entry.param)?;
            let received = wire::decode_from_str(&payload, &entry.param)?;

            let callee = next.fresh_thread();
            next.services[producer]
                .threads
                .push(Thread { id: callee, expr: Expr::apply(Expr::fun(entry.remote.clone()), received.to_expr()) });
            let hole = Expr::Convert {
                from: Type::Base(entry.result.clone()),
                to: (**ref_result).clone(),
                inner: Box::new(Expr::Await(callee)),
            };
            *at_path_mut(&mut next.services[service].threads[thread].expr, &path) = hole;
            Event::Invoked {
                consumer: s.name().to_string(),
                producer: u.services[producer].name().to_string(),
                local: name,
                remote: entry.remote.clone(),
                caller: s.threads[thread].id,
                thread: callee,
                payload,
            }
        }
        Candidate::Resolve { service, thread, path, awaited } => {
            let (p, t) = u.find_thread(awaited).expect("resolve candidate names a live thread");
            let v = t.expr.as_value().expect("resolve candidate holds a value");
            let payload = wire::to_canonical_string(&wire::encode_untyped(&v)?);
            let producer = p.name().to_string();
            *at_path_mut(&mut next.services[service].threads[thread].expr, &path) = v.to_expr();
            for s in &mut next.services {
                s.threads.retain(|t| t.id != awaited);
            }
            Event::Resolved { producer, thread: awaited, consumer: next.services[service].name().to_string(), payload }
        }
    };
    Ok((next, event))
}

// ---------------------------------------------------------------------------
// Raw system transitions
// ---------------------------------------------------------------------------

/// Installs each module as a service with a fresh label and stale, empty
/// proxies. Existing services of the same name must be idle.
pub fn deploy(u: &System, modules: &[Module]) -> Result<(System, Event), RuntimeError> {
    for m in modules {
        if let Some(s) = u.service(&m.name) {
            if !s.is_quiescent() {
                return Err(RuntimeError::NotQuiescent(m.name.clone()));
            }
        }
    }
    let mut next = u.clone();
    let mut labels = Vec::with_capacity(modules.len());
    for m in modules {
        let label = next.fresh_label();
        let proxies = m
            .producers()
            .map(|p| Proxy::Ready { producer: p.to_string(), entries: Vec::new(), label: label.clone() })
            .collect();
        let svc = Service { module: m.clone(), proxies, label: label.clone(), threads: Vec::new() };
        match next.services.iter().position(|s| s.name() == m.name) {
            Some(i) => next.services[i] = svc,
            None => next.services.push(svc),
        }
        labels.push(label);
    }
    let modules = modules.iter().map(|m| m.name.clone()).collect();
    Ok((next, Event::Deployed { modules, labels }))
}

pub fn undeploy(u: &System, names: &BTreeSet<String>) -> Result<(System, Event), RuntimeError> {
    for n in names {
        match u.service(n) {
            None => return Err(RuntimeError::UnknownService(n.clone())),
            Some(s) if !s.is_quiescent() => return Err(RuntimeError::NotQuiescent(n.clone())),
            Some(_) => {}
        }
    }
    let mut next = u.clone();
    next.services.retain(|s| !names.contains(s.name()));
    Ok((next, Event::Undeployed { names: names.iter().cloned().collect() }))
}

pub fn start(u: &System, service: &str, e: Expr) -> Result<(System, ThreadId, Event), RuntimeError> {
    if u.service(service).is_none() {
        return Err(RuntimeError::UnknownService(service.to_string()));
    }
    let mut next = u.clone();
    let id = next.fresh_thread();
    next.service_mut(service).expect("checked above").threads.push(Thread { id, expr: e });
    Ok((next, id, Event::Started { service: service.to_string(), thread: id }))
}

/// Every awaited thread exists and is awaited exactly once.
pub fn check_await_pairing(u: &System) -> Result<(), String> {
    let mut seen = BTreeSet::new();
    for s in &u.services {
        for t in &s.threads {
            for a in t.expr.awaited_threads() {
                if u.find_thread(a).is_none() {
                    return Err(format!("{} awaits missing thread {a}", t.id));
                }
                if !seen.insert(a) {
                    return Err(format!("thread {a} is awaited twice"));
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Runs and traces
// ---------------------------------------------------------------------------

/// First 8 bytes of the SHA-256 of the canonical JSON of `u`, as hex.
/// Modules enter through their deploy label, which names one version.
pub fn state_hash(u: &System) -> String {
    #[derive(Serialize)]
    struct View<'a> {
        services: Vec<(&'a str, &'a DeployLabel, &'a [Proxy], &'a [Thread])>,
        next_label: u64,
        next_thread: u64,
    }
    let view = View {
        services: u.services.iter().map(|s| (s.name(), &s.label, &s.proxies[..], &s.threads[..])).collect(),
        next_label: u.next_label,
        next_thread: u.next_thread,
    };
    let json = serde_json::to_vec(&view).expect("systems always serialise");
    Sha256::digest(&json)[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub step: usize,
    pub hash: String,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    Quiescent,
    /// Out of fuel, or `stalled` when no transition was enabled at all.
    FuelExhausted {
        stalled: bool,
    },
    Fault(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub system: System,
    pub trace: Vec<TraceEntry>,
    /// Values of finished top-level threads, which are removed from the system.
    pub results: BTreeMap<ThreadId, Value>,
    pub status: RunStatus,
}

impl RunReport {
    pub fn count(&self, kind: &str) -> usize {
        self.trace.iter().filter(|t| t.event.kind() == kind).count()
    }
}

pub fn run_to_quiescence(u: &System, policy: SchedulerPolicy, fuel: usize) -> RunReport {
    run_observed(u, policy, fuel, |_, _| {})
}

/// Like [`run_to_quiescence`], calling `observe` on every state reached.
pub fn run_observed(
    u: &System,
    policy: SchedulerPolicy,
    fuel: usize,
    mut observe: impl FnMut(&System, &Event),
) -> RunReport {
    let mut sched = Scheduler::new(policy);
    let mut current = u.clone();
    let mut trace = Vec::new();
    let status = loop {
        if trace.len() >= fuel {
            break RunStatus::FuelExhausted { stalled: false };
        }
        match step_system(&current, &mut sched) {
            Ok(StepOutcome::Stepped(next, event)) => {
                observe(&next, &event);
                trace.push(TraceEntry { step: trace.len() + 1, hash: state_hash(&next), event });
                current = next;
            }
            Ok(StepOutcome::Quiescent) => break RunStatus::Quiescent,
            Ok(StepOutcome::Blocked) => break RunStatus::FuelExhausted { stalled: true },
            Err(e) => break RunStatus::Fault(e.to_string()),
        }
    };
    let results = harvest(&mut current);
    RunReport { system: current, trace, results, status }
}

/// Removes finished threads nobody waits for and returns their values.
pub fn harvest(u: &mut System) -> BTreeMap<ThreadId, Value> {
    let awaited: BTreeSet<ThreadId> =
        u.services.iter().flat_map(|s| s.threads.iter().flat_map(|t| t.expr.awaited_threads())).collect();
    let mut out = BTreeMap::new();
    for s in &mut u.services {
        s.threads.retain(|t| {
            if awaited.contains(&t.id) {
                return true;
            }
            match t.expr.as_value() {
                Some(v) => {
                    out.insert(t.id, v);
                    false
                }
                None => true,
            }
        });
    }
    out
}

/// One JSON object per line.
pub fn trace_to_ndjson(trace: &[TraceEntry]) -> String {
    trace.iter().map(|t| serde_json::to_string(t).expect("events always serialise") + "\n").collect()
}
