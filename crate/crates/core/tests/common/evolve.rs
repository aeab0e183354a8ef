//! Random deployment histories for one producer and a few consumers.
//!
//! A `Store` module exports an `Item` record with `Make` and `Touch`
//! endpoints; client modules `C0..C2` snapshot the record, read at most one
//! of its fields and call both endpoints. The model predicts the verdict of
//! every operation and the value of every call; every state the runtime
//! passes through is typechecked against the thread types the harness tracks.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use cevo_core::manager::{Registry, Rejection};
use cevo_core::model::*;
use cevo_core::runtime::{check_await_pairing, state_hash, trace_to_ndjson, Event, RunStatus, SchedulerPolicy};
use cevo_core::syntax::parse_module;
use cevo_core::typeck::{check_system, check_value, LocalEnvs, SystemChecker, ThreadEnv};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CLIENTS: usize = 3;
const FUEL: usize = 5_000;

#[derive(Debug, Clone, PartialEq)]
struct Fld {
    label: String,
    key: Key,
    int: bool,
}

#[derive(Debug, Clone, PartialEq)]
struct Endpoint {
    name: String,
    key: Key,
}

#[derive(Debug, Clone)]
struct Store {
    fields: Vec<Fld>,
    make: Endpoint,
    /// The endpoint and the field it bumps, if any.
    touch: Option<(Endpoint, Option<Key>)>,
}

#[derive(Debug, Clone)]
struct Client {
    name: String,
    view: Vec<Fld>,
    make: Endpoint,
    touch: Option<Endpoint>,
    reads: Option<Key>,
    run: Key,
}

fn konst(k: &Key) -> i64 {
    k.as_str()[1..].parse::<i64>().unwrap() % 50
}

fn record_type(fields: &[Fld]) -> String {
    let body: Vec<String> =
        fields.iter().map(|f| format!("{}@{} : {}", f.label, f.key, if f.int { "int" } else { "string" })).collect();
    format!("{{ {} }}", body.join(", "))
}

fn store_source(s: &Store) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "module Store {{ defs {{");
    let _ = writeln!(out, "  type Item@k1 = {};", record_type(&s.fields));
    let inits: Vec<String> = s
        .fields
        .iter()
        .map(|f| {
            let v = if f.int { format!("n + {}", konst(&f.key)) } else { format!("\"s{}\"", konst(&f.key)) };
            format!("{}@{} = {v}", f.label, f.key)
        })
        .collect();
    let _ = writeln!(
        out,
        "  fun {}@{} : int -> Item@k1 = \\n : int . {{ {} }};",
        s.make.name,
        s.make.key,
        inits.join(", ")
    );
    if let Some((t, bump)) = &s.touch {
        let body = match bump.as_ref().and_then(|k| s.fields.iter().find(|f| &f.key == k)) {
            Some(f) => {
                let delta = if f.int { "1" } else { "\"!\"" };
                format!("p {{ {}@{} = p.{} + {delta} }}", f.label, f.key, f.label)
            }
            None => "p".into(),
        };
        let _ = writeln!(out, "  fun {}@{} : Item@k1 -> Item@k1 = \\p : Item@k1 . {body};", t.name, t.key);
    }
    out.push_str("} }\n");
    out
}

fn client_source(c: &Client) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "module {} {{", c.name);
    let _ = writeln!(out, "  refs {{ ref Store {{");
    let _ = writeln!(out, "    type Item@k1 : {};", record_type(&c.view));
    let _ = writeln!(out, "    fun {}@{} : int -> Item@k1;", c.make.name, c.make.key);
    if let Some(t) = &c.touch {
        let _ = writeln!(out, "    fun {}@{} : Item@k1 -> Item@k1;", t.name, t.key);
    }
    let _ = writeln!(out, "  }} }}");
    let item = match &c.touch {
        Some(t) => format!("{}({}(n))", t.name, c.make.name),
        None => format!("{}(n)", c.make.name),
    };
    let (result, body) = match c.reads.as_ref().and_then(|k| c.view.iter().find(|f| &f.key == k)) {
        Some(f) => (if f.int { "int" } else { "string" }, format!("{item}.{}", f.label)),
        None => ("Item@k1", item),
    };
    let _ = writeln!(out, "  defs {{ fun Run@{} : int -> {result} = \\n : int . {body}; }}", c.run);
    out.push_str("}\n");
    out
}

fn module(src: &str) -> Module {
    parse_module(src).unwrap_or_else(|e| panic!("generated module does not parse: {e}\n{src}"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Expect {
    Accept,
    Reject,
}

#[derive(Debug, Default, Clone)]
pub struct Stats {
    pub operations: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub calls: usize,
    pub states_checked: usize,
    pub failures: Vec<String>,
    /// Every call's trace, concatenated.
    pub trace: String,
}

impl Stats {
    pub fn merge(&mut self, other: Stats) {
        self.operations += other.operations;
        self.accepted += other.accepted;
        self.rejected += other.rejected;
        self.calls += other.calls;
        self.states_checked += other.states_checked;
        self.failures.extend(other.failures);
    }
}

struct World {
    keys: u64,
    labels: u64,
    store: Option<Store>,
    clients: Vec<Option<Client>>,
    registry: Registry,
    policy: SchedulerPolicy,
    stats: Stats,
    tag: String,
    checker: SystemChecker,
}

impl World {
    fn fresh_key(&mut self) -> Key {
        self.keys += 1;
        Key::new(format!("k{}", self.keys))
    }

    fn fresh_label(&mut self, stem: &str) -> String {
        self.labels += 1;
        format!("{stem}{}", self.labels)
    }

    fn fail(&mut self, msg: String) {
        let tag = self.tag.clone();
        self.stats.failures.push(format!("{tag}: {msg}"));
    }

    fn live_clients(&self) -> Vec<usize> {
        (0..CLIENTS).filter(|i| self.clients[*i].is_some()).collect()
    }

    fn read_keys(&self) -> BTreeSet<Key> {
        self.clients.iter().flatten().filter_map(|c| c.reads.clone()).collect()
    }

    fn settle(&mut self, what: &str, outcome: Result<(), Rejection>, expect: Expect) -> bool {
        self.stats.operations += 1;
        let ok = outcome.is_ok();
        if ok {
            self.stats.accepted += 1;
        } else {
            self.stats.rejected += 1;
        }
        match (outcome, expect) {
            (Ok(()), Expect::Reject) => self.fail(format!("{what}: accepted, expected rejection")),
            (Err(r), Expect::Accept) => {
                self.fail(format!("{what}: rejected, expected acceptance: {}", r.lines().join("; ")))
            }
            _ => {}
        }
        if ok {
            self.check_idle(what);
        }
        ok
    }

    fn check_idle(&mut self, what: &str) {
        let u = self.registry.system.clone();
        self.check_state(&u, &ThreadEnv::new(), what);
        match check_system(&ThreadEnv::new(), &u) {
            Ok(p) if p.to_signature() != self.registry.phi => {
                self.fail(format!("{what}: provided signature differs from the registry's"))
            }
            _ => {}
        }
        if self.registry.phi != self.registry.recompute_phi() {
            self.fail(format!("{what}: registry signature is stale"));
        }
    }

    fn check_state(&mut self, u: &System, gamma: &ThreadEnv, what: &str) {
        self.stats.states_checked += 1;
        let mut found = Vec::new();
        check_state(&mut self.checker, u, gamma, &mut found);
        for f in found {
            self.fail(format!("{what}: {f}"));
        }
    }

    // -- operations --------------------------------------------------------

    /// Runs a registry operation; a rejection must leave no trace but the
    /// history entry.
    fn guarded(
        &mut self,
        what: &str,
        op: impl FnOnce(&mut Registry) -> Result<(), Rejection>,
    ) -> Result<(), Rejection> {
        let before = (state_hash(&self.registry.system), self.registry.phi.clone(), self.registry.facts.clone());
        let history = self.registry.history.len();
        let outcome = op(&mut self.registry);
        if outcome.is_err() {
            let after = (state_hash(&self.registry.system), self.registry.phi.clone(), self.registry.facts.clone());
            if after != before {
                self.fail(format!("{what}: rejection changed the registry"));
            }
        }
        if self.registry.history.len() != history + 1 {
            self.fail(format!("{what}: history did not grow by one entry"));
        }
        outcome
    }

    fn deploy(&mut self, what: &str, modules: Vec<Module>, expect: Expect) -> bool {
        let outcome = self.guarded(what, |r| r.preflight_deploy(&modules).map(|_| ()));
        self.settle(what, outcome, expect)
    }

    fn snapshot(&mut self, i: usize, store: &Store, rng: &mut ChaCha8Rng) -> Client {
        let reads = if rng.gen_bool(0.8) { store.fields.choose(rng).map(|f| f.key.clone()) } else { None };
        let mut view = store.fields.clone();
        // Views sometimes keep their own labels for fields the client knew.
        if let Some(old) = &self.clients[i] {
            for f in &mut view {
                if let Some(o) = old.view.iter().find(|o| o.key == f.key) {
                    if rng.gen_bool(0.5) {
                        f.label = o.label.clone();
                    }
                }
            }
        }
        view.shuffle(rng);
        let run = match &self.clients[i] {
            Some(c) => c.run.clone(),
            None => self.fresh_key(),
        };
        Client {
            name: format!("C{i}"),
            view,
            make: Endpoint { name: format!("Mk{}", rng.gen_range(0..3)), key: store.make.key.clone() },
            touch: store
                .touch
                .as_ref()
                .map(|(t, _)| Endpoint { name: format!("Tc{}", rng.gen_range(0..3)), key: t.key.clone() }),
            reads,
            run,
        }
    }

    fn deploy_client(&mut self, i: usize, rng: &mut ChaCha8Rng) {
        let Some(store) = self.store.clone() else {
            // Nothing to bind to: any client is refused.
            let ghost = Store {
                fields: vec![Fld { label: "a".into(), key: Key::new("k1"), int: true }],
                make: Endpoint { name: "Make".into(), key: self.fresh_key() },
                touch: None,
            };
            let c = self.snapshot(i, &ghost, rng);
            self.deploy(&format!("deploy C{i} without Store"), vec![module(&client_source(&c))], Expect::Reject);
            return;
        };
        let c = self.snapshot(i, &store, rng);
        if self.deploy(&format!("deploy C{i}"), vec![module(&client_source(&c))], Expect::Accept) {
            self.clients[i] = Some(c);
        }
    }

    fn deploy_bad_client(&mut self, i: usize, rng: &mut ChaCha8Rng) {
        let Some(store) = self.store.clone() else { return };
        let mut c = self.snapshot(i, &store, rng);
        let what = match c.reads.clone().filter(|_| rng.gen_bool(0.5)) {
            Some(k) => {
                let f = c.view.iter_mut().find(|f| f.key == k).unwrap();
                f.int = !f.int;
                format!("deploy C{i} reading {k} at the wrong type")
            }
            None => {
                let k = self.fresh_key();
                c.view.push(Fld { label: self.fresh_label("ghost"), key: k.clone(), int: true });
                c.reads = Some(k.clone());
                format!("deploy C{i} reading missing {k}")
            }
        };
        self.deploy(&what, vec![module(&client_source(&c))], Expect::Reject);
    }

    fn evolve_store(&mut self, rng: &mut ChaCha8Rng) {
        let Some(old) = self.store.clone() else {
            let s = self.initial_store(rng);
            if self.deploy("redeploy Store", vec![module(&store_source(&s))], Expect::Accept) {
                self.store = Some(s);
            }
            return;
        };
        let mut s = old.clone();
        let reads = self.read_keys();
        let touch_used = self.clients.iter().flatten().any(|c| c.touch.is_some());
        let (what, expect) = match rng.gen_range(0..9) {
            0 | 1 => {
                let k = self.fresh_key();
                let label = self.fresh_label("f");
                s.fields.push(Fld { label, key: k.clone(), int: rng.gen_bool(0.5) });
                (format!("add field {k}"), Expect::Accept)
            }
            2 if !s.fields.is_empty() => {
                let i = rng.gen_range(0..s.fields.len());
                s.fields[i].label = self.fresh_label("r");
                (format!("rename field {}", s.fields[i].key), Expect::Accept)
            }
            3 | 4 if !s.fields.is_empty() => {
                let i = rng.gen_range(0..s.fields.len());
                let gone = s.fields.remove(i);
                if let Some((_, bump)) = &mut s.touch {
                    if bump.as_ref() == Some(&gone.key) {
                        *bump = s.fields.choose(rng).map(|f| f.key.clone());
                    }
                }
                let expect = if reads.contains(&gone.key) { Expect::Reject } else { Expect::Accept };
                (format!("remove field {}", gone.key), expect)
            }
            5 if !reads.is_empty() => {
                let k = reads.iter().collect::<Vec<_>>().choose(rng).map(|k| (*k).clone()).unwrap();
                if let Some(f) = s.fields.iter_mut().find(|f| f.key == k) {
                    f.int = !f.int;
                }
                (format!("change type of read field {k}"), Expect::Reject)
            }
            6 => {
                s.make.name = self.fresh_label("Make");
                if let Some((t, _)) = &mut s.touch {
                    t.name = self.fresh_label("Touch");
                }
                ("rename endpoints".to_string(), Expect::Accept)
            }
            7 => match &mut s.touch {
                Some((_, bump)) if rng.gen_bool(0.5) => {
                    *bump = s.fields.choose(rng).map(|f| f.key.clone());
                    ("retarget Touch".to_string(), Expect::Accept)
                }
                Some(_) => {
                    s.touch = None;
                    ("drop Touch".to_string(), if touch_used { Expect::Reject } else { Expect::Accept })
                }
                None => {
                    let key = self.fresh_key();
                    s.touch = Some((Endpoint { name: "Touch".into(), key }, s.fields.first().map(|f| f.key.clone())));
                    ("restore Touch".to_string(), Expect::Accept)
                }
            },
            _ => {
                // Store and one client move together; the client reads a
                // field both versions have.
                let k = self.fresh_key();
                let label = self.fresh_label("f");
                s.fields.push(Fld { label, key: k, int: rng.gen_bool(0.5) });
                let live = self.live_clients();
                if let Some(&i) = live.choose(rng) {
                    let mut c = self.snapshot(i, &s, rng);
                    let shared: Vec<&Fld> = old.fields.iter().filter(|f| s.fields.contains(f)).collect();
                    c.reads = shared.choose(rng).map(|f| f.key.clone());
                    let batch = vec![module(&store_source(&s)), module(&client_source(&c))];
                    if self.deploy(&format!("deploy Store with C{i}"), batch, Expect::Accept) {
                        self.store = Some(s);
                        self.clients[i] = Some(c);
                    }
                    return;
                }
                ("add field".to_string(), Expect::Accept)
            }
        };
        if self.deploy(&format!("Store: {what}"), vec![module(&store_source(&s))], expect) {
            self.store = Some(s);
        }
    }

    fn initial_store(&mut self, rng: &mut ChaCha8Rng) -> Store {
        let fields: Vec<Fld> = (0..rng.gen_range(1..=3))
            .map(|_| {
                let key = self.fresh_key();
                Fld { label: self.fresh_label("f"), key, int: rng.gen_bool(0.5) }
            })
            .collect();
        let make = Endpoint { name: "Make".into(), key: self.fresh_key() };
        let touch = (Endpoint { name: "Touch".into(), key: self.fresh_key() }, fields.first().map(|f| f.key.clone()));
        Store { fields, make, touch: Some(touch) }
    }

    fn undeploy(&mut self, rng: &mut ChaCha8Rng) {
        let live = self.live_clients();
        if self.store.is_some() && (live.is_empty() || rng.gen_bool(0.3)) {
            let expect = if live.is_empty() { Expect::Accept } else { Expect::Reject };
            let outcome =
                self.guarded("undeploy Store", |r| r.preflight_undeploy(&BTreeSet::from(["Store".to_string()])));
            if self.settle("undeploy Store", outcome, expect) {
                self.store = None;
            }
        } else if let Some(&i) = live.choose(rng) {
            let outcome = self.guarded("undeploy client", |r| r.preflight_undeploy(&BTreeSet::from([format!("C{i}")])));
            if self.settle(&format!("undeploy C{i}"), outcome, Expect::Accept) {
                self.clients[i] = None;
            }
        }
    }

    /// A deploy while a call is in flight must wait.
    fn busy_redeploy(&mut self, rng: &mut ChaCha8Rng) {
        let live = self.live_clients();
        let (Some(&i), Some(store)) = (live.choose(rng), self.store.clone()) else { return };
        let mut gamma = ThreadEnv::new();
        let Some(started) = self.start(i, 1, &mut gamma) else { return };
        let c = self.snapshot(i, &store, rng);
        let outcome = self.guarded("busy redeploy", |r| r.preflight_deploy(&[module(&client_source(&c))]).map(|_| ()));
        match outcome {
            Err(Rejection::NotQuiescent(_)) => {}
            other => self.fail(format!("redeploy of busy C{i}: expected NotQuiescent, got {other:?}")),
        }
        self.finish(vec![started], gamma, "busy call");
    }

    // -- calls -------------------------------------------------------------

    fn start(&mut self, i: usize, arg: i64, gamma: &mut ThreadEnv) -> Option<(ThreadId, usize, i64)> {
        let name = format!("C{i}");
        match self.registry.start_call(&name, "Run", &Value::Int(arg)) {
            Ok(t) => {
                let envs = LocalEnvs::for_module(&self.registry.system.service(&name).unwrap().module).unwrap();
                let Some(Type::Arrow(_, r)) = envs.delta.get("Run") else { unreachable!() };
                gamma.insert(t, (**r).clone());
                Some((t, i, arg))
            }
            Err(e) => {
                self.fail(format!("call {name}.Run: {e}"));
                None
            }
        }
    }

    fn expected(&self, i: usize, arg: i64) -> Option<Value> {
        let c = self.clients[i].as_ref()?;
        let store = self.store.as_ref()?;
        let k = c.reads.as_ref()?;
        let f = store.fields.iter().find(|f| &f.key == k)?;
        let bumped = matches!(&store.touch, Some((_, Some(b))) if b == k) && c.touch.is_some();
        Some(match (f.int, bumped) {
            (true, false) => Value::Int(arg + konst(k)),
            (true, true) => Value::Int(arg + konst(k) + 1),
            (false, false) => Value::Str(format!("s{}", konst(k))),
            (false, true) => Value::Str(format!("s{}!", konst(k))),
        })
    }

    fn calls(&mut self, rng: &mut ChaCha8Rng) {
        if self.store.is_none() {
            return;
        }
        let mut gamma = ThreadEnv::new();
        let mut started = Vec::new();
        for i in self.live_clients() {
            for _ in 0..rng.gen_range(0..=1) {
                let arg = rng.gen_range(-20..20);
                started.extend(self.start(i, arg, &mut gamma));
            }
        }
        if !started.is_empty() {
            self.finish(started, gamma, "calls");
        }
    }

    fn finish(&mut self, started: Vec<(ThreadId, usize, i64)>, mut gamma: ThreadEnv, what: &str) {
        self.stats.calls += started.len();
        let first = self.registry.system.clone();
        self.check_state(&first, &gamma, what);
        let mut found = Vec::new();
        let mut states = 0;
        let checker = &mut self.checker;
        let report = self.registry.run_observed(self.policy, FUEL, |u, event| {
            match event {
                Event::Invoked { producer, remote, thread, .. } => {
                    let m = &u.service(producer).unwrap().module;
                    if let Ok(envs) = LocalEnvs::for_module(m) {
                        if let Some(Type::Arrow(_, r)) = envs.delta.get(remote) {
                            gamma.insert(*thread, (**r).clone());
                        }
                    }
                }
                Event::Resolved { thread, .. } => {
                    gamma.remove(thread);
                }
                _ => {}
            }
            states += 1;
            check_state(checker, u, &gamma, &mut found);
        });
        self.stats.states_checked += states;
        for f in found {
            self.fail(format!("{what}: {f}"));
        }
        self.stats.trace.push_str(&trace_to_ndjson(&report.trace));
        if report.status != RunStatus::Quiescent {
            self.fail(format!("{what}: run ended with {:?}", report.status));
            return;
        }
        for (t, i, arg) in started {
            let Some(v) = report.results.get(&t) else {
                self.fail(format!("{what}: no result for {t}"));
                continue;
            };
            if let Some(ty) = gamma.get(&t) {
                if let Err(e) = check_value(v, ty) {
                    self.fail(format!("{what}: C{i}.Run({arg}) = {v}: {e}"));
                }
            }
            if let Some(want) = self.expected(i, arg) {
                if &want != v {
                    self.fail(format!("{what}: C{i}.Run({arg}) = {v}, expected {want}"));
                }
            }
        }
    }
}

fn check_state(checker: &mut SystemChecker, u: &System, gamma: &ThreadEnv, failures: &mut Vec<String>) {
    if let Err(d) = checker.check(gamma, u) {
        failures.push(format!("ill-typed state: {}", d.0.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")));
    }
    if let Err(e) = check_await_pairing(u) {
        failures.push(e);
    }
    let live: BTreeSet<ThreadId> = u.services.iter().flat_map(|s| s.threads.iter().map(|t| t.id)).collect();
    let typed: BTreeSet<ThreadId> = gamma.keys().copied().collect();
    if live != typed {
        failures.push(format!("live threads {live:?} but typed threads {typed:?}"));
    }
}

/// One random history, replayed under `policy`. The history depends only on
/// `scenario`, so every policy sees the same operations and verdicts.
pub fn run_history(scenario: u64, policy: SchedulerPolicy, steps: usize) -> Stats {
    let mut rng = ChaCha8Rng::seed_from_u64(scenario);
    let mut w = World {
        keys: 1,
        labels: 0,
        store: None,
        clients: vec![None; CLIENTS],
        registry: Registry::new(),
        policy,
        stats: Stats::default(),
        tag: format!("scenario {scenario} {policy:?}"),
        checker: SystemChecker::new(),
    };
    w.evolve_store(&mut rng);
    for i in 0..CLIENTS {
        if rng.gen_bool(0.7) {
            w.deploy_client(i, &mut rng);
        }
    }
    for step in 0..steps {
        w.tag = format!("scenario {scenario} {policy:?} step {step}");
        match rng.gen_range(0..10) {
            0..=3 => w.evolve_store(&mut rng),
            4 | 5 => w.deploy_client(rng.gen_range(0..CLIENTS), &mut rng),
            6 => w.deploy_bad_client(rng.gen_range(0..CLIENTS), &mut rng),
            7 => w.undeploy(&mut rng),
            _ => w.busy_redeploy(&mut rng),
        }
        w.calls(&mut rng);
    }
    w.stats
}
