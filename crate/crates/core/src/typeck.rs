//! Typing of expressions, modules, services and systems.
//!
//! Expression typing is plain simply-typed lambda calculus with records: no
//! subsumption. Compatibility between versions is only consulted where a
//! module meets the rest of the system (references and proxies).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compat;
use crate::model::*;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("unresolved type name {0}")]
    UnresolvedName(String),
    #[error("type {0} expands to itself")]
    CyclicType(String),
    #[error("unbound name {0}")]
    UnboundName(String),
    #[error("no field labelled {label} in {ty}")]
    FieldNotFound { label: String, ty: Type },
    #[error("expected {expected}, found {found}")]
    ArgumentMismatch { expected: Type, found: Type },
    #[error("{0} is not a function")]
    NotAFunction(Type),
    #[error("update of {label}@{key} does not match a field of {ty}")]
    UpdateKeyMismatch { label: String, key: Key, ty: Type },
    #[error("selection of {label} from non-record type {ty}")]
    NonRecordSelect { label: String, ty: Type },
    #[error("record fields must have base types, {label} has {ty}")]
    ArrowInRecord { label: String, ty: Type },
    #[error("record repeats {0}")]
    DuplicateField(String),
    #[error("unknown thread {0}")]
    UnknownThread(ThreadId),
    #[error("{0} declared twice")]
    DuplicateName(String),
    #[error("key {0} declared twice")]
    DuplicateKey(Key),
    #[error("module name {0} is already taken")]
    NameCollision(String),
    #[error("reference {name}@{key} to {producer} has no provider")]
    UnresolvedReference { producer: String, name: String, key: Key },
    #[error("reference {key}: expected {expected}, provider has {found}{}", field_note(.field))]
    RefIncompatible { key: Key, expected: Type, found: Type, field: Option<Key> },
    #[error("reference {key} expects {expected} from {producer}, found {found}")]
    RefWrongProvider { key: Key, producer: String, expected: String, found: String },
    #[error("body of {name} has type {found}, declared {expected}")]
    BodyTypeError { name: String, expected: Type, found: Type },
    #[error("proxy for {producer} entry {local}: {detail}")]
    ProxySignatureMismatch { producer: String, local: String, detail: String },
    #[error("no proxy for producer {0}")]
    MissingProxy(String),
    #[error("proxy for {0} which is not referenced")]
    ExtraProxy(String),
    #[error("thread {thread}: {detail}")]
    ThreadTypeError { thread: ThreadId, detail: String },
}

fn field_note(field: &Option<Key>) -> String {
    field.as_ref().map(|k| format!(" (field {k})")).unwrap_or_default()
}

impl TypeError {
    pub fn code(&self) -> &'static str {
        match self {
            TypeError::UnresolvedName(_) => "UnresolvedName",
            TypeError::CyclicType(_) => "CyclicType",
            TypeError::UnboundName(_) => "UnboundName",
            TypeError::FieldNotFound { .. } => "FieldNotFound",
            TypeError::ArgumentMismatch { .. } => "ArgumentMismatch",
            TypeError::NotAFunction(_) => "NotAFunction",
            TypeError::UpdateKeyMismatch { .. } => "UpdateKeyMismatch",
            TypeError::NonRecordSelect { .. } => "NonRecordSelect",
            TypeError::ArrowInRecord { .. } => "ArrowInRecord",
            TypeError::DuplicateField(_) => "DuplicateField",
            TypeError::UnknownThread(_) => "UnknownThread",
            TypeError::DuplicateName(_) => "DuplicateName",
            TypeError::DuplicateKey(_) => "DuplicateKey",
            TypeError::NameCollision(_) => "NameCollision",
            TypeError::UnresolvedReference { .. } => "UnresolvedReference",
            TypeError::RefIncompatible { .. } => "RefIncompatible",
            TypeError::RefWrongProvider { .. } => "RefWrongProvider",
            TypeError::BodyTypeError { .. } => "BodyTypeError",
            TypeError::ProxySignatureMismatch { .. } => "ProxySignatureMismatch",
            TypeError::MissingProxy(_) => "MissingProxy",
            TypeError::ExtraProxy(_) => "ExtraProxy",
            TypeError::ThreadTypeError { .. } => "ThreadTypeError",
        }
    }
}

/// One typing failure, attributed to a service and definition where known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub service: Option<String>,
    pub key: Option<Key>,
    pub error: TypeError,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.error.code())?;
        if let Some(s) = &self.service {
            write!(f, " [{s}")?;
            if let Some(k) = &self.key {
                write!(f, " {k}")?;
            }
            write!(f, "]")?;
        }
        write!(f, ": {}", self.error)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
pub struct Diagnostics(pub Vec<Diagnostic>);

impl Diagnostics {
    fn single(service: Option<&str>, key: Option<&Key>, error: TypeError) -> Self {
        Diagnostics(vec![Diagnostic { service: service.map(str::to_string), key: key.cloned(), error }])
    }

    pub fn errors(&self) -> impl Iterator<Item = &TypeError> {
        self.0.iter().map(|d| &d.error)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ElemKind {
    Type,
    Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvEntry {
    pub module: String,
    pub name: String,
    pub ty: Type,
    pub kind: ElemKind,
    pub label: Option<DeployLabel>,
}

/// Key → (module, local name, expanded type, label): the C and P environments.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GlobalEnv {
    pub entries: BTreeMap<Key, EnvEntry>,
}

impl GlobalEnv {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &Key) -> Option<&EnvEntry> {
        self.entries.get(key)
    }

    pub fn module_names(&self) -> BTreeSet<&str> {
        self.entries.values().map(|e| e.module.as_str()).collect()
    }

    /// Label of the named module's entries, if it provides any.
    pub fn label_of(&self, module: &str) -> Option<&DeployLabel> {
        self.entries.values().find(|e| e.module == module).and_then(|e| e.label.as_ref())
    }

    pub fn without_module(&self, module: &str) -> GlobalEnv {
        GlobalEnv {
            entries: self
                .entries
                .iter()
                .filter(|(_, e)| e.module != module)
                .map(|(k, e)| (k.clone(), e.clone()))
                .collect(),
        }
    }

    pub fn without_modules(&self, modules: &BTreeSet<String>) -> GlobalEnv {
        GlobalEnv {
            entries: self
                .entries
                .iter()
                .filter(|(_, e)| !modules.contains(&e.module))
                .map(|(k, e)| (k.clone(), e.clone()))
                .collect(),
        }
    }

    /// Disjoint union; the first clashing key is returned as an error.
    pub fn union(&self, other: &GlobalEnv) -> Result<GlobalEnv, Key> {
        let mut out = self.clone();
        for (k, e) in &other.entries {
            if out.entries.insert(k.clone(), e.clone()).is_some() {
                return Err(k.clone());
            }
        }
        Ok(out)
    }

    pub fn from_signature(sig: &Signature, label: Option<&DeployLabel>) -> GlobalEnv {
        GlobalEnv {
            entries: sig
                .entries
                .iter()
                .map(|(k, e)| {
                    let kind = if matches!(e.ty, Type::Arrow(..)) { ElemKind::Value } else { ElemKind::Type };
                    (
                        k.clone(),
                        EnvEntry {
                            module: e.module.clone(),
                            name: e.name.clone(),
                            ty: e.ty.clone(),
                            kind,
                            label: label.cloned(),
                        },
                    )
                })
                .collect(),
        }
    }

    pub fn to_signature(&self) -> Signature {
        Signature {
            entries: self
                .entries
                .iter()
                .map(|(k, e)| {
                    (k.clone(), SigEntry { module: e.module.clone(), name: e.name.clone(), ty: e.ty.clone() })
                })
                .collect(),
        }
    }
}

/// Γ: result type of each running thread.
pub type ThreadEnv = BTreeMap<ThreadId, Type>;

/// Type definitions in scope, by key, with their declared names.
pub type TypeScope = BTreeMap<Key, (String, BaseType)>;

/// Σ and Δ for one module.
#[derive(Debug, Clone, Default)]
pub struct LocalEnvs {
    /// Referenced type definitions only.
    pub sigma_refs: TypeScope,
    /// Local and referenced type definitions.
    pub sigma: TypeScope,
    /// Every value name in scope, fully expanded.
    pub delta: BTreeMap<String, Type>,
}

impl LocalEnvs {
    pub fn for_module(m: &Module) -> Result<LocalEnvs, TypeError> {
        let mut envs = LocalEnvs::default();
        let mut names = BTreeSet::new();
        let mut keys = BTreeSet::new();
        let mut claim = |name: &str, key: &Key| -> Result<(), TypeError> {
            if !names.insert(name.to_string()) {
                return Err(TypeError::DuplicateName(name.to_string()));
            }
            if !keys.insert(key.clone()) {
                return Err(TypeError::DuplicateKey(key.clone()));
            }
            Ok(())
        };
        for r in &m.refs {
            for item in &r.items {
                claim(item.name(), item.key())?;
                if let RefItem::Type { name, key, ty } = item {
                    envs.sigma_refs.insert(key.clone(), (name.clone(), ty.clone()));
                }
            }
        }
        envs.sigma = envs.sigma_refs.clone();
        for d in &m.defs {
            claim(d.name(), d.key())?;
            if let Definition::Type { key, name, body } = d {
                envs.sigma.insert(key.clone(), (name.clone(), body.clone()));
            }
        }
        for r in &m.refs {
            for item in &r.items {
                if let RefItem::Value { name, .. } = item {
                    let ty = expand_type(&item.declared_type(), &envs.sigma_refs)?;
                    envs.delta.insert(name.clone(), ty);
                }
            }
        }
        for d in &m.defs {
            if let Definition::Value { name, .. } = d {
                let ty = expand_type(&d.declared_type(), &envs.sigma)?;
                envs.delta.insert(name.clone(), ty);
            }
        }
        Ok(envs)
    }
}

/// Replaces every named type by its definition, recursively.
pub fn expand_type(t: &Type, sigma: &TypeScope) -> Result<Type, TypeError> {
    match t {
        Type::Base(b) => Ok(Type::Base(expand_base(b, sigma, &mut Vec::new())?)),
        Type::Arrow(p, r) => Ok(Type::arrow(expand_type(p, sigma)?, expand_type(r, sigma)?)),
    }
}

pub fn expand_base_type(b: &BaseType, sigma: &TypeScope) -> Result<BaseType, TypeError> {
    expand_base(b, sigma, &mut Vec::new())
}

fn expand_base(b: &BaseType, sigma: &TypeScope, stack: &mut Vec<Key>) -> Result<BaseType, TypeError> {
    match b {
        BaseType::Int | BaseType::Str => Ok(b.clone()),
        BaseType::Record(fields) => Ok(BaseType::Record(
            fields
                .iter()
                .map(|f| {
                    Ok(Field { label: f.label.clone(), key: f.key.clone(), ty: expand_base(&f.ty, sigma, stack)? })
                })
                .collect::<Result<_, TypeError>>()?,
        )),
        BaseType::Named { name, key } => {
            let Some((declared, body)) = sigma.get(key) else {
                return Err(TypeError::UnresolvedName(format!("{name}@{key}")));
            };
            if declared != name {
                return Err(TypeError::UnresolvedName(format!("{name}@{key} (declared as {declared})")));
            }
            if stack.contains(key) {
                return Err(TypeError::CyclicType(format!("{name}@{key}")));
            }
            stack.push(key.clone());
            let out = expand_base(body, sigma, stack);
            stack.pop();
            out
        }
    }
}

/// Types `e` under the module's Σ/Δ and the thread environment.
pub fn type_of_expr(envs: &LocalEnvs, gamma: &ThreadEnv, e: &Expr) -> Result<Type, TypeError> {
    Typer { envs, gamma, scope: Vec::new() }.expr(e)
}

struct Typer<'a> {
    envs: &'a LocalEnvs,
    gamma: &'a ThreadEnv,
    scope: Vec<(String, Type)>,
}

impl Typer<'_> {
    fn expr(&mut self, e: &Expr) -> Result<Type, TypeError> {
        match e {
            Expr::Int(_) => Ok(Type::int()),
            Expr::Str(_) => Ok(Type::string()),
            Expr::BinOp(BinOp::Add, l, r) => {
                let lt = self.expr(l)?;
                let rt = self.expr(r)?;
                match (&lt, &rt) {
                    (Type::Base(BaseType::Int), Type::Base(BaseType::Int))
                    | (Type::Base(BaseType::Str), Type::Base(BaseType::Str)) => Ok(lt),
                    (Type::Base(BaseType::Int), _) | (Type::Base(BaseType::Str), _) => {
                        Err(TypeError::ArgumentMismatch { expected: lt.clone(), found: rt })
                    }
                    _ => Err(TypeError::ArgumentMismatch { expected: Type::int(), found: lt }),
                }
            }
            Expr::Fun(name) => self.envs.delta.get(name).cloned().ok_or_else(|| TypeError::UnboundName(name.clone())),
            Expr::Var(name) => self
                .scope
                .iter()
                .rev()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| TypeError::UnboundName(name.clone())),
            Expr::Lambda { param, ty, body } => {
                let pt = expand_type(ty, &self.envs.sigma)?;
                self.scope.push((param.clone(), pt.clone()));
                let bt = self.expr(body);
                self.scope.pop();
                Ok(Type::arrow(pt, bt?))
            }
            Expr::Apply(f, a) => {
                let ft = self.expr(f)?;
                let at = self.expr(a)?;
                match ft {
                    Type::Arrow(p, r) if *p == at => Ok(*r),
                    Type::Arrow(p, _) => Err(TypeError::ArgumentMismatch { expected: *p, found: at }),
                    other => Err(TypeError::NotAFunction(other)),
                }
            }
            Expr::Record { fields, .. } => {
                let mut out = Vec::with_capacity(fields.len());
                let mut keys = BTreeSet::new();
                let mut labels = BTreeSet::new();
                for f in fields {
                    if !keys.insert(&f.key) {
                        return Err(TypeError::DuplicateField(f.key.to_string()));
                    }
                    if !labels.insert(&f.label) {
                        return Err(TypeError::DuplicateField(f.label.clone()));
                    }
                    match self.expr(&f.value)? {
                        Type::Base(b) => out.push(Field { label: f.label.clone(), key: f.key.clone(), ty: b }),
                        ty => return Err(TypeError::ArrowInRecord { label: f.label.clone(), ty }),
                    }
                }
                Ok(Type::Base(BaseType::Record(out)))
            }
            Expr::Select(t, label) => {
                let tt = self.expr(t)?;
                match &tt {
                    Type::Base(BaseType::Record(fields)) => fields
                        .iter()
                        .find(|f| &f.label == label)
                        .map(|f| Type::Base(f.ty.clone()))
                        .ok_or_else(|| TypeError::FieldNotFound { label: label.clone(), ty: tt.clone() }),
                    _ => Err(TypeError::NonRecordSelect { label: label.clone(), ty: tt.clone() }),
                }
            }
            Expr::Update(t, updates) => {
                let tt = self.expr(t)?;
                let Type::Base(BaseType::Record(fields)) = &tt else {
                    let label = updates.first().map(|u| u.label.clone()).unwrap_or_default();
                    return Err(TypeError::NonRecordSelect { label, ty: tt.clone() });
                };
                let mut seen = BTreeSet::new();
                for u in updates {
                    if !seen.insert(&u.key) {
                        return Err(TypeError::DuplicateField(u.key.to_string()));
                    }
                    let ut = self.expr(&u.value)?;
                    let ok =
                        fields.iter().any(|f| f.key == u.key && f.label == u.label && Type::Base(f.ty.clone()) == ut);
                    if !ok {
                        return Err(TypeError::UpdateKeyMismatch {
                            label: u.label.clone(),
                            key: u.key.clone(),
                            ty: tt.clone(),
                        });
                    }
                }
                Ok(tt)
            }
            Expr::Await(t) => self.gamma.get(t).cloned().ok_or(TypeError::UnknownThread(*t)),
            Expr::Convert { from, to, inner } => {
                let it = self.expr(inner)?;
                if &it != from {
                    return Err(TypeError::ArgumentMismatch { expected: from.clone(), found: it });
                }
                Ok(to.clone())
            }
        }
    }
}

/// Checks a value against an expected type, ignoring unknown fields.
pub fn check_value(v: &Value, expected: &Type) -> Result<(), TypeError> {
    let found = type_of_expr(&LocalEnvs::default(), &ThreadEnv::new(), &v.to_expr())?;
    if &found == expected {
        Ok(())
    } else {
        Err(TypeError::ArgumentMismatch { expected: expected.clone(), found })
    }
}

/// `C ⊢ M : P`. `label` stamps the returned entries.
pub fn check_module(c: &GlobalEnv, m: &Module, label: Option<&DeployLabel>) -> Result<GlobalEnv, Diagnostics> {
    let svc = Some(m.name.as_str());
    if c.module_names().contains(m.name.as_str()) {
        return Err(Diagnostics::single(svc, None, TypeError::NameCollision(m.name.clone())));
    }
    let envs = LocalEnvs::for_module(m).map_err(|e| Diagnostics::single(svc, None, e))?;
    let mut diags = Vec::new();
    let mut push = |key: Option<&Key>, error: TypeError| {
        diags.push(Diagnostic { service: Some(m.name.clone()), key: key.cloned(), error })
    };

    for r in &m.refs {
        let mu = compat::used_keys(&r.items, &m.defs);
        for item in &r.items {
            let key = item.key();
            let Some(actual) = c.get(key) else {
                push(
                    Some(key),
                    TypeError::UnresolvedReference {
                        producer: r.producer.clone(),
                        name: item.name().into(),
                        key: key.clone(),
                    },
                );
                continue;
            };
            let want_kind = match item {
                RefItem::Type { .. } => ElemKind::Type,
                RefItem::Value { .. } => ElemKind::Value,
            };
            if actual.module != r.producer || actual.kind != want_kind {
                push(
                    Some(key),
                    TypeError::RefWrongProvider {
                        key: key.clone(),
                        producer: r.producer.clone(),
                        expected: format!("{} {:?}", r.producer, want_kind),
                        found: format!("{} {:?}", actual.module, actual.kind),
                    },
                );
                continue;
            }
            let declared = match expand_type(&item.declared_type(), &envs.sigma_refs) {
                Ok(t) => t,
                Err(e) => {
                    push(Some(key), e);
                    continue;
                }
            };
            let verdict = compat::compat_check(&actual.ty, &declared, &mu)
                .and_then(|_| compat::compat_check(&declared, &actual.ty, &mu));
            if let Err(mismatch) = verdict {
                push(
                    Some(key),
                    TypeError::RefIncompatible {
                        key: key.clone(),
                        expected: declared,
                        found: actual.ty.clone(),
                        field: mismatch.field(),
                    },
                );
            }
        }
    }

    let mut provided = GlobalEnv::new();
    for d in &m.defs {
        let declared = match expand_type(&d.declared_type(), &envs.sigma) {
            Ok(t) => t,
            Err(e) => {
                push(Some(d.key()), e);
                continue;
            }
        };
        if let Definition::Value { name, body, .. } = d {
            match type_of_expr(&envs, &ThreadEnv::new(), body) {
                Ok(found) if found == declared => {}
                Ok(found) => push(
                    Some(d.key()),
                    TypeError::BodyTypeError { name: name.clone(), expected: declared.clone(), found },
                ),
                Err(e) => push(Some(d.key()), e),
            }
        }
        let kind = if matches!(d, Definition::Type { .. }) { ElemKind::Type } else { ElemKind::Value };
        provided.entries.insert(
            d.key().clone(),
            EnvEntry { module: m.name.clone(), name: d.name().to_string(), ty: declared, kind, label: label.cloned() },
        );
    }

    if diags.is_empty() {
        Ok(provided)
    } else {
        Err(Diagnostics(diags))
    }
}

/// `C; Γ ⊢ service(M, P̄, ℓ, T̄) : P`.
pub fn check_service(c: &GlobalEnv, gamma: &ThreadEnv, s: &Service) -> Result<GlobalEnv, Diagnostics> {
    let provided = check_module(c, &s.module, Some(&s.label))?;
    let envs = LocalEnvs::for_module(&s.module).map_err(|e| Diagnostics::single(Some(s.name()), None, e))?;
    check_service_state(c, &envs, gamma, s)?;
    Ok(provided)
}

/// Proxies and threads of a service whose module is already checked.
fn check_service_state(c: &GlobalEnv, envs: &LocalEnvs, gamma: &ThreadEnv, s: &Service) -> Result<(), Diagnostics> {
    let mut diags = Vec::new();
    let mut push = |error: TypeError| diags.push(Diagnostic { service: Some(s.name().to_string()), key: None, error });

    let referenced: BTreeSet<&str> = s.module.producers().collect();
    let mut covered = BTreeSet::new();
    for p in &s.proxies {
        let producer = p.producer();
        if !referenced.contains(producer) {
            push(TypeError::ExtraProxy(producer.to_string()));
            continue;
        }
        if !covered.insert(producer) {
            push(TypeError::DuplicateName(format!("proxy for {producer}")));
            continue;
        }
        let Proxy::Ready { entries, label, .. } = p else { continue };
        if c.label_of(producer) != Some(label) {
            continue;
        }
        let mut locals = BTreeSet::new();
        for entry in entries {
            let mismatch = |detail: String| TypeError::ProxySignatureMismatch {
                producer: producer.to_string(),
                local: entry.local.clone(),
                detail,
            };
            if !locals.insert(&entry.local) {
                push(mismatch("duplicate entry".into()));
                continue;
            }
            let Some((ref_producer, item)) = s.module.value_ref(&entry.local) else {
                push(mismatch("no matching reference".into()));
                continue;
            };
            if ref_producer != producer {
                push(mismatch(format!("reference belongs to {ref_producer}")));
                continue;
            }
            let Some(current) = c.get(item.key()) else {
                push(mismatch(format!("producer no longer provides {}", item.key())));
                continue;
            };
            let entry_ty = Type::base_arrow(entry.param.clone(), entry.result.clone());
            if current.name != entry.remote {
                push(mismatch(format!("remote name {} but producer calls it {}", entry.remote, current.name)));
            } else if current.ty != entry_ty {
                push(mismatch(format!("entry type {entry_ty} but producer has {}", current.ty)));
            }
        }
    }
    for producer in referenced {
        if !covered.contains(producer) {
            push(TypeError::MissingProxy(producer.to_string()));
        }
    }

    for t in &s.threads {
        match type_of_expr(envs, gamma, &t.expr) {
            Ok(ty) => match gamma.get(&t.id) {
                Some(expected) if *expected == ty => {}
                Some(expected) => push(TypeError::ThreadTypeError {
                    thread: t.id,
                    detail: format!("has type {ty}, environment says {expected}"),
                }),
                None => push(TypeError::ThreadTypeError {
                    thread: t.id,
                    detail: "missing from the thread environment".into(),
                }),
            },
            Err(e) => push(TypeError::ThreadTypeError { thread: t.id, detail: e.to_string() }),
        }
    }

    if diags.is_empty() {
        Ok(())
    } else {
        Err(Diagnostics(diags))
    }
}

/// Every service's provided entries, from signatures alone.
pub fn system_env(u: &System) -> Result<GlobalEnv, Diagnostics> {
    let mut env = GlobalEnv::new();
    let mut diags = Vec::new();
    for s in &u.services {
        match signature_of(&s.module) {
            Ok(sig) => match env.union(&GlobalEnv::from_signature(&sig, Some(&s.label))) {
                Ok(merged) => env = merged,
                Err(k) => diags.push(Diagnostic {
                    service: Some(s.name().into()),
                    key: Some(k.clone()),
                    error: TypeError::DuplicateKey(k),
                }),
            },
            Err(e) => diags.push(Diagnostic { service: Some(s.name().into()), key: None, error: e }),
        }
    }
    if diags.is_empty() {
        Ok(env)
    } else {
        Err(Diagnostics(diags))
    }
}

/// `C; Γ ⊢ U : P` for a closed system: each service against all the others.
pub fn check_system(gamma: &ThreadEnv, u: &System) -> Result<GlobalEnv, Diagnostics> {
    SystemChecker::new().check(gamma, u)
}

/// `check_system` for a sequence of states. Module judgements are reused
/// while the set of deployments is unchanged, relying on a deploy label
/// identifying one module version.
#[derive(Debug, Default)]
pub struct SystemChecker {
    deployments: Vec<(String, DeployLabel)>,
    all: Option<Result<GlobalEnv, Diagnostics>>,
    modules: BTreeMap<String, Result<(GlobalEnv, LocalEnvs), Diagnostics>>,
}

impl SystemChecker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn check(&mut self, gamma: &ThreadEnv, u: &System) -> Result<GlobalEnv, Diagnostics> {
        check_distinct_names(u)?;
        let deployments: Vec<(String, DeployLabel)> =
            u.services.iter().map(|s| (s.name().to_string(), s.label.clone())).collect();
        if deployments != self.deployments || self.all.is_none() {
            self.deployments = deployments;
            self.all = Some(system_env(u));
            self.modules.clear();
        }
        let all = self.all.clone().expect("set above")?;
        let mut diags = Vec::new();
        let mut provided = GlobalEnv::new();
        for s in &u.services {
            let c = all.without_module(s.name());
            let module = self.modules.entry(s.name().to_string()).or_insert_with(|| {
                let p = check_module(&c, &s.module, Some(&s.label))?;
                let envs =
                    LocalEnvs::for_module(&s.module).map_err(|e| Diagnostics::single(Some(s.name()), None, e))?;
                Ok((p, envs))
            });
            match module {
                Ok((p, envs)) => match check_service_state(&c, envs, gamma, s) {
                    Ok(()) => provided.entries.extend(p.entries.clone()),
                    Err(d) => diags.extend(d.0),
                },
                Err(d) => diags.extend(d.0.clone()),
            }
        }
        if diags.is_empty() {
            Ok(provided)
        } else {
            Err(Diagnostics(diags))
        }
    }
}

/// Service names and thread ids are unique.
fn check_distinct_names(u: &System) -> Result<(), Diagnostics> {
    let mut names = BTreeSet::new();
    for s in &u.services {
        if !names.insert(s.name()) {
            return Err(Diagnostics::single(Some(s.name()), None, TypeError::DuplicateName(s.name().into())));
        }
    }
    let mut ids = BTreeSet::new();
    for s in &u.services {
        for t in &s.threads {
            if !ids.insert(t.id) {
                return Err(Diagnostics::single(
                    Some(s.name()),
                    None,
                    TypeError::ThreadTypeError { thread: t.id, detail: "thread id used twice".into() },
                ));
            }
        }
    }
    Ok(())
}

/// Infers Γ for every thread whose expression types. Threads awaiting other
/// threads are typed once those are known.
pub fn thread_env(u: &System) -> ThreadEnv {
    let envs: Vec<Option<LocalEnvs>> = u.services.iter().map(|s| LocalEnvs::for_module(&s.module).ok()).collect();
    let mut gamma = ThreadEnv::new();
    loop {
        let mut progress = false;
        for (s, env) in u.services.iter().zip(&envs) {
            let Some(env) = env else { continue };
            for t in &s.threads {
                if gamma.contains_key(&t.id) {
                    continue;
                }
                if let Ok(ty) = type_of_expr(env, &gamma, &t.expr) {
                    gamma.insert(t.id, ty);
                    progress = true;
                }
            }
        }
        if !progress {
            return gamma;
        }
    }
}
