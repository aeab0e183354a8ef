//! Abstract syntax shared by every other module: identities, the type
//! language, expressions and runtime values, modules, services and systems.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Immutable identity of a definition or record field. Survives renames.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Key(String);

impl Key {
    pub fn new(id: impl Into<String>) -> Self {
        Key(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Fresh token stamped on each deployment of a service.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeployLabel(String);

impl DeployLabel {
    pub fn new(id: impl Into<String>) -> Self {
        DeployLabel(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DeployLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ThreadId(pub u64);

impl fmt::Display for ThreadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

/// Monotonic allocator for `k<N>` keys. Never hands out a key it has been
/// told about through [`KeyAllocator::observe`].
#[derive(Debug, Clone, Default)]
pub struct KeyAllocator {
    next: u64,
}

impl KeyAllocator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, key: &Key) {
        if let Some(n) = key.as_str().strip_prefix('k').and_then(|d| d.parse::<u64>().ok()) {
            self.next = self.next.max(n + 1);
        }
    }

    pub fn fresh(&mut self) -> Key {
        let n = self.next.max(1);
        self.next = n + 1;
        Key(format!("k{n}"))
    }
}

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// A field of a record type.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Field {
    pub label: String,
    pub key: Key,
    pub ty: BaseType,
}

impl Field {
    pub fn new(label: impl Into<String>, key: impl Into<String>, ty: BaseType) -> Self {
        Field { label: label.into(), key: Key::new(key), ty }
    }
}

/// Data-exchange types. Record equality ignores field order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum BaseType {
    Int,
    Str,
    Record(Vec<Field>),
    Named { name: String, key: Key },
}

impl BaseType {
    pub fn named(name: impl Into<String>, key: impl Into<String>) -> Self {
        BaseType::Named { name: name.into(), key: Key::new(key) }
    }

    pub fn field(&self, key: &Key) -> Option<&Field> {
        match self {
            BaseType::Record(fields) => fields.iter().find(|f| &f.key == key),
            _ => None,
        }
    }

    pub fn is_ground(&self) -> bool {
        matches!(self, BaseType::Int | BaseType::Str)
    }

    /// True when no `Named` type occurs anywhere inside.
    pub fn is_expanded(&self) -> bool {
        match self {
            BaseType::Int | BaseType::Str => true,
            BaseType::Record(fields) => fields.iter().all(|f| f.ty.is_expanded()),
            BaseType::Named { .. } => false,
        }
    }

    fn sorted_fields(fields: &[Field]) -> Vec<&Field> {
        let mut v: Vec<&Field> = fields.iter().collect();
        v.sort_by(|a, b| a.key.cmp(&b.key));
        v
    }
}

impl PartialEq for BaseType {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (BaseType::Int, BaseType::Int) | (BaseType::Str, BaseType::Str) => true,
            (BaseType::Named { name: n1, key: k1 }, BaseType::Named { name: n2, key: k2 }) => n1 == n2 && k1 == k2,
            (BaseType::Record(a), BaseType::Record(b)) => {
                a.len() == b.len()
                    && BaseType::sorted_fields(a)
                        .into_iter()
                        .zip(BaseType::sorted_fields(b))
                        .all(|(x, y)| x.key == y.key && x.label == y.label && x.ty == y.ty)
            }
            _ => false,
        }
    }
}

impl Eq for BaseType {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Type {
    Base(BaseType),
    Arrow(Box<Type>, Box<Type>),
}

impl Type {
    pub fn int() -> Self {
        Type::Base(BaseType::Int)
    }

    pub fn string() -> Self {
        Type::Base(BaseType::Str)
    }

    pub fn arrow(param: Type, result: Type) -> Self {
        Type::Arrow(Box::new(param), Box::new(result))
    }

    pub fn base_arrow(param: BaseType, result: BaseType) -> Self {
        Type::arrow(Type::Base(param), Type::Base(result))
    }

    pub fn as_base(&self) -> Option<&BaseType> {
        match self {
            Type::Base(b) => Some(b),
            Type::Arrow(..) => None,
        }
    }

    /// Splits `β → β` into its two halves.
    pub fn as_base_arrow(&self) -> Option<(&BaseType, &BaseType)> {
        match self {
            Type::Arrow(p, r) => Some((p.as_base()?, r.as_base()?)),
            Type::Base(_) => None,
        }
    }

    pub fn is_expanded(&self) -> bool {
        match self {
            Type::Base(b) => b.is_expanded(),
            Type::Arrow(p, r) => p.is_expanded() && r.is_expanded(),
        }
    }
}

impl fmt::Display for BaseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::syntax::render_base_type(self))
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::syntax::render_type(self))
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::syntax::render_value(self))
    }
}

impl From<BaseType> for Type {
    fn from(b: BaseType) -> Self {
        Type::Base(b)
    }
}

// ---------------------------------------------------------------------------
// Expressions and values
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinOp {
    Add,
}

/// `label@key = expr` inside a record literal or update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldInit {
    pub label: String,
    pub key: Key,
    pub value: Expr,
}

impl FieldInit {
    pub fn new(label: impl Into<String>, key: impl Into<String>, value: Expr) -> Self {
        FieldInit { label: label.into(), key: Key::new(key), value }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Int(i64),
    Str(String),
    BinOp(BinOp, Box<Expr>, Box<Expr>),
    /// A definition or reference name.
    Fun(String),
    Var(String),
    Lambda {
        param: String,
        ty: Type,
        body: Box<Expr>,
    },
    Apply(Box<Expr>, Box<Expr>),
    /// Record literal. `unknown` is empty in surface programs and only filled
    /// in when a runtime value carrying key-tagged fields is reified.
    Record {
        fields: Vec<FieldInit>,
        unknown: Vec<(Key, Expr)>,
    },
    Select(Box<Expr>, String),
    Update(Box<Expr>, Vec<FieldInit>),
    /// `t?`: waits for the result of thread `t`. Runtime only.
    Await(ThreadId),
    /// Consumer-side adaptation of the inner result. Runtime only.
    Convert {
        from: Type,
        to: Type,
        inner: Box<Expr>,
    },
}

impl Expr {
    pub fn str(s: impl Into<String>) -> Self {
        Expr::Str(s.into())
    }

    pub fn fun(name: impl Into<String>) -> Self {
        Expr::Fun(name.into())
    }

    pub fn var(name: impl Into<String>) -> Self {
        Expr::Var(name.into())
    }

    pub fn plus(l: Expr, r: Expr) -> Self {
        Expr::BinOp(BinOp::Add, Box::new(l), Box::new(r))
    }

    pub fn apply(f: Expr, arg: Expr) -> Self {
        Expr::Apply(Box::new(f), Box::new(arg))
    }

    pub fn lambda(param: impl Into<String>, ty: Type, body: Expr) -> Self {
        Expr::Lambda { param: param.into(), ty, body: Box::new(body) }
    }

    pub fn record(fields: Vec<FieldInit>) -> Self {
        Expr::Record { fields, unknown: Vec::new() }
    }

    pub fn select(target: Expr, label: impl Into<String>) -> Self {
        Expr::Select(Box::new(target), label.into())
    }

    pub fn update(target: Expr, fields: Vec<FieldInit>) -> Self {
        Expr::Update(Box::new(target), fields)
    }

    /// Reads the expression back as a value when it is in normal form.
    pub fn as_value(&self) -> Option<Value> {
        match self {
            Expr::Int(n) => Some(Value::Int(*n)),
            Expr::Str(s) => Some(Value::Str(s.clone())),
            Expr::Lambda { param, ty, body } => {
                Some(Value::Closure { param: param.clone(), ty: ty.clone(), body: body.clone() })
            }
            Expr::Record { fields, unknown } => {
                let known = fields
                    .iter()
                    .map(|f| {
                        f.value.as_value().map(|v| KnownField { label: f.label.clone(), key: f.key.clone(), value: v })
                    })
                    .collect::<Option<Vec<_>>>()?;
                let unknown =
                    unknown.iter().map(|(k, e)| e.as_value().map(|v| (k.clone(), v))).collect::<Option<Vec<_>>>()?;
                Some(Value::Record(RecordValue { known, unknown }))
            }
            _ => None,
        }
    }

    pub fn is_value(&self) -> bool {
        match self {
            Expr::Int(_) | Expr::Str(_) | Expr::Lambda { .. } => true,
            Expr::Record { fields, unknown } => {
                fields.iter().all(|f| f.value.is_value()) && unknown.iter().all(|(_, e)| e.is_value())
            }
            _ => false,
        }
    }

    /// Every `t?` occurring inside, in evaluation order.
    pub fn awaited_threads(&self) -> Vec<ThreadId> {
        let mut out = Vec::new();
        self.collect_awaits(&mut out);
        out
    }

    fn collect_awaits(&self, out: &mut Vec<ThreadId>) {
        match self {
            Expr::Await(t) => out.push(*t),
            Expr::Int(_) | Expr::Str(_) | Expr::Fun(_) | Expr::Var(_) => {}
            Expr::BinOp(_, l, r) | Expr::Apply(l, r) => {
                l.collect_awaits(out);
                r.collect_awaits(out);
            }
            Expr::Lambda { body, .. } => body.collect_awaits(out),
            Expr::Record { fields, unknown } => {
                fields.iter().for_each(|f| f.value.collect_awaits(out));
                unknown.iter().for_each(|(_, e)| e.collect_awaits(out));
            }
            Expr::Select(t, _) => t.collect_awaits(out),
            Expr::Update(t, fields) => {
                t.collect_awaits(out);
                fields.iter().for_each(|f| f.value.collect_awaits(out));
            }
            Expr::Convert { inner, .. } => inner.collect_awaits(out),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnownField {
    pub label: String,
    pub key: Key,
    pub value: Value,
}

/// Record value: fields the holder knows by label plus key-tagged fields it
/// carries without knowing them. Equality ignores member order.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RecordValue {
    pub known: Vec<KnownField>,
    pub unknown: Vec<(Key, Value)>,
}

impl RecordValue {
    pub fn new(known: Vec<KnownField>) -> Self {
        RecordValue { known, unknown: Vec::new() }
    }

    /// `v.#k`: reads a known or unknown member by key.
    pub fn get(&self, key: &Key) -> Option<&Value> {
        self.known
            .iter()
            .find(|f| &f.key == key)
            .map(|f| &f.value)
            .or_else(|| self.unknown.iter().find(|(k, _)| k == key).map(|(_, v)| v))
    }

    pub fn by_label(&self, label: &str) -> Option<&Value> {
        self.known.iter().find(|f| f.label == label).map(|f| &f.value)
    }

    pub fn keys(&self) -> impl Iterator<Item = &Key> {
        self.known.iter().map(|f| &f.key).chain(self.unknown.iter().map(|(k, _)| k))
    }

    /// Members in key order; (key, label if known, value).
    pub fn members(&self) -> Vec<(&Key, Option<&str>, &Value)> {
        let mut out: Vec<_> = self
            .known
            .iter()
            .map(|f| (&f.key, Some(f.label.as_str()), &f.value))
            .chain(self.unknown.iter().map(|(k, v)| (k, None, v)))
            .collect();
        out.sort_by(|a, b| a.0.cmp(b.0));
        out
    }

    pub fn has_distinct_keys(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.keys().all(|k| seen.insert(k))
    }
}

impl PartialEq for RecordValue {
    fn eq(&self, other: &Self) -> bool {
        self.members() == other.members()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Int(i64),
    Str(String),
    /// Closures never cross a service boundary, so function names in the body
    /// resolve against the definitions of the service running them.
    Closure {
        param: String,
        ty: Type,
        body: Box<Expr>,
    },
    Record(RecordValue),
}

impl Value {
    pub fn str(s: impl Into<String>) -> Self {
        Value::Str(s.into())
    }

    pub fn record(fields: Vec<(&str, &str, Value)>) -> Self {
        Value::Record(RecordValue::new(
            fields
                .into_iter()
                .map(|(label, key, value)| KnownField { label: label.into(), key: Key::new(key), value })
                .collect(),
        ))
    }

    pub fn to_expr(&self) -> Expr {
        match self {
            Value::Int(n) => Expr::Int(*n),
            Value::Str(s) => Expr::Str(s.clone()),
            Value::Closure { param, ty, body } => {
                Expr::Lambda { param: param.clone(), ty: ty.clone(), body: body.clone() }
            }
            Value::Record(r) => Expr::Record {
                fields: r
                    .known
                    .iter()
                    .map(|f| FieldInit { label: f.label.clone(), key: f.key.clone(), value: f.value.to_expr() })
                    .collect(),
                unknown: r.unknown.iter().map(|(k, v)| (k.clone(), v.to_expr())).collect(),
            },
        }
    }

    pub fn as_record(&self) -> Option<&RecordValue> {
        match self {
            Value::Record(r) => Some(r),
            _ => None,
        }
    }

    /// No closure anywhere inside.
    pub fn is_first_order(&self) -> bool {
        match self {
            Value::Int(_) | Value::Str(_) => true,
            Value::Closure { .. } => false,
            Value::Record(r) => {
                r.known.iter().all(|f| f.value.is_first_order()) && r.unknown.iter().all(|(_, v)| v.is_first_order())
            }
        }
    }

    /// Key uniqueness holds at every record depth.
    pub fn keys_distinct(&self) -> bool {
        match self {
            Value::Record(r) => {
                r.has_distinct_keys()
                    && r.known.iter().all(|f| f.value.keys_distinct())
                    && r.unknown.iter().all(|(_, v)| v.keys_distinct())
            }
            _ => true,
        }
    }
}

// ---------------------------------------------------------------------------
// Modules, services, systems
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Definition {
    Type { key: Key, name: String, body: BaseType },
    Value { key: Key, name: String, param: BaseType, result: BaseType, body: Expr },
}

impl Definition {
    pub fn key(&self) -> &Key {
        match self {
            Definition::Type { key, .. } | Definition::Value { key, .. } => key,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Definition::Type { name, .. } | Definition::Value { name, .. } => name,
        }
    }

    /// Declared (unexpanded) type.
    pub fn declared_type(&self) -> Type {
        match self {
            Definition::Type { body, .. } => Type::Base(body.clone()),
            Definition::Value { param, result, .. } => Type::base_arrow(param.clone(), result.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RefItem {
    Type { name: String, key: Key, ty: BaseType },
    Value { name: String, key: Key, param: BaseType, result: BaseType },
}

impl RefItem {
    pub fn key(&self) -> &Key {
        match self {
            RefItem::Type { key, .. } | RefItem::Value { key, .. } => key,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            RefItem::Type { name, .. } | RefItem::Value { name, .. } => name,
        }
    }

    pub fn declared_type(&self) -> Type {
        match self {
            RefItem::Type { ty, .. } => Type::Base(ty.clone()),
            RefItem::Value { param, result, .. } => Type::base_arrow(param.clone(), result.clone()),
        }
    }
}

/// `ref(b, X̄)`: everything one module consumes from producer `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub producer: String,
    pub items: Vec<RefItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Module {
    pub name: String,
    pub refs: Vec<Reference>,
    pub defs: Vec<Definition>,
}

impl Module {
    pub fn new(name: impl Into<String>) -> Self {
        Module { name: name.into(), refs: Vec::new(), defs: Vec::new() }
    }

    /// Keys of every definition (ρ).
    pub fn producer_keys(&self) -> BTreeSet<Key> {
        self.defs.iter().map(|d| d.key().clone()).collect()
    }

    /// Keys of every reference item (θ).
    pub fn consumer_keys(&self) -> BTreeSet<Key> {
        self.refs.iter().flat_map(|r| r.items.iter().map(|i| i.key().clone())).collect()
    }

    pub fn def(&self, name: &str) -> Option<&Definition> {
        self.defs.iter().find(|d| d.name() == name)
    }

    pub fn refs_to(&self, producer: &str) -> Option<&Reference> {
        self.refs.iter().find(|r| r.producer == producer)
    }

    /// The value reference bound to a local name, with its producer.
    pub fn value_ref(&self, name: &str) -> Option<(&str, &RefItem)> {
        self.refs.iter().find_map(|r| {
            r.items
                .iter()
                .find(|i| matches!(i, RefItem::Value { .. }) && i.name() == name)
                .map(|i| (r.producer.as_str(), i))
        })
    }

    pub fn producers(&self) -> impl Iterator<Item = &str> {
        self.refs.iter().map(|r| r.producer.as_str())
    }
}

/// `valueP(f, f′, β → β)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueProxy {
    pub local: String,
    pub remote: String,
    pub param: BaseType,
    pub result: BaseType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Proxy {
    Ready { producer: String, entries: Vec<ValueProxy>, label: DeployLabel },
    Outdated { producer: String, signature: Signature, label: DeployLabel },
}

impl Proxy {
    pub fn producer(&self) -> &str {
        match self {
            Proxy::Ready { producer, .. } | Proxy::Outdated { producer, .. } => producer,
        }
    }

    pub fn label(&self) -> &DeployLabel {
        match self {
            Proxy::Ready { label, .. } | Proxy::Outdated { label, .. } => label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thread {
    pub id: ThreadId,
    pub expr: Expr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Service {
    pub module: Module,
    pub proxies: Vec<Proxy>,
    pub label: DeployLabel,
    pub threads: Vec<Thread>,
}

impl Service {
    pub fn name(&self) -> &str {
        &self.module.name
    }

    pub fn is_quiescent(&self) -> bool {
        self.threads.is_empty()
    }

    pub fn proxy(&self, producer: &str) -> Option<&Proxy> {
        self.proxies.iter().find(|p| p.producer() == producer)
    }
}

/// A composition of services with disjoint names, plus the counters that keep
/// labels and thread ids fresh across the whole history.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct System {
    pub services: Vec<Service>,
    pub next_label: u64,
    pub next_thread: u64,
}

impl System {
    pub fn empty() -> Self {
        System { services: Vec::new(), next_label: 1, next_thread: 1 }
    }

    pub fn service(&self, name: &str) -> Option<&Service> {
        self.services.iter().find(|s| s.name() == name)
    }

    pub fn service_mut(&mut self, name: &str) -> Option<&mut Service> {
        self.services.iter_mut().find(|s| s.name() == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.services.iter().map(|s| s.name()).collect()
    }

    pub fn fresh_label(&mut self) -> DeployLabel {
        let n = self.next_label.max(1);
        self.next_label = n + 1;
        DeployLabel(format!("l{n}"))
    }

    /// Labels the next `count` deployments will receive.
    pub fn peek_labels(&self, count: usize) -> Vec<DeployLabel> {
        let start = self.next_label.max(1);
        (0..count as u64).map(|i| DeployLabel(format!("l{}", start + i))).collect()
    }

    pub fn fresh_thread(&mut self) -> ThreadId {
        let n = self.next_thread.max(1);
        self.next_thread = n + 1;
        ThreadId(n)
    }

    pub fn thread_count(&self) -> usize {
        self.services.iter().map(|s| s.threads.len()).sum()
    }

    pub fn find_thread(&self, id: ThreadId) -> Option<(&Service, &Thread)> {
        self.services.iter().find_map(|s| s.threads.iter().find(|t| t.id == id).map(|t| (s, t)))
    }
}

// ---------------------------------------------------------------------------
// Signatures
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SigEntry {
    pub module: String,
    pub name: String,
    pub ty: Type,
}

/// Key → fully expanded type, with the owning module and local name.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Signature {
    pub entries: BTreeMap<Key, SigEntry>,
}

impl Signature {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &Key) -> Option<&SigEntry> {
        self.entries.get(key)
    }

    pub fn insert(&mut self, key: Key, entry: SigEntry) {
        self.entries.insert(key, entry);
    }

    pub fn keys(&self) -> BTreeSet<Key> {
        self.entries.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries owned by `module`.
    pub fn of_module(&self, module: &str) -> Signature {
        Signature {
            entries: self
                .entries
                .iter()
                .filter(|(_, e)| e.module == module)
                .map(|(k, e)| (k.clone(), e.clone()))
                .collect(),
        }
    }

    pub fn without_module(&self, module: &str) -> Signature {
        Signature {
            entries: self
                .entries
                .iter()
                .filter(|(_, e)| e.module != module)
                .map(|(k, e)| (k.clone(), e.clone()))
                .collect(),
        }
    }

    pub fn extend(&mut self, other: &Signature) {
        for (k, e) in &other.entries {
            self.entries.insert(k.clone(), e.clone());
        }
    }
}

/// Signature of a module: one fully expanded entry per definition.
pub fn signature_of(module: &Module) -> Result<Signature, crate::typeck::TypeError> {
    let envs = crate::typeck::LocalEnvs::for_module(module)?;
    let mut sig = Signature::new();
    for def in &module.defs {
        let ty = crate::typeck::expand_type(&def.declared_type(), &envs.sigma)?;
        sig.insert(def.key().clone(), SigEntry { module: module.name.clone(), name: def.name().to_string(), ty });
    }
    Ok(sig)
}
