//! Key-based compatibility between type versions, used-key analysis and the
//! deploy-time check of a module batch against a running system.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::*;
use crate::typeck::{ElemKind, GlobalEnv};

/// Why `τ ⇝ σ` fails: the key path to the offending spot and a reason.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mismatch {
    /// Record field keys from the outermost record inwards.
    pub path: Vec<Key>,
    pub reason: String,
}

impl Mismatch {
    /// The innermost field key involved, if any.
    pub fn field(&self) -> Option<Key> {
        self.path.last().cloned()
    }
}

/// `τ ⇝^μ σ`: can values of `tau` be adapted to `sigma`, given that only
/// keys in `mu` are actually used?
pub fn type_compatible(tau: &Type, sigma: &Type, mu: &BTreeSet<Key>) -> bool {
    compat_check(tau, sigma, mu).is_ok()
}

pub fn compat_check(tau: &Type, sigma: &Type, mu: &BTreeSet<Key>) -> Result<(), Mismatch> {
    let mut path = Vec::new();
    check(tau, sigma, mu, &mut path).map_err(|reason| Mismatch { path, reason })
}

fn check(tau: &Type, sigma: &Type, mu: &BTreeSet<Key>, path: &mut Vec<Key>) -> Result<(), String> {
    if tau == sigma {
        return Ok(());
    }
    match (tau, sigma) {
        (Type::Arrow(p1, r1), Type::Arrow(p2, r2)) => {
            check(p2, p1, mu, path)?;
            check(r1, r2, mu, path)
        }
        (Type::Base(b1), Type::Base(b2)) => check_base(b1, b2, mu, path),
        _ => Err(format!("{tau} and {sigma} differ in shape")),
    }
}

fn check_base(tau: &BaseType, sigma: &BaseType, mu: &BTreeSet<Key>, path: &mut Vec<Key>) -> Result<(), String> {
    if tau == sigma {
        return Ok(());
    }
    match (tau, sigma) {
        (BaseType::Record(old), BaseType::Record(new)) => {
            for f in old {
                if !mu.contains(&f.key) {
                    continue;
                }
                path.push(f.key.clone());
                let Some(g) = new.iter().find(|g| g.key == f.key) else {
                    return Err(format!("field {} ({}) is used but missing", f.key, f.label));
                };
                check_base(&f.ty, &g.ty, mu, path)?;
                path.pop();
            }
            Ok(())
        }
        _ => Err(format!("{tau} is not {sigma}")),
    }
}

/// Every key occurring in the given reference items: item keys plus record
/// field keys and named-type keys inside their declared types.
pub fn item_keys(items: &[RefItem]) -> BTreeSet<Key> {
    let mut out = BTreeSet::new();
    for item in items {
        out.insert(item.key().clone());
        collect_type_keys(&item.declared_type(), &mut out);
    }
    out
}

fn collect_type_keys(t: &Type, out: &mut BTreeSet<Key>) {
    match t {
        Type::Base(b) => collect_base_keys(b, out),
        Type::Arrow(p, r) => {
            collect_type_keys(p, out);
            collect_type_keys(r, out)
        }
    }
}

fn collect_base_keys(b: &BaseType, out: &mut BTreeSet<Key>) {
    match b {
        BaseType::Record(fields) => {
            for f in fields {
                out.insert(f.key.clone());
                collect_base_keys(&f.ty, out);
            }
        }
        BaseType::Named { key, .. } => {
            out.insert(key.clone());
        }
        BaseType::Int | BaseType::Str => {}
    }
}

fn collect_named_keys(t: &Type, out: &mut BTreeSet<Key>) {
    match t {
        Type::Base(b) => collect_base_named(b, out),
        Type::Arrow(p, r) => {
            collect_named_keys(p, out);
            collect_named_keys(r, out)
        }
    }
}

fn collect_base_named(b: &BaseType, out: &mut BTreeSet<Key>) {
    match b {
        BaseType::Record(fields) => fields.iter().for_each(|f| collect_base_named(&f.ty, out)),
        BaseType::Named { key, .. } => {
            out.insert(key.clone());
        }
        BaseType::Int | BaseType::Str => {}
    }
}

/// μ: the keys of one producer's reference items that the definitions use.
///
/// The scan is syntactic. It counts named types and inline record fields in
/// annotations, keys written in record literals and updates, every field of
/// the referenced types carrying a selected label, and for each call of a
/// referenced function its key plus the named types in its declared type.
pub fn used_keys(items: &[RefItem], defs: &[Definition]) -> BTreeSet<Key> {
    let universe = item_keys(items);
    let mut by_label: BTreeMap<String, BTreeSet<Key>> = BTreeMap::new();
    for item in items {
        fields_by_label(&item.declared_type(), &mut by_label);
    }
    let funs: BTreeMap<&str, &RefItem> =
        items.iter().filter(|i| matches!(i, RefItem::Value { .. })).map(|i| (i.name(), i)).collect();

    let mut scan = Scan { by_label: &by_label, funs: &funs, found: BTreeSet::new() };
    for d in defs {
        collect_type_keys(&d.declared_type(), &mut scan.found);
        if let Definition::Value { body, .. } = d {
            scan.expr(body, &mut Vec::new());
        }
    }
    scan.found.intersection(&universe).cloned().collect()
}

fn fields_by_label(t: &Type, out: &mut BTreeMap<String, BTreeSet<Key>>) {
    fn base(b: &BaseType, out: &mut BTreeMap<String, BTreeSet<Key>>) {
        if let BaseType::Record(fields) = b {
            for f in fields {
                out.entry(f.label.clone()).or_default().insert(f.key.clone());
                base(&f.ty, out);
            }
        }
    }
    match t {
        Type::Base(b) => base(b, out),
        Type::Arrow(p, r) => {
            fields_by_label(p, out);
            fields_by_label(r, out)
        }
    }
}

struct Scan<'a> {
    by_label: &'a BTreeMap<String, BTreeSet<Key>>,
    funs: &'a BTreeMap<&'a str, &'a RefItem>,
    found: BTreeSet<Key>,
}

impl Scan<'_> {
    fn expr(&mut self, e: &Expr, bound: &mut Vec<String>) {
        match e {
            Expr::Int(_) | Expr::Str(_) | Expr::Var(_) | Expr::Await(_) => {}
            Expr::Fun(name) => {
                if bound.iter().any(|b| b == name) {
                    return;
                }
                if let Some(item) = self.funs.get(name.as_str()) {
                    self.found.insert(item.key().clone());
                    collect_named_keys(&item.declared_type(), &mut self.found);
                }
            }
            Expr::BinOp(_, l, r) | Expr::Apply(l, r) => {
                self.expr(l, bound);
                self.expr(r, bound);
            }
            Expr::Lambda { param, ty, body } => {
                collect_type_keys(ty, &mut self.found);
                bound.push(param.clone());
                self.expr(body, bound);
                bound.pop();
            }
            Expr::Record { fields, unknown } => {
                for f in fields {
                    self.found.insert(f.key.clone());
                    self.expr(&f.value, bound);
                }
                for (k, v) in unknown {
                    self.found.insert(k.clone());
                    self.expr(v, bound);
                }
            }
            Expr::Select(t, label) => {
                if let Some(keys) = self.by_label.get(label) {
                    self.found.extend(keys.iter().cloned());
                }
                self.expr(t, bound);
            }
            Expr::Update(t, fields) => {
                self.expr(t, bound);
                for f in fields {
                    self.found.insert(f.key.clone());
                    self.expr(&f.value, bound);
                }
            }
            Expr::Convert { from, to, inner } => {
                collect_type_keys(from, &mut self.found);
                collect_type_keys(to, &mut self.found);
                self.expr(inner, bound);
            }
        }
    }
}

/// μ of a whole module: the union over all of its producers.
pub fn module_used_keys(m: &Module) -> BTreeSet<Key> {
    m.refs.iter().flat_map(|r| used_keys(&r.items, &m.defs)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Clause {
    /// The deployed type of a key must evolve into the incoming one.
    Provider,
    /// An incoming consumer's view must relate to the deployed type.
    Consumer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub key: Key,
    pub clause: Clause,
    pub expected: Option<Type>,
    pub found: Option<Type>,
    /// Innermost record field involved, when the failure is inside a record.
    pub field: Option<Key>,
    pub reason: String,
}

impl Violation {
    /// Whether this violation names `key`, either directly or as the field.
    pub fn cites(&self, key: &Key) -> bool {
        &self.key == key || self.field.as_ref() == Some(key)
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let clause = match self.clause {
            Clause::Provider => "provider",
            Clause::Consumer => "consumer",
        };
        let show = |t: &Option<Type>| t.as_ref().map(|t| t.to_string()).unwrap_or_else(|| "-".into());
        write!(
            f,
            "key={}\tclause={}\tfield={}\texpected={}\tfound={}\treason={}",
            self.key,
            clause,
            self.field.as_ref().map(|k| k.as_str()).unwrap_or("-"),
            show(&self.expected),
            show(&self.found),
            self.reason
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CompatVerdict {
    pub violations: Vec<Violation>,
}

impl CompatVerdict {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    /// One violation per line.
    pub fn report(&self) -> String {
        self.violations.iter().map(|v| format!("{v}\n")).collect()
    }
}

/// Checks an incoming batch against the deployed system.
///
/// * `phi` is the deployed signature Φ_S.
/// * `deployed` are the modules currently running, including the old
///   versions of any module the batch replaces.
/// * `c` is the environment the batch was checked in (the rest of the system
///   plus the batch itself), `p` what the batch provides.
///
/// Returns the verdict and, when it is ok, the signature after deployment.
pub fn module_compatibility(
    phi: &Signature,
    deployed: &[Module],
    batch: &[Module],
    c: &GlobalEnv,
    p: &GlobalEnv,
) -> (CompatVerdict, Signature) {
    let batch_names: BTreeSet<&str> = batch.iter().map(|m| m.name.as_str()).collect();
    let rest: Vec<&Module> = deployed.iter().filter(|m| !batch_names.contains(m.name.as_str())).collect();
    let rho_old: BTreeSet<Key> =
        deployed.iter().filter(|m| batch_names.contains(m.name.as_str())).flat_map(|m| m.producer_keys()).collect();
    let rho_new: BTreeSet<Key> = batch.iter().flat_map(|m| m.producer_keys()).collect();
    let mu_rest: BTreeSet<Key> = rest.iter().flat_map(|m| module_used_keys(m)).collect();
    let mu_batch: BTreeSet<Key> = batch.iter().flat_map(module_used_keys).collect();

    let mut verdict = CompatVerdict::default();
    let mut checked = BTreeSet::new();

    for consumer in &rest {
        for r in &consumer.refs {
            for item in &r.items {
                let k = item.key();
                if !(rho_old.contains(k) || rho_new.contains(k)) || !checked.insert(k.clone()) {
                    continue;
                }
                let old = phi.get(k).map(|e| e.ty.clone());
                let violation = |expected, found, field, reason: String| Violation {
                    key: k.clone(),
                    clause: Clause::Provider,
                    expected,
                    found,
                    field,
                    reason,
                };
                let Some(new) = p.get(k) else {
                    verdict.violations.push(violation(
                        old,
                        None,
                        None,
                        format!("{} still references {} which the batch removes", consumer.name, item.name()),
                    ));
                    continue;
                };
                let want_kind = match item {
                    RefItem::Type { .. } => ElemKind::Type,
                    RefItem::Value { .. } => ElemKind::Value,
                };
                if new.module != r.producer || new.kind != want_kind {
                    verdict.violations.push(violation(
                        old,
                        Some(new.ty.clone()),
                        None,
                        format!(
                            "{} expects {} from {}, batch provides it from {}",
                            consumer.name, k, r.producer, new.module
                        ),
                    ));
                    continue;
                }
                let Some(old) = old else { continue };
                if let Err(m) = compat_check(&old, &new.ty, &mu_rest) {
                    let field = m.field();
                    verdict.violations.push(violation(Some(old), Some(new.ty.clone()), field, m.reason));
                }
            }
        }
    }

    for m in batch {
        for r in &m.refs {
            for item in &r.items {
                let k = item.key();
                let (Some(current), Some(old)) = (c.get(k), phi.get(k)) else { continue };
                if let Err(mm) = compat_check(&current.ty, &old.ty, &mu_batch) {
                    verdict.violations.push(Violation {
                        key: k.clone(),
                        clause: Clause::Consumer,
                        expected: Some(old.ty.clone()),
                        found: Some(current.ty.clone()),
                        field: mm.field(),
                        reason: format!("{}: {}", m.name, mm.reason),
                    });
                }
            }
        }
    }

    let mut next = Signature {
        entries: phi
            .entries
            .iter()
            .filter(|(k, _)| !rho_old.contains(*k) && !rho_new.contains(*k))
            .map(|(k, e)| (k.clone(), e.clone()))
            .collect(),
    };
    next.extend(&p.to_signature());
    (verdict, next)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompatError {
    #[error("unknown service {0}")]
    UnknownService(String),
}

/// Keys produced by the named services that the rest of the system consumes.
pub fn consumed_keys(u: &System, names: &BTreeSet<String>) -> Result<BTreeSet<Key>, CompatError> {
    for n in names {
        if u.service(n).is_none() {
            return Err(CompatError::UnknownService(n.clone()));
        }
    }
    let produced: BTreeSet<Key> =
        u.services.iter().filter(|s| names.contains(s.name())).flat_map(|s| s.module.producer_keys()).collect();
    let consumed: BTreeSet<Key> =
        u.services.iter().filter(|s| !names.contains(s.name())).flat_map(|s| s.module.consumer_keys()).collect();
    Ok(produced.intersection(&consumed).cloned().collect())
}

/// True when no remaining service consumes anything the named ones produce.
pub fn disconnected(u: &System, names: &BTreeSet<String>) -> Result<bool, CompatError> {
    consumed_keys(u, names).map(|k| k.is_empty())
}
