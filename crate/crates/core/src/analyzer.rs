//! Signature-change taxonomy: diffing record schemas, classifying
//! deployments and aggregating deployment logs with a worst-case estimate of
//! how many deployments break consumers.
//!
//! Optional fields exist only here. The calculus adapts any added field with
//! a default, so a schema converted from a [`BaseType`] marks every field
//! optional.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BaseType, Key};

/// Aggregated per-kind counts from the published evaluation, one line per factory.
pub const PAPER_FIXTURE: &str = include_str!("../fixtures/paper_tables.log");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ChangeKind {
    NewOptionalField,
    ChangeFieldType,
    RemoveField,
    NewMandatoryField,
    RenameField,
    ReorderFields,
    ChangeToOptional,
    ChangeToMandatory,
}

impl ChangeKind {
    pub const ALL: [ChangeKind; 8] = [
        ChangeKind::NewOptionalField,
        ChangeKind::ChangeFieldType,
        ChangeKind::RemoveField,
        ChangeKind::NewMandatoryField,
        ChangeKind::RenameField,
        ChangeKind::ReorderFields,
        ChangeKind::ChangeToOptional,
        ChangeKind::ChangeToMandatory,
    ];

    /// Incompatible unless usage information says otherwise.
    pub fn is_breaking(self) -> bool {
        matches!(
            self,
            ChangeKind::ChangeFieldType
                | ChangeKind::RemoveField
                | ChangeKind::NewMandatoryField
                | ChangeKind::ChangeToMandatory
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            ChangeKind::NewOptionalField => "NewOptionalField",
            ChangeKind::ChangeFieldType => "ChangeFieldType",
            ChangeKind::RemoveField => "RemoveField",
            ChangeKind::NewMandatoryField => "NewMandatoryField",
            ChangeKind::RenameField => "RenameField",
            ChangeKind::ReorderFields => "ReorderFields",
            ChangeKind::ChangeToOptional => "ChangeToOptional",
            ChangeKind::ChangeToMandatory => "ChangeToMandatory",
        }
    }
}

impl fmt::Display for ChangeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChangeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ChangeKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| format!("unknown change kind {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldType {
    Int,
    Str,
    Record(Vec<FieldSchema>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSchema {
    pub label: String,
    pub key: Key,
    pub ty: FieldType,
    pub optional: bool,
}

impl FieldSchema {
    pub fn new(label: &str, key: &str, ty: FieldType, optional: bool) -> Self {
        FieldSchema { label: label.into(), key: Key::new(key), ty, optional }
    }
}

/// Schema of the fields of an expanded record type; `None` for non-records.
pub fn schema_of(b: &BaseType) -> Option<Vec<FieldSchema>> {
    let BaseType::Record(fields) = b else { return None };
    Some(
        fields
            .iter()
            .map(|f| FieldSchema { label: f.label.clone(), key: f.key.clone(), ty: field_type(&f.ty), optional: true })
            .collect(),
    )
}

fn field_type(b: &BaseType) -> FieldType {
    match b {
        BaseType::Int => FieldType::Int,
        BaseType::Str => FieldType::Str,
        BaseType::Record(_) => FieldType::Record(schema_of(b).unwrap_or_default()),
        BaseType::Named { .. } => FieldType::Record(Vec::new()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Change {
    pub kind: ChangeKind,
    pub key: Key,
    /// Keys of the enclosing record fields, outermost first.
    pub parents: Vec<Key>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalyzerError {
    #[error("key {0} appears twice in one record schema")]
    DuplicateKeyInSchema(Key),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: negative count")]
    NegativeCount { line: usize },
}

fn check_unique(fields: &[FieldSchema]) -> Result<(), AnalyzerError> {
    let mut seen = BTreeSet::new();
    for f in fields {
        if !seen.insert(&f.key) {
            return Err(AnalyzerError::DuplicateKeyInSchema(f.key.clone()));
        }
    }
    Ok(())
}

/// Key-based diff of two record schemas.
pub fn diff_schemas(old: &[FieldSchema], new: &[FieldSchema]) -> Result<Vec<Change>, AnalyzerError> {
    let mut out = Vec::new();
    diff_into(old, new, &mut Vec::new(), &mut out)?;
    Ok(out)
}

fn diff_into(
    old: &[FieldSchema],
    new: &[FieldSchema],
    parents: &mut Vec<Key>,
    out: &mut Vec<Change>,
) -> Result<(), AnalyzerError> {
    check_unique(old)?;
    check_unique(new)?;
    let mut push =
        |kind, key: &Key, parents: &Vec<Key>| out.push(Change { kind, key: key.clone(), parents: parents.clone() });
    let mut nested = Vec::new();
    for f in old {
        let Some(g) = new.iter().find(|g| g.key == f.key) else {
            push(ChangeKind::RemoveField, &f.key, parents);
            continue;
        };
        if f.label != g.label {
            push(ChangeKind::RenameField, &f.key, parents);
        }
        match (&f.ty, &g.ty) {
            (FieldType::Record(a), FieldType::Record(b)) => nested.push((f.key.clone(), a, b)),
            (a, b) if a != b => push(ChangeKind::ChangeFieldType, &f.key, parents),
            _ => {}
        }
        match (f.optional, g.optional) {
            (false, true) => push(ChangeKind::ChangeToOptional, &f.key, parents),
            (true, false) => push(ChangeKind::ChangeToMandatory, &f.key, parents),
            _ => {}
        }
    }
    for g in new {
        if old.iter().all(|f| f.key != g.key) {
            let kind = if g.optional { ChangeKind::NewOptionalField } else { ChangeKind::NewMandatoryField };
            push(kind, &g.key, parents);
        }
    }
    let common_old: Vec<&Key> = old.iter().map(|f| &f.key).filter(|k| new.iter().any(|g| &g.key == *k)).collect();
    let common_new: Vec<&Key> = new.iter().map(|g| &g.key).filter(|k| old.iter().any(|f| &f.key == *k)).collect();
    if common_old != common_new {
        let key = parents.last().cloned().unwrap_or_else(|| Key::new("*"));
        let mut outer = parents.clone();
        outer.pop();
        out.push(Change { kind: ChangeKind::ReorderFields, key, parents: outer });
    }
    for (key, a, b) in nested {
        parents.push(key);
        diff_into(a, b, parents, out)?;
        parents.pop();
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Classification {
    Safe,
    Breaking(Vec<Change>),
}

/// A deployment breaks consumers if any change is outside the compatible
/// set. Without usage information removals and type changes are assumed to
/// hit a used key; with it, they are safe when the key or an enclosing field
/// is unused.
pub fn classify(changes: &[Change], used: Option<&BTreeSet<Key>>) -> Classification {
    let breaking: Vec<Change> = changes
        .iter()
        .filter(|c| c.kind.is_breaking())
        .filter(|c| match (c.kind, used) {
            (ChangeKind::RemoveField | ChangeKind::ChangeFieldType, Some(mu)) => {
                mu.contains(&c.key) && c.parents.iter().all(|p| mu.contains(p))
            }
            _ => true,
        })
        .cloned()
        .collect();
    if breaking.is_empty() {
        Classification::Safe
    } else {
        Classification::Breaking(breaking)
    }
}

// ---------------------------------------------------------------------------
// Deployment logs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Removals {
    Used,
    Unused,
}

/// `deployment,<id>,<factory>,<kind>=<count>;...[,removals=used|unused]`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeploymentRecord {
    pub id: String,
    pub factory: String,
    pub counts: Vec<(ChangeKind, u64)>,
    pub removals: Option<Removals>,
}

impl DeploymentRecord {
    pub fn is_breaking(&self) -> bool {
        self.counts.iter().any(|(k, n)| {
            *n > 0 && k.is_breaking() && !(*k == ChangeKind::RemoveField && self.removals == Some(Removals::Unused))
        })
    }
}

/// `summary,<factory>,<deployments>,<kind>=<changes>/<deployments>;...[,published_broken=<n>]`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorySummary {
    pub factory: String,
    pub deployments: u64,
    pub kinds: Vec<(ChangeKind, u64, u64)>,
    pub published_broken: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LogLine {
    Deployment(DeploymentRecord),
    Summary(FactorySummary),
}

fn count(text: &str, line: usize) -> Result<u64, AnalyzerError> {
    let t = text.trim();
    if t.starts_with('-') {
        return Err(AnalyzerError::NegativeCount { line });
    }
    t.parse().map_err(|_| AnalyzerError::Malformed { line, message: format!("{t:?} is not a count") })
}

fn pairs(text: &str, line: usize) -> Result<Vec<(ChangeKind, String)>, AnalyzerError> {
    let malformed = |message: String| AnalyzerError::Malformed { line, message };
    text.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (k, v) = p.split_once('=').ok_or_else(|| malformed(format!("expected kind=count, found {p:?}")))?;
            Ok((k.trim().parse().map_err(malformed)?, v.trim().to_string()))
        })
        .collect()
}

/// Parses a log; blank lines and `#` comments are skipped.
pub fn parse_log(text: &str) -> Result<Vec<LogLine>, AnalyzerError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let malformed = |message: &str| AnalyzerError::Malformed { line, message: message.to_string() };
        let cols: Vec<&str> = t.split(',').map(str::trim).collect();
        match cols.first().copied() {
            Some("deployment") if cols.len() == 4 || cols.len() == 5 => {
                let counts = pairs(cols[3], line)?
                    .into_iter()
                    .map(|(k, v)| Ok((k, count(&v, line)?)))
                    .collect::<Result<Vec<_>, AnalyzerError>>()?;
                let removals = match cols.get(4) {
                    None => None,
                    Some(&"removals=used") => Some(Removals::Used),
                    Some(&"removals=unused") => Some(Removals::Unused),
                    Some(_) => return Err(malformed("expected removals=used or removals=unused")),
                };
                out.push(LogLine::Deployment(DeploymentRecord {
                    id: cols[1].to_string(),
                    factory: cols[2].to_string(),
                    counts,
                    removals,
                }));
            }
            Some("summary") if cols.len() == 4 || cols.len() == 5 => {
                let kinds = pairs(cols[3], line)?
                    .into_iter()
                    .map(|(k, v)| {
                        let (c, d) = v.split_once('/').ok_or_else(|| malformed("expected changes/deployments"))?;
                        Ok((k, count(c, line)?, count(d, line)?))
                    })
                    .collect::<Result<Vec<_>, AnalyzerError>>()?;
                let published_broken = match cols.get(4) {
                    None => None,
                    Some(p) => match p.strip_prefix("published_broken=") {
                        Some(n) => Some(count(n, line)?),
                        None => return Err(malformed("expected published_broken=<n>")),
                    },
                };
                out.push(LogLine::Summary(FactorySummary {
                    factory: cols[1].to_string(),
                    deployments: count(cols[2], line)?,
                    kinds,
                    published_broken,
                }));
            }
            _ => return Err(malformed("expected a deployment or summary record")),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactoryRow {
    pub factory: String,
    pub changes: u64,
    pub deployments: u64,
    pub broken: u64,
    pub safe: u64,
    /// Safe share in hundredths of a percent.
    pub safe_pct: u64,
    pub published_broken: Option<u64>,
}

impl FactoryRow {
    pub fn discrepancy(&self) -> bool {
        self.published_broken.is_some_and(|p| p != self.broken)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub rows: Vec<FactoryRow>,
    pub total: FactoryRow,
    /// Totals using the published broken counts, when every factory has one.
    pub published_total: Option<FactoryRow>,
}

/// `safe / total` in hundredths of a percent, rounded half up.
pub fn percent_hundredths(safe: u64, total: u64) -> u64 {
    if total == 0 {
        return 0;
    }
    (2 * safe * 10_000 + total) / (2 * total)
}

fn row(factory: &str, changes: u64, deployments: u64, broken: u64, published_broken: Option<u64>) -> FactoryRow {
    let broken = broken.min(deployments);
    let safe = deployments - broken;
    FactoryRow {
        factory: factory.to_string(),
        changes,
        deployments,
        broken,
        safe,
        safe_pct: percent_hundredths(safe, deployments),
        published_broken,
    }
}

/// Per-factory and total figures. Summary lines use the worst case: every
/// deployment containing a breaking kind is a separate deployment.
pub fn aggregate(lines: &[LogLine]) -> AnalysisReport {
    #[derive(Default)]
    struct Acc {
        changes: u64,
        deployments: u64,
        broken: u64,
        published: Option<u64>,
        all_published: bool,
    }
    let mut order: Vec<String> = Vec::new();
    let mut accs: BTreeMap<String, Acc> = BTreeMap::new();
    for l in lines {
        let factory = match l {
            LogLine::Deployment(d) => &d.factory,
            LogLine::Summary(s) => &s.factory,
        };
        if !accs.contains_key(factory) {
            order.push(factory.clone());
            accs.insert(factory.clone(), Acc { all_published: true, ..Default::default() });
        }
        let acc = accs.get_mut(factory).expect("inserted above");
        match l {
            LogLine::Deployment(d) => {
                acc.changes += d.counts.iter().map(|(_, n)| n).sum::<u64>();
                acc.deployments += 1;
                acc.broken += u64::from(d.is_breaking());
                acc.all_published = false;
            }
            LogLine::Summary(s) => {
                acc.changes += s.kinds.iter().map(|(_, c, _)| c).sum::<u64>();
                acc.deployments += s.deployments;
                let worst: u64 = s.kinds.iter().filter(|(k, _, _)| k.is_breaking()).map(|(_, _, d)| d).sum();
                acc.broken += worst.min(s.deployments);
                match s.published_broken {
                    Some(p) => acc.published = Some(acc.published.unwrap_or(0) + p),
                    None => acc.all_published = false,
                }
            }
        }
    }
    let rows: Vec<FactoryRow> = order
        .iter()
        .map(|f| {
            let a = &accs[f];
            row(f, a.changes, a.deployments, a.broken, if a.all_published { a.published } else { None })
        })
        .collect();
    let sum = |g: fn(&FactoryRow) -> u64| rows.iter().map(g).sum::<u64>();
    let total = row("Total", sum(|r| r.changes), sum(|r| r.deployments), sum(|r| r.broken), None);
    let published_total = (!rows.is_empty() && rows.iter().all(|r| r.published_broken.is_some())).then(|| {
        let broken = rows.iter().filter_map(|r| r.published_broken).sum();
        row("Total (published)", total.changes, total.deployments, broken, None)
    });
    AnalysisReport { rows, total, published_total }
}

fn pct(h: u64) -> String {
    format!("{}.{:02}%", h / 100, h % 100)
}

impl AnalysisReport {
    /// Aligned text table followed by a note for each published figure that
    /// disagrees with the one computed from the per-kind counts.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<20} {:>9} {:>11} {:>8} {:>8} {:>8}",
            "factory", "changes", "deployments", "broken", "safe", "safe%"
        );
        let all = self.rows.iter().chain(std::iter::once(&self.total)).chain(self.published_total.as_ref());
        for r in all {
            let _ = writeln!(
                out,
                "{:<20} {:>9} {:>11} {:>8} {:>8} {:>8}",
                r.factory,
                r.changes,
                r.deployments,
                r.broken,
                r.safe,
                pct(r.safe_pct)
            );
        }
        for r in self.rows.iter().filter(|r| r.discrepancy()) {
            let published = r.published_broken.unwrap_or_default();
            let _ = writeln!(
                out,
                "note: {} published broken {} (safe {}, {}) but its per-kind deployment counts give {}",
                r.factory,
                published,
                r.deployments - published.min(r.deployments),
                pct(percent_hundredths(r.deployments - published.min(r.deployments), r.deployments)),
                r.broken
            );
        }
        out
    }

    /// One tab-separated record per row.
    pub fn render_machine(&self) -> String {
        let mut out = String::new();
        let all = self.rows.iter().chain(std::iter::once(&self.total)).chain(self.published_total.as_ref());
        for r in all {
            let published = r.published_broken.map(|p| p.to_string()).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "factory={}\tchanges={}\tdeployments={}\tbroken={}\tsafe={}\tsafe_pct={}\tpublished_broken={}\tdiscrepancy={}",
                r.factory,
                r.changes,
                r.deployments,
                r.broken,
                r.safe,
                pct(r.safe_pct).trim_end_matches('%'),
                published,
                r.discrepancy()
            );
        }
        out
    }
}
