//! Random types, values and modules.

use std::collections::BTreeSet;

use cevo_core::model::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Type skeleton; keys and labels are assigned afterwards.
#[derive(Debug, Clone)]
pub enum Shape {
    Int,
    Str,
    Rec(Vec<Shape>),
}

/// Records nested up to `depth` levels with at most `width` fields each.
pub fn record_shape(depth: u32, width: usize) -> BoxedStrategy<Shape> {
    let leaf = prop_oneof![Just(Shape::Int), Just(Shape::Str)];
    let field = leaf.prop_recursive(depth.saturating_sub(1), 32, width as u32, move |inner| {
        prop::collection::vec(inner, 0..=width).prop_map(Shape::Rec)
    });
    prop::collection::vec(field, 0..=width).prop_map(Shape::Rec).boxed()
}

/// Fresh key source shared by everything built for one case.
#[derive(Debug, Default)]
pub struct Keys(pub u64);

impl Keys {
    pub fn starting_at(n: u64) -> Self {
        Keys(n)
    }

    pub fn fresh(&mut self) -> Key {
        self.0 += 1;
        Key::new(format!("k{}", self.0))
    }
}

pub fn to_type(shape: &Shape, keys: &mut Keys) -> BaseType {
    match shape {
        Shape::Int => BaseType::Int,
        Shape::Str => BaseType::Str,
        Shape::Rec(fields) => BaseType::Record(
            fields
                .iter()
                .enumerate()
                .map(|(i, s)| Field { label: format!("f{i}"), key: keys.fresh(), ty: to_type(s, keys) })
                .collect(),
        ),
    }
}

pub fn random_string(rng: &mut ChaCha8Rng) -> String {
    const ALPHABET: &[char] = &['a', 'b', 'Z', ' ', '"', '\\', 'é', '0', '\n', '\t', '#', '@', '{'];
    (0..rng.gen_range(0..6)).map(|_| *ALPHABET.choose(rng).unwrap()).collect()
}

/// A value of `ty` with no unknown members.
pub fn value_of(ty: &BaseType, rng: &mut ChaCha8Rng) -> Value {
    match ty {
        BaseType::Int => Value::Int(rng.gen_range(-1000..=1000)),
        BaseType::Str => Value::Str(random_string(rng)),
        BaseType::Record(fields) => Value::Record(RecordValue::new(
            fields
                .iter()
                .map(|f| KnownField { label: f.label.clone(), key: f.key.clone(), value: value_of(&f.ty, rng) })
                .collect(),
        )),
        BaseType::Named { .. } => panic!("named types are not generated"),
    }
}

/// A value as a receiver with no type information would hold it.
fn untyped_value(rng: &mut ChaCha8Rng, keys: &mut Keys, depth: u32) -> Value {
    match rng.gen_range(0..if depth == 0 { 2 } else { 3 }) {
        0 => Value::Int(rng.gen_range(-50..50)),
        1 => Value::Str(random_string(rng)),
        _ => Value::Record(RecordValue {
            known: Vec::new(),
            unknown: (0..rng.gen_range(0..3)).map(|_| (keys.fresh(), untyped_value(rng, keys, depth - 1))).collect(),
        }),
    }
}

/// Like `value_of`, but records may also carry key-tagged members the type
/// does not mention.
pub fn value_with_unknowns(ty: &BaseType, rng: &mut ChaCha8Rng, keys: &mut Keys) -> Value {
    match ty {
        BaseType::Record(fields) => {
            let known = fields
                .iter()
                .map(|f| KnownField {
                    label: f.label.clone(),
                    key: f.key.clone(),
                    value: value_with_unknowns(&f.ty, rng, keys),
                })
                .collect();
            let unknown = (0..rng.gen_range(0..3)).map(|_| (keys.fresh(), untyped_value(rng, keys, 2))).collect();
            Value::Record(RecordValue { known, unknown })
        }
        other => value_of(other, rng),
    }
}

/// Evolves `ty` the way a producer would: relabels, drops and adds fields,
/// never changing the shape of a field that survives.
pub fn evolve(ty: &BaseType, rng: &mut ChaCha8Rng, keys: &mut Keys, depth: u32) -> BaseType {
    let BaseType::Record(fields) = ty else { return ty.clone() };
    let mut out = Vec::new();
    for f in fields {
        if rng.gen_bool(0.15) {
            continue;
        }
        let label = if rng.gen_bool(0.2) { format!("{}r", f.label) } else { f.label.clone() };
        out.push(Field { label, key: f.key.clone(), ty: evolve(&f.ty, rng, keys, depth.saturating_sub(1)) });
    }
    while out.len() < 4 && rng.gen_bool(0.3) {
        let ty = if depth > 1 && rng.gen_bool(0.25) {
            BaseType::Record(vec![Field { label: "n0".into(), key: keys.fresh(), ty: BaseType::Int }])
        } else if rng.gen_bool(0.5) {
            BaseType::Int
        } else {
            BaseType::Str
        };
        let key = keys.fresh();
        out.push(Field { label: format!("g{key}"), key, ty });
    }
    out.shuffle(rng);
    BaseType::Record(out)
}

pub fn all_keys(ty: &BaseType) -> BTreeSet<Key> {
    let mut out = BTreeSet::new();
    if let BaseType::Record(fields) = ty {
        for f in fields {
            out.insert(f.key.clone());
            out.extend(all_keys(&f.ty));
        }
    }
    out
}

pub fn random_subset(keys: &BTreeSet<Key>, rng: &mut ChaCha8Rng) -> BTreeSet<Key> {
    keys.iter().filter(|_| rng.gen_bool(0.5)).cloned().collect()
}

// ---------------------------------------------------------------------------
// Modules for the parser round trip
// ---------------------------------------------------------------------------

const NAMES: &[&str] = &["Get", "Save", "Run", "Item", "Order", "apply", "x1", "Deep_name"];

fn name(rng: &mut ChaCha8Rng) -> String {
    format!("{}{}", NAMES.choose(rng).unwrap(), rng.gen_range(0..100))
}

fn random_base(rng: &mut ChaCha8Rng, keys: &mut Keys, named: &[(String, Key)], depth: u32) -> BaseType {
    match rng.gen_range(0..if depth == 0 { 3 } else { 4 }) {
        0 => BaseType::Int,
        1 => BaseType::Str,
        2 => match named.choose(rng) {
            Some((n, k)) => BaseType::Named { name: n.clone(), key: k.clone() },
            None => BaseType::Int,
        },
        _ => BaseType::Record(
            (0..rng.gen_range(0..4))
                .map(|i| Field {
                    label: format!("l{i}"),
                    key: keys.fresh(),
                    ty: random_base(rng, keys, named, depth - 1),
                })
                .collect(),
        ),
    }
}

fn random_type(rng: &mut ChaCha8Rng, keys: &mut Keys, named: &[(String, Key)], depth: u32) -> Type {
    if depth > 0 && rng.gen_bool(0.2) {
        Type::arrow(random_type(rng, keys, named, depth - 1), random_type(rng, keys, named, depth - 1))
    } else {
        Type::Base(random_base(rng, keys, named, depth))
    }
}

fn random_inits(rng: &mut ChaCha8Rng, keys: &mut Keys, ctx: &ExprCtx, depth: u32) -> Vec<FieldInit> {
    (0..rng.gen_range(0..3))
        .map(|i| FieldInit { label: format!("l{i}"), key: keys.fresh(), value: random_expr(rng, keys, ctx, depth - 1) })
        .collect()
}

struct ExprCtx<'a> {
    scope: Vec<String>,
    funs: &'a [String],
    named: &'a [(String, Key)],
}

/// Syntactically valid, not necessarily well typed.
fn random_expr(rng: &mut ChaCha8Rng, keys: &mut Keys, ctx: &ExprCtx, depth: u32) -> Expr {
    let choices = if depth == 0 { 4 } else { 10 };
    match rng.gen_range(0..choices) {
        0 => Expr::Int(rng.gen_range(-1_000_000..1_000_000)),
        1 => Expr::Str(random_string(rng)),
        2 => match ctx.scope.choose(rng) {
            Some(v) => Expr::Var(v.clone()),
            None => Expr::Int(0),
        },
        3 => Expr::Fun(ctx.funs.choose(rng).cloned().unwrap_or_else(|| "Outer".into())),
        4 => Expr::plus(random_expr(rng, keys, ctx, depth - 1), random_expr(rng, keys, ctx, depth - 1)),
        5 => {
            let param = format!("v{}", rng.gen_range(0..3));
            let ty = random_type(rng, keys, ctx.named, 1);
            let inner = ExprCtx { scope: [ctx.scope.clone(), vec![param.clone()]].concat(), ..*ctx };
            Expr::lambda(param, ty, random_expr(rng, keys, &inner, depth - 1))
        }
        6 => Expr::apply(random_expr(rng, keys, ctx, depth - 1), random_expr(rng, keys, ctx, depth - 1)),
        7 => Expr::record(random_inits(rng, keys, ctx, depth)),
        8 => Expr::select(random_expr(rng, keys, ctx, depth - 1), format!("l{}", rng.gen_range(0..3))),
        _ => Expr::update(random_expr(rng, keys, ctx, depth - 1), random_inits(rng, keys, ctx, depth)),
    }
}

/// A random module that the parser must accept: keys, names, labels and
/// producers are distinct where the syntax requires it.
pub fn random_module(rng: &mut ChaCha8Rng) -> Module {
    let mut keys = Keys::default();
    let mut used = BTreeSet::new();
    let mut fresh_name = |rng: &mut ChaCha8Rng| loop {
        let n = name(rng);
        if used.insert(n.clone()) {
            return n;
        }
    };
    let mut m = Module::new(format!("M{}", rng.gen_range(0..1000)));
    let mut named: Vec<(String, Key)> = Vec::new();
    let mut funs: Vec<String> = Vec::new();
    for p in 0..rng.gen_range(0..3) {
        let mut items = Vec::new();
        for _ in 0..rng.gen_range(0..4) {
            let n = fresh_name(rng);
            let key = keys.fresh();
            if rng.gen_bool(0.5) {
                let ty = random_base(rng, &mut keys, &named, 2);
                named.push((n.clone(), key.clone()));
                items.push(RefItem::Type { name: n, key, ty });
            } else {
                let param = random_base(rng, &mut keys, &named, 1);
                let result = random_base(rng, &mut keys, &named, 1);
                funs.push(n.clone());
                items.push(RefItem::Value { name: n, key, param, result });
            }
        }
        m.refs.push(Reference { producer: format!("P{p}"), items });
    }
    for _ in 0..rng.gen_range(0..4) {
        let n = fresh_name(rng);
        let key = keys.fresh();
        if rng.gen_bool(0.3) {
            let body = random_base(rng, &mut keys, &named, 2);
            named.push((n.clone(), key.clone()));
            m.defs.push(Definition::Type { key, name: n, body });
        } else {
            funs.push(n.clone());
            let param = random_base(rng, &mut keys, &named, 1);
            let result = random_base(rng, &mut keys, &named, 1);
            let ctx = ExprCtx { scope: Vec::new(), funs: &funs, named: &named };
            let body = random_expr(rng, &mut keys, &ctx, 4);
            m.defs.push(Definition::Value { key, name: n, param, result, body });
        }
    }
    m
}
