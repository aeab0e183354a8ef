//! Value adaptation between compatible types and proxy-entry generation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::*;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdapterError {
    #[error("closures cannot be adapted across a service boundary")]
    HigherOrderAtBoundary,
    #[error("cannot adapt {value} to {target}")]
    IrreconcilableShape { value: String, target: String },
    #[error("producer {producer} provides no {key}")]
    MissingEndpoint { producer: String, key: Key },
}

fn irreconcilable(v: &Value, target: impl std::fmt::Display) -> AdapterError {
    AdapterError::IrreconcilableShape { value: v.to_string(), target: target.to_string() }
}

/// Zero of each base type. Named types are expected to be expanded first and
/// default to the empty record.
pub fn default_value(beta: &BaseType) -> Value {
    match beta {
        BaseType::Int => Value::Int(0),
        BaseType::Str => Value::Str(String::new()),
        BaseType::Record(fields) => Value::Record(RecordValue::new(
            fields
                .iter()
                .map(|f| KnownField { label: f.label.clone(), key: f.key.clone(), value: default_value(&f.ty) })
                .collect(),
        )),
        BaseType::Named { .. } => Value::Record(RecordValue::default()),
    }
}

/// Structural type of a first-order value. Unknown members get the label
/// `#k`, so a record carrying unknown fields never equals a declared type.
pub fn runtime_type(v: &Value) -> Option<BaseType> {
    match v {
        Value::Int(_) => Some(BaseType::Int),
        Value::Str(_) => Some(BaseType::Str),
        Value::Closure { .. } => None,
        Value::Record(r) => {
            let mut fields = Vec::with_capacity(r.known.len() + r.unknown.len());
            for f in &r.known {
                fields.push(Field { label: f.label.clone(), key: f.key.clone(), ty: runtime_type(&f.value)? });
            }
            for (k, uv) in &r.unknown {
                fields.push(Field { label: format!("#{k}"), key: k.clone(), ty: runtime_type(uv)? });
            }
            Some(BaseType::Record(fields))
        }
    }
}

/// Adapts `v : from` to `to`.
pub fn convert(v: &Value, from: &Type, to: &Type) -> Result<Value, AdapterError> {
    if from == to {
        return Ok(v.clone());
    }
    match (from, to) {
        (Type::Arrow(p, r), Type::Arrow(p2, r2)) => {
            if !matches!(v, Value::Closure { .. }) {
                return Err(irreconcilable(v, to));
            }
            let x = "x".to_string();
            let arg = Expr::Convert { from: (**p2).clone(), to: (**p).clone(), inner: Box::new(Expr::Var(x.clone())) };
            let body = Expr::Convert {
                from: (**r).clone(),
                to: (**r2).clone(),
                inner: Box::new(Expr::apply(v.to_expr(), arg)),
            };
            Ok(Value::Closure { param: x, ty: (**p2).clone(), body: Box::new(body) })
        }
        (Type::Base(_), Type::Base(target)) => convert_base(v, target),
        _ => Err(irreconcilable(v, to)),
    }
}

/// Adapts a first-order value to `target` using its runtime shape.
pub fn convert_base(v: &Value, target: &BaseType) -> Result<Value, AdapterError> {
    match (v, target) {
        (Value::Closure { .. }, _) => Err(AdapterError::HigherOrderAtBoundary),
        (Value::Int(_), BaseType::Int) | (Value::Str(_), BaseType::Str) => Ok(v.clone()),
        (Value::Record(r), BaseType::Record(fields)) => {
            let mut known = Vec::with_capacity(fields.len());
            for f in fields {
                let value = match r.get(&f.key) {
                    Some(member) if runtime_type(member).as_ref() == Some(&f.ty) => member.clone(),
                    Some(member) => convert_base(member, &f.ty)?,
                    None => default_value(&f.ty),
                };
                known.push(KnownField { label: f.label.clone(), key: f.key.clone(), value });
            }
            let unknown = r
                .members()
                .into_iter()
                .filter(|(k, _, _)| fields.iter().all(|f| &f.key != *k))
                .map(|(k, _, mv)| (k.clone(), mv.clone()))
                .collect();
            Ok(Value::Record(RecordValue { known, unknown }))
        }
        _ => Err(irreconcilable(v, target)),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldAction {
    Keep(Key),
    Recurse(Key, BaseType, BaseType),
    Default(Key, BaseType),
    PreserveUnknown(Key),
}

/// What `convert` does at the top level of a record-to-record adaptation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterPlan {
    pub from: Type,
    pub to: Type,
    pub actions: Vec<FieldAction>,
}

pub fn plan(from: &Type, to: &Type) -> AdapterPlan {
    let mut actions = Vec::new();
    if let (Type::Base(BaseType::Record(src)), Type::Base(BaseType::Record(dst))) = (from, to) {
        for f in dst {
            actions.push(match src.iter().find(|g| g.key == f.key) {
                Some(g) if g.ty == f.ty => FieldAction::Keep(f.key.clone()),
                Some(g) => FieldAction::Recurse(f.key.clone(), g.ty.clone(), f.ty.clone()),
                None => FieldAction::Default(f.key.clone(), f.ty.clone()),
            });
        }
        for g in src {
            if dst.iter().all(|f| f.key != g.key) {
                actions.push(FieldAction::PreserveUnknown(g.key.clone()));
            }
        }
    }
    AdapterPlan { from: from.clone(), to: to.clone(), actions }
}

/// One proxy entry per value reference, named and typed after the producer's
/// current signature.
pub fn gen_proxies(producer: &str, refs: &Reference, sig: &Signature) -> Result<Vec<ValueProxy>, AdapterError> {
    let mut out = Vec::new();
    for item in &refs.items {
        let RefItem::Value { name, key, .. } = item else { continue };
        let missing = || AdapterError::MissingEndpoint { producer: producer.to_string(), key: key.clone() };
        let entry = sig.get(key).ok_or_else(missing)?;
        let (param, result) = entry.ty.as_base_arrow().ok_or_else(missing)?;
        out.push(ValueProxy {
            local: name.clone(),
            remote: entry.name.clone(),
            param: param.clone(),
            result: result.clone(),
        });
    }
    Ok(out)
}
