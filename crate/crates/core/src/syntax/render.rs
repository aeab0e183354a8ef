use std::fmt::Write;

use crate::model::*;

pub fn render_base_type(b: &BaseType) -> String {
    match b {
        BaseType::Int => "int".into(),
        BaseType::Str => "string".into(),
        BaseType::Named { name, key } => format!("{name}@{key}"),
        BaseType::Record(fields) => {
            if fields.is_empty() {
                return "{}".into();
            }
            let inner: Vec<String> =
                fields.iter().map(|f| format!("{}@{} : {}", f.label, f.key, render_base_type(&f.ty))).collect();
            format!("{{ {} }}", inner.join(", "))
        }
    }
}

pub fn render_type(t: &Type) -> String {
    match t {
        Type::Base(b) => render_base_type(b),
        Type::Arrow(p, r) => {
            let lhs = match **p {
                Type::Arrow(..) => format!("({})", render_type(p)),
                Type::Base(_) => render_type(p),
            };
            format!("{lhs} -> {}", render_type(r))
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Ctx {
    Top,
    AddLeft,
    Postfix,
}

pub fn render_expr(e: &Expr) -> String {
    let mut out = String::new();
    expr(e, Ctx::Top, &mut out);
    out
}

fn expr(e: &Expr, ctx: Ctx, out: &mut String) {
    match e {
        Expr::Int(n) => {
            let _ = write!(out, "{n}");
        }
        Expr::Str(s) => string_lit(s, out),
        Expr::Fun(n) | Expr::Var(n) => out.push_str(n),
        Expr::Await(t) => {
            let _ = write!(out, "{t}?");
        }
        Expr::Lambda { param, ty, body } => {
            let wrap = ctx != Ctx::Top;
            if wrap {
                out.push('(');
            }
            let _ = write!(out, "\\{param} : {} . ", render_type(ty));
            expr(body, Ctx::Top, out);
            if wrap {
                out.push(')');
            }
        }
        Expr::BinOp(BinOp::Add, l, r) => {
            let wrap = ctx == Ctx::Postfix;
            if wrap {
                out.push('(');
            }
            expr(l, Ctx::AddLeft, out);
            out.push_str(" + ");
            expr(r, Ctx::Postfix, out);
            if wrap {
                out.push(')');
            }
        }
        Expr::Apply(f, a) => {
            expr(f, Ctx::Postfix, out);
            out.push('(');
            expr(a, Ctx::Top, out);
            out.push(')');
        }
        Expr::Select(t, label) => {
            expr(t, Ctx::Postfix, out);
            out.push('.');
            out.push_str(label);
        }
        Expr::Record { fields, unknown } => {
            out.push('{');
            field_inits(fields, out);
            for (i, (k, v)) in unknown.iter().enumerate() {
                out.push_str(if i == 0 && fields.is_empty() { " " } else { ", " });
                let _ = write!(out, "#{k} = ");
                expr(v, Ctx::Top, out);
            }
            if !fields.is_empty() || !unknown.is_empty() {
                out.push(' ');
            }
            out.push('}');
        }
        Expr::Update(t, fields) => {
            expr(t, Ctx::Postfix, out);
            out.push_str(" {");
            field_inits(fields, out);
            if !fields.is_empty() {
                out.push(' ');
            }
            out.push('}');
        }
        Expr::Convert { from, to, inner } => {
            let _ = write!(out, "convert[{} => {}](", render_type(from), render_type(to));
            expr(inner, Ctx::Top, out);
            out.push(')');
        }
    }
}

fn field_inits(fields: &[FieldInit], out: &mut String) {
    for (i, f) in fields.iter().enumerate() {
        out.push_str(if i == 0 { " " } else { ", " });
        let _ = write!(out, "{}@{} = ", f.label, f.key);
        expr(&f.value, Ctx::Top, out);
    }
}

fn string_lit(s: &str, out: &mut String) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            other => out.push(other),
        }
    }
    out.push('"');
}

pub fn render_value(v: &Value) -> String {
    render_expr(&v.to_expr())
}

fn arrow(param: &BaseType, result: &BaseType) -> String {
    format!("{} -> {}", render_base_type(param), render_base_type(result))
}

pub fn render_module(m: &Module) -> String {
    let mut out = format!("module {} {{\n", m.name);
    if !m.refs.is_empty() {
        out.push_str("  refs {\n");
        for r in &m.refs {
            let _ = writeln!(out, "    ref {} {{", r.producer);
            for item in &r.items {
                match item {
                    RefItem::Type { name, key, ty } => {
                        let _ = writeln!(out, "      type {name}@{key} : {};", render_base_type(ty));
                    }
                    RefItem::Value { name, key, param, result } => {
                        let _ = writeln!(out, "      fun {name}@{key} : {};", arrow(param, result));
                    }
                }
            }
            out.push_str("    }\n");
        }
        out.push_str("  }\n");
    }
    out.push_str("  defs {\n");
    for d in &m.defs {
        match d {
            Definition::Type { key, name, body } => {
                let _ = writeln!(out, "    type {name}@{key} = {};", render_base_type(body));
            }
            Definition::Value { key, name, param, result, body } => {
                let _ = writeln!(out, "    fun {name}@{key} : {} =", arrow(param, result));
                let _ = writeln!(out, "      {};", render_expr(body));
            }
        }
    }
    out.push_str("  }\n}\n");
    out
}

pub fn render_system(u: &System) -> String {
    let mut out = String::new();
    for s in &u.services {
        out.push_str(&render_module(&s.module));
        out.push('\n');
    }
    for s in &u.services {
        let _ = writeln!(out, "service {} @ {} {{", s.name(), s.label);
        for p in &s.proxies {
            match p {
                Proxy::Ready { producer, entries, label } => {
                    let _ = writeln!(out, "  proxy {producer} @ {label} {{");
                    for e in entries {
                        let _ = writeln!(out, "    fun {} => {} : {};", e.local, e.remote, arrow(&e.param, &e.result));
                    }
                    out.push_str("  }\n");
                }
                Proxy::Outdated { producer, signature, label } => {
                    let _ = writeln!(out, "  outdated {producer} @ {label} {{");
                    for (k, e) in &signature.entries {
                        let _ = writeln!(out, "    {k} {} : {};", e.name, render_type(&e.ty));
                    }
                    out.push_str("  }\n");
                }
            }
        }
        for t in &s.threads {
            let _ = writeln!(out, "  thread {} = {};", t.id, render_expr(&t.expr));
        }
        out.push_str("}\n");
    }
    out
}
