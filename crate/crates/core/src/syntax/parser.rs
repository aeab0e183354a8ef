use std::collections::{BTreeMap, BTreeSet};

use super::lexer::{lex, Tok, Token};
use super::{ParseError, ParseErrorKind, PLACEHOLDER_KEY};
use crate::model::*;

/// Parses one module and replaces `@?` placeholders with keys that do not
/// clash with any explicit key in the module.
pub fn parse_module(src: &str) -> Result<Module, ParseError> {
    let mut module = parse_module_raw(src)?;
    let mut alloc = KeyAllocator::new();
    observe_module_keys(&module, &mut alloc);
    fill_placeholder_keys(&mut module, &mut alloc);
    Ok(module)
}

/// Parses one module, leaving `@?` placeholders in place.
pub fn parse_module_raw(src: &str) -> Result<Module, ParseError> {
    let mut p = Parser::new(src)?;
    let m = p.module()?;
    p.expect(Tok::Eof)?;
    Ok(m)
}

/// Parses a file holding any number of modules.
pub fn parse_modules(src: &str) -> Result<Vec<Module>, ParseError> {
    let mut out = parse_modules_raw(src)?;
    let mut alloc = KeyAllocator::new();
    out.iter().for_each(|m| observe_module_keys(m, &mut alloc));
    out.iter_mut().for_each(|m| fill_placeholder_keys(m, &mut alloc));
    Ok(out)
}

/// Parses any number of modules, leaving `@?` placeholders in place.
pub fn parse_modules_raw(src: &str) -> Result<Vec<Module>, ParseError> {
    let mut p = Parser::new(src)?;
    let mut out = Vec::new();
    while p.peek() != &Tok::Eof {
        out.push(p.module()?);
    }
    Ok(out)
}

/// Parses a system: module blocks followed by service blocks naming them.
pub fn parse_system(src: &str) -> Result<System, ParseError> {
    let mut p = Parser::new(src)?;
    let mut modules: BTreeMap<String, Module> = BTreeMap::new();
    let mut system = System::empty();
    let mut max_label = 0u64;
    let mut max_thread = 0u64;
    let mut thread_ids = BTreeSet::new();
    while p.peek() != &Tok::Eof {
        let at = p.here();
        match p.peek_ident() {
            Some("module") => {
                let m = p.module()?;
                if modules.contains_key(&m.name) {
                    return Err(at.err(ParseErrorKind::DuplicateName, format!("module {} defined twice", m.name)));
                }
                modules.insert(m.name.clone(), m);
            }
            Some("service") => {
                p.bump();
                let name = p.ident()?;
                if system.service(&name).is_some() {
                    return Err(at.err(ParseErrorKind::DuplicateName, format!("service {name} defined twice")));
                }
                let module = modules
                    .get(&name)
                    .cloned()
                    .ok_or_else(|| at.err(ParseErrorKind::Syntax, format!("service {name} has no module")))?;
                p.expect(Tok::At)?;
                let label = p.label(&mut max_label)?;
                p.expect(Tok::LBrace)?;
                let mut proxies = Vec::new();
                let mut threads = Vec::new();
                while p.peek() != &Tok::RBrace {
                    let at = p.here();
                    match p.ident()?.as_str() {
                        "proxy" => proxies.push(p.ready_proxy(&mut max_label)?),
                        "outdated" => proxies.push(p.outdated_proxy(&mut max_label)?),
                        "thread" => {
                            let tat = p.here();
                            let id = p.thread_id()?;
                            if !thread_ids.insert(id) {
                                return Err(
                                    tat.err(ParseErrorKind::DuplicateName, format!("thread {id} defined twice"))
                                );
                            }
                            max_thread = max_thread.max(id.0);
                            p.expect(Tok::Eq)?;
                            let expr = p.expr()?;
                            p.expect(Tok::Semi)?;
                            threads.push(Thread { id, expr });
                        }
                        other => {
                            return Err(at.err(
                                ParseErrorKind::Syntax,
                                format!("expected proxy, outdated or thread, found {other}"),
                            ))
                        }
                    }
                }
                p.expect(Tok::RBrace)?;
                system.services.push(Service { module, proxies, label, threads });
            }
            _ => return Err(at.err(ParseErrorKind::Syntax, "expected module or service".into())),
        }
    }
    system.next_label = max_label + 1;
    system.next_thread = max_thread + 1;
    Ok(system)
}

/// Parses a closed expression. Every identifier is a function name.
pub fn parse_expr(src: &str) -> Result<Expr, ParseError> {
    let mut p = Parser::new(src)?;
    let e = p.expr()?;
    p.expect(Tok::Eof)?;
    Ok(e)
}

/// Parses a literal value: integers, strings and records of literals.
pub fn parse_value(src: &str) -> Result<Value, ParseError> {
    let mut p = Parser::new(src)?;
    let at = p.here();
    let e = p.expr()?;
    p.expect(Tok::Eof)?;
    match e.as_value() {
        Some(v) if v.is_first_order() => Ok(v),
        _ => Err(at.err(ParseErrorKind::Syntax, "expected a literal value".into())),
    }
}

/// Records every explicit key of `m` so the allocator never reissues it.
pub fn observe_module_keys(m: &Module, alloc: &mut KeyAllocator) {
    let mut copy = m.clone();
    walk_module_keys(&mut copy, &mut |k: &mut Key, _| alloc.observe(k));
}

/// Replaces every `@?` placeholder with a fresh key. Declarations are keyed
/// first; a placeholder on a type name then takes the key of the type
/// declared or referenced under that name.
pub fn fill_placeholder_keys(m: &mut Module, alloc: &mut KeyAllocator) {
    let mut fill = |k: &mut Key| {
        if k.as_str() == PLACEHOLDER_KEY {
            *k = alloc.fresh();
        }
    };
    let mut types: BTreeMap<String, Key> = BTreeMap::new();
    for r in &mut m.refs {
        for item in &mut r.items {
            match item {
                RefItem::Type { name, key, .. } => {
                    fill(key);
                    types.insert(name.clone(), key.clone());
                }
                RefItem::Value { key, .. } => fill(key),
            }
        }
    }
    for d in &mut m.defs {
        match d {
            Definition::Type { name, key, .. } => {
                fill(key);
                types.insert(name.clone(), key.clone());
            }
            Definition::Value { key, .. } => fill(key),
        }
    }
    walk_module_keys(m, &mut |k: &mut Key, name: Option<&str>| {
        if k.as_str() == PLACEHOLDER_KEY {
            *k = name.and_then(|n| types.get(n).cloned()).unwrap_or_else(|| alloc.fresh());
        }
    });
}

fn walk_module_keys(m: &mut Module, f: &mut dyn FnMut(&mut Key, Option<&str>)) {
    fn base(b: &mut BaseType, f: &mut dyn FnMut(&mut Key, Option<&str>)) {
        match b {
            BaseType::Record(fields) => fields.iter_mut().for_each(|fl| {
                f(&mut fl.key, None);
                base(&mut fl.ty, f)
            }),
            BaseType::Named { name, key } => f(key, Some(name)),
            _ => {}
        }
    }
    fn ty(t: &mut Type, f: &mut dyn FnMut(&mut Key, Option<&str>)) {
        match t {
            Type::Base(b) => base(b, f),
            Type::Arrow(p, r) => {
                ty(p, f);
                ty(r, f)
            }
        }
    }
    fn expr(e: &mut Expr, f: &mut dyn FnMut(&mut Key, Option<&str>)) {
        match e {
            Expr::Int(_) | Expr::Str(_) | Expr::Fun(_) | Expr::Var(_) | Expr::Await(_) => {}
            Expr::BinOp(_, l, r) | Expr::Apply(l, r) => {
                expr(l, f);
                expr(r, f)
            }
            Expr::Lambda { ty: t, body, .. } => {
                ty(t, f);
                expr(body, f)
            }
            Expr::Record { fields, unknown } => {
                for fi in fields {
                    f(&mut fi.key, None);
                    expr(&mut fi.value, f);
                }
                for (k, v) in unknown {
                    f(k, None);
                    expr(v, f);
                }
            }
            Expr::Select(t, _) => expr(t, f),
            Expr::Update(t, fields) => {
                expr(t, f);
                for fi in fields {
                    f(&mut fi.key, None);
                    expr(&mut fi.value, f);
                }
            }
            Expr::Convert { from, to, inner } => {
                ty(from, f);
                ty(to, f);
                expr(inner, f)
            }
        }
    }
    for r in &mut m.refs {
        for item in &mut r.items {
            match item {
                RefItem::Type { key, ty: b, .. } => {
                    f(key, None);
                    base(b, f)
                }
                RefItem::Value { key, param, result, .. } => {
                    f(key, None);
                    base(param, f);
                    base(result, f)
                }
            }
        }
    }
    for d in &mut m.defs {
        match d {
            Definition::Type { key, body, .. } => {
                f(key, None);
                base(body, f)
            }
            Definition::Value { key, param, result, body, .. } => {
                f(key, None);
                base(param, f);
                base(result, f);
                expr(body, f)
            }
        }
    }
}

/// Key-tagged members of a record literal.
type Unknown = Vec<(Key, Expr)>;

#[derive(Clone, Copy)]
struct Pos {
    line: usize,
    col: usize,
}

impl Pos {
    fn err(self, kind: ParseErrorKind, message: String) -> ParseError {
        ParseError { kind, line: self.line, col: self.col, message }
    }
}

const KEYWORDS: &[&str] = &["module", "refs", "ref", "defs", "type", "fun", "int", "string"];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    /// Lambda parameters in scope, innermost last.
    scope: Vec<String>,
}

impl Parser {
    fn new(src: &str) -> Result<Self, ParseError> {
        Ok(Parser { toks: lex(src)?, pos: 0, scope: Vec::new() })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_ident(&self) -> Option<&str> {
        match self.peek() {
            Tok::Ident(s) => Some(s),
            _ => None,
        }
    }

    fn here(&self) -> Pos {
        let t = &self.toks[self.pos];
        Pos { line: t.line, col: t.col }
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn syntax<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(self.here().err(ParseErrorKind::Syntax, message.into()))
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        if self.peek() == &want {
            self.bump();
            Ok(())
        } else {
            self.syntax(format!("expected {}, found {}", describe(&want), describe(self.peek())))
        }
    }

    fn eat(&mut self, want: &Tok) -> bool {
        if self.peek() == want {
            self.bump();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => self.syntax(format!("expected identifier, found {}", describe(&other))),
        }
    }

    fn name(&mut self) -> Result<String, ParseError> {
        let at = self.here();
        let s = self.ident()?;
        if KEYWORDS.contains(&s.as_str()) {
            return Err(at.err(ParseErrorKind::Syntax, format!("keyword {s} cannot be used as a name")));
        }
        Ok(s)
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        match self.peek() {
            Tok::Ident(s) if s == kw => {
                self.bump();
                Ok(())
            }
            other => self.syntax(format!("expected {kw}, found {}", describe(other))),
        }
    }

    /// `@k<N>` or `@?`.
    fn key(&mut self) -> Result<Key, ParseError> {
        self.expect(Tok::At)?;
        if self.eat(&Tok::Question) {
            return Ok(Key::new(PLACEHOLDER_KEY));
        }
        Ok(Key::new(self.ident()?))
    }

    fn label(&mut self, max: &mut u64) -> Result<DeployLabel, ParseError> {
        let s = self.ident()?;
        if let Some(n) = s.strip_prefix('l').and_then(|d| d.parse::<u64>().ok()) {
            *max = (*max).max(n);
        }
        Ok(DeployLabel::new(s))
    }

    fn thread_id(&mut self) -> Result<ThreadId, ParseError> {
        let at = self.here();
        let s = self.ident()?;
        s.strip_prefix('s')
            .and_then(|d| d.parse::<u64>().ok())
            .map(ThreadId)
            .ok_or_else(|| at.err(ParseErrorKind::Syntax, format!("thread ids look like s1, found {s}")))
    }

    // -- modules -----------------------------------------------------------

    fn module(&mut self) -> Result<Module, ParseError> {
        self.keyword("module")?;
        let name = self.name()?;
        self.expect(Tok::LBrace)?;
        let mut module = Module::new(name);
        let mut seen_refs = false;
        let mut seen_defs = false;
        let mut keys = Claims::keys();
        let mut names = Claims::names();
        let mut producers = Claims::names();
        while self.peek() != &Tok::RBrace {
            let at = self.here();
            match self.ident()?.as_str() {
                "refs" if !seen_refs => {
                    seen_refs = true;
                    self.expect(Tok::LBrace)?;
                    while self.peek() != &Tok::RBrace {
                        let r = self.reference(&module.name, &mut keys, &mut names, &mut producers)?;
                        module.refs.push(r);
                    }
                    self.expect(Tok::RBrace)?;
                }
                "defs" if !seen_defs => {
                    seen_defs = true;
                    self.expect(Tok::LBrace)?;
                    while self.peek() != &Tok::RBrace {
                        let d = self.definition(&mut keys, &mut names)?;
                        module.defs.push(d);
                    }
                    self.expect(Tok::RBrace)?;
                }
                other => return Err(at.err(ParseErrorKind::Syntax, format!("unexpected {other} in module body"))),
            }
        }
        self.expect(Tok::RBrace)?;
        Ok(module)
    }

    fn reference(
        &mut self,
        owner: &str,
        keys: &mut Claims,
        names: &mut Claims,
        producers: &mut Claims,
    ) -> Result<Reference, ParseError> {
        self.keyword("ref")?;
        let at = self.here();
        let producer = self.name()?;
        if producer == owner {
            return Err(at.err(ParseErrorKind::SelfReference, format!("module {owner} references itself")));
        }
        producers.claim(&producer, at)?;
        self.expect(Tok::LBrace)?;
        let mut items = Vec::new();
        while self.peek() != &Tok::RBrace {
            let at = self.here();
            match self.ident()?.as_str() {
                "type" => {
                    let name_at = self.here();
                    let name = self.name()?;
                    let key_at = self.here();
                    let key = self.key()?;
                    self.expect(Tok::Colon)?;
                    let ty = self.base_type()?;
                    self.expect(Tok::Semi)?;
                    names.claim(&name, name_at)?;
                    keys.claim(key.as_str(), key_at)?;
                    items.push(RefItem::Type { name, key, ty });
                }
                "fun" => {
                    let name_at = self.here();
                    let name = self.name()?;
                    let key_at = self.here();
                    let key = self.key()?;
                    self.expect(Tok::Colon)?;
                    let (param, result) = self.boundary_arrow()?;
                    self.expect(Tok::Semi)?;
                    names.claim(&name, name_at)?;
                    keys.claim(key.as_str(), key_at)?;
                    items.push(RefItem::Value { name, key, param, result });
                }
                other => return Err(at.err(ParseErrorKind::Syntax, format!("expected type or fun, found {other}"))),
            }
        }
        self.expect(Tok::RBrace)?;
        Ok(Reference { producer, items })
    }

    fn definition(&mut self, keys: &mut Claims, names: &mut Claims) -> Result<Definition, ParseError> {
        let at = self.here();
        match self.ident()?.as_str() {
            "type" => {
                let name_at = self.here();
                let name = self.name()?;
                let key_at = self.here();
                let key = self.key()?;
                self.expect(Tok::Eq)?;
                let body = self.base_type()?;
                self.expect(Tok::Semi)?;
                names.claim(&name, name_at)?;
                keys.claim(key.as_str(), key_at)?;
                Ok(Definition::Type { key, name, body })
            }
            "fun" => {
                let name_at = self.here();
                let name = self.name()?;
                let key_at = self.here();
                let key = self.key()?;
                self.expect(Tok::Colon)?;
                let (param, result) = self.boundary_arrow()?;
                self.expect(Tok::Eq)?;
                let body = self.expr()?;
                self.expect(Tok::Semi)?;
                names.claim(&name, name_at)?;
                keys.claim(key.as_str(), key_at)?;
                Ok(Definition::Value { key, name, param, result, body })
            }
            other => Err(at.err(ParseErrorKind::Syntax, format!("expected type or fun, found {other}"))),
        }
    }

    fn ready_proxy(&mut self, max_label: &mut u64) -> Result<Proxy, ParseError> {
        let producer = self.name()?;
        self.expect(Tok::At)?;
        let label = self.label(max_label)?;
        self.expect(Tok::LBrace)?;
        let mut entries = Vec::new();
        while self.peek() != &Tok::RBrace {
            self.keyword("fun")?;
            let local = self.name()?;
            self.expect(Tok::FatArrow)?;
            let remote = self.name()?;
            self.expect(Tok::Colon)?;
            let (param, result) = self.boundary_arrow()?;
            self.expect(Tok::Semi)?;
            entries.push(ValueProxy { local, remote, param, result });
        }
        self.expect(Tok::RBrace)?;
        Ok(Proxy::Ready { producer, entries, label })
    }

    fn outdated_proxy(&mut self, max_label: &mut u64) -> Result<Proxy, ParseError> {
        let producer = self.name()?;
        self.expect(Tok::At)?;
        let label = self.label(max_label)?;
        self.expect(Tok::LBrace)?;
        let mut signature = Signature::new();
        while self.peek() != &Tok::RBrace {
            let key = Key::new(self.ident()?);
            let name = self.name()?;
            self.expect(Tok::Colon)?;
            let ty = self.ty()?;
            self.expect(Tok::Semi)?;
            signature.insert(key, SigEntry { module: producer.clone(), name, ty });
        }
        self.expect(Tok::RBrace)?;
        Ok(Proxy::Outdated { producer, signature, label })
    }

    // -- types -------------------------------------------------------------

    fn boundary_arrow(&mut self) -> Result<(BaseType, BaseType), ParseError> {
        let at = self.here();
        let t = self.ty()?;
        match t {
            Type::Arrow(p, r) => match (*p, *r) {
                (Type::Base(p), Type::Base(r)) => Ok((p, r)),
                _ => {
                    Err(at
                        .err(ParseErrorKind::ArrowAtBoundary, "boundary functions map base types to base types".into()))
                }
            },
            Type::Base(_) => Err(at.err(ParseErrorKind::Syntax, "expected a function type".into())),
        }
    }

    fn base_type(&mut self) -> Result<BaseType, ParseError> {
        let at = self.here();
        match self.ty()? {
            Type::Base(b) => Ok(b),
            Type::Arrow(..) => Err(at.err(ParseErrorKind::ArrowAtBoundary, "expected a base type".into())),
        }
    }

    fn ty(&mut self) -> Result<Type, ParseError> {
        let lhs = self.ty_atom()?;
        if self.eat(&Tok::Arrow) {
            let rhs = self.ty()?;
            return Ok(Type::arrow(lhs, rhs));
        }
        Ok(lhs)
    }

    fn ty_atom(&mut self) -> Result<Type, ParseError> {
        match self.peek().clone() {
            Tok::LParen => {
                self.bump();
                let t = self.ty()?;
                self.expect(Tok::RParen)?;
                Ok(t)
            }
            Tok::LBrace => {
                self.bump();
                let mut fields = Vec::new();
                let mut keys = Claims::keys();
                let mut labels = Claims::names();
                while self.peek() != &Tok::RBrace {
                    let label_at = self.here();
                    let label = self.name()?;
                    let key_at = self.here();
                    let key = self.key()?;
                    self.expect(Tok::Colon)?;
                    let ty = self.base_type()?;
                    labels.claim(&label, label_at)?;
                    keys.claim(key.as_str(), key_at)?;
                    fields.push(Field { label, key, ty });
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
                self.expect(Tok::RBrace)?;
                Ok(Type::Base(BaseType::Record(fields)))
            }
            Tok::Ident(s) if s == "int" => {
                self.bump();
                Ok(Type::int())
            }
            Tok::Ident(s) if s == "string" => {
                self.bump();
                Ok(Type::string())
            }
            Tok::Ident(_) => {
                let name = self.name()?;
                let key = self.key()?;
                Ok(Type::Base(BaseType::Named { name, key }))
            }
            other => self.syntax(format!("expected a type, found {}", describe(&other))),
        }
    }

    // -- expressions -------------------------------------------------------

    fn expr(&mut self) -> Result<Expr, ParseError> {
        if self.eat(&Tok::Backslash) {
            let param = self.name()?;
            self.expect(Tok::Colon)?;
            let ty = self.ty()?;
            self.expect(Tok::Dot)?;
            self.scope.push(param.clone());
            let body = self.expr();
            self.scope.pop();
            return Ok(Expr::lambda(param, ty, body?));
        }
        let mut lhs = self.postfix()?;
        while self.eat(&Tok::Plus) {
            let rhs = if self.peek() == &Tok::Backslash { self.expr()? } else { self.postfix()? };
            lhs = Expr::plus(lhs, rhs);
        }
        Ok(lhs)
    }

    fn postfix(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.atom()?;
        loop {
            match self.peek() {
                Tok::LParen => {
                    self.bump();
                    let arg = self.expr()?;
                    self.expect(Tok::RParen)?;
                    e = Expr::apply(e, arg);
                }
                Tok::Dot => {
                    self.bump();
                    let label = self.name()?;
                    e = Expr::select(e, label);
                }
                Tok::LBrace => {
                    let at = self.here();
                    let (fields, unknown) = self.field_inits()?;
                    if !unknown.is_empty() {
                        return Err(at.err(ParseErrorKind::Syntax, "updates name fields by label".into()));
                    }
                    e = Expr::update(e, fields);
                }
                _ => return Ok(e),
            }
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let at = self.here();
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                i64::try_from(n)
                    .map(Expr::Int)
                    .map_err(|_| at.err(ParseErrorKind::Syntax, format!("integer literal {n} out of range")))
            }
            Tok::Minus => {
                self.bump();
                match self.bump() {
                    Tok::Int(n) if n <= i64::MAX as u64 + 1 => Ok(Expr::Int((-(n as i128)) as i64)),
                    _ => Err(at.err(ParseErrorKind::Syntax, "expected an integer after '-'".into())),
                }
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Expr::Str(s))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::LBrace => {
                let (fields, unknown) = self.field_inits()?;
                Ok(Expr::Record { fields, unknown })
            }
            Tok::Ident(_) => {
                let name = self.name()?;
                if self.scope.iter().any(|v| v == &name) {
                    Ok(Expr::Var(name))
                } else {
                    Ok(Expr::Fun(name))
                }
            }
            other => self.syntax(format!("expected an expression, found {}", describe(&other))),
        }
    }

    /// `{ label@key = e, ..., #key = e, ... }`; `#` members are fields the
    /// holder carries without knowing them.
    fn field_inits(&mut self) -> Result<(Vec<FieldInit>, Unknown), ParseError> {
        self.expect(Tok::LBrace)?;
        let mut fields = Vec::new();
        let mut unknown = Vec::new();
        let mut keys = Claims::keys();
        let mut labels = Claims::names();
        while self.peek() != &Tok::RBrace {
            if self.eat(&Tok::Hash) {
                let key_at = self.here();
                let key = Key::new(self.ident()?);
                self.expect(Tok::Eq)?;
                let value = self.expr()?;
                keys.claim(key.as_str(), key_at)?;
                unknown.push((key, value));
                if !self.eat(&Tok::Comma) {
                    break;
                }
                continue;
            }
            let label_at = self.here();
            let label = self.name()?;
            let key_at = self.here();
            let key = self.key()?;
            self.expect(Tok::Eq)?;
            let value = self.expr()?;
            labels.claim(&label, label_at)?;
            keys.claim(key.as_str(), key_at)?;
            fields.push(FieldInit { label, key, value });
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(Tok::RBrace)?;
        Ok((fields, unknown))
    }
}

/// Tracks claimed keys or names and reports the second claimant.
struct Claims {
    kind: ParseErrorKind,
    seen: BTreeSet<String>,
}

impl Claims {
    fn keys() -> Self {
        Claims { kind: ParseErrorKind::DuplicateKey, seen: BTreeSet::new() }
    }

    fn names() -> Self {
        Claims { kind: ParseErrorKind::DuplicateName, seen: BTreeSet::new() }
    }

    fn claim(&mut self, item: &str, at: Pos) -> Result<(), ParseError> {
        if item == PLACEHOLDER_KEY || self.seen.insert(item.to_string()) {
            return Ok(());
        }
        Err(at.err(self.kind, format!("{item} declared twice")))
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("'{s}'"),
        Tok::Int(n) => n.to_string(),
        Tok::Str(s) => format!("{s:?}"),
        Tok::LBrace => "'{'".into(),
        Tok::RBrace => "'}'".into(),
        Tok::LParen => "'('".into(),
        Tok::RParen => "')'".into(),
        Tok::Semi => "';'".into(),
        Tok::Colon => "':'".into(),
        Tok::Comma => "','".into(),
        Tok::Dot => "'.'".into(),
        Tok::Eq => "'='".into(),
        Tok::Arrow => "'->'".into(),
        Tok::FatArrow => "'=>'".into(),
        Tok::Backslash => "'\\'".into(),
        Tok::Plus => "'+'".into(),
        Tok::Minus => "'-'".into(),
        Tok::At => "'@'".into(),
        Tok::Question => "'?'".into(),
        Tok::Hash => "'#'".into(),
        Tok::Eof => "end of input".into(),
    }
}
