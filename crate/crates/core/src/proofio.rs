//! Reading and writing the `.cpf` text format (see `FORMAT.md`).

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::calculus::{Rule, RuleId, RuleSet};
use crate::proofgraph::{NodeId, NodeKind, PreProof};
use crate::syntax::{DefinitionSet, Formula, Name, Production, Sequent, Signature, Substitution, Term};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{line}:{col}: syntax error, expected {expected}")]
    Syntax { line: usize, col: usize, expected: String },
    #[error("{line}:{col}: arity error for {symbol}: {detail}")]
    Arity { line: usize, col: usize, symbol: String, detail: String },
    #[error("{line}:{col}: unresolved reference to {name}")]
    UnresolvedReference { line: usize, col: usize, name: String },
}

impl ParseError {
    pub fn position(&self) -> (usize, usize) {
        match self {
            ParseError::Syntax { line, col, .. }
            | ParseError::Arity { line, col, .. }
            | ParseError::UnresolvedReference { line, col, .. } => (*line, *col),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pos {
    line: usize,
    col: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Str(String, Pos),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: Pos,
}

const SYMBOLS: [&str; 17] = [":=", "|-", "->", "\\/", "/\\", "<-", "(", ")", "[", "]", ",", ";", ".", "=", "~", "/", ":"];

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    is_ident_start(c) || c == '\''
}

fn syntax(pos: Pos, expected: impl Into<String>) -> ParseError {
    ParseError::Syntax { line: pos.line, col: pos.col, expected: expected.into() }
}

fn lex(src: &str, start: Pos, allow_strings: bool) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut line, mut col) = (start.line, start.col);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            col += 1;
            i += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
                col += 1;
            }
            continue;
        }
        if is_ident_start(c) {
            let s = i;
            while i < chars.len() && is_ident_char(chars[i]) {
                i += 1;
            }
            col += i - s;
            out.push(Token { tok: Tok::Ident(chars[s..i].iter().collect()), pos });
            continue;
        }
        if c == '"' && allow_strings {
            let s = i + 1;
            let mut j = s;
            while j < chars.len() && chars[j] != '"' && chars[j] != '\n' {
                j += 1;
            }
            if j == chars.len() || chars[j] == '\n' {
                return Err(syntax(pos, "closing '\"'"));
            }
            let body: String = chars[s..j].iter().collect();
            out.push(Token { tok: Tok::Str(body, Pos { line, col: col + 1 }), pos });
            col += j + 1 - i;
            i = j + 1;
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(sym) => {
                let n = sym.chars().count();
                out.push(Token { tok: Tok::Sym(sym), pos });
                i += n;
                col += n;
            }
            None => return Err(syntax(pos, format!("a token, found {c:?}"))),
        }
    }
    out.push(Token { tok: Tok::Eof, pos: Pos { line, col } });
    Ok(out)
}

struct Parser<'s> {
    toks: Vec<Token>,
    i: usize,
    sig: &'s Signature,
    scope: Vec<Name>,
}

impl<'s> Parser<'s> {
    fn new(toks: Vec<Token>, sig: &'s Signature) -> Self {
        Parser { toks, i: 0, sig, scope: Vec::new() }
    }

    fn peek(&self) -> &Token {
        &self.toks[self.i]
    }

    fn pos(&self) -> Pos {
        self.peek().pos
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.i].clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn at_sym(&self, s: &str) -> bool {
        matches!(&self.peek().tok, Tok::Sym(x) if *x == s)
    }

    fn at_ident(&self, s: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(x) if x == s)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.at_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), ParseError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(syntax(self.pos(), format!("'{s}'")))
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<(String, Pos), ParseError> {
        let pos = self.pos();
        match &self.peek().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                self.bump();
                Ok((s, pos))
            }
            _ => Err(syntax(pos, what)),
        }
    }

    fn expect_eof(&mut self) -> Result<(), ParseError> {
        match self.peek().tok {
            Tok::Eof => Ok(()),
            _ => Err(syntax(self.pos(), "end of input")),
        }
    }

    fn expect_number(&mut self, what: &str) -> Result<usize, ParseError> {
        let (s, pos) = self.expect_ident(what)?;
        s.parse().map_err(|_| syntax(pos, what))
    }

    fn args(&mut self) -> Result<Vec<Term>, ParseError> {
        let mut args = Vec::new();
        if self.eat_sym("(") {
            loop {
                args.push(self.term()?);
                if self.eat_sym(")") {
                    break;
                }
                self.expect_sym(",")?;
            }
        }
        Ok(args)
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        let (name, pos) = self.expect_ident("a term")?;
        if is_keyword(&name) {
            return Err(syntax(pos, "a term"));
        }
        let applied = self.at_sym("(");
        if !applied && self.scope.iter().any(|s| s.as_str() == name) {
            return Ok(Term::Var(Name::from(name)));
        }
        let args = self.args()?;
        match self.sig.function_arity(&name) {
            Some(n) if n == args.len() => Ok(Term::App(Name::from(name), args)),
            Some(n) => Err(ParseError::Arity {
                line: pos.line,
                col: pos.col,
                symbol: name,
                detail: format!("declared with arity {n}, applied to {}", args.len()),
            }),
            None if applied => Err(ParseError::Arity {
                line: pos.line,
                col: pos.col,
                symbol: name,
                detail: "undeclared function symbol applied to arguments".into(),
            }),
            None => Ok(Term::Var(Name::from(name))),
        }
    }

    fn formula(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.disjunction()?;
        if self.eat_sym("->") {
            let rhs = self.formula()?;
            return Ok(Formula::imp(lhs, rhs));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> Result<Formula, ParseError> {
        let mut f = self.conjunction()?;
        while self.eat_sym("\\/") {
            f = Formula::or(f, self.conjunction()?);
        }
        Ok(f)
    }

    fn conjunction(&mut self) -> Result<Formula, ParseError> {
        let mut f = self.unary()?;
        while self.eat_sym("/\\") {
            f = Formula::and(f, self.unary()?);
        }
        Ok(f)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        if self.eat_sym("~") {
            return Ok(Formula::not(self.unary()?));
        }
        if self.at_ident("all") || self.at_ident("ex") {
            let forall = self.at_ident("all");
            self.bump();
            let (x, pos) = self.expect_ident("a bound variable")?;
            if is_keyword(&x) {
                return Err(syntax(pos, "a bound variable"));
            }
            self.expect_sym(".")?;
            let x = Name::from(x);
            self.scope.push(x.clone());
            let body = self.formula();
            self.scope.pop();
            let body = body?;
            return Ok(if forall { Formula::forall(&x, body) } else { Formula::exists(&x, body) });
        }
        if self.eat_sym("(") {
            let f = self.formula()?;
            self.expect_sym(")")?;
            return Ok(f);
        }
        let pos = self.pos();
        if let Tok::Ident(name) = &self.peek().tok {
            if let Some(decl) = self.sig.predicate(name) {
                let name = name.clone();
                self.bump();
                let args = self.args()?;
                if args.len() != decl.arity {
                    return Err(ParseError::Arity {
                        line: pos.line,
                        col: pos.col,
                        symbol: name,
                        detail: format!("declared with arity {}, applied to {}", decl.arity, args.len()),
                    });
                }
                return Ok(if decl.inductive { Formula::ind(&name, args) } else { Formula::ord(&name, args) });
            }
        } else {
            return Err(syntax(pos, "a formula"));
        }
        let t = self.term()?;
        self.expect_sym("=")?;
        let u = self.term()?;
        Ok(Formula::eq(t, u))
    }

    fn formula_list(&mut self, stop: &str) -> Result<Vec<Formula>, ParseError> {
        let mut out = Vec::new();
        if self.at_sym(stop) || matches!(self.peek().tok, Tok::Eof) {
            return Ok(out);
        }
        loop {
            out.push(self.formula()?);
            if !self.eat_sym(",") {
                return Ok(out);
            }
        }
    }

    fn sequent(&mut self) -> Result<Sequent, ParseError> {
        let ant = self.formula_list("|-")?;
        self.expect_sym("|-")?;
        let suc = self.formula_list(";")?;
        Ok(Sequent::new(ant, suc))
    }

    fn substitution(&mut self) -> Result<Substitution, ParseError> {
        self.expect_sym("[")?;
        let mut pairs = Vec::new();
        if !self.eat_sym("]") {
            loop {
                let (x, pos) = self.expect_ident("a variable")?;
                if self.sig.function_arity(&x).is_some() || is_keyword(&x) {
                    return Err(syntax(pos, "a variable"));
                }
                self.expect_sym(":=")?;
                pairs.push((Name::from(x), self.term()?));
                if self.eat_sym("]") {
                    break;
                }
                self.expect_sym(",")?;
            }
        }
        Ok(Substitution::from_pairs(pairs))
    }
}

fn is_keyword(s: &str) -> bool {
    matches!(s, "all" | "ex")
}

fn sub_parser<'s>(text: &str, at: Pos, sig: &'s Signature) -> Result<Parser<'s>, ParseError> {
    Ok(Parser::new(lex(text, at, false)?, sig))
}

fn whole<T>(
    text: &str,
    at: Pos,
    sig: &Signature,
    f: impl FnOnce(&mut Parser<'_>) -> Result<T, ParseError>,
) -> Result<T, ParseError> {
    let mut p = sub_parser(text, at, sig)?;
    let v = f(&mut p)?;
    p.expect_eof()?;
    Ok(v)
}

const ORIGIN: Pos = Pos { line: 1, col: 1 };

pub fn parse_term(src: &str, sig: &Signature) -> Result<Term, ParseError> {
    whole(src, ORIGIN, sig, |p| p.term())
}

pub fn parse_formula(src: &str, sig: &Signature) -> Result<Formula, ParseError> {
    whole(src, ORIGIN, sig, |p| p.formula())
}

pub fn parse_sequent(src: &str, sig: &Signature) -> Result<Sequent, ParseError> {
    whole(src, ORIGIN, sig, |p| p.sequent())
}

pub fn parse_substitution(src: &str, sig: &Signature) -> Result<Substitution, ParseError> {
    whole(src, ORIGIN, sig, |p| p.substitution())
}

/// Annotation value of a node statement, kept raw until the signature is known.
#[derive(Debug, Clone)]
enum Value {
    Str(String, Pos),
    Idents(Vec<(String, Pos)>),
    Groups(Vec<Vec<(String, Pos)>>),
    Subst(Vec<Token>),
}

#[derive(Debug)]
struct NodeStmt {
    id: (String, Pos),
    sequent: (String, Pos),
    body: NodeBody,
}

#[derive(Debug)]
enum NodeBody {
    Rule { name: (String, Pos), annotations: BTreeMap<String, (Value, Pos)>, from: Vec<(String, Pos)> },
    Bud((String, Pos)),
    Open,
}

#[derive(Debug)]
struct ProdStmt {
    head: Vec<Token>,
    body: Vec<Vec<Token>>,
    pos: Pos,
}

/// Splits the token stream of a production (up to `;`) into the head and the
/// comma-separated body atoms, respecting parentheses.
fn split_production(p: &mut Parser<'_>) -> Result<ProdStmt, ParseError> {
    let pos = p.pos();
    let mut head = Vec::new();
    let mut body = Vec::new();
    let mut cur = Vec::new();
    let mut depth = 0usize;
    let mut in_body = false;
    loop {
        let t = p.peek().clone();
        match &t.tok {
            Tok::Eof => return Err(syntax(t.pos, "';'")),
            Tok::Sym(";") if depth == 0 => {
                p.bump();
                break;
            }
            Tok::Sym("<-") if depth == 0 && !in_body => {
                p.bump();
                head = std::mem::take(&mut cur);
                in_body = true;
                continue;
            }
            Tok::Sym(",") if depth == 0 && in_body => {
                p.bump();
                body.push(std::mem::take(&mut cur));
                continue;
            }
            Tok::Sym("(") => depth += 1,
            Tok::Sym(")") => depth = depth.saturating_sub(1),
            Tok::Str(..) => return Err(syntax(t.pos, "a production")),
            _ => {}
        }
        cur.push(p.bump());
    }
    if in_body {
        if !cur.is_empty() || !body.is_empty() {
            body.push(cur);
        }
    } else {
        head = cur;
    }
    if head.is_empty() {
        return Err(syntax(pos, "a production head"));
    }
    Ok(ProdStmt { head, body, pos })
}

fn tokens_parser<'s>(mut toks: Vec<Token>, end: Pos, sig: &'s Signature) -> Parser<'s> {
    toks.push(Token { tok: Tok::Eof, pos: end });
    Parser::new(toks, sig)
}

fn parse_node_value(p: &mut Parser<'_>, key: &str) -> Result<Value, ParseError> {
    let pos = p.pos();
    match key {
        "target" | "term" | "formula" | "eq" | "tmpl" => match p.bump().tok {
            Tok::Str(s, at) => Ok(Value::Str(s, at)),
            _ => Err(syntax(pos, "a quoted string")),
        },
        "prod" => Ok(Value::Idents(vec![p.expect_ident("a production index")?])),
        "vars" => Ok(Value::Idents(vec![p.expect_ident("a placeholder")?, p.expect_ident("a placeholder")?])),
        "fresh" => {
            if p.at_sym("[") {
                let mut groups = Vec::new();
                while p.eat_sym("[") {
                    let mut g = Vec::new();
                    while !p.eat_sym("]") {
                        g.push(p.expect_ident("a fresh variable or ']'")?);
                        p.eat_sym(",");
                    }
                    groups.push(g);
                }
                Ok(Value::Groups(groups))
            } else {
                Ok(Value::Idents(vec![p.expect_ident("a fresh variable")?]))
            }
        }
        "subst" => {
            let mut toks = Vec::new();
            if !p.at_sym("[") {
                return Err(syntax(pos, "'['"));
            }
            loop {
                let t = p.bump();
                let done = matches!(t.tok, Tok::Sym("]"));
                if matches!(t.tok, Tok::Eof | Tok::Sym(";")) {
                    return Err(syntax(t.pos, "']'"));
                }
                toks.push(t);
                if done {
                    break;
                }
            }
            Ok(Value::Subst(toks))
        }
        _ => Err(syntax(pos, "an annotation key")),
    }
}

fn parse_node(p: &mut Parser<'_>) -> Result<NodeStmt, ParseError> {
    let id = p.expect_ident("a node id")?;
    let pos = p.pos();
    let sequent = match p.bump().tok {
        Tok::Str(s, at) => (s, at),
        _ => return Err(syntax(pos, "a quoted sequent")),
    };
    let body = if p.at_ident("bud") {
        p.bump();
        NodeBody::Bud(p.expect_ident("a companion id")?)
    } else if p.at_ident("open") {
        p.bump();
        NodeBody::Open
    } else if p.at_ident("rule") {
        p.bump();
        let name = p.expect_ident("a rule name")?;
        let mut annotations = BTreeMap::new();
        let mut from = Vec::new();
        loop {
            if p.at_sym(";") {
                break;
            }
            let (key, kpos) = p.expect_ident("an annotation, 'from' or ';'")?;
            if key == "from" {
                while let Tok::Ident(_) = p.peek().tok {
                    from.push(p.expect_ident("a premise id")?);
                }
                break;
            }
            let v = parse_node_value(p, &key).map_err(|e| match e {
                ParseError::Syntax { expected, .. } if expected == "an annotation key" => syntax(kpos, "an annotation key"),
                e => e,
            })?;
            if annotations.insert(key, (v, kpos)).is_some() {
                return Err(invalid(kpos, "each annotation at most once"));
            }
        }
        NodeBody::Rule { name, annotations, from }
    } else {
        return Err(syntax(p.pos(), "'rule', 'bud' or 'open'"));
    };
    p.expect_sym(";")?;
    Ok(NodeStmt { id, sequent, body })
}

fn invalid(pos: Pos, message: impl Into<String>) -> ParseError {
    ParseError::Syntax { line: pos.line, col: pos.col, expected: message.into() }
}

/// Parses a proof file given as raw bytes.
pub fn parse_proof_bytes(bytes: &[u8]) -> Result<PreProof, ParseError> {
    match std::str::from_utf8(bytes) {
        Ok(s) => parse_proof(s),
        Err(e) => {
            let good = &bytes[..e.valid_up_to()];
            let valid = std::str::from_utf8(good).expect("valid prefix");
            let line = 1 + valid.matches('\n').count();
            let col = 1 + valid.rsplit('\n').next().map_or(0, |l| l.chars().count());
            Err(ParseError::Syntax { line, col, expected: "valid UTF-8".into() })
        }
    }
}

/// Parses a proof file.
pub fn parse_proof(src: &str) -> Result<PreProof, ParseError> {
    let toks = lex(src, ORIGIN, true)?;
    let empty = Signature::new();
    let mut p = Parser::new(toks, &empty);
    let mut rules: Option<RuleSet> = None;
    let mut sig = Signature::new();
    let mut prods: Vec<ProdStmt> = Vec::new();
    let mut nodes: Vec<NodeStmt> = Vec::new();
    let mut buds: Vec<((String, Pos), (String, Pos))> = Vec::new();
    loop {
        let pos = p.pos();
        let kw = match &p.peek().tok {
            Tok::Eof => break,
            Tok::Ident(s) => s.clone(),
            _ => return Err(syntax(pos, "a statement")),
        };
        p.bump();
        match kw.as_str() {
            "rules" => {
                if rules.is_some() {
                    return Err(invalid(pos, "a single rules statement"));
                }
                let (first, fpos) = p.expect_ident("a rule set")?;
                let set = if let Some(set) = RuleSet::preset(&first) {
                    set
                } else {
                    let mut ids = Vec::new();
                    let mut cur = (first, fpos);
                    loop {
                        ids.push(RuleId::from_name(&cur.0).ok_or_else(|| syntax(cur.1, "a rule set or rule name"))?);
                        if !p.eat_sym(",") {
                            break;
                        }
                        cur = p.expect_ident("a rule name")?;
                    }
                    RuleSet::from_rules(ids)
                };
                p.expect_sym(";")?;
                rules = Some(set);
            }
            "sig" => {
                while !p.eat_sym(";") {
                    let (f, fpos) = p.expect_ident("a function symbol or ';'")?;
                    if is_keyword(&f) {
                        return Err(syntax(fpos, "a function symbol"));
                    }
                    p.expect_sym("/")?;
                    let n = p.expect_number("an arity")?;
                    if sig.function_arity(&f).is_some() || sig.predicate(&f).is_some() {
                        return Err(invalid(fpos, format!("a symbol other than the declared {f}")));
                    }
                    sig.add_function(&f, n);
                }
            }
            "pred" => {
                let (q, qpos) = p.expect_ident("a predicate symbol")?;
                if is_keyword(&q) {
                    return Err(syntax(qpos, "a predicate symbol"));
                }
                p.expect_sym("/")?;
                let n = p.expect_number("an arity")?;
                let inductive = if p.at_ident("ind") {
                    p.bump();
                    true
                } else {
                    false
                };
                p.expect_sym(";")?;
                if sig.function_arity(&q).is_some() || sig.predicate(&q).is_some() {
                    return Err(invalid(qpos, format!("a predicate other than the declared {q}")));
                }
                sig.add_predicate(&q, n, inductive);
            }
            "prod" => prods.push(split_production(&mut p)?),
            "node" => nodes.push(parse_node(&mut p)?),
            "bud" => {
                let b = p.expect_ident("a node name")?;
                p.expect_sym("->")?;
                let c = p.expect_ident("a node name")?;
                p.expect_sym(";")?;
                buds.push((b, c));
            }
            _ => return Err(syntax(pos, "'rules', 'sig', 'pred', 'prod', 'node' or 'bud'")),
        }
    }

    let mut defs = DefinitionSet::new(sig.clone());
    for ps in prods {
        let end = ps.head.last().map_or(ps.pos, |t| t.pos);
        let head = {
            let mut hp = tokens_parser(ps.head, end, &sig);
            let f = hp.formula()?;
            hp.expect_eof()?;
            f
        };
        let Formula::PredI(pred, args) = head else {
            return Err(invalid(ps.pos, "an inductive predicate atom as production head"));
        };
        let mut ordinary = Vec::new();
        let mut inductive = Vec::new();
        for atom in ps.body {
            let at = atom.first().map_or(ps.pos, |t| t.pos);
            let mut bp = tokens_parser(atom, at, &sig);
            let f = bp.formula()?;
            bp.expect_eof()?;
            match f {
                Formula::PredI(..) => inductive.push(f),
                Formula::PredO(..) => ordinary.push(f),
                _ => return Err(invalid(at, "predicate atoms as production premises")),
            }
        }
        defs.add(Production::new(pred.as_str(), args, ordinary, inductive));
    }

    let mut proof = PreProof::new(defs, rules.unwrap_or_else(RuleSet::full));
    let mut ids: HashMap<String, NodeId> = HashMap::new();
    for (i, n) in nodes.iter().enumerate() {
        if ids.insert(n.id.0.clone(), i).is_some() {
            return Err(invalid(n.id.1, format!("a node name other than {}", n.id.0)));
        }
    }
    let resolve = |r: &(String, Pos)| -> Result<NodeId, ParseError> {
        ids.get(&r.0).copied().ok_or_else(|| ParseError::UnresolvedReference {
            line: r.1.line,
            col: r.1.col,
            name: r.0.clone(),
        })
    };
    for n in &nodes {
        let sequent = whole(&n.sequent.0, n.sequent.1, &sig, |p| p.sequent())?;
        let kind = match &n.body {
            NodeBody::Open => NodeKind::Open,
            NodeBody::Bud(c) => NodeKind::Bud { companion: resolve(c)? },
            NodeBody::Rule { name, annotations, from } => {
                let rule = build_rule(name, annotations, &sig)?;
                let premises = from.iter().map(&resolve).collect::<Result<Vec<_>, _>>()?;
                NodeKind::Inference { rule, premises }
            }
        };
        proof.push(sequent, kind);
    }
    for (b, c) in &buds {
        let bud = resolve(b)?;
        if !matches!(proof.node(bud).kind, NodeKind::Open) {
            return Err(syntax(b.1, format!("an open node, {} already has a rule or companion", b.0)));
        }
        proof.node_mut(bud).kind = NodeKind::Bud { companion: resolve(c)? };
    }
    Ok(proof)
}

fn build_rule(
    name: &(String, Pos),
    ann: &BTreeMap<String, (Value, Pos)>,
    sig: &Signature,
) -> Result<Rule, ParseError> {
    let id = RuleId::from_name(&name.0).ok_or_else(|| syntax(name.1, "a rule name"))?;
    let missing = |key: &str| syntax(name.1, format!("annotation '{key}' for {}", name.0));
    let get = |key: &str| ann.get(key).ok_or_else(|| missing(key));
    let string = |key: &str| -> Result<(String, Pos), ParseError> {
        match get(key)? {
            (Value::Str(s, at), _) => Ok((s.clone(), *at)),
            (_, pos) => Err(syntax(*pos, "a quoted string")),
        }
    };
    let formula = |key: &str| -> Result<Formula, ParseError> {
        let (s, at) = string(key)?;
        whole(&s, at, sig, |p| p.formula())
    };
    let term = |key: &str| -> Result<Term, ParseError> {
        let (s, at) = string(key)?;
        whole(&s, at, sig, |p| p.term())
    };
    let variable = |(s, pos): &(String, Pos)| -> Result<Name, ParseError> {
        if sig.function_arity(s).is_some() || sig.predicate(s).is_some() || is_keyword(s) {
            return Err(syntax(*pos, "a variable"));
        }
        Ok(Name::from(s.as_str()))
    };
    let single_var = |key: &str| -> Result<Name, ParseError> {
        match get(key)? {
            (Value::Idents(v), _) if v.len() == 1 => variable(&v[0]),
            (_, pos) => Err(syntax(*pos, "a variable")),
        }
    };
    let allowed: &[&str] = match id {
        RuleId::Axiom | RuleId::Wk => &[],
        RuleId::Cut => &["formula"],
        RuleId::Subst => &["subst"],
        RuleId::AllL | RuleId::ExR => &["target", "term"],
        RuleId::AllR | RuleId::ExL => &["target", "fresh"],
        RuleId::EqL => &["eq", "vars", "tmpl"],
        RuleId::EqR => &["term"],
        RuleId::UL => &["target", "fresh"],
        RuleId::UR => &["target", "prod"],
        RuleId::FreshL => &["fresh", "term"],
        _ => &["target"],
    };
    if let Some((k, (_, pos))) = ann.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
        return Err(invalid(*pos, format!("annotations that apply to {}, not '{k}'", name.0)));
    }
    Ok(match id {
        RuleId::Axiom => Rule::Axiom,
        RuleId::Wk => Rule::Wk,
        RuleId::Cut => Rule::Cut { formula: formula("formula")? },
        RuleId::Subst => match get("subst")? {
            (Value::Subst(toks), pos) => {
                let mut sp = tokens_parser(toks.clone(), *pos, sig);
                let s = sp.substitution()?;
                sp.expect_eof()?;
                Rule::Subst { subst: s }
            }
            (_, pos) => return Err(syntax(*pos, "a substitution")),
        },
        RuleId::NotL => Rule::NotL { target: formula("target")? },
        RuleId::NotR => Rule::NotR { target: formula("target")? },
        RuleId::OrL => Rule::OrL { target: formula("target")? },
        RuleId::OrR => Rule::OrR { target: formula("target")? },
        RuleId::AndL => Rule::AndL { target: formula("target")? },
        RuleId::AndR => Rule::AndR { target: formula("target")? },
        RuleId::ImpL => Rule::ImpL { target: formula("target")? },
        RuleId::ImpR => Rule::ImpR { target: formula("target")? },
        RuleId::ULPrime => Rule::ULPrime { target: formula("target")? },
        RuleId::AllL => Rule::AllL { target: formula("target")?, witness: term("term")? },
        RuleId::ExR => Rule::ExR { target: formula("target")?, witness: term("term")? },
        RuleId::AllR => Rule::AllR { target: formula("target")?, eigen: single_var("fresh")? },
        RuleId::ExL => Rule::ExL { target: formula("target")?, eigen: single_var("fresh")? },
        RuleId::EqR => Rule::EqR { term: term("term")? },
        RuleId::FreshL => Rule::FreshL { var: single_var("fresh")?, term: term("term")? },
        RuleId::EqL => {
            let eq = formula("eq")?;
            let Formula::Eq(lhs, rhs) = eq else {
                let (_, at) = string("eq")?;
                return Err(syntax(at, "an equation"));
            };
            let (a, b) = match get("vars")? {
                (Value::Idents(v), _) if v.len() == 2 => (variable(&v[0])?, variable(&v[1])?),
                (_, pos) => return Err(syntax(*pos, "two placeholders")),
            };
            let (s, at) = string("tmpl")?;
            let template = whole(&s, at, sig, |p| p.sequent())?;
            Rule::EqL { lhs, rhs, placeholders: (a, b), template }
        }
        RuleId::UL => {
            let fresh = match get("fresh")? {
                (Value::Groups(gs), _) => {
                    gs.iter().map(|g| g.iter().map(&variable).collect::<Result<Vec<_>, _>>()).collect::<Result<_, _>>()?
                }
                (_, pos) => return Err(syntax(*pos, "bracketed fresh-variable groups")),
            };
            Rule::UL { target: formula("target")?, fresh }
        }
        RuleId::UR => {
            let production = match get("prod")? {
                (Value::Idents(v), _) => v[0].0.parse().map_err(|_| syntax(v[0].1, "a production index"))?,
                (_, pos) => return Err(syntax(*pos, "a production index")),
            };
            Rule::UR { target: formula("target")?, production }
        }
    })
}

fn preset_name(rules: &RuleSet) -> Option<&'static str> {
    ["full", "cutfree", "freshl", "section4"].into_iter().find(|n| RuleSet::preset(n).as_ref() == Some(rules))
}

fn quoted(x: impl std::fmt::Display) -> String {
    format!("\"{x}\"")
}

fn rule_annotations(rule: &Rule) -> String {
    let groups = |gs: &[Vec<Name>]| {
        gs.iter()
            .map(|g| format!("[{}]", g.iter().map(|n| n.as_str()).collect::<Vec<_>>().join(", ")))
            .collect::<Vec<_>>()
            .join(" ")
    };
    match rule {
        Rule::Axiom | Rule::Wk => String::new(),
        Rule::Cut { formula } => format!(" formula {}", quoted(formula)),
        Rule::Subst { subst } => format!(" subst {subst}"),
        Rule::NotL { target }
        | Rule::NotR { target }
        | Rule::OrL { target }
        | Rule::OrR { target }
        | Rule::AndL { target }
        | Rule::AndR { target }
        | Rule::ImpL { target }
        | Rule::ImpR { target }
        | Rule::ULPrime { target } => format!(" target {}", quoted(target)),
        Rule::AllL { target, witness } | Rule::ExR { target, witness } => {
            format!(" target {} term {}", quoted(target), quoted(witness))
        }
        Rule::AllR { target, eigen } | Rule::ExL { target, eigen } => format!(" target {} fresh {eigen}", quoted(target)),
        Rule::EqL { lhs, rhs, placeholders: (a, b), template } => {
            format!(" eq {} vars {a} {b} tmpl {}", quoted(Formula::Eq(lhs.clone(), rhs.clone())), quoted(template))
        }
        Rule::EqR { term } => format!(" term {}", quoted(term)),
        Rule::UL { target, fresh } => format!(" target {} fresh {}", quoted(target), groups(fresh)),
        Rule::UR { target, production } => format!(" target {} prod {production}", quoted(target)),
        Rule::FreshL { var, term } => format!(" fresh {var} term {}", quoted(term)),
    }
}

/// Renders a proof in the text format. Node ids are `n0`, `n1`, … in node
/// order, so the root comes first.
pub fn print_proof(proof: &PreProof) -> String {
    let mut out = String::new();
    let defs = &proof.defs;
    let sig = defs.signature();
    match preset_name(&proof.rules) {
        Some(n) => writeln!(out, "rules {n};").unwrap(),
        None => {
            let names: Vec<&str> = proof.rules.iter().map(|r| r.name()).collect();
            writeln!(out, "rules {};", names.join(", ")).unwrap();
        }
    }
    let funs: Vec<String> = sig.functions().map(|(f, n)| format!("{f}/{n}")).collect();
    if !funs.is_empty() {
        writeln!(out, "sig {};", funs.join(" ")).unwrap();
    }
    for (q, d) in sig.predicates() {
        writeln!(out, "pred {q}/{}{};", d.arity, if d.inductive { " ind" } else { "" }).unwrap();
    }
    for prod in defs.productions() {
        let body: Vec<String> = prod.body().map(|b| b.to_string()).collect();
        if body.is_empty() {
            writeln!(out, "prod {};", prod.head()).unwrap();
        } else {
            writeln!(out, "prod {} <- {};", prod.head(), body.join(", ")).unwrap();
        }
    }
    for (i, node) in proof.nodes().iter().enumerate() {
        write!(out, "node n{i} {}", quoted(&node.sequent)).unwrap();
        match &node.kind {
            NodeKind::Open => out.push_str(" open"),
            NodeKind::Bud { companion } => write!(out, " bud n{companion}").unwrap(),
            NodeKind::Inference { rule, premises } => {
                write!(out, " rule {}{}", rule.id(), rule_annotations(rule)).unwrap();
                if !premises.is_empty() {
                    let ps: Vec<String> = premises.iter().map(|p| format!("n{p}")).collect();
                    write!(out, " from {}", ps.join(" ")).unwrap();
                }
            }
        }
        out.push_str(";\n");
    }
    out
}
