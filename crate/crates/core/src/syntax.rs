//! First-order syntax with inductive predicates: terms, formulas, sequents,
//! substitutions and inductive definition sets.
//!
//! Binders are locally nameless. A bound occurrence is a de Bruijn index and a
//! quantifier only keeps a display hint, so the derived `Eq`, `Ord` and `Hash`
//! on [`Formula`] are α-equivalence, and applying a [`Substitution`] can never
//! capture a variable.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// An identifier: variable, function symbol or predicate symbol.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Name(Arc<str>);

impl Name {
    pub fn new(s: &str) -> Self {
        Name(Arc::from(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for Name {
    fn from(s: &str) -> Self {
        Name::new(s)
    }
}

impl From<String> for Name {
    fn from(s: String) -> Self {
        Name(Arc::from(s))
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Var(Name),
    /// De Bruijn index pointing at an enclosing quantifier. Never appears in a
    /// term that is used on its own (substitution images, witnesses, rule
    /// annotations).
    Bound(usize),
    /// Function application; constants are nullary applications.
    App(Name, Vec<Term>),
}

impl Term {
    pub fn var(name: &str) -> Term {
        Term::Var(Name::new(name))
    }

    pub fn constant(name: &str) -> Term {
        Term::App(Name::new(name), Vec::new())
    }

    pub fn app(name: &str, args: Vec<Term>) -> Term {
        Term::App(Name::new(name), args)
    }

    pub fn as_var(&self) -> Option<&Name> {
        match self {
            Term::Var(x) => Some(x),
            _ => None,
        }
    }

    /// A variable or a constant.
    pub fn is_atomic(&self) -> bool {
        match self {
            Term::Var(_) => true,
            Term::App(_, args) => args.is_empty(),
            Term::Bound(_) => false,
        }
    }

    pub fn is_locally_closed(&self) -> bool {
        match self {
            Term::Var(_) => true,
            Term::Bound(_) => false,
            Term::App(_, args) => args.iter().all(Term::is_locally_closed),
        }
    }

    pub fn free_vars(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    pub(crate) fn collect_vars(&self, out: &mut BTreeSet<Name>) {
        match self {
            Term::Var(x) => {
                out.insert(x.clone());
            }
            Term::Bound(_) => {}
            Term::App(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
        }
    }

    pub(crate) fn collect_symbols(&self, out: &mut BTreeSet<Name>) {
        if let Term::App(f, args) = self {
            out.insert(f.clone());
            args.iter().for_each(|a| a.collect_symbols(out));
        }
    }

    pub fn apply(&self, theta: &Substitution) -> Term {
        match self {
            Term::Var(x) => theta.get(x).cloned().unwrap_or_else(|| self.clone()),
            Term::Bound(_) => self.clone(),
            Term::App(f, args) => Term::App(f.clone(), args.iter().map(|a| a.apply(theta)).collect()),
        }
    }

    fn instantiate(&self, depth: usize, with: &Term) -> Term {
        match self {
            Term::Bound(i) if *i == depth => with.clone(),
            Term::Var(_) | Term::Bound(_) => self.clone(),
            Term::App(f, args) => {
                Term::App(f.clone(), args.iter().map(|a| a.instantiate(depth, with)).collect())
            }
        }
    }

    fn abstract_var(&self, depth: usize, x: &Name) -> Term {
        match self {
            Term::Var(y) if y == x => Term::Bound(depth),
            Term::Var(_) | Term::Bound(_) => self.clone(),
            Term::App(f, args) => {
                Term::App(f.clone(), args.iter().map(|a| a.abstract_var(depth, x)).collect())
            }
        }
    }

    fn mentions_bound_outside(&self, depth: usize) -> bool {
        match self {
            Term::Bound(i) => *i >= depth,
            Term::Var(_) => false,
            Term::App(_, args) => args.iter().any(|a| a.mentions_bound_outside(depth)),
        }
    }

    /// One-way syntactic matching of a pattern (whose variables are the keys
    /// to bind) against a ground-ish term.
    pub(crate) fn match_into(&self, target: &Term, binding: &mut BTreeMap<Name, Term>) -> bool {
        match (self, target) {
            (Term::Var(x), _) => match binding.get(x) {
                Some(bound) => bound == target,
                None => {
                    binding.insert(x.clone(), target.clone());
                    true
                }
            },
            (Term::App(f, ps), Term::App(g, ts)) if f == g && ps.len() == ts.len() => {
                ps.iter().zip(ts).all(|(p, t)| p.match_into(t, binding))
            }
            _ => false,
        }
    }

    fn fmt_with(&self, f: &mut fmt::Formatter<'_>, scope: &[Name]) -> fmt::Result {
        match self {
            Term::Var(x) => write!(f, "{x}"),
            Term::Bound(i) => match scope.len().checked_sub(i + 1).and_then(|k| scope.get(k)) {
                Some(n) => write!(f, "{n}"),
                None => write!(f, "#{i}"),
            },
            Term::App(g, args) if args.is_empty() => write!(f, "{g}"),
            Term::App(g, args) => {
                write!(f, "{g}(")?;
                for (k, a) in args.iter().enumerate() {
                    if k > 0 {
                        f.write_str(",")?;
                    }
                    a.fmt_with(f, scope)?;
                }
                f.write_str(")")
            }
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_with(f, &[])
    }
}

/// Display name of a quantifier. Ignored by comparison and hashing.
#[derive(Clone, Debug)]
pub struct Hint(pub Name);

impl PartialEq for Hint {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}
impl Eq for Hint {}
impl PartialOrd for Hint {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Hint {
    fn cmp(&self, _: &Self) -> std::cmp::Ordering {
        std::cmp::Ordering::Equal
    }
}
impl std::hash::Hash for Hint {
    fn hash<H: std::hash::Hasher>(&self, _: &mut H) {}
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Formula {
    /// Inductive predicate atom.
    PredI(Name, Vec<Term>),
    /// Ordinary predicate atom.
    PredO(Name, Vec<Term>),
    Eq(Term, Term),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Imp(Box<Formula>, Box<Formula>),
    Forall(Hint, Box<Formula>),
    Exists(Hint, Box<Formula>),
}

impl Formula {
    pub fn ind(p: &str, args: Vec<Term>) -> Formula {
        Formula::PredI(Name::new(p), args)
    }

    pub fn ord(q: &str, args: Vec<Term>) -> Formula {
        Formula::PredO(Name::new(q), args)
    }

    pub fn eq(t: Term, u: Term) -> Formula {
        Formula::Eq(t, u)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(a: Formula) -> Formula {
        Formula::Not(Box::new(a))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn imp(a: Formula, b: Formula) -> Formula {
        Formula::Imp(Box::new(a), Box::new(b))
    }

    /// `∀x.body`, binding the free occurrences of `x` in `body`.
    pub fn forall(x: &Name, body: Formula) -> Formula {
        Formula::Forall(Hint(x.clone()), Box::new(body.abstract_var(0, x)))
    }

    pub fn exists(x: &Name, body: Formula) -> Formula {
        Formula::Exists(Hint(x.clone()), Box::new(body.abstract_var(0, x)))
    }

    pub fn is_inductive_atom(&self) -> bool {
        matches!(self, Formula::PredI(..))
    }

    /// For a quantified formula `Qx.φ`, returns `φ[t/x]`.
    pub fn instantiate_binder(&self, t: &Term) -> Option<Formula> {
        match self {
            Formula::Forall(_, body) | Formula::Exists(_, body) => Some(body.instantiate(0, t)),
            _ => None,
        }
    }

    pub fn free_vars(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    pub(crate) fn collect_vars(&self, out: &mut BTreeSet<Name>) {
        match self {
            Formula::PredI(_, args) | Formula::PredO(_, args) => {
                args.iter().for_each(|a| a.collect_vars(out))
            }
            Formula::Eq(t, u) => {
                t.collect_vars(out);
                u.collect_vars(out);
            }
            Formula::Not(a) | Formula::Forall(_, a) | Formula::Exists(_, a) => a.collect_vars(out),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Imp(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Function symbols and binder hints, i.e. every name that is not a free
    /// variable but could clash with a generated one when printed.
    pub(crate) fn collect_names(&self, out: &mut BTreeSet<Name>) {
        self.map_terms_ref(&mut |t| {
            t.collect_vars(out);
            t.collect_symbols(out);
        });
        self.collect_hints(out);
    }

    fn collect_hints(&self, out: &mut BTreeSet<Name>) {
        match self {
            Formula::Forall(h, a) | Formula::Exists(h, a) => {
                out.insert(h.0.clone());
                a.collect_hints(out);
            }
            Formula::Not(a) => a.collect_hints(out),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Imp(a, b) => {
                a.collect_hints(out);
                b.collect_hints(out);
            }
            _ => {}
        }
    }

    fn map_terms_ref(&self, f: &mut dyn FnMut(&Term)) {
        match self {
            Formula::PredI(_, args) | Formula::PredO(_, args) => args.iter().for_each(&mut *f),
            Formula::Eq(t, u) => {
                f(t);
                f(u);
            }
            Formula::Not(a) | Formula::Forall(_, a) | Formula::Exists(_, a) => a.map_terms_ref(f),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Imp(a, b) => {
                a.map_terms_ref(f);
                b.map_terms_ref(f);
            }
        }
    }

    fn map_terms(&self, depth: usize, f: &dyn Fn(&Term, usize) -> Term) -> Formula {
        match self {
            Formula::PredI(p, args) => Formula::PredI(p.clone(), args.iter().map(|a| f(a, depth)).collect()),
            Formula::PredO(q, args) => Formula::PredO(q.clone(), args.iter().map(|a| f(a, depth)).collect()),
            Formula::Eq(t, u) => Formula::Eq(f(t, depth), f(u, depth)),
            Formula::Not(a) => Formula::not(a.map_terms(depth, f)),
            Formula::And(a, b) => Formula::and(a.map_terms(depth, f), b.map_terms(depth, f)),
            Formula::Or(a, b) => Formula::or(a.map_terms(depth, f), b.map_terms(depth, f)),
            Formula::Imp(a, b) => Formula::imp(a.map_terms(depth, f), b.map_terms(depth, f)),
            Formula::Forall(h, a) => Formula::Forall(h.clone(), Box::new(a.map_terms(depth + 1, f))),
            Formula::Exists(h, a) => Formula::Exists(h.clone(), Box::new(a.map_terms(depth + 1, f))),
        }
    }

    /// Capture-avoiding substitution of the free variables.
    pub fn apply(&self, theta: &Substitution) -> Formula {
        if theta.is_identity() {
            return self.clone();
        }
        self.map_terms(0, &|t, _| t.apply(theta))
    }

    fn instantiate(&self, depth: usize, with: &Term) -> Formula {
        self.map_terms(depth, &|t, d| t.instantiate(d, with))
    }

    fn abstract_var(&self, depth: usize, x: &Name) -> Formula {
        self.map_terms(depth, &|t, d| t.abstract_var(d, x))
    }

    fn mentions_bound_outside(&self, depth: usize) -> bool {
        match self {
            Formula::PredI(_, args) | Formula::PredO(_, args) => {
                args.iter().any(|a| a.mentions_bound_outside(depth))
            }
            Formula::Eq(t, u) => t.mentions_bound_outside(depth) || u.mentions_bound_outside(depth),
            Formula::Not(a) => a.mentions_bound_outside(depth),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Imp(a, b) => {
                a.mentions_bound_outside(depth) || b.mentions_bound_outside(depth)
            }
            Formula::Forall(_, a) | Formula::Exists(_, a) => a.mentions_bound_outside(depth + 1),
        }
    }

    pub fn is_locally_closed(&self) -> bool {
        !self.mentions_bound_outside(0)
    }

    fn precedence(&self) -> u8 {
        match self {
            Formula::Forall(..) | Formula::Exists(..) => 0,
            Formula::Imp(..) => 1,
            Formula::Or(..) => 2,
            Formula::And(..) => 3,
            Formula::Not(..) => 4,
            _ => 5,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, scope: &mut Vec<Name>, ctx: u8) -> fmt::Result {
        let own = self.precedence();
        let paren = own < ctx;
        if paren {
            f.write_str("(")?;
        }
        match self {
            Formula::PredI(p, args) | Formula::PredO(p, args) => {
                write!(f, "{p}")?;
                if !args.is_empty() {
                    f.write_str("(")?;
                    for (k, a) in args.iter().enumerate() {
                        if k > 0 {
                            f.write_str(",")?;
                        }
                        a.fmt_with(f, scope)?;
                    }
                    f.write_str(")")?;
                }
            }
            Formula::Eq(t, u) => {
                t.fmt_with(f, scope)?;
                f.write_str(" = ")?;
                u.fmt_with(f, scope)?;
            }
            Formula::Not(a) => {
                f.write_str("~")?;
                a.fmt_prec(f, scope, 4)?;
            }
            Formula::And(a, b) => {
                a.fmt_prec(f, scope, 3)?;
                f.write_str(" /\\ ")?;
                b.fmt_prec(f, scope, 4)?;
            }
            Formula::Or(a, b) => {
                a.fmt_prec(f, scope, 2)?;
                f.write_str(" \\/ ")?;
                b.fmt_prec(f, scope, 3)?;
            }
            Formula::Imp(a, b) => {
                a.fmt_prec(f, scope, 2)?;
                f.write_str(" -> ")?;
                b.fmt_prec(f, scope, 1)?;
            }
            Formula::Forall(h, body) | Formula::Exists(h, body) => {
                let kw = if matches!(self, Formula::Forall(..)) { "all" } else { "ex" };
                let mut taken = BTreeSet::new();
                body.map_terms_ref(&mut |t| {
                    t.collect_vars(&mut taken);
                    t.collect_symbols(&mut taken);
                });
                let mut name = h.0.to_string();
                while taken.contains(name.as_str()) || scope.iter().any(|s| s.as_str() == name) {
                    name.push('\'');
                }
                write!(f, "{kw} {name}. ")?;
                scope.push(Name::from(name));
                let r = body.fmt_prec(f, scope, 0);
                scope.pop();
                r?;
            }
        }
        if paren {
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl std::borrow::Borrow<str> for Name {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, &mut Vec::new(), 0)
    }
}

/// `Γ ⊢ Δ` with both sides kept sorted and duplicate-free, so that slot
/// indices and syntactic identity are canonical.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Sequent {
    ant: Vec<Formula>,
    suc: Vec<Formula>,
}

fn canonical(mut v: Vec<Formula>) -> Vec<Formula> {
    v.sort();
    v.dedup();
    v
}

impl Sequent {
    pub fn new(ant: impl IntoIterator<Item = Formula>, suc: impl IntoIterator<Item = Formula>) -> Self {
        Sequent {
            ant: canonical(ant.into_iter().collect()),
            suc: canonical(suc.into_iter().collect()),
        }
    }

    pub fn antecedent(&self) -> &[Formula] {
        &self.ant
    }

    pub fn succedent(&self) -> &[Formula] {
        &self.suc
    }

    pub fn ant_slot(&self, phi: &Formula) -> Option<usize> {
        self.ant.binary_search(phi).ok()
    }

    pub fn suc_slot(&self, phi: &Formula) -> Option<usize> {
        self.suc.binary_search(phi).ok()
    }

    pub fn ant_contains(&self, phi: &Formula) -> bool {
        self.ant_slot(phi).is_some()
    }

    pub fn suc_contains(&self, phi: &Formula) -> bool {
        self.suc_slot(phi).is_some()
    }

    pub fn free_vars(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        for phi in self.ant.iter().chain(&self.suc) {
            phi.collect_vars(&mut out);
        }
        out
    }

    /// Every name appearing in the sequent (variables, symbols, binder hints).
    pub fn names(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        for phi in self.ant.iter().chain(&self.suc) {
            phi.collect_names(&mut out);
        }
        out
    }

    pub fn apply(&self, theta: &Substitution) -> Sequent {
        if theta.is_identity() {
            return self.clone();
        }
        Sequent::new(
            self.ant.iter().map(|a| a.apply(theta)),
            self.suc.iter().map(|a| a.apply(theta)),
        )
    }
}

impl fmt::Display for Sequent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let side = |v: &[Formula]| v.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(", ");
        let (a, s) = (side(&self.ant), side(&self.suc));
        match (a.is_empty(), s.is_empty()) {
            (true, true) => f.write_str("|-"),
            (true, false) => write!(f, "|- {s}"),
            (false, true) => write!(f, "{a} |-"),
            (false, false) => write!(f, "{a} |- {s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SubstError {
    #[error("variable {0} overridden twice")]
    DuplicateOverride(Name),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SubstKind {
    Atomic,
    Composite,
}

/// Finite map from variables to terms, normalized so that identity bindings
/// never appear; equality is therefore extensional.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Substitution {
    map: BTreeMap<Name, Term>,
}

impl Substitution {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Name, Term)>) -> Self {
        let mut map = BTreeMap::new();
        for (x, t) in pairs {
            debug_assert!(t.is_locally_closed(), "substitution image with a dangling bound index");
            map.insert(x, t);
        }
        Self::normalized(map)
    }

    fn normalized(mut map: BTreeMap<Name, Term>) -> Self {
        map.retain(|x, t| t.as_var() != Some(x));
        Substitution { map }
    }

    pub fn single(x: &str, t: Term) -> Self {
        Self::from_pairs([(Name::new(x), t)])
    }

    pub fn is_identity(&self) -> bool {
        self.map.is_empty()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&self, x: &Name) -> Option<&Term> {
        self.map.get(x)
    }

    /// Image of `x`, which is `x` itself outside the domain.
    pub fn image_of(&self, x: &Name) -> Term {
        self.map.get(x).cloned().unwrap_or_else(|| Term::Var(x.clone()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Name, &Term)> {
        self.map.iter()
    }

    pub fn domain(&self) -> impl Iterator<Item = &Name> {
        self.map.keys()
    }

    pub fn images(&self) -> impl Iterator<Item = &Term> {
        self.map.values()
    }

    pub fn classify(&self) -> SubstKind {
        if self.map.values().all(Term::is_atomic) {
            SubstKind::Atomic
        } else {
            SubstKind::Composite
        }
    }

    pub fn is_atomic(&self) -> bool {
        self.classify() == SubstKind::Atomic
    }

    /// `θ1θ2`: applying the result equals applying `self` then `then`.
    pub fn compose(&self, then: &Substitution) -> Substitution {
        let mut map: BTreeMap<Name, Term> =
            self.map.iter().map(|(x, t)| (x.clone(), t.apply(then))).collect();
        for (x, t) in &then.map {
            map.entry(x.clone()).or_insert_with(|| t.clone());
        }
        Self::normalized(map)
    }

    /// `θ[x1→y1,…,xn→yn]`.
    pub fn override_with(&self, pairs: &[(Name, Name)]) -> Result<Substitution, SubstError> {
        let mut seen = BTreeSet::new();
        let mut map = self.map.clone();
        for (x, y) in pairs {
            if !seen.insert(x.clone()) {
                return Err(SubstError::DuplicateOverride(x.clone()));
            }
            map.insert(x.clone(), Term::Var(y.clone()));
        }
        Ok(Self::normalized(map))
    }

    /// Restriction to the given variables.
    pub fn restrict(&self, vars: &BTreeSet<Name>) -> Substitution {
        Substitution {
            map: self.map.iter().filter(|(x, _)| vars.contains(*x)).map(|(x, t)| (x.clone(), t.clone())).collect(),
        }
    }

    pub fn vars(&self) -> BTreeSet<Name> {
        let mut out: BTreeSet<Name> = self.map.keys().cloned().collect();
        for t in self.map.values() {
            t.collect_vars(&mut out);
        }
        out
    }
}

impl fmt::Display for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (k, (x, t)) in self.map.iter().enumerate() {
            if k > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{x} := {t}")?;
        }
        f.write_str("]")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredicateDecl {
    pub arity: usize,
    pub inductive: bool,
}

/// Declared arities of function and predicate symbols.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Signature {
    functions: BTreeMap<Name, usize>,
    predicates: BTreeMap<Name, PredicateDecl>,
}

impl Signature {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_function(&mut self, f: &str, arity: usize) -> &mut Self {
        self.functions.insert(Name::new(f), arity);
        self
    }

    pub fn add_predicate(&mut self, p: &str, arity: usize, inductive: bool) -> &mut Self {
        self.predicates.insert(Name::new(p), PredicateDecl { arity, inductive });
        self
    }

    pub fn function_arity(&self, f: &str) -> Option<usize> {
        self.functions.get(f).copied()
    }

    pub fn predicate(&self, p: &str) -> Option<PredicateDecl> {
        self.predicates.get(p).copied()
    }

    pub fn functions(&self) -> impl Iterator<Item = (&Name, usize)> {
        self.functions.iter().map(|(n, a)| (n, *a))
    }

    pub fn predicates(&self) -> impl Iterator<Item = (&Name, PredicateDecl)> {
        self.predicates.iter().map(|(n, d)| (n, *d))
    }

    pub fn is_constant(&self, c: &str) -> bool {
        self.function_arity(c) == Some(0)
    }
}

/// A production `P(t⃗(x⃗)) ← Q1(…) … Qn(…) P1(…) … Pm(…)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Production {
    predicate: Name,
    head: Vec<Term>,
    ordinary: Vec<Formula>,
    inductive: Vec<Formula>,
    params: Vec<Name>,
}

impl Production {
    /// The parameter list is every variable of the production in order of
    /// first occurrence (head first).
    pub fn new(predicate: &str, head: Vec<Term>, ordinary: Vec<Formula>, inductive: Vec<Formula>) -> Self {
        let mut params: Vec<Name> = Vec::new();
        fn walk(t: &Term, out: &mut Vec<Name>) {
            match t {
                Term::Var(x) => {
                    if !out.contains(x) {
                        out.push(x.clone());
                    }
                }
                Term::Bound(_) => {}
                Term::App(_, args) => args.iter().for_each(|a| walk(a, out)),
            }
        }
        head.iter().for_each(|t| walk(t, &mut params));
        for atom in ordinary.iter().chain(&inductive) {
            if let Formula::PredI(_, args) | Formula::PredO(_, args) = atom {
                args.iter().for_each(|t| walk(t, &mut params));
            }
        }
        Production { predicate: Name::new(predicate), head, ordinary, inductive, params }
    }

    pub fn predicate(&self) -> &Name {
        &self.predicate
    }

    pub fn head_args(&self) -> &[Term] {
        &self.head
    }

    pub fn params(&self) -> &[Name] {
        &self.params
    }

    pub fn ordinary_premises(&self) -> &[Formula] {
        &self.ordinary
    }

    pub fn inductive_premises(&self) -> &[Formula] {
        &self.inductive
    }

    /// Body atoms in rule order: ordinary premises, then inductive ones.
    pub fn body(&self) -> impl Iterator<Item = &Formula> {
        self.ordinary.iter().chain(&self.inductive)
    }

    pub fn head(&self) -> Formula {
        Formula::PredI(self.predicate.clone(), self.head.clone())
    }

    /// Substitution sending the parameters to `args` positionally.
    pub fn instantiation(&self, args: &[Term]) -> Substitution {
        Substitution::from_pairs(self.params.iter().cloned().zip(args.iter().cloned()))
    }
}

impl fmt::Display for Production {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} <-", self.head())?;
        for (k, b) in self.body().enumerate() {
            write!(f, "{}{b}", if k == 0 { " " } else { ", " })?;
        }
        Ok(())
    }
}

/// An inductive definition set together with the signature it is stated in.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DefinitionSet {
    signature: Signature,
    productions: Vec<Production>,
    by_predicate: BTreeMap<Name, Vec<usize>>,
}

impl DefinitionSet {
    pub fn new(signature: Signature) -> Self {
        DefinitionSet { signature, productions: Vec::new(), by_predicate: BTreeMap::new() }
    }

    pub fn add(&mut self, production: Production) -> &mut Self {
        let idx = self.productions.len();
        self.by_predicate.entry(production.predicate.clone()).or_default().push(idx);
        self.productions.push(production);
        self
    }

    pub fn signature(&self) -> &Signature {
        &self.signature
    }

    pub fn productions(&self) -> &[Production] {
        &self.productions
    }

    /// Productions of `p` in declaration order; the position in this list is
    /// the stable production index used by proof annotations.
    pub fn productions_of<'a>(&'a self, p: &str) -> impl Iterator<Item = &'a Production> + 'a {
        self.by_predicate
            .get(p)
            .map(|v| v.as_slice())
            .unwrap_or(&[])
            .iter()
            .map(move |&i| &self.productions[i])
    }

    pub fn production(&self, p: &str, index: usize) -> Option<&Production> {
        self.by_predicate.get(p).and_then(|v| v.get(index)).map(|&i| &self.productions[i])
    }

    pub fn is_inductive(&self, p: &str) -> bool {
        self.signature.predicate(p).is_some_and(|d| d.inductive)
    }
}

/// Deterministic generator of names outside an avoid set.
#[derive(Debug, Clone)]
pub struct FreshNames {
    prefix: String,
    next: usize,
    avoid: BTreeSet<Name>,
}

impl FreshNames {
    pub fn new(prefix: &str, avoid: impl IntoIterator<Item = Name>) -> Self {
        FreshNames { prefix: prefix.to_owned(), next: 1, avoid: avoid.into_iter().collect() }
    }

    pub fn avoid(&mut self, names: impl IntoIterator<Item = Name>) {
        self.avoid.extend(names);
    }

    pub fn fresh(&mut self) -> Name {
        loop {
            let candidate = Name::from(format!("{}{}", self.prefix, self.next));
            self.next += 1;
            if self.avoid.insert(candidate.clone()) {
                return candidate;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Term {
        Term::var("x")
    }
    fn y() -> Term {
        Term::var("y")
    }
    fn s(t: Term) -> Term {
        Term::app("s", vec![t])
    }
    fn n(t: Term) -> Formula {
        Formula::ind("N", vec![t])
    }
    fn nm(v: &str) -> Name {
        Name::new(v)
    }

    #[test]
    fn free_vars_drop_bound() {
        let phi = Formula::forall(&nm("x"), Formula::ord("P", vec![x(), y()]));
        assert_eq!(phi.free_vars(), BTreeSet::from([nm("y")]));
        assert!(Term::constant("0").free_vars().is_empty());
        let seq = Sequent::new([n(x())], [Formula::or(Formula::ind("E", vec![x()]), Formula::ind("O", vec![x()]))]);
        assert_eq!(seq.free_vars(), BTreeSet::from([nm("x")]));
    }

    #[test]
    fn substitution_replaces_and_avoids_capture() {
        assert_eq!(n(x()).apply(&Substitution::single("x", s(y()))), n(s(y())));
        let phi = Formula::exists(&nm("y"), Formula::eq(y(), x()));
        let got = phi.apply(&Substitution::single("x", y()));
        let expected = Formula::exists(&nm("y'"), Formula::eq(Term::var("y'"), y()));
        assert_eq!(got, expected);
        assert_eq!(got.to_string(), "ex y'. y' = y");
        assert_eq!(got.free_vars(), BTreeSet::from([nm("y")]));
    }

    #[test]
    fn compose_examples() {
        let a = Substitution::single("y", x());
        let b = Substitution::single("x", Term::var("z"));
        let c = a.compose(&b);
        assert_eq!(c, Substitution::from_pairs([(nm("y"), Term::var("z")), (nm("x"), Term::var("z"))]));
        assert_eq!(a.compose(&Substitution::identity()), a);
        assert_eq!(a.compose(&a), a);
    }

    #[test]
    fn override_examples() {
        let a = Substitution::single("y", x());
        assert_eq!(
            a.override_with(&[(nm("x"), nm("y"))]).unwrap(),
            Substitution::from_pairs([(nm("y"), x()), (nm("x"), y())])
        );
        assert_eq!(
            Substitution::identity().override_with(&[(nm("x"), nm("y"))]).unwrap(),
            Substitution::single("x", y())
        );
        assert!(a.override_with(&[(nm("y"), nm("y"))]).unwrap().is_identity());
        assert_eq!(
            a.override_with(&[(nm("x"), nm("y")), (nm("x"), nm("x"))]),
            Err(SubstError::DuplicateOverride(nm("x")))
        );
    }

    #[test]
    fn alpha_equivalence() {
        let p = |t| Formula::ord("P", vec![t]);
        assert_eq!(Formula::forall(&nm("x"), p(x())), Formula::forall(&nm("y"), p(y())));
        assert_ne!(p(x()), p(y()));
        let e = |t| Formula::ind("E", vec![t]);
        let o = |t| Formula::ind("O", vec![t]);
        assert_eq!(Sequent::new([n(x())], [e(x()), o(x())]), Sequent::new([n(x())], [o(x()), e(x())]));
    }

    #[test]
    fn classification() {
        let a = Substitution::from_pairs([(nm("x"), y()), (nm("z"), Term::constant("0"))]);
        assert_eq!(a.classify(), SubstKind::Atomic);
        let b = Substitution::single("x", Term::app("f", vec![x(), y()]));
        assert_eq!(b.classify(), SubstKind::Composite);
        assert_eq!(Substitution::identity().classify(), SubstKind::Atomic);
    }

    #[test]
    fn printing_renames_shadowing_binders() {
        // ∀x. ∀x'. P(x, x') built so that both hints are "x"
        let inner = Formula::forall(&nm("x"), Formula::ord("P", vec![Term::var("u"), x()]));
        let outer = Formula::forall(&nm("u"), inner);
        let outer = match outer {
            Formula::Forall(_, b) => Formula::Forall(Hint(nm("x")), b),
            _ => unreachable!(),
        };
        assert_eq!(outer.to_string(), "all x. all x'. P(x,x')");
    }

    #[test]
    fn fresh_names_skip_avoided() {
        let mut g = FreshNames::new("y", [nm("y1"), nm("y3")]);
        assert_eq!(g.fresh(), nm("y2"));
        assert_eq!(g.fresh(), nm("y4"));
    }

    #[test]
    fn production_params_in_first_occurrence_order() {
        let p = Production::new("E", vec![s(x())], vec![], vec![Formula::ind("O", vec![x()])]);
        assert_eq!(p.params(), &[nm("x")]);
        assert_eq!(p.to_string(), "E(s(x)) <- O(x)");
    }
}
