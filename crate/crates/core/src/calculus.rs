//! Inference rules, rule-instance checking, trace occurrence maps and the
//! substitution application of a rule instance under an atomic substitution.
//!
//! Sequent sides are sets, so a rule written `Γ, φ ⊢ Δ` over `Γ', … ⊢ Δ`
//! admits both readings of `Γ` (with or without the principal formula). The
//! checker accepts either; builders here always drop it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::syntax::{DefinitionSet, Formula, FreshNames, Name, Production, Sequent, Substitution, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RuleId {
    Axiom,
    Wk,
    Cut,
    Subst,
    NotL,
    NotR,
    OrL,
    OrR,
    AndL,
    AndR,
    ImpL,
    ImpR,
    AllL,
    AllR,
    ExL,
    ExR,
    EqL,
    EqR,
    UL,
    UR,
    FreshL,
    ULPrime,
}

impl RuleId {
    pub const ALL: [RuleId; 22] = [
        RuleId::Axiom,
        RuleId::Wk,
        RuleId::Cut,
        RuleId::Subst,
        RuleId::NotL,
        RuleId::NotR,
        RuleId::OrL,
        RuleId::OrR,
        RuleId::AndL,
        RuleId::AndR,
        RuleId::ImpL,
        RuleId::ImpR,
        RuleId::AllL,
        RuleId::AllR,
        RuleId::ExL,
        RuleId::ExR,
        RuleId::EqL,
        RuleId::EqR,
        RuleId::UL,
        RuleId::UR,
        RuleId::FreshL,
        RuleId::ULPrime,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RuleId::Axiom => "Axiom",
            RuleId::Wk => "Wk",
            RuleId::Cut => "Cut",
            RuleId::Subst => "Subst",
            RuleId::NotL => "NotL",
            RuleId::NotR => "NotR",
            RuleId::OrL => "OrL",
            RuleId::OrR => "OrR",
            RuleId::AndL => "AndL",
            RuleId::AndR => "AndR",
            RuleId::ImpL => "ImpL",
            RuleId::ImpR => "ImpR",
            RuleId::AllL => "AllL",
            RuleId::AllR => "AllR",
            RuleId::ExL => "ExL",
            RuleId::ExR => "ExR",
            RuleId::EqL => "EqL",
            RuleId::EqR => "EqR",
            RuleId::UL => "UL",
            RuleId::UR => "UR",
            RuleId::FreshL => "FreshL",
            RuleId::ULPrime => "ULPrime",
        }
    }

    pub fn from_name(s: &str) -> Option<RuleId> {
        RuleId::ALL.into_iter().find(|r| r.name() == s)
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The set of rules a proof may use.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSet {
    enabled: BTreeSet<RuleId>,
}

impl RuleSet {
    pub fn from_rules(rules: impl IntoIterator<Item = RuleId>) -> Self {
        RuleSet { enabled: rules.into_iter().collect() }
    }

    /// Every standard rule, cut and substitution included.
    pub fn full() -> Self {
        Self::from_rules(RuleId::ALL.into_iter().filter(|r| !matches!(r, RuleId::FreshL | RuleId::ULPrime)))
    }

    pub fn cutfree() -> Self {
        let mut s = Self::full();
        s.enabled.remove(&RuleId::Cut);
        s
    }

    /// Cut-free with the fresh-equation rule.
    pub fn freshl() -> Self {
        let mut s = Self::cutfree();
        s.enabled.insert(RuleId::FreshL);
        s
    }

    /// In-place unfolding, right unfolding, axiom, weakening and substitution.
    pub fn section4() -> Self {
        Self::from_rules([RuleId::ULPrime, RuleId::UR, RuleId::Axiom, RuleId::Wk, RuleId::Subst])
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "full" => Some(Self::full()),
            "cutfree" => Some(Self::cutfree()),
            "freshl" => Some(Self::freshl()),
            "section4" => Some(Self::section4()),
            _ => None,
        }
    }

    pub fn contains(&self, r: RuleId) -> bool {
        self.enabled.contains(&r)
    }

    pub fn allows_cut(&self) -> bool {
        self.contains(RuleId::Cut)
    }

    pub fn allows_subst(&self) -> bool {
        self.contains(RuleId::Subst)
    }

    pub fn iter(&self) -> impl Iterator<Item = RuleId> + '_ {
        self.enabled.iter().copied()
    }
}

/// A rule together with the annotation that pins its instance down.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rule {
    Axiom,
    Wk,
    Cut { formula: Formula },
    Subst { subst: Substitution },
    NotL { target: Formula },
    NotR { target: Formula },
    OrL { target: Formula },
    OrR { target: Formula },
    AndL { target: Formula },
    AndR { target: Formula },
    ImpL { target: Formula },
    ImpR { target: Formula },
    AllL { target: Formula, witness: Term },
    AllR { target: Formula, eigen: Name },
    ExL { target: Formula, eigen: Name },
    ExR { target: Formula, witness: Term },
    /// `Γ[t/a,u/b], t=u ⊢ Δ[t/a,u/b]` over `Γ[u/a,t/b] ⊢ Δ[u/a,t/b]`, with
    /// the template `Γ ⊢ Δ` given explicitly.
    EqL { lhs: Term, rhs: Term, placeholders: (Name, Name), template: Sequent },
    EqR { term: Term },
    /// Left unfolding; one fresh vector per production of the predicate.
    UL { target: Formula, fresh: Vec<Vec<Name>> },
    /// Right unfolding with the given production (index among the
    /// predicate's productions).
    UR { target: Formula, production: usize },
    FreshL { var: Name, term: Term },
    /// Left unfolding in place, without equations.
    ULPrime { target: Formula },
}

impl Rule {
    pub fn id(&self) -> RuleId {
        match self {
            Rule::Axiom => RuleId::Axiom,
            Rule::Wk => RuleId::Wk,
            Rule::Cut { .. } => RuleId::Cut,
            Rule::Subst { .. } => RuleId::Subst,
            Rule::NotL { .. } => RuleId::NotL,
            Rule::NotR { .. } => RuleId::NotR,
            Rule::OrL { .. } => RuleId::OrL,
            Rule::OrR { .. } => RuleId::OrR,
            Rule::AndL { .. } => RuleId::AndL,
            Rule::AndR { .. } => RuleId::AndR,
            Rule::ImpL { .. } => RuleId::ImpL,
            Rule::ImpR { .. } => RuleId::ImpR,
            Rule::AllL { .. } => RuleId::AllL,
            Rule::AllR { .. } => RuleId::AllR,
            Rule::ExL { .. } => RuleId::ExL,
            Rule::ExR { .. } => RuleId::ExR,
            Rule::EqL { .. } => RuleId::EqL,
            Rule::EqR { .. } => RuleId::EqR,
            Rule::UL { .. } => RuleId::UL,
            Rule::UR { .. } => RuleId::UR,
            Rule::FreshL { .. } => RuleId::FreshL,
            Rule::ULPrime { .. } => RuleId::ULPrime,
        }
    }

    fn has_eigenvariables(&self) -> bool {
        matches!(self, Rule::UL { .. } | Rule::AllR { .. } | Rule::ExL { .. } | Rule::FreshL { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleInstance {
    pub rule: Rule,
    pub conclusion: Sequent,
    pub premises: Vec<Sequent>,
}

impl RuleInstance {
    pub fn new(rule: Rule, conclusion: Sequent, premises: Vec<Sequent>) -> Self {
        RuleInstance { rule, conclusion, premises }
    }
}

/// One step of a trace: antecedent slot of the conclusion to antecedent slot
/// of a premise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TracePair {
    pub from: usize,
    pub to: usize,
    pub progress: bool,
}

/// Trace relation of a rule instance, one pair list per premise. Only
/// inductive-predicate slots take part.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OccurrenceMap {
    pub per_premise: Vec<Vec<TracePair>>,
}

impl OccurrenceMap {
    pub fn premise(&self, i: usize) -> &[TracePair] {
        &self.per_premise[i]
    }

    pub fn contains(&self, premise: usize, from: usize, to: usize, progress: bool) -> bool {
        self.per_premise[premise]
            .iter()
            .any(|p| p.from == from && p.to == to && (p.progress || !progress))
    }
}

#[derive(Default)]
struct PairSet(BTreeMap<(usize, usize), bool>);

impl PairSet {
    fn add(&mut self, from: usize, to: usize, progress: bool) {
        *self.0.entry((from, to)).or_insert(false) |= progress;
    }

    fn finish(self) -> Vec<TracePair> {
        self.0.into_iter().map(|((from, to), progress)| TracePair { from, to, progress }).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("rule {0} is not enabled in this rule set")]
    RuleDisabled(RuleId),
    #[error("malformed {rule} instance: {reason}")]
    MalformedInstance { rule: RuleId, reason: String },
    #[error("substitution {0} is composite")]
    CompositeSubstitution(Substitution),
    #[error("substitution application is not defined for (Subst)")]
    RuleIsSubst,
    #[error("unknown inductive predicate {0}")]
    UnknownPredicate(Name),
}

fn malformed(rule: RuleId, reason: impl Into<String>) -> RuleError {
    RuleError::MalformedInstance { rule, reason: reason.into() }
}

fn canon(v: impl IntoIterator<Item = Formula>) -> Vec<Formula> {
    let mut v: Vec<Formula> = v.into_iter().collect();
    v.sort();
    v.dedup();
    v
}

/// `actual` is `side` with `principal` replaced by `add`, or `side` plus `add`.
fn replaces(actual: &[Formula], side: &[Formula], principal: &Formula, add: &[Formula]) -> bool {
    let without = canon(side.iter().filter(|f| *f != principal).cloned().chain(add.iter().cloned()));
    actual == without.as_slice() || actual == canon(side.iter().cloned().chain(add.iter().cloned())).as_slice()
}

fn extends(actual: &[Formula], side: &[Formula], add: &[Formula]) -> bool {
    actual == canon(side.iter().cloned().chain(add.iter().cloned())).as_slice()
}

fn subset(small: &[Formula], big: &[Formula]) -> bool {
    small.iter().all(|f| big.binary_search(f).is_ok())
}

struct Checker<'a> {
    inst: &'a RuleInstance,
    id: RuleId,
}

impl<'a> Checker<'a> {
    fn premises(&self, n: usize) -> Result<(), RuleError> {
        if self.inst.premises.len() != n {
            return Err(malformed(self.id, format!("expected {n} premises, found {}", self.inst.premises.len())));
        }
        Ok(())
    }

    fn in_ant(&self, phi: &Formula) -> Result<(), RuleError> {
        if !self.inst.conclusion.ant_contains(phi) {
            return Err(malformed(self.id, format!("{phi} is not in the antecedent")));
        }
        Ok(())
    }

    fn in_suc(&self, phi: &Formula) -> Result<(), RuleError> {
        if !self.inst.conclusion.suc_contains(phi) {
            return Err(malformed(self.id, format!("{phi} is not in the succedent")));
        }
        Ok(())
    }

    fn ensure(&self, ok: bool, reason: &str) -> Result<(), RuleError> {
        if ok {
            Ok(())
        } else {
            Err(malformed(self.id, reason))
        }
    }

    /// Left rule: premise `i` replaces `target` by `add` on the left and keeps
    /// the succedent, optionally extended by `add_right`.
    fn left(&self, i: usize, target: &Formula, add: &[Formula], add_right: &[Formula]) -> Result<(), RuleError> {
        let c = &self.inst.conclusion;
        let p = &self.inst.premises[i];
        self.ensure(replaces(p.antecedent(), c.antecedent(), target, add), "premise antecedent does not match")?;
        self.ensure(extends(p.succedent(), c.succedent(), add_right), "premise succedent does not match")
    }

    fn right(&self, i: usize, target: &Formula, add: &[Formula], add_left: &[Formula]) -> Result<(), RuleError> {
        let c = &self.inst.conclusion;
        let p = &self.inst.premises[i];
        self.ensure(replaces(p.succedent(), c.succedent(), target, add), "premise succedent does not match")?;
        self.ensure(extends(p.antecedent(), c.antecedent(), add_left), "premise antecedent does not match")
    }
}

fn binary(target: &Formula) -> Option<(&Formula, &Formula)> {
    match target {
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Imp(a, b) => Some((a, b)),
        _ => None,
    }
}

fn productions<'d>(defs: &'d DefinitionSet, p: &Name) -> Result<Vec<&'d Production>, RuleError> {
    if !defs.is_inductive(p.as_str()) {
        return Err(RuleError::UnknownPredicate(p.clone()));
    }
    Ok(defs.productions_of(p.as_str()).collect())
}

/// The case-distinction premise of `Γ, P(u⃗) ⊢ Δ` for a production, with the
/// production parameters renamed to `fresh`.
fn case_premise(conclusion: &Sequent, target: &Formula, args: &[Term], prod: &Production, fresh: &[Name]) -> Sequent {
    let inst = prod.instantiation(&fresh.iter().map(|y| Term::Var(y.clone())).collect::<Vec<_>>());
    let eqs = args.iter().zip(prod.head_args()).map(|(u, t)| Formula::Eq(u.clone(), t.apply(&inst)));
    let body = prod.body().map(|b| b.apply(&inst));
    Sequent::new(
        conclusion.antecedent().iter().filter(|f| *f != target).cloned().chain(eqs).chain(body),
        conclusion.succedent().iter().cloned(),
    )
}

fn case_additions(args: &[Term], prod: &Production, fresh: &[Name]) -> Vec<Formula> {
    let inst = prod.instantiation(&fresh.iter().map(|y| Term::Var(y.clone())).collect::<Vec<_>>());
    args.iter()
        .zip(prod.head_args())
        .map(|(u, t)| Formula::Eq(u.clone(), t.apply(&inst)))
        .chain(prod.body().map(|b| b.apply(&inst)))
        .collect()
}

/// Binds the parameters of `prod` by matching its head against `args`.
fn match_head(prod: &Production, args: &[Term]) -> Option<BTreeMap<Name, Term>> {
    if prod.head_args().len() != args.len() {
        return None;
    }
    let mut binding = BTreeMap::new();
    prod.head_args().iter().zip(args).all(|(p, t)| p.match_into(t, &mut binding)).then_some(binding)
}

fn match_atom(pattern: &Formula, target: &Formula, binding: &mut BTreeMap<Name, Term>) -> bool {
    match (pattern, target) {
        (Formula::PredI(p, ps), Formula::PredI(q, ts)) | (Formula::PredO(p, ps), Formula::PredO(q, ts)) => {
            p == q && ps.len() == ts.len() && ps.iter().zip(ts).all(|(a, b)| a.match_into(b, binding))
        }
        _ => false,
    }
}

fn binding_subst(binding: &BTreeMap<Name, Term>) -> Substitution {
    Substitution::from_pairs(binding.iter().map(|(x, t)| (x.clone(), t.clone())))
}

/// Finds the instantiation of a right unfolding: head match, then any
/// parameters that only occur in the body are matched against the premises.
fn ur_binding(
    prod: &Production,
    args: &[Term],
    premises: &[Sequent],
) -> Option<BTreeMap<Name, Term>> {
    fn search(
        body: &[&Formula],
        premises: &[Sequent],
        j: usize,
        binding: BTreeMap<Name, Term>,
        params: &[Name],
    ) -> Option<BTreeMap<Name, Term>> {
        if params.iter().all(|x| binding.contains_key(x)) {
            return Some(binding);
        }
        if j == body.len() {
            return None;
        }
        for cand in premises[j].succedent() {
            let mut b = binding.clone();
            if match_atom(body[j], cand, &mut b) {
                if let Some(found) = search(body, premises, j + 1, b, params) {
                    return Some(found);
                }
            }
        }
        None
    }
    let binding = match_head(prod, args)?;
    let body: Vec<&Formula> = prod.body().collect();
    if premises.len() != body.len() {
        return None;
    }
    search(&body, premises, 0, binding, prod.params())
}

fn rewrite_eq(template: &Sequent, a: &Name, b: &Name, ta: &Term, tb: &Term) -> Sequent {
    template.apply(&Substitution::from_pairs([(a.clone(), ta.clone()), (b.clone(), tb.clone())]))
}

/// Checks shape and side conditions of `inst` and returns its trace relation.
pub fn check_rule_instance(
    inst: &RuleInstance,
    defs: &DefinitionSet,
    rules: &RuleSet,
) -> Result<OccurrenceMap, RuleError> {
    let id = inst.rule.id();
    if !rules.contains(id) {
        return Err(RuleError::RuleDisabled(id));
    }
    let ck = Checker { inst, id };
    let conc = &inst.conclusion;
    match &inst.rule {
        Rule::Axiom => {
            ck.premises(0)?;
            ck.ensure(conc.antecedent().iter().any(|f| conc.suc_contains(f)), "antecedent and succedent are disjoint")?;
        }
        Rule::Wk => {
            ck.premises(1)?;
            let p = &inst.premises[0];
            ck.ensure(
                subset(p.antecedent(), conc.antecedent()) && subset(p.succedent(), conc.succedent()),
                "premise is not a subsequent of the conclusion",
            )?;
        }
        Rule::Cut { formula } => {
            ck.premises(2)?;
            ck.ensure(formula.is_locally_closed(), "cut formula has dangling bound variables")?;
            let (l, r) = (&inst.premises[0], &inst.premises[1]);
            ck.ensure(
                l.antecedent() == conc.antecedent() && extends(l.succedent(), conc.succedent(), std::slice::from_ref(formula)),
                "left premise must be Γ ⊢ φ, Δ",
            )?;
            ck.ensure(
                r.succedent() == conc.succedent() && extends(r.antecedent(), conc.antecedent(), std::slice::from_ref(formula)),
                "right premise must be Γ, φ ⊢ Δ",
            )?;
        }
        Rule::Subst { subst } => {
            ck.premises(1)?;
            ck.ensure(inst.premises[0].apply(subst) == *conc, "conclusion is not the premise under the substitution")?;
        }
        Rule::NotL { target } => {
            ck.premises(1)?;
            ck.in_ant(target)?;
            let Formula::Not(a) = target else { return Err(malformed(id, "target is not a negation")) };
            ck.left(0, target, &[], std::slice::from_ref(a))?;
        }
        Rule::NotR { target } => {
            ck.premises(1)?;
            ck.in_suc(target)?;
            let Formula::Not(a) = target else { return Err(malformed(id, "target is not a negation")) };
            ck.right(0, target, &[], std::slice::from_ref(a))?;
        }
        Rule::OrL { target } | Rule::AndL { target } | Rule::ImpL { target } => {
            ck.in_ant(target)?;
            let ok_shape = matches!(
                (id, target),
                (RuleId::OrL, Formula::Or(..)) | (RuleId::AndL, Formula::And(..)) | (RuleId::ImpL, Formula::Imp(..))
            );
            ck.ensure(ok_shape, "target has the wrong connective")?;
            let (a, b) = binary(target).expect("binary connective");
            match id {
                RuleId::OrL => {
                    ck.premises(2)?;
                    ck.left(0, target, std::slice::from_ref(a), &[])?;
                    ck.left(1, target, std::slice::from_ref(b), &[])?;
                }
                RuleId::AndL => {
                    ck.premises(1)?;
                    ck.left(0, target, &[a.clone(), b.clone()], &[])?;
                }
                _ => {
                    ck.premises(2)?;
                    ck.left(0, target, &[], std::slice::from_ref(a))?;
                    ck.left(1, target, std::slice::from_ref(b), &[])?;
                }
            }
        }
        Rule::OrR { target } | Rule::AndR { target } | Rule::ImpR { target } => {
            ck.in_suc(target)?;
            let ok_shape = matches!(
                (id, target),
                (RuleId::OrR, Formula::Or(..)) | (RuleId::AndR, Formula::And(..)) | (RuleId::ImpR, Formula::Imp(..))
            );
            ck.ensure(ok_shape, "target has the wrong connective")?;
            let (a, b) = binary(target).expect("binary connective");
            match id {
                RuleId::OrR => {
                    ck.premises(1)?;
                    ck.right(0, target, &[a.clone(), b.clone()], &[])?;
                }
                RuleId::AndR => {
                    ck.premises(2)?;
                    ck.right(0, target, std::slice::from_ref(a), &[])?;
                    ck.right(1, target, std::slice::from_ref(b), &[])?;
                }
                _ => {
                    ck.premises(1)?;
                    ck.right(0, target, std::slice::from_ref(b), std::slice::from_ref(a))?;
                }
            }
        }
        Rule::AllL { target, witness } | Rule::ExR { target, witness } => {
            ck.premises(1)?;
            ck.ensure(witness.is_locally_closed(), "witness has dangling bound variables")?;
            let left = id == RuleId::AllL;
            let shape = if left { matches!(target, Formula::Forall(..)) } else { matches!(target, Formula::Exists(..)) };
            ck.ensure(shape, "target has the wrong quantifier")?;
            let body = target.instantiate_binder(witness).expect("quantifier");
            if left {
                ck.in_ant(target)?;
                ck.left(0, target, &[body], &[])?;
            } else {
                ck.in_suc(target)?;
                ck.right(0, target, &[body], &[])?;
            }
        }
        Rule::AllR { target, eigen } | Rule::ExL { target, eigen } => {
            ck.premises(1)?;
            let left = id == RuleId::ExL;
            let shape = if left { matches!(target, Formula::Exists(..)) } else { matches!(target, Formula::Forall(..)) };
            ck.ensure(shape, "target has the wrong quantifier")?;
            ck.ensure(!conc.free_vars().contains(eigen), "eigenvariable is not fresh for the conclusion")?;
            let body = target.instantiate_binder(&Term::Var(eigen.clone())).expect("quantifier");
            if left {
                ck.in_ant(target)?;
                ck.left(0, target, &[body], &[])?;
            } else {
                ck.in_suc(target)?;
                ck.right(0, target, &[body], &[])?;
            }
        }
        Rule::EqL { lhs, rhs, placeholders: (a, b), template } => {
            ck.premises(1)?;
            ck.ensure(a != b, "placeholders must differ")?;
            ck.ensure(lhs.is_locally_closed() && rhs.is_locally_closed(), "equation has dangling bound variables")?;
            let concl_side = rewrite_eq(template, a, b, lhs, rhs);
            let prem_side = rewrite_eq(template, a, b, rhs, lhs);
            let eq = Formula::Eq(lhs.clone(), rhs.clone());
            ck.ensure(
                extends(conc.antecedent(), concl_side.antecedent(), std::slice::from_ref(&eq))
                    && conc.succedent() == concl_side.succedent(),
                "conclusion is not the template rewritten with the equation",
            )?;
            ck.ensure(inst.premises[0] == prem_side, "premise is not the template rewritten the other way")?;
        }
        Rule::EqR { term } => {
            ck.premises(0)?;
            ck.in_suc(&Formula::Eq(term.clone(), term.clone()))?;
        }
        Rule::UL { target, fresh } => {
            ck.in_ant(target)?;
            let Formula::PredI(p, args) = target else { return Err(malformed(id, "target is not an inductive atom")) };
            let prods = productions(defs, p)?;
            ck.premises(prods.len())?;
            ck.ensure(fresh.len() == prods.len(), "one fresh vector per production is required")?;
            let fv = conc.free_vars();
            for (k, prod) in prods.iter().enumerate() {
                let ys = &fresh[k];
                ck.ensure(ys.len() == prod.params().len(), "fresh vector length differs from the production parameters")?;
                let distinct: BTreeSet<&Name> = ys.iter().collect();
                ck.ensure(distinct.len() == ys.len(), "fresh variables are not pairwise distinct")?;
                ck.ensure(ys.iter().all(|y| !fv.contains(y)), "fresh variable occurs free in the conclusion")?;
                ck.left(k, target, &case_additions(args, prod, ys), &[])?;
            }
        }
        Rule::UR { target, production } => {
            ck.in_suc(target)?;
            let Formula::PredI(p, args) = target else { return Err(malformed(id, "target is not an inductive atom")) };
            let prods = productions(defs, p)?;
            let prod = prods.get(*production).ok_or_else(|| malformed(id, "no such production"))?;
            let body: Vec<&Formula> = prod.body().collect();
            ck.premises(body.len())?;
            let binding = ur_binding(prod, args, &inst.premises)
                .ok_or_else(|| malformed(id, "target does not instantiate the production"))?;
            let sigma = binding_subst(&binding);
            for (j, atom) in body.iter().enumerate() {
                ck.right(j, target, &[atom.apply(&sigma)], &[])?;
            }
        }
        Rule::FreshL { var, term } => {
            ck.premises(1)?;
            ck.ensure(term.is_locally_closed(), "term has dangling bound variables")?;
            ck.ensure(
                !conc.free_vars().contains(var) && !term.free_vars().contains(var),
                "variable is not fresh for the conclusion and the term",
            )?;
            let eq = Formula::Eq(Term::Var(var.clone()), term.clone());
            let p = &inst.premises[0];
            ck.ensure(
                extends(p.antecedent(), conc.antecedent(), &[eq]) && p.succedent() == conc.succedent(),
                "premise must be y = t, Γ ⊢ Δ",
            )?;
        }
        Rule::ULPrime { target } => {
            ck.in_ant(target)?;
            let Formula::PredI(p, args) = target else { return Err(malformed(id, "target is not an inductive atom")) };
            let prods = productions(defs, p)?;
            ck.premises(prods.len())?;
            for (k, prod) in prods.iter().enumerate() {
                let binding = match_head(prod, args)
                    .filter(|b| prod.params().iter().all(|x| b.contains_key(x)))
                    .ok_or_else(|| malformed(id, "production head does not determine the unfolding"))?;
                let sigma = binding_subst(&binding);
                let body: Vec<Formula> = prod.body().map(|b| b.apply(&sigma)).collect();
                ck.left(k, target, &body, &[])?;
            }
        }
    }
    Ok(occurrence_map(inst, defs))
}

/// Trace relation of an instance already known to be well formed.
fn occurrence_map(inst: &RuleInstance, defs: &DefinitionSet) -> OccurrenceMap {
    let conc = &inst.conclusion;
    let ind_slots = |s: &Sequent| -> Vec<usize> {
        s.antecedent().iter().enumerate().filter(|(_, f)| f.is_inductive_atom()).map(|(i, _)| i).collect()
    };
    let mut per_premise = Vec::with_capacity(inst.premises.len());
    for (k, prem) in inst.premises.iter().enumerate() {
        let mut pairs = PairSet::default();
        match &inst.rule {
            Rule::Subst { subst } => {
                for c in ind_slots(conc) {
                    for p in ind_slots(prem) {
                        if prem.antecedent()[p].apply(subst) == conc.antecedent()[c] {
                            pairs.add(c, p, false);
                        }
                    }
                }
            }
            Rule::EqL { lhs, rhs, placeholders: (a, b), template } => {
                let fwd = Substitution::from_pairs([(a.clone(), lhs.clone()), (b.clone(), rhs.clone())]);
                let bwd = Substitution::from_pairs([(a.clone(), rhs.clone()), (b.clone(), lhs.clone())]);
                for t in template.antecedent().iter().filter(|f| f.is_inductive_atom()) {
                    if let (Some(c), Some(p)) = (conc.ant_slot(&t.apply(&fwd)), prem.ant_slot(&t.apply(&bwd))) {
                        pairs.add(c, p, false);
                    }
                }
            }
            rule => {
                for c in ind_slots(conc) {
                    if let Some(p) = prem.ant_slot(&conc.antecedent()[c]) {
                        pairs.add(c, p, false);
                    }
                }
                let unfolded: Option<Vec<Formula>> = match rule {
                    Rule::UL { target: Formula::PredI(p, args), fresh } => defs
                        .productions_of(p.as_str())
                        .nth(k)
                        .map(|prod| case_additions(args, prod, &fresh[k])),
                    Rule::ULPrime { target: Formula::PredI(p, args) } => {
                        defs.productions_of(p.as_str()).nth(k).and_then(|prod| {
                            match_head(prod, args).map(|b| prod.body().map(|f| f.apply(&binding_subst(&b))).collect())
                        })
                    }
                    _ => None,
                };
                if let (Some(added), Some(c)) = (
                    unfolded,
                    match rule {
                        Rule::UL { target, .. } | Rule::ULPrime { target } => conc.ant_slot(target),
                        _ => None,
                    },
                ) {
                    for f in added.iter().filter(|f| f.is_inductive_atom()) {
                        if let Some(p) = prem.ant_slot(f) {
                            pairs.add(c, p, true);
                        }
                    }
                }
            }
        }
        per_premise.push(pairs.finish());
    }
    OccurrenceMap { per_premise }
}

/// Premises of the left unfolding of `occ` in `seq`, one per production.
pub fn build_case_distinctions(
    seq: &Sequent,
    occ: &Formula,
    defs: &DefinitionSet,
    fresh: &mut FreshNames,
) -> Result<Vec<Sequent>, RuleError> {
    Ok(unfold_left(seq, occ, defs, fresh)?.premises)
}

/// The complete left-unfolding instance for `occ`, fresh vectors included.
pub fn unfold_left(
    seq: &Sequent,
    occ: &Formula,
    defs: &DefinitionSet,
    fresh: &mut FreshNames,
) -> Result<RuleInstance, RuleError> {
    let Formula::PredI(p, args) = occ else {
        return Err(malformed(RuleId::UL, "target is not an inductive atom"));
    };
    if !seq.ant_contains(occ) {
        return Err(malformed(RuleId::UL, format!("{occ} is not in the antecedent")));
    }
    let prods = productions(defs, p)?;
    fresh.avoid(seq.names());
    let mut premises = Vec::new();
    let mut vectors = Vec::new();
    for prod in prods {
        let ys: Vec<Name> = prod.params().iter().map(|_| fresh.fresh()).collect();
        premises.push(case_premise(seq, occ, args, prod, &ys));
        vectors.push(ys);
    }
    Ok(RuleInstance::new(Rule::UL { target: occ.clone(), fresh: vectors }, seq.clone(), premises))
}

fn rename_fresh(
    vars: &[Name],
    keep_out: &BTreeSet<Name>,
    pool: &BTreeSet<Name>,
) -> Vec<(Name, Name)> {
    // greedy: keep the variable itself when allowed, else the smallest free
    // candidate from the pool
    let mut used: BTreeSet<Name> = BTreeSet::new();
    let mut pairs = Vec::new();
    for x in vars {
        let pick = if pool.contains(x) && !keep_out.contains(x) && !used.contains(x) {
            x.clone()
        } else {
            pool.iter()
                .find(|c| !keep_out.contains(*c) && !used.contains(*c) && !vars.contains(c))
                .or_else(|| pool.iter().find(|c| !keep_out.contains(*c) && !used.contains(*c)))
                .cloned()
                .expect("enough fresh candidates by the counting argument")
        };
        used.insert(pick.clone());
        pairs.push((x.clone(), pick));
    }
    pairs
}

/// Substitution application of a rule instance: an instance of the same rule
/// whose conclusion is the conclusion under `theta` and whose premise `i` is
/// premise `i` under the returned `θ_i`. Each `θ_i` agrees with `theta` on the
/// conclusion's variables and sends the premise-only variables injectively to
/// variables of `X_i = FV(premise_i) ∪ FV(conclusion)` outside the image of
/// the conclusion, so it lies in the closure of `{theta}` over `X_i`.
pub fn subst_apply_rule(
    inst: &RuleInstance,
    theta: &Substitution,
    defs: &DefinitionSet,
) -> Result<(RuleInstance, Vec<Substitution>), RuleError> {
    let _ = defs;
    if matches!(inst.rule, Rule::Subst { .. }) {
        return Err(RuleError::RuleIsSubst);
    }
    if !theta.is_atomic() {
        return Err(RuleError::CompositeSubstitution(theta.clone()));
    }
    let conc_fv = inst.conclusion.free_vars();
    let conclusion = inst.conclusion.apply(theta);
    let conc_image: BTreeSet<Name> = conc_fv.iter().filter_map(|v| theta.image_of(v).as_var().cloned()).collect();

    let mut thetas = Vec::with_capacity(inst.premises.len());
    for prem in &inst.premises {
        let theta_i = if inst.rule.has_eigenvariables() {
            let prem_fv = prem.free_vars();
            let newcomers: Vec<Name> = prem_fv.difference(&conc_fv).cloned().collect();
            let pool: BTreeSet<Name> = conc_fv.union(&prem_fv).cloned().collect();
            let pairs = rename_fresh(&newcomers, &conc_image, &pool);
            theta.override_with(&pairs).expect("newcomers are distinct")
        } else {
            theta.clone()
        };
        thetas.push(theta_i);
    }
    let premises: Vec<Sequent> = inst.premises.iter().zip(&thetas).map(|(p, t)| p.apply(t)).collect();

    // a fresh name for eigenvariables that do not occur in their premise
    let mut spare = FreshNames::new("v", conclusion.names());
    let eigen = |y: &Name, k: usize, spare: &mut FreshNames| -> Name {
        if inst.premises[k].free_vars().contains(y) {
            thetas[k].image_of(y).as_var().cloned().expect("eigenvariables map to variables")
        } else if !conclusion.free_vars().contains(y) {
            y.clone()
        } else {
            spare.fresh()
        }
    };

    let rule = match &inst.rule {
        Rule::Axiom => Rule::Axiom,
        Rule::Wk => Rule::Wk,
        Rule::Subst { .. } => unreachable!(),
        Rule::Cut { formula } => Rule::Cut { formula: formula.apply(theta) },
        Rule::NotL { target } => Rule::NotL { target: target.apply(theta) },
        Rule::NotR { target } => Rule::NotR { target: target.apply(theta) },
        Rule::OrL { target } => Rule::OrL { target: target.apply(theta) },
        Rule::OrR { target } => Rule::OrR { target: target.apply(theta) },
        Rule::AndL { target } => Rule::AndL { target: target.apply(theta) },
        Rule::AndR { target } => Rule::AndR { target: target.apply(theta) },
        Rule::ImpL { target } => Rule::ImpL { target: target.apply(theta) },
        Rule::ImpR { target } => Rule::ImpR { target: target.apply(theta) },
        Rule::AllL { target, witness } => Rule::AllL { target: target.apply(theta), witness: witness.apply(theta) },
        Rule::ExR { target, witness } => Rule::ExR { target: target.apply(theta), witness: witness.apply(theta) },
        Rule::AllR { target, eigen: y } => Rule::AllR { target: target.apply(theta), eigen: eigen(y, 0, &mut spare) },
        Rule::ExL { target, eigen: y } => Rule::ExL { target: target.apply(theta), eigen: eigen(y, 0, &mut spare) },
        Rule::EqL { lhs, rhs, placeholders: (a, b), template } => {
            let mut avoid = theta.vars();
            avoid.extend(template.names());
            avoid.extend(conclusion.names());
            let clash = |p: &Name| theta.vars().contains(p);
            let mut gen = FreshNames::new("_p", avoid);
            let a2 = if clash(a) { gen.fresh() } else { a.clone() };
            let b2 = if clash(b) { gen.fresh() } else { b.clone() };
            let renamed = template.apply(&Substitution::from_pairs([
                (a.clone(), Term::Var(a2.clone())),
                (b.clone(), Term::Var(b2.clone())),
            ]));
            Rule::EqL {
                lhs: lhs.apply(theta),
                rhs: rhs.apply(theta),
                placeholders: (a2, b2),
                template: renamed.apply(theta),
            }
        }
        Rule::EqR { term } => Rule::EqR { term: term.apply(theta) },
        Rule::UL { target, fresh } => Rule::UL {
            target: target.apply(theta),
            fresh: fresh
                .iter()
                .enumerate()
                .map(|(k, ys)| ys.iter().map(|y| eigen(y, k, &mut spare)).collect())
                .collect(),
        },
        Rule::UR { target, production } => Rule::UR { target: target.apply(theta), production: *production },
        Rule::FreshL { var, term } => Rule::FreshL { var: eigen(var, 0, &mut spare), term: term.apply(&thetas[0]) },
        Rule::ULPrime { target } => Rule::ULPrime { target: target.apply(theta) },
    };
    Ok((RuleInstance::new(rule, conclusion, premises), thetas))
}

/// Whether every trace pair of `orig` reappears in `new` under the slot
/// correspondence induced by `theta` (conclusion) and `thetas` (premises),
/// with its progress flag.
pub fn pairs_preserved(
    orig: &RuleInstance,
    orig_map: &OccurrenceMap,
    new: &RuleInstance,
    new_map: &OccurrenceMap,
    theta: &Substitution,
    thetas: &[Substitution],
) -> bool {
    orig_map.per_premise.iter().enumerate().all(|(i, pairs)| {
        pairs.iter().all(|pair| {
            let c = new.conclusion.ant_slot(&orig.conclusion.antecedent()[pair.from].apply(theta));
            let p = new.premises[i].ant_slot(&orig.premises[i].antecedent()[pair.to].apply(&thetas[i]));
            match (c, p) {
                (Some(c), Some(p)) => new_map.contains(i, c, p, pair.progress),
                _ => false,
            }
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proofgraph::{validate, NodeKind};
    use crate::proofio::{parse_formula, parse_proof, parse_sequent};
    use crate::psc::{psc, ClosureInput};

    fn neo() -> crate::proofgraph::PreProof {
        parse_proof(include_str!("../corpus/neo.cpf")).unwrap()
    }

    fn seq(p: &crate::proofgraph::PreProof, s: &str) -> Sequent {
        parse_sequent(s, p.defs.signature()).unwrap()
    }

    fn fml(p: &crate::proofgraph::PreProof, s: &str) -> Formula {
        parse_formula(s, p.defs.signature()).unwrap()
    }

    #[test]
    fn left_unfolding_progresses_into_the_body() {
        let p = neo();
        let inst = p.instance(1).unwrap();
        let map = check_rule_instance(&inst, &p.defs, &p.rules).unwrap();
        assert!(map.premise(0).is_empty());
        let n_y = inst.premises[1].ant_slot(&fml(&p, "N(y)")).unwrap();
        assert_eq!(map.premise(1), &[TracePair { from: 0, to: n_y, progress: true }]);
    }

    #[test]
    fn implication_and_negation_right() {
        let p = neo();
        let imp = fml(&p, "N(x) -> E(x)");
        let inst = RuleInstance::new(
            Rule::ImpR { target: imp.clone() },
            Sequent::new([], [imp.clone()]),
            vec![seq(&p, "N(x) |- E(x)")],
        );
        check_rule_instance(&inst, &p.defs, &p.rules).unwrap();
        let wrong = RuleInstance::new(Rule::ImpR { target: imp.clone() }, Sequent::new([], [imp]), vec![seq(&p, "E(x) |- N(x)")]);
        assert!(check_rule_instance(&wrong, &p.defs, &p.rules).is_err());
        let neg = fml(&p, "~N(x)");
        let inst = RuleInstance::new(Rule::NotR { target: neg.clone() }, Sequent::new([], [neg]), vec![seq(&p, "N(x) |-")]);
        check_rule_instance(&inst, &p.defs, &p.rules).unwrap();
    }

    #[test]
    fn eigenvariable_must_be_fresh() {
        let p = neo();
        let all = fml(&p, "all z. N(z)");
        let c = Sequent::new([fml(&p, "N(y)")], [all.clone()]);
        let good = RuleInstance::new(
            Rule::AllR { target: all.clone(), eigen: Name::new("w") },
            c.clone(),
            vec![seq(&p, "N(y) |- N(w)")],
        );
        check_rule_instance(&good, &p.defs, &p.rules).unwrap();
        let bad = RuleInstance::new(Rule::AllR { target: all, eigen: Name::new("y") }, c, vec![seq(&p, "N(y) |- N(y)")]);
        assert!(matches!(check_rule_instance(&bad, &p.defs, &p.rules), Err(RuleError::MalformedInstance { .. })));
    }

    #[test]
    fn disabled_rules_are_refused() {
        let p = neo();
        let f = fml(&p, "N(x)");
        let inst = RuleInstance::new(
            Rule::Cut { formula: f.clone() },
            seq(&p, "N(x) |- N(x)"),
            vec![seq(&p, "N(x) |- N(x)"), seq(&p, "N(x) |- N(x)")],
        );
        check_rule_instance(&inst, &p.defs, &RuleSet::full()).unwrap();
        assert_eq!(check_rule_instance(&inst, &p.defs, &RuleSet::cutfree()), Err(RuleError::RuleDisabled(RuleId::Cut)));
    }

    #[test]
    fn case_distinctions_use_fresh_names() {
        let p = parse_proof(include_str!("../corpus/bot-cutfree.cpf")).unwrap();
        let s = seq(&p, "P(x) |- bot");
        let mut gen = FreshNames::new("y", []);
        let cases = build_case_distinctions(&s, &fml(&p, "P(x)"), &p.defs, &mut gen).unwrap();
        assert_eq!(cases, vec![seq(&p, "x = y1, P(s(y1)) |- bot")]);
    }

    #[test]
    fn substituting_into_unfolding_renames_eigenvariables() {
        let p = neo();
        let inst = p.instance(1).unwrap();
        let map = check_rule_instance(&inst, &p.defs, &p.rules).unwrap();
        let theta = Substitution::single("x", Term::var("y"));
        let (new, thetas) = subst_apply_rule(&inst, &theta, &p.defs).unwrap();
        assert_eq!(new.conclusion, seq(&p, "N(y) |- E(y), O(y)"));
        let new_map = check_rule_instance(&new, &p.defs, &p.rules).unwrap();
        assert!(pairs_preserved(&inst, &map, &new, &new_map, &theta, &thetas));
        for (i, t) in thetas.iter().enumerate() {
            let mut xs = inst.conclusion.free_vars();
            xs.extend(inst.premises[i].free_vars());
            assert!(psc(&ClosureInput::new([theta.clone()], xs)).unwrap().contains(t));
        }
        let Rule::UL { fresh, .. } = &new.rule else { panic!() };
        assert_ne!(fresh[1][0], Name::new("y"));
    }

    #[test]
    fn substitution_application_errors() {
        let p = neo();
        let sub = p.instance(7).unwrap();
        assert!(matches!(sub.rule, Rule::Subst { .. }));
        assert_eq!(subst_apply_rule(&sub, &Substitution::identity(), &p.defs).unwrap_err(), RuleError::RuleIsSubst);
        let comp = Substitution::single("x", Term::app("s", vec![Term::var("y")]));
        assert!(matches!(
            subst_apply_rule(&p.instance(0).unwrap(), &comp, &p.defs),
            Err(RuleError::CompositeSubstitution(_))
        ));
    }

    #[test]
    fn every_neo_instance_survives_every_small_substitution() {
        let p = neo();
        let vars = ["x", "y", "z"];
        let mut thetas = vec![Substitution::identity()];
        for a in vars {
            for b in vars {
                thetas.push(Substitution::single(a, Term::var(b)));
                thetas.push(Substitution::from_pairs([(Name::new(a), Term::var(b)), (Name::new(b), Term::var(a))]));
            }
            thetas.push(Substitution::single(a, Term::constant("0")));
        }
        for (id, node) in p.nodes().iter().enumerate() {
            if !matches!(node.kind, NodeKind::Inference { .. }) || matches!(p.rule(id), Some(Rule::Subst { .. })) {
                continue;
            }
            let inst = p.instance(id).unwrap();
            let map = check_rule_instance(&inst, &p.defs, &p.rules).unwrap();
            for theta in &thetas {
                let (new, ts) = subst_apply_rule(&inst, theta, &p.defs).unwrap();
                let new_map = check_rule_instance(&new, &p.defs, &p.rules)
                    .unwrap_or_else(|e| panic!("n{id} under {theta}: {e}"));
                assert!(pairs_preserved(&inst, &map, &new, &new_map, theta, &ts), "n{id} under {theta}");
            }
        }
        validate(&p).unwrap();
    }
}
