//! Elimination of the substitution rule from cyclic proofs.
//!
//! Composite substitutions are first rewritten into atomic ones with an
//! equational gadget. The atomic proof is then unfolded while every
//! substitution is pushed upwards into the rule instances above it; each
//! lifted node is a source node `f` together with an atomic substitution `σ`
//! (restricted to the free variables of `f`), and carries the sequent
//! `seq(f)σ`. The substitutions all live in a finite closure, so every branch
//! eventually meets a node whose `(f, σ)` repeats an ancestor; the deeper one
//! becomes a bud of the shallower one.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::calculus::{subst_apply_rule, Rule, RuleError, RuleId, RuleSet};
use crate::gtc::{check_gtc, GtcVerdict, TraceGraph, TraceRel};
use crate::proofgraph::{validate, validate_with, NodeId, NodeKind, PreProof, ProofError};
use crate::psc::{psc, psc_bound, ClosureInput};
use crate::syntax::{Formula, FreshNames, Name, Sequent, Substitution, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    /// Tie back at the first repeat while lifting.
    #[default]
    Eager,
    /// Lift to the full worst-case depth, then tie back.
    WorstCaseBound,
}

#[derive(Debug, Clone)]
pub struct ElimConfig {
    pub strategy: Strategy,
    /// Rule set of the output; the input's own rule set when `None`.
    pub rules: Option<RuleSet>,
    /// Depth limit for lifting; the worst-case bound when `None`.
    pub depth_cap: Option<usize>,
    /// Give up after generating this many lifted nodes.
    pub node_limit: usize,
    pub verify: bool,
}

impl Default for ElimConfig {
    fn default() -> Self {
        ElimConfig { strategy: Strategy::Eager, rules: None, depth_cap: None, node_limit: 1_000_000, verify: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ElimError {
    #[error("input proof is invalid: {0}")]
    InvalidInput(ProofError),
    #[error("composite substitutions need Cut, ExR, EqR, ExL, EqL and Wk, or FreshL, EqL and Wk")]
    RuleSetTooWeak,
    #[error("substitution {0} is composite")]
    CompositeSubstitution(Substitution),
    #[error("no repeat found within depth {0}")]
    DepthCapExceeded(usize),
    #[error("frontier node {0} has no repeating ancestor")]
    NoRepeatFound(NodeId),
    #[error("node n{0} starts a cycle of substitutions and buds only")]
    SubstCycle(NodeId),
    #[error("gave up after {0} lifted nodes")]
    NodeLimit(usize),
    #[error("rule application failed at source node n{node}: {source}")]
    Rule { node: NodeId, source: RuleError },
    #[error("output proof is invalid: {0}")]
    InvalidOutput(ProofError),
}

/// Where a lifted node comes from: the source node `f` (never a bud or a
/// substitution) and the substitution `σ` with `seq(node) = seq(f)σ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiftOrigin {
    pub source: NodeId,
    pub theta: Substitution,
    /// The premise substitution `θ_i` the parent passed down (identity at the
    /// root); together with the source path it determines the trace images.
    pub incoming: Substitution,
    pub depth: usize,
}

/// A lifted tree (frontier leaves open) or, after tie-back, a cyclic proof,
/// with the origin of every node.
#[derive(Debug, Clone)]
pub struct Lifted {
    pub proof: PreProof,
    pub origin: Vec<LiftOrigin>,
}

impl Lifted {
    /// The occurrence map `f`: output node to source node.
    pub fn fmap(&self) -> Vec<Option<NodeId>> {
        self.origin.iter().map(|o| Some(o.source)).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ElimStats {
    pub depth_reached: usize,
    /// Size of the substitution closure over the source's variables, when
    /// it was small enough to compute.
    pub closure_size: Option<usize>,
    pub closure_bound: u128,
    pub depth_bound: usize,
    pub nodes_generated: usize,
    pub buds: usize,
}

#[derive(Debug, Clone)]
pub struct ElimReport {
    pub output: PreProof,
    /// The atomic-substitution proof the lifting ran on.
    pub source: PreProof,
    pub origin: Vec<LiftOrigin>,
    pub fminus: Vec<Option<NodeId>>,
    pub stats: ElimStats,
    pub verification: Option<GtcVerdict>,
    /// Outcome of the trace-transport and occurrence-map checks.
    pub transport: Option<Result<(), String>>,
}

fn has_rules(rules: &RuleSet, ids: &[RuleId]) -> bool {
    ids.iter().all(|r| rules.contains(*r))
}

const CUT_GADGET: [RuleId; 6] = [RuleId::Cut, RuleId::ExR, RuleId::EqR, RuleId::ExL, RuleId::EqL, RuleId::Wk];
const FRESH_GADGET: [RuleId; 3] = [RuleId::FreshL, RuleId::EqL, RuleId::Wk];

fn all_names(proof: &PreProof) -> BTreeSet<Name> {
    let mut names = BTreeSet::new();
    for n in proof.nodes() {
        names.extend(n.sequent.names());
        if let NodeKind::Inference { rule, .. } = &n.kind {
            match rule {
                Rule::Subst { subst } => names.extend(subst.vars()),
                Rule::EqL { placeholders: (a, b), template, .. } => {
                    names.insert(a.clone());
                    names.insert(b.clone());
                    names.extend(template.names());
                }
                Rule::UL { fresh, .. } => names.extend(fresh.iter().flatten().cloned()),
                Rule::AllR { eigen, .. } | Rule::ExL { eigen, .. } => {
                    names.insert(eigen.clone());
                }
                Rule::FreshL { var, .. } => {
                    names.insert(var.clone());
                }
                _ => {}
            }
        }
    }
    names
}

/// Replaces every substitution node with composite bindings by an equational
/// gadget ending in an atomic substitution. Proofs without composite
/// substitutions are returned unchanged.
pub fn eliminate_composite(pre: &PreProof, rules: &RuleSet) -> Result<PreProof, ElimError> {
    let composite: Vec<NodeId> = (0..pre.len())
        .filter(|&i| matches!(pre.rule(i), Some(Rule::Subst { subst }) if !subst.is_atomic()))
        .collect();
    if composite.is_empty() {
        return Ok(pre.clone());
    }
    let use_fresh = if has_rules(rules, &FRESH_GADGET) {
        true
    } else if has_rules(rules, &CUT_GADGET) {
        false
    } else {
        return Err(ElimError::RuleSetTooWeak);
    };

    let avoid = all_names(pre);
    let mut ys = FreshNames::new("y", avoid.iter().cloned());
    let mut holes = FreshNames::new("h", avoid);
    let mut out = PreProof::new(pre.defs.clone(), rules.clone());
    for n in pre.nodes() {
        out.push(n.sequent.clone(), NodeKind::Open);
    }
    for (i, n) in pre.nodes().iter().enumerate() {
        match (&n.kind, pre.rule(i)) {
            (NodeKind::Inference { premises, .. }, Some(Rule::Subst { subst })) if !subst.is_atomic() => {
                build_gadget(&mut out, i, subst, &pre.node(premises[0]).sequent, premises[0], use_fresh, &mut ys, &mut holes);
            }
            (kind, _) => out.node_mut(i).kind = kind.clone(),
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn build_gadget(
    out: &mut PreProof,
    at: NodeId,
    theta: &Substitution,
    premise: &Sequent,
    premise_id: NodeId,
    use_fresh: bool,
    ys: &mut FreshNames,
    holes: &mut FreshNames,
) {
    let bindings: Vec<(Name, Term)> = theta.iter().filter(|(_, t)| !t.is_atomic()).map(|(x, t)| (x.clone(), t.clone())).collect();
    let fresh: Vec<Name> = bindings.iter().map(|_| ys.fresh()).collect();
    let (a, b) = (holes.fresh(), holes.fresh());
    let sigma = Substitution::from_pairs(
        theta
            .iter()
            .map(|(x, t)| match bindings.iter().position(|(z, _)| z == x) {
                Some(k) => (x.clone(), Term::Var(fresh[k].clone())),
                None => (x.clone(), t.clone()),
            }),
    );
    let eqs: Vec<Formula> =
        bindings.iter().zip(&fresh).map(|((_, t), y)| Formula::Eq(Term::Var(y.clone()), t.clone())).collect();
    let exs: Vec<Formula> = if use_fresh {
        Vec::new()
    } else {
        bindings.iter().zip(&fresh).map(|((_, t), y)| Formula::exists(y, Formula::Eq(Term::Var(y.clone()), t.clone()))).collect()
    };

    let conclusion = out.node(at).sequent.clone();
    let mut cur_id = at;
    let mut cur = conclusion.clone();
    let step = |out: &mut PreProof, cur_id: &mut NodeId, cur: &mut Sequent, rule: Rule, side: Option<Sequent>, next: Sequent| {
        let mut premises = Vec::new();
        if let Some(s) = side {
            premises.push(out.push(s, NodeKind::Open));
        }
        let id = out.push(next.clone(), NodeKind::Open);
        premises.push(id);
        out.node_mut(*cur_id).kind = NodeKind::Inference { rule, premises };
        *cur_id = id;
        *cur = next;
    };

    if use_fresh {
        for (k, (_, t)) in bindings.iter().enumerate() {
            let next = Sequent::new(cur.antecedent().iter().cloned().chain([eqs[k].clone()]), cur.succedent().iter().cloned());
            step(out, &mut cur_id, &mut cur, Rule::FreshL { var: fresh[k].clone(), term: t.clone() }, None, next);
        }
    } else {
        for (k, (_, t)) in bindings.iter().enumerate() {
            let ex = &exs[k];
            let left = Sequent::new(cur.antecedent().iter().cloned(), cur.succedent().iter().cloned().chain([ex.clone()]));
            let right = Sequent::new(cur.antecedent().iter().cloned().chain([ex.clone()]), cur.succedent().iter().cloned());
            step(out, &mut cur_id, &mut cur, Rule::Cut { formula: ex.clone() }, Some(left.clone()), right);
            // the left premise is the node pushed just before `cur_id`
            let left_id = cur_id - 1;
            let refl = Formula::Eq(t.clone(), t.clone());
            let witnessed = Sequent::new(
                left.antecedent().iter().cloned(),
                left.succedent().iter().filter(|f| *f != ex).cloned().chain([refl]),
            );
            let w = out.push(witnessed, NodeKind::Inference { rule: Rule::EqR { term: t.clone() }, premises: vec![] });
            out.node_mut(left_id).kind =
                NodeKind::Inference { rule: Rule::ExR { target: ex.clone(), witness: t.clone() }, premises: vec![w] };
        }
        for (k, ex) in exs.iter().enumerate() {
            // the existential stays: it may coincide with another one or with
            // a formula of the conclusion; weakening removes it at the end
            let next = Sequent::new(cur.antecedent().iter().cloned().chain([eqs[k].clone()]), cur.succedent().iter().cloned());
            step(out, &mut cur_id, &mut cur, Rule::ExL { target: ex.clone(), eigen: fresh[k].clone() }, None, next);
        }
    }

    let extras: Vec<Formula> = exs.iter().chain(&eqs).cloned().collect();
    for k in 0..bindings.len() {
        let tau = Substitution::from_pairs(theta.iter().map(|(x, t)| {
            let image = match bindings.iter().position(|(z, _)| z == x) {
                Some(j) if j < k => Term::Var(fresh[j].clone()),
                Some(j) if j == k => Term::Var(b.clone()),
                _ => t.clone(),
            };
            (x.clone(), image)
        }));
        let template = Sequent::new(
            premise.antecedent().iter().map(|f| f.apply(&tau)).chain(extras.iter().cloned()),
            premise.succedent().iter().map(|f| f.apply(&tau)),
        );
        let y = Term::Var(fresh[k].clone());
        let t = bindings[k].1.clone();
        let next = template.apply(&Substitution::from_pairs([(a.clone(), t.clone()), (b.clone(), y.clone())]));
        step(
            out,
            &mut cur_id,
            &mut cur,
            Rule::EqL { lhs: y, rhs: t, placeholders: (a.clone(), b.clone()), template },
            None,
            next,
        );
    }
    let target = premise.apply(&sigma);
    step(out, &mut cur_id, &mut cur, Rule::Wk, None, target);
    out.node_mut(cur_id).kind = NodeKind::Inference { rule: Rule::Subst { subst: sigma }, premises: vec![premise_id] };
}

/// Lifting machinery over an atomic-substitution source proof.
struct Lifter<'a> {
    src: &'a PreProof,
}

struct Child {
    source: NodeId,
    theta: Substitution,
    incoming: Substitution,
    sequent: Sequent,
}

impl<'a> Lifter<'a> {
    /// Follows buds and substitution nodes from `q`, composing the
    /// substitutions, until an ordinary inference node is reached.
    fn normalize(&self, mut q: NodeId, mut tau: Substitution) -> Result<(NodeId, Substitution), ElimError> {
        let start = q;
        let mut seen = BTreeSet::new();
        loop {
            if !seen.insert(q) {
                return Err(ElimError::SubstCycle(start));
            }
            match &self.src.node(q).kind {
                NodeKind::Bud { companion } => q = *companion,
                NodeKind::Inference { rule: Rule::Subst { subst }, premises } => {
                    if !subst.is_atomic() {
                        return Err(ElimError::CompositeSubstitution(subst.clone()));
                    }
                    tau = subst.compose(&tau);
                    q = premises[0];
                }
                NodeKind::Inference { .. } => {
                    let fv = self.src.node(q).sequent.free_vars();
                    return Ok((q, tau.restrict(&fv)));
                }
                NodeKind::Open => return Err(ElimError::InvalidInput(ProofError::OpenLeaf(q))),
            }
        }
    }

    fn root(&self) -> Result<LiftOrigin, ElimError> {
        let (source, theta) = self.normalize(self.src.root(), Substitution::identity())?;
        Ok(LiftOrigin { source, theta, incoming: Substitution::identity(), depth: 0 })
    }

    fn sequent(&self, o: &LiftOrigin) -> Sequent {
        self.src.node(o.source).sequent.apply(&o.theta)
    }

    fn expand(&self, o: &LiftOrigin) -> Result<(Rule, Vec<Child>), ElimError> {
        let inst = self.src.instance(o.source).expect("lifted nodes are inference nodes");
        let (new, thetas) =
            subst_apply_rule(&inst, &o.theta, &self.src.defs).map_err(|source| ElimError::Rule { node: o.source, source })?;
        let mut kids = Vec::with_capacity(thetas.len());
        for (k, &q) in self.src.premises(o.source).iter().enumerate() {
            let (source, theta) = self.normalize(q, thetas[k].clone())?;
            let sequent = self.src.node(source).sequent.apply(&theta);
            debug_assert_eq!(sequent, new.premises[k]);
            kids.push(Child { source, theta, incoming: thetas[k].clone(), sequent });
        }
        Ok((new.rule, kids))
    }
}

fn check_atomic_source(src: &PreProof) -> Result<(), ElimError> {
    for i in 0..src.len() {
        if let Some(Rule::Subst { subst }) = src.rule(i) {
            if !subst.is_atomic() {
                return Err(ElimError::CompositeSubstitution(subst.clone()));
            }
        }
    }
    Ok(())
}

/// Materializes the lifted unfolding of `src` down to depth `d`: no node
/// carries a substitution rule, frontier leaves at depth `d` are open.
pub fn lift_to_depth(src: &PreProof, d: usize) -> Result<Lifted, ElimError> {
    lift_limited(src, d, usize::MAX)
}

fn lift_limited(src: &PreProof, d: usize, node_limit: usize) -> Result<Lifted, ElimError> {
    check_atomic_source(src)?;
    let lifter = Lifter { src };
    let root = lifter.root()?;
    let mut proof = PreProof::new(src.defs.clone(), src.rules.clone());
    proof.push(lifter.sequent(&root), NodeKind::Open);
    let mut origin = vec![root];
    let mut i = 0;
    while i < proof.len() {
        let o = origin[i].clone();
        let leaf = src.premises(o.source).is_empty();
        if o.depth < d || leaf {
            let (rule, kids) = lifter.expand(&o)?;
            let mut ids = Vec::with_capacity(kids.len());
            for c in kids {
                ids.push(proof.push(c.sequent, NodeKind::Open));
                origin.push(LiftOrigin { source: c.source, theta: c.theta, incoming: c.incoming, depth: o.depth + 1 });
            }
            if proof.len() > node_limit {
                return Err(ElimError::NodeLimit(node_limit));
            }
            proof.node_mut(i).kind = NodeKind::Inference { rule, premises: ids };
        }
        i += 1;
    }
    Ok(Lifted { proof, origin })
}

fn same_key(a: &LiftOrigin, b: &LiftOrigin) -> bool {
    a.source == b.source && a.theta == b.theta
}

/// Turns a lifted tree into a cyclic proof: on every branch the first node
/// whose `(f, σ)` repeats an ancestor becomes a bud of that ancestor, and
/// everything above it is dropped.
pub fn tie_back(tree: &Lifted) -> Result<Lifted, ElimError> {
    let t = &tree.proof;
    let mut proof = PreProof::new(t.defs.clone(), t.rules.clone());
    let mut origin = Vec::new();
    if t.is_empty() {
        return Ok(Lifted { proof, origin });
    }
    // (tree node, new parent, premise slot in the parent, ancestors in the new proof)
    let mut parent_new: Vec<Option<NodeId>> = Vec::new();
    let mut stack: Vec<(NodeId, Option<(NodeId, usize)>)> = vec![(t.root(), None)];
    while let Some((v, attach)) = stack.pop() {
        let o = &tree.origin[v];
        let id = proof.push(t.node(v).sequent.clone(), NodeKind::Open);
        origin.push(o.clone());
        parent_new.push(attach.map(|(p, _)| p));
        if let Some((p, k)) = attach {
            if let NodeKind::Inference { premises, .. } = &mut proof.node_mut(p).kind {
                premises[k] = id;
            }
        }
        // shallowest ancestor with the same key
        let mut companion = None;
        let mut a = parent_new[id];
        while let Some(anc) = a {
            if same_key(&origin[anc], o) {
                companion = Some(anc);
            }
            a = parent_new[anc];
        }
        if let Some(c) = companion {
            proof.node_mut(id).kind = NodeKind::Bud { companion: c };
            continue;
        }
        match &t.node(v).kind {
            NodeKind::Inference { rule, premises } => {
                proof.node_mut(id).kind = NodeKind::Inference { rule: rule.clone(), premises: vec![usize::MAX; premises.len()] };
                for (k, &p) in premises.iter().enumerate().rev() {
                    stack.push((p, Some((id, k))));
                }
            }
            NodeKind::Open => return Err(ElimError::NoRepeatFound(v)),
            NodeKind::Bud { .. } => unreachable!("lifted trees have no buds"),
        }
    }
    Ok(Lifted { proof, origin })
}

/// Lifting with tie-back on the fly: depth-first, each new node is compared
/// with its ancestors before it is expanded.
fn eager(src: &PreProof, cap: usize, node_limit: usize) -> Result<Lifted, ElimError> {
    check_atomic_source(src)?;
    let lifter = Lifter { src };
    let root = lifter.root()?;
    let mut proof = PreProof::new(src.defs.clone(), src.rules.clone());
    proof.push(lifter.sequent(&root), NodeKind::Open);
    let mut origin = vec![root];
    let mut parent: Vec<Option<NodeId>> = vec![None];
    let mut stack = vec![0];
    while let Some(v) = stack.pop() {
        let o = origin[v].clone();
        let mut a = parent[v];
        let mut companion = None;
        while let Some(anc) = a {
            if same_key(&origin[anc], &o) {
                companion = Some(anc);
            }
            a = parent[anc];
        }
        if let Some(c) = companion {
            proof.node_mut(v).kind = NodeKind::Bud { companion: c };
            continue;
        }
        if o.depth >= cap && !src.premises(o.source).is_empty() {
            return Err(ElimError::DepthCapExceeded(cap));
        }
        let (rule, kids) = lifter.expand(&o)?;
        let mut ids = Vec::with_capacity(kids.len());
        for c in kids {
            let id = proof.push(c.sequent, NodeKind::Open);
            origin.push(LiftOrigin { source: c.source, theta: c.theta, incoming: c.incoming, depth: o.depth + 1 });
            parent.push(Some(v));
            ids.push(id);
        }
        if proof.len() > node_limit {
            return Err(ElimError::NodeLimit(node_limit));
        }
        stack.extend(ids.iter().rev());
        proof.node_mut(v).kind = NodeKind::Inference { rule, premises: ids };
    }
    Ok(preorder(Lifted { proof, origin }))
}

/// Renumbers nodes in depth-first preorder, premises left to right.
fn preorder(l: Lifted) -> Lifted {
    let n = l.proof.len();
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![l.proof.root()];
    while let Some(v) = stack.pop() {
        order.push(v);
        stack.extend(l.proof.premises(v).iter().rev());
    }
    let mut new_id = vec![0; n];
    for (i, &v) in order.iter().enumerate() {
        new_id[v] = i;
    }
    let mut proof = PreProof::new(l.proof.defs.clone(), l.proof.rules.clone());
    let mut origin = Vec::with_capacity(n);
    for &v in &order {
        let node = l.proof.node(v);
        let kind = match &node.kind {
            NodeKind::Inference { rule, premises } => {
                NodeKind::Inference { rule: rule.clone(), premises: premises.iter().map(|&p| new_id[p]).collect() }
            }
            NodeKind::Bud { companion } => NodeKind::Bud { companion: new_id[*companion] },
            NodeKind::Open => NodeKind::Open,
        };
        proof.push(node.sequent.clone(), kind);
        origin.push(l.origin[v].clone());
    }
    Lifted { proof, origin }
}

/// Substitutions of the source and the variables they range over.
fn closure_input(src: &PreProof) -> ClosureInput {
    let base = (0..src.len()).filter_map(|i| match src.rule(i) {
        Some(Rule::Subst { subst }) => Some(subst.clone()),
        _ => None,
    });
    let vars = src.nodes().iter().flat_map(|n| n.sequent.free_vars());
    ClosureInput::new(base, vars)
}

const CLOSURE_LIMIT: u128 = 100_000;

/// Closure size (if computed), closure bound and the worst-case depth
/// `(m+1)·n + 1`, where `m` counts the ordinary inference nodes and `n` the
/// closure size (its bound when too large to compute).
fn depth_bound(src: &PreProof) -> (Option<usize>, u128, usize) {
    let input = closure_input(src);
    let bound = psc_bound(&input).unwrap_or(u128::MAX);
    let size = if bound <= CLOSURE_LIMIT { psc(&input).ok().map(|c| c.len()) } else { None };
    let n = size.map_or(bound, |s| s as u128).max(1);
    let m = (0..src.len()).filter(|&i| matches!(src.rule(i), Some(r) if r.id() != RuleId::Subst)).count() as u128;
    let d = (m + 1).saturating_mul(n).saturating_add(1);
    (size, bound, usize::try_from(d).unwrap_or(usize::MAX))
}

/// Removes every substitution node from a valid cyclic proof.
pub fn eliminate_subst(pre: &PreProof, cfg: &ElimConfig) -> Result<ElimReport, ElimError> {
    validate(pre).map_err(ElimError::InvalidInput)?;
    let rules = cfg.rules.clone().unwrap_or_else(|| pre.rules.clone());
    if !pre.uses_subst() {
        let fminus = (0..pre.len()).map(Some).collect();
        let origin = (0..pre.len())
            .map(|i| LiftOrigin {
                source: i,
                theta: Substitution::identity(),
                incoming: Substitution::identity(),
                depth: pre.depths()[i],
            })
            .collect();
        let verification = if cfg.verify { Some(check_gtc(pre).map_err(ElimError::InvalidOutput)?) } else { None };
        return Ok(ElimReport {
            output: pre.clone(),
            source: pre.clone(),
            origin,
            fminus,
            stats: ElimStats::default(),
            verification,
            transport: cfg.verify.then_some(Ok(())),
        });
    }
    let mut src = eliminate_composite(pre, &rules)?;
    src.rules = rules.clone();
    validate(&src).map_err(ElimError::InvalidInput)?;

    let (closure_size, closure_bound, bound) = depth_bound(&src);
    let d = cfg.depth_cap.unwrap_or(bound);
    let lifted = match cfg.strategy {
        Strategy::Eager => eager(&src, d, cfg.node_limit)?,
        Strategy::WorstCaseBound => {
            let tree = lift_limited(&src, d, cfg.node_limit)?;
            let generated = tree.proof.len();
            let mut tied = tie_back(&tree)?;
            tied.proof.rules = rules.clone();
            return finish(tied, src, cfg, ElimStats { closure_size, closure_bound, depth_bound: d, nodes_generated: generated, ..Default::default() });
        }
    };
    let generated = lifted.proof.len();
    let mut lifted = lifted;
    lifted.proof.rules = rules;
    finish(lifted, src, cfg, ElimStats { closure_size, closure_bound, depth_bound: d, nodes_generated: generated, ..Default::default() })
}

fn finish(lifted: Lifted, src: PreProof, cfg: &ElimConfig, mut stats: ElimStats) -> Result<ElimReport, ElimError> {
    stats.depth_reached = lifted.origin.iter().map(|o| o.depth).max().unwrap_or(0);
    stats.buds = lifted.proof.buds().count();
    let fminus = lifted.fmap();
    let (verification, transport) = if cfg.verify {
        let verdict = check_gtc(&lifted.proof).map_err(ElimError::InvalidOutput)?;
        (Some(verdict), Some(check_transport(&src, &lifted)))
    } else {
        (None, None)
    };
    Ok(ElimReport { output: lifted.proof, source: src, origin: lifted.origin, fminus, stats, verification, transport })
}

/// Source nodes between two lifted nodes joined by premise `k`: the premise
/// of the parent's source node, then through buds and substitution nodes.
fn source_segment(src: &PreProof, from: NodeId, k: usize) -> Vec<NodeId> {
    let mut path = vec![from];
    let mut q = src.premises(from)[k];
    loop {
        path.push(q);
        match &src.node(q).kind {
            NodeKind::Bud { companion } => q = *companion,
            NodeKind::Inference { rule: Rule::Subst { .. }, premises } => q = premises[0],
            _ => return path,
        }
        if path.len() > src.len() + 1 {
            return path;
        }
    }
}

/// The source path corresponding to a path of the output (given as output
/// node ids along premise and bud edges).
pub fn corresponding_path(report: &ElimReport, path: &[NodeId]) -> Vec<NodeId> {
    corresponding(&report.source, &report.output, &report.origin, path)
}

fn corresponding(src: &PreProof, out: &PreProof, origin: &[LiftOrigin], path: &[NodeId]) -> Vec<NodeId> {
    let Some(&first) = path.first() else { return Vec::new() };
    let mut result = vec![origin[first].source];
    for w in path.windows(2) {
        let (u, v) = (w[0], w[1]);
        if let Some(k) = out.premises(u).iter().position(|&p| p == v) {
            result.extend_from_slice(&source_segment(src, origin[u].source, k)[1..]);
        }
        // a bud edge joins two lifted nodes with the same source node
    }
    result
}

/// Output slot of source slot `s` at a lifted node.
fn slot_image(src: &PreProof, out: &PreProof, origin: &[LiftOrigin], node: NodeId, s: usize) -> Option<usize> {
    let o = &origin[node];
    let phi = src.node(o.source).sequent.antecedent()[s].apply(&o.theta);
    out.node(node).sequent.ant_slot(&phi)
}

fn contains_image(
    src: &PreProof,
    out: &PreProof,
    origin: &[LiftOrigin],
    (u, v): (NodeId, NodeId),
    src_rel: &TraceRel,
    out_rel: &TraceRel,
) -> Result<(), String> {
    for a in 0..src_rel.rows() {
        for b in 0..src_rel.cols() {
            let x = src_rel.get(a, b);
            if x == 0 {
                continue;
            }
            let ia = slot_image(src, out, origin, u, a).ok_or("source slot has no image")?;
            let ib = slot_image(src, out, origin, v, b).ok_or("source slot has no image")?;
            if out_rel.get(ia, ib) < x {
                return Err(format!("trace ({a},{b}) of the source is lost between n{u} and n{v}"));
            }
        }
    }
    Ok(())
}

fn idempotent_power(r: &TraceRel) -> TraceRel {
    let mut p = r.clone();
    for _ in 0..=r.rows() * r.rows() * 3 {
        if p.is_idempotent() {
            break;
        }
        p = p.compose(r);
    }
    p
}

/// Checks the occurrence-map laws and trace transport of a lifted proof:
/// every node is its source sequent under a closure substitution, buds share
/// the source of their companion, every source trace along each edge
/// reappears (with progress) on the output edge, and every output cycle
/// progresses whenever its corresponding source cycle does.
pub fn check_transport(src: &PreProof, lifted: &Lifted) -> Result<(), String> {
    let out = &lifted.proof;
    let origin = &lifted.origin;
    let src_table = validate(src).map_err(|e| e.to_string())?;
    let out_table = validate_with(out, true).map_err(|e| e.to_string())?;
    let src_graph = TraceGraph::from_proof(src, &src_table);
    let out_graph = TraceGraph::from_proof(out, &out_table);

    let input = closure_input(src);
    let closure = if psc_bound(&input).map_err(|e| e.to_string())? <= CLOSURE_LIMIT {
        Some(psc(&input).map_err(|e| e.to_string())?)
    } else {
        None
    };
    for (i, o) in origin.iter().enumerate() {
        if src.node(o.source).sequent.apply(&o.theta) != out.node(i).sequent {
            return Err(format!("n{i} is not its source sequent under its substitution"));
        }
        if let Some(c) = &closure {
            if !o.theta.is_identity() && !c.contains(&o.theta) {
                return Err(format!("substitution {} of n{i} is outside the closure", o.theta));
            }
        }
    }
    if origin.first().map(|o| o.source) != Some(first_ordinary(src)) {
        return Err("root does not map to the source root".into());
    }
    for (b, c) in out.buds() {
        if origin[b].source != origin[c].source {
            return Err(format!("bud n{b} and companion n{c} have different sources"));
        }
    }
    for e in &out_table.edges {
        let Some(k) = e.premise else { continue };
        let seg = source_segment(src, origin[e.from].source, k);
        let src_rel = src_graph.path_relation(&seg).ok_or("source segment is not a path")?;
        let out_rel = out_graph.path_relation(&[e.from, e.to]).ok_or("output edge missing")?;
        contains_image(src, out, origin, (e.from, e.to), &src_rel, &out_rel)?;
    }
    for (b, c) in out.buds() {
        let mut cycle = out.tree_path(c, b).ok_or_else(|| format!("companion n{c} is not an ancestor of bud n{b}"))?;
        cycle.push(c);
        let corr = corresponding(src, out, origin, &cycle);
        let src_rel = src_graph.path_relation(&corr).ok_or("corresponding path is not a source path")?;
        let out_rel = out_graph.path_relation(&cycle).ok_or("output cycle is not a path")?;
        contains_image(src, out, origin, (c, c), &src_rel, &out_rel)?;
        if idempotent_power(&src_rel).progressing_diagonal().is_some()
            && idempotent_power(&out_rel).progressing_diagonal().is_none()
        {
            return Err(format!("cycle at n{c} loses its progress"));
        }
    }
    Ok(())
}

/// The first ordinary inference node below the source root.
fn first_ordinary(src: &PreProof) -> NodeId {
    Lifter { src }.root().map(|o| o.source).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proofio::parse_proof;

    fn corpus(name: &str) -> PreProof {
        let src = std::fs::read_to_string(format!("{}/corpus/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap();
        parse_proof(&src).unwrap()
    }

    fn rule_ids(p: &PreProof) -> BTreeSet<RuleId> {
        (0..p.len()).filter_map(|i| p.rule(i).map(Rule::id)).collect()
    }

    #[test]
    fn neo_loses_its_substitution() {
        let p = corpus("neo.cpf");
        let r = eliminate_subst(&p, &ElimConfig::default()).unwrap();
        assert!(!r.output.uses_subst());
        validate(&r.output).unwrap();
        assert!(r.verification.as_ref().unwrap().holds());
        assert_eq!(r.transport, Some(Ok(())));
        assert_eq!(r.output.node(0).sequent, p.node(0).sequent);
        assert!(rule_ids(&r.output).is_subset(&rule_ids(&p)));
        assert!(r.stats.buds >= 1);
        for (b, c) in r.output.buds() {
            assert_eq!(r.fminus[b], r.fminus[c]);
        }
    }

    #[test]
    fn strategies_agree_on_neo() {
        let p = corpus("neo.cpf");
        let eager = eliminate_subst(&p, &ElimConfig::default()).unwrap();
        let cfg = ElimConfig { strategy: Strategy::WorstCaseBound, ..Default::default() };
        let bound = eliminate_subst(&p, &cfg).unwrap();
        assert!(bound.verification.unwrap().holds());
        assert_eq!(crate::proofio::print_proof(&eager.output), crate::proofio::print_proof(&bound.output));
    }

    #[test]
    fn composite_gadget_shapes() {
        let p = corpus("composite-neo.cpf");
        for preset in ["full", "freshl"] {
            let rules = RuleSet::preset(preset).unwrap();
            let atomic = eliminate_composite(&p, &rules).unwrap();
            validate(&atomic).unwrap();
            for i in 0..atomic.len() {
                if let Some(Rule::Subst { subst }) = atomic.rule(i) {
                    assert!(subst.is_atomic(), "{preset}: {subst}");
                }
            }
            for n in p.nodes() {
                assert!(atomic.nodes().iter().any(|m| m.sequent == n.sequent));
            }
            let cfg = ElimConfig { rules: Some(rules), ..Default::default() };
            let r = eliminate_subst(&p, &cfg).unwrap();
            assert!(!r.output.uses_subst());
            assert!(r.verification.unwrap().holds());
            assert_eq!(r.transport, Some(Ok(())));
        }
        let full = eliminate_composite(&p, &RuleSet::full()).unwrap();
        assert_eq!(full.rule(0).map(Rule::id), Some(RuleId::Cut));
        let cutfree = RuleSet::preset("cutfree").unwrap();
        assert_eq!(eliminate_composite(&p, &cutfree).unwrap_err(), ElimError::RuleSetTooWeak);
    }

    #[test]
    fn ulprime_loop_is_refused() {
        let p = corpus("ulprime-bot.cpf");
        assert_eq!(eliminate_subst(&p, &ElimConfig::default()).unwrap_err(), ElimError::RuleSetTooWeak);
    }

    #[test]
    fn subst_free_input_is_unchanged() {
        let p = corpus("bot-cutfree.cpf");
        let r = eliminate_subst(&p, &ElimConfig::default()).unwrap();
        assert_eq!(crate::proofio::print_proof(&r.output), crate::proofio::print_proof(&p));
        assert_eq!(r.stats.nodes_generated, 0);
    }

    #[test]
    fn lifting_has_no_substitutions() {
        let p = corpus("neo.cpf");
        let t = lift_to_depth(&p, 10).unwrap();
        assert!(!t.proof.uses_subst());
        validate_with(&t.proof, true).unwrap();
        for (i, o) in t.origin.iter().enumerate() {
            assert_eq!(p.node(o.source).sequent.apply(&o.theta), t.proof.node(i).sequent);
        }
        let tied = tie_back(&t).unwrap();
        validate(&tied.proof).unwrap();
        assert_eq!(tie_back(&lift_to_depth(&p, 2).unwrap()).unwrap_err(), ElimError::NoRepeatFound(2));
    }

    #[test]
    fn upper_unfolding_reuses_x() {
        let p = corpus("neo.cpf");
        let r = eliminate_subst(&p, &ElimConfig::default()).unwrap();
        let fresh: Vec<_> = (0..r.output.len())
            .filter_map(|i| match r.output.rule(i) {
                Some(Rule::UL { fresh, .. }) => Some(fresh[1][0].to_string()),
                _ => None,
            })
            .collect();
        assert_eq!(fresh, ["y", "x"]);
        let root = lift_to_depth(&p, 0).unwrap();
        assert_eq!(root.proof.len(), 1);
        assert_eq!(root.fmap(), [Some(0)]);
    }

    #[test]
    fn tiny_cap_is_reported() {
        let p = corpus("neo.cpf");
        let cfg = ElimConfig { depth_cap: Some(2), ..Default::default() };
        assert_eq!(eliminate_subst(&p, &cfg).unwrap_err(), ElimError::DepthCapExceeded(2));
    }
}
