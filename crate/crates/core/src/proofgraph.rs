//! Finite pre-proofs (derivation trees with back-links), their validation and
//! their lazy unfolding into infinite trees.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::calculus::{check_rule_instance, OccurrenceMap, Rule, RuleError, RuleInstance, RuleSet, TracePair};
use crate::syntax::{DefinitionSet, Sequent};

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    Inference { rule: Rule, premises: Vec<NodeId> },
    Bud { companion: NodeId },
    /// An unjustified leaf. Only allowed in partial proofs.
    Open,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub sequent: Sequent,
    pub kind: NodeKind,
}

/// A pre-proof rooted at node 0, with the definitions and rule set it lives in.
#[derive(Debug, Clone)]
pub struct PreProof {
    pub defs: DefinitionSet,
    pub rules: RuleSet,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProofError {
    #[error("the proof has no nodes")]
    Empty,
    #[error("node n{node}: {source}")]
    InvalidRule { node: NodeId, source: RuleError },
    #[error("bud n{bud} and companion n{companion} carry different sequents")]
    BudMismatch { bud: NodeId, companion: NodeId },
    #[error("bud n{bud} points at n{companion}, which is not an inference node")]
    DanglingCompanion { bud: NodeId, companion: NodeId },
    #[error("node n{0} is an open leaf")]
    OpenLeaf(NodeId),
    #[error("not a tree: {0}")]
    NotATree(String),
}

impl PreProof {
    pub fn new(defs: DefinitionSet, rules: RuleSet) -> Self {
        PreProof { defs, rules, nodes: Vec::new() }
    }

    pub fn push(&mut self, sequent: Sequent, kind: NodeKind) -> NodeId {
        self.nodes.push(Node { sequent, kind });
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut Node {
        &mut self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn premises(&self, id: NodeId) -> &[NodeId] {
        match &self.nodes[id].kind {
            NodeKind::Inference { premises, .. } => premises,
            _ => &[],
        }
    }

    pub fn rule(&self, id: NodeId) -> Option<&Rule> {
        match &self.nodes[id].kind {
            NodeKind::Inference { rule, .. } => Some(rule),
            _ => None,
        }
    }

    /// Follows a bud to its companion; other nodes map to themselves.
    pub fn resolve(&self, id: NodeId) -> NodeId {
        match self.nodes[id].kind {
            NodeKind::Bud { companion } => companion,
            _ => id,
        }
    }

    pub fn buds(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match n.kind {
            NodeKind::Bud { companion } => Some((i, companion)),
            _ => None,
        })
    }

    pub fn uses_subst(&self) -> bool {
        self.nodes.iter().any(|n| matches!(n.kind, NodeKind::Inference { rule: Rule::Subst { .. }, .. }))
    }

    pub fn instance(&self, id: NodeId) -> Option<RuleInstance> {
        match &self.nodes[id].kind {
            NodeKind::Inference { rule, premises } => Some(RuleInstance::new(
                rule.clone(),
                self.nodes[id].sequent.clone(),
                premises.iter().map(|&p| self.nodes[p].sequent.clone()).collect(),
            )),
            _ => None,
        }
    }

    /// Tree parent of every node (`None` for the root).
    pub fn parents(&self) -> Vec<Option<NodeId>> {
        let mut parent = vec![None; self.nodes.len()];
        for (i, _) in self.nodes.iter().enumerate() {
            for &p in self.premises(i) {
                if p < parent.len() {
                    parent[p] = Some(i);
                }
            }
        }
        parent
    }

    /// Tree depth of every node, root at 0.
    pub fn depths(&self) -> Vec<usize> {
        let mut depth = vec![0; self.nodes.len()];
        let mut stack = vec![self.root()];
        while let Some(n) = stack.pop() {
            for &p in self.premises(n) {
                depth[p] = depth[n] + 1;
                stack.push(p);
            }
        }
        depth
    }

    /// Nodes on the tree path from `from` down to `to`, both included, if
    /// `from` is an ancestor of `to`.
    pub fn tree_path(&self, from: NodeId, to: NodeId) -> Option<Vec<NodeId>> {
        let parent = self.parents();
        let mut path = vec![to];
        let mut cur = to;
        while cur != from {
            cur = parent[cur]?;
            path.push(cur);
        }
        path.reverse();
        Some(path)
    }
}

/// An edge of the proof graph with its trace relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    /// Premise index, or `None` for a bud-to-companion edge.
    pub premise: Option<usize>,
    pub pairs: Vec<TracePair>,
}

/// All edges of a validated pre-proof, indexed by source node.
#[derive(Debug, Clone, Default)]
pub struct EdgeTable {
    pub edges: Vec<Edge>,
    pub outgoing: Vec<Vec<usize>>,
    pub occurrence_maps: Vec<Option<OccurrenceMap>>,
}

impl EdgeTable {
    pub fn out(&self, n: NodeId) -> impl Iterator<Item = &Edge> {
        self.outgoing[n].iter().map(move |&e| &self.edges[e])
    }

    /// The edge from `from` to `to`, if any.
    pub fn edge(&self, from: NodeId, to: NodeId) -> Option<&Edge> {
        self.out(from).find(|e| e.to == to)
    }
}

fn check_tree(proof: &PreProof) -> Result<(), ProofError> {
    let n = proof.len();
    if n == 0 {
        return Err(ProofError::Empty);
    }
    let mut seen_as_premise = vec![false; n];
    for i in 0..n {
        for &p in proof.premises(i) {
            if p >= n {
                return Err(ProofError::NotATree(format!("n{i} has a premise n{p} out of range")));
            }
            if p == 0 {
                return Err(ProofError::NotATree(format!("the root is a premise of n{i}")));
            }
            if std::mem::replace(&mut seen_as_premise[p], true) {
                return Err(ProofError::NotATree(format!("n{p} is a premise of two nodes")));
            }
        }
    }
    if let Some(orphan) = (1..n).find(|&i| !seen_as_premise[i]) {
        return Err(ProofError::NotATree(format!("n{orphan} is not reachable from the root")));
    }
    // every node has exactly one parent and the root none; reachability rules
    // out cycles among the premise edges
    let mut reached = BTreeSet::from([0]);
    let mut stack = vec![0];
    while let Some(i) = stack.pop() {
        for &p in proof.premises(i) {
            if reached.insert(p) {
                stack.push(p);
            }
        }
    }
    if reached.len() != n {
        return Err(ProofError::NotATree("premise edges contain a cycle".into()));
    }
    Ok(())
}

fn identity_pairs(seq: &Sequent) -> Vec<TracePair> {
    seq.antecedent()
        .iter()
        .enumerate()
        .filter(|(_, f)| f.is_inductive_atom())
        .map(|(i, _)| TracePair { from: i, to: i, progress: false })
        .collect()
}

/// Checks a complete pre-proof: tree shape, every rule instance, and every
/// bud against its companion.
pub fn validate(proof: &PreProof) -> Result<EdgeTable, ProofError> {
    validate_with(proof, false)
}

/// As [`validate`], optionally tolerating open leaves.
pub fn validate_with(proof: &PreProof, allow_open: bool) -> Result<EdgeTable, ProofError> {
    check_tree(proof)?;
    let mut table = EdgeTable {
        edges: Vec::new(),
        outgoing: vec![Vec::new(); proof.len()],
        occurrence_maps: vec![None; proof.len()],
    };
    for (i, node) in proof.nodes().iter().enumerate() {
        match &node.kind {
            NodeKind::Inference { premises, .. } => {
                let inst = proof.instance(i).expect("inference node");
                let map = check_rule_instance(&inst, &proof.defs, &proof.rules)
                    .map_err(|source| ProofError::InvalidRule { node: i, source })?;
                for (k, &p) in premises.iter().enumerate() {
                    table.outgoing[i].push(table.edges.len());
                    table.edges.push(Edge { from: i, to: p, premise: Some(k), pairs: map.per_premise[k].clone() });
                }
                table.occurrence_maps[i] = Some(map);
            }
            NodeKind::Bud { companion } => {
                let c = *companion;
                if c >= proof.len() || !matches!(proof.node(c).kind, NodeKind::Inference { .. }) {
                    return Err(ProofError::DanglingCompanion { bud: i, companion: c });
                }
                if proof.node(c).sequent != node.sequent {
                    return Err(ProofError::BudMismatch { bud: i, companion: c });
                }
                table.outgoing[i].push(table.edges.len());
                table.edges.push(Edge { from: i, to: c, premise: None, pairs: identity_pairs(&node.sequent) });
            }
            NodeKind::Open => {
                if !allow_open {
                    return Err(ProofError::OpenLeaf(i));
                }
            }
        }
    }
    Ok(table)
}

/// The infinite tree obtained by unfolding every bud into its companion.
/// Nodes are addressed by premise-index paths from the root and resolved
/// lazily against the source; every unfolded node is a verbatim copy of the
/// source node it comes from.
#[derive(Debug, Clone, Copy)]
pub struct Unfolding<'a> {
    proof: &'a PreProof,
}

pub fn unfold(proof: &PreProof) -> Unfolding<'_> {
    Unfolding { proof }
}

impl<'a> Unfolding<'a> {
    pub fn source(&self) -> &'a PreProof {
        self.proof
    }

    /// The source node (never a bud) the unfolded node at `addr` copies.
    pub fn origin(&self, addr: &[usize]) -> Option<NodeId> {
        let p = self.proof;
        let mut cur = p.resolve(p.root());
        for &k in addr {
            cur = p.resolve(*p.premises(cur).get(k)?);
        }
        Some(cur)
    }

    pub fn sequent(&self, addr: &[usize]) -> Option<&'a Sequent> {
        self.origin(addr).map(|n| &self.proof.node(n).sequent)
    }

    pub fn rule(&self, addr: &[usize]) -> Option<&'a Rule> {
        self.origin(addr).and_then(|n| self.proof.rule(n))
    }

    pub fn arity(&self, addr: &[usize]) -> Option<usize> {
        self.origin(addr).map(|n| self.proof.premises(n).len())
    }
}

/// A finite prefix of an unfolding, as an ordinary pre-proof whose frontier
/// leaves are open, with the source node of every materialized node.
#[derive(Debug, Clone)]
pub struct Materialized {
    pub proof: PreProof,
    pub origin: Vec<NodeId>,
    pub depth: Vec<usize>,
}

/// Materializes the unfolding down to `max_depth` (root at depth 0).
pub fn materialize(proof: &PreProof, max_depth: usize) -> Materialized {
    let mut out = PreProof::new(proof.defs.clone(), proof.rules.clone());
    let mut origin = Vec::new();
    let mut depth = Vec::new();
    if proof.is_empty() {
        return Materialized { proof: out, origin, depth };
    }
    let root = proof.resolve(proof.root());
    out.push(proof.node(root).sequent.clone(), NodeKind::Open);
    origin.push(root);
    depth.push(0);
    let mut i = 0;
    while i < out.len() {
        let src = origin[i];
        if let NodeKind::Inference { rule, premises } = &proof.node(src).kind {
            if depth[i] < max_depth || premises.is_empty() {
                let mut kids = Vec::with_capacity(premises.len());
                for &p in premises {
                    let q = proof.resolve(p);
                    kids.push(out.push(proof.node(q).sequent.clone(), NodeKind::Open));
                    origin.push(q);
                    depth.push(depth[i] + 1);
                }
                out.node_mut(i).kind = NodeKind::Inference { rule: rule.clone(), premises: kids };
            }
        }
        i += 1;
    }
    Materialized { proof: out, origin, depth }
}
