//! The global trace condition: every infinite path through the proof graph
//! must carry a trace that progresses infinitely often.
//!
//! Decided by the size-change closure: path relations between cut points
//! (a feedback vertex set) are composed until saturation, and every
//! idempotent loop relation must have a progressing diagonal entry.

use std::collections::{BTreeSet, HashMap, VecDeque};

use thiserror::Error;

use crate::calculus::TracePair;
use crate::proofgraph::{validate, EdgeTable, NodeId, PreProof, ProofError};

/// Relation between the inductive slots of two sequents. Cells are 0 (no
/// trace), 1 (trace) or 2 (progressing trace).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TraceRel {
    rows: usize,
    cols: usize,
    cells: Vec<u8>,
}

impl TraceRel {
    pub fn empty(rows: usize, cols: usize) -> Self {
        TraceRel { rows, cols, cells: vec![0; rows * cols] }
    }

    pub fn from_pairs(rows: usize, cols: usize, pairs: &[TracePair]) -> Self {
        let mut r = Self::empty(rows, cols);
        for p in pairs {
            r.set(p.from, p.to, if p.progress { 2 } else { 1 });
        }
        r
    }

    pub fn identity(n: usize) -> Self {
        let mut r = Self::empty(n, n);
        for i in 0..n {
            r.set(i, i, 1);
        }
        r
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, a: usize, b: usize) -> u8 {
        self.cells[a * self.cols + b]
    }

    fn set(&mut self, a: usize, b: usize, v: u8) {
        let c = &mut self.cells[a * self.cols + b];
        *c = (*c).max(v);
    }

    pub fn compose(&self, then: &TraceRel) -> TraceRel {
        assert_eq!(self.cols, then.rows, "trace relations do not compose");
        let mut out = TraceRel::empty(self.rows, then.cols);
        for a in 0..self.rows {
            for b in 0..self.cols {
                let x = self.get(a, b);
                if x == 0 {
                    continue;
                }
                for c in 0..then.cols {
                    let y = then.get(b, c);
                    if y != 0 {
                        out.set(a, c, x.max(y));
                    }
                }
            }
        }
        out
    }

    pub fn is_idempotent(&self) -> bool {
        self.rows == self.cols && self.compose(self) == *self
    }

    /// A slot related to itself by a progressing trace.
    pub fn progressing_diagonal(&self) -> Option<usize> {
        (0..self.rows.min(self.cols)).find(|&i| self.get(i, i) == 2)
    }
}

/// A rooted graph whose vertices carry trace slots and whose edges carry
/// trace relations. Proofs are one instance; tests build others directly.
#[derive(Debug, Clone, Default)]
pub struct TraceGraph {
    pub width: Vec<usize>,
    pub succ: Vec<Vec<(usize, TraceRel)>>,
    pub root: usize,
}

impl TraceGraph {
    pub fn new(width: Vec<usize>, root: usize) -> Self {
        let n = width.len();
        TraceGraph { width, succ: vec![Vec::new(); n], root }
    }

    pub fn add_edge(&mut self, from: usize, to: usize, pairs: &[TracePair]) {
        let rel = TraceRel::from_pairs(self.width[from], self.width[to], pairs);
        self.succ[from].push((to, rel));
    }

    /// Slots are the antecedent positions of each sequent; only the
    /// inductive ones ever carry pairs.
    pub fn from_proof(proof: &PreProof, table: &EdgeTable) -> Self {
        let width = proof.nodes().iter().map(|n| n.sequent.antecedent().len()).collect();
        let mut g = TraceGraph::new(width, proof.root());
        for e in &table.edges {
            g.add_edge(e.from, e.to, &e.pairs);
        }
        g
    }

    pub fn len(&self) -> usize {
        self.width.len()
    }

    pub fn is_empty(&self) -> bool {
        self.width.is_empty()
    }

    fn edge_rel(&self, from: usize, to: usize) -> Option<&TraceRel> {
        self.succ[from].iter().find(|(t, _)| *t == to).map(|(_, r)| r)
    }

    /// Relation along a vertex path, or `None` if it is not a path.
    pub fn path_relation(&self, path: &[usize]) -> Option<TraceRel> {
        let first = *path.first()?;
        let mut rel = TraceRel::identity(self.width[first]);
        for w in path.windows(2) {
            rel = rel.compose(self.edge_rel(w[0], w[1])?);
        }
        Some(rel)
    }

    /// Targets of DFS back edges from the root: every cycle reachable from
    /// the root passes through one of them.
    fn cut_points(&self) -> Vec<usize> {
        let n = self.len();
        let mut state = vec![0u8; n];
        let mut cuts = BTreeSet::new();
        let mut stack: Vec<(usize, usize)> = vec![(self.root, 0)];
        state[self.root] = 1;
        while let Some(&mut (v, ref mut k)) = stack.last_mut() {
            if let Some((w, _)) = self.succ[v].get(*k) {
                *k += 1;
                match state[*w] {
                    0 => {
                        state[*w] = 1;
                        stack.push((*w, 0));
                    }
                    1 => {
                        cuts.insert(*w);
                    }
                    _ => {}
                }
            } else {
                state[v] = 2;
                stack.pop();
            }
        }
        cuts.into_iter().collect()
    }

    fn shortest_path(&self, from: usize, to: usize) -> Vec<usize> {
        let mut prev = vec![usize::MAX; self.len()];
        let mut queue = VecDeque::from([from]);
        prev[from] = from;
        while let Some(v) = queue.pop_front() {
            if v == to {
                break;
            }
            for (w, _) in &self.succ[v] {
                if prev[*w] == usize::MAX {
                    prev[*w] = v;
                    queue.push_back(*w);
                }
            }
        }
        let mut path = vec![to];
        let mut cur = to;
        while cur != from {
            cur = prev[cur];
            path.push(cur);
        }
        path.reverse();
        path
    }
}

/// One idempotent loop of the closure with its progressing slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopWitness {
    pub node: NodeId,
    pub path: Vec<NodeId>,
    pub relation: TraceRel,
    pub slot: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub loops: Vec<LoopWitness>,
}

/// An infinite path `stem · cycle^ω` without an infinitely progressing trace.
/// `cycle` starts and ends at the last node of `stem`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lasso {
    pub stem: Vec<NodeId>,
    pub cycle: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GtcVerdict {
    Holds(Certificate),
    Fails(Lasso),
}

impl GtcVerdict {
    pub fn holds(&self) -> bool {
        matches!(self, GtcVerdict::Holds(_))
    }
}

/// Validates `proof` and decides the trace condition.
pub fn check_gtc(proof: &PreProof) -> Result<GtcVerdict, ProofError> {
    let table = validate(proof)?;
    Ok(decide(&TraceGraph::from_proof(proof, &table)))
}

struct Summary {
    from: usize,
    to: usize,
    rel: TraceRel,
    path: Vec<usize>,
}

/// Path relations from each cut point to the next cut points reached.
fn summaries(g: &TraceGraph, cuts: &[usize]) -> Vec<Summary> {
    let is_cut: BTreeSet<usize> = cuts.iter().copied().collect();
    let mut out = Vec::new();
    for &c in cuts {
        let mut seen: BTreeSet<(usize, TraceRel)> = BTreeSet::new();
        let mut stack = vec![(c, TraceRel::identity(g.width[c]), vec![c])];
        while let Some((v, rel, path)) = stack.pop() {
            for (w, e) in &g.succ[v] {
                let r = rel.compose(e);
                let mut p = path.clone();
                p.push(*w);
                if is_cut.contains(w) {
                    if seen.insert((*w, r.clone())) {
                        out.push(Summary { from: c, to: *w, rel: r, path: p });
                    }
                } else if seen.insert((*w, r.clone())) {
                    stack.push((*w, r, p));
                }
            }
        }
    }
    out
}

/// Decides the trace condition on a graph.
pub fn decide(g: &TraceGraph) -> GtcVerdict {
    if g.is_empty() {
        return GtcVerdict::Holds(Certificate { loops: Vec::new() });
    }
    let cuts = g.cut_points();
    let base = summaries(g, &cuts);
    let mut by_source: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, s) in base.iter().enumerate() {
        by_source.entry(s.from).or_default().push(i);
    }

    // closure triples with a back pointer (previous triple, appended summary)
    let mut triples: Vec<(usize, usize, TraceRel, Option<usize>, usize)> = Vec::new();
    let mut index: HashMap<(usize, usize, TraceRel), usize> = HashMap::new();
    for (i, s) in base.iter().enumerate() {
        let key = (s.from, s.to, s.rel.clone());
        if let std::collections::hash_map::Entry::Vacant(e) = index.entry(key) {
            e.insert(triples.len());
            triples.push((s.from, s.to, s.rel.clone(), None, i));
        }
    }
    let mut next = 0;
    while next < triples.len() {
        let (from, to, rel) = (triples[next].0, triples[next].1, triples[next].2.clone());
        for &si in by_source.get(&to).map(Vec::as_slice).unwrap_or(&[]) {
            let s = &base[si];
            let key = (from, s.to, rel.compose(&s.rel));
            if !index.contains_key(&key) {
                index.insert(key.clone(), triples.len());
                triples.push((key.0, key.1, key.2, Some(next), si));
            }
        }
        next += 1;
    }

    let path_of = |mut t: usize| -> Vec<usize> {
        let mut segments = Vec::new();
        loop {
            segments.push(triples[t].4);
            match triples[t].3 {
                Some(p) => t = p,
                None => break,
            }
        }
        segments.reverse();
        let mut path = vec![base[segments[0]].from];
        for s in segments {
            path.extend_from_slice(&base[s].path[1..]);
        }
        path
    };

    let mut loops = Vec::new();
    for (t, (from, to, rel, _, _)) in triples.iter().enumerate() {
        if from != to || !rel.is_idempotent() {
            continue;
        }
        match rel.progressing_diagonal() {
            Some(slot) => loops.push(LoopWitness { node: *from, path: path_of(t), relation: rel.clone(), slot }),
            None => {
                return GtcVerdict::Fails(Lasso { stem: g.shortest_path(g.root, *from), cycle: path_of(t) });
            }
        }
    }
    GtcVerdict::Holds(Certificate { loops })
}

/// Checks a verdict against the graph of `proof`: a lasso must be a real
/// path whose cycle admits no infinitely progressing trace; every loop of a
/// certificate must be a real idempotent loop with a progressing slot.
pub fn verify_verdict(proof: &PreProof, verdict: &GtcVerdict) -> Result<(), String> {
    let table = validate(proof).map_err(|e| e.to_string())?;
    verify_on_graph(&TraceGraph::from_proof(proof, &table), verdict)
}

pub fn verify_on_graph(g: &TraceGraph, verdict: &GtcVerdict) -> Result<(), String> {
    match verdict {
        GtcVerdict::Fails(Lasso { stem, cycle }) => {
            if stem.first() != Some(&g.root) {
                return Err("stem does not start at the root".into());
            }
            g.path_relation(stem).ok_or("stem is not a path")?;
            if cycle.len() < 2 || cycle.first() != stem.last() || cycle.first() != cycle.last() {
                return Err("cycle is not a closed path at the end of the stem".into());
            }
            let r = g.path_relation(cycle).ok_or("cycle is not a path")?;
            // the periodic path progresses iff the idempotent power of its
            // relation has a progressing diagonal entry
            let mut power = r.clone();
            let mut seen = BTreeSet::new();
            while !power.is_idempotent() {
                if !seen.insert(power.clone()) {
                    return Err("no idempotent power found".into());
                }
                power = power.compose(&r);
            }
            match power.progressing_diagonal() {
                Some(s) => Err(format!("cycle carries a progressing trace through slot {s}")),
                None => Ok(()),
            }
        }
        GtcVerdict::Holds(cert) => {
            for w in &cert.loops {
                if w.path.first() != Some(&w.node) || w.path.last() != Some(&w.node) || w.path.len() < 2 {
                    return Err(format!("loop at n{} is not closed", w.node));
                }
                let r = g.path_relation(&w.path).ok_or_else(|| format!("loop at n{} is not a path", w.node))?;
                if r != w.relation || !r.is_idempotent() || r.get(w.slot, w.slot) != 2 {
                    return Err(format!("loop at n{} does not witness progress", w.node));
                }
            }
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("graph has {0} nodes, over the oracle limit")]
    TooLarge(usize),
    #[error("{0}")]
    Proof(#[from] ProofError),
}

type SetRel = BTreeSet<(usize, usize, bool)>;

fn set_compose(r: &SetRel, s: &SetRel) -> SetRel {
    let mut out: SetRel = BTreeSet::new();
    for &(a, b, p) in r {
        for &(b2, c, q) in s {
            if b == b2 {
                out.insert((a, c, p || q));
            }
        }
    }
    // keep the strongest label per pair
    let strong: BTreeSet<(usize, usize)> = out.iter().filter(|t| t.2).map(|t| (t.0, t.1)).collect();
    out.retain(|t| t.2 || !strong.contains(&(t.0, t.1)));
    out
}

/// Reference decision procedure: the size-change closure over every vertex,
/// with relations as pair sets. Refuses graphs over `max_nodes` vertices.
pub fn oracle_decide(g: &TraceGraph, max_nodes: usize) -> Result<bool, OracleError> {
    if g.len() > max_nodes {
        return Err(OracleError::TooLarge(g.len()));
    }
    let mut edges: Vec<(usize, usize, SetRel)> = Vec::new();
    for (v, out) in g.succ.iter().enumerate() {
        for (w, rel) in out {
            let mut s: SetRel = BTreeSet::new();
            for a in 0..rel.rows() {
                for b in 0..rel.cols() {
                    match rel.get(a, b) {
                        0 => {}
                        x => {
                            s.insert((a, b, x == 2));
                        }
                    }
                }
            }
            edges.push((v, *w, s));
        }
    }
    let mut reach = vec![false; g.len()];
    let mut stack = vec![g.root];
    reach[g.root] = true;
    while let Some(v) = stack.pop() {
        for (w, _) in &g.succ[v] {
            if !reach[*w] {
                reach[*w] = true;
                stack.push(*w);
            }
        }
    }
    let mut closure: BTreeSet<(usize, usize, SetRel)> =
        edges.iter().filter(|e| reach[e.0]).cloned().collect();
    let mut work: Vec<(usize, usize, SetRel)> = closure.iter().cloned().collect();
    while let Some((u, v, r)) = work.pop() {
        for (a, b, s) in &edges {
            if *a == v {
                let t = (u, *b, set_compose(&r, s));
                if closure.insert(t.clone()) {
                    work.push(t);
                }
            }
        }
    }
    Ok(closure.iter().all(|(u, v, r)| {
        u != v || set_compose(r, r) != *r || r.iter().any(|&(a, b, p)| a == b && p)
    }))
}

/// The reference procedure on a proof.
pub fn gtc_oracle(proof: &PreProof, max_nodes: usize) -> Result<bool, OracleError> {
    let table = validate(proof)?;
    oracle_decide(&TraceGraph::from_proof(proof, &table), max_nodes)
}
