#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use cyclop::calculus::{unfold_left, Rule, RuleId, RuleInstance};
use cyclop::proofgraph::PreProof;
use cyclop::proofio::parse_proof;
use cyclop::syntax::{DefinitionSet, Formula, FreshNames, Name, Production, Sequent, Signature, Substitution, Term};
use rand::seq::SliceRandom;
use rand::Rng;

pub const CORPUS: [&str; 5] = ["neo.cpf", "bad-loop.cpf", "ulprime-bot.cpf", "bot-cutfree.cpf", "composite-neo.cpf"];

pub fn corpus_dir() -> PathBuf {
    std::env::var_os("CYCLOP_CORPUS")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/corpus")))
}

pub fn corpus_text(name: &str) -> String {
    std::fs::read_to_string(corpus_dir().join(name)).unwrap()
}

pub fn corpus(name: &str) -> PreProof {
    parse_proof(&corpus_text(name)).unwrap()
}

pub const VARS: [&str; 4] = ["x", "y", "z", "w"];
pub const CONSTS: [&str; 2] = ["0", "c"];

/// Definitions used by the random instances: naturals, even/odd, a path
/// relation with a body-only variable, and a predicate whose unfolding is
/// determined by its head.
pub fn defs() -> DefinitionSet {
    let mut sig = Signature::new();
    sig.add_function("0", 0).add_function("c", 0).add_function("s", 1).add_function("f", 2);
    sig.add_predicate("N", 1, true)
        .add_predicate("E", 1, true)
        .add_predicate("O", 1, true)
        .add_predicate("L", 2, true)
        .add_predicate("P", 1, true)
        .add_predicate("Q", 2, false)
        .add_predicate("R", 0, false);
    let (x, y, z) = (Term::var("x"), Term::var("y"), Term::var("z"));
    let s = |t: Term| Term::app("s", vec![t]);
    let mut d = DefinitionSet::new(sig);
    d.add(Production::new("N", vec![Term::constant("0")], vec![], vec![]))
        .add(Production::new("N", vec![s(x.clone())], vec![], vec![Formula::ind("N", vec![x.clone()])]))
        .add(Production::new("E", vec![Term::constant("0")], vec![], vec![]))
        .add(Production::new("E", vec![s(x.clone())], vec![], vec![Formula::ind("O", vec![x.clone()])]))
        .add(Production::new("O", vec![s(x.clone())], vec![], vec![Formula::ind("E", vec![x.clone()])]))
        .add(Production::new("L", vec![x.clone(), x.clone()], vec![], vec![]))
        .add(Production::new(
            "L",
            vec![x.clone(), y.clone()],
            vec![Formula::ord("Q", vec![x.clone(), z.clone()])],
            vec![Formula::ind("L", vec![z, y])],
        ))
        .add(Production::new("P", vec![x.clone()], vec![], vec![Formula::ind("P", vec![s(x)])]));
    d
}

pub fn term<R: Rng>(rng: &mut R, depth: u32) -> Term {
    match rng.gen_range(0..if depth == 0 { 2 } else { 4 }) {
        0 => Term::var(VARS.choose(rng).unwrap()),
        1 => Term::constant(CONSTS.choose(rng).unwrap()),
        2 => Term::app("s", vec![term(rng, depth - 1)]),
        _ => Term::app("f", vec![term(rng, depth - 1), term(rng, depth - 1)]),
    }
}

pub fn atom<R: Rng>(rng: &mut R) -> Formula {
    match rng.gen_range(0..6) {
        0 => Formula::ind("N", vec![term(rng, 1)]),
        1 => Formula::ind("E", vec![term(rng, 1)]),
        2 => Formula::ind("L", vec![term(rng, 1), term(rng, 1)]),
        3 => Formula::ord("Q", vec![term(rng, 1), term(rng, 1)]),
        4 => Formula::ord("R", vec![]),
        _ => Formula::eq(term(rng, 1), term(rng, 1)),
    }
}

pub fn formula<R: Rng>(rng: &mut R, depth: u32) -> Formula {
    if depth == 0 {
        return atom(rng);
    }
    let d = depth - 1;
    match rng.gen_range(0..8) {
        0 => Formula::not(formula(rng, d)),
        1 => Formula::and(formula(rng, d), formula(rng, d)),
        2 => Formula::or(formula(rng, d), formula(rng, d)),
        3 => Formula::imp(formula(rng, d), formula(rng, d)),
        4 => Formula::forall(&Name::new(VARS.choose(rng).unwrap()), formula(rng, d)),
        5 => Formula::exists(&Name::new(VARS.choose(rng).unwrap()), formula(rng, d)),
        _ => atom(rng),
    }
}

fn context<R: Rng>(rng: &mut R) -> Vec<Formula> {
    (0..rng.gen_range(0..3)).map(|_| formula(rng, 1)).collect()
}

fn seq(ant: Vec<Formula>, suc: Vec<Formula>) -> Sequent {
    Sequent::new(ant, suc)
}

fn with(mut v: Vec<Formula>, extra: impl IntoIterator<Item = Formula>) -> Vec<Formula> {
    v.extend(extra);
    v
}

fn bin<R: Rng>(rng: &mut R) -> (Formula, Formula) {
    (formula(rng, 1), formula(rng, 1))
}

/// A quantified formula `Qv.φ` with `v` free in `φ` when possible.
fn quantified<R: Rng>(rng: &mut R, universal: bool) -> Formula {
    let v = Name::new(VARS.choose(rng).unwrap());
    let body = Formula::and(Formula::ord("Q", vec![Term::Var(v.clone()), term(rng, 1)]), formula(rng, 1));
    if universal {
        Formula::forall(&v, body)
    } else {
        Formula::exists(&v, body)
    }
}

fn fresh_for(s: &Sequent) -> Name {
    FreshNames::new("u", s.names()).fresh()
}

/// A random well-formed instance of `rule` over [`defs`].
pub fn instance<R: Rng>(rng: &mut R, rule: RuleId, defs: &DefinitionSet) -> RuleInstance {
    let (g, d) = (context(rng), context(rng));
    let conc = |a: Vec<Formula>, s: Vec<Formula>| seq(a, s);
    match rule {
        RuleId::Axiom => {
            let phi = formula(rng, 1);
            RuleInstance::new(Rule::Axiom, conc(with(g, [phi.clone()]), with(d, [phi])), vec![])
        }
        RuleId::Wk => {
            let c = conc(with(g, context(rng)), with(d, context(rng)));
            let keep = |rng: &mut R, v: &[Formula]| v.iter().filter(|_| rng.gen_bool(0.5)).cloned().collect::<Vec<_>>();
            let p = seq(keep(rng, c.antecedent()), keep(rng, c.succedent()));
            RuleInstance::new(Rule::Wk, c, vec![p])
        }
        RuleId::Cut => {
            let phi = formula(rng, 1);
            RuleInstance::new(
                Rule::Cut { formula: phi.clone() },
                conc(g.clone(), d.clone()),
                vec![seq(g.clone(), with(d.clone(), [phi.clone()])), seq(with(g, [phi]), d)],
            )
        }
        RuleId::NotL => {
            let phi = formula(rng, 1);
            let t = Formula::not(phi.clone());
            RuleInstance::new(Rule::NotL { target: t.clone() }, conc(with(g.clone(), [t]), d.clone()), vec![seq(g, with(d, [phi]))])
        }
        RuleId::NotR => {
            let phi = formula(rng, 1);
            let t = Formula::not(phi.clone());
            RuleInstance::new(Rule::NotR { target: t.clone() }, conc(g.clone(), with(d.clone(), [t])), vec![seq(with(g, [phi]), d)])
        }
        RuleId::OrL => {
            let (a, b) = bin(rng);
            let t = Formula::or(a.clone(), b.clone());
            RuleInstance::new(
                Rule::OrL { target: t.clone() },
                conc(with(g.clone(), [t]), d.clone()),
                vec![seq(with(g.clone(), [a]), d.clone()), seq(with(g, [b]), d)],
            )
        }
        RuleId::OrR => {
            let (a, b) = bin(rng);
            let t = Formula::or(a.clone(), b.clone());
            RuleInstance::new(Rule::OrR { target: t.clone() }, conc(g.clone(), with(d.clone(), [t])), vec![seq(g, with(d, [a, b]))])
        }
        RuleId::AndL => {
            let (a, b) = bin(rng);
            let t = Formula::and(a.clone(), b.clone());
            RuleInstance::new(Rule::AndL { target: t.clone() }, conc(with(g.clone(), [t]), d.clone()), vec![seq(with(g, [a, b]), d)])
        }
        RuleId::AndR => {
            let (a, b) = bin(rng);
            let t = Formula::and(a.clone(), b.clone());
            RuleInstance::new(
                Rule::AndR { target: t.clone() },
                conc(g.clone(), with(d.clone(), [t])),
                vec![seq(g.clone(), with(d.clone(), [a])), seq(g, with(d, [b]))],
            )
        }
        RuleId::ImpL => {
            let (a, b) = bin(rng);
            let t = Formula::imp(a.clone(), b.clone());
            RuleInstance::new(
                Rule::ImpL { target: t.clone() },
                conc(with(g.clone(), [t]), d.clone()),
                vec![seq(g.clone(), with(d.clone(), [a])), seq(with(g, [b]), d)],
            )
        }
        RuleId::ImpR => {
            let (a, b) = bin(rng);
            let t = Formula::imp(a.clone(), b.clone());
            RuleInstance::new(Rule::ImpR { target: t.clone() }, conc(g.clone(), with(d.clone(), [t])), vec![seq(with(g, [a]), with(d, [b]))])
        }
        RuleId::AllL | RuleId::ExR => {
            let left = rule == RuleId::AllL;
            let t = quantified(rng, left);
            let w = term(rng, 1);
            let body = t.instantiate_binder(&w).unwrap();
            if left {
                RuleInstance::new(
                    Rule::AllL { target: t.clone(), witness: w },
                    conc(with(g.clone(), [t]), d.clone()),
                    vec![seq(with(g, [body]), d)],
                )
            } else {
                RuleInstance::new(
                    Rule::ExR { target: t.clone(), witness: w },
                    conc(g.clone(), with(d.clone(), [t])),
                    vec![seq(g, with(d, [body]))],
                )
            }
        }
        RuleId::AllR | RuleId::ExL => {
            let right = rule == RuleId::AllR;
            let t = quantified(rng, right);
            let c = if right { conc(g.clone(), with(d.clone(), [t.clone()])) } else { conc(with(g.clone(), [t.clone()]), d.clone()) };
            // a variable of the context when it is not free, otherwise a new one
            let fv = c.free_vars();
            let y = VARS.iter().map(|v| Name::new(v)).find(|v| !fv.contains(v)).unwrap_or_else(|| fresh_for(&c));
            let body = t.instantiate_binder(&Term::Var(y.clone())).unwrap();
            if right {
                RuleInstance::new(Rule::AllR { target: t, eigen: y }, c, vec![seq(g, with(d, [body]))])
            } else {
                RuleInstance::new(Rule::ExL { target: t, eigen: y }, c, vec![seq(with(g, [body]), d)])
            }
        }
        RuleId::EqL => {
            let (a, b) = (Name::new("a"), Name::new("b"));
            let hole = |rng: &mut R| match rng.gen_range(0..3) {
                0 => Term::Var(a.clone()),
                1 => Term::Var(b.clone()),
                _ => term(rng, 0),
            };
            let mut tant = g.clone();
            let mut tsuc = d.clone();
            tant.push(Formula::ind("N", vec![hole(rng)]));
            tsuc.push(Formula::ord("Q", vec![hole(rng), hole(rng)]));
            let template = seq(tant, tsuc);
            let (l, r) = (term(rng, 1), term(rng, 1));
            let put = |x: &Term, y: &Term| Substitution::from_pairs([(a.clone(), x.clone()), (b.clone(), y.clone())]);
            let c0 = template.apply(&put(&l, &r));
            let c = seq(with(c0.antecedent().to_vec(), [Formula::eq(l.clone(), r.clone())]), c0.succedent().to_vec());
            let p = template.apply(&put(&r, &l));
            RuleInstance::new(Rule::EqL { lhs: l, rhs: r, placeholders: (a.clone(), b.clone()), template }, c, vec![p])
        }
        RuleId::EqR => {
            let t = term(rng, 1);
            RuleInstance::new(Rule::EqR { term: t.clone() }, conc(g, with(d, [Formula::eq(t.clone(), t)])), vec![])
        }
        RuleId::UL => {
            let target = match rng.gen_range(0..3) {
                0 => Formula::ind("N", vec![term(rng, 1)]),
                1 => Formula::ind("E", vec![term(rng, 1)]),
                _ => Formula::ind("L", vec![term(rng, 1), term(rng, 1)]),
            };
            let c = conc(with(g, [target.clone()]), d);
            let mut fresh = FreshNames::new("u", c.names());
            unfold_left(&c, &target, defs, &mut fresh).unwrap()
        }
        RuleId::UR => {
            let prods = defs.productions();
            let prod = prods.choose(rng).unwrap();
            let args: Vec<Term> = prod.params().iter().map(|_| term(rng, 1)).collect();
            let inst = prod.instantiation(&args);
            let target = prod.head().apply(&inst);
            let index = prods.iter().filter(|q| q.predicate() == prod.predicate()).position(|q| q == prod).unwrap();
            let premises = prod.body().map(|b| seq(g.clone(), with(d.clone(), [b.apply(&inst)]))).collect();
            RuleInstance::new(Rule::UR { target: target.clone(), production: index }, conc(g.clone(), with(d.clone(), [target])), premises)
        }
        RuleId::FreshL => {
            let c = conc(g.clone(), d.clone());
            let fv: BTreeSet<Name> = c.free_vars();
            let t = if fv.is_empty() { Term::constant("0") } else { Term::app("s", vec![Term::Var(fv.iter().next().unwrap().clone())]) };
            let t = if rng.gen_bool(0.5) { t } else { Term::app("f", vec![t, Term::constant("c")]) };
            let v = VARS.iter().map(|v| Name::new(v)).find(|v| !fv.contains(v)).unwrap_or_else(|| fresh_for(&c));
            let p = seq(with(g, [Formula::eq(Term::Var(v.clone()), t.clone())]), d);
            RuleInstance::new(Rule::FreshL { var: v, term: t }, c, vec![p])
        }
        RuleId::ULPrime => {
            let arg = term(rng, 1);
            let target = Formula::ind("P", vec![arg.clone()]);
            RuleInstance::new(
                Rule::ULPrime { target: target.clone() },
                conc(with(g.clone(), [target]), d.clone()),
                vec![seq(with(g, [Formula::ind("P", vec![Term::app("s", vec![arg])])]), d)],
            )
        }
        RuleId::Subst => panic!("substitution instances are not generated"),
    }
}

/// A random atomic substitution over [`VARS`] and [`CONSTS`].
pub fn atomic_subst<R: Rng>(rng: &mut R) -> Substitution {
    let mut pairs = Vec::new();
    for v in VARS {
        if rng.gen_bool(0.5) {
            let t = if rng.gen_bool(0.75) { Term::var(VARS.choose(rng).unwrap()) } else { Term::constant(CONSTS.choose(rng).unwrap()) };
            pairs.push((Name::new(v), t));
        }
    }
    Substitution::from_pairs(pairs)
}

/// Replays `theta_i` as a closure derivation from `theta`: one override per
/// differing variable, each between variables of `xs`.
pub fn replays_by_override(theta: &Substitution, theta_i: &Substitution, xs: &BTreeSet<Name>) -> bool {
    let mut pairs = Vec::new();
    for x in theta.vars().union(&theta_i.vars()) {
        if theta.image_of(x) != theta_i.image_of(x) {
            match theta_i.image_of(x).as_var() {
                Some(y) if xs.contains(x) && xs.contains(y) => pairs.push((x.clone(), y.clone())),
                _ => return false,
            }
        }
    }
    theta.override_with(&pairs).is_ok_and(|t| &t == theta_i)
}

/// Skeleton for random pre-proofs: every sequent is a nonempty set of the
/// atoms A(x), B(x), C(x) on the left, encoded as a bitmask.
#[derive(Debug, Clone)]
pub enum Shape {
    /// `ULPrime` on atom `target`, one child per production.
    Unfold { target: u8, keep: bool, kids: Vec<(u8, Shape)> },
    Weaken(Box<(u8, Shape)>),
    /// Bud to the `pick`-th node (mod count) with the same sequent.
    Bud { pick: usize },
}

const ATOMS: [&str; 3] = ["A", "B", "C"];

pub fn skeleton_defs() -> DefinitionSet {
    let mut sig = Signature::new();
    for a in ATOMS {
        sig.add_predicate(a, 1, true);
    }
    let x = Term::var("x");
    let at = |p: &str| Formula::ind(p, vec![x.clone()]);
    let mut d = DefinitionSet::new(sig);
    d.add(Production::new("A", vec![x.clone()], vec![], vec![at("B")]))
        .add(Production::new("B", vec![x.clone()], vec![], vec![at("A")]))
        .add(Production::new("C", vec![x.clone()], vec![], vec![at("A")]))
        .add(Production::new("C", vec![x.clone()], vec![], vec![at("B"), at("C")]));
    d
}

fn body_of(target: u8) -> Vec<u8> {
    match target {
        0 => vec![0b010],
        1 => vec![0b001],
        _ => vec![0b001, 0b110],
    }
}

fn mask_sequent(mask: u8) -> Sequent {
    let x = Term::var("x");
    Sequent::new((0..3).filter(|i| mask & (1 << i) != 0).map(|i| Formula::ind(ATOMS[i], vec![x.clone()])), [])
}

pub fn grow<R: Rng>(rng: &mut R, mask: u8, budget: &mut usize) -> Shape {
    if *budget == 0 || rng.gen_bool(0.25) {
        return Shape::Bud { pick: rng.gen_range(0..8) };
    }
    *budget -= 1;
    let atoms: Vec<u8> = (0..3).filter(|i| mask & (1 << i) != 0).collect();
    if rng.gen_bool(0.2) {
        let sub = loop {
            let m = rng.gen_range(1..8u8) & mask;
            if m != 0 {
                break m;
            }
        };
        return Shape::Weaken(Box::new((sub, grow(rng, sub, budget))));
    }
    let target = *atoms.choose(rng).unwrap();
    let keep = rng.gen_bool(0.5);
    let kids = body_of(target)
        .into_iter()
        .map(|b| {
            let m = (if keep { mask } else { mask & !(1 << target) }) | b;
            (m, grow(rng, m, budget))
        })
        .collect();
    Shape::Unfold { target, keep, kids }
}

/// Rewrites a random subtree or a random bud choice.
pub fn mutate<R: Rng>(rng: &mut R, root_mask: u8, shape: &Shape) -> Shape {
    fn count(s: &Shape) -> usize {
        1 + match s {
            Shape::Unfold { kids, .. } => kids.iter().map(|(_, k)| count(k)).sum(),
            Shape::Weaken(b) => count(&b.1),
            Shape::Bud { .. } => 0,
        }
    }
    fn walk<R: Rng>(rng: &mut R, mask: u8, s: &Shape, at: &mut usize) -> Shape {
        if *at == 0 {
            *at = usize::MAX;
            return match s {
                Shape::Bud { pick } if rng.gen_bool(0.5) => Shape::Bud { pick: pick + 1 },
                _ => {
                    let mut budget = rng.gen_range(0..6usize);
                    grow(rng, mask, &mut budget)
                }
            };
        }
        *at = at.wrapping_sub(1);
        match s {
            Shape::Unfold { target, keep, kids } => Shape::Unfold {
                target: *target,
                keep: *keep,
                kids: kids.iter().map(|(m, k)| (*m, walk(rng, *m, k, at))).collect(),
            },
            Shape::Weaken(b) => Shape::Weaken(Box::new((b.0, walk(rng, b.0, &b.1, at)))),
            leaf => leaf.clone(),
        }
    }
    let mut at = rng.gen_range(0..count(shape));
    walk(rng, root_mask, shape, &mut at)
}

/// Builds the pre-proof of a skeleton; `None` when a bud has no node with
/// its sequent to point at.
pub fn build_skeleton(root_mask: u8, shape: &Shape) -> Option<PreProof> {
    use cyclop::calculus::RuleSet;
    use cyclop::proofgraph::NodeKind;
    let mut p = PreProof::new(skeleton_defs(), RuleSet::from_rules([RuleId::ULPrime, RuleId::Wk]));
    let mut buds = Vec::new();
    let mut stack = vec![(None::<(usize, usize)>, root_mask, shape)];
    while let Some((parent, mask, s)) = stack.pop() {
        let id = p.push(mask_sequent(mask), NodeKind::Open);
        if let Some((par, k)) = parent {
            if let NodeKind::Inference { premises, .. } = &mut p.node_mut(par).kind {
                premises[k] = id;
            }
        }
        match s {
            Shape::Unfold { target, kids, .. } => {
                let t = Formula::ind(ATOMS[*target as usize], vec![Term::var("x")]);
                p.node_mut(id).kind = NodeKind::Inference { rule: Rule::ULPrime { target: t }, premises: vec![0; kids.len()] };
                for (k, (m, kid)) in kids.iter().enumerate().rev() {
                    stack.push((Some((id, k)), *m, kid));
                }
            }
            Shape::Weaken(b) => {
                p.node_mut(id).kind = NodeKind::Inference { rule: Rule::Wk, premises: vec![0] };
                stack.push((Some((id, 0)), b.0, &b.1));
            }
            Shape::Bud { pick } => buds.push((id, mask, *pick)),
        }
    }
    for (id, mask, pick) in buds {
        let same: Vec<usize> = (0..p.len())
            .filter(|&n| n != id && p.node(n).sequent == mask_sequent(mask) && !matches!(p.node(n).kind, NodeKind::Open))
            .collect();
        let c = *same.get(pick % same.len().max(1))?;
        p.node_mut(id).kind = NodeKind::Bud { companion: c };
    }
    Some(p)
}

/// `n` valid pre-proofs obtained by repeated mutation from a random seed
/// skeleton.
pub fn mutated_proofs<R: Rng>(rng: &mut R, n: usize) -> Vec<PreProof> {
    let mut out = Vec::new();
    let root = 0b111;
    let mut shape = grow(rng, root, &mut 6);
    while out.len() < n {
        let next = mutate(rng, root, &shape);
        match build_skeleton(root, &next) {
            Some(p) if cyclop::proofgraph::validate(&p).is_ok() => {
                out.push(p);
                shape = next;
            }
            _ => shape = grow(rng, root, &mut 6),
        }
    }
    out
}

/// Substitutions as plain maps from variable names to `(is_var, name)`.
pub type Plain = BTreeMap<String, (bool, String)>;

pub fn plain(s: &Substitution) -> Plain {
    s.iter()
        .map(|(x, t)| match t {
            Term::Var(y) => (x.to_string(), (true, y.to_string())),
            other => (x.to_string(), (false, other.to_string())),
        })
        .collect()
}

fn normal(mut m: Plain) -> Plain {
    m.retain(|x, (is_var, y)| !(*is_var && x == y));
    m
}

fn plain_compose(a: &Plain, b: &Plain) -> Plain {
    let mut out = Plain::new();
    for (x, (is_var, y)) in a {
        let img = if *is_var { b.get(y).cloned().unwrap_or((true, y.clone())) } else { (false, y.clone()) };
        out.insert(x.clone(), img);
    }
    for (x, v) in b {
        out.entry(x.clone()).or_insert_with(|| v.clone());
    }
    normal(out)
}

/// Naive fixpoint: saturate under every override and every composition.
pub fn brute_closure(base: &[Plain], vars: &[String]) -> BTreeSet<Plain> {
    let mut set: BTreeSet<Plain> = base.iter().cloned().map(normal).collect();
    loop {
        let cur: Vec<Plain> = set.iter().cloned().collect();
        let mut next = set.clone();
        for a in &cur {
            for x in vars {
                for y in vars {
                    let mut m = a.clone();
                    m.insert(x.clone(), (true, y.clone()));
                    next.insert(normal(m));
                }
            }
            for b in &cur {
                next.insert(plain_compose(a, b));
            }
        }
        if next.len() == set.len() {
            return set;
        }
        set = next;
    }
}
