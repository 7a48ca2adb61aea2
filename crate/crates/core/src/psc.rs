//! Partial-substitution closure of a finite set of atomic substitutions.
//!
//! The closure is the least set containing the base that is closed under
//! overriding an image with a variable of `X` and under composition. For
//! atomic bases every element maps `dom(Θ) ∪ X` into `img(Θ) ∪ X` (or fixes a
//! variable), so the fixpoint is finite and is computed with a worklist over a
//! dense encoding of the substitutions.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::syntax::{Name, Substitution, Term};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PscError {
    #[error("closure base contains the composite substitution {0}")]
    CompositeBase(Substitution),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClosureInput {
    pub base: BTreeSet<Substitution>,
    pub vars: BTreeSet<Name>,
}

impl ClosureInput {
    pub fn new(base: impl IntoIterator<Item = Substitution>, vars: impl IntoIterator<Item = Name>) -> Self {
        ClosureInput { base: base.into_iter().collect(), vars: vars.into_iter().collect() }
    }

    fn check_atomic(&self) -> Result<(), PscError> {
        match self.base.iter().find(|t| !t.is_atomic()) {
            Some(t) => Err(PscError::CompositeBase(t.clone())),
            None => Ok(()),
        }
    }
}

/// How an element entered the closure. Indices refer to earlier elements.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Witness {
    Base,
    Override { of: usize, var: Name, to: Name },
    Compose(usize, usize),
}

#[derive(Debug, Clone)]
pub struct Closure {
    elements: Vec<Substitution>,
    witnesses: Vec<Witness>,
    index: HashMap<Substitution, usize>,
}

impl Closure {
    pub fn elements(&self) -> &[Substitution] {
        &self.elements
    }

    pub fn witnesses(&self) -> &[Witness] {
        &self.witnesses
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn contains(&self, theta: &Substitution) -> bool {
        self.index.contains_key(theta)
    }

    pub fn position(&self, theta: &Substitution) -> Option<usize> {
        self.index.get(theta).copied()
    }

    /// Rebuilds every element from its witness and checks it against the
    /// stored element, using only the public substitution operations.
    pub fn replay(&self, input: &ClosureInput) -> Result<(), String> {
        let mut rebuilt: Vec<Substitution> = Vec::with_capacity(self.elements.len());
        for (i, w) in self.witnesses.iter().enumerate() {
            let elem = match w {
                Witness::Base => {
                    if !input.base.contains(&self.elements[i]) {
                        return Err(format!("element {i} claims to be a base element"));
                    }
                    self.elements[i].clone()
                }
                Witness::Override { of, var, to } => {
                    if *of >= i || !input.vars.contains(var) || !input.vars.contains(to) {
                        return Err(format!("element {i} has an ill-formed override witness"));
                    }
                    rebuilt[*of]
                        .override_with(&[(var.clone(), to.clone())])
                        .map_err(|e| e.to_string())?
                }
                Witness::Compose(a, b) => {
                    if *a >= i || *b >= i {
                        return Err(format!("element {i} composes later elements"));
                    }
                    rebuilt[*a].compose(&rebuilt[*b])
                }
            };
            if elem != self.elements[i] {
                return Err(format!("element {i} replays to {elem}, stored {}", self.elements[i]));
            }
            rebuilt.push(elem);
        }
        Ok(())
    }
}

/// Dense encoding: every substitution is an image vector over a fixed
/// variable universe; codes past the universe are constants.
struct Encoding {
    vars: Vec<Name>,
    consts: Vec<Name>,
}

impl Encoding {
    fn new(input: &ClosureInput) -> Self {
        let mut vars: BTreeSet<Name> = input.vars.clone();
        let mut consts = BTreeSet::new();
        for theta in &input.base {
            for (x, t) in theta.iter() {
                vars.insert(x.clone());
                match t {
                    Term::Var(y) => {
                        vars.insert(y.clone());
                    }
                    Term::App(c, _) => {
                        consts.insert(c.clone());
                    }
                    Term::Bound(_) => unreachable!("substitution images are locally closed"),
                }
            }
        }
        Encoding { vars: vars.into_iter().collect(), consts: consts.into_iter().collect() }
    }

    fn var_code(&self, x: &Name) -> u16 {
        self.vars.binary_search(x).expect("variable in universe") as u16
    }

    fn encode(&self, theta: &Substitution) -> Vec<u16> {
        let mut code: Vec<u16> = (0..self.vars.len() as u16).collect();
        for (x, t) in theta.iter() {
            code[self.var_code(x) as usize] = match t {
                Term::Var(y) => self.var_code(y),
                Term::App(c, _) => {
                    (self.vars.len() + self.consts.binary_search(c).expect("constant in universe")) as u16
                }
                Term::Bound(_) => unreachable!(),
            };
        }
        code
    }

    fn decode(&self, code: &[u16]) -> Substitution {
        let nv = self.vars.len();
        Substitution::from_pairs(code.iter().enumerate().map(|(i, &c)| {
            let c = c as usize;
            let t = if c < nv { Term::Var(self.vars[c].clone()) } else { Term::App(self.consts[c - nv].clone(), vec![]) };
            (self.vars[i].clone(), t)
        }))
    }
}

fn compose_codes(a: &[u16], b: &[u16]) -> Vec<u16> {
    let nv = a.len();
    a.iter().map(|&c| if (c as usize) < nv { b[c as usize] } else { c }).collect()
}

/// Computes the closure as a least fixpoint.
pub fn psc(input: &ClosureInput) -> Result<Closure, PscError> {
    input.check_atomic()?;
    let enc = Encoding::new(input);
    let x_codes: Vec<(u16, &Name)> = input.vars.iter().map(|x| (enc.var_code(x), x)).collect();

    let mut codes: Vec<Vec<u16>> = Vec::new();
    let mut witnesses: Vec<Witness> = Vec::new();
    let mut seen: HashMap<Vec<u16>, usize> = HashMap::new();
    let mut push = |code: Vec<u16>, w: Witness, codes: &mut Vec<Vec<u16>>, witnesses: &mut Vec<Witness>| {
        if !seen.contains_key(&code) {
            seen.insert(code.clone(), codes.len());
            codes.push(code);
            witnesses.push(w);
        }
    };

    for theta in &input.base {
        push(enc.encode(theta), Witness::Base, &mut codes, &mut witnesses);
    }
    let mut processed = 0;
    while processed < codes.len() {
        let i = processed;
        processed += 1;
        for &(xc, x) in &x_codes {
            for &(yc, y) in &x_codes {
                let mut next = codes[i].clone();
                next[xc as usize] = yc;
                push(next, Witness::Override { of: i, var: x.clone(), to: y.clone() }, &mut codes, &mut witnesses);
            }
        }
        for j in 0..=i {
            let ij = compose_codes(&codes[i], &codes[j]);
            push(ij, Witness::Compose(i, j), &mut codes, &mut witnesses);
            let ji = compose_codes(&codes[j], &codes[i]);
            push(ji, Witness::Compose(j, i), &mut codes, &mut witnesses);
        }
    }

    let elements: Vec<Substitution> = codes.iter().map(|c| enc.decode(c)).collect();
    let index = elements.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    Ok(Closure { elements, witnesses, index })
}

/// Upper bound on the closure size: every element sends each variable of
/// `dom(Θ) ∪ X` into `img(Θ) ∪ X` or leaves it fixed, giving
/// `∏_{v ∈ dom(Θ)∪X} #(img(Θ) ∪ X ∪ {v})`. This is `#(img(Θ)∪X)^#(dom(Θ)∪X)`
/// whenever `dom(Θ) ⊆ img(Θ) ∪ X`. The empty product is 1. Saturates at
/// `u128::MAX`.
pub fn psc_bound(input: &ClosureInput) -> Result<u128, PscError> {
    input.check_atomic()?;
    let mut domain: BTreeSet<Name> = input.vars.clone();
    let mut targets: BTreeSet<Term> = input.vars.iter().map(|x| Term::Var(x.clone())).collect();
    for theta in &input.base {
        for (x, t) in theta.iter() {
            domain.insert(x.clone());
            targets.insert(t.clone());
        }
    }
    let mut bound: u128 = 1;
    for v in &domain {
        let extra = u128::from(!targets.contains(&Term::Var(v.clone())));
        bound = bound.saturating_mul(targets.len() as u128 + extra);
    }
    Ok(bound)
}
