mod common;

use std::collections::BTreeSet;

use cyclop::calculus::{check_rule_instance, pairs_preserved, subst_apply_rule, RuleError, RuleId, RuleSet};
use cyclop::proofio::{parse_formula, parse_proof, print_proof};
use cyclop::psc::{psc, psc_bound, ClosureInput};
use cyclop::syntax::{Name, Substitution, Term};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_input(rng: &mut ChaCha8Rng, max_vars: usize) -> ClosureInput {
    let nv = rng.gen_range(1..=max_vars);
    let vars: Vec<&str> = common::VARS[..nv].to_vec();
    let nc = rng.gen_range(0..=2);
    let base: Vec<Substitution> = (0..rng.gen_range(0..=2))
        .map(|_| {
            let mut pairs = Vec::new();
            for x in &vars {
                if rng.gen_bool(0.5) {
                    let t = if nc > 0 && rng.gen_bool(0.3) {
                        Term::constant(common::CONSTS[rng.gen_range(0..nc)])
                    } else {
                        Term::var(vars[rng.gen_range(0..nv)])
                    };
                    pairs.push((Name::new(x), t));
                }
            }
            Substitution::from_pairs(pairs)
        })
        .collect();
    let xs = vars.iter().filter(|_| rng.gen_bool(0.7)).map(|v| Name::new(v));
    ClosureInput::new(base, xs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closure_matches_brute_force(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = random_input(&mut rng, 3);
        let c = psc(&input).unwrap();
        prop_assert!(c.elements().iter().all(Substitution::is_atomic));
        prop_assert!(c.replay(&input).is_ok());
        prop_assert!(c.len() as u128 <= psc_bound(&input).unwrap());
        let base: Vec<common::Plain> = input.base.iter().map(common::plain).collect();
        let vars: Vec<String> = input.vars.iter().map(|v| v.to_string()).collect();
        let ours: BTreeSet<common::Plain> = c.elements().iter().map(common::plain).collect();
        prop_assert_eq!(ours, common::brute_closure(&base, &vars));
    }

    #[test]
    fn rule_instances_survive_atomic_substitutions(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let defs = common::defs();
        let rules = RuleSet::from_rules(RuleId::ALL);
        for &id in RuleId::ALL.iter().filter(|&&r| r != RuleId::Subst) {
            let inst = common::instance(&mut rng, id, &defs);
            let map = check_rule_instance(&inst, &defs, &rules)
                .unwrap_or_else(|e| panic!("generated {:?} is malformed: {e}", id));
            let theta = common::atomic_subst(&mut rng);
            let (new, thetas) = subst_apply_rule(&inst, &theta, &defs).unwrap();
            let new_map = check_rule_instance(&new, &defs, &rules);
            prop_assert!(new_map.is_ok(), "{:?} under {}: {:?}", id, theta, new_map);
            prop_assert!(pairs_preserved(&inst, &map, &new, &new_map.unwrap(), &theta, &thetas));
            for (i, t) in thetas.iter().enumerate() {
                let mut xs = inst.conclusion.free_vars();
                xs.extend(inst.premises[i].free_vars());
                prop_assert!(common::replays_by_override(&theta, t, &xs), "{:?}: {} from {}", id, t, theta);
                let input = ClosureInput::new([theta.clone()], xs);
                if psc_bound(&input).unwrap() <= 300 {
                    prop_assert!(psc(&input).unwrap().contains(t));
                }
            }
        }
    }

    #[test]
    fn composite_substitutions_are_rejected(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let defs = common::defs();
        let inst = common::instance(&mut rng, RuleId::OrR, &defs);
        let theta = Substitution::single("x", Term::app("f", vec![Term::var("x"), Term::var("y")]));
        prop_assert_eq!(subst_apply_rule(&inst, &theta, &defs).unwrap_err(), RuleError::CompositeSubstitution(theta));
    }

    #[test]
    fn formulas_print_and_reparse(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let defs = common::defs();
        let phi = common::formula(&mut rng, 3);
        let back = parse_formula(&phi.to_string(), defs.signature());
        prop_assert_eq!(back, Ok(phi));
    }
}

#[test]
fn worked_closure_example() {
    let input = ClosureInput::new([Substitution::single("y", Term::var("x"))], [Name::new("x"), Name::new("y")]);
    let c = psc(&input).unwrap();
    let brute = common::brute_closure(&[common::plain(&Substitution::single("y", Term::var("x")))], &["x".into(), "y".into()]);
    assert_eq!(brute.len(), 4);
    assert_eq!(c.elements().iter().map(common::plain).collect::<BTreeSet<_>>(), brute);
}

#[test]
fn corpus_prints_canonically() {
    for name in common::CORPUS {
        let p = common::corpus(name);
        let once = print_proof(&p);
        let twice = print_proof(&parse_proof(&once).unwrap());
        assert_eq!(once, twice, "{name}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gtc_agrees_with_oracle_on_mutants(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in common::mutated_proofs(&mut rng, 8) {
            let v = cyclop::gtc::check_gtc(&p).unwrap();
            prop_assert_eq!(Ok(v.holds()), cyclop::gtc::gtc_oracle(&p, 64));
            prop_assert!(cyclop::gtc::verify_verdict(&p, &v).is_ok());
        }
    }
}
