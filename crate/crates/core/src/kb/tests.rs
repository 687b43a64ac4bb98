use std::collections::BTreeSet;

use proptest::prelude::*;

use super::*;
use crate::dsl::{validate_program, SkillType};
use crate::{BENCHMARK_PROGRAM, REFERENCE_KB};

fn fact(s: &str) -> Fact {
    parse_atom(s).unwrap().to_fact().unwrap()
}

fn reference() -> KnowledgeBase {
    parse_kb(REFERENCE_KB).unwrap()
}

fn with_uncertainty(level: &str) -> KnowledgeBase {
    let mut kb = reference();
    kb.assert_unique(Fact::new("position_uncertainty", vec![Constant::sym("t1"), Constant::sym(level)]));
    kb
}

#[test]
fn single_fact() {
    let kb = parse_kb("fact task_type(t1, insertion).").unwrap();
    assert_eq!(kb.facts, vec![fact("task_type(t1, insertion)")]);
    assert!(kb.rules.is_empty() && kb.templates.is_empty());
}

#[test]
fn empty_file_is_empty_kb() {
    assert_eq!(parse_kb("").unwrap(), KnowledgeBase::default());
    assert_eq!(parse_kb("# only a comment\n").unwrap(), KnowledgeBase::default());
}

#[test]
fn range_restriction_is_enforced() {
    let err = parse_kb("rule h(X, Y) :- b(X).").unwrap_err();
    assert_eq!(err, KbError::NotRangeRestricted { rule: "R1".into(), variable: "Y".into() });
    let err = parse_kb("fact a(x).\nrule named: h(Z) :- a(x).").unwrap_err();
    assert!(matches!(err, KbError::NotRangeRestricted { ref rule, .. } if rule == "named"));
}

#[test]
fn parse_errors_have_classes() {
    for (src, kind) in [
        ("fact a(X).", "non_ground_fact"),
        ("fact a(x)", "syntax"),
        ("rule a(x) :- .", "syntax"),
        ("rule r: a(x) :- b(x).\nrule r: c(x) :- b(x).", "duplicate_rule"),
        ("template t { skill = insert; priority = 1; param depth = 1; param v = 1; param f_max = 1; }", "invalid_template"),
        ("template t { guard = g(T); skill = warp; priority = 1; }", "invalid_template"),
        ("template t { guard = g(T); skill = gripper_open; priority = 1; param width = 5 in [0, 1]; }", "template_default"),
        ("template t { guard = g(T); skill = gripper_open; priority = 1.5; param width = 0; }", "syntax"),
        ("template t { guard = g(T); skill = gripper_open; priority = 1; param width = 0; }\ntemplate t { guard = g(T); skill = gripper_open; priority = 1; param width = 0; }", "duplicate_template"),
    ] {
        assert_eq!(parse_kb(src).unwrap_err().kind(), kind, "{src}");
    }
}

#[test]
fn single_rule_closure_and_trace() {
    let kb = parse_kb("fact a(x).\nrule b(X) :- a(X).").unwrap();
    let c = forward_chain(&kb);
    assert_eq!(c.facts, [fact("a(x)"), fact("b(x)")].into_iter().collect());
    let d = c.trace.derivation_of(&fact("b(x)")).unwrap();
    assert_eq!(d.derivations, vec![Derivation { rule: "R1".into(), premises: vec![fact("a(x)")] }]);
}

#[test]
fn no_rules_closure_is_facts() {
    let kb = parse_kb("fact a(x).\nfact b(y, 2).").unwrap();
    let c = forward_chain(&kb);
    assert_eq!(c.facts.len(), 2);
    assert!(c.trace.derived.is_empty());
}

#[test]
fn rule_chain_of_k() {
    let k = 12;
    let mut src = String::from("fact a1(c).\n");
    for i in 1..k {
        src += &format!("rule a{}(X) :- a{i}(X).\n", i + 1);
    }
    let c = forward_chain(&parse_kb(&src).unwrap());
    assert_eq!(c.facts.len(), k);
    for d in &c.trace.derived {
        assert_eq!(d.derivations.len(), 1);
    }
    assert_eq!(c.trace.derived.iter().map(|d| d.round).max(), Some(k - 1));
}

#[test]
fn trace_replays_to_base_facts() {
    let c = forward_chain(&reference());
    let base: BTreeSet<&Fact> = c.trace.base.iter().collect();
    for d in &c.trace.derived {
        assert!(!d.derivations.is_empty());
        for der in &d.derivations {
            for p in &der.premises {
                // acyclic: premises are strictly older
                let round = if base.contains(p) { 0 } else { c.trace.derivation_of(p).unwrap().round };
                assert!(round < d.round);
            }
        }
    }
}

#[test]
fn high_uncertainty_emits_search() {
    let (p, trace) = synthesize_program(&with_uncertainty("high"), "t1").unwrap();
    assert!(p.skills().iter().any(|s| s.skill_type() == SkillType::SpiralSearch));
    assert!(validate_program(&p.to_draft()).is_empty());
    let search = trace.skills.iter().find(|s| s.skill_type == SkillType::SpiralSearch).unwrap();
    assert_eq!(search.guard, fact("requires_search(t1)"));
    assert_eq!(search.proof.rule.as_deref(), Some("R3"));
    assert!(search.proof.contains(&fact("position_uncertainty(t1, high)")));
    assert!(trace.closure.derivation_of(&fact("requires_search(t1)")).is_some());
    assert_eq!(p.name(), "insert_peg");
}

#[test]
fn low_uncertainty_skips_search() {
    let (p, trace) = synthesize_program(&with_uncertainty("low"), "t1").unwrap();
    let labels: Vec<&str> = p.skills().iter().map(|s| s.label()).collect();
    assert_eq!(labels, ["approach", "touch", "push", "retract"]);
    assert_eq!(trace.not_emitted, vec!["search".to_string()]);
}

#[test]
fn pitch_follows_clearance() {
    let (p, trace) = synthesize_program(&reference(), "t1").unwrap();
    assert_eq!(p.skill("search").unwrap().value("pitch"), 0.001);
    let d = trace.skills[2].params.iter().find(|d| d.param == "pitch").unwrap();
    assert_eq!(d.source, Some(fact("clearance(t1, 0.0005)")));
}

#[test]
fn reference_program_shares_benchmark_structure() {
    let (p, _) = synthesize_program(&reference(), "t1").unwrap();
    let bench: crate::dsl::SkillProgram = BENCHMARK_PROGRAM.parse().unwrap();
    assert_eq!(p.structure_hash(), bench.structure_hash());
}

#[test]
fn synthesis_is_deterministic() {
    let a = synthesize_program(&reference(), "t1").unwrap().0.to_string();
    let b = synthesize_program(&parse_kb(&reference().to_string()).unwrap(), "t1").unwrap().0.to_string();
    assert_eq!(a, b);
}

#[test]
fn synthesis_errors() {
    assert_eq!(synthesize_program(&reference(), "t9").unwrap_err(), SynthesisError::UnknownTask("t9".into()));
    let kb = parse_kb("fact task_type(t1, welding).").unwrap();
    assert_eq!(synthesize_program(&kb, "t1").unwrap_err(), SynthesisError::NoTemplates("t1".into()));
    let mut kb = reference();
    kb.retract("clearance", &Constant::sym("t1"));
    assert!(matches!(synthesize_program(&kb, "t1"), Err(SynthesisError::MissingNumericFact { .. })));
    // a derived depth outside the template bounds
    let mut kb = reference();
    kb.assert_unique(fact("hole_depth(t1, 0.5)"));
    assert!(matches!(synthesize_program(&kb, "t1"), Err(SynthesisError::Invalid(_))));
}

#[test]
fn equal_priorities_break_ties_by_name() {
    let src = "fact task_type(t, x).
        template zeta { guard = task_type(T, x); skill = gripper_open; priority = 5; param width = 0.01; }
        template alpha { guard = task_type(T, x); skill = gripper_close; priority = 5; param width = 0.0; }
        template first { guard = task_type(T, x); skill = gripper_open; priority = 1; param width = 0.02; }";
    let (p, trace) = synthesize_program(&parse_kb(src).unwrap(), "t").unwrap();
    let labels: Vec<&str> = p.skills().iter().map(|s| s.label()).collect();
    assert_eq!(labels, ["first", "alpha", "zeta"]);
    assert_eq!(trace.tie_breaks, vec![TieBreak { priority: 5, order: vec!["alpha".into(), "zeta".into()] }]);
}

#[test]
fn explain_derivable_fact() {
    let kb = parse_kb("fact a(x).\nrule b(X) :- a(X).").unwrap();
    match explain(&kb, &parse_atom("b(x)").unwrap()) {
        Explanation::Proven { proof } => {
            assert_eq!(proof.size(), 1);
            assert_eq!(proof.leaves(), vec![&fact("a(x)")]);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn explain_prefers_smallest_tree() {
    let kb = parse_kb(
        "fact a(x).
         rule c(X) :- a(X).
         rule d(X) :- c(X).
         rule e(X) :- d(X).
         rule goal(X) :- e(X).
         rule goal(X) :- c(X).",
    )
    .unwrap();
    let Explanation::Proven { proof } = explain(&kb, &parse_atom("goal(x)").unwrap()) else { panic!() };
    assert_eq!(proof.size(), 2);
    assert_eq!(proof.rule.as_deref(), Some("R5"));
}

#[test]
fn explain_refuses_with_missing_premise() {
    let kb = parse_kb("fact a(x).\nrule b(X) :- a(X), c(X).").unwrap();
    let Explanation::Refused { refusal } = explain(&kb, &parse_atom("b(x)").unwrap()) else { panic!() };
    assert_eq!(refusal.candidates.len(), 1);
    let missing: Vec<String> = refusal.candidates[0].missing().map(|a| a.to_string()).collect();
    assert_eq!(missing, vec!["c(x)".to_string()]);
}

#[test]
fn explain_refuses_search_under_low_uncertainty() {
    let Explanation::Refused { refusal } = explain(&with_uncertainty("low"), &parse_atom("requires_search(t1)").unwrap())
    else {
        panic!()
    };
    let missing: Vec<String> = refusal.candidates[0].missing().map(|a| a.to_string()).collect();
    assert_eq!(missing, vec!["position_uncertainty(t1, high)".to_string()]);
}

#[test]
fn explain_without_candidates() {
    let kb = parse_kb("fact a(x).").unwrap();
    let Explanation::Refused { refusal } = explain(&kb, &parse_atom("zz(x)").unwrap()) else { panic!() };
    assert!(refusal.candidates.is_empty());
}

#[test]
fn reference_kb_round_trips() {
    let kb = reference();
    assert_eq!(kb.rules.len(), 5);
    assert_eq!(kb.rules[2].name, "R3");
    let priorities: Vec<i64> = kb.templates.iter().map(|t| t.priority).collect();
    assert_eq!(priorities, [10, 20, 30, 40, 50]);
    let text = kb.to_string();
    assert_eq!(parse_kb(&text).unwrap(), kb);
    assert_eq!(parse_kb(&text).unwrap().to_string(), text);
}

#[test]
fn constants_print_parseably() {
    let kb = parse_kb("fact p(-0.5, \"Mixed Case\", 1e-7, sym_1).").unwrap();
    let text = kb.to_string();
    assert_eq!(parse_kb(&text).unwrap(), kb);
}

/// Naive fixpoint: fire every rule over every fact combination until stable.
fn naive_closure(kb: &KnowledgeBase) -> BTreeSet<Fact> {
    let mut facts: BTreeSet<Fact> = kb.facts.iter().cloned().collect();
    loop {
        let snapshot: Vec<Fact> = facts.iter().cloned().collect();
        let mut added = false;
        for rule in &kb.rules {
            let mut stack: Vec<(usize, Bindings)> = vec![(0, Vec::new())];
            while let Some((i, b)) = stack.pop() {
                if i == rule.body.len() {
                    let head = substitute(&rule.head, &b).to_fact().unwrap();
                    added |= facts.insert(head);
                    continue;
                }
                for f in &snapshot {
                    let mut nb = b.clone();
                    if unify(&rule.body[i], f, &mut nb) {
                        stack.push((i + 1, nb));
                    }
                }
            }
        }
        if !added {
            return facts;
        }
    }
}

fn arb_kb() -> impl Strategy<Value = KnowledgeBase> {
    let consts = ["a", "b", "c", "d"];
    let preds = [("p", 1), ("q", 2), ("r", 1), ("s", 2)];
    let fact_s = (0..preds.len(), 0..4usize, 0..4usize).prop_map(move |(p, x, y)| {
        let (name, arity) = preds[p];
        let args = [x, y][..arity].iter().map(|i| Constant::sym(consts[*i])).collect();
        Fact::new(name, args)
    });
    let var = prop_oneof![Just("X"), Just("Y"), Just("Z")];
    let term = prop_oneof![
        3 => var.prop_map(|v| Term::Var(v.into())),
        1 => (0..4usize).prop_map(move |i| Term::Const(Constant::sym(consts[i]))),
    ];
    let atom = (0..preds.len(), term.clone(), term).prop_map(move |(p, a, b)| {
        let (name, arity) = preds[p];
        Atom { pred: name.into(), args: [a, b][..arity].to_vec() }
    });
    let rule = (atom.clone(), prop::collection::vec(atom, 1..4)).prop_filter_map("range restricted", |(head, body)| {
        let ok = head.variables().all(|v| body.iter().any(|a| a.variables().any(|w| w == v)));
        ok.then(|| Rule { name: String::new(), head, body })
    });
    (prop::collection::vec(fact_s, 0..12), prop::collection::vec(rule, 0..6)).prop_map(|(facts, rules)| {
        let rules = rules.into_iter().enumerate().map(|(i, r)| Rule { name: format!("R{}", i + 1), ..r }).collect();
        KnowledgeBase { facts, rules, templates: Vec::new() }
    })
}

proptest! {
    #[test]
    fn closure_equals_naive_fixpoint(kb in arb_kb()) {
        prop_assert_eq!(forward_chain(&kb).facts, naive_closure(&kb));
    }

    #[test]
    fn closure_is_monotone(kb in arb_kb(), extra in 0..4usize) {
        let before = forward_chain(&kb).facts;
        let mut more = kb.clone();
        more.facts.push(Fact::new("p", vec![Constant::sym(["a", "b", "c", "d"][extra])]));
        let after = forward_chain(&more).facts;
        prop_assert!(before.is_subset(&after));
    }

    #[test]
    fn every_derived_fact_has_a_proof(kb in arb_kb()) {
        let c = forward_chain(&kb);
        for d in &c.trace.derived {
            prop_assert!(!d.derivations.is_empty());
            let Explanation::Proven { proof } = explain(&kb, &d.fact.to_atom()) else {
                return Err(TestCaseError::fail("derived fact not provable"));
            };
            for leaf in proof.leaves() {
                prop_assert!(kb.facts.contains(leaf));
            }
        }
    }

    #[test]
    fn kb_text_round_trips(kb in arb_kb()) {
        let text = kb.to_string();
        prop_assert_eq!(parse_kb(&text).unwrap(), kb);
    }
}
