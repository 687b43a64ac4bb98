use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{substitute, unify, Atom, Bindings, Fact, KnowledgeBase, Rule};

/// One rule instance producing a fact.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Derivation {
    pub rule: String,
    /// Body atoms instantiated, in body order.
    pub premises: Vec<Fact>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivedFact {
    pub fact: Fact,
    /// Fixpoint round in which the fact first appeared (base facts: 0).
    pub round: usize,
    /// Every rule instance of that round; premises come from earlier rounds.
    pub derivations: Vec<Derivation>,
}

/// Derivation forest of a closure.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct ProofTrace {
    pub base: Vec<Fact>,
    /// Sorted by fact.
    pub derived: Vec<DerivedFact>,
}

impl ProofTrace {
    pub fn derivation_of(&self, fact: &Fact) -> Option<&DerivedFact> {
        self.derived.binary_search_by(|d| d.fact.cmp(fact)).ok().map(|i| &self.derived[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Closure {
    pub facts: BTreeSet<Fact>,
    pub trace: ProofTrace,
}

impl Closure {
    pub fn contains(&self, f: &Fact) -> bool {
        self.facts.contains(f)
    }

    /// Facts matching `pattern`, in lexicographic order.
    pub fn matching(&self, pattern: &Atom) -> Vec<&Fact> {
        self.facts.iter().filter(|f| unify(pattern, f, &mut Vec::new())).collect()
    }
}

/// Facts grouped by predicate, each tagged with the round it appeared in.
#[derive(Default)]
struct Index<'a> {
    by_pred: BTreeMap<&'a str, Vec<(&'a Fact, usize)>>,
}

/// Enumerates every instance of `body` where atom `i` matches a fact whose
/// round satisfies `allowed(i, round)`.
pub(crate) fn for_each_instance<'f>(
    body: &[Atom],
    candidates: &dyn Fn(&str) -> Vec<(&'f Fact, usize)>,
    allowed: &dyn Fn(usize, usize) -> bool,
    emit: &mut dyn FnMut(&Bindings, &[&'f Fact]),
) {
    fn go<'f>(
        body: &[Atom],
        i: usize,
        b: &mut Bindings,
        chosen: &mut Vec<&'f Fact>,
        candidates: &dyn Fn(&str) -> Vec<(&'f Fact, usize)>,
        allowed: &dyn Fn(usize, usize) -> bool,
        emit: &mut dyn FnMut(&Bindings, &[&'f Fact]),
    ) {
        if i == body.len() {
            emit(b, chosen);
            return;
        }
        for (f, round) in candidates(&body[i].pred) {
            if !allowed(i, round) {
                continue;
            }
            let mark = b.len();
            if unify(&body[i], f, b) {
                chosen.push(f);
                go(body, i + 1, b, chosen, candidates, allowed, emit);
                chosen.pop();
                b.truncate(mark);
            }
        }
    }
    go(body, 0, &mut Vec::new(), &mut Vec::new(), candidates, allowed, emit);
}

fn head_fact(rule: &Rule, b: &Bindings) -> Fact {
    substitute(&rule.head, b).to_fact().expect("range restriction grounds the head")
}

/// Least fixpoint by semi-naive iteration.
///
/// Round `r` only fires rule instances with at least one premise from round
/// `r − 1`; atoms before the first such premise use strictly older facts, so
/// every instance fires exactly once.
pub fn forward_chain(kb: &KnowledgeBase) -> Closure {
    let base: BTreeSet<Fact> = kb.facts.iter().cloned().collect();
    let mut round_of: BTreeMap<Fact, usize> = base.iter().map(|f| (f.clone(), 0)).collect();
    let mut derived: BTreeMap<Fact, (usize, BTreeSet<(usize, Derivation)>)> = BTreeMap::new();

    for round in 1.. {
        let mut index = Index::default();
        for (f, r) in &round_of {
            index.by_pred.entry(f.pred.as_str()).or_default().push((f, *r));
        }
        let prev = round - 1;
        let candidates = |p: &str| index.by_pred.get(p).cloned().unwrap_or_default();
        let mut fresh: BTreeMap<Fact, BTreeSet<(usize, Derivation)>> = BTreeMap::new();
        for (ri, rule) in kb.rules.iter().enumerate() {
            for delta_pos in 0..rule.body.len() {
                let allowed = |i: usize, r: usize| match i.cmp(&delta_pos) {
                    std::cmp::Ordering::Less => r < prev,
                    std::cmp::Ordering::Equal => r == prev,
                    std::cmp::Ordering::Greater => true,
                };
                for_each_instance(&rule.body, &candidates, &allowed, &mut |b, premises| {
                    let head = head_fact(rule, b);
                    if round_of.contains_key(&head) {
                        return;
                    }
                    let d = Derivation { rule: rule.name.clone(), premises: premises.iter().map(|f| (*f).clone()).collect() };
                    fresh.entry(head).or_default().insert((ri, d));
                });
            }
        }
        if fresh.is_empty() {
            break;
        }
        for (f, ds) in fresh {
            round_of.insert(f.clone(), round);
            derived.insert(f, (round, ds));
        }
    }

    let trace = ProofTrace {
        base: base.iter().cloned().collect(),
        derived: derived
            .into_iter()
            .map(|(fact, (round, ds))| DerivedFact {
                fact,
                round,
                derivations: ds.into_iter().map(|(_, d)| d).collect(),
            })
            .collect(),
    };
    Closure { facts: round_of.into_keys().collect(), trace }
}
