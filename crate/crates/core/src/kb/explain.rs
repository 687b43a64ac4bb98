use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::chain::{for_each_instance, Closure};
use super::{forward_chain, lookup, substitute, unify, Atom, Bindings, Fact, KnowledgeBase, Term};

/// Derivation tree; leaves are base facts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProofTree {
    pub fact: Fact,
    /// `None` for a base fact.
    pub rule: Option<String>,
    pub premises: Vec<ProofTree>,
}

impl ProofTree {
    /// Number of rule applications in the tree.
    pub fn size(&self) -> usize {
        self.rule.is_some() as usize + self.premises.iter().map(ProofTree::size).sum::<usize>()
    }

    /// Base facts at the leaves, in tree order.
    pub fn leaves(&self) -> Vec<&Fact> {
        if self.rule.is_none() {
            return vec![&self.fact];
        }
        self.premises.iter().flat_map(ProofTree::leaves).collect()
    }

    pub fn contains(&self, f: &Fact) -> bool {
        &self.fact == f || self.premises.iter().any(|p| p.contains(f))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BodyStatus {
    /// Body atom under the instance's bindings; may keep free variables.
    pub atom: Atom,
    pub satisfied: bool,
}

/// A rule instance whose head matches the query but whose body fails.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailedInstance {
    pub rule: String,
    pub head: Atom,
    pub body: Vec<BodyStatus>,
}

impl FailedInstance {
    pub fn missing(&self) -> impl Iterator<Item = &Atom> {
        self.body.iter().filter(|s| !s.satisfied).map(|s| &s.atom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Refusal {
    pub query: Atom,
    /// Per candidate rule, the instances with the fewest failed body atoms.
    pub candidates: Vec<FailedInstance>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum Explanation {
    Proven { proof: ProofTree },
    Refused { refusal: Refusal },
}

/// Cap on reported instances per rule.
const MAX_INSTANCES: usize = 16;

/// Explains `query` against the closure of `kb`.
pub fn explain(kb: &KnowledgeBase, query: &Atom) -> Explanation {
    let closure = forward_chain(kb);
    explain_in(kb, &closure, query)
}

pub(crate) fn explain_in(kb: &KnowledgeBase, closure: &Closure, query: &Atom) -> Explanation {
    match closure.matching(query).first() {
        Some(f) => Explanation::Proven { proof: minimal_proof(kb, closure, f) },
        None => Explanation::Refused { refusal: refuse(kb, closure, query) },
    }
}

/// Fewest-rule-application derivation tree of a closure fact; ties broken
/// by rule order, then premises lexicographically.
pub(crate) fn minimal_proof(kb: &KnowledgeBase, closure: &Closure, fact: &Fact) -> ProofTree {
    // every rule instance over the closure
    let facts: Vec<&Fact> = closure.facts.iter().collect();
    let candidates = |p: &str| facts.iter().filter(|f| f.pred == p).map(|f| (*f, 0)).collect::<Vec<_>>();
    let mut instances: BTreeMap<&Fact, Vec<(usize, Vec<&Fact>)>> = BTreeMap::new();
    for (ri, rule) in kb.rules.iter().enumerate() {
        for_each_instance(&rule.body, &candidates, &|_, _| true, &mut |b, premises| {
            let head = substitute(&rule.head, b).to_fact().expect("range-restricted");
            if let Some(h) = closure.facts.get(&head) {
                instances.entry(h).or_default().push((ri, premises.to_vec()));
            }
        });
    }

    let base: BTreeSet<&Fact> = kb.facts.iter().collect();
    let mut cost: BTreeMap<&Fact, usize> = base.iter().map(|f| (*f, 0)).collect();
    let mut best: BTreeMap<&Fact, (usize, Vec<&Fact>)> = BTreeMap::new();
    loop {
        let mut changed = false;
        for (head, list) in &instances {
            if base.contains(head) {
                continue;
            }
            for (ri, premises) in list {
                let Some(c) = premises.iter().map(|p| cost.get(p).copied()).sum::<Option<usize>>() else {
                    continue;
                };
                let c = c + 1;
                let candidate = (*ri, premises.clone());
                let better = match (cost.get(head), best.get(head)) {
                    (Some(&old), Some(b)) => c < old || (c == old && candidate < *b),
                    _ => true,
                };
                if better {
                    cost.insert(head, c);
                    best.insert(head, candidate);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    fn build(f: &Fact, best: &BTreeMap<&Fact, (usize, Vec<&Fact>)>, kb: &KnowledgeBase) -> ProofTree {
        match best.get(f) {
            None => ProofTree { fact: f.clone(), rule: None, premises: Vec::new() },
            Some((ri, premises)) => ProofTree {
                fact: f.clone(),
                rule: Some(kb.rules[*ri].name.clone()),
                premises: premises.iter().map(|p| build(p, best, kb)).collect(),
            },
        }
    }
    build(fact, &best, kb)
}

/// Binds head variables to the query's constants.
fn unify_head(head: &Atom, query: &Atom) -> Option<Bindings> {
    if head.pred != query.pred || head.args.len() != query.args.len() {
        return None;
    }
    let mut b = Bindings::new();
    for (h, q) in head.args.iter().zip(&query.args) {
        match (h, q) {
            (_, Term::Var(_)) => {}
            (Term::Const(x), Term::Const(y)) if x != y => return None,
            (Term::Const(_), Term::Const(_)) => {}
            (Term::Var(v), Term::Const(c)) => match lookup(&b, v) {
                Some(bound) if bound != c => return None,
                Some(_) => {}
                None => b.push((v.clone(), c.clone())),
            },
        }
    }
    Some(b)
}

fn refuse(kb: &KnowledgeBase, closure: &Closure, query: &Atom) -> Refusal {
    let mut candidates = Vec::new();
    for rule in &kb.rules {
        let Some(b0) = unify_head(&rule.head, query) else { continue };
        // depth-first over body atoms: each either matches a closure fact or fails
        let mut found: BTreeSet<Vec<(Atom, bool)>> = BTreeSet::new();
        let mut best_failed = usize::MAX;
        #[allow(clippy::too_many_arguments)]
        fn go(
            body: &[Atom],
            i: usize,
            b: &mut Bindings,
            status: &mut Vec<(Atom, bool)>,
            failed: usize,
            closure: &Closure,
            best: &mut usize,
            found: &mut BTreeSet<Vec<(Atom, bool)>>,
        ) {
            if failed > *best {
                return;
            }
            if i == body.len() {
                if failed < *best {
                    *best = failed;
                    found.clear();
                }
                found.insert(status.clone());
                return;
            }
            let pattern = substitute(&body[i], b);
            let matches = closure.matching(&pattern);
            for f in matches {
                let mark = b.len();
                unify(&body[i], f, b);
                status.push((substitute(&body[i], b), true));
                go(body, i + 1, b, status, failed, closure, best, found);
                status.pop();
                b.truncate(mark);
            }
            status.push((pattern, false));
            go(body, i + 1, b, status, failed + 1, closure, best, found);
            status.pop();
        }
        let mut b = b0.clone();
        go(&rule.body, 0, &mut b, &mut Vec::new(), 0, closure, &mut best_failed, &mut found);
        for status in found.into_iter().take(MAX_INSTANCES) {
            // re-derive the head under the satisfied atoms' bindings
            let mut hb = b0.clone();
            for ((a, ok), orig) in status.iter().zip(&rule.body) {
                if *ok {
                    if let Some(f) = a.to_fact() {
                        unify(orig, &f, &mut hb);
                    }
                }
            }
            candidates.push(FailedInstance {
                rule: rule.name.clone(),
                head: substitute(&rule.head, &hb),
                body: status.into_iter().map(|(atom, satisfied)| BodyStatus { atom, satisfied }).collect(),
            });
        }
    }
    Refusal { query: query.clone(), candidates }
}
