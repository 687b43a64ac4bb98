use serde::Serialize;
use thiserror::Error;

use crate::dsl::{DslError, ParamValue, ProgramDraft, SkillDraft, SkillProgram, SkillType};

use super::chain::{forward_chain, Closure, ProofTrace};
use super::explain::{minimal_proof, ProofTree};
use super::{substitute, unify, Atom, Bindings, Constant, Fact, KnowledgeBase, SkillTemplate, Term};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthesisError {
    #[error("unknown task {0}: no task_type({0}, _) in the closure")]
    UnknownTask(String),
    #[error("no template matches task {0}")]
    NoTemplates(String),
    #[error("template {template}, parameter {param}: no numeric fact for {source_atom}")]
    MissingNumericFact { template: String, param: String, source_atom: String },
    #[error("template {template}, parameter {param}: several facts for {source_atom}")]
    AmbiguousNumericFact { template: String, param: String, source_atom: String },
    #[error("synthesized program is invalid: {0}")]
    Invalid(DslError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamDerivation {
    pub param: String,
    pub value: f64,
    /// Formula as written in the template.
    pub formula: String,
    /// Numeric fact the value was computed from.
    pub source: Option<Fact>,
}

/// Why one skill was emitted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkillJustification {
    pub label: String,
    pub template: String,
    pub skill_type: SkillType,
    pub priority: i64,
    pub guard: Fact,
    pub proof: ProofTree,
    pub params: Vec<ParamDerivation>,
}

/// Templates of equal priority, in the emitted (name) order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TieBreak {
    pub priority: i64,
    pub order: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthesisTrace {
    pub task: String,
    pub task_fact: Fact,
    pub closure: ProofTrace,
    pub skills: Vec<SkillJustification>,
    /// Templates whose guard does not hold for the task.
    pub not_emitted: Vec<String>,
    pub tie_breaks: Vec<TieBreak>,
}

/// First closure fact matching the template guard with the task bound.
fn guard_fact<'c>(t: &SkillTemplate, task: &Constant, closure: &'c Closure) -> Option<(&'c Fact, Bindings)> {
    let b: Bindings = vec![(t.task_var().to_string(), task.clone())];
    let pattern = substitute(&t.guard, &b);
    let f = *closure.matching(&pattern).first()?;
    let mut b = b;
    unify(&t.guard, f, &mut b);
    Some((f, b))
}

fn numeric_fact<'c>(
    t: &SkillTemplate,
    param: &str,
    source: &Atom,
    b: &Bindings,
    closure: &'c Closure,
) -> Result<(&'c Fact, f64), SynthesisError> {
    let mut pattern = substitute(source, b);
    pattern.args.push(Term::Var("_Value".into()));
    let shown = pattern.to_string();
    let found: Vec<&Fact> = closure.matching(&pattern).into_iter().filter(|f| f.args.last().and_then(Constant::as_num).is_some()).collect();
    match found.as_slice() {
        [f] => Ok((f, f.args.last().and_then(Constant::as_num).expect("filtered"))),
        [] => Err(SynthesisError::MissingNumericFact {
            template: t.name.clone(),
            param: param.to_string(),
            source_atom: shown,
        }),
        _ => Err(SynthesisError::AmbiguousNumericFact {
            template: t.name.clone(),
            param: param.to_string(),
            source_atom: shown,
        }),
    }
}

/// Emits every template whose guard holds for `task`, by ascending priority
/// (ties by template name). The program is named by a `program_name(task, N)`
/// fact if present, else after the task.
pub fn synthesize_program(kb: &KnowledgeBase, task: &str) -> Result<(SkillProgram, SynthesisTrace), SynthesisError> {
    let closure = forward_chain(kb);
    let task_c = Constant::sym(task);
    let task_pattern = Atom {
        pred: "task_type".into(),
        args: vec![Term::Const(task_c.clone()), Term::Var("_Type".into())],
    };
    let task_fact = closure
        .matching(&task_pattern)
        .first()
        .map(|f| (*f).clone())
        .ok_or_else(|| SynthesisError::UnknownTask(task.to_string()))?;

    let mut emitted: Vec<(&SkillTemplate, &Fact, Bindings)> = Vec::new();
    let mut not_emitted = Vec::new();
    for t in &kb.templates {
        match guard_fact(t, &task_c, &closure) {
            Some((f, b)) => emitted.push((t, f, b)),
            None => not_emitted.push(t.name.clone()),
        }
    }
    if emitted.is_empty() {
        return Err(SynthesisError::NoTemplates(task.to_string()));
    }
    emitted.sort_by(|a, b| a.0.priority.cmp(&b.0.priority).then_with(|| a.0.name.cmp(&b.0.name)));
    not_emitted.sort();

    let mut tie_breaks = Vec::new();
    for group in emitted.chunk_by(|a, b| a.0.priority == b.0.priority) {
        if group.len() > 1 {
            tie_breaks.push(TieBreak { priority: group[0].0.priority, order: group.iter().map(|e| e.0.name.clone()).collect() });
        }
    }

    let mut skills = Vec::new();
    let mut justifications = Vec::new();
    for (t, guard, b) in &emitted {
        let mut params = Vec::new();
        let mut derivations = Vec::new();
        for p in &t.params {
            let (value, source) = match &p.expr.source {
                None => (p.expr.offset, None),
                Some(src) => {
                    let (f, v) = numeric_fact(t, &p.name, src, b, &closure)?;
                    (p.expr.scale * v + p.expr.offset, Some(f.clone()))
                }
            };
            let pv = match p.bounds {
                Some((lo, hi)) => ParamValue { value, lower: lo, upper: hi, fixed: p.fixed },
                None => ParamValue::fixed(value),
            };
            params.push((p.name.clone(), pv));
            derivations.push(ParamDerivation { param: p.name.clone(), value, formula: p.expr.to_string(), source });
        }
        skills.push(SkillDraft { label: t.name.clone(), skill_type: t.skill, params });
        justifications.push(SkillJustification {
            label: t.name.clone(),
            template: t.name.clone(),
            skill_type: t.skill,
            priority: t.priority,
            guard: (*guard).clone(),
            proof: minimal_proof(kb, &closure, guard),
            params: derivations,
        });
    }

    let name_pattern = Atom {
        pred: "program_name".into(),
        args: vec![Term::Const(task_c.clone()), Term::Var("_Name".into())],
    };
    let name = closure
        .matching(&name_pattern)
        .first()
        .and_then(|f| f.args[1].as_sym().map(str::to_string))
        .unwrap_or_else(|| task.to_string());
    let program = SkillProgram::from_draft(ProgramDraft { name, skills })?;
    let trace = SynthesisTrace {
        task: task.to_string(),
        task_fact,
        closure: closure.trace.clone(),
        skills: justifications,
        not_emitted,
        tie_breaks,
    };
    Ok((program, trace))
}
