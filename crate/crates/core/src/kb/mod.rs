//! Datalog knowledge base: ground facts, range-restricted Horn rules and skill
//! templates, with forward chaining, proof traces and program synthesis.

mod chain;
mod explain;
mod parser;
mod synth;

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::dsl::{DslError, SkillType};

pub use chain::{forward_chain, Closure, DerivedFact, Derivation, ProofTrace};
pub use explain::{explain, BodyStatus, Explanation, FailedInstance, ProofTree, Refusal};
pub use parser::{parse_atom, parse_kb};
pub use synth::{synthesize_program, ParamDerivation, SkillJustification, SynthesisError, SynthesisTrace, TieBreak};

/// A ground argument: a number or a symbol.
#[derive(Debug, Clone)]
pub enum Constant {
    Num(f64),
    Sym(String),
}

impl Constant {
    pub fn num(v: f64) -> Self {
        // one representation for zero
        Constant::Num(if v == 0.0 { 0.0 } else { v })
    }

    pub fn sym(s: impl Into<String>) -> Self {
        Constant::Sym(s.into())
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Constant::Num(v) => Some(*v),
            Constant::Sym(_) => None,
        }
    }

    pub fn as_sym(&self) -> Option<&str> {
        match self {
            Constant::Sym(s) => Some(s),
            Constant::Num(_) => None,
        }
    }
}

impl PartialEq for Constant {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Constant {}

impl PartialOrd for Constant {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Numbers sort before symbols.
impl Ord for Constant {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Constant::Num(a), Constant::Num(b)) => a.total_cmp(b),
            (Constant::Num(_), Constant::Sym(_)) => Ordering::Less,
            (Constant::Sym(_), Constant::Num(_)) => Ordering::Greater,
            (Constant::Sym(a), Constant::Sym(b)) => a.cmp(b),
        }
    }
}

impl Hash for Constant {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Constant::Num(v) => {
                0u8.hash(state);
                v.to_bits().hash(state);
            }
            Constant::Sym(s) => {
                1u8.hash(state);
                s.hash(state);
            }
        }
    }
}

fn is_symbol_ident(s: &str) -> bool {
    let mut c = s.chars();
    matches!(c.next(), Some(ch) if ch.is_ascii_lowercase()) && c.all(|ch| ch.is_ascii_alphanumeric() || ch == '_')
}

impl fmt::Display for Constant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constant::Num(v) => write!(f, "{v}"),
            Constant::Sym(s) if is_symbol_ident(s) => f.write_str(s),
            Constant::Sym(s) => write!(f, "\"{s}\""),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Var(String),
    Const(Constant),
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => f.write_str(v),
            Term::Const(c) => c.fmt(f),
        }
    }
}

/// `pred(t1, .., tn)` possibly containing variables.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub pred: String,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.args.iter().filter_map(|t| match t {
            Term::Var(v) => Some(v.as_str()),
            Term::Const(_) => None,
        })
    }

    /// The fact this atom denotes if it has no variables.
    pub fn to_fact(&self) -> Option<Fact> {
        let args = self
            .args
            .iter()
            .map(|t| match t {
                Term::Const(c) => Some(c.clone()),
                Term::Var(_) => None,
            })
            .collect::<Option<Vec<_>>>()?;
        Some(Fact { pred: self.pred.clone(), args })
    }
}

fn write_args<T: fmt::Display>(f: &mut fmt::Formatter<'_>, pred: &str, args: &[T]) -> fmt::Result {
    write!(f, "{pred}(")?;
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        a.fmt(f)?;
    }
    f.write_str(")")
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_args(f, &self.pred, &self.args)
    }
}

/// Ground atom. Ordered by predicate, then arguments.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fact {
    pub pred: String,
    pub args: Vec<Constant>,
}

impl Fact {
    pub fn new(pred: impl Into<String>, args: Vec<Constant>) -> Self {
        Self { pred: pred.into(), args }
    }

    pub fn to_atom(&self) -> Atom {
        Atom { pred: self.pred.clone(), args: self.args.iter().cloned().map(Term::Const).collect() }
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_args(f, &self.pred, &self.args)
    }
}

impl Serialize for Fact {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl Serialize for Atom {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// `head :- body₁, .., bodyₙ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub name: String,
    pub head: Atom,
    pub body: Vec<Atom>,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rule {}: {} :- ", self.name, self.head)?;
        for (i, a) in self.body.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            a.fmt(f)?;
        }
        f.write_str(".")
    }
}

/// `scale · source + offset`, or just `offset` without a source.
///
/// The source atom names a numeric fact whose value is its extra last
/// argument: `clearance(T)` reads `clearance(t1, 0.0005)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamExpr {
    pub scale: f64,
    pub source: Option<Atom>,
    pub offset: f64,
}

impl ParamExpr {
    pub fn constant(v: f64) -> Self {
        Self { scale: 0.0, source: None, offset: v }
    }
}

impl fmt::Display for ParamExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.source {
            None => write!(f, "{}", self.offset),
            Some(a) => write!(f, "{} * {} + {}", self.scale, a, self.offset),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub expr: ParamExpr,
    /// `None` means fixed at the computed value.
    pub bounds: Option<(f64, f64)>,
    pub fixed: bool,
}

/// Emits one skill when its guard holds for the task.
#[derive(Debug, Clone, PartialEq)]
pub struct SkillTemplate {
    /// Also the label of the emitted skill.
    pub name: String,
    /// First argument is the task variable.
    pub guard: Atom,
    pub skill: SkillType,
    pub priority: i64,
    pub params: Vec<ParamSpec>,
}

impl SkillTemplate {
    pub fn task_var(&self) -> &str {
        match &self.guard.args[0] {
            Term::Var(v) => v,
            Term::Const(_) => unreachable!("checked by the parser"),
        }
    }
}

impl fmt::Display for SkillTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "template {} {{", self.name)?;
        writeln!(f, "    guard = {};", self.guard)?;
        writeln!(f, "    skill = {};", self.skill)?;
        writeln!(f, "    priority = {};", self.priority)?;
        for p in &self.params {
            write!(f, "    param {} = {}", p.name, p.expr)?;
            if let Some((lo, hi)) = p.bounds {
                write!(f, " in [{lo}, {hi}]")?;
                if p.fixed {
                    f.write_str(" fixed")?;
                }
            }
            writeln!(f, ";")?;
        }
        f.write_str("}")
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct KnowledgeBase {
    pub facts: Vec<Fact>,
    pub rules: Vec<Rule>,
    pub templates: Vec<SkillTemplate>,
}

impl KnowledgeBase {
    /// Removes every fact of `pred` whose first argument is `first`.
    pub fn retract(&mut self, pred: &str, first: &Constant) {
        self.facts.retain(|f| !(f.pred == pred && f.args.first() == Some(first)));
    }

    /// Replaces the facts of `pred` sharing `fact`'s first argument.
    pub fn assert_unique(&mut self, fact: Fact) {
        if let Some(first) = fact.args.first().cloned() {
            self.retract(&fact.pred, &first);
        }
        self.facts.push(fact);
    }
}

/// Canonical text, parseable by [`parse_kb`].
impl fmt::Display for KnowledgeBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for x in &self.facts {
            writeln!(f, "fact {x}.")?;
        }
        for r in &self.rules {
            writeln!(f, "{r}")?;
        }
        for t in &self.templates {
            writeln!(f, "{t}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for KnowledgeBase {
    type Err = KbError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_kb(s)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KbError {
    #[error("syntax error at {line}:{column}: expected {}, found {found}", expected.join(" or "))]
    Syntax { line: usize, column: usize, expected: Vec<String>, found: String },
    #[error("fact {0} is not ground")]
    NonGroundFact(String),
    #[error("rule {rule} is not range-restricted: head variable {variable} does not occur in the body")]
    NotRangeRestricted { rule: String, variable: String },
    #[error("duplicate rule name {0}")]
    DuplicateRule(String),
    #[error("duplicate template {0}")]
    DuplicateTemplate(String),
    #[error("template {template}: {reason}")]
    InvalidTemplate { template: String, reason: String },
    #[error("template {template}: default {param} = {value} outside [{lower}, {upper}]")]
    TemplateDefault { template: String, param: String, value: f64, lower: f64, upper: f64 },
}

impl KbError {
    /// Stable class name of the error.
    pub fn kind(&self) -> &'static str {
        match self {
            KbError::Syntax { .. } => "syntax",
            KbError::NonGroundFact(_) => "non_ground_fact",
            KbError::NotRangeRestricted { .. } => "not_range_restricted",
            KbError::DuplicateRule(_) => "duplicate_rule",
            KbError::DuplicateTemplate(_) => "duplicate_template",
            KbError::InvalidTemplate { .. } => "invalid_template",
            KbError::TemplateDefault { .. } => "template_default",
        }
    }
}

impl From<DslError> for SynthesisError {
    fn from(e: DslError) -> Self {
        SynthesisError::Invalid(e)
    }
}

/// Variable bindings built during matching.
pub(crate) type Bindings = Vec<(String, Constant)>;

pub(crate) fn lookup<'a>(b: &'a Bindings, v: &str) -> Option<&'a Constant> {
    b.iter().find(|(n, _)| n == v).map(|(_, c)| c)
}

/// Extends `b` so that `atom` matches `fact`; restores `b` on failure.
pub(crate) fn unify(atom: &Atom, fact: &Fact, b: &mut Bindings) -> bool {
    if atom.pred != fact.pred || atom.args.len() != fact.args.len() {
        return false;
    }
    let mark = b.len();
    for (t, c) in atom.args.iter().zip(&fact.args) {
        let ok = match t {
            Term::Const(k) => k == c,
            Term::Var(v) => match lookup(b, v) {
                Some(bound) => bound == c,
                None => {
                    b.push((v.clone(), c.clone()));
                    true
                }
            },
        };
        if !ok {
            b.truncate(mark);
            return false;
        }
    }
    true
}

/// Replaces bound variables by their values.
pub(crate) fn substitute(atom: &Atom, b: &Bindings) -> Atom {
    Atom {
        pred: atom.pred.clone(),
        args: atom
            .args
            .iter()
            .map(|t| match t {
                Term::Var(v) => lookup(b, v).map_or_else(|| t.clone(), |c| Term::Const(c.clone())),
                Term::Const(_) => t.clone(),
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests;
