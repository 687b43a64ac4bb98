//! Symbolic skill programs.
//!
//! A program is a linear chain of parameterized skills. Every parameter
//! carries its certified range and a `fixed` flag, so the range travels
//! with the program text. The textual format looks like:
//!
//! ```text
//! program "insert_peg" {
//!   skill approach : move_linear { x = 0.4 fixed; y = 0 fixed; z = 0.005 fixed; v = 0.25 fixed; a = 1 fixed; }
//!   skill search : spiral_search { r_max = 0.003 in [0.001, 0.008]; ... }
//! }
//! ```

mod canonical;
mod parser;
mod validate;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use canonical::{format_number, serialize_canonical};
pub use parser::parse_program;
pub use validate::{validate_program, ValidationReport, Violation, ViolationKind};

/// Maximum number of parameters of any skill signature.
pub const MAX_PARAMS: usize = 6;

/// The primitive skills understood by the simulator and the surrogate library.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillType {
    MoveLinear,
    MoveContact,
    SpiralSearch,
    Insert,
    GripperClose,
    GripperOpen,
}

impl SkillType {
    pub const ALL: [SkillType; 6] = [
        SkillType::MoveLinear,
        SkillType::MoveContact,
        SkillType::SpiralSearch,
        SkillType::Insert,
        SkillType::GripperClose,
        SkillType::GripperOpen,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SkillType::MoveLinear => "move_linear",
            SkillType::MoveContact => "move_contact",
            SkillType::SpiralSearch => "spiral_search",
            SkillType::Insert => "insert",
            SkillType::GripperClose => "gripper_close",
            SkillType::GripperOpen => "gripper_open",
        }
    }

    /// Parameter names in signature order. Units: m, m/s, m/s², N, or unitless.
    pub fn signature(self) -> &'static [&'static str] {
        match self {
            SkillType::MoveLinear => &["x", "y", "z", "v", "a"],
            SkillType::MoveContact => &["dx", "dy", "dz", "v", "f_th", "max_d"],
            SkillType::SpiralSearch => &["r_max", "pitch", "v", "f_press", "dz_drop"],
            SkillType::Insert => &["depth", "v", "f_max"],
            SkillType::GripperClose | SkillType::GripperOpen => &["width"],
        }
    }

    pub fn param_index(self, name: &str) -> Option<usize> {
        self.signature().iter().position(|p| *p == name)
    }
}

impl fmt::Display for SkillType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown skill type `{0}`")]
pub struct UnknownSkillType(pub String);

impl FromStr for SkillType {
    type Err = UnknownSkillType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SkillType::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| UnknownSkillType(s.to_string()))
    }
}

/// A parameter value with its certified range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamValue {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub fixed: bool,
}

impl ParamValue {
    pub fn free(value: f64, lower: f64, upper: f64) -> Self {
        Self { value, lower, upper, fixed: false }
    }

    /// A fixed parameter with the degenerate range `[value, value]`.
    pub fn fixed(value: f64) -> Self {
        Self { value, lower: value, upper: value, fixed: true }
    }

    pub fn range(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Unvalidated skill node. The parser produces drafts, validation turns them
/// into [`SkillNode`]s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillDraft {
    pub label: String,
    pub skill_type: SkillType,
    pub params: Vec<(String, ParamValue)>,
}

/// Unvalidated program, the input of [`validate_program`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramDraft {
    pub name: String,
    pub skills: Vec<SkillDraft>,
}

/// A validated skill node. Parameters are stored in signature order.
#[derive(Debug, Clone, PartialEq)]
pub struct SkillNode {
    label: String,
    skill_type: SkillType,
    params: Vec<ParamValue>,
}

impl SkillNode {
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn skill_type(&self) -> SkillType {
        self.skill_type
    }

    /// Parameters in signature order.
    pub fn params(&self) -> &[ParamValue] {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<&ParamValue> {
        self.skill_type.param_index(name).map(|i| &self.params[i])
    }

    /// Parameter values in signature order.
    pub fn values(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.value).collect()
    }

    /// Named parameter value; panics if `name` is not in the signature.
    pub fn value(&self, name: &str) -> f64 {
        match self.param(name) {
            Some(p) => p.value,
            None => panic!("skill type {} has no parameter `{name}`", self.skill_type),
        }
    }

    fn to_draft(&self) -> SkillDraft {
        SkillDraft {
            label: self.label.clone(),
            skill_type: self.skill_type,
            params: self
                .skill_type
                .signature()
                .iter()
                .zip(&self.params)
                .map(|(n, p)| (n.to_string(), *p))
                .collect(),
        }
    }
}

/// A validated, linear skill program.
#[derive(Debug, Clone, PartialEq)]
pub struct SkillProgram {
    name: String,
    skills: Vec<SkillNode>,
}

/// Position of a free parameter inside a program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSlot {
    pub skill: usize,
    pub param: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DslError {
    #[error("syntax error at {line}:{column}: expected {}, found {found}", expected.join(" or "))]
    Syntax {
        line: usize,
        column: usize,
        expected: Vec<String>,
        found: String,
    },
    #[error("unknown skill type `{name}` at {line}:{column}")]
    UnknownSkillType { line: usize, column: usize, name: String },
    #[error("program has no skills")]
    EmptyProgram,
    #[error("duplicate skill label `{label}`")]
    DuplicateLabel { label: String },
    #[error("skill `{skill}` is missing parameter `{param}`")]
    MissingParameter { skill: String, param: String },
    #[error("skill `{skill}` has unexpected parameter `{param}`")]
    ExtraParameter { skill: String, param: String },
    #[error("skill `{skill}` parameter `{param}` = {value} violates bounds [{lower}, {upper}]")]
    BoundViolation {
        skill: String,
        param: String,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("free parameter vector has length {found}, expected {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("free parameter {index} = {value} outside [{lower}, {upper}]")]
    IndexBoundViolation {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("invalid program: {0}")]
    Invalid(Violation),
}

impl DslError {
    /// Stable machine-readable error class.
    pub fn kind(&self) -> &'static str {
        match self {
            DslError::Syntax { .. } => "syntax",
            DslError::UnknownSkillType { .. } => "unknown_skill_type",
            DslError::EmptyProgram => "empty_program",
            DslError::DuplicateLabel { .. } => "duplicate_label",
            DslError::MissingParameter { .. } => "missing_parameter",
            DslError::ExtraParameter { .. } => "extra_parameter",
            DslError::BoundViolation { .. } => "bound_violation",
            DslError::LengthMismatch { .. } => "length_mismatch",
            DslError::IndexBoundViolation { .. } => "bound_violation",
            DslError::Invalid(v) => v.kind.as_str(),
        }
    }
}

impl From<Violation> for DslError {
    fn from(v: Violation) -> Self {
        let skill = v.skill.clone().unwrap_or_default();
        let param = v.param.clone().unwrap_or_default();
        match v.kind {
            ViolationKind::EmptyProgram => DslError::EmptyProgram,
            ViolationKind::DuplicateLabel => DslError::DuplicateLabel { label: skill },
            ViolationKind::MissingParameter => DslError::MissingParameter { skill, param },
            ViolationKind::ExtraParameter => DslError::ExtraParameter { skill, param },
            ViolationKind::BoundViolation => {
                let (value, lower, upper) = v.bounds.unwrap_or((f64::NAN, f64::NAN, f64::NAN));
                DslError::BoundViolation { skill, param, value, lower, upper }
            }
            _ => DslError::Invalid(v),
        }
    }
}

impl SkillProgram {
    /// Validates a draft. The first violation is returned as the error.
    pub fn from_draft(draft: ProgramDraft) -> Result<Self, DslError> {
        let report = validate_program(&draft);
        if let Some(v) = report.violations.into_iter().next() {
            return Err(v.into());
        }
        let skills = draft
            .skills
            .into_iter()
            .map(|s| {
                let sig = s.skill_type.signature();
                let mut params = vec![None; sig.len()];
                for (name, p) in s.params {
                    // validation guarantees the name is in the signature
                    let i = s.skill_type.param_index(&name).expect("validated parameter");
                    params[i] = Some(p);
                }
                SkillNode {
                    label: s.label,
                    skill_type: s.skill_type,
                    params: params.into_iter().map(|p| p.expect("validated parameter")).collect(),
                }
            })
            .collect();
        Ok(Self { name: draft.name, skills })
    }

    pub fn to_draft(&self) -> ProgramDraft {
        ProgramDraft {
            name: self.name.clone(),
            skills: self.skills.iter().map(SkillNode::to_draft).collect(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn skills(&self) -> &[SkillNode] {
        &self.skills
    }

    pub fn len(&self) -> usize {
        self.skills.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skills.is_empty()
    }

    pub fn skill(&self, label: &str) -> Option<&SkillNode> {
        self.skills.iter().find(|s| s.label == label)
    }

    /// Skill types in first-appearance order, deduplicated.
    pub fn skill_types(&self) -> Vec<SkillType> {
        let mut out = Vec::new();
        for s in &self.skills {
            if !out.contains(&s.skill_type) {
                out.push(s.skill_type);
            }
        }
        out
    }

    /// Slots of all non-fixed parameters in program order.
    pub fn free_slots(&self) -> Vec<ParamSlot> {
        let mut slots = Vec::new();
        for (i, s) in self.skills.iter().enumerate() {
            for (j, p) in s.params.iter().enumerate() {
                if !p.fixed {
                    slots.push(ParamSlot { skill: i, param: j });
                }
            }
        }
        slots
    }

    /// Free parameter values in program order, plus the slot of each.
    pub fn get_free_parameters(&self) -> (Vec<f64>, Vec<ParamSlot>) {
        let slots = self.free_slots();
        let values = slots.iter().map(|s| self.slot(*s).value).collect();
        (values, slots)
    }

    /// `(lower, upper)` for every free parameter in program order.
    pub fn free_bounds(&self) -> Vec<(f64, f64)> {
        self.free_slots()
            .iter()
            .map(|s| {
                let p = self.slot(*s);
                (p.lower, p.upper)
            })
            .collect()
    }

    pub fn slot(&self, slot: ParamSlot) -> &ParamValue {
        &self.skills[slot.skill].params[slot.param]
    }

    /// Human-readable name of a free parameter, e.g. `search.r_max`.
    pub fn slot_name(&self, slot: ParamSlot) -> String {
        let s = &self.skills[slot.skill];
        format!("{}.{}", s.label, s.skill_type.signature()[slot.param])
    }

    /// Returns a copy with the free parameters replaced by `values`.
    pub fn set_free_parameters(&self, values: &[f64]) -> Result<Self, DslError> {
        let slots = self.free_slots();
        if values.len() != slots.len() {
            return Err(DslError::LengthMismatch { expected: slots.len(), found: values.len() });
        }
        let mut out = self.clone();
        for (index, (slot, &value)) in slots.iter().zip(values).enumerate() {
            let p = &mut out.skills[slot.skill].params[slot.param];
            if !(value >= p.lower && value <= p.upper) {
                return Err(DslError::IndexBoundViolation {
                    index,
                    value,
                    lower: p.lower,
                    upper: p.upper,
                });
            }
            p.value = value;
        }
        Ok(out)
    }

    /// 64-bit digest of everything except parameter values.
    ///
    /// Bounds enter through their canonical text rendering so that the digest
    /// is stable under re-serialization.
    pub fn structure_hash(&self) -> u64 {
        use sha2::{Digest, Sha256};

        let mut h = Sha256::new();
        let mut field = |bytes: &[u8]| {
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(bytes);
        };
        field(self.name.as_bytes());
        for s in &self.skills {
            field(s.label.as_bytes());
            field(s.skill_type.as_str().as_bytes());
            for (name, p) in s.skill_type.signature().iter().zip(&s.params) {
                field(name.as_bytes());
                field(format_number(p.lower).as_bytes());
                field(format_number(p.upper).as_bytes());
                field(&[p.fixed as u8]);
            }
        }
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("sha256 has 32 bytes"))
    }
}

/// `structure_hash` as a free function.
pub fn structure_hash(p: &SkillProgram) -> u64 {
    p.structure_hash()
}

impl FromStr for SkillProgram {
    type Err = DslError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_program(s)
    }
}

impl fmt::Display for SkillProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_canonical(self))
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}
