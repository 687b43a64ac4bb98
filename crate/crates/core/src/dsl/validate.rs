use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{is_identifier, ProgramDraft};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    EmptyProgram,
    InvalidName,
    InvalidLabel,
    DuplicateLabel,
    MissingParameter,
    ExtraParameter,
    DuplicateParameter,
    NonFinite,
    EmptyRange,
    BoundViolation,
}

impl ViolationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::EmptyProgram => "empty_program",
            ViolationKind::InvalidName => "invalid_name",
            ViolationKind::InvalidLabel => "invalid_label",
            ViolationKind::DuplicateLabel => "duplicate_label",
            ViolationKind::MissingParameter => "missing_parameter",
            ViolationKind::ExtraParameter => "extra_parameter",
            ViolationKind::DuplicateParameter => "duplicate_parameter",
            ViolationKind::NonFinite => "non_finite",
            ViolationKind::EmptyRange => "empty_range",
            ViolationKind::BoundViolation => "bound_violation",
        }
    }
}

/// One invariant violation, located by skill label and parameter name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub skill: Option<String>,
    pub param: Option<String>,
    /// `(value, lower, upper)` for range-related violations.
    pub bounds: Option<(f64, f64, f64)>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind.as_str())?;
        if let Some(s) = &self.skill {
            write!(f, " skill={s}")?;
        }
        if let Some(p) = &self.param {
            write!(f, " param={p}")?;
        }
        if let Some((v, lo, hi)) = self.bounds {
            write!(f, " value={v} bounds=[{lo}, {hi}]")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    fn push(&mut self, kind: ViolationKind, skill: Option<&str>, param: Option<&str>) {
        self.violations.push(Violation {
            kind,
            skill: skill.map(str::to_string),
            param: param.map(str::to_string),
            bounds: None,
        });
    }
}

/// Checks every program invariant; one entry per violation.
pub fn validate_program(p: &ProgramDraft) -> ValidationReport {
    let mut report = ValidationReport::default();
    if p.name.is_empty() || p.name.contains(['"', '\\', '\n', '\r']) {
        report.push(ViolationKind::InvalidName, None, None);
    }
    if p.skills.is_empty() {
        report.push(ViolationKind::EmptyProgram, None, None);
    }

    let mut seen_labels = HashSet::new();
    for s in &p.skills {
        let label = Some(s.label.as_str());
        if !is_identifier(&s.label) {
            report.push(ViolationKind::InvalidLabel, label, None);
        }
        if !seen_labels.insert(s.label.as_str()) {
            report.push(ViolationKind::DuplicateLabel, label, None);
        }

        let sig = s.skill_type.signature();
        let mut seen_params = HashSet::new();
        for (name, pv) in &s.params {
            let param = Some(name.as_str());
            if !sig.contains(&name.as_str()) {
                report.push(ViolationKind::ExtraParameter, label, param);
                continue;
            }
            if !seen_params.insert(name.as_str()) {
                report.push(ViolationKind::DuplicateParameter, label, param);
                continue;
            }
            let bounds = Some((pv.value, pv.lower, pv.upper));
            if !(pv.value.is_finite() && pv.lower.is_finite() && pv.upper.is_finite()) {
                report.violations.push(Violation {
                    kind: ViolationKind::NonFinite,
                    skill: label.map(str::to_string),
                    param: param.map(str::to_string),
                    bounds,
                });
                continue;
            }
            if !(pv.lower <= pv.value && pv.value <= pv.upper) {
                report.violations.push(Violation {
                    kind: ViolationKind::BoundViolation,
                    skill: label.map(str::to_string),
                    param: param.map(str::to_string),
                    bounds,
                });
            } else if !pv.fixed && pv.lower >= pv.upper {
                report.violations.push(Violation {
                    kind: ViolationKind::EmptyRange,
                    skill: label.map(str::to_string),
                    param: param.map(str::to_string),
                    bounds,
                });
            }
        }
        for name in sig {
            if !s.params.iter().any(|(n, _)| n == name) {
                report.push(ViolationKind::MissingParameter, label, Some(name));
            }
        }
    }
    report
}
