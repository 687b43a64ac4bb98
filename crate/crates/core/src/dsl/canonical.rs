use std::fmt::Write;

use super::SkillProgram;

/// Renders `v` with exactly 9 significant digits.
///
/// Positional notation is used for decimal exponents in `-6..=8`, scientific
/// notation otherwise. `0.1` renders as `0.100000000`.
pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        return "0.00000000".to_string();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("`{:e}` output has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-6..=8).contains(&exp) {
        return sci;
    }
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let body = if exp >= 0 {
        let split = exp as usize + 1;
        let (int, frac) = digits.split_at(split);
        if frac.is_empty() {
            int.to_string()
        } else {
            format!("{int}.{frac}")
        }
    } else {
        format!("0.{}{digits}", "0".repeat((-exp - 1) as usize))
    };
    format!("{sign}{body}")
}

/// Deterministic text form: one skill per line, parameters in signature
/// order, bounds always written out.
pub fn serialize_canonical(p: &SkillProgram) -> String {
    let mut out = String::new();
    writeln!(out, "program \"{}\" {{", p.name()).unwrap();
    for s in p.skills() {
        write!(out, "  skill {} : {} {{", s.label(), s.skill_type()).unwrap();
        for (name, pv) in s.skill_type().signature().iter().zip(s.params()) {
            write!(
                out,
                " {name} = {} in [{}, {}]",
                format_number(pv.value),
                format_number(pv.lower),
                format_number(pv.upper)
            )
            .unwrap();
            if pv.fixed {
                out.push_str(" fixed");
            }
            out.push(';');
        }
        out.push_str(" }\n");
    }
    out.push_str("}\n");
    out
}
