use crate::lexer::{tokenize, Cursor, Tok, Token};

use super::{DslError, ParamValue, ProgramDraft, SkillDraft, SkillProgram, SkillType};

/// Parses and validates a program.
///
/// A parameter written without `in [lo, hi]` gets the degenerate range
/// `[value, value]` and is treated as fixed.
pub fn parse_program(text: &str) -> Result<SkillProgram, DslError> {
    let draft = parse_draft(text)?;
    SkillProgram::from_draft(draft)
}

/// Parses without validating.
pub(crate) fn parse_draft(text: &str) -> Result<ProgramDraft, DslError> {
    let toks = tokenize(text).map_err(|e| DslError::Syntax {
        line: e.line,
        column: e.column,
        expected: vec!["token".into()],
        found: e.found,
    })?;
    let mut p = Parser { cur: Cursor::new(toks) };
    p.program()
}

struct Parser {
    cur: Cursor,
}

fn syntax(t: &Token, expected: &[&str]) -> DslError {
    DslError::Syntax {
        line: t.line,
        column: t.column,
        expected: expected.iter().map(|s| s.to_string()).collect(),
        found: t.tok.to_string(),
    }
}

impl Parser {
    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), DslError> {
        if self.cur.eat(&tok) {
            Ok(())
        } else {
            Err(syntax(self.cur.peek(), &[what]))
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), DslError> {
        if self.cur.eat_keyword(kw) {
            Ok(())
        } else {
            Err(syntax(self.cur.peek(), &[&format!("`{kw}`")]))
        }
    }

    fn ident(&mut self, what: &str) -> Result<Token, DslError> {
        match self.cur.peek_tok() {
            Tok::Ident(_) => Ok(self.cur.next()),
            _ => Err(syntax(self.cur.peek(), &[what])),
        }
    }

    fn number(&mut self) -> Result<f64, DslError> {
        let neg = if self.cur.eat(&Tok::Minus) {
            true
        } else {
            self.cur.eat(&Tok::Plus);
            false
        };
        match *self.cur.peek_tok() {
            Tok::Number(n) => {
                self.cur.next();
                Ok(if neg { -n } else { n })
            }
            _ => Err(syntax(self.cur.peek(), &["number"])),
        }
    }

    fn program(&mut self) -> Result<ProgramDraft, DslError> {
        self.keyword("program")?;
        let name = match self.cur.peek_tok().clone() {
            Tok::Str(s) => {
                self.cur.next();
                s
            }
            _ => return Err(syntax(self.cur.peek(), &["program name string"])),
        };
        self.expect(Tok::LBrace, "`{`")?;
        let mut skills = Vec::new();
        loop {
            if self.cur.eat(&Tok::RBrace) {
                break;
            }
            if !matches!(self.cur.peek_tok(), Tok::Ident(s) if s == "skill") {
                return Err(syntax(self.cur.peek(), &["`skill`", "`}`"]));
            }
            skills.push(self.skill()?);
        }
        if !self.cur.at_eof() {
            return Err(syntax(self.cur.peek(), &["end of input"]));
        }
        Ok(ProgramDraft { name, skills })
    }

    fn skill(&mut self) -> Result<SkillDraft, DslError> {
        self.keyword("skill")?;
        let label = match self.ident("skill label")?.tok {
            Tok::Ident(s) => s,
            _ => unreachable!(),
        };
        self.expect(Tok::Colon, "`:`")?;
        let type_tok = self.ident("skill type")?;
        let Tok::Ident(type_name) = &type_tok.tok else { unreachable!() };
        let skill_type: SkillType = type_name.parse().map_err(|_| DslError::UnknownSkillType {
            line: type_tok.line,
            column: type_tok.column,
            name: type_name.clone(),
        })?;
        self.expect(Tok::LBrace, "`{`")?;
        let mut params = Vec::new();
        loop {
            if self.cur.eat(&Tok::RBrace) {
                break;
            }
            params.push(self.param()?);
            if self.cur.eat(&Tok::Semi) {
                continue;
            }
            if self.cur.eat(&Tok::RBrace) {
                break;
            }
            return Err(syntax(self.cur.peek(), &["`;`", "`}`"]));
        }
        Ok(SkillDraft { label, skill_type, params })
    }

    fn param(&mut self) -> Result<(String, ParamValue), DslError> {
        let name = match self.ident("parameter name")?.tok {
            Tok::Ident(s) => s,
            _ => unreachable!(),
        };
        self.expect(Tok::Eq, "`=`")?;
        let value = self.number()?;
        let bounds = if self.cur.eat_keyword("in") {
            self.expect(Tok::LBracket, "`[`")?;
            let lo = self.number()?;
            self.expect(Tok::Comma, "`,`")?;
            let hi = self.number()?;
            self.expect(Tok::RBracket, "`]`")?;
            Some((lo, hi))
        } else {
            None
        };
        let fixed = self.cur.eat_keyword("fixed");
        let pv = match bounds {
            Some((lower, upper)) => ParamValue { value, lower, upper, fixed },
            None => ParamValue::fixed(value),
        };
        Ok((name, pv))
    }
}
