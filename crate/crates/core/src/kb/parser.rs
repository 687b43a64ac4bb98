use crate::dsl::SkillType;
use crate::lexer::{tokenize, Cursor, Tok, Token};

use super::{Atom, Constant, KbError, KnowledgeBase, ParamExpr, ParamSpec, Rule, SkillTemplate, Term};

/// Parses a knowledge base.
///
/// ```text
/// fact task_type(t1, insertion).
/// rule requires_search(T) :- task_type(T, insertion), position_uncertainty(T, high).
/// template search { guard = requires_search(T); skill = spiral_search; priority = 30;
///                   param pitch = 2 * clearance(T) + 0 in [0.0002, 0.002]; ... }
/// ```
///
/// Rules may be named (`rule R3: head :- body.`); unnamed rules are called
/// `R<n>` after their position among the rules.
pub fn parse_kb(text: &str) -> Result<KnowledgeBase, KbError> {
    let mut p = Parser::new(text)?;
    let kb = p.kb()?;
    check_names(&kb)?;
    Ok(kb)
}

/// Parses a single atom such as `requires_search(t1)`.
pub fn parse_atom(text: &str) -> Result<Atom, KbError> {
    let mut p = Parser::new(text)?;
    let a = p.atom()?;
    p.cur.eat(&Tok::Dot);
    if !p.cur.at_eof() {
        return Err(syntax(p.cur.peek(), &["end of input"]));
    }
    Ok(a)
}

fn syntax(t: &Token, expected: &[&str]) -> KbError {
    KbError::Syntax {
        line: t.line,
        column: t.column,
        expected: expected.iter().map(|s| s.to_string()).collect(),
        found: t.tok.to_string(),
    }
}

fn is_variable(s: &str) -> bool {
    s.starts_with(|c: char| c.is_ascii_uppercase() || c == '_')
}

fn check_names(kb: &KnowledgeBase) -> Result<(), KbError> {
    let mut seen = std::collections::BTreeSet::new();
    for r in &kb.rules {
        if !seen.insert(r.name.as_str()) {
            return Err(KbError::DuplicateRule(r.name.clone()));
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    for t in &kb.templates {
        if !seen.insert(t.name.as_str()) {
            return Err(KbError::DuplicateTemplate(t.name.clone()));
        }
    }
    Ok(())
}

struct Parser {
    cur: Cursor,
}

impl Parser {
    fn new(text: &str) -> Result<Self, KbError> {
        let toks = tokenize(text).map_err(|e| KbError::Syntax {
            line: e.line,
            column: e.column,
            expected: vec!["token".into()],
            found: e.found,
        })?;
        Ok(Self { cur: Cursor::new(toks) })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), KbError> {
        if self.cur.eat(&tok) {
            Ok(())
        } else {
            Err(syntax(self.cur.peek(), &[what]))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, KbError> {
        match self.cur.peek_tok() {
            Tok::Ident(s) => {
                let s = s.clone();
                self.cur.next();
                Ok(s)
            }
            _ => Err(syntax(self.cur.peek(), &[what])),
        }
    }

    fn number(&mut self) -> Result<f64, KbError> {
        let neg = self.cur.eat(&Tok::Minus);
        match *self.cur.peek_tok() {
            Tok::Number(n) => {
                self.cur.next();
                Ok(if neg { -n } else { n })
            }
            _ => Err(syntax(self.cur.peek(), &["number"])),
        }
    }

    fn kb(&mut self) -> Result<KnowledgeBase, KbError> {
        let mut kb = KnowledgeBase::default();
        while !self.cur.at_eof() {
            let t = self.cur.peek().clone();
            match &t.tok {
                Tok::Ident(k) if k == "fact" => {
                    self.cur.next();
                    let a = self.atom()?;
                    self.expect(Tok::Dot, "`.`")?;
                    let fact = a.to_fact().ok_or_else(|| KbError::NonGroundFact(a.to_string()))?;
                    kb.facts.push(fact);
                }
                Tok::Ident(k) if k == "rule" => {
                    self.cur.next();
                    let r = self.rule(kb.rules.len() + 1)?;
                    kb.rules.push(r);
                }
                Tok::Ident(k) if k == "template" => {
                    self.cur.next();
                    kb.templates.push(self.template()?);
                }
                _ => return Err(syntax(&t, &["`fact`", "`rule`", "`template`"])),
            }
        }
        Ok(kb)
    }

    fn predicate(&mut self) -> Result<String, KbError> {
        let t = self.cur.peek().clone();
        let name = self.ident("predicate")?;
        if is_variable(&name) {
            return Err(syntax(&t, &["lowercase predicate"]));
        }
        Ok(name)
    }

    fn term(&mut self) -> Result<Term, KbError> {
        match self.cur.peek_tok().clone() {
            Tok::Ident(s) => {
                self.cur.next();
                Ok(if is_variable(&s) { Term::Var(s) } else { Term::Const(Constant::sym(s)) })
            }
            Tok::Str(s) => {
                self.cur.next();
                Ok(Term::Const(Constant::sym(s)))
            }
            Tok::Number(_) | Tok::Minus => Ok(Term::Const(Constant::num(self.number()?))),
            _ => Err(syntax(self.cur.peek(), &["term"])),
        }
    }

    fn atom(&mut self) -> Result<Atom, KbError> {
        let pred = self.predicate()?;
        self.expect(Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        if !self.cur.eat(&Tok::RParen) {
            loop {
                args.push(self.term()?);
                if self.cur.eat(&Tok::RParen) {
                    break;
                }
                self.expect(Tok::Comma, "`,` or `)`")?;
            }
        }
        Ok(Atom { pred, args })
    }

    fn rule(&mut self, index: usize) -> Result<Rule, KbError> {
        // optional `name:` prefix
        let mut name = format!("R{index}");
        if let (Tok::Ident(s), Tok::Colon) = (self.cur.peek_tok(), self.cur.peek_nth(1)) {
            name = s.clone();
            self.cur.next();
            self.cur.next();
        }
        let head = self.atom()?;
        self.expect(Tok::Turnstile, "`:-`")?;
        let mut body = vec![self.atom()?];
        while self.cur.eat(&Tok::Comma) {
            body.push(self.atom()?);
        }
        self.expect(Tok::Dot, "`.`")?;
        for v in head.variables() {
            if !body.iter().any(|a| a.variables().any(|w| w == v)) {
                return Err(KbError::NotRangeRestricted { rule: name, variable: v.to_string() });
            }
        }
        Ok(Rule { name, head, body })
    }

    fn template(&mut self) -> Result<SkillTemplate, KbError> {
        let name = self.ident("template name")?;
        let invalid = |reason: String| KbError::InvalidTemplate { template: name.clone(), reason };
        self.expect(Tok::LBrace, "`{`")?;
        let (mut guard, mut skill, mut priority) = (None, None, None);
        let mut params: Vec<ParamSpec> = Vec::new();
        while !self.cur.eat(&Tok::RBrace) {
            let at = self.cur.peek().clone();
            let key = self.ident("`guard`, `skill`, `priority`, `param` or `}`")?;
            match key.as_str() {
                "guard" => {
                    self.expect(Tok::Eq, "`=`")?;
                    if guard.replace(self.atom()?).is_some() {
                        return Err(invalid("guard given twice".into()));
                    }
                }
                "skill" => {
                    self.expect(Tok::Eq, "`=`")?;
                    let s = self.ident("skill type")?;
                    let t: SkillType = s.parse().map_err(|_| invalid(format!("unknown skill type `{s}`")))?;
                    if skill.replace(t).is_some() {
                        return Err(invalid("skill given twice".into()));
                    }
                }
                "priority" => {
                    self.expect(Tok::Eq, "`=`")?;
                    let t = self.cur.peek().clone();
                    let v = self.number()?;
                    if v.fract() != 0.0 || v.abs() > 1e15 {
                        return Err(syntax(&t, &["integer"]));
                    }
                    if priority.replace(v as i64).is_some() {
                        return Err(invalid("priority given twice".into()));
                    }
                }
                "param" => {
                    let p = self.param()?;
                    if params.iter().any(|q| q.name == p.name) {
                        return Err(invalid(format!("parameter {} given twice", p.name)));
                    }
                    params.push(p);
                }
                _ => return Err(syntax(&at, &["`guard`", "`skill`", "`priority`", "`param`", "`}`"])),
            }
            if !self.cur.eat(&Tok::Semi) {
                self.expect(Tok::RBrace, "`;` or `}`")?;
                break;
            }
        }
        let guard = guard.ok_or_else(|| invalid("missing guard".into()))?;
        let skill = skill.ok_or_else(|| invalid("missing skill".into()))?;
        let priority = priority.ok_or_else(|| invalid("missing priority".into()))?;
        if !matches!(guard.args.first(), Some(Term::Var(_))) {
            return Err(invalid("guard must take the task variable as first argument".into()));
        }
        for p in &params {
            if skill.param_index(&p.name).is_none() {
                return Err(invalid(format!("{skill} has no parameter {}", p.name)));
            }
            if let Some(src) = &p.expr.source {
                if let Some(v) = src.variables().find(|v| !guard.variables().any(|g| g == *v)) {
                    return Err(invalid(format!("variable {v} of {} is not bound by the guard", p.name)));
                }
            }
            if let (None, Some((lo, hi))) = (&p.expr.source, p.bounds) {
                let value = p.expr.offset;
                if !(lo <= value && value <= hi) {
                    return Err(KbError::TemplateDefault {
                        template: name.clone(),
                        param: p.name.clone(),
                        value,
                        lower: lo,
                        upper: hi,
                    });
                }
            }
        }
        if let Some(missing) = skill.signature().iter().find(|s| !params.iter().any(|p| p.name == **s)) {
            return Err(invalid(format!("missing parameter {missing}")));
        }
        params.sort_by_key(|p| skill.param_index(&p.name));
        Ok(SkillTemplate { name, guard, skill, priority, params })
    }

    /// `param name = expr [in [lo, hi] [fixed]]`
    fn param(&mut self) -> Result<ParamSpec, KbError> {
        let name = self.ident("parameter name")?;
        self.expect(Tok::Eq, "`=`")?;
        let expr = self.expr()?;
        let mut bounds = None;
        let mut fixed = false;
        if self.cur.eat_keyword("in") {
            self.expect(Tok::LBracket, "`[`")?;
            let lo = self.number()?;
            self.expect(Tok::Comma, "`,`")?;
            let hi = self.number()?;
            self.expect(Tok::RBracket, "`]`")?;
            bounds = Some((lo, hi));
            fixed = self.cur.eat_keyword("fixed");
        }
        Ok(ParamSpec { name, expr, bounds, fixed })
    }

    /// Affine expression: a sum of numbers and at most one `[a *] atom`.
    fn expr(&mut self) -> Result<ParamExpr, KbError> {
        let mut e = ParamExpr { scale: 0.0, source: None, offset: 0.0 };
        let mut sign = 1.0;
        loop {
            let at = self.cur.peek().clone();
            let (scale, atom) = match self.cur.peek_tok() {
                Tok::Ident(_) => (1.0, Some(self.atom()?)),
                _ => {
                    let n = self.number()?;
                    if self.cur.eat(&Tok::Star) {
                        (n, Some(self.atom()?))
                    } else {
                        (n, None)
                    }
                }
            };
            match atom {
                Some(a) => {
                    if e.source.is_some() {
                        return Err(syntax(&at, &["at most one fact reference"]));
                    }
                    e.scale = sign * scale;
                    e.source = Some(a);
                }
                None => e.offset += sign * scale,
            }
            sign = if self.cur.eat(&Tok::Plus) {
                1.0
            } else if self.cur.eat(&Tok::Minus) {
                -1.0
            } else {
                break;
            };
        }
        Ok(e)
    }
}

