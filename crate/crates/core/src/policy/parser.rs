//! Recursive-descent parser for `.mln` policy text.
//!
//! The parser works directly on characters rather than a token stream: header
//! values such as MAC addresses contain `:` which is also the statement
//! separator, so what counts as a token depends on the surrounding production.

use super::ast::*;
use super::PolicyError;
use crate::rate::Rate;

/// Address literal usable inside a set definition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HostAddr {
    Mac(u64),
    Ip(u64),
}

impl HostAddr {
    pub fn src_field(self) -> Field {
        match self {
            HostAddr::Mac(_) => Field::EthSrc,
            HostAddr::Ip(_) => Field::IpSrc,
        }
    }

    pub fn dst_field(self) -> Field {
        match self {
            HostAddr::Mac(_) => Field::EthDst,
            HostAddr::Ip(_) => Field::IpDst,
        }
    }

    pub fn value(self) -> u64 {
        match self {
            HostAddr::Mac(v) | HostAddr::Ip(v) => v,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SetDef {
    pub name: String,
    pub values: Vec<HostAddr>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RateClause {
    Max(Rate),
    Min(Rate),
}

/// `foreach (s, d) in cross(srcs, dsts): pred -> path at max(r)`
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Foreach {
    pub vars: (String, String),
    pub sets: (String, String),
    pub predicate: Predicate,
    pub path: PathExpr,
    pub clauses: Vec<RateClause>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StatementItem {
    Core(Statement),
    Foreach(Foreach),
}

/// Surface syntax, before set expansion.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Program {
    pub sets: Vec<SetDef>,
    pub items: Vec<StatementItem>,
    pub formula: Option<Formula>,
}

pub fn parse_program(source: &str) -> Result<Program, PolicyError> {
    let mut p = Parser { src: source, pos: 0 };
    p.program()
}

/// Parses a standalone predicate, e.g. from a command line flag.
pub fn parse_predicate(source: &str) -> Result<Predicate, PolicyError> {
    let mut p = Parser { src: source, pos: 0 };
    let pred = p.predicate()?;
    p.expect_eof()?;
    Ok(pred)
}

/// Parses a standalone path expression.
pub fn parse_path(source: &str) -> Result<PathExpr, PolicyError> {
    let mut p = Parser { src: source, pos: 0 };
    let path = p.path()?;
    p.expect_eof()?;
    Ok(path)
}

/// Parses a standalone bandwidth formula.
pub fn parse_formula(source: &str) -> Result<Formula, PolicyError> {
    let mut p = Parser { src: source, pos: 0 };
    let f = p.formula()?;
    p.expect_eof()?;
    Ok(f)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn is_value_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, ':' | '.' | '/' | '_')
}

impl<'a> Parser<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn line_col(&self, pos: usize) -> (usize, usize) {
        let before = &self.src[..pos];
        let line = before.matches('\n').count() + 1;
        let col = before.rfind('\n').map_or(pos, |nl| pos - nl - 1) + 1;
        (line, col)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, PolicyError> {
        self.err_at(self.pos, message)
    }

    fn err_at<T>(&self, pos: usize, message: impl Into<String>) -> Result<T, PolicyError> {
        let (line, col) = self.line_col(pos);
        Err(PolicyError::Syntax {
            line,
            col,
            message: message.into(),
        })
    }

    fn ws(&mut self) {
        loop {
            let rest = self.rest();
            let trimmed = rest.trim_start();
            self.pos += rest.len() - trimmed.len();
            if trimmed.starts_with('#') {
                let len = trimmed.find('\n').unwrap_or(trimmed.len());
                self.pos += len;
            } else {
                break;
            }
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.ws();
        self.rest().chars().next()
    }

    fn at_eof(&mut self) -> bool {
        self.peek().is_none()
    }

    fn looking_at(&mut self, s: &str) -> bool {
        self.ws();
        self.rest().starts_with(s)
    }

    fn eat(&mut self, s: &str) -> bool {
        if self.looking_at(s) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &str) -> Result<(), PolicyError> {
        if self.eat(s) {
            Ok(())
        } else {
            let found = self.rest().chars().take(12).collect::<String>();
            self.err(format!("expected `{s}`, found `{found}`"))
        }
    }

    fn expect_eof(&mut self) -> Result<(), PolicyError> {
        if self.at_eof() {
            Ok(())
        } else {
            let found = self.rest().chars().take(12).collect::<String>();
            self.err(format!("unexpected trailing input `{found}`"))
        }
    }

    /// Identifier at the cursor, without consuming it.
    fn peek_ident(&mut self) -> Option<&'a str> {
        self.ws();
        let rest = self.rest();
        let mut chars = rest.char_indices();
        match chars.next() {
            Some((_, c)) if is_ident_start(c) => {}
            _ => return None,
        }
        let end = chars
            .find(|(_, c)| !is_ident_char(*c))
            .map_or(rest.len(), |(i, _)| i);
        Some(&rest[..end])
    }

    fn ident(&mut self) -> Result<String, PolicyError> {
        match self.peek_ident() {
            Some(id) => {
                self.pos += id.len();
                Ok(id.to_string())
            }
            None => self.err("expected identifier"),
        }
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.peek_ident() == Some(kw) {
            self.pos += kw.len();
            true
        } else {
            false
        }
    }

    fn value_token(&mut self) -> Result<(usize, &'a str), PolicyError> {
        self.ws();
        let start = self.pos;
        let rest = self.rest();
        let end = rest
            .char_indices()
            .find(|(_, c)| !is_value_char(*c))
            .map_or(rest.len(), |(i, _)| i);
        if end == 0 {
            return self.err("expected a value");
        }
        self.pos += end;
        Ok((start, &rest[..end]))
    }

    fn rate(&mut self) -> Result<Rate, PolicyError> {
        let (start, text) = self.value_token()?;
        Rate::parse_literal(text).map_err(|source| {
            let (line, col) = self.line_col(start);
            PolicyError::Rate { line, col, source }
        })
    }

    // ---- program -------------------------------------------------------

    fn program(&mut self) -> Result<Program, PolicyError> {
        let mut program = Program::default();
        loop {
            while self.eat(",") || self.eat(";") {}
            if self.at_eof() {
                break;
            }
            if self.looking_at("[") {
                self.group(&mut program.items)?;
            } else if self.eat_keyword("foreach") {
                program.items.push(StatementItem::Foreach(self.foreach()?));
            } else if self.is_set_def() {
                program.sets.push(self.set_def()?);
            } else {
                let f = self.formula()?;
                while self.eat(",") || self.eat(";") {}
                self.expect_eof()?;
                program.formula = Some(f);
                break;
            }
        }
        Ok(program)
    }

    fn is_set_def(&mut self) -> bool {
        let save = self.pos;
        let yes = self.peek_ident().is_some() && {
            self.ident().ok();
            self.looking_at(":=")
        };
        self.pos = save;
        yes
    }

    fn set_def(&mut self) -> Result<SetDef, PolicyError> {
        let name = self.ident()?;
        self.expect(":=")?;
        self.expect("{")?;
        let mut values = Vec::new();
        if !self.eat("}") {
            loop {
                let (start, text) = self.value_token()?;
                let addr = if let Some(mac) = parse_mac(text) {
                    HostAddr::Mac(mac)
                } else if let Some(ip) = parse_ipv4(text) {
                    HostAddr::Ip(ip)
                } else {
                    return self.err_at(start, format!("`{text}` is not a host address literal"));
                };
                values.push(addr);
                if self.eat("}") {
                    break;
                }
                self.expect(",")?;
            }
        }
        Ok(SetDef { name, values })
    }

    fn group(&mut self, items: &mut Vec<StatementItem>) -> Result<(), PolicyError> {
        self.expect("[")?;
        loop {
            while self.eat(";") || self.eat(",") {}
            if self.eat("]") {
                return Ok(());
            }
            if self.at_eof() {
                return self.err("unterminated statement list");
            }
            items.push(StatementItem::Core(self.statement()?));
        }
    }

    fn statement(&mut self) -> Result<Statement, PolicyError> {
        let id = self.ident()?;
        self.expect(":")?;
        let predicate = self.predicate()?;
        self.expect("->")?;
        let path = self.path()?;
        Ok(Statement { id, predicate, path })
    }

    fn foreach(&mut self) -> Result<Foreach, PolicyError> {
        self.expect("(")?;
        let a = self.ident()?;
        self.expect(",")?;
        let b = self.ident()?;
        self.expect(")")?;
        if !self.eat_keyword("in") {
            return self.err("expected `in`");
        }
        if !self.eat_keyword("cross") {
            return self.err("expected `cross`");
        }
        self.expect("(")?;
        let sa = self.ident()?;
        self.expect(",")?;
        let sb = self.ident()?;
        self.expect(")")?;
        self.expect(":")?;
        let predicate = self.predicate()?;
        self.expect("->")?;
        let path = self.path()?;
        let mut clauses = Vec::new();
        if self.eat_keyword("at") {
            loop {
                let clause = if self.eat_keyword("max") {
                    RateClause::Max(self.paren_rate()?)
                } else if self.eat_keyword("min") {
                    RateClause::Min(self.paren_rate()?)
                } else {
                    return self.err("expected `max(..)` or `min(..)` after `at`");
                };
                clauses.push(clause);
                if !self.eat_keyword("and") {
                    break;
                }
            }
        }
        Ok(Foreach {
            vars: (a, b),
            sets: (sa, sb),
            predicate,
            path,
            clauses,
        })
    }

    fn paren_rate(&mut self) -> Result<Rate, PolicyError> {
        self.expect("(")?;
        let r = self.rate()?;
        self.expect(")")?;
        Ok(r)
    }

    // ---- predicates ----------------------------------------------------

    fn predicate(&mut self) -> Result<Predicate, PolicyError> {
        let mut lhs = self.pred_and()?;
        loop {
            if self.looking_at("||") {
                self.pos += 2;
            } else if self.looking_at("|") {
                self.pos += 1;
            } else if !self.eat_keyword("or") {
                break;
            }
            let rhs = self.pred_and()?;
            lhs = lhs.or(rhs);
        }
        Ok(lhs)
    }

    fn pred_and(&mut self) -> Result<Predicate, PolicyError> {
        let mut lhs = self.pred_unary()?;
        loop {
            if self.looking_at("&&") {
                self.pos += 2;
            } else if self.looking_at("&") {
                self.pos += 1;
            } else if !self.eat_keyword("and") {
                break;
            }
            let rhs = self.pred_unary()?;
            lhs = lhs.and(rhs);
        }
        Ok(lhs)
    }

    fn pred_unary(&mut self) -> Result<Predicate, PolicyError> {
        if self.looking_at("!") && !self.looking_at("!=") {
            self.pos += 1;
            return Ok(self.pred_unary()?.negate());
        }
        if self.eat_keyword("not") {
            return Ok(self.pred_unary()?.negate());
        }
        self.pred_atom()
    }

    fn pred_atom(&mut self) -> Result<Predicate, PolicyError> {
        if self.eat("(") {
            let p = self.predicate()?;
            self.expect(")")?;
            return Ok(p);
        }
        if self.eat_keyword("true") {
            return Ok(Predicate::True);
        }
        if self.eat_keyword("false") {
            return Ok(Predicate::False);
        }
        if self.eat_keyword("payload") {
            self.expect("=")?;
            return Ok(Predicate::Payload(self.string_literal()?));
        }
        self.ws();
        let start = self.pos;
        let rest = self.rest();
        let end = rest
            .char_indices()
            .find(|(_, c)| !(is_ident_char(*c) || *c == '.'))
            .map_or(rest.len(), |(i, _)| i);
        if end == 0 {
            return self.err("expected a predicate");
        }
        let name = &rest[..end];
        self.pos += end;
        let field = Field::from_name(name).ok_or_else(|| {
            let (line, col) = self.line_col(start);
            PolicyError::UnknownField {
                line,
                col,
                name: name.to_string(),
            }
        })?;
        let negated = if self.eat("!=") {
            true
        } else {
            self.expect("=")?;
            false
        };
        let (vstart, text) = self.value_token()?;
        let value = field.parse_value(text).ok_or_else(|| {
            let (line, col) = self.line_col(vstart);
            PolicyError::BadValue {
                line,
                col,
                field: field.name().to_string(),
                value: text.to_string(),
            }
        })?;
        let atom = Predicate::Eq(field, value);
        Ok(if negated { atom.negate() } else { atom })
    }

    fn string_literal(&mut self) -> Result<String, PolicyError> {
        self.expect("\"")?;
        let rest = self.rest();
        match rest.find('"') {
            Some(end) => {
                self.pos += end + 1;
                Ok(rest[..end].to_string())
            }
            None => self.err("unterminated string literal"),
        }
    }

    // ---- path expressions ----------------------------------------------

    fn path(&mut self) -> Result<PathExpr, PolicyError> {
        let mut alts = vec![self.path_seq()?];
        while self.looking_at("|") {
            self.pos += 1;
            alts.push(self.path_seq()?);
        }
        Ok(if alts.len() == 1 {
            alts.pop().unwrap()
        } else {
            PathExpr::Alt(alts)
        })
    }

    /// True when the cursor is at something that can begin a path element and
    /// is not the start of the next statement.
    fn path_element_ahead(&mut self) -> bool {
        match self.peek() {
            Some('.') | Some('(') | Some('!') => true,
            Some(c) if is_ident_start(c) => {
                let save = self.pos;
                let id = self.peek_ident().unwrap_or_default();
                if id == "at" {
                    return false;
                }
                self.pos += id.len();
                let next_statement = self.looking_at(":") && !self.looking_at(":=");
                self.pos = save;
                !next_statement
            }
            _ => false,
        }
    }

    fn path_seq(&mut self) -> Result<PathExpr, PolicyError> {
        let mut items = Vec::new();
        while self.path_element_ahead() {
            items.push(self.path_unary()?);
        }
        match items.len() {
            0 => self.err("expected a path expression"),
            1 => Ok(items.pop().unwrap()),
            _ => Ok(PathExpr::Seq(items)),
        }
    }

    fn path_unary(&mut self) -> Result<PathExpr, PolicyError> {
        if self.eat("!") {
            return Ok(self.path_unary()?.complement());
        }
        let mut atom = self.path_atom()?;
        while self.looking_at("*") {
            self.pos += 1;
            atom = atom.star();
        }
        Ok(atom)
    }

    fn path_atom(&mut self) -> Result<PathExpr, PolicyError> {
        if self.eat(".") {
            return Ok(PathExpr::Dot);
        }
        if self.eat("(") {
            let p = self.path()?;
            self.expect(")")?;
            return Ok(p);
        }
        Ok(PathExpr::Symbol(self.ident()?))
    }

    // ---- formulas ------------------------------------------------------

    fn formula(&mut self) -> Result<Formula, PolicyError> {
        let mut lhs = self.formula_and()?;
        while self.eat_keyword("or") || self.eat("||") || (self.looking_at("|") && self.eat("|")) {
            let rhs = self.formula_and()?;
            lhs = Formula::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn formula_and(&mut self) -> Result<Formula, PolicyError> {
        let mut lhs = self.formula_unary()?;
        while self.eat_keyword("and") || self.eat("&&") || self.eat("&") {
            let rhs = self.formula_unary()?;
            lhs = Formula::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn formula_unary(&mut self) -> Result<Formula, PolicyError> {
        if self.eat("!") || self.eat_keyword("not") {
            return Ok(Formula::Not(Box::new(self.formula_unary()?)));
        }
        if self.eat("(") {
            let f = self.formula()?;
            self.expect(")")?;
            return Ok(f);
        }
        if self.eat_keyword("true") {
            return Ok(Formula::True);
        }
        let is_max = if self.eat_keyword("max") {
            true
        } else if self.eat_keyword("min") {
            false
        } else {
            return self.err("expected `max(..)`, `min(..)` or a parenthesized formula");
        };
        self.expect("(")?;
        let term = self.term()?;
        self.expect(",")?;
        let rate = self.rate()?;
        self.expect(")")?;
        Ok(if is_max {
            Formula::Max(term, rate)
        } else {
            Formula::Min(term, rate)
        })
    }

    fn term(&mut self) -> Result<Term, PolicyError> {
        let mut term = Term {
            ids: Vec::new(),
            constant: Rate::ZERO,
        };
        loop {
            if self.peek_ident().is_some() {
                term.ids.push(self.ident()?);
            } else {
                let r = self.rate()?;
                term.constant = Rate(term.constant.0.checked_add(r.0).ok_or_else(|| {
                    let (line, col) = self.line_col(self.pos);
                    PolicyError::Syntax {
                        line,
                        col,
                        message: "term constant overflows".into(),
                    }
                })?);
            }
            if !self.eat("+") {
                break;
            }
        }
        Ok(term)
    }
}
