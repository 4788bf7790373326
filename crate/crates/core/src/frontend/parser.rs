//! Recursive-descent parser for `.real` programs.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use super::{Let, LetKind, Param, Program};
use crate::expr::{BinaryOp, Constant, RealExpr, UnaryOp};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(String),
    UnknownFunction(String),
    UnboundedParameter(String),
    NonPositiveTargetError(String),
    UndefinedIdentifier(String),
    DuplicateName(String),
    EmptyDomain(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: ", self.line, self.column)?;
        match &self.kind {
            ParseErrorKind::Syntax(m) => write!(f, "syntax error: {m}"),
            ParseErrorKind::UnknownFunction(n) => write!(f, "unknown function `{n}`"),
            ParseErrorKind::UnboundedParameter(n) => {
                write!(
                    f,
                    "parameter `{n}` needs both a lower and an upper bound in require"
                )
            }
            ParseErrorKind::NonPositiveTargetError(t) => {
                write!(f, "target error `{t}` must be positive")
            }
            ParseErrorKind::UndefinedIdentifier(n) => write!(f, "undefined identifier `{n}`"),
            ParseErrorKind::DuplicateName(n) => write!(f, "`{n}` is defined twice"),
            ParseErrorKind::EmptyDomain(n) => write!(f, "domain of `{n}` is empty"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Sym(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) | Tok::Number(s) => write!(f, "`{s}`"),
            Tok::Sym(s) => write!(f, "`{s}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
    /// No whitespace between this token and the previous one.
    glued: bool,
}

const SYMBOLS: [&str; 19] = [
    "+/-", "&&", "<=", ">=", "=>", "(", ")", "{", "}", ":", ",", ";", "=", "+", "-", "*", "/", "<",
    ">",
];

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let (mut i, mut line, mut line_start) = (0usize, 1usize, 0usize);
    let mut glued = false;
    while i < bytes.len() {
        let c = bytes[i];
        let column = i - line_start + 1;
        if c == b'\n' {
            i += 1;
            line += 1;
            line_start = i;
            glued = false;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            glued = false;
            continue;
        }
        if src[i..].starts_with("//") {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if src[i..].starts_with("/*") {
            let Some(end) = src[i + 2..].find("*/") else {
                return Err(ParseError {
                    kind: ParseErrorKind::Syntax("unterminated comment".into()),
                    line,
                    column,
                });
            };
            for b in &bytes[i..i + 2 + end + 2] {
                if *b == b'\n' {
                    line += 1;
                }
            }
            i += 2 + end + 2;
            if let Some(nl) = src[..i].rfind('\n') {
                line_start = nl + 1;
            }
            glued = false;
            continue;
        }
        let start = i;
        let tok = if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            Tok::Ident(src[start..i].to_string())
        } else if c.is_ascii_digit()
            || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit))
        {
            if src[i..].starts_with("0x") || src[i..].starts_with("0X") {
                i += 2;
                while i < bytes.len() && (bytes[i].is_ascii_hexdigit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'p' || bytes[i] == b'P') {
                    i += 1;
                    if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
                        i += 1;
                    }
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            } else {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let save = i;
                    i += 1;
                    if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
                        i += 1;
                    }
                    if i < bytes.len() && bytes[i].is_ascii_digit() {
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    } else {
                        i = save;
                    }
                }
            }
            Tok::Number(src[start..i].to_string())
        } else if let Some(s) = SYMBOLS.iter().find(|s| src[i..].starts_with(**s)) {
            i += s.len();
            Tok::Sym(s)
        } else {
            let ch = src[i..].chars().next().unwrap();
            return Err(ParseError {
                kind: ParseErrorKind::Syntax(format!("unexpected character `{ch}`")),
                line,
                column,
            });
        };
        out.push(Token {
            tok,
            line,
            column,
            glued,
        });
        glued = true;
    }
    let column = bytes.len() - line_start + 1;
    out.push(Token {
        tok: Tok::Eof,
        line,
        column,
        glued: false,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    /// Names in scope, in definition order.
    scope: Vec<Arc<str>>,
}

/// Parses one program.
pub fn parse_program(src: &str) -> Result<Program, ParseError> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
        scope: Vec::new(),
    };
    let prog = p.program()?;
    p.expect_eof()?;
    Ok(prog)
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err_at(&self, t: &Token, kind: ParseErrorKind) -> ParseError {
        ParseError {
            kind,
            line: t.line,
            column: t.column,
        }
    }

    fn syntax<T>(&self, expected: &str) -> PResult<T> {
        let t = self.peek();
        Err(self.err_at(
            t,
            ParseErrorKind::Syntax(format!("expected {expected}, found {}", t.tok)),
        ))
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(&self.peek().tok, Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, s: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(x) if x == s)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.syntax(&format!("`{s}`"))
        }
    }

    fn expect_kw(&mut self, s: &str) -> PResult<()> {
        if self.is_kw(s) {
            self.bump();
            Ok(())
        } else {
            self.syntax(&format!("`{s}`"))
        }
    }

    fn ident(&mut self) -> PResult<(String, Token)> {
        match &self.peek().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                Ok((s, self.bump()))
            }
            _ => self.syntax("an identifier"),
        }
    }

    fn expect_eof(&mut self) -> PResult<()> {
        if self.peek().tok == Tok::Eof {
            Ok(())
        } else {
            self.syntax("end of input")
        }
    }

    fn declare(&mut self, name: &str, at: &Token) -> PResult<Arc<str>> {
        if self.scope.iter().any(|n| &**n == name) {
            return Err(self.err_at(at, ParseErrorKind::DuplicateName(name.to_string())));
        }
        let n: Arc<str> = name.into();
        self.scope.push(n.clone());
        Ok(n)
    }

    fn program(&mut self) -> PResult<Program> {
        self.expect_kw("def")?;
        let (name, _) = self.ident()?;
        self.expect_sym("(")?;
        let mut names = Vec::new();
        if !self.is_sym(")") {
            loop {
                let (pname, at) = self.ident()?;
                self.expect_sym(":")?;
                self.expect_kw("Real")?;
                let n = self.declare(&pname, &at)?;
                names.push((n, at));
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        self.expect_sym(")")?;
        self.expect_sym(":")?;
        self.expect_kw("Real")?;
        self.expect_sym("=")?;
        self.expect_sym("{")?;
        let mut bounds: BTreeMap<Arc<str>, (Option<Constant>, Option<Constant>)> = BTreeMap::new();
        if self.is_kw("require") {
            self.bump();
            self.expect_sym("(")?;
            loop {
                self.condition(&mut bounds)?;
                if !self.eat_sym("&&") {
                    break;
                }
            }
            self.expect_sym(")")?;
        }
        let mut params = Vec::new();
        for (n, at) in names {
            match bounds.remove(&n) {
                Some((Some(lo), Some(hi))) => {
                    if lo.to_float(1100) > hi.to_float(1100) {
                        return Err(self.err_at(&at, ParseErrorKind::EmptyDomain(n.to_string())));
                    }
                    params.push(Param { name: n, lo, hi });
                }
                _ => {
                    return Err(self.err_at(&at, ParseErrorKind::UnboundedParameter(n.to_string())))
                }
            }
        }
        let mut lets = Vec::new();
        while self.is_kw("val") {
            self.bump();
            let (lname, at) = self.ident()?;
            if self.eat_sym(":") {
                self.expect_kw("Real")?;
            }
            self.expect_sym("=")?;
            let expr = self.expr()?;
            self.eat_sym(";");
            let name = self.declare(&lname, &at)?;
            lets.push(Let {
                name,
                expr,
                kind: LetKind::User,
            });
        }
        let result = self.expr()?;
        self.eat_sym(";");
        self.expect_sym("}")?;
        let mut target_error = None;
        if self.is_kw("ensuring") {
            self.bump();
            self.expect_sym("(")?;
            let (res, _) = self.ident()?;
            self.expect_sym("=>")?;
            let (res2, at) = self.ident()?;
            if res != res2 {
                return Err(self.err_at(&at, ParseErrorKind::UndefinedIdentifier(res2)));
            }
            self.expect_sym("+/-")?;
            let at = self.peek().clone();
            let c = self.signed_number()?;
            if !(c.value() > 0.0) {
                return Err(self.err_at(
                    &at,
                    ParseErrorKind::NonPositiveTargetError(c.text().to_string()),
                ));
            }
            target_error = Some(c.value());
            self.expect_sym(")")?;
        }
        Ok(Program {
            name,
            params,
            lets,
            result,
            target_error,
        })
    }

    fn signed_number(&mut self) -> PResult<Constant> {
        let neg = self.eat_sym("-");
        let t = self.peek().clone();
        match &t.tok {
            Tok::Number(s) => {
                self.bump();
                let text = if neg { format!("-{s}") } else { s.clone() };
                Constant::parse(&text)
                    .map_err(|e| self.err_at(&t, ParseErrorKind::Syntax(e.to_string())))
            }
            _ => self.syntax("a number"),
        }
    }

    /// `a op b [op c]` where each comparison relates one parameter and one
    /// constant. Strict comparisons are treated as non-strict.
    fn condition(
        &mut self,
        bounds: &mut BTreeMap<Arc<str>, (Option<Constant>, Option<Constant>)>,
    ) -> PResult<()> {
        #[derive(Clone)]
        enum Side {
            Var(Arc<str>, Token),
            Num(Constant),
        }
        let mut sides = Vec::new();
        let mut ops = Vec::new();
        loop {
            let t = self.peek().clone();
            let side = match &t.tok {
                Tok::Ident(n) => {
                    self.bump();
                    let Some(v) = self.scope.iter().find(|s| &***s == n).cloned() else {
                        return Err(self.err_at(&t, ParseErrorKind::UndefinedIdentifier(n.clone())));
                    };
                    Side::Var(v, t)
                }
                _ => Side::Num(self.signed_number()?),
            };
            sides.push(side);
            let less = if self.eat_sym("<=") || self.eat_sym("<") {
                true
            } else if self.eat_sym(">=") || self.eat_sym(">") {
                false
            } else {
                break;
            };
            ops.push(less);
        }
        if ops.is_empty() {
            return self.syntax("a comparison");
        }
        for (k, less) in ops.into_iter().enumerate() {
            let (a, b) = (sides[k].clone(), sides[k + 1].clone());
            // Normalize to small <= large.
            let (small, large) = if less { (a, b) } else { (b, a) };
            match (small, large) {
                (Side::Num(c), Side::Var(v, _)) => bounds.entry(v).or_default().0 = Some(c),
                (Side::Var(v, _), Side::Num(c)) => bounds.entry(v).or_default().1 = Some(c),
                (Side::Var(_, t), Side::Var(..)) => {
                    return Err(self.err_at(
                        &t,
                        ParseErrorKind::Syntax(
                            "comparisons must relate a parameter and a constant".into(),
                        ),
                    ))
                }
                (Side::Num(_), Side::Num(_)) => {
                    return self.syntax("a parameter in the comparison");
                }
            }
        }
        Ok(())
    }

    fn expr(&mut self) -> PResult<RealExpr> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.is_sym("+") {
                BinaryOp::Add
            } else if self.is_sym("-") {
                BinaryOp::Sub
            } else {
                break;
            };
            self.bump();
            let rhs = self.term()?;
            lhs = RealExpr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> PResult<RealExpr> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.is_sym("*") {
                BinaryOp::Mul
            } else if self.is_sym("/") {
                BinaryOp::Div
            } else {
                break;
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = RealExpr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<RealExpr> {
        if self.is_sym("-") {
            // A minus sign glued to a numeric literal is part of the literal.
            let next_glued = self.toks.get(self.pos + 1).is_some_and(|t| t.glued);
            if matches!(self.peek_at(1), Tok::Number(_)) && next_glued {
                return Ok(RealExpr::Const(self.signed_number()?));
            }
            self.bump();
            return Ok(RealExpr::neg(self.unary()?));
        }
        if self.eat_sym("+") {
            return self.unary();
        }
        self.atom()
    }

    fn atom(&mut self) -> PResult<RealExpr> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Number(_) => Ok(RealExpr::Const(self.signed_number()?)),
            Tok::Ident(name) => {
                self.bump();
                if self.is_sym("(") {
                    let Some(op) = UnaryOp::from_function_name(name) else {
                        return Err(self.err_at(&t, ParseErrorKind::UnknownFunction(name.clone())));
                    };
                    self.bump();
                    let arg = self.expr()?;
                    self.expect_sym(")")?;
                    return Ok(RealExpr::unary(op, arg));
                }
                match self.scope.iter().find(|s| &***s == name.as_str()) {
                    Some(v) => Ok(RealExpr::Var(v.clone())),
                    None => Err(self.err_at(&t, ParseErrorKind::UndefinedIdentifier(name.clone()))),
                }
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            _ => self.syntax("an expression"),
        }
    }
}
