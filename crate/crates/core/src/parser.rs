//! Line-oriented text format for transition systems.
//!
//! ```text
//! # fan-in example
//! vars x y
//! init l0
//! rule l0 -> l1 :|: x' = x + 1 && (x < y || x = y)
//! ```
//!
//! One `vars` line declares the program variables, one `init` line names
//! the starting location, and each `rule` line adds a transition whose
//! condition relates unprimed (pre) to primed (post) variables. A primed
//! variable the condition never mentions is reassigned nondeterministically;
//! the parser keeps that semantics but reports it as a warning, since it is
//! a common source of surprising models.

use std::fmt;

use num_bigint::BigInt;

use crate::logic::{Formula, Literal, ProgVar, Term, VarRef};
use crate::ts::{Provenance, TransitionSystem};

/// A position in the input: 1-based line and column, 0-based byte offset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SourceSpan {
    pub line: usize,
    pub col: usize,
    pub byte: usize,
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{kind} at {span}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseErrorKind {
    #[error("unexpected character {0:?}")]
    UnexpectedChar(char),
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("expected {0}")]
    Expected(&'static str),
    #[error("unknown directive {0:?}")]
    UnknownDirective(String),
    #[error("duplicate vars declaration")]
    DuplicateVars,
    #[error("duplicate init declaration")]
    DuplicateInit,
    #[error("duplicate variable {0:?}")]
    DuplicateVar(String),
    #[error("{0:?} is a reserved word")]
    ReservedWord(String),
    #[error("undeclared variable {0:?}")]
    UndeclaredVar(String),
    #[error("rules need a vars declaration first")]
    MissingVars,
    #[error("missing init declaration")]
    MissingInit,
}

/// A non-fatal oddity in the input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Warning {
    pub span: SourceSpan,
    pub message: String,
}

#[derive(Debug)]
pub struct Parsed {
    pub system: TransitionSystem,
    pub warnings: Vec<Warning>,
}

pub fn parse(input: &str) -> Result<Parsed, ParseError> {
    let mut sys = TransitionSystem::new();
    let mut warnings = Vec::new();
    let mut vars_seen = false;
    let mut init_seen = false;
    let mut byte = 0;

    for (line_no, raw_line) in input.split('\n').enumerate() {
        let line_start = byte;
        byte += raw_line.len() + 1;
        let line = raw_line.trim_end_matches('\r');
        let content = match line.find('#') {
            Some(i) => &line[..i],
            None => line,
        };
        if content.trim().is_empty() {
            continue;
        }
        let words = words_with_cols(content);
        let (dir_col, directive) = words[0];
        let span_at = |col: usize| SourceSpan {
            line: line_no + 1,
            col,
            byte: line_start + col - 1,
        };
        match directive {
            "vars" => {
                if vars_seen {
                    return Err(ParseError {
                        kind: ParseErrorKind::DuplicateVars,
                        span: span_at(dir_col),
                    });
                }
                vars_seen = true;
                for (col, name) in &words[1..] {
                    check_ident(name, span_at(*col))?;
                    if sys.var_index(name).is_some() {
                        return Err(ParseError {
                            kind: ParseErrorKind::DuplicateVar(name.to_string()),
                            span: span_at(*col),
                        });
                    }
                    sys.add_var(name);
                }
            }
            "init" => {
                if init_seen {
                    return Err(ParseError {
                        kind: ParseErrorKind::DuplicateInit,
                        span: span_at(dir_col),
                    });
                }
                if words.len() != 2 {
                    return Err(ParseError {
                        kind: ParseErrorKind::Expected("init <location>"),
                        span: span_at(dir_col),
                    });
                }
                let (col, name) = words[1];
                check_ident(name, span_at(col))?;
                init_seen = true;
                let loc = sys.declare_location(name);
                sys.set_init(loc);
            }
            "rule" => {
                if !vars_seen {
                    return Err(ParseError {
                        kind: ParseErrorKind::MissingVars,
                        span: span_at(dir_col),
                    });
                }
                let sep = match content.find(":|:") {
                    Some(i) => i,
                    None => {
                        return Err(ParseError {
                            kind: ParseErrorKind::Expected("rule <src> -> <dst> :|: <condition>"),
                            span: span_at(dir_col),
                        })
                    }
                };
                let head = words_with_cols(&content[..sep]);
                if head.len() != 4 || head[2].1 != "->" {
                    return Err(ParseError {
                        kind: ParseErrorKind::Expected("rule <src> -> <dst> :|: <condition>"),
                        span: span_at(dir_col),
                    });
                }
                check_ident(head[1].1, span_at(head[1].0))?;
                check_ident(head[3].1, span_at(head[3].0))?;
                let src = sys.declare_location(head[1].1);
                let dst = sys.declare_location(head[3].1);
                let body_col = sep + 3;
                let toks = lex(&content[body_col..], line_no + 1, body_col, line_start)?;
                let end = span_at(content.len().max(1));
                let ast = FormulaParser {
                    toks: &toks,
                    pos: 0,
                    end,
                }
                .parse_all()?;
                let cond = lower(&ast, false, &sys)?;
                let mentioned = cond.vars();
                let missing: Vec<&str> = (0..sys.n_vars())
                    .filter(|i| !mentioned.contains(&VarRef::Post(ProgVar(*i))))
                    .map(|i| sys.var_name(ProgVar(i)))
                    .collect();
                if !missing.is_empty() {
                    warnings.push(Warning {
                        span: span_at(dir_col),
                        message: format!(
                            "rule leaves {} unconstrained; {} nondeterministically",
                            missing
                                .iter()
                                .map(|v| format!("{v}'"))
                                .collect::<Vec<_>>()
                                .join(", "),
                            if missing.len() == 1 {
                                "it changes"
                            } else {
                                "they change"
                            },
                        ),
                    });
                }
                sys.add_transition(src, dst, cond, Provenance::Original);
            }
            other => {
                return Err(ParseError {
                    kind: ParseErrorKind::UnknownDirective(other.to_string()),
                    span: span_at(dir_col),
                });
            }
        }
    }

    let end_span = SourceSpan {
        line: input.split('\n').count(),
        col: 1,
        byte: input.len(),
    };
    if !vars_seen {
        return Err(ParseError {
            kind: ParseErrorKind::MissingVars,
            span: end_span,
        });
    }
    if !init_seen {
        return Err(ParseError {
            kind: ParseErrorKind::MissingInit,
            span: end_span,
        });
    }
    Ok(Parsed {
        system: sys,
        warnings,
    })
}

fn check_ident(word: &str, span: SourceSpan) -> Result<(), ParseError> {
    let mut chars = word.chars();
    let ok = match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {
            chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        }
        _ => false,
    };
    if !ok {
        return Err(ParseError {
            kind: ParseErrorKind::Expected("an identifier"),
            span,
        });
    }
    if word.eq_ignore_ascii_case("true") || word.eq_ignore_ascii_case("false") {
        return Err(ParseError {
            kind: ParseErrorKind::ReservedWord(word.to_string()),
            span,
        });
    }
    Ok(())
}

/// Words of a line together with their 1-based columns.
fn words_with_cols(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((s + 1, &line[s..i]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((s + 1, &line[s..]));
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Var { name: String, primed: bool },
    Int(BigInt),
    True,
    False,
    AndAnd,
    OrOr,
    Bang,
    LParen,
    RParen,
    Plus,
    Minus,
    Star,
    Eq,
    Ne,
    Le,
    Lt,
    Ge,
    Gt,
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    span: SourceSpan,
}

fn lex(
    body: &str,
    line: usize,
    col_offset: usize,
    line_start: usize,
) -> Result<Vec<Spanned>, ParseError> {
    let mut toks = Vec::new();
    let bytes = body.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let span = SourceSpan {
            line,
            col: col_offset + i + 1,
            byte: line_start + col_offset + i,
        };
        let err = |kind| Err(ParseError { kind, span });
        match c {
            ' ' | '\t' => {
                i += 1;
            }
            '(' => {
                toks.push(Spanned {
                    tok: Tok::LParen,
                    span,
                });
                i += 1;
            }
            ')' => {
                toks.push(Spanned {
                    tok: Tok::RParen,
                    span,
                });
                i += 1;
            }
            '+' => {
                toks.push(Spanned {
                    tok: Tok::Plus,
                    span,
                });
                i += 1;
            }
            '-' => {
                toks.push(Spanned {
                    tok: Tok::Minus,
                    span,
                });
                i += 1;
            }
            '*' => {
                toks.push(Spanned {
                    tok: Tok::Star,
                    span,
                });
                i += 1;
            }
            '=' => {
                toks.push(Spanned { tok: Tok::Eq, span });
                i += 1;
            }
            '!' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    toks.push(Spanned { tok: Tok::Ne, span });
                    i += 2;
                } else {
                    toks.push(Spanned {
                        tok: Tok::Bang,
                        span,
                    });
                    i += 1;
                }
            }
            '<' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    toks.push(Spanned { tok: Tok::Le, span });
                    i += 2;
                } else {
                    toks.push(Spanned { tok: Tok::Lt, span });
                    i += 1;
                }
            }
            '>' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    toks.push(Spanned { tok: Tok::Ge, span });
                    i += 2;
                } else {
                    toks.push(Spanned { tok: Tok::Gt, span });
                    i += 1;
                }
            }
            '&' => {
                if bytes.get(i + 1) == Some(&b'&') {
                    toks.push(Spanned {
                        tok: Tok::AndAnd,
                        span,
                    });
                    i += 2;
                } else {
                    return err(ParseErrorKind::UnexpectedChar('&'));
                }
            }
            '|' => {
                if bytes.get(i + 1) == Some(&b'|') {
                    toks.push(Spanned {
                        tok: Tok::OrOr,
                        span,
                    });
                    i += 2;
                } else {
                    return err(ParseErrorKind::UnexpectedChar('|'));
                }
            }
            _ if c.is_ascii_digit() => {
                let start = i;
                while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                    i += 1;
                }
                let value: BigInt = body[start..i].parse().expect("digits");
                toks.push(Spanned {
                    tok: Tok::Int(value),
                    span,
                });
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                let word = &body[start..i];
                let primed = bytes.get(i) == Some(&b'\'');
                if primed {
                    i += 1;
                }
                let tok = if word.eq_ignore_ascii_case("true") && !primed {
                    Tok::True
                } else if word.eq_ignore_ascii_case("false") && !primed {
                    Tok::False
                } else {
                    Tok::Var {
                        name: word.to_string(),
                        primed,
                    }
                };
                toks.push(Spanned { tok, span });
            }
            other => return err(ParseErrorKind::UnexpectedChar(other)),
        }
    }
    Ok(toks)
}

/// Condition syntax before negations are pushed down.
enum Ast {
    True,
    False,
    Cmp { lhs: PolyAst, op: Tok, rhs: PolyAst },
    And(Vec<Ast>),
    Or(Vec<Ast>),
    Not(Box<Ast>),
}

enum PolyAst {
    Int(BigInt),
    Var {
        name: String,
        primed: bool,
        span: SourceSpan,
    },
    Neg(Box<PolyAst>),
    Add(Box<PolyAst>, Box<PolyAst>),
    Sub(Box<PolyAst>, Box<PolyAst>),
    Mul(Box<PolyAst>, Box<PolyAst>),
}

struct FormulaParser<'a> {
    toks: &'a [Spanned],
    pos: usize,
    end: SourceSpan,
}

impl<'a> FormulaParser<'a> {
    fn parse_all(mut self) -> Result<Ast, ParseError> {
        let ast = self.disj()?;
        match self.peek() {
            None => Ok(ast),
            Some(s) => Err(ParseError {
                kind: ParseErrorKind::Expected("end of condition"),
                span: s.span,
            }),
        }
    }

    fn peek(&self) -> Option<&Spanned> {
        self.toks.get(self.pos)
    }

    fn next_span(&self) -> SourceSpan {
        self.peek().map(|s| s.span).unwrap_or(self.end)
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek().map(|s| &s.tok) == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, what: &'static str) -> Result<(), ParseError> {
        if self.eat(&tok) {
            Ok(())
        } else {
            Err(ParseError {
                kind: ParseErrorKind::Expected(what),
                span: self.next_span(),
            })
        }
    }

    fn disj(&mut self) -> Result<Ast, ParseError> {
        let mut parts = vec![self.conj()?];
        while self.eat(&Tok::OrOr) {
            parts.push(self.conj()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            Ast::Or(parts)
        })
    }

    fn conj(&mut self) -> Result<Ast, ParseError> {
        let mut parts = vec![self.unary()?];
        while self.eat(&Tok::AndAnd) {
            parts.push(self.unary()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            Ast::And(parts)
        })
    }

    fn unary(&mut self) -> Result<Ast, ParseError> {
        if self.eat(&Tok::Bang) {
            return Ok(Ast::Not(Box::new(self.unary()?)));
        }
        if let Some(s) = self.peek() {
            if s.tok == Tok::LParen {
                // A parenthesis can open a nested condition or a
                // parenthesized polynomial; try the condition first and
                // back off to an atom, keeping whichever error got further.
                let save = self.pos;
                self.pos += 1;
                let as_formula = (|| {
                    let inner = self.disj()?;
                    self.expect(Tok::RParen, "a closing parenthesis")?;
                    Ok(inner)
                })();
                match as_formula {
                    Ok(inner) => return Ok(inner),
                    Err(ef) => {
                        let formula_progress = self.pos;
                        self.pos = save;
                        return match self.atom() {
                            Ok(atom) => Ok(atom),
                            Err(ea) => {
                                if formula_progress > self.pos {
                                    Err(ef)
                                } else {
                                    Err(ea)
                                }
                            }
                        };
                    }
                }
            }
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Ast, ParseError> {
        if self.eat(&Tok::True) {
            return Ok(Ast::True);
        }
        if self.eat(&Tok::False) {
            return Ok(Ast::False);
        }
        let lhs = self.poly()?;
        let op = match self.peek() {
            Some(s)
                if matches!(
                    s.tok,
                    Tok::Eq | Tok::Ne | Tok::Le | Tok::Lt | Tok::Ge | Tok::Gt
                ) =>
            {
                let op = s.tok.clone();
                self.pos += 1;
                op
            }
            _ => {
                return Err(ParseError {
                    kind: ParseErrorKind::Expected("a comparison operator"),
                    span: self.next_span(),
                })
            }
        };
        let rhs = self.poly()?;
        Ok(Ast::Cmp { lhs, op, rhs })
    }

    fn poly(&mut self) -> Result<PolyAst, ParseError> {
        let mut acc = self.product()?;
        loop {
            if self.eat(&Tok::Plus) {
                acc = PolyAst::Add(Box::new(acc), Box::new(self.product()?));
            } else if self.eat(&Tok::Minus) {
                acc = PolyAst::Sub(Box::new(acc), Box::new(self.product()?));
            } else {
                return Ok(acc);
            }
        }
    }

    fn product(&mut self) -> Result<PolyAst, ParseError> {
        let mut acc = self.factor()?;
        while self.eat(&Tok::Star) {
            acc = PolyAst::Mul(Box::new(acc), Box::new(self.factor()?));
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<PolyAst, ParseError> {
        if self.eat(&Tok::Minus) {
            return Ok(PolyAst::Neg(Box::new(self.factor()?)));
        }
        if self.eat(&Tok::LParen) {
            let inner = self.poly()?;
            self.expect(Tok::RParen, "a closing parenthesis")?;
            return Ok(inner);
        }
        let s = match self.peek() {
            Some(s) => s.clone(),
            None => {
                return Err(ParseError {
                    kind: ParseErrorKind::UnexpectedEnd,
                    span: self.end,
                })
            }
        };
        match s.tok {
            Tok::Int(v) => {
                self.pos += 1;
                Ok(PolyAst::Int(v))
            }
            Tok::Var { name, primed } => {
                self.pos += 1;
                Ok(PolyAst::Var {
                    name,
                    primed,
                    span: s.span,
                })
            }
            _ => Err(ParseError {
                kind: ParseErrorKind::Expected("a number or variable"),
                span: s.span,
            }),
        }
    }
}

/// Pushes negations down to literals and resolves variable names.
fn lower(ast: &Ast, neg: bool, sys: &TransitionSystem) -> Result<Formula, ParseError> {
    Ok(match ast {
        Ast::True => {
            if neg {
                Formula::False
            } else {
                Formula::True
            }
        }
        Ast::False => {
            if neg {
                Formula::True
            } else {
                Formula::False
            }
        }
        Ast::Not(inner) => lower(inner, !neg, sys)?,
        Ast::And(kids) => {
            let parts = kids
                .iter()
                .map(|k| lower(k, neg, sys))
                .collect::<Result<Vec<_>, _>>()?;
            if neg {
                Formula::or(parts)
            } else {
                Formula::and(parts)
            }
        }
        Ast::Or(kids) => {
            let parts = kids
                .iter()
                .map(|k| lower(k, neg, sys))
                .collect::<Result<Vec<_>, _>>()?;
            if neg {
                Formula::and(parts)
            } else {
                Formula::or(parts)
            }
        }
        Ast::Cmp { lhs, op, rhs } => {
            let l = lower_poly(lhs, sys)?;
            let r = lower_poly(rhs, sys)?;
            let lit = match op {
                Tok::Eq => Literal::eq(&l, &r),
                Tok::Ne => Literal::ne(&l, &r),
                Tok::Le => Literal::le(&l, &r),
                Tok::Lt => Literal::lt(&l, &r),
                Tok::Ge => Literal::ge(&l, &r),
                Tok::Gt => Literal::gt(&l, &r),
                _ => unreachable!("atom() only accepts comparison tokens"),
            };
            Formula::Lit(if neg { lit.negate() } else { lit })
        }
    })
}

fn lower_poly(ast: &PolyAst, sys: &TransitionSystem) -> Result<Term, ParseError> {
    Ok(match ast {
        PolyAst::Int(v) => Term::int(v.clone()),
        PolyAst::Var { name, primed, span } => {
            let v = sys.var_index(name).ok_or(ParseError {
                kind: ParseErrorKind::UndeclaredVar(name.clone()),
                span: *span,
            })?;
            Term::var(if *primed {
                VarRef::Post(v)
            } else {
                VarRef::Pre(v)
            })
        }
        PolyAst::Neg(inner) => -&lower_poly(inner, sys)?,
        PolyAst::Add(a, b) => &lower_poly(a, sys)? + &lower_poly(b, sys)?,
        PolyAst::Sub(a, b) => &lower_poly(a, sys)? - &lower_poly(b, sys)?,
        PolyAst::Mul(a, b) => &lower_poly(a, sys)? * &lower_poly(b, sys)?,
    })
}
