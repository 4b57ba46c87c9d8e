//! Recursive-descent parser for the expression grammar:
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := ['-'] power
//! power  := atom ['^' factor]
//! atom   := number | ident | func '(' expr ')' | '(' expr ')'
//! ident  := ('x'|'y'|'p') digits
//! func   := 'exp' | 'log' | 'sqrt' | 'abs'
//! ```
//!
//! `^` binds tightest and associates to the right; unary minus binds between
//! `^` and `*`. All errors carry the byte offset where parsing failed.

use super::{BinOp, Expr, Node, UnOp, VarKind};
use std::sync::Arc;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: expected {expected}")]
    Syntax { offset: usize, expected: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdent { offset: usize, name: String },
    #[error("unknown function name `{name}` at offset {offset}")]
    UnknownFunc { offset: usize, name: String },
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(s: &'a str) -> Self {
        Cursor { bytes: s.as_bytes(), pos: 0 }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && (self.bytes[self.pos] as char).is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek()?;
        self.pos += 1;
        Some(c)
    }

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        match self.peek() {
            Some(b) if b == c => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(ParseError::Syntax {
                offset: self.pos,
                expected: format!("`{}`", c as char),
            }),
        }
    }

    fn syntax(&self, expected: &str) -> ParseError {
        ParseError::Syntax { offset: self.pos, expected: expected.to_string() }
    }
}

/// Parse an expression string into a tree.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let mut cur = Cursor::new(text);
    let root = parse_expr(&mut cur)?;
    cur.skip_ws();
    if cur.pos != cur.bytes.len() {
        return Err(cur.syntax("end of input"));
    }
    Ok(Expr::from_node(root))
}

fn parse_expr(cur: &mut Cursor) -> Result<Arc<Node>, ParseError> {
    let mut lhs = parse_term(cur)?;
    loop {
        match cur.peek() {
            Some(b'+') => {
                cur.bump();
                let rhs = parse_term(cur)?;
                lhs = Arc::new(Node::Bin(BinOp::Add, lhs, rhs));
            }
            Some(b'-') => {
                cur.bump();
                let rhs = parse_term(cur)?;
                lhs = Arc::new(Node::Bin(BinOp::Sub, lhs, rhs));
            }
            _ => return Ok(lhs),
        }
    }
}

fn parse_term(cur: &mut Cursor) -> Result<Arc<Node>, ParseError> {
    let mut lhs = parse_factor(cur)?;
    loop {
        match cur.peek() {
            Some(b'*') => {
                cur.bump();
                let rhs = parse_factor(cur)?;
                lhs = Arc::new(Node::Bin(BinOp::Mul, lhs, rhs));
            }
            Some(b'/') => {
                cur.bump();
                let rhs = parse_factor(cur)?;
                lhs = Arc::new(Node::Bin(BinOp::Div, lhs, rhs));
            }
            _ => return Ok(lhs),
        }
    }
}

fn parse_factor(cur: &mut Cursor) -> Result<Arc<Node>, ParseError> {
    if cur.peek() == Some(b'-') {
        cur.bump();
        let inner = parse_power(cur)?;
        // Fold a negated literal so `-3` is the constant -3; this keeps
        // print -> parse stable without any other simplification.
        if let Node::Const(c) = inner.as_ref() {
            return Ok(Arc::new(Node::Const(-c)));
        }
        return Ok(Arc::new(Node::Un(UnOp::Neg, inner)));
    }
    parse_power(cur)
}

fn parse_power(cur: &mut Cursor) -> Result<Arc<Node>, ParseError> {
    let base = parse_atom(cur)?;
    if cur.peek() == Some(b'^') {
        cur.bump();
        let exponent = parse_factor(cur)?;
        return Ok(Arc::new(Node::Bin(BinOp::Pow, base, exponent)));
    }
    Ok(base)
}

fn parse_atom(cur: &mut Cursor) -> Result<Arc<Node>, ParseError> {
    match cur.peek() {
        Some(b'(') => {
            cur.bump();
            let inner = parse_expr(cur)?;
            cur.expect(b')')?;
            Ok(inner)
        }
        Some(c) if c.is_ascii_digit() || c == b'.' => parse_number(cur),
        Some(c) if c.is_ascii_alphabetic() => parse_word(cur),
        _ => Err(cur.syntax("a number, identifier, function call, or `(`")),
    }
}

fn parse_number(cur: &mut Cursor) -> Result<Arc<Node>, ParseError> {
    cur.skip_ws();
    let start = cur.pos;
    while cur.pos < cur.bytes.len() && cur.bytes[cur.pos].is_ascii_digit() {
        cur.pos += 1;
    }
    if cur.pos < cur.bytes.len() && cur.bytes[cur.pos] == b'.' {
        cur.pos += 1;
        while cur.pos < cur.bytes.len() && cur.bytes[cur.pos].is_ascii_digit() {
            cur.pos += 1;
        }
    }
    if cur.pos < cur.bytes.len() && (cur.bytes[cur.pos] | 0x20) == b'e' {
        let mark = cur.pos;
        cur.pos += 1;
        if cur.pos < cur.bytes.len() && (cur.bytes[cur.pos] == b'+' || cur.bytes[cur.pos] == b'-') {
            cur.pos += 1;
        }
        if cur.pos < cur.bytes.len() && cur.bytes[cur.pos].is_ascii_digit() {
            while cur.pos < cur.bytes.len() && cur.bytes[cur.pos].is_ascii_digit() {
                cur.pos += 1;
            }
        } else {
            cur.pos = mark; // `e` belongs to something else, stop before it
        }
    }
    let text = std::str::from_utf8(&cur.bytes[start..cur.pos]).unwrap();
    match text.parse::<f64>() {
        Ok(v) => Ok(Arc::new(Node::Const(v))),
        Err(_) => Err(ParseError::Syntax { offset: start, expected: "a number".to_string() }),
    }
}

fn parse_word(cur: &mut Cursor) -> Result<Arc<Node>, ParseError> {
    cur.skip_ws();
    let start = cur.pos;
    while cur.pos < cur.bytes.len() && cur.bytes[cur.pos].is_ascii_alphanumeric() {
        cur.pos += 1;
    }
    let word = std::str::from_utf8(&cur.bytes[start..cur.pos]).unwrap().to_string();

    let func = match word.as_str() {
        "exp" => Some(UnOp::Exp),
        "log" => Some(UnOp::Log),
        "sqrt" => Some(UnOp::Sqrt),
        "abs" => Some(UnOp::Abs),
        _ => None,
    };
    if let Some(op) = func {
        cur.expect(b'(')?;
        let inner = parse_expr(cur)?;
        cur.expect(b')')?;
        return Ok(Arc::new(Node::Un(op, inner)));
    }

    // Variable: one of x/y/p followed by a positive integer index.
    let mut chars = word.chars();
    let head = chars.next().unwrap();
    let rest: String = chars.collect();
    let kind = match head {
        'x' => Some(VarKind::X),
        'y' => Some(VarKind::Y),
        'p' => Some(VarKind::P),
        _ => None,
    };
    if let Some(kind) = kind {
        if !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()) {
            if let Ok(index) = rest.parse::<usize>() {
                if index >= 1 {
                    return Ok(Arc::new(Node::Var(kind, index)));
                }
            }
            return Err(ParseError::UnknownIdent { offset: start, name: word });
        }
    }

    // Alphabetic word followed by `(` looks like a call to a missing function.
    if cur.peek() == Some(b'(') && word.chars().all(|c| c.is_ascii_alphabetic()) {
        return Err(ParseError::UnknownFunc { offset: start, name: word });
    }
    Err(ParseError::UnknownIdent { offset: start, name: word })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Vars;

    #[test]
    fn two_node_expression() {
        let e = parse("10 - x1").unwrap();
        match e.root() {
            Node::Bin(BinOp::Sub, a, b) => {
                assert!(matches!(a.as_ref(), Node::Const(c) if *c == 10.0));
                assert!(matches!(b.as_ref(), Node::Var(VarKind::X, 1)));
            }
            other => panic!("unexpected tree {other:?}"),
        }
    }

    #[test]
    fn incomplete_expression_reports_offset() {
        match parse("x1 +") {
            Err(ParseError::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn precedence_and_associativity() {
        // ^ binds tightest, right-assoc; then unary minus; then * /; then + -
        let e = parse("-2^2").unwrap();
        assert_eq!(e.eval(Vars::x_only(&[])).unwrap(), -4.0);
        let e = parse("2^3^2").unwrap();
        assert_eq!(e.eval(Vars::x_only(&[])).unwrap(), 512.0);
        let e = parse("2^-1").unwrap();
        assert_eq!(e.eval(Vars::x_only(&[])).unwrap(), 0.5);
        let e = parse("1 - 2 - 3").unwrap();
        assert_eq!(e.eval(Vars::x_only(&[])).unwrap(), -4.0);
        let e = parse("2 + 3*4^2").unwrap();
        assert_eq!(e.eval(Vars::x_only(&[])).unwrap(), 50.0);
    }

    #[test]
    fn unknown_names() {
        assert!(matches!(parse("z1 + 1"), Err(ParseError::UnknownIdent { name, .. }) if name == "z1"));
        assert!(matches!(parse("sin(x1)"), Err(ParseError::UnknownFunc { name, .. }) if name == "sin"));
        assert!(matches!(parse("x0 + 1"), Err(ParseError::UnknownIdent { name, .. }) if name == "x0"));
    }

    #[test]
    fn dp_constraint_parses_and_evaluates() {
        let e = parse("y1^2/(1+exp(-40*(x1-y1))) + x1 - y1 - 2").unwrap();
        let v = e.eval(Vars::new(&[2.0], &[2.0], &[])).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn trailing_garbage_is_an_error() {
        assert!(matches!(parse("x1 x2"), Err(ParseError::Syntax { offset: 3, .. })));
        assert!(parse("").is_err());
        assert!(parse("(x1").is_err());
    }

    #[test]
    fn scientific_notation() {
        let e = parse("1e-3 + x1*1.5E2").unwrap();
        let v = e.eval(Vars::x_only(&[2.0])).unwrap();
        assert!((v - 300.001).abs() < 1e-12);
    }
}
