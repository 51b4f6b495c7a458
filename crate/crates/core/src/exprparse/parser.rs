use thiserror::Error;

use super::{BinOp, Expr, Func, ParamTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {msg}")]
    Syntax { offset: usize, msg: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdent { name: String, offset: usize },
    #[error("`{name}` at offset {offset} expects {expected} argument(s), got {got}")]
    Arity {
        name: String,
        offset: usize,
        expected: usize,
        got: usize,
    },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownIdent { offset, .. }
            | ParseError::Arity { offset, .. } => *offset,
        }
    }
}

pub(super) fn parse(src: &str, n: usize, params: &ParamTable) -> Result<Expr, ParseError> {
    let mut p = Parser {
        src: src.as_bytes(),
        pos: 0,
        n,
        params,
    };
    p.skip_ws();
    if p.at_end() {
        return Err(p.syntax("empty expression"));
    }
    let e = p.expr()?;
    p.skip_ws();
    if !p.at_end() {
        return Err(p.syntax("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    n: usize,
    params: &'a ParamTable,
}

impl Parser<'_> {
    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn syntax(&self, msg: &str) -> ParseError {
        ParseError::Syntax {
            offset: self.pos,
            msg: msg.to_string(),
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat(b'+') {
                BinOp::Add
            } else if self.eat(b'-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat(b'*') {
                BinOp::Mul
            } else if self.eat(b'/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat(b'-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if !self.eat(b'^') {
            return Ok(base);
        }
        self.skip_ws();
        let start = self.pos;
        let negative = self.eat(b'-');
        self.skip_ws();
        let digits_start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == digits_start {
            self.pos = start;
            return Err(self.syntax("exponent must be an integer literal"));
        }
        if matches!(self.peek(), Some(b'.' | b'e' | b'E')) {
            return Err(self.syntax("exponent must be an integer literal"));
        }
        let text = std::str::from_utf8(&self.src[digits_start..self.pos]).expect("ascii digits");
        let k: i32 = text.parse().map_err(|_| ParseError::Syntax {
            offset: digits_start,
            msg: "exponent out of range".into(),
        })?;
        Ok(Expr::Pow(Box::new(base), if negative { -k } else { k }))
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.syntax("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.syntax("expected `)`"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            Some(_) => Err(self.syntax("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while matches!(p.peek(), Some(c) if c.is_ascii_digit()) {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut count = digits(self);
        if self.peek() == Some(b'.') {
            self.pos += 1;
            count += digits(self);
        }
        if count == 0 {
            self.pos = start;
            return Err(self.syntax("malformed number"));
        }
        if matches!(self.peek(), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = save;
                return Err(self.syntax("malformed exponent in number"));
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii number");
        text.parse::<f64>().map(Expr::Num).map_err(|_| ParseError::Syntax {
            offset: start,
            msg: "malformed number".into(),
        })
    }

    fn ident(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii ident");
        let save = self.pos;
        self.skip_ws();
        if self.peek() == Some(b'(') {
            let Some(func) = Func::from_name(name) else {
                return Err(ParseError::UnknownIdent {
                    name: name.to_string(),
                    offset: start,
                });
            };
            self.pos += 1;
            let mut args = Vec::new();
            if !self.eat(b')') {
                loop {
                    args.push(self.expr()?);
                    if self.eat(b',') {
                        continue;
                    }
                    if self.eat(b')') {
                        break;
                    }
                    return Err(self.syntax("expected `,` or `)`"));
                }
            }
            if args.len() != func.arity() {
                return Err(ParseError::Arity {
                    name: name.to_string(),
                    offset: start,
                    expected: func.arity(),
                    got: args.len(),
                });
            }
            return Ok(Expr::Call(func, args));
        }
        self.pos = save;
        if name == "t" {
            return Ok(Expr::Time);
        }
        if let Some(idx) = state_index(name) {
            if idx >= 1 && idx <= self.n {
                return Ok(Expr::Var(idx - 1));
            }
            return Err(ParseError::UnknownIdent {
                name: name.to_string(),
                offset: start,
            });
        }
        match self.params.index_of(name) {
            Some(i) => Ok(Expr::Param(i)),
            None => Err(ParseError::UnknownIdent {
                name: name.to_string(),
                offset: start,
            }),
        }
    }
}

/// `x12` -> `Some(12)`.
fn state_index(name: &str) -> Option<usize> {
    let rest = name.strip_prefix('x')?;
    if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    rest.parse().ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(src: &str) -> Result<Expr, ParseError> {
        parse(src, 2, &ParamTable::new())
    }

    #[test]
    fn polynomial_parses() {
        let e = p("-9*x1 - 3*x1^2 - 18").unwrap();
        assert_eq!(e.eval(&[1.0, 0.0], 0.0, &[]).unwrap(), -30.0);
    }

    #[test]
    fn located_errors() {
        assert_eq!(p("x1 +").unwrap_err().offset(), 4);
        assert!(matches!(
            p("sin(x1, x2)"),
            Err(ParseError::Arity { expected: 1, got: 2, .. })
        ));
        assert!(matches!(p("x3"), Err(ParseError::UnknownIdent { .. })));
        assert!(matches!(p("foo"), Err(ParseError::UnknownIdent { .. })));
        assert!(matches!(p("bar(x1)"), Err(ParseError::UnknownIdent { .. })));
        assert!(matches!(p("2x1"), Err(ParseError::Syntax { offset: 1, .. })));
        assert!(matches!(p("x1^1.5"), Err(ParseError::Syntax { .. })));
        assert!(matches!(p("x1^x2"), Err(ParseError::Syntax { .. })));
        assert!(matches!(p(""), Err(ParseError::Syntax { offset: 0, .. })));
        assert!(matches!(p("(x1"), Err(ParseError::Syntax { .. })));
        assert!(matches!(p("1e"), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn precedence() {
        let e = p("-x1^2").unwrap();
        assert_eq!(e.eval(&[3.0, 0.0], 0.0, &[]).unwrap(), -9.0);
        let e = p("2 - 3 - 4").unwrap();
        assert_eq!(e.eval(&[0.0; 2], 0.0, &[]).unwrap(), -5.0);
        let e = p("8 / 2 / 2").unwrap();
        assert_eq!(e.eval(&[0.0; 2], 0.0, &[]).unwrap(), 2.0);
        let e = p("x2^-1 + 1.5e1").unwrap();
        assert_eq!(e.eval(&[0.0, 4.0], 0.0, &[]).unwrap(), 15.25);
    }

    #[test]
    fn params_resolve() {
        let mut params = ParamTable::new();
        params.set("Ff", 0.1);
        params.set("m", 2.0);
        let e = parse("Ff/m * sgn(x2)", 2, &params).unwrap();
        assert_eq!(e.eval(&[0.0, -1.0], 0.0, params.values()).unwrap(), -0.05);
    }
}
