use std::fmt;

use super::{BinOp, Expr, ParamTable};

/// Precedence-aware printer. Output reparses to the same tree for any tree
/// produced by the parser.
pub struct Display<'a> {
    pub(super) expr: &'a Expr,
    pub(super) params: Option<&'a ParamTable>,
}

// Binding strength: sums 1, products 2, negation 3, powers 4, atoms 5.
fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
        Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
        Expr::Neg(_) => 3,
        Expr::Num(v) if v.is_sign_negative() => 3,
        Expr::Pow(..) => 4,
        _ => 5,
    }
}

impl Display<'_> {
    fn write(&self, e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match e {
            Expr::Num(v) => write_num(*v, f),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Time => f.write_str("t"),
            Expr::Param(i) => match self.params.and_then(|p| p.names().get(*i)) {
                Some(name) => f.write_str(name),
                None => write!(f, "p{i}"),
            },
            Expr::Neg(a) => {
                f.write_str("-")?;
                self.wrap(a, prec(a) < 3, f)
            }
            Expr::Bin(op, a, b) => {
                let p = prec(e);
                self.wrap(a, prec(a) < p, f)?;
                match op {
                    BinOp::Add | BinOp::Sub => write!(f, " {} ", op.symbol())?,
                    _ => write!(f, "{}", op.symbol())?,
                }
                // Right operands need strictly tighter binding (left associativity);
                // negations on the right are parenthesized for readability.
                self.wrap(b, prec(b) <= p || prec(b) == 3, f)
            }
            Expr::Pow(a, k) => {
                self.wrap(a, prec(a) < 5, f)?;
                write!(f, "^{k}")
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    self.write(a, f)?;
                }
                f.write_str(")")
            }
        }
    }

    fn wrap(&self, e: &Expr, parens: bool, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if parens {
            f.write_str("(")?;
            self.write(e, f)?;
            f.write_str(")")
        } else {
            self.write(e, f)
        }
    }
}

fn write_num(v: f64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    // Rust's `{}` for f64 is the shortest string that round-trips.
    if v.is_finite() {
        write!(f, "{v}")
    } else {
        write!(f, "({v})")
    }
}

impl fmt::Display for Display<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(self.expr, f)
    }
}

#[cfg(test)]
mod tests {
    use crate::exprparse::{Expr, ParamTable};

    #[test]
    fn prints_minimal_parens() {
        let params = ParamTable::new();
        for src in [
            "-9*x1 - 3*x1^2 - 18",
            "x1 - (x2 - 1)",
            "x1/(x2*3)",
            "-(x1 + 1)^2",
            "sin(x1)*x1 + cos(t)",
            "max(x1, -x2)",
        ] {
            let e = Expr::parse(src, 2, &params).unwrap();
            assert_eq!(e.to_string(), src);
        }
    }
}
