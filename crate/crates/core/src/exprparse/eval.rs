use thiserror::Error;

use super::{BinOp, Expr, Func};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("division by zero in `{node}`")]
    DivisionByZero { node: String },
    #[error("domain error in `{node}`: {msg}")]
    Domain { node: String, msg: &'static str },
    #[error("state index {index} out of range for a state of dimension {dim}")]
    StateIndex { index: usize, dim: usize },
    #[error("parameter index {0} out of range")]
    ParamIndex(usize),
}

pub(super) fn eval(e: &Expr, x: &[f64], t: f64, params: &[f64]) -> Result<f64, EvalError> {
    Ok(match e {
        Expr::Num(v) => *v,
        Expr::Var(i) => *x.get(*i).ok_or(EvalError::StateIndex {
            index: *i,
            dim: x.len(),
        })?,
        Expr::Time => t,
        Expr::Param(i) => *params.get(*i).ok_or(EvalError::ParamIndex(*i))?,
        Expr::Neg(a) => -eval(a, x, t, params)?,
        Expr::Bin(op, a, b) => {
            let a_v = eval(a, x, t, params)?;
            let b_v = eval(b, x, t, params)?;
            match op {
                BinOp::Add => a_v + b_v,
                BinOp::Sub => a_v - b_v,
                BinOp::Mul => a_v * b_v,
                BinOp::Div => {
                    if b_v == 0.0 {
                        return Err(EvalError::DivisionByZero { node: e.to_string() });
                    }
                    a_v / b_v
                }
            }
        }
        Expr::Pow(a, k) => {
            let base = eval(a, x, t, params)?;
            if *k < 0 && base == 0.0 {
                return Err(EvalError::DivisionByZero { node: e.to_string() });
            }
            base.powi(*k)
        }
        Expr::Call(f, args) => {
            let a0 = eval(&args[0], x, t, params)?;
            match f {
                Func::Sin => a0.sin(),
                Func::Cos => a0.cos(),
                Func::Exp => a0.exp(),
                Func::Ln => {
                    if a0 <= 0.0 {
                        return Err(EvalError::Domain {
                            node: e.to_string(),
                            msg: "logarithm of a non-positive value",
                        });
                    }
                    a0.ln()
                }
                Func::Abs => a0.abs(),
                Func::Sgn => {
                    if a0 > 0.0 {
                        1.0
                    } else if a0 < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                }
                Func::Sqrt => {
                    if a0 < 0.0 {
                        return Err(EvalError::Domain {
                            node: e.to_string(),
                            msg: "square root of a negative value",
                        });
                    }
                    a0.sqrt()
                }
                Func::Min => a0.min(eval(&args[1], x, t, params)?),
                Func::Max => a0.max(eval(&args[1], x, t, params)?),
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use crate::exprparse::{Expr, ParamTable};

    use super::*;

    fn ev(src: &str, x: &[f64], t: f64) -> Result<f64, EvalError> {
        Expr::parse(src, 2, &ParamTable::new()).unwrap().eval(x, t, &[])
    }

    #[test]
    fn basic_values() {
        assert_eq!(ev("-9*x1 - 3*x1^2 - 18", &[1.0, 0.0], 0.0).unwrap(), -30.0);
        assert_eq!(ev("sgn(x2)", &[1.0, 0.0], 0.0).unwrap(), 0.0);
        assert_eq!(ev("sgn(x2)", &[1.0, -2.0], 0.0).unwrap(), -1.0);
        let v = ev("sin(t)", &[0.0, 0.0], std::f64::consts::FRAC_PI_2).unwrap();
        assert!((v - 1.0).abs() <= 1e-15);
        assert_eq!(ev("max(x1, x2) + min(x1, x2)", &[2.0, 5.0], 0.0).unwrap(), 7.0);
    }

    #[test]
    fn located_failures() {
        match ev("1/(x1 - 1)", &[1.0, 0.0], 0.0) {
            Err(EvalError::DivisionByZero { node }) => assert_eq!(node, "1/(x1 - 1)"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            ev("sqrt(x1)", &[-1.0, 0.0], 0.0),
            Err(EvalError::Domain { .. })
        ));
        assert!(matches!(
            ev("x2", &[1.0], 0.0),
            Err(EvalError::StateIndex { index: 1, dim: 1 })
        ));
    }
}
