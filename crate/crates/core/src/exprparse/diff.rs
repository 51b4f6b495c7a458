use super::{BinOp, DiffError, Expr, Func};

pub(super) fn diff(e: &Expr, var: usize) -> Result<Expr, DiffError> {
    Ok(simplify(raw(e, var)?))
}

fn raw(e: &Expr, var: usize) -> Result<Expr, DiffError> {
    if !e.depends_on(var) {
        return Ok(Expr::Num(0.0));
    }
    Ok(match e {
        Expr::Num(_) | Expr::Time | Expr::Param(_) => Expr::Num(0.0),
        Expr::Var(i) => Expr::Num(if *i == var { 1.0 } else { 0.0 }),
        Expr::Neg(a) => Expr::Neg(Box::new(raw(a, var)?)),
        Expr::Bin(op, a, b) => {
            let da = raw(a, var)?;
            let db = raw(b, var)?;
            let (a, b) = ((**a).clone(), (**b).clone());
            match op {
                BinOp::Add => Expr::add(da, db),
                BinOp::Sub => Expr::sub(da, db),
                BinOp::Mul => Expr::add(Expr::mul(da, b), Expr::mul(a, db)),
                BinOp::Div => Expr::div(
                    Expr::sub(Expr::mul(da, b.clone()), Expr::mul(a, db)),
                    Expr::Pow(Box::new(b), 2),
                ),
            }
        }
        Expr::Pow(a, k) => {
            let da = raw(a, var)?;
            let inner = Expr::Pow(a.clone(), k - 1);
            Expr::mul(Expr::mul(Expr::Num(f64::from(*k)), inner), da)
        }
        Expr::Call(f, args) => {
            if f.is_nonsmooth() {
                return Err(DiffError { node: e.to_string() });
            }
            let u = args[0].clone();
            let du = raw(&u, var)?;
            let outer = match f {
                Func::Sin => Expr::call(Func::Cos, vec![u]),
                Func::Cos => Expr::Neg(Box::new(Expr::call(Func::Sin, vec![u]))),
                Func::Exp => Expr::call(Func::Exp, vec![u]),
                Func::Ln => Expr::div(Expr::Num(1.0), u),
                Func::Sqrt => Expr::div(
                    Expr::Num(1.0),
                    Expr::mul(Expr::Num(2.0), Expr::call(Func::Sqrt, vec![u])),
                ),
                Func::Abs | Func::Sgn | Func::Min | Func::Max => unreachable!("rejected above"),
            };
            Expr::mul(outer, du)
        }
    })
}

fn is_num(e: &Expr, v: f64) -> bool {
    matches!(e, Expr::Num(x) if *x == v)
}

/// Bottom-up constant folding and 0/1 identities. Not a CAS.
pub(super) fn simplify(e: Expr) -> Expr {
    match e {
        Expr::Neg(a) => match simplify(*a) {
            Expr::Num(v) => Expr::Num(-v),
            Expr::Neg(inner) => *inner,
            a => Expr::Neg(Box::new(a)),
        },
        Expr::Pow(a, k) => {
            let a = simplify(*a);
            match (a, k) {
                (_, 0) => Expr::Num(1.0),
                (a, 1) => a,
                (Expr::Num(v), k) => Expr::Num(v.powi(k)),
                (a, k) => Expr::Pow(Box::new(a), k),
            }
        }
        Expr::Call(f, args) => {
            let args: Vec<Expr> = args.into_iter().map(simplify).collect();
            Expr::Call(f, args)
        }
        Expr::Bin(op, a, b) => {
            let a = simplify(*a);
            let b = simplify(*b);
            if let (Expr::Num(x), Expr::Num(y)) = (&a, &b) {
                let folded = match op {
                    BinOp::Add => Some(x + y),
                    BinOp::Sub => Some(x - y),
                    BinOp::Mul => Some(x * y),
                    BinOp::Div if *y != 0.0 => Some(x / y),
                    BinOp::Div => None,
                };
                if let Some(v) = folded {
                    return Expr::Num(v);
                }
            }
            match op {
                BinOp::Add if is_num(&a, 0.0) => b,
                BinOp::Add | BinOp::Sub if is_num(&b, 0.0) => a,
                BinOp::Sub if is_num(&a, 0.0) => simplify(Expr::Neg(Box::new(b))),
                BinOp::Mul if is_num(&a, 0.0) || is_num(&b, 0.0) => Expr::Num(0.0),
                BinOp::Mul if is_num(&a, 1.0) => b,
                BinOp::Mul if is_num(&b, 1.0) => a,
                BinOp::Div if is_num(&b, 1.0) => a,
                BinOp::Div if is_num(&a, 0.0) => Expr::Num(0.0),
                // c1 * (c2 * e) -> (c1 c2) * e
                BinOp::Mul => match (a, b) {
                    (Expr::Num(c1), Expr::Bin(BinOp::Mul, inner_a, inner_b))
                        if matches!(*inner_a, Expr::Num(_)) =>
                    {
                        let Expr::Num(c2) = *inner_a else { unreachable!() };
                        Expr::mul(Expr::Num(c1 * c2), *inner_b)
                    }
                    (Expr::Bin(BinOp::Mul, inner_a, inner_b), Expr::Num(c1))
                        if matches!(*inner_a, Expr::Num(_)) =>
                    {
                        let Expr::Num(c2) = *inner_a else { unreachable!() };
                        Expr::mul(Expr::Num(c1 * c2), *inner_b)
                    }
                    (a, Expr::Num(c)) => Expr::mul(Expr::Num(c), a),
                    (a, b) => Expr::mul(a, b),
                },
                op => Expr::Bin(op, Box::new(a), Box::new(b)),
            }
        }
        leaf => leaf,
    }
}

#[cfg(test)]
mod tests {
    use crate::exprparse::{Expr, ParamTable};

    fn d(src: &str, var: usize) -> String {
        Expr::parse(src, 2, &ParamTable::new())
            .unwrap()
            .diff(var)
            .unwrap()
            .to_string()
    }

    #[test]
    fn textbook_derivatives() {
        assert_eq!(d("-9*x1 - 3*x1^2 - 18", 0), "-9 - 6*x1");
        assert_eq!(d("x1^2", 1), "0");
        assert_eq!(d("sin(x1)*x1", 0), "cos(x1)*x1 + sin(x1)");
        assert_eq!(d("-4*x2", 1), "-4");
        assert_eq!(d("x1*x2", 1), "x1");
    }

    #[test]
    fn nonsmooth_nodes_are_rejected_only_on_the_path() {
        let params = ParamTable::new();
        let e = Expr::parse("abs(x1) + x2", 2, &params).unwrap();
        let err = e.diff(0).unwrap_err();
        assert_eq!(err.node, "abs(x1)");
        assert_eq!(e.diff(1).unwrap(), Expr::Num(1.0));
        let e = Expr::parse("sgn(t)*x1", 2, &params).unwrap();
        assert_eq!(e.diff(0).unwrap().to_string(), "sgn(t)");
    }
}
