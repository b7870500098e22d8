use super::{Expr, FuncKind, Index, Pipeline, DIM_NAMES};
use std::fmt::{self, Write};

impl Pipeline {
    /// Renders `expr` with the minimal parentheses needed to re-parse the same tree.
    pub fn expr_to_string(&self, expr: &Expr) -> String {
        let mut s = String::new();
        write_expr(self, expr, &mut s).expect("writing to a String cannot fail");
        s
    }
}

fn write_index(i: &Index, out: &mut String) -> fmt::Result {
    match *i {
        Index::Var { dim, offset: 0 } => write!(out, "{}", DIM_NAMES[dim]),
        Index::Var { dim, offset } if offset > 0 => write!(out, "{} + {}", DIM_NAMES[dim], offset),
        Index::Var { dim, offset } => write!(out, "{} - {}", DIM_NAMES[dim], -offset),
        Index::Const(k) => write!(out, "{k}"),
    }
}

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Binary(op, ..) => op.precedence(),
        Expr::Neg(_) => 3,
        _ => 4,
    }
}

fn write_expr(p: &Pipeline, e: &Expr, out: &mut String) -> fmt::Result {
    match e {
        Expr::Lit(v) => {
            if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) {
                write!(out, "(-{})", -v)
            } else {
                write!(out, "{v}")
            }
        }
        Expr::Param(i) => write!(out, "{}", p.params[*i].0),
        Expr::Var(d) => write!(out, "{}", DIM_NAMES[*d]),
        Expr::Access { func, args } => {
            write!(out, "{}(", p.name_of(*func))?;
            for (k, a) in args.iter().enumerate() {
                if k > 0 {
                    out.push_str(", ");
                }
                write_index(a, out)?;
            }
            out.push(')');
            Ok(())
        }
        Expr::Neg(inner) => {
            out.push('-');
            if precedence(inner) < 4 {
                out.push('(');
                write_expr(p, inner, out)?;
                out.push(')');
                Ok(())
            } else {
                write_expr(p, inner, out)
            }
        }
        Expr::Call(op, arg) => {
            write!(out, "{}(", op.name())?;
            write_expr(p, arg, out)?;
            out.push(')');
            Ok(())
        }
        Expr::Binary(op, a, b) => {
            let prec = op.precedence();
            let paren_left = precedence(a) < prec;
            let paren_right = precedence(b) <= prec;
            if paren_left {
                out.push('(');
            }
            write_expr(p, a, out)?;
            if paren_left {
                out.push(')');
            }
            write!(out, " {} ", op.symbol())?;
            if paren_right {
                out.push('(');
            }
            write_expr(p, b, out)?;
            if paren_right {
                out.push(')');
            }
            Ok(())
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "pipeline {}", self.name)?;
        for (name, v) in &self.params {
            writeln!(f, "param {name} = {v}")?;
        }
        for func in &self.funcs {
            let vars = func.dim_names().join(", ");
            match &func.kind {
                FuncKind::Input { extent } => writeln!(f, "input {}({vars}) : {extent}", func.name)?,
                FuncKind::ClampEdge { input } => {
                    writeln!(f, "func {} = clamp_edge({})", func.name, self.name_of(*input))?
                }
                FuncKind::Computed { expr } => {
                    writeln!(f, "func {}({vars}) = {}", func.name, self.expr_to_string(expr))?
                }
            }
        }
        writeln!(f, "output {} : {}", self.name_of(self.output), self.output_extent)
    }
}

#[cfg(test)]
mod tests {
    use crate::ir::parse_pipeline;

    #[test]
    fn printing_keeps_associativity() {
        let src = "pipeline t\ninput i(x) : 4\nfunc f(x) = i(x) - (i(x) - i(x)) / (i(x) * (2 + x)) + -(x * x)\noutput f : 4\n";
        let p = parse_pipeline(src).unwrap();
        let again = parse_pipeline(&p.to_string()).unwrap();
        assert_eq!(p, again);
    }
}
