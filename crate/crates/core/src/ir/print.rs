//! Canonical source form. Binary expressions are fully parenthesized so the
//! output re-parses to the same tree.

use std::fmt::{self, Write};

use super::ast::*;

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Int(v) => write!(f, "{v}"),
            Expr::Float(v) => write!(f, "{v:?}"),
            Expr::Bool(b) => write!(f, "{b}"),
            Expr::Local(l) => f.write_str(&l.name),
            Expr::Param(p) => f.write_str(&p.name),
            Expr::Builtin(b) => write!(f, "{b}"),
            Expr::Unary(UnaryOp::Neg, e) => write!(f, "-({e})"),
            Expr::Unary(UnaryOp::Not, e) => write!(f, "!({e})"),
            Expr::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::Cast(ty, e) => write!(f, "{ty}({e})"),
        }
    }
}

fn write_block(out: &mut String, stmts: &[Stmt], depth: usize) -> fmt::Result {
    for s in stmts {
        write_stmt(out, s, depth)?;
    }
    Ok(())
}

fn write_stmt(out: &mut String, s: &Stmt, depth: usize) -> fmt::Result {
    let pad = "  ".repeat(depth);
    match &s.kind {
        StmtKind::Assign { target, value } => writeln!(out, "{pad}{} = {value};", target.name),
        StmtKind::Load {
            target,
            array,
            index,
        } => writeln!(out, "{pad}{} = {}[{index}];", target.name, array.name),
        StmtKind::Store {
            array,
            index,
            value,
        } => writeln!(out, "{pad}{}[{index}] = {value};", array.name),
        StmtKind::Sync { barrier } => writeln!(out, "{pad}sync {barrier};"),
        StmtKind::Return => writeln!(out, "{pad}return;"),
        StmtKind::If {
            cond,
            then_body,
            else_body,
        } => {
            writeln!(out, "{pad}if ({cond}) {{")?;
            write_block(out, then_body, depth + 1)?;
            if else_body.is_empty() {
                writeln!(out, "{pad}}}")
            } else {
                writeln!(out, "{pad}}} else {{")?;
                write_block(out, else_body, depth + 1)?;
                writeln!(out, "{pad}}}")
            }
        }
        StmtKind::While { cond, body } => {
            writeln!(out, "{pad}while ({cond}) {{")?;
            write_block(out, body, depth + 1)?;
            writeln!(out, "{pad}}}")
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ParamKind::ArrayHandle => write!(f, "array {}", self.name),
            ParamKind::Scalar {
                ty,
                mutable,
                default,
            } => {
                if !mutable {
                    f.write_str("fixed ")?;
                }
                write!(f, "{ty} {}", self.name)?;
                if let Some(d) = default {
                    write!(f, " = {d:?}")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for KernelProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        let params: Vec<String> = self.params.iter().map(|p| p.to_string()).collect();
        writeln!(out, "kernel {}({}) {{", self.name, params.join(", "))?;
        for a in &self.arrays {
            writeln!(out, "  {} {} {}[{}];", a.space, a.elem, a.name, a.size)?;
        }
        write_block(&mut out, &self.body, 1)?;
        out.push_str("}\n");
        f.write_str(&out)
    }
}
