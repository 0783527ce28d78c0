//! Textual kernel mini-IR: syntax tree, parser with static validation, and
//! the canonical printer.

mod ast;
mod lexer;
mod parser;
mod print;

use std::fmt;

pub use ast::*;
pub use parser::parse_kernel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("undeclared identifier `{0}`")]
    UndeclaredIdentifier(String),
    #[error("undeclared array `{0}`")]
    UndeclaredArray(String),
    #[error("local `{0}` may be used before it is assigned")]
    UnassignedLocal(String),
    #[error("`{0}` is already declared")]
    DuplicateName(String),
    #[error("duplicate barrier id `{0}`")]
    DuplicateBarrier(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("invalid array size: {0}")]
    InvalidSizeExpr(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{}:{}: {kind}", pos.line, pos.column)]
pub struct ParseError {
    pub pos: Pos,
    pub kind: ParseErrorKind,
}

impl ParseError {
    pub(crate) fn new(pos: Pos, kind: ParseErrorKind) -> Self {
        Self { pos, kind }
    }
}

/// Number of grid and block axes a kernel relies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dimensionality {
    pub grid_axes: usize,
    pub block_axes: usize,
}

impl fmt::Display for Dimensionality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "grid {}D, block {}D", self.grid_axes, self.block_axes)
    }
}

/// Highest axis (x=1, y=2, z=3) mentioned by `blockIdx`/`gridDim` for the
/// grid and by `threadIdx`/`blockDim` for the block; at least 1 each.
pub fn required_dimensionality(program: &KernelProgram) -> Dimensionality {
    let mut dims = Dimensionality {
        grid_axes: 1,
        block_axes: 1,
    };
    let mut see = |e: &Expr| {
        if let Expr::Builtin(b) = e {
            let n = b.axis.index() + 1;
            match b.kind {
                BuiltinKind::BlockIdx | BuiltinKind::GridDim => {
                    dims.grid_axes = dims.grid_axes.max(n)
                }
                BuiltinKind::ThreadIdx | BuiltinKind::BlockDim => {
                    dims.block_axes = dims.block_axes.max(n)
                }
            }
        }
    };
    for a in &program.arrays {
        a.size.visit(&mut see);
    }
    walk_stmts(&program.body, &mut |s| {
        for e in s.exprs() {
            e.visit(&mut see);
        }
    });
    dims
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(src: &str) -> (usize, usize) {
        let d = required_dimensionality(&parse_kernel(src).unwrap());
        (d.grid_axes, d.block_axes)
    }

    #[test]
    fn dimensionality_examples() {
        assert_eq!(dims("kernel k() { x = threadIdx.x; }"), (1, 1));
        assert_eq!(
            dims("kernel k() { x = threadIdx.x + threadIdx.z; }"),
            (1, 3)
        );
        assert_eq!(
            dims("kernel k() { i = blockIdx.x * blockDim.x + threadIdx.x; j = blockIdx.y * blockDim.y + threadIdx.y; }"),
            (2, 2)
        );
        assert_eq!(dims("kernel k() { return; }"), (1, 1));
        // array sizes count too
        assert_eq!(dims("kernel k() { global a[gridDim.z]; }"), (3, 1));
    }
}
