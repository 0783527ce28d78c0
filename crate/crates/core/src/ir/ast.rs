//! Kernel mini-IR syntax tree.
//!
//! Identifiers are resolved during parsing: every local, parameter and array
//! reference carries the slot it binds to, so the simulator never looks names
//! up at run time.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Statement identifier, unique per kernel and assigned in source order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StmtId(pub u32);

impl fmt::Display for StmtId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarType {
    Int,
    Float,
}

impl fmt::Display for ScalarType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScalarType::Int => "int",
            ScalarType::Float => "float",
        })
    }
}

/// Static type of an expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Type {
    Int,
    Float,
    Bool,
}

impl Type {
    pub fn is_numeric(self) -> bool {
        matches!(self, Type::Int | Type::Float)
    }
}

impl From<ScalarType> for Type {
    fn from(t: ScalarType) -> Self {
        match t {
            ScalarType::Int => Type::Int,
            ScalarType::Float => Type::Float,
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Type::Int => "int",
            Type::Float => "float",
            Type::Bool => "bool",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamKind {
    /// A numeric kernel argument. Only `mutable` scalars are touched by the search.
    Scalar {
        ty: ScalarType,
        mutable: bool,
        default: Option<f64>,
    },
    /// Handle to a global array declared in the kernel body.
    ArrayHandle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
}

impl Param {
    pub fn scalar_type(&self) -> Option<ScalarType> {
        match self.kind {
            ParamKind::Scalar { ty, .. } => Some(ty),
            ParamKind::ArrayHandle => None,
        }
    }

    pub fn is_mutable(&self) -> bool {
        matches!(self.kind, ParamKind::Scalar { mutable: true, .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemorySpace {
    Global,
    Shared,
}

impl fmt::Display for MemorySpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MemorySpace::Global => "global",
            MemorySpace::Shared => "shared",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayDecl {
    pub name: String,
    pub space: MemorySpace,
    pub elem: ScalarType,
    /// Element count; may only mention params and `blockDim`/`gridDim`.
    pub size: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalDecl {
    pub name: String,
    pub ty: Type,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalRef {
    pub name: String,
    pub slot: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamRef {
    pub name: String,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrayRef {
    pub name: String,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BuiltinKind {
    ThreadIdx,
    BlockIdx,
    BlockDim,
    GridDim,
}

impl BuiltinKind {
    pub const ALL: [BuiltinKind; 4] = [
        BuiltinKind::ThreadIdx,
        BuiltinKind::BlockIdx,
        BuiltinKind::BlockDim,
        BuiltinKind::GridDim,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinKind::ThreadIdx => "threadIdx",
            BuiltinKind::BlockIdx => "blockIdx",
            BuiltinKind::BlockDim => "blockDim",
            BuiltinKind::GridDim => "gridDim",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.name() == s)
    }

    /// Whether the builtin varies per thread within a launch.
    pub fn is_positional(self) -> bool {
        matches!(self, BuiltinKind::ThreadIdx | BuiltinKind::BlockIdx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Builtin {
    pub kind: BuiltinKind,
    pub axis: Axis,
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.kind.name(), self.axis.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Rem => "%",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::Eq => "==",
            BinaryOp::Ne => "!=",
            BinaryOp::And => "&&",
            BinaryOp::Or => "||",
        }
    }

    pub fn is_arithmetic(self) -> bool {
        matches!(
            self,
            BinaryOp::Add | BinaryOp::Sub | BinaryOp::Mul | BinaryOp::Div | BinaryOp::Rem
        )
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge | BinaryOp::Eq | BinaryOp::Ne
        )
    }

    pub fn is_logical(self) -> bool {
        matches!(self, BinaryOp::And | BinaryOp::Or)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Int(i64),
    Float(f64),
    Bool(bool),
    Local(LocalRef),
    Param(ParamRef),
    Builtin(Builtin),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Cast(ScalarType, Box<Expr>),
}

impl Expr {
    /// Calls `f` on every sub-expression, including `self`, in pre-order.
    pub fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Unary(_, e) | Expr::Cast(_, e) => e.visit(f),
            Expr::Binary(_, l, r) => {
                l.visit(f);
                r.visit(f);
            }
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub id: StmtId,
    pub kind: StmtKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Assign {
        target: LocalRef,
        value: Expr,
    },
    Load {
        target: LocalRef,
        array: ArrayRef,
        index: Expr,
    },
    Store {
        array: ArrayRef,
        index: Expr,
        value: Expr,
    },
    Sync {
        barrier: String,
    },
    If {
        cond: Expr,
        then_body: Vec<Stmt>,
        else_body: Vec<Stmt>,
    },
    While {
        cond: Expr,
        body: Vec<Stmt>,
    },
    Return,
}

impl Stmt {
    /// Expressions held directly by this statement (not by nested statements).
    pub fn exprs(&self) -> Vec<&Expr> {
        match &self.kind {
            StmtKind::Assign { value, .. } => vec![value],
            StmtKind::Load { index, .. } => vec![index],
            StmtKind::Store { index, value, .. } => vec![index, value],
            StmtKind::If { cond, .. } | StmtKind::While { cond, .. } => vec![cond],
            StmtKind::Sync { .. } | StmtKind::Return => Vec::new(),
        }
    }

    /// Nested statement lists, in source order.
    pub fn children(&self) -> Vec<&[Stmt]> {
        match &self.kind {
            StmtKind::If {
                then_body,
                else_body,
                ..
            } => vec![then_body, else_body],
            StmtKind::While { body, .. } => vec![body],
            _ => Vec::new(),
        }
    }
}

/// Pre-order walk over a statement list.
pub fn walk_stmts<'a>(stmts: &'a [Stmt], f: &mut impl FnMut(&'a Stmt)) {
    for s in stmts {
        f(s);
        match &s.kind {
            StmtKind::If {
                then_body,
                else_body,
                ..
            } => {
                walk_stmts(then_body, f);
                walk_stmts(else_body, f);
            }
            StmtKind::While { body, .. } => walk_stmts(body, f),
            _ => {}
        }
    }
}

/// A parsed and validated kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelProgram {
    pub name: String,
    pub params: Vec<Param>,
    pub arrays: Vec<ArrayDecl>,
    pub locals: Vec<LocalDecl>,
    pub body: Vec<Stmt>,
    pub barrier_ids: BTreeSet<String>,
}

impl KernelProgram {
    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn array(&self, name: &str) -> Option<&ArrayDecl> {
        self.arrays.iter().find(|a| a.name == name)
    }

    /// Names of scalar params the search is allowed to mutate.
    pub fn mutable_params(&self) -> impl Iterator<Item = &Param> {
        self.params.iter().filter(|p| p.is_mutable())
    }

    pub fn scalar_params(&self) -> impl Iterator<Item = &Param> {
        self.params.iter().filter(|p| p.scalar_type().is_some())
    }

    /// Barrier ids in the order their `sync` statements appear.
    pub fn barriers_in_order(&self) -> Vec<&str> {
        let mut out = Vec::new();
        walk_stmts(&self.body, &mut |s| {
            if let StmtKind::Sync { barrier } = &s.kind {
                out.push(barrier.as_str());
            }
        });
        out
    }

    pub fn stmt_count(&self) -> usize {
        let mut n = 0;
        walk_stmts(&self.body, &mut |_| n += 1);
        n
    }

    pub fn find_stmt(&self, id: StmtId) -> Option<&Stmt> {
        let mut found = None;
        walk_stmts(&self.body, &mut |s| {
            if s.id == id {
                found = Some(s);
            }
        });
        found
    }

    /// Copy of the program with the `sync` for `barrier` deleted.
    ///
    /// Statement ids of the remaining statements are kept, so reports of the
    /// two programs can be compared directly.
    pub fn without_barrier(&self, barrier: &str) -> KernelProgram {
        fn strip(stmts: &[Stmt], barrier: &str) -> Vec<Stmt> {
            stmts
                .iter()
                .filter(|s| !matches!(&s.kind, StmtKind::Sync { barrier: b } if b == barrier))
                .map(|s| {
                    let kind = match &s.kind {
                        StmtKind::If {
                            cond,
                            then_body,
                            else_body,
                        } => StmtKind::If {
                            cond: cond.clone(),
                            then_body: strip(then_body, barrier),
                            else_body: strip(else_body, barrier),
                        },
                        StmtKind::While { cond, body } => StmtKind::While {
                            cond: cond.clone(),
                            body: strip(body, barrier),
                        },
                        other => other.clone(),
                    };
                    Stmt { id: s.id, kind }
                })
                .collect()
        }
        let mut out = self.clone();
        out.body = strip(&self.body, barrier);
        out.barrier_ids.remove(barrier);
        out
    }
}
