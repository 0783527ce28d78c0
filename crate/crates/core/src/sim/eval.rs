use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ir::{BinaryOp, Builtin, BuiltinKind, Expr, ScalarType, StmtId, Type, UnaryOp};

use super::Dim3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Bool(bool),
}

impl Value {
    pub fn zero(ty: Type) -> Value {
        match ty {
            Type::Int => Value::Int(0),
            Type::Float => Value::Float(0.0),
            Type::Bool => Value::Bool(false),
        }
    }

    pub fn as_int(self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_bool(self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(b),
            _ => None,
        }
    }

    fn as_f64(self) -> f64 {
        match self {
            Value::Int(v) => v as f64,
            Value::Float(v) => v,
            Value::Bool(b) => f64::from(u8::from(b)),
        }
    }

    /// Converts into a slot of type `ty`; only int-to-float widening is implicit.
    pub fn coerce(self, ty: Type) -> Value {
        match (self, ty) {
            (Value::Int(v), Type::Float) => Value::Float(v as f64),
            (v, _) => v,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v:?}"),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RuntimeError {
    #[error("division or modulo by zero")]
    DivisionByZero,
    #[error("integer overflow")]
    Overflow,
    #[error("cannot convert non-finite float to int")]
    InvalidCast,
    #[error("{array}[{index}] is outside the declared size {size}")]
    OutOfBounds { array: String, index: i64, size: u64 },
    #[error("statement {stmt}: {source}")]
    At {
        stmt: StmtId,
        #[source]
        source: Box<RuntimeError>,
    },
}

impl RuntimeError {
    pub(crate) fn at(self, stmt: StmtId) -> RuntimeError {
        match self {
            e @ RuntimeError::At { .. } => e,
            e => RuntimeError::At {
                stmt,
                source: Box::new(e),
            },
        }
    }
}

/// Everything an expression can read for one thread.
#[derive(Debug, Clone, Copy)]
pub struct ThreadEnv<'a> {
    pub locals: &'a [Value],
    pub params: &'a [Value],
    pub thread_idx: Dim3,
    pub block_idx: Dim3,
    pub block_dim: Dim3,
    pub grid_dim: Dim3,
}

impl ThreadEnv<'_> {
    fn builtin(&self, b: Builtin) -> i64 {
        let d = match b.kind {
            BuiltinKind::ThreadIdx => self.thread_idx,
            BuiltinKind::BlockIdx => self.block_idx,
            BuiltinKind::BlockDim => self.block_dim,
            BuiltinKind::GridDim => self.grid_dim,
        };
        i64::from(d.0[b.axis.index()])
    }
}

/// Evaluates a validated expression. Integer division truncates toward zero.
pub fn evaluate_expr(expr: &Expr, env: &ThreadEnv<'_>) -> Result<Value, RuntimeError> {
    Ok(match expr {
        Expr::Int(v) => Value::Int(*v),
        Expr::Float(v) => Value::Float(*v),
        Expr::Bool(b) => Value::Bool(*b),
        Expr::Local(l) => env.locals[l.slot],
        Expr::Param(p) => env.params[p.index],
        Expr::Builtin(b) => Value::Int(env.builtin(*b)),
        Expr::Unary(UnaryOp::Neg, e) => match evaluate_expr(e, env)? {
            Value::Int(v) => Value::Int(v.checked_neg().ok_or(RuntimeError::Overflow)?),
            Value::Float(v) => Value::Float(-v),
            Value::Bool(_) => unreachable!("validated"),
        },
        Expr::Unary(UnaryOp::Not, e) => Value::Bool(!evaluate_expr(e, env)?.as_bool().unwrap_or(false)),
        Expr::Cast(ty, e) => {
            let v = evaluate_expr(e, env)?;
            match ty {
                ScalarType::Float => Value::Float(v.as_f64()),
                ScalarType::Int => match v {
                    Value::Int(i) => Value::Int(i),
                    other => Value::Int(float_to_int(other.as_f64())?),
                },
            }
        }
        Expr::Binary(op, l, r) => {
            let lv = evaluate_expr(l, env)?;
            // short-circuit
            match (op, lv) {
                (BinaryOp::And, Value::Bool(false)) => return Ok(Value::Bool(false)),
                (BinaryOp::Or, Value::Bool(true)) => return Ok(Value::Bool(true)),
                _ => {}
            }
            let rv = evaluate_expr(r, env)?;
            binary(*op, lv, rv)?
        }
    })
}

/// Truncates toward zero; rejects NaN, infinities and out-of-range values.
pub fn float_to_int(v: f64) -> Result<i64, RuntimeError> {
    if !v.is_finite() {
        return Err(RuntimeError::InvalidCast);
    }
    let t = v.trunc();
    if t < i64::MIN as f64 || t >= i64::MAX as f64 {
        return Err(RuntimeError::Overflow);
    }
    Ok(t as i64)
}

fn binary(op: BinaryOp, l: Value, r: Value) -> Result<Value, RuntimeError> {
    use BinaryOp::*;
    if op.is_logical() {
        let (a, b) = (l.as_bool().unwrap_or(false), r.as_bool().unwrap_or(false));
        return Ok(Value::Bool(if op == And { a && b } else { a || b }));
    }
    if let (Value::Bool(a), Value::Bool(b)) = (l, r) {
        return Ok(Value::Bool(if op == Eq { a == b } else { a != b }));
    }
    if let (Value::Int(a), Value::Int(b)) = (l, r) {
        let v = match op {
            Add => Value::Int(a.checked_add(b).ok_or(RuntimeError::Overflow)?),
            Sub => Value::Int(a.checked_sub(b).ok_or(RuntimeError::Overflow)?),
            Mul => Value::Int(a.checked_mul(b).ok_or(RuntimeError::Overflow)?),
            Div | Rem => {
                if b == 0 {
                    return Err(RuntimeError::DivisionByZero);
                }
                let v = if op == Div {
                    a.checked_div(b)
                } else {
                    a.checked_rem(b)
                };
                Value::Int(v.ok_or(RuntimeError::Overflow)?)
            }
            Lt => Value::Bool(a < b),
            Le => Value::Bool(a <= b),
            Gt => Value::Bool(a > b),
            Ge => Value::Bool(a >= b),
            Eq => Value::Bool(a == b),
            Ne => Value::Bool(a != b),
            And | Or => unreachable!(),
        };
        return Ok(v);
    }
    let (a, b) = (l.as_f64(), r.as_f64());
    Ok(match op {
        Add => Value::Float(a + b),
        Sub => Value::Float(a - b),
        Mul => Value::Float(a * b),
        Div | Rem => {
            if b == 0.0 {
                return Err(RuntimeError::DivisionByZero);
            }
            Value::Float(if op == Div { a / b } else { a % b })
        }
        Lt => Value::Bool(a < b),
        Le => Value::Bool(a <= b),
        Gt => Value::Bool(a > b),
        Ge => Value::Bool(a >= b),
        Eq => Value::Bool(a == b),
        Ne => Value::Bool(a != b),
        And | Or => unreachable!(),
    })
}
