//! Recursive-descent parser for the kernel mini-IR.
//!
//! Name resolution, type checking and definite-assignment analysis happen
//! while parsing, so every error carries the position of the offending token.

use std::collections::{BTreeSet, HashMap, HashSet};

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::{ParseError, ParseErrorKind, Pos};

const KEYWORDS: &[&str] = &[
    "kernel", "shared", "global", "int", "float", "fixed", "array", "sync", "if", "else",
    "while", "return", "true", "false",
];

/// Parses and validates a kernel.
pub fn parse_kernel(src: &str) -> Result<KernelProgram, ParseError> {
    let toks = tokenize(src)?;
    let mut p = Parser {
        toks,
        at: 0,
        params: Vec::new(),
        arrays: Vec::new(),
        locals: Vec::new(),
        local_slots: HashMap::new(),
        barriers: BTreeSet::new(),
        next_id: 1,
        defs: Defs::default(),
        in_size_expr: false,
    };
    p.kernel()
}

/// Locals definitely assigned on every path reaching the current point.
#[derive(Debug, Clone, Default)]
struct Defs {
    assigned: HashSet<usize>,
    unreachable: bool,
}

impl Defs {
    fn join(a: Defs, b: Defs) -> Defs {
        match (a.unreachable, b.unreachable) {
            (true, _) => b,
            (_, true) => a,
            _ => Defs {
                assigned: a.assigned.intersection(&b.assigned).copied().collect(),
                unreachable: false,
            },
        }
    }
}

struct Parser {
    toks: Vec<Token>,
    at: usize,
    params: Vec<Param>,
    arrays: Vec<ArrayDecl>,
    locals: Vec<LocalDecl>,
    local_slots: HashMap<String, usize>,
    barriers: BTreeSet<String>,
    next_id: u32,
    defs: Defs,
    in_size_expr: bool,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.at + n).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].pos
    }

    fn advance(&mut self) -> Token {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn err<T>(&self, pos: Pos, kind: ParseErrorKind) -> PResult<T> {
        Err(ParseError::new(pos, kind))
    }

    fn syntax<T>(&self, msg: impl Into<String>) -> PResult<T> {
        self.err(self.pos(), ParseErrorKind::Syntax(msg.into()))
    }

    fn expect(&mut self, want: Tok) -> PResult<()> {
        if *self.peek() == want {
            self.advance();
            Ok(())
        } else {
            self.syntax(format!(
                "expected {}, found {}",
                want.describe(),
                self.peek().describe()
            ))
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.is_keyword(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> PResult<()> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            self.syntax(format!("expected `{kw}`, found {}", self.peek().describe()))
        }
    }

    /// A user-chosen name: not a keyword and not a builtin.
    fn name(&mut self) -> PResult<(String, Pos)> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Ident(s) if KEYWORDS.contains(&s.as_str()) => {
                self.syntax(format!("keyword `{s}` cannot be used as a name"))
            }
            Tok::Ident(s) if BuiltinKind::from_name(&s).is_some() => {
                self.syntax(format!("builtin `{s}` cannot be used as a name"))
            }
            Tok::Ident(s) => {
                self.advance();
                Ok((s, pos))
            }
            other => self.syntax(format!("expected a name, found {}", other.describe())),
        }
    }

    /// `;` ends a simple statement; it may be left out right before `}`.
    fn terminator(&mut self) -> PResult<()> {
        match self.peek() {
            Tok::Semi => {
                self.advance();
                Ok(())
            }
            Tok::RBrace => Ok(()),
            other => self.syntax(format!("expected `;`, found {}", other.describe())),
        }
    }

    fn name_taken(&self, name: &str) -> bool {
        self.params.iter().any(|p| p.name == name)
            || self.arrays.iter().any(|a| a.name == name)
            || self.local_slots.contains_key(name)
    }

    fn kernel(&mut self) -> PResult<KernelProgram> {
        self.expect_keyword("kernel")?;
        let (name, _) = self.name()?;
        self.expect(Tok::LParen)?;
        let mut handles = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                let (param, pos) = self.param()?;
                if self.name_taken(&param.name) {
                    return self.err(pos, ParseErrorKind::DuplicateName(param.name));
                }
                if param.kind == ParamKind::ArrayHandle {
                    handles.push((param.name.clone(), pos));
                }
                self.params.push(param);
                if *self.peek() == Tok::Comma {
                    self.advance();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        self.expect(Tok::LBrace)?;
        while self.is_keyword("shared") || self.is_keyword("global") {
            self.array_decl()?;
        }
        for (h, pos) in handles {
            match self.arrays.iter().find(|a| a.name == h) {
                Some(a) if a.space == MemorySpace::Global => {}
                _ => {
                    return self.err(
                        pos,
                        ParseErrorKind::UndeclaredArray(format!(
                            "{h} (array parameter needs a matching `global` declaration)"
                        )),
                    )
                }
            }
        }
        let body = self.block_body()?;
        self.expect(Tok::RBrace)?;
        if *self.peek() != Tok::Eof {
            return self.syntax(format!(
                "unexpected {} after kernel body",
                self.peek().describe()
            ));
        }
        Ok(KernelProgram {
            name,
            params: std::mem::take(&mut self.params),
            arrays: std::mem::take(&mut self.arrays),
            locals: std::mem::take(&mut self.locals),
            body,
            barrier_ids: std::mem::take(&mut self.barriers),
        })
    }

    fn param(&mut self) -> PResult<(Param, Pos)> {
        let pos = self.pos();
        if self.eat_keyword("array") {
            let (name, _) = self.name()?;
            return Ok((
                Param {
                    name,
                    kind: ParamKind::ArrayHandle,
                },
                pos,
            ));
        }
        let mutable = !self.eat_keyword("fixed");
        let ty = self.scalar_type()?;
        let (name, name_pos) = self.name()?;
        let default = if *self.peek() == Tok::Assign {
            self.advance();
            let neg = if *self.peek() == Tok::Minus {
                self.advance();
                true
            } else {
                false
            };
            let v = match self.advance().tok {
                Tok::Int(v) => v as f64,
                Tok::Float(v) => v,
                other => {
                    return self.syntax(format!(
                        "expected a numeric default, found {}",
                        other.describe()
                    ))
                }
            };
            Some(if neg { -v } else { v })
        } else {
            None
        };
        Ok((
            Param {
                name,
                kind: ParamKind::Scalar {
                    ty,
                    mutable,
                    default,
                },
            },
            name_pos,
        ))
    }

    fn scalar_type(&mut self) -> PResult<ScalarType> {
        if self.eat_keyword("int") {
            Ok(ScalarType::Int)
        } else if self.eat_keyword("float") {
            Ok(ScalarType::Float)
        } else {
            self.syntax(format!(
                "expected `int` or `float`, found {}",
                self.peek().describe()
            ))
        }
    }

    fn array_decl(&mut self) -> PResult<()> {
        let space = if self.eat_keyword("shared") {
            MemorySpace::Shared
        } else {
            self.expect_keyword("global")?;
            MemorySpace::Global
        };
        let elem = if self.is_keyword("int") || self.is_keyword("float") {
            self.scalar_type()?
        } else {
            ScalarType::Float
        };
        let (name, pos) = self.name()?;
        let is_handle = self
            .params
            .iter()
            .any(|p| p.name == name && p.kind == ParamKind::ArrayHandle);
        let redeclared = self.arrays.iter().any(|a| a.name == name);
        if redeclared || (!is_handle && self.name_taken(&name)) {
            return self.err(pos, ParseErrorKind::DuplicateName(name));
        }
        self.expect(Tok::LBracket)?;
        let size_pos = self.pos();
        self.in_size_expr = true;
        let size = self.expr();
        self.in_size_expr = false;
        let (size, ty) = size?;
        if ty != Type::Int {
            return self.err(
                size_pos,
                ParseErrorKind::Type(format!("size of `{name}` must be int, found {ty}")),
            );
        }
        self.expect(Tok::RBracket)?;
        self.terminator()?;
        self.arrays.push(ArrayDecl {
            name,
            space,
            elem,
            size,
        });
        Ok(())
    }

    fn block_body(&mut self) -> PResult<Vec<Stmt>> {
        let mut out = Vec::new();
        while *self.peek() != Tok::RBrace {
            if *self.peek() == Tok::Eof {
                return self.syntax("unexpected end of input, missing `}`");
            }
            out.push(self.stmt()?);
        }
        Ok(out)
    }

    fn braced(&mut self) -> PResult<Vec<Stmt>> {
        self.expect(Tok::LBrace)?;
        let body = self.block_body()?;
        self.expect(Tok::RBrace)?;
        Ok(body)
    }

    fn fresh_id(&mut self) -> StmtId {
        let id = StmtId(self.next_id);
        self.next_id += 1;
        id
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let pos = self.pos();
        if self.eat_keyword("sync") {
            let id = self.fresh_id();
            let barrier = match self.advance().tok {
                Tok::Ident(s) => s,
                Tok::Int(v) => v.to_string(),
                other => {
                    return self.syntax(format!(
                        "expected a barrier id, found {}",
                        other.describe()
                    ))
                }
            };
            if !self.barriers.insert(barrier.clone()) {
                return self.err(pos, ParseErrorKind::DuplicateBarrier(barrier));
            }
            self.terminator()?;
            return Ok(Stmt {
                id,
                kind: StmtKind::Sync { barrier },
            });
        }
        if self.eat_keyword("return") {
            let id = self.fresh_id();
            self.terminator()?;
            self.defs.unreachable = true;
            return Ok(Stmt {
                id,
                kind: StmtKind::Return,
            });
        }
        if self.eat_keyword("if") {
            return self.if_rest();
        }
        if self.eat_keyword("while") {
            let id = self.fresh_id();
            self.expect(Tok::LParen)?;
            let cond = self.condition()?;
            self.expect(Tok::RParen)?;
            let before = self.defs.clone();
            let body = self.braced()?;
            self.defs = before;
            return Ok(Stmt {
                id,
                kind: StmtKind::While { cond, body },
            });
        }
        let Tok::Ident(first) = self.peek().clone() else {
            return self.syntax(format!(
                "expected a statement, found {}",
                self.peek().describe()
            ));
        };
        if KEYWORDS.contains(&first.as_str()) {
            return self.syntax(format!("unexpected keyword `{first}`"));
        }
        if *self.peek_at(1) == Tok::LBracket {
            // arr[index] = value;
            let id = self.fresh_id();
            self.advance();
            let array = self.array_ref(&first, pos)?;
            self.expect(Tok::LBracket)?;
            let index = self.index_expr()?;
            self.expect(Tok::RBracket)?;
            self.expect(Tok::Assign)?;
            let value_pos = self.pos();
            let (value, vty) = self.expr()?;
            let elem = self.arrays[array.index].elem;
            let ok = match elem {
                ScalarType::Float => vty.is_numeric(),
                ScalarType::Int => vty == Type::Int,
            };
            if !ok {
                return self.err(
                    value_pos,
                    ParseErrorKind::Type(format!(
                        "cannot store {vty} into {elem} array `{}`",
                        array.name
                    )),
                );
            }
            self.terminator()?;
            return Ok(Stmt {
                id,
                kind: StmtKind::Store {
                    array,
                    index,
                    value,
                },
            });
        }
        // local = expr;  or  local = arr[index];
        let id = self.fresh_id();
        let (target_name, target_pos) = self.name()?;
        self.expect(Tok::Assign)?;
        let is_load = matches!(self.peek(), Tok::Ident(s) if self.arrays.iter().any(|a| &a.name == s))
            && *self.peek_at(1) == Tok::LBracket;
        if is_load {
            let arr_pos = self.pos();
            let Tok::Ident(arr_name) = self.advance().tok else {
                unreachable!()
            };
            let array = self.array_ref(&arr_name, arr_pos)?;
            self.expect(Tok::LBracket)?;
            let index = self.index_expr()?;
            self.expect(Tok::RBracket)?;
            let elem = self.arrays[array.index].elem;
            let target = self.bind_local(&target_name, target_pos, elem.into())?;
            self.terminator()?;
            return Ok(Stmt {
                id,
                kind: StmtKind::Load {
                    target,
                    array,
                    index,
                },
            });
        }
        let (value, vty) = self.expr()?;
        let target = self.bind_local(&target_name, target_pos, vty)?;
        self.terminator()?;
        Ok(Stmt {
            id,
            kind: StmtKind::Assign { target, value },
        })
    }

    fn if_rest(&mut self) -> PResult<Stmt> {
        let id = self.fresh_id();
        self.expect(Tok::LParen)?;
        let cond = self.condition()?;
        self.expect(Tok::RParen)?;
        let before = self.defs.clone();
        let then_body = self.braced()?;
        let after_then = std::mem::replace(&mut self.defs, before);
        let else_body = if self.eat_keyword("else") {
            if self.eat_keyword("if") {
                vec![self.if_rest()?]
            } else {
                self.braced()?
            }
        } else {
            Vec::new()
        };
        let after_else = std::mem::take(&mut self.defs);
        self.defs = Defs::join(after_then, after_else);
        Ok(Stmt {
            id,
            kind: StmtKind::If {
                cond,
                then_body,
                else_body,
            },
        })
    }

    fn array_ref(&self, name: &str, pos: Pos) -> PResult<ArrayRef> {
        match self.arrays.iter().position(|a| a.name == name) {
            Some(index) => Ok(ArrayRef {
                name: name.to_string(),
                index,
            }),
            None => self.err(pos, ParseErrorKind::UndeclaredArray(name.to_string())),
        }
    }

    /// Declares the local on first assignment and records it as assigned.
    fn bind_local(&mut self, name: &str, pos: Pos, value_ty: Type) -> PResult<LocalRef> {
        let slot = match self.local_slots.get(name) {
            Some(&slot) => {
                let ty = self.locals[slot].ty;
                let ok = ty == value_ty || (ty == Type::Float && value_ty == Type::Int);
                if !ok {
                    return self.err(
                        pos,
                        ParseErrorKind::Type(format!(
                            "cannot assign {value_ty} to local `{name}` of type {ty}"
                        )),
                    );
                }
                slot
            }
            None => {
                if self.name_taken(name) {
                    return self.err(pos, ParseErrorKind::DuplicateName(name.to_string()));
                }
                let slot = self.locals.len();
                self.locals.push(LocalDecl {
                    name: name.to_string(),
                    ty: value_ty,
                });
                self.local_slots.insert(name.to_string(), slot);
                slot
            }
        };
        self.defs.assigned.insert(slot);
        Ok(LocalRef {
            name: name.to_string(),
            slot,
        })
    }

    fn condition(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        let (e, ty) = self.expr()?;
        if ty != Type::Bool {
            return self.err(
                pos,
                ParseErrorKind::Type(format!("condition must be bool, found {ty}")),
            );
        }
        Ok(e)
    }

    fn index_expr(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        let (e, ty) = self.expr()?;
        if ty != Type::Int {
            return self.err(
                pos,
                ParseErrorKind::Type(format!("array index must be int, found {ty}")),
            );
        }
        Ok(e)
    }

    fn expr(&mut self) -> PResult<(Expr, Type)> {
        self.binary(0)
    }

    fn binary(&mut self, min_level: u8) -> PResult<(Expr, Type)> {
        let (mut lhs, mut lty) = self.unary()?;
        while let Some((op, level)) = binop(self.peek()) {
            if level < min_level {
                break;
            }
            let pos = self.pos();
            self.advance();
            let (rhs, rty) = self.binary(level + 1)?;
            let ty = binary_type(op, lty, rty).ok_or_else(|| {
                ParseError::new(
                    pos,
                    ParseErrorKind::Type(format!(
                        "operator `{}` cannot combine {lty} and {rty}",
                        op.symbol()
                    )),
                )
            })?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
            lty = ty;
        }
        Ok((lhs, lty))
    }

    fn unary(&mut self) -> PResult<(Expr, Type)> {
        let pos = self.pos();
        match self.peek() {
            Tok::Minus => {
                self.advance();
                // `-<literal>` is a negative literal; anything else is negation
                match *self.peek() {
                    Tok::Int(v) => {
                        self.advance();
                        let v = i64::try_from(-(v as i128)).map_err(|_| {
                            ParseError::new(pos, ParseErrorKind::Syntax("integer out of range".into()))
                        })?;
                        return Ok((Expr::Int(v), Type::Int));
                    }
                    Tok::Float(v) => {
                        self.advance();
                        return Ok((Expr::Float(-v), Type::Float));
                    }
                    _ => {}
                }
                let (e, ty) = self.unary()?;
                if !ty.is_numeric() {
                    return self.err(
                        pos,
                        ParseErrorKind::Type(format!("cannot negate {ty}")),
                    );
                }
                Ok((Expr::Unary(UnaryOp::Neg, Box::new(e)), ty))
            }
            Tok::Bang => {
                self.advance();
                let (e, ty) = self.unary()?;
                if ty != Type::Bool {
                    return self.err(
                        pos,
                        ParseErrorKind::Type(format!("`!` needs bool, found {ty}")),
                    );
                }
                Ok((Expr::Unary(UnaryOp::Not, Box::new(e)), Type::Bool))
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> PResult<(Expr, Type)> {
        let pos = self.pos();
        match self.advance().tok {
            Tok::Int(v) => {
                let v = i64::try_from(v).map_err(|_| {
                    ParseError::new(pos, ParseErrorKind::Syntax("integer out of range".into()))
                })?;
                Ok((Expr::Int(v), Type::Int))
            }
            Tok::Float(v) => Ok((Expr::Float(v), Type::Float)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(s) => self.ident_expr(s, pos),
            other => self.err(
                pos,
                ParseErrorKind::Syntax(format!("expected an expression, found {}", other.describe())),
            ),
        }
    }

    fn ident_expr(&mut self, s: String, pos: Pos) -> PResult<(Expr, Type)> {
        match s.as_str() {
            "true" => return Ok((Expr::Bool(true), Type::Bool)),
            "false" => return Ok((Expr::Bool(false), Type::Bool)),
            "int" | "float" => {
                let ty = if s == "int" {
                    ScalarType::Int
                } else {
                    ScalarType::Float
                };
                self.expect(Tok::LParen)?;
                let (e, ety) = self.expr()?;
                self.expect(Tok::RParen)?;
                if !ety.is_numeric() {
                    return self.err(
                        pos,
                        ParseErrorKind::Type(format!("cannot cast {ety} to {ty}")),
                    );
                }
                return Ok((Expr::Cast(ty, Box::new(e)), ty.into()));
            }
            _ => {}
        }
        if let Some(kind) = BuiltinKind::from_name(&s) {
            self.expect(Tok::Dot)?;
            let axis_pos = self.pos();
            let axis = match self.advance().tok {
                Tok::Ident(a) if a == "x" => Axis::X,
                Tok::Ident(a) if a == "y" => Axis::Y,
                Tok::Ident(a) if a == "z" => Axis::Z,
                other => {
                    return self.err(
                        axis_pos,
                        ParseErrorKind::Syntax(format!(
                            "expected axis x, y or z, found {}",
                            other.describe()
                        )),
                    )
                }
            };
            if self.in_size_expr && kind.is_positional() {
                return self.err(
                    pos,
                    ParseErrorKind::InvalidSizeExpr(format!(
                        "`{}` varies per thread",
                        kind.name()
                    )),
                );
            }
            return Ok((Expr::Builtin(Builtin { kind, axis }), Type::Int));
        }
        if KEYWORDS.contains(&s.as_str()) {
            return self.err(
                pos,
                ParseErrorKind::Syntax(format!("unexpected keyword `{s}`")),
            );
        }
        if let Some(&slot) = self.local_slots.get(&s) {
            if self.in_size_expr {
                return self.err(
                    pos,
                    ParseErrorKind::InvalidSizeExpr(format!("local `{s}` in array size")),
                );
            }
            if !self.defs.unreachable && !self.defs.assigned.contains(&slot) {
                return self.err(pos, ParseErrorKind::UnassignedLocal(s));
            }
            let ty = self.locals[slot].ty;
            return Ok((Expr::Local(LocalRef { name: s, slot }), ty));
        }
        if let Some(index) = self.params.iter().position(|p| p.name == s) {
            return match self.params[index].scalar_type() {
                Some(ty) => Ok((Expr::Param(ParamRef { name: s, index }), ty.into())),
                None => self.err(
                    pos,
                    ParseErrorKind::Type(format!("array parameter `{s}` used as a value")),
                ),
            };
        }
        if self.arrays.iter().any(|a| a.name == s) {
            return self.err(
                pos,
                ParseErrorKind::Type(format!(
                    "array `{s}` used as a value; load it into a local first"
                )),
            );
        }
        self.err(pos, ParseErrorKind::UndeclaredIdentifier(s))
    }
}

fn binop(t: &Tok) -> Option<(BinaryOp, u8)> {
    Some(match t {
        Tok::OrOr => (BinaryOp::Or, 0),
        Tok::AndAnd => (BinaryOp::And, 1),
        Tok::EqEq => (BinaryOp::Eq, 2),
        Tok::Ne => (BinaryOp::Ne, 2),
        Tok::Lt => (BinaryOp::Lt, 3),
        Tok::Le => (BinaryOp::Le, 3),
        Tok::Gt => (BinaryOp::Gt, 3),
        Tok::Ge => (BinaryOp::Ge, 3),
        Tok::Plus => (BinaryOp::Add, 4),
        Tok::Minus => (BinaryOp::Sub, 4),
        Tok::Star => (BinaryOp::Mul, 5),
        Tok::Slash => (BinaryOp::Div, 5),
        Tok::Percent => (BinaryOp::Rem, 5),
        _ => return None,
    })
}

/// Result type of a binary operator, or `None` on a type error.
pub(crate) fn binary_type(op: BinaryOp, l: Type, r: Type) -> Option<Type> {
    if op.is_arithmetic() {
        if !l.is_numeric() || !r.is_numeric() {
            return None;
        }
        Some(if l == Type::Float || r == Type::Float {
            Type::Float
        } else {
            Type::Int
        })
    } else if op.is_logical() {
        (l == Type::Bool && r == Type::Bool).then_some(Type::Bool)
    } else if matches!(op, BinaryOp::Eq | BinaryOp::Ne) {
        ((l.is_numeric() && r.is_numeric()) || (l == Type::Bool && r == Type::Bool))
            .then_some(Type::Bool)
    } else {
        (l.is_numeric() && r.is_numeric()).then_some(Type::Bool)
    }
}
