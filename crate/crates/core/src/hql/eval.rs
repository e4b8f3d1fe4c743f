//! Predicates compiled against a column layout, evaluated over (pre, post)
//! rows of domain levels.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::hql::ast::{ArithOp, CmpOp, Expr, Pred, Side};
use crate::value::{same_point, Domain, Value};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum V<'a> {
    N(f64),
    S(&'a str),
}

impl V<'_> {
    fn cmp(self, other: V<'_>) -> Option<Ordering> {
        match (self, other) {
            (V::N(a), V::N(b)) => Some(if same_point(a, b) { Ordering::Equal } else { a.total_cmp(&b) }),
            (V::S(a), V::S(b)) => Some(a.cmp(b)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CExpr {
    Num(f64),
    Str(String),
    Col { side: Side, col: usize },
    Neg(Box<CExpr>),
    Bin { op: ArithOp, l: Box<CExpr>, r: Box<CExpr> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum CPred {
    Cmp { l: CExpr, op: CmpOp, r: CExpr },
    In { e: CExpr, values: Vec<Value>, negated: bool },
    Not(Box<CPred>),
    And(Vec<CPred>),
    Or(Vec<CPred>),
    Const(bool),
}

/// Column names and domains a predicate is compiled against.
#[derive(Debug, Clone, Copy)]
pub struct Layout<'a> {
    pub names: &'a [String],
    pub domains: &'a [Domain],
}

impl Layout<'_> {
    fn col(&self, name: &str) -> Result<usize> {
        self.names.iter().position(|n| n == name).ok_or_else(|| Error::UnknownAttribute(name.to_string()))
    }
}

pub fn compile_expr(e: &Expr, layout: Layout<'_>) -> Result<CExpr> {
    Ok(match e {
        Expr::Num(x) => CExpr::Num(*x),
        Expr::Str(s) => CExpr::Str(s.clone()),
        Expr::Attr { side, name } => CExpr::Col { side: *side, col: layout.col(name)? },
        Expr::Neg(x) => CExpr::Neg(Box::new(compile_expr(x, layout)?)),
        Expr::Bin { op, l, r } => CExpr::Bin {
            op: *op,
            l: Box::new(compile_expr(l, layout)?),
            r: Box::new(compile_expr(r, layout)?),
        },
    })
}

pub fn compile(p: &Pred, layout: Layout<'_>) -> Result<CPred> {
    Ok(match p {
        Pred::Cmp { l, op, r } => CPred::Cmp { l: compile_expr(l, layout)?, op: *op, r: compile_expr(r, layout)? },
        Pred::In { e, values, negated } => {
            CPred::In { e: compile_expr(e, layout)?, values: values.clone(), negated: *negated }
        }
        Pred::Not(x) => CPred::Not(Box::new(compile(x, layout)?)),
        Pred::And(ps) => CPred::And(ps.iter().map(|x| compile(x, layout)).collect::<Result<_>>()?),
        Pred::Or(ps) => CPred::Or(ps.iter().map(|x| compile(x, layout)).collect::<Result<_>>()?),
        Pred::Const(b) => CPred::Const(*b),
    })
}

/// A (pre, post) pair of rows given as level vectors over one layout.
#[derive(Clone, Copy)]
pub struct RowPair<'a> {
    pub pre: &'a [u32],
    pub post: &'a [u32],
    pub domains: &'a [Domain],
}

impl CExpr {
    pub fn eval<'a>(&'a self, rows: &RowPair<'a>) -> Option<V<'a>> {
        match self {
            CExpr::Num(x) => Some(V::N(*x)),
            CExpr::Str(s) => Some(V::S(s)),
            CExpr::Col { side, col } => {
                let lvl = match side {
                    Side::Pre => rows.pre[*col],
                    Side::Post => rows.post[*col],
                } as usize;
                Some(match &rows.domains[*col] {
                    Domain::Numeric(p) => V::N(p[lvl]),
                    Domain::Categorical(v) => V::S(&v[lvl]),
                })
            }
            CExpr::Neg(x) => match x.eval(rows)? {
                V::N(a) => Some(V::N(-a)),
                V::S(_) => None,
            },
            CExpr::Bin { op, l, r } => match (l.eval(rows)?, r.eval(rows)?) {
                (V::N(a), V::N(b)) => Some(V::N(match op {
                    ArithOp::Add => a + b,
                    ArithOp::Sub => a - b,
                    ArithOp::Mul => a * b,
                    ArithOp::Div => a / b,
                })),
                _ => None,
            },
        }
    }
}

impl CPred {
    pub fn eval(&self, rows: &RowPair<'_>) -> bool {
        match self {
            CPred::Cmp { l, op, r } => match (l.eval(rows), r.eval(rows)) {
                (Some(a), Some(b)) => a.cmp(b).is_some_and(|o| op.holds(o)),
                _ => false,
            },
            CPred::In { e, values, negated } => {
                let Some(v) = e.eval(rows) else { return false };
                let hit = values.iter().any(|x| {
                    let xv = match x {
                        Value::Num(n) => V::N(*n),
                        Value::Str(s) => V::S(s),
                    };
                    v.cmp(xv) == Some(Ordering::Equal)
                });
                hit != *negated
            }
            CPred::Not(x) => !x.eval(rows),
            CPred::And(ps) => ps.iter().all(|p| p.eval(rows)),
            CPred::Or(ps) => ps.iter().any(|p| p.eval(rows)),
            CPred::Const(b) => *b,
        }
    }
}

impl CExpr {
    fn collect_cols(&self, side: Option<Side>, out: &mut std::collections::BTreeSet<usize>) {
        match self {
            CExpr::Col { side: s, col } => {
                if side.is_none_or(|x| x == *s) {
                    out.insert(*col);
                }
            }
            CExpr::Neg(x) => x.collect_cols(side, out),
            CExpr::Bin { l, r, .. } => {
                l.collect_cols(side, out);
                r.collect_cols(side, out);
            }
            CExpr::Num(_) | CExpr::Str(_) => {}
        }
    }
}

impl CPred {
    /// Columns read on `side` (both sides when `None`).
    pub fn cols(&self, side: Option<Side>) -> std::collections::BTreeSet<usize> {
        let mut out = std::collections::BTreeSet::new();
        self.collect_cols(side, &mut out);
        out
    }

    fn collect_cols(&self, side: Option<Side>, out: &mut std::collections::BTreeSet<usize>) {
        match self {
            CPred::Cmp { l, r, .. } => {
                l.collect_cols(side, out);
                r.collect_cols(side, out);
            }
            CPred::In { e, .. } => e.collect_cols(side, out),
            CPred::Not(x) => x.collect_cols(side, out),
            CPred::And(ps) | CPred::Or(ps) => ps.iter().for_each(|p| p.collect_cols(side, out)),
            CPred::Const(_) => {}
        }
    }
}
