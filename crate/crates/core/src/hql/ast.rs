use std::collections::BTreeSet;

use serde::Serialize;

use crate::agg::Aggregate;
use crate::datamodel::UpdateFn;
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Side {
    Pre,
    Post,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Expr {
    Num(f64),
    Str(String),
    Attr { side: Side, name: String },
    Neg(Box<Expr>),
    Bin { op: ArithOp, l: Box<Expr>, r: Box<Expr> },
}

impl Expr {
    pub fn pre(name: &str) -> Expr {
        Expr::Attr { side: Side::Pre, name: name.to_string() }
    }

    pub fn post(name: &str) -> Expr {
        Expr::Attr { side: Side::Post, name: name.to_string() }
    }

    pub fn attrs(&self, out: &mut BTreeSet<(Side, String)>) {
        match self {
            Expr::Attr { side, name } => {
                out.insert((*side, name.clone()));
            }
            Expr::Neg(e) => e.attrs(out),
            Expr::Bin { l, r, .. } => {
                l.attrs(out);
                r.attrs(out);
            }
            Expr::Num(_) | Expr::Str(_) => {}
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn negate(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ne => CmpOp::Eq,
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Ge => CmpOp::Lt,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "<>",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Eq => ord == Equal,
            CmpOp::Ne => ord != Equal,
            CmpOp::Lt => ord == Less,
            CmpOp::Le => ord != Greater,
            CmpOp::Gt => ord == Greater,
            CmpOp::Ge => ord != Less,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Pred {
    Cmp { l: Expr, op: CmpOp, r: Expr },
    In { e: Expr, values: Vec<Value>, negated: bool },
    Not(Box<Pred>),
    And(Vec<Pred>),
    Or(Vec<Pred>),
    /// Constant truth value; produced by normalization, rendered as `1 = 1` / `1 = 0`.
    Const(bool),
}

impl Pred {
    pub fn attrs(&self) -> BTreeSet<(Side, String)> {
        let mut out = BTreeSet::new();
        self.collect_attrs(&mut out);
        out
    }

    fn collect_attrs(&self, out: &mut BTreeSet<(Side, String)>) {
        match self {
            Pred::Cmp { l, r, .. } => {
                l.attrs(out);
                r.attrs(out);
            }
            Pred::In { e, .. } => e.attrs(out),
            Pred::Not(p) => p.collect_attrs(out),
            Pred::And(ps) | Pred::Or(ps) => ps.iter().for_each(|p| p.collect_attrs(out)),
            Pred::Const(_) => {}
        }
    }

    pub fn attr_names(&self, side: Side) -> BTreeSet<String> {
        self.attrs().into_iter().filter(|(s, _)| *s == side).map(|(_, n)| n).collect()
    }

    pub fn and(parts: Vec<Pred>) -> Pred {
        let mut flat = Vec::new();
        for p in parts {
            match p {
                Pred::Const(true) => {}
                Pred::Const(false) => return Pred::Const(false),
                Pred::And(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => Pred::Const(true),
            1 => flat.pop().unwrap(),
            _ => Pred::And(flat),
        }
    }

    pub fn or(parts: Vec<Pred>) -> Pred {
        let mut flat = Vec::new();
        for p in parts {
            match p {
                Pred::Const(false) => {}
                Pred::Const(true) => return Pred::Const(true),
                Pred::Or(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => Pred::Const(false),
            1 => flat.pop().unwrap(),
            _ => Pred::Or(flat),
        }
    }

    pub fn negate(p: Pred) -> Pred {
        match p {
            Pred::Const(b) => Pred::Const(!b),
            Pred::Not(inner) => *inner,
            other => Pred::Not(Box::new(other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColRef {
    pub qualifier: Option<String>,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SelectItem {
    Col { col: ColRef, alias: Option<String> },
    /// `col = None` stands for `COUNT(*)`.
    Agg { agg: Aggregate, col: Option<ColRef>, alias: Option<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FromItem {
    pub relation: String,
    pub alias: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Select {
    pub items: Vec<SelectItem>,
    pub from: Vec<FromItem>,
    pub joins: Vec<(ColRef, ColRef)>,
    pub group_by: Vec<ColRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum UseSpec {
    Relation(String),
    View { name: Option<String>, select: Select },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpdateClause {
    pub attr: String,
    pub func: UpdateFn,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum OutputTarget {
    Star,
    Attr(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Output {
    pub agg: Aggregate,
    pub target: OutputTarget,
}

impl Output {
    pub fn attr(&self) -> Option<&str> {
        match &self.target {
            OutputTarget::Star => None,
            OutputTarget::Attr(a) => Some(a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WhatIfQuery {
    pub use_spec: UseSpec,
    pub when: Option<Pred>,
    pub updates: Vec<UpdateClause>,
    pub output: Output,
    pub for_pred: Option<Pred>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Limit {
    /// `lo <= POST(attr) <= hi`, either bound optional.
    Range { attr: String, lo: Option<f64>, hi: Option<f64> },
    /// `POST(attr) IN (...)`.
    In { attr: String, values: Vec<Value> },
    /// `L1(PRE(a),POST(a)) [+ L1(PRE(b),POST(b)) ...] <= budget`.
    L1 { attrs: Vec<String>, budget: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Objective {
    pub sense: Sense,
    pub output: Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Bound {
    AtLeast,
    AtMost,
}

/// `TOMINIMIZE COST SUCH THAT agg(POST(Y)) >= v`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostGoal {
    pub output: Output,
    pub bound: Bound,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Goal {
    /// One or more objectives in preference order (`THEN`).
    Optimize(Vec<Objective>),
    MinCost(CostGoal),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HowToQuery {
    pub use_spec: UseSpec,
    pub when: Option<Pred>,
    pub attrs: Vec<String>,
    pub limits: Vec<Limit>,
    pub goal: Goal,
    pub for_pred: Option<Pred>,
}

impl HowToQuery {
    /// The candidate what-if query for a concrete set of updates.
    pub fn candidate(&self, updates: Vec<UpdateClause>, output: Output) -> WhatIfQuery {
        WhatIfQuery {
            use_spec: self.use_spec.clone(),
            when: self.when.clone(),
            updates,
            output,
            for_pred: self.for_pred.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Query {
    WhatIf(WhatIfQuery),
    HowTo(HowToQuery),
}
