//! Canonical text rendering of query ASTs; `parse(render(q)) == q`.

use std::fmt::Write;

use crate::datamodel::{UpdateFn, UpdateKind};
use crate::hql::ast::*;
use crate::value::Value;

pub fn render_query(q: &Query) -> String {
    match q {
        Query::WhatIf(w) => render_whatif(w),
        Query::HowTo(h) => render_howto(h),
    }
}

pub fn render_whatif(q: &WhatIfQuery) -> String {
    let mut s = render_head(&q.use_spec, &q.when);
    let ups: Vec<String> = q.updates.iter().map(render_update).collect();
    let _ = write!(s, "\n{}", ups.join(" AND "));
    let _ = write!(s, "\nOUTPUT {}", render_output(&q.output));
    if let Some(p) = &q.for_pred {
        let _ = write!(s, "\nFOR {}", render_pred(p));
    }
    s
}

pub fn render_howto(q: &HowToQuery) -> String {
    let mut s = render_head(&q.use_spec, &q.when);
    let _ = write!(s, "\nHOWTOUPDATE {}", q.attrs.join(", "));
    if !q.limits.is_empty() {
        let ls: Vec<String> = q.limits.iter().map(render_limit).collect();
        let _ = write!(s, "\nLIMIT {}", ls.join(" AND "));
    }
    match &q.goal {
        Goal::Optimize(objs) => {
            let os: Vec<String> = objs
                .iter()
                .map(|o| {
                    let kw = match o.sense {
                        Sense::Maximize => "TOMAXIMIZE",
                        Sense::Minimize => "TOMINIMIZE",
                    };
                    format!("{kw} {}", render_output(&o.output))
                })
                .collect();
            let _ = write!(s, "\n{}", os.join(" THEN "));
        }
        Goal::MinCost(c) => {
            let op = match c.bound {
                Bound::AtLeast => ">=",
                Bound::AtMost => "<=",
            };
            let _ = write!(s, "\nTOMINIMIZE COST SUCH THAT {} {op} {}", render_output(&c.output), num(c.threshold));
        }
    }
    if let Some(p) = &q.for_pred {
        let _ = write!(s, "\nFOR {}", render_pred(p));
    }
    s
}

fn render_head(u: &UseSpec, when: &Option<Pred>) -> String {
    let mut s = format!("USE {}", render_use(u));
    if let Some(p) = when {
        let _ = write!(s, "\nWHEN {}", render_pred(p));
    }
    s
}

pub fn render_use(u: &UseSpec) -> String {
    match u {
        UseSpec::Relation(r) => r.clone(),
        UseSpec::View { name: Some(n), select } => format!("{n} AS ({})", render_select(select)),
        UseSpec::View { name: None, select } => format!("({})", render_select(select)),
    }
}

fn colref(c: &ColRef) -> String {
    match &c.qualifier {
        Some(q) => format!("{q}.{}", c.name),
        None => c.name.clone(),
    }
}

fn render_select(s: &Select) -> String {
    let items: Vec<String> = s
        .items
        .iter()
        .map(|i| match i {
            SelectItem::Col { col, alias } => match alias {
                Some(a) => format!("{} AS {a}", colref(col)),
                None => colref(col),
            },
            SelectItem::Agg { agg, col, alias } => {
                let inner = col.as_ref().map(colref).unwrap_or_else(|| "*".into());
                match alias {
                    Some(a) => format!("{agg}({inner}) AS {a}"),
                    None => format!("{agg}({inner})"),
                }
            }
        })
        .collect();
    let from: Vec<String> = s
        .from
        .iter()
        .map(|f| match &f.alias {
            Some(a) => format!("{} AS {a}", f.relation),
            None => f.relation.clone(),
        })
        .collect();
    let mut out = format!("SELECT {} FROM {}", items.join(", "), from.join(", "));
    if !s.joins.is_empty() {
        let js: Vec<String> = s.joins.iter().map(|(a, b)| format!("{} = {}", colref(a), colref(b))).collect();
        let _ = write!(out, " WHERE {}", js.join(" AND "));
    }
    if !s.group_by.is_empty() {
        let gs: Vec<String> = s.group_by.iter().map(colref).collect();
        let _ = write!(out, " GROUP BY {}", gs.join(", "));
    }
    out
}

pub fn render_update(u: &UpdateClause) -> String {
    format!("UPDATE({}) = {}", u.attr, render_update_fn(&u.attr, &u.func))
}

pub fn render_update_fn(attr: &str, f: &UpdateFn) -> String {
    match f.kind {
        UpdateKind::Set => literal(&f.constant),
        UpdateKind::Scale => format!("{} * PRE({attr})", literal(&f.constant)),
        UpdateKind::Shift => format!("PRE({attr}) + {}", literal(&f.constant)),
        UpdateKind::Keep => format!("PRE({attr})"),
    }
}

pub fn render_output(o: &Output) -> String {
    match &o.target {
        OutputTarget::Star => format!("{}(*)", o.agg),
        OutputTarget::Attr(a) => format!("{}(POST({a}))", o.agg),
    }
}

fn render_limit(l: &Limit) -> String {
    match l {
        Limit::Range { attr, lo: Some(lo), hi: Some(hi) } => format!("{} <= POST({attr}) <= {}", num(*lo), num(*hi)),
        Limit::Range { attr, lo: Some(lo), hi: None } => format!("POST({attr}) >= {}", num(*lo)),
        Limit::Range { attr, lo: None, hi: Some(hi) } => format!("POST({attr}) <= {}", num(*hi)),
        Limit::Range { attr, lo: None, hi: None } => format!("POST({attr}) >= -1e308"),
        Limit::In { attr, values } => {
            let vs: Vec<String> = values.iter().map(literal).collect();
            format!("POST({attr}) IN ({})", vs.join(", "))
        }
        Limit::L1 { attrs, budget } => {
            let ts: Vec<String> = attrs.iter().map(|a| format!("L1(PRE({a}), POST({a}))")).collect();
            format!("{} <= {}", ts.join(" + "), num(*budget))
        }
    }
}

/// Shortest text that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:?}").trim_end_matches(".0").to_string()
}

pub fn literal(v: &Value) -> String {
    match v {
        Value::Num(x) => num(*x),
        Value::Str(s) => format!("'{}'", s.replace('\'', "''")),
    }
}

pub fn render_expr(e: &Expr) -> String {
    match e {
        Expr::Num(x) => num(*x),
        Expr::Str(s) => literal(&Value::Str(s.clone())),
        Expr::Attr { side: Side::Pre, name } => format!("PRE({name})"),
        Expr::Attr { side: Side::Post, name } => format!("POST({name})"),
        Expr::Neg(inner) => format!("-({})", render_expr(inner)),
        Expr::Bin { op, l, r } => {
            let sym = match op {
                ArithOp::Add => "+",
                ArithOp::Sub => "-",
                ArithOp::Mul => "*",
                ArithOp::Div => "/",
            };
            format!("{} {sym} {}", operand(l, *op, false), operand(r, *op, true))
        }
    }
}

/// Parenthesizes a binary operand unless left-associativity and precedence
/// already reproduce the same tree.
fn operand(e: &Expr, parent: ArithOp, right: bool) -> String {
    let prec = |op: ArithOp| match op {
        ArithOp::Add | ArithOp::Sub => 1,
        ArithOp::Mul | ArithOp::Div => 2,
    };
    match e {
        Expr::Bin { op, .. } if prec(*op) < prec(parent) || (right && prec(*op) == prec(parent)) => {
            format!("({})", render_expr(e))
        }
        _ => render_expr(e),
    }
}

pub fn render_pred(p: &Pred) -> String {
    match p {
        Pred::Cmp { l, op, r } => format!("{} {} {}", render_expr(l), op.symbol(), render_expr(r)),
        Pred::In { e, values, negated } => {
            let vs: Vec<String> = values.iter().map(literal).collect();
            let not = if *negated { "NOT " } else { "" };
            format!("{} {not}IN ({})", render_expr(e), vs.join(", "))
        }
        Pred::Not(inner) => format!("NOT {}", group(inner)),
        Pred::And(ps) => ps.iter().map(group).collect::<Vec<_>>().join(" AND "),
        Pred::Or(ps) => ps.iter().map(group).collect::<Vec<_>>().join(" OR "),
        Pred::Const(true) => "1 = 1".into(),
        Pred::Const(false) => "1 = 0".into(),
    }
}

fn group(p: &Pred) -> String {
    match p {
        Pred::And(_) | Pred::Or(_) => format!("({})", render_pred(p)),
        _ => render_pred(p),
    }
}
