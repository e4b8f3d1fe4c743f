//! Binding checks of parsed queries against a relevant view and its causal graph.

use std::collections::BTreeSet;

use crate::agg::Aggregate;
use crate::causal::dag::CausalDag;
use crate::datamodel::{UpdateFn, UpdateKind};
use crate::error::{Error, Result};
use crate::hql::ast::*;
use crate::value::{Domain, Value};

/// Column names, domains and update eligibility a query is bound against.
#[derive(Debug, Clone, Copy)]
pub struct Binding<'a> {
    pub names: &'a [String],
    pub domains: &'a [Domain],
    pub updatable: &'a [bool],
}

impl Binding<'_> {
    fn col(&self, name: &str) -> Result<usize> {
        self.names.iter().position(|n| n == name).ok_or_else(|| Error::UnknownAttribute(name.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ty {
    Num,
    Str,
}

fn value_ty(v: &Value) -> Ty {
    match v {
        Value::Num(_) => Ty::Num,
        Value::Str(_) => Ty::Str,
    }
}

fn expr_ty(e: &Expr, b: Binding<'_>) -> Result<Ty> {
    match e {
        Expr::Num(_) => Ok(Ty::Num),
        Expr::Str(_) => Ok(Ty::Str),
        Expr::Attr { name, .. } => Ok(if b.domains[b.col(name)?].is_numeric() { Ty::Num } else { Ty::Str }),
        Expr::Neg(x) => match expr_ty(x, b)? {
            Ty::Num => Ok(Ty::Num),
            Ty::Str => Err(Error::TypeMismatch("cannot negate a categorical value".into())),
        },
        Expr::Bin { l, r, .. } => match (expr_ty(l, b)?, expr_ty(r, b)?) {
            (Ty::Num, Ty::Num) => Ok(Ty::Num),
            _ => Err(Error::TypeMismatch("arithmetic needs numeric operands".into())),
        },
    }
}

/// Checks attribute names and operand types of a predicate.
pub fn check_pred(p: &Pred, b: Binding<'_>) -> Result<()> {
    match p {
        Pred::Cmp { l, op, r } => {
            let (tl, tr) = (expr_ty(l, b)?, expr_ty(r, b)?);
            if tl != tr {
                return Err(Error::TypeMismatch(format!(
                    "`{}` compares a {} with a {}",
                    crate::hql::render::render_pred(p),
                    ty_name(tl),
                    ty_name(tr)
                )));
            }
            if tl == Ty::Str && !matches!(op, CmpOp::Eq | CmpOp::Ne) {
                return Err(Error::TypeMismatch("categorical values only support = and <>".into()));
            }
            Ok(())
        }
        Pred::In { e, values, .. } => {
            let t = expr_ty(e, b)?;
            if values.iter().any(|v| value_ty(v) != t) {
                return Err(Error::TypeMismatch(format!(
                    "IN list of `{}` mixes value types",
                    crate::hql::render::render_expr(e)
                )));
            }
            Ok(())
        }
        Pred::Not(x) => check_pred(x, b),
        Pred::And(ps) | Pred::Or(ps) => ps.iter().try_for_each(|x| check_pred(x, b)),
        Pred::Const(_) => Ok(()),
    }
}

fn ty_name(t: Ty) -> &'static str {
    match t {
        Ty::Num => "number",
        Ty::Str => "string",
    }
}

fn check_update_fn(attr: &str, f: &UpdateFn, domain: &Domain) -> Result<()> {
    match (f.kind, domain, &f.constant) {
        (UpdateKind::Keep, _, _) => Ok(()),
        (UpdateKind::Set, _, c) => {
            let ok = matches!((domain, c), (Domain::Numeric(_), Value::Num(_)) | (Domain::Categorical(_), Value::Str(_)));
            if !ok {
                return Err(Error::TypeMismatch(format!("UPDATE({attr}) constant does not match its domain type")));
            }
            if domain.index_of(c.as_ref()).is_none() {
                return Err(Error::UpdateValueOutsideDomain {
                    attr: attr.to_string(),
                    value: crate::hql::render::literal(c),
                });
            }
            Ok(())
        }
        (_, Domain::Categorical(_), _) => {
            Err(Error::TypeMismatch(format!("UPDATE({attr}) scales or shifts a categorical attribute")))
        }
        (_, Domain::Numeric(_), Value::Num(_)) => Ok(()),
        (_, Domain::Numeric(_), Value::Str(_)) => {
            Err(Error::TypeMismatch(format!("UPDATE({attr}) needs a numeric constant")))
        }
    }
}

/// Update targets must be distinct, updatable and free of causal paths between them.
fn check_update_attrs(attrs: &[&str], b: Binding<'_>, dag: &CausalDag) -> Result<Vec<usize>> {
    let mut seen = BTreeSet::new();
    let mut cols = Vec::new();
    for a in attrs {
        let c = b.col(a)?;
        if !b.updatable[c] {
            return Err(Error::ImmutableUpdateTarget(a.to_string()));
        }
        if !seen.insert(*a) {
            return Err(Error::InvalidQuery(format!("`{a}` is updated twice")));
        }
        cols.push(c);
    }
    for (i, x) in attrs.iter().enumerate() {
        for y in &attrs[i + 1..] {
            let (Some(xi), Some(yi)) = (dag.index(x), dag.index(y)) else { continue };
            if dag.has_directed_path(xi, yi) {
                return Err(Error::PathBetweenUpdates { from: x.to_string(), to: y.to_string() });
            }
            if dag.has_directed_path(yi, xi) {
                return Err(Error::PathBetweenUpdates { from: y.to_string(), to: x.to_string() });
            }
        }
    }
    Ok(cols)
}

fn check_output(o: &Output, b: Binding<'_>) -> Result<()> {
    if let Some(a) = o.attr() {
        let c = b.col(a)?;
        if o.agg != Aggregate::Count && !b.domains[c].is_numeric() {
            return Err(Error::TypeMismatch(format!("{}(POST({a})) needs a numeric attribute", o.agg)));
        }
    } else if o.agg != Aggregate::Count {
        return Err(Error::UnsupportedAggregate(format!("{}(*)", o.agg)));
    }
    Ok(())
}

fn check_when_for(when: &Option<Pred>, for_pred: &Option<Pred>, b: Binding<'_>) -> Result<()> {
    if let Some(w) = when {
        check_pred(w, b)?;
    }
    if let Some(f) = for_pred {
        check_pred(f, b)?;
    }
    Ok(())
}

pub fn validate_whatif(q: &WhatIfQuery, b: Binding<'_>, dag: &CausalDag) -> Result<()> {
    let attrs: Vec<&str> = q.updates.iter().map(|u| u.attr.as_str()).collect();
    let cols = check_update_attrs(&attrs, b, dag)?;
    for (u, c) in q.updates.iter().zip(cols) {
        check_update_fn(&u.attr, &u.func, &b.domains[c])?;
    }
    check_output(&q.output, b)?;
    check_when_for(&q.when, &q.for_pred, b)
}

pub fn validate_howto(q: &HowToQuery, b: Binding<'_>, dag: &CausalDag) -> Result<()> {
    let attrs: Vec<&str> = q.attrs.iter().map(String::as_str).collect();
    check_update_attrs(&attrs, b, dag)?;
    for l in &q.limits {
        match l {
            Limit::Range { attr, lo, hi } => {
                let d = limit_domain(attr, &q.attrs, b)?;
                let Domain::Numeric(points) = d else {
                    return Err(Error::TypeMismatch(format!("range limit on categorical `{attr}`")));
                };
                let lo = lo.unwrap_or(f64::NEG_INFINITY);
                let hi = hi.unwrap_or(f64::INFINITY);
                if lo > hi {
                    return Err(Error::InvalidQuery(format!("empty range limit on `{attr}`")));
                }
                if !points.iter().any(|&p| p >= lo - 1e-9 && p <= hi + 1e-9) {
                    return Err(Error::InvalidQuery(format!("range limit on `{attr}` lies outside its domain")));
                }
            }
            Limit::In { attr, values } => {
                let d = limit_domain(attr, &q.attrs, b)?;
                for v in values {
                    if d.index_of(v.as_ref()).is_none() {
                        return Err(Error::InvalidQuery(format!(
                            "IN limit value {} is not in the domain of `{attr}`",
                            crate::hql::render::literal(v)
                        )));
                    }
                }
            }
            Limit::L1 { attrs, budget } => {
                if *budget < 0.0 || budget.is_nan() {
                    return Err(Error::InvalidQuery("L1 budget must be non-negative".into()));
                }
                for a in attrs {
                    if !limit_domain(a, &q.attrs, b)?.is_numeric() {
                        return Err(Error::TypeMismatch(format!("L1 limit on categorical `{a}`")));
                    }
                }
            }
        }
    }
    match &q.goal {
        Goal::Optimize(objs) => objs.iter().try_for_each(|o| check_output(&o.output, b))?,
        Goal::MinCost(c) => {
            check_output(&c.output, b)?;
            for a in &q.attrs {
                if !b.domains[b.col(a)?].is_numeric() {
                    return Err(Error::TypeMismatch(format!("cost mode needs numeric `{a}`")));
                }
            }
        }
    }
    check_when_for(&q.when, &q.for_pred, b)
}

fn limit_domain<'a>(attr: &str, howto: &[String], b: Binding<'a>) -> Result<&'a Domain> {
    let c = b.col(attr)?;
    if !howto.iter().any(|h| h == attr) {
        return Err(Error::InvalidQuery(format!("LIMIT on `{attr}` which is not in HOWTOUPDATE")));
    }
    Ok(&b.domains[c])
}
