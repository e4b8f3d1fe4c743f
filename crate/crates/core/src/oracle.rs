//! Brute-force reference evaluation over possible worlds.
//!
//! Every selected row takes its updated values; all causal descendants of the
//! updated columns are enumerated through the structural model given the
//! row's observed non-descendants. Unselected rows keep their values. The FOR
//! predicate is evaluated as written, without normalization.

use std::collections::BTreeSet;

use crate::agg::Aggregate;
use crate::datamodel::UpdateFn;
use crate::engine::{updated_row, AvgDenominator};
use crate::error::{Error, Result};
use crate::estimator::ViewScm;
use crate::fsum::ExactSum;
use crate::hql::ast::{Bound, Goal, HowToQuery, Limit, Output, Sense, WhatIfQuery};
use crate::hql::eval::RowPair;
use crate::howto::{goal_outputs, CandidateGrid, HowToContext, TIE_TOLERANCE};
use crate::session::{outcome_attrs, Prepared, Session};

/// Post-update worlds of one row with their probabilities.
pub fn row_worlds(p: &Prepared, scm: &ViewScm, updates: &[(usize, UpdateFn)], row: usize) -> Result<Vec<(Vec<u32>, f64)>> {
    let pre = &p.view.rows[row];
    if !p.selection[row] || updates.is_empty() {
        return Ok(vec![(pre.clone(), 1.0)]);
    }
    let ucols: Vec<usize> = updates.iter().map(|(c, _)| *c).collect();
    let desc: BTreeSet<usize> = p.dag.descendants(&ucols).into_iter().filter(|c| !ucols.contains(c)).collect();
    let order: Vec<usize> = p.dag.topo_order()?.into_iter().filter(|c| desc.contains(c)).collect();
    let start = updated_row(&p.view.names, &p.view.domains, updates, pre)?;
    let mut worlds = vec![(start, 1.0)];
    for &c in &order {
        let mut next = Vec::new();
        for (w, pw) in worlds {
            let dist = scm.dist(c, &w)?;
            for (level, &q) in dist.iter().enumerate() {
                if q > 0.0 {
                    let mut v = w.clone();
                    v[c] = level as u32;
                    next.push((v, pw * q));
                }
            }
        }
        worlds = next;
    }
    Ok(worlds)
}

fn model(p: &Prepared) -> Result<&ViewScm> {
    p.vscm.as_ref().ok_or_else(|| Error::Config("the oracle needs a structural model (scm)".into()))
}

fn qualifies(p: &Prepared, pre: &[u32], post: &[u32]) -> bool {
    let pair = RowPair { pre, post, domains: &p.view.domains };
    p.raw_for.as_ref().is_none_or(|f| f.eval(&pair))
}

fn output_col(p: &Prepared, output: &Output) -> Result<Option<usize>> {
    output
        .attr()
        .map(|a| p.view.col(a).ok_or_else(|| Error::UnknownAttribute(a.to_string())))
        .transpose()
}

fn finish(p: &Prepared, agg: Aggregate, count: f64, sum: f64) -> f64 {
    match agg {
        Aggregate::Count => count,
        Aggregate::Sum => sum,
        Aggregate::Avg => {
            let d = match p.settings.avg_denominator {
                AvgDenominator::Expected => count,
                AvgDenominator::Fixed => p.view.len() as f64,
            };
            if d == 0.0 {
                0.0
            } else {
                sum / d
            }
        }
    }
}

/// Expected aggregate by per-row world enumeration.
pub fn oracle_eval(p: &Prepared, updates: &[(usize, UpdateFn)], output: &Output) -> Result<f64> {
    let scm = model(p)?;
    let y = output_col(p, output)?;
    let (mut count, mut sum) = (ExactSum::new(), ExactSum::new());
    for r in 0..p.view.len() {
        let pre = &p.view.rows[r];
        for (post, pr) in row_worlds(p, scm, updates, r)? {
            if qualifies(p, pre, &post) {
                count.add(pr);
                if let Some(c) = y {
                    sum.add(pr * p.view.domains[c].num(post[c] as usize).unwrap_or(0.0));
                }
            }
        }
    }
    Ok(finish(p, output.agg, count.value(), sum.value()))
}

/// Prepares and validates `q`, then evaluates it with [`oracle_eval`].
pub fn oracle_whatif(s: &Session, q: &WhatIfQuery) -> Result<f64> {
    let bs: Vec<String> = q.updates.iter().map(|u| u.attr.clone()).collect();
    let ys = outcome_attrs(&q.output, q.for_pred.as_ref());
    let p = s.prepare(&q.use_spec, q.when.as_ref(), q.for_pred.as_ref(), &bs, &ys)?;
    p.validate(q)?;
    let updates = p.bind_updates(q.updates.iter().map(|u| (u.attr.as_str(), u.func.clone())))?;
    oracle_eval(&p, &updates, &q.output)
}

/// One possible world of the whole view: a post row per view row.
pub type World = (Vec<Vec<u32>>, f64);

/// Every joint post-update world with its probability. Fails when the number of
/// worlds would exceed `cap`.
pub fn enumerate_pwd(p: &Prepared, updates: &[(usize, UpdateFn)], cap: u128) -> Result<Vec<World>> {
    let scm = model(p)?;
    let per_row: Vec<Vec<(Vec<u32>, f64)>> =
        (0..p.view.len()).map(|r| row_worlds(p, scm, updates, r)).collect::<Result<_>>()?;
    let needed = per_row.iter().fold(1u128, |acc, w| acc.saturating_mul(w.len() as u128));
    if needed > cap {
        return Err(Error::WorldCapExceeded { cap, needed });
    }
    let mut worlds: Vec<World> = vec![(Vec::new(), 1.0)];
    for rw in &per_row {
        let mut next = Vec::with_capacity(worlds.len() * rw.len());
        for (w, pw) in &worlds {
            for (row, q) in rw {
                let mut v = w.clone();
                v.push(row.clone());
                next.push((v, pw * q));
            }
        }
        worlds = next;
    }
    Ok(worlds)
}

/// Expected aggregate by summing over joint worlds. AVG is the ratio of
/// expected SUM to expected COUNT, matching [`oracle_eval`].
pub fn oracle_eval_pwd(p: &Prepared, updates: &[(usize, UpdateFn)], output: &Output, cap: u128) -> Result<f64> {
    let y = output_col(p, output)?;
    let (mut count, mut sum) = (ExactSum::new(), ExactSum::new());
    for (world, pw) in enumerate_pwd(p, updates, cap)? {
        for (r, post) in world.iter().enumerate() {
            if qualifies(p, &p.view.rows[r], post) {
                count.add(pw);
                if let Some(c) = y {
                    sum.add(pw * p.view.domains[c].num(post[c] as usize).unwrap_or(0.0));
                }
            }
        }
    }
    Ok(finish(p, output.agg, count.value(), sum.value()))
}

/// Exhaustive how-to answer.
#[derive(Debug, Clone, PartialEq)]
pub struct OraclePlan {
    pub picks: Vec<Option<usize>>,
    pub plan: Vec<(String, Option<UpdateFn>)>,
    /// Stage-one value, or the cost in cost mode.
    pub objective: f64,
    pub stage_values: Vec<f64>,
    pub plans_checked: usize,
}

/// Every plan in preference order: attributes in order, no change first.
pub fn all_plans(grid: &CandidateGrid) -> Vec<Vec<Option<usize>>> {
    let mut plans: Vec<Vec<Option<usize>>> = vec![Vec::new()];
    for opts in &grid.options {
        let mut next = Vec::new();
        for pl in &plans {
            for choice in std::iter::once(None).chain((0..opts.len()).map(Some)) {
                let mut v = pl.clone();
                v.push(choice);
                next.push(v);
            }
        }
        plans = next;
    }
    plans
}

fn plan_ok(p: &Prepared, grid: &CandidateGrid, picks: &[Option<usize>], limits: &[Limit]) -> bool {
    let chosen = |a: &str| {
        grid.attrs.iter().position(|x| x == a).and_then(|g| picks[g].map(|i| (g, &grid.options[g][i])))
    };
    limits.iter().all(|l| match l {
        Limit::Range { attr, lo, hi } => chosen(attr).is_none_or(|(g, c)| {
            c.post.iter().all(|&v| {
                let x = p.view.domains[grid.cols[g]].num(v as usize).unwrap_or(f64::NAN);
                lo.is_none_or(|lo| x >= lo - TIE_TOLERANCE) && hi.is_none_or(|hi| x <= hi + TIE_TOLERANCE)
            })
        }),
        Limit::In { attr, values } => chosen(attr).is_none_or(|(g, c)| {
            let d = &p.view.domains[grid.cols[g]];
            c.post.iter().all(|&v| values.iter().any(|w| d.index_of(w.as_ref()) == Some(v as usize)))
        }),
        Limit::L1 { attrs, budget } => (0..grid.rows.len()).all(|i| {
            let total: f64 = attrs.iter().filter_map(|a| chosen(a)).map(|(_, c)| c.dev[i]).sum();
            total <= budget + TIE_TOLERANCE
        }),
    })
}

fn first_near_best(values: &[(usize, f64)]) -> Option<(usize, f64)> {
    let best = values.iter().map(|(_, v)| *v).fold(f64::NEG_INFINITY, f64::max);
    values.iter().copied().find(|(_, v)| *v >= best - TIE_TOLERANCE)
}

/// Enumerates every plan of the grid, evaluates each with [`oracle_eval`] and
/// applies the goal: THEN-chained objectives filter the survivors of earlier
/// stages; cost mode keeps plans meeting the threshold and minimizes total change.
pub fn oracle_howto(ctx: &HowToContext, q: &HowToQuery) -> Result<OraclePlan> {
    let p = &ctx.prepared;
    let grid = &ctx.grid;
    let plans: Vec<Vec<Option<usize>>> =
        all_plans(grid).into_iter().filter(|pl| plan_ok(p, grid, pl, &q.limits)).collect();
    let outputs = goal_outputs(&q.goal);
    let mut values: Vec<Vec<f64>> = Vec::with_capacity(plans.len());
    for pl in &plans {
        let updates = grid.updates(pl);
        values.push(outputs.iter().map(|(o, _)| oracle_eval(p, &updates, o)).collect::<Result<_>>()?);
    }
    let cost_of = |pl: &[Option<usize>]| -> f64 {
        pl.iter().enumerate().filter_map(|(g, c)| c.map(|i| grid.options[g][i].cost())).sum()
    };
    let mut alive: Vec<usize> = (0..plans.len()).collect();
    let (winner, objective) = match &q.goal {
        Goal::Optimize(objs) => {
            let mut pick = None;
            for (k, obj) in objs.iter().enumerate() {
                let sign = if obj.sense == Sense::Maximize { 1.0 } else { -1.0 };
                let scored: Vec<(usize, f64)> = alive.iter().map(|&i| (i, sign * values[i][k])).collect();
                let Some(first) = first_near_best(&scored) else { break };
                let best = scored.iter().map(|(_, v)| *v).fold(f64::NEG_INFINITY, f64::max);
                pick = Some(first);
                alive.retain(|&i| sign * values[i][k] >= best - TIE_TOLERANCE);
            }
            let (i, _) = pick.ok_or_else(|| Error::Infeasible("no candidate plan satisfies the limits".into()))?;
            (i, values[i][0])
        }
        Goal::MinCost(c) => {
            alive.retain(|&i| match c.bound {
                Bound::AtLeast => values[i][0] >= c.threshold - TIE_TOLERANCE,
                Bound::AtMost => values[i][0] <= c.threshold + TIE_TOLERANCE,
            });
            let scored: Vec<(usize, f64)> = alive.iter().map(|&i| (i, -cost_of(&plans[i]))).collect();
            let (i, v) = first_near_best(&scored)
                .ok_or_else(|| Error::Infeasible("no plan reaches the goal".into()))?;
            (i, -v)
        }
    };
    let picks = plans[winner].clone();
    let plan = grid
        .attrs
        .iter()
        .zip(&picks)
        .enumerate()
        .map(|(g, (a, c))| (a.clone(), c.map(|i| grid.options[g][i].func.clone())))
        .collect();
    Ok(OraclePlan { picks, plan, objective, stage_values: values[winner].clone(), plans_checked: plans.len() })
}
