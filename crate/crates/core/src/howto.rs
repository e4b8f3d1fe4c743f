//! How-to answering: candidate updates, linear scoring against a reference
//! run, and a branch-and-bound solver for multiple-choice integer programs.
//!
//! Every plan intervenes on all how-to attributes. An attribute the plan leaves
//! alone is held at its current value with `PRE(B)`, so the reference run and
//! every candidate run regenerate the same descendant columns from the model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::datamodel::UpdateFn;
use crate::error::{Error, Result};
use crate::hql::ast::{Bound, Goal, HowToQuery, Limit, Output, Sense};
use crate::hql::render::render_output;
use crate::hql::validate::{validate_howto, Binding};
use crate::session::{outcome_attrs, Prepared, Session};
use crate::value::{Domain, Value};

/// Two objective values closer than this are ties.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Per-attribute candidate generation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateConfig {
    /// Keep only SET targets on this grid, counted from the domain minimum.
    #[serde(default)]
    pub set_step: Option<f64>,
    #[serde(default)]
    pub scale: Vec<f64>,
    #[serde(default)]
    pub shift: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub func: UpdateFn,
    /// Post-update level of each selected row.
    pub post: Vec<u32>,
    /// Absolute change of each selected row; zero for categorical attributes.
    pub dev: Vec<f64>,
}

impl Candidate {
    pub fn max_dev(&self) -> f64 {
        self.dev.iter().copied().fold(0.0, f64::max)
    }

    /// Total absolute change over the selected rows.
    pub fn cost(&self) -> f64 {
        self.dev.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGrid {
    pub attrs: Vec<String>,
    pub cols: Vec<usize>,
    /// Selected view rows, in order.
    pub rows: Vec<usize>,
    pub options: Vec<Vec<Candidate>>,
}

impl CandidateGrid {
    pub fn size(&self) -> usize {
        self.options.iter().map(Vec::len).sum()
    }

    /// Updates of a plan given one optional pick per attribute; attributes
    /// without a pick are held with [`UpdateFn::keep`].
    pub fn updates(&self, picks: &[Option<usize>]) -> Vec<(usize, UpdateFn)> {
        picks
            .iter()
            .enumerate()
            .map(|(g, p)| (self.cols[g], p.map_or_else(UpdateFn::keep, |i| self.options[g][i].func.clone())))
            .collect()
    }
}

/// Update functions tried for one attribute, before filtering.
pub fn candidate_functions(domain: &Domain, cfg: &CandidateConfig) -> Vec<UpdateFn> {
    let mut out = Vec::new();
    match domain {
        Domain::Numeric(points) => {
            let min = points.first().copied().unwrap_or(0.0);
            for &p in points {
                let on_grid = cfg.set_step.is_none_or(|s| {
                    let k = (p - min) / s;
                    (k - k.round()).abs() * s <= TIE_TOLERANCE
                });
                if on_grid {
                    out.push(UpdateFn::set(Value::Num(p)));
                }
            }
            out.extend(cfg.scale.iter().map(|&c| UpdateFn::scale(c)));
            out.extend(cfg.shift.iter().map(|&c| UpdateFn::shift(c)));
        }
        Domain::Categorical(values) => out.extend(values.iter().map(|v| UpdateFn::set(Value::Str(v.clone())))),
    }
    out
}

/// Candidates that apply to every selected row and change at least one of them.
pub fn enumerate_candidates(
    p: &Prepared,
    attrs: &[String],
    cfg: &BTreeMap<String, CandidateConfig>,
) -> Result<CandidateGrid> {
    let rows: Vec<usize> = (0..p.view.len()).filter(|&r| p.selection[r]).collect();
    let mut cols = Vec::new();
    let mut options = Vec::new();
    for a in attrs {
        let col = p.view.col(a).ok_or_else(|| Error::UnknownAttribute(a.clone()))?;
        let domain = &p.view.domains[col];
        let mut group = Vec::new();
        'funcs: for func in candidate_functions(domain, cfg.get(a).unwrap_or(&CandidateConfig::default())) {
            let mut post = Vec::with_capacity(rows.len());
            let mut dev = Vec::with_capacity(rows.len());
            for &r in &rows {
                let pre = p.view.rows[r][col] as usize;
                let Ok(l) = func.apply(a, domain, pre) else { continue 'funcs };
                post.push(l as u32);
                dev.push(match (domain.num(pre), domain.num(l)) {
                    (Some(x), Some(y)) => (y - x).abs(),
                    _ => 0.0,
                });
            }
            let changes = rows.iter().zip(&post).any(|(&r, &l)| p.view.rows[r][col] != l);
            if changes && !group.iter().any(|c: &Candidate| c.post == post) {
                group.push(Candidate { func, post, dev });
            }
        }
        cols.push(col);
        options.push(group);
    }
    Ok(CandidateGrid { attrs: attrs.to_vec(), cols, rows, options })
}

/// Whether a single candidate satisfies every range, IN and L1 limit on its attribute.
pub fn candidate_within_limits(attr: &str, domain: &Domain, c: &Candidate, limits: &[Limit]) -> bool {
    limits.iter().all(|l| match l {
        Limit::Range { attr: a, lo, hi } if a == attr => c.post.iter().all(|&v| {
            let x = domain.num(v as usize).unwrap_or(f64::NAN);
            lo.is_none_or(|lo| x >= lo - TIE_TOLERANCE) && hi.is_none_or(|hi| x <= hi + TIE_TOLERANCE)
        }),
        Limit::In { attr: a, values } if a == attr => c
            .post
            .iter()
            .all(|&v| values.iter().any(|w| domain.index_of(w.as_ref()) == Some(v as usize))),
        Limit::L1 { attrs, budget } if attrs.iter().any(|a| a == attr) => c.max_dev() <= budget + TIE_TOLERANCE,
        _ => true,
    })
}

/// `lo <= Σ coef[g][pick_g] <= hi`, with no-change contributing zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LinConstraint {
    pub label: String,
    pub coef: Vec<Vec<f64>>,
    pub lo: f64,
    pub hi: f64,
}

/// Multiple-choice 0/1 program: each group picks at most one option.
#[derive(Debug, Clone, PartialEq)]
pub struct IpModel {
    pub objective: Vec<Vec<f64>>,
    pub constraints: Vec<LinConstraint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpSolution {
    pub picks: Vec<Option<usize>>,
    /// Objective of the returned plan.
    pub value: f64,
    /// Best objective over all feasible plans.
    pub optimum: f64,
}

/// Narrows the grid by the limits and turns multi-attribute L1 budgets into
/// per-row constraints.
pub fn apply_limits(grid: &CandidateGrid, domains: &[Domain], limits: &[Limit]) -> (CandidateGrid, Vec<LinConstraint>) {
    let mut out = grid.clone();
    for (g, opts) in out.options.iter_mut().enumerate() {
        let (attr, dom) = (&grid.attrs[g], &domains[grid.cols[g]]);
        opts.retain(|c| candidate_within_limits(attr, dom, c, limits));
    }
    let mut constraints = Vec::new();
    for l in limits {
        let Limit::L1 { attrs, budget } = l else { continue };
        if attrs.len() < 2 {
            continue;
        }
        let mut seen: Vec<Vec<Vec<f64>>> = Vec::new();
        for (i, _) in out.rows.iter().enumerate() {
            let coef: Vec<Vec<f64>> = out
                .attrs
                .iter()
                .zip(&out.options)
                .map(|(a, opts)| {
                    if attrs.contains(a) {
                        opts.iter().map(|c| c.dev[i]).collect()
                    } else {
                        vec![0.0; opts.len()]
                    }
                })
                .collect();
            if !seen.contains(&coef) {
                seen.push(coef.clone());
                constraints.push(LinConstraint {
                    label: format!("L1({})", attrs.join("+")),
                    coef,
                    lo: f64::NEG_INFINITY,
                    hi: budget + TIE_TOLERANCE,
                });
            }
        }
    }
    (out, constraints)
}

struct Search<'m> {
    m: &'m IpModel,
    obj: Vec<Vec<f64>>,
    /// Best objective still reachable from group g onwards.
    rem_obj: Vec<f64>,
    rem_lo: Vec<Vec<f64>>,
    rem_hi: Vec<Vec<f64>>,
}

impl<'m> Search<'m> {
    fn new(m: &'m IpModel, sign: f64) -> Self {
        let n = m.objective.len();
        let obj: Vec<Vec<f64>> = m.objective.iter().map(|g| g.iter().map(|c| sign * c).collect()).collect();
        let best = |g: &[f64]| g.iter().copied().fold(0.0, f64::max);
        let worst = |g: &[f64]| g.iter().copied().fold(0.0, f64::min);
        let mut rem_obj = vec![0.0; n + 1];
        for g in (0..n).rev() {
            rem_obj[g] = rem_obj[g + 1] + best(&obj[g]);
        }
        let mut rem_lo = Vec::new();
        let mut rem_hi = Vec::new();
        for c in &m.constraints {
            let mut lo = vec![0.0; n + 1];
            let mut hi = vec![0.0; n + 1];
            for g in (0..n).rev() {
                lo[g] = lo[g + 1] + worst(&c.coef[g]);
                hi[g] = hi[g + 1] + best(&c.coef[g]);
            }
            rem_lo.push(lo);
            rem_hi.push(hi);
        }
        Search { m, obj, rem_obj, rem_lo, rem_hi }
    }

    fn feasible_prefix(&self, g: usize, acc: &[f64]) -> bool {
        self.m.constraints.iter().enumerate().all(|(k, c)| {
            acc[k] + self.rem_lo[k][g] <= c.hi && acc[k] + self.rem_hi[k][g] >= c.lo
        })
    }

    fn step(&self, g: usize, pick: Option<usize>, val: f64, acc: &[f64]) -> (f64, Vec<f64>) {
        match pick {
            None => (val, acc.to_vec()),
            Some(i) => (
                val + self.obj[g][i],
                acc.iter().zip(&self.m.constraints).map(|(a, c)| a + c.coef[g][i]).collect(),
            ),
        }
    }

    /// Best objective over feasible plans.
    fn best(&self, g: usize, val: f64, acc: &[f64], picks: &mut Vec<Option<usize>>, best: &mut Option<f64>) {
        if best.is_some_and(|b| val + self.rem_obj[g] < b) || !self.feasible_prefix(g, acc) {
            return;
        }
        if g == self.obj.len() {
            if best.is_none_or(|b| val > b) {
                *best = Some(val);
            }
            return;
        }
        let mut order: Vec<Option<usize>> = (0..self.obj[g].len()).map(Some).collect();
        order.push(None);
        order.sort_by(|a, b| {
            let v = |p: &Option<usize>| p.map_or(0.0, |i| self.obj[g][i]);
            v(b).total_cmp(&v(a))
        });
        for p in order {
            let (v, a) = self.step(g, p, val, acc);
            picks.push(p);
            self.best(g + 1, v, &a, picks, best);
            picks.pop();
        }
    }

    /// First feasible plan in preference order whose objective reaches `target`.
    fn first(&self, g: usize, val: f64, acc: &[f64], target: f64, picks: &mut Vec<Option<usize>>) -> Option<f64> {
        if val + self.rem_obj[g] < target || !self.feasible_prefix(g, acc) {
            return None;
        }
        if g == self.obj.len() {
            return (val >= target).then_some(val);
        }
        for p in std::iter::once(None).chain((0..self.obj[g].len()).map(Some)) {
            let (v, a) = self.step(g, p, val, acc);
            picks.push(p);
            if let Some(found) = self.first(g + 1, v, &a, target, picks) {
                return Some(found);
            }
            picks.pop();
        }
        None
    }
}

/// Solves the program. Among plans within [`TIE_TOLERANCE`] of the optimum the
/// first in preference order wins: groups in order, no change before the
/// options, options in grid order.
pub fn solve_ip(m: &IpModel, sense: Sense) -> Result<IpSolution> {
    let sign = if sense == Sense::Maximize { 1.0 } else { -1.0 };
    let s = Search::new(m, sign);
    let zero = vec![0.0; m.constraints.len()];
    let mut best = None;
    s.best(0, 0.0, &zero, &mut Vec::new(), &mut best);
    let Some(best) = best else {
        return Err(Error::Infeasible("no candidate plan satisfies the limits".into()));
    };
    let mut picks = Vec::new();
    let found = s
        .first(0, 0.0, &zero, best - TIE_TOLERANCE, &mut picks)
        .ok_or_else(|| Error::Infeasible("no candidate plan satisfies the limits".into()))?;
    Ok(IpSolution { picks, value: sign * found, optimum: sign * best })
}

/// Outcome of one objective of a how-to query.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageResult {
    pub output: String,
    pub sense: Sense,
    /// Value with no update at all.
    pub observed: f64,
    /// Value of the plan that holds every attribute at its current value.
    pub baseline: f64,
    /// Baseline plus the chosen coefficients.
    pub model: f64,
    /// One evaluation of the combined update.
    pub verified: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdatePlan {
    pub plan: Vec<(String, Option<UpdateFn>)>,
    pub objective: f64,
    pub model_objective: f64,
    pub cost: Option<f64>,
    pub stages: Vec<StageResult>,
    pub slack: BTreeMap<String, f64>,
    pub candidates: usize,
    pub warnings: Vec<String>,
}

pub fn plan_json(plan: &[(String, Option<UpdateFn>)]) -> serde_json::Value {
    let mut m = serde_json::Map::new();
    for (a, f) in plan {
        m.insert(a.clone(), f.as_ref().map_or(json!("no change"), |f| json!(f)));
    }
    serde_json::Value::Object(m)
}

impl UpdatePlan {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "plan": plan_json(&self.plan),
            "objective": self.objective,
            "model_objective": self.model_objective,
            "cost": self.cost,
            "stages": self.stages,
            "slack": self.slack,
            "warnings": self.warnings,
            "diagnostics": {"candidates": self.candidates},
        })
    }
}

/// A how-to query bound to its relevant view, with the unfiltered candidate grid.
#[derive(Debug, Clone)]
pub struct HowToContext {
    pub prepared: Prepared,
    pub grid: CandidateGrid,
}

/// Outputs read by a goal, in stage order.
pub fn goal_outputs(goal: &Goal) -> Vec<(Output, Sense)> {
    match goal {
        Goal::Optimize(objs) => objs.iter().map(|o| (o.output.clone(), o.sense)).collect(),
        Goal::MinCost(c) => vec![(c.output.clone(), Sense::Minimize)],
    }
}

pub fn prepare_howto(s: &Session, q: &HowToQuery) -> Result<HowToContext> {
    let mut ys = Vec::new();
    for (o, _) in goal_outputs(&q.goal) {
        for y in outcome_attrs(&o, q.for_pred.as_ref()) {
            if !ys.contains(&y) {
                ys.push(y);
            }
        }
    }
    let prepared = s.prepare(&q.use_spec, q.when.as_ref(), q.for_pred.as_ref(), &q.attrs, &ys)?;
    let upd = prepared.updatable();
    let b = Binding { names: &prepared.view.names, domains: &prepared.view.domains, updatable: &upd };
    validate_howto(q, b, &prepared.dag)?;
    let grid = enumerate_candidates(&prepared, &q.attrs, &s.settings.candidates)?;
    Ok(HowToContext { prepared, grid })
}

/// Reference value and per-candidate marginal contributions for one output.
pub fn score(p: &Prepared, grid: &CandidateGrid, output: &Output) -> Result<(f64, Vec<Vec<f64>>)> {
    let none = vec![None; grid.attrs.len()];
    let baseline = p.run(&grid.updates(&none), output)?.value;
    let coef = grid
        .options
        .iter()
        .enumerate()
        .map(|(g, opts)| {
            (0..opts.len())
                .map(|i| {
                    let mut picks = none.clone();
                    picks[g] = Some(i);
                    Ok(p.run(&grid.updates(&picks), output)?.value - baseline)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok((baseline, coef))
}

pub fn solve_howto(s: &Session, q: &HowToQuery) -> Result<UpdatePlan> {
    let ctx = prepare_howto(s, q)?;
    solve_prepared(&ctx, q)
}

pub fn solve_prepared(ctx: &HowToContext, q: &HowToQuery) -> Result<UpdatePlan> {
    let p = &ctx.prepared;
    let (grid, limit_constraints) = apply_limits(&ctx.grid, &p.view.domains, &q.limits);
    if grid.size() == 0 {
        return Err(Error::EmptyCandidateSet);
    }
    let outputs = goal_outputs(&q.goal);
    let mut scored = Vec::new();
    for (o, _) in &outputs {
        scored.push(score(p, &grid, o)?);
    }
    let mut constraints = limit_constraints.clone();
    let (sol, cost) = match &q.goal {
        Goal::Optimize(objs) => {
            let mut sol = None;
            for (k, obj) in objs.iter().enumerate() {
                let m = IpModel { objective: scored[k].1.clone(), constraints: constraints.clone() };
                let st = solve_ip(&m, obj.sense)?;
                let sign = if obj.sense == Sense::Maximize { 1.0 } else { -1.0 };
                constraints.push(LinConstraint {
                    label: format!("stage {}", k + 1),
                    coef: scored[k].1.iter().map(|g| g.iter().map(|c| sign * c).collect()).collect(),
                    lo: sign * st.optimum - TIE_TOLERANCE,
                    hi: f64::INFINITY,
                });
                sol = Some(st);
            }
            (sol.expect("at least one objective"), None)
        }
        Goal::MinCost(c) => {
            let base = scored[0].0;
            let (lo, hi) = match c.bound {
                Bound::AtLeast => (c.threshold - base - TIE_TOLERANCE, f64::INFINITY),
                Bound::AtMost => (f64::NEG_INFINITY, c.threshold - base + TIE_TOLERANCE),
            };
            constraints.push(LinConstraint { label: "goal".into(), coef: scored[0].1.clone(), lo, hi });
            let costs = grid.options.iter().map(|g| g.iter().map(Candidate::cost).collect()).collect();
            let st = solve_ip(&IpModel { objective: costs, constraints: constraints.clone() }, Sense::Minimize)?;
            let v = st.value;
            (st, Some(v))
        }
    };
    let updates = grid.updates(&sol.picks);
    let mut stages = Vec::new();
    let mut warnings = Vec::new();
    for (k, (o, sense)) in outputs.iter().enumerate() {
        let (baseline, coef) = &scored[k];
        let mut model = *baseline;
        for (g, pick) in sol.picks.iter().enumerate() {
            if let Some(i) = pick {
                model += coef[g][*i];
            }
        }
        let res = p.run(&updates, o)?;
        let observed = p.run(&[], o)?.value;
        if (res.value - model).abs() > TIE_TOLERANCE {
            warnings.push(format!(
                "{}: the combined update evaluates to {} but the additive model predicts {}",
                render_output(o),
                res.value,
                model
            ));
        }
        for w in res.warnings {
            if !warnings.contains(&w) {
                warnings.push(w);
            }
        }
        stages.push(StageResult { output: render_output(o), sense: *sense, observed, baseline: *baseline, model, verified: res.value });
    }
    let mut slack = BTreeMap::new();
    for c in &limit_constraints {
        let used: f64 = sol.picks.iter().enumerate().filter_map(|(g, p)| p.map(|i| c.coef[g][i])).sum();
        let e = slack.entry(c.label.clone()).or_insert(f64::INFINITY);
        *e = f64::min(*e, c.hi - TIE_TOLERANCE - used);
    }
    for l in &q.limits {
        if let Limit::L1 { attrs, budget } = l {
            if attrs.len() == 1 {
                let g = grid.attrs.iter().position(|a| *a == attrs[0]).expect("validated limit attribute");
                let used = sol.picks[g].map_or(0.0, |i| grid.options[g][i].max_dev());
                slack.insert(format!("L1({})", attrs[0]), budget - used);
            }
        }
    }
    if let (Goal::MinCost(c), Some(st)) = (&q.goal, stages.first()) {
        let s = match c.bound {
            Bound::AtLeast => st.verified - c.threshold,
            Bound::AtMost => c.threshold - st.verified,
        };
        slack.insert("goal".into(), s);
        if s < -TIE_TOLERANCE {
            warnings.push(format!("the verified output misses the goal by {}", -s));
        }
    }
    let plan = grid
        .attrs
        .iter()
        .zip(&sol.picks)
        .enumerate()
        .map(|(g, (a, p))| (a.clone(), p.map(|i| grid.options[g][i].func.clone())))
        .collect();
    let (objective, model_objective) = match cost {
        Some(c) => (c, c),
        None => (stages[0].verified, stages[0].model),
    };
    Ok(UpdatePlan { plan, objective, model_objective, cost, stages, slack, candidates: grid.size(), warnings })
}
