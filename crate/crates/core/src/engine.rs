//! What-if evaluation over a relevant view.
//!
//! For each disjoint FOR conjunct (pre part P, post part Q) every view row
//! contributes an expected indicator mass (and, for SUM/AVG, an expected
//! output mass):
//! * rows outside the selection contribute 1{P and Q} on their own values;
//! * selected rows whose Q and output read no descendant of the update
//!   contribute 1{Q} on the updated row;
//! * otherwise selected rows satisfying P share the adjusted probability
//!   sum_s h(s) * |s| / |R|, where R are the selected rows satisfying P, s
//!   ranges over strata of R keyed by the update attributes, a backdoor set
//!   and the non-descendants that Q and P read, and h(s) is E[1{Q} * y]
//!   with the update attributes set to f(b).
//!
//! Row contributions are accumulated per block with exact summation, so the
//! value does not depend on the block partition.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::agg::Aggregate;
use crate::causal::dag::CausalDag;
use crate::datamodel::UpdateFn;
use crate::error::{Error, Result};
use crate::estimator::{ConditionalEstimator, EstimatorKind, ViewScm};
use crate::fsum::ExactSum;
use crate::hql::ast::Side;
use crate::hql::eval::{CPred, RowPair};
use crate::value::Domain;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AvgDenominator {
    /// Expected SUM over expected COUNT of qualified rows.
    #[default]
    Expected,
    /// Expected SUM over the number of view rows.
    Fixed,
}

impl std::str::FromStr for AvgDenominator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "expected" => Ok(AvgDenominator::Expected),
            "fixed" => Ok(AvgDenominator::Fixed),
            other => Err(Error::Config(format!("avg-denominator must be expected or fixed, not `{other}`"))),
        }
    }
}

/// A compiled FOR conjunct: `pre` reads only PRE values, `post` only POST values.
#[derive(Debug, Clone)]
pub struct Conj {
    pub pre: CPred,
    pub post: CPred,
}

/// The relevant view as seen by the evaluator.
#[derive(Clone, Copy)]
pub struct EvalInput<'a> {
    pub names: &'a [String],
    pub domains: &'a [Domain],
    pub rows: &'a [Vec<u32>],
    /// Causal graph over the columns; node `i` is column `i`.
    pub dag: &'a CausalDag,
    pub est: &'a ConditionalEstimator,
    /// Block index of each row and the id of each block.
    pub row_block: &'a [usize],
    pub block_ids: &'a [String],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockContribution {
    pub id: String,
    pub contribution: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub rows: usize,
    pub selected: usize,
    pub blocks_used: usize,
    pub conjuncts: Vec<String>,
    pub deterministic_rows: usize,
    pub stochastic_rows: usize,
    /// Number of strata (support size) per stochastic conjunct.
    pub strata: Vec<usize>,
    pub skipped_zero_support: usize,
    pub estimator: String,
    pub expected_count: f64,
    pub expected_sum: f64,
    pub skipped_view_rows: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhatIfResult {
    pub value: f64,
    pub aggregate: Aggregate,
    pub blocks: Vec<BlockContribution>,
    pub backdoor: Vec<String>,
    pub warnings: Vec<String>,
    pub diagnostics: Diagnostics,
}

impl WhatIfResult {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "value": self.value,
            "aggregate": self.aggregate.to_string(),
            "blocks": self.blocks,
            "backdoor": self.backdoor,
            "warnings": self.warnings,
            "diagnostics": self.diagnostics,
        })
    }
}

/// What the query asks for, bound to columns.
#[derive(Debug, Clone)]
pub struct BoundQuery {
    pub selection: Vec<bool>,
    pub updates: Vec<(usize, UpdateFn)>,
    pub agg: Aggregate,
    /// Output column; ignored for COUNT.
    pub y: Option<usize>,
    pub conjuncts: Vec<Conj>,
    pub conjunct_text: Vec<String>,
    pub avg_denominator: AvgDenominator,
}

/// Rows satisfying the WHEN predicate (all rows when absent).
pub fn resolve_when(when: Option<&CPred>, rows: &[Vec<u32>], domains: &[Domain]) -> Vec<bool> {
    rows.iter()
        .map(|r| when.is_none_or(|w| w.eval(&RowPair { pre: r, post: r, domains })))
        .collect()
}

#[derive(Default, Clone)]
struct Mass {
    count: f64,
    sum: f64,
}

fn num_at(domains: &[Domain], col: usize, row: &[u32]) -> f64 {
    domains[col].num(row[col] as usize).unwrap_or(0.0)
}

/// Applies every update to a copy of `row`.
pub fn updated_row(
    names: &[String],
    domains: &[Domain],
    updates: &[(usize, UpdateFn)],
    row: &[u32],
) -> Result<Vec<u32>> {
    let mut out = row.to_vec();
    for (c, f) in updates {
        out[*c] = f.apply(&names[*c], &domains[*c], row[*c] as usize)? as u32;
    }
    Ok(out)
}

struct ConjPlan<'q> {
    conj: &'q Conj,
    /// Descendant columns read by Q or the output.
    t_dn: Vec<usize>,
    key: Vec<usize>,
}

pub fn evaluate(input: &EvalInput<'_>, q: &BoundQuery) -> Result<WhatIfResult> {
    let EvalInput { names, domains, rows, dag, est, .. } = *input;
    let n_rows = rows.len();
    let ucols: Vec<usize> = q.updates.iter().map(|(c, _)| *c).collect();
    let dn: BTreeSet<usize> = dag.descendants(&ucols).into_iter().filter(|c| !ucols.contains(c)).collect();
    let y = if q.agg == Aggregate::Count { None } else { q.y };
    let mut warnings = Vec::new();
    let mut diag = Diagnostics {
        rows: n_rows,
        selected: q.selection.iter().filter(|s| **s).count(),
        conjuncts: q.conjunct_text.clone(),
        estimator: match est.kind {
            EstimatorKind::Exact => "exact".into(),
            EstimatorKind::Freq => "freq".into(),
        },
        ..Diagnostics::default()
    };

    // Post rows of the selected tuples with only the updates applied.
    let mut templates: Vec<Option<Vec<u32>>> = vec![None; n_rows];
    for (r, row) in rows.iter().enumerate() {
        if q.selection[r] {
            templates[r] = Some(updated_row(names, domains, &q.updates, row)?);
        }
    }

    let mut row_mass: Vec<Mass> = vec![Mass::default(); n_rows];
    let mut stochastic = vec![false; n_rows];
    let mut backdoor_union = BTreeSet::new();

    for conj in &q.conjuncts {
        let mut t_cols = conj.post.cols(Some(Side::Post));
        t_cols.extend(y);
        let t_dn: Vec<usize> = t_cols.iter().copied().filter(|c| dn.contains(c)).collect();
        let mut members = Vec::new();
        for (r, row) in rows.iter().enumerate() {
            let pre_ok = conj.pre.eval(&RowPair { pre: row, post: row, domains });
            if !q.selection[r] {
                if pre_ok && conj.post.eval(&RowPair { pre: row, post: row, domains }) {
                    row_mass[r].count += 1.0;
                    row_mass[r].sum += y.map_or(0.0, |c| num_at(domains, c, row));
                }
            } else if pre_ok {
                members.push(r);
            }
        }
        if members.is_empty() {
            continue;
        }
        if t_dn.is_empty() {
            for &r in &members {
                let post = templates[r].as_ref().unwrap();
                if conj.post.eval(&RowPair { pre: &rows[r], post, domains }) {
                    row_mass[r].count += 1.0;
                    row_mass[r].sum += y.map_or(0.0, |c| num_at(domains, c, post));
                }
            }
            continue;
        }
        let backdoor = dag.backdoor_set(&ucols, &t_dn);
        backdoor_union.extend(backdoor.iter().copied());
        let mut key: BTreeSet<usize> = ucols.iter().copied().collect();
        key.extend(&backdoor);
        key.extend(t_cols.iter().filter(|c| !dn.contains(c)));
        key.extend(conj.pre.cols(None).into_iter().filter(|c| !dn.contains(c)));
        let plan = ConjPlan { conj, t_dn, key: key.into_iter().collect() };
        let p = match est.scm() {
            Some(vs) => exact_share(input, q, &plan, &members, &templates, &dn, vs, y)?,
            None => freq_share(input, &plan, &members, &templates, y, &mut diag, &mut warnings)?,
        };
        diag.strata.push(p.1);
        for &r in &members {
            row_mass[r].count += p.0.count;
            row_mass[r].sum += p.0.sum;
            stochastic[r] = true;
        }
    }

    diag.stochastic_rows = stochastic.iter().filter(|s| **s).count();
    diag.deterministic_rows = n_rows - diag.stochastic_rows;

    // Block accumulators, merged exactly.
    let mut block_acc: HashMap<usize, (ExactSum, ExactSum)> = HashMap::new();
    for (r, m) in row_mass.iter().enumerate() {
        let e = block_acc.entry(input.row_block[r]).or_default();
        e.0.add(m.count);
        e.1.add(m.sum);
    }
    let mut order: Vec<usize> = block_acc.keys().copied().collect();
    order.sort_unstable();
    let (mut count, mut sum) = (ExactSum::new(), ExactSum::new());
    for b in &order {
        count.merge(&block_acc[b].0);
        sum.merge(&block_acc[b].1);
    }
    let (count, sum) = (count.value(), sum.value());
    diag.expected_count = count;
    diag.expected_sum = sum;
    diag.blocks_used = order.len();
    let denom = match (q.agg, q.avg_denominator) {
        (Aggregate::Avg, AvgDenominator::Expected) => count,
        (Aggregate::Avg, AvgDenominator::Fixed) => n_rows as f64,
        _ => 1.0,
    };
    if q.agg == Aggregate::Avg && denom == 0.0 {
        warnings.push("no row qualifies for the output; AVG is reported as 0".to_string());
    }
    let combine = |c: f64, s: f64| match q.agg {
        Aggregate::Count => c,
        Aggregate::Sum => s,
        Aggregate::Avg if denom == 0.0 => 0.0,
        Aggregate::Avg => s / denom,
    };
    let value = combine(count, sum);
    let blocks = order
        .iter()
        .map(|b| BlockContribution {
            id: input.block_ids[*b].clone(),
            contribution: combine(block_acc[b].0.value(), block_acc[b].1.value()),
        })
        .collect();
    let mut backdoor: Vec<String> = backdoor_union.iter().map(|&c| names[c].clone()).collect();
    backdoor.sort();
    Ok(WhatIfResult { value, aggregate: q.agg, blocks, backdoor, warnings, diagnostics: diag })
}

fn mass_of(post: &CPred, pre: &[u32], row: &[u32], domains: &[Domain], y: Option<usize>) -> Mass {
    if post.eval(&RowPair { pre, post: row, domains }) {
        Mass { count: 1.0, sum: y.map_or(0.0, |c| num_at(domains, c, row)) }
    } else {
        Mass::default()
    }
}

fn strata_count(plan: &ConjPlan<'_>, members: &[usize], templates: &[Option<Vec<u32>>]) -> usize {
    members
        .iter()
        .map(|&r| plan.key.iter().map(|&c| templates[r].as_ref().unwrap()[c]).collect::<Vec<u32>>())
        .collect::<BTreeSet<_>>()
        .len()
}

/// Average over the members of E[1{Q} * y] with the update applied and the
/// other non-descendants held at each row's observed values.
#[allow(clippy::too_many_arguments)]
fn exact_share(
    input: &EvalInput<'_>,
    q: &BoundQuery,
    plan: &ConjPlan<'_>,
    members: &[usize],
    templates: &[Option<Vec<u32>>],
    dn: &BTreeSet<usize>,
    vs: &ViewScm,
    y: Option<usize>,
) -> Result<(Mass, usize)> {
    let dag = input.dag;
    let mut needed: BTreeSet<usize> = plan.t_dn.iter().copied().collect();
    needed.extend(dag.ancestors(&plan.t_dn).into_iter().filter(|c| dn.contains(c)));
    let order: Vec<usize> = dag.topo_order()?.into_iter().filter(|c| needed.contains(c)).collect();
    for &c in &order {
        if vs.node_of[c].is_none() {
            return Err(Error::ScmMismatch(format!("`{}` has no CPT in the structural model", input.names[c])));
        }
    }
    let mut ctx: BTreeSet<usize> = order.iter().flat_map(|&c| dag.parents(c).iter().copied()).collect();
    ctx.extend(plan.conj.post.cols(Some(Side::Post)));
    ctx.extend(y);
    ctx.extend(q.updates.iter().map(|(c, _)| *c));
    let ctx: Vec<usize> = ctx.into_iter().filter(|c| !needed.contains(c)).collect();
    let mut cache: HashMap<Vec<u32>, Mass> = HashMap::new();
    let (mut count, mut sum) = (ExactSum::new(), ExactSum::new());
    for &r in members {
        let template = templates[r].as_ref().unwrap();
        let k: Vec<u32> = ctx.iter().map(|&c| template[c]).collect();
        let m = match cache.get(&k) {
            Some(m) => m.clone(),
            None => {
                let mut row = template.clone();
                let mut acc = Mass::default();
                chain(vs, &order, 0, 1.0, &mut row, &mut |row, p| {
                    let m = mass_of(&plan.conj.post, &input.rows[r], row, input.domains, y);
                    acc.count += p * m.count;
                    acc.sum += p * m.sum;
                })?;
                cache.insert(k, acc.clone());
                acc
            }
        };
        count.add(m.count);
        sum.add(m.sum);
    }
    let n = members.len() as f64;
    Ok((Mass { count: count.value() / n, sum: sum.value() / n }, strata_count(plan, members, templates)))
}

fn chain(
    vs: &ViewScm,
    order: &[usize],
    i: usize,
    p: f64,
    row: &mut Vec<u32>,
    leaf: &mut dyn FnMut(&[u32], f64),
) -> Result<()> {
    if p == 0.0 {
        return Ok(());
    }
    if i == order.len() {
        leaf(row, p);
        return Ok(());
    }
    let col = order[i];
    let dist = vs.dist(col, row)?.to_vec();
    let saved = row[col];
    for (l, pl) in dist.into_iter().enumerate() {
        row[col] = l as u32;
        chain(vs, order, i + 1, p * pl, row, leaf)?;
    }
    row[col] = saved;
    Ok(())
}

const CLASS_CAP: usize = 1_000_000;

/// Frequency-backed share: each stratum looks up estimator rows with the same
/// key values (update attributes at their new values) and averages 1{Q} * y
/// over the observed values of the descendant targets.
fn freq_share(
    input: &EvalInput<'_>,
    plan: &ConjPlan<'_>,
    members: &[usize],
    templates: &[Option<Vec<u32>>],
    y: Option<usize>,
    diag: &mut Diagnostics,
    warnings: &mut Vec<String>,
) -> Result<(Mass, usize)> {
    let est = input.est;
    let mut strata: HashMap<Vec<u32>, (usize, usize)> = HashMap::new();
    for &r in members {
        let k: Vec<u32> = plan.key.iter().map(|&c| templates[r].as_ref().unwrap()[c]).collect();
        strata.entry(k).or_insert((r, 0)).1 += 1;
    }
    let mut index: HashMap<Vec<u32>, HashMap<Vec<u32>, f64>> = HashMap::new();
    for row in est.rows() {
        let k: Vec<u32> = plan.key.iter().map(|&c| row[c]).collect();
        if strata.contains_key(&k) {
            let class: Vec<u32> = plan.t_dn.iter().map(|&c| row[c]).collect();
            *index.entry(k).or_default().entry(class).or_default() += 1.0;
        }
    }
    let sizes: Vec<usize> = plan.t_dn.iter().map(|&c| input.domains[c].len()).collect();
    let classes: usize = sizes.iter().try_fold(1usize, |a, &s| a.checked_mul(s)).unwrap_or(usize::MAX);
    if est.alpha > 0.0 && classes > CLASS_CAP {
        return Err(Error::DomainTooLarge { cap: CLASS_CAP });
    }
    let mut keys: Vec<&Vec<u32>> = strata.keys().collect();
    keys.sort();
    let (mut count, mut sum) = (ExactSum::new(), ExactSum::new());
    let empty = HashMap::new();
    for k in keys {
        let (rep, weight) = strata[k];
        let seen = index.get(k).unwrap_or(&empty);
        let n: f64 = seen.values().sum();
        if n == 0.0 && est.alpha == 0.0 {
            diag.skipped_zero_support += 1;
            let desc: Vec<String> = plan
                .key
                .iter()
                .zip(k)
                .map(|(&c, &l)| format!("{}={}", input.names[c], input.domains[c].value(l as usize)))
                .collect();
            warnings.push(format!("no support for ({}); {} row(s) skipped", desc.join(", "), weight));
            continue;
        }
        let template = templates[rep].as_ref().unwrap();
        let mut row = template.clone();
        let mut eval_class = |class: &[u32]| {
            for (&c, &l) in plan.t_dn.iter().zip(class) {
                row[c] = l;
            }
            mass_of(&plan.conj.post, &input.rows[rep], &row, input.domains, y)
        };
        let mut h = Mass::default();
        if est.alpha == 0.0 {
            let mut cls: Vec<(&Vec<u32>, &f64)> = seen.iter().collect();
            cls.sort_by(|a, b| a.0.cmp(b.0));
            for (class, cnt) in cls {
                let m = eval_class(class);
                h.count += cnt / n * m.count;
                h.sum += cnt / n * m.sum;
            }
        } else {
            let z = n + est.alpha * classes as f64;
            let mut class = vec![0u32; sizes.len()];
            for _ in 0..classes {
                let p = (seen.get(&class).copied().unwrap_or(0.0) + est.alpha) / z;
                let m = eval_class(&class);
                h.count += p * m.count;
                h.sum += p * m.sum;
                for i in (0..class.len()).rev() {
                    class[i] += 1;
                    if (class[i] as usize) < sizes[i] {
                        break;
                    }
                    class[i] = 0;
                }
            }
        }
        count.add(h.count * weight as f64);
        sum.add(h.sum * weight as f64);
    }
    let total = members.len() as f64;
    Ok((Mass { count: count.value() / total, sum: sum.value() / total }, strata.len()))
}
