//! Conditional probability estimation over the rows of a relevant view, backed
//! either by an explicit structural model or by observed frequencies.

use std::collections::{BTreeSet, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::causal::dag::CausalDag;
use crate::causal::scm::Scm;
use crate::datamodel::UpdateFn;
use crate::error::{Error, Result};
use crate::hql::eval::{CPred, RowPair};
use crate::value::{Domain, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    /// CPTs of the structural model.
    Exact,
    /// Frequencies over the view rows (or a seeded sample of them).
    #[default]
    Freq,
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(EstimatorKind::Exact),
            "freq" => Ok(EstimatorKind::Freq),
            other => Err(Error::Config(format!("estimator must be exact or freq, not `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    #[serde(default)]
    pub kind: EstimatorKind,
    #[serde(default)]
    pub sample: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Laplace pseudo-count added to every outcome class; 0 disables smoothing.
    #[serde(default)]
    pub alpha: f64,
}

/// SCM bound to view columns.
#[derive(Debug, Clone)]
pub struct ViewScm {
    pub scm: Scm,
    /// SCM node of each view column, if it has a CPT.
    pub node_of: Vec<Option<usize>>,
    /// View column of each SCM node.
    pub col_of: Vec<usize>,
}

impl ViewScm {
    pub fn new(scm: Scm, names: &[String]) -> Result<ViewScm> {
        let node_of: Vec<Option<usize>> = names.iter().map(|n| scm.index(n)).collect();
        let col_of = scm
            .nodes
            .iter()
            .map(|n| {
                names
                    .iter()
                    .position(|c| *c == n.name)
                    .ok_or_else(|| Error::ScmMismatch(format!("`{}` is not a view column", n.name)))
            })
            .collect::<Result<_>>()?;
        Ok(ViewScm { scm, node_of, col_of })
    }

    /// Distribution of the column `col` given a full row of view levels.
    pub fn dist(&self, col: usize, row: &[u32]) -> Result<&[f64]> {
        let node = self.node_of[col].ok_or_else(|| Error::ScmMismatch(format!("column {col} has no CPT")))?;
        let pl: Vec<usize> = self.scm.nodes[node].parents.iter().map(|&p| row[self.col_of[p]] as usize).collect();
        Ok(self.scm.dist(node, &pl))
    }
}

#[derive(Debug, Clone)]
pub struct ConditionalEstimator {
    pub kind: EstimatorKind,
    pub names: Vec<String>,
    pub domains: Vec<Domain>,
    rows: Vec<Vec<u32>>,
    scm: Option<ViewScm>,
    pub alpha: f64,
    pub world_cap: u128,
}

/// Fits an estimator over view rows. The exact kind needs a model bound to the
/// same columns; the frequency kind keeps all rows or a seeded sample.
pub fn fit(
    names: &[String],
    domains: &[Domain],
    rows: &[Vec<u32>],
    scm: Option<ViewScm>,
    cfg: &EstimatorConfig,
    world_cap: u128,
) -> Result<ConditionalEstimator> {
    if cfg.alpha < 0.0 || !cfg.alpha.is_finite() {
        return Err(Error::Config("alpha must be a non-negative number".into()));
    }
    let kept = match cfg.sample {
        Some(0) => return Err(Error::EmptySample),
        Some(n) if n > rows.len() => {
            return Err(Error::Config(format!("sample size {n} exceeds the {} available rows", rows.len())))
        }
        Some(n) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut idx = rand::seq::index::sample(&mut rng, rows.len(), n).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| rows[i].clone()).collect()
        }
        None => rows.to_vec(),
    };
    if cfg.kind == EstimatorKind::Exact && scm.is_none() {
        return Err(Error::Config("the exact estimator needs a structural model (scm)".into()));
    }
    Ok(ConditionalEstimator {
        kind: cfg.kind,
        names: names.to_vec(),
        domains: domains.to_vec(),
        rows: kept,
        scm: if cfg.kind == EstimatorKind::Exact { scm } else { None },
        alpha: cfg.alpha,
        world_cap,
    })
}

impl ConditionalEstimator {
    pub fn rows(&self) -> &[Vec<u32>] {
        &self.rows
    }

    pub fn scm(&self) -> Option<&ViewScm> {
        self.scm.as_ref()
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.names.iter().position(|n| n == name).ok_or_else(|| Error::UnknownAttribute(name.to_string()))
    }

    fn levels(&self, pairs: &[(&str, Value)]) -> Result<Vec<(usize, u32)>> {
        pairs
            .iter()
            .map(|(n, v)| {
                let c = self.col(n)?;
                let l = self.domains[c]
                    .index_of(v.as_ref())
                    .ok_or_else(|| Error::ZeroSupport(format!("{n}={v}")))?;
                Ok((c, l as u32))
            })
            .collect()
    }

    /// Calls `visit(row, weight)` over the estimator's distribution restricted
    /// to the columns in `cols` (other columns hold level 0 under the exact
    /// backing). Frequency weights are row counts; exact weights are probabilities.
    pub fn for_each_weighted(&self, cols: &BTreeSet<usize>, mut visit: impl FnMut(&[u32], f64)) -> Result<()> {
        match &self.scm {
            None => {
                for r in &self.rows {
                    visit(r, 1.0);
                }
                Ok(())
            }
            Some(vs) => {
                let mut nodes = BTreeSet::new();
                for &c in cols {
                    let n = vs.node_of[c].ok_or_else(|| {
                        Error::ScmMismatch(format!("`{}` has no CPT in the structural model", self.names[c]))
                    })?;
                    nodes.insert(n);
                }
                let dag = vs.scm.dag();
                let seeds: Vec<usize> = nodes.iter().copied().collect();
                nodes.extend(dag.ancestors(&seeds));
                let order: Vec<usize> = vs.scm.topo_order().iter().copied().filter(|n| nodes.contains(n)).collect();
                let worlds = order
                    .iter()
                    .try_fold(1u128, |acc, &n| acc.checked_mul(vs.scm.nodes[n].domain.len() as u128))
                    .unwrap_or(u128::MAX);
                if worlds > self.world_cap {
                    return Err(Error::WorldCapExceeded { cap: self.world_cap, needed: worlds });
                }
                let mut row = vec![0u32; self.names.len()];
                enumerate_chain(vs, &order, 0, 1.0, &mut row, &mut visit)
            }
        }
    }

    /// Pr(target | given) with values given by attribute name.
    pub fn cond_prob(&self, target: &[(&str, Value)], given: &[(&str, Value)]) -> Result<f64> {
        let t = self.levels(target)?;
        let g = self.levels(given)?;
        let cols: BTreeSet<usize> = t.iter().chain(&g).map(|(c, _)| *c).collect();
        let (mut joint, mut marg) = (0.0, 0.0);
        self.for_each_weighted(&cols, |row, w| {
            if g.iter().all(|&(c, l)| row[c] == l) {
                marg += w;
                if t.iter().all(|&(c, l)| row[c] == l) {
                    joint += w;
                }
            }
        })?;
        if marg <= 0.0 {
            let desc: Vec<String> = given.iter().map(|(n, v)| format!("{n}={v}")).collect();
            return Err(Error::ZeroSupport(desc.join(", ")));
        }
        if self.scm.is_none() && self.alpha > 0.0 {
            let classes: f64 = t.iter().map(|(c, _)| self.domains[*c].len() as f64).product();
            return Ok((joint + self.alpha) / (marg + self.alpha * classes));
        }
        Ok(joint / marg)
    }

    /// Value combinations over `cols` with positive support, with their weights.
    pub fn support(&self, cols: &[usize]) -> Result<HashMap<Vec<u32>, f64>> {
        let set: BTreeSet<usize> = cols.iter().copied().collect();
        let mut out: HashMap<Vec<u32>, f64> = HashMap::new();
        self.for_each_weighted(&set, |row, w| {
            if w > 0.0 {
                *out.entry(cols.iter().map(|&c| row[c]).collect()).or_default() += w;
            }
        })?;
        Ok(out)
    }
}

fn enumerate_chain(
    vs: &ViewScm,
    order: &[usize],
    i: usize,
    p: f64,
    row: &mut [u32],
    visit: &mut impl FnMut(&[u32], f64),
) -> Result<()> {
    if p == 0.0 {
        return Ok(());
    }
    if i == order.len() {
        visit(row, p);
        return Ok(());
    }
    let col = vs.col_of[order[i]];
    let dist = vs.dist(col, row)?.to_vec();
    for (l, q) in dist.iter().enumerate() {
        row[col] = l as u32;
        enumerate_chain(vs, order, i + 1, p * q, row, visit)?;
    }
    row[col] = 0;
    Ok(())
}

/// Post-update probability of a conjunct for one tuple via the backdoor chain.
#[derive(Debug, Clone, Copy)]
pub struct PostUpdateProbQuery<'a> {
    pub post: &'a CPred,
    pub pre: &'a CPred,
    pub updates: &'a [(usize, UpdateFn)],
    pub backdoor: &'a [usize],
    /// Causal graph over the view columns (node index = column index).
    pub dag: &'a CausalDag,
}

/// Sum over backdoor values c and update values b (support only) of
/// Pr(post | pre, U=f(b), C=c) * Pr(U=b | pre, C=c) * Pr(C=c | pre).
/// Tuples outside the selection get the indicator of pre and post on their own values.
pub fn post_update_prob(
    est: &ConditionalEstimator,
    q: &PostUpdateProbQuery<'_>,
    tuple: &[u32],
    in_selection: bool,
) -> Result<f64> {
    let own = RowPair { pre: tuple, post: tuple, domains: &est.domains };
    if !in_selection {
        return Ok(if q.pre.eval(&own) && q.post.eval(&own) { 1.0 } else { 0.0 });
    }
    if !q.pre.eval(&own) {
        return Ok(0.0);
    }
    let ucols: Vec<usize> = q.updates.iter().map(|(c, _)| *c).collect();
    let targets: Vec<usize> = q.post.cols(None).into_iter().collect();
    let mut forbidden: BTreeSet<usize> = q.dag.descendants(&ucols);
    forbidden.extend(q.dag.descendants(&targets));
    forbidden.extend(&ucols);
    forbidden.extend(&targets);
    if let Some(c) = q.backdoor.iter().find(|c| forbidden.contains(c)) {
        return Err(Error::InvalidBackdoorSet(format!(
            "`{}` is an update attribute, a target, or one of their descendants",
            est.names[*c]
        )));
    }
    let affected: BTreeSet<usize> = q.dag.descendants(&ucols).into_iter().chain(ucols.iter().copied()).collect();
    if let Some(c) = q.pre.cols(None).into_iter().find(|c| affected.contains(c)) {
        return Err(Error::InvalidQuery(format!(
            "the pre part may not constrain `{}`, which the update affects",
            est.names[c]
        )));
    }
    let mut cols: BTreeSet<usize> = q.pre.cols(None);
    cols.extend(&ucols);
    cols.extend(q.backdoor);
    cols.extend(&targets);
    // Weights by (c, b) and post mass by (c, u) over rows satisfying pre.
    let mut w_cb: HashMap<(Vec<u32>, Vec<u32>), f64> = HashMap::new();
    let mut w_c: HashMap<Vec<u32>, f64> = HashMap::new();
    let mut post_mass: HashMap<(Vec<u32>, Vec<u32>), (f64, f64)> = HashMap::new();
    let mut total = 0.0;
    est.for_each_weighted(&cols, |row, w| {
        let pair = RowPair { pre: row, post: row, domains: &est.domains };
        if !q.pre.eval(&pair) {
            return;
        }
        let c: Vec<u32> = q.backdoor.iter().map(|&i| row[i]).collect();
        let b: Vec<u32> = ucols.iter().map(|&i| row[i]).collect();
        total += w;
        *w_c.entry(c.clone()).or_default() += w;
        *w_cb.entry((c.clone(), b.clone())).or_default() += w;
        let e = post_mass.entry((c, b)).or_default();
        e.0 += w;
        if q.post.eval(&pair) {
            e.1 += w;
        }
    })?;
    if total <= 0.0 {
        return Err(Error::ZeroSupport("pre part of the conjunct".into()));
    }
    let mut keys: Vec<&(Vec<u32>, Vec<u32>)> = w_cb.keys().collect();
    keys.sort();
    let mut acc = 0.0;
    for key in keys {
        let (c, b) = key;
        let wc = w_c[c];
        let p_c = wc / total;
        let p_b = w_cb[key] / wc;
        let mut fb = Vec::with_capacity(b.len());
        for ((col, f), &lvl) in q.updates.iter().zip(b) {
            fb.push(f.apply(&est.names[*col], &est.domains[*col], lvl as usize)? as u32);
        }
        let Some(&(n, hit)) = post_mass.get(&(c.clone(), fb.clone())) else {
            return Err(Error::ZeroSupport(describe(est, q.backdoor, c, &ucols, &fb)));
        };
        if n <= 0.0 {
            return Err(Error::ZeroSupport(describe(est, q.backdoor, c, &ucols, &fb)));
        }
        acc += (hit / n) * p_b * p_c;
    }
    Ok(acc)
}

fn describe(est: &ConditionalEstimator, cs: &[usize], c: &[u32], us: &[usize], u: &[u32]) -> String {
    cs.iter()
        .zip(c)
        .chain(us.iter().zip(u))
        .map(|(&col, &l)| format!("{}={}", est.names[col], est.domains[col].value(l as usize)))
        .collect::<Vec<_>>()
        .join(", ")
}
