//! A loaded database plus causal model, and query evaluation entry points.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::agg::Aggregate;
use crate::blocks::{decompose, BlockPartition};
use crate::causal::dag::{canonical_dag, CausalDag, DagConfig, Edge};
use crate::causal::ground::{ground, GroundCausalGraph};
use crate::causal::scm::{Scm, ScmConfig};
use crate::causal::summary::SummaryConfig;
use crate::datamodel::{apply_update_directly, load_database, read_schema_config, Database, HypotheticalUpdate, TupleId, UpdateFn};
use crate::engine::{evaluate, resolve_when, AvgDenominator, BoundQuery, Conj, EvalInput, WhatIfResult};
use crate::error::{Error, Result};
use crate::estimator::{fit, ConditionalEstimator, EstimatorConfig, EstimatorKind, ViewScm};
use crate::fsum::ExactSum;
use crate::hql::ast::{Output, Pred, Side, UseSpec, WhatIfQuery};
use crate::hql::eval::{compile, CPred, Layout, RowPair};
use crate::hql::normalize::{normalize_for, DEFAULT_ATOM_CAP};
use crate::hql::validate::{validate_whatif, Binding};
use crate::howto::CandidateConfig;
use crate::view::{build_relevant_view, ColumnSource, EmptyGroups, RelevantView};

pub const DEFAULT_WORLD_CAP: u128 = 10_000_000;

/// Evaluation settings shared by every query of a session.
#[derive(Debug, Clone)]
pub struct Settings {
    pub estimator: EstimatorConfig,
    pub avg_denominator: AvgDenominator,
    pub empty_groups: EmptyGroups,
    pub world_cap: u128,
    pub atom_cap: usize,
    pub candidates: BTreeMap<String, CandidateConfig>,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            estimator: EstimatorConfig::default(),
            avg_denominator: AvgDenominator::default(),
            empty_groups: EmptyGroups::default(),
            world_cap: DEFAULT_WORLD_CAP,
            atom_cap: DEFAULT_ATOM_CAP,
            candidates: BTreeMap::new(),
        }
    }
}

fn default_dag() -> String {
    "canonical".into()
}

/// On-disk session description; relative paths resolve against the file's directory.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub schema: PathBuf,
    pub data: BTreeMap<String, PathBuf>,
    /// Path of a DAG config, or `canonical`.
    #[serde(default = "default_dag")]
    pub dag: String,
    #[serde(default)]
    pub scm: Option<PathBuf>,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub avg_denominator: AvgDenominator,
    #[serde(default)]
    pub empty_groups: EmptyGroups,
    #[serde(default)]
    pub world_cap: Option<u64>,
    #[serde(default)]
    pub atom_cap: Option<usize>,
    #[serde(default)]
    pub candidates: BTreeMap<String, CandidateConfig>,
}

#[derive(Debug, Clone)]
pub struct Session {
    pub db: Database,
    /// Database-level causal graph; `None` selects the canonical model per query.
    pub dag: Option<CausalDag>,
    pub summaries: Vec<SummaryConfig>,
    pub scm: Option<ScmConfig>,
    pub settings: Settings,
    pub ground: Option<GroundCausalGraph>,
    pub partition: BlockPartition,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

impl Session {
    pub fn load(path: &Path) -> Result<Session> {
        let cfg: SessionConfig = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_config(&cfg, base)
    }

    pub fn from_config(cfg: &SessionConfig, base: &Path) -> Result<Session> {
        let schema = read_schema_config(&base.join(&cfg.schema))?;
        let paths: HashMap<String, PathBuf> = cfg.data.iter().map(|(k, v)| (k.clone(), base.join(v))).collect();
        let db = load_database(&schema, &paths)?;
        let (dag, summaries) = if cfg.dag == "canonical" {
            (None, Vec::new())
        } else {
            let dc: DagConfig = read_json(&base.join(&cfg.dag))?;
            (Some(CausalDag::from_config(&dc)?), dc.summaries)
        };
        let scm = match &cfg.scm {
            Some(p) => Some(read_json::<ScmConfig>(&base.join(p))?),
            None => None,
        };
        let settings = Settings {
            estimator: cfg.estimator.clone(),
            avg_denominator: cfg.avg_denominator,
            empty_groups: cfg.empty_groups,
            world_cap: cfg.world_cap.map_or(DEFAULT_WORLD_CAP, u128::from),
            atom_cap: cfg.atom_cap.unwrap_or(DEFAULT_ATOM_CAP),
            candidates: cfg.candidates.clone(),
        };
        Session::new(db, dag, summaries, scm, settings)
    }

    pub fn new(
        db: Database,
        dag: Option<CausalDag>,
        summaries: Vec<SummaryConfig>,
        scm: Option<ScmConfig>,
        settings: Settings,
    ) -> Result<Session> {
        let (ground_graph, partition) = match &dag {
            Some(d) => {
                d.validate_against(&db.schema)?;
                let g = ground(d, &db)?;
                let p = decompose(&g, &db);
                (Some(g), p)
            }
            None => (None, BlockPartition::from_blocks(db.tuple_ids().map(|t| vec![t]).collect())),
        };
        Ok(Session { db, dag, summaries, scm, settings, ground: ground_graph, partition })
    }

    pub fn view(&self, use_spec: &UseSpec) -> Result<RelevantView> {
        build_relevant_view(use_spec, &self.db, &self.summaries, self.settings.empty_groups)
    }

    /// View-level causal graph. Without a database graph the canonical model
    /// over the non-key columns is used, with `bs` as treatments and `ys` as outcomes.
    pub fn view_dag(&self, view: &RelevantView, bs: &[String], ys: &[String]) -> Result<CausalDag> {
        match &self.dag {
            Some(d) => view.view_dag(&self.db, d),
            None => {
                let attrs: Vec<String> = view
                    .columns
                    .iter()
                    .filter(|c| !c.key)
                    .map(|c| c.name.clone())
                    .collect();
                let bs: Vec<String> = bs.iter().filter(|b| attrs.contains(b)).cloned().collect();
                let ys: Vec<String> = ys.iter().filter(|y| attrs.contains(y) && !bs.contains(y)).cloned().collect();
                let canon = canonical_dag(&attrs, &bs, &ys);
                let mut out = CausalDag::empty(view.names.clone());
                for e in &canon.edges {
                    let from = out.index(&canon.nodes[e.from]).unwrap();
                    let to = out.index(&canon.nodes[e.to]).unwrap();
                    out.add_edge(Edge { from, to, cross_tuple: false, group_by: None });
                }
                Ok(out)
            }
        }
    }

    /// Builds the view, its causal graph, estimator and block layout, and
    /// compiles the WHEN and FOR predicates.
    pub fn prepare(
        &self,
        use_spec: &UseSpec,
        when: Option<&Pred>,
        for_pred: Option<&Pred>,
        bs: &[String],
        ys: &[String],
    ) -> Result<Prepared> {
        let view = self.view(use_spec)?;
        let dag = self.view_dag(&view, bs, ys)?;
        let layout = Layout { names: &view.names, domains: &view.domains };
        let updatable: Vec<bool> = view.columns.iter().map(|c| c.updatable).collect();
        let binding = Binding { names: &view.names, domains: &view.domains, updatable: &updatable };
        if let Some(w) = when {
            crate::hql::validate::check_pred(w, binding)?;
        }
        if let Some(f) = for_pred {
            crate::hql::validate::check_pred(f, binding)?;
        }
        let when_c = when.map(|w| compile(w, layout)).transpose()?;
        let selection = resolve_when(when_c.as_ref(), &view.rows, &view.domains);
        let raw_for = for_pred.map(|f| compile(f, layout)).transpose()?;
        let dnf = match for_pred {
            Some(f) => normalize_for(f, layout, self.settings.atom_cap)?,
            None => crate::hql::normalize::DisjointDnf::always(),
        };
        let conjunct_text = dnf.render();
        let conjuncts = dnf
            .conjuncts
            .iter()
            .map(|c| Ok(Conj { pre: compile(&c.pre, layout)?, post: compile(&c.post, layout)? }))
            .collect::<Result<Vec<_>>>()?;
        let vscm = self.scm.as_ref().map(|cfg| bind_scm(cfg, &view, &dag)).transpose()?;
        let scm_for_est = if self.settings.estimator.kind == EstimatorKind::Exact { vscm.clone() } else { None };
        let est = fit(&view.names, &view.domains, &view.rows, scm_for_est, &self.settings.estimator, self.settings.world_cap)?;
        let (row_block, block_ids) = self.row_blocks(&view);
        Ok(Prepared { view, dag, est, vscm, row_block, block_ids, selection, raw_for, conjuncts, conjunct_text, settings: self.settings.clone() })
    }

    /// Block index per view row (block of the row's own tuple), with block ids
    /// numbered in partition order.
    fn row_blocks(&self, view: &RelevantView) -> (Vec<usize>, Vec<String>) {
        let mut local: BTreeMap<usize, usize> = BTreeMap::new();
        let raw: Vec<usize> = view
            .row_tuples
            .iter()
            .map(|&row| self.partition.block_of(TupleId { relation: view.relation, row }).unwrap_or(usize::MAX))
            .collect();
        for b in &raw {
            local.insert(*b, 0);
        }
        let mut ids = Vec::with_capacity(local.len());
        for (i, (b, slot)) in local.iter_mut().enumerate() {
            *slot = i;
            ids.push(if *b == usize::MAX { "unassigned".into() } else { self.partition.block_id(&self.db, *b) });
        }
        (raw.iter().map(|b| local[b]).collect(), ids)
    }

    pub fn eval_whatif(&self, q: &WhatIfQuery) -> Result<WhatIfResult> {
        let bs: Vec<String> = q.updates.iter().map(|u| u.attr.clone()).collect();
        let ys = outcome_attrs(&q.output, q.for_pred.as_ref());
        let prepared = self.prepare(&q.use_spec, q.when.as_ref(), q.for_pred.as_ref(), &bs, &ys)?;
        prepared.validate(q)?;
        let updates = prepared.bind_updates(q.updates.iter().map(|u| (u.attr.as_str(), u.func.clone())))?;
        let mut res = prepared.run(&updates, &q.output)?;
        if self.dag.as_ref().is_some_and(|d| prepared.view.has_cross_tuple_inputs(&self.db, d)) {
            res.warnings.push("cross-tuple edges of the causal graph are not modeled at view level".into());
        }
        Ok(res)
    }

    /// Evaluates the query as if every hypothetical update were written
    /// directly into the data, with no causal propagation.
    pub fn eval_indep_baseline(&self, q: &WhatIfQuery) -> Result<f64> {
        let view = self.view(&q.use_spec)?;
        let dag = self.view_dag(&view, &[], &[])?;
        let updatable: Vec<bool> = view.columns.iter().map(|c| c.updatable).collect();
        let binding = Binding { names: &view.names, domains: &view.domains, updatable: &updatable };
        validate_whatif(q, binding, &dag)?;
        let layout = Layout { names: &view.names, domains: &view.domains };
        let when = q.when.as_ref().map(|w| compile(w, layout)).transpose()?;
        let selection = resolve_when(when.as_ref(), &view.rows, &view.domains);
        let rel_name = self.db.schema.relations[view.relation].name.clone();
        let rows: BTreeSet<usize> =
            view.row_tuples.iter().zip(&selection).filter(|(_, s)| **s).map(|(r, _)| *r).collect();
        let mut db = self.db.clone();
        for u in &q.updates {
            let col = view.col(&u.attr).ok_or_else(|| Error::UnknownAttribute(u.attr.clone()))?;
            let ColumnSource::Attr { rel, attr } = view.columns[col].source else {
                return Err(Error::ImmutableUpdateTarget(u.attr.clone()));
            };
            let upd = HypotheticalUpdate {
                relation: rel_name.clone(),
                attr: self.db.schema.relations[rel].attrs[attr].name.clone(),
                func: u.func.clone(),
                selection: rows.clone(),
            };
            db = apply_update_directly(&db, &upd)?;
        }
        let post_view = build_relevant_view(&q.use_spec, &db, &self.summaries, self.settings.empty_groups)?;
        let post_by_tuple: HashMap<usize, &Vec<u32>> =
            post_view.row_tuples.iter().copied().zip(post_view.rows.iter()).collect();
        let for_c = q.for_pred.as_ref().map(|f| compile(f, layout)).transpose()?;
        let y = q.output.attr().map(|a| view.col(a).unwrap());
        let (mut count, mut sum) = (ExactSum::new(), ExactSum::new());
        for (r, pre) in view.rows.iter().enumerate() {
            let post = post_by_tuple.get(&view.row_tuples[r]).copied().unwrap_or(pre);
            let pair = RowPair { pre, post, domains: &view.domains };
            if for_c.as_ref().is_none_or(|f| f.eval(&pair)) {
                count.add(1.0);
                if let Some(c) = y {
                    sum.add(view.domains[c].num(post[c] as usize).unwrap_or(0.0));
                }
            }
        }
        let (count, sum) = (count.value(), sum.value());
        Ok(match q.output.agg {
            Aggregate::Count => count,
            Aggregate::Sum => sum,
            Aggregate::Avg => {
                let d = match self.settings.avg_denominator {
                    AvgDenominator::Expected => count,
                    AvgDenominator::Fixed => view.len() as f64,
                };
                if d == 0.0 {
                    0.0
                } else {
                    sum / d
                }
            }
        })
    }
}

/// Binds a structural model to the view columns and checks it against the view graph.
pub fn bind_scm(cfg: &ScmConfig, view: &RelevantView, dag: &CausalDag) -> Result<ViewScm> {
    let pairs: Vec<(String, crate::value::Domain)> =
        view.names.iter().cloned().zip(view.domains.iter().cloned()).collect();
    let scm = Scm::bind(cfg, &pairs)?;
    scm.check_matches(dag)?;
    ViewScm::new(scm, &view.names)
}

/// Attributes whose post-update values a query reads.
pub fn outcome_attrs(output: &Output, for_pred: Option<&Pred>) -> Vec<String> {
    let mut ys: BTreeSet<String> = for_pred.map(|f| f.attr_names(Side::Post)).unwrap_or_default();
    if let Some(a) = output.attr() {
        ys.insert(a.to_string());
    }
    ys.into_iter().collect()
}

/// A query context over one relevant view, reusable across update sets.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub view: RelevantView,
    pub dag: CausalDag,
    pub est: ConditionalEstimator,
    /// Structural model bound to the view columns, when the session has one.
    pub vscm: Option<ViewScm>,
    pub row_block: Vec<usize>,
    pub block_ids: Vec<String>,
    pub selection: Vec<bool>,
    /// FOR predicate as written (used by the oracle).
    pub raw_for: Option<CPred>,
    pub conjuncts: Vec<Conj>,
    pub conjunct_text: Vec<String>,
    pub settings: Settings,
}

impl Prepared {
    pub fn updatable(&self) -> Vec<bool> {
        self.view.columns.iter().map(|c| c.updatable).collect()
    }

    pub fn layout(&self) -> Layout<'_> {
        Layout { names: &self.view.names, domains: &self.view.domains }
    }

    pub fn validate(&self, q: &WhatIfQuery) -> Result<()> {
        let upd = self.updatable();
        let b = Binding { names: &self.view.names, domains: &self.view.domains, updatable: &upd };
        validate_whatif(q, b, &self.dag)
    }

    pub fn bind_updates<'a>(&self, updates: impl IntoIterator<Item = (&'a str, UpdateFn)>) -> Result<Vec<(usize, UpdateFn)>> {
        updates
            .into_iter()
            .map(|(a, f)| Ok((self.view.col(a).ok_or_else(|| Error::UnknownAttribute(a.to_string()))?, f)))
            .collect()
    }

    pub fn input(&self) -> EvalInput<'_> {
        EvalInput {
            names: &self.view.names,
            domains: &self.view.domains,
            rows: &self.view.rows,
            dag: &self.dag,
            est: &self.est,
            row_block: &self.row_block,
            block_ids: &self.block_ids,
        }
    }

    pub fn bound(&self, updates: &[(usize, UpdateFn)], output: &Output) -> Result<BoundQuery> {
        let y = match output.attr() {
            Some(a) => Some(self.view.col(a).ok_or_else(|| Error::UnknownAttribute(a.to_string()))?),
            None => None,
        };
        Ok(BoundQuery {
            selection: self.selection.clone(),
            updates: updates.to_vec(),
            agg: output.agg,
            y,
            conjuncts: self.conjuncts.clone(),
            conjunct_text: self.conjunct_text.clone(),
            avg_denominator: self.settings.avg_denominator,
        })
    }

    pub fn run(&self, updates: &[(usize, UpdateFn)], output: &Output) -> Result<WhatIfResult> {
        self.run_with_blocks(updates, output, &self.row_block, &self.block_ids)
    }

    /// Evaluates with an explicit row-to-block assignment.
    pub fn run_with_blocks(
        &self,
        updates: &[(usize, UpdateFn)],
        output: &Output,
        row_block: &[usize],
        block_ids: &[String],
    ) -> Result<WhatIfResult> {
        let q = self.bound(updates, output)?;
        let input = EvalInput { row_block, block_ids, ..self.input() };
        let mut res = evaluate(&input, &q)?;
        res.diagnostics.skipped_view_rows = self.view.skipped.clone();
        Ok(res)
    }

    /// Evaluates with every row in a single block.
    pub fn run_single_block(&self, updates: &[(usize, UpdateFn)], output: &Output) -> Result<WhatIfResult> {
        let rb = vec![0; self.view.len()];
        self.run_with_blocks(updates, output, &rb, &["all".to_string()])
    }
}
