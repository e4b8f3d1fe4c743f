//! Command handlers shared by the `hyper` binary, its REPL and the HTTP API.

pub mod api;

use std::path::Path;

use serde_json::{json, Value as Json};

use hyperq::error::ErrorClass;
use hyperq::estimator::EstimatorKind;
use hyperq::hql::{parse_query, render_query, Query};
use hyperq::howto::{prepare_howto, solve_prepared};
use hyperq::oracle::{oracle_howto, oracle_whatif};
use hyperq::session::{Session, SessionConfig};
use hyperq::{Error, Result};

/// Command-line overrides of the session file's estimator settings.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub estimator: Option<EstimatorKind>,
    pub sample: Option<usize>,
    pub alpha: Option<f64>,
}

pub fn load_session(path: &Path, o: &Overrides) -> Result<Session> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut cfg: SessionConfig =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if let Some(s) = o.seed {
        cfg.estimator.seed = s;
    }
    if let Some(k) = o.estimator {
        cfg.estimator.kind = k;
    }
    if o.sample.is_some() {
        cfg.estimator.sample = o.sample;
    }
    if let Some(a) = o.alpha {
        cfg.estimator.alpha = a;
    }
    Session::from_config(&cfg, path.parent().unwrap_or(Path::new(".")))
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e.class() {
        ErrorClass::Query => 1,
        ErrorClass::Data => 2,
        ErrorClass::Evaluation => 3,
    }
}

pub fn whatif(s: &Session, text: &str) -> Result<Json> {
    match parse_query(text)? {
        Query::WhatIf(q) => Ok(s.eval_whatif(&q)?.to_json()),
        Query::HowTo(_) => Err(Error::InvalidQuery("expected a what-if query, found HOWTOUPDATE".into())),
    }
}

/// Result of the dependency-free baseline that writes the update straight into the data.
pub fn indep(s: &Session, text: &str) -> Result<Json> {
    match parse_query(text)? {
        Query::WhatIf(q) => Ok(json!({"value": s.eval_indep_baseline(&q)?, "method": "indep"})),
        Query::HowTo(_) => Err(Error::InvalidQuery("expected a what-if query, found HOWTOUPDATE".into())),
    }
}

pub fn howto(s: &Session, text: &str) -> Result<Json> {
    match parse_query(text)? {
        Query::HowTo(q) => {
            let ctx = prepare_howto(s, &q)?;
            Ok(solve_prepared(&ctx, &q)?.to_json())
        }
        Query::WhatIf(_) => Err(Error::InvalidQuery("expected a how-to query, found UPDATE".into())),
    }
}

/// Brute-force answer for either query kind.
pub fn oracle(s: &Session, text: &str) -> Result<Json> {
    match parse_query(text)? {
        Query::WhatIf(q) => Ok(json!({"value": oracle_whatif(s, &q)?, "method": "oracle"})),
        Query::HowTo(q) => {
            let ctx = prepare_howto(s, &q)?;
            let o = oracle_howto(&ctx, &q)?;
            Ok(json!({
                "plan": hyperq::howto::plan_json(&o.plan),
                "objective": o.objective,
                "stages": o.stage_values,
                "method": "oracle",
                "diagnostics": {"plans_checked": o.plans_checked},
            }))
        }
    }
}

/// Parses and, with a session, binds and validates a query without evaluating it.
pub fn check(s: Option<&Session>, text: &str) -> Result<Json> {
    let q = parse_query(text)?;
    let kind = match &q {
        Query::WhatIf(_) => "whatif",
        Query::HowTo(_) => "howto",
    };
    let mut diagnostics = json!({"validated": false});
    if let Some(s) = s {
        match &q {
            Query::WhatIf(w) => {
                let bs: Vec<String> = w.updates.iter().map(|u| u.attr.clone()).collect();
                let ys = hyperq::session::outcome_attrs(&w.output, w.for_pred.as_ref());
                let p = s.prepare(&w.use_spec, w.when.as_ref(), w.for_pred.as_ref(), &bs, &ys)?;
                p.validate(w)?;
                diagnostics = json!({"validated": true, "rows": p.view.len(), "columns": p.view.names});
            }
            Query::HowTo(h) => {
                let ctx = prepare_howto(s, h)?;
                diagnostics = json!({
                    "validated": true,
                    "rows": ctx.prepared.view.len(),
                    "columns": ctx.prepared.view.names,
                    "candidates": ctx.grid.size(),
                });
            }
        }
    }
    Ok(json!({"ok": true, "kind": kind, "rendered": render_query(&q), "diagnostics": diagnostics}))
}

pub fn blocks(s: &Session) -> Json {
    let blocks = s.partition.to_json(&s.db);
    json!({
        "blocks": blocks,
        "diagnostics": {"blocks": s.partition.len(), "tuples": s.db.tuple_count(), "canonical": s.dag.is_none()},
    })
}

pub fn schema(s: &Session) -> Json {
    let rels: Vec<Json> = s
        .db
        .schema
        .relations
        .iter()
        .zip(&s.db.relations)
        .map(|(d, r)| {
            json!({
                "name": d.name,
                "key": d.key.iter().map(|&k| d.attrs[k].name.clone()).collect::<Vec<_>>(),
                "attrs": d.attrs.iter().map(|a| json!({
                    "name": a.name,
                    "mutable": a.mutable,
                    "numeric": a.domain.is_numeric(),
                    "domain_size": a.domain.len(),
                })).collect::<Vec<_>>(),
                "rows": r.rows.len(),
            })
        })
        .collect();
    json!({"relations": rels, "diagnostics": {"tuples": s.db.tuple_count()}})
}

pub fn dag(s: &Session) -> Json {
    match &s.dag {
        Some(d) => {
            let edges: Vec<Json> = d
                .edges
                .iter()
                .map(|e| json!({"from": d.nodes[e.from], "to": d.nodes[e.to], "cross_tuple": e.cross_tuple, "group_by": e.group_by}))
                .collect();
            json!({"nodes": d.nodes, "edges": edges, "diagnostics": {"canonical": false, "nodes": d.len(), "edges": d.edges.len()}})
        }
        None => json!({"nodes": [], "edges": [], "diagnostics": {"canonical": true, "nodes": 0, "edges": 0}}),
    }
}

/// Compact JSON, as printed by the CLI and served over HTTP.
pub fn render(v: &Json) -> String {
    serde_json::to_string(v).expect("JSON values always serialize")
}
