use serde::{Deserialize, Serialize};

use crate::agg::Aggregate;
use crate::causal::dag::{CausalDag, Edge};
use crate::datamodel::Database;
use crate::error::{Error, Result};
use crate::value::DomainSpec;

/// Config form: `{child, agg, source: "Rel.Attr", via: "fk attr", domain?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryConfig {
    pub child: String,
    pub agg: Aggregate,
    pub source: String,
    pub via: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainSpec>,
}

/// Resolved summary function: `child = agg(source_rel.source_attr)` over the
/// source tuples whose `via` foreign key points at the summarized tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct SummarySpec {
    pub child: String,
    pub agg: Aggregate,
    pub source_rel: usize,
    pub source_attr: usize,
    pub via: usize,
    pub target_rel: usize,
    pub domain: Option<DomainSpec>,
}

impl SummarySpec {
    pub fn resolve(cfg: &SummaryConfig, db: &Database) -> Result<SummarySpec> {
        let schema = &db.schema;
        let (source_rel, source_attr) =
            schema.resolve(&cfg.source).ok_or_else(|| Error::UnknownAttribute(cfg.source.clone()))?;
        let decl = &schema.relations[source_rel];
        let via = decl
            .attr_index(&cfg.via)
            .ok_or_else(|| Error::UnknownAttribute(format!("{}.{}", decl.name, cfg.via)))?;
        let fk = decl
            .fks
            .iter()
            .find(|fk| fk.attr == via)
            .ok_or_else(|| Error::Config(format!("`{}.{}` is not a foreign key", decl.name, cfg.via)))?;
        if cfg.agg != Aggregate::Count && !decl.attrs[source_attr].domain.is_numeric() {
            return Err(Error::TypeMismatch(format!("{} over categorical `{}`", cfg.agg, cfg.source)));
        }
        Ok(SummarySpec {
            child: cfg.child.clone(),
            agg: cfg.agg,
            source_rel,
            source_attr,
            via,
            target_rel: fk.target,
            domain: cfg.domain.clone(),
        })
    }

    pub fn source_name(&self, db: &Database) -> String {
        let r = &db.schema.relations[self.source_rel];
        format!("{}.{}", r.name, r.attrs[self.source_attr].name)
    }

    /// Values of the source attribute over the group joined to `row` of the target relation.
    pub fn group_values(&self, db: &Database, row: usize) -> Vec<f64> {
        let target_key = db.schema.relations[self.target_rel].key[0];
        let key = db.value(self.target_rel, row, target_key);
        let domain = &db.schema.relations[self.source_rel].attrs[self.source_attr].domain;
        db.relations[self.source_rel]
            .rows
            .iter()
            .enumerate()
            .filter(|(j, _)| db.value(self.source_rel, *j, self.via) == key)
            .map(|(_, r)| domain.num(r[self.source_attr] as usize).unwrap_or(1.0))
            .collect()
    }
}

/// Applies a summary function to one tuple of the summarized relation.
pub fn summarize(db: &Database, spec: &SummarySpec, row: usize) -> Result<f64> {
    let values = spec.group_values(db, row);
    if values.is_empty() {
        return Err(Error::EmptyJoinGroup {
            relation: db.schema.relations[spec.target_rel].name.clone(),
            key: db.key_string(spec.target_rel, &db.relations[spec.target_rel].rows[row]),
        });
    }
    Ok(spec.agg.apply(&values).expect("non-empty group"))
}

/// Adds one node per summary. The new node becomes a child of its source
/// attribute and of the source's parents, and takes over the source's former
/// children (the source loses those edges).
pub fn augment_with_aggregates(dag: &CausalDag, specs: &[(String, String)]) -> Result<CausalDag> {
    let mut out = dag.clone();
    for (child, source) in specs {
        let s = out.index(source).ok_or_else(|| Error::DanglingAttribute(source.clone()))?;
        if out.index(child).is_some() {
            return Err(Error::Config(format!("summary node `{child}` already exists")));
        }
        let a = out.add_node(child);
        let parents: Vec<usize> = out.parents(s).to_vec();
        let former: Vec<Edge> = out.edges.iter().filter(|e| e.from == s).cloned().collect();
        out.remove_edges_where(|e| e.from == s);
        out.add_edge(Edge { from: s, to: a, cross_tuple: false, group_by: None });
        for p in parents {
            out.add_edge(Edge { from: p, to: a, cross_tuple: false, group_by: None });
        }
        for e in former {
            out.add_edge(Edge { from: a, ..e });
        }
        out.topo_order()?;
    }
    Ok(out)
}
