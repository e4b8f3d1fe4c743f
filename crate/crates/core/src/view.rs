//! Relevant views: the single table defined by a query's USE clause, one row
//! per tuple of the updated relation.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::causal::dag::CausalDag;
use crate::causal::summary::{augment_with_aggregates, summarize, SummaryConfig, SummarySpec};
use crate::datamodel::{Database, TupleId};
use crate::error::{Error, Result};
use crate::hql::ast::{ColRef, SelectItem, UseSpec};
use crate::value::{same_point, Domain};

/// Policy for summarized tuples whose join group is empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmptyGroups {
    #[default]
    Skip,
    Error,
}

impl std::str::FromStr for EmptyGroups {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "skip" => Ok(EmptyGroups::Skip),
            "error" => Ok(EmptyGroups::Error),
            other => Err(Error::Config(format!("empty-groups must be skip or error, not `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnSource {
    /// Attribute of the view relation or of a relation it references.
    Attr { rel: usize, attr: usize },
    Summary(SummarySpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewColumn {
    pub name: String,
    pub source: ColumnSource,
    /// Attribute of the view relation that updates may target.
    pub updatable: bool,
    pub key: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelevantView {
    pub name: String,
    /// Relation whose tuples the rows stand for.
    pub relation: usize,
    pub columns: Vec<ViewColumn>,
    pub names: Vec<String>,
    pub domains: Vec<Domain>,
    pub rows: Vec<Vec<u32>>,
    /// Row index in `relation` for each view row.
    pub row_tuples: Vec<usize>,
    /// Every database tuple folded into each view row.
    pub members: Vec<Vec<TupleId>>,
    pub labels: Vec<String>,
    /// Labels of relation tuples left out because a summary group was empty.
    pub skipped: Vec<String>,
}

impl RelevantView {
    pub fn col(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Qualified database attribute (`Rel.Attr`) behind an attribute column.
    pub fn qualified(&self, db: &Database, col: usize) -> Option<String> {
        match self.columns[col].source {
            ColumnSource::Attr { rel, attr } => {
                let r = &db.schema.relations[rel];
                Some(format!("{}.{}", r.name, r.attrs[attr].name))
            }
            ColumnSource::Summary(_) => None,
        }
    }

    /// Causal graph over view columns: summaries become aggregate nodes, the
    /// graph is projected onto view columns, and cross-tuple flags are dropped.
    pub fn view_dag(&self, db: &Database, dag: &CausalDag) -> Result<CausalDag> {
        let mut pairs = Vec::new();
        for c in &self.columns {
            if let ColumnSource::Summary(spec) = &c.source {
                let src = spec.source_name(db);
                if dag.index(&src).is_some() {
                    pairs.push((c.name.clone(), src));
                }
            }
        }
        let augmented = augment_with_aggregates(dag, &pairs)?;
        let mut rename: HashMap<String, String> = HashMap::new();
        for (i, c) in self.columns.iter().enumerate() {
            match &c.source {
                ColumnSource::Attr { .. } => {
                    rename.insert(self.qualified(db, i).unwrap(), c.name.clone());
                }
                ColumnSource::Summary(_) => {
                    rename.insert(c.name.clone(), c.name.clone());
                }
            }
        }
        let projected = augmented.project(&|n: &str| rename.get(n).cloned())?;
        let mut out = CausalDag::empty(Vec::new());
        for name in &self.names {
            out.add_node(name);
        }
        for e in &projected.edges {
            let from = out.index(&projected.nodes[e.from]).unwrap();
            let to = out.index(&projected.nodes[e.to]).unwrap();
            out.add_edge(crate::causal::dag::Edge { from, to, cross_tuple: false, group_by: None });
        }
        out.topo_order()?;
        Ok(out)
    }

    /// Whether the database graph has cross-tuple edges among attributes that
    /// feed this view (their effects are not modeled at view level).
    pub fn has_cross_tuple_inputs(&self, db: &Database, dag: &CausalDag) -> bool {
        let rels: BTreeSet<usize> = self.members.iter().flatten().map(|t| t.relation).collect();
        dag.edges.iter().any(|e| {
            e.cross_tuple
                && db.schema.resolve(&dag.nodes[e.to]).is_some_and(|(r, _)| rels.contains(&r))
        })
    }
}

struct FromScope {
    /// (alias or name, relation index)
    entries: Vec<(String, usize)>,
}

impl FromScope {
    fn resolve(&self, db: &Database, c: &ColRef) -> Result<(usize, usize)> {
        let rels: Vec<usize> = match &c.qualifier {
            Some(q) => {
                let r = self
                    .entries
                    .iter()
                    .find(|(n, _)| n == q)
                    .map(|(_, r)| *r)
                    .ok_or_else(|| Error::InvalidQuery(format!("unknown relation or alias `{q}`")))?;
                vec![r]
            }
            None => self.entries.iter().map(|(_, r)| *r).collect(),
        };
        let hits: BTreeSet<(usize, usize)> = rels
            .iter()
            .filter_map(|&r| db.schema.relations[r].attr_index(&c.name).map(|a| (r, a)))
            .collect();
        match hits.len() {
            0 => Err(Error::UnknownAttribute(match &c.qualifier {
                Some(q) => format!("{q}.{}", c.name),
                None => c.name.clone(),
            })),
            1 => Ok(hits.into_iter().next().unwrap()),
            _ => Err(Error::InvalidQuery(format!("column `{}` is ambiguous", c.name))),
        }
    }
}

enum Link {
    /// `rel` references the view relation through fk attribute `via` (1:n).
    Many { via: usize },
    /// The view relation references `rel` through one of its fk attributes (n:1).
    One,
}

/// Builds the relevant view of a USE clause.
pub fn build_relevant_view(
    use_spec: &UseSpec,
    db: &Database,
    summaries: &[SummaryConfig],
    empty: EmptyGroups,
) -> Result<RelevantView> {
    match use_spec {
        UseSpec::Relation(name) => {
            let (ri, decl, rel) = db
                .relation(name)
                .map_err(|_| Error::InvalidQuery(format!("unknown relation `{name}`")))?;
            let columns: Vec<ViewColumn> = decl
                .attrs
                .iter()
                .enumerate()
                .map(|(ai, a)| ViewColumn {
                    name: a.name.clone(),
                    source: ColumnSource::Attr { rel: ri, attr: ai },
                    updatable: a.update_eligible(),
                    key: a.key_part,
                })
                .collect();
            Ok(RelevantView {
                name: name.clone(),
                relation: ri,
                names: columns.iter().map(|c| c.name.clone()).collect(),
                domains: decl.attrs.iter().map(|a| a.domain.clone()).collect(),
                columns,
                rows: rel.rows.clone(),
                row_tuples: (0..rel.rows.len()).collect(),
                members: (0..rel.rows.len()).map(|row| vec![TupleId { relation: ri, row }]).collect(),
                labels: (0..rel.rows.len()).map(|row| db.key_string(ri, &rel.rows[row])).collect(),
                skipped: Vec::new(),
            })
        }
        UseSpec::View { name, select } => {
            let mut scope = FromScope { entries: Vec::new() };
            for f in &select.from {
                let ri = db
                    .schema
                    .relation_index(&f.relation)
                    .ok_or_else(|| Error::InvalidQuery(format!("unknown relation `{}`", f.relation)))?;
                let label = f.alias.clone().unwrap_or_else(|| f.relation.clone());
                if scope.entries.iter().any(|(n, _)| *n == label) {
                    return Err(Error::InvalidQuery(format!("`{label}` appears twice in FROM")));
                }
                scope.entries.push((label, ri));
            }
            let view_rel = if let Some(g) = select.group_by.first() {
                scope.resolve(db, g)?.0
            } else {
                scope.entries[0].1
            };
            let vdecl = &db.schema.relations[view_rel];
            let mut grouped = BTreeSet::new();
            for g in &select.group_by {
                let (r, a) = scope.resolve(db, g)?;
                if r != view_rel {
                    return Err(Error::InvalidQuery("GROUP BY columns must come from one relation".into()));
                }
                grouped.insert(a);
            }
            if !select.group_by.is_empty() && !vdecl.key.iter().all(|k| grouped.contains(k)) {
                return Err(Error::InvalidQuery(format!("GROUP BY must include the key of `{}`", vdecl.name)));
            }
            // Links from each joined relation to the view relation.
            let mut links: BTreeMap<usize, Link> = BTreeMap::new();
            for (a, b) in &select.joins {
                let (ra, aa) = scope.resolve(db, a)?;
                let (rb, ab) = scope.resolve(db, b)?;
                let (other, link) = join_link(db, view_rel, (ra, aa), (rb, ab))?;
                links.insert(other, link);
            }
            for (_, r) in &scope.entries {
                if *r != view_rel && !links.contains_key(r) {
                    return Err(Error::InvalidQuery(format!(
                        "relation `{}` is not joined to `{}` by a foreign key",
                        db.schema.relations[*r].name, vdecl.name
                    )));
                }
            }
            let mut columns = Vec::new();
            for item in &select.items {
                match item {
                    SelectItem::Col { col, alias } => {
                        let (r, a) = scope.resolve(db, col)?;
                        let attr = &db.schema.relations[r].attrs[a];
                        if r == view_rel {
                            if !select.group_by.is_empty() && !grouped.contains(&a) {
                                return Err(Error::InvalidQuery(format!(
                                    "column `{}` must appear in GROUP BY or be aggregated",
                                    col.name
                                )));
                            }
                        } else if !matches!(links.get(&r), Some(Link::One)) {
                            return Err(Error::InvalidQuery(format!("column `{}` must be aggregated", col.name)));
                        }
                        columns.push(ViewColumn {
                            name: alias.clone().unwrap_or_else(|| attr.name.clone()),
                            source: ColumnSource::Attr { rel: r, attr: a },
                            updatable: r == view_rel && attr.update_eligible(),
                            key: r == view_rel && attr.key_part,
                        });
                    }
                    SelectItem::Agg { agg, col, alias } => {
                        if select.group_by.is_empty() {
                            return Err(Error::InvalidQuery("aggregates need GROUP BY".into()));
                        }
                        let (r, a) = match col {
                            Some(c) => scope.resolve(db, c)?,
                            None => {
                                let many: Vec<usize> = links
                                    .iter()
                                    .filter(|(_, l)| matches!(l, Link::Many { .. }))
                                    .map(|(r, _)| *r)
                                    .collect();
                                if many.len() != 1 {
                                    return Err(Error::InvalidQuery("COUNT(*) needs exactly one joined relation".into()));
                                }
                                let Some(Link::Many { via }) = links.get(&many[0]) else { unreachable!() };
                                (many[0], *via)
                            }
                        };
                        let Some(Link::Many { via }) = links.get(&r) else {
                            return Err(Error::InvalidQuery(format!(
                                "{agg} must range over a relation referencing `{}`",
                                vdecl.name
                            )));
                        };
                        let sdecl = &db.schema.relations[r];
                        let alias_name = alias.clone().unwrap_or_else(|| sdecl.attrs[a].name.clone());
                        let source = format!("{}.{}", sdecl.name, sdecl.attrs[a].name);
                        let declared = summaries
                            .iter()
                            .find(|s| s.child == alias_name)
                            .or_else(|| summaries.iter().find(|s| s.source == source && s.agg == *agg))
                            .and_then(|s| s.domain.clone());
                        let cfg = SummaryConfig {
                            child: alias_name.clone(),
                            agg: *agg,
                            source,
                            via: sdecl.attrs[*via].name.clone(),
                            domain: declared,
                        };
                        let spec = SummarySpec::resolve(&cfg, db)?;
                        columns.push(ViewColumn {
                            name: alias_name,
                            source: ColumnSource::Summary(spec),
                            updatable: false,
                            key: false,
                        });
                    }
                }
            }
            let mut seen = BTreeSet::new();
            for c in &columns {
                if !seen.insert(c.name.clone()) {
                    return Err(Error::InvalidQuery(format!("view column `{}` defined twice", c.name)));
                }
            }
            materialize(
                name.clone().unwrap_or_else(|| "view".into()),
                db,
                view_rel,
                columns,
                &links,
                empty,
            )
        }
    }
}

fn join_link(db: &Database, view_rel: usize, a: (usize, usize), b: (usize, usize)) -> Result<(usize, Link)> {
    for ((fr, fa), (tr, ta)) in [(a, b), (b, a)] {
        let is_fk = db.schema.relations[fr].fks.iter().any(|fk| fk.attr == fa && fk.target == tr);
        let is_key = db.schema.relations[tr].key == vec![ta];
        if is_fk && is_key {
            if tr == view_rel && fr != view_rel {
                return Ok((fr, Link::Many { via: fa }));
            }
            if fr == view_rel && tr != view_rel {
                return Ok((tr, Link::One));
            }
        }
    }
    Err(Error::InvalidQuery("join conditions must follow a foreign key of the view relation".into()))
}

fn materialize(
    name: String,
    db: &Database,
    view_rel: usize,
    columns: Vec<ViewColumn>,
    links: &BTreeMap<usize, Link>,
    empty: EmptyGroups,
) -> Result<RelevantView> {
    let nrows = db.relations[view_rel].rows.len();
    // Summary values per row, then domains from observed and declared values.
    let mut raw: Vec<Vec<Option<f64>>> = vec![Vec::with_capacity(nrows); columns.len()];
    let mut keep = vec![true; nrows];
    let mut skipped = Vec::new();
    for (ci, c) in columns.iter().enumerate() {
        if let ColumnSource::Summary(spec) = &c.source {
            for (row, k) in keep.iter_mut().enumerate() {
                match summarize(db, spec, row) {
                    Ok(v) => raw[ci].push(Some(v)),
                    Err(e @ Error::EmptyJoinGroup { .. }) => {
                        if empty == EmptyGroups::Error {
                            return Err(e);
                        }
                        raw[ci].push(None);
                        *k = false;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }
    for (row, k) in keep.iter().enumerate() {
        if !k {
            skipped.push(db.key_string(view_rel, &db.relations[view_rel].rows[row]));
        }
    }
    let mut domains = Vec::with_capacity(columns.len());
    for (ci, c) in columns.iter().enumerate() {
        match &c.source {
            ColumnSource::Attr { rel, attr } => domains.push(db.schema.relations[*rel].attrs[*attr].domain.clone()),
            ColumnSource::Summary(spec) => {
                let mut points: Vec<f64> = raw[ci].iter().zip(&keep).filter(|(_, k)| **k).filter_map(|(v, _)| *v).collect();
                if let Some(d) = &spec.domain {
                    match d.build()? {
                        Domain::Numeric(p) => points.extend(p),
                        Domain::Categorical(_) => {
                            return Err(Error::Config(format!("summary `{}` needs a numeric domain", c.name)))
                        }
                    }
                }
                points.sort_by(f64::total_cmp);
                points.dedup_by(|a, b| same_point(*a, *b));
                if points.is_empty() {
                    points.push(0.0);
                }
                domains.push(Domain::numeric(points)?);
            }
        }
    }
    let mut rows = Vec::new();
    let mut row_tuples = Vec::new();
    let mut members = Vec::new();
    let mut labels = Vec::new();
    for row in (0..nrows).filter(|&r| keep[r]) {
        let mut levels = Vec::with_capacity(columns.len());
        for (ci, c) in columns.iter().enumerate() {
            let lvl = match &c.source {
                ColumnSource::Attr { rel, attr } if *rel == view_rel => db.relations[view_rel].rows[row][*attr],
                ColumnSource::Attr { rel, attr } => {
                    let joined = db.joined_rows(view_rel, row, *rel);
                    let Some(&j) = joined.first() else {
                        return Err(Error::Config(format!(
                            "{} has no matching `{}` tuple",
                            db.key_string(view_rel, &db.relations[view_rel].rows[row]),
                            db.schema.relations[*rel].name
                        )));
                    };
                    db.relations[*rel].rows[j][*attr]
                }
                ColumnSource::Summary(_) => {
                    let v = raw[ci][row].expect("kept rows have summaries");
                    domains[ci].snap(v).or_else(|| domains[ci].index_of(crate::value::ValueRef::Num(v))).unwrap()
                        as u32
                }
            };
            levels.push(lvl);
        }
        let mut m = vec![TupleId { relation: view_rel, row }];
        for &other in links.keys() {
            for j in db.joined_rows(view_rel, row, other) {
                m.push(TupleId { relation: other, row: j });
            }
        }
        rows.push(levels);
        row_tuples.push(row);
        members.push(m);
        labels.push(db.key_string(view_rel, &db.relations[view_rel].rows[row]));
    }
    Ok(RelevantView {
        name,
        relation: view_rel,
        names: columns.iter().map(|c| c.name.clone()).collect(),
        domains,
        columns,
        rows,
        row_tuples,
        members,
        labels,
        skipped,
    })
}
