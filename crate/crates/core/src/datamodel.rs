//! Star-schema relational instances: schema declaration, CSV ingestion and
//! direct (dependency-free) updates.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::value::{Domain, DomainSpec, LevelIndex, Value, ValueRef};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaConfig {
    pub relations: Vec<RelationConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationConfig {
    pub name: String,
    pub key: Vec<String>,
    pub attrs: Vec<AttrConfig>,
    #[serde(default)]
    pub fk: Vec<FkConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttrConfig {
    pub name: String,
    pub domain: DomainSpec,
    #[serde(default)]
    pub mutable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FkConfig {
    pub attr: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttrDecl {
    pub name: String,
    pub domain: Domain,
    pub mutable: bool,
    pub key_part: bool,
}

impl AttrDecl {
    pub fn update_eligible(&self) -> bool {
        self.mutable && !self.key_part
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForeignKey {
    pub attr: usize,
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationDecl {
    pub name: String,
    pub attrs: Vec<AttrDecl>,
    pub key: Vec<usize>,
    pub fks: Vec<ForeignKey>,
}

impl RelationDecl {
    pub fn attr_index(&self, name: &str) -> Option<usize> {
        self.attrs.iter().position(|a| a.name == name)
    }

    pub fn attr(&self, name: &str) -> Result<&AttrDecl> {
        self.attr_index(name)
            .map(|i| &self.attrs[i])
            .ok_or_else(|| Error::UnknownAttribute(format!("{}.{}", self.name, name)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub relations: Vec<RelationDecl>,
}

impl Schema {
    pub fn from_config(cfg: &SchemaConfig) -> Result<Schema> {
        let mut names = HashSet::new();
        for r in &cfg.relations {
            if !names.insert(r.name.as_str()) {
                return Err(Error::Config(format!("relation `{}` declared twice", r.name)));
            }
        }
        let index_of = |name: &str| cfg.relations.iter().position(|r| r.name == name);
        let mut relations = Vec::with_capacity(cfg.relations.len());
        for r in &cfg.relations {
            let mut attrs: Vec<AttrDecl> = Vec::with_capacity(r.attrs.len());
            for a in &r.attrs {
                if attrs.iter().any(|x| x.name == a.name) {
                    return Err(Error::Config(format!("attribute `{}.{}` declared twice", r.name, a.name)));
                }
                let domain = a
                    .domain
                    .build()
                    .map_err(|e| Error::Config(format!("{}.{}: {e}", r.name, a.name)))?;
                attrs.push(AttrDecl {
                    name: a.name.clone(),
                    domain,
                    mutable: a.mutable,
                    key_part: false,
                });
            }
            if r.key.is_empty() {
                return Err(Error::Config(format!("relation `{}` has an empty key", r.name)));
            }
            let mut key = Vec::new();
            for k in &r.key {
                let i = attrs
                    .iter()
                    .position(|a| &a.name == k)
                    .ok_or_else(|| Error::UnknownAttribute(format!("{}.{}", r.name, k)))?;
                if attrs[i].mutable {
                    return Err(Error::Config(format!("key attribute `{}.{}` must be immutable", r.name, k)));
                }
                attrs[i].key_part = true;
                key.push(i);
            }
            let mut fks = Vec::new();
            for fk in &r.fk {
                let attr = attrs
                    .iter()
                    .position(|a| a.name == fk.attr)
                    .ok_or_else(|| Error::UnknownAttribute(format!("{}.{}", r.name, fk.attr)))?;
                let target = index_of(&fk.target)
                    .ok_or_else(|| Error::Config(format!("foreign key targets unknown relation `{}`", fk.target)))?;
                if cfg.relations[target].key.len() != 1 {
                    return Err(Error::Config(format!(
                        "foreign key {}.{} must reference a single-attribute key",
                        r.name, fk.attr
                    )));
                }
                fks.push(ForeignKey { attr, target });
            }
            relations.push(RelationDecl {
                name: r.name.clone(),
                attrs,
                key,
                fks,
            });
        }
        let schema = Schema { relations };
        schema.check_star()?;
        Ok(schema)
    }

    /// The fk graph must have a hub relation incident to every edge.
    fn check_star(&self) -> Result<()> {
        let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
        for (i, r) in self.relations.iter().enumerate() {
            for fk in &r.fks {
                if fk.target == i {
                    return Err(Error::NonStarSchema(format!("relation `{}` references itself", r.name)));
                }
                edges.insert((i.min(fk.target), i.max(fk.target)));
            }
        }
        if edges.len() <= 1 {
            return Ok(());
        }
        let hub = (0..self.relations.len()).find(|&h| edges.iter().all(|&(a, b)| a == h || b == h));
        match hub {
            Some(_) => Ok(()),
            None => Err(Error::NonStarSchema(
                "no relation is joined to every other relation by foreign keys".into(),
            )),
        }
    }

    pub fn relation_index(&self, name: &str) -> Option<usize> {
        self.relations.iter().position(|r| r.name == name)
    }

    pub fn relation(&self, name: &str) -> Result<&RelationDecl> {
        self.relation_index(name)
            .map(|i| &self.relations[i])
            .ok_or_else(|| Error::UnknownAttribute(name.to_string()))
    }

    /// Resolves `Rel.Attr` into (relation index, attribute index).
    pub fn resolve(&self, qualified: &str) -> Option<(usize, usize)> {
        let (rel, attr) = qualified.split_once('.')?;
        let ri = self.relation_index(rel)?;
        let ai = self.relations[ri].attr_index(attr)?;
        Some((ri, ai))
    }

    /// Foreign keys joining relation `a` and relation `b`, in either direction:
    /// returns (referencing relation, fk attr, referenced relation).
    pub fn joins_between(&self, a: usize, b: usize) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for (from, to) in [(a, b), (b, a)] {
            for fk in &self.relations[from].fks {
                if fk.target == to {
                    out.push((from, fk.attr, to));
                }
            }
        }
        out
    }

    pub fn to_config(&self) -> SchemaConfig {
        SchemaConfig {
            relations: self
                .relations
                .iter()
                .map(|r| RelationConfig {
                    name: r.name.clone(),
                    key: r.key.iter().map(|&k| r.attrs[k].name.clone()).collect(),
                    attrs: r
                        .attrs
                        .iter()
                        .map(|a| AttrConfig {
                            name: a.name.clone(),
                            domain: a.domain.to_spec(),
                            mutable: a.mutable,
                        })
                        .collect(),
                    fk: r
                        .fks
                        .iter()
                        .map(|fk| FkConfig {
                            attr: r.attrs[fk.attr].name.clone(),
                            target: self.relations[fk.target].name.clone(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

/// Tuples of one relation, stored as domain levels in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    pub rows: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Database {
    pub schema: Schema,
    pub relations: Vec<Relation>,
}

/// Materialized tuple with decoded values, for inspection and output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tuple {
    pub relation: String,
    pub key: Vec<Value>,
    pub values: indexmap::IndexMap<String, Value>,
}

/// Identity of a tuple: relation plus key values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TupleId {
    pub relation: usize,
    pub row: usize,
}

impl Database {
    pub fn new(schema: Schema) -> Database {
        let relations = schema.relations.iter().map(|_| Relation { rows: Vec::new() }).collect();
        Database { schema, relations }
    }

    /// Builds a database from already-decoded values, validating every invariant.
    pub fn from_values(schema: Schema, data: Vec<(&str, Vec<Vec<Value>>)>) -> Result<Database> {
        let mut db = Database::new(schema);
        for (rel, rows) in data {
            let ri = db
                .schema
                .relation_index(rel)
                .ok_or_else(|| Error::Config(format!("unknown relation `{rel}`")))?;
            let decl = &db.schema.relations[ri];
            let mut encoded = Vec::with_capacity(rows.len());
            for (r, row) in rows.iter().enumerate() {
                if row.len() != decl.attrs.len() {
                    return Err(Error::Config(format!("row {} of {} has {} values", r + 1, rel, row.len())));
                }
                let mut levels = Vec::with_capacity(row.len());
                for (a, v) in decl.attrs.iter().zip(row) {
                    let lvl = a.domain.index_of(v.as_ref()).ok_or_else(|| Error::ValueOutsideDomain {
                        relation: rel.to_string(),
                        row: r + 1,
                        attr: a.name.clone(),
                        value: v.to_string(),
                    })?;
                    levels.push(lvl as u32);
                }
                encoded.push(levels);
            }
            db.relations[ri].rows = encoded;
        }
        db.check_keys()?;
        Ok(db)
    }

    pub fn check_keys(&self) -> Result<()> {
        for (ri, rel) in self.relations.iter().enumerate() {
            let decl = &self.schema.relations[ri];
            let mut seen = HashSet::with_capacity(rel.rows.len());
            for row in &rel.rows {
                let key: Vec<u32> = decl.key.iter().map(|&k| row[k]).collect();
                if !seen.insert(key) {
                    return Err(Error::DuplicateKey {
                        relation: decl.name.clone(),
                        key: self.key_string(ri, row),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn relation(&self, name: &str) -> Result<(usize, &RelationDecl, &Relation)> {
        let ri = self
            .schema
            .relation_index(name)
            .ok_or_else(|| Error::UnknownAttribute(name.to_string()))?;
        Ok((ri, &self.schema.relations[ri], &self.relations[ri]))
    }

    pub fn value(&self, rel: usize, row: usize, attr: usize) -> ValueRef<'_> {
        let lvl = self.relations[rel].rows[row][attr] as usize;
        self.schema.relations[rel].attrs[attr].domain.get(lvl)
    }

    /// Key rendered as `Relation(k1,k2)`.
    pub fn key_string(&self, rel: usize, row: &[u32]) -> String {
        let decl = &self.schema.relations[rel];
        let parts: Vec<String> = decl
            .key
            .iter()
            .map(|&k| decl.attrs[k].domain.value(row[k] as usize).to_string())
            .collect();
        format!("{}({})", decl.name, parts.join(","))
    }

    pub fn tuple_label(&self, id: &TupleId) -> String {
        self.key_string(id.relation, &self.relations[id.relation].rows[id.row])
    }

    pub fn tuple(&self, rel: usize, row: usize) -> Tuple {
        let decl = &self.schema.relations[rel];
        let levels = &self.relations[rel].rows[row];
        Tuple {
            relation: decl.name.clone(),
            key: decl.key.iter().map(|&k| decl.attrs[k].domain.value(levels[k] as usize)).collect(),
            values: decl
                .attrs
                .iter()
                .zip(levels)
                .map(|(a, &l)| (a.name.clone(), a.domain.value(l as usize)))
                .collect(),
        }
    }

    pub fn tuple_count(&self) -> usize {
        self.relations.iter().map(|r| r.rows.len()).sum()
    }

    pub fn tuple_ids(&self) -> impl Iterator<Item = TupleId> + '_ {
        self.relations
            .iter()
            .enumerate()
            .flat_map(|(ri, r)| (0..r.rows.len()).map(move |row| TupleId { relation: ri, row }))
    }

    /// Rows of `rel` whose key equals `key` (at most one).
    pub fn find_by_key(&self, rel: usize, key: &[Value]) -> Option<usize> {
        let decl = &self.schema.relations[rel];
        self.relations[rel].rows.iter().position(|row| {
            decl.key
                .iter()
                .zip(key)
                .all(|(&k, v)| decl.attrs[k].domain.get(row[k] as usize) == v.as_ref())
        })
    }

    /// Rows of relation `other` joined with `row` of relation `rel` through any fk
    /// between the two relations.
    pub fn joined_rows(&self, rel: usize, row: usize, other: usize) -> Vec<usize> {
        let mut out = BTreeSet::new();
        for (from, fk_attr, to) in self.schema.joins_between(rel, other) {
            let to_key = self.schema.relations[to].key[0];
            if from == rel {
                let v = self.value(rel, row, fk_attr);
                for (j, _) in self.relations[other].rows.iter().enumerate() {
                    if self.value(other, j, to_key) == v {
                        out.insert(j);
                    }
                }
            } else {
                let v = self.value(rel, row, to_key);
                for (j, _) in self.relations[other].rows.iter().enumerate() {
                    if self.value(other, j, fk_attr) == v {
                        out.insert(j);
                    }
                }
            }
        }
        out.into_iter().collect()
    }

    /// Writes one relation as RFC-4180 CSV with a header row.
    pub fn write_csv<W: Write>(&self, rel: usize, out: W) -> Result<()> {
        let decl = &self.schema.relations[rel];
        let mut w = csv::Writer::from_writer(out);
        w.write_record(decl.attrs.iter().map(|a| a.name.as_str()))?;
        for row in &self.relations[rel].rows {
            w.write_record(decl.attrs.iter().zip(row).map(|(a, &l)| a.domain.value(l as usize).to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Serializes the schema config and every relation's CSV text.
    pub fn serialize(&self) -> Result<(SchemaConfig, Vec<(String, String)>)> {
        let mut csvs = Vec::new();
        for (ri, decl) in self.schema.relations.iter().enumerate() {
            let mut buf = Vec::new();
            self.write_csv(ri, &mut buf)?;
            csvs.push((decl.name.clone(), String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))?));
        }
        Ok((self.schema.to_config(), csvs))
    }
}

/// Reads one relation's CSV into domain levels.
pub fn read_relation_csv<R: Read>(decl: &RelationDecl, input: R) -> Result<Relation> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers()?.clone();
    let mut columns = Vec::with_capacity(decl.attrs.len());
    for h in header.iter() {
        let i = decl
            .attr_index(h)
            .ok_or_else(|| Error::UnknownAttribute(format!("{}.{}", decl.name, h)))?;
        if columns.contains(&i) {
            return Err(Error::Config(format!("column `{h}` repeated in {} CSV", decl.name)));
        }
        columns.push(i);
    }
    if columns.len() != decl.attrs.len() {
        let missing: Vec<&str> = decl
            .attrs
            .iter()
            .enumerate()
            .filter(|(i, _)| !columns.contains(i))
            .map(|(_, a)| a.name.as_str())
            .collect();
        return Err(Error::Config(format!("{} CSV lacks columns {}", decl.name, missing.join(", "))));
    }
    let indexes: Vec<LevelIndex> = decl.attrs.iter().map(|a| LevelIndex::new(&a.domain)).collect();
    let mut rows = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != columns.len() {
            return Err(Error::Config(format!("row {} of {} has {} cells", r + 1, decl.name, rec.len())));
        }
        let mut levels = vec![0u32; decl.attrs.len()];
        for (cell, &ai) in rec.iter().zip(&columns) {
            let a = &decl.attrs[ai];
            let lvl = indexes[ai].lookup(&a.domain, cell).ok_or_else(|| Error::ValueOutsideDomain {
                relation: decl.name.clone(),
                row: r + 1,
                attr: a.name.clone(),
                value: cell.to_string(),
            })?;
            levels[ai] = lvl as u32;
        }
        rows.push(levels);
    }
    Ok(Relation { rows })
}

/// Loads a validated database from a schema config and one CSV file per relation.
pub fn load_database(cfg: &SchemaConfig, csv_paths: &HashMap<String, std::path::PathBuf>) -> Result<Database> {
    let schema = Schema::from_config(cfg)?;
    let mut db = Database::new(schema);
    for (ri, decl) in db.schema.relations.iter().enumerate() {
        let path = csv_paths
            .get(&decl.name)
            .ok_or_else(|| Error::Config(format!("no CSV given for relation `{}`", decl.name)))?;
        let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        db.relations[ri] = read_relation_csv(decl, file)?;
    }
    db.check_keys()?;
    Ok(db)
}

/// Same as [`load_database`] but with in-memory CSV text.
pub fn load_database_from_str(cfg: &SchemaConfig, csv_text: &[(&str, &str)]) -> Result<Database> {
    let schema = Schema::from_config(cfg)?;
    let mut db = Database::new(schema);
    for (ri, decl) in db.schema.relations.iter().enumerate() {
        let text = csv_text
            .iter()
            .find(|(n, _)| *n == decl.name)
            .map(|(_, t)| *t)
            .ok_or_else(|| Error::Config(format!("no CSV given for relation `{}`", decl.name)))?;
        db.relations[ri] = read_relation_csv(decl, text.as_bytes())?;
    }
    db.check_keys()?;
    Ok(db)
}

pub fn read_schema_config(path: &Path) -> Result<SchemaConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum UpdateKind {
    Set,
    Scale,
    Shift,
    /// Intervene without changing the value: `PRE(B)`.
    Keep,
}

/// Hypothetical update function: `c`, `c × PRE(B)` or `c + PRE(B)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateFn {
    pub kind: UpdateKind,
    #[serde(rename = "const")]
    pub constant: Value,
}

impl UpdateFn {
    pub fn set(v: Value) -> Self {
        UpdateFn { kind: UpdateKind::Set, constant: v }
    }

    pub fn scale(c: f64) -> Self {
        UpdateFn { kind: UpdateKind::Scale, constant: Value::Num(c) }
    }

    pub fn shift(c: f64) -> Self {
        UpdateFn { kind: UpdateKind::Shift, constant: Value::Num(c) }
    }

    pub fn keep() -> Self {
        UpdateFn { kind: UpdateKind::Keep, constant: Value::Num(0.0) }
    }

    /// Applies the function to one domain level. SCALE/SHIFT results snap to the
    /// nearest domain point and fail when they leave the domain's range.
    pub fn apply(&self, attr: &str, domain: &Domain, level: usize) -> Result<usize> {
        let out_of_domain = |v: String| Error::UpdateValueOutsideDomain { attr: attr.to_string(), value: v };
        match self.kind {
            UpdateKind::Keep => Ok(level),
            UpdateKind::Set => domain
                .index_of(self.constant.as_ref())
                .ok_or_else(|| out_of_domain(self.constant.to_string())),
            UpdateKind::Scale | UpdateKind::Shift => {
                let c = self.constant.as_f64().ok_or_else(|| {
                    Error::TypeMismatch(format!("{:?} of `{attr}` needs a numeric constant", self.kind))
                })?;
                let x = domain
                    .num(level)
                    .ok_or_else(|| Error::TypeMismatch(format!("{:?} applied to categorical `{attr}`", self.kind)))?;
                let y = if self.kind == UpdateKind::Scale { c * x } else { c + x };
                domain.snap(y).ok_or_else(|| out_of_domain(y.to_string()))
            }
        }
    }

    /// Level map over the whole domain; `None` marks levels the update cannot map.
    pub fn level_map(&self, attr: &str, domain: &Domain) -> Vec<Result<usize>> {
        (0..domain.len()).map(|l| self.apply(attr, domain, l)).collect()
    }

    pub fn is_identity_on(&self, attr: &str, domain: &Domain, level: usize) -> bool {
        matches!(self.apply(attr, domain, level), Ok(l) if l == level)
    }
}

impl fmt::Display for UpdateFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.kind, &self.constant) {
            (UpdateKind::Set, Value::Str(s)) => write!(f, "'{}'", s.replace('\'', "''")),
            (UpdateKind::Set, Value::Num(x)) => write!(f, "{x}"),
            (UpdateKind::Scale, c) => write!(f, "{c}x"),
            (UpdateKind::Shift, c) => write!(f, "+{c}"),
            (UpdateKind::Keep, _) => write!(f, "x"),
        }
    }
}

/// u_{R,B,f,S}: set attribute `attr` of relation `relation` to f(B[t]) for rows in `selection`.
#[derive(Debug, Clone, PartialEq)]
pub struct HypotheticalUpdate {
    pub relation: String,
    pub attr: String,
    pub func: UpdateFn,
    pub selection: BTreeSet<usize>,
}

/// Writes the update straight into a copy of the database, ignoring every
/// dependency between attributes and tuples.
pub fn apply_update_directly(db: &Database, u: &HypotheticalUpdate) -> Result<Database> {
    let (ri, decl, rel) = db.relation(&u.relation)?;
    let ai = decl
        .attr_index(&u.attr)
        .ok_or_else(|| Error::UnknownAttribute(format!("{}.{}", u.relation, u.attr)))?;
    let attr = &decl.attrs[ai];
    if !attr.update_eligible() {
        return Err(Error::ImmutableAttribute(format!("{}.{}", u.relation, u.attr)));
    }
    let mut out = db.clone();
    for &row in &u.selection {
        if row >= rel.rows.len() {
            return Err(Error::Config(format!("selection row {row} out of range for {}", u.relation)));
        }
        let lvl = u.func.apply(&attr.name, &attr.domain, rel.rows[row][ai] as usize)?;
        out.relations[ri].rows[row][ai] = lvl as u32;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SchemaConfig {
        serde_json::from_str(
            r#"{"relations":[{"name":"T","key":["id"],"attrs":[
                {"name":"id","domain":[1,2,3]},
                {"name":"X","domain":[0,1],"mutable":true}]}]}"#,
        )
        .unwrap()
    }

    #[test]
    fn mutable_key_is_rejected() {
        let mut c = cfg();
        c.relations[0].attrs[0].mutable = true;
        assert!(matches!(Schema::from_config(&c), Err(Error::Config(_))));
    }

    #[test]
    fn header_with_unknown_column() {
        let err = load_database_from_str(&cfg(), &[("T", "id,Z\n1,0\n")]).unwrap_err();
        assert_eq!(err.kind(), "UnknownAttribute");
    }

    #[test]
    fn missing_cell_rejected() {
        let err = load_database_from_str(&cfg(), &[("T", "id,X\n1,\n")]).unwrap_err();
        assert_eq!(err.kind(), "ValueOutsideDomain");
    }

    #[test]
    fn duplicate_key_rejected() {
        let err = load_database_from_str(&cfg(), &[("T", "id,X\n1,0\n1,1\n")]).unwrap_err();
        assert_eq!(err.kind(), "DuplicateKey");
    }

    #[test]
    fn chain_of_four_is_not_a_star() {
        let text = r#"{"relations":[
            {"name":"A","key":["a"],"attrs":[{"name":"a","domain":[1]}]},
            {"name":"B","key":["b"],"attrs":[{"name":"b","domain":[1]},{"name":"a","domain":[1]}],"fk":[{"attr":"a","target":"A"}]},
            {"name":"C","key":["c"],"attrs":[{"name":"c","domain":[1]},{"name":"b","domain":[1]}],"fk":[{"attr":"b","target":"B"}]},
            {"name":"D","key":["d"],"attrs":[{"name":"d","domain":[1]},{"name":"c","domain":[1]}],"fk":[{"attr":"c","target":"C"}]}]}"#;
        let c: SchemaConfig = serde_json::from_str(text).unwrap();
        assert_eq!(Schema::from_config(&c).unwrap_err().kind(), "NonStarSchema");
    }
}
