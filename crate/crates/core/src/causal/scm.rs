use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};

use crate::causal::dag::{CausalDag, Edge};
use crate::error::{Error, Result};
use crate::value::{Domain, Value, ValueRef};

/// Matches one parent value inside a CPT row.
#[derive(Debug, Clone, PartialEq)]
pub enum Matcher {
    Any,
    Is(Value),
    In(Vec<Value>),
    Range(f64, f64),
}

impl Matcher {
    fn matches(&self, v: ValueRef<'_>) -> bool {
        match self {
            Matcher::Any => true,
            Matcher::Is(x) => value_eq(x.as_ref(), v),
            Matcher::In(xs) => xs.iter().any(|x| value_eq(x.as_ref(), v)),
            Matcher::Range(lo, hi) => matches!(v, ValueRef::Num(x) if x >= *lo && x <= *hi),
        }
    }
}

fn value_eq(a: ValueRef<'_>, b: ValueRef<'_>) -> bool {
    match (a, b) {
        (ValueRef::Num(x), ValueRef::Num(y)) => crate::value::same_point(x, y),
        _ => a == b,
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum MatcherRepr {
    Value(Value),
    In { r#in: Vec<Value> },
    Range { range: [f64; 2] },
}

impl Serialize for Matcher {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Matcher::Any => s.serialize_str("*"),
            Matcher::Is(v) => v.serialize(s),
            Matcher::In(v) => MatcherRepr::In { r#in: v.clone() }.serialize(s),
            Matcher::Range(lo, hi) => MatcherRepr::Range { range: [*lo, *hi] }.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Matcher {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(match MatcherRepr::deserialize(d).map_err(de::Error::custom)? {
            MatcherRepr::Value(Value::Str(s)) if s == "*" => Matcher::Any,
            MatcherRepr::Value(v) => Matcher::Is(v),
            MatcherRepr::In { r#in } => Matcher::In(r#in),
            MatcherRepr::Range { range } => Matcher::Range(range[0], range[1]),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CptRowConfig {
    #[serde(default)]
    pub given: Vec<Matcher>,
    pub dist: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CptConfig {
    pub node: String,
    #[serde(default)]
    pub parents: Vec<String>,
    pub table: Vec<CptRowConfig>,
}

/// `{"cpts":[{"node","parents","table":[{"given":[...],"dist":[...]}]}]}`.
/// Rows are tried in order and the first matching row applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmConfig {
    pub cpts: Vec<CptConfig>,
}

#[derive(Debug, Clone)]
struct CompiledRow {
    /// Per parent, allowed levels.
    allowed: Vec<Vec<bool>>,
    dist: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ScmNode {
    pub name: String,
    pub domain: Domain,
    pub parents: Vec<usize>,
    rows: Vec<CompiledRow>,
}

/// Structural model with one shared CPT per attribute.
#[derive(Debug, Clone)]
pub struct Scm {
    pub nodes: Vec<ScmNode>,
    order: Vec<usize>,
}

pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

fn strip_relation(name: &str) -> &str {
    name.rsplit_once('.').map(|(_, a)| a).unwrap_or(name)
}

impl Scm {
    /// Binds a config to attribute domains. Names may be qualified (`Rel.Attr`);
    /// the relation prefix is dropped when the bare name is what `domains` uses.
    pub fn bind(cfg: &ScmConfig, domains: &[(String, Domain)]) -> Result<Scm> {
        let lookup = |name: &str| -> Option<usize> {
            domains
                .iter()
                .position(|(n, _)| n == name)
                .or_else(|| domains.iter().position(|(n, _)| n == strip_relation(name)))
        };
        let mut names: Vec<usize> = Vec::new();
        for c in &cfg.cpts {
            let d = lookup(&c.node).ok_or_else(|| Error::UnknownAttribute(c.node.clone()))?;
            if names.contains(&d) {
                return Err(Error::Config(format!("two CPTs for `{}`", c.node)));
            }
            names.push(d);
        }
        let mut nodes = Vec::with_capacity(cfg.cpts.len());
        for (c, &d) in cfg.cpts.iter().zip(&names) {
            let domain = domains[d].1.clone();
            let mut parents = Vec::new();
            for p in &c.parents {
                let pd = lookup(p).ok_or_else(|| Error::UnknownAttribute(p.clone()))?;
                let pi = names
                    .iter()
                    .position(|&x| x == pd)
                    .ok_or_else(|| Error::ScmMismatch(format!("parent `{p}` of `{}` has no CPT", c.node)))?;
                parents.push(pi);
            }
            let mut rows = Vec::new();
            for (ri, r) in c.table.iter().enumerate() {
                if r.given.len() != parents.len() {
                    return Err(Error::Config(format!(
                        "CPT `{}` row {} has {} matchers for {} parents",
                        c.node,
                        ri + 1,
                        r.given.len(),
                        parents.len()
                    )));
                }
                if r.dist.len() != domain.len() {
                    return Err(Error::Config(format!(
                        "CPT `{}` row {} has {} probabilities for a domain of {}",
                        c.node,
                        ri + 1,
                        r.dist.len(),
                        domain.len()
                    )));
                }
                let total: f64 = r.dist.iter().sum();
                if r.dist.iter().any(|p| !(0.0..=1.0).contains(p)) || (total - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return Err(Error::Config(format!("CPT `{}` row {} does not sum to 1", c.node, ri + 1)));
                }
                let allowed = r
                    .given
                    .iter()
                    .zip(&parents)
                    .map(|(m, &p)| {
                        let pdom = &domains[names[p]].1;
                        (0..pdom.len()).map(|l| m.matches(pdom.get(l))).collect()
                    })
                    .collect();
                rows.push(CompiledRow { allowed, dist: r.dist.clone() });
            }
            nodes.push(ScmNode { name: domains[d].0.clone(), domain, parents, rows });
        }
        let mut scm = Scm { nodes, order: Vec::new() };
        scm.order = scm.dag().topo_order()?;
        scm.check_coverage()?;
        Ok(scm)
    }

    /// Every parent combination must be matched by some row (checked when the
    /// parent space is small enough to enumerate).
    fn check_coverage(&self) -> Result<()> {
        for n in &self.nodes {
            let sizes: Vec<usize> = n.parents.iter().map(|&p| self.nodes[p].domain.len()).collect();
            let total: usize = sizes.iter().try_fold(1usize, |a, &s| a.checked_mul(s)).unwrap_or(usize::MAX);
            if total > 1_000_000 {
                continue;
            }
            let mut levels = vec![0usize; sizes.len()];
            for _ in 0..total {
                if n.rows.iter().all(|r| !r.allowed.iter().zip(&levels).all(|(a, &l)| a[l])) {
                    let combo: Vec<String> =
                        levels.iter().zip(&n.parents).map(|(&l, &p)| self.nodes[p].domain.value(l).to_string()).collect();
                    return Err(Error::Config(format!("CPT `{}` has no row for ({})", n.name, combo.join(", "))));
                }
                for i in (0..levels.len()).rev() {
                    levels[i] += 1;
                    if levels[i] < sizes[i] {
                        break;
                    }
                    levels[i] = 0;
                }
            }
        }
        Ok(())
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.nodes
            .iter()
            .position(|n| n.name == name)
            .or_else(|| self.nodes.iter().position(|n| n.name == strip_relation(name)))
    }

    pub fn topo_order(&self) -> &[usize] {
        &self.order
    }

    pub fn dag(&self) -> CausalDag {
        let mut d = CausalDag::empty(self.nodes.iter().map(|n| n.name.clone()).collect());
        for (i, n) in self.nodes.iter().enumerate() {
            for &p in &n.parents {
                d.add_edge(Edge { from: p, to: i, cross_tuple: false, group_by: None });
            }
        }
        d
    }

    /// Distribution of `node` given its parents' levels (in parent order).
    pub fn dist(&self, node: usize, parent_levels: &[usize]) -> &[f64] {
        let n = &self.nodes[node];
        n.rows
            .iter()
            .find(|r| r.allowed.iter().zip(parent_levels).all(|(a, &l)| a[l]))
            .map(|r| r.dist.as_slice())
            .expect("CPT coverage checked at bind time")
    }

    /// Probability of `level` for `node` given a full assignment (indexed by node).
    pub fn prob(&self, node: usize, level: usize, assignment: &[usize]) -> f64 {
        let pl: Vec<usize> = self.nodes[node].parents.iter().map(|&p| assignment[p]).collect();
        self.dist(node, &pl)[level]
    }

    /// Joint probability of a full assignment.
    pub fn joint(&self, assignment: &[usize]) -> f64 {
        (0..self.nodes.len()).map(|v| self.prob(v, assignment[v], assignment)).product()
    }

    /// Draws `n` independent rows (levels indexed by node) with a seeded generator.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<Vec<usize>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let mut row = vec![0usize; self.nodes.len()];
            for &v in &self.order {
                let pl: Vec<usize> = self.nodes[v].parents.iter().map(|&p| row[p]).collect();
                let dist = self.dist(v, &pl);
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut pick = dist.len() - 1;
                for (l, p) in dist.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        pick = l;
                        break;
                    }
                }
                row[v] = pick;
            }
            out.push(row);
        }
        out
    }

    /// Parent names per node, for comparison against a DAG.
    pub fn parent_map(&self) -> HashMap<String, Vec<String>> {
        self.nodes
            .iter()
            .map(|n| {
                let mut ps: Vec<String> = n.parents.iter().map(|&p| self.nodes[p].name.clone()).collect();
                ps.sort();
                (n.name.clone(), ps)
            })
            .collect()
    }

    /// Requires the model's graph to coincide with `dag`. Graph nodes without
    /// edges (keys, untouched columns) may lack a CPT.
    pub fn check_matches(&self, dag: &CausalDag) -> Result<()> {
        for (v, name) in dag.nodes.iter().enumerate() {
            let Some(i) = self.index(name) else {
                if dag.parents(v).is_empty() && dag.children(v).is_empty() {
                    continue;
                }
                return Err(Error::ScmMismatch(format!("no CPT for `{name}`")));
            };
            let mut want = dag.parent_names(name);
            want.sort();
            let mut have: Vec<String> = self.nodes[i].parents.iter().map(|&p| self.nodes[p].name.clone()).collect();
            have.sort();
            if want != have {
                return Err(Error::ScmMismatch(format!(
                    "`{name}` has parents [{}] in the model but [{}] in the causal graph",
                    have.join(", "),
                    want.join(", ")
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Scm {
        let cfg: ScmConfig = serde_json::from_str(
            r#"{"cpts":[
                {"node":"T.X","parents":[],"table":[{"given":[],"dist":[0.5,0.5]}]},
                {"node":"Y","parents":["X"],"table":[
                    {"given":[0],"dist":[0.75,0.25]},
                    {"given":["*"],"dist":[0.25,0.75]}]}]}"#,
        )
        .unwrap();
        let bin = Domain::numeric(vec![0.0, 1.0]).unwrap();
        Scm::bind(&cfg, &[("X".into(), bin.clone()), ("Y".into(), bin)]).unwrap()
    }

    #[test]
    fn first_matching_row_applies() {
        let s = toy();
        assert_eq!(s.dist(1, &[0]), &[0.75, 0.25]);
        assert_eq!(s.dist(1, &[1]), &[0.25, 0.75]);
        assert_eq!(s.joint(&[1, 1]), 0.375);
    }

    #[test]
    fn bad_row_sum_rejected() {
        let cfg: ScmConfig =
            serde_json::from_str(r#"{"cpts":[{"node":"X","table":[{"dist":[0.5,0.6]}]}]}"#).unwrap();
        let bin = Domain::numeric(vec![0.0, 1.0]).unwrap();
        assert!(Scm::bind(&cfg, &[("X".into(), bin)]).is_err());
    }

    #[test]
    fn matcher_json_forms() {
        let m: Vec<Matcher> = serde_json::from_str(r#"["*", 3, "a", {"in":[1,2]}, {"range":[0,5]}]"#).unwrap();
        assert_eq!(m[0], Matcher::Any);
        assert_eq!(m[1], Matcher::Is(Value::Num(3.0)));
        assert_eq!(m[3], Matcher::In(vec![Value::Num(1.0), Value::Num(2.0)]));
        assert_eq!(m[4], Matcher::Range(0.0, 5.0));
        assert_eq!(serde_json::to_string(&m).unwrap(), r#"["*",3.0,"a",{"in":[1.0,2.0]},{"range":[0.0,5.0]}]"#);
    }
}
