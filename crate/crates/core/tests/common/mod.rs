//! Random single-relation fixtures with exact structural models, shared by the
//! integration tests and the acceptance target.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value as Json};

use hyperq::causal::dag::{CausalDag, DagConfig};
use hyperq::causal::scm::{Scm, ScmConfig};
use hyperq::datamodel::{load_database_from_str, SchemaConfig};
use hyperq::engine::AvgDenominator;
use hyperq::estimator::{EstimatorConfig, EstimatorKind};
use hyperq::hql::ast::{Pred, Side};
use hyperq::hql::eval::{compile, Layout, RowPair};
use hyperq::hql::normalize_for;
use hyperq::howto::{CandidateConfig, UpdatePlan};
use hyperq::oracle::OraclePlan;
use hyperq::session::{Session, Settings};
use hyperq::value::Domain;

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn load(rel: &str) -> Session {
    Session::load(&fixtures_dir().join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn query_text(rel: &str) -> String {
    std::fs::read_to_string(fixtures_dir().join(rel)).unwrap()
}

/// One attribute of a random fixture. `Z` is immutable; `A*` are mutable.
#[derive(Debug, Clone)]
pub struct Attr {
    pub name: String,
    pub levels: usize,
    pub mutable: bool,
}

#[derive(Debug)]
pub struct Fixture {
    pub session: Session,
    pub attrs: Vec<Attr>,
    /// Edges as attribute index pairs; cross-tuple edges act within the row at view level.
    pub edges: Vec<(usize, usize)>,
    pub rows: usize,
}

impl Fixture {
    pub fn reaches(&self, from: usize, to: usize) -> bool {
        let mut stack = vec![from];
        let mut seen = vec![false; self.attrs.len()];
        while let Some(v) = stack.pop() {
            if v == to {
                return true;
            }
            for &(a, b) in &self.edges {
                if a == v && !seen[b] {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
        false
    }

    pub fn mutable(&self) -> Vec<usize> {
        (0..self.attrs.len()).filter(|&i| self.attrs[i].mutable).collect()
    }

    /// Attributes pairwise free of directed paths.
    pub fn disconnected(&self, set: &[usize]) -> bool {
        set.iter().all(|&a| set.iter().all(|&b| a == b || !self.reaches(a, b)))
    }
}

fn random_dist(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| rng.gen_range(1..=19) as f64).collect();
    let total: f64 = w.iter().sum();
    let mut d: Vec<f64> = w.iter().map(|x| x / total).collect();
    let head: f64 = d[..k - 1].iter().sum();
    d[k - 1] = 1.0 - head;
    d
}

fn parent_combos(levels: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &l in levels {
        out = out.into_iter().flat_map(|c| (0..l).map(move |x| [c.clone(), vec![x]].concat())).collect();
    }
    out
}

/// Table rows for a node: one row per parent level combination.
fn cpt(rng: &mut ChaCha8Rng, node: &Attr, parents: &[&Attr]) -> Json {
    let levels: Vec<usize> = parents.iter().map(|p| p.levels).collect();
    let table: Vec<Json> = parent_combos(&levels)
        .into_iter()
        .map(|c| json!({"given": c, "dist": random_dist(rng, node.levels)}))
        .collect();
    json!({"node": node.name, "parents": parents.iter().map(|p| p.name.clone()).collect::<Vec<_>>(), "table": table})
}

/// Builds a session over relation `T(id, Z, A0..)` from explicit parts.
pub fn build_session(
    attrs: &[Attr],
    edges: &[(usize, usize)],
    cross: &[(usize, usize)],
    scm: Json,
    data: &[Vec<usize>],
    avg: AvgDenominator,
) -> Session {
    let n = data.len();
    let mut attr_cfg = vec![json!({"name": "id", "domain": (1..=n.max(1)).collect::<Vec<_>>()})];
    for a in attrs {
        attr_cfg.push(json!({"name": a.name, "domain": (0..a.levels).collect::<Vec<_>>(), "mutable": a.mutable}));
    }
    let schema: SchemaConfig =
        serde_json::from_value(json!({"relations": [{"name": "T", "key": ["id"], "attrs": attr_cfg}]})).unwrap();
    let mut csv = String::from("id");
    for a in attrs {
        csv.push(',');
        csv.push_str(&a.name);
    }
    csv.push('\n');
    for (i, row) in data.iter().enumerate() {
        csv.push_str(&(i + 1).to_string());
        for v in row {
            csv.push_str(&format!(",{v}"));
        }
        csv.push('\n');
    }
    let db = load_database_from_str(&schema, &[("T", &csv)]).unwrap();
    let q = |i: usize| format!("T.{}", attrs[i].name);
    let mut edge_cfg: Vec<Json> = edges.iter().map(|&(a, b)| json!({"from": q(a), "to": q(b)})).collect();
    for &(a, b) in cross {
        edge_cfg.push(json!({"from": q(a), "to": q(b), "cross_tuple": true, "group_by": "Z"}));
    }
    let dag_cfg: DagConfig = serde_json::from_value(json!({
        "nodes": (0..attrs.len()).map(q).collect::<Vec<_>>(),
        "edges": edge_cfg,
    }))
    .unwrap();
    let dag = CausalDag::from_config(&dag_cfg).unwrap();
    let scm: ScmConfig = serde_json::from_value(scm).unwrap();
    let settings = Settings {
        estimator: EstimatorConfig { kind: EstimatorKind::Exact, ..Default::default() },
        avg_denominator: avg,
        ..Default::default()
    };
    Session::new(db, Some(dag), Vec::new(), Some(scm), settings).unwrap()
}

/// A random fixture: at most 6 tuples, at most 3 mutable attributes with
/// domains of size at most 3, a random acyclic graph and random CPTs.
pub fn random_fixture(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.gen_range(1..=3);
    let mut attrs = vec![Attr { name: "Z".into(), levels: 2, mutable: false }];
    for i in 0..m {
        attrs.push(Attr { name: format!("A{i}"), levels: rng.gen_range(2..=3), mutable: true });
    }
    let mut edges = Vec::new();
    let mut cross = Vec::new();
    for j in 1..attrs.len() {
        for i in 0..j {
            if rng.gen_bool(0.5) {
                edges.push((i, j));
            } else if i > 0 && rng.gen_bool(0.2) {
                cross.push((i, j));
            }
        }
    }
    let all: Vec<(usize, usize)> = edges.iter().chain(&cross).copied().collect();
    let cpts: Vec<Json> = (0..attrs.len())
        .map(|j| {
            let parents: Vec<&Attr> = all.iter().filter(|e| e.1 == j).map(|e| &attrs[e.0]).collect();
            cpt(&mut rng, &attrs[j], &parents)
        })
        .collect();
    let rows = rng.gen_range(1..=6);
    let data: Vec<Vec<usize>> =
        (0..rows).map(|_| attrs.iter().map(|a| rng.gen_range(0..a.levels)).collect()).collect();
    let avg = if rng.gen_bool(0.5) { AvgDenominator::Expected } else { AvgDenominator::Fixed };
    let session = build_session(&attrs, &edges, &cross, json!({"cpts": cpts}), &data, avg);
    Fixture { session, attrs, edges: all, rows }
}

fn atom(rng: &mut ChaCha8Rng, attrs: &[Attr], allow_post: bool) -> String {
    let a = attrs.choose(rng).unwrap();
    let side = if allow_post && rng.gen_bool(0.6) { "POST" } else { "PRE" };
    let ops = ["=", "<>", "<", "<=", ">", ">="];
    let op = ops.choose(rng).unwrap();
    if allow_post && rng.gen_bool(0.2) {
        let b = attrs.choose(rng).unwrap();
        let c = rng.gen_range(0..=a.levels + b.levels - 2);
        format!("{side}({}) + PRE({}) {op} {c}", a.name, b.name)
    } else {
        let c = rng.gen_range(0..a.levels);
        format!("{side}({}) {op} {c}", a.name)
    }
}

/// Random predicate with at most `budget` atoms.
pub fn random_pred(rng: &mut ChaCha8Rng, attrs: &[Attr], allow_post: bool, budget: usize) -> String {
    if budget <= 1 || rng.gen_bool(0.35) {
        return atom(rng, attrs, allow_post);
    }
    let left = rng.gen_range(1..budget);
    let l = random_pred(rng, attrs, allow_post, left);
    let r = random_pred(rng, attrs, allow_post, budget - left);
    match rng.gen_range(0..5) {
        0 | 1 => format!("({l}) AND ({r})"),
        2 | 3 => format!("({l}) OR ({r})"),
        _ => format!("NOT ({l})"),
    }
}

/// A random what-if query over a fixture.
pub fn random_whatif(f: &Fixture, rng: &mut ChaCha8Rng) -> String {
    let mutable = f.mutable();
    let mut targets: Vec<usize> = vec![*mutable.choose(rng).unwrap()];
    if mutable.len() > 1 && rng.gen_bool(0.4) {
        let other = *mutable.choose(rng).unwrap();
        if other != targets[0] && f.disconnected(&[targets[0], other]) {
            targets.push(other);
        }
    }
    let mut text = String::from("USE T\n");
    if rng.gen_bool(0.5) {
        let a = f.attrs.choose(rng).unwrap();
        text.push_str(&format!("WHEN {} {} {}\n", a.name, ["=", ">=", "<="].choose(rng).unwrap(), rng.gen_range(0..a.levels)));
    }
    for (k, &t) in targets.iter().enumerate() {
        let a = &f.attrs[t];
        if k > 0 {
            text.push_str("AND ");
        }
        let func = match rng.gen_range(0..6) {
            0 => format!("PRE({})", a.name),
            1 if a.levels == 3 => format!("0.5 * PRE({})", a.name),
            _ => rng.gen_range(0..a.levels).to_string(),
        };
        text.push_str(&format!("UPDATE({}) = {func}\n", a.name));
    }
    let y = f.attrs.choose(rng).unwrap();
    let out = match rng.gen_range(0..3) {
        0 => "COUNT(*)".to_string(),
        1 => format!("SUM(POST({}))", y.name),
        _ => format!("AVG(POST({}))", y.name),
    };
    text.push_str(&format!("OUTPUT {out}\n"));
    if rng.gen_bool(0.8) {
        let budget = rng.gen_range(1..=4);
        text.push_str(&format!("FOR {}\n", random_pred(rng, &f.attrs, true, budget)));
    }
    text
}

/// The confounded model C -> B -> Y, C -> Y with `n` rows drawn from its CPTs.
pub fn sampled_confounder(n: usize, seed: u64, kind: EstimatorKind) -> Session {
    let dir = fixtures_dir().join("confounder");
    let scm: ScmConfig = serde_json::from_str(&std::fs::read_to_string(dir.join("scm.json")).unwrap()).unwrap();
    let bin = Domain::numeric(vec![0.0, 1.0]).unwrap();
    let names = ["C", "B", "Y"];
    let bound = Scm::bind(&scm, &names.map(|n| (n.to_string(), bin.clone()))).unwrap();
    let col: Vec<usize> = names.iter().map(|n| bound.index(n).unwrap()).collect();
    let mut csv = String::from("id,C,B,Y\n");
    for (i, row) in bound.sample(n, seed).into_iter().enumerate() {
        csv.push_str(&format!("{},{},{},{}\n", i + 1, row[col[0]], row[col[1]], row[col[2]]));
    }
    let schema: SchemaConfig = serde_json::from_value(json!({"relations": [{"name": "T", "key": ["id"], "attrs": [
        {"name": "id", "domain": {"range": [1, n, 1]}},
        {"name": "C", "domain": [0, 1], "mutable": true},
        {"name": "B", "domain": [0, 1], "mutable": true},
        {"name": "Y", "domain": [0, 1], "mutable": true}
    ]}]}))
    .unwrap();
    let db = load_database_from_str(&schema, &[("T", &csv)]).unwrap();
    let dag: DagConfig =
        serde_json::from_str(&std::fs::read_to_string(dir.join("dag.json")).unwrap()).unwrap();
    let settings = Settings { estimator: EstimatorConfig { kind, ..Default::default() }, ..Default::default() };
    Session::new(db, Some(CausalDag::from_config(&dag).unwrap()), Vec::new(), Some(scm), settings).unwrap()
}

/// Roots `A*` feed a binary `Y` whose success probability is additive in
/// them, so every goal over `Y` and the `A*` is additive across attributes.
pub struct Additive {
    pub session: Session,
    pub attrs: Vec<Attr>,
    pub rows: usize,
}

pub fn additive_fixture(seed: u64) -> Additive {
    let mut r = rng(seed);
    let k = r.gen_range(2..=3);
    let mut attrs = vec![Attr { name: "Z".into(), levels: 2, mutable: false }];
    for i in 0..k {
        attrs.push(Attr { name: format!("A{i}"), levels: r.gen_range(2..=5), mutable: true });
    }
    attrs.push(Attr { name: "Y".into(), levels: 2, mutable: true });
    let y = attrs.len() - 1;
    let effect: Vec<Vec<f64>> =
        attrs[..y].iter().map(|a| (0..a.levels).map(|_| 0.05 * r.gen_range(0..=3) as f64).collect()).collect();
    let mut cpts = Vec::new();
    for a in &attrs[..y] {
        let w: Vec<f64> = (0..a.levels).map(|_| r.gen_range(1..=9) as f64).collect();
        let t: f64 = w.iter().sum();
        cpts.push(json!({"node": a.name, "table": [{"given": [], "dist": w.iter().map(|x| x / t).collect::<Vec<_>>()}]}));
    }
    let mut table = Vec::new();
    let mut combo = vec![0usize; y];
    loop {
        let p: f64 = 0.1 + combo.iter().enumerate().map(|(i, &l)| effect[i][l]).sum::<f64>();
        table.push(json!({"given": combo.clone(), "dist": [1.0 - p, p]}));
        let mut i = y;
        loop {
            if i == 0 {
                break;
            }
            i -= 1;
            combo[i] += 1;
            if combo[i] < attrs[i].levels {
                break;
            }
            combo[i] = 0;
        }
        if combo.iter().all(|&c| c == 0) {
            break;
        }
    }
    let parents: Vec<String> = attrs[..y].iter().map(|a| a.name.clone()).collect();
    cpts.push(json!({"node": "Y", "parents": parents, "table": table}));
    let edges: Vec<(usize, usize)> = (0..y).map(|i| (i, y)).collect();
    let rows = r.gen_range(1..=6);
    let data: Vec<Vec<usize>> = (0..rows).map(|_| attrs.iter().map(|a| r.gen_range(0..a.levels)).collect()).collect();
    let mut session = build_session(&attrs, &edges, &[], json!({"cpts": cpts}), &data, AvgDenominator::Expected);
    let mut cands = BTreeMap::new();
    for a in &attrs[1..y] {
        let cfg = match r.gen_range(0..3) {
            0 => CandidateConfig { shift: vec![-1.0, 1.0], ..Default::default() },
            1 => CandidateConfig { set_step: Some(2.0), scale: vec![2.0], ..Default::default() },
            _ => CandidateConfig::default(),
        };
        cands.insert(a.name.clone(), cfg);
    }
    session.settings.candidates = cands;
    Additive { session, attrs, rows }
}

pub fn additive_query(f: &Additive, r: &mut impl Rng) -> String {
    let how: Vec<&Attr> = f.attrs.iter().filter(|a| a.name.starts_with('A')).collect();
    let mut text = String::from("USE T ");
    if r.gen_bool(0.3) {
        text.push_str(&format!("WHEN Z = {} ", r.gen_range(0..2)));
    }
    let names: Vec<&str> = how.iter().map(|a| a.name.as_str()).collect();
    text.push_str(&format!("HOWTOUPDATE {} ", names.join(", ")));
    let mut limits = Vec::new();
    for a in &how {
        match r.gen_range(0..5) {
            0 => limits.push(format!("{} <= POST({}) <= {}", r.gen_range(0..2), a.name, r.gen_range(2..a.levels.max(3)))),
            1 => {
                let mut vals: Vec<usize> = (0..a.levels).collect();
                vals.shuffle(r);
                vals.truncate(r.gen_range(1..=a.levels));
                let list: Vec<String> = vals.iter().map(|v| v.to_string()).collect();
                limits.push(format!("POST({}) IN ({})", a.name, list.join(", ")));
            }
            2 => limits.push(format!("L1(PRE({0}), POST({0})) <= {1}", a.name, r.gen_range(0..=3))),
            _ => {}
        }
    }
    if r.gen_bool(0.3) {
        limits.push(format!(
            "L1(PRE({0}), POST({0})) + L1(PRE({1}), POST({1})) <= {2}",
            how[0].name,
            how[1].name,
            r.gen_range(1..=4)
        ));
    }
    if !limits.is_empty() {
        text.push_str(&format!("LIMIT {} ", limits.join(" AND ")));
    }
    let sense = |r: &mut dyn rand::RngCore| if r.gen_bool(0.5) { "TOMAXIMIZE" } else { "TOMINIMIZE" };
    match r.gen_range(0..5) {
        0 => text.push_str(&format!("{} SUM(POST(Y))", sense(r))),
        1 => text.push_str(&format!("{} COUNT(*) FOR POST(Y) = 1", sense(r))),
        2 => text.push_str(&format!("{} AVG(POST(Y))", sense(r))),
        3 => {
            let other = how.choose(r).unwrap();
            text.push_str(&format!("{} SUM(POST(Y)) THEN {} SUM(POST({}))", sense(r), sense(r), other.name));
        }
        _ => {
            let t = 0.1 * r.gen_range(0..=(6 * f.rows) as u32) as f64;
            let op = if r.gen_bool(0.7) { ">=" } else { "<=" };
            text.push_str(&format!("TOMINIMIZE COST SUCH THAT SUM(POST(Y)) {op} {t}"));
        }
    }
    text
}

/// Describes how a solver answer differs from the exhaustive one, if it does.
pub fn howto_mismatch(plan: &hyperq::Result<UpdatePlan>, oracle: &hyperq::Result<OraclePlan>) -> Option<String> {
    match (plan, oracle) {
        (Ok(p), Ok(o)) => {
            if p.plan != o.plan {
                return Some(format!("plans differ: {:?} vs {:?}", p.plan, o.plan));
            }
            let v = p.cost.unwrap_or(p.objective);
            if (v - o.objective).abs() >= 1e-9 {
                return Some(format!("objectives differ: {v} vs {}", o.objective));
            }
            for (k, st) in p.stages.iter().enumerate() {
                if (st.verified - st.model).abs() >= 1e-9 {
                    return Some(format!("stage {k} is not additive"));
                }
                if (st.verified - o.stage_values[k]).abs() >= 1e-9 {
                    return Some(format!("stage {k}: {} vs {}", st.verified, o.stage_values[k]));
                }
            }
            None
        }
        (Err(a), Err(b)) if a.kind() == b.kind() => None,
        (a, b) => Some(format!("solver {a:?}\noracle {b:?}")),
    }
}

/// Malformed query texts, each of which must fail with a located syntax error.
pub const NEGATIVE_QUERIES: [&str; 20] = [
    "",
    "UPDATE(X) = 1 OUTPUT COUNT(*)",
    "USE T OUTPUT COUNT(*)",
    "USE T UPDATE(X) = 1",
    "USE T UPDATE X = 1 OUTPUT COUNT(*)",
    "USE T UPDATE(X) 1 OUTPUT COUNT(*)",
    "USE T UPDATE(X) = PRE(Y) + 1 OUTPUT COUNT(*)",
    "USE T UPDATE(X) = PRE(X) * PRE(X) OUTPUT COUNT(*)",
    "USE T UPDATE(X) = 1 OUTPUT AVG(POST(Y)",
    "USE T UPDATE(X) = 1 OUTPUT COUNT(*) FOR POST(Y) = ",
    "USE T UPDATE(X) = 1 OUTPUT COUNT(*) FOR (POST(Y) = 1",
    "USE T UPDATE(X) = 1 OUTPUT COUNT(*) FOR POST(Y) == 1",
    "USE T UPDATE(X) = 1 OUTPUT COUNT(*) FOR Y = 'open",
    "USE T UPDATE(X) = 1 OUTPUT COUNT(*) FOR POST(Y) = 1 extra",
    "USE T UPDATE(X) = 1 OUTPUT COUNT(*) WHEN X = 1",
    "USE T UPDATE(X) = 1 OUTPUT COUNT(*) FOR POST(Y) = 1 @",
    "USE T HOWTOUPDATE TOMAXIMIZE AVG(POST(Y))",
    "USE T HOWTOUPDATE X LIMIT L1(PRE(X),POST(X)) <= -1 TOMAXIMIZE AVG(POST(Y))",
    "USE T HOWTOUPDATE X LIMIT 0 < POST(X) TOMAXIMIZE AVG(POST(Y))",
    "USE T HOWTOUPDATE X LIMIT L1(PRE(X),POST(Z)) <= 3 TOMAXIMIZE AVG(POST(Y))",
];

/// Level vectors over the product of the domains.
pub fn all_rows(domains: &[Domain]) -> Vec<Vec<u32>> {
    let mut rows = vec![Vec::new()];
    for d in domains {
        rows = rows
            .into_iter()
            .flat_map(|r| (0..d.len() as u32).map(move |l| [r.clone(), vec![l]].concat()))
            .collect();
    }
    rows
}

/// Normalizes `p` and compares it with the raw predicate on every (pre, post)
/// pair: exactly one conjunct must fire where `p` holds and none elsewhere.
/// Returns the number of conjuncts.
pub fn normalization_check(p: &Pred, names: &[String], domains: &[Domain]) -> Result<usize, String> {
    let layout = Layout { names, domains };
    let raw = compile(p, layout).map_err(|e| e.to_string())?;
    let dnf = normalize_for(p, layout, 1_000_000).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    for c in &dnf.conjuncts {
        if !c.pre.attr_names(Side::Post).is_empty() || !c.post.attr_names(Side::Pre).is_empty() {
            return Err(format!("conjunct mixes sides: {c:?}"));
        }
        parts.push((compile(&c.pre, layout).map_err(|e| e.to_string())?, compile(&c.post, layout).map_err(|e| e.to_string())?));
    }
    let rows = all_rows(domains);
    for pre in &rows {
        for post in &rows {
            let pair = RowPair { pre, post, domains };
            let fired = parts.iter().filter(|(a, b)| a.eval(&pair) && b.eval(&pair)).count();
            if fired > 1 || (fired == 1) != raw.eval(&pair) {
                return Err(format!("{fired} conjuncts fire on {pre:?} -> {post:?}"));
            }
        }
    }
    Ok(dnf.conjuncts.len())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
