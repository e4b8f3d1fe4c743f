use std::collections::{BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::causal::summary::SummaryConfig;
use crate::datamodel::Schema;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DagConfig {
    pub nodes: Vec<String>,
    #[serde(default)]
    pub edges: Vec<EdgeConfig>,
    #[serde(default)]
    pub summaries: Vec<SummaryConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeConfig {
    pub from: String,
    pub to: String,
    #[serde(default)]
    pub cross_tuple: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_by: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub cross_tuple: bool,
    pub group_by: Option<String>,
}

/// Attribute-level causal DAG. Node names are `Rel.Attr` at database level and
/// plain column names at relevant-view level.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CausalDag {
    pub nodes: Vec<String>,
    pub edges: Vec<Edge>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

impl CausalDag {
    /// Builds a DAG from node names and same-tuple edges given by name.
    pub fn from_names(nodes: &[&str], edges: &[(&str, &str)]) -> Result<CausalDag> {
        let mut dag = CausalDag::empty(nodes.iter().map(|s| s.to_string()).collect());
        for (a, b) in edges {
            let from = dag.index(a).ok_or_else(|| Error::DanglingAttribute(a.to_string()))?;
            let to = dag.index(b).ok_or_else(|| Error::DanglingAttribute(b.to_string()))?;
            dag.add_edge(Edge { from, to, cross_tuple: false, group_by: None });
        }
        dag.topo_order()?;
        Ok(dag)
    }

    pub fn empty(nodes: Vec<String>) -> CausalDag {
        let n = nodes.len();
        CausalDag { nodes, edges: Vec::new(), parents: vec![Vec::new(); n], children: vec![Vec::new(); n] }
    }

    pub fn from_config(cfg: &DagConfig) -> Result<CausalDag> {
        let mut dag = CausalDag::empty(Vec::new());
        for n in &cfg.nodes {
            if dag.index(n).is_some() {
                return Err(Error::Config(format!("node `{n}` listed twice")));
            }
            dag.add_node(n);
        }
        for e in &cfg.edges {
            let from = dag.index(&e.from).ok_or_else(|| Error::DanglingAttribute(e.from.clone()))?;
            let to = dag.index(&e.to).ok_or_else(|| Error::DanglingAttribute(e.to.clone()))?;
            if from == to && !e.cross_tuple {
                return Err(Error::CycleDetected(vec![e.from.clone(), e.to.clone()]));
            }
            dag.add_edge(Edge { from, to, cross_tuple: e.cross_tuple, group_by: e.group_by.clone() });
        }
        dag.topo_order()?;
        Ok(dag)
    }

    pub fn to_config(&self) -> DagConfig {
        DagConfig {
            nodes: self.nodes.clone(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeConfig {
                    from: self.nodes[e.from].clone(),
                    to: self.nodes[e.to].clone(),
                    cross_tuple: e.cross_tuple,
                    group_by: e.group_by.clone(),
                })
                .collect(),
            summaries: Vec::new(),
        }
    }

    pub fn add_node(&mut self, name: &str) -> usize {
        if let Some(i) = self.index(name) {
            return i;
        }
        self.nodes.push(name.to_string());
        self.parents.push(Vec::new());
        self.children.push(Vec::new());
        self.nodes.len() - 1
    }

    /// Adds an edge; duplicate (from, to, flags) edges are ignored.
    pub fn add_edge(&mut self, e: Edge) {
        if self.edges.contains(&e) {
            return;
        }
        if !self.parents[e.to].contains(&e.from) && e.from != e.to {
            self.parents[e.to].push(e.from);
            self.children[e.from].push(e.to);
        }
        self.edges.push(e);
    }

    pub fn remove_edges_where(&mut self, mut pred: impl FnMut(&Edge) -> bool) {
        self.edges.retain(|e| !pred(e));
        self.rebuild_adjacency();
    }

    fn rebuild_adjacency(&mut self) {
        let n = self.nodes.len();
        self.parents = vec![Vec::new(); n];
        self.children = vec![Vec::new(); n];
        for e in &self.edges {
            if e.from != e.to && !self.parents[e.to].contains(&e.from) {
                self.parents[e.to].push(e.from);
                self.children[e.from].push(e.to);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == name)
    }

    pub fn parents(&self, v: usize) -> &[usize] {
        &self.parents[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn parent_names(&self, name: &str) -> Vec<String> {
        self.index(name)
            .map(|i| self.parents[i].iter().map(|&p| self.nodes[p].clone()).collect())
            .unwrap_or_default()
    }

    /// Topological order; reports one cycle by name when the graph is cyclic.
    pub fn topo_order(&self) -> Result<Vec<usize>> {
        let n = self.nodes.len();
        let mut indeg: Vec<usize> = (0..n).map(|v| self.parents[v].len()).collect();
        let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &c in &self.children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        if order.len() == n {
            Ok(order)
        } else {
            Err(Error::CycleDetected(self.find_cycle(&indeg)))
        }
    }

    fn find_cycle(&self, indeg: &[usize]) -> Vec<String> {
        // Every node left with positive in-degree has a parent that is also left;
        // walking parents must revisit a node.
        let Some(start) = (0..self.nodes.len()).find(|&v| indeg[v] > 0) else {
            return Vec::new();
        };
        let mut seen: HashMap<usize, usize> = HashMap::new();
        let mut path = Vec::new();
        let mut v = start;
        loop {
            if let Some(&pos) = seen.get(&v) {
                let mut cycle: Vec<String> = path[pos..].iter().rev().map(|&i: &usize| self.nodes[i].clone()).collect();
                cycle.push(cycle[0].clone());
                return cycle;
            }
            seen.insert(v, path.len());
            path.push(v);
            v = *self.parents[v].iter().find(|&&p| indeg[p] > 0).expect("cyclic remainder");
        }
    }

    pub fn descendants(&self, sources: &[usize]) -> BTreeSet<usize> {
        self.reach(sources, |v| &self.children[v])
    }

    pub fn ancestors(&self, sources: &[usize]) -> BTreeSet<usize> {
        self.reach(sources, |v| &self.parents[v])
    }

    /// Nodes reachable from `sources` (excluding the sources unless reached again).
    fn reach<'a>(&'a self, sources: &[usize], next: impl Fn(usize) -> &'a [usize]) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        let mut stack: Vec<usize> = sources.iter().flat_map(|&s| next(s).iter().copied()).collect();
        while let Some(v) = stack.pop() {
            if out.insert(v) {
                stack.extend(next(v).iter().copied());
            }
        }
        out
    }

    pub fn has_directed_path(&self, from: usize, to: usize) -> bool {
        self.descendants(&[from]).contains(&to)
    }

    /// d-separation of `xs` and `ys` given `z` (reachability / Bayes-ball),
    /// optionally ignoring the outgoing edges of `cut_outgoing`.
    pub fn d_separated(&self, xs: &[usize], ys: &[usize], z: &[usize], cut_outgoing: &[usize]) -> bool {
        let n = self.nodes.len();
        let in_z: Vec<bool> = (0..n).map(|v| z.contains(&v)).collect();
        let cut: Vec<bool> = (0..n).map(|v| cut_outgoing.contains(&v)).collect();
        let cut = &cut;
        let children = |v: usize| -> &[usize] {
            if cut[v] {
                &[]
            } else {
                &self.children[v]
            }
        };
        let parents_of = |v: usize| self.parents[v].iter().copied().filter(move |&p| !cut[p]);
        // Ancestors of Z (inclusive) in the cut graph.
        let mut anc_z = vec![false; n];
        let mut stack: Vec<usize> = z.to_vec();
        while let Some(v) = stack.pop() {
            if !anc_z[v] {
                anc_z[v] = true;
                stack.extend(parents_of(v));
            }
        }
        // (node, arrived_from_child)
        let mut visited = vec![[false; 2]; n];
        let mut queue: VecDeque<(usize, bool)> = xs.iter().map(|&x| (x, true)).collect();
        let mut reachable = vec![false; n];
        while let Some((v, up)) = queue.pop_front() {
            if visited[v][up as usize] {
                continue;
            }
            visited[v][up as usize] = true;
            if !in_z[v] {
                reachable[v] = true;
            }
            if up {
                if !in_z[v] {
                    queue.extend(parents_of(v).map(|p| (p, true)));
                    queue.extend(children(v).iter().map(|&c| (c, false)));
                }
            } else {
                if !in_z[v] {
                    queue.extend(children(v).iter().map(|&c| (c, false)));
                }
                if anc_z[v] {
                    queue.extend(parents_of(v).map(|p| (p, true)));
                }
            }
        }
        ys.iter().all(|&y| !reachable[y] || xs.contains(&y))
    }

    /// Backdoor criterion for treatments `bs` and outcomes `ys`: `c` holds no
    /// descendant of a treatment or outcome, and blocks every path that enters a
    /// treatment (other treatments count as conditioned).
    pub fn satisfies_backdoor(&self, bs: &[usize], ys: &[usize], c: &[usize]) -> bool {
        let forbidden = self.descendants(bs).union(&self.descendants(ys)).copied().collect::<BTreeSet<_>>();
        if c.iter().any(|v| forbidden.contains(v) || bs.contains(v) || ys.contains(v)) {
            return false;
        }
        bs.iter().all(|&b| {
            let mut z: Vec<usize> = c.to_vec();
            z.extend(bs.iter().copied().filter(|&o| o != b));
            let targets: Vec<usize> = ys.iter().copied().filter(|y| !z.contains(y)).collect();
            self.d_separated(&[b], &targets, &z, &[b])
        })
    }

    /// Greedy minimal backdoor set: start from every non-descendant of the
    /// treatments and outcomes, then drop nodes in lexicographic name order
    /// whenever the remaining set still satisfies the criterion.
    pub fn backdoor_set(&self, bs: &[usize], ys: &[usize]) -> Vec<usize> {
        let forbidden = self.descendants(bs).union(&self.descendants(ys)).copied().collect::<BTreeSet<_>>();
        let mut current: Vec<usize> = (0..self.nodes.len())
            .filter(|v| !forbidden.contains(v) && !bs.contains(v) && !ys.contains(v))
            .collect();
        let mut order = current.clone();
        order.sort_by(|&a, &b| self.nodes[a].cmp(&self.nodes[b]));
        for v in order {
            let trial: Vec<usize> = current.iter().copied().filter(|&x| x != v).collect();
            if self.satisfies_backdoor(bs, ys, &trial) {
                current = trial;
            }
        }
        current.sort_by(|&a, &b| self.nodes[a].cmp(&self.nodes[b]));
        current
    }

    pub fn backdoor_set_by_name(&self, bs: &[&str], ys: &[&str]) -> Result<Vec<String>> {
        let b = self.indices(bs)?;
        let y = self.indices(ys)?;
        Ok(self.backdoor_set(&b, &y).into_iter().map(|v| self.nodes[v].clone()).collect())
    }

    pub fn indices(&self, names: &[&str]) -> Result<Vec<usize>> {
        names
            .iter()
            .map(|n| self.index(n).ok_or_else(|| Error::UnknownAttribute(n.to_string())))
            .collect()
    }

    /// Checks node names against the schema and the immutability rule: an
    /// immutable attribute may only have immutable parents.
    pub fn validate_against(&self, schema: &Schema) -> Result<()> {
        for n in &self.nodes {
            if schema.resolve(n).is_none() {
                return Err(Error::DanglingAttribute(n.clone()));
            }
        }
        for e in &self.edges {
            let (cr, ca) = schema.resolve(&self.nodes[e.to]).expect("resolved above");
            let (pr, pa) = schema.resolve(&self.nodes[e.from]).expect("resolved above");
            let child_mutable = schema.relations[cr].attrs[ca].mutable;
            let parent_mutable = schema.relations[pr].attrs[pa].mutable;
            if !child_mutable && parent_mutable {
                return Err(Error::Config(format!(
                    "immutable attribute `{}` cannot depend on mutable `{}`",
                    self.nodes[e.to], self.nodes[e.from]
                )));
            }
            if let Some(g) = &e.group_by {
                let has = schema.relations[pr].attr_index(g).is_some() || schema.relations[cr].attr_index(g).is_some();
                if !has {
                    return Err(Error::UnknownAttribute(g.clone()));
                }
            }
            if pr != cr && !e.cross_tuple && schema.joins_between(pr, cr).is_empty() {
                return Err(Error::Config(format!(
                    "edge {} -> {} spans relations without a foreign key",
                    self.nodes[e.from], self.nodes[e.to]
                )));
            }
        }
        Ok(())
    }

    /// Drops nodes not in `keep`, reconnecting each removed node's parents to
    /// its children (latent projection), and renames kept nodes via `rename`.
    pub fn project(&self, keep: &dyn Fn(&str) -> Option<String>) -> Result<CausalDag> {
        let n = self.nodes.len();
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for e in &self.edges {
            if e.from != e.to {
                adj[e.from].insert(e.to);
            }
        }
        let order = self.topo_order()?;
        let kept: Vec<Option<String>> = self.nodes.iter().map(|s| keep(s)).collect();
        for &v in &order {
            if kept[v].is_some() {
                continue;
            }
            let ps: Vec<usize> = (0..n).filter(|&p| adj[p].contains(&v)).collect();
            let cs: Vec<usize> = adj[v].iter().copied().collect();
            for &p in &ps {
                adj[p].remove(&v);
                for &c in &cs {
                    if c != p {
                        adj[p].insert(c);
                    }
                }
            }
            adj[v].clear();
        }
        let mut out = CausalDag::empty(Vec::new());
        let mut map = vec![usize::MAX; n];
        for &v in &order {
            if let Some(name) = &kept[v] {
                map[v] = out.add_node(name);
            }
        }
        for v in 0..n {
            if kept[v].is_none() {
                continue;
            }
            for &c in &adj[v] {
                if kept[c].is_some() && map[v] != map[c] {
                    out.add_edge(Edge { from: map[v], to: map[c], cross_tuple: false, group_by: None });
                }
            }
        }
        out.topo_order()?;
        Ok(out)
    }
}

/// No-background model: every other attribute points at each treatment and
/// each outcome, and each treatment points at each outcome.
pub fn canonical_dag(attrs: &[String], bs: &[String], ys: &[String]) -> CausalDag {
    let mut dag = CausalDag::empty(Vec::new());
    for a in attrs.iter().chain(bs).chain(ys) {
        dag.add_node(a);
    }
    let others: Vec<usize> = attrs
        .iter()
        .filter(|a| !bs.contains(a) && !ys.contains(a))
        .map(|a| dag.index(a).unwrap())
        .collect();
    let bi: Vec<usize> = bs.iter().map(|b| dag.index(b).unwrap()).collect();
    let yi: Vec<usize> = ys.iter().filter(|y| !bs.contains(y)).map(|y| dag.index(y).unwrap()).collect();
    for &o in &others {
        for &t in bi.iter().chain(&yi) {
            dag.add_edge(Edge { from: o, to: t, cross_tuple: false, group_by: None });
        }
    }
    for &b in &bi {
        for &y in &yi {
            dag.add_edge(Edge { from: b, to: y, cross_tuple: false, group_by: None });
        }
    }
    dag
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confounder_backdoor() {
        let d = CausalDag::from_names(&["B", "C", "Y"], &[("C", "B"), ("C", "Y"), ("B", "Y")]).unwrap();
        assert_eq!(d.backdoor_set_by_name(&["B"], &["Y"]).unwrap(), vec!["C"]);
        let d = CausalDag::from_names(&["B", "Y"], &[("B", "Y")]).unwrap();
        assert!(d.backdoor_set_by_name(&["B"], &["Y"]).unwrap().is_empty());
    }

    #[test]
    fn cycle_is_reported() {
        let err = CausalDag::from_names(&["A", "B", "C"], &[("A", "B"), ("B", "C"), ("C", "A")]).unwrap_err();
        let Error::CycleDetected(c) = err else { panic!() };
        assert_eq!(c.len(), 4);
        assert_eq!(c.first(), c.last());
    }

    #[test]
    fn collider_is_not_conditioned() {
        // B <- A -> M <- Z -> Y, B -> Y: conditioning on M opens a path.
        let d = CausalDag::from_names(
            &["A", "B", "M", "Y", "Z"],
            &[("A", "B"), ("A", "M"), ("Z", "M"), ("Z", "Y"), ("B", "Y")],
        )
        .unwrap();
        let idx = |s: &str| d.index(s).unwrap();
        assert!(d.satisfies_backdoor(&[idx("B")], &[idx("Y")], &[]));
        assert!(!d.satisfies_backdoor(&[idx("B")], &[idx("Y")], &[idx("M")]));
        assert!(d.satisfies_backdoor(&[idx("B")], &[idx("Y")], &[idx("M"), idx("Z")]));
        assert!(d.backdoor_set(&[idx("B")], &[idx("Y")]).is_empty());
    }

    #[test]
    fn projection_reconnects_through_removed_nodes() {
        let d = CausalDag::from_names(&["A", "B", "C"], &[("A", "B"), ("B", "C")]).unwrap();
        let p = d.project(&|n| if n == "B" { None } else { Some(n.to_string()) }).unwrap();
        assert_eq!(p.parent_names("C"), vec!["A"]);
    }
}
