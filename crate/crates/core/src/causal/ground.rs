use std::collections::{HashMap, VecDeque};

use crate::causal::dag::CausalDag;
use crate::datamodel::{Database, TupleId};
use crate::error::{Error, Result};
use crate::value::ValueRef;

/// One attribute cell `A[t]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub tuple: TupleId,
    pub attr: usize,
}

/// Cell-level instantiation of an attribute DAG over a database.
#[derive(Debug, Clone, Default)]
pub struct GroundCausalGraph {
    pub cells: Vec<Cell>,
    pub edges: Vec<(usize, usize)>,
    index: HashMap<Cell, usize>,
}

impl GroundCausalGraph {
    pub fn cell_index(&self, c: &Cell) -> Option<usize> {
        self.index.get(c).copied()
    }

    pub fn node_count(&self) -> usize {
        self.cells.len()
    }

    pub fn has_edge(&self, from: Cell, to: Cell) -> bool {
        match (self.cell_index(&from), self.cell_index(&to)) {
            (Some(a), Some(b)) => self.edges.contains(&(a, b)),
            _ => false,
        }
    }

    /// Cells reachable from `from` along edges in either direction.
    pub fn connected(&self, from: usize, to: usize) -> bool {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); self.cells.len()];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; self.cells.len()];
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(v) = queue.pop_front() {
            if v == to {
                return true;
            }
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        false
    }

    /// Cells left on a cycle, or empty when acyclic.
    fn cyclic_cells(&self) -> Vec<usize> {
        let n = self.cells.len();
        let mut indeg = vec![0usize; n];
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(a, b) in &self.edges {
            indeg[b] += 1;
            out[a].push(b);
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut done = 0;
        while let Some(v) = queue.pop_front() {
            done += 1;
            for &w in &out[v] {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    queue.push_back(w);
                }
            }
        }
        if done == n {
            return Vec::new();
        }
        (0..n).filter(|&v| indeg[v] > 0).collect()
    }
}

/// Value of the grouping attribute for a tuple: its own attribute when the
/// relation has it, otherwise the value on a joined tuple.
fn group_value<'a>(db: &'a Database, t: TupleId, group_by: &str) -> Vec<ValueRef<'a>> {
    let decl = &db.schema.relations[t.relation];
    if let Some(a) = decl.attr_index(group_by) {
        return vec![db.value(t.relation, t.row, a)];
    }
    let mut out = Vec::new();
    for (other, odecl) in db.schema.relations.iter().enumerate() {
        if other == t.relation {
            continue;
        }
        if let Some(a) = odecl.attr_index(group_by) {
            for j in db.joined_rows(t.relation, t.row, other) {
                out.push(db.value(other, j, a));
            }
        }
    }
    out
}

/// Grounds a database-level DAG (nodes `Rel.Attr`) over `db`.
pub fn ground(dag: &CausalDag, db: &Database) -> Result<GroundCausalGraph> {
    let mut resolved = Vec::with_capacity(dag.len());
    for n in &dag.nodes {
        resolved.push(db.schema.resolve(n).ok_or_else(|| Error::DanglingAttribute(n.clone()))?);
    }
    dag.topo_order()?;
    let mut g = GroundCausalGraph::default();
    for &(rel, attr) in &resolved {
        for row in 0..db.relations[rel].rows.len() {
            let c = Cell { tuple: TupleId { relation: rel, row }, attr };
            if !g.index.contains_key(&c) {
                g.index.insert(c, g.cells.len());
                g.cells.push(c);
            }
        }
    }
    let mut edge_set = std::collections::HashSet::new();
    let mut push = |g: &mut GroundCausalGraph, a: Cell, b: Cell| {
        let (ia, ib) = (g.index[&a], g.index[&b]);
        if ia != ib && edge_set.insert((ia, ib)) {
            g.edges.push((ia, ib));
        }
    };
    for e in &dag.edges {
        let (pr, pa) = resolved[e.from];
        let (cr, ca) = resolved[e.to];
        let n_parent = db.relations[pr].rows.len();
        let n_child = db.relations[cr].rows.len();
        if !e.cross_tuple {
            if pr == cr {
                for row in 0..n_parent {
                    let t = TupleId { relation: pr, row };
                    push(&mut g, Cell { tuple: t, attr: pa }, Cell { tuple: t, attr: ca });
                }
            } else {
                for row in 0..n_parent {
                    for j in db.joined_rows(pr, row, cr) {
                        push(
                            &mut g,
                            Cell { tuple: TupleId { relation: pr, row }, attr: pa },
                            Cell { tuple: TupleId { relation: cr, row: j }, attr: ca },
                        );
                    }
                }
            }
            continue;
        }
        let child_groups: Vec<Vec<ValueRef>> = (0..n_child)
            .map(|j| match &e.group_by {
                Some(gb) => group_value(db, TupleId { relation: cr, row: j }, gb),
                None => Vec::new(),
            })
            .collect();
        for row in 0..n_parent {
            let pt = TupleId { relation: pr, row };
            let pg = e.group_by.as_ref().map(|gb| group_value(db, pt, gb));
            for (j, cg) in child_groups.iter().enumerate() {
                let ct = TupleId { relation: cr, row: j };
                let linked = match &pg {
                    None => true,
                    Some(pg) => pg.iter().any(|v| cg.contains(v)),
                };
                if linked {
                    push(&mut g, Cell { tuple: pt, attr: pa }, Cell { tuple: ct, attr: ca });
                }
            }
        }
    }
    let stuck = g.cyclic_cells();
    if !stuck.is_empty() {
        let names = stuck
            .iter()
            .take(8)
            .map(|&v| {
                let c = g.cells[v];
                let attr = &db.schema.relations[c.tuple.relation].attrs[c.attr].name;
                format!("{}[{}]", attr, db.tuple_label(&c.tuple))
            })
            .collect();
        return Err(Error::CycleDetected(names));
    }
    Ok(g)
}
