//! Block-independent decomposition: tuples whose cells are linked by a path in
//! the ground causal graph land in the same block.

use std::collections::HashMap;

use serde::Serialize;

use crate::causal::ground::GroundCausalGraph;
use crate::datamodel::{Database, TupleId};
use crate::view::RelevantView;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    /// Members of each block ordered by (relation, row); blocks ordered by first member.
    pub blocks: Vec<Vec<TupleId>>,
    pub of: HashMap<TupleId, usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockJson {
    pub id: String,
    pub tuples: Vec<String>,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

impl BlockPartition {
    /// Collects items into blocks by union-find root.
    fn from_groups(items: Vec<TupleId>, uf: &mut UnionFind) -> BlockPartition {
        let mut by_root: HashMap<usize, usize> = HashMap::new();
        let mut blocks: Vec<Vec<TupleId>> = Vec::new();
        for (i, t) in items.iter().enumerate() {
            let r = uf.find(i);
            let b = *by_root.entry(r).or_insert_with(|| {
                blocks.push(Vec::new());
                blocks.len() - 1
            });
            blocks[b].push(*t);
        }
        for b in &mut blocks {
            b.sort_by_key(|t| (t.relation, t.row));
        }
        blocks.sort_by_key(|b| (b[0].relation, b[0].row));
        let of = blocks.iter().enumerate().flat_map(|(i, b)| b.iter().map(move |t| (*t, i))).collect();
        BlockPartition { blocks, of }
    }

    /// Every tuple in one block.
    pub fn single(db: &Database) -> BlockPartition {
        let items: Vec<TupleId> = db.tuple_ids().collect();
        let mut uf = UnionFind::new(items.len());
        for i in 1..items.len() {
            uf.union(0, i);
        }
        Self::from_groups(items, &mut uf)
    }

    /// Builds a partition from explicit blocks (used to test corrupted partitions).
    pub fn from_blocks(blocks: Vec<Vec<TupleId>>) -> BlockPartition {
        let of = blocks.iter().enumerate().flat_map(|(i, b)| b.iter().map(move |t| (*t, i))).collect();
        BlockPartition { blocks, of }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block_of(&self, t: TupleId) -> Option<usize> {
        self.of.get(&t).copied()
    }

    pub fn block_id(&self, db: &Database, b: usize) -> String {
        self.labels(db, b).join(",")
    }

    pub fn labels(&self, db: &Database, b: usize) -> Vec<String> {
        self.blocks[b].iter().map(|t| db.tuple_label(t)).collect()
    }

    pub fn to_json(&self, db: &Database) -> Vec<BlockJson> {
        (0..self.blocks.len())
            .map(|b| BlockJson { id: self.block_id(db, b), tuples: self.labels(db, b) })
            .collect()
    }

    /// Disjoint and covering over the database tuples.
    pub fn is_partition_of(&self, db: &Database) -> bool {
        let total: usize = self.blocks.iter().map(Vec::len).sum();
        total == db.tuple_count() && self.of.len() == total && db.tuple_ids().all(|t| self.of.contains_key(&t))
    }
}

/// Connected components of the undirected ground graph, lifted to tuples.
pub fn decompose(g: &GroundCausalGraph, db: &Database) -> BlockPartition {
    let items: Vec<TupleId> = db.tuple_ids().collect();
    let index: HashMap<TupleId, usize> = items.iter().enumerate().map(|(i, t)| (*t, i)).collect();
    let mut uf = UnionFind::new(items.len());
    for &(a, b) in &g.edges {
        uf.union(index[&g.cells[a].tuple], index[&g.cells[b].tuple]);
    }
    BlockPartition::from_groups(items, &mut uf)
}

/// Blocks of view rows: rows are linked when a ground edge joins any of
/// their member tuples. Returns a block index per view row.
pub fn view_blocks(view: &RelevantView, g: &GroundCausalGraph) -> Vec<usize> {
    let mut owner: HashMap<TupleId, Vec<usize>> = HashMap::new();
    for (r, m) in view.members.iter().enumerate() {
        for t in m {
            owner.entry(*t).or_default().push(r);
        }
    }
    let mut uf = UnionFind::new(view.len());
    for rows in owner.values() {
        for w in rows.windows(2) {
            uf.union(w[0], w[1]);
        }
    }
    for &(a, b) in &g.edges {
        if let (Some(ra), Some(rb)) = (owner.get(&g.cells[a].tuple), owner.get(&g.cells[b].tuple)) {
            uf.union(ra[0], rb[0]);
        }
    }
    let mut ids: HashMap<usize, usize> = HashMap::new();
    (0..view.len())
        .map(|r| {
            let root = uf.find(r);
            let n = ids.len();
            *ids.entry(root).or_insert(n)
        })
        .collect()
}

/// True iff two view rows share a block of `partition` exactly when they
/// share a block of the view's induced graph.
pub fn blocks_consistent_with_view(partition: &BlockPartition, view: &RelevantView, g: &GroundCausalGraph) -> bool {
    let vb = view_blocks(view, g);
    let rel = view.relation;
    let db_block: Vec<Option<usize>> =
        view.row_tuples.iter().map(|&row| partition.block_of(TupleId { relation: rel, row })).collect();
    for i in 0..view.len() {
        for j in i + 1..view.len() {
            let same_db = db_block[i].is_some() && db_block[i] == db_block[j];
            if same_db != (vb[i] == vb[j]) {
                return false;
            }
        }
    }
    true
}
