//! Rewrites a FOR predicate into a disjunction of (pre-part, post-part)
//! conjuncts such that every (pre, post) row pair satisfies at most one.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hql::ast::{CmpOp, Expr, Pred, Side};
use crate::hql::eval::{compile, Layout, RowPair};
use crate::hql::render::render_pred;
use crate::value::Value;

pub const DEFAULT_ATOM_CAP: usize = 1_000_000;
/// Largest assignment space enumerated by satisfiability checks; larger spaces
/// are conservatively treated as satisfiable.
const SAT_ENUM_CAP: usize = 1_000_000;
/// Largest overlapping component expanded by truth patterns.
const MAX_COMPONENT: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Conjunct {
    /// Reads PRE values only.
    pub pre: Pred,
    /// Reads POST values only.
    pub post: Pred,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisjointDnf {
    pub conjuncts: Vec<Conjunct>,
}

impl DisjointDnf {
    pub fn always() -> DisjointDnf {
        DisjointDnf { conjuncts: vec![Conjunct { pre: Pred::Const(true), post: Pred::Const(true) }] }
    }

    pub fn to_pred(&self) -> Pred {
        Pred::or(self.conjuncts.iter().map(|c| Pred::and(vec![c.pre.clone(), c.post.clone()])).collect())
    }

    pub fn render(&self) -> Vec<String> {
        self.conjuncts
            .iter()
            .map(|c| render_pred(&Pred::and(vec![c.pre.clone(), c.post.clone()])))
            .collect()
    }
}

fn nnf(p: &Pred, negate: bool) -> Pred {
    match p {
        Pred::Cmp { l, op, r } => {
            Pred::Cmp { l: l.clone(), op: if negate { op.negate() } else { *op }, r: r.clone() }
        }
        Pred::In { e, values, negated } => Pred::In { e: e.clone(), values: values.clone(), negated: *negated != negate },
        Pred::Not(x) => nnf(x, !negate),
        Pred::And(ps) if !negate => Pred::and(ps.iter().map(|x| nnf(x, false)).collect()),
        Pred::And(ps) => Pred::or(ps.iter().map(|x| nnf(x, true)).collect()),
        Pred::Or(ps) if !negate => Pred::or(ps.iter().map(|x| nnf(x, false)).collect()),
        Pred::Or(ps) => Pred::and(ps.iter().map(|x| nnf(x, true)).collect()),
        Pred::Const(b) => Pred::Const(*b != negate),
    }
}

/// DNF of an NNF predicate as lists of atoms.
fn dnf(p: &Pred, cap: usize) -> Result<Vec<Vec<Pred>>> {
    match p {
        Pred::Const(true) => Ok(vec![vec![]]),
        Pred::Const(false) => Ok(vec![]),
        Pred::Or(ps) => {
            let mut out = Vec::new();
            for x in ps {
                out.extend(dnf(x, cap)?);
                check_cap(&out, cap)?;
            }
            Ok(out)
        }
        Pred::And(ps) => {
            let mut acc: Vec<Vec<Pred>> = vec![vec![]];
            for x in ps {
                let d = dnf(x, cap)?;
                let mut next = Vec::with_capacity(acc.len() * d.len());
                for a in &acc {
                    for b in &d {
                        let mut c = a.clone();
                        c.extend(b.iter().cloned());
                        next.push(c);
                    }
                }
                check_cap(&next, cap)?;
                acc = next;
            }
            Ok(acc)
        }
        atom => Ok(vec![vec![atom.clone()]]),
    }
}

fn check_cap(conjuncts: &[Vec<Pred>], cap: usize) -> Result<()> {
    let atoms: usize = conjuncts.iter().map(|c| c.len().max(1)).sum();
    if atoms > cap {
        Err(Error::DomainTooLarge { cap })
    } else {
        Ok(())
    }
}

/// Variables (side, column) referenced by the predicates.
fn vars_of(preds: &[&Pred], layout: Layout<'_>) -> Result<Vec<(Side, usize)>> {
    let mut set = BTreeSet::new();
    for p in preds {
        for (side, name) in p.attrs() {
            let col = layout
                .names
                .iter()
                .position(|n| *n == name)
                .ok_or_else(|| Error::UnknownAttribute(name.clone()))?;
            set.insert((side, col));
        }
    }
    Ok(set.into_iter().collect())
}

/// Calls `visit` for every assignment of `vars` (levels written into the pre/post rows).
fn enumerate(
    vars: &[(Side, usize)],
    layout: Layout<'_>,
    mut visit: impl FnMut(&[u32], &[u32]) -> Result<bool>,
) -> Result<()> {
    let n = layout.names.len();
    let mut pre = vec![0u32; n];
    let mut post = vec![0u32; n];
    let sizes: Vec<usize> = vars.iter().map(|&(_, c)| layout.domains[c].len()).collect();
    let mut idx = vec![0usize; vars.len()];
    loop {
        for (k, &(side, c)) in vars.iter().enumerate() {
            match side {
                Side::Pre => pre[c] = idx[k] as u32,
                Side::Post => post[c] = idx[k] as u32,
            }
        }
        if !visit(&pre, &post)? {
            return Ok(());
        }
        let mut k = vars.len();
        loop {
            if k == 0 {
                return Ok(());
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < sizes[k] {
                break;
            }
            idx[k] = 0;
        }
    }
}

fn space(vars: &[(Side, usize)], layout: Layout<'_>) -> usize {
    vars.iter()
        .try_fold(1usize, |acc, &(_, c)| acc.checked_mul(layout.domains[c].len()))
        .unwrap_or(usize::MAX)
}

/// Whether some assignment satisfies every predicate (conservatively `true`
/// when the assignment space is too large to enumerate).
pub fn satisfiable(preds: &[&Pred], layout: Layout<'_>) -> Result<bool> {
    let vars = vars_of(preds, layout)?;
    if space(&vars, layout) > SAT_ENUM_CAP {
        return Ok(true);
    }
    let compiled = preds.iter().map(|p| compile(p, layout)).collect::<Result<Vec<_>>>()?;
    let mut found = false;
    enumerate(&vars, layout, |pre, post| {
        let rows = RowPair { pre, post, domains: layout.domains };
        if compiled.iter().all(|c| c.eval(&rows)) {
            found = true;
            return Ok(false);
        }
        Ok(true)
    })?;
    Ok(found)
}

fn side_of(p: &Pred) -> Option<Option<Side>> {
    let sides: BTreeSet<Side> = p.attrs().into_iter().map(|(s, _)| s).collect();
    match sides.len() {
        0 => Some(None),
        1 => Some(sides.into_iter().next()),
        _ => None,
    }
}

fn eq_atom(side: Side, name: &str, v: Value) -> Pred {
    let r = match v {
        Value::Num(x) => Expr::Num(x),
        Value::Str(s) => Expr::Str(s),
    };
    Pred::Cmp { l: Expr::Attr { side, name: name.to_string() }, op: CmpOp::Eq, r }
}

/// Splits one DNF conjunct into (pre, post) conjuncts, enumerating the values
/// of attributes read by atoms that mix PRE and POST.
fn split_conjunct(atoms: Vec<Pred>, layout: Layout<'_>, cap: usize) -> Result<Vec<(Vec<Pred>, Vec<Pred>)>> {
    let mut pre = Vec::new();
    let mut post = Vec::new();
    let mut mixed = Vec::new();
    for a in atoms {
        match side_of(&a) {
            Some(None) => {
                if !satisfiable(&[&a], layout)? {
                    return Ok(vec![]);
                }
            }
            Some(Some(Side::Pre)) => pre.push(a),
            Some(Some(Side::Post)) => post.push(a),
            None => mixed.push(a),
        }
    }
    if mixed.is_empty() {
        return Ok(vec![(pre, post)]);
    }
    let refs: Vec<&Pred> = mixed.iter().collect();
    let vars = vars_of(&refs, layout)?;
    if space(&vars, layout) > cap {
        return Err(Error::DomainTooLarge { cap });
    }
    let compiled = refs.iter().map(|p| compile(p, layout)).collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    let mut atoms_total = 0usize;
    enumerate(&vars, layout, |pr, po| {
        let rows = RowPair { pre: pr, post: po, domains: layout.domains };
        if compiled.iter().all(|c| c.eval(&rows)) {
            let mut p = pre.clone();
            let mut q = post.clone();
            for &(side, c) in &vars {
                let name = &layout.names[c];
                match side {
                    Side::Pre => p.push(eq_atom(side, name, layout.domains[c].value(pr[c] as usize))),
                    Side::Post => q.push(eq_atom(side, name, layout.domains[c].value(po[c] as usize))),
                }
            }
            atoms_total += p.len() + q.len();
            if atoms_total > cap {
                return Err(Error::DomainTooLarge { cap });
            }
            out.push((p, q));
        }
        Ok(true)
    })?;
    Ok(out)
}

/// Normalizes a FOR predicate into disjoint (pre, post) conjuncts.
pub fn normalize_for(pred: &Pred, layout: Layout<'_>, cap: usize) -> Result<DisjointDnf> {
    let n = nnf(pred, false);
    let terms = dnf(&n, cap)?;
    let mut conjuncts: Vec<Conjunct> = Vec::new();
    let mut atoms = 0usize;
    for t in terms {
        for (p, q) in split_conjunct(t, layout, cap)? {
            atoms += p.len() + q.len();
            if atoms > cap {
                return Err(Error::DomainTooLarge { cap });
            }
            let (pre, post) = (Pred::and(p), Pred::and(q));
            if satisfiable(&[&pre], layout)? && satisfiable(&[&post], layout)? {
                conjuncts.push(Conjunct { pre, post });
            }
        }
    }
    // Components of the overlap graph.
    let k = conjuncts.len();
    let mut parent: Vec<usize> = (0..k).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut y = x;
        while p[y] != r {
            let next = p[y];
            p[y] = r;
            y = next;
        }
        r
    }
    for i in 0..k {
        for j in (i + 1)..k {
            let (a, b) = (&conjuncts[i], &conjuncts[j]);
            if satisfiable(&[&a.pre, &b.pre], layout)? && satisfiable(&[&a.post, &b.post], layout)? {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut components: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; k];
    for i in 0..k {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = components.len();
            components.push(Vec::new());
        }
        components[slot[r]].push(i);
    }
    let mut out = Vec::new();
    for comp in components {
        if comp.len() == 1 {
            out.push(conjuncts[comp[0]].clone());
            continue;
        }
        if comp.len() > MAX_COMPONENT {
            return Err(Error::DomainTooLarge { cap });
        }
        // One conjunct per non-empty set J of members whose pre-parts hold:
        // pre = AND_{J} P_j AND AND_{not J} NOT P_j, post = OR_{J} Q_j.
        for mask in 1u64..(1u64 << comp.len()) {
            let mut pre_parts = Vec::new();
            let mut post_parts = Vec::new();
            for (bit, &i) in comp.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    pre_parts.push(conjuncts[i].pre.clone());
                    post_parts.push(conjuncts[i].post.clone());
                } else {
                    pre_parts.push(Pred::negate(conjuncts[i].pre.clone()));
                }
            }
            let pre = Pred::and(pre_parts);
            let post = Pred::or(post_parts);
            if matches!(pre, Pred::Const(false)) || !satisfiable(&[&pre], layout)? {
                continue;
            }
            out.push(Conjunct { pre, post });
            if out.len() > cap {
                return Err(Error::DomainTooLarge { cap });
            }
        }
    }
    Ok(DisjointDnf { conjuncts: out })
}
