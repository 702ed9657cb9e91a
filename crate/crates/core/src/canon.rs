//! Canonical codes for rooted (decorated) graphs.
//!
//! Two rooted graphs with identical decorations get equal codes iff they are
//! rooted-isomorphic. Trees of any size use the classic sorted-children
//! encoding. General graphs are capped at 12 vertices and canonicalized by
//! minimizing the adjacency encoding over root-fixing permutations, after a
//! Weisfeiler-Lehman-style refinement to cut the permutation space down.

use crate::error::{Error, Result};
use crate::graph::{RootedGraph, RootedNetwork};

const GENERAL_CAP: usize = 12;
const CANDIDATE_BUDGET: usize = 1_000_000;

/// Code of a rooted graph; vertex types participate when present.
pub fn canonical_code(g: &RootedGraph) -> Result<Vec<u8>> {
    let labels: Vec<u64> = match g.types() {
        Some(t) => t.iter().map(|&q| q as u64 + 1).collect(),
        None => vec![0; g.n()],
    };
    code_with_labels(g, &labels)
}

/// Code of a rooted network: spins join the per-vertex decoration.
pub fn canonical_code_network(net: &RootedNetwork) -> Result<Vec<u8>> {
    let g = &net.graph;
    let labels: Vec<u64> = (0..g.n())
        .map(|v| {
            let t = g.vertex_type(v).map(|q| q as u64 + 1).unwrap_or(0);
            let m = (net.marks[v] as i64 + 2) as u64; // -1 -> 1, +1 -> 3
            (t << 8) | m
        })
        .collect();
    code_with_labels(g, &labels)
}

pub fn code_with_labels(g: &RootedGraph, labels: &[u64]) -> Result<Vec<u8>> {
    debug_assert_eq!(labels.len(), g.n());
    if g.is_tree() {
        let mut out = vec![b'T'];
        out.extend(tree_code(g, labels, g.root(), usize::MAX));
        Ok(out)
    } else {
        if g.n() > GENERAL_CAP {
            return Err(Error::SizeGuard {
                op: "canonical_code (non-tree)",
                n: g.n(),
                limit: GENERAL_CAP,
            });
        }
        let mut out = vec![b'G'];
        out.extend(general_code(g, labels)?);
        Ok(out)
    }
}

fn tree_code(g: &RootedGraph, labels: &[u64], v: usize, parent: usize) -> Vec<u8> {
    let mut children: Vec<Vec<u8>> = Vec::new();
    let mut skipped_parent = false;
    for &w in g.adj(v) {
        // exactly one adjacency entry leads back to the parent in a tree
        if w == parent && !skipped_parent {
            skipped_parent = true;
            continue;
        }
        children.push(tree_code(g, labels, w, v));
    }
    children.sort_unstable();
    let mut code = Vec::with_capacity(10 + children.iter().map(|c| c.len()).sum::<usize>());
    code.push(b'(');
    code.extend_from_slice(&labels[v].to_le_bytes());
    for c in children {
        code.extend(c);
    }
    code.push(b')');
    code
}

fn general_code(g: &RootedGraph, labels: &[u64]) -> Result<Vec<u8>> {
    let n = g.n();
    // multiplicity matrix; loop edges recorded once on the diagonal
    let mut mult = vec![0u8; n * n];
    for &(u, v) in g.edges() {
        if u == v {
            mult[u * n + u] += 1;
        } else {
            mult[u * n + v] += 1;
            mult[v * n + u] += 1;
        }
    }

    let color = refine_colors(g, labels);
    // candidate orderings: root first, then cells of equal color in a fixed
    // color order; all within-cell permutations are tried
    let mut rest: Vec<usize> = (0..n).filter(|&v| v != g.root()).collect();
    rest.sort_by_key(|&v| (color[v], v));
    let mut cells: Vec<Vec<usize>> = Vec::new();
    for &v in &rest {
        match cells.last() {
            Some(c) if color[c[0]] == color[v] => cells.last_mut().unwrap().push(v),
            _ => cells.push(vec![v]),
        }
    }
    let mut budget: usize = CANDIDATE_BUDGET;
    let total: Option<usize> = cells
        .iter()
        .map(|c| factorial(c.len()))
        .try_fold(1usize, |a, b| a.checked_mul(b?));
    if total.is_none() || total.unwrap() > budget {
        return Err(Error::SizeGuard {
            op: "canonical_code (symmetric non-tree)",
            n,
            limit: GENERAL_CAP,
        });
    }

    let mut best: Option<Vec<u8>> = None;
    let mut perm = vec![g.root()];
    enumerate_cells(&cells, 0, &mut perm, &mut |order: &[usize]| {
        let enc = encode_under(order, labels, &mult, n);
        if best.as_ref().map(|b| enc < *b).unwrap_or(true) {
            best = Some(enc);
        }
    }, &mut budget);
    Ok(best.unwrap())
}

fn factorial(k: usize) -> Option<usize> {
    (1..=k).try_fold(1usize, |a, b| a.checked_mul(b))
}

fn enumerate_cells(
    cells: &[Vec<usize>],
    i: usize,
    perm: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize]),
    budget: &mut usize,
) {
    if *budget == 0 {
        return;
    }
    if i == cells.len() {
        *budget -= 1;
        visit(perm);
        return;
    }
    let cell = cells[i].clone();
    permute_into(cell, perm, cells, i, visit, budget);
}

fn permute_into(
    mut cell: Vec<usize>,
    perm: &mut Vec<usize>,
    cells: &[Vec<usize>],
    i: usize,
    visit: &mut impl FnMut(&[usize]),
    budget: &mut usize,
) {
    if cell.is_empty() {
        enumerate_cells(cells, i + 1, perm, visit, budget);
        return;
    }
    for k in 0..cell.len() {
        let v = cell.remove(k);
        perm.push(v);
        permute_into(cell.clone(), perm, cells, i, visit, budget);
        perm.pop();
        cell.insert(k, v);
    }
}

/// order[pos] = original vertex; encodes labels then the upper triangle.
fn encode_under(order: &[usize], labels: &[u64], mult: &[u8], n: usize) -> Vec<u8> {
    let mut enc = Vec::with_capacity(8 * n + n * n / 2);
    for &v in order {
        enc.extend_from_slice(&labels[v].to_le_bytes());
    }
    for i in 0..n {
        for j in i..n {
            enc.push(mult[order[i] * n + order[j]]);
        }
    }
    enc
}

/// Color refinement seeded by (distance from root, degree, label), iterated to
/// a stable partition. Colors are isomorphism-invariant, so restricting
/// candidate permutations to color-preserving ones is sound.
fn refine_colors(g: &RootedGraph, labels: &[u64]) -> Vec<u64> {
    let n = g.n();
    let dist = g.distances(g.root());
    let mut color: Vec<u64> = (0..n)
        .map(|v| hash3(dist[v] as u64, g.degree(v) as u64, labels[v]))
        .collect();
    for _ in 0..n {
        let mut next = Vec::with_capacity(n);
        for v in 0..n {
            let mut neigh: Vec<u64> = g.adj(v).iter().map(|&w| color[w]).collect();
            neigh.sort_unstable();
            let mut h = color[v];
            for c in neigh {
                h = hash3(h, c, 0x9e3779b97f4a7c15);
            }
            next.push(h);
        }
        if next == color {
            break;
        }
        color = next;
    }
    color
}

fn hash3(a: u64, b: u64, c: u64) -> u64 {
    let mut h = a.wrapping_mul(0x100000001b3) ^ b;
    h = h.wrapping_mul(0x100000001b3) ^ c;
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51afd7ed558ccd);
    h ^ (h >> 33)
}
