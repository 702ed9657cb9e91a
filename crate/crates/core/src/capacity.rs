//! Capacity of finite trees under ray-wise quadratic constraints, the
//! boundary-profile sums it is bounded by, and the envelope inequality for
//! the cavity update.
//!
//! capa3(T_t) = sup { |flow| : every root-to-leaf ray y has
//! sum_{e in y} (flow(e) theta^{-|e|})^2 <= 1 }. The feasible set is an
//! intersection of ellipsoids and the objective is linear, so the optimum
//! equalizes the tight rays; that gives a closed recursion (gamma below) and
//! an exact Lagrangian dual certificate, no iterative solver needed.

use crate::error::{Error, Result};
use crate::graph::RootedGraph;
use crate::ising::f_theta;

/// Nonnegative flow on a rooted tree, one value per non-root vertex for the
/// edge to its parent. Resistance of an edge at depth d is theta^{-d}.
#[derive(Clone, Debug)]
pub struct FlowOnTree {
    pub tree: RootedGraph,
    pub theta: f64,
    /// flow[v] = flow on the edge (parent(v), v); flow[root] is unused (0).
    pub flow: Vec<f64>,
}

impl FlowOnTree {
    pub fn new(tree: RootedGraph, theta: f64, flow: Vec<f64>) -> Result<Self> {
        if !tree.is_tree() {
            return Err(Error::NotATree);
        }
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::BadParameter("theta must be positive".into()));
        }
        if flow.len() != tree.n() {
            return Err(Error::BadParameter("flow length mismatch".into()));
        }
        if flow.iter().any(|&f| f < 0.0 || !f.is_finite()) {
            return Err(Error::BadParameter("flows must be nonnegative".into()));
        }
        Ok(FlowOnTree { tree, theta, flow })
    }

    /// Total flow out of the root.
    pub fn strength(&self) -> f64 {
        let root = self.tree.root();
        self.tree.adj(root).iter().map(|&c| self.flow[c]).sum()
    }

    /// Worst conservation violation |flow(uv) - sum_children flow(vw)| over
    /// internal vertices v.
    pub fn conservation_violation(&self) -> f64 {
        let parent = self.tree.tree_parents().expect("validated tree");
        let root = self.tree.root();
        let mut worst: f64 = 0.0;
        for v in 0..self.tree.n() {
            if v == root {
                continue;
            }
            let children: Vec<usize> = self
                .tree
                .adj(v)
                .iter()
                .copied()
                .filter(|&w| w != parent[v])
                .collect();
            if children.is_empty() {
                continue;
            }
            let out: f64 = children.iter().map(|&c| self.flow[c]).sum();
            worst = worst.max((self.flow[v] - out).abs());
        }
        worst
    }

    /// V = max over root-to-leaf rays of sum (flow(e) R(e))^2.
    pub fn ray_energy_max(&self) -> f64 {
        let parent = self.tree.tree_parents().expect("validated tree");
        let dist = self.tree.distances(self.tree.root());
        let root = self.tree.root();
        let mut load = vec![0.0f64; self.tree.n()];
        let mut worst: f64 = 0.0;
        for &v in &self.tree.bfs_order() {
            if v == root {
                continue;
            }
            let r = self.theta.powi(-(dist[v] as i32));
            load[v] = load[parent[v]] + (self.flow[v] * r).powi(2);
            let is_leaf = self.tree.adj(v).iter().all(|&w| w == parent[v]);
            if is_leaf {
                worst = worst.max(load[v]);
            }
        }
        worst
    }
}

/// |boundary(k)| for k = 1..max depth.
pub fn boundary_profile(tree: &RootedGraph) -> Vec<usize> {
    let dist = tree.distances(tree.root());
    let max_d = dist.iter().copied().max().unwrap_or(0);
    let mut profile = vec![0usize; max_d];
    for v in 0..tree.n() {
        if dist[v] >= 1 {
            profile[dist[v] - 1] += 1;
        }
    }
    profile
}

/// Keep only vertices lying on a root-to-depth-t ray: depth <= t and some
/// descendant at depth exactly t. Errs when the tree never reaches depth t.
pub fn prune_to_depth(tree: &RootedGraph, t: usize) -> Result<RootedGraph> {
    if !tree.is_tree() {
        return Err(Error::NotATree);
    }
    let parent = tree.tree_parents()?;
    let dist = tree.distances(tree.root());
    let order = tree.bfs_order();
    // deepest depth reachable below each vertex, including itself
    let mut reach = dist.clone();
    for &v in order.iter().rev() {
        if v != tree.root() {
            let p = parent[v];
            if reach[v] > reach[p] {
                reach[p] = reach[v];
            }
        }
    }
    if reach[tree.root()] < t {
        return Err(Error::BadParameter(format!(
            "tree has depth {} < t = {t}",
            reach[tree.root()]
        )));
    }
    let keep: Vec<usize> = (0..tree.n())
        .filter(|&v| dist[v] <= t && reach[v] >= t)
        .collect();
    let mut local = vec![usize::MAX; tree.n()];
    for (i, &v) in keep.iter().enumerate() {
        local[v] = i;
    }
    let mut edges = Vec::new();
    for &v in &keep {
        if v != tree.root() {
            edges.push((local[parent[v]], local[v]));
        }
    }
    RootedGraph::new(keep.len(), edges, local[tree.root()])
}

/// Partial sums S(t') = sum_{k=1}^{t'} theta^{-2k} |boundary(k)|^{-2} for
/// t' = 1..profile.len().
pub fn s_t_sum(profile: &[usize], theta: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(profile.len());
    let mut acc = 0.0;
    for (idx, &b) in profile.iter().enumerate() {
        let k = (idx + 1) as i32;
        acc += theta.powi(-2 * k) / (b as f64).powi(2);
        out.push(acc);
    }
    out
}

#[derive(Clone, Debug)]
pub struct Capa3Solution {
    /// Certified feasible value: the strength of `flow`, which satisfies the
    /// ray constraints.
    pub value: f64,
    /// Lagrangian dual upper bound (effective resistance of the weighted
    /// network at the dual multipliers).
    pub upper: f64,
    /// upper - value, nonnegative.
    pub gap: f64,
    pub flow: FlowOnTree,
}

/// Solve the capacity program on a tree whose non-root leaves all sit at one
/// depth. The optimum splits the flow at each vertex so that all rays below
/// carry equal energy:
///   gamma(leaf) = 0,
///   gamma(v) = ( sum_children (R_c^2 + gamma(c))^{-1/2} )^{-2},
///   capa3 = gamma(root)^{-1/2}.
/// The dual certificate puts resistance R_e^2 * flow(e)/strength on each edge
/// and reads off the effective resistance; the program is convex with Slater
/// points, so the two meet up to roundoff.
pub fn capa3_solve(tree: &RootedGraph, theta: f64, tol: f64) -> Result<Capa3Solution> {
    if !tree.is_tree() {
        return Err(Error::NotATree);
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::BadParameter("theta must be positive".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::BadParameter("tol must be positive".into()));
    }
    let n = tree.n();
    let root = tree.root();
    if n == 1 {
        return Ok(Capa3Solution {
            value: 0.0,
            upper: 0.0,
            gap: 0.0,
            flow: FlowOnTree::new(tree.clone(), theta, vec![0.0])?,
        });
    }
    let parent = tree.tree_parents()?;
    let dist = tree.distances(root);
    let order = tree.bfs_order();
    let children: Vec<Vec<usize>> = (0..n)
        .map(|v| {
            tree.adj(v)
                .iter()
                .copied()
                .filter(|&w| if v == root { true } else { w != parent[v] })
                .collect()
        })
        .collect();
    let leaf_depth = {
        let depths: Vec<usize> = (0..n)
            .filter(|&v| v != root && children[v].is_empty())
            .map(|v| dist[v])
            .collect();
        let d0 = depths[0];
        if depths.iter().any(|&d| d != d0) {
            return Err(Error::BadParameter(
                "leaves at mixed depths; prune_to_depth first".into(),
            ));
        }
        d0
    };
    let _ = leaf_depth;

    let r2 = |v: usize| theta.powi(-2 * dist[v] as i32);

    // bottom-up equalization
    let mut gamma = vec![0.0f64; n];
    let mut share = vec![0.0f64; n]; // (R_v^2 + gamma_v)^{-1/2}
    for &v in order.iter().rev() {
        if !children[v].is_empty() {
            let s: f64 = children[v].iter().map(|&c| share[c]).sum();
            gamma[v] = 1.0 / (s * s);
        }
        if v != root {
            share[v] = 1.0 / (r2(v) + gamma[v]).sqrt();
        }
    }
    let primal = 1.0 / gamma[root].sqrt();

    // top-down flow split proportional to shares
    let mut flow = vec![0.0f64; n];
    for &v in &order {
        let inflow = if v == root { primal } else { flow[v] };
        if children[v].is_empty() {
            continue;
        }
        let s: f64 = children[v].iter().map(|&c| share[c]).sum();
        for &c in &children[v] {
            flow[c] = inflow * share[c] / s;
        }
    }

    // certify feasibility: rescale so the worst ray energy is exactly <= 1
    let mut ft = FlowOnTree::new(tree.clone(), theta, flow)?;
    let vmax = ft.ray_energy_max();
    if vmax > 1.0 {
        let scale = 1.0 / vmax.sqrt();
        for f in ft.flow.iter_mut() {
            *f *= scale;
        }
    }
    let value = ft.strength();

    // dual: edge resistances R_e^2 * (flow/strength), effective resistance
    let mut reff = vec![0.0f64; n];
    for &v in order.iter().rev() {
        if !children[v].is_empty() {
            let c_sum: f64 = children[v]
                .iter()
                .map(|&c| 1.0 / (r2(c) * ft.flow[c] / value + reff[c]))
                .sum();
            reff[v] = 1.0 / c_sum;
        }
    }
    let upper = 1.0 / reff[root].sqrt();
    let gap = (upper - value).max(0.0);
    if gap > tol {
        return Err(Error::BadParameter(format!(
            "duality gap {gap:.3e} exceeds tol {tol:.3e}"
        )));
    }
    Ok(Capa3Solution {
        value,
        upper,
        gap,
        flow: ft,
    })
}

/// Signed worst excess of f_theta(h) over the envelope
/// theta h / (1 + (kappa h)^2)^{1/2} across the grid: positive means the
/// candidate kappa is inadmissible, nonpositive means the envelope holds
/// there.
pub fn f_envelope_check(theta: f64, kappa: f64, h_grid: &[f64]) -> Result<f64> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::BadParameter("theta must lie in (0,1)".into()));
    }
    if kappa < 0.0 {
        return Err(Error::BadParameter("kappa must be nonnegative".into()));
    }
    let mut worst = f64::NEG_INFINITY;
    for &h in h_grid {
        if !(h > 0.0) {
            return Err(Error::BadParameter("h grid must be positive".into()));
        }
        let ratio = f_theta(theta, h) * (1.0 + (kappa * h).powi(2)).sqrt() / (theta * h);
        worst = worst.max(ratio - 1.0);
    }
    Ok(worst)
}

/// Largest kappa on a bisection grid for which the envelope holds over
/// (0, h_max]; the small-h expansion caps it at sqrt(2(1-theta^2)/3).
pub fn max_admissible_kappa(theta: f64, h_max: f64, grid_n: usize) -> Result<f64> {
    let grid: Vec<f64> = (1..=grid_n)
        .map(|i| h_max * i as f64 / grid_n as f64)
        .collect();
    let mut lo = 0.0f64;
    let mut hi = 2.0f64;
    if f_envelope_check(theta, hi, &grid)? <= 0.0 {
        return Ok(hi);
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if f_envelope_check(theta, mid, &grid)? <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{branching_number, umgw_sample, OffspringLaw};
    use crate::graph::{path_graph, regular_tree};
    use crate::rng::SeedTree;

    #[test]
    fn single_ray_closed_form() {
        let theta = 0.6;
        for t in [1usize, 3, 5] {
            let tree = path_graph(t + 1);
            let sol = capa3_solve(&tree, theta, 1e-6).unwrap();
            let s: f64 = (1..=t as i32).map(|k| theta.powi(-2 * k)).sum();
            let expect = 1.0 / s.sqrt();
            assert!((sol.value - expect).abs() < 1e-12, "t={t}: {} vs {expect}", sol.value);
            assert!(sol.gap < 1e-10);
            // a single ray carries the full strength on every edge
            for v in 1..=t {
                assert!((sol.flow.flow[v] - sol.value).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn star_depth_one() {
        let theta = 0.45;
        for d in [1usize, 2, 5, 9] {
            let tree =
                RootedGraph::new(d + 1, (1..=d).map(|v| (0, v)).collect(), 0).unwrap();
            let sol = capa3_solve(&tree, theta, 1e-6).unwrap();
            assert!((sol.value - d as f64 * theta).abs() < 1e-12, "d={d}");
            for v in 1..=d {
                assert!((sol.flow.flow[v] - theta).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn regular_tree_meets_profile_bound() {
        // on regular trees the capacity bound from the boundary profile is
        // met with equality: capa3 = (t (k-1)^2 / k^2)^{-1/2} at theta=1/(k-1)
        let theta = 0.5;
        for t in 1..=6 {
            let tree = regular_tree(3, t);
            let sol = capa3_solve(&tree, theta, 1e-6).unwrap();
            let s_exact = 4.0 * t as f64 / 9.0;
            assert!(
                (sol.value - 1.0 / s_exact.sqrt()).abs() < 1e-10,
                "t={t}: {} vs {}",
                sol.value,
                1.0 / s_exact.sqrt()
            );
            assert!(sol.gap < 1e-10, "gap {}", sol.gap);
            assert!(sol.flow.conservation_violation() < 1e-10);
            assert!(sol.flow.ray_energy_max() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn asymmetric_tree_hand_value() {
        // root -> a -> leaf and root -> b -> {leaf, leaf}, theta = 1/2:
        // capa3 = 20^{-1/2} + 8^{-1/2}
        let tree = RootedGraph::new(6, vec![(0, 1), (1, 2), (0, 3), (3, 4), (3, 5)], 0).unwrap();
        let sol = capa3_solve(&tree, 0.5, 1e-6).unwrap();
        let expect = 1.0 / 20.0f64.sqrt() + 1.0 / 8.0f64.sqrt();
        assert!((sol.value - expect).abs() < 1e-12, "{} vs {expect}", sol.value);
        assert!(sol.gap < 1e-12);
    }

    /// independent route: minimize the worst ray energy over the leaf-flow
    /// simplex by nested grid refinement, then capa = min^{-1/2}
    fn grid_oracle_two_leaves(tree: &RootedGraph, theta: f64) -> f64 {
        let eval = |w0: f64| -> f64 {
            let mut flow = vec![0.0; tree.n()];
            // leaves in fixed order
            let parent = tree.tree_parents().unwrap();
            let root = tree.root();
            let leaves: Vec<usize> = (0..tree.n())
                .filter(|&v| v != root && tree.adj(v).iter().all(|&w| w == parent[v]))
                .collect();
            assert_eq!(leaves.len(), 2);
            let w = [w0, 1.0 - w0];
            for (li, &leaf) in leaves.iter().enumerate() {
                let mut v = leaf;
                while v != root {
                    flow[v] += w[li];
                    v = parent[v];
                }
            }
            FlowOnTree::new(tree.clone(), theta, flow).unwrap().ray_energy_max()
        };
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut best = (f64::INFINITY, 0.5);
        for _ in 0..6 {
            let mut local_best = best;
            for i in 0..=200 {
                let w = lo + (hi - lo) * i as f64 / 200.0;
                let v = eval(w);
                if v < local_best.0 {
                    local_best = (v, w);
                }
            }
            best = local_best;
            let span = (hi - lo) / 20.0;
            lo = (best.1 - span).max(0.0);
            hi = (best.1 + span).min(1.0);
        }
        1.0 / best.0.sqrt()
    }

    #[test]
    fn grid_oracle_agrees() {
        // two-leaf trees of depth 2 and 3 with unbalanced shapes
        let t1 = RootedGraph::new(5, vec![(0, 1), (1, 2), (0, 3), (3, 4)], 0).unwrap();
        for theta in [0.4, 0.7] {
            let sol = capa3_solve(&t1, theta, 1e-6).unwrap();
            let oracle = grid_oracle_two_leaves(&t1, theta);
            assert!((sol.value - oracle).abs() < 1e-6, "{} vs {oracle}", sol.value);
        }
        let t2 = RootedGraph::new(
            7,
            vec![(0, 1), (1, 2), (2, 3), (0, 4), (4, 5), (5, 6)],
            0,
        )
        .unwrap();
        let sol = capa3_solve(&t2, 0.55, 1e-6).unwrap();
        let oracle = grid_oracle_two_leaves(&t2, 0.55);
        assert!((sol.value - oracle).abs() < 1e-6);
    }

    #[test]
    fn mixed_leaf_depths_rejected() {
        let tree = RootedGraph::new(4, vec![(0, 1), (1, 2), (0, 3)], 0).unwrap();
        assert!(capa3_solve(&tree, 0.5, 1e-6).is_err());
        // pruning to depth 2 removes the short branch and then it solves
        let pruned = prune_to_depth(&tree, 2).unwrap();
        assert_eq!(pruned.n(), 3);
        capa3_solve(&pruned, 0.5, 1e-6).unwrap();
    }

    #[test]
    fn pruning_changes_profile() {
        // root with a depth-2 ray and a depth-1 stub
        let tree = RootedGraph::new(4, vec![(0, 1), (1, 2), (0, 3)], 0).unwrap();
        assert_eq!(boundary_profile(&tree), vec![2, 1]);
        let pruned = prune_to_depth(&tree, 2).unwrap();
        assert_eq!(boundary_profile(&pruned), vec![1, 1]);
        let theta = 0.5;
        let raw = s_t_sum(&boundary_profile(&tree), theta);
        let cut = s_t_sum(&boundary_profile(&pruned), theta);
        assert!(cut[1] > raw[1], "pruned profile gives the larger sum");
    }

    #[test]
    fn s_sum_regular_exact() {
        let profile: Vec<usize> = (1..=8).map(|j| 3 * (1usize << (j - 1))).collect();
        let s = s_t_sum(&profile, 0.5);
        for (idx, &v) in s.iter().enumerate() {
            let t = (idx + 1) as f64;
            assert!((v - 4.0 * t / 9.0).abs() < 1e-12, "t={t}: {v}");
        }
        assert!(s_t_sum(&[], 0.5).is_empty());
    }

    #[test]
    fn s_sum_grows_linearly_on_sampled_trees() {
        let law = OffspringLaw::single_type(&[(3, 0.5), (4, 0.5)]).unwrap();
        let br = branching_number(&law).unwrap();
        let theta = 1.0 / br;
        let seeds = SeedTree::new(31);
        let mut rng = seeds.stream(0);
        for _ in 0..50 {
            let tree = umgw_sample(&law, 10, &mut rng).unwrap();
            let s = s_t_sum(&boundary_profile(&tree), theta);
            assert_eq!(s.len(), 10);
            // Kesten-Stigum: terms stabilize near 1/W^2 > 0, so the partial
            // sums keep growing by a nontrivial amount per level
            assert!(s[9] > s[4] + 0.05, "flat tail: {:?}", &s[4..]);
            assert!(s[9] > 0.2);
        }
    }

    #[test]
    fn umgw_capacity_respects_s_bound() {
        let law = OffspringLaw::single_type(&[(3, 0.5), (4, 0.5)]).unwrap();
        let br = branching_number(&law).unwrap();
        let theta = 1.0 / br;
        let seeds = SeedTree::new(32);
        let mut rng = seeds.stream(0);
        for trial in 0..30 {
            let t = 3 + trial % 5;
            let tree = umgw_sample(&law, t, &mut rng).unwrap();
            let pruned = prune_to_depth(&tree, t).unwrap();
            let sol = capa3_solve(&pruned, theta, 1e-6).unwrap();
            let s = s_t_sum(&boundary_profile(&pruned), theta);
            let bound = 1.0 / s[t - 1].sqrt();
            assert!(
                sol.value <= bound + 1e-9,
                "capa {} exceeds S^(-1/2) {bound}",
                sol.value
            );
            assert!(sol.gap <= 1e-6);
            assert!(sol.flow.conservation_violation() < 1e-10);
            assert!(sol.flow.ray_energy_max() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn envelope_kappa_zero_is_concavity() {
        let grid: Vec<f64> = (1..=500).map(|i| i as f64 * 0.02).collect();
        for theta in [0.2, 0.5, 0.9] {
            let v = f_envelope_check(theta, 0.0, &grid).unwrap();
            assert!(v <= 0.0, "theta={theta}: {v}");
        }
    }

    #[test]
    fn envelope_large_kappa_fails_at_large_h() {
        // theta/kappa < atanh(theta) makes the tail cross
        let grid: Vec<f64> = (1..=100).map(|i| i as f64 * 0.5).collect();
        let v = f_envelope_check(0.5, 1.0, &grid).unwrap();
        assert!(v > 0.0, "expected a violation, got {v}");
    }

    #[test]
    fn envelope_first_order_agreement() {
        let theta = 0.7;
        let h = 1e-8;
        let ratio = f_theta(theta, h) / (theta * h);
        assert!((ratio - 1.0).abs() < 1e-9);
    }

    #[test]
    fn admissible_kappa_bracket() {
        let theta = 0.5f64;
        let kappa = max_admissible_kappa(theta, 30.0, 3000).unwrap();
        // small-h expansion allows at most sqrt(2(1-theta^2)/3) ~ 0.707; the
        // binding constraint sits at h -> 0, which a grid starting at h=0.01
        // only sees to O(h^2), hence the 1e-4 slack
        assert!(kappa > 0.3 && kappa <= (2.0 * (1.0 - theta * theta) / 3.0).sqrt() + 1e-4,
            "kappa {kappa}");
        let grid: Vec<f64> = (1..=3000).map(|i| i as f64 * 0.01).collect();
        assert!(f_envelope_check(theta, kappa, &grid).unwrap() <= 1e-12);
    }

    #[test]
    fn single_vertex_tree() {
        let tree = RootedGraph::new(1, vec![], 0).unwrap();
        let sol = capa3_solve(&tree, 0.5, 1e-6).unwrap();
        assert_eq!(sol.value, 0.0);
        assert_eq!(sol.gap, 0.0);
    }
}
