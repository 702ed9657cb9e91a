//! Ferromagnetic Ising measures on finite graphs: exact enumeration for small
//! instances, cavity message passing on trees, boundary conditions, pair
//! correlations, DLR window checks, and concavity diagnostics.
//!
//! Vertex fields live in [-inf, +inf]; an infinite field clamps the spin.
//! IEEE arithmetic carries the clamp through exactly one recursion step:
//! a clamped vertex emits an infinite cavity message, and f_theta collapses
//! it to a finite atanh(theta) at the receiver.

use crate::error::{Error, Result};
use crate::graph::{ball, RootedGraph, SpinConfig};

pub const BRUTE_FORCE_LIMIT: usize = 20;
const ATANH_CLIP: f64 = 1.0 - 1e-15;

/// atanh with arguments clipped away from +-1.
pub fn atanh_clipped(x: f64) -> f64 {
    x.clamp(-ATANH_CLIP, ATANH_CLIP).atanh()
}

/// f_theta(h) = atanh(theta * tanh(h)); f_theta(+-inf) = +-atanh(theta).
pub fn f_theta(theta: f64, h: f64) -> f64 {
    if h.is_infinite() {
        return h.signum() * atanh_clipped(theta);
    }
    atanh_clipped(theta * h.tanh())
}

/// Edge correlation through cavity fields: F(theta, r) = (theta + r)/(1 + theta r)
/// with r = tanh(h1) tanh(h2).
pub fn pair_correlation(h1: f64, h2: f64, beta: f64) -> f64 {
    let theta = beta.tanh();
    let r = h1.tanh() * h2.tanh();
    (theta + r) / (1.0 + theta * r)
}

/// Ising specification: graph, inverse temperature, per-vertex fields.
/// beta >= 0 only (ferromagnet). B_v = +-inf clamps vertex v.
#[derive(Clone, Debug)]
pub struct IsingSpec {
    pub graph: RootedGraph,
    pub beta: f64,
    pub fields: Vec<f64>,
}

impl IsingSpec {
    pub fn new(graph: RootedGraph, beta: f64, fields: Vec<f64>) -> Result<Self> {
        if beta < 0.0 || !beta.is_finite() {
            return Err(Error::BadParameter(format!(
                "beta must be finite and >= 0, got {beta}"
            )));
        }
        if fields.len() != graph.n() {
            return Err(Error::BadParameter(format!(
                "fields length {} != n {}",
                fields.len(),
                graph.n()
            )));
        }
        if fields.iter().any(|b| b.is_nan()) {
            return Err(Error::BadParameter("NaN field".into()));
        }
        Ok(IsingSpec { graph, beta, fields })
    }

    pub fn free(graph: RootedGraph, beta: f64) -> Result<Self> {
        let n = graph.n();
        IsingSpec::new(graph, beta, vec![0.0; n])
    }
}

/// Frontier boundary condition at a given depth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Boundary {
    /// clamp frontier spins to +1
    Plus,
    /// clamp frontier spins to -1
    Minus,
    Free,
    /// uniform field H >= 0 on the frontier
    Field(f64),
}

/// Field vector realizing a frontier boundary condition at depth t over base
/// interior fields (frontier entries of base are replaced).
pub fn boundary_fields(
    tree: &RootedGraph,
    t: usize,
    boundary: Boundary,
    base: &[f64],
) -> Result<Vec<f64>> {
    if base.len() != tree.n() {
        return Err(Error::BadParameter("base fields length mismatch".into()));
    }
    let dist = tree.distances(tree.root());
    let mut fields = base.to_vec();
    for v in 0..tree.n() {
        if dist[v] == t {
            fields[v] = match boundary {
                Boundary::Plus => f64::INFINITY,
                Boundary::Minus => f64::NEG_INFINITY,
                Boundary::Free => fields[v],
                Boundary::Field(h) => h,
            };
        }
    }
    Ok(fields)
}

/// Exact measure over spin configurations by enumeration. Clamped vertices
/// (infinite field) are held fixed; their field factor is dropped from Z.
pub struct BruteForceMeasure {
    n: usize,
    /// free vertex v -> its bit position, clamped -> None
    bit_of: Vec<Option<usize>>,
    free: Vec<usize>,
    clamped_spin: Vec<i8>,
    probs: Vec<f64>,
    log_z: f64,
    magnetization: Vec<f64>,
    edge_corr: Vec<f64>,
}

pub fn brute_force_measure(spec: &IsingSpec) -> Result<BruteForceMeasure> {
    let g = &spec.graph;
    let n = g.n();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::SizeGuard {
            op: "brute_force_measure",
            n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let mut bit_of = vec![None; n];
    let mut free = Vec::new();
    let mut clamped_spin = vec![0i8; n];
    for v in 0..n {
        if spec.fields[v].is_infinite() {
            clamped_spin[v] = if spec.fields[v] > 0.0 { 1 } else { -1 };
        } else {
            bit_of[v] = Some(free.len());
            free.push(v);
        }
    }
    let f = free.len();
    let n_configs = 1usize << f;
    let mut energies = Vec::with_capacity(n_configs);
    let mut spins = vec![0i8; n];
    for v in 0..n {
        spins[v] = clamped_spin[v];
    }
    let mut e_max = f64::NEG_INFINITY;
    for mask in 0..n_configs {
        for (b, &v) in free.iter().enumerate() {
            spins[v] = if mask >> b & 1 == 1 { 1 } else { -1 };
        }
        let mut e = 0.0;
        for &(u, v) in g.edges() {
            e += spec.beta * (spins[u] * spins[v]) as f64;
        }
        for &v in &free {
            e += spec.fields[v] * spins[v] as f64;
        }
        energies.push(e);
        e_max = e_max.max(e);
    }
    let mut total = 0.0;
    let mut probs = energies;
    for e in &mut probs {
        *e = (*e - e_max).exp();
        total += *e;
    }
    for p in &mut probs {
        *p /= total;
    }
    let log_z = e_max + (total).ln();
    let mut bf = BruteForceMeasure {
        n,
        bit_of,
        free,
        clamped_spin,
        probs,
        log_z,
        magnetization: Vec::new(),
        edge_corr: Vec::new(),
    };
    bf.magnetization = (0..n).map(|v| bf.expectation_site(v)).collect();
    bf.edge_corr = g.edges().iter().map(|&(u, v)| bf.pair(u, v)).collect();
    Ok(bf)
}

impl BruteForceMeasure {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn free_vertices(&self) -> &[usize] {
        &self.free
    }

    /// Decode an enumeration index into a full spin configuration.
    pub fn spins(&self, mask: usize) -> SpinConfig {
        let mut s = self.clamped_spin.clone();
        for (b, &v) in self.free.iter().enumerate() {
            s[v] = if mask >> b & 1 == 1 { 1 } else { -1 };
        }
        s
    }

    /// Probability of a full configuration (0 if it contradicts a clamp).
    pub fn prob_of(&self, spins: &[i8]) -> f64 {
        let mut mask = 0usize;
        for v in 0..self.n {
            match self.bit_of[v] {
                Some(b) => {
                    if spins[v] == 1 {
                        mask |= 1 << b;
                    }
                }
                None => {
                    if spins[v] != self.clamped_spin[v] {
                        return 0.0;
                    }
                }
            }
        }
        self.probs[mask]
    }

    fn spin_at(&self, mask: usize, v: usize) -> f64 {
        match self.bit_of[v] {
            Some(b) => {
                if mask >> b & 1 == 1 {
                    1.0
                } else {
                    -1.0
                }
            }
            None => self.clamped_spin[v] as f64,
        }
    }

    fn expectation_site(&self, v: usize) -> f64 {
        if let None = self.bit_of[v] {
            return self.clamped_spin[v] as f64;
        }
        let b = self.bit_of[v].unwrap();
        let mut m = 0.0;
        for (mask, &p) in self.probs.iter().enumerate() {
            m += p * if mask >> b & 1 == 1 { 1.0 } else { -1.0 };
        }
        m
    }

    pub fn magnetization(&self, v: usize) -> f64 {
        self.magnetization[v]
    }

    pub fn magnetizations(&self) -> &[f64] {
        &self.magnetization
    }

    /// <x_u x_v>.
    pub fn pair(&self, u: usize, v: usize) -> f64 {
        let mut c = 0.0;
        for (mask, &p) in self.probs.iter().enumerate() {
            c += p * self.spin_at(mask, u) * self.spin_at(mask, v);
        }
        c
    }

    /// <x_v x_j> for every j, one pass.
    pub fn pair_with(&self, v: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (mask, &p) in self.probs.iter().enumerate() {
            let s = p * self.spin_at(mask, v);
            for j in 0..self.n {
                out[j] += s * self.spin_at(mask, j);
            }
        }
        out
    }

    /// Per-edge correlations, aligned with graph.edges().
    pub fn edge_correlations(&self) -> &[f64] {
        &self.edge_corr
    }

    /// Mean of beta-energy derivative: sum over edges of <x_i x_j>.
    pub fn edge_correlation_sum(&self) -> f64 {
        self.edge_corr.iter().sum()
    }

    /// New measure with one configuration's weight multiplied by factor.
    pub fn tilted(&self, mask: usize, factor: f64) -> BruteForceMeasure {
        let mut probs = self.probs.clone();
        probs[mask] *= factor;
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        let mut bf = BruteForceMeasure {
            n: self.n,
            bit_of: self.bit_of.clone(),
            free: self.free.clone(),
            clamped_spin: self.clamped_spin.clone(),
            probs,
            log_z: self.log_z + total.ln(),
            magnetization: Vec::new(),
            edge_corr: Vec::new(),
        };
        bf.magnetization = (0..bf.n).map(|v| bf.expectation_site(v)).collect();
        bf
    }
}

/// Directional cavity messages on a tree, both sweeps.
pub struct MessageField {
    beta: f64,
    theta: f64,
    fields: Vec<f64>,
    parent: Vec<usize>,
    /// h_{v -> parent(v)}; root entry unused
    up: Vec<f64>,
    /// h_{parent(v) -> v}; root entry unused
    down: Vec<f64>,
    root: usize,
}

/// Leaf-to-root and root-to-leaf cavity sweeps:
/// h_{v->u} = B_v + sum_{w in dv \ u} f_theta(h_{w->v}).
pub fn tree_messages(tree: &RootedGraph, beta: f64, fields: &[f64]) -> Result<MessageField> {
    if beta < 0.0 {
        return Err(Error::BadParameter("beta must be >= 0".into()));
    }
    if fields.len() != tree.n() {
        return Err(Error::BadParameter("fields length mismatch".into()));
    }
    let parent = tree.tree_parents()?;
    let order = tree.bfs_order();
    let theta = beta.tanh();
    let n = tree.n();
    let mut up = vec![0.0; n];
    let mut down = vec![0.0; n];
    for &v in order.iter().rev() {
        let mut h = fields[v];
        for &w in tree.adj(v) {
            if parent.get(w) == Some(&v) {
                h += f_theta(theta, up[w]);
            }
        }
        up[v] = h;
    }
    for &v in &order {
        if v == tree.root() {
            continue;
        }
        let p = parent[v];
        let mut h = fields[p];
        if p != tree.root() {
            h += f_theta(theta, down[p]);
        }
        for &w in tree.adj(p) {
            if w != v && parent.get(w) == Some(&p) {
                h += f_theta(theta, up[w]);
            }
        }
        down[v] = h;
    }
    Ok(MessageField {
        beta,
        theta,
        fields: fields.to_vec(),
        parent,
        up,
        down,
        root: tree.root(),
    })
}

impl MessageField {
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Cavity message h_{v->u} for adjacent v, u.
    pub fn message(&self, v: usize, u: usize) -> Result<f64> {
        if self.parent[v] == u {
            Ok(self.up[v])
        } else if self.parent[u] == v {
            Ok(self.down[u])
        } else {
            Err(Error::BadParameter(format!("{v} and {u} are not adjacent")))
        }
    }

    /// Total local field h_v = B_v + sum over all neighbors of f_theta(h_{w->v}).
    pub fn vertex_field(&self, v: usize, tree: &RootedGraph) -> f64 {
        let mut h = self.fields[v];
        for &w in tree.adj(v) {
            if self.parent[w] == v {
                h += f_theta(self.theta, self.up[w]);
            } else {
                debug_assert_eq!(self.parent[v], w);
                h += f_theta(self.theta, self.down[v]);
            }
        }
        h
    }

    pub fn vertex_magnetization(&self, v: usize, tree: &RootedGraph) -> f64 {
        self.vertex_field(v, tree).tanh()
    }

    pub fn root_magnetization(&self, tree: &RootedGraph) -> f64 {
        self.vertex_magnetization(self.root, tree)
    }

    /// <x_u x_v> on edge (u,v) from the two directional messages.
    pub fn edge_correlation(&self, u: usize, v: usize) -> Result<f64> {
        let h_uv = self.message(u, v)?;
        let h_vu = self.message(v, u)?;
        let r = h_uv.tanh() * h_vu.tanh();
        Ok((self.theta + r) / (1.0 + self.theta * r))
    }
}

/// Root magnetization with frontier fields H_v >= 0 (frontier = vertices of
/// maximal depth), interior fields from base.
pub fn root_magnetization(
    tree: &RootedGraph,
    beta: f64,
    frontier_fields: &[(usize, f64)],
    base: &[f64],
) -> Result<f64> {
    if frontier_fields.iter().any(|&(_, h)| h < 0.0) {
        return Err(Error::BadParameter(
            "frontier fields must be >= 0".into(),
        ));
    }
    let mut fields = base.to_vec();
    for &(v, h) in frontier_fields {
        if v >= tree.n() {
            return Err(Error::VertexOutOfRange(v, tree.n()));
        }
        fields[v] = h;
    }
    let msg = tree_messages(tree, beta, &fields)?;
    Ok(msg.root_magnetization(tree))
}

/// Root magnetization of the depth-ell k-regular tree with uniform frontier
/// field H and zero interior field, by the scalar depth recursion. The root
/// has k children, interior vertices k-1. H may be +inf (plus boundary).
pub fn regular_m_ell(k: usize, beta: f64, ell: usize, frontier_field: f64) -> f64 {
    let theta = beta.tanh();
    if ell == 0 {
        return frontier_field.tanh();
    }
    let mut g = frontier_field;
    for _ in 1..ell {
        g = (k as f64 - 1.0) * f_theta(theta, g);
    }
    (k as f64 * f_theta(theta, g)).tanh()
}

/// Plus-boundary root magnetization at depth ell on the k-regular tree.
pub fn regular_plus_magnetization(k: usize, beta: f64, ell: usize) -> f64 {
    regular_m_ell(k, beta, ell, f64::INFINITY)
}

/// Max absolute discrepancy between the exact conditional law of the depth-t
/// ball interior given the annulus, and the window Ising law on the depth-(t+1)
/// ball with the annulus clamped. samples = 0 checks every annulus config,
/// otherwise only the `samples` most probable ones.
pub fn dlr_window_check(spec: &IsingSpec, t: usize, samples: usize) -> Result<f64> {
    let bf = brute_force_measure(spec)?;
    dlr_window_check_with(spec, &bf, t, samples)
}

/// Same check against an externally supplied (possibly perturbed) measure.
pub fn dlr_window_check_with(
    spec: &IsingSpec,
    measure: &BruteForceMeasure,
    t: usize,
    samples: usize,
) -> Result<f64> {
    let g = &spec.graph;
    let view = ball(g, g.root(), t + 1)?;
    let window = view.graph();
    let wn = window.n();
    // local ids of interior (depth <= t) and annulus (depth = t+1) vertices
    let interior: Vec<usize> = (0..wn).filter(|&v| view.dist()[v] <= t).collect();
    let annulus: Vec<usize> = (0..wn).filter(|&v| view.dist()[v] == t + 1).collect();
    // joint law of (interior, annulus) under the supplied measure
    use std::collections::HashMap;
    let mut joint: HashMap<u64, HashMap<u64, f64>> = HashMap::new();
    for (mask, &p) in measure.probs().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let spins = measure.spins(mask);
        let mut akey = 0u64;
        for (pos, &lv) in annulus.iter().enumerate() {
            if spins[view.to_parent()[lv]] == 1 {
                akey |= 1 << pos;
            }
        }
        let mut ikey = 0u64;
        for (pos, &lv) in interior.iter().enumerate() {
            if spins[view.to_parent()[lv]] == 1 {
                ikey |= 1 << pos;
            }
        }
        *joint.entry(akey).or_default().entry(ikey).or_default() += p;
    }
    let mut configs: Vec<(u64, f64)> = joint
        .iter()
        .map(|(a, m)| (*a, m.values().sum::<f64>()))
        .collect();
    configs.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    if samples > 0 {
        configs.truncate(samples);
    }
    let mut worst = 0.0f64;
    for (akey, aprob) in configs {
        if aprob <= 0.0 {
            continue;
        }
        // window spec: annulus clamped to this config, interior keeps its fields
        let mut wfields = vec![0.0; wn];
        for lv in 0..wn {
            wfields[lv] = spec.fields[view.to_parent()[lv]];
        }
        for (pos, &lv) in annulus.iter().enumerate() {
            wfields[lv] = if akey >> pos & 1 == 1 {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            };
        }
        let wspec = IsingSpec::new(window.clone(), spec.beta, wfields)?;
        let wbf = brute_force_measure(&wspec)?;
        let cond = &joint[&akey];
        // compare over all interior configurations
        let free_interior: Vec<usize> = interior
            .iter()
            .copied()
            .filter(|&lv| !spec.fields[view.to_parent()[lv]].is_infinite())
            .collect();
        let n_int = 1usize << free_interior.len();
        let mut wspins = vec![0i8; wn];
        for sub in 0..n_int {
            // full interior key including clamped interior vertices
            let mut ikey = 0u64;
            for (pos, &lv) in interior.iter().enumerate() {
                let orig = view.to_parent()[lv];
                let spin = if spec.fields[orig].is_infinite() {
                    if spec.fields[orig] > 0.0 { 1 } else { -1 }
                } else {
                    let fpos = free_interior.iter().position(|&x| x == lv).unwrap();
                    if sub >> fpos & 1 == 1 { 1 } else { -1 }
                };
                if spin == 1 {
                    ikey |= 1 << pos;
                }
                wspins[lv] = spin;
            }
            for (pos, &lv) in annulus.iter().enumerate() {
                wspins[lv] = if akey >> pos & 1 == 1 { 1 } else { -1 };
            }
            let p_cond = cond.get(&ikey).copied().unwrap_or(0.0) / aprob;
            let p_window = wbf.prob_of(&wspins);
            worst = worst.max((p_cond - p_window).abs());
        }
    }
    Ok(worst)
}

/// Covariance decay under the plus measure clamped at the given depth:
/// returns (max over j of Cov(x_o,x_j)/gamma^{d(o,j)}, min over j of Cov).
pub fn covariance_decay_check(tree: &RootedGraph, beta: f64, depth: usize) -> Result<(f64, f64)> {
    let fields = boundary_fields(tree, depth, Boundary::Plus, &vec![0.0; tree.n()])?;
    let spec = IsingSpec::new(tree.clone(), beta, fields)?;
    let bf = brute_force_measure(&spec)?;
    let root = tree.root();
    let dist = tree.distances(root);
    let pair = bf.pair_with(root);
    let m_root = bf.magnetization(root);
    let gamma = beta.tanh();
    let mut max_ratio = f64::NEG_INFINITY;
    let mut min_cov = f64::INFINITY;
    for j in 0..tree.n() {
        let cov = pair[j] - m_root * bf.magnetization(j);
        min_cov = min_cov.min(cov);
        let bound = gamma.powi(dist[j] as i32);
        if bound > 0.0 {
            max_ratio = max_ratio.max(cov / bound);
        } else {
            // gamma = 0: covariance must vanish off the root
            max_ratio = max_ratio.max(if cov.abs() < 1e-14 { 0.0 } else { f64::INFINITY });
        }
    }
    Ok((max_ratio, min_cov))
}

/// Max positive second difference of lambda -> root magnetization with
/// frontier fields lambda * H_v, over the given lambda grid. Non-positive
/// second differences everywhere certify concavity on the grid.
pub fn ghs_concavity_check(
    tree: &RootedGraph,
    beta: f64,
    frontier_fields: &[(usize, f64)],
    lambda_grid: &[f64],
) -> Result<f64> {
    if frontier_fields.iter().any(|&(_, h)| h < 0.0) {
        return Err(Error::BadParameter("frontier fields must be >= 0".into()));
    }
    if lambda_grid.len() < 3 {
        return Err(Error::BadParameter("need at least 3 grid points".into()));
    }
    let mut ms = Vec::with_capacity(lambda_grid.len());
    for &lam in lambda_grid {
        if lam < 0.0 {
            return Err(Error::BadParameter("lambda must be >= 0".into()));
        }
        let scaled: Vec<(usize, f64)> = frontier_fields
            .iter()
            .map(|&(v, h)| (v, if h.is_infinite() { h } else { lam * h }))
            .collect();
        ms.push(root_magnetization(tree, beta, &scaled, &vec![0.0; tree.n()])?);
    }
    let mut worst = f64::NEG_INFINITY;
    for w in ms.windows(3) {
        worst = worst.max(w[2] - 2.0 * w[1] + w[0]);
    }
    Ok(worst)
}

/// ell * [m_ell({h^beta}) - m_ell({h^beta0})] where h^beta' is the plus-phase
/// cavity field: the scalar fixed point for regular trees, or depth-extended
/// plus-boundary messages for a generic tree.
pub fn h_cont_gap(tree: &RootedGraph, beta0: f64, beta: f64, ell: usize) -> Result<f64> {
    let d_star = min_interior_degree(tree);
    if d_star < 3 {
        return Err(Error::BadParameter(
            "tree must have interior minimum degree >= 3".into(),
        ));
    }
    let threshold = ((d_star - 1) as f64).recip().atanh();
    if beta0 <= threshold {
        return Err(Error::BadParameter(format!(
            "beta0 = {beta0} must exceed atanh(1/(d_star-1)) = {threshold}"
        )));
    }
    if beta < beta0 {
        return Err(Error::BadParameter("need beta >= beta0".into()));
    }
    if let Some(k) = regular_degree(tree) {
        let h_b = scalar_plus_fixed_point(k, beta);
        let h_b0 = scalar_plus_fixed_point(k, beta0);
        let m_b = regular_m_ell(k, beta, ell, h_b);
        let m_b0 = regular_m_ell(k, beta, ell, h_b0);
        return Ok(ell as f64 * (m_b - m_b0));
    }
    // generic: frontier fields = up-messages at depth ell under a plus clamp
    // at the tree's own maximal depth
    let dist = tree.distances(tree.root());
    let max_depth = dist.iter().copied().max().unwrap_or(0);
    if ell >= max_depth {
        return Err(Error::BadParameter(format!(
            "ell = {ell} must be below the tree depth {max_depth}"
        )));
    }
    let mut gap_fields = Vec::new();
    for &b in &[beta, beta0] {
        let fields = boundary_fields(tree, max_depth, Boundary::Plus, &vec![0.0; tree.n()])?;
        let msg = tree_messages(tree, b, &fields)?;
        let frontier: Vec<(usize, f64)> = (0..tree.n())
            .filter(|&v| dist[v] == ell)
            .map(|v| (v, msg.up[v].max(0.0)))
            .collect();
        gap_fields.push(frontier);
    }
    let truncated = truncate_tree(tree, ell)?;
    let m_b = root_magnetization(
        &truncated,
        beta,
        &remap_frontier(&gap_fields[0], tree, ell),
        &vec![0.0; truncated.n()],
    )?;
    let m_b0 = root_magnetization(
        &truncated,
        beta,
        &remap_frontier(&gap_fields[1], tree, ell),
        &vec![0.0; truncated.n()],
    )?;
    Ok(ell as f64 * (m_b - m_b0))
}

/// Scalar plus-phase cavity fixed point h = (k-1) f_theta(h) started at +inf.
pub fn scalar_plus_fixed_point(k: usize, beta: f64) -> f64 {
    let theta = beta.tanh();
    let mut h = (k as f64 - 1.0) * f_theta(theta, f64::INFINITY);
    loop {
        let next = (k as f64 - 1.0) * f_theta(theta, h);
        if (next - h).abs() < 1e-14 {
            return next;
        }
        h = next;
    }
}

/// Uniform interior degree if the tree is regular (root degree k, interior
/// degree k, leaves degree 1), else None.
pub fn regular_degree(tree: &RootedGraph) -> Option<usize> {
    let k = tree.degree(tree.root());
    if k < 2 || tree.n() == 1 {
        return None;
    }
    for v in 0..tree.n() {
        let d = tree.degree(v);
        if d != 1 && d != k {
            return None;
        }
    }
    Some(k)
}

fn min_interior_degree(tree: &RootedGraph) -> usize {
    (0..tree.n())
        .map(|v| tree.degree(v))
        .filter(|&d| d > 1)
        .min()
        .unwrap_or(tree.degree(tree.root()).max(1))
}

fn truncate_tree(tree: &RootedGraph, depth: usize) -> Result<RootedGraph> {
    let view = ball(tree, tree.root(), depth)?;
    Ok(view.graph().clone())
}

/// Map (original vertex, field) pairs at depth ell to the truncated tree's ids.
fn remap_frontier(
    fields: &[(usize, f64)],
    tree: &RootedGraph,
    ell: usize,
) -> Vec<(usize, f64)> {
    let view = ball(tree, tree.root(), ell).unwrap();
    let mut out = Vec::new();
    for (local, &orig) in view.to_parent().iter().enumerate() {
        if let Some(&(_, h)) = fields.iter().find(|&&(v, _)| v == orig) {
            out.push((local, h));
        }
    }
    out
}
