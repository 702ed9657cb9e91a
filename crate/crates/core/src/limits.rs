//! Limit quantities over the tree ensemble: deterministic cavity fixed points
//! for regular trees, Monte Carlo estimators for the mean edge-correlation
//! functional U(beta, B) and the mean plus magnetization, and population
//! dynamics for the distributional cavity recursion.

use rand::Rng;
use rayon::prelude::*;

use crate::ensembles::{umgw_sample, OffspringLaw};
use crate::error::{Error, Result};
use crate::graph::RootedGraph;
use crate::ising::{boundary_fields, f_theta, tree_messages, Boundary};
use crate::rng::SeedTree;

#[derive(Clone, Copy, Debug)]
pub struct FixedPointResult {
    pub h_star: f64,
    pub m_star: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Cavity fixed point h = (k-1) f_theta(h) on the k-regular tree, iterated
/// from +inf. Subcritical (k-1) tanh(beta) <= 1 returns exactly 0.
pub fn regular_fixed_point(k: usize, beta: f64, tol: f64) -> Result<FixedPointResult> {
    if k < 2 {
        return Err(Error::BadParameter("need k >= 2".into()));
    }
    if beta < 0.0 {
        return Err(Error::BadParameter("beta must be >= 0".into()));
    }
    let theta = beta.tanh();
    let d = k as f64 - 1.0;
    if d * theta <= 1.0 {
        return Ok(FixedPointResult {
            h_star: 0.0,
            m_star: 0.0,
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut h = d * f_theta(theta, f64::INFINITY);
    let mut iterations = 1;
    loop {
        let next = d * f_theta(theta, h);
        iterations += 1;
        if (next - h).abs() < tol || iterations > 10_000_000 {
            let residual = (next - d * f_theta(theta, next)).abs();
            return Ok(FixedPointResult {
                h_star: next,
                m_star: next.tanh(),
                iterations,
                residual,
            });
        }
        h = next;
    }
}

/// Smallest depth t with |m_t - m_{t+1}| < 1e-8 for the plus-boundary
/// root magnetization on the k-regular tree.
pub fn adaptive_regular_depth(k: usize, beta: f64) -> usize {
    let mut t = 1;
    let mut m = crate::ising::regular_plus_magnetization(k, beta, t);
    loop {
        let next = crate::ising::regular_plus_magnetization(k, beta, t + 1);
        if (m - next).abs() < 1e-8 || t >= 100_000 {
            return t;
        }
        m = next;
        t += 1;
    }
}

/// Plus-boundary sum of root edge correlations on one tree, halved.
fn u_one_tree(tree: &RootedGraph, beta: f64, b: f64, depth: usize) -> Result<f64> {
    let base = vec![b; tree.n()];
    let fields = boundary_fields(tree, depth, Boundary::Plus, &base)?;
    let msg = tree_messages(tree, beta, &fields)?;
    let root = tree.root();
    let mut sum = 0.0;
    for &i in tree.adj(root) {
        sum += msg.edge_correlation(root, i)?;
    }
    Ok(0.5 * sum)
}

/// Monte Carlo estimate of U(beta, B): half the expected sum over root edges
/// of the plus-boundary correlation, over depth-t UMGW trees.
pub fn u_estimate(
    law: &OffspringLaw,
    beta: f64,
    b: f64,
    depth: usize,
    n_trees: usize,
    seeds: &SeedTree,
    stream: u64,
) -> Result<(f64, f64)> {
    if depth < 2 {
        return Err(Error::BadParameter("need depth >= 2".into()));
    }
    if b < 0.0 {
        return Err(Error::BadParameter("need B >= 0".into()));
    }
    let values: Result<Vec<f64>> = (0..n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeds.stream2(stream, i as u64);
            let tree = umgw_sample(law, depth, &mut rng)?;
            u_one_tree(&tree, beta, b, depth)
        })
        .collect();
    Ok(mean_se(&values?))
}

/// Mean plus-boundary root magnetization over depth-t UMGW trees.
pub fn rho_mu_estimate(
    law: &OffspringLaw,
    beta: f64,
    depth: usize,
    n_trees: usize,
    seeds: &SeedTree,
    stream: u64,
) -> Result<(f64, f64)> {
    if depth < 1 {
        return Err(Error::BadParameter("need depth >= 1".into()));
    }
    let values: Result<Vec<f64>> = (0..n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeds.stream2(stream, i as u64);
            let tree = umgw_sample(law, depth, &mut rng)?;
            let fields = boundary_fields(&tree, depth, Boundary::Plus, &vec![0.0; tree.n()])?;
            let msg = tree_messages(&tree, beta, &fields)?;
            Ok(msg.root_magnetization(&tree))
        })
        .collect();
    Ok(mean_se(&values?))
}

pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Particle pool for the distributional cavity recursion. Values live in
/// [0, +inf]; +inf only at generation 0 (the plus start).
#[derive(Clone, Debug)]
pub struct ParticlePool {
    pub h: Vec<f64>,
    pub t: usize,
    /// RNG stream id; pools stepped with equal ids share randomness (CRN)
    pub stream: u64,
}

impl ParticlePool {
    /// All particles at +inf: the plus initialization.
    pub fn plus(n: usize, stream: u64) -> Self {
        ParticlePool {
            h: vec![f64::INFINITY; n],
            t: 0,
            stream,
        }
    }

    pub fn from_samples(h: Vec<f64>, stream: u64) -> Result<Self> {
        if h.iter().any(|&x| x < 0.0 || x.is_nan()) {
            return Err(Error::BadParameter("pool values must be >= 0".into()));
        }
        Ok(ParticlePool { h, t: 0, stream })
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.h.iter().sum::<f64>() / self.h.len() as f64
    }

    pub fn sorted(&self) -> Vec<f64> {
        let mut s = self.h.clone();
        s.sort_by(f64::total_cmp);
        s
    }

    pub fn quantile(&self, q: f64) -> f64 {
        let s = self.sorted();
        let idx = ((s.len() as f64 - 1.0) * q).round() as usize;
        s[idx]
    }
}

/// Empirical W1 distance between equal-size pools: sort both, average |diff|.
pub fn w1_sorted(a: &ParticlePool, b: &ParticlePool) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::BadParameter("pool sizes differ".into()));
    }
    let sa = a.sorted();
    let sb = b.sorted();
    let mut total = 0.0;
    for (x, y) in sa.iter().zip(&sb) {
        if x == y {
            continue;
        }
        total += (x - y).abs();
    }
    Ok(total / a.len() as f64)
}

/// Sorted-quantile stochastic domination: every quantile of a at least the
/// matching quantile of b (within slack).
pub fn dominates_sorted(a: &ParticlePool, b: &ParticlePool, slack: f64) -> bool {
    let sa = a.sorted();
    let sb = b.sorted();
    sa.iter().zip(&sb).all(|(x, y)| *x >= *y - slack)
}

fn check_k_law(k_law: &[(usize, f64)], strict: bool) -> Result<()> {
    if k_law.is_empty() {
        return Err(Error::BadParameter("empty degree law".into()));
    }
    let total: f64 = k_law.iter().map(|&(_, p)| p).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::BadParameter(format!("degree law sums to {total}")));
    }
    if strict && k_law.iter().any(|&(k, p)| p > 0.0 && k < 3) {
        return Err(Error::BadParameter(
            "size-biased degree support must be >= 3".into(),
        ));
    }
    Ok(())
}

fn step_particle<R: Rng>(pool: &[f64], k_law: &[(usize, f64)], theta: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut k = k_law[k_law.len() - 1].0;
    for &(kk, p) in k_law {
        cum += p;
        if u < cum {
            k = kk;
            break;
        }
    }
    let mut h = 0.0;
    for _ in 0..k.saturating_sub(1) {
        let j = rng.random_range(0..pool.len());
        h += f_theta(theta, pool[j]);
    }
    h
}

/// One synchronized-randomness generation: every new particle draws K from the
/// size-biased degree law and sums f_theta over K-1 uniform draws from the old
/// pool. Particle i of generation t uses substream (stream, t, i), so equal
/// stream ids give common random numbers and thread count does not matter.
pub fn pop_dynamics_step(
    pool: &ParticlePool,
    k_law: &[(usize, f64)],
    beta: f64,
    seeds: &SeedTree,
) -> Result<ParticlePool> {
    check_k_law(k_law, true)?;
    Ok(step_inner(pool, k_law, beta, seeds))
}

/// Same step without the minimum-degree-3 requirement (outside-lemma regime).
pub fn pop_dynamics_step_any(
    pool: &ParticlePool,
    k_law: &[(usize, f64)],
    beta: f64,
    seeds: &SeedTree,
) -> Result<ParticlePool> {
    check_k_law(k_law, false)?;
    Ok(step_inner(pool, k_law, beta, seeds))
}

fn step_inner(
    pool: &ParticlePool,
    k_law: &[(usize, f64)],
    beta: f64,
    seeds: &SeedTree,
) -> ParticlePool {
    let theta = beta.tanh();
    let t = pool.t as u64;
    let h: Vec<f64> = (0..pool.h.len())
        .into_par_iter()
        .map(|i| {
            let mut rng = seeds.stream2(pool.stream, (t << 40) | i as u64);
            step_particle(&pool.h, k_law, theta, &mut rng)
        })
        .collect();
    ParticlePool {
        h,
        t: pool.t + 1,
        stream: pool.stream,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PopInit {
    /// start from h = +inf
    Plus,
    /// start from the converged plus-phase pool at this smaller beta
    DominatingBeta(f64),
}

#[derive(Clone, Copy, Debug)]
pub struct PopTraceRow {
    pub t: usize,
    pub w1: f64,
    pub mean_h: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

#[derive(Clone, Debug)]
pub struct PopRun {
    pub pool: ParticlePool,
    pub trace: Vec<PopTraceRow>,
    pub converged: bool,
    /// dominating-init only: sorted-quantile domination by the parallel
    /// plus-init chain held at every recorded step
    pub domination_ok: Option<bool>,
    /// dominating-init only: W1 gap to the parallel plus-init chain per step
    pub domination_gap: Option<Vec<f64>>,
}

fn trace_row(pool: &ParticlePool, w1: f64) -> PopTraceRow {
    PopTraceRow {
        t: pool.t,
        w1,
        mean_h: pool.mean(),
        q05: pool.quantile(0.05),
        q50: pool.quantile(0.50),
        q95: pool.quantile(0.95),
    }
}

/// Iterate the population dynamics until the W1 distance between consecutive
/// generations drops below w1_tol. With a dominating start the plus-init chain
/// runs alongside under common random numbers and its sorted-quantile
/// domination of the main chain is checked at every step.
pub fn pop_converge(
    law: &OffspringLaw,
    beta: f64,
    init: PopInit,
    n: usize,
    max_t: usize,
    w1_tol: f64,
    seeds: &SeedTree,
    stream: u64,
) -> Result<PopRun> {
    let k_law = law.size_biased_degree()?;
    check_k_law(&k_law, true)?;
    let d_star = law.min_norm();
    let mut pool = match init {
        PopInit::Plus => ParticlePool::plus(n, stream),
        PopInit::DominatingBeta(beta0) => {
            let beta_star = (1.0 / (d_star as f64 - 1.0)).atanh();
            if !(beta >= beta0 && beta0 > beta_star) {
                return Err(Error::BadParameter(format!(
                    "dominating init needs beta >= beta0 > beta_star = {beta_star}"
                )));
            }
            // converge the plus chain at beta0 on a disjoint stream, then
            // restart the generation counter so CRN aligns with the plus chain
            let warm = pop_converge(law, beta0, PopInit::Plus, n, max_t, w1_tol, seeds, stream ^ 0x9e3779b97f4a7c15)?;
            ParticlePool {
                h: warm.pool.h,
                t: 0,
                stream,
            }
        }
    };
    let with_domination = matches!(init, PopInit::DominatingBeta(_));
    let mut plus_chain = if with_domination {
        Some(ParticlePool::plus(n, stream))
    } else {
        None
    };
    let mut trace = Vec::new();
    let mut domination_ok = true;
    let mut domination_gap = Vec::new();
    let mut converged = false;
    for _ in 0..max_t {
        let next = pop_dynamics_step(&pool, &k_law, beta, seeds)?;
        let w1 = w1_sorted(&next, &pool)?;
        trace.push(trace_row(&next, w1));
        if let Some(pc) = plus_chain.take() {
            let pc_next = pop_dynamics_step(&pc, &k_law, beta, seeds)?;
            if !dominates_sorted(&pc_next, &next, 1e-9) {
                domination_ok = false;
            }
            domination_gap.push(w1_sorted(&pc_next, &next)?);
            plus_chain = Some(pc_next);
        }
        pool = next;
        if w1.is_finite() && w1 < w1_tol {
            converged = true;
            break;
        }
    }
    Ok(PopRun {
        pool,
        trace,
        converged,
        domination_ok: with_domination.then_some(domination_ok),
        domination_gap: with_domination.then_some(domination_gap),
    })
}
