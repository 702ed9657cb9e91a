//! Random graph ensembles: multi-type configuration model and unimodular
//! (multi-type) Galton-Watson trees, with their analytic companions
//! (size-biased kernels, mean matrix, spectral radius, branching number).

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::RootedGraph;

const BALANCE_TOL: f64 = 1e-12;

/// Multi-type offspring law: strictly positive root-type weights theta over a
/// finite type set, and per type i a finitely supported distribution P_i over
/// offspring-count vectors k (k_j = number of type-j children).
#[derive(Clone, Debug)]
pub struct OffspringLaw {
    names: Vec<String>,
    theta: Vec<f64>,
    /// per type: sorted support of (k-vector, probability)
    p: Vec<Vec<(Vec<usize>, f64)>>,
}

#[derive(Serialize, Deserialize)]
struct LawJson {
    #[serde(rename = "Q")]
    q: Vec<String>,
    theta: Vec<f64>,
    #[serde(rename = "P")]
    p: HashMap<String, Vec<(Vec<usize>, f64)>>,
}

impl OffspringLaw {
    pub fn new(names: Vec<String>, theta: Vec<f64>, p: Vec<Vec<(Vec<usize>, f64)>>) -> Result<Self> {
        let q = names.len();
        if q == 0 {
            return Err(Error::BadLaw("empty type set".into()));
        }
        if theta.len() != q || p.len() != q {
            return Err(Error::BadLaw("theta/P length mismatch with Q".into()));
        }
        if theta.iter().any(|&t| t <= 0.0) {
            return Err(Error::BadLaw("theta must be strictly positive".into()));
        }
        if (theta.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::BadLaw("theta must sum to 1".into()));
        }
        let mut law = OffspringLaw { names, theta, p };
        for (i, pi) in law.p.iter_mut().enumerate() {
            let mut total = 0.0;
            for (k, prob) in pi.iter() {
                if k.len() != q {
                    return Err(Error::BadLaw(format!(
                        "type {i}: offspring vector length {} != |Q| {q}",
                        k.len()
                    )));
                }
                if *prob < 0.0 {
                    return Err(Error::BadLaw(format!("type {i}: negative probability")));
                }
                total += prob;
            }
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::BadLaw(format!("type {i}: P_i sums to {total}")));
            }
            pi.retain(|(_, prob)| *prob > 0.0);
            pi.sort_by(|a, b| a.0.cmp(&b.0));
        }
        // balance: theta(i) A(i,j) = theta(j) A(j,i)
        let a = law.a_matrix();
        for i in 0..q {
            for j in 0..q {
                let lhs = law.theta[i] * a[i][j];
                let rhs = law.theta[j] * a[j][i];
                if (lhs - rhs).abs() > BALANCE_TOL {
                    return Err(Error::BadLaw(format!(
                        "balance violated at ({i},{j}): {lhs} vs {rhs}"
                    )));
                }
            }
        }
        // non-singularity: some rho_{i,j}(k) > 0 with ||k|| != 1
        let mut nonsingular = false;
        'outer: for i in 0..q {
            for (k, _) in &law.p[i] {
                let norm: usize = k.iter().sum();
                // rho_{i,j}(k - e_j) > 0 whenever P_i(k) > 0 and k_j > 0
                if norm >= 1 && norm != 2 {
                    nonsingular = true;
                    break 'outer;
                }
            }
        }
        if !nonsingular {
            return Err(Error::BadLaw(
                "singular law: every size-biased offspring vector has norm 1".into(),
            ));
        }
        Ok(law)
    }

    /// Single-type law from (offspring count, probability) pairs.
    pub fn single_type(pairs: &[(usize, f64)]) -> Result<Self> {
        let p = pairs.iter().map(|&(k, pr)| (vec![k], pr)).collect();
        OffspringLaw::new(vec!["0".into()], vec![1.0], vec![p])
    }

    /// Degenerate law P(k) = 1: the k-regular tree ensemble.
    pub fn regular(k: usize) -> Self {
        OffspringLaw::single_type(&[(k, 1.0)]).unwrap()
    }

    /// Poisson(mean) truncated so the dropped tail mass is < tail, renormalized.
    pub fn poisson(mean: f64, tail: f64) -> Result<Self> {
        if mean <= 0.0 {
            return Err(Error::BadLaw("Poisson mean must be positive".into()));
        }
        let pmf = poisson_pmf_truncated(mean, tail);
        let pairs: Vec<(usize, f64)> = pmf.into_iter().enumerate().collect();
        OffspringLaw::single_type(&pairs)
    }

    /// q-partite recipe: uniform theta on q types, type i never produces type i,
    /// and each other coordinate is independent Poisson(2*alpha*q/(q-1)).
    pub fn q_partite(q: usize, alpha: f64, tail: f64) -> Result<Self> {
        if q < 2 {
            return Err(Error::BadLaw("q-partite needs q >= 2".into()));
        }
        let mean = 2.0 * alpha * q as f64 / (q as f64 - 1.0);
        let pmf = poisson_pmf_truncated(mean, tail);
        let names = (0..q).map(|i| i.to_string()).collect();
        let theta = vec![1.0 / q as f64; q];
        let mut p = Vec::with_capacity(q);
        for i in 0..q {
            let others: Vec<usize> = (0..q).filter(|&j| j != i).collect();
            let mut support: Vec<(Vec<usize>, f64)> = vec![(vec![0; q], 1.0)];
            for &j in &others {
                let mut next = Vec::with_capacity(support.len() * pmf.len());
                for (k, pr) in &support {
                    for (kj, pj) in pmf.iter().enumerate() {
                        let mut k2 = k.clone();
                        k2[j] = kj;
                        next.push((k2, pr * pj));
                    }
                }
                support = next;
            }
            support.retain(|(_, pr)| *pr > 1e-300);
            p.push(support);
        }
        OffspringLaw::new(names, theta, p)
    }

    pub fn q(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn support(&self, i: usize) -> &[(Vec<usize>, f64)] {
        &self.p[i]
    }

    /// A(i,j) = sum_k P_i(k) k_j.
    pub fn a_matrix(&self) -> Vec<Vec<f64>> {
        let q = self.q();
        let mut a = vec![vec![0.0; q]; q];
        for i in 0..q {
            for (k, pr) in &self.p[i] {
                for j in 0..q {
                    a[i][j] += pr * k[j] as f64;
                }
            }
        }
        a
    }

    /// Mean root degree under theta.
    pub fn mean_degree(&self) -> f64 {
        let mut total = 0.0;
        for i in 0..self.q() {
            for (k, pr) in &self.p[i] {
                total += self.theta[i] * pr * k.iter().sum::<usize>() as f64;
            }
        }
        total
    }

    /// Minimum of ||k|| over the support (minimum offspring count of the root).
    pub fn min_norm(&self) -> usize {
        self.p
            .iter()
            .flatten()
            .map(|(k, _)| k.iter().sum())
            .min()
            .unwrap_or(0)
    }

    pub fn to_json(&self) -> String {
        let p = self
            .names
            .iter()
            .zip(&self.p)
            .map(|(name, pi)| (name.clone(), pi.clone()))
            .collect();
        let doc = LawJson {
            q: self.names.clone(),
            theta: self.theta.clone(),
            p,
        };
        serde_json::to_string_pretty(&doc).unwrap()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: LawJson = serde_json::from_str(text)?;
        let mut p = Vec::with_capacity(doc.q.len());
        for name in &doc.q {
            let pi = doc
                .p
                .get(name)
                .ok_or_else(|| Error::BadLaw(format!("missing P entry for type {name}")))?;
            p.push(pi.clone());
        }
        OffspringLaw::new(doc.q, doc.theta, p)
    }

    /// Size-biased kernel rho and its mean matrix over directed pair types.
    pub fn size_bias(&self) -> Result<SizeBiasedKernel> {
        let q = self.q();
        let a = self.a_matrix();
        let mut pairs = Vec::new();
        for i in 0..q {
            for j in 0..q {
                if a[i][j] > 0.0 {
                    pairs.push((i, j));
                }
            }
        }
        if pairs.is_empty() {
            return Err(Error::BadLaw("all A(i,j) vanish".into()));
        }
        let mut rho = Vec::with_capacity(pairs.len());
        for &(i, j) in &pairs {
            // rho_{i,j}(k) = P_i(k + e_j) (k_j + 1) / A(i,j)
            let mut dist: Vec<(Vec<usize>, f64)> = Vec::new();
            for (k, pr) in &self.p[i] {
                if k[j] == 0 {
                    continue;
                }
                let mut kd = k.clone();
                kd[j] -= 1;
                dist.push((kd, pr * k[j] as f64 / a[i][j]));
            }
            dist.sort_by(|x, y| x.0.cmp(&y.0));
            // merge duplicates (distinct parent vectors can map to the same k)
            let mut merged: Vec<(Vec<usize>, f64)> = Vec::new();
            for (k, pr) in dist {
                match merged.last_mut() {
                    Some((lk, lp)) if *lk == k => *lp += pr,
                    _ => merged.push((k, pr)),
                }
            }
            let total: f64 = merged.iter().map(|(_, pr)| pr).sum();
            if (total - 1.0).abs() > BALANCE_TOL {
                return Err(Error::BadLaw(format!(
                    "rho({i},{j}) sums to {total}, expected 1"
                )));
            }
            rho.push(merged);
        }
        let np = pairs.len();
        let mut mean = vec![vec![0.0; np]; np];
        for (r, &(i1, _)) in pairs.iter().enumerate() {
            for (c, &(i2, j2)) in pairs.iter().enumerate() {
                if j2 != i1 {
                    continue;
                }
                mean[r][c] = rho[r]
                    .iter()
                    .map(|(k, pr)| pr * k[i2] as f64)
                    .sum();
            }
        }
        Ok(SizeBiasedKernel {
            pairs,
            rho,
            mean_matrix: mean,
        })
    }

    /// Size-biased degree law K (single-type only): K - 1 ~ rho.
    pub fn size_biased_degree(&self) -> Result<Vec<(usize, f64)>> {
        if self.q() != 1 {
            return Err(Error::BadLaw(
                "size-biased degree law is single-type only".into(),
            ));
        }
        let kernel = self.size_bias()?;
        Ok(kernel.rho[0]
            .iter()
            .map(|(k, pr)| (k[0] + 1, *pr))
            .collect())
    }
}

/// Size-biased offspring kernel over directed pair types Q_A = {(i,j): A(i,j)>0}.
#[derive(Clone, Debug)]
pub struct SizeBiasedKernel {
    /// directed pair types (vertex type, parent type)
    pairs: Vec<(usize, usize)>,
    rho: Vec<Vec<(Vec<usize>, f64)>>,
    mean_matrix: Vec<Vec<f64>>,
}

impl SizeBiasedKernel {
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn rho(&self, i: usize, j: usize) -> Option<&[(Vec<usize>, f64)]> {
        self.pairs
            .iter()
            .position(|&p| p == (i, j))
            .map(|idx| self.rho[idx].as_slice())
    }

    pub fn mean_matrix(&self) -> &[Vec<f64>] {
        &self.mean_matrix
    }

    /// Positive regularity: A_rho^r strictly positive for some r <= |Q_A|.
    pub fn is_positive_regular(&self) -> bool {
        let np = self.pairs.len();
        let mut reach: Vec<Vec<bool>> = self
            .mean_matrix
            .iter()
            .map(|row| row.iter().map(|&x| x > 0.0).collect())
            .collect();
        for _ in 0..np {
            if reach.iter().all(|row| row.iter().all(|&b| b)) {
                return true;
            }
            // boolean product with the one-step pattern
            let mut next = vec![vec![false; np]; np];
            for r in 0..np {
                for m in 0..np {
                    if !reach[r][m] {
                        continue;
                    }
                    for c in 0..np {
                        if self.mean_matrix[m][c] > 0.0 {
                            next[r][c] = true;
                        }
                    }
                }
            }
            reach = next;
        }
        reach.iter().all(|row| row.iter().all(|&b| b))
    }
}

/// Perron root of the kernel's mean matrix, relative tolerance 1e-10.
pub fn spectral_radius(kernel: &SizeBiasedKernel) -> Result<f64> {
    if !kernel.is_positive_regular() {
        return Err(Error::NotPositiveRegular);
    }
    let a = kernel.mean_matrix();
    let np = a.len();
    if np == 1 {
        return Ok(a[0][0]);
    }
    // iterate on B = A^r with B > 0 entrywise so the Collatz-Wielandt bracket
    // collapses geometrically; lambda(A) = lambda(B)^(1/r)
    let mut b: Vec<Vec<f64>> = a.to_vec();
    let mut r = 1u32;
    while b.iter().any(|row| row.iter().any(|&x| x == 0.0)) {
        b = mat_mul(&b, a);
        r += 1;
        if r > np as u32 + 1 {
            return Err(Error::NotPositiveRegular);
        }
    }
    let mut x = vec![1.0; np];
    for _ in 0..100_000 {
        let y = mat_vec(&b, &x);
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for i in 0..np {
            let ratio = y[i] / x[i];
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        let norm: f64 = y.iter().sum();
        x = y.into_iter().map(|v| v / norm).collect();
        if hi - lo <= 1e-12 * hi {
            return Ok(((lo + hi) / 2.0).powf(1.0 / r as f64));
        }
    }
    Err(Error::BadParameter("spectral radius did not converge".into()))
}

/// Branching number of the ensemble's tree, conditional on non-extinction:
/// the Perron root of the size-biased mean matrix.
pub fn branching_number(law: &OffspringLaw) -> Result<f64> {
    spectral_radius(&law.size_bias()?)
}

/// Critical inverse temperature: br * tanh(beta_c) = 1.
pub fn beta_c(br: f64) -> f64 {
    if br > 1.0 {
        (1.0 / br).atanh()
    } else {
        f64::INFINITY
    }
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k] == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|row| row.iter().zip(x).map(|(&c, &v)| c * v).sum())
        .collect()
}

fn poisson_pmf_truncated(mean: f64, tail: f64) -> Vec<f64> {
    let mut pmf = vec![(-mean).exp()];
    let mut cum = pmf[0];
    let mut k = 0usize;
    while 1.0 - cum > tail {
        k += 1;
        let next = pmf[k - 1] * mean / k as f64;
        pmf.push(next);
        cum += next;
    }
    let norm: f64 = pmf.iter().sum();
    for p in &mut pmf {
        *p /= norm;
    }
    pmf
}

fn sample_index<R: Rng>(probs: impl Iterator<Item = f64>, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut last = 0;
    for (idx, p) in probs.enumerate() {
        cum += p;
        last = idx;
        if u < cum {
            return idx;
        }
    }
    last
}

/// Where padding half-edges attach when directed type counts disagree.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PadEndpoint {
    /// uniform over existing vertices of the required type
    #[default]
    UniformExisting,
    /// fresh degree-1 vertices appended to the graph
    NewVertex,
}

#[derive(Clone, Debug, Default)]
pub struct ConfigModelReport {
    /// half-edges added to equalize directed type counts
    pub padding: usize,
    /// half-edges discarded (odd leftover in same-type matching)
    pub discarded: usize,
    pub n_vertices: usize,
    pub n_edges: usize,
}

/// Configuration-model multigraph on ~n vertices.
///
/// Creates floor(n theta(i) P_i(k)) star vertices per (i,k), equalizes the
/// (i,j)/(j,i) half-edge counts with o(n) padding, then matches uniformly;
/// (i,i) half-edges are matched among themselves. Loops and multi-edges stay.
pub fn config_model_sample<R: Rng>(
    law: &OffspringLaw,
    n: usize,
    rng: &mut R,
    pad: PadEndpoint,
) -> Result<(RootedGraph, ConfigModelReport)> {
    let q = law.q();
    let mut vertex_type: Vec<usize> = Vec::new();
    // half[i][j]: vertex ids owning each half-edge of directed type (i,j)
    let mut half: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); q]; q];
    for i in 0..q {
        for (k, pr) in law.support(i) {
            let count = (n as f64 * law.theta()[i] * pr).floor() as usize;
            for _ in 0..count {
                let v = vertex_type.len();
                vertex_type.push(i);
                for j in 0..q {
                    for _ in 0..k[j] {
                        half[i][j].push(v);
                    }
                }
            }
        }
    }
    if vertex_type.is_empty() {
        return Err(Error::BadParameter(format!(
            "no stars created at n = {n}; increase n"
        )));
    }
    let mut report = ConfigModelReport::default();
    // equalize (i,j) vs (j,i) for i != j
    for i in 0..q {
        for j in i + 1..q {
            while half[i][j].len() < half[j][i].len() {
                let v = pad_vertex(i, &mut vertex_type, rng, pad);
                half[i][j].push(v);
                report.padding += 1;
            }
            while half[j][i].len() < half[i][j].len() {
                let v = pad_vertex(j, &mut vertex_type, rng, pad);
                half[j][i].push(v);
                report.padding += 1;
            }
        }
    }
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for i in 0..q {
        // same-type: uniform perfect matching among (i,i) half-edges
        let stubs = &mut half[i][i];
        if stubs.len() % 2 == 1 {
            let drop = rng.random_range(0..stubs.len());
            stubs.swap_remove(drop);
            report.discarded += 1;
        }
        stubs.shuffle(rng);
        for pair in stubs.chunks_exact(2) {
            edges.push((pair[0], pair[1]));
        }
    }
    for i in 0..q {
        for j in i + 1..q {
            let (left, right) = {
                let (a, b) = half.split_at_mut(j);
                (&mut a[i][j], &mut b[0][i])
            };
            left.shuffle(rng);
            right.shuffle(rng);
            for (&u, &v) in left.iter().zip(right.iter()) {
                edges.push((u, v));
            }
        }
    }
    report.n_vertices = vertex_type.len();
    report.n_edges = edges.len();
    let g = if q > 1 {
        RootedGraph::with_types(vertex_type.len(), edges, 0, vertex_type)?
    } else {
        RootedGraph::new(vertex_type.len(), edges, 0)?
    };
    Ok((g, report))
}

fn pad_vertex<R: Rng>(
    ty: usize,
    vertex_type: &mut Vec<usize>,
    rng: &mut R,
    pad: PadEndpoint,
) -> usize {
    match pad {
        PadEndpoint::NewVertex => {
            let v = vertex_type.len();
            vertex_type.push(ty);
            v
        }
        PadEndpoint::UniformExisting => {
            let candidates: Vec<usize> = (0..vertex_type.len())
                .filter(|&v| vertex_type[v] == ty)
                .collect();
            if candidates.is_empty() {
                let v = vertex_type.len();
                vertex_type.push(ty);
                v
            } else {
                candidates[rng.random_range(0..candidates.len())]
            }
        }
    }
}

/// Multi-type Galton-Watson tree truncated at the given depth, root type ~ theta,
/// root offspring ~ P, later generations ~ the size-biased kernel.
pub fn umgw_sample<R: Rng>(law: &OffspringLaw, depth: usize, rng: &mut R) -> Result<RootedGraph> {
    let kernel = law.size_bias()?;
    let root_type = sample_index(law.theta().iter().copied(), rng);
    let mut types = vec![root_type];
    let mut edges: Vec<(usize, usize)> = Vec::new();
    // frontier entries: (vertex, type, parent type or None for the root)
    let mut frontier: Vec<(usize, usize, Option<usize>)> = vec![(0, root_type, None)];
    for _ in 0..depth {
        let mut next = Vec::new();
        for (v, ty, parent_ty) in frontier {
            let offspring: &[(Vec<usize>, f64)] = match parent_ty {
                None => law.support(ty),
                Some(pt) => kernel
                    .rho(ty, pt)
                    .ok_or(Error::ZeroMeanEntry(ty, pt))?,
            };
            let idx = sample_index(offspring.iter().map(|(_, pr)| *pr), rng);
            let k = &offspring[idx].0;
            for (j, &kj) in k.iter().enumerate() {
                for _ in 0..kj {
                    let w = types.len();
                    types.push(j);
                    edges.push((v, w));
                    next.push((w, j, Some(ty)));
                }
            }
        }
        frontier = next;
    }
    if law.q() > 1 {
        RootedGraph::with_types(types.len(), edges, 0, types)
    } else {
        RootedGraph::new(types.len(), edges, 0)
    }
}
