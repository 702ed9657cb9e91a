//! Edge-expansion certificates: exact subset enumeration on small graphs, the
//! Laplacian spectral bound, and the first-moment entropy predictor for
//! configuration-model ensembles with minimum degree 3.

use nalgebra::DMatrix;

use crate::ensembles::OffspringLaw;
use crate::error::{Error, Result};
use crate::graph::RootedGraph;

pub const EXPANSION_ENUM_LIMIT: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExpansionMethod {
    Exact,
    Spectral,
    EntropyPredictor,
}

#[derive(Clone, Debug)]
pub struct ExpansionReport {
    /// (delta1, delta2): subset sizes range over [delta1 n, delta2 n].
    pub window: (f64, f64),
    /// certified lower bound on min |boundary(S)| / |S| over the window
    pub lambda: f64,
    pub method: ExpansionMethod,
    /// minimizing subset for the exact method
    pub witness: Option<Vec<usize>>,
}

/// Exact minimum of |boundary(S)|/|S| over subsets with |S| in
/// [delta1 n, delta2 n], by enumeration.
pub fn expansion_exact(g: &RootedGraph, delta1: f64, delta2: f64) -> Result<ExpansionReport> {
    let n = g.n();
    if n > EXPANSION_ENUM_LIMIT {
        return Err(Error::SizeGuard {
            op: "expansion_exact",
            n,
            limit: EXPANSION_ENUM_LIMIT,
        });
    }
    if !(0.0 <= delta1 && delta1 <= delta2 && delta2 <= 1.0) {
        return Err(Error::BadParameter(
            "need 0 <= delta1 <= delta2 <= 1".into(),
        ));
    }
    let lo = ((delta1 * n as f64).ceil() as usize).max(1);
    let hi = (delta2 * n as f64).floor() as usize;
    if lo > hi {
        return Err(Error::BadParameter(format!(
            "size window [{delta1}, {delta2}] contains no subset size of n = {n}"
        )));
    }
    let edges = g.edges();
    let mut best = f64::INFINITY;
    let mut witness = Vec::new();
    for mask in 1u32..(1u32 << n) {
        let size = mask.count_ones() as usize;
        if size < lo || size > hi {
            continue;
        }
        let mut cross = 0usize;
        for &(u, v) in edges {
            if (mask >> u & 1) != (mask >> v & 1) {
                cross += 1;
            }
        }
        let ratio = cross as f64 / size as f64;
        if ratio < best {
            best = ratio;
            witness = (0..n).filter(|&v| mask >> v & 1 == 1).collect();
            if best == 0.0 {
                break;
            }
        }
    }
    Ok(ExpansionReport {
        window: (delta1, delta2),
        lambda: best,
        method: ExpansionMethod::Exact,
        witness: Some(witness),
    })
}

/// Second-smallest eigenvalue of the combinatorial Laplacian D - A.
pub fn laplacian_lambda2(g: &RootedGraph) -> f64 {
    let n = g.n();
    if n < 2 {
        return 0.0;
    }
    let mut l = DMatrix::<f64>::zeros(n, n);
    for &(u, v) in g.edges() {
        l[(u, v)] -= 1.0;
        l[(v, u)] -= 1.0;
        l[(u, u)] += 1.0;
        l[(v, v)] += 1.0;
    }
    let mut eig: Vec<f64> = l.symmetric_eigen().eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    eig[1].max(0.0)
}

/// Cheeger-type certificate: |boundary(S)| >= lambda2 |S| (1 - |S|/n), so
/// every S with |S| <= n/2 expands by at least lambda2/2. Disconnected
/// graphs get the (correct) bound 0.
pub fn expansion_spectral(g: &RootedGraph) -> ExpansionReport {
    let lambda = if g.is_connected() {
        laplacian_lambda2(g) / 2.0
    } else {
        0.0
    };
    ExpansionReport {
        window: (0.0, 0.5),
        lambda,
        method: ExpansionMethod::Spectral,
        witness: None,
    }
}

fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.ln() - (1.0 - p) * (1.0 - p).ln()
}

/// alpha_{i,k} = theta(i) P_i(k), flattened in support order.
fn alpha_profile(law: &OffspringLaw) -> Vec<Vec<f64>> {
    (0..law.q())
        .map(|i| {
            law.support(i)
                .iter()
                .map(|&(_, p)| law.theta()[i] * p)
                .collect()
        })
        .collect()
}

/// Whether the class can match with itself at all: the half-edge counts it
/// sends between each pair of types must balance.
fn hat_symmetric(hat: &[Vec<f64>]) -> bool {
    let q = hat.len();
    (0..q).all(|i| (i + 1..q).all(|j| (hat[i][j] - hat[j][i]).abs() <= 1e-9))
}

struct Profiles {
    alpha: Vec<Vec<f64>>,
    a_hat: Vec<Vec<f64>>,
    d_hat: Vec<Vec<f64>>,
}

fn validate_delta(law: &OffspringLaw, delta: &[Vec<f64>]) -> Result<Profiles> {
    if law.min_norm() < 3 {
        return Err(Error::BadParameter(
            "entropy predictor needs every offspring vector to have norm >= 3".into(),
        ));
    }
    let alpha = alpha_profile(law);
    if delta.len() != alpha.len() {
        return Err(Error::BadParameter("delta profile has wrong type count".into()));
    }
    for (i, (d_i, a_i)) in delta.iter().zip(&alpha).enumerate() {
        if d_i.len() != a_i.len() {
            return Err(Error::BadParameter(format!(
                "delta profile for type {i} has wrong support size"
            )));
        }
        for (&d, &a) in d_i.iter().zip(a_i) {
            if !(0.0..=1.0).contains(&d) || d > a + 1e-12 {
                return Err(Error::BadParameter(format!(
                    "delta entry {d} outside [0, alpha] for type {i}"
                )));
            }
        }
    }
    let a_hat = hat_matrix(law, &alpha);
    if !hat_symmetric(&a_hat) {
        return Err(Error::BadParameter(
            "offspring law is not edge-balanced between types".into(),
        ));
    }
    let d_hat = hat_matrix(law, delta);
    if !hat_symmetric(&d_hat) {
        return Err(Error::BadParameter(
            "class sends unbalanced half-edge counts between types, so it cannot match with itself"
                .into(),
        ));
    }
    Ok(Profiles { alpha, a_hat, d_hat })
}

/// delta_hat_{i,j} = sum_k k_j delta_{i,k} computed from a flattened profile.
fn hat_matrix(law: &OffspringLaw, profile: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let q = law.q();
    let mut hat = vec![vec![0.0; q]; q];
    for i in 0..q {
        for (idx, (k, _)) in law.support(i).iter().enumerate() {
            for j in 0..q {
                hat[i][j] += k[j] as f64 * profile[i][idx];
            }
        }
    }
    hat
}

/// The two pieces of the first-moment exponent for a vertex class delta:
/// N counts choices of the class, Q the log-probability that the pairing
/// matches the class with itself.
pub fn entropy_n_q(law: &OffspringLaw, delta: &[Vec<f64>]) -> Result<(f64, f64)> {
    let p = validate_delta(law, delta)?;
    let mut n_term = 0.0;
    for (d_i, a_i) in delta.iter().zip(&p.alpha) {
        for (&d, &a) in d_i.iter().zip(a_i) {
            if a > 0.0 {
                n_term += a * binary_entropy((d / a).clamp(0.0, 1.0));
            }
        }
    }
    // matchings within a type pay half an H per half-edge, matchings between
    // two types pay a full H once per unordered pair
    let q = law.q();
    let mut q_term = 0.0;
    for i in 0..q {
        for j in i..q {
            if p.a_hat[i][j] == 0.0 {
                continue;
            }
            let h = binary_entropy((p.d_hat[i][j] / p.a_hat[i][j]).clamp(0.0, 1.0));
            let w = if i == j { 0.5 } else { 1.0 };
            q_term -= w * p.a_hat[i][j] * h;
        }
    }
    Ok((n_term, q_term))
}

/// Upper bound on N + Q using min offspring norm 3 and concavity:
/// -(1/6) sum_{i,j} alpha_hat_{i,j} H(delta_hat_{i,j} / alpha_hat_{i,j}).
pub fn entropy_rate_bound(law: &OffspringLaw, delta: &[Vec<f64>]) -> Result<f64> {
    let p = validate_delta(law, delta)?;
    let q = law.q();
    let mut bound = 0.0;
    for i in 0..q {
        for j in 0..q {
            if p.a_hat[i][j] > 0.0 {
                bound -= p.a_hat[i][j] / 6.0
                    * binary_entropy((p.d_hat[i][j] / p.a_hat[i][j]).clamp(0.0, 1.0));
            }
        }
    }
    Ok(bound)
}

/// Single-type version allowing eps n boundary edges:
/// -(alpha_hat/6) H(delta_hat/alpha_hat) + (alpha_hat/2) H(2 eps/alpha_hat).
pub fn entropy_rate_bound_eps(law: &OffspringLaw, delta: &[Vec<f64>], eps: f64) -> Result<f64> {
    if law.q() != 1 {
        return Err(Error::BadParameter(
            "the eps-corrected bound is only available for single-type laws".into(),
        ));
    }
    if eps < 0.0 {
        return Err(Error::BadParameter("eps must be nonnegative".into()));
    }
    let p = validate_delta(law, delta)?;
    let a_hat = p.a_hat[0][0];
    let d_hat = p.d_hat[0][0];
    if 2.0 * eps > a_hat {
        return Err(Error::BadParameter(format!(
            "eps = {eps} too large: needs 2 eps <= alpha_hat = {a_hat}"
        )));
    }
    Ok(-a_hat / 6.0 * binary_entropy((d_hat / a_hat).clamp(0.0, 1.0))
        + a_hat / 2.0 * binary_entropy(2.0 * eps / a_hat))
}

/// Smallest eps at which the single-type bound stops being negative, by
/// bisection over [0, alpha_hat/4] (where the correction term is increasing).
/// None when the bound stays negative across that whole range.
pub fn epsilon_zero_estimate(law: &OffspringLaw, delta: &[Vec<f64>]) -> Result<Option<f64>> {
    let a_hat = validate_delta(law, delta)?.a_hat[0][0];
    if entropy_rate_bound_eps(law, delta, 0.0)? >= 0.0 {
        return Ok(Some(0.0));
    }
    let hi = a_hat / 4.0;
    if entropy_rate_bound_eps(law, delta, hi)? < 0.0 {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0.0f64, hi);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if entropy_rate_bound_eps(law, delta, mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(hi))
}

/// Sup of the entropy bound over a product grid of delta ratios, restricted
/// to the window ||delta|| in [delta0, 1/2]. eps > 0 requires a single-type
/// law. The sup being negative certifies the expander property at rate eps.
pub fn entropy_sup(law: &OffspringLaw, delta0: f64, steps: usize, eps: f64) -> Result<f64> {
    if !(0.0 < delta0 && delta0 < 0.5) {
        return Err(Error::BadParameter("need 0 < delta0 < 1/2".into()));
    }
    if steps < 2 {
        return Err(Error::BadParameter("need at least 2 grid steps".into()));
    }
    if eps > 0.0 && law.q() != 1 {
        return Err(Error::BadParameter(
            "eps > 0 sup is only available for single-type laws".into(),
        ));
    }
    let alpha = alpha_profile(law);
    let shape: Vec<usize> = alpha.iter().map(|a| a.len()).collect();
    let dims: usize = shape.iter().sum();
    if steps.pow(dims as u32) > 2_000_000 {
        return Err(Error::BadParameter(format!(
            "grid of {steps}^{dims} delta profiles is too large"
        )));
    }
    let flat_alpha: Vec<f64> = alpha.iter().flatten().copied().collect();
    let mut idx = vec![0usize; dims];
    let mut best = f64::NEG_INFINITY;
    let mut feasible = 0usize;
    loop {
        let flat_delta: Vec<f64> = idx
            .iter()
            .zip(&flat_alpha)
            .map(|(&i, &a)| a * i as f64 / (steps - 1) as f64)
            .collect();
        let total: f64 = flat_delta.iter().sum();
        if total >= delta0 && total <= 0.5 + 1e-12 {
            let mut delta = Vec::with_capacity(alpha.len());
            let mut at = 0;
            for &len in &shape {
                delta.push(flat_delta[at..at + len].to_vec());
                at += len;
            }
            if hat_symmetric(&hat_matrix(law, &delta)) {
                feasible += 1;
                let v = if eps > 0.0 {
                    entropy_rate_bound_eps(law, &delta, eps)?
                } else {
                    entropy_rate_bound(law, &delta)?
                };
                best = best.max(v);
            }
        }
        // odometer increment
        let mut d = 0;
        loop {
            if d == dims {
                if feasible == 0 {
                    return Err(Error::BadParameter(
                        "no grid point fell inside the delta window".into(),
                    ));
                }
                return Ok(best);
            }
            idx[d] += 1;
            if idx[d] < steps {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{config_model_sample, PadEndpoint};
    use crate::graph::cycle_graph;
    use crate::rng::SeedTree;
    use rand::Rng;

    fn complete_graph(n: usize) -> RootedGraph {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                edges.push((u, v));
            }
        }
        RootedGraph::new(n, edges, 0).unwrap()
    }

    #[test]
    fn exact_complete_four() {
        let rep = expansion_exact(&complete_graph(4), 0.25, 0.5).unwrap();
        assert_eq!(rep.lambda, 2.0);
        assert_eq!(rep.witness.as_ref().unwrap().len(), 2);
    }

    #[test]
    fn exact_cycle_eight() {
        let rep = expansion_exact(&cycle_graph(8), 0.25, 0.5).unwrap();
        assert_eq!(rep.lambda, 0.5);
        // witness is a contiguous arc of 4 with 2 boundary edges
        assert_eq!(rep.witness.as_ref().unwrap().len(), 4);
    }

    #[test]
    fn exact_disconnected_zero() {
        let g = RootedGraph::new(
            6,
            vec![(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)],
            0,
        )
        .unwrap();
        let rep = expansion_exact(&g, 0.25, 0.5).unwrap();
        assert_eq!(rep.lambda, 0.0);
        let w = rep.witness.unwrap();
        assert_eq!(w.len(), 3);
    }

    #[test]
    fn exact_guard_and_window() {
        let g = cycle_graph(25);
        assert!(expansion_exact(&g, 0.25, 0.5).is_err());
        let g = complete_graph(4);
        assert!(expansion_exact(&g, 0.9, 0.95).is_err());
    }

    #[test]
    fn spectral_complete() {
        for n in [4usize, 7] {
            let rep = expansion_spectral(&complete_graph(n));
            assert!((rep.lambda - n as f64 / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn spectral_cycle() {
        for n in [6usize, 12] {
            let rep = expansion_spectral(&cycle_graph(n));
            let expect = 1.0 - (2.0 * std::f64::consts::PI / n as f64).cos();
            assert!((rep.lambda - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn spectral_disconnected() {
        let g = RootedGraph::new(4, vec![(0, 1), (2, 3)], 0).unwrap();
        assert_eq!(expansion_spectral(&g).lambda, 0.0);
    }

    #[test]
    fn spectral_sound_against_exact() {
        let seeds = SeedTree::new(41);
        let mut rng = seeds.stream(0);
        let mut tested = 0;
        while tested < 12 {
            let n = rng.random_range(4..=12);
            let m = rng.random_range(n..=2 * n);
            let edges: Vec<(usize, usize)> = (0..m)
                .map(|_| (rng.random_range(0..n), rng.random_range(0..n)))
                .collect();
            let g = RootedGraph::new(n, edges, 0).unwrap();
            if !g.is_connected() {
                continue;
            }
            tested += 1;
            let spectral = expansion_spectral(&g).lambda;
            let exact = expansion_exact(&g, 1.0 / n as f64, 0.5).unwrap().lambda;
            assert!(
                spectral <= exact + 1e-9,
                "spectral {spectral} exceeds exact {exact}"
            );
        }
    }

    #[test]
    fn spectral_positive_on_regular_samples() {
        let law = crate::ensembles::OffspringLaw::regular(3);
        let seeds = SeedTree::new(42);
        let mut rng = seeds.stream(0);
        let mut good = 0;
        let total = 40;
        for _ in 0..total {
            let (g, _) = config_model_sample(&law, 100, &mut rng, PadEndpoint::UniformExisting)
                .unwrap();
            if expansion_spectral(&g).lambda > 0.05 {
                good += 1;
            }
        }
        assert!(good >= total - 3, "only {good}/{total} samples expanded");
    }

    fn p3_law() -> OffspringLaw {
        OffspringLaw::single_type(&[(3, 1.0)]).unwrap()
    }

    #[test]
    fn entropy_single_atom_closed_form() {
        let law = p3_law();
        // delta = alpha/2: alpha = 1 at k=3, alpha_hat = 3
        let delta = vec![vec![0.5]];
        let bound = entropy_rate_bound(&law, &delta).unwrap();
        let expect = -0.5 * 2.0f64.ln();
        assert!((bound - expect).abs() < 1e-12, "{bound} vs {expect}");
        // single atom of norm exactly 3 makes the concavity step tight
        let (n, q) = entropy_n_q(&law, &delta).unwrap();
        assert!((n + q - bound).abs() < 1e-12, "n+q = {} vs {bound}", n + q);
    }

    #[test]
    fn entropy_full_delta_no_decay() {
        let law = p3_law();
        let delta = vec![vec![1.0]];
        assert_eq!(entropy_rate_bound(&law, &delta).unwrap(), 0.0);
        let (n, q) = entropy_n_q(&law, &delta).unwrap();
        assert_eq!(n, 0.0);
        assert_eq!(q, 0.0);
    }

    #[test]
    fn entropy_nq_below_bound() {
        let law = OffspringLaw::single_type(&[(3, 0.5), (4, 0.5)]).unwrap();
        let seeds = SeedTree::new(43);
        let mut rng = seeds.stream(0);
        for _ in 0..200 {
            let delta = vec![vec![
                rng.random::<f64>() * 0.5,
                rng.random::<f64>() * 0.5,
            ]];
            let (n, q) = entropy_n_q(&law, &delta).unwrap();
            let bound = entropy_rate_bound(&law, &delta).unwrap();
            assert!(n + q <= bound + 1e-12, "{} > {bound}", n + q);
        }
    }

    #[test]
    fn entropy_low_norm_rejected() {
        let law = OffspringLaw::single_type(&[(1, 0.5), (3, 0.5)]).unwrap();
        assert!(entropy_rate_bound(&law, &vec![vec![0.1, 0.1]]).is_err());
    }

    #[test]
    fn entropy_eps_behavior() {
        let law = p3_law();
        let delta = vec![vec![0.5]];
        let b0 = entropy_rate_bound_eps(&law, &delta, 0.0).unwrap();
        assert!((b0 - entropy_rate_bound(&law, &delta).unwrap()).abs() < 1e-15);
        let b1 = entropy_rate_bound_eps(&law, &delta, 0.02).unwrap();
        assert!(b1 > b0);
        let eps0 = epsilon_zero_estimate(&law, &delta).unwrap().unwrap();
        assert!(eps0 > 0.05 && eps0 < 0.15, "eps0 {eps0}");
        let at_root = entropy_rate_bound_eps(&law, &delta, eps0).unwrap();
        assert!(at_root.abs() < 1e-6, "bound at eps0: {at_root}");
    }

    #[test]
    fn entropy_sup_negative_p3() {
        let law = p3_law();
        let sup0 = entropy_sup(&law, 0.05, 41, 0.0).unwrap();
        assert!(sup0 < 0.0, "sup {sup0}");
        let sup_eps = entropy_sup(&law, 0.05, 41, 0.01).unwrap();
        assert!(sup_eps < 0.0, "sup at eps=0.01: {sup_eps}");
        assert!(sup_eps > sup0);
    }

    #[test]
    fn entropy_sup_negative_two_type() {
        // 3-regular bipartite: each type-a vertex has 3 type-b offspring
        let law = OffspringLaw::new(
            vec!["a".into(), "b".into()],
            vec![0.5, 0.5],
            vec![
                vec![(vec![0, 3], 1.0)],
                vec![(vec![3, 0], 1.0)],
            ],
        )
        .unwrap();
        let sup = entropy_sup(&law, 0.05, 41, 0.0).unwrap();
        assert!(sup < 0.0, "sup {sup}");
        // balanced half-class: norms are all exactly 3, so the concavity
        // step is tight and n + q meets the bound
        let delta = vec![vec![0.25], vec![0.25]];
        let (n, q) = entropy_n_q(&law, &delta).unwrap();
        let bound = entropy_rate_bound(&law, &delta).unwrap();
        assert!((n + q - bound).abs() < 1e-12);
        assert!((bound + 0.5 * 2.0f64.ln()).abs() < 1e-12);
        // a class drawn from one side only cannot match with itself
        assert!(entropy_rate_bound(&law, &vec![vec![0.5], vec![0.0]]).is_err());
    }
}
