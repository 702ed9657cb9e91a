//! Glauber dynamics for the Ising measure on finite graphs, sign-conditioned
//! sampling of the plus phase, and Monte Carlo estimators for edge
//! correlations and ball marginals. Exact free entropy on tiny graphs.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::canon::canonical_code_network;
use crate::error::{Error, Result};
use crate::graph::{ball, RootedGraph, RootedNetwork, SpinConfig};
use crate::ising::{brute_force_measure, IsingSpec};
use crate::rng::SeedTree;

/// Single-site heat-bath chain. The running magnetization is maintained
/// incrementally and re-verified against the spins every 1000 sweeps.
pub struct ChainState {
    pub spins: SpinConfig,
    pub beta: f64,
    pub fields: Vec<f64>,
    pub sweeps: usize,
    mag_sum: i64,
    rng: ChaCha8Rng,
}

impl ChainState {
    pub fn new(g: &RootedGraph, beta: f64, b: f64, mut rng: ChaCha8Rng) -> Result<Self> {
        if beta < 0.0 {
            return Err(Error::BadParameter("beta must be >= 0".into()));
        }
        let spins: SpinConfig = (0..g.n())
            .map(|_| if rng.random::<bool>() { 1 } else { -1 })
            .collect();
        let mag_sum = spins.iter().map(|&s| s as i64).sum();
        Ok(ChainState {
            spins,
            beta,
            fields: vec![b; g.n()],
            sweeps: 0,
            mag_sum,
            rng,
        })
    }

    pub fn with_fields(mut self, fields: Vec<f64>) -> Result<Self> {
        if fields.len() != self.spins.len() {
            return Err(Error::BadParameter("fields length mismatch".into()));
        }
        self.fields = fields;
        Ok(self)
    }

    pub fn magnetization_sum(&self) -> i64 {
        self.mag_sum
    }
}

/// One sweep: n random-scan heat-bath updates. Site i flips to +1 with
/// probability sigma(2 beta sum_{j in di} x_j + 2 B_i); loops contribute a
/// constant energy and drop out of the conditional.
pub fn glauber_sweep(state: &mut ChainState, g: &RootedGraph) {
    let n = g.n();
    for _ in 0..n {
        let i = state.rng.random_range(0..n);
        let mut local = 0i64;
        for &j in g.adj(i) {
            if j != i {
                local += state.spins[j] as i64;
            }
        }
        let z = 2.0 * state.beta * local as f64 + 2.0 * state.fields[i];
        let p_plus = 1.0 / (1.0 + (-z).exp());
        let new: i8 = if state.rng.random::<f64>() < p_plus { 1 } else { -1 };
        state.mag_sum += (new - state.spins[i]) as i64;
        state.spins[i] = new;
    }
    state.sweeps += 1;
    if state.sweeps % 1000 == 0 {
        let check: i64 = state.spins.iter().map(|&s| s as i64).sum();
        assert_eq!(check, state.mag_sum, "running magnetization drifted");
    }
}

/// Metropolis global-flip move: propose x -> -x with probability 1/2, accept
/// with min(1, exp(-2 sum_i B_i x_i)). The edge term is flip-invariant, so at
/// zero field the proposal always accepts. Composing this with heat-bath
/// sweeps lets the chain cross between the plus and minus phases at low
/// temperature instead of waiting for single-site tunneling.
pub fn global_flip_move(state: &mut ChainState) {
    if !state.rng.random::<bool>() {
        return;
    }
    let dh: f64 = state
        .fields
        .iter()
        .zip(&state.spins)
        .map(|(&b, &x)| 2.0 * b * x as f64)
        .sum();
    if dh <= 0.0 || state.rng.random::<f64>() < (-dh).exp() {
        for x in &mut state.spins {
            *x = -*x;
        }
        state.mag_sum = -state.mag_sum;
    }
}

/// Global-flip post-processing realizing the plus-conditioned measure at B=0:
/// returns s*x with s = sign(sum x), a fair coin at a tie.
pub fn sample_conditioned_plus(state: &mut ChainState) -> Result<SpinConfig> {
    if state.fields.iter().any(|&b| b != 0.0) {
        return Err(Error::BadParameter(
            "plus conditioning is defined at zero field".into(),
        ));
    }
    let s: i8 = if state.mag_sum > 0 {
        1
    } else if state.mag_sum < 0 {
        -1
    } else if state.rng.random::<bool>() {
        1
    } else {
        -1
    };
    Ok(state.spins.iter().map(|&x| x * s).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampler {
    Unconditioned,
    PlusConditioned,
}

#[derive(Clone, Copy, Debug)]
pub struct McmcParams {
    pub burn_in: usize,
    pub thin: usize,
}

impl Default for McmcParams {
    fn default() -> Self {
        McmcParams {
            burn_in: 200,
            thin: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EstimatorResult {
    pub mean: f64,
    pub se: f64,
    pub n_samples: usize,
    pub ess: f64,
}

/// Effective sample size from the autocorrelation spectrum, Geyer's initial
/// positive sequence: truncate at the first negative pair sum.
pub fn effective_sample_size(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 4 {
        return n as f64;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let c0: f64 = series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return n as f64;
    }
    let autocov = |k: usize| -> f64 {
        series[..n - k]
            .iter()
            .zip(&series[k..])
            .map(|(a, b)| (a - mean) * (b - mean))
            .sum::<f64>()
            / n as f64
    };
    let mut sum_rho = 0.0;
    let mut k = 1;
    let max_lag = (n / 2).min(2000);
    while k + 1 <= max_lag {
        let pair = (autocov(k) + autocov(k + 1)) / c0;
        if pair < 0.0 {
            break;
        }
        sum_rho += pair;
        k += 2;
    }
    (n as f64 / (1.0 + 2.0 * sum_rho)).min(n as f64)
}

/// Mean and batch-means standard error (32 batches).
fn batched_mean_se(series: &[f64]) -> (f64, f64) {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let n_batches = 32.min(n);
    if n_batches < 2 {
        return (mean, f64::NAN);
    }
    let batch_len = n / n_batches;
    let mut batch_means = Vec::with_capacity(n_batches);
    for b in 0..n_batches {
        let chunk = &series[b * batch_len..(b + 1) * batch_len];
        batch_means.push(chunk.iter().sum::<f64>() / chunk.len() as f64);
    }
    let bm = batch_means.iter().sum::<f64>() / n_batches as f64;
    let var = batch_means
        .iter()
        .map(|v| (v - bm).powi(2))
        .sum::<f64>()
        / (n_batches as f64 - 1.0);
    (mean, (var / n_batches as f64).sqrt())
}

fn run_chain<F: FnMut(&SpinConfig, &mut ChainState)>(
    g: &RootedGraph,
    beta: f64,
    b: f64,
    sampler: Sampler,
    n_samples: usize,
    params: &McmcParams,
    rng: ChaCha8Rng,
    mut visit: F,
) -> Result<()> {
    let mut state = ChainState::new(g, beta, b, rng)?;
    for _ in 0..params.burn_in {
        glauber_sweep(&mut state, g);
        global_flip_move(&mut state);
    }
    for _ in 0..n_samples {
        for _ in 0..params.thin.max(1) {
            glauber_sweep(&mut state, g);
            global_flip_move(&mut state);
        }
        match sampler {
            Sampler::Unconditioned => {
                let spins = state.spins.clone();
                visit(&spins, &mut state);
            }
            Sampler::PlusConditioned => {
                let spins = sample_conditioned_plus(&mut state)?;
                visit(&spins, &mut state);
            }
        }
    }
    Ok(())
}

/// Monte Carlo estimate of (1/n) sum over edges of <x_i x_j>. Loops count 1.
pub fn edge_corr_avg(
    g: &RootedGraph,
    beta: f64,
    b: f64,
    sampler: Sampler,
    n_samples: usize,
    params: &McmcParams,
    seeds: &SeedTree,
    stream: u64,
) -> Result<EstimatorResult> {
    let mut series = Vec::with_capacity(n_samples);
    run_chain(g, beta, b, sampler, n_samples, params, seeds.stream(stream), |spins, _| {
        let mut total = 0i64;
        for &(u, v) in g.edges() {
            total += (spins[u] * spins[v]) as i64;
        }
        series.push(total as f64 / g.n() as f64);
    })?;
    let (mean, se) = batched_mean_se(&series);
    let ess = effective_sample_size(&series);
    Ok(EstimatorResult {
        mean,
        se,
        n_samples,
        ess,
    })
}

/// Mean spin at a uniform vertex, (1/n) sum_i <x_i>.
pub fn mean_magnetization(
    g: &RootedGraph,
    beta: f64,
    b: f64,
    sampler: Sampler,
    n_samples: usize,
    params: &McmcParams,
    seeds: &SeedTree,
    stream: u64,
) -> Result<EstimatorResult> {
    let mut series = Vec::with_capacity(n_samples);
    run_chain(g, beta, b, sampler, n_samples, params, seeds.stream(stream), |spins, _| {
        let total: i64 = spins.iter().map(|&s| s as i64).sum();
        series.push(total as f64 / g.n() as f64);
    })?;
    let (mean, se) = batched_mean_se(&series);
    let ess = effective_sample_size(&series);
    Ok(EstimatorResult {
        mean,
        se,
        n_samples,
        ess,
    })
}

/// Empirical joint law of (canonical t-ball shape, spin pattern) at uniform
/// random centers. Non-tree balls are excluded and their fraction reported.
#[derive(Clone, Debug)]
pub struct BallMarginalEstimate {
    /// canonical marked-network code -> empirical probability
    pub law: HashMap<Vec<u8>, f64>,
    pub non_tree_fraction: f64,
    pub n_observations: usize,
}

pub fn ball_marginal_estimate(
    g: &RootedGraph,
    beta: f64,
    b: f64,
    sampler: Sampler,
    t: usize,
    n_samples: usize,
    centers_per_sample: usize,
    params: &McmcParams,
    seeds: &SeedTree,
    stream: u64,
) -> Result<BallMarginalEstimate> {
    let mut counts: HashMap<Vec<u8>, usize> = HashMap::new();
    let mut non_tree = 0usize;
    let mut total = 0usize;
    let mut err = None;
    run_chain(g, beta, b, sampler, n_samples, params, seeds.stream(stream), |spins, state| {
        for _ in 0..centers_per_sample {
            let c = state.rng.random_range(0..g.n());
            total += 1;
            let view = match ball(g, c, t) {
                Ok(v) => v,
                Err(e) => {
                    err = Some(e);
                    return;
                }
            };
            if !view.graph().is_tree() && view.graph().n() > 1 {
                non_tree += 1;
                continue;
            }
            let marks: SpinConfig = view.to_parent().iter().map(|&ov| spins[ov]).collect();
            let net = RootedNetwork::new(view.graph().clone(), marks).unwrap();
            match canonical_code_network(&net) {
                Ok(code) => *counts.entry(code).or_default() += 1,
                Err(e) => err = Some(e),
            }
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    let kept = total - non_tree;
    let law = counts
        .into_iter()
        .map(|(k, c)| (k, c as f64 / kept as f64))
        .collect();
    Ok(BallMarginalEstimate {
        law,
        non_tree_fraction: non_tree as f64 / total.max(1) as f64,
        n_observations: kept,
    })
}

/// Predicted joint law of (shape, spins) for a fixed tree ball: the Ising
/// measure on the shape with extra frontier fields (the influence of the
/// rest of the infinite tree), optionally symmetrized over a global flip.
pub fn ball_marginal_prediction(
    shape: &RootedGraph,
    beta: f64,
    frontier_extra_field: &[(usize, f64)],
    mix_plus_minus: bool,
) -> Result<HashMap<Vec<u8>, f64>> {
    let mut fields = vec![0.0; shape.n()];
    for &(v, h) in frontier_extra_field {
        fields[v] = h;
    }
    let spec = IsingSpec::new(shape.clone(), beta, fields)?;
    let bf = brute_force_measure(&spec)?;
    let mut law: HashMap<Vec<u8>, f64> = HashMap::new();
    for (mask, &p) in bf.probs().iter().enumerate() {
        let spins = bf.spins(mask);
        let weight = if mix_plus_minus {
            let flipped: SpinConfig = spins.iter().map(|&s| -s).collect();
            0.5 * (p + bf.prob_of(&flipped))
        } else {
            p
        };
        let net = RootedNetwork::new(shape.clone(), spins)?;
        *law.entry(canonical_code_network(&net)?).or_default() += weight;
    }
    Ok(law)
}

/// Total variation distance between two laws keyed by canonical codes.
pub fn total_variation(p: &HashMap<Vec<u8>, f64>, q: &HashMap<Vec<u8>, f64>) -> f64 {
    let mut keys: Vec<&Vec<u8>> = p.keys().chain(q.keys()).collect();
    keys.sort();
    keys.dedup();
    0.5 * keys
        .into_iter()
        .map(|k| (p.get(k).unwrap_or(&0.0) - q.get(k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
}

/// phi_n = (1/n) log Z by exact enumeration (n <= 20).
pub fn free_entropy(spec: &IsingSpec) -> Result<f64> {
    let bf = brute_force_measure(spec)?;
    Ok(bf.log_z() / spec.graph.n() as f64)
}

/// Centered finite difference of phi_n in beta.
pub fn d_beta_free_entropy(spec: &IsingSpec, step: f64) -> Result<f64> {
    let up = IsingSpec::new(spec.graph.clone(), spec.beta + step, spec.fields.clone())?;
    let dn = IsingSpec::new(spec.graph.clone(), spec.beta - step, spec.fields.clone())?;
    Ok((free_entropy(&up)? - free_entropy(&dn)?) / (2.0 * step))
}

/// Exact value the derivative must match: (1/n) sum over edges of <x_i x_j>.
pub fn edge_correlation_sum_exact(spec: &IsingSpec) -> Result<f64> {
    let bf = brute_force_measure(spec)?;
    Ok(bf.edge_correlation_sum() / spec.graph.n() as f64)
}
