//! Time-averaged occupation weights of the continuous-time simple random walk
//! (edge rate 1, generator Q = A - D), with optional killing on exit from a
//! ball, and the smoothed-spin functionals built from them.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{ball, RootedGraph, SpinConfig};
use crate::ising::{brute_force_measure, IsingSpec};

const SERIES_TAIL: f64 = 1e-12;

#[derive(Clone, Copy)]
enum SeriesMode {
    /// c_k = P(Poisson(lam*l) >= k+1) / (lam*l): time-average weights.
    Occupation,
    /// c_k = Poisson pmf: the transition kernel at time l itself.
    Transition,
}

/// Coefficients of the uniformized series, truncated once the remaining
/// Poisson mass drops below SERIES_TAIL. The pmf recurrence runs in log
/// space so large lam*l never underflows mid-stream.
fn poisson_series(lam_l: f64, mode: SeriesMode) -> Vec<f64> {
    let mut coeffs = Vec::new();
    let mut lp = -lam_l;
    let mut cdf = 0.0f64;
    let mut k = 0usize;
    let ln_lam_l = lam_l.ln();
    loop {
        let pmf = lp.exp();
        cdf += pmf;
        let tail = (1.0 - cdf).max(0.0);
        coeffs.push(match mode {
            SeriesMode::Occupation => tail / lam_l,
            SeriesMode::Transition => pmf,
        });
        if tail < SERIES_TAIL && k as f64 >= lam_l {
            break;
        }
        k += 1;
        lp += ln_lam_l - (k as f64).ln();
        assert!(k < 10_000_000, "uniformization series failed to converge");
    }
    coeffs
}

/// acc = sum_k coeffs[k] * (Phat^k)_{start,.} where Phat = I + (A - D_full)/lam.
/// The diagonal uses `full_deg`, which may exceed the listed adjacency when
/// edges leaving the vertex set have been deleted (absorption).
fn uniformized_row(
    adj: &[Vec<usize>],
    full_deg: &[f64],
    lam: f64,
    coeffs: &[f64],
    start: usize,
) -> Vec<f64> {
    let n = adj.len();
    let mut v = vec![0.0; n];
    v[start] = 1.0;
    let mut acc = vec![0.0; n];
    for (k, &c) in coeffs.iter().enumerate() {
        if c != 0.0 {
            for j in 0..n {
                acc[j] += c * v[j];
            }
        }
        if k + 1 == coeffs.len() {
            break;
        }
        let mut w: Vec<f64> = (0..n).map(|j| v[j] * (1.0 - full_deg[j] / lam)).collect();
        for u in 0..n {
            if v[u] != 0.0 {
                let s = v[u] / lam;
                for &x in &adj[u] {
                    w[x] += s;
                }
            }
        }
        v = w;
    }
    acc
}

fn check_time(l: f64) -> Result<()> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::BadParameter(format!("time horizon l = {l} must be positive")));
    }
    Ok(())
}

/// a^{l,r}_{i,.}: time-averaged occupation probabilities of the walk started
/// at i, killed on exit from B_i(r) when `r` is given. Entries are indexed by
/// the parent graph; vertices outside the ball get 0.
pub fn occupation_weights(g: &RootedGraph, i: usize, l: f64, r: Option<usize>) -> Result<Vec<f64>> {
    check_time(l)?;
    if i >= g.n() {
        return Err(Error::VertexOutOfRange(i, g.n()));
    }
    match r {
        None => {
            let adj: Vec<Vec<usize>> = (0..g.n()).map(|v| g.adj(v).to_vec()).collect();
            let full_deg: Vec<f64> = (0..g.n()).map(|v| g.adj(v).len() as f64).collect();
            let lam = full_deg.iter().cloned().fold(0.0, f64::max);
            if lam == 0.0 {
                let mut a = vec![0.0; g.n()];
                a[i] = 1.0;
                return Ok(a);
            }
            let coeffs = poisson_series(lam * l, SeriesMode::Occupation);
            Ok(uniformized_row(&adj, &full_deg, lam, &coeffs, i))
        }
        Some(radius) => {
            let view = ball(g, i, radius)?;
            let local = view.graph();
            let adj: Vec<Vec<usize>> = (0..local.n()).map(|v| local.adj(v).to_vec()).collect();
            let full_deg: Vec<f64> = view
                .to_parent()
                .iter()
                .map(|&pv| g.adj(pv).len() as f64)
                .collect();
            let lam = full_deg.iter().cloned().fold(0.0, f64::max);
            let mut a = vec![0.0; g.n()];
            if lam == 0.0 {
                a[i] = 1.0;
                return Ok(a);
            }
            let coeffs = poisson_series(lam * l, SeriesMode::Occupation);
            let acc = uniformized_row(&adj, &full_deg, lam, &coeffs, 0);
            for (j, &pv) in view.to_parent().iter().enumerate() {
                a[pv] = acc[j];
            }
            Ok(a)
        }
    }
}

/// P_i(theta_r <= l): probability the walk has left B_i(r) by time l.
/// One minus the surviving mass of the killed transition kernel.
pub fn escape_probability(g: &RootedGraph, i: usize, l: f64, r: usize) -> Result<f64> {
    check_time(l)?;
    if i >= g.n() {
        return Err(Error::VertexOutOfRange(i, g.n()));
    }
    let view = ball(g, i, r)?;
    let local = view.graph();
    let adj: Vec<Vec<usize>> = (0..local.n()).map(|v| local.adj(v).to_vec()).collect();
    let full_deg: Vec<f64> = view
        .to_parent()
        .iter()
        .map(|&pv| g.adj(pv).len() as f64)
        .collect();
    let lam = full_deg.iter().cloned().fold(0.0, f64::max);
    if lam == 0.0 {
        return Ok(0.0);
    }
    let coeffs = poisson_series(lam * l, SeriesMode::Transition);
    let acc = uniformized_row(&adj, &full_deg, lam, &coeffs, 0);
    Ok((1.0 - acc.iter().sum::<f64>()).max(0.0))
}

/// y_i = sum_j x_j a_{i,j}.
pub fn y_weighted_average(weights: &[f64], spins: &SpinConfig) -> Result<f64> {
    if weights.len() != spins.len() {
        return Err(Error::BadParameter("weights and spins length mismatch".into()));
    }
    Ok(weights
        .iter()
        .zip(spins)
        .map(|(&a, &x)| a * x as f64)
        .sum())
}

/// Per-vertex magnetizations of the window measure on B_i(t) with everything
/// outside clamped to +1: each cross edge to the exterior contributes a field
/// of beta at its interior endpoint. Exact enumeration, so the window must be
/// small. Returns the ball view plus magnetizations in local indexing.
pub fn plus_window_magnetizations(
    g: &RootedGraph,
    i: usize,
    beta: f64,
    t: usize,
) -> Result<(crate::graph::BallView, Vec<f64>)> {
    let view = ball(g, i, t)?;
    let local = view.graph();
    let fields: Vec<f64> = (0..local.n())
        .map(|v| {
            let full = g.adj(view.to_parent()[v]).len();
            let inside = local.adj(v).len();
            beta * (full - inside) as f64
        })
        .collect();
    let spec = IsingSpec::new(local.clone(), beta, fields)?;
    let bf = brute_force_measure(&spec)?;
    let mags = (0..local.n()).map(|v| bf.magnetization(v)).collect();
    Ok((view, mags))
}

/// E over the plus window measure of y_i, for weights supported inside the
/// window (killed radius r <= t).
pub fn plus_window_y_mean(
    g: &RootedGraph,
    i: usize,
    beta: f64,
    t: usize,
    weights: &[f64],
) -> Result<f64> {
    let (view, mags) = plus_window_magnetizations(g, i, beta, t)?;
    let mut in_window = vec![false; g.n()];
    let mut mag_of = vec![0.0; g.n()];
    for (j, &pv) in view.to_parent().iter().enumerate() {
        in_window[pv] = true;
        mag_of[pv] = mags[j];
    }
    for (v, &a) in weights.iter().enumerate() {
        if a != 0.0 && !in_window[v] {
            return Err(Error::BadParameter(
                "occupation weights leak outside the plus window; need r <= t".into(),
            ));
        }
    }
    Ok(weights
        .iter()
        .enumerate()
        .map(|(v, &a)| a * mag_of[v])
        .sum())
}

/// (J, A, F): J flags y at or below -eta, A flags a window mean of modulus
/// at least 2 eta, F is their conjunction.
pub fn functionals_jaf(
    weights: &[f64],
    spins: &SpinConfig,
    eta: f64,
    window_y_mean: f64,
) -> Result<(bool, bool, bool)> {
    if eta <= 0.0 {
        return Err(Error::BadParameter("eta must be positive".into()));
    }
    let y = y_weighted_average(weights, spins)?;
    let j = y <= -eta;
    let a = window_y_mean.abs() >= 2.0 * eta;
    Ok((j, a, j && a))
}

/// Fraction of vertices with y_i > -eta under r = infinity weights, for a
/// config with nonnegative total spin. Errs if the fraction dips below
/// eta/(1+eta) - 1e-9, which no such config can do.
pub fn u_n_small_check(g: &RootedGraph, spins: &SpinConfig, l: f64, eta: f64) -> Result<(f64, f64)> {
    if spins.len() != g.n() {
        return Err(Error::BadParameter("spins length mismatch".into()));
    }
    if eta <= 0.0 {
        return Err(Error::BadParameter("eta must be positive".into()));
    }
    let total: i64 = spins.iter().map(|&x| x as i64).sum();
    if total < 0 {
        return Err(Error::BadParameter(
            "config has negative total spin; the bound needs sum x >= 0".into(),
        ));
    }
    let flags: Vec<bool> = (0..g.n())
        .into_par_iter()
        .map(|i| {
            let w = occupation_weights(g, i, l, None)?;
            Ok(y_weighted_average(&w, spins)? > -eta)
        })
        .collect::<Result<_>>()?;
    let frac = flags.iter().filter(|&&b| b).count() as f64 / g.n() as f64;
    let bound = eta / (1.0 + eta);
    if frac < bound - 1e-9 {
        return Err(Error::BoundViolated {
            what: "fraction of vertices with y > -eta",
            got: frac,
            bound,
        });
    }
    Ok((frac, bound))
}

/// rho at the root of a depth-truncated tree with plus frontier: the
/// occupation-weighted average of per-vertex plus-boundary magnetizations.
pub fn rho_l(tree: &RootedGraph, beta: f64, l: f64, t_depth: usize) -> Result<f64> {
    if !tree.is_tree() {
        return Err(Error::NotATree);
    }
    check_time(l)?;
    let root = tree.root();
    let weights = occupation_weights(tree, root, l, None)?;
    let base = vec![0.0; tree.n()];
    let fields = crate::ising::boundary_fields(tree, t_depth, crate::ising::Boundary::Plus, &base)?;
    let msgs = crate::ising::tree_messages(tree, beta, &fields)?;
    Ok(weights
        .iter()
        .enumerate()
        .map(|(v, &a)| a * msgs.vertex_magnetization(v, tree))
        .sum())
}

/// tau_r = sum_{k=1}^r E_k / deg(Y_{k-1}) along a discrete simple random walk
/// path: the time of the r-th jump of the continuous-time chain. Returns the
/// raw samples.
pub fn tau_r_simulate(
    g: &RootedGraph,
    i: usize,
    r: usize,
    n_trials: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    if r == 0 {
        return Err(Error::BadParameter("tau_r needs r >= 1".into()));
    }
    if i >= g.n() {
        return Err(Error::VertexOutOfRange(i, g.n()));
    }
    let mut out = Vec::with_capacity(n_trials);
    for _ in 0..n_trials {
        let mut v = i;
        let mut tau = 0.0;
        for _ in 0..r {
            let deg = g.adj(v).len();
            if deg == 0 {
                return Err(Error::BadParameter(format!(
                    "walk reached isolated vertex {v}; tau_r undefined"
                )));
            }
            let u: f64 = rng.random();
            tau += -(1.0 - u).ln() / deg as f64;
            v = g.adj(v)[rng.random_range(0..deg)];
        }
        out.push(tau);
    }
    Ok(out)
}

/// Samples of theta_r, the first time the walk leaves B_i(r). Infinity when
/// the ball swallows the whole component (the walk can never leave).
pub fn exit_time_simulate(
    g: &RootedGraph,
    i: usize,
    r: usize,
    n_trials: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    if i >= g.n() {
        return Err(Error::VertexOutOfRange(i, g.n()));
    }
    let dist = g.distances(i);
    let escapable = (0..g.n()).any(|v| {
        dist[v] <= r && g.adj(v).iter().any(|&w| dist[w] > r)
    });
    if !escapable {
        return Ok(vec![f64::INFINITY; n_trials]);
    }
    let mut out = Vec::with_capacity(n_trials);
    for _ in 0..n_trials {
        let mut v = i;
        let mut t = 0.0;
        loop {
            let deg = g.adj(v).len();
            if deg == 0 {
                t = f64::INFINITY;
                break;
            }
            let u: f64 = rng.random();
            t += -(1.0 - u).ln() / deg as f64;
            v = g.adj(v)[rng.random_range(0..deg)];
            if dist[v] > r {
                break;
            }
        }
        out.push(t);
    }
    Ok(out)
}
