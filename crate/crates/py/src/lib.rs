//! Python bindings: graphs, offspring laws, and the main estimators, thin
//! wrappers over the core crate. Build with `cargo build -p treeising-py`;
//! python/smoke_test.py shows how to load the resulting cdylib.

use std::collections::HashMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use treeising::ensembles::{self, OffspringLaw, PadEndpoint};
use treeising::graph::{self, RootedGraph};
use treeising::ising;
use treeising::limits;
use treeising::mcmc;
use treeising::rng::SeedTree;
use treeising::{capacity, canon, expander, srw};

fn perr(e: treeising::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Finite multigraph with a distinguished root, vertex ids 0..n-1.
#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct Graph {
    inner: RootedGraph,
}

#[pymethods]
impl Graph {
    #[new]
    #[pyo3(signature = (n, edges, root = 0))]
    fn new(n: usize, edges: Vec<(usize, usize)>, root: usize) -> PyResult<Self> {
        Ok(Graph {
            inner: RootedGraph::new(n, edges, root).map_err(perr)?,
        })
    }

    #[staticmethod]
    fn regular_tree(k: usize, depth: usize) -> Self {
        Graph {
            inner: graph::regular_tree(k, depth),
        }
    }

    #[staticmethod]
    fn path(n: usize) -> Self {
        Graph {
            inner: graph::path_graph(n),
        }
    }

    #[staticmethod]
    fn cycle(n: usize) -> Self {
        Graph {
            inner: graph::cycle_graph(n),
        }
    }

    #[staticmethod]
    fn complete(n: usize) -> Self {
        Graph {
            inner: graph::complete_graph(n),
        }
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Graph {
            inner: graph::read_graph(text).map_err(perr)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Graph {
            inner: graph::read_graph_file(path.as_ref()).map_err(perr)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn root(&self) -> usize {
        self.inner.root()
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().to_vec()
    }

    fn degree(&self, v: usize) -> usize {
        self.inner.degree(v)
    }

    fn is_tree(&self) -> bool {
        self.inner.is_tree()
    }

    fn is_simple(&self) -> bool {
        self.inner.is_simple()
    }

    fn is_connected(&self) -> bool {
        self.inner.is_connected()
    }

    fn distances(&self, v: usize) -> Vec<usize> {
        self.inner.distances(v)
    }

    /// Induced ball of radius t around v, re-rooted at v (local id 0).
    fn ball(&self, v: usize, t: usize) -> PyResult<Self> {
        Ok(Graph {
            inner: graph::ball(&self.inner, v, t).map_err(perr)?.graph().clone(),
        })
    }

    /// Rooted-isomorphism-invariant byte code.
    fn canonical_code<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyBytes>> {
        Ok(PyBytes::new(py, &canon::canonical_code(&self.inner).map_err(perr)?))
    }

    fn text(&self) -> String {
        graph::write_graph(&self.inner)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        graph::write_graph_file(&self.inner, path.as_ref()).map_err(perr)
    }

    fn __repr__(&self) -> String {
        format!(
            "Graph(n={}, m={}, root={})",
            self.inner.n(),
            self.inner.m(),
            self.inner.root()
        )
    }
}

/// Multi-type offspring law (type frequencies theta, per-type offspring
/// vectors with probabilities).
#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct Law {
    inner: OffspringLaw,
}

#[pymethods]
impl Law {
    #[staticmethod]
    fn regular(k: usize) -> Self {
        Law {
            inner: OffspringLaw::regular(k),
        }
    }

    /// Single type, support given as [(degree, probability), ...].
    #[staticmethod]
    fn single_type(pairs: Vec<(usize, f64)>) -> PyResult<Self> {
        Ok(Law {
            inner: OffspringLaw::single_type(&pairs).map_err(perr)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (mean, tail = 1e-12))]
    fn poisson(mean: f64, tail: f64) -> PyResult<Self> {
        Ok(Law {
            inner: OffspringLaw::poisson(mean, tail).map_err(perr)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (q, alpha, tail = 1e-12))]
    fn q_partite(q: usize, alpha: f64, tail: f64) -> PyResult<Self> {
        Ok(Law {
            inner: OffspringLaw::q_partite(q, alpha, tail).map_err(perr)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Law {
            inner: OffspringLaw::from_json(text).map_err(perr)?,
        })
    }

    #[getter]
    fn q(&self) -> usize {
        self.inner.q()
    }

    #[getter]
    fn theta(&self) -> Vec<f64> {
        self.inner.theta().to_vec()
    }

    fn mean_degree(&self) -> f64 {
        self.inner.mean_degree()
    }

    fn min_norm(&self) -> usize {
        self.inner.min_norm()
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    /// Spectral radius of the size-biased mean offspring kernel.
    fn branching_number(&self) -> PyResult<f64> {
        ensembles::branching_number(&self.inner).map_err(perr)
    }

    /// atanh(1/br): the reconstruction/uniqueness threshold.
    fn beta_c(&self) -> PyResult<f64> {
        Ok(ensembles::beta_c(ensembles::branching_number(&self.inner).map_err(perr)?))
    }

    /// Configuration-model sample on ~n vertices. Returns (graph, report dict).
    fn config_model<'py>(
        &self,
        py: Python<'py>,
        n: usize,
        seed: u64,
    ) -> PyResult<(Graph, Bound<'py, PyAny>)> {
        let mut rng = SeedTree::new(seed).stream(0);
        let (g, report) =
            ensembles::config_model_sample(&self.inner, n, &mut rng, PadEndpoint::UniformExisting)
                .map_err(perr)?;
        let d: HashMap<&str, usize> = HashMap::from([
            ("padding", report.padding),
            ("discarded", report.discarded),
            ("n_vertices", report.n_vertices),
            ("n_edges", report.n_edges),
        ]);
        Ok((Graph { inner: g }, d.into_pyobject(py)?.into_any()))
    }

    /// Galton-Watson tree sample truncated at the given depth.
    fn umgw(&self, depth: usize, seed: u64) -> PyResult<Graph> {
        let mut rng = SeedTree::new(seed).stream(0);
        Ok(Graph {
            inner: ensembles::umgw_sample(&self.inner, depth, &mut rng).map_err(perr)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("Law(q={}, mean_degree={:.4})", self.inner.q(), self.inner.mean_degree())
    }
}

/// atanh(tanh(theta') tanh(h)) with theta' = theta: the cavity edge map.
#[pyfunction]
fn f_theta(theta: f64, h: f64) -> f64 {
    ising::f_theta(theta, h)
}

fn fields_or_zero(g: &RootedGraph, fields: Option<Vec<f64>>) -> Vec<f64> {
    fields.unwrap_or_else(|| vec![0.0; g.n()])
}

/// Exact marginals by enumeration (small graphs): dict with magnetizations,
/// edge_correlations (aligned with graph.edges()), and log_z.
#[pyfunction]
#[pyo3(signature = (graph, beta, fields = None))]
fn enum_marginals<'py>(
    py: Python<'py>,
    graph: &Graph,
    beta: f64,
    fields: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyAny>> {
    let spec = ising::IsingSpec::new(
        graph.inner.clone(),
        beta,
        fields_or_zero(&graph.inner, fields),
    )
    .map_err(perr)?;
    let bf = ising::brute_force_measure(&spec).map_err(perr)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("magnetizations", bf.magnetizations().to_vec())?;
    d.set_item("edge_correlations", bf.edge_correlations().to_vec())?;
    d.set_item("log_z", bf.log_z())?;
    Ok(d.into_any())
}

/// Marginals from the message recursion (trees only), same layout minus log_z.
#[pyfunction]
#[pyo3(signature = (graph, beta, fields = None))]
fn message_marginals<'py>(
    py: Python<'py>,
    graph: &Graph,
    beta: f64,
    fields: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyAny>> {
    let g = &graph.inner;
    let msg = ising::tree_messages(g, beta, &fields_or_zero(g, fields)).map_err(perr)?;
    let mags: Vec<f64> = (0..g.n()).map(|v| msg.vertex_magnetization(v, g)).collect();
    let corrs: Vec<f64> = g
        .edges()
        .iter()
        .map(|&(u, v)| msg.edge_correlation(u, v).map_err(perr))
        .collect::<PyResult<_>>()?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("magnetizations", mags)?;
    d.set_item("edge_correlations", corrs)?;
    Ok(d.into_any())
}

/// Root magnetization of a tree with spins clamped to +1 at the given depth.
#[pyfunction]
fn root_magnetization_plus(graph: &Graph, beta: f64, depth: usize) -> PyResult<f64> {
    let g = &graph.inner;
    let fields =
        ising::boundary_fields(g, depth, ising::Boundary::Plus, &vec![0.0; g.n()]).map_err(perr)?;
    Ok(ising::tree_messages(g, beta, &fields).map_err(perr)?.root_magnetization(g))
}

/// Plus-phase cavity fixed point on the k-regular tree:
/// dict with h_star, m_star, iterations, residual.
#[pyfunction]
#[pyo3(signature = (k, beta, tol = 1e-12))]
fn regular_fixed_point<'py>(
    py: Python<'py>,
    k: usize,
    beta: f64,
    tol: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let fp = limits::regular_fixed_point(k, beta, tol).map_err(perr)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("h_star", fp.h_star)?;
    d.set_item("m_star", fp.m_star)?;
    d.set_item("iterations", fp.iterations)?;
    d.set_item("residual", fp.residual)?;
    Ok(d.into_any())
}

/// Monte Carlo estimate of the limiting edge-correlation density over sampled
/// depth-truncated trees: (mean, se).
#[pyfunction]
fn u_estimate(
    law: &Law,
    beta: f64,
    b: f64,
    depth: usize,
    n_trees: usize,
    seed: u64,
) -> PyResult<(f64, f64)> {
    limits::u_estimate(&law.inner, beta, b, depth, n_trees, &SeedTree::new(seed), 0).map_err(perr)
}

/// Population dynamics for the cavity-field law. With beta0 set, starts from
/// the converged pool at beta0 and tracks quantile domination by the plus
/// start under common random numbers.
#[pyfunction]
#[pyo3(signature = (law, beta, pool, max_t, w1_tol, seed, beta0 = None))]
fn population_dynamics<'py>(
    py: Python<'py>,
    law: &Law,
    beta: f64,
    pool: usize,
    max_t: usize,
    w1_tol: f64,
    seed: u64,
    beta0: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let init = match beta0 {
        None => limits::PopInit::Plus,
        Some(b0) => limits::PopInit::DominatingBeta(b0),
    };
    let run = limits::pop_converge(
        &law.inner,
        beta,
        init,
        pool,
        max_t,
        w1_tol,
        &SeedTree::new(seed),
        0,
    )
    .map_err(perr)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("converged", run.converged)?;
    d.set_item("generations", run.trace.len())?;
    d.set_item("w1_final", run.trace.last().map(|r| r.w1))?;
    d.set_item("mean_h", run.pool.mean())?;
    d.set_item("domination_ok", run.domination_ok)?;
    d.set_item(
        "trace",
        run.trace
            .iter()
            .map(|r| (r.t, r.w1, r.mean_h, r.q05, r.q50, r.q95))
            .collect::<Vec<_>>(),
    )?;
    Ok(d.into_any())
}

fn estimator_dict<'py>(py: Python<'py>, r: mcmc::EstimatorResult) -> PyResult<Bound<'py, PyAny>> {
    let d = pyo3::types::PyDict::new(py);
    d.set_item("mean", r.mean)?;
    d.set_item("se", r.se)?;
    d.set_item("n_samples", r.n_samples)?;
    d.set_item("ess", r.ess)?;
    Ok(d.into_any())
}

/// Glauber estimate of (1/n) sum over edges of <x_i x_j>.
#[pyfunction]
#[pyo3(signature = (graph, beta, samples, b = 0.0, conditioned = false, burn_in = 200, seed = 1))]
#[allow(clippy::too_many_arguments)]
fn edge_corr_mcmc<'py>(
    py: Python<'py>,
    graph: &Graph,
    beta: f64,
    samples: usize,
    b: f64,
    conditioned: bool,
    burn_in: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let sampler = if conditioned {
        mcmc::Sampler::PlusConditioned
    } else {
        mcmc::Sampler::Unconditioned
    };
    let params = mcmc::McmcParams { burn_in, thin: 1 };
    let r = mcmc::edge_corr_avg(
        &graph.inner,
        beta,
        b,
        sampler,
        samples,
        &params,
        &SeedTree::new(seed),
        0,
    )
    .map_err(perr)?;
    estimator_dict(py, r)
}

/// Glauber estimate of the mean spin at a uniform vertex.
#[pyfunction]
#[pyo3(signature = (graph, beta, samples, b = 0.0, conditioned = false, burn_in = 200, seed = 1))]
#[allow(clippy::too_many_arguments)]
fn mean_spin_mcmc<'py>(
    py: Python<'py>,
    graph: &Graph,
    beta: f64,
    samples: usize,
    b: f64,
    conditioned: bool,
    burn_in: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let sampler = if conditioned {
        mcmc::Sampler::PlusConditioned
    } else {
        mcmc::Sampler::Unconditioned
    };
    let params = mcmc::McmcParams { burn_in, thin: 1 };
    let r = mcmc::mean_magnetization(
        &graph.inner,
        beta,
        b,
        sampler,
        samples,
        &params,
        &SeedTree::new(seed),
        0,
    )
    .map_err(perr)?;
    estimator_dict(py, r)
}

/// Time-averaged occupation probabilities of the rate-1 walk from i over
/// horizon l, killed on exit from the radius-r ball when r is given.
#[pyfunction]
#[pyo3(signature = (graph, i, l, r = None))]
fn occupation_weights(graph: &Graph, i: usize, l: f64, r: Option<usize>) -> PyResult<Vec<f64>> {
    srw::occupation_weights(&graph.inner, i, l, r).map_err(perr)
}

/// Fraction of vertices whose occupation-smoothed spin exceeds -eta, and the
/// proven lower bound eta/(1+eta). Errs if the config violates the bound.
#[pyfunction]
fn smoothed_spin_fraction(graph: &Graph, spins: Vec<i8>, l: f64, eta: f64) -> PyResult<(f64, f64)> {
    srw::u_n_small_check(&graph.inner, &spins, l, eta).map_err(perr)
}

/// Tree capacity with per-generation decay theta: dict with value, upper, gap.
#[pyfunction]
#[pyo3(signature = (graph, theta, tol = 1e-3))]
fn capa3<'py>(
    py: Python<'py>,
    graph: &Graph,
    theta: f64,
    tol: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let sol = capacity::capa3_solve(&graph.inner, theta, tol).map_err(perr)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("value", sol.value)?;
    d.set_item("upper", sol.upper)?;
    d.set_item("gap", sol.gap)?;
    Ok(d.into_any())
}

/// Vertex counts per depth below the root.
#[pyfunction]
fn boundary_profile(graph: &Graph) -> Vec<usize> {
    capacity::boundary_profile(&graph.inner)
}

/// Partial sums sum_k theta^{-2k} |boundary(k)|^{-2}; capacity never exceeds
/// the last entry to the -1/2.
#[pyfunction]
fn s_t_sum(profile: Vec<usize>, theta: f64) -> Vec<f64> {
    capacity::s_t_sum(&profile, theta)
}

/// Exhaustive minimum of |boundary(S)|/|S| over subset sizes in
/// [delta1 n, delta2 n]: dict with value and a minimizing subset.
#[pyfunction]
fn expansion_exact<'py>(
    py: Python<'py>,
    graph: &Graph,
    delta1: f64,
    delta2: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let rep = expander::expansion_exact(&graph.inner, delta1, delta2).map_err(perr)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("value", rep.lambda)?;
    d.set_item("witness", rep.witness)?;
    Ok(d.into_any())
}

/// Spectral-gap lower bound lambda_2/2 on the same ratio (0 if disconnected).
#[pyfunction]
fn expansion_spectral(graph: &Graph) -> f64 {
    expander::expansion_spectral(&graph.inner).lambda
}

/// Sup of the matching-entropy rate predictor over the delta window
/// [delta0, 1/2]; negative values certify expansion of typical samples.
#[pyfunction]
#[pyo3(signature = (law, delta0, steps, eps = 0.0))]
fn entropy_sup(law: &Law, delta0: f64, steps: usize, eps: f64) -> PyResult<f64> {
    expander::entropy_sup(&law.inner, delta0, steps, eps).map_err(perr)
}

#[pymodule]
fn treeising_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Graph>()?;
    m.add_class::<Law>()?;
    m.add_function(wrap_pyfunction!(f_theta, m)?)?;
    m.add_function(wrap_pyfunction!(enum_marginals, m)?)?;
    m.add_function(wrap_pyfunction!(message_marginals, m)?)?;
    m.add_function(wrap_pyfunction!(root_magnetization_plus, m)?)?;
    m.add_function(wrap_pyfunction!(regular_fixed_point, m)?)?;
    m.add_function(wrap_pyfunction!(u_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(population_dynamics, m)?)?;
    m.add_function(wrap_pyfunction!(edge_corr_mcmc, m)?)?;
    m.add_function(wrap_pyfunction!(mean_spin_mcmc, m)?)?;
    m.add_function(wrap_pyfunction!(occupation_weights, m)?)?;
    m.add_function(wrap_pyfunction!(smoothed_spin_fraction, m)?)?;
    m.add_function(wrap_pyfunction!(capa3, m)?)?;
    m.add_function(wrap_pyfunction!(boundary_profile, m)?)?;
    m.add_function(wrap_pyfunction!(s_t_sum, m)?)?;
    m.add_function(wrap_pyfunction!(expansion_exact, m)?)?;
    m.add_function(wrap_pyfunction!(expansion_spectral, m)?)?;
    m.add_function(wrap_pyfunction!(entropy_sup, m)?)?;
    Ok(())
}
