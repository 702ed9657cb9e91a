//! Randomized structural invariants, proptest-driven: canonical codes under
//! relabeling, ball nesting, law balance, flip symmetry, ferromagnetic
//! monotonicity through the message recursion, synchronized-randomness
//! domination, killed-walk monotonicity, and solver feasibility.

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use treeising::canon::canonical_code;
use treeising::capacity::capa3_solve;
use treeising::ensembles::{umgw_sample, OffspringLaw};
use treeising::expander::{entropy_n_q, entropy_rate_bound};
use treeising::graph::{ball, empirical_ball_law, read_graph, write_graph, RootedGraph};
use treeising::ising::{brute_force_measure, tree_messages, IsingSpec};
use treeising::limits::{dominates_sorted, pop_dynamics_step, ParticlePool};
use treeising::rng::SeedTree;
use treeising::srw::occupation_weights;

fn tree_from_choices(choices: &[prop::sample::Index]) -> RootedGraph {
    let n = choices.len() + 1;
    let edges = choices
        .iter()
        .enumerate()
        .map(|(i, c)| (c.index(i + 1), i + 1))
        .collect();
    RootedGraph::new(n, edges, 0).unwrap()
}

fn sparse_graph(n: usize, seed: u64) -> RootedGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = 2.5 / n as f64;
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    RootedGraph::new(n, edges, 0).unwrap()
}

/// Rooted-isomorphism invariant usable to certify non-isomorphism: sorted
/// (distance from root, degree) pairs.
fn coarse_profile(g: &RootedGraph) -> Vec<(usize, usize)> {
    let dist = g.distances(g.root());
    let mut prof: Vec<(usize, usize)> = (0..g.n()).map(|v| (dist[v], g.degree(v))).collect();
    prof.sort();
    prof
}

fn relabel(g: &RootedGraph, perm: &[usize]) -> RootedGraph {
    let edges = g.edges().iter().map(|&(u, v)| (perm[u], perm[v])).collect();
    RootedGraph::new(g.n(), edges, perm[g.root()]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn canonical_code_survives_relabeling(
        choices in prop::collection::vec(any::<prop::sample::Index>(), 1..12),
        seed in any::<u64>(),
    ) {
        let g = tree_from_choices(&choices);
        let mut perm: Vec<usize> = (0..g.n()).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let h = relabel(&g, &perm);
        prop_assert_eq!(canonical_code(&g).unwrap(), canonical_code(&h).unwrap());
    }

    #[test]
    fn canonical_code_separates_coarsely_different_trees(
        a in prop::collection::vec(any::<prop::sample::Index>(), 1..12),
        b in prop::collection::vec(any::<prop::sample::Index>(), 1..12),
    ) {
        let ga = tree_from_choices(&a);
        let gb = tree_from_choices(&b);
        if coarse_profile(&ga) != coarse_profile(&gb) {
            prop_assert_ne!(canonical_code(&ga).unwrap(), canonical_code(&gb).unwrap());
        }
    }

    #[test]
    fn ball_of_ball_restricts_exactly(
        choices in prop::collection::vec(any::<prop::sample::Index>(), 1..14),
        center in any::<prop::sample::Index>(),
        t in 0usize..3,
    ) {
        let g = tree_from_choices(&choices);
        let v = center.index(g.n());
        let outer = ball(&g, v, t + 1).unwrap();
        let restricted = ball(outer.graph(), outer.graph().root(), t).unwrap();
        let inner = ball(&g, v, t).unwrap();
        prop_assert_eq!(
            canonical_code(restricted.graph()).unwrap(),
            canonical_code(inner.graph()).unwrap()
        );
    }

    #[test]
    fn ball_law_is_a_probability_vector(n in 2usize..12, seed in any::<u64>(), t in 0usize..2) {
        let g = sparse_graph(n, seed);
        let law = empirical_ball_law(&g, t).unwrap();
        let total: f64 = law.values().sum();
        prop_assert!((total - 1.0).abs() < 1e-12, "frequencies sum to {}", total);
    }

    #[test]
    fn graph_text_format_round_trips(
        choices in prop::collection::vec(any::<prop::sample::Index>(), 1..14),
    ) {
        let g = tree_from_choices(&choices);
        prop_assert_eq!(&read_graph(&write_graph(&g)).unwrap(), &g);
    }

    #[test]
    fn multitype_laws_are_edge_balanced(q in 2usize..4, alpha in 1.5f64..4.0) {
        let law = OffspringLaw::q_partite(q, alpha, 1e-12).unwrap();
        let a = law.a_matrix();
        let theta = law.theta();
        for i in 0..q {
            for j in 0..q {
                prop_assert!(
                    (theta[i] * a[i][j] - theta[j] * a[j][i]).abs() < 1e-12,
                    "flow {i}->{j} unbalanced"
                );
            }
        }
    }

    #[test]
    fn zero_field_measure_is_flip_symmetric(
        n in 2usize..8,
        seed in any::<u64>(),
        beta in 0.0f64..1.5,
    ) {
        let g = sparse_graph(n, seed);
        let bf = brute_force_measure(&IsingSpec::free(g, beta).unwrap()).unwrap();
        for mask in 0..(1usize << n) {
            let spins = bf.spins(mask);
            let flipped: Vec<i8> = spins.iter().map(|&s| -s).collect();
            prop_assert_eq!(bf.prob_of(&spins), bf.prob_of(&flipped));
        }
    }

    #[test]
    fn message_magnetization_monotone_in_beta_and_fields(
        choices in prop::collection::vec(any::<prop::sample::Index>(), 2..12),
        beta in 0.1f64..1.2,
        raw_fields in prop::collection::vec(0.0f64..1.5, 12),
        bump in any::<prop::sample::Index>(),
    ) {
        let g = tree_from_choices(&choices);
        let fields: Vec<f64> = (0..g.n()).map(|v| raw_fields[v]).collect();
        let m = |beta: f64, fields: &[f64]| {
            tree_messages(&g, beta, fields).unwrap().root_magnetization(&g)
        };
        let base = m(beta, &fields);
        prop_assert!(m(beta + 1e-3, &fields) >= base - 1e-12);
        let mut bumped = fields.clone();
        bumped[bump.index(g.n())] += 1e-3;
        prop_assert!(m(beta, &bumped) >= base - 1e-12);
    }

    #[test]
    fn synchronized_step_preserves_domination(
        levels in prop::collection::vec((0.0f64..3.0, 0.0f64..1.0), 50..120),
        beta in 0.6f64..1.2,
        stream in 0u64..1000,
    ) {
        let law = OffspringLaw::single_type(&[(3, 0.5), (4, 0.5)]).unwrap();
        let k_law = law.size_biased_degree().unwrap();
        let seeds = SeedTree::new(9);
        let upper: Vec<f64> = levels.iter().map(|&(h, _)| h).collect();
        let lower: Vec<f64> = levels.iter().map(|&(h, frac)| h * frac).collect();
        let a = ParticlePool::from_samples(upper, stream).unwrap();
        let b = ParticlePool::from_samples(lower, stream).unwrap();
        prop_assert!(dominates_sorted(&a, &b, 1e-9));
        let a2 = pop_dynamics_step(&a, &k_law, beta, &seeds).unwrap();
        let b2 = pop_dynamics_step(&b, &k_law, beta, &seeds).unwrap();
        prop_assert!(dominates_sorted(&a2, &b2, 1e-9), "one step broke domination");
    }

    #[test]
    fn deterministic_offspring_reduces_to_scalar_recursion(beta in 0.5f64..1.3) {
        let law = OffspringLaw::regular(3);
        let k_law = law.size_biased_degree().unwrap();
        let seeds = SeedTree::new(11);
        let theta = beta.tanh();
        let f = |h: f64| (theta * h.tanh()).atanh();
        let mut pool = ParticlePool::plus(100, 3);
        let mut scalar = f64::INFINITY;
        for _ in 0..6 {
            pool = pop_dynamics_step(&pool, &k_law, beta, &seeds).unwrap();
            scalar = f(scalar) + f(scalar);
            let (lo, hi) = (pool.quantile(0.0), pool.quantile(1.0));
            prop_assert_eq!(lo, scalar);
            prop_assert_eq!(hi, scalar);
        }
    }

    #[test]
    fn killing_radius_monotone(n in 3usize..25, seed in any::<u64>(), l in 0.5f64..5.0) {
        let g = sparse_graph(n, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        let start = rng.random_range(0..n);
        let free = occupation_weights(&g, start, l, None).unwrap();
        let mut prev = occupation_weights(&g, start, l, Some(1)).unwrap();
        for r in 2..=4 {
            let next = occupation_weights(&g, start, l, Some(r)).unwrap();
            for j in 0..n {
                prop_assert!(prev[j] <= next[j] + 1e-12, "killing not monotone at {j}");
                prop_assert!(next[j] <= free[j] + 1e-12, "killed above free at {j}");
            }
            prev = next;
        }
    }

    #[test]
    fn capacity_solution_is_feasible(seed in any::<u64>(), depth in 2usize..5, theta in 0.3f64..0.6) {
        let law = OffspringLaw::single_type(&[(3, 0.5), (4, 0.5)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = umgw_sample(&law, depth, &mut rng).unwrap();
        let sol = capa3_solve(&tree, theta, 1e-3).unwrap();
        prop_assert!(sol.flow.conservation_violation() <= 1e-9);
        prop_assert!(sol.flow.ray_energy_max() <= 1.0 + 1e-9);
        prop_assert!(sol.gap <= 1e-3);
        prop_assert!((sol.flow.strength() - sol.value).abs() <= 1e-12);
    }

    #[test]
    fn entropy_rate_negative_on_interior_profiles(
        weights in prop::collection::vec(0.05f64..1.0, 3),
        fracs in prop::collection::vec(0.02f64..0.98, 3),
    ) {
        let total: f64 = weights.iter().sum();
        let pairs: Vec<(usize, f64)> = weights
            .iter()
            .enumerate()
            .map(|(i, w)| (3 + i, w / total))
            .collect();
        let law = OffspringLaw::single_type(&pairs).unwrap();
        let alpha: Vec<f64> = pairs.iter().map(|&(_, p)| p).collect();
        let delta: Vec<Vec<f64>> = vec![alpha.iter().zip(&fracs).map(|(a, f)| a * f).collect()];
        let (n_term, q_term) = entropy_n_q(&law, &delta).unwrap();
        let bound = entropy_rate_bound(&law, &delta).unwrap();
        prop_assert!(bound < 0.0, "bound {} not negative", bound);
        prop_assert!(n_term + q_term <= bound + 1e-12, "rate above concavity bound");
        prop_assert!(n_term + q_term < 0.0, "rate {} not negative", n_term + q_term);
    }
}
