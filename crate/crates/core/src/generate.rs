//! Random network families for property suites and `boundcheck --gen`.

use rand::Rng;

use crate::model::{
    validate_network, NetworkSpec, NodeId, NodeSpec, UncertainDistribution, ValidatedNetwork,
};
use crate::oracle::sample_distribution;
use crate::propagation::Evidence;

/// Random parent vector for `n` nodes; node 0 is the root and no node is
/// deeper than `max_depth`.
pub fn random_shape<R: Rng>(rng: &mut R, n: usize, max_depth: usize) -> Vec<Option<usize>> {
    let mut parents = vec![None];
    let mut depth = vec![0usize];
    for _ in 1..n {
        let eligible: Vec<usize> = (0..parents.len())
            .filter(|&v| depth[v] < max_depth)
            .collect();
        let p = eligible[rng.random_range(0..eligible.len())];
        parents.push(Some(p));
        depth.push(depth[p] + 1);
    }
    parents
}

/// Assembles and validates a network. `row(node, parent_alternative, arity)`
/// supplies each conditional distribution.
pub fn build_network(
    parents: &[Option<usize>],
    arities: &[usize],
    mut row: impl FnMut(usize, usize, usize) -> UncertainDistribution,
) -> ValidatedNetwork {
    let nodes = parents
        .iter()
        .enumerate()
        .map(|(v, parent)| {
            let id = format!("N{v}");
            let rows = match parent {
                Some(p) => (0..arities[*p]).map(|r| row(v, r, arities[v])).collect(),
                None => vec![row(v, 0, arities[v])],
            };
            NodeSpec {
                alternatives: (1..=arities[v]).map(|k| format!("n{v}_{k}")).collect(),
                id: NodeId::new(id).unwrap(),
                parent: parent.map(|p| NodeId::new(format!("N{p}")).unwrap()),
                rows,
            }
        })
        .collect();
    validate_network(&NetworkSpec { nodes }).expect("generated network is valid")
}

/// Uniformly random point of the simplex.
pub fn random_simplex<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    sample_distribution(&UncertainDistribution::dirichlet(vec![1.0; k]), rng)
}

/// Trees with discrete-support rows whose total number of support
/// combinations stays at or below `budget`.
#[derive(Debug, Clone, Copy)]
pub struct DiscreteTreeConfig {
    pub max_nodes: usize,
    pub max_alternatives: usize,
    pub max_points: usize,
    pub budget: u64,
}

impl Default for DiscreteTreeConfig {
    fn default() -> Self {
        Self {
            max_nodes: 6,
            max_alternatives: 3,
            max_points: 3,
            budget: 4096,
        }
    }
}

pub fn random_discrete_tree<R: Rng>(rng: &mut R, cfg: DiscreteTreeConfig) -> ValidatedNetwork {
    let n = rng.random_range(1..=cfg.max_nodes);
    let parents = random_shape(rng, n, n);
    let arities: Vec<usize> = (0..n)
        .map(|_| rng.random_range(2..=cfg.max_alternatives))
        .collect();
    let mut used: u64 = 1;
    build_network(&parents, &arities, |_, _, k| {
        let mut points = rng.random_range(1..=cfg.max_points);
        while points > 1 && used * points as u64 > cfg.budget {
            points -= 1;
        }
        used *= points as u64;
        if points == 1 {
            return UncertainDistribution::point(random_simplex(rng, k));
        }
        let raw: Vec<f64> = (0..points).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        UncertainDistribution::discrete(
            raw.into_iter().map(|w| (random_simplex(rng, k), w / total)),
        )
    })
}

/// Observes between `min` and `max` distinct random nodes at random alternatives.
pub fn random_evidence<R: Rng>(
    rng: &mut R,
    net: &ValidatedNetwork,
    min: usize,
    max: usize,
) -> Evidence {
    let count = rng.random_range(min..=max.min(net.len()));
    let mut pool: Vec<usize> = (0..net.len()).collect();
    let mut ev = Evidence::none();
    for _ in 0..count {
        let v = pool.swap_remove(rng.random_range(0..pool.len()));
        let node = net.node(v);
        ev.assignments
            .insert(node.id.clone(), rng.random_range(0..node.arity()));
    }
    ev
}

/// Log-uniform draw from `[lo, hi]`.
pub fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..=hi.ln())).exp()
}

/// Beta parameters with both shapes log-uniform in `[lo, hi]` and shape sum
/// at least `min_sum`.
pub fn random_beta<R: Rng>(rng: &mut R, lo: f64, hi: f64, min_sum: f64) -> UncertainDistribution {
    loop {
        let a = log_uniform(rng, lo, hi);
        let b = log_uniform(rng, lo, hi);
        if a + b >= min_sum {
            return UncertainDistribution::beta(a, b);
        }
    }
}

/// Binary tree-structured network with beta rows, at most `max_nodes` nodes
/// and depth at most `max_depth`.
pub fn random_beta_tree<R: Rng>(
    rng: &mut R,
    max_nodes: usize,
    max_depth: usize,
) -> ValidatedNetwork {
    let n = rng.random_range(2..=max_nodes.max(2));
    let parents = random_shape(rng, n, max_depth);
    build_network(&parents, &vec![2; n], |_, _, _| {
        random_beta(rng, 0.5, 50.0, 2.0)
    })
}

/// Replaces each Dirichlet row by `Dirichlet(scale * alpha)`, keeping means.
pub fn scale_confidence(net: &ValidatedNetwork, scale: f64) -> ValidatedNetwork {
    map_rows(net, |d| match d {
        UncertainDistribution::Dirichlet { alpha } => {
            UncertainDistribution::dirichlet(alpha.iter().map(|a| a * scale).collect::<Vec<_>>())
        }
        other => other.clone(),
    })
}

/// Replaces each Dirichlet row by its moment-matched finite support.
pub fn discretize(net: &ValidatedNetwork) -> ValidatedNetwork {
    map_rows(net, |d| match d {
        UncertainDistribution::Dirichlet { alpha } => {
            UncertainDistribution::moment_matched_discrete(alpha)
        }
        other => other.clone(),
    })
}

fn map_rows(
    net: &ValidatedNetwork,
    f: impl Fn(&UncertainDistribution) -> UncertainDistribution,
) -> ValidatedNetwork {
    let mut spec = net.to_spec();
    for node in &mut spec.nodes {
        node.rows = node.rows.iter().map(&f).collect();
    }
    validate_network(&spec).expect("row mapping preserves validity")
}
