//! Closed-form moments and variance bounds for binary networks with beta
//! distributed conditional probabilities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generate::{build_network, random_beta, random_shape};
use crate::model::{moments_of, MomentSet, UncertainDistribution, ValidatedNetwork};
use crate::propagation::{posterior, Evidence};

/// Slack below this counts as a failed bound.
pub const BOUND_TOLERANCE: f64 = 1e-12;

/// Beta distribution in exponent form: density proportional to
/// `p^a (1-p)^b`, so the conventional shapes are `(a + 1, b + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaParams {
    a: f64,
    b: f64,
}

impl BetaParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > -1.0 && b > -1.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::DomainError(format!(
                "beta exponents must exceed -1, got ({a}, {b})"
            )));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn alpha(&self) -> [f64; 2] {
        [self.a + 1.0, self.b + 1.0]
    }

    pub fn to_distribution(&self) -> UncertainDistribution {
        UncertainDistribution::dirichlet(self.alpha())
    }
}

/// `E(p)`, `E(p^2)` and `E(p(1-p))` of a beta variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaMoments {
    pub mean: f64,
    pub second: f64,
    pub cross: f64,
}

impl BetaMoments {
    pub fn variance(&self) -> f64 {
        self.second - self.mean * self.mean
    }
}

pub fn beta_moments(p: BetaParams) -> BetaMoments {
    let (a, b) = (p.a, p.b);
    let mean = (a + 1.0) / (a + b + 2.0);
    BetaMoments {
        mean,
        second: (a + 2.0) / (a + b + 3.0) * mean,
        cross: (b + 1.0) / (a + b + 3.0) * mean,
    }
}

/// Variance of `p(b_1)` for a two-node chain `A -> B` with binary nodes, from
/// the prior mean/variance of `p(a_1)` and of the two columns `p(b_1|a_j)`.
pub fn two_node_variance(e: f64, v: f64, e1: f64, v1: f64, e2: f64, v2: f64) -> f64 {
    v * (v1 + v2 + (e1 - e2).powi(2)) + v2 * (1.0 - e).powi(2) + v1 * e * e
}

/// `S <= (E + E^2)/2` for the first alternative of a binary moment set.
pub fn check_moment_condition(m: &MomentSet) -> Result<bool> {
    if m.dim() != 2 {
        return Err(Error::PreconditionViolated(format!(
            "moment condition is defined for two alternatives, got {}",
            m.dim()
        )));
    }
    let (e, s) = (m.mean[0], m.second[0][0]);
    Ok(s <= (e + e * e) / 2.0 + BOUND_TOLERANCE)
}

/// Largest mean a beta variable with variance `v` can have.
pub fn beta_mean_bound(v: f64) -> Result<f64> {
    if !(0.0..=1.0 / 12.0 + BOUND_TOLERANCE).contains(&v) {
        return Err(Error::DomainError(format!(
            "beta variance {v} outside [0, 1/12]"
        )));
    }
    Ok((1.0 + (1.0 - 12.0 * v).max(0.0).sqrt()) / 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeBound {
    pub node: String,
    pub parent: String,
    /// Prior variance of the node's first alternative.
    pub variance: f64,
    /// Largest variance among the node's conditional columns.
    pub bound: f64,
    pub slack: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub nodes: Vec<NodeBound>,
}

impl BoundReport {
    pub fn pass(&self) -> bool {
        self.nodes.iter().all(|n| n.pass)
    }

    pub fn min_slack(&self) -> Option<f64> {
        self.nodes.iter().map(|n| n.slack).reduce(f64::min)
    }
}

/// Compares every non-root node's prior variance with the largest variance
/// among its conditional columns. Requires a binary network with beta rows.
pub fn check_column_bound(net: &ValidatedNetwork) -> Result<BoundReport> {
    for node in net.nodes() {
        if node.arity() != 2 {
            return Err(Error::PreconditionViolated(format!(
                "node `{}` has {} alternatives; the bound needs 2",
                node.id,
                node.arity()
            )));
        }
        if !node.rows.iter().all(UncertainDistribution::is_beta) {
            return Err(Error::PreconditionViolated(format!(
                "node `{}` has a row that is not a beta distribution",
                node.id
            )));
        }
    }
    let report = posterior(net, &Evidence::none())?;
    let nodes = net
        .nodes()
        .iter()
        .zip(&report.nodes)
        .filter_map(|(node, post)| {
            let parent = node.parent?;
            let variance = post.variance[0];
            let bound = node
                .moments
                .iter()
                .map(|m| m.variance(0))
                .fold(0.0, f64::max);
            let slack = bound - variance;
            Some(NodeBound {
                node: node.id.to_string(),
                parent: net.node(parent).id.to_string(),
                variance,
                bound,
                slack,
                pass: slack >= -BOUND_TOLERANCE,
            })
        })
        .collect();
    Ok(BoundReport { nodes })
}

/// A case where a node's variance exceeded the largest variance among its
/// conditional columns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Excess {
    pub trial: usize,
    pub node: String,
    pub alternative: usize,
    pub variance: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplorationLog {
    pub trials: usize,
    /// Trees with three-alternative Dirichlet rows, prior variances.
    pub multi_alternative: Vec<Excess>,
    /// Binary beta trees with an observed leaf, posterior variances of the
    /// leaf's ancestors.
    pub upward_from_evidence: Vec<Excess>,
}

/// Randomised search for cases outside the proven setting where the
/// column-variance bound fails. Findings are data, not assertions.
pub fn explore_bounds(seed: u64, trials: usize) -> ExplorationLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log = ExplorationLog {
        trials,
        multi_alternative: Vec::new(),
        upward_from_evidence: Vec::new(),
    };
    for trial in 0..trials {
        let n = rng.random_range(2..=6);
        let parents = random_shape(&mut rng, n, 4);
        let net = build_network(&parents, &vec![3; n], |_, _, _| {
            UncertainDistribution::dirichlet(
                (0..3)
                    .map(|_| crate::generate::log_uniform(&mut rng, 0.5, 50.0))
                    .collect::<Vec<_>>(),
            )
        });
        if let Ok(report) = posterior(&net, &Evidence::none()) {
            for (node, post) in net.nodes().iter().zip(&report.nodes) {
                if node.parent.is_none() {
                    continue;
                }
                for i in 0..3 {
                    let bound = node
                        .moments
                        .iter()
                        .map(|m| m.variance(i))
                        .fold(0.0, f64::max);
                    if post.variance[i] > bound + BOUND_TOLERANCE {
                        log.multi_alternative.push(Excess {
                            trial,
                            node: node.id.to_string(),
                            alternative: i,
                            variance: post.variance[i],
                            bound,
                        });
                    }
                }
            }
        }

        let n = rng.random_range(2..=6);
        let parents = random_shape(&mut rng, n, 4);
        let net = build_network(&parents, &vec![2; n], |_, _, _| {
            random_beta(&mut rng, 0.5, 50.0, 2.0)
        });
        let leaves: Vec<usize> = (0..n)
            .filter(|&v| net.node(v).children.is_empty())
            .collect();
        let leaf = leaves[rng.random_range(0..leaves.len())];
        let ev = Evidence::none().with(net.node(leaf).id.as_str(), rng.random_range(0..2));
        if let Ok(report) = posterior(&net, &ev) {
            let mut v = net.node(leaf).parent;
            while let Some(a) = v {
                let node = net.node(a);
                // The root has no columns to compare against beyond its own row.
                let bound = node
                    .moments
                    .iter()
                    .map(|m| m.variance(0))
                    .fold(0.0, f64::max);
                let var = report.nodes[a].variance[0];
                if var > bound + BOUND_TOLERANCE {
                    log.upward_from_evidence.push(Excess {
                        trial,
                        node: node.id.to_string(),
                        alternative: 0,
                        variance: var,
                        bound,
                    });
                }
                v = node.parent;
            }
        }
    }
    log
}

/// Moments of a beta variable as a binary [`MomentSet`].
pub fn beta_moment_set(p: BetaParams) -> MomentSet {
    moments_of(&p.to_distribution())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_network, NetworkSpec, NodeId, NodeSpec};

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn beta_moment_examples() {
        let m = beta_moments(BetaParams::new(0.0, 0.0).unwrap());
        assert!(close(m.mean, 0.5) && close(m.second, 1.0 / 3.0) && close(m.cross, 1.0 / 6.0));
        let m = beta_moments(BetaParams::new(2.0, 0.0).unwrap());
        assert!(close(m.mean, 0.75) && close(m.second, 0.6) && close(m.cross, 0.15));
        let m = beta_moments(BetaParams::new(8.0, 2.0).unwrap());
        assert!(close(m.mean, 0.75));
        assert!(close(m.second, 10.0 / 13.0 * 0.75));
        assert!(close(m.cross, 3.0 / 13.0 * 0.75));
        assert!((m.cross - (m.mean - m.second)).abs() < 1e-14);
    }

    #[test]
    fn beta_params_domain() {
        assert!(BetaParams::new(-0.5, 0.2).is_ok());
        assert!(BetaParams::new(-1.0, 0.2).is_err());
        assert!(BetaParams::new(0.0, f64::NAN).is_err());
    }

    #[test]
    fn two_node_examples() {
        assert_eq!(two_node_variance(0.3, 0.0, 0.4, 0.0, 0.9, 0.0), 0.0);
        assert!(close(
            two_node_variance(1.0, 0.0, 0.7, 0.02, 0.1, 0.05),
            0.02
        ));
        let third = 1.0 / 12.0;
        assert!(close(
            two_node_variance(0.5, third, 0.5, third, 0.5, third),
            1.0 / 18.0
        ));
        // discrete two-point root feeding point-mass columns
        assert!(close(
            two_node_variance(0.4, 0.04, 0.9, 0.0, 0.2, 0.0),
            0.0196
        ));
    }

    #[test]
    fn moment_condition_examples() {
        let m = |e: f64, s: f64| MomentSet {
            mean: vec![e, 1.0 - e],
            second: vec![vec![s, e - s], vec![e - s, 1.0 - 2.0 * e + s]],
        };
        assert!(check_moment_condition(&m(0.5, 1.0 / 3.0)).unwrap());
        assert!(!check_moment_condition(&m(0.5, 0.4)).unwrap());
        assert!(check_moment_condition(&m(0.0, 0.0)).unwrap());
        let three = moments_of(&UncertainDistribution::dirichlet([1.0, 1.0, 1.0]));
        assert!(check_moment_condition(&three).is_err());
    }

    #[test]
    fn mean_bound_examples() {
        assert!(close(beta_mean_bound(0.0).unwrap(), 1.0));
        assert!(close(beta_mean_bound(1.0 / 12.0).unwrap(), 0.5));
        assert!(close(beta_mean_bound(1.0 / 16.0).unwrap(), 0.75));
        assert!(matches!(beta_mean_bound(0.09), Err(Error::DomainError(_))));
    }

    fn binary(id: &str, parent: Option<&str>, rows: Vec<UncertainDistribution>) -> NodeSpec {
        NodeSpec {
            id: NodeId::new(id).unwrap(),
            alternatives: vec![format!("{id}1"), format!("{id}2")],
            parent: parent.map(|p| NodeId::new(p).unwrap()),
            rows,
        }
    }

    #[test]
    fn uniform_pair_passes_with_known_slack() {
        let u = UncertainDistribution::beta(1.0, 1.0);
        let net = validate_network(&NetworkSpec {
            nodes: vec![
                binary("A", None, vec![u.clone()]),
                binary("B", Some("A"), vec![u.clone(), u]),
            ],
        })
        .unwrap();
        let rep = check_column_bound(&net).unwrap();
        assert_eq!(rep.nodes.len(), 1);
        let b = &rep.nodes[0];
        assert!(close(b.variance, 1.0 / 18.0));
        assert!(close(b.bound, 1.0 / 12.0));
        assert!(close(b.slack, 1.0 / 36.0));
        assert!(rep.pass());
    }

    #[test]
    fn five_chain_passes() {
        let col = BetaParams::new(8.0, 2.0).unwrap().to_distribution();
        let mut nodes = vec![binary(
            "N0",
            None,
            vec![BetaParams::new(0.0, 0.0).unwrap().to_distribution()],
        )];
        for i in 1..5 {
            let parent = format!("N{}", i - 1);
            nodes.push(binary(
                &format!("N{i}"),
                Some(&parent),
                vec![col.clone(), col.clone()],
            ));
        }
        let rep = check_column_bound(&validate_network(&NetworkSpec { nodes }).unwrap()).unwrap();
        assert_eq!(rep.nodes.len(), 4);
        assert!(rep.pass(), "{rep:?}");
    }

    #[test]
    fn non_beta_rejected() {
        let p = UncertainDistribution::point([0.5, 0.5]);
        let net = validate_network(&NetworkSpec {
            nodes: vec![
                binary("A", None, vec![p.clone()]),
                binary("B", Some("A"), vec![p.clone(), p]),
            ],
        })
        .unwrap();
        assert!(matches!(
            check_column_bound(&net),
            Err(Error::PreconditionViolated(_))
        ));
    }

    #[test]
    fn exploration_runs() {
        let log = explore_bounds(3, 20);
        assert_eq!(log.trials, 20);
    }
}
