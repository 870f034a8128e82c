//! Network structure, second-order uncertainty over conditional probability
//! vectors, and the moment triple (means, squares, cross products) that the
//! propagation engine consumes.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on probability-vector and weight sums.
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::EmptyId);
        }
        Ok(NodeId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A distribution over a probability vector.
#[derive(Debug, Clone, PartialEq)]
pub enum UncertainDistribution {
    /// Conventional parameters, all > 0.
    Dirichlet {
        alpha: Vec<f64>,
    },
    /// Finite mixture of probability vectors with positive weights summing to one.
    DiscreteSupport {
        points: Vec<(Vec<f64>, f64)>,
    },
    PointMass {
        p: Vec<f64>,
    },
}

impl UncertainDistribution {
    pub fn dirichlet(alpha: impl Into<Vec<f64>>) -> Self {
        Self::Dirichlet {
            alpha: alpha.into(),
        }
    }

    pub fn beta(alpha: f64, beta: f64) -> Self {
        Self::Dirichlet {
            alpha: vec![alpha, beta],
        }
    }

    pub fn discrete(points: impl IntoIterator<Item = (Vec<f64>, f64)>) -> Self {
        Self::DiscreteSupport {
            points: points.into_iter().collect(),
        }
    }

    pub fn point(p: impl Into<Vec<f64>>) -> Self {
        Self::PointMass { p: p.into() }
    }

    /// A `k`-point support with the same first and second moments as
    /// `Dirichlet(alpha)`.
    ///
    /// Point `j` is `m + t (e_j - m)` with weight `m_j`, where `m` is the
    /// Dirichlet mean and `t = 1/sqrt(alpha0 + 1)`; its covariance is
    /// `t^2 (diag(m) - m m^T)`, which is the Dirichlet covariance.
    pub fn moment_matched_discrete(alpha: &[f64]) -> Self {
        let total: f64 = alpha.iter().sum();
        let mean: Vec<f64> = alpha.iter().map(|a| a / total).collect();
        let t = 1.0 / (total + 1.0).sqrt();
        let points = (0..alpha.len())
            .map(|j| {
                let p = mean
                    .iter()
                    .enumerate()
                    .map(|(i, &m)| (1.0 - t) * m + if i == j { t } else { 0.0 })
                    .collect();
                (p, mean[j])
            })
            .collect();
        Self::DiscreteSupport { points }
    }

    /// Length of the probability vector this distribution ranges over.
    pub fn dim(&self) -> usize {
        match self {
            Self::Dirichlet { alpha } => alpha.len(),
            Self::DiscreteSupport { points } => points.first().map_or(0, |(p, _)| p.len()),
            Self::PointMass { p } => p.len(),
        }
    }

    /// Checks the distribution's own invariants; the error string names the
    /// first violation.
    pub fn check(&self) -> std::result::Result<(), String> {
        match self {
            Self::Dirichlet { alpha } => {
                if alpha.is_empty() {
                    return Err("empty alpha".into());
                }
                if let Some(a) = alpha.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
                    return Err(format!("alpha entry {a} is not a positive finite number"));
                }
                Ok(())
            }
            Self::DiscreteSupport { points } => {
                if points.is_empty() {
                    return Err("empty support".into());
                }
                let dim = points[0].0.len();
                let mut total = 0.0;
                for (p, w) in points {
                    if p.len() != dim {
                        return Err("support points differ in length".into());
                    }
                    check_probability_vector(p)?;
                    if !(w.is_finite() && *w > 0.0) {
                        return Err(format!("weight {w} is not positive"));
                    }
                    total += w;
                }
                if (total - 1.0).abs() > SUM_TOLERANCE {
                    return Err(format!("weights sum to {total}, not 1"));
                }
                Ok(())
            }
            Self::PointMass { p } => check_probability_vector(p),
        }
    }

    pub fn is_beta(&self) -> bool {
        matches!(self, Self::Dirichlet { alpha } if alpha.len() == 2)
    }
}

fn check_probability_vector(p: &[f64]) -> std::result::Result<(), String> {
    if p.is_empty() {
        return Err("empty probability vector".into());
    }
    if let Some(x) = p.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(format!("probability entry {x} is negative or not finite"));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > SUM_TOLERANCE {
        return Err(format!("probabilities sum to {total}, not 1"));
    }
    Ok(())
}

/// Means `E(p_i)` and second moments `E(p_i p_j)` of one uncertain
/// probability vector. The diagonal of `second` holds `E(p_i^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    pub mean: Vec<f64>,
    pub second: Vec<Vec<f64>>,
}

impl MomentSet {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn variance(&self, i: usize) -> f64 {
        self.second[i][i] - self.mean[i] * self.mean[i]
    }

    /// Verifies the structural identities of a moment set at tolerance `tol`.
    pub fn check_invariants(&self, tol: f64) -> std::result::Result<(), String> {
        let k = self.dim();
        if self.second.len() != k || self.second.iter().any(|r| r.len() != k) {
            return Err("second-moment matrix has the wrong shape".into());
        }
        let total: f64 = self.mean.iter().sum();
        if (total - 1.0).abs() > tol {
            return Err(format!("means sum to {total}"));
        }
        for i in 0..k {
            let e = self.mean[i];
            if e < -tol {
                return Err(format!("mean {i} is negative"));
            }
            let row: f64 = self.second[i].iter().sum();
            if (row - e).abs() > tol {
                return Err(format!(
                    "row {i} of second moments sums to {row}, mean is {e}"
                ));
            }
            let s = self.second[i][i];
            if s < e * e - tol || s > e + tol {
                return Err(format!("E(p_{i}^2) = {s} outside [{}, {e}]", e * e));
            }
            for j in 0..k {
                if self.second[i][j] < -tol {
                    return Err(format!("negative cross moment at ({i},{j})"));
                }
                if (self.second[i][j] - self.second[j][i]).abs() > tol {
                    return Err(format!("second moments not symmetric at ({i},{j})"));
                }
            }
        }
        Ok(())
    }
}

/// First and second moments of a (valid) uncertain distribution.
pub fn moments_of(dist: &UncertainDistribution) -> MomentSet {
    match dist {
        UncertainDistribution::Dirichlet { alpha } => {
            let total: f64 = alpha.iter().sum();
            let scale = total * (total + 1.0);
            let mean = alpha.iter().map(|a| a / total).collect();
            let second = alpha
                .iter()
                .enumerate()
                .map(|(i, &ai)| {
                    alpha
                        .iter()
                        .enumerate()
                        .map(|(j, &aj)| {
                            if i == j {
                                ai * (ai + 1.0) / scale
                            } else {
                                ai * aj / scale
                            }
                        })
                        .collect()
                })
                .collect();
            MomentSet { mean, second }
        }
        UncertainDistribution::DiscreteSupport { points } => {
            let k = dist.dim();
            let mut mean = vec![0.0; k];
            let mut second = vec![vec![0.0; k]; k];
            for (p, w) in points {
                for i in 0..k {
                    mean[i] += w * p[i];
                    for j in 0..k {
                        second[i][j] += w * p[i] * p[j];
                    }
                }
            }
            MomentSet { mean, second }
        }
        UncertainDistribution::PointMass { p } => MomentSet {
            mean: p.clone(),
            second: p
                .iter()
                .map(|&pi| p.iter().map(|&pj| pi * pj).collect())
                .collect(),
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub id: NodeId,
    pub alternatives: Vec<String>,
    pub parent: Option<NodeId>,
    /// One distribution per parent alternative, in the parent's order.
    pub rows: Vec<UncertainDistribution>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NetworkSpec {
    pub nodes: Vec<NodeSpec>,
}

/// A node after validation: indices resolved, row moments precomputed.
#[derive(Debug, Clone)]
pub struct Node {
    pub id: NodeId,
    pub alternatives: Vec<String>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub rows: Vec<UncertainDistribution>,
    pub moments: Vec<MomentSet>,
}

impl Node {
    pub fn arity(&self) -> usize {
        self.alternatives.len()
    }

    pub fn alternative_index(&self, label: &str) -> Option<usize> {
        self.alternatives.iter().position(|a| a == label)
    }
}

/// A rooted tree that satisfies every structural and distributional invariant.
#[derive(Debug, Clone)]
pub struct ValidatedNetwork {
    nodes: Vec<Node>,
    root: usize,
    preorder: Vec<usize>,
    index: HashMap<NodeId, usize>,
}

impl ValidatedNetwork {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, idx: usize) -> &Node {
        &self.nodes[idx]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    /// Node indices with every parent before its children.
    pub fn preorder(&self) -> &[usize] {
        &self.preorder
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownNode(id.to_string()))
    }

    /// Depth of the deepest node; the root has depth 0.
    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        for &v in &self.preorder {
            if let Some(p) = self.nodes[v].parent {
                depth[v] = depth[p] + 1;
            }
        }
        depth.into_iter().max().unwrap_or(0)
    }

    pub fn to_spec(&self) -> NetworkSpec {
        NetworkSpec {
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeSpec {
                    id: n.id.clone(),
                    alternatives: n.alternatives.clone(),
                    parent: n.parent.map(|p| self.nodes[p].id.clone()),
                    rows: n.rows.clone(),
                })
                .collect(),
        }
    }
}

impl std::borrow::Borrow<str> for NodeId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

pub fn validate_network(spec: &NetworkSpec) -> Result<ValidatedNetwork> {
    let mut index = HashMap::new();
    for (i, n) in spec.nodes.iter().enumerate() {
        if n.id.as_str().is_empty() {
            return Err(Error::EmptyId);
        }
        if index.insert(n.id.clone(), i).is_some() {
            return Err(Error::DuplicateNode(n.id.to_string()));
        }
        if n.alternatives.len() < 2 {
            return Err(Error::DimensionMismatch {
                node: n.id.to_string(),
                detail: format!(
                    "needs at least 2 alternatives, has {}",
                    n.alternatives.len()
                ),
            });
        }
        for (a, label) in n.alternatives.iter().enumerate() {
            if n.alternatives[..a].contains(label) {
                return Err(Error::DimensionMismatch {
                    node: n.id.to_string(),
                    detail: format!("alternative `{label}` listed twice"),
                });
            }
        }
    }

    let mut parents = Vec::with_capacity(spec.nodes.len());
    for n in &spec.nodes {
        let parent = match &n.parent {
            Some(p) => Some(
                *index
                    .get(p)
                    .ok_or_else(|| Error::UnknownNode(p.to_string()))?,
            ),
            None => None,
        };
        parents.push(parent);
    }

    let roots: Vec<usize> = (0..spec.nodes.len())
        .filter(|&i| parents[i].is_none())
        .collect();
    if roots.len() > 1 {
        return Err(Error::MultipleRoots(
            roots
                .iter()
                .map(|&i| spec.nodes[i].id.to_string())
                .collect(),
        ));
    }
    let Some(&root) = roots.first() else {
        return match spec.nodes.first() {
            Some(n) => Err(Error::CycleDetected(n.id.to_string())),
            None => Err(Error::PreconditionViolated("network has no nodes".into())),
        };
    };

    let mut children = vec![Vec::new(); spec.nodes.len()];
    for (i, p) in parents.iter().enumerate() {
        if let Some(p) = p {
            children[*p].push(i);
        }
    }
    let mut preorder = Vec::with_capacity(spec.nodes.len());
    let mut stack = vec![root];
    while let Some(v) = stack.pop() {
        preorder.push(v);
        stack.extend(children[v].iter().rev());
    }
    if preorder.len() != spec.nodes.len() {
        // Anything unreachable from the root sits on a parent cycle.
        let mut seen = vec![false; spec.nodes.len()];
        for &v in &preorder {
            seen[v] = true;
        }
        let stray = seen.iter().position(|s| !s).unwrap();
        return Err(Error::CycleDetected(spec.nodes[stray].id.to_string()));
    }

    let mut nodes = Vec::with_capacity(spec.nodes.len());
    for (i, n) in spec.nodes.iter().enumerate() {
        let expected_rows = parents[i].map_or(1, |p| spec.nodes[p].alternatives.len());
        if n.rows.len() != expected_rows {
            return Err(Error::DimensionMismatch {
                node: n.id.to_string(),
                detail: format!("expected {expected_rows} rows, found {}", n.rows.len()),
            });
        }
        for (r, row) in n.rows.iter().enumerate() {
            row.check().map_err(|detail| Error::BadDistribution {
                node: n.id.to_string(),
                detail: format!("row {r}: {detail}"),
            })?;
            if row.dim() != n.alternatives.len() {
                return Err(Error::DimensionMismatch {
                    node: n.id.to_string(),
                    detail: format!(
                        "row {r} has dimension {}, node has {} alternatives",
                        row.dim(),
                        n.alternatives.len()
                    ),
                });
            }
        }
        nodes.push(Node {
            id: n.id.clone(),
            alternatives: n.alternatives.clone(),
            parent: parents[i],
            children: children[i].clone(),
            rows: n.rows.clone(),
            moments: n.rows.iter().map(moments_of).collect(),
        });
    }

    Ok(ValidatedNetwork {
        nodes,
        root,
        preorder,
        index,
    })
}
