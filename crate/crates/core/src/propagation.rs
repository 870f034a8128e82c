//! Message passing that carries means together with full second-moment
//! matrices through a tree, so every inferred probability comes with the
//! variance induced by the uncertainty in the stored conditional
//! probabilities.
//!
//! Two message kinds flow along each edge:
//!
//! * a [`ChildMessage`] travels upward and holds, for each alternative of the
//!   receiving node, the mean and second moments of the likelihood of the
//!   evidence in one child's subtree;
//! * a [`ParentMessage`] travels downward and holds the mean and second
//!   moments of the receiving node's distribution given every piece of
//!   evidence not below it.
//!
//! Instantiated nodes block both flows. Uncertainty beyond an instantiated
//! node does not influence anything on the other side of it, so the upward
//! message from an instantiated child is just the moments of the observed
//! entry of its conditional probability columns, and the downward message
//! out of an instantiated parent is the moment set of the matching column.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{MomentSet, NodeId, ValidatedNetwork};

/// Variances down to this value are clamped to zero instead of rejected.
pub const NEGATIVE_VARIANCE_LIMIT: f64 = -1e-9;

/// Observed alternatives, keyed by node. An empty map is the prior case.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Evidence {
    pub assignments: BTreeMap<NodeId, usize>,
}

impl Evidence {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn with(mut self, node: &str, alternative: usize) -> Self {
        self.assignments
            .insert(NodeId::new(node).expect("non-empty node id"), alternative);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    /// Observation by label, e.g. `("B", "b1")`.
    pub fn from_labels<'a>(
        net: &ValidatedNetwork,
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self> {
        let mut ev = Evidence::none();
        for (node, label) in pairs {
            let idx = net.index_of(node)?;
            let alt = net.node(idx).alternative_index(label).ok_or_else(|| {
                Error::UnknownAlternative {
                    node: node.to_string(),
                    alternative: label.to_string(),
                }
            })?;
            ev.assignments.insert(net.node(idx).id.clone(), alt);
        }
        Ok(ev)
    }

    /// Per-node observed alternative, indexed like `net.nodes()`.
    pub fn resolve(&self, net: &ValidatedNetwork) -> Result<Vec<Option<usize>>> {
        let mut observed = vec![None; net.len()];
        for (id, &alt) in &self.assignments {
            let idx = net.index_of(id.as_str())?;
            if alt >= net.node(idx).arity() {
                return Err(Error::UnknownAlternative {
                    node: id.to_string(),
                    alternative: alt.to_string(),
                });
            }
            observed[idx] = Some(alt);
        }
        Ok(observed)
    }
}

/// Upward message: `mean[i] = P(X|f_i)`, `second[i][j] = E(p(X|f_i) p(X|f_j))`
/// for the evidence `X` in one subtree.
#[derive(Debug, Clone, PartialEq)]
pub struct ChildMessage {
    pub mean: Vec<f64>,
    pub second: Vec<Vec<f64>>,
}

impl ChildMessage {
    /// The message of a subtree without evidence.
    pub fn unit(dim: usize) -> Self {
        Self {
            mean: vec![1.0; dim],
            second: vec![vec![1.0; dim]; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Downward message: `mean[i] = P(f_i|Y)`, `second[i][j] = E(p(f_i|Y) p(f_j|Y))`
/// for the evidence `Y` outside the receiving node's subtree.
#[derive(Debug, Clone, PartialEq)]
pub struct ParentMessage {
    pub mean: Vec<f64>,
    pub second: Vec<Vec<f64>>,
}

impl ParentMessage {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

impl From<&MomentSet> for ParentMessage {
    fn from(m: &MomentSet) -> Self {
        Self {
            mean: m.mean.clone(),
            second: m.second.clone(),
        }
    }
}

/// Posterior mean, second moment and variance of each alternative of a node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodePosterior {
    pub id: NodeId,
    pub mean: Vec<f64>,
    pub second: Vec<f64>,
    pub variance: Vec<f64>,
    /// Set when a slightly negative variance was clamped to zero.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorReport {
    pub nodes: Vec<NodePosterior>,
}

impl PosteriorReport {
    pub fn get(&self, id: &str) -> Option<&NodePosterior> {
        self.nodes.iter().find(|n| n.id.as_str() == id)
    }

    pub fn any_clamped(&self) -> bool {
        self.nodes.iter().any(|n| n.clamped)
    }
}

/// Messages stored on every edge of a network.
#[derive(Debug, Clone)]
pub struct MessageState<'a> {
    net: &'a ValidatedNetwork,
    observed: Vec<Option<usize>>,
    /// `up[v]`: message from `v` into its parent's slot.
    up: Vec<ChildMessage>,
    /// `down[v]`: message from `v`'s parent into `v`.
    down: Vec<Option<ParentMessage>>,
}

impl<'a> MessageState<'a> {
    pub fn network(&self) -> &'a ValidatedNetwork {
        self.net
    }

    pub fn observed(&self) -> &[Option<usize>] {
        &self.observed
    }

    /// Upward message sent by `node`; the unit message for the root.
    pub fn child_message(&self, node: usize) -> &ChildMessage {
        &self.up[node]
    }

    pub fn parent_message(&self, node: usize) -> Option<&ParentMessage> {
        self.down[node].as_ref()
    }

    /// Product of the upward messages from all of `node`'s children, skipping
    /// `except`.
    fn combined_children(&self, node: usize, except: Option<usize>) -> Result<ChildMessage> {
        let n = self.net.node(node);
        let msgs: Vec<&ChildMessage> = n
            .children
            .iter()
            .filter(|&&c| Some(c) != except)
            .map(|&c| &self.up[c])
            .collect();
        combine_children(n.arity(), &msgs)
    }
}

/// Fresh state: all upward slots hold the unit message and the root receives
/// its own prior moments.
pub fn init_state(net: &ValidatedNetwork) -> MessageState<'_> {
    let up = net
        .nodes()
        .iter()
        .map(|n| ChildMessage::unit(n.parent.map_or(n.arity(), |p| net.node(p).arity())))
        .collect();
    let mut down = vec![None; net.len()];
    down[net.root()] = Some(ParentMessage::from(&net.node(net.root()).moments[0]));
    MessageState {
        net,
        observed: vec![None; net.len()],
        up,
        down,
    }
}

/// Multiplies independent subtree messages component-wise. With no messages
/// the result is the unit message of dimension `dim`.
pub fn combine_children(dim: usize, messages: &[&ChildMessage]) -> Result<ChildMessage> {
    let mut out = ChildMessage::unit(dim);
    for m in messages {
        if m.dim() != dim {
            return Err(Error::DimensionMismatch {
                node: String::new(),
                detail: format!("child message of dimension {} combined into {dim}", m.dim()),
            });
        }
        for i in 0..dim {
            out.mean[i] *= m.mean[i];
            for j in 0..dim {
                out.second[i][j] *= m.second[i][j];
            }
        }
    }
    Ok(out)
}

fn check_columns(cpt: &[MomentSet], child_dim: usize, what: &str) -> Result<()> {
    if cpt.iter().any(|m| m.dim() != child_dim) {
        return Err(Error::DimensionMismatch {
            node: String::new(),
            detail: format!("{what}: conditional moments do not match child dimension {child_dim}"),
        });
    }
    Ok(())
}

/// Message a child sends to its parent.
///
/// `cpt[i]` is the moment set of the child's distribution given parent
/// alternative `i`. `combined` is the product of the child's own incoming
/// upward messages and is ignored when the child is observed.
pub fn child_to_parent(
    combined: &ChildMessage,
    observed: Option<usize>,
    cpt: &[MomentSet],
) -> Result<ChildMessage> {
    let parent_dim = cpt.len();
    let child_dim = cpt.first().map_or(0, MomentSet::dim);
    check_columns(cpt, child_dim, "child_to_parent")?;

    let mut mean = vec![0.0; parent_dim];
    let mut second = vec![vec![0.0; parent_dim]; parent_dim];

    if let Some(g) = observed {
        if g >= child_dim {
            return Err(Error::DimensionMismatch {
                node: String::new(),
                detail: format!("observed alternative {g} out of range {child_dim}"),
            });
        }
        for i in 0..parent_dim {
            mean[i] = cpt[i].mean[g];
            for j in 0..parent_dim {
                // Distinct columns carry independent uncertainty.
                second[i][j] = if i == j {
                    cpt[i].second[g][g]
                } else {
                    cpt[i].mean[g] * cpt[j].mean[g]
                };
            }
        }
        return Ok(ChildMessage { mean, second });
    }

    if combined.dim() != child_dim {
        return Err(Error::DimensionMismatch {
            node: String::new(),
            detail: format!(
                "combined message has dimension {}, child has {child_dim}",
                combined.dim()
            ),
        });
    }
    for i in 0..parent_dim {
        mean[i] = (0..child_dim)
            .map(|k| combined.mean[k] * cpt[i].mean[k])
            .sum();
    }
    for i in 0..parent_dim {
        for j in i..parent_dim {
            let mut acc = 0.0;
            for k in 0..child_dim {
                for r in 0..child_dim {
                    let joint = if i == j {
                        cpt[i].second[k][r]
                    } else {
                        cpt[i].mean[k] * cpt[j].mean[r]
                    };
                    acc += combined.second[k][r] * joint;
                }
            }
            second[i][j] = acc;
            second[j][i] = acc;
        }
    }
    Ok(ChildMessage { mean, second })
}

/// Message a parent sends to one of its children.
///
/// `others` is the product of the upward messages from the parent's other
/// children; `child_cpt[j]` is the moment set of the target child's
/// distribution given parent alternative `j`.
pub fn parent_to_child(
    parent_msg: &ParentMessage,
    others: &ChildMessage,
    parent_observed: Option<usize>,
    child_cpt: &[MomentSet],
) -> Result<ParentMessage> {
    let parent_dim = child_cpt.len();
    let child_dim = child_cpt.first().map_or(0, MomentSet::dim);
    check_columns(child_cpt, child_dim, "parent_to_child")?;

    if let Some(e) = parent_observed {
        let column = child_cpt.get(e).ok_or_else(|| Error::DimensionMismatch {
            node: String::new(),
            detail: format!("observed alternative {e} out of range {parent_dim}"),
        })?;
        return Ok(ParentMessage::from(column));
    }

    if parent_msg.dim() != parent_dim || others.dim() != parent_dim {
        return Err(Error::DimensionMismatch {
            node: String::new(),
            detail: "parent message, sibling messages and columns disagree".into(),
        });
    }

    // Condition the parent on its other children's evidence. The normaliser
    // uses means only.
    let norm: f64 = (0..parent_dim)
        .map(|m| others.mean[m] * parent_msg.mean[m])
        .sum();
    if norm <= 0.0 {
        return Err(Error::InconsistentEvidence(
            "evidence has probability zero under the mean conditional probabilities".into(),
        ));
    }
    let q: Vec<f64> = (0..parent_dim)
        .map(|j| others.mean[j] * parent_msg.mean[j] / norm)
        .collect();
    let t: Vec<Vec<f64>> = (0..parent_dim)
        .map(|j| {
            (0..parent_dim)
                .map(|k| others.second[j][k] * parent_msg.second[j][k] / (norm * norm))
                .collect()
        })
        .collect();

    // Push through the child's columns.
    let mean: Vec<f64> = (0..child_dim)
        .map(|i| (0..parent_dim).map(|j| child_cpt[j].mean[i] * q[j]).sum())
        .collect();
    let mut second = vec![vec![0.0; child_dim]; child_dim];
    for i in 0..child_dim {
        for l in i..child_dim {
            let mut acc = 0.0;
            for j in 0..parent_dim {
                for k in 0..parent_dim {
                    let joint = if j == k {
                        child_cpt[j].second[i][l]
                    } else {
                        child_cpt[j].mean[i] * child_cpt[k].mean[l]
                    };
                    acc += joint * t[j][k];
                }
            }
            second[i][l] = acc;
            second[l][i] = acc;
        }
    }
    Ok(ParentMessage { mean, second })
}

/// Full collect/distribute sweep for the given evidence.
pub fn propagate<'a>(net: &'a ValidatedNetwork, evidence: &Evidence) -> Result<MessageState<'a>> {
    let mut state = init_state(net);
    state.observed = evidence.resolve(net)?;
    check_evidence_probability(net, &state.observed)?;

    for &v in net.preorder().iter().rev() {
        let node = net.node(v);
        if node.parent.is_none() {
            continue;
        }
        let combined = state.combined_children(v, None)?;
        state.up[v] = child_to_parent(&combined, state.observed[v], &node.moments)
            .map_err(|e| name_node(e, node.id.as_str()))?;
    }

    for &v in net.preorder() {
        let node = net.node(v);
        let incoming = state.down[v]
            .clone()
            .expect("parent message set before children");
        for &c in &node.children {
            let others = state.combined_children(v, Some(c))?;
            let msg = parent_to_child(&incoming, &others, state.observed[v], &net.node(c).moments)
                .map_err(|e| name_node(e, net.node(c).id.as_str()))?;
            state.down[c] = Some(msg);
        }
    }
    Ok(state)
}

fn name_node(err: Error, id: &str) -> Error {
    match err {
        Error::DimensionMismatch { node, detail } if node.is_empty() => Error::DimensionMismatch {
            node: id.to_string(),
            detail,
        },
        other => other,
    }
}

/// Probability of the full evidence under the mean conditional probabilities,
/// by an ordinary upward likelihood pass.
fn check_evidence_probability(net: &ValidatedNetwork, observed: &[Option<usize>]) -> Result<()> {
    if observed.iter().all(Option::is_none) {
        return Ok(());
    }
    let mut lambda: Vec<Vec<f64>> = net.nodes().iter().map(|n| vec![1.0; n.arity()]).collect();
    for &v in net.preorder().iter().rev() {
        let node = net.node(v);
        if let Some(obs) = observed[v] {
            for (i, l) in lambda[v].iter_mut().enumerate() {
                if i != obs {
                    *l = 0.0;
                }
            }
        }
        if let Some(p) = node.parent {
            for (i, column) in node.moments.iter().enumerate() {
                let up: f64 = column.mean.iter().zip(&lambda[v]).map(|(c, l)| c * l).sum();
                lambda[p][i] *= up;
            }
        }
    }
    let root = net.root();
    let prob: f64 = net.node(root).moments[0]
        .mean
        .iter()
        .zip(&lambda[root])
        .map(|(p, l)| p * l)
        .sum();
    if prob > 0.0 {
        Ok(())
    } else {
        Err(Error::InconsistentEvidence(
            "evidence has probability zero".into(),
        ))
    }
}

/// Posterior moments for one node.
pub fn query_node(state: &MessageState<'_>, node: usize) -> Result<NodePosterior> {
    let net = state.net;
    let n = net.node(node);
    let k = n.arity();

    if let Some(obs) = state.observed[node] {
        let ind: Vec<f64> = (0..k).map(|i| if i == obs { 1.0 } else { 0.0 }).collect();
        return Ok(NodePosterior {
            id: n.id.clone(),
            mean: ind.clone(),
            second: ind,
            variance: vec![0.0; k],
            clamped: false,
        });
    }

    let lambda = state.combined_children(node, None)?;
    let pi = state.down[node].as_ref().expect("propagated state");
    let norm: f64 = (0..k).map(|j| lambda.mean[j] * pi.mean[j]).sum();
    if norm <= 0.0 {
        return Err(Error::InconsistentEvidence(format!(
            "normaliser is zero at node `{}`",
            n.id
        )));
    }
    let mean: Vec<f64> = (0..k).map(|i| lambda.mean[i] * pi.mean[i] / norm).collect();
    let second: Vec<f64> = (0..k)
        .map(|i| lambda.second[i][i] * pi.second[i][i] / (norm * norm))
        .collect();
    let mut clamped = false;
    let mut variance = Vec::with_capacity(k);
    for i in 0..k {
        let v = second[i] - mean[i] * mean[i];
        if v < NEGATIVE_VARIANCE_LIMIT {
            return Err(Error::NegativeVariance {
                node: n.id.to_string(),
                value: v,
            });
        }
        if v < 0.0 {
            clamped = true;
            variance.push(0.0);
        } else {
            variance.push(v);
        }
    }
    Ok(NodePosterior {
        id: n.id.clone(),
        mean,
        second,
        variance,
        clamped,
    })
}

/// Report for every node, in network order.
pub fn query_all(state: &MessageState<'_>) -> Result<PosteriorReport> {
    let nodes = (0..state.net.len())
        .map(|v| query_node(state, v))
        .collect::<Result<_>>()?;
    Ok(PosteriorReport { nodes })
}

/// Propagate and report every node.
pub fn posterior(net: &ValidatedNetwork, evidence: &Evidence) -> Result<PosteriorReport> {
    query_all(&propagate(net, evidence)?)
}
