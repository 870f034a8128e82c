//! Brute-force references for the propagation engine.
//!
//! Every routine here fixes all conditional probability tables to one
//! concrete realization and sums the joint distribution over node
//! configurations directly. Uncertainty is handled either by enumerating the
//! Cartesian product of all discrete supports or by seeded Monte Carlo draws.
//! Nothing in this module uses message passing.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{UncertainDistribution, ValidatedNetwork};
use crate::propagation::Evidence;

pub const DEFAULT_CAP: u128 = 10_000_000;

/// Effective sample sizes below this are flagged as degenerate.
pub const MIN_EFFECTIVE_SAMPLES: f64 = 10.0;

/// Concrete tables: `cpts[node][row][alternative]`.
type Support = Vec<(Vec<f64>, f64)>;

pub type Realization = Vec<Vec<Vec<f64>>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMode {
    /// Moments of the marginals `P(f_i|U)` under the prior on `U`; no evidence.
    Prior,
    /// `E[P(W', f_i|U)^2] / E[P(W'|U)]^2` with prior expectations, where `W'`
    /// is the evidence not screened off from the node by other observations.
    ApproxPosterior,
    /// Moments of `P(f_i|W,U)` under the true posterior `P(U|W)`.
    ExactPosterior,
}

impl fmt::Display for OracleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OracleMode::Prior => "prior",
            OracleMode::ApproxPosterior => "approx-posterior",
            OracleMode::ExactPosterior => "exact-posterior",
        })
    }
}

impl std::str::FromStr for OracleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prior" => Ok(OracleMode::Prior),
            "approx-posterior" => Ok(OracleMode::ApproxPosterior),
            "exact-posterior" => Ok(OracleMode::ExactPosterior),
            other => Err(Error::Parse(format!("unknown oracle mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleNode {
    pub id: String,
    pub mean: Vec<f64>,
    pub second: Vec<f64>,
    pub variance: Vec<f64>,
    /// Monte Carlo standard errors; `None` for enumeration.
    pub mean_se: Option<Vec<f64>>,
    pub second_se: Option<Vec<f64>>,
    pub variance_se: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub mode: OracleMode,
    pub nodes: Vec<OracleNode>,
    /// Number of support combinations enumerated, or samples drawn.
    pub size: u128,
    pub effective_sample_size: Option<f64>,
    /// Exact-posterior Monte Carlo only: effective sample size fell below
    /// [`MIN_EFFECTIVE_SAMPLES`].
    pub degenerate_weights: bool,
}

impl OracleReport {
    pub fn get(&self, id: &str) -> Option<&OracleNode> {
        self.nodes.iter().find(|n| n.id == id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactMarginals {
    /// `P(f_i|W)` per node.
    pub marginals: Vec<Vec<f64>>,
    /// `P(W)`.
    pub evidence_probability: f64,
}

/// A set of nodes enumerated jointly, with some nodes held fixed and a
/// chosen set of table factors multiplied into each configuration's weight.
#[derive(Debug, Clone)]
struct Region {
    vars: Vec<usize>,
    domains: Vec<Vec<usize>>,
    /// Value of every node that is not enumerated but read by a factor.
    fixed: Vec<Option<usize>>,
    factors: Vec<usize>,
    parent: Vec<Option<usize>>,
}

impl Region {
    fn size(&self) -> u128 {
        self.domains.iter().map(|d| d.len() as u128).product()
    }

    /// Unnormalised sums `N[v][x] = sum of weights with node v at x` for the
    /// enumerated nodes, and the total weight.
    fn sums(&self, cpts: &Realization, arity: &[usize]) -> (Vec<Vec<f64>>, f64) {
        let mut value = self.fixed.clone();
        let mut sums: Vec<Vec<f64>> = self.vars.iter().map(|&v| vec![0.0; arity[v]]).collect();
        let mut total = 0.0;
        let mut digits = vec![0usize; self.vars.len()];
        for (slot, &v) in self.vars.iter().enumerate() {
            value[v] = Some(self.domains[slot][0]);
        }
        'configs: loop {
            let mut w = 1.0;
            for &f in &self.factors {
                let row = self.parent[f].map_or(0, |p| value[p].expect("parent value"));
                w *= cpts[f][row][value[f].expect("node value")];
            }
            if w != 0.0 {
                total += w;
                for (slot, &v) in self.vars.iter().enumerate() {
                    sums[slot][value[v].unwrap()] += w;
                }
            }
            for slot in 0..digits.len() {
                digits[slot] += 1;
                if digits[slot] < self.domains[slot].len() {
                    value[self.vars[slot]] = Some(self.domains[slot][digits[slot]]);
                    continue 'configs;
                }
                digits[slot] = 0;
                value[self.vars[slot]] = Some(self.domains[slot][0]);
            }
            break;
        }
        (sums, total)
    }
}

fn parents(net: &ValidatedNetwork) -> Vec<Option<usize>> {
    net.nodes().iter().map(|n| n.parent).collect()
}

fn arities(net: &ValidatedNetwork) -> Vec<usize> {
    net.nodes().iter().map(|n| n.arity()).collect()
}

/// All nodes, observed ones restricted to their value.
fn full_region(net: &ValidatedNetwork, observed: &[Option<usize>]) -> Region {
    Region {
        vars: (0..net.len()).collect(),
        domains: net
            .nodes()
            .iter()
            .zip(observed)
            .map(|(n, o)| match o {
                Some(x) => vec![*x],
                None => (0..n.arity()).collect(),
            })
            .collect(),
        fixed: vec![None; net.len()],
        factors: (0..net.len()).collect(),
        parent: parents(net),
    }
}

/// Connected groups of unobserved nodes. Each region enumerates its members,
/// conditions on an observed parent of its top member, and includes the
/// likelihood factors of observed children bordering it.
fn screened_regions(net: &ValidatedNetwork, observed: &[Option<usize>]) -> Vec<Region> {
    let mut assigned = vec![false; net.len()];
    let mut regions = Vec::new();
    for &start in net.preorder() {
        if observed[start].is_some() || assigned[start] {
            continue;
        }
        let mut members = Vec::new();
        let mut stack = vec![start];
        assigned[start] = true;
        while let Some(v) = stack.pop() {
            members.push(v);
            let node = net.node(v);
            for u in node.children.iter().copied().chain(node.parent) {
                if observed[u].is_none() && !assigned[u] {
                    assigned[u] = true;
                    stack.push(u);
                }
            }
        }
        members.sort_unstable();
        let mut fixed = vec![None; net.len()];
        let mut factors = members.clone();
        for &v in &members {
            let node = net.node(v);
            if let Some(p) = node.parent {
                if let Some(x) = observed[p] {
                    fixed[p] = Some(x);
                }
            }
            for &c in &node.children {
                if let Some(x) = observed[c] {
                    fixed[c] = Some(x);
                    factors.push(c);
                }
            }
        }
        regions.push(Region {
            domains: members
                .iter()
                .map(|&v| (0..net.node(v).arity()).collect())
                .collect(),
            vars: members,
            fixed,
            factors,
            parent: parents(net),
        });
    }
    regions
}

fn check_cap(size: u128, cap: u128) -> Result<()> {
    if size > cap {
        Err(Error::CapExceeded { size, cap })
    } else {
        Ok(())
    }
}

/// Marginals of every node given the evidence, for one concrete set of tables.
pub fn exact_inference(
    net: &ValidatedNetwork,
    cpts: &Realization,
    evidence: &Evidence,
) -> Result<ExactMarginals> {
    let observed = evidence.resolve(net)?;
    let region = full_region(net, &observed);
    check_cap(region.size(), DEFAULT_CAP)?;
    check_realization(net, cpts)?;
    let (sums, total) = region.sums(cpts, &arities(net));
    if total <= 0.0 {
        return Err(Error::InconsistentEvidence(
            "P(W) = 0 for the given tables".into(),
        ));
    }
    Ok(ExactMarginals {
        marginals: sums
            .into_iter()
            .map(|s| s.into_iter().map(|x| x / total).collect())
            .collect(),
        evidence_probability: total,
    })
}

fn check_realization(net: &ValidatedNetwork, cpts: &Realization) -> Result<()> {
    let ok = cpts.len() == net.len()
        && net.nodes().iter().zip(cpts).all(|(n, rows)| {
            rows.len() == n.rows.len() && rows.iter().all(|r| r.len() == n.arity())
        });
    if ok {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            node: String::new(),
            detail: "realization does not match the network shape".into(),
        })
    }
}

/// Tables with every entry at its expected value.
pub fn mean_realization(net: &ValidatedNetwork) -> Realization {
    net.nodes()
        .iter()
        .map(|n| n.moments.iter().map(|m| m.mean.clone()).collect())
        .collect()
}

/// Per-realization quantities needed by every estimator.
struct Evaluator<'a> {
    net: &'a ValidatedNetwork,
    mode: OracleMode,
    observed: Vec<Option<usize>>,
    arity: Vec<usize>,
    full: Region,
    regions: Vec<Region>,
    /// Region index holding each unobserved node, and its slot inside it.
    owner: Vec<Option<(usize, usize)>>,
}

/// Flat record for one realization. Layout depends on the mode:
/// prior and exact posterior hold `[w, y(v,i)...]`, the approximate
/// posterior holds `[N(v,i)..., Z(region)...]`.
type Record = Vec<f64>;

impl<'a> Evaluator<'a> {
    fn new(
        net: &'a ValidatedNetwork,
        evidence: &Evidence,
        mode: OracleMode,
        cap: u128,
    ) -> Result<Self> {
        let observed = evidence.resolve(net)?;
        if mode == OracleMode::Prior && observed.iter().any(Option::is_some) {
            return Err(Error::PreconditionViolated(
                "prior mode takes no evidence".into(),
            ));
        }
        let full = full_region(net, &observed);
        let regions = screened_regions(net, &observed);
        match mode {
            OracleMode::ApproxPosterior => {
                for r in &regions {
                    check_cap(r.size(), cap)?;
                }
            }
            _ => check_cap(full.size(), cap)?,
        }
        let mut owner = vec![None; net.len()];
        for (ri, r) in regions.iter().enumerate() {
            for (slot, &v) in r.vars.iter().enumerate() {
                owner[v] = Some((ri, slot));
            }
        }
        Ok(Self {
            net,
            mode,
            observed,
            arity: arities(net),
            full,
            regions,
            owner,
        })
    }

    fn width(&self) -> usize {
        let cells: usize = self.arity.iter().sum();
        match self.mode {
            OracleMode::ApproxPosterior => cells + self.regions.len(),
            _ => 1 + cells,
        }
    }

    fn evaluate(&self, cpts: &Realization) -> Record {
        let mut rec = Vec::with_capacity(self.width());
        match self.mode {
            OracleMode::ApproxPosterior => {
                let evaluated: Vec<(Vec<Vec<f64>>, f64)> = self
                    .regions
                    .iter()
                    .map(|r| r.sums(cpts, &self.arity))
                    .collect();
                for v in 0..self.net.len() {
                    match self.owner[v] {
                        Some((ri, slot)) => rec.extend_from_slice(&evaluated[ri].0[slot]),
                        None => rec.extend(std::iter::repeat_n(0.0, self.arity[v])),
                    }
                }
                rec.extend(evaluated.iter().map(|(_, z)| *z));
            }
            _ => {
                let (sums, total) = self.full.sums(cpts, &self.arity);
                rec.push(total);
                for s in sums {
                    if total > 0.0 {
                        rec.extend(s.into_iter().map(|x| x / total));
                    } else {
                        rec.extend(std::iter::repeat_n(0.0, s.len()));
                    }
                }
            }
        }
        rec
    }

    fn offset(&self, v: usize) -> usize {
        self.arity[..v].iter().sum::<usize>()
    }

    fn indicator_node(&self, v: usize, obs: usize, with_se: bool) -> OracleNode {
        let k = self.arity[v];
        let ind: Vec<f64> = (0..k).map(|i| if i == obs { 1.0 } else { 0.0 }).collect();
        let zeros = with_se.then(|| vec![0.0; k]);
        OracleNode {
            id: self.net.node(v).id.to_string(),
            mean: ind.clone(),
            second: ind,
            variance: vec![0.0; k],
            mean_se: zeros.clone(),
            second_se: zeros.clone(),
            variance_se: zeros,
        }
    }

    /// Combines weighted records. `weights` are prior probabilities (or
    /// equal sample weights); standard errors are produced when
    /// `with_se` is set and treat records as i.i.d. draws.
    fn summarise(&self, records: &[(f64, Record)], with_se: bool) -> Result<OracleReport> {
        let weight_total: f64 = records.iter().map(|(w, _)| w).sum();
        let mut nodes = Vec::with_capacity(self.net.len());
        let mut ess = None;
        let mut degenerate = false;

        // Expectations under the record weights.
        let expect = |f: &dyn Fn(&Record) -> f64| -> f64 {
            records.iter().map(|(w, r)| w * f(r)).sum::<f64>() / weight_total
        };

        match self.mode {
            OracleMode::ApproxPosterior => {
                let cells = self.offset(self.net.len());
                let mut region_mean = Vec::with_capacity(self.regions.len());
                for ri in 0..self.regions.len() {
                    let z = expect(&|r: &Record| r[cells + ri]);
                    if z <= 0.0 {
                        return Err(Error::InconsistentEvidence(
                            "evidence has prior probability zero".into(),
                        ));
                    }
                    region_mean.push(z);
                }
                for v in 0..self.net.len() {
                    if let Some(obs) = self.observed[v] {
                        nodes.push(self.indicator_node(v, obs, with_se));
                        continue;
                    }
                    let (ri, _) = self.owner[v].unwrap();
                    let zi = cells + ri;
                    let b = region_mean[ri];
                    let base = self.offset(v);
                    let mut node = self.empty_node(v, with_se);
                    for i in 0..self.arity[v] {
                        let col = base + i;
                        let a = expect(&|r: &Record| r[col]);
                        let c = expect(&|r: &Record| r[col] * r[col]);
                        let mean = a / b;
                        let second = c / (b * b);
                        node.mean.push(mean);
                        node.second.push(second);
                        node.variance.push((second - mean * mean).max(0.0));
                        if with_se {
                            let infl_mean = |r: &Record| (r[col] - mean * r[zi]) / b;
                            let infl_second = |r: &Record| {
                                (r[col] * r[col] - c) / (b * b)
                                    - 2.0 * c * (r[zi] - b) / (b * b * b)
                            };
                            let infl_var = |r: &Record| infl_second(r) - 2.0 * mean * infl_mean(r);
                            node.mean_se
                                .as_mut()
                                .unwrap()
                                .push(iid_se(records, &infl_mean));
                            node.second_se
                                .as_mut()
                                .unwrap()
                                .push(iid_se(records, &infl_second));
                            node.variance_se
                                .as_mut()
                                .unwrap()
                                .push(iid_se(records, &infl_var));
                        }
                    }
                    nodes.push(node);
                }
            }
            OracleMode::Prior | OracleMode::ExactPosterior => {
                // Posterior weight of a record is its prior weight times P(W|U).
                let evidence_mass = expect(&|r: &Record| r[0]);
                if evidence_mass <= 0.0 {
                    return Err(Error::InconsistentEvidence(
                        "evidence has probability zero for every realization".into(),
                    ));
                }
                if with_se {
                    let (s1, s2) = records.iter().fold((0.0, 0.0), |(a, b), (w, r)| {
                        (a + w * r[0], b + (w * r[0]).powi(2))
                    });
                    let e = s1 * s1 / s2;
                    ess = Some(e);
                    degenerate =
                        self.mode == OracleMode::ExactPosterior && e < MIN_EFFECTIVE_SAMPLES;
                }
                for v in 0..self.net.len() {
                    if let Some(obs) = self.observed[v] {
                        nodes.push(self.indicator_node(v, obs, with_se));
                        continue;
                    }
                    let base = 1 + self.offset(v);
                    let mut node = self.empty_node(v, with_se);
                    for i in 0..self.arity[v] {
                        let col = base + i;
                        let mean = expect(&|r: &Record| r[0] * r[col]) / evidence_mass;
                        let second = expect(&|r: &Record| r[0] * r[col] * r[col]) / evidence_mass;
                        node.mean.push(mean);
                        node.second.push(second);
                        node.variance.push((second - mean * mean).max(0.0));
                        if with_se {
                            let infl_mean = |r: &Record| r[0] * (r[col] - mean) / evidence_mass;
                            let infl_second =
                                |r: &Record| r[0] * (r[col] * r[col] - second) / evidence_mass;
                            let infl_var = |r: &Record| infl_second(r) - 2.0 * mean * infl_mean(r);
                            node.mean_se
                                .as_mut()
                                .unwrap()
                                .push(iid_se(records, &infl_mean));
                            node.second_se
                                .as_mut()
                                .unwrap()
                                .push(iid_se(records, &infl_second));
                            node.variance_se
                                .as_mut()
                                .unwrap()
                                .push(iid_se(records, &infl_var));
                        }
                    }
                    nodes.push(node);
                }
            }
        }

        Ok(OracleReport {
            mode: self.mode,
            nodes,
            size: records.len() as u128,
            effective_sample_size: ess,
            degenerate_weights: degenerate,
        })
    }

    fn empty_node(&self, v: usize, with_se: bool) -> OracleNode {
        OracleNode {
            id: self.net.node(v).id.to_string(),
            mean: Vec::new(),
            second: Vec::new(),
            variance: Vec::new(),
            mean_se: with_se.then(Vec::new),
            second_se: with_se.then(Vec::new),
            variance_se: with_se.then(Vec::new),
        }
    }
}

/// Standard error of a sample-mean of influence values (equal weights).
fn iid_se(records: &[(f64, Record)], infl: &dyn Fn(&Record) -> f64) -> f64 {
    let n = records.len() as f64;
    let values: Vec<f64> = records.iter().map(|(_, r)| infl(r)).collect();
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|x| (x - mean).powi(2)).sum();
    (ss / (n - 1.0)).sqrt() / n.sqrt()
}

/// Exact moments by summing over every combination of support points.
///
/// Only discrete-support and point-mass distributions are accepted; the
/// number of combinations must not exceed `cap`.
pub fn enumerate_uncertainty(
    net: &ValidatedNetwork,
    evidence: &Evidence,
    mode: OracleMode,
) -> Result<OracleReport> {
    enumerate_uncertainty_capped(net, evidence, mode, DEFAULT_CAP)
}

pub fn enumerate_uncertainty_capped(
    net: &ValidatedNetwork,
    evidence: &Evidence,
    mode: OracleMode,
    cap: u128,
) -> Result<OracleReport> {
    let eval = Evaluator::new(net, evidence, mode, cap)?;

    // One slot per (node, row) with its support.
    let mut supports: Vec<(usize, usize, Support)> = Vec::new();
    for (v, node) in net.nodes().iter().enumerate() {
        for (r, row) in node.rows.iter().enumerate() {
            let support = match row {
                UncertainDistribution::DiscreteSupport { points } => points.clone(),
                UncertainDistribution::PointMass { p } => vec![(p.clone(), 1.0)],
                UncertainDistribution::Dirichlet { .. } => {
                    return Err(Error::PreconditionViolated(format!(
                        "node `{}` has a Dirichlet row; enumeration needs finite supports",
                        node.id
                    )))
                }
            };
            supports.push((v, r, support));
        }
    }
    let combos: u128 = supports.iter().map(|(_, _, s)| s.len() as u128).product();
    check_cap(combos, cap)?;

    let mut cpts = mean_realization(net);
    let mut digits = vec![0usize; supports.len()];
    for (v, r, s) in &supports {
        cpts[*v][*r] = s[0].0.clone();
    }
    let mut records = Vec::with_capacity(combos as usize);
    'combos: loop {
        let weight: f64 = supports
            .iter()
            .zip(&digits)
            .map(|((_, _, s), &d)| s[d].1)
            .product();
        records.push((weight, eval.evaluate(&cpts)));
        for slot in 0..digits.len() {
            let (v, r, s) = &supports[slot];
            digits[slot] += 1;
            if digits[slot] < s.len() {
                cpts[*v][*r].clone_from(&s[digits[slot]].0);
                continue 'combos;
            }
            digits[slot] = 0;
            cpts[*v][*r].clone_from(&s[0].0);
        }
        break;
    }
    eval.summarise(&records, false).map(|mut rep| {
        rep.size = combos;
        rep
    })
}

/// Seed of the random stream for one (sample, node, row) triple.
pub fn stream_seed(seed: u64, sample: u64, node: u64, row: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(mix(mix(mix(seed) ^ sample) ^ node) ^ row)
}

/// One draw from `dist` using `rng`.
pub fn sample_distribution<R: Rng>(dist: &UncertainDistribution, rng: &mut R) -> Vec<f64> {
    match dist {
        UncertainDistribution::Dirichlet { alpha } => loop {
            let draws: Vec<f64> = alpha
                .iter()
                .map(|&a| Gamma::new(a, 1.0).expect("positive shape").sample(rng))
                .collect();
            let total: f64 = draws.iter().sum();
            // Tiny shapes can underflow every coordinate; redraw.
            if total > 0.0 {
                break draws.into_iter().map(|x| x / total).collect();
            }
        },
        UncertainDistribution::DiscreteSupport { points } => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (p, w) in points {
                acc += w;
                if u < acc {
                    return p.clone();
                }
            }
            points.last().unwrap().0.clone()
        }
        UncertainDistribution::PointMass { p } => p.clone(),
    }
}

/// Seeded Monte Carlo estimate of the same moments, parallel over samples.
/// Results depend only on `(n, seed)`, not on the thread count.
pub fn mc_uncertainty(
    net: &ValidatedNetwork,
    evidence: &Evidence,
    mode: OracleMode,
    n: usize,
    seed: u64,
) -> Result<OracleReport> {
    let eval = Evaluator::new(net, evidence, mode, DEFAULT_CAP)?;
    if n < 2 {
        return Err(Error::PreconditionViolated(
            "Monte Carlo needs at least 2 samples".into(),
        ));
    }
    let records: Vec<(f64, Record)> = (0..n)
        .into_par_iter()
        .map(|s| {
            let cpts: Realization = net
                .nodes()
                .iter()
                .enumerate()
                .map(|(v, node)| {
                    node.rows
                        .iter()
                        .enumerate()
                        .map(|(r, row)| {
                            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(
                                seed, s as u64, v as u64, r as u64,
                            ));
                            sample_distribution(row, &mut rng)
                        })
                        .collect()
                })
                .collect();
            (1.0, eval.evaluate(&cpts))
        })
        .collect();
    eval.summarise(&records, true)
}

/// [`mc_uncertainty`] on a dedicated pool of `threads` workers.
pub fn mc_uncertainty_threads(
    net: &ValidatedNetwork,
    evidence: &Evidence,
    mode: OracleMode,
    n: usize,
    seed: u64,
    threads: usize,
) -> Result<OracleReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Io(e.to_string()))?;
    pool.install(|| mc_uncertainty(net, evidence, mode, n, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_network, NetworkSpec, NodeId, NodeSpec};
    use crate::propagation::posterior;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    fn binary(id: &str, parent: Option<&str>, rows: Vec<UncertainDistribution>) -> NodeSpec {
        NodeSpec {
            id: NodeId::new(id).unwrap(),
            alternatives: vec![
                format!("{}1", id.to_lowercase()),
                format!("{}2", id.to_lowercase()),
            ],
            parent: parent.map(|p| NodeId::new(p).unwrap()),
            rows,
        }
    }

    fn chain(root: UncertainDistribution) -> ValidatedNetwork {
        validate_network(&NetworkSpec {
            nodes: vec![
                binary("A", None, vec![root]),
                binary(
                    "B",
                    Some("A"),
                    vec![
                        UncertainDistribution::point([0.9, 0.1]),
                        UncertainDistribution::point([0.2, 0.8]),
                    ],
                ),
            ],
        })
        .unwrap()
    }

    fn two_point_root() -> ValidatedNetwork {
        chain(UncertainDistribution::discrete([
            (vec![0.2, 0.8], 0.5),
            (vec![0.6, 0.4], 0.5),
        ]))
    }

    #[test]
    fn total_probability() {
        let net = chain(UncertainDistribution::point([0.4, 0.6]));
        let cpts = mean_realization(&net);
        let m = exact_inference(&net, &cpts, &Evidence::none()).unwrap();
        assert!(close(m.marginals[1][0], 0.48));
        assert!(close(m.evidence_probability, 1.0));
        let m = exact_inference(&net, &cpts, &Evidence::none().with("B", 0)).unwrap();
        assert!(close(m.marginals[0][0], 0.75));
        assert!(close(m.evidence_probability, 0.48));
        assert_eq!(m.marginals[1], vec![1.0, 0.0]);
    }

    #[test]
    fn exact_inference_rejects_impossible_evidence() {
        let net = chain(UncertainDistribution::point([1.0, 0.0]));
        let mut cpts = mean_realization(&net);
        cpts[1][0] = vec![1.0, 0.0];
        assert!(matches!(
            exact_inference(&net, &cpts, &Evidence::none().with("B", 1)),
            Err(Error::InconsistentEvidence(_))
        ));
    }

    #[test]
    fn two_point_root_prior() {
        let rep =
            enumerate_uncertainty(&two_point_root(), &Evidence::none(), OracleMode::Prior).unwrap();
        assert_eq!(rep.size, 2);
        let b = rep.get("B").unwrap();
        assert!(close(b.mean[0], 0.48));
        assert!(close(b.second[0], 0.25));
        assert!(close(b.variance[0], 0.0196));
    }

    #[test]
    fn point_masses_enumerate_once() {
        let net = chain(UncertainDistribution::point([0.4, 0.6]));
        let ev = Evidence::none().with("B", 1);
        let rep = enumerate_uncertainty(&net, &ev, OracleMode::ExactPosterior).unwrap();
        assert_eq!(rep.size, 1);
        let exact = exact_inference(&net, &mean_realization(&net), &ev).unwrap();
        for (node, m) in rep.nodes.iter().zip(&exact.marginals) {
            assert!(node.variance.iter().all(|&v| v == 0.0));
            for i in 0..2 {
                assert!(close(node.mean[i], m[i]));
            }
        }
    }

    #[test]
    fn posterior_modes_share_means_but_not_variances() {
        let net = two_point_root();
        let ev = Evidence::none().with("B", 1);
        let approx = enumerate_uncertainty(&net, &ev, OracleMode::ApproxPosterior).unwrap();
        let exact = enumerate_uncertainty(&net, &ev, OracleMode::ExactPosterior).unwrap();
        let (a, e) = (approx.get("A").unwrap(), exact.get("A").unwrap());
        assert!(close(a.mean[0], e.mean[0]));
        assert!((a.variance[0] - e.variance[0]).abs() > 1e-3);
        // exact posterior by hand: weights 0.5*0.8*... per support point
        let w1 = 0.5 * (0.2 * 0.1 + 0.8 * 0.8);
        let w2 = 0.5 * (0.6 * 0.1 + 0.4 * 0.8);
        let y1 = 0.2 * 0.1 / (0.2 * 0.1 + 0.8 * 0.8);
        let y2 = 0.6 * 0.1 / (0.6 * 0.1 + 0.4 * 0.8);
        let second = (w1 * y1 * y1 + w2 * y2 * y2) / (w1 + w2);
        assert!(close(e.second[0], second));
        let prop = posterior(&net, &ev).unwrap();
        assert!(close(prop.get("A").unwrap().second[0], a.second[0]));
    }

    #[test]
    fn enumeration_guards() {
        let net = two_point_root();
        assert!(matches!(
            enumerate_uncertainty_capped(&net, &Evidence::none(), OracleMode::Prior, 1),
            Err(Error::CapExceeded { cap: 1, .. })
        ));
        assert!(matches!(
            enumerate_uncertainty(&net, &Evidence::none().with("A", 0), OracleMode::Prior),
            Err(Error::PreconditionViolated(_))
        ));
        let dir = chain(UncertainDistribution::beta(1.0, 1.0));
        assert!(matches!(
            enumerate_uncertainty(&dir, &Evidence::none(), OracleMode::Prior),
            Err(Error::PreconditionViolated(_))
        ));
        let imp = chain(UncertainDistribution::point([1.0, 0.0]));
        let mut spec = imp.to_spec();
        spec.nodes[1].rows[0] = UncertainDistribution::point([1.0, 0.0]);
        let imp = validate_network(&spec).unwrap();
        assert!(matches!(
            enumerate_uncertainty(
                &imp,
                &Evidence::none().with("B", 1),
                OracleMode::ExactPosterior
            ),
            Err(Error::InconsistentEvidence(_))
        ));
    }

    #[test]
    fn uniform_beta_monte_carlo() {
        let net = validate_network(&NetworkSpec {
            nodes: vec![binary(
                "A",
                None,
                vec![UncertainDistribution::beta(1.0, 1.0)],
            )],
        })
        .unwrap();
        let rep = mc_uncertainty(&net, &Evidence::none(), OracleMode::Prior, 100_000, 42).unwrap();
        let a = rep.get("A").unwrap();
        let (mse, vse) = (
            a.mean_se.as_ref().unwrap()[0],
            a.variance_se.as_ref().unwrap()[0],
        );
        assert!(
            (a.mean[0] - 0.5).abs() <= 3.0 * mse,
            "{} vs {mse}",
            a.mean[0]
        );
        assert!(
            (a.variance[0] - 1.0 / 12.0).abs() <= 3.0 * vse,
            "{} vs {vse}",
            a.variance[0]
        );
        assert_eq!(rep.effective_sample_size, Some(100_000.0));
    }

    #[test]
    fn point_mass_monte_carlo_has_no_spread() {
        let net = chain(UncertainDistribution::point([0.4, 0.6]));
        for seed in [0, 9] {
            let rep = mc_uncertainty(
                &net,
                &Evidence::none().with("B", 0),
                OracleMode::ExactPosterior,
                50,
                seed,
            )
            .unwrap();
            for node in &rep.nodes {
                assert!(node.variance.iter().all(|&v| v.abs() < 1e-15));
                assert!(node.mean_se.as_ref().unwrap().iter().all(|&s| s < 1e-15));
            }
            assert!(close(rep.get("A").unwrap().mean[0], 0.75));
        }
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let net = chain(UncertainDistribution::beta(2.0, 5.0));
        let ev = Evidence::none().with("B", 0);
        for mode in [OracleMode::ApproxPosterior, OracleMode::ExactPosterior] {
            let one = mc_uncertainty_threads(&net, &ev, mode, 5000, 17, 1).unwrap();
            let four = mc_uncertainty_threads(&net, &ev, mode, 5000, 17, 4).unwrap();
            assert_eq!(one, four);
        }
    }

    #[test]
    fn degenerate_weights_are_flagged() {
        // Evidence that is nearly impossible except under rare draws.
        let net = validate_network(&NetworkSpec {
            nodes: vec![
                binary("A", None, vec![UncertainDistribution::beta(0.01, 100.0)]),
                binary(
                    "B",
                    Some("A"),
                    vec![
                        UncertainDistribution::point([1.0, 0.0]),
                        UncertainDistribution::point([0.0, 1.0]),
                    ],
                ),
            ],
        })
        .unwrap();
        let rep = mc_uncertainty(
            &net,
            &Evidence::none().with("B", 0),
            OracleMode::ExactPosterior,
            100,
            1,
        )
        .unwrap();
        assert!(
            rep.degenerate_weights,
            "ess {:?}",
            rep.effective_sample_size
        );
    }

    #[test]
    fn seeds_are_spread() {
        assert_ne!(stream_seed(1, 0, 0, 0), stream_seed(1, 0, 0, 1));
        assert_ne!(stream_seed(1, 0, 1, 0), stream_seed(1, 1, 0, 0));
        assert_eq!(stream_seed(5, 6, 7, 8), stream_seed(5, 6, 7, 8));
    }
}
