//! Command-line front end: network files in, JSON reports out.
//!
//! Exit codes: 0 ok, 2 parse or validation failure, 3 inconsistent evidence,
//! 4 tolerance exceeded, 5 precondition violated.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{check_column_bound, NodeBound};
use crate::error::{Error, Result};
use crate::generate::random_beta_tree;
use crate::model::{
    validate_network, NetworkSpec, NodeId, NodeSpec, UncertainDistribution, ValidatedNetwork,
};
use crate::oracle::{
    enumerate_uncertainty, mc_uncertainty, mc_uncertainty_threads, OracleMode, OracleReport,
};
use crate::propagation::{posterior, Evidence, PosteriorReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_TOLERANCE: i32 = 4;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

// ---------------------------------------------------------------------------
// Network file

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub nodes: Vec<NodeEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeEntry {
    pub id: String,
    pub alternatives: Vec<String>,
    pub parent: Option<String>,
    pub cpt: Vec<RowEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowEntry {
    /// Parent alternative label; `null` for the root.
    pub given: Option<String>,
    pub dist: DistEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum DistEntry {
    Dirichlet { alpha: Vec<f64> },
    Discrete { points: Vec<PointEntry> },
    Point { p: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointEntry {
    pub p: Vec<f64>,
    pub w: f64,
}

impl From<&DistEntry> for UncertainDistribution {
    fn from(d: &DistEntry) -> Self {
        match d {
            DistEntry::Dirichlet { alpha } => UncertainDistribution::dirichlet(alpha.clone()),
            DistEntry::Discrete { points } => {
                UncertainDistribution::discrete(points.iter().map(|pt| (pt.p.clone(), pt.w)))
            }
            DistEntry::Point { p } => UncertainDistribution::point(p.clone()),
        }
    }
}

impl From<&UncertainDistribution> for DistEntry {
    fn from(d: &UncertainDistribution) -> Self {
        match d {
            UncertainDistribution::Dirichlet { alpha } => DistEntry::Dirichlet {
                alpha: alpha.clone(),
            },
            UncertainDistribution::DiscreteSupport { points } => DistEntry::Discrete {
                points: points
                    .iter()
                    .map(|(p, w)| PointEntry {
                        p: p.clone(),
                        w: *w,
                    })
                    .collect(),
            },
            UncertainDistribution::PointMass { p } => DistEntry::Point { p: p.clone() },
        }
    }
}

impl NetworkFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Validates the network, including that each row's `given` label
    /// matches the parent alternative at that position.
    pub fn to_network(&self) -> Result<ValidatedNetwork> {
        let nodes = self
            .nodes
            .iter()
            .map(|n| {
                Ok(NodeSpec {
                    id: NodeId::new(n.id.clone())?,
                    alternatives: n.alternatives.clone(),
                    parent: n.parent.clone().map(NodeId::new).transpose()?,
                    rows: n
                        .cpt
                        .iter()
                        .map(|r| UncertainDistribution::from(&r.dist))
                        .collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let net = validate_network(&NetworkSpec { nodes })?;
        for (entry, node) in self.nodes.iter().zip(net.nodes()) {
            for (r, row) in entry.cpt.iter().enumerate() {
                let expected = node.parent.map(|p| net.node(p).alternatives[r].as_str());
                if row.given.as_deref() != expected {
                    return Err(Error::DimensionMismatch {
                        node: node.id.to_string(),
                        detail: format!(
                            "row {r} is given {:?}, expected {:?}",
                            row.given.as_deref(),
                            expected
                        ),
                    });
                }
            }
        }
        Ok(net)
    }

    pub fn from_network(net: &ValidatedNetwork) -> Self {
        NetworkFile {
            nodes: net
                .nodes()
                .iter()
                .map(|n| NodeEntry {
                    id: n.id.to_string(),
                    alternatives: n.alternatives.clone(),
                    parent: n.parent.map(|p| net.node(p).id.to_string()),
                    cpt: n
                        .rows
                        .iter()
                        .enumerate()
                        .map(|(r, d)| RowEntry {
                            given: n.parent.map(|p| net.node(p).alternatives[r].clone()),
                            dist: DistEntry::from(d),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

pub fn load_network(path: &Path) -> Result<ValidatedNetwork> {
    NetworkFile::read(path)?.to_network()
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMoments {
    pub mean: Vec<f64>,
    pub second: Vec<f64>,
    pub variance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub command: String,
    pub tool_version: String,
    pub network: String,
    pub evidence: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub mode: Option<String>,
    pub timestamp: u64,
    pub nodes: BTreeMap<String, NodeMoments>,
    #[serde(default)]
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diffs {
    pub mean: f64,
    pub second: f64,
    pub variance: f64,
}

impl Diffs {
    fn zero() -> Self {
        Diffs {
            mean: 0.0,
            second: 0.0,
            variance: 0.0,
        }
    }

    fn max(self, o: Diffs) -> Diffs {
        Diffs {
            mean: self.mean.max(o.mean),
            second: self.second.max(o.second),
            variance: self.variance.max(o.variance),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeComparison {
    pub propagation: NodeMoments,
    pub oracle: NodeMoments,
    pub oracle_se: Option<NodeMoments>,
    pub max_abs_diff: Diffs,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub command: String,
    pub tool_version: String,
    pub network: String,
    pub evidence: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub mode: String,
    pub oracle_mode: OracleMode,
    pub samples: Option<u64>,
    /// Absolute tolerance for enumeration, multiple of the standard error
    /// for Monte Carlo.
    pub tolerance: f64,
    pub timestamp: u64,
    pub nodes: BTreeMap<String, NodeComparison>,
    pub max_abs_diff: Diffs,
    pub effective_sample_size: Option<f64>,
    pub pass: bool,
    #[serde(default)]
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheckReport {
    pub command: String,
    pub tool_version: String,
    pub network: String,
    pub seed: Option<u64>,
    pub timestamp: u64,
    pub nodes: Vec<NodeBound>,
    pub min_slack: Option<f64>,
    pub pass: bool,
    /// The generated network, when `--gen` was used.
    pub generated: Option<NetworkFile>,
}

fn timestamp() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn posterior_moments(report: &PosteriorReport) -> BTreeMap<String, NodeMoments> {
    report
        .nodes
        .iter()
        .map(|n| {
            (
                n.id.to_string(),
                NodeMoments {
                    mean: n.mean.clone(),
                    second: n.second.clone(),
                    variance: n.variance.clone(),
                },
            )
        })
        .collect()
}

fn evidence_labels(net: &ValidatedNetwork, ev: &Evidence) -> BTreeMap<String, String> {
    ev.assignments
        .iter()
        .map(|(id, &alt)| {
            let idx = net.index_of(id.as_str()).expect("resolved evidence");
            (id.to_string(), net.node(idx).alternatives[alt].clone())
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Argument parsing

#[derive(Debug, Parser)]
#[command(
    name = "beliefvar",
    version,
    about = "Variance propagation in tree belief networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a network file and print OK.
    Validate { path: PathBuf },
    /// Posterior means, second moments and variances.
    Query {
        path: PathBuf,
        /// Observation NODE=ALTERNATIVE; repeatable.
        #[arg(long = "evidence", value_name = "NODE=ALT")]
        evidence: Vec<String>,
        /// `all` or a comma-separated list of node ids.
        #[arg(long, default_value = "all")]
        nodes: String,
    },
    /// Compare propagation against a brute-force oracle.
    Compare {
        path: PathBuf,
        /// Observation NODE=ALTERNATIVE; repeatable.
        #[arg(long = "evidence", value_name = "NODE=ALT")]
        evidence: Vec<String>,
        /// Exhaustive enumeration or Monte Carlo.
        #[arg(long, value_enum, default_value_t = CompareMode::Enum)]
        mode: CompareMode,
        /// prior, approx-posterior or exact-posterior.
        #[arg(long = "oracle-mode", default_value = "approx-posterior")]
        oracle_mode: OracleMode,
        /// Monte Carlo sample count.
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        /// Monte Carlo seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Absolute tolerance (enum, default 1e-8) or number of standard
        /// errors (mc, default 4).
        #[arg(long)]
        tol: Option<f64>,
        /// Worker threads for Monte Carlo; results do not depend on it.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check the column-variance bound on a binary beta tree.
    Boundcheck {
        path: Option<PathBuf>,
        /// Generate a random binary beta tree from this seed instead of reading a file.
        #[arg(long = "gen", value_name = "SEED", conflicts_with = "path")]
        generate: Option<u64>,
        /// Node limit for generated trees.
        #[arg(long, default_value_t = 12)]
        max_nodes: usize,
        /// Depth limit for generated trees.
        #[arg(long, default_value_t = 5)]
        max_depth: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CompareMode {
    Enum,
    Mc,
}

fn parse_evidence(net: &ValidatedNetwork, raw: &[String]) -> Result<Evidence> {
    let pairs = raw
        .iter()
        .map(|s| {
            s.split_once('=')
                .ok_or_else(|| Error::Parse(format!("evidence `{s}` is not NODE=ALT")))
        })
        .collect::<Result<Vec<_>>>()?;
    Evidence::from_labels(net, pairs)
}

// ---------------------------------------------------------------------------
// Commands

/// Result of one invocation: exit status plus captured standard streams.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Outcome {
            code: EXIT_OK,
            stdout,
            stderr: String::new(),
        }
    }

    fn error(err: &Error) -> Self {
        Outcome {
            code: err.exit_code(),
            stdout: String::new(),
            stderr: format!("error: {err}\n"),
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialise");
    s.push('\n');
    s
}

pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
            let text = e.render().to_string();
            return if code == EXIT_OK {
                Outcome::ok(text)
            } else {
                Outcome {
                    code,
                    stdout: String::new(),
                    stderr: text,
                }
            };
        }
    };
    let result = match &cli.command {
        Command::Validate { path } => cmd_validate(path),
        Command::Query {
            path,
            evidence,
            nodes,
        } => cmd_query(path, evidence, nodes),
        Command::Compare {
            path,
            evidence,
            mode,
            oracle_mode,
            samples,
            seed,
            tol,
            threads,
        } => cmd_compare(
            path,
            evidence,
            *mode,
            *oracle_mode,
            *samples,
            *seed,
            *tol,
            *threads,
        ),
        Command::Boundcheck {
            path,
            generate,
            max_nodes,
            max_depth,
        } => cmd_boundcheck(path.as_deref(), *generate, *max_nodes, *max_depth),
    };
    result.unwrap_or_else(|e| Outcome::error(&e))
}

pub fn cmd_validate(path: &Path) -> Result<Outcome> {
    load_network(path)?;
    Ok(Outcome::ok("OK\n".into()))
}

pub fn cmd_query(path: &Path, evidence: &[String], nodes: &str) -> Result<Outcome> {
    let net = load_network(path)?;
    let ev = parse_evidence(&net, evidence)?;
    let report = posterior(&net, &ev)?;
    let mut moments = posterior_moments(&report);
    if nodes != "all" {
        let wanted: Vec<&str> = nodes
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect();
        for id in &wanted {
            net.index_of(id)?;
        }
        moments.retain(|id, _| wanted.contains(&id.as_str()));
    }
    let diagnostics = report
        .nodes
        .iter()
        .filter(|n| n.clamped)
        .map(|n| format!("variance of `{}` clamped at zero", n.id))
        .collect();
    let file = ReportFile {
        command: "query".into(),
        tool_version: TOOL_VERSION.into(),
        network: path.display().to_string(),
        evidence: evidence_labels(&net, &ev),
        seed: None,
        mode: None,
        timestamp: timestamp(),
        nodes: moments,
        diagnostics,
    };
    Ok(Outcome::ok(to_json(&file)))
}

fn oracle_moments(o: &crate::oracle::OracleNode) -> (NodeMoments, Option<NodeMoments>) {
    let m = NodeMoments {
        mean: o.mean.clone(),
        second: o.second.clone(),
        variance: o.variance.clone(),
    };
    let se = match (&o.mean_se, &o.second_se, &o.variance_se) {
        (Some(a), Some(b), Some(c)) => Some(NodeMoments {
            mean: a.clone(),
            second: b.clone(),
            variance: c.clone(),
        }),
        _ => None,
    };
    (m, se)
}

/// Absolute floor added to Monte Carlo bands so that zero-variance
/// estimates tolerate rounding differences.
pub const MC_ABS_FLOOR: f64 = 1e-12;

#[allow(clippy::too_many_arguments)]
pub fn cmd_compare(
    path: &Path,
    evidence: &[String],
    mode: CompareMode,
    oracle_mode: OracleMode,
    samples: u64,
    seed: u64,
    tol: Option<f64>,
    threads: Option<usize>,
) -> Result<Outcome> {
    let net = load_network(path)?;
    let ev = parse_evidence(&net, evidence)?;
    let prop = posterior(&net, &ev)?;
    let oracle: OracleReport = match mode {
        CompareMode::Enum => enumerate_uncertainty(&net, &ev, oracle_mode)?,
        CompareMode::Mc => match threads {
            Some(t) => mc_uncertainty_threads(&net, &ev, oracle_mode, samples as usize, seed, t)?,
            None => mc_uncertainty(&net, &ev, oracle_mode, samples as usize, seed)?,
        },
    };
    let tolerance = tol.unwrap_or(match mode {
        CompareMode::Enum => 1e-8,
        CompareMode::Mc => 4.0,
    });

    let mut nodes = BTreeMap::new();
    let mut overall = Diffs::zero();
    let mut pass = true;
    for (p, o) in prop.nodes.iter().zip(&oracle.nodes) {
        let (om, se) = oracle_moments(o);
        let mut diff = Diffs::zero();
        let mut node_pass = true;
        for i in 0..p.mean.len() {
            let d = Diffs {
                mean: (p.mean[i] - om.mean[i]).abs(),
                second: (p.second[i] - om.second[i]).abs(),
                variance: (p.variance[i] - om.variance[i]).abs(),
            };
            diff = diff.max(d);
            let within = |d: f64, se: Option<f64>| match se {
                Some(s) => d <= tolerance * s + MC_ABS_FLOOR,
                None => d <= tolerance,
            };
            let sei = |f: fn(&NodeMoments) -> &Vec<f64>| se.as_ref().map(|s| f(s)[i]);
            node_pass &= within(d.mean, sei(|s| &s.mean))
                && within(d.second, sei(|s| &s.second))
                && within(d.variance, sei(|s| &s.variance));
        }
        overall = overall.max(diff);
        pass &= node_pass;
        nodes.insert(
            p.id.to_string(),
            NodeComparison {
                propagation: NodeMoments {
                    mean: p.mean.clone(),
                    second: p.second.clone(),
                    variance: p.variance.clone(),
                },
                oracle: om,
                oracle_se: se,
                max_abs_diff: diff,
                pass: node_pass,
            },
        );
    }

    let mut diagnostics = Vec::new();
    let mut stderr = String::new();
    if oracle.degenerate_weights {
        let msg = format!(
            "DegenerateWeights: effective sample size {:.1} below {}",
            oracle.effective_sample_size.unwrap_or(0.0),
            crate::oracle::MIN_EFFECTIVE_SAMPLES
        );
        stderr.push_str(&format!("warning: {msg}\n"));
        diagnostics.push(msg);
    }
    let report = CompareReport {
        command: "compare".into(),
        tool_version: TOOL_VERSION.into(),
        network: path.display().to_string(),
        evidence: evidence_labels(&net, &ev),
        seed: (mode == CompareMode::Mc).then_some(seed),
        mode: match mode {
            CompareMode::Enum => "enum".into(),
            CompareMode::Mc => "mc".into(),
        },
        oracle_mode,
        samples: (mode == CompareMode::Mc).then_some(samples),
        tolerance,
        timestamp: timestamp(),
        nodes,
        max_abs_diff: overall,
        effective_sample_size: oracle.effective_sample_size,
        pass,
        diagnostics,
    };
    Ok(Outcome {
        code: if pass { EXIT_OK } else { EXIT_TOLERANCE },
        stdout: to_json(&report),
        stderr,
    })
}

pub fn cmd_boundcheck(
    path: Option<&Path>,
    generate: Option<u64>,
    max_nodes: usize,
    max_depth: usize,
) -> Result<Outcome> {
    let (net, name, generated) = match (path, generate) {
        (_, Some(seed)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = random_beta_tree(&mut rng, max_nodes, max_depth);
            let file = NetworkFile::from_network(&net);
            (net, format!("generated:{seed}"), Some(file))
        }
        (Some(p), None) => (load_network(p)?, p.display().to_string(), None),
        (None, None) => {
            return Err(Error::Parse(
                "boundcheck needs a network path or --gen SEED".into(),
            ))
        }
    };
    let report = check_column_bound(&net)?;
    let pass = report.pass();
    let out = BoundCheckReport {
        command: "boundcheck".into(),
        tool_version: TOOL_VERSION.into(),
        network: name,
        seed: generate,
        timestamp: timestamp(),
        min_slack: report.min_slack(),
        nodes: report.nodes,
        pass,
        generated,
    };
    Ok(Outcome {
        code: if pass { EXIT_OK } else { EXIT_TOLERANCE },
        stdout: to_json(&out),
        stderr: String::new(),
    })
}
