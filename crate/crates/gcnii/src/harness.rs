//! The `spectral` and `verify-filter` commands as library functions.

use std::str::FromStr;
use std::time::Instant;

use gcnii_core::graph::random_connected_graph;
use gcnii_core::rng;
use gcnii_core::spectral::{
    check_convergence_bound, check_walk_bound, recover_gamma, verify_filter_recovery, FilterSpec,
    FilterVerdict, SpectralError, SpectralReport, WalkBoundReport,
};
use gcnii_core::CsrGraph;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::buckets::{bucket_position, bucket_range};
use crate::dataset::DatasetBundle;

/// Largest graph the all-pairs walk check runs on.
pub const WALK_CHECK_LIMIT: usize = 3000;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown signal {0:?}; expected ones, feature:J or random")]
    BadSignal(String),
    #[error("feature {index} out of range for {features} features")]
    FeatureOutOfRange { index: usize, features: usize },
    #[error("filter order must be between 1 and 32, got {0}")]
    BadOrder(usize),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Input signal for the convergence check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Signal {
    Ones,
    Feature(usize),
    Random,
}

impl FromStr for Signal {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ones" => Ok(Signal::Ones),
            "random" => Ok(Signal::Random),
            _ => s
                .strip_prefix("feature:")
                .and_then(|j| j.parse().ok())
                .map(Signal::Feature)
                .ok_or_else(|| HarnessError::BadSignal(s.to_string())),
        }
    }
}

/// Mean relative deviation of the nodes in one degree range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeRelative {
    pub lo: usize,
    pub hi: usize,
    pub count: usize,
    pub mean_relative_deviation: f64,
    pub mean_relative_envelope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralCommandReport {
    pub dataset: String,
    pub num_nodes: usize,
    /// Nodes of the largest connected component, which the checks run on.
    pub component_nodes: usize,
    pub signal: Signal,
    pub seed: u64,
    pub report: SpectralReport,
    pub relative_by_degree: Vec<DegreeRelative>,
    pub walk_bound: Option<WalkBoundReport>,
    pub walk_bound_note: Option<String>,
}

/// Runs the convergence checks on the largest connected component of the
/// dataset graph.
pub fn spectral_command(
    data: &DatasetBundle,
    signal: Signal,
    k_max: usize,
    seed: u64,
) -> Result<SpectralCommandReport, HarnessError> {
    let nodes = data.graph.largest_component();
    let g = data.graph.induced_subgraph(&nodes);
    let x: Vec<f64> = match signal {
        Signal::Ones => vec![1.0; nodes.len()],
        Signal::Feature(j) => {
            if j >= data.num_features() {
                return Err(HarnessError::FeatureOutOfRange {
                    index: j,
                    features: data.num_features(),
                });
            }
            nodes.iter().map(|&v| data.features.get(v, j)).collect()
        }
        Signal::Random => {
            let mut r = rng::stream(seed, 5);
            nodes.iter().map(|_| r.random::<f64>()).collect()
        }
    };
    let report = check_convergence_bound(&g, &x, k_max)?;
    let relative_by_degree = relative_by_degree(&g, &report);
    let (walk_bound, walk_bound_note) = if g.num_nodes() <= WALK_CHECK_LIMIT {
        (Some(check_walk_bound(&g, k_max)?), None)
    } else {
        (
            None,
            Some(format!(
                "skipped: {} nodes exceeds the all-pairs limit {WALK_CHECK_LIMIT}",
                g.num_nodes()
            )),
        )
    };
    Ok(SpectralCommandReport {
        dataset: data.name.clone(),
        num_nodes: data.num_nodes(),
        component_nodes: nodes.len(),
        signal,
        seed,
        report,
        relative_by_degree,
        walk_bound,
        walk_bound_note,
    })
}

fn relative_by_degree(g: &CsrGraph, report: &SpectralReport) -> Vec<DegreeRelative> {
    let mut acc: Vec<(usize, f64, f64)> = Vec::new();
    for v in 0..g.num_nodes() {
        let p = bucket_position(g.degree(v));
        if acc.len() <= p {
            acc.resize(p + 1, (0, 0.0, 0.0));
        }
        acc[p].0 += 1;
        acc[p].1 += report.node_relative_deviation[v];
        acc[p].2 += report.node_relative_envelope[v];
    }
    acc.into_iter()
        .enumerate()
        .filter(|(_, (count, _, _))| *count > 0)
        .map(|(p, (count, dev, env))| {
            let (lo, hi) = bucket_range(p);
            DegreeRelative {
                lo,
                hi,
                count,
                mean_relative_deviation: dev / count as f64,
                mean_relative_envelope: env / count as f64,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterTrial {
    pub trial: usize,
    pub nodes: usize,
    pub order: usize,
    pub theta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub degenerate_flags: Vec<bool>,
    pub max_error: f64,
    pub verdict: FilterVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyFilterReport {
    pub graph_source: String,
    pub trials: Vec<FilterTrial>,
    pub passed: usize,
    pub failed: usize,
    pub degenerate: usize,
    /// Random coefficient draws rejected for a flagged denominator.
    pub redraws: usize,
    pub max_error: f64,
    pub wall_time: f64,
}

impl VerifyFilterReport {
    pub fn all_passed(&self) -> bool {
        self.failed == 0 && self.degenerate == 0 && self.passed == self.trials.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyFilterConfig {
    /// Largest filter order drawn; each trial picks its order in `1..=order`.
    pub order: usize,
    pub trials: usize,
    pub seed: u64,
    /// Fixed coefficients in powers of `L̃` instead of random ones.
    pub theta: Option<Vec<f64>>,
}

/// Runs filter-recovery trials. Without `graph`, each trial draws a random
/// connected graph with 2 to 15 nodes; with it, every trial uses that graph
/// (largest component) with a fresh random signal.
pub fn verify_filter(config: &VerifyFilterConfig, graph: Option<&CsrGraph>) -> Result<VerifyFilterReport, HarnessError> {
    let started = Instant::now();
    if !(1..=32).contains(&config.order) {
        return Err(HarnessError::BadOrder(config.order));
    }
    let fixed_graph = graph.map(|g| g.induced_subgraph(&g.largest_component()));
    let mut r = rng::stream(config.seed, 6);
    let mut trials = Vec::with_capacity(config.trials);
    let mut redraws = 0;

    for trial in 0..config.trials {
        let g = match &fixed_graph {
            Some(g) => g.clone(),
            None => {
                let n = r.random_range(2..=15);
                let p = r.random_range(0.1..0.6);
                random_connected_graph(n, p, &mut r)
            }
        };
        let x: Vec<f64> = (0..g.num_nodes()).map(|_| r.random::<f64>()).collect();
        let theta = match &config.theta {
            Some(t) => t.clone(),
            None => loop {
                let k = r.random_range(1..=config.order);
                let t: Vec<f64> = (0..k).map(|_| r.random_range(-1.0..1.0)).collect();
                if !recover_gamma(&FilterSpec::new(t.clone())?).is_degenerate() {
                    break t;
                }
                redraws += 1;
            },
        };
        let check = verify_filter_recovery(&g, &x, &theta)?;
        trials.push(FilterTrial {
            trial,
            nodes: g.num_nodes(),
            order: theta.len(),
            theta,
            gamma: check.filter.gamma.unwrap_or_default(),
            degenerate_flags: check.filter.degenerate_flags,
            max_error: check.max_error,
            verdict: check.verdict,
        });
    }

    let count = |v: FilterVerdict| trials.iter().filter(|t| t.verdict == v).count();
    Ok(VerifyFilterReport {
        graph_source: match graph {
            Some(_) => "dataset largest component".to_string(),
            None => "random connected graphs, 2-15 nodes".to_string(),
        },
        passed: count(FilterVerdict::Pass),
        failed: count(FilterVerdict::Fail),
        degenerate: count(FilterVerdict::Degenerate),
        redraws,
        max_error: trials.iter().map(|t| t.max_error).fold(0.0, f64::max),
        trials,
        wall_time: started.elapsed().as_secs_f64(),
    })
}
