//! Numerical checks of lazy-walk convergence and polynomial filter recovery.
//!
//! Everything here is a verification tool: dense where that keeps the code
//! obviously right, and every check reports the numbers it compared.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dense::Matrix;
use crate::graph::{laplacian_operator, renormalized_operator, CsrGraph, PropKind, PropMatrix};
use crate::linalg::{symmetric_eigenvalues, EigenError};

/// Largest graph handed to the dense eigensolver.
pub const DENSE_LIMIT: usize = 5000;
/// Eigenvalues of `L̃` at or below this count as zero.
pub const ZERO_EIGENVALUE: f64 = 1e-9;
/// Recovery denominators below this magnitude are flagged.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-9;
/// Stand-in magnitude for a `γ` whose denominator vanished.
pub const DEGENERATE_GAMMA: f64 = 1e9;
/// Pass threshold of [`verify_filter_recovery`].
pub const FILTER_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("graph has {components} connected components; the check needs a connected graph")]
    Disconnected { components: usize },
    #[error("expected a {expected:?} operator, got {got:?}")]
    WrongOperator { expected: PropKind, got: PropKind },
    #[error("signal has length {got}, graph has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
    #[error("signal entry {index} is negative or not finite")]
    NegativeSignal { index: usize },
    #[error("all eigenvalues are zero; no spectral gap")]
    NoGap,
    #[error("{n} nodes exceeds the dense eigensolver limit of {limit}")]
    TooLarge { n: usize, limit: usize },
    #[error("filter order must be at least 1")]
    EmptyFilter,
    #[error("gap estimate did not converge in {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error("convergence bound violated at step {step}, node {node}: deviation {deviation:e} > bound {bound:e}")]
    BoundViolation {
        step: usize,
        node: usize,
        deviation: f64,
        bound: f64,
    },
    #[error("walk bound violated at step {step} from node {start} to node {node}: deviation {deviation:e} > bound {bound:e}")]
    WalkBoundViolation {
        step: usize,
        start: usize,
        node: usize,
        deviation: f64,
        bound: f64,
    },
}

fn check_len(n: usize, x: &[f64]) -> Result<(), SpectralError> {
    if x.len() != n {
        return Err(SpectralError::LengthMismatch { expected: n, got: x.len() });
    }
    Ok(())
}

fn check_nonnegative(x: &[f64]) -> Result<(), SpectralError> {
    match x.iter().position(|v| !v.is_finite() || *v < 0.0) {
        Some(index) => Err(SpectralError::NegativeSignal { index }),
        None => Ok(()),
    }
}

fn require_connected(g: &CsrGraph) -> Result<(), SpectralError> {
    let labels = g.component_labels();
    let components = labels.iter().copied().max().map_or(0, |m| m + 1);
    if components > 1 {
        return Err(SpectralError::Disconnected { components });
    }
    Ok(())
}

fn require_kind(p: &PropMatrix, expected: PropKind) -> Result<(), SpectralError> {
    if p.kind() != expected {
        return Err(SpectralError::WrongOperator { expected, got: p.kind() });
    }
    Ok(())
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `h(0) = x, h(k+1) = (h(k) + P̃ h(k)) / 2`; returns all `k + 1` iterates.
pub fn lazy_walk_propagate(p: &PropMatrix, x: &[f64], k: usize) -> Result<Vec<Vec<f64>>, SpectralError> {
    require_kind(p, PropKind::Renormalized)?;
    check_len(p.dim(), x)?;
    let mut out = Vec::with_capacity(k + 1);
    out.push(x.to_vec());
    for step in 0..k {
        let h = &out[step];
        let ph = p.apply(h);
        let next = h.iter().zip(&ph).map(|(a, b)| 0.5 * (a + b)).collect();
        out.push(next);
    }
    Ok(out)
}

/// `π = ⟨D̃^{1/2} 1, x⟩ / (2m + n) · D̃^{1/2} 1`, the limit of the lazy walk.
pub fn stationary_vector(g: &CsrGraph, x: &[f64]) -> Result<Vec<f64>, SpectralError> {
    check_len(g.num_nodes(), x)?;
    require_connected(g)?;
    let root: Vec<f64> = g.degrees().iter().map(|&d| libm::sqrt((d + 1) as f64)).collect();
    let volume = (2 * g.num_edges() + g.num_nodes()) as f64;
    let weight: f64 = root.iter().zip(x).map(|(r, v)| r * v).sum::<f64>() / volume;
    Ok(root.iter().map(|r| weight * r).collect())
}

/// Least nonzero eigenvalue of `L̃`, by dense eigendecomposition.
pub fn spectral_gap(laplacian: &PropMatrix) -> Result<f64, SpectralError> {
    require_kind(laplacian, PropKind::Laplacian)?;
    let n = laplacian.dim();
    if n > DENSE_LIMIT {
        return Err(SpectralError::TooLarge { n, limit: DENSE_LIMIT });
    }
    symmetric_eigenvalues(&laplacian.to_dense())?
        .into_iter()
        .find(|&l| l > ZERO_EIGENVALUE)
        .ok_or(SpectralError::NoGap)
}

/// Spectral gap of a connected graph by power iteration on the lazy walk
/// with the stationary direction projected out. Approximate: stops when the
/// Rayleigh quotient moves less than `tol` between iterations.
pub fn spectral_gap_estimate(g: &CsrGraph, tol: f64, max_iterations: usize) -> Result<f64, SpectralError> {
    require_connected(g)?;
    let n = g.num_nodes();
    if n < 2 {
        return Err(SpectralError::NoGap);
    }
    let p = renormalized_operator(g);
    let mut top: Vec<f64> = g.degrees().iter().map(|&d| libm::sqrt((d + 1) as f64)).collect();
    normalize(&mut top);
    let deflate = |v: &mut Vec<f64>| {
        let c: f64 = v.iter().zip(&top).map(|(a, b)| a * b).sum();
        v.iter_mut().zip(&top).for_each(|(a, b)| *a -= c * b);
    };
    let mut v: Vec<f64> = (0..n).map(|i| libm::sin(1.0 + 1.7 * i as f64)).collect();
    deflate(&mut v);
    normalize(&mut v);
    let mut previous = f64::INFINITY;
    for _ in 0..max_iterations {
        // (I + P̃)/2 has spectrum in [0, 1], so its top remaining eigenvalue
        // is 1 - λ/2.
        let pv = p.apply(&v);
        let mut next: Vec<f64> = v.iter().zip(&pv).map(|(a, b)| 0.5 * (a + b)).collect();
        deflate(&mut next);
        let mu: f64 = next.iter().zip(&v).map(|(a, b)| a * b).sum();
        if normalize(&mut next) == 0.0 {
            return Ok(2.0 * (1.0 - mu));
        }
        v = next;
        if (mu - previous).abs() <= tol {
            return Ok(2.0 * (1.0 - mu));
        }
        previous = mu;
    }
    Err(SpectralError::NoConvergence {
        iterations: max_iterations,
    })
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = libm::sqrt(v.iter().map(|a| a * a).sum());
    if norm > 0.0 {
        v.iter_mut().for_each(|a| *a /= norm);
    }
    norm
}

/// How the spectral gap in a report was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapMethod {
    DenseEigen,
    /// Power-iteration estimate; the bound check is then approximate.
    PowerIteration,
}

/// Outcome of [`check_convergence_bound`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub spectral_gap: f64,
    pub gap_method: GapMethod,
    pub approximate: bool,
    pub k_max: usize,
    pub signal_sum: f64,
    pub stationary_vector: Vec<f64>,
    /// `max_j |h(k)(j) - π(j)|` for `k = 0..=k_max`.
    pub per_step_deviation: Vec<f64>,
    /// `(Σ x)(1 - λ²/2)^k` for `k = 0..=k_max`.
    pub bound_curve: Vec<f64>,
    /// Rounding allowance added to the bound before comparing.
    pub slack: f64,
    /// `|h(k_max)(j) / π(j) - 1|` per node.
    pub node_relative_deviation: Vec<f64>,
    /// The per-node envelope `(Σ x)(1 - λ²/2)^k_max / π(j)`; shrinks like
    /// `1 / (d_j + 1)`.
    pub node_relative_envelope: Vec<f64>,
}

/// `(1 - λ²/2)^k` for `k = 0..=k_max`.
fn envelope(gap: f64, k_max: usize) -> Vec<f64> {
    let rate = 1.0 - gap * gap / 2.0;
    (0..=k_max).map(|k| libm::pow(rate, k as f64)).collect()
}

/// Compares lazy-walk propagation of `x` against `π ± (Σ x)(1 - λ²/2)^k`
/// for every node and every `k ≤ k_max`. A violation is an error: the
/// bound is a theorem, so a miss means a bug.
pub fn check_convergence_bound(g: &CsrGraph, x: &[f64], k_max: usize) -> Result<SpectralReport, SpectralError> {
    check_len(g.num_nodes(), x)?;
    check_nonnegative(x)?;
    require_connected(g)?;
    let (gap, gap_method) = if g.num_nodes() <= DENSE_LIMIT {
        (spectral_gap(&laplacian_operator(g))?, GapMethod::DenseEigen)
    } else {
        (spectral_gap_estimate(g, 1e-12, 100_000)?, GapMethod::PowerIteration)
    };
    convergence_report(g, x, k_max, gap, gap_method)
}

/// [`check_convergence_bound`] with a caller-supplied gap.
pub fn convergence_report(
    g: &CsrGraph,
    x: &[f64],
    k_max: usize,
    gap: f64,
    gap_method: GapMethod,
) -> Result<SpectralReport, SpectralError> {
    let pi = stationary_vector(g, x)?;
    let p = renormalized_operator(g);
    let walk = lazy_walk_propagate(&p, x, k_max)?;
    let signal_sum: f64 = x.iter().sum();
    let bound_curve: Vec<f64> = envelope(gap, k_max).into_iter().map(|e| signal_sum * e).collect();
    let slack = 1e-12 * signal_sum.max(1.0);
    let approximate = gap_method == GapMethod::PowerIteration;

    let mut per_step_deviation = Vec::with_capacity(k_max + 1);
    for (step, h) in walk.iter().enumerate() {
        let mut worst = 0.0f64;
        for (node, (a, b)) in h.iter().zip(&pi).enumerate() {
            let deviation = (a - b).abs();
            if !approximate && deviation > bound_curve[step] + slack {
                return Err(SpectralError::BoundViolation {
                    step,
                    node,
                    deviation,
                    bound: bound_curve[step],
                });
            }
            worst = worst.max(deviation);
        }
        per_step_deviation.push(worst);
    }

    let last = &walk[k_max];
    let node_relative_deviation = last
        .iter()
        .zip(&pi)
        .map(|(h, s)| if *s > 0.0 { (h / s - 1.0).abs() } else { 0.0 })
        .collect();
    let node_relative_envelope = pi
        .iter()
        .map(|s| if *s > 0.0 { bound_curve[k_max] / s } else { 0.0 })
        .collect();

    Ok(SpectralReport {
        spectral_gap: gap,
        gap_method,
        approximate,
        k_max,
        signal_sum,
        stationary_vector: pi,
        per_step_deviation,
        bound_curve,
        slack,
        node_relative_deviation,
        node_relative_envelope,
    })
}

/// Outcome of [`check_walk_bound`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkBoundReport {
    pub spectral_gap: f64,
    pub k_max: usize,
    /// Number of `(start, node, step)` triples compared.
    pub checks: usize,
    /// Largest `deviation / bound` seen; at most 1 when the bound holds.
    pub tightest_ratio: f64,
}

/// Checks `|p_i(k)(j) - (d_j+1)/(2m+n)| ≤ sqrt((d_j+1)/(d_i+1)) (1 - λ²/2)^k`
/// for every start `i`, node `j` and `k ≤ k_max`, where `p_i(k)` is the
/// distribution of the lazy walk `(I + Ã D̃^{-1}) / 2` started at `i`.
pub fn check_walk_bound(g: &CsrGraph, k_max: usize) -> Result<WalkBoundReport, SpectralError> {
    require_connected(g)?;
    let n = g.num_nodes();
    let gap = spectral_gap(&laplacian_operator(g))?;
    let rate = envelope(gap, k_max);
    let deg: Vec<f64> = g.degrees().iter().map(|&d| (d + 1) as f64).collect();
    let volume: f64 = deg.iter().sum();

    // Column i of `walk` is p_i(k), starting from the identity.
    let mut walk = Matrix::identity(n);
    let mut next = Matrix::zeros(n, n);
    let mut checks = 0;
    let mut tightest = 0.0f64;
    for (step, r) in rate.iter().enumerate() {
        if step > 0 {
            // next[j][i] = (walk[j][i] + Σ_{l ∈ N(j) ∪ {j}} walk[l][i] / deg[l]) / 2
            for j in 0..n {
                let out = next.row_mut(j);
                out.copy_from_slice(walk.row(j));
                let mut add_scaled = |l: usize| {
                    let src = walk.row(l);
                    let s = 1.0 / deg[l];
                    out.iter_mut().zip(src).for_each(|(o, v)| *o += s * v);
                };
                add_scaled(j);
                for &l in g.neighbors(j) {
                    add_scaled(l);
                }
                out.iter_mut().for_each(|o| *o *= 0.5);
            }
            core::mem::swap(&mut walk, &mut next);
        }
        for j in 0..n {
            let target = deg[j] / volume;
            for i in 0..n {
                let deviation = (walk.get(j, i) - target).abs();
                let bound = libm::sqrt(deg[j] / deg[i]) * r;
                if deviation > bound + 1e-12 {
                    return Err(SpectralError::WalkBoundViolation {
                        step,
                        start: i,
                        node: j,
                        deviation,
                        bound,
                    });
                }
                if bound > 0.0 {
                    tightest = tightest.max(deviation / bound);
                }
                checks += 1;
            }
        }
    }
    Ok(WalkBoundReport {
        spectral_gap: gap,
        k_max,
        checks,
        tightest_ratio: tightest,
    })
}

/// Binomial coefficients `C(k, l)` for `k, l < order`, as `f64`.
fn binomials(order: usize) -> Vec<Vec<f64>> {
    let mut c = vec![vec![0.0; order]; order];
    for k in 0..order {
        c[k][0] = 1.0;
        for l in 1..=k {
            c[k][l] = c[k - 1][l - 1] + if l < k { c[k - 1][l] } else { 0.0 };
        }
    }
    c
}

/// Coefficients of `Σ θ_k L̃^k` rewritten in powers of `P̃ = I - L̃`:
/// `c_l = (-1)^l Σ_{k ≥ l} θ_k C(k, l)`.
pub fn propagation_coefficients(theta: &[f64]) -> Vec<f64> {
    let c = binomials(theta.len());
    (0..theta.len())
        .map(|l| {
            let s: f64 = (l..theta.len()).map(|k| theta[k] * c[k][l]).sum();
            if l % 2 == 0 {
                s
            } else {
                -s
            }
        })
        .collect()
}

/// Inverse of [`propagation_coefficients`]: `θ'` in powers of `P̃` to `θ` in
/// powers of `L̃`. The map `P̃ ↔ L̃` is an involution up to sign, so this is
/// the same formula.
pub fn theta_from_propagation_basis(theta_prime: &[f64]) -> Vec<f64> {
    propagation_coefficients(theta_prime)
}

/// Polynomial filter `Σ_{k<K} θ_k L̃^k` and, once recovered, the layer
/// weights `γ` of the linear deep network that realizes it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub order: usize,
    pub theta: Vec<f64>,
    pub gamma: Option<Vec<f64>>,
    pub degenerate_flags: Vec<bool>,
}

impl FilterSpec {
    pub fn new(theta: Vec<f64>) -> Result<Self, SpectralError> {
        if theta.is_empty() {
            return Err(SpectralError::EmptyFilter);
        }
        Ok(Self {
            order: theta.len(),
            degenerate_flags: vec![false; theta.len()],
            theta,
            gamma: None,
        })
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate_flags.iter().any(|&f| f)
    }
}

/// Solves `Π_{k=K-l-1}^{K-1} γ_k = c_l` for `l = 0..K` by successive ratios
/// `γ_{K-1} = c_0`, `γ_{K-l-1} = c_l / c_{l-1}`.
///
/// A ratio whose denominator is below [`DEGENERATE_DENOMINATOR`] is flagged
/// and replaced by `±DEGENERATE_GAMMA`, signed like the numerator.
pub fn recover_gamma(spec: &FilterSpec) -> FilterSpec {
    let k = spec.order;
    let c = propagation_coefficients(&spec.theta);
    let mut gamma = vec![0.0; k];
    let mut flags = vec![false; k];
    gamma[k - 1] = c[0];
    for l in 1..k {
        let index = k - l - 1;
        if c[l - 1].abs() < DEGENERATE_DENOMINATOR {
            flags[index] = true;
            gamma[index] = if c[l] < 0.0 { -DEGENERATE_GAMMA } else { DEGENERATE_GAMMA };
        } else {
            gamma[index] = c[l] / c[l - 1];
        }
    }
    FilterSpec {
        order: k,
        theta: spec.theta.clone(),
        gamma: Some(gamma),
        degenerate_flags: flags,
    }
}

/// `Π_{k=K-l-1}^{K-1} γ_k` for `l = 0..K`.
pub fn gamma_partial_products(gamma: &[f64]) -> Vec<f64> {
    let k = gamma.len();
    let mut acc = 1.0;
    (0..k)
        .map(|l| {
            acc *= gamma[k - 1 - l];
            acc
        })
        .collect()
}

/// Linear (ReLU removed) deep network with `α = 1/2` and weight `γ_l I`
/// whose output is `Σ_{l<K} (Π_{k=K-l-1}^{K-1} γ_k) P̃^l x`.
///
/// `K - 1` propagation layers `H <- γ_k P̃ (H + x)` from `H = 0`, then the
/// readout `γ_{K-1} (H + x)`. The factor 2 from `α = 1/2` is folded into `γ`.
pub fn linear_gcnii_filter(p: &PropMatrix, x: &[f64], gamma: &[f64]) -> Result<Vec<f64>, SpectralError> {
    require_kind(p, PropKind::Renormalized)?;
    check_len(p.dim(), x)?;
    check_nonnegative(x)?;
    let k = gamma.len();
    if k == 0 {
        return Err(SpectralError::EmptyFilter);
    }
    let mut h = vec![0.0; x.len()];
    for &g in &gamma[..k - 1] {
        let s: Vec<f64> = h.iter().zip(x).map(|(a, b)| a + b).collect();
        h = p.apply(&s).into_iter().map(|v| g * v).collect();
    }
    Ok(h.iter().zip(x).map(|(a, b)| gamma[k - 1] * (a + b)).collect())
}

/// The recursion `H <- γ_l P̃ (H + x)` run for all `K` layers from `H = 0`,
/// without a separate readout. Equals `P̃` applied to
/// [`linear_gcnii_filter`], i.e. the filter shifted up one power.
pub fn linear_gcnii_recursion(p: &PropMatrix, x: &[f64], gamma: &[f64]) -> Result<Vec<f64>, SpectralError> {
    require_kind(p, PropKind::Renormalized)?;
    check_len(p.dim(), x)?;
    check_nonnegative(x)?;
    let mut h = vec![0.0; x.len()];
    for &g in gamma {
        let s: Vec<f64> = h.iter().zip(x).map(|(a, b)| a + b).collect();
        h = p.apply(&s).into_iter().map(|v| g * v).collect();
    }
    Ok(h)
}

/// `(Σ_k θ_k L̃^k) x` by Horner's rule.
pub fn poly_filter_oracle(laplacian: &PropMatrix, x: &[f64], theta: &[f64]) -> Result<Vec<f64>, SpectralError> {
    require_kind(laplacian, PropKind::Laplacian)?;
    check_len(laplacian.dim(), x)?;
    let mut acc = vec![0.0; x.len()];
    for &t in theta.iter().rev() {
        let la = laplacian.apply(&acc);
        acc = la.iter().zip(x).map(|(a, b)| a + t * b).collect();
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterVerdict {
    Pass,
    Fail,
    /// A recovery denominator was flagged; the error is reported, not judged.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterCheck {
    pub filter: FilterSpec,
    pub max_error: f64,
    pub verdict: FilterVerdict,
}

/// Recovers `γ` for `θ`, runs the linear deep network and compares it with
/// the polynomial filter evaluated directly.
pub fn verify_filter_recovery(g: &CsrGraph, x: &[f64], theta: &[f64]) -> Result<FilterCheck, SpectralError> {
    let filter = recover_gamma(&FilterSpec::new(theta.to_vec())?);
    let gamma = filter.gamma.as_deref().expect("just recovered");
    let network = linear_gcnii_filter(&renormalized_operator(g), x, gamma)?;
    let oracle = poly_filter_oracle(&laplacian_operator(g), x, theta)?;
    let max_error = max_abs_diff(&network, &oracle);
    let verdict = if filter.is_degenerate() {
        FilterVerdict::Degenerate
    } else if max_error <= FILTER_TOLERANCE {
        FilterVerdict::Pass
    } else {
        FilterVerdict::Fail
    };
    Ok(FilterCheck {
        filter,
        max_error,
        verdict,
    })
}
