//! Capacities of random walk ranges and the block decomposition
//! `R_{n_k} = sum_j U_j - Delta`.

use serde::Serialize;

use super::{
    cap_exact_with, cap_mc, prefix_capacities, zero_estimate, CapacityEstimate, McOptions,
    SolverOptions,
};
use crate::error::{Error, Result};
use crate::green::GreenTable;
use crate::numeric::pairwise_sum;
use crate::rng::SeedPolicy;
use crate::walks::WalkPath;

/// `R_{a,b} = Cap(R(a, b])`.
///
/// Ranges larger than `opts.max_points` are refused unless
/// `opts.allow_mc_fallback` is set, in which case the Monte Carlo estimator
/// with `opts.mc_replicas` walks per point is used.
pub fn range_capacity(
    path: &WalkPath,
    a: usize,
    b: usize,
    table: &GreenTable,
    opts: &SolverOptions,
) -> Result<CapacityEstimate> {
    let range = path.range_of(a, b)?;
    if range.is_empty() {
        return Ok(zero_estimate(path.dim()));
    }
    if range.len() > opts.max_points {
        if !opts.allow_mc_fallback {
            return Err(Error::Budget {
                size: range.len(),
                budget: opts.max_points,
            });
        }
        let seed = path
            .seed()
            .unwrap_or(SeedPolicy::new(0))
            .lane((a as u64) << 32 | b as u64);
        let mc = McOptions {
            seed,
            replicas: opts.mc_replicas,
            ..McOptions::default()
        };
        return cap_mc(&range.set, table, &mc);
    }
    Ok(cap_exact_with(&range.set, table, opts)?.0)
}

/// `V_{a,b,c} = R_{a,b} + R_{b,c} - R_{a,c}` together with its parts.
#[derive(Clone, Debug, Serialize)]
pub struct CrossTerm {
    pub value: f64,
    /// Sum of the error bounds of the three capacities.
    pub error: f64,
    pub r_ab: f64,
    pub r_bc: f64,
    pub r_ac: f64,
}

pub fn cross_term(
    path: &WalkPath,
    a: usize,
    b: usize,
    c: usize,
    table: &GreenTable,
    opts: &SolverOptions,
) -> Result<CrossTerm> {
    if !(a <= b && b <= c && c <= path.len()) {
        return Err(Error::Index(format!(
            "need a <= b <= c <= {}, got ({a}, {b}, {c})",
            path.len()
        )));
    }
    let ab = range_capacity(path, a, b, table, opts)?;
    let bc = range_capacity(path, b, c, table, opts)?;
    let ac = range_capacity(path, a, c, table, opts)?;
    Ok(CrossTerm {
        value: ab.value + bc.value - ac.value,
        error: ab.error + bc.error + ac.error,
        r_ab: ab.value,
        r_bc: bc.value,
        r_ac: ac.value,
    })
}

/// Block decomposition of `R_{0,n_k}` at breakpoints `0 = n_0 < ... < n_k`.
#[derive(Clone, Debug, Serialize)]
pub struct DecompositionReport {
    pub breakpoints: Vec<usize>,
    /// `U_j = R_{n_{j-1}, n_j}`, `j = 1..k`.
    pub blocks: Vec<f64>,
    /// `R_{0, n_k}`.
    pub total: f64,
    /// `sum_j U_j - R_{0, n_k}`.
    pub delta: f64,
    /// `R_{0, n_j}`, `j = 1..k`.
    pub prefix: Vec<f64>,
    /// `R_{n_j, n_k}`, `j = 0..k-1`.
    pub suffix: Vec<f64>,
    /// `V_{0, n_j, n_{j+1}}`, `j = 1..k-1`.
    pub v_steps: Vec<f64>,
    /// `V_{n_{j-1}, n_j, n_k}`, `j = 1..k-1`.
    pub v_def: Vec<f64>,
    /// `sum v_steps`.
    pub delta_steps: f64,
    /// `sum v_def`.
    pub delta_def: f64,
    /// Tolerance for the identities: `(k + 1)` times the largest capacity error.
    pub tolerance: f64,
    /// Largest error bound among the capacities used.
    pub max_error: f64,
}

impl DecompositionReport {
    pub fn k(&self) -> usize {
        self.blocks.len()
    }

    /// `|R - sum U + Delta|` with `Delta` from the step sums.
    pub fn identity_residual(&self) -> f64 {
        (self.total - pairwise_sum(&self.blocks) + self.delta_steps).abs()
    }

    /// Largest disagreement among the three ways of computing `Delta`.
    pub fn delta_spread(&self) -> f64 {
        let v = [self.delta, self.delta_steps, self.delta_def];
        let max = v.iter().cloned().fold(f64::MIN, f64::max);
        let min = v.iter().cloned().fold(f64::MAX, f64::min);
        max - min
    }

    /// Identity within tolerance, the three forms of `Delta` agree and
    /// `Delta >= -tolerance`.
    pub fn consistent(&self) -> bool {
        self.identity_residual() <= self.tolerance
            && self.delta_spread() <= self.tolerance
            && self.delta >= -self.tolerance
    }
}

/// Computes every capacity of the decomposition at the given breakpoints.
///
/// Prefix capacities come from one factorisation (or one matrix) of the full
/// range ordered by first visit.
pub fn decompose(
    path: &WalkPath,
    breakpoints: &[usize],
    table: &GreenTable,
    opts: &SolverOptions,
) -> Result<DecompositionReport> {
    if breakpoints.len() < 2 || breakpoints[0] != 0 {
        return Err(Error::InvalidParameter(
            "breakpoints must start at 0 and contain at least one block".into(),
        ));
    }
    if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(format!(
            "breakpoints not strictly increasing: {breakpoints:?}"
        )));
    }
    let k = breakpoints.len() - 1;
    let n = breakpoints[k];
    if n > path.len() {
        return Err(Error::Index(format!(
            "breakpoint {n} beyond path of length {}",
            path.len()
        )));
    }
    let (range, times) = path.range_with_times(0, n)?;
    if range.len() > opts.max_points {
        return Err(Error::Budget {
            size: range.len(),
            budget: opts.max_points,
        });
    }
    let sizes: Vec<usize> = breakpoints[1..]
        .iter()
        .map(|&b| times.partition_point(|&t| t <= b))
        .collect();
    let prefix_est = prefix_capacities(&range.set, &sizes, table, opts)?;
    let blocks_est = breakpoints
        .windows(2)
        .map(|w| range_capacity(path, w[0], w[1], table, opts))
        .collect::<Result<Vec<_>>>()?;
    let mut suffix_est = Vec::with_capacity(k);
    suffix_est.push(prefix_est[k - 1].clone());
    for &b in &breakpoints[1..k] {
        suffix_est.push(range_capacity(path, b, n, table, opts)?);
    }

    let max_error = prefix_est
        .iter()
        .chain(&blocks_est)
        .chain(&suffix_est)
        .map(|e| e.error)
        .fold(0.0, f64::max);
    let prefix: Vec<f64> = prefix_est.iter().map(|e| e.value).collect();
    let blocks: Vec<f64> = blocks_est.iter().map(|e| e.value).collect();
    let suffix: Vec<f64> = suffix_est.iter().map(|e| e.value).collect();
    let total = prefix[k - 1];
    let delta = pairwise_sum(&blocks) - total;
    let v_steps: Vec<f64> = (1..k)
        .map(|j| prefix[j - 1] + blocks[j] - prefix[j])
        .collect();
    let v_def: Vec<f64> = (1..k)
        .map(|j| blocks[j - 1] + suffix[j] - suffix[j - 1])
        .collect();
    let delta_steps = pairwise_sum(&v_steps);
    let delta_def = pairwise_sum(&v_def);
    Ok(DecompositionReport {
        breakpoints: breakpoints.to_vec(),
        blocks,
        total,
        delta,
        prefix,
        suffix,
        v_steps,
        v_def,
        delta_steps,
        delta_def,
        tolerance: (k + 1) as f64 * max_error.max(opts.tol),
        max_error,
    })
}

/// `n_j = j n / k`, rounded down.
pub fn equal_blocks(n: usize, k: usize) -> Vec<usize> {
    (0..=k).map(|j| j * n / k.max(1)).collect()
}
