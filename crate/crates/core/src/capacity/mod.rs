//! Newtonian capacity of finite subsets of Z^d.
//!
//! `Cap(A) = sum_{x in A} P^x(tau_A = inf)`. The escape probabilities solve
//! `G q = 1` on `A`, so the capacity is the sum of the entries of `G^{-1}`.

mod dirichlet;
mod mc;
mod range;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::green::{GreenConfig, GreenKernel, GreenTable};
use crate::lattice::PointSet;
use crate::linalg::{
    backward_solve, cholesky, conjugate_gradient, forward_solve, packed_bytes, CgOptions,
    GreenOperator, PackedSym, Preconditioner, SymOp,
};
use crate::numeric::pairwise_sum;

pub use dirichlet::{
    box_capacity, dirichlet_oracle, dirichlet_oracle_with, BoxCapacity, DirichletOptions,
    Extrapolation,
};
pub use mc::{cap_mc, escape_count, McOptions};
pub use range::{
    cross_term, decompose, equal_blocks, range_capacity, CrossTerm, DecompositionReport,
};

/// How a capacity value was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ExactCholesky,
    ExactCg,
    DirichletOracle,
    McEscape,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::ExactCholesky => "exact-cholesky",
            Method::ExactCg => "exact-cg",
            Method::DirichletOracle => "dirichlet-oracle",
            Method::McEscape => "mc-escape",
        }
    }
}

/// A capacity value with its error model.
///
/// For exact methods `error` bounds `|value - Cap|` from the solver residual;
/// for Monte Carlo it is the standard error and `bias_bound` bounds the
/// truncation bias.
#[derive(Clone, Debug, Serialize)]
pub struct CapacityEstimate {
    pub value: f64,
    pub method: Method,
    pub error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias_bound: Option<f64>,
    pub k: usize,
    pub d: usize,
    pub meta: BTreeMap<String, Value>,
}

impl CapacityEstimate {
    fn new(value: f64, method: Method, error: f64, k: usize, d: usize) -> Self {
        CapacityEstimate {
            value,
            method,
            error,
            bias_bound: None,
            k,
            d,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.meta.insert(key.to_string(), value.into());
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("capacity estimate serializes")
    }

    /// Half-width of the interval that should contain the true capacity:
    /// `error` for exact methods, `z * error + bias_bound` for Monte Carlo.
    pub fn interval_half_width(&self, z: f64) -> f64 {
        match self.method {
            Method::McEscape => z * self.error + self.bias_bound.unwrap_or(0.0),
            _ => self.error,
        }
    }
}

/// Per-point escape probabilities of a deduplicated set.
#[derive(Clone, Debug)]
pub struct EquilibriumVector {
    pub points: PointSet,
    pub q: Vec<f64>,
}

impl EquilibriumVector {
    pub fn sum(&self) -> f64 {
        pairwise_sum(&self.q)
    }

    /// CSV with header `index,x1,..,xd,q`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.points.dim();
        let mut header = vec!["index".to_string()];
        header.extend((1..=d).map(|j| format!("x{j}")));
        header.push("q".into());
        writeln!(w, "{}", header.join(","))?;
        for (i, (p, q)) in self.points.iter().zip(&self.q).enumerate() {
            let coords: Vec<String> = p.iter().map(|c| c.to_string()).collect();
            writeln!(w, "{},{},{:.17e}", i, coords.join(","), q)?;
        }
        Ok(())
    }
}

/// Settings for the exact capacity solvers.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SolverOptions {
    /// Target for `||G q - 1||_inf`.
    pub tol: f64,
    /// Largest set solved by dense Cholesky.
    pub cholesky_max: usize,
    /// Largest packed Green matrix kept in memory, in bytes; beyond it CG
    /// recomputes entries on the fly.
    pub dense_budget: usize,
    /// Diagonal block size of the CG preconditioner.
    pub block: usize,
    /// Coarse aggregate size of the CG preconditioner.
    pub aggregate: Option<usize>,
    pub max_iter: usize,
    /// Largest range handed to the exact solver by range capacities.
    pub max_points: usize,
    /// Use Monte Carlo for ranges above `max_points` instead of refusing.
    pub allow_mc_fallback: bool,
    /// Walks per point of the Monte Carlo fallback.
    pub mc_replicas: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-9,
            cholesky_max: 2000,
            dense_budget: 2 << 30,
            block: 256,
            aggregate: Some(32),
            max_iter: 5000,
            max_points: 40_000,
            allow_mc_fallback: false,
            mc_replicas: 10_000,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolverOptions {
            tol,
            ..Self::default()
        }
    }
}

fn zero_estimate(d: usize) -> CapacityEstimate {
    CapacityEstimate::new(0.0, Method::ExactCholesky, 0.0, 0, d)
}

fn check_dim(set: &PointSet, table: &GreenTable) -> Result<()> {
    if set.dim() != table.dim() {
        return Err(Error::DimensionMismatch {
            expected: table.dim(),
            got: set.dim(),
        });
    }
    Ok(())
}

fn green_matrix(set: &PointSet, kernel: &GreenKernel) -> PackedSym {
    let d = set.dim();
    let flat = set.flat();
    PackedSym::from_fn(set.len(), |i, j| {
        kernel.between(&flat[i * d..i * d + d], &flat[j * d..j * d + d])
    })
}

fn residual_inf(op: &dyn SymOp, q: &[f64]) -> f64 {
    let mut y = vec![0.0; q.len()];
    op.apply(q, &mut y);
    y.iter().fold(0.0f64, |m, v| m.max((1.0 - v).abs()))
}

/// Exact capacity with default solver settings and residual target `tol`.
pub fn cap_exact(
    set: &PointSet,
    table: &GreenTable,
    tol: f64,
) -> Result<(CapacityEstimate, EquilibriumVector)> {
    cap_exact_with(set, table, &SolverOptions::with_tol(tol))
}

/// Exact capacity: solves `G q = 1` on the deduplicated points.
///
/// If the Green matrix fails to be positive definite, the solve is retried
/// once with a tighter Green table before the error is returned.
pub fn cap_exact_with(
    set: &PointSet,
    table: &GreenTable,
    opts: &SolverOptions,
) -> Result<(CapacityEstimate, EquilibriumVector)> {
    check_dim(set, table)?;
    let pts = set.deduplicated();
    if pts.is_empty() {
        return Ok((
            zero_estimate(set.dim()),
            EquilibriumVector {
                points: pts,
                q: vec![],
            },
        ));
    }
    match solve(&pts, table, opts) {
        Err(Error::NotPositiveDefinite { .. }) => {
            let cfg = table.config();
            let tight = GreenTable::with_config(GreenConfig {
                tolerance: cfg.tolerance / 100.0,
                switch_radius: cfg.switch_radius * 2.0,
                ..cfg
            })?;
            let (est, q) = solve(&pts, &tight, opts)?;
            Ok((est.with_meta("green_tightened", true), q))
        }
        other => other,
    }
}

fn solve(
    pts: &PointSet,
    table: &GreenTable,
    opts: &SolverOptions,
) -> Result<(CapacityEstimate, EquilibriumVector)> {
    let k = pts.len();
    let d = pts.dim();
    let kernel = table.kernel_for(pts)?;
    let ones = vec![1.0; k];
    let (q, method, iterations, residual) = if k <= opts.cholesky_max {
        let a = green_matrix(pts, &kernel);
        let l = cholesky(&a.view())?;
        let q = backward_solve(&l.view(), &forward_solve(&l.view(), &ones));
        let res = residual_inf(&a.view(), &q);
        (q, Method::ExactCholesky, 0, res)
    } else if packed_bytes(k) <= opts.dense_budget {
        let a = green_matrix(pts, &kernel);
        let out = run_cg(&a.view(), &ones, opts)?;
        (out.x, Method::ExactCg, out.iterations, out.residual)
    } else {
        let op = GreenOperator::new(d, pts.flat(), &kernel);
        let out = run_cg(&op, &ones, opts)?;
        (out.x, Method::ExactCg, out.iterations, out.residual)
    };
    if !(residual <= opts.tol.max(1e-12)) {
        return Err(Error::NoConvergence {
            iterations,
            residual,
        });
    }
    let value = pairwise_sum(&q);
    let est = CapacityEstimate::new(value, method, value.abs() * residual, k, d)
        .with_meta("iterations", iterations)
        .with_meta("residual", residual)
        .with_meta("tol", opts.tol);
    Ok((
        est,
        EquilibriumVector {
            points: pts.clone(),
            q,
        },
    ))
}

fn run_cg(op: &dyn SymOp, b: &[f64], opts: &SolverOptions) -> Result<crate::linalg::CgOutcome> {
    let pre = Preconditioner::new(op, opts.block, opts.aggregate)?;
    conjugate_gradient(
        op,
        b,
        CgOptions {
            tol: opts.tol,
            max_iter: opts.max_iter,
        },
        Some(&pre),
    )
}

/// Capacities of the leading `sizes[i]` points of `set`, which must be free of
/// repeats. With first-visit ordering these are the capacities of the
/// ranges up to the corresponding times.
pub fn prefix_capacities(
    set: &PointSet,
    sizes: &[usize],
    table: &GreenTable,
    opts: &SolverOptions,
) -> Result<Vec<CapacityEstimate>> {
    check_dim(set, table)?;
    if set.has_repeats() {
        return Err(Error::InvalidParameter(
            "prefix capacities need a set without repeats".into(),
        ));
    }
    let k = set.len();
    let d = set.dim();
    if let Some(&bad) = sizes.iter().find(|&&m| m > k) {
        return Err(Error::Index(format!(
            "prefix of size {bad} in a set of {k} points"
        )));
    }
    let top = sizes.iter().copied().max().unwrap_or(0);
    if top == 0 {
        return Ok(sizes.iter().map(|_| zero_estimate(d)).collect());
    }
    let head = PointSet::from_flat(d, &set.flat()[..top * d])?;
    let kernel = table.kernel_for(&head)?;
    if top <= opts.cholesky_max || packed_bytes(top) <= opts.dense_budget {
        let a = green_matrix(&head, &kernel);
        if top <= opts.cholesky_max {
            let l = cholesky(&a.view())?;
            let w = forward_solve(&l.view(), &vec![1.0; top]);
            let sq: Vec<f64> = w.iter().map(|v| v * v).collect();
            return sizes
                .iter()
                .map(|&m| {
                    if m == 0 {
                        return Ok(zero_estimate(d));
                    }
                    let lv = l.leading(m);
                    let q = backward_solve(&lv, &w[..m]);
                    let res = residual_inf(&a.leading(m), &q);
                    let value = pairwise_sum(&sq[..m]);
                    if !(res <= opts.tol.max(1e-12)) {
                        return Err(Error::NoConvergence {
                            iterations: 0,
                            residual: res,
                        });
                    }
                    Ok(
                        CapacityEstimate::new(value, Method::ExactCholesky, value * res, m, d)
                            .with_meta("residual", res)
                            .with_meta("tol", opts.tol),
                    )
                })
                .collect();
        }
        return sizes
            .iter()
            .map(|&m| {
                if m == 0 {
                    return Ok(zero_estimate(d));
                }
                cg_estimate(&a.leading(m), m, d, opts)
            })
            .collect();
    }
    sizes
        .iter()
        .map(|&m| {
            if m == 0 {
                return Ok(zero_estimate(d));
            }
            let op = GreenOperator::new(d, &head.flat()[..m * d], &kernel);
            cg_estimate(&op, m, d, opts)
        })
        .collect()
}

fn cg_estimate(
    op: &dyn SymOp,
    m: usize,
    d: usize,
    opts: &SolverOptions,
) -> Result<CapacityEstimate> {
    let out = run_cg(op, &vec![1.0; m], opts)?;
    let value = pairwise_sum(&out.x);
    Ok(
        CapacityEstimate::new(value, Method::ExactCg, value * out.residual, m, d)
            .with_meta("iterations", out.iterations)
            .with_meta("residual", out.residual)
            .with_meta("tol", opts.tol),
    )
}

/// Green sums `s_l = sum_i m_i G(x_i, x_l)` over the multiset, one per distinct point.
fn column_sums(set: &PointSet, others: &PointSet, kernel: &GreenKernel) -> Vec<f64> {
    let d = set.dim();
    (0..set.len())
        .into_par_iter()
        .map(|l| {
            let x = set.point(l);
            let terms: Vec<f64> = (0..others.len())
                .map(|i| others.multiplicity(i) as f64 * kernel.between(others.point(i), x))
                .collect();
            let _ = d;
            pairwise_sum(&terms)
        })
        .collect()
}

/// Lower and upper bounds `j / max_l s_l <= Cap <= j / min_l s_l`, where
/// `s_l = sum_i G(x_i, x_l)` over the raw multiset of `j` points.
pub fn cap_bounds(set: &PointSet, table: &GreenTable) -> Result<(f64, f64)> {
    check_dim(set, table)?;
    if set.is_empty() {
        return Err(Error::Empty("cap_bounds of an empty set"));
    }
    let kernel = table.kernel_for(set)?;
    let sums = column_sums(set, set, &kernel);
    let j = set.total_multiplicity() as f64;
    let max = sums.iter().cloned().fold(f64::MIN, f64::max);
    let min = sums.iter().cloned().fold(f64::MAX, f64::min);
    Ok((j / max, j / min))
}

/// Upper bound `Cap(Z2) + (j1 + j2) / min_{x in Z1 \ Z2} sum_i G(x_i, x)`
/// for `Cap(Z1 u Z2)`, with the sum over the concatenated multiset.
///
/// Returns the bound together with the exact `Cap(Z2)` estimate it uses.
pub fn cap_union_bound(
    z1: &PointSet,
    z2: &PointSet,
    table: &GreenTable,
    tol: f64,
) -> Result<(f64, CapacityEstimate)> {
    check_dim(z1, table)?;
    check_dim(z2, table)?;
    if z1.is_empty() || z2.is_empty() {
        return Err(Error::Empty("cap_union_bound needs two nonempty sets"));
    }
    let (c2, _) = cap_exact(z2, table, tol)?;
    let only1 = z1.difference(z2)?;
    if only1.is_empty() {
        return Ok((c2.value, c2));
    }
    let all = z1.union(z2)?;
    let kernel = table.kernel_for_pair(&only1, &all)?;
    let sums = column_sums(&only1, &all, &kernel);
    let min = sums.iter().cloned().fold(f64::MAX, f64::min);
    let j = all.total_multiplicity() as f64;
    Ok((c2.value + j / min, c2))
}

/// Brownian capacity of a ball of radius `r` in R^3: `2 pi r`.
pub fn brownian_ball_capacity(r: f64, dim: usize) -> Result<f64> {
    if dim != 3 {
        return Err(Error::InvalidParameter(format!(
            "Brownian ball capacity is implemented for d = 3, not {dim}"
        )));
    }
    if !(r >= 0.0) {
        return Err(Error::Domain(format!("radius {r} < 0")));
    }
    Ok(2.0 * PI * r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedPolicy;
    use rand::Rng;

    const G0_D3: f64 = 1.516_386_059_151_978;

    fn random_set(d: usize, k: usize, side: i64, seed: u64) -> PointSet {
        let mut rng = SeedPolicy::new(seed).rng();
        let pts: Vec<Vec<i64>> = (0..k)
            .map(|_| (0..d).map(|_| rng.gen_range(0..side)).collect())
            .collect();
        PointSet::from_points(d, pts).unwrap()
    }

    #[test]
    fn empty_and_singleton() {
        let t = GreenTable::new(3).unwrap();
        let (e, q) = cap_exact(&PointSet::empty(3), &t, 1e-9).unwrap();
        assert_eq!(e.value, 0.0);
        assert!(q.q.is_empty());
        let one = PointSet::from_points(3, [[4i64, -2, 7]]).unwrap();
        let (c, q) = cap_exact(&one, &t, 1e-9).unwrap();
        assert!((c.value - 1.0 / G0_D3).abs() < 1e-12);
        assert!((c.value - 0.659_463).abs() < 1e-6);
        assert_eq!(q.q.len(), 1);
        let (lo, hi) = cap_bounds(&one, &t).unwrap();
        assert!((lo - c.value).abs() < 1e-14 && (hi - c.value).abs() < 1e-14);
    }

    #[test]
    fn duplicates_do_not_change_capacity() {
        let t = GreenTable::new(3).unwrap();
        let a = PointSet::from_points(
            3,
            [[0i64, 0, 0], [1, 0, 0], [0, 0, 0], [3, 1, 0], [1, 0, 0]],
        )
        .unwrap();
        let b = a.deduplicated();
        let (ca, _) = cap_exact(&a, &t, 1e-9).unwrap();
        let (cb, _) = cap_exact(&b, &t, 1e-9).unwrap();
        assert_eq!(ca.value, cb.value);
    }

    #[test]
    fn equilibrium_vector_is_a_probability_vector() {
        let t = GreenTable::new(4).unwrap();
        let s = random_set(4, 40, 6, 3);
        let (c, q) = cap_exact(&s, &t, 1e-9).unwrap();
        assert!(q.q.iter().all(|&v| (-1e-9..=1.0 + 1e-9).contains(&v)));
        assert!((q.sum() - c.value).abs() < 1e-12);
        assert!(c.value <= s.len() as f64);
        let mut buf = Vec::new();
        q.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("index,x1,x2,x3,x4,q\n"));
        assert_eq!(text.lines().count(), s.len() + 1);
    }

    #[test]
    fn cg_agrees_with_cholesky() {
        let t = GreenTable::new(3).unwrap();
        let s = random_set(3, 300, 12, 5);
        let (a, _) = cap_exact(&s, &t, 1e-10).unwrap();
        let cg = SolverOptions {
            cholesky_max: 10,
            tol: 1e-10,
            ..SolverOptions::default()
        };
        let (b, _) = cap_exact_with(&s, &t, &cg).unwrap();
        assert_eq!(b.method, Method::ExactCg);
        assert!((a.value - b.value).abs() < 1e-7);
        let free = SolverOptions {
            dense_budget: 0,
            ..cg
        };
        let (c, _) = cap_exact_with(&s, &t, &free).unwrap();
        assert!((a.value - c.value).abs() < 1e-7);
    }

    #[test]
    fn prefix_capacities_match_direct_solves() {
        let t = GreenTable::new(3).unwrap();
        let s = random_set(3, 120, 9, 9).deduplicated();
        let sizes = [0usize, 1, 17, 60, s.len()];
        let chol = prefix_capacities(&s, &sizes, &t, &SolverOptions::default()).unwrap();
        let cg = prefix_capacities(
            &s,
            &sizes,
            &t,
            &SolverOptions {
                cholesky_max: 0,
                ..SolverOptions::default()
            },
        )
        .unwrap();
        for ((m, a), b) in sizes.iter().zip(&chol).zip(&cg) {
            let sub = PointSet::from_flat(3, &s.flat()[..m * 3]).unwrap();
            let (c, _) = cap_exact(&sub, &t, 1e-10).unwrap();
            assert!((a.value - c.value).abs() < 1e-9, "m={m}");
            assert!((b.value - c.value).abs() < 1e-6, "m={m}");
        }
    }

    #[test]
    fn bounds_bracket_random_set_in_box_of_side_10() {
        let t = GreenTable::new(3).unwrap();
        let s = random_set(3, 50, 10, 21);
        let (c, _) = cap_exact(&s, &t, 1e-9).unwrap();
        let (lo, hi) = cap_bounds(&s, &t).unwrap();
        assert!(
            lo <= c.value + 2e-9 && c.value <= hi + 2e-9,
            "{lo} {} {hi}",
            c.value
        );
    }

    #[test]
    fn union_bound_cases() {
        let t = GreenTable::new(3).unwrap();
        let z2 = random_set(3, 20, 8, 1);
        let z1 = PointSet::from_flat(3, &z2.flat()[..15]).unwrap();
        let (b, c2) = cap_union_bound(&z1, &z2, &t, 1e-9).unwrap();
        assert_eq!(b, c2.value);

        let far = PointSet::from_points(3, [[500i64, 0, 0]]).unwrap();
        let z1 = random_set(3, 20, 8, 2);
        let (b, c2) = cap_union_bound(&z1, &far, &t, 1e-9).unwrap();
        let (exact, _) = cap_exact(&z1.union(&far).unwrap(), &t, 1e-9).unwrap();
        assert!((c2.value - 1.0 / G0_D3).abs() < 1e-12);
        assert!(b >= exact.value - 2e-9);
    }

    #[test]
    fn brownian_ball() {
        assert!((brownian_ball_capacity(1.0, 3).unwrap() - 2.0 * PI).abs() < 1e-15);
        assert_eq!(brownian_ball_capacity(0.0, 3).unwrap(), 0.0);
        assert!((brownian_ball_capacity(2.0, 3).unwrap() - 4.0 * PI).abs() < 1e-15);
        assert!(brownian_ball_capacity(-1.0, 3).is_err());
    }

    #[test]
    fn estimate_json_shape() {
        let t = GreenTable::new(3).unwrap();
        let (c, _) =
            cap_exact(&PointSet::from_points(3, [[0i64, 0, 0]]).unwrap(), &t, 1e-9).unwrap();
        let v: Value = serde_json::from_str(&c.to_json()).unwrap();
        for key in ["value", "method", "error", "k", "d", "meta"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["method"], "exact-cholesky");
        assert!(v.get("bias_bound").is_none());
    }
}
