//! Symmetric positive-definite solvers for Green matrices.
//!
//! Matrices are stored as packed lower triangles (row `i` holds columns
//! `0..=i`), so the leading `m x m` block of a stored matrix is itself a
//! packed matrix and can be solved without copying.
//!
//! Every reduction uses a fixed blocking that does not depend on the number
//! of threads, so results are bit-identical under any rayon pool size.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::green::GreenKernel;
use crate::numeric::{dot4, pairwise_dot, pairwise_sum};

/// Number of row blocks used by parallel matrix-vector products.
const MATVEC_BLOCKS: usize = 16;

/// Symmetric linear operator.
pub trait SymOp: Sync {
    fn size(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn entry(&self, i: usize, j: usize) -> f64;

    /// `Z^T A Z` for aggregates of `g` consecutive indices.
    fn aggregate_sums(&self, g: usize) -> PackedSym {
        let n = self.size();
        let na = n.div_ceil(g);
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut acc = vec![0.0; na];
                for j in 0..n {
                    acc[j / g] += self.entry(i, j);
                }
                acc
            })
            .collect();
        let mut full = vec![0.0; na * na];
        for (i, row) in rows.iter().enumerate() {
            let a = i / g;
            for (b, v) in row.iter().enumerate() {
                full[a * na + b] += v;
            }
        }
        PackedSym::from_fn(na, |a, b| full[a * na + b])
    }
}

#[inline]
fn row_offset(i: usize) -> usize {
    i * (i + 1) / 2
}

/// Bytes needed to store an `n x n` packed symmetric matrix.
pub fn packed_bytes(n: usize) -> usize {
    row_offset(n) * std::mem::size_of::<f64>()
}

/// Packed lower triangle of a symmetric matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct PackedSym {
    n: usize,
    data: Vec<f64>,
}

impl PackedSym {
    /// Fills entry `(i, j)`, `j <= i`, from `f`. Rows are filled in parallel.
    pub fn from_fn<F>(n: usize, f: F) -> Self
    where
        F: Fn(usize, usize) -> f64 + Sync,
    {
        let mut data = vec![0.0; row_offset(n)];
        let mut rows: Vec<(usize, &mut [f64])> = Vec::with_capacity(n);
        let mut rest: &mut [f64] = &mut data;
        for i in 0..n {
            let (row, tail) = rest.split_at_mut(i + 1);
            rows.push((i, row));
            rest = tail;
        }
        rows.into_par_iter().for_each(|(i, row)| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = f(i, j);
            }
        });
        PackedSym { n, data }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        self.data[row_offset(i) + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[row_offset(i)..row_offset(i + 1)]
    }

    /// The leading `m x m` block.
    pub fn leading(&self, m: usize) -> PackedView<'_> {
        assert!(m <= self.n);
        PackedView {
            n: m,
            data: &self.data[..row_offset(m)],
        }
    }

    pub fn view(&self) -> PackedView<'_> {
        self.leading(self.n)
    }
}

/// Borrowed packed symmetric matrix.
#[derive(Clone, Copy, Debug)]
pub struct PackedView<'a> {
    n: usize,
    data: &'a [f64],
}

impl<'a> PackedView<'a> {
    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.data[row_offset(i)..row_offset(i + 1)]
    }
}

/// Row boundaries splitting a lower triangle into blocks of similar area.
fn triangle_blocks(n: usize, blocks: usize) -> Vec<usize> {
    let mut cuts = vec![0];
    let total = row_offset(n) as f64;
    for b in 1..blocks {
        let target = total * b as f64 / blocks as f64;
        let r = ((2.0 * target).sqrt()).round() as usize;
        let r = r.clamp(*cuts.last().unwrap(), n);
        cuts.push(r);
    }
    cuts.push(n);
    cuts.dedup();
    cuts
}

impl SymOp for PackedView<'_> {
    fn size(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n;
        let cuts = triangle_blocks(n, MATVEC_BLOCKS);
        let parts: Vec<Vec<f64>> = cuts
            .par_windows(2)
            .map(|w| {
                let (lo, hi) = (w[0], w[1]);
                let mut part = vec![0.0; hi];
                for i in lo..hi {
                    let row = self.row(i);
                    let xi = x[i];
                    part[i] += dot4(&row[..i], &x[..i]) + row[i] * xi;
                    for (p, a) in part[..i].iter_mut().zip(&row[..i]) {
                        *p += a * xi;
                    }
                }
                part
            })
            .collect();
        y[..n].fill(0.0);
        for part in &parts {
            for (yi, p) in y.iter_mut().zip(part) {
                *yi += p;
            }
        }
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        self.data[row_offset(i) + j]
    }

    fn aggregate_sums(&self, g: usize) -> PackedSym {
        let n = self.n;
        let na = n.div_ceil(g);
        let mut e = vec![0.0; na * na];
        e.par_chunks_mut(na).enumerate().for_each(|(a, out)| {
            for i in a * g..((a + 1) * g).min(n) {
                let row = self.row(i);
                for (b, o) in out.iter_mut().enumerate().take(a) {
                    *o += row[b * g..(b + 1) * g].iter().sum::<f64>();
                }
                out[a] += 2.0 * row[a * g..i].iter().sum::<f64>() + row[i];
            }
        });
        PackedSym::from_fn(na, |a, b| e[a * na + b])
    }
}

/// Green matrix of a point set, entries evaluated on the fly.
pub struct GreenOperator<'a> {
    dim: usize,
    points: &'a [i64],
    kernel: &'a GreenKernel,
}

impl<'a> GreenOperator<'a> {
    /// `points` is the flat coordinate array of the set.
    pub fn new(dim: usize, points: &'a [i64], kernel: &'a GreenKernel) -> Self {
        GreenOperator {
            dim,
            points,
            kernel,
        }
    }

    fn point(&self, i: usize) -> &[i64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }
}

impl SymOp for GreenOperator<'_> {
    fn size(&self) -> usize {
        self.points.len() / self.dim
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.size();
        y[..n].par_iter_mut().enumerate().for_each(|(i, yi)| {
            let p = self.point(i);
            let mut parts = Vec::with_capacity(n / 256 + 1);
            let mut start = 0;
            while start < n {
                let end = (start + 256).min(n);
                let mut acc = 0.0;
                for (j, xj) in x.iter().enumerate().take(end).skip(start) {
                    acc += self.kernel.between(p, self.point(j)) * xj;
                }
                parts.push(acc);
                start = end;
            }
            *yi = pairwise_sum(&parts);
        });
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self.kernel.between(self.point(i), self.point(j))
    }
}

/// Cholesky factor `L` (packed lower) with `A = L L^T`.
pub fn cholesky(a: &PackedView<'_>) -> Result<PackedSym> {
    let n = a.n;
    let mut l = PackedSym {
        n,
        data: a.data.to_vec(),
    };
    for i in 0..n {
        let oi = row_offset(i);
        for j in 0..=i {
            let oj = row_offset(j);
            let s = dot4(&l.data[oi..oi + j], &l.data[oj..oj + j]);
            let v = l.data[oi + j] - s;
            if j == i {
                if !(v > 0.0) {
                    return Err(Error::NotPositiveDefinite { pivot: i, value: v });
                }
                l.data[oi + i] = v.sqrt();
            } else {
                l.data[oi + j] = v / l.data[oj + j];
            }
        }
    }
    Ok(l)
}

/// Solves `L w = b` for packed lower-triangular `L`.
pub fn forward_solve(l: &PackedView<'_>, b: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; l.n];
    for i in 0..l.n {
        let row = l.row(i);
        w[i] = (b[i] - dot4(&row[..i], &w[..i])) / row[i];
    }
    w
}

/// Solves `L^T q = w` for packed lower-triangular `L`.
pub fn backward_solve(l: &PackedView<'_>, w: &[f64]) -> Vec<f64> {
    let mut q = w.to_vec();
    for i in (0..l.n).rev() {
        let row = l.row(i);
        q[i] /= row[i];
        let qi = q[i];
        for (qj, a) in q[..i].iter_mut().zip(&row[..i]) {
            *qj -= a * qi;
        }
    }
    q
}

/// Two-level additive preconditioner: exact inverses of consecutive diagonal
/// blocks plus an optional coarse correction on aggregates of consecutive
/// indices, `M^{-1} = sum_b A_bb^{-1} + Z (Z^T A Z)^{-1} Z^T`.
pub struct Preconditioner {
    starts: Vec<usize>,
    factors: Vec<PackedSym>,
    coarse: Option<(usize, PackedSym)>,
}

impl Preconditioner {
    /// `block` is the diagonal block size; `aggregate`, if set, the size of
    /// the coarse aggregates.
    pub fn new(op: &dyn SymOp, block: usize, aggregate: Option<usize>) -> Result<Self> {
        let n = op.size();
        let block = block.max(1);
        let starts: Vec<usize> = (0..n).step_by(block).collect();
        let factors = starts
            .par_iter()
            .map(|&s| {
                let len = block.min(n - s);
                let a = PackedSym::from_fn(len, |i, j| op.entry(s + i, s + j));
                cholesky(&a.view())
            })
            .collect::<Result<Vec<_>>>()?;
        let coarse = match aggregate {
            Some(g) if g >= 1 && n > g => {
                let e = op.aggregate_sums(g);
                Some((g, cholesky(&e.view())?))
            }
            _ => None,
        };
        Ok(Preconditioner {
            starts,
            factors,
            coarse,
        })
    }

    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let pieces: Vec<Vec<f64>> = self
            .starts
            .par_iter()
            .zip(&self.factors)
            .map(|(&s, l)| backward_solve(&l.view(), &forward_solve(&l.view(), &r[s..s + l.n])))
            .collect();
        for (&s, p) in self.starts.iter().zip(pieces) {
            z[s..s + p.len()].copy_from_slice(&p);
        }
        if let Some((g, l)) = &self.coarse {
            let rc: Vec<f64> = r.chunks(*g).map(|c| c.iter().sum()).collect();
            let ec = backward_solve(&l.view(), &forward_solve(&l.view(), &rc));
            for (zc, e) in z.chunks_mut(*g).zip(ec) {
                for v in zc {
                    *v += e;
                }
            }
        }
    }
}

/// Stopping rule and limits for [`conjugate_gradient`].
#[derive(Clone, Copy, Debug)]
pub struct CgOptions {
    /// Stop once `||b - A x||_inf <= tol`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            tol: 1e-9,
            max_iter: 5000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `||b - A x||_inf`, recomputed from scratch at exit.
    pub residual: f64,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// (Preconditioned) conjugate gradient for `A x = b`.
pub fn conjugate_gradient(
    op: &dyn SymOp,
    b: &[f64],
    opts: CgOptions,
    precond: Option<&Preconditioner>,
) -> Result<CgOutcome> {
    let n = op.size();
    let mut x = vec![0.0; n];
    if n == 0 {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    let precondition = |r: &[f64], z: &mut [f64]| match precond {
        Some(m) => m.apply(r, z),
        None => z.copy_from_slice(r),
    };
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = pairwise_dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut it = 0;
    loop {
        if inf_norm(&r) <= opts.tol {
            // Guard against drift of the recursively updated residual.
            op.apply(&x, &mut ap);
            for i in 0..n {
                r[i] = b[i] - ap[i];
            }
            let true_res = inf_norm(&r);
            if true_res <= opts.tol {
                return Ok(CgOutcome {
                    x,
                    iterations: it,
                    residual: true_res,
                });
            }
            precondition(&r, &mut z);
            p.copy_from_slice(&z);
            rz = pairwise_dot(&r, &z);
        }
        if it >= opts.max_iter {
            return Err(Error::NoConvergence {
                iterations: it,
                residual: inf_norm(&r),
            });
        }
        op.apply(&p, &mut ap);
        let pap = pairwise_dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NotPositiveDefinite {
                pivot: it,
                value: pap,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        precondition(&r, &mut z);
        let rz_new = pairwise_dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        it += 1;
    }
}
