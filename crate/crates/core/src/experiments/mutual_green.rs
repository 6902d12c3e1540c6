//! `X_n = (1/n) sum_{i,l <= n} G(S_i, S'_l)` for two independent walks.

use rayon::prelude::*;

use super::{by_n, plain_rows, record, Check, ExperimentConfig, RawRecord, Summarized, SummaryRow};
use crate::error::{Error, Result};
use crate::green::{GreenKernel, GreenTable};
use crate::lattice::PointSet;
use crate::numeric::pairwise_sum;
use crate::walks::{apply_direction, simulate_path, WalkPath};

/// Exact law of `X_1 = G(S_1, S'_1)`: distinct values with their
/// probabilities, over all `(2d)^2` pairs of first steps.
pub fn first_step_distribution(table: &GreenTable) -> Vec<(f64, f64)> {
    let d = table.dim();
    let pairs = (2 * d) * (2 * d);
    let mut values = Vec::with_capacity(pairs);
    for a in 0..2 * d {
        for b in 0..2 * d {
            let mut x = vec![0i64; d];
            let mut y = vec![0i64; d];
            apply_direction(&mut x, a as u8);
            apply_direction(&mut y, b as u8);
            let dx: Vec<i64> = x.iter().zip(&y).map(|(p, q)| q - p).collect();
            values.push(table.value(&dx));
        }
    }
    values.sort_by(f64::total_cmp);
    let mut out: Vec<(f64, f64)> = Vec::new();
    for v in values {
        match out.last_mut() {
            Some((w, p)) if *w == v => *p += 1.0 / pairs as f64,
            _ => out.push((v, 1.0 / pairs as f64)),
        }
    }
    out
}

/// `X_n` for every `n` in `grid`, from two walks of length `max(grid)`.
fn mutual_sums(a: &WalkPath, b: &WalkPath, kernel: &GreenKernel, grid: &[u64]) -> Vec<f64> {
    let mut total = Vec::with_capacity(grid.len());
    let mut prev = 0usize;
    let mut acc: Vec<f64> = Vec::new();
    for &n in grid {
        let n = n as usize;
        // New terms: rows prev+1..=n against columns 1..=n, and rows
        // 1..=prev against columns prev+1..=n.
        let fresh: Vec<f64> = (1..=n)
            .into_par_iter()
            .map(|i| {
                let x = a.position(i);
                let cols = if i > prev { 1..=n } else { prev + 1..=n };
                let terms: Vec<f64> = cols.map(|l| kernel.between(x, b.position(l))).collect();
                pairwise_sum(&terms)
            })
            .collect();
        acc.push(pairwise_sum(&fresh));
        total.push(pairwise_sum(&acc) / n as f64);
        prev = n;
    }
    total
}

pub(super) fn run(cfg: &ExperimentConfig, table: &GreenTable) -> Result<Vec<RawRecord>> {
    let d = cfg.dim()?;
    if d != 4 {
        return Err(Error::InvalidParameter(format!(
            "mutual-green runs in d = 4, got {d}"
        )));
    }
    let grid = cfg.grid()?;
    let n_max = *grid.last().unwrap() as usize;
    let mut out = Vec::new();
    for r in 0..cfg.replicas()? {
        let seed = cfg.replica_seed(r)?;
        let a = simulate_path(d, n_max, seed.lane(1))?;
        let b = simulate_path(d, n_max, seed.lane(2))?;
        let sa = PointSet::from_flat(d, &flat_positions(&a))?;
        let sb = PointSet::from_flat(d, &flat_positions(&b))?;
        let kernel = table.kernel_for_pair(&sa, &sb)?;
        for (&n, x) in grid.iter().zip(mutual_sums(&a, &b, &kernel, &grid)) {
            out.push(record(
                cfg,
                n,
                r,
                "X",
                x,
                table.config().tolerance * n as f64,
                "green-sum",
            )?);
        }
    }
    Ok(out)
}

fn flat_positions(p: &WalkPath) -> Vec<i64> {
    (1..=p.len()).flat_map(|i| p.position(i).to_vec()).collect()
}

pub(super) fn summarize(cfg: &ExperimentConfig, records: &[RawRecord]) -> Result<Summarized> {
    let mut rows = plain_rows(cfg, records, &["X"])?;
    let moments: u32 = cfg.get("moments")?;
    let cs = cfg.list("c")?;
    let xs = by_n(records, "X");
    for p in 2..=moments {
        for (&n, v) in &xs {
            let ys: Vec<f64> = v.iter().map(|x| x.powi(p as i32)).collect();
            rows.push(SummaryRow::of(cfg, n, &format!("X^{p}"), &ys)?);
        }
    }
    let mut checks = Vec::new();
    let all: Vec<f64> = xs.values().flatten().copied().collect();
    checks.push(Check::new(
        "nonnegative",
        all.iter().all(|&x| x >= 0.0),
        format!("{} values", all.len()),
    ));
    for &c in &cs {
        let name = format!("mgf({c})");
        let mut means = Vec::new();
        for (&n, v) in &xs {
            let ys: Vec<f64> = v.iter().map(|x| (c * x).exp()).collect();
            let row = SummaryRow::of(cfg, n, &name, &ys)?;
            means.push((n, row.mean));
            rows.push(row);
        }
        let hi = means.iter().map(|m| m.1).fold(f64::MIN, f64::max);
        let lo = means.iter().map(|m| m.1).fold(f64::MAX, f64::min);
        let listed: Vec<String> = means.iter().map(|(n, m)| format!("{n}:{m:.4}")).collect();
        checks.push(Check::new(
            &format!("mgf_stable({c})"),
            hi < 2.0 * lo,
            format!("max/min = {:.4}; {}", hi / lo, listed.join(" ")),
        ));
    }
    Ok((rows, checks, Vec::new()))
}
