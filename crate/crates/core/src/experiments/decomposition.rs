//! Block decomposition `R_n = sum U_j - Delta_{n,k}` along simulated walks.

use super::mean_scaling::for_each_replica;
use super::{by_n, plain_rows, record, Check, ExperimentConfig, RawRecord, Summarized};
use crate::capacity::{decompose, equal_blocks};
use crate::error::{Error, Result};
use crate::green::GreenTable;
use crate::scales::ScaleFunction;
use crate::walks::simulate_path;

/// `k = 2^p` with `p = floor((log_2 n - kappa) / log 2)`, `log_2 n = ln ln n`.
pub fn block_count(n: u64, kappa: f64) -> usize {
    let l2 = (n as f64).ln().ln();
    let p = ((l2 - kappa) / std::f64::consts::LN_2).floor();
    if p.is_finite() && p > 0.0 {
        1usize << (p as u32).min(20)
    } else {
        1
    }
}

fn blocks_for(cfg: &ExperimentConfig, n: u64) -> Result<usize> {
    let raw = cfg.raw("k")?;
    let k = if raw == "auto" {
        block_count(n, cfg.get("k_kappa")?)
    } else {
        cfg.get("k")?
    };
    if k == 0 || k as u64 > n {
        return Err(Error::InvalidParameter(format!(
            "k = {k} blocks for n = {n}"
        )));
    }
    Ok(k)
}

const QUANTITIES: [&str; 11] = [
    "R",
    "sum_U",
    "delta",
    "delta_steps",
    "delta_def",
    "identity_residual",
    "delta_spread",
    "k",
    "delta_over_h4bar",
    "delta_over_R",
    "delta_over_sqrt_n",
];

pub(super) fn run(cfg: &ExperimentConfig, table: &GreenTable) -> Result<Vec<RawRecord>> {
    let d = cfg.dim()?;
    if !(4..=6).contains(&d) {
        return Err(Error::InvalidParameter(format!(
            "decomposition runs in d = 4, 5, 6, got {d}"
        )));
    }
    let grid = cfg.grid()?;
    let n_max = *grid.last().unwrap();
    let opts = cfg.solver()?;
    let per_replica = for_each_replica(cfg.replicas()?, n_max, |r| {
        let path = simulate_path(d, n_max as usize, cfg.replica_seed(r)?)?;
        let mut out = Vec::new();
        for &n in &grid {
            let k = blocks_for(cfg, n)?;
            let rep = decompose(&path, &equal_blocks(n as usize, k), table, &opts)?;
            let tol = rep.tolerance;
            let method = "exact";
            let sum_u: f64 = crate::numeric::pairwise_sum(&rep.blocks);
            out.push(record(cfg, n, r, "R", rep.total, rep.max_error, method)?);
            out.push(record(
                cfg,
                n,
                r,
                "sum_U",
                sum_u,
                k as f64 * rep.max_error,
                method,
            )?);
            out.push(record(cfg, n, r, "delta", rep.delta, tol, method)?);
            out.push(record(
                cfg,
                n,
                r,
                "delta_steps",
                rep.delta_steps,
                tol,
                method,
            )?);
            out.push(record(cfg, n, r, "delta_def", rep.delta_def, tol, method)?);
            out.push(record(
                cfg,
                n,
                r,
                "identity_residual",
                rep.identity_residual(),
                tol,
                method,
            )?);
            out.push(record(
                cfg,
                n,
                r,
                "delta_spread",
                rep.delta_spread(),
                tol,
                method,
            )?);
            out.push(record(cfg, n, r, "k", k as f64, 0.0, method)?);
            let (name, scale) = match d {
                4 => ("delta_over_h4bar", ScaleFunction::H4Bar.eval(n as f64).ok()),
                5 => ("delta_over_R", Some(rep.total)),
                _ => ("delta_over_sqrt_n", Some((n as f64).sqrt())),
            };
            if let Some(s) = scale.filter(|s| *s > 0.0) {
                out.push(record(cfg, n, r, name, rep.delta / s, tol / s, method)?);
            }
        }
        Ok(out)
    })?;
    Ok(per_replica.into_iter().flatten().collect())
}

pub(super) fn summarize(cfg: &ExperimentConfig, records: &[RawRecord]) -> Result<Summarized> {
    let rows = plain_rows(cfg, records, &QUANTITIES)?;
    let mut checks = Vec::new();
    let within = |q: &str| {
        let rs: Vec<&RawRecord> = records.iter().filter(|r| r.quantity == q).collect();
        (rs.iter().filter(|r| r.value <= r.err).count(), rs.len())
    };
    let (ok, total) = within("identity_residual");
    checks.push(Check::new(
        "identity",
        ok == total,
        format!("|R - sum U + Delta| <= (k+1) tol on {ok}/{total}"),
    ));
    let (ok, total) = within("delta_spread");
    checks.push(Check::new(
        "telescoping",
        ok == total,
        format!("three forms of Delta agree on {ok}/{total}"),
    ));
    let deltas: Vec<&RawRecord> = records.iter().filter(|r| r.quantity == "delta").collect();
    let nonneg = deltas.iter().filter(|r| r.value >= -r.err).count();
    checks.push(Check::new(
        "delta_nonnegative",
        nonneg == deltas.len(),
        format!("{nonneg}/{}", deltas.len()),
    ));
    if cfg.dim()? == 4 {
        let ratios = by_n(records, "delta_over_h4bar");
        let listed: Vec<String> = ratios
            .iter()
            .map(|(n, v)| format!("{n}:{:.4}", v.iter().sum::<f64>() / v.len() as f64))
            .collect();
        let positive = ratios.values().all(|v| v.iter().sum::<f64>() > 0.0);
        checks.push(Check::new(
            "delta_over_h4bar_positive",
            positive,
            listed.join(" "),
        ));
    }
    Ok((rows, checks, Vec::new()))
}
