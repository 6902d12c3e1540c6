//! `E[R_n]` over an `n` grid: the log-log slope in d=3, `(log n) E[R_n]/n`
//! in d=4 and `E[R_n]/n` in d >= 5.

use std::f64::consts::PI;

use rayon::prelude::*;

use super::{
    by_n, by_replica, plain_rows, record, Check, ExperimentConfig, RawRecord, Summarized,
    SummaryRow,
};
use crate::capacity::{prefix_capacities, range_capacity, CapacityEstimate};
use crate::error::{Error, Result};
use crate::green::GreenTable;
use crate::numeric::normal_quantile_two_sided;
use crate::scales::ScaleFunction;
use crate::stats::{loglog_fit, Moments};
use crate::walks::simulate_path;

/// Replicas with ranges up to this many points run concurrently; larger
/// ones run one at a time with parallel solves, to bound memory.
pub(super) const CONCURRENT_RANGE: u64 = 4096;

/// Scale used for the normalised trajectory `R_n / h(n)`.
pub(super) fn trajectory_scale(d: usize, sigma: f64) -> ScaleFunction {
    match d {
        3 => ScaleFunction::H3,
        4 => ScaleFunction::H4,
        _ => ScaleFunction::Hd { d, sigma },
    }
}

/// Range capacities `R_n` for every `n` in `grid` along one walk.
pub(super) fn range_capacities(
    cfg: &ExperimentConfig,
    table: &GreenTable,
    grid: &[u64],
    replica: usize,
) -> Result<Vec<CapacityEstimate>> {
    let d = cfg.dim()?;
    let opts = cfg.solver()?;
    let n_max = *grid.last().unwrap() as usize;
    let path = simulate_path(d, n_max, cfg.replica_seed(replica)?)?;
    let (range, times) = path.range_with_times(0, n_max)?;
    if range.len() <= opts.max_points {
        let sizes: Vec<usize> = grid
            .iter()
            .map(|&n| times.partition_point(|&t| t <= n as usize))
            .collect();
        return prefix_capacities(&range.set, &sizes, table, &opts);
    }
    if !opts.allow_mc_fallback {
        return Err(Error::Budget {
            size: range.len(),
            budget: opts.max_points,
        });
    }
    grid.iter()
        .map(|&n| range_capacity(&path, 0, n as usize, table, &opts))
        .collect()
}

pub(super) fn for_each_replica<T, F>(replicas: usize, n_max: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if n_max <= CONCURRENT_RANGE {
        (0..replicas).into_par_iter().map(f).collect()
    } else {
        (0..replicas).map(f).collect()
    }
}

pub(super) fn run(cfg: &ExperimentConfig, table: &GreenTable) -> Result<Vec<RawRecord>> {
    let d = cfg.dim()?;
    let grid = cfg.grid()?;
    let scale = trajectory_scale(d, cfg.get("sigma")?);
    let per_replica = for_each_replica(cfg.replicas()?, *grid.last().unwrap(), |r| {
        let caps = range_capacities(cfg, table, &grid, r)?;
        let mut out = Vec::new();
        for (&n, est) in grid.iter().zip(&caps) {
            out.push(record(
                cfg,
                n,
                r,
                "R",
                est.value,
                est.error,
                est.method.as_str(),
            )?);
            if let Ok(h) = scale.eval(n as f64) {
                out.push(record(
                    cfg,
                    n,
                    r,
                    "R_over_h",
                    est.value / h,
                    est.error / h,
                    est.method.as_str(),
                )?);
            }
        }
        Ok(out)
    })?;
    Ok(per_replica.into_iter().flatten().collect())
}

pub(super) fn summarize(cfg: &ExperimentConfig, records: &[RawRecord]) -> Result<Summarized> {
    let d = cfg.dim()?;
    let mut rows = plain_rows(cfg, records, &["R", "R_over_h"])?;
    let mut checks = Vec::new();
    let mut notes = Vec::new();
    let means: Vec<(u64, Moments)> = by_n(records, "R")
        .into_iter()
        .map(|(n, xs)| (n, Moments::of(&xs)))
        .collect();
    if means.is_empty() {
        return Ok((rows, checks, notes));
    }
    let n_last = means.last().unwrap().0;
    let normalised =
        |f: &dyn Fn(f64) -> f64, name: &str, rows: &mut Vec<SummaryRow>| -> Result<()> {
            for (n, xs) in by_n(records, "R") {
                let ys: Vec<f64> = xs.iter().map(|x| x * f(n as f64)).collect();
                rows.push(SummaryRow::of(cfg, n, name, &ys)?);
            }
            Ok(())
        };
    match d {
        3 => {
            normalised(&|n| 1.0 / n.sqrt(), "R_over_sqrt_n", &mut rows)?;
            let x: Vec<f64> = means.iter().map(|(n, _)| *n as f64).collect();
            let y: Vec<f64> = means.iter().map(|(_, m)| m.mean).collect();
            let e: Vec<f64> = means.iter().map(|(_, m)| m.stderr).collect();
            if let Some(fit) = loglog_fit(&x, &y, &e, 0.95) {
                rows.push(SummaryRow::scalar(
                    cfg,
                    n_last,
                    "loglog_slope",
                    fit.slope,
                    fit.slope_stderr,
                    means.len(),
                )?);
                checks.push(Check::new(
                    "slope",
                    (0.45..=0.55).contains(&fit.slope),
                    format!(
                        "slope {:.4} (95% CI [{:.4}, {:.4}]), band [0.45, 0.55]",
                        fit.slope, fit.ci_low, fit.ci_high
                    ),
                ));
            }
        }
        4 => {
            normalised(&|n| n.ln() / n, "normalized", &mut rows)?;
            let limit = PI * PI / 8.0;
            let band: Vec<SummaryRow> = rows
                .iter()
                .filter(|r| r.quantity == "normalized" && r.n >= 1024)
                .cloned()
                .collect();
            let inside = band.iter().all(|r| (0.6..=1.4).contains(&r.mean));
            let listed: Vec<String> = band
                .iter()
                .map(|r| format!("{}:{:.4}", r.n, r.mean))
                .collect();
            checks.push(Check::new(
                "band",
                inside && !band.is_empty(),
                format!("n >= 2^10: {}", listed.join(" ")),
            ));
            if means.len() >= 4 {
                let tail: Vec<u64> = means[means.len() - 4..].iter().map(|(n, _)| *n).collect();
                let slopes: Vec<f64> = by_replica(records, "R")
                    .values()
                    .filter_map(|series| {
                        let pts: Option<Vec<(f64, f64)>> = tail
                            .iter()
                            .map(|&n| {
                                series
                                    .get(&n)
                                    .map(|r| ((n as f64).ln(), r * (n as f64).ln() / n as f64))
                            })
                            .collect();
                        pts.map(|p| ols_slope(&p))
                    })
                    .collect();
                let drift = Moments::of(&slopes);
                rows.push(SummaryRow::scalar(
                    cfg,
                    n_last,
                    "drift",
                    drift.mean,
                    drift.stderr,
                    drift.count,
                )?);
                checks.push(Check::new(
                    "positive_drift",
                    drift.mean > 0.0,
                    format!(
                        "slope of (log n) R_n/n in log n over the last four n: {:.5} ± {:.5}",
                        drift.mean, drift.stderr
                    ),
                ));
                let first = band.iter().find(|r| r.n == tail[0]).map(|r| r.mean);
                let last = band.iter().find(|r| r.n == tail[3]).map(|r| r.mean);
                if let (Some(a), Some(b)) = (first, last) {
                    checks.push(Check::new(
                        "toward_limit",
                        (b - limit).abs() < (a - limit).abs(),
                        format!(
                            "distance to pi^2/8: {:.4} at n={} and {:.4} at n={}",
                            (a - limit).abs(),
                            tail[0],
                            (b - limit).abs(),
                            tail[3]
                        ),
                    ));
                }
            }
        }
        _ => {
            normalised(&|n| 1.0 / n, "R_over_n", &mut rows)?;
            let last = rows
                .iter()
                .find(|r| r.quantity == "R_over_n" && r.n == n_last)
                .cloned();
            if let Some(r) = last {
                let z = normal_quantile_two_sided(0.99);
                let lo = r.mean - z * r.stderr;
                checks.push(Check::new(
                    "ci99_excludes_zero",
                    lo > 0.0,
                    format!(
                        "E[R_n]/n at n={}: {:.5}, 99% CI [{:.5}, {:.5}]",
                        r.n,
                        r.mean,
                        lo,
                        r.mean + z * r.stderr
                    ),
                ));
            }
            notes.push(format!(
                "R_over_h uses sigma = {} for h_d; sigma_d is not known in closed form",
                cfg.raw("sigma")?
            ));
        }
    }
    Ok((rows, checks, notes))
}

fn ols_slope(p: &[(f64, f64)]) -> f64 {
    let n = p.len() as f64;
    let mx = p.iter().map(|v| v.0).sum::<f64>() / n;
    let my = p.iter().map(|v| v.1).sum::<f64>() / n;
    let sxy: f64 = p.iter().map(|v| (v.0 - mx) * (v.1 - my)).sum();
    let sxx: f64 = p.iter().map(|v| (v.0 - mx) * (v.0 - mx)).sum();
    sxy / sxx
}
