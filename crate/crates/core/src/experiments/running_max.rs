//! `D^(n) = (log n)^2 / n * max_{j <= n} (R_j - E R_j)` on a checkpoint grid,
//! centred by the mean over replicas.

use std::collections::BTreeMap;

use super::mean_scaling::for_each_replica;
use super::{by_n, by_replica, record, Check, ExperimentConfig, RawRecord, Summarized, SummaryRow};
use crate::capacity::prefix_capacities;
use crate::error::{Error, Result};
use crate::green::GreenTable;
use crate::stats::Moments;
use crate::walks::simulate_path;

pub const MIN_REPLICAS: usize = 100;

/// `{2^k (1 + i / per_octave)}` up to `n_max`, plus the `extra` points.
pub fn checkpoints(n_max: u64, per_octave: usize, extra: &[u64]) -> Vec<u64> {
    let mut out: Vec<u64> = extra.iter().copied().filter(|&n| n <= n_max).collect();
    let mut base = 1u64;
    while base <= n_max {
        for i in 0..per_octave.max(1) {
            let j = base + (base * i as u64) / per_octave.max(1) as u64;
            if j <= n_max {
                out.push(j);
            }
        }
        base *= 2;
    }
    out.sort_unstable();
    out.dedup();
    out
}

pub(super) fn run(cfg: &ExperimentConfig, table: &GreenTable) -> Result<Vec<RawRecord>> {
    let d = cfg.dim()?;
    if d != 4 {
        return Err(Error::InvalidParameter(format!(
            "running-max runs in d = 4, got {d}"
        )));
    }
    let replicas = cfg.replicas()?;
    if replicas < MIN_REPLICAS {
        return Err(Error::InvalidParameter(format!(
            "centred experiments need at least {MIN_REPLICAS} replicas"
        )));
    }
    let grid = cfg.grid()?;
    let n_max = *grid.last().unwrap();
    let per_octave: usize = cfg.get("per_octave")?;
    let fine = checkpoints(n_max, 2 * per_octave, &grid);
    let opts = cfg.solver()?;
    let per_replica = for_each_replica(replicas, n_max, |r| {
        let path = simulate_path(d, n_max as usize, cfg.replica_seed(r)?)?;
        let (range, times) = path.range_with_times(0, n_max as usize)?;
        if range.len() > opts.max_points {
            return Err(Error::Budget {
                size: range.len(),
                budget: opts.max_points,
            });
        }
        let sizes: Vec<usize> = fine
            .iter()
            .map(|&j| times.partition_point(|&t| t <= j as usize))
            .collect();
        let caps = prefix_capacities(&range.set, &sizes, table, &opts)?;
        fine.iter()
            .zip(caps)
            .map(|(&j, est)| record(cfg, j, r, "R", est.value, est.error, est.method.as_str()))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(per_replica.into_iter().flatten().collect())
}

/// Per-replica `D^(n)` for every grid `n`, maximising over `points`.
fn running_max(
    series: &BTreeMap<usize, BTreeMap<u64, f64>>,
    means: &BTreeMap<u64, f64>,
    points: &[u64],
    grid: &[u64],
) -> BTreeMap<u64, Vec<f64>> {
    let mut out: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for s in series.values() {
        for &n in grid {
            // j = 0 contributes R_0 - E R_0 = 0.
            let top = points
                .iter()
                .filter(|&&j| j <= n)
                .filter_map(|j| s.get(j).map(|r| r - means[j]))
                .fold(0.0f64, f64::max);
            let l = (n as f64).ln();
            out.entry(n).or_default().push(l * l / n as f64 * top);
        }
    }
    out
}

pub(super) fn summarize(cfg: &ExperimentConfig, records: &[RawRecord]) -> Result<Summarized> {
    let grid = cfg.grid()?;
    let n_max = *grid.last().unwrap();
    let per_octave: usize = cfg.get("per_octave")?;
    let coarse = checkpoints(n_max, per_octave, &grid);
    let fine = checkpoints(n_max, 2 * per_octave, &grid);
    let means: BTreeMap<u64, f64> = by_n(records, "R")
        .into_iter()
        .map(|(j, xs)| (j, Moments::of(&xs).mean))
        .collect();
    let series = by_replica(records, "R");
    let d_coarse = running_max(&series, &means, &coarse, &grid);
    let d_fine = running_max(&series, &means, &fine, &grid);

    let mut rows = Vec::new();
    for (&j, xs) in &by_n(records, "R") {
        if grid.contains(&j) {
            rows.push(SummaryRow::of(cfg, j, "R", xs)?);
        }
    }
    let mut checks = Vec::new();
    let mut dominated = true;
    let mut refinement = Vec::new();
    for &n in &grid {
        let (dc, df) = (&d_coarse[&n], &d_fine[&n]);
        rows.push(SummaryRow::of(cfg, n, "D", dc)?);
        rows.push(SummaryRow::of(cfg, n, "D_fine", df)?);
        let l = (n as f64).ln();
        for (s, dv) in series.values().zip(dc) {
            if let Some(r) = s.get(&n) {
                dominated &= *dv >= l * l / n as f64 * (r - means[&n]);
            }
        }
        let (mc, mf) = (Moments::of(dc).mean, Moments::of(df).mean);
        refinement.push((n, if mc > 0.0 { (mf - mc).abs() / mc } else { 0.0 }));
    }
    checks.push(Check::new(
        "dominates_endpoint",
        dominated,
        "D >= (log n)^2/n (R_n - mean R_n) on every replica".into(),
    ));
    let worst = refinement.iter().map(|r| r.1).fold(0.0, f64::max);
    let listed: Vec<String> = refinement
        .iter()
        .map(|(n, r)| format!("{n}:{:.2}%", 100.0 * r))
        .collect();
    checks.push(Check::new(
        "refinement",
        worst < 0.05,
        format!(
            "relative change of mean D when doubling the grid: {}",
            listed.join(" ")
        ),
    ));
    for c in cfg.list("c_max")? {
        let name = format!("mgf({c})");
        let mut vals = Vec::new();
        for &n in &grid {
            let ys: Vec<f64> = d_coarse[&n].iter().map(|x| (c * x).exp()).collect();
            let row = SummaryRow::of(cfg, n, &name, &ys)?;
            vals.push((n, row.mean));
            rows.push(row);
        }
        let hi = vals.iter().map(|v| v.1).fold(f64::MIN, f64::max);
        let lo = vals.iter().map(|v| v.1).fold(f64::MAX, f64::min);
        let finite = vals.iter().all(|v| v.1.is_finite());
        let listed: Vec<String> = vals.iter().map(|(n, m)| format!("{n}:{m:.4}")).collect();
        checks.push(Check::new(
            &format!("mgf_stable({c})"),
            finite && hi < 2.0 * lo,
            format!("max/min = {:.4}; {}", hi / lo, listed.join(" ")),
        ));
    }
    let notes = vec![format!(
        "R_j is centred by the mean over {} replicas, which biases centred values by a factor 1 - 1/replicas",
        series.len()
    )];
    Ok((rows, checks, notes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_grid() {
        assert_eq!(checkpoints(16, 2, &[]), vec![1, 2, 3, 4, 6, 8, 12, 16]);
        assert_eq!(
            checkpoints(16, 4, &[]),
            vec![1, 2, 3, 4, 5, 6, 7, 8, 10, 12, 14, 16]
        );
        let coarse = checkpoints(1 << 10, 8, &[1000]);
        let fine = checkpoints(1 << 10, 16, &[1000]);
        assert!(coarse.contains(&1000));
        assert!(coarse.iter().all(|j| fine.contains(j)));
    }
}
