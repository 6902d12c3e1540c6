//! Capacity of sparse cylinders against `(pi/3) m / log(m/r)`, the Green-sum
//! sandwich on the same sets, and ball chains of the same length and radius.

use std::f64::consts::PI;

use super::{by_n, plain_rows, record, Check, ExperimentConfig, RawRecord, Summarized};
use crate::capacity::{cap_bounds, cap_exact_with};
use crate::error::Result;
use crate::green::GreenTable;
use crate::lattice::PointSet;
use crate::numeric::ceil_tolerant;
use crate::shapes::{ball_chain, collinear_centers, cylinder, outer_shell};

fn radius(m: u64, exponent: f64) -> u64 {
    ceil_tolerant((m as f64).powf(exponent)).max(1.0) as u64
}

fn normaliser(m: u64, r: u64) -> f64 {
    ((m as f64) / r as f64).ln() / m as f64
}

pub(super) fn run(cfg: &ExperimentConfig, table: &GreenTable) -> Result<Vec<RawRecord>> {
    let l: u64 = cfg.get("l")?;
    let exponent: f64 = cfg.get("r_exponent")?;
    let opts = cfg.solver()?;
    let mut out = Vec::new();
    for m in cfg.grid()? {
        let r = radius(m, exponent);
        let set = cylinder(m, l, r)?;
        let (est, _) = cap_exact_with(&set, table, &opts)?;
        let (lo, hi) = cap_bounds(&set, table)?;
        let method = est.method.as_str();
        out.push(record(cfg, m, 0, "r", r as f64, 0.0, "enumeration")?);
        out.push(record(
            cfg,
            m,
            0,
            "size",
            set.len() as f64,
            0.0,
            "enumeration",
        )?);
        out.push(record(cfg, m, 0, "cap", est.value, est.error, method)?);
        out.push(record(
            cfg,
            m,
            0,
            "ratio",
            est.value * normaliser(m, r),
            est.error * normaliser(m, r),
            method,
        )?);
        out.push(record(cfg, m, 0, "mat1_lower", lo, 0.0, "green-sums")?);
        out.push(record(cfg, m, 0, "mat1_upper", hi, 0.0, "green-sums")?);
    }
    for m in cfg.list("chain_m")? {
        let m = m.round() as u64;
        let r = radius(m, exponent);
        let count = (m / r).max(1) as usize;
        let chain = ball_chain(&collinear_centers(3, r as i64, count), r as f64)?;
        let full = cylinder(m, 1, r)?;
        for (name, set) in [("chain_ratio", &chain), ("full_cylinder_ratio", &full)] {
            let shell: PointSet = outer_shell(set);
            let (est, _) = cap_exact_with(&shell, table, &opts)?;
            let f = normaliser(m, r);
            out.push(record(
                cfg,
                m,
                0,
                name,
                est.value * f,
                est.error * f,
                est.method.as_str(),
            )?);
        }
    }
    Ok(out)
}

pub(super) fn summarize(cfg: &ExperimentConfig, records: &[RawRecord]) -> Result<Summarized> {
    let quantities = [
        "r",
        "size",
        "cap",
        "ratio",
        "mat1_lower",
        "mat1_upper",
        "chain_ratio",
        "full_cylinder_ratio",
    ];
    let rows = plain_rows(cfg, records, &quantities)?;
    let tol: f64 = cfg.get("tol")?;
    let limit = PI / 3.0;
    let mut checks = Vec::new();

    let ratios = by_n(records, "ratio");
    if !ratios.is_empty() {
        let listed: Vec<String> = ratios
            .iter()
            .map(|(m, v)| format!("{m}:{:.4}", v[0]))
            .collect();
        let inside = ratios.values().all(|v| (v[0] / limit - 1.0).abs() <= 0.3);
        checks.push(Check::new(
            "ratio_band",
            inside,
            format!(
                "ratio vs pi/3 = {limit:.4} within 30%: {}",
                listed.join(" ")
            ),
        ));
        let devs: Vec<f64> = ratios.values().map(|v| (v[0] - limit).abs()).collect();
        let monotone = devs.windows(2).all(|w| w[1] <= w[0]);
        let listed: Vec<String> = devs.iter().map(|d| format!("{d:.4}")).collect();
        checks.push(Check::new(
            "deviation_nonincreasing",
            monotone,
            format!("|ratio - pi/3|: {}", listed.join(" ")),
        ));
    }

    let caps = by_n(records, "cap");
    let lows = by_n(records, "mat1_lower");
    let highs = by_n(records, "mat1_upper");
    if !caps.is_empty() {
        let ok = caps.iter().all(|(m, c)| {
            let (lo, hi) = (lows[m][0], highs[m][0]);
            lo <= c[0] + 2.0 * tol && c[0] <= hi + 2.0 * tol
        });
        checks.push(Check::new(
            "sandwich",
            ok,
            format!("{} cylinders", caps.len()),
        ));
    }

    let chains = by_n(records, "chain_ratio");
    let fulls = by_n(records, "full_cylinder_ratio");
    if !chains.is_empty() {
        let ok = chains.iter().all(|(m, c)| c[0] <= 1.3 * fulls[m][0]);
        let listed: Vec<String> = chains
            .iter()
            .map(|(m, c)| format!("{m}:{:.4}/{:.4}", c[0], fulls[m][0]))
            .collect();
        checks.push(Check::new(
            "chain_vs_cylinder",
            ok,
            format!("chain ratio / full cylinder ratio: {}", listed.join(" ")),
        ));
    }
    Ok((rows, checks, Vec::new()))
}
