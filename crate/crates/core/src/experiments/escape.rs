//! Non-intersection probability `g_{n,alpha}`: a walk split at time `n'`
//! into a forward piece `S+` and a backward piece `S-`, with
//! `n' = n (log n)^{-2 alpha}`. A sample is
//! `1{0 not in S+(0, n']} * 1{a fresh walk from 0 never returns to S+[1, n'] or S-[0, n' - 1]}`.

use super::{by_n, record, Check, ExperimentConfig, RawRecord, Summarized, SummaryRow};
use crate::capacity::escape_count;
use crate::error::{Error, Result};
use crate::green::GreenTable;
use crate::lattice::PointSet;
use crate::walks::simulate_path;

pub fn horizon(n: u64, alpha: f64) -> Result<usize> {
    let h = (n as f64 * (n as f64).ln().powf(-2.0 * alpha)).floor();
    if !(h >= 1.0) {
        return Err(Error::Domain(format!(
            "n (log n)^(-2 alpha) < 1 for n = {n}, alpha = {alpha}"
        )));
    }
    Ok(h as usize)
}

fn quantity(alpha: f64) -> String {
    format!("g(alpha={alpha})")
}

fn sample(
    cfg: &ExperimentConfig,
    d: usize,
    n_prime: usize,
    seed: crate::rng::SeedPolicy,
) -> Result<f64> {
    let plus = simulate_path(d, n_prime, seed.lane(1))?;
    let origin = vec![0i64; d];
    if (1..=n_prime).any(|i| plus.position(i) == origin.as_slice()) {
        return Ok(0.0);
    }
    let minus = simulate_path(d, n_prime - 1, seed.lane(2))?;
    let mut set = PointSet::empty(d);
    for i in 1..=n_prime {
        set.insert(plus.position(i))?;
    }
    for i in 0..n_prime {
        set.insert(minus.position(i))?;
    }
    let walks: usize = cfg.get("hat_walks")?;
    let (escaped, _) = escape_count(&set, &origin, cfg.get("kappa")?, walks, seed.lane(3))?;
    Ok(escaped as f64 / walks as f64)
}

pub(super) fn run(cfg: &ExperimentConfig, _table: &GreenTable) -> Result<Vec<RawRecord>> {
    let d = cfg.dim()?;
    if d != 4 {
        return Err(Error::InvalidParameter(format!(
            "escape-probability runs in d = 4, got {d}"
        )));
    }
    let grid = cfg.grid()?;
    let alphas = cfg.list("alphas")?;
    if cfg.get::<usize>("hat_walks")? == 0 {
        return Err(Error::InvalidParameter(
            "hat_walks must be at least 1".into(),
        ));
    }
    let mut jobs = Vec::new();
    for &n in &grid {
        for (ai, &alpha) in alphas.iter().enumerate() {
            jobs.push((n, ai, alpha, horizon(n, alpha)?));
        }
    }
    let replicas = cfg.replicas()?;
    let mut out = Vec::with_capacity(jobs.len() * replicas);
    for &(n, ai, alpha, n_prime) in &jobs {
        let values: Vec<f64> = {
            use rayon::prelude::*;
            (0..replicas)
                .into_par_iter()
                .map(|r| {
                    sample(
                        cfg,
                        d,
                        n_prime,
                        cfg.replica_seed(r)?.lane(n).lane(ai as u64),
                    )
                })
                .collect::<Result<_>>()?
        };
        for (r, v) in values.into_iter().enumerate() {
            out.push(record(cfg, n, r, &quantity(alpha), v, 0.0, "mc-escape")?);
        }
    }
    Ok(out)
}

pub(super) fn summarize(cfg: &ExperimentConfig, records: &[RawRecord]) -> Result<Summarized> {
    let alphas = cfg.list("alphas")?;
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    let mut per_alpha = Vec::new();
    for &alpha in &alphas {
        let q = quantity(alpha);
        let groups = by_n(records, &q);
        let mut means = Vec::new();
        for (n, xs) in &groups {
            rows.push(SummaryRow::of(cfg, *n, &q, xs)?);
            let scaled: Vec<f64> = xs.iter().map(|x| x * (*n as f64).ln()).collect();
            let row = SummaryRow::of(cfg, *n, &format!("logn_{q}"), &scaled)?;
            means.push((
                *n,
                row.mean,
                row.stderr,
                rows.last().unwrap().mean,
                rows.last().unwrap().stderr,
            ));
            rows.push(row);
        }
        let unit = groups.values().flatten().all(|x| (0.0..=1.0).contains(x));
        checks.push(Check::new(
            &format!("unit_interval({alpha})"),
            unit,
            format!("{} samples", groups.values().map(Vec::len).sum::<usize>()),
        ));
        let band = means.iter().all(|m| (0.6..=1.6).contains(&m.1));
        let listed: Vec<String> = means
            .iter()
            .map(|m| format!("{}:{:.4}", m.0, m.1))
            .collect();
        checks.push(Check::new(
            &format!("band({alpha})"),
            band && !means.is_empty(),
            format!("(log n) g: {}", listed.join(" ")),
        ));
        per_alpha.push(means);
    }
    if per_alpha.len() >= 2 {
        let (a, b) = (&per_alpha[0], &per_alpha[1]);
        let mut ok = true;
        let mut listed = Vec::new();
        for (x, y) in a.iter().zip(b) {
            let z = (x.3 - y.3).abs() / (x.4 * x.4 + y.4 * y.4).sqrt().max(f64::MIN_POSITIVE);
            ok &= z <= 2.0;
            listed.push(format!("{}:{z:.2}", x.0));
        }
        checks.push(Check::new(
            "alpha_agreement",
            ok,
            format!(
                "|g(alpha={}) - g(alpha={})| in standard errors: {}",
                alphas[0],
                alphas[1],
                listed.join(" ")
            ),
        ));
    }
    let notes = vec![format!(
        "escape is truncated at radius kappa (diam + 1) with kappa = {}; the truncation bias is of order kappa^(2-d)",
        cfg.raw("kappa")?
    )];
    Ok((rows, checks, notes))
}
