//! Exponentially scaled modified Bessel functions `e^{-s} I_n(s)` and the
//! one-dimensional representation of the lattice Green's function.
//!
//! A continuous-time walk with unit jump rate has transition kernel
//! `prod_j e^{-t/d} I_{x_j}(t/d)`, and it spends one unit of time per discrete
//! step on average, so
//!
//! ```text
//! G(0, x) = d * int_0^inf prod_j e^{-s} I_{x_j}(s) ds.
//! ```
//!
//! The integrand is entire in `s` and decays like `s^{-d/2}`; the range
//! `[0, 1]` is done with a plain Gauss-Legendre rule, `[1, S]` with panels in
//! `log s`, and `[S, inf)` by integrating the large-`s` expansion term by term.

use std::f64::consts::PI;

use crate::numeric::unit_rule;

const RESCALE: f64 = 1e250;

/// Fills `out[n] = e^{-s} I_n(s)` for `n = 0..=n_max`.
///
/// Backward (Miller) recurrence normalised with `e^s = I_0 + 2 sum_k I_k`.
pub fn scaled_bessel_i_seq(s: f64, n_max: usize, out: &mut Vec<f64>) {
    out.clear();
    out.resize(n_max + 1, 0.0);
    if s <= 0.0 {
        out[0] = 1.0;
        return;
    }
    let start = n_max + 40 + (9.0 * s.sqrt()).ceil() as usize;
    let two_over_s = 2.0 / s;
    let mut above = 0.0f64; // I_{k+1}
    let mut cur = 1e-280f64; // I_k
    let mut sum = 0.0f64;
    let mut k = start;
    while k > 0 {
        if k <= n_max {
            out[k] = cur;
        }
        sum += 2.0 * cur;
        let below = k as f64 * two_over_s * cur + above;
        above = cur;
        cur = below;
        k -= 1;
        if cur > RESCALE {
            let f = 1.0 / RESCALE;
            cur *= f;
            above *= f;
            sum *= f;
            for v in out.iter_mut().skip(k + 1).take(n_max.saturating_sub(k)) {
                *v *= f;
            }
        }
    }
    out[0] = cur;
    sum += cur;
    let inv = 1.0 / sum;
    for v in out.iter_mut() {
        *v *= inv;
    }
}

/// Coefficients `c_k` with `sqrt(2 pi s) e^{-s} I_n(s) ~ sum_k c_k s^{-k}`.
pub fn asymptotic_coeffs(n: u64, terms: usize) -> Vec<f64> {
    let mu = 4.0 * (n as f64) * (n as f64);
    let mut c = Vec::with_capacity(terms);
    let mut a = 1.0f64;
    c.push(1.0);
    for k in 1..terms {
        let odd = (2 * k - 1) as f64;
        a *= -(mu - odd * odd) / (k as f64 * 8.0);
        c.push(a);
    }
    c
}

fn poly_mul_truncated(a: &[f64], b: &[f64], terms: usize) -> Vec<f64> {
    let mut out = vec![0.0; terms];
    for (i, &x) in a.iter().enumerate().take(terms) {
        for (j, &y) in b.iter().enumerate().take(terms - i) {
            out[i + j] += x * y;
        }
    }
    out
}

/// Quadrature settings for [`green_bessel`].
#[derive(Clone, Copy, Debug)]
pub struct BesselRule {
    /// Gauss-Legendre nodes per panel.
    pub nodes: usize,
    /// Panel width in `log s`.
    pub panel_width: f64,
    /// Terms of the large-`s` tail expansion.
    pub tail_terms: usize,
}

impl Default for BesselRule {
    fn default() -> Self {
        BesselRule {
            nodes: 20,
            panel_width: 0.5,
            tail_terms: 18,
        }
    }
}

/// `G(0, x)` for simple random walk on Z^d, d >= 3.
pub fn green_bessel(x: &[i64], rule: BesselRule) -> f64 {
    let d = x.len();
    assert!(d >= 3, "Green's function needs d >= 3");
    let ax: Vec<usize> = x.iter().map(|c| c.unsigned_abs() as usize).collect();
    let n_max = *ax.iter().max().unwrap();
    let mu_max = 4.0 * (n_max as f64).powi(2);
    let tail_start = (4.0 * mu_max).max(64.0);

    let mut seq = Vec::with_capacity(n_max + 1);
    let mut integrand = |s: f64| -> f64 {
        scaled_bessel_i_seq(s, n_max, &mut seq);
        ax.iter().map(|&n| seq[n]).product::<f64>()
    };

    // [0, 1]
    let (t, w) = unit_rule(rule.nodes + 10);
    let mut head = 0.0;
    for (ti, wi) in t.iter().zip(w) {
        head += wi * integrand(*ti);
    }

    // [1, S] in u = log s
    let u_end = tail_start.ln();
    let panels = (u_end / rule.panel_width).ceil().max(1.0) as usize;
    let h = u_end / panels as f64;
    let (t, w) = unit_rule(rule.nodes);
    let mut body = 0.0;
    for p in 0..panels {
        let mut part = 0.0;
        for (ti, wi) in t.iter().zip(w) {
            let s = ((p as f64 + ti) * h).exp();
            part += wi * s * integrand(s);
        }
        body += part * h;
    }

    // [S, inf)
    let mut series = vec![1.0];
    for &n in &ax {
        series = poly_mul_truncated(
            &series,
            &asymptotic_coeffs(n as u64, rule.tail_terms),
            rule.tail_terms,
        );
    }
    let half_d = d as f64 / 2.0;
    let mut tail = 0.0;
    for (k, c) in series.iter().enumerate() {
        let p = half_d + k as f64 - 1.0;
        tail += c * tail_start.powf(-p) / p;
    }
    tail *= (2.0 * PI).powf(-half_d);

    d as f64 * (head + body + tail)
}
