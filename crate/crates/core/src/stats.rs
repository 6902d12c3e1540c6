//! Replica summaries and log-log regressions.

use serde::Serialize;

use crate::numeric::{normal_quantile_two_sided, pairwise_sum};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    /// Unbiased sample variance; 0 for a single sample.
    pub variance: f64,
    pub stderr: f64,
    pub count: usize,
}

impl Moments {
    /// Summary of `xs`; the result does not depend on the order of `xs`.
    pub fn of(xs: &[f64]) -> Moments {
        let count = xs.len();
        if count == 0 {
            return Moments {
                mean: f64::NAN,
                variance: f64::NAN,
                stderr: f64::NAN,
                count,
            };
        }
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mean = pairwise_sum(&sorted) / count as f64;
        let dev: Vec<f64> = sorted.iter().map(|x| (x - mean) * (x - mean)).collect();
        let variance = if count > 1 {
            pairwise_sum(&dev) / (count - 1) as f64
        } else {
            0.0
        };
        Moments {
            mean,
            variance,
            stderr: (variance / count as f64).sqrt(),
            count,
        }
    }

    /// Normal-approximation confidence interval for the mean.
    pub fn ci(&self, confidence: f64) -> (f64, f64) {
        let z = normal_quantile_two_sided(confidence);
        (self.mean - z * self.stderr, self.mean + z * self.stderr)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub confidence: f64,
    pub ci_method: &'static str,
}

/// Weighted least squares fit of `y = a + b x`; the slope error is the
/// sandwich error computed from the supplied `y` standard errors.
pub fn weighted_fit(x: &[f64], y: &[f64], y_err: &[f64], confidence: f64) -> Option<Regression> {
    let n = x.len();
    if n < 2 || y.len() != n || y_err.len() != n {
        return None;
    }
    let w: Vec<f64> = y_err
        .iter()
        .map(|&e| if e > 0.0 { 1.0 / (e * e) } else { 1.0 })
        .collect();
    let sw = pairwise_sum(&w);
    let mx = pairwise_sum(&w.iter().zip(x).map(|(w, x)| w * x).collect::<Vec<_>>()) / sw;
    let my = pairwise_sum(&w.iter().zip(y).map(|(w, y)| w * y).collect::<Vec<_>>()) / sw;
    let sxx = pairwise_sum(
        &w.iter()
            .zip(x)
            .map(|(w, x)| w * (x - mx) * (x - mx))
            .collect::<Vec<_>>(),
    );
    if !(sxx > 0.0) {
        return None;
    }
    let sxy = pairwise_sum(
        &w.iter()
            .zip(x)
            .zip(y)
            .map(|((w, x), y)| w * (x - mx) * (y - my))
            .collect::<Vec<_>>(),
    );
    let slope = sxy / sxx;
    let var = pairwise_sum(
        &w.iter()
            .zip(x)
            .zip(y_err)
            .map(|((w, x), e)| (w * (x - mx) * e).powi(2))
            .collect::<Vec<_>>(),
    ) / (sxx * sxx);
    let se = var.sqrt();
    let z = normal_quantile_two_sided(confidence);
    Some(Regression {
        slope,
        intercept: my - slope * mx,
        slope_stderr: se,
        ci_low: slope - z * se,
        ci_high: slope + z * se,
        confidence,
        ci_method: "normal, weighted least squares",
    })
}

/// Fit of `log y` against `log x`, with `y` errors propagated as `err / y`.
pub fn loglog_fit(x: &[f64], y: &[f64], y_err: &[f64], confidence: f64) -> Option<Regression> {
    if y.iter().any(|&v| !(v > 0.0)) || x.iter().any(|&v| !(v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let le: Vec<f64> = y.iter().zip(y_err).map(|(v, e)| e / v).collect();
    weighted_fit(&lx, &ly, &le, confidence)
}

/// Per-`n` summary line of an experiment.
#[derive(Clone, Debug, Serialize)]
pub struct StatSummary {
    pub n: u64,
    #[serde(flatten)]
    pub moments: Moments,
    /// Extra named columns, in output order.
    pub extra: Vec<(String, f64)>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_are_order_free() {
        let xs: Vec<f64> = (0..1000)
            .map(|i| ((i * 7919) % 1013) as f64 * 1e-3 + 1e8)
            .collect();
        let mut ys = xs.clone();
        ys.reverse();
        ys.swap(3, 500);
        assert_eq!(Moments::of(&xs), Moments::of(&ys));
        let m = Moments::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.variance - 5.0 / 3.0).abs() < 1e-15);
        assert!((m.stderr - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert_eq!(Moments::of(&[3.0]).variance, 0.0);
    }

    #[test]
    fn exact_power_law() {
        let x: Vec<f64> = (8..=14).map(|k| 2f64.powi(k)).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v.powf(0.5)).collect();
        let e: Vec<f64> = y.iter().map(|v| 0.01 * v).collect();
        let r = loglog_fit(&x, &y, &e, 0.95).unwrap();
        assert!((r.slope - 0.5).abs() < 1e-12);
        assert!((r.intercept - 3f64.ln()).abs() < 1e-10);
        assert!(r.ci_low < 0.5 && r.ci_high > 0.5);
        assert!(weighted_fit(&[1.0], &[1.0], &[1.0], 0.95).is_none());
        assert!(weighted_fit(&[1.0, 1.0], &[1.0, 2.0], &[1.0, 1.0], 0.95).is_none());
    }

    #[test]
    fn slope_error_matches_unweighted_formula() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [0.1, 0.9, 2.2, 2.9];
        let r = weighted_fit(&x, &y, &[0.5; 4], 0.95).unwrap();
        // Equal errors s: var(b) = s^2 / sum (x - mean)^2 = 0.25 / 5.
        assert!((r.slope_stderr - (0.05f64).sqrt()).abs() < 1e-14);
    }
}
