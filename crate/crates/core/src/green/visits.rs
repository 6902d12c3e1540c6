//! Monte Carlo estimate of `G(0)` from visit counts.

use rand::Rng;
use rayon::prelude::*;

use super::GreenTable;
use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;
use crate::rng::SeedPolicy;
use crate::walks::apply_direction;

const CHUNK: u64 = 1 << 16;

/// Mean and standard error of `#{t < tau : S_t = 0} + G(S_tau)` over `walks`
/// walks from the origin, `tau` being the exit time of the ball of radius
/// `radius`. The strong Markov property makes each term unbiased for `G(0)`.
pub fn visit_count_estimate(
    table: &GreenTable,
    radius: f64,
    walks: u64,
    seed: SeedPolicy,
) -> Result<(f64, f64)> {
    if !(radius >= 1.0) || walks < 2 {
        return Err(Error::InvalidParameter(format!(
            "radius {radius} and {walks} walks"
        )));
    }
    let d = table.dim();
    table.prefill(radius + 2.0);
    let kernel = table.kernel();
    let r2 = radius * radius;
    let chunks = walks.div_ceil(CHUNK);
    let parts: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = seed.lane(c).rng();
            let mut pos = vec![0i64; d];
            let mut ys = Vec::with_capacity(CHUNK as usize);
            for _ in 0..CHUNK.min(walks - c * CHUNK) {
                pos.iter_mut().for_each(|x| *x = 0);
                let mut visits = 0u64;
                loop {
                    let n2: i64 = pos.iter().map(|x| x * x).sum();
                    if n2 as f64 > r2 {
                        break;
                    }
                    visits += (n2 == 0) as u64;
                    apply_direction(&mut pos, rng.gen_range(0..2 * d) as u8);
                }
                ys.push(visits as f64 + kernel.at(&pos));
            }
            let sq: Vec<f64> = ys.iter().map(|y| y * y).collect();
            (pairwise_sum(&ys), pairwise_sum(&sq))
        })
        .collect();
    let n = walks as f64;
    let s: Vec<f64> = parts.iter().map(|p| p.0).collect();
    let q: Vec<f64> = parts.iter().map(|p| p.1).collect();
    let mean = pairwise_sum(&s) / n;
    let var = (pairwise_sum(&q) / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unbiased_for_every_radius() {
        let t = GreenTable::new(3).unwrap();
        let g0 = t.value(&[0, 0, 0]);
        for r in [1.0, 4.0] {
            let (m, se) = visit_count_estimate(&t, r, 200_000, SeedPolicy::new(5)).unwrap();
            assert!((m - g0).abs() < 4.0 * se, "radius {r}: {m} +- {se} vs {g0}");
        }
        assert!(visit_count_estimate(&t, 0.5, 10, SeedPolicy::new(0)).is_err());
    }
}
