//! Independent evaluation of `G(0, x)` from the torus integral.
//!
//! One axis is integrated in closed form,
//! `(2 pi)^{-1} int cos(n t) / (A - cos t) dt = z^|n| / sqrt(A^2 - 1)` with
//! `z = A - sqrt(A^2 - 1)`, leaving an integral over `[0, pi]^{d-1}` whose
//! only singularity sits at the origin. Splitting the cube into `d - 1`
//! pyramids with apex there and using `t^{m-1}` from the Jacobian removes the
//! singularity, so a tensor Gauss-Legendre rule converges quickly.

use std::f64::consts::PI;

use crate::numeric::unit_rule;

/// `G(0, x)` via the reduced Fourier integral with `nodes` points per axis.
pub fn green_fourier(x: &[i64], nodes: usize) -> f64 {
    let d = x.len();
    assert!(d >= 3, "Green's function needs d >= 3");
    let mut ax: Vec<i64> = x.iter().map(|c| c.abs()).collect();
    ax.sort_unstable_by(|a, b| b.cmp(a));
    let n1 = ax[0] as i32;
    let rest = &ax[1..];
    let m = d - 1;
    let (t, w) = unit_rule(nodes);

    let mut theta = vec![0.0f64; m];
    let mut idx = vec![0usize; m - 1];
    let mut total = 0.0;
    for apex_axis in 0..m {
        for (ti, wt) in t.iter().zip(w) {
            let tp = PI * ti;
            let jac = wt * ti.powi(m as i32 - 1);
            idx.iter_mut().for_each(|v| *v = 0);
            loop {
                let mut wu = jac;
                let mut k = 0;
                for (j, th) in theta.iter_mut().enumerate() {
                    if j == apex_axis {
                        *th = tp;
                    } else {
                        *th = tp * t[idx[k]];
                        wu *= w[idx[k]];
                        k += 1;
                    }
                }
                // A - 1 = sum_j 2 sin^2(theta_j / 2), kept free of cancellation.
                let am1: f64 = theta
                    .iter()
                    .map(|th| 2.0 * (0.5 * th).sin().powi(2))
                    .sum::<f64>();
                let root = (am1 * (am1 + 2.0)).sqrt();
                let z = 1.0 / (1.0 + am1 + root);
                let mut f = d as f64 * z.powi(n1) / root;
                for (th, &xj) in theta.iter().zip(rest) {
                    f *= (xj as f64 * th).cos();
                }
                total += wu * f;

                let mut pos = 0;
                loop {
                    if pos == m - 1 {
                        break;
                    }
                    idx[pos] += 1;
                    if idx[pos] < nodes {
                        break;
                    }
                    idx[pos] = 0;
                    pos += 1;
                }
                if pos == m - 1 {
                    break;
                }
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_value_d3() {
        let g = green_fourier(&[0, 0, 0], 48);
        assert!((g - 1.516_386_059_151_978).abs() < 1e-10, "{g}");
    }

    #[test]
    fn neighbour_is_origin_minus_one() {
        let g0 = green_fourier(&[0, 0, 0, 0], 24);
        let g1 = green_fourier(&[1, 0, 0, 0], 24);
        assert!((g0 - g1 - 1.0).abs() < 1e-9);
    }
}
