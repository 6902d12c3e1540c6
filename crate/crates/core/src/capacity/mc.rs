//! Monte Carlo capacity from truncated escape probabilities.
//!
//! From every point of `A` independent walks run until they return to `A` or
//! leave the ball of radius `R = kappa (diam A + 1)` around the centre of
//! `A`. Whenever neither event can happen within the next `m` steps, those
//! steps are taken without checks, and for large `m` replaced by one exact
//! multinomial jump.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use super::{cap_bounds, CapacityEstimate, Method};
use crate::error::{Error, Result};
use crate::green::GreenTable;
use crate::lattice::PointSet;
use crate::rng::SeedPolicy;
use crate::walks::apply_direction;

const CHUNK: usize = 2048;
const MIN_JUMP: i64 = 128;
const EXACT_DISTANCE_MAX: usize = 256;
const FIELD_MARGIN: i64 = 16;
const FIELD_CELLS: usize = 1 << 22;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct McOptions {
    /// Truncation radius factor, `R = kappa (diam + 1)`.
    pub kappa: f64,
    /// Walks per point.
    pub replicas: usize,
    pub seed: SeedPolicy,
    /// Also run to `2R` and combine both radii by Richardson extrapolation.
    pub extrapolate: bool,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions {
            kappa: 32.0,
            replicas: 10_000,
            seed: SeedPolicy::new(0),
            extrapolate: false,
        }
    }
}

/// Exact l1 distances to the set on its bounding box widened by `margin`,
/// by breadth-first search (lattice graph distance is the l1 distance).
struct DistanceField {
    origin: Vec<i64>,
    shape: Vec<i64>,
    strides: Vec<usize>,
    dist: Vec<u16>,
}

impl DistanceField {
    fn new(set: &PointSet, lo: &[i64], hi: &[i64]) -> Option<Self> {
        let d = set.dim();
        let span: Vec<i64> = lo.iter().zip(hi).map(|(l, h)| h - l + 1).collect();
        let mut margin = FIELD_MARGIN;
        let cells = |m: i64| span.iter().map(|s| (s + 2 * m) as f64).product::<f64>();
        while margin > 1 && cells(margin) > FIELD_CELLS as f64 {
            margin /= 2;
        }
        if cells(margin) > FIELD_CELLS as f64 {
            return None;
        }
        let origin: Vec<i64> = lo.iter().map(|l| l - margin).collect();
        let shape: Vec<i64> = span.iter().map(|s| s + 2 * margin).collect();
        let mut strides = vec![1usize; d];
        for j in 1..d {
            strides[j] = strides[j - 1] * shape[j - 1] as usize;
        }
        let total = strides[d - 1] * shape[d - 1] as usize;
        let mut f = DistanceField {
            origin,
            shape,
            strides,
            dist: vec![u16::MAX; total],
        };
        let mut queue = std::collections::VecDeque::new();
        for p in set.iter() {
            let i = f.index(p).unwrap();
            f.dist[i] = 0;
            queue.push_back(i);
        }
        let mut coords = vec![0i64; d];
        while let Some(i) = queue.pop_front() {
            let mut rest = i;
            for j in (0..d).rev() {
                coords[j] = (rest / f.strides[j]) as i64;
                rest %= f.strides[j];
            }
            let next = f.dist[i].saturating_add(1);
            for j in 0..d {
                if coords[j] > 0 && f.dist[i - f.strides[j]] == u16::MAX {
                    f.dist[i - f.strides[j]] = next;
                    queue.push_back(i - f.strides[j]);
                }
                if coords[j] + 1 < f.shape[j] && f.dist[i + f.strides[j]] == u16::MAX {
                    f.dist[i + f.strides[j]] = next;
                    queue.push_back(i + f.strides[j]);
                }
            }
        }
        Some(f)
    }

    #[inline]
    fn index(&self, p: &[i64]) -> Option<usize> {
        let mut i = 0;
        for ((&x, &o), (&n, &s)) in p
            .iter()
            .zip(&self.origin)
            .zip(self.shape.iter().zip(&self.strides))
        {
            let r = x - o;
            if r < 0 || r >= n {
                return None;
            }
            i += r as usize * s;
        }
        Some(i)
    }
}

struct Target<'a> {
    set: &'a PointSet,
    center: Vec<i64>,
    lo: Vec<i64>,
    hi: Vec<i64>,
    field: Option<DistanceField>,
}

impl Target<'_> {
    fn box_distance(&self, p: &[i64]) -> i64 {
        p.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&x, (&l, &h))| (l - x).max(x - h).max(0))
            .sum()
    }

    /// Lower bound on the l1 distance from `p` to the set.
    fn l1_distance(&self, p: &[i64]) -> i64 {
        if let Some(f) = &self.field {
            return match f.index(p) {
                Some(i) => f.dist[i] as i64,
                None => self.box_distance(p),
            };
        }
        if self.set.len() <= EXACT_DISTANCE_MAX {
            self.set
                .iter()
                .map(|a| a.iter().zip(p).map(|(x, y)| (x - y).abs()).sum::<i64>())
                .min()
                .unwrap()
        } else {
            self.box_distance(p)
        }
    }

    fn contains(&self, p: &[i64]) -> bool {
        match &self.field {
            Some(f) => f.index(p).is_some_and(|i| f.dist[i] == 0),
            None => self.set.contains(p),
        }
    }

    fn dist2(&self, p: &[i64]) -> i64 {
        p.iter()
            .zip(&self.center)
            .map(|(x, c)| (x - c) * (x - c))
            .sum()
    }
}

/// Uniform directions in `0..2d` by rejection from a buffered 64-bit word.
struct Directions {
    word: u64,
    left: u32,
    bits: u32,
    count: u64,
}

impl Directions {
    fn new(d: usize) -> Self {
        let count = 2 * d as u64;
        Directions {
            word: 0,
            left: 0,
            bits: 64 - (count - 1).leading_zeros(),
            count,
        }
    }

    #[inline]
    fn next<R: Rng>(&mut self, rng: &mut R) -> u8 {
        loop {
            if self.left < self.bits {
                self.word = rng.next_u64();
                self.left = 64;
            }
            let v = self.word & ((1 << self.bits) - 1);
            self.word >>= self.bits;
            self.left -= self.bits;
            if v < self.count {
                return v as u8;
            }
        }
    }
}

fn jump<R: Rng>(pos: &mut [i64], m: i64, rng: &mut R) {
    let d = pos.len();
    let mut left = m as u64;
    for (j, x) in pos.iter_mut().enumerate() {
        let n = if j + 1 == d {
            left
        } else {
            Binomial::new(left, 1.0 / (d - j) as f64)
                .unwrap()
                .sample(rng)
        };
        left -= n;
        let plus = Binomial::new(n, 0.5).unwrap().sample(rng);
        *x += 2 * plus as i64 - n as i64;
    }
}

/// Runs one walk from `start`; returns whether it left radius `r1` and
/// radius `r2` (`r2 >= r1`) before returning to the set.
fn walk<R: Rng>(t: &Target, start: &[i64], r1: f64, r2: f64, rng: &mut R) -> (bool, bool) {
    let mut dirs = Directions::new(start.len());
    let mut pos = start.to_vec();
    let mut radius = r1;
    let mut out1 = false;
    // Lower bound on the l1 distance to the set.
    let mut l1 = 0i64;
    apply_direction(&mut pos, dirs.next(rng));
    if t.contains(&pos) {
        return (false, false);
    }
    loop {
        let r2now = t.dist2(&pos) as f64;
        if r2now > radius * radius {
            if out1 || r2 <= r1 {
                return (true, true);
            }
            out1 = true;
            radius = r2;
            continue;
        }
        let room = (radius - r2now.sqrt()).floor() as i64;
        if l1 <= room {
            l1 = t.l1_distance(&pos);
        }
        let m = room.min(l1 - 1);
        if m >= MIN_JUMP {
            jump(&mut pos, m, rng);
            l1 -= m;
        } else if m >= 1 {
            for _ in 0..m {
                apply_direction(&mut pos, dirs.next(rng));
            }
            l1 -= m;
        } else {
            apply_direction(&mut pos, dirs.next(rng));
            if t.contains(&pos) {
                return (out1, false);
            }
            l1 = 0;
        }
    }
}

/// Monte Carlo capacity estimate.
///
/// `error` is the standard error. `bias_bound` bounds the truncation bias
/// (walks that leave the ball and later return), using the upper sandwich
/// bound for `Cap` and the measured Green envelope on the exit shell; it
/// includes the 3-sigma uncertainty of the estimated exit frequencies.
pub fn cap_mc(set: &PointSet, table: &GreenTable, opts: &McOptions) -> Result<CapacityEstimate> {
    if set.dim() != table.dim() {
        return Err(Error::DimensionMismatch {
            expected: table.dim(),
            got: set.dim(),
        });
    }
    if set.is_empty() {
        return Err(Error::Empty("cap_mc of an empty set"));
    }
    if opts.replicas == 0 {
        return Err(Error::InvalidParameter(
            "cap_mc needs at least one replica".into(),
        ));
    }
    if !(opts.kappa >= 4.0) {
        return Err(Error::InvalidParameter(format!(
            "kappa = {} < 4",
            opts.kappa
        )));
    }
    let pts = set.deduplicated();
    let k = pts.len();
    let d = pts.dim();
    let center = pts.center();
    let cf: Vec<f64> = center.iter().map(|&c| c as f64).collect();
    let r_a = pts.radius_about(&cf);
    let radius = opts.kappa * (pts.diameter() + 1.0);
    let (lo, hi) = pts.bounding_box().unwrap();
    let field = DistanceField::new(&pts, &lo, &hi);
    let target = Target {
        set: &pts,
        center,
        lo,
        hi,
        field,
    };
    let r2 = if opts.extrapolate {
        2.0 * radius
    } else {
        radius
    };

    let n = opts.replicas;
    let chunks = n.div_ceil(CHUNK);
    let tasks: Vec<(usize, usize)> = (0..k)
        .flat_map(|v| (0..chunks).map(move |c| (v, c)))
        .collect();
    let counts: Vec<(u64, u64)> = tasks
        .par_iter()
        .map(|&(v, c)| {
            let mut rng = opts.seed.lane(v as u64).replica(c as u64).rng();
            let walks = CHUNK.min(n - c * CHUNK);
            let start = pts.point(v);
            let (mut a, mut b) = (0u64, 0u64);
            for _ in 0..walks {
                let (o1, o2) = walk(&target, start, radius, r2, &mut rng);
                a += o1 as u64;
                b += o2 as u64;
            }
            (a, b)
        })
        .collect();
    let mut per_point = vec![(0u64, 0u64); k];
    for (&(v, _), (a, b)) in tasks.iter().zip(counts) {
        per_point[v].0 += a;
        per_point[v].1 += b;
    }

    let nf = n as f64;
    let bern_var = |c: u64| {
        let p = c as f64 / nf;
        if n > 1 {
            p * (1.0 - p) * nf / (nf - 1.0)
        } else {
            0.0
        }
    };
    let s1: f64 = per_point.iter().map(|c| c.0 as f64 / nf).sum();
    let se1 = (per_point.iter().map(|c| bern_var(c.0)).sum::<f64>() / nf).sqrt();
    let s2: f64 = per_point.iter().map(|c| c.1 as f64 / nf).sum();
    let se2 = (per_point.iter().map(|c| bern_var(c.1)).sum::<f64>() / nf).sqrt();

    let (mat_lo, mat_hi) = cap_bounds(&pts, table)?;
    let shell1 = table.shell_bounds(radius - r_a, radius + 1.0 + r_a);
    let s1_hi = s1 + 3.0 * se1;
    let s1_lo = (s1 - 3.0 * se1).max(0.0);
    let cap_hi = mat_hi.min(s1_hi);

    let (value, error, bias) = if !opts.extrapolate {
        (s1, se1, s1_hi * cap_hi * shell1.1)
    } else {
        let w = 2f64.powi(d as i32 - 2);
        // Per walk: Z = (w 1{leave 2R} - 1{leave R}) / (w - 1).
        let mut value = 0.0;
        let mut var = 0.0;
        for &(a, b) in &per_point {
            let (n11, n10) = (b as f64, (a - b) as f64);
            let mean = (n11 - n10 / (w - 1.0)) / nf;
            let m2 = (n11 + n10 / ((w - 1.0) * (w - 1.0))) / nf;
            value += mean;
            if n > 1 {
                var += (m2 - mean * mean).max(0.0) * nf / (nf - 1.0);
            }
        }
        let shell2 = table.shell_bounds(2.0 * radius - r_a, 2.0 * radius + 1.0 + r_a);
        let cap_lo = mat_lo.max(s1_lo * (1.0 - cap_hi * shell1.1));
        let s2_hi = s2 + 3.0 * se2;
        let s2_lo = (s2 - 3.0 * se2).max(0.0);
        let b1 = (s1_lo * cap_lo * shell1.0, s1_hi * cap_hi * shell1.1);
        let b2 = (s2_lo * cap_lo * shell2.0, s2_hi * cap_hi * shell2.1);
        let lo = (w * b2.0 - b1.1) / (w - 1.0);
        let hi = (w * b2.1 - b1.0) / (w - 1.0);
        (value, (var / nf).sqrt(), lo.abs().max(hi.abs()))
    };
    let mut est = CapacityEstimate::new(value.clamp(0.0, k as f64), Method::McEscape, error, k, d)
        .with_meta("R", radius)
        .with_meta("kappa", opts.kappa)
        .with_meta("replicas", n)
        .with_meta("extrapolate", opts.extrapolate)
        .with_meta("exit_sum_R", s1)
        .with_meta("cap_upper", mat_hi);
    if opts.extrapolate {
        est = est.with_meta("exit_sum_2R", s2);
    }
    est.bias_bound = Some(bias);
    Ok(est)
}

/// Number of `walks` walks from `start` that leave the ball of radius
/// `kappa (diam A + 1)` about the centre of `A` without visiting `A` at
/// times `>= 1`. Returns the count and the radius.
pub fn escape_count(
    set: &PointSet,
    start: &[i64],
    kappa: f64,
    walks: usize,
    seed: SeedPolicy,
) -> Result<(u64, f64)> {
    if set.is_empty() {
        return Err(Error::Empty("escape from an empty set"));
    }
    if start.len() != set.dim() {
        return Err(Error::DimensionMismatch {
            expected: set.dim(),
            got: start.len(),
        });
    }
    if !(kappa >= 4.0) {
        return Err(Error::InvalidParameter(format!("kappa = {kappa} < 4")));
    }
    let pts = set.deduplicated();
    let center = pts.center();
    let radius = kappa * (pts.diameter() + 1.0);
    let (lo, hi) = pts.bounding_box().unwrap();
    let field = DistanceField::new(&pts, &lo, &hi);
    let target = Target {
        set: &pts,
        center,
        lo,
        hi,
        field,
    };
    let mut rng = seed.rng();
    let mut escaped = 0;
    for _ in 0..walks {
        escaped += walk(&target, start, radius, radius, &mut rng).0 as u64;
    }
    Ok((escaped, radius))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacity::cap_exact;
    use crate::walks::WalkPath;

    #[test]
    fn jump_matches_stepwise_moments() {
        let mut rng = SeedPolicy::new(1).rng();
        let m = 40;
        let reps = 20_000;
        let mut sum2 = 0.0;
        let mut parity_ok = true;
        for _ in 0..reps {
            let mut p = vec![0i64; 3];
            jump(&mut p, m, &mut rng);
            let l1: i64 = p.iter().map(|c| c.abs()).sum();
            parity_ok &= l1 <= m && (l1 - m) % 2 == 0;
            sum2 += p.iter().map(|c| (c * c) as f64).sum::<f64>();
        }
        assert!(parity_ok);
        // E|S_m|^2 = m.
        let mean = sum2 / reps as f64;
        assert!((mean - m as f64).abs() < 0.05 * m as f64, "{mean}");
    }

    #[test]
    fn directions_are_uniform() {
        for d in [3usize, 4, 5] {
            let mut rng = SeedPolicy::new(d as u64).rng();
            let mut dirs = Directions::new(d);
            let mut counts = vec![0u32; 2 * d];
            let reps = 60_000;
            for _ in 0..reps {
                counts[dirs.next(&mut rng) as usize] += 1;
            }
            let p = 1.0 / (2 * d) as f64;
            let sd = (reps as f64 * p * (1.0 - p)).sqrt();
            for c in counts {
                assert!((c as f64 - reps as f64 * p).abs() < 4.5 * sd);
            }
        }
    }

    #[test]
    fn escape_count_from_a_singleton() {
        let one = PointSet::from_points(3, [[0i64, 0, 0]]).unwrap();
        let walks = 20_000;
        let (hits, radius) =
            escape_count(&one, &[0, 0, 0], 32.0, walks, SeedPolicy::new(5)).unwrap();
        assert_eq!(radius, 32.0);
        let p = hits as f64 / walks as f64;
        let sd = (p * (1.0 - p) / walks as f64).sqrt();
        assert!(
            (p - 1.0 / 1.516_386_059_151_978).abs() < 4.0 * sd + 0.01,
            "{p}"
        );
        assert!(escape_count(&one, &[0, 0], 32.0, 1, SeedPolicy::new(5)).is_err());
    }

    #[test]
    fn rejects_bad_parameters() {
        let t = GreenTable::new(3).unwrap();
        let one = PointSet::from_points(3, [[0i64, 0, 0]]).unwrap();
        assert!(cap_mc(&PointSet::empty(3), &t, &McOptions::default()).is_err());
        assert!(cap_mc(
            &one,
            &t,
            &McOptions {
                replicas: 0,
                ..Default::default()
            }
        )
        .is_err());
        assert!(cap_mc(
            &one,
            &t,
            &McOptions {
                kappa: 3.0,
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn singleton_with_extrapolation() {
        let t = GreenTable::new(3).unwrap();
        let one = PointSet::from_points(3, [[0i64, 0, 0]]).unwrap();
        let opts = McOptions {
            kappa: 64.0,
            replicas: 100_000,
            seed: SeedPolicy::new(11),
            extrapolate: true,
        };
        let est = cap_mc(&one, &t, &opts).unwrap();
        let exact = 1.0 / 1.516_386_059_151_978;
        let bias = est.bias_bound.unwrap();
        assert!(bias < est.error, "bias {bias} se {}", est.error);
        assert!(
            (est.value - exact).abs() <= 3.0 * est.error + bias,
            "{} vs {exact}",
            est.value
        );
    }

    #[test]
    fn small_set_in_d4_and_thread_independence() {
        let t = GreenTable::new(4).unwrap();
        let path = WalkPath::from_directions(4, vec![0, 2, 4, 6, 0, 3, 3, 1]).unwrap();
        let set = path.range_of(0, 8).unwrap().set;
        let opts = McOptions {
            replicas: 5000,
            seed: SeedPolicy::new(3),
            ..Default::default()
        };
        let a = cap_mc(&set, &t, &opts).unwrap();
        let (exact, _) = cap_exact(&set, &t, 1e-10).unwrap();
        assert!((a.value - exact.value).abs() <= 3.0 * a.error + a.bias_bound.unwrap());
        assert!(a.value >= 0.0 && a.value <= set.len() as f64);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(|| cap_mc(&set, &t, &opts)).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }
}
