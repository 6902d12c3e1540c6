//! Simple random walk on Z^d: paths, ranges and path statistics.

use std::io::{Read, Write};

use rand::{Rng, RngCore};
use rustc_hash::FxHashSet;

use crate::error::{Error, Result};
use crate::lattice::{Packer, PointSet};
use crate::rng::SeedPolicy;

const MAGIC: &[u8; 4] = b"LCWK";

/// Direction index `k` moves along axis `k / 2`, positively when `k` is even.
#[inline]
pub fn apply_direction(pos: &mut [i64], dir: u8) {
    let axis = (dir >> 1) as usize;
    if dir & 1 == 0 {
        pos[axis] += 1;
    } else {
        pos[axis] -= 1;
    }
}

/// A simple random walk trajectory `S_0 = 0, S_1, ..., S_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkPath {
    dim: usize,
    seed: Option<SeedPolicy>,
    directions: Vec<u8>,
    positions: Vec<i64>,
}

/// Sites visited over the index interval `(a, b]`, in order of first visit.
#[derive(Clone, Debug)]
pub struct RangeSet {
    pub set: PointSet,
    pub a: usize,
    pub b: usize,
}

impl RangeSet {
    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }
}

/// Simulates `n` steps of simple random walk on Z^d from the origin.
pub fn simulate_path(dim: usize, n: usize, seed: SeedPolicy) -> Result<WalkPath> {
    let mut rng = seed.rng();
    let mut path = simulate_with(dim, n, &mut rng)?;
    path.seed = Some(seed);
    Ok(path)
}

/// Same as [`simulate_path`] with a caller-supplied generator.
pub fn simulate_with<R: RngCore>(dim: usize, n: usize, rng: &mut R) -> Result<WalkPath> {
    if dim == 0 || dim > 64 {
        return Err(Error::Dimension(dim, 1));
    }
    let choices = (2 * dim) as u8;
    let directions: Vec<u8> = (0..n).map(|_| rng.gen_range(0..choices)).collect();
    WalkPath::from_directions(dim, directions)
}

impl WalkPath {
    /// Builds a path from explicit step directions (see [`apply_direction`]).
    pub fn from_directions(dim: usize, directions: Vec<u8>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension(dim, 1));
        }
        if let Some(&bad) = directions.iter().find(|&&k| k as usize >= 2 * dim) {
            return Err(Error::InvalidParameter(format!(
                "direction {bad} invalid for d = {dim}"
            )));
        }
        let mut positions = Vec::with_capacity((directions.len() + 1) * dim);
        let mut cur = vec![0i64; dim];
        positions.extend_from_slice(&cur);
        for &k in &directions {
            apply_direction(&mut cur, k);
            positions.extend_from_slice(&cur);
        }
        Ok(WalkPath {
            dim,
            seed: None,
            directions,
            positions,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of steps.
    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn seed(&self) -> Option<SeedPolicy> {
        self.seed
    }

    pub fn directions(&self) -> &[u8] {
        &self.directions
    }

    /// `S_i`.
    pub fn position(&self, i: usize) -> &[i64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    /// Sites of `{S_{a+1}, ..., S_b}` in order of first visit.
    pub fn range_of(&self, a: usize, b: usize) -> Result<RangeSet> {
        Ok(self.range_with_times(a, b)?.0)
    }

    /// Like [`WalkPath::range_of`], also returning the step index of each first visit.
    pub fn range_with_times(&self, a: usize, b: usize) -> Result<(RangeSet, Vec<usize>)> {
        if a > b || b > self.len() {
            return Err(Error::Index(format!(
                "interval ({a}, {b}] outside path of length {}",
                self.len()
            )));
        }
        let packer = Packer::new(self.dim)?;
        let mut seen = FxHashSet::default();
        seen.reserve(b - a);
        let mut set = PointSet::empty(self.dim);
        let mut times = Vec::new();
        for i in a + 1..=b {
            let p = self.position(i);
            if seen.insert(packer.pack(p)?) {
                set.insert(p)?;
                times.push(i);
            }
        }
        Ok((RangeSet { set, a, b }, times))
    }

    /// `max_{1 <= i <= n} |S_i|` (Euclidean).
    pub fn max_norm(&self) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::Empty("max_norm of a path with no steps"));
        }
        let best = (1..=self.len())
            .map(|i| self.position(i).iter().map(|c| c * c).sum::<i64>())
            .max()
            .unwrap();
        Ok((best as f64).sqrt())
    }

    /// Little-endian binary export: header followed by one direction byte per step.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let seed = self.seed.unwrap_or(SeedPolicy::new(0));
        w.write_all(MAGIC)?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&seed.master.to_le_bytes())?;
        w.write_all(&seed.lane.to_le_bytes())?;
        w.write_all(&seed.replica.to_le_bytes())?;
        w.write_all(&self.directions)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Parse("not a walk file".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        if u32::from_le_bytes(b4) != 1 {
            return Err(Error::Parse("unsupported walk file version".into()));
        }
        r.read_exact(&mut b4)?;
        let dim = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        let mut words = [0u64; 3];
        for w in words.iter_mut() {
            r.read_exact(&mut b8)?;
            *w = u64::from_le_bytes(b8);
        }
        let mut directions = vec![0u8; n];
        r.read_exact(&mut directions)?;
        let mut path = WalkPath::from_directions(dim, directions)?;
        path.seed = Some(SeedPolicy {
            master: words[0],
            lane: words[1],
            replica: words[2],
        });
        Ok(path)
    }

    /// One position per line, coordinates separated by spaces.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        for i in 0..=self.len() {
            let line: Vec<String> = self.position(i).iter().map(|c| c.to_string()).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Generator that always yields zero bits, forcing direction 0 (`+e_1`).
    struct Zeros;
    impl RngCore for Zeros {
        fn next_u32(&mut self) -> u32 {
            0
        }
        fn next_u64(&mut self) -> u64 {
            0
        }
        fn fill_bytes(&mut self, dest: &mut [u8]) {
            dest.fill(0)
        }
        fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
            dest.fill(0);
            Ok(())
        }
    }

    #[test]
    fn empty_walk_is_origin() {
        let p = simulate_path(3, 0, SeedPolicy::new(1)).unwrap();
        assert_eq!(p.len(), 0);
        assert_eq!(p.position(0), &[0, 0, 0]);
        assert!(p.max_norm().is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let s = SeedPolicy::new(99).replica(5);
        let a = simulate_path(3, 10_000, s).unwrap();
        let b = simulate_path(3, 10_000, s).unwrap();
        assert_eq!(a, b);
        let c = simulate_path(3, 10_000, s.replica(6)).unwrap();
        assert_ne!(a.directions(), c.directions());
    }

    #[test]
    fn increments_are_unit_and_uniform() {
        let n = 1_000_000;
        let p = simulate_path(3, n, SeedPolicy::new(2024)).unwrap();
        let mut counts = [0usize; 6];
        for i in 0..n {
            let l1: i64 = p
                .position(i + 1)
                .iter()
                .zip(p.position(i))
                .map(|(a, b)| (a - b).abs())
                .sum();
            assert_eq!(l1, 1);
            counts[p.directions()[i] as usize] += 1;
        }
        let mean = n as f64 / 6.0;
        let sd = (n as f64 * (1.0 / 6.0) * (5.0 / 6.0)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() < 4.0 * sd, "count {c} vs {mean}");
        }
    }

    #[test]
    fn range_edge_cases() {
        let p = simulate_path(3, 50, SeedPolicy::new(3)).unwrap();
        assert!(p.range_of(7, 7).unwrap().is_empty());
        let one = p.range_of(0, 1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.set.point(0), p.position(1));
        assert!(p.range_of(3, 51).is_err());
        assert!(p.range_of(5, 4).is_err());
        assert!(p.range_of(0, 50).unwrap().len() <= 50);
    }

    #[test]
    fn forced_walk_along_axis() {
        let p = simulate_with(3, 17, &mut Zeros).unwrap();
        assert_eq!(p.position(17), &[17, 0, 0]);
        assert_eq!(p.max_norm().unwrap(), 17.0);
        let single = simulate_path(4, 1, SeedPolicy::new(0)).unwrap();
        assert_eq!(single.max_norm().unwrap(), 1.0);
    }

    #[test]
    fn range_fraction_near_escape_probability() {
        // |R_n| / n -> P(no return) = 1 / G(0,0) ~ 0.659 in d = 3.
        let n = 1 << 14;
        let reps = 16;
        let mean: f64 = (0..reps)
            .map(|r| {
                simulate_path(3, n, SeedPolicy::new(11).replica(r))
                    .unwrap()
                    .range_of(0, n)
                    .unwrap()
                    .len() as f64
                    / n as f64
            })
            .sum::<f64>()
            / reps as f64;
        assert!((mean - 0.659).abs() < 0.02, "mean range fraction {mean}");
    }

    #[test]
    fn binary_and_text_export() {
        let p = simulate_path(4, 100, SeedPolicy::new(8).replica(2)).unwrap();
        let mut buf = Vec::new();
        p.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 4 + 8 + 24 + 100);
        let q = WalkPath::read_binary(&buf[..]).unwrap();
        assert_eq!(p, q);
        let mut txt = Vec::new();
        p.write_text(&mut txt).unwrap();
        let text = String::from_utf8(txt).unwrap();
        assert_eq!(text.lines().count(), 101);
        assert_eq!(text.lines().next().unwrap(), "0 0 0 0");
    }
}
