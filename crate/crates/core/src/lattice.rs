//! Points and finite point sets of Z^d.

use std::fmt;
use std::ops::{Add, Sub};

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of Z^d.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticePoint(pub Vec<i64>);

impl LatticePoint {
    pub fn new(coords: Vec<i64>) -> Self {
        LatticePoint(coords)
    }

    pub fn origin(dim: usize) -> Self {
        LatticePoint(vec![0; dim])
    }

    /// The unit vector `sign * e_axis`.
    pub fn unit(dim: usize, axis: usize, sign: i64) -> Self {
        let mut c = vec![0; dim];
        c[axis] = sign.signum();
        LatticePoint(c)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn norm_sq(&self) -> i64 {
        self.0.iter().map(|c| c * c).sum()
    }

    pub fn norm(&self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    pub fn l1_norm(&self) -> i64 {
        self.0.iter().map(|c| c.abs()).sum()
    }
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl Add for &LatticePoint {
    type Output = LatticePoint;
    fn add(self, rhs: &LatticePoint) -> LatticePoint {
        LatticePoint(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &LatticePoint {
    type Output = LatticePoint;
    fn sub(self, rhs: &LatticePoint) -> LatticePoint {
        LatticePoint(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl From<Vec<i64>> for LatticePoint {
    fn from(v: Vec<i64>) -> Self {
        LatticePoint(v)
    }
}

/// Offset-binary packing of a lattice point into a single `u64`.
///
/// Uses 16 bits per axis for d <= 4, 12 bits for d = 5 and `64 / d` bits beyond.
#[derive(Clone, Copy, Debug)]
pub struct Packer {
    dim: usize,
    bits: u32,
}

impl Packer {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > 16 {
            return Err(Error::Dimension(dim, 1));
        }
        let bits = if dim <= 4 {
            16
        } else {
            (64 / dim as u32).min(12)
        };
        Ok(Packer { dim, bits })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Largest absolute coordinate that still packs.
    pub fn limit(&self) -> i64 {
        (1i64 << (self.bits - 1)) - 1
    }

    #[inline]
    pub fn pack(&self, p: &[i64]) -> Result<u64> {
        debug_assert_eq!(p.len(), self.dim);
        let half = 1i64 << (self.bits - 1);
        let mut key = 0u64;
        for &c in p {
            if c < -half || c >= half {
                return Err(Error::CoordinateOverflow {
                    value: c,
                    bits: self.bits,
                });
            }
            key = (key << self.bits) | (c + half) as u64;
        }
        Ok(key)
    }

    pub fn unpack(&self, mut key: u64) -> Vec<i64> {
        let half = 1i64 << (self.bits - 1);
        let mask = (1u64 << self.bits) - 1;
        let mut out = vec![0; self.dim];
        for c in out.iter_mut().rev() {
            *c = (key & mask) as i64 - half;
            key >>= self.bits;
        }
        out
    }
}

/// A finite subset of Z^d with stable indexing.
///
/// Points are deduplicated on construction; the number of times each point
/// occurred in the input is kept as its multiplicity, so the raw multiset can
/// still be used where a bound is stated for multisets.
#[derive(Clone, Debug)]
pub struct PointSet {
    dim: usize,
    coords: Vec<i64>,
    multiplicity: Vec<u32>,
    index: FxHashMap<Box<[i64]>, u32>,
}

impl PartialEq for PointSet {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.coords == other.coords
            && self.multiplicity == other.multiplicity
    }
}

impl PointSet {
    pub fn empty(dim: usize) -> Self {
        PointSet {
            dim,
            coords: Vec::new(),
            multiplicity: Vec::new(),
            index: FxHashMap::default(),
        }
    }

    /// Builds a set from a (possibly repeating) sequence of points, keeping
    /// first-occurrence order.
    pub fn from_points<I, P>(dim: usize, points: I) -> Result<Self>
    where
        I: IntoIterator<Item = P>,
        P: AsRef<[i64]>,
    {
        let mut set = PointSet::empty(dim);
        for p in points {
            set.insert(p.as_ref())?;
        }
        Ok(set)
    }

    /// Builds a set from a flat coordinate buffer of length `k * dim`.
    pub fn from_flat(dim: usize, flat: &[i64]) -> Result<Self> {
        if dim == 0 || !flat.len().is_multiple_of(dim) {
            return Err(Error::InvalidParameter(format!(
                "flat buffer of length {} is not a multiple of d = {dim}",
                flat.len()
            )));
        }
        PointSet::from_points(dim, flat.chunks_exact(dim))
    }

    /// Reads one point per CSV row with `dim` integer columns. A first row
    /// that does not parse as integers is taken as a header.
    pub fn read_csv<R: std::io::Read>(dim: usize, r: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(r);
        let mut set = PointSet::empty(dim);
        let mut buf = Vec::with_capacity(dim);
        for (row, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            if rec.iter().all(|f| f.is_empty()) {
                continue;
            }
            buf.clear();
            let parsed: std::result::Result<Vec<i64>, _> =
                rec.iter().map(str::parse::<i64>).collect();
            match parsed {
                Ok(p) => buf.extend(p),
                Err(_) if row == 0 => continue,
                Err(e) => return Err(Error::Parse(format!("row {}: {e}", row + 1))),
            }
            if buf.len() != dim {
                return Err(Error::Parse(format!(
                    "row {}: expected {dim} coordinates, got {}",
                    row + 1,
                    buf.len()
                )));
            }
            set.insert(&buf)?;
        }
        Ok(set)
    }

    /// CSV with header `x1,..,xd`, one row per occurrence.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let header: Vec<String> = (1..=self.dim).map(|j| format!("x{j}")).collect();
        let io = |e: csv::Error| Error::Parse(e.to_string());
        out.write_record(&header).map_err(io)?;
        for (i, p) in self.iter().enumerate() {
            for _ in 0..self.multiplicity(i) {
                out.write_record(p.iter().map(|c| c.to_string()))
                    .map_err(io)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Inserts a point; returns its index. Repeated points bump the multiplicity.
    pub fn insert(&mut self, p: &[i64]) -> Result<usize> {
        if p.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: p.len(),
            });
        }
        if let Some(&i) = self.index.get(p) {
            self.multiplicity[i as usize] += 1;
            return Ok(i as usize);
        }
        let i = self.multiplicity.len();
        self.coords.extend_from_slice(p);
        self.multiplicity.push(1);
        self.index.insert(p.into(), i as u32);
        Ok(i)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of distinct points.
    pub fn len(&self) -> usize {
        self.multiplicity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.multiplicity.is_empty()
    }

    pub fn point(&self, i: usize) -> &[i64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[i64]> + '_ {
        self.coords.chunks_exact(self.dim.max(1))
    }

    pub fn flat(&self) -> &[i64] {
        &self.coords
    }

    pub fn multiplicity(&self, i: usize) -> u32 {
        self.multiplicity[i]
    }

    pub fn multiplicities(&self) -> &[u32] {
        &self.multiplicity
    }

    /// Size of the raw multiset (sum of multiplicities).
    pub fn total_multiplicity(&self) -> u64 {
        self.multiplicity.iter().map(|&m| m as u64).sum()
    }

    pub fn has_repeats(&self) -> bool {
        self.multiplicity.iter().any(|&m| m > 1)
    }

    pub fn index_of(&self, p: &[i64]) -> Option<usize> {
        self.index.get(p).map(|&i| i as usize)
    }

    pub fn contains(&self, p: &[i64]) -> bool {
        self.index.contains_key(p)
    }

    /// Same points, every multiplicity reset to one.
    pub fn deduplicated(&self) -> PointSet {
        let mut s = self.clone();
        s.multiplicity.iter_mut().for_each(|m| *m = 1);
        s
    }

    /// Multiset union: points of `other` are appended, multiplicities add.
    pub fn union(&self, other: &PointSet) -> Result<PointSet> {
        self.check_dim(other)?;
        let mut s = self.clone();
        for (i, p) in other.iter().enumerate() {
            let m = other.multiplicity(i);
            let idx = s.insert(p)?;
            s.multiplicity[idx] += m - 1;
        }
        Ok(s)
    }

    /// Points of `self` that are not in `other` (multiplicities kept).
    pub fn difference(&self, other: &PointSet) -> Result<PointSet> {
        self.check_dim(other)?;
        let mut s = PointSet::empty(self.dim);
        for (i, p) in self.iter().enumerate() {
            if !other.contains(p) {
                let idx = s.insert(p)?;
                s.multiplicity[idx] = self.multiplicity(i);
            }
        }
        Ok(s)
    }

    pub fn is_subset_of(&self, other: &PointSet) -> bool {
        self.dim == other.dim && self.iter().all(|p| other.contains(p))
    }

    /// Equality as sets (ignores order and multiplicity).
    pub fn same_points(&self, other: &PointSet) -> bool {
        self.len() == other.len() && self.is_subset_of(other)
    }

    pub fn translate(&self, z: &[i64]) -> Result<PointSet> {
        if z.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: z.len(),
            });
        }
        let mut s = PointSet::empty(self.dim);
        let mut buf = vec![0; self.dim];
        for (i, p) in self.iter().enumerate() {
            for ((b, a), c) in buf.iter_mut().zip(p).zip(z) {
                *b = a + c;
            }
            let idx = s.insert(&buf)?;
            s.multiplicity[idx] = self.multiplicity(i);
        }
        Ok(s)
    }

    /// Axis-aligned bounding box `(min, max)`; `None` for the empty set.
    pub fn bounding_box(&self) -> Option<(Vec<i64>, Vec<i64>)> {
        let mut it = self.iter();
        let first = it.next()?;
        let mut lo = first.to_vec();
        let mut hi = first.to_vec();
        for p in it {
            for j in 0..self.dim {
                lo[j] = lo[j].min(p[j]);
                hi[j] = hi[j].max(p[j]);
            }
        }
        Some((lo, hi))
    }

    /// Lattice point nearest to the midpoint of the bounding box.
    pub fn center(&self) -> Vec<i64> {
        match self.bounding_box() {
            Some((lo, hi)) => lo
                .iter()
                .zip(&hi)
                .map(|(a, b)| (a + b).div_euclid(2))
                .collect(),
            None => vec![0; self.dim],
        }
    }

    /// Largest Euclidean distance from `c` to a point of the set.
    pub fn radius_about(&self, c: &[f64]) -> f64 {
        self.iter()
            .map(|p| {
                p.iter()
                    .zip(c)
                    .map(|(&a, b)| (a as f64 - b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Euclidean diameter. Exact for up to 4096 points, bounding-box diagonal beyond.
    pub fn diameter(&self) -> f64 {
        let k = self.len();
        if k <= 1 {
            return 0.0;
        }
        if k > 4096 {
            let (lo, hi) = self.bounding_box().unwrap();
            return lo
                .iter()
                .zip(&hi)
                .map(|(a, b)| ((b - a) as f64).powi(2))
                .sum::<f64>()
                .sqrt();
        }
        let mut best = 0i64;
        for i in 0..k {
            let p = self.point(i);
            for j in i + 1..k {
                let q = self.point(j);
                let r2: i64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                best = best.max(r2);
            }
        }
        (best as f64).sqrt()
    }

    pub fn to_points(&self) -> Vec<LatticePoint> {
        self.iter().map(|p| LatticePoint(p.to_vec())).collect()
    }

    /// Points sorted lexicographically (useful for comparisons).
    pub fn sorted_points(&self) -> Vec<Vec<i64>> {
        let mut v: Vec<Vec<i64>> = self.iter().map(|p| p.to_vec()).collect();
        v.sort();
        v
    }

    fn check_dim(&self, other: &PointSet) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let s = PointSet::read_csv(3, "x,y,z\n0,0,0\n 1, 0,0\n\n0,0,0\n".as_bytes()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.multiplicity(0), 2);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(PointSet::read_csv(3, buf.as_slice()).unwrap(), s);
        assert_eq!(PointSet::read_csv(2, "3,4\n".as_bytes()).unwrap().len(), 1);
        assert!(PointSet::read_csv(3, "1,2\n".as_bytes()).is_err());
        assert!(PointSet::read_csv(2, "1,2\n1,a\n".as_bytes()).is_err());
    }

    #[test]
    fn dedup_keeps_first_occurrence_order_and_multiplicity() {
        let s = PointSet::from_points(2, [[1, 2], [0, 0], [1, 2], [1, 2]]).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.point(0), &[1, 2]);
        assert_eq!(s.multiplicity(0), 3);
        assert_eq!(s.total_multiplicity(), 4);
        assert!(s.has_repeats());
        assert!(!s.deduplicated().has_repeats());
    }

    #[test]
    fn packing_round_trips_and_rejects_overflow() {
        let p = Packer::new(3).unwrap();
        assert_eq!(p.bits(), 16);
        let x = [-32768, 0, 32767];
        assert_eq!(p.unpack(p.pack(&x).unwrap()), x.to_vec());
        assert!(matches!(
            p.pack(&[32768, 0, 0]),
            Err(Error::CoordinateOverflow { .. })
        ));
        let p5 = Packer::new(5).unwrap();
        assert_eq!(p5.bits(), 12);
        assert!(p5.pack(&[2048, 0, 0, 0, 0]).is_err());
        assert!(p5.pack(&[2047, -2048, 0, 0, 0]).is_ok());
        assert_eq!(Packer::new(6).unwrap().bits(), 10);
    }

    #[test]
    fn union_and_difference() {
        let a = PointSet::from_points(1, [[0], [1]]).unwrap();
        let b = PointSet::from_points(1, [[1], [2]]).unwrap();
        let u = a.union(&b).unwrap();
        assert_eq!(u.len(), 3);
        assert_eq!(u.total_multiplicity(), 4);
        let d = a.difference(&b).unwrap();
        assert_eq!(d.sorted_points(), vec![vec![0]]);
    }

    #[test]
    fn diameter_and_center() {
        let s = PointSet::from_points(2, [[0, 0], [3, 4], [1, 1]]).unwrap();
        assert_eq!(s.diameter(), 5.0);
        assert_eq!(s.center(), vec![1, 2]);
    }
}
