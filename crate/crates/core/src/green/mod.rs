//! Lattice Green's function `G(0, x)` of simple random walk on Z^d, d >= 3,
//! and the Brownian Green's functions.
//!
//! Near the origin values come from [`bessel::green_bessel`] and are memoised
//! under the signed-permutation symmetry of the lattice. Beyond the switch
//! radius the two-term far-field expansion
//!
//! ```text
//! G(x) ~ a_d r^{2-d} (1 + d(d-2)/24 * ((d+2) S4 - 3) / r^2),   S4 = sum x_j^4 / r^4
//! ```
//!
//! is used, with `a_d = d Gamma(d/2 - 1) / (2 pi^{d/2})`.

pub mod bessel;
pub mod fourier;
mod visits;

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock, RwLock};

use rayon::prelude::*;
use rustc_hash::{FxHashMap, FxHashSet};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::PointSet;
use crate::numeric::gamma_half_integer;

pub use bessel::{green_bessel, BesselRule};
pub use fourier::green_fourier;
pub use visits::visit_count_estimate;

/// Environment variable naming the directory used by [`GreenTable::open_cached`].
pub const CACHE_ENV: &str = "LATCAP_GREEN_CACHE";

const MAX_DIM: usize = 8;
const QUADRATURE_ERROR: f64 = 1e-11;
const MAGIC: &[u8; 4] = b"LCGT";

/// Settings of a [`GreenTable`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GreenConfig {
    pub dim: usize,
    /// Gauss-Legendre nodes per panel of the Bessel integral.
    pub nodes: usize,
    /// Radius beyond which the far-field expansion is used.
    pub switch_radius: f64,
    /// Absolute accuracy target.
    pub tolerance: f64,
}

impl GreenConfig {
    pub fn new(dim: usize) -> Self {
        GreenConfig {
            dim,
            nodes: 20,
            switch_radius: 25.0,
            tolerance: 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Quadrature,
    Asymptotic,
}

/// A Green's function value with its provenance and absolute error bound.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GreenValue {
    pub value: f64,
    pub regime: Regime,
    pub error_bound: f64,
}

/// `a_d`, the constant in `G(x) ~ a_d |x|^{2-d}`.
pub fn leading_constant(dim: usize) -> f64 {
    dim as f64 * gamma_half_integer(dim as u32 - 2) / (2.0 * PI.powf(dim as f64 / 2.0))
}

/// Leading-order asymptotic `a_d |x|^{2-d}`.
pub fn green_asymptotic(dim: usize, x: &[i64]) -> Result<f64> {
    if dim < 3 {
        return Err(Error::Dimension(dim, 3));
    }
    if x.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: x.len(),
        });
    }
    let r2: i64 = x.iter().map(|c| c * c).sum();
    if r2 == 0 {
        return Err(Error::Domain("green_asymptotic at x = 0".into()));
    }
    Ok(leading_constant(dim) * (r2 as f64).powf(1.0 - dim as f64 / 2.0))
}

/// Green's function of Brownian motion (generator `Delta/2`) in d = 3 or 4.
pub fn brownian_green(dim: usize, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != dim || y.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: x.len().min(y.len()),
        });
    }
    let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    if r2 == 0.0 {
        return Err(Error::Domain("brownian_green at x = y".into()));
    }
    match dim {
        3 => Ok(1.0 / (2.0 * PI * r2.sqrt())),
        4 => Ok(1.0 / (2.0 * PI * PI * r2)),
        _ => Err(Error::InvalidParameter(format!(
            "brownian_green is implemented for d = 3, 4, not {dim}"
        ))),
    }
}

#[derive(Clone, Copy, Debug)]
struct FarField {
    dim: usize,
    a: f64,
    c: f64,
}

impl FarField {
    fn new(dim: usize) -> Self {
        FarField {
            dim,
            a: leading_constant(dim),
            c: (dim * (dim - 2)) as f64 / 24.0,
        }
    }

    #[inline]
    fn eval(&self, x: &[i64], r2: i64) -> f64 {
        let r2f = r2 as f64;
        let mut q = 0.0;
        for &c in x {
            let c2 = (c * c) as f64;
            q += c2 * c2;
        }
        let s4 = q / (r2f * r2f);
        let lead = match self.dim {
            3 => self.a / r2f.sqrt(),
            4 => self.a / r2f,
            5 => self.a / (r2f * r2f.sqrt()),
            6 => self.a / (r2f * r2f),
            d => self.a * r2f.powf(1.0 - d as f64 / 2.0),
        };
        lead * (1.0 + self.c * ((self.dim + 2) as f64 * s4 - 3.0) / r2f)
    }
}

/// Canonical cache key: absolute values sorted decreasingly, 16 bits each.
#[inline]
fn canonical_key(x: &[i64]) -> u128 {
    let mut buf = [0u64; MAX_DIM];
    let n = x.len();
    for (b, c) in buf.iter_mut().zip(x) {
        *b = c.unsigned_abs();
    }
    let s = &mut buf[..n];
    s.sort_unstable_by(|a, b| b.cmp(a));
    let mut key = 0u128;
    for &v in s.iter() {
        key = (key << 16) | v as u128;
    }
    key
}

fn unpack_key(mut key: u128, dim: usize) -> Vec<i64> {
    let mut out = vec![0i64; dim];
    for slot in out.iter_mut().rev() {
        *slot = (key & 0xffff) as i64;
        key >>= 16;
    }
    out
}

/// Memoised evaluator of `G(0, x)` in a fixed dimension.
#[derive(Debug)]
pub struct GreenTable {
    cfg: GreenConfig,
    rule: BesselRule,
    switch2: i64,
    far: FarField,
    remainder: f64,
    envelope: OnceLock<(f64, f64)>,
    cache: RwLock<Arc<FxHashMap<u128, f64>>>,
}

impl GreenTable {
    pub fn new(dim: usize) -> Result<Self> {
        Self::with_config(GreenConfig::new(dim))
    }

    /// Builds a table. The switch radius is raised if the measured far-field
    /// remainder at the requested radius would exceed the tolerance.
    pub fn with_config(cfg: GreenConfig) -> Result<Self> {
        if cfg.dim < 3 {
            return Err(Error::Dimension(cfg.dim, 3));
        }
        if cfg.dim > MAX_DIM {
            return Err(Error::InvalidParameter(format!(
                "Green tables support d <= {MAX_DIM}"
            )));
        }
        if !(cfg.switch_radius >= 4.0) || !(cfg.tolerance > 0.0) || cfg.nodes < 8 {
            return Err(Error::InvalidParameter(
                "switch radius >= 4, tolerance > 0, nodes >= 8".into(),
            ));
        }
        let rule = BesselRule {
            nodes: cfg.nodes,
            ..BesselRule::default()
        };
        let far = FarField::new(cfg.dim);
        let remainder = measure_remainder(cfg.dim, cfg.switch_radius, rule, far);
        let needed = (remainder / cfg.tolerance).powf(1.0 / (cfg.dim + 2) as f64);
        let switch = cfg.switch_radius.max(needed.ceil());
        let cfg = GreenConfig {
            switch_radius: switch,
            ..cfg
        };
        let switch2 = (switch * switch).floor() as i64;
        Ok(GreenTable {
            cfg,
            rule,
            switch2,
            far,
            remainder,
            envelope: OnceLock::new(),
            cache: RwLock::new(Arc::new(FxHashMap::default())),
        })
    }

    pub fn dim(&self) -> usize {
        self.cfg.dim
    }

    /// Effective configuration (switch radius after any adjustment).
    pub fn config(&self) -> GreenConfig {
        self.cfg
    }

    /// Number of memoised canonical displacements.
    pub fn cached_len(&self) -> usize {
        self.cache.read().unwrap().len()
    }

    fn check(&self, x: &[i64]) -> Result<()> {
        if x.len() != self.cfg.dim {
            return Err(Error::DimensionMismatch {
                expected: self.cfg.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `G(0, x)` with regime and error bound.
    pub fn green(&self, x: &[i64]) -> Result<GreenValue> {
        self.check(x)?;
        let r2: i64 = x.iter().map(|c| c * c).sum();
        if r2 > self.switch2 {
            let bound = self.remainder * (r2 as f64).powf(-((self.cfg.dim + 2) as f64) / 2.0);
            return Ok(GreenValue {
                value: self.far.eval(x, r2),
                regime: Regime::Asymptotic,
                error_bound: bound,
            });
        }
        Ok(GreenValue {
            value: self.near(x),
            regime: Regime::Quadrature,
            error_bound: QUADRATURE_ERROR,
        })
    }

    /// `G(x, y) = G(0, y - x)`.
    pub fn green_between(&self, x: &[i64], y: &[i64]) -> Result<GreenValue> {
        self.check(x)?;
        self.check(y)?;
        let dx: Vec<i64> = x.iter().zip(y).map(|(a, b)| b - a).collect();
        self.green(&dx)
    }

    /// Value only; panics on a dimension mismatch.
    pub fn value(&self, x: &[i64]) -> f64 {
        self.green(x).expect("dimension mismatch").value
    }

    /// Direct quadrature, bypassing cache and far field.
    pub fn quadrature(&self, x: &[i64]) -> Result<f64> {
        self.check(x)?;
        Ok(green_bessel(x, self.rule))
    }

    /// Far-field expansion as used by the table beyond the switch radius.
    pub fn far_field(&self, x: &[i64]) -> Result<f64> {
        self.check(x)?;
        let r2: i64 = x.iter().map(|c| c * c).sum();
        if r2 == 0 {
            return Err(Error::Domain("far field at x = 0".into()));
        }
        Ok(self.far.eval(x, r2))
    }

    fn near(&self, x: &[i64]) -> f64 {
        let key = canonical_key(x);
        if let Some(&v) = self.cache.read().unwrap().get(&key) {
            return v;
        }
        let v = green_bessel(&unpack_key(key, self.cfg.dim), self.rule);
        let mut guard = self.cache.write().unwrap();
        Arc::make_mut(&mut guard).insert(key, v);
        v
    }

    /// Computes any missing near-field entries for the given displacements in parallel.
    pub fn ensure<'a, I>(&self, displacements: I)
    where
        I: IntoIterator<Item = &'a [i64]>,
    {
        let keys: FxHashSet<u128> = displacements
            .into_iter()
            .filter(|x| x.iter().map(|c| c * c).sum::<i64>() <= self.switch2)
            .map(canonical_key)
            .collect();
        self.ensure_keys(keys);
    }

    fn ensure_keys(&self, keys: FxHashSet<u128>) {
        let missing: Vec<u128> = {
            let cache = self.cache.read().unwrap();
            let mut m: Vec<u128> = keys
                .into_iter()
                .filter(|k| !cache.contains_key(k))
                .collect();
            m.sort_unstable();
            m
        };
        if missing.is_empty() {
            return;
        }
        let dim = self.cfg.dim;
        let rule = self.rule;
        let values: Vec<(u128, f64)> = missing
            .par_iter()
            .map(|&k| (k, green_bessel(&unpack_key(k, dim), rule)))
            .collect();
        let mut guard = self.cache.write().unwrap();
        let map = Arc::make_mut(&mut guard);
        map.extend(values);
    }

    /// Fills every near-field entry with `|x| <= radius`.
    pub fn prefill(&self, radius: f64) {
        let radius = radius.min(self.cfg.switch_radius);
        let r = radius.floor() as i64;
        let r2 = (radius * radius).floor() as i64;
        let mut keys = FxHashSet::default();
        let mut cur = vec![0i64; self.cfg.dim];
        enumerate_sorted(&mut cur, 0, r, r2, &mut keys);
        self.ensure_keys(keys);
    }

    /// Snapshot evaluator covering every pair of points of `set`.
    pub fn kernel_for(&self, set: &PointSet) -> Result<GreenKernel> {
        if set.dim() != self.cfg.dim {
            return Err(Error::DimensionMismatch {
                expected: self.cfg.dim,
                got: set.dim(),
            });
        }
        self.ensure_keys(self.near_keys(set, set));
        Ok(self.kernel())
    }

    /// Snapshot evaluator covering every pair in `a x b`.
    pub fn kernel_for_pair(&self, a: &PointSet, b: &PointSet) -> Result<GreenKernel> {
        for s in [a, b] {
            if s.dim() != self.cfg.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.cfg.dim,
                    got: s.dim(),
                });
            }
        }
        self.ensure_keys(self.near_keys(a, b));
        Ok(self.kernel())
    }

    fn near_keys(&self, a: &PointSet, b: &PointSet) -> FxHashSet<u128> {
        let d = self.cfg.dim;
        let s2 = self.switch2;
        let bf = b.flat();
        let chunks: Vec<FxHashSet<u128>> = (0..a.len())
            .into_par_iter()
            .fold(FxHashSet::default, |mut acc, i| {
                let p = a.point(i);
                let mut dx = [0i64; MAX_DIM];
                for q in bf.chunks_exact(d) {
                    let mut r2 = 0;
                    for j in 0..d {
                        dx[j] = q[j] - p[j];
                        r2 += dx[j] * dx[j];
                    }
                    if r2 <= s2 {
                        acc.insert(canonical_key(&dx[..d]));
                    }
                }
                acc
            })
            .collect();
        let mut all = FxHashSet::default();
        for c in chunks {
            all.extend(c);
        }
        all
    }

    /// Snapshot of the current cache. Lookups that miss fall back to quadrature.
    pub fn kernel(&self) -> GreenKernel {
        GreenKernel {
            dim: self.cfg.dim,
            switch2: self.switch2,
            near: Arc::clone(&self.cache.read().unwrap()),
            far: self.far,
            rule: self.rule,
        }
    }

    /// Measured `(min, max)` of `G(x) |x|^{d-2}` over sampled directions with
    /// `|x|` in `[r_lo, r_hi]`.
    pub fn envelope(&self, r_lo: f64, r_hi: f64) -> Result<(f64, f64)> {
        if !(r_lo >= 1.0 && r_hi >= r_lo) {
            return Err(Error::InvalidParameter(
                "envelope needs 1 <= r_lo <= r_hi".into(),
            ));
        }
        let d = self.cfg.dim;
        let dirs: Vec<Vec<f64>> = {
            let mut v = vec![vec![0.0; d]; 3];
            v[0][0] = 1.0;
            v[1] = vec![1.0 / (d as f64).sqrt(); d];
            v[2][0] = 2.0 / 5f64.sqrt();
            v[2][1] = 1.0 / 5f64.sqrt();
            v
        };
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        let steps = 24;
        for s in 0..=steps {
            let r = r_lo * (r_hi / r_lo).powf(s as f64 / steps as f64);
            for u in &dirs {
                let x: Vec<i64> = u.iter().map(|c| (c * r).round() as i64).collect();
                let n = (x.iter().map(|c| c * c).sum::<i64>() as f64).sqrt();
                if n < r_lo || n > r_hi {
                    continue;
                }
                let g = self.value(&x) * n.powi(d as i32 - 2);
                lo = lo.min(g);
                hi = hi.max(g);
            }
        }
        Ok((lo, hi))
    }

    /// Measured `(inf, sup)` of `G(x) |x|^{d-2}` over `x != 0`.
    ///
    /// Exhaustive over `|x| <= 12`, sampled along rays up to the switch
    /// radius, and bounded analytically beyond it.
    pub fn envelope_constants(&self) -> (f64, f64) {
        *self.envelope.get_or_init(|| {
            let d = self.cfg.dim;
            self.prefill(12.0);
            let mut lo = f64::INFINITY;
            let mut hi = 0.0f64;
            let mut scan = |x: &[i64]| {
                let r2: i64 = x.iter().map(|c| c * c).sum();
                if r2 > 0 {
                    let v = self.value(x) * (r2 as f64).powf((d as f64 - 2.0) / 2.0);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            };
            let keys: Vec<u128> = self.cache.read().unwrap().keys().copied().collect();
            for k in keys {
                scan(&unpack_key(k, d));
            }
            let sw = self.cfg.switch_radius.floor() as i64;
            for r in 12..=sw {
                let mut axis = vec![0i64; d];
                axis[0] = r;
                scan(&axis);
                let diag = ((r * r) as f64 / d as f64).sqrt().round() as i64;
                scan(&vec![diag; d]);
            }
            let rho = self.cfg.switch_radius;
            let (flo, fhi) = self.far_factor_range(rho);
            (lo.min(flo), hi.max(fhi))
        })
    }

    /// Bounds on `G(x) |x|^{d-2}` for `|x| >= rho > switch radius`.
    fn far_factor_range(&self, rho: f64) -> (f64, f64) {
        let d = self.cfg.dim as f64;
        let c = self.far.c;
        let rem = self.remainder * rho.powf(-d - 2.0) * rho.powf(d - 2.0);
        let t_min = (d + 2.0) / d - 3.0;
        let t_max = d - 1.0;
        let a = self.far.a;
        (
            a * (1.0 + c * t_min / (rho * rho)) - rem,
            a * (1.0 + c * t_max / (rho * rho)) + rem,
        )
    }

    /// Bounds `(lo, hi)` on `G(x)` over the shell `r_in <= |x| <= r_out`.
    pub fn shell_bounds(&self, r_in: f64, r_out: f64) -> (f64, f64) {
        let d = self.cfg.dim as f64;
        let g0 = self.value(&vec![0; self.cfg.dim]);
        let (clo, chi) = if r_in > self.cfg.switch_radius {
            self.far_factor_range(r_in)
        } else {
            self.envelope_constants()
        };
        let hi = if r_in < 1.0 {
            g0
        } else {
            (chi * r_in.powf(2.0 - d)).min(g0)
        };
        let lo = clo * r_out.max(1.0).powf(2.0 - d);
        (lo, hi)
    }

    /// Writes the cache as a binary table.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let cache = self.cache.read().unwrap();
        let mut keys: Vec<&u128> = cache.keys().collect();
        keys.sort_unstable();
        w.write_all(MAGIC)?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(self.cfg.dim as u32).to_le_bytes())?;
        w.write_all(&(self.cfg.nodes as u32).to_le_bytes())?;
        w.write_all(&self.cfg.switch_radius.to_le_bytes())?;
        w.write_all(&self.cfg.tolerance.to_le_bytes())?;
        w.write_all(&(keys.len() as u64).to_le_bytes())?;
        for k in keys {
            for c in unpack_key(*k, self.cfg.dim) {
                w.write_all(&(c as u16).to_le_bytes())?;
            }
            w.write_all(&cache[k].to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a table written by [`GreenTable::save`].
    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Parse(format!(
                "{} is not a Green table",
                path.display()
            )));
        }
        let version = read_u32(&mut r)?;
        if version != 1 {
            return Err(Error::Parse(format!(
                "unsupported Green table version {version}"
            )));
        }
        let dim = read_u32(&mut r)? as usize;
        let nodes = read_u32(&mut r)? as usize;
        let switch_radius = read_f64(&mut r)?;
        let tolerance = read_f64(&mut r)?;
        let count = read_u64(&mut r)? as usize;
        let table = GreenTable::with_config(GreenConfig {
            dim,
            nodes,
            switch_radius,
            tolerance,
        })?;
        let mut map = FxHashMap::default();
        map.reserve(count);
        let mut b2 = [0u8; 2];
        let mut x = vec![0i64; dim];
        for _ in 0..count {
            for c in x.iter_mut() {
                r.read_exact(&mut b2)?;
                *c = u16::from_le_bytes(b2) as i64;
            }
            map.insert(canonical_key(&x), read_f64(&mut r)?);
        }
        *table.cache.write().unwrap() = Arc::new(map);
        Ok(table)
    }

    /// Default table file for `cfg` inside the directory named by `LATCAP_GREEN_CACHE`.
    pub fn cache_path(cfg: &GreenConfig) -> Option<PathBuf> {
        let dir = std::env::var_os(CACHE_ENV)?;
        Some(PathBuf::from(dir).join(format!(
            "green-d{}-n{}-s{}.bin",
            cfg.dim, cfg.nodes, cfg.switch_radius
        )))
    }

    /// Loads the cached table for `cfg` if present, else builds a fresh one.
    pub fn open_cached(cfg: GreenConfig) -> Result<Self> {
        if let Some(p) = Self::cache_path(&cfg) {
            if p.exists() {
                let t = Self::load(&p)?;
                if t.cfg.dim == cfg.dim
                    && t.cfg.nodes == cfg.nodes
                    && t.cfg.tolerance <= cfg.tolerance
                {
                    return Ok(t);
                }
            }
        }
        Self::with_config(cfg)
    }

    /// Saves to the cache directory, if one is configured.
    pub fn persist(&self) -> Result<Option<PathBuf>> {
        match Self::cache_path(&self.cfg) {
            Some(p) => {
                if let Some(parent) = p.parent() {
                    std::fs::create_dir_all(parent)?;
                }
                self.save(&p)?;
                Ok(Some(p))
            }
            None => Ok(None),
        }
    }
}

fn enumerate_sorted(
    cur: &mut Vec<i64>,
    pos: usize,
    bound: i64,
    r2: i64,
    out: &mut FxHashSet<u128>,
) {
    let used: i64 = cur[..pos].iter().map(|c| c * c).sum();
    if pos == cur.len() {
        out.insert(canonical_key(cur));
        return;
    }
    for v in 0..=bound {
        if used + v * v > r2 {
            break;
        }
        cur[pos] = v;
        enumerate_sorted(cur, pos + 1, v, r2, out);
    }
    cur[pos] = 0;
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Twice the largest `|G - far| r^{d+2}` seen on a few directions near `radius`.
fn measure_remainder(dim: usize, radius: f64, rule: BesselRule, far: FarField) -> f64 {
    let r = radius.round() as i64;
    let mut probes = vec![vec![0i64; dim]; 3];
    probes[0][0] = r;
    let diag = (radius / (dim as f64).sqrt()).round() as i64;
    probes[1] = vec![diag; dim];
    probes[2][0] = (radius * 0.8).round() as i64;
    probes[2][1] = (radius * 0.6).round() as i64;
    probes
        .par_iter()
        .map(|x| {
            let r2: i64 = x.iter().map(|c| c * c).sum();
            let err = (green_bessel(x, rule) - far.eval(x, r2)).abs();
            2.0 * err * (r2 as f64).powf((dim + 2) as f64 / 2.0)
        })
        .reduce(|| 0.0, f64::max)
}

/// Immutable, cheap-to-clone evaluator used in hot loops.
#[derive(Clone, Debug)]
pub struct GreenKernel {
    dim: usize,
    switch2: i64,
    near: Arc<FxHashMap<u128, f64>>,
    far: FarField,
    rule: BesselRule,
}

impl GreenKernel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `G(0, dx)`.
    #[inline]
    pub fn at(&self, dx: &[i64]) -> f64 {
        let r2: i64 = dx.iter().map(|c| c * c).sum();
        if r2 > self.switch2 {
            return self.far.eval(dx, r2);
        }
        match self.near.get(&canonical_key(dx)) {
            Some(&v) => v,
            None => green_bessel(dx, self.rule),
        }
    }

    /// `G(a, b)`.
    #[inline]
    pub fn between(&self, a: &[i64], b: &[i64]) -> f64 {
        let mut dx = [0i64; MAX_DIM];
        for j in 0..self.dim {
            dx[j] = b[j] - a[j];
        }
        self.at(&dx[..self.dim])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const G0_D3: f64 = 1.516_386_059_151_978;

    #[test]
    fn origin_and_neighbour_d3() {
        let t = GreenTable::new(3).unwrap();
        let g = t.green(&[0, 0, 0]).unwrap();
        assert_eq!(g.regime, Regime::Quadrature);
        assert!((g.value - G0_D3).abs() < 1e-10);
        assert!((t.value(&[0, 1, 0]) - (G0_D3 - 1.0)).abs() < 1e-10);
    }

    #[test]
    fn rejects_low_dimension() {
        assert!(GreenTable::new(2).is_err());
        assert!(green_asymptotic(2, &[1, 0]).is_err());
        assert!(green_asymptotic(3, &[0, 0, 0]).is_err());
    }

    #[test]
    fn symmetric_under_signed_permutations() {
        let t = GreenTable::new(4).unwrap();
        let a = t.quadrature(&[3, -1, 0, 2]).unwrap();
        for x in [[-3, 1, 0, -2], [2, 0, -1, 3], [0, 3, 2, -1]] {
            assert!((t.quadrature(&x).unwrap() - a).abs() < 1e-14);
            assert_eq!(t.value(&x), t.value(&[3, -1, 0, 2]));
        }
    }

    #[test]
    fn far_axis_point_d3() {
        let t = GreenTable::new(3).unwrap();
        let v = t.green(&[100, 0, 0]).unwrap();
        assert_eq!(v.regime, Regime::Asymptotic);
        let lead = 3.0 / (2.0 * PI * 100.0);
        assert!((v.value / lead - 1.0).abs() < 0.02);
        assert!((t.quadrature(&[100, 0, 0]).unwrap() - v.value).abs() < v.error_bound);
    }

    #[test]
    fn asymptotic_is_homogeneous() {
        for d in 3..=6 {
            let x: Vec<i64> = (1..=d as i64).collect();
            let x2: Vec<i64> = x.iter().map(|c| 2 * c).collect();
            let ratio = green_asymptotic(d, &x2).unwrap() / green_asymptotic(d, &x).unwrap();
            assert!((ratio - 2f64.powi(2 - d as i32)).abs() < 1e-14);
        }
        let a = green_asymptotic(3, &[7, 0, 0]).unwrap();
        assert!((a - 3.0 / (2.0 * PI * 7.0)).abs() < 1e-15);
    }

    #[test]
    fn far_field_error_decays_like_r_minus_d_minus_2() {
        for d in [3usize, 4] {
            let t = GreenTable::new(d).unwrap();
            let mut prev = f64::INFINITY;
            for r in [10i64, 20, 40] {
                let mut x = vec![0i64; d];
                x[0] = r;
                x[1] = r / 2;
                let err = (t.quadrature(&x).unwrap() - t.far_field(&x).unwrap()).abs();
                let scaled = err * ((r * r + r * r / 4) as f64).powf((d + 2) as f64 / 2.0);
                assert!(
                    scaled < 1.5 * prev + 1e-3,
                    "d={d} r={r}: {scaled} vs {prev}"
                );
                prev = scaled;
            }
        }
    }

    #[test]
    fn regimes_agree_at_switch_radius() {
        for d in 3..=5 {
            let t = GreenTable::new(d).unwrap();
            let eps = t.config().tolerance;
            let mut x = vec![0i64; d];
            x[0] = t.config().switch_radius as i64;
            let q = t.quadrature(&x).unwrap();
            let f = t.far_field(&x).unwrap();
            assert!((q - f).abs() <= 2.0 * eps, "d={d}: {q} vs {f}");
        }
    }

    #[test]
    fn brownian_values() {
        assert!(
            (brownian_green(3, &[0.0; 3], &[1.0, 0.0, 0.0]).unwrap() - 0.159_154_943_091_895_3)
                .abs()
                < 1e-15
        );
        assert!(
            (brownian_green(4, &[0.0; 4], &[0.0, 1.0, 0.0, 0.0]).unwrap()
                - 0.050_660_591_821_168_9)
                .abs()
                < 1e-15
        );
        let one = brownian_green(3, &[0.0; 3], &[0.0, 0.0, 1.0]).unwrap();
        let two = brownian_green(3, &[0.0; 3], &[0.0, 0.0, 2.0]).unwrap();
        assert!((two - one / 2.0).abs() < 1e-16);
        assert!(brownian_green(3, &[1.0; 3], &[1.0; 3]).is_err());
        assert!(brownian_green(5, &[0.0; 5], &[1.0; 5]).is_err());
    }

    #[test]
    fn kernel_matches_table() {
        let t = GreenTable::new(3).unwrap();
        let set =
            PointSet::from_points(3, [[0i64, 0, 0], [5, 1, 0], [40, 0, 2], [-3, 3, 3]]).unwrap();
        let k = t.kernel_for(&set).unwrap();
        for p in set.iter() {
            for q in set.iter() {
                let dx: Vec<i64> = q.iter().zip(p).map(|(a, b)| a - b).collect();
                assert_eq!(k.between(p, q), t.value(&dx));
            }
        }
    }

    #[test]
    fn envelopes_bracket_values() {
        for d in [3usize, 4] {
            let t = GreenTable::new(d).unwrap();
            let (lo, hi) = t.envelope_constants();
            assert!(lo > 0.0 && lo < leading_constant(d) && hi > leading_constant(d));
            for r in [3i64, 17, 40, 90] {
                let mut x = vec![0i64; d];
                x[0] = r;
                x[1] = r / 3;
                let n = (x.iter().map(|c| c * c).sum::<i64>() as f64).sqrt();
                let (a, b) = t.shell_bounds(n - 0.5, n + 0.5);
                let g = t.quadrature(&x).unwrap();
                assert!(a <= g && g <= b, "d={d} r={r}: {a} {g} {b}");
            }
        }
    }

    #[test]
    fn persistence_round_trip() {
        let t = GreenTable::new(4).unwrap();
        t.prefill(4.0);
        let n = t.cached_len();
        assert!(n > 5);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.bin");
        t.save(&p).unwrap();
        let u = GreenTable::load(&p).unwrap();
        assert_eq!(u.cached_len(), n);
        assert_eq!(u.value(&[1, 2, 0, 1]), t.value(&[2, 1, 1, 0]));
    }
}
