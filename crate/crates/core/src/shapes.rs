//! Deterministic test sets: sparse lattice cylinders, balls and chains of balls.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::lattice::PointSet;
use crate::numeric::ceil_tolerant;

/// `C_m(l, r) = (lZ)^3 ∩ {x_1^2 + x_2^2 <= r^2, 1 <= x_3 <= m}`.
pub fn cylinder(m: u64, l: u64, r: u64) -> Result<PointSet> {
    if m < 1 || l < 1 || r < 1 {
        return Err(Error::InvalidParameter(format!(
            "cylinder needs m, l, r >= 1 (got m={m}, l={l}, r={r})"
        )));
    }
    let (m, l, r) = (m as i64, l as i64, r as i64);
    let reach = r / l;
    let mut disc = Vec::new();
    for a in -reach..=reach {
        for b in -reach..=reach {
            let (x, y) = (a * l, b * l);
            if x * x + y * y <= r * r {
                disc.push((x, y));
            }
        }
    }
    let mut set = PointSet::empty(3);
    let mut z = l;
    while z <= m {
        for &(x, y) in &disc {
            set.insert(&[x, y, z])?;
        }
        z += l;
    }
    Ok(set)
}

/// `{x in Z^d : |x - center| <= r}`.
pub fn ball(center: &[i64], r: f64) -> Result<PointSet> {
    let d = center.len();
    if d == 0 {
        return Err(Error::InvalidParameter("ball needs d >= 1".into()));
    }
    if !(r >= 0.0) {
        return Err(Error::InvalidParameter(format!("ball radius {r} < 0")));
    }
    let reach = r.floor() as i64;
    let r2 = r * r;
    let mut set = PointSet::empty(d);
    let mut off = vec![-reach; d];
    let mut p = vec![0i64; d];
    loop {
        let n2: i64 = off.iter().map(|c| c * c).sum();
        if (n2 as f64) <= r2 {
            for ((q, c), o) in p.iter_mut().zip(center).zip(&off) {
                *q = c + o;
            }
            set.insert(&p)?;
        }
        let mut j = 0;
        while j < d {
            off[j] += 1;
            if off[j] <= reach {
                break;
            }
            off[j] = -reach;
            j += 1;
        }
        if j == d {
            break;
        }
    }
    Ok(set)
}

/// Union of the balls `B(z_i, r)`; consecutive centres must be at most `r` apart.
pub fn ball_chain(centers: &[Vec<i64>], r: f64) -> Result<PointSet> {
    let first = centers
        .first()
        .ok_or(Error::Empty("ball chain without centres"))?;
    let d = first.len();
    for (i, w) in centers.windows(2).enumerate() {
        if w[1].len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: w[1].len(),
            });
        }
        let gap = w[0]
            .iter()
            .zip(&w[1])
            .map(|(a, b)| ((a - b) as f64).powi(2))
            .sum::<f64>()
            .sqrt();
        if gap > r {
            return Err(Error::InvalidParameter(format!(
                "centres {i} and {} are {gap:.3} apart, more than r = {r}",
                i + 1
            )));
        }
    }
    let mut set = PointSet::empty(d);
    for c in centers {
        for p in ball(c, r)?.iter() {
            set.insert(p)?;
        }
    }
    Ok(set.deduplicated())
}

/// Points of `set` with at least one lattice neighbour outside `set`.
/// A walk from outside enters `set` through these points, so the capacity of
/// the shell equals the capacity of `set`.
pub fn outer_shell(set: &PointSet) -> PointSet {
    let d = set.dim();
    let mut shell = PointSet::empty(d);
    let mut q = vec![0i64; d];
    for p in set.iter() {
        let exposed = (0..2 * d).any(|dir| {
            q.copy_from_slice(p);
            crate::walks::apply_direction(&mut q, dir as u8);
            !set.contains(&q)
        });
        if exposed {
            shell.insert(p).expect("point already packed once");
        }
    }
    shell
}

/// `count` centres `0, s e_d, 2 s e_d, ...` along the last axis.
pub fn collinear_centers(d: usize, spacing: i64, count: usize) -> Vec<Vec<i64>> {
    (0..count as i64)
        .map(|i| {
            let mut c = vec![0; d];
            c[d - 1] = i * spacing;
            c
        })
        .collect()
}

/// `ceil(m^0.6)`, the cylinder radius schedule used by the experiments.
pub fn cylinder_radius(m: u64) -> u64 {
    ceil_tolerant((m as f64).powf(0.6)) as u64
}

/// A shape by name and parameters, e.g. `cylinder:m=2048,l=16,r=97`,
/// `ball:d=3,r=5` or `chain:d=3,r=4,count=8`.
#[derive(Clone, Debug, PartialEq)]
pub enum ShapeSpec {
    Cylinder { m: u64, l: u64, r: u64 },
    Ball { center: Vec<i64>, r: f64 },
    BallChain { centers: Vec<Vec<i64>>, r: f64 },
}

impl ShapeSpec {
    pub fn dim(&self) -> usize {
        match self {
            ShapeSpec::Cylinder { .. } => 3,
            ShapeSpec::Ball { center, .. } => center.len(),
            ShapeSpec::BallChain { centers, .. } => centers.first().map_or(0, Vec::len),
        }
    }

    pub fn build(&self) -> Result<PointSet> {
        match self {
            ShapeSpec::Cylinder { m, l, r } => cylinder(*m, *l, *r),
            ShapeSpec::Ball { center, r } => ball(center, *r),
            ShapeSpec::BallChain { centers, r } => ball_chain(centers, *r),
        }
    }
}

fn parse_point(s: &str) -> Result<Vec<i64>> {
    s.split(';')
        .map(|c| {
            c.trim()
                .parse::<i64>()
                .map_err(|e| Error::Parse(format!("coordinate {c:?}: {e}")))
        })
        .collect()
}

fn field<T: FromStr>(pairs: &[(String, String)], key: &str) -> Result<Option<T>>
where
    T::Err: fmt::Display,
{
    match pairs.iter().find(|(k, _)| k == key) {
        None => Ok(None),
        Some((_, v)) => v
            .parse()
            .map(Some)
            .map_err(|e| Error::Parse(format!("{key}={v}: {e}"))),
    }
}

fn required<T: FromStr>(pairs: &[(String, String)], key: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    field(pairs, key)?.ok_or_else(|| Error::Parse(format!("missing parameter {key}")))
}

impl FromStr for ShapeSpec {
    type Err = Error;

    /// Grammar: `kind:key=value,...`. Points are written `x;y;z`, lists of
    /// points are separated by `|`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let pairs: Vec<(String, String)> = rest
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| {
                p.split_once('=')
                    .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                    .ok_or_else(|| Error::Parse(format!("expected key=value, got {p:?}")))
            })
            .collect::<Result<_>>()?;
        let known: &[&str] = match kind.trim() {
            "cylinder" => &["m", "l", "r"],
            "ball" => &["d", "r", "c"],
            "chain" | "ball-chain" => &["d", "r", "count", "spacing", "centers"],
            other => return Err(Error::Parse(format!("unknown shape kind {other:?}"))),
        };
        if let Some((k, _)) = pairs.iter().find(|(k, _)| !known.contains(&k.as_str())) {
            return Err(Error::Parse(format!("unknown parameter {k:?} for {kind}")));
        }
        match kind.trim() {
            "cylinder" => {
                let m = required(&pairs, "m")?;
                let r = match field::<u64>(&pairs, "r")? {
                    Some(r) => r,
                    None => cylinder_radius(m),
                };
                Ok(ShapeSpec::Cylinder {
                    m,
                    l: field(&pairs, "l")?.unwrap_or(1),
                    r,
                })
            }
            "ball" => {
                let r = required(&pairs, "r")?;
                let center = match field::<String>(&pairs, "c")? {
                    Some(c) => parse_point(&c)?,
                    None => vec![0; required::<usize>(&pairs, "d")?],
                };
                if let Some(d) = field::<usize>(&pairs, "d")? {
                    if d != center.len() {
                        return Err(Error::DimensionMismatch {
                            expected: d,
                            got: center.len(),
                        });
                    }
                }
                Ok(ShapeSpec::Ball { center, r })
            }
            _ => {
                let r: f64 = required(&pairs, "r")?;
                let centers = match field::<String>(&pairs, "centers")? {
                    Some(list) => list
                        .split('|')
                        .map(parse_point)
                        .collect::<Result<Vec<_>>>()?,
                    None => {
                        let spacing = field::<i64>(&pairs, "spacing")?.unwrap_or(r.floor() as i64);
                        collinear_centers(
                            required(&pairs, "d")?,
                            spacing,
                            required(&pairs, "count")?,
                        )
                    }
                };
                Ok(ShapeSpec::BallChain { centers, r })
            }
        }
    }
}

impl fmt::Display for ShapeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |p: &[i64]| {
            p.iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(";")
        };
        match self {
            ShapeSpec::Cylinder { m, l, r } => write!(f, "cylinder:m={m},l={l},r={r}"),
            ShapeSpec::Ball { center, r } => {
                write!(f, "ball:d={},r={r},c={}", center.len(), join(center))
            }
            ShapeSpec::BallChain { centers, r } => {
                let list: Vec<String> = centers.iter().map(|c| join(c)).collect();
                write!(f, "chain:r={r},centers={}", list.join("|"))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn smallest_cylinder_has_five_points() {
        let c = cylinder(1, 1, 1).unwrap();
        let mut expect = vec![
            vec![0, 0, 1],
            vec![1, 0, 1],
            vec![-1, 0, 1],
            vec![0, 1, 1],
            vec![0, -1, 1],
        ];
        expect.sort();
        assert_eq!(c.sorted_points(), expect);
    }

    #[test]
    fn sparse_cylinder_sits_inside_the_full_one() {
        let full = cylinder(40, 1, 9).unwrap();
        for l in [2, 3, 5, 10, 12] {
            assert!(cylinder(40, l, 9).unwrap().is_subset_of(&full));
        }
        assert!(cylinder(0, 1, 1).is_err());
        assert!(cylinder(5, 0, 1).is_err());
    }

    #[test]
    fn large_cylinder_count() {
        let c = cylinder(2048, 16, 97).unwrap();
        // 113 lattice points in the disc a^2 + b^2 <= 36, on 128 layers.
        assert_eq!(c.len(), 113 * 128);
        let model = PI * 2048.0 * 97.0 * 97.0 / 16f64.powi(3);
        assert!((c.len() as f64 / model - 1.0).abs() < 0.1);
    }

    #[test]
    fn radius_schedule() {
        assert_eq!(cylinder_radius(512), 43);
        assert_eq!(cylinder_radius(1024), 64);
        assert_eq!(cylinder_radius(2048), 98);
    }

    #[test]
    fn balls() {
        assert_eq!(ball(&[3, -1, 2], 0.0).unwrap().len(), 1);
        assert_eq!(ball(&[0, 0, 0], 1.0).unwrap().len(), 7);
        assert_eq!(ball(&[0, 0, 0, 0], 1.0).unwrap().len(), 9);
        let a = ball(&[0, 0, 0], 3.5)
            .unwrap()
            .translate(&[4, -2, 9])
            .unwrap();
        let b = ball(&[4, -2, 9], 3.5).unwrap();
        assert!(a.same_points(&b));
        assert!(ball(&[0, 0, 0], -1.0).is_err());
    }

    #[test]
    fn chains() {
        let one = ball_chain(&[vec![1, 2, 3]], 4.0).unwrap();
        assert!(one.same_points(&ball(&[1, 2, 3], 4.0).unwrap()));
        let twice = ball_chain(&[vec![0, 0, 0], vec![0, 0, 0]], 4.0).unwrap();
        assert!(twice.same_points(&ball(&[0, 0, 0], 4.0).unwrap()));
        assert!(ball_chain(&[vec![0, 0, 0], vec![0, 0, 5]], 4.0).is_err());
        assert!(ball_chain(&[], 4.0).is_err());

        let r = 8.0;
        let count = 16;
        let chain = ball_chain(&collinear_centers(3, 8, count), r).unwrap();
        let raw = count * ball(&[0, 0, 0], r).unwrap().len();
        let m = count as f64 * r;
        assert!(chain.len() <= raw);
        assert!((raw as f64) <= 1.05 * 4.0 * PI / 3.0 * r * r * m);
    }

    #[test]
    fn shell_has_the_same_capacity() {
        use crate::capacity::cap_exact;
        use crate::green::GreenTable;
        let t = GreenTable::new(3).unwrap();
        let b = ball(&[0, 0, 0], 3.0).unwrap();
        let s = outer_shell(&b);
        assert!(s.len() < b.len() && s.is_subset_of(&b));
        let full = cap_exact(&b, &t, 1e-10).unwrap().0.value;
        let shell = cap_exact(&s, &t, 1e-10).unwrap().0.value;
        assert!((full - shell).abs() < 1e-8, "{full} {shell}");
    }

    #[test]
    fn spec_strings() {
        let s: ShapeSpec = "cylinder:m=2048,l=16,r=97".parse().unwrap();
        assert_eq!(
            s,
            ShapeSpec::Cylinder {
                m: 2048,
                l: 16,
                r: 97
            }
        );
        assert_eq!(s.to_string(), "cylinder:m=2048,l=16,r=97");
        let auto: ShapeSpec = "cylinder:m=512,l=16".parse().unwrap();
        assert_eq!(
            auto,
            ShapeSpec::Cylinder {
                m: 512,
                l: 16,
                r: 43
            }
        );
        let b: ShapeSpec = "ball:d=4,r=2".parse().unwrap();
        assert_eq!(b.dim(), 4);
        let b2: ShapeSpec = b.to_string().parse().unwrap();
        assert_eq!(b, b2);
        let c: ShapeSpec = "chain:d=3,r=4,count=3".parse().unwrap();
        assert_eq!(
            c,
            ShapeSpec::BallChain {
                centers: collinear_centers(3, 4, 3),
                r: 4.0
            }
        );
        let c2: ShapeSpec = c.to_string().parse().unwrap();
        assert_eq!(c, c2);
        assert!("torus:r=1".parse::<ShapeSpec>().is_err());
        assert!("cylinder:m=4,q=1".parse::<ShapeSpec>().is_err());
        assert!("ball:r=1".parse::<ShapeSpec>().is_err());
    }
}
