//! LIL scale functions. All logarithms are natural; `log_k` is the k-fold
//! iterate, so `log_2 n = ln ln n` and `log_3 n = ln ln ln n`.

use std::f64::consts::{E, PI};
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "fn", rename_all = "lowercase")]
pub enum ScaleFunction {
    H3,
    H3Hat,
    Psi,
    PsiHat,
    H4,
    /// `c_star = None` means the placeholder value 1.0.
    H4Hat {
        c_star: Option<f64>,
    },
    H4Bar,
    Hd {
        d: usize,
        sigma: f64,
    },
    Rho {
        d: usize,
    },
}

/// `log_k x`, or `None` once an intermediate value is not positive.
pub fn iterated_log(x: f64, k: usize) -> Option<f64> {
    let mut v = x;
    for _ in 0..k {
        if !(v > 0.0) {
            return None;
        }
        v = v.ln();
    }
    Some(v)
}

impl ScaleFunction {
    pub fn name(&self) -> &'static str {
        match self {
            ScaleFunction::H3 => "h3",
            ScaleFunction::H3Hat => "h3hat",
            ScaleFunction::Psi => "psi",
            ScaleFunction::PsiHat => "psihat",
            ScaleFunction::H4 => "h4",
            ScaleFunction::H4Hat { .. } => "h4hat",
            ScaleFunction::H4Bar => "h4bar",
            ScaleFunction::Hd { .. } => "hd",
            ScaleFunction::Rho { .. } => "rho",
        }
    }

    /// Builds a function from its name with the given optional parameters.
    pub fn from_name(
        name: &str,
        d: Option<usize>,
        sigma: Option<f64>,
        c_star: Option<f64>,
    ) -> Result<Self> {
        let need_d = |what: &str| -> Result<usize> {
            let d = d.ok_or_else(|| Error::InvalidParameter(format!("{what} needs d")))?;
            if d < 3 {
                return Err(Error::Dimension(d, 3));
            }
            Ok(d)
        };
        Ok(match name.to_ascii_lowercase().as_str() {
            "h3" => ScaleFunction::H3,
            "h3hat" => ScaleFunction::H3Hat,
            "psi" => ScaleFunction::Psi,
            "psihat" => ScaleFunction::PsiHat,
            "h4" => ScaleFunction::H4,
            "h4hat" => ScaleFunction::H4Hat { c_star },
            "h4bar" => ScaleFunction::H4Bar,
            "hd" => {
                let d = need_d("hd")?;
                if d < 5 {
                    return Err(Error::InvalidParameter(format!(
                        "hd is defined for d >= 5, got {d}"
                    )));
                }
                let sigma =
                    sigma.ok_or_else(|| Error::InvalidParameter("hd needs sigma".into()))?;
                if !(sigma > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "sigma must be positive, got {sigma}"
                    )));
                }
                ScaleFunction::Hd { d, sigma }
            }
            "rho" => ScaleFunction::Rho { d: need_d("rho")? },
            other => return Err(Error::Parse(format!("unknown scale function {other:?}"))),
        })
    }

    /// True when the value depends on a parameter that was not supplied.
    pub fn uses_placeholder(&self) -> bool {
        matches!(self, ScaleFunction::H4Hat { c_star: None })
    }

    /// Infimum of the domain; admissible `n` satisfy `n > lower_bound()`.
    pub fn lower_bound(&self) -> f64 {
        match self {
            ScaleFunction::H3 | ScaleFunction::H4 => E.powf(E),
            ScaleFunction::Rho { d: 5 } => 1.0,
            ScaleFunction::Rho { .. } => 0.0,
            _ => E,
        }
    }

    /// Smallest admissible integer argument.
    pub fn n_min(&self) -> u64 {
        self.lower_bound().floor() as u64 + 1
    }

    pub fn eval(&self, n: f64) -> Result<f64> {
        if !(n > self.lower_bound()) || !n.is_finite() {
            return Err(Error::Domain(format!(
                "{} needs n > {:.6}, got {n}",
                self.name(),
                self.lower_bound()
            )));
        }
        let l1 = n.ln();
        let l2 = l1.ln();
        let l3 = || l2.ln();
        let v = match *self {
            ScaleFunction::H3 => 6f64.sqrt() * PI / 9.0 / l3() * (n * l2).sqrt(),
            ScaleFunction::H3Hat => 6f64.sqrt() * PI * PI / 9.0 * (n / l2).sqrt(),
            ScaleFunction::Psi => (2.0 / 3.0 * n * l2).sqrt(),
            ScaleFunction::PsiHat => PI * (n / (6.0 * l2)).sqrt(),
            ScaleFunction::H4 => PI * PI / 8.0 * n * l3() / (l1 * l1),
            ScaleFunction::H4Hat { c_star } => c_star.unwrap_or(1.0) * n * l2 / (l1 * l1),
            ScaleFunction::H4Bar => n * l2 / (l1 * l1),
            ScaleFunction::Hd { d, sigma } => {
                let extra = if d == 5 { l1 } else { 0.0 };
                sigma * (2.0 * n * (1.0 + extra) * l2).sqrt()
            }
            ScaleFunction::Rho { d } => {
                if d == 5 {
                    (n * l1).sqrt()
                } else {
                    n.sqrt()
                }
            }
        };
        Ok(v)
    }
}

impl fmt::Display for ScaleFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScaleFunction::H4Hat { c_star: Some(c) } => write!(f, "h4hat(c_star={c})"),
            ScaleFunction::H4Hat { c_star: None } => write!(f, "h4hat(c_star=1 placeholder)"),
            ScaleFunction::Hd { d, sigma } => write!(f, "hd(d={d},sigma={sigma})"),
            ScaleFunction::Rho { d } => write!(f, "rho(d={d})"),
            other => f.write_str(other.name()),
        }
    }
}

pub fn eval_scale(f: ScaleFunction, n: f64) -> Result<f64> {
    f.eval(n)
}

#[derive(Clone, Debug, Serialize)]
pub struct ScaleRow {
    pub n: f64,
    pub value: Option<f64>,
    pub error: Option<String>,
}

/// Evaluates `f` on every `n`; out-of-domain rows carry the error message.
pub fn scale_table(f: ScaleFunction, ns: &[f64]) -> Vec<ScaleRow> {
    ns.iter()
        .map(|&n| match f.eval(n) {
            Ok(v) => ScaleRow {
                n,
                value: Some(v),
                error: None,
            },
            Err(e) => ScaleRow {
                n,
                value: None,
                error: Some(e.to_string()),
            },
        })
        .collect()
}

pub fn write_table_csv<W: std::io::Write>(
    mut w: W,
    f: ScaleFunction,
    rows: &[ScaleRow],
) -> std::io::Result<()> {
    writeln!(w, "fn,n,value,error")?;
    for r in rows {
        let value = r.value.map(|v| format!("{v:.12e}")).unwrap_or_default();
        let err = r.error.as_deref().unwrap_or("").replace(',', ";");
        writeln!(w, "{},{},{},{}", f.name(), r.n, value, err)?;
    }
    Ok(())
}

/// Reads an argument `n`: a number (`1e9`, `4096`), a power `b^k` with an
/// integer or `e` base, or a tower such as `e^e`.
pub fn parse_n(s: &str) -> Result<f64> {
    let s = s.trim();
    if let Ok(v) = f64::from_str(s) {
        return Ok(v);
    }
    let parts: Vec<&str> = s.split('^').map(str::trim).collect();
    if parts.len() < 2 {
        return Err(Error::Parse(format!("cannot read n from {s:?}")));
    }
    let atom = |p: &str| -> Result<f64> {
        if p == "e" {
            Ok(E)
        } else {
            p.parse::<f64>()
                .map_err(|_| Error::Parse(format!("cannot read n from {s:?}")))
        }
    };
    let mut v = atom(parts[parts.len() - 1])?;
    for p in parts[..parts.len() - 1].iter().rev() {
        v = atom(p)?.powf(v);
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs()
    }

    #[test]
    fn unit_iterated_log_cases() {
        let ee = E.powf(E);
        assert!((ScaleFunction::Psi.eval(ee).unwrap() - 3.178497).abs() < 1e-6);
        let hd = ScaleFunction::Hd { d: 6, sigma: 1.0 };
        assert!((hd.eval(ee).unwrap() - 5.505318).abs() < 1e-6);
        assert_eq!(parse_n("e^e").unwrap(), ee);
        assert_eq!(parse_n("2^30").unwrap(), 1073741824.0);
        assert_eq!(parse_n("1e9").unwrap(), 1e9);
    }

    #[test]
    fn domains_are_hard_errors() {
        assert!(ScaleFunction::H3.eval(15.0).is_err());
        assert!(ScaleFunction::H3.eval(16.0).unwrap() > 0.0);
        assert!(ScaleFunction::Psi.eval(2.0).is_err());
        assert!(ScaleFunction::H4.eval(f64::NAN).is_err());
        assert_eq!(ScaleFunction::H3.n_min(), 16);
        assert_eq!(ScaleFunction::H4Bar.n_min(), 3);
        assert!(ScaleFunction::from_name("hd", Some(4), Some(1.0), None).is_err());
        assert!(ScaleFunction::from_name("hd", Some(5), None, None).is_err());
        assert!(ScaleFunction::from_name("nope", None, None, None).is_err());
    }

    #[test]
    fn identities() {
        for k in [5, 10, 20, 30, 45, 60] {
            let n = 2f64.powi(k);
            let l2 = n.ln().ln();
            let l3 = l2.ln();
            let h3 = ScaleFunction::H3.eval(n).unwrap();
            let psi = ScaleFunction::Psi.eval(n).unwrap();
            assert!(close(h3, PI / 3.0 * psi / l3, 1e-13));
            let h3hat = ScaleFunction::H3Hat.eval(n).unwrap();
            let psihat = ScaleFunction::PsiHat.eval(n).unwrap();
            assert!(close(
                h3hat / (n / l2).sqrt(),
                6f64.sqrt() * PI * PI / 9.0,
                1e-13
            ));
            let r = 3f64.sqrt() * psihat;
            assert!(close(h3hat, 2.0 * PI / (3.0 * 3f64.sqrt()) * r, 1e-13));
            let h4 = ScaleFunction::H4.eval(n).unwrap();
            let h4bar = ScaleFunction::H4Bar.eval(n).unwrap();
            assert!(close(h4 / h4bar, PI * PI / 8.0 * l3 / l2, 1e-13));
            let h4hat = ScaleFunction::H4Hat { c_star: Some(2.5) }.eval(n).unwrap();
            assert!(close(h4hat, 2.5 * h4bar, 1e-13));
        }
    }

    #[test]
    fn tables() {
        assert!(scale_table(ScaleFunction::H3, &[]).is_empty());
        let ns: Vec<f64> = (20..=30).map(|k| 2f64.powi(k)).collect();
        let rows = scale_table(ScaleFunction::H3, &ns);
        assert!(rows
            .windows(2)
            .all(|w| w[1].value.unwrap() > w[0].value.unwrap()));
        let n = 2f64.powi(30);
        let ratio = ScaleFunction::H4.eval(n).unwrap() / ScaleFunction::H4Bar.eval(n).unwrap();
        assert!(ratio < 1.0);
        let mixed = scale_table(ScaleFunction::H4, &[10.0, 100.0]);
        assert!(mixed[0].error.is_some() && mixed[1].value.is_some());
        let mut csv = Vec::new();
        write_table_csv(&mut csv, ScaleFunction::H4, &mixed).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 3);
    }

    #[test]
    fn rho_and_placeholder() {
        let n = 1e6;
        assert!(close(
            ScaleFunction::Rho { d: 5 }.eval(n).unwrap(),
            (n * n.ln()).sqrt(),
            1e-15
        ));
        assert_eq!(ScaleFunction::Rho { d: 6 }.eval(n).unwrap(), 1e3);
        assert!(ScaleFunction::H4Hat { c_star: None }.uses_placeholder());
        let hd5 = ScaleFunction::Hd { d: 5, sigma: 2.0 };
        let l1 = n.ln();
        assert!(close(
            hd5.eval(n).unwrap(),
            2.0 * (2.0 * n * (1.0 + l1) * l1.ln()).sqrt(),
            1e-15
        ));
    }
}
