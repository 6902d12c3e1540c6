//! LIL scale functions over a dyadic range.

use latcap::scales::{scale_table, write_table_csv, ScaleFunction};

fn main() -> latcap::Result<()> {
    let ns: Vec<f64> = (10..=40).step_by(5).map(|k| 2f64.powi(k)).collect();
    let fns = [
        ScaleFunction::H3,
        ScaleFunction::Psi,
        ScaleFunction::H4,
        ScaleFunction::H4Bar,
        ScaleFunction::H4Hat { c_star: Some(1.0) },
        ScaleFunction::Hd { d: 5, sigma: 1.0 },
    ];
    let stdout = std::io::stdout();
    for f in fns {
        write_table_csv(stdout.lock(), f, &scale_table(f, &ns))?;
    }
    Ok(())
}
