//! Command-line front end. Every run starts with a `#` header carrying the
//! crate version, the SHA-256 of the effective configuration and the master
//! seed; results follow, one numeric quantity per line with its error model.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use crate::capacity::{
    cap_bounds, cap_exact_with, cap_mc, dirichlet_oracle_with, DirichletOptions, McOptions,
    SolverOptions,
};
use crate::error::{Error, Result};
use crate::experiments::{
    green_table, read_records, run_experiment, summarize, ExperimentConfig, ExperimentId,
};
use crate::green::{GreenConfig, GreenTable};
use crate::lattice::PointSet;
use crate::rng::SeedPolicy;
use crate::scales::{parse_n, scale_table, write_table_csv, ScaleFunction};
use crate::shapes::ShapeSpec;
use crate::walks::{simulate_path, WalkPath};

#[derive(Parser, Debug)]
#[command(
    name = "latcap",
    version,
    about = "Capacity, Green's functions and random-walk ranges on Z^d"
)]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file (directory for `experiment`) instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Lattice Green's function values.
    Green(GreenArgs),
    /// Capacity of a point set.
    Cap {
        #[arg(value_enum)]
        method: CapMethod,
        #[command(flatten)]
        args: CapArgs,
    },
    /// Build a test shape and print its points.
    Shape(ShapeArgs),
    /// LIL scale functions.
    Scales {
        #[command(subcommand)]
        command: ScalesCommand,
    },
    /// Simulate a simple random walk.
    Walk(WalkArgs),
    /// Replicated experiments.
    Experiment {
        #[command(subcommand)]
        command: ExperimentCommand,
    },
}

#[derive(Args, Debug)]
struct GreenArgs {
    #[arg(long)]
    d: usize,
    /// Displacement `x1,..,xd`; repeatable.
    #[arg(long = "x", required = true, allow_hyphen_values = true)]
    xs: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum CapMethod {
    Exact,
    Bounds,
    Mc,
    Dirichlet,
}

#[derive(Args, Debug)]
struct CapArgs {
    #[arg(long)]
    d: Option<usize>,
    /// `@file.csv`, or inline points `x1,..,xd;x1,..,xd`.
    #[arg(long, allow_hyphen_values = true)]
    points: Option<String>,
    /// Shape spec such as `cylinder:m=64,l=4`.
    #[arg(long, conflicts_with = "points")]
    shape: Option<String>,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Skip printing the equilibrium vector.
    #[arg(long)]
    no_q: bool,
    #[arg(long, default_value_t = 32.0)]
    kappa: f64,
    /// Monte Carlo walks per point.
    #[arg(long, default_value_t = 10_000)]
    walks: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    extrapolate: bool,
}

#[derive(Args, Debug)]
struct ShapeArgs {
    spec: String,
    /// Print only the summary line.
    #[arg(long)]
    count: bool,
}

#[derive(Subcommand, Debug)]
enum ScalesCommand {
    Eval(ScaleArgs),
    /// CSV table over a list or dyadic range of `n`.
    Table(ScaleArgs),
}

#[derive(Args, Debug)]
struct ScaleArgs {
    #[arg(long = "fn")]
    function: String,
    /// `1e9`, `2^30`, `e^e`; for tables a comma list or `a..b` (doubling).
    #[arg(long)]
    n: String,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    c_star: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum WalkFormat {
    Summary,
    Text,
    Binary,
}

#[derive(Args, Debug)]
struct WalkArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    n: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = WalkFormat::Summary)]
    format: WalkFormat,
}

#[derive(Subcommand, Debug)]
enum ExperimentCommand {
    /// Run an experiment and write `<stem>.jsonl`, `<stem>.csv`, `<stem>.report.json`.
    Run(ExperimentArgs),
    /// Recompute summary and checks from a raw-record file.
    Summarize {
        #[command(flatten)]
        args: ExperimentArgs,
        #[arg(long)]
        records: PathBuf,
    },
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(long)]
    id: Option<String>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// `key=value` override; repeatable.
    #[arg(long = "set")]
    sets: Vec<String>,
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit code: 0 on success, 1 on usage errors, 2 on numerical failures.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let args: Vec<String> = argv
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return 1;
        }
    };
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let result = pool.install(|| dispatch(&cli, &args, &mut out, &mut err));
    let _ = stdout.write_all(&out).and_then(|_| stdout.flush());
    let _ = stderr.write_all(&err);
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Hash of the arguments that determine the output.
fn argv_hash(args: &[String]) -> String {
    let mut kept = Vec::new();
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
            continue;
        }
        if a == "--threads" || a == "--out" {
            skip = true;
            continue;
        }
        if a.starts_with("--threads=") || a.starts_with("--out=") {
            continue;
        }
        kept.push(a.as_str());
    }
    sha256_hex(&kept.join("\0"))
}

fn header(w: &mut dyn Write, hash: &str, seed: Option<u64>) -> Result<()> {
    let seed = seed.map_or("none".to_string(), |s| s.to_string());
    writeln!(
        w,
        "# latcap {} config_sha256={hash} seed={seed}",
        env!("CARGO_PKG_VERSION")
    )?;
    Ok(())
}

fn dispatch(cli: &Cli, args: &[String], stdout: &mut Vec<u8>, stderr: &mut Vec<u8>) -> Result<()> {
    if let Command::Experiment { command } = &cli.command {
        return experiment(command, cli.out.as_deref(), stdout, stderr);
    }
    let mut file;
    let out: &mut dyn Write = match &cli.out {
        Some(p) => {
            file = io::BufWriter::new(fs::File::create(p)?);
            &mut file
        }
        None => stdout,
    };
    let hash = argv_hash(args);
    match &cli.command {
        Command::Green(a) => green(a, &hash, out),
        Command::Cap { method, args } => cap(*method, args, &hash, out),
        Command::Shape(a) => shape(a, &hash, out),
        Command::Scales { command } => scales(command, &hash, out, stderr),
        Command::Walk(a) => walk(a, &hash, out),
        Command::Experiment { .. } => unreachable!(),
    }?;
    out.flush()?;
    Ok(())
}

fn parse_coords(s: &str, sep: char) -> Result<Vec<i64>> {
    s.split(sep)
        .map(|c| {
            c.trim()
                .parse::<i64>()
                .map_err(|e| Error::Parse(format!("coordinate {c:?}: {e}")))
        })
        .collect()
}

fn green(a: &GreenArgs, hash: &str, out: &mut dyn Write) -> Result<()> {
    let table = GreenTable::open_cached(GreenConfig::new(a.d))?;
    header(out, hash, None)?;
    for x in &a.xs {
        let x = parse_coords(x, ',')?;
        let g = table.green(&x)?;
        let regime = serde_json::to_value(g.regime)?;
        writeln!(
            out,
            "G({}) = {:.12} err<={:.1e} ({})",
            join(&x),
            g.value,
            g.error_bound,
            regime.as_str().unwrap_or("")
        )?;
    }
    Ok(())
}

fn join(x: &[i64]) -> String {
    x.iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn load_set(a: &CapArgs) -> Result<PointSet> {
    if let Some(spec) = &a.shape {
        let spec: ShapeSpec = spec.parse()?;
        if let Some(d) = a.d {
            if d != spec.dim() {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: spec.dim(),
                });
            }
        }
        return spec.build();
    }
    let d =
        a.d.ok_or_else(|| Error::InvalidParameter("--d is required with --points".into()))?;
    let points = a
        .points
        .as_deref()
        .ok_or_else(|| Error::InvalidParameter("one of --points or --shape is required".into()))?;
    let set = match points.strip_prefix('@') {
        Some(path) => PointSet::read_csv(d, fs::File::open(path)?)?,
        None => {
            let pts: Vec<Vec<i64>> = points
                .split(';')
                .filter(|p| !p.trim().is_empty())
                .map(|p| parse_coords(p, ','))
                .collect::<Result<_>>()?;
            PointSet::from_points(d, pts)?
        }
    };
    if set.is_empty() {
        return Err(Error::Empty("point set"));
    }
    Ok(set)
}

fn cap(method: CapMethod, a: &CapArgs, hash: &str, out: &mut dyn Write) -> Result<()> {
    let set = load_set(a)?;
    let d = set.dim();
    let seed = (method == CapMethod::Mc).then_some(a.seed);
    // Points read from a file are part of the configuration.
    let hash = sha256_hex(&format!(
        "{hash}\n{:?}\n{:?}",
        set.flat(),
        set.multiplicities()
    ));
    header(out, &hash, seed)?;
    writeln!(
        out,
        "# d={d} points={} multiset={}",
        set.len(),
        set.total_multiplicity()
    )?;
    match method {
        CapMethod::Exact => {
            let table = GreenTable::open_cached(GreenConfig::new(d))?;
            let (est, q) = cap_exact_with(&set, &table, &SolverOptions::with_tol(a.tol))?;
            writeln!(
                out,
                "cap = {:.12} err<={:.1e} (residual tol, {})",
                est.value,
                est.error,
                est.method.as_str()
            )?;
            if !a.no_q {
                q.write_csv(&mut *out)?;
            }
        }
        CapMethod::Bounds => {
            let table = GreenTable::open_cached(GreenConfig::new(d))?;
            let (lo, hi) = cap_bounds(&set, &table)?;
            let tol = table.config().tolerance;
            writeln!(
                out,
                "lower = {lo:.12} err<={:.1e} (Green table tol)",
                tol * lo
            )?;
            writeln!(
                out,
                "upper = {hi:.12} err<={:.1e} (Green table tol)",
                tol * hi
            )?;
        }
        CapMethod::Mc => {
            let table = GreenTable::open_cached(GreenConfig::new(d))?;
            let opts = McOptions {
                kappa: a.kappa,
                replicas: a.walks,
                seed: SeedPolicy::new(a.seed),
                extrapolate: a.extrapolate,
            };
            let est = cap_mc(&set, &table, &opts)?;
            writeln!(
                out,
                "cap = {:.8} stderr={:.2e} bias<={:.2e} (mc-escape, kappa={}, walks={}{})",
                est.value,
                est.error,
                est.bias_bound.unwrap_or(0.0),
                a.kappa,
                a.walks,
                if a.extrapolate { ", extrapolated" } else { "" }
            )?;
        }
        CapMethod::Dirichlet => {
            let opts = DirichletOptions::for_set(&set);
            let est = dirichlet_oracle_with(&set, &opts)?;
            writeln!(
                out,
                "cap = {:.10} err~{:.1e} (dirichlet-oracle, boxes {:?})",
                est.value, est.error, opts.half_widths
            )?;
        }
    }
    Ok(())
}

fn shape(a: &ShapeArgs, hash: &str, out: &mut dyn Write) -> Result<()> {
    let spec: ShapeSpec = a.spec.parse()?;
    let set = spec.build()?;
    header(out, hash, None)?;
    writeln!(
        out,
        "# {spec} d={} points={} (exact count)",
        set.dim(),
        set.len()
    )?;
    if !a.count {
        set.deduplicated().write_csv(&mut *out)?;
    }
    Ok(())
}

fn scale_fn(a: &ScaleArgs, stderr: &mut dyn Write) -> Result<ScaleFunction> {
    let f = ScaleFunction::from_name(&a.function, a.d, a.sigma, a.c_star)?;
    if f.uses_placeholder() {
        writeln!(
            stderr,
            "warning: {} uses the placeholder c_star = 1, an unknown constant; pass --c-star",
            f.name()
        )?;
    }
    Ok(f)
}

fn scales(
    cmd: &ScalesCommand,
    hash: &str,
    out: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<()> {
    match cmd {
        ScalesCommand::Eval(a) => {
            let f = scale_fn(a, stderr)?;
            let n = parse_n(&a.n)?;
            let v = f.eval(n)?;
            header(out, hash, None)?;
            writeln!(out, "{f}({n}) = {v:.10} rel_err~1e-15 (closed form)")?;
        }
        ScalesCommand::Table(a) => {
            let f = scale_fn(a, stderr)?;
            let ns: Vec<f64> = crate::experiments::parse_grid(&a.n)
                .map(|g| g.into_iter().map(|n| n as f64).collect())
                .or_else(|_| a.n.split(',').map(parse_n).collect::<Result<Vec<f64>>>())?;
            header(out, hash, None)?;
            writeln!(
                out,
                "# closed form, rel_err~1e-15; rows outside the domain carry an error"
            )?;
            write_table_csv(&mut *out, f, &scale_table(f, &ns))?;
        }
    }
    Ok(())
}

fn walk(a: &WalkArgs, hash: &str, out: &mut dyn Write) -> Result<()> {
    let n = parse_n(&a.n)?;
    if !(n >= 0.0) || n.fract() != 0.0 {
        return Err(Error::InvalidParameter(format!(
            "n must be a non-negative integer, got {}",
            a.n
        )));
    }
    let path = simulate_path(a.d, n as usize, SeedPolicy::new(a.seed))?;
    match a.format {
        WalkFormat::Binary => path.write_binary(&mut *out),
        WalkFormat::Text => {
            header(out, hash, Some(a.seed))?;
            path.write_text(&mut *out)
        }
        WalkFormat::Summary => {
            header(out, hash, Some(a.seed))?;
            walk_summary(&path, out)
        }
    }
}

fn walk_summary(path: &WalkPath, out: &mut dyn Write) -> Result<()> {
    let range = path.range_of(0, path.len())?;
    writeln!(out, "steps = {} (exact)", path.len())?;
    writeln!(out, "range_size = {} (exact count)", range.len())?;
    writeln!(
        out,
        "endpoint = {} (exact)",
        join(path.position(path.len()))
    )?;
    if !path.is_empty() {
        writeln!(out, "max_norm = {:.6} (exact)", path.max_norm()?)?;
    }
    Ok(())
}

fn experiment_config(a: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::parse("")?,
    };
    if let Some(id) = &a.id {
        cfg.set("id", &id.parse::<ExperimentId>()?.to_string())?;
    }
    if let Some(d) = a.d {
        cfg.set("d", &d.to_string())?;
    }
    if let Some(n) = &a.n {
        cfg.set("n", n)?;
    }
    for kv in &a.sets {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("--set expects key=value, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn experiment(
    cmd: &ExperimentCommand,
    out_dir: Option<&Path>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<()> {
    let (a, records) = match cmd {
        ExperimentCommand::Run(a) => (a, None),
        ExperimentCommand::Summarize { args, records } => (args, Some(records)),
    };
    let cfg = experiment_config(a)?;
    header(stdout, &cfg.hash(), Some(cfg.seed()?))?;
    let output = match records {
        Some(path) => summarize(
            &cfg,
            read_records(io::BufReader::new(fs::File::open(path)?))?,
        )?,
        None => {
            let table = green_table(cfg.dim()?)?;
            let output = run_experiment(&cfg, &table)?;
            if let Err(e) = table.persist() {
                writeln!(stderr, "warning: Green table cache not written: {e}")?;
            }
            output
        }
    };
    let dir = out_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(cfg.raw("out").unwrap_or("results")));
    let stem = format!("{}-d{}-{}", cfg.id()?, cfg.dim()?, &cfg.hash()[..12]);
    for path in output.write(&dir, &stem)? {
        writeln!(stdout, "# wrote {}", path.display())?;
    }
    for row in &output.summary {
        writeln!(
            stdout,
            "{} n={} mean={:.8e} stderr={:.2e} count={}",
            row.quantity, row.n, row.mean, row.stderr, row.count
        )?;
    }
    for c in &output.checks {
        writeln!(
            stdout,
            "check {}: {} ({})",
            c.name,
            if c.passed { "PASS" } else { "FAIL" },
            c.detail
        )?;
    }
    for n in &output.notes {
        writeln!(stdout, "# note: {n}")?;
    }
    Ok(())
}
