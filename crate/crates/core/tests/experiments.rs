use latcap::experiments::{
    read_records, run_experiment, summarize, ExperimentConfig, ExperimentId, ExperimentOutput,
};
use latcap::green::GreenTable;

fn config(id: ExperimentId, d: usize, n: &str, extra: &[(&str, &str)]) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(id, d, n).unwrap();
    for (k, v) in extra {
        cfg.set(k, v).unwrap();
    }
    cfg
}

fn run(cfg: &ExperimentConfig) -> ExperimentOutput {
    let table = GreenTable::new(cfg.dim().unwrap()).unwrap();
    run_experiment(cfg, &table).unwrap()
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn mean_scaling_smoke() {
    let out = run(&config(
        ExperimentId::MeanScaling,
        3,
        "2^6..2^8",
        &[("replicas", "4")],
    ));
    assert_eq!(out.records.iter().filter(|r| r.quantity == "R").count(), 12);
    assert!(out.row("R", 256).unwrap().mean > out.row("R", 64).unwrap().mean);
    assert!(out.rows("loglog_slope").count() == 1);
    assert!(out.check("slope").is_some());
}

#[test]
fn cylinder_smoke() {
    let out = run(&config(
        ExperimentId::Cylinder,
        3,
        "16,32",
        &[("l", "2"), ("chain_m", "16")],
    ));
    for m in [16, 32] {
        let lo = out.row("mat1_lower", m).unwrap().mean;
        let cap = out.row("cap", m).unwrap().mean;
        let hi = out.row("mat1_upper", m).unwrap().mean;
        assert!(
            lo <= cap * (1.0 + 1e-6) && cap <= hi * (1.0 + 1e-6),
            "{lo} {cap} {hi}"
        );
    }
    assert!(out.check("sandwich").unwrap().passed);
    assert!(out.row("chain_ratio", 16).is_some());
}

#[test]
fn decomposition_smoke() {
    let out = run(&config(
        ExperimentId::Decomposition,
        4,
        "64,256",
        &[("replicas", "3")],
    ));
    for name in ["identity", "telescoping", "delta_nonnegative"] {
        let c = out.check(name).unwrap();
        assert!(c.passed, "{name}: {}", c.detail);
    }
    assert_eq!(out.row("k", 256).unwrap().mean, 4.0);
}

#[test]
fn escape_smoke() {
    let out = run(&config(
        ExperimentId::EscapeProbability,
        4,
        "64,256",
        &[("replicas", "40"), ("alphas", "0,0.25")],
    ));
    assert!(out.check("unit_interval(0)").unwrap().passed);
    assert!(out.check("unit_interval(0.25)").unwrap().passed);
    assert!(out.check("alpha_agreement").is_some());
    assert!(run_experiment(
        &config(
            ExperimentId::EscapeProbability,
            4,
            "2^16",
            &[("alphas", "5")]
        ),
        &GreenTable::new(4).unwrap()
    )
    .is_err());
}

#[test]
fn running_max_smoke() {
    let out = run(&config(
        ExperimentId::RunningMax,
        4,
        "2^4..2^7",
        &[("replicas", "100"), ("per_octave", "4")],
    ));
    let c = out.check("dominates_endpoint").unwrap();
    assert!(c.passed, "{}", c.detail);
    assert!(out.rows("D").all(|r| r.mean >= 0.0));
    assert!(out.check("mgf_stable(0.05)").is_some());
    let few = config(ExperimentId::RunningMax, 4, "16", &[("replicas", "10")]);
    assert!(run_experiment(&few, &GreenTable::new(4).unwrap()).is_err());
}

#[test]
fn summaries_rebuild_from_raw_records() {
    let cfg = config(
        ExperimentId::Decomposition,
        4,
        "32,128",
        &[("replicas", "2")],
    );
    let out = run(&cfg);
    let dir = tempfile::tempdir().unwrap();
    let files = out.write(dir.path(), "decomp").unwrap();
    let raw = std::fs::File::open(&files[0]).unwrap();
    let records = read_records(std::io::BufReader::new(raw)).unwrap();
    let again = summarize(&cfg, records).unwrap();
    assert_eq!(again.summary_csv(), out.summary_csv());
    assert_eq!(
        std::fs::read_to_string(&files[1]).unwrap(),
        out.summary_csv()
    );
}

#[test]
fn outputs_do_not_depend_on_the_thread_count() {
    let cases = [
        config(
            ExperimentId::MeanScaling,
            4,
            "2^5..2^9",
            &[("replicas", "6"), ("seed", "11")],
        ),
        config(
            ExperimentId::EscapeProbability,
            4,
            "128",
            &[("replicas", "30"), ("seed", "11")],
        ),
        config(
            ExperimentId::MutualGreen,
            4,
            "16,64",
            &[("replicas", "3"), ("seed", "11")],
        ),
    ];
    for cfg in &cases {
        let one = in_pool(1, || run(cfg));
        let two = in_pool(2, || run(cfg));
        assert_eq!(
            one.records_jsonl(),
            two.records_jsonl(),
            "{}",
            cfg.id().unwrap()
        );
        assert_eq!(one.summary_csv(), two.summary_csv());
        assert_eq!(one.config_hash, two.config_hash);
    }
}
