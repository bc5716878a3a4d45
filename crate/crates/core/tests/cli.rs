use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_gauss-ramsey");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("GAUSS_RAMSEY_OUT_DIR", dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn empty_argv_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("usage:"));
    assert!(o.stdout.is_empty());
}

#[test]
fn unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        run(dir.path(), &["solve", "--C", "2", "--bogus", "1"]).status.code(),
        Some(2)
    );
}

#[test]
fn solve_prints_exact_constants() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["solve", "--C", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("\"p_C\":3.8196601125010515e-1"), "{s}");
    assert!(s.contains("\"c_p\":3.0032138538999853e-1"), "{s}");
}

#[test]
fn estimate_is_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "estimate", "--r", "4", "--d", "100", "--p", "0.45", "--trials", "30000", "--seed", "21",
    ];
    let a = run(dir.path(), &[&args[..], &["--threads", "1"]].concat());
    let b = run(dir.path(), &[&args[..], &["--threads", "3"]].concat());
    let c = run(dir.path(), &args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
}

#[test]
fn missing_seed_is_drawn_and_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["estimate", "--r", "3", "--trials", "1000"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("\"seed\":"));
    assert!(!o.stderr.is_empty());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# clique run\nr = 3\nd=64\ntrials=2000\nseed=5\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let from_file = stdout(&run(dir.path(), &["estimate", "--config", cfg]));
    assert!(from_file.contains("\"d\":64"), "{from_file}");
    let overridden = stdout(&run(dir.path(), &["estimate", "--config", cfg, "--d=128"]));
    assert!(overridden.contains("\"d\":128"), "{overridden}");
    let flags_only = stdout(&run(
        dir.path(),
        &["estimate", "--r", "3", "--d", "128", "--trials", "2000", "--seed", "5"],
    ));
    assert_eq!(overridden, flags_only);

    std::fs::write(dir.path().join("bad.cfg"), "nonsense = 1\n").unwrap();
    let bad = run(
        dir.path(),
        &["estimate", "--config", dir.path().join("bad.cfg").to_str().unwrap()],
    );
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn search_certificate_verifies_and_tampering_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &[
            "search",
            "--n",
            "8",
            "--ell",
            "3",
            "--k",
            "4",
            "--C",
            "1.3333333333333333",
            "--seed",
            "7",
            "--cert",
            "cert.txt",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let path = dir.path().join("cert.txt");
    let ok = run(dir.path(), &["verify", "--in", path.to_str().unwrap()]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).contains("\"checked\":true"));

    // Make every pair blue; the complete blue K_8 contains a blue K_4.
    let text = std::fs::read_to_string(&path).unwrap();
    let mut rows = 0;
    let tampered: String = text
        .lines()
        .map(|l| {
            if l.len() == 16 && l.chars().all(|c| c.is_ascii_hexdigit()) {
                let mask = 0xffu64 & !(1 << rows);
                rows += 1;
                format!("{mask:016x}\n")
            } else {
                format!("{l}\n")
            }
        })
        .collect();
    assert_eq!(rows, 8);
    let bad_path = dir.path().join("tampered.txt");
    std::fs::write(&bad_path, tampered).unwrap();
    let bad = run(dir.path(), &["verify", "--in", bad_path.to_str().unwrap()]);
    assert_ne!(bad.status.code(), Some(0));
}

#[test]
fn scaling_writes_plot_into_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &[
            "scaling", "--dims", "64,256", "--trials", "5000", "--seed", "3", "--plot", "fit.dat",
        ],
    );
    assert_eq!(o.status.code(), Some(0));
    let plot = std::fs::read_to_string(dir.path().join("fit.dat")).unwrap();
    assert!(
        plot.lines()
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
            .count()
            >= 2
    );
}

#[test]
fn sampled_graph_file_parses_with_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &[
            "sample", "--n", "20", "--d", "50", "--p", "0.4", "--seed", "9", "--graph", "g.txt",
        ],
    );
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("g.txt")).unwrap();
    let g = gauss_ramsey::geom_graph::ColoredGraph::from_text(&text).unwrap();
    assert_eq!(g.n(), 20);
    assert_eq!(g.provenance.seed, Some(9));
    assert_eq!(g.provenance.d, Some(50));
}

#[test]
fn capability_limit_has_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &[
            "search",
            "--n",
            "600",
            "--ell",
            "3",
            "--k",
            "3",
            "--p",
            "0.5",
            "--seed",
            "1",
            "--max_attempts",
            "1",
        ],
    );
    assert_eq!(o.status.code(), Some(4));
}
