use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn trals(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trals"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SMALL: &str = "oracle = \"synthetic\"\nd = 6\nn = 2\nr = 2\ns = 2\nrepeats = 2\neval_count = 500\nmax_sweeps = 8\n\
[synthetic]\nrank = 2\nmixing = 0.5\nseed = 3\n";

fn e_value(text: &str) -> f64 {
    let line = text.lines().find(|l| l.starts_with("E ")).expect("E line");
    line.split_whitespace().nth(1).unwrap().parse().unwrap()
}

#[test]
fn decompose_writes_report_rings_and_dump() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "run.toml",
        &format!("dump_skeleton = true\n{SMALL}"),
    );
    let out_dir = dir.path().join("out");
    let out = trals(&[
        "decompose",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--threads",
        "2",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(out_dir.join("report.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("run,E,E_skeleton,calls,fraction,sweeps,seconds")
    );
    assert!(lines.next().unwrap().starts_with("1,"));
    assert!(lines.next().unwrap().starts_with("2,"));
    assert!(lines.next().unwrap().starts_with("median,"));
    assert!(out_dir.join("report.txt").exists());
    for run in 1..=2 {
        let ring = std::fs::read_to_string(out_dir.join(format!("ring-{run}.tr"))).unwrap();
        assert!(trals::TensorRing::from_text(&ring).is_ok());
        let dump = std::fs::read_to_string(out_dir.join(format!("skeleton-{run}.txt"))).unwrap();
        assert!(!dump.trim().is_empty());
    }
    assert!(stdout(&out).contains("run,E,E_skeleton"));
}

#[test]
fn decompose_is_deterministic_for_a_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "run.toml", SMALL);
    let cfg = cfg.to_str().unwrap();
    let rows = |seed: &str| {
        let out = trals(&["decompose", "--config", cfg, "--seed", seed]);
        assert!(out.status.success(), "{}", stderr(&out));
        // strip the timing column
        stdout(&out)
            .lines()
            .filter(|l| l.starts_with(|c: char| c.is_ascii_digit()) && l.contains(','))
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect::<Vec<_>>()
    };
    let a = rows("7");
    assert_eq!(a.len(), 2);
    assert_eq!(a, rows("7"));
    assert_ne!(a, rows("8"));
}

#[test]
fn invalid_configuration_exits_with_2() {
    let dir = TempDir::new().unwrap();
    let cases = [
        "oracle = \"pde\"\nd = 12\nbogus = 1\n",
        "oracle = \"pde\"\n",
        "oracle = \"toy\"\nd = 6\nn = 4\nr = 0\n",
        "oracle = \"pde\"\nd = 12\nlambda = -1.0\n",
        "oracle = \"pde\"\nd = 12\nrepeats = 0\n",
        "oracle = \"toy\"\nd = 6\nn = 4\nrank_increase.enabled = true\n",
        "not toml at all [",
    ];
    for body in cases {
        let cfg = write(dir.path(), "bad.toml", body);
        let out = trals(&["decompose", "--config", cfg.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "{body:?}: {}", stderr(&out));
    }
    let out = trals(&[
        "decompose",
        "--config",
        dir.path().join("missing.toml").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = trals(&["decompose"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_3_and_keeps_a_partial_report() {
    let dir = TempDir::new().unwrap();
    // a ring whose only entry is not finite poisons every sample
    let ring = "d 6\nn 2\nranks 1 1 1 1 1 1\ncore 1\ninf 1\ncore 2\n1 1\ncore 3\n1 1\ncore 4\n1 1\ncore 5\n1 1\ncore 6\n1 1\n";
    write(dir.path(), "bad.tr", ring);
    let cfg = write(
        dir.path(),
        "run.toml",
        "oracle = \"synthetic\"\nr = 1\ns = 1\nrepeats = 2\neval_count = 10\n[synthetic]\nring = \"bad.tr\"\n",
    );
    let out_dir = dir.path().join("out");
    let out = trals(&[
        "decompose",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("numerical failure"));
    let csv = std::fs::read_to_string(out_dir.join("report.csv")).unwrap();
    assert!(csv.starts_with("run,E,E_skeleton,calls,fraction,sweeps,seconds\n"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn evaluate_scores_rings() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "run.toml", SMALL);
    let cfg = cfg.to_str().unwrap();

    let gen = trals::TensorRing::gibbs_chain(6, 2, 2, 0.5, 3);
    let own = write(dir.path(), "own.tr", &gen.to_text());
    let zero = write(
        dir.path(),
        "zero.tr",
        &trals::TensorRing::constant(6, 2, 2, 0.0).to_text(),
    );

    let score = |ring: &Path, seed: &str| {
        let out = trals(&[
            "evaluate",
            "--config",
            cfg,
            "--ring",
            ring.to_str().unwrap(),
            "--count",
            "300",
            "--seed",
            seed,
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        e_value(&stdout(&out))
    };
    assert!(score(&own, "1") <= 1e-6);
    assert_eq!(score(&zero, "1"), 1.0);

    let fit = trals::TensorRing::random_gaussian(6, 2, 2, 1.0, 9);
    let fit = write(dir.path(), "fit.tr", &fit.to_text());
    assert_eq!(score(&fit, "4").to_bits(), score(&fit, "4").to_bits());

    let out = trals(&[
        "evaluate",
        "--ring",
        zero.to_str().unwrap(),
        "--oracle",
        "pde",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = trals(&[
        "evaluate",
        "--ring",
        dir.path().join("none.tr").to_str().unwrap(),
        "--oracle",
        "pde",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let junk = write(dir.path(), "junk.tr", "hello\n");
    let out = trals(&[
        "evaluate",
        "--config",
        cfg,
        "--ring",
        junk.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

fn diagnose_rows(body: &str) -> Vec<Vec<String>> {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "diag.toml", body);
    let out_dir = dir.path().join("out");
    let out = trals(&[
        "diagnose",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(out_dir.join("diagnose.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("start,c1,a,c2,b,alpha,kappa_c1,kappa_c2,ratio_a,ratio_b,bound")
    );
    lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn diagnose_separable_oracle_has_unit_alpha() {
    let rows = diagnose_rows(
        "oracle = \"synthetic\"\nd = 8\nn = 3\nr = 1\n[synthetic]\nrank = 1\nseed = 2\n",
    );
    assert_eq!(rows.len(), 8);
    for row in rows {
        let alpha: f64 = row[5].parse().unwrap();
        assert!((alpha - 1.0).abs() < 1e-9, "{row:?}");
    }
}

#[test]
fn diagnose_gibbs_chain_reports_alpha_and_kappa() {
    let rows = diagnose_rows(
        "oracle = \"synthetic\"\nd = 8\nn = 3\nr = 2\n[synthetic]\nrank = 2\nmixing = 0.1\nseed = 5\n[diagnose]\nlengths = [2, 2, 2, 2]\nsamples = 3\n",
    );
    assert_eq!(rows.len(), 8);
    assert_eq!(&rows[0][1..5], ["1-2", "3-4", "5-6", "7-8"]);
    assert_eq!(&rows[7][1..5], ["8-1", "2-3", "4-5", "6-7"]);
    for row in rows {
        let alpha: f64 = row[5].parse().unwrap();
        assert!((0.999..=1.0 + 1e-12).contains(&alpha), "{row:?}");
        let kappa: f64 = row[6].parse().unwrap();
        assert!(kappa >= 1.0 && kappa.is_finite(), "{row:?}");
    }
}

#[test]
fn zero_threads_is_rejected() {
    let out = trals(&["diagnose", "--config", "x.toml", "--threads", "0"]);
    assert_eq!(out.status.code(), Some(2));
}
