use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use freetrans_core::io::parse_field_csv;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn freetrans(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_freetrans"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn config_arg(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

fn key(text: &str, k: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{k}: ")))
        .unwrap_or_else(|| panic!("no {k} in\n{text}"))
        .to_string()
}

#[test]
fn solve_reproduces_affine_data() {
    let dir = tempfile::tempdir().unwrap();
    let o = freetrans(
        &["solve", "--config", &config_arg("affine.toml")],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let u = parse_field_csv(&fs::read_to_string(dir.path().join("solution.csv")).unwrap()).unwrap();
    let d = u.domain();
    let err = d
        .active_nodes()
        .map(|k| {
            let [x, y] = d.coords(k);
            (u.value(k) - (1.0 + 2.0 * x - 0.5 * y)).abs()
        })
        .fold(0.0, f64::max);
    // The eps u term perturbs the affine solution by O(eps ||u||).
    assert!(err < 1e-4, "max deviation {err}");
    let report = fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert_eq!(key(&report, "converged"), "true");
}

#[test]
fn probe_recovers_the_exact_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let o = freetrans(
        &["probe", "--config", &config_arg("exact_p1.toml")],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    let alpha: f64 = key(&summary, "alpha0").parse().unwrap();
    assert!((0.4..=0.6).contains(&alpha), "alpha0 = {alpha}");
    assert!(dir.path().join("solution.csv").exists());

    // The exact profile itself, probed over all six scales.
    let text = fs::read_to_string(configs().join("exact_p1.toml"))
        .unwrap()
        .replace("k_max = 3", "k_max = 6\nfield = \"|x|^1.5\"");
    let cfg = dir.path().join("profile.toml");
    fs::write(&cfg, text).unwrap();
    let out = dir.path().join("profile");
    let o = freetrans(&["probe", "--config", cfg.to_str().unwrap()], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    let alpha: f64 = key(&summary, "alpha0").parse().unwrap();
    assert!((alpha - 0.5).abs() < 0.02, "alpha0 = {alpha}");
}

#[test]
fn sweep_is_stable_in_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let o = freetrans(
        &[
            "sweep",
            "--config",
            &config_arg("double_phase.toml"),
            "--no-timestamp",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for i in 0..3 {
        let p = dir.path().join(format!("point_{i:03}"));
        assert!(p.join("report.txt").exists() && p.join("solution.csv").exists());
    }
    let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert_eq!(key(&manifest, "command"), "sweep");
    assert_eq!(key(&manifest, "config_sha256").len(), 64);
    assert!(!manifest.contains("timestamp"));
    let index = fs::read_to_string(dir.path().join("index.csv")).unwrap();
    assert_eq!(index.lines().count(), 4);
    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    let variation: f64 = key(&summary, "seminorm_variation_0.5").parse().unwrap();
    assert!(variation <= 0.2, "variation {variation}");
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(tree(&p));
        } else {
            out.push((
                p.strip_prefix(dir).unwrap().to_path_buf(),
                fs::read(&p).unwrap(),
            ));
        }
    }
    out.sort();
    out
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = config_arg("affine.toml");
    for (dir, threads) in [(&a, "1"), (&b, "3")] {
        let o = freetrans(
            &[
                "verify",
                "--config",
                &cfg,
                "--seed",
                "11",
                "--threads",
                threads,
                "--no-timestamp",
            ],
            dir.path(),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert!(ta.iter().any(|(p, _)| p.ends_with("certificates.csv")));
    assert_eq!(ta, tb);
    let manifest = String::from_utf8(
        ta.iter()
            .find(|(p, _)| p.ends_with("manifest.txt"))
            .unwrap()
            .1
            .clone(),
    )
    .unwrap();
    assert_eq!(key(&manifest, "seed"), "11");

    let o = freetrans(&["barriers", "--config", &cfg], a.path());
    assert!(o.status.success());
    let manifest = fs::read_to_string(a.path().join("manifest.txt")).unwrap();
    assert!(key(&manifest, "timestamp_unix").parse::<u64>().is_ok());
}

#[test]
fn invalid_config_reports_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("affine.toml"))
        .unwrap()
        .replace("h = 0.0625", "h = 0")
        .replace("lambda = 0.5", "lambda = 2")
        .replace("\"1 + 2*x - 0.5*y\"", "\"1 + 2*z\"");
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, text).unwrap();
    let out = dir.path().join("out");
    let o = freetrans(&["solve", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(2));
    let record = fs::read_to_string(out.join("error.txt")).unwrap();
    assert_eq!(key(&record, "kind"), "config");
    assert!(record.contains("problem: domain.h"), "{record}");
    assert!(record.contains("problem: problem.boundary"), "{record}");
    // No compute, no manifest.
    assert!(!out.join("manifest.txt").exists());

    // Invariants of the built objects surface as config errors as well.
    let text = fs::read_to_string(configs().join("affine.toml"))
        .unwrap()
        .replace("lambda = 0.5", "lambda = 2");
    fs::write(&cfg, text).unwrap();
    let o = freetrans(&["solve", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(2));
    let record = fs::read_to_string(out.join("error.txt")).unwrap();
    assert!(record.contains("problem: operator:"), "{record}");
}

#[test]
fn missing_config_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = freetrans(&["solve", "--config", "/nonexistent/run.toml"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let record = fs::read_to_string(dir.path().join("error.txt")).unwrap();
    assert_eq!(key(&record, "kind"), "io");
}
