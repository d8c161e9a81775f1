use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kolmogorov"))
}

fn bundled() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/gaussian2d.csv")
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).env_remove("KOLMOGOROV_THREADS").output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (h, rows) = read_csv(path);
    let k = h.iter().position(|c| c == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[k].parse().unwrap()).collect()
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

fn small_config(dir: &Path, extra: &str) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, format!(r#"{{"seed": 9, "data": {{"n": 800}}, "spectra": {{"ell": 15}}{extra}}}"#)).unwrap();
    p
}

#[test]
fn density_on_bundled_samples() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = run(
        &["density", "--samples", bundled().to_str().unwrap(), "--out", out.to_str().unwrap()],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let psi = column(&out.join("density.csv"), "psi_hat");
    assert_eq!(psi.len(), 1500);
    assert!(psi.iter().all(|p| *p > 0.0));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["n"], 1500);
    assert_eq!(manifest["dim"], 2);
    assert!(manifest["outputs"].as_array().unwrap().iter().any(|v| v == "density.csv"));
}

#[test]
fn malformed_rows_are_reported() {
    let tmp = TempDir::new().unwrap();
    let cases = [
        ("short.csv", "x,y\n1,2\n3,4\n5\n", "row 4"),
        ("text.csv", "1,2\n3,oops\n", "row 2"),
        ("nan.csv", "1,2\n3,4\nNaN,1\n", "row 3"),
        ("inf.csv", "1,2\ninf,4\n", "row 2"),
    ];
    for (name, body, needle) in cases {
        let p = tmp.path().join(name);
        fs::write(&p, body).unwrap();
        let o = run(&["density", "--samples", p.to_str().unwrap()], tmp.path());
        assert_eq!(o.status.code(), Some(1), "{name}");
        assert!(stderr(&o).contains(needle), "{name}: {}", stderr(&o));
    }
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path().join("bad.json");
    fs::write(&p, r#"{"operator": {"betta": -0.5}}"#).unwrap();
    let o = run(&["density", "--config", p.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("betta"), "{}", stderr(&o));
}

#[test]
fn bad_arguments_exit_nonzero() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(run(&["frobnicate"], tmp.path()).status.code(), Some(1));
    assert_eq!(run(&["solve", "--threads", "zero"], tmp.path()).status.code(), Some(1));
    assert_eq!(run(&["--help"], tmp.path()).status.code(), Some(0));
}

#[test]
fn solve_recovers_the_linear_mode() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = run(
        &["solve", "--samples", bundled().to_str().unwrap(), "--out", out.to_str().unwrap()],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let sol = out.join("solution.csv");
    let r = pearson(&column(&sol, "f"), &column(&sol, "x1"));
    assert!(r < -0.95, "correlation {r}");
    let (h, rows) = read_csv(&out.join("coefficients.csv"));
    assert_eq!(h, ["j", "lambda", "g_tilde", "f_tilde"]);
    assert!(!rows.is_empty());
}

#[test]
fn manifest_replays_byte_identically() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path(), "");
    let first = tmp.path().join("first");
    let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", first.to_str().unwrap()], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));

    let replay = tmp.path().join("replay");
    let o = run(
        &[
            "solve",
            "--config",
            first.join("resolved_config.json").to_str().unwrap(),
            "--samples",
            first.join("samples.csv").to_str().unwrap(),
            "--out",
            replay.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["solution.csv", "coefficients.csv", "resolved_config.json"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(replay.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn sampled_points_round_trip() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("config.json");
    fs::write(
        &cfg,
        r#"{"seed": 4, "data": {"n": 300, "distribution": {"kind": "gaussian", "mean": [1, 2, 3], "diag_cov": [1, 0.5, 2]}}}"#,
    )
    .unwrap();
    let a = tmp.path().join("a");
    let o = run(&["sample", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let (h, rows) = read_csv(&a.join("samples.csv"));
    assert_eq!(h, ["x1", "x2", "x3"]);
    assert_eq!(rows.len(), 300);

    // Reading the file back and writing it through density keeps every coordinate bit-exact.
    let b = tmp.path().join("b");
    let o = run(
        &["density", "--samples", a.join("samples.csv").to_str().unwrap(), "--out", b.to_str().unwrap()],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, dens) = read_csv(&b.join("density.csv"));
    for (r, d) in rows.iter().zip(&dens) {
        assert_eq!(r[..], d[1..4]);
    }

    let o = run(
        &["sample", "--samples", a.join("samples.csv").to_str().unwrap(), "--out", b.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn output_does_not_depend_on_thread_count() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path(), "");
    let mut outs = Vec::new();
    for t in ["1", "3"] {
        let out = tmp.path().join(format!("t{t}"));
        let o = run(
            &["gradient", "--config", cfg.to_str().unwrap(), "--threads", t, "--out", out.to_str().unwrap()],
            tmp.path(),
        );
        assert!(o.status.success(), "{}", stderr(&o));
        outs.push(out);
    }
    for f in ["samples.csv", "gradient.csv"] {
        assert_eq!(fs::read(outs[0].join(f)).unwrap(), fs::read(outs[1].join(f)).unwrap(), "{f}");
    }
}

#[test]
fn evolve_writes_snapshots_and_trajectory() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(
        tmp.path(),
        r#", "dynamics": {"velocity": {"kind": "constant", "v": [1, 0]}, "source": {"kind": "linear", "r": [1, 0]}, "dt": 0.05, "steps": 4, "snapshot_every": 2}"#,
    );
    let out = tmp.path().join("out");
    let o = run(&["evolve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let mut snaps: Vec<_> = fs::read_dir(out.join("snapshots"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    snaps.sort();
    assert_eq!(snaps, ["step_000000.csv", "step_000002.csv", "step_000004.csv"]);
    let mean = column(&out.join("trajectory.csv"), "mean_x1");
    assert_eq!(mean.len(), 5);
    assert!(mean[4] - mean[0] > 0.3, "drift {}", mean[4] - mean[0]);
    let u = column(&out.join("snapshots/step_000002.csv"), "u1");
    assert!(u.iter().sum::<f64>() / u.len() as f64 > 0.5);
}
