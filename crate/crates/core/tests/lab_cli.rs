use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use conlab::lab::REPORT_HEADER;

fn lab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lab"))
        .args(args)
        .current_dir(dir)
        .env_remove("LAB_OUTPUT_DIR")
        .output()
        .expect("spawn lab")
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const NOISE_FREE: &str = "\
[experiment]
id = noise_free_identity
seed = 11
instances = 6
output_dir = out

[distribution]
points = 5
noise = 0
";

#[test]
fn list_is_stable_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let a = lab(dir.path(), &["list"]);
    let b = lab(dir.path(), &["list"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let ids = conlab::lab::catalog().iter().filter(|e| text.contains(e.id)).count();
    assert!(ids >= 12);
    assert!(text.contains("tolerances:"));
}

#[test]
fn passing_run_writes_outputs_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "a.cfg", NOISE_FREE);
    let first = lab(dir.path(), &["run", "a.cfg"]);
    assert_eq!(code(&first), 0, "{}", stderr(&first));
    let out = dir.path().join("out");
    let csv1 = std::fs::read(out.join("report.csv")).unwrap();
    let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("status: PASS"));
    let text = String::from_utf8(csv1.clone()).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(REPORT_HEADER));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.starts_with("noise_free_identity,") && r.ends_with(",true")));

    let second = lab(dir.path(), &["run", "a.cfg"]);
    assert_eq!(code(&second), 0);
    assert_eq!(csv1, std::fs::read(out.join("report.csv")).unwrap());
}

#[test]
fn mu_curve_example_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "mu.cfg",
        "[experiment]\nid = mu_selection_curve\ninstances = 3\noutput_dir = mu\n[grid]\neta = 1, 1.5, 2, 3, 5\n",
    );
    let o = lab(dir.path(), &["run", "mu.cfg"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("mu/report.csv")).unwrap();
    assert!(csv.contains("eta 1,mu(1)==0,"));
    assert!(csv.contains("mu(eta)_increasing"));
    let svg = std::fs::read_to_string(dir.path().join("mu/mu_vs_eta.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
    assert!(dir.path().join("mu/mu_curve.csv").exists());
}

#[test]
fn malformed_config_is_a_usage_error_with_line() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.cfg", "[experiment]\nid = noise_free_identity\nseed = -3\n");
    let o = lab(dir.path(), &["run", "bad.cfg"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    write(dir.path(), "unknown.cfg", "[experiment]\nid = nope\n");
    let o = lab(dir.path(), &["run", "unknown.cfg"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 2"));

    assert_eq!(code(&lab(dir.path(), &["run", "missing.cfg"])), 2);
    assert_eq!(code(&lab(dir.path(), &["frobnicate"])), 2);
    assert_eq!(code(&lab(dir.path(), &["run"])), 2);
}

#[test]
fn failing_check_exits_one_and_lists_records() {
    let dir = tempfile::tempdir().unwrap();
    // central differences never reproduce analytic gradients exactly
    write(
        dir.path(),
        "strict.cfg",
        "[experiment]\nid = gradient_suite\ninstances = 5\noutput_dir = strict\n[tolerance]\nrelative = 0\n",
    );
    let o = lab(dir.path(), &["run", "strict.cfg"]);
    assert_eq!(code(&o), 1);
    let summary = std::fs::read_to_string(dir.path().join("strict/summary.txt")).unwrap();
    assert!(summary.contains("status: FAIL"));
    assert!(summary.contains("failing records:"));
    let csv = std::fs::read_to_string(dir.path().join("strict/report.csv")).unwrap();
    assert!(csv.lines().any(|l| l.ends_with(",false")));
}

#[test]
fn runtime_error_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "clean.cfg",
        "[experiment]\nid = mu_selection_curve\ninstances = 2\noutput_dir = x\n[distribution]\nnoise = 0\n",
    );
    let o = lab(dir.path(), &["run", "clean.cfg"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("ERROR"));
}

#[test]
fn sweep_reports_worst_status_and_env_overrides_output() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "a.cfg", NOISE_FREE);
    write(
        dir.path(),
        "b.cfg",
        "[experiment]\nid = gradient_suite\ninstances = 5\n[tolerance]\nrelative = 0\n",
    );
    let env_out = dir.path().join("env_out");
    let o = Command::new(env!("CARGO_BIN_EXE_lab"))
        .args(["run", "a.cfg", "b.cfg"])
        .current_dir(dir.path())
        .env("LAB_OUTPUT_DIR", &env_out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    assert!(env_out.join("noise_free_identity/report.csv").exists());
    assert!(env_out.join("gradient_suite/report.csv").exists());
    assert!(!dir.path().join("out").exists());
}

#[test]
fn gen_writes_a_distribution_usable_by_run() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "s.synth",
        "[synth]\nkind = finite\nlabels = 4\npoints = 12\nnoise = 0\nseed = 5\n",
    );
    let o = lab(dir.path(), &["gen", "s.synth", "-o", "data/d.dist"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let d = conlab::format::load_distribution(&dir.path().join("data/d.dist")).unwrap();
    assert_eq!((d.num_labels(), d.len()), (4, 12));

    write(
        dir.path(),
        "f.cfg",
        "[experiment]\nid = noise_free_identity\ninstances = 3\noutput_dir = f\n[distribution]\nfile = data/d.dist\n",
    );
    let o = lab(dir.path(), &["run", "f.cfg"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    write(dir.path(), "c.synth", "[synth]\nkind = futility_grid\nseed = 1\n");
    let o = lab(dir.path(), &["gen", "c.synth", "-o", "g.dist"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let listed = String::from_utf8(o.stdout).unwrap();
    assert!(listed.lines().filter(|l| l.ends_with(".scores")).count() > 1);

    write(dir.path(), "bad.synth", "[synth]\nkind = finite\nlabels = many\n");
    let o = lab(dir.path(), &["gen", "bad.synth", "-o", "x.dist"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3"));
}

#[test]
fn help_documents_csv_columns_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(dir.path(), &["--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains(REPORT_HEADER));
    assert!(text.contains("LAB_OUTPUT_DIR"));
    assert!(text.contains("2 usage or config error"));
}

#[test]
fn shipped_configs_parse_and_cover_the_catalog() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut ids = Vec::new();
    for entry in std::fs::read_dir(&dir).unwrap() {
        let p = entry.unwrap().path();
        match p.extension().and_then(|e| e.to_str()) {
            Some("cfg") => {
                let cfg = conlab::lab::ExperimentConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
                ids.push(cfg.id);
            }
            Some("synth") => {
                let text = std::fs::read_to_string(&p).unwrap();
                conlab::lab::gen::SynthSpec::parse(&text).unwrap();
            }
            _ => {}
        }
    }
    for e in conlab::lab::catalog() {
        assert!(ids.iter().any(|i| i == e.id), "no config for {}", e.id);
    }
}
