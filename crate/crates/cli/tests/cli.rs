use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_aquaplan"));
    c.env_remove("AQUAPLAN_OUTDIR");
    c
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().arg("--outdir").arg(dir).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csvs(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    v.sort();
    v
}

/// Header row of a CSV, after the comment block.
fn header(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .find(|l| !l.starts_with('#'))
        .unwrap()
        .to_string()
}

fn data_rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().filter(|l| !l.starts_with('#')).count() - 1
}

#[test]
fn aoi_at_zero_threshold_prints_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["aoi", "--lambda", "0.8", "--mu", "1", "--M", "0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().next(), Some("1.0"));
}

#[test]
fn unstable_queue_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["aoi", "--lambda", "1.2", "--mu", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unstable"), "{}", stderr(&o));
    assert!(csvs(dir.path()).is_empty());
}

#[test]
fn invalid_parameter_names_the_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["aoi", "--M", "-1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("threshold M must be >= 0"), "{}", stderr(&o));
    let o = run_in(dir.path(), &["place", "--gamma-wake", "0.9"]);
    assert!(o.status.success());
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["aoi", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
    let o = run_in(dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    let o = run_in(dir.path(), &["rate", "--surrogate", "svm"]);
    assert_eq!(o.status.code(), Some(2));
    let help = bin().arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
    assert!(stdout(&help).contains("simulate"));
}

#[test]
fn bad_config_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[queue]\nlamda = 0.3\n").unwrap();
    let o = run_in(dir.path(), &["aoi", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lamda"));
}

#[test]
fn rate_defaults_emit_fifty_evaluations() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["rate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let files = csvs(dir.path());
    let trace = files
        .iter()
        .find(|p| {
            let n = p.file_name().unwrap().to_str().unwrap();
            n.starts_with("rate_") && !n.starts_with("rate_chu_")
        })
        .unwrap();
    assert_eq!(
        header(trace),
        "eval,iteration,phase,lambda,observed,best,c_t,predicted,delta,acquisition"
    );
    assert_eq!(data_rows(trace), 50);
    let text = fs::read_to_string(trace).unwrap();
    assert!(text.starts_with("# command = rate\n"));
    assert!(text.contains("# [queue]"));
    assert!(text.contains("# lambda = 0.8"));
    let last = text.lines().last().unwrap();
    assert!(last.starts_with("49,40,bo,"));
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "seed = 3\n[queue]\nlambda = 0.5\nM = 2.0\n").unwrap();
    let o = run_in(dir.path(), &["--config", cfg.to_str().unwrap(), "aoi", "--M", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["config"]["queue"]["lambda"], 0.5);
    assert_eq!(manifest["config"]["queue"]["M"], 1.0);
    assert_eq!(manifest["command"]["name"], "aoi");
}

#[test]
fn outdir_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin().env("AQUAPLAN_OUTDIR", dir.path()).arg("channel").output().unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("run.json").exists());
    let files = csvs(dir.path());
    assert_eq!(files.len(), 1);
    assert_eq!(header(&files[0]), "distance_m,freq_khz,absorption_db_per_km,attenuation_db");
    assert_eq!(data_rows(&files[0]), 100);
}

#[test]
fn headers_match_schema_doc() {
    let doc = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/schemas.md")).unwrap();
    let documented: Vec<&str> = doc.lines().filter_map(|l| l.strip_prefix("header: ")).collect();
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("small.toml");
    fs::write(&cfg, "[bo]\niters = 3\ncompare_seeds = 5\nmlp_epochs = 20\n").unwrap();
    let mut produced = Vec::new();
    for (i, args) in [
        &["channel"][..],
        &["sense", "--surface"],
        &["aoi"],
        &["place"],
        &["rate"],
        &["compare"],
        &["simulate", "--kind", "mm1"],
        &["simulate", "--kind", "delay"],
    ]
    .iter()
    .enumerate()
    {
        let dir = root.path().join(i.to_string());
        fs::create_dir(&dir).unwrap();
        let mut full = vec!["--config", cfg.to_str().unwrap()];
        full.extend_from_slice(args);
        let o = run_in(&dir, &full);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        for p in csvs(&dir) {
            let h = header(&p);
            assert!(documented.contains(&h.as_str()), "{} header not documented: {h}", p.display());
            produced.push(h);
        }
        if args[0] == "place" {
            let rows = |part: &str| data_rows(&csvs(&dir).into_iter().find(|p| p.to_str().unwrap().contains(part)).unwrap());
            assert_eq!(rows("place_grid"), 2500);
            assert_eq!(rows("place_acquisition"), 10_000);
        }
    }
    for h in documented {
        assert!(produced.iter().any(|p| p == h), "documented header never produced: {h}");
    }
}

#[test]
fn manifest_rerun_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let o = run_in(a.path(), &["simulate", "--kind", "mm1", "--seed", "5", "--lambda", "0.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = a.path().join("run.json");
    let o = run_in(b.path(), &["--from-manifest", manifest.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in fs::read_dir(a.path()).unwrap() {
        let f = f.unwrap().path();
        let twin = b.path().join(f.file_name().unwrap());
        assert_eq!(fs::read(&f).unwrap(), fs::read(&twin).unwrap(), "{}", f.display());
    }
    let o = run_in(b.path(), &["--from-manifest", manifest.to_str().unwrap(), "aoi"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn thread_cap_does_not_change_output() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run_in(a.path(), &["place", "--iters", "5", "--threads", "1"]).status.success());
    let m = a.path().join("run.json");
    assert!(run_in(b.path(), &["--from-manifest", m.to_str().unwrap(), "--threads", "3"]).status.success());
    for f in csvs(a.path()) {
        assert_eq!(fs::read(&f).unwrap(), fs::read(b.path().join(f.file_name().unwrap())).unwrap());
    }
}
