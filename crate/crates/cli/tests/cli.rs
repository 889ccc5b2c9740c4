use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/pipeline")
}

fn eyeq(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eyeq")).current_dir(dir).args(args).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn same(a: &Path, b: &Path) {
    assert!(fs::read(a).unwrap() == fs::read(b).unwrap(), "{} differs from {}", a.display(), b.display());
}

#[test]
fn stage_commands_reproduce_the_pipeline_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let fx = fixtures();
    let golden = fx.join("golden");
    let checkout = fx.join("checkout");
    let checkout = checkout.to_str().unwrap();

    ok(&eyeq(d, &["ingest", "--fixture", fx.join("corpus").to_str().unwrap()]));
    same(&d.join("corpus.jsonl"), &golden.join("corpus.jsonl"));

    ok(&eyeq(d, &["classify", "--corpus", "corpus.jsonl", "--client", "mock", "--out", "stage12.jsonl"]));
    same(&d.join("stage12.jsonl"), &golden.join("classification.jsonl"));

    ok(&eyeq(d, &["localize", "--stage12", "stage12.jsonl", "--repo-checkout", checkout, "--out", "localized.jsonl"]));
    same(&d.join("localized.jsonl"), &golden.join("localization.jsonl"));

    let diff = ok(&eyeq(
        d,
        &["instrument", "--localized", "localized.jsonl", "--repo-checkout", checkout, "--apply-to", "annotated", "--out", "sites.jsonl"],
    ));
    assert_eq!(diff, fs::read_to_string(golden.join("injections.diff")).unwrap());
    same(&d.join("sites.jsonl"), &golden.join("sites.jsonl"));
    same(&d.join("annotated/Zend/zend.c"), &golden.join("annotated/Zend/zend.c"));
}

#[test]
fn no_cwe_hint_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let fx = fixtures();
    fs::copy(fx.join("golden/corpus.jsonl"), d.join("corpus.jsonl")).unwrap();
    fs::copy(fx.join("golden/classification.jsonl"), d.join("stage12.jsonl")).unwrap();
    let checkout = fx.join("checkout");
    ok(&eyeq(d, &["localize", "--repo-checkout", checkout.to_str().unwrap(), "--no-cwe-hint"]));
    let text = fs::read_to_string(d.join("localized.jsonl")).unwrap();
    assert!(text.lines().next().unwrap().contains("\"cwe_hint\":false"));
    assert!(text.lines().skip(1).all(|l| l.contains("\"hint_given\":false")));
}

#[test]
fn fuzz_then_triage_with_replay_check() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    for (mode, out) in [("annot", "a.json"), ("baseline", "b.json")] {
        let args = ["fuzz", "--target", "magic", "--mode", mode, "--budget-execs", "2000000", "--stop-after-crashes", "1", "--rng-seed", "3", "--out", out];
        ok(&eyeq(d, &args));
    }
    let again = ["fuzz", "--target", "magic", "--mode", "annot", "--budget-execs", "2000000", "--stop-after-crashes", "1", "--rng-seed", "3", "--out", "c.json"];
    ok(&eyeq(d, &again));
    same(&d.join("a.json"), &d.join("c.json"));
    let out = ok(&eyeq(d, &["triage", "--reports", "a.json", "b.json", "--check-replay"]));
    assert!(out.contains("2 reports, 1 unique crashes"), "{out}");
    let triage = fs::read_to_string(d.join("triage.jsonl")).unwrap();
    assert_eq!(triage.lines().count(), 2);
    assert!(triage.contains("\"modes\":[\"annot\",\"baseline\"]"));
}

#[test]
fn fuzz_reads_a_seed_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::create_dir(d.join("seeds")).unwrap();
    fs::write(d.join("seeds/one"), b"HA").unwrap();
    let args = ["fuzz", "--target", "state_machine", "--seeds", "seeds", "--budget-execs", "100", "--out", "r.json"];
    ok(&eyeq(d, &args));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(r["initial_seeds"], 1);
    assert_eq!(r["total_execs"], 100);
}

#[test]
fn target_run_replays_one_input() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(&eyeq(tmp.path(), &["target", "run", "--name", "stack_size", "--input-hex", ""]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(v["crash"].is_null());
    let out = ok(&eyeq(tmp.path(), &["target", "run", "--name", "magic", "--input-hex", "7f454c4600"]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["crash"], "abort");
    let list = ok(&eyeq(tmp.path(), &["target", "list"]));
    let specs: serde_json::Value = serde_json::from_str(&list).unwrap();
    assert_eq!(specs.as_array().unwrap().len(), 4);
}

#[test]
fn taxonomy_show() {
    let tmp = tempfile::tempdir().unwrap();
    let all = ok(&eyeq(tmp.path(), &["taxonomy", "show"]));
    assert_eq!(all.lines().count(), 40);
    let one = ok(&eyeq(tmp.path(), &["taxonomy", "show", "--category", "1218"]));
    assert!(one.starts_with("CWE-1218 (category)"));
    let bad = eyeq(tmp.path(), &["taxonomy", "show", "--category", "787"]);
    assert_eq!(bad.status.code(), Some(3));
}

#[test]
fn run_and_report_from_config() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = fixtures();
    let cfg = fs::read_to_string(fx.join("eyeq.toml"))
        .unwrap()
        .replace("\"corpus\"", &format!("{:?}", fx.join("corpus")))
        .replace("\"checkout\"", &format!("{:?}", fx.join("checkout")))
        .replace("budget_execs = 400000", "budget_execs = 2000");
    fs::write(tmp.path().join("eyeq.toml"), cfg).unwrap();
    let out = ok(&eyeq(tmp.path(), &["--config", "eyeq.toml", "run"]));
    assert!(out.contains("ran: ingest, classify, localize, instrument, fuzz, triage"), "{out}");
    let again = ok(&eyeq(tmp.path(), &["--config", "eyeq.toml", "run", "--resume"]));
    assert!(again.contains("reused: ingest, classify, localize, instrument, fuzz, triage"), "{again}");
    let md = fs::read_to_string(tmp.path().join("out/report.md")).unwrap();
    fs::remove_file(tmp.path().join("out/report.md")).unwrap();
    let report = ok(&eyeq(tmp.path(), &["report", "--out-dir", "out"]));
    assert_eq!(report, md);
    assert_eq!(fs::read_to_string(tmp.path().join("out/report.md")).unwrap(), md);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(eyeq(d, &["--help"]).status.code(), Some(0));
    assert_eq!(eyeq(d, &["frobnicate"]).status.code(), Some(3));
    assert_eq!(eyeq(d, &["run"]).status.code(), Some(3));
    fs::write(d.join("bad.toml"), "parallelism = \"many\"\n").unwrap();
    assert_eq!(eyeq(d, &["--config", "bad.toml", "run"]).status.code(), Some(3));
    assert_eq!(eyeq(d, &["--config", "missing.toml", "run"]).status.code(), Some(3));
    assert_eq!(eyeq(d, &["fuzz", "--target", "magic"]).status.code(), Some(3));

    let fx = fixtures();
    fs::copy(fx.join("golden/corpus.jsonl"), d.join("corpus.jsonl")).unwrap();
    fs::copy(fx.join("golden/classification.jsonl"), d.join("stage12.jsonl")).unwrap();
    let out = eyeq(d, &["localize", "--repo-checkout", "gone"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gone"));
    assert_eq!(eyeq(d, &["classify", "--corpus", "nope.jsonl"]).status.code(), Some(2));
}
