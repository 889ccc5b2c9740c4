use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use eyeq_core::pipeline::{run_pipeline, PipelineConfig, Stage};

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/pipeline")
}

fn config(out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::load(&fixture_dir().join("eyeq.toml")).unwrap();
    cfg.paths.out_dir = out.to_path_buf();
    cfg
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

/// Set `EYEQ_BLESS=1` to rewrite the goldens after an intended change.
#[test]
fn fixture_run_matches_goldens() {
    let tmp = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let outcome = run_pipeline(&config(tmp.path()), false).unwrap();
    let elapsed = t.elapsed();
    assert_eq!(outcome.ran, Stage::ALL.to_vec());
    let golden = fixture_dir().join("golden");
    if std::env::var_os("EYEQ_BLESS").is_some() {
        let _ = fs::remove_dir_all(&golden);
        for f in files(tmp.path()) {
            let dst = golden.join(&f);
            fs::create_dir_all(dst.parent().unwrap()).unwrap();
            fs::copy(tmp.path().join(&f), dst).unwrap();
        }
    }
    assert_eq!(files(tmp.path()), files(&golden));
    for f in files(&golden) {
        let got = fs::read(tmp.path().join(&f)).unwrap();
        let want = fs::read(golden.join(&f)).unwrap();
        assert!(got == want, "{} differs from its golden", f.display());
    }
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
}

#[test]
fn fiber_site_follows_the_committed_assignment() {
    let text = fs::read_to_string(fixture_dir().join("golden/annotated/Zend/zend.c")).unwrap();
    let anchor = "        EG(fiber_stack_size) = tmp;\n";
    let at = text.find(anchor).unwrap() + anchor.len();
    assert!(text[at..].starts_with("\n        #ifdef _USE_IJON\n        IJON_SET(EG(fiber_stack_size));\n        #endif\n"));
    assert_eq!(text.matches("IJON_").count(), 1);
}

#[test]
fn resume_reruns_only_from_the_missing_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(tmp.path());
    cfg.fuzz.budget_execs = 2_000;
    run_pipeline(&cfg, false).unwrap();
    let before = fs::read(tmp.path().join("sites.jsonl")).unwrap();
    fs::remove_file(tmp.path().join(Stage::Fuzz.file())).unwrap();
    let again = run_pipeline(&cfg, true).unwrap();
    assert_eq!(again.reused, vec![Stage::Ingest, Stage::Classify, Stage::Localize, Stage::Instrument]);
    assert_eq!(again.ran, vec![Stage::Fuzz, Stage::Triage]);
    assert_eq!(fs::read(tmp.path().join("sites.jsonl")).unwrap(), before);
}

#[test]
fn resume_with_everything_present_runs_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(tmp.path());
    cfg.fuzz.budget_execs = 1_000;
    let first = run_pipeline(&cfg, false).unwrap();
    let again = run_pipeline(&cfg, true).unwrap();
    assert!(again.ran.is_empty());
    assert_eq!(again.summary, first.summary);
}

#[test]
fn missing_checkout_fails_at_localize() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(tmp.path());
    cfg.paths.checkout = tmp.path().join("no-such-checkout");
    let err = run_pipeline(&cfg, false).unwrap_err();
    assert_eq!(err.stage, Stage::Localize);
    assert_eq!(err.last_artifact.as_deref(), Some(tmp.path().join("classification.jsonl").as_path()));
    assert!(err.to_string().contains("no-such-checkout"), "{err}");
}
