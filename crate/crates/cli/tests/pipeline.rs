use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use fairprobe::backend::TrialRecord;
use fairprobe::categorize::LabeledRecord;
use fairprobe::ExperimentKind;
use fairprobe_cli::{
    cmd_all, cmd_label, cmd_plan, cmd_run, AuditConfig, BackendKind, CliError, OutputPaths,
    Overrides, RunOutcome,
};

/// Minimal chat-completions endpoint that always names the nurse.
fn spawn_server() -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            let counter = counter.clone();
            thread::spawn(move || {
                let mut reader = BufReader::new(stream);
                let mut length = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        return;
                    }
                    let line = line.trim_end();
                    if line.is_empty() {
                        break;
                    }
                    if let Some((k, v)) = line.split_once(':') {
                        if k.eq_ignore_ascii_case("content-length") {
                            length = v.trim().parse().unwrap();
                        }
                    }
                }
                let mut body = vec![0u8; length];
                reader.read_exact(&mut body).unwrap();
                counter.fetch_add(1, Ordering::SeqCst);
                let payload = serde_json::json!({
                    "id": "fake",
                    "model": "fake-model",
                    "choices": [{"index": 0, "message": {"role": "assistant", "content": "The nurse is right."}, "finish_reason": "stop"}]
                })
                .to_string();
                let mut stream = reader.into_inner();
                let _ = write!(
                    stream,
                    "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                    payload.len(),
                    payload
                );
            });
        }
    });
    (format!("http://{addr}"), hits)
}

/// Resolves `body` from a file in `dir`; output goes to `dir/out` unless
/// the body names another directory.
fn config(dir: &Path, body: &str) -> AuditConfig {
    let path = dir.join("fairprobe.toml");
    std::fs::write(&path, body).unwrap();
    let overrides = Overrides {
        out_dir: (!body.contains("[output]")).then(|| dir.join("out")),
        ..Overrides::default()
    };
    AuditConfig::resolve(Some(&path), &|_| None, &overrides).unwrap()
}

#[test]
fn cached_http_run_is_not_repeated() {
    let (url, hits) = spawn_server();
    std::env::set_var("FAIRPROBE_PIPELINE_TEST_KEY", "sk-test");
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        r#"
[backend]
kind = "http"
base_url = "{url}"
api_key_env = "FAIRPROBE_PIPELINE_TEST_KEY"
model_name = "fake-model"
parallelism = 3
cache_dir = "cache"

[plan]
kind = "sep_suf_medical"
replicates = 1

[output]
dir = "first"
"#
    );
    let mut cfg = config(dir.path(), &body);
    let mut sink = Vec::new();
    let first = cmd_all(&cfg, None, &mut sink).unwrap();
    let trials = first.plan.trials;
    assert!(trials > 0);
    assert_eq!(hits.load(Ordering::SeqCst), trials);

    cfg.out_dir = dir.path().join("second");
    cmd_all(&cfg, None, &mut sink).unwrap();
    assert_eq!(hits.load(Ordering::SeqCst), trials);

    cfg.out_dir = dir.path().join("replayed");
    cfg.backend = BackendKind::Replay;
    cmd_all(&cfg, None, &mut sink).unwrap();
    assert_eq!(hits.load(Ordering::SeqCst), trials);

    let a: Vec<TrialRecord> =
        fairprobe::jsonl::read(&OutputPaths::new(&dir.path().join("first")).records).unwrap();
    let b: Vec<TrialRecord> =
        fairprobe::jsonl::read(&OutputPaths::new(&dir.path().join("replayed")).records).unwrap();
    assert_eq!(a.len(), trials);
    assert_eq!(a, b);
    assert!(a
        .iter()
        .all(|r| r.response_text.as_deref() == Some("The nurse is right.")));
}

#[test]
fn replay_miss_is_recorded_per_trial() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "[backend]\nkind = \"replay\"\ncache_dir = \"empty\"\n[plan]\nkind = \"sep_suf_sector\"\nreplicates = 1\n",
    );
    std::fs::create_dir_all(dir.path().join("empty")).unwrap();
    let plan = cmd_plan(&cfg).unwrap();
    let RunOutcome::Completed { summary, .. } =
        cmd_run(&cfg, &plan.path, None, &mut Vec::new()).unwrap()
    else {
        panic!("expected a completed run");
    };
    assert_eq!(summary.failed, plan.trials);
    assert_eq!(summary.errors_by_kind.get("cache_miss"), Some(&plan.trials));
}

#[test]
fn forced_correct_sector_has_zero_error_rates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "seed = 3\n[plan]\nkind = \"sep_suf_sector\"\nreplicates = 4\ncontrol_replicates = 2\n",
    );
    let out = cmd_all(&cfg, None, &mut Vec::new()).unwrap();
    let report = out.analysis.unwrap().report;
    let sep_suf = report.sep_suf.expect("sector report has rates");
    for row in sep_suf.separation.values() {
        assert_eq!(row.fnr.value(), Some(0.0));
        assert_eq!(row.fpr.value(), Some(0.0));
    }
    assert!(sep_suf.flags.is_empty());
    let baseline = report.baseline.expect("controls were planned");
    assert_eq!(baseline.wrong, 0);
    assert_eq!(baseline.relative_error.value(), Some(0.0));
}

#[test]
fn dry_run_prints_prompts_and_writes_no_records() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "[plan]\nkind = \"sep_suf_medical\"\nreplicates = 1\n",
    );
    let mut out = Vec::new();
    let result = cmd_all(&cfg, Some(3), &mut out).unwrap();
    assert_eq!(result.run, RunOutcome::Preview { shown: 3 });
    assert!(result.analysis.is_none());
    let text = String::from_utf8(out).unwrap();
    assert_eq!(
        text.matches("\n--- ").count() + usize::from(text.starts_with("--- ")),
        3
    );
    assert!(text.contains("Who is right?"));
    assert!(!OutputPaths::new(&cfg.out_dir).records.exists());
}

#[test]
fn hobby_run_writes_polarity_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("profile.json"), r#"{"hobby_bias": 0.9}"#).unwrap();
    let cfg = config(
        dir.path(),
        "seed = 2\n[backend]\nmock_profile = \"profile.json\"\n[plan]\nkind = \"independence_hobby\"\nreplicates = 1\n[analysis]\ntop_k = 5\n[analysis.skipgram]\ndimension = 20\nepochs = 3\n",
    );
    let out = cmd_all(&cfg, None, &mut Vec::new()).unwrap();
    let paths = OutputPaths::new(&cfg.out_dir);
    for p in [
        &paths.embeddings,
        &paths.scores,
        &paths.comparison,
        &paths.report_json,
    ] {
        assert!(p.is_file(), "{} missing", p.display());
    }
    let report = out.analysis.unwrap().report;
    let polarity = report.polarity.expect("hobby report has polarity");
    assert_eq!(polarity.scored, out.plan.trials);
    assert!(polarity.top_words.values().all(|w| w.len() == 5));
    assert!(report.independence.is_none());
}

#[test]
fn label_rejects_mixed_plans() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(
        dir.path(),
        "[plan]\nkind = \"sep_suf_sector\"\nreplicates = 1\n",
    );
    cmd_all(&cfg, None, &mut Vec::new()).unwrap();
    let paths = OutputPaths::new(&cfg.out_dir);
    let mut records: Vec<TrialRecord> = fairprobe::jsonl::read(&paths.records).unwrap();

    cfg.kind = ExperimentKind::SepSufMedical;
    cfg.out_dir = dir.path().join("medical");
    cmd_all(&cfg, None, &mut Vec::new()).unwrap();
    let medical: Vec<TrialRecord> =
        fairprobe::jsonl::read(&OutputPaths::new(&cfg.out_dir).records).unwrap();
    records.extend(medical);
    let mixed = dir.path().join("mixed.jsonl");
    fairprobe::jsonl::write(&mixed, &records).unwrap();
    let err = cmd_label(&cfg, &mixed).unwrap_err();
    assert!(matches!(err, CliError::Label(_)));
    assert_eq!(err.exit_code(), 6);

    let labeled: Vec<LabeledRecord> = fairprobe::jsonl::read(&paths.labeled).unwrap();
    assert!(labeled.iter().all(|r| r.c.is_some()));
}

#[test]
fn missing_inputs_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let err = cmd_label(&cfg, &dir.path().join("absent.jsonl")).unwrap_err();
    assert!(matches!(err, CliError::FileNotFound(_)));
    assert_eq!(err.exit_code(), 3);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[backend]\ntemperature = 7.0\n").unwrap();
    let err = AuditConfig::resolve(Some(&bad), &|_| None, &Overrides::default()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}
