mod common;

use std::time::Duration;

use axum::routing::post;
use axum::{Json, Router};
use proptest::prelude::*;
use radsum_core::corpus::load_corpus;
use radsum_core::model::tokenizer;
use radsum_core::summarize::*;
use radsum_core::{Language, Split};
use serde_json::{json, Value};

const STAGE: &str = "rr1000_EN";

fn trained() -> (tempfile::TempDir, radsum_core::workspace::WorkspaceConfig, radsum_core::pipeline::PipelineConfig) {
    let dir = tempfile::tempdir().unwrap();
    let (ws, config) = common::trained_toy_workspace(dir.path(), 60, STAGE, 4);
    (dir, ws, config)
}

fn median(mut v: Vec<usize>) -> f64 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 { v[n / 2] as f64 } else { (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0 }
}

#[test]
fn toy_checkpoint_generation_contract() {
    let (_dir, ws, config) = trained();
    let ckpt = Checkpoint::load(&ws, STAGE).unwrap();
    let corpus = load_corpus(&config.dataset_path(config.corpora.iter().find(|d| d.name == "MIMIC-CXR").unwrap())).unwrap();
    let findings = &corpus.reports()[0].findings;

    for cap in [1, 50, 1000] {
        let out = ckpt.summarize(&GenerationRequest::new(findings.clone(), Language::English).with_max_new_tokens(cap)).unwrap();
        let n = tokenizer::count(&out);
        assert!(n >= 1 && n <= cap, "cap {cap}: {n} tokens in {out:?}");
    }
    let req = GenerationRequest::new(findings.clone(), Language::English);
    assert_eq!(ckpt.summarize(&req).unwrap(), ckpt.summarize(&req).unwrap());

    let a = GenerationRequest::new(corpus.reports()[1].findings.clone(), Language::English);
    let batch = ckpt.summarize_batch(&[req.clone(), a.clone()]);
    assert_eq!(batch[0].as_ref().unwrap(), &ckpt.summarize(&req).unwrap());
    assert_eq!(batch[1].as_ref().unwrap(), &ckpt.summarize(&a).unwrap());
    assert!(ckpt.summarize_batch(&[]).is_empty());

    let bad = GenerationRequest::new("   ", Language::English);
    let mixed = ckpt.summarize_batch(&[req, bad, a]);
    assert_eq!(mixed.iter().filter(|r| r.is_ok()).count(), 2);
    assert!(matches!(mixed[1], Err(SummarizeError::EmptyFindings)));

    // A German request on an English checkpoint only warns.
    assert!(ckpt.summarize(&GenerationRequest::new("Kein Erguss.", Language::German)).is_ok());

    // Compression over the test split.
    let summary = summarize_split(&ckpt, &corpus, Split::Test, 1000);
    assert!(summary.errors.is_empty());
    assert!(!summary.predictions.is_empty());
    let gen = median(summary.predictions.iter().map(|p| tokenizer::count(&p.generated)).collect());
    let src = median(corpus.in_split(Split::Test).map(|r| tokenizer::count(&r.findings)).collect());
    assert!(gen < src, "median generated {gen} vs findings {src}");
}

#[test]
fn missing_and_null_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let (ws, config) = common::shipped_workspace(dir.path(), 20);
    let e = Checkpoint::load(&ws, "nope").err().unwrap();
    assert_eq!(e.class(), "CheckpointNotFound");
    radsum_core::pipeline::run_stage(
        &config,
        "summaries_EN",
        &radsum_core::pipeline::NullBackend::new(),
        &ws,
        Default::default(),
    )
    .unwrap();
    assert!(matches!(Checkpoint::load(&ws, "summaries_EN"), Err(SummarizeError::NotGenerative(..))));
}

#[cfg(unix)]
#[test]
fn external_checkpoint_generates_through_program() {
    use radsum_core::pipeline::{write_manifest, ArtifactKind, ArtifactManifest};
    use std::os::unix::fs::PermissionsExt;
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("gen.sh");
    // Replies with the first three words of each source, one JSON per line.
    std::fs::write(
        &script,
        "#!/bin/sh\n[ \"$1\" = generate ] || exit 2\npython3 -c '\nimport json,sys\nfor l in sys.stdin:\n  o=json.loads(l)\n  print(json.dumps({\"id\":o[\"id\"],\"generated\":\" \".join(o[\"source\"].split()[:3])}))\n'\n",
    )
    .unwrap();
    std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();
    let art = dir.path().join("art");
    std::fs::create_dir_all(&art).unwrap();
    write_manifest(
        &art,
        &ArtifactManifest {
            kind: ArtifactKind::External,
            id: "ext".into(),
            task: None,
            max_new_tokens: None,
            language: None,
            command: vec![script.to_string_lossy().into_owned()],
        },
    )
    .unwrap();
    let ckpt = Checkpoint::open(&art, "ext").unwrap();
    let out = ckpt.summarize_batch(&[
        GenerationRequest::new("one two three four", Language::English),
        GenerationRequest::new("alpha beta gamma delta", Language::English).with_max_new_tokens(2),
    ]);
    assert_eq!(out[0].as_ref().unwrap(), "one two three");
    assert_eq!(out[1].as_ref().unwrap(), "alpha beta");
}

fn chat_reply(content: &str) -> Value {
    json!({
        "choices": [{ "message": { "role": "assistant", "content": content } }],
        "usage": { "prompt_tokens": 12, "completion_tokens": 4 }
    })
}

#[test]
fn openai_compatible_client_against_local_server() {
    let ok = Router::new().route(
        "/v1/chat/completions",
        post(|Json(body): Json<Value>| async move {
            let prompt = body["messages"][0]["content"].as_str().unwrap_or("").to_string();
            assert_eq!(body["temperature"], 0);
            Json(chat_reply(&format!("summary of [{prompt}]")))
        }),
    );
    let url = common::serve(ok);
    let provider = OpenAiCompatible::new(&format!("{url}/v1"), "m", Some("k".into()), Duration::from_secs(5));
    let client = BaselineClient::new(Box::new(provider));
    let rec = client.summarize("Heart normal.", Language::English).unwrap();
    assert_eq!(rec.response, "summary of [Summarize the following radiology findings in English: Heart normal.]");
    assert_eq!((rec.prompt_tokens, rec.completion_tokens), (12, 4));
    assert_eq!(rec.template_version, PROMPT_TEMPLATE_VERSION);
    assert_eq!(client.spent_tokens(), 16);

    let down = Router::new().route(
        "/chat/completions",
        post(|| async { (axum::http::StatusCode::SERVICE_UNAVAILABLE, "busy") }),
    );
    let url = common::serve(down);
    let mut client = BaselineClient::new(Box::new(OpenAiCompatible::new(&url, "m", None, Duration::from_secs(5))));
    client.backoff = Duration::from_millis(1);
    client.max_retries = 2;
    let e = client.summarize("x", Language::English).unwrap_err();
    assert!(matches!(e, ProviderError::Unavailable { attempts: 3, .. }), "{e}");

    let slow = Router::new().route(
        "/chat/completions",
        post(|| async {
            tokio::time::sleep(Duration::from_secs(2)).await;
            Json(chat_reply("late"))
        }),
    );
    let url = common::serve(slow);
    let mut client = BaselineClient::new(Box::new(OpenAiCompatible::new(&url, "m", None, Duration::from_millis(200))));
    client.backoff = Duration::from_millis(1);
    client.max_retries = 1;
    assert_eq!(client.summarize("x", Language::English).unwrap_err().class(), "ProviderUnavailable");

    let rejected = Router::new().route(
        "/chat/completions",
        post(|| async { (axum::http::StatusCode::UNAUTHORIZED, "bad key") }),
    );
    let url = common::serve(rejected);
    let client = BaselineClient::new(Box::new(OpenAiCompatible::new(&url, "m", None, Duration::from_secs(5))));
    assert_eq!(client.summarize("x", Language::English).unwrap_err().class(), "ProviderRejected");
}

#[test]
fn table3_baseline_is_never_shorter_than_model() {
    let rows = common::table3();
    let report = comparison_report(
        rows.iter().map(|r| (r.id.as_str(), r.findings.as_str(), r.original.as_str(), r.chatgpt.as_str(), r.model.as_str())),
    );
    assert_eq!(report.len(), 2);
    for row in &report {
        assert!(row.baseline_not_shorter(), "{}", row.id);
        assert!(row.model_tokens < row.findings_tokens);
    }
    // The echo baseline rephrases nothing at all.
    let client = BaselineClient::new(Box::new(EchoProvider));
    for r in &rows {
        assert_eq!(baseline_summarize(&client, &r.findings, r.language).unwrap(), r.findings);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn generation_never_exceeds_cap(words in proptest::collection::vec("[a-z]{1,6}[.,]?", 1..40), cap in 1usize..20) {
        let mut model = radsum_core::ToyModel::new(3);
        let src = words.join(" ");
        model.extend_vocab(&[radsum_core::model::Example { source: src.clone(), target: src.clone() }]);
        let out = model.generate(&src, cap);
        prop_assert!(out.len() <= cap);
    }
}
