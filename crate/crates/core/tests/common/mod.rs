#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use radsum_core::corpus::{mix_multilingual, save_corpus, split_corpus, synthetic_corpus, SplitSpec};
use radsum_core::pipeline::PipelineConfig;
use radsum_core::workspace::WorkspaceConfig;
use radsum_core::{Corpus, Language, Split};
use serde_json::json;

pub mod oracles;

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn shipped_config() -> PipelineConfig {
    PipelineConfig::load(&repo_root().join("configs/mt5_radiology.json")).unwrap()
}

fn write_jsonl(path: &Path, rows: impl IntoIterator<Item = serde_json::Value>) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    let text: String = rows.into_iter().map(|r| format!("{r}\n")).collect();
    fs::write(path, text).unwrap();
}

pub fn split_of(n: usize, seed: u64) -> SplitSpec {
    let val = (n / 10).max(1);
    SplitSpec::counts(n - 2 * val, val, val, seed)
}

pub fn split(c: &Corpus, seed: u64) -> Corpus {
    split_corpus(c, &split_of(c.len(), seed)).unwrap()
}

/// Workspace holding every dataset of the shipped config at `n` reports
/// each, with the config's dataset paths resolved against the workspace.
pub fn shipped_workspace(root: &Path, n: usize) -> (WorkspaceConfig, PipelineConfig) {
    let mut config = shipped_config();
    config.base_dir = root.to_path_buf();
    let path = |name: &str| {
        let d = config.corpora.iter().find(|d| d.name == name).unwrap();
        config.dataset_path(d)
    };
    let en = split(&synthetic_corpus("MIMIC-CXR", Language::English, n, 7), 1);
    let pt = split(&synthetic_corpus("IU X-Ray", Language::Portuguese, n, 7), 1);
    let de = split(&synthetic_corpus("German RRs", Language::German, n, 7), 1);
    save_corpus(&en, &path("MIMIC-CXR")).unwrap();
    save_corpus(&pt, &path("IU X-Ray")).unwrap();
    save_corpus(&de, &path("German RRs")).unwrap();
    let per_lang = n / 2;
    let mixed = mix_multilingual(&[en.clone(), pt.clone(), de], Some(per_lang), &split_of(per_lang, 2), 3).unwrap();
    save_corpus(&mixed, &path("MIMIC-CXR+IU X-Ray+German RRs")).unwrap();

    let pairs = en.entries().zip(pt.reports()).map(|((e, s), p)| {
        json!({"id": e.id, "split": s, "source": e.findings, "target": p.findings})
    });
    write_jsonl(&path("MIMIC-CXR pairs"), pairs);
    let marc = (0..n).map(|i| {
        let s = if i % 10 == 0 { Split::Validation } else if i % 10 == 1 { Split::Test } else { Split::Train };
        let (body, title) = if i % 2 == 0 {
            ("Works great and the battery lasts for days.", "Great battery")
        } else {
            ("Broke after one week of light use.", "Broke quickly")
        };
        json!({"id": format!("r{i}"), "split": s, "review_body": body, "review_title": title})
    });
    write_jsonl(&path("MARC"), marc);
    (WorkspaceConfig::open(root).unwrap(), config)
}

/// Paper workspace with `stage` trained by the toy backend for `epochs`
/// epochs per stage along its chain.
pub fn trained_toy_workspace(root: &Path, n: usize, stage: &str, epochs: usize) -> (WorkspaceConfig, PipelineConfig) {
    use radsum_core::pipeline::{run_stage, RunOptions, ToyBackend};
    let (ws, mut config) = shipped_workspace(root, n);
    for s in &mut config.stages {
        s.hyperparams.epochs = epochs;
        s.hyperparams.batch_size = s.hyperparams.batch_size.min(4);
    }
    run_stage(&config, stage, &ToyBackend::new(), &ws, RunOptions { recursive: true, seed: 5 }).unwrap();
    (ws, config)
}

#[derive(serde::Deserialize)]
pub struct Table3Row {
    pub id: String,
    pub language: Language,
    pub findings: String,
    pub original: String,
    pub chatgpt: String,
    pub model: String,
}

pub fn table3() -> Vec<Table3Row> {
    let text = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/table3.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// Serves `router` on an ephemeral local port from a background runtime.
pub fn serve(router: axum::Router) -> String {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, router).await.unwrap();
        });
    });
    format!("http://{}", rx.recv().unwrap())
}
