use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use radsum_core::corpus::{
    balance_corpus, load_corpus, mix_multilingual, parse_report, save_corpus, split_corpus, MarkerTable,
};
use radsum_core::human_eval::{ApiState, EvalService};
use radsum_core::pipeline::{
    run_all, run_stage, validate_config, ExternalBackend, NullBackend, PipelineConfig, RunOptions, ToyBackend,
    TrainerBackend,
};
use radsum_core::predictions::{write_predictions, Prediction};
use radsum_core::rouge::evaluate_model;
use radsum_core::summarize::{
    comparison_report, BaselineClient, ChatProvider, Checkpoint, EchoProvider, GenerationRequest, OpenAiCompatible,
};
use radsum_core::translate::{
    parallel_pairs, translate_corpus, write_pairs, BackendKind, CorpusOptions, ExternalService, FineTunedModel,
    StaticTable, TranslationJob, Translator,
};
use radsum_core::workspace::WorkspaceConfig;
use radsum_core::{Corpus, CorpusDescriptor, SplitSpec};
use serde::Deserialize;

use crate::args::*;
use crate::error::CliError;

pub struct Context {
    pub workspace: PathBuf,
    pub seed: u64,
}

impl Context {
    fn workspace(&self) -> Result<WorkspaceConfig, CliError> {
        Ok(WorkspaceConfig::open(&self.workspace)?)
    }
}

fn split_spec(args: &SplitSpecArgs, seed: u64) -> Result<SplitSpec, CliError> {
    match (args.splits, args.counts) {
        (Some([t, v, s]), None) => Ok(SplitSpec::ratios(t, v, s, seed)?),
        (None, Some([t, v, s])) => Ok(SplitSpec::counts(t, v, s, seed)),
        _ => Err(CliError::usage("give exactly one of --splits or --counts")),
    }
}

/// Reads env var `var`, failing with the variable's name but never its value.
fn secret(var: &str) -> Result<String, CliError> {
    std::env::var(var).map_err(|_| CliError::new("MissingCredential", format!("environment variable `{var}` is not set")))
}

pub fn run(ctx: &Context, command: Command) -> Result<(), CliError> {
    match command {
        Command::Corpus(c) => corpus(ctx, c),
        Command::Translate(a) => translate(ctx, a),
        Command::Train(a) => train(ctx, a),
        Command::Summarize(a) => summarize(ctx, a),
        Command::Eval(EvalCommand::Rouge(a)) => rouge(a),
        Command::Serve(ServeCommand::EvalApi(a)) => serve(ctx, a),
    }
}

#[derive(Deserialize)]
struct RawReport {
    id: String,
    text: String,
}

fn raw_reports(input: &Path) -> Result<Vec<(String, String)>, CliError> {
    if input.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(input)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        files.sort();
        return files
            .into_iter()
            .map(|p| {
                let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                Ok((id, fs::read_to_string(&p)?))
            })
            .collect();
    }
    let mut out = Vec::new();
    for (i, line) in BufReader::new(fs::File::open(input)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: RawReport = serde_json::from_str(&line)
            .map_err(|e| CliError::new("SchemaError", format!("{}: line {}: {e}", input.display(), i + 1)))?;
        out.push((r.id, r.text));
    }
    Ok(out)
}

fn corpus(ctx: &Context, command: CorpusCommand) -> Result<(), CliError> {
    match command {
        CorpusCommand::Parse(a) => {
            let markers = match &a.markers {
                Some(p) => MarkerTable::from_json(&fs::read_to_string(p)?)
                    .map_err(|e| CliError::new("SchemaError", format!("{}: {e}", p.display())))?,
                None => MarkerTable::default(),
            };
            let mut reports = Vec::new();
            let mut skipped = 0usize;
            for (id, raw) in raw_reports(&a.input)? {
                match parse_report(&id, &a.name, &raw, a.lang, &markers) {
                    Ok(r) => reports.push(r),
                    Err(e) if !a.strict => {
                        log::warn!("skipping {id}: {}: {e}", e.class());
                        skipped += 1;
                    }
                    Err(e) => return Err(CliError::new(e.class(), format!("{id}: {e}"))),
                }
            }
            let corpus = Corpus::new(CorpusDescriptor::new(a.name, a.lang), reports)?;
            save_corpus(&corpus, &a.out)?;
            eprintln!("parsed {} reports, skipped {skipped}", corpus.len());
        }
        CorpusCommand::Balance(a) => {
            let input = load_corpus(&a.input)?;
            let out = balance_corpus(&input, a.cap, ctx.seed)?;
            save_corpus(&out, &a.out)?;
            eprintln!("kept {} of {} reports", out.len(), input.len());
        }
        CorpusCommand::Split(a) => {
            let out = split_corpus(&load_corpus(&a.input)?, &split_spec(&a.spec, ctx.seed)?)?;
            save_corpus(&out, &a.out)?;
            let c = out.split_counts();
            eprintln!("train {} validation {} test {}", c.train, c.validation, c.test);
        }
        CorpusCommand::Mix(a) => {
            let corpora = a.inputs.iter().map(|p| load_corpus(p)).collect::<Result<Vec<_>, _>>()?;
            let out = mix_multilingual(&corpora, a.per_language, &split_spec(&a.spec, ctx.seed)?, ctx.seed)?;
            save_corpus(&out, &a.out)?;
            eprintln!("mixed {} reports ({})", out.len(), out.descriptor());
        }
    }
    Ok(())
}

fn translate(ctx: &Context, a: TranslateArgs) -> Result<(), CliError> {
    let source = load_corpus(&a.input)?;
    let (kind, backend): (BackendKind, Box<dyn Translator>) = match a.backend {
        TranslateBackend::Table => {
            let path = a.table.as_ref().ok_or_else(|| CliError::usage("--backend table needs --table"))?;
            (BackendKind::StaticTable, Box::new(StaticTable::load(path, a.from, a.to)?))
        }
        TranslateBackend::External => {
            let url = a.url.as_deref().ok_or_else(|| CliError::usage("--backend external needs --url"))?;
            let key = a.api_key_env.as_deref().map(secret).transpose()?;
            (BackendKind::ExternalService, Box::new(ExternalService::new(url, key, a.rps, Duration::from_secs(60))))
        }
        TranslateBackend::Model => {
            let id = a.model.as_deref().ok_or_else(|| CliError::usage("--backend model needs --model"))?;
            let ckpt = Checkpoint::load(&ctx.workspace()?, id)?;
            (BackendKind::FineTunedModel, Box::new(FineTunedModel::new(ckpt)))
        }
    };
    let job = TranslationJob::new(source.descriptor().clone(), a.from, a.to, kind, a.fields.clone())?;
    let mut progress = a.out.clone().into_os_string();
    progress.push(".progress.jsonl");
    let progress = PathBuf::from(progress);
    let opts = CorpusOptions { workers: a.workers.max(1), checkpoint: Some(progress.clone()), resume: a.resume };
    let translated = translate_corpus(&source, &job, backend.as_ref(), &opts)?;
    save_corpus(&translated, &a.out)?;
    if let Some(pairs) = &a.pairs {
        write_pairs(pairs, &parallel_pairs(&source, &translated, &a.fields))?;
    }
    fs::remove_file(&progress).or_else(|e| if e.kind() == std::io::ErrorKind::NotFound { Ok(()) } else { Err(e) })?;
    eprintln!("translated {} reports {} -> {}", translated.len(), a.from, a.to);
    Ok(())
}

fn train(ctx: &Context, a: TrainArgs) -> Result<(), CliError> {
    let ws = ctx.workspace()?;
    let mut config = PipelineConfig::load(&a.config)?;
    // Dataset paths in the config are workspace-relative.
    config.base_dir = ws.root().to_path_buf();
    let diags = validate_config(&config);
    if let Some(first) = diags.first() {
        for d in &diags {
            eprintln!("{d}");
        }
        return Err(CliError::new(first.class(), format!("{} problem(s) in {}", diags.len(), a.config.display())));
    }
    if a.check {
        println!("ok: {} stages", config.stages.len());
        return Ok(());
    }
    let null = NullBackend::new();
    let backend: Box<dyn TrainerBackend> = match a.backend {
        TrainBackend::Null => Box::new(null.clone()),
        TrainBackend::Toy => Box::new(ToyBackend::new()),
        TrainBackend::Full => {
            let cmd = match a.trainer.clone() {
                Some(c) => c,
                None => std::env::var("RADSUM_TRAINER")
                    .map_err(|_| CliError::usage("--backend full needs --trainer or $RADSUM_TRAINER"))?,
            };
            Box::new(ExternalBackend::new(cmd.split_whitespace().map(String::from).collect()))
        }
    };
    let opts = RunOptions { recursive: a.recursive, seed: ctx.seed };
    let reports = match &a.stage {
        Some(id) => run_stage(&config, id, backend.as_ref(), &ws, opts)?,
        None => run_all(&config, backend.as_ref(), &ws, opts)?,
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for r in &reports {
        let line = serde_json::json!({
            "stage_id": r.stage_id,
            "outcome": r.outcome,
            "epochs": r.epochs.len(),
            "content_hash": r.content_hash,
        });
        writeln!(out, "{line}")?;
    }
    if let Some(path) = &a.invocations_out {
        let text = serde_json::to_vec_pretty(&null.invocations()).expect("invocations serialize");
        fs::write(path, text)?;
    }
    Ok(())
}

fn summarize(ctx: &Context, a: SummarizeArgs) -> Result<(), CliError> {
    let ws = ctx.workspace()?;
    let ckpt = Checkpoint::load(&ws, &a.checkpoint)?;
    let corpus = load_corpus(&a.input)?;
    let reports: Vec<_> = corpus.entries().filter(|(_, s)| a.split.is_none_or(|want| *s == want)).map(|(r, _)| r).collect();
    let requests: Vec<GenerationRequest> = reports
        .iter()
        .map(|r| GenerationRequest::new(r.findings.clone(), r.language).with_max_new_tokens(a.max_new_tokens))
        .collect();
    let mut predictions = Vec::new();
    let mut first_error = None;
    for (r, out) in reports.iter().zip(ckpt.summarize_batch(&requests)) {
        match out {
            Ok(generated) => predictions.push(Prediction { id: r.id.clone(), generated, reference: r.impression.clone() }),
            Err(e) => {
                eprintln!("{}: {}: {e}", r.id, e.class());
                first_error.get_or_insert(e);
            }
        }
    }
    write_predictions(&a.out, &predictions)?;

    if let Some(provider) = a.baseline {
        let provider: Box<dyn ChatProvider> = match provider {
            BaselineProvider::Echo => Box::new(EchoProvider),
            BaselineProvider::Openai => Box::new(OpenAiCompatible::new(
                &a.baseline_url,
                &a.baseline_model,
                Some(secret(&a.baseline_key_env)?),
                Duration::from_secs(60),
            )),
        };
        let mut client = BaselineClient::new(provider);
        client.spend_cap_tokens = a.spend_cap_tokens;
        let done: Vec<_> = reports.iter().filter(|r| predictions.iter().any(|p| p.id == r.id)).collect();
        let items: Vec<_> = done.iter().map(|r| (r.findings.clone(), r.language)).collect();
        let baseline = client.summarize_many(&items);
        let mut rows_in = Vec::new();
        for ((r, p), b) in done.iter().zip(&predictions).zip(&baseline) {
            match b {
                Ok(rec) => rows_in.push((r, p, rec.response.as_str())),
                Err(e) => eprintln!("{}: baseline {}: {e}", r.id, e.class()),
            }
        }
        let rows = comparison_report(
            rows_in.iter().map(|(r, p, b)| (r.id.as_str(), r.findings.as_str(), r.impression.as_str(), *b, p.generated.as_str())),
        );
        let path = a.comparison_out.clone().unwrap_or_else(|| {
            let mut p = a.out.clone().into_os_string();
            p.push(".comparison.jsonl");
            p.into()
        });
        let mut w = BufWriter::new(fs::File::create(&path)?);
        for row in &rows {
            serde_json::to_writer(&mut w, row).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        let not_shorter = rows.iter().filter(|r| r.baseline_not_shorter()).count();
        eprintln!("baseline at least as long as the model on {not_shorter} of {} items", rows.len());
        if let Some(Err(e)) = baseline.into_iter().find(Result::is_err) {
            first_error.get_or_insert(radsum_core::summarize::SummarizeError::Generation(format!("baseline: {e}")));
        }
    }
    eprintln!("wrote {} predictions", predictions.len());
    match first_error {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn rouge(a: RougeArgs) -> Result<(), CliError> {
    let label = a
        .label
        .clone()
        .unwrap_or_else(|| a.pred.file_stem().unwrap_or_default().to_string_lossy().into_owned());
    let report = evaluate_model(&a.pred, a.lang, &label, &a.corpus)?;
    let text = serde_json::to_vec_pretty(&report).expect("report serializes");
    fs::write(&a.out, text)?;
    println!("{}", report.table_row());
    Ok(())
}

fn serve(ctx: &Context, a: EvalApiArgs) -> Result<(), CliError> {
    let ws = ctx.workspace()?;
    let dir = a.dir.clone().unwrap_or_else(|| ws.eval_dir());
    let state = ApiState::new(EvalService::open(&dir)?, Some(ws));
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(radsum_core::human_eval::serve(a.addr, state))?;
    Ok(())
}
