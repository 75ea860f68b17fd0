use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use groundkit_core::dialogue::LabeledDialogue;
use groundkit_core::forecast::{
    build_training_sequences, evaluate_forecasts, forecast, forecast_items, subsample_balanced, ForecastBackend,
    ForecastDistribution, ForecastItem, ForecastLabel, ForecastMode, PerClass,
};

use super::{emit, finish, Context};
use crate::cli::{BuildDataArgs, CliError, CliResult, ForecastEvalArgs, GlobalArgs, ModeArg};
use crate::formats::annotations::read_annotations;
use crate::formats::dialogues::read_dialogues;
use crate::formats::forecast::{write_sequences, LogitsTable, PromptRecord};
use crate::formats::write_jsonl;
use crate::gateway::{Gateway, RemoteForecaster};

pub(crate) fn mode(m: ModeArg) -> ForecastMode {
    match m {
        ModeArg::Initial => ForecastMode::InitialPrompt,
        ModeArg::Prefix => ForecastMode::Prefixes,
    }
}

pub fn build_data(g: &GlobalArgs, a: &BuildDataArgs) -> CliResult {
    let ctx = Context::load(g, None)?;
    if a.lambda.is_nan() || a.lambda < 1.0 {
        return Err(CliError::Usage(format!("--lambda must be at least 1, got {}", a.lambda)));
    }
    let dialogues = read_dialogues(&a.dialogues)?;
    let labeled = LabeledDialogue::group(&read_annotations(&a.acts)?);
    let built = build_training_sequences(&dialogues, &labeled, a.lambda);
    for (id, turn) in &built.truncated {
        log::warn!("{id}: sequence cut before turn {turn}, whose label could not be derived");
    }
    let sequences = match a.balance.as_deref() {
        None => built.sequences,
        Some(spec) => {
            let per_class = if spec == "max" {
                PerClass::Max
            } else {
                PerClass::Count(
                    spec.parse()
                        .map_err(|_| CliError::Usage(format!("--balance: expected a count or max, got {spec:?}")))?,
                )
            };
            subsample_balanced(&built.sequences, per_class, g.seed).map_err(|e| CliError::Validation(e.into()))?
        }
    };
    write_sequences(&a.out, &sequences)?;
    let mut outputs = vec![a.out.as_path()];
    if let Some(p) = &a.prompts {
        let items = forecast_items(&dialogues, &labeled, mode(a.mode));
        let records: Vec<PromptRecord> = items.iter().map(PromptRecord::from_item).collect();
        write_jsonl(p, &records)?;
        outputs.push(p);
    }
    eprintln!(
        "wrote {} sequences ({} truncated, {} unannotated dialogues)",
        sequences.len(),
        built.truncated.len(),
        built.unannotated.len()
    );
    finish(&ctx, "forecast build-data", &[&a.dialogues, &a.acts], &outputs)
}

/// A logits file or the gateway's score endpoint.
pub(crate) enum Forecaster {
    File(LogitsTable),
    Remote(Box<Gateway>),
}

impl Forecaster {
    pub fn open(ctx: &Context<'_>, spec: &str) -> CliResult<(Forecaster, Option<std::path::PathBuf>)> {
        if spec == "gateway" {
            return Ok((Forecaster::Remote(Box::new(ctx.gateway()?)), None));
        }
        let path = Path::new(spec);
        Ok((Forecaster::File(LogitsTable::read(path)?), Some(path.to_path_buf())))
    }

    pub fn distribution(&self, item_id: &str, prompt: &str) -> CliResult<ForecastDistribution> {
        fn run<B: ForecastBackend>(b: &B, id: &str, prompt: &str) -> Result<ForecastDistribution, String> {
            forecast(id, prompt, b).map_err(|e| e.to_string())
        }
        match self {
            Forecaster::File(t) => run(t, item_id, prompt).map_err(|e| CliError::Validation(anyhow::anyhow!(e))),
            Forecaster::Remote(g) => {
                run(&RemoteForecaster(g), item_id, prompt).map_err(|e| CliError::env(anyhow::anyhow!(e)))
            }
        }
    }
}

#[derive(Serialize)]
struct EvalReport {
    items: usize,
    missing: usize,
    per_label_auroc: BTreeMap<String, f64>,
    degenerate: Vec<String>,
    macro_auroc: f64,
    accuracy: f64,
}

pub fn eval(g: &GlobalArgs, a: &ForecastEvalArgs) -> CliResult {
    let ctx = Context::load(g, None)?;
    let dialogues = read_dialogues(&a.dialogues)?;
    let labeled = LabeledDialogue::group(&read_annotations(&a.acts)?);
    let items: Vec<ForecastItem> = forecast_items(&dialogues, &labeled, mode(a.mode));
    let (forecaster, logits_path) = Forecaster::open(&ctx, &a.logits)?;

    let mut predictions = Vec::with_capacity(items.len());
    let mut missing = 0;
    for item in &items {
        match (&forecaster, forecaster.distribution(&item.task_id, &item.prompt)) {
            (_, Ok(d)) => predictions.push((d, item.gold)),
            // Tasks absent from a logits file are skipped, not fatal.
            (Forecaster::File(t), Err(_)) if !t.scores.contains_key(&item.task_id) => missing += 1,
            (_, Err(e)) => return Err(e),
        }
    }
    if missing > 0 {
        log::warn!("{missing} items have no logits and were skipped");
    }
    let auroc = evaluate_forecasts(&predictions).map_err(|e| CliError::Validation(e.into()))?;
    let correct = predictions.iter().filter(|(d, gold)| d.argmax() == *gold).count();
    let report = EvalReport {
        items: predictions.len(),
        missing,
        per_label_auroc: auroc
            .per_label
            .iter()
            .map(|(l, v): (&ForecastLabel, &f64)| (l.as_str().to_string(), *v))
            .collect(),
        degenerate: auroc.degenerate.iter().map(|l| l.as_str().to_string()).collect(),
        macro_auroc: auroc.macro_auroc,
        accuracy: correct as f64 / predictions.len().max(1) as f64,
    };
    let mut text = format!("items {} (skipped {})\n", report.items, report.missing);
    for (l, v) in &report.per_label_auroc {
        let _ = writeln!(text, "auroc {l:<10} {v:.4}");
    }
    for l in &report.degenerate {
        let _ = writeln!(text, "auroc {l:<10} undefined (single class)");
    }
    let _ = writeln!(text, "macro auroc {:.4}\nargmax accuracy {:.4}", report.macro_auroc, report.accuracy);
    if let Some(out) = emit(&a.report, &text, &report)? {
        let mut inputs = vec![a.dialogues.as_path(), a.acts.as_path()];
        inputs.extend(logits_path.as_deref());
        finish(&ctx, "forecast eval", &inputs, &[&out])?;
    }
    Ok(())
}
