use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use groundkit_core::bench::{
    curate as curate_tasks, run_task, score_run, Candidate, QualityFilter, RunError, RunSettings, Split,
};
use groundkit_core::dialogue::LabeledDialogue;
use groundkit_core::forecast::{forecast_items, ForecastMode};
use groundkit_core::stats::IntervalMethod;

use super::forecast::Forecaster;
use super::{emit, finish, Context};
use crate::cli::{CliError, CliResult, CurateArgs, GlobalArgs, InterventionArg, RunArgs, ScoreArgs};
use crate::formats::annotations::read_annotations;
use crate::formats::bench::{read_outcomes, read_tasks, write_tasks, OutcomeRecord, ScoreReport};
use crate::formats::dialogues::read_dialogues;
use crate::formats::forecast::LogitsTable;
use crate::formats::write_jsonl;
use crate::gateway::Gateway;

fn split_spec(spec: &str) -> CliResult<(Split, PathBuf)> {
    match spec.split_once('=') {
        Some((split, path)) => {
            let split = split.parse().map_err(|_| CliError::Usage(format!("--logits: unknown split {split:?}")))?;
            Ok((split, PathBuf::from(path)))
        }
        None => Ok((Split::Test, PathBuf::from(spec))),
    }
}

fn read_blocklist(path: &Path) -> CliResult<BTreeSet<String>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("cannot read blocklist {}: {e}", path.display()))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(String::from).collect())
}

pub fn curate(g: &GlobalArgs, a: &CurateArgs) -> CliResult {
    let ctx = Context::load(g, None)?;
    let dialogues = read_dialogues(&a.dialogues)?;
    let labeled = LabeledDialogue::group(&read_annotations(&a.acts)?);
    let items: BTreeMap<String, _> = forecast_items(&dialogues, &labeled, ForecastMode::InitialPrompt)
        .into_iter()
        .map(|i| (i.task_id.clone(), i))
        .collect();

    let mut inputs: Vec<PathBuf> = vec![a.dialogues.clone(), a.acts.clone()];
    let mut candidates = Vec::new();
    for spec in &a.logits {
        let (split, path) = split_spec(spec)?;
        let table = LogitsTable::read(&path)?;
        for (task_id, scores) in &table.scores {
            let Some(item) = items.get(task_id) else {
                log::warn!("{}: task {task_id} has logits but no labeled dialogue", path.display());
                continue;
            };
            let forecast = groundkit_core::forecast::ForecastDistribution::from_map::<std::convert::Infallible>(scores)
                .map_err(|e| CliError::Validation(anyhow::anyhow!("{}: {task_id}: {e}", path.display())))?;
            candidates.push(Candidate {
                task_id: task_id.clone(),
                prompt: item.prompt.clone(),
                dialogue_id: task_id.clone(),
                gold: item.gold,
                split,
                forecast,
            });
        }
        inputs.push(path);
    }

    let mut filter = QualityFilter::default();
    if let Some(p) = a.blocklist.as_ref().or(ctx.config.bench.blocklist.as_ref()) {
        filter.blocklist = read_blocklist(p)?;
        inputs.push(p.clone());
    }
    let gateway = if a.moderate || ctx.config.bench.moderation { Some(ctx.gateway()?) } else { None };
    let curation =
        curate_tasks(&candidates, a.k, &filter, gateway.as_ref()).map_err(|e| CliError::Validation(e.into()))?;

    for s in &curation.shortfalls {
        eprintln!("shortfall: {} {} has {} of {} requested", s.split, s.label, s.selected, s.requested);
    }
    for (id, why) in &curation.quality.dropped {
        eprintln!("dropped {id}: {why}");
    }
    for w in &curation.quality.warnings {
        log::warn!("{w}");
    }
    let mut counts: BTreeMap<(Split, _), usize> = BTreeMap::new();
    for t in &curation.tasks {
        *counts.entry((t.split, t.gold)).or_default() += 1;
    }
    for ((split, label), n) in &counts {
        eprintln!("{split} {label}: {n}");
    }
    write_tasks(&a.out, &curation.tasks)?;
    let inputs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    finish(&ctx, "bench curate", &inputs, &[&a.out])
}

pub fn run(g: &GlobalArgs, a: &RunArgs) -> CliResult {
    let ctx = Context::load(g, None)?;
    let tasks = read_tasks(&a.tasks)?;
    let labeler = ctx.config.labeler.to_spec()?;
    let templates = match a.intervention {
        InterventionArg::Ground => {
            let t = ctx.config.intervention.templates();
            t.validate().map_err(|e| CliError::Validation(e.into()))?;
            Some(t)
        }
        InterventionArg::None => None,
    };
    let mut inputs = vec![a.tasks.clone()];
    let predictions = match (&templates, &a.forecaster) {
        (None, _) => vec![None; tasks.len()],
        (Some(_), None) => return Err(CliError::Usage("--intervention ground needs --forecaster".into())),
        (Some(_), Some(spec)) => {
            let (forecaster, path) = Forecaster::open(&ctx, spec)?;
            inputs.extend(path);
            tasks
                .iter()
                .map(|t| forecaster.distribution(&t.task_id, &t.prompt).map(|d| Some(d.argmax())))
                .collect::<CliResult<Vec<_>>>()?
        }
    };
    let settings = RunSettings {
        model: a.model.clone(),
        temperature: ctx.config.bench.temperature,
        max_output_tokens: ctx.config.bench.max_output_tokens,
        labeler,
        templates,
    };
    let gateway: Gateway = ctx.gateway()?;
    let results: Vec<_> = ctx
        .pool()?
        .install(|| tasks.par_iter().zip(&predictions).map(|(t, p)| run_task(t, *p, &settings, &gateway)).collect());

    let mut records = Vec::new();
    let mut unlabeled = 0;
    let mut failures = Vec::new();
    for (task, r) in tasks.iter().zip(results) {
        match r {
            Ok(run) => records.push(OutcomeRecord::from_run(&run)),
            Err(RunError::Unlabeled(id)) => {
                log::warn!("{id}: response could not be labeled; excluded");
                unlabeled += 1;
            }
            Err(e) => failures.push(format!("{}: {e}", task.task_id)),
        }
    }
    write_jsonl(&a.out, &records)?;
    eprintln!("scored {} of {} tasks ({} unlabeled, {} failed)", records.len(), tasks.len(), unlabeled, failures.len());
    let inputs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    finish(&ctx, "bench run", &inputs, &[&a.out])?;
    if let Some(first) = failures.first() {
        return Err(CliError::env(anyhow::anyhow!("{} tasks failed; first: {first}", failures.len())));
    }
    Ok(())
}

pub fn score(g: &GlobalArgs, a: &ScoreArgs) -> CliResult {
    let ctx = Context::load(g, None)?;
    let outcomes = read_outcomes(&a.input)?;
    let method = if a.wilson { IntervalMethod::Wilson } else { IntervalMethod::Wald };
    let s = score_run(&outcomes, method).map_err(|e| CliError::Validation(e.into()))?;
    let report = ScoreReport::from_score(&s);
    if let Some(out) = emit(&a.report, &report.to_text(), &report)? {
        finish(&ctx, "bench score", &[&a.input], &[&out])?;
    }
    Ok(())
}
