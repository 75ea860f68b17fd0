use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use groundkit_core::analysis::{
    act_rates, conditional_chain, count_tokens, detect_restarts, fightin_words, ChainOptions, ChainScope,
    EquivalenceJudge, ExclusionReason, LexiconConfig, NormalizedExactMatch, PriorKind, RateKey, RateOptions,
    RestartOptions, RestartReport,
};
use groundkit_core::dialogue::{GroundingAct, GroundingCategory, LabeledDialogue, Speaker};
use groundkit_core::forecast::ForecastLabel;
use groundkit_core::metrics::{aggregate_majority, agreement_report, macro_f1};

use super::{emit, finish, Context};
use crate::cli::{
    AgreementArgs, AnalyzeCommand, ChainArgs, CliError, CliResult, GlobalArgs, JudgeKind, LexiconArgs, PriorArg,
    RatesArgs, RestartArgs,
};
use crate::formats::annotations::read_annotations;
use crate::formats::bench::read_tasks;
use crate::formats::dialogues::read_dialogues;
use crate::judge::LlmJudge;

pub fn run(g: &GlobalArgs, c: &AnalyzeCommand) -> CliResult {
    let ctx = Context::load(g, None)?;
    let (name, inputs, out) = match c {
        AnalyzeCommand::Rates(a) => ("analyze rates", vec![a.input.as_path()], rates(a)?),
        AnalyzeCommand::Chain(a) => ("analyze chain", vec![a.input.as_path()], chain(a)?),
        AnalyzeCommand::Restarts(a) => ("analyze restarts", vec![a.input.as_path()], restarts(&ctx, a)?),
        AnalyzeCommand::Lexicon(a) => {
            let mut inputs = vec![a.input.as_path()];
            inputs.extend(a.background.as_deref());
            ("analyze lexicon", inputs, lexicon(a)?)
        }
        AnalyzeCommand::Agreement(a) => {
            let mut inputs: Vec<&Path> = a.inputs.iter().map(|p| p.as_path()).collect();
            inputs.extend(a.gold.as_deref());
            ("analyze agreement", inputs, agreement(a)?)
        }
    };
    match out {
        Some(path) => finish(&ctx, name, &inputs, &[&path]),
        None => Ok(()),
    }
}

fn labeled(path: &Path) -> CliResult<Vec<LabeledDialogue>> {
    Ok(LabeledDialogue::group(&read_annotations(path)?))
}

#[derive(Serialize)]
struct RateRow {
    speaker: String,
    key: String,
    numerator: usize,
    denominator: usize,
    rate: f64,
}

#[derive(Serialize)]
struct RatesReport {
    rows: Vec<RateRow>,
    unlabeled: BTreeMap<String, usize>,
    /// User rate over assistant rate, per act.
    user_over_assistant: BTreeMap<String, Option<f64>>,
}

fn rates(a: &RatesArgs) -> CliResult<Option<std::path::PathBuf>> {
    let corpus = labeled(&a.input)?;
    let table = act_rates(&corpus, &RateOptions { count_instruction_turns: !a.exclude_instruction });
    let report = RatesReport {
        rows: table
            .rows
            .iter()
            .map(|(&(speaker, key), r)| RateRow {
                speaker: speaker.as_str().into(),
                key: key.to_string(),
                numerator: r.numerator,
                denominator: r.denominator,
                rate: r.proportion(),
            })
            .collect(),
        unlabeled: table.unlabeled.iter().map(|(s, n)| (s.as_str().to_string(), *n)).collect(),
        user_over_assistant: [GroundingAct::FollowUp, GroundingAct::Clarify, GroundingAct::Acknowledge]
            .into_iter()
            .map(|act| {
                let key = RateKey::Act(act);
                (act.as_str().to_string(), table.ratio((Speaker::User, key), (Speaker::Assistant, key)))
            })
            .collect(),
    };
    let mut text = String::new();
    let _ = writeln!(text, "{:<10} {:<24} {:>12} {:>8}", "speaker", "key", "count", "%");
    for r in &report.rows {
        let frac = format!("{}/{}", r.numerator, r.denominator);
        let _ = writeln!(text, "{:<10} {:<24} {:>12} {:>8.2}", r.speaker, r.key, frac, 100.0 * r.rate);
    }
    for (act, ratio) in &report.user_over_assistant {
        let shown = ratio.map_or("n/a".to_string(), |x| format!("{x:.2}"));
        let _ = writeln!(text, "user/assistant {act}: {shown}");
    }
    emit(&a.report, &text, &report)
}

#[derive(Serialize)]
struct ChainReport {
    category: String,
    probs: Vec<f64>,
    numerators: Vec<usize>,
    support: Vec<usize>,
    truncated_at: Option<usize>,
}

fn chain(a: &ChainArgs) -> CliResult<Option<std::path::PathBuf>> {
    let category: GroundingCategory = a.category.parse().map_err(|e| CliError::Usage(format!("--category: {e}")))?;
    let corpus = labeled(&a.input)?;
    let opts = ChainOptions {
        scope: if a.all_turns { ChainScope::AllTurns } else { ChainScope::UserTurns },
        skip_instruction: !a.keep_instruction,
    };
    let est = conditional_chain(&corpus, category, a.n, &opts).map_err(|e| CliError::Usage(e.to_string()))?;
    let report = ChainReport {
        category: category.as_str().into(),
        probs: est.probs,
        numerators: est.numerators,
        support: est.support,
        truncated_at: est.truncated_at,
    };
    let mut text = format!("{:<6} {:>10} {:>12}\n", "k", "p", "count");
    for k in 0..report.probs.len() {
        let frac = format!("{}/{}", report.numerators[k], report.support[k]);
        let _ = writeln!(text, "{:<6} {:>10.4} {:>12}", k, report.probs[k], frac);
    }
    if let Some(k) = report.truncated_at {
        let _ = writeln!(text, "no dialogues reach level {k}");
    }
    emit(&a.report, &text, &report)
}

#[derive(Serialize)]
struct RestartPair {
    dialogue_id: String,
    restarts: String,
}

#[derive(Serialize)]
struct RestartsReport {
    sessions: usize,
    restarts: usize,
    eligible: usize,
    multi_session: usize,
    rate_eligible: Option<f64>,
    rate_multi_session: Option<f64>,
    rate_all: Option<f64>,
    pairs: Vec<RestartPair>,
    excluded: BTreeMap<String, String>,
    judge_failures: usize,
}

fn restart_report(r: &RestartReport) -> RestartsReport {
    RestartsReport {
        sessions: r.sessions.len(),
        restarts: r.restarts(),
        eligible: r.eligible(),
        multi_session: r.multi_session(),
        rate_eligible: r.rate_eligible(),
        rate_multi_session: r.rate_multi_session(),
        rate_all: r.rate_all(),
        pairs: r
            .sessions
            .iter()
            .filter_map(|s| {
                s.restarts.as_ref().map(|p| RestartPair { dialogue_id: s.dialogue_id.clone(), restarts: p.clone() })
            })
            .collect(),
        excluded: r
            .excluded
            .iter()
            .map(|(id, why)| {
                let why = match why {
                    ExclusionReason::MissingUserId => "missing-user-id",
                    ExclusionReason::MissingTimestamp => "missing-timestamp",
                    ExclusionReason::NoUserTurn => "no-user-turn",
                };
                (id.clone(), why.to_string())
            })
            .collect(),
        judge_failures: r.judge_failures.len(),
    }
}

fn restarts(ctx: &Context<'_>, a: &RestartArgs) -> CliResult<Option<std::path::PathBuf>> {
    if a.window_mins < 0 {
        return Err(CliError::Usage("--window-mins must be non-negative".into()));
    }
    let dialogues = read_dialogues(&a.input)?;
    let opts = RestartOptions { window_secs: a.window_mins * 60 };
    let report = match a.judge {
        JudgeKind::Exact => detect_restarts(&dialogues, &NormalizedExactMatch, &opts),
        JudgeKind::Llm => {
            let judge = LlmJudge { completer: ctx.gateway()?, model: ctx.config.labeler.model.clone() };
            let r = detect_restarts(&dialogues, &judge as &dyn EquivalenceJudge, &opts);
            if let Some((_, _, e)) = r.judge_failures.first() {
                return Err(CliError::env(anyhow::anyhow!(
                    "{} judge calls failed; first: {e}",
                    r.judge_failures.len()
                )));
            }
            r
        }
    };
    let report = restart_report(&report);
    let pct = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{:.2}%", 100.0 * v));
    let text = format!(
        "sessions {}\nrestarts {}\nrate over eligible sessions ({}): {}\nrate over multi-session users' sessions ({}): {}\nrate over all sessions ({}): {}\nexcluded {}\n",
        report.sessions,
        report.restarts,
        report.eligible,
        pct(report.rate_eligible),
        report.multi_session,
        pct(report.rate_multi_session),
        report.sessions,
        pct(report.rate_all),
        report.excluded.len()
    );
    emit(&a.report, &text, &report)
}

#[derive(Serialize)]
struct WordRow {
    word: String,
    count_label: u64,
    count_background: u64,
    delta: f64,
    z: f64,
}

#[derive(Serialize)]
struct LexiconReport {
    label: String,
    documents_label: usize,
    documents_background: usize,
    words: Vec<WordRow>,
}

fn lexicon(a: &LexiconArgs) -> CliResult<Option<std::path::PathBuf>> {
    let label: ForecastLabel = a.label.parse().map_err(|e| CliError::Usage(format!("--label: {e}")))?;
    let tasks = read_tasks(&a.input)?;
    let chosen: Vec<&str> = tasks.iter().filter(|t| t.gold == label).map(|t| t.prompt.as_str()).collect();
    let background_dialogues;
    let background: Vec<&str> = match &a.background {
        Some(p) => {
            background_dialogues = read_dialogues(p)?;
            background_dialogues.iter().filter_map(|d| d.first_user_turn()).map(|t| t.text.as_str()).collect()
        }
        None => tasks.iter().map(|t| t.prompt.as_str()).collect(),
    };
    let cfg = LexiconConfig {
        prior_strength: a.alpha0,
        prior: match a.prior {
            PriorArg::Uniform => PriorKind::Uniform,
            PriorArg::Pooled => PriorKind::Pooled,
        },
        min_count: a.min_count,
    };
    let scores = fightin_words(&count_tokens(chosen.iter().copied()), &count_tokens(background.iter().copied()), &cfg)
        .map_err(|e| CliError::Validation(e.into()))?;
    let report = LexiconReport {
        label: label.as_str().into(),
        documents_label: chosen.len(),
        documents_background: background.len(),
        words: scores
            .into_iter()
            .take(a.top)
            .map(|s| WordRow {
                word: s.word,
                count_label: s.count_a,
                count_background: s.count_b,
                delta: s.delta,
                z: s.z,
            })
            .collect(),
    };
    let mut text = format!("{:<20} {:>8} {:>8} {:>9} {:>8}\n", "word", label.as_str(), "rest", "delta", "z");
    for w in &report.words {
        let _ = writeln!(
            text,
            "{:<20} {:>8} {:>8} {:>9.3} {:>8.3}",
            w.word, w.count_label, w.count_background, w.delta, w.z
        );
    }
    emit(&a.report, &text, &report)
}

#[derive(Serialize)]
struct PairKappa {
    a: String,
    b: String,
    kappa: f64,
}

#[derive(Serialize)]
struct AgreementOut {
    aligned_turns: usize,
    pairwise: Vec<PairKappa>,
    mean_kappa: f64,
    ties: usize,
    consensus_macro_f1: Option<f64>,
}

type TurnKey = (String, usize);

fn acts_by_turn(path: &Path) -> CliResult<BTreeMap<TurnKey, GroundingAct>> {
    Ok(read_annotations(path)?
        .into_iter()
        .filter_map(|a| a.act().map(|act| ((a.dialogue_id().to_string(), a.turn()), act)))
        .collect())
}

fn agreement(a: &AgreementArgs) -> CliResult<Option<std::path::PathBuf>> {
    if a.inputs.len() < 2 {
        return Err(CliError::Usage("agreement needs at least two --in files".into()));
    }
    let maps: Vec<BTreeMap<TurnKey, GroundingAct>> =
        a.inputs.iter().map(|p| acts_by_turn(p)).collect::<CliResult<_>>()?;
    let shared: BTreeSet<&TurnKey> = maps[0].keys().filter(|k| maps[1..].iter().all(|m| m.contains_key(*k))).collect();
    let seqs: Vec<Vec<GroundingAct>> = maps.iter().map(|m| shared.iter().map(|k| m[*k]).collect()).collect();
    let rep = agreement_report(&seqs).map_err(|e| CliError::Validation(e.into()))?;

    let consensus_macro_f1 = match &a.gold {
        Some(g) => {
            let gold = acts_by_turn(g)?;
            let majority = aggregate_majority(&seqs).map_err(|e| CliError::Validation(e.into()))?;
            let (pred, truth): (Vec<_>, Vec<_>) =
                shared.iter().zip(&majority).filter_map(|(k, m)| Some((*m.label()?, *gold.get(*k)?))).unzip();
            Some(macro_f1(&pred, &truth).map_err(|e| CliError::Validation(e.into()))?.macro_f1)
        }
        None => None,
    };
    let name = |i: usize| a.inputs[i].display().to_string();
    let out = AgreementOut {
        aligned_turns: shared.len(),
        pairwise: rep
            .pairwise_kappas
            .iter()
            .map(|&(i, j, kappa)| PairKappa { a: name(i), b: name(j), kappa })
            .collect(),
        mean_kappa: rep.mean_kappa,
        ties: rep.tie_count,
        consensus_macro_f1,
    };
    let mut text = format!("aligned turns {}\n", out.aligned_turns);
    for p in &out.pairwise {
        let _ = writeln!(text, "kappa {} vs {}: {:.4}", p.a, p.b, p.kappa);
    }
    let _ = writeln!(text, "mean kappa {:.4}\nunresolved ties {}", out.mean_kappa, out.ties);
    if let Some(f) = out.consensus_macro_f1 {
        let _ = writeln!(text, "consensus macro-F1 {f:.4}");
    }
    emit(&a.report, &text, &out)
}
