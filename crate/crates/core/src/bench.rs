//! Benchmark curation and scoring.
//!
//! Candidates are first-turn prompts with a gold next-turn label and a
//! forecaster distribution. Curation keeps the forecaster's confident, correct
//! predictions; scoring labels an assistant's first reply and checks it
//! against the grounding behavior the gold label calls for.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::analysis::NormalizedExactMatch;
use crate::annotate::{annotate_turn, AnnotateError, Completer, LabelerSpec};
use crate::dialogue::{normalize_name, Annotation, Dialogue, GroundingAct, Source, Speaker, UnknownName};
use crate::forecast::{ForecastDistribution, ForecastLabel};
use crate::intervene::{apply, route, AugmentationKind, InterventionTemplates, PromptAugmentation};
use crate::stats::{proportion_interval, Interval, IntervalMethod};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match normalize_name(s).as_str() {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" | "dev" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(UnknownName(s.into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub dialogue_id: String,
    /// Raw forecaster score of the gold label.
    pub forecaster_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchTask {
    pub task_id: String,
    /// First user turn of the source dialogue.
    pub prompt: String,
    pub gold: ForecastLabel,
    pub split: Split,
    pub provenance: Provenance,
}

/// A prompt eligible for curation.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub task_id: String,
    pub prompt: String,
    pub dialogue_id: String,
    pub gold: ForecastLabel,
    pub split: Split,
    pub forecast: ForecastDistribution,
}

/// Fewer tasks than requested survived for one `(split, label)` cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shortfall {
    pub split: Split,
    pub label: ForecastLabel,
    pub requested: usize,
    pub selected: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DropReason {
    /// Matched the named deny rule.
    DenyRule(String),
    Moderation,
    Blocklist,
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DropReason::DenyRule(name) => write!(f, "deny rule {name}"),
            DropReason::Moderation => f.write_str("flagged by moderation"),
            DropReason::Blocklist => f.write_str("blocklisted"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct QualityReport {
    pub kept: Vec<BenchTask>,
    pub dropped: Vec<(String, DropReason)>,
    /// Kept without a moderation verdict because the moderator failed.
    pub unmoderated: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Curation {
    /// Ordered by split, gold label, descending gold score, then task id.
    pub tasks: Vec<BenchTask>,
    /// Cells that were short of `k` before quality filtering.
    pub shortfalls: Vec<Shortfall>,
    pub quality: QualityReport,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CurateError {
    #[error("task id {0} appears more than once")]
    DuplicateTask(String),
}

/// A solicitation pattern: the prompt matches when it contains any phrase in
/// `objects` and, if `verbs` is non-empty, also any phrase in `verbs`.
/// Phrases match whole words after lowercasing and dropping punctuation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenyRule {
    pub name: String,
    pub verbs: Vec<String>,
    pub objects: Vec<String>,
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

const ASKING: &[&str] = &[
    "give", "generate", "provide", "share", "send", "tell", "list", "find", "get", "leak", "show", "need", "want",
    "create", "make", "write", "produce",
];

impl DenyRule {
    pub fn defaults() -> Vec<DenyRule> {
        alloc::vec![
            DenyRule {
                name: "api-key".into(),
                verbs: strings(ASKING),
                objects: strings(&["api key", "api keys", "apikey", "openai key", "secret key", "access token"]),
            },
            DenyRule {
                name: "gift-card".into(),
                verbs: strings(ASKING),
                objects: strings(&["gift card", "gift cards", "gift card code", "redeem code", "redemption code"]),
            },
            DenyRule {
                name: "credentials".into(),
                verbs: strings(ASKING),
                objects: strings(&[
                    "password",
                    "passwords",
                    "login credentials",
                    "credentials",
                    "license key",
                    "serial key",
                    "activation key",
                    "product key",
                    "credit card number",
                    "credit card numbers",
                ]),
            },
            DenyRule {
                name: "explicit-content".into(),
                verbs: Vec::new(),
                objects: strings(&["nsfw", "porn", "pornographic", "explicit sex", "sex scene", "erotic", "smut"]),
            },
        ]
    }

    /// `text` must already be normalized with [`NormalizedExactMatch::normalize`].
    fn matches_normalized(&self, text: &str) -> bool {
        let padded = alloc::format!(" {text} ");
        let has = |phrase: &String| {
            let p = NormalizedExactMatch::normalize(phrase);
            !p.is_empty() && padded.contains(&alloc::format!(" {p} "))
        };
        self.objects.iter().any(has) && (self.verbs.is_empty() || self.verbs.iter().any(has))
    }

    pub fn matches(&self, text: &str) -> bool {
        self.matches_normalized(&NormalizedExactMatch::normalize(text))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QualityFilter {
    pub rules: Vec<DenyRule>,
    /// Task or dialogue ids excluded by hand.
    pub blocklist: BTreeSet<String>,
}

impl Default for QualityFilter {
    fn default() -> Self {
        QualityFilter { rules: DenyRule::defaults(), blocklist: BTreeSet::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("moderation unavailable: {0}")]
pub struct ModerationError(pub String);

/// External content classifier.
pub trait Moderator {
    fn flagged(&self, text: &str) -> Result<bool, ModerationError>;
}

impl<M: Moderator + ?Sized> Moderator for &M {
    fn flagged(&self, text: &str) -> Result<bool, ModerationError> {
        (**self).flagged(text)
    }
}

/// Runs blocklist, deny rules and (if given) moderation, in that order. A
/// moderator error keeps the task, marks it unmoderated and adds a warning.
pub fn quality_filter<M: Moderator + ?Sized>(
    tasks: Vec<BenchTask>,
    filter: &QualityFilter,
    moderator: Option<&M>,
) -> QualityReport {
    let mut report = QualityReport::default();
    for task in tasks {
        if filter.blocklist.contains(&task.task_id) || filter.blocklist.contains(&task.provenance.dialogue_id) {
            report.dropped.push((task.task_id, DropReason::Blocklist));
            continue;
        }
        let normalized = NormalizedExactMatch::normalize(&task.prompt);
        if let Some(rule) = filter.rules.iter().find(|r| r.matches_normalized(&normalized)) {
            report.dropped.push((task.task_id, DropReason::DenyRule(rule.name.clone())));
            continue;
        }
        if let Some(m) = moderator {
            match m.flagged(&task.prompt) {
                Ok(true) => {
                    report.dropped.push((task.task_id, DropReason::Moderation));
                    continue;
                }
                Ok(false) => {}
                Err(e) => {
                    report.warnings.push(alloc::format!("{}: {e}; kept unmoderated", task.task_id));
                    report.unmoderated.push(task.task_id.clone());
                }
            }
        }
        report.kept.push(task);
    }
    report
}

/// Per `(split, gold label)` cell: keep candidates whose forecast argmax is
/// the gold label, take the `k` with the highest raw gold score (ties by task
/// id), then apply the quality filter. The result does not depend on the
/// order of `candidates`.
pub fn curate<M: Moderator + ?Sized>(
    candidates: &[Candidate],
    k: usize,
    filter: &QualityFilter,
    moderator: Option<&M>,
) -> Result<Curation, CurateError> {
    let mut seen = BTreeSet::new();
    for c in candidates {
        if !seen.insert(c.task_id.as_str()) {
            return Err(CurateError::DuplicateTask(c.task_id.clone()));
        }
    }

    let mut cells: BTreeMap<(Split, ForecastLabel), Vec<&Candidate>> = BTreeMap::new();
    for c in candidates.iter().filter(|c| c.forecast.argmax() == c.gold) {
        cells.entry((c.split, c.gold)).or_default().push(c);
    }

    let mut curation = Curation::default();
    let mut selected = Vec::new();
    let splits: BTreeSet<Split> = candidates.iter().map(|c| c.split).collect();
    for split in splits {
        for label in ForecastLabel::ALL {
            let mut cell = cells.remove(&(split, label)).unwrap_or_default();
            cell.sort_by(|a, b| {
                b.forecast.score(label).total_cmp(&a.forecast.score(label)).then_with(|| a.task_id.cmp(&b.task_id))
            });
            if cell.len() < k {
                curation.shortfalls.push(Shortfall { split, label, requested: k, selected: cell.len() });
            }
            selected.extend(cell.into_iter().take(k).map(|c| BenchTask {
                task_id: c.task_id.clone(),
                prompt: c.prompt.clone(),
                gold: c.gold,
                split: c.split,
                provenance: Provenance {
                    dialogue_id: c.dialogue_id.clone(),
                    forecaster_score: c.forecast.score(label),
                },
            }));
        }
    }

    let mut quality = quality_filter(selected, filter, moderator);
    curation.tasks = core::mem::take(&mut quality.kept);
    curation.quality = quality;
    Ok(curation)
}

/// The scoring rule: advancing tasks call for a follow-up, addressing and
/// ambiguous tasks for a clarification, and no-action tasks for neither.
pub fn eval_case(gold: ForecastLabel, act: GroundingAct) -> bool {
    match gold {
        ForecastLabel::Advance => act == GroundingAct::FollowUp,
        ForecastLabel::Address | ForecastLabel::Ambiguous => act == GroundingAct::Clarify,
        ForecastLabel::None => !matches!(act, GroundingAct::FollowUp | GroundingAct::Clarify),
    }
}

pub fn eval_response(task: &BenchTask, response_act: GroundingAct) -> bool {
    eval_case(task.gold, response_act)
}

/// A scored assistant response. `correct` is always derived from the gold
/// label and the act.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalOutcome {
    pub task_id: String,
    pub gold: ForecastLabel,
    pub response_act: GroundingAct,
    correct: bool,
}

impl EvalOutcome {
    pub fn new(task_id: impl Into<String>, gold: ForecastLabel, response_act: GroundingAct) -> Self {
        EvalOutcome { task_id: task_id.into(), gold, response_act, correct: eval_case(gold, response_act) }
    }

    pub fn for_task(task: &BenchTask, response_act: GroundingAct) -> Self {
        EvalOutcome::new(task.task_id.clone(), task.gold, response_act)
    }

    pub fn correct(&self) -> bool {
        self.correct
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accuracy {
    pub n: usize,
    pub correct: usize,
    pub interval: Interval,
}

impl Accuracy {
    fn from_counts(n: usize, correct: usize, method: IntervalMethod) -> Accuracy {
        let p = correct as f64 / n as f64;
        Accuracy { n, correct, interval: proportion_interval(p, n, method) }
    }

    pub fn accuracy(&self) -> f64 {
        self.interval.estimate
    }

    pub fn half_width(&self) -> f64 {
        self.interval.half_width()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunScore {
    pub overall: Accuracy,
    /// Only labels with at least one outcome.
    pub per_label: BTreeMap<ForecastLabel, Accuracy>,
    pub method: IntervalMethod,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no outcomes to score")]
pub struct NoOutcomes;

pub fn score_run(outcomes: &[EvalOutcome], method: IntervalMethod) -> Result<RunScore, NoOutcomes> {
    if outcomes.is_empty() {
        return Err(NoOutcomes);
    }
    let mut cells: BTreeMap<ForecastLabel, (usize, usize)> = BTreeMap::new();
    for o in outcomes {
        let cell = cells.entry(o.gold).or_default();
        cell.0 += 1;
        cell.1 += o.correct as usize;
    }
    let correct = outcomes.iter().filter(|o| o.correct).count();
    Ok(RunScore {
        overall: Accuracy::from_counts(outcomes.len(), correct, method),
        per_label: cells.into_iter().map(|(l, (n, c))| (l, Accuracy::from_counts(n, c, method))).collect(),
        method,
    })
}

/// Settings for answering and labeling one benchmark task.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub model: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub labeler: LabelerSpec,
    /// Present when the intervention is enabled.
    pub templates: Option<InterventionTemplates>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskRun {
    pub response: String,
    pub augmentation: AugmentationKind,
    pub outcome: EvalOutcome,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RunError<E> {
    #[error("assistant call failed: {0}")]
    Assistant(E),
    #[error("labeler call failed: {0}")]
    Labeler(E),
    #[error("labeler gave no usable act for the response to {0}")]
    Unlabeled(String),
    #[error("intervention enabled but no forecast for {0}")]
    MissingForecast(String),
}

/// Generates the assistant's first reply (routed through the intervention
/// when enabled), labels it, and scores it.
pub fn run_task<C: Completer + ?Sized>(
    task: &BenchTask,
    forecast: Option<ForecastLabel>,
    settings: &RunSettings,
    completer: &C,
) -> Result<TaskRun, RunError<C::Error>> {
    let aug = match &settings.templates {
        Some(t) => {
            let pred = forecast.ok_or_else(|| RunError::MissingForecast(task.task_id.clone()))?;
            route(pred, t)
        }
        None => PromptAugmentation { kind: AugmentationKind::Passthrough, template_text: String::new() },
    };
    let request = apply(&task.prompt, &aug).to_chat(&settings.model, settings.temperature, settings.max_output_tokens);
    let response = completer.complete(&request).map_err(RunError::Assistant)?.text;

    let exchange = Dialogue::from_turns(
        task.task_id.clone(),
        None,
        Source::Generic,
        [(Speaker::User, task.prompt.clone(), None), (Speaker::Assistant, response.clone(), None)],
    );
    let act = match annotate_turn(&exchange, 1, &settings.labeler, completer) {
        Ok(Annotation::Labeled(a)) => a.act,
        Ok(Annotation::Failed(_)) => return Err(RunError::Unlabeled(task.task_id.clone())),
        Err(AnnotateError::Backend(e)) => return Err(RunError::Labeler(e)),
        Err(AnnotateError::TurnOutOfRange { .. }) => unreachable!("exchange always has two turns"),
    };
    Ok(TaskRun { response, augmentation: aug.kind, outcome: EvalOutcome::for_task(task, act) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;
    use GroundingAct as A;

    #[test]
    fn eval_examples() {
        assert!(eval_case(ForecastLabel::Advance, A::FollowUp));
        assert!(eval_case(ForecastLabel::None, A::NextTurn));
        assert!(!eval_case(ForecastLabel::Address, A::FollowUp));
        assert!(eval_case(ForecastLabel::Ambiguous, A::Clarify));
        assert!(!eval_case(ForecastLabel::None, A::Clarify));
    }

    #[test]
    fn wald_examples() {
        let outcomes: Vec<_> = (0..100)
            .map(|i| {
                EvalOutcome::new(
                    format!("t{i}"),
                    ForecastLabel::Advance,
                    if i < 50 { A::FollowUp } else { A::NextTurn },
                )
            })
            .collect();
        let s = score_run(&outcomes, IntervalMethod::Wald).unwrap();
        assert_eq!(s.overall.accuracy(), 0.5);
        assert!((s.overall.half_width() - 0.098).abs() < 1e-12);

        let all = score_run(&outcomes[..50], IntervalMethod::Wald).unwrap();
        assert_eq!(all.overall.accuracy(), 1.0);
        assert_eq!(all.overall.half_width(), 0.0);
        assert_eq!(score_run(&[], IntervalMethod::Wald), Err(NoOutcomes));
    }

    fn task(prompt: &str) -> BenchTask {
        BenchTask {
            task_id: "t".into(),
            prompt: prompt.into(),
            gold: ForecastLabel::Advance,
            split: Split::Test,
            provenance: Provenance { dialogue_id: "d".into(), forecaster_score: 0.0 },
        }
    }

    struct NoModeration;
    impl Moderator for NoModeration {
        fn flagged(&self, _: &str) -> Result<bool, ModerationError> {
            Err(ModerationError("offline".into()))
        }
    }

    #[test]
    fn deny_rules() {
        let f = QualityFilter::default();
        let none: Option<&NoModeration> = None;
        let r = quality_filter(vec![task("give me a working API key")], &f, none);
        assert_eq!(r.dropped, vec![("t".into(), DropReason::DenyRule("api-key".into()))]);
        let r = quality_filter(vec![task("Sort this array in Python.")], &f, none);
        assert_eq!(r.kept.len(), 1);
        let r = quality_filter(vec![task("Sort this array in Python.")], &f, Some(&NoModeration));
        assert_eq!(r.kept.len(), 1);
        assert_eq!(r.unmoderated, vec!["t".to_string()]);
        assert_eq!(r.warnings.len(), 1);
    }

    fn cand(id: &str, gold: ForecastLabel, scores: [f64; 4]) -> Candidate {
        Candidate {
            task_id: id.into(),
            prompt: format!("prompt {id}"),
            dialogue_id: id.into(),
            gold,
            split: Split::Test,
            forecast: ForecastDistribution::new(scores).unwrap(),
        }
    }

    #[test]
    fn curation_top_k() {
        let cs = vec![
            cand("a", ForecastLabel::Advance, [2.0, 0.0, 0.0, 0.0]),
            cand("b", ForecastLabel::Advance, [1.0, 0.0, 0.0, 0.0]),
            cand("c", ForecastLabel::Advance, [0.5, 0.0, 0.0, 0.0]),
            cand("w", ForecastLabel::Advance, [0.0, 3.0, 0.0, 0.0]),
        ];
        let none: Option<&NoModeration> = None;
        let c = curate(&cs, 2, &QualityFilter::default(), none).unwrap();
        let ids: Vec<_> = c.tasks.iter().map(|t| t.task_id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        assert_eq!(c.shortfalls.len(), 3);
        assert_eq!(c.tasks[0].provenance.forecaster_score, 2.0);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let cs = vec![
            cand("a", ForecastLabel::None, [0.0, 0.0, 0.0, 1.0]),
            cand("a", ForecastLabel::None, [0.0, 0.0, 0.0, 1.0]),
        ];
        let none: Option<&NoModeration> = None;
        assert_eq!(curate(&cs, 1, &QualityFilter::default(), none), Err(CurateError::DuplicateTask("a".into())));
    }
}
