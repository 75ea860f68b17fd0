//! Benchmark task files, scored outcomes and run reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use groundkit_core::bench::{Accuracy, BenchTask, EvalOutcome, Provenance, RunScore, TaskRun};
use groundkit_core::stats::IntervalMethod;

use super::{read_jsonl, write_jsonl};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub dialogue_id: String,
    pub forecaster_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_id: String,
    pub prompt: String,
    pub gold: String,
    pub split: String,
    pub provenance: ProvenanceRecord,
}

impl TaskRecord {
    pub fn from_task(t: &BenchTask) -> Self {
        TaskRecord {
            task_id: t.task_id.clone(),
            prompt: t.prompt.clone(),
            gold: t.gold.as_str().into(),
            split: t.split.as_str().into(),
            provenance: ProvenanceRecord {
                dialogue_id: t.provenance.dialogue_id.clone(),
                forecaster_score: t.provenance.forecaster_score,
            },
        }
    }

    pub fn to_task(&self) -> Result<BenchTask, String> {
        Ok(BenchTask {
            task_id: self.task_id.clone(),
            prompt: self.prompt.clone(),
            gold: self.gold.parse().map_err(|_| format!("unknown gold label {:?}", self.gold))?,
            split: self.split.parse().map_err(|_| format!("unknown split {:?}", self.split))?,
            provenance: Provenance {
                dialogue_id: self.provenance.dialogue_id.clone(),
                forecaster_score: self.provenance.forecaster_score,
            },
        })
    }
}

pub fn read_tasks(path: &Path) -> anyhow::Result<Vec<BenchTask>> {
    let records: Vec<TaskRecord> = read_jsonl(path)?.strict(path)?;
    let mut seen = std::collections::BTreeSet::new();
    let mut tasks = Vec::with_capacity(records.len());
    for r in &records {
        if !seen.insert(r.task_id.clone()) {
            anyhow::bail!("{}: task {} appears twice", path.display(), r.task_id);
        }
        tasks.push(r.to_task().map_err(|e| anyhow::anyhow!("{}: {}: {e}", path.display(), r.task_id))?);
    }
    Ok(tasks)
}

pub fn write_tasks(path: &Path, tasks: &[BenchTask]) -> anyhow::Result<()> {
    let records: Vec<TaskRecord> = tasks.iter().map(TaskRecord::from_task).collect();
    write_jsonl(path, &records)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub task_id: String,
    pub gold: String,
    pub response_act: String,
    pub correct: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augmentation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
}

impl OutcomeRecord {
    pub fn from_outcome(o: &EvalOutcome) -> Self {
        OutcomeRecord {
            task_id: o.task_id.clone(),
            gold: o.gold.as_str().into(),
            response_act: o.response_act.as_str().into(),
            correct: o.correct() as u8,
            augmentation: None,
            response: None,
        }
    }

    pub fn from_run(run: &TaskRun) -> Self {
        OutcomeRecord {
            augmentation: Some(run.augmentation.as_str().into()),
            response: Some(run.response.clone()),
            ..OutcomeRecord::from_outcome(&run.outcome)
        }
    }

    /// Recomputes correctness from gold and act; a stored value that
    /// disagrees is an error.
    pub fn to_outcome(&self) -> Result<EvalOutcome, String> {
        let gold = self.gold.parse().map_err(|_| format!("unknown gold label {:?}", self.gold))?;
        let act = self.response_act.parse().map_err(|_| format!("unknown act {:?}", self.response_act))?;
        let outcome = EvalOutcome::new(self.task_id.clone(), gold, act);
        if outcome.correct() as u8 != self.correct {
            return Err(format!("stored correct={} disagrees with the scoring rule", self.correct));
        }
        Ok(outcome)
    }
}

pub fn read_outcomes(path: &Path) -> anyhow::Result<Vec<EvalOutcome>> {
    let records: Vec<OutcomeRecord> = read_jsonl(path)?.strict(path)?;
    records
        .iter()
        .map(|r| r.to_outcome().map_err(|e| anyhow::anyhow!("{}: {}: {e}", path.display(), r.task_id)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRecord {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub half_width: f64,
    pub lower: f64,
    pub upper: f64,
}

impl From<&Accuracy> for AccuracyRecord {
    fn from(a: &Accuracy) -> Self {
        AccuracyRecord {
            n: a.n,
            correct: a.correct,
            accuracy: a.accuracy(),
            half_width: a.half_width(),
            lower: a.interval.lower,
            upper: a.interval.upper,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub interval: String,
    pub overall: AccuracyRecord,
    pub per_label: BTreeMap<String, AccuracyRecord>,
}

impl ScoreReport {
    pub fn from_score(s: &RunScore) -> Self {
        ScoreReport {
            interval: match s.method {
                IntervalMethod::Wald => "wald",
                IntervalMethod::Wilson => "wilson",
            }
            .into(),
            overall: (&s.overall).into(),
            per_label: s.per_label.iter().map(|(l, a)| (l.as_str().to_string(), a.into())).collect(),
        }
    }

    /// Aligned table in percent, e.g. `overall  578  25.26 ± 3.54`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:>6} {:>16}", "label", "n", "accuracy (%)");
        let mut row = |name: &str, a: &AccuracyRecord| {
            let _ =
                writeln!(out, "{:<10} {:>6} {:>8.2} ± {:<5.2}", name, a.n, 100.0 * a.accuracy, 100.0 * a.half_width);
        };
        for (label, a) in &self.per_label {
            row(label, a);
        }
        row("overall", &self.overall);
        out
    }
}
