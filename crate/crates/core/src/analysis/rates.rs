use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use crate::dialogue::{category_of, GroundingAct, GroundingCategory, LabeledDialogue, Speaker};

/// A row key: either a single act or a whole category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RateKey {
    Act(GroundingAct),
    Category(GroundingCategory),
}

impl RateKey {
    fn matches(self, act: GroundingAct) -> bool {
        match self {
            RateKey::Act(a) => a == act,
            RateKey::Category(c) => category_of(act) == c,
        }
    }
}

impl fmt::Display for RateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateKey::Act(a) => write!(f, "act:{a}"),
            RateKey::Category(c) => write!(f, "category:{c}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rate {
    pub numerator: usize,
    pub denominator: usize,
}

impl Rate {
    pub fn proportion(&self) -> f64 {
        if self.denominator == 0 {
            0.0
        } else {
            self.numerator as f64 / self.denominator as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RateOptions {
    /// Whether turns labeled `Instruction` count toward a speaker's denominator.
    pub count_instruction_turns: bool,
}

impl Default for RateOptions {
    fn default() -> Self {
        RateOptions { count_instruction_turns: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RateTable {
    pub rows: BTreeMap<(Speaker, RateKey), Rate>,
    /// Turns excluded because the annotator failed on them.
    pub unlabeled: BTreeMap<Speaker, usize>,
}

impl RateTable {
    pub fn get(&self, speaker: Speaker, key: RateKey) -> Option<Rate> {
        self.rows.get(&(speaker, key)).copied()
    }

    pub fn rate(&self, speaker: Speaker, key: RateKey) -> Option<f64> {
        self.get(speaker, key).map(|r| r.proportion())
    }

    /// `rate(left) / rate(right)`; `None` if either row is missing or the
    /// right-hand rate is zero.
    pub fn ratio(&self, left: (Speaker, RateKey), right: (Speaker, RateKey)) -> Option<f64> {
        let l = self.rate(left.0, left.1)?;
        let r = self.rate(right.0, right.1)?;
        (r != 0.0).then(|| l / r)
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn counted(act: GroundingAct, opts: &RateOptions) -> bool {
    opts.count_instruction_turns || act != GroundingAct::Instruction
}

fn all_keys() -> impl Iterator<Item = RateKey> {
    GroundingAct::ALL.into_iter().map(RateKey::Act).chain(GroundingCategory::ALL.into_iter().map(RateKey::Category))
}

/// Proportion of each speaker's labeled turns carrying each act and category.
/// Speakers without labeled turns get no rows.
pub fn act_rates(corpus: &[LabeledDialogue], opts: &RateOptions) -> RateTable {
    let mut table = RateTable::default();
    let mut acts: BTreeMap<Speaker, Vec<GroundingAct>> = BTreeMap::new();
    for turn in corpus.iter().flat_map(|d| &d.turns) {
        match turn.act {
            Some(act) if counted(act, opts) => acts.entry(turn.speaker).or_default().push(act),
            Some(_) => {}
            None => *table.unlabeled.entry(turn.speaker).or_default() += 1,
        }
    }
    for (speaker, labels) in acts {
        for key in all_keys() {
            let numerator = labels.iter().filter(|&&a| key.matches(a)).count();
            table.rows.insert((speaker, key), Rate { numerator, denominator: labels.len() });
        }
    }
    table
}

/// One rate per dialogue that has at least one counted turn by `speaker`;
/// the sample input for [`crate::stats::welch_t_test`].
pub fn per_dialogue_rates(corpus: &[LabeledDialogue], speaker: Speaker, key: RateKey, opts: &RateOptions) -> Vec<f64> {
    corpus
        .iter()
        .filter_map(|d| {
            let acts: Vec<GroundingAct> = d
                .turns
                .iter()
                .filter(|t| t.speaker == speaker)
                .filter_map(|t| t.act)
                .filter(|&a| counted(a, opts))
                .collect();
            (!acts.is_empty()).then(|| acts.iter().filter(|&&a| key.matches(a)).count() as f64 / acts.len() as f64)
        })
        .collect()
}
