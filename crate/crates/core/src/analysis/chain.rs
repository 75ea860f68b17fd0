use alloc::vec::Vec;

use crate::dialogue::{category_of, GroundingAct, GroundingCategory, LabeledDialogue, Speaker};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChainScope {
    /// Only user turns form the chain.
    #[default]
    UserTurns,
    AllTurns,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainOptions {
    pub scope: ChainScope,
    /// Drop `Instruction` turns from the chain, so position 0 is the first
    /// turn that can carry a grounding category.
    pub skip_instruction: bool,
}

impl Default for ChainOptions {
    fn default() -> Self {
        ChainOptions { scope: ChainScope::UserTurns, skip_instruction: true }
    }
}

/// `probs[k] = P(turn k ∈ C | turns 0..k ∈ C)` over in-scope turns.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainEstimate {
    pub category: GroundingCategory,
    pub probs: Vec<f64>,
    pub numerators: Vec<usize>,
    /// Denominator at each level; non-increasing.
    pub support: Vec<usize>,
    /// First level whose denominator was zero, if the chain stopped early.
    pub truncated_at: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChainError {
    #[error("n_max must be at least 1")]
    ZeroDepth,
}

/// Category sequence of the turns the chain is computed over. Unlabeled turns
/// are dropped.
fn in_scope(d: &LabeledDialogue, opts: &ChainOptions) -> Vec<GroundingCategory> {
    d.turns
        .iter()
        .filter(|t| opts.scope == ChainScope::AllTurns || t.speaker == Speaker::User)
        .filter_map(|t| t.act)
        .filter(|&a| !(opts.skip_instruction && a == GroundingAct::Instruction))
        .map(category_of)
        .collect()
}

/// Compounding conditional probabilities for `category`, levels `0..=n_max`.
///
/// Level `k` counts dialogues with at least `k + 1` in-scope turns: the
/// denominator is those whose first `k` in-scope turns are all in the
/// category, the numerator those whose first `k + 1` are.
pub fn conditional_chain(
    corpus: &[LabeledDialogue],
    category: GroundingCategory,
    n_max: usize,
    opts: &ChainOptions,
) -> Result<ChainEstimate, ChainError> {
    if n_max == 0 {
        return Err(ChainError::ZeroDepth);
    }
    // Per dialogue: (number of in-scope turns, length of the leading run in C).
    let shapes: Vec<(usize, usize)> = corpus
        .iter()
        .map(|d| {
            let cats = in_scope(d, opts);
            let run = cats.iter().take_while(|&&c| c == category).count();
            (cats.len(), run)
        })
        .collect();

    let mut est =
        ChainEstimate { category, probs: Vec::new(), numerators: Vec::new(), support: Vec::new(), truncated_at: None };
    for k in 0..=n_max {
        let eligible = shapes.iter().filter(|&&(len, run)| len > k && run >= k);
        let (mut den, mut num) = (0usize, 0usize);
        for &(_, run) in eligible {
            den += 1;
            if run > k {
                num += 1;
            }
        }
        if den == 0 {
            est.truncated_at = Some(k);
            break;
        }
        est.probs.push(num as f64 / den as f64);
        est.numerators.push(num);
        est.support.push(den);
    }
    Ok(est)
}
