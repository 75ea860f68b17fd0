//! Descriptive statistics over annotated corpora.

mod chain;
mod lexicon;
mod rates;
mod restarts;

pub use chain::{conditional_chain, ChainError, ChainEstimate, ChainOptions, ChainScope};
pub use lexicon::{
    count_tokens, fightin_words, tokenize, LexiconConfig, LexiconError, PriorKind, TokenCounts, WordScore,
};
pub use rates::{act_rates, per_dialogue_rates, Rate, RateKey, RateOptions, RateTable};
pub use restarts::{
    detect_restarts, CosineJudge, Embedder, EquivalenceJudge, ExclusionReason, JudgeError, NormalizedExactMatch,
    RestartOptions, RestartReport, SessionRestart,
};
