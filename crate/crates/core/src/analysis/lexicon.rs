//! Log-odds ratios with an informative Dirichlet prior ("Fightin' Words").

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

pub type TokenCounts = BTreeMap<String, u64>;

/// Lowercased alphanumeric runs; every other character separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.chars().flat_map(char::to_lowercase).collect())
        .collect()
}

pub fn count_tokens<'a, I: IntoIterator<Item = &'a str>>(texts: I) -> TokenCounts {
    let mut counts = TokenCounts::new();
    for text in texts {
        for tok in tokenize(text) {
            *counts.entry(tok).or_default() += 1;
        }
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PriorKind {
    /// `α_w = α₀ / |V|`.
    #[default]
    Uniform,
    /// `α_w = α₀ · f_w` with `f_w` the pooled relative frequency of `w`.
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LexiconConfig {
    /// `α₀`; defaults to `0.01 · |V|` when unset.
    pub prior_strength: Option<f64>,
    pub prior: PriorKind,
    /// Words whose combined count is below this are dropped from the vocabulary.
    pub min_count: u64,
}

impl Default for LexiconConfig {
    fn default() -> Self {
        LexiconConfig { prior_strength: None, prior: PriorKind::Uniform, min_count: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LexiconError {
    #[error("vocabulary is empty after min-count filtering")]
    EmptyVocabulary,
    /// A lone word makes up all of both corpora, so its log-odds are undefined.
    #[error("vocabulary has a single word after min-count filtering")]
    SingleWord,
    #[error("corpus {0} has no tokens after min-count filtering")]
    EmptyCorpus(char),
    #[error("prior strength must be positive, got {0}")]
    BadPriorStrength(f64),
    #[error("min_count must be at least 1")]
    BadMinCount,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordScore {
    pub word: String,
    pub count_a: u64,
    pub count_b: u64,
    /// Log-odds difference, positive when the word leans toward corpus A.
    pub delta: f64,
    pub variance: f64,
    pub z: f64,
}

/// Scores every vocabulary word, sorted by z-score descending (ties by word).
pub fn fightin_words(a: &TokenCounts, b: &TokenCounts, cfg: &LexiconConfig) -> Result<Vec<WordScore>, LexiconError> {
    if cfg.min_count == 0 {
        return Err(LexiconError::BadMinCount);
    }
    let get = |m: &TokenCounts, w: &str| m.get(w).copied().unwrap_or(0);

    let mut vocab: Vec<&str> = a.keys().chain(b.keys()).map(String::as_str).collect();
    vocab.sort_unstable();
    vocab.dedup();
    vocab.retain(|w| get(a, w) + get(b, w) >= cfg.min_count);
    if vocab.is_empty() {
        return Err(LexiconError::EmptyVocabulary);
    }
    if vocab.len() == 1 {
        return Err(LexiconError::SingleWord);
    }

    let n_a: u64 = vocab.iter().map(|w| get(a, w)).sum();
    let n_b: u64 = vocab.iter().map(|w| get(b, w)).sum();
    if n_a == 0 {
        return Err(LexiconError::EmptyCorpus('a'));
    }
    if n_b == 0 {
        return Err(LexiconError::EmptyCorpus('b'));
    }

    let alpha0 = cfg.prior_strength.unwrap_or(0.01 * vocab.len() as f64);
    if alpha0.is_nan() || alpha0 <= 0.0 {
        return Err(LexiconError::BadPriorStrength(alpha0));
    }
    let (n_a, n_b) = (n_a as f64, n_b as f64);
    let vocab_size = vocab.len() as f64;

    let mut scores: Vec<WordScore> = vocab
        .into_iter()
        .map(|w| {
            let (ya, yb) = (get(a, w), get(b, w));
            let alpha_w = match cfg.prior {
                PriorKind::Uniform => alpha0 / vocab_size,
                PriorKind::Pooled => alpha0 * ((ya + yb) as f64 / (n_a + n_b)),
            };
            let (yaf, ybf) = (ya as f64, yb as f64);
            let log_odds_a = libm::log((yaf + alpha_w) / (n_a + alpha0 - yaf - alpha_w));
            let log_odds_b = libm::log((ybf + alpha_w) / (n_b + alpha0 - ybf - alpha_w));
            let delta = log_odds_a - log_odds_b;
            let variance = 1.0 / (yaf + alpha_w) + 1.0 / (ybf + alpha_w);
            WordScore {
                word: String::from(w),
                count_a: ya,
                count_b: yb,
                delta,
                variance,
                z: delta / libm::sqrt(variance),
            }
        })
        .collect();
    scores.sort_by(|x, y| y.z.total_cmp(&x.z).then_with(|| x.word.cmp(&y.word)));
    Ok(scores)
}
