use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::dialogue::{Dialogue, Timestamp};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("equivalence judge failed: {0}")]
pub struct JudgeError(pub String);

/// Decides whether `later` restates or repairs `earlier`.
pub trait EquivalenceJudge {
    fn equivalent(&self, earlier: &str, later: &str) -> Result<bool, JudgeError>;
}

impl<J: EquivalenceJudge + ?Sized> EquivalenceJudge for &J {
    fn equivalent(&self, earlier: &str, later: &str) -> Result<bool, JudgeError> {
        (**self).equivalent(earlier, later)
    }
}

/// Equal after lowercasing, dropping punctuation and collapsing whitespace.
#[derive(Debug, Clone, Copy, Default)]
pub struct NormalizedExactMatch;

impl NormalizedExactMatch {
    pub fn normalize(text: &str) -> String {
        let mut out = String::with_capacity(text.len());
        for word in text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
            if !out.is_empty() {
                out.push(' ');
            }
            out.extend(word.chars().flat_map(char::to_lowercase));
        }
        out
    }
}

impl EquivalenceJudge for NormalizedExactMatch {
    fn equivalent(&self, earlier: &str, later: &str) -> Result<bool, JudgeError> {
        Ok(Self::normalize(earlier) == Self::normalize(later))
    }
}

/// Text embedding provider for [`CosineJudge`].
pub trait Embedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, JudgeError>;
}

/// Equivalent when the embeddings' cosine similarity reaches `threshold`.
#[derive(Debug, Clone)]
pub struct CosineJudge<E> {
    pub embedder: E,
    pub threshold: f64,
}

impl<E> CosineJudge<E> {
    pub fn new(embedder: E) -> Self {
        CosineJudge { embedder, threshold: 0.9 }
    }
}

impl<E: Embedder> EquivalenceJudge for CosineJudge<E> {
    fn equivalent(&self, earlier: &str, later: &str) -> Result<bool, JudgeError> {
        let a = self.embedder.embed(earlier)?;
        let b = self.embedder.embed(later)?;
        if a.len() != b.len() {
            return Err(JudgeError("embedding dimensions differ".into()));
        }
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let na = libm::sqrt(a.iter().map(|x| x * x).sum::<f64>());
        let nb = libm::sqrt(b.iter().map(|x| x * x).sum::<f64>());
        if na == 0.0 || nb == 0.0 {
            return Ok(false);
        }
        Ok(dot / (na * nb) >= self.threshold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RestartOptions {
    pub window_secs: i64,
}

impl Default for RestartOptions {
    fn default() -> Self {
        RestartOptions { window_secs: 30 * 60 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExclusionReason {
    MissingUserId,
    MissingTimestamp,
    NoUserTurn,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionRestart {
    pub dialogue_id: String,
    pub user_id: String,
    pub start: Timestamp,
    /// The same user has an earlier session.
    pub has_prior: bool,
    pub is_restart: bool,
    /// Earlier session this one restarts.
    pub restarts: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RestartReport {
    /// Ordered by dialogue id.
    pub sessions: Vec<SessionRestart>,
    pub excluded: Vec<(String, ExclusionReason)>,
    /// Judge errors, counted as "not equivalent".
    pub judge_failures: Vec<(String, String, JudgeError)>,
}

impl RestartReport {
    pub fn restarts(&self) -> usize {
        self.sessions.iter().filter(|s| s.is_restart).count()
    }

    /// Sessions whose user has an earlier session.
    pub fn eligible(&self) -> usize {
        self.sessions.iter().filter(|s| s.has_prior).count()
    }

    /// Sessions belonging to users with two or more sessions.
    pub fn multi_session(&self) -> usize {
        let mut per_user: BTreeMap<&str, usize> = BTreeMap::new();
        for s in &self.sessions {
            *per_user.entry(&s.user_id).or_default() += 1;
        }
        self.sessions.iter().filter(|s| per_user[s.user_id.as_str()] > 1).count()
    }

    fn ratio(&self, den: usize) -> Option<f64> {
        (den > 0).then(|| self.restarts() as f64 / den as f64)
    }

    pub fn rate_eligible(&self) -> Option<f64> {
        self.ratio(self.eligible())
    }

    pub fn rate_multi_session(&self) -> Option<f64> {
        self.ratio(self.multi_session())
    }

    pub fn rate_all(&self) -> Option<f64> {
        self.ratio(self.sessions.len())
    }
}

/// Flags sessions whose first instruction restates or repairs the first
/// instruction of an earlier session by the same user that started at most
/// `window_secs` before it.
///
/// Sessions are ordered by `(start time, dialogue id)`, so the result does
/// not depend on input order.
pub fn detect_restarts<J: EquivalenceJudge + ?Sized>(
    dialogues: &[Dialogue],
    judge: &J,
    opts: &RestartOptions,
) -> RestartReport {
    let mut report = RestartReport::default();
    // user -> [(start, dialogue id, first instruction)]
    let mut by_user: BTreeMap<&str, Vec<(Timestamp, &str, &str)>> = BTreeMap::new();
    for d in dialogues {
        let Some(user) = d.user_id.as_deref() else {
            report.excluded.push((d.dialogue_id.clone(), ExclusionReason::MissingUserId));
            continue;
        };
        let Some(first) = d.first_user_turn() else {
            report.excluded.push((d.dialogue_id.clone(), ExclusionReason::NoUserTurn));
            continue;
        };
        let Some(start) = d.start_time() else {
            report.excluded.push((d.dialogue_id.clone(), ExclusionReason::MissingTimestamp));
            continue;
        };
        by_user.entry(user).or_default().push((start, &d.dialogue_id, &first.text));
    }

    for (user, mut sessions) in by_user {
        sessions.sort();
        for (i, &(start, id, text)) in sessions.iter().enumerate() {
            let mut restarts = None;
            for &(prev_start, prev_id, prev_text) in sessions[..i].iter().rev() {
                if start.0 - prev_start.0 > opts.window_secs {
                    break;
                }
                match judge.equivalent(prev_text, text) {
                    Ok(true) => {
                        restarts = Some(String::from(prev_id));
                        break;
                    }
                    Ok(false) => {}
                    Err(e) => report.judge_failures.push((String::from(prev_id), String::from(id), e)),
                }
            }
            report.sessions.push(SessionRestart {
                dialogue_id: String::from(id),
                user_id: String::from(user),
                start,
                has_prior: i > 0,
                is_restart: restarts.is_some(),
                restarts,
            });
        }
    }
    report.sessions.sort_by(|a, b| a.dialogue_id.cmp(&b.dialogue_id));
    report.excluded.sort_by(|a, b| a.0.cmp(&b.0));
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialogue::{Source, Speaker};
    use alloc::string::ToString;
    use alloc::vec;

    fn session(id: &str, user: Option<&str>, start: Option<i64>, text: &str) -> Dialogue {
        Dialogue::from_turns(
            id,
            user.map(String::from),
            Source::WildChat,
            vec![
                (Speaker::User, text.to_string(), start.map(Timestamp)),
                (Speaker::Assistant, "ok".to_string(), start.map(|s| Timestamp(s + 5))),
            ],
        )
    }

    #[test]
    fn ten_minutes_apart_is_a_restart() {
        let ds = vec![
            session("a", Some("u"), Some(0), "Write a story."),
            session("b", Some("u"), Some(600), "write a story"),
        ];
        let r = detect_restarts(&ds, &NormalizedExactMatch, &RestartOptions::default());
        assert!(r.sessions[1].is_restart);
        assert_eq!(r.sessions[1].restarts.as_deref(), Some("a"));
        assert_eq!(r.rate_eligible(), Some(1.0));
        assert_eq!(r.rate_all(), Some(0.5));
    }

    #[test]
    fn forty_five_minutes_is_not() {
        let ds = vec![
            session("a", Some("u"), Some(0), "Write a story."),
            session("b", Some("u"), Some(2700), "Write a story."),
        ];
        let r = detect_restarts(&ds, &NormalizedExactMatch, &RestartOptions::default());
        assert_eq!(r.restarts(), 0);
        assert_eq!(r.eligible(), 1);
    }

    #[test]
    fn different_users_are_not() {
        let ds = vec![session("a", Some("u"), Some(0), "hi"), session("b", Some("v"), Some(60), "hi")];
        let r = detect_restarts(&ds, &NormalizedExactMatch, &RestartOptions::default());
        assert_eq!(r.restarts(), 0);
        assert_eq!(r.eligible(), 0);
        assert_eq!(r.rate_eligible(), None);
        assert_eq!(r.multi_session(), 0);
    }

    #[test]
    fn missing_fields_are_excluded() {
        let ds = vec![session("a", None, Some(0), "hi"), session("b", Some("u"), None, "hi")];
        let r = detect_restarts(&ds, &NormalizedExactMatch, &RestartOptions::default());
        assert!(r.sessions.is_empty());
        assert_eq!(
            r.excluded,
            vec![("a".into(), ExclusionReason::MissingUserId), ("b".into(), ExclusionReason::MissingTimestamp)]
        );
    }

    struct Fixed(Vec<f64>, Vec<f64>);
    impl Embedder for Fixed {
        fn embed(&self, text: &str) -> Result<Vec<f64>, JudgeError> {
            Ok(if text == "a" { self.0.clone() } else { self.1.clone() })
        }
    }

    #[test]
    fn cosine_threshold() {
        let close = CosineJudge::new(Fixed(vec![1.0, 0.0], vec![0.95, 0.1]));
        assert!(close.equivalent("a", "b").unwrap());
        let far = CosineJudge::new(Fixed(vec![1.0, 0.0], vec![0.5, 0.8]));
        assert!(!far.equivalent("a", "b").unwrap());
    }
}
