//! Corpus filters applied after ingestion.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dialogue::{Dialogue, Speaker};

/// Decides whether a dialogue is in the target language.
pub trait LanguageId {
    fn is_target_language(&self, dialogue: &Dialogue) -> bool;
}

/// Accepts everything.
#[derive(Debug, Clone, Copy, Default)]
pub struct AcceptAll;

impl LanguageId for AcceptAll {
    fn is_target_language(&self, _: &Dialogue) -> bool {
        true
    }
}

/// Treats a dialogue as English when at least `min_ratio` of the alphabetic
/// characters in its user turns are ASCII.
#[derive(Debug, Clone, Copy)]
pub struct AsciiLetterRatio {
    pub min_ratio: f64,
}

impl Default for AsciiLetterRatio {
    fn default() -> Self {
        AsciiLetterRatio { min_ratio: 0.9 }
    }
}

impl LanguageId for AsciiLetterRatio {
    fn is_target_language(&self, dialogue: &Dialogue) -> bool {
        let (mut ascii, mut total) = (0usize, 0usize);
        for turn in dialogue.turns.iter().filter(|t| t.speaker == Speaker::User) {
            for c in turn.text.chars().filter(|c| c.is_alphabetic()) {
                total += 1;
                if c.is_ascii_alphabetic() {
                    ascii += 1;
                }
            }
        }
        total == 0 || ascii as f64 / total as f64 >= self.min_ratio
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FilterPolicy {
    pub english_only: bool,
    pub one_dialogue_per_user: bool,
    pub drop_toxic_flagged: bool,
    pub max_dialogues: Option<core::num::NonZeroUsize>,
}

/// Applies `policy` to `dialogues`.
///
/// Per-user sampling picks one dialogue uniformly at random per distinct
/// `user_id` from a ChaCha stream seeded with `seed`; dialogues without a
/// user id are all kept. Output preserves input order. `max_dialogues`
/// truncates the result after every other filter.
pub fn filter_corpus<L: LanguageId + ?Sized>(
    dialogues: &[Dialogue],
    policy: &FilterPolicy,
    language: &L,
    seed: u64,
) -> Vec<Dialogue> {
    let mut keep: Vec<bool> = dialogues
        .iter()
        .map(|d| !(policy.drop_toxic_flagged && d.toxic) && (!policy.english_only || language.is_target_language(d)))
        .collect();

    if policy.one_dialogue_per_user {
        let mut by_user: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, d) in dialogues.iter().enumerate() {
            if let (true, Some(user)) = (keep[i], d.user_id.as_deref()) {
                by_user.entry(user).or_default().push(i);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for group in by_user.values() {
            if group.len() < 2 {
                continue;
            }
            // Choose among candidates ordered by dialogue id so the pick does not
            // depend on where the user's dialogues sit in the input.
            let mut ordered = group.clone();
            ordered.sort_by(|&a, &b| dialogues[a].dialogue_id.cmp(&dialogues[b].dialogue_id).then(a.cmp(&b)));
            let chosen = *ordered.choose(&mut rng).expect("non-empty group");
            for &i in group {
                keep[i] = i == chosen;
            }
        }
    }

    let mut out: Vec<Dialogue> = dialogues.iter().zip(keep).filter(|&(_, k)| k).map(|(d, _)| d.clone()).collect();
    if let Some(max) = policy.max_dialogues {
        out.truncate(max.get());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialogue::{Source, Timestamp};
    use alloc::string::{String, ToString};
    use alloc::vec;
    use core::num::NonZeroUsize;
    use proptest::prelude::*;

    fn dlg(id: &str, user: Option<&str>, text: &str) -> Dialogue {
        Dialogue::from_turns(
            id,
            user.map(String::from),
            Source::WildChat,
            vec![(Speaker::User, text.to_string(), None::<Timestamp>)],
        )
    }

    #[test]
    fn one_per_user() {
        let ds = vec![dlg("a", Some("u1"), "x"), dlg("b", Some("u1"), "y")];
        let p = FilterPolicy { one_dialogue_per_user: true, ..Default::default() };
        let out = filter_corpus(&ds, &p, &AcceptAll, 7);
        assert_eq!(out.len(), 1);
        assert_eq!(out, filter_corpus(&ds, &p, &AcceptAll, 7));
    }

    #[test]
    fn all_off_is_identity() {
        let ds = vec![dlg("a", Some("u1"), "x"), dlg("b", Some("u1"), "y"), dlg("c", None, "z")];
        assert_eq!(filter_corpus(&ds, &FilterPolicy::default(), &AcceptAll, 0), ds);
    }

    #[test]
    fn toxic_dropped() {
        let mut ds = vec![dlg("a", None, "x"), dlg("b", None, "y"), dlg("c", None, "z")];
        ds[1].toxic = true;
        let p = FilterPolicy { drop_toxic_flagged: true, ..Default::default() };
        let out = filter_corpus(&ds, &p, &AcceptAll, 0);
        assert_eq!(out.iter().map(|d| d.dialogue_id.as_str()).collect::<Vec<_>>(), ["a", "c"]);
    }

    #[test]
    fn anonymous_dialogues_all_survive() {
        let ds = vec![dlg("a", None, "x"), dlg("b", None, "y")];
        let p = FilterPolicy { one_dialogue_per_user: true, ..Default::default() };
        assert_eq!(filter_corpus(&ds, &p, &AcceptAll, 3).len(), 2);
    }

    #[test]
    fn english_heuristic() {
        let ds = vec![dlg("a", None, "write a story"), dlg("b", None, "напиши рассказ")];
        let p = FilterPolicy { english_only: true, ..Default::default() };
        let out = filter_corpus(&ds, &p, &AsciiLetterRatio::default(), 0);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].dialogue_id, "a");
        assert_eq!(filter_corpus(&ds, &p, &AcceptAll, 0).len(), 2);
    }

    #[test]
    fn max_dialogues_truncates() {
        let ds = vec![dlg("a", None, "x"), dlg("b", None, "y"), dlg("c", None, "z")];
        let p = FilterPolicy { max_dialogues: NonZeroUsize::new(2), ..Default::default() };
        assert_eq!(filter_corpus(&ds, &p, &AcceptAll, 0).len(), 2);
    }

    proptest! {
        #[test]
        fn idempotent(users in proptest::collection::vec((0u8..4, any::<bool>(), any::<bool>()), 0..30), seed: u64,
                      per_user: bool, toxic: bool, max in 0usize..10) {
            let ds: Vec<Dialogue> = users.iter().enumerate().map(|(i, (u, has_user, tox))| {
                let mut d = dlg(&alloc::format!("d{i}"), has_user.then(|| alloc::format!("u{u}")).as_deref(), "hello");
                d.toxic = *tox;
                d
            }).collect();
            let p = FilterPolicy {
                english_only: false,
                one_dialogue_per_user: per_user,
                drop_toxic_flagged: toxic,
                max_dialogues: NonZeroUsize::new(max),
            };
            let once = filter_corpus(&ds, &p, &AcceptAll, seed);
            let twice = filter_corpus(&once, &p, &AcceptAll, seed);
            prop_assert_eq!(once, twice);
        }
    }
}
