use std::path::PathBuf;

use groundkit_core::filter::{filter_corpus, AcceptAll, AsciiLetterRatio, FilterPolicy};

use super::{finish, Context};
use crate::cli::{CliResult, GlobalArgs, IngestArgs, LanguageFilter};
use crate::formats::dialogues::{parse_log, write_dialogues};
use crate::formats::write_jsonl;

pub fn run(g: &GlobalArgs, a: &IngestArgs) -> CliResult {
    let ctx = Context::load(g, None)?;
    let parsed = parse_log(&a.input, a.format)?;
    let policy = FilterPolicy {
        english_only: a.english_only,
        one_dialogue_per_user: a.one_per_user,
        drop_toxic_flagged: a.drop_toxic,
        max_dialogues: a.max,
    };
    let kept = match a.language_id {
        LanguageFilter::Accept => filter_corpus(&parsed.records, &policy, &AcceptAll, g.seed),
        LanguageFilter::Ascii => filter_corpus(&parsed.records, &policy, &AsciiLetterRatio::default(), g.seed),
    };

    let errors_path = a.errors.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".errors.jsonl");
        PathBuf::from(p)
    });
    write_dialogues(&a.out, &kept)?;
    write_jsonl(&errors_path, &parsed.errors)?;
    for e in &parsed.errors {
        log::warn!("{}:{}: {}", a.input.display(), e.line, e.error);
    }
    eprintln!(
        "ingested {} dialogues ({} parsed, {} rejected records)",
        kept.len(),
        parsed.records.len(),
        parsed.errors.len()
    );
    finish(&ctx, "ingest", &[&a.input], &[&a.out, &errors_path])
}
