use rayon::prelude::*;

use groundkit_core::annotate::annotate_or_record;
use groundkit_core::dialogue::{Annotation, FailureReason};

use super::{finish, Context};
use crate::cli::{AnnotateArgs, CliError, CliResult, GlobalArgs};
use crate::formats::annotations::write_annotations;
use crate::formats::dialogues::read_dialogues;

pub fn run(g: &GlobalArgs, a: &AnnotateArgs) -> CliResult {
    let mut ctx = Context::load(g, a.labeler.as_deref())?;
    if let Some(m) = &a.model {
        ctx.config.labeler.model = m.clone();
    }
    let spec = ctx.config.labeler.to_spec()?;
    let dialogues = read_dialogues(&a.input)?;
    let gateway = ctx.gateway()?;

    let jobs: Vec<(usize, usize)> =
        dialogues.iter().enumerate().flat_map(|(d, dlg)| (0..dlg.turns.len()).map(move |t| (d, t))).collect();
    let annotations: Vec<Annotation> = ctx
        .pool()?
        .install(|| jobs.par_iter().map(|&(d, t)| annotate_or_record(&dialogues[d], t, &spec, &gateway)).collect());
    write_annotations(&a.out, &annotations)?;

    let mut unparsable = 0;
    let mut backend = Vec::new();
    for ann in &annotations {
        if let Annotation::Failed(f) = ann {
            match &f.reason {
                FailureReason::Unparsable { .. } => unparsable += 1,
                FailureReason::Backend(msg) => backend.push(format!("{} turn {}: {msg}", f.dialogue_id, f.turn)),
            }
        }
    }
    if unparsable > 0 {
        log::warn!("{unparsable} turns could not be labeled and are excluded from statistics");
    }
    let stats = gateway.stats();
    eprintln!(
        "annotated {} turns ({} unparsable, {} backend failures; cache hits {}, misses {})",
        annotations.len(),
        unparsable,
        backend.len(),
        stats.cache_hits,
        stats.cache_misses
    );
    finish(&ctx, "annotate", &[&a.input], &[&a.out])?;
    if let Some(first) = backend.first() {
        return Err(CliError::env(anyhow::anyhow!(
            "{} turns failed at the model backend; first: {first}",
            backend.len()
        )));
    }
    Ok(())
}
