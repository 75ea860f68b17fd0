use groundkit_core::forecast::ForecastLabel;
use groundkit_core::intervene::route;

use super::Context;
use crate::cli::{CliError, CliResult, GlobalArgs, InterveneCheckArgs};

pub fn check(g: &GlobalArgs, a: &InterveneCheckArgs) -> CliResult {
    let ctx = Context::load(g, a.input.as_deref())?;
    let templates = ctx.config.intervention.templates();
    templates.validate().map_err(|e| CliError::Validation(e.into()))?;
    for label in ForecastLabel::ALL {
        let aug = route(label, &templates);
        let preview: String = aug.template_text.chars().take(60).collect();
        println!("{:<10} -> {:<22} {}", label.as_str(), aug.kind.as_str(), preview);
    }
    Ok(())
}
