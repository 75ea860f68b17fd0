//! The TOML run configuration. Every section is optional; command-line
//! flags override values read here, which override the defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use groundkit_core::annotate::{default_examples, FewShotExample, LabelerSpec, DEFAULT_TEMPLATE_ID};
use groundkit_core::intervene::InterventionTemplates;
use groundkit_core::{GroundingAct, Speaker};

use crate::formats::read_jsonl;
use crate::gateway::GatewayConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelerConfig {
    pub model: String,
    pub template: String,
    pub max_retries: u32,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Few-shot examples file; the built-in set is used when absent.
    pub examples: Option<PathBuf>,
}

impl Default for LabelerConfig {
    fn default() -> Self {
        let spec = LabelerSpec::new("gpt-4o");
        LabelerConfig {
            model: spec.model_name,
            template: DEFAULT_TEMPLATE_ID.into(),
            max_retries: spec.max_retries,
            temperature: spec.temperature,
            max_output_tokens: spec.max_output_tokens,
            examples: None,
        }
    }
}

#[derive(Debug, Deserialize)]
struct ExampleTurn {
    role: String,
    text: String,
}

/// One line of an examples file: the context turns, the last of which
/// carries `act`.
#[derive(Debug, Deserialize)]
struct ExampleRecord {
    context: Vec<ExampleTurn>,
    act: String,
}

impl LabelerConfig {
    pub fn to_spec(&self) -> anyhow::Result<LabelerSpec> {
        let few_shot_examples = match &self.examples {
            Some(path) => load_examples(path)?,
            None => default_examples(),
        };
        let spec = LabelerSpec {
            prompt_template_id: self.template.clone(),
            few_shot_examples,
            model_name: self.model.clone(),
            max_retries: self.max_retries,
            temperature: self.temperature,
            max_output_tokens: self.max_output_tokens,
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn load_examples(path: &Path) -> anyhow::Result<Vec<FewShotExample>> {
    let records: Vec<ExampleRecord> = read_jsonl(path)?.strict(path)?;
    records
        .into_iter()
        .map(|r| {
            let context = r
                .context
                .into_iter()
                .map(|t| Ok((t.role.parse::<Speaker>()?, t.text)))
                .collect::<Result<Vec<_>, groundkit_core::dialogue::UnknownName>>()?;
            Ok(FewShotExample { context, act: r.act.parse::<GroundingAct>()? })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterventionConfig {
    pub clarify_first: String,
    pub answer_then_follow_up: String,
}

impl Default for InterventionConfig {
    fn default() -> Self {
        let t = InterventionTemplates::default();
        InterventionConfig { clarify_first: t.clarify_first, answer_then_follow_up: t.answer_then_follow_up }
    }
}

impl InterventionConfig {
    pub fn templates(&self) -> InterventionTemplates {
        InterventionTemplates {
            clarify_first: self.clarify_first.clone(),
            answer_then_follow_up: self.answer_then_follow_up.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Task or dialogue ids to exclude, one per line.
    pub blocklist: Option<PathBuf>,
    /// Run prompts through the gateway's moderation endpoint during curation.
    pub moderation: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { temperature: 0.0, max_output_tokens: 512, blocklist: None, moderation: false }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub labeler: LabelerConfig,
    pub gateway: GatewayConfig,
    pub intervention: InterventionConfig,
    pub bench: BenchConfig,
}

impl Config {
    /// Reads a TOML file; relative paths inside it resolve against its
    /// directory.
    pub fn load(path: &Path) -> anyhow::Result<Config> {
        let text =
            std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        let mut cfg: Config = toml::from_str(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.gateway.rebase(base);
        for p in [&mut cfg.labeler.examples, &mut cfg.bench.blocklist].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> anyhow::Result<Config> {
        path.map_or_else(|| Ok(Config::default()), Config::load)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg: Config = toml::from_str("[labeler]\nmodel = \"m\"\n[gateway]\nmax_in_flight = 2\n").unwrap();
        assert_eq!(cfg.labeler.model, "m");
        assert_eq!(cfg.labeler.max_retries, 3);
        assert_eq!(cfg.gateway.max_in_flight, 2);
        assert_eq!(cfg.intervention, InterventionConfig::default());
        cfg.labeler.to_spec().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<Config>("[labeler]\nmodle = \"m\"\n").is_err());
    }
}
