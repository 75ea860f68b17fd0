//! Subcommand implementations.

mod analyze;
mod annotate;
mod bench;
mod forecast;
mod ingest;
mod intervene;

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::cli::{
    BenchCommand, Cli, CliError, CliResult, Command, ForecastCommand, GlobalArgs, OutputFormat, ReportArgs,
};
use crate::config::Config;
use crate::gateway::Gateway;
use crate::manifest::{dir_of, RunManifest};

pub fn dispatch(cli: &Cli) -> CliResult {
    let g = &cli.global;
    match &cli.command {
        Command::Ingest(a) => ingest::run(g, a),
        Command::Annotate(a) => annotate::run(g, a),
        Command::Analyze(c) => analyze::run(g, c),
        Command::Forecast(ForecastCommand::BuildData(a)) => forecast::build_data(g, a),
        Command::Forecast(ForecastCommand::Eval(a)) => forecast::eval(g, a),
        Command::Bench(BenchCommand::Curate(a)) => bench::curate(g, a),
        Command::Bench(BenchCommand::Run(a)) => bench::run(g, a),
        Command::Bench(BenchCommand::Score(a)) => bench::score(g, a),
        Command::InterveneConfigCheck(a) => intervene::check(g, a),
    }
}

/// Configuration resolved for one command: file values with flag overrides
/// applied.
pub(crate) struct Context<'a> {
    pub global: &'a GlobalArgs,
    pub config: Config,
}

impl<'a> Context<'a> {
    /// `path` takes precedence over the global `--config`.
    pub fn load(global: &'a GlobalArgs, path: Option<&Path>) -> CliResult<Self> {
        let mut config = Config::load_or_default(path.or(global.config.as_deref()))?;
        if global.offline {
            config.gateway.offline = true;
        }
        if global.jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        Ok(Context { global, config })
    }

    pub fn gateway(&self) -> CliResult<Gateway> {
        Ok(Gateway::new(self.config.gateway.clone())?)
    }

    pub fn pool(&self) -> CliResult<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.global.jobs)
            .build()
            .map_err(|e| CliError::env(anyhow::anyhow!("thread pool: {e}")))
    }

    pub fn manifest(&self) -> RunManifest {
        RunManifest::new(self.global.seed, serde_json::to_value(&self.config).unwrap_or_default())
    }
}

/// Records inputs and outputs and writes the manifest beside the first
/// output.
pub(crate) fn finish(ctx: &Context<'_>, subcommand: &str, inputs: &[&Path], outputs: &[&Path]) -> CliResult {
    let Some(first) = outputs.first() else { return Ok(()) };
    let mut m = ctx.manifest();
    for i in inputs {
        m.input(i)?;
    }
    for o in outputs {
        m.output(o);
    }
    m.write(&dir_of(first), subcommand)?;
    Ok(())
}

/// Prints `text` or the JSON form of `value`, and writes the JSON to
/// `--out` when given. Returns the written path.
pub(crate) fn emit<T: Serialize>(args: &ReportArgs, text: &str, value: &T) -> CliResult<Option<PathBuf>> {
    match args.format {
        OutputFormat::Text => print!("{text}"),
        OutputFormat::Json => println!("{}", serde_json::to_string_pretty(value).map_err(anyhow::Error::from)?),
    }
    if let Some(out) = &args.out {
        crate::formats::write_json(out, value)?;
        return Ok(Some(out.clone()));
    }
    Ok(None)
}
