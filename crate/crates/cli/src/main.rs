use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use drn_core::pipeline::{self, parse_formats, Format, PipelineError, RunConfig};
use drn_core::survey::TieMode;
use drn_core::synthetic::SyntheticConfig;

/// Disaster response network assessment.
#[derive(Parser)]
#[command(name = "drn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse survey files, score respondents and build the organization network.
    Ingest(Common),
    /// Cliques, co-membership and tier predictions.
    H1(Common),
    /// Kruskal-Wallis comparisons by agency group and by cluster.
    H2(Common),
    /// Spearman matrices between connectedness and coordination.
    H3(Common),
    /// Consolidated report from the stage outputs.
    Report(Common),
    /// Write a synthetic survey with planted structure.
    Generate(Generate),
}

#[derive(Args)]
struct Common {
    /// Survey CSV; repeat for several files.
    #[arg(long, value_name = "FILE")]
    input: Vec<PathBuf>,
    /// Codebook TOML; the bundled codebook is used otherwise.
    #[arg(long, value_name = "FILE")]
    codebook: Option<PathBuf>,
    /// How alter-alter ties are filled in (default aggregate).
    #[arg(long, value_parser = parse_mode)]
    mode: Option<TieMode>,
    /// Number of micro-level clusters to sample.
    #[arg(long, default_value_t = 3)]
    clusters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Comma-separated subset of csv, json, markdown.
    #[arg(long, default_value = "csv,json,markdown", value_parser = parse_formats)]
    format: std::collections::BTreeSet<Format>,
    /// Exact permutation p-values for small Spearman samples.
    #[arg(long)]
    exact_small: bool,
}

#[derive(Args)]
struct Generate {
    /// Generator settings (key = value lines); defaults otherwise.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

fn parse_mode(s: &str) -> Result<TieMode, String> {
    s.parse()
}

impl From<Common> for RunConfig {
    fn from(c: Common) -> Self {
        RunConfig {
            inputs: c.input,
            codebook: c.codebook,
            mode: c.mode,
            clusters: c.clusters,
            seed: c.seed,
            out: c.out,
            formats: c.format,
            exact_small: c.exact_small,
        }
    }
}

fn generate(args: Generate) -> anyhow::Result<()> {
    let config = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("cannot read {}", p.display()))?;
            text.parse::<SyntheticConfig>()
                .with_context(|| format!("invalid generator settings in {}", p.display()))?
        }
        None => SyntheticConfig::default(),
    };
    let data = pipeline::cmd_generate(&config, args.seed, &args.out)?;
    println!(
        "wrote {} respondents and {} organizations ({} held out) to {}",
        data.records.len(),
        data.truth.len(),
        data.holdout.len(),
        args.out.display()
    );
    Ok(())
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Generate(g) => return generate(g),
        Command::Ingest(c) => {
            let cfg = RunConfig::from(c);
            let m = pipeline::cmd_ingest(&cfg)?;
            let codebook =
                drn_core::survey::Codebook::load(&cfg.out.join(pipeline::CODEBOOK_FILE))?;
            print!("{}", m.summary_markdown(&codebook));
        }
        Command::H1(c) => {
            let r = pipeline::cmd_h1(&c.into())?;
            let failed = r.tiers.iter().filter(|t| t.error.is_some()).count();
            println!(
                "{} cliques; {} tier predictions ({} without evidence); {} {}-cliques in the respondent network",
                r.cliques.len(),
                r.tiers.len() - failed,
                failed,
                r.census.subgroups,
                r.census.n
            );
        }
        Command::H2(c) => print!("{}", pipeline::cmd_h2(&c.into())?.to_markdown()),
        Command::H3(c) => print!("{}", pipeline::cmd_h3(&c.into())?.to_markdown()),
        Command::Report(c) => {
            let cfg = RunConfig::from(c);
            pipeline::cmd_report(&cfg)?;
            println!("report written to {}", cfg.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<PipelineError>()
                .map_or(2, PipelineError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
