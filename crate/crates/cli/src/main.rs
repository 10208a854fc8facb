mod commands;
mod embedding;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use trajeval::datafilter::MixtureKind;
use trajeval::vertex::{Bandwidth, Weighting};

use embedding::EmbedOpts;

#[derive(Debug, Parser)]
#[command(name = "trajeval", version, about = "Score, filter and synthesize web-agent trajectories")]
struct Cli {
    /// Seed for every random choice; recorded in outputs
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads (defaults to the number of CPUs)
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Keep trajectories that pass every plausibility filter
    Filter(FilterArgs),
    /// Draw initial, final and intermediate examples in a 1:1:2 ratio
    Sample(SampleArgs),
    /// Assemble a training mixture from in-domain and synthetic examples
    Mix(MixArgs),
    /// Synthesize out-of-domain examples through a text-generation service
    Generate(GenerateArgs),
    /// Precompute embeddings for logs and templates
    Embed(EmbedArgs),
    /// Alignment-based trajectory scores against references
    ScoreVertex(ScoreVertexArgs),
    /// Fraction of capabilities demonstrated by non-trivial successes
    ScoreCapability(CapabilityArgs),
    /// Task completion rate
    ScoreFc(FcArgs),
    /// Capabilities gained and lost between two result sets
    DiffCapabilities(DiffArgs),
    /// Summarize JSON reports as a Markdown table
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct FilterArgs {
    /// Trajectory log
    #[arg(long)]
    input: PathBuf,
    /// Second-attempt log used for tasks whose first trajectory is rejected
    #[arg(long)]
    fallback: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SampleArgs {
    /// Plausible trajectory log
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MixArgs {
    /// In-domain training examples
    #[arg(long)]
    input: Option<PathBuf>,
    /// Out-of-domain training examples
    #[arg(long)]
    ood: Option<PathBuf>,
    #[arg(long)]
    mixture: MixtureKind,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// In-domain training examples used as few-shot material
    #[arg(long)]
    input: PathBuf,
    /// Seed intents, one JSON object per line
    #[arg(long)]
    intents: PathBuf,
    #[arg(long)]
    gen_endpoint: String,
    /// Examples to generate (defaults to the number of in-domain examples)
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long, default_value_t = 1.0)]
    top_p: f64,
    #[arg(long, default_value_t = 10)]
    max_retries: usize,
    #[command(flatten)]
    embed: EmbedOpts,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EmbedArgs {
    /// Trajectory logs whose steps are embedded
    #[arg(long)]
    input: Vec<PathBuf>,
    /// Reference logs; their trivial-agent baselines are embedded too
    #[arg(long)]
    refs: Vec<PathBuf>,
    #[arg(long)]
    templates: Option<PathBuf>,
    #[command(flatten)]
    embed: EmbedOpts,
    #[arg(long)]
    out: PathBuf,
}

fn parse_sigma(s: &str) -> Result<Bandwidth, String> {
    if s == "median" {
        return Ok(Bandwidth::MedianHeuristic);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(Bandwidth::Fixed(v)),
        _ => Err(format!("expected `median` or a positive number, got {s:?}")),
    }
}

#[derive(Debug, Args)]
struct ScoreVertexArgs {
    /// Test trajectory log, one trajectory per task
    #[arg(long)]
    input: PathBuf,
    /// Reference trajectory log; several trajectories may share a task
    #[arg(long)]
    refs: PathBuf,
    /// Trivial-agent trajectories per task (synthesized from references when absent)
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Kernel bandwidth: `median` or a fixed positive value
    #[arg(long, default_value = "median", value_parser = parse_sigma)]
    sigma: Bandwidth,
    /// Use FastDTW with this radius instead of exact DTW
    #[arg(long)]
    radius: Option<usize>,
    #[arg(long, default_value = "uniform")]
    weighting: Weighting,
    #[arg(long)]
    exclude_trivial: bool,
    /// Intent templates, needed for capability weighting
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Trivial-agent task results, needed to exclude trivial tasks
    #[arg(long)]
    trivial_results: Option<PathBuf>,
    /// Template grouping threshold
    #[arg(long, default_value_t = trajeval::metrics::DEFAULT_CLUSTER_THRESHOLD)]
    threshold: f64,
    #[command(flatten)]
    embed: EmbedOpts,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CapabilityArgs {
    #[arg(long)]
    templates: PathBuf,
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    trivial_results: Option<PathBuf>,
    #[arg(long, default_value_t = trajeval::metrics::DEFAULT_CLUSTER_THRESHOLD)]
    threshold: f64,
    #[command(flatten)]
    embed: EmbedOpts,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FcArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DiffArgs {
    #[arg(long)]
    templates: PathBuf,
    /// Results before
    #[arg(long)]
    results: PathBuf,
    /// Results after
    #[arg(long)]
    compare: PathBuf,
    #[arg(long)]
    trivial_results: Option<PathBuf>,
    #[arg(long, default_value_t = trajeval::metrics::DEFAULT_CLUSTER_THRESHOLD)]
    threshold: f64,
    #[command(flatten)]
    embed: EmbedOpts,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// JSON reports written by the score commands
    #[arg(long, required = true)]
    input: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(jobs) = cli.jobs {
            anyhow::ensure!(jobs > 0, "--jobs must be positive");
            b = b.num_threads(jobs);
        }
        b.build()?
    };
    pool.install(|| match cli.command {
        Command::Filter(a) => commands::filter(a),
        Command::Sample(a) => commands::sample(a, seed),
        Command::Mix(a) => commands::mix(a, seed),
        Command::Generate(a) => commands::generate(a, seed),
        Command::Embed(a) => commands::embed(a),
        Command::ScoreVertex(a) => commands::score_vertex(a, seed),
        Command::ScoreCapability(a) => commands::score_capability(a, seed),
        Command::ScoreFc(a) => commands::score_fc(a, seed),
        Command::DiffCapabilities(a) => commands::diff_capabilities(a, seed),
        Command::Report(a) => commands::report(a),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
