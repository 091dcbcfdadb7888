//! Command-line entry point: pipeline stages as subcommands over a run
//! directory. Every configuration key is also available as a flag of the
//! same dotted name (see `--help`).

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use argos::config::RunConfig;
use argos::fsrsynth::Arm;
use argos::hazardgen::Method;
use argos::pipeline::{Pipeline, PipelineError};

#[derive(Parser, Debug)]
#[command(
    name = "argos",
    version,
    about = "Attribute-guided hazard discovery and safety requirement synthesis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// Configuration file (flat `key = value` lines, `#` comments).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Run directory holding stage files and the manifest.
    #[arg(long, global = true, alias = "run_dir", value_name = "PATH")]
    run_dir: Option<PathBuf>,
    /// Force the deterministic mock embedding and chat backends.
    #[arg(long, global = true)]
    mock: bool,
    /// Process only the seed with this id.
    #[arg(long, global = true, value_name = "ID")]
    seed_filter: Option<String>,
    #[command(flatten)]
    overrides: Overrides,
}

/// Per-key overrides; names mirror the configuration file exactly.
#[derive(Args, Debug, Default)]
#[command(next_help_heading = "Config key overrides")]
struct Overrides {
    #[arg(long = "corpus.rules", global = true, value_name = "PATH")]
    corpus_rules: Option<String>,
    #[arg(long = "corpus.seeds", global = true, value_name = "PATH")]
    corpus_seeds: Option<String>,
    #[arg(long = "corpus.clauses", global = true, value_name = "PATH")]
    corpus_clauses: Option<String>,
    #[arg(long = "corpus.robot_spec", global = true, value_name = "PATH")]
    corpus_robot_spec: Option<String>,
    #[arg(long = "embedding.provider", global = true, value_name = "mock|remote")]
    embedding_provider: Option<String>,
    #[arg(long = "embedding.endpoint", global = true, value_name = "URL")]
    embedding_endpoint: Option<String>,
    #[arg(long = "embedding.model", global = true, value_name = "NAME")]
    embedding_model: Option<String>,
    #[arg(long = "embedding.dims", global = true, value_name = "N")]
    embedding_dims: Option<String>,
    #[arg(long = "llm.backend", global = true, value_name = "mock|remote")]
    llm_backend: Option<String>,
    #[arg(long = "llm.endpoint", global = true, value_name = "URL")]
    llm_endpoint: Option<String>,
    #[arg(long = "llm.model", global = true, value_name = "NAME")]
    llm_model: Option<String>,
    #[arg(long = "llm.temperature", global = true, value_name = "T")]
    llm_temperature: Option<String>,
    #[arg(long = "llm.max_tokens", global = true, value_name = "N")]
    llm_max_tokens: Option<String>,
    #[arg(long = "thresholds.tau_attr", global = true, value_name = "TAU")]
    tau_attr: Option<String>,
    #[arg(long = "thresholds.tau_reg", global = true, value_name = "TAU")]
    tau_reg: Option<String>,
    #[arg(long = "thresholds.eps_shift", global = true, value_name = "EPS")]
    eps_shift: Option<String>,
    #[arg(long = "k_max", id = "cfg_k_max", global = true, value_name = "K")]
    k_max: Option<String>,
    #[arg(long = "concurrency.max_in_flight", global = true, value_name = "N")]
    max_in_flight: Option<String>,
    #[arg(long = "concurrency.retries", global = true, value_name = "N")]
    retries: Option<String>,
    #[arg(long = "grounding.aliases", global = true, value_name = "a=R01,b=R02")]
    aliases: Option<String>,
    #[arg(
        long = "grounding.extractor",
        global = true,
        value_name = "lexicon|llm"
    )]
    extractor: Option<String>,
    #[arg(long = "evaluate.anchor", global = true, value_name = "vanilla|seed")]
    anchor: Option<String>,
    #[arg(long = "evaluate.aligned_p", global = true, value_name = "P")]
    aligned_p: Option<String>,
    #[arg(
        long = "evaluate.embed_mechanism",
        global = true,
        value_name = "true|false"
    )]
    embed_mechanism: Option<String>,
}

impl Overrides {
    fn pairs(&self) -> Vec<(&'static str, &String)> {
        [
            ("corpus.rules", &self.corpus_rules),
            ("corpus.seeds", &self.corpus_seeds),
            ("corpus.clauses", &self.corpus_clauses),
            ("corpus.robot_spec", &self.corpus_robot_spec),
            ("embedding.provider", &self.embedding_provider),
            ("embedding.endpoint", &self.embedding_endpoint),
            ("embedding.model", &self.embedding_model),
            ("embedding.dims", &self.embedding_dims),
            ("llm.backend", &self.llm_backend),
            ("llm.endpoint", &self.llm_endpoint),
            ("llm.model", &self.llm_model),
            ("llm.temperature", &self.llm_temperature),
            ("llm.max_tokens", &self.llm_max_tokens),
            ("thresholds.tau_attr", &self.tau_attr),
            ("thresholds.tau_reg", &self.tau_reg),
            ("thresholds.eps_shift", &self.eps_shift),
            ("k_max", &self.k_max),
            ("concurrency.max_in_flight", &self.max_in_flight),
            ("concurrency.retries", &self.retries),
            ("grounding.aliases", &self.aliases),
            ("grounding.extractor", &self.extractor),
            ("evaluate.anchor", &self.anchor),
            ("evaluate.aligned_p", &self.aligned_p),
            ("evaluate.embed_mechanism", &self.embed_mechanism),
        ]
        .into_iter()
        .filter_map(|(key, value)| value.as_ref().map(|v| (key, v)))
        .collect()
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract semantic units from seeds and retrieve rule attributes.
    Ground,
    /// Generate hazard scenarios for one method.
    Generate {
        #[arg(long, value_name = "ours|vanilla|cot")]
        method: Method,
        /// Largest rule combination size (defaults to the config k_max).
        #[arg(long, value_name = "K")]
        k_max: Option<usize>,
    },
    /// Synthesize functional safety requirements for one ablation arm.
    Synthesize {
        #[arg(long, value_name = "full|no-iso|iso-only|vanilla")]
        arm: Arm,
    },
    /// Compute topology metrics, run the judges, and aggregate summaries.
    Evaluate,
    /// Render the aggregate report tables (markdown + CSV).
    Report,
    /// Run every stage in order.
    RunAll {
        #[arg(long, value_name = "K")]
        k_max: Option<usize>,
    },
}

fn build_config(common: &Common) -> Result<RunConfig, PipelineError> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for (key, value) in common.overrides.pairs() {
        config.apply(key, value)?;
    }
    if let Some(dir) = &common.run_dir {
        config.run_dir = dir.clone();
    }
    if common.mock {
        config.force_mock();
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let config = build_config(&cli.common)?;
    let pipeline = Pipeline::new(config)?;
    let _lock = pipeline.store().lock()?;
    let filter = cli.common.seed_filter.as_deref();
    match cli.command {
        Command::Ground => {
            let n = pipeline.cmd_ground(filter)?;
            println!("ground: {n} attribute matches");
        }
        Command::Generate { method, k_max } => {
            let n = pipeline.cmd_generate(method, k_max, filter)?;
            println!("generate:{method}: {n} hazard scenarios");
        }
        Command::Synthesize { arm } => {
            let n = pipeline.cmd_synthesize(arm, filter)?;
            println!("synthesize:{arm}: {n} requirements");
        }
        Command::Evaluate => {
            let n = pipeline.cmd_evaluate()?;
            println!("evaluate: {n} judge records");
        }
        Command::Report => {
            pipeline.cmd_report()?;
            println!(
                "report: wrote {}",
                pipeline.store().path("report.md").display()
            );
        }
        Command::RunAll { k_max } => {
            pipeline.run_all(k_max, filter)?;
            println!(
                "run-all: all stages complete in {}",
                pipeline.store().dir().display()
            );
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(error) = run(cli) {
        eprintln!("error: {error}");
        std::process::exit(error.exit_code());
    }
}
