use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dsg::eval::MetricKind;
use dsg::pipeline::{cmd_ablate, cmd_answer, cmd_evaluate, cmd_extract, cmd_ground, RunConfig};
use dsg::qa::AnswerMode;
use dsg::Error;

#[derive(Parser)]
#[command(
    name = "dsg",
    version,
    about = "Schema extraction, grounding and schema-augmented VQA"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the schema of an abstract concept to <out>/<concept>.schema.
    Extract {
        concept: String,
        /// Copy the bundled schema instead of asking a model.
        #[arg(long)]
        canonical: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Ground a schema on an image and write the resolved schema JSON.
    Ground {
        schema: PathBuf,
        image: PathBuf,
        /// Ground every component independently of its dependencies.
        #[arg(long)]
        sequential: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Answer every manifest question and write predictions-<mode>.jsonl.
    Answer(RunArgs),
    /// Answer and score, writing report-<mode>.json and table.txt.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        /// Score these prediction files instead of querying a backend.
        #[arg(long = "predictions")]
        predictions: Vec<PathBuf>,
        /// Add the leave-each-out annotator row.
        #[arg(long)]
        human: bool,
    },
    /// Evaluate all five answer modes and write the ablation grid.
    Ablate(RunArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    backend_config: Option<PathBuf>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Backend id for the vision-language model (or the extractor, for `extract`).
    #[arg(long)]
    backend: Option<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use the bundled schema when model extraction fails.
    #[arg(long)]
    fallback_canonical: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long = "mode", default_values_t = vec![AnswerMode::FullDsg])]
    modes: Vec<AnswerMode>,
    #[arg(long, default_value_t = 1)]
    runs: u32,
    #[arg(long, value_enum, default_value_t = Metric::Exact)]
    metric: Metric,
    #[arg(long, default_value_t = 4)]
    concurrency: usize,
    #[arg(long, overrides_with = "free_response")]
    multiple_choice: bool,
    #[arg(long, overrides_with = "multiple_choice")]
    free_response: bool,
    /// Backend id for schema extraction; bundled schemas are used when omitted.
    #[arg(long)]
    schema_backend: Option<String>,
    /// Only use the first N manifest instances.
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Exact,
    Graded,
}

impl Common {
    fn config(self) -> RunConfig {
        RunConfig {
            backend_config: self.backend_config,
            cache_dir: self.cache_dir,
            backend: self.backend,
            out: self.out,
            seed: self.seed,
            fallback_to_canonical: self.fallback_canonical,
            ..RunConfig::default()
        }
    }
}

impl RunArgs {
    fn config(self) -> RunConfig {
        RunConfig {
            manifest: Some(self.manifest),
            modes: self.modes,
            runs: self.runs,
            metric: match self.metric {
                Metric::Exact => MetricKind::ExactMatch,
                Metric::Graded => MetricKind::Graded,
            },
            concurrency: self.concurrency,
            multiple_choice: !self.free_response,
            schema_backend: self.schema_backend,
            limit: self.limit,
            ..self.common.config()
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Extract {
            concept,
            canonical,
            common,
        } => {
            let path = cmd_extract(&concept, canonical, &common.config())?;
            println!("{}", path.display());
        }
        Command::Ground {
            schema,
            image,
            sequential,
            common,
        } => {
            let path = cmd_ground(&schema, &image, sequential, &common.config())?;
            println!("{}", path.display());
        }
        Command::Answer(args) => {
            for path in cmd_answer(&args.config())? {
                println!("{}", path.display());
            }
        }
        Command::Evaluate {
            run,
            predictions,
            human,
        } => {
            let cfg = RunConfig {
                predictions,
                human_row: human,
                ..run.config()
            };
            print!("{}", cmd_evaluate(&cfg)?.table);
        }
        Command::Ablate(args) => print!("{}", cmd_ablate(&args.config())?.table),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.class_name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
