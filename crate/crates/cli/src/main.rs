//! `privlens` command-line interface.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use privlens::app::{
    collect_report, emit, run_pipeline, run_stage, validate_config, AppError, Format, PipelineConfig, Stage,
};
use privlens::corpus::{load_windows, write_jsonl};
use privlens::synth::{generate, synthetic_case_series, synthetic_reports, SynthParams};
use privlens::urlsec::write_reports;

#[derive(Parser)]
#[command(name = "privlens", version, about = "Privacy, sentiment and URL-security analytics over post corpora")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

impl From<OutputFormat> for Format {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Csv => Format::Csv,
            OutputFormat::Json => Format::Json,
        }
    }
}

#[derive(Args, Clone)]
struct Common {
    /// Pipeline config (JSON).
    #[arg(short, long)]
    config: PathBuf,
    /// Worker threads; 1 is always bit-reproducible.
    #[arg(long)]
    threads: Option<usize>,
    /// Never touch the network, whatever the config says.
    #[arg(long)]
    offline: bool,
    /// Table file format.
    #[arg(long, value_enum, default_value = "csv")]
    format: OutputFormat,
    /// Write outputs here instead of the config's output directory.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum PrivacyCommand {
    /// Split the corpus and train the cluster and PII models.
    Train(Common),
    /// Score the held-out sequences against the trained models.
    Score(Common),
}

#[derive(Subcommand)]
enum Command {
    /// Load, filter and classify the corpus.
    Ingest(Common),
    /// Infection rates per lockdown window.
    Periods(Common),
    /// Hashtag clusters per country and phase.
    Hashtags(Common),
    /// LDA topics and per-post topic labels.
    Topics(Common),
    /// Sentiment distribution per topic and phase.
    Sentiment(Common),
    /// Privacy model training and scoring.
    #[command(subcommand)]
    Privacy(PrivacyCommand),
    /// Registered domains and their categories.
    Urls(Common),
    /// Scanner scores, suspicion tiers and suspicious categories.
    Vtscore(Common),
    /// Validate every table in the output directory and write metadata.
    Report(Common),
    /// Every stage in order.
    Run(Common),
    /// Check a config file and print the resolved form.
    Validate {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Write the seeded synthetic corpora, scanner reports and case series.
    Synth {
        /// Data directory holding config/windows.csv.
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
        #[arg(long, default_value_t = 20200321)]
        seed: u64,
    },
}

fn load_config(common: &Common) -> Result<(PipelineConfig, PathBuf), AppError> {
    let mut config = validate_config(&common.config)?;
    if let Some(t) = common.threads {
        if t == 0 {
            return Err(privlens::app::ConfigErrors(vec!["--threads must be at least 1".into()]).into());
        }
        config.threads = t;
    }
    if common.offline {
        config.offline = true;
    }
    if let Some(out) = &common.output {
        config.output = out.clone();
    }
    let base = common
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    Ok((config, base))
}

fn stage_command(common: &Common, stage: Option<Stage>) -> Result<(), AppError> {
    let (config, base) = load_config(common)?;
    let bundle = match stage {
        Some(stage) => run_stage(&config, &base, stage)?,
        None => run_pipeline(&config, &base)?,
    };
    let written = emit(&bundle, &config.output, common.format.into())?;
    for path in written {
        println!("{}", path.display());
    }
    Ok(())
}

fn report_command(common: &Common) -> Result<(), AppError> {
    let (config, base) = load_config(common)?;
    let bundle = collect_report(&config, &base)?;
    bundle.validate()?;
    for (name, table) in &bundle.tables {
        println!("{name}: {} rows, schema ok", table.len());
    }
    emit(&bundle, &config.output, common.format.into())?;
    Ok(())
}

fn synth_command(data_dir: &Path, seed: u64) -> anyhow::Result<()> {
    let windows = load_windows(&data_dir.join("config/windows.csv"))?;
    let corpus_dir = data_dir.join("corpus");
    std::fs::create_dir_all(&corpus_dir)?;
    for (name, params) in [
        ("synthetic_1k", SynthParams::small(seed)),
        ("heavy_tail_5k", SynthParams::heavy_tail(seed + 1)),
    ] {
        let corpus = generate(&params, &windows);
        let path = corpus_dir.join(format!("{name}.jsonl"));
        let file = std::fs::File::create(&path).with_context(|| path.display().to_string())?;
        write_jsonl(&corpus.records, std::io::BufWriter::new(file))?;
        let manifest = corpus_dir.join(format!("{name}.manifest.json"));
        std::fs::write(&manifest, serde_json::to_string_pretty(&corpus.manifest)? + "\n")?;
        println!("{} ({} records)", path.display(), corpus.records.len());
    }
    let reports = data_dir.join("urls/reports.jsonl");
    write_reports(&reports, &synthetic_reports(seed))?;
    println!("{}", reports.display());
    let cases = data_dir.join("config/cases_synthetic.csv");
    std::fs::write(&cases, synthetic_case_series(seed))?;
    println!("{}", cases.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Ingest(c) => stage_command(c, Some(Stage::Ingest)),
        Command::Periods(c) => stage_command(c, Some(Stage::Periods)),
        Command::Hashtags(c) => stage_command(c, Some(Stage::Hashtags)),
        Command::Topics(c) => stage_command(c, Some(Stage::Topics)),
        Command::Sentiment(c) => stage_command(c, Some(Stage::Sentiment)),
        Command::Privacy(PrivacyCommand::Train(c)) => stage_command(c, Some(Stage::PrivacyTrain)),
        Command::Privacy(PrivacyCommand::Score(c)) => stage_command(c, Some(Stage::PrivacyScore)),
        Command::Urls(c) => stage_command(c, Some(Stage::Urls)),
        Command::Vtscore(c) => stage_command(c, Some(Stage::VtScore)),
        Command::Report(c) => report_command(c),
        Command::Run(c) => stage_command(c, None),
        Command::Validate { config } => validate_config(config).map_err(AppError::from).map(|c| {
            println!("{}", serde_json::to_string_pretty(&c).expect("config serialises"));
        }),
        Command::Synth { data_dir, seed } => {
            return match synth_command(data_dir, *seed) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(3)
                }
            };
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
