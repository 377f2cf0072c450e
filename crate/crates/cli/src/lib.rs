//! Command-line front end. Every subcommand is a thin wrapper over the
//! library: parse flags, call one entry point, print text or JSON.
//!
//! Exit codes: 0 success, 1 rule or I/O failure, 2 usage error.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use mutagen_core::answer::{build_category_model, CategoryModel, Css21Palette};
use mutagen_core::error::{Error, Result};
use mutagen_core::io::embeddings::read_embeddings;
use mutagen_core::io::jsonl;
use mutagen_core::lexicon::LexiconDB;
use mutagen_core::objective::{run_all, train_toy, write_trace_csv, ToyTaskConfig};
use mutagen_core::pipeline::{
    run_stats, train_answer_vocabulary, vocabulary_closure_check, PipelineConfig,
};
use mutagen_core::Scalar;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RULE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser)]
#[command(
    name = "mutagen",
    version,
    about = "Deterministic mutant generation for VQA corpora, with stats, \
             clustering, and objective checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate mutants for the corpus described by a config file.
    Mutate(MutateArgs),
    /// Compare a mutant corpus against the corpus it came from.
    Stats(StatsArgs),
    /// Check that every mutant answer stays inside the closed vocabulary.
    Closure(ClosureArgs),
    /// Cluster answer strings into labeled categories by embedding.
    Cluster(ClusterArgs),
    /// Verify analytic gradients against central finite differences.
    Gradcheck(GradcheckArgs),
    /// Train the bundled synthetic task end to end.
    TrainToy(TrainToyArgs),
    /// Invert a named color and print the nearest palette name.
    InvertColor(InvertColorArgs),
}

#[derive(Args)]
struct MutateArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the config file's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config file's output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Print the manifest as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct StatsArgs {
    /// Original samples (JSONL).
    #[arg(long)]
    original: PathBuf,
    /// Mutant records (JSONL).
    #[arg(long)]
    mutants: PathBuf,
    /// Answers listed per question type.
    #[arg(long, default_value_t = 5)]
    top_k: usize,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ClosureArgs {
    /// Original samples (JSONL); their answers form the train vocabulary.
    #[arg(long)]
    original: PathBuf,
    /// Mutant records (JSONL).
    #[arg(long)]
    mutants: PathBuf,
    /// Answer-category model JSON.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ClusterArgs {
    /// Text file of answers, one per line.
    #[arg(long)]
    answers: PathBuf,
    /// GloVe-format word vectors.
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Lloyd iteration cap.
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    /// Write the resulting category model here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Random instances per check.
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 20260815)]
    seed: u64,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct TrainToyArgs {
    /// TOML task configuration; defaults apply for missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the number of update steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Override the task seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the learning rate.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Write the per-step loss trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the trained state as JSON.
    #[arg(long)]
    state_out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct InvertColorArgs {
    /// Color name to invert.
    name: String,
    /// Extra `name,hex` CSV extending the built-in palette names.
    #[arg(long)]
    colors: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

/// Parses and runs, returning the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Mutate(args) => cmd_mutate(args),
        Command::Stats(args) => cmd_stats(args),
        Command::Closure(args) => cmd_closure(args),
        Command::Cluster(args) => cmd_cluster(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::TrainToy(args) => cmd_train_toy(args),
        Command::InvertColor(args) => cmd_invert_color(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RULE
        }
    }
}

fn cmd_mutate(args: MutateArgs) -> Result<i32> {
    let mut cfg = PipelineConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(output_dir) = args.output_dir {
        cfg.output_dir = output_dir;
    }
    let manifest = mutagen_core::pipeline::run_mutate(&cfg)?;
    if args.json {
        println!("{}", to_json(&manifest)?);
    } else {
        println!(
            "{} mutants from {} samples ({:.2} per sample) -> {}",
            manifest.total_records,
            manifest.input_samples,
            manifest.avg_mutants_per_sample,
            cfg.output_dir.display()
        );
        for (kind, count) in &manifest.per_kind {
            println!("  {kind}: {count}");
        }
        if !manifest.skipped.is_empty() {
            println!("skipped attempts:");
            for (reason, count) in &manifest.skipped {
                println!("  {reason}: {count}");
            }
        }
    }
    Ok(EXIT_OK)
}

fn cmd_stats(args: StatsArgs) -> Result<i32> {
    let report = run_stats(&args.original, &args.mutants, args.top_k)?;
    if args.json {
        println!("{}", to_json(&report)?);
    } else {
        print!("{report}");
    }
    Ok(EXIT_OK)
}

fn cmd_closure(args: ClosureArgs) -> Result<i32> {
    let samples = jsonl::read_samples(&args.original)?;
    let mutants = jsonl::read_mutants(&args.mutants)?;
    let model = CategoryModel::load(&args.model)?;
    let vocab = train_answer_vocabulary(&samples);
    let report = vocabulary_closure_check(&mutants, &vocab, &model, &Css21Palette::new());
    if args.json {
        println!("{}", to_json(&report)?);
    } else {
        println!("{report}");
    }
    Ok(if report.passed { EXIT_OK } else { EXIT_RULE })
}

fn cmd_cluster(args: ClusterArgs) -> Result<i32> {
    let text = fs::read_to_string(&args.answers).map_err(|e| Error::io(&args.answers, e))?;
    let answers: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|line| !line.is_empty() && !line.starts_with('#'))
        .map(str::to_string)
        .collect();
    let emb = read_embeddings(&args.embeddings)?;
    let model = build_category_model(&answers, &emb, args.k, args.seed, args.max_iters)?;
    if let Some(out) = &args.out {
        model.save(out)?;
    }
    if args.json {
        println!("{}", to_json(&model)?);
    } else {
        println!(
            "{} answers -> {} categories (dimension {})",
            answers.len(),
            model.k,
            model.dimension
        );
        for label in &model.labels {
            println!("  {label}");
        }
        if let Some(out) = &args.out {
            println!("model written to {}", out.display());
        }
    }
    Ok(EXIT_OK)
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<i32> {
    let reports = run_all(args.trials, args.seed)?;
    let all_passed = reports.iter().all(|r| r.passed());
    if args.json {
        let rows: Vec<serde_json::Value> = reports
            .iter()
            .map(|r| {
                let mut value = serde_json::to_value(r).unwrap_or_default();
                if let Some(map) = value.as_object_mut() {
                    map.insert("passed".to_string(), serde_json::Value::Bool(r.passed()));
                }
                value
            })
            .collect();
        println!(
            "{}",
            serde_json::to_string_pretty(&rows)
                .map_err(|e| Error::format("json", e.to_string()))?
        );
    } else {
        for report in &reports {
            println!("{report}");
        }
    }
    Ok(if all_passed { EXIT_OK } else { EXIT_RULE })
}

fn cmd_train_toy(args: TrainToyArgs) -> Result<i32> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            toml::from_str::<ToyTaskConfig>(&text)
                .map_err(|e| Error::format("config", e.to_string()))?
        }
        None => ToyTaskConfig::default(),
    };
    if let Some(steps) = args.steps {
        cfg.steps = steps;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(learning_rate) = args.learning_rate {
        cfg.learning_rate = learning_rate;
    }
    let (state, trace) = train_toy::<Scalar>(&cfg)?;
    let first = trace.first().expect("trace has at least one row");
    let last = trace.last().expect("trace has at least one row");
    let ratio = if first.total > 0.0 {
        last.total / first.total
    } else {
        f64::NAN
    };
    if let Some(path) = &args.trace {
        write_trace_csv(path, &trace)?;
    }
    if let Some(path) = &args.state_out {
        state.save(path)?;
    }
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&serde_json::json!({
                "steps": cfg.steps,
                "initial_total": first.total,
                "final_total": last.total,
                "ratio": ratio,
                "final_ce": last.ce,
                "final_nce": last.nce,
                "final_pw": last.pw,
            }))
            .map_err(|e| Error::format("json", e.to_string()))?
        );
    } else {
        println!(
            "total loss {:.4} -> {:.4} over {} steps (ratio {:.3})",
            first.total, last.total, cfg.steps, ratio
        );
        println!(
            "final ce {:.4}, nce {:.4}, pw {:.4}",
            last.ce, last.nce, last.pw
        );
    }
    Ok(EXIT_OK)
}

fn cmd_invert_color(args: InvertColorArgs) -> Result<i32> {
    let palette = Css21Palette::new();
    let mut db = LexiconDB::new();
    for (name, (r, g, b)) in palette.entries() {
        db.add_color(name, &format!("{r:02X}{g:02X}{b:02X}"))?;
    }
    if let Some(path) = &args.colors {
        db.load_colors(path)?;
    }
    let inverted = mutagen_core::answer::invert_color_answer(&args.name, &db, &palette)?;
    if args.json {
        println!(
            "{}",
            serde_json::json!({ "input": args.name, "inverted": inverted })
        );
    } else {
        println!("{inverted}");
    }
    Ok(EXIT_OK)
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::format("json", e.to_string()))
}
