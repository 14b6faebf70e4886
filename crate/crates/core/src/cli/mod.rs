//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 runtime error.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

pub use config::{load_config, parse_config, parse_spec, resolve_seed, CliConfig, SeedRecord, SEED_ENV};

use crate::alignment::{reverse_columns, CostMatrix, DtwAlgorithm};
use crate::datagen::{generate_dataset, store, Level};
use crate::error::{Error, Result};
use crate::experiment::evaluate;
use crate::textaug::{
    augment_text, build_step_kb, AugmentContext, AugmenterClient, Behavior, ExternalTransport, StepKnowledgeBase,
    TextLevel, Vocabulary,
};
use crate::trainer::{train_run, Checkpoint, CHECKPOINT_FILE, LOG_FILE};

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.json";
pub const SEED_FILE: &str = "seed.json";
pub const EVAL_REPORT_FILE: &str = "eval_report.json";

#[derive(Debug, Parser)]
#[command(name = "lecnce", version, about = "Hierarchical video-text contrastive training on synthetic procedures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    GenerateData {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// ProcedureSpec JSON file.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        n_procedures: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train the dual encoder.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on the held-out split.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        zero_shot: bool,
        #[arg(long)]
        retrieval: bool,
        #[arg(long)]
        probe: bool,
        /// Percentage of training procedures for the probe.
        #[arg(long)]
        shots: Option<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Augment JSON-lines text records.
    Augment {
        #[arg(long)]
        vocab: PathBuf,
        /// Knowledge base JSON; missing titles are generated by the recipe client.
        #[arg(long)]
        kb: Option<PathBuf>,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use the deterministic mock clients.
        #[arg(long)]
        mock: bool,
    },
    /// Align a cost matrix and print the path.
    DtwInspect {
        /// JSON array of rows.
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long, default_value = "greedy")]
        algorithm: String,
        #[arg(long)]
        reversed: bool,
    },
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenerateData {
            seed,
            out,
            spec,
            n_procedures,
            config,
        } => generate_data(seed, out, spec, n_procedures, config),
        Command::Train {
            config,
            data,
            out,
            seed,
        } => train(config, data, out, seed),
        Command::Eval {
            checkpoint,
            data,
            out,
            zero_shot,
            retrieval,
            probe,
            shots,
            config,
            seed,
        } => eval(EvalArgs {
            checkpoint,
            data,
            out,
            zero_shot,
            retrieval,
            probe,
            shots,
            config,
            seed,
        }),
        Command::Augment {
            vocab,
            kb,
            input,
            out,
            mock,
        } => augment(&vocab, kb.as_deref(), &input, &out, mock),
        Command::DtwInspect {
            matrix,
            algorithm,
            reversed,
        } => dtw_inspect(&matrix, &algorithm, reversed),
    }
}

fn base_config(path: Option<&Path>) -> Result<CliConfig> {
    match path {
        Some(p) => load_config(p),
        None => Ok(CliConfig::default()),
    }
}

fn required(value: Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    value.ok_or_else(|| Error::InvalidConfig(format!("missing --{flag} (or paths.{flag} in the config)")))
}

fn finalize(cfg: &mut CliConfig, flag_seed: Option<u64>) -> Result<SeedRecord> {
    let env = std::env::var(SEED_ENV).ok();
    let record = resolve_seed(flag_seed, env.as_deref(), cfg.seed)?;
    cfg.apply_seed(record.seed);
    cfg.validate()?;
    Ok(record)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

/// The echoed config omits the output path so that a run directory does not
/// depend on where it was written.
fn write_run_records(dir: &Path, cfg: &CliConfig, seed: &SeedRecord) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut echo = cfg.clone();
    echo.paths.out = None;
    fs::write(dir.join(RESOLVED_CONFIG_FILE), echo.to_json()?)?;
    write_json(&dir.join(SEED_FILE), seed)
}

fn generate_data(
    seed: Option<u64>,
    out: Option<PathBuf>,
    spec: Option<PathBuf>,
    n_procedures: Option<usize>,
    config: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = base_config(config.as_deref())?;
    if let Some(path) = spec {
        let (parsed, has_seed) = parse_spec(&fs::read_to_string(&path)?)?;
        if has_seed && cfg.seed.is_none() {
            cfg.seed = Some(parsed.seed);
        }
        cfg.data.spec = parsed;
    }
    if let Some(n) = n_procedures {
        cfg.data.n_procedures = n;
    }
    if out.is_some() {
        cfg.paths.out = out;
    }
    let out = required(cfg.paths.out.clone(), "out")?;
    let seed = finalize(&mut cfg, seed)?;
    let data = generate_dataset(&cfg.data.spec, cfg.data.n_procedures)?;
    store::save(&out, &data)?;
    write_run_records(&out, &cfg, &seed)?;
    println!(
        "generated {} train and {} held-out procedures (seed {}) in {}",
        data.train.procedures.len(),
        data.holdout.procedures.len(),
        seed.seed,
        out.display()
    );
    Ok(())
}

fn train(config: Option<PathBuf>, data: Option<PathBuf>, out: Option<PathBuf>, seed: Option<u64>) -> Result<()> {
    let mut cfg = base_config(config.as_deref())?;
    if data.is_some() {
        cfg.paths.data = data;
    }
    if out.is_some() {
        cfg.paths.out = out;
    }
    let data_dir = required(cfg.paths.data.clone(), "data")?;
    let out = required(cfg.paths.out.clone(), "out")?;
    let seed = finalize(&mut cfg, seed)?;
    let data = store::load(&data_dir)?;
    write_run_records(&out, &cfg, &seed)?;
    let outcome = train_run(&cfg.train, &data.train, Some(&out))?;
    let clip = outcome.log.level_totals(Level::Clip);
    let summary = |v: &[f64]| v.last().map_or("n/a".to_string(), |x| format!("{x:.4}"));
    println!(
        "trained {} steps over {} cycles; last clip loss {}; checkpoint {}, log {}",
        outcome.log.records.len(),
        cfg.train.epochs,
        summary(&clip),
        out.join(CHECKPOINT_FILE).display(),
        out.join(LOG_FILE).display()
    );
    Ok(())
}

struct EvalArgs {
    checkpoint: Option<PathBuf>,
    data: Option<PathBuf>,
    out: Option<PathBuf>,
    zero_shot: bool,
    retrieval: bool,
    probe: bool,
    shots: Option<f64>,
    config: Option<PathBuf>,
    seed: Option<u64>,
}

fn eval(args: EvalArgs) -> Result<()> {
    let mut cfg = base_config(args.config.as_deref())?;
    if args.checkpoint.is_some() {
        cfg.paths.checkpoint = args.checkpoint;
    }
    if args.data.is_some() {
        cfg.paths.data = args.data;
    }
    if args.out.is_some() {
        cfg.paths.out = args.out;
    }
    if args.zero_shot || args.retrieval || args.probe {
        cfg.eval.zero_shot = args.zero_shot;
        cfg.eval.retrieval = args.retrieval;
        cfg.eval.probe = args.probe;
    }
    if let Some(s) = args.shots {
        cfg.eval.shots_percent = s;
    }
    let ckpt_path = required(cfg.paths.checkpoint.clone(), "checkpoint")?;
    let data_dir = required(cfg.paths.data.clone(), "data")?;
    let out = required(cfg.paths.out.clone(), "out")?;
    let seed = finalize(&mut cfg, args.seed)?;
    let ckpt = Checkpoint::load(&ckpt_path)?;
    let data = store::load(&data_dir)?;
    write_run_records(&out, &cfg, &seed)?;
    let report = evaluate(&ckpt.model, &data.train, &data.holdout, &cfg.eval)?;
    write_json(&out.join(EVAL_REPORT_FILE), &report)?;
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    println!(
        "accuracy {} macro-F1 {} R@1 t2i {} i2t {} modality gap {} order discrimination {} probe accuracy {}",
        fmt(report.accuracy),
        fmt(report.macro_f1),
        fmt(report.recall.as_ref().and_then(|r| r.t2i.get("1").copied())),
        fmt(report.recall.as_ref().and_then(|r| r.i2t.get("1").copied())),
        fmt(report.modality_gap),
        fmt(report.order_discrimination),
        fmt(report.probe.as_ref().map(|p| p.accuracy)),
    );
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AugmentRecord {
    text: String,
    level: TextLevel,
    #[serde(default)]
    title: Option<String>,
}

fn augment(vocab: &Path, kb: Option<&Path>, input: &Path, out: &Path, mock: bool) -> Result<()> {
    let vocab = Vocabulary::load(vocab)?;
    let mut kb = match kb {
        Some(p) => StepKnowledgeBase::load(p)?,
        None => StepKnowledgeBase::default(),
    };
    let client = |b: Behavior| {
        if mock {
            AugmenterClient::mock(b)
        } else {
            AugmenterClient::new(b, Box::new(ExternalTransport::default()))
        }
    };
    let recipe = client(Behavior::Recipe);
    let dictionary = client(Behavior::Dictionary);
    let summarizer = client(Behavior::Summarizer);

    let text = fs::read_to_string(input)?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: AugmentRecord = serde_json::from_str(line).map_err(|e| Error::ParseError {
            line: i + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        records.push(rec);
    }
    let missing: Vec<&str> = records
        .iter()
        .filter(|r| r.level == TextLevel::Narration)
        .filter_map(|r| r.title.as_deref())
        .filter(|t| kb.get(t).is_none())
        .collect();
    if !missing.is_empty() {
        let mut unique: Vec<&str> = Vec::new();
        for t in missing {
            if !unique.contains(&t) {
                unique.push(t);
            }
        }
        for (title, steps) in build_step_kb(&unique, &recipe)?.iter() {
            kb.insert(title.to_string(), steps.to_vec())?;
        }
    }
    let ctx = AugmentContext {
        vocab: &vocab,
        kb: &kb,
        dictionary: &dictionary,
        summarizer: &summarizer,
    };
    let mut buf = Vec::new();
    for r in &records {
        let a = augment_text(&r.text, r.level, r.title.as_deref(), &ctx)?;
        serde_json::to_writer(&mut buf, &a)?;
        buf.push(b'\n');
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(out, &buf)?;
    println!("augmented {} records into {}", records.len(), out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct InspectOutput {
    algorithm: &'static str,
    reversed: bool,
    cost: f64,
    path: Vec<(usize, usize)>,
}

fn dtw_inspect(matrix: &Path, algorithm: &str, reversed: bool) -> Result<()> {
    let algorithm: DtwAlgorithm = algorithm.parse()?;
    let text = fs::read_to_string(matrix)?;
    let rows: Vec<Vec<f64>> = serde_json::from_str(&text).map_err(|e| Error::ParseError {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::EmptyMatrix);
    }
    if rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(Error::InvalidConfig("matrix rows differ in length".into()));
    }
    let mut c = CostMatrix::from_rows(&rows)?;
    if reversed {
        c = reverse_columns(&c);
    }
    let r = algorithm.align(&c)?;
    let out = InspectOutput {
        algorithm: algorithm.name(),
        reversed,
        cost: r.cost,
        path: r.path,
    };
    let mut stdout = std::io::stdout().lock();
    serde_json::to_writer(&mut stdout, &out)?;
    writeln!(stdout)?;
    Ok(())
}
