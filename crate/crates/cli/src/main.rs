mod config;
mod output;

use std::io::{BufRead, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use protolens::analysis::{attention_summary, extract_embeddings, language_frequencies, ward_clustering, Normalize};
use protolens::corpus::{
    apply_variant, parse_dataset, parse_row, serialize_dataset, split, CognateSet, DatasetVariant, Language,
    Mode, Symbol, Vocabulary,
};
use protolens::metrics::{report_with, substitution_csv, substitution_matrix, Normalization};
use protolens::model::Checkpoint;
use protolens::rules::{builtin_rules, make_rule_testset, parse_rules, score_rule_prediction, RuleReport};
use protolens::train::{evaluate_params, log_csv, train};

use config::RunConfig;
use output::{read_input, write_report, Manifest, OutDir};

#[derive(Parser)]
#[command(name = "protolens", version, about = "Reconstruct Latin proto-words from Romance cognates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Orth,
    Ipa,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Orth => Mode::Orthographic,
            ModeArg::Ipa => Mode::Phonetic,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    Gold,
    Prediction,
}

#[derive(Clone, Copy, ValueEnum)]
enum AttnNormArg {
    LanguageFrequency,
    RowOnly,
}

#[derive(Subcommand)]
enum Command {
    /// Derive a dataset variant, split it and build the vocabulary.
    Prepare {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// orth, ipa, orth_length, ipa_length or no_contrast; defaults to the mode itself.
        #[arg(long)]
        variant: Option<String>,
        #[arg(long, default_value = "0.80,0.08,0.12")]
        split: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a prepared directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override one config value, e.g. --set learning_rate=0.003.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a model (or a file of predictions) on a dataset.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, required_unless_present = "predictions")]
        ckpt: Option<PathBuf>,
        /// One predicted word per line, scored instead of decoding.
        #[arg(long, conflicts_with = "ckpt")]
        predictions: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, value_enum, default_value = "gold")]
        normalize: NormArg,
        /// Write gold/prediction substitution counts as CSV.
        #[arg(long)]
        substitutions: Option<PathBuf>,
        #[arg(long, requires = "substitutions")]
        exclude_singletons: bool,
    },
    /// Read cognate rows from stdin (or --input) and print one reconstruction per row.
    Reconstruct {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Check the model against the sound-change test rows.
    Rules {
        #[arg(long, required_unless_present = "echo_gold")]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Score the gold forms themselves instead of model output.
        #[arg(long, conflicts_with = "ckpt")]
        echo_gold: bool,
        #[arg(long)]
        report: PathBuf,
    },
    /// Export symbol representations for one language and cluster them.
    Embeddings {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        lang: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize which daughter language the decoder attends to.
    Attention {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "language-frequency")]
        normalize: AttnNormArg,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            return fail("usage", e.render().to_string().trim(), 2);
        }
    };
    if let Err(e) = configure_threads().and_then(|()| run(cli.command)) {
        if let Some(u) = e.downcast_ref::<UsageError>() {
            return fail("usage", &u.0, 2);
        }
        return fail("runtime", &format!("{e:#}"), 1);
    }
    ExitCode::SUCCESS
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    let line = serde_json::json!({ "error": kind, "message": message });
    eprintln!("{line}");
    ExitCode::from(code)
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("PROTOLENS_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| UsageError(format!("PROTOLENS_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Prepare {
            input,
            mode,
            variant,
            split,
            seed,
            out,
        } => prepare(&input, mode.into(), variant.as_deref(), &split, seed, &out),
        Command::Train {
            data,
            config,
            overrides,
            out,
        } => run_train(&data, config.as_deref(), &overrides, &out),
        Command::Eval {
            data,
            ckpt,
            predictions,
            report,
            normalize,
            substitutions,
            exclude_singletons,
        } => {
            let by = match normalize {
                NormArg::Gold => Normalization::Gold,
                NormArg::Prediction => Normalization::Prediction,
            };
            eval(
                &data,
                ckpt.as_deref(),
                predictions.as_deref(),
                &report,
                by,
                substitutions.as_deref(),
                exclude_singletons,
            )
        }
        Command::Reconstruct { ckpt, input } => reconstruct(&ckpt, input.as_deref()),
        Command::Rules {
            ckpt,
            rules,
            echo_gold,
            report,
        } => run_rules(ckpt.as_deref(), rules.as_deref(), echo_gold, &report),
        Command::Embeddings { ckpt, lang, out } => embeddings(&ckpt, &lang, &out),
        Command::Attention {
            ckpt,
            data,
            out,
            normalize,
        } => {
            let normalize = match normalize {
                AttnNormArg::LanguageFrequency => Normalize::LanguageFrequency,
                AttnNormArg::RowOnly => Normalize::RowOnly,
            };
            attention(&ckpt, &data, &out, normalize)
        }
    }
}

fn read_text(path: &Path) -> Result<(String, Vec<u8>)> {
    let bytes = read_input(path)?;
    let text = String::from_utf8(bytes.clone()).with_context(|| format!("{} is not UTF-8", path.display()))?;
    Ok((text, bytes))
}

fn read_sets(path: &Path, manifest: &mut Manifest) -> Result<Vec<CognateSet>> {
    let (text, bytes) = read_text(path)?;
    manifest.input(path, &bytes);
    // The mode only labels a dataset; parsing is the same for both.
    let ds = parse_dataset(&text, Mode::Orthographic).with_context(|| format!("parsing {}", path.display()))?;
    Ok(ds.sets)
}

/// Accepts a checkpoint file or a training output directory.
fn load_ckpt(path: &Path, manifest: &mut Manifest) -> Result<Checkpoint> {
    let file = if path.is_dir() { path.join("model.ckpt") } else { path.to_path_buf() };
    let bytes = read_input(&file)?;
    manifest.input(&file, &bytes);
    Checkpoint::from_bytes(&bytes).with_context(|| format!("loading {}", file.display()))
}

fn parse_ratios(s: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = s.split(',').collect();
    let bad = || UsageError(format!("--split expects three comma-separated ratios, got {s:?}"));
    if parts.len() != 3 {
        return Err(bad().into());
    }
    let mut r = [0.0; 3];
    for (slot, p) in r.iter_mut().zip(parts) {
        *slot = p.trim().parse().map_err(|_| bad())?;
    }
    Ok(r)
}

fn prepare(input: &Path, mode: Mode, variant: Option<&str>, ratios: &str, seed: u64, out: &Path) -> Result<()> {
    let variant = match variant {
        None => match mode {
            Mode::Orthographic => DatasetVariant::Orthographic,
            Mode::Phonetic => DatasetVariant::Phonetic,
        },
        Some(v) => v.parse::<DatasetVariant>().map_err(|e| UsageError(e.to_string()))?,
    };
    if variant.mode() != mode {
        return Err(UsageError(format!("variant {variant} requires --mode {}", mode_flag(variant.mode()))).into());
    }
    let ratios_parsed = parse_ratios(ratios)?;
    let mut manifest = Manifest::new("prepare");
    let (text, bytes) = read_text(input)?;
    manifest.input(input, &bytes);
    let ds = parse_dataset(&text, mode).with_context(|| format!("parsing {}", input.display()))?;
    let ds = apply_variant(&ds, variant)?;
    let parts = split(&ds, ratios_parsed, seed)?;
    let vocab = Vocabulary::build(&parts.train);
    manifest
        .config("mode", mode_flag(mode))
        .config("variant", variant)
        .config("split", format!("{},{},{}", ratios_parsed[0], ratios_parsed[1], ratios_parsed[2]))
        .config("seed", seed)
        .config("sizes", format!("{},{},{}", parts.train.len(), parts.dev.len(), parts.test.len()));
    let mut dir = OutDir::new(out);
    dir.add("train.tsv", serialize_dataset(&parts.train));
    dir.add("dev.tsv", serialize_dataset(&parts.dev));
    dir.add("test.tsv", serialize_dataset(&parts.test));
    dir.add("vocab.json", vocab.to_json());
    dir.finish(manifest)?;
    println!(
        "train {} / dev {} / test {} ({} symbols) -> {}",
        parts.train.len(),
        parts.dev.len(),
        parts.test.len(),
        vocab.len(),
        out.display()
    );
    Ok(())
}

fn mode_flag(mode: Mode) -> &'static str {
    match mode {
        Mode::Orthographic => "orth",
        Mode::Phonetic => "ipa",
    }
}

fn run_train(data: &Path, config: Option<&Path>, overrides: &[String], out: &Path) -> Result<()> {
    let mut manifest = Manifest::new("train");
    let mut cfg = RunConfig::default();
    if let Some(path) = config {
        let (text, bytes) = read_text(path)?;
        manifest.input(path, &bytes);
        cfg.apply_text(&text)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(|e| UsageError(format!("{e:#}")))?;
    }
    for o in overrides {
        cfg.apply_override(o).map_err(|e| UsageError(format!("{e:#}")))?;
    }
    let train_sets = read_sets(&data.join("train.tsv"), &mut manifest)?;
    let dev_sets = read_sets(&data.join("dev.tsv"), &mut manifest)?;
    let vocab_path = data.join("vocab.json");
    let (vocab_text, vocab_bytes) = read_text(&vocab_path)?;
    manifest.input(&vocab_path, &vocab_bytes);
    let vocab = Vocabulary::from_json(&vocab_text)?;
    for (k, v) in cfg.pairs() {
        manifest.config(k, v);
    }
    let outcome = train(&train_sets, &dev_sets, vocab, cfg.model, cfg.train, |e| {
        let dev = match (e.dev_avg_edit, e.dev_exact_rate) {
            (Some(avg), Some(exact)) => format!(" dev_avg {avg:.4} dev_exact {:.1}%", 100.0 * exact),
            _ => String::new(),
        };
        eprintln!("epoch {:>3} loss {:.4}{dev}", e.epoch, e.train_loss);
    })?;
    manifest.config("best_epoch", outcome.best_epoch);
    let mut dir = OutDir::new(out);
    dir.add("model.ckpt", outcome.checkpoint.to_bytes());
    dir.add("train_log.csv", log_csv(&outcome.log));
    dir.finish(manifest)?;
    println!(
        "trained {} epochs, best epoch {} -> {}",
        outcome.log.len(),
        outcome.best_epoch,
        out.join("model.ckpt").display()
    );
    Ok(())
}

fn word_string(w: &[Symbol]) -> String {
    w.iter().map(|s| s.0).collect()
}

fn eval(
    data: &Path,
    ckpt: Option<&Path>,
    predictions: Option<&Path>,
    report_path: &Path,
    by: Normalization,
    substitutions: Option<&Path>,
    exclude_singletons: bool,
) -> Result<()> {
    let mut manifest = Manifest::new("eval");
    let sets = read_sets(data, &mut manifest)?;
    let (preds, truncated) = match (ckpt, predictions) {
        (Some(path), _) => {
            let ckpt = load_ckpt(path, &mut manifest)?;
            let e = evaluate_params(&ckpt.params, &ckpt.vocab, &sets, by)?;
            (e.predictions, Some(e.truncated))
        }
        (None, Some(path)) => {
            let (text, bytes) = read_text(path)?;
            manifest.input(path, &bytes);
            let preds: Vec<Vec<Symbol>> = text.lines().map(|l| l.trim_end_matches('\r').chars().map(Symbol).collect()).collect();
            if preds.len() != sets.len() {
                bail!("{} has {} predictions for {} entries", path.display(), preds.len(), sets.len());
            }
            (preds, None)
        }
        (None, None) => return Err(UsageError("eval needs --ckpt or --predictions".into()).into()),
    };
    let pairs: Vec<(Vec<Symbol>, Vec<Symbol>)> = preds
        .iter()
        .zip(&sets)
        .map(|(p, s)| (p.clone(), s.latin().symbols().to_vec()))
        .collect();
    let report = report_with(&pairs, by)?;
    manifest.config("normalize", format!("{by:?}").to_lowercase());
    let entries: Vec<serde_json::Value> = pairs
        .iter()
        .map(|(p, g)| {
            serde_json::json!({
                "gold": word_string(g),
                "prediction": word_string(p),
                "distance": protolens::metrics::edit_distance(p, g),
            })
        })
        .collect();
    let json = serde_json::json!({
        "summary": report,
        "truncated": truncated,
        "entries": entries,
    });
    let text = serde_json::to_string_pretty(&json)? + "\n";
    write_report(report_path, text.as_bytes(), manifest)?;
    if let Some(path) = substitutions {
        let m = substitution_matrix(&pairs, |_| true, exclude_singletons);
        let mut side = Manifest::new("eval");
        side.config("exclude_singletons", exclude_singletons);
        write_report(path, substitution_csv(&m).as_bytes(), side)?;
    }
    print!("{}", report.to_table());
    Ok(())
}

fn reconstruct(ckpt_path: &Path, input: Option<&Path>) -> Result<()> {
    let mut manifest = Manifest::new("reconstruct");
    let ckpt = load_ckpt(ckpt_path, &mut manifest)?;
    let lines: Vec<String> = match input {
        Some(path) => read_text(path)?.0.lines().map(str::to_string).collect(),
        None => std::io::stdin().lock().lines().collect::<Result<_, _>>()?,
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for (i, line) in lines.iter().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let set = parse_query_row(line, i + 1)?;
        let decoded = ckpt.params.greedy_decode(&ckpt.vocab.encode_lossy(&set))?;
        let word: String = decoded.ids.iter().filter_map(|&id| ckpt.vocab.symbol(id)).map(|s| s.0).collect();
        writeln!(out, "{word}")?;
    }
    Ok(())
}

/// Five daughter cells, optionally followed by a Latin cell that is ignored.
fn parse_query_row(line: &str, n: usize) -> Result<CognateSet> {
    let cols = line.split('\t').count();
    let row = match cols {
        5 => format!("{line}\ta"),
        6 => line.to_string(),
        _ => bail!("line {n}: expected 5 or 6 tab-separated columns, found {cols}"),
    };
    Ok(parse_row(&row, n)?)
}

fn run_rules(ckpt: Option<&Path>, rules_path: Option<&Path>, echo_gold: bool, report_path: &Path) -> Result<()> {
    let mut manifest = Manifest::new("rules");
    let rules = match rules_path {
        Some(path) => {
            let (text, bytes) = read_text(path)?;
            manifest.input(path, &bytes);
            parse_rules(&text)?
        }
        None => builtin_rules(),
    };
    let predictions: Vec<Vec<Symbol>> = if echo_gold {
        manifest.config("echo_gold", true);
        rules.iter().map(|r| r.gold.symbols().to_vec()).collect()
    } else {
        let path = ckpt.ok_or_else(|| UsageError("rules needs --ckpt or --echo-gold".into()))?;
        let ckpt = load_ckpt(path, &mut manifest)?;
        make_rule_testset(&rules)
            .par_iter()
            .map(|s| {
                let d = ckpt.params.greedy_decode(&ckpt.vocab.encode_lossy(s))?;
                Ok(d.ids.iter().filter_map(|&id| ckpt.vocab.symbol(id)).collect())
            })
            .collect::<Result<_>>()?
    };
    let outcomes = rules.iter().zip(&predictions).map(|(r, p)| score_rule_prediction(r, p)).collect();
    let report = RuleReport::new(&rules, outcomes);
    write_report(report_path, (report.to_json() + "\n").as_bytes(), manifest)?;
    for o in &report.outcomes {
        println!("{}\t{}\t{}\t{}", o.id, if o.passed { "pass" } else { "fail" }, o.prediction, o.rule);
    }
    println!("{}/{} rules pass", report.passed, report.total);
    Ok(())
}

fn embeddings(ckpt_path: &Path, lang: &str, out: &Path) -> Result<()> {
    let lang: Language = lang.parse().map_err(|e: protolens::corpus::CorpusError| UsageError(e.to_string()))?;
    let mut manifest = Manifest::new("embeddings");
    let ckpt = load_ckpt(ckpt_path, &mut manifest)?;
    manifest.config("lang", lang.code());
    let (symbols, rows) = extract_embeddings(&ckpt, lang)?;
    let mut tsv = String::new();
    for (s, row) in symbols.iter().zip(&rows) {
        tsv.push(s.0);
        for x in row {
            tsv.push('\t');
            tsv.push_str(&x.to_string());
        }
        tsv.push('\n');
    }
    let labels = symbols.iter().map(|s| s.0.to_string()).collect();
    let tree = ward_clustering(&rows, labels)?;
    let mut dir = OutDir::new(out);
    dir.add("embeddings.tsv", tsv);
    dir.add("dendrogram.nwk", tree.to_newick() + "\n");
    dir.add("dendrogram.json", tree.to_json() + "\n");
    dir.finish(manifest)?;
    print!("{}", tree.to_table());
    Ok(())
}

fn attention(ckpt_path: &Path, data: &Path, out: &Path, normalize: Normalize) -> Result<()> {
    let mut manifest = Manifest::new("attention");
    let ckpt = load_ckpt(ckpt_path, &mut manifest)?;
    let sets = read_sets(data, &mut manifest)?;
    if sets.is_empty() {
        bail!("{} has no entries", data.display());
    }
    manifest.config("normalize", format!("{normalize:?}"));
    let examples: Vec<_> = sets.iter().map(|s| ckpt.vocab.encode_lossy(s)).collect();
    let traces = examples
        .par_iter()
        .map(|ex| Ok(ckpt.params.greedy_decode(ex)?.trace))
        .collect::<Result<Vec<_>>>()?;
    let summary = attention_summary(&traces, &ckpt.vocab, language_frequencies(&examples), normalize)?;
    let mut dir = OutDir::new(out);
    dir.add("by_position.csv", summary.position_csv());
    dir.add("by_symbol.csv", summary.symbol_csv());
    dir.add("summary.json", summary.to_json() + "\n");
    dir.finish(manifest)?;
    print!("{}", summary.position_csv());
    Ok(())
}
