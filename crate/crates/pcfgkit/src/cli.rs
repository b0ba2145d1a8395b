//! Command-line entry point: `sample`, `score`, `stats`, `compare`,
//! `pos-div`. Numeric options may come from a TOML config file; flags given
//! on the command line win. Primary output goes to `--out` (stdout when
//! omitted); a one-line JSON summary footer goes to stderr.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use crate::compare::{self, PosClassMap, Vocabulary};
use crate::corpus::{self, CorpusFormat};
use crate::grammar::Grammar;
use crate::sampler::{generate_corpus, CorpusSpec};
use crate::score::{self, InputSentence, Objective, ScoreFile};
use crate::stats;

#[derive(Parser)]
#[command(
    name = "pcfgkit",
    version,
    about = "Treat a PCFG as a known language source: sample corpora, compute \
             exact token probabilities, and compare LM scores against them"
)]
struct Cli {
    /// TOML file supplying defaults for numeric options (flags override it)
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GrammarArgs {
    /// Rule file (binary/unary rules plus the !start declaration)
    #[arg(long, value_name = "FILE")]
    grammar: PathBuf,
    /// Lexicon file (TAG token PROB lines)
    #[arg(long, value_name = "FILE")]
    lexicon: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Sample train/dev/test/eval splits, disjoint across splits
    Sample {
        #[command(flatten)]
        grammar: GrammarArgs,
        /// Output directory for split files and report.json
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        train: Option<usize>,
        #[arg(long)]
        dev: Option<usize>,
        #[arg(long)]
        test: Option<usize>,
        #[arg(long)]
        eval: Option<usize>,
        #[arg(long = "min-len")]
        min_len: Option<usize>,
        #[arg(long = "max-len")]
        max_len: Option<usize>,
        /// Rule-expansion cap per derivation before it counts as a depth
        /// rejection
        #[arg(long = "max-expansions")]
        max_expansions: Option<u32>,
        /// Attempt budget per sentence slot
        #[arg(long = "max-attempts")]
        max_attempts: Option<u32>,
    },
    /// Exact per-token log-probabilities of a corpus under the grammar
    Score {
        #[command(flatten)]
        grammar: GrammarArgs,
        /// Corpus file, one sentence per line
        #[arg(long, value_name = "FILE")]
        corpus: PathBuf,
        /// masked: P(w_i | rest of sentence); causal: P(w_i | prefix)
        #[arg(long, default_value = "masked")]
        objective: Objective,
        /// JSONL destination (stdout when omitted)
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Corpus lines are token/TAG pairs; tags pass through to the output
        #[arg(long)]
        tagged: bool,
        /// Drop chart/parser items below this probability (0 = exact)
        #[arg(long)]
        prune: Option<f64>,
    },
    /// Corpus-shape diagnostics
    Stats {
        #[arg(long, value_name = "FILE")]
        corpus: PathBuf,
        /// zipf: split-half rank-frequency MLE; lengths: sentence-length
        /// histogram; ngram: rank correlation against --corpus-b
        #[arg(long)]
        analysis: Analysis,
        /// Second corpus for the ngram analysis
        #[arg(long = "corpus-b", value_name = "FILE")]
        corpus_b: Option<PathBuf>,
        /// n-gram order
        #[arg(long)]
        n: Option<usize>,
        /// JSON report destination (stdout when omitted)
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Also write a gnuplot-ready TSV data file
        #[arg(long, value_name = "FILE")]
        plot: Option<PathBuf>,
    },
    /// Metrics of LM score files against grammar scores; several LM files
    /// form a checkpoint series
    Compare {
        /// Grammar-truth score file (JSONL)
        #[arg(value_name = "GRAMMAR_SCORES")]
        grammar_scores: PathBuf,
        /// LM score files, in checkpoint order
        #[arg(value_name = "LM_SCORES", num_args = 1..)]
        lm_scores: Vec<PathBuf>,
        /// POS class map TSV (default: built-in 7-class treebank map)
        #[arg(long, value_name = "FILE")]
        map: Option<PathBuf>,
        /// Training corpus for the frequency-threshold vocabulary; tokens
        /// below --min-freq are skipped as unk
        #[arg(long, value_name = "FILE")]
        corpus: Option<PathBuf>,
        #[arg(long = "min-freq")]
        min_freq: Option<u64>,
        /// JSON destination (stdout when omitted)
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Also write the metric table as TSV
        #[arg(long, value_name = "FILE")]
        tsv: Option<PathBuf>,
    },
    /// Per-POS-class divergence of one LM score file from grammar scores
    PosDiv {
        #[arg(value_name = "GRAMMAR_SCORES")]
        grammar_scores: PathBuf,
        #[arg(value_name = "LM_SCORES")]
        lm_scores: PathBuf,
        /// POS class map TSV (default: built-in 7-class treebank map)
        #[arg(long, value_name = "FILE")]
        map: Option<PathBuf>,
        /// JSON destination (stdout when omitted)
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Analysis {
    Zipf,
    Lengths,
    Ngram,
}

/// Defaults file; every field optional, flags take precedence.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    threads: Option<usize>,
    train: Option<usize>,
    dev: Option<usize>,
    test: Option<usize>,
    eval: Option<usize>,
    min_len: Option<usize>,
    max_len: Option<usize>,
    prune: Option<f64>,
    n: Option<usize>,
    min_freq: Option<u64>,
    max_expansions: Option<u32>,
    max_attempts: Option<u32>,
}

fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn load_grammar(args: &GrammarArgs) -> Result<Grammar> {
    let rules = fs::read_to_string(&args.grammar)
        .with_context(|| format!("reading grammar {}", args.grammar.display()))?;
    let lexicon = fs::read_to_string(&args.lexicon)
        .with_context(|| format!("reading lexicon {}", args.lexicon.display()))?;
    Ok(Grammar::parse(&rules, &lexicon)?)
}

/// Write to the given path, or to stdout when no path is given.
fn emit(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        Some(p) => {
            fs::write(p, content).with_context(|| format!("writing {}", p.display()))?;
        }
        None => {
            print!("{content}");
            std::io::stdout().flush()?;
        }
    }
    Ok(())
}

fn footer(value: serde_json::Value) {
    eprintln!("{value}");
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            let message = format!("{e:#}");
            eprintln!("{}", json!({"status": "error", "message": message}));
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    let threads = pick(cli.threads, cfg.threads, 0);
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring thread pool")?;
    }
    match cli.command {
        Command::Sample {
            grammar,
            out,
            seed,
            train,
            dev,
            test,
            eval,
            min_len,
            max_len,
            max_expansions,
            max_attempts,
        } => cmd_sample(
            &grammar,
            &out,
            CorpusSpec {
                train: pick(train, cfg.train, 1000),
                dev: pick(dev, cfg.dev, 0),
                test: pick(test, cfg.test, 0),
                eval: pick(eval, cfg.eval, 0),
                min_len: pick(min_len, cfg.min_len, 1),
                max_len: pick(max_len, cfg.max_len, usize::MAX),
                seed: pick(seed, cfg.seed, 0),
                max_rule_expansions: pick(max_expansions, cfg.max_expansions, 10_000),
                max_attempts: pick(max_attempts, cfg.max_attempts, 10_000),
            },
        ),
        Command::Score {
            grammar,
            corpus,
            objective,
            out,
            tagged,
            prune,
        } => {
            let prune = pick(prune, cfg.prune, 0.0);
            cmd_score(&grammar, &corpus, objective, out.as_deref(), tagged, prune)
        }
        Command::Stats {
            corpus,
            analysis,
            corpus_b,
            n,
            out,
            plot,
        } => cmd_stats(
            &corpus,
            analysis,
            corpus_b.as_deref(),
            pick(n, cfg.n, 2),
            out.as_deref(),
            plot.as_deref(),
        ),
        Command::Compare {
            grammar_scores,
            lm_scores,
            map,
            corpus,
            min_freq,
            out,
            tsv,
        } => cmd_compare(
            &grammar_scores,
            &lm_scores,
            map.as_deref(),
            corpus.as_deref(),
            pick(min_freq, cfg.min_freq, 5),
            out.as_deref(),
            tsv.as_deref(),
        ),
        Command::PosDiv {
            grammar_scores,
            lm_scores,
            map,
            out,
        } => cmd_pos_div(&grammar_scores, &lm_scores, map.as_deref(), out.as_deref()),
    }
}

fn cmd_sample(grammar: &GrammarArgs, out: &Path, spec: CorpusSpec) -> Result<()> {
    if spec.min_len > spec.max_len {
        bail!("min-len {} exceeds max-len {}", spec.min_len, spec.max_len);
    }
    let g = load_grammar(grammar)?;
    let (splits, report) = generate_corpus(&g, &spec)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for split in &splits {
        if split.sentences.is_empty() {
            continue;
        }
        for format in [CorpusFormat::Tokens, CorpusFormat::Tagged, CorpusFormat::Trees] {
            let path = out.join(format!("{}.{}", split.name, format.extension()));
            corpus::write_split(&path, &g, &split.sentences, format)
                .with_context(|| format!("writing {}", path.display()))?;
        }
    }
    let report_json = serde_json::to_string_pretty(&report)?;
    fs::write(out.join("report.json"), report_json)?;
    footer(json!({
        "status": "ok",
        "command": "sample",
        "seed": report.seed,
        "out": out.display().to_string(),
        "generated": report.splits.iter()
            .map(|(k, v)| (k.clone(), v.generated))
            .collect::<std::collections::BTreeMap<_, _>>(),
    }));
    Ok(())
}

fn read_input_sentences(path: &Path, tagged: bool) -> Result<Vec<InputSentence>> {
    if tagged {
        Ok(corpus::read_tagged(path)
            .with_context(|| format!("reading {}", path.display()))?
            .into_iter()
            .map(InputSentence::tagged)
            .collect())
    } else {
        Ok(corpus::read_tokens(path)
            .with_context(|| format!("reading {}", path.display()))?
            .into_iter()
            .map(InputSentence::untagged)
            .collect())
    }
}

fn cmd_score(
    grammar: &GrammarArgs,
    corpus_path: &Path,
    objective: Objective,
    out: Option<&Path>,
    tagged: bool,
    prune: f64,
) -> Result<()> {
    let g = load_grammar(grammar)?;
    let sentences = read_input_sentences(corpus_path, tagged)?;
    let prune = (prune > 0.0).then_some(prune);
    let records = score::score_corpus(&g, &sentences, objective, prune)?;

    let mut buf = Vec::new();
    score::write_score_records(&mut buf, &records)?;
    emit(out, std::str::from_utf8(&buf).expect("JSONL is UTF-8"))?;

    let total_logp: f64 = records.iter().map(|r| r.logp).sum();
    footer(json!({
        "status": "ok",
        "command": "score",
        "objective": objective.as_str(),
        "sentences": sentences.len(),
        "tokens": records.len(),
        "total_logp": total_logp,
        "corpus_ppl": score::corpus_perplexity(&records),
    }));
    Ok(())
}

fn cmd_stats(
    corpus_path: &Path,
    analysis: Analysis,
    corpus_b: Option<&Path>,
    n: usize,
    out: Option<&Path>,
    plot: Option<&Path>,
) -> Result<()> {
    let sentences = corpus::read_tokens(corpus_path)?;
    let (report, plot_data, label) = match analysis {
        Analysis::Lengths => {
            let hist = stats::sentence_length_histogram(&sentences)?;
            let mut tsv = String::from("length\tproportion\n");
            for (len, p) in &hist {
                tsv.push_str(&format!("{len}\t{p:.8}\n"));
            }
            (
                json!({"analysis": "lengths", "sentences": sentences.len(), "histogram": hist}),
                tsv,
                "lengths",
            )
        }
        Analysis::Zipf => {
            let (ranks, freq) = stats::split_half_rank_freq(&sentences)?;
            let fit = stats::fit_zipf_mandelbrot(&ranks, &freq)?;
            let mut tsv = String::from("rank\tcount\tfitted\tresidual\n");
            for ((&rank, &count), &resid) in
                fit.ranks.iter().zip(&fit.counts).zip(&fit.residuals)
            {
                let fitted = (count as f64).ln() - resid;
                tsv.push_str(&format!(
                    "{rank}\t{count}\t{:.6}\t{resid:.6}\n",
                    fitted.exp()
                ));
            }
            let max_abs = fit.residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
            let mean_abs =
                fit.residuals.iter().map(|r| r.abs()).sum::<f64>() / fit.residuals.len() as f64;
            (
                json!({
                    "analysis": "zipf",
                    "alpha": fit.alpha,
                    "beta": fit.beta,
                    "loglik": fit.loglik,
                    "n_ranks": fit.ranks.len(),
                    "flatness_warning": fit.flatness_warning,
                    "residual_max_abs": max_abs,
                    "residual_mean_abs": mean_abs,
                }),
                tsv,
                "zipf",
            )
        }
        Analysis::Ngram => {
            let Some(path_b) = corpus_b else {
                bail!("--analysis ngram needs --corpus-b");
            };
            let other = corpus::read_tokens(path_b)?;
            let rho = stats::ngram_spearman(&sentences, &other, n)?;
            (
                json!({"analysis": "ngram", "n": n, "spearman": rho}),
                format!("n\tspearman\n{n}\t{rho:.6}\n"),
                "ngram",
            )
        }
    };
    emit(out, &format!("{}\n", serde_json::to_string_pretty(&report)?))?;
    if let Some(p) = plot {
        fs::write(p, plot_data).with_context(|| format!("writing {}", p.display()))?;
    }
    footer(json!({"status": "ok", "command": "stats", "analysis": label}));
    Ok(())
}

fn load_vocab(corpus_path: Option<&Path>, min_freq: u64) -> Result<Option<Vocabulary>> {
    match corpus_path {
        None => Ok(None),
        Some(p) => {
            let sentences = corpus::read_tokens(p)?;
            Ok(Some(compare::build_vocab(&sentences, min_freq)))
        }
    }
}

fn load_map(path: Option<&Path>) -> Result<PosClassMap> {
    Ok(match path {
        Some(p) => PosClassMap::from_path(p)?,
        None => PosClassMap::builtin(),
    })
}

fn cmd_compare(
    grammar_scores: &Path,
    lm_scores: &[PathBuf],
    map: Option<&Path>,
    vocab_corpus: Option<&Path>,
    min_freq: u64,
    out: Option<&Path>,
    tsv: Option<&Path>,
) -> Result<()> {
    let grammar = score::read_score_path(grammar_scores)?;
    let checkpoints: Vec<ScoreFile> = lm_scores
        .iter()
        .map(|p| score::read_score_path(p))
        .collect::<Result<_, _>>()?;
    let vocab = load_vocab(vocab_corpus, min_freq)?;
    let map = load_map(map)?;

    let series = compare::checkpoint_series(&checkpoints, &grammar, vocab.as_ref(), &map)?;
    emit(out, &format!("{}\n", serde_json::to_string_pretty(&series)?))?;
    if let Some(p) = tsv {
        fs::write(p, series.to_tsv()).with_context(|| format!("writing {}", p.display()))?;
    }
    let last = series.rows.last().expect("at least one checkpoint");
    footer(json!({
        "status": "ok",
        "command": "compare",
        "checkpoints": series.rows.len(),
        "matched": last.matched,
        "spearman": last.spearman,
        "r_squared": last.r_squared,
        "relative_ppl": last.relative_ppl,
    }));
    Ok(())
}

fn cmd_pos_div(
    grammar_scores: &Path,
    lm_scores: &Path,
    map: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let grammar = score::read_score_path(grammar_scores)?;
    let lm = score::read_score_path(lm_scores)?;
    let map = load_map(map)?;
    let report = compare::align(&grammar, &lm, None)?;
    let divergence = compare::pos_divergence(&report, &map)?;
    let payload = json!({
        "lm": lm.label,
        "matched": report.matched(),
        "skipped_missing": report.skipped_missing,
        "divergence": divergence,
    });
    emit(out, &format!("{}\n", serde_json::to_string_pretty(&payload)?))?;
    footer(json!({
        "status": "ok",
        "command": "pos-div",
        "matched": report.matched(),
        "classes": divergence.len(),
    }));
    Ok(())
}
