//! Comparison of external LM score files against grammar-truth scores:
//! record alignment, rank correlation, R², relative perplexity, and
//! per-POS-class divergence, plus the same metrics across an ordered series
//! of checkpoints.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::Serialize;

use crate::score::ScoreFile;
use crate::stats::{self, token_frequencies, StatsError};

#[derive(Debug, thiserror::Error)]
pub enum CompareError {
    #[error(
        "sentence {sentence_id}, position {position}: token {grammar_token:?} in grammar scores \
         but {lm_token:?} in LM scores; the files describe different corpora"
    )]
    TokenMismatch {
        sentence_id: u64,
        position: u32,
        grammar_token: String,
        lm_token: String,
    },
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("tag {0:?} has no POS class mapping")]
    UnmappedTag(String),
    #[error("sentence {sentence_id}, position {position}: matched record lacks a gold tag")]
    MissingGoldTag { sentence_id: u64, position: u32 },
    #[error("class map line {line}: {message}")]
    BadClassMap { line: usize, message: String },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Tokens kept after frequency thresholding; everything else is `<unk>`.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    kept: BTreeSet<String>,
}

impl Vocabulary {
    pub const UNK: &'static str = "<unk>";

    pub fn is_unk(&self, token: &str) -> bool {
        !self.kept.contains(token)
    }

    pub fn len(&self) -> usize {
        self.kept.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept.is_empty()
    }
}

pub fn build_vocab<S: AsRef<str>>(corpus: &[Vec<S>], min_freq: u64) -> Vocabulary {
    assert!(min_freq >= 1, "min_freq must be at least 1");
    let freq = token_frequencies(corpus);
    Vocabulary {
        kept: freq
            .counts
            .into_iter()
            .filter(|&(_, c)| c >= min_freq)
            .map(|(t, _)| t)
            .collect(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MatchedPair {
    pub sentence_id: u64,
    pub position: u32,
    pub token: String,
    pub gold_tag: Option<String>,
    pub grammar_logp: f64,
    pub lm_logp: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AlignmentReport {
    pub pairs: Vec<MatchedPair>,
    /// Grammar-side records whose token is out-of-vocabulary.
    pub skipped_unk: usize,
    /// Grammar-side records with no LM record at (sentence_id, position).
    pub skipped_missing: usize,
    pub total: usize,
}

impl AlignmentReport {
    pub fn matched(&self) -> usize {
        self.pairs.len()
    }

    pub fn grammar_logps(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.grammar_logp).collect()
    }

    pub fn lm_logps(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.lm_logp).collect()
    }
}

/// Pair up the two files on (sentence_id, position). A missing LM record or
/// an out-of-vocabulary token is a skip; the same position carrying two
/// different surface tokens is corpus skew and therefore an error.
pub fn align(
    grammar: &ScoreFile,
    lm: &ScoreFile,
    vocab: Option<&Vocabulary>,
) -> Result<AlignmentReport, CompareError> {
    let lm_index: HashMap<(u64, u32), &crate::score::ScoreRecord> = lm
        .records
        .iter()
        .map(|r| ((r.sentence_id, r.position), r))
        .collect();
    let mut pairs = Vec::new();
    let mut skipped_unk = 0;
    let mut skipped_missing = 0;
    for grec in &grammar.records {
        let Some(lrec) = lm_index.get(&(grec.sentence_id, grec.position)) else {
            skipped_missing += 1;
            continue;
        };
        if lrec.token != grec.token {
            return Err(CompareError::TokenMismatch {
                sentence_id: grec.sentence_id,
                position: grec.position,
                grammar_token: grec.token.clone(),
                lm_token: lrec.token.clone(),
            });
        }
        if vocab.is_some_and(|v| v.is_unk(&grec.token)) {
            skipped_unk += 1;
            continue;
        }
        pairs.push(MatchedPair {
            sentence_id: grec.sentence_id,
            position: grec.position,
            token: grec.token.clone(),
            gold_tag: grec.gold_tag.clone(),
            grammar_logp: grec.logp,
            lm_logp: lrec.logp,
        });
    }
    Ok(AlignmentReport {
        pairs,
        skipped_unk,
        skipped_missing,
        total: grammar.records.len(),
    })
}

/// Coefficient of determination of the least-squares line predicting `y`
/// from `x`: R² = 1 − SS_res / SS_tot.
pub fn r_squared(x: &[f64], y: &[f64]) -> Result<f64, CompareError> {
    if x.len() != y.len() {
        return Err(CompareError::DegenerateInput("length mismatch"));
    }
    if x.len() < 3 {
        return Err(CompareError::DegenerateInput("fewer than 3 pairs"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(CompareError::DegenerateInput("constant predictor"));
    }
    if syy == 0.0 {
        return Err(CompareError::DegenerateInput("constant response"));
    }
    let slope = sxy / sxx;
    let mut ss_res = 0.0;
    for (a, b) in x.iter().zip(y) {
        let resid = (b - my) - slope * (a - mx);
        ss_res += resid * resid;
    }
    Ok(1.0 - ss_res / syy)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RelativePerplexity {
    pub ratio: f64,
    /// A ratio below 1 means the LM beat a true lower bound: the inputs are
    /// inconsistent (wrong corpus, wrong objective, or a buggy score file).
    pub anomalous: bool,
}

pub fn relative_perplexity(lm_ppl: f64, bound_ppl: f64) -> RelativePerplexity {
    assert!(
        lm_ppl > 0.0 && bound_ppl > 0.0,
        "perplexities must be positive"
    );
    let ratio = lm_ppl / bound_ppl;
    RelativePerplexity {
        ratio,
        anomalous: ratio < 1.0,
    }
}

/// Preterminal tag → coarse class. Lookups fall back from the exact tag to
/// the tag with one trailing `_<digits>` subscript removed (so split tags
/// like `NN_3` inherit `NN`'s class), then to the `*` wildcard if the map
/// declares one.
#[derive(Debug, Clone)]
pub struct PosClassMap {
    map: BTreeMap<String, String>,
    wildcard: Option<String>,
}

const BUILTIN_CLASSES: [(&str, &[&str]); 7] = [
    ("noun", &["NN", "NNS", "NNP", "NNPS"]),
    ("verb", &["VB", "VBD", "VBG", "VBN", "VBP", "VBZ", "MD"]),
    ("adj-adv", &["JJ", "JJR", "JJS", "RB", "RBR", "RBS", "WRB"]),
    ("pronoun", &["PRP", "PRP$", "WP", "WP$"]),
    (
        "function",
        &["CC", "DT", "EX", "IN", "PDT", "POS", "RP", "TO", "WDT"],
    ),
    (
        "punct",
        &["#", "$", "''", "``", "(", ")", "-LRB-", "-RRB-", ",", ".", ":", "SYM"],
    ),
    ("other", &["CD", "FW", "LS", "UH"]),
];

impl PosClassMap {
    /// Penn-treebank-style default: seven coarse classes over the standard
    /// tagset.
    pub fn builtin() -> Self {
        let mut map = BTreeMap::new();
        for (class, tags) in BUILTIN_CLASSES {
            for &tag in tags {
                map.insert(tag.to_owned(), class.to_owned());
            }
        }
        PosClassMap {
            map,
            wildcard: None,
        }
    }

    /// Parse `TAG<TAB>CLASS` lines; `#` comments and blank lines are
    /// ignored; a `*` tag declares the fallback class.
    pub fn parse(text: &str) -> Result<Self, CompareError> {
        let mut map = BTreeMap::new();
        let mut wildcard = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((tag, class)) = line.split_once('\t') else {
                return Err(CompareError::BadClassMap {
                    line: i + 1,
                    message: format!("expected TAG<TAB>CLASS, got {line:?}"),
                });
            };
            let (tag, class) = (tag.trim(), class.trim());
            if class.is_empty() {
                return Err(CompareError::BadClassMap {
                    line: i + 1,
                    message: "empty class label".to_owned(),
                });
            }
            if tag == "*" {
                wildcard = Some(class.to_owned());
            } else if map.insert(tag.to_owned(), class.to_owned()).is_some() {
                return Err(CompareError::BadClassMap {
                    line: i + 1,
                    message: format!("tag {tag:?} mapped twice"),
                });
            }
        }
        Ok(PosClassMap { map, wildcard })
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, CompareError> {
        let text = std::fs::read_to_string(path).map_err(|e| CompareError::BadClassMap {
            line: 0,
            message: format!("{}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    pub fn class_of(&self, tag: &str) -> Result<&str, CompareError> {
        if let Some(class) = self.map.get(tag) {
            return Ok(class);
        }
        if let Some(base) = strip_subscript(tag) {
            if let Some(class) = self.map.get(base) {
                return Ok(class);
            }
        }
        self.wildcard
            .as_deref()
            .ok_or_else(|| CompareError::UnmappedTag(tag.to_owned()))
    }

    pub fn classes(&self) -> BTreeSet<&str> {
        let mut set: BTreeSet<&str> = self.map.values().map(String::as_str).collect();
        if let Some(w) = &self.wildcard {
            set.insert(w);
        }
        set
    }
}

fn strip_subscript(tag: &str) -> Option<&str> {
    let (base, digits) = tag.rsplit_once('_')?;
    (!base.is_empty() && !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()))
        .then_some(base)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ClassDivergence {
    pub count: usize,
    /// mean(LM logp − grammar logp)
    pub mean_signed: f64,
    /// mean |LM logp − grammar logp|
    pub mean_abs: f64,
}

/// Per-class mean divergence of the LM from the grammar over the matched
/// pairs. Every pair must carry a mapped gold tag.
pub fn pos_divergence(
    report: &AlignmentReport,
    map: &PosClassMap,
) -> Result<BTreeMap<String, ClassDivergence>, CompareError> {
    let mut sums: BTreeMap<String, (usize, f64, f64)> = BTreeMap::new();
    for pair in &report.pairs {
        let tag = pair
            .gold_tag
            .as_deref()
            .ok_or(CompareError::MissingGoldTag {
                sentence_id: pair.sentence_id,
                position: pair.position,
            })?;
        let class = map.class_of(tag)?;
        let diff = pair.lm_logp - pair.grammar_logp;
        let entry = sums.entry(class.to_owned()).or_insert((0, 0.0, 0.0));
        entry.0 += 1;
        entry.1 += diff;
        entry.2 += diff.abs();
    }
    Ok(sums
        .into_iter()
        .map(|(class, (count, signed, abs))| {
            (
                class,
                ClassDivergence {
                    count,
                    mean_signed: signed / count as f64,
                    mean_abs: abs / count as f64,
                },
            )
        })
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckpointRow {
    pub label: String,
    pub matched: usize,
    pub skipped_unk: usize,
    pub skipped_missing: usize,
    pub spearman: f64,
    pub r_squared: f64,
    pub lm_ppl: f64,
    pub grammar_ppl: f64,
    pub relative_ppl: f64,
    pub anomalous: bool,
    pub divergence: BTreeMap<String, ClassDivergence>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckpointSeries {
    pub rows: Vec<CheckpointRow>,
}

impl CheckpointSeries {
    /// One row per checkpoint; per-class divergence as paired
    /// `signed:<class>` / `abs:<class>` columns over the union of classes.
    pub fn to_tsv(&self) -> String {
        let classes: BTreeSet<&String> =
            self.rows.iter().flat_map(|r| r.divergence.keys()).collect();
        let mut out = String::new();
        out.push_str(
            "label\tmatched\tskipped_unk\tskipped_missing\tspearman\tr_squared\tlm_ppl\tgrammar_ppl\trelative_ppl",
        );
        for c in &classes {
            let _ = write!(out, "\tsigned:{c}\tabs:{c}");
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(
                out,
                "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
                row.label,
                row.matched,
                row.skipped_unk,
                row.skipped_missing,
                row.spearman,
                row.r_squared,
                row.lm_ppl,
                row.grammar_ppl,
                row.relative_ppl
            );
            for c in &classes {
                match row.divergence.get(c.as_str()) {
                    Some(d) => {
                        let _ = write!(out, "\t{:.6}\t{:.6}", d.mean_signed, d.mean_abs);
                    }
                    None => out.push_str("\t\t"),
                }
            }
            out.push('\n');
        }
        out
    }
}

fn mean_ppl(logps: &[f64]) -> f64 {
    let total: f64 = logps.iter().sum();
    (-total / logps.len() as f64).exp()
}

/// Full metric row for one aligned checkpoint.
pub fn checkpoint_row(
    grammar: &ScoreFile,
    lm: &ScoreFile,
    vocab: Option<&Vocabulary>,
    map: &PosClassMap,
) -> Result<CheckpointRow, CompareError> {
    let report = align(grammar, lm, vocab)?;
    if report.pairs.is_empty() {
        return Err(CompareError::DegenerateInput("no matched pairs"));
    }
    let g_logps = report.grammar_logps();
    let l_logps = report.lm_logps();
    let rho = stats::spearman(&l_logps, &g_logps)?;
    let r2 = r_squared(&l_logps, &g_logps)?;
    let lm_ppl = mean_ppl(&l_logps);
    let grammar_ppl = mean_ppl(&g_logps);
    let rel = relative_perplexity(lm_ppl, grammar_ppl);
    let divergence = pos_divergence(&report, map)?;
    Ok(CheckpointRow {
        label: lm.label.clone(),
        matched: report.matched(),
        skipped_unk: report.skipped_unk,
        skipped_missing: report.skipped_missing,
        spearman: rho,
        r_squared: r2,
        lm_ppl,
        grammar_ppl,
        relative_ppl: rel.ratio,
        anomalous: rel.anomalous,
        divergence,
    })
}

/// Metric table over an ordered checkpoint list, one row per file.
pub fn checkpoint_series(
    checkpoints: &[ScoreFile],
    grammar: &ScoreFile,
    vocab: Option<&Vocabulary>,
    map: &PosClassMap,
) -> Result<CheckpointSeries, CompareError> {
    let rows = checkpoints
        .iter()
        .map(|lm| checkpoint_row(grammar, lm, vocab, map))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CheckpointSeries { rows })
}
