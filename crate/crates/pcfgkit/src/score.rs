//! Token-level score files (JSONL, one record per token occurrence) and the
//! corpus scoring drivers that produce them from a grammar.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::earley::{EarleyError, PrefixScorer};
use crate::grammar::Grammar;
use crate::inside_outside::{self, ChartError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Masked,
    Causal,
}

impl Objective {
    pub fn as_str(self) -> &'static str {
        match self {
            Objective::Masked => "masked",
            Objective::Causal => "causal",
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "masked" => Ok(Objective::Masked),
            "causal" => Ok(Objective::Causal),
            other => Err(format!("unknown objective {other:?} (masked|causal)")),
        }
    }
}

/// One token occurrence with its log-probability under some source (grammar
/// objective or an external LM). `position` is 1-based within the sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub sentence_id: u64,
    pub position: u32,
    pub token: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_tag: Option<String>,
    pub logp: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ScoreFile {
    pub label: String,
    pub records: Vec<ScoreRecord>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScoreError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("line {line}: logp {logp} is not finite")]
    NonFinite { line: usize, logp: f64 },
    #[error("line {line}: logp {logp} > 0 looks like a raw logit, not a log-probability")]
    RawLogit { line: usize, logp: f64 },
    #[error("line {line}: duplicate (sentence {sentence_id}, position {position})")]
    Duplicate {
        line: usize,
        sentence_id: u64,
        position: u32,
    },
}

pub fn read_score_file(label: &str, reader: impl BufRead) -> Result<ScoreFile, ScoreError> {
    let mut records = Vec::new();
    let mut seen: HashSet<(u64, u32)> = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ScoreRecord =
            serde_json::from_str(&line).map_err(|source| ScoreError::Json { line: i + 1, source })?;
        if !rec.logp.is_finite() {
            return Err(ScoreError::NonFinite {
                line: i + 1,
                logp: rec.logp,
            });
        }
        if rec.logp > 0.0 {
            return Err(ScoreError::RawLogit {
                line: i + 1,
                logp: rec.logp,
            });
        }
        if !seen.insert((rec.sentence_id, rec.position)) {
            return Err(ScoreError::Duplicate {
                line: i + 1,
                sentence_id: rec.sentence_id,
                position: rec.position,
            });
        }
        records.push(rec);
    }
    Ok(ScoreFile {
        label: label.to_owned(),
        records,
    })
}

pub fn read_score_path(path: &std::path::Path) -> Result<ScoreFile, ScoreError> {
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    read_score_file(&label, std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn write_score_records(
    mut out: impl Write,
    records: &[ScoreRecord],
) -> Result<(), std::io::Error> {
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// A corpus sentence ready for scoring; `tags` (when present) parallels
/// `tokens` and is carried through to the emitted records.
#[derive(Debug, Clone)]
pub struct InputSentence {
    pub tokens: Vec<String>,
    pub tags: Option<Vec<String>>,
}

impl InputSentence {
    pub fn untagged(tokens: Vec<String>) -> Self {
        InputSentence { tokens, tags: None }
    }

    pub fn tagged(pairs: Vec<(String, String)>) -> Self {
        let (tokens, tags) = pairs.into_iter().unzip();
        InputSentence {
            tokens,
            tags: Some(tags),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScoreCorpusError {
    #[error("sentence {sentence_id}: token {token:?} is not in the grammar's lexicon")]
    UnknownToken { sentence_id: u64, token: String },
    #[error("sentence {sentence_id}, position {position}: context has no parse")]
    NoContextParse { sentence_id: u64, position: u32 },
    #[error("sentence {sentence_id}, position {position}: prefix has probability 0")]
    DeadPrefix { sentence_id: u64, position: u32 },
    #[error("left-corner closure failed: {0}")]
    LeftCorner(String),
}

/// Score every token of every sentence under the given objective. Sentences
/// are processed in parallel; output order follows input order, with
/// `sentence_id` equal to the sentence's 0-based corpus index.
pub fn score_corpus(
    g: &Grammar,
    sentences: &[InputSentence],
    objective: Objective,
    prune: Option<f64>,
) -> Result<Vec<ScoreRecord>, ScoreCorpusError> {
    let scorer = match objective {
        Objective::Masked => None,
        Objective::Causal => Some(
            PrefixScorer::with_prune(g, prune.unwrap_or(0.0))
                .map_err(|e| ScoreCorpusError::LeftCorner(e.to_string()))?,
        ),
    };

    let per_sentence: Result<Vec<Vec<ScoreRecord>>, ScoreCorpusError> = sentences
        .par_iter()
        .enumerate()
        .map(|(idx, sentence)| {
            let sid = idx as u64;
            let ids = g.tokenize(&sentence.tokens).map_err(|e| {
                ScoreCorpusError::UnknownToken {
                    sentence_id: sid,
                    token: e.0,
                }
            })?;
            let logps: Vec<f64> = match objective {
                Objective::Masked => {
                    inside_outside::masked_token_logps_with(g, &ids, prune).map_err(
                        |e| match e {
                            ChartError::NoContextParse { position } => {
                                ScoreCorpusError::NoContextParse {
                                    sentence_id: sid,
                                    position: position as u32 + 1,
                                }
                            }
                            ChartError::UnknownToken(t) => ScoreCorpusError::UnknownToken {
                                sentence_id: sid,
                                token: t.0,
                            },
                        },
                    )?
                }
                Objective::Causal => {
                    let scorer = scorer.as_ref().unwrap();
                    scorer
                        .causal_scores(&ids)
                        .map_err(|e| match e {
                            EarleyError::DeadPrefix { position } => ScoreCorpusError::DeadPrefix {
                                sentence_id: sid,
                                position: position as u32,
                            },
                            EarleyError::LeftCorner(e) => {
                                ScoreCorpusError::LeftCorner(e.to_string())
                            }
                        })?
                        .into_iter()
                        .map(|s| s.cond_logp)
                        .collect()
                }
            };
            let records = logps
                .into_iter()
                .enumerate()
                .map(|(i, logp)| ScoreRecord {
                    sentence_id: sid,
                    position: i as u32 + 1,
                    token: sentence.tokens[i].clone(),
                    gold_tag: sentence.tags.as_ref().map(|t| t[i].clone()),
                    logp,
                    objective: Some(objective.as_str().to_owned()),
                })
                .collect();
            Ok(records)
        })
        .collect();

    Ok(per_sentence?.into_iter().flatten().collect())
}

/// exp(−Σ logp / N) over all records: the corpus-level perplexity of
/// whichever objective produced them.
pub fn corpus_perplexity(records: &[ScoreRecord]) -> f64 {
    assert!(!records.is_empty(), "perplexity of an empty record set");
    let total: f64 = records.iter().map(|r| r.logp).sum();
    (-total / records.len() as f64).exp()
}
