//! Top-down derivation sampling and constrained corpus generation.
//!
//! Corpus generation draws each sentence slot from its own counter-derived
//! random stream, so output is byte-identical for a given (grammar, spec)
//! regardless of how many worker threads run. Length bounds are enforced by
//! rejection, which preserves the grammar's distribution conditioned on
//! length. Splits are generated in order (train, dev, test, eval) and later
//! splits reject any surface string produced by an earlier one.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::grammar::{Grammar, NtId, TermId};

/// A sampled parse: surface tokens, their preterminal tags, the bracketed
/// tree, and the derivation log-probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivation {
    pub tokens: Vec<TermId>,
    pub tags: Vec<NtId>,
    pub tree: String,
    pub logp: f64,
}

impl Derivation {
    pub fn surface(&self, g: &Grammar) -> String {
        self.tokens
            .iter()
            .map(|&t| g.symbols().term_name(t))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn tagged(&self, g: &Grammar) -> String {
        self.tokens
            .iter()
            .zip(&self.tags)
            .map(|(&t, &tag)| format!("{}/{}", g.symbols().term_name(t), g.symbols().nt_name(tag)))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Why a single derivation attempt was abandoned. Not a fault: the caller
/// retries or counts it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    /// Expansion budget exceeded (runaway recursion).
    DepthCap,
    /// Reached a nonterminal with no rules.
    DeadEnd,
}

#[derive(Debug, Clone)]
pub struct CorpusSpec {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub eval: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
    pub max_rule_expansions: u32,
    /// Attempt budget per sentence slot before giving up on the spec.
    pub max_attempts: u32,
}

impl CorpusSpec {
    pub fn new(train: usize, min_len: usize, max_len: usize, seed: u64) -> Self {
        CorpusSpec {
            train,
            dev: 0,
            test: 0,
            eval: 0,
            min_len,
            max_len,
            seed,
            max_rule_expansions: 10_000,
            max_attempts: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct RejectionCounts {
    pub length: u64,
    pub depth: u64,
    pub dead_end: u64,
    pub collision: u64,
}

impl RejectionCounts {
    fn absorb(&mut self, other: &RejectionCounts) {
        self.length += other.length;
        self.depth += other.depth;
        self.dead_end += other.dead_end;
        self.collision += other.collision;
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitReport {
    pub requested: usize,
    pub generated: usize,
    pub attempts: u64,
    pub rejections: RejectionCounts,
}

#[derive(Debug, Clone, Serialize)]
pub struct GenerationReport {
    pub seed: u64,
    pub min_len: usize,
    pub max_len: usize,
    pub splits: BTreeMap<String, SplitReport>,
}

#[derive(Debug, Clone)]
pub struct GeneratedSplit {
    pub name: &'static str,
    pub sentences: Vec<Derivation>,
}

#[derive(Debug, thiserror::Error)]
pub enum SampleError {
    #[error("split {split}, sentence {index}: no accepted derivation within {budget} attempts")]
    ExhaustedBudget {
        split: &'static str,
        index: usize,
        budget: u32,
    },
}

enum Choice {
    Binary(u32),
    Unary(u32),
    Lexical(u32),
}

/// Reusable per-grammar sampling tables: one cumulative-probability list per
/// nonterminal, in rule order (binary, unary, lexical).
pub struct Sampler<'g> {
    g: &'g Grammar,
    choices: Vec<Vec<(f64, Choice)>>,
}

impl<'g> Sampler<'g> {
    pub fn new(g: &'g Grammar) -> Self {
        let mut choices = Vec::with_capacity(g.n_nonterminals());
        for nt in 0..g.n_nonterminals() {
            let nt = NtId(nt as u32);
            let mut list = Vec::new();
            let mut cum = 0.0;
            for &ri in g.binary_ids_of(nt) {
                cum += g.binary()[ri as usize].prob;
                list.push((cum, Choice::Binary(ri)));
            }
            for &ri in g.unary_ids_of(nt) {
                cum += g.unary()[ri as usize].prob;
                list.push((cum, Choice::Unary(ri)));
            }
            for &ri in g.lexical_ids_of(nt) {
                cum += g.lexical()[ri as usize].prob;
                list.push((cum, Choice::Lexical(ri)));
            }
            choices.push(list);
        }
        Sampler { g, choices }
    }

    /// One top-down derivation, each rule drawn with its conditional
    /// probability given the LHS.
    pub fn sample(
        &self,
        rng: &mut impl Rng,
        max_rule_expansions: u32,
    ) -> Result<Derivation, Rejection> {
        enum Work {
            Expand(NtId),
            Close,
        }
        let g = self.g;
        let mut stack = vec![Work::Expand(g.start())];
        let mut tokens = Vec::new();
        let mut tags = Vec::new();
        let mut tree = String::new();
        let mut logp = 0.0;
        let mut expansions = 0u32;

        while let Some(work) = stack.pop() {
            let nt = match work {
                Work::Close => {
                    tree.push(')');
                    continue;
                }
                Work::Expand(nt) => nt,
            };
            expansions += 1;
            if expansions > max_rule_expansions {
                return Err(Rejection::DepthCap);
            }
            let list = &self.choices[nt.idx()];
            if list.is_empty() {
                return Err(Rejection::DeadEnd);
            }
            let u: f64 = rng.gen();
            // the final entry absorbs any normalization slack
            let choice = list
                .iter()
                .find(|(cum, _)| u < *cum)
                .map(|(_, c)| c)
                .unwrap_or(&list.last().unwrap().1);

            if !tree.is_empty() {
                tree.push(' ');
            }
            tree.push('(');
            tree.push_str(g.symbols().nt_name(nt));
            match *choice {
                Choice::Binary(ri) => {
                    let r = &g.binary()[ri as usize];
                    logp += r.logp;
                    stack.push(Work::Close);
                    stack.push(Work::Expand(r.right));
                    stack.push(Work::Expand(r.left));
                }
                Choice::Unary(ri) => {
                    let r = &g.unary()[ri as usize];
                    logp += r.logp;
                    stack.push(Work::Close);
                    stack.push(Work::Expand(r.child));
                }
                Choice::Lexical(ri) => {
                    let r = &g.lexical()[ri as usize];
                    logp += r.logp;
                    tokens.push(r.terminal);
                    tags.push(nt);
                    tree.push(' ');
                    tree.push_str(g.symbols().term_name(r.terminal));
                    tree.push(')');
                }
            }
        }
        Ok(Derivation {
            tokens,
            tags,
            tree,
            logp,
        })
    }
}

/// One derivation with a fresh sampler; prefer [`Sampler`] for bulk work.
pub fn sample_derivation(
    g: &Grammar,
    rng: &mut impl Rng,
    max_rule_expansions: u32,
) -> Result<Derivation, Rejection> {
    Sampler::new(g).sample(rng, max_rule_expansions)
}

/// Independent random stream for one sentence slot, derived from the corpus
/// seed and the slot's (split, index) coordinates.
fn slot_rng(seed: u64, split: usize, slot: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((split as u64) << 40) | slot as u64);
    rng
}

const SPLIT_NAMES: [&str; 4] = ["train", "dev", "test", "eval"];

/// Generate all requested splits. Every sentence length lies in
/// [min_len, max_len]; duplicates are allowed within a split but no surface
/// string appears in two different splits.
pub fn generate_corpus(
    g: &Grammar,
    spec: &CorpusSpec,
) -> Result<(Vec<GeneratedSplit>, GenerationReport), SampleError> {
    let sampler = Sampler::new(g);
    let counts = [spec.train, spec.dev, spec.test, spec.eval];
    let mut forbidden: HashSet<Vec<TermId>> = HashSet::new();
    let mut splits = Vec::new();
    let mut reports = BTreeMap::new();

    for (si, (&count, &name)) in counts.iter().zip(SPLIT_NAMES.iter()).enumerate() {
        let outcomes: Result<Vec<(Derivation, u64, RejectionCounts)>, SampleError> = (0..count)
            .into_par_iter()
            .map(|slot| {
                let mut rng = slot_rng(spec.seed, si, slot);
                let mut rejections = RejectionCounts::default();
                let mut attempts = 0u64;
                loop {
                    if attempts >= spec.max_attempts as u64 {
                        return Err(SampleError::ExhaustedBudget {
                            split: name,
                            index: slot,
                            budget: spec.max_attempts,
                        });
                    }
                    attempts += 1;
                    match sampler.sample(&mut rng, spec.max_rule_expansions) {
                        Err(Rejection::DepthCap) => rejections.depth += 1,
                        Err(Rejection::DeadEnd) => rejections.dead_end += 1,
                        Ok(d) => {
                            let len = d.tokens.len();
                            if len < spec.min_len || len > spec.max_len {
                                rejections.length += 1;
                            } else if forbidden.contains(&d.tokens) {
                                rejections.collision += 1;
                            } else {
                                return Ok((d, attempts, rejections));
                            }
                        }
                    }
                }
            })
            .collect();
        let outcomes = outcomes?;

        let mut sentences = Vec::with_capacity(count);
        let mut attempts = 0u64;
        let mut rejections = RejectionCounts::default();
        for (d, a, r) in outcomes {
            attempts += a;
            rejections.absorb(&r);
            sentences.push(d);
        }
        for d in &sentences {
            forbidden.insert(d.tokens.clone());
        }
        reports.insert(
            name.to_owned(),
            SplitReport {
                requested: count,
                generated: sentences.len(),
                attempts,
                rejections,
            },
        );
        splits.push(GeneratedSplit { name, sentences });
    }

    let report = GenerationReport {
        seed: spec.seed,
        min_len: spec.min_len,
        max_len: spec.max_len,
        splits: reports,
    };
    Ok((splits, report))
}
