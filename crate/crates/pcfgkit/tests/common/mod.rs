//! Shared fixtures for integration tests: an enumeration oracle that walks
//! leftmost derivations directly off the rule lists (no charts involved),
//! random proper-grammar generators, and sampling helpers.

#![allow(dead_code)]

use std::collections::HashMap;
use std::fmt::Write as _;

use pcfgkit::grammar::{Grammar, TermId};
use pcfgkit::sampler::{Rejection, Sampler};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const G1_RULES: &str = "!start S\nS -> A B 1.0\n";
pub const G1_LEX: &str = "A a 1.0\nB b 0.5\nB c 0.5\n";
pub const G2_RULES: &str = "!start S\nS -> S S 0.3\n";
pub const G2_LEX: &str = "S x 0.7\n";
pub const G3_RULES: &str = "!start S\nS -> X 1.0\n";
pub const G3_LEX: &str = "X y 1.0\n";

pub fn g1() -> Grammar {
    Grammar::parse(G1_RULES, G1_LEX).unwrap()
}

pub fn g2() -> Grammar {
    Grammar::parse(G2_RULES, G2_LEX).unwrap()
}

pub fn g3() -> Grammar {
    Grammar::parse(G3_RULES, G3_LEX).unwrap()
}

/// The grammar's string distribution up to a length bound, found by
/// exhaustive leftmost-derivation search. `lost_mass` bounds the probability
/// discarded by the branch-probability cutoff (unary cycles terminate the
/// search through it); `1 - total_mass` bounds the tail beyond `max_len`
/// plus that loss.
pub struct Enumeration {
    pub strings: HashMap<Vec<TermId>, f64>,
    pub total_mass: f64,
    pub lost_mass: f64,
}

impl Enumeration {
    pub fn sentence_prob(&self, s: &[TermId]) -> f64 {
        self.strings.get(s).copied().unwrap_or(0.0)
    }

    /// Mass of enumerated sentences extending (or equal to) the prefix.
    pub fn prefix_prob(&self, prefix: &[TermId]) -> f64 {
        self.strings
            .iter()
            .filter(|(s, _)| s.len() >= prefix.len() && s[..prefix.len()] == *prefix)
            .map(|(_, p)| p)
            .sum()
    }

    /// Exact masked conditional at `position` by substitute-and-renormalize
    /// over every terminal. Returns (terminal, probability) for the nonzero
    /// fillers; None when no filler parses.
    pub fn masked_dist(
        &self,
        n_terminals: usize,
        tokens: &[TermId],
        position: usize,
    ) -> Option<Vec<(TermId, f64)>> {
        let mut variant = tokens.to_vec();
        let mut support = Vec::new();
        let mut z = 0.0;
        for t in 0..n_terminals {
            let t = TermId(t as u32);
            variant[position] = t;
            let p = self.sentence_prob(&variant);
            if p > 0.0 {
                support.push((t, p));
                z += p;
            }
        }
        if z == 0.0 {
            return None;
        }
        Some(support.into_iter().map(|(t, p)| (t, p / z)).collect())
    }
}

#[derive(Clone, Copy)]
enum Sym {
    T(TermId),
    N(pcfgkit::grammar::NtId),
}

pub fn enumerate_language(g: &Grammar, max_len: usize, cut: f64) -> Enumeration {
    struct Item {
        prefix: Vec<TermId>,
        /// Pending symbols, reversed: the last element is leftmost.
        rest: Vec<Sym>,
        p: f64,
    }
    let mut strings: HashMap<Vec<TermId>, f64> = HashMap::new();
    let mut total_mass = 0.0;
    let mut lost_mass = 0.0;
    let mut stack = vec![Item {
        prefix: Vec::new(),
        rest: vec![Sym::N(g.start())],
        p: 1.0,
    }];
    while let Some(mut item) = stack.pop() {
        while let Some(&Sym::T(t)) = item.rest.last() {
            item.rest.pop();
            item.prefix.push(t);
        }
        // every pending symbol expands to at least one terminal
        if item.prefix.len() + item.rest.len() > max_len {
            continue;
        }
        let Some(Sym::N(a)) = item.rest.pop() else {
            total_mass += item.p;
            *strings.entry(item.prefix).or_insert(0.0) += item.p;
            continue;
        };
        // pushed in reverse: the later element is expanded first
        let mut expand = |push: &[Sym], rule_p: f64| {
            let p = item.p * rule_p;
            if p < cut {
                lost_mass += p;
                return;
            }
            let mut rest = item.rest.clone();
            rest.extend_from_slice(push);
            stack.push(Item {
                prefix: item.prefix.clone(),
                rest,
                p,
            });
        };
        for &ri in g.binary_ids_of(a) {
            let r = &g.binary()[ri as usize];
            expand(&[Sym::N(r.right), Sym::N(r.left)], r.prob);
        }
        for &ri in g.unary_ids_of(a) {
            let r = &g.unary()[ri as usize];
            expand(&[Sym::N(r.child)], r.prob);
        }
        for &ri in g.lexical_ids_of(a) {
            let r = &g.lexical()[ri as usize];
            expand(&[Sym::T(r.terminal)], r.prob);
        }
    }
    Enumeration {
        strings,
        total_mass,
        lost_mass,
    }
}

fn normalized_weights(rng: &mut ChaCha8Rng, n: usize, mass: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w * mass / sum).collect()
}

struct GenShape {
    max_nts: usize,
    max_binary_per_nt: usize,
    binary_mass: std::ops::Range<f64>,
    unary_prob: f64,
}

/// Random proper grammar rendered as (rules text, lexicon text). Every
/// nonterminal has at least one lexical rule, so all are productive; per-LHS
/// probabilities sum to 1.
fn gen_grammar_text(seed: u64, shape: &GenShape) -> (String, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_nt = rng.gen_range(2..=shape.max_nts);
    let n_term = rng.gen_range(2..=5);
    let mut rules = String::from("!start N0\n");
    let mut lexicon = String::new();

    for i in 0..n_nt {
        let n_bin = rng.gen_range(0..=shape.max_binary_per_nt);
        let has_unary = n_nt > 1 && rng.gen_bool(shape.unary_prob);
        let n_lex = rng.gen_range(1..=3.min(n_term));

        let binary_mass = if n_bin > 0 {
            rng.gen_range(shape.binary_mass.clone())
        } else {
            0.0
        };
        let unary_mass = if has_unary { rng.gen_range(0.02..0.12) } else { 0.0 };
        let lex_mass = 1.0 - binary_mass - unary_mass;

        for w in normalized_weights(&mut rng, n_bin, binary_mass) {
            let left = rng.gen_range(0..n_nt);
            let right = rng.gen_range(0..n_nt);
            let _ = writeln!(rules, "N{i} -> N{left} N{right} {w}");
        }
        if has_unary {
            // child differs from the LHS so cycles need two participants
            let child = (i + 1 + rng.gen_range(0..n_nt - 1)) % n_nt;
            let _ = writeln!(rules, "N{i} -> N{child} {unary_mass}");
        }
        let mut terms: Vec<usize> = (0..n_term).collect();
        for k in 0..n_lex {
            let at = rng.gen_range(k..n_term);
            terms.swap(k, at);
        }
        for (k, w) in normalized_weights(&mut rng, n_lex, lex_mass).into_iter().enumerate() {
            let _ = writeln!(lexicon, "N{i} t{} {w}", terms[k]);
        }
    }
    (rules, lexicon)
}

/// Up to 30 rules, lexical mass well above critical: safe to sample and
/// chart-score at short lengths.
pub fn random_grammar_text(seed: u64) -> (String, String) {
    gen_grammar_text(
        seed,
        &GenShape {
            max_nts: 5,
            max_binary_per_nt: 2,
            binary_mass: 0.10..0.38,
            unary_prob: 0.3,
        },
    )
}

/// Up to 20 rules with almost all mass on lexical rules, so nearly the whole
/// language fits under a small length bound. Callers must still verify the
/// tail via [`enumerate_language`].
pub fn light_tail_grammar_text(seed: u64) -> (String, String) {
    gen_grammar_text(
        seed,
        &GenShape {
            max_nts: 4,
            max_binary_per_nt: 1,
            binary_mass: 0.005..0.02,
            unary_prob: 0.25,
        },
    )
}

/// ~1000-rule grammar: 30 nonterminals over 200 terminals, subcritical
/// (expected symbols per expansion ≈ 0.85).
pub fn bulk_grammar_text(seed: u64) -> (String, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_nt = 30;
    let n_term = 200;
    let mut rules = String::from("!start N0\n");
    let mut lexicon = String::new();
    for i in 0..n_nt {
        let n_bin = 12;
        let n_lex = 20;
        let has_unary = i % 3 == 0;
        let unary_mass = if has_unary { 0.03 } else { 0.0 };
        let binary_mass = 0.40;
        let lex_mass = 1.0 - binary_mass - unary_mass;

        for w in normalized_weights(&mut rng, n_bin, binary_mass) {
            let left = rng.gen_range(0..n_nt);
            let right = rng.gen_range(0..n_nt);
            let _ = writeln!(rules, "N{i} -> N{left} N{right} {w}");
        }
        if has_unary {
            let child = (i + 1 + rng.gen_range(0..n_nt - 1)) % n_nt;
            let _ = writeln!(rules, "N{i} -> N{child} {unary_mass}");
        }
        let mut seen = std::collections::HashSet::new();
        while seen.len() < n_lex {
            seen.insert(rng.gen_range(0..n_term));
        }
        let terms: Vec<usize> = seen.into_iter().collect();
        for (k, w) in normalized_weights(&mut rng, n_lex, lex_mass).into_iter().enumerate() {
            let _ = writeln!(lexicon, "N{i} t{} {w}", terms[k]);
        }
    }
    (rules, lexicon)
}

/// `count` derivations with lengths in [min_len, max_len], by rejection.
pub fn sample_sentences(
    g: &Grammar,
    seed: u64,
    count: usize,
    min_len: usize,
    max_len: usize,
) -> Vec<Vec<TermId>> {
    let sampler = Sampler::new(g);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut guard = 0u64;
    while out.len() < count {
        guard += 1;
        assert!(guard < 10_000_000, "sampling is not terminating");
        match sampler.sample(&mut rng, 10_000) {
            Ok(d) if d.tokens.len() >= min_len && d.tokens.len() <= max_len => {
                out.push(d.tokens);
            }
            Ok(_) | Err(Rejection::DepthCap) => {}
            Err(Rejection::DeadEnd) => panic!("generated grammars have no dead ends"),
        }
    }
    out
}

/// `n` tokens drawn from the rank-frequency law p(r) ∝ (r+beta)^(-alpha)
/// over ranks 1..=vocab, named w1..w{vocab}.
pub fn zipf_mandelbrot_tokens(
    seed: u64,
    n: usize,
    alpha: f64,
    beta: f64,
    vocab: usize,
) -> Vec<String> {
    let mut cum: Vec<f64> = Vec::with_capacity(vocab);
    let mut z = 0.0;
    for r in 1..=vocab {
        z += (r as f64 + beta).powf(-alpha);
        cum.push(z);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u: f64 = rng.gen_range(0.0..z);
            let r = cum.partition_point(|&c| c <= u).min(vocab - 1);
            format!("w{}", r + 1)
        })
        .collect()
}

/// Rewrite the grammar with every rule probability multiplied by a random
/// factor in [0.5, 2], renormalized per LHS, as loadable text.
pub fn perturb_grammar_text(g: &Grammar, seed: u64) -> (String, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let syms = g.symbols();
    let n = g.n_nonterminals();
    let mut factors_binary: Vec<f64> = Vec::new();
    let mut factors_unary: Vec<f64> = Vec::new();
    let mut factors_lexical: Vec<f64> = Vec::new();
    for _ in g.binary() {
        factors_binary.push(rng.gen_range(0.5..2.0));
    }
    for _ in g.unary() {
        factors_unary.push(rng.gen_range(0.5..2.0));
    }
    for _ in g.lexical() {
        factors_lexical.push(rng.gen_range(0.5..2.0));
    }

    let mut lhs_sum = vec![0.0f64; n];
    for (r, f) in g.binary().iter().zip(&factors_binary) {
        lhs_sum[r.lhs.idx()] += r.prob * f;
    }
    for (r, f) in g.unary().iter().zip(&factors_unary) {
        lhs_sum[r.lhs.idx()] += r.prob * f;
    }
    for (r, f) in g.lexical().iter().zip(&factors_lexical) {
        lhs_sum[r.lhs.idx()] += r.prob * f;
    }

    let mut rules = format!("!start {}\n", syms.nt_name(g.start()));
    for (r, f) in g.binary().iter().zip(&factors_binary) {
        let _ = writeln!(
            rules,
            "{} -> {} {} {}",
            syms.nt_name(r.lhs),
            syms.nt_name(r.left),
            syms.nt_name(r.right),
            r.prob * f / lhs_sum[r.lhs.idx()]
        );
    }
    for (r, f) in g.unary().iter().zip(&factors_unary) {
        let _ = writeln!(
            rules,
            "{} -> {} {}",
            syms.nt_name(r.lhs),
            syms.nt_name(r.child),
            r.prob * f / lhs_sum[r.lhs.idx()]
        );
    }
    let mut lexicon = String::new();
    for (r, f) in g.lexical().iter().zip(&factors_lexical) {
        let _ = writeln!(
            lexicon,
            "{} {} {}",
            syms.nt_name(r.lhs),
            syms.term_name(r.terminal),
            r.prob * f / lhs_sum[r.lhs.idx()]
        );
    }
    (rules, lexicon)
}
