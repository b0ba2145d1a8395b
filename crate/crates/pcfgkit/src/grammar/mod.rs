//! PCFG representation: interned symbols, binarized rules, per-LHS indexes,
//! and the unary-closure weights shared by both chart engines.

use std::collections::HashMap;

use crate::num::{self, SquareMatrix};

mod text;
pub use text::LoadOptions;

/// Dense nonterminal id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NtId(pub u32);

/// Dense terminal id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TermId(pub u32);

impl NtId {
    #[inline]
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl TermId {
    #[inline]
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

/// Interned symbol names. Nonterminals and terminals live in separate
/// namespaces, so the same string may name one of each.
#[derive(Debug, Clone)]
pub struct SymbolTable {
    nonterminals: Vec<String>,
    terminals: Vec<String>,
    nt_index: HashMap<String, NtId>,
    term_index: HashMap<String, TermId>,
    start: NtId,
}

impl SymbolTable {
    pub fn start(&self) -> NtId {
        self.start
    }

    pub fn n_nonterminals(&self) -> usize {
        self.nonterminals.len()
    }

    pub fn n_terminals(&self) -> usize {
        self.terminals.len()
    }

    pub fn nt_name(&self, id: NtId) -> &str {
        &self.nonterminals[id.idx()]
    }

    pub fn term_name(&self, id: TermId) -> &str {
        &self.terminals[id.idx()]
    }

    pub fn nt_id(&self, name: &str) -> Option<NtId> {
        self.nt_index.get(name).copied()
    }

    pub fn term_id(&self, name: &str) -> Option<TermId> {
        self.term_index.get(name).copied()
    }
}

/// Mutable interner used while parsing; frozen into a SymbolTable once the
/// start symbol is known.
#[derive(Default)]
pub(crate) struct SymbolInterner {
    nonterminals: Vec<String>,
    terminals: Vec<String>,
    nt_index: HashMap<String, NtId>,
    term_index: HashMap<String, TermId>,
}

impl SymbolInterner {
    pub(crate) fn intern_nt(&mut self, name: &str) -> NtId {
        if let Some(&id) = self.nt_index.get(name) {
            return id;
        }
        let id = NtId(self.nonterminals.len() as u32);
        self.nonterminals.push(name.to_owned());
        self.nt_index.insert(name.to_owned(), id);
        id
    }

    pub(crate) fn intern_term(&mut self, name: &str) -> TermId {
        if let Some(&id) = self.term_index.get(name) {
            return id;
        }
        let id = TermId(self.terminals.len() as u32);
        self.terminals.push(name.to_owned());
        self.term_index.insert(name.to_owned(), id);
        id
    }

    pub(crate) fn lookup_nt(&self, name: &str) -> Option<NtId> {
        self.nt_index.get(name).copied()
    }

    fn freeze(self, start: NtId) -> SymbolTable {
        SymbolTable {
            nonterminals: self.nonterminals,
            terminals: self.terminals,
            nt_index: self.nt_index,
            term_index: self.term_index,
            start,
        }
    }
}

/// A → B C with probability stored both as parsed and in natural log.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryRule {
    pub lhs: NtId,
    pub left: NtId,
    pub right: NtId,
    pub prob: f64,
    pub logp: f64,
}

/// A → B.
#[derive(Debug, Clone, PartialEq)]
pub struct UnaryRule {
    pub lhs: NtId,
    pub child: NtId,
    pub prob: f64,
    pub logp: f64,
}

/// A → w.
#[derive(Debug, Clone, PartialEq)]
pub struct LexicalRule {
    pub lhs: NtId,
    pub terminal: TermId,
    pub prob: f64,
    pub logp: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum GrammarError {
    #[error("{context} line {line}: {message}")]
    MalformedLine {
        context: &'static str,
        line: usize,
        message: String,
    },
    #[error("{context} line {line}: rule has more than two children")]
    ArityError { context: &'static str, line: usize },
    #[error("rules for {lhs} sum to {sum:.9}, expected 1 within 1e-6")]
    NormalizationError { lhs: String, sum: f64 },
    #[error("start symbol error: {0}")]
    UnknownStart(String),
    #[error(transparent)]
    DivergentClosure(#[from] num::DivergentClosure),
}

/// Token not present in the grammar's terminal vocabulary.
#[derive(Debug, Clone, thiserror::Error)]
#[error("unknown token: {0}")]
pub struct UnknownToken(pub String);

/// Validated, indexed grammar. Immutable after construction and shareable
/// across threads.
#[derive(Debug, Clone)]
pub struct Grammar {
    symbols: SymbolTable,
    binary: Vec<BinaryRule>,
    unary: Vec<UnaryRule>,
    lexical: Vec<LexicalRule>,
    binary_by_lhs: Vec<Vec<u32>>,
    unary_by_lhs: Vec<Vec<u32>>,
    lexical_by_lhs: Vec<Vec<u32>>,
    lexical_by_terminal: Vec<Vec<u32>>,
    closure_log: Vec<f64>,
    closure_rows: Vec<Vec<(NtId, f64)>>,
    closure_cols: Vec<Vec<(NtId, f64)>>,
    lexical_mass: Vec<f64>,
    lexical_mass_log: Vec<f64>,
}

impl Grammar {
    /// Parse the line-oriented rule and lexicon texts into a validated grammar.
    pub fn parse(rule_text: &str, lexicon_text: &str) -> Result<Grammar, GrammarError> {
        text::parse_grammar_text(rule_text, lexicon_text)
    }

    /// Like [`Grammar::parse`] with an explicit probability floor and
    /// renormalization switch.
    pub fn parse_with(
        rule_text: &str,
        lexicon_text: &str,
        options: &LoadOptions,
    ) -> Result<Grammar, GrammarError> {
        text::parse_grammar_text_with(rule_text, lexicon_text, options)
    }

    pub(crate) fn build(
        interner: SymbolInterner,
        start: NtId,
        mut binary: Vec<BinaryRule>,
        mut unary: Vec<UnaryRule>,
        mut lexical: Vec<LexicalRule>,
        options: &LoadOptions,
    ) -> Result<Grammar, GrammarError> {
        let symbols = interner.freeze(start);
        let n_nt = symbols.n_nonterminals();
        let n_term = symbols.n_terminals();

        if options.prob_floor > 0.0 {
            let floor = options.prob_floor;
            binary.retain(|r| r.prob >= floor);
            unary.retain(|r| r.prob >= floor);
            lexical.retain(|r| r.prob >= floor);
        }

        let mut sums = vec![0.0; n_nt];
        for r in &binary {
            sums[r.lhs.idx()] += r.prob;
        }
        for r in &unary {
            sums[r.lhs.idx()] += r.prob;
        }
        for r in &lexical {
            sums[r.lhs.idx()] += r.prob;
        }

        if options.renormalize {
            for r in &mut binary {
                r.prob /= sums[r.lhs.idx()];
                r.logp = r.prob.ln();
            }
            for r in &mut unary {
                r.prob /= sums[r.lhs.idx()];
                r.logp = r.prob.ln();
            }
            for r in &mut lexical {
                r.prob /= sums[r.lhs.idx()];
                r.logp = r.prob.ln();
            }
            for s in &mut sums {
                if *s > 0.0 {
                    *s = 1.0;
                }
            }
        }

        // A floored grammar without renormalization is knowingly
        // sub-normalized, so the sum check only applies otherwise.
        if options.prob_floor == 0.0 || options.renormalize {
            for (i, &sum) in sums.iter().enumerate() {
                if sum > 0.0 && (sum - 1.0).abs() > 1e-6 {
                    return Err(GrammarError::NormalizationError {
                        lhs: symbols.nonterminals[i].clone(),
                        sum,
                    });
                }
            }
        }

        let mut one_step = SquareMatrix::zeros(n_nt);
        for r in &unary {
            one_step.add_to(r.lhs.idx(), r.child.idx(), r.prob);
        }
        let closure = num::transitive_closure(&one_step)?;

        let mut closure_log = vec![f64::NEG_INFINITY; n_nt * n_nt];
        let mut closure_rows = vec![Vec::new(); n_nt];
        let mut closure_cols = vec![Vec::new(); n_nt];
        for a in 0..n_nt {
            for b in 0..n_nt {
                let w = closure.get(a, b);
                if w > 0.0 {
                    let logw = w.ln();
                    closure_log[a * n_nt + b] = logw;
                    closure_rows[a].push((NtId(b as u32), logw));
                    closure_cols[b].push((NtId(a as u32), logw));
                }
            }
        }

        let mut binary_by_lhs = vec![Vec::new(); n_nt];
        for (i, r) in binary.iter().enumerate() {
            binary_by_lhs[r.lhs.idx()].push(i as u32);
        }
        let mut unary_by_lhs = vec![Vec::new(); n_nt];
        for (i, r) in unary.iter().enumerate() {
            unary_by_lhs[r.lhs.idx()].push(i as u32);
        }
        let mut lexical_by_lhs = vec![Vec::new(); n_nt];
        let mut lexical_by_terminal = vec![Vec::new(); n_term];
        let mut lexical_mass = vec![0.0; n_nt];
        for (i, r) in lexical.iter().enumerate() {
            lexical_by_lhs[r.lhs.idx()].push(i as u32);
            lexical_by_terminal[r.terminal.idx()].push(i as u32);
            lexical_mass[r.lhs.idx()] += r.prob;
        }
        let lexical_mass_log = lexical_mass.iter().map(|&m| m.ln()).collect();

        Ok(Grammar {
            symbols,
            binary,
            unary,
            lexical,
            binary_by_lhs,
            unary_by_lhs,
            lexical_by_lhs,
            lexical_by_terminal,
            closure_log,
            closure_rows,
            closure_cols,
            lexical_mass,
            lexical_mass_log,
        })
    }

    pub fn symbols(&self) -> &SymbolTable {
        &self.symbols
    }

    pub fn start(&self) -> NtId {
        self.symbols.start
    }

    pub fn n_nonterminals(&self) -> usize {
        self.symbols.n_nonterminals()
    }

    pub fn n_terminals(&self) -> usize {
        self.symbols.n_terminals()
    }

    pub fn binary(&self) -> &[BinaryRule] {
        &self.binary
    }

    pub fn unary(&self) -> &[UnaryRule] {
        &self.unary
    }

    pub fn lexical(&self) -> &[LexicalRule] {
        &self.lexical
    }

    pub fn binary_ids_of(&self, lhs: NtId) -> &[u32] {
        &self.binary_by_lhs[lhs.idx()]
    }

    pub fn unary_ids_of(&self, lhs: NtId) -> &[u32] {
        &self.unary_by_lhs[lhs.idx()]
    }

    pub fn lexical_ids_of(&self, lhs: NtId) -> &[u32] {
        &self.lexical_by_lhs[lhs.idx()]
    }

    pub fn lexical_ids_for_terminal(&self, t: TermId) -> &[u32] {
        &self.lexical_by_terminal[t.idx()]
    }

    /// Summed probability over all unary chains a ⇒* b, including the empty
    /// chain when a = b. Linear scale; may exceed 1 on cyclic grammars.
    pub fn unary_closure_weight(&self, a: NtId, b: NtId) -> f64 {
        let logw = self.closure_log[a.idx() * self.n_nonterminals() + b.idx()];
        if logw == f64::NEG_INFINITY {
            0.0
        } else {
            logw.exp()
        }
    }

    /// Nonzero closure targets of `a` as (b, log weight).
    pub fn closure_row(&self, a: NtId) -> &[(NtId, f64)] {
        &self.closure_rows[a.idx()]
    }

    /// Nonzero closure sources reaching `b` as (a, log weight).
    pub fn closure_col(&self, b: NtId) -> &[(NtId, f64)] {
        &self.closure_cols[b.idx()]
    }

    /// Σ_w P(a → w): total direct lexical emission probability of `a`.
    pub fn lexical_mass(&self, a: NtId) -> f64 {
        self.lexical_mass[a.idx()]
    }

    pub fn lexical_mass_log(&self, a: NtId) -> f64 {
        self.lexical_mass_log[a.idx()]
    }

    /// All terminals with their total lexical probability mass, in id order.
    pub fn vocabulary(&self) -> Vec<(TermId, f64)> {
        (0..self.n_terminals())
            .map(|t| {
                let mass = self.lexical_by_terminal[t]
                    .iter()
                    .map(|&i| self.lexical[i as usize].prob)
                    .sum();
                (TermId(t as u32), mass)
            })
            .collect()
    }

    /// Map surface tokens to terminal ids.
    pub fn tokenize<S: AsRef<str>>(&self, words: &[S]) -> Result<Vec<TermId>, UnknownToken> {
        words
            .iter()
            .map(|w| {
                self.symbols
                    .term_id(w.as_ref())
                    .ok_or_else(|| UnknownToken(w.as_ref().to_owned()))
            })
            .collect()
    }

    pub fn token_names(&self, tokens: &[TermId]) -> Vec<String> {
        tokens
            .iter()
            .map(|&t| self.symbols.term_name(t).to_owned())
            .collect()
    }

    /// Rule text in the load format: `!start`, then binary and unary rules in
    /// stored order. Probabilities print with the shortest representation
    /// that reparses to the identical f64.
    pub fn serialize_rules(&self) -> String {
        let mut out = format!("!start {}\n", self.symbols.nt_name(self.symbols.start));
        for r in &self.binary {
            out.push_str(&format!(
                "{} -> {} {} {}\n",
                self.symbols.nt_name(r.lhs),
                self.symbols.nt_name(r.left),
                self.symbols.nt_name(r.right),
                r.prob
            ));
        }
        for r in &self.unary {
            out.push_str(&format!(
                "{} -> {} {}\n",
                self.symbols.nt_name(r.lhs),
                self.symbols.nt_name(r.child),
                r.prob
            ));
        }
        out
    }

    pub fn serialize_lexicon(&self) -> String {
        let mut out = String::new();
        for r in &self.lexical {
            out.push_str(&format!(
                "{} {} {}\n",
                self.symbols.nt_name(r.lhs),
                self.symbols.term_name(r.terminal),
                r.prob
            ));
        }
        out
    }
}
