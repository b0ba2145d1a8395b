//! Causal token probabilities via probabilistic Earley prefix parsing.
//!
//! Forward (prefix) and inner probabilities follow Stolcke's construction:
//! left recursion is folded into a precomputed reflexive-transitive
//! left-corner closure applied at prediction, and unary rules never appear as
//! states because unit productions are summed by the grammar's unary closure
//! at completion. Lexical predictions are restricted to the upcoming token;
//! that restriction is exact because unscanned states contribute nothing to
//! any prefix sum.

use std::collections::BTreeMap;

use crate::grammar::{Grammar, NtId, TermId};
use crate::inside_outside;
use crate::num::{self, log_add, log_sum, SquareMatrix};

const NEG_INF: f64 = f64::NEG_INFINITY;

#[derive(Debug, thiserror::Error)]
pub enum EarleyError {
    #[error("prefix has probability 0 at position {position}")]
    DeadPrefix { position: usize },
    #[error("left-corner closure diverged: {0}")]
    LeftCorner(num::DivergentClosure),
}

/// One scored token: conditional log-probability given the preceding tokens
/// and the cumulative prefix log-probability. Positions are 1-based.
#[derive(Debug, Clone)]
pub struct CausalScore {
    pub position: usize,
    pub token: TermId,
    pub cond_logp: f64,
    pub prefix_logp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum RuleRef {
    Binary(u32),
    Lex(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct StateKey {
    origin: u32,
    rule: RuleRef,
    dot: u8,
}

#[derive(Debug, Clone, Copy)]
struct Scores {
    fw: f64,
    inner: f64,
}

#[derive(Debug, Default)]
struct StateSet {
    states: BTreeMap<StateKey, Scores>,
    /// States whose dot awaits a nonterminal, indexed by that nonterminal.
    waiting: BTreeMap<NtId, Vec<StateKey>>,
    /// Lexical states with the dot before the terminal.
    scannable: Vec<StateKey>,
}

impl StateSet {
    fn add(&mut self, g: &Grammar, key: StateKey, fw: f64, inner: f64) {
        match self.states.entry(key) {
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let s = e.get_mut();
                s.fw = log_add(s.fw, fw);
                s.inner = log_add(s.inner, inner);
            }
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(Scores { fw, inner });
                match key.rule {
                    RuleRef::Binary(ri) => {
                        let r = &g.binary()[ri as usize];
                        match key.dot {
                            0 => self.waiting.entry(r.left).or_default().push(key),
                            1 => self.waiting.entry(r.right).or_default().push(key),
                            _ => {}
                        }
                    }
                    RuleRef::Lex(_) => {
                        if key.dot == 0 {
                            self.scannable.push(key);
                        }
                    }
                }
            }
        }
    }
}

fn is_complete(g: &Grammar, key: StateKey) -> Option<NtId> {
    match key.rule {
        RuleRef::Binary(ri) if key.dot == 2 => Some(g.binary()[ri as usize].lhs),
        RuleRef::Lex(ri) if key.dot == 1 => Some(g.lexical()[ri as usize].lhs),
        _ => None,
    }
}

/// Prefix-probability engine for one grammar. Construction precomputes the
/// left-corner closure; scoring is then per-sentence and shareable across
/// threads.
pub struct PrefixScorer<'g> {
    g: &'g Grammar,
    /// R_L rows: source nonterminal → [(left-corner reachable, log weight)].
    rl_rows: Vec<Vec<(NtId, f64)>>,
    /// States with forward log-prob below this are dropped; −∞ = exact.
    floor: f64,
}

impl<'g> PrefixScorer<'g> {
    pub fn new(g: &'g Grammar) -> Result<Self, EarleyError> {
        let n = g.n_nonterminals();
        let mut one_step = SquareMatrix::zeros(n);
        for r in g.binary() {
            one_step.add_to(r.lhs.idx(), r.left.idx(), r.prob);
        }
        for r in g.unary() {
            one_step.add_to(r.lhs.idx(), r.child.idx(), r.prob);
        }
        let closure = num::transitive_closure(&one_step).map_err(EarleyError::LeftCorner)?;
        let mut rl_rows = vec![Vec::new(); n];
        for a in 0..n {
            for b in 0..n {
                let w = closure.get(a, b);
                if w > 0.0 {
                    rl_rows[a].push((NtId(b as u32), w.ln()));
                }
            }
        }
        Ok(PrefixScorer {
            g,
            rl_rows,
            floor: NEG_INF,
        })
    }

    /// Like [`PrefixScorer::new`], but states whose forward probability falls
    /// below `floor_prob` are dropped. Prefix sums then under-count by the
    /// pruned mass; 0 keeps the computation exact.
    pub fn with_prune(g: &'g Grammar, floor_prob: f64) -> Result<Self, EarleyError> {
        let mut scorer = Self::new(g)?;
        if floor_prob > 0.0 {
            scorer.floor = floor_prob.ln();
        }
        Ok(scorer)
    }

    /// Predict non-unit rules for every nonterminal left-corner reachable
    /// from the given (nonterminal, forward log-prob) sources. Lexical rules
    /// are instantiated only for the token about to be scanned.
    fn predict(&self, set: &mut StateSet, at: u32, sources: &[(NtId, f64)], next_tok: TermId) {
        let g = self.g;
        let mut src = vec![NEG_INF; g.n_nonterminals()];
        for &(b, fwb) in sources {
            for &(d, w) in &self.rl_rows[b.idx()] {
                src[d.idx()] = log_add(src[d.idx()], fwb + w);
            }
        }
        for (d, &fw_d) in src.iter().enumerate() {
            if fw_d == NEG_INF || fw_d < self.floor {
                continue;
            }
            let d = NtId(d as u32);
            for &ri in g.binary_ids_of(d) {
                let r = &g.binary()[ri as usize];
                let key = StateKey {
                    origin: at,
                    rule: RuleRef::Binary(ri),
                    dot: 0,
                };
                set.add(g, key, fw_d + r.logp, r.logp);
            }
            for &ri in g.lexical_ids_of(d) {
                let r = &g.lexical()[ri as usize];
                if r.terminal != next_tok {
                    continue;
                }
                let key = StateKey {
                    origin: at,
                    rule: RuleRef::Lex(ri),
                    dot: 0,
                };
                set.add(g, key, fw_d + r.logp, r.logp);
            }
        }
    }

    /// Cumulative log P_G(w_1..=i) for every i. Entries stay −∞ from the
    /// first position where the prefix has no continuation.
    pub fn prefix_logprobs(&self, tokens: &[TermId]) -> Vec<f64> {
        let g = self.g;
        let n = tokens.len();
        let mut out = vec![NEG_INF; n];
        if n == 0 {
            return out;
        }
        let mut sets: Vec<StateSet> = Vec::with_capacity(n + 1);
        let mut first = StateSet::default();
        self.predict(&mut first, 0, &[(g.start(), 0.0)], tokens[0]);
        sets.push(first);

        for j in 0..n {
            let mut next = StateSet::default();
            let mut scanned_fw = Vec::new();
            // completion events by origin: (completed lhs, inner log-prob)
            let mut events: Vec<Vec<(NtId, f64)>> = vec![Vec::new(); j + 1];

            for &key in &sets[j].scannable {
                let RuleRef::Lex(ri) = key.rule else { unreachable!() };
                let r = &g.lexical()[ri as usize];
                debug_assert_eq!(r.terminal, tokens[j], "predictions are token-pruned");
                let sc = sets[j].states[&key];
                if sc.fw < self.floor {
                    continue;
                }
                let scanned = StateKey { dot: 1, ..key };
                next.add(g, scanned, sc.fw, sc.inner);
                scanned_fw.push(sc.fw);
                events[key.origin as usize].push((r.lhs, sc.inner));
            }
            if scanned_fw.is_empty() {
                break;
            }
            out[j] = log_sum(&scanned_fw);

            // Complete by strictly descending origin. A completion at origin
            // k only ever produces new complete states with a smaller origin
            // (a dot-1 parent's first child spans at least one token), so a
            // single sweep suffices. Events are summed per completed symbol
            // before advancing parents; processing them one by one would walk
            // every derivation path and blow up on ambiguous grammars.
            for k in (0..=j).rev() {
                let mut agg: BTreeMap<NtId, f64> = BTreeMap::new();
                for (c, z) in std::mem::take(&mut events[k]) {
                    agg.entry(c)
                        .and_modify(|acc| *acc = log_add(*acc, z))
                        .or_insert(z);
                }
                for (c, z) in agg {
                    for &(d, w) in g.closure_col(c) {
                        let Some(parents) = sets[k].waiting.get(&d) else {
                            continue;
                        };
                        for &pkey in parents {
                            let ps = sets[k].states[&pkey];
                            let adv = StateKey {
                                dot: pkey.dot + 1,
                                ..pkey
                            };
                            let fw = ps.fw + w + z;
                            let inner = ps.inner + w + z;
                            next.add(g, adv, fw, inner);
                            if let Some(lhs) = is_complete(g, adv) {
                                debug_assert!((pkey.origin as usize) < k);
                                events[pkey.origin as usize].push((lhs, inner));
                            }
                        }
                    }
                }
            }

            if j + 1 < n {
                let states = &next.states;
                let sources: Vec<(NtId, f64)> = next
                    .waiting
                    .iter()
                    .flat_map(|(&nt, keys)| keys.iter().map(move |k| (nt, states[k].fw)))
                    .collect();
                self.predict(&mut next, (j + 1) as u32, &sources, tokens[j + 1]);
            }
            sets.push(next);
        }
        out
    }

    /// log P_G(prefix): total mass of complete sentences extending the
    /// prefix. The empty prefix has log-probability 0.
    pub fn prefix_logprob(&self, tokens: &[TermId]) -> f64 {
        if tokens.is_empty() {
            return 0.0;
        }
        *self.prefix_logprobs(tokens).last().unwrap()
    }

    /// Per-token conditionals log P_G(w_i | w_{<i}) via prefix ratios.
    pub fn causal_scores(&self, tokens: &[TermId]) -> Result<Vec<CausalScore>, EarleyError> {
        let prefixes = self.prefix_logprobs(tokens);
        let mut out = Vec::with_capacity(tokens.len());
        let mut prev = 0.0;
        for (i, &prefix_logp) in prefixes.iter().enumerate() {
            if prefix_logp == NEG_INF {
                return Err(EarleyError::DeadPrefix { position: i + 1 });
            }
            out.push(CausalScore {
                position: i + 1,
                token: tokens[i],
                cond_logp: prefix_logp - prev,
                prefix_logp,
            });
            prev = prefix_logp;
        }
        Ok(out)
    }

    /// log of the end-of-string mass P_G(w) / P_G(prefix = w): the amount the
    /// per-token causal conditionals omit.
    pub fn completion_logprob(&self, tokens: &[TermId]) -> Result<f64, EarleyError> {
        let prefixes = self.prefix_logprobs(tokens);
        if let Some(dead) = prefixes.iter().position(|&p| p == NEG_INF) {
            return Err(EarleyError::DeadPrefix { position: dead + 1 });
        }
        let prefix = prefixes.last().copied().unwrap_or(0.0);
        let sentence = inside_outside::inside(self.g, tokens).sentence_logp;
        let completion = sentence - prefix;
        debug_assert!(completion <= 1e-9, "prefix mass below sentence mass");
        Ok(completion.min(0.0))
    }
}

/// PPL = exp(−(Σ conditional logp) / token count).
pub fn causal_ppl(scores: &[CausalScore]) -> f64 {
    assert!(!scores.is_empty(), "causal_ppl needs at least one token");
    let total: f64 = scores.iter().map(|s| s.cond_logp).sum();
    (-total / scores.len() as f64).exp()
}
