//! Exact inside and outside charts over binarized grammars with unary
//! closure, masked token distributions, and pseudo-perplexity.
//!
//! Chains of unary rewrites are never materialized as chart items. The inside
//! table stores β with leading unary chains summed via the closure weights;
//! the outside table stores α at the point where a binary or lexical rule
//! applies (the bottom of the incoming unary chain). Under this convention
//! every parse tree is counted exactly once by the width-1 identity
//! Σ_j α_j(i,i) · P(j → w_i) = P(w).

use crate::grammar::{Grammar, NtId, TermId, UnknownToken};
use crate::num::log_add;

const NEG_INF: f64 = f64::NEG_INFINITY;

#[derive(Debug, thiserror::Error)]
pub enum ChartError {
    #[error(transparent)]
    UnknownToken(#[from] UnknownToken),
    #[error("no terminal substitution at position {position} yields a parse")]
    NoContextParse { position: usize },
}

/// Triangular span table index for 0-based inclusive spans p ≤ q.
#[inline]
fn span_index(p: usize, q: usize) -> usize {
    q * (q + 1) / 2 + p
}

/// Inside log-probabilities. `inside` includes unary chains above each
/// constituent; `lexical_inside` is the direct emission probability of the
/// token at a width-1 span.
#[derive(Debug, Clone)]
pub struct InsideChart {
    n: usize,
    n_nt: usize,
    full: Vec<f64>,
    lex: Vec<f64>,
    pub sentence_logp: f64,
}

impl InsideChart {
    pub fn n_tokens(&self) -> usize {
        self.n
    }

    /// log β_nt(p, q), spans 0-based inclusive.
    pub fn inside(&self, p: usize, q: usize, nt: NtId) -> f64 {
        self.full[span_index(p, q) * self.n_nt + nt.idx()]
    }

    /// log P(nt → w_i): emission without unary chains.
    pub fn lexical_inside(&self, i: usize, nt: NtId) -> f64 {
        self.lex[i * self.n_nt + nt.idx()]
    }

    pub fn has_parse(&self) -> bool {
        self.sentence_logp > NEG_INF
    }
}

/// Outside log-probabilities α at the bottom of each unary chain: the weight
/// multiplying a rule application (or lexical emission) at that span.
#[derive(Debug, Clone)]
pub struct OutsideChart {
    n_nt: usize,
    bot: Vec<f64>,
}

impl OutsideChart {
    /// log α_nt(p, q).
    pub fn outside(&self, p: usize, q: usize, nt: NtId) -> f64 {
        self.bot[span_index(p, q) * self.n_nt + nt.idx()]
    }

    fn bot_row(&self, p: usize, q: usize) -> &[f64] {
        let at = span_index(p, q) * self.n_nt;
        &self.bot[at..at + self.n_nt]
    }
}

/// β with unary chains: out[a] = logsum_b closure(a → b) + raw[b].
fn apply_closure(g: &Grammar, raw: &[f64], out: &mut [f64]) {
    for (a, slot) in out.iter_mut().enumerate() {
        let row = g.closure_row(NtId(a as u32));
        let mut mx = NEG_INF;
        for &(b, w) in row {
            let s = w + raw[b.idx()];
            if s > mx {
                mx = s;
            }
        }
        if mx == NEG_INF {
            *slot = NEG_INF;
            continue;
        }
        let mut acc = 0.0;
        for &(b, w) in row {
            acc += (w + raw[b.idx()] - mx).exp();
        }
        *slot = mx + acc.ln();
    }
}

pub fn inside(g: &Grammar, tokens: &[TermId]) -> InsideChart {
    inside_pruned(g, tokens, None)
}

/// Inside chart; `prune` drops cells whose log β falls below the threshold
/// immediately after each span is filled (None = exact).
pub fn inside_pruned(g: &Grammar, tokens: &[TermId], prune: Option<f64>) -> InsideChart {
    let n = tokens.len();
    let n_nt = g.n_nonterminals();
    let spans = n * (n + 1) / 2;
    let mut full = vec![NEG_INF; spans * n_nt];
    let mut lex = vec![NEG_INF; n * n_nt];
    let mut raw = vec![NEG_INF; n_nt];
    let mut mx = vec![NEG_INF; n_nt];
    let mut acc = vec![0.0; n_nt];

    for (i, &tok) in tokens.iter().enumerate() {
        let row = &mut lex[i * n_nt..(i + 1) * n_nt];
        for &ri in g.lexical_ids_for_terminal(tok) {
            let r = &g.lexical()[ri as usize];
            let slot = &mut row[r.lhs.idx()];
            *slot = log_add(*slot, r.logp);
        }
        raw.copy_from_slice(row);
        if let Some(t) = prune {
            for v in raw.iter_mut() {
                if *v < t {
                    *v = NEG_INF;
                }
            }
        }
        let at = span_index(i, i) * n_nt;
        apply_closure(g, &raw, &mut full[at..at + n_nt]);
    }

    for width in 2..=n {
        for p in 0..=(n - width) {
            let q = p + width - 1;
            mx.fill(NEG_INF);
            for d in p..q {
                let lrow = &full[span_index(p, d) * n_nt..(span_index(p, d) + 1) * n_nt];
                let rrow =
                    &full[span_index(d + 1, q) * n_nt..(span_index(d + 1, q) + 1) * n_nt];
                for r in g.binary() {
                    let s = r.logp + lrow[r.left.idx()] + rrow[r.right.idx()];
                    if s > mx[r.lhs.idx()] {
                        mx[r.lhs.idx()] = s;
                    }
                }
            }
            acc.fill(0.0);
            for d in p..q {
                let lrow = &full[span_index(p, d) * n_nt..(span_index(p, d) + 1) * n_nt];
                let rrow =
                    &full[span_index(d + 1, q) * n_nt..(span_index(d + 1, q) + 1) * n_nt];
                for r in g.binary() {
                    let m = mx[r.lhs.idx()];
                    if m > NEG_INF {
                        let s = r.logp + lrow[r.left.idx()] + rrow[r.right.idx()];
                        acc[r.lhs.idx()] += (s - m).exp();
                    }
                }
            }
            for j in 0..n_nt {
                raw[j] = if mx[j] > NEG_INF { mx[j] + acc[j].ln() } else { NEG_INF };
                if let Some(t) = prune {
                    if raw[j] < t {
                        raw[j] = NEG_INF;
                    }
                }
            }
            let at = span_index(p, q) * n_nt;
            apply_closure(g, &raw, &mut full[at..at + n_nt]);
        }
    }

    let sentence_logp = if n == 0 {
        NEG_INF
    } else {
        full[span_index(0, n - 1) * n_nt + g.start().idx()]
    };
    InsideChart {
        n,
        n_nt,
        full,
        lex,
        sentence_logp,
    }
}

/// Outside chart for the same sentence. α at the start symbol over the full
/// span is seeded to 1; propagation runs top-down through binary rules, with
/// unary chains folded in via the closure weights.
pub fn outside(g: &Grammar, inside: &InsideChart) -> OutsideChart {
    let n = inside.n;
    let n_nt = inside.n_nt;
    let spans = n * (n + 1) / 2;
    let mut top = vec![NEG_INF; spans * n_nt];
    let mut bot = vec![NEG_INF; spans * n_nt];
    if n == 0 {
        return OutsideChart { n_nt, bot };
    }
    top[span_index(0, n - 1) * n_nt + g.start().idx()] = 0.0;

    for width in (1..=n).rev() {
        for p in 0..=(n - width) {
            let q = p + width - 1;
            let cell = span_index(p, q) * n_nt;
            for a in 0..n_nt {
                let t = top[cell + a];
                if t == NEG_INF {
                    continue;
                }
                for &(b, w) in g.closure_row(NtId(a as u32)) {
                    let slot = &mut bot[cell + b.idx()];
                    *slot = log_add(*slot, t + w);
                }
            }
            if width == 1 {
                continue;
            }
            for d in p..q {
                let left_at = span_index(p, d) * n_nt;
                let right_at = span_index(d + 1, q) * n_nt;
                for r in g.binary() {
                    let o = bot[cell + r.lhs.idx()];
                    if o == NEG_INF {
                        continue;
                    }
                    let lb = inside.full[left_at + r.left.idx()];
                    let rb = inside.full[right_at + r.right.idx()];
                    if rb > NEG_INF {
                        let slot = &mut top[left_at + r.left.idx()];
                        *slot = log_add(*slot, o + r.logp + rb);
                    }
                    if lb > NEG_INF {
                        let slot = &mut top[right_at + r.right.idx()];
                        *slot = log_add(*slot, o + r.logp + lb);
                    }
                }
            }
        }
    }
    OutsideChart { n_nt, bot }
}

/// Convenience: both charts in one call.
pub fn charts(g: &Grammar, tokens: &[TermId]) -> (InsideChart, OutsideChart) {
    charts_with(g, tokens, None)
}

/// Both charts with an optional inside-probability floor; see
/// [`inside_pruned`]. `None` is exact.
pub fn charts_with(
    g: &Grammar,
    tokens: &[TermId],
    prune: Option<f64>,
) -> (InsideChart, OutsideChart) {
    let ic = inside_pruned(g, tokens, prune);
    let oc = outside(g, &ic);
    (ic, oc)
}

/// log Σ_j α_j(i,i) · P(j → w_i): the marginal over which preterminal emitted
/// token i. Equals the sentence log-probability at every position.
pub fn emission_marginal_logp(inside: &InsideChart, outside: &OutsideChart, i: usize) -> f64 {
    let lex = &inside.lex[i * inside.n_nt..(i + 1) * inside.n_nt];
    let bot = outside.bot_row(i, i);
    let mut mx = NEG_INF;
    for j in 0..inside.n_nt {
        let s = lex[j] + bot[j];
        if s > mx {
            mx = s;
        }
    }
    if mx == NEG_INF {
        return NEG_INF;
    }
    let mut acc = 0.0;
    for j in 0..inside.n_nt {
        acc += (lex[j] + bot[j] - mx).exp();
    }
    mx + acc.ln()
}

/// log Σ_k α_k(i,i) · Σ_w P(k → w): total mass the context assigns to
/// position i across all terminal fillers.
fn masked_denominator(g: &Grammar, outside: &OutsideChart, i: usize) -> f64 {
    let bot = outside.bot_row(i, i);
    let mut mx = NEG_INF;
    for k in 0..g.n_nonterminals() {
        let s = bot[k] + g.lexical_mass_log(NtId(k as u32));
        if s > mx {
            mx = s;
        }
    }
    if mx == NEG_INF {
        return NEG_INF;
    }
    let mut acc = 0.0;
    for k in 0..g.n_nonterminals() {
        acc += (bot[k] + g.lexical_mass_log(NtId(k as u32)) - mx).exp();
    }
    mx + acc.ln()
}

/// log Σ_j α_j(i,i) · P(j → t) for a candidate filler t.
fn masked_numerator(g: &Grammar, outside: &OutsideChart, i: usize, t: TermId) -> f64 {
    let bot = outside.bot_row(i, i);
    let mut acc = NEG_INF;
    for &ri in g.lexical_ids_for_terminal(t) {
        let r = &g.lexical()[ri as usize];
        acc = log_add(acc, bot[r.lhs.idx()] + r.logp);
    }
    acc
}

/// Exact distribution over fillers of one position given the rest of the
/// sentence. The support lists every terminal with nonzero probability, in
/// terminal-id order.
#[derive(Debug, Clone)]
pub struct MaskedDistribution {
    pub position: usize,
    pub support: Vec<TermId>,
    pub logps: Vec<f64>,
}

impl MaskedDistribution {
    pub fn logp_of(&self, t: TermId) -> f64 {
        match self.support.binary_search(&t) {
            Ok(at) => self.logps[at],
            Err(_) => NEG_INF,
        }
    }
}

pub fn masked_distribution(
    g: &Grammar,
    tokens: &[TermId],
    position: usize,
) -> Result<MaskedDistribution, ChartError> {
    let (_, oc) = charts(g, tokens);
    masked_distribution_from_charts(g, &oc, position)
        .ok_or(ChartError::NoContextParse { position })
}

fn masked_distribution_from_charts(
    g: &Grammar,
    oc: &OutsideChart,
    position: usize,
) -> Option<MaskedDistribution> {
    let den = masked_denominator(g, oc, position);
    if den == NEG_INF {
        return None;
    }
    let mut support = Vec::new();
    let mut logps = Vec::new();
    for t in 0..g.n_terminals() {
        let t = TermId(t as u32);
        let num = masked_numerator(g, oc, position, t);
        if num > NEG_INF {
            support.push(t);
            logps.push(num - den);
        }
    }
    Some(MaskedDistribution {
        position,
        support,
        logps,
    })
}

/// Per-position log P(w_i | w_{\i}) for the actual tokens, from a single
/// inside–outside pass. The outside value of a width-1 span never depends on
/// that span's own lexical entry, so the chart of the true sentence yields
/// every position's masked conditional at once.
pub fn masked_token_logps(g: &Grammar, tokens: &[TermId]) -> Result<Vec<f64>, ChartError> {
    masked_token_logps_with(g, tokens, None)
}

/// [`masked_token_logps`] with an optional inside floor; `None` is exact.
pub fn masked_token_logps_with(
    g: &Grammar,
    tokens: &[TermId],
    prune: Option<f64>,
) -> Result<Vec<f64>, ChartError> {
    let (_, oc) = charts_with(g, tokens, prune);
    let mut out = Vec::with_capacity(tokens.len());
    for (i, &tok) in tokens.iter().enumerate() {
        let den = masked_denominator(g, &oc, i);
        if den == NEG_INF {
            return Err(ChartError::NoContextParse { position: i });
        }
        out.push(masked_numerator(g, &oc, i, tok) - den);
    }
    Ok(out)
}

/// ψ-LL(w) = Σ_i log P(w_i | w_{\i}), with the per-position terms.
pub fn pseudo_ll(g: &Grammar, tokens: &[TermId]) -> Result<(f64, Vec<f64>), ChartError> {
    let per_position = masked_token_logps(g, tokens)?;
    Ok((per_position.iter().sum(), per_position))
}

/// ψ-PPL = exp(−ψ-LL / length).
pub fn pseudo_ppl(psi_ll: f64, length: usize) -> f64 {
    assert!(length > 0, "pseudo_ppl needs at least one token");
    (-psi_ll / length as f64).exp()
}
