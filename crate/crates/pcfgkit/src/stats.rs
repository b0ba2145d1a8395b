//! Corpus-shape diagnostics: rank-frequency fits, length histograms, and
//! rank correlations between corpora.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::num::nelder_mead_2d;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum StatsError {
    #[error("alternating split produced an empty half")]
    EmptyHalf,
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("rank-frequency fit diverged: {0}")]
    FitDiverged(&'static str),
}

/// Item counts with their sum; iteration order is lexicographic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FreqTable {
    pub counts: BTreeMap<String, u64>,
    pub total: u64,
}

impl FreqTable {
    pub fn add(&mut self, item: &str, n: u64) {
        *self.counts.entry(item.to_owned()).or_default() += n;
        self.total += n;
    }

    pub fn count(&self, item: &str) -> u64 {
        self.counts.get(item).copied().unwrap_or(0)
    }

    pub fn scaled(&self, k: u64) -> FreqTable {
        FreqTable {
            counts: self.counts.iter().map(|(t, &c)| (t.clone(), c * k)).collect(),
            total: self.total * k,
        }
    }
}

pub fn token_frequencies<S: AsRef<str>>(corpus: &[Vec<S>]) -> FreqTable {
    let mut f = FreqTable::default();
    for sentence in corpus {
        for tok in sentence {
            f.add(tok.as_ref(), 1);
        }
    }
    f
}

/// Sentence-internal n-grams (no padding), rendered space-joined.
pub fn ngram_frequencies<S: AsRef<str>>(corpus: &[Vec<S>], n: usize) -> FreqTable {
    let mut f = FreqTable::default();
    for sentence in corpus {
        if sentence.len() < n {
            continue;
        }
        for window in sentence.windows(n) {
            let gram = window
                .iter()
                .map(|t| t.as_ref())
                .collect::<Vec<_>>()
                .join(" ");
            f.add(&gram, 1);
        }
    }
    f
}

/// Frequency ranks, 1 = most frequent; ties broken by token order so every
/// ranked token has a distinct rank.
#[derive(Debug, Clone)]
pub struct RankTable {
    pub ranks: BTreeMap<String, usize>,
    pub n_ranked: usize,
}

impl RankTable {
    /// Tokens absent from the ranking share the sentinel rank `n_ranked + 1`.
    pub fn rank_or_sentinel(&self, token: &str) -> usize {
        self.ranks.get(token).copied().unwrap_or(self.n_ranked + 1)
    }
}

pub fn rank_by_frequency(freq: &FreqTable) -> RankTable {
    let mut items: Vec<(&String, u64)> = freq.counts.iter().map(|(t, &c)| (t, c)).collect();
    items.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let ranks = items
        .into_iter()
        .enumerate()
        .map(|(i, (t, _))| (t.clone(), i + 1))
        .collect::<BTreeMap<_, _>>();
    let n_ranked = ranks.len();
    RankTable { ranks, n_ranked }
}

/// Rank on one half, read frequencies off the other: even-indexed sentences
/// feed the rank table, odd-indexed ones the frequency table.
pub fn split_half_rank_freq<S: AsRef<str>>(
    corpus: &[Vec<S>],
) -> Result<(RankTable, FreqTable), StatsError> {
    let half_a: Vec<Vec<&str>> = corpus
        .iter()
        .step_by(2)
        .map(|s| s.iter().map(|t| t.as_ref()).collect())
        .collect();
    let half_b: Vec<Vec<&str>> = corpus
        .iter()
        .skip(1)
        .step_by(2)
        .map(|s| s.iter().map(|t| t.as_ref()).collect())
        .collect();
    if half_a.is_empty() || half_b.is_empty() {
        return Err(StatsError::EmptyHalf);
    }
    Ok((
        rank_by_frequency(&token_frequencies(&half_a)),
        token_frequencies(&half_b),
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct ZipfFit {
    pub alpha: f64,
    pub beta: f64,
    pub loglik: f64,
    /// Ascending distinct ranks entering the fit, parallel to `counts` and
    /// `residuals`.
    pub ranks: Vec<usize>,
    /// Observed count at each rank (sentinel-rank tokens pooled).
    pub counts: Vec<u64>,
    /// ln(observed freq) − ln(fitted freq) per rank.
    pub residuals: Vec<f64>,
    /// Set when the fitted curve spans less than 0.1 nats of log-frequency:
    /// the data carries little rank-frequency signal.
    pub flatness_warning: bool,
}

const ZIPF_STARTS: [[f64; 2]; 5] = [[0.5, 0.0], [1.0, 0.5], [1.5, 2.0], [2.0, 1.0], [0.8, 5.0]];

/// Maximum-likelihood Zipf–Mandelbrot fit p(r) = (r+β)^{−α} / Z with Z summed
/// over the observed distinct ranks. Tokens sharing the sentinel rank pool
/// their counts.
pub fn fit_zipf_mandelbrot(ranks: &RankTable, freq: &FreqTable) -> Result<ZipfFit, StatsError> {
    let mut by_rank: BTreeMap<usize, u64> = BTreeMap::new();
    for (token, &count) in &freq.counts {
        *by_rank.entry(ranks.rank_or_sentinel(token)).or_default() += count;
    }
    if by_rank.len() < 10 {
        return Err(StatsError::FitDiverged("fewer than 10 distinct ranks"));
    }
    let total: u64 = by_rank.values().sum();
    let rs: Vec<f64> = by_rank.keys().map(|&r| r as f64).collect();
    // proportions rather than raw counts: the optimum is then exactly
    // invariant under rescaling all frequencies
    let ws: Vec<f64> = by_rank.values().map(|&c| c as f64 / total as f64).collect();

    let objective = |p: &[f64; 2]| {
        let (a, b) = (p[0], p[1]);
        if a <= 0.0 || b <= -1.0 {
            return f64::INFINITY;
        }
        let mut z = 0.0;
        let mut s = 0.0;
        for (r, w) in rs.iter().zip(&ws) {
            let lr = (r + b).ln();
            z += (-a * lr).exp();
            s -= w * a * lr;
        }
        z.ln() - s
    };

    let (mut best_p, mut best_v) = ([f64::NAN; 2], f64::INFINITY);
    for start in ZIPF_STARTS {
        let (p, v) = nelder_mead_2d(objective, start, 1e-8, 4000);
        if v < best_v {
            best_p = p;
            best_v = v;
        }
    }
    if !best_v.is_finite() {
        return Err(StatsError::FitDiverged("no finite optimum"));
    }
    let (alpha, beta) = (best_p[0], best_p[1]);

    let z: f64 = rs.iter().map(|r| (-alpha * (r + beta).ln()).exp()).sum();
    let mut out_ranks = Vec::with_capacity(by_rank.len());
    let mut counts = Vec::with_capacity(by_rank.len());
    let mut residuals = Vec::with_capacity(by_rank.len());
    for (&r, &c) in &by_rank {
        let fitted = total as f64 * (-alpha * (r as f64 + beta).ln()).exp() / z;
        out_ranks.push(r);
        counts.push(c);
        residuals.push((c as f64).ln() - fitted.ln());
    }
    let span = alpha * ((rs[rs.len() - 1] + beta) / (rs[0] + beta)).ln();
    Ok(ZipfFit {
        alpha,
        beta,
        loglik: -(total as f64) * best_v,
        ranks: out_ranks,
        counts,
        residuals,
        flatness_warning: span < 0.1,
    })
}

pub fn sentence_length_histogram<S>(corpus: &[Vec<S>]) -> Result<BTreeMap<usize, f64>, StatsError> {
    if corpus.is_empty() {
        return Err(StatsError::EmptyCorpus);
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for sentence in corpus {
        *counts.entry(sentence.len()).or_default() += 1;
    }
    let n = corpus.len() as f64;
    Ok(counts.into_iter().map(|(l, c)| (l, c as f64 / n)).collect())
}

/// 1-based average ranks of `values`, ascending; ties share the mean rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
    let mut ranks = vec![0.0; values.len()];
    let mut k = 0;
    while k < idx.len() {
        let mut m = k;
        while m + 1 < idx.len() && values[idx[m + 1]] == values[idx[k]] {
            m += 1;
        }
        let avg = (k + m) as f64 / 2.0 + 1.0;
        for &i in &idx[k..=m] {
            ranks[i] = avg;
        }
        k = m + 1;
    }
    ranks
}

/// Pearson correlation of two rank vectors. Identical vectors short-circuit
/// to 1 so fully tied inputs correlate with themselves.
fn rank_correlation(ra: &[f64], rb: &[f64]) -> Result<f64, StatsError> {
    if ra == rb {
        return Ok(1.0);
    }
    let n = ra.len() as f64;
    let (ma, mb) = (
        ra.iter().sum::<f64>() / n,
        rb.iter().sum::<f64>() / n,
    );
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (a, b) in ra.iter().zip(rb) {
        let (da, db) = (a - ma, b - mb);
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if va == 0.0 || vb == 0.0 {
        return Err(StatsError::DegenerateInput("constant ranks"));
    }
    Ok(cov / (va * vb).sqrt())
}

/// Spearman ρ over the union of each corpus' n-grams, missing counts
/// zero-filled, tied counts average-ranked.
pub fn ngram_spearman<S: AsRef<str>>(
    a: &[Vec<S>],
    b: &[Vec<S>],
    n: usize,
) -> Result<f64, StatsError> {
    if n == 0 {
        return Err(StatsError::DegenerateInput("n-gram order must be >= 1"));
    }
    let fa = ngram_frequencies(a, n);
    let fb = ngram_frequencies(b, n);
    let union: BTreeSet<&String> = fa.counts.keys().chain(fb.counts.keys()).collect();
    if union.len() < 2 {
        return Err(StatsError::DegenerateInput("fewer than 2 distinct n-grams"));
    }
    let ca: Vec<f64> = union.iter().map(|g| fa.count(g) as f64).collect();
    let cb: Vec<f64> = union.iter().map(|g| fb.count(g) as f64).collect();
    rank_correlation(&average_ranks(&ca), &average_ranks(&cb))
}

/// Spearman rank correlation of two equal-length value lists.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::DegenerateInput("length mismatch"));
    }
    if x.len() < 3 {
        return Err(StatsError::DegenerateInput("fewer than 3 points"));
    }
    let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
    if constant(x) || constant(y) {
        return Err(StatsError::DegenerateInput("constant vector"));
    }
    rank_correlation(&average_ranks(x), &average_ranks(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn corpus(lines: &[&str]) -> Vec<Vec<String>> {
        lines
            .iter()
            .map(|l| l.split_whitespace().map(str::to_owned).collect())
            .collect()
    }

    #[test]
    fn average_ranks_handle_ties() {
        assert_eq!(average_ranks(&[1.0, 1.0, 2.0]), vec![1.5, 1.5, 3.0]);
        assert_eq!(average_ranks(&[3.0, 1.0, 2.0]), vec![3.0, 1.0, 2.0]);
    }

    #[test]
    fn spearman_reference_values() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        let rho = spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((rho - 0.8660254037844386).abs() < 1e-12);
    }

    #[test]
    fn spearman_rejects_degenerate_input() {
        assert!(spearman(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
        assert!(spearman(&[5.0, 5.0, 5.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(spearman(&[5.0, 5.0, 5.0], &[7.0, 7.0, 7.0]).is_err());
    }

    #[test]
    fn spearman_is_monotone_invariant() {
        let x = [0.3, 1.2, 0.9, 4.0, 2.2];
        let y = [5.0, 1.0, 9.0, 2.0, 7.0];
        let ex: Vec<f64> = x.iter().map(|&v| f64::exp(v)).collect();
        assert_eq!(spearman(&x, &y).unwrap(), spearman(&ex, &y).unwrap());
    }

    #[test]
    fn ranks_break_ties_lexicographically() {
        let mut f = FreqTable::default();
        f.add("b", 2);
        f.add("a", 2);
        f.add("c", 1);
        let r = rank_by_frequency(&f);
        assert_eq!(r.ranks["a"], 1);
        assert_eq!(r.ranks["b"], 2);
        assert_eq!(r.ranks["c"], 3);
        assert_eq!(r.rank_or_sentinel("zzz"), 4);
    }

    #[test]
    fn split_half_alternates_sentences() {
        let c = corpus(&["w", "w", "w", "w"]);
        let (ranks, freq) = split_half_rank_freq(&c).unwrap();
        assert_eq!(ranks.ranks["w"], 1);
        assert_eq!(freq.count("w"), 2);

        let c = corpus(&["a a", "a q"]);
        let (ranks, freq) = split_half_rank_freq(&c).unwrap();
        assert_eq!(ranks.rank_or_sentinel("q"), 2);
        assert_eq!(freq.count("q"), 1);

        assert_eq!(
            split_half_rank_freq(&corpus(&["a b"])).unwrap_err(),
            StatsError::EmptyHalf
        );
    }

    #[test]
    fn histogram_proportions_sum_to_one() {
        let h = sentence_length_histogram(&corpus(&["a b", "a c"])).unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h[&2], 1.0);

        let h = sentence_length_histogram(&corpus(&["a", "a b", "a b c", "a"])).unwrap();
        assert!((h.values().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(h[&1], 0.5);

        let empty: Vec<Vec<String>> = Vec::new();
        assert_eq!(
            sentence_length_histogram(&empty).unwrap_err(),
            StatsError::EmptyCorpus
        );
    }

    #[test]
    fn ngram_spearman_reference_values() {
        let a = corpus(&["a b", "a b", "a b", "a c"]);
        let b = corpus(&["a b", "a c", "a c", "a c"]);
        assert_eq!(ngram_spearman(&a, &b, 2).unwrap(), -1.0);
        assert_eq!(ngram_spearman(&a, &a, 2).unwrap(), 1.0);
        assert_eq!(ngram_spearman(&a, &a, 1).unwrap(), 1.0);

        let uniform = corpus(&["a b c"]);
        assert_eq!(ngram_spearman(&uniform, &uniform, 1).unwrap(), 1.0);
        assert!(ngram_spearman(&uniform, &uniform, 3).is_err());
    }

    #[test]
    fn reversed_trigram_frequencies_anticorrelate() {
        let a = corpus(&["x y z", "x y z", "x y z", "p q r", "p q r", "m n o"]);
        let b = corpus(&["x y z", "p q r", "p q r", "m n o", "m n o", "m n o"]);
        assert_eq!(ngram_spearman(&a, &b, 3).unwrap(), -1.0);
    }

    fn zm_sample(alpha: f64, beta: f64, vocab: usize, n: usize, seed: u64) -> FreqTable {
        let weights: Vec<f64> = (1..=vocab)
            .map(|r| (-alpha * (r as f64 + beta).ln()).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        let mut cum = Vec::with_capacity(vocab);
        let mut acc = 0.0;
        for w in &weights {
            acc += w / total;
            cum.push(acc);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = FreqTable::default();
        for _ in 0..n {
            let u: f64 = rng.gen();
            let r = (cum.partition_point(|&c| c <= u) + 1).min(vocab);
            f.add(&format!("tok{r:04}"), 1);
        }
        f
    }

    #[test]
    fn zipf_fit_recovers_parameters() {
        let freq = zm_sample(1.2, 1.0, 300, 30_000, 42);
        let fit = fit_zipf_mandelbrot(&rank_by_frequency(&freq), &freq).unwrap();
        assert!((fit.alpha - 1.2).abs() < 0.1, "alpha {}", fit.alpha);
        assert!((fit.beta - 1.0).abs() < 0.5, "beta {}", fit.beta);
        assert!(!fit.flatness_warning);
        assert!(fit.loglik < 0.0);
        assert_eq!(fit.residuals.len(), fit.ranks.len());
    }

    #[test]
    fn zipf_fit_is_scale_invariant() {
        let freq = zm_sample(1.5, 2.0, 100, 5_000, 7);
        let ranks = rank_by_frequency(&freq);
        let fit1 = fit_zipf_mandelbrot(&ranks, &freq).unwrap();
        let fit7 = fit_zipf_mandelbrot(&ranks, &freq.scaled(7)).unwrap();
        assert_eq!(fit1.alpha.to_bits(), fit7.alpha.to_bits());
        assert_eq!(fit1.beta.to_bits(), fit7.beta.to_bits());
    }

    #[test]
    fn uniform_frequencies_fit_flat() {
        let mut f = FreqTable::default();
        for i in 0..100 {
            f.add(&format!("t{i:03}"), 10);
        }
        let fit = fit_zipf_mandelbrot(&rank_by_frequency(&f), &f).unwrap();
        assert!(fit.alpha < 0.05, "alpha {}", fit.alpha);
        assert!(fit.flatness_warning);
    }

    #[test]
    fn sparse_rank_input_diverges() {
        let mut f = FreqTable::default();
        f.add("only", 100);
        let err = fit_zipf_mandelbrot(&rank_by_frequency(&f), &f).unwrap_err();
        assert!(matches!(err, StatsError::FitDiverged(_)));
    }
}
