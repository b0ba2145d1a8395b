//! Randomized invariants over generated grammars, corpora, and raw vectors.

mod common;

use common::*;
use pcfgkit::compare::r_squared;
use pcfgkit::earley::PrefixScorer;
use pcfgkit::grammar::{Grammar, NtId};
use pcfgkit::inside_outside::{inside, masked_distribution};
use pcfgkit::sampler::sample_derivation;
use pcfgkit::stats::{sentence_length_histogram, spearman};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn variance(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64
}

proptest! {
    #[test]
    fn grammar_text_round_trips(seed in any::<u64>()) {
        let (rules, lex) = random_grammar_text(seed);
        let g = Grammar::parse(&rules, &lex).unwrap();
        let h = Grammar::parse(&g.serialize_rules(), &g.serialize_lexicon()).unwrap();
        // serialization is a fixpoint: shortest-round-trip floats re-read
        // bit-identically and symbol interning order is reproduced
        prop_assert_eq!(g.serialize_rules(), h.serialize_rules());
        prop_assert_eq!(g.serialize_lexicon(), h.serialize_lexicon());
    }

    #[test]
    fn histogram_is_a_distribution(lens in prop::collection::vec(1usize..30, 1..50)) {
        let corpus: Vec<Vec<String>> = lens
            .iter()
            .map(|&n| vec!["t".to_owned(); n])
            .collect();
        let hist = sentence_length_histogram(&corpus).unwrap();
        let total: f64 = hist.values().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(hist.values().all(|&p| p > 0.0));
        prop_assert_eq!(hist.len(), {
            let mut ls = lens.clone();
            ls.sort_unstable();
            ls.dedup();
            ls.len()
        });
    }

    #[test]
    fn spearman_depends_only_on_ranks(
        pairs in prop::collection::vec((-30.0f64..30.0, -30.0f64..30.0), 3..40),
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        prop_assume!(x.iter().any(|&v| v != x[0]));
        prop_assume!(y.iter().any(|&v| v != y[0]));
        let base = spearman(&x, &y).unwrap();
        // doubling is exact in IEEE arithmetic, so it preserves the exact
        // tie structure as well as the order
        let xs: Vec<f64> = x.iter().map(|&v| 2.0 * v).collect();
        let scaled = spearman(&xs, &y).unwrap();
        prop_assert!((base - scaled).abs() <= 1e-12, "{base} vs {scaled}");
        prop_assert!((-1.0..=1.0).contains(&base));
    }

    #[test]
    fn r_squared_is_affine_invariant(
        pairs in prop::collection::vec((-20.0f64..20.0, -20.0f64..20.0), 3..30),
        a in 0.5f64..3.0,
        b in -5.0f64..5.0,
        c in 0.5f64..3.0,
        d in -5.0f64..5.0,
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        prop_assume!(variance(&x) > 0.01 && variance(&y) > 0.01);
        let base = r_squared(&x, &y).unwrap();
        let xt: Vec<f64> = x.iter().map(|&v| a * v + b).collect();
        let yt: Vec<f64> = y.iter().map(|&v| c * v + d).collect();
        let moved = r_squared(&xt, &yt).unwrap();
        prop_assert!((base - moved).abs() <= 1e-6, "{base} vs {moved}");
        prop_assert!((0.0..=1.0 + 1e-12).contains(&base));
    }

    #[test]
    fn unary_closure_is_a_fixpoint(seed in any::<u64>()) {
        let (rules, lex) = random_grammar_text(seed);
        let g = Grammar::parse(&rules, &lex).unwrap();
        let n = g.n_nonterminals();
        let mut closure = vec![0.0f64; n * n];
        for a in 0..n {
            for &(b, w) in g.closure_row(NtId(a as u32)) {
                closure[a * n + b.idx()] = w.exp();
            }
        }
        let mut unary = vec![0.0f64; n * n];
        for r in g.unary() {
            unary[r.lhs.idx() * n + r.child.idx()] += r.prob;
        }
        // C = I + U·C, entrywise
        for a in 0..n {
            for b in 0..n {
                let mut rhs = if a == b { 1.0 } else { 0.0 };
                for k in 0..n {
                    rhs += unary[a * n + k] * closure[k * n + b];
                }
                let lhs = closure[a * n + b];
                prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0), "{lhs} vs {rhs}");
            }
        }
    }
}

proptest! {
    // chart-heavy cases: keep the sample count small
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn charts_agree_with_sampled_derivations(seed in any::<u64>()) {
        let (rules, lex) = random_grammar_text(seed);
        let g = Grammar::parse(&rules, &lex).unwrap();
        let scorer = PrefixScorer::new(&g).unwrap();
        for s in sample_sentences(&g, seed ^ 0x5eed, 3, 1, 8) {
            let chart = inside(&g, &s);
            prop_assert!(chart.has_parse());
            for i in 0..s.len() {
                let dist = masked_distribution(&g, &s, i).unwrap();
                let total: f64 = dist.logps.iter().map(|&lp| lp.exp()).sum();
                prop_assert!((total - 1.0).abs() <= 1e-9);
            }
            // prefix mass shrinks as the prefix grows and never falls below
            // the full sentence's probability
            let prefixes = scorer.prefix_logprobs(&s);
            for w in prefixes.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12);
            }
            prop_assert!(chart.sentence_logp <= prefixes[s.len() - 1] + 1e-9);
        }
    }

    #[test]
    fn sampled_derivation_mass_is_within_sentence_mass(seed in any::<u64>()) {
        let (rules, lex) = random_grammar_text(seed);
        let g = Grammar::parse(&rules, &lex).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
        let mut kept = 0;
        for _ in 0..100_000 {
            if kept == 3 {
                break;
            }
            let Ok(d) = sample_derivation(&g, &mut rng, 10_000) else { continue };
            if d.tokens.len() > 8 {
                continue;
            }
            kept += 1;
            prop_assert_eq!(d.tokens.len(), d.tags.len());
            // one derivation's probability never exceeds the sentence total
            let sentence = inside(&g, &d.tokens).sentence_logp;
            prop_assert!(d.logp <= sentence + 1e-9, "{} vs {sentence}", d.logp);
        }
        prop_assert_eq!(kept, 3, "sampler failed to produce short sentences");
    }
}
