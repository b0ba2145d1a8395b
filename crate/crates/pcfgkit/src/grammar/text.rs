//! Line-oriented grammar text format.
//!
//! Rule line: `LHS -> RHS1 [RHS2] PROB`; lexicon line: `TAG token PROB`;
//! `#` starts a comment line; the start symbol is declared once as
//! `!start SYMBOL` in the rule text. Probabilities are decimals in (0, 1].

use super::{
    BinaryRule, Grammar, GrammarError, LexicalRule, NtId, SymbolInterner, UnaryRule,
};

/// Load-time switches. `prob_floor` drops rules below the given probability;
/// `renormalize` rescales each LHS distribution to sum to 1 afterwards.
#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub prob_floor: f64,
    pub renormalize: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            prob_floor: 0.0,
            renormalize: false,
        }
    }
}

pub(super) fn parse_grammar_text(
    rule_text: &str,
    lexicon_text: &str,
) -> Result<Grammar, GrammarError> {
    parse_grammar_text_with(rule_text, lexicon_text, &LoadOptions::default())
}

pub(super) fn parse_grammar_text_with(
    rule_text: &str,
    lexicon_text: &str,
    options: &LoadOptions,
) -> Result<Grammar, GrammarError> {
    let mut interner = SymbolInterner::default();
    let mut binary: Vec<BinaryRule> = Vec::new();
    let mut unary: Vec<UnaryRule> = Vec::new();
    let mut lexical: Vec<LexicalRule> = Vec::new();
    let mut start_name: Option<String> = None;

    for (i, raw) in rule_text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields[0] == "!start" {
            if fields.len() != 2 {
                return Err(malformed("rules", line, "expected `!start SYMBOL`"));
            }
            if start_name.is_some() {
                return Err(malformed("rules", line, "duplicate !start declaration"));
            }
            interner.intern_nt(fields[1]);
            start_name = Some(fields[1].to_owned());
            continue;
        }
        if fields.len() < 4 || fields[1] != "->" {
            return Err(malformed(
                "rules",
                line,
                "expected `LHS -> RHS1 [RHS2] PROB`",
            ));
        }
        let children = &fields[2..fields.len() - 1];
        if children.len() > 2 {
            return Err(GrammarError::ArityError {
                context: "rules",
                line,
            });
        }
        let prob = parse_prob("rules", line, fields[fields.len() - 1])?;
        let lhs = interner.intern_nt(fields[0]);
        match children {
            [child] => unary.push(UnaryRule {
                lhs,
                child: interner.intern_nt(child),
                prob,
                logp: prob.ln(),
            }),
            [left, right] => binary.push(BinaryRule {
                lhs,
                left: interner.intern_nt(left),
                right: interner.intern_nt(right),
                prob,
                logp: prob.ln(),
            }),
            _ => unreachable!("children count checked above"),
        }
    }

    for (i, raw) in lexicon_text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(malformed("lexicon", line, "expected `TAG token PROB`"));
        }
        let prob = parse_prob("lexicon", line, fields[2])?;
        lexical.push(LexicalRule {
            lhs: interner.intern_nt(fields[0]),
            terminal: interner.intern_term(fields[1]),
            prob,
            logp: prob.ln(),
        });
    }

    let start_name =
        start_name.ok_or_else(|| GrammarError::UnknownStart("no !start declaration".into()))?;
    let start: NtId = interner
        .lookup_nt(&start_name)
        .expect("start symbol interned at declaration");
    if !has_rules(start, &binary, &unary, &lexical) {
        return Err(GrammarError::UnknownStart(format!(
            "start symbol {start_name} has no rules"
        )));
    }

    Grammar::build(interner, start, binary, unary, lexical, options)
}

fn has_rules(
    nt: NtId,
    binary: &[BinaryRule],
    unary: &[UnaryRule],
    lexical: &[LexicalRule],
) -> bool {
    binary.iter().any(|r| r.lhs == nt)
        || unary.iter().any(|r| r.lhs == nt)
        || lexical.iter().any(|r| r.lhs == nt)
}

fn malformed(context: &'static str, line: usize, message: &str) -> GrammarError {
    GrammarError::MalformedLine {
        context,
        line,
        message: message.to_owned(),
    }
}

fn parse_prob(context: &'static str, line: usize, text: &str) -> Result<f64, GrammarError> {
    let p: f64 = text
        .parse()
        .map_err(|_| malformed(context, line, "probability is not a number"))?;
    if !p.is_finite() || p <= 0.0 || p > 1.0 {
        return Err(malformed(context, line, "probability must be in (0, 1]"));
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::super::Grammar;
    use super::*;

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let rules = "# grammar\n\n!start S\n  # indented comment\nS -> A B 1.0\n";
        let lex = "A a 1.0\n\n# lexicon comment\nB b 1.0\n";
        let g = Grammar::parse(rules, lex).unwrap();
        assert_eq!(g.binary().len(), 1);
        assert_eq!(g.lexical().len(), 2);
    }

    #[test]
    fn malformed_lines_are_rejected() {
        for (rules, lex) in [
            ("!start S\nS => A B 1.0\n", "A a 1.0\nB b 1.0\n"),
            ("!start S\nS -> A B one\n", "A a 1.0\nB b 1.0\n"),
            ("!start S\nS -> A B 0.0\n", "A a 1.0\nB b 1.0\n"),
            ("!start S\nS -> A B 1.5\n", "A a 1.0\nB b 1.0\n"),
            ("!start S\nS -> 1.0\n", "A a 1.0\nB b 1.0\n"),
            ("!start S\n!start S\nS -> A B 1.0\n", "A a 1.0\nB b 1.0\n"),
            ("!start S\nS -> A B 1.0\n", "A a 1.0\nB b 1.0 extra\n"),
        ] {
            assert!(
                matches!(
                    Grammar::parse(rules, lex),
                    Err(GrammarError::MalformedLine { .. })
                ),
                "should reject {rules:?} / {lex:?}"
            );
        }
    }

    #[test]
    fn mixed_lexicality_is_allowed() {
        // the same nonterminal may carry phrasal and lexical rules
        let g = Grammar::parse("!start S\nS -> S S 0.3\n", "S x 0.7\n").unwrap();
        let s = g.start();
        assert_eq!(g.binary_ids_of(s).len(), 1);
        assert_eq!(g.lexical_ids_of(s).len(), 1);
        assert!((g.lexical_mass(s) - 0.7).abs() < 1e-12);
    }
}
