//! Corpus files: one sentence per line, blank lines ignored.
//!
//! Three renderings of the same sentence:
//! tokens `a b`, tagged `a/A b/B`, trees `(S (A a) (B b))`.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::grammar::Grammar;
use crate::sampler::Derivation;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Tokens,
    Tagged,
    Trees,
}

impl CorpusFormat {
    pub fn extension(self) -> &'static str {
        match self {
            CorpusFormat::Tokens => "tok",
            CorpusFormat::Tagged => "tag",
            CorpusFormat::Trees => "trees",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: token {token:?} has no /TAG suffix")]
    MalformedToken { line: usize, token: String },
}

pub fn render_sentence(g: &Grammar, d: &Derivation, format: CorpusFormat) -> String {
    match format {
        CorpusFormat::Tokens => d.surface(g),
        CorpusFormat::Tagged => d.tagged(g),
        CorpusFormat::Trees => d.tree.clone(),
    }
}

pub fn write_split(
    path: &Path,
    g: &Grammar,
    sentences: &[Derivation],
    format: CorpusFormat,
) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for d in sentences {
        writeln!(out, "{}", render_sentence(g, d, format))?;
    }
    out.flush()
}

pub fn tokens_from_str(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split_whitespace().map(str::to_owned).collect())
        .collect()
}

pub fn read_tokens(path: &Path) -> Result<Vec<Vec<String>>, CorpusError> {
    Ok(tokens_from_str(&fs::read_to_string(path)?))
}

/// Parse `token/TAG` pairs; the tag starts after the last slash, so tokens
/// may themselves contain slashes.
pub fn tagged_from_str(text: &str) -> Result<Vec<Vec<(String, String)>>, CorpusError> {
    let mut sentences = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut sentence = Vec::new();
        for field in line.split_whitespace() {
            let (token, tag) =
                field
                    .rsplit_once('/')
                    .ok_or_else(|| CorpusError::MalformedToken {
                        line: i + 1,
                        token: field.to_owned(),
                    })?;
            sentence.push((token.to_owned(), tag.to_owned()));
        }
        sentences.push(sentence);
    }
    Ok(sentences)
}

pub fn read_tagged(path: &Path) -> Result<Vec<Vec<(String, String)>>, CorpusError> {
    tagged_from_str(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::Sampler;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_token_and_tagged_files() {
        let g = Grammar::parse("!start S\nS -> A B 1.0\n", "A a 1.0\nB b 0.5\nB c 0.5\n").unwrap();
        let sampler = Sampler::new(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sentences: Vec<_> = (0..5).map(|_| sampler.sample(&mut rng, 100).unwrap()).collect();
        let dir = tempfile::tempdir().unwrap();

        let tok = dir.path().join("s.tok");
        write_split(&tok, &g, &sentences, CorpusFormat::Tokens).unwrap();
        let read = read_tokens(&tok).unwrap();
        assert_eq!(read.len(), 5);
        for (d, r) in sentences.iter().zip(&read) {
            assert_eq!(d.surface(&g), r.join(" "));
        }

        let tag = dir.path().join("s.tag");
        write_split(&tag, &g, &sentences, CorpusFormat::Tagged).unwrap();
        let read = read_tagged(&tag).unwrap();
        for (d, r) in sentences.iter().zip(&read) {
            assert_eq!(d.tokens.len(), r.len());
            assert_eq!(r[0], ("a".to_owned(), "A".to_owned()));
        }
    }

    #[test]
    fn tagged_token_keeps_inner_slashes() {
        let parsed = tagged_from_str("a/b/TAG x/Y\n").unwrap();
        assert_eq!(parsed[0][0], ("a/b".to_owned(), "TAG".to_owned()));
        assert_eq!(parsed[0][1], ("x".to_owned(), "Y".to_owned()));
    }

    #[test]
    fn tagged_without_separator_is_rejected() {
        let err = tagged_from_str("a/A plain\n").unwrap_err();
        assert!(matches!(err, CorpusError::MalformedToken { line: 1, .. }));
    }

    #[test]
    fn blank_lines_are_skipped() {
        assert_eq!(tokens_from_str("a b\n\n  \nc\n").len(), 2);
    }
}
