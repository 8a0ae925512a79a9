//! Corpus ingestion, document splitting and the built-in corpus generators.

use crate::error::{Error, Result};
use crate::rng::{derive_seed, Rng};
use crate::vocab::{TokenSeq, Vocab, TERMINATOR_SYMBOL};

/// Splits text into documents at blank lines. Whitespace-only documents are
/// dropped.
pub fn parse_documents(text: &str) -> Vec<String> {
    let mut docs = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                docs.push(current.join("\n"));
                current.clear();
            }
        } else {
            current.push(line.trim_end());
        }
    }
    if !current.is_empty() {
        docs.push(current.join("\n"));
    }
    docs
}

/// Vocabulary over every character of the documents plus the terminator.
pub fn corpus_vocab(docs: &[String]) -> Result<Vocab> {
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut text: String = docs.concat();
    text.push(TERMINATOR_SYMBOL);
    Vocab::from_corpus(&text)
}

/// Encodes each document and appends the terminator.
pub fn encode_documents(vocab: &Vocab, docs: &[String]) -> Result<Vec<TokenSeq>> {
    let term = vocab
        .terminator()
        .ok_or_else(|| Error::InvalidArgument("vocabulary has no terminator symbol".into()))?;
    docs.iter()
        .map(|d| {
            let mut ids = vocab.encode(d)?;
            ids.push(term);
            Ok(ids)
        })
        .collect()
}

/// The first `prompt_len` tokens of every document longer than that.
pub fn prompts(docs: &[TokenSeq], prompt_len: usize) -> Vec<TokenSeq> {
    docs.iter()
        .filter(|d| d.len() > prompt_len)
        .map(|d| d[..prompt_len].to_vec())
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub ldlp: Vec<T>,
    pub eval: Vec<T>,
}

/// Deterministic document-level split. Documents are shuffled with `seed`;
/// the first two parts get `round(r·n)` documents and evaluation gets the
/// rest.
pub fn split_corpus<T: Clone>(docs: &[T], ratios: [f64; 3], seed: u64) -> Result<Split<T>> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|&r| r.is_nan() || r < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split ratios must be non-negative and sum to 1, got {ratios:?}"
        )));
    }
    let n = docs.len();
    let wanted = ratios.iter().filter(|&&r| r > 0.0).count();
    if n < wanted.max(1) {
        return Err(Error::CorpusTooShort(format!(
            "{n} documents for a {wanted}-way split"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(derive_seed(seed, 0x5b11)).shuffle(&mut order);
    let n_train = ((ratios[0] * n as f64).round() as usize).min(n);
    let n_ldlp = ((ratios[1] * n as f64).round() as usize).min(n - n_train);
    let take = |idx: &[usize]| idx.iter().map(|&i| docs[i].clone()).collect::<Vec<T>>();
    Ok(Split {
        train: take(&order[..n_train]),
        ldlp: take(&order[n_train..n_train + n_ldlp]),
        eval: take(&order[n_train + n_ldlp..]),
    })
}

const DETERMINERS: &[&str] = &["the", "a", "every", "one", "this", "that", "no", "some"];
const ADJECTIVES: &[&str] = &[
    "old", "quiet", "bright", "small", "heavy", "distant", "patient", "silver", "narrow", "warm",
    "careful", "hollow", "gentle", "restless", "ancient", "crooked",
];
const NOUNS: &[&str] = &[
    "river", "garden", "window", "merchant", "lantern", "harbor", "village", "soldier", "letter",
    "mountain", "kitchen", "stranger", "forest", "engine", "captain", "orchard", "bridge",
    "teacher", "market", "shadow", "workshop", "traveler", "meadow", "tower",
];
const VERBS: &[&str] = &[
    "watched",
    "carried",
    "followed",
    "remembered",
    "opened",
    "crossed",
    "painted",
    "answered",
    "visited",
    "repaired",
    "described",
    "noticed",
    "guarded",
    "gathered",
    "admired",
    "questioned",
];
const INTRANSITIVE: &[&str] = &[
    "waited", "slept", "wandered", "listened", "vanished", "returned", "trembled", "laughed",
    "rested", "shone",
];
const ADVERBS: &[&str] = &[
    "slowly",
    "quietly",
    "again",
    "at dawn",
    "before noon",
    "without a word",
    "for a while",
    "in silence",
    "every morning",
    "at last",
];
const PREPOSITIONS: &[&str] = &[
    "near", "beyond", "under", "beside", "behind", "across", "toward", "inside",
];
const CONNECTIVES: &[&str] = &["and", "but", "while", "because", "until", "so"];
const OPENERS: &[&str] = &[
    "In the evening",
    "Long ago",
    "By the sea",
    "After the storm",
    "That winter",
    "At first",
];

fn pick<'a>(rng: &mut Rng, xs: &[&'a str]) -> &'a str {
    xs[rng.below(xs.len())]
}

fn noun_phrase(rng: &mut Rng, out: &mut String) {
    out.push_str(pick(rng, DETERMINERS));
    out.push(' ');
    if rng.below(2) == 0 {
        out.push_str(pick(rng, ADJECTIVES));
        out.push(' ');
    }
    out.push_str(pick(rng, NOUNS));
    if rng.below(5) == 0 {
        out.push(' ');
        out.push_str(pick(rng, PREPOSITIONS));
        out.push_str(" the ");
        out.push_str(pick(rng, NOUNS));
    }
}

fn clause(rng: &mut Rng, out: &mut String) {
    noun_phrase(rng, out);
    out.push(' ');
    if rng.below(3) == 0 {
        out.push_str(pick(rng, INTRANSITIVE));
    } else {
        out.push_str(pick(rng, VERBS));
        out.push(' ');
        noun_phrase(rng, out);
    }
    if rng.below(3) == 0 {
        out.push(' ');
        out.push_str(pick(rng, ADVERBS));
    }
}

fn sentence(rng: &mut Rng) -> String {
    let mut s = String::new();
    if rng.below(4) == 0 {
        s.push_str(pick(rng, OPENERS));
        s.push_str(", ");
    }
    clause(rng, &mut s);
    if rng.below(3) == 0 {
        s.push_str(", ");
        s.push_str(pick(rng, CONNECTIVES));
        s.push(' ');
        clause(rng, &mut s);
    }
    s.push('.');
    let mut chars = s.chars();
    let first = chars.next().map(|c| c.to_ascii_uppercase()).unwrap_or(' ');
    std::iter::once(first).chain(chars).collect()
}

/// Grammar-generated English-like prose: `n_docs` paragraphs of three to
/// six sentences, separated by blank lines.
pub fn synthetic_prose(n_docs: usize, seed: u64) -> String {
    let mut rng = Rng::new(seed);
    let mut out = String::new();
    for d in 0..n_docs {
        if d > 0 {
            out.push_str("\n\n");
        }
        let n = 3 + rng.below(4);
        let sentences: Vec<String> = (0..n).map(|_| sentence(&mut rng)).collect();
        out.push_str(&sentences.join(" "));
    }
    out.push('\n');
    out
}

/// `n_docs` documents, each `pattern` repeated `repeats` times.
pub fn periodic_corpus(pattern: &str, repeats: usize, n_docs: usize) -> String {
    let doc = pattern.repeat(repeats);
    vec![doc; n_docs].join("\n\n") + "\n"
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documents_split_at_blank_lines() {
        let docs = parse_documents("a b\nc\n\n\n  \nd\n\ne  \n");
        assert_eq!(docs, vec!["a b\nc", "d", "e"]);
        assert!(parse_documents("\n\n").is_empty());
    }

    #[test]
    fn split_sizes() {
        let docs: Vec<usize> = (0..100).collect();
        let s = split_corpus(&docs, [0.8, 0.1, 0.1], 3).unwrap();
        assert_eq!((s.train.len(), s.ldlp.len(), s.eval.len()), (80, 10, 10));
        let all = split_corpus(&docs, [1.0, 0.0, 0.0], 3).unwrap();
        assert_eq!(all.train.len(), 100);
        assert!(all.ldlp.is_empty() && all.eval.is_empty());
        assert_eq!(split_corpus(&docs, [0.8, 0.1, 0.1], 3).unwrap(), s);
        let mut seen: Vec<usize> = s
            .train
            .iter()
            .chain(&s.ldlp)
            .chain(&s.eval)
            .copied()
            .collect();
        seen.sort();
        assert_eq!(seen, docs);
    }

    #[test]
    fn split_errors() {
        assert!(split_corpus::<u8>(&[], [1.0, 0.0, 0.0], 0).is_err());
        assert!(split_corpus(&[1, 2], [0.4, 0.3, 0.3], 0).is_err());
        assert!(split_corpus(&[1, 2, 3], [0.5, 0.5, 0.5], 0).is_err());
    }

    #[test]
    fn prose_is_deterministic() {
        let a = synthetic_prose(20, 5);
        assert_eq!(a, synthetic_prose(20, 5));
        assert_ne!(a, synthetic_prose(20, 6));
        assert_eq!(parse_documents(&a).len(), 20);
    }

    #[test]
    fn encoding_appends_terminator() {
        let docs = parse_documents(&periodic_corpus("ab", 4, 3));
        let vocab = corpus_vocab(&docs).unwrap();
        let enc = encode_documents(&vocab, &docs).unwrap();
        assert_eq!(enc.len(), 3);
        assert_eq!(enc[0].len(), 9);
        assert_eq!(*enc[0].last().unwrap(), vocab.terminator().unwrap());
        assert_eq!(prompts(&enc, 4), vec![enc[0][..4].to_vec(); 3]);
        assert!(prompts(&enc, 9).is_empty());
    }
}
