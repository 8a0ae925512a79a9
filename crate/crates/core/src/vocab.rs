//! Character vocabulary and token sequences.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub type TokenId = u32;
pub type TokenSeq = Vec<TokenId>;

/// Symbol appended at document boundaries when a terminator is configured.
pub const TERMINATOR_SYMBOL: char = '\u{3}';

/// Ordered set of distinct characters; a token id is an index into it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    symbols: Vec<char>,
    index: HashMap<char, TokenId>,
}

impl Vocab {
    /// Builds the vocabulary of distinct characters in `corpus`, sorted by code point.
    pub fn from_corpus(corpus: &str) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut symbols: Vec<char> = corpus.chars().collect();
        symbols.sort_unstable();
        symbols.dedup();
        Self::from_symbols(symbols)
    }

    pub fn from_symbols(symbols: Vec<char>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, &c) in symbols.iter().enumerate() {
            if index.insert(c, i as TokenId).is_some() {
                return Err(Error::Format(format!("duplicate symbol {c:?}")));
            }
        }
        Ok(Self { symbols, index })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn id(&self, c: char) -> Option<TokenId> {
        self.index.get(&c).copied()
    }

    pub fn symbol(&self, id: TokenId) -> Option<char> {
        self.symbols.get(id as usize).copied()
    }

    /// Id of [`TERMINATOR_SYMBOL`], when the corpus contained one.
    pub fn terminator(&self) -> Option<TokenId> {
        self.id(TERMINATOR_SYMBOL)
    }

    pub fn encode(&self, text: &str) -> Result<TokenSeq> {
        text.chars()
            .map(|c| self.id(c).ok_or(Error::UnknownSymbol(c)))
            .collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> Result<String> {
        ids.iter()
            .map(|&id| {
                self.symbol(id).ok_or(Error::TokenOutOfRange {
                    id,
                    vocab: self.len(),
                })
            })
            .collect()
    }

    /// Checks that every id is below the vocabulary size.
    pub fn check(&self, ids: &[TokenId]) -> Result<()> {
        check_ids(ids, self.len())
    }

    /// One symbol per line; line number is the token id. Newline, carriage
    /// return, tab, backslash and other control characters are escaped.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for &c in &self.symbols {
            match c {
                '\n' => out.push_str("\\n"),
                '\r' => out.push_str("\\r"),
                '\t' => out.push_str("\\t"),
                '\\' => out.push_str("\\\\"),
                c if c.is_control() => {
                    let _ = write!(out, "\\u{{{:x}}}", c as u32);
                }
                c => out.push(c),
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut symbols = Vec::new();
        for (n, line) in text.lines().enumerate() {
            symbols.push(unescape(line).ok_or_else(|| {
                Error::Format(format!("vocab line {}: cannot parse {line:?}", n + 1))
            })?);
        }
        Self::from_symbols(symbols)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Builds the vocabulary of distinct characters in `corpus`.
pub fn build_char_vocab(corpus: &str) -> Result<Vocab> {
    Vocab::from_corpus(corpus)
}

pub(crate) fn check_ids(ids: &[TokenId], vocab: usize) -> Result<()> {
    match ids.iter().find(|&&id| id as usize >= vocab) {
        Some(&id) => Err(Error::TokenOutOfRange { id, vocab }),
        None => Ok(()),
    }
}

fn unescape(line: &str) -> Option<char> {
    let mut chars = line.chars();
    let first = chars.next()?;
    if first != '\\' {
        return if chars.next().is_none() {
            Some(first)
        } else {
            None
        };
    }
    let rest: String = chars.collect();
    match rest.as_str() {
        "n" => Some('\n'),
        "r" => Some('\r'),
        "t" => Some('\t'),
        "\\" => Some('\\'),
        "" => None,
        r => {
            let hex = r.strip_prefix("u{")?.strip_suffix('}')?;
            char::from_u32(u32::from_str_radix(hex, 16).ok()?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn abba_has_two_symbols() {
        let v = build_char_vocab("abba").unwrap();
        assert_eq!(v.symbols(), &['a', 'b']);
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn singleton() {
        let v = build_char_vocab("z").unwrap();
        assert_eq!(v.symbols(), &['z']);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(matches!(build_char_vocab(""), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn encode_unknown_symbol() {
        let v = build_char_vocab("ab").unwrap();
        assert!(matches!(v.encode("abc"), Err(Error::UnknownSymbol('c'))));
    }

    #[test]
    fn text_round_trip_with_escapes() {
        let v = build_char_vocab("a\nb\\c\t \u{3}").unwrap();
        let back = Vocab::from_text(&v.to_text()).unwrap();
        assert_eq!(v, back);
        assert_eq!(back.terminator(), Some(0));
    }

    proptest! {
        #[test]
        fn encode_decode_identity(s in "[a-z .,\n]{1,40}") {
            let v = build_char_vocab(&s).unwrap();
            for i in 0..v.len() as TokenId {
                let c = v.symbol(i).unwrap();
                prop_assert_eq!(v.id(c), Some(i));
            }
            let ids = v.encode(&s).unwrap();
            prop_assert_eq!(v.decode(&ids).unwrap(), s);
        }
    }
}
