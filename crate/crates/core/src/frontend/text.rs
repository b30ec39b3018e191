//! Text frontend: rule-based tokenization and a fixed vocabulary with hashed
//! out-of-vocabulary buckets.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Number of reserved buckets OOV tokens hash into.
pub const OOV_BUCKETS: usize = 256;

/// A fixed word list plus OOV hash buckets. Ids `0..words.len()` are known
/// words; ids `words.len()..words.len()+OOV_BUCKETS` are hash buckets.
#[derive(Debug, Clone)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut list = Vec::new();
        let mut index = HashMap::new();
        for w in words {
            let w: String = w.into();
            if !index.contains_key(&w) {
                index.insert(w.clone(), list.len() as u32);
                list.push(w);
            }
        }
        Vocab { words: list, index }
    }

    /// Total id space including OOV buckets; every token id is below this.
    pub fn size(&self) -> usize {
        self.words.len() + OOV_BUCKETS
    }

    pub fn id_of(&self, token: &str) -> u32 {
        match self.index.get(token) {
            Some(&id) => id,
            None => self.words.len() as u32 + (fnv1a(token.as_bytes()) % OOV_BUCKETS as u64) as u32,
        }
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }
}

/// FNV-1a, used instead of the std hasher because token ids must be stable
/// across processes.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// A capped sequence of vocabulary ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Splits text into lowercase word and punctuation tokens. Punctuation
/// characters become their own single-character tokens.
pub fn split_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            if !ch.is_whitespace() {
                tokens.push(ch.to_string());
            }
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Tokenizes text into ids, keeping the most recent `max_len` tokens when the
/// text is longer than the cap.
pub fn tokenize(text: &str, vocab: &Vocab, max_len: usize) -> TokenSequence {
    let tokens = split_tokens(text);
    let start = tokens.len().saturating_sub(max_len);
    TokenSequence {
        ids: tokens[start..].iter().map(|t| vocab.id_of(t)).collect(),
    }
}

/// Space-joins the words behind a token sequence. OOV buckets have no surface
/// form and are skipped.
pub fn detokenize(seq: &TokenSequence, vocab: &Vocab) -> String {
    seq.ids
        .iter()
        .filter_map(|&id| vocab.word(id))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Validates that every id a vocabulary can emit is inside its id space.
pub fn check_ids(seq: &TokenSequence, vocab: &Vocab) -> Result<()> {
    for &id in &seq.ids {
        if (id as usize) >= vocab.size() {
            return Err(Error::Format(format!(
                "token id {id} out of range 0..{}",
                vocab.size()
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocab {
        Vocab::new(["oh", ",", "really", "?", "yes", "thanks"])
    }

    #[test]
    fn splits_words_and_punctuation() {
        assert_eq!(split_tokens("Oh, really?"), vec!["oh", ",", "really", "?"]);
        assert_eq!(split_tokens(""), Vec::<String>::new());
        assert_eq!(split_tokens("  spaced   out  "), vec!["spaced", "out"]);
    }

    #[test]
    fn tokenize_maps_known_and_oov() {
        let v = vocab();
        let seq = tokenize("Oh, really?", &v, 64);
        assert_eq!(seq.ids, vec![0, 1, 2, 3]);
        let oov = tokenize("zyzzyva", &v, 64);
        assert_eq!(oov.len(), 1);
        assert!(oov.ids[0] >= 6 && (oov.ids[0] as usize) < v.size());
        check_ids(&oov, &v).unwrap();
        // deterministic across calls
        assert_eq!(oov.ids, tokenize("zyzzyva", &v, 64).ids);
    }

    #[test]
    fn empty_text_is_empty_sequence() {
        assert!(tokenize("", &vocab(), 64).is_empty());
    }

    #[test]
    fn cap_keeps_suffix() {
        let v = vocab();
        let text = vec!["yes"; 100].join(" ") + " thanks";
        let seq = tokenize(&text, &v, 64);
        assert_eq!(seq.len(), 64);
        assert_eq!(*seq.ids.last().unwrap(), v.id_of("thanks"));
        assert!(seq.ids[..63].iter().all(|&id| id == v.id_of("yes")));
    }

    #[test]
    fn idempotent_over_detokenized_output() {
        let v = vocab();
        let seq = tokenize("Oh, REALLY? yes thanks", &v, 64);
        let text = detokenize(&seq, &v);
        let again = tokenize(&text, &v, 64);
        assert_eq!(seq, again);
    }
}
