//! Deterministic whitespace-free subword tokenizer: known word forms map to
//! a single subword, unknown forms fall back to their characters, and empty
//! nodes are rendered as one reserved sentinel subword.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub const UNK: u32 = 0;
pub const EMPTY_SENTINEL: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubwordTokenizer {
    entries: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl PartialEq for SubwordTokenizer {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

fn word_key(form: &str) -> String {
    format!("w:{form}")
}

fn char_key(c: char) -> String {
    format!("c:{c}")
}

impl SubwordTokenizer {
    /// Builds a vocabulary from word forms. Word and character entries are
    /// sorted, so identical form sets give identical vocabularies.
    pub fn build<'a>(forms: impl Iterator<Item = &'a str>) -> Self {
        let mut words: Vec<String> = Vec::new();
        let mut chars: Vec<char> = Vec::new();
        for form in forms {
            words.push(word_key(form));
            chars.extend(form.chars());
        }
        words.sort();
        words.dedup();
        chars.sort();
        chars.dedup();

        let mut entries = vec!["<unk>".to_string(), "<empty>".to_string()];
        entries.extend(words);
        entries.extend(chars.into_iter().map(char_key));
        let mut tok = SubwordTokenizer { entries, index: HashMap::new() };
        tok.rebuild_index();
        tok
    }

    /// Restores the lookup index after deserialization.
    pub fn rebuild_index(&mut self) {
        self.index =
            self.entries.iter().enumerate().map(|(i, e)| (e.clone(), i as u32)).collect();
    }

    pub fn vocab_size(&self) -> usize {
        self.entries.len()
    }

    /// Subword ids for one node form. Never returns an empty sequence.
    pub fn subwords(&self, form: &str, is_empty_node: bool) -> Vec<u32> {
        if is_empty_node {
            return vec![EMPTY_SENTINEL];
        }
        if let Some(&id) = self.index.get(&word_key(form)) {
            return vec![id];
        }
        let ids: Vec<u32> = form
            .chars()
            .map(|c| self.index.get(&char_key(c)).copied().unwrap_or(UNK))
            .collect();
        if ids.is_empty() {
            vec![UNK]
        } else {
            ids
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_word_is_one_subword() {
        let tok = SubwordTokenizer::build(["hello", "world"].into_iter());
        assert_eq!(tok.subwords("hello", false).len(), 1);
        assert_ne!(tok.subwords("hello", false), tok.subwords("world", false));
    }

    #[test]
    fn unknown_word_falls_back_to_chars() {
        let tok = SubwordTokenizer::build(["ab"].into_iter());
        let ids = tok.subwords("ba", false);
        assert_eq!(ids.len(), 2);
        assert!(ids.iter().all(|&i| i != UNK));
        assert_eq!(tok.subwords("zq", false), vec![UNK, UNK]);
        assert_eq!(tok.subwords("", false), vec![UNK]);
    }

    #[test]
    fn empty_node_is_the_sentinel() {
        let tok = SubwordTokenizer::build(["a"].into_iter());
        assert_eq!(tok.subwords("_", true), vec![EMPTY_SENTINEL]);
    }

    #[test]
    fn build_is_order_independent() {
        let a = SubwordTokenizer::build(["x", "y", "z"].into_iter());
        let b = SubwordTokenizer::build(["z", "x", "y", "x"].into_iter());
        assert_eq!(a, b);
    }
}
