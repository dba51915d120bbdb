use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;

/// Character alphabet with reserved padding and unknown ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharVocab {
    /// Characters by id; entries 0 and 1 are placeholders for PAD and UNK.
    chars: Vec<char>,
    #[serde(skip)]
    index: HashMap<char, u32>,
}

impl CharVocab {
    pub fn from_chars(chars: Vec<char>) -> Self {
        let mut all = vec!['\0', '\u{fffd}'];
        all.extend(chars);
        let index = all
            .iter()
            .enumerate()
            .skip(2)
            .map(|(i, &c)| (c, i as u32))
            .collect();
        CharVocab { chars: all, index }
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, c: char) -> u32 {
        self.index.get(&c).copied().unwrap_or(UNK)
    }

    /// Characters of ids 2.., in id order.
    pub fn learned_chars(&self) -> &[char] {
        &self.chars[2..]
    }

    pub fn char_of(&self, id: u32) -> Option<char> {
        if id < 2 {
            None
        } else {
            self.chars.get(id as usize).copied()
        }
    }

    pub(crate) fn rebuild_index(&mut self) {
        let chars = self.chars[2..].to_vec();
        *self = CharVocab::from_chars(chars);
    }
}

/// Vocabulary of every character seen at least `min_count` times, ordered by
/// count (descending) and then code point.
pub fn build_vocab<S: AsRef<str>>(texts: &[S], min_count: usize) -> Result<CharVocab> {
    if texts.is_empty() {
        return Err(Error::Validation("cannot build a vocabulary from an empty corpus".into()));
    }
    let mut counts: HashMap<char, usize> = HashMap::new();
    for t in texts {
        for c in t.as_ref().chars() {
            *counts.entry(c).or_default() += 1;
        }
    }
    let mut kept: Vec<(char, usize)> = counts.into_iter().filter(|(_, n)| *n >= min_count).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(CharVocab::from_chars(kept.into_iter().map(|(c, _)| c).collect()))
}

/// Exactly `input_len` ids: truncated at the end or right-padded with PAD.
pub fn encode(text: &str, vocab: &CharVocab, input_len: usize) -> Vec<u32> {
    let mut ids: Vec<u32> = text.chars().take(input_len).map(|c| vocab.id(c)).collect();
    ids.resize(input_len, PAD);
    ids
}
