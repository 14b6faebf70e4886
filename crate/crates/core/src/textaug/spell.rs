//! Frequency-ranked spell correction within two edits.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{Error, Result};

pub const ALPHABET: &[u8; 26] = b"abcdefghijklmnopqrstuvwxyz";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    entries: BTreeMap<String, u64>,
}

impl Vocabulary {
    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, u64)>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (w, f) in pairs {
            let w = w.into();
            check_word(&w).map_err(Error::InvalidConfig)?;
            *entries.entry(w).or_insert(0) += f;
        }
        Ok(Self { entries })
    }

    /// Parses `word<TAB>frequency` lines. Blank lines and `#` comments are skipped.
    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let trimmed = line.trim_end_matches('\r');
            if trimmed.trim().is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let err = |column: usize, message: String| Error::ParseError {
                line: line_no,
                column,
                message,
            };
            let (word, freq) = trimmed
                .split_once('\t')
                .ok_or_else(|| err(1, "expected word<TAB>frequency".into()))?;
            check_word(word).map_err(|m| err(1, m))?;
            let freq: u64 = freq
                .trim()
                .parse()
                .map_err(|e| err(word.len() + 2, format!("bad frequency {freq:?}: {e}")))?;
            *entries.entry(word.to_string()).or_insert(0) += freq;
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tsv(&std::fs::read_to_string(path)?)
    }

    pub fn frequency(&self, word: &str) -> Option<u64> {
        self.entries.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.entries.iter().map(|(w, &f)| (w.as_str(), f))
    }
}

fn check_word(w: &str) -> std::result::Result<(), String> {
    if w.is_empty() {
        return Err("empty vocabulary word".into());
    }
    if w.chars().any(char::is_uppercase) {
        return Err(format!("vocabulary word {w:?} is not lowercase"));
    }
    Ok(())
}

/// True when the token is made only of `a`-`z`.
pub fn is_correctable(token: &str) -> bool {
    !token.is_empty() && token.bytes().all(|b| b.is_ascii_lowercase())
}

/// Every single-edit string in generation order, duplicates and identity
/// replacements included: deletions, transpositions, replacements, insertions.
pub fn edits1_raw(word: &str) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    let n = chars.len();
    let join = |v: &[char]| v.iter().collect::<String>();
    let mut out = Vec::with_capacity(n + n.saturating_sub(1) + 26 * n + 26 * (n + 1));
    for i in 0..n {
        let mut v = chars.clone();
        v.remove(i);
        out.push(join(&v));
    }
    for i in 0..n.saturating_sub(1) {
        let mut v = chars.clone();
        v.swap(i, i + 1);
        out.push(join(&v));
    }
    for i in 0..n {
        for &c in ALPHABET {
            let mut v = chars.clone();
            v[i] = c as char;
            out.push(join(&v));
        }
    }
    for i in 0..=n {
        for &c in ALPHABET {
            let mut v = chars.clone();
            v.insert(i, c as char);
            out.push(join(&v));
        }
    }
    out
}

/// Strings within `max_distance` (1 or 2) edits of `word`, excluding `word`.
/// Distance 2 applies single edits to every distance-1 candidate.
pub fn edit_candidates(word: &str, max_distance: u8) -> Result<BTreeSet<String>> {
    if word.is_empty() {
        return Err(Error::EmptyWord);
    }
    if !(1..=2).contains(&max_distance) {
        return Err(Error::InvalidConfig(format!(
            "max_distance must be 1 or 2, got {max_distance}"
        )));
    }
    let mut set: BTreeSet<String> = edits1_raw(word).into_iter().collect();
    set.remove(word);
    if max_distance == 2 {
        let first: Vec<String> = set.iter().cloned().collect();
        for c in &first {
            set.extend(edits1_raw(c));
        }
        set.remove(word);
    }
    Ok(set)
}

/// Most frequent vocabulary word among `candidates`; ties go to the
/// lexicographically smallest word.
fn best_known<'a>(candidates: impl IntoIterator<Item = &'a String>, vocab: &Vocabulary) -> Option<String> {
    let mut best: Option<(&String, u64)> = None;
    for c in candidates {
        if let Some(f) = vocab.frequency(c) {
            // BTreeSet iteration is lexicographic, so strict `>` keeps the smallest on ties.
            if best.is_none_or(|(_, bf)| f > bf) {
                best = Some((c, f));
            }
        }
    }
    best.map(|(w, _)| w.clone())
}

/// Known words are returned as is; otherwise the most frequent known word
/// at distance 1, then at distance 2; otherwise the input. Tokens outside
/// `a`-`z` pass through.
pub fn spell_correct(word: &str, vocab: &Vocabulary) -> String {
    if vocab.contains(word) || !is_correctable(word) {
        return word.to_string();
    }
    let d1 = edit_candidates(word, 1).expect("non-empty word");
    if let Some(w) = best_known(&d1, vocab) {
        return w;
    }
    let d2 = edit_candidates(word, 2).expect("non-empty word");
    best_known(&d2, vocab).unwrap_or_else(|| word.to_string())
}
