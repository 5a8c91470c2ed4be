//! String similarity kernels used across extraction and fusion.
//!
//! All functions operate on Unicode code points, never bytes, so CJK text
//! and ASCII are handled uniformly.

use std::collections::HashMap;
use std::sync::OnceLock;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("syllable table line {line}: {msg}")]
    Malformed { line: usize, msg: String },
}

/// Levenshtein distance over code points with unit costs.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Longest common subsequence length between two sequences.
pub fn lcs_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for ca in a {
        for (j, cb) in b.iter().enumerate() {
            cur[j + 1] = if ca == cb {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
        cur[0] = 0;
    }
    prev[b.len()]
}

/// Dice coefficient over the character LCS: `2 * lcs / (|a| + |b|)`.
///
/// Two empty strings are identical, so the similarity is 1.
pub fn char_similarity(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let denom = a.len() + b.len();
    if denom == 0 {
        return 1.0;
    }
    2.0 * lcs_length(&a, &b) as f64 / denom as f64
}

/// Character to toneless syllable mapping.
///
/// Characters absent from the table act as their own one-character syllable,
/// which keeps mixed CJK/Latin strings comparable.
#[derive(Debug, Clone, Default)]
pub struct SyllableTable {
    map: HashMap<char, String>,
}

impl SyllableTable {
    /// Parses `char<TAB>syllable` lines. `#` starts a comment, blank lines
    /// are skipped, duplicate characters are rejected.
    pub fn from_tsv(text: &str) -> Result<Self, TableError> {
        let mut map = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('\t').ok_or_else(|| TableError::Malformed {
                line: line_no,
                msg: "expected character<TAB>syllable".into(),
            })?;
            let mut key_chars = key.chars();
            let ch = key_chars.next().ok_or_else(|| TableError::Malformed {
                line: line_no,
                msg: "empty character column".into(),
            })?;
            if key_chars.next().is_some() {
                return Err(TableError::Malformed {
                    line: line_no,
                    msg: format!("key {key:?} is not a single character"),
                });
            }
            let syl = value.trim();
            if syl.is_empty() || !syl.bytes().all(|b| b.is_ascii_lowercase()) {
                return Err(TableError::Malformed {
                    line: line_no,
                    msg: format!("syllable {syl:?} is not non-empty ASCII lowercase"),
                });
            }
            if map.insert(ch, syl.to_string()).is_some() {
                return Err(TableError::Malformed {
                    line: line_no,
                    msg: format!("duplicate entry for {ch:?}"),
                });
            }
        }
        Ok(Self { map })
    }

    /// Compact built-in table covering the characters used by the bundled
    /// fixtures and the synthetic corpus generator.
    pub fn builtin() -> &'static SyllableTable {
        static TABLE: OnceLock<SyllableTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            SyllableTable::from_tsv(include_str!("../data/syllables.tsv"))
                .expect("built-in syllable table is well-formed")
        })
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn syllable(&self, c: char) -> Option<&str> {
        self.map.get(&c).map(String::as_str)
    }

    /// Entries sorted by character, for deterministic iteration.
    pub fn entries(&self) -> Vec<(char, &str)> {
        let mut out: Vec<(char, &str)> = self.map.iter().map(|(c, s)| (*c, s.as_str())).collect();
        out.sort_unstable_by_key(|(c, _)| *c);
        out
    }

    /// Syllable to characters, each bucket sorted. Used to pick homophones.
    pub fn inverted(&self) -> HashMap<String, Vec<char>> {
        let mut inv: HashMap<String, Vec<char>> = HashMap::new();
        for (c, s) in &self.map {
            inv.entry(s.clone()).or_default().push(*c);
        }
        for chars in inv.values_mut() {
            chars.sort_unstable();
        }
        inv
    }
}

/// Maps text to its syllable sequence; unknown characters map to themselves.
pub fn to_syllables(text: &str, table: &SyllableTable) -> Vec<String> {
    text.chars()
        .map(|c| match table.syllable(c) {
            Some(s) => s.to_string(),
            None => c.to_string(),
        })
        .collect()
}

/// Dice coefficient over the LCS of syllable sequences.
pub fn syllable_similarity(a: &str, b: &str, table: &SyllableTable) -> f64 {
    let sa = to_syllables(a, table);
    let sb = to_syllables(b, table);
    let denom = sa.len() + sb.len();
    if denom == 0 {
        return 1.0;
    }
    2.0 * lcs_length(&sa, &sb) as f64 / denom as f64
}

/// Best-scoring haystack window of needle length under [`char_similarity`].
///
/// Returns `(window start in code points, similarity)`. Windows slide one
/// code point at a time; when the haystack is shorter than the needle the
/// whole haystack is the only window. Ties keep the smallest start index.
/// An empty haystack scores `(0, 0.0)`.
pub fn best_window_match(needle: &str, haystack: &str) -> (usize, f64) {
    let n: Vec<char> = needle.chars().collect();
    let h: Vec<char> = haystack.chars().collect();
    if h.is_empty() {
        return (0, 0.0);
    }
    if n.is_empty() {
        return (0, 0.0);
    }
    let window = n.len().min(h.len());
    let last_start = h.len() - window;
    let mut best = (0usize, f64::NEG_INFINITY);
    for start in 0..=last_start {
        let w = &h[start..start + window];
        let denom = (n.len() + w.len()) as f64;
        let score = 2.0 * lcs_length(&n, w) as f64 / denom;
        if score > best.1 {
            best = (start, score);
        }
    }
    best
}
