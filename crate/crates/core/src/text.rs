//! Entity descriptions and token accounting.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::graph::{EntityId, Symbols};

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";

/// Keep what precedes the first `;`, trailing whitespace trimmed.
pub fn shorten_description(text: &str) -> &str {
    match text.find(';') {
        Some(pos) => text[..pos].trim_end(),
        None => text,
    }
}

/// Entity descriptions keyed by entity id. Absent entries read as `""`.
#[derive(Debug, Default)]
pub struct DescriptionStore {
    entries: Vec<(EntityId, String)>,
    slots: HashMap<EntityId, usize>,
    shorten: bool,
    overwrites: usize,
    misses: AtomicUsize,
}

impl Clone for DescriptionStore {
    fn clone(&self) -> Self {
        Self {
            entries: self.entries.clone(),
            slots: self.slots.clone(),
            shorten: self.shorten,
            overwrites: self.overwrites,
            misses: AtomicUsize::new(self.misses.load(Ordering::Relaxed)),
        }
    }
}

impl DescriptionStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert or overwrite; returns true when an earlier value was replaced.
    pub fn insert(&mut self, entity: EntityId, text: impl Into<String>) -> bool {
        let text = text.into();
        match self.slots.get(&entity) {
            Some(&slot) => {
                self.entries[slot].1 = text;
                self.overwrites += 1;
                true
            }
            None => {
                self.slots.insert(entity, self.entries.len());
                self.entries.push((entity, text));
                false
            }
        }
    }

    /// Apply [`shorten_description`] on every lookup.
    pub fn with_lazy_shortening(mut self, on: bool) -> Self {
        self.shorten = on;
        self
    }

    /// Description of `entity`, or `""` (counted as a miss) when absent.
    pub fn get(&self, entity: EntityId) -> &str {
        match self.slots.get(&entity) {
            Some(&slot) => {
                let text = self.entries[slot].1.as_str();
                if self.shorten {
                    shorten_description(text)
                } else {
                    text
                }
            }
            None => {
                self.misses.fetch_add(1, Ordering::Relaxed);
                ""
            }
        }
    }

    pub fn contains(&self, entity: EntityId) -> bool {
        self.slots.contains_key(&entity)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    /// Number of duplicate keys that replaced an earlier value at load time.
    pub fn overwrites(&self) -> usize {
        self.overwrites
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Present descriptions in first-insertion order, after optional lazy shortening.
    pub fn iter(&self) -> impl Iterator<Item = (EntityId, &str)> {
        self.entries.iter().map(move |(e, t)| {
            let t = if self.shorten { shorten_description(t) } else { t.as_str() };
            (*e, t)
        })
    }

    /// Mean token count over present descriptions; 0 for an empty store.
    pub fn mean_tokens(&self, tokenizer: &dyn Tokenizer) -> f64 {
        if self.entries.is_empty() {
            return 0.0;
        }
        let total: usize = self.iter().map(|(_, t)| tokenizer.count(t)).sum();
        total as f64 / self.entries.len() as f64
    }
}

fn split_description_line(line: &str, lineno: usize) -> Result<(&str, &str)> {
    line.split_once('\t').ok_or_else(|| Error::Parse {
        line: lineno,
        message: "expected `entity<TAB>description`".into(),
    })
}

pub fn parse_descriptions(text: &str, symbols: &mut Symbols) -> Result<DescriptionStore> {
    let mut store = DescriptionStore::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let (name, desc) = split_description_line(line, lineno + 1)?;
        let id = symbols.entity(name);
        if store.insert(id, desc) {
            log::warn!("line {}: duplicate description for `{name}` replaces earlier one", lineno + 1);
        }
    }
    Ok(store)
}

pub fn load_descriptions(path: &Path, symbols: &mut Symbols) -> Result<DescriptionStore> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_descriptions(&text, symbols).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

/// Batch form of [`shorten_description`] over a description TSV, order preserved.
pub fn shorten_tsv(text: &str) -> Result<String> {
    let mut out = String::with_capacity(text.len());
    for (lineno, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let (name, desc) = split_description_line(line, lineno + 1)?;
        out.push_str(name);
        out.push('\t');
        out.push_str(shorten_description(desc));
        out.push('\n');
    }
    Ok(out)
}

pub trait Tokenizer: Send + Sync {
    fn tokenize(&self, text: &str) -> Vec<String>;

    fn count(&self, text: &str) -> usize {
        self.tokenize(text).len()
    }
}

/// Whitespace tokenizer where registered multi-word surface forms count as one token.
///
/// Segmentation picks the fewest tokens (longest atom on ties), so a
/// concatenation never counts more than its parts.
#[derive(Clone, Debug, Default)]
pub struct WhitespaceTokenizer {
    atoms: HashSet<String>,
    max_atom_words: usize,
}

impl WhitespaceTokenizer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_atoms<'a>(atoms: impl IntoIterator<Item = &'a str>) -> Self {
        let mut tok = Self::new();
        for atom in atoms {
            tok.add_atom(atom);
        }
        tok
    }

    /// Register every entity surface form of `symbols` as an atom.
    pub fn for_symbols(symbols: &Symbols) -> Self {
        Self::with_atoms(symbols.entities.iter())
    }

    pub fn add_atom(&mut self, atom: &str) {
        let words: Vec<&str> = atom.split_whitespace().collect();
        // single words are already atomic under whitespace splitting
        if words.len() > 1 {
            self.max_atom_words = self.max_atom_words.max(words.len());
            self.atoms.insert(words.join(" "));
        }
    }

    /// Span lengths of the minimal segmentation of `words`.
    fn segment(&self, words: &[&str]) -> Vec<usize> {
        let n = words.len();
        let mut best = vec![usize::MAX; n + 1];
        let mut step = vec![1usize; n + 1];
        best[n] = 0;
        for i in (0..n).rev() {
            let longest = self.max_atom_words.min(n - i);
            for len in (1..=longest).rev() {
                if len > 1 && !self.atoms.contains(&words[i..i + len].join(" ")) {
                    continue;
                }
                let cost = 1 + best[i + len];
                if cost < best[i] {
                    best[i] = cost;
                    step[i] = len;
                }
            }
        }
        let mut spans = Vec::with_capacity(best[0]);
        let mut i = 0;
        while i < n {
            spans.push(step[i]);
            i += step[i];
        }
        spans
    }
}

impl Tokenizer for WhitespaceTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        let words: Vec<&str> = text.split_whitespace().collect();
        if self.atoms.is_empty() {
            return words.into_iter().map(str::to_owned).collect();
        }
        let mut out = Vec::new();
        let mut i = 0;
        for len in self.segment(&words) {
            out.push(words[i..i + len].join(" "));
            i += len;
        }
        out
    }

    fn count(&self, text: &str) -> usize {
        if self.atoms.is_empty() {
            return text.split_whitespace().count();
        }
        let words: Vec<&str> = text.split_whitespace().collect();
        self.segment(&words).len()
    }
}
