//! Text similarity providers used to rank one-hop neighbors.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Scores a pair of texts; higher is more similar.
pub trait SimilarityProvider: Send + Sync {
    fn similarity(&self, a: &str, b: &str) -> std::result::Result<f64, String>;

    /// False when calls must not overlap; the pipeline then scores serially.
    fn concurrent(&self) -> bool {
        true
    }
}

fn char_trigrams(text: &str) -> BTreeMap<&str, u64> {
    let bounds: Vec<usize> = text
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()))
        .collect();
    let mut grams = BTreeMap::new();
    for w in bounds.windows(4) {
        *grams.entry(&text[w[0]..w[3]]).or_insert(0) += 1;
    }
    grams
}

/// Cosine of character-trigram count vectors; 0 when either side has no trigram.
pub fn default_similarity(a: &str, b: &str) -> f64 {
    let ga = char_trigrams(a);
    let gb = char_trigrams(b);
    if ga.is_empty() || gb.is_empty() {
        return 0.0;
    }
    // integer accumulation keeps self-similarity at exactly 1
    let dot: u64 = ga
        .iter()
        .filter_map(|(g, &ca)| gb.get(g).map(|&cb| ca * cb))
        .sum();
    let na: u64 = ga.values().map(|c| c * c).sum();
    let nb: u64 = gb.values().map(|c| c * c).sum();
    (dot as f64 / ((na as f64) * (nb as f64)).sqrt()).min(1.0)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct NgramCosine;

impl SimilarityProvider for NgramCosine {
    fn similarity(&self, a: &str, b: &str) -> std::result::Result<f64, String> {
        Ok(default_similarity(a, b))
    }
}

/// Same score for every pair, leaving neighbors in graph order.
#[derive(Clone, Copy, Debug, Default)]
pub struct ConstantSimilarity(pub f64);

impl SimilarityProvider for ConstantSimilarity {
    fn similarity(&self, _: &str, _: &str) -> std::result::Result<f64, String> {
        Ok(self.0)
    }
}

/// Cosine over externally computed sentence vectors, looked up by exact text.
#[derive(Clone, Debug, Default)]
pub struct PrecomputedVectors {
    vectors: HashMap<String, Vec<f64>>,
    dim: usize,
}

impl PrecomputedVectors {
    /// Rows are `text<TAB>f1 f2 ...`; every row must share one dimension.
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: lineno + 1,
                message,
            };
            let (key, values) = line
                .rsplit_once('\t')
                .ok_or_else(|| parse_err("expected `text<TAB>vector`".into()))?;
            let vector = values
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|e| parse_err(format!("`{v}`: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            if vector.is_empty() || vector.iter().any(|v| !v.is_finite()) {
                return Err(parse_err("vector must be nonempty and finite".into()));
            }
            if out.dim == 0 {
                out.dim = vector.len();
            } else if vector.len() != out.dim {
                return Err(parse_err(format!(
                    "dimension {} differs from {}",
                    vector.len(),
                    out.dim
                )));
            }
            out.vectors.insert(key.to_owned(), vector);
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl SimilarityProvider for PrecomputedVectors {
    fn similarity(&self, a: &str, b: &str) -> std::result::Result<f64, String> {
        let va = self.vectors.get(a).ok_or_else(|| format!("no vector for `{a}`"))?;
        let vb = self.vectors.get(b).ok_or_else(|| format!("no vector for `{b}`"))?;
        let dot: f64 = va.iter().zip(vb).map(|(x, y)| x * y).sum();
        let na: f64 = va.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = vb.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            Ok(0.0)
        } else {
            Ok(dot / (na * nb))
        }
    }
}
