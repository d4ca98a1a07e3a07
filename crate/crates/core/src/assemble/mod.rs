//! Retrieval-augmented input construction.
//!
//! An incomplete pattern is rendered with the given node's description,
//! its one-hop triples are ranked by similarity against that rendering,
//! a subset is kept (greedy token packing or top-k with descriptions),
//! and everything is joined behind a `[CLS]` marker.

pub mod similarity;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EntityId, KnowledgeGraph, OneHopTriple, Symbols, Triple};
use crate::samples::{IncompletePattern, MaskedSide, MultiLabelSample, SampleSet};
use crate::text::{DescriptionStore, Tokenizer, CLS, MASK};

pub use similarity::{
    default_similarity, ConstantSimilarity, NgramCosine, PrecomputedVectors, SimilarityProvider,
};

const SEP_JOIN: &str = " [SEP] ";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// As many neighbors as fit the token budget, without descriptions.
    Packed,
    /// The best `k` neighbors, each with both endpoint descriptions.
    TopK,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Packed => "packed",
            Strategy::TopK => "top_k",
        }
    }
}

fn join_nonempty<'a>(parts: impl IntoIterator<Item = &'a str>) -> String {
    let mut out = String::new();
    for part in parts.into_iter().filter(|p| !p.is_empty()) {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(part);
    }
    out
}

/// `[MASK] r t` or `h r [MASK]`.
pub fn make_input_triple(pattern: &IncompletePattern, symbols: &Symbols) -> String {
    let given = symbols.entity_name(pattern.given);
    let relation = symbols.relation_name(pattern.relation);
    match pattern.masked_side {
        MaskedSide::Head => join_nonempty([MASK, relation, given]),
        MaskedSide::Tail => join_nonempty([given, relation, MASK]),
    }
}

/// `[MASK] r t d_t` or `h d_h r [MASK]`; only the given node's description is used.
pub fn make_triple_with_d(
    pattern: &IncompletePattern,
    symbols: &Symbols,
    store: &DescriptionStore,
) -> String {
    let given = symbols.entity_name(pattern.given);
    let relation = symbols.relation_name(pattern.relation);
    let d = store.get(pattern.given);
    match pattern.masked_side {
        MaskedSide::Head => join_nonempty([MASK, relation, given, d]),
        MaskedSide::Tail => join_nonempty([given, d, relation, MASK]),
    }
}

fn render_triple(triple: &Triple, symbols: &Symbols, store: Option<&DescriptionStore>) -> String {
    let head = symbols.entity_name(triple.head);
    let relation = symbols.relation_name(triple.relation);
    let tail = symbols.entity_name(triple.tail);
    match store {
        Some(store) => join_nonempty([
            head,
            store.get(triple.head),
            relation,
            tail,
            store.get(triple.tail),
        ]),
        None => join_nonempty([head, relation, tail]),
    }
}

/// A one-hop triple in its stored direction with each endpoint followed by
/// its description: `q D_q r_q t d_t` when `given` is the tail, `t d_t r_q q D_q`
/// when it is the head.
pub fn make_one_hop_with_d(
    neighbor: &Triple,
    given: EntityId,
    symbols: &Symbols,
    store: &DescriptionStore,
) -> Result<String> {
    if neighbor.head != given && neighbor.tail != given {
        return Err(Error::invalid(format!(
            "`{}` is not an endpoint of ({}, {}, {})",
            symbols.entity_name(given),
            symbols.entity_name(neighbor.head),
            symbols.relation_name(neighbor.relation),
            symbols.entity_name(neighbor.tail),
        )));
    }
    Ok(render_triple(neighbor, symbols, Some(store)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeighborCandidate {
    pub one_hop: OneHopTriple,
    pub rendered: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredNeighbor {
    pub one_hop: OneHopTriple,
    pub rendered: String,
    pub score: f64,
    pub source_rank: usize,
}

/// Score every candidate against `anchor` and sort by descending score,
/// ties kept in candidate order.
pub fn score_neighbors(
    anchor: &str,
    candidates: Vec<NeighborCandidate>,
    provider: &dyn SimilarityProvider,
) -> Result<Vec<ScoredNeighbor>> {
    let mut scored = candidates
        .into_iter()
        .enumerate()
        .map(|(source_rank, c)| {
            let score = provider
                .similarity(anchor, &c.rendered)
                .map_err(|message| Error::Provider {
                    index: source_rank,
                    message,
                })?;
            if !score.is_finite() {
                return Err(Error::Provider {
                    index: source_rank,
                    message: format!("non-finite score {score}"),
                });
            }
            Ok(ScoredNeighbor {
                one_hop: c.one_hop,
                rendered: c.rendered,
                score,
                source_rank,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.source_rank.cmp(&b.source_rank))
    });
    Ok(scored)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Filtered {
    pub text: String,
    pub used: usize,
}

fn with_cls(triple_with_d: &str) -> String {
    join_nonempty([CLS, triple_with_d])
}

/// Greedy prefix of `sorted`, rendered without descriptions, such that the
/// final assembled input stays within `budget` tokens. The scan stops at
/// the first neighbor that does not fit.
pub fn filter_packed(
    sorted: &[ScoredNeighbor],
    triple_with_d: &str,
    budget: usize,
    symbols: &Symbols,
    tokenizer: &dyn Tokenizer,
) -> Result<Filtered> {
    let base = with_cls(triple_with_d);
    let base_tokens = tokenizer.count(&base);
    if base_tokens > budget {
        return Err(Error::invalid(format!(
            "budget {budget} is below the {base_tokens} tokens of the neighbor-free input"
        )));
    }
    let mut full = base;
    let mut filtered = Filtered::default();
    for n in sorted {
        let piece = render_triple(&n.one_hop.triple, symbols, None);
        let candidate = format!("{full}{SEP_JOIN}{piece}");
        if tokenizer.count(&candidate) > budget {
            break;
        }
        full = candidate;
        if !filtered.text.is_empty() {
            filtered.text.push_str(SEP_JOIN);
        }
        filtered.text.push_str(&piece);
        filtered.used += 1;
    }
    Ok(filtered)
}

/// First `k` of `sorted`. With a store each neighbor carries both endpoint
/// descriptions; without one it is rendered bare.
pub fn filter_top_k(
    sorted: &[ScoredNeighbor],
    k: usize,
    symbols: &Symbols,
    store: Option<&DescriptionStore>,
) -> Result<Filtered> {
    if k == 0 {
        return Err(Error::invalid("top-k filter needs k >= 1"));
    }
    let pieces: Vec<String> = sorted
        .iter()
        .take(k)
        .map(|n| render_triple(&n.one_hop.triple, symbols, store))
        .collect();
    Ok(Filtered {
        used: pieces.len(),
        text: pieces.join(SEP_JOIN),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssembledInput {
    pub text: String,
    pub token_count: usize,
    pub pattern: IncompletePattern,
    pub strategy: Strategy,
    pub neighbors_used: usize,
    pub labels: Vec<EntityId>,
}

/// `[CLS] triple_with_d [SEP] filtered`, or `[CLS] triple_with_d` when nothing was kept.
pub fn assemble(
    pattern: &IncompletePattern,
    triple_with_d: &str,
    filtered: &Filtered,
    strategy: Strategy,
    tokenizer: &dyn Tokenizer,
) -> AssembledInput {
    let mut text = with_cls(triple_with_d);
    if !filtered.text.is_empty() {
        text.push_str(SEP_JOIN);
        text.push_str(&filtered.text);
    }
    AssembledInput {
        token_count: tokenizer.count(&text),
        text,
        pattern: *pattern,
        strategy,
        neighbors_used: filtered.used,
        labels: Vec::new(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssemblerConfig {
    pub strategy: Strategy,
    pub top_k: usize,
    pub max_input_tokens: usize,
    /// Drop neighborhood triples that are answers of the sample's own pattern.
    pub exclude_answer_edges: bool,
    /// Given-node description in the main triple.
    pub use_descriptions: bool,
    /// Endpoint descriptions on top-k neighbors.
    pub neighbor_descriptions: bool,
    pub use_neighbors: bool,
}

impl Default for AssemblerConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Packed,
            top_k: 3,
            max_input_tokens: 512,
            exclude_answer_edges: true,
            use_descriptions: true,
            neighbor_descriptions: true,
            use_neighbors: true,
        }
    }
}

/// Bundles the graph, descriptions, tokenizer and provider for per-sample assembly.
pub struct Assembler<'a> {
    pub symbols: &'a Symbols,
    pub graph: &'a KnowledgeGraph,
    pub store: &'a DescriptionStore,
    pub tokenizer: &'a dyn Tokenizer,
    pub provider: &'a dyn SimilarityProvider,
    pub config: AssemblerConfig,
}

impl<'a> Assembler<'a> {
    /// Neighbors are drawn from the given node only, so the masked side never
    /// contributes a neighborhood.
    fn candidates(&self, pattern: &IncompletePattern) -> Result<Vec<NeighborCandidate>> {
        let given = pattern.given;
        if given.index() >= self.graph.n_entities() {
            return Ok(Vec::new());
        }
        let hood = self.graph.one_hop_neighborhood(given)?;
        let mut out = Vec::with_capacity(hood.len());
        for one_hop in hood {
            if self.config.exclude_answer_edges && pattern.matches(&one_hop.triple) {
                continue;
            }
            let rendered = make_one_hop_with_d(&one_hop.triple, given, self.symbols, self.store)?;
            out.push(NeighborCandidate { one_hop, rendered });
        }
        Ok(out)
    }

    pub fn assemble_pattern(&self, pattern: &IncompletePattern) -> Result<AssembledInput> {
        let empty = DescriptionStore::new();
        let main_store = if self.config.use_descriptions { self.store } else { &empty };
        let triple_with_d = make_triple_with_d(pattern, self.symbols, main_store);
        let filtered = if self.config.use_neighbors {
            let sorted = score_neighbors(&triple_with_d, self.candidates(pattern)?, self.provider)?;
            match self.config.strategy {
                Strategy::Packed => filter_packed(
                    &sorted,
                    &triple_with_d,
                    self.config.max_input_tokens,
                    self.symbols,
                    self.tokenizer,
                )?,
                Strategy::TopK => filter_top_k(
                    &sorted,
                    self.config.top_k,
                    self.symbols,
                    self.config.neighbor_descriptions.then_some(self.store),
                )?,
            }
        } else {
            Filtered::default()
        };
        Ok(assemble(
            pattern,
            &triple_with_d,
            &filtered,
            self.config.strategy,
            self.tokenizer,
        ))
    }

    pub fn assemble_sample(&self, sample: &MultiLabelSample) -> Result<AssembledInput> {
        let mut input = self.assemble_pattern(&sample.pattern)?;
        input.labels = sample.labels.clone();
        Ok(input)
    }

    /// Assemble a whole sample set on `workers` threads; output order follows the input.
    pub fn assemble_all(&self, samples: &SampleSet, workers: usize) -> Result<Vec<AssembledInput>> {
        if workers <= 1 || !self.provider.concurrent() {
            return samples.iter().map(|s| self.assemble_sample(s)).collect();
        }
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
        pool.install(|| {
            samples
                .samples
                .par_iter()
                .map(|s| self.assemble_sample(s))
                .collect()
        })
    }
}

#[derive(Serialize, Deserialize)]
pub struct AssembledRow {
    pub text: String,
    pub token_count: usize,
    pub masked_side: MaskedSide,
    pub relation: String,
    pub given: String,
    pub labels: Vec<String>,
}

impl AssembledRow {
    pub fn from_input(input: &AssembledInput, symbols: &Symbols) -> Self {
        Self {
            text: input.text.clone(),
            token_count: input.token_count,
            masked_side: input.pattern.masked_side,
            relation: symbols.relation_name(input.pattern.relation).to_owned(),
            given: symbols.entity_name(input.pattern.given).to_owned(),
            labels: input
                .labels
                .iter()
                .map(|&l| symbols.entity_name(l).to_owned())
                .collect(),
        }
    }
}

/// One `{"text","token_count","masked_side","relation","given","labels"}` object per line.
pub fn assembled_to_jsonl(inputs: &[AssembledInput], symbols: &Symbols) -> String {
    let mut out = String::new();
    for input in inputs {
        let row = AssembledRow::from_input(input, symbols);
        out.push_str(&serde_json::to_string(&row).expect("assembled rows serialize"));
        out.push('\n');
    }
    out
}

pub fn assembled_from_jsonl(text: &str) -> Result<Vec<AssembledRow>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
