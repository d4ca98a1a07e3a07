//! Grouping of triples into multi-label samples over incomplete patterns.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EntityId, RelationId, Symbols, Triple};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskedSide {
    Head,
    Tail,
}

impl MaskedSide {
    pub fn as_str(self) -> &'static str {
        match self {
            MaskedSide::Head => "head",
            MaskedSide::Tail => "tail",
        }
    }
}

impl std::str::FromStr for MaskedSide {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "head" => Ok(MaskedSide::Head),
            "tail" => Ok(MaskedSide::Tail),
            other => Err(Error::invalid(format!("masked side must be head or tail, got `{other}`"))),
        }
    }
}

/// `(MASK, r, given)` when the head is masked, `(given, r, MASK)` when the tail is.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct IncompletePattern {
    pub relation: RelationId,
    pub given: EntityId,
    pub masked_side: MaskedSide,
}

impl IncompletePattern {
    pub fn head_masked(relation: RelationId, tail: EntityId) -> Self {
        Self {
            relation,
            given: tail,
            masked_side: MaskedSide::Head,
        }
    }

    pub fn tail_masked(head: EntityId, relation: RelationId) -> Self {
        Self {
            relation,
            given: head,
            masked_side: MaskedSide::Tail,
        }
    }

    /// The full triple obtained by filling the masked slot with `label`.
    pub fn complete(&self, label: EntityId) -> Triple {
        match self.masked_side {
            MaskedSide::Head => Triple::new(label, self.relation, self.given),
            MaskedSide::Tail => Triple::new(self.given, self.relation, label),
        }
    }

    /// True when `triple` is one of this pattern's answer edges.
    pub fn matches(&self, triple: &Triple) -> bool {
        triple.relation == self.relation
            && match self.masked_side {
                MaskedSide::Head => triple.tail == self.given,
                MaskedSide::Tail => triple.head == self.given,
            }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiLabelSample {
    pub pattern: IncompletePattern,
    /// Deduplicated, in first-occurrence order.
    pub labels: Vec<EntityId>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SampleSet {
    pub samples: Vec<MultiLabelSample>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &MultiLabelSample> {
        self.samples.iter()
    }
}

/// Group triples by incomplete pattern. Each triple contributes its
/// tail-masked pattern and then its head-masked pattern.
pub fn build_samples(triples: &[Triple]) -> SampleSet {
    let mut slot: HashMap<IncompletePattern, usize> = HashMap::new();
    let mut samples: Vec<MultiLabelSample> = Vec::new();
    for t in triples {
        let pairs = [
            (IncompletePattern::tail_masked(t.head, t.relation), t.tail),
            (IncompletePattern::head_masked(t.relation, t.tail), t.head),
        ];
        for (pattern, label) in pairs {
            let idx = *slot.entry(pattern).or_insert_with(|| {
                samples.push(MultiLabelSample {
                    pattern,
                    labels: Vec::new(),
                });
                samples.len() - 1
            });
            let labels = &mut samples[idx].labels;
            if !labels.contains(&label) {
                labels.push(label);
            }
        }
    }
    SampleSet { samples }
}

/// The `k` training entities that make up the label space, in first-seen order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EntityIndex {
    entities: Vec<EntityId>,
    columns: HashMap<EntityId, usize>,
}

impl EntityIndex {
    pub fn from_triples(triples: &[Triple]) -> Self {
        let mut index = Self::default();
        for t in triples {
            index.push(t.head);
            index.push(t.tail);
        }
        index
    }

    pub fn from_entities(entities: impl IntoIterator<Item = EntityId>) -> Self {
        let mut index = Self::default();
        for e in entities {
            index.push(e);
        }
        index
    }

    fn push(&mut self, e: EntityId) {
        if !self.columns.contains_key(&e) {
            self.columns.insert(e, self.entities.len());
            self.entities.push(e);
        }
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn column(&self, e: EntityId) -> Option<usize> {
        self.columns.get(&e).copied()
    }

    pub fn entity(&self, column: usize) -> EntityId {
        self.entities[column]
    }

    pub fn entities(&self) -> &[EntityId] {
        &self.entities
    }

    /// One surface form per line, line number = column.
    pub fn to_text(&self, symbols: &Symbols) -> String {
        let mut out = String::new();
        for &e in &self.entities {
            out.push_str(symbols.entity_name(e));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str, symbols: &mut Symbols) -> Self {
        Self::from_entities(text.lines().filter(|l| !l.is_empty()).map(|l| symbols.entity(l)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelMode {
    /// Every label must be indexed.
    Train,
    /// Unindexed labels are dropped and counted.
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelVector {
    pub bits: Vec<u8>,
    pub dropped: usize,
}

impl LabelVector {
    pub fn positives(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 1)
            .map(|(j, _)| j)
            .collect()
    }
}

pub fn label_vector(
    sample: &MultiLabelSample,
    index: &EntityIndex,
    mode: LabelMode,
    symbols: &Symbols,
) -> Result<LabelVector> {
    let mut bits = vec![0u8; index.len()];
    let mut dropped = 0;
    for &label in &sample.labels {
        match index.column(label) {
            Some(j) => bits[j] = 1,
            None if mode == LabelMode::Test => dropped += 1,
            None => return Err(Error::UnindexedLabel(symbols.entity_name(label).to_owned())),
        }
    }
    Ok(LabelVector { bits, dropped })
}

#[derive(Serialize, Deserialize)]
struct SampleRow<'a> {
    masked_side: MaskedSide,
    #[serde(borrow)]
    relation: std::borrow::Cow<'a, str>,
    #[serde(borrow)]
    given: std::borrow::Cow<'a, str>,
    labels: Vec<std::borrow::Cow<'a, str>>,
}

/// One JSON object per line: `{"masked_side","relation","given","labels"}`.
pub fn samples_to_jsonl(set: &SampleSet, symbols: &Symbols) -> String {
    let mut out = String::new();
    for s in &set.samples {
        let row = SampleRow {
            masked_side: s.pattern.masked_side,
            relation: symbols.relation_name(s.pattern.relation).into(),
            given: symbols.entity_name(s.pattern.given).into(),
            labels: s.labels.iter().map(|&l| symbols.entity_name(l).into()).collect(),
        };
        out.push_str(&serde_json::to_string(&row).expect("sample rows serialize"));
        out.push('\n');
    }
    out
}

pub fn samples_from_jsonl(text: &str, symbols: &mut Symbols) -> Result<SampleSet> {
    let mut samples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: SampleRow = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        let relation = symbols.relation(&row.relation);
        let given = symbols.entity(&row.given);
        let pattern = match row.masked_side {
            MaskedSide::Head => IncompletePattern::head_masked(relation, given),
            MaskedSide::Tail => IncompletePattern::tail_masked(given, relation),
        };
        let mut labels: Vec<EntityId> = Vec::with_capacity(row.labels.len());
        for l in &row.labels {
            let id = symbols.entity(l);
            if !labels.contains(&id) {
                labels.push(id);
            }
        }
        samples.push(MultiLabelSample { pattern, labels });
    }
    Ok(SampleSet { samples })
}
