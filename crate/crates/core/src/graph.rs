//! Triple loading, symbol interning, adjacency and dataset statistics.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::samples::SampleSet;

/// Dense id of an interned entity surface form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityId(pub u32);

/// Dense id of an interned relation surface form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Injective string interner handing out dense ids in first-seen order.
#[derive(Clone, Debug, Default)]
pub struct Interner {
    names: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Interner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_owned());
        self.ids.insert(name.to_owned(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.ids.get(name).copied()
    }

    pub fn resolve(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }
}

/// Entity and relation symbol tables shared by every split of a dataset.
#[derive(Clone, Debug, Default)]
pub struct Symbols {
    pub entities: Interner,
    pub relations: Interner,
}

impl Symbols {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entity(&mut self, name: &str) -> EntityId {
        EntityId(self.entities.intern(name))
    }

    pub fn relation(&mut self, name: &str) -> RelationId {
        RelationId(self.relations.intern(name))
    }

    pub fn entity_id(&self, name: &str) -> Option<EntityId> {
        self.entities.get(name).map(EntityId)
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relations.get(name).map(RelationId)
    }

    /// Surface form of an entity. Panics on an id that was not handed out by this table.
    pub fn entity_name(&self, id: EntityId) -> &str {
        self.entities
            .resolve(id.0)
            .expect("entity id from a different symbol table")
    }

    pub fn relation_name(&self, id: RelationId) -> &str {
        self.relations
            .resolve(id.0)
            .expect("relation id from a different symbol table")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Self { head, relation, tail }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Role the queried node plays in an incident triple.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Head,
    Tail,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OneHopTriple {
    pub triple: Triple,
    pub role: Role,
    /// Position of the triple in the graph's insertion order.
    pub position: usize,
}

impl OneHopTriple {
    /// The endpoint opposite to the queried node.
    pub fn neighbor(&self) -> EntityId {
        match self.role {
            Role::Head => self.triple.tail,
            Role::Tail => self.triple.head,
        }
    }
}

/// Parse benchmark-style `head<TAB>relation<TAB>tail` lines.
pub fn parse_triples(text: &str, symbols: &mut Symbols) -> Result<Vec<Triple>> {
    let mut triples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let head = symbols.entity(fields[0]);
        let relation = symbols.relation(fields[1]);
        let tail = symbols.entity(fields[2]);
        triples.push(Triple::new(head, relation, tail));
    }
    Ok(triples)
}

/// Load one split of triples from a TSV file, extending `symbols`.
///
/// Duplicate lines are kept as duplicate triples. The split tag only
/// feeds error context; both splits share one symbol table.
pub fn load_triples(path: &Path, split: Split, symbols: &mut Symbols) -> Result<Vec<Triple>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_triples(&text, symbols).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{} ({:?} split): {message}", path.display(), split),
        },
        other => other,
    })
}

/// Immutable directed multigraph with per-entity incidence lists.
#[derive(Clone, Debug)]
pub struct KnowledgeGraph {
    triples: Vec<Triple>,
    adjacency: Vec<Vec<(usize, Role)>>,
}

impl KnowledgeGraph {
    /// Build over `n_entities` nodes. Ids beyond the triples' range are isolated nodes.
    pub fn new(n_entities: usize, triples: Vec<Triple>) -> Self {
        let max_id = triples
            .iter()
            .map(|t| t.head.index().max(t.tail.index()) + 1)
            .max()
            .unwrap_or(0);
        let mut adjacency = vec![Vec::new(); n_entities.max(max_id)];
        for (pos, t) in triples.iter().enumerate() {
            adjacency[t.head.index()].push((pos, Role::Head));
            adjacency[t.tail.index()].push((pos, Role::Tail));
        }
        Self { triples, adjacency }
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn n_entities(&self) -> usize {
        self.adjacency.len()
    }

    pub fn degree(&self, node: EntityId) -> usize {
        self.adjacency.get(node.index()).map_or(0, Vec::len)
    }

    /// Every triple incident to `node`, either direction, in insertion order.
    ///
    /// A self-loop is reported twice, once per role.
    pub fn one_hop_neighborhood(&self, node: EntityId) -> Result<Vec<OneHopTriple>> {
        let incident = self
            .adjacency
            .get(node.index())
            .ok_or(Error::UnknownEntity(node.0))?;
        Ok(incident
            .iter()
            .map(|&(position, role)| OneHopTriple {
                triple: self.triples[position],
                role,
                position,
            })
            .collect())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub n_nodes: usize,
    pub n_relations: usize,
    pub n_train_triples: usize,
    pub n_test_triples: usize,
    pub n_disconnected: usize,
    pub avg_one_hop: f64,
    pub n_train_samples: usize,
    pub n_test_samples: usize,
    pub n_labels: usize,
    pub avg_labels_per_sample: f64,
    pub avg_samples_per_label: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Compute dataset statistics from the two splits and their sample sets.
///
/// Nodes and relations are counted over both splits; degrees, the
/// disconnected count and label statistics use the training split only.
pub fn compute_stats(
    train: &[Triple],
    test: &[Triple],
    train_samples: &SampleSet,
    test_samples: &SampleSet,
) -> GraphStats {
    let mut nodes = std::collections::HashSet::new();
    let mut relations = std::collections::HashSet::new();
    for t in train.iter().chain(test) {
        nodes.insert(t.head);
        nodes.insert(t.tail);
        relations.insert(t.relation);
    }

    let mut degree: HashMap<EntityId, usize> = HashMap::new();
    for t in train {
        *degree.entry(t.head).or_default() += 1;
        *degree.entry(t.tail).or_default() += 1;
    }
    let degree_sum: usize = degree.values().sum();

    // With the triple removed, both endpoints must be left without edges.
    let n_disconnected = train
        .iter()
        .filter(|t| {
            if t.head == t.tail {
                degree[&t.head] == 2
            } else {
                degree[&t.head] == 1 && degree[&t.tail] == 1
            }
        })
        .count();

    let label_total: usize = train_samples.samples.iter().map(|s| s.labels.len()).sum();
    let n_labels = train_samples
        .samples
        .iter()
        .flat_map(|s| s.labels.iter().copied())
        .collect::<std::collections::HashSet<_>>()
        .len();

    GraphStats {
        n_nodes: nodes.len(),
        n_relations: relations.len(),
        n_train_triples: train.len(),
        n_test_triples: test.len(),
        n_disconnected,
        avg_one_hop: ratio(degree_sum, nodes.len()),
        n_train_samples: train_samples.len(),
        n_test_samples: test_samples.len(),
        n_labels,
        avg_labels_per_sample: ratio(label_total, train_samples.len()),
        avg_samples_per_label: ratio(label_total, n_labels),
    }
}

impl GraphStats {
    /// Plain `key: value` report, one field per line.
    pub fn to_report(&self) -> String {
        let mut out = String::new();
        let rows: [(&str, String); 11] = [
            ("n_nodes", self.n_nodes.to_string()),
            ("n_relations", self.n_relations.to_string()),
            ("n_train_triples", self.n_train_triples.to_string()),
            ("n_test_triples", self.n_test_triples.to_string()),
            ("n_disconnected", self.n_disconnected.to_string()),
            ("avg_one_hop", format!("{:.3}", self.avg_one_hop)),
            ("n_train_samples", self.n_train_samples.to_string()),
            ("n_test_samples", self.n_test_samples.to_string()),
            ("n_labels", self.n_labels.to_string()),
            ("avg_labels_per_sample", format!("{:.3}", self.avg_labels_per_sample)),
            ("avg_samples_per_label", format!("{:.3}", self.avg_samples_per_label)),
        ];
        for (key, value) in rows {
            out.push_str(key);
            out.push_str(": ");
            out.push_str(&value);
            out.push('\n');
        }
        out
    }
}
