//! Deterministic synthetic knowledge graph with learnable label structure.
//!
//! Entities belong to families and have one of five kinds. Relation `j`
//! links every member of kind `j` to the members of kind `j + 1` in the
//! same family, so the answer set of any pattern is pinned down by the
//! given node's family and kind, both of which show up in its
//! description and its one-hop neighbors.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const RELATIONS: [&str; 5] = ["feeds", "guards", "trades_with", "visits", "mentors"];
const KIND_NAMES: [&str; 5] = ["amber", "basalt", "cobalt", "dune", "ember"];

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub families: usize,
    pub members_per_kind: usize,
    /// Share of triples moved to the test split.
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            families: 20,
            members_per_kind: 2,
            test_fraction: 0.1,
            seed: 20_231_017,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyntheticKg {
    pub train_tsv: String,
    pub test_tsv: String,
    pub descriptions_tsv: String,
}

fn entity_name(family: usize, kind: usize, member: usize) -> String {
    format!("f{family:02}_{}{member}", KIND_NAMES[kind])
}

pub fn generate(spec: &SyntheticSpec) -> SyntheticKg {
    let kinds = KIND_NAMES.len();
    let mut triples = Vec::new();
    let mut descriptions = String::new();
    for f in 0..spec.families {
        for kind in 0..kinds {
            for m in 0..spec.members_per_kind {
                descriptions.push_str(&format!(
                    "{}\t{} creature of clan{f:02}; one of the {} kind\n",
                    entity_name(f, kind, m),
                    KIND_NAMES[kind],
                    KIND_NAMES[kind],
                ));
            }
        }
        for kind in 0..kinds {
            let next = (kind + 1) % kinds;
            for m in 0..spec.members_per_kind {
                for n in 0..spec.members_per_kind {
                    triples.push(format!(
                        "{}\t{}\t{}",
                        entity_name(f, kind, m),
                        RELATIONS[kind],
                        entity_name(f, next, n)
                    ));
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut order: Vec<usize> = (0..triples.len()).collect();
    order.shuffle(&mut rng);
    let n_test = (triples.len() as f64 * spec.test_fraction).round() as usize;
    let mut is_test = vec![false; triples.len()];
    for &i in &order[..n_test] {
        is_test[i] = true;
    }
    let mut train_tsv = String::new();
    let mut test_tsv = String::new();
    for (t, test) in triples.iter().zip(is_test) {
        let out = if test { &mut test_tsv } else { &mut train_tsv };
        out.push_str(t);
        out.push('\n');
    }
    SyntheticKg {
        train_tsv,
        test_tsv,
        descriptions_tsv: descriptions,
    }
}
