mod common;

use common::{assemble_tiny, bless, golden, ABLATIONS, FORMS};
use kglp::assemble::assembled_from_jsonl;

#[test]
fn assembly_forms_match_golden_files() {
    for case in FORMS.iter().chain(&ABLATIONS) {
        let got = assemble_tiny(case, 1);
        bless(case.name, &got);
        assert_eq!(got, golden(case.name), "{}", case.name);
    }
}

fn text_of(name: &str, side: &str, relation: &str, given: &str) -> String {
    let rows = assembled_from_jsonl(&golden(name)).unwrap();
    rows.into_iter()
        .find(|r| r.masked_side.as_str() == side && r.relation == relation && r.given == given)
        .unwrap_or_else(|| panic!("no {side}-masked row for ({relation}, {given}) in {name}"))
        .text
}

// Expected strings below are written out by hand from the fixture files.

#[test]
fn no_neighbor_forms() {
    assert_eq!(
        text_of("no_neighbors", "tail", "hypernym", "cat"),
        "[CLS] cat small domesticated feline; kept as a pet hypernym [MASK]"
    );
    assert_eq!(
        text_of("no_neighbors", "head", "hypernym", "feline"),
        "[CLS] [MASK] hypernym feline cat family member; retractile claws"
    );
}

#[test]
fn top_k_forms() {
    // Only neighbor of `cat` besides the answer edge.
    assert_eq!(
        text_of("top_k", "tail", "hypernym", "cat"),
        "[CLS] cat small domesticated feline; kept as a pet hypernym [MASK] [SEP] \
         cat small domesticated feline; kept as a pet has_part whisker stiff facial hair"
    );
    // `mane` has a single incident edge, which is the answer edge.
    assert_eq!(
        text_of("top_k", "head", "has_part", "mane"),
        "[CLS] [MASK] has_part mane long neck hair"
    );
}

#[test]
fn packed_forms() {
    // Budget 14: the 11-token base leaves no room for a 4-token neighbor.
    assert_eq!(
        text_of("packed", "tail", "hypernym", "cat"),
        "[CLS] cat small domesticated feline; kept as a pet hypernym [MASK]"
    );
    // Trigram cosine ranks tiger (0.761) over lion (0.708) and cat (0.701);
    // only the first fits next to the 9-token base.
    assert_eq!(
        text_of("packed", "tail", "hypernym", "feline"),
        "[CLS] feline cat family member; retractile claws hypernym [MASK] [SEP] tiger hypernym feline"
    );
    assert_eq!(
        text_of("packed", "head", "hypernym", "carnivore"),
        "[CLS] [MASK] hypernym carnivore flesh eating mammal [SEP] carnivore hypernym mammal"
    );
}

#[test]
fn constant_provider_keeps_adjacency_order() {
    // cat, lion and tiger were inserted in that order; ngram scoring reverses them.
    let constant = text_of("ablation_constant_provider", "tail", "hypernym", "feline");
    let ranked = text_of("top_k", "tail", "hypernym", "feline");
    let first = |t: &str| t.split(" [SEP] ").nth(1).unwrap().split(' ').next().unwrap().to_owned();
    assert_eq!(first(&constant), "cat");
    assert_eq!(first(&ranked), "tiger");
}

#[test]
fn ablations_differ_from_base_and_each_other() {
    let mut seen = vec![golden("top_k")];
    for case in &ABLATIONS {
        let g = golden(case.name);
        assert!(!seen.contains(&g), "{} duplicates an earlier assembly", case.name);
        seen.push(g);
    }
}
