//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kglp::assemble::similarity::NgramCosine;
use kglp::assemble::{
    make_one_hop_with_d, make_triple_with_d, score_neighbors, Assembler, AssemblerConfig, NeighborCandidate, Strategy,
};
use kglp::graph::{compute_stats, parse_triples, GraphStats, KnowledgeGraph, Symbols, Triple};
use kglp::metrics::{precision_at_k, top_k_indices};
use kglp::pipeline::run_pipeline;
use kglp::samples::{build_samples, IncompletePattern, MaskedSide};
use kglp::text::{DescriptionStore, Tokenizer, WhitespaceTokenizer};
use kglp::train::loss::{loss_stage1, loss_stage23};
use kglp::train::model::{MeanEncoder, ModelParams};
use kglp::train::{
    batch_objective, gradients, precision_coefficients, EncodedSample, LogEntry, LrSchedule, StageConfig, StageLog,
};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- 1: losses

/// `ln(1 - p)`: power series for small `p`, direct log otherwise (where `1 - p` is exact).
fn ln_one_minus(p: f64) -> f64 {
    if p < 0.05 {
        let mut term = p;
        let mut sum = 0.0;
        let mut n = 1.0;
        while term / n > 1e-300 && n < 400.0 {
            sum += term / n;
            term *= p;
            n += 1.0;
        }
        -sum
    } else {
        (1.0 - p).ln()
    }
}

/// Compensated (Neumaier) sum.
fn neumaier(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

fn oracle_stage1(p: &[f64], y: &[u8], alpha: f64) -> f64 {
    let terms = p.iter().zip(y).map(|(&p, &y)| {
        if y == 1 {
            -alpha * p.ln()
        } else {
            -ln_one_minus(p)
        }
    });
    neumaier(terms) / p.len() as f64
}

fn oracle_stage23(p: &[f64], y: &[u8], alpha: f64, thr: f64) -> f64 {
    let predicted: Vec<usize> = (0..p.len()).filter(|&j| p[j] >= thr).collect();
    let precision = if predicted.is_empty() {
        0.0
    } else {
        predicted.iter().filter(|&&j| y[j] == 1).count() as f64 / predicted.len() as f64
    };
    oracle_stage1(p, y, alpha) / f64::max(precision, 0.01)
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

// The worked values are rounded literals, not approximations of constants.
#[allow(clippy::approx_constant)]
fn criterion_losses() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(1..40);
        let p: Vec<f64> = (0..n)
            .map(|_| {
                let e: f64 = rng.gen_range(-6.0..-0.01);
                let v = 10f64.powf(e);
                if rng.gen_bool(0.5) {
                    v
                } else {
                    1.0 - v
                }
            })
            .collect();
        let y: Vec<u8> = (0..n).map(|_| rng.gen_bool(0.3) as u8).collect();
        let alpha = *[1.0, 2.0, 20.0, 100.0, 30_000.0].choose(&mut rng).unwrap();
        let thr = rng.gen_range(0.05..0.95);
        let a = loss_stage1(&p, &y, alpha).map_err(|e| e.to_string())?;
        let b = loss_stage23(&p, &y, alpha, thr).map_err(|e| e.to_string())?;
        worst = worst.max(rel(a, oracle_stage1(&p, &y, alpha)));
        worst = worst.max(rel(b, oracle_stage23(&p, &y, alpha, thr)));
    }
    ensure(worst <= 1e-9, || format!("max relative error {worst:e} > 1e-9"))?;
    let w1 = loss_stage1(&[0.5], &[1], 2.0).unwrap();
    let w2 = loss_stage1(&[0.5], &[0], 30_000.0).unwrap();
    let w3 = loss_stage23(&[0.6, 0.7], &[1, 0], 2.0, 0.5).unwrap();
    for (got, want) in [(w1, 1.386294), (w2, 0.693147), (w3, 2.22562)] {
        ensure((got - want).abs() <= 1e-5, || format!("worked value {got} != {want}"))?;
    }
    Ok(format!("1000 instances, max rel err {worst:.1e}; worked values {w1:.6} {w2:.6} {w3:.5}"))
}

// ---------------------------------------------------------------- 2: gradients

fn tiny_batch(rng: &mut ChaCha8Rng, vocab: usize, k: usize) -> Vec<EncodedSample> {
    (0..rng.gen_range(1..4))
        .map(|_| {
            let len = rng.gen_range(1..6);
            let tokens = (0..len).map(|_| rng.gen_range(0..vocab)).collect();
            let positives = (0..k).filter(|_| rng.gen_bool(0.4)).collect();
            EncodedSample { tokens, positives }
        })
        .collect()
}

fn criterion_gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let encoder = MeanEncoder;
    let mut worst = 0.0f64;
    let mut checks = 0;
    for model in 0..60 {
        let (vocab, dim, k) = (rng.gen_range(2..6), rng.gen_range(1..4), rng.gen_range(1..5));
        let mut params = ModelParams::random(vocab, dim, k, 0.8, &mut rng);
        params.classifier_bias.iter_mut().for_each(|b| *b = rng.gen_range(-1.0..1.0));
        let batch = tiny_batch(&mut rng, vocab, k);
        for alpha in [1.0, 20.0, 100.0, 30_000.0] {
            for use_precision in [false, true] {
                let stage = StageConfig::new(alpha, use_precision, 1, batch.len());
                let (g, _) = gradients(&params, &encoder, &batch, &stage).map_err(|e| e.to_string())?;
                let coefficients = precision_coefficients(&params, &encoder, &batch, &stage);
                let analytic: Vec<f64> = g.values().collect();
                let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let h = 1e-6;
                for i in 0..params.n_values() {
                    let mut plus = params.clone();
                    let mut minus = params.clone();
                    *plus.values_mut().nth(i).unwrap() += h;
                    *minus.values_mut().nth(i).unwrap() -= h;
                    let fd = (batch_objective(&plus, &encoder, &batch, alpha, &coefficients)
                        - batch_objective(&minus, &encoder, &batch, alpha, &coefficients))
                        / (2.0 * h);
                    // Components far below the gradient's scale are compared against that scale.
                    let denom = analytic[i].abs().max(fd.abs()).max(1e-3 * scale).max(1e-12);
                    let err = (analytic[i] - fd).abs() / denom;
                    if err > worst {
                        worst = err;
                    }
                    checks += 1;
                }
                ensure(worst <= 1e-5, || {
                    format!("model {model}, alpha {alpha}, precision {use_precision}: rel err {worst:e}")
                })?;
            }
        }
    }
    Ok(format!("60 models x 4 alphas x 2 losses, {checks} partials, max rel err {worst:.1e}"))
}

// ---------------------------------------------------------------- 3: schedule

fn criterion_schedule() -> Outcome {
    let s = LrSchedule::default();
    ensure(s.rate(0) == 0.0, || "lr(0) != 0".into())?;
    let at = s.rate(12_000);
    ensure((at - 1.6471e-4).abs() <= 1e-8, || format!("lr(12000) = {at:e}"))?;
    let warm = 12_000f64;
    let rise = warm * warm.powf(-1.5) / (2.0 * 768f64.sqrt());
    let decay = warm.powf(-0.5) / (2.0 * 768f64.sqrt());
    ensure(rel(rise, decay) < 1e-12 && rel(at, rise) < 1e-12, || "branches disagree at warmup".into())?;
    let jump = (s.rate(12_001) - at).abs().max((at - s.rate(11_999)).abs());
    ensure(jump <= 2.0 * at / warm, || format!("discontinuity {jump:e} around warmup"))?;
    let rates: Vec<f64> = (1..=50_000u64).map(|t| s.rate(t)).collect();
    let up = rates[..12_000].windows(2).all(|w| w[0] < w[1]);
    let down = rates[11_999..].windows(2).all(|w| w[0] > w[1]);
    ensure(up && down, || "not strictly up then down on 1..50000".into())?;
    Ok(format!("lr(12000) = {at:.6e}; rises on 1..12000, decays to 50000"))
}

// ---------------------------------------------------------------- 4 & 10: golden assemblies

fn criterion_golden_forms() -> Outcome {
    let mut compared = 0;
    for case in &common::FORMS {
        let golden = common::golden(case.name);
        for workers in [1, 2, 4, 8] {
            for _run in 0..2 {
                let got = common::assemble_tiny(case, workers);
                ensure(got == golden, || format!("{} differs with {workers} workers", case.name))?;
                compared += 1;
            }
        }
        let rows = kglp::assemble::assembled_from_jsonl(&golden).map_err(|e| e.to_string())?;
        for side in [MaskedSide::Head, MaskedSide::Tail] {
            ensure(rows.iter().any(|r| r.masked_side == side), || {
                format!("{} has no {}-masked row", case.name, side.as_str())
            })?;
        }
    }
    Ok(format!("3 strategies x 2 masked sides; {compared} byte-identical reassemblies over 1/2/4/8 workers"))
}

fn criterion_ablations() -> Outcome {
    let mut seen = vec![("top_k", common::golden("top_k"))];
    for case in &common::ABLATIONS {
        let golden = common::golden(case.name);
        ensure(common::assemble_tiny(case, 1) == golden, || format!("{} differs from golden", case.name))?;
        if let Some((other, _)) = seen.iter().find(|(_, g)| *g == golden) {
            return Err(format!("{} is identical to {other}", case.name));
        }
        seen.push((case.name, golden));
    }
    // Constant scores must keep adjacency order; neighbors-off must drop every [SEP].
    let constant = common::golden("ablation_constant_provider");
    ensure(constant.contains("retractile claws hypernym [MASK] [SEP] cat small domesticated"), || {
        "constant provider did not keep insertion order".into()
    })?;
    ensure(!common::golden("ablation_no_neighbors").contains("[SEP]"), || "neighbors-off kept neighbors".into())?;
    ensure(!common::golden("ablation_no_descriptions").contains("domesticated"), || {
        "descriptions-off kept descriptions".into()
    })?;
    Ok("constant provider, no descriptions, no neighbors: golden-exact and pairwise distinct".into())
}

// ---------------------------------------------------------------- 5: packing maximality

fn criterion_packing() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let budget = 512;
    let mut truncated = 0;
    for fixture in 0..200 {
        let n_entities = rng.gen_range(5..120);
        let n_triples = rng.gen_range(50..400);
        let hub = 0usize;
        let mut text = String::new();
        for _ in 0..n_triples {
            let a = if rng.gen_bool(0.6) { hub } else { rng.gen_range(0..n_entities) };
            let b = rng.gen_range(0..n_entities);
            let (h, t) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
            text.push_str(&format!("e{h}\tr{}\te{t}\n", rng.gen_range(0..6)));
        }
        let mut symbols = Symbols::new();
        let triples = parse_triples(&text, &mut symbols).map_err(|e| e.to_string())?;
        let graph = KnowledgeGraph::new(symbols.entities.len(), triples.clone());
        let mut store = DescriptionStore::new();
        for e in 0..symbols.entities.len() {
            let words = rng.gen_range(0..12);
            let desc: Vec<String> = (0..words).map(|w| format!("w{}", (w * 7 + e) % 50)).collect();
            store.insert(kglp::graph::EntityId(e as u32), desc.join(" "));
        }
        let tokenizer = WhitespaceTokenizer::for_symbols(&symbols);
        let config = AssemblerConfig {
            strategy: Strategy::Packed,
            max_input_tokens: budget,
            ..AssemblerConfig::default()
        };
        let assembler = Assembler {
            symbols: &symbols,
            graph: &graph,
            store: &store,
            tokenizer: &tokenizer,
            provider: &NgramCosine,
            config,
        };
        for sample in build_samples(&triples).iter().take(12) {
            let input = assembler.assemble_sample(sample).map_err(|e| e.to_string())?;
            ensure(input.token_count <= budget && tokenizer.count(&input.text) == input.token_count, || {
                format!("fixture {fixture}: {} tokens", input.token_count)
            })?;
            // Recompute the ranked candidate list.
            let anchor = make_triple_with_d(&sample.pattern, &symbols, &store);
            let given = sample.pattern.given;
            let mut candidates = Vec::new();
            for one_hop in graph.one_hop_neighborhood(given).map_err(|e| e.to_string())? {
                if sample.pattern.matches(&one_hop.triple) {
                    continue;
                }
                let rendered = make_one_hop_with_d(&one_hop.triple, given, &symbols, &store).map_err(|e| e.to_string())?;
                candidates.push(NeighborCandidate { one_hop, rendered });
            }
            let sorted = score_neighbors(&anchor, candidates, &NgramCosine).map_err(|e| e.to_string())?;
            let bare = |t: &Triple| {
                format!(
                    "{} {} {}",
                    symbols.entity_name(t.head),
                    symbols.relation_name(t.relation),
                    symbols.entity_name(t.tail)
                )
            };
            let mut expected = format!("[CLS] {anchor}");
            for n in &sorted[..input.neighbors_used] {
                expected.push_str(" [SEP] ");
                expected.push_str(&bare(&n.one_hop.triple));
            }
            ensure(expected == input.text, || format!("fixture {fixture}: text is not the ranked prefix"))?;
            if input.neighbors_used < sorted.len() {
                truncated += 1;
                let next = format!("{} [SEP] {}", input.text, bare(&sorted[input.neighbors_used].one_hop.triple));
                ensure(tokenizer.count(&next) > budget, || {
                    format!("fixture {fixture}: next neighbor would still fit")
                })?;
            }
        }
    }
    ensure(truncated > 100, || format!("only {truncated} assemblies hit the budget"))?;
    Ok(format!("200 fixtures; all within 512 tokens; {truncated} budget-bound assemblies are maximal"))
}

// ---------------------------------------------------------------- 6: grouping

fn random_triples(rng: &mut ChaCha8Rng, max: usize) -> (Symbols, Vec<Triple>) {
    let n = rng.gen_range(0..=max);
    let n_ent = rng.gen_range(1..8);
    let n_rel = rng.gen_range(1..4);
    let mut text = String::new();
    for _ in 0..n {
        text.push_str(&format!(
            "n{}\tr{}\tn{}\n",
            rng.gen_range(0..n_ent),
            rng.gen_range(0..n_rel),
            rng.gen_range(0..n_ent)
        ));
    }
    let mut symbols = Symbols::new();
    let triples = parse_triples(&text, &mut symbols).unwrap();
    (symbols, triples)
}

/// Patterns in first-occurrence order (tail-masked before head-masked per
/// triple) with answers collected by a full scan.
fn brute_force_groups(triples: &[Triple]) -> Vec<(IncompletePattern, Vec<kglp::graph::EntityId>)> {
    let mut patterns: Vec<IncompletePattern> = Vec::new();
    for t in triples {
        for p in [
            IncompletePattern::tail_masked(t.head, t.relation),
            IncompletePattern::head_masked(t.relation, t.tail),
        ] {
            if !patterns.contains(&p) {
                patterns.push(p);
            }
        }
    }
    patterns
        .into_iter()
        .map(|p| {
            let mut labels = Vec::new();
            for t in triples {
                let answer = match p.masked_side {
                    MaskedSide::Tail if t.head == p.given && t.relation == p.relation => Some(t.tail),
                    MaskedSide::Head if t.tail == p.given && t.relation == p.relation => Some(t.head),
                    _ => None,
                };
                if let Some(a) = answer {
                    if !labels.contains(&a) {
                        labels.push(a);
                    }
                }
            }
            (p, labels)
        })
        .collect()
}

fn criterion_grouping() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    for g in 0..500 {
        let (_, triples) = random_triples(&mut rng, 30);
        let got: Vec<_> = build_samples(&triples)
            .samples
            .into_iter()
            .map(|s| (s.pattern, s.labels))
            .collect();
        ensure(got == brute_force_groups(&triples), || format!("graph {g} differs from brute force"))?;
    }
    let mut symbols = Symbols::new();
    let triples = parse_triples("h1\thypernym\tt\nh2\thypernym\tt\nh3\thypernym\tt\n", &mut symbols).unwrap();
    let set = build_samples(&triples);
    let r = symbols.relation_id("hypernym").unwrap();
    let t = symbols.entity_id("t").unwrap();
    let sample = set
        .iter()
        .find(|s| s.pattern == IncompletePattern::head_masked(r, t))
        .ok_or("no (MASK, hypernym, t) sample")?;
    let names: BTreeSet<&str> = sample.labels.iter().map(|&e| symbols.entity_name(e)).collect();
    ensure(names == BTreeSet::from(["h1", "h2", "h3"]), || format!("pooled labels {names:?}"))?;
    Ok("500 random graphs equal brute-force grouping; (MASK, hypernym, t) -> {h1, h2, h3}".into())
}

// ---------------------------------------------------------------- 7: statistics

fn naive_stats(train: &[Triple], test: &[Triple]) -> GraphStats {
    let mut nodes = Vec::new();
    let mut rels = Vec::new();
    for t in train.iter().chain(test) {
        for e in [t.head, t.tail] {
            if !nodes.contains(&e) {
                nodes.push(e);
            }
        }
        if !rels.contains(&t.relation) {
            rels.push(t.relation);
        }
    }
    let touches = |t: &Triple, e| (t.head == e) as usize + (t.tail == e) as usize;
    let degree_sum: usize = nodes.iter().map(|&e| train.iter().map(|t| touches(t, e)).sum::<usize>()).sum();
    let n_disconnected = (0..train.len())
        .filter(|&i| {
            let t = train[i];
            (0..train.len())
                .filter(|&j| j != i)
                .all(|j| touches(&train[j], t.head) == 0 && touches(&train[j], t.tail) == 0)
        })
        .count();
    let train_groups = brute_force_groups(train);
    let label_total: usize = train_groups.iter().map(|(_, l)| l.len()).sum();
    let distinct: HashSet<_> = train_groups.iter().flat_map(|(_, l)| l.iter().copied()).collect();
    let div = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    GraphStats {
        n_nodes: nodes.len(),
        n_relations: rels.len(),
        n_train_triples: train.len(),
        n_test_triples: test.len(),
        n_disconnected,
        avg_one_hop: div(degree_sum, nodes.len()),
        n_train_samples: train_groups.len(),
        n_test_samples: brute_force_groups(test).len(),
        n_labels: distinct.len(),
        avg_labels_per_sample: div(label_total, train_groups.len()),
        avg_samples_per_label: div(label_total, distinct.len()),
    }
}

fn stats_match(a: &GraphStats, b: &GraphStats) -> bool {
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(1.0);
    a.n_nodes == b.n_nodes
        && a.n_relations == b.n_relations
        && a.n_train_triples == b.n_train_triples
        && a.n_test_triples == b.n_test_triples
        && a.n_disconnected == b.n_disconnected
        && a.n_train_samples == b.n_train_samples
        && a.n_test_samples == b.n_test_samples
        && a.n_labels == b.n_labels
        && close(a.avg_one_hop, b.avg_one_hop)
        && close(a.avg_labels_per_sample, b.avg_labels_per_sample)
        && close(a.avg_samples_per_label, b.avg_samples_per_label)
}

fn criterion_stats() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    for g in 0..500 {
        let (_, all) = random_triples(&mut rng, 40);
        let cut = rng.gen_range(0..=all.len());
        let (train, test) = all.split_at(cut);
        let got = compute_stats(train, test, &build_samples(train), &build_samples(test));
        let want = naive_stats(train, test);
        ensure(stats_match(&got, &want), || format!("graph {g}: {got:?} != {want:?}"))?;
    }
    let mut symbols = Symbols::new();
    let train = parse_triples("A\tr1\tB\nC\tr1\tB\nD\tr2\tE\n", &mut symbols).unwrap();
    let toy = compute_stats(&train, &[], &build_samples(&train), &build_samples(&[]));
    ensure(toy.n_disconnected == 1 && toy.n_nodes == 5 && toy.n_relations == 2, || format!("toy {toy:?}"))?;
    ensure((toy.avg_one_hop - 1.2).abs() < 1e-12, || format!("toy avg_one_hop {}", toy.avg_one_hop))?;
    Ok("500 random graphs equal naive recomputation; toy graph has 1 disconnected triple, avg one-hop 1.2".into())
}

// ---------------------------------------------------------------- 8: P@k

/// Top-k set by enumerating every k-subset and keeping the one whose members
/// all outrank every non-member.
fn enumerate_top_k(scores: &[f64], k: usize) -> BTreeSet<usize> {
    let n = scores.len();
    let beats = |i: usize, j: usize| scores[i] > scores[j] || (scores[i] == scores[j] && i < j);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let inside: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
        let outside: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 0).collect();
        if inside.iter().all(|&i| outside.iter().all(|&j| beats(i, j))) {
            return inside.into_iter().collect();
        }
    }
    unreachable!("a strict total order always has a top-k set")
}

fn criterion_precision() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut ties = 0;
    for v in 0..1000 {
        let n = rng.gen_range(1..=12);
        let grid = rng.gen_range(2..8);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..grid) as f64 / 4.0 - 0.5).collect();
        let distinct: HashSet<u64> = scores.iter().map(|s| s.to_bits()).collect();
        if distinct.len() < n {
            ties += 1;
        }
        let truth: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.4)).collect();
        for k in 1..=n {
            let top = enumerate_top_k(&scores, k);
            let got_set: BTreeSet<usize> = top_k_indices(&scores, k).into_iter().collect();
            ensure(got_set == top, || format!("vector {v}, k {k}: top-k set differs"))?;
            let want = top.iter().filter(|j| truth.contains(j)).count() as f64 / k as f64;
            let got = precision_at_k(&scores, &truth, k).map_err(|e| e.to_string())?;
            ensure(got == want, || format!("vector {v}, k {k}: {got} != {want}"))?;
            for transformed in [
                scores.iter().map(|s| s.exp()).collect::<Vec<_>>(),
                scores.iter().map(|s| 3.0 * s + 7.0).collect(),
            ] {
                let t = precision_at_k(&transformed, &truth, k).map_err(|e| e.to_string())?;
                ensure(t == got, || format!("vector {v}, k {k}: not invariant under a monotone map"))?;
            }
        }
        ensure(precision_at_k(&scores, &truth, n + 1).is_err(), || "k > n accepted".into())?;
    }
    Ok(format!("1000 vectors ({ties} with ties) match subset enumeration; exp/affine invariant"))
}

// ---------------------------------------------------------------- 9 & 11: synthetic runs

struct RunOutcome {
    log: StageLog,
    dir: tempfile::TempDir,
}

fn synthetic_run(extra: &[String]) -> Result<RunOutcome, String> {
    let config = common::synthetic_config(extra);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let summary = run_pipeline(&config, dir.path()).map_err(|e| e.to_string())?;
    Ok(RunOutcome { log: summary.log, dir })
}

fn last_epoch_of_stage(log: &StageLog, stage: usize) -> Option<(f64, f64)> {
    log.entries.iter().rev().find_map(|e| match e {
        LogEntry::Epoch {
            stage: s,
            holdout_recall: Some(r),
            holdout_p_at_1: Some(p),
            ..
        } if *s == stage => Some((*r, *p)),
        _ => None,
    })
}

fn criterion_end_to_end(staged: &RunOutcome, elapsed: Duration) -> Outcome {
    let config = common::synthetic_config(&[]);
    let total = config.epochs1 + config.epochs2 + config.epochs3;
    let start = Instant::now();
    let single = synthetic_run(&[
        format!("epochs1={total}"),
        "epochs2=0".into(),
        "epochs3=0".into(),
    ])?;
    let elapsed = elapsed + start.elapsed();
    let (recall1, _) = last_epoch_of_stage(&staged.log, 1).ok_or("no stage-1 holdout metrics")?;
    let (_, p1_staged) = staged.log.last_holdout().ok_or("no holdout metrics")?;
    let (_, p1_single) = single.log.last_holdout().ok_or("no holdout metrics")?;
    ensure(recall1 >= 0.85, || format!("stage-1 holdout recall {recall1:.3} < 0.85"))?;
    ensure(p1_staged > p1_single, || {
        format!("3-stage P@1 {p1_staged:.3} is not above stage-1-only P@1 {p1_single:.3}")
    })?;
    ensure(elapsed <= Duration::from_secs(300), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "stage-1 recall {recall1:.3}; holdout P@1 {p1_staged:.3} (3 stages) vs {p1_single:.3} (stage 1 only, {total} epochs); {:.1}s",
        elapsed.as_secs_f64()
    ))
}

fn criterion_determinism(first: &RunOutcome) -> Outcome {
    let second = synthetic_run(&[])?;
    let names = |dir: &std::path::Path| -> Result<BTreeSet<String>, String> {
        fs::read_dir(dir)
            .map_err(|e| e.to_string())?
            .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()).map_err(|e| e.to_string()))
            .collect()
    };
    let listed = names(first.dir.path())?;
    ensure(listed == names(second.dir.path())?, || "runs wrote different file sets".into())?;
    for name in &listed {
        let a = fs::read(first.dir.path().join(name)).map_err(|e| e.to_string())?;
        let b = fs::read(second.dir.path().join(name)).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{name} differs between runs"))?;
    }
    ensure(listed.contains("model.ckpt") && listed.contains("manifest.json"), || {
        format!("missing artifacts in {listed:?}")
    })?;
    Ok(format!("{} artifacts byte-identical across two runs", listed.len()))
}

// ----------------------------------------------------------------

fn report(results: &mut Vec<bool>, id: usize, name: &str, outcome: Outcome) {
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d.as_str()),
        Err(d) => ("FAIL", d.as_str()),
    };
    println!("{tag} [{id:>2}] {name}: {detail}");
    results.push(outcome.is_ok());
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let out = f()?;
    let took = start.elapsed();
    if took > limit {
        return Err(format!("{out} (took {took:?}, limit {limit:?})"));
    }
    Ok(out)
}

fn main() {
    let mut results = Vec::new();
    let second = Duration::from_secs(1);
    report(&mut results, 1, "loss correctness", timed(second, criterion_losses));
    report(&mut results, 2, "gradient correctness", timed(Duration::from_secs(30), criterion_gradients));
    report(&mut results, 3, "learning-rate schedule", timed(second, criterion_schedule));
    report(&mut results, 4, "assembly bit-exactness", criterion_golden_forms());
    report(&mut results, 5, "packing budget maximality", criterion_packing());
    report(&mut results, 6, "multi-label grouping", criterion_grouping());
    report(&mut results, 7, "dataset statistics", criterion_stats());
    report(&mut results, 8, "precision at k", criterion_precision());

    let start = Instant::now();
    let staged = synthetic_run(&[]);
    let elapsed = start.elapsed();
    match &staged {
        Ok(run) => {
            report(&mut results, 9, "end-to-end synthetic run", criterion_end_to_end(run, elapsed));
            report(&mut results, 10, "ablation toggles", criterion_ablations());
            report(&mut results, 11, "pipeline determinism", criterion_determinism(run));
        }
        Err(e) => {
            report(&mut results, 9, "end-to-end synthetic run", Err(e.clone()));
            report(&mut results, 10, "ablation toggles", criterion_ablations());
            report(&mut results, 11, "pipeline determinism", Err(e.clone()));
        }
    }

    let failed = results.iter().filter(|ok| !**ok).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
