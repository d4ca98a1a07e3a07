//! End-to-end run: stats, samples, assembly, training and evaluation.
//!
//! Every artifact is written under one output directory together with a
//! `manifest.json` that records the config fingerprint and a SHA-256 per file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::assemble::similarity::{ConstantSimilarity, NgramCosine, PrecomputedVectors, SimilarityProvider};
use crate::assemble::{assembled_to_jsonl, AssembledInput, Assembler};
use crate::config::{ProviderKind, RunConfig};
use crate::error::{Error, Result};
use crate::graph::{compute_stats, load_triples, GraphStats, KnowledgeGraph, Split, Symbols, Triple};
use crate::metrics::{self, EvalReport};
use crate::samples::{build_samples, samples_to_jsonl, EntityIndex, SampleSet};
use crate::text::{load_descriptions, DescriptionStore, WhitespaceTokenizer};
use crate::train::{self, checkpoint, StageLog, TrainData};

/// Version of the on-disk artifact layout written by `run_pipeline`.
pub const ARTIFACT_VERSION: u32 = 1;

/// Both splits interned into one symbol table, plus the derived structures.
pub struct Dataset {
    pub symbols: Symbols,
    pub train: Vec<Triple>,
    pub test: Vec<Triple>,
    /// Built from the training split only.
    pub graph: KnowledgeGraph,
    pub train_samples: SampleSet,
    pub test_samples: SampleSet,
    pub index: EntityIndex,
    pub store: DescriptionStore,
}

impl Dataset {
    pub fn load(config: &RunConfig) -> Result<Self> {
        let train_path = config
            .train
            .as_deref()
            .ok_or_else(|| Error::Config("`train` path is required".into()))?;
        let mut symbols = Symbols::new();
        let train = load_triples(train_path, Split::Train, &mut symbols)?;
        let test = match config.test.as_deref() {
            Some(p) => load_triples(p, Split::Test, &mut symbols)?,
            None => Vec::new(),
        };
        let graph = KnowledgeGraph::new(symbols.entities.len(), train.clone());
        let store = match config.descriptions.as_deref() {
            Some(p) => load_descriptions(p, &mut symbols)?,
            None => {
                log::warn!("no descriptions configured; using an empty description store");
                DescriptionStore::new()
            }
        }
        .with_lazy_shortening(config.shorten_descriptions);
        Ok(Self {
            train_samples: build_samples(&train),
            test_samples: build_samples(&test),
            index: EntityIndex::from_triples(&train),
            symbols,
            train,
            test,
            graph,
            store,
        })
    }

    pub fn stats(&self) -> GraphStats {
        compute_stats(&self.train, &self.test, &self.train_samples, &self.test_samples)
    }

    pub fn tokenizer(&self) -> WhitespaceTokenizer {
        WhitespaceTokenizer::for_symbols(&self.symbols)
    }

    pub fn label_names(&self) -> Vec<String> {
        self.index
            .entities()
            .iter()
            .map(|&e| self.symbols.entity_name(e).to_owned())
            .collect()
    }

    pub fn label_names_of(&self, input: &AssembledInput) -> Vec<String> {
        input
            .labels
            .iter()
            .map(|&e| self.symbols.entity_name(e).to_owned())
            .collect()
    }
}

pub fn make_provider(config: &RunConfig) -> Result<Box<dyn SimilarityProvider>> {
    Ok(match config.provider {
        ProviderKind::Ngram => Box::new(NgramCosine),
        ProviderKind::Constant => Box::new(ConstantSimilarity(0.0)),
        ProviderKind::Vectors => {
            let path = config
                .vectors
                .as_deref()
                .ok_or_else(|| Error::Config("provider = \"vectors\" needs a vectors path".into()))?;
            Box::new(PrecomputedVectors::load(path)?)
        }
    })
}

/// Assemble the training and test sample sets.
pub fn assemble_splits(
    data: &Dataset,
    config: &RunConfig,
) -> Result<(Vec<AssembledInput>, Vec<AssembledInput>)> {
    let tokenizer = data.tokenizer();
    let provider = make_provider(config)?;
    let assembler = Assembler {
        symbols: &data.symbols,
        graph: &data.graph,
        store: &data.store,
        tokenizer: &tokenizer,
        provider: provider.as_ref(),
        config: config.assembler(),
    };
    let train = assembler.assemble_all(&data.train_samples, config.workers)?;
    let test = assembler.assemble_all(&data.test_samples, config.workers)?;
    if data.store.misses() > 0 {
        log::warn!("{} description lookups fell back to the empty string", data.store.misses());
    }
    Ok((train, test))
}

pub fn train_data(data: &Dataset, inputs: &[AssembledInput]) -> Result<TrainData> {
    let names: Vec<Vec<String>> = inputs.iter().map(|i| data.label_names_of(i)).collect();
    TrainData::from_texts(
        inputs.iter().zip(&names).map(|(i, n)| (i.text.as_str(), n.as_slice())),
        data.label_names(),
        &data.tokenizer(),
    )
}

#[derive(Clone, Debug)]
pub struct PipelineSummary {
    pub fingerprint: String,
    pub stats: GraphStats,
    pub log: StageLog,
    pub report: EvalReport,
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    artifact_version: u32,
    checkpoint_version: u32,
    fingerprint: &'a str,
    artifacts: &'a BTreeMap<String, String>,
}

struct Writer<'a> {
    dir: &'a Path,
    digests: BTreeMap<String, String>,
}

impl Writer<'_> {
    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.digests
            .insert(name.to_owned(), hex::encode(Sha256::digest(bytes)));
        Ok(path)
    }
}

/// Run every stage and write its artifacts into `out_dir`. Errors carry
/// the name of the stage that failed.
pub fn run_pipeline(config: &RunConfig, out_dir: &Path) -> Result<PipelineSummary> {
    config.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let fingerprint = config.fingerprint();
    let mut w = Writer {
        dir: out_dir,
        digests: BTreeMap::new(),
    };
    w.put("config.resolved.json", config.to_json().as_bytes())?;

    let stage = Error::at_stage;
    let data = Dataset::load(config).map_err(stage("stats"))?;
    let stats = data.stats();
    w.put("stats.txt", stats.to_report().as_bytes())?;
    w.put("stats.json", serde_json::to_string_pretty(&stats)?.as_bytes())?;

    w.put("samples.train.jsonl", samples_to_jsonl(&data.train_samples, &data.symbols).as_bytes())?;
    w.put("samples.test.jsonl", samples_to_jsonl(&data.test_samples, &data.symbols).as_bytes())?;
    w.put("index.txt", data.index.to_text(&data.symbols).as_bytes())?;

    let (train_inputs, test_inputs) = assemble_splits(&data, config).map_err(stage("assemble"))?;
    w.put("assembled.train.jsonl", assembled_to_jsonl(&train_inputs, &data.symbols).as_bytes())?;
    w.put("assembled.test.jsonl", assembled_to_jsonl(&test_inputs, &data.symbols).as_bytes())?;

    let (model, log) = train_data(&data, &train_inputs)
        .and_then(|d| train::train(&d, &config.trainer()))
        .map(|(mut m, l)| {
            m.fingerprint = fingerprint.clone();
            (m, l)
        })
        .map_err(stage("train"))?;
    w.put("model.ckpt", &checkpoint::to_bytes(&model))?;
    w.put("stagelog.jsonl", log.to_jsonl().as_bytes())?;

    let report = {
        let names: Vec<Vec<String>> = test_inputs.iter().map(|i| data.label_names_of(i)).collect();
        let (samples, dropped) = model.encode_rows(
            test_inputs.iter().zip(&names).map(|(i, n)| (i.text.as_str(), n.as_slice())),
        );
        if dropped > 0 {
            log::warn!("{dropped} test labels are not in the training index and were dropped");
        }
        metrics::evaluate(&model, &samples, &config.eval_ks, config.threshold, &fingerprint)
    }
    .map_err(stage("eval"))?;
    w.put("eval.json", serde_json::to_string_pretty(&report)?.as_bytes())?;
    w.put("eval.txt", report.to_table().as_bytes())?;

    let manifest = Manifest {
        artifact_version: ARTIFACT_VERSION,
        checkpoint_version: checkpoint::FORMAT_VERSION,
        fingerprint: &fingerprint,
        artifacts: &w.digests,
    };
    let path = out_dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;

    Ok(PipelineSummary {
        fingerprint,
        stats,
        log,
        report,
        artifacts: w.digests,
    })
}
