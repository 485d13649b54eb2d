//! Synthetic bilingual classification tasks.
//!
//! Both languages share a space of concepts; concept `c` is written `s0042`
//! in the source language and `t0042` in the target language. Every class owns
//! a disjoint set of indicative concepts. A document of class `k` draws each
//! token from `k`'s indicative distribution with probability
//! `indicative_rate`, and from a Zipfian background distribution otherwise.
//! The two languages use the same generative process, so the label given a
//! document does not shift across languages, and the dictionary links each
//! covered source concept to its target counterpart.

use std::collections::HashMap;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus_io::{
    write_jsonl, BilingualDictionary, ClassLabelSpace, Document, LabeledCorpus, UnlabeledCorpus,
};
use crate::scalar::argmax;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthTaskSpec {
    pub n_classes: usize,
    pub source_vocab: usize,
    pub target_vocab: usize,
    /// Fraction of shared concepts with a dictionary entry.
    pub dictionary_coverage: f64,
    /// Probability that a dictionary entry also gets a spurious second
    /// translation to a random target word.
    pub extra_translation_rate: f64,
    pub indicative_per_class: usize,
    /// Zipf exponent inside each class's indicative list (0 = uniform).
    pub indicative_zipf: f64,
    /// Zipf exponent of the background distribution.
    pub background_zipf: f64,
    /// Probability that a token is drawn from the class-indicative list.
    pub indicative_rate: f64,
    /// Inclusive document length range.
    pub doc_len: (usize, usize),
    pub n_source: usize,
    pub n_target_unlabeled: usize,
    pub n_target_test: usize,
    pub seed: u64,
}

impl Default for SynthTaskSpec {
    fn default() -> Self {
        Self {
            n_classes: 3,
            source_vocab: 2000,
            target_vocab: 2000,
            dictionary_coverage: 0.9,
            extra_translation_rate: 0.05,
            indicative_per_class: 60,
            indicative_zipf: 0.5,
            background_zipf: 1.0,
            indicative_rate: 0.15,
            doc_len: (20, 40),
            n_source: 2000,
            n_target_unlabeled: 5000,
            n_target_test: 1000,
            seed: 42,
        }
    }
}

impl SynthTaskSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_classes < 2 {
            return bad("need at least 2 classes".into());
        }
        if !(0.0..=1.0).contains(&self.dictionary_coverage) {
            return bad(format!("coverage {} outside [0, 1]", self.dictionary_coverage));
        }
        if !(0.0..=1.0).contains(&self.extra_translation_rate) {
            return bad("extra_translation_rate outside [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.indicative_rate) {
            return bad("indicative_rate outside [0, 1]".into());
        }
        if self.indicative_per_class == 0
            || self.n_classes * self.indicative_per_class > self.shared_concepts()
        {
            return bad("indicative concepts do not fit in the shared vocabulary".into());
        }
        if self.doc_len.0 > self.doc_len.1 {
            return bad("doc_len range is inverted".into());
        }
        Ok(())
    }

    fn shared_concepts(&self) -> usize {
        self.source_vocab.min(self.target_vocab)
    }
}

pub fn source_token(concept: usize) -> String {
    format!("s{concept:04}")
}

pub fn target_token(concept: usize) -> String {
    format!("t{concept:04}")
}

/// Token distributions of one language.
#[derive(Debug, Clone)]
struct Language {
    tokens: Vec<String>,
    background: Vec<f64>,
}

/// The Bayes classifier of the generating distribution on target documents.
#[derive(Debug, Clone)]
pub struct SynthOracle {
    index: HashMap<String, usize>,
    /// Per class, log p(token | class) for every target token.
    log_probs: Vec<Vec<f64>>,
}

impl SynthOracle {
    pub fn predict(&self, doc: &Document) -> usize {
        let scores: Vec<f64> = self
            .log_probs
            .iter()
            .map(|lp| {
                doc.tokens
                    .iter()
                    .filter_map(|t| self.index.get(t))
                    .map(|&i| lp[i])
                    .sum()
            })
            .collect();
        argmax(&scores)
    }

    pub fn accuracy(&self, test: &LabeledCorpus) -> f64 {
        let hits = test
            .docs
            .iter()
            .filter(|d| Some(self.predict(d)) == d.label)
            .count();
        hits as f64 / test.len().max(1) as f64
    }
}

#[derive(Debug, Clone)]
pub struct SynthTask {
    pub space: ClassLabelSpace,
    pub source: LabeledCorpus,
    pub target_unlabeled: UnlabeledCorpus,
    pub target_test: LabeledCorpus,
    pub dictionary: BilingualDictionary,
    pub oracle: SynthOracle,
    /// Indicative concepts of every class, most probable first.
    pub indicative: Vec<Vec<usize>>,
}

fn zipf_weights(n: usize, exponent: f64) -> Vec<f64> {
    (0..n).map(|r| 1.0 / ((r + 1) as f64).powf(exponent)).collect()
}

fn normalized(mut w: Vec<f64>) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}

/// Generates the corpora, dictionary and oracle for `spec`. Deterministic
/// given `spec.seed`.
pub fn generate_synth_task(spec: &SynthTaskSpec) -> Result<SynthTask> {
    spec.validate()?;
    let k = spec.n_classes;
    let shared = spec.shared_concepts();
    let stream = |i: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i);
        rng
    };

    let mut structure = stream(0);
    let mut concepts: Vec<usize> = (0..shared).collect();
    concepts.shuffle(&mut structure);
    let indicative: Vec<Vec<usize>> = (0..k)
        .map(|c| concepts[c * spec.indicative_per_class..(c + 1) * spec.indicative_per_class].to_vec())
        .collect();
    let indicative_weights = normalized(zipf_weights(spec.indicative_per_class, spec.indicative_zipf));

    // Background ranks: shared concepts keep the same rank in both languages,
    // language-only tokens are appended after them.
    let mut rank_order: Vec<usize> = (0..shared).collect();
    rank_order.shuffle(&mut structure);
    let language = |size: usize, name: fn(usize) -> String| {
        let zipf = zipf_weights(size, spec.background_zipf);
        let mut background = vec![0.0; size];
        for (rank, &c) in rank_order.iter().chain(&(shared..size).collect::<Vec<_>>()).enumerate() {
            background[c] = zipf[rank];
        }
        Language {
            tokens: (0..size).map(name).collect(),
            background: normalized(background),
        }
    };
    let source_lang = language(spec.source_vocab, source_token);
    let target_lang = language(spec.target_vocab, target_token);

    let mut dictionary = BilingualDictionary::new();
    let mut dict_rng = stream(1);
    for c in 0..shared {
        if dict_rng.gen_bool(spec.dictionary_coverage) {
            dictionary.insert(source_token(c), target_token(c));
            if dict_rng.gen_bool(spec.extra_translation_rate) {
                let other = dict_rng.gen_range(0..spec.target_vocab);
                dictionary.insert(source_token(c), target_token(other));
            }
        }
    }

    let space = ClassLabelSpace::new((0..k).map(|i| format!("class{i}")))?;
    let generate = |lang: &Language, n: usize, prefix: &str, rng: &mut ChaCha8Rng| -> Result<Vec<Document>> {
        let bg = WeightedIndex::new(&lang.background)
            .map_err(|e| Error::InvalidArgument(format!("background distribution: {e}")))?;
        let ind = WeightedIndex::new(&indicative_weights)
            .map_err(|e| Error::InvalidArgument(format!("indicative distribution: {e}")))?;
        Ok((0..n)
            .map(|i| {
                let label = rng.gen_range(0..k);
                let len = rng.gen_range(spec.doc_len.0..=spec.doc_len.1);
                let tokens = (0..len)
                    .map(|_| {
                        let t = if rng.gen_bool(spec.indicative_rate) {
                            indicative[label][ind.sample(rng)]
                        } else {
                            bg.sample(rng)
                        };
                        lang.tokens[t].clone()
                    })
                    .collect();
                Document::new(format!("{prefix}{i}"), tokens, Some(label))
            })
            .collect())
    };
    let source = LabeledCorpus::new(space.clone(), generate(&source_lang, spec.n_source, "src-", &mut stream(2))?)?;
    let unlabeled = generate(&target_lang, spec.n_target_unlabeled, "tgt-", &mut stream(3))?;
    let target_unlabeled = UnlabeledCorpus::new(
        unlabeled
            .into_iter()
            .map(|d| Document::new(d.id, d.tokens, None))
            .collect(),
    );
    let target_test = LabeledCorpus::new(
        space.clone(),
        generate(&target_lang, spec.n_target_test, "test-", &mut stream(4))?,
    )?;

    let log_probs = (0..k)
        .map(|class| {
            let mut p: Vec<f64> = target_lang
                .background
                .iter()
                .map(|b| (1.0 - spec.indicative_rate) * b)
                .collect();
            for (r, &c) in indicative[class].iter().enumerate() {
                p[c] += spec.indicative_rate * indicative_weights[r];
            }
            p.into_iter().map(f64::ln).collect()
        })
        .collect();
    let oracle = SynthOracle {
        index: target_lang
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect(),
        log_probs,
    };

    Ok(SynthTask {
        space,
        source,
        target_unlabeled,
        target_test,
        dictionary,
        oracle,
        indicative,
    })
}

/// File names written by [`SynthTask::write`].
pub mod files {
    pub const SOURCE: &str = "source.jsonl";
    pub const TARGET_UNLABELED: &str = "target_unlabeled.jsonl";
    pub const TARGET_TEST: &str = "target_test.jsonl";
    pub const DICTIONARY: &str = "dictionary.txt";
}

impl SynthTask {
    /// Writes the three corpora as JSONL and the dictionary in MUSE format.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_jsonl(&dir.join(files::SOURCE), &self.source.docs, Some(&self.space))?;
        write_jsonl(&dir.join(files::TARGET_UNLABELED), &self.target_unlabeled.docs, None)?;
        write_jsonl(&dir.join(files::TARGET_TEST), &self.target_test.docs, Some(&self.space))?;
        std::fs::write(dir.join(files::DICTIONARY), self.dictionary.to_muse_string())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthTaskSpec {
        SynthTaskSpec {
            source_vocab: 400,
            target_vocab: 500,
            indicative_per_class: 20,
            n_source: 200,
            n_target_unlabeled: 300,
            n_target_test: 100,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = generate_synth_task(&small()).unwrap();
        let b = generate_synth_task(&small()).unwrap();
        assert_eq!(a.source, b.source);
        assert_eq!(a.target_unlabeled, b.target_unlabeled);
        assert_eq!(a.dictionary, b.dictionary);
        let c = generate_synth_task(&SynthTaskSpec { seed: 1, ..small() }).unwrap();
        assert_ne!(a.source, c.source);
    }

    #[test]
    fn full_coverage_translates_every_indicative_word() {
        let t = generate_synth_task(&SynthTaskSpec {
            dictionary_coverage: 1.0,
            ..small()
        })
        .unwrap();
        for c in t.indicative.iter().flatten() {
            let tr = t.dictionary.lookup(&source_token(*c)).unwrap();
            assert!(tr.contains(&target_token(*c)));
        }
    }

    #[test]
    fn zero_coverage_means_empty_dictionary() {
        let t = generate_synth_task(&SynthTaskSpec {
            dictionary_coverage: 0.0,
            ..small()
        })
        .unwrap();
        assert!(t.dictionary.is_empty());
    }

    #[test]
    fn sizes_and_vocabularies() {
        let t = generate_synth_task(&small()).unwrap();
        assert_eq!(t.source.len(), 200);
        assert_eq!(t.target_unlabeled.len(), 300);
        assert_eq!(t.target_test.len(), 100);
        assert!(t.source.docs.iter().flat_map(|d| &d.tokens).all(|w| w.starts_with('s')));
        assert!(t.target_test.docs.iter().flat_map(|d| &d.tokens).all(|w| w.starts_with('t')));
        assert!(t.target_unlabeled.docs.iter().all(|d| d.label.is_none()));
        assert!(t.source.docs.iter().all(|d| (20..=40).contains(&d.tokens.len())));
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(generate_synth_task(&SynthTaskSpec { n_classes: 1, ..small() }).is_err());
        assert!(generate_synth_task(&SynthTaskSpec { dictionary_coverage: 2.0, ..small() }).is_err());
        assert!(generate_synth_task(&SynthTaskSpec { indicative_per_class: 1000, ..small() }).is_err());
    }
}
