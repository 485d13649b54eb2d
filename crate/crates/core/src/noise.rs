//! Translation-noise models for robustness studies.
//!
//! `unif` and `freq` replace translated seed words before the teacher is
//! built; `adv` swaps class weights inside the teacher matrix. Every seed is
//! corrupted independently with probability `rate`, using its own RNG stream
//! derived from the noise seed, so results do not depend on iteration order.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus_io::UnlabeledCorpus;
use crate::scalar::{argmax, Scalar};
use crate::seed_transfer::{TeacherMatrix, TranslatedSeedSet};
use crate::vectorizer::Vocabulary;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    /// Replace a seed with a word drawn uniformly from the target vocabulary.
    Unif,
    /// Replace a seed with a word drawn proportionally to its corpus frequency.
    Freq,
    /// Swap a seed's top class weight with that of another random class.
    Adv,
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseKind::Unif => "unif",
            NoiseKind::Freq => "freq",
            NoiseKind::Adv => "adv",
        })
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unif" => Ok(Self::Unif),
            "freq" => Ok(Self::Freq),
            "adv" => Ok(Self::Adv),
            other => Err(Error::InvalidArgument(format!("unknown noise kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub rate: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, rate: f64, seed: u64) -> Result<Self> {
        let spec = Self { kind, rate, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(Error::InvalidArgument(format!(
                "noise rate {} outside [0, 1]",
                self.rate
            )));
        }
        Ok(())
    }

    fn stream(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }

    fn expect_kind(&self, kind: NoiseKind) -> Result<()> {
        self.validate()?;
        if self.kind != kind {
            return Err(Error::InvalidArgument(format!(
                "expected {kind} noise, got {}",
                self.kind
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Perturbed<T> {
    pub set: TranslatedSeedSet<T>,
    /// Target terms that were replaced by a different word.
    pub replaced: usize,
    pub total: usize,
}

fn replace_targets<T: Scalar>(
    tset: &TranslatedSeedSet<T>,
    spec: &NoiseSpec,
    mut draw: impl FnMut(&mut ChaCha8Rng, &str) -> Option<String>,
) -> Perturbed<T> {
    let mut out = tset.clone();
    let (mut replaced, mut total) = (0, 0);
    for (e_idx, entry) in out.entries.iter_mut().enumerate() {
        let mut rng = spec.stream(e_idx as u64);
        let mut targets = Vec::with_capacity(entry.targets.len());
        for t in &entry.targets {
            total += 1;
            let hit = rng.gen_bool(spec.rate);
            match hit.then(|| draw(&mut rng, t)).flatten() {
                Some(new) => {
                    replaced += 1;
                    targets.push(new);
                }
                None => targets.push(t.clone()),
            }
        }
        targets.sort();
        targets.dedup();
        entry.targets = targets;
    }
    Perturbed {
        set: out,
        replaced,
        total,
    }
}

/// Uniform replacement over the target vocabulary, never drawing the word
/// being replaced.
pub fn perturb_unif<T: Scalar>(
    tset: &TranslatedSeedSet<T>,
    target_vocab: &Vocabulary,
    spec: &NoiseSpec,
) -> Result<Perturbed<T>> {
    spec.expect_kind(NoiseKind::Unif)?;
    let n = target_vocab.len();
    Ok(replace_targets(tset, spec, |rng, original| {
        match target_vocab.get(original) {
            Some(_) if n < 2 => None,
            Some(orig) => {
                let mut i = rng.gen_range(0..n - 1);
                if i >= orig {
                    i += 1;
                }
                Some(target_vocab.term(i).to_string())
            }
            None if n == 0 => None,
            None => Some(target_vocab.term(rng.gen_range(0..n)).to_string()),
        }
    }))
}

/// Token counts of every vocabulary term in `corpus`.
pub fn term_frequencies(target_vocab: &Vocabulary, corpus: &UnlabeledCorpus) -> Vec<usize> {
    let mut counts = vec![0usize; target_vocab.len()];
    for doc in &corpus.docs {
        for tok in &doc.tokens {
            if let Some(c) = target_vocab.get(tok) {
                counts[c] += 1;
            }
        }
    }
    counts
}

/// Replacement drawn with probability proportional to corpus frequency.
/// Words that never occur are never drawn; neither is the word being
/// replaced.
pub fn perturb_freq<T: Scalar>(
    tset: &TranslatedSeedSet<T>,
    target_vocab: &Vocabulary,
    corpus: &UnlabeledCorpus,
    spec: &NoiseSpec,
) -> Result<Perturbed<T>> {
    spec.expect_kind(NoiseKind::Freq)?;
    let counts = term_frequencies(target_vocab, corpus);
    let total_mass: usize = counts.iter().sum();
    let sampler = WeightedIndex::new(&counts).ok();
    // Per-original samplers with the original's mass removed, built lazily.
    let mut excluding: HashMap<usize, Option<WeightedIndex<usize>>> = HashMap::new();
    Ok(replace_targets(tset, spec, |rng, original| {
        let sampler = sampler.as_ref()?;
        match target_vocab.get(original) {
            Some(orig) if counts[orig] > 0 => {
                let dist = excluding.entry(orig).or_insert_with(|| {
                    if counts[orig] == total_mass {
                        return None;
                    }
                    let mut w = counts.clone();
                    w[orig] = 0;
                    WeightedIndex::new(w).ok()
                });
                let i = dist.as_ref()?.sample(rng);
                Some(target_vocab.term(i).to_string())
            }
            _ => Some(target_vocab.term(sampler.sample(rng)).to_string()),
        }
    }))
}

/// For each seed column, with probability `rate`, swaps its largest entry
/// with the entry of a uniformly chosen other class.
pub fn perturb_adv<T: Scalar>(z: &TeacherMatrix<T>, spec: &NoiseSpec) -> Result<TeacherMatrix<T>> {
    spec.expect_kind(NoiseKind::Adv)?;
    let k = z.n_classes();
    if k < 2 {
        return Err(Error::InvalidArgument(
            "adversarial noise needs at least two classes".into(),
        ));
    }
    let mut out = z.clone();
    for (c, col) in z.columns() {
        let mut rng = spec.stream(c as u64);
        if !rng.gen_bool(spec.rate) {
            continue;
        }
        let top = argmax(col);
        let mut other = rng.gen_range(0..k - 1);
        if other >= top {
            other += 1;
        }
        let mut swapped = col.to_vec();
        swapped.swap(top, other);
        out.set_column(c, swapped);
    }
    Ok(out)
}
