//! End-to-end runs: source model, seed transfer, teacher, co-training and
//! evaluation, driven by a single JSON configuration.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus_io::{
    load_dictionary, load_labeled, load_unlabeled, save_model, BilingualDictionary,
    ClassLabelSpace, CorpusFormat, LabeledCorpus, Tokenizer, TokenizerConfig, UnlabeledCorpus,
};
use crate::cotrain::{cotrain, seed_feature_columns, CoTrainConfig, CoTrainReport};
use crate::evaluation::{evaluate_student, evaluate_teacher, Metrics};
use crate::noise::{perturb_adv, perturb_freq, perturb_unif, NoiseKind, NoiseSpec};
use crate::scalar::Scalar;
use crate::seed_transfer::{
    build_teacher_matrix, extract_seeds, translate_seeds, SeedSet, TransferStats,
    TranslatedSeedSet,
};
use crate::sparse_logreg::{
    admits, regularization_path_until, seeds_per_class, select_lambda, LambdaGrid,
    LambdaSelection, SolverOptions,
};
use crate::student::{LogRegTrainer, StudentInputs, StudentModel, StudentOptions};
use crate::synth::SynthTask;
use crate::teacher::{Teacher, TeacherInput};
use crate::vectorizer::{fit_vocabulary, transform_tfidf, DocTermMatrix, Vocabulary};
use crate::{Error, Result};

/// Input files. Relative paths are resolved against the directory of the
/// configuration file they were read from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusPaths {
    pub source: PathBuf,
    pub target_unlabeled: PathBuf,
    pub target_test: PathBuf,
    pub dictionary: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSettings {
    pub kind: NoiseKind,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: CorpusPaths,
    /// Corpus format; guessed from each file's extension when absent.
    pub format: Option<CorpusFormat>,
    pub classes: Vec<String>,
    /// Number of source words that may be translated.
    pub budget: usize,
    pub grid: LambdaGrid,
    pub solver: SolverOptions,
    pub source_min_df: usize,
    /// Minimum document frequency of student features.
    pub target_min_df: usize,
    pub student_ngrams: (usize, usize),
    pub rounds: usize,
    pub early_stop: bool,
    pub student: StudentOptions,
    pub teacher_input: TeacherInput,
    pub tokenizer: TokenizerConfig,
    /// Seed of a single run: balancing samples and noise draws.
    pub seed: u64,
    /// Seeds of a multi-seed run.
    pub seeds: Vec<u64>,
    /// Ablation: re-estimate seed weights from student labels instead of
    /// relabeling every document.
    pub teacher_update: bool,
    /// Ablation: zero every student feature containing a seed word.
    pub strip_seeds: bool,
    pub noise: Option<NoiseSettings>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            paths: CorpusPaths::default(),
            format: None,
            classes: Vec::new(),
            budget: 30,
            grid: LambdaGrid::default(),
            solver: SolverOptions::default(),
            source_min_df: 1,
            target_min_df: 2,
            student_ngrams: (1, 2),
            rounds: 2,
            early_stop: false,
            student: StudentOptions::default(),
            teacher_input: TeacherInput::default(),
            tokenizer: TokenizerConfig::default(),
            seed: 42,
            seeds: crate::evaluation::DEFAULT_SEEDS.to_vec(),
            teacher_update: false,
            strip_seeds: false,
            noise: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.rounds < 1 {
            return bad("rounds must be at least 1".into());
        }
        if !self.classes.is_empty() && self.budget < self.classes.len() {
            return Err(Error::BudgetTooSmall {
                budget: self.budget,
                classes: self.classes.len(),
            });
        }
        if self.source_min_df < 1 || self.target_min_df < 1 {
            return bad("min_df must be at least 1".into());
        }
        let (lo, hi) = self.student_ngrams;
        if lo < 1 || lo > hi {
            return bad(format!("invalid student n-gram range ({lo}, {hi})"));
        }
        if self.student.lambda_l2.is_nan() || self.student.lambda_l2 < 0.0 {
            return Err(Error::NegativeLambda(self.student.lambda_l2));
        }
        if let Some(n) = &self.noise {
            NoiseSpec::new(n.kind, n.rate, self.seed)?;
        }
        Ok(())
    }

    /// Reads a JSON configuration; relative input paths become relative to
    /// the file's directory.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut config: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut config.paths.source,
            &mut config.paths.target_unlabeled,
            &mut config.paths.target_test,
            &mut config.paths.dictionary,
        ] {
            if !p.as_os_str().is_empty() && p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        sha256_json(self)
    }

    pub fn cotrain_config(&self) -> CoTrainConfig {
        CoTrainConfig {
            rounds: self.rounds,
            early_stop: self.early_stop,
            seed: self.seed,
            teacher_update: self.teacher_update,
        }
    }

    pub fn format_for(&self, path: &Path) -> CorpusFormat {
        self.format.unwrap_or_else(|| CorpusFormat::from_path(path))
    }
}

fn sha256_json<S: Serialize>(value: &S) -> String {
    let bytes = serde_json::to_vec(value).expect("plain data serializes");
    hex::encode(Sha256::digest(bytes))
}

/// Everything a run reads.
#[derive(Debug, Clone)]
pub struct PipelineInputs {
    pub space: ClassLabelSpace,
    pub source: LabeledCorpus,
    pub target_unlabeled: UnlabeledCorpus,
    pub target_test: LabeledCorpus,
    pub dictionary: BilingualDictionary,
}

impl PipelineInputs {
    pub fn load(config: &PipelineConfig) -> Result<Self> {
        let space = ClassLabelSpace::new(config.classes.iter().cloned())?;
        let tok = Tokenizer::new(config.tokenizer.clone())?;
        let p = &config.paths;
        Ok(Self {
            source: load_labeled(&p.source, config.format_for(&p.source), &tok, &space)?,
            target_unlabeled: load_unlabeled(
                &p.target_unlabeled,
                config.format_for(&p.target_unlabeled),
                &tok,
            )?,
            target_test: load_labeled(&p.target_test, config.format_for(&p.target_test), &tok, &space)?,
            dictionary: load_dictionary(&p.dictionary, &tok)?,
            space,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.space.len()
    }
}

impl From<SynthTask> for PipelineInputs {
    fn from(t: SynthTask) -> Self {
        Self {
            space: t.space,
            source: t.source,
            target_unlabeled: t.target_unlabeled,
            target_test: t.target_test,
            dictionary: t.dictionary,
        }
    }
}

/// The source-side model: vocabulary, selected sparse classifier and seeds.
#[derive(Debug, Clone)]
pub struct SourceModel<T> {
    pub vocab: Vocabulary,
    pub selection: LambdaSelection<T>,
    /// Grid points fitted before the selected one was found.
    pub path_len: usize,
    pub seeds: SeedSet<T>,
}

/// Fits the regularization path from the largest lambda down, stopping at
/// the first point that admits enough seeds per class, and extracts seeds.
pub fn fit_source<T: Scalar>(source: &LabeledCorpus, config: &PipelineConfig) -> Result<SourceModel<T>> {
    let k = source.space.len();
    let per_class = seeds_per_class(config.budget, k)?;
    let vocab = fit_vocabulary(source.docs.iter(), (1, 1), config.source_min_df)?;
    let x: DocTermMatrix<T> = transform_tfidf(&source.docs, &vocab);
    let path = regularization_path_until(
        &x,
        &source.labels(),
        k,
        &config.grid.values(),
        &config.solver,
        |p| admits(p, per_class),
    )?;
    let selection = select_lambda(&path, config.budget)?;
    log::info!(
        "selected lambda {:.4e} after {} path points{}",
        selection.lambda,
        path.points.len(),
        if selection.fallback { " (fallback)" } else { "" }
    );
    let seeds = extract_seeds(&selection.weights, &vocab, config.budget, k)?;
    Ok(SourceModel {
        vocab,
        path_len: path.points.len(),
        selection,
        seeds,
    })
}

/// Target-side features that do not depend on seeds or run seed.
#[derive(Debug, Clone)]
pub struct TargetFeatures<T> {
    pub teacher_vocab: Vocabulary,
    pub student_vocab: Vocabulary,
    pub student_features: DocTermMatrix<T>,
}

pub fn prepare_target<T: Scalar>(
    unlabeled: &UnlabeledCorpus,
    config: &PipelineConfig,
) -> Result<TargetFeatures<T>> {
    let teacher_vocab = fit_vocabulary(unlabeled.docs.iter(), (1, 1), 1)?;
    let student_vocab = fit_vocabulary(unlabeled.docs.iter(), config.student_ngrams, config.target_min_df)?;
    let student_features = transform_tfidf(&unlabeled.docs, &student_vocab);
    Ok(TargetFeatures {
        teacher_vocab,
        student_vocab,
        student_features,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub kind: NoiseKind,
    pub rate: f64,
    /// Translations (unif, freq) or teacher columns (adv) that changed.
    pub replaced: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config_digest: String,
    pub seed: u64,
    pub budget: usize,
    pub lambda: f64,
    pub lambda_fallback: bool,
    pub path_points: usize,
    /// Seed words per class, best first.
    pub seeds: BTreeMap<String, Vec<String>>,
    pub seed_warnings: Vec<String>,
    pub translation_pairs: usize,
    pub transferred: usize,
    pub dropped: usize,
    pub teacher_columns: usize,
    pub noise: Option<NoiseReport>,
    pub coverage: f64,
    pub stripped_features: usize,
    pub cotrain: CoTrainReport,
    pub teacher: Metrics,
    pub student: Metrics,
}

impl Report {
    /// Hex SHA-256 of the report's JSON encoding.
    pub fn digest(&self) -> String {
        sha256_json(self)
    }
}

/// File names inside a run's artifacts directory.
pub mod files {
    pub const CONFIG: &str = "config.json";
    pub const SOURCE_VOCAB: &str = "source_vocab.json";
    pub const SOURCE_WEIGHTS: &str = "source_weights.json";
    pub const SELECTION: &str = "selection.json";
    pub const SEEDS: &str = "seeds.json";
    pub const SEEDS_TSV: &str = "seeds.tsv";
    pub const TRANSLATIONS_TSV: &str = "translations.tsv";
    pub const TEACHER_MATRIX: &str = "teacher_matrix.json";
    pub const TARGET_VOCAB: &str = "target_vocab.json";
    pub const STUDENT: &str = "student.json";
    pub const PSEUDO_LABELS: &str = "pseudo_labels.jsonl";
    pub const COTRAIN_REPORT: &str = "cotrain_report.json";
    pub const METRICS: &str = "metrics.json";
    pub const REPORT: &str = "report.json";
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct PipelineOutputs<T> {
    pub report: Report,
    pub source: SourceModel<T>,
    pub translated: TranslatedSeedSet<T>,
    pub teacher: Teacher<T>,
    pub student: StudentModel<T>,
}

impl<T: Scalar> PipelineOutputs<T> {
    /// Writes the models, seed lists and report into `dir`.
    pub fn write_artifacts(&self, dir: &Path, space: &ClassLabelSpace) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        save_model(&self.source.vocab, &dir.join(files::SOURCE_VOCAB))?;
        save_model(&self.source.selection.weights, &dir.join(files::SOURCE_WEIGHTS))?;
        save_model(&self.source.seeds, &dir.join(files::SEEDS))?;
        self.source.seeds.write_tsv(&dir.join(files::SEEDS_TSV), space.names())?;
        self.translated.write_tsv(&dir.join(files::TRANSLATIONS_TSV))?;
        save_model(&self.teacher.matrix, &dir.join(files::TEACHER_MATRIX))?;
        save_model(&self.teacher.vocab, &dir.join(files::TARGET_VOCAB))?;
        save_model(&self.student, &dir.join(files::STUDENT))?;
        std::fs::write(
            dir.join(files::REPORT),
            serde_json::to_string_pretty(&self.report)?,
        )?;
        Ok(())
    }
}

/// Translates the seeds and applies dictionary noise (unif, freq) if
/// configured.
pub fn translate_stage<T: Scalar>(
    seeds: &SeedSet<T>,
    dictionary: &BilingualDictionary,
    target_vocab: &Vocabulary,
    unlabeled: &UnlabeledCorpus,
    config: &PipelineConfig,
) -> Result<(TranslatedSeedSet<T>, Option<NoiseReport>)> {
    let translated = translate_seeds(seeds, dictionary);
    let Some(n) = config.noise.filter(|n| n.kind != NoiseKind::Adv) else {
        return Ok((translated, None));
    };
    let spec = NoiseSpec::new(n.kind, n.rate, config.seed)?;
    let p = match n.kind {
        NoiseKind::Unif => perturb_unif(&translated, target_vocab, &spec)?,
        _ => perturb_freq(&translated, target_vocab, unlabeled, &spec)?,
    };
    let report = NoiseReport {
        kind: n.kind,
        rate: n.rate,
        replaced: p.replaced,
        total: p.total,
    };
    Ok((p.set, Some(report)))
}

/// Builds the teacher over `target_vocab`, applying adversarial noise to its
/// matrix if configured.
pub fn teacher_stage<T: Scalar>(
    translated: &TranslatedSeedSet<T>,
    target_vocab: &Vocabulary,
    config: &PipelineConfig,
) -> Result<(Teacher<T>, TransferStats, Option<NoiseReport>)> {
    let (mut matrix, stats) = build_teacher_matrix(translated, target_vocab);
    let mut noise = None;
    if let Some(n) = config.noise.filter(|n| n.kind == NoiseKind::Adv) {
        let spec = NoiseSpec::new(n.kind, n.rate, config.seed)?;
        let noisy = perturb_adv(&matrix, &spec)?;
        let replaced = matrix
            .columns()
            .filter(|&(c, w)| noisy.column(c) != Some(w))
            .count();
        noise = Some(NoiseReport {
            kind: n.kind,
            rate: n.rate,
            replaced,
            total: matrix.n_seed_columns(),
        });
        matrix = noisy;
    }
    let teacher = Teacher::new(matrix, target_vocab.clone(), config.teacher_input)?;
    Ok((teacher, stats, noise))
}

#[derive(Debug, Clone)]
pub struct StudentStage<T> {
    pub student: StudentModel<T>,
    pub report: CoTrainReport,
    /// Student feature columns zeroed because they contain a seed word.
    pub stripped_features: usize,
}

/// Co-trains a student on the unlabeled corpus, first zeroing seed-word
/// features when the strip-seeds ablation is on.
pub fn student_stage<T: Scalar>(
    teacher: &Teacher<T>,
    target: &TargetFeatures<T>,
    unlabeled: &UnlabeledCorpus,
    config: &PipelineConfig,
) -> Result<StudentStage<T>> {
    let mut stripped_features = 0;
    let features = if config.strip_seeds {
        let cols = seed_feature_columns(&target.student_vocab, &teacher.seed_terms());
        stripped_features = cols.len();
        Cow::Owned(target.student_features.without_columns(&cols))
    } else {
        Cow::Borrowed(&target.student_features)
    };
    let inputs = StudentInputs {
        docs: &unlabeled.docs,
        features: &features,
    };
    let trainer = LogRegTrainer {
        vocab: target.student_vocab.clone(),
        n_classes: teacher.n_classes(),
        options: config.student,
    };
    let (student, report) = cotrain(teacher, unlabeled, &inputs, &trainer, &config.cotrain_config())?;
    Ok(StudentStage {
        student,
        report,
        stripped_features,
    })
}

/// Runs the target side of the method given a fitted source model.
pub fn run_target<T: Scalar>(
    source: &SourceModel<T>,
    target: &TargetFeatures<T>,
    inputs: &PipelineInputs,
    config: &PipelineConfig,
) -> Result<PipelineOutputs<T>> {
    config.validate()?;
    let (translated, dict_noise) = translate_stage(
        &source.seeds,
        &inputs.dictionary,
        &target.teacher_vocab,
        &inputs.target_unlabeled,
        config,
    )?;
    let (teacher, stats, adv_noise) = teacher_stage(&translated, &target.teacher_vocab, config)?;
    let stage = student_stage(&teacher, target, &inputs.target_unlabeled, config)?;

    let report = Report {
        config_digest: config.digest(),
        seed: config.seed,
        budget: config.budget,
        lambda: source.selection.lambda,
        lambda_fallback: source.selection.fallback,
        path_points: source.path_len,
        seeds: source
            .seeds
            .classes
            .iter()
            .enumerate()
            .map(|(c, s)| (inputs.space.name(c).to_string(), s.iter().map(|s| s.term.clone()).collect()))
            .collect(),
        seed_warnings: source.seeds.warnings.clone(),
        translation_pairs: translated.n_pairs(),
        transferred: stats.transferred,
        dropped: stats.dropped,
        teacher_columns: teacher.matrix.n_seed_columns(),
        noise: dict_noise.or(adv_noise),
        coverage: stage.report.coverage,
        stripped_features: stage.stripped_features,
        teacher: evaluate_teacher(&teacher, &inputs.target_test)?,
        student: evaluate_student(&stage.student, &inputs.target_test)?,
        cotrain: stage.report,
    };
    log::info!(
        "seed {}: teacher accuracy {:.4}, student accuracy {:.4}",
        config.seed,
        report.teacher.accuracy,
        report.student.accuracy
    );
    Ok(PipelineOutputs {
        report,
        source: source.clone(),
        translated,
        teacher,
        student: stage.student,
    })
}

/// Runs the whole method once, with `config.seed`.
pub fn run_pipeline<T: Scalar>(inputs: &PipelineInputs, config: &PipelineConfig) -> Result<PipelineOutputs<T>> {
    config.validate()?;
    if config.classes.is_empty() {
        seeds_per_class(config.budget, inputs.n_classes())?;
    } else if config.classes != inputs.space.names() {
        return Err(Error::Config(
            "configured classes do not match the corpus label space".into(),
        ));
    }
    let source = fit_source::<T>(&inputs.source, config)?;
    let target = prepare_target::<T>(&inputs.target_unlabeled, config)?;
    run_target(&source, &target, inputs, config)
}
