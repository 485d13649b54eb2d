//! Teacher-student co-training on unlabeled target documents.
//!
//! Round 1 trains a student on the teacher's soft labels for the documents
//! that contain seed words. Every later round relabels the whole unlabeled
//! corpus with the previous student and trains a fresh student on it. Each
//! round's pseudo-labels are class-balanced before training.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus_io::UnlabeledCorpus;
use crate::scalar::{argmax, Scalar};
use crate::student::{StudentInputs, StudentPredictor, StudentTrainer};
use crate::teacher::{Labeler, PseudoLabel, PseudoLabeledSet, Teacher};
use crate::vectorizer::Vocabulary;
use crate::{Error, Result};

/// Hard label of a soft distribution; ties go to the lowest class.
pub fn hard_label<T: Scalar>(q: &[T]) -> usize {
    argmax(q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Balanced<T> {
    pub set: PseudoLabeledSet<T>,
    /// Documents per hard label before subsampling.
    pub class_counts: Vec<usize>,
    /// Documents kept per class.
    pub per_class: usize,
}

/// Keeps the same number of documents in every class (the size of the
/// smallest class), chosen uniformly without replacement with a seeded RNG.
/// Output preserves the input order.
pub fn balance<T: Scalar>(
    pset: &PseudoLabeledSet<T>,
    n_classes: usize,
    rng_seed: u64,
) -> Balanced<T> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, e) in pset.entries.iter().enumerate() {
        by_class[hard_label(&e.q)].push(i);
    }
    let class_counts: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let per_class = class_counts.iter().copied().min().unwrap_or(0);
    if per_class == 0 && !pset.is_empty() {
        log::warn!(
            "a class received no pseudo-labeled documents (counts {class_counts:?}); balanced set is empty"
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut keep: Vec<usize> = Vec::with_capacity(per_class * n_classes);
    for members in &by_class {
        let picked = rand::seq::index::sample(&mut rng, members.len(), per_class);
        keep.extend(picked.into_iter().map(|p| members[p]));
    }
    keep.sort_unstable();
    Balanced {
        set: PseudoLabeledSet {
            entries: keep.into_iter().map(|i| pset.entries[i].clone()).collect(),
        },
        class_counts,
        per_class,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoTrainConfig {
    /// Maximum number of rounds, at least 1.
    pub rounds: usize,
    /// Stop once teacher-student disagreement on covered documents does not
    /// decrease from one round to the next.
    pub early_stop: bool,
    pub seed: u64,
    /// Ablation: after round 1, re-estimate the seed-word weights from the
    /// student's labels and keep training on covered documents only.
    pub teacher_update: bool,
}

impl Default for CoTrainConfig {
    fn default() -> Self {
        Self {
            rounds: 2,
            early_stop: false,
            seed: 42,
            teacher_update: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub labeler: Labeler,
    pub pool_size: usize,
    pub class_counts: Vec<usize>,
    pub balanced_size: usize,
    /// Fraction of covered documents where student and teacher hard labels differ.
    pub disagreement: f64,
    pub training_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoTrainReport {
    pub coverage: f64,
    pub rounds: Vec<RoundReport>,
    pub stopped_early: bool,
}

impl CoTrainReport {
    pub fn rounds_executed(&self) -> usize {
        self.rounds.len()
    }
}

/// Runs co-training. `inputs` must describe the documents of `corpus`, row
/// for row.
pub fn cotrain<T, S>(
    teacher: &Teacher<T>,
    corpus: &UnlabeledCorpus,
    inputs: &StudentInputs<'_, T>,
    trainer: &S,
    config: &CoTrainConfig,
) -> Result<(S::Model, CoTrainReport)>
where
    T: Scalar,
    S: StudentTrainer<T>,
{
    if config.rounds < 1 {
        return Err(Error::Config("co-training needs at least one round".into()));
    }
    if inputs.docs.len() != corpus.len() || inputs.features.n_rows() != corpus.len() {
        return Err(Error::Dimension(
            "student inputs do not match the unlabeled corpus".into(),
        ));
    }
    let n_classes = teacher.n_classes();
    let coverage = teacher.coverage(corpus)?;
    let covered = teacher.label_covered(corpus);
    if covered.is_empty() {
        return Err(Error::ZeroCoverage);
    }
    let teacher_hard: Vec<(usize, usize)> = covered
        .entries
        .iter()
        .map(|e| (e.row, hard_label(&e.q)))
        .collect();

    let mut pool = covered;
    let mut current_teacher = teacher.clone();
    let mut reports: Vec<RoundReport> = Vec::new();
    let mut model: Option<S::Model> = None;
    let mut stopped_early = false;

    for round in 1..=config.rounds {
        let labeler = pool
            .entries
            .first()
            .map_or(Labeler::Teacher, |e| e.labeler);
        let balanced = balance(&pool, n_classes, config.seed.wrapping_add(round as u64));
        let train_set = if balanced.set.is_empty() {
            log::warn!("round {round}: balancing left nothing; training on the unbalanced pool");
            pool.clone()
        } else {
            balanced.set
        };
        let (student, loss) = trainer.train(inputs, &train_set)?;

        let disagreement = teacher_hard
            .iter()
            .filter(|&&(row, t)| hard_label(&student.predict(inputs, row)) != t)
            .count() as f64
            / teacher_hard.len() as f64;
        log::info!(
            "round {round}: trained on {} of {} docs, disagreement {disagreement:.4}",
            train_set.len(),
            pool.len()
        );
        reports.push(RoundReport {
            round,
            labeler,
            pool_size: pool.len(),
            class_counts: balanced.class_counts,
            balanced_size: train_set.len(),
            disagreement,
            training_loss: loss.as_f64(),
        });
        let stalled = config.early_stop
            && reports.len() >= 2
            && reports[reports.len() - 1].disagreement >= reports[reports.len() - 2].disagreement;

        if round < config.rounds && !stalled {
            pool = if config.teacher_update {
                current_teacher = updated_teacher(&current_teacher, corpus, inputs, &student);
                current_teacher.label_covered(corpus)
            } else {
                relabel_all(corpus, inputs, &student)
            };
        }
        model = Some(student);
        if stalled {
            stopped_early = true;
            break;
        }
    }

    Ok((
        model.expect("at least one round ran"),
        CoTrainReport {
            coverage,
            rounds: reports,
            stopped_early,
        },
    ))
}

/// Student soft labels for every document of the corpus.
pub fn relabel_all<T: Scalar, M: StudentPredictor<T>>(
    corpus: &UnlabeledCorpus,
    inputs: &StudentInputs<'_, T>,
    student: &M,
) -> PseudoLabeledSet<T> {
    PseudoLabeledSet {
        entries: corpus
            .docs
            .iter()
            .enumerate()
            .map(|(row, d)| PseudoLabel {
                row,
                id: d.id.clone(),
                q: student.predict(inputs, row),
                labeler: Labeler::Student,
            })
            .collect(),
    }
}

/// Re-estimates every seed column from the student's hard labels on the
/// covered documents: the weight for class `k` becomes the add-one smoothed
/// log-odds of `k` among documents containing the seed.
pub fn updated_teacher<T: Scalar, M: StudentPredictor<T>>(
    teacher: &Teacher<T>,
    corpus: &UnlabeledCorpus,
    inputs: &StudentInputs<'_, T>,
    student: &M,
) -> Teacher<T> {
    let n_classes = teacher.n_classes();
    let seed_cols: Vec<usize> = teacher.matrix.seed_columns().collect();
    let slot = |c: usize| seed_cols.binary_search(&c).ok();
    let mut counts = vec![vec![0usize; n_classes]; seed_cols.len()];
    for (row, doc) in corpus.docs.iter().enumerate() {
        let present = teacher.seeds_in(doc);
        if present.is_empty() {
            continue;
        }
        let k = hard_label(&student.predict(inputs, row));
        for c in present {
            if let Some(s) = slot(c) {
                counts[s][k] += 1;
            }
        }
    }
    let mut matrix = teacher.matrix.clone();
    let kk = T::of_usize(n_classes);
    for (s, &c) in seed_cols.iter().enumerate() {
        let total: usize = counts[s].iter().sum();
        let column = counts[s]
            .iter()
            .map(|&n_k| {
                let n_k = T::of_usize(n_k);
                let rest = T::of_usize(total) - n_k;
                ((n_k + T::one()) / (rest + kk - T::one())).ln()
            })
            .collect();
        matrix.set_column(c, column);
    }
    Teacher {
        matrix,
        vocab: teacher.vocab.clone(),
        input: teacher.input,
    }
}

/// Columns of `student_vocab` whose n-gram contains any of `seed_terms`.
pub fn seed_feature_columns(student_vocab: &Vocabulary, seed_terms: &HashSet<&str>) -> HashSet<usize> {
    student_vocab
        .terms()
        .iter()
        .enumerate()
        .filter(|(_, term)| term.split(' ').any(|tok| seed_terms.contains(tok)))
        .map(|(c, _)| c)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_io::Document;
    use crate::seed_transfer::TeacherMatrix;
    use crate::student::{LogRegTrainer, StudentModel, StudentOptions};
    use crate::teacher::TeacherInput;
    use crate::vectorizer::{fit_vocabulary, transform_tfidf, DocTermMatrix};

    fn labeled(counts: &[usize]) -> PseudoLabeledSet<f64> {
        let k = counts.len();
        let mut entries = Vec::new();
        for (class, &n) in counts.iter().enumerate() {
            for _ in 0..n {
                let mut q = vec![0.1 / (k - 1) as f64; k];
                q[class] = 0.9;
                entries.push(PseudoLabel {
                    row: entries.len(),
                    id: entries.len().to_string(),
                    q,
                    labeler: Labeler::Teacher,
                });
            }
        }
        PseudoLabeledSet { entries }
    }

    fn per_class(set: &PseudoLabeledSet<f64>, k: usize) -> Vec<usize> {
        let mut c = vec![0; k];
        for e in &set.entries {
            c[hard_label(&e.q)] += 1;
        }
        c
    }

    #[test]
    fn balance_to_smallest_class() {
        let b = balance(&labeled(&[100, 40, 40, 20]), 4, 7);
        assert_eq!(per_class(&b.set, 4), vec![20; 4]);
        assert_eq!(b.class_counts, vec![100, 40, 40, 20]);
        let rows = b.set.rows();
        assert!(rows.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn balanced_input_is_kept() {
        let input = labeled(&[5, 5]);
        assert_eq!(balance(&input, 2, 1).set, input);
    }

    #[test]
    fn empty_class_empties_everything() {
        let b = balance(&labeled(&[3, 0, 2]), 3, 1);
        assert!(b.set.is_empty());
        assert_eq!(b.per_class, 0);
    }

    #[test]
    fn balance_is_seeded() {
        let input = labeled(&[50, 10]);
        assert_eq!(balance(&input, 2, 3), balance(&input, 2, 3));
        assert_ne!(balance(&input, 2, 3).set, balance(&input, 2, 4).set);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(hard_label(&[0.5, 0.5]), 0);
        assert_eq!(hard_label(&[0.2, 0.4, 0.4]), 1);
    }

    struct Fixture {
        corpus: UnlabeledCorpus,
        teacher: Teacher<f64>,
        vocab: Vocabulary,
        features: DocTermMatrix<f64>,
    }

    fn doc(id: usize, words: &str) -> Document {
        Document::new(id.to_string(), words.split(' ').map(String::from).collect(), None)
    }

    /// "bon"/"mauvais" are seeds; "aime"/"deteste" co-occur with them and also
    /// appear in documents without seeds.
    fn fixture() -> Fixture {
        let mut docs = Vec::new();
        for i in 0..6 {
            docs.push(doc(docs.len(), &format!("bon aime film{i}")));
            docs.push(doc(docs.len(), &format!("mauvais deteste film{i}")));
            docs.push(doc(docs.len(), &format!("aime super{i}")));
            docs.push(doc(docs.len(), &format!("deteste nul{i}")));
        }
        let corpus = UnlabeledCorpus::new(docs);
        let uni = fit_vocabulary(&corpus.docs, (1, 1), 1).unwrap();
        let mut z = TeacherMatrix::new(2, uni.len());
        z.set_column(uni.get("bon").unwrap(), vec![1.5, 0.0]);
        z.set_column(uni.get("mauvais").unwrap(), vec![0.0, 1.5]);
        let teacher = Teacher::new(z, uni, TeacherInput::Binary).unwrap();
        let vocab = fit_vocabulary(&corpus.docs, (1, 2), 1).unwrap();
        let features = transform_tfidf(&corpus.docs, &vocab);
        Fixture {
            corpus,
            teacher,
            vocab,
            features,
        }
    }

    fn run(f: &Fixture, config: &CoTrainConfig) -> (StudentModel<f64>, CoTrainReport) {
        let trainer = LogRegTrainer {
            vocab: f.vocab.clone(),
            n_classes: 2,
            options: StudentOptions::default(),
        };
        let inputs = StudentInputs {
            docs: &f.corpus.docs,
            features: &f.features,
        };
        cotrain(&f.teacher, &f.corpus, &inputs, &trainer, config).unwrap()
    }

    #[test]
    fn one_round_uses_covered_docs_only() {
        let f = fixture();
        let (_, report) = run(&f, &CoTrainConfig { rounds: 1, ..Default::default() });
        assert_eq!(report.rounds_executed(), 1);
        assert_eq!(report.rounds[0].pool_size, 12);
        assert_eq!(report.rounds[0].labeler, Labeler::Teacher);
        assert!((report.coverage - 0.5).abs() < 1e-15);
    }

    #[test]
    fn second_round_relabels_everything() {
        let f = fixture();
        let (student, report) = run(&f, &CoTrainConfig::default());
        assert_eq!(report.rounds.len(), 2);
        assert_eq!(report.rounds[1].pool_size, f.corpus.len());
        assert_eq!(report.rounds[1].labeler, Labeler::Student);
        // Context words carry the label into seedless documents.
        let p = student.predict_doc(&doc(0, "aime super0"));
        assert!(p[0] > p[1]);
    }

    #[test]
    fn teacher_update_stays_on_covered_docs() {
        let f = fixture();
        let (_, report) = run(
            &f,
            &CoTrainConfig {
                rounds: 3,
                teacher_update: true,
                ..Default::default()
            },
        );
        for r in &report.rounds {
            assert_eq!(r.pool_size, 12);
            assert_eq!(r.labeler, Labeler::Teacher);
        }
    }

    #[test]
    fn log_odds_update_points_to_the_labeled_class() {
        let f = fixture();
        let inputs = StudentInputs {
            docs: &f.corpus.docs,
            features: &f.features,
        };
        // A predictor that labels every document class 1.
        struct Always1;
        impl StudentPredictor<f64> for Always1 {
            fn predict(&self, _: &StudentInputs<'_, f64>, _: usize) -> Vec<f64> {
                vec![0.0, 1.0]
            }
        }
        let t = updated_teacher(&f.teacher, &f.corpus, &inputs, &Always1);
        let bon = t.matrix.column(t.vocab.get("bon").unwrap()).unwrap();
        assert_eq!(argmax(bon), 1);
        // 6 documents contain "bon", all labeled 1: ln(7/1) vs ln(1/7).
        assert!((bon[1] - 7f64.ln()).abs() < 1e-12);
        assert!((bon[0] + 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_coverage_is_an_error() {
        let f = fixture();
        let empty = Teacher::new(
            TeacherMatrix::new(2, f.teacher.vocab.len()),
            f.teacher.vocab.clone(),
            TeacherInput::Binary,
        )
        .unwrap();
        let trainer = LogRegTrainer {
            vocab: f.vocab.clone(),
            n_classes: 2,
            options: StudentOptions::default(),
        };
        let inputs = StudentInputs {
            docs: &f.corpus.docs,
            features: &f.features,
        };
        let err = cotrain(&empty, &f.corpus, &inputs, &trainer, &CoTrainConfig::default());
        assert!(matches!(err, Err(Error::ZeroCoverage)));
        let err = cotrain(
            &f.teacher,
            &f.corpus,
            &inputs,
            &trainer,
            &CoTrainConfig { rounds: 0, ..Default::default() },
        );
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn seed_columns_include_bigrams() {
        let f = fixture();
        let seeds: HashSet<&str> = ["bon"].into_iter().collect();
        let cols = seed_feature_columns(&f.vocab, &seeds);
        let terms: Vec<&str> = cols.iter().map(|&c| f.vocab.term(c)).collect();
        assert!(terms.contains(&"bon"));
        assert!(terms.contains(&"bon aime"));
        assert!(!terms.contains(&"aime"));
    }
}
