use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use clts::corpus_io::{
    load_dictionary, load_labeled, load_model, load_unlabeled, save_model, ClassLabelSpace,
    LabeledCorpus, Tokenizer, UnlabeledCorpus,
};
use clts::evaluation::{evaluate_student, evaluate_teacher, multi_seed_run, Metrics};
use clts::noise::NoiseKind;
use clts::pipeline::{
    files, fit_source, prepare_target, run_pipeline, run_target, student_stage, teacher_stage,
    translate_stage, NoiseSettings, PipelineConfig, PipelineInputs, Report,
};
use clts::seed_transfer::{extract_seeds, TranslatedSeedSet};
use clts::synth::{generate_synth_task, SynthTaskSpec};
use clts::teacher::Teacher;
use clts::vectorizer::{fit_vocabulary, Vocabulary};
use clts::{SeedSetF64, StudentModelF64, TeacherMatrixF64, WeightMatrixF64};

#[derive(Parser)]
#[command(name = "clts", version, about = "Cross-lingual text classification from translated seed words")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the sparse source classifier and select lambda for the budget.
    TrainSource(Common),
    /// Extract seed words from the source classifier (writes seeds.tsv).
    ExtractSeeds(Common),
    /// Translate the seed words with the dictionary (writes translations.tsv).
    Translate(Common),
    /// Build the teacher from the translated seeds.
    BuildTeacher(Common),
    /// Co-train the student on the unlabeled target corpus.
    Cotrain(Common),
    /// Evaluate teacher and student on the labeled target test corpus.
    Evaluate(Common),
    /// Run every stage end to end.
    Run(RunArgs),
    /// Evaluate under noisy translations; writes CSV.
    NoiseSweep(SweepArgs),
    /// Generate a synthetic bilingual task and a matching config.
    SynthGen(SynthArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// JSON pipeline configuration.
    #[arg(long)]
    config: PathBuf,
    /// Artifacts directory; defaults to <artifacts-root>/run-<config digest>.
    #[arg(long)]
    dir: Option<PathBuf>,
    #[arg(long, default_value = "artifacts")]
    artifacts_root: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Translation budget B.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    early_stop: bool,
    /// Ablation: re-estimate seed weights from the student's labels.
    #[arg(long)]
    teacher_update: bool,
    /// Ablation: remove seed words from the student's features.
    #[arg(long)]
    strip_seeds: bool,
}

impl Common {
    fn load_config(&self) -> Result<PipelineConfig> {
        let mut config = PipelineConfig::from_json_file(&self.config)
            .with_context(|| format!("reading config {}", self.config.display()))?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(b) = self.budget {
            config.budget = b;
        }
        if let Some(r) = self.rounds {
            config.rounds = r;
        }
        config.early_stop |= self.early_stop;
        config.teacher_update |= self.teacher_update;
        config.strip_seeds |= self.strip_seeds;
        config.validate()?;
        Ok(config)
    }

    fn artifacts_dir(&self, config: &PipelineConfig) -> Result<PathBuf> {
        let dir = self.dir.clone().unwrap_or_else(|| {
            self.artifacts_root
                .join(format!("run-{}", &config.digest()[..16]))
        });
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(dir.join(files::CONFIG), serde_json::to_string_pretty(config)?)?;
        Ok(dir)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Run once per seed listed in the config and report mean and stddev.
    #[arg(long)]
    all_seeds: bool,
    /// Do not write artifacts.
    #[arg(long)]
    no_artifacts: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',', default_values = ["unif", "freq", "adv"])]
    kind: Vec<NoiseKind>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7")]
    rates: Vec<f64>,
    /// Seeds; defaults to the config's seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// CSV output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// JSON generator settings; flags below override them.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    vocab: Option<usize>,
    #[arg(long)]
    coverage: Option<f64>,
    #[arg(long)]
    indicative_per_class: Option<usize>,
    #[arg(long)]
    n_source: Option<usize>,
    #[arg(long)]
    n_unlabeled: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    /// Budget written into the generated config.
    #[arg(long, default_value_t = 30)]
    budget: usize,
}

#[derive(Serialize, Deserialize)]
struct Selection {
    lambda: f64,
    fallback: bool,
    path_points: usize,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = dispatch(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainSource(c) => train_source(&c),
        Command::ExtractSeeds(c) => extract(&c),
        Command::Translate(c) => translate(&c),
        Command::BuildTeacher(c) => build_teacher(&c),
        Command::Cotrain(c) => cotrain_cmd(&c),
        Command::Evaluate(c) => evaluate(&c),
        Command::Run(r) => run(&r),
        Command::NoiseSweep(s) => noise_sweep(&s),
        Command::SynthGen(s) => synth_gen(&s),
    }
}

fn space(config: &PipelineConfig) -> Result<ClassLabelSpace> {
    ClassLabelSpace::new(config.classes.iter().cloned()).context("config `classes`")
}

fn tokenizer(config: &PipelineConfig) -> Result<Tokenizer> {
    Ok(Tokenizer::new(config.tokenizer.clone())?)
}

fn source_corpus(config: &PipelineConfig) -> Result<LabeledCorpus> {
    let p = &config.paths.source;
    load_labeled(p, config.format_for(p), &tokenizer(config)?, &space(config)?)
        .with_context(|| format!("loading {}", p.display()))
}

fn unlabeled_corpus(config: &PipelineConfig) -> Result<UnlabeledCorpus> {
    let p = &config.paths.target_unlabeled;
    load_unlabeled(p, config.format_for(p), &tokenizer(config)?)
        .with_context(|| format!("loading {}", p.display()))
}

fn test_corpus(config: &PipelineConfig) -> Result<LabeledCorpus> {
    let p = &config.paths.target_test;
    load_labeled(p, config.format_for(p), &tokenizer(config)?, &space(config)?)
        .with_context(|| format!("loading {}", p.display()))
}

fn need(dir: &Path, name: &str, producer: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    if !path.exists() {
        bail!("{} not found; run `clts {producer}` first", path.display());
    }
    Ok(path)
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn train_source(c: &Common) -> Result<()> {
    let config = c.load_config()?;
    let dir = c.artifacts_dir(&config)?;
    let model = fit_source::<f64>(&source_corpus(&config)?, &config)?;
    save_model(&model.vocab, &dir.join(files::SOURCE_VOCAB))?;
    save_model(&model.selection.weights, &dir.join(files::SOURCE_WEIGHTS))?;
    let selection = Selection {
        lambda: model.selection.lambda,
        fallback: model.selection.fallback,
        path_points: model.path_len,
    };
    write_json(&dir.join(files::SELECTION), &selection)?;
    println!(
        "lambda {:.6e}{} after {} grid points; artifacts in {}",
        selection.lambda,
        if selection.fallback { " (fallback: budget not reachable on the grid)" } else { "" },
        selection.path_points,
        dir.display()
    );
    Ok(())
}

fn extract(c: &Common) -> Result<()> {
    let config = c.load_config()?;
    let dir = c.artifacts_dir(&config)?;
    let vocab: Vocabulary = load_model(&need(&dir, files::SOURCE_VOCAB, "train-source")?)?;
    let w: WeightMatrixF64 = load_model(&need(&dir, files::SOURCE_WEIGHTS, "train-source")?)?;
    let space = space(&config)?;
    let seeds = extract_seeds(&w, &vocab, config.budget, space.len())?;
    for warning in &seeds.warnings {
        eprintln!("warning: {warning}");
    }
    save_model(&seeds, &dir.join(files::SEEDS))?;
    let tsv = dir.join(files::SEEDS_TSV);
    seeds.write_tsv(&tsv, space.names())?;
    println!("{}", tsv.display());
    Ok(())
}

/// The teacher's vocabulary: every unigram of the unlabeled target corpus.
fn target_vocab(unlabeled: &UnlabeledCorpus) -> Result<Vocabulary> {
    Ok(fit_vocabulary(unlabeled.docs.iter(), (1, 1), 1)?)
}

fn translate(c: &Common) -> Result<()> {
    let config = c.load_config()?;
    let dir = c.artifacts_dir(&config)?;
    let seeds: SeedSetF64 = load_model(&need(&dir, files::SEEDS, "extract-seeds")?)?;
    let dict = load_dictionary(&config.paths.dictionary, &tokenizer(&config)?)
        .with_context(|| format!("loading {}", config.paths.dictionary.display()))?;
    let unlabeled = unlabeled_corpus(&config)?;
    let vocab = target_vocab(&unlabeled)?;
    let (translated, noise) = translate_stage(&seeds, &dict, &vocab, &unlabeled, &config)?;
    if let Some(n) = noise {
        eprintln!("{} noise: replaced {} of {} translations", n.kind, n.replaced, n.total);
    }
    let tsv = dir.join(files::TRANSLATIONS_TSV);
    translated.write_tsv(&tsv)?;
    println!("{}", tsv.display());
    Ok(())
}

fn build_teacher(c: &Common) -> Result<()> {
    let config = c.load_config()?;
    let dir = c.artifacts_dir(&config)?;
    let seeds: SeedSetF64 = load_model(&need(&dir, files::SEEDS, "extract-seeds")?)?;
    let translated =
        TranslatedSeedSet::read_tsv(&need(&dir, files::TRANSLATIONS_TSV, "translate")?, &seeds)?;
    let unlabeled = unlabeled_corpus(&config)?;
    let vocab = target_vocab(&unlabeled)?;
    let (teacher, stats, _) = teacher_stage(&translated, &vocab, &config)?;
    save_model(&teacher.matrix, &dir.join(files::TEACHER_MATRIX))?;
    save_model(&teacher.vocab, &dir.join(files::TARGET_VOCAB))?;
    teacher
        .label_covered(&unlabeled)
        .write_jsonl(&dir.join(files::PSEUDO_LABELS))?;
    println!(
        "{} translations transferred, {} dropped (not in target corpus); coverage {:.4}",
        stats.transferred,
        stats.dropped,
        teacher.coverage(&unlabeled)?
    );
    Ok(())
}

fn load_teacher(dir: &Path, config: &PipelineConfig) -> Result<Teacher<f64>> {
    let matrix: TeacherMatrixF64 = load_model(&need(dir, files::TEACHER_MATRIX, "build-teacher")?)?;
    let vocab: Vocabulary = load_model(&need(dir, files::TARGET_VOCAB, "build-teacher")?)?;
    Ok(Teacher::new(matrix, vocab, config.teacher_input)?)
}

fn cotrain_cmd(c: &Common) -> Result<()> {
    let config = c.load_config()?;
    let dir = c.artifacts_dir(&config)?;
    let teacher = load_teacher(&dir, &config)?;
    let unlabeled = unlabeled_corpus(&config)?;
    let target = prepare_target::<f64>(&unlabeled, &config)?;
    let stage = student_stage(&teacher, &target, &unlabeled, &config)?;
    save_model(&stage.student, &dir.join(files::STUDENT))?;
    write_json(&dir.join(files::COTRAIN_REPORT), &stage.report)?;
    println!("{}", serde_json::to_string_pretty(&stage.report)?);
    Ok(())
}

fn evaluate(c: &Common) -> Result<()> {
    let config = c.load_config()?;
    let dir = c.artifacts_dir(&config)?;
    let teacher = load_teacher(&dir, &config)?;
    let student: StudentModelF64 = load_model(&need(&dir, files::STUDENT, "cotrain")?)?;
    let test = test_corpus(&config)?;
    let metrics: BTreeMap<&str, Metrics> = [
        ("teacher", evaluate_teacher(&teacher, &test)?),
        ("student", evaluate_student(&student, &test)?),
    ]
    .into();
    write_json(&dir.join(files::METRICS), &metrics)?;
    println!("{}", serde_json::to_string_pretty(&metrics)?);
    Ok(())
}

fn run(r: &RunArgs) -> Result<()> {
    let config = r.common.load_config()?;
    let inputs = PipelineInputs::load(&config)?;
    if r.all_seeds {
        let summary = multi_seed_run(
            &config.seeds,
            |seed| {
                let c = PipelineConfig { seed, ..config.clone() };
                run_pipeline::<f64>(&inputs, &c).map(|o| o.report)
            },
            |rep: &Report| {
                [
                    ("teacher_accuracy".to_string(), rep.teacher.accuracy),
                    ("teacher_macro_f1".to_string(), rep.teacher.macro_f1),
                    ("student_accuracy".to_string(), rep.student.accuracy),
                    ("student_macro_f1".to_string(), rep.student.macro_f1),
                    ("coverage".to_string(), rep.coverage),
                ]
                .into()
            },
        )?;
        if !r.no_artifacts {
            let dir = r.common.artifacts_dir(&config)?;
            write_json(&dir.join("summary.json"), &summary)?;
        }
        println!("{}", serde_json::to_string_pretty(&summary.stats)?);
        return Ok(());
    }
    let out = run_pipeline::<f64>(&inputs, &config)?;
    if !r.no_artifacts {
        let dir = r.common.artifacts_dir(&config)?;
        out.write_artifacts(&dir, &inputs.space)?;
        eprintln!("artifacts in {}", dir.display());
    }
    println!("{}", serde_json::to_string_pretty(&out.report)?);
    Ok(())
}

fn noise_sweep(s: &SweepArgs) -> Result<()> {
    let config = s.common.load_config()?;
    let seeds = if s.seeds.is_empty() { config.seeds.clone() } else { s.seeds.clone() };
    if seeds.is_empty() {
        bail!("no seeds given");
    }
    if let Some(bad) = s.rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        bail!("noise rate {bad} outside [0, 1]");
    }
    let inputs = PipelineInputs::load(&config)?;
    let source = fit_source::<f64>(&inputs.source, &config)?;
    let target = prepare_target::<f64>(&inputs.target_unlabeled, &config)?;
    let mut out: Box<dyn Write> = match &s.out {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    };
    writeln!(out, "kind,rate,seed,teacher_acc,student_acc")?;
    for &kind in &s.kind {
        for &rate in &s.rates {
            for &seed in &seeds {
                let c = PipelineConfig {
                    seed,
                    noise: Some(NoiseSettings { kind, rate }),
                    ..config.clone()
                };
                let rep = run_target(&source, &target, &inputs, &c)?.report;
                writeln!(
                    out,
                    "{kind},{rate},{seed},{},{}",
                    rep.teacher.accuracy, rep.student.accuracy
                )?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn synth_gen(s: &SynthArgs) -> Result<()> {
    let mut spec = match &s.spec {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => SynthTaskSpec::default(),
    };
    if let Some(v) = s.seed {
        spec.seed = v;
    }
    if let Some(v) = s.classes {
        spec.n_classes = v;
    }
    if let Some(v) = s.vocab {
        spec.source_vocab = v;
        spec.target_vocab = v;
    }
    if let Some(v) = s.coverage {
        spec.dictionary_coverage = v;
    }
    if let Some(v) = s.indicative_per_class {
        spec.indicative_per_class = v;
    }
    if let Some(v) = s.n_source {
        spec.n_source = v;
    }
    if let Some(v) = s.n_unlabeled {
        spec.n_target_unlabeled = v;
    }
    if let Some(v) = s.n_test {
        spec.n_target_test = v;
    }
    let task = generate_synth_task(&spec)?;
    task.write(&s.out)?;
    let config = PipelineConfig {
        paths: clts::pipeline::CorpusPaths {
            source: clts::synth::files::SOURCE.into(),
            target_unlabeled: clts::synth::files::TARGET_UNLABELED.into(),
            target_test: clts::synth::files::TARGET_TEST.into(),
            dictionary: clts::synth::files::DICTIONARY.into(),
        },
        classes: task.space.names().to_vec(),
        budget: s.budget,
        seed: spec.seed,
        ..Default::default()
    };
    write_json(&s.out.join("config.json"), &config)?;
    write_json(&s.out.join("synth_spec.json"), &spec)?;
    println!(
        "wrote task to {}; Bayes oracle test accuracy {:.4}",
        s.out.display(),
        task.oracle.accuracy(&task.target_test)
    );
    Ok(())
}
