use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    distill, evaluate, finetune, generate_pseudo_targets, loss_curve_csv, train_student, train_teacher,
    EvalReport, ExperimentConfig, MomSchedule, PseudoSet, SelectionMode, Stage, StageConfig, TrainOutcome,
};
use crate::datagen::{
    build_unsupervised_set, export_wavs, load_split, simulate_manifest, supervised_subset, DatasetManifest,
    MixExample, MomStrategy, Split,
};
use crate::error::{Error, Result};
use crate::seed::derive_seed_str;
use crate::separator::Separator;
use crate::signal::Waveform;

const CHECKPOINT: &str = "model.ckpt";
const LOSS_CSV: &str = "loss.csv";
const PSEUDO_MANIFEST: &str = "pseudo.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelId {
    Teacher(MomStrategy),
    Student,
    Finetune,
    Distill,
    /// PIT from scratch on the supervised subset only.
    Supervised,
}

impl ModelId {
    pub fn name(self) -> String {
        match self {
            ModelId::Teacher(s) => format!("teacher_{}", s.label()),
            ModelId::Student => "student".into(),
            ModelId::Finetune => "finetune".into(),
            ModelId::Distill => "distill".into(),
            ModelId::Supervised => "supervised".into(),
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl std::str::FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "teacher_2src" => Ok(ModelId::Teacher(MomStrategy::TwoSrc)),
            "teacher_1or2src" => Ok(ModelId::Teacher(MomStrategy::OneOrTwoSrc)),
            "student" => Ok(ModelId::Student),
            "finetune" => Ok(ModelId::Finetune),
            "distill" => Ok(ModelId::Distill),
            "supervised" => Ok(ModelId::Supervised),
            other => Err(Error::InvalidArgument(format!(
                "unknown model {other:?}; expected teacher_2src, teacher_1or2src, student, finetune, distill or supervised"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct PseudoRecord {
    id: String,
    indices: Vec<usize>,
    energies: Vec<f64>,
    kept: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct MomRecord {
    id: String,
    x1: String,
    x2: String,
    sources_in_x1: usize,
    sources_in_x2: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub model: String,
    pub mode: SelectionMode,
    pub mean_si_snri_db: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
}

impl Summary {
    pub fn get(&self, model: &str, mode: SelectionMode) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.mode == mode)
            .map(|r| r.mean_si_snri_db)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,mode,mean_si_snri_db\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{:?}\n", r.model, r.mode, r.mean_si_snri_db));
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<18} {:<8} {:>12}\n", "model", "select", "SI-SNRi (dB)");
        for r in &self.rows {
            out.push_str(&format!("{:<18} {:<8} {:>12.2}\n", r.model, r.mode.name(), r.mean_si_snri_db));
        }
        out
    }
}

/// A working directory holding every stage's artifacts.
#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn require(path: PathBuf) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingPrerequisite(path))
    }
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn data_dir(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn model_dir(&self, model: ModelId) -> PathBuf {
        self.root.join(model.name())
    }

    pub fn checkpoint(&self, model: ModelId) -> PathBuf {
        self.model_dir(model).join(CHECKPOINT)
    }

    pub fn pseudo_manifest(&self) -> PathBuf {
        self.root.join("pseudo").join(PSEUDO_MANIFEST)
    }

    pub fn eval_csv(&self, model: ModelId, mode: SelectionMode) -> PathBuf {
        self.root.join("eval").join(format!("{}_{}.csv", model.name(), mode.name()))
    }

    pub fn summary_csv(&self) -> PathBuf {
        self.root.join("summary.csv")
    }

    fn manifest_location(&self, cfg: &ExperimentConfig) -> PathBuf {
        cfg.data
            .manifest
            .clone()
            .unwrap_or_else(|| self.data_dir().join("manifest.jsonl"))
    }

    /// Writes the simulated manifest, WAV files, and a preview of the epoch-0
    /// mixtures of mixtures for the configured strategy.
    pub fn simulate(&self, cfg: &ExperimentConfig) -> Result<DatasetManifest> {
        cfg.validate()?;
        let dir = self.data_dir();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut manifest = simulate_manifest(&cfg.simulation, derive_seed_str(cfg.seed, "data"));
        export_wavs(&mut manifest, &dir)?;
        manifest.write(dir.join("manifest.jsonl"))?;

        let train = load_split(&manifest, Split::Train, &dir)?;
        let set = build_unsupervised_set(
            &train,
            cfg.data.strategy,
            cfg.data.single_fraction,
            self.mom_seed(cfg),
        )?;
        let mut lines = String::new();
        for (m, (a, b)) in set.moms.iter().zip(&set.pairs) {
            let rec = MomRecord {
                id: m.id.clone(),
                x1: a.clone(),
                x2: b.clone(),
                sources_in_x1: m.sources_in_x1,
                sources_in_x2: m.sources_in_x2,
            };
            lines.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            lines.push('\n');
        }
        write_file(&dir.join(format!("moms_{}.jsonl", cfg.data.strategy.label())), &lines)?;
        Ok(manifest)
    }

    fn mom_seed(&self, cfg: &ExperimentConfig) -> u64 {
        derive_seed_str(cfg.seed, "moms")
    }

    pub fn load_data(&self, cfg: &ExperimentConfig, split: Split) -> Result<Vec<MixExample>> {
        let path = require(self.manifest_location(cfg))?;
        let manifest = DatasetManifest::read(&path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let data = load_split(&manifest, split, base)?;
        if data.is_empty() {
            return Err(Error::Manifest(format!("no {split:?} records in {}", path.display())));
        }
        Ok(data)
    }

    fn load_model(&self, model: ModelId) -> Result<Separator> {
        Separator::load(require(self.checkpoint(model))?)
    }

    fn save_outcome(&self, model: ModelId, outcome: &TrainOutcome) -> Result<()> {
        let dir = self.model_dir(model);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        outcome.separator.save(dir.join(CHECKPOINT))?;
        write_file(&dir.join(LOSS_CSV), &loss_curve_csv(&outcome.curve))?;
        if let Some((first, last)) = outcome.first_and_last_epoch_loss() {
            log::info!("{model}: loss {first:.3} dB -> {last:.3} dB");
        }
        Ok(())
    }

    fn stage(&self, cfg: &ExperimentConfig, stage: Stage, model: ModelId) -> Result<StageConfig> {
        cfg.validate()?;
        let mut sc = cfg.stage_config(stage);
        sc.dump_path = Some(self.model_dir(model).join("diverged.ckpt"));
        Ok(sc)
    }

    pub fn train_teacher(&self, cfg: &ExperimentConfig, strategy: MomStrategy) -> Result<TrainOutcome> {
        let model = ModelId::Teacher(strategy);
        let mut sc = self.stage(cfg, Stage::Teacher, model)?;
        // the two strategies are independent runs of the same stage
        sc.seed = derive_seed_str(sc.seed, strategy.label());
        let train = self.load_data(cfg, Split::Train)?;
        let schedule = if cfg.data.dynamic_remix {
            MomSchedule::Dynamic {
                mixtures: train,
                strategy,
                single_fraction: cfg.data.single_fraction,
                base_seed: self.mom_seed(cfg),
            }
        } else {
            MomSchedule::fixed(&train, strategy, cfg.data.single_fraction, self.mom_seed(cfg))?
        };
        let outcome = train_teacher(&schedule, &sc)?;
        self.save_outcome(model, &outcome)?;
        Ok(outcome)
    }

    fn pseudo_teacher(&self, cfg: &ExperimentConfig) -> Result<Separator> {
        let teacher = self.load_model(ModelId::Teacher(cfg.data.strategy))?;
        cfg.stage_config(Stage::Teacher).validate(cfg.data.num_sources)?;
        if teacher.num_outputs() < cfg.data.num_sources {
            return Err(Error::Config(format!(
                "teacher checkpoint emits {} outputs, fewer than {} sources",
                teacher.num_outputs(),
                cfg.data.num_sources
            )));
        }
        Ok(teacher)
    }

    /// Energy-selected pseudo-targets from the configured strategy's teacher.
    /// The JSON-lines audit records the chosen channels and all energies.
    pub fn pseudo(&self, cfg: &ExperimentConfig) -> Result<PseudoSet> {
        cfg.validate()?;
        let teacher = self.pseudo_teacher(cfg)?;
        let train = self.load_data(cfg, Split::Train)?;
        let set = generate_pseudo_targets(&teacher, &train, cfg.data.num_sources)?;
        let mut records: Vec<(usize, PseudoRecord)> = set
            .examples
            .iter()
            .map(|e| (e, true))
            .chain(set.dropped.iter().map(|e| (e, false)))
            .map(|(e, kept)| {
                let pos = train.iter().position(|t| t.id == e.id).expect("id from train set");
                (
                    pos,
                    PseudoRecord {
                        id: e.id.clone(),
                        indices: e.indices.clone(),
                        energies: e.energies.clone(),
                        kept,
                    },
                )
            })
            .collect();
        records.sort_by_key(|r| r.0);
        let mut text = String::new();
        for (_, r) in &records {
            text.push_str(&serde_json::to_string(r).expect("record serializes"));
            text.push('\n');
        }
        write_file(&self.pseudo_manifest(), &text)?;
        log::info!(
            "pseudo-targets: {} kept, {} dropped",
            set.examples.len(),
            set.dropped.len()
        );
        Ok(set)
    }

    /// Re-derives the pseudo-targets from the teacher checkpoint and checks
    /// them against the stored audit.
    fn load_pseudo(&self, cfg: &ExperimentConfig) -> Result<PseudoSet> {
        let path = require(self.pseudo_manifest())?;
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let stored: Vec<PseudoRecord> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| Error::Manifest(format!("{}: {e}", path.display()))))
            .collect::<Result<_>>()?;
        let teacher = self.pseudo_teacher(cfg)?;
        let train = self.load_data(cfg, Split::Train)?;
        let set = generate_pseudo_targets(&teacher, &train, cfg.data.num_sources)?;
        let kept: Vec<(&str, &[usize])> = set
            .examples
            .iter()
            .map(|e| (e.id.as_str(), e.indices.as_slice()))
            .collect();
        let stored_kept: Vec<(&str, &[usize])> = stored
            .iter()
            .filter(|r| r.kept)
            .map(|r| (r.id.as_str(), r.indices.as_slice()))
            .collect();
        let mut a = kept.clone();
        let mut b = stored_kept.clone();
        a.sort();
        b.sort();
        if a != b {
            return Err(Error::Manifest(format!(
                "{} does not match the current teacher; rerun the pseudo stage",
                path.display()
            )));
        }
        Ok(set)
    }

    pub fn train_student(&self, cfg: &ExperimentConfig) -> Result<TrainOutcome> {
        let sc = self.stage(cfg, Stage::Student, ModelId::Student)?;
        let pseudo = self.load_pseudo(cfg)?;
        let outcome = train_student(&pseudo, &sc)?;
        self.save_outcome(ModelId::Student, &outcome)?;
        Ok(outcome)
    }

    pub fn finetune(&self, cfg: &ExperimentConfig) -> Result<TrainOutcome> {
        let sc = self.stage(cfg, Stage::Finetune, ModelId::Finetune)?;
        let student = self.load_model(ModelId::Student)?;
        let train = self.load_data(cfg, Split::Train)?;
        let subset = supervised_subset(&train, cfg.data.supervised_fraction)?;
        let outcome = finetune(&student, &subset, &sc)?;
        self.save_outcome(ModelId::Finetune, &outcome)?;
        Ok(outcome)
    }

    /// Baseline trained only on the supervised subset, with the fine-tuning
    /// settings and the student's epoch count.
    pub fn train_supervised(&self, cfg: &ExperimentConfig) -> Result<TrainOutcome> {
        let mut sc = self.stage(cfg, Stage::Finetune, ModelId::Supervised)?;
        sc.epochs = cfg.student.epochs;
        sc.seed = derive_seed_str(cfg.seed, "supervised");
        let train = self.load_data(cfg, Split::Train)?;
        let subset = supervised_subset(&train, cfg.data.supervised_fraction)?;
        let init = super::init_separator(&sc)?;
        let outcome = finetune(&init, &subset, &sc)?;
        self.save_outcome(ModelId::Supervised, &outcome)?;
        Ok(outcome)
    }

    pub fn distill(&self, cfg: &ExperimentConfig) -> Result<TrainOutcome> {
        let sc = self.stage(cfg, Stage::Distill, ModelId::Distill)?;
        let teacher = self.load_model(ModelId::Finetune)?;
        let train = self.load_data(cfg, Split::Train)?;
        let unlabeled: Vec<Waveform> = train.into_iter().map(|e| e.mixture).collect();
        let outcome = distill(&teacher, &unlabeled, &sc)?;
        self.save_outcome(ModelId::Distill, &outcome)?;
        Ok(outcome)
    }

    pub fn evaluate(&self, cfg: &ExperimentConfig, model: ModelId, mode: SelectionMode) -> Result<EvalReport> {
        let separator = self.load_model(model)?;
        let test = self.load_data(cfg, Split::Test)?;
        let report = evaluate(
            &separator,
            &model.name(),
            &test,
            "test",
            mode,
            cfg.eval.zero_mean,
        )?;
        write_file(&self.eval_csv(model, mode), &report.to_csv())?;
        Ok(report)
    }

    /// Simulation, both teachers, pseudo-targets, student, fine-tuning,
    /// distillation, the supervised baseline, and evaluation of every model.
    pub fn run_all(&self, cfg: &ExperimentConfig) -> Result<Summary> {
        cfg.validate()?;
        if cfg.data.manifest.is_none() {
            self.simulate(cfg)?;
        }
        for strategy in [MomStrategy::TwoSrc, MomStrategy::OneOrTwoSrc] {
            self.train_teacher(cfg, strategy)?;
        }
        self.pseudo(cfg)?;
        self.train_student(cfg)?;
        self.finetune(cfg)?;
        self.distill(cfg)?;
        self.train_supervised(cfg)?;

        let mut summary = Summary::default();
        let mut push = |report: EvalReport| {
            summary.rows.push(SummaryRow {
                model: report.model_id,
                mode: report.selection_mode,
                mean_si_snri_db: report.mean_si_snri_db,
            })
        };
        for strategy in [MomStrategy::TwoSrc, MomStrategy::OneOrTwoSrc] {
            for &mode in &cfg.eval.teacher_modes {
                push(self.evaluate(cfg, ModelId::Teacher(strategy), mode)?);
            }
        }
        for model in [ModelId::Supervised, ModelId::Student, ModelId::Finetune, ModelId::Distill] {
            push(self.evaluate(cfg, model, SelectionMode::Direct)?);
        }
        write_file(&self.summary_csv(), &summary.to_csv())?;
        Ok(summary)
    }
}
