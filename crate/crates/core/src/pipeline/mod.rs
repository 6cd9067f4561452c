//! The training stages: MixIT teacher, pseudo-target generation, PIT
//! student, supervised fine-tuning and distillation, plus evaluation.

mod config;
mod workspace;

use std::fmt;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{DataConfig, EvalConfig, ExperimentConfig, StageSection};
pub use workspace::{ModelId, Summary, SummaryRow, Workspace};

use crate::assign::{next_permutation, oracle_remix_select, select_top_energy};
use crate::datagen::{dynamic_remix, build_unsupervised_set, MixExample, MomExample, MomStrategy};
use crate::error::{Error, Result};
use crate::losses::{si_snr_improvement_with, LossSpec};
use crate::seed::rng_for;
use crate::separator::{AdamState, Separator, SeparatorConfig, TrainingExample};
use crate::signal::{energy, segment_stack, SourceStack, Waveform};

/// Pseudo-targets whose quietest channel falls below this fraction of the
/// mixture energy are discarded.
pub const MIN_TARGET_ENERGY_RATIO: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Teacher,
    Student,
    Finetune,
    Distill,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Teacher => "teacher",
            Stage::Student => "student",
            Stage::Finetune => "finetune",
            Stage::Distill => "distill",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Fully resolved settings of one training stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageConfig {
    pub stage: Stage,
    pub separator: SeparatorConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub loss: LossSpec,
    pub seed: u64,
    pub segment_seconds: f64,
    /// Where to write the parameters if training diverges.
    pub dump_path: Option<PathBuf>,
}

impl StageConfig {
    /// Checks the stage's channel-count rule against `num_sources` (C).
    pub fn validate(&self, num_sources: usize) -> Result<()> {
        self.separator.validate()?;
        self.loss.validate()?;
        let m = self.separator.num_outputs;
        match self.stage {
            Stage::Teacher => {
                if m < 2 * num_sources {
                    return Err(Error::Config(format!(
                        "teacher needs at least {} outputs for {num_sources} sources, got {m}",
                        2 * num_sources
                    )));
                }
                if !self.separator.mixture_consistency {
                    return Err(Error::Config(
                        "teacher requires mixture_consistency = true".into(),
                    ));
                }
            }
            _ => {
                if m != num_sources {
                    return Err(Error::Config(format!(
                        "{} must emit exactly {num_sources} outputs, got {m}",
                        self.stage
                    )));
                }
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Config(format!("{} batch_size must be at least 1", self.stage)));
        }
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(Error::Config(format!("{} lr must be positive", self.stage)));
        }
        if !self.segment_seconds.is_finite() || self.segment_seconds <= 0.0 {
            return Err(Error::Config(format!(
                "{} segment_seconds must be positive",
                self.stage
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossPoint {
    pub step: usize,
    pub epoch: usize,
    pub loss_db: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub separator: Separator,
    pub curve: Vec<LossPoint>,
}

impl TrainOutcome {
    /// Mean loss of the first and last epoch.
    pub fn first_and_last_epoch_loss(&self) -> Option<(f64, f64)> {
        let first = self.curve.first()?.epoch;
        let last = self.curve.last()?.epoch;
        let mean = |e: usize| {
            let pts: Vec<f64> = self
                .curve
                .iter()
                .filter(|p| p.epoch == e)
                .map(|p| p.loss_db)
                .collect();
            pts.iter().sum::<f64>() / pts.len() as f64
        };
        Some((mean(first), mean(last)))
    }
}

/// `step,epoch,loss_db` rows with a header line.
pub fn loss_curve_csv(curve: &[LossPoint]) -> String {
    let mut out = String::from("step,epoch,loss_db\n");
    for p in curve {
        out.push_str(&format!("{},{},{:?}\n", p.step, p.epoch, p.loss_db));
    }
    out
}

/// Adam over shuffled mini-batches; the last partial batch is kept. The
/// per-step loss is the batch loss before the update.
fn train_loop<F>(mut separator: Separator, cfg: &StageConfig, mut epoch_examples: F) -> Result<TrainOutcome>
where
    F: FnMut(usize) -> Result<Vec<TrainingExample>>,
{
    let mut adam = AdamState::new(&separator.params, cfg.lr);
    let mut curve = Vec::new();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut examples = epoch_examples(epoch)?;
        if examples.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "{} has no training examples",
                cfg.stage
            )));
        }
        examples.shuffle(&mut rng_for(cfg.seed, 0x5348_0000 + epoch as u64));
        let mut epoch_total = 0.0;
        let mut batches = 0;
        for batch in examples.chunks(cfg.batch_size) {
            let (loss, grads) = separator.loss_and_grad(batch, &cfg.loss).map_err(|e| {
                if let Some(path) = &cfg.dump_path {
                    match separator.save(path) {
                        Ok(()) => log::error!("{} diverged; parameters saved to {}", cfg.stage, path.display()),
                        Err(save) => log::error!("{} diverged; could not save parameters: {save}", cfg.stage),
                    }
                }
                Error::Diverged {
                    stage: cfg.stage.name().to_string(),
                    step,
                    source: Box::new(e),
                }
            })?;
            adam.update(&mut separator.params, &grads)?;
            step += 1;
            curve.push(LossPoint {
                step,
                epoch,
                loss_db: loss,
            });
            epoch_total += loss;
            batches += 1;
        }
        log::info!(
            "{} epoch {}/{}: mean loss {:.3} dB over {} steps",
            cfg.stage,
            epoch + 1,
            cfg.epochs,
            epoch_total / batches as f64,
            batches
        );
    }
    Ok(TrainOutcome { separator, curve })
}

/// Initial network for a stage.
pub fn init_separator(cfg: &StageConfig) -> Result<Separator> {
    let mut sep_cfg = cfg.separator.clone();
    if sep_cfg.seed.is_none() {
        sep_cfg.seed = Some(crate::seed::derive_seed_str(cfg.seed, "init"));
    }
    Separator::new(sep_cfg)
}

fn check_stage(cfg: &StageConfig, expected: Stage) -> Result<()> {
    if cfg.stage != expected {
        return Err(Error::Config(format!(
            "expected a {expected} stage config, got {}",
            cfg.stage
        )));
    }
    Ok(())
}

/// Joint segmentation of a mixture of mixtures into MixIT examples.
fn mom_segments(mom: &MomExample, seg_seconds: f64) -> Result<Vec<TrainingExample>> {
    let pair = SourceStack::new(vec![mom.x1.clone(), mom.x2.clone()])?;
    Ok(segment_stack(&pair, seg_seconds, false)?
        .into_iter()
        .filter(|s| s.iter().all(|w| energy(w) > 0.0))
        .map(|s| {
            let mut it = s.into_sources().into_iter();
            let x1 = it.next().expect("two channels");
            let x2 = it.next().expect("two channels");
            TrainingExample::Mixit { x1, x2 }
        })
        .collect())
}

/// Joint segmentation of a mixture and its targets into PIT examples.
/// Segments in which any target is silent are skipped.
fn pit_segments(mixture: &Waveform, targets: &SourceStack, seg_seconds: f64) -> Result<Vec<TrainingExample>> {
    let mut all = vec![mixture.clone()];
    all.extend(targets.iter().cloned());
    let stack = SourceStack::new(all)?;
    Ok(segment_stack(&stack, seg_seconds, false)?
        .into_iter()
        .filter(|s| s.iter().skip(1).all(|w| energy(w) > 0.0))
        .map(|s| {
            let mut sources = s.into_sources();
            let mixture = sources.remove(0);
            TrainingExample::Pit {
                mixture,
                refs: SourceStack::new(sources).expect("non-empty targets"),
            }
        })
        .collect())
}

/// Where a teacher's mixtures of mixtures come from each epoch.
#[derive(Debug, Clone)]
pub enum MomSchedule {
    /// The same pairing every epoch.
    Fixed(Vec<MomExample>),
    /// A fresh pairing per epoch, seeded by `(base_seed, epoch)`.
    Dynamic {
        mixtures: Vec<MixExample>,
        strategy: MomStrategy,
        single_fraction: f64,
        base_seed: u64,
    },
}

impl MomSchedule {
    pub fn fixed(mixtures: &[MixExample], strategy: MomStrategy, single_fraction: f64, seed: u64) -> Result<Self> {
        Ok(MomSchedule::Fixed(
            build_unsupervised_set(mixtures, strategy, single_fraction, seed)?.moms,
        ))
    }

    pub fn epoch(&self, epoch: usize) -> Result<Vec<MomExample>> {
        match self {
            MomSchedule::Fixed(moms) => Ok(moms.clone()),
            MomSchedule::Dynamic {
                mixtures,
                strategy,
                single_fraction,
                base_seed,
            } => Ok(dynamic_remix(mixtures, *strategy, *single_fraction, epoch, *base_seed)?.moms),
        }
    }
}

/// Unsupervised MixIT training: the network separates `x1 + x2` into `M`
/// signals, scored against the best binary remix onto `(x1, x2)`.
pub fn train_teacher(schedule: &MomSchedule, cfg: &StageConfig) -> Result<TrainOutcome> {
    check_stage(cfg, Stage::Teacher)?;
    let separator = init_separator(cfg)?;
    train_loop(separator, cfg, |epoch| {
        let moms = schedule.epoch(epoch)?;
        let per_mom = moms
            .iter()
            .map(|m| mom_segments(m, cfg.segment_seconds))
            .collect::<Result<Vec<_>>>()?;
        Ok(per_mom.into_iter().flatten().collect())
    })
}

/// One mixture with the teacher outputs selected as its training targets.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoExample {
    pub id: String,
    pub mixture: Waveform,
    pub targets: SourceStack,
    /// Teacher output channels chosen, in descending energy order.
    pub indices: Vec<usize>,
    /// Energies of all teacher outputs.
    pub energies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PseudoSet {
    pub examples: Vec<PseudoExample>,
    /// Mixtures whose selected targets were too quiet to train on.
    pub dropped: Vec<PseudoExample>,
}

/// Runs the teacher on each original mixture (not a mixture of mixtures)
/// and keeps its `num_sources` highest-energy outputs.
pub fn generate_pseudo_targets(
    teacher: &Separator,
    mixtures: &[MixExample],
    num_sources: usize,
) -> Result<PseudoSet> {
    if teacher.num_outputs() < num_sources {
        return Err(Error::Config(format!(
            "teacher emits {} outputs, cannot select {num_sources}",
            teacher.num_outputs()
        )));
    }
    let results: Vec<Result<(PseudoExample, bool)>> = mixtures
        .par_iter()
        .map(|ex| {
            let outputs = teacher.forward(&ex.mixture)?;
            let energies: Vec<f64> = outputs.iter().map(energy).collect();
            let (targets, indices) = select_top_energy(&outputs, num_sources)?;
            let floor = MIN_TARGET_ENERGY_RATIO * energy(&ex.mixture);
            let keep = indices.iter().all(|&i| energies[i] >= floor);
            Ok((
                PseudoExample {
                    id: ex.id.clone(),
                    mixture: ex.mixture.clone(),
                    targets,
                    indices,
                    energies,
                },
                keep,
            ))
        })
        .collect();
    let mut set = PseudoSet::default();
    for r in results {
        let (ex, keep) = r?;
        if keep {
            set.examples.push(ex);
        } else {
            log::warn!("dropping {}: a selected pseudo-target is near silent", ex.id);
            set.dropped.push(ex);
        }
    }
    Ok(set)
}

fn pit_training(separator: Separator, pairs: &[(Waveform, SourceStack)], cfg: &StageConfig) -> Result<TrainOutcome> {
    let examples = pairs
        .iter()
        .map(|(m, t)| pit_segments(m, t, cfg.segment_seconds))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect::<Vec<_>>();
    train_loop(separator, cfg, |_| Ok(examples.clone()))
}

/// PIT training of a fresh `M = C` network against fixed pseudo-targets.
pub fn train_student(pseudo: &PseudoSet, cfg: &StageConfig) -> Result<TrainOutcome> {
    check_stage(cfg, Stage::Student)?;
    let pairs: Vec<(Waveform, SourceStack)> = pseudo
        .examples
        .iter()
        .map(|e| (e.mixture.clone(), e.targets.clone()))
        .collect();
    pit_training(init_separator(cfg)?, &pairs, cfg)
}

/// Continues training `student` with PIT against true references. Every
/// layer stays trainable; the optimizer starts fresh.
pub fn finetune(student: &Separator, supervised: &[MixExample], cfg: &StageConfig) -> Result<TrainOutcome> {
    check_stage(cfg, Stage::Finetune)?;
    if !student.config.same_architecture(&cfg.separator)
        || student.config.mixture_consistency != cfg.separator.mixture_consistency
        || student.config.mask_activation != cfg.separator.mask_activation
    {
        return Err(Error::Config(
            "fine-tuning config does not match the student checkpoint".into(),
        ));
    }
    let pairs = supervised
        .iter()
        .map(|ex| {
            let refs = ex.references.clone().ok_or_else(|| {
                Error::InvalidArgument(format!("supervised example {:?} has no references", ex.id))
            })?;
            Ok((ex.mixture.clone(), refs))
        })
        .collect::<Result<Vec<_>>>()?;
    pit_training(student.clone(), &pairs, cfg)
}

/// Trains a differently shaped network on the frozen `teacher`'s outputs
/// over the unlabeled mixtures.
pub fn distill(teacher: &Separator, unlabeled: &[Waveform], cfg: &StageConfig) -> Result<TrainOutcome> {
    check_stage(cfg, Stage::Distill)?;
    if teacher.config.same_architecture(&cfg.separator) {
        return Err(Error::Config(
            "distillation student must differ in architecture from its teacher".into(),
        ));
    }
    if teacher.num_outputs() != cfg.separator.num_outputs {
        return Err(Error::Config(format!(
            "distillation teacher emits {} outputs, student {}",
            teacher.num_outputs(),
            cfg.separator.num_outputs
        )));
    }
    let pairs = unlabeled
        .par_iter()
        .map(|m| Ok((m.clone(), teacher.forward(m)?)))
        .collect::<Result<Vec<_>>>()?;
    pit_training(init_separator(cfg)?, &pairs, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// The network already emits exactly `C` signals.
    Direct,
    /// The `C` highest-energy outputs.
    Energy,
    /// The binary remix of all outputs that best matches the references.
    Oracle,
}

impl SelectionMode {
    pub fn name(self) -> &'static str {
        match self {
            SelectionMode::Direct => "direct",
            SelectionMode::Energy => "energy",
            SelectionMode::Oracle => "oracle",
        }
    }
}

impl fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SelectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(SelectionMode::Direct),
            "energy" => Ok(SelectionMode::Energy),
            "oracle" => Ok(SelectionMode::Oracle),
            other => Err(Error::InvalidArgument(format!("unknown selection mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub model_id: String,
    pub dataset_id: String,
    pub selection_mode: SelectionMode,
    /// `(utterance id, SI-SNRi dB)` in dataset order.
    pub per_utterance: Vec<(String, f64)>,
    pub mean_si_snri_db: f64,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,si_snri_db\n");
        for (id, v) in &self.per_utterance {
            out.push_str(&format!("{id},{v:?}\n"));
        }
        out
    }
}

/// Reduces `outputs` to `refs.len()` signals according to `mode`.
pub fn select_outputs(outputs: &SourceStack, refs: &SourceStack, mode: SelectionMode, spec: &LossSpec) -> Result<SourceStack> {
    let (m, c) = (outputs.len(), refs.len());
    match mode {
        SelectionMode::Direct => {
            if m != c {
                return Err(Error::Shape(format!(
                    "direct selection needs {c} outputs, model emits {m}"
                )));
            }
            Ok(outputs.clone())
        }
        SelectionMode::Energy | SelectionMode::Oracle if m <= c => Err(Error::Shape(format!(
            "{mode} selection needs more than {c} outputs, model emits {m}"
        ))),
        SelectionMode::Energy => Ok(select_top_energy(outputs, c)?.0),
        SelectionMode::Oracle => {
            if c != 2 {
                return Err(Error::Shape(format!(
                    "oracle remix selection is defined for 2 references, got {c}"
                )));
            }
            Ok(oracle_remix_select(refs, outputs, spec)?
                .remixed
                .expect("remix search returns remixed signals"))
        }
    }
}

/// Mean SI-SNRi over sources under the best estimate-to-reference
/// permutation.
pub fn best_permutation_si_snri(
    mixture: &Waveform,
    estimates: &SourceStack,
    refs: &SourceStack,
    epsilon: f64,
    zero_mean: bool,
) -> Result<f64> {
    let c = refs.len();
    if estimates.len() != c {
        return Err(Error::Shape(format!(
            "{} estimates for {c} references",
            estimates.len()
        )));
    }
    let mut table = vec![vec![0.0; c]; c];
    for (i, r) in refs.iter().enumerate() {
        for (j, e) in estimates.iter().enumerate() {
            table[i][j] = si_snr_improvement_with(mixture, e, r, epsilon, zero_mean)?;
        }
    }
    let mut perm: Vec<usize> = (0..c).collect();
    let mut best = f64::NEG_INFINITY;
    loop {
        let total: f64 = perm.iter().enumerate().map(|(i, &j)| table[i][j]).sum();
        if total > best {
            best = total;
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Ok(best / c as f64)
}

/// Full-utterance evaluation of `model` on referenced test mixtures.
pub fn evaluate(
    model: &Separator,
    model_id: &str,
    test: &[MixExample],
    dataset_id: &str,
    mode: SelectionMode,
    zero_mean: bool,
) -> Result<EvalReport> {
    let spec = LossSpec::default();
    let per_utterance = test
        .par_iter()
        .map(|ex| {
            let refs = ex.references.as_ref().ok_or_else(|| {
                Error::InvalidArgument(format!("test example {:?} has no references", ex.id))
            })?;
            let outputs = model.forward(&ex.mixture)?;
            let selected = select_outputs(&outputs, refs, mode, &spec)?;
            let v = best_permutation_si_snri(&ex.mixture, &selected, refs, spec.epsilon, zero_mean)?;
            Ok((ex.id.clone(), v))
        })
        .collect::<Result<Vec<_>>>()?;
    if per_utterance.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    let mean = per_utterance.iter().map(|(_, v)| v).sum::<f64>() / per_utterance.len() as f64;
    Ok(EvalReport {
        model_id: model_id.to_string(),
        dataset_id: dataset_id.to_string(),
        selection_mode: mode,
        per_utterance,
        mean_si_snri_db: mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{load_split, simulate_manifest, SimulationConfig, Split};
    use crate::separator::SeparatorParams;
    use std::path::Path;

    fn tiny_sep(m: usize, consistency: bool, seed: u64) -> SeparatorConfig {
        SeparatorConfig {
            num_filters: 8,
            kernel_len: 8,
            stride: 4,
            hidden_dim: 8,
            num_hidden_layers: 1,
            ..SeparatorConfig::new(m, consistency, seed)
        }
    }

    fn stage(stage: Stage, sep: SeparatorConfig, epochs: usize, batch: usize) -> StageConfig {
        StageConfig {
            stage,
            separator: sep,
            epochs,
            batch_size: batch,
            lr: 1e-3,
            loss: LossSpec::default(),
            seed: 11,
            segment_seconds: 0.05,
            dump_path: None,
        }
    }

    fn toy(n: usize) -> Vec<MixExample> {
        let cfg = SimulationConfig {
            train_mixtures: n,
            test_mixtures: 0,
            duration_s: 0.1,
            ..SimulationConfig::default()
        };
        load_split(&simulate_manifest(&cfg, 5), Split::Train, Path::new(".")).unwrap()
    }

    #[test]
    fn stage_rules() {
        let mut t = stage(Stage::Teacher, tiny_sep(4, true, 0), 1, 8);
        assert!(t.validate(2).is_ok());
        t.separator.num_outputs = 3;
        assert!(t.validate(2).is_err());
        t.separator.num_outputs = 4;
        t.separator.mixture_consistency = false;
        assert!(t.validate(2).is_err());
        let s = stage(Stage::Student, tiny_sep(4, true, 0), 1, 8);
        assert!(s.validate(2).is_err());
        assert!(stage(Stage::Student, tiny_sep(2, true, 0), 1, 8).validate(2).is_ok());
        assert!(stage(Stage::Student, tiny_sep(2, true, 0), 1, 0).validate(2).is_err());
    }

    #[test]
    fn one_example_one_epoch_is_one_step() {
        let ex = toy(2);
        let mom = build_unsupervised_set(&ex, MomStrategy::TwoSrc, 0.0, 1).unwrap().moms;
        let mut cfg = stage(Stage::Teacher, tiny_sep(4, true, 3), 1, 1);
        cfg.segment_seconds = 0.1;
        let out = train_teacher(&MomSchedule::Fixed(mom), &cfg).unwrap();
        assert_eq!(out.curve.len(), 1);
        assert_eq!(out.curve[0].step, 1);
    }

    #[test]
    fn partial_batches_are_kept() {
        let ex = toy(4);
        let schedule = MomSchedule::fixed(&ex, MomStrategy::TwoSrc, 0.0, 1).unwrap();
        // 2 MoMs x 2 segments = 4 examples, batch 3 -> 2 steps per epoch
        let cfg = stage(Stage::Teacher, tiny_sep(4, true, 3), 2, 3);
        let out = train_teacher(&schedule, &cfg).unwrap();
        assert_eq!(out.curve.len(), 4);
        assert_eq!(out.curve.iter().map(|p| p.epoch).collect::<Vec<_>>(), vec![0, 0, 1, 1]);
        assert!(loss_curve_csv(&out.curve).starts_with("step,epoch,loss_db\n1,0,"));
    }

    #[test]
    fn training_is_deterministic() {
        let ex = toy(4);
        let schedule = MomSchedule::Dynamic {
            mixtures: ex,
            strategy: MomStrategy::OneOrTwoSrc,
            single_fraction: 0.5,
            base_seed: 2,
        };
        let cfg = stage(Stage::Teacher, tiny_sep(4, true, 3), 2, 2);
        let a = train_teacher(&schedule, &cfg).unwrap();
        let b = train_teacher(&schedule, &cfg).unwrap();
        assert_eq!(a.separator.params.to_flat(), b.separator.params.to_flat());
        assert_eq!(a.curve, b.curve);
    }

    #[test]
    fn pseudo_targets_from_exact_teacher() {
        let ex = toy(3);
        let teacher = Separator::new(tiny_sep(4, true, 9)).unwrap();
        let set = generate_pseudo_targets(&teacher, &ex, 2).unwrap();
        assert_eq!(set.examples.len() + set.dropped.len(), 3);
        for p in set.examples.iter().chain(&set.dropped) {
            assert_eq!(p.targets.len(), 2);
            let outputs = teacher.forward(&p.mixture).unwrap();
            let (_, idx) = select_top_energy(&outputs, 2).unwrap();
            assert_eq!(idx, p.indices);
        }
        assert!(generate_pseudo_targets(&teacher, &ex, 5).is_err());
    }

    #[test]
    fn silent_teacher_outputs_are_dropped() {
        let ex = toy(2);
        let cfg = tiny_sep(4, false, 1);
        let teacher = Separator::from_parts(cfg.clone(), SeparatorParams::zeros(&cfg)).unwrap();
        let set = generate_pseudo_targets(&teacher, &ex, 2).unwrap();
        assert!(set.examples.is_empty());
        assert_eq!(set.dropped.len(), 2);
    }

    #[test]
    fn zero_epoch_finetune_is_identity() {
        let ex = toy(2);
        let student = Separator::new(tiny_sep(2, true, 4)).unwrap();
        let cfg = stage(Stage::Finetune, tiny_sep(2, true, 4), 0, 8);
        let out = finetune(&student, &ex, &cfg).unwrap();
        assert_eq!(out.separator.params, student.params);
        let mut other = cfg.clone();
        other.separator.hidden_dim = 9;
        assert!(finetune(&student, &ex, &other).is_err());
    }

    #[test]
    fn distill_requires_new_architecture_and_freezes_teacher() {
        let ex = toy(2);
        let mixtures: Vec<Waveform> = ex.iter().map(|e| e.mixture.clone()).collect();
        let teacher = Separator::new(tiny_sep(2, true, 4)).unwrap();
        let before = teacher.params.clone();
        let same = stage(Stage::Distill, tiny_sep(2, true, 4), 1, 8);
        assert!(distill(&teacher, &mixtures, &same).is_err());
        let mut b = tiny_sep(2, true, 4);
        b.hidden_dim = 12;
        b.num_hidden_layers = 2;
        let out = distill(&teacher, &mixtures, &stage(Stage::Distill, b, 1, 8)).unwrap();
        assert_eq!(teacher.params, before);
        assert_eq!(out.separator.num_outputs(), 2);
    }

    #[test]
    fn evaluation_identities() {
        let ex = toy(2);
        for e in &ex {
            let refs = e.references.as_ref().unwrap();
            let same = SourceStack::new(vec![e.mixture.clone(), e.mixture.clone()]).unwrap();
            let v = best_permutation_si_snri(&e.mixture, &same, refs, 1e-12, false).unwrap();
            assert_eq!(v, 0.0);
            let swapped = refs.select(&[1, 0]).unwrap();
            assert!(best_permutation_si_snri(&e.mixture, &swapped, refs, 1e-12, false).unwrap() > 50.0);
        }
        let teacher = Separator::new(tiny_sep(4, true, 1)).unwrap();
        let student = Separator::new(tiny_sep(2, true, 1)).unwrap();
        assert!(evaluate(&teacher, "t", &ex, "d", SelectionMode::Direct, false).is_err());
        assert!(evaluate(&student, "s", &ex, "d", SelectionMode::Energy, false).is_err());
        let r = evaluate(&teacher, "t", &ex, "d", SelectionMode::Oracle, false).unwrap();
        let mean = r.per_utterance.iter().map(|p| p.1).sum::<f64>() / 2.0;
        assert!((mean - r.mean_si_snri_db).abs() <= 1e-12);
        assert!("best".parse::<SelectionMode>().is_err());
    }
}
