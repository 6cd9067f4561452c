use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{SelectionMode, Stage, StageConfig};
use crate::datagen::{Condition, MomStrategy, SimulationConfig};
use crate::error::{Error, Result};
use crate::losses::LossSpec;
use crate::seed::derive_seed_str;
use crate::separator::SeparatorConfig;

/// Per-stage settings as written in the experiment file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSection {
    pub separator: SeparatorConfig,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default)]
    pub loss: LossSpec,
    /// Derived from the master seed and the stage name when omitted.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_segment_seconds")]
    pub segment_seconds: f64,
}

fn default_epochs() -> usize {
    30
}
fn default_batch_size() -> usize {
    8
}
fn default_lr() -> f64 {
    crate::separator::DEFAULT_LR
}
fn default_segment_seconds() -> f64 {
    4.0
}

impl StageSection {
    fn new(separator: SeparatorConfig, epochs: usize, segment_seconds: f64) -> Self {
        Self {
            separator,
            epochs,
            batch_size: default_batch_size(),
            lr: default_lr(),
            loss: LossSpec::default(),
            seed: None,
            segment_seconds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Sources per original mixture (C).
    pub num_sources: usize,
    /// Strategy of the teacher whose outputs become pseudo-targets.
    pub strategy: MomStrategy,
    pub single_fraction: f64,
    pub supervised_fraction: f64,
    /// Re-pair the mixtures of mixtures every teacher epoch.
    pub dynamic_remix: bool,
    /// External JSON-lines manifest used instead of simulated data.
    pub manifest: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            num_sources: 2,
            strategy: MomStrategy::OneOrTwoSrc,
            single_fraction: 0.1,
            supervised_fraction: 0.1,
            dynamic_remix: true,
            manifest: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub teacher_modes: Vec<SelectionMode>,
    /// Remove the mean before computing SI-SNR.
    pub zero_mean: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            teacher_modes: vec![SelectionMode::Energy, SelectionMode::Oracle],
            zero_mean: false,
        }
    }
}

/// The whole experiment, read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub workdir: Option<PathBuf>,
    pub simulation: SimulationConfig,
    pub data: DataConfig,
    pub teacher: StageSection,
    pub student: StageSection,
    pub finetune: StageSection,
    pub distill: StageSection,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    /// The desk-scale toy experiment.
    fn default() -> Self {
        let arch = |m: usize, hidden_dim: usize, num_hidden_layers: usize| SeparatorConfig {
            seed: None,
            hidden_dim,
            num_hidden_layers,
            ..SeparatorConfig::new(m, true, 0)
        };
        Self {
            seed: 20_240_521,
            workdir: None,
            simulation: SimulationConfig::default(),
            data: DataConfig::default(),
            teacher: StageSection::new(arch(4, 64, 2), 150, 0.5),
            student: StageSection::new(arch(2, 128, 2), 100, 0.5),
            finetune: StageSection::new(arch(2, 128, 2), 10, 0.5),
            distill: StageSection::new(arch(2, 96, 3), 60, 0.5),
            eval: EvalConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    fn section(&self, stage: Stage) -> &StageSection {
        match stage {
            Stage::Teacher => &self.teacher,
            Stage::Student => &self.student,
            Stage::Finetune => &self.finetune,
            Stage::Distill => &self.distill,
        }
    }

    pub fn stage_config(&self, stage: Stage) -> StageConfig {
        let s = self.section(stage);
        StageConfig {
            stage,
            separator: s.separator.clone(),
            epochs: s.epochs,
            batch_size: s.batch_size,
            lr: s.lr,
            loss: s.loss,
            seed: s.seed.unwrap_or_else(|| derive_seed_str(self.seed, stage.name())),
            segment_seconds: s.segment_seconds,
            dump_path: None,
        }
    }

    /// Checks every stage before any work starts.
    pub fn validate(&self) -> Result<()> {
        let c = self.data.num_sources;
        if c != 2 {
            return Err(Error::Config(format!(
                "only two-source mixtures are supported, num_sources = {c}"
            )));
        }
        for f in [self.data.single_fraction, self.data.supervised_fraction] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config(format!("fraction {f} outside [0, 1]")));
            }
        }
        for stage in [Stage::Teacher, Stage::Student, Stage::Finetune, Stage::Distill] {
            self.stage_config(stage).validate(c)?;
        }
        let student = &self.student.separator;
        let tuned = &self.finetune.separator;
        if !student.same_architecture(tuned)
            || student.mixture_consistency != tuned.mixture_consistency
            || student.mask_activation != tuned.mask_activation
        {
            return Err(Error::Config(
                "finetune separator must match the student separator".into(),
            ));
        }
        let keep_consistency = self.simulation.condition == Condition::Anechoic;
        for (name, section) in [("student", &self.student), ("finetune", &self.finetune), ("distill", &self.distill)] {
            if section.separator.mixture_consistency != keep_consistency {
                return Err(Error::Config(format!(
                    "{name} mixture_consistency must be {keep_consistency} in the {:?} condition",
                    self.simulation.condition
                )));
            }
        }
        if self.distill.separator.same_architecture(tuned) {
            return Err(Error::Config(
                "distill separator must differ in architecture from the fine-tuned model".into(),
            ));
        }
        if self.eval.teacher_modes.contains(&SelectionMode::Direct) {
            return Err(Error::Config(
                "teachers emit more outputs than sources; use energy or oracle selection".into(),
            ));
        }
        let sim = &self.simulation;
        if sim.train_mixtures < 2 || sim.test_mixtures == 0 {
            return Err(Error::Config(
                "simulation needs at least 2 train and 1 test mixture".into(),
            ));
        }
        if !sim.duration_s.is_finite() || sim.duration_s <= 0.0 || sim.sample_rate == 0 {
            return Err(Error::Config("simulation duration and sample rate must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_and_validates() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = ExperimentConfig::from_toml("seed = 7\n[data]\nstrategy = \"two_src\"\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.data.strategy, MomStrategy::TwoSrc);
        assert_eq!(cfg.teacher.separator.num_outputs, 4);
        assert!(ExperimentConfig::from_toml("sed = 7").is_err());
    }

    #[test]
    fn stage_seeds_are_derived() {
        let cfg = ExperimentConfig::default();
        let t = cfg.stage_config(Stage::Teacher).seed;
        assert_ne!(t, cfg.stage_config(Stage::Student).seed);
        let mut fixed = cfg.clone();
        fixed.teacher.seed = Some(3);
        assert_eq!(fixed.stage_config(Stage::Teacher).seed, 3);
    }

    #[test]
    fn channel_rules_are_checked() {
        let mut cfg = ExperimentConfig::default();
        cfg.teacher.separator.num_outputs = 3;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.student.separator.num_outputs = 4;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.distill.separator = cfg.finetune.separator.clone();
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.eval.teacher_modes.push(SelectionMode::Direct);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn consistency_follows_the_noise_condition() {
        let mut cfg = ExperimentConfig::default();
        cfg.simulation.condition = Condition::Noisy;
        assert!(cfg.validate().is_err());
        for s in [&mut cfg.student, &mut cfg.finetune, &mut cfg.distill] {
            s.separator.mixture_consistency = false;
        }
        cfg.validate().unwrap();
        cfg.simulation.condition = Condition::Anechoic;
        assert!(cfg.validate().is_err());
    }
}
