//! Experiment configuration loaded from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::labeling::{grid, SweepSpec, DEFAULT_OFFSETS_MHZ};
use crate::mlengine::Hyper;
use crate::receiver::Receiver;
use crate::runtime::{Countermeasure, PerSweepSpec};
use crate::seed;
use crate::signalgen::{WiFiPattern, DEFAULT_TEST_FRACTION};

/// Stream tags separating the seeds of the pipeline stages.
pub mod stage_tag {
    pub const SWEEP: u64 = 1;
    pub const SYNTH: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const TRAIN: u64 = 4;
    pub const REPORT: u64 = 5;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Packets per sliding window.
    pub window_len: usize,
    pub receiver: Receiver,
    pub sweep: SweepConfig,
    pub signal: SignalConfig,
    pub train: TrainConfig,
    pub runtime: RuntimeConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 2,
            out_dir: PathBuf::from("out"),
            window_len: 10,
            receiver: Receiver::default(),
            sweep: SweepConfig::default(),
            signal: SignalConfig::default(),
            train: TrainConfig::default(),
            runtime: RuntimeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub wanted_dbm: Vec<f64>,
    pub blocker_min_dbm: f64,
    pub blocker_max_dbm: f64,
    pub blocker_step_db: f64,
    /// Also sweep the interferer-free case.
    pub include_absent: bool,
    pub offsets_mhz: Vec<f64>,
    pub replicates: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            wanted_dbm: vec![-70.0, -60.0, -50.0],
            blocker_min_dbm: -71.0,
            blocker_max_dbm: 0.0,
            blocker_step_db: 1.0,
            include_absent: true,
            offsets_mhz: DEFAULT_OFFSETS_MHZ.to_vec(),
            replicates: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalConfig {
    pub reference_wanted_dbm: f64,
    pub length: usize,
    pub pattern: WiFiPattern,
    pub folds: usize,
    pub test_fraction: f64,
    pub repeats: usize,
    /// Share of the training packets held out to pick the best epoch.
    pub validation_fraction: f64,
}

impl Default for SignalConfig {
    fn default() -> Self {
        SignalConfig {
            reference_wanted_dbm: -60.0,
            length: 6000,
            pattern: WiFiPattern::default(),
            folds: 5,
            test_fraction: DEFAULT_TEST_FRACTION,
            repeats: 3,
            validation_fraction: 0.15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeighting {
    Uniform,
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
    pub class_weighting: ClassWeighting,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let h = Hyper::default();
        TrainConfig { lr: h.lr, epochs: h.epochs, l2: h.l2, class_weighting: ClassWeighting::Balanced }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeConfig {
    pub wanted_dbm: f64,
    pub offset_mhz: f64,
    pub packets: usize,
    pub blocker_min_dbm: f64,
    pub blocker_max_dbm: f64,
    pub blocker_step_db: f64,
    pub repetitions: usize,
    pub countermeasure: Countermeasure,
    /// Cross-validation repeat whose model drives Scenario 4.
    pub model_repeat: usize,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        let p = PerSweepSpec::default();
        RuntimeConfig {
            wanted_dbm: p.wanted_dbm,
            offset_mhz: p.offset_mhz,
            packets: p.packets,
            blocker_min_dbm: -41.0,
            blocker_max_dbm: -11.0,
            blocker_step_db: 6.0,
            repetitions: p.repetitions,
            countermeasure: Countermeasure::None,
            model_repeat: 0,
        }
    }
}

fn nonempty_axis(name: &str, len: usize) -> Result<()> {
    if len == 0 {
        return Err(Error::Usage(format!("sweep axis `{name}` is empty")));
    }
    Ok(())
}

fn positive_step(name: &str, min: f64, max: f64, step: f64) -> Result<()> {
    if !(step > 0.0) || !(min <= max) {
        return Err(Error::Usage(format!(
            "axis `{name}` needs min <= max and a positive step (got {min}..{max} step {step})"
        )));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::NotFound(path.to_path_buf())),
            Err(e) => return Err(e.into()),
        };
        let cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.receiver.validate()?;
        let s = &self.sweep;
        nonempty_axis("wanted_dbm", s.wanted_dbm.len())?;
        nonempty_axis("offsets_mhz", s.offsets_mhz.len())?;
        positive_step("blocker_dbm", s.blocker_min_dbm, s.blocker_max_dbm, s.blocker_step_db)?;
        if s.replicates == 0 {
            return Err(Error::Usage("sweep axis `replicates` must be at least 1".into()));
        }
        let r = &self.runtime;
        positive_step("runtime.blocker_dbm", r.blocker_min_dbm, r.blocker_max_dbm, r.blocker_step_db)?;
        if r.repetitions == 0 || r.packets == 0 {
            return Err(Error::Usage("runtime needs at least one repetition and one packet".into()));
        }
        if r.model_repeat >= self.signal.repeats {
            return Err(Error::Usage(format!(
                "runtime.model_repeat {} but only {} repeats are trained",
                r.model_repeat, self.signal.repeats
            )));
        }
        let g = &self.signal;
        if self.window_len == 0 || g.folds == 0 || g.repeats == 0 || g.length == 0 {
            return Err(Error::Usage("window_len, signal.length, folds and repeats must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&g.test_fraction) || !(0.0..1.0).contains(&g.validation_fraction) {
            return Err(Error::Usage("test and validation fractions must lie in [0, 1)".into()));
        }
        if !(self.train.lr >= 0.0) || !(self.train.l2 >= 0.0) {
            return Err(Error::Usage("learning rate and l2 must be non-negative".into()));
        }
        Ok(())
    }

    pub fn stage_seed(&self, tag: u64) -> u64 {
        seed::derive(self.seed, &[tag])
    }

    pub fn sweep_spec(&self) -> SweepSpec {
        let s = &self.sweep;
        let mut blocker: Vec<Option<f64>> = Vec::new();
        if s.include_absent {
            blocker.push(None);
        }
        blocker.extend(grid(s.blocker_min_dbm, s.blocker_max_dbm, s.blocker_step_db).into_iter().map(Some));
        SweepSpec {
            wanted_dbm: s.wanted_dbm.clone(),
            blocker_dbm: blocker,
            offsets_mhz: s.offsets_mhz.clone(),
            replicates: s.replicates,
            seed: self.stage_seed(stage_tag::SWEEP),
        }
    }

    pub fn hyper(&self, repeat: usize) -> Hyper {
        Hyper {
            lr: self.train.lr,
            epochs: self.train.epochs,
            l2: self.train.l2,
            seed: seed::derive(self.seed, &[stage_tag::TRAIN, repeat as u64]),
            class_weights: None,
        }
    }

    pub fn per_sweep_spec(&self) -> PerSweepSpec {
        let r = &self.runtime;
        PerSweepSpec {
            wanted_dbm: r.wanted_dbm,
            offset_mhz: r.offset_mhz,
            packets: r.packets,
            blocker_dbm: grid(r.blocker_min_dbm, r.blocker_max_dbm, r.blocker_step_db),
            repetitions: r.repetitions,
            seed: self.stage_seed(stage_tag::REPORT),
        }
    }

    /// SHA-256 of the canonical JSON form, ignoring where outputs are written.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
