//! AGC_optim labels by before/after-freeze replay, the forced-index flip
//! experiment, and the individual-packet dataset sweep.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::receiver::{receive_packet, GainControl, ReceptionRecord, ReceptionStatus, Receiver};
use crate::rxsim::{Arrival, GainIndex, PacketScenario};
use crate::seed;

/// Predicted quantity: a gain code, or X when no code gives good reception.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgcClass {
    Gain(GainIndex),
    X,
}

impl AgcClass {
    /// Class id in a label space of `gain_levels + 1` classes; X is the last.
    pub fn id(self, gain_levels: usize) -> usize {
        match self {
            AgcClass::Gain(g) => g.0,
            AgcClass::X => gain_levels,
        }
    }

    pub fn from_id(id: usize, gain_levels: usize) -> Option<Self> {
        match id.cmp(&gain_levels) {
            std::cmp::Ordering::Less => Some(AgcClass::Gain(GainIndex(id))),
            std::cmp::Ordering::Equal => Some(AgcClass::X),
            std::cmp::Ordering::Greater => None,
        }
    }

    pub fn gain(self) -> Option<GainIndex> {
        match self {
            AgcClass::Gain(g) => Some(g),
            AgcClass::X => None,
        }
    }
}

impl std::fmt::Display for AgcClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AgcClass::Gain(g) => write!(f, "{g}"),
            AgcClass::X => f.write_str("X"),
        }
    }
}

impl std::str::FromStr for AgcClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "X" | "x" => Ok(AgcClass::X),
            other => other
                .parse::<usize>()
                .map(|i| AgcClass::Gain(GainIndex(i)))
                .map_err(|_| Error::Usage(format!("not an AGC class: {other:?}"))),
        }
    }
}

/// A swept wanted/interferer configuration, independent of arrival time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfigPoint {
    pub wanted_dbm: f64,
    pub blocker_dbm: Option<f64>,
    pub offset_mhz: f64,
    pub seed: u64,
}

impl ConfigPoint {
    pub fn scenario(&self, arrival: Arrival) -> Result<PacketScenario> {
        let arrival = if self.blocker_dbm.is_none() { Arrival::Absent } else { arrival };
        PacketScenario::new(self.wanted_dbm, self.blocker_dbm, self.offset_mhz, arrival, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledConfig {
    pub config: ConfigPoint,
    pub agc_before: GainIndex,
    pub agc_after: GainIndex,
    pub status_before: ReceptionStatus,
    pub status_after: ReceptionStatus,
    pub agc_optim: AgcClass,
    /// Native reception with the interferer present before freeze.
    pub record_before: ReceptionRecord,
    /// Native reception with the interferer arriving after freeze.
    pub record_after: ReceptionRecord,
}

impl LabeledConfig {
    pub fn record_for(&self, arrival: Arrival) -> &ReceptionRecord {
        match arrival {
            Arrival::AfterFreeze => &self.record_after,
            _ => &self.record_before,
        }
    }

    /// Whether a radio-error replay makes the label meaningless.
    pub fn has_radio_error(&self) -> bool {
        self.status_before == ReceptionStatus::RadioError || self.status_after == ReceptionStatus::RadioError
    }
}

/// Replay `config` with the interferer before and after the freeze, and
/// pick the best code: the after-freeze code if it already receives well,
/// else the before-freeze code if forcing it rescues the late-interferer
/// reception, else X.
pub fn label_config(config: &ConfigPoint, rx: &Receiver) -> Result<LabeledConfig> {
    let native = GainControl::native(&rx.gain_table);
    let before_scn = config.scenario(Arrival::BeforeFreeze)?;
    let after_scn = config.scenario(Arrival::AfterFreeze)?;
    let record_before = receive_packet(rx, &before_scn, native);
    let record_after = receive_packet(rx, &after_scn, native);
    let agc_before = record_before.frozen_index;
    let agc_after = record_after.frozen_index;

    let agc_optim = if record_after.status.is_good() {
        AgcClass::Gain(agc_after)
    } else if rx.outcome_at(&after_scn, agc_before).is_good() {
        AgcClass::Gain(agc_before)
    } else {
        AgcClass::X
    };

    Ok(LabeledConfig {
        config: *config,
        agc_before,
        agc_after,
        status_before: record_before.status,
        status_after: record_after.status,
        agc_optim,
        record_before,
        record_after,
    })
}

/// Outcome of the forced-index flip experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipReport {
    pub configs_examined: usize,
    /// Good with the interferer before freeze, Bad with it after.
    pub qualifying: usize,
    pub flipped: usize,
    /// `flipped / qualifying`, undefined when nothing qualifies.
    pub flip_fraction: Option<f64>,
    /// Flip rate measured on hardware for the same experiment; not a target.
    pub hardware_reference_fraction: f64,
    pub per_offset: Vec<FlipOffsetRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipOffsetRow {
    pub offset_mhz: f64,
    pub qualifying: usize,
    pub flipped: usize,
}

pub const HARDWARE_FLIP_FRACTION: f64 = 0.61;

pub fn qualifies_for_flip(l: &LabeledConfig) -> bool {
    l.status_before.is_good() && l.status_after == ReceptionStatus::BadReception
}

/// Re-receive each qualifying after-freeze case with the frozen code forced
/// to the before-freeze code and count how many become good.
pub fn flip_experiment(configs: &[LabeledConfig], rx: &Receiver) -> Result<FlipReport> {
    let mut per_offset: Vec<FlipOffsetRow> = Vec::new();
    let mut qualifying = 0;
    let mut flipped = 0;
    for l in configs.iter().filter(|l| qualifies_for_flip(l)) {
        let scn = l.config.scenario(Arrival::AfterFreeze)?;
        let rec = receive_packet(rx, &scn, GainControl::forced(&rx.gain_table, l.agc_before));
        let good = rec.status.is_good();
        qualifying += 1;
        flipped += usize::from(good);
        let row = match per_offset.iter_mut().find(|r| r.offset_mhz == l.config.offset_mhz) {
            Some(r) => r,
            None => {
                per_offset.push(FlipOffsetRow { offset_mhz: l.config.offset_mhz, qualifying: 0, flipped: 0 });
                per_offset.last_mut().expect("just pushed")
            }
        };
        row.qualifying += 1;
        row.flipped += usize::from(good);
    }
    per_offset.sort_by(|a, b| a.offset_mhz.total_cmp(&b.offset_mhz));
    if qualifying == 0 {
        log::info!("flip experiment: no qualifying configs among {}", configs.len());
    }
    Ok(FlipReport {
        configs_examined: configs.len(),
        qualifying,
        flipped,
        flip_fraction: (qualifying > 0).then(|| flipped as f64 / qualifying as f64),
        hardware_reference_fraction: HARDWARE_FLIP_FRACTION,
        per_offset,
    })
}

/// Axes of the individual-packet sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub wanted_dbm: Vec<f64>,
    /// `None` entries sweep the interferer-free case.
    pub blocker_dbm: Vec<Option<f64>>,
    pub offsets_mhz: Vec<f64>,
    /// Independent seeds per configuration.
    pub replicates: usize,
    pub seed: u64,
}

/// Offsets studied on hardware, in MHz.
pub const DEFAULT_OFFSETS_MHZ: [f64; 6] = [12.0, 18.0, 20.0, 22.0, 37.0, 47.0];

/// `start, start + step, ...` up to and including `stop`.
pub fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    assert!(step > 0.0, "grid step must be positive");
    let n = ((stop - start) / step + 1e-9).floor();
    if n < 0.0 {
        return Vec::new();
    }
    (0..=n as usize).map(|k| start + step * k as f64).collect()
}

impl Default for SweepSpec {
    fn default() -> Self {
        let mut blocker: Vec<Option<f64>> = vec![None];
        blocker.extend(grid(-71.0, 0.0, 1.0).into_iter().map(Some));
        SweepSpec {
            wanted_dbm: vec![-70.0, -60.0, -50.0],
            blocker_dbm: blocker,
            offsets_mhz: DEFAULT_OFFSETS_MHZ.to_vec(),
            replicates: 1,
            seed: 1,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, empty) in [
            ("wanted_dbm", self.wanted_dbm.is_empty()),
            ("blocker_dbm", self.blocker_dbm.is_empty()),
            ("offsets_mhz", self.offsets_mhz.is_empty()),
        ] {
            if empty {
                return Err(Error::Usage(format!("sweep axis `{name}` is empty")));
            }
        }
        if self.replicates == 0 {
            return Err(Error::Usage("sweep axis `replicates` must be at least 1".into()));
        }
        Ok(())
    }

    /// Configuration points in lexicographic order: wanted, blocker, offset, replicate.
    ///
    /// Seeds are keyed by the values, not positions, so a point gets the same
    /// seed in any sweep that contains it.
    pub fn points(&self) -> Result<Vec<ConfigPoint>> {
        self.validate()?;
        let mut out = Vec::with_capacity(
            self.wanted_dbm.len() * self.blocker_dbm.len() * self.offsets_mhz.len() * self.replicates,
        );
        for &w in &self.wanted_dbm {
            for &b in &self.blocker_dbm {
                for &o in &self.offsets_mhz {
                    for rep in 0..self.replicates {
                        let btag = b.map_or(u64::MAX, seed::f64_tag);
                        let s = seed::derive(self.seed, &[seed::f64_tag(w), btag, seed::f64_tag(o), rep as u64]);
                        let point = ConfigPoint { wanted_dbm: w, blocker_dbm: b, offset_mhz: o, seed: s };
                        point.scenario(Arrival::BeforeFreeze)?;
                        out.push(point);
                    }
                }
            }
        }
        Ok(out)
    }
}

pub fn sweep_dataset(spec: &SweepSpec, rx: &Receiver) -> Result<Vec<LabeledConfig>> {
    let points = spec.points()?;
    points.par_iter().map(|p| label_config(p, rx)).collect()
}

/// Number of labeled configs per offset, in ascending offset order.
pub fn counts_per_offset(dataset: &[LabeledConfig]) -> Vec<(f64, usize)> {
    let mut out: Vec<(f64, usize)> = Vec::new();
    for l in dataset {
        match out.iter_mut().find(|(o, _)| *o == l.config.offset_mhz) {
            Some((_, n)) => *n += 1,
            None => out.push((l.config.offset_mhz, 1)),
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}
