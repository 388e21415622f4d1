//! Two-phase receiver power model.
//!
//! A packet is reduced to a preamble phase (gain acquisition, sync) and a
//! payload phase (gain frozen). For each phase the model derives the wideband
//! power seen by the LNA power detector, the post-filter interferer-plus-noise
//! power, the ADC overdrive and the effective SNR. Reception outcomes are
//! threshold decisions on those quantities.
//!
//! Units: powers in dBm, gains and ratios in dB, offsets in MHz. An absent
//! signal is `None` and contributes zero linear power.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Discrete AGC gain code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GainIndex(pub usize);

impl GainIndex {
    pub fn get(self) -> usize {
        self.0
    }
}

impl std::fmt::Display for GainIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Sum powers given in dBm in the linear domain.
///
/// `None` entries are absent signals. A list where every entry is absent
/// yields `-inf`.
pub fn combine_dbm(levels: &[Option<f64>]) -> Result<f64> {
    if levels.is_empty() {
        return Err(Error::Usage("combine_dbm needs at least one level".into()));
    }
    let linear: f64 = levels.iter().flatten().map(|l| 10f64.powf(l / 10.0)).sum();
    Ok(10.0 * linear.log10())
}

pub(crate) fn combine2(a: f64, b: Option<f64>) -> f64 {
    match b {
        Some(b) => {
            let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
            hi + 10.0 * (1.0 + 10f64.powf((lo - hi) / 10.0)).log10()
        }
        None => a,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GainTableSpec {
    entries_db: Vec<f64>,
    sat_threshold_dbm: f64,
    noise_floor_dbm: Vec<f64>,
}

/// Gain codes of the LNA, the ADC clip level and the per-code noise floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GainTableSpec", into = "GainTableSpec")]
pub struct GainTable {
    entries_db: Vec<f64>,
    sat_threshold_dbm: f64,
    noise_floor_dbm: Vec<f64>,
}

impl TryFrom<GainTableSpec> for GainTable {
    type Error = Error;

    fn try_from(s: GainTableSpec) -> Result<Self> {
        GainTable::new(s.entries_db, s.sat_threshold_dbm, s.noise_floor_dbm)
    }
}

impl From<GainTable> for GainTableSpec {
    fn from(t: GainTable) -> Self {
        GainTableSpec {
            entries_db: t.entries_db,
            sat_threshold_dbm: t.sat_threshold_dbm,
            noise_floor_dbm: t.noise_floor_dbm,
        }
    }
}

impl GainTable {
    pub const MIN_LEVELS: usize = 4;

    pub fn new(entries_db: Vec<f64>, sat_threshold_dbm: f64, noise_floor_dbm: Vec<f64>) -> Result<Self> {
        if entries_db.len() < Self::MIN_LEVELS {
            return Err(Error::Config(format!(
                "gain table needs at least {} entries, got {}",
                Self::MIN_LEVELS,
                entries_db.len()
            )));
        }
        if noise_floor_dbm.len() != entries_db.len() {
            return Err(Error::Config(format!(
                "gain table has {} entries but {} noise floors",
                entries_db.len(),
                noise_floor_dbm.len()
            )));
        }
        if entries_db.iter().chain(&noise_floor_dbm).any(|v| !v.is_finite()) || !sat_threshold_dbm.is_finite() {
            return Err(Error::Config("gain table values must be finite".into()));
        }
        if entries_db.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("gain entries must be strictly increasing".into()));
        }
        if noise_floor_dbm.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Config("noise floor must not increase with gain index".into()));
        }
        Ok(GainTable { entries_db, sat_threshold_dbm, noise_floor_dbm })
    }

    pub fn len(&self) -> usize {
        self.entries_db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries_db.is_empty()
    }

    pub fn max_index(&self) -> GainIndex {
        GainIndex(self.len() - 1)
    }

    pub fn index(&self, i: usize) -> Result<GainIndex> {
        if i < self.len() {
            Ok(GainIndex(i))
        } else {
            Err(Error::Usage(format!("gain index {i} out of range 0..{}", self.len())))
        }
    }

    /// Clamp an arbitrary code into the table's range.
    pub fn clamp(&self, i: usize) -> GainIndex {
        GainIndex(i.min(self.len() - 1))
    }

    pub fn indices(&self) -> impl Iterator<Item = GainIndex> {
        (0..self.len()).map(GainIndex)
    }

    pub fn gain_db(&self, i: GainIndex) -> f64 {
        self.entries_db[i.0]
    }

    pub fn noise_floor_dbm(&self, i: GainIndex) -> f64 {
        self.noise_floor_dbm[i.0]
    }

    pub fn sat_threshold_dbm(&self) -> f64 {
        self.sat_threshold_dbm
    }

    pub fn entries_db(&self) -> &[f64] {
        &self.entries_db
    }
}

impl Default for GainTable {
    /// Eight codes in 6 dB steps from 0 to 42 dB, clip at -8 dBm, noise floor
    /// from -85 dBm at the lowest code to -99 dBm at the highest.
    fn default() -> Self {
        let entries = (0..8).map(|i| 6.0 * i as f64).collect();
        let floors = (0..8).map(|i| -85.0 - 2.0 * i as f64).collect();
        GainTable::new(entries, -8.0, floors).expect("default gain table is valid")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RejectionSpec {
    points: Vec<(f64, f64)>,
}

/// Channel-filter rejection versus carrier offset.
///
/// Piecewise linear through `(offset_mhz, rejection_db)` points, flat beyond
/// the last point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RejectionSpec", into = "RejectionSpec")]
pub struct RejectionCurve {
    points: Vec<(f64, f64)>,
}

impl TryFrom<RejectionSpec> for RejectionCurve {
    type Error = Error;

    fn try_from(s: RejectionSpec) -> Result<Self> {
        RejectionCurve::new(s.points)
    }
}

impl From<RejectionCurve> for RejectionSpec {
    fn from(c: RejectionCurve) -> Self {
        RejectionSpec { points: c.points }
    }
}

impl RejectionCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        match points.first() {
            Some(&(0.0, 0.0)) => {}
            _ => return Err(Error::Config("rejection curve must start at (0 MHz, 0 dB)".into())),
        }
        if points.iter().any(|(o, r)| !o.is_finite() || !r.is_finite()) {
            return Err(Error::Config("rejection curve points must be finite".into()));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Config("rejection curve offsets must be strictly increasing".into()));
        }
        if points.windows(2).any(|w| w[1].1 < w[0].1) {
            return Err(Error::Config("rejection must be non-decreasing in offset".into()));
        }
        Ok(RejectionCurve { points })
    }

    pub fn rejection_db(&self, offset_mhz: f64) -> f64 {
        let offset = offset_mhz.abs();
        let last = self.points[self.points.len() - 1];
        if offset >= last.0 {
            return last.1;
        }
        for w in self.points.windows(2) {
            let ((o0, r0), (o1, r1)) = (w[0], w[1]);
            if offset <= o1 {
                return r0 + (r1 - r0) * (offset - o0) / (o1 - o0);
            }
        }
        last.1
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }
}

impl Default for RejectionCurve {
    fn default() -> Self {
        RejectionCurve::new(vec![(0.0, 0.0), (12.0, 30.0), (22.0, 45.0), (47.0, 55.0)])
            .expect("default rejection curve is valid")
    }
}

/// Demodulation thresholds and impairment parameters of the receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkBudget {
    pub rejection: RejectionCurve,
    /// Minimum preamble SNR for Access-Address detection.
    pub snr_aa_threshold_db: f64,
    /// Minimum payload SNR for a CRC pass.
    pub snr_crc_threshold_db: f64,
    /// Clip overdrive beyond which reception fails whatever the SNR.
    pub overdrive_margin_db: f64,
    /// SNR lost per dB of ADC overdrive.
    pub distortion_db_per_db: f64,
    /// Standard deviation of the interferer envelope, drawn independently
    /// for the preamble and the payload of each packet.
    pub blocker_fluctuation_db: f64,
    /// Standard deviation of the jitter on reported RSSI/SNR metrics.
    pub metric_jitter_db: f64,
}

impl Default for LinkBudget {
    fn default() -> Self {
        LinkBudget {
            rejection: RejectionCurve::default(),
            snr_aa_threshold_db: -12.0,
            snr_crc_threshold_db: -10.0,
            overdrive_margin_db: 0.5,
            distortion_db_per_db: 3.0,
            blocker_fluctuation_db: 3.5,
            metric_jitter_db: 0.5,
        }
    }
}

impl LinkBudget {
    pub fn validate(&self) -> Result<()> {
        if self.snr_crc_threshold_db < self.snr_aa_threshold_db - 6.0 {
            return Err(Error::Config(
                "snr_crc_threshold_db must be at least snr_aa_threshold_db - 6".into(),
            ));
        }
        if self.distortion_db_per_db <= 0.0 {
            return Err(Error::Config("distortion_db_per_db must be positive".into()));
        }
        if self.overdrive_margin_db < 0.0 || self.blocker_fluctuation_db < 0.0 || self.metric_jitter_db < 0.0 {
            return Err(Error::Config("margins and standard deviations must be non-negative".into()));
        }
        Ok(())
    }

    /// SNR penalty for a given ADC overdrive; zero at zero, strictly increasing.
    pub fn distortion_penalty_db(&self, overdrive_db: f64) -> f64 {
        self.distortion_db_per_db * overdrive_db
    }
}

/// When the interferer appears relative to the AGC freeze.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arrival {
    BeforeFreeze,
    AfterFreeze,
    Absent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Preamble,
    Payload,
}

impl Phase {
    fn tag(self) -> u64 {
        match self {
            Phase::Preamble => 0x5052_4541,
            Phase::Payload => 0x5041_594c,
        }
    }
}

pub const MIN_POWER_DBM: f64 = -110.0;
pub const MAX_POWER_DBM: f64 = 10.0;

/// One wanted-packet / interferer configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketScenario {
    pub wanted_dbm: f64,
    pub blocker_dbm: Option<f64>,
    pub offset_mhz: f64,
    pub arrival: Arrival,
    pub seed: u64,
}

impl PacketScenario {
    pub fn new(
        wanted_dbm: f64,
        blocker_dbm: Option<f64>,
        offset_mhz: f64,
        arrival: Arrival,
        seed: u64,
    ) -> Result<Self> {
        let in_range = |p: f64| (MIN_POWER_DBM..=MAX_POWER_DBM).contains(&p);
        if !in_range(wanted_dbm) {
            return Err(Error::Usage(format!("wanted power {wanted_dbm} dBm outside [-110, 10]")));
        }
        if let Some(b) = blocker_dbm {
            if !in_range(b) {
                return Err(Error::Usage(format!("blocker power {b} dBm outside [-110, 10]")));
            }
        }
        if !(offset_mhz >= 0.0 && offset_mhz.is_finite()) {
            return Err(Error::Usage(format!("offset {offset_mhz} MHz must be finite and >= 0")));
        }
        if (arrival == Arrival::Absent) != blocker_dbm.is_none() {
            return Err(Error::Usage("arrival must be Absent exactly when the blocker is absent".into()));
        }
        Ok(PacketScenario { wanted_dbm, blocker_dbm, offset_mhz, arrival, seed })
    }

    /// Same configuration with a different arrival time. Absent stays absent.
    pub fn with_arrival(mut self, arrival: Arrival) -> Self {
        if self.blocker_dbm.is_some() && arrival != Arrival::Absent {
            self.arrival = arrival;
        }
        self
    }

    pub fn blocker_present_in(&self, phase: Phase) -> bool {
        matches!((self.arrival, phase), (Arrival::BeforeFreeze, _) | (Arrival::AfterFreeze, Phase::Payload))
    }

    /// Interferer power at the antenna during `phase`, envelope fluctuation included.
    pub fn blocker_in(&self, phase: Phase, budget: &LinkBudget) -> Option<f64> {
        if !self.blocker_present_in(phase) {
            return None;
        }
        let fluct = budget.blocker_fluctuation_db * seed::std_normal(seed::derive(self.seed, &[phase.tag()]));
        self.blocker_dbm.map(|b| b + fluct)
    }
}

/// Internal power levels of the receiver during one phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub phase: Phase,
    pub gain_index: GainIndex,
    /// Post-filter interferer-plus-noise power, referred to the antenna.
    pub in_band_dbm: f64,
    /// Pre-filter total power at the antenna.
    pub wideband_dbm: f64,
    pub snr_db: f64,
    pub overdrive_db: f64,
}

/// Wideband power seen by the LNA detector during `phase`.
pub fn wideband_dbm(scn: &PacketScenario, phase: Phase, budget: &LinkBudget) -> f64 {
    combine2(scn.wanted_dbm, scn.blocker_in(phase, budget))
}

pub fn effective_snr(
    scn: &PacketScenario,
    gain: GainIndex,
    phase: Phase,
    budget: &LinkBudget,
    table: &GainTable,
) -> PhaseState {
    let blocker = scn.blocker_in(phase, budget);
    let wideband = combine2(scn.wanted_dbm, blocker);
    let in_band_interferer = blocker.map(|b| b - budget.rejection.rejection_db(scn.offset_mhz));
    let in_band = combine2(table.noise_floor_dbm(gain), in_band_interferer);
    let overdrive = (wideband + table.gain_db(gain) - table.sat_threshold_dbm()).max(0.0);
    PhaseState {
        phase,
        gain_index: gain,
        in_band_dbm: in_band,
        wideband_dbm: wideband,
        snr_db: scn.wanted_dbm - in_band - budget.distortion_penalty_db(overdrive),
        overdrive_db: overdrive,
    }
}

/// Sync and integrity outcome of one packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detection {
    pub aa_found: bool,
    /// `None` when no Access Address was found: no packet, no CRC check.
    pub crc_ok: Option<bool>,
}

pub fn detect_outcomes(preamble: &PhaseState, payload: &PhaseState, budget: &LinkBudget) -> Detection {
    let aa_found =
        preamble.snr_db >= budget.snr_aa_threshold_db && preamble.overdrive_db <= budget.overdrive_margin_db;
    let crc_ok = aa_found
        .then_some(payload.snr_db >= budget.snr_crc_threshold_db && payload.overdrive_db <= budget.overdrive_margin_db);
    Detection { aa_found, crc_ok }
}
