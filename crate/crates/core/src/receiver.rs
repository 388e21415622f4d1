//! Packet reception: AGC, phase evaluation, outcome classification and the
//! metrics the frame-acquisition block reports for each packet.

use serde::{Deserialize, Serialize};

use crate::agc::{run_preamble_agc, AgcConfig};
use crate::error::Result;
use crate::rxsim::{
    combine2, detect_outcomes, effective_snr, Detection, GainIndex, GainTable, LinkBudget, PacketScenario, Phase, PhaseState,
};
use crate::seed;

/// Packet reception status derived from the Access-Address and CRC flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReceptionStatus {
    NoReception,
    RadioError,
    BadReception,
    GoodReception,
}

impl ReceptionStatus {
    pub fn is_good(self) -> bool {
        self == ReceptionStatus::GoodReception
    }

    pub fn short(self) -> &'static str {
        match self {
            ReceptionStatus::NoReception => "NR",
            ReceptionStatus::RadioError => "RE",
            ReceptionStatus::BadReception => "BR",
            ReceptionStatus::GoodReception => "GR",
        }
    }
}

/// `crc_passed` is true when the CRC check raised no error. Without an
/// Access Address a raised CRC error flag means the radio misbehaved.
pub fn status_of(aa_found: bool, crc_passed: bool) -> ReceptionStatus {
    match (aa_found, crc_passed) {
        (false, true) => ReceptionStatus::NoReception,
        (false, false) => ReceptionStatus::RadioError,
        (true, true) => ReceptionStatus::GoodReception,
        (true, false) => ReceptionStatus::BadReception,
    }
}

/// CRC flag as reported: with no packet there is no check and no error.
pub fn crc_flag(detection: &Detection) -> bool {
    detection.crc_ok.unwrap_or(true)
}

pub fn status_of_detection(detection: &Detection) -> ReceptionStatus {
    status_of(detection.aa_found, crc_flag(detection))
}

pub const METRIC_COUNT: usize = 7;
pub const METRIC_NAMES: [&str; METRIC_COUNT] =
    ["rssi_wb_dbm", "rssi_nb_dbm", "snr_db", "lqi", "crc_flag", "aa_flag", "frozen_index"];

/// SNR reported for a packet that was never synchronized.
pub const SNR_SENTINEL_DB: f64 = -30.0;
const LQI_SNR_FLOOR_DB: f64 = -20.0;
const LQI_SNR_SPAN_DB: f64 = 50.0;

/// Link quality indicator: SNR mapped linearly onto 0..=255 over [-20, 30] dB.
pub fn lqi_from_snr(snr_db: f64) -> u8 {
    (255.0 * (snr_db - LQI_SNR_FLOOR_DB) / LQI_SNR_SPAN_DB).round().clamp(0.0, 255.0) as u8
}

/// Capture at the AGC freeze / sync event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct T1Capture {
    pub rssi_wb_dbm: f64,
    pub frozen_index: GainIndex,
    pub noise_floor_dbm: f64,
    pub aa_found: bool,
}

/// Mid-payload capture. Narrowband quantities exist only after sync.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct T2Capture {
    pub rssi_wb_dbm: f64,
    pub rssi_nb_dbm: Option<f64>,
    pub snr_db: Option<f64>,
}

/// End-of-packet capture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct T3Capture {
    pub crc_ok: Option<bool>,
    pub lqi: Option<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Captures {
    pub t1: T1Capture,
    pub t2: T2Capture,
    pub t3: T3Capture,
}

/// Per-packet metrics fed to the predictor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsVector {
    pub rssi_wb_dbm: f64,
    pub rssi_nb_dbm: Option<f64>,
    pub snr_db: Option<f64>,
    pub lqi: Option<u8>,
    pub crc_flag: bool,
    pub aa_flag: bool,
    pub frozen_index: GainIndex,
    /// Noise floor of the frozen code; stands in for `rssi_nb_dbm` when unsynchronized.
    pub noise_floor_dbm: f64,
}

impl MetricsVector {
    pub fn assemble(t1: &T1Capture, t2: &T2Capture, t3: &T3Capture) -> Self {
        MetricsVector {
            rssi_wb_dbm: t2.rssi_wb_dbm,
            rssi_nb_dbm: t2.rssi_nb_dbm,
            snr_db: t2.snr_db,
            lqi: t3.lqi,
            crc_flag: t3.crc_ok.unwrap_or(true),
            aa_flag: t1.aa_found,
            frozen_index: t1.frozen_index,
            noise_floor_dbm: t1.noise_floor_dbm,
        }
    }

    /// Numeric feature row, in `METRIC_NAMES` order, with sentinels for
    /// quantities that do not exist without sync.
    pub fn features(&self) -> [f64; METRIC_COUNT] {
        [
            self.rssi_wb_dbm,
            self.rssi_nb_dbm.unwrap_or(self.noise_floor_dbm),
            self.snr_db.unwrap_or(SNR_SENTINEL_DB),
            self.lqi.map_or(0.0, f64::from),
            f64::from(u8::from(self.crc_flag)),
            f64::from(u8::from(self.aa_flag)),
            self.frozen_index.0 as f64,
        ]
    }

    pub fn status(&self) -> ReceptionStatus {
        status_of(self.aa_flag, self.crc_flag)
    }
}

/// Physical configuration of the simulated receiver.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Receiver {
    pub gain_table: GainTable,
    pub link_budget: LinkBudget,
    pub agc: AgcConfig,
}

impl Receiver {
    pub fn validate(&self) -> Result<()> {
        self.link_budget.validate()?;
        self.agc.validate()
    }

    /// Native AGC result for `scn` under `upper_limit`.
    pub fn native_index(&self, scn: &PacketScenario, upper_limit: GainIndex) -> GainIndex {
        run_preamble_agc(scn, upper_limit, &self.gain_table, &self.link_budget, &self.agc)
    }

    pub fn phase(&self, scn: &PacketScenario, gain: GainIndex, phase: Phase) -> PhaseState {
        effective_snr(scn, gain, phase, &self.link_budget, &self.gain_table)
    }

    /// Outcome of receiving `scn` with `gain` applied in both phases.
    pub fn outcome_at(&self, scn: &PacketScenario, gain: GainIndex) -> ReceptionStatus {
        let pre = self.phase(scn, gain, Phase::Preamble);
        let pay = self.phase(scn, gain, Phase::Payload);
        status_of_detection(&detect_outcomes(&pre, &pay, &self.link_budget))
    }
}

/// How the gain of one packet is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GainControl {
    /// Warm-up code and cap of the native loop.
    pub upper_limit: GainIndex,
    /// Code that replaces the native result at freeze, if any.
    pub replace: Option<GainIndex>,
}

impl GainControl {
    pub fn native(table: &GainTable) -> Self {
        GainControl { upper_limit: table.max_index(), replace: None }
    }

    pub fn forced(table: &GainTable, index: GainIndex) -> Self {
        GainControl { upper_limit: table.max_index(), replace: Some(table.clamp(index.0)) }
    }
}

/// Everything observed about one packet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReceptionRecord {
    pub scenario: PacketScenario,
    /// Code the native loop froze on.
    pub native_index: GainIndex,
    /// Code actually applied after freeze.
    pub frozen_index: GainIndex,
    pub status: ReceptionStatus,
    pub preamble: PhaseState,
    pub payload: PhaseState,
    pub captures: Captures,
    pub metrics: MetricsVector,
}

const JITTER_WB_T1: u64 = 0x7431;
const JITTER_WB_T2: u64 = 0x7432;
const JITTER_NB: u64 = 0x6e62;
const JITTER_SNR: u64 = 0x736e;

fn jitter(scn: &PacketScenario, budget: &LinkBudget, tag: u64) -> f64 {
    budget.metric_jitter_db * seed::std_normal(seed::derive(scn.seed, &[tag]))
}

/// Reported values at the three capture points for a packet received with `gain`.
pub fn capture(rx: &Receiver, scn: &PacketScenario, gain: GainIndex) -> (PhaseState, PhaseState, Captures) {
    let budget = &rx.link_budget;
    let pre = rx.phase(scn, gain, Phase::Preamble);
    let pay = rx.phase(scn, gain, Phase::Payload);
    let detection = detect_outcomes(&pre, &pay, budget);
    let t1 = T1Capture {
        rssi_wb_dbm: pre.wideband_dbm + jitter(scn, budget, JITTER_WB_T1),
        frozen_index: gain,
        noise_floor_dbm: rx.gain_table.noise_floor_dbm(gain),
        aa_found: detection.aa_found,
    };
    let synced = detection.aa_found;
    let snr = synced.then(|| pay.snr_db + jitter(scn, budget, JITTER_SNR));
    let rssi_nb =
        synced.then(|| combine2(scn.wanted_dbm, Some(pay.in_band_dbm)) + jitter(scn, budget, JITTER_NB));
    let t2 = T2Capture { rssi_wb_dbm: pay.wideband_dbm + jitter(scn, budget, JITTER_WB_T2), rssi_nb_dbm: rssi_nb, snr_db: snr };
    let t3 = T3Capture { crc_ok: detection.crc_ok, lqi: snr.map(lqi_from_snr) };
    (pre, pay, Captures { t1, t2, t3 })
}

pub fn receive_packet(rx: &Receiver, scn: &PacketScenario, control: GainControl) -> ReceptionRecord {
    let native = rx.native_index(scn, control.upper_limit);
    let applied = control.replace.map_or(native, |g| rx.gain_table.clamp(g.0));
    let (preamble, payload, captures) = capture(rx, scn, applied);
    let metrics = MetricsVector::assemble(&captures.t1, &captures.t2, &captures.t3);
    ReceptionRecord {
        scenario: *scn,
        native_index: native,
        frozen_index: applied,
        status: metrics.status(),
        preamble,
        payload,
        captures,
        metrics,
    }
}
