//! Packet-by-packet replay with the native AGC alone (Reference) or with the
//! model's predicted code applied (Scenario 4), and PER sweeps.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::AgcClass;
use crate::mlengine::TrainedModel;
use crate::receiver::{receive_packet, GainControl, ReceptionRecord, Receiver, METRIC_COUNT};
use crate::rxsim::{Arrival, PacketScenario};
use crate::seed;
use crate::signalgen::SyntheticSignal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Reference,
    Scenario4,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Reference => "reference",
            Mode::Scenario4 => "scenario4",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Countermeasure {
    #[default]
    None,
    /// Blacklist the channel after this many consecutive X predictions.
    BlacklistOnX { threshold: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuntimeScenario {
    pub mode: Mode,
    #[serde(default)]
    pub countermeasure: Countermeasure,
}

impl RuntimeScenario {
    pub fn reference() -> Self {
        RuntimeScenario { mode: Mode::Reference, countermeasure: Countermeasure::None }
    }

    pub fn scenario4() -> Self {
        RuntimeScenario { mode: Mode::Scenario4, countermeasure: Countermeasure::None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountermeasureAction {
    None,
    BlacklistChannel,
}

pub fn countermeasure_hook(consecutive_x: usize, threshold: usize) -> Result<CountermeasureAction> {
    if threshold == 0 {
        return Err(Error::Usage("countermeasure threshold must be at least 1".into()));
    }
    Ok(if consecutive_x >= threshold { CountermeasureAction::BlacklistChannel } else { CountermeasureAction::None })
}

/// Where metrics are captured within a packet, relative to sync.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CapturePoint {
    /// End of preamble, when the gain freezes.
    T1,
    /// Middle of the payload.
    T2,
    /// End of packet; triggers the prediction for the next packet.
    T3,
}

pub const METRICS_SCHEDULE: [CapturePoint; 3] = [CapturePoint::T1, CapturePoint::T2, CapturePoint::T3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketLog {
    pub index: usize,
    /// Class predicted at the end of the previous packet and applied here.
    pub applied_prediction: Option<AgcClass>,
    pub action: CountermeasureAction,
    pub record: ReceptionRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub mode: Mode,
    pub packets: Vec<PacketLog>,
    pub packets_sent: usize,
    pub packets_good: usize,
    pub per_percent: f64,
    pub predictions_made: usize,
    pub buffer_resets: usize,
    pub blacklist_events: usize,
}

/// Over-the-air conditions of a synthetic signal, reseeded per packet so a
/// replay draws fresh fluctuations even when the pool repeats a config.
pub fn scenarios_of(signal: &SyntheticSignal) -> Result<Vec<PacketScenario>> {
    signal
        .packets
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let c = &p.labeled.config;
            PacketScenario::new(c.wanted_dbm, c.blocker_dbm, c.offset_mhz, p.arrival, seed::derive(signal.seed, &[k as u64]))
        })
        .collect()
}

fn check_model(rx: &Receiver, model: &TrainedModel, window_len: usize) -> Result<()> {
    if model.window_len() != window_len {
        return Err(Error::Config(format!(
            "model expects windows of {} packets, runtime buffer holds {window_len}",
            model.window_len()
        )));
    }
    if model.gain_levels() != rx.gain_table.len() {
        return Err(Error::Config(format!(
            "model predicts {} gain codes, receiver has {}",
            model.gain_levels(),
            rx.gain_table.len()
        )));
    }
    Ok(())
}

/// Replay `packets` in order. In Scenario 4 the class predicted at the end of
/// packet k-1 caps the warm-up and replaces the frozen code of packet k.
pub fn run_signal(
    rx: &Receiver,
    packets: &[PacketScenario],
    model: Option<&TrainedModel>,
    scenario: RuntimeScenario,
    window_len: usize,
) -> Result<RunOutput> {
    if window_len == 0 {
        return Err(Error::Usage("window length must be at least 1".into()));
    }
    let model = match scenario.mode {
        Mode::Reference => None,
        Mode::Scenario4 => {
            let m = model.ok_or_else(|| Error::Config("Scenario 4 needs a trained model".into()))?;
            check_model(rx, m, window_len)?;
            Some(m)
        }
    };
    if let Countermeasure::BlacklistOnX { threshold } = scenario.countermeasure {
        countermeasure_hook(0, threshold)?;
    }

    let table = &rx.gain_table;
    let mut history: VecDeque<[f64; METRIC_COUNT]> = VecDeque::with_capacity(window_len + 1);
    let mut pending: Option<AgcClass> = None;
    let mut consecutive_x = 0usize;
    let mut out = RunOutput {
        mode: scenario.mode,
        packets: Vec::with_capacity(packets.len()),
        packets_sent: packets.len(),
        packets_good: 0,
        per_percent: 0.0,
        predictions_made: 0,
        buffer_resets: 0,
        blacklist_events: 0,
    };
    for (k, scn) in packets.iter().enumerate() {
        let applied = pending.take();
        let mut action = CountermeasureAction::None;
        let control = match applied {
            Some(AgcClass::Gain(g)) => {
                consecutive_x = 0;
                let g = table.clamp(g.0);
                GainControl { upper_limit: g, replace: Some(g) }
            }
            Some(AgcClass::X) => {
                consecutive_x += 1;
                if let Countermeasure::BlacklistOnX { threshold } = scenario.countermeasure {
                    action = countermeasure_hook(consecutive_x, threshold)?;
                }
                GainControl::native(table)
            }
            None => GainControl::native(table),
        };
        if action == CountermeasureAction::BlacklistChannel {
            out.blacklist_events += 1;
        }

        let record = receive_packet(rx, scn, control);
        // the freeze of this packet reinitializes the metrics buffer
        out.buffer_resets += 1;
        out.packets_good += usize::from(record.status.is_good());

        history.push_back(record.metrics.features());
        if history.len() > window_len {
            history.pop_front();
        }
        if let Some(m) = model {
            if history.len() == window_len {
                let flat: Vec<f64> = history.iter().flatten().copied().collect();
                pending = Some(m.predict_features(&flat)?.class);
                out.predictions_made += 1;
            }
        }
        out.packets.push(PacketLog { index: k, applied_prediction: applied, action, record });
    }
    out.per_percent = per_percent(out.packets_good, out.packets_sent);
    Ok(out)
}

pub fn per_percent(good: usize, sent: usize) -> f64 {
    if sent == 0 {
        0.0
    } else {
        100.0 * (sent - good) as f64 / sent as f64
    }
}

/// Continuous-interferer PER sweep settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerSweepSpec {
    pub wanted_dbm: f64,
    pub offset_mhz: f64,
    pub packets: usize,
    pub blocker_dbm: Vec<f64>,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for PerSweepSpec {
    fn default() -> Self {
        PerSweepSpec {
            wanted_dbm: -60.0,
            offset_mhz: 12.0,
            packets: 50,
            blocker_dbm: crate::labeling::grid(-41.0, -11.0, 6.0),
            repetitions: 3,
            seed: 1,
        }
    }
}

impl PerSweepSpec {
    /// Packets of repetition `rep` at `level`, shared by every mode.
    pub fn signal(&self, level: f64, rep: usize) -> Result<Vec<PacketScenario>> {
        let s = seed::derive(self.seed, &[seed::f64_tag(level), rep as u64]);
        (0..self.packets)
            .map(|k| {
                PacketScenario::new(self.wanted_dbm, Some(level), self.offset_mhz, Arrival::BeforeFreeze, seed::derive(s, &[k as u64]))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerRow {
    pub blocker_dbm: f64,
    pub mode: Mode,
    pub packets_sent: usize,
    pub packets_good: usize,
    pub per_percent: f64,
    pub repetitions: usize,
    /// Sample standard deviation of the per-repetition PER.
    pub per_std: f64,
    pub per_runs: Vec<f64>,
    pub blacklist_events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerReport {
    pub rows: Vec<PerRow>,
}

impl PerReport {
    pub fn row(&self, blocker_dbm: f64, mode: Mode) -> Option<&PerRow> {
        self.rows.iter().find(|r| r.blocker_dbm == blocker_dbm && r.mode == mode)
    }

    pub fn levels(&self) -> Vec<f64> {
        let mut v: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !v.contains(&r.blocker_dbm) {
                v.push(r.blocker_dbm);
            }
        }
        v
    }
}

pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

pub fn per_sweep(
    rx: &Receiver,
    spec: &PerSweepSpec,
    modes: &[Mode],
    model: Option<&TrainedModel>,
    scenario_countermeasure: Countermeasure,
    window_len: usize,
) -> Result<PerReport> {
    if spec.repetitions == 0 {
        return Err(Error::Usage("PER sweep needs at least one repetition".into()));
    }
    let cells: Vec<(f64, Mode, usize)> = spec
        .blocker_dbm
        .iter()
        .flat_map(|&l| modes.iter().flat_map(move |&m| (0..spec.repetitions).map(move |r| (l, m, r))))
        .collect();
    let runs: Vec<RunOutput> = cells
        .par_iter()
        .map(|&(level, mode, rep)| {
            let packets = spec.signal(level, rep)?;
            let scenario = RuntimeScenario { mode, countermeasure: scenario_countermeasure };
            run_signal(rx, &packets, model, scenario, window_len)
        })
        .collect::<Result<_>>()?;

    let rows = cells
        .chunks(spec.repetitions)
        .zip(runs.chunks(spec.repetitions))
        .map(|(cell, outs)| {
            let (blocker_dbm, mode, _) = cell[0];
            let sent: usize = outs.iter().map(|o| o.packets_sent).sum();
            let good: usize = outs.iter().map(|o| o.packets_good).sum();
            let per_runs: Vec<f64> = outs.iter().map(|o| o.per_percent).collect();
            PerRow {
                blocker_dbm,
                mode,
                packets_sent: sent,
                packets_good: good,
                per_percent: per_percent(good, sent),
                repetitions: spec.repetitions,
                per_std: sample_std(&per_runs),
                per_runs,
                blacklist_events: outs.iter().map(|o| o.blacklist_events).sum(),
            }
        })
        .collect();
    Ok(PerReport { rows })
}

/// One row per level: `blocker_dbm, per_ref, per_s4, per_std_ref, per_std_s4`.
/// Columns of a mode that was not run are left empty.
pub fn write_per_csv(report: &PerReport, header_comment: &str, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    for line in header_comment.lines() {
        writeln!(file, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["blocker_dbm", "per_ref", "per_s4", "per_std_ref", "per_std_s4"])?;
    let fmt = |r: Option<&PerRow>, f: fn(&PerRow) -> f64| r.map_or(String::new(), |r| format!("{:.4}", f(r)));
    for level in report.levels() {
        let r = report.row(level, Mode::Reference);
        let s = report.row(level, Mode::Scenario4);
        w.write_record([
            format!("{level}"),
            fmt(r, |r| r.per_percent),
            fmt(s, |r| r.per_percent),
            fmt(r, |r| r.per_std),
            fmt(s, |r| r.per_std),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Two-column `blocker_dbm per_percent` data for plotting one mode.
pub fn write_gnuplot(report: &PerReport, mode: Mode, header_comment: &str, path: &Path) -> Result<()> {
    let mut out = String::new();
    for line in header_comment.lines() {
        out.push_str(&format!("# {line}\n"));
    }
    out.push_str(&format!("# blocker_dbm per_percent ({})\n", mode.name()));
    for r in report.rows.iter().filter(|r| r.mode == mode) {
        out.push_str(&format!("{} {:.4}\n", r.blocker_dbm, r.per_percent));
    }
    std::fs::write(path, out)?;
    Ok(())
}
