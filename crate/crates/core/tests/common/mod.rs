#![allow(clippy::single_range_in_vec_init)]

#![allow(dead_code)]

use agcsim::labeling::{grid, sweep_dataset, LabeledConfig, SweepSpec, DEFAULT_OFFSETS_MHZ};
use agcsim::mlengine::{train, Hyper, TrainedModel};
use agcsim::receiver::{status_of, Receiver, ReceptionStatus};
use agcsim::rxsim::{GainIndex, PacketScenario, Phase};
use agcsim::signalgen::{make_windows, synthesize_signal, SyntheticSignal, WiFiPattern};

/// Labeled pool at -60 dBm wanted, coarse blocker grid, every band covered.
pub fn small_pool(rx: &Receiver) -> Vec<LabeledConfig> {
    let mut blocker: Vec<Option<f64>> = vec![None];
    blocker.extend(grid(-71.0, 0.0, 3.0).into_iter().map(Some));
    let spec = SweepSpec {
        wanted_dbm: vec![-60.0],
        blocker_dbm: blocker,
        offsets_mhz: DEFAULT_OFFSETS_MHZ.to_vec(),
        replicates: 2,
        seed: 11,
    };
    sweep_dataset(&spec, rx).unwrap()
}

pub fn small_signal(rx: &Receiver, len: usize, seed: u64) -> SyntheticSignal {
    synthesize_signal(&WiFiPattern::default(), &small_pool(rx), -60.0, len, seed).unwrap()
}

/// Short training run on the first 70% of a small signal.
pub fn small_model(rx: &Receiver, window_len: usize) -> TrainedModel {
    let sig = small_signal(rx, 800, 5);
    let windows = make_windows(&sig, &[0..560], window_len).unwrap();
    let hyper = Hyper { epochs: 60, ..Hyper::default() };
    train(&windows, &[], rx.gain_table.len(), &hyper).unwrap()
}

fn combine_linear(levels: &[f64]) -> f64 {
    10.0 * levels.iter().map(|l| 10f64.powf(l / 10.0)).sum::<f64>().log10()
}

/// Reception status recomputed from the link-budget definitions, without
/// the crate's phase evaluation.
pub fn oracle_status(rx: &Receiver, scn: &PacketScenario, gain: GainIndex) -> ReceptionStatus {
    let b = &rx.link_budget;
    let t = &rx.gain_table;
    let phase_snr = |phase: Phase| {
        let blocker = scn.blocker_in(phase, b);
        let mut wb = vec![scn.wanted_dbm];
        let mut inband = vec![t.noise_floor_dbm(gain)];
        if let Some(p) = blocker {
            wb.push(p);
            inband.push(p - b.rejection.rejection_db(scn.offset_mhz));
        }
        let over = (combine_linear(&wb) + t.gain_db(gain) - t.sat_threshold_dbm()).max(0.0);
        (scn.wanted_dbm - combine_linear(&inband) - b.distortion_db_per_db * over, over)
    };
    let (snr_pre, over_pre) = phase_snr(Phase::Preamble);
    let (snr_pay, over_pay) = phase_snr(Phase::Payload);
    let aa = snr_pre >= b.snr_aa_threshold_db && over_pre <= b.overdrive_margin_db;
    let crc = !aa || (snr_pay >= b.snr_crc_threshold_db && over_pay <= b.overdrive_margin_db);
    status_of(aa, crc)
}
