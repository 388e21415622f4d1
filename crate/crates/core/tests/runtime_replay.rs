mod common;

use agcsim::labeling::AgcClass;
use agcsim::receiver::Receiver;
use agcsim::rxsim::{Arrival, PacketScenario};
use agcsim::runtime::{
    countermeasure_hook, per_sweep, run_signal, scenarios_of, Countermeasure, CountermeasureAction, Mode, PerSweepSpec,
    RuntimeScenario,
};
use agcsim::seed;

const N: usize = 10;

fn continuous(level: Option<f64>, count: usize, seed: u64) -> Vec<PacketScenario> {
    let arrival = if level.is_some() { Arrival::BeforeFreeze } else { Arrival::Absent };
    (0..count)
        .map(|k| PacketScenario::new(-60.0, level, 12.0, arrival, seed::derive(seed, &[k as u64])).unwrap())
        .collect()
}

#[test]
fn clean_channel_has_no_errors_in_either_mode() {
    let rx = Receiver::default();
    let model = common::small_model(&rx, N);
    let packets = continuous(None, 60, 1);
    for scenario in [RuntimeScenario::reference(), RuntimeScenario::scenario4()] {
        let out = run_signal(&rx, &packets, Some(&model), scenario, N).unwrap();
        assert_eq!(out.per_percent, 0.0, "{:?}", scenario.mode);
    }
}

#[test]
fn negligible_interferer_costs_nothing() {
    let rx = Receiver::default();
    let model = common::small_model(&rx, N);
    let spec = PerSweepSpec { blocker_dbm: vec![-100.0], ..PerSweepSpec::default() };
    let report = per_sweep(&rx, &spec, &[Mode::Reference, Mode::Scenario4], Some(&model), Countermeasure::None, N).unwrap();
    assert!(report.rows.iter().all(|r| r.per_percent == 0.0));
}

#[test]
fn prediction_depends_only_on_past_packets() {
    let rx = Receiver::default();
    let model = common::small_model(&rx, N);
    let sig = common::small_signal(&rx, 400, 8);
    let packets = scenarios_of(&sig).unwrap();
    let full = run_signal(&rx, &packets, Some(&model), RuntimeScenario::scenario4(), N).unwrap();
    // truncating the future leaves every applied prediction unchanged
    for cut in [N + 1, 57, 200] {
        let head = run_signal(&rx, &packets[..cut], Some(&model), RuntimeScenario::scenario4(), N).unwrap();
        assert_eq!(head.packets[..], full.packets[..cut]);
    }
    let mut reversed = packets.clone();
    reversed.reverse();
    let back = run_signal(&rx, &reversed, Some(&model), RuntimeScenario::scenario4(), N).unwrap();
    let applied = |o: &agcsim::runtime::RunOutput| o.packets.iter().map(|p| p.applied_prediction).collect::<Vec<_>>();
    assert_ne!(applied(&full), applied(&back));
}

#[test]
fn buffer_discipline_and_cold_start() {
    let rx = Receiver::default();
    let model = common::small_model(&rx, N);
    let packets = continuous(Some(-35.0), 50, 4);
    let out = run_signal(&rx, &packets, Some(&model), RuntimeScenario::scenario4(), N).unwrap();
    assert_eq!(out.buffer_resets, 50);
    assert_eq!(out.predictions_made, 50 - N + 1);
    assert!(out.packets[..N].iter().all(|p| p.applied_prediction.is_none()));
    assert!(out.packets[N..].iter().all(|p| p.applied_prediction.is_some()));
    for p in &out.packets[N..] {
        if let Some(AgcClass::Gain(g)) = p.applied_prediction {
            assert_eq!(p.record.frozen_index, g);
        }
    }
}

#[test]
fn reference_ignores_the_model() {
    let rx = Receiver::default();
    let model = common::small_model(&rx, N);
    let packets = continuous(Some(-29.0), 50, 6);
    let with = run_signal(&rx, &packets, Some(&model), RuntimeScenario::reference(), N).unwrap();
    let without = run_signal(&rx, &packets, None, RuntimeScenario::reference(), N).unwrap();
    assert_eq!(with, without);
    assert_eq!(with.predictions_made, 0);
}

#[test]
fn scenario4_requires_a_matching_model() {
    let rx = Receiver::default();
    let packets = continuous(None, 20, 2);
    assert!(run_signal(&rx, &packets, None, RuntimeScenario::scenario4(), N).is_err());
    let model = common::small_model(&rx, 5);
    assert!(run_signal(&rx, &packets, Some(&model), RuntimeScenario::scenario4(), N).is_err());
}

#[test]
fn late_saturating_interferer_breaks_reference_reception() {
    let rx = Receiver::default();
    let scn = PacketScenario::new(-70.0, Some(-5.0), 12.0, Arrival::AfterFreeze, 3).unwrap();
    let out = run_signal(&rx, &[scn], None, RuntimeScenario::reference(), N).unwrap();
    assert!(!out.packets[0].record.status.is_good());
}

#[test]
fn countermeasure_thresholds() {
    assert_eq!(countermeasure_hook(0, 3).unwrap(), CountermeasureAction::None);
    assert_eq!(countermeasure_hook(2, 3).unwrap(), CountermeasureAction::None);
    assert_eq!(countermeasure_hook(3, 3).unwrap(), CountermeasureAction::BlacklistChannel);
    assert!(countermeasure_hook(1, 0).is_err());
}

#[test]
fn per_sweep_is_reproducible() {
    let rx = Receiver::default();
    let model = common::small_model(&rx, N);
    let spec = PerSweepSpec { blocker_dbm: vec![-41.0, -23.0], repetitions: 2, ..PerSweepSpec::default() };
    let modes = [Mode::Reference, Mode::Scenario4];
    let cm = Countermeasure::BlacklistOnX { threshold: 2 };
    let a = per_sweep(&rx, &spec, &modes, Some(&model), cm, N).unwrap();
    let b = per_sweep(&rx, &spec, &modes, Some(&model), cm, N).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.rows.len(), 4);
    assert!(a.rows.iter().all(|r| (0.0..=100.0).contains(&r.per_percent)));
}
