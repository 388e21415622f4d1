//! Synthetic signals following Wi-Fi burst patterns, blocked train/test
//! splitting and sliding-window sample assembly.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::{AgcClass, LabeledConfig};
use crate::receiver::{ReceptionRecord, METRIC_COUNT};
use crate::rxsim::Arrival;
use crate::seed;

/// Interferer power class of one packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Band {
    High,
    Mean,
    Weak,
    Absent,
}

impl Band {
    pub const ALL: [Band; 4] = [Band::High, Band::Mean, Band::Weak, Band::Absent];

    /// High is [-23, 0], Mean [-46, -23), Weak [-70, -46) and everything
    /// below -70 dBm counts as no interferer.
    pub fn of(blocker_dbm: Option<f64>) -> Band {
        match blocker_dbm {
            None => Band::Absent,
            Some(b) if b >= -23.0 => Band::High,
            Some(b) if b >= -46.0 => Band::Mean,
            Some(b) if b >= -70.0 => Band::Weak,
            Some(_) => Band::Absent,
        }
    }

    pub fn contains(self, blocker_dbm: Option<f64>) -> bool {
        Band::of(blocker_dbm) == self
    }

    pub fn name(self) -> &'static str {
        match self {
            Band::High => "high",
            Band::Mean => "mean",
            Band::Weak => "weak",
            Band::Absent => "absent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandRun {
    pub band: Band,
    pub run_length: usize,
}

/// Band activity repeated cyclically over a signal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<BandRun>", into = "Vec<BandRun>")]
pub struct WiFiPattern {
    runs: Vec<BandRun>,
}

impl WiFiPattern {
    pub fn new(runs: Vec<BandRun>) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::Config("Wi-Fi pattern has no band runs".into()));
        }
        if let Some(r) = runs.iter().find(|r| r.run_length == 0) {
            return Err(Error::Config(format!("band run {:?} has zero length", r.band)));
        }
        Ok(WiFiPattern { runs })
    }

    pub fn runs(&self) -> &[BandRun] {
        &self.runs
    }

    pub fn period(&self) -> usize {
        self.runs.iter().map(|r| r.run_length).sum()
    }

    /// Band of packet `k` together with its offset inside the current run.
    pub fn band_at(&self, k: usize) -> (Band, usize) {
        let mut pos = k % self.period();
        for r in &self.runs {
            if pos < r.run_length {
                return (r.band, pos);
            }
            pos -= r.run_length;
        }
        unreachable!("position is reduced modulo the period")
    }
}

impl Default for WiFiPattern {
    fn default() -> Self {
        use Band::*;
        let run = |band, run_length| BandRun { band, run_length };
        WiFiPattern {
            runs: vec![run(High, 40), run(Absent, 10), run(Mean, 40), run(Absent, 10), run(Weak, 40), run(Absent, 10)],
        }
    }
}

impl TryFrom<Vec<BandRun>> for WiFiPattern {
    type Error = Error;

    fn try_from(runs: Vec<BandRun>) -> Result<Self> {
        WiFiPattern::new(runs)
    }
}

impl From<WiFiPattern> for Vec<BandRun> {
    fn from(p: WiFiPattern) -> Self {
        p.runs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalPacket {
    pub band: Band,
    /// Interferer timing for this packet. The first packet of a burst sees
    /// the interferer start after the gain froze.
    pub arrival: Arrival,
    pub labeled: LabeledConfig,
}

impl SignalPacket {
    pub fn record(&self) -> &ReceptionRecord {
        self.labeled.record_for(self.arrival)
    }

    pub fn features(&self) -> [f64; METRIC_COUNT] {
        self.record().metrics.features()
    }

    pub fn label(&self) -> AgcClass {
        self.labeled.agc_optim
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSignal {
    pub reference_wanted_dbm: f64,
    pub pattern: WiFiPattern,
    pub seed: u64,
    pub packets: Vec<SignalPacket>,
}

impl SyntheticSignal {
    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }
}

/// Sequence `length` packets from `pool` following `pattern` cyclically.
///
/// Each band run draws one interferer (level and offset) uniformly from the
/// matching pool entries; every packet of the run then draws among the pool
/// replicates of that interferer.
pub fn synthesize_signal(
    pattern: &WiFiPattern,
    pool: &[LabeledConfig],
    reference_wanted_dbm: f64,
    length: usize,
    seed: u64,
) -> Result<SyntheticSignal> {
    let at_reference: Vec<&LabeledConfig> =
        pool.iter().filter(|l| (l.config.wanted_dbm - reference_wanted_dbm).abs() < 1e-9).collect();
    let subsets: Vec<(Band, Vec<&LabeledConfig>)> = Band::ALL
        .iter()
        .filter(|b| pattern.runs.iter().any(|r| r.band == **b))
        .map(|&b| (b, at_reference.iter().copied().filter(|l| b.contains(l.config.blocker_dbm)).collect()))
        .collect();
    if let Some((band, _)) = subsets.iter().find(|(_, s)| s.is_empty()) {
        return Err(Error::Coverage { band: band.name().to_string(), wanted_dbm: reference_wanted_dbm });
    }

    let mut rng = seed::rng(seed);
    let mut source: Vec<&LabeledConfig> = Vec::new();
    let packets = (0..length)
        .map(|k| {
            let (band, pos) = pattern.band_at(k);
            if pos == 0 || k == 0 {
                // one interferer per burst: fix its level and offset for the run
                let subset = &subsets.iter().find(|(b, _)| *b == band).expect("every pattern band has a subset").1;
                let anchor = subset[rng.random_range(0..subset.len())].config;
                source = subset
                    .iter()
                    .copied()
                    .filter(|l| l.config.blocker_dbm == anchor.blocker_dbm && l.config.offset_mhz == anchor.offset_mhz)
                    .collect();
            }
            let labeled = source[rng.random_range(0..source.len())].clone();
            // sub-band interferers in an idle run are simply always on
            let arrival = match (labeled.config.blocker_dbm, band, pos) {
                (None, ..) => Arrival::Absent,
                (Some(_), Band::Absent, _) => Arrival::BeforeFreeze,
                (Some(_), _, 0) => Arrival::AfterFreeze,
                _ => Arrival::BeforeFreeze,
            };
            SignalPacket { band, arrival, labeled }
        })
        .collect();
    Ok(SyntheticSignal { reference_wanted_dbm, pattern: pattern.clone(), seed, packets })
}

/// Packet-index pieces of one train/test partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<Range<usize>>,
    pub test: Vec<Range<usize>>,
}

impl Split {
    pub fn train_len(&self) -> usize {
        self.train.iter().map(|r| r.len()).sum()
    }

    pub fn test_len(&self) -> usize {
        self.test.iter().map(|r| r.len()).sum()
    }
}

pub const DEFAULT_TEST_FRACTION: f64 = 0.30;

/// Cut `len` packets into `folds` contiguous folds and move one contiguous
/// stretch of `test_frac` of every fold, at a seeded random start, to test.
pub fn blocked_split(len: usize, folds: usize, test_frac: f64, window_len: usize, seed: u64) -> Result<Split> {
    if folds == 0 {
        return Err(Error::Usage("number of folds must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&test_frac) {
        return Err(Error::Usage(format!("test fraction {test_frac} is outside [0, 1)")));
    }
    let mut rng = seed::rng(seed);
    let mut split = Split { train: Vec::new(), test: Vec::new() };
    for f in 0..folds {
        let (lo, hi) = (f * len / folds, (f + 1) * len / folds);
        let fold_len = hi - lo;
        if fold_len <= window_len + 1 {
            return Err(Error::Sizing(format!(
                "fold {f} holds {fold_len} packets, need more than {} for a window of {window_len}",
                window_len + 1
            )));
        }
        let test_len = (test_frac * fold_len as f64).round() as usize;
        let start = lo + rng.random_range(0..=fold_len - test_len);
        let end = start + test_len;
        if start > lo {
            split.train.push(lo..start);
        }
        if test_len > 0 {
            split.test.push(start..end);
        }
        if hi > end {
            split.train.push(end..hi);
        }
    }
    Ok(split)
}

/// Carve the last `frac` of the train packets off as validation pieces.
pub fn hold_out_validation(train: &[Range<usize>], frac: f64) -> (Vec<Range<usize>>, Vec<Range<usize>>) {
    let total: usize = train.iter().map(|r| r.len()).sum();
    let mut remaining = (frac * total as f64).round() as usize;
    let mut keep = train.to_vec();
    let mut val = Vec::new();
    while remaining > 0 {
        let Some(last) = keep.pop() else { break };
        if last.len() <= remaining {
            remaining -= last.len();
            val.push(last);
        } else {
            let cut = last.end - remaining;
            keep.push(last.start..cut);
            val.push(cut..last.end);
            remaining = 0;
        }
    }
    val.reverse();
    (keep, val)
}

/// `window_len` consecutive packets and the class of the packet after them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    /// Packet-major, metric-minor.
    pub features: Vec<f64>,
    pub label: AgcClass,
    pub window_len: usize,
    /// Index of the first packet of the window.
    pub start: usize,
}

impl WindowSample {
    pub fn label_index(&self) -> usize {
        self.start + self.window_len
    }

    pub fn packet_indices(&self) -> Range<usize> {
        self.start..self.label_index() + 1
    }
}

/// Stride-1 windows inside every piece; nothing crosses a piece boundary.
pub fn make_windows(signal: &SyntheticSignal, pieces: &[Range<usize>], window_len: usize) -> Result<Vec<WindowSample>> {
    if window_len == 0 {
        return Err(Error::Usage("window length must be at least 1".into()));
    }
    let mut out = Vec::new();
    for piece in pieces {
        if piece.end > signal.len() {
            return Err(Error::Usage(format!("piece {piece:?} exceeds signal of {} packets", signal.len())));
        }
        if piece.len() <= window_len {
            log::debug!("piece {piece:?} is too short for a window of {window_len}");
            continue;
        }
        for start in piece.start..piece.end - window_len {
            let features =
                signal.packets[start..start + window_len].iter().flat_map(|p| p.features()).collect();
            out.push(WindowSample {
                features,
                label: signal.packets[start + window_len].label(),
                window_len,
                start,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossvalRun {
    pub repeat: usize,
    pub seed: u64,
    pub split: Split,
    /// Test-packet counts per class id, over `gain_levels + 1` classes.
    pub test_class_counts: Vec<usize>,
    pub train_class_counts: Vec<usize>,
}

/// Seed of cross-validation repeat `r`; repeat 0 uses the base seed.
pub fn repeat_seed(seed: u64, repeat: usize) -> u64 {
    if repeat == 0 {
        seed
    } else {
        seed::derive(seed, &[repeat as u64])
    }
}

pub fn crossval_runs(
    signal: &SyntheticSignal,
    folds: usize,
    test_fraction: f64,
    k_repeats: usize,
    window_len: usize,
    gain_levels: usize,
    seed: u64,
) -> Result<Vec<CrossvalRun>> {
    if k_repeats == 0 {
        return Err(Error::Usage("cross-validation needs at least one repeat".into()));
    }
    let count = |pieces: &[Range<usize>]| {
        let mut c = vec![0usize; gain_levels + 1];
        for i in pieces.iter().flat_map(|r| r.clone()) {
            c[signal.packets[i].label().id(gain_levels).min(gain_levels)] += 1;
        }
        c
    };
    (0..k_repeats)
        .map(|repeat| {
            let s = repeat_seed(seed, repeat);
            let split = blocked_split(signal.len(), folds, test_fraction, window_len, s)?;
            let run = CrossvalRun {
                repeat,
                seed: s,
                test_class_counts: count(&split.test),
                train_class_counts: count(&split.train),
                split,
            };
            log::info!("repeat {repeat}: train classes {:?}, test classes {:?}", run.train_class_counts, run.test_class_counts);
            Ok(run)
        })
        .collect()
}

#[cfg(test)]
#[allow(clippy::single_range_in_vec_init)]
mod tests {
    use super::*;
    use crate::labeling::{sweep_dataset, SweepSpec};
    use crate::receiver::Receiver;

    fn pool() -> Vec<LabeledConfig> {
        let spec = SweepSpec {
            wanted_dbm: vec![-60.0],
            blocker_dbm: vec![None, Some(-65.0), Some(-40.0), Some(-30.0), Some(-15.0), Some(-5.0)],
            offsets_mhz: vec![12.0, 22.0],
            replicates: 1,
            seed: 9,
        };
        sweep_dataset(&spec, &Receiver::default()).unwrap()
    }

    #[test]
    fn band_edges() {
        assert_eq!(Band::of(Some(-23.0)), Band::High);
        assert_eq!(Band::of(Some(0.0)), Band::High);
        assert_eq!(Band::of(Some(-23.5)), Band::Mean);
        assert_eq!(Band::of(Some(-46.0)), Band::Mean);
        assert_eq!(Band::of(Some(-46.5)), Band::Weak);
        assert_eq!(Band::of(Some(-70.0)), Band::Weak);
        assert_eq!(Band::of(Some(-70.5)), Band::Absent);
        assert_eq!(Band::of(Some(-72.0)), Band::Absent);
        assert_eq!(Band::of(None), Band::Absent);
    }

    #[test]
    fn pattern_rejects_zero_runs() {
        assert!(WiFiPattern::new(vec![]).is_err());
        assert!(WiFiPattern::new(vec![BandRun { band: Band::High, run_length: 0 }]).is_err());
    }

    #[test]
    fn single_absent_run() {
        let p = WiFiPattern::new(vec![BandRun { band: Band::Absent, run_length: 5 }]).unwrap();
        let s = synthesize_signal(&p, &pool(), -60.0, 5, 1).unwrap();
        assert_eq!(s.len(), 5);
        assert!(s.packets.iter().all(|p| p.labeled.config.blocker_dbm.is_none() && p.arrival == Arrival::Absent));
    }

    #[test]
    fn alternating_runs_follow_pattern() {
        let p = WiFiPattern::new(vec![
            BandRun { band: Band::High, run_length: 3 },
            BandRun { band: Band::Absent, run_length: 7 },
        ])
        .unwrap();
        let s = synthesize_signal(&p, &pool(), -60.0, 20, 2).unwrap();
        let bands: Vec<Band> = s.packets.iter().map(|p| p.band).collect();
        let mut expect = Vec::new();
        for _ in 0..2 {
            expect.extend([Band::High; 3]);
            expect.extend([Band::Absent; 7]);
        }
        assert_eq!(bands, expect);
        assert_eq!(s.packets[0].arrival, Arrival::AfterFreeze);
        assert_eq!(s.packets[1].arrival, Arrival::BeforeFreeze);
        assert!(s.packets.iter().all(|p| p.band.contains(p.labeled.config.blocker_dbm)));
        assert_eq!(s, synthesize_signal(&p, &pool(), -60.0, 20, 2).unwrap());
    }

    #[test]
    fn missing_band_is_a_coverage_error() {
        let p = WiFiPattern::default();
        let only_clean: Vec<LabeledConfig> =
            pool().into_iter().filter(|l| l.config.blocker_dbm.is_none()).collect();
        match synthesize_signal(&p, &only_clean, -60.0, 10, 1) {
            Err(Error::Coverage { band, .. }) => assert_eq!(band, "high"),
            other => panic!("expected coverage error, got {other:?}"),
        }
        assert!(matches!(synthesize_signal(&p, &pool(), -50.0, 10, 1), Err(Error::Coverage { .. })));
    }

    #[test]
    fn one_fold_split() {
        let s = blocked_split(100, 1, 0.3, 10, 5).unwrap();
        assert_eq!(s.test.len(), 1);
        assert_eq!(s.test[0].len(), 30);
        assert_eq!(s.train_len(), 70);
    }

    #[test]
    fn ten_folds_thirty_each() {
        let s = blocked_split(1000, 10, 0.3, 10, 5).unwrap();
        assert_eq!(s.test.len(), 10);
        assert!(s.test.iter().all(|r| r.len() == 30));
    }

    #[test]
    fn seeds_move_the_test_stretch() {
        let starts: std::collections::HashSet<usize> =
            (0..8).map(|s| blocked_split(200, 1, 0.3, 10, s).unwrap().test[0].start).collect();
        assert!(starts.len() > 1);
    }

    #[test]
    fn short_fold_is_a_sizing_error() {
        assert!(matches!(blocked_split(40, 4, 0.3, 10, 1), Err(Error::Sizing(_))));
        assert!(blocked_split(48, 4, 0.3, 10, 1).is_ok());
    }

    #[test]
    fn windows_per_run() {
        let p = WiFiPattern::default();
        let s = synthesize_signal(&p, &pool(), -60.0, 40, 3).unwrap();
        assert_eq!(make_windows(&s, &[0..11], 10).unwrap().len(), 1);
        assert_eq!(make_windows(&s, &[0..10], 10).unwrap().len(), 0);
        let w = make_windows(&s, &[0..25, 30..40], 10).unwrap();
        assert_eq!(w.len(), 15);
        assert_eq!(w[0].features.len(), 10 * METRIC_COUNT);
        assert_eq!(w[0].features[..METRIC_COUNT], s.packets[0].features());
        assert_eq!(w[0].label, s.packets[10].label());
        assert!(w.iter().all(|x| x.packet_indices().end <= 25 || x.start >= 30));
    }

    #[test]
    fn validation_holdout_takes_the_tail() {
        let (keep, val) = hold_out_validation(&[0..50, 80..100], 0.3);
        assert_eq!(keep, vec![0..49]);
        assert_eq!(val, vec![49..50, 80..100]);
    }

    #[test]
    fn single_repeat_matches_blocked_split() {
        let s = synthesize_signal(&WiFiPattern::default(), &pool(), -60.0, 200, 3).unwrap();
        let runs = crossval_runs(&s, 2, DEFAULT_TEST_FRACTION, 1, 10, 8, 77).unwrap();
        assert_eq!(runs.len(), 1);
        assert_eq!(runs[0].split, blocked_split(200, 2, 0.3, 10, 77).unwrap());
        assert_eq!(runs[0].test_class_counts.iter().sum::<usize>(), runs[0].split.test_len());
        assert!(crossval_runs(&s, 2, DEFAULT_TEST_FRACTION, 0, 10, 8, 77).is_err());
    }
}
