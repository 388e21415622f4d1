//! Pipeline stages: sweep, synth, split, train, eval, report and flip.
//!
//! Each `cmd_*` reads the artifacts of earlier stages from the output
//! directory and writes its own, all stamped with the config provenance.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::artifacts::{csv_writer, read_json, write_json, Provenance};
use crate::config::{stage_tag, ClassWeighting, ExperimentConfig};
use crate::error::Result;
use crate::labeling::{counts_per_offset, flip_experiment, sweep_dataset, FlipReport, LabeledConfig};
use crate::mlengine::{balanced_class_weights, evaluate, load_model, save_model, train, write_curve_csv, Evaluation, TrainedModel};
use crate::receiver::{METRIC_COUNT, METRIC_NAMES};
use crate::runtime::{per_sweep, write_gnuplot, write_per_csv, Mode, PerReport};
use crate::signalgen::{crossval_runs, hold_out_validation, make_windows, synthesize_signal, CrossvalRun, SyntheticSignal, WindowSample};

pub const DATASET_JSON: &str = "dataset.json";
pub const DATASET_CSV: &str = "dataset.csv";
pub const SIGNAL_JSON: &str = "signal.json";
pub const SIGNAL_CSV: &str = "signal.csv";
pub const SPLITS_JSON: &str = "splits.json";
pub const WINDOWS_CSV: &str = "windows.csv";
pub const EVAL_JSON: &str = "eval.json";
pub const PER_CSV: &str = "per.csv";
pub const PER_JSON: &str = "per.json";
pub const FLIP_JSON: &str = "flip.json";

pub fn model_file(repeat: usize) -> String {
    format!("model_r{repeat}.json")
}

pub fn curve_file(repeat: usize) -> String {
    format!("curve_r{repeat}.csv")
}

pub fn gnuplot_file(mode: Mode) -> String {
    format!("per_{}.dat", mode.name())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn check_provenance(found: &Provenance, expected: &Provenance, path: &Path) {
    if found.config_hash != expected.config_hash {
        log::warn!("{} was produced by a different configuration ({})", path.display(), found.config_hash);
    }
}

fn read_stage<T: serde::de::DeserializeOwned>(out: &Path, file: &str, stage: &str, prov: &Provenance) -> Result<T> {
    let path = out.join(file);
    let env = read_json::<T>(&path, stage)?;
    check_provenance(&env.provenance, prov, &path);
    Ok(env.data)
}

pub fn label_dataset(cfg: &ExperimentConfig) -> Result<Vec<LabeledConfig>> {
    sweep_dataset(&cfg.sweep_spec(), &cfg.receiver)
}

pub fn synthesize(cfg: &ExperimentConfig, dataset: &[LabeledConfig]) -> Result<SyntheticSignal> {
    let s = &cfg.signal;
    synthesize_signal(&s.pattern, dataset, s.reference_wanted_dbm, s.length, cfg.stage_seed(stage_tag::SYNTH))
}

pub fn crossval(cfg: &ExperimentConfig, signal: &SyntheticSignal) -> Result<Vec<CrossvalRun>> {
    let s = &cfg.signal;
    crossval_runs(signal, s.folds, s.test_fraction, s.repeats, cfg.window_len, cfg.receiver.gain_table.len(), cfg.stage_seed(stage_tag::SPLIT))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepeatWindows {
    pub train: Vec<WindowSample>,
    pub val: Vec<WindowSample>,
    pub test: Vec<WindowSample>,
}

pub fn repeat_windows(cfg: &ExperimentConfig, signal: &SyntheticSignal, run: &CrossvalRun) -> Result<RepeatWindows> {
    let (fit, val) = hold_out_validation(&run.split.train, cfg.signal.validation_fraction);
    Ok(RepeatWindows {
        train: make_windows(signal, &fit, cfg.window_len)?,
        val: make_windows(signal, &val, cfg.window_len)?,
        test: make_windows(signal, &run.split.test, cfg.window_len)?,
    })
}

pub fn train_repeat(cfg: &ExperimentConfig, windows: &RepeatWindows, repeat: usize) -> Result<TrainedModel> {
    let g = cfg.receiver.gain_table.len();
    let mut hyper = cfg.hyper(repeat);
    if cfg.train.class_weighting == ClassWeighting::Balanced {
        let y: Vec<usize> = windows.train.iter().map(|w| w.label.id(g)).collect();
        hyper.class_weights = Some(balanced_class_weights(&y, g + 1));
    }
    train(&windows.train, &windows.val, g, &hyper)
}

pub fn per_report(cfg: &ExperimentConfig, model: Option<&TrainedModel>, modes: &[Mode]) -> Result<PerReport> {
    per_sweep(&cfg.receiver, &cfg.per_sweep_spec(), modes, model, cfg.runtime.countermeasure, cfg.window_len)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetArtifact {
    pub per_offset_counts: Vec<(f64, usize)>,
    pub configs: Vec<LabeledConfig>,
}

pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out)?;
    let prov = Provenance::of(cfg);
    let dataset = label_dataset(cfg)?;
    let counts = counts_per_offset(&dataset);
    for (o, n) in &counts {
        log::info!("offset {o} MHz: {n} configs");
    }
    let json = out.join(DATASET_JSON);
    write_json(&json, &prov, &DatasetArtifact { per_offset_counts: counts, configs: dataset.clone() })?;

    let csv_path = out.join(DATASET_CSV);
    let mut w = csv_writer(&csv_path, &prov.header("labeled individual-packet dataset"))?;
    w.write_record([
        "wanted_dbm", "blocker_dbm", "offset_mhz", "seed", "agc_before", "agc_after", "status_before", "status_after", "agc_optim",
    ])?;
    for l in &dataset {
        let c = &l.config;
        w.write_record([
            c.wanted_dbm.to_string(),
            fmt_opt(c.blocker_dbm),
            c.offset_mhz.to_string(),
            c.seed.to_string(),
            l.agc_before.to_string(),
            l.agc_after.to_string(),
            l.status_before.short().to_string(),
            l.status_after.short().to_string(),
            l.agc_optim.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(vec![json, csv_path])
}

pub fn cmd_synth(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let prov = Provenance::of(cfg);
    let dataset: DatasetArtifact = read_stage(out, DATASET_JSON, "sweep", &prov)?;
    let signal = synthesize(cfg, &dataset.configs)?;
    let json = out.join(SIGNAL_JSON);
    write_json(&json, &prov, &signal)?;

    let csv_path = out.join(SIGNAL_CSV);
    let mut w = csv_writer(&csv_path, &prov.header("synthetic signal"))?;
    let mut head: Vec<String> =
        ["index", "band", "arrival", "wanted_dbm", "blocker_dbm", "offset_mhz", "status", "agc_optim"]
            .iter()
            .map(|s| s.to_string())
            .collect();
    head.extend(METRIC_NAMES.iter().map(|s| s.to_string()));
    w.write_record(&head)?;
    for (k, p) in signal.packets.iter().enumerate() {
        let c = &p.labeled.config;
        let mut row = vec![
            k.to_string(),
            p.band.name().to_string(),
            format!("{:?}", p.arrival),
            c.wanted_dbm.to_string(),
            fmt_opt(c.blocker_dbm),
            c.offset_mhz.to_string(),
            p.record().status.short().to_string(),
            p.label().to_string(),
        ];
        row.extend(p.features().iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(vec![json, csv_path])
}

pub fn cmd_split(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let prov = Provenance::of(cfg);
    let signal: SyntheticSignal = read_stage(out, SIGNAL_JSON, "synth", &prov)?;
    let runs = crossval(cfg, &signal)?;
    let json = out.join(SPLITS_JSON);
    write_json(&json, &prov, &runs)?;

    let csv_path = out.join(WINDOWS_CSV);
    let mut w = csv_writer(&csv_path, &prov.header("sliding-window samples"))?;
    let mut head: Vec<String> = ["repeat", "subset", "start", "label"].iter().map(|s| s.to_string()).collect();
    for k in 0..cfg.window_len {
        head.extend(METRIC_NAMES.iter().map(|m| format!("p{k}_{m}")));
    }
    w.write_record(&head)?;
    for run in &runs {
        let rw = repeat_windows(cfg, &signal, run)?;
        for (subset, set) in [("train", &rw.train), ("val", &rw.val), ("test", &rw.test)] {
            for s in set {
                let mut row = vec![run.repeat.to_string(), subset.to_string(), s.start.to_string(), s.label.to_string()];
                debug_assert_eq!(s.features.len(), cfg.window_len * METRIC_COUNT);
                row.extend(s.features.iter().map(|v| v.to_string()));
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(vec![json, csv_path])
}

pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let prov = Provenance::of(cfg);
    let signal: SyntheticSignal = read_stage(out, SIGNAL_JSON, "synth", &prov)?;
    let runs: Vec<CrossvalRun> = read_stage(out, SPLITS_JSON, "split", &prov)?;
    let mut written = Vec::new();
    for run in &runs {
        let windows = repeat_windows(cfg, &signal, run)?;
        let mut model = train_repeat(cfg, &windows, run.repeat)?;
        model.training_meta.config_hash = Some(prov.config_hash.clone());
        let m = out.join(model_file(run.repeat));
        save_model(&model, &m)?;
        let c = out.join(curve_file(run.repeat));
        write_curve_csv(&model, &prov.header(&format!("training curve, repeat {}", run.repeat)), &c)?;
        written.extend([m, c]);
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatEvaluation {
    pub repeat: usize,
    pub train_windows: usize,
    pub test_windows: usize,
    pub evaluation: Evaluation,
}

pub fn cmd_eval(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let prov = Provenance::of(cfg);
    let signal: SyntheticSignal = read_stage(out, SIGNAL_JSON, "synth", &prov)?;
    let runs: Vec<CrossvalRun> = read_stage(out, SPLITS_JSON, "split", &prov)?;
    let mut evals = Vec::new();
    for run in &runs {
        let model = load_stage_model(out, run.repeat)?;
        let windows = repeat_windows(cfg, &signal, run)?;
        let evaluation = evaluate(&model, &windows.test)?;
        log::info!(
            "repeat {}: accuracy {:.3}, majority baseline {:.3}",
            run.repeat,
            evaluation.accuracy,
            evaluation.majority_baseline
        );
        evals.push(RepeatEvaluation {
            repeat: run.repeat,
            train_windows: windows.train.len(),
            test_windows: windows.test.len(),
            evaluation,
        });
    }
    let json = out.join(EVAL_JSON);
    write_json(&json, &prov, &evals)?;
    Ok(vec![json])
}

fn load_stage_model(out: &Path, repeat: usize) -> Result<TrainedModel> {
    let path = out.join(model_file(repeat));
    match load_model(&path) {
        Err(crate::Error::NotFound(path)) => Err(crate::Error::MissingStage { stage: "train".into(), path }),
        other => other,
    }
}

pub fn cmd_report(cfg: &ExperimentConfig, out: &Path, modes: &[Mode]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out)?;
    let prov = Provenance::of(cfg);
    let model = if modes.contains(&Mode::Scenario4) {
        Some(load_stage_model(out, cfg.runtime.model_repeat)?)
    } else {
        None
    };
    let report = per_report(cfg, model.as_ref(), modes)?;
    let json = out.join(PER_JSON);
    write_json(&json, &prov, &report)?;
    let csv_path = out.join(PER_CSV);
    write_per_csv(&report, &prov.header("PER versus interferer level"), &csv_path)?;
    let mut written = vec![json, csv_path];
    for &m in modes {
        let p = out.join(gnuplot_file(m));
        write_gnuplot(&report, m, &prov.header("PER versus interferer level"), &p)?;
        written.push(p);
    }
    Ok(written)
}

pub fn cmd_flip(cfg: &ExperimentConfig, out: &Path) -> Result<(FlipReport, Vec<PathBuf>)> {
    std::fs::create_dir_all(out)?;
    let prov = Provenance::of(cfg);
    let dataset: DatasetArtifact = read_stage(out, DATASET_JSON, "sweep", &prov)?;
    let report = flip_experiment(&dataset.configs, &cfg.receiver)?;
    let json = out.join(FLIP_JSON);
    write_json(&json, &prov, &report)?;
    Ok((report, vec![json]))
}

/// Every stage in order.
pub fn run_all(cfg: &ExperimentConfig, out: &Path, modes: &[Mode]) -> Result<Vec<PathBuf>> {
    let mut written = cmd_sweep(cfg, out)?;
    written.extend(cmd_synth(cfg, out)?);
    written.extend(cmd_split(cfg, out)?);
    written.extend(cmd_train(cfg, out)?);
    written.extend(cmd_eval(cfg, out)?);
    written.extend(cmd_report(cfg, out, modes)?);
    written.extend(cmd_flip(cfg, out)?.1);
    Ok(written)
}
