//! Provenance stamping and reading/writing of pipeline artifacts.

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
}

impl Provenance {
    pub fn of(cfg: &ExperimentConfig) -> Self {
        Provenance { config_hash: cfg.hash(), seed: cfg.seed, tool_version: TOOL_VERSION.to_string() }
    }

    /// Comment lines for the head of text artifacts, without comment markers.
    pub fn header(&self, artifact: &str) -> String {
        format!(
            "{artifact}\nconfig_hash={}\nseed={}\ntool_version={}",
            self.config_hash, self.seed, self.tool_version
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub provenance: Provenance,
    pub data: T,
}

pub fn write_json<T: Serialize>(path: &Path, provenance: &Provenance, data: &T) -> Result<()> {
    #[derive(Serialize)]
    struct Borrowed<'a, T> {
        provenance: &'a Provenance,
        data: &'a T,
    }
    let mut text = serde_json::to_string_pretty(&Borrowed { provenance, data })?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Read an artifact produced by `stage`; a missing file names that stage.
pub fn read_json<T: DeserializeOwned>(path: &Path, stage: &str) -> Result<Envelope<T>> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::MissingStage { stage: stage.to_string(), path: path.to_path_buf() })
        }
        Err(e) => return Err(e.into()),
    };
    serde_json::from_str(&text).map_err(|e| Error::Load { path: path.to_path_buf(), reason: e.to_string() })
}

/// CSV writer whose file starts with `# `-prefixed provenance lines.
pub fn csv_writer(path: &Path, header: &str) -> Result<csv::Writer<std::fs::File>> {
    let mut file = std::fs::File::create(path)?;
    for line in header.lines() {
        writeln!(file, "# {line}")?;
    }
    Ok(csv::Writer::from_writer(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_roundtrip_and_missing_stage() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.json");
        let prov = Provenance::of(&ExperimentConfig::default());
        write_json(&p, &prov, &vec![1.5, 2.0]).unwrap();
        let back: Envelope<Vec<f64>> = read_json(&p, "sweep").unwrap();
        assert_eq!(back.provenance, prov);
        assert_eq!(back.data, vec![1.5, 2.0]);
        match read_json::<Vec<f64>>(&dir.path().join("none.json"), "sweep") {
            Err(Error::MissingStage { stage, .. }) => assert_eq!(stage, "sweep"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_header_is_commented() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        let prov = Provenance::of(&ExperimentConfig::default());
        let mut w = csv_writer(&p, &prov.header("test")).unwrap();
        w.write_record(["a", "b"]).unwrap();
        w.flush().unwrap();
        drop(w);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# test\n# config_hash="));
        assert!(text.ends_with("a,b\n"));
    }
}
