use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Result;
use est_core::io::write_atomic;
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub version: String,
    pub out_dir: PathBuf,
    pub started_unix_s: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finished_unix_s: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
    pub outputs: Vec<String>,
    #[serde(skip)]
    clock: Option<Instant>,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    pub fn start(command: &str, config: &Path, seed: Option<u64>, threads: Option<usize>, out_dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(out_dir)?;
        let m = RunManifest {
            command: command.to_string(),
            config: config.to_path_buf(),
            seed,
            threads,
            version: env!("CARGO_PKG_VERSION").to_string(),
            out_dir: out_dir.to_path_buf(),
            started_unix_s: unix_now(),
            finished_unix_s: None,
            wall_time_s: None,
            outputs: Vec::new(),
            clock: Some(Instant::now()),
        };
        m.write()?;
        Ok(m)
    }

    fn write(&self) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        write_atomic(&self.out_dir.join("manifest.json"), text.as_bytes())?;
        Ok(())
    }

    /// Writes one output file atomically and records it.
    pub fn output(&mut self, name: &str, contents: &str) -> Result<()> {
        write_atomic(&self.out_dir.join(name), contents.as_bytes())?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.finished_unix_s = Some(unix_now());
        self.wall_time_s = self.clock.map(|c| c.elapsed().as_secs_f64());
        self.write()
    }
}
