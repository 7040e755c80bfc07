use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct StepTiming {
    pub step: String,
    pub seconds: f64,
}

/// Run record written next to the outputs. Timings vary between runs;
/// every other field is a function of the configuration.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    pub artifact_version: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub timings: Vec<StepTiming>,
    pub verdicts: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub exit_code: i32,
}

impl RunManifest {
    pub fn new(command: &str, config_digest: String, seed: u64, threads: Option<usize>) -> Self {
        Self {
            command: command.to_string(),
            config_digest,
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            threads,
            timings: Vec::new(),
            verdicts: BTreeMap::new(),
            outputs: Vec::new(),
            exit_code: 0,
        }
    }

    pub fn time<T>(&mut self, step: &str, op: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = op();
        self.timings.push(StepTiming { step: step.to_string(), seconds: start.elapsed().as_secs_f64() });
        out
    }
}
