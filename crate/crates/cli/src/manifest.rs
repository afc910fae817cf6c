use std::fs;
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use graphwave_core::graph::to_json;
use graphwave_core::MetricGraph;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::SCHEMA_VERSION;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one run, written next to its artifacts.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub schema_version: String,
    pub command: String,
    pub parameters: Value,
    /// SHA-256 of the canonical graph JSON, when the command reads a graph.
    pub graph_sha256: Option<String>,
    pub tool_version: String,
    pub seed: u64,
    pub started_at: String,
    pub finished_at: String,
    /// Files written to the output directory, in creation order.
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, parameters: Value, graph_sha256: Option<String>, seed: u64, started: DateTime<Utc>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.to_string(),
            command: command.to_string(),
            parameters,
            graph_sha256,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            started_at: timestamp(started),
            finished_at: timestamp(Utc::now()),
            artifacts: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn read(dir: &Path) -> std::io::Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Hash of the graph's canonical serialization, so that formatting changes
/// in the input file do not change it.
pub fn graph_hash(g: &MetricGraph) -> String {
    hex::encode(Sha256::digest(to_json(g).as_bytes()))
}
