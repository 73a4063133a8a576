use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{data_err, Result, TradeError};

/// One evaluation result with everything needed to interpret it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub metric: String,
    pub value: f64,
    /// Standard error or standard deviation, as named in `protocol`.
    pub uncertainty: Option<f64>,
    /// Secondary values (component MSEs, masses, ...).
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub values: IndexMap<String, f64>,
    pub protocol: IndexMap<String, Value>,
    pub seed: u64,
}

impl EvalReport {
    pub fn new(task: &str, metric: &str, value: f64, seed: u64) -> Self {
        EvalReport {
            task: task.into(),
            metric: metric.into(),
            value,
            uncertainty: None,
            values: IndexMap::new(),
            protocol: IndexMap::new(),
            seed,
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.protocol.insert(key.into(), value.into());
        self
    }

    pub fn value_of(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }

    /// One-line human summary.
    pub fn summary(&self) -> String {
        let mut s = format!("{}: {} = {:.6}", self.task, self.metric, self.value);
        if let Some(u) = self.uncertainty {
            s += &format!(" ± {u:.6}");
        }
        for (k, v) in &self.values {
            s += &format!(", {k} = {v:.6}");
        }
        s
    }
}

/// Appends the report as one JSON line.
pub fn append_report(path: &Path, report: &EvalReport) -> Result<()> {
    let line = serde_json::to_string(report).map_err(|e| data_err(e.to_string()))?;
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| TradeError::io(path, e))?;
    writeln!(f, "{line}").map_err(|e| TradeError::io(path, e))
}

pub fn read_reports(path: &Path) -> Result<Vec<EvalReport>> {
    let text = std::fs::read_to_string(path).map_err(|e| TradeError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| TradeError::Parse {
                line: i + 1,
                reason: format!("{}: {e}", path.display()),
            })
        })
        .collect()
}
