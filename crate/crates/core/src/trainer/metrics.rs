use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Map, Value};

use crate::error::Result;
use crate::marl::PpoStats;
use crate::worldmodel::LossBreakdown;

/// First line of every metrics CSV; bump when the columns change.
pub const METRICS_VERSION_TAG: &str = "# bilevel-metrics v1";

pub const METRICS_COLUMNS: [&str; 19] = [
    "iteration",
    "episodes",
    "env_steps",
    "train_return",
    "eval_return",
    "recon_nll",
    "kl_agent",
    "kl_global",
    "reward_nll",
    "term_nll",
    "avail_nll",
    "action_nll",
    "model_loss",
    "mean_ratio",
    "clip_fraction",
    "policy_loss",
    "value_loss",
    "entropy",
    "entropy_coef",
];

/// One outer round. Absent values are written as empty cells.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsRow {
    pub iteration: usize,
    pub episodes: usize,
    pub env_steps: usize,
    pub train_return: f64,
    pub eval_return: Option<f64>,
    pub loss: Option<LossBreakdown>,
    pub ppo: Option<PpoStats>,
    pub entropy_coef: f64,
}

impl MetricsRow {
    pub fn values(&self) -> Vec<Option<f64>> {
        let mut v = vec![
            Some(self.iteration as f64),
            Some(self.episodes as f64),
            Some(self.env_steps as f64),
            Some(self.train_return),
            self.eval_return,
        ];
        match &self.loss {
            Some(l) => v.extend(l.components().iter().map(|&x| Some(x)).chain([Some(l.total)])),
            None => v.extend([None; 8]),
        }
        match &self.ppo {
            Some(p) => v.extend([p.mean_ratio, p.clip_fraction, p.policy_loss, p.value_loss, p.entropy].map(Some)),
            None => v.extend([None; 5]),
        }
        v.push(Some(self.entropy_coef));
        v
    }

    pub fn csv_line(&self) -> String {
        self.values().iter().map(|v| v.map_or(String::new(), |x| x.to_string())).collect::<Vec<_>>().join(",")
    }

    pub fn json(&self) -> Value {
        let mut m = Map::new();
        m.insert("time".into(), json!(SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())));
        for (name, v) in METRICS_COLUMNS.iter().zip(self.values()) {
            m.insert((*name).into(), v.map_or(Value::Null, |x| json!(x)));
        }
        Value::Object(m)
    }
}

/// Append-only CSV (no wall-clock values, so reruns are byte-identical) and
/// a JSON-lines log that also carries timestamps.
pub struct MetricsWriter {
    csv: BufWriter<File>,
    log: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let mut csv = BufWriter::new(File::create(dir.join("metrics.csv"))?);
        writeln!(csv, "{METRICS_VERSION_TAG}")?;
        writeln!(csv, "{}", METRICS_COLUMNS.join(","))?;
        csv.flush()?;
        let log = BufWriter::new(File::create(dir.join("log.jsonl"))?);
        Ok(Self { csv, log })
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        writeln!(self.csv, "{}", row.csv_line())?;
        self.csv.flush()?;
        serde_json::to_writer(&mut self.log, &row.json())?;
        writeln!(self.log)?;
        self.log.flush()?;
        Ok(())
    }

    /// Free-form event in the structured log only.
    pub fn event(&mut self, kind: &str, fields: Value) -> Result<()> {
        let t = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
        serde_json::to_writer(&mut self.log, &json!({ "time": t, "event": kind, "data": fields }))?;
        writeln!(self.log)?;
        self.log.flush()?;
        Ok(())
    }
}
