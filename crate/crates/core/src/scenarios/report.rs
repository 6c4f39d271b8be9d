// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analysis::AttackReport;
use crate::error::{Result, SimError};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Fixed-width histogram; `bins` holds (left edge, count) for every
/// nonempty bin in order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: u64,
    pub bins: Vec<(u64, u64)>,
}

impl Histogram {
    pub fn from_values(values: impl IntoIterator<Item = u64>, bin_width: u64) -> Self {
        let w = bin_width.max(1);
        let mut m: BTreeMap<u64, u64> = BTreeMap::new();
        for v in values {
            *m.entry(v / w * w).or_default() += 1;
        }
        Histogram { bin_width: w, bins: m.into_iter().collect() }
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().map(|b| b.1).sum()
    }
}

/// Everything one scenario run reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub seed: u64,
    pub config_digest: String,
    #[serde(flatten)]
    pub report: AttackReport,
    pub event_counts: BTreeMap<String, u64>,
    /// Scenario-specific metrics.
    pub details: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Table>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<Histogram>,
}

fn csv_err(e: impl std::fmt::Display) -> SimError {
    SimError::BadParam(format!("csv output: {e}"))
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

impl ScenarioReport {
    pub fn detail(&self, key: &str) -> Option<&Value> {
        self.details.get(key)
    }

    pub fn detail_f64(&self, key: &str) -> Option<f64> {
        self.details.get(key).and_then(Value::as_f64)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// The table when there is one, otherwise flat `field,value` rows.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        if let Some(t) = &self.table {
            w.write_record(&t.columns).map_err(csv_err)?;
            for r in &t.rows {
                w.write_record(r).map_err(csv_err)?;
            }
        } else {
            w.write_record(["field", "value"]).map_err(csv_err)?;
            let Value::Object(flat) = serde_json::to_value(self).expect("report serializes") else {
                unreachable!("report is an object")
            };
            for (k, v) in flat.iter().filter(|(k, _)| *k != "histogram") {
                match v {
                    Value::Object(inner) => {
                        for (ik, iv) in inner {
                            w.write_record([format!("{k}.{ik}"), scalar(iv)]).map_err(csv_err)?;
                        }
                    }
                    _ => w.write_record([k.clone(), scalar(v)]).map_err(csv_err)?,
                }
            }
        }
        String::from_utf8(w.into_inner().map_err(csv_err)?).map_err(csv_err)
    }

    /// `bin_left,count` rows, if the scenario produced a histogram.
    pub fn histogram_csv(&self) -> Option<String> {
        let h = self.histogram.as_ref()?;
        let mut s = String::from("bin_left,count\n");
        for (l, c) in &h.bins {
            s.push_str(&format!("{l},{c}\n"));
        }
        Some(s)
    }
}
