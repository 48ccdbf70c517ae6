//! Metric reports: JSON records and a flat CSV table.

use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub dataset: String,
    pub task: String,
    pub value: f64,
    pub std: Option<f64>,
    pub seed_count: usize,
    pub config_hash: String,
    pub provenance: String,
    pub details: serde_json::Value,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per report: `variant,dataset,task,value,std,seed_count`.
pub fn reports_to_csv(rows: &[(String, MetricsReport)]) -> String {
    let mut out = String::from("variant,dataset,task,value,std,seed_count\n");
    for (variant, r) in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            csv_field(variant),
            csv_field(&r.dataset),
            csv_field(&r.task),
            r.value,
            r.std.map(|s| s.to_string()).unwrap_or_default(),
            r.seed_count
        ));
    }
    out
}
