//! Evaluation reports and their JSON, CSV and text renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::metrics::{ConfusionMatrix, LabelScore};
use crate::learners::ClassifierSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub weighted_f1: f64,
    pub test_size: usize,
    pub classifier: ClassifierSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub name: String,
    pub train_fraction: f64,
    pub test_fraction: f64,
    pub train_links: usize,
    pub test_links: usize,
    pub classifier: ClassifierSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub weighted_f1: f64,
    pub per_label: BTreeMap<String, LabelScore>,
    pub confusion: ConfusionMatrix,
    pub config: serde_json::Value,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub folds: Option<Vec<FoldReport>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
    Text,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "text" => Ok(ReportFormat::Text),
            other => Err(Error::invalid(format!("unknown format `{other}`"))),
        }
    }
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// One row per label: `label,precision,recall,f1,support`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::invalid(format!("csv: {e}"));
        w.write_record(["label", "precision", "recall", "f1", "support"]).map_err(csv_err)?;
        for (label, s) in &self.per_label {
            w.write_record([
                label.clone(),
                s.precision.to_string(),
                s.recall.to_string(),
                s.f1.to_string(),
                s.support.to_string(),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "weighted F1: {:.4}", self.weighted_f1);
        if let Some(folds) = &self.folds {
            let scores: Vec<String> = folds.iter().map(|f| format!("{:.4}", f.weighted_f1)).collect();
            let _ = writeln!(out, "folds: {}", scores.join(" "));
        }
        if let Some(split) = &self.split {
            let _ = writeln!(
                out,
                "split {}: {} train links, {} test links",
                split.name, split.train_links, split.test_links
            );
        }
        let width = self.per_label.keys().map(String::len).max().unwrap_or(5).max(5);
        let _ = writeln!(out, "{:<width$}  precision  recall  f1      support", "label");
        for (label, s) in &self.per_label {
            let _ = writeln!(
                out,
                "{label:<width$}  {:<9.4}  {:<6.4}  {:<6.4}  {}",
                s.precision, s.recall, s.f1, s.support
            );
        }
        out
    }

    pub fn render(&self, format: ReportFormat) -> Result<String> {
        match format {
            ReportFormat::Json => self.to_json(),
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Text => Ok(self.to_text()),
        }
    }
}
