//! Report files placing measured metrics next to the shipped table of
//! published results.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::write_atomic;
use crate::dataset::DatasetKind;
use crate::error::{Error, Result};
use crate::metrics::{MetricsReport, OverallMetrics, METRIC_DEFINITIONS};
use crate::runner::evaluate::Protocol;

const SHIPPED_BASELINES: &str = include_str!("../../data/baselines.tsv");

pub const BASELINE_LABEL: &str = "published reference values, not reproduced";

/// One published result. Values keep their printed text (percent); `None`
/// where the source reports NA.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub dataset: DatasetKind,
    pub method: String,
    pub accuracy: Option<String>,
    pub detection_rate: Option<String>,
    pub f1: Option<String>,
    pub fpr: Option<String>,
}

impl BaselineRow {
    pub fn accuracy_pct(&self) -> Option<f64> {
        self.accuracy.as_deref().and_then(|s| s.parse().ok())
    }

    pub fn detection_rate_pct(&self) -> Option<f64> {
        self.detection_rate.as_deref().and_then(|s| s.parse().ok())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineTable {
    pub label: String,
    pub rows: Vec<BaselineRow>,
}

impl BaselineTable {
    /// `dataset<TAB>method<TAB>accuracy<TAB>dr<TAB>f1<TAB>fpr`, `#` comments.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split('\t').map(str::trim).collect();
            if f.len() != 6 {
                return Err(Error::MalformedRow {
                    line: i as u64 + 1,
                    expected: 6,
                    found: f.len(),
                });
            }
            let value = |s: &str| -> Result<Option<String>> {
                if s == "NA" {
                    return Ok(None);
                }
                s.parse::<f64>().map_err(|_| {
                    Error::ConfigInvalid(format!("baseline line {}: bad value {s:?}", i + 1))
                })?;
                Ok(Some(s.to_string()))
            };
            rows.push(BaselineRow {
                dataset: f[0].parse()?,
                method: f[1].to_string(),
                accuracy: value(f[2])?,
                detection_rate: value(f[3])?,
                f1: value(f[4])?,
                fpr: value(f[5])?,
            });
        }
        Ok(BaselineTable {
            label: BASELINE_LABEL.to_string(),
            rows,
        })
    }

    pub fn shipped() -> Self {
        Self::parse(SHIPPED_BASELINES).expect("shipped baselines are valid")
    }

    pub fn for_dataset(&self, kind: DatasetKind) -> impl Iterator<Item = &BaselineRow> {
        self.rows.iter().filter(move |r| r.dataset == kind)
    }
}

/// A measured result to include in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedReport {
    pub name: String,
    pub dataset: DatasetKind,
    pub protocol: Protocol,
    pub metrics: MetricsReport,
}

#[derive(Serialize)]
struct MeasuredRow<'a> {
    name: &'a str,
    dataset: DatasetKind,
    protocol: Protocol,
    accuracy_pct: f64,
    detection_rate_pct: Option<f64>,
    precision_pct: Option<f64>,
    f1_pct: Option<f64>,
    far_pct: Option<f64>,
    overall: &'a OverallMetrics,
}

#[derive(Serialize)]
struct ReportDoc<'a> {
    definitions: Vec<&'a str>,
    measured: Vec<MeasuredRow<'a>>,
    baselines: &'a BaselineTable,
}

fn pct(v: Option<f64>) -> Option<f64> {
    v.map(|x| x * 100.0)
}

fn pct_text(v: Option<f64>) -> String {
    v.map(|x| format!("{:.2}", x * 100.0))
        .unwrap_or_else(|| "NA".into())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn report_json(reports: &[NamedReport], baselines: &BaselineTable) -> String {
    let measured = reports
        .iter()
        .map(|r| {
            let o = &r.metrics.overall;
            MeasuredRow {
                name: &r.name,
                dataset: r.dataset,
                protocol: r.protocol,
                accuracy_pct: o.accuracy * 100.0,
                detection_rate_pct: pct(o.detection_rate),
                precision_pct: pct(o.precision),
                f1_pct: pct(o.f1),
                far_pct: pct(o.far),
                overall: o,
            }
        })
        .collect();
    let doc = ReportDoc {
        definitions: METRIC_DEFINITIONS.to_vec(),
        measured,
        baselines,
    };
    serde_json::to_string_pretty(&doc).expect("report serializes")
}

/// `source,dataset,method,accuracy,detection_rate,f1,fpr,note`, all in percent.
pub fn report_csv(reports: &[NamedReport], baselines: &BaselineTable) -> String {
    let mut out = String::from("source,dataset,method,accuracy,detection_rate,f1,fpr,note\n");
    for r in reports {
        let o = &r.metrics.overall;
        out.push_str(&format!(
            "measured,{},{},{},{},{},{},{}\n",
            r.dataset,
            csv_field(&r.name),
            pct_text(Some(o.accuracy)),
            pct_text(o.detection_rate),
            pct_text(o.f1),
            pct_text(o.far),
            csv_field(&r.protocol.to_string()),
        ));
    }
    let text = |v: &Option<String>| v.clone().unwrap_or_else(|| "NA".into());
    for b in &baselines.rows {
        out.push_str(&format!(
            "published,{},{},{},{},{},{},{}\n",
            b.dataset,
            csv_field(&b.method),
            text(&b.accuracy),
            text(&b.detection_rate),
            text(&b.f1),
            text(&b.fpr),
            baselines.label,
        ));
    }
    out
}

/// Writes `path` (JSON) and the same path with a `.csv` extension.
pub fn emit_report(
    reports: &[NamedReport],
    baselines: &BaselineTable,
    path: &Path,
) -> Result<(PathBuf, PathBuf)> {
    let csv_path = path.with_extension("csv");
    write_atomic(path, report_json(reports, baselines).as_bytes())?;
    write_atomic(&csv_path, report_csv(reports, baselines).as_bytes())?;
    Ok((path.to_path_buf(), csv_path))
}
