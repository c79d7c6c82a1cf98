//! Per-sample metric tables, per-domain aggregation, and report emission.
//!
//! Aggregates are derived purely from the per-sample table: one row per
//! observed domain combination, one marginal row per domain value on each
//! axis, and a grand-mean row labeled `all`. Means are taken over samples
//! where the metric is present, summed in sample-id order, so permuting the
//! input order cannot change a byte of the output.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{MetricError, Result};

/// One sample's position in the evaluation grid.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DomainKey {
    pub layout: String,
    pub lighting: String,
    pub angle: String,
    pub warp_kind: String,
}

/// Metric values for one sample. Every field is optional: an absent value
/// means the metric was not computed (the cause, if any, lives in `errors`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PerSampleMetrics {
    pub ms_ssim: Option<f64>,
    pub ld: Option<f64>,
    pub ad: Option<f64>,
    pub ed: Option<usize>,
    pub cer: Option<f64>,
    pub mmed: Option<usize>,
    pub mmcer: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

/// A sample row in the report: domain tags plus metric values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub domains: DomainKey,
    pub metrics: PerSampleMetrics,
}

/// Per-metric means over one group of samples. A metric absent from every
/// sample in the group stays `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricMeans {
    pub ms_ssim: Option<f64>,
    pub ld: Option<f64>,
    pub ad: Option<f64>,
    pub ed: Option<f64>,
    pub cer: Option<f64>,
    pub mmed: Option<f64>,
    pub mmcer: Option<f64>,
}

/// One aggregate row: a domain combination, a marginal, or the grand mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub group: String,
    pub count: usize,
    pub means: MetricMeans,
}

/// Run provenance recorded alongside the numbers. The timestamp is
/// caller-provided so replayed runs can produce identical bytes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub config_hash: String,
    pub timestamp: String,
    pub backends: BTreeMap<String, String>,
}

/// The full evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub meta: ReportMeta,
    pub per_sample: BTreeMap<String, SampleEntry>,
    pub aggregates: Vec<AggregateRow>,
}

/// Builds the full report from per-sample metrics and a sample-id → domain
/// index. Every sample id must appear in the index; values are range-checked
/// before aggregation.
pub fn aggregate_report(
    per_sample: &BTreeMap<String, PerSampleMetrics>,
    domain_index: &BTreeMap<String, DomainKey>,
    meta: ReportMeta,
) -> Result<MetricReport> {
    let missing: Vec<&str> = per_sample
        .keys()
        .filter(|id| !domain_index.contains_key(*id))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        return Err(MetricError::Aggregation(format!(
            "samples missing from domain index: {}",
            missing.join(", ")
        )));
    }
    for (id, m) in per_sample {
        validate_sample(id, m)?;
    }

    let entries: BTreeMap<String, SampleEntry> = per_sample
        .iter()
        .map(|(id, metrics)| {
            let entry = SampleEntry {
                domains: domain_index[id].clone(),
                metrics: metrics.clone(),
            };
            (id.clone(), entry)
        })
        .collect();

    let mut aggregates = Vec::new();
    let mut combos: BTreeMap<String, Acc> = BTreeMap::new();
    let mut marginals: [BTreeMap<String, Acc>; 4] = Default::default();
    let mut grand = Acc::default();
    for entry in entries.values() {
        let d = &entry.domains;
        let combo = format!(
            "layout={},lighting={},angle={},warp={}",
            d.layout, d.lighting, d.angle, d.warp_kind
        );
        combos.entry(combo).or_default().add(&entry.metrics);
        let axes = [
            format!("layout={}", d.layout),
            format!("lighting={}", d.lighting),
            format!("angle={}", d.angle),
            format!("warp={}", d.warp_kind),
        ];
        for (axis, key) in axes.into_iter().enumerate() {
            marginals[axis].entry(key).or_default().add(&entry.metrics);
        }
        grand.add(&entry.metrics);
    }
    for (group, acc) in combos {
        aggregates.push(acc.into_row(group));
    }
    for axis in marginals {
        for (group, acc) in axis {
            aggregates.push(acc.into_row(group));
        }
    }
    aggregates.push(grand.into_row("all".into()));

    Ok(MetricReport { meta, per_sample: entries, aggregates })
}

fn validate_sample(id: &str, m: &PerSampleMetrics) -> Result<()> {
    let fail = |what: &str| {
        Err(MetricError::Aggregation(format!("sample {id}: {what} out of range")))
    };
    match m.ms_ssim {
        Some(v) if !(0.0..=1.0).contains(&v) => return fail("ms_ssim"),
        _ => {}
    }
    for (name, v) in [("ld", m.ld), ("ad", m.ad), ("cer", m.cer), ("mmcer", m.mmcer)] {
        if let Some(v) = v {
            if !v.is_finite() || v < 0.0 {
                return fail(name);
            }
        }
    }
    Ok(())
}

/// Running sums per metric; one instance per aggregate group.
#[derive(Default)]
struct Acc {
    count: usize,
    sums: [(f64, usize); 7],
}

impl Acc {
    fn add(&mut self, m: &PerSampleMetrics) {
        self.count += 1;
        let values = [
            m.ms_ssim,
            m.ld,
            m.ad,
            m.ed.map(|v| v as f64),
            m.cer,
            m.mmed.map(|v| v as f64),
            m.mmcer,
        ];
        for (slot, v) in self.sums.iter_mut().zip(values) {
            if let Some(v) = v {
                slot.0 += v;
                slot.1 += 1;
            }
        }
    }

    fn into_row(self, group: String) -> AggregateRow {
        let mean = |i: usize| {
            let (sum, n) = self.sums[i];
            (n > 0).then(|| sum / n as f64)
        };
        AggregateRow {
            group,
            count: self.count,
            means: MetricMeans {
                ms_ssim: mean(0),
                ld: mean(1),
                ad: mean(2),
                ed: mean(3),
                cer: mean(4),
                mmed: mean(5),
                mmcer: mean(6),
            },
        }
    }
}

/// Writes the full report as pretty-printed JSON.
pub fn write_report_json(report: &MetricReport, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| MetricError::Aggregation(format!("report serialization: {e}")))?;
    let mut file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(json.as_bytes()).and_then(|_| file.write_all(b"\n")).map_err(|e| io_err(path, e))
}

/// Writes flat per-sample rows as RFC-4180 CSV with a header row. Absent
/// metrics become empty cells; error strings are joined with `; `.
pub fn write_report_csv(report: &MetricReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record([
        "id", "layout", "lighting", "angle", "warp_kind", "ms_ssim", "ld", "ad", "ed", "cer",
        "mmed", "mmcer", "errors",
    ])
    .map_err(|e| csv_err(path, e))?;
    for (id, entry) in &report.per_sample {
        let d = &entry.domains;
        let m = &entry.metrics;
        let float = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let int = |v: Option<usize>| v.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([
            id.as_str(),
            d.layout.as_str(),
            d.lighting.as_str(),
            d.angle.as_str(),
            d.warp_kind.as_str(),
            &float(m.ms_ssim),
            &float(m.ld),
            &float(m.ad),
            &int(m.ed),
            &float(m.cer),
            &int(m.mmed),
            &float(m.mmcer),
            &m.errors.join("; "),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn io_err(path: &Path, source: std::io::Error) -> MetricError {
    MetricError::Io { path: path.display().to_string(), source }
}

fn csv_err(path: &Path, e: csv::Error) -> MetricError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => io_err(path, source),
        other => MetricError::Aggregation(format!("csv write to {}: {other:?}", path.display())),
    }
}
