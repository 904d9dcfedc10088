use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::HarnessError;
use crate::explore::{Backbone, EpisodeResult, Variant, WaypointRecord};
use crate::memory::mem_metric;
use crate::world::Split;

/// Aggregate metrics for one (variant, split) cell. `split` is `dynamic`,
/// `static` or `overall`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub variant: Variant,
    pub backbone: Backbone,
    pub split: String,
    pub accuracy_pct: f64,
    pub mem: f64,
    /// Mean auxiliary views per episode.
    pub sensing_steps: f64,
    pub episodes: usize,
    pub failed: usize,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub backbone: Backbone,
    pub seeds: Vec<u64>,
    pub metrics: Vec<MetricsRow>,
    pub failed_episodes: usize,
    pub episodes: Vec<EpisodeResult>,
}

fn aggregate(variant: Variant, backbone: Backbone, split: &str, group: &[&EpisodeResult]) -> Option<MetricsRow> {
    let n = group.len();
    let owned: Vec<EpisodeResult> = group.iter().map(|r| (*r).clone()).collect();
    let mem = mem_metric(&owned).ok()?;
    let correct = group.iter().filter(|r| r.correct).count();
    Some(MetricsRow {
        variant,
        backbone,
        split: split.to_string(),
        accuracy_pct: 100.0 * correct as f64 / n as f64,
        mem,
        sensing_steps: group.iter().map(|r| r.sensing_steps).sum::<usize>() as f64 / n as f64,
        episodes: n,
        failed: group.iter().filter(|r| r.failure.is_some()).count(),
        wall_time_secs: group.iter().map(|r| r.wall_time_secs).sum(),
    })
}

impl SuiteReport {
    /// Failed episodes count as incorrect and stay in every denominator.
    pub fn from_results(backbone: Backbone, seeds: &[u64], episodes: Vec<EpisodeResult>) -> Self {
        let mut metrics = Vec::new();
        for variant in Variant::ALL {
            let of_variant: Vec<&EpisodeResult> = episodes.iter().filter(|e| e.variant == variant).collect();
            for split in Split::BOTH {
                let group: Vec<&EpisodeResult> = of_variant.iter().copied().filter(|e| e.split == split).collect();
                metrics.extend(aggregate(variant, backbone, split.as_str(), &group));
            }
            metrics.extend(aggregate(variant, backbone, "overall", &of_variant));
        }
        SuiteReport {
            backbone,
            seeds: seeds.to_vec(),
            metrics,
            failed_episodes: episodes.iter().filter(|e| e.failure.is_some()).count(),
            episodes,
        }
    }

    /// `split = None` selects the overall row.
    pub fn row(&self, variant: Variant, split: Option<Split>) -> Option<&MetricsRow> {
        let name = split.map_or("overall", Split::as_str);
        self.metrics.iter().find(|m| m.variant == variant && m.split == name)
    }

    pub fn check_complete(&self) -> Result<(), HarnessError> {
        match self.failed_episodes {
            0 => Ok(()),
            failed => Err(HarnessError::PartialFailure {
                failed,
                total: self.episodes.len(),
            }),
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// JSON with timing removed; equal across reruns of the same inputs.
    pub fn stripped_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        strip_wall_time(&mut v);
        serde_json::to_string_pretty(&v).expect("value serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Format(e.to_string()))
    }

    pub fn load(dir: &Path) -> Result<Self, HarnessError> {
        Self::from_json(&fs::read_to_string(dir.join(REPORT_JSON))?)
    }
}

/// Removes every `wall_time_secs` key, at any depth.
pub fn strip_wall_time(value: &mut Value) {
    match value {
        Value::Object(map) => {
            map.remove("wall_time_secs");
            map.values_mut().for_each(strip_wall_time);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_wall_time),
        _ => {}
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Table,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "table" => Ok(ReportFormat::Table),
            _ => Err(format!("unknown format {s:?} (expected csv, json or table)")),
        }
    }
}

const CSV_HEADER: [&str; 7] = ["variant", "backbone", "split", "accuracy_pct", "mem", "sensing_steps", "episodes"];
pub(crate) const REPORT_JSON: &str = "report.json";

fn to_csv(report: &SuiteReport) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fmt = |e: csv::Error| HarnessError::Format(e.to_string());
    w.write_record(CSV_HEADER).map_err(fmt)?;
    for m in &report.metrics {
        w.write_record([
            m.variant.as_str().to_string(),
            m.backbone.as_str().to_string(),
            m.split.clone(),
            format!("{:.2}", m.accuracy_pct),
            format!("{:.3}", m.mem),
            format!("{:.3}", m.sensing_steps),
            m.episodes.to_string(),
        ])
        .map_err(fmt)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn to_table(report: &SuiteReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "backbone: {}   seeds: {:?}", report.backbone, report.seeds);
    let _ = writeln!(
        out,
        "{:<22} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
        "Method", "Dyn Acc", "Dyn Mem", "Sta Acc", "Sta Mem", "All Acc", "All Mem", "Sensing"
    );
    for variant in Variant::ALL {
        let Some(all) = report.row(variant, None) else { continue };
        let cell = |split| {
            report
                .row(variant, Some(split))
                .map_or(("-".to_string(), "-".to_string()), |m| {
                    (format!("{:.1}", m.accuracy_pct), format!("{:.2}", m.mem))
                })
        };
        let (da, dm) = cell(Split::Dynamic);
        let (sa, sm) = cell(Split::Static);
        let _ = writeln!(
            out,
            "{:<22} {:>8} {:>8} {:>8} {:>8} {:>8.1} {:>8.2} {:>8.2}",
            variant.table_label(),
            da,
            dm,
            sa,
            sm,
            all.accuracy_pct,
            all.mem,
            all.sensing_steps
        );
    }
    if report.failed_episodes > 0 {
        let _ = writeln!(
            out,
            "PARTIAL: {} of {} episodes failed",
            report.failed_episodes,
            report.episodes.len()
        );
    }
    out
}

pub fn render(report: &SuiteReport, format: ReportFormat) -> Result<String, HarnessError> {
    match format {
        ReportFormat::Csv => to_csv(report),
        ReportFormat::Json => Ok(report.to_json_pretty()),
        ReportFormat::Table => Ok(to_table(report)),
    }
}

/// Writes `metrics.csv`, `report.json` and `table.txt` into `dir`.
pub fn emit_report(report: &SuiteReport, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, format) in [
        ("metrics.csv", ReportFormat::Csv),
        (REPORT_JSON, ReportFormat::Json),
        ("table.txt", ReportFormat::Table),
    ] {
        let path = dir.join(name);
        fs::write(&path, render(report, format)?)?;
        written.push(path);
    }
    Ok(written)
}

/// One line of `episodes.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub episode: String,
    #[serde(flatten)]
    pub record: WaypointRecord,
}

pub fn write_episode_logs<'a, I>(path: &Path, logs: I) -> Result<(), HarnessError>
where
    I: IntoIterator<Item = (&'a str, &'a [WaypointRecord])>,
{
    let mut out = BufWriter::new(File::create(path)?);
    for (episode, records) in logs {
        for record in records {
            let line = TraceLine {
                episode: episode.to_string(),
                record: record.clone(),
            };
            serde_json::to_writer(&mut out, &line).map_err(|e| HarnessError::Format(e.to_string()))?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Waypoint records of one episode, in order.
pub fn read_trace(path: &Path, episode: &str) -> Result<Vec<WaypointRecord>, HarnessError> {
    let mut records = Vec::new();
    for (n, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TraceLine = serde_json::from_str(&line)
            .map_err(|e| HarnessError::Format(format!("{}:{}: {e}", path.display(), n + 1)))?;
        if parsed.episode == episode {
            records.push(parsed.record);
        }
    }
    Ok(records)
}
