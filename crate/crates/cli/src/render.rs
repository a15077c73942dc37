//! Human tables and CSV exports.

use anyhow::Result;

use roadside_eval::latency::{format_ms, Direction, LatencyEstimate};
use roadside_eval::matcher::FrameMatchResult;
use roadside_eval::metrics::MetricsReport;
use roadside_eval::DataPoint;

use crate::manifest::{TrialSweep, SCHEMA_VERSION};

pub const MISSING: &str = "—";

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| MISSING.to_string(), |x| format!("{x:.1}"))
}

fn meters(v: Option<f64>) -> String {
    v.map_or_else(|| MISSING.to_string(), |x| format!("{x:.3}"))
}

/// Table cells in the standard result column order.
pub fn report_cells(r: &MetricsReport) -> [String; 7] {
    [
        pct(r.fp_rate_pct),
        pct(r.fn_rate_pct),
        r.ids.to_string(),
        pct(r.mota_pct),
        meters(r.motp_m),
        pct(r.idf1_pct),
        pct(r.hota_pct),
    ]
}

fn aligned(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                let pad = widths[c] - cell.chars().count();
                if c < 2 {
                    format!("{cell}{}", " ".repeat(pad))
                } else {
                    format!("{}{cell}", " ".repeat(pad))
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

pub fn metrics_table(reports: &[MetricsReport]) -> String {
    let mut rows = vec![[
        "Trial",
        "Category",
        "FP Rate (%)",
        "FN Rate (%)",
        "IDS",
        "MOTA (%)",
        "MOTP (m)",
        "IDF1 (%)",
        "HOTA (%)",
    ]
    .map(String::from)
    .to_vec()];
    for r in reports {
        let mut row = vec![r.trial_id.clone(), r.category.to_string()];
        row.extend(report_cells(r));
        rows.push(row);
    }
    aligned(&rows)
}

pub fn latency_table(per_trial: &[(String, LatencyEstimate)], combined: &LatencyEstimate) -> String {
    let mut rows = vec![["Trial", "", "+dir (ms)", "-dir (ms)", "Latency (ms)", "Std. (s)", "Samples"]
        .map(String::from)
        .to_vec()];
    let row = |label: &str, e: &LatencyEstimate| {
        let dir = |d: Direction| e.per_direction.get(&d).map_or_else(|| MISSING.to_string(), |s| format_ms(s.mean_s));
        vec![
            label.to_string(),
            String::new(),
            dir(Direction::Forward),
            dir(Direction::Reverse),
            format_ms(e.mean_s),
            format!("{:.3}", e.std_s),
            e.n_samples.to_string(),
        ]
    };
    for (id, e) in per_trial {
        rows.push(row(id, e));
    }
    if per_trial.len() > 1 {
        rows.push(row("combined", combined));
    }
    aligned(&rows)
}

pub fn sweep_table(sweeps: &[TrialSweep]) -> String {
    let mut rows = vec![["Trial", "Category", "Threshold (m)", "FP Rate (%)", "FN Rate (%)"].map(String::from).to_vec()];
    for TrialSweep { trial_id, sweep: s } in sweeps {
        for (i, t) in s.thresholds_m.iter().enumerate() {
            rows.push(vec![
                trial_id.clone(),
                s.category.to_string(),
                format!("{t}"),
                format!("{:.1}", s.fp_rate_pct[i]),
                format!("{:.1}", s.fn_rate_pct[i]),
            ]);
        }
    }
    aligned(&rows)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn metrics_csv(reports: &[MetricsReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "schema_version",
        "trial_id",
        "category",
        "fp_rate_pct",
        "fn_rate_pct",
        "ids",
        "mota_pct",
        "motp_m",
        "idf1_pct",
        "deta_pct",
        "assa_pct",
        "hota_pct",
        "tp",
        "fp",
        "fn",
        "tpa",
        "fpa",
        "fna",
        "gt_total",
        "det_total",
    ])?;
    for r in reports {
        let c = &r.counts;
        w.write_record([
            SCHEMA_VERSION.to_string(),
            r.trial_id.clone(),
            r.category.to_string(),
            opt(r.fp_rate_pct),
            opt(r.fn_rate_pct),
            r.ids.to_string(),
            opt(r.mota_pct),
            opt(r.motp_m),
            opt(r.idf1_pct),
            opt(r.deta_pct),
            opt(r.assa_pct),
            opt(r.hota_pct),
            c.tp.to_string(),
            c.fp.to_string(),
            c.fn_.to_string(),
            c.tpa.to_string(),
            c.fpa.to_string(),
            c.fna.to_string(),
            c.gt_total.to_string(),
            c.det_total.to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Per-point match outcomes in the input schema with extra outcome columns,
/// so the file can be read back by the ingest parser.
pub fn matches_csv(trial_id: &str, frames: &[FrameMatchResult], out: &mut csv::Writer<Vec<u8>>, header: bool) -> Result<()> {
    if header {
        out.write_record([
            "timestamp",
            "lat",
            "lon",
            "category",
            "id",
            "schema_version",
            "trial_id",
            "source",
            "outcome",
            "matched_id",
            "distance_m",
        ])?;
    }
    let mut row = |p: &DataPoint, source: &str, outcome: &str, matched: &str, d: Option<f64>| {
        out.write_record([
            p.timestamp_s.to_string(),
            p.position.lat_deg.to_string(),
            p.position.lon_deg.to_string(),
            p.category.to_string(),
            p.object_id.clone(),
            SCHEMA_VERSION.to_string(),
            trial_id.to_string(),
            source.to_string(),
            outcome.to_string(),
            matched.to_string(),
            opt(d),
        ])
    };
    for f in frames {
        for m in &f.tp {
            row(&m.det_point, "detection", "tp", &m.gt_point.object_id, Some(m.distance_m))?;
            row(&m.gt_point, "ground_truth", "tp", &m.det_point.object_id, Some(m.distance_m))?;
        }
        for p in &f.fp {
            row(p, "detection", "fp", "", None)?;
        }
        for p in &f.fn_ {
            row(p, "ground_truth", "fn", "", None)?;
        }
    }
    Ok(())
}

pub fn sweep_csv(sweeps: &[TrialSweep]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["schema_version", "trial_id", "category", "threshold_m", "fp_rate_pct", "fn_rate_pct"])?;
    for TrialSweep { trial_id, sweep: s } in sweeps {
        for (i, t) in s.thresholds_m.iter().enumerate() {
            w.write_record([
                SCHEMA_VERSION.to_string(),
                trial_id.clone(),
                s.category.to_string(),
                t.to_string(),
                s.fp_rate_pct[i].to_string(),
                s.fn_rate_pct[i].to_string(),
            ])?;
        }
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}
