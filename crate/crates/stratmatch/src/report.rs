//! Report files: hashed JSON payload, text summary, tree export, per-unit
//! audit log and balance tables.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stratmatch_core::att::{SkippedUnit, UnitRecord};
use stratmatch_core::balance::BalanceReport;
use stratmatch_core::tree::NestedNode;
use stratmatch_core::{AttReport, Dataset, PipelineConfig, TreeModel};

use crate::error::{AppError, AppResult};

pub const REPORT_FORMAT: &str = "stratmatch-report/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSummary {
    pub file_sha256: Option<String>,
    pub rows: usize,
    pub features: usize,
    pub treated: usize,
    pub controls: usize,
    pub feature_names: Vec<String>,
}

impl InputSummary {
    pub fn new(d: &Dataset, file_sha256: Option<String>) -> Self {
        Self {
            file_sha256,
            rows: d.len(),
            features: d.feature_count(),
            treated: d.treated_count(),
            controls: d.control_count(),
            feature_names: d.feature_names().to_vec(),
        }
    }
}

/// Everything that identifies a result. Contains no timing or host details.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatePayload {
    pub format: String,
    pub input: InputSummary,
    pub config: PipelineConfig,
    pub report: AttReport,
    pub tree: Option<NestedNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub elapsed_ms: f64,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub payload_sha256: String,
    pub payload: EstimatePayload,
    pub timing: Timing,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> AppResult<String> {
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

impl EstimatePayload {
    pub fn new(input: InputSummary, config: &PipelineConfig, report: &AttReport, tree: Option<&TreeModel>) -> Self {
        Self {
            format: REPORT_FORMAT.to_string(),
            input,
            config: config.clone(),
            report: report.clone(),
            tree: tree.map(TreeModel::to_nested),
        }
    }

    pub fn sha256(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("payload serializes"))
    }
}

fn write_text(path: &Path, text: &str) -> AppResult<()> {
    fs::write(path, text).map_err(|e| AppError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> AppResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| AppError::io(path, e.into()))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_report(path: &Path, payload: EstimatePayload, timing: Timing) -> AppResult<ReportFile> {
    let file = ReportFile {
        payload_sha256: payload.sha256(),
        payload,
        timing,
    };
    write_json(path, &file)?;
    Ok(file)
}

pub fn read_report(path: &Path) -> AppResult<ReportFile> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| AppError::Format {
        path: path.to_path_buf(),
        line: e.line() as u64,
        message: e.to_string(),
    })
}

pub fn summary_table(report: &AttReport, tree: Option<&TreeModel>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "method      {}", report.method.name());
    let _ = writeln!(s, "att         {:.6}", report.att);
    let _ = writeln!(
        s,
        "treated     {} (estimated {}, skipped {})",
        report.treated_total,
        report.units.len(),
        report.skipped.len()
    );
    if let Some(t) = tree {
        let _ = writeln!(s, "leaves      {}", t.leaf_count());
    }
    let infos: Vec<_> = report.units.iter().filter_map(|u| u.match_info.as_ref()).collect();
    if !infos.is_empty() {
        let mean_k = report.units.iter().map(|u| u.matched.len()).sum::<usize>() as f64 / report.units.len() as f64;
        let max_eps = infos.iter().map(|m| m.epsilon).fold(0.0, f64::max);
        let nodes: u64 = infos.iter().map(|m| m.nodes).sum();
        let _ = writeln!(s, "matched     {mean_k:.2} controls per unit, max epsilon {max_eps:.3e}, {nodes} search nodes");
    }
    if let Some(t) = tree {
        let mut per_leaf: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
        for u in &report.units {
            if let Some(l) = u.leaf {
                per_leaf.entry(l).or_default().push(u.iatt);
            }
        }
        if !per_leaf.is_empty() {
            let _ = writeln!(s, "\n{:>6} {:>9} {:>9} {:>12}", "leaf", "controls", "treated", "mean iatt");
            for (leaf, v) in per_leaf {
                let m = v.iter().sum::<f64>() / v.len() as f64;
                let nc = t.node(leaf).control_rows.len();
                let _ = writeln!(s, "{leaf:>6} {nc:>9} {:>9} {m:>12.6}", v.len());
            }
        }
    }
    for w in &report.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}

pub fn write_tree(dir: &Path, tree: &TreeModel) -> AppResult<()> {
    let mut rules = tree.rules().join("\n");
    rules.push('\n');
    write_text(&dir.join("tree.txt"), &rules)?;
    write_json(&dir.join("tree.json"), &tree.to_nested())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AuditLine {
    Unit(UnitRecord),
    Skipped { treated: usize, skipped: String },
}

/// One JSON object per treated unit, ascending by treated row.
pub fn write_audit(path: &Path, report: &AttReport) -> AppResult<()> {
    let mut lines: Vec<(usize, String)> = report
        .units
        .iter()
        .map(|u| (u.treated, serde_json::to_string(&AuditLine::Unit(u.clone())).expect("serializes")))
        .collect();
    lines.extend(report.skipped.iter().map(|SkippedUnit { treated, reason }| {
        let line = AuditLine::Skipped {
            treated: *treated,
            skipped: reason.clone(),
        };
        (*treated, serde_json::to_string(&line).expect("serializes"))
    }));
    lines.sort();
    let mut f = fs::File::create(path).map_err(|e| AppError::io(path, e))?;
    for (_, l) in lines {
        writeln!(f, "{l}").map_err(|e| AppError::io(path, e))?;
    }
    Ok(())
}

pub fn read_audit(path: &Path) -> AppResult<Vec<AuditLine>> {
    if !path.exists() {
        return Err(AppError::AuditNotFound(path.to_path_buf()));
    }
    let f = fs::File::open(path).map_err(|e| AppError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| AppError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| AppError::Format {
            path: path.to_path_buf(),
            line: i as u64 + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn balance_table(rep: &BalanceReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "scope {:?}: {} treated, {} control rows, {} bins",
        rep.scope, rep.treated_n, rep.control_n, rep.bins
    );
    let width = rep.records.iter().map(|r| r.feature.len()).max().unwrap_or(7).max(7);
    let _ = writeln!(
        s,
        "{:<width$} {:>9} {:>9} {:>7} {:>7}  flags",
        "feature", "|smd|", "var.ratio", "ks", "ovl"
    );
    for r in &rep.records {
        let vr = r.variance_ratio.map_or("n/a".to_string(), |v| format!("{v:.3}"));
        let mut flags = Vec::new();
        if !r.smd_balanced {
            flags.push("smd>=0.1");
        }
        if r.vr_balanced == Some(false) {
            flags.push("vr-outside-[0.5,2]");
        }
        let _ = writeln!(
            s,
            "{:<width$} {:>9.4} {:>9} {:>7.4} {:>7.4}  {}",
            r.feature,
            r.smd_abs,
            vr,
            r.ks_distance,
            r.overlap,
            flags.join(" ")
        );
    }
    let _ = writeln!(s, "mean |smd| {:.4}", rep.mean_smd(&[]));
    s
}

pub fn write_balance(dir: &Path, pre: &BalanceReport, post: &BalanceReport) -> AppResult<()> {
    write_json(&dir.join("balance.json"), &serde_json::json!({ "pre_match": pre, "post_match": post }))?;
    let text = format!("{}\n{}", balance_table(pre), balance_table(post));
    write_text(&dir.join("balance.txt"), &text)
}
