//! Output shapes: the versioned structured record, the human tables, and
//! the sweep CSV. Table and JSON values come from the same record, so the
//! two forms always carry identical numbers.

use std::fmt::Write as _;

use memplan_core::{
    DecisionReport, MemoryBreakdown, PrecisionSpec, Score, StrategyKind, SweepCell,
};
use serde::{Deserialize, Serialize};

/// Version stamp of the structured output layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Bytes rendered as MB (2^20 bytes) with one decimal, rounded half-up.
pub fn mb_string(bytes: u64) -> String {
    let tenths = (bytes as u128 * 10 + (1 << 19)) >> 20;
    format!("{}.{}", tenths / 10, tenths % 10)
}

/// [`mb_string`] for a difference, keeping the sign.
pub fn signed_mb_string(delta: i128) -> String {
    let magnitude = mb_string(delta.unsigned_abs() as u64);
    if delta < 0 {
        format!("-{magnitude}")
    } else {
        magnitude
    }
}

/// The tool stamp embedded in every structured record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl ToolInfo {
    pub fn current() -> ToolInfo {
        ToolInfo {
            name: "memplan".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// Echo of every input that shaped the numbers, including where the
/// defaulted ones came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputEcho {
    pub model: String,
    pub manifest_path: String,
    pub gpu_count: u64,
    pub capacity_bytes: u64,
    pub capacity_mb: String,
    pub page_bytes: u64,
    pub base_bytes: u64,
    pub base_mb: String,
    /// "calibrated" when --m-base was given, else "default placeholder".
    pub base_provenance: String,
    pub seq_len: u64,
    pub chunk_size: u64,
    /// "explicit" when --chunk-size was given, else "auto-selected".
    pub chunk_provenance: String,
    pub precision: PrecisionSpec,
    pub lm_head_tied: bool,
}

/// A breakdown in both units.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreakdownRecord {
    pub bytes: MemoryBreakdown,
    pub mb: MbBreakdown,
}

impl BreakdownRecord {
    pub fn new(bytes: MemoryBreakdown) -> BreakdownRecord {
        BreakdownRecord {
            mb: MbBreakdown::from_bytes(&bytes),
            bytes,
        }
    }
}

/// [`MemoryBreakdown`] with every field as an MB string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MbBreakdown {
    pub base: String,
    pub params: String,
    pub params_half: String,
    pub params_full: String,
    pub optimizer_states: String,
    pub outputs: String,
    pub lm_head: String,
    pub tp_backward_buffer: String,
    pub peak: String,
}

impl MbBreakdown {
    pub fn from_bytes(b: &MemoryBreakdown) -> MbBreakdown {
        MbBreakdown {
            base: mb_string(b.base),
            params: mb_string(b.params),
            params_half: mb_string(b.params_half),
            params_full: mb_string(b.params_full),
            optimizer_states: mb_string(b.optimizer_states),
            outputs: mb_string(b.outputs),
            lm_head: mb_string(b.lm_head),
            tp_backward_buffer: mb_string(b.tp_backward_buffer),
            peak: mb_string(b.peak),
        }
    }
}

/// The `estimate` section: one strategy at one batch size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSection {
    pub strategy: String,
    pub dp_count: u64,
    pub tp_count: u64,
    pub batch_size: u64,
    pub breakdown: BreakdownRecord,
    pub fits: bool,
    /// capacity - peak; negative when the estimate overflows the GPU.
    pub headroom_bytes: i128,
    pub headroom_mb: String,
}

/// One strategy row of the `plan` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRow {
    pub strategy: String,
    pub dp_count: u64,
    pub tp_count: u64,
    pub max_batch: u64,
    pub score: Score,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub breakdown: Option<BreakdownRecord>,
}

/// The `plan` section: the searched table plus the verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSection {
    pub batch_cap: u64,
    /// "all" or "balanced".
    pub hybrid_policy: String,
    pub rows: Vec<PlanRow>,
    pub chosen: String,
    pub chosen_batch: u64,
}

impl PlanSection {
    pub fn from_report(report: &DecisionReport, batch_cap: u64, hybrid_policy: &str) -> Self {
        PlanSection {
            batch_cap,
            hybrid_policy: hybrid_policy.to_string(),
            rows: report
                .results
                .iter()
                .map(|r| PlanRow {
                    strategy: r.strategy.label(),
                    dp_count: r.strategy.dp_count,
                    tp_count: r.strategy.tp_count,
                    max_batch: r.max_batch,
                    score: r.score,
                    breakdown: r.breakdown_at_max.map(BreakdownRecord::new),
                })
                .collect(),
            chosen: report.chosen.label(),
            chosen_batch: report.chosen_batch,
        }
    }
}

/// The versioned structured record both commands print with --format json.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub schema_version: u32,
    pub tool: ToolInfo,
    pub input: InputEcho,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub estimate: Option<EstimateSection>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub plan: Option<PlanSection>,
}

impl OutputRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("output record serializes")
    }

    /// The human-readable form; same values as the JSON form.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let input = &self.input;
        let gpu_word = if input.gpu_count == 1 { "GPU" } else { "GPUs" };
        let _ = writeln!(out, "model:      {} ({})", input.model, input.manifest_path);
        let _ = writeln!(
            out,
            "hardware:   {} {gpu_word} x {} MB, page {} B, base {} MB [{}]",
            input.gpu_count, input.capacity_mb, input.page_bytes, input.base_mb,
            input.base_provenance
        );
        let _ = writeln!(
            out,
            "chunk:      {} elements [{}]",
            input.chunk_size, input.chunk_provenance
        );
        let _ = writeln!(
            out,
            "precision:  half {} B, full {} B, logits {} B, lm_head {}",
            input.precision.half_bytes,
            input.precision.full_bytes,
            input.precision.lm_head_bytes,
            if input.lm_head_tied { "tied" } else { "untied" }
        );
        if let Some(est) = &self.estimate {
            let _ = writeln!(
                out,
                "run:        strategy {} (dp {}, tp {}), batch_size {}, seq_len {}",
                est.strategy, est.dp_count, est.tp_count, est.batch_size, input.seq_len
            );
            let _ = writeln!(out);
            let _ = writeln!(out, "{:<20} {:>16} {:>12}", "component", "bytes", "MB");
            let b = &est.breakdown.bytes;
            let m = &est.breakdown.mb;
            for (name, bytes, mb) in [
                ("base", b.base, &m.base),
                ("params", b.params, &m.params),
                ("params_half", b.params_half, &m.params_half),
                ("params_full", b.params_full, &m.params_full),
                ("optimizer_states", b.optimizer_states, &m.optimizer_states),
                ("outputs", b.outputs, &m.outputs),
                ("lm_head", b.lm_head, &m.lm_head),
                ("tp_backward_buffer", b.tp_backward_buffer, &m.tp_backward_buffer),
                ("peak", b.peak, &m.peak),
            ] {
                let _ = writeln!(out, "{name:<20} {bytes:>16} {mb:>12}");
            }
            let _ = writeln!(
                out,
                "{:<20} {:>16} {:>12}",
                "capacity", input.capacity_bytes, input.capacity_mb
            );
            let _ = writeln!(out);
            if est.fits {
                let _ = writeln!(
                    out,
                    "verdict: fits (headroom {} B / {} MB)",
                    est.headroom_bytes, est.headroom_mb
                );
            } else {
                let _ = writeln!(
                    out,
                    "verdict: predicted OOM (over by {} B / {} MB)",
                    -est.headroom_bytes,
                    est.headroom_mb.trim_start_matches('-')
                );
            }
        }
        if let Some(plan) = &self.plan {
            let _ = writeln!(out, "run:        seq_len {}", input.seq_len);
            let _ = writeln!(
                out,
                "search:     batch_cap {}, hybrid policy {}",
                plan.batch_cap, plan.hybrid_policy
            );
            let _ = writeln!(out);
            let _ = writeln!(
                out,
                "{:<14} {:>4} {:>4} {:>10} {:>8} {:>16} {:>12}",
                "strategy", "dp", "tp", "max_batch", "score", "peak bytes", "peak MB"
            );
            for row in &plan.rows {
                let (peak_bytes, peak_mb) = match &row.breakdown {
                    Some(b) => (b.bytes.peak.to_string(), b.mb.peak.clone()),
                    None => ("-".to_string(), "-".to_string()),
                };
                let _ = writeln!(
                    out,
                    "{:<14} {:>4} {:>4} {:>10} {:>8} {:>16} {:>12}",
                    row.strategy,
                    row.dp_count,
                    row.tp_count,
                    row.max_batch,
                    row.score.to_string(),
                    peak_bytes,
                    peak_mb
                );
            }
            let _ = writeln!(out);
            if plan.chosen == StrategyKind::CpuOffload.token() {
                let _ = writeln!(
                    out,
                    "chosen: {} (no GPU strategy fits one sample; train with \
                     host-offloaded optimizer state)",
                    plan.chosen
                );
            } else {
                let _ = writeln!(out, "chosen: {} with batch {}", plan.chosen, plan.chosen_batch);
            }
        }
        out
    }
}

/// Fixed column order of the sweep CSV.
pub const SWEEP_COLUMNS: [&str; 14] = [
    "seq_len",
    "gpu_count",
    "cdp_max_batch",
    "cdp_peak_mb",
    "adp_max_batch",
    "adp_peak_mb",
    "tp_max_batch",
    "tp_peak_mb",
    "hybrid_layout",
    "hybrid_max_batch",
    "hybrid_peak_mb",
    "chosen",
    "chosen_batch",
    "error",
];

/// Renders sweep cells as CSV with the fixed [`SWEEP_COLUMNS`] order.
/// Strategies a cell did not evaluate leave their columns empty; a cell
/// whose planner call failed fills only the error column.
pub fn sweep_csv(cells: &[SweepCell]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(SWEEP_COLUMNS)
        .expect("csv header writes");
    for cell in cells {
        let mut record = vec![cell.seq_len.to_string(), cell.gpu_count.to_string()];
        match &cell.report {
            Ok(report) => {
                for kind in [StrategyKind::Cdp, StrategyKind::Adp, StrategyKind::Tp] {
                    match report.result_for(kind) {
                        Some(row) => {
                            record.push(row.max_batch.to_string());
                            record.push(
                                row.breakdown_at_max
                                    .map(|b| mb_string(b.peak))
                                    .unwrap_or_default(),
                            );
                        }
                        None => {
                            record.push(String::new());
                            record.push(String::new());
                        }
                    }
                }
                match report.best_hybrid() {
                    Some(row) => {
                        record.push(row.strategy.label());
                        record.push(row.max_batch.to_string());
                        record.push(
                            row.breakdown_at_max
                                .map(|b| mb_string(b.peak))
                                .unwrap_or_default(),
                        );
                    }
                    None => record.extend([String::new(), String::new(), String::new()]),
                }
                record.push(report.chosen.label());
                record.push(report.chosen_batch.to_string());
                record.push(String::new());
            }
            Err(err) => {
                record.extend(std::iter::repeat_n(String::new(), 11));
                record.push(err.to_string());
            }
        }
        writer.write_record(&record).expect("csv row writes");
    }
    String::from_utf8(writer.into_inner().expect("csv buffer flushes"))
        .expect("csv output is utf-8")
}
