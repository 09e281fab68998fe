//! Aggregate reports over run records.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::detector::{DetectorKind, DetectorModel};
use crate::table::RevertReason;

use super::metric::EM_VERSION;
use super::pipeline::RunRecord;

pub const DEFAULT_BUCKET_EDGES: [usize; 2] = [30, 60];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub label: String,
    pub min_rows: usize,
    /// Exclusive upper bound; `None` for the last bucket.
    pub max_rows: Option<usize>,
    pub count: usize,
    pub em_baseline: f64,
    pub em_toolwriter: f64,
    pub improvement: f64,
    pub em_oracle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    /// Records the baseline answers correctly.
    pub s_f: usize,
    /// Records the baseline gets wrong.
    pub s_bar_f: usize,
}

/// A detector policy re-scored over the recorded tool outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyScore {
    pub detector: String,
    pub em: f64,
    pub tool_applications: usize,
    /// False when some record needed a tool outcome that was not computed;
    /// those records count with their baseline EM.
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub em_version: String,
    pub dataset_size: usize,
    pub em_baseline: f64,
    pub em_toolwriter: f64,
    /// Mean of `max(em_baseline, em_tool)`; records without a tool outcome
    /// contribute their baseline EM.
    pub em_oracle_headroom: f64,
    pub oracle_headroom_complete: bool,
    pub partition: Partition,
    pub tool_applications: usize,
    pub buckets: Vec<Bucket>,
    pub revert_reasons: BTreeMap<String, usize>,
    pub generation_failures: BTreeMap<String, usize>,
    pub baseline_errors: usize,
    pub policies: Vec<PolicyScore>,
    pub config: Value,
}

fn mean(hits: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        hits as f64 / n as f64
    }
}

fn oracle_em(r: &RunRecord) -> bool {
    r.em_baseline || r.em_tool().unwrap_or(false)
}

fn bucket_label(lo: usize, hi: Option<usize>) -> String {
    match hi {
        Some(hi) => format!("[{lo},{hi})"),
        None => format!("[{lo},inf)"),
    }
}

/// Scores a detector policy from the recorded outcomes alone.
pub fn score_policy(records: &[RunRecord], model: &DetectorModel) -> PolicyScore {
    let mut hits = 0;
    let mut applications = 0;
    let mut complete = true;
    for r in records {
        let sigma = match model.kind {
            DetectorKind::Oracle => !r.em_baseline,
            _ => match &r.features {
                Some(f) => model.decide(f).map(|d| d.sigma).unwrap_or(false),
                None => model.kind == DetectorKind::Always,
            },
        };
        let em = if sigma {
            applications += 1;
            match r.em_tool() {
                Some(em) => em,
                None => {
                    complete = false;
                    r.em_baseline
                }
            }
        } else {
            r.em_baseline
        };
        hits += usize::from(em);
    }
    PolicyScore {
        detector: model.kind.as_str().to_string(),
        em: mean(hits, records.len()),
        tool_applications: applications,
        complete,
    }
}

/// Builds the report; `edges` split row counts into `[0,e1), [e1,e2), ...,
/// [ek,inf)` and each of `policies` is re-scored offline.
pub fn build_report(
    records: &[RunRecord],
    edges: &[usize],
    policies: &[DetectorModel],
    config: Value,
) -> RunReport {
    let n = records.len();
    let count = |f: &dyn Fn(&RunRecord) -> bool| records.iter().filter(|r| f(r)).count();
    let s_f = count(&|r| r.em_baseline);

    let mut bounds = vec![0usize];
    let mut sorted = edges.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    bounds.extend(sorted.into_iter().filter(|&e| e > 0));
    let buckets = bounds
        .iter()
        .enumerate()
        .map(|(i, &lo)| {
            let hi = bounds.get(i + 1).copied();
            let members: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.row_count >= lo && hi.is_none_or(|h| r.row_count < h))
                .collect();
            let m = members.len();
            let base = mean(members.iter().filter(|r| r.em_baseline).count(), m);
            let tw = mean(members.iter().filter(|r| r.em_final).count(), m);
            Bucket {
                label: bucket_label(lo, hi),
                min_rows: lo,
                max_rows: hi,
                count: m,
                em_baseline: base,
                em_toolwriter: tw,
                improvement: tw - base,
                em_oracle: mean(members.iter().filter(|r| oracle_em(r)).count(), m),
            }
        })
        .collect();

    let mut revert_reasons = BTreeMap::new();
    let mut generation_failures = BTreeMap::new();
    for r in records.iter().filter(|r| r.sigma) {
        if let Some(t) = &r.tool_outcome {
            if let Some(f) = &t.filter {
                if f.revert_reason != RevertReason::None {
                    *revert_reasons.entry(f.revert_reason.as_str().to_string()).or_insert(0) += 1;
                }
            }
            if let Some(g) = &t.generation_failure {
                *generation_failures.entry(g.kind().to_string()).or_insert(0) += 1;
            }
        }
    }

    RunReport {
        em_version: EM_VERSION.to_string(),
        dataset_size: n,
        em_baseline: mean(s_f, n),
        em_toolwriter: mean(count(&|r| r.em_final), n),
        em_oracle_headroom: mean(count(&oracle_em), n),
        oracle_headroom_complete: records.iter().all(|r| r.em_baseline || r.tool_outcome.is_some()),
        partition: Partition {
            s_f,
            s_bar_f: n - s_f,
        },
        tool_applications: count(&|r| r.sigma),
        buckets,
        revert_reasons,
        generation_failures,
        baseline_errors: count(&|r| r.baseline_error.is_some()),
        policies: policies.iter().map(|m| score_policy(records, m)).collect(),
        config,
    }
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Per-bucket EM as CSV.
    pub fn buckets_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record([
                "bucket",
                "min_rows",
                "max_rows",
                "count",
                "em_baseline",
                "em_toolwriter",
                "improvement",
                "em_oracle",
            ])
            .expect("in-memory write");
        for b in &self.buckets {
            writer
                .write_record([
                    b.label.clone(),
                    b.min_rows.to_string(),
                    b.max_rows.map(|m| m.to_string()).unwrap_or_default(),
                    b.count.to_string(),
                    format!("{:.6}", b.em_baseline),
                    format!("{:.6}", b.em_toolwriter),
                    format!("{:.6}", b.improvement),
                    format!("{:.6}", b.em_oracle),
                ])
                .expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("flush")).expect("utf-8 csv")
    }
}

/// One JSON line per record.
pub fn trace_jsonl(records: &[RunRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}

pub fn parse_trace(text: &str) -> Result<Vec<RunRecord>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
