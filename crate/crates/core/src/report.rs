//! Output serialization: CSV traces and JSON reports.
//!
//! Column orders are part of the output contract and are frozen here.
//! Floats are written with Rust's default shortest-roundtrip formatting in
//! both CSV and JSON, so the same quantity parses back to the identical
//! bit pattern from either file.

use std::path::Path;

use serde::Serialize;

use crate::controller::{HorizonSummary, TraceRow};
use crate::error::{Error, Result};
use crate::market::{Bid, BidValidity, MarketProduct, ScenarioOutcome};
use crate::predict::{
    all_fail_upper_bound, all_success_lower_bound, CurvePoint, IterationRecord, PredictionResult,
    SearchMode,
};
use crate::vb::VbSnapshot;
use chrono::NaiveDateTime;

pub const TRACE_HEADER: [&str; 14] = [
    "step",
    "r_kw",
    "beta_kw",
    "e_kw",
    "abs_error_kw",
    "toggles",
    "overrides",
    "m_plus_kw",
    "m_minus_kw",
    "p_plus_kw",
    "p_minus_kw",
    "consumed_kw",
    "baseline_kw",
    "forced_kw",
];

pub const SNAPSHOT_HEADER: [&str; 9] = [
    "step",
    "m_plus_kw",
    "m_minus_kw",
    "p_plus_kw",
    "p_minus_kw",
    "beta_kw",
    "consumed_kw",
    "baseline_kw",
    "forced_kw",
];

pub const CURVE_HEADER: [&str; 4] = ["x_kw", "p_hat", "lower", "upper"];

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

fn finish(writer: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::InvalidInput(format!("csv buffer error: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Per-step controller trace; optional cells are empty outside managed
/// steps.
pub fn trace_csv_string(rows: &[TraceRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_HEADER)?;
    for row in rows {
        let s = &row.snapshot;
        w.write_record([
            row.step.to_string(),
            fmt(row.r_kw),
            fmt(s.beta_kw),
            fmt_opt(row.e_kw),
            fmt_opt(row.abs_error_kw),
            row.toggles.to_string(),
            row.overrides.to_string(),
            fmt(s.m_plus_kw),
            fmt(s.m_minus_kw),
            fmt(s.p_plus_kw),
            fmt(s.p_minus_kw),
            fmt(s.consumed_kw),
            fmt(s.baseline_kw),
            fmt(s.forced_kw),
        ])?;
    }
    finish(w)
}

/// Aggregate state per step, without controller columns.
pub fn snapshot_csv_string(snapshots: &[VbSnapshot]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SNAPSHOT_HEADER)?;
    for s in snapshots {
        w.write_record([
            s.step.to_string(),
            fmt(s.m_plus_kw),
            fmt(s.m_minus_kw),
            fmt(s.p_plus_kw),
            fmt(s.p_minus_kw),
            fmt(s.beta_kw),
            fmt(s.consumed_kw),
            fmt(s.baseline_kw),
            fmt(s.forced_kw),
        ])?;
    }
    finish(w)
}

/// Success-probability curve samples.
pub fn curve_csv_string(points: &[CurvePoint]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CURVE_HEADER)?;
    for p in points {
        w.write_record([fmt(p.power_kw), fmt(p.p_hat), fmt(p.lower), fmt(p.upper)])?;
    }
    finish(w)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfidenceBlock {
    pub epsilon: f64,
    pub delta: f64,
    pub trials_per_batch: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResultBlock {
    pub power_kw: f64,
    pub final_midpoint_kw: f64,
    pub iterations: usize,
    pub trials_total: usize,
}

/// JSON document for a certified-power search.
#[derive(Debug, Clone, Serialize)]
pub struct PredictionReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario_id: Option<String>,
    pub mode: String,
    pub confidence: ConfidenceBlock,
    /// Success-probability interval certified for the returned power.
    pub certified_interval: [f64; 2],
    pub result: ResultBlock,
    pub endpoint_check: String,
    pub iteration_log: Vec<IterationRecord>,
    pub wall_time_ms: u64,
}

impl PredictionReport {
    pub fn new(
        scenario_id: Option<String>,
        outcome: &PredictionResult,
        wall_time_ms: u64,
    ) -> Self {
        let delta = outcome.confidence.delta;
        let (mode, certified_interval, endpoint_check) = match outcome.mode {
            SearchMode::GuaranteedSupply => (
                "guaranteed-supply".to_string(),
                [all_success_lower_bound(outcome.trials_per_batch, delta), 1.0],
                format!(
                    "zero-power anchor certified all-success over {} trials",
                    outcome.trials_per_batch
                ),
            ),
            SearchMode::GuaranteedFailure => (
                "guaranteed-failure".to_string(),
                [0.0, all_fail_upper_bound(outcome.trials_per_batch, delta)],
                format!(
                    "far endpoint certified all-fail over {} trials",
                    outcome.trials_per_batch
                ),
            ),
        };
        Self {
            scenario_id,
            mode,
            confidence: ConfidenceBlock {
                epsilon: outcome.confidence.epsilon,
                delta,
                trials_per_batch: outcome.trials_per_batch,
            },
            certified_interval,
            result: ResultBlock {
                power_kw: outcome.power_kw,
                final_midpoint_kw: outcome.final_midpoint_kw,
                iterations: outcome.iterations,
                trials_total: outcome.trials_total,
            },
            endpoint_check,
            iteration_log: outcome.log.clone(),
            wall_time_ms,
        }
    }
}

/// JSON document for a full market participation.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    pub scenario_id: String,
    pub product: MarketProduct,
    pub delivery_start: NaiveDateTime,
    pub gate_closure: NaiveDateTime,
    pub prediction: PredictionReport,
    pub bid: Bid,
    pub validity: BidValidity,
    /// Delivery-run tallies; absent when the bid was rejected.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delivery: Option<HorizonSummary>,
    pub wall_time_ms: u64,
}

impl ScenarioReport {
    pub fn new(outcome: &ScenarioOutcome, wall_time_ms: u64) -> Self {
        Self {
            scenario_id: outcome.scenario_id.clone(),
            product: outcome.product,
            delivery_start: outcome.delivery_start,
            gate_closure: outcome.gate_closure,
            prediction: PredictionReport::new(None, &outcome.prediction, 0),
            bid: outcome.bid,
            validity: outcome.validity.clone(),
            delivery: outcome.delivery.as_ref().map(|d| d.summary.clone()),
            wall_time_ms,
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json_string(value)?)?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predict::ConfidenceSpec;

    fn snapshot(step: usize) -> VbSnapshot {
        VbSnapshot {
            step,
            m_plus_kw: 4.4,
            m_minus_kw: 1.2,
            p_plus_kw: 0.0,
            p_minus_kw: 0.0,
            beta_kw: -1.2,
            consumed_kw: 0.0,
            baseline_kw: 1.2,
            forced_kw: 0.0,
        }
    }

    #[test]
    fn trace_csv_layout_is_frozen() {
        let rows = vec![
            TraceRow {
                step: 0,
                r_kw: 0.0,
                managed: false,
                e_kw: None,
                abs_error_kw: None,
                toggles: 1,
                overrides: 0,
                snapshot: snapshot(0),
            },
            TraceRow {
                step: 1,
                r_kw: 2.5,
                managed: true,
                e_kw: Some(3.7),
                abs_error_kw: Some(0.1),
                toggles: 2,
                overrides: 1,
                snapshot: snapshot(1),
            },
        ];
        let text = trace_csv_string(&rows).unwrap();
        let expected = "\
step,r_kw,beta_kw,e_kw,abs_error_kw,toggles,overrides,m_plus_kw,m_minus_kw,p_plus_kw,p_minus_kw,consumed_kw,baseline_kw,forced_kw\n\
0,0,-1.2,,,1,0,4.4,1.2,0,0,0,1.2,0\n\
1,2.5,-1.2,3.7,0.1,2,1,4.4,1.2,0,0,0,1.2,0\n";
        assert_eq!(text, expected, "trace columns are a frozen contract");
    }

    #[test]
    fn snapshot_csv_layout_is_frozen() {
        let text = snapshot_csv_string(&[snapshot(3)]).unwrap();
        let expected = "\
step,m_plus_kw,m_minus_kw,p_plus_kw,p_minus_kw,beta_kw,consumed_kw,baseline_kw,forced_kw\n\
3,4.4,1.2,0,0,-1.2,0,1.2,0\n";
        assert_eq!(text, expected);
    }

    #[test]
    fn curve_csv_layout_is_frozen() {
        let points = vec![CurvePoint {
            power_kw: 1500.5,
            successes: 260,
            trials: 262,
            p_hat: 0.9923664122137404,
            lower: 0.97,
            upper: 1.0,
        }];
        let text = curve_csv_string(&points).unwrap();
        let expected = "x_kw,p_hat,lower,upper\n1500.5,0.9923664122137404,0.97,1\n";
        assert_eq!(text, expected);
    }

    #[test]
    fn csv_and_json_floats_parse_to_identical_bits() {
        for v in [0.1, 1.0 / 3.0, 5841.8, -1482.9, 1.0e-7, 2.489_970_7] {
            let via_csv: f64 = fmt(v).parse().unwrap();
            let via_json: f64 = serde_json::to_string(&v).unwrap().parse().unwrap();
            assert_eq!(via_csv.to_bits(), v.to_bits(), "csv roundtrip of {v}");
            assert_eq!(via_json.to_bits(), v.to_bits(), "json roundtrip of {v}");
        }
    }

    #[test]
    fn prediction_report_certifies_the_right_interval() {
        let outcome = PredictionResult {
            power_kw: 3600.0,
            final_midpoint_kw: 3605.0,
            iterations: 9,
            trials_total: 1500,
            trials_per_batch: 262,
            mode: SearchMode::GuaranteedSupply,
            confidence: ConfidenceSpec {
                epsilon: 0.02,
                delta: 0.005,
            },
            log: vec![IterationRecord {
                iteration: 0,
                a_kw: 0.0,
                b_kw: 5000.0,
                x_kw: 2500.0,
                successes: 262,
                trials: 262,
            }],
        };
        let report = PredictionReport::new(Some("case".into()), &outcome, 12);
        assert_eq!(report.mode, "guaranteed-supply");
        assert!((report.certified_interval[0] - 0.980_061).abs() < 1e-5);
        assert_eq!(report.certified_interval[1], 1.0);

        let json: serde_json::Value =
            serde_json::from_str(&to_json_string(&report).unwrap()).unwrap();
        assert_eq!(json["scenario_id"], "case");
        assert_eq!(json["result"]["power_kw"], 3600.0);
        assert_eq!(json["confidence"]["trials_per_batch"], 262);
        assert_eq!(json["iteration_log"][0]["x_kw"], 2500.0);
        assert_eq!(json["wall_time_ms"], 12);

        let failure = PredictionResult {
            mode: SearchMode::GuaranteedFailure,
            ..outcome
        };
        let report = PredictionReport::new(None, &failure, 0);
        assert_eq!(report.certified_interval[0], 0.0);
        assert!((report.certified_interval[1] - 0.019_939).abs() < 1e-5);
        let json: serde_json::Value =
            serde_json::from_str(&to_json_string(&report).unwrap()).unwrap();
        assert!(
            json.get("scenario_id").is_none(),
            "absent ids must be omitted, not null"
        );
    }
}
