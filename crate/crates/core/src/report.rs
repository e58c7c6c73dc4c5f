//! Trace sampling and the JSON run report.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::delay::ControlOutcome;
use crate::engine::{apex_times, StickInterval, Termination, Trajectory, ZenoOptions};
use crate::error::Result;
use crate::integrator::SegmentMode;
use crate::models::ModelInstance;
use crate::theorem::ChatteringCertificate;
use crate::zeno::detect_zeno;

pub const SCHEMA_VERSION: u32 = 1;

/// Uniform samples per run when no output step is given.
pub const DEFAULT_TRACE_SAMPLES: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceFlag {
    Flight,
    Impact,
    Apex,
    Stick,
    Release,
}

impl TraceFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            TraceFlag::Flight => "flight",
            TraceFlag::Impact => "impact",
            TraceFlag::Apex => "apex",
            TraceFlag::Stick => "stick",
            TraceFlag::Release => "release",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub t: f64,
    pub y: Vec<f64>,
    /// Flight arc: the number of impacts before the record.
    pub segment: usize,
    pub flag: TraceFlag,
}

/// Samples `traj` every `dt_out` (default: run length / 2000) and adds a
/// record at every event: a pre/post pair per impact, each apex, the start of
/// every sticking interval and each release.
pub fn build_trace(traj: &Trajectory, dt_out: Option<f64>) -> Vec<TraceRecord> {
    let (t0, t1) = (traj.t_start(), traj.t_end());
    let seg_index = |t: f64| traj.segments.partition_point(|s| s.t_start() <= t).saturating_sub(1);
    let segment_at = |t: f64| traj.segments.get(seg_index(t)).map_or(0, |s| s.arc());

    // rank orders records that share a time
    let mut events: Vec<(u8, TraceRecord)> = Vec::new();
    for imp in &traj.impacts {
        let post_seg = imp.index;
        let mut y = traj.state_at(imp.theta).map(|s| s.y).unwrap_or_else(|| vec![imp.x, imp.v_post]);
        y[0] = imp.x;
        y[1] = imp.v_pre;
        events.push((
            1,
            TraceRecord { t: imp.theta, y: y.clone(), segment: post_seg.saturating_sub(1), flag: TraceFlag::Impact },
        ));
        y[1] = imp.v_post;
        events.push((2, TraceRecord { t: imp.theta, y, segment: post_seg, flag: TraceFlag::Impact }));
    }
    for apex in apex_times(traj) {
        if let Some(s) = traj.state_at(apex.t) {
            events.push((3, TraceRecord { t: apex.t, y: s.y, segment: segment_at(apex.t), flag: TraceFlag::Apex }));
        }
    }
    for StickInterval { t_start, t_end, released, .. } in &traj.sticking {
        if let Some(s) = traj.state_at(*t_start) {
            events
                .push((4, TraceRecord { t: *t_start, y: s.y, segment: segment_at(*t_start), flag: TraceFlag::Stick }));
        }
        if *released {
            let seg = &traj.segments[seg_index(*t_end).saturating_sub(1)];
            if let Ok(s) = seg.eval(*t_end) {
                events.push((5, TraceRecord { t: *t_end, y: s.y, segment: seg.arc(), flag: TraceFlag::Release }));
            }
        }
    }

    let mut records: Vec<(u8, TraceRecord)> = Vec::new();
    if t1 > t0 {
        let dt = dt_out.filter(|d| *d > 0.0).unwrap_or((t1 - t0) / DEFAULT_TRACE_SAMPLES as f64);
        let n = ((t1 - t0) / dt).ceil() as usize;
        for k in 0..=n {
            let t = if k == n { t1 } else { t0 + k as f64 * dt };
            if events.iter().any(|(_, e)| e.t == t) {
                continue;
            }
            let segment = segment_at(t);
            if let Some(s) = traj.state_at(t) {
                let flag = match traj.segments.get(seg_index(t)).map(|s| s.mode()) {
                    Some(SegmentMode::Stick) => TraceFlag::Stick,
                    _ => TraceFlag::Flight,
                };
                records.push((0, TraceRecord { t, y: s.y, segment, flag }));
            }
        }
    } else {
        records.push((0, TraceRecord { t: t0, y: traj.initial.y.clone(), segment: 0, flag: TraceFlag::Flight }));
    }
    records.extend(events);
    records.sort_by(|a, b| a.1.t.total_cmp(&b.1.t).then(a.0.cmp(&b.0)));
    records.into_iter().map(|(_, r)| r).collect()
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV with columns `t, x1, .., xn, segment, flag`; numbers carry 17
/// significant digits.
pub fn write_trace_csv<W: Write>(records: &[TraceRecord], dim: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=dim).map(|i| format!("x{i}")));
    header.extend(["segment".to_string(), "flag".to_string()]);
    w.write_record(&header).map_err(csv_error)?;
    for r in records {
        let mut row = vec![fmt17(r.t)];
        row.extend(r.y.iter().map(|&v| fmt17(v)));
        row.push(r.segment.to_string());
        row.push(r.flag.as_str().to_string());
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_json<W: Write>(records: &[TraceRecord], out: W) -> Result<()> {
    serde_json::to_writer(out, records).map_err(|e| crate::Error::Io(e.to_string()))
}

fn csv_error(e: csv::Error) -> crate::Error {
    crate::Error::Io(e.to_string())
}

/// Run summary serialized as the JSON report.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema: u32,
    pub model: String,
    pub expression: String,
    pub parameters: BTreeMap<String, f64>,
    pub t_start: f64,
    pub t_end: f64,
    pub termination: Termination,
    pub impact_count: usize,
    pub impact_times: Vec<f64>,
    pub gaps: Vec<f64>,
    pub ratios: Vec<f64>,
    pub terminal_ratio: Option<f64>,
    pub theta_inf_estimate: Option<f64>,
    pub verdict: String,
    pub sticking: Vec<StickInterval>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub impact_cap: Option<usize>,
}

/// Classification of a controlled run.
#[derive(Debug, Clone, Serialize)]
pub struct ControlReport {
    pub schema: u32,
    pub model: String,
    #[serde(rename = "C")]
    pub gain: f64,
    pub tau: f64,
    pub history: &'static str,
    pub outcome: ControlOutcome,
}

impl RunReport {
    pub fn new(inst: &ModelInstance, traj: &Trajectory, zopts: &ZenoOptions, impact_cap: Option<usize>) -> Self {
        let times = traj.impact_times();
        let zeno = traj.zeno.clone().or_else(|| detect_zeno(&times, zopts).ok());
        let gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        let ratios: Vec<f64> = gaps.windows(2).map(|w| w[1] / w[0]).collect();
        let verdict = match &zeno {
            Some(z) => z.verdict.as_str(),
            None => "inconclusive",
        };
        RunReport {
            schema: SCHEMA_VERSION,
            model: inst.name.clone(),
            expression: inst.expression.clone(),
            parameters: inst.parameters.clone(),
            t_start: traj.t_start(),
            t_end: traj.t_end(),
            termination: traj.termination,
            impact_count: times.len(),
            terminal_ratio: zeno.as_ref().map(|z| z.terminal_ratio),
            theta_inf_estimate: zeno.as_ref().and_then(|z| z.theta_inf_estimate),
            impact_times: times,
            gaps,
            ratios,
            verdict: verdict.to_string(),
            sticking: traj.sticking.clone(),
            impact_cap,
        }
    }
}

/// Certificate wrapped with the schema version.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport<'a> {
    pub schema: u32,
    pub model: &'a str,
    pub expression: &'a str,
    #[serde(flatten)]
    pub certificate: &'a ChatteringCertificate,
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}
