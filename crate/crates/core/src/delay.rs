//! Pyragas delay feedback `C [x1(t - tau) - x1(t)]`, the recorded history it
//! reads from, and classification of controlled runs.

use std::sync::{Arc, RwLock};

use serde::Serialize;

use crate::engine::{apex_times, Trajectory};
use crate::error::{Error, FieldError, Result};
use crate::integrator::{DenseSegment, SegmentMode};
use crate::model::{HybridSystem, State, VectorField};
use crate::zeno::ZenoVerdict;

/// Default transient discarded before classifying, in time units.
pub const DEFAULT_T_SKIP: f64 = 50.0;
/// Default agreement tolerance between successive inter-peak intervals.
pub const DEFAULT_PERIOD_TOL: f64 = 0.02;
/// Minimum number of consecutive inter-peak intervals for a periodic verdict.
pub const MIN_PERIODS: usize = 5;

/// How the delayed position is read across impacts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryMode {
    /// From the recorded trajectory; position is continuous through impacts.
    #[default]
    Continuous,
    /// Every impact restarts the delay equation with a constant history equal
    /// to the impact position, as a delay solver restarted at each event does.
    RestartAtImpact,
}

impl HistoryMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            HistoryMode::Continuous => "continuous",
            HistoryMode::RestartAtImpact => "restart_at_impact",
        }
    }
}

/// Recorded past of a run: constant initial state before `t0`, committed
/// dense segments afterwards.
#[derive(Debug, Clone)]
pub struct History {
    delay: f64,
    mode: HistoryMode,
    initial: Option<State>,
    segments: Vec<DenseSegment>,
    /// Time and position of the latest restart.
    restart: Option<(f64, f64)>,
}

impl History {
    pub fn new(delay: f64) -> Self {
        Self::with_mode(delay, HistoryMode::Continuous)
    }

    pub fn with_mode(delay: f64, mode: HistoryMode) -> Self {
        History { delay, mode, initial: None, segments: Vec::new(), restart: None }
    }

    pub fn mode(&self) -> HistoryMode {
        self.mode
    }

    /// Restarts the record at the initial state of a new run.
    pub fn begin(&mut self, initial: State) {
        self.initial = Some(initial);
        self.segments.clear();
        self.restart = None;
    }

    /// Called by the engine after every impact.
    pub fn note_impact(&mut self, t: f64, position: f64) {
        if self.mode == HistoryMode::RestartAtImpact {
            self.restart = Some((t, position));
        }
    }

    pub fn push(&mut self, segment: DenseSegment) {
        self.segments.push(segment);
    }

    pub fn t0(&self) -> Option<f64> {
        self.initial.as_ref().map(|s| s.t)
    }

    /// Latest time covered by the record.
    pub fn covered_until(&self) -> Option<f64> {
        self.segments.last().map(|s| s.t_end()).or_else(|| self.t0())
    }

    /// Position only; this is all the feedback term consumes.
    pub fn position(&self, t: f64) -> std::result::Result<f64, FieldError> {
        let initial = self.initial.as_ref().ok_or(FieldError::HistoryGap { t, from: f64::NAN, to: f64::NAN })?;
        let t0 = initial.t;
        let gap = || FieldError::HistoryGap { t, from: t0 - self.delay, to: self.covered_until().unwrap_or(t0) };
        if let Some((t_r, x_r)) = self.restart {
            if t < t_r {
                return Ok(x_r);
            }
        }
        if t < t0 {
            // small slack for round-off in t - tau
            if t < t0 - self.delay * (1.0 + 1e-12) {
                return Err(gap());
            }
            return Ok(initial.position());
        }
        let seg = self.segment_at(t).ok_or_else(gap)?;
        Ok(seg.position_at(t))
    }

    fn segment_at(&self, t: f64) -> Option<&DenseSegment> {
        let idx = self.segments.partition_point(|s| s.t_end() <= t);
        match self.segments.get(idx) {
            Some(s) if s.t_start() <= t => Some(s),
            _ => self.segments.last().filter(|s| s.t_end() == t),
        }
    }

    /// Full state at `t`; at an impact time the post-impact velocity is returned.
    pub fn eval(&self, t: f64) -> Result<State> {
        let initial =
            self.initial.as_ref().ok_or(Error::Field(FieldError::HistoryGap { t, from: f64::NAN, to: f64::NAN }))?;
        if let Some((t_r, x_r)) = self.restart {
            if t < t_r {
                let mut y = vec![0.0; initial.y.len()];
                y[0] = x_r;
                return Ok(State::new(t, y));
            }
        }
        if t < initial.t {
            self.position(t)?;
            return Ok(State::new(t, initial.y.clone()));
        }
        let seg = self.segment_at(t).ok_or(Error::Field(FieldError::HistoryGap {
            t,
            from: initial.t - self.delay,
            to: self.covered_until().unwrap_or(initial.t),
        }))?;
        seg.eval(t)
    }
}

pub type SharedHistory = Arc<RwLock<History>>;

/// History recorder attached to a system whose field consults the past.
#[derive(Debug, Clone)]
pub(crate) struct DelayLink {
    pub delay: f64,
    pub history: SharedHistory,
}

/// Feedback gain, delay and the history it reads.
#[derive(Debug, Clone)]
pub struct DelayFeedback {
    gain: f64,
    delay: f64,
    history: SharedHistory,
}

impl DelayFeedback {
    pub fn new(gain: f64, delay: f64) -> Result<Self> {
        if !gain.is_finite() {
            return Err(Error::invalid("control_C", "gain must be finite"));
        }
        if !(delay > 0.0 && delay.is_finite()) {
            return Err(Error::invalid("control_tau", "delay must be positive"));
        }
        Ok(DelayFeedback { gain, delay, history: Arc::new(RwLock::new(History::new(delay))) })
    }

    /// Replaces the history with a fresh one using `mode`.
    pub fn with_history_mode(mut self, mode: HistoryMode) -> Self {
        self.history = Arc::new(RwLock::new(History::with_mode(self.delay, mode)));
        self
    }

    pub fn history_mode(&self) -> HistoryMode {
        self.history.read().expect("history lock poisoned").mode()
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    pub fn history(&self) -> SharedHistory {
        Arc::clone(&self.history)
    }
}

/// State of the recorded history at `t`.
pub fn history_eval(history: &History, t: f64) -> Result<State> {
    history.eval(t)
}

/// Base field plus `C (x(t - tau) - x)`. A zero gain returns the base field
/// unchanged.
pub fn controlled_field(base: &VectorField, fb: &DelayFeedback) -> VectorField {
    if fb.gain == 0.0 {
        return base.clone();
    }
    let base = base.clone();
    let (gain, delay) = (fb.gain, fb.delay);
    let history = Arc::clone(&fb.history);
    let label = format!("{} + {gain}*(x(t-{delay}) - x)", base.label());
    VectorField::fallible(label, move |x, v, t| {
        let lagged = history.read().expect("history lock poisoned").position(t - delay)?;
        Ok(base.eval(x, v, t)? + gain * (lagged - x))
    })
}

impl HybridSystem {
    /// Attaches delay feedback. The simulation engine records every committed
    /// segment into the feedback's history, so a controlled system must not be
    /// simulated from several threads at once.
    pub fn with_delay_feedback(mut self, fb: &DelayFeedback) -> Self {
        if fb.gain == 0.0 {
            return self;
        }
        self.field = controlled_field(&self.field, fb);
        self.delay = Some(DelayLink { delay: fb.delay, history: fb.history() });
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Classification {
    Periodic {
        period: f64,
        /// Mean peak-to-trough excursion.
        amplitude_pp: f64,
        /// Half the mean peak-to-trough excursion.
        amplitude_half_pp: f64,
        /// Mean peak value of x1.
        amplitude_peak: f64,
    },
    Chattering,
    Unresolved,
}

impl Classification {
    pub fn name(&self) -> &'static str {
        match self {
            Classification::Periodic { .. } => "periodic",
            Classification::Chattering => "chattering",
            Classification::Unresolved => "unresolved",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ControlOutcome {
    pub classification: Classification,
    pub transient_skipped: f64,
    pub peak_times: Vec<f64>,
    pub peak_values: Vec<f64>,
    pub trough_values: Vec<f64>,
}

/// Classifies the tail of a (controlled) run as periodic, chattering or
/// unresolved.
pub fn classify_outcome(traj: &Trajectory, t_skip: f64, tol_t: f64) -> ControlOutcome {
    let t_from = traj.t_start() + t_skip;

    let peaks: Vec<(f64, f64)> = apex_times(traj)
        .into_iter()
        .filter(|a| a.t > t_from)
        .filter_map(|a| traj.state_at(a.t).map(|s| (a.t, s.position())))
        .collect();

    // Lowest point between consecutive peaks: impacts or smooth minima.
    let mut minima: Vec<(f64, f64)> =
        traj.impacts.iter().filter(|i| i.theta > t_from).map(|i| (i.theta, i.x)).collect();
    minima.extend(smooth_minima(traj).into_iter().filter(|&(t, _)| t > t_from));
    minima.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut troughs = Vec::new();
    for w in peaks.windows(2) {
        let low =
            minima.iter().filter(|(t, _)| *t > w[0].0 && *t < w[1].0).map(|&(_, x)| x).fold(f64::INFINITY, f64::min);
        troughs.push(low);
    }

    let gaps: Vec<f64> = peaks.windows(2).map(|w| w[1].0 - w[0].0).collect();
    let mut classification = Classification::Unresolved;
    if gaps.len() >= MIN_PERIODS {
        let tail = &gaps[gaps.len() - MIN_PERIODS..];
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        if tail.iter().all(|g| (g - mean).abs() <= tol_t) {
            // extend the run backwards while intervals stay consistent
            let run = gaps.iter().rev().take_while(|g| (*g - mean).abs() <= tol_t).count();
            let period = gaps[gaps.len() - run..].iter().sum::<f64>() / run as f64;
            let first_peak = peaks.len() - 1 - run;
            let peak_mean = peaks[first_peak..].iter().map(|p| p.1).sum::<f64>() / (run + 1) as f64;
            let excursions: Vec<f64> = (first_peak..peaks.len() - 1)
                .filter(|&k| troughs[k].is_finite())
                .map(|k| peaks[k].1 - troughs[k])
                .collect();
            let pp =
                if excursions.is_empty() { f64::NAN } else { excursions.iter().sum::<f64>() / excursions.len() as f64 };
            classification = Classification::Periodic {
                period,
                amplitude_pp: pp,
                amplitude_half_pp: 0.5 * pp,
                amplitude_peak: peak_mean,
            };
        }
    }
    if classification == Classification::Unresolved {
        let accumulated = traj.zeno.as_ref().is_some_and(|z| z.verdict == ZenoVerdict::Chattering);
        if accumulated {
            classification = Classification::Chattering;
        }
    }

    ControlOutcome {
        classification,
        transient_skipped: t_skip,
        peak_times: peaks.iter().map(|p| p.0).collect(),
        peak_values: peaks.iter().map(|p| p.1).collect(),
        trough_values: troughs,
    }
}

/// Interior minima of x1 in flight (velocity crossing from negative to positive).
fn smooth_minima(traj: &Trajectory) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for seg in traj.segments.iter().filter(|s| s.mode() == SegmentMode::Flight) {
        let (a, b) = (seg.t_start(), seg.t_end());
        let n = 8;
        let mut t_prev = a;
        let mut v_prev = seg.velocity_at(a);
        for k in 1..=n {
            let tk = a + (b - a) * k as f64 / n as f64;
            let vk = seg.velocity_at(tk);
            if v_prev < 0.0 && vk > 0.0 {
                let mut lo = t_prev;
                let mut hi = tk;
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if seg.velocity_at(mid) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                out.push((lo, seg.position_at(lo)));
            }
            t_prev = tk;
            v_prev = vk;
        }
    }
    out
}
