//! Flight–impact cycles, Zeno cutoff, sticking on the surface and the
//! truncated (finitely many impacts) approximation.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrator::{
    advance, bracket_root, flight_rhs, from_local, stick_rhs, to_local, DenseSegment, SegmentMode, SegmentTemplate,
    StepControl, Vec4, EVENT_SAMPLES,
};
use crate::model::{Guard, HybridSystem, State};
use crate::zeno::{detect_zeno, ZenoReport, ZenoVerdict};

pub use crate::zeno::ZenoOptions;

/// Consecutive zero-length flights tolerated before giving up.
const MAX_STALLS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImpactEvent {
    /// 1-based impact index.
    pub index: usize,
    pub theta: f64,
    pub x: f64,
    pub v_pre: f64,
    pub v_post: f64,
    pub surface_velocity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StickCause {
    /// Started at rest on the surface.
    Rest,
    /// Impact sequence accumulated.
    Zeno,
    /// Contact with (numerically) zero relative speed.
    Grazing,
    /// Impact budget of the truncated system exhausted.
    Truncation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StickInterval {
    pub t_start: f64,
    pub t_end: f64,
    /// The interval ended because the contact reaction changed sign.
    pub released: bool,
    pub cause: StickCause,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ReachedTEnd,
    ZenoDetected,
    ImpactCap,
    Error,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::ReachedTEnd => "reached_t_end",
            Termination::ZenoDetected => "zeno_detected",
            Termination::ImpactCap => "impact_cap",
            Termination::Error => "error",
        }
    }
}

/// Simulation output.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub guard: Guard,
    pub dim: usize,
    pub initial: State,
    pub segments: Vec<DenseSegment>,
    pub impacts: Vec<ImpactEvent>,
    pub sticking: Vec<StickInterval>,
    pub zeno: Option<ZenoReport>,
    pub termination: Termination,
}

impl Trajectory {
    pub fn t_start(&self) -> f64 {
        self.initial.t
    }

    pub fn t_end(&self) -> f64 {
        self.segments.last().map_or(self.initial.t, |s| s.t_end())
    }

    pub fn impact_times(&self) -> Vec<f64> {
        self.impacts.iter().map(|i| i.theta).collect()
    }

    /// State at `t`; at an impact time the post-impact state is returned.
    pub fn state_at(&self, t: f64) -> Option<State> {
        let idx = self.segments.partition_point(|s| s.t_start() <= t);
        if idx == 0 {
            return (t == self.initial.t).then(|| self.initial.clone());
        }
        let seg = &self.segments[idx - 1];
        if t <= seg.t_end() {
            seg.eval(t).ok()
        } else {
            None
        }
    }

    /// Accumulation time estimate, if the run accumulated.
    pub fn theta_inf(&self) -> Option<f64> {
        self.zeno.as_ref().and_then(|z| z.theta_inf_estimate)
    }
}

/// Runs the full impacting system.
pub fn simulate(
    system: &HybridSystem,
    init: &State,
    t_end: f64,
    ctrl: &StepControl,
    zopts: &ZenoOptions,
) -> Result<Trajectory> {
    run(system, init, t_end, ctrl, zopts, None)
}

/// Largest impact count of the truncated system, `floor(1 / r)`.
pub fn truncation_cap(restitution: f64) -> usize {
    (1.0 / restitution).floor() as usize
}

/// Runs the truncated system: at most `floor(1/r)` impacts, after which the
/// body rests on the surface.
pub fn simulate_truncated(
    system: &HybridSystem,
    init: &State,
    t_end: f64,
    ctrl: &StepControl,
    zopts: &ZenoOptions,
) -> Result<Trajectory> {
    let cap = truncation_cap(system.impact.restitution());
    run(system, init, t_end, ctrl, zopts, Some(cap))
}

/// Same as [`simulate_truncated`] with an explicit impact budget.
pub fn simulate_with_cap(
    system: &HybridSystem,
    init: &State,
    t_end: f64,
    ctrl: &StepControl,
    zopts: &ZenoOptions,
    cap: usize,
) -> Result<Trajectory> {
    run(system, init, t_end, ctrl, zopts, Some(cap))
}

struct Recorder<'a> {
    system: &'a HybridSystem,
}

impl Recorder<'_> {
    fn begin(&self, init: &State) {
        if let Some(link) = &self.system.delay {
            link.history.write().expect("history lock poisoned").begin(init.clone());
        }
    }

    fn push(&self, seg: &DenseSegment) -> Result<()> {
        if let Some(link) = &self.system.delay {
            link.history.write().expect("history lock poisoned").push(seg.clone());
        }
        Ok(())
    }

    fn impact(&self, t: f64, x: f64) {
        if let Some(link) = &self.system.delay {
            link.history.write().expect("history lock poisoned").note_impact(t, x);
        }
    }
}

/// Outcome of a sticking phase.
#[derive(Debug, Clone)]
pub struct StickOutcome {
    pub segments: Vec<DenseSegment>,
    /// Release time and the state on the surface at release.
    pub release: Option<State>,
}

/// Keeps the impacting pair on the surface from `start.t` while the contact
/// reaction `X''(t) - f(X, X', t)` stays non-negative; coupled coordinates
/// keep evolving. Returns early with a release state when the reaction
/// changes sign.
pub fn sticking_dynamics(system: &HybridSystem, start: &State, t_end: f64, ctrl: &StepControl) -> Result<StickOutcome> {
    ctrl.validate()?;
    system.check_state(start)?;
    let recorder = Recorder { system };
    let local = to_local(start, &system.guard);
    let (segments, release) = stick_phase(system, start.t, local, t_end, ctrl, &recorder, 0)?;
    let release = release.map(|(t, y)| local_to_state(system, t, &y));
    Ok(StickOutcome { segments, release })
}

fn local_to_state(system: &HybridSystem, t: f64, y: &Vec4) -> State {
    from_local(&system.guard, t, y, system.dimension())
}

fn reaction(system: &HybridSystem, t: f64) -> Result<f64> {
    let g = &system.guard;
    let f = system.field.eval(g.surface(t), g.surface_velocity(t), t)?;
    Ok(g.surface_acceleration(t) - f)
}

/// Sticking segments, and the release time and local state if released.
type StickPhase = (Vec<DenseSegment>, Option<(f64, Vec4)>);

fn stick_phase(
    system: &HybridSystem,
    t_s: f64,
    mut y: Vec4,
    t_end: f64,
    ctrl: &StepControl,
    recorder: &Recorder<'_>,
    arc: usize,
) -> Result<StickPhase> {
    let guard = system.guard;
    y[0] = 0.0;
    y[1] = 0.0;
    if reaction(system, t_s)? < 0.0 {
        return Ok((Vec::new(), Some((t_s, y))));
    }
    let adv = advance(
        stick_rhs(system),
        system.dimension(),
        t_s,
        y,
        t_end,
        None,
        ctrl,
        system.max_step(ctrl.dt_max),
        |t, _| reaction(system, t),
        SegmentTemplate { frame: guard, mode: SegmentMode::Stick, arc },
        |seg| recorder.push(seg),
    )?;
    Ok((adv.segments, adv.hit))
}

fn run(
    system: &HybridSystem,
    init: &State,
    t_end: f64,
    ctrl: &StepControl,
    zopts: &ZenoOptions,
    cap: Option<usize>,
) -> Result<Trajectory> {
    ctrl.validate()?;
    zopts.validate()?;
    system.check_state(init)?;
    let guard = system.guard;
    let g0 = system.guard_value(init);
    if g0 < -ctrl.position_tol {
        return Err(Error::InitialPenetration { value: g0 });
    }

    let recorder = Recorder { system };
    recorder.begin(init);
    let dim = system.dimension();
    let dt_cap = system.max_step(ctrl.dt_max);

    let mut traj = Trajectory {
        guard,
        dim,
        initial: init.clone(),
        segments: Vec::new(),
        impacts: Vec::new(),
        sticking: Vec::new(),
        zeno: None,
        termination: Termination::ReachedTEnd,
    };

    let mut t = init.t;
    let mut y = to_local(init, &guard);
    let mut h_hint = None;
    let mut stalls = 0;
    // Pending contact phase: why the body is on the surface now.
    let mut contact: Option<StickCause> = None;
    if g0.abs() <= ctrl.position_tol && y[1].abs() < zopts.v_stick {
        contact = Some(StickCause::Rest);
    }

    while t < t_end {
        if let Some(cause) = contact.take() {
            let (segs, release) = stick_phase(system, t, y, t_end, ctrl, &recorder, traj.impacts.len())?;
            let stick_end = segs.last().map_or(t, |s| s.t_end());
            traj.segments.extend(segs);
            match release {
                Some((t_r, y_r)) => {
                    // Zero-length contact means the reaction was already negative.
                    if t_r > t || !traj.sticking.is_empty() || cause != StickCause::Grazing {
                        traj.sticking.push(StickInterval { t_start: t, t_end: t_r, released: true, cause });
                    }
                    t = t_r;
                    y = y_r;
                    h_hint = None;
                }
                None => {
                    traj.sticking.push(StickInterval { t_start: t, t_end: stick_end, released: false, cause });
                    break;
                }
            }
            continue;
        }

        let adv = advance(
            flight_rhs(system),
            dim,
            t,
            y,
            t_end,
            h_hint,
            ctrl,
            dt_cap,
            |_, yy| Ok(yy[0]),
            SegmentTemplate { frame: guard, mode: SegmentMode::Flight, arc: traj.impacts.len() },
            |seg| recorder.push(seg),
        )?;
        traj.segments.extend(adv.segments);
        let Some((theta, mut y_pre)) = adv.hit else {
            break;
        };

        if theta <= t {
            stalls += 1;
            if stalls > MAX_STALLS {
                return Err(Error::Stalled { t });
            }
        } else {
            stalls = 0;
        }

        let s = guard.surface_velocity(theta);
        y_pre[0] = 0.0;
        t = theta;
        let v_pre = y_pre[1] + s;
        let v_post = match system.impact.apply(v_pre, s) {
            Ok(v) => v,
            Err(Error::GrazingImpact { .. }) | Err(Error::InvalidApproach { .. }) => {
                y = y_pre;
                // A grazing contact that ends a shrinking impact sequence is its accumulation point.
                let report = detect_zeno(&traj.impact_times(), zopts).ok();
                if report.as_ref().is_some_and(|z| z.verdict == ZenoVerdict::Chattering) {
                    traj.zeno = report;
                    traj.termination = Termination::ZenoDetected;
                    contact = Some(StickCause::Zeno);
                } else {
                    contact = Some(StickCause::Grazing);
                }
                continue;
            }
            Err(e) => return Err(e),
        };

        let index = traj.impacts.len() + 1;
        traj.impacts.push(ImpactEvent { index, theta, x: guard.surface(theta), v_pre, v_post, surface_velocity: s });
        recorder.impact(theta, guard.surface(theta));
        y = y_pre;
        y[1] = v_post - s;

        if index > zopts.max_impacts {
            traj.termination = Termination::ImpactCap;
            return finish(traj, ctrl);
        }

        let gap = (index >= 2).then(|| theta - traj.impacts[index - 2].theta);
        let accumulated = gap.is_some_and(|d| d < zopts.min_gap) || (v_post - s).abs() < zopts.v_stick;
        if accumulated {
            let times = traj.impact_times();
            traj.zeno = detect_zeno(&times, zopts).ok();
            traj.termination = Termination::ZenoDetected;
            contact = Some(StickCause::Zeno);
            continue;
        }
        if cap == Some(index) {
            traj.termination = Termination::ImpactCap;
            contact = Some(StickCause::Truncation);
            continue;
        }

        // Arc duration estimate from the rebound speed and relative acceleration.
        let a_rel = system.field.eval(guard.surface(theta), v_post, theta)? - guard.surface_acceleration(theta);
        h_hint = (a_rel < 0.0).then(|| 1.2 * 2.0 * (v_post - s).abs() / a_rel.abs());
    }

    finish(traj, ctrl)
}

fn finish(traj: Trajectory, ctrl: &StepControl) -> Result<Trajectory> {
    check_non_penetration(&traj, 100, 10.0 * ctrl.position_tol)?;
    Ok(traj)
}

/// Fails if any flight segment dips below `-tol` at one of `samples` interior
/// points.
pub fn check_non_penetration(traj: &Trajectory, samples: usize, tol: f64) -> Result<()> {
    for seg in traj.segments.iter().filter(|s| s.mode() == SegmentMode::Flight) {
        let (a, b) = (seg.t_start(), seg.t_end());
        for k in 1..=samples {
            let t = a + (b - a) * k as f64 / (samples + 1) as f64;
            let value = seg.local_at(t)[0];
            if value < -tol {
                return Err(Error::PenetrationDetected { t, value });
            }
        }
    }
    Ok(())
}

/// Apex of a flight arc: velocity passes from positive to non-positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Apex {
    /// Number of impacts before the arc (0 for the initial descent).
    pub arc: usize,
    pub t: f64,
}

/// Interior velocity zeros (maxima of x1) of every flight arc, plus the
/// starting time when the run starts at rest.
pub fn apex_times(traj: &Trajectory) -> Vec<Apex> {
    let mut out = Vec::new();
    if let Some(first) = traj.segments.first() {
        if first.mode() == SegmentMode::Flight && traj.initial.y[1] == 0.0 {
            out.push(Apex { arc: 0, t: traj.initial.t });
        }
    }
    for seg in traj.segments.iter().filter(|s| s.mode() == SegmentMode::Flight) {
        let (a, b) = (seg.t_start(), seg.t_end());
        let mut t_prev = a;
        let mut v_prev = seg.velocity_at(a);
        for k in 1..=EVENT_SAMPLES + 1 {
            let tk = if k == EVENT_SAMPLES + 1 { b } else { a + (b - a) * k as f64 / (EVENT_SAMPLES + 1) as f64 };
            let vk = seg.velocity_at(tk);
            if v_prev > 0.0 && vk <= 0.0 {
                let root = if vk == 0.0 {
                    Ok(tk)
                } else {
                    bracket_root(|s| Ok(seg.velocity_at(s)), t_prev, v_prev, tk, vk, 1e-13)
                };
                if let Ok(t) = root {
                    out.push(Apex { arc: seg.arc(), t });
                }
            }
            t_prev = tk;
            v_prev = vk;
        }
    }
    out
}

/// Sup-norm differences between two trajectories on a uniform grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryDifference {
    pub t_from: f64,
    pub t_to: f64,
    pub position: f64,
    pub velocity: f64,
}

/// Compares `a` and `b` on their common time window.
pub fn compare_trajectories(a: &Trajectory, b: &Trajectory, grid_n: usize) -> Result<TrajectoryDifference> {
    let from = a.t_start().max(b.t_start());
    let to = a.t_end().min(b.t_end());
    compare_on_window(a, b, from, to, grid_n)
}

/// Compares `a` and `b` on `[from, to]`, which must lie in both time spans.
pub fn compare_on_window(
    a: &Trajectory,
    b: &Trajectory,
    from: f64,
    to: f64,
    grid_n: usize,
) -> Result<TrajectoryDifference> {
    let lo = a.t_start().max(b.t_start());
    let hi = a.t_end().min(b.t_end());
    if !(from <= to && from >= lo && to <= hi) {
        return Err(Error::DisjointWindows);
    }
    let n = grid_n.max(1);
    let mut position: f64 = 0.0;
    let mut velocity: f64 = 0.0;
    for k in 0..=n {
        let t = if k == n { to } else { from + (to - from) * k as f64 / n as f64 };
        let (sa, sb) = match (a.state_at(t), b.state_at(t)) {
            (Some(sa), Some(sb)) => (sa, sb),
            _ => return Err(Error::DisjointWindows),
        };
        position = position.max((sa.position() - sb.position()).abs());
        velocity = velocity.max((sa.velocity() - sb.velocity()).abs());
    }
    Ok(TrajectoryDifference { t_from: from, t_to: to, position, velocity })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ImpactLaw, VectorField};

    const G: f64 = 9.8;

    fn ball(r: f64) -> HybridSystem {
        HybridSystem::new(VectorField::constant(-G), Guard::fixed(0.0), ImpactLaw::new(r).unwrap())
    }

    fn example1(r: f64) -> HybridSystem {
        let f = VectorField::new("-cos(v)-x^3", |x: f64, v: f64, _| -v.cos() - x.powi(3));
        HybridSystem::new(f, Guard::fixed(2.0), ImpactLaw::new(r).unwrap())
    }

    /// Closed-form impact times of a ball dropped from rest at height x0.
    fn ball_oracle(x0: f64, r: f64, n: usize) -> (Vec<f64>, f64) {
        let theta1 = (2.0 * x0 / G).sqrt();
        let v1 = G * theta1;
        let mut times = vec![theta1];
        for i in 1..n {
            let gap = 2.0 * v1 / G * r.powi(i as i32);
            times.push(times[i - 1] + gap);
        }
        let theta_inf = theta1 + 2.0 * v1 / G * r / (1.0 - r);
        (times, theta_inf)
    }

    #[test]
    fn bouncing_ball_matches_closed_form() {
        let traj = simulate(
            &ball(0.5),
            &State::new(0.0, vec![2.0, 0.0]),
            3.0,
            &StepControl::default(),
            &ZenoOptions::default(),
        )
        .unwrap();
        let (oracle, theta_inf) = ball_oracle(2.0, 0.5, 20);
        for (imp, exact) in traj.impacts.iter().zip(&oracle) {
            assert!((imp.theta - exact).abs() < 1e-10, "impact {}: {} vs {}", imp.index, imp.theta, exact);
        }
        assert_eq!(traj.termination, Termination::ZenoDetected);
        let zeno = traj.zeno.as_ref().unwrap();
        assert_eq!(zeno.verdict, ZenoVerdict::Chattering);
        assert!((zeno.theta_inf_estimate.unwrap() - theta_inf).abs() < 1e-6);
        assert!((theta_inf - 1.9167).abs() < 1e-4);
        // rests on the ground afterwards
        let end = traj.state_at(3.0).unwrap();
        assert_eq!(end.y, vec![0.0, 0.0]);
    }

    #[test]
    fn impact_map_is_applied_exactly() {
        let sys = example1(0.8);
        let traj =
            simulate(&sys, &State::new(0.0, vec![2.1, 0.0]), 3.0, &StepControl::default(), &ZenoOptions::default())
                .unwrap();
        assert!(traj.impacts.len() > 30);
        for imp in &traj.impacts {
            assert_eq!(imp.v_post, sys.impact.apply(imp.v_pre, imp.surface_velocity).unwrap());
            assert_eq!(imp.x, 2.0);
        }
        for w in traj.impacts.windows(2) {
            assert!(w[1].theta > w[0].theta);
            assert_eq!(w[1].index, w[0].index + 1);
        }
    }

    #[test]
    fn start_at_rest_on_guard_sticks() {
        let sys = example1(0.8);
        let traj =
            simulate(&sys, &State::new(0.0, vec![2.0, 0.0]), 5.0, &StepControl::default(), &ZenoOptions::default())
                .unwrap();
        assert!(traj.impacts.is_empty());
        assert_eq!(traj.sticking.len(), 1);
        assert_eq!(traj.sticking[0].cause, StickCause::Rest);
        assert!(!traj.sticking[0].released);
        for k in 0..=50 {
            let s = traj.state_at(0.1 * k as f64).unwrap();
            assert_eq!(s.y, vec![2.0, 0.0]);
        }
    }

    #[test]
    fn release_when_reaction_changes_sign() {
        // f(phi, 0, t) = t - 1 crosses zero at t = 1
        let field = VectorField::new("t-1", |_, _, t| t - 1.0);
        let sys = HybridSystem::new(field, Guard::fixed(0.0), ImpactLaw::new(0.5).unwrap());
        let out = sticking_dynamics(&sys, &State::new(0.0, vec![0.0, 0.0]), 3.0, &StepControl::default()).unwrap();
        let rel = out.release.expect("release");
        assert!((rel.t - 1.0).abs() < 1e-10);
        assert_eq!(rel.y, vec![0.0, 0.0]);
        // full run: the bead leaves the surface as (t-1)^3/6
        let traj =
            simulate(&sys, &State::new(0.0, vec![0.0, 0.0]), 2.0, &StepControl::default(), &ZenoOptions::default())
                .unwrap();
        assert!(traj.sticking[0].released);
        let x = traj.state_at(2.0).unwrap().position();
        assert!((x - 1.0 / 6.0).abs() < 1e-9, "{x}");
    }

    #[test]
    fn table_sticking_reaction_is_positive_near_crest() {
        let table = Guard::sinusoidal(1.0, 0.29).unwrap();
        let sys = HybridSystem::new(VectorField::constant(-G), table, ImpactLaw::new(0.9).unwrap());
        let t_c = std::f64::consts::PI / (2.0 * 0.29);
        let r = reaction(&sys, t_c).unwrap();
        assert!((r - (-0.29f64 * 0.29 + G)).abs() < 1e-12);
        let start = State::new(t_c - 1.0, vec![table.surface(t_c - 1.0), table.surface_velocity(t_c - 1.0)]);
        let out = sticking_dynamics(&sys, &start, t_c + 1.0, &StepControl::default()).unwrap();
        assert!(out.release.is_none());
        let mid = out.segments.iter().find(|s| s.contains(t_c)).unwrap().eval(t_c).unwrap();
        assert!((mid.position() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn truncation_caps() {
        assert_eq!(truncation_cap(0.5), 2);
        assert_eq!(truncation_cap(0.9), 1);
        assert_eq!(truncation_cap(0.2), 5);
        assert_eq!(truncation_cap(0.1), 10);
        assert_eq!(truncation_cap(0.05), 20);
    }

    #[test]
    fn truncated_run_agrees_before_last_impact() {
        let sys = ball(0.5);
        let init = State::new(0.0, vec![2.0, 0.0]);
        let ctrl = StepControl::default();
        let full = simulate(&sys, &init, 3.0, &ctrl, &ZenoOptions::default()).unwrap();
        let trunc = simulate_truncated(&sys, &init, 3.0, &ctrl, &ZenoOptions::default()).unwrap();
        assert_eq!(trunc.impacts.len(), 2);
        let theta2 = trunc.impacts[1].theta;
        let before = compare_on_window(&full, &trunc, 0.0, theta2 * (1.0 - 1e-12), 2000).unwrap();
        assert!(before.position < 1e-12 && before.velocity < 1e-12);
        // afterwards the difference is bounded by the height reached after impact 2
        let v2 = full.impacts[1].v_post;
        let all = compare_trajectories(&full, &trunc, 3000).unwrap();
        assert!(all.position <= v2 * v2 / (2.0 * G) + 1e-9);
        assert!(all.position > 0.0);
        let same = compare_trajectories(&full, &full, 500).unwrap();
        assert_eq!((same.position, same.velocity), (0.0, 0.0));
    }

    #[test]
    fn disjoint_windows() {
        let sys = ball(0.5);
        let ctrl = StepControl::default();
        let z = ZenoOptions::default();
        let a = simulate(&sys, &State::new(0.0, vec![2.0, 0.0]), 0.5, &ctrl, &z).unwrap();
        let b = simulate(&sys, &State::new(1.0, vec![2.0, 0.0]), 1.5, &ctrl, &z).unwrap();
        assert_eq!(compare_trajectories(&a, &b, 10).unwrap_err(), Error::DisjointWindows);
    }

    #[test]
    fn apex_at_arc_midpoints() {
        let traj = simulate(
            &ball(0.5),
            &State::new(0.0, vec![2.0, 0.0]),
            3.0,
            &StepControl::default(),
            &ZenoOptions::default(),
        )
        .unwrap();
        let apexes = apex_times(&traj);
        assert_eq!(apexes[0], Apex { arc: 0, t: 0.0 });
        let th = traj.impact_times();
        for ap in &apexes[1..] {
            let mid = 0.5 * (th[ap.arc - 1] + th[ap.arc]);
            assert!((ap.t - mid).abs() < 1e-12, "arc {}", ap.arc);
        }
    }

    #[test]
    fn penetrating_start_is_rejected() {
        let err = simulate(
            &ball(0.5),
            &State::new(0.0, vec![-0.1, 0.0]),
            1.0,
            &StepControl::default(),
            &ZenoOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InitialPenetration { .. }));
    }

    #[test]
    fn impact_budget_halts() {
        let z = ZenoOptions { max_impacts: 3, ..ZenoOptions::default() };
        let traj = simulate(&ball(0.5), &State::new(0.0, vec![2.0, 0.0]), 3.0, &StepControl::default(), &z).unwrap();
        assert_eq!(traj.termination, Termination::ImpactCap);
        assert_eq!(traj.impacts.len(), 4);
        assert!(traj.sticking.is_empty());
    }
}
