//! Adaptive Dormand–Prince 5(4) integration with a fourth-order continuous
//! extension and guard-crossing localization on the dense output.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Guard, HybridSystem, State};

pub const MAX_DIM: usize = 4;
pub(crate) type Vec4 = [f64; MAX_DIM];

/// Interior samples checked per accepted step, in addition to its end point.
pub const EVENT_SAMPLES: usize = 8;

/// Tolerances and step limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepControl {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Bracket width for event times.
    pub event_tol: f64,
    /// Admissible |guard value| at a located event.
    pub position_tol: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            dt_min: 1e-14,
            dt_max: 0.1,
            event_tol: 1e-12,
            position_tol: 1e-10,
        }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("dt_min", self.dt_min),
            ("dt_max", self.dt_max),
            ("event_tol", self.event_tol),
            ("position_tol", self.position_tol),
        ];
        for (name, value) in named {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::invalid(name, "must be positive and finite"));
            }
        }
        if self.dt_min >= self.dt_max {
            return Err(Error::invalid("dt_min", "must be smaller than dt_max"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentMode {
    Flight,
    Stick,
}

/// One accepted step together with its continuous extension.
#[derive(Debug, Clone)]
pub struct DenseSegment {
    t_start: f64,
    t_end: f64,
    t_base: f64,
    h: f64,
    dim: usize,
    rcont: [Vec4; 5],
    y_start: Vec4,
    y_end: Vec4,
    /// Coordinates are stored relative to this surface.
    frame: Guard,
    mode: SegmentMode,
    arc: usize,
}

impl DenseSegment {
    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mode(&self) -> SegmentMode {
        self.mode
    }

    /// Number of impacts that precede this segment.
    pub fn arc(&self) -> usize {
        self.arc
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_start && t <= self.t_end
    }

    pub fn start_state(&self) -> State {
        self.to_state(self.t_start, &self.y_start)
    }

    pub fn end_state(&self) -> State {
        self.to_state(self.t_end, &self.y_end)
    }

    /// Interpolated state in physical coordinates.
    pub fn eval(&self, t: f64) -> Result<State> {
        if !self.contains(t) {
            return Err(Error::OutOfRange { t, start: self.t_start, end: self.t_end });
        }
        let y = self.local_at(t);
        Ok(self.to_state(t, &y))
    }

    /// Physical position at `t` without range checking.
    pub(crate) fn position_at(&self, t: f64) -> f64 {
        self.local_at(t)[0] + self.frame.surface(t)
    }

    pub(crate) fn velocity_at(&self, t: f64) -> f64 {
        self.local_at(t)[1] + self.frame.surface_velocity(t)
    }

    /// Height and velocity relative to the surface (plus any coupled
    /// coordinates, unchanged).
    pub(crate) fn local_at(&self, t: f64) -> Vec4 {
        if t == self.t_start {
            return self.y_start;
        }
        if t == self.t_end {
            return self.y_end;
        }
        let mut y = self.interpolate(t);
        if self.mode == SegmentMode::Stick {
            y[0] = 0.0;
            y[1] = 0.0;
        }
        y
    }

    fn interpolate(&self, t: f64) -> Vec4 {
        let s = (t - self.t_base) / self.h;
        let s1 = 1.0 - s;
        let [r1, r2, r3, r4, r5] = &self.rcont;
        let mut y = [0.0; MAX_DIM];
        for i in 0..self.dim {
            y[i] = r1[i] + s * (r2[i] + s1 * (r3[i] + s * (r4[i] + s1 * r5[i])));
        }
        y
    }

    fn to_state(&self, t: f64, local: &Vec4) -> State {
        from_local(&self.frame, t, local, self.dim)
    }

    fn truncate(&mut self, t: f64) {
        let y = self.local_at(t);
        self.t_end = t;
        self.y_end = y;
    }
}

/// Interpolated state of `segment` at `t`.
pub fn dense_eval(segment: &DenseSegment, t: f64) -> Result<State> {
    segment.eval(t)
}

/// First guard crossing found by integration.
#[derive(Debug, Clone)]
pub struct EventHit {
    pub t: f64,
    /// State just before the impact, on the guard to within the position tolerance.
    pub state: State,
}

#[derive(Debug, Clone)]
pub struct FlightResult {
    pub segments: Vec<DenseSegment>,
    pub event: Option<EventHit>,
}

/// Integrates the flight dynamics from `start` until the guard is crossed or
/// `t_max` is reached.
pub fn integrate_until_event(
    system: &HybridSystem,
    start: &State,
    t_max: f64,
    ctrl: &StepControl,
) -> Result<FlightResult> {
    ctrl.validate()?;
    system.check_state(start)?;
    let guard = system.guard;
    let local = to_local(start, &guard);
    let advance = advance(
        flight_rhs(system),
        system.dimension(),
        start.t,
        local,
        t_max,
        None,
        ctrl,
        system.max_step(ctrl.dt_max),
        |_, y| Ok(y[0]),
        SegmentTemplate { frame: guard, mode: SegmentMode::Flight, arc: 0 },
        |_| Ok(()),
    )?;
    let event = advance.hit.map(|(t, y)| EventHit { t, state: from_local(&guard, t, &y, system.dimension()) });
    Ok(FlightResult { segments: advance.segments, event })
}

/// Locates the first guard crossing inside `segment`.
pub fn locate_event(segment: &DenseSegment, guard: &Guard, ctrl: &StepControl) -> Result<f64> {
    let g = |t: f64| guard.value(segment.position_at(t), t);
    let (a, b) = (segment.t_start, segment.t_end);
    let mut t_prev = a;
    let mut g_prev = g(a);
    if g_prev < 0.0 {
        return Err(Error::NoSignChange { t_start: a, t_end: b });
    }
    for k in 1..=EVENT_SAMPLES + 1 {
        let tk = if k == EVENT_SAMPLES + 1 { b } else { a + (b - a) * k as f64 / (EVENT_SAMPLES + 1) as f64 };
        let gk = g(tk);
        if gk < 0.0 {
            return bracket_root(|t| Ok(g(t)), t_prev, g_prev, tk, gk, ctrl.event_tol);
        }
        t_prev = tk;
        g_prev = gk;
    }
    Err(Error::NoSignChange { t_start: a, t_end: b })
}

/// Physical state to surface-relative coordinates: tiny heights above the
/// surface keep full relative precision near an accumulation point.
pub(crate) fn to_local(state: &State, frame: &Guard) -> Vec4 {
    let mut y = [0.0; MAX_DIM];
    y[..state.y.len()].copy_from_slice(&state.y);
    y[0] -= frame.surface(state.t);
    y[1] -= frame.surface_velocity(state.t);
    y
}

pub(crate) fn from_local(frame: &Guard, t: f64, local: &Vec4, dim: usize) -> State {
    let mut y = local[..dim].to_vec();
    y[0] += frame.surface(t);
    y[1] += frame.surface_velocity(t);
    State { t, y }
}

/// First-order right-hand side of the flight dynamics in surface-relative
/// coordinates.
pub(crate) fn flight_rhs(system: &HybridSystem) -> impl FnMut(f64, &Vec4, &mut Vec4) -> Result<()> + '_ {
    let guard = system.guard;
    move |t, y, dy| {
        let x = y[0] + guard.surface(t);
        let v = y[1] + guard.surface_velocity(t);
        dy[0] = y[1];
        dy[1] = system.field.eval(x, v, t)? - guard.surface_acceleration(t);
        if let Some(spring) = &system.coupling {
            dy[2] = y[3];
            dy[3] = spring.acceleration(y[2], y[3], v);
        }
        Ok(())
    }
}

/// Right-hand side while the impacting pair rides on the surface; only the
/// coupled coordinates evolve freely.
pub(crate) fn stick_rhs(system: &HybridSystem) -> impl FnMut(f64, &Vec4, &mut Vec4) -> Result<()> + '_ {
    let guard = system.guard;
    move |t, y, dy| {
        let v = guard.surface_velocity(t);
        dy[0] = 0.0;
        dy[1] = 0.0;
        if let Some(spring) = &system.coupling {
            dy[2] = y[3];
            dy[3] = spring.acceleration(y[2], y[3], v);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct SegmentTemplate {
    pub frame: Guard,
    pub mode: SegmentMode,
    pub arc: usize,
}

pub(crate) struct Advance {
    pub segments: Vec<DenseSegment>,
    pub hit: Option<(f64, Vec4)>,
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Continuous extension (Hairer, Nørsett & Wanner).
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

struct Trial {
    y1: Vec4,
    k7: Vec4,
    err: f64,
    rcont: [Vec4; 5],
}

fn dopri_step<F>(rhs: &mut F, dim: usize, t: f64, y: &Vec4, k1: &Vec4, h: f64, ctrl: &StepControl) -> Result<Trial>
where
    F: FnMut(f64, &Vec4, &mut Vec4) -> Result<()>,
{
    let mut k2 = [0.0; MAX_DIM];
    let mut k3 = [0.0; MAX_DIM];
    let mut k4 = [0.0; MAX_DIM];
    let mut k5 = [0.0; MAX_DIM];
    let mut k6 = [0.0; MAX_DIM];
    let mut k7 = [0.0; MAX_DIM];
    let mut yt = *y;

    for i in 0..dim {
        yt[i] = y[i] + h * A21 * k1[i];
    }
    rhs(t + C2 * h, &yt, &mut k2)?;
    for i in 0..dim {
        yt[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
    }
    rhs(t + C3 * h, &yt, &mut k3)?;
    for i in 0..dim {
        yt[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
    }
    rhs(t + C4 * h, &yt, &mut k4)?;
    for i in 0..dim {
        yt[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
    }
    rhs(t + C5 * h, &yt, &mut k5)?;
    for i in 0..dim {
        yt[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
    }
    rhs(t + h, &yt, &mut k6)?;
    let mut y1 = *y;
    for i in 0..dim {
        y1[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
    }
    rhs(t + h, &y1, &mut k7)?;

    let mut sum = 0.0;
    for i in 0..dim {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let sk = ctrl.abs_tol + ctrl.rel_tol * y[i].abs().max(y1[i].abs());
        sum += (e / sk) * (e / sk);
    }
    let err = (sum / dim as f64).sqrt();

    let mut rcont = [[0.0; MAX_DIM]; 5];
    for i in 0..dim {
        let dy = y1[i] - y[i];
        let bspl = h * k1[i] - dy;
        rcont[0][i] = y[i];
        rcont[1][i] = dy;
        rcont[2][i] = bspl;
        rcont[3][i] = dy - h * k7[i] - bspl;
        rcont[4][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
    }
    Ok(Trial { y1, k7, err, rcont })
}

fn wrms(v: &Vec4, scale: &Vec4, dim: usize) -> f64 {
    let s: f64 = (0..dim).map(|i| (v[i] / scale[i]).powi(2)).sum();
    (s / dim as f64).sqrt()
}

fn initial_step<F>(rhs: &mut F, dim: usize, t: f64, y: &Vec4, f0: &Vec4, h_max: f64, ctrl: &StepControl) -> Result<f64>
where
    F: FnMut(f64, &Vec4, &mut Vec4) -> Result<()>,
{
    let mut sk = [1.0; MAX_DIM];
    for i in 0..dim {
        sk[i] = ctrl.abs_tol + ctrl.rel_tol * y[i].abs();
    }
    let d0 = wrms(y, &sk, dim);
    let d1 = wrms(f0, &sk, dim);
    let mut h0 = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(h_max);
    let mut y1 = *y;
    for i in 0..dim {
        y1[i] = y[i] + h0 * f0[i];
    }
    let mut f1 = [0.0; MAX_DIM];
    rhs(t + h0, &y1, &mut f1)?;
    let mut diff = [0.0; MAX_DIM];
    for i in 0..dim {
        diff[i] = f1[i] - f0[i];
    }
    let d2 = wrms(&diff, &sk, dim) / h0;
    let dmax = d1.max(d2);
    let h1 = if dmax <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / dmax).powf(0.2) };
    Ok((100.0 * h0).min(h1).min(h_max).max(ctrl.dt_min))
}

/// Core stepping loop shared by flight and sticking phases.
///
/// The event function crosses from `>= 0` to `< 0` at an event. Every
/// committed segment is handed to `sink` before the next step starts.
#[allow(clippy::too_many_arguments)]
pub(crate) fn advance<F, E, S>(
    mut rhs: F,
    dim: usize,
    t0: f64,
    y0: Vec4,
    t_max: f64,
    h_hint: Option<f64>,
    ctrl: &StepControl,
    dt_cap: f64,
    mut event: E,
    template: SegmentTemplate,
    mut sink: S,
) -> Result<Advance>
where
    F: FnMut(f64, &Vec4, &mut Vec4) -> Result<()>,
    E: FnMut(f64, &Vec4) -> Result<f64>,
    S: FnMut(&DenseSegment) -> Result<()>,
{
    let mut segments = Vec::new();
    let mut t = t0;
    let mut y = y0;
    let mut f0 = [0.0; MAX_DIM];
    if t >= t_max {
        return Ok(Advance { segments, hit: None });
    }
    rhs(t, &y, &mut f0)?;
    if f0[..dim].iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState { t });
    }
    let cap = dt_cap.min(ctrl.dt_max);
    let mut h = match h_hint {
        Some(h) => h.clamp(ctrl.dt_min, cap),
        None => initial_step(&mut rhs, dim, t, &y, &f0, cap, ctrl)?,
    };
    // A start marginally below zero is treated as lying on the surface.
    let mut g_prev = event(t, &y)?.max(0.0);

    loop {
        let remaining = t_max - t;
        let last = h >= remaining * (1.0 - 1e-12);
        let step = if last { remaining } else { h };
        let trial = dopri_step(&mut rhs, dim, t, &y, &f0, step, ctrl)?;
        if !(trial.err.is_finite() && trial.y1[..dim].iter().all(|v| v.is_finite())) {
            h = step * 0.2;
            if h < ctrl.dt_min {
                return Err(Error::NonFiniteState { t });
            }
            continue;
        }

        if trial.err > 1.0 {
            h = step * (0.9 * trial.err.powf(-0.2)).max(0.2);
            if h < ctrl.dt_min {
                return Err(Error::StepSizeUnderflow { t, dt: h });
            }
            continue;
        }

        let t_next = if last { t_max } else { t + step };
        let mut seg = DenseSegment {
            t_start: t,
            t_end: t_next,
            t_base: t,
            h: step,
            dim,
            rcont: trial.rcont,
            y_start: y,
            y_end: trial.y1,
            frame: template.frame,
            mode: template.mode,
            arc: template.arc,
        };
        if template.mode == SegmentMode::Stick {
            for yy in [&mut seg.y_start, &mut seg.y_end] {
                yy[0] = 0.0;
                yy[1] = 0.0;
            }
        }

        // Scan the step for the first sign change of the event function.
        let mut t_left = t;
        let mut g_left = g_prev;
        let mut crossing = None;
        for k in 1..=EVENT_SAMPLES + 1 {
            let tk = if k == EVENT_SAMPLES + 1 { t_next } else { t + step * k as f64 / (EVENT_SAMPLES + 1) as f64 };
            let gk = event(tk, &seg.local_at(tk))?;
            if gk < 0.0 {
                crossing = Some((t_left, g_left, tk, gk));
                break;
            }
            t_left = tk;
            g_left = gk;
        }

        if let Some((a, ga, b, gb)) = crossing {
            let seg_ref = &seg;
            let mut ev = |s: f64| event(s, &seg_ref.local_at(s));
            let t_star = bracket_root(&mut ev, a, ga, b, gb, ctrl.event_tol)?;
            if t_star > seg.t_start {
                seg.truncate(t_star);
                sink(&seg)?;
                let y_star = seg.y_end;
                segments.push(seg);
                return Ok(Advance { segments, hit: Some((t_star, y_star)) });
            }
            return Ok(Advance { segments, hit: Some((t, y)) });
        }

        sink(&seg)?;
        segments.push(seg);
        g_prev = g_left;
        t = t_next;
        y = trial.y1;
        f0 = trial.k7;
        if last {
            return Ok(Advance { segments, hit: None });
        }
        let factor = if trial.err == 0.0 { 5.0 } else { (0.9 * trial.err.powf(-0.2)).clamp(0.2, 5.0) };
        h = (step * factor).min(cap);
    }
}

/// Root of `g` inside `[a, b]` with `g(a) >= 0 > g(b)`, using Illinois
/// regula falsi with a bisection fallback. Once the bracket is narrower than
/// `tol` the root is taken from the secant through the final bracket.
pub(crate) fn bracket_root<G>(mut g: G, mut a: f64, mut ga: f64, mut b: f64, mut gb: f64, tol: f64) -> Result<f64>
where
    G: FnMut(f64) -> Result<f64>,
{
    if !(ga >= 0.0 && gb < 0.0) {
        return Err(Error::NoSignChange { t_start: a, t_end: b });
    }
    if ga == 0.0 {
        return Ok(a);
    }
    let mut side = 0i8;
    let mut stalled = 0;
    for _ in 0..200 {
        let width = b - a;
        if width <= tol {
            break;
        }
        let mut c = a + ga * width / (ga - gb);
        if stalled >= 2 || !(c > a && c < b) {
            c = 0.5 * (a + b);
            stalled = 0;
        }
        if c <= a || c >= b {
            break;
        }
        let gc = g(c)?;
        if gc == 0.0 {
            return Ok(c);
        }
        if gc > 0.0 {
            a = c;
            ga = gc;
            if side == 1 {
                gb *= 0.5;
            }
            side = 1;
        } else {
            b = c;
            gb = gc;
            if side == -1 {
                ga *= 0.5;
            }
            side = -1;
        }
        if b - a > 0.5 * width {
            stalled += 1;
        } else {
            stalled = 0;
        }
    }
    // Illinois halving may have rescaled ga/gb; re-evaluate for the final secant.
    let ga = g(a)?;
    let gb = g(b)?;
    if ga <= 0.0 {
        return Ok(a);
    }
    let c = a + ga * (b - a) / (ga - gb);
    Ok(c.clamp(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ImpactLaw, VectorField};

    fn free_fall(phi: f64) -> HybridSystem {
        HybridSystem::new(VectorField::constant(-9.8), Guard::fixed(phi), ImpactLaw::new(0.5).unwrap())
    }

    #[test]
    fn free_fall_hits_ground_at_closed_form_time() {
        let sys = free_fall(0.0);
        let start = State::new(0.0, vec![2.0, 0.0]);
        let res = integrate_until_event(&sys, &start, 10.0, &StepControl::default()).unwrap();
        let hit = res.event.expect("impact");
        let t_exact = (2.0f64 * 2.0 / 9.8).sqrt();
        assert!((hit.t - t_exact).abs() < 1e-12, "{} vs {}", hit.t, t_exact);
        assert!((hit.state.velocity() + 9.8 * t_exact).abs() < 1e-10);
        assert!((hit.state.velocity() + 6.2610).abs() < 1e-4);
        // segments tile the span
        let segs = &res.segments;
        assert_eq!(segs[0].t_start(), 0.0);
        for w in segs.windows(2) {
            assert_eq!(w[0].t_end(), w[1].t_start());
        }
        assert_eq!(segs.last().unwrap().t_end(), hit.t);
    }

    #[test]
    fn short_horizon_has_no_event() {
        let sys = free_fall(0.0);
        let start = State::new(0.0, vec![2.0, 0.0]);
        let res = integrate_until_event(&sys, &start, 0.1, &StepControl::default()).unwrap();
        assert!(res.event.is_none());
        let end = res.segments.last().unwrap().end_state();
        assert_eq!(end.t, 0.1);
        assert!((end.position() - 1.951).abs() < 1e-13);
    }

    #[test]
    fn example1_first_impact_respects_time_bound() {
        let field = VectorField::new("-cos(v)-x^3", |x: f64, v: f64, _| -v.cos() - x.powi(3));
        let sys = HybridSystem::new(field, Guard::fixed(2.0), ImpactLaw::new(0.8).unwrap());
        let start = State::new(0.0, vec![2.1, 0.0]);
        let hit = integrate_until_event(&sys, &start, 5.0, &StepControl::default()).unwrap().event.unwrap();
        let bound = (2.0f64 * (2.5 - 2.0) / 7.0).sqrt();
        assert!(hit.t < bound);
        assert!((bound - 0.3780).abs() < 1e-4);
        assert!((hit.state.position() - 2.0).abs() < 1e-10);
    }

    fn free_fall_segment() -> DenseSegment {
        // x(t) = 2 - 4.9 t^2 restricted to [0.6, 0.7]
        let sys = free_fall(-100.0);
        let ctrl = StepControl { dt_max: 1.0, ..StepControl::default() };
        let start = State::new(0.6, vec![2.0 - 4.9 * 0.36, -9.8 * 0.6]);
        let res = advance(
            flight_rhs(&sys),
            2,
            start.t,
            to_local(&start, &sys.guard),
            0.7,
            Some(1.0),
            &ctrl,
            1.0,
            |_, y| Ok(y[0]),
            SegmentTemplate { frame: sys.guard, mode: SegmentMode::Flight, arc: 0 },
            |_| Ok(()),
        )
        .unwrap();
        assert!(res.hit.is_none());
        let mut segs = res.segments;
        assert_eq!(segs.len(), 1, "polynomial field should be taken in one step");
        segs.pop().unwrap()
    }

    #[test]
    fn locate_event_on_parabola() {
        let seg = free_fall_segment();
        let t = locate_event(&seg, &Guard::fixed(0.0), &StepControl::default()).unwrap();
        assert!((t - (2.0f64 / 4.9).sqrt()).abs() < 1e-12);
        assert!((t - 0.63888).abs() < 1e-5);
    }

    #[test]
    fn locate_event_without_crossing_fails() {
        let seg = free_fall_segment();
        let err = locate_event(&seg, &Guard::fixed(-5.0), &StepControl::default()).unwrap_err();
        assert!(matches!(err, Error::NoSignChange { .. }));
    }

    #[test]
    fn dense_eval_endpoints_and_interior() {
        let seg = free_fall_segment();
        assert_eq!(dense_eval(&seg, seg.t_start()).unwrap(), seg.start_state());
        assert_eq!(dense_eval(&seg, seg.t_end()).unwrap(), seg.end_state());
        for k in 1..10 {
            let t = 0.6 + 0.01 * k as f64;
            let s = dense_eval(&seg, t).unwrap();
            assert!((s.position() - (2.0 - 4.9 * t * t)).abs() < 1e-13);
            assert!((s.velocity() + 9.8 * t).abs() < 1e-13);
        }
        assert!(matches!(dense_eval(&seg, 0.71), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn sinusoidal_guard_crossing_is_on_the_surface() {
        let table = Guard::sinusoidal(1.0, 0.29).unwrap();
        let sys = HybridSystem::new(VectorField::constant(-9.8), table, ImpactLaw::new(0.9).unwrap());
        let t0 = 2.0 * std::f64::consts::PI / 0.29;
        let start = State::new(t0, vec![1.9, 0.0]);
        let ctrl = StepControl::default();
        let res = integrate_until_event(&sys, &start, t0 + 5.0, &ctrl).unwrap();
        let hit = res.event.unwrap();
        let seg = res.segments.last().unwrap();
        let x = dense_eval(seg, hit.t).unwrap().position();
        assert!((x - (0.29 * hit.t).sin()).abs() < ctrl.position_tol);
    }

    #[test]
    fn tighter_tolerance_reduces_error() {
        // x'' = -x from (1, 0): compare with cos t at t = 3
        let field = VectorField::new("-x", |x, _, _| -x);
        let sys = HybridSystem::new(field, Guard::fixed(-10.0), ImpactLaw::new(0.5).unwrap());
        let start = State::new(0.0, vec![1.0, 0.0]);
        let err = |rtol: f64| {
            let ctrl = StepControl { rel_tol: rtol, abs_tol: rtol * 1e-2, dt_max: 1.0, ..StepControl::default() };
            let res = integrate_until_event(&sys, &start, 3.0, &ctrl).unwrap();
            (res.segments.last().unwrap().end_state().position() - 3.0f64.cos()).abs()
        };
        let coarse = err(1e-5);
        let fine = err(1e-8);
        assert!(fine < coarse, "{fine} !< {coarse}");
    }

    #[test]
    fn bracket_root_converges_past_tolerance() {
        let root = bracket_root(|t| Ok(2.0 - t * t), 1.0, 1.0, 2.0, -2.0, 1e-12).unwrap();
        assert!((root - 2.0f64.sqrt()).abs() < 1e-15);
    }
}
