//! Impulsive mechanical systems: vector field, guard surface, impact law and
//! the optional domain box used when certifying chattering.

use std::fmt;
use std::sync::Arc;

use crate::delay::DelayLink;
use crate::error::{Error, FieldError, Result};

/// Default relative approach speed below which an impact counts as grazing.
pub const DEFAULT_GRAZING_THRESHOLD: f64 = 1e-9;

type FieldFn = dyn Fn(f64, f64, f64) -> std::result::Result<f64, FieldError> + Send + Sync;

/// Acceleration of the impacting coordinate as a function of position,
/// velocity and time.
#[derive(Clone)]
pub struct VectorField {
    label: Arc<str>,
    eval: Arc<FieldFn>,
}

impl VectorField {
    pub fn new<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self::fallible(label, move |x, v, t| Ok(f(x, v, t)))
    }

    pub fn fallible<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64, f64, f64) -> std::result::Result<f64, FieldError> + Send + Sync + 'static,
    {
        VectorField { label: Arc::from(label.into()), eval: Arc::new(f) }
    }

    /// Uniform field `f = a`, e.g. gravity with `a = -g`.
    pub fn constant(a: f64) -> Self {
        Self::new(format!("{a}"), move |_, _, _| a)
    }

    #[inline]
    pub fn eval(&self, x: f64, v: f64, t: f64) -> std::result::Result<f64, FieldError> {
        (self.eval)(x, v, t)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Returns a field multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let inner = self.clone();
        Self::fallible(format!("{c}*({})", self.label), move |x, v, t| inner.eval(x, v, t).map(|a| c * a))
    }
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("VectorField").field(&self.label).finish()
    }
}

/// The impact surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Guard {
    /// Rigid obstacle at `x = position`.
    Fixed { position: f64 },
    /// Table moving as `X(t) = amplitude * sin(frequency * t)`.
    Sinusoidal { amplitude: f64, frequency: f64 },
}

impl Guard {
    pub fn fixed(position: f64) -> Self {
        Guard::Fixed { position }
    }

    pub fn sinusoidal(amplitude: f64, frequency: f64) -> Result<Self> {
        if !(amplitude.is_finite() && frequency.is_finite() && frequency > 0.0) {
            return Err(Error::invalid("omega", "frequency must be positive and finite"));
        }
        Ok(Guard::Sinusoidal { amplitude, frequency })
    }

    /// Surface position `X(t)`.
    pub fn surface(&self, t: f64) -> f64 {
        match *self {
            Guard::Fixed { position } => position,
            Guard::Sinusoidal { amplitude, frequency } => amplitude * (frequency * t).sin(),
        }
    }

    pub fn surface_velocity(&self, t: f64) -> f64 {
        match *self {
            Guard::Fixed { .. } => 0.0,
            Guard::Sinusoidal { amplitude, frequency } => amplitude * frequency * (frequency * t).cos(),
        }
    }

    pub fn surface_acceleration(&self, t: f64) -> f64 {
        match *self {
            Guard::Fixed { .. } => 0.0,
            Guard::Sinusoidal { amplitude, frequency } => -amplitude * frequency * frequency * (frequency * t).sin(),
        }
    }

    /// Signed distance above the surface; negative means penetration.
    pub fn value(&self, x: f64, t: f64) -> f64 {
        x - self.surface(t)
    }

    /// Shortest oscillation period of the surface, if it moves.
    pub fn period(&self) -> Option<f64> {
        match *self {
            Guard::Fixed { .. } => None,
            Guard::Sinusoidal { frequency, .. } => Some(2.0 * std::f64::consts::PI / frequency),
        }
    }
}

/// Newtonian restitution law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpactLaw {
    restitution: f64,
    grazing_threshold: f64,
}

impl ImpactLaw {
    pub fn new(restitution: f64) -> Result<Self> {
        if !(restitution > 0.0 && restitution < 1.0) {
            return Err(Error::invalid("r", format!("restitution {restitution} not in (0, 1)")));
        }
        Ok(ImpactLaw { restitution, grazing_threshold: DEFAULT_GRAZING_THRESHOLD })
    }

    pub fn with_grazing_threshold(mut self, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(Error::invalid("v_graze", "grazing threshold must be positive"));
        }
        self.grazing_threshold = threshold;
        Ok(self)
    }

    pub fn restitution(&self) -> f64 {
        self.restitution
    }

    pub fn grazing_threshold(&self) -> f64 {
        self.grazing_threshold
    }

    /// Post-impact velocity `s - r (v_pre - s)` for a surface moving with
    /// velocity `s`.
    pub fn apply(&self, v_pre: f64, surface_velocity: f64) -> Result<f64> {
        let relative = v_pre - surface_velocity;
        if relative.abs() < self.grazing_threshold {
            return Err(Error::GrazingImpact { relative_velocity: relative });
        }
        if relative >= 0.0 {
            return Err(Error::InvalidApproach { relative_velocity: relative });
        }
        Ok(surface_velocity - self.restitution * relative)
    }

    /// Fraction of kinetic energy (relative to a fixed surface) kept by an impact.
    pub fn kinetic_energy_ratio(&self) -> f64 {
        self.restitution * self.restitution
    }
}

/// Rectangle `lower <= u <= upper`, `|v| <= speed` on which the field is
/// examined.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct DomainBox {
    pub lower: f64,
    pub upper: f64,
    pub speed: f64,
}

impl DomainBox {
    pub fn new(lower: f64, upper: f64, speed: f64) -> Result<Self> {
        if !(lower > 0.0 && lower < upper && upper.is_finite()) {
            return Err(Error::invalid("box", format!("need 0 < lower < upper, got [{lower}, {upper}]")));
        }
        if !(speed > 0.0 && speed.is_finite()) {
            return Err(Error::invalid("box", format!("velocity bound {speed} must be positive")));
        }
        Ok(DomainBox { lower, upper, speed })
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= self.lower && u <= self.upper && v.abs() <= self.speed
    }
}

/// Damped spring `m y'' + c y' + k y = drive * x2^2` driven unilaterally by
/// the impacting coordinate's velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpringCoupling {
    pub mass: f64,
    pub damping: f64,
    pub stiffness: f64,
    pub drive: f64,
}

impl SpringCoupling {
    pub fn new(mass: f64, damping: f64, stiffness: f64, drive: f64) -> Result<Self> {
        if !(mass > 0.0) {
            return Err(Error::invalid("m", "mass must be positive"));
        }
        Ok(SpringCoupling { mass, damping, stiffness, drive })
    }

    #[inline]
    pub fn acceleration(&self, y: f64, y_dot: f64, driver_velocity: f64) -> f64 {
        (-self.stiffness * y - self.damping * y_dot + self.drive * driver_velocity * driver_velocity) / self.mass
    }

    /// Roots of `m s^2 + c s + k` as (re, im) pairs.
    pub fn characteristic_roots(&self) -> [(f64, f64); 2] {
        let disc = self.damping * self.damping - 4.0 * self.mass * self.stiffness;
        let re = -self.damping / (2.0 * self.mass);
        if disc >= 0.0 {
            let d = disc.sqrt() / (2.0 * self.mass);
            [(re + d, 0.0), (re - d, 0.0)]
        } else {
            let d = (-disc).sqrt() / (2.0 * self.mass);
            [(re, d), (re, -d)]
        }
    }
}

/// Time plus coordinates `(x1, x2[, x3, x4])`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub y: Vec<f64>,
}

impl State {
    pub fn new(t: f64, y: Vec<f64>) -> Self {
        State { t, y }
    }

    pub fn position(&self) -> f64 {
        self.y[0]
    }

    pub fn velocity(&self) -> f64 {
        self.y[1]
    }
}

/// Complete model definition.
#[derive(Debug, Clone)]
pub struct HybridSystem {
    pub field: VectorField,
    pub guard: Guard,
    pub impact: ImpactLaw,
    pub domain: Option<DomainBox>,
    pub coupling: Option<SpringCoupling>,
    pub(crate) delay: Option<DelayLink>,
}

impl HybridSystem {
    pub fn new(field: VectorField, guard: Guard, impact: ImpactLaw) -> Self {
        HybridSystem { field, guard, impact, domain: None, coupling: None, delay: None }
    }

    pub fn with_domain(mut self, domain: DomainBox) -> Self {
        self.domain = Some(domain);
        self
    }

    /// Adds the spring pair `(x3, x4)`; the guard stays on `(x1, x2)`.
    pub fn with_coupling(mut self, coupling: SpringCoupling) -> Self {
        self.coupling = Some(coupling);
        self
    }

    pub fn dimension(&self) -> usize {
        if self.coupling.is_some() {
            4
        } else {
            2
        }
    }

    pub fn delay(&self) -> Option<f64> {
        self.delay.as_ref().map(|d| d.delay)
    }

    pub fn guard_value(&self, state: &State) -> f64 {
        self.guard.value(state.position(), state.t)
    }

    /// Largest admissible step: the user cap, a quarter of the surface
    /// period and a quarter of the feedback delay.
    pub fn max_step(&self, requested: f64) -> f64 {
        let mut cap = requested;
        if let Guard::Sinusoidal { frequency, .. } = self.guard {
            cap = cap.min(std::f64::consts::FRAC_PI_2 / frequency);
        }
        if let Some(tau) = self.delay() {
            cap = cap.min(tau / 4.0);
        }
        cap
    }

    pub(crate) fn check_state(&self, state: &State) -> Result<()> {
        if state.y.len() != self.dimension() {
            return Err(Error::invalid(
                "state",
                format!("expected {} coordinates, got {}", self.dimension(), state.y.len()),
            ));
        }
        if !state.t.is_finite() || state.y.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFiniteState { t: state.t });
        }
        Ok(())
    }
}

/// Kinetic energy ratio `r^2` retained per impact at a fixed guard.
pub fn kinetic_energy_ratio(law: &ImpactLaw) -> f64 {
    law.kinetic_energy_ratio()
}

/// Guard value `g(x, t)`.
pub fn guard_value(guard: &Guard, x: f64, t: f64) -> f64 {
    guard.value(x, t)
}

/// Restitution map; see [`ImpactLaw::apply`].
pub fn apply_impact(law: &ImpactLaw, v_pre: f64, surface_velocity: f64) -> Result<f64> {
    law.apply(v_pre, surface_velocity)
}
