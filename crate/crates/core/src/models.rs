//! Built-in catalog of the impacting systems with their reference parameters.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::Serialize;

use crate::delay::{DelayFeedback, HistoryMode};
use crate::error::{Error, Result};
use crate::model::{DomainBox, Guard, HybridSystem, ImpactLaw, SpringCoupling, State, VectorField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParamSpec {
    pub name: &'static str,
    pub default: f64,
    pub units: &'static str,
    pub description: &'static str,
}

const fn p(name: &'static str, default: f64, units: &'static str, description: &'static str) -> ParamSpec {
    ParamSpec { name, default, units, description }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ModelSpec {
    pub name: &'static str,
    pub description: &'static str,
    pub parameters: &'static [ParamSpec],
}

impl ModelSpec {
    pub fn parameter(&self, name: &str) -> Option<&ParamSpec> {
        let name = canonical_name(name);
        self.parameters.iter().find(|p| p.name == name)
    }
}

/// A fully built model.
#[derive(Debug, Clone)]
pub struct ModelInstance {
    pub name: String,
    pub system: HybridSystem,
    pub domain: Option<DomainBox>,
    pub initial: State,
    pub t_end: f64,
    /// Field in the expression language; for delayed models, the field
    /// without the feedback term.
    pub expression: String,
    pub parameters: BTreeMap<String, f64>,
    pub feedback: Option<DelayFeedback>,
}

const EXAMPLE1: &[ParamSpec] = &[
    p("phi", 2.0, "length", "obstacle position"),
    p("r", 0.8, "1", "restitution coefficient"),
    p("x0", 2.1, "length", "initial position"),
    p("v0", 0.0, "length/time", "initial velocity"),
    p("t0", 0.0, "time", "initial time"),
    p("t_end", 3.0, "time", "end of the run"),
    p("h", 2.5, "length", "upper position bound of the domain box"),
    p("h_bar", 7.0, "length/time", "speed bound of the domain box"),
];

const BOUNCING_BALL: &[ParamSpec] = &[
    p("g", 9.8, "length/time^2", "gravitational acceleration"),
    p("phi", 0.0, "length", "ground position"),
    p("r", 0.5, "1", "restitution coefficient"),
    p("x0", 2.0, "length", "initial height"),
    p("v0", 0.0, "length/time", "initial velocity"),
    p("t0", 0.0, "time", "initial time"),
    p("t_end", 3.0, "time", "end of the run"),
];

const VIBRATING_TABLE: &[ParamSpec] = &[
    p("g", 9.8, "length/time^2", "gravitational acceleration"),
    p("X0", 1.0, "length", "table amplitude"),
    p("omega", 0.29, "1/time", "table angular frequency"),
    p("r", 0.9, "1", "restitution coefficient"),
    p("x0", 1.9, "length", "initial position"),
    p("v0", 0.0, "length/time", "initial velocity"),
    p("t0", 2.0 * PI / 0.29, "time", "initial time (defaults to 2 pi / omega)"),
    p("t_end", 2.0 * PI / 0.29 + 20.0, "time", "end of the run (defaults to t0 + 20)"),
    p("h_low", 0.1, "length", "lower position bound of the domain box (defaults to X0 / 10)"),
    p("h", 2.0, "length", "upper position bound of the domain box"),
    p("h_bar", 7.0, "length/time", "speed bound of the domain box"),
];

const MOON_HOLMES: &[ParamSpec] = &[
    p("phi", 1.1, "length", "obstacle position"),
    p("r", 0.9, "1", "restitution coefficient"),
    p("delta", 0.02, "1/time", "damping"),
    p("gamma", 0.02, "length/time^2", "forcing amplitude"),
    p("w", 0.1, "1/time", "forcing frequency"),
    p("x0", 1.3, "length", "initial position"),
    p("v0", 0.0, "length/time", "initial velocity"),
    p("t0", 0.0, "time", "initial time"),
    p("t_end", 60.0, "time", "end of the run"),
    p("h", 1.5, "length", "upper position bound of the domain box"),
    p("h_bar", 3.0, "length/time", "speed bound of the domain box"),
];

const MOON_HOLMES_AUTONOMOUS: &[ParamSpec] = &[
    p("phi", 1.1, "length", "obstacle position"),
    p("r", 0.9, "1", "restitution coefficient"),
    p("x0", 1.3, "length", "initial position"),
    p("v0", 0.0, "length/time", "initial velocity"),
    p("t0", 0.0, "time", "initial time"),
    p("t_end", 60.0, "time", "end of the run"),
    p("h", 1.5, "length", "upper position bound of the domain box"),
    p("h_bar", 3.0, "length/time", "speed bound of the domain box"),
];

const COUPLED_CHATTER: &[ParamSpec] = &[
    p("g", 9.8, "length/time^2", "gravitational acceleration"),
    p("phi", 1.0, "length", "obstacle position"),
    p("r", 0.9, "1", "restitution coefficient"),
    p("m", 1.0, "mass", "spring mass"),
    p("c", 3.0, "mass/time", "spring damping"),
    p("k", 2.0, "mass/time^2", "spring stiffness"),
    p("drive", 20.0, "mass/length", "forcing coefficient of x2^2"),
    p("x0", 6.0, "length", "initial position x1"),
    p("v0", 0.0, "length/time", "initial velocity x2"),
    p("x3_0", 10.0, "length", "initial spring displacement"),
    p("x4_0", -1000.0, "length/time", "initial spring velocity"),
    p("t0", 0.0, "time", "initial time"),
    p("t_end", 30.0, "time", "end of the run"),
];

const PYRAGAS_EXAMPLE1: &[ParamSpec] = &[
    p("phi", 2.0, "length", "obstacle position"),
    p("r", 0.6, "1", "restitution coefficient"),
    p("C", -30.0, "1/time^2", "feedback gain"),
    p("tau", 1.0, "time", "feedback delay"),
    p("history_restart", 1.0, "flag", "1: restart the delay history at every impact; 0: continuous history"),
    p("x0", 3.0, "length", "initial position"),
    p("v0", 0.0, "length/time", "initial velocity"),
    p("t0", 0.0, "time", "initial time"),
    p("t_end", 80.0, "time", "end of the run"),
    p("h", 2.5, "length", "upper position bound of the domain box"),
    p("h_bar", 7.0, "length/time", "speed bound of the domain box"),
];

const CATALOG: &[ModelSpec] = &[
    ModelSpec { name: "example1", description: "x'' = -cos(x') - x^3 with an obstacle at phi", parameters: EXAMPLE1 },
    ModelSpec { name: "bouncing_ball", description: "free fall x'' = -g onto fixed ground", parameters: BOUNCING_BALL },
    ModelSpec {
        name: "vibrating_table",
        description: "bead on a table moving as X0 sin(omega t), x'' = -g",
        parameters: VIBRATING_TABLE,
    },
    ModelSpec {
        name: "moon_holmes",
        description: "forced damped Duffing beam x'' = -delta x' + x - x^3 + gamma cos(w t) with an obstacle",
        parameters: MOON_HOLMES,
    },
    ModelSpec {
        name: "moon_holmes_autonomous",
        description: "unforced undamped Duffing beam x'' = x - x^3 with an obstacle",
        parameters: MOON_HOLMES_AUTONOMOUS,
    },
    ModelSpec {
        name: "coupled_chatter",
        description: "bouncing ball driving a mass-spring-damper through m y'' + c y' + k y = drive x2^2",
        parameters: COUPLED_CHATTER,
    },
    ModelSpec {
        name: "pyragas_example1",
        description: "example1 with delayed feedback C [x(t - tau) - x(t)]",
        parameters: PYRAGAS_EXAMPLE1,
    },
];

pub fn catalog() -> &'static [ModelSpec] {
    CATALOG
}

pub fn find_model(name: &str) -> Result<&'static ModelSpec> {
    CATALOG.iter().find(|m| m.name == name).ok_or_else(|| Error::UnknownModel(name.to_string()))
}

/// Maps the state-coordinate spellings `x1_0`, `x2_0` onto `x0`, `v0`.
pub fn canonical_name(name: &str) -> &str {
    match name {
        "x1_0" => "x0",
        "x2_0" => "v0",
        other => other,
    }
}

/// Builds `name` with `overrides` applied on top of the catalog defaults.
pub fn instantiate(name: &str, overrides: &BTreeMap<String, f64>) -> Result<ModelInstance> {
    let spec = find_model(name)?;
    let mut params: BTreeMap<String, f64> = spec.parameters.iter().map(|p| (p.name.to_string(), p.default)).collect();
    for (key, &value) in overrides {
        let key = canonical_name(key);
        if spec.parameter(key).is_none() {
            return Err(Error::UnknownParameter { model: name.to_string(), parameter: key.to_string() });
        }
        if !value.is_finite() {
            return Err(Error::invalid(key, "must be finite"));
        }
        params.insert(key.to_string(), value);
    }
    let given = |k: &str| overrides.keys().any(|o| canonical_name(o) == k);
    let values = params.clone();
    let get = |k: &str| values[k];

    let impact = ImpactLaw::new(get("r"))?;
    let t0 = get("t0");
    let initial = State::new(t0, vec![get("x0"), get("v0")]);
    let fixed_box =
        |lower: f64| -> Result<Option<DomainBox>> { Ok(Some(DomainBox::new(lower, get("h"), get("h_bar"))?)) };

    let inst = match spec.name {
        "example1" => ModelInstance {
            name: name.into(),
            system: HybridSystem::new(example1_field(), Guard::fixed(get("phi")), impact),
            domain: fixed_box(get("phi"))?,
            initial,
            t_end: get("t_end"),
            expression: "-cos(v) - x^3".into(),
            parameters: BTreeMap::new(),
            feedback: None,
        },
        "bouncing_ball" => {
            let g = get("g");
            ModelInstance {
                name: name.into(),
                system: HybridSystem::new(VectorField::constant(-g), Guard::fixed(get("phi")), impact),
                domain: None,
                initial,
                t_end: get("t_end"),
                expression: format!("-{g:?}"),
                parameters: BTreeMap::new(),
                feedback: None,
            }
        }
        "vibrating_table" => {
            let (g, x0_amp, omega) = (get("g"), get("X0"), get("omega"));
            let guard = Guard::sinusoidal(x0_amp, omega)?;
            let t0 = if given("t0") { t0 } else { 2.0 * PI / omega };
            params.insert("t0".into(), t0);
            let t_end = if given("t_end") { get("t_end") } else { t0 + 20.0 };
            params.insert("t_end".into(), t_end);
            let lower = if given("h_low") { get("h_low") } else { x0_amp / 10.0 };
            params.insert("h_low".into(), lower);
            ModelInstance {
                name: name.into(),
                system: HybridSystem::new(VectorField::constant(-g), guard, impact),
                domain: fixed_box(lower)?,
                initial: State::new(t0, vec![get("x0"), get("v0")]),
                t_end,
                expression: format!("-{g:?}"),
                parameters: BTreeMap::new(),
                feedback: None,
            }
        }
        "moon_holmes" => {
            let (delta, gamma, w) = (get("delta"), get("gamma"), get("w"));
            let field = VectorField::new("-delta*v + x - x^3 + gamma*cos(w*t)", move |x: f64, v: f64, t: f64| {
                -delta * v + x - x.powi(3) + gamma * (w * t).cos()
            });
            ModelInstance {
                name: name.into(),
                system: HybridSystem::new(field, Guard::fixed(get("phi")), impact),
                domain: fixed_box(get("phi"))?,
                initial,
                t_end: get("t_end"),
                expression: format!("-{delta:?}*v + x - x^3 + {gamma:?}*cos({w:?}*t)"),
                parameters: BTreeMap::new(),
                feedback: None,
            }
        }
        "moon_holmes_autonomous" => ModelInstance {
            name: name.into(),
            system: HybridSystem::new(
                VectorField::new("x - x^3", |x: f64, _, _| x - x.powi(3)),
                Guard::fixed(get("phi")),
                impact,
            ),
            domain: fixed_box(get("phi"))?,
            initial,
            t_end: get("t_end"),
            expression: "x - x^3".into(),
            parameters: BTreeMap::new(),
            feedback: None,
        },
        "coupled_chatter" => {
            let g = get("g");
            let spring = SpringCoupling::new(get("m"), get("c"), get("k"), get("drive"))?;
            ModelInstance {
                name: name.into(),
                system: HybridSystem::new(VectorField::constant(-g), Guard::fixed(get("phi")), impact)
                    .with_coupling(spring),
                domain: None,
                initial: State::new(t0, vec![get("x0"), get("v0"), get("x3_0"), get("x4_0")]),
                t_end: get("t_end"),
                expression: format!("-{g:?}"),
                parameters: BTreeMap::new(),
                feedback: None,
            }
        }
        "pyragas_example1" => {
            let mode = match get("history_restart") {
                1.0 => HistoryMode::RestartAtImpact,
                0.0 => HistoryMode::Continuous,
                _ => return Err(Error::invalid("history_restart", "must be 0 or 1")),
            };
            let fb = DelayFeedback::new(get("C"), get("tau"))?.with_history_mode(mode);
            let system = HybridSystem::new(example1_field(), Guard::fixed(get("phi")), impact).with_delay_feedback(&fb);
            ModelInstance {
                name: name.into(),
                system,
                domain: fixed_box(get("phi"))?,
                initial,
                t_end: get("t_end"),
                expression: "-cos(v) - x^3".into(),
                parameters: BTreeMap::new(),
                feedback: Some(fb),
            }
        }
        other => unreachable!("catalog entry `{other}` without a builder"),
    };
    if !(inst.t_end > inst.initial.t) {
        return Err(Error::invalid("t_end", "must exceed the initial time"));
    }
    Ok(ModelInstance { parameters: params, ..inst })
}

fn example1_field() -> VectorField {
    VectorField::new("-cos(v) - x^3", |x: f64, v: f64, _| -v.cos() - x.powi(3))
}
