//! Run configuration: one flat TOML table naming either a catalog model or an
//! inline field expression, plus tolerances, control and output settings.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Serialize;

use crate::delay::{DelayFeedback, HistoryMode};
use crate::engine::{simulate, simulate_with_cap, truncation_cap, Trajectory, ZenoOptions};
use crate::error::{Error, Result};
use crate::expr::parse_expression;
use crate::integrator::StepControl;
use crate::model::{Guard, HybridSystem, ImpactLaw, State};
use crate::models::{canonical_name, find_model, instantiate, ModelInstance};

const DEFAULT_T_END: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GuardKind {
    Fixed,
    Sinusoidal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ImpactCap {
    /// `floor(1 / r)`.
    Auto,
    Count(usize),
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub model: Option<String>,
    pub field: Option<String>,
    pub guard: GuardKind,
    /// Settings of the run that are not catalog parameters (inline-field runs
    /// keep `phi`, `r`, `x0`, ... here).
    pub values: BTreeMap<String, f64>,
    /// Catalog parameter overrides.
    pub params: BTreeMap<String, f64>,
    pub ctrl: StepControl,
    pub zeno: ZenoOptions,
    pub impact_cap: ImpactCap,
    pub control: Option<(f64, f64)>,
    pub out_trace: Option<PathBuf>,
    pub out_report: Option<PathBuf>,
    pub format: OutputFormat,
}

/// Numeric keys understood for inline-field runs; for catalog runs they are
/// forwarded as parameters when the model declares them.
const STATE_KEYS: &[&str] = &["phi", "X0", "omega", "r", "x0", "v0", "t0", "t_end"];
const STRING_KEYS: &[&str] = &["model", "field", "guard", "out_trace", "out_report", "format"];
const TOLERANCE_KEYS: &[&str] = &["rel_tol", "abs_tol", "event_tol", "zeno_dt", "v_stick"];
pub const CONFIG_KEYS: &[&str] = &[
    "model",
    "field",
    "guard",
    "phi",
    "X0",
    "omega",
    "r",
    "x0",
    "v0",
    "t0",
    "t_end",
    "rel_tol",
    "abs_tol",
    "event_tol",
    "zeno_dt",
    "v_stick",
    "impact_cap",
    "control_C",
    "control_tau",
    "out_trace",
    "out_report",
    "format",
];

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::schema("<document>", e.message()))?;
    RunConfig::from_table(&table)
}

fn number(key: &str, value: &toml::Value) -> Result<f64> {
    match value {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(Error::schema(key, "expected a number")),
    }
}

fn string<'a>(key: &str, value: &'a toml::Value) -> Result<&'a str> {
    value.as_str().ok_or_else(|| Error::schema(key, "expected a string"))
}

impl RunConfig {
    pub fn from_table(table: &toml::Table) -> Result<Self> {
        let model = table.get("model").map(|v| string("model", v).map(str::to_string)).transpose()?;
        let field = table.get("field").map(|v| string("field", v).map(str::to_string)).transpose()?;
        let spec = match (&model, &field) {
            (Some(_), Some(_)) => return Err(Error::schema("model", "give either `model` or `field`, not both")),
            (None, None) => return Err(Error::schema("model", "one of `model` or `field` is required")),
            (Some(name), None) => Some(find_model(name).map_err(|e| Error::schema("model", e.to_string()))?),
            (None, Some(_)) => None,
        };

        let mut cfg = RunConfig {
            model,
            field,
            guard: GuardKind::Fixed,
            values: BTreeMap::new(),
            params: BTreeMap::new(),
            ctrl: StepControl::default(),
            zeno: ZenoOptions::default(),
            impact_cap: ImpactCap::None,
            control: None,
            out_trace: None,
            out_report: None,
            format: OutputFormat::Csv,
        };
        let mut control_c = None;
        let mut control_tau = None;

        for (key, value) in table {
            match key.as_str() {
                "model" | "field" => {}
                "guard" => {
                    cfg.guard = match string(key, value)? {
                        "fixed" => GuardKind::Fixed,
                        "sinusoidal" => GuardKind::Sinusoidal,
                        other => return Err(Error::schema(key, format!("unknown guard `{other}` (fixed|sinusoidal)"))),
                    };
                    if spec.is_some() {
                        return Err(Error::schema(key, "the guard of a catalog model is fixed by the model"));
                    }
                }
                "format" => {
                    cfg.format = match string(key, value)? {
                        "csv" => OutputFormat::Csv,
                        "json" => OutputFormat::Json,
                        other => return Err(Error::schema(key, format!("unknown format `{other}` (csv|json)"))),
                    }
                }
                "out_trace" => cfg.out_trace = Some(PathBuf::from(string(key, value)?)),
                "out_report" => cfg.out_report = Some(PathBuf::from(string(key, value)?)),
                "impact_cap" => {
                    cfg.impact_cap = match value {
                        toml::Value::String(s) if s == "auto" => ImpactCap::Auto,
                        toml::Value::String(s) if s == "none" => ImpactCap::None,
                        toml::Value::Integer(n) if *n > 0 => ImpactCap::Count(*n as usize),
                        _ => return Err(Error::schema(key, "expected \"auto\", \"none\" or a positive integer")),
                    }
                }
                "control_C" => control_c = Some(number(key, value)?),
                "control_tau" => control_tau = Some(number(key, value)?),
                k if TOLERANCE_KEYS.contains(&k) => {
                    let x = number(k, value)?;
                    if !(x > 0.0 && x.is_finite()) {
                        return Err(Error::schema(k, "must be positive"));
                    }
                    match k {
                        "rel_tol" => cfg.ctrl.rel_tol = x,
                        "abs_tol" => cfg.ctrl.abs_tol = x,
                        "event_tol" => cfg.ctrl.event_tol = x,
                        "zeno_dt" => cfg.zeno.min_gap = x,
                        _ => cfg.zeno.v_stick = x,
                    }
                }
                k => {
                    let x = number(k, value)?;
                    if !x.is_finite() {
                        return Err(Error::schema(k, "must be finite"));
                    }
                    match spec {
                        Some(spec) if spec.parameter(k).is_some() => {
                            cfg.params.insert(k.to_string(), x);
                        }
                        Some(spec) => {
                            return Err(Error::schema(k, format!("not a parameter of model `{}`", spec.name)))
                        }
                        None if STATE_KEYS.contains(&canonical_name(k)) => {
                            cfg.values.insert(canonical_name(k).to_string(), x);
                        }
                        None => return Err(Error::schema(k, "unknown key")),
                    }
                }
            }
        }

        // Control keys map onto a model's own gain/delay when it has them.
        if spec.is_some_and(|s| s.parameter("C").is_some()) {
            if let Some(c) = control_c {
                cfg.params.insert("C".into(), c);
            }
            if let Some(tau) = control_tau {
                cfg.params.insert("tau".into(), tau);
            }
        } else {
            match (control_c, control_tau) {
                (Some(c), Some(tau)) => {
                    if !(tau > 0.0) {
                        return Err(Error::schema("control_tau", "must be positive"));
                    }
                    cfg.control = Some((c, tau));
                }
                (None, None) => {}
                (Some(_), None) => return Err(Error::schema("control_tau", "required together with control_C")),
                (None, Some(_)) => return Err(Error::schema("control_C", "required together with control_tau")),
            }
        }

        let r = cfg.params.get("r").or(cfg.values.get("r")).copied();
        if let Some(r) = r {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::schema("r", format!("restitution {r} must lie in (0, 1)")));
            }
        }
        if cfg.field.is_some() {
            if r.is_none() {
                return Err(Error::schema("r", "required for an inline field"));
            }
            if !cfg.values.contains_key("x0") {
                return Err(Error::schema("x0", "required for an inline field"));
            }
            if cfg.guard == GuardKind::Sinusoidal {
                for k in ["X0", "omega"] {
                    if !cfg.values.contains_key(k) {
                        return Err(Error::schema(k, "required for a sinusoidal guard"));
                    }
                }
                if cfg.values.contains_key("phi") {
                    return Err(Error::schema("phi", "only applies to a fixed guard"));
                }
            } else {
                for k in ["X0", "omega"] {
                    if cfg.values.contains_key(k) {
                        return Err(Error::schema(k, "only applies to a sinusoidal guard"));
                    }
                }
            }
            let expr = cfg.field.as_deref().unwrap_or_default();
            parse_expression(expr).map_err(|e| Error::schema("field", e.to_string()))?;
        }
        cfg.ctrl.validate().map_err(|e| Error::schema("rel_tol", e.to_string()))?;
        Ok(cfg)
    }

    /// Builds the system, initial state and run length.
    pub fn instantiate(&self) -> Result<ModelInstance> {
        let mut inst = match (&self.model, &self.field) {
            (Some(name), _) => instantiate(name, &self.params)?,
            (None, Some(text)) => self.custom(text)?,
            (None, None) => return Err(Error::schema("model", "one of `model` or `field` is required")),
        };
        if let Some((c, tau)) = self.control {
            let fb = DelayFeedback::new(c, tau)?.with_history_mode(HistoryMode::Continuous);
            inst.system = inst.system.with_delay_feedback(&fb);
            inst.feedback = Some(fb);
        }
        Ok(inst)
    }

    fn custom(&self, text: &str) -> Result<ModelInstance> {
        let get = |k: &str, default: f64| self.values.get(k).copied().unwrap_or(default);
        let expr = parse_expression(text)?;
        let guard = match self.guard {
            GuardKind::Fixed => Guard::fixed(get("phi", 0.0)),
            GuardKind::Sinusoidal => Guard::sinusoidal(get("X0", 0.0), get("omega", 0.0))?,
        };
        let system = HybridSystem::new(expr.into_field(text), guard, ImpactLaw::new(get("r", f64::NAN))?);
        let t0 = get("t0", 0.0);
        let t_end = get("t_end", t0 + DEFAULT_T_END);
        if !(t_end > t0) {
            return Err(Error::schema("t_end", "must exceed t0"));
        }
        Ok(ModelInstance {
            name: "custom".into(),
            system,
            domain: None,
            initial: State::new(t0, vec![get("x0", f64::NAN), get("v0", 0.0)]),
            t_end,
            expression: text.to_string(),
            parameters: self.values.clone(),
            feedback: None,
        })
    }

    /// Runs the configured simulation, truncated when an impact cap is set.
    pub fn simulate(&self, inst: &ModelInstance) -> Result<Trajectory> {
        let sys = &inst.system;
        match self.cap_for(sys.impact.restitution()) {
            Some(cap) => simulate_with_cap(sys, &inst.initial, inst.t_end, &self.ctrl, &self.zeno, cap),
            None => simulate(sys, &inst.initial, inst.t_end, &self.ctrl, &self.zeno),
        }
    }

    /// Impact budget for the truncated mode, if any.
    pub fn cap_for(&self, restitution: f64) -> Option<usize> {
        match self.impact_cap {
            ImpactCap::Auto => Some(truncation_cap(restitution)),
            ImpactCap::Count(n) => Some(n),
            ImpactCap::None => None,
        }
    }
}

/// Applies a `key=value` override to a configuration table. Values are read
/// as TOML scalars, falling back to plain strings.
pub fn apply_override(table: &mut toml::Table, key: &str, raw: &str) {
    if STRING_KEYS.contains(&key) {
        table.insert(key.to_string(), toml::Value::String(raw.to_string()));
        return;
    }
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    table.insert(key.to_string(), value);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_model_config_uses_catalog_defaults() {
        let cfg = parse_config("model = \"example1\"").unwrap();
        let inst = cfg.instantiate().unwrap();
        assert_eq!(inst.initial, State::new(0.0, vec![2.1, 0.0]));
        assert_eq!(inst.system.impact.restitution(), 0.8);
        assert_eq!(inst.system.guard, Guard::fixed(2.0));
        assert_eq!(cfg.impact_cap, ImpactCap::None);
        assert_eq!(cfg.format, OutputFormat::Csv);
    }

    #[test]
    fn inline_field_config() {
        let cfg = parse_config("field = \"-9.8\"\nguard = \"fixed\"\nphi = 0\nr = 0.5\nx0 = 2").unwrap();
        let inst = cfg.instantiate().unwrap();
        assert_eq!(inst.system.field.eval(1.0, 2.0, 3.0).unwrap(), -9.8);
        assert_eq!(inst.system.guard, Guard::fixed(0.0));
        assert_eq!(inst.initial.y, vec![2.0, 0.0]);
    }

    #[test]
    fn restitution_out_of_range() {
        let e = parse_config("model = \"example1\"\nr = 1.2").unwrap_err();
        assert!(matches!(e, Error::Schema { ref key, .. } if key == "r"), "{e}");
        assert!(parse_config("field = \"-1\"\nr = 0\nx0 = 1").is_err());
    }

    #[test]
    fn schema_errors_name_the_key() {
        let key = |text: &str| match parse_config(text).unwrap_err() {
            Error::Schema { key, .. } => key,
            other => panic!("{other}"),
        };
        assert_eq!(key("model = \"example1\"\nfield = \"x\""), "model");
        assert_eq!(key("x0 = 1"), "model");
        assert_eq!(key("model = \"example1\"\nomega = 1"), "omega");
        assert_eq!(key("model = \"nope\""), "model");
        assert_eq!(key("field = \"-1\"\nr = 0.5\nx0 = 1\nfoo = 1"), "foo");
        assert_eq!(key("field = \"-1 +\"\nr = 0.5\nx0 = 1"), "field");
        assert_eq!(key("model = \"example1\"\nrel_tol = -1"), "rel_tol");
        assert_eq!(key("model = \"example1\"\nformat = \"xml\""), "format");
        assert_eq!(key("model = \"example1\"\nimpact_cap = \"many\""), "impact_cap");
        assert_eq!(key("model = \"example1\"\ncontrol_C = -30"), "control_tau");
        assert_eq!(key("field = \"-1\"\nguard = \"sinusoidal\"\nr = 0.5\nx0 = 1\nomega = 1"), "X0");
        assert_eq!(key("model = ["), "<document>");
    }

    #[test]
    fn model_parameters_pass_through() {
        let cfg = parse_config("model = \"moon_holmes\"\ndelta = 0.05\nx1_0 = 1.4").unwrap();
        let inst = cfg.instantiate().unwrap();
        assert_eq!(inst.parameters["delta"], 0.05);
        assert_eq!(inst.initial.y, vec![1.4, 0.0]);
    }

    #[test]
    fn impact_caps_and_tolerances() {
        let cfg =
            parse_config("model = \"bouncing_ball\"\nimpact_cap = \"auto\"\nzeno_dt = 1e-6\nrel_tol = 1e-8").unwrap();
        assert_eq!(cfg.cap_for(0.5), Some(2));
        assert_eq!(cfg.zeno.min_gap, 1e-6);
        assert_eq!(cfg.ctrl.rel_tol, 1e-8);
        let cfg = parse_config("model = \"bouncing_ball\"\nimpact_cap = 7").unwrap();
        assert_eq!(cfg.cap_for(0.5), Some(7));
    }

    #[test]
    fn control_keys() {
        let cfg = parse_config("model = \"pyragas_example1\"\ncontrol_C = -20\ncontrol_tau = 0.5").unwrap();
        let inst = cfg.instantiate().unwrap();
        let fb = inst.feedback.unwrap();
        assert_eq!((fb.gain(), fb.delay()), (-20.0, 0.5));
        assert_eq!(fb.history_mode(), HistoryMode::RestartAtImpact);

        let cfg = parse_config("model = \"example1\"\ncontrol_C = -30\ncontrol_tau = 1").unwrap();
        let inst = cfg.instantiate().unwrap();
        assert_eq!(inst.system.delay(), Some(1.0));
    }

    #[test]
    fn overrides_parse_as_toml_scalars() {
        let mut t = toml::Table::new();
        apply_override(&mut t, "model", "bouncing_ball");
        apply_override(&mut t, "r", "0.25");
        apply_override(&mut t, "impact_cap", "3");
        apply_override(&mut t, "format", "json");
        apply_override(&mut t, "x0", "1.5");
        let cfg = RunConfig::from_table(&t).unwrap();
        assert_eq!(cfg.params["r"], 0.25);
        assert_eq!(cfg.impact_cap, ImpactCap::Count(3));
        assert_eq!(cfg.format, OutputFormat::Json);
        assert_eq!(cfg.params["x0"], 1.5);

        let mut t = toml::Table::new();
        apply_override(&mut t, "field", "-9.8");
        assert_eq!(t["field"].as_str(), Some("-9.8"));
    }

    #[test]
    fn capped_run_stops_after_the_budget() {
        let cfg = parse_config("model = \"bouncing_ball\"\nimpact_cap = \"auto\"").unwrap();
        let traj = cfg.simulate(&cfg.instantiate().unwrap()).unwrap();
        assert_eq!(traj.impacts.len(), 2);
    }
}
