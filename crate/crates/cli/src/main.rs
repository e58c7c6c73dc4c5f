use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use chatter_core::config::{apply_override, OutputFormat, RunConfig};
use chatter_core::delay::{classify_outcome, Classification};
use chatter_core::expr::parse_expression;
use chatter_core::model::DomainBox;
use chatter_core::models::{catalog, ModelInstance};
use chatter_core::report::{
    build_trace, to_json, write_trace_csv, write_trace_json, CheckReport, ControlReport, RunReport, SCHEMA_VERSION,
};
use chatter_core::theorem::{theorem_verdict_with, CheckOptions, DEFAULT_GRID};
use chatter_core::Error;

// stdout may be a closed pipe (`| head`); output errors are not failures
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = write!(std::io::stdout(), $($arg)*);
    }};
}

macro_rules! outln {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Parser, Debug)]
#[command(name = "chatter", version, about = "Chattering analysis of impact oscillators")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by all subcommands; each config key can be overridden.
#[derive(Args, Debug, Default)]
struct Global {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory for traces and reports.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Trace format (csv|json).
    #[arg(long, global = true)]
    format: Option<String>,
    /// Any config key or model parameter, e.g. `--set x1_0=3`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    field: Option<String>,
    #[arg(long, global = true)]
    guard: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    phi: Option<String>,
    #[arg(long = "X0", global = true, allow_hyphen_values = true)]
    x_amp: Option<String>,
    #[arg(long, global = true)]
    omega: Option<String>,
    #[arg(long, global = true)]
    r: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    x0: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    v0: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    t0: Option<String>,
    #[arg(long = "t_end", alias = "t-end", global = true)]
    t_end: Option<String>,
    #[arg(long = "rel_tol", alias = "rel-tol", global = true)]
    rel_tol: Option<String>,
    #[arg(long = "abs_tol", alias = "abs-tol", global = true)]
    abs_tol: Option<String>,
    #[arg(long = "event_tol", alias = "event-tol", global = true)]
    event_tol: Option<String>,
    #[arg(long = "zeno_dt", alias = "zeno-dt", global = true)]
    zeno_dt: Option<String>,
    #[arg(long = "v_stick", alias = "v-stick", global = true)]
    v_stick: Option<String>,
    #[arg(long = "impact_cap", alias = "impact-cap", global = true)]
    impact_cap: Option<String>,
    #[arg(long = "control_C", alias = "control-C", global = true, allow_hyphen_values = true)]
    control_c: Option<String>,
    #[arg(long = "control_tau", alias = "control-tau", global = true)]
    control_tau: Option<String>,
    #[arg(long = "out_trace", alias = "out-trace", global = true)]
    out_trace: Option<String>,
    #[arg(long = "out_report", alias = "out-report", global = true)]
    out_report: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate and write the trace and report.
    Simulate,
    /// Sampled check of the chattering conditions on the model's box.
    Check(CheckArgs),
    /// Run one simulation per parameter value.
    Sweep(SweepArgs),
    /// Simulate the delayed-feedback system and classify its tail.
    Control(ControlArgs),
    /// List the built-in models and their parameters.
    ListModels {
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args, Debug)]
struct CheckArgs {
    /// Lower bound m used in the inequality instead of the sampled one.
    #[arg(long = "m")]
    m: Option<f64>,
    /// Upper bound M used in the inequality instead of the sampled one.
    #[arg(long = "M")]
    big_m: Option<f64>,
    /// Time slice(s) at which a time-dependent field is sampled.
    #[arg(long = "check-time", allow_hyphen_values = true)]
    check_time: Vec<f64>,
    #[arg(long = "grid-n", default_value_t = DEFAULT_GRID)]
    grid_n: usize,
    /// Box lower position bound (defaults to the model's box).
    #[arg(long = "h-low", allow_hyphen_values = true)]
    h_low: Option<f64>,
    /// Box upper position bound.
    #[arg(long = "h")]
    h: Option<f64>,
    /// Box speed bound.
    #[arg(long = "h-bar")]
    h_bar: Option<f64>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Parameter to vary.
    #[arg(long)]
    param: String,
    /// Comma-separated values (`--values=-1,2` for negative ones).
    #[arg(long, value_delimiter = ',', num_args = 0..=1)]
    values: Vec<f64>,
}

#[derive(Args, Debug)]
struct ControlArgs {
    /// Transient discarded before classification.
    #[arg(long = "t-skip", default_value_t = 50.0)]
    t_skip: f64,
    /// Agreement tolerance for successive periods.
    #[arg(long = "tol-t", default_value_t = 0.02)]
    tol_t: f64,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_usage() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CmdResult = Result<ExitCode, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::ListModels { json } => list_models(*json),
        Command::Simulate => cmd_simulate(&cli.global),
        Command::Check(args) => cmd_check(&cli.global, args),
        Command::Sweep(args) => cmd_sweep(&cli.global, args),
        Command::Control(args) => cmd_control(&cli.global, args),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn config_table(g: &Global) -> Result<toml::Table, Failure> {
    let mut table = match &g.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
            text.parse::<toml::Table>().map_err(|e| Failure::Usage(format!("{}: {}", path.display(), e.message())))?
        }
        None => toml::Table::new(),
    };
    let flags = [
        ("model", &g.model),
        ("field", &g.field),
        ("guard", &g.guard),
        ("phi", &g.phi),
        ("X0", &g.x_amp),
        ("omega", &g.omega),
        ("r", &g.r),
        ("x0", &g.x0),
        ("v0", &g.v0),
        ("t0", &g.t0),
        ("t_end", &g.t_end),
        ("rel_tol", &g.rel_tol),
        ("abs_tol", &g.abs_tol),
        ("event_tol", &g.event_tol),
        ("zeno_dt", &g.zeno_dt),
        ("v_stick", &g.v_stick),
        ("impact_cap", &g.impact_cap),
        ("control_C", &g.control_c),
        ("control_tau", &g.control_tau),
        ("out_trace", &g.out_trace),
        ("out_report", &g.out_report),
        ("format", &g.format),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            apply_override(&mut table, key, v);
        }
    }
    for kv in &g.set {
        let (k, v) =
            kv.split_once('=').ok_or_else(|| Failure::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        apply_override(&mut table, k.trim(), v.trim());
    }
    Ok(table)
}

fn load(g: &Global) -> Result<(RunConfig, ModelInstance), Failure> {
    let cfg = RunConfig::from_table(&config_table(g)?)?;
    let inst = cfg.instantiate()?;
    Ok((cfg, inst))
}

fn output_path(out: &Path, chosen: Option<&PathBuf>, default: &str) -> PathBuf {
    let p = chosen.cloned().unwrap_or_else(|| PathBuf::from(default));
    if p.is_absolute() {
        p
    } else {
        out.join(p)
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn write_trace(path: &Path, format: OutputFormat, traj: &chatter_core::engine::Trajectory) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let records = build_trace(traj, None);
    let file = BufWriter::new(fs::File::create(path)?);
    match format {
        OutputFormat::Csv => write_trace_csv(&records, traj.dim, file)?,
        OutputFormat::Json => write_trace_json(&records, file)?,
    }
    Ok(())
}

/// Runs the configured simulation and writes its trace and report.
fn simulate_and_write(g: &Global, cfg: &RunConfig, inst: &ModelInstance) -> Result<RunReport, Failure> {
    let traj = cfg.simulate(inst)?;
    let report = RunReport::new(inst, &traj, &cfg.zeno, cfg.cap_for(inst.system.impact.restitution()));
    let trace_path = output_path(&g.out, cfg.out_trace.as_ref(), &format!("trace.{}", cfg.format.extension()));
    write_trace(&trace_path, cfg.format, &traj)?;
    write_text(&output_path(&g.out, cfg.out_report.as_ref(), "report.json"), &to_json(&report))?;
    Ok(report)
}

fn cmd_simulate(g: &Global) -> CmdResult {
    let (cfg, inst) = load(g)?;
    let report = simulate_and_write(g, &cfg, &inst)?;
    outln!(
        "{}: {} impacts, verdict {}, termination {}, theta_inf {}",
        report.model,
        report.impact_count,
        report.verdict,
        report.termination.as_str(),
        report.theta_inf_estimate.map_or("-".to_string(), |t| format!("{t:.10}")),
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_check(g: &Global, args: &CheckArgs) -> CmdResult {
    let (_, inst) = load(g)?;
    let base = inst.domain;
    let pick = |flag: Option<f64>, from: fn(&DomainBox) -> f64, name: &str| {
        flag.or(base.as_ref().map(from))
            .ok_or_else(|| Failure::Usage(format!("no domain box for `{}`; give --{name}", inst.name)))
    };
    let domain = DomainBox::new(
        pick(args.h_low, |b| b.lower, "h-low")?,
        pick(args.h, |b| b.upper, "h")?,
        pick(args.h_bar, |b| b.speed, "h-bar")?,
    )?;
    // feedback terms read a recorded history; conditions apply to the base field
    let field = if inst.feedback.is_some() {
        parse_expression(&inst.expression).map_err(Error::from)?.into_field(&inst.expression)
    } else {
        inst.system.field.clone()
    };
    let opts = CheckOptions {
        grid_n: args.grid_n,
        time_slices: if args.check_time.is_empty() { vec![0.0] } else { args.check_time.clone() },
        m_override: args.m,
        big_m_override: args.big_m,
        ..CheckOptions::default()
    };
    let cert = theorem_verdict_with(&field, &domain, &opts)?;
    let report =
        CheckReport { schema: SCHEMA_VERSION, model: &inst.name, expression: &inst.expression, certificate: &cert };
    out!("{}", to_json(&report));
    eprintln!(
        "{} ({}): C1 {}, C2 {}, lhs {:.6} vs {} -> {}",
        inst.name,
        cert.label,
        cert.c1.holds,
        cert.c2.holds,
        cert.inequality.lhs,
        cert.inequality.bound,
        if cert.holds { "holds" } else { "fails" }
    );
    Ok(if cert.holds { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

#[derive(Serialize)]
struct SweepRow {
    value: f64,
    status: String,
    report: Option<RunReport>,
    outcome: Option<Classification>,
}

fn csv_number(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| format!("{v:.16e}"))
}

fn cmd_sweep(g: &Global, args: &SweepArgs) -> CmdResult {
    if args.values.is_empty() {
        return Err(Error::Schema { key: "values".into(), reason: "the sweep needs at least one value".into() }.into());
    }
    let base = config_table(g)?;
    let cfg = RunConfig::from_table(&base)?;
    // the swept key must be accepted by the configuration on its own
    let mut probe = base.clone();
    apply_override(&mut probe, &args.param, &format!("{:?}", args.values[0]));
    RunConfig::from_table(&probe)?;

    let mut values = args.values.clone();
    values.sort_by(f64::total_cmp);
    let controlled = cfg.instantiate()?.feedback.is_some();

    let rows: Vec<SweepRow> = values
        .par_iter()
        .map(|&value| {
            let run = || -> Result<(RunReport, Option<Classification>), Error> {
                let mut table = base.clone();
                apply_override(&mut table, &args.param, &format!("{value:?}"));
                let cfg = RunConfig::from_table(&table)?;
                let inst = cfg.instantiate()?;
                let traj = cfg.simulate(&inst)?;
                let outcome = controlled.then(|| classify_outcome(&traj, 50.0, 0.02).classification);
                Ok((RunReport::new(&inst, &traj, &cfg.zeno, cfg.cap_for(inst.system.impact.restitution())), outcome))
            };
            match run() {
                Ok((report, outcome)) => SweepRow { value, status: "ok".into(), report: Some(report), outcome },
                Err(e) => SweepRow { value, status: format!("error: {e}"), report: None, outcome: None },
            }
        })
        .collect();

    fs::create_dir_all(&g.out)?;
    let mut header = vec![args.param.clone(), "status".into()];
    if controlled {
        header.extend(
            ["classification", "period", "amplitude_pp", "amplitude_half_pp", "amplitude_peak"].map(String::from),
        );
    }
    header.extend(["impact_count", "theta_inf_estimate", "verdict", "termination"].map(String::from));
    let mut csv = header.join(",") + "\n";
    for (i, row) in rows.iter().enumerate() {
        let mut cells = vec![format!("{:?}", row.value), row.status.replace(',', ";")];
        if controlled {
            match &row.outcome {
                Some(Classification::Periodic { period, amplitude_pp, amplitude_half_pp, amplitude_peak }) => {
                    cells.push("periodic".into());
                    cells.extend(
                        [period, amplitude_pp, amplitude_half_pp, amplitude_peak].map(|v| csv_number(Some(*v))),
                    );
                }
                Some(other) => {
                    cells.push(other.name().into());
                    cells.extend(std::iter::repeat_n(String::new(), 4));
                }
                None => cells.extend(std::iter::repeat_n(String::new(), 5)),
            }
        }
        match &row.report {
            Some(r) => {
                cells.push(r.impact_count.to_string());
                cells.push(csv_number(r.theta_inf_estimate));
                cells.push(r.verdict.clone());
                cells.push(r.termination.as_str().into());
                write_text(&g.out.join(format!("run_{i:03}.json")), &to_json(row))?;
            }
            None => cells.extend(std::iter::repeat_n(String::new(), 4)),
        }
        csv += &(cells.join(",") + "\n");
    }
    write_text(&g.out.join("sweep.csv"), &csv)?;
    out!("{csv}");
    let failed = rows.iter().filter(|r| r.report.is_none()).count();
    if failed > 0 {
        eprintln!("{failed} of {} runs failed", rows.len());
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_control(g: &Global, args: &ControlArgs) -> CmdResult {
    let (cfg, inst) = load(g)?;
    let Some(fb) = inst.feedback.clone() else {
        return Err(Failure::Usage("control needs control_C and control_tau".into()));
    };
    let traj = cfg.simulate(&inst)?;
    let report = RunReport::new(&inst, &traj, &cfg.zeno, cfg.cap_for(inst.system.impact.restitution()));
    let outcome = classify_outcome(&traj, args.t_skip, args.tol_t);
    let control = ControlReport {
        schema: SCHEMA_VERSION,
        model: inst.name.clone(),
        gain: fb.gain(),
        tau: fb.delay(),
        history: fb.history_mode().as_str(),
        outcome,
    };
    let trace_path = output_path(&g.out, cfg.out_trace.as_ref(), &format!("trace.{}", cfg.format.extension()));
    write_trace(&trace_path, cfg.format, &traj)?;
    write_text(&output_path(&g.out, cfg.out_report.as_ref(), "report.json"), &to_json(&report))?;
    write_text(&g.out.join("outcome.json"), &to_json(&control))?;
    match &control.outcome.classification {
        Classification::Periodic { period, amplitude_pp, amplitude_half_pp, amplitude_peak } => outln!(
            "periodic: T {period:.6}, peak-to-trough {amplitude_pp:.6}, half {amplitude_half_pp:.6}, peak {amplitude_peak:.6}"
        ),
        other => outln!("{}", other.name()),
    }
    Ok(ExitCode::SUCCESS)
}

fn list_models(json: bool) -> CmdResult {
    if json {
        out!("{}", to_json(&catalog()));
        return Ok(ExitCode::SUCCESS);
    }
    for spec in catalog() {
        outln!("{} — {}", spec.name, spec.description);
        for p in spec.parameters {
            outln!("    {:<16} {:>12} {:<12} {}", p.name, format!("{:?}", p.default), p.units, p.description);
        }
    }
    Ok(ExitCode::SUCCESS)
}
