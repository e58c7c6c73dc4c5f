//! Sampled checks of the sufficient conditions for chattering: the field is
//! strictly negative on the domain box (C1), even in the velocity (C2), and
//! the bounds satisfy `M * sqrt(2 (h - phi) / m) < h_bar`.
//!
//! Everything here samples a grid; it under-approximates `M` and
//! over-approximates `m`, so a "holds" verdict is evidence, not proof.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{DomainBox, VectorField};

pub const DEFAULT_GRID: usize = 401;
pub const DEFAULT_C2_TOL: f64 = 1e-12;
pub const CERTIFICATE_LABEL: &str = "sampled, non-rigorous";

/// A field evaluation at a grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    pub u: f64,
    pub v: f64,
    pub t: f64,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsEstimate {
    /// `min(-f)` over the grid; equals the infimum of `|f|` when `f < 0`
    /// everywhere, and is non-positive when (C1) fails.
    pub m_est: f64,
    /// `max |f|` over the grid.
    #[serde(rename = "M_est")]
    pub big_m_est: f64,
    pub m_witness: Sample,
    #[serde(rename = "M_witness")]
    pub big_m_witness: Sample,
    pub grid_n: usize,
    pub time_slices: Vec<f64>,
    /// The field was observed to change with `t`; bounds only hold at the slices.
    pub time_dependent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct C1Check {
    pub holds: bool,
    /// Grid point with the largest field value; non-negative when failing.
    pub witness: Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct C2Check {
    pub holds: bool,
    pub max_asymmetry: f64,
    pub tolerance: f64,
    /// Point `(u, v)` maximizing `|f(u, v) - f(u, -v)|`.
    pub witness: Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub bound: f64,
    /// `bound - lhs`; positive when the inequality holds.
    pub margin: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOptions {
    pub grid_n: usize,
    pub time_slices: Vec<f64>,
    pub c2_tol: f64,
    /// Replaces the sampled `m` in the inequality.
    pub m_override: Option<f64>,
    /// Replaces the sampled `M` in the inequality.
    #[serde(rename = "M_override")]
    pub big_m_override: Option<f64>,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            grid_n: DEFAULT_GRID,
            time_slices: vec![0.0],
            c2_tol: DEFAULT_C2_TOL,
            m_override: None,
            big_m_override: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatteringCertificate {
    pub label: &'static str,
    pub domain: DomainBox,
    pub bounds: BoundsEstimate,
    pub c1: C1Check,
    pub c2: C2Check,
    pub m_used: f64,
    #[serde(rename = "M_used")]
    pub big_m_used: f64,
    pub bounds_overridden: bool,
    pub inequality: InequalityCheck,
    pub holds: bool,
    /// The initial conditions covered when the certificate holds.
    pub initial_conditions: String,
}

fn axis(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
    // i / (n - 1) is computed first so nested grids (n -> 2n - 1) share nodes bit for bit
    if i + 1 == n {
        hi
    } else {
        lo + (hi - lo) * (i as f64 / (n - 1) as f64)
    }
}

fn sample(field: &VectorField, u: f64, v: f64, t: f64) -> Result<Sample> {
    let f = field.eval(u, v, t)?;
    if !f.is_finite() {
        return Err(Error::NonFiniteSample { u, v });
    }
    Ok(Sample { u, v, t, f })
}

fn check_grid(grid_n: usize, time_slices: &[f64]) -> Result<()> {
    if grid_n < 2 {
        return Err(Error::invalid("grid_n", "at least 2 points per axis are required"));
    }
    if time_slices.is_empty() || time_slices.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("time_slices", "need at least one finite time"));
    }
    Ok(())
}

/// Extremes of the field over the box at `t = 0`.
pub fn estimate_bounds(field: &VectorField, domain: &DomainBox, grid_n: usize) -> Result<BoundsEstimate> {
    estimate_bounds_at(field, domain, grid_n, &[0.0])
}

pub fn estimate_bounds_at(
    field: &VectorField,
    domain: &DomainBox,
    grid_n: usize,
    time_slices: &[f64],
) -> Result<BoundsEstimate> {
    check_grid(grid_n, time_slices)?;
    let mut hi: Option<Sample> = None;
    let mut abs_max: Option<Sample> = None;
    for &t in time_slices {
        for i in 0..grid_n {
            let u = axis(domain.lower, domain.upper, grid_n, i);
            for j in 0..grid_n {
                let v = axis(-domain.speed, domain.speed, grid_n, j);
                let s = sample(field, u, v, t)?;
                if hi.is_none_or(|h| s.f > h.f) {
                    hi = Some(s);
                }
                if abs_max.is_none_or(|a| s.f.abs() > a.f.abs()) {
                    abs_max = Some(s);
                }
            }
        }
    }
    let (hi, abs_max) = (hi.expect("non-empty grid"), abs_max.expect("non-empty grid"));
    Ok(BoundsEstimate {
        m_est: -hi.f,
        big_m_est: abs_max.f.abs(),
        m_witness: hi,
        big_m_witness: abs_max,
        grid_n,
        time_slices: time_slices.to_vec(),
        time_dependent: probe_time_dependence(field, domain)?,
    })
}

fn probe_time_dependence(field: &VectorField, domain: &DomainBox) -> Result<bool> {
    let mid_u = 0.5 * (domain.lower + domain.upper);
    for (u, v) in [(domain.lower, 0.0), (mid_u, 0.5 * domain.speed), (domain.upper, -domain.speed)] {
        let f0 = sample(field, u, v, 0.0)?.f;
        for t in [0.7, 3.1, 11.3] {
            if sample(field, u, v, t)?.f != f0 {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Velocity-evenness of the field at `t = 0`.
pub fn check_c2(field: &VectorField, domain: &DomainBox, grid_n: usize, tol: f64) -> Result<C2Check> {
    check_c2_at(field, domain, grid_n, tol, &[0.0])
}

pub fn check_c2_at(
    field: &VectorField,
    domain: &DomainBox,
    grid_n: usize,
    tol: f64,
    time_slices: &[f64],
) -> Result<C2Check> {
    check_grid(grid_n, time_slices)?;
    if !(tol >= 0.0) {
        return Err(Error::invalid("c2_tol", "must be non-negative"));
    }
    let mut worst = (f64::NEG_INFINITY, None);
    for &t in time_slices {
        for i in 0..grid_n {
            let u = axis(domain.lower, domain.upper, grid_n, i);
            for j in 0..grid_n {
                let v = axis(-domain.speed, domain.speed, grid_n, j);
                let s = sample(field, u, v, t)?;
                let mirrored = sample(field, u, -v, t)?;
                let asym = (s.f - mirrored.f).abs();
                if asym > worst.0 {
                    worst = (asym, Some(s));
                }
            }
        }
    }
    let (max_asymmetry, witness) = (worst.0, worst.1.expect("non-empty grid"));
    Ok(C2Check { holds: max_asymmetry <= tol, max_asymmetry, tolerance: tol, witness })
}

/// Evaluates `M * sqrt(2 (h - phi) / m) < h_bar`.
pub fn check_inequality(domain: &DomainBox, m: f64, big_m: f64) -> Result<InequalityCheck> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::invalid("m", "must be positive"));
    }
    if !(big_m > 0.0 && big_m.is_finite()) {
        return Err(Error::invalid("M", "must be positive"));
    }
    let lhs = big_m * (2.0 * (domain.upper - domain.lower) / m).sqrt();
    Ok(InequalityCheck { lhs, bound: domain.speed, margin: domain.speed - lhs, holds: lhs < domain.speed })
}

pub fn theorem_verdict(field: &VectorField, domain: &DomainBox, grid_n: usize) -> Result<ChatteringCertificate> {
    theorem_verdict_with(field, domain, &CheckOptions { grid_n, ..CheckOptions::default() })
}

pub fn theorem_verdict_with(
    field: &VectorField,
    domain: &DomainBox,
    opts: &CheckOptions,
) -> Result<ChatteringCertificate> {
    let bounds = estimate_bounds_at(field, domain, opts.grid_n, &opts.time_slices)?;
    let c1 = C1Check { holds: bounds.m_est > 0.0, witness: bounds.m_witness };
    let c2 = check_c2_at(field, domain, opts.grid_n, opts.c2_tol, &opts.time_slices)?;

    let m_used = opts.m_override.unwrap_or(bounds.m_est);
    let big_m_used = opts.big_m_override.unwrap_or(bounds.big_m_est);
    let inequality = if m_used > 0.0 {
        check_inequality(domain, m_used, big_m_used)?
    } else {
        // no positive lower bound: the inequality is meaningless and fails
        InequalityCheck { lhs: f64::INFINITY, bound: domain.speed, margin: f64::NEG_INFINITY, holds: false }
    };
    let holds = c1.holds && c2.holds && inequality.holds;
    let initial_conditions = format!("(x0, 0) with {} < x0 < {}", domain.lower, domain.upper);
    Ok(ChatteringCertificate {
        label: CERTIFICATE_LABEL,
        domain: *domain,
        bounds,
        c1,
        c2,
        m_used,
        big_m_used,
        bounds_overridden: opts.m_override.is_some() || opts.big_m_override.is_some(),
        inequality,
        holds,
        initial_conditions,
    })
}
