//! Accumulation analysis of impact sequences: gap ratios and the
//! geometric-tail estimate of the accumulation time.

use serde::Serialize;

use crate::error::{Error, Result};

/// Thresholds that turn an idealized infinite impact sequence into a finite
/// computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZenoOptions {
    /// Inter-impact gap below which the sequence is treated as accumulated.
    pub min_gap: f64,
    /// Relative rebound speed below which the body is treated as at rest.
    pub v_stick: f64,
    /// Hard cap on processed impacts.
    pub max_impacts: usize,
    /// Number of trailing ratios averaged for the terminal ratio.
    pub ratio_window: usize,
    /// The terminal ratio must stay below `1 - margin` for a chattering verdict.
    pub margin: f64,
}

impl Default for ZenoOptions {
    fn default() -> Self {
        ZenoOptions { min_gap: 1e-8, v_stick: 1e-8, max_impacts: 1_000_000, ratio_window: 10, margin: 0.05 }
    }
}

impl ZenoOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_gap > 0.0) {
            return Err(Error::invalid("zeno_dt", "must be positive"));
        }
        if !(self.v_stick > 0.0) {
            return Err(Error::invalid("v_stick", "must be positive"));
        }
        if self.max_impacts == 0 || self.ratio_window == 0 {
            return Err(Error::invalid("impact_cap", "counts must be positive"));
        }
        if !(self.margin > 0.0 && self.margin < 1.0) {
            return Err(Error::invalid("margin", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ZenoVerdict {
    Chattering,
    NoAccumulation,
    Inconclusive,
}

impl ZenoVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            ZenoVerdict::Chattering => "chattering",
            ZenoVerdict::NoAccumulation => "no_accumulation",
            ZenoVerdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZenoReport {
    pub impact_times: Vec<f64>,
    pub gaps: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Geometric mean of the trailing ratios.
    pub terminal_ratio: f64,
    /// Extrapolated accumulation time; absent when the gaps do not shrink.
    pub theta_inf_estimate: Option<f64>,
    pub verdict: ZenoVerdict,
}

/// Analyses a sequence of impact times.
pub fn detect_zeno(impact_times: &[f64], opts: &ZenoOptions) -> Result<ZenoReport> {
    if impact_times.len() < 3 {
        return Err(Error::TooFewImpacts { found: impact_times.len() });
    }
    let gaps: Vec<f64> = impact_times.windows(2).map(|w| w[1] - w[0]).collect();
    let ratios: Vec<f64> = gaps.windows(2).map(|w| w[1] / w[0]).collect();

    let window = opts.ratio_window.min(ratios.len());
    let tail = &ratios[ratios.len() - window..];
    let terminal_ratio = (tail.iter().map(|r| r.ln()).sum::<f64>() / window as f64).exp();

    let tail_gaps = &gaps[gaps.len() - window - 1..];
    let decreasing = tail_gaps.windows(2).all(|w| w[1] < w[0]);

    let verdict = if terminal_ratio < 1.0 - opts.margin && decreasing {
        ZenoVerdict::Chattering
    } else if terminal_ratio >= 1.0 - 1e-9 {
        ZenoVerdict::NoAccumulation
    } else {
        ZenoVerdict::Inconclusive
    };

    let theta_inf_estimate = (verdict != ZenoVerdict::NoAccumulation).then(|| {
        let last = *impact_times.last().expect("non-empty");
        let gap = *gaps.last().expect("non-empty");
        last + gap * terminal_ratio / (1.0 - terminal_ratio)
    });

    Ok(ZenoReport { impact_times: impact_times.to_vec(), gaps, ratios, terminal_ratio, theta_inf_estimate, verdict })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geometric(theta1: f64, first_gap: f64, ratio: f64, n: usize) -> Vec<f64> {
        let mut times = vec![theta1];
        let mut gap = first_gap;
        for _ in 1..n {
            let next = times.last().unwrap() + gap;
            times.push(next);
            gap *= ratio;
        }
        times
    }

    #[test]
    fn geometric_gaps_extrapolate_to_series_sum() {
        // theta_inf = theta1 + d1 / (1 - r) with d1 = 0.6389 * 2 * 0.5
        let theta1 = 0.6389;
        let d1 = 0.6389;
        let times = geometric(theta1, d1, 0.5, 25);
        let rep = detect_zeno(&times, &ZenoOptions::default()).unwrap();
        assert_eq!(rep.verdict, ZenoVerdict::Chattering);
        // gaps come from differences of accumulated times, so late ratios carry ~1e-9 cancellation error
        assert!((rep.terminal_ratio - 0.5).abs() < 1e-7);
        let oracle = theta1 + d1 / (1.0 - 0.5);
        assert!((rep.theta_inf_estimate.unwrap() - oracle).abs() < 1e-9);
        assert!((oracle - 1.9167).abs() < 1e-4);
        assert!(rep.theta_inf_estimate.unwrap() > *times.last().unwrap());
    }

    #[test]
    fn constant_gaps_do_not_accumulate() {
        let times: Vec<f64> = (0..20).map(|i| 1.0 + 0.5 * i as f64).collect();
        let rep = detect_zeno(&times, &ZenoOptions::default()).unwrap();
        assert_eq!(rep.verdict, ZenoVerdict::NoAccumulation);
        assert!(rep.theta_inf_estimate.is_none());
    }

    #[test]
    fn ratio_close_to_one_is_inconclusive() {
        let times = geometric(0.0, 1.0, 0.98, 30);
        let rep = detect_zeno(&times, &ZenoOptions::default()).unwrap();
        assert_eq!(rep.verdict, ZenoVerdict::Inconclusive);
    }

    #[test]
    fn too_few_impacts() {
        assert_eq!(detect_zeno(&[0.1, 0.2], &ZenoOptions::default()).unwrap_err(), Error::TooFewImpacts { found: 2 });
    }

    #[test]
    fn short_sequences_use_all_ratios() {
        let times = geometric(1.0, 0.5, 0.5, 4);
        let rep = detect_zeno(&times, &ZenoOptions::default()).unwrap();
        assert_eq!(rep.ratios.len(), 2);
        assert_eq!(rep.verdict, ZenoVerdict::Chattering);
    }
}
