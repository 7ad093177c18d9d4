//! Price-elasticity demand model with the interruptible/curtailable incentive
//! program. The incentive `A` and penalty `pen` act as extra price stimulus.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{ElasticityMatrix, HOURS};

pub const DEFAULT_HEADROOM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrMode {
    /// Elasticity multiplies the relative stimulus.
    #[default]
    Standard,
    /// Elasticity divides the stimulus, as in the printed I/C model.
    PaperLiteral,
}

impl std::str::FromStr for DrMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "standard" => Ok(Self::Standard),
            "paper_literal" => Ok(Self::PaperLiteral),
            other => Err(format!("unknown DR mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrProgramParams {
    pub incentive: f64,
    pub penalty_rate: f64,
    pub contracted_cut: f64,
    pub mode: DrMode,
    /// Upward shift limit as a fraction of the baseline demand.
    pub headroom: f64,
}

impl Default for DrProgramParams {
    fn default() -> Self {
        Self {
            incentive: 0.0,
            penalty_rate: 0.0,
            contracted_cut: 0.0,
            mode: DrMode::Standard,
            headroom: DEFAULT_HEADROOM,
        }
    }
}

impl DrProgramParams {
    fn stimulus(&self) -> f64 {
        self.incentive + self.penalty_rate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSchedule {
    pub rho0: Vec<f64>,
    pub rho: Vec<f64>,
}

impl PriceSchedule {
    pub fn flat(rho0: f64) -> Self {
        Self {
            rho0: vec![rho0; HOURS],
            rho: vec![rho0; HOURS],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandProfile {
    pub d0: Vec<f64>,
    pub d: Vec<f64>,
}

impl DemandProfile {
    pub fn baseline(d0: Vec<f64>) -> Self {
        Self { d: d0.clone(), d0 }
    }

    pub fn peak_to_valley(values: &[f64]) -> f64 {
        let max = values.iter().copied().fold(f64::MIN, f64::max);
        let min = values.iter().copied().fold(f64::MAX, f64::min);
        max / min
    }
}

/// Relative demand change contributed by the stimulus of one period.
fn term(rho0: f64, rho: f64, p: &DrProgramParams, e: f64) -> Result<f64> {
    if rho0 <= 0.0 {
        return Err(Error::Degenerate(format!("base price {rho0} must be positive")));
    }
    match p.mode {
        DrMode::Standard => Ok(e * (rho - rho0 + p.stimulus()) / rho0),
        DrMode::PaperLiteral => {
            let num = rho0 - rho - p.stimulus();
            if num == 0.0 {
                return Ok(0.0);
            }
            if e == 0.0 {
                return Err(Error::Degenerate("zero elasticity in paper_literal mode".into()));
            }
            Ok(num / (rho0 * e))
        }
    }
}

fn clamp_demand(d0: f64, d: f64, headroom: f64) -> f64 {
    d.min(d0 * (1.0 + headroom)).max(0.0)
}

/// Demand of a single period under the I/C program.
pub fn responsive_demand_single(
    d0: f64,
    rho0: f64,
    rho: f64,
    params: &DrProgramParams,
    e_self: f64,
) -> Result<f64> {
    let d = d0 * (1.0 + term(rho0, rho, params, e_self)?);
    Ok(clamp_demand(d0, d, params.headroom))
}

/// Hour-by-hour elasticity. Distinct hours of the same period are uncoupled;
/// the period table supplies self terms and cross-period terms.
pub fn hourly_elasticity(e: &ElasticityMatrix, i: usize, j: usize) -> f64 {
    if i != j && e.hour_period[i] == e.hour_period[j] {
        0.0
    } else {
        e.hourly(i, j)
    }
}

/// 24-hour I/C response. `max_cut` bounds the curtailment in every hour.
pub fn responsive_demand_multi(
    profile: &DemandProfile,
    prices: &PriceSchedule,
    params: &[DrProgramParams],
    e: &ElasticityMatrix,
    max_cut: Option<f64>,
) -> Result<DemandProfile> {
    let n = profile.d0.len();
    if e.hour_period.len() < n || prices.rho0.len() < n || prices.rho.len() < n || params.len() < n
    {
        return Err(Error::Missing("period mapping for every hour".into()));
    }
    if e.hour_period.iter().any(|&p| p >= e.values.len()) {
        return Err(Error::Missing("elasticity period for an hour".into()));
    }
    let mut d = Vec::with_capacity(n);
    for i in 0..n {
        let mut rel = 0.0;
        for j in 0..n {
            let eij = hourly_elasticity(e, i, j);
            let p = &params[j];
            let idle = prices.rho[j] == prices.rho0[j] && p.stimulus() == 0.0;
            // uncoupled pairs contribute nothing in either form
            if idle || eij == 0.0 {
                continue;
            }
            rel += term(prices.rho0[j], prices.rho[j], p, eij)?;
        }
        let d0 = profile.d0[i];
        let mut di = clamp_demand(d0, d0 * (1.0 + rel), params[i].headroom);
        if let Some(cap) = max_cut {
            di = di.max(d0 - cap);
        }
        d.push(di);
    }
    Ok(DemandProfile {
        d0: profile.d0.clone(),
        d,
    })
}

/// Incentive paid for curtailment, summed over periods.
pub fn incentive_payment(d0: &[f64], d: &[f64], incentive: &[f64]) -> f64 {
    d0.iter()
        .zip(d)
        .zip(incentive)
        .map(|((d0, d), a)| a * (d0 - d).max(0.0))
        .sum()
}

/// Penalty for falling short of the contracted cut, summed over periods.
pub fn penalty_charge(d0: &[f64], d: &[f64], ic: &[f64], pen: &[f64]) -> f64 {
    d0.iter()
        .zip(d)
        .zip(ic.iter().zip(pen))
        .map(|((d0, d), (ic, pen))| pen * (ic - (d0 - d)).max(0.0))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::build_rts24;

    fn params(a: f64, pen: f64, mode: DrMode) -> DrProgramParams {
        DrProgramParams {
            incentive: a,
            penalty_rate: pen,
            contracted_cut: 0.0,
            mode,
            headroom: DEFAULT_HEADROOM,
        }
    }

    #[test]
    fn no_stimulus_is_fixed_point() {
        for mode in [DrMode::Standard, DrMode::PaperLiteral] {
            let d = responsive_demand_single(100.0, 50.0, 50.0, &params(0.0, 0.0, mode), -0.12)
                .unwrap();
            assert_eq!(d, 100.0);
        }
    }

    #[test]
    fn standard_hand_value() {
        let d = responsive_demand_single(
            100.0,
            100.0,
            100.0,
            &params(85.0, 0.0, DrMode::Standard),
            -0.12,
        )
        .unwrap();
        assert!((d - 89.8).abs() < 1e-12);
    }

    #[test]
    fn literal_form_moves_the_wrong_way() {
        let mut p = params(85.0, 0.0, DrMode::PaperLiteral);
        p.headroom = f64::INFINITY;
        let d = responsive_demand_single(100.0, 100.0, 100.0, &p, -0.12).unwrap();
        assert!((d - 100.0 * (1.0 + 85.0 / 12.0)).abs() < 1e-9);
        p.headroom = DEFAULT_HEADROOM;
        let d = responsive_demand_single(100.0, 100.0, 100.0, &p, -0.12).unwrap();
        assert!((d - 110.0).abs() < 1e-9);
    }

    #[test]
    fn literal_zero_elasticity_errors() {
        let p = params(85.0, 0.0, DrMode::PaperLiteral);
        assert!(responsive_demand_single(100.0, 100.0, 100.0, &p, 0.0).is_err());
    }

    #[test]
    fn payments() {
        assert_eq!(incentive_payment(&[100.0], &[100.0], &[85.0]), 0.0);
        assert_eq!(incentive_payment(&[100.0], &[90.0], &[85.0]), 850.0);
        assert_eq!(incentive_payment(&[100.0], &[110.0], &[85.0]), 0.0);
        assert_eq!(penalty_charge(&[100.0], &[90.0], &[10.0], &[142.0]), 0.0);
        assert_eq!(penalty_charge(&[100.0], &[95.0], &[10.0], &[142.0]), 710.0);
        assert_eq!(penalty_charge(&[100.0], &[80.0], &[10.0], &[142.0]), 0.0);
    }

    fn peak_params(case_e: &ElasticityMatrix, a: f64, pen: f64) -> Vec<DrProgramParams> {
        (0..HOURS)
            .map(|h| {
                if case_e.hour_period[h] == 0 {
                    params(a, pen, DrMode::Standard)
                } else {
                    params(0.0, 0.0, DrMode::Standard)
                }
            })
            .collect()
    }

    #[test]
    fn multi_period_unchanged_without_stimulus() {
        let case = build_rts24();
        let prof = DemandProfile::baseline(vec![100.0; HOURS]);
        let out = responsive_demand_multi(
            &prof,
            &PriceSchedule::flat(20.0),
            &[DrProgramParams::default(); HOURS],
            &case.elasticity,
            None,
        )
        .unwrap();
        assert_eq!(out.d, prof.d0);
    }

    /// Hand evaluation: peak incentive A only, flat 100 MW and flat price.
    #[test]
    fn multi_period_hand_values() {
        let case = build_rts24();
        let e = &case.elasticity;
        let rho0 = 1000.0;
        let a = 10.0;
        let prof = DemandProfile::baseline(vec![100.0; HOURS]);
        let out = responsive_demand_multi(
            &prof,
            &PriceSchedule::flat(rho0),
            &peak_params(e, a, 0.0),
            e,
            None,
        )
        .unwrap();
        let peak_hours = e.hour_period.iter().filter(|&&p| p == 0).count() as f64;
        for h in 0..HOURS {
            let expect = match e.hour_period[h] {
                0 => 100.0 * (1.0 - 0.12 * a / rho0),
                1 => 100.0 * (1.0 + peak_hours * 0.018 * a / rho0),
                _ => 100.0 * (1.0 + peak_hours * 0.014 * a / rho0),
            };
            assert!((out.d[h] - expect).abs() < 1e-10, "hour {h}");
        }
    }

    #[test]
    fn peak_incentive_flattens_the_day() {
        let case = build_rts24();
        let e = &case.elasticity;
        let total: f64 = case.loads.iter().map(|l| l.p_base).sum();
        let d0: Vec<f64> = case.load_profile.iter().map(|f| total * f).collect();
        let out = responsive_demand_multi(
            &DemandProfile::baseline(d0.clone()),
            &PriceSchedule::flat(case.default_bid_price()),
            &peak_params(e, 85.0, 142.0),
            e,
            None,
        )
        .unwrap();
        assert!(DemandProfile::peak_to_valley(&out.d) < DemandProfile::peak_to_valley(&d0));
    }

    #[test]
    fn curtailment_never_exceeds_cap() {
        let case = build_rts24();
        let e = &case.elasticity;
        let d0: Vec<f64> = case.load_profile.iter().map(|f| 300.0 * f).collect();
        let out = responsive_demand_multi(
            &DemandProfile::baseline(d0.clone()),
            &PriceSchedule::flat(20.0),
            &peak_params(e, 85.0, 142.0),
            e,
            Some(45.0),
        )
        .unwrap();
        for h in 0..HOURS {
            assert!(d0[h] - out.d[h] <= 45.0 + 1e-12);
        }
    }

    #[test]
    fn missing_mapping_is_an_error() {
        let mut e = build_rts24().elasticity;
        e.hour_period.truncate(10);
        let r = responsive_demand_multi(
            &DemandProfile::baseline(vec![1.0; HOURS]),
            &PriceSchedule::flat(20.0),
            &[DrProgramParams::default(); HOURS],
            &e,
            None,
        );
        assert!(matches!(r, Err(Error::Missing(_))));
    }
}
