//! Static injection models for the series (TCSC) and shunt (STATCOM) devices.
//!
//! A TCSC setpoint `x_tcsc` replaces the host line's series reactance `x` by
//! `x - x_tcsc`; positive values are capacitive compensation. The change in
//! the series admittance is `Y(r, x - x_tcsc) - Y(r, x)` and the terminal
//! injections below are the extra power the compensated branch draws from
//! each end bus.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{FactsSpec, Line};

/// Series admittance `1 / (r + jx)` as `(g, b)`.
pub fn series_admittance(r: f64, x: f64) -> (f64, f64) {
    let d = r * r + x * x;
    (r / d, -x / d)
}

/// Device setpoints as seen by the network model. `None` leaves the device out.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FactsSetpoints {
    pub x_tcsc: Option<f64>,
    pub b_stat: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TcscState {
    pub line: usize,
    pub x_tcsc: f64,
}

impl TcscState {
    pub fn new(spec: &FactsSpec, host: &Line, x_tcsc: f64) -> Result<Self> {
        let FactsSpec::Tcsc { line, x_min, x_max } = *spec else {
            return Err(Error::Missing("TCSC specification".into()));
        };
        check_bound("x_tcsc", x_tcsc, x_min, x_max)?;
        if host.x - x_tcsc == 0.0 {
            return Err(Error::Degenerate(format!(
                "compensated reactance of line {} is zero",
                host.id
            )));
        }
        Ok(Self { line, x_tcsc })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatcomState {
    pub bus: usize,
    pub v_s: f64,
    pub delta_s: f64,
    pub b_stat: f64,
}

impl StatcomState {
    pub fn new(spec: &FactsSpec, v_s: f64, delta_s: f64, b_stat: f64) -> Result<Self> {
        let FactsSpec::Statcom {
            bus,
            b_min,
            b_max,
            vs_min,
            vs_max,
            ..
        } = *spec
        else {
            return Err(Error::Missing("STATCOM specification".into()));
        };
        check_bound("v_s", v_s, vs_min, vs_max)?;
        check_bound("b_stat", b_stat, b_min, b_max)?;
        Ok(Self {
            bus,
            v_s,
            delta_s: delta_s.rem_euclid(TAU),
            b_stat,
        })
    }

    /// Lossless operating point delivering `b_stat * v_i^2` of reactive power:
    /// in phase with the bus and `v_s = v_i (1 + b_stat x_s)`.
    pub fn from_susceptance(spec: &FactsSpec, v_i: f64, theta_i: f64, b_stat: f64) -> Result<Self> {
        let FactsSpec::Statcom { x_s, .. } = *spec else {
            return Err(Error::Missing("STATCOM specification".into()));
        };
        Self::new(spec, v_i * (1.0 + b_stat * x_s), theta_i, b_stat)
    }
}

fn check_bound(what: &str, value: f64, min: f64, max: f64) -> Result<()> {
    if value < min || value > max || !value.is_finite() {
        return Err(Error::Bounds {
            what: what.to_string(),
            value,
            min,
            max,
        });
    }
    Ok(())
}

/// Closed-form admittance change of a series-compensated branch.
pub fn delta_admittance(r: f64, x: f64, x_tcsc: f64) -> Result<(f64, f64)> {
    let xc = x_tcsc;
    let d_old = r * r + x * x;
    let d_new = r * r + (x - xc) * (x - xc);
    if d_new == 0.0 || d_old == 0.0 {
        return Err(Error::Degenerate(format!(
            "series impedance vanishes for r={r}, x={x}, x_tcsc={xc}"
        )));
    }
    let den = d_old * d_new;
    let dg = xc * r * (2.0 * x - xc) / den;
    let db = xc * (r * r - x * x + xc * x) / den;
    Ok((dg, db))
}

pub fn tcsc_delta_admittance(line: &Line, x_tcsc: f64) -> Result<(f64, f64)> {
    delta_admittance(line.r, line.x, x_tcsc)
}

/// Terminal power draws of a compensated branch, `(p_i, q_i, p_j, q_j)` in p.u.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InjectionQuad {
    pub p_i: f64,
    pub q_i: f64,
    pub p_j: f64,
    pub q_j: f64,
}

pub fn tcsc_injections(v_i: f64, v_j: f64, delta_ij: f64, dg: f64, db: f64) -> InjectionQuad {
    let (s, c) = delta_ij.sin_cos();
    let vv = v_i * v_j;
    InjectionQuad {
        p_i: v_i * v_i * dg - vv * (dg * c + db * s),
        q_i: -v_i * v_i * db - vv * (dg * s - db * c),
        p_j: v_j * v_j * dg - vv * (dg * c - db * s),
        q_j: -v_j * v_j * db + vv * (dg * s + db * c),
    }
}

/// Active and reactive power injected at the STATCOM bus.
pub fn statcom_injections(
    v_i: f64,
    theta_i: f64,
    state: &StatcomState,
    spec: &FactsSpec,
) -> Result<(f64, f64)> {
    let FactsSpec::Statcom {
        r_s,
        x_s,
        vs_min,
        vs_max,
        ..
    } = *spec
    else {
        return Err(Error::Missing("STATCOM specification".into()));
    };
    let d = r_s * r_s + x_s * x_s;
    if d == 0.0 {
        return Err(Error::Degenerate("zero STATCOM coupling impedance".into()));
    }
    check_bound("v_s", state.v_s, vs_min, vs_max)?;
    let (s, c) = (theta_i - state.delta_s).sin_cos();
    let vv = v_i * state.v_s;
    let p = (r_s * vv * c - x_s * vv * s - r_s * v_i * v_i) / d;
    let q = (r_s * vv * s + x_s * vv * c - x_s * v_i * v_i) / d;
    Ok((p, q))
}

/// Reactive injection of the susceptance model, `b_stat |V|^2`.
pub fn statcom_susceptance_injection(v_i: f64, b_stat: f64) -> f64 {
    b_stat * v_i * v_i
}

/// Projects each setpoint onto its device interval.
pub fn clamp_setpoints(specs: &[FactsSpec], proposed: FactsSetpoints) -> FactsSetpoints {
    let mut out = proposed;
    for spec in specs {
        match *spec {
            FactsSpec::Tcsc { x_min, x_max, .. } => {
                out.x_tcsc = out.x_tcsc.map(|x| x.clamp(x_min, x_max));
            }
            FactsSpec::Statcom { b_min, b_max, .. } => {
                out.b_stat = out.b_stat.map(|b| b.clamp(b_min, b_max));
            }
        }
    }
    out
}

/// Checks a setpoint pair against the case's device bounds.
pub fn check_setpoints(specs: &[FactsSpec], sp: FactsSetpoints) -> Result<()> {
    for spec in specs {
        match *spec {
            FactsSpec::Tcsc { x_min, x_max, .. } => {
                if let Some(x) = sp.x_tcsc {
                    check_bound("x_tcsc", x, x_min, x_max)?;
                }
            }
            FactsSpec::Statcom { b_min, b_max, .. } => {
                if let Some(b) = sp.b_stat {
                    check_bound("b_stat", b, b_min, b_max)?;
                }
            }
        }
    }
    if sp.x_tcsc.is_some() && !specs.iter().any(|s| matches!(s, FactsSpec::Tcsc { .. })) {
        return Err(Error::Missing("TCSC specification".into()));
    }
    if sp.b_stat.is_some() && !specs.iter().any(|s| matches!(s, FactsSpec::Statcom { .. })) {
        return Err(Error::Missing("STATCOM specification".into()));
    }
    Ok(())
}
