//! Admittance matrix assembly and Newton-Raphson AC power flow in polar form.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::facts::{self, FactsSetpoints};
use crate::netmodel::SystemCase;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 30;

/// π-model entries of one branch, in p.u.
#[derive(Debug, Clone, Copy)]
pub struct BranchAdmittance {
    pub line: usize,
    pub from: usize,
    pub to: usize,
    /// Series admittance after any compensation.
    pub series: Complex64,
    pub yff: Complex64,
    pub yft: Complex64,
    pub ytf: Complex64,
    pub ytt: Complex64,
}

#[derive(Debug, Clone)]
pub struct AdmittanceMatrix {
    pub n: usize,
    pub entries: DMatrix<Complex64>,
    pub branches: Vec<BranchAdmittance>,
    /// Applied device changes: `(line id, dG, dB)` for series compensation.
    pub provenance: Vec<(usize, f64, f64)>,
    pub statcom: Option<(usize, f64)>,
}

impl AdmittanceMatrix {
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[(i, j)]
    }
}

pub fn build_ybus(case: &SystemCase, setpoints: FactsSetpoints) -> Result<AdmittanceMatrix> {
    facts::check_setpoints(&case.facts, setpoints)?;
    let n = case.buses.len();
    let base = case.base_mva;
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    let mut branches = Vec::with_capacity(case.lines.len());
    let mut provenance = Vec::new();
    let tcsc_line = case.tcsc().map(|(l, ..)| l);

    for line in &case.lines {
        let f = index(case, line.from_bus)?;
        let t = index(case, line.to_bus)?;
        let mut x = line.x;
        if let (Some(xc), Some(host)) = (setpoints.x_tcsc, tcsc_line) {
            if host == line.id {
                let (dg, db) = facts::tcsc_delta_admittance(line, xc)?;
                provenance.push((line.id, dg, db));
                x -= xc;
            }
        }
        let (g, b) = facts::series_admittance(line.r, x);
        let ys = Complex64::new(g, b);
        let ych = Complex64::new(0.0, 0.5 * line.b_sh);
        let tap = line.tap;
        let br = BranchAdmittance {
            line: line.id,
            from: f,
            to: t,
            series: ys,
            yff: (ys + ych) / (tap * tap),
            yft: -ys / tap,
            ytf: -ys / tap,
            ytt: ys + ych,
        };
        y[(f, f)] += br.yff;
        y[(f, t)] += br.yft;
        y[(t, f)] += br.ytf;
        y[(t, t)] += br.ytt;
        branches.push(br);
    }

    for (k, bus) in case.buses.iter().enumerate() {
        y[(k, k)] += Complex64::new(bus.g_sh, bus.b_sh) / base;
    }

    let mut statcom = None;
    if let Some(b) = setpoints.b_stat {
        if let Some(crate::netmodel::FactsSpec::Statcom { bus, .. }) = case.statcom() {
            let k = index(case, *bus)?;
            y[(k, k)] += Complex64::new(0.0, b);
            statcom = Some((*bus, b));
        }
    }

    Ok(AdmittanceMatrix {
        n,
        entries: y,
        branches,
        provenance,
        statcom,
    })
}

fn index(case: &SystemCase, bus: usize) -> Result<usize> {
    case.bus_index(bus).ok_or(Error::Reference {
        entity: "network".into(),
        target: "bus",
        id: bus,
    })
}

/// Net scheduled injection at a bus (generation minus load), MW / MVAr.
/// A voltage setpoint makes the bus voltage-regulated; `q` is then ignored.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct BusInjection {
    pub p: f64,
    pub q: f64,
    pub v_set: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PfOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub facts: FactsSetpoints,
    /// Warm start `(v, theta)`; flat start when absent.
    pub start: Option<(Vec<f64>, Vec<f64>)>,
}

impl Default for PfOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            facts: FactsSetpoints::default(),
            start: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LineFlow {
    pub p_from: f64,
    pub q_from: f64,
    pub p_to: f64,
    pub q_to: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PowerFlowSolution {
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    /// Computed net injections, MW / MVAr.
    pub p_inj: Vec<f64>,
    pub q_inj: Vec<f64>,
    pub flows: Vec<LineFlow>,
    pub losses: f64,
    pub iterations: usize,
    pub max_mismatch: f64,
}

impl PowerFlowSolution {
    pub fn p_flow(&self) -> Vec<f64> {
        self.flows.iter().map(|f| f.p_from).collect()
    }

    pub fn q_flow(&self) -> Vec<f64> {
        self.flows.iter().map(|f| f.q_from).collect()
    }
}

/// Complex bus power injections `V conj(Y V)` in p.u.
pub fn bus_injections(ybus: &AdmittanceMatrix, v: &[f64], theta: &[f64]) -> Vec<Complex64> {
    let vc = phasors(v, theta);
    let i = &ybus.entries * &vc;
    vc.iter().zip(i.iter()).map(|(v, i)| v * i.conj()).collect()
}

fn phasors(v: &[f64], theta: &[f64]) -> DVector<Complex64> {
    DVector::from_iterator(
        v.len(),
        v.iter().zip(theta).map(|(&m, &a)| Complex64::from_polar(m, a)),
    )
}

pub fn solve_ac(
    case: &SystemCase,
    schedule: &[BusInjection],
    opts: &PfOptions,
) -> Result<PowerFlowSolution> {
    let ybus = build_ybus(case, opts.facts)?;
    let slack = case
        .slack_index()
        .ok_or_else(|| Error::Missing("slack bus".into()))?;
    solve_with_ybus(&ybus, slack, schedule, case.base_mva, opts)
}

pub fn solve_with_ybus(
    ybus: &AdmittanceMatrix,
    slack: usize,
    schedule: &[BusInjection],
    base_mva: f64,
    opts: &PfOptions,
) -> Result<PowerFlowSolution> {
    let n = ybus.n;
    if schedule.len() != n {
        return Err(Error::Degenerate(format!(
            "schedule has {} buses, network has {n}",
            schedule.len()
        )));
    }
    let (mut v, mut th) = match &opts.start {
        Some((v, t)) => (v.clone(), t.clone()),
        None => (vec![1.0; n], vec![0.0; n]),
    };
    for (k, s) in schedule.iter().enumerate() {
        if let Some(vs) = s.v_set {
            v[k] = vs;
        }
    }
    if opts.start.is_none() {
        th[slack] = 0.0;
    }
    let pvpq: Vec<usize> = (0..n).filter(|&k| k != slack).collect();
    let pq: Vec<usize> = (0..n)
        .filter(|&k| k != slack && schedule[k].v_set.is_none())
        .collect();
    let p_sched: Vec<f64> = schedule.iter().map(|s| s.p / base_mva).collect();
    let q_sched: Vec<f64> = schedule.iter().map(|s| s.q / base_mva).collect();

    let mismatch = |v: &[f64], th: &[f64]| -> (DVector<f64>, f64) {
        let s = bus_injections(ybus, v, th);
        let mut f = DVector::zeros(pvpq.len() + pq.len());
        for (r, &k) in pvpq.iter().enumerate() {
            f[r] = s[k].re - p_sched[k];
        }
        for (r, &k) in pq.iter().enumerate() {
            f[pvpq.len() + r] = s[k].im - q_sched[k];
        }
        let norm = f.amax();
        (f, norm)
    };

    let (mut f, mut norm) = mismatch(&v, &th);
    let mut it = 0;
    while norm > opts.tol {
        if it >= opts.max_iter {
            return Err(Error::NonConvergence {
                iterations: it,
                mismatch: norm,
            });
        }
        it += 1;
        let jac = jacobian(ybus, &v, &th, &pvpq, &pq);
        let dx = jac
            .lu()
            .solve(&(-&f))
            .filter(|d| d.iter().all(|x| x.is_finite()))
            .ok_or(Error::SingularJacobian { iteration: it })?;
        for (r, &k) in pvpq.iter().enumerate() {
            th[k] += dx[r];
        }
        for (r, &k) in pq.iter().enumerate() {
            v[k] += dx[pvpq.len() + r];
        }
        (f, norm) = mismatch(&v, &th);
    }

    let s = bus_injections(ybus, &v, &th);
    let flows = full_ac_flows(ybus, &v, &th, base_mva);
    Ok(PowerFlowSolution {
        p_inj: s.iter().map(|s| s.re * base_mva).collect(),
        q_inj: s.iter().map(|s| s.im * base_mva).collect(),
        losses: total_losses(&flows),
        flows,
        v,
        theta: th,
        iterations: it,
        max_mismatch: norm,
    })
}

/// Power-flow Jacobian with rows `[P(pvpq); Q(pq)]`, columns `[theta(pvpq); V(pq)]`.
fn jacobian(
    ybus: &AdmittanceMatrix,
    v: &[f64],
    th: &[f64],
    pvpq: &[usize],
    pq: &[usize],
) -> DMatrix<f64> {
    let n = ybus.n;
    let vc = phasors(v, th);
    let ibus = &ybus.entries * &vc;
    let j = Complex64::new(0.0, 1.0);
    // dS/dtheta and dS/d|V|
    let mut ds_da = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    let mut ds_dm = ds_da.clone();
    for r in 0..n {
        let vn_r = vc[r] / v[r];
        for c in 0..n {
            let y = ybus.entries[(r, c)];
            let vn_c = vc[c] / v[c];
            let mut a = -j * vc[r] * (y * vc[c]).conj();
            let mut m = vc[r] * (y * vn_c).conj();
            if r == c {
                a += j * vc[r] * ibus[r].conj();
                m += ibus[r].conj() * vn_r;
            }
            ds_da[(r, c)] = a;
            ds_dm[(r, c)] = m;
        }
    }
    let np = pvpq.len();
    let mut jac = DMatrix::zeros(np + pq.len(), np + pq.len());
    for (ri, &r) in pvpq.iter().enumerate() {
        for (ci, &c) in pvpq.iter().enumerate() {
            jac[(ri, ci)] = ds_da[(r, c)].re;
        }
        for (ci, &c) in pq.iter().enumerate() {
            jac[(ri, np + ci)] = ds_dm[(r, c)].re;
        }
    }
    for (ri, &r) in pq.iter().enumerate() {
        for (ci, &c) in pvpq.iter().enumerate() {
            jac[(np + ri, ci)] = ds_da[(r, c)].im;
        }
        for (ci, &c) in pq.iter().enumerate() {
            jac[(np + ri, np + ci)] = ds_dm[(r, c)].im;
        }
    }
    jac
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FlowMode {
    /// Standard π-model end flows with voltage magnitudes.
    FullAc,
    /// Unit-voltage series-only evaluation of the printed line-flow formulas;
    /// `B_b` is taken as the positive series susceptance magnitude.
    PaperForm,
}

fn full_ac_flows(ybus: &AdmittanceMatrix, v: &[f64], th: &[f64], base: f64) -> Vec<LineFlow> {
    ybus.branches
        .iter()
        .map(|br| {
            let vf = Complex64::from_polar(v[br.from], th[br.from]);
            let vt = Complex64::from_polar(v[br.to], th[br.to]);
            let sf = vf * (br.yff * vf + br.yft * vt).conj() * base;
            let st = vt * (br.ytf * vf + br.ytt * vt).conj() * base;
            LineFlow {
                p_from: sf.re,
                q_from: sf.im,
                p_to: st.re,
                q_to: st.im,
            }
        })
        .collect()
}

pub fn line_flows(
    sol: &PowerFlowSolution,
    ybus: &AdmittanceMatrix,
    mode: FlowMode,
    base_mva: f64,
) -> Vec<LineFlow> {
    match mode {
        FlowMode::FullAc => full_ac_flows(ybus, &sol.v, &sol.theta, base_mva),
        FlowMode::PaperForm => ybus
            .branches
            .iter()
            .map(|br| {
                let g = br.series.re;
                let b = -br.series.im;
                let d = sol.theta[br.from] - sol.theta[br.to];
                let (pf, qf) = paper_form_flow(g, b, d);
                let (pt, qt) = paper_form_flow(g, b, -d);
                LineFlow {
                    p_from: pf * base_mva,
                    q_from: qf * base_mva,
                    p_to: pt * base_mva,
                    q_to: qt * base_mva,
                }
            })
            .collect(),
    }
}

/// Literal unit-voltage line-flow formulas, p.u.
pub fn paper_form_flow(g: f64, b: f64, delta: f64) -> (f64, f64) {
    let (s, c) = delta.sin_cos();
    (g * (c - 1.0) + b * s, g * (s - 1.0) - b * c)
}

pub fn total_losses(flows: &[LineFlow]) -> f64 {
    flows.iter().map(|f| f.p_from + f.p_to).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{build_rts24, Bus, Line};

    fn two_bus(r: f64, x: f64) -> SystemCase {
        let mut case = build_rts24();
        case.buses = vec![
            Bus {
                id: 1,
                v_min: 0.9,
                v_max: 1.1,
                is_slack: true,
                g_sh: 0.0,
                b_sh: 0.0,
                v_set: Some(1.0),
            },
            Bus {
                id: 2,
                v_min: 0.9,
                v_max: 1.1,
                is_slack: false,
                g_sh: 0.0,
                b_sh: 0.0,
                v_set: None,
            },
        ];
        case.lines = vec![Line {
            id: 1,
            from_bus: 1,
            to_bus: 2,
            r,
            x,
            b_sh: 0.0,
            p_max: 500.0,
            q_max: 500.0,
            tap: 1.0,
            tcsc_host: true,
        }];
        case.facts = vec![crate::netmodel::FactsSpec::Tcsc {
            line: 1,
            x_min: -0.25,
            x_max: 0.25,
        }];
        case
    }

    #[test]
    fn single_branch_entries() {
        let case = two_bus(0.0, 0.1);
        let y = build_ybus(&case, FactsSetpoints::default()).unwrap();
        let y12 = -Complex64::new(1.0, 0.0) / Complex64::new(0.0, 0.1);
        assert!((y.get(0, 1) - y12).norm() < 1e-12);
        assert!((y.get(0, 0) + y12).norm() < 1e-12);

        let sp = FactsSetpoints {
            x_tcsc: Some(0.02),
            b_stat: None,
        };
        let y = build_ybus(&case, sp).unwrap();
        let y12 = -Complex64::new(1.0, 0.0) / Complex64::new(0.0, 0.08);
        assert!((y.get(0, 1) - y12).norm() < 1e-12);
        assert_eq!(y.provenance.len(), 1);

        let bad = FactsSetpoints {
            x_tcsc: Some(0.3),
            b_stat: None,
        };
        assert!(matches!(build_ybus(&case, bad), Err(Error::Bounds { .. })));
    }

    #[test]
    fn flat_no_load() {
        let case = two_bus(0.0, 0.1);
        let sched = vec![
            BusInjection {
                v_set: Some(1.0),
                ..Default::default()
            },
            BusInjection::default(),
        ];
        let sol = solve_ac(&case, &sched, &PfOptions::default()).unwrap();
        assert!(sol.iterations <= 1);
        assert!((sol.v[1] - 1.0).abs() < 1e-12);
        assert!(sol.theta[1].abs() < 1e-12);
        assert_eq!(sol.losses, 0.0);
    }

    /// Hand Newton oracle for the lossless two-bus case: with Q2 free to be
    /// whatever the solution demands, P2 = -V2 sin(-theta2)/x and
    /// Q2 = (V2^2 - V2 cos theta2)/x. Solve the pair by scalar substitution.
    #[test]
    fn two_bus_lossless_hand_solution() {
        let case = two_bus(0.0, 0.1);
        let sched = vec![
            BusInjection {
                v_set: Some(1.0),
                ..Default::default()
            },
            BusInjection {
                p: -100.0,
                q: 0.0,
                v_set: Some(1.0),
            },
        ];
        // Both ends held at 1 p.u.: sin(theta1 - theta2) = P x = 0.1
        let sol = solve_ac(&case, &sched, &PfOptions::default()).unwrap();
        assert!(((0.0 - sol.theta[1]).sin() - 0.1).abs() < 1e-10);
        assert!(sol.losses.abs() < 1e-8);

        // PQ load bus: fixed point of V2 = f(V2) by independent bisection.
        let sched = vec![
            sched[0],
            BusInjection {
                p: -100.0,
                q: 0.0,
                v_set: None,
            },
        ];
        let sol = solve_ac(&case, &sched, &PfOptions::default()).unwrap();
        // Q2 = 0 => V2 = cos(theta2); P2 = -1 => V2 sin(theta2) = -0.1
        let mut lo: f64 = -1.0;
        let mut hi: f64 = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let val = mid.cos() * mid.sin() + 0.1;
            if val > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let th = 0.5 * (lo + hi);
        assert!((sol.theta[1] - th).abs() < 1e-9);
        assert!((sol.v[1] - th.cos()).abs() < 1e-9);
    }

    #[test]
    fn lossy_two_bus_loss_is_i2r() {
        let case = two_bus(0.01, 0.1);
        let sched = vec![
            BusInjection {
                v_set: Some(1.0),
                ..Default::default()
            },
            BusInjection {
                p: -100.0,
                q: 0.0,
                v_set: None,
            },
        ];
        let sol = solve_ac(&case, &sched, &PfOptions::default()).unwrap();
        let v1 = Complex64::from_polar(sol.v[0], sol.theta[0]);
        let v2 = Complex64::from_polar(sol.v[1], sol.theta[1]);
        let i = (v1 - v2) / Complex64::new(0.01, 0.1);
        let loss = i.norm_sqr() * 0.01 * 100.0;
        assert!((sol.losses - loss).abs() < 1e-8);
        assert!(sol.losses > 0.0);
    }

    #[test]
    fn paper_form_zero_angle() {
        let (p, q) = paper_form_flow(2.0, 5.0, 0.0);
        assert_eq!(p, 0.0);
        assert_eq!(q, -2.0 - 5.0);
    }

    #[test]
    fn non_convergence_reported() {
        let case = two_bus(0.0, 0.1);
        let sched = vec![
            BusInjection {
                v_set: Some(1.0),
                ..Default::default()
            },
            BusInjection {
                p: -2000.0,
                q: 0.0,
                v_set: None,
            },
        ];
        let err = solve_ac(&case, &sched, &PfOptions::default()).unwrap_err();
        assert!(matches!(
            err,
            Error::NonConvergence { .. } | Error::SingularJacobian { .. }
        ));
    }
}
