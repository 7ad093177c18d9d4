//! Network and market data: buses, lines, participants, FACTS devices and
//! the elasticity table, plus JSON case-file ingestion and validation.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod rts24;

pub use rts24::build_rts24;

/// Hours in the scheduling day.
pub const HOURS: usize = 24;

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub v_min: f64,
    pub v_max: f64,
    #[serde(default)]
    pub is_slack: bool,
    /// Shunt conductance, MW consumed at 1 p.u. voltage.
    #[serde(default)]
    pub g_sh: f64,
    /// Shunt susceptance, MVAr injected at 1 p.u. voltage.
    #[serde(default)]
    pub b_sh: f64,
    /// Voltage setpoint used when the bus is regulated in a plain power flow.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_set: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: usize,
    pub from_bus: usize,
    pub to_bus: usize,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance, split equally between the ends.
    pub b_sh: f64,
    pub p_max: f64,
    pub q_max: f64,
    /// Off-nominal turns ratio at the from end (1.0 for plain lines).
    #[serde(default = "one")]
    pub tap: f64,
    #[serde(default)]
    pub tcsc_host: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Genco {
    pub id: usize,
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub s_rated: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub ramp_up: f64,
    pub ramp_down: f64,
    /// Energy offer price added on top of the cost curve in stage 1.
    #[serde(default)]
    pub offer_price: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offer_up: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offer_down: Option<f64>,
}

impl Genco {
    pub fn cost(&self, p: f64) -> f64 {
        crate::market::genco_cost(p, self.alpha, self.beta, self.gamma)
    }

    pub fn marginal_cost(&self, p: f64) -> f64 {
        self.beta + 2.0 * self.gamma * p
    }

    /// Re-dispatch price for raising output; defaults to marginal cost at capacity.
    pub fn offer_up_price(&self) -> f64 {
        self.offer_up.unwrap_or(self.marginal_cost(self.p_max))
    }

    /// Re-dispatch price for lowering output; defaults to half the linear cost term.
    pub fn offer_down_price(&self) -> f64 {
        self.offer_down.unwrap_or(0.5 * self.beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SpeedDistribution {
    Weibull { scale: f64, shape: f64 },
    Normal { mean: f64, std: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindProducer {
    pub id: usize,
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub v_rated: f64,
    pub v_cut_in: f64,
    pub v_cut_out: f64,
    pub kappa_min: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed_dist: Option<SpeedDistribution>,
    #[serde(default)]
    pub offer_price: f64,
}

impl WindProducer {
    /// Speed distribution, falling back to a Rayleigh-shaped Weibull whose mean
    /// sits midway between cut-in and rated speed.
    pub fn speed_distribution(&self) -> SpeedDistribution {
        self.speed_dist.unwrap_or_else(|| {
            let shape = 2.0;
            let mean = 0.5 * (self.v_cut_in + self.v_rated);
            let scale = mean / statrs::function::gamma::gamma(1.0 + 1.0 / shape);
            SpeedDistribution::Weibull { scale, shape }
        })
    }

    /// Reactive capability half-width per MW of active output.
    pub fn q_ratio(&self) -> f64 {
        (1.0 - self.kappa_min * self.kappa_min).max(0.0).sqrt() / self.kappa_min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadPoint {
    pub id: usize,
    pub bus: usize,
    /// Distribution company owning this load; used only for aggregation in reports.
    pub disco: usize,
    pub p_base: f64,
    pub power_factor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bid_price: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offer_up: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offer_down: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ramp_up: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ramp_down: Option<f64>,
}

impl LoadPoint {
    pub fn tan_phi(&self) -> f64 {
        let pf = self.power_factor;
        (1.0 - pf * pf).max(0.0).sqrt() / pf
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrResource {
    pub id: usize,
    pub bus: usize,
    pub size_mw: f64,
    pub incentive: f64,
    pub penalty_rate: f64,
    pub contracted_cut: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FactsSpec {
    Tcsc {
        line: usize,
        x_min: f64,
        x_max: f64,
    },
    Statcom {
        bus: usize,
        b_min: f64,
        b_max: f64,
        vs_min: f64,
        vs_max: f64,
        r_s: f64,
        x_s: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticityMatrix {
    pub periods: Vec<String>,
    pub values: Vec<Vec<f64>>,
    /// Period index for each hour of the day (index 0 is hour 1).
    pub hour_period: Vec<usize>,
}

impl ElasticityMatrix {
    /// Elasticity between hour `i` and hour `j` (0-based).
    pub fn hourly(&self, i: usize, j: usize) -> f64 {
        self.values[self.hour_period[i]][self.hour_period[j]]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemCase {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub gencos: Vec<Genco>,
    #[serde(default)]
    pub wind_producers: Vec<WindProducer>,
    pub loads: Vec<LoadPoint>,
    #[serde(default)]
    pub dr_resources: Vec<DrResource>,
    #[serde(default)]
    pub facts: Vec<FactsSpec>,
    pub elasticity: ElasticityMatrix,
    pub load_profile: Vec<f64>,
    #[serde(default)]
    pub dr_participation: f64,
    /// Free-form notes carried into reports.
    #[serde(default)]
    pub notes: Vec<String>,
}

impl SystemCase {
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn line_index(&self, id: usize) -> Option<usize> {
        self.lines.iter().position(|l| l.id == id)
    }

    pub fn slack_index(&self) -> Option<usize> {
        self.buses.iter().position(|b| b.is_slack)
    }

    pub fn tcsc(&self) -> Option<(usize, f64, f64)> {
        self.facts.iter().find_map(|f| match *f {
            FactsSpec::Tcsc { line, x_min, x_max } => Some((line, x_min, x_max)),
            _ => None,
        })
    }

    pub fn statcom(&self) -> Option<&FactsSpec> {
        self.facts
            .iter()
            .find(|f| matches!(f, FactsSpec::Statcom { .. }))
    }

    /// Load of a load point in the given hour (0-based), MW.
    pub fn load_mw(&self, load: &LoadPoint, hour: usize) -> f64 {
        load.p_base * self.load_profile[hour]
    }

    /// Default demand bid: 1.2x the highest genco marginal cost at capacity.
    pub fn default_bid_price(&self) -> f64 {
        let top = self
            .gencos
            .iter()
            .map(|g| g.marginal_cost(g.p_max) + g.offer_price)
            .fold(0.0, f64::max);
        1.2 * top
    }

    pub fn bid_price(&self, load: &LoadPoint) -> f64 {
        load.bid_price.unwrap_or_else(|| self.default_bid_price())
    }

    pub fn dr_at_bus(&self, bus: usize) -> Option<&DrResource> {
        self.dr_resources.iter().find(|d| d.bus == bus)
    }

    /// Curtailable capacity of a DR site in an hour: the tighter of the
    /// resource size and the enrolled fraction of the host load.
    pub fn dr_capacity(&self, dr: &DrResource, hour: usize) -> f64 {
        let host: f64 = self
            .loads
            .iter()
            .filter(|l| l.bus == dr.bus)
            .map(|l| self.load_mw(l, hour))
            .sum();
        dr.size_mw.min(self.dr_participation * host).max(0.0)
    }

    /// Distinct DISCO ids in ascending order.
    pub fn discos(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.loads.iter().map(|l| l.disco).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Human-readable list of values filled in by defaults rather than case data.
    pub fn defaulted_fields(&self) -> Vec<String> {
        let mut out = Vec::new();
        let g_up = self.gencos.iter().filter(|g| g.offer_up.is_none()).count();
        let g_dn = self.gencos.iter().filter(|g| g.offer_down.is_none()).count();
        if g_up > 0 {
            out.push(format!("{g_up} genco up-offers defaulted to marginal cost at p_max"));
        }
        if g_dn > 0 {
            out.push(format!("{g_dn} genco down-offers defaulted to 0.5*beta"));
        }
        let bids = self.loads.iter().filter(|l| l.bid_price.is_none()).count();
        if bids > 0 {
            out.push(format!(
                "{bids} demand bids defaulted to {:.4} $/MWh",
                self.default_bid_price()
            ));
        }
        let dr = self
            .dr_resources
            .iter()
            .filter(|d| {
                self.loads
                    .iter()
                    .any(|l| l.bus == d.bus && (l.offer_up.is_none() || l.offer_down.is_none()))
            })
            .count();
        if dr > 0 {
            out.push(format!("{dr} DR offers defaulted to the incentive rate"));
        }
        let wind = self
            .wind_producers
            .iter()
            .filter(|w| w.speed_dist.is_none())
            .count();
        if wind > 0 {
            out.push(format!(
                "{wind} wind speed distributions defaulted to Weibull(k=2) centred between cut-in and rated"
            ));
        }
        out
    }
}

/// One violated rule, naming the entity and field involved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub entity: String,
    pub field: String,
    pub rule: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}: {}", self.entity, self.field, self.rule)
    }
}

struct Checker(Vec<Diagnostic>);

impl Checker {
    fn check(&mut self, ok: bool, entity: impl Into<String>, field: &str, rule: &str) {
        if !ok {
            self.0.push(Diagnostic {
                entity: entity.into(),
                field: field.to_string(),
                rule: rule.to_string(),
            });
        }
    }
}

/// Checks every type invariant and returns one diagnostic per violation.
pub fn validate_case(case: &SystemCase) -> Vec<Diagnostic> {
    let mut c = Checker(Vec::new());
    let bus_ids: HashSet<usize> = case.buses.iter().map(|b| b.id).collect();

    c.check(case.base_mva > 0.0, "case", "base_mva", "base_mva > 0");
    c.check(
        (0.0..=1.0).contains(&case.dr_participation),
        "case",
        "dr_participation",
        "dr_participation in [0, 1]",
    );
    c.check(
        case.load_profile.len() == HOURS && case.load_profile.iter().all(|&f| f >= 0.0),
        "case",
        "load_profile",
        "24 non-negative hourly factors",
    );
    c.check(
        bus_ids.len() == case.buses.len(),
        "case",
        "buses",
        "bus ids are unique",
    );
    let slacks = case.buses.iter().filter(|b| b.is_slack).count();
    c.check(slacks == 1, "case", "buses", "exactly one slack bus");

    for b in &case.buses {
        let e = format!("bus {}", b.id);
        c.check(b.v_min > 0.0, &e, "v_min", "0 < v_min");
        c.check(b.v_min <= b.v_max, &e, "v_max", "v_min <= v_max");
    }

    for l in &case.lines {
        let e = format!("line {}", l.id);
        c.check(l.x != 0.0, &e, "x", "x != 0");
        c.check(l.p_max > 0.0, &e, "p_max", "p_max > 0");
        c.check(l.q_max > 0.0, &e, "q_max", "q_max > 0");
        c.check(l.from_bus != l.to_bus, &e, "to_bus", "from_bus != to_bus");
        c.check(l.tap > 0.0, &e, "tap", "tap > 0");
        c.check(bus_ids.contains(&l.from_bus), &e, "from_bus", "bus exists");
        c.check(bus_ids.contains(&l.to_bus), &e, "to_bus", "bus exists");
    }

    for g in &case.gencos {
        let e = format!("genco {}", g.id);
        c.check(g.p_min >= 0.0, &e, "p_min", "0 <= p_min");
        c.check(g.p_min <= g.p_max, &e, "p_max", "p_min <= p_max");
        c.check(g.p_max <= g.s_rated, &e, "s_rated", "p_max <= s_rated");
        c.check(g.gamma >= 0.0, &e, "gamma", "gamma >= 0");
        c.check(g.ramp_up >= 0.0, &e, "ramp_up", "ramp_up >= 0");
        c.check(g.ramp_down >= 0.0, &e, "ramp_down", "ramp_down >= 0");
        c.check(bus_ids.contains(&g.bus), &e, "bus", "bus exists");
    }

    for w in &case.wind_producers {
        let e = format!("wind {}", w.id);
        c.check(
            w.v_cut_in < w.v_rated && w.v_rated < w.v_cut_out,
            &e,
            "v_rated",
            "v_cut_in < v_rated < v_cut_out",
        );
        c.check(
            w.kappa_min > 0.0 && w.kappa_min <= 1.0,
            &e,
            "kappa_min",
            "0 < kappa_min <= 1",
        );
        c.check(w.p_min <= w.p_max, &e, "p_max", "p_min <= p_max");
        c.check(bus_ids.contains(&w.bus), &e, "bus", "bus exists");
    }

    for l in &case.loads {
        let e = format!("load {}", l.id);
        c.check(l.p_base >= 0.0, &e, "p_base", "p_base >= 0");
        c.check(
            l.power_factor > 0.0 && l.power_factor <= 1.0,
            &e,
            "power_factor",
            "0 < power_factor <= 1",
        );
        c.check(bus_ids.contains(&l.bus), &e, "bus", "bus exists");
    }

    for d in &case.dr_resources {
        let e = format!("dr {}", d.id);
        let host: f64 = case
            .loads
            .iter()
            .filter(|l| l.bus == d.bus)
            .map(|l| l.p_base)
            .sum();
        let has_host = case.loads.iter().any(|l| l.bus == d.bus);
        c.check(has_host, &e, "bus", "DR site hosts a load");
        c.check(
            d.size_mw >= 0.0 && d.size_mw <= host,
            &e,
            "size_mw",
            "DrResource capacity: 0 <= size_mw <= host load p_base",
        );
        c.check(d.incentive >= 0.0, &e, "incentive", "incentive >= 0");
        c.check(d.penalty_rate >= 0.0, &e, "penalty_rate", "penalty_rate >= 0");
        c.check(d.contracted_cut >= 0.0, &e, "contracted_cut", "IC >= 0");
    }

    for (k, f) in case.facts.iter().enumerate() {
        let e = format!("facts {}", k + 1);
        match *f {
            FactsSpec::Tcsc { line, x_min, x_max } => {
                c.check(x_min <= x_max, &e, "x_max", "x_min <= x_max");
                c.check(case.line_index(line).is_some(), &e, "line", "line exists");
            }
            FactsSpec::Statcom {
                bus,
                b_min,
                b_max,
                vs_min,
                vs_max,
                r_s,
                x_s,
            } => {
                c.check(b_min <= b_max, &e, "b_max", "b_min <= b_max");
                c.check(vs_min <= vs_max, &e, "vs_max", "vs_min <= vs_max");
                c.check(r_s * r_s + x_s * x_s > 0.0, &e, "x_s", "r_s^2 + x_s^2 > 0");
                c.check(bus_ids.contains(&bus), &e, "bus", "bus exists");
            }
        }
    }

    let el = &case.elasticity;
    let np = el.periods.len();
    let square = el.values.len() == np && el.values.iter().all(|r| r.len() == np);
    c.check(square, "elasticity", "values", "matrix dimensions match period count");
    if square {
        for i in 0..np {
            for j in 0..np {
                let v = el.values[i][j];
                if i == j {
                    c.check(v <= 0.0, "elasticity", "values", "self elasticity <= 0");
                } else {
                    c.check(v >= 0.0, "elasticity", "values", "cross elasticity >= 0");
                }
            }
        }
    }
    c.check(
        el.hour_period.len() == HOURS && el.hour_period.iter().all(|&p| p < np),
        "elasticity",
        "hour_period",
        "every hour maps to a period",
    );
    c.0
}

/// Resolves every cross-reference, returning the first dangling id.
pub fn check_references(case: &SystemCase) -> Result<()> {
    let bus = |entity: String, id: usize| -> Result<()> {
        if case.bus_index(id).is_some() {
            Ok(())
        } else {
            Err(Error::Reference {
                entity,
                target: "bus",
                id,
            })
        }
    };
    for l in &case.lines {
        bus(format!("line {}", l.id), l.from_bus)?;
        bus(format!("line {}", l.id), l.to_bus)?;
    }
    for g in &case.gencos {
        bus(format!("genco {}", g.id), g.bus)?;
    }
    for w in &case.wind_producers {
        bus(format!("wind {}", w.id), w.bus)?;
    }
    for l in &case.loads {
        bus(format!("load {}", l.id), l.bus)?;
    }
    for d in &case.dr_resources {
        bus(format!("dr {}", d.id), d.bus)?;
    }
    for f in &case.facts {
        match *f {
            FactsSpec::Tcsc { line, .. } if case.line_index(line).is_none() => {
                return Err(Error::Reference {
                    entity: "tcsc".into(),
                    target: "line",
                    id: line,
                })
            }
            FactsSpec::Statcom { bus: b, .. } => bus("statcom".into(), b)?,
            _ => {}
        }
    }
    Ok(())
}

/// Parses a case document, resolving references and checking invariants.
pub fn parse_case(text: &str) -> Result<SystemCase> {
    let case: SystemCase = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    check_references(&case)?;
    let diags = validate_case(&case);
    if !diags.is_empty() {
        return Err(Error::Invariant(diags));
    }
    Ok(case)
}

pub fn load_case(path: impl AsRef<Path>) -> Result<SystemCase> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_case(&text)
}

pub fn case_to_json(case: &SystemCase) -> String {
    serde_json::to_string_pretty(case).expect("case serializes")
}

pub fn write_case(case: &SystemCase, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, case_to_json(case) + "\n").map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_a_parse_error() {
        assert!(matches!(parse_case(""), Err(Error::Parse { .. })));
    }

    #[test]
    fn dangling_bus_is_named() {
        let mut case = build_rts24();
        case.lines[0].to_bus = 99;
        let err = parse_case(&case_to_json(&case)).unwrap_err();
        match err {
            Error::Reference { id, target, .. } => {
                assert_eq!(id, 99);
                assert_eq!(target, "bus");
            }
            other => panic!("unexpected {other}"),
        }
        assert!(err_text(&case).contains("99"));
    }

    fn err_text(case: &SystemCase) -> String {
        parse_case(&case_to_json(case)).unwrap_err().to_string()
    }

    #[test]
    fn embedded_case_is_clean() {
        assert!(validate_case(&build_rts24()).is_empty());
    }

    #[test]
    fn voltage_band_violation_names_bus() {
        let mut case = build_rts24();
        case.buses[4].v_min = 1.2;
        let diags = validate_case(&case);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].entity, "bus 5");
        assert_eq!(diags[0].field, "v_max");
    }

    #[test]
    fn oversized_dr_is_flagged() {
        let mut case = build_rts24();
        // bus 16 carries a 100 MW load
        let dr = case.dr_resources.iter_mut().find(|d| d.bus == 16).unwrap();
        dr.size_mw = 200.0;
        let diags = validate_case(&case);
        assert_eq!(diags.len(), 1);
        assert!(diags[0].rule.contains("DrResource capacity"));
    }

    #[test]
    fn two_slacks_rejected() {
        let mut case = build_rts24();
        case.buses[0].is_slack = true;
        let diags = validate_case(&case);
        assert!(diags.iter().any(|d| d.rule == "exactly one slack bus"));
    }

    #[test]
    fn dr_capacity_takes_tighter_limit() {
        let case = build_rts24();
        let peak = 17;
        // bus 15: 317 MW * 0.3 = 95.1 < 127.46
        let dr = case.dr_at_bus(15).unwrap();
        assert!((case.dr_capacity(dr, peak) - 0.3 * 317.0).abs() < 1e-9);
        // bus 16: 100 MW * 0.3 = 30 < 45.79
        let dr = case.dr_at_bus(16).unwrap();
        assert!((case.dr_capacity(dr, peak) - 30.0).abs() < 1e-9);
    }
}
