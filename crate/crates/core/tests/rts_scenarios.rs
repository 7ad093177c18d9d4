use relief_core::facts::FactsSetpoints;
use relief_core::market::clear_day_ahead;
use relief_core::redispatch::{congestion_report, dispatch_power_flow, scenario_compare, verify_decision};
use relief_core::{build_rts24, CmpConfig, OfferSet, Scenario};

const PEAK: usize = 17;

#[test]
fn peak_schedule_overloads_the_tie() {
    let case = build_rts24();
    let s1 = clear_day_ahead(&OfferSet::from_case(&case, PEAK, None)).unwrap();
    let pf = dispatch_power_flow(&case, &s1.p_g, &s1.p_w, &s1.p_d, FactsSetpoints::default()).unwrap();
    let report = congestion_report(&case.lines, &pf.flows);
    assert_eq!(report[0].line, 23);
    assert!(report[0].violation > 0.0);
    assert!(report.iter().skip(1).all(|e| e.violation <= 0.0));
}

#[test]
fn every_case_passes_the_independent_check() {
    let case = build_rts24();
    let cfg = CmpConfig::default();
    let s1 = clear_day_ahead(&OfferSet::from_case(&case, PEAK, None)).unwrap();
    let cmp = scenario_compare(&case, PEAK, &cfg, None).unwrap();
    for s in Scenario::ALL {
        let d = cmp.get(s).unwrap();
        assert!(d.converged, "{}", s.label());
        let rep = verify_decision(&case, &s1, PEAK, None, d).unwrap();
        assert!(rep.max_violation < 10.0 * cfg.nlp_tol, "{}: {} at {}", s.label(), rep.max_violation, rep.worst);
        let loading = congestion_report(&case.lines, &d.flows);
        assert!(loading[0].violation <= 1e-3, "{}", s.label());
    }
}

#[test]
fn facts_setpoints_are_reported_only_when_enabled() {
    let case = build_rts24();
    let cmp = scenario_compare(&case, PEAK, &CmpConfig::default(), None).unwrap();
    let none = cmp.get(Scenario::None).unwrap();
    assert_eq!(none.tcsc_setpoint, None);
    assert_eq!(none.statcom_setpoint, None);
    let joint = cmp.get(Scenario::Joint).unwrap();
    let tcsc = joint.tcsc_setpoint.unwrap();
    let (line, x_min, x_max) = case.tcsc().unwrap();
    assert!((x_min - 1e-9..=x_max + 1e-9).contains(&tcsc), "line {line}: {tcsc}");
    assert!(joint.statcom_setpoint.is_some());
}

#[test]
fn relief_lowers_cost_spread_and_losses() {
    let case = build_rts24();
    let cmp = scenario_compare(&case, PEAK, &CmpConfig::default(), None).unwrap();
    let none = cmp.get(Scenario::None).unwrap();
    let joint = cmp.get(Scenario::Joint).unwrap();
    assert!(joint.cost < none.cost);
    assert!(joint.lmp.spread() < none.lmp.spread());
    assert!(joint.losses < none.losses);
}
