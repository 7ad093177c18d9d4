mod common;

use std::time::Instant;

use relief_core::facts::FactsSetpoints;
use relief_core::market::clear_day_ahead;
use relief_core::redispatch::{dispatch_power_flow, verify_decision};
use relief_core::{solve_cmp, CmpConfig, OfferSet, Scenario, SystemCase};

fn stage1(case: &SystemCase) -> relief_core::ClearingResult {
    clear_day_ahead(&OfferSet::from_case(case, 0, None)).unwrap()
}

/// Cheapest feasible re-dispatch found by stepping the bus-2 genco in
/// 0.1 MW increments and letting the slack genco close the balance.
fn grid_search(case: &SystemCase, p_da: &[f64]) -> (f64, f64) {
    let g = &case.gencos;
    let mut best = (f64::INFINITY, f64::NAN);
    for step in 0..=1000 {
        let dp2 = 0.1 * step as f64;
        let p2 = p_da[1] + dp2;
        let Ok(pf) = dispatch_power_flow(
            case,
            &[p_da[0], p2],
            &[],
            &[case.loads[0].p_base],
            FactsSetpoints::default(),
        ) else {
            continue;
        };
        let p1 = pf.p_inj[0];
        let ok_flows = case
            .lines
            .iter()
            .zip(&pf.flows)
            .all(|(l, f)| f.p_from.abs().max(f.p_to.abs()) <= l.p_max);
        let ok_v = case
            .buses
            .iter()
            .zip(&pf.v)
            .all(|(b, v)| (b.v_min..=b.v_max).contains(v));
        if !(ok_flows && ok_v) || p1 < 0.0 {
            continue;
        }
        let d1 = p1 - p_da[0];
        let cost = g[1].offer_up_price() * dp2
            + if d1 >= 0.0 {
                g[0].offer_up_price() * d1
            } else {
                -g[0].offer_down_price() * d1
            };
        if cost < best.0 {
            best = (cost, dp2);
        }
    }
    best
}

#[test]
fn triangle_matches_grid_search() {
    let t = Instant::now();
    let case = common::triangle();
    let s1 = stage1(&case);
    assert!((s1.p_g[0] - 180.0).abs() < 1e-6);
    let (oracle, dp2) = grid_search(&case, &s1.p_g);
    let d = solve_cmp(&case, &s1, 0, None, &CmpConfig::scenario(Scenario::None)).unwrap();
    assert!(oracle.is_finite());
    assert!(
        (d.cost - oracle).abs() <= 0.01 * oracle,
        "solver {} grid {oracle}",
        d.cost
    );
    assert!((d.dpg_up[1] - dp2).abs() < 1.0);
    assert!(t.elapsed().as_secs_f64() < 60.0);
}

#[test]
fn congested_two_bus_prices_the_local_genco() {
    let case = common::two_bus(0.01, 100.0);
    let s1 = stage1(&case);
    let d = solve_cmp(&case, &s1, 0, None, &CmpConfig::scenario(Scenario::None)).unwrap();
    let lmp = &d.lmp.values;
    assert!(lmp[1] > lmp[0]);
    assert!((lmp[1] - 50.0).abs() < 1e-3, "{lmp:?}");
    assert!(d.dpg_up[1] > 49.0);
}

#[test]
fn uncongested_lossless_case_is_a_fixed_point() {
    let case = common::two_bus(0.0, 500.0);
    let s1 = stage1(&case);
    for s in Scenario::ALL {
        let d = solve_cmp(&case, &s1, 0, None, &CmpConfig::scenario(s)).unwrap();
        assert!(d.cost.abs() < 1e-3, "{s:?} cost {}", d.cost);
        assert!(d.total_generation_adjustment() < 1e-3);
        let lmp = &d.lmp.values;
        assert!((lmp[0] - lmp[1]).abs() < 1e-3, "{lmp:?}");
        // no genco moves, so the price sits between minus the cheapest
        // down offer and the cheapest up offer
        assert!(lmp[0] >= -8.0 - 1e-3 && lmp[0] <= 12.0 + 1e-3, "{lmp:?}");
    }
}

#[test]
fn decisions_pass_the_independent_check() {
    for case in [common::triangle(), common::two_bus(0.01, 100.0)] {
        let s1 = stage1(&case);
        let cfg = CmpConfig::scenario(Scenario::None);
        let d = solve_cmp(&case, &s1, 0, None, &cfg).unwrap();
        let rep = verify_decision(&case, &s1, 0, None, &d).unwrap();
        assert!(
            rep.max_violation < 10.0 * cfg.nlp_tol,
            "{}: {} at {}",
            case.name,
            rep.max_violation,
            rep.worst
        );
        for (u, dn) in d.dpg_up.iter().zip(&d.dpg_down) {
            assert!(u.min(*dn) < cfg.nlp_tol * case.base_mva);
        }
    }
}
