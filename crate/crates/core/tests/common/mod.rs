//! Small hand-built networks shared by the integration tests.
#![allow(dead_code)]

use relief_core::netmodel::{Bus, Genco, Line, LoadPoint};
use relief_core::{build_rts24, SystemCase};

pub fn bus(id: usize, slack: bool) -> Bus {
    Bus {
        id,
        v_min: 0.95,
        v_max: 1.05,
        is_slack: slack,
        g_sh: 0.0,
        b_sh: 0.0,
        v_set: None,
    }
}

pub fn line(id: usize, from_bus: usize, to_bus: usize, r: f64, x: f64, p_max: f64) -> Line {
    Line {
        id,
        from_bus,
        to_bus,
        r,
        x,
        b_sh: 0.0,
        p_max,
        q_max: 500.0,
        tap: 1.0,
        tcsc_host: false,
    }
}

/// Linear-cost genco with explicit re-dispatch offers.
pub fn genco(id: usize, bus: usize, beta: f64, up: f64, down: f64) -> Genco {
    Genco {
        id,
        bus,
        p_min: 0.0,
        p_max: 300.0,
        s_rated: 400.0,
        alpha: 0.0,
        beta,
        gamma: 0.0,
        ramp_up: 300.0,
        ramp_down: 300.0,
        offer_price: 0.0,
        offer_up: Some(up),
        offer_down: Some(down),
    }
}

pub fn load(id: usize, bus: usize, p: f64) -> LoadPoint {
    LoadPoint {
        id,
        bus,
        disco: 1,
        p_base: p,
        power_factor: 1.0,
        bid_price: Some(100.0),
        offer_up: None,
        offer_down: None,
        ramp_up: None,
        ramp_down: None,
    }
}

fn shell(name: &str) -> SystemCase {
    SystemCase {
        name: name.into(),
        base_mva: 100.0,
        buses: vec![],
        lines: vec![],
        gencos: vec![],
        wind_producers: vec![],
        loads: vec![],
        dr_resources: vec![],
        facts: vec![],
        elasticity: build_rts24().elasticity,
        load_profile: vec![1.0; 24],
        dr_participation: 0.0,
        notes: vec![],
    }
}

/// Triangle with a cheap genco at bus 1, a dear one at bus 2 and 180 MW at
/// bus 3. Line 1-2 is limited to 50 MW and binds at the stage-1 schedule.
/// Generator buses are held at 1 p.u., the setpoint a plain power flow uses,
/// so the re-dispatch and a power-flow sweep share one decision space.
pub fn triangle() -> SystemCase {
    let mut c = shell("triangle");
    c.buses = vec![bus(1, true), bus(2, false), bus(3, false)];
    for b in &mut c.buses[..2] {
        b.v_min = 1.0;
        b.v_max = 1.0;
    }
    c.lines = vec![
        line(1, 1, 2, 0.01, 0.1, 50.0),
        line(2, 1, 3, 0.01, 0.1, 300.0),
        line(3, 2, 3, 0.01, 0.1, 300.0),
    ];
    c.gencos = vec![genco(1, 1, 10.0, 12.0, 8.0), genco(2, 2, 30.0, 40.0, 20.0)];
    c.loads = vec![load(1, 3, 180.0)];
    c
}

/// Two buses joined by one line; the load sits at bus 2 next to a dear genco.
pub fn two_bus(r: f64, p_max: f64) -> SystemCase {
    let mut c = shell("two-bus");
    c.buses = vec![bus(1, true), bus(2, false)];
    c.lines = vec![line(1, 1, 2, r, 0.1, p_max)];
    c.gencos = vec![genco(1, 1, 10.0, 12.0, 8.0), genco(2, 2, 30.0, 50.0, 20.0)];
    c.loads = vec![load(1, 2, 150.0)];
    c
}
