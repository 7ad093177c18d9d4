//! Modified IEEE one-area 24-bus reliability test system.
//!
//! Network data follows the 1996 RTS one-area system. The ten gencos are the
//! RTS generator buses (synchronous condenser at bus 14 excluded) taken in
//! ascending bus order, each aggregating the units at that bus.

use super::*;

// (bus, Pd MW, Qd MVAr, Gs MW, Bs MVAr, Vset)
const BUSES: [(usize, f64, f64, f64, f64, Option<f64>); 24] = [
    (1, 108.0, 22.0, 0.0, 0.0, Some(1.035)),
    (2, 97.0, 20.0, 0.0, 0.0, Some(1.035)),
    (3, 180.0, 37.0, 0.0, 0.0, None),
    (4, 74.0, 15.0, 0.0, 0.0, None),
    (5, 71.0, 14.0, 0.0, 0.0, None),
    (6, 136.0, 28.0, 0.0, -100.0, None),
    (7, 125.0, 25.0, 0.0, 0.0, Some(1.025)),
    (8, 171.0, 35.0, 0.0, 0.0, None),
    (9, 175.0, 36.0, 0.0, 0.0, None),
    (10, 195.0, 40.0, 0.0, 0.0, None),
    (11, 0.0, 0.0, 0.0, 0.0, None),
    (12, 0.0, 0.0, 0.0, 0.0, None),
    (13, 265.0, 54.0, 0.0, 0.0, Some(1.02)),
    (14, 194.0, 39.0, 0.0, 0.0, Some(0.98)),
    (15, 317.0, 64.0, 0.0, 0.0, Some(1.014)),
    (16, 100.0, 20.0, 0.0, 0.0, Some(1.017)),
    (17, 0.0, 0.0, 0.0, 0.0, None),
    (18, 333.0, 68.0, 0.0, 0.0, Some(1.05)),
    (19, 181.0, 37.0, 0.0, 0.0, None),
    (20, 128.0, 26.0, 0.0, 0.0, None),
    (21, 0.0, 0.0, 0.0, 0.0, Some(1.05)),
    (22, 0.0, 0.0, 0.0, 0.0, Some(1.05)),
    (23, 0.0, 0.0, 0.0, 0.0, Some(1.05)),
    (24, 0.0, 0.0, 0.0, 0.0, None),
];

const SLACK_BUS: usize = 13;

// (from, to, r, x, b, rating MVA, tap)
const LINES: [(usize, usize, f64, f64, f64, f64, f64); 38] = [
    (1, 2, 0.0026, 0.0139, 0.4611, 175.0, 1.0),
    (1, 3, 0.0546, 0.2112, 0.0572, 175.0, 1.0),
    (1, 5, 0.0218, 0.0845, 0.0229, 175.0, 1.0),
    (2, 4, 0.0328, 0.1267, 0.0343, 175.0, 1.0),
    (2, 6, 0.0497, 0.1920, 0.0520, 175.0, 1.0),
    (3, 9, 0.0308, 0.1190, 0.0322, 175.0, 1.0),
    (3, 24, 0.0023, 0.0839, 0.0, 400.0, 1.015),
    (4, 9, 0.0268, 0.1037, 0.0281, 175.0, 1.0),
    (5, 10, 0.0228, 0.0883, 0.0239, 175.0, 1.0),
    (6, 10, 0.0139, 0.0605, 2.459, 175.0, 1.0),
    (7, 8, 0.0159, 0.0614, 0.0166, 175.0, 1.0),
    (8, 9, 0.0427, 0.1651, 0.0447, 175.0, 1.0),
    (8, 10, 0.0427, 0.1651, 0.0447, 175.0, 1.0),
    (9, 11, 0.0023, 0.0839, 0.0, 400.0, 1.03),
    (9, 12, 0.0023, 0.0839, 0.0, 400.0, 1.03),
    (10, 11, 0.0023, 0.0839, 0.0, 400.0, 1.015),
    (10, 12, 0.0023, 0.0839, 0.0, 400.0, 1.015),
    (11, 13, 0.0061, 0.0476, 0.0999, 500.0, 1.0),
    (11, 14, 0.0054, 0.0418, 0.0879, 500.0, 1.0),
    (12, 13, 0.0061, 0.0476, 0.0999, 500.0, 1.0),
    (12, 23, 0.0124, 0.0966, 0.2030, 500.0, 1.0),
    (13, 23, 0.0111, 0.0865, 0.1818, 500.0, 1.0),
    (14, 16, 0.0050, 0.0389, 0.0818, 500.0, 1.0),
    (15, 16, 0.0022, 0.0173, 0.0364, 500.0, 1.0),
    (15, 21, 0.0063, 0.0490, 0.1030, 500.0, 1.0),
    (15, 21, 0.0063, 0.0490, 0.1030, 500.0, 1.0),
    (15, 24, 0.0067, 0.0519, 0.1091, 500.0, 1.0),
    (16, 17, 0.0033, 0.0259, 0.0545, 500.0, 1.0),
    (16, 19, 0.0030, 0.0231, 0.0485, 500.0, 1.0),
    (17, 18, 0.0018, 0.0144, 0.0303, 500.0, 1.0),
    (17, 22, 0.0135, 0.1053, 0.2212, 500.0, 1.0),
    (18, 21, 0.0033, 0.0259, 0.0545, 500.0, 1.0),
    (18, 21, 0.0033, 0.0259, 0.0545, 500.0, 1.0),
    (19, 20, 0.0051, 0.0396, 0.0833, 500.0, 1.0),
    (19, 20, 0.0051, 0.0396, 0.0833, 500.0, 1.0),
    (20, 23, 0.0028, 0.0216, 0.0455, 500.0, 1.0),
    (20, 23, 0.0028, 0.0216, 0.0455, 500.0, 1.0),
    (21, 22, 0.0087, 0.0678, 0.1424, 500.0, 1.0),
];

/// Lines whose ratings are reduced from the RTS values so the peak-hour
/// day-ahead schedule overloads the 14-16 tie between the 230 kV
/// generation area and the 138 kV load area.
const MODIFIED_RATINGS: [(usize, f64); 1] = [(23, 355.0)];

const TCSC_LINE: usize = 18;
const STATCOM_BUS: usize = 24;

// (bus, p_min, p_max, q_max, alpha, beta, gamma, ramp MW/h)
type GencoRow = (usize, f64, f64, f64, f64, f64, f64, f64);

const GENCOS: [GencoRow; 10] = [
    (1, 62.4, 192.0, 80.0, 212.3076, 16.0811, 0.014142, 600.0),
    (2, 62.4, 192.0, 80.0, 212.3076, 16.0811, 0.014142, 600.0),
    (7, 75.0, 300.0, 180.0, 781.5212, 43.6615, 0.052672, 1260.0),
    (13, 207.0, 591.0, 240.0, 832.7575, 48.5804, 0.007170, 540.0),
    (15, 66.3, 215.0, 110.0, 86.38524, 56.5646, 0.328412, 480.0),
    (16, 54.3, 155.0, 80.0, 382.2391, 12.3883, 0.008342, 180.0),
    (18, 100.0, 400.0, 200.0, 395.3749, 4.42317, 0.000213, 1200.0),
    (21, 100.0, 400.0, 200.0, 395.3749, 4.42317, 0.000213, 1200.0),
    (22, 60.0, 300.0, 96.0, 382.2391, 12.3883, 0.008342, 1080.0),
    (23, 248.6, 660.0, 310.0, 665.1094, 11.8495, 0.004895, 600.0),
];

// (bus, p_min, p_max, v_rated, v_cut_in, v_cut_out)
const WIND: [(usize, f64, f64, f64, f64, f64); 3] = [
    (3, 50.0, 110.0, 12.0, 8.0, 20.0),
    (6, 60.0, 125.0, 16.0, 10.0, 24.0),
    (19, 60.0, 125.0, 16.0, 10.0, 24.0),
];

// (bus, size MW)
const DR_SITES: [(usize, f64); 10] = [
    (3, 64.79),
    (6, 54.82),
    (8, 69.04),
    (9, 73.22),
    (10, 76.48),
    (13, 95.73),
    (15, 127.46),
    (16, 45.79),
    (18, 148.25),
    (20, 65.71),
];

const DR_INCENTIVE: f64 = 85.0;
const DR_PENALTY: f64 = 142.0;
const DR_PARTICIPATION: f64 = 0.3;

/// Non-DR load buses and the DR bus whose DISCO absorbs them (adjacent bus).
const DISCO_MERGE: [(usize, usize); 7] = [
    (1, 3),
    (2, 6),
    (4, 9),
    (5, 10),
    (7, 8),
    (14, 16),
    (19, 20),
];

/// Weekday winter hourly load, fraction of daily peak.
const LOAD_PROFILE: [f64; 24] = [
    0.67, 0.63, 0.60, 0.59, 0.59, 0.60, 0.74, 0.86, 0.95, 0.96, 0.96, 0.95, 0.95, 0.95, 0.93,
    0.94, 0.99, 1.00, 1.00, 0.96, 0.91, 0.83, 0.73, 0.63,
];

pub(crate) const ELASTICITY: [[f64; 3]; 3] = [
    [-0.12, 0.018, 0.014],
    [0.018, -0.10, 0.012],
    [0.014, 0.012, -0.10],
];

/// Hour (1-based) to period: 17-22 peak, 9-16 off-peak, otherwise low.
pub(crate) fn default_hour_period() -> Vec<usize> {
    (1..=HOURS)
        .map(|h| match h {
            17..=22 => 0,
            9..=16 => 1,
            _ => 2,
        })
        .collect()
}

pub fn build_rts24() -> SystemCase {
    let buses = BUSES
        .iter()
        .map(|&(id, _, _, gs, bs, v_set)| Bus {
            id,
            v_min: 0.95,
            v_max: 1.05,
            is_slack: id == SLACK_BUS,
            g_sh: gs,
            b_sh: bs,
            v_set,
        })
        .collect();

    let lines = LINES
        .iter()
        .enumerate()
        .map(|(k, &(from_bus, to_bus, r, x, b, rating, tap))| {
            let id = k + 1;
            let rating = MODIFIED_RATINGS
                .iter()
                .find(|(l, _)| *l == id)
                .map_or(rating, |&(_, m)| m);
            Line {
                id,
                from_bus,
                to_bus,
                r,
                x,
                b_sh: b,
                p_max: rating,
                q_max: rating,
                tap,
                tcsc_host: id == TCSC_LINE,
            }
        })
        .collect();

    let gencos = GENCOS
        .iter()
        .enumerate()
        .map(|(k, &(bus, p_min, p_max, q_max, alpha, beta, gamma, ramp))| Genco {
            id: k + 1,
            bus,
            p_min,
            p_max,
            s_rated: (p_max * p_max + q_max * q_max).sqrt(),
            alpha,
            beta,
            gamma,
            ramp_up: ramp,
            ramp_down: ramp,
            offer_price: 0.0,
            offer_up: None,
            offer_down: None,
        })
        .collect();

    let wind_producers = WIND
        .iter()
        .enumerate()
        .map(
            |(k, &(bus, p_min, p_max, v_rated, v_cut_in, v_cut_out))| WindProducer {
                id: k + 1,
                bus,
                p_min,
                p_max,
                v_rated,
                v_cut_in,
                v_cut_out,
                kappa_min: 0.9,
                speed_dist: None,
                offer_price: 0.0,
            },
        )
        .collect();

    let disco_of = |bus: usize| -> usize {
        let host = DISCO_MERGE
            .iter()
            .find(|(b, _)| *b == bus)
            .map_or(bus, |&(_, h)| h);
        DR_SITES.iter().position(|(b, _)| *b == host).unwrap() + 1
    };

    let loads = BUSES
        .iter()
        .filter(|b| b.1 > 0.0)
        .enumerate()
        .map(|(k, &(bus, pd, qd, ..))| {
            let dr = DR_SITES.iter().find(|(b, _)| *b == bus);
            LoadPoint {
                id: k + 1,
                bus,
                disco: disco_of(bus),
                p_base: pd,
                power_factor: pd / pd.hypot(qd),
                bid_price: None,
                offer_up: None,
                offer_down: None,
                ramp_up: dr.map(|_| 0.1 * pd),
                ramp_down: dr.map(|&(_, size)| size),
            }
        })
        .collect();

    let dr_resources = DR_SITES
        .iter()
        .enumerate()
        .map(|(k, &(bus, size))| DrResource {
            id: k + 1,
            bus,
            size_mw: size,
            incentive: DR_INCENTIVE,
            penalty_rate: DR_PENALTY,
            contracted_cut: size,
        })
        .collect();

    let facts = vec![
        FactsSpec::Tcsc {
            line: TCSC_LINE,
            x_min: -0.25,
            x_max: 0.25,
        },
        FactsSpec::Statcom {
            bus: STATCOM_BUS,
            b_min: -0.33,
            b_max: 0.33,
            vs_min: 0.9,
            vs_max: 1.1,
            r_s: 0.0,
            x_s: 0.1,
        },
    ];

    SystemCase {
        name: "modified IEEE one-area 24-bus RTS".into(),
        base_mva: 100.0,
        buses,
        lines,
        gencos,
        wind_producers,
        loads,
        dr_resources,
        facts,
        elasticity: ElasticityMatrix {
            periods: vec!["peak".into(), "off_peak".into(), "low".into()],
            values: ELASTICITY.iter().map(|r| r.to_vec()).collect(),
            hour_period: default_hour_period(),
        },
        load_profile: LOAD_PROFILE.to_vec(),
        dr_participation: DR_PARTICIPATION,
        notes: vec![
            "gencos aggregate RTS units per generator bus in ascending bus order: 1,2,7,13,15,16,18,21,22,23".into(),
            "17 RTS load buses aggregated into 10 DISCOs led by the DR sites; buses 1,2,4,5,7,14,19 join an adjacent DR bus".into(),
            "hourly profile: RTS winter weekday, fraction of annual peak".into(),
            "line 23 (14-16) rated 355 MVA instead of 500 so the peak hour is congested".into(),
        ],
    }
}
