//! Day-ahead welfare-maximizing clearing without network constraints.
//!
//! Every participant's optimal response to a system price is a monotone
//! (possibly set-valued) function of that price, so the clearing price is the
//! root of aggregate excess supply. The root is located exactly over the
//! sorted breakpoints of the response curves; between breakpoints excess
//! supply is affine in the price.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::SystemCase;

/// Output above this is treated as committed, so the fixed cost is charged.
pub const COMMIT_THRESHOLD_MW: f64 = 1e-6;

const EPS: f64 = 1e-12;

pub fn genco_cost(p: f64, alpha: f64, beta: f64, gamma: f64) -> f64 {
    alpha + beta * p + gamma * p * p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandBid {
    pub id: usize,
    pub price: f64,
    pub p_min: f64,
    pub p_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GencoOffer {
    pub id: usize,
    pub price: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl GencoOffer {
    /// Marginal offer price at output `p`, $/MWh.
    pub fn marginal(&self, p: f64) -> f64 {
        self.price + self.beta + 2.0 * self.gamma * p
    }

    pub fn cost(&self, p: f64) -> f64 {
        if p > COMMIT_THRESHOLD_MW {
            genco_cost(p, self.alpha, self.beta, self.gamma)
        } else {
            self.beta * p + self.gamma * p * p
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindOffer {
    pub id: usize,
    pub price: f64,
    pub p_min: f64,
    pub p_max: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OfferSet {
    pub demands: Vec<DemandBid>,
    pub gencos: Vec<GencoOffer>,
    pub winds: Vec<WindOffer>,
}

impl OfferSet {
    /// Offers for one hour (0-based). `wind_available` caps each producer's
    /// output (e.g. from a wind-speed scenario); the offer floor is lowered
    /// to the available output when the two conflict.
    pub fn from_case(case: &SystemCase, hour: usize, wind_available: Option<&[f64]>) -> Self {
        let demands = case
            .loads
            .iter()
            .map(|l| DemandBid {
                id: l.id,
                price: case.bid_price(l),
                p_min: 0.0,
                p_max: case.load_mw(l, hour),
            })
            .collect();
        let gencos = case
            .gencos
            .iter()
            .map(|g| GencoOffer {
                id: g.id,
                price: g.offer_price,
                p_min: g.p_min,
                p_max: g.p_max,
                alpha: g.alpha,
                beta: g.beta,
                gamma: g.gamma,
            })
            .collect();
        let winds = case
            .wind_producers
            .iter()
            .enumerate()
            .map(|(k, w)| {
                let cap = wind_available.map_or(w.p_max, |a| a[k].min(w.p_max));
                WindOffer {
                    id: w.id,
                    price: w.offer_price,
                    p_min: w.p_min.min(cap),
                    p_max: cap,
                }
            })
            .collect();
        Self {
            demands,
            gencos,
            winds,
        }
    }

    fn check(&self) -> Result<()> {
        let bad = |what: &str, id: usize| Err(Error::Unbounded(format!("{what} {id}")));
        for d in &self.demands {
            if !(d.price.is_finite() && d.p_min.is_finite() && d.p_max.is_finite())
                || d.price < 0.0
                || d.p_min < 0.0
                || d.p_min > d.p_max
            {
                return bad("demand bid", d.id);
            }
        }
        for g in &self.gencos {
            if ![g.price, g.p_min, g.p_max, g.alpha, g.beta, g.gamma]
                .iter()
                .all(|v| v.is_finite())
                || g.price < 0.0
                || g.gamma < 0.0
                || g.p_min > g.p_max
            {
                return bad("genco offer", g.id);
            }
        }
        for w in &self.winds {
            if !(w.price.is_finite() && w.p_min.is_finite() && w.p_max.is_finite())
                || w.price < 0.0
                || w.p_min > w.p_max
            {
                return bad("wind offer", w.id);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClearingResult {
    pub p_d: Vec<f64>,
    pub p_g: Vec<f64>,
    pub p_w: Vec<f64>,
    /// Dual of the system balance, $/MWh.
    pub lambda_da: f64,
    pub welfare: f64,
}

impl ClearingResult {
    pub fn balance_residual(&self) -> f64 {
        self.p_d.iter().sum::<f64>() - self.p_g.iter().sum::<f64>() - self.p_w.iter().sum::<f64>()
    }

    /// Cleared consumption per DISCO, ascending DISCO id. Requires `p_d` to
    /// follow `case.loads` order.
    pub fn disco_totals(&self, case: &SystemCase) -> Vec<(usize, f64)> {
        case.discos()
            .into_iter()
            .map(|d| {
                let total = case
                    .loads
                    .iter()
                    .zip(&self.p_d)
                    .filter(|(l, _)| l.disco == d)
                    .map(|(_, p)| p)
                    .sum();
                (d, total)
            })
            .collect()
    }
}

/// Response range `[lo, hi]` of every participant at price `lambda`.
struct Envelope {
    supply_lo: f64,
    supply_hi: f64,
    demand_lo: f64,
    demand_hi: f64,
    slope: f64,
}

fn step(lambda: f64, c: f64, lo: f64, hi: f64) -> (f64, f64) {
    if lambda < c - EPS {
        (lo, lo)
    } else if lambda > c + EPS {
        (hi, hi)
    } else {
        (lo, hi)
    }
}

fn genco_response(g: &GencoOffer, lambda: f64) -> (f64, f64, f64) {
    if g.gamma > 0.0 {
        let p = (lambda - g.price - g.beta) / (2.0 * g.gamma);
        let interior = p > g.p_min && p < g.p_max;
        let p = p.clamp(g.p_min, g.p_max);
        (p, p, if interior { 0.5 / g.gamma } else { 0.0 })
    } else {
        let (lo, hi) = step(lambda, g.price + g.beta, g.p_min, g.p_max);
        (lo, hi, 0.0)
    }
}

fn envelope(offers: &OfferSet, lambda: f64) -> Envelope {
    let mut e = Envelope {
        supply_lo: 0.0,
        supply_hi: 0.0,
        demand_lo: 0.0,
        demand_hi: 0.0,
        slope: 0.0,
    };
    for g in &offers.gencos {
        let (lo, hi, s) = genco_response(g, lambda);
        e.supply_lo += lo;
        e.supply_hi += hi;
        e.slope += s;
    }
    for w in &offers.winds {
        let (lo, hi) = step(lambda, w.price, w.p_min, w.p_max);
        e.supply_lo += lo;
        e.supply_hi += hi;
    }
    for d in &offers.demands {
        // demand falls as price rises
        let (hi, lo) = step(lambda, d.price, d.p_max, d.p_min);
        e.demand_lo += lo;
        e.demand_hi += hi;
    }
    e
}

pub fn clear_day_ahead(offers: &OfferSet) -> Result<ClearingResult> {
    offers.check()?;
    let s_min: f64 = offers.gencos.iter().map(|g| g.p_min).sum::<f64>()
        + offers.winds.iter().map(|w| w.p_min).sum::<f64>();
    let s_max: f64 = offers.gencos.iter().map(|g| g.p_max).sum::<f64>()
        + offers.winds.iter().map(|w| w.p_max).sum::<f64>();
    let d_min: f64 = offers.demands.iter().map(|d| d.p_min).sum();
    let d_max: f64 = offers.demands.iter().map(|d| d.p_max).sum();
    if s_min > d_max + 1e-9 {
        return Err(Error::Infeasible(format!(
            "minimum generation {s_min:.3} MW exceeds maximum demand {d_max:.3} MW"
        )));
    }
    if s_max < d_min - 1e-9 {
        return Err(Error::Infeasible(format!(
            "maximum supply {s_max:.3} MW below must-serve demand {d_min:.3} MW"
        )));
    }

    let mut bps: Vec<f64> = Vec::new();
    for g in &offers.gencos {
        bps.push(g.marginal(g.p_min));
        bps.push(g.marginal(g.p_max));
    }
    bps.extend(offers.winds.iter().map(|w| w.price));
    bps.extend(offers.demands.iter().map(|d| d.price));
    bps.sort_by(f64::total_cmp);
    bps.dedup_by(|a, b| (*a - *b).abs() <= EPS);

    let lambda = locate_price(offers, &bps);
    Ok(allocate(offers, lambda))
}

fn locate_price(offers: &OfferSet, bps: &[f64]) -> f64 {
    let Some(&first) = bps.first() else {
        return 0.0;
    };
    for (k, &b) in bps.iter().enumerate() {
        let e = envelope(offers, b);
        if e.supply_hi - e.demand_lo < -EPS {
            continue;
        }
        if e.supply_lo - e.demand_hi <= EPS {
            return b;
        }
        // Root lies strictly between the previous breakpoint and this one.
        let prev = if k == 0 { first - 1.0 } else { bps[k - 1] };
        let mid = 0.5 * (prev + b);
        let m = envelope(offers, mid);
        let excess = m.supply_lo - m.demand_lo;
        if m.slope > 0.0 {
            return (mid - excess / m.slope).clamp(prev, b);
        }
        return b;
    }
    *bps.last().unwrap()
}

fn allocate(offers: &OfferSet, lambda: f64) -> ClearingResult {
    let mut p_g: Vec<f64> = Vec::with_capacity(offers.gencos.len());
    let mut p_w: Vec<f64> = Vec::with_capacity(offers.winds.len());
    let mut p_d: Vec<f64> = Vec::with_capacity(offers.demands.len());
    // (kind, index, room): kind 0 genco, 1 wind, 2 demand
    let mut jumpers: Vec<(u8, usize, usize, f64)> = Vec::new();

    for (k, g) in offers.gencos.iter().enumerate() {
        let (lo, hi, _) = genco_response(g, lambda);
        p_g.push(lo);
        if hi > lo {
            jumpers.push((0, k, g.id, hi - lo));
        }
    }
    for (k, w) in offers.winds.iter().enumerate() {
        let (lo, hi) = step(lambda, w.price, w.p_min, w.p_max);
        p_w.push(lo);
        if hi > lo {
            jumpers.push((1, k, w.id, hi - lo));
        }
    }
    for (k, d) in offers.demands.iter().enumerate() {
        let (hi, lo) = step(lambda, d.price, d.p_max, d.p_min);
        p_d.push(hi);
        if hi > lo {
            jumpers.push((2, k, d.id, hi - lo));
        }
    }

    // Supply sits at its low end and demand at its high end; close the gap
    // by raising supply (lowest id first), then shedding demand (highest id first).
    let mut gap = p_d.iter().sum::<f64>() - p_g.iter().sum::<f64>() - p_w.iter().sum::<f64>();
    let mut supply: Vec<_> = jumpers.iter().filter(|j| j.0 < 2).copied().collect();
    supply.sort_by_key(|j| (j.2, j.0));
    for (kind, k, _, room) in supply {
        if gap <= 0.0 {
            break;
        }
        let take = room.min(gap);
        if kind == 0 {
            p_g[k] += take;
        } else {
            p_w[k] += take;
        }
        gap -= take;
    }
    let mut demand: Vec<_> = jumpers.iter().filter(|j| j.0 == 2).copied().collect();
    demand.sort_by_key(|j| std::cmp::Reverse(j.2));
    for (_, k, _, room) in demand {
        if gap <= 0.0 {
            break;
        }
        let shed = room.min(gap);
        p_d[k] -= shed;
        gap -= shed;
    }

    let mut result = ClearingResult {
        p_d,
        p_g,
        p_w,
        lambda_da: lambda,
        welfare: 0.0,
    };
    result.welfare = social_welfare(&result, offers);
    result
}

pub fn social_welfare(result: &ClearingResult, offers: &OfferSet) -> f64 {
    let demand: f64 = offers
        .demands
        .iter()
        .zip(&result.p_d)
        .map(|(d, p)| d.price * p)
        .sum();
    let gen: f64 = offers
        .gencos
        .iter()
        .zip(&result.p_g)
        .map(|(g, &p)| g.price * p + g.cost(p))
        .sum();
    let wind: f64 = offers
        .winds
        .iter()
        .zip(&result.p_w)
        .map(|(w, p)| w.price * p)
        .sum();
    demand - gen - wind
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::build_rts24;

    fn genco(id: usize, beta: f64, gamma: f64, p_max: f64) -> GencoOffer {
        GencoOffer {
            id,
            price: 0.0,
            p_min: 0.0,
            p_max,
            alpha: 0.0,
            beta,
            gamma,
        }
    }

    fn two_genco() -> OfferSet {
        OfferSet {
            demands: vec![DemandBid {
                id: 1,
                price: 30.0,
                p_min: 100.0,
                p_max: 100.0,
            }],
            gencos: vec![genco(1, 10.0, 0.05, 200.0), genco(2, 12.0, 0.05, 200.0)],
            winds: vec![],
        }
    }

    #[test]
    fn cost_curve() {
        assert_eq!(genco_cost(0.0, 5.0, 1.0, 1.0), 5.0);
        let v = genco_cost(100.0, 212.3076, 16.0811, 0.014142);
        assert!((v - 1961.8376).abs() < 1e-9);
        assert_eq!(genco_cost(50.0, 0.0, 10.0, 0.0), 500.0);
    }

    #[test]
    fn hand_kkt_two_gencos() {
        let r = clear_day_ahead(&two_genco()).unwrap();
        assert!((r.p_g[0] - 60.0).abs() < 1e-9);
        assert!((r.p_g[1] - 40.0).abs() < 1e-9);
        assert!((r.lambda_da - 16.0).abs() < 1e-9);
        // 30*100 - (10*60 + 0.05*60^2) - (12*40 + 0.05*40^2)
        assert!((r.welfare - 1660.0).abs() < 1e-9);
    }

    #[test]
    fn welfare_is_locally_optimal() {
        let offers = two_genco();
        let r = clear_day_ahead(&offers).unwrap();
        for d in [-1.0, 1.0] {
            let mut p = r.clone();
            p.p_g[0] += d;
            p.p_g[1] -= d;
            assert!(social_welfare(&p, &offers) <= r.welfare);
        }
    }

    #[test]
    fn no_trade_when_bid_below_cost() {
        let offers = OfferSet {
            demands: vec![DemandBid {
                id: 1,
                price: 5.0,
                p_min: 0.0,
                p_max: 50.0,
            }],
            gencos: vec![genco(1, 10.0, 0.01, 100.0)],
            winds: vec![],
        };
        let r = clear_day_ahead(&offers).unwrap();
        assert_eq!(r.p_d[0], 0.0);
        assert_eq!(r.p_g[0], 0.0);
        assert_eq!(r.welfare, 0.0);
    }

    #[test]
    fn linear_tie_goes_to_lowest_id() {
        let offers = OfferSet {
            demands: vec![DemandBid {
                id: 1,
                price: 50.0,
                p_min: 30.0,
                p_max: 30.0,
            }],
            gencos: vec![genco(2, 10.0, 0.0, 100.0), genco(1, 10.0, 0.0, 100.0)],
            winds: vec![],
        };
        let r = clear_day_ahead(&offers).unwrap();
        assert_eq!(r.lambda_da, 10.0);
        assert_eq!(r.p_g, vec![0.0, 30.0]);
    }

    #[test]
    fn infeasible_and_malformed() {
        let mut offers = two_genco();
        offers.gencos[0].p_min = 150.0;
        assert!(matches!(
            clear_day_ahead(&offers),
            Err(Error::Infeasible(_))
        ));
        let mut offers = two_genco();
        offers.demands[0].p_min = 1000.0;
        offers.demands[0].p_max = 1000.0;
        assert!(matches!(
            clear_day_ahead(&offers),
            Err(Error::Infeasible(_))
        ));
        let mut offers = two_genco();
        offers.gencos[1].beta = f64::NAN;
        assert!(matches!(
            clear_day_ahead(&offers),
            Err(Error::Unbounded(_))
        ));
    }

    #[test]
    fn rts_structure() {
        let case = build_rts24();
        let offers = OfferSet::from_case(&case, 17, None);
        let r = clear_day_ahead(&offers).unwrap();
        assert!(r.balance_residual().abs() < 1e-6);
        for (g, &p) in offers.gencos.iter().zip(&r.p_g) {
            if p > g.p_min + 1e-6 && p < g.p_max - 1e-6 {
                assert!((g.marginal(p) - r.lambda_da).abs() < 1e-4);
            }
        }
        for (w, &p) in offers.winds.iter().zip(&r.p_w) {
            assert_eq!(p, w.p_max);
        }
        assert_eq!(r.disco_totals(&case).len(), 10);
    }

    #[test]
    fn merit_order() {
        let case = build_rts24();
        let offers = OfferSet::from_case(&case, 17, None);
        let r = clear_day_ahead(&offers).unwrap();
        // gencos 7/8 (cheapest) run flat out; genco 5 (dearest) sits at its floor
        assert_eq!(r.p_g[6], 400.0);
        assert_eq!(r.p_g[7], 400.0);
        assert_eq!(r.p_g[4], case.gencos[4].p_min);
    }
}
