//! Subcommand bodies. Each returns a [`Report`]; printing and file output
//! happen in `main`.

use std::collections::BTreeMap;

use anyhow::Result;
use clap::ValueEnum;
use relief_core::dr::{responsive_demand_multi, DemandProfile, DrProgramParams, PriceSchedule};
use relief_core::facts::FactsSetpoints;
use relief_core::market::clear_day_ahead;
use relief_core::netmodel::HOURS;
use relief_core::powerflow::LineFlow;
use relief_core::redispatch::{
    congestion_report, dispatch_power_flow, scenario_compare, solve_day, verify_decision,
};
use relief_core::uncertainty::{pem_points, WindPipeline};
use relief_core::{
    build_rts24, load_case, solve_cmp, ClearingResult, CmpConfig, OfferSet, RedispatchDecision,
    Scenario, SystemCase,
};

use crate::report::{Cell, Report, RunManifest, Table};
use crate::{Exit, Options};

/// Tolerance on the PEM against sampling cross-check.
const PEM_AGREEMENT: f64 = 0.05;

struct Ctx<'a> {
    case: SystemCase,
    hour: usize,
    opts: &'a Options,
}

pub fn run(subcommand: &str, opts: &Options) -> Result<Report> {
    let case = if opts.case == "rts24" {
        build_rts24()
    } else {
        load_case(&opts.case)?
    };
    if !(1..=HOURS).contains(&opts.hour) {
        return Err(Exit::err(2, format!("--hour {} outside 1..=24", opts.hour)));
    }
    let ctx = Ctx {
        hour: opts.hour - 1,
        opts,
        case,
    };
    let mut report = Report::new(manifest(subcommand, &ctx));
    match subcommand {
        "clear" => clear(&ctx, &mut report)?,
        "cmp" => cmp(&ctx, &mut report)?,
        "compare" => compare(&ctx, &mut report)?,
        "pem" => pem(&ctx, &mut report)?,
        _ => day(&ctx, &mut report)?,
    }
    Ok(report)
}

fn flag(v: impl ValueEnum) -> String {
    v.to_possible_value().map_or(String::new(), |p| p.get_name().to_string())
}

fn manifest(subcommand: &str, ctx: &Ctx) -> RunManifest {
    let o = ctx.opts;
    let mut config = BTreeMap::new();
    config.insert("hour".into(), o.hour.to_string());
    config.insert("facts".into(), flag(o.facts));
    config.insert("dr".into(), flag(o.dr));
    config.insert("mode".into(), flag(o.mode));
    config.insert("tol".into(), o.tol.to_string());
    config.insert("curve".into(), flag(o.curve));
    if let Some(n) = o.samples {
        config.insert("samples".into(), n.to_string());
    }
    RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        subcommand: subcommand.into(),
        case: o.case.clone(),
        config,
        seed: (subcommand == "pem" && o.samples.is_some()).then_some(o.seed),
        defaulted: ctx.case.defaulted_fields(),
        case_notes: ctx.case.notes.clone(),
        wall_clock_s: None,
    }
}

fn cmp_config(ctx: &Ctx, facts: bool, dr: bool) -> Result<CmpConfig> {
    if facts && ctx.case.facts.is_empty() {
        return Err(Exit::err(
            2,
            "missing FACTS device specification: --facts on needs a tcsc or statcom entry in the case",
        ));
    }
    Ok(CmpConfig {
        enable_facts: facts,
        enable_dr: dr,
        nlp_tol: ctx.opts.tol,
        ..CmpConfig::default()
    })
}

fn stage1(case: &SystemCase, hour: usize) -> Result<ClearingResult> {
    Ok(clear_day_ahead(&OfferSet::from_case(case, hour, None))?)
}

fn stage1_tables(case: &SystemCase, hour: usize, s1: &ClearingResult, report: &mut Report) {
    let offers = OfferSet::from_case(case, hour, None);
    let mut g = Table::new(
        "stage1_gencos",
        &["genco", "bus", "p_mw", "p_max_mw", "marginal_cost_usd_per_mwh"],
    );
    for ((genco, offer), &p) in case.gencos.iter().zip(&offers.gencos).zip(&s1.p_g) {
        g.push(vec![
            genco.id.into(),
            genco.bus.into(),
            p.into(),
            genco.p_max.into(),
            offer.marginal(p).into(),
        ]);
    }
    let mut w = Table::new("stage1_wind", &["wpp", "bus", "p_mw", "p_max_mw"]);
    for ((wpp, offer), &p) in case.wind_producers.iter().zip(&offers.winds).zip(&s1.p_w) {
        w.push(vec![wpp.id.into(), wpp.bus.into(), p.into(), offer.p_max.into()]);
    }
    let mut d = Table::new("stage1_demands", &["disco", "p_mw"]);
    for (disco, p) in s1.disco_totals(case) {
        d.push(vec![disco.into(), p.into()]);
    }
    let mut s = Table::new(
        "stage1_summary",
        &[
            "hour",
            "lambda_da_usd_per_mwh",
            "welfare_usd",
            "demand_mw",
            "balance_residual_mw",
        ],
    );
    s.push(vec![
        (hour + 1).into(),
        s1.lambda_da.into(),
        s1.welfare.into(),
        s1.p_d.iter().sum::<f64>().into(),
        s1.balance_residual().into(),
    ]);
    report.tables.extend([g, w, d, s]);
}

fn flow_table(name: &str, case: &SystemCase, flows: &[LineFlow]) -> Table {
    let mut t = Table::new(
        name,
        &[
            "line",
            "from_bus",
            "to_bus",
            "p_from_mw",
            "q_from_mvar",
            "p_max_mw",
            "loading_pct",
        ],
    );
    for (l, f) in case.lines.iter().zip(flows) {
        let p = f.p_from.abs().max(f.p_to.abs());
        t.push(vec![
            l.id.into(),
            l.from_bus.into(),
            l.to_bus.into(),
            f.p_from.into(),
            f.q_from.into(),
            l.p_max.into(),
            (100.0 * p / l.p_max).into(),
        ]);
    }
    t
}

fn clear(ctx: &Ctx, report: &mut Report) -> Result<()> {
    let case = &ctx.case;
    let s1 = stage1(case, ctx.hour)?;
    stage1_tables(case, ctx.hour, &s1, report);
    let pf = dispatch_power_flow(case, &s1.p_g, &s1.p_w, &s1.p_d, FactsSetpoints::default())?;
    report.tables.push(flow_table("stage1_flows", case, &pf.flows));
    let over: Vec<String> = congestion_report(&case.lines, &pf.flows)
        .iter()
        .filter(|e| e.violation > 0.0)
        .map(|e| format!("line {} +{:.3} MW", e.line, e.violation))
        .collect();
    let mut t = Table::new(
        "stage1_power_flow",
        &["iterations", "max_mismatch_pu", "losses_mw", "overloaded_lines"],
    );
    t.push(vec![
        pf.iterations.into(),
        pf.max_mismatch.into(),
        pf.losses.into(),
        over.len().into(),
    ]);
    report.tables.push(t);
    for o in over {
        report.check("overload", false, o);
    }
    Ok(())
}

fn decision_tables(case: &SystemCase, s1: &ClearingResult, d: &RedispatchDecision, report: &mut Report) {
    let mut g = Table::new(
        "cmp_gencos",
        &[
            "genco",
            "bus",
            "p_da_mw",
            "dp_up_mw",
            "dp_down_mw",
            "p_mw",
            "q_mvar",
        ],
    );
    for (k, genco) in case.gencos.iter().enumerate() {
        g.push(vec![
            genco.id.into(),
            genco.bus.into(),
            s1.p_g[k].into(),
            d.dpg_up[k].into(),
            d.dpg_down[k].into(),
            d.p_g[k].into(),
            d.q_g[k].into(),
        ]);
    }
    let mut r = Table::new("cmp_dr", &["bus", "dpd_up_mw", "dpd_down_mw"]);
    for (k, bus) in d.dr_buses.iter().enumerate() {
        r.push(vec![(*bus).into(), d.dpd_up[k].into(), d.dpd_down[k].into()]);
    }
    let mut f = Table::new("cmp_facts", &["device", "location", "setpoint_pu"]);
    if let (Some(x), Some((line, _, _))) = (d.tcsc_setpoint, case.tcsc()) {
        f.push(vec!["tcsc".into(), format!("line {line}").into(), x.into()]);
    }
    if let Some(b) = d.statcom_setpoint {
        let bus = case.facts.iter().find_map(|s| match s {
            relief_core::netmodel::FactsSpec::Statcom { bus, .. } => Some(*bus),
            _ => None,
        });
        let at = bus.map_or(String::new(), |b| format!("bus {b}"));
        f.push(vec!["statcom".into(), at.into(), b.into()]);
    }
    let mut l = Table::new("cmp_lmp", &["bus", "lmp_usd_per_mwh"]);
    for (b, p) in case.buses.iter().zip(&d.lmp.values) {
        l.push(vec![b.id.into(), (*p).into()]);
    }
    report.tables.extend([g, r, f, l]);
    report.tables.push(flow_table("cmp_flows", case, &d.flows));
}

fn cmp(ctx: &Ctx, report: &mut Report) -> Result<()> {
    let case = &ctx.case;
    let cfg = cmp_config(ctx, ctx.opts.facts.on(), ctx.opts.dr.on())?;
    let s1 = stage1(case, ctx.hour)?;
    let d = solve_cmp(case, &s1, ctx.hour, None, &cfg)?;
    let check = verify_decision(case, &s1, ctx.hour, None, &d)?;
    if !d.converged {
        eprintln!(
            "relief: residual dump: max violation {:.3e} p.u. at {} after {} iterations",
            check.max_violation, check.worst, d.iterations
        );
        return Err(Exit::err(3, "congestion-management solve did not converge"));
    }
    stage1_tables(case, ctx.hour, &s1, report);
    decision_tables(case, &s1, &d, report);
    let mut t = Table::new(
        "cmp_summary",
        &[
            "cost_usd",
            "total_adjustment_mw",
            "losses_mw",
            "lmp_mean_usd_per_mwh",
            "lmp_spread_usd_per_mwh",
            "iterations",
            "nlp_solves",
            "max_violation_pu",
        ],
    );
    t.push(vec![
        d.cost.into(),
        d.total_generation_adjustment().into(),
        d.losses.into(),
        d.lmp.mean().into(),
        d.lmp.spread().into(),
        d.iterations.into(),
        d.nlp_solves.into(),
        check.max_violation.into(),
    ]);
    report.tables.push(t);
    Ok(())
}

fn compare(ctx: &Ctx, report: &mut Report) -> Result<()> {
    let case = &ctx.case;
    let cfg = cmp_config(ctx, false, false)?;
    let cmp = scenario_compare(case, ctx.hour, &cfg, None)?;
    stage1_tables(case, ctx.hour, &cmp.stage1, report);

    let mut t = Table::new(
        "compare",
        &[
            "case",
            "status",
            "cost_usd",
            "total_adjustment_mw",
            "dr_shift_mw",
            "losses_mw",
            "lmp_mean_usd_per_mwh",
            "lmp_spread_usd_per_mwh",
            "tcsc_setpoint_pu",
            "statcom_setpoint_pu",
        ],
    );
    for (s, r) in &cmp.cases {
        match r {
            Ok(d) => {
                let shift: f64 = d.dpd_up.iter().chain(&d.dpd_down).sum();
                t.push(vec![
                    s.label().into(),
                    "ok".into(),
                    d.cost.into(),
                    d.total_generation_adjustment().into(),
                    shift.into(),
                    d.losses.into(),
                    d.lmp.mean().into(),
                    d.lmp.spread().into(),
                    d.tcsc_setpoint.into(),
                    d.statcom_setpoint.into(),
                ]);
            }
            Err(e) => {
                let mut row = vec![s.label().into(), Cell::Text(format!("FAILED: {e}"))];
                row.resize(t.columns.len(), Cell::Empty);
                t.push(row);
            }
        }
    }
    report.tables.push(t);

    let solved: Vec<(Scenario, &RedispatchDecision)> = Scenario::ALL
        .iter()
        .filter_map(|&s| cmp.get(s).map(|d| (s, d)))
        .collect();
    if solved.is_empty() {
        let (_, first) = cmp.cases.into_iter().next().expect("four cases");
        return Err(first.expect_err("no case solved").into());
    }
    let series = |name: &str, unit: &str, ids: Vec<usize>, pick: &dyn Fn(&RedispatchDecision) -> Vec<f64>| {
        let mut cols = vec![name.to_string()];
        cols.extend(solved.iter().map(|(s, _)| format!("{}_{unit}", s.label())));
        let mut t = Table::with_columns(&format!("compare_{name}s"), cols);
        let values: Vec<Vec<f64>> = solved.iter().map(|(_, d)| pick(d)).collect();
        for (k, id) in ids.into_iter().enumerate() {
            let mut row = vec![Cell::from(id)];
            row.extend(values.iter().map(|v| Cell::Num(v[k])));
            t.push(row);
        }
        t
    };
    let buses = case.buses.iter().map(|b| b.id).collect();
    let lines = case.lines.iter().map(|l| l.id).collect();
    report
        .tables
        .push(series("bus", "lmp_usd_per_mwh", buses, &|d| d.lmp.values.clone()));
    report.tables.push(series("line", "p_from_mw", lines, &|d| {
        d.flows.iter().map(|f| f.p_from).collect()
    }));

    let get = |s| cmp.get(s);
    let tol = cfg.nlp_tol;
    let le = |a: f64, b: f64| a <= b + tol * (1.0 + b.abs());
    match (get(Scenario::None), get(Scenario::DrOnly), get(Scenario::FactsOnly), get(Scenario::Joint)) {
        (Some(n), Some(r), Some(f), Some(j)) => {
            let pass = le(j.cost, f.cost) && le(j.cost, r.cost) && le(f.cost, n.cost) && le(r.cost, n.cost);
            report.check(
                "monotone relief",
                pass,
                format!(
                    "cost none {:.4}, dr_only {:.4}, facts_only {:.4}, joint {:.4} $",
                    n.cost, r.cost, f.cost, j.cost
                ),
            );
        }
        _ => report.check("monotone relief", false, "a case failed to solve".into()),
    }
    if let (Some(n), Some(j)) = (get(Scenario::None), get(Scenario::Joint)) {
        report.check(
            "lmp smoothing",
            j.lmp.spread() < n.lmp.spread(),
            format!("spread joint {:.4} vs none {:.4} $/MWh", j.lmp.spread(), n.lmp.spread()),
        );
        report.check(
            "loss reduction",
            j.losses <= n.losses,
            format!("losses joint {:.4} vs none {:.4} MW", j.losses, n.losses),
        );
    }
    Ok(())
}

fn unit_of(output: &str) -> &'static str {
    if output.starts_with("lmp") {
        "usd_per_mwh"
    } else if output == "cost" {
        "usd"
    } else {
        "mw"
    }
}

fn pem(ctx: &Ctx, report: &mut Report) -> Result<()> {
    let case = &ctx.case;
    let cfg = cmp_config(ctx, ctx.opts.facts.on(), ctx.opts.dr.on())?;
    let pipe = WindPipeline::new(case, ctx.hour, cfg, ctx.opts.curve.into());
    let points = pem_points(&pipe.input_moments()?);

    let mut cols = vec!["point".to_string(), "shifted_wpp".to_string()];
    for w in &case.wind_producers {
        cols.push(format!("speed_wpp{}_m_per_s", w.id));
    }
    for w in &case.wind_producers {
        cols.push(format!("power_wpp{}_mw", w.id));
    }
    cols.extend(
        ["weight", "lmp_mean_usd_per_mwh", "cost_usd", "losses_mw"].map(String::from),
    );
    let mut t = Table::with_columns("pem_points", cols);
    for (k, p) in points.iter().enumerate() {
        let out = pipe.evaluate(&p.values)?;
        let shifted = p
            .variable
            .map_or(Cell::Empty, |v| Cell::from(case.wind_producers[v].id));
        let mut row = vec![Cell::from(k + 1), shifted];
        row.extend(p.values.iter().map(|&v| Cell::Num(v)));
        row.extend(pipe.available_power(&p.values).into_iter().map(Cell::Num));
        row.extend([p.weight, out[0], out[1], out[2]].map(Cell::Num));
        t.push(row);
    }
    report.tables.push(t);

    let est = pipe.pem()?;
    let mc = ctx
        .opts
        .samples
        .map(|n| pipe.monte_carlo(n, ctx.opts.seed))
        .transpose()?;
    let mut cols = vec!["output", "unit", "pem_mean", "pem_std"];
    if mc.is_some() {
        cols.extend(["mc_mean", "mc_std", "mean_gap_pct"]);
    }
    let mut s = Table::new("pem_summary", &cols);
    for (k, name) in pipe.output_names().iter().enumerate() {
        let mut row = vec![
            Cell::from(name.as_str()),
            unit_of(name).into(),
            est.mean[k].into(),
            est.std[k].into(),
        ];
        if let Some(mc) = &mc {
            let gap = 100.0 * (est.mean[k] - mc.mean[k]) / mc.mean[k].abs();
            row.extend([mc.mean[k], mc.std[k], gap].map(Cell::Num));
        }
        s.push(row);
    }
    report.tables.push(s);
    if let Some(mc) = &mc {
        let rel = (est.mean[0] - mc.mean[0]).abs() / mc.mean[0].abs();
        report.check(
            "pem lmp mean agrees with sampling",
            rel <= PEM_AGREEMENT,
            format!(
                "{:.4} vs {:.4} $/MWh over {} samples, gap {:.2}% (limit {:.0}%)",
                est.mean[0],
                mc.mean[0],
                mc.evaluations,
                100.0 * rel,
                100.0 * PEM_AGREEMENT
            ),
        );
    }
    Ok(())
}

/// Hourly demand with the incentive program active in the peak period,
/// under a flat tariff at the load-weighted demand bid price. Only the
/// participating share of each hour's load responds.
fn load_with_dr(case: &SystemCase, ctx: &Ctx) -> Result<DemandProfile> {
    let d0: Vec<f64> = (0..HOURS)
        .map(|h| case.loads.iter().map(|l| case.load_mw(l, h)).sum())
        .collect();
    let peak = case
        .elasticity
        .periods
        .iter()
        .position(|p| p == "peak")
        .unwrap_or(0);
    let size: f64 = case.dr_resources.iter().map(|r| r.size_mw).sum();
    let weighted = |f: fn(&relief_core::netmodel::DrResource) -> f64| {
        if size > 0.0 {
            case.dr_resources.iter().map(|r| r.size_mw * f(r)).sum::<f64>() / size
        } else {
            0.0
        }
    };
    let program = DrProgramParams {
        incentive: weighted(|r| r.incentive),
        penalty_rate: weighted(|r| r.penalty_rate),
        contracted_cut: case.dr_resources.iter().map(|r| r.contracted_cut).sum(),
        mode: ctx.opts.mode.into(),
        ..DrProgramParams::default()
    };
    let params: Vec<DrProgramParams> = case.elasticity.hour_period[..HOURS]
        .iter()
        .map(|&p| {
            if p == peak {
                program
            } else {
                DrProgramParams {
                    incentive: 0.0,
                    penalty_rate: 0.0,
                    ..program
                }
            }
        })
        .collect();
    let base: f64 = case.loads.iter().map(|l| l.p_base).sum();
    let tariff = case
        .loads
        .iter()
        .map(|l| l.p_base * case.bid_price(l))
        .sum::<f64>()
        / base;
    let prices = PriceSchedule::flat(tariff);
    let share = case.dr_participation;
    let responsive = DemandProfile::baseline(d0.iter().map(|d| share * d).collect());
    let resp = responsive_demand_multi(&responsive, &prices, &params, &case.elasticity, Some(size))?;
    Ok(DemandProfile {
        d: d0
            .iter()
            .zip(resp.d0.iter().zip(&resp.d))
            .map(|(d, (r0, r))| d - r0 + r)
            .collect(),
        d0,
    })
}

fn day(ctx: &Ctx, report: &mut Report) -> Result<()> {
    let case = &ctx.case;
    let cfg = cmp_config(ctx, ctx.opts.facts.on(), ctx.opts.dr.on())?;
    let stage1: Vec<ClearingResult> = (0..HOURS).map(|h| stage1(case, h)).collect::<Result<_>>()?;
    let decisions = solve_day(case, 0..HOURS, &cfg);

    let mut t = Table::new(
        "day",
        &[
            "hour",
            "lambda_da_usd_per_mwh",
            "demand_mw",
            "wind_mw",
            "status",
            "cost_usd",
            "losses_mw",
            "lmp_mean_usd_per_mwh",
            "lmp_spread_usd_per_mwh",
            "max_loading_pct",
        ],
    );
    let mut flows = Table::new("day_flows", &["hour", "line", "p_from_mw"]);
    let mut lmps = Table::new("day_lmp", &["hour", "bus", "lmp_usd_per_mwh"]);
    let mut failed = 0;
    for (h, (s1, d)) in stage1.iter().zip(&decisions).enumerate() {
        let mut row = vec![
            Cell::from(h + 1),
            s1.lambda_da.into(),
            s1.p_d.iter().sum::<f64>().into(),
            s1.p_w.iter().sum::<f64>().into(),
        ];
        match d {
            Ok(d) => {
                let top = congestion_report(&case.lines, &d.flows);
                row.extend([
                    Cell::from(if d.converged { "ok" } else { "unconverged" }),
                    d.cost.into(),
                    d.losses.into(),
                    d.lmp.mean().into(),
                    d.lmp.spread().into(),
                    (100.0 * top[0].loading).into(),
                ]);
                for (l, f) in case.lines.iter().zip(&d.flows) {
                    flows.push(vec![(h + 1).into(), l.id.into(), f.p_from.into()]);
                }
                for (b, p) in case.buses.iter().zip(&d.lmp.values) {
                    lmps.push(vec![(h + 1).into(), b.id.into(), (*p).into()]);
                }
            }
            Err(e) => {
                failed += 1;
                row.push(Cell::Text(format!("FAILED: {e}")));
                row.resize(t.columns.len(), Cell::Empty);
            }
        }
        t.push(row);
    }
    let profile = load_with_dr(case, ctx)?;
    let mut p = Table::new("day_load_profile", &["hour", "baseline_mw", "with_dr_mw"]);
    for h in 0..HOURS {
        p.push(vec![(h + 1).into(), profile.d0[h].into(), profile.d[h].into()]);
    }
    report.tables.extend([t, lmps, flows, p]);
    let (before, after) = (
        DemandProfile::peak_to_valley(&profile.d0),
        DemandProfile::peak_to_valley(&profile.d),
    );
    report.check(
        "dr flattens the load",
        after < before,
        format!("peak-to-valley ratio {after:.4} with DR vs {before:.4} without"),
    );
    report.check(
        "all hours solved",
        failed == 0,
        format!("{} of {HOURS} hours solved", HOURS - failed),
    );
    Ok(())
}
