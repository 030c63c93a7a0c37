//! Aggregation and rendering of experiment results.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::NaiveDate;
use thiserror::Error;

use super::experiment::{DayMetrics, DayRecord, ExperimentReport, MPC_P};
use super::schedule::Ems;
use crate::tariff::CostBreakdown;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("line {line}: {msg}")]
    Row { line: u64, msg: String },
    #[error("expected header `{expected}`")]
    Header { expected: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Csv,
}

/// Totals for one controller over its successful days.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerSummary {
    pub controller: String,
    pub days: usize,
    pub failed: usize,
    pub cost: CostBreakdown,
    pub net_cost: CostBreakdown,
    pub imported: f64,
    pub exported: f64,
    pub safety_activations: usize,
    pub exceedance_wh: f64,
    /// Days with a successful MPC-P run on the same (day, house).
    pub matched_days: usize,
    /// Summed cost over matched days, and MPC-P's cost on those days.
    pub matched_cost: f64,
    pub matched_mpc_p: f64,
}

impl ControllerSummary {
    fn new(controller: &str) -> Self {
        Self {
            controller: controller.to_string(),
            days: 0,
            failed: 0,
            cost: CostBreakdown::default(),
            net_cost: CostBreakdown::default(),
            imported: 0.0,
            exported: 0.0,
            safety_activations: 0,
            exceedance_wh: 0.0,
            matched_days: 0,
            matched_cost: 0.0,
            matched_mpc_p: 0.0,
        }
    }

    pub fn net_energy(&self) -> f64 {
        self.imported - self.exported
    }

    /// Extra cost over MPC-P on the matched days.
    pub fn delta_vs_mpc_p(&self) -> f64 {
        self.matched_cost - self.matched_mpc_p
    }
}

fn order(name: &str) -> usize {
    Ems::ALL
        .iter()
        .position(|e| e.name() == name)
        .unwrap_or(if name == MPC_P { Ems::ALL.len() } else { Ems::ALL.len() + 1 })
}

/// Per-controller totals in a fixed order: RL-stub, RBC, TreeC, MPC, MPC-P,
/// then anything else by name.
pub fn summarize(report: &ExperimentReport) -> Vec<ControllerSummary> {
    let mut by: BTreeMap<(usize, String), ControllerSummary> = BTreeMap::new();
    let mpc_p: BTreeMap<(usize, u8), &DayMetrics> = report
        .records
        .iter()
        .filter(|r| r.controller == MPC_P)
        .filter_map(|r| r.result.as_ref().ok().map(|m| ((r.day, r.house), m)))
        .collect();
    for r in &report.records {
        let s = by
            .entry((order(&r.controller), r.controller.clone()))
            .or_insert_with(|| ControllerSummary::new(&r.controller));
        match &r.result {
            Ok(m) => {
                s.days += 1;
                s.cost = s.cost.add(&m.cost);
                s.net_cost = s.net_cost.add(&m.net_cost);
                s.imported += m.imported;
                s.exported += m.exported;
                s.safety_activations += m.safety_activations;
                s.exceedance_wh += m.exceedance_wh;
                if let Some(p) = mpc_p.get(&(r.day, r.house)) {
                    s.matched_days += 1;
                    s.matched_cost += m.cost.total;
                    s.matched_mpc_p += p.cost.total;
                }
            }
            Err(_) => s.failed += 1,
        }
    }
    by.into_values().collect()
}

pub fn render(report: &ExperimentReport, format: Format) -> String {
    match format {
        Format::Text => render_text(report),
        Format::Csv => render_summary_csv(report),
    }
}

pub const SUMMARY_HEADER: &str = "controller,days,failed,day_ahead,offtake_extras,peak,yearly,total,net_total,\
imported_kwh,exported_kwh,net_kwh,safety_activations,exceedance_wh,matched_days,delta_vs_mpc_p";

/// Summary table; costs to 2 decimals, energies to 3, exceedance to 1.
pub fn render_summary_csv(report: &ExperimentReport) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for s in summarize(report) {
        let _ = writeln!(
            out,
            "{},{},{},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2},{:.3},{:.3},{:.3},{},{:.1},{},{:.2}",
            s.controller,
            s.days,
            s.failed,
            s.cost.day_ahead,
            s.cost.offtake_extras,
            s.cost.peak,
            s.cost.yearly,
            s.cost.total,
            s.net_cost.total,
            s.imported,
            s.exported,
            s.net_energy(),
            s.safety_activations,
            s.exceedance_wh,
            s.matched_days,
            s.delta_vs_mpc_p(),
        );
    }
    out
}

pub fn render_text(report: &ExperimentReport) -> String {
    let sums = summarize(report);
    let n_days = report.records.iter().map(|r| r.day + 1).max().unwrap_or(0);
    let mut out = String::new();
    let _ = writeln!(out, "Experiment seed {}, {} scheduled days", report.seed, n_days);
    let _ = writeln!(out);
    let _ = writeln!(out, "Costs [EUR]");
    let _ = writeln!(
        out,
        "{:<10} {:>5} {:>6} {:>10} {:>10} {:>9} {:>9} {:>10} {:>10} {:>10}",
        "EMS", "days", "failed", "day-ahead", "extras", "peak", "yearly", "total", "net-meter", "vs MPC-P"
    );
    for s in &sums {
        let _ = writeln!(
            out,
            "{:<10} {:>5} {:>6} {:>10.2} {:>10.2} {:>9.2} {:>9.2} {:>10.2} {:>10.2} {:>10.2}",
            s.controller,
            s.days,
            s.failed,
            s.cost.day_ahead,
            s.cost.offtake_extras,
            s.cost.peak,
            s.cost.yearly,
            s.cost.total,
            s.net_cost.total,
            s.delta_vs_mpc_p()
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "Energy and safety");
    let _ = writeln!(
        out,
        "{:<10} {:>13} {:>13} {:>10} {:>10} {:>15}",
        "EMS", "imported kWh", "exported kWh", "net kWh", "safety", "exceedance Wh"
    );
    for s in &sums {
        let _ = writeln!(
            out,
            "{:<10} {:>13.3} {:>13.3} {:>10.3} {:>10} {:>15.1}",
            s.controller,
            s.imported,
            s.exported,
            s.net_energy(),
            s.safety_activations,
            s.exceedance_wh
        );
    }
    let failures: Vec<&DayRecord> = report.records.iter().filter(|r| r.result.is_err()).collect();
    if !failures.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "Failed days");
        for r in failures {
            if let Err(e) = &r.result {
                let _ = writeln!(out, "day {} ({}) house {} {}: {}", r.day + 1, r.date, r.house, r.controller, e);
            }
        }
    }
    out
}

pub const DAYS_HEADER: &str = "day,date,house,controller,status,day_ahead,offtake_extras,peak,yearly,\
net_day_ahead,net_offtake_extras,net_peak,net_yearly,imported_kwh,exported_kwh,safety_activations,\
exceedance_wh,ems_fallbacks,sessions,sessions_reached,final_bess_soc,peak_kw,error";

/// One row per (day, house, controller) at full precision; the input of
/// `report` and the output of `run-experiment`.
pub fn days_csv(report: &ExperimentReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = DAYS_HEADER.split(',').collect();
    w.write_record(&header).expect("in-memory write");
    for r in &report.records {
        let mut row = vec![r.day.to_string(), r.date.to_string(), r.house.to_string(), r.controller.clone()];
        match &r.result {
            Ok(m) => {
                row.push("ok".into());
                for v in [
                    m.cost.day_ahead,
                    m.cost.offtake_extras,
                    m.cost.peak,
                    m.cost.yearly,
                    m.net_cost.day_ahead,
                    m.net_cost.offtake_extras,
                    m.net_cost.peak,
                    m.net_cost.yearly,
                    m.imported,
                    m.exported,
                ] {
                    row.push(v.to_string());
                }
                row.push(m.safety_activations.to_string());
                row.push(m.exceedance_wh.to_string());
                row.push(m.ems_fallbacks.to_string());
                row.push(m.sessions.to_string());
                row.push(m.sessions_reached.to_string());
                row.push(m.final_bess_soc.to_string());
                row.push(m.peak_power.to_string());
                row.push(String::new());
            }
            Err(e) => {
                row.push("failed".into());
                row.extend(std::iter::repeat_n(String::new(), header.len() - 6));
                row.push(e.clone());
            }
        }
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
}

/// Parses the output of [`days_csv`].
pub fn parse_days_csv(text: &str, seed: u64) -> Result<ExperimentReport, ReportError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let found = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
    if found != DAYS_HEADER {
        return Err(ReportError::Header {
            expected: DAYS_HEADER.into(),
        });
    }
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let err = |msg: String| ReportError::Row { line, msg };
        let f = |i: usize| -> Result<f64, ReportError> {
            rec[i].parse().map_err(|_| err(format!("bad number `{}`", &rec[i])))
        };
        let u = |i: usize| -> Result<usize, ReportError> {
            rec[i].parse().map_err(|_| err(format!("bad count `{}`", &rec[i])))
        };
        let date = NaiveDate::parse_from_str(&rec[1], "%Y-%m-%d").map_err(|_| err(format!("bad date `{}`", &rec[1])))?;
        let house: u8 = rec[2].parse().map_err(|_| err(format!("bad house `{}`", &rec[2])))?;
        let result = match &rec[4] {
            "ok" => Ok(DayMetrics {
                cost: CostBreakdown::new(f(5)?, f(6)?, f(7)?, f(8)?),
                net_cost: CostBreakdown::new(f(9)?, f(10)?, f(11)?, f(12)?),
                imported: f(13)?,
                exported: f(14)?,
                safety_activations: u(15)?,
                exceedance_wh: f(16)?,
                ems_fallbacks: u(17)?,
                sessions: u(18)?,
                sessions_reached: u(19)?,
                final_bess_soc: f(20)?,
                peak_power: f(21)?,
            }),
            "failed" => Err(rec[22].to_string()),
            other => return Err(err(format!("bad status `{other}`"))),
        };
        records.push(DayRecord {
            day: u(0)?,
            date,
            house,
            controller: rec[3].to_string(),
            result,
        });
    }
    Ok(ExperimentReport { seed, records })
}
