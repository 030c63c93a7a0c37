//! C ABI for ems-bench: tariff evaluation, scenario simulation with the
//! built-in controllers, TreeC policies and schedule generation.
//!
//! Every function returns an [`EmsStatus`]; on failure the message is
//! available from [`ems_last_error`] on the same thread. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use chrono::TimeDelta;
use ems_bench::controllers::{Controller, ExplorationStub, MpcConfig, MpcController, Rbc, TreeController, TreePair};
use ems_bench::forecast::{PerfectSeries, PerfectSession};
use ems_bench::harness::schedule::{generate_schedule, Ems};
use ems_bench::sim::{run_scenario, EvParams, EvSession, HouseConfig, ScenarioData, ScenarioOptions};
use ems_bench::tariff::{net_consumption_cost, total_cost, CostBreakdown, TariffParams};
use ems_bench::time::{self, Timestamp, STEP};
use ems_bench::Series;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Simulation = 3,
    Parse = 4,
    Panic = 5,
}

/// Which controller `ems_scenario_run` uses.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmsControllerKind {
    Rbc = 0,
    /// Random exploration; unsafe without the safety layer.
    Stub = 1,
    /// Needs a policy handle.
    TreeC = 2,
    /// MPC with perfect foresight.
    MpcPerfect = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EmsCost {
    pub day_ahead: f64,
    pub offtake_extras: f64,
    pub peak: f64,
    pub yearly: f64,
    pub total: f64,
}

impl From<CostBreakdown> for EmsCost {
    fn from(c: CostBreakdown) -> Self {
        Self {
            day_ahead: c.day_ahead,
            offtake_extras: c.offtake_extras,
            peak: c.peak,
            yearly: c.yearly,
            total: c.total,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EmsRunSummary {
    pub cost: EmsCost,
    pub net_cost: EmsCost,
    /// kWh
    pub imported: f64,
    /// kWh
    pub exported: f64,
    pub exceedance_wh: f64,
    pub safety_activations: u32,
    pub steps: u32,
    pub final_bess_soc: f64,
}

/// Opaque tariff parameters.
pub struct EmsTariff(TariffParams);

/// Opaque house, data and simulation settings.
pub struct EmsScenario {
    house: HouseConfig,
    ev: EvParams,
    data: ScenarioData,
    opts: ScenarioOptions,
}

/// Opaque pair of TreeC decision trees.
pub struct EmsPolicy(TreePair);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

struct Fail(EmsStatus, String);

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> EmsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EmsStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            EmsStatus::Panic
        }
    }
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(EmsStatus::InvalidArgument, msg.into())
}

fn null(what: &str) -> Fail {
    Fail(EmsStatus::NullPointer, format!("{what} is null"))
}

unsafe fn cstr<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn timestamp(p: *const c_char, what: &str) -> Result<Timestamp, Fail> {
    let s = cstr(p, what)?;
    time::parse_local(s).ok_or_else(|| Fail(EmsStatus::Parse, format!("{what}: cannot parse `{s}`")))
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length, 0 when none.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null.
#[no_mangle]
pub unsafe extern "C" fn ems_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match &*e.borrow() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ems_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Default tariff.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ems_tariff_new(out: *mut *mut EmsTariff) -> EmsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(EmsTariff(TariffParams::default())));
        Ok(())
    })
}

/// Overrides the peak price (€/kW per month) and floor (kW).
///
/// # Safety
/// `tariff` must come from `ems_tariff_new`.
#[no_mangle]
pub unsafe extern "C" fn ems_tariff_set_peak(tariff: *mut EmsTariff, price: f64, floor: f64) -> EmsStatus {
    guard(|| {
        let t = tariff.as_mut().ok_or_else(|| null("tariff"))?;
        let mut p = t.0.clone();
        p.peak_price = price;
        p.peak_floor = floor;
        p.validate().map_err(|e| invalid(e.to_string()))?;
        t.0 = p;
        Ok(())
    })
}

/// # Safety
/// `tariff` must come from `ems_tariff_new` or be null.
#[no_mangle]
pub unsafe extern "C" fn ems_tariff_free(tariff: *mut EmsTariff) {
    if !tariff.is_null() {
        drop(Box::from_raw(tariff));
    }
}

/// Cost of `n` 15-minute steps starting at `start` ("YYYY-MM-DDTHH:MM").
/// `offtake` and `injection` are kWh per step, `prices` day-ahead €/kWh per
/// step. `net` selects net-consumption metering.
///
/// # Safety
/// Arrays must hold `n` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ems_tariff_cost(
    tariff: *const EmsTariff,
    start: *const c_char,
    offtake: *const f64,
    injection: *const f64,
    prices: *const f64,
    n: usize,
    net: bool,
    out: *mut EmsCost,
) -> EmsStatus {
    guard(|| {
        let t = tariff.as_ref().ok_or_else(|| null("tariff"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let start = timestamp(start, "start")?;
        let (eo, ei, vd) = (slice(offtake, n, "offtake")?, slice(injection, n, "injection")?, slice(prices, n, "prices")?);
        let metered: Vec<(Timestamp, f64, f64)> = (0..n).map(|k| (start + STEP * k as i32, eo[k], ei[k])).collect();
        let series = Series::new(start, STEP, vd.to_vec());
        let cost = if net {
            net_consumption_cost(&metered, &series, &t.0)
        } else {
            total_cost(&metered, &series, &t.0)
        }
        .map_err(|e| invalid(e.to_string()))?;
        *out = cost.into();
        Ok(())
    })
}

/// Scenario for reference house `house_id` (1..4) with `n` 15-minute
/// samples from `start`: load and PV in kW, prices in €/kWh.
///
/// # Safety
/// Arrays must hold `n` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ems_scenario_new(
    house_id: u8,
    start: *const c_char,
    load: *const f64,
    pv: *const f64,
    prices: *const f64,
    n: usize,
    out: *mut *mut EmsScenario,
) -> EmsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if !(1..=4).contains(&house_id) {
            return Err(invalid(format!("house_id {house_id} not in 1..4")));
        }
        if n == 0 {
            return Err(invalid("no samples"));
        }
        let start = timestamp(start, "start")?;
        let series = |p, what| -> Result<Series, Fail> { Ok(Series::new(start, STEP, slice(p, n, what)?.to_vec())) };
        let s = EmsScenario {
            house: HouseConfig::reference(house_id),
            ev: EvParams::default(),
            data: ScenarioData {
                load: series(load, "load")?,
                pv: series(pv, "pv")?,
                price: series(prices, "prices")?,
                reactive: None,
                sessions: Vec::new(),
            },
            opts: ScenarioOptions::default(),
        };
        *out = Box::into_raw(Box::new(s));
        Ok(())
    })
}

/// # Safety
/// `scenario` must come from `ems_scenario_new` or be null.
#[no_mangle]
pub unsafe extern "C" fn ems_scenario_free(scenario: *mut EmsScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Adds an EV charging session.
///
/// # Safety
/// `scenario` must be a live handle; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ems_scenario_add_session(
    scenario: *mut EmsScenario,
    arrival: *const c_char,
    departure: *const c_char,
    soc_start: f64,
    soc_goal: f64,
) -> EmsStatus {
    guard(|| {
        let s = scenario.as_mut().ok_or_else(|| null("scenario"))?;
        let session = EvSession {
            arrival: timestamp(arrival, "arrival")?,
            departure: timestamp(departure, "departure")?,
            soc_start,
            soc_goal,
        };
        session.validate().map_err(invalid)?;
        if s.data.sessions.iter().any(|o| o.arrival < session.departure && session.arrival < o.departure) {
            return Err(invalid("session overlaps an existing one"));
        }
        s.data.sessions.push(session);
        Ok(())
    })
}

/// Switches the safety layer on or off and sets the initial BESS SOC.
///
/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ems_scenario_configure(scenario: *mut EmsScenario, safety: bool, initial_bess_soc: f64) -> EmsStatus {
    guard(|| {
        let s = scenario.as_mut().ok_or_else(|| null("scenario"))?;
        if !(0.0..=1.0).contains(&initial_bess_soc) {
            return Err(invalid(format!("initial SOC {initial_bess_soc} outside [0, 1]")));
        }
        s.opts.safety = safety;
        s.opts.initial_bess_soc = initial_bess_soc;
        Ok(())
    })
}

/// Simulates `days` days from `from` ("YYYY-MM-DDTHH:MM", on the 15-minute
/// grid). `policy` is only read for `EMS_CONTROLLER_KIND_TREE_C`; `seed` only
/// for the stub.
///
/// # Safety
/// Handles must be live or null where allowed; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ems_scenario_run(
    scenario: *const EmsScenario,
    kind: EmsControllerKind,
    policy: *const EmsPolicy,
    seed: u64,
    from: *const c_char,
    days: u32,
    out: *mut EmsRunSummary,
) -> EmsStatus {
    guard(|| {
        let s = scenario.as_ref().ok_or_else(|| null("scenario"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if days == 0 {
            return Err(invalid("days must be >= 1"));
        }
        let from = timestamp(from, "from")?;
        let to = from + TimeDelta::days(days as i64);
        let mut ctrl: Box<dyn Controller> = match kind {
            EmsControllerKind::Rbc => Box::new(Rbc),
            EmsControllerKind::Stub => Box::new(ExplorationStub::new(seed)),
            EmsControllerKind::TreeC => {
                let p = policy.as_ref().ok_or_else(|| null("policy"))?;
                Box::new(TreeController::new(p.0.clone()))
            }
            EmsControllerKind::MpcPerfect => Box::new(MpcController::new(
                "MPC-P",
                MpcConfig::default(),
                Box::new(PerfectSeries),
                Box::new(PerfectSeries),
                Box::new(PerfectSession),
            )),
        };
        let run = run_scenario(&s.house, &s.ev, ctrl.as_mut(), &s.data, from, to, &s.opts)
            .map_err(|e| Fail(EmsStatus::Simulation, e.to_string()))?;
        let tariff = &s.opts.tariff;
        let cost = total_cost(&run.traces, &s.data.price, tariff).map_err(|e| Fail(EmsStatus::Simulation, e.to_string()))?;
        let net = net_consumption_cost(&run.traces, &s.data.price, tariff)
            .map_err(|e| Fail(EmsStatus::Simulation, e.to_string()))?;
        *out = EmsRunSummary {
            cost: cost.into(),
            net_cost: net.into(),
            imported: run.traces.iter().map(|t| t.imported).sum(),
            exported: run.traces.iter().map(|t| t.exported).sum(),
            exceedance_wh: run.traces.iter().map(|t| t.exceedance_wh).sum(),
            safety_activations: run.traces.iter().filter(|t| t.safety_activated).count() as u32,
            steps: run.traces.len() as u32,
            final_bess_soc: run.final_bess_soc,
        };
        Ok(())
    })
}

/// Parses a policy in the tree text format (`bess: ...` and `ev: ...`
/// lines).
///
/// # Safety
/// `text` must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ems_policy_parse(text: *const c_char, out: *mut *mut EmsPolicy) -> EmsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let t = cstr(text, "text")?;
        let p: TreePair = t.parse().map_err(|e| Fail(EmsStatus::Parse, format!("{e}")))?;
        *out = Box::into_raw(Box::new(EmsPolicy(p)));
        Ok(())
    })
}

/// # Safety
/// `policy` must come from `ems_policy_parse` or be null.
#[no_mangle]
pub unsafe extern "C" fn ems_policy_free(policy: *mut EmsPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Number of leaves of the BESS and EV trees.
///
/// # Safety
/// `policy` must be live; outputs valid.
#[no_mangle]
pub unsafe extern "C" fn ems_policy_leaves(policy: *const EmsPolicy, bess: *mut usize, ev: *mut usize) -> EmsStatus {
    guard(|| {
        let p = policy.as_ref().ok_or_else(|| null("policy"))?;
        if bess.is_null() || ev.is_null() {
            return Err(null("output"));
        }
        *bess = p.0.bess.n_leaves();
        *ev = p.0.ev.n_leaves();
        Ok(())
    })
}

/// Writes a 48-day house-switching schedule as 48 × 4 EMS codes (0 RL-stub,
/// 1 RBC, 2 TreeC, 3 MPC), day-major. `len` must be at least 192.
///
/// # Safety
/// `out` must be valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn ems_schedule_generate(seed: u64, out: *mut u8, len: usize) -> EmsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let s = generate_schedule(seed).map_err(|e| Fail(EmsStatus::Simulation, e.to_string()))?;
        let need = s.days.len() * 4;
        if len < need {
            return Err(invalid(format!("buffer holds {len} codes, need {need}")));
        }
        for (d, a) in s.days.iter().enumerate() {
            for (h, e) in a.iter().enumerate() {
                *out.add(4 * d + h) = Ems::ALL.iter().position(|x| x == e).expect("known EMS") as u8;
            }
        }
        Ok(())
    })
}
