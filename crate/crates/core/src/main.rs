use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{NaiveDate, TimeDelta};
use clap::{Parser, Subcommand, ValueEnum};

use ems_bench::harness::config::{ConfigError, ExperimentConfig};
use ems_bench::harness::experiment::{controller_for, run_experiment, simulate_day, HouseSetup, MPC_P};
use ems_bench::harness::io::{write_sessions, write_timeseries, SeriesKind};
use ems_bench::harness::report::{self, Format};
use ems_bench::harness::schedule::{generate_schedule, Ems, Schedule};
use ems_bench::harness::synth::{synthetic_houses, SynthOptions};
use ems_bench::sim::run_scenario;
use ems_bench::tariff::total_cost;
use ems_bench::treec::{train, PsoConfig, TrainConfig, TrainingScenario};

#[derive(Parser)]
#[command(name = "ems-bench", version, about = "Home energy management simulation and benchmarking")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Text,
    Csv,
}

impl From<OutFormat> for Format {
    fn from(f: OutFormat) -> Self {
        match f {
            OutFormat::Text => Format::Text,
            OutFormat::Csv => Format::Csv,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one house with one controller and print its cost.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        house: u8,
        /// RL-stub, RBC, TreeC, MPC or MPC-P
        #[arg(long)]
        ems: String,
        /// First day; the run starts at the switch hour.
        #[arg(long)]
        from: NaiveDate,
        #[arg(long, default_value_t = 1)]
        days: u32,
        /// Write per-step traces as CSV.
        #[arg(long)]
        traces: Option<PathBuf>,
    },
    /// Train a TreeC policy on one house and write it in the tree text format.
    TrainTreec {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        house: u8,
        #[arg(long)]
        from: NaiveDate,
        #[arg(long, default_value_t = 7)]
        days: u32,
        #[arg(long, default_value_t = 4)]
        depth: usize,
        #[arg(long, default_value_t = 1000)]
        population: usize,
        #[arg(long, default_value_t = 1000)]
        generations: usize,
        #[arg(long, default_value_t = 5)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Training log CSV (restart, generation, best cost).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Print a 48-day house-switching schedule as CSV.
    Schedule {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the schedule of an experiment config and print the report.
    RunExperiment {
        #[arg(long)]
        config: PathBuf,
        /// Per-day results CSV, readable by `report`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: OutFormat,
    },
    /// Render a report from a per-day results CSV.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: OutFormat,
    },
    /// Run every controller on the same house and window.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        house: u8,
        #[arg(long)]
        from: NaiveDate,
        #[arg(long, default_value_t = 1)]
        days: u32,
    },
    /// Write a synthetic data set and a matching experiment config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// First day of data.
        #[arg(long, default_value = "2024-04-01")]
        start: NaiveDate,
        #[arg(long, default_value_t = 60)]
        days: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Validation(e.to_string())
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn house<'a>(houses: &'a [HouseSetup], id: u8) -> Result<&'a HouseSetup, Failure> {
    houses
        .iter()
        .find(|h| h.config.house_id == id)
        .ok_or_else(|| Failure::Validation(format!("house {id} is not in the config")))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn run(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Simulate {
            config,
            house: id,
            ems,
            from,
            days,
            traces,
        } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let houses = cfg.load_houses()?;
            let opts = cfg.experiment_options(cfg.load_policy()?);
            let h = house(&houses, id)?;
            let start = from.and_hms_opt(opts.scenario.switch_hour, 0, 0).expect("valid hour");
            let end = start + TimeDelta::days(days as i64);
            let mut ctrl = controller_for(&ems, h, start, &opts, 0).map_err(Failure::Validation)?;
            let run = run_scenario(&h.config, &opts.ev, ctrl.as_mut(), &h.data, start, end, &opts.scenario)
                .map_err(runtime)?;
            let cost = total_cost(&run.traces, &h.data.price, &opts.scenario.tariff).map_err(runtime)?;
            println!(
                "{} house {} {} -> {}: day-ahead {:.2} extras {:.2} peak {:.2} yearly {:.2} total {:.2} EUR",
                ems, id, start, end, cost.day_ahead, cost.offtake_extras, cost.peak, cost.yearly, cost.total
            );
            let exceed: f64 = run.traces.iter().map(|t| t.exceedance_wh).sum();
            let safety = run.traces.iter().filter(|t| t.safety_activated).count();
            println!("safety activations {safety}, grid exceedance {exceed:.1} Wh, final BESS SOC {:.3}", run.final_bess_soc);
            if let Some(p) = traces {
                let mut w = csv::Writer::from_path(&p).map_err(runtime)?;
                for t in &run.traces {
                    w.serialize(t).map_err(runtime)?;
                }
                w.flush().map_err(runtime)?;
            }
            Ok(())
        }
        Cmd::TrainTreec {
            config,
            house: id,
            from,
            days,
            depth,
            population,
            generations,
            restarts,
            seed,
            out,
            log,
        } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let houses = cfg.load_houses()?;
            let opts = cfg.experiment_options(None);
            let h = house(&houses, id)?;
            let start = from.and_hms_opt(opts.scenario.switch_hour, 0, 0).expect("valid hour");
            let sc = TrainingScenario::new(
                h.config.clone(),
                opts.ev.clone(),
                h.data.clone(),
                start,
                start + TimeDelta::days(days as i64),
                opts.scenario.clone(),
                depth,
            );
            let tc = TrainConfig {
                pso: PsoConfig {
                    population,
                    generations,
                    seed,
                    ..PsoConfig::default()
                },
                restarts,
                prune_threshold: 0.01,
            };
            let r = train(&sc, &tc).map_err(|e| match e {
                ems_bench::treec::TreecError::Config(m) => Failure::Validation(m),
                other => runtime(other),
            })?;
            write(&out, &r.trees.to_string())?;
            if let Some(p) = log {
                let mut text = String::from("restart,generation,best_cost\n");
                for (i, rs) in r.restarts.iter().enumerate() {
                    for (g, c) in rs.pso.history.iter().enumerate() {
                        text.push_str(&format!("{i},{g},{c}\n"));
                    }
                }
                write(&p, &text)?;
            }
            println!(
                "best restart {} cost {:.2} EUR, {} + {} leaves",
                r.best_restart,
                r.cost,
                r.trees.bess.n_leaves(),
                r.trees.ev.n_leaves()
            );
            Ok(())
        }
        Cmd::Schedule { seed } => {
            let s = generate_schedule(seed).map_err(runtime)?;
            print!("{}", schedule_csv(&s));
            Ok(())
        }
        Cmd::RunExperiment { config, out, format } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let houses = cfg.load_houses()?;
            let opts = cfg.experiment_options(cfg.load_policy()?);
            let mut schedule = generate_schedule(cfg.seed).map_err(runtime)?;
            if let Some(d) = cfg.days {
                schedule.days.truncate(d);
            }
            let rep = run_experiment(&schedule, &houses, &opts);
            if let Some(p) = out {
                write(&p, &report::days_csv(&rep))?;
            }
            print!("{}", report::render(&rep, format.into()));
            if rep.records.iter().any(|r| r.result.is_err()) {
                eprintln!("some days failed; see the report");
            }
            Ok(())
        }
        Cmd::Report { input, format } => {
            let text = fs::read_to_string(&input).map_err(|e| Failure::Validation(format!("{}: {e}", input.display())))?;
            let rep = report::parse_days_csv(&text, 0).map_err(|e| Failure::Validation(e.to_string()))?;
            print!("{}", report::render(&rep, format.into()));
            Ok(())
        }
        Cmd::Compare {
            config,
            house: id,
            from,
            days,
        } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let houses = cfg.load_houses()?;
            let opts = cfg.experiment_options(cfg.load_policy()?);
            let h = house(&houses, id)?;
            let start = from.and_hms_opt(opts.scenario.switch_hour, 0, 0).expect("valid hour");
            let end = start + TimeDelta::days(days as i64);
            println!(
                "{:<8} {:>10} {:>10} {:>9} {:>9} {:>10} {:>8} {:>14}",
                "EMS", "day-ahead", "extras", "peak", "yearly", "total", "safety", "exceedance Wh"
            );
            let labels: Vec<&str> = Ems::ALL.iter().map(|e| e.name()).chain([MPC_P]).collect();
            for label in labels {
                let line = controller_for(label, h, start, &opts, 0).and_then(|mut c| {
                    simulate_day(c.as_mut(), h, start, end, opts.scenario.initial_bess_soc, &opts)
                });
                match line {
                    Ok(m) => println!(
                        "{:<8} {:>10.2} {:>10.2} {:>9.2} {:>9.2} {:>10.2} {:>8} {:>14.1}",
                        label,
                        m.cost.day_ahead,
                        m.cost.offtake_extras,
                        m.cost.peak,
                        m.cost.yearly,
                        m.cost.total,
                        m.safety_activations,
                        m.exceedance_wh
                    ),
                    Err(e) => println!("{label:<8} failed: {e}"),
                }
            }
            Ok(())
        }
        Cmd::Synth { out, start, days, seed } => {
            fs::create_dir_all(&out).map_err(runtime)?;
            let opts = SynthOptions {
                seed,
                ..SynthOptions::default()
            };
            let houses = synthetic_houses(start.and_hms_opt(0, 0, 0).expect("midnight"), days, &opts);
            write_timeseries(&out.join("prices.csv"), &houses[0].1.price, SeriesKind::Price).map_err(runtime)?;
            let mut toml = format!(
                "seed = {seed}\nstart = \"{}\"\nutc_offset = \"+00:00\"\nprices = \"prices.csv\"\n",
                start + TimeDelta::days(1)
            );
            for (h, data) in &houses {
                let id = h.house_id;
                write_timeseries(&out.join(format!("house{id}_load.csv")), &data.load, SeriesKind::Load).map_err(runtime)?;
                write_timeseries(&out.join(format!("house{id}_pv.csv")), &data.pv, SeriesKind::Pv).map_err(runtime)?;
                write_sessions(&out.join(format!("house{id}_sessions.csv")), &data.sessions).map_err(runtime)?;
                toml.push_str(&format!(
                    "\n[[house]]\nid = {id}\nload = \"house{id}_load.csv\"\npv = \"house{id}_pv.csv\"\nsessions = \"house{id}_sessions.csv\"\n"
                ));
            }
            write(&out.join("experiment.toml"), &toml)?;
            println!("wrote {} days for {} houses to {}", days, houses.len(), out.display());
            Ok(())
        }
    }
}

fn schedule_csv(s: &Schedule) -> String {
    let mut out = String::from("day,house_1,house_2,house_3,house_4\n");
    for (d, a) in s.days.iter().enumerate() {
        out.push_str(&format!("{},{},{},{},{}\n", d + 1, a[0], a[1], a[2], a[3]));
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
