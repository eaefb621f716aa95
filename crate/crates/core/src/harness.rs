//! Run orchestration: configuration, repeated runs and result files.
//!
//! A configuration is a flat `key = value` file; `#` starts a comment and
//! list values are comma separated. Keys match the command-line flags
//! without their leading dashes.
//!
//! Files written to the output directory:
//!
//! - `runs.csv`, one row per runtime per repetition
//! - `means.csv`, the arithmetic mean of each (benchmark, policy) cell
//! - `energy.csv`, `run_id,policy,makespan_us,energy,edp`
//! - `accuracy/<run_id>.csv` when monitoring is on
//! - `arbiter/<run_id>.csv` for two-runtime runs
//! - `traces/<run_id>.log` when traces are requested
//! - `overhead.csv` in overhead mode

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::arbiter::SharingPolicy;
use crate::bench::{self, generate, BenchError, BenchmarkSpec};
use crate::cpu_manager::Policy;
use crate::energy::{compute_edp, EnergyConfig, EnergyError, EnergyMeter, EnergyReport, EnergyRow};
use crate::events::EventLog;
use crate::monitoring::AccuracyReport;
use crate::real::{host_cpus, run_real, RealConfig};
use crate::sim::{run_shared, run_virtual, EngineConfig, EngineError, RunReport};
use crate::workload::Workload;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Real,
    Virtual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Every (benchmark, policy) cell.
    Compare,
    /// Busy with monitoring against busy without, on the real backend.
    Overhead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub benches: Vec<BenchmarkSpec>,
    pub policies: Vec<Policy>,
    pub backend: Backend,
    pub mode: Mode,
    /// `None` picks 8 on the virtual backend and every host core on the
    /// real one.
    pub cpus: Option<usize>,
    pub pred_rate_us: f64,
    pub ema_decay: f64,
    /// Overrides the benchmarks' duration noise.
    pub sigma: Option<f64>,
    /// Repetition `k` uses seed `seed + k`.
    pub seed: u64,
    pub reps: usize,
    pub out_dir: PathBuf,
    pub emit_trace: bool,
    pub share_with: Option<BenchmarkSpec>,
    pub share_policies: Vec<SharingPolicy>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            benches: bench::suite(),
            policies: vec![Policy::Busy, Policy::Idle, Policy::Prediction],
            backend: Backend::Virtual,
            mode: Mode::Compare,
            cpus: None,
            pred_rate_us: 50.0,
            ema_decay: 0.5,
            sigma: None,
            seed: 0,
            reps: 5,
            out_dir: PathBuf::from("results"),
            emit_trace: false,
            share_with: None,
            share_policies: vec![SharingPolicy::Lewi, SharingPolicy::Prediction],
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("{key}: {msg}")]
    Value { key: String, msg: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub fn parse_policy(s: &str) -> Result<Policy, String> {
    match s.split_once(':') {
        None => match s {
            "busy" => Ok(Policy::Busy),
            "idle" => Ok(Policy::Idle),
            "hybrid" => Ok(Policy::Hybrid {
                spin_budget: Policy::DEFAULT_SPIN_BUDGET,
            }),
            "prediction" => Ok(Policy::Prediction),
            _ => Err(format!("unknown policy `{s}`")),
        },
        Some(("hybrid", budget)) => budget
            .parse()
            .ok()
            .filter(|b| *b > 0)
            .map(|spin_budget| Policy::Hybrid { spin_budget })
            .ok_or_else(|| format!("bad spin budget `{budget}`")),
        Some(_) => Err(format!("unknown policy `{s}`")),
    }
}

pub fn parse_share_policy(s: &str) -> Result<SharingPolicy, String> {
    match s {
        "lewi" => Ok(SharingPolicy::Lewi),
        "prediction" => Ok(SharingPolicy::Prediction),
        _ => match parse_policy(s) {
            Ok(Policy::Hybrid { spin_budget }) => Ok(SharingPolicy::Hybrid { spin_budget }),
            _ => Err(format!("unknown sharing policy `{s}`")),
        },
    }
}

fn list<T>(v: &str, parse: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    let items: Vec<T> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse)
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err("empty list".into());
    }
    Ok(items)
}

fn number<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("not a number: `{v}`"))
}

fn flag(v: &str) -> Result<bool, String> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(format!("not a boolean: `{v}`")),
    }
}

impl RunConfig {
    /// Sets one key. Keys are the flag names without dashes.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        let res: Result<(), String> = (|| {
            match key {
                "bench" => {
                    self.benches = if value == "suite" {
                        bench::suite()
                    } else {
                        list(value, |s| s.parse())?
                    }
                }
                "policy" => self.policies = list(value, parse_policy)?,
                "backend" => {
                    self.backend = match value {
                        "real" => Backend::Real,
                        "virtual" => Backend::Virtual,
                        _ => return Err(format!("unknown backend `{value}`")),
                    }
                }
                "mode" => {
                    self.mode = match value {
                        "compare" => Mode::Compare,
                        "overhead" => Mode::Overhead,
                        _ => return Err(format!("unknown mode `{value}`")),
                    }
                }
                "cpus" => self.cpus = Some(number(value)?),
                "pred-rate-us" => self.pred_rate_us = number(value)?,
                "ema-decay" => self.ema_decay = number(value)?,
                "sigma" => self.sigma = Some(number(value)?),
                "seed" => self.seed = number(value)?,
                "reps" => self.reps = number(value)?,
                "out-dir" => self.out_dir = PathBuf::from(value),
                "emit-trace" => self.emit_trace = flag(value)?,
                "share-with" => {
                    self.share_with = match value {
                        "" | "none" => None,
                        _ => Some(value.parse()?),
                    }
                }
                "share-policy" => self.share_policies = list(value, parse_share_policy)?,
                _ => return Err("unknown key".into()),
            }
            Ok(())
        })();
        res.map_err(|msg| ConfigError::Value {
            key: key.to_string(),
            msg,
        })
    }

    /// Applies a configuration file's text on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| ConfigError::Line { line: i + 1, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`".into()))?;
            self.set(key.trim(), value)
                .map_err(|e| err(e.to_string()))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let mut cfg = Self::default();
        cfg.apply_text(&fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.into()));
        if self.reps == 0 {
            return bad("reps must be at least 1");
        }
        if self.cpus == Some(0) {
            return bad("cpus must be at least 1");
        }
        if !(self.pred_rate_us > 0.0 && self.pred_rate_us.is_finite()) {
            return bad("pred-rate-us must be positive");
        }
        if !(self.ema_decay > 0.0 && self.ema_decay <= 1.0) {
            return bad("ema-decay must be in (0, 1]");
        }
        if self.backend == Backend::Real && self.share_with.is_some() {
            return bad("two-runtime sharing runs on the virtual backend only");
        }
        if self.mode == Mode::Overhead && self.backend != Backend::Real {
            return bad("overhead mode needs the real backend");
        }
        Ok(())
    }

    pub fn n_cpus(&self) -> usize {
        self.cpus.unwrap_or(match self.backend {
            Backend::Real => host_cpus(),
            Backend::Virtual => 8,
        })
    }

    pub fn engine_config(&self) -> EngineConfig {
        let mut cfg = EngineConfig::default().with_cpus(self.n_cpus());
        cfg.predictor.period_us = self.pred_rate_us;
        cfg.monitor.ema_decay = self.ema_decay;
        cfg
    }

    pub fn real_config(&self, policy: Policy) -> RealConfig {
        let mut cfg = RealConfig::new(policy, self.n_cpus());
        cfg.predictor.period_us = self.pred_rate_us;
        cfg.monitor.ema_decay = self.ema_decay;
        cfg
    }

    fn spec(&self, spec: &BenchmarkSpec) -> BenchmarkSpec {
        match self.sigma {
            Some(s) => spec.with_sigma(s),
            None => *spec,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub run_id: String,
    pub bench: String,
    pub policy: String,
    pub rep: usize,
    pub seed: u64,
    pub tasks: usize,
    pub makespan_us: f64,
    pub energy: f64,
    pub edp: f64,
    /// Mean per-instance prediction accuracy in percent; empty without
    /// monitoring or predictions.
    pub accuracy_pct: Option<f64>,
    pub arbiter_calls: u64,
    pub parks: u64,
    pub resumes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanRow {
    pub bench: String,
    pub policy: String,
    pub reps: usize,
    pub makespan_us: f64,
    pub energy: f64,
    pub edp: f64,
    pub accuracy_pct: Option<f64>,
    pub arbiter_calls: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverheadRow {
    pub bench: String,
    pub reps: usize,
    pub busy_us: f64,
    pub busy_monitoring_us: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SuiteResults {
    pub runs: Vec<RunRow>,
    pub means: Vec<MeanRow>,
    pub energy: Vec<EnergyRow>,
    pub overhead: Vec<OverheadRow>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Groups runs by (bench, policy) in first-appearance order and averages
/// each group.
pub fn means(runs: &[RunRow]) -> Vec<MeanRow> {
    let mut keys: Vec<(&str, &str)> = Vec::new();
    for r in runs {
        let k = (r.bench.as_str(), r.policy.as_str());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(b, p)| {
            let rows: Vec<&RunRow> = runs
                .iter()
                .filter(|r| r.bench == b && r.policy == p)
                .collect();
            let acc: Vec<f64> = rows.iter().filter_map(|r| r.accuracy_pct).collect();
            MeanRow {
                bench: b.to_string(),
                policy: p.to_string(),
                reps: rows.len(),
                makespan_us: mean(rows.iter().map(|r| r.makespan_us)),
                energy: mean(rows.iter().map(|r| r.energy)),
                edp: mean(rows.iter().map(|r| r.edp)),
                accuracy_pct: (!acc.is_empty()).then(|| mean(acc.into_iter())),
                arbiter_calls: mean(rows.iter().map(|r| r.arbiter_calls as f64)),
            }
        })
        .collect()
}

struct Outputs {
    dir: PathBuf,
    trace: bool,
}

impl Outputs {
    fn new(cfg: &RunConfig) -> Result<Self, HarnessError> {
        fs::create_dir_all(&cfg.out_dir)?;
        Ok(Self {
            dir: cfg.out_dir.clone(),
            trace: cfg.emit_trace,
        })
    }

    fn sub(&self, dir: &str, file: String) -> Result<PathBuf, HarnessError> {
        let d = self.dir.join(dir);
        fs::create_dir_all(&d)?;
        Ok(d.join(file))
    }

    fn accuracy(&self, run_id: &str, report: &AccuracyReport) -> Result<(), HarnessError> {
        report.write_csv(fs::File::create(
            self.sub("accuracy", format!("{run_id}.csv"))?,
        )?)?;
        Ok(())
    }

    fn trace(&self, run_id: &str, log: &EventLog) -> Result<(), HarnessError> {
        if self.trace {
            log.write_to(io::BufWriter::new(fs::File::create(
                self.sub("traces", format!("{run_id}.log"))?,
            )?))?;
        }
        Ok(())
    }
}

fn labels(ws: &[&Workload]) -> Vec<Vec<String>> {
    ws.iter().map(|w| w.types.clone()).collect()
}

/// Runs on the virtual backend and integrates energy on the fly; the full
/// log is kept only when it has to be written out.
fn virtual_run(
    ws: &[&Workload],
    sharing: Option<SharingPolicy>,
    policy: Policy,
    cfg: &EngineConfig,
    keep_log: bool,
) -> Result<(RunReport, EnergyReport, Option<EventLog>), HarnessError> {
    let mut meter = EnergyMeter::new(cfg.n_cpus, EnergyConfig::default());
    let mut log = keep_log.then(|| EventLog::new(cfg.n_cpus, labels(ws)));
    let report = {
        let mut sink = (&mut meter, &mut log);
        match sharing {
            Some(p) => run_shared([ws[0], ws[1]], p, cfg, &mut sink)?,
            None => run_virtual(ws[0], policy, cfg, &mut sink)?,
        }
    };
    let energy = meter.finish_at(report.makespan_ns)?;
    Ok((report, energy, log))
}

fn accuracy_pct(report: &AccuracyReport) -> Option<f64> {
    report.global.avg_accuracy_pct
}

/// Runs every cell of `cfg` and writes the result files.
pub fn run_suite(cfg: &RunConfig) -> Result<SuiteResults, HarnessError> {
    cfg.validate()?;
    let out = Outputs::new(cfg)?;
    let mut res = SuiteResults::default();
    match (cfg.mode, cfg.share_with) {
        (Mode::Overhead, _) => overhead(cfg, &mut res)?,
        (Mode::Compare, Some(peer)) => shared(cfg, &peer, &out, &mut res)?,
        (Mode::Compare, None) => solo(cfg, &out, &mut res)?,
    }
    res.means = means(&res.runs);
    if cfg.mode == Mode::Overhead {
        write_csv(&cfg.out_dir.join("overhead.csv"), &res.overhead)?;
    } else {
        write_csv(&cfg.out_dir.join("runs.csv"), &res.runs)?;
        write_csv(&cfg.out_dir.join("means.csv"), &res.means)?;
        crate::energy::write_energy_csv(
            fs::File::create(cfg.out_dir.join("energy.csv"))?,
            &res.energy,
        )?;
    }
    Ok(res)
}

fn solo(cfg: &RunConfig, out: &Outputs, res: &mut SuiteResults) -> Result<(), HarnessError> {
    let n = cfg.n_cpus();
    for spec in &cfg.benches {
        let spec = cfg.spec(spec);
        for rep in 0..cfg.reps {
            let seed = cfg.seed + rep as u64;
            let w = generate(&spec, seed)?;
            for &policy in &cfg.policies {
                let run_id = format!("{}-{}-r{rep}", spec.name(), policy.name());
                let (row, energy) = match cfg.backend {
                    Backend::Virtual => {
                        let (report, energy, log) =
                            virtual_run(&[&w], None, policy, &cfg.engine_config(), cfg.emit_trace)?;
                        if let Some(log) = &log {
                            out.trace(&run_id, log)?;
                        }
                        let rt = &report.runtimes[0];
                        if policy == Policy::Prediction
                            || rt.accuracy.global.avg_accuracy_pct.is_some()
                        {
                            out.accuracy(&run_id, &rt.accuracy)?;
                        }
                        let row = RunRow {
                            run_id: run_id.clone(),
                            bench: spec.name(),
                            policy: policy.name().to_string(),
                            rep,
                            seed,
                            tasks: rt.tasks,
                            makespan_us: rt.makespan_ns as f64 / 1000.0,
                            energy: energy.energy,
                            edp: energy.edp,
                            accuracy_pct: accuracy_pct(&rt.accuracy),
                            arbiter_calls: 0,
                            parks: rt.parks,
                            resumes: rt.resumes,
                        };
                        (row, energy)
                    }
                    Backend::Real => {
                        let mut rc = cfg.real_config(policy);
                        rc.record_events = true;
                        let report = run_real(&w, &rc)?;
                        let log = EventLog {
                            n_cpus: n,
                            labels: labels(&[&w]),
                            events: report.events,
                        };
                        out.trace(&run_id, &log)?;
                        if let Some(acc) = &report.accuracy {
                            out.accuracy(&run_id, acc)?;
                        }
                        let energy = compute_edp(&log, &EnergyConfig::default())?;
                        let row = RunRow {
                            run_id: run_id.clone(),
                            bench: spec.name(),
                            policy: policy.name().to_string(),
                            rep,
                            seed,
                            tasks: report.tasks,
                            makespan_us: report.makespan_ns as f64 / 1000.0,
                            energy: energy.energy,
                            edp: energy.edp,
                            accuracy_pct: report.accuracy.as_ref().and_then(accuracy_pct),
                            arbiter_calls: 0,
                            parks: report.parks,
                            resumes: report.resumes,
                        };
                        (row, energy)
                    }
                };
                res.energy.push(EnergyRow {
                    run_id,
                    policy: policy.name().to_string(),
                    makespan_us: row.makespan_us,
                    energy: energy.energy,
                    edp: energy.edp,
                });
                res.runs.push(row);
            }
        }
    }
    Ok(())
}

fn shared(
    cfg: &RunConfig,
    peer: &BenchmarkSpec,
    out: &Outputs,
    res: &mut SuiteResults,
) -> Result<(), HarnessError> {
    let ecfg = cfg.engine_config();
    let peer = cfg.spec(peer);
    for spec in &cfg.benches {
        let spec = cfg.spec(spec);
        for rep in 0..cfg.reps {
            let seed = cfg.seed + rep as u64;
            let a = generate(&spec, seed)?;
            let b = generate(&peer, seed + 1)?;
            for &sp in &cfg.share_policies {
                let run_id = format!("{}+{}-{}-r{rep}", spec.name(), peer.name(), sp.name());
                let (report, energy, log) =
                    virtual_run(&[&a, &b], Some(sp), Policy::Busy, &ecfg, true)?;
                let log = log.expect("kept");
                out.trace(&run_id, &log)?;
                let names: Vec<String> = report.runtimes.iter().map(|r| r.name.clone()).collect();
                write_arbiter_csv(out, &run_id, &report, &names)?;
                for rt in &report.runtimes {
                    res.runs.push(RunRow {
                        run_id: run_id.clone(),
                        bench: rt.name.clone(),
                        policy: format!("share-{}", sp.name()),
                        rep,
                        seed,
                        tasks: rt.tasks,
                        makespan_us: rt.makespan_ns as f64 / 1000.0,
                        energy: energy.energy,
                        edp: energy.edp,
                        accuracy_pct: accuracy_pct(&rt.accuracy),
                        arbiter_calls: rt.calls.total(),
                        parks: rt.parks,
                        resumes: rt.resumes,
                    });
                }
                res.energy.push(EnergyRow {
                    run_id,
                    policy: format!("share-{}", sp.name()),
                    makespan_us: report.makespan_ns as f64 / 1000.0,
                    energy: energy.energy,
                    edp: energy.edp,
                });
            }
        }
    }
    Ok(())
}

fn write_arbiter_csv(
    out: &Outputs,
    run_id: &str,
    report: &RunReport,
    names: &[String],
) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(out.sub("arbiter", format!("{run_id}.csv"))?)?;
    w.write_record([
        "runtime",
        "lend_calls",
        "acquire_calls",
        "reclaim_calls",
        "cpus_transferred",
    ])?;
    for (rt, name) in report.runtimes.iter().zip(names) {
        let c = rt.calls;
        w.write_record([
            name.clone(),
            c.lend.to_string(),
            c.acquire.to_string(),
            c.reclaim.to_string(),
            c.cpus_transferred.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Busy with and without monitoring, alternated, compared on medians.
fn overhead(cfg: &RunConfig, res: &mut SuiteResults) -> Result<(), HarnessError> {
    for spec in &cfg.benches {
        let spec = cfg.spec(spec);
        let w = generate(&spec, cfg.seed)?;
        let (mut off, mut on) = (Vec::new(), Vec::new());
        for _ in 0..cfg.reps {
            for monitoring in [false, true] {
                let r = run_real(&w, &cfg.real_config(Policy::Busy).monitoring(monitoring))?;
                let us = r.makespan_ns as f64 / 1000.0;
                if monitoring {
                    on.push(us)
                } else {
                    off.push(us)
                }
            }
        }
        let (busy_us, busy_monitoring_us) = (median(off), median(on));
        res.overhead.push(OverheadRow {
            bench: spec.name(),
            reps: cfg.reps,
            busy_us,
            busy_monitoring_us,
            ratio: busy_monitoring_us / busy_us,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{BenchmarkKind, Granularity, Shape};

    fn small() -> Vec<BenchmarkSpec> {
        vec![
            BenchmarkSpec::new(BenchmarkKind::StreamLike, Granularity::Coarse).with_shape(
                Shape::Stream {
                    waves: 3,
                    width: 16,
                    task_cost: 20.0,
                },
            ),
            BenchmarkSpec::new(BenchmarkKind::CholeskyDag, Granularity::Coarse).with_shape(
                Shape::Cholesky {
                    tiles: 4,
                    tile_cost: 30.0,
                },
            ),
        ]
    }

    #[test]
    fn config_text_with_line_numbers() {
        let mut cfg = RunConfig::default();
        cfg.apply_text(
            "# comment\nbench = cholesky_dag, stream_like_fine\npolicy=busy,hybrid:20\nreps = 2\n",
        )
        .unwrap();
        assert_eq!(cfg.benches.len(), 2);
        assert_eq!(cfg.benches[1].granularity, Granularity::Fine);
        assert_eq!(
            cfg.policies,
            vec![Policy::Busy, Policy::Hybrid { spin_budget: 20 }]
        );
        assert_eq!(cfg.reps, 2);

        let err = RunConfig::default()
            .apply_text("reps = 2\n\npolicy = lazy\n")
            .unwrap_err();
        assert!(matches!(err, ConfigError::Line { line: 3, .. }), "{err}");
        assert!(err.to_string().contains("lazy"));
        let err = RunConfig::default()
            .apply_text("bench = nbody")
            .unwrap_err();
        assert!(matches!(err, ConfigError::Line { line: 1, .. }));
        let err = RunConfig::default().apply_text("speed: 3").unwrap_err();
        assert!(matches!(err, ConfigError::Line { line: 1, .. }));
    }

    #[test]
    fn invalid_combinations() {
        let cfg = RunConfig {
            reps: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = RunConfig {
            backend: Backend::Real,
            share_with: Some(small()[0]),
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rows_and_means() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            benches: small(),
            out_dir: dir.path().to_path_buf(),
            ..Default::default()
        };
        let res = run_suite(&cfg).unwrap();
        assert_eq!(res.runs.len(), 2 * 3 * 5);
        assert_eq!(res.means.len(), 6);
        for m in &res.means {
            let rows: Vec<_> = res
                .runs
                .iter()
                .filter(|r| r.bench == m.bench && r.policy == m.policy)
                .collect();
            let sum: f64 = rows.iter().map(|r| r.edp).sum();
            assert!((m.edp - sum / rows.len() as f64).abs() <= 1e-12 * m.edp.abs());
        }
        let runs = fs::read_to_string(dir.path().join("runs.csv")).unwrap();
        assert_eq!(runs.lines().count(), 31);
        let energy = fs::read_to_string(dir.path().join("energy.csv")).unwrap();
        assert!(energy.starts_with("run_id,policy,makespan_us,energy,edp\n"));
    }

    #[test]
    fn shared_runs_write_arbiter_reports() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            benches: vec![small()[1]],
            share_with: Some(small()[0]),
            reps: 1,
            emit_trace: true,
            out_dir: dir.path().to_path_buf(),
            ..Default::default()
        };
        let res = run_suite(&cfg).unwrap();
        assert_eq!(res.runs.len(), 2 * 2);
        let arb = fs::read_to_string(
            dir.path()
                .join("arbiter")
                .join("cholesky_dag+stream_like-lewi-r0.csv"),
        )
        .unwrap();
        assert!(
            arb.starts_with("runtime,lend_calls,acquire_calls,reclaim_calls,cpus_transferred\n")
        );
        assert!(dir
            .path()
            .join("traces")
            .join("cholesky_dag+stream_like-prediction-r0.log")
            .exists());
    }
}
