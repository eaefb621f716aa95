//! Energy and energy-delay product from an event log.
//!
//! Each CPU is billed `p_active` while it executes a task, `p_spin` while a
//! thread holds it without a task (polling, waking up, calling the arbiter)
//! and `p_idle` while it is parked or lent and unused. Every CPU starts held
//! by a running thread at time zero. Energy is in abstract watt-seconds and
//! EDP is energy times makespan in seconds.

use std::io;

use serde::Serialize;
use thiserror::Error;

use crate::events::{Event, EventKind, EventLog, EventSink};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyConfig {
    pub p_active: f64,
    pub p_idle: f64,
    pub p_spin: f64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            p_active: 1.0,
            p_idle: 0.1,
            p_spin: 1.0,
        }
    }
}

impl EnergyConfig {
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            p_active: self.p_active * c,
            p_idle: self.p_idle * c,
            p_spin: self.p_spin * c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub makespan_ns: u64,
    pub energy: f64,
    pub edp: f64,
    /// CPU-seconds spent executing tasks.
    pub busy_cpu_s: f64,
    /// CPU-seconds held by a thread without a task.
    pub spin_cpu_s: f64,
    /// CPU-seconds parked or lent.
    pub idle_cpu_s: f64,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EnergyError {
    #[error("record {index} ({kind} on cpu {cpu:?} at {time_ns} ns): {reason}")]
    Malformed {
        index: usize,
        kind: EventKind,
        cpu: Option<u32>,
        time_ns: u64,
        reason: &'static str,
    },
}

#[derive(Debug, Clone, Copy)]
struct CpuTimeline {
    held: bool,
    executing: bool,
    since_ns: u64,
    busy_ns: u64,
    spin_ns: u64,
    idle_ns: u64,
}

impl CpuTimeline {
    fn advance(&mut self, to_ns: u64) {
        let to_ns = to_ns.max(self.since_ns);
        let dt = to_ns - self.since_ns;
        match (self.held, self.executing) {
            (true, true) => self.busy_ns += dt,
            (true, false) => self.spin_ns += dt,
            (false, _) => self.idle_ns += dt,
        }
        self.since_ns = to_ns;
    }
}

/// Streaming energy integrator; feed it events in time order.
#[derive(Debug, Clone)]
pub struct EnergyMeter {
    config: EnergyConfig,
    cpus: Vec<CpuTimeline>,
    seen: usize,
    makespan_ns: u64,
    error: Option<EnergyError>,
}

impl EnergyMeter {
    pub fn new(n_cpus: usize, config: EnergyConfig) -> Self {
        Self {
            config,
            cpus: vec![
                CpuTimeline {
                    held: true,
                    executing: false,
                    since_ns: 0,
                    busy_ns: 0,
                    spin_ns: 0,
                    idle_ns: 0,
                };
                n_cpus
            ],
            seen: 0,
            makespan_ns: 0,
            error: None,
        }
    }

    fn apply(&mut self, e: &Event) -> Result<(), &'static str> {
        let transition = matches!(
            e.kind,
            EventKind::Start
                | EventKind::End
                | EventKind::Park
                | EventKind::Lend
                | EventKind::Resume
        );
        if e.kind == EventKind::End {
            self.makespan_ns = self.makespan_ns.max(e.time_ns);
        }
        if !transition {
            return Ok(());
        }
        let cpu = e.cpu.ok_or("missing cpu")? as usize;
        let t = self.cpus.get_mut(cpu).ok_or("cpu out of range")?;
        t.advance(e.time_ns);
        match e.kind {
            EventKind::Start if t.held && !t.executing => t.executing = true,
            EventKind::Start => return Err("start on a cpu that is not free"),
            EventKind::End if t.executing => t.executing = false,
            EventKind::End => return Err("end without start"),
            EventKind::Park | EventKind::Lend if t.held && !t.executing => t.held = false,
            EventKind::Park | EventKind::Lend => {
                return Err("release of a cpu that is not held or is busy")
            }
            EventKind::Resume if !t.held => t.held = true,
            EventKind::Resume => return Err("resume on a cpu that is already held"),
            _ => unreachable!(),
        }
        Ok(())
    }

    pub fn finish(self) -> Result<EnergyReport, EnergyError> {
        let makespan = self.makespan_ns;
        self.finish_at(makespan)
    }

    /// Closes every timeline at `makespan_ns` and integrates.
    pub fn finish_at(mut self, makespan_ns: u64) -> Result<EnergyReport, EnergyError> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        let (mut busy, mut spin, mut idle) = (0u64, 0u64, 0u64);
        for t in &mut self.cpus {
            t.advance(makespan_ns);
            busy += t.busy_ns;
            spin += t.spin_ns;
            idle += t.idle_ns;
        }
        let s = |ns: u64| ns as f64 * 1e-9;
        let energy = self.config.p_active * s(busy)
            + self.config.p_spin * s(spin)
            + self.config.p_idle * s(idle);
        let makespan_s = makespan_ns as f64 * 1e-9;
        Ok(EnergyReport {
            makespan_ns,
            energy,
            edp: energy * makespan_s,
            busy_cpu_s: s(busy),
            spin_cpu_s: s(spin),
            idle_cpu_s: s(idle),
        })
    }
}

impl EventSink for EnergyMeter {
    fn record(&mut self, event: Event) {
        let index = self.seen;
        self.seen += 1;
        if self.error.is_some() {
            return;
        }
        if let Err(reason) = self.apply(&event) {
            self.error = Some(EnergyError::Malformed {
                index,
                kind: event.kind,
                cpu: event.cpu,
                time_ns: event.time_ns,
                reason,
            });
        }
    }
}

pub fn compute_edp(log: &EventLog, config: &EnergyConfig) -> Result<EnergyReport, EnergyError> {
    let mut meter = EnergyMeter::new(log.n_cpus, *config);
    for e in &log.events {
        meter.record(e.clone());
    }
    meter.finish_at(log.makespan_ns())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyRow {
    pub run_id: String,
    pub policy: String,
    pub makespan_us: f64,
    pub energy: f64,
    pub edp: f64,
}

/// Writes `run_id,policy,makespan_us,energy,edp`.
pub fn write_energy_csv<W: io::Write>(out: W, rows: &[EnergyRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const S: u64 = 1_000_000_000;

    fn ev(t: u64, kind: EventKind, cpu: usize) -> Event {
        Event::new(t, kind, 0).cpu(cpu).thread(cpu)
    }

    #[test]
    fn one_active_cpu() {
        let mut log = EventLog::new(1, vec![vec!["w".into()]]);
        log.record(ev(0, EventKind::Start, 0).task(0, 0));
        log.record(ev(10 * S, EventKind::End, 0).task(0, 0));
        let r = compute_edp(&log, &EnergyConfig::default()).unwrap();
        assert!((r.energy - 10.0).abs() < 1e-9);
        assert!((r.edp - 100.0).abs() < 1e-9);
    }

    #[test]
    fn active_plus_parked() {
        let mut log = EventLog::new(2, vec![vec!["w".into()]]);
        log.record(ev(0, EventKind::Park, 1));
        log.record(ev(0, EventKind::Start, 0).task(0, 0));
        log.record(ev(10 * S, EventKind::End, 0).task(0, 0));
        let r = compute_edp(&log, &EnergyConfig::default()).unwrap();
        assert!((r.energy - 11.0).abs() < 1e-9);
        assert!((r.edp - 110.0).abs() < 1e-9);
        assert!(r.energy >= 0.1 * 2.0 * 10.0);
    }

    #[test]
    fn unmatched_resume_is_rejected() {
        let mut log = EventLog::new(1, vec![vec!["w".into()]]);
        log.record(ev(5, EventKind::Resume, 0));
        assert_eq!(
            compute_edp(&log, &EnergyConfig::default()),
            Err(EnergyError::Malformed {
                index: 0,
                kind: EventKind::Resume,
                cpu: Some(0),
                time_ns: 5,
                reason: "resume on a cpu that is already held",
            })
        );
    }

    #[test]
    fn park_while_executing_is_rejected() {
        let mut log = EventLog::new(1, vec![vec!["w".into()]]);
        log.record(ev(0, EventKind::Start, 0).task(0, 0));
        log.record(ev(1, EventKind::Park, 0));
        assert!(compute_edp(&log, &EnergyConfig::default()).is_err());
    }

    #[test]
    fn scaling_power_scales_energy() {
        let mut log = EventLog::new(2, vec![vec!["w".into()]]);
        log.record(ev(0, EventKind::Start, 0).task(0, 0));
        log.record(ev(3 * S, EventKind::Park, 1));
        log.record(ev(7 * S, EventKind::End, 0).task(0, 0));
        let base = compute_edp(&log, &EnergyConfig::default()).unwrap();
        let scaled = compute_edp(&log, &EnergyConfig::default().scaled(3.0)).unwrap();
        assert!((scaled.energy - 3.0 * base.energy).abs() < 1e-9);
        assert!((scaled.edp - 3.0 * base.edp).abs() < 1e-9);
    }

    #[test]
    fn csv_header() {
        let mut buf = Vec::new();
        write_energy_csv(
            &mut buf,
            &[EnergyRow {
                run_id: "r0".into(),
                policy: "busy".into(),
                makespan_us: 10.0,
                energy: 1.5,
                edp: 2.0,
            }],
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "run_id,policy,makespan_us,energy,edp\nr0,busy,10.0,1.5,2.0\n"
        );
    }
}
