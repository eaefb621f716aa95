//! Replays an event stream and checks the runtime invariants: task
//! lifecycle, per-type workload and instance conservation, CPU ownership,
//! the one-step correction rules of the prediction policy, and that the
//! replayed unitary-cost averages stay inside their observed ratios.

use std::collections::HashMap;

use thiserror::Error;

use crate::events::{Event, EventKind, EventSink};
use crate::monitoring::COST_SCALE;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidatorConfig {
    pub n_cpus: usize,
    /// 1 for a solo run; 2 splits the CPUs in halves like the arbiter.
    pub n_runtimes: usize,
    /// Check that threads park only above and resume only below target.
    pub prediction_rules: bool,
    pub ema_decay: f64,
}

impl ValidatorConfig {
    pub fn new(n_cpus: usize) -> Self {
        Self {
            n_cpus,
            n_runtimes: 1,
            prediction_rules: false,
            ema_decay: 0.5,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Violation {
    #[error("record {index} ({kind} at {time_ns} ns): {reason}")]
    Record {
        index: usize,
        kind: EventKind,
        time_ns: u64,
        reason: String,
    },
    #[error("at end of run: {0}")]
    Final(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Created,
    Ready,
    Executing,
    Finished,
}

#[derive(Debug, Clone, Copy)]
struct TaskView {
    ty: u32,
    /// Fixed-point cost, for workload conservation.
    cost: i64,
    raw_cost: f64,
    status: Status,
    start_ns: u64,
}

#[derive(Debug, Clone, Copy)]
struct Ema {
    value: f64,
    min: f64,
    max: f64,
    n: u64,
}

#[derive(Debug, Default)]
struct RuntimeView {
    tasks: HashMap<u64, TaskView>,
    ready: Vec<i64>,
    executing: Vec<i64>,
    instances: Vec<i64>,
    emas: Vec<Option<Ema>>,
    target: Option<usize>,
    created: usize,
    finished: usize,
}

impl RuntimeView {
    fn grow(&mut self, ty: u32) {
        let n = ty as usize + 1;
        if self.ready.len() < n {
            self.ready.resize(n, 0);
            self.executing.resize(n, 0);
            self.instances.resize(n, 0);
            self.emas.resize(n, None);
        }
    }

    fn done(&self) -> bool {
        self.created > 0 && self.created == self.finished
    }
}

#[derive(Debug, Clone, Copy)]
struct CpuView {
    owner: usize,
    holder: Option<usize>,
    executing: Option<u64>,
    reclaim_pending: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ValidationSummary {
    pub events: usize,
    pub tasks: usize,
    /// Park, lend and resume records checked against the target.
    pub gated_steps: usize,
}

const MAX_VIOLATIONS: usize = 32;

#[derive(Debug)]
pub struct Validator {
    cfg: ValidatorConfig,
    seen: usize,
    last_ns: u64,
    cpus: Vec<CpuView>,
    rts: Vec<RuntimeView>,
    violations: Vec<Violation>,
    gated: usize,
}

fn fixed(cost: f64) -> i64 {
    (cost * COST_SCALE).round() as i64
}

impl Validator {
    pub fn new(cfg: ValidatorConfig) -> Self {
        let n = cfg.n_cpus;
        let cpus = (0..n)
            .map(|c| {
                let owner = if cfg.n_runtimes > 1 {
                    usize::from(c >= n / 2)
                } else {
                    0
                };
                CpuView {
                    owner,
                    holder: Some(owner),
                    executing: None,
                    reclaim_pending: false,
                }
            })
            .collect();
        Self {
            cfg,
            seen: 0,
            last_ns: 0,
            cpus,
            rts: (0..cfg.n_runtimes.max(1))
                .map(|_| RuntimeView::default())
                .collect(),
            violations: Vec::new(),
            gated: 0,
        }
    }

    /// Replayed unitary cost of a type, µs per cost unit.
    pub fn unitary(&self, runtime: usize, ty: u32) -> Option<f64> {
        self.rts
            .get(runtime)
            .and_then(|r| r.emas.get(ty as usize).copied().flatten())
            .map(|e| e.value)
    }

    fn active(&self, rt: usize) -> usize {
        self.cpus.iter().filter(|c| c.holder == Some(rt)).count()
    }

    fn target(&self, rt: usize) -> usize {
        self.rts[rt].target.unwrap_or(self.cfg.n_cpus)
    }

    fn apply(&mut self, e: &Event) -> Result<(), String> {
        if e.time_ns < self.last_ns {
            return Err("time went backwards".into());
        }
        self.last_ns = e.time_ns;
        let rt = e.runtime as usize;
        if rt >= self.rts.len() {
            return Err(format!("unknown runtime {rt}"));
        }
        if let Some(th) = e.thread {
            if th as usize / self.cfg.n_cpus != rt {
                return Err(format!("thread {th} does not belong to runtime {rt}"));
            }
            if Some(th % self.cfg.n_cpus as u32) != e.cpu {
                return Err(format!("thread {th} is not bound to cpu {:?}", e.cpu));
            }
        }
        match e.kind {
            EventKind::Create | EventKind::Ready | EventKind::Start | EventKind::End => {
                self.task_event(rt, e)
            }
            EventKind::Prediction => {
                let target = e.task.ok_or("prediction without target")? as usize;
                if target > self.cfg.n_cpus {
                    return Err(format!("target {target} above cpu count"));
                }
                self.rts[rt].target = Some(target);
                Ok(())
            }
            EventKind::Park | EventKind::Lend | EventKind::Resume | EventKind::Reclaim => {
                self.cpu_event(rt, e)
            }
        }
    }

    fn task_event(&mut self, rt: usize, e: &Event) -> Result<(), String> {
        let id = e.task.ok_or("task record without task")?;
        let ty = e.task_type.ok_or("task record without type")?;
        let view = &mut self.rts[rt];
        view.grow(ty);
        if e.kind == EventKind::Create {
            if view.tasks.contains_key(&id) {
                return Err(format!("task {id} created twice"));
            }
            view.tasks.insert(
                id,
                TaskView {
                    ty,
                    cost: e.cost.map_or(0, fixed),
                    raw_cost: e.cost.unwrap_or(0.0),
                    status: Status::Created,
                    start_ns: 0,
                },
            );
            view.created += 1;
            return Ok(());
        }
        let t = view
            .tasks
            .get_mut(&id)
            .ok_or_else(|| format!("task {id} used before creation"))?;
        let j = t.ty as usize;
        match (e.kind, t.status) {
            (EventKind::Ready, Status::Created) => {
                t.status = Status::Ready;
                view.ready[j] += t.cost;
                view.instances[j] += 1;
            }
            (EventKind::Start, Status::Ready) => {
                let cpu = e.cpu.ok_or("start without cpu")? as usize;
                let c = &mut self.cpus[cpu];
                if c.holder != Some(rt) {
                    return Err(format!(
                        "task {id} started on cpu {cpu} not held by runtime {rt}"
                    ));
                }
                if c.executing.is_some() {
                    return Err(format!("cpu {cpu} already executing"));
                }
                c.executing = Some(id);
                t.status = Status::Executing;
                t.start_ns = e.time_ns;
                view.ready[j] -= t.cost;
                view.executing[j] += t.cost;
            }
            (EventKind::End, Status::Executing) => {
                let cpu = e.cpu.ok_or("end without cpu")? as usize;
                if self.cpus[cpu].executing != Some(id) {
                    return Err(format!(
                        "task {id} ended on cpu {cpu} where it was not running"
                    ));
                }
                self.cpus[cpu].executing = None;
                t.status = Status::Finished;
                view.executing[j] -= t.cost;
                view.instances[j] -= 1;
                view.finished += 1;
                if t.raw_cost > 0.0 {
                    let ratio = (e.time_ns - t.start_ns) as f64 / 1000.0 / t.raw_cost;
                    let decay = self.cfg.ema_decay;
                    let ema = view.emas[j].get_or_insert(Ema {
                        value: ratio,
                        min: ratio,
                        max: ratio,
                        n: 0,
                    });
                    if ema.n > 0 {
                        ema.value = decay * ratio + (1.0 - decay) * ema.value;
                        ema.min = ema.min.min(ratio);
                        ema.max = ema.max.max(ratio);
                    }
                    ema.n += 1;
                    let slack = 1e-9 * ema.max.abs().max(1.0);
                    if ema.value < ema.min - slack || ema.value > ema.max + slack {
                        return Err(format!(
                            "unitary cost {} outside observed [{}, {}]",
                            ema.value, ema.min, ema.max
                        ));
                    }
                }
            }
            (kind, status) => {
                return Err(format!("task {id}: {kind} not allowed in state {status:?}"));
            }
        }
        for v in [view.ready[j], view.executing[j], view.instances[j]] {
            if v < 0 {
                return Err(format!("negative workload for type {j}"));
            }
        }
        Ok(())
    }

    fn cpu_event(&mut self, rt: usize, e: &Event) -> Result<(), String> {
        let cpu = e.cpu.ok_or("cpu record without cpu")? as usize;
        if cpu >= self.cpus.len() {
            return Err(format!("cpu {cpu} out of range"));
        }
        let active = self.active(rt);
        let target = self.target(rt);
        let done = self.rts[rt].done();
        let c = self.cpus[cpu];
        let gate = self.cfg.prediction_rules;
        match e.kind {
            EventKind::Reclaim => {
                if c.owner != rt {
                    return Err(format!("runtime {rt} reclaimed cpu {cpu} it does not own"));
                }
                self.cpus[cpu].reclaim_pending = true;
            }
            EventKind::Park | EventKind::Lend => {
                if c.holder != Some(rt) {
                    return Err(format!("runtime {rt} released cpu {cpu} it does not hold"));
                }
                if c.executing.is_some() {
                    return Err(format!("cpu {cpu} released while executing"));
                }
                let vacating = c.reclaim_pending && c.owner != rt;
                if gate && !vacating && !done {
                    self.gated += 1;
                    if active <= target {
                        return Err(format!("released with active {active} <= target {target}"));
                    }
                }
                self.cpus[cpu].holder = None;
            }
            EventKind::Resume => {
                if let Some(h) = c.holder {
                    return Err(format!(
                        "cpu {cpu} resumed by runtime {rt} while held by {h}"
                    ));
                }
                let returned = c.reclaim_pending && c.owner == rt;
                if gate && !returned {
                    self.gated += 1;
                    if active >= target {
                        return Err(format!("resumed with active {active} >= target {target}"));
                    }
                }
                self.cpus[cpu].holder = Some(rt);
                self.cpus[cpu].reclaim_pending = false;
            }
            _ => unreachable!(),
        }
        Ok(())
    }

    /// Final conservation checks.
    pub fn finish(mut self) -> Result<ValidationSummary, Vec<Violation>> {
        for (r, v) in self.rts.iter().enumerate() {
            for j in 0..v.ready.len() {
                if v.ready[j] != 0 || v.executing[j] != 0 || v.instances[j] != 0 {
                    self.violations.push(Violation::Final(format!(
                        "runtime {r} type {j}: ready {} executing {} instances {}",
                        v.ready[j], v.executing[j], v.instances[j]
                    )));
                }
            }
            if v.created != v.finished {
                self.violations.push(Violation::Final(format!(
                    "runtime {r}: {} tasks created, {} finished",
                    v.created, v.finished
                )));
            }
        }
        if self.cpus.iter().any(|c| c.executing.is_some()) {
            self.violations
                .push(Violation::Final("a task is still executing".into()));
        }
        if self.violations.is_empty() {
            Ok(ValidationSummary {
                events: self.seen,
                tasks: self.rts.iter().map(|r| r.finished).sum(),
                gated_steps: self.gated,
            })
        } else {
            Err(self.violations)
        }
    }
}

impl EventSink for Validator {
    fn record(&mut self, event: Event) {
        let index = self.seen;
        self.seen += 1;
        if self.violations.len() >= MAX_VIOLATIONS {
            return;
        }
        if let Err(reason) = self.apply(&event) {
            self.violations.push(Violation::Record {
                index,
                kind: event.kind,
                time_ns: event.time_ns,
                reason,
            });
        }
    }
}
