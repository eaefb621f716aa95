//! Deterministic discrete-event backend.
//!
//! Task bodies advance a virtual clock by their declared duration. One or
//! two runtime instances share a set of CPU slots; every runtime has one
//! worker thread per slot, bound to it. Time is kept in nanoseconds.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::arbiter::{Arbiter, ArbiterError, CallCounters, SharingPolicy};
use crate::cpu_manager::{Action, CpuManager, Policy, SlotState, Verdict};
use crate::events::{Event, EventKind, EventSink, RUNTIME_SHIFT};
use crate::monitoring::{AccuracyReport, Monitor, MonitorConfig, Snapshot, UnitaryCost};
use crate::predictor::{get_cpu_prediction, PredictorConfig};
use crate::task::{Kernel, TaskError, TaskId, TaskInfo, TaskRegistry, TaskTypeId};
use crate::workload::{Workload, WorkloadError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    pub n_cpus: usize,
    pub predictor: PredictorConfig,
    pub monitor: MonitorConfig,
    /// Time for a parked thread to get back on its CPU.
    pub resume_latency_ns: u64,
    /// Time between two polls of a spinning thread; a hybrid spin budget of
    /// `b` polls lasts `b` times this.
    pub poll_interval_ns: u64,
    /// Duration of one arbiter call.
    pub call_latency_ns: u64,
    /// Resume at most one thread per `Add`.
    pub single_resume: bool,
    /// Skip acquire calls while the shared pool is empty.
    pub peek_pool: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            n_cpus: 8,
            predictor: PredictorConfig::default(),
            monitor: MonitorConfig::default(),
            resume_latency_ns: 5_000,
            poll_interval_ns: 50,
            call_latency_ns: 1_000,
            single_resume: false,
            peek_pool: false,
        }
    }
}

impl EngineConfig {
    pub fn with_cpus(mut self, n_cpus: usize) -> Self {
        self.n_cpus = n_cpus;
        self
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Arbiter(#[from] ArbiterError),
    #[error("task {task} depends on task {dep}, which is not created before it")]
    CreationOrder { task: u32, dep: u32 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no runnable event left at {0} ns with unfinished tasks")]
    Stalled(u64),
}

#[derive(Debug, Clone)]
pub struct RuntimeReport {
    pub name: String,
    pub labels: Vec<String>,
    pub makespan_ns: u64,
    pub tasks: usize,
    pub accuracy: AccuracyReport,
    pub final_snapshot: Snapshot,
    pub unitary: Vec<UnitaryCost>,
    pub parks: u64,
    pub resumes: u64,
    pub predictions: u64,
    pub calls: CallCounters,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub makespan_ns: u64,
    pub runtimes: Vec<RuntimeReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Ev {
    TaskEnd { rt: usize, slot: usize },
    WakeDone { rt: usize, slot: usize },
    CallDone { rt: usize, slot: usize },
    SpinExpire { rt: usize, slot: usize, epoch: u64 },
    Tick { rt: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum State {
    /// The slot's CPU is not held by this runtime.
    Inactive,
    Parked,
    Waking,
    Spinning,
    Executing {
        info: TaskInfo,
        start_ns: u64,
        end_ns: u64,
    },
    Calling,
}

#[derive(Debug, Clone, Copy)]
struct Thread {
    state: State,
    epoch: u64,
}

struct Runtime<'w> {
    w: &'w Workload,
    children: Vec<Vec<u32>>,
    registry: TaskRegistry,
    monitor: Monitor,
    mgr: CpuManager,
    /// Workload index to created task.
    ids: Vec<Option<TaskId>>,
    /// Creation order to workload index.
    index_of: Vec<u32>,
    threads: Vec<Thread>,
    finished: usize,
    done_ns: Option<u64>,
    parks: u64,
    resumes: u64,
    predictions: u64,
}

impl Runtime<'_> {
    fn index(&self, id: TaskId) -> u32 {
        self.index_of[(id.0 & ((1 << RUNTIME_SHIFT) - 1)) as usize]
    }
}

/// Virtual time without any task completing after which a run is declared
/// stuck.
const STALL_NS: u64 = 60_000_000_000;

struct Sim<'w, 's, S: EventSink> {
    cfg: EngineConfig,
    now: u64,
    progress_ns: u64,
    seq: u64,
    heap: BinaryHeap<Reverse<(u64, u64, Ev)>>,
    rts: Vec<Runtime<'w>>,
    arbiter: Option<Arbiter>,
    sharing: Option<SharingPolicy>,
    sink: &'s mut S,
}

/// Runs one workload alone on `cfg.n_cpus` CPUs.
pub fn run_virtual<S: EventSink>(
    workload: &Workload,
    policy: Policy,
    cfg: &EngineConfig,
    sink: &mut S,
) -> Result<RunReport, EngineError> {
    Sim::new(&[workload], policy, None, cfg, sink)?.run()
}

/// Runs two workloads side by side, each owning half of `cfg.n_cpus` and
/// lending CPUs to the other through an [`Arbiter`].
pub fn run_shared<S: EventSink>(
    workloads: [&Workload; 2],
    policy: SharingPolicy,
    cfg: &EngineConfig,
    sink: &mut S,
) -> Result<RunReport, EngineError> {
    let local = match policy {
        SharingPolicy::Lewi => Policy::Idle,
        SharingPolicy::Hybrid { spin_budget } => Policy::Hybrid { spin_budget },
        SharingPolicy::Prediction => Policy::Prediction,
    };
    Sim::new(&workloads, local, Some(policy), cfg, sink)?.run()
}

impl<'w, 's, S: EventSink> Sim<'w, 's, S> {
    fn new(
        workloads: &[&'w Workload],
        policy: Policy,
        sharing: Option<SharingPolicy>,
        cfg: &EngineConfig,
        sink: &'s mut S,
    ) -> Result<Self, EngineError> {
        let n = cfg.n_cpus;
        if n == 0 {
            return Err(EngineError::Config("at least one cpu is required".into()));
        }
        if sharing.is_some() && n < 2 {
            return Err(EngineError::Config(
                "sharing needs at least two cpus".into(),
            ));
        }
        if let Policy::Hybrid { spin_budget: 0 } = policy {
            return Err(EngineError::Config("spin budget must be at least 1".into()));
        }
        if cfg.predictor.period_ns() == 0 {
            return Err(EngineError::Config(
                "prediction period must be positive".into(),
            ));
        }
        let arbiter = sharing.map(|_| {
            Arbiter::split(n)
                .with_call_latency(std::time::Duration::from_nanos(cfg.call_latency_ns))
        });
        let mut rts = Vec::new();
        for (r, w) in workloads.iter().enumerate() {
            w.validate()?;
            let registry = TaskRegistry::with_id_base((r as u64) << RUNTIME_SHIFT);
            for label in &w.types {
                registry.register_type(label.clone());
            }
            let slots: Vec<SlotState> = (0..n)
                .map(|c| match &arbiter {
                    Some(a) if a.entry(c).owner != r => SlotState::Foreign,
                    _ => SlotState::Occupied,
                })
                .collect();
            let threads = slots
                .iter()
                .map(|s| Thread {
                    state: if *s == SlotState::Occupied {
                        State::Spinning
                    } else {
                        State::Inactive
                    },
                    epoch: 0,
                })
                .collect();
            rts.push(Runtime {
                w,
                children: w.children(),
                registry,
                monitor: Monitor::new(w.types.len(), n, cfg.monitor),
                mgr: CpuManager::with_slots(policy, slots).single_resume(cfg.single_resume),
                ids: vec![None; w.len()],
                index_of: Vec::with_capacity(w.len()),
                threads,
                finished: 0,
                done_ns: None,
                parks: 0,
                resumes: 0,
                predictions: 0,
            });
        }
        Ok(Self {
            cfg: *cfg,
            now: 0,
            progress_ns: 0,
            seq: 0,
            heap: BinaryHeap::new(),
            rts,
            arbiter,
            sharing,
            sink,
        })
    }

    fn n(&self) -> usize {
        self.cfg.n_cpus
    }

    fn schedule(&mut self, at: u64, ev: Ev) {
        self.seq += 1;
        self.heap.push(Reverse((at, self.seq, ev)));
    }

    fn emit(&mut self, kind: EventKind, r: usize, slot: Option<usize>, task: Option<&TaskInfo>) {
        let mut e = Event::new(self.now, kind, r);
        if let Some(slot) = slot {
            e = e.cpu(slot).thread(r * self.n() + slot);
        }
        if let Some(t) = task {
            e = e.task(t.id.0, t.task_type.0);
        }
        self.sink.record(e);
    }

    fn set_state(&mut self, r: usize, slot: usize, state: State) {
        let t = &mut self.rts[r].threads[slot];
        t.state = state;
        t.epoch += 1;
    }

    fn state(&self, r: usize, slot: usize) -> State {
        self.rts[r].threads[slot].state
    }

    fn run(mut self) -> Result<RunReport, EngineError> {
        for r in 0..self.rts.len() {
            let roots = self.rts[r].w.roots();
            let mut ready = 0;
            for i in roots {
                ready += usize::from(self.create(r, i, 0)?);
            }
            self.add(r, ready, None)?;
            self.check_done(r)?;
        }
        self.settle()?;
        for r in 0..self.rts.len() {
            for slot in 0..self.n() {
                if self.state(r, slot) == State::Spinning {
                    self.poll_empty(r, slot)?;
                }
            }
            self.schedule(0, Ev::Tick { rt: r });
        }
        while self.rts.iter().any(|rt| rt.done_ns.is_none()) {
            let Some(Reverse((t, _, ev))) = self.heap.pop() else {
                return Err(EngineError::Stalled(self.now));
            };
            self.now = t;
            self.handle(ev)?;
            self.settle()?;
        }
        Ok(self.report())
    }

    fn report(self) -> RunReport {
        let arbiter = self.arbiter;
        let runtimes: Vec<RuntimeReport> = self
            .rts
            .into_iter()
            .enumerate()
            .map(|(r, rt)| RuntimeReport {
                name: rt.w.name.clone(),
                labels: rt.w.types.clone(),
                makespan_ns: rt.done_ns.unwrap_or(0),
                tasks: rt.finished,
                accuracy: rt.monitor.accuracy_report(&rt.w.types),
                final_snapshot: rt.monitor.snapshot(),
                unitary: (0..rt.w.types.len())
                    .map(|j| rt.monitor.unitary_cost(TaskTypeId(j as u32)))
                    .collect(),
                parks: rt.parks,
                resumes: rt.resumes,
                predictions: rt.predictions,
                calls: arbiter.as_ref().map(|a| a.counters(r)).unwrap_or_default(),
            })
            .collect();
        RunReport {
            makespan_ns: runtimes.iter().map(|r| r.makespan_ns).max().unwrap_or(0),
            runtimes,
        }
    }

    /// Creates workload task `i`; returns whether it is immediately ready.
    fn create(&mut self, r: usize, i: u32, shard: usize) -> Result<bool, EngineError> {
        let rt = &mut self.rts[r];
        let spec = rt.w.task(i);
        let mut deps = Vec::with_capacity(rt.w.deps(i).len());
        for &d in rt.w.deps(i) {
            deps.push(rt.ids[d as usize].ok_or(EngineError::CreationOrder { task: i, dep: d })?);
        }
        let parent = spec.parent.and_then(|p| rt.ids[p as usize]);
        let task_type = TaskTypeId(spec.task_type);
        let kernel = Kernel::new(spec.duration_ns);
        let mut ready = false;
        let id = rt
            .registry
            .create_task(task_type, spec.cost, &deps, parent, kernel, |_| {
                ready = true
            })?;
        rt.ids[i as usize] = Some(id);
        rt.index_of.push(i);
        let info = TaskInfo {
            id,
            task_type,
            cost: spec.cost,
            parent,
            kernel,
        };
        rt.monitor.on_create(&info);
        let mut e = Event::new(self.now, EventKind::Create, r).task(id.0, task_type.0);
        e.cost = Some(spec.cost);
        self.sink.record(e);
        if ready {
            self.rts[r].monitor.on_ready(shard, &info);
            self.emit(EventKind::Ready, r, None, Some(&info));
        }
        Ok(ready)
    }

    fn start(&mut self, r: usize, slot: usize, id: TaskId) -> Result<(), EngineError> {
        let rt = &mut self.rts[r];
        let info = rt.registry.start_task(id)?;
        rt.monitor.on_start(slot, &info);
        rt.mgr.on_task_dequeued(slot);
        self.emit(EventKind::Start, r, Some(slot), Some(&info));
        let start_ns = self.now;
        self.set_state(
            r,
            slot,
            State::Executing {
                info,
                start_ns,
                end_ns: start_ns + info.kernel.duration_ns,
            },
        );
        let idx = self.rts[r].index(id);
        let children = std::mem::take(&mut self.rts[r].children[idx as usize]);
        let mut ready = 0;
        for &c in &children {
            ready += usize::from(self.create(r, c, slot)?);
        }
        let call_ns = self.add(r, ready, None)?;
        let State::Executing { end_ns, .. } = &mut self.rts[r].threads[slot].state else {
            unreachable!()
        };
        *end_ns += call_ns;
        let end = *end_ns;
        self.schedule(end, Ev::TaskEnd { rt: r, slot });
        Ok(())
    }

    /// Reacts to `count` newly ready tasks. Returns the arbiter time spent,
    /// which the calling thread pays.
    fn add(&mut self, r: usize, count: usize, caller: Option<usize>) -> Result<u64, EngineError> {
        if self.rts[r].done_ns.is_some() {
            return Ok(0);
        }
        if count > 0 {
            let verdict = self.rts[r]
                .mgr
                .execute_policy(caller.unwrap_or(0), Action::Add(count));
            if let Verdict::Resumed(slots) = verdict {
                for slot in slots {
                    self.resume(r, slot, 0);
                }
            }
        }
        match self.sharing {
            // Unserved requests stay pending, so the backlog is what counts.
            Some(SharingPolicy::Lewi) | Some(SharingPolicy::Hybrid { .. }) => {
                let available = self.rts[r]
                    .threads
                    .iter()
                    .filter(|t| matches!(t.state, State::Spinning | State::Waking))
                    .count();
                let backlog = self.rts[r].registry.queue().len();
                self.acquire(r, backlog.saturating_sub(available))
            }
            _ => Ok(0),
        }
    }

    /// Acquires pooled CPUs, then reclaims lent-out ones, for `need` more
    /// threads. Returns the arbiter time spent.
    fn acquire(&mut self, r: usize, mut need: usize) -> Result<u64, EngineError> {
        if need == 0 {
            return Ok(0);
        }
        let latency = self.cfg.call_latency_ns;
        let arbiter = self.arbiter.as_ref().expect("sharing run");
        let mut calls = 0u64;
        let mut acquired = Vec::new();
        if !self.cfg.peek_pool || !arbiter.lent_cpus().is_empty() {
            acquired = arbiter.acquire_cpus(r, need);
            calls += 1;
        }
        need -= acquired.len();
        let mut reclaimed = Vec::new();
        if need > 0 {
            for cpu in arbiter.borrowed_from(r) {
                if reclaimed.len() == need {
                    break;
                }
                if arbiter.reclaim(r, cpu) {
                    calls += 1;
                    reclaimed.push(cpu);
                }
            }
        }
        for cpu in acquired {
            self.rts[r].mgr.set_slot(cpu, SlotState::Occupied);
            self.resume(r, cpu, calls * latency);
        }
        for cpu in reclaimed {
            let slot_thread = Some(cpu);
            self.emit(EventKind::Reclaim, r, slot_thread, None);
            let b = 1 - r;
            if self.state(b, cpu) == State::Spinning {
                self.vacate(b, cpu)?;
            }
        }
        Ok(calls * latency)
    }

    fn resume(&mut self, r: usize, slot: usize, delay_ns: u64) {
        debug_assert!(matches!(
            self.state(r, slot),
            State::Parked | State::Inactive
        ));
        self.rts[r].resumes += 1;
        self.emit(EventKind::Resume, r, Some(slot), None);
        self.set_state(r, slot, State::Waking);
        let at = self.now + delay_ns + self.cfg.resume_latency_ns;
        self.schedule(at, Ev::WakeDone { rt: r, slot });
    }

    /// A borrower hands a reclaimed CPU back to its owner.
    fn vacate(&mut self, b: usize, cpu: usize) -> Result<(), EngineError> {
        let owner = self.arbiter.as_ref().expect("sharing run").vacate(b, cpu)?;
        self.rts[b].mgr.set_slot(cpu, SlotState::Foreign);
        self.emit(EventKind::Park, b, Some(cpu), None);
        self.rts[b].parks += 1;
        self.set_state(b, cpu, State::Inactive);
        self.rts[owner].mgr.set_slot(cpu, SlotState::Occupied);
        self.resume(owner, cpu, 0);
        Ok(())
    }

    /// Hands every idle thread a ready task, lowest slot first. A sharing
    /// runtime left with queued work and no thread asks the arbiter again.
    fn settle(&mut self) -> Result<(), EngineError> {
        for r in 0..self.rts.len() {
            let rt = &self.rts[r];
            if self.sharing.is_some()
                && rt.done_ns.is_none()
                && !rt.registry.queue().is_empty()
                && rt
                    .threads
                    .iter()
                    .all(|t| matches!(t.state, State::Inactive | State::Parked))
            {
                let backlog = rt.registry.queue().len();
                self.acquire(r, backlog)?;
            }
            let mut slot = 0;
            while slot < self.n() && !self.rts[r].registry.queue().is_empty() {
                if self.state(r, slot) == State::Spinning {
                    let id = self.rts[r].registry.queue().pop().expect("queue not empty");
                    self.start(r, slot, id)?;
                }
                slot += 1;
            }
        }
        Ok(())
    }

    /// A thread is free: it gives back a reclaimed CPU, takes a task, or
    /// polls an empty queue.
    fn free(&mut self, r: usize, slot: usize) -> Result<(), EngineError> {
        if let Some(a) = &self.arbiter {
            let e = a.entry(slot);
            if e.holder == r && e.owner != r && e.reclaim_pending {
                return self.vacate(r, slot);
            }
        }
        if self.rts[r].done_ns.is_some() {
            self.set_state(r, slot, State::Spinning);
            return self.release(r, slot);
        }
        if let Some(id) = self.rts[r].registry.queue().pop() {
            return self.start(r, slot, id);
        }
        self.set_state(r, slot, State::Spinning);
        self.poll_empty(r, slot)
    }

    /// Gives a CPU to the pool without counting a call.
    fn release(&mut self, r: usize, slot: usize) -> Result<(), EngineError> {
        if let Some(a) = &self.arbiter {
            a.release_cpu(r, slot)?;
            let own = a.entry(slot).owner == r;
            self.rts[r].mgr.set_slot(
                slot,
                if own {
                    SlotState::Lent
                } else {
                    SlotState::Foreign
                },
            );
            self.emit(EventKind::Lend, r, Some(slot), None);
            self.set_state(r, slot, State::Inactive);
        }
        Ok(())
    }

    fn poll_empty(&mut self, r: usize, slot: usize) -> Result<(), EngineError> {
        match self.rts[r].mgr.execute_policy(slot, Action::Poll) {
            Verdict::Park => self.park(r, slot),
            _ => {
                if let Policy::Hybrid { spin_budget } = self.rts[r].mgr.policy() {
                    let epoch = self.rts[r].threads[slot].epoch;
                    let at = self.now + u64::from(spin_budget - 1) * self.cfg.poll_interval_ns;
                    self.schedule(at, Ev::SpinExpire { rt: r, slot, epoch });
                }
                Ok(())
            }
        }
    }

    fn park(&mut self, r: usize, slot: usize) -> Result<(), EngineError> {
        if let Some(a) = &self.arbiter {
            let own = a.entry(slot).owner == r;
            a.lend_cpu(r, slot)?;
            self.rts[r].mgr.set_slot(
                slot,
                if own {
                    SlotState::Lent
                } else {
                    SlotState::Foreign
                },
            );
            self.emit(EventKind::Lend, r, Some(slot), None);
            self.rts[r].parks += 1;
            self.set_state(r, slot, State::Inactive);
        } else {
            self.emit(EventKind::Park, r, Some(slot), None);
            self.rts[r].parks += 1;
            self.set_state(r, slot, State::Parked);
        }
        Ok(())
    }

    fn check_done(&mut self, r: usize) -> Result<(), EngineError> {
        let rt = &self.rts[r];
        if rt.done_ns.is_some() || rt.finished < rt.w.len() {
            return Ok(());
        }
        self.rts[r].done_ns = Some(self.now);
        if self.sharing.is_some() {
            for slot in 0..self.n() {
                if self.state(r, slot) == State::Spinning {
                    self.release(r, slot)?;
                }
            }
        }
        Ok(())
    }

    fn handle(&mut self, ev: Ev) -> Result<(), EngineError> {
        match ev {
            Ev::TaskEnd { rt: r, slot } => {
                self.progress_ns = self.now;
                self.task_end(r, slot)
            }
            Ev::WakeDone { rt: r, slot } => self.free(r, slot),
            Ev::CallDone { rt: r, slot } => self.free(r, slot),
            Ev::SpinExpire { rt: r, slot, epoch } => {
                let t = self.rts[r].threads[slot];
                if t.epoch != epoch || t.state != State::Spinning || self.rts[r].done_ns.is_some() {
                    return Ok(());
                }
                loop {
                    match self.rts[r].mgr.execute_policy(slot, Action::Poll) {
                        Verdict::Park => return self.park(r, slot),
                        _ => continue,
                    }
                }
            }
            Ev::Tick { rt: r } => self.tick(r),
        }
    }

    fn task_end(&mut self, r: usize, slot: usize) -> Result<(), EngineError> {
        let State::Executing { info, start_ns, .. } = self.state(r, slot) else {
            unreachable!("task end on an idle thread")
        };
        self.emit(EventKind::End, r, Some(slot), Some(&info));
        let rt = &mut self.rts[r];
        let mut released = Vec::new();
        rt.registry.complete_task(info.id, |t| released.push(*t))?;
        rt.monitor.on_finish(slot, &info, self.now - start_ns);
        rt.finished += 1;
        for t in &released {
            self.rts[r].monitor.on_ready(slot, t);
            self.emit(EventKind::Ready, r, None, Some(t));
        }
        // The finishing thread is about to poll, so it counts as available.
        self.set_state(r, slot, State::Spinning);
        let call_ns = self.add(r, released.len(), Some(slot))?;
        self.check_done(r)?;
        if self.state(r, slot) != State::Spinning {
            return Ok(());
        }
        if call_ns > 0 {
            self.set_state(r, slot, State::Calling);
            self.schedule(self.now + call_ns, Ev::CallDone { rt: r, slot });
            return Ok(());
        }
        self.free(r, slot)
    }

    fn tick(&mut self, r: usize) -> Result<(), EngineError> {
        if self.rts[r].done_ns.is_some() {
            return Ok(());
        }
        if self.now - self.progress_ns > STALL_NS {
            return Err(EngineError::Stalled(self.now));
        }
        let rt = &self.rts[r];
        let mut p = get_cpu_prediction(&rt.monitor.snapshot(), &self.cfg.predictor, self.n());
        p.timestamp_ns = self.now;
        rt.mgr.publish_target(p.target_cpus);
        self.rts[r].predictions += 1;
        let mut e = Event::new(self.now, EventKind::Prediction, r);
        e.task = Some(p.target_cpus as u64);
        e.contributions = Some(p.contributions.iter().map(|(t, b)| (t.0, *b)).collect());
        self.sink.record(e);

        if self.rts[r].mgr.policy() == Policy::Prediction {
            let queued = self.rts[r].registry.queue().len();
            if self.sharing.is_some() {
                let mgr = &self.rts[r].mgr;
                let need = mgr.target().saturating_sub(mgr.active());
                if need > 0 && queued > 0 {
                    self.acquire(r, need)?;
                }
            } else {
                self.add(r, queued, None)?;
            }
            // Borrowed CPUs go back first, then the highest slots.
            let mut order: Vec<usize> = (0..self.n()).rev().collect();
            if let Some(a) = &self.arbiter {
                order.sort_by_key(|&c| a.entry(c).owner == r);
            }
            for slot in order {
                if self.state(r, slot) == State::Spinning {
                    self.poll_empty(r, slot)?;
                }
            }
        }
        let next = self.now + self.cfg.predictor.period_ns();
        self.schedule(next, Ev::Tick { rt: r });
        Ok(())
    }
}
