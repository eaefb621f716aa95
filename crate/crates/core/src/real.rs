//! Real-thread backend.
//!
//! One OS thread per CPU slot. Task bodies spin for their declared duration.
//! Parked threads block in [`std::thread::park`] until another thread hands
//! them a resume. Predictions are computed by whichever worker first
//! crosses a period boundary, so no extra thread competes for a core.

use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Mutex, OnceLock};
use std::thread::{self, Thread};
use std::time::{Duration, Instant};

use crate::cpu_manager::{Action, CpuManager, Policy, Verdict};
use crate::events::{Event, EventKind};
use crate::monitoring::{AccuracyReport, Monitor, MonitorConfig};
use crate::predictor::{PeriodicPredictor, PredictorConfig};
use crate::sim::EngineError;
use crate::task::{Kernel, TaskId, TaskInfo, TaskRegistry, TaskTypeId};
use crate::workload::Workload;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealConfig {
    pub n_cpus: usize,
    pub policy: Policy,
    /// Track workloads and compute predictions. Required by the prediction
    /// policy; with any other policy the predictions are computed and
    /// ignored.
    pub monitoring: bool,
    pub predictor: PredictorConfig,
    pub monitor: MonitorConfig,
    pub record_events: bool,
}

impl RealConfig {
    pub fn new(policy: Policy, n_cpus: usize) -> Self {
        Self {
            n_cpus,
            policy,
            monitoring: policy == Policy::Prediction,
            predictor: PredictorConfig::default(),
            monitor: MonitorConfig::default(),
            record_events: false,
        }
    }

    pub fn monitoring(mut self, on: bool) -> Self {
        self.monitoring = on;
        self
    }
}

/// Number of cores available to this process.
pub fn host_cpus() -> usize {
    thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Debug, Clone)]
pub struct RealReport {
    pub makespan_ns: u64,
    pub tasks: usize,
    pub accuracy: Option<AccuracyReport>,
    pub parks: u64,
    pub resumes: u64,
    pub predictions: u64,
    /// Recorded events sorted by time; empty unless requested.
    pub events: Vec<Event>,
}

#[derive(Debug, Default)]
struct Parker {
    permit: AtomicBool,
    thread: OnceLock<Thread>,
}

impl Parker {
    fn unpark(&self) {
        self.permit.store(true, Ordering::Release);
        if let Some(t) = self.thread.get() {
            t.unpark();
        }
    }
}

struct Shared<'w> {
    cfg: RealConfig,
    w: &'w Workload,
    children: Vec<Vec<u32>>,
    registry: TaskRegistry,
    monitor: Option<Monitor>,
    predictor: Option<PeriodicPredictor>,
    mgr: CpuManager,
    /// Workload index to created task id plus one.
    ids: Vec<AtomicU64>,
    /// Creation order to workload index.
    index_of: Vec<AtomicU32>,
    parkers: Vec<Parker>,
    finished: AtomicUsize,
    done: AtomicBool,
    failure: Mutex<Option<EngineError>>,
    epoch: Instant,
    end_ns: AtomicU64,
    parks: AtomicU64,
    resumes: AtomicU64,
    predictions: AtomicU64,
}

struct Worker<'s, 'w> {
    sh: &'s Shared<'w>,
    slot: usize,
    events: Vec<Event>,
}

/// Runs `workload` on real threads.
pub fn run_real(workload: &Workload, cfg: &RealConfig) -> Result<RealReport, EngineError> {
    if cfg.n_cpus == 0 {
        return Err(EngineError::Config("at least one cpu is required".into()));
    }
    if cfg.policy == Policy::Prediction && !cfg.monitoring {
        return Err(EngineError::Config(
            "the prediction policy needs monitoring".into(),
        ));
    }
    if let Policy::Hybrid { spin_budget: 0 } = cfg.policy {
        return Err(EngineError::Config("spin budget must be at least 1".into()));
    }
    if cfg.predictor.period_ns() == 0 {
        return Err(EngineError::Config(
            "prediction period must be positive".into(),
        ));
    }
    workload.validate()?;
    let n = cfg.n_cpus;
    let registry = TaskRegistry::new();
    for label in &workload.types {
        registry.register_type(label.clone());
    }
    let sh = Shared {
        cfg: *cfg,
        w: workload,
        children: workload.children(),
        registry,
        monitor: cfg
            .monitoring
            .then(|| Monitor::new(workload.types.len(), n, cfg.monitor)),
        predictor: cfg
            .monitoring
            .then(|| PeriodicPredictor::new(cfg.predictor, n)),
        mgr: CpuManager::new(cfg.policy, n),
        ids: (0..workload.len()).map(|_| AtomicU64::new(0)).collect(),
        index_of: (0..workload.len())
            .map(|_| AtomicU32::new(u32::MAX))
            .collect(),
        parkers: (0..n).map(|_| Parker::default()).collect(),
        finished: AtomicUsize::new(0),
        done: AtomicBool::new(workload.is_empty()),
        failure: Mutex::new(None),
        epoch: Instant::now(),
        end_ns: AtomicU64::new(0),
        parks: AtomicU64::new(0),
        resumes: AtomicU64::new(0),
        predictions: AtomicU64::new(0),
    };

    let mut main = Worker {
        sh: &sh,
        slot: 0,
        events: Vec::new(),
    };
    let mut ready = 0;
    for i in workload.roots() {
        ready += usize::from(main.create(i)?);
    }
    main.add(ready);
    let mut events = main.events;

    thread::scope(|s| {
        let handles: Vec<_> = (0..n)
            .map(|slot| {
                let sh = &sh;
                s.spawn(move || {
                    let mut w = Worker {
                        sh,
                        slot,
                        events: Vec::new(),
                    };
                    let _ = sh.parkers[slot].thread.set(thread::current());
                    if let Err(e) = w.run() {
                        sh.failure.lock().unwrap().get_or_insert(e);
                        sh.shutdown();
                    }
                    w.events
                })
            })
            .collect();
        for h in handles {
            events.extend(h.join().expect("worker panicked"));
        }
    });
    if let Some(e) = sh.failure.lock().unwrap().take() {
        return Err(e);
    }
    events.sort_by_key(|e| e.time_ns);
    Ok(RealReport {
        makespan_ns: sh.end_ns.load(Ordering::Acquire),
        tasks: sh.finished.load(Ordering::Acquire),
        accuracy: sh
            .monitor
            .as_ref()
            .map(|m| m.accuracy_report(&workload.types)),
        parks: sh.parks.load(Ordering::Relaxed),
        resumes: sh.resumes.load(Ordering::Relaxed),
        predictions: sh.predictions.load(Ordering::Relaxed),
        events,
    })
}

impl Shared<'_> {
    fn now(&self) -> u64 {
        self.epoch.elapsed().as_nanos() as u64
    }

    fn shutdown(&self) {
        self.done.store(true, Ordering::Release);
        for p in &self.parkers {
            p.unpark();
        }
    }

    fn is_done(&self) -> bool {
        self.done.load(Ordering::Acquire)
    }
}

impl Worker<'_, '_> {
    fn record(&mut self, kind: EventKind, slot: Option<usize>, task: Option<&TaskInfo>) {
        if !self.sh.cfg.record_events {
            return;
        }
        let mut e = Event::new(self.sh.now(), kind, 0);
        if let Some(slot) = slot {
            e = e.cpu(slot).thread(slot);
        }
        if let Some(t) = task {
            e = e.task(t.id.0, t.task_type.0);
        }
        self.events.push(e);
    }

    fn run(&mut self) -> Result<(), EngineError> {
        let sh = self.sh;
        loop {
            if sh.is_done() {
                return Ok(());
            }
            self.tick();
            if let Some(id) = sh.registry.queue().pop() {
                self.execute(id)?;
                continue;
            }
            match sh.mgr.execute_policy(self.slot, Action::Poll) {
                Verdict::Park => self.park(),
                _ => std::hint::spin_loop(),
            }
        }
    }

    fn park(&mut self) {
        let sh = self.sh;
        sh.parks.fetch_add(1, Ordering::Relaxed);
        self.record(EventKind::Park, Some(self.slot), None);
        // Work enqueued while this thread was giving up its slot found no
        // idle thread to wake.
        let queued = sh.registry.queue().len();
        if queued > 0 {
            self.add(queued);
        }
        let parker = &sh.parkers[self.slot];
        while !parker.permit.swap(false, Ordering::AcqRel) && !sh.is_done() {
            thread::park();
        }
    }

    fn tick(&mut self) {
        let sh = self.sh;
        let (Some(p), Some(m)) = (&sh.predictor, &sh.monitor) else {
            return;
        };
        let now = sh.now();
        if now < p.next_tick_ns() {
            return;
        }
        let mut event = None;
        let fired = p.poll(now, m, |pr| {
            sh.mgr.publish_target(pr.target_cpus);
            let mut e = Event::new(now, EventKind::Prediction, 0);
            e.task = Some(pr.target_cpus as u64);
            e.contributions = Some(pr.contributions.iter().map(|(t, b)| (t.0, *b)).collect());
            event = Some(e);
        });
        if !fired {
            return;
        }
        sh.predictions.fetch_add(1, Ordering::Relaxed);
        if let (true, Some(e)) = (sh.cfg.record_events, event) {
            self.events.push(e);
        }
        if sh.cfg.policy == Policy::Prediction {
            let queued = sh.registry.queue().len();
            self.add(queued);
        }
    }

    fn add(&mut self, count: usize) {
        if count == 0 {
            return;
        }
        if let Verdict::Resumed(slots) = self.sh.mgr.execute_policy(self.slot, Action::Add(count)) {
            for s in slots {
                self.sh.resumes.fetch_add(1, Ordering::Relaxed);
                self.record(EventKind::Resume, Some(s), None);
                self.sh.parkers[s].unpark();
            }
        }
    }

    /// Creates workload task `i`; returns whether it is immediately ready.
    fn create(&mut self, i: u32) -> Result<bool, EngineError> {
        let sh = self.sh;
        let spec = sh.w.task(i);
        let mut deps = Vec::with_capacity(sh.w.deps(i).len());
        for &d in sh.w.deps(i) {
            match sh.ids[d as usize].load(Ordering::Acquire) {
                0 => return Err(EngineError::CreationOrder { task: i, dep: d }),
                id => deps.push(TaskId(id - 1)),
            }
        }
        let parent = spec
            .parent
            .and_then(|p| match sh.ids[p as usize].load(Ordering::Acquire) {
                0 => None,
                id => Some(TaskId(id - 1)),
            });
        let task_type = TaskTypeId(spec.task_type);
        let kernel = Kernel::new(spec.duration_ns);
        let info = TaskInfo {
            id: TaskId(0),
            task_type,
            cost: spec.cost,
            parent,
            kernel,
        };
        let mut ready = false;
        let slot = self.slot;
        let id = sh.registry.create_task_with(
            task_type,
            spec.cost,
            &deps,
            parent,
            kernel,
            |t| {
                if let Some(m) = &sh.monitor {
                    m.on_create(t);
                }
            },
            |t| {
                ready = true;
                if let Some(m) = &sh.monitor {
                    m.on_ready(slot, t);
                }
            },
        )?;
        sh.ids[i as usize].store(id.0 + 1, Ordering::Release);
        sh.index_of[id.0 as usize].store(i, Ordering::Release);
        if sh.cfg.record_events {
            let info = TaskInfo { id, ..info };
            let mut e = Event::new(sh.now(), EventKind::Create, 0).task(id.0, task_type.0);
            e.cost = Some(spec.cost);
            self.events.push(e);
            if ready {
                self.record(EventKind::Ready, None, Some(&info));
            }
        }
        Ok(ready)
    }

    fn execute(&mut self, id: TaskId) -> Result<(), EngineError> {
        let sh = self.sh;
        let start = Instant::now();
        let info = sh.registry.start_task(id)?;
        if let Some(m) = &sh.monitor {
            m.on_start(self.slot, &info);
        }
        sh.mgr.on_task_dequeued(self.slot);
        self.record(EventKind::Start, Some(self.slot), Some(&info));

        let idx = loop {
            let i = sh.index_of[id.0 as usize].load(Ordering::Acquire);
            if i != u32::MAX {
                break i;
            }
            std::hint::spin_loop();
        };
        let mut ready = 0;
        for &c in &sh.children[idx as usize] {
            ready += usize::from(self.create(c)?);
        }
        self.add(ready);

        let body = Duration::from_nanos(info.kernel.duration_ns);
        while start.elapsed() < body {
            std::hint::spin_loop();
        }
        let elapsed_ns = start.elapsed().as_nanos() as u64;

        let slot = self.slot;
        let mut released_info = Vec::new();
        let record = sh.cfg.record_events;
        let released = sh.registry.complete_task(id, |t| {
            if let Some(m) = &sh.monitor {
                m.on_ready(slot, t);
            }
            if record {
                released_info.push(*t);
            }
        })?;
        if let Some(m) = &sh.monitor {
            m.on_finish(slot, &info, elapsed_ns);
        }
        self.record(EventKind::End, Some(slot), Some(&info));
        for t in &released_info {
            self.record(EventKind::Ready, None, Some(t));
        }
        if sh.finished.fetch_add(1, Ordering::AcqRel) + 1 == sh.w.len() {
            sh.end_ns.store(sh.now(), Ordering::Release);
            sh.shutdown();
            return Ok(());
        }
        self.add(released.len());
        Ok(())
    }
}
