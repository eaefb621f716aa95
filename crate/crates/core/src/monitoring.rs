//! Per-task-type timing and workload statistics.
//!
//! Hooks are called by worker threads at task creation, ready, start and
//! finish. Workload counters live in per-thread shards so the hot path only
//! touches an uncontended lock; [`Monitor::snapshot`] locks every shard at
//! once and merges them into a coherent per-type view.
//!
//! Workloads are kept in fixed point ([`COST_SCALE`] units per cost unit) so
//! that the counters return to exactly zero once the runtime is quiescent.

use std::collections::HashMap;
use std::io;
use std::sync::{Mutex, MutexGuard};

use crate::task::{TaskId, TaskInfo, TaskTypeId};

/// Fixed-point resolution of workload counters.
pub const COST_SCALE: f64 = 1e6;

fn to_fixed(cost: f64) -> i64 {
    (cost * COST_SCALE).round() as i64
}

fn from_fixed(v: i64) -> f64 {
    v as f64 / COST_SCALE
}

/// `100 * (1 - |p - a| / max(p, a))`, with two zero durations scoring 100.
pub fn accuracy(predicted: f64, actual: f64) -> f64 {
    let hi = predicted.max(actual);
    if hi <= 0.0 {
        return 100.0;
    }
    (100.0 * (1.0 - (predicted - actual).abs() / hi)).clamp(0.0, 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorConfig {
    /// Weight of the newest observation in the unitary-cost EMA.
    pub ema_decay: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self { ema_decay: 0.5 }
    }
}

/// Exponential moving average of execution time per cost unit (µs/unit).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitaryCost {
    value: f64,
    observations: u64,
    min_ratio: f64,
    max_ratio: f64,
}

impl Default for UnitaryCost {
    fn default() -> Self {
        Self {
            value: 0.0,
            observations: 0,
            min_ratio: f64::INFINITY,
            max_ratio: f64::NEG_INFINITY,
        }
    }
}

impl UnitaryCost {
    pub fn observe(&mut self, ratio: f64, decay: f64) {
        self.value = if self.observations == 0 {
            ratio
        } else {
            decay * ratio + (1.0 - decay) * self.value
        };
        self.observations += 1;
        self.min_ratio = self.min_ratio.min(ratio);
        self.max_ratio = self.max_ratio.max(ratio);
    }

    pub fn value(&self) -> Option<f64> {
        (self.observations > 0).then_some(self.value)
    }

    pub fn observations(&self) -> u64 {
        self.observations
    }

    /// Range of every ratio observed so far; `None` before the first one.
    pub fn observed_range(&self) -> Option<(f64, f64)> {
        (self.observations > 0).then_some((self.min_ratio, self.max_ratio))
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Counters {
    ready: i64,
    executing: i64,
    instances: i64,
    accuracy_sum: f64,
    accuracy_count: u64,
}

/// Coherent point-in-time statistics of one task type.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeStats {
    pub task_type: TaskTypeId,
    /// Cost units of ready tasks.
    pub ready: f64,
    /// Cost units of executing tasks, after parent-child subtraction.
    pub executing: f64,
    /// µs per cost unit, `None` until the first observation.
    pub unitary_cost: Option<f64>,
    pub instances: u64,
    pub observations: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Snapshot {
    pub types: Vec<TypeStats>,
}

impl Snapshot {
    pub fn total_instances(&self) -> u64 {
        self.types.iter().map(|t| t.instances).sum()
    }

    pub fn is_quiescent(&self) -> bool {
        self.types
            .iter()
            .all(|t| t.ready == 0.0 && t.executing == 0.0 && t.instances == 0)
    }
}

#[derive(Debug, Clone, Copy)]
struct LedgerEntry {
    task_type: TaskTypeId,
    cost: i64,
    predicted_us: Option<f64>,
    remaining_us: f64,
    /// Fixed-point cost this task currently adds to the executing workload.
    contribution: i64,
    executing: bool,
}

/// Per-type accuracy line; `avg_accuracy_pct` is `None` for NA.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyRow {
    pub task_type: String,
    pub instances: u64,
    pub avg_accuracy_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AccuracyReport {
    pub per_type: Vec<AccuracyRow>,
    pub global: AccuracyRow,
}

impl Default for AccuracyRow {
    fn default() -> Self {
        Self {
            task_type: "all".into(),
            instances: 0,
            avg_accuracy_pct: None,
        }
    }
}

impl AccuracyReport {
    /// Writes `task_type,instances,avg_accuracy_pct`, one row per type and a
    /// final `all` row.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["task_type", "instances", "avg_accuracy_pct"])?;
        for row in self.per_type.iter().chain(std::iter::once(&self.global)) {
            let acc = match row.avg_accuracy_pct {
                Some(a) => format!("{a:.4}"),
                None => "NA".to_string(),
            };
            w.write_record([row.task_type.clone(), row.instances.to_string(), acc])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Monitoring state of one runtime instance.
#[derive(Debug)]
pub struct Monitor {
    config: MonitorConfig,
    n_types: usize,
    shards: Vec<Mutex<Vec<Counters>>>,
    unitary: Vec<Mutex<UnitaryCost>>,
    ledger: Mutex<HashMap<TaskId, LedgerEntry>>,
}

impl Monitor {
    pub fn new(n_types: usize, n_shards: usize, config: MonitorConfig) -> Self {
        assert!(n_shards > 0);
        Self {
            config,
            n_types,
            shards: (0..n_shards)
                .map(|_| Mutex::new(vec![Counters::default(); n_types]))
                .collect(),
            unitary: (0..n_types)
                .map(|_| Mutex::new(UnitaryCost::default()))
                .collect(),
            ledger: Mutex::new(HashMap::new()),
        }
    }

    pub fn config(&self) -> MonitorConfig {
        self.config
    }

    pub fn n_types(&self) -> usize {
        self.n_types
    }

    fn shard(&self, shard: usize) -> MutexGuard<'_, Vec<Counters>> {
        self.shards[shard % self.shards.len()].lock().unwrap()
    }

    pub fn unitary_cost(&self, ty: TaskTypeId) -> UnitaryCost {
        *self.unitary[ty.index()].lock().unwrap()
    }

    /// Predicted execution time of `task` in µs, from the current unitary
    /// cost of its type. `None` when the type has no observation yet.
    pub fn predict_us(&self, task: &TaskInfo) -> Option<f64> {
        self.unitary_cost(task.task_type)
            .value()
            .map(|alpha| task.cost * alpha)
    }

    pub fn on_create(&self, task: &TaskInfo) {
        let predicted_us = self.predict_us(task);
        self.ledger.lock().unwrap().insert(
            task.id,
            LedgerEntry {
                task_type: task.task_type,
                cost: to_fixed(task.cost),
                predicted_us,
                remaining_us: predicted_us.unwrap_or(0.0),
                contribution: 0,
                executing: false,
            },
        );
    }

    pub fn on_ready(&self, shard: usize, task: &TaskInfo) {
        let mut s = self.shard(shard);
        let c = &mut s[task.task_type.index()];
        c.ready += to_fixed(task.cost);
        c.instances += 1;
    }

    pub fn on_start(&self, shard: usize, task: &TaskInfo) {
        let cost = to_fixed(task.cost);
        {
            let mut ledger = self.ledger.lock().unwrap();
            if let Some(e) = ledger.get_mut(&task.id) {
                e.contribution = cost;
                e.executing = true;
            }
        }
        let mut s = self.shard(shard);
        let c = &mut s[task.task_type.index()];
        c.ready -= cost;
        c.executing += cost;
    }

    pub fn on_finish(&self, shard: usize, task: &TaskInfo, execution_time_ns: u64) {
        let elapsed_us = execution_time_ns as f64 / 1000.0;
        if task.cost > 0.0 {
            self.unitary[task.task_type.index()]
                .lock()
                .unwrap()
                .observe(elapsed_us / task.cost, self.config.ema_decay);
        }

        let (own, parent_delta) = {
            let mut ledger = self.ledger.lock().unwrap();
            let own = ledger.remove(&task.id);
            let parent_delta = task
                .parent
                .and_then(|p| ledger.get_mut(&p))
                .and_then(|parent| Self::subtract_child(parent, elapsed_us));
            (own, parent_delta)
        };

        let mut s = self.shard(shard);
        let c = &mut s[task.task_type.index()];
        c.executing -= own.map_or(to_fixed(task.cost), |e| e.contribution);
        c.instances -= 1;
        if let Some(predicted) = own.and_then(|e| e.predicted_us) {
            c.accuracy_sum += accuracy(predicted, elapsed_us);
            c.accuracy_count += 1;
        }
        if let Some((ty, delta)) = parent_delta {
            s[ty.index()].executing -= delta;
        }
    }

    /// Removes a finished child's time from its executing parent's remaining
    /// prediction and returns how much executing workload the parent sheds.
    fn subtract_child(parent: &mut LedgerEntry, elapsed_us: f64) -> Option<(TaskTypeId, i64)> {
        let predicted = parent.predicted_us.filter(|p| *p > 0.0)?;
        if !parent.executing {
            return None;
        }
        parent.remaining_us = (parent.remaining_us - elapsed_us).max(0.0);
        let contribution = (parent.cost as f64 * parent.remaining_us / predicted).round() as i64;
        let contribution = contribution.min(parent.contribution);
        let delta = parent.contribution - contribution;
        parent.contribution = contribution;
        Some((parent.task_type, delta))
    }

    /// Remaining predicted time of a live task, in µs.
    pub fn remaining_us(&self, task: TaskId) -> Option<f64> {
        let ledger = self.ledger.lock().unwrap();
        ledger
            .get(&task)
            .and_then(|e| e.predicted_us.map(|_| e.remaining_us))
    }

    pub fn snapshot(&self) -> Snapshot {
        let guards: Vec<_> = self.shards.iter().map(|s| s.lock().unwrap()).collect();
        let types = (0..self.n_types)
            .map(|j| {
                let (mut ready, mut executing, mut instances) = (0i64, 0i64, 0i64);
                for g in &guards {
                    ready += g[j].ready;
                    executing += g[j].executing;
                    instances += g[j].instances;
                }
                let unitary = *self.unitary[j].lock().unwrap();
                TypeStats {
                    task_type: TaskTypeId(j as u32),
                    ready: from_fixed(ready.max(0)),
                    executing: from_fixed(executing.max(0)),
                    unitary_cost: unitary.value(),
                    instances: instances.max(0) as u64,
                    observations: unitary.observations(),
                }
            })
            .collect();
        Snapshot { types }
    }

    pub fn accuracy_report(&self, labels: &[String]) -> AccuracyReport {
        let mut per_type = Vec::with_capacity(self.n_types);
        let (mut sum, mut count) = (0.0, 0u64);
        for j in 0..self.n_types {
            let (mut s, mut n) = (0.0, 0u64);
            for shard in &self.shards {
                let g = shard.lock().unwrap();
                s += g[j].accuracy_sum;
                n += g[j].accuracy_count;
            }
            sum += s;
            count += n;
            per_type.push(AccuracyRow {
                task_type: labels.get(j).cloned().unwrap_or_else(|| format!("type{j}")),
                instances: n,
                avg_accuracy_pct: (n > 0).then(|| s / n as f64),
            });
        }
        AccuracyReport {
            per_type,
            global: AccuracyRow {
                task_type: "all".into(),
                instances: count,
                avg_accuracy_pct: (count > 0).then(|| sum / count as f64),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::Kernel;

    fn info(id: u64, ty: u32, cost: f64, parent: Option<u64>) -> TaskInfo {
        TaskInfo {
            id: TaskId(id),
            task_type: TaskTypeId(ty),
            cost,
            parent: parent.map(TaskId),
            kernel: Kernel::default(),
        }
    }

    fn lifecycle(m: &Monitor, t: &TaskInfo, ns: u64) {
        m.on_create(t);
        m.on_ready(0, t);
        m.on_start(0, t);
        m.on_finish(0, t, ns);
    }

    #[test]
    fn accuracy_formula() {
        assert_eq!(accuracy(50.0, 50.0), 100.0);
        assert_eq!(accuracy(50.0, 100.0), 50.0);
        assert_eq!(accuracy(100.0, 50.0), 50.0);
        assert_eq!(accuracy(0.0, 100.0), 0.0);
        assert_eq!(accuracy(0.0, 0.0), 100.0);
    }

    #[test]
    fn ema_update_and_initialisation() {
        let mut u = UnitaryCost::default();
        assert_eq!(u.value(), None);
        u.observe(7.0, 0.5);
        assert_eq!(u.value(), Some(7.0));

        let mut u = UnitaryCost::default();
        u.observe(10.0, 0.9);
        u.observe(20.0, 0.5);
        assert_eq!(u.value(), Some(15.0));
        assert_eq!(u.observed_range(), Some((10.0, 20.0)));
    }

    #[test]
    fn first_task_has_no_prediction() {
        let m = Monitor::new(1, 1, MonitorConfig::default());
        let t = info(0, 0, 10.0, None);
        m.on_create(&t);
        assert_eq!(m.remaining_us(t.id), None);
    }

    #[test]
    fn prediction_is_cost_times_unitary_cost() {
        let m = Monitor::new(1, 1, MonitorConfig::default());
        // 10 cost units in 20 µs -> 2 µs/unit
        lifecycle(&m, &info(0, 0, 10.0, None), 20_000);
        assert_eq!(m.predict_us(&info(1, 0, 100.0, None)), Some(200.0));
        assert_eq!(m.predict_us(&info(2, 0, 0.0, None)), Some(0.0));
    }

    #[test]
    fn start_moves_workload_between_statuses() {
        let m = Monitor::new(1, 2, MonitorConfig::default());
        let a = info(0, 0, 5.0, None);
        let b = info(1, 0, 7.0, None);
        m.on_create(&a);
        m.on_ready(1, &a);
        let s = m.snapshot();
        assert_eq!((s.types[0].ready, s.types[0].instances), (5.0, 1));
        m.on_start(0, &a);
        let s = m.snapshot();
        assert_eq!((s.types[0].ready, s.types[0].executing), (0.0, 5.0));
        m.on_create(&b);
        m.on_ready(0, &b);
        m.on_start(1, &b);
        assert_eq!(m.snapshot().types[0].executing, 12.0);
        m.on_finish(1, &a, 1000);
        m.on_finish(0, &b, 1000);
        assert!(m.snapshot().is_quiescent());
    }

    #[test]
    fn zero_cost_tasks_do_not_touch_the_ema() {
        let m = Monitor::new(1, 1, MonitorConfig::default());
        lifecycle(&m, &info(0, 0, 0.0, None), 5_000);
        assert_eq!(m.unitary_cost(TaskTypeId(0)).observations(), 0);
        assert!(m.snapshot().is_quiescent());
    }

    #[test]
    fn child_time_is_subtracted_from_parent_and_clamped() {
        let m = Monitor::new(2, 1, MonitorConfig::default());
        // parent type 0: 1 µs/unit; child type 1.
        lifecycle(&m, &info(0, 0, 10.0, None), 10_000);
        let parent = info(1, 0, 100.0, None);
        m.on_create(&parent);
        m.on_ready(0, &parent);
        m.on_start(0, &parent);
        assert_eq!(m.remaining_us(parent.id), Some(100.0));

        let child = info(2, 1, 1.0, Some(1));
        m.on_create(&child);
        m.on_ready(0, &child);
        m.on_start(0, &child);
        m.on_finish(0, &child, 40_000);
        assert_eq!(m.remaining_us(parent.id), Some(60.0));
        assert_eq!(m.snapshot().types[0].executing, 60.0);

        let child = info(3, 1, 1.0, Some(1));
        m.on_create(&child);
        m.on_ready(0, &child);
        m.on_start(0, &child);
        m.on_finish(0, &child, 130_000);
        assert_eq!(m.remaining_us(parent.id), Some(0.0));
        assert_eq!(m.snapshot().types[0].executing, 0.0);

        m.on_finish(0, &parent, 500_000);
        assert!(m.snapshot().is_quiescent());
    }

    #[test]
    fn exact_linear_durations_give_full_accuracy() {
        let m = Monitor::new(1, 1, MonitorConfig::default());
        for i in 0..50u64 {
            let cost = 1.0 + (i % 7) as f64;
            lifecycle(&m, &info(i, 0, cost, None), (cost * 3_000.0) as u64);
        }
        let r = m.accuracy_report(&["w".into()]);
        assert_eq!(r.per_type[0].instances, 49);
        assert_eq!(r.global.avg_accuracy_pct, Some(100.0));
    }

    #[test]
    fn accuracy_csv_renders_na() {
        let m = Monitor::new(2, 1, MonitorConfig::default());
        lifecycle(&m, &info(0, 0, 1.0, None), 1_000);
        lifecycle(&m, &info(1, 0, 1.0, None), 1_000);
        let mut buf = Vec::new();
        m.accuracy_report(&["a".into(), "b".into()])
            .write_csv(&mut buf)
            .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "task_type,instances,avg_accuracy_pct\na,1,100.0000\nb,0,NA\nall,1,100.0000\n"
        );
    }
}
