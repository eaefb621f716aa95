//! CPU manager: decides, whenever a worker finds the queue empty (`Poll`) or
//! tasks are enqueued (`Add`), whether threads keep spinning, park and
//! release their CPU, or get resumed.
//!
//! Worker thread `i` is bound to CPU slot `i`. The active count (δ) is the
//! number of [`SlotState::Occupied`] slots; under the prediction policy it is
//! nudged one step at a time toward the published target (Δ).

use std::sync::atomic::{AtomicU32, AtomicUsize, Ordering};
use std::sync::Mutex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    /// Threads poll forever.
    Busy,
    /// Threads park on the first empty poll.
    Idle,
    /// Threads park after `spin_budget` consecutive empty polls.
    Hybrid { spin_budget: u32 },
    /// Threads park or resume to follow the predicted CPU count.
    Prediction,
}

impl Policy {
    pub const DEFAULT_SPIN_BUDGET: u32 = 100;

    pub fn name(&self) -> &'static str {
        match self {
            Policy::Busy => "busy",
            Policy::Idle => "idle",
            Policy::Hybrid { .. } => "hybrid",
            Policy::Prediction => "prediction",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    /// The calling thread found the ready queue empty.
    Poll,
    /// This many tasks were just enqueued.
    Add(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Continue,
    /// The caller must park; its slot has already been released.
    Park,
    /// These threads must be resumed; their slots are already occupied.
    Resumed(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotState {
    /// A running thread holds the slot.
    Occupied,
    /// The slot's thread is parked; the slot is free for this runtime.
    Idle,
    /// The slot was handed to the sharing arbiter.
    Lent,
    /// The slot is not held by this runtime.
    Foreign,
}

#[derive(Debug)]
struct Inner {
    slots: Vec<SlotState>,
    active: usize,
}

#[derive(Debug)]
pub struct CpuManager {
    policy: Policy,
    single_resume: bool,
    target: AtomicUsize,
    active: AtomicUsize,
    spins: Vec<AtomicU32>,
    inner: Mutex<Inner>,
}

impl CpuManager {
    /// A manager whose threads all start running on their own slot.
    pub fn new(policy: Policy, n_cpus: usize) -> Self {
        Self::with_slots(policy, vec![SlotState::Occupied; n_cpus])
    }

    pub fn with_slots(policy: Policy, slots: Vec<SlotState>) -> Self {
        if let Policy::Hybrid { spin_budget } = policy {
            assert!(spin_budget >= 1, "hybrid spin budget must be at least 1");
        }
        let active = slots.iter().filter(|s| **s == SlotState::Occupied).count();
        Self {
            policy,
            single_resume: false,
            target: AtomicUsize::new(slots.len()),
            active: AtomicUsize::new(active),
            spins: slots.iter().map(|_| AtomicU32::new(0)).collect(),
            inner: Mutex::new(Inner { slots, active }),
        }
    }

    /// Resume at most one thread per `Add`, as the bare algorithm does.
    pub fn single_resume(mut self, single: bool) -> Self {
        self.single_resume = single;
        self
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    pub fn n_slots(&self) -> usize {
        self.spins.len()
    }

    /// Current target Δ.
    pub fn target(&self) -> usize {
        self.target.load(Ordering::Acquire)
    }

    /// Current active count δ.
    pub fn active(&self) -> usize {
        self.active.load(Ordering::Acquire)
    }

    pub fn publish_target(&self, target: usize) {
        self.target
            .store(target.min(self.n_slots()), Ordering::Release);
    }

    pub fn slot_state(&self, slot: usize) -> SlotState {
        self.inner.lock().unwrap().slots[slot]
    }

    pub fn slots(&self) -> Vec<SlotState> {
        self.inner.lock().unwrap().slots.clone()
    }

    pub fn idle_slots(&self) -> usize {
        self.inner
            .lock()
            .unwrap()
            .slots
            .iter()
            .filter(|s| **s == SlotState::Idle)
            .count()
    }

    /// Resets the hybrid spin counter once a thread got a task.
    pub fn on_task_dequeued(&self, thread: usize) {
        self.spins[thread].store(0, Ordering::Relaxed);
    }

    pub fn execute_policy(&self, thread: usize, action: Action) -> Verdict {
        match action {
            Action::Poll => self.on_poll(thread),
            Action::Add(count) => self.on_add(count),
        }
    }

    fn on_poll(&self, thread: usize) -> Verdict {
        match self.policy {
            Policy::Busy => Verdict::Continue,
            Policy::Idle => self.park(thread, |_| true),
            Policy::Hybrid { spin_budget } => {
                let spins = self.spins[thread].fetch_add(1, Ordering::Relaxed) + 1;
                if spins < spin_budget {
                    return Verdict::Continue;
                }
                self.spins[thread].store(0, Ordering::Relaxed);
                self.park(thread, |_| true)
            }
            Policy::Prediction => {
                if self.active() <= self.target() {
                    return Verdict::Continue;
                }
                let target = &self.target;
                self.park(thread, |active| active > target.load(Ordering::Acquire))
            }
        }
    }

    fn park(&self, thread: usize, gate: impl Fn(usize) -> bool) -> Verdict {
        let mut inner = self.inner.lock().unwrap();
        if inner.slots[thread] != SlotState::Occupied || !gate(inner.active) {
            return Verdict::Continue;
        }
        inner.slots[thread] = SlotState::Idle;
        inner.active -= 1;
        self.active.store(inner.active, Ordering::Release);
        Verdict::Park
    }

    fn on_add(&self, count: usize) -> Verdict {
        let limit = match self.policy {
            Policy::Busy => return Verdict::Resumed(Vec::new()),
            Policy::Idle | Policy::Hybrid { .. } => count,
            Policy::Prediction => {
                if self.active() >= self.target() {
                    return Verdict::Resumed(Vec::new());
                }
                usize::MAX
            }
        };
        let limit = if self.single_resume {
            limit.min(1)
        } else {
            limit
        };
        let mut inner = self.inner.lock().unwrap();
        let mut resumed = Vec::new();
        while resumed.len() < limit {
            if self.policy == Policy::Prediction && inner.active >= self.target() {
                break;
            }
            let Some(slot) = inner.slots.iter().position(|s| *s == SlotState::Idle) else {
                break;
            };
            inner.slots[slot] = SlotState::Occupied;
            inner.active += 1;
            self.spins[slot].store(0, Ordering::Relaxed);
            resumed.push(slot);
        }
        self.active.store(inner.active, Ordering::Release);
        Verdict::Resumed(resumed)
    }

    /// Forces a slot into `state`, keeping δ consistent. Used by the sharing
    /// arbiter glue. Returns the previous state.
    pub fn set_slot(&self, slot: usize, state: SlotState) -> SlotState {
        let mut inner = self.inner.lock().unwrap();
        let prev = std::mem::replace(&mut inner.slots[slot], state);
        if prev == SlotState::Occupied {
            inner.active -= 1;
        }
        if state == SlotState::Occupied {
            inner.active += 1;
            self.spins[slot].store(0, Ordering::Relaxed);
        }
        self.active.store(inner.active, Ordering::Release);
        prev
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prediction(n: usize, active: usize, target: usize) -> CpuManager {
        let slots = (0..n)
            .map(|i| {
                if i < active {
                    SlotState::Occupied
                } else {
                    SlotState::Idle
                }
            })
            .collect();
        let m = CpuManager::with_slots(Policy::Prediction, slots);
        m.publish_target(target);
        m
    }

    #[test]
    fn poll_above_target_parks_one_thread() {
        let m = prediction(8, 8, 6);
        assert_eq!(m.execute_policy(7, Action::Poll), Verdict::Park);
        assert_eq!(m.active(), 7);
        assert_eq!(m.slot_state(7), SlotState::Idle);
    }

    #[test]
    fn add_below_target_resumes() {
        let m = prediction(8, 4, 6).single_resume(true);
        assert_eq!(
            m.execute_policy(0, Action::Add(1)),
            Verdict::Resumed(vec![4])
        );
        assert_eq!(m.active(), 5);

        let m = prediction(8, 4, 6);
        assert_eq!(
            m.execute_policy(0, Action::Add(1)),
            Verdict::Resumed(vec![4, 5])
        );
        assert_eq!(m.active(), 6);
    }

    #[test]
    fn equilibrium_is_a_no_op() {
        let m = prediction(8, 6, 6);
        assert_eq!(m.execute_policy(0, Action::Poll), Verdict::Continue);
        assert_eq!(
            m.execute_policy(0, Action::Add(3)),
            Verdict::Resumed(vec![])
        );
        assert_eq!(m.active(), 6);
    }

    #[test]
    fn add_without_parked_threads_is_a_no_op() {
        let slots = vec![
            SlotState::Occupied,
            SlotState::Occupied,
            SlotState::Occupied,
            SlotState::Occupied,
            SlotState::Foreign,
            SlotState::Foreign,
            SlotState::Foreign,
            SlotState::Foreign,
        ];
        let m = CpuManager::with_slots(Policy::Prediction, slots);
        m.publish_target(6);
        assert_eq!(
            m.execute_policy(0, Action::Add(2)),
            Verdict::Resumed(vec![])
        );
        assert_eq!(m.active(), 4);
    }

    #[test]
    fn busy_never_parks() {
        let m = CpuManager::new(Policy::Busy, 4);
        m.publish_target(1);
        for _ in 0..1_000_000 {
            assert_eq!(m.execute_policy(2, Action::Poll), Verdict::Continue);
        }
        assert_eq!(m.active(), 4);
    }

    #[test]
    fn idle_parks_immediately_and_resumes_per_task() {
        let m = CpuManager::new(Policy::Idle, 4);
        for t in 0..3 {
            assert_eq!(m.execute_policy(t, Action::Poll), Verdict::Park);
        }
        assert_eq!(
            m.execute_policy(3, Action::Add(2)),
            Verdict::Resumed(vec![0, 1])
        );
        assert_eq!(m.active(), 3);
    }

    #[test]
    fn hybrid_budget_resets_on_dequeue() {
        let m = CpuManager::new(Policy::Hybrid { spin_budget: 100 }, 2);
        for _ in 0..99 {
            assert_eq!(m.execute_policy(0, Action::Poll), Verdict::Continue);
        }
        m.on_task_dequeued(0);
        for _ in 0..99 {
            assert_eq!(m.execute_policy(0, Action::Poll), Verdict::Continue);
        }
        assert_eq!(m.execute_policy(0, Action::Poll), Verdict::Park);
        assert_eq!(m.active(), 1);
    }

    #[test]
    fn lent_slots_are_not_resumed() {
        let m = prediction(4, 2, 4);
        m.set_slot(2, SlotState::Lent);
        assert_eq!(
            m.execute_policy(0, Action::Add(4)),
            Verdict::Resumed(vec![3])
        );
        assert_eq!(m.set_slot(2, SlotState::Occupied), SlotState::Lent);
        assert_eq!(m.active(), 4);
    }

    #[test]
    #[should_panic]
    fn hybrid_budget_must_be_positive() {
        CpuManager::new(Policy::Hybrid { spin_budget: 0 }, 1);
    }
}
