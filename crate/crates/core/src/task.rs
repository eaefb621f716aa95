//! Tasks, task types, the dependency registry and the ready queue.
//!
//! The registry owns every task created by one runtime instance. Tasks move
//! through `created -> ready -> executing -> finished`, each transition taken
//! exactly once under the registry lock. A task becomes ready when its last
//! unfinished dependency completes; ready tasks are pushed onto the FIFO
//! [`ReadyQueue`] that worker threads poll.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Mutex;

use thiserror::Error;

/// Identifier of a task type, unique within a runtime instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TaskTypeId(pub u32);

impl TaskTypeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskType {
    pub id: TaskTypeId,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TaskId(pub u64);

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskStatus {
    Created,
    Ready,
    Executing,
    Finished,
}

/// Synthetic task body: the kernel occupies its CPU for `duration_ns`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Kernel {
    pub duration_ns: u64,
}

impl Kernel {
    pub fn new(duration_ns: u64) -> Self {
        Self { duration_ns }
    }
}

/// Immutable view of a task as seen by the engine and the monitoring hooks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskInfo {
    pub id: TaskId,
    pub task_type: TaskTypeId,
    pub cost: f64,
    pub parent: Option<TaskId>,
    pub kernel: Kernel,
}

/// Full descriptor of a registered task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDescriptor {
    pub info: TaskInfo,
    pub dependencies: Vec<TaskId>,
    pub status: TaskStatus,
}

/// Timing of one finished task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskRecord {
    pub task: TaskId,
    pub start_ns: u64,
    pub end_ns: u64,
}

impl TaskRecord {
    pub fn new(task: TaskId, start_ns: u64, end_ns: u64) -> Self {
        debug_assert!(end_ns >= start_ns);
        Self {
            task,
            start_ns,
            end_ns,
        }
    }

    pub fn execution_time_ns(&self) -> u64 {
        self.end_ns - self.start_ns
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TaskError {
    #[error("task cost must be a finite non-negative number, got {0}")]
    InvalidCost(f64),
    #[error("unknown dependency {0}")]
    UnknownDependency(TaskId),
    #[error("unknown parent {0}")]
    UnknownParent(TaskId),
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("unknown task type {0:?}")]
    UnknownType(TaskTypeId),
    #[error("task {task} cannot go from {from:?} to {to:?}")]
    InvalidTransition {
        task: TaskId,
        from: TaskStatus,
        to: TaskStatus,
    },
}

/// FIFO queue of ready task ids. An id is present at most once.
#[derive(Debug, Default)]
pub struct ReadyQueue {
    inner: Mutex<VecDeque<TaskId>>,
}

impl ReadyQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, id: TaskId) {
        self.inner.lock().unwrap().push_back(id);
    }

    pub fn pop(&self) -> Option<TaskId> {
        self.inner.lock().unwrap().pop_front()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug)]
struct Entry {
    info: TaskInfo,
    dependencies: Vec<TaskId>,
    status: TaskStatus,
    pending: u32,
    dependents: Vec<TaskId>,
}

#[derive(Debug, Default)]
struct Inner {
    types: Vec<TaskType>,
    tasks: Vec<Entry>,
    finished: usize,
}

/// Registry of the tasks of one runtime instance.
///
/// Task ids are allocated sequentially from `id_base`, which lets two runtime
/// instances sharing one event log keep disjoint id ranges.
#[derive(Debug)]
pub struct TaskRegistry {
    id_base: u64,
    inner: Mutex<Inner>,
    queue: ReadyQueue,
}

impl Default for TaskRegistry {
    fn default() -> Self {
        Self::new()
    }
}

impl TaskRegistry {
    pub fn new() -> Self {
        Self::with_id_base(0)
    }

    pub fn with_id_base(id_base: u64) -> Self {
        Self {
            id_base,
            inner: Mutex::new(Inner::default()),
            queue: ReadyQueue::new(),
        }
    }

    pub fn register_type(&self, label: impl Into<String>) -> TaskTypeId {
        let mut inner = self.inner.lock().unwrap();
        let id = TaskTypeId(inner.types.len() as u32);
        inner.types.push(TaskType {
            id,
            label: label.into(),
        });
        id
    }

    pub fn types(&self) -> Vec<TaskType> {
        self.inner.lock().unwrap().types.clone()
    }

    pub fn queue(&self) -> &ReadyQueue {
        &self.queue
    }

    /// Registers a task. If every dependency has already finished the task
    /// goes straight to ready: `on_ready` is invoked and the id is enqueued.
    pub fn create_task(
        &self,
        task_type: TaskTypeId,
        cost: f64,
        deps: &[TaskId],
        parent: Option<TaskId>,
        kernel: Kernel,
        on_ready: impl FnMut(&TaskInfo),
    ) -> Result<TaskId, TaskError> {
        self.create_task_with(task_type, cost, deps, parent, kernel, |_| {}, on_ready)
    }

    /// Like [`TaskRegistry::create_task`], with `on_create` called under the
    /// registry lock, before any dependency can release the new task.
    #[allow(clippy::too_many_arguments)]
    pub fn create_task_with(
        &self,
        task_type: TaskTypeId,
        cost: f64,
        deps: &[TaskId],
        parent: Option<TaskId>,
        kernel: Kernel,
        on_create: impl FnOnce(&TaskInfo),
        mut on_ready: impl FnMut(&TaskInfo),
    ) -> Result<TaskId, TaskError> {
        if !(cost >= 0.0 && cost.is_finite()) {
            return Err(TaskError::InvalidCost(cost));
        }
        let mut inner = self.inner.lock().unwrap();
        if task_type.index() >= inner.types.len() {
            return Err(TaskError::UnknownType(task_type));
        }
        if let Some(p) = parent {
            if self.slot(&inner, p).is_none() {
                return Err(TaskError::UnknownParent(p));
            }
        }
        for &d in deps {
            if self.slot(&inner, d).is_none() {
                return Err(TaskError::UnknownDependency(d));
            }
        }
        let id = TaskId(self.id_base + inner.tasks.len() as u64);
        let mut pending = 0;
        for &d in deps {
            let slot = self.slot(&inner, d).unwrap();
            let dep = &mut inner.tasks[slot];
            if dep.status != TaskStatus::Finished {
                dep.dependents.push(id);
                pending += 1;
            }
        }
        let info = TaskInfo {
            id,
            task_type,
            cost,
            parent,
            kernel,
        };
        let status = if pending == 0 {
            TaskStatus::Ready
        } else {
            TaskStatus::Created
        };
        on_create(&info);
        inner.tasks.push(Entry {
            info,
            dependencies: deps.to_vec(),
            status,
            pending,
            dependents: Vec::new(),
        });
        if pending == 0 {
            on_ready(&info);
            self.queue.push(id);
        }
        Ok(id)
    }

    /// Moves a ready task to executing and returns its info.
    pub fn start_task(&self, id: TaskId) -> Result<TaskInfo, TaskError> {
        let mut inner = self.inner.lock().unwrap();
        let slot = self.slot(&inner, id).ok_or(TaskError::UnknownTask(id))?;
        let entry = &mut inner.tasks[slot];
        if entry.status != TaskStatus::Ready {
            return Err(TaskError::InvalidTransition {
                task: id,
                from: entry.status,
                to: TaskStatus::Executing,
            });
        }
        entry.status = TaskStatus::Executing;
        Ok(entry.info)
    }

    /// Finishes an executing task and releases its dependents. `on_ready` is
    /// called once per released task, before the task is enqueued. Returns
    /// the ids released, in dependency registration order.
    pub fn complete_task(
        &self,
        id: TaskId,
        mut on_ready: impl FnMut(&TaskInfo),
    ) -> Result<Vec<TaskId>, TaskError> {
        let mut inner = self.inner.lock().unwrap();
        let slot = self.slot(&inner, id).ok_or(TaskError::UnknownTask(id))?;
        let entry = &mut inner.tasks[slot];
        if entry.status != TaskStatus::Executing {
            return Err(TaskError::InvalidTransition {
                task: id,
                from: entry.status,
                to: TaskStatus::Finished,
            });
        }
        entry.status = TaskStatus::Finished;
        let dependents = std::mem::take(&mut entry.dependents);
        inner.finished += 1;
        let mut released = Vec::new();
        for dep_id in dependents {
            let s = self.slot(&inner, dep_id).expect("dependent registered");
            let dep = &mut inner.tasks[s];
            dep.pending -= 1;
            if dep.pending == 0 {
                debug_assert_eq!(dep.status, TaskStatus::Created);
                dep.status = TaskStatus::Ready;
                on_ready(&dep.info);
                self.queue.push(dep_id);
                released.push(dep_id);
            }
        }
        Ok(released)
    }

    pub fn status(&self, id: TaskId) -> Option<TaskStatus> {
        let inner = self.inner.lock().unwrap();
        self.slot(&inner, id).map(|s| inner.tasks[s].status)
    }

    pub fn descriptor(&self, id: TaskId) -> Option<TaskDescriptor> {
        let inner = self.inner.lock().unwrap();
        self.slot(&inner, id).map(|s| {
            let e = &inner.tasks[s];
            TaskDescriptor {
                info: e.info,
                dependencies: e.dependencies.clone(),
                status: e.status,
            }
        })
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn finished(&self) -> usize {
        self.inner.lock().unwrap().finished
    }

    fn slot(&self, inner: &Inner, id: TaskId) -> Option<usize> {
        let idx = id.0.checked_sub(self.id_base)? as usize;
        (idx < inner.tasks.len()).then_some(idx)
    }
}
