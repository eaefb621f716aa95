//! Closed task graphs handed to an engine.
//!
//! Tasks without a parent are created when the run starts. A task with a
//! parent is created when its parent starts executing, which models a task
//! spawning its children. Dependencies must name tasks that already exist
//! at that moment.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub task_type: u32,
    pub cost: f64,
    pub duration_ns: u64,
    pub parent: Option<u32>,
    deps: (u32, u32),
}

#[derive(Debug, Error, PartialEq)]
pub enum WorkloadError {
    #[error("task {0} refers to task {1}, which does not exist")]
    UnknownTask(u32, u32),
    #[error("dependency cycle through task {0}")]
    Cycle(u32),
    #[error("task {0} has invalid cost {1}")]
    InvalidCost(u32, f64),
    #[error("task {0} has unknown type {1}")]
    UnknownType(u32, u32),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Workload {
    pub name: String,
    pub types: Vec<String>,
    tasks: Vec<TaskSpec>,
    dep_pool: Vec<u32>,
}

impl Workload {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn add_type(&mut self, label: impl Into<String>) -> u32 {
        let label = label.into();
        if let Some(i) = self.types.iter().position(|t| *t == label) {
            return i as u32;
        }
        self.types.push(label);
        (self.types.len() - 1) as u32
    }

    pub fn add_task(
        &mut self,
        task_type: u32,
        cost: f64,
        duration_ns: u64,
        deps: &[u32],
        parent: Option<u32>,
    ) -> u32 {
        let start = self.dep_pool.len() as u32;
        self.dep_pool.extend_from_slice(deps);
        self.tasks.push(TaskSpec {
            task_type,
            cost,
            duration_ns,
            parent,
            deps: (start, self.dep_pool.len() as u32),
        });
        (self.tasks.len() - 1) as u32
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn task(&self, i: u32) -> &TaskSpec {
        &self.tasks[i as usize]
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    pub fn deps(&self, i: u32) -> &[u32] {
        let (a, b) = self.tasks[i as usize].deps;
        &self.dep_pool[a as usize..b as usize]
    }

    pub fn count_of(&self, label: &str) -> usize {
        match self.types.iter().position(|t| t == label) {
            Some(ty) => self
                .tasks
                .iter()
                .filter(|t| t.task_type == ty as u32)
                .count(),
            None => 0,
        }
    }

    pub fn total_duration_ns(&self) -> u64 {
        self.tasks.iter().map(|t| t.duration_ns).sum()
    }

    /// Tasks created when the run starts.
    pub fn roots(&self) -> Vec<u32> {
        (0..self.tasks.len() as u32)
            .filter(|&i| self.tasks[i as usize].parent.is_none())
            .collect()
    }

    /// Children of every task, in index order.
    pub fn children(&self) -> Vec<Vec<u32>> {
        let mut children = vec![Vec::new(); self.tasks.len()];
        for (i, t) in self.tasks.iter().enumerate() {
            if let Some(p) = t.parent {
                children[p as usize].push(i as u32);
            }
        }
        children
    }

    /// Checks references, costs and that dependency and parent edges form
    /// a DAG.
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let n = self.tasks.len() as u32;
        let mut indegree = vec![0u32; n as usize];
        let mut out: Vec<Vec<u32>> = vec![Vec::new(); n as usize];
        for i in 0..n {
            let t = &self.tasks[i as usize];
            if !(t.cost >= 0.0 && t.cost.is_finite()) {
                return Err(WorkloadError::InvalidCost(i, t.cost));
            }
            if t.task_type as usize >= self.types.len() {
                return Err(WorkloadError::UnknownType(i, t.task_type));
            }
            for &d in self.deps(i).iter().chain(t.parent.as_ref()) {
                if d >= n {
                    return Err(WorkloadError::UnknownTask(i, d));
                }
                out[d as usize].push(i);
                indegree[i as usize] += 1;
            }
        }
        let mut stack: Vec<u32> = (0..n).filter(|&i| indegree[i as usize] == 0).collect();
        let mut seen = 0;
        while let Some(i) = stack.pop() {
            seen += 1;
            for &j in &out[i as usize] {
                indegree[j as usize] -= 1;
                if indegree[j as usize] == 0 {
                    stack.push(j);
                }
            }
        }
        if seen != n as usize {
            let stuck = (0..n).find(|&i| indegree[i as usize] > 0).unwrap();
            return Err(WorkloadError::Cycle(stuck));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_cycles() {
        let mut w = Workload::new("cyc");
        let t = w.add_type("t");
        w.add_task(t, 1.0, 1, &[1], None);
        w.add_task(t, 1.0, 1, &[0], None);
        assert_eq!(w.validate(), Err(WorkloadError::Cycle(0)));
    }

    #[test]
    fn detects_dangling_references() {
        let mut w = Workload::new("bad");
        let t = w.add_type("t");
        w.add_task(t, 1.0, 1, &[4], None);
        assert_eq!(w.validate(), Err(WorkloadError::UnknownTask(0, 4)));
        let mut w = Workload::new("bad");
        w.add_task(3, 1.0, 1, &[], None);
        assert_eq!(w.validate(), Err(WorkloadError::UnknownType(0, 3)));
    }

    #[test]
    fn children_and_roots() {
        let mut w = Workload::new("tree");
        let t = w.add_type("t");
        let p = w.add_task(t, 1.0, 1, &[], None);
        let a = w.add_task(t, 1.0, 1, &[], Some(p));
        let b = w.add_task(t, 1.0, 1, &[a], Some(p));
        assert_eq!(w.roots(), vec![p]);
        assert_eq!(w.children()[p as usize], vec![a, b]);
        assert_eq!(w.deps(b), &[a]);
        assert!(w.validate().is_ok());
    }
}
