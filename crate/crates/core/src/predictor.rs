//! Optimal CPU count prediction.
//!
//! For every task type the predicted time of its live workload is
//! `(W_ready + W_executing) * alpha`; divided by the prediction period it
//! gives the number of CPUs needed to drain that workload within one period.
//! Contributions are accumulated in type creation order until they cover the
//! whole machine, rounded up, and capped by the number of live tasks.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::monitoring::{Monitor, Snapshot};
use crate::task::TaskTypeId;

/// Default prediction period, in µs.
pub const DEFAULT_PERIOD_US: f64 = 50.0;

const ROUNDING_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictorConfig {
    /// Time between two predictions, in µs.
    pub period_us: f64,
    pub include_ready: bool,
    pub include_executing: bool,
    /// Lowest target ever published. 1 keeps a poller alive on an empty
    /// runtime; 0 follows the formula literally.
    pub min_target: usize,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            period_us: DEFAULT_PERIOD_US,
            include_ready: true,
            include_executing: true,
            min_target: 1,
        }
    }
}

impl PredictorConfig {
    pub fn period_ns(&self) -> u64 {
        (self.period_us * 1000.0).round() as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub target_cpus: usize,
    pub timestamp_ns: u64,
    /// Per-type contribution to the CPU estimate, for the types visited
    /// before the estimate covered the whole machine.
    pub contributions: Vec<(TaskTypeId, f64)>,
}

/// Computes the target CPU count for the given monitoring snapshot.
pub fn get_cpu_prediction(
    snapshot: &Snapshot,
    config: &PredictorConfig,
    n_cpus: usize,
) -> Prediction {
    assert!(n_cpus >= 1, "at least one CPU is required");
    assert!(config.period_us > 0.0, "prediction period must be positive");
    let limit = n_cpus as f64;
    let mut gamma = 0.0;
    let mut contributions = Vec::new();
    for stats in &snapshot.types {
        if gamma >= limit {
            break;
        }
        let beta = match stats.unitary_cost {
            Some(alpha) => {
                let mut workload = 0.0;
                if config.include_ready {
                    workload += stats.ready;
                }
                if config.include_executing {
                    workload += stats.executing;
                }
                workload * alpha / config.period_us
            }
            None => stats.instances as f64,
        };
        gamma += beta;
        contributions.push((stats.task_type, beta));
    }
    let live = snapshot.total_instances();
    let cpus = if gamma >= limit {
        n_cpus as u64
    } else {
        (gamma - ROUNDING_SLACK).ceil().max(0.0) as u64
    };
    let target = cpus.min(live) as usize;
    Prediction {
        target_cpus: target.clamp(config.min_target.min(n_cpus), n_cpus),
        timestamp_ns: 0,
        contributions,
    }
}

/// Fires a prediction every period. The claim on a tick is a CAS, so any
/// number of threads may call [`PeriodicPredictor::poll`] and exactly one
/// computes each prediction.
#[derive(Debug)]
pub struct PeriodicPredictor {
    config: PredictorConfig,
    n_cpus: usize,
    period_ns: u64,
    next_ns: AtomicU64,
}

impl PeriodicPredictor {
    pub fn new(config: PredictorConfig, n_cpus: usize) -> Self {
        let period_ns = config.period_ns().max(1);
        Self {
            config,
            n_cpus,
            period_ns,
            next_ns: AtomicU64::new(0),
        }
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.config
    }

    pub fn period_ns(&self) -> u64 {
        self.period_ns
    }

    pub fn next_tick_ns(&self) -> u64 {
        self.next_ns.load(Ordering::Acquire)
    }

    /// Computes and publishes a prediction if a tick is due at `now_ns`.
    pub fn poll(&self, now_ns: u64, monitor: &Monitor, publish: impl FnOnce(Prediction)) -> bool {
        let next = self.next_ns.load(Ordering::Acquire);
        if now_ns < next {
            return false;
        }
        let following = (now_ns / self.period_ns + 1) * self.period_ns;
        if self
            .next_ns
            .compare_exchange(next, following, Ordering::AcqRel, Ordering::Acquire)
            .is_err()
        {
            return false;
        }
        let mut prediction = get_cpu_prediction(&monitor.snapshot(), &self.config, self.n_cpus);
        prediction.timestamp_ns = now_ns;
        publish(prediction);
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monitoring::TypeStats;

    fn stats(ty: u32, ready: f64, exec: f64, alpha: Option<f64>, m: u64) -> TypeStats {
        TypeStats {
            task_type: TaskTypeId(ty),
            ready,
            executing: exec,
            unitary_cost: alpha,
            instances: m,
            observations: alpha.map_or(0, |_| 1),
        }
    }

    fn predict(types: Vec<TypeStats>, period_us: f64, n: usize) -> usize {
        let cfg = PredictorConfig {
            period_us,
            ..Default::default()
        };
        get_cpu_prediction(&Snapshot { types }, &cfg, n).target_cpus
    }

    #[test]
    fn empty_snapshot_keeps_one_cpu() {
        assert_eq!(predict(vec![], 50.0, 48), 1);
        let literal = PredictorConfig {
            min_target: 0,
            ..Default::default()
        };
        assert_eq!(
            get_cpu_prediction(&Snapshot::default(), &literal, 48).target_cpus,
            0
        );
    }

    #[test]
    fn workload_over_period() {
        assert_eq!(
            predict(vec![stats(0, 500.0, 0.0, Some(10.0), 20)], 1000.0, 48),
            5
        );
    }

    #[test]
    fn capped_by_live_instances() {
        // beta = 12.3
        assert_eq!(
            predict(vec![stats(0, 1230.0, 0.0, Some(10.0), 3)], 1000.0, 48),
            3
        );
    }

    #[test]
    fn capped_by_machine() {
        assert_eq!(
            predict(vec![stats(0, 20_000.0, 0.0, Some(10.0), 500)], 1000.0, 48),
            48
        );
    }

    #[test]
    fn fractional_estimate_rounds_up() {
        assert_eq!(
            predict(vec![stats(0, 225.0, 0.0, Some(1.0), 9)], 50.0, 8),
            5
        );
    }

    #[test]
    fn types_without_history_count_their_instances() {
        let types = vec![stats(0, 10.0, 0.0, None, 6), stats(1, 0.0, 0.0, None, 0)];
        assert_eq!(predict(types, 50.0, 8), 6);
    }

    #[test]
    fn stops_visiting_types_once_machine_is_covered() {
        let cfg = PredictorConfig::default();
        let snap = Snapshot {
            types: vec![
                stats(0, 1000.0, 0.0, Some(1.0), 100),
                stats(1, 1000.0, 0.0, Some(1.0), 100),
            ],
        };
        let p = get_cpu_prediction(&snap, &cfg, 8);
        assert_eq!(p.target_cpus, 8);
        assert_eq!(p.contributions, vec![(TaskTypeId(0), 20.0)]);
    }

    #[test]
    fn executing_status_can_be_excluded() {
        let cfg = PredictorConfig {
            period_us: 10.0,
            include_executing: false,
            ..Default::default()
        };
        let snap = Snapshot {
            types: vec![stats(0, 10.0, 100.0, Some(1.0), 10)],
        };
        assert_eq!(get_cpu_prediction(&snap, &cfg, 16).target_cpus, 1);
    }

    #[test]
    fn periodic_ticks_once_per_period() {
        let monitor = Monitor::new(1, 1, Default::default());
        let p = PeriodicPredictor::new(PredictorConfig::default(), 4);
        let mut fired = Vec::new();
        for now in [0, 10_000, 49_999, 50_000, 50_001, 149_000, 150_000] {
            if p.poll(now, &monitor, |pr| fired.push((now, pr.target_cpus))) {
                continue;
            }
        }
        assert_eq!(fired, vec![(0, 1), (50_000, 1), (149_000, 1), (150_000, 1)]);
    }
}
