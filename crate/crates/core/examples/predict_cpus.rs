//! Feeds a monitor by hand and asks the predictor how many CPUs the live
//! workload needs.

use taskpred::monitoring::{Monitor, MonitorConfig};
use taskpred::predictor::{get_cpu_prediction, PredictorConfig};
use taskpred::task::{Kernel, TaskId, TaskInfo, TaskTypeId};

fn task(id: u64, ty: u32, cost: f64) -> TaskInfo {
    TaskInfo {
        id: TaskId(id),
        task_type: TaskTypeId(ty),
        cost,
        parent: None,
        kernel: Kernel::new(0),
    }
}

fn main() {
    let monitor = Monitor::new(2, 1, MonitorConfig::default());
    let cfg = PredictorConfig::default();
    let n_cpus = 8;

    // No history yet: each live task counts as one CPU.
    let tasks: Vec<TaskInfo> = (0..12)
        .map(|i| task(i, (i % 2) as u32, 20.0 + i as f64))
        .collect();
    for t in &tasks[..3] {
        monitor.on_create(t);
        monitor.on_ready(0, t);
    }
    let p = get_cpu_prediction(&monitor.snapshot(), &cfg, n_cpus);
    println!("cold start, 3 ready tasks -> {} cpus", p.target_cpus);

    // One finished instance per type gives unitary costs of 1 and 2 µs/cost.
    for t in &tasks[..2] {
        monitor.on_start(0, t);
        let us_per_cost = 1.0 + t.task_type.0 as f64;
        monitor.on_finish(0, t, (t.cost * us_per_cost * 1000.0) as u64);
    }
    for t in &tasks[3..] {
        monitor.on_create(t);
        monitor.on_ready(0, t);
    }
    let snap = monitor.snapshot();
    for s in &snap.types {
        println!(
            "type {} ready {:.0} executing {:.0} alpha {:?} live {}",
            s.task_type.0, s.ready, s.executing, s.unitary_cost, s.instances
        );
    }
    let p = get_cpu_prediction(&snap, &cfg, n_cpus);
    println!("per-type cpus {:?}", p.contributions);
    println!(
        "prediction every {} µs -> {} cpus",
        cfg.period_us, p.target_cpus
    );

    let slow = PredictorConfig {
        period_us: 500.0,
        ..cfg
    };
    println!(
        "prediction every {} µs -> {} cpus",
        slow.period_us,
        get_cpu_prediction(&snap, &slow, n_cpus).target_cpus
    );
}
