//! Tile Cholesky task graph: per-type counts, then the start of the event
//! log of a run under the prediction policy.

use taskpred::bench::{generate, BenchmarkKind, BenchmarkSpec, Granularity, Shape};
use taskpred::cpu_manager::Policy;
use taskpred::events::EventLog;
use taskpred::sim::{run_virtual, EngineConfig};

fn main() {
    let tiles = std::env::args()
        .nth(1)
        .map_or(6, |s| s.parse().expect("tiles"));
    let spec = BenchmarkSpec::new(BenchmarkKind::CholeskyDag, Granularity::Coarse).with_shape(
        Shape::Cholesky {
            tiles,
            tile_cost: 100.0,
        },
    );
    let w = generate(&spec, 0).expect("valid spec");
    println!("{tiles}x{tiles} tiles, {} tasks", w.len());
    for label in &w.types {
        println!("  {label:6} {}", w.count_of(label));
    }
    let edges: usize = (0..w.len() as u32).map(|i| w.deps(i).len()).sum();
    println!("  {edges} dependency edges");

    let cfg = EngineConfig::default().with_cpus(4);
    let mut log = EventLog::new(cfg.n_cpus, vec![w.types.clone()]);
    let r = run_virtual(&w, Policy::Prediction, &cfg, &mut log).expect("run");
    println!(
        "makespan {:.1} µs, {} predictions",
        r.makespan_ns as f64 / 1000.0,
        r.runtimes[0].predictions
    );
    println!("timestamp_us,event,cpu,thread,task,task_type");
    for line in log.to_text().lines().take(25) {
        println!("{line}");
    }
}
