//! Two runtimes on one machine, each owning half of the CPUs and lending
//! idle ones to the other: an imbalanced Gauss-Seidel next to a stream of
//! short tasks.

use taskpred::arbiter::SharingPolicy;
use taskpred::bench::{generate, BenchmarkKind, BenchmarkSpec, Granularity, Shape};
use taskpred::sim::{run_shared, EngineConfig};

fn main() {
    let gs = BenchmarkSpec::new(BenchmarkKind::GaussSeidelBarrier, Granularity::Coarse).with_shape(
        Shape::GaussSeidel {
            steps: 60,
            width: 32,
            block_cost: 200.0,
            imbalance: 1.0,
        },
    );
    let stream = BenchmarkSpec::new(BenchmarkKind::StreamLike, Granularity::Fine).with_shape(
        Shape::Stream {
            waves: 40,
            width: 512,
            task_cost: 5.0,
        },
    );
    let gs = generate(&gs, 1).expect("valid spec");
    let stream = generate(&stream, 2).expect("valid spec");
    let cfg = EngineConfig::default();

    println!("policy,runtime,makespan_us,lend_calls,acquire_calls,reclaim_calls,cpus_transferred");
    for policy in [
        SharingPolicy::Lewi,
        SharingPolicy::Hybrid { spin_budget: 100 },
        SharingPolicy::Prediction,
    ] {
        let r = run_shared([&gs, &stream], policy, &cfg, &mut ()).expect("run");
        for rt in &r.runtimes {
            let c = rt.calls;
            println!(
                "{},{},{:.1},{},{},{},{}",
                policy.name(),
                rt.name,
                rt.makespan_ns as f64 / 1000.0,
                c.lend,
                c.acquire,
                c.reclaim,
                c.cpus_transferred
            );
        }
    }
}
