//! Busy policy on real threads with and without monitoring.
//!
//! `cargo run --release --example real_overhead -- [tasks per chain] [runs]`

use taskpred::bench::{generate, BenchmarkKind, BenchmarkSpec, Granularity, Shape};
use taskpred::cpu_manager::Policy;
use taskpred::real::{host_cpus, run_real, RealConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let length = args.next().map_or(20_000, |s| s.parse().expect("length"));
    let runs: usize = args.next().map_or(3, |s| s.parse().expect("runs"));
    let spec = BenchmarkSpec::new(BenchmarkKind::FineGrainStress, Granularity::Fine).with_shape(
        Shape::FineGrain {
            chains: 6,
            length,
            min_cost: 1,
            max_cost: 10,
        },
    );
    let w = generate(&spec, 0).expect("valid spec");
    let n = host_cpus();
    println!("{} tasks on {n} threads", w.len());
    let (mut off, mut on) = (Vec::new(), Vec::new());
    for _ in 0..runs {
        for monitoring in [false, true] {
            let r = run_real(&w, &RealConfig::new(Policy::Busy, n).monitoring(monitoring))
                .expect("run");
            let ms = r.makespan_ns as f64 / 1e6;
            println!(
                "monitoring {monitoring:5} {ms:9.2} ms, {} predictions",
                r.predictions
            );
            if monitoring {
                on.push(ms);
            } else {
                off.push(ms);
            }
        }
    }
    off.sort_by(f64::total_cmp);
    on.sort_by(f64::total_cmp);
    let (a, b) = (off[off.len() / 2], on[on.len() / 2]);
    println!("median {a:.2} ms vs {b:.2} ms, ratio {:.4}", b / a);
}
