//! Per-type prediction accuracy with exact and noisy task durations.

use taskpred::bench::{generate, BenchmarkKind, BenchmarkSpec, Granularity};
use taskpred::cpu_manager::Policy;
use taskpred::sim::{run_virtual, EngineConfig};

fn main() {
    for sigma in [0.0, 0.1, 0.3] {
        let spec = BenchmarkSpec::new(BenchmarkKind::GaussSeidelBarrier, Granularity::Coarse)
            .with_sigma(sigma);
        let w = generate(&spec, 0).expect("valid spec");
        let r =
            run_virtual(&w, Policy::Prediction, &EngineConfig::default(), &mut ()).expect("run");
        let rt = &r.runtimes[0];
        println!("# {} tasks, duration noise sigma {sigma}", w.len());
        rt.accuracy.write_csv(std::io::stdout()).expect("stdout");
        for (label, u) in rt.labels.iter().zip(&rt.unitary) {
            if let Some(alpha) = u.value() {
                println!(
                    "# {label}: {alpha:.4} µs per cost unit after {} tasks",
                    u.observations()
                );
            }
        }
    }
}
