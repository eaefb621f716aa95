//! Two-phase workload: six CPUs worth of work, then about four and a half.
//! Prints the number of CPUs each policy holds, one character per
//! prediction period.

use taskpred::bench::{generate, BenchmarkKind, BenchmarkSpec, Granularity};
use taskpred::cpu_manager::Policy;
use taskpred::events::{EventKind, EventLog};
use taskpred::sim::{run_virtual, EngineConfig};

fn main() {
    let spec = BenchmarkSpec::new(BenchmarkKind::TwoPhaseFig1, Granularity::Coarse);
    let w = generate(&spec, 1).expect("valid spec");
    let cfg = EngineConfig::default().with_cpus(8);
    let period = cfg.predictor.period_ns();
    for policy in [Policy::Busy, Policy::Idle, Policy::Prediction] {
        let mut log = EventLog::new(8, vec![w.types.clone()]);
        let r = run_virtual(&w, policy, &cfg, &mut log).expect("run");
        let mut held = 8i64;
        let mut line = String::new();
        let mut transitions = 0;
        let mut next = 0;
        for e in &log.events {
            while e.time_ns >= next {
                line.push(char::from_digit(held as u32, 10).unwrap_or('?'));
                next += period;
            }
            match e.kind {
                EventKind::Park => held -= 1,
                EventKind::Resume => held += 1,
                _ => continue,
            }
            transitions += 1;
        }
        println!(
            "{:10} makespan {:7.1} µs, {transitions:4} park/resume",
            policy.name(),
            r.makespan_ns as f64 / 1000.0
        );
        println!("  {line}");
    }
}
