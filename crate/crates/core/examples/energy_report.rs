//! Energy and EDP of each policy on one benchmark, as CSV on stdout.
//!
//! `cargo run --example energy_report -- [benchmark] [seed]`

use taskpred::bench::{generate, BenchmarkSpec};
use taskpred::cpu_manager::Policy;
use taskpred::energy::{write_energy_csv, EnergyConfig, EnergyMeter, EnergyRow};
use taskpred::sim::{run_virtual, EngineConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let spec: BenchmarkSpec = args
        .next()
        .unwrap_or_else(|| "cholesky_dag".into())
        .parse()
        .unwrap_or_else(|e| panic!("{e}"));
    let seed = args.next().map_or(0, |s| s.parse().expect("seed"));
    let w = generate(&spec, seed).expect("valid spec");
    let cfg = EngineConfig::default();
    let mut rows = Vec::new();
    for policy in [
        Policy::Busy,
        Policy::Idle,
        Policy::Hybrid {
            spin_budget: Policy::DEFAULT_SPIN_BUDGET,
        },
        Policy::Prediction,
    ] {
        let mut meter = EnergyMeter::new(cfg.n_cpus, EnergyConfig::default());
        let r = run_virtual(&w, policy, &cfg, &mut meter).expect("run");
        let e = meter.finish_at(r.makespan_ns).expect("well-formed log");
        eprintln!(
            "{:10} busy {:.4} cpu-s, spinning {:.4} cpu-s, idle {:.4} cpu-s",
            policy.name(),
            e.busy_cpu_s,
            e.spin_cpu_s,
            e.idle_cpu_s
        );
        rows.push(EnergyRow {
            run_id: format!("{}-s{seed}", spec.name()),
            policy: policy.name().into(),
            makespan_us: r.makespan_ns as f64 / 1000.0,
            energy: e.energy,
            edp: e.edp,
        });
    }
    write_energy_csv(std::io::stdout(), &rows).expect("stdout");
}
