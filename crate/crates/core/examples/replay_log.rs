//! Dumps an event log as text, parses it back and replays it through the
//! validator and the energy model.

use taskpred::bench::{generate, BenchmarkKind, BenchmarkSpec, Granularity};
use taskpred::cpu_manager::Policy;
use taskpred::energy::{compute_edp, EnergyConfig};
use taskpred::events::{EventLog, EventSink};
use taskpred::sim::{run_virtual, EngineConfig};
use taskpred::validate::{Validator, ValidatorConfig};

fn main() {
    let spec = BenchmarkSpec::new(BenchmarkKind::StreamLike, Granularity::Coarse);
    let w = generate(&spec, 0).expect("valid spec");
    let cfg = EngineConfig::default();
    let mut log = EventLog::new(cfg.n_cpus, vec![w.types.clone()]);
    run_virtual(&w, Policy::Prediction, &cfg, &mut log).expect("run");

    let text = log.to_text();
    println!("{} records, {} bytes", log.events.len(), text.len());
    let parsed = EventLog::parse(&text, cfg.n_cpus).expect("parse");

    let energy = compute_edp(&parsed, &EnergyConfig::default()).expect("energy");
    println!("energy {:.4}, edp {:.4e}", energy.energy, energy.edp);

    // Workload checks need the task costs, which the text format omits, so
    // the validator reads the in-memory log.
    let mut vc = ValidatorConfig::new(cfg.n_cpus);
    vc.prediction_rules = true;
    let mut v = Validator::new(vc);
    for e in &log.events {
        v.record(e.clone());
    }
    match v.finish() {
        Ok(s) => println!(
            "{} events, {} tasks, {} gated park/resume steps: ok",
            s.events, s.tasks, s.gated_steps
        ),
        Err(violations) => {
            for x in violations.iter().take(10) {
                println!("{x:?}");
            }
            std::process::exit(1);
        }
    }
}
