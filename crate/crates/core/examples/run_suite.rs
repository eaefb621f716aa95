//! Runs a small configuration through the harness and prints the mean rows.
//! Result files go to a directory given as the first argument, or to a
//! temporary one.

use taskpred::harness::{run_suite, RunConfig};

const CONFIG: &str = "
# two benchmarks, three policies, three repetitions
bench = two_phase_fig1, stream_like
policy = busy, idle, prediction
reps = 3
seed = 10
";

fn main() {
    let mut cfg = RunConfig::default();
    cfg.apply_text(CONFIG).expect("valid config");
    let tmp;
    cfg.out_dir = match std::env::args().nth(1) {
        Some(d) => d.into(),
        None => {
            tmp = std::env::temp_dir().join("taskpred-run-suite");
            tmp.clone()
        }
    };
    let res = run_suite(&cfg).expect("suite");
    println!("{} runs", res.runs.len());
    for m in &res.means {
        println!(
            "{:16} {:10} makespan {:9.1} µs  edp {:.4e}  accuracy {}",
            m.bench,
            m.policy,
            m.makespan_us,
            m.edp,
            m.accuracy_pct.map_or("NA".into(), |a| format!("{a:.2}%"))
        );
    }
    println!("files in {}", cfg.out_dir.display());
}
