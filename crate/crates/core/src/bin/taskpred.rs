use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use taskpred::harness::{run_suite, HarnessError, Mode, RunConfig};

/// Runs benchmark suites under the CPU-manager policies and writes CSV
/// results. Flags override the configuration file.
#[derive(Debug, Parser)]
#[command(name = "taskpred", version)]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated benchmark names, or `suite`.
    #[arg(long)]
    bench: Option<String>,
    /// Comma-separated policies: busy, idle, hybrid[:budget], prediction.
    #[arg(long)]
    policy: Option<String>,
    /// `virtual` or `real`.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    cpus: Option<String>,
    #[arg(long)]
    pred_rate_us: Option<String>,
    #[arg(long)]
    ema_decay: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    reps: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
    /// Write one event log per run.
    #[arg(long)]
    emit_trace: bool,
    /// Run each benchmark next to this one, sharing CPUs.
    #[arg(long)]
    share_with: Option<String>,
    /// Comma-separated sharing policies: lewi, hybrid[:budget], prediction.
    #[arg(long)]
    share_policy: Option<String>,
    /// `compare` or `overhead`.
    #[arg(long)]
    mode: Option<String>,
    /// Lognormal sigma of task durations; 0 for exact durations.
    #[arg(long)]
    sigma: Option<String>,
}

fn config(cli: &Cli) -> Result<RunConfig, HarnessError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    let flags = [
        ("bench", &cli.bench),
        ("policy", &cli.policy),
        ("backend", &cli.backend),
        ("cpus", &cli.cpus),
        ("pred-rate-us", &cli.pred_rate_us),
        ("ema-decay", &cli.ema_decay),
        ("seed", &cli.seed),
        ("reps", &cli.reps),
        ("out-dir", &cli.out_dir),
        ("share-with", &cli.share_with),
        ("share-policy", &cli.share_policy),
        ("mode", &cli.mode),
        ("sigma", &cli.sigma),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    if cli.emit_trace {
        cfg.emit_trace = true;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = config(&cli).and_then(|cfg| run_suite(&cfg).map(|r| (cfg, r)));
    match result {
        Ok((cfg, res)) => {
            if cfg.mode == Mode::Overhead {
                for r in &res.overhead {
                    println!(
                        "{:24} busy {:>12.1} us  busy+monitoring {:>12.1} us  ratio {:.4}",
                        r.bench, r.busy_us, r.busy_monitoring_us, r.ratio
                    );
                }
            } else {
                for m in &res.means {
                    println!(
                        "{:28} {:18} makespan {:>12.1} us  energy {:>10.4}  edp {:.6e}",
                        m.bench, m.policy, m.makespan_us, m.energy, m.edp
                    );
                }
            }
            println!("results in {}", cfg.out_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
