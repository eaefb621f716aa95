use std::collections::HashMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use taskpred::arbiter::SharingPolicy;
use taskpred::cpu_manager::{Action, CpuManager, Policy, SlotState, Verdict};
use taskpred::energy::{EnergyConfig, EnergyMeter};
use taskpred::events::EventLog;
use taskpred::monitoring::{Monitor, MonitorConfig, Snapshot, TypeStats, COST_SCALE};
use taskpred::predictor::{get_cpu_prediction, PredictorConfig};
use taskpred::sim::{run_shared, run_virtual, EngineConfig};
use taskpred::task::{Kernel, TaskId, TaskInfo, TaskTypeId};
use taskpred::validate::{Validator, ValidatorConfig};
use taskpred::workload::Workload;

const POLICIES: [Policy; 4] = [
    Policy::Busy,
    Policy::Idle,
    Policy::Hybrid { spin_budget: 100 },
    Policy::Prediction,
];

/// Random nested DAG. Roots depend on earlier roots; children depend on
/// roots or on earlier siblings, so every dependency exists when a task is
/// created.
fn random_workload(seed: u64, n: usize, ns_per_cost: u64) -> Workload {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Workload::new("random");
    let types: Vec<u32> = (0..rng.gen_range(1..4))
        .map(|j| w.add_type(format!("t{j}")))
        .collect();
    let mut roots: Vec<u32> = Vec::new();
    let mut siblings: HashMap<u32, Vec<u32>> = HashMap::new();
    for _ in 0..n {
        let ty = types[rng.gen_range(0..types.len())];
        let cost = rng.gen_range(1..30) as f64;
        let parent =
            (!roots.is_empty() && rng.gen_bool(0.4)).then(|| roots[rng.gen_range(0..roots.len())]);
        let pool: Vec<u32> = match parent {
            Some(p) => roots
                .iter()
                .chain(siblings.get(&p).into_iter().flatten())
                .copied()
                .collect(),
            None => roots.clone(),
        };
        let mut deps = Vec::new();
        for _ in 0..rng.gen_range(0..3) {
            if !pool.is_empty() {
                let d = pool[rng.gen_range(0..pool.len())];
                if !deps.contains(&d) {
                    deps.push(d);
                }
            }
        }
        let id = w.add_task(ty, cost, cost as u64 * ns_per_cost, &deps, parent);
        match parent {
            Some(p) => siblings.entry(p).or_default().push(id),
            None => roots.push(id),
        }
    }
    w
}

fn validate(
    log: &EventLog,
    n_cpus: usize,
    n_runtimes: usize,
    prediction: bool,
) -> Result<(), String> {
    let mut cfg = ValidatorConfig::new(n_cpus);
    cfg.n_runtimes = n_runtimes;
    cfg.prediction_rules = prediction;
    let mut v = Validator::new(cfg);
    for e in &log.events {
        taskpred::events::EventSink::record(&mut v, e.clone());
    }
    v.finish()
        .map(|_| ())
        .map_err(|e| format!("{:?}", &e[..e.len().min(3)]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_run_replays_cleanly(seed in any::<u64>(), n in 1usize..80, cpus in 1usize..9) {
        let w = random_workload(seed, n, 1000);
        let cfg = EngineConfig::default().with_cpus(cpus);
        for policy in POLICIES {
            let mut log = EventLog::new(cpus, vec![w.types.clone()]);
            let r = run_virtual(&w, policy, &cfg, &mut log).unwrap();
            prop_assert_eq!(r.runtimes[0].tasks, w.len());
            prop_assert!(r.runtimes[0].final_snapshot.is_quiescent());
            let res = validate(&log, cpus, 1, policy == Policy::Prediction);
            prop_assert!(res.is_ok(), "{}: {:?}", policy.name(), res);
        }
    }

    #[test]
    fn shared_runs_replay_cleanly(seed in any::<u64>(), n in 1usize..60, half in 1usize..5) {
        let a = random_workload(seed, n, 1000);
        let b = random_workload(seed ^ 0x5555, n, 700);
        let cpus = 2 * half;
        let cfg = EngineConfig::default().with_cpus(cpus);
        for sp in [SharingPolicy::Lewi, SharingPolicy::Hybrid { spin_budget: 100 }, SharingPolicy::Prediction] {
            let mut log = EventLog::new(cpus, vec![a.types.clone(), b.types.clone()]);
            let r = run_shared([&a, &b], sp, &cfg, &mut log).unwrap();
            prop_assert_eq!(r.runtimes[0].tasks + r.runtimes[1].tasks, 2 * n);
            let res = validate(&log, cpus, 2, sp == SharingPolicy::Prediction);
            prop_assert!(res.is_ok(), "{}: {:?}", sp.name(), res);
        }
    }

    #[test]
    fn virtual_runs_are_deterministic(seed in any::<u64>(), n in 1usize..60) {
        let w = random_workload(seed, n, 1000);
        let cfg = EngineConfig::default().with_cpus(4);
        for policy in POLICIES {
            let mut a = EventLog::new(4, vec![w.types.clone()]);
            let mut b = EventLog::new(4, vec![w.types.clone()]);
            run_virtual(&w, policy, &cfg, &mut a).unwrap();
            run_virtual(&w, policy, &cfg, &mut b).unwrap();
            prop_assert_eq!(a.to_text(), b.to_text());
        }
    }

    /// Accuracy is perfect once a type has been observed when durations
    /// are exactly proportional to cost.
    #[test]
    fn exact_durations_are_predicted_exactly(seed in any::<u64>(), n in 2usize..80) {
        let w = random_workload(seed, n, 1000);
        let r = run_virtual(&w, Policy::Prediction, &EngineConfig::default().with_cpus(4), &mut ()).unwrap();
        if let Some(acc) = r.runtimes[0].accuracy.global.avg_accuracy_pct {
            prop_assert!((acc - 100.0).abs() < 1e-9, "{}", acc);
        }
    }

    #[test]
    fn energy_scales_with_power(seed in any::<u64>(), n in 1usize..50, c in 0.01f64..100.0) {
        let w = random_workload(seed, n, 1000);
        let cfg = EngineConfig::default().with_cpus(4);
        let mut base = Vec::new();
        let mut scaled = Vec::new();
        for policy in [Policy::Busy, Policy::Idle, Policy::Prediction] {
            let mut m1 = EnergyMeter::new(4, EnergyConfig::default());
            let mut m2 = EnergyMeter::new(4, EnergyConfig::default().scaled(c));
            run_virtual(&w, policy, &cfg, &mut (&mut m1, &mut m2)).unwrap();
            let (e1, e2) = (m1.finish().unwrap(), m2.finish().unwrap());
            prop_assert!((e2.energy - c * e1.energy).abs() <= 1e-9 * e2.energy.max(1e-12));
            prop_assert!((e2.edp - c * e1.edp).abs() <= 1e-9 * e2.edp.max(1e-12));
            base.push(e1.edp);
            scaled.push(e2.edp);
        }
        // Ties may break differently after rounding; compare strict orderings.
        for i in 0..3 {
            for j in 0..3 {
                if base[i] < base[j] * (1.0 - 1e-9) {
                    prop_assert!(scaled[i] < scaled[j]);
                }
            }
        }
    }

    #[test]
    fn prediction_is_monotone_in_workload(
        types in prop::collection::vec((0.0f64..2000.0, 0.0f64..2000.0, prop::option::of(0.0f64..3.0), 0u64..30), 0..8),
        bump_type in 0usize..8,
        bump in 0.0f64..5000.0,
        n in 1usize..64,
    ) {
        let snap = |extra: f64| Snapshot {
            types: types
                .iter()
                .enumerate()
                .map(|(j, &(r, e, a, m))| TypeStats {
                    task_type: TaskTypeId(j as u32),
                    ready: if j == bump_type { r + extra } else { r },
                    executing: e,
                    unitary_cost: a,
                    instances: m,
                    observations: u64::from(a.is_some()),
                })
                .collect(),
        };
        let cfg = PredictorConfig::default();
        let before = get_cpu_prediction(&snap(0.0), &cfg, n);
        let after = get_cpu_prediction(&snap(bump), &cfg, n);
        prop_assert!(after.target_cpus >= before.target_cpus);
        prop_assert_eq!(get_cpu_prediction(&snap(0.0), &cfg, n), before.clone());
        let live: u64 = types.iter().map(|t| t.3).sum();
        if live >= 1 {
            prop_assert!(before.target_cpus as u64 <= live);
        }
    }

    /// Prediction-policy steps only ever move the active count toward the
    /// target: an add never overshoots it and a park never undershoots it.
    #[test]
    fn corrections_are_one_sided(
        n in 1usize..16,
        ops in prop::collection::vec((0u8..3, 0usize..16, 0usize..20), 1..200),
    ) {
        let mgr = CpuManager::new(Policy::Prediction, n);
        for (op, slot, k) in ops {
            let slot = slot % n;
            let before = mgr.active();
            match op {
                0 => mgr.publish_target(k.min(n)),
                1 => {
                    let target = mgr.target();
                    if let Verdict::Park = mgr.execute_policy(slot, Action::Poll) {
                        prop_assert!(before > target);
                        prop_assert_eq!(mgr.active(), before - 1);
                        prop_assert!(mgr.active() >= target);
                    }
                }
                _ => {
                    let target = mgr.target();
                    if let Verdict::Resumed(slots) = mgr.execute_policy(slot, Action::Add(k)) {
                        prop_assert_eq!(mgr.active(), before + slots.len());
                        if !slots.is_empty() {
                            prop_assert!(mgr.active() <= target);
                        }
                    }
                }
            }
            let slots = mgr.slots();
            let occupied = slots.iter().filter(|s| **s == SlotState::Occupied).count();
            prop_assert_eq!(occupied, mgr.active());
            prop_assert_eq!(slots.len(), n);
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Phase {
    Created,
    Ready,
    Running,
    Done,
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Snapshots agree with a direct recount of live tasks after any
    /// interleaving of hooks.
    #[test]
    fn snapshot_matches_recount(seed in any::<u64>(), n in 1usize..40, steps in 1usize..300) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_types = 3;
        let m = Monitor::new(n_types, 4, MonitorConfig::default());
        let tasks: Vec<TaskInfo> = (0..n)
            .map(|i| TaskInfo {
                id: TaskId(i as u64),
                task_type: TaskTypeId(rng.gen_range(0..n_types as u32)),
                cost: rng.gen_range(0.0..50.0),
                parent: None,
                kernel: Kernel::new(1000),
            })
            .collect();
        let mut phase = vec![Phase::Created; n];
        let mut ratios: Vec<Vec<f64>> = vec![Vec::new(); n_types];
        for t in &tasks {
            m.on_create(t);
        }
        for _ in 0..steps {
            let i = rng.gen_range(0..n);
            let t = &tasks[i];
            let shard = rng.gen_range(0..4);
            phase[i] = match phase[i] {
                Phase::Created => { m.on_ready(shard, t); Phase::Ready }
                Phase::Ready => { m.on_start(shard, t); Phase::Running }
                Phase::Running => {
                    let ns = rng.gen_range(1..100_000);
                    m.on_finish(shard, t, ns);
                    if t.cost > 0.0 {
                        ratios[t.task_type.index()].push(ns as f64 / 1000.0 / t.cost);
                    }
                    Phase::Done
                }
                Phase::Done => Phase::Done,
            };
        }
        let snap = m.snapshot();
        for (j, obs) in ratios.iter().enumerate() {
            let of = |p: Phase| -> f64 {
                tasks.iter().zip(&phase)
                    .filter(|(t, ph)| t.task_type.index() == j && **ph == p)
                    .map(|(t, _)| (t.cost * COST_SCALE).round() / COST_SCALE)
                    .sum()
            };
            let live = tasks.iter().zip(&phase)
                .filter(|(t, ph)| t.task_type.index() == j && matches!(ph, Phase::Ready | Phase::Running))
                .count() as u64;
            let s = &snap.types[j];
            prop_assert!((s.ready - of(Phase::Ready)).abs() < 1e-6);
            prop_assert!((s.executing - of(Phase::Running)).abs() < 1e-6);
            prop_assert_eq!(s.instances, live);
            match s.unitary_cost {
                None => prop_assert!(obs.is_empty()),
                Some(alpha) => {
                    let lo = obs.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = obs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(alpha >= lo - 1e-9 && alpha <= hi + 1e-9);
                }
            }
        }
    }
}

#[test]
fn prediction_holds_no_more_cpu_time_than_busy() {
    for seed in 0..40 {
        let w = random_workload(seed, 120, 1000);
        let cfg = EngineConfig::default().with_cpus(6);
        let held = |policy| {
            let mut m = EnergyMeter::new(6, EnergyConfig::default());
            let r = run_virtual(&w, policy, &cfg, &mut m).unwrap();
            let e = m.finish_at(r.makespan_ns).unwrap();
            e.busy_cpu_s + e.spin_cpu_s
        };
        let (p, b) = (held(Policy::Prediction), held(Policy::Busy));
        assert!(p <= b, "seed {seed}: prediction {p} busy {b}");
    }
}
