//! Synthetic benchmark generators.
//!
//! Every generator produces a [`Workload`] whose task durations follow
//! `ns_per_cost * cost * noise`, with `noise` drawn from a mean-one
//! lognormal law (or fixed at 1 when `sigma` is zero).

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use thiserror::Error;

use crate::workload::Workload;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BenchmarkKind {
    CholeskyDag,
    Multisaxpy,
    GaussSeidelBarrier,
    StreamLike,
    TwoPhaseFig1,
    FineGrainStress,
}

impl BenchmarkKind {
    pub const ALL: [BenchmarkKind; 6] = [
        BenchmarkKind::CholeskyDag,
        BenchmarkKind::Multisaxpy,
        BenchmarkKind::GaussSeidelBarrier,
        BenchmarkKind::StreamLike,
        BenchmarkKind::TwoPhaseFig1,
        BenchmarkKind::FineGrainStress,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            BenchmarkKind::CholeskyDag => "cholesky_dag",
            BenchmarkKind::Multisaxpy => "multisaxpy",
            BenchmarkKind::GaussSeidelBarrier => "gauss_seidel_barrier",
            BenchmarkKind::StreamLike => "stream_like",
            BenchmarkKind::TwoPhaseFig1 => "two_phase_fig1",
            BenchmarkKind::FineGrainStress => "fine_grain_stress",
        }
    }
}

impl fmt::Display for BenchmarkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BenchmarkKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown benchmark `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Granularity {
    Fine,
    Coarse,
}

impl FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fine" => Ok(Granularity::Fine),
            "coarse" => Ok(Granularity::Coarse),
            _ => Err(format!("unknown granularity `{s}`")),
        }
    }
}

/// Size parameters; costs are in abstract units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// `tiles x tiles` tile grid; a trsm tile costs `tile_cost`.
    Cholesky { tiles: usize, tile_cost: f64 },
    /// Independent blocks, each a chain of `iterations` saxpy tasks.
    Multisaxpy {
        blocks: usize,
        iterations: usize,
        block_cost: f64,
    },
    /// `steps` timesteps of `width` tasks with cost
    /// `block_cost * (1 + imbalance * u)`, `u` uniform in [0, 1).
    GaussSeidel {
        steps: usize,
        width: usize,
        block_cost: f64,
        imbalance: f64,
    },
    /// `waves` waves of `width` equal-cost tasks.
    Stream {
        waves: usize,
        width: usize,
        task_cost: f64,
    },
    /// Six chains of `alpha_len` tasks; four of them go on for `beta_len`
    /// more tasks and a fifth for `beta_len / 2`.
    TwoPhase {
        alpha_len: usize,
        beta_len: usize,
        task_cost: f64,
    },
    /// `chains` chains of `length` tasks, integer cost uniform in
    /// `min_cost..=max_cost`.
    FineGrain {
        chains: usize,
        length: usize,
        min_cost: u32,
        max_cost: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkSpec {
    pub kind: BenchmarkKind,
    pub granularity: Granularity,
    pub shape: Shape,
    pub ns_per_cost: f64,
    /// Lognormal sigma of the duration noise; 0 gives exact durations.
    pub sigma: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum BenchError {
    #[error("invalid size parameter: {0}")]
    InvalidSize(&'static str),
    #[error("shape does not match benchmark kind {0}")]
    ShapeMismatch(BenchmarkKind),
}

pub const DEFAULT_SIGMA: f64 = 0.1;

impl BenchmarkSpec {
    /// Default sizes for each kind; fine variants use shorter tasks.
    pub fn new(kind: BenchmarkKind, granularity: Granularity) -> Self {
        let fine = granularity == Granularity::Fine;
        let shape = match kind {
            BenchmarkKind::CholeskyDag => Shape::Cholesky {
                tiles: if fine { 24 } else { 12 },
                tile_cost: if fine { 60.0 } else { 400.0 },
            },
            BenchmarkKind::Multisaxpy => Shape::Multisaxpy {
                blocks: 64,
                iterations: 40,
                block_cost: if fine { 60.0 } else { 200.0 },
            },
            BenchmarkKind::GaussSeidelBarrier => Shape::GaussSeidel {
                steps: 100,
                width: 256,
                block_cost: if fine { 40.0 } else { 150.0 },
                imbalance: 1.0,
            },
            BenchmarkKind::StreamLike => Shape::Stream {
                waves: 30,
                width: 256,
                task_cost: if fine { 60.0 } else { 200.0 },
            },
            BenchmarkKind::TwoPhaseFig1 => Shape::TwoPhase {
                alpha_len: 40,
                beta_len: 40,
                task_cost: 100.0,
            },
            BenchmarkKind::FineGrainStress => Shape::FineGrain {
                chains: 6,
                length: 166_667,
                min_cost: 1,
                max_cost: 10,
            },
        };
        Self {
            kind,
            granularity,
            shape,
            ns_per_cost: 1000.0,
            sigma: DEFAULT_SIGMA,
        }
    }

    pub fn with_shape(mut self, shape: Shape) -> Self {
        self.shape = shape;
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn name(&self) -> String {
        if self.granularity == default_granularity(self.kind) {
            self.kind.to_string()
        } else {
            format!("{}_{}", self.kind, granularity_str(self.granularity))
        }
    }
}

fn default_granularity(kind: BenchmarkKind) -> Granularity {
    match kind {
        BenchmarkKind::FineGrainStress => Granularity::Fine,
        _ => Granularity::Coarse,
    }
}

fn granularity_str(g: Granularity) -> &'static str {
    match g {
        Granularity::Fine => "fine",
        Granularity::Coarse => "coarse",
    }
}

/// Parses a name as printed by [`BenchmarkSpec::name`]: a kind, optionally
/// suffixed with `_fine` or `_coarse`.
impl FromStr for BenchmarkSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Ok(kind) = s.parse::<BenchmarkKind>() {
            return Ok(Self::new(kind, default_granularity(kind)));
        }
        for g in [Granularity::Fine, Granularity::Coarse] {
            if let Some(kind) = s
                .strip_suffix(granularity_str(g))
                .and_then(|k| k.strip_suffix('_'))
            {
                if let Ok(kind) = kind.parse::<BenchmarkKind>() {
                    return Ok(Self::new(kind, g));
                }
            }
        }
        Err(format!("unknown benchmark `{s}`"))
    }
}

/// The benchmarks every policy comparison runs over.
pub fn suite() -> Vec<BenchmarkSpec> {
    use BenchmarkKind::*;
    use Granularity::*;
    [
        (CholeskyDag, Coarse),
        (CholeskyDag, Fine),
        (Multisaxpy, Coarse),
        (Multisaxpy, Fine),
        (GaussSeidelBarrier, Coarse),
        (StreamLike, Coarse),
        (TwoPhaseFig1, Coarse),
        (FineGrainStress, Fine),
    ]
    .into_iter()
    .map(|(k, g)| BenchmarkSpec::new(k, g))
    .collect()
}

struct Durations {
    rng: ChaCha8Rng,
    noise: Option<LogNormal<f64>>,
    ns_per_cost: f64,
}

impl Durations {
    fn of(&mut self, cost: f64) -> u64 {
        let factor = match &self.noise {
            Some(d) => d.sample(&mut self.rng),
            None => 1.0,
        };
        (self.ns_per_cost * cost * factor).round() as u64
    }
}

fn positive(v: usize, what: &'static str) -> Result<(), BenchError> {
    if v == 0 {
        Err(BenchError::InvalidSize(what))
    } else {
        Ok(())
    }
}

fn non_negative(v: f64, what: &'static str) -> Result<(), BenchError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(BenchError::InvalidSize(what))
    }
}

/// Builds the task graph for `(spec, seed)`.
pub fn generate(spec: &BenchmarkSpec, seed: u64) -> Result<Workload, BenchError> {
    non_negative(spec.sigma, "sigma")?;
    non_negative(spec.ns_per_cost, "ns_per_cost")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = (spec.sigma > 0.0)
        .then(|| LogNormal::new(-spec.sigma * spec.sigma / 2.0, spec.sigma).expect("valid sigma"));
    // A second stream so that cost draws do not shift when sigma changes.
    let cost_rng = ChaCha8Rng::seed_from_u64(rng.gen());
    let mut d = Durations {
        rng,
        noise,
        ns_per_cost: spec.ns_per_cost,
    };
    let mut w = Workload::new(spec.name());
    match (spec.kind, spec.shape) {
        (BenchmarkKind::CholeskyDag, Shape::Cholesky { tiles, tile_cost }) => {
            positive(tiles, "tiles")?;
            non_negative(tile_cost, "tile_cost")?;
            cholesky(&mut w, &mut d, tiles, tile_cost);
        }
        (
            BenchmarkKind::Multisaxpy,
            Shape::Multisaxpy {
                blocks,
                iterations,
                block_cost,
            },
        ) => {
            positive(blocks, "blocks")?;
            positive(iterations, "iterations")?;
            non_negative(block_cost, "block_cost")?;
            let t = w.add_type("saxpy");
            for _ in 0..blocks {
                let mut prev = None;
                for _ in 0..iterations {
                    let deps: Vec<u32> = prev.into_iter().collect();
                    prev = Some(w.add_task(t, block_cost, d.of(block_cost), &deps, None));
                }
            }
        }
        (
            BenchmarkKind::GaussSeidelBarrier,
            Shape::GaussSeidel {
                steps,
                width,
                block_cost,
                imbalance,
            },
        ) => {
            positive(steps, "steps")?;
            positive(width, "width")?;
            non_negative(block_cost, "block_cost")?;
            non_negative(imbalance, "imbalance")?;
            let mut cost_rng = cost_rng;
            let mut costs = || block_cost * (1.0 + imbalance * cost_rng.gen::<f64>());
            barrier_waves(&mut w, &mut d, "gs_block", steps, width, &mut costs);
        }
        (
            BenchmarkKind::StreamLike,
            Shape::Stream {
                waves,
                width,
                task_cost,
            },
        ) => {
            positive(waves, "waves")?;
            positive(width, "width")?;
            non_negative(task_cost, "task_cost")?;
            barrier_waves(&mut w, &mut d, "stream", waves, width, &mut || task_cost);
        }
        (
            BenchmarkKind::TwoPhaseFig1,
            Shape::TwoPhase {
                alpha_len,
                beta_len,
                task_cost,
            },
        ) => {
            positive(alpha_len, "alpha_len")?;
            positive(beta_len / 2, "beta_len")?;
            non_negative(task_cost, "task_cost")?;
            two_phase(&mut w, &mut d, alpha_len, beta_len, task_cost);
        }
        (
            BenchmarkKind::FineGrainStress,
            Shape::FineGrain {
                chains,
                length,
                min_cost,
                max_cost,
            },
        ) => {
            positive(chains, "chains")?;
            positive(length, "length")?;
            if min_cost > max_cost {
                return Err(BenchError::InvalidSize("min_cost > max_cost"));
            }
            let mut cost_rng = cost_rng;
            let t = w.add_type("fine");
            // Each task spawns its successor, so only a few tasks are alive.
            for _ in 0..chains {
                let mut prev: Option<u32> = None;
                for _ in 0..length {
                    let cost = cost_rng.gen_range(min_cost..=max_cost) as f64;
                    let deps: Vec<u32> = prev.into_iter().collect();
                    prev = Some(w.add_task(t, cost, d.of(cost), &deps, prev));
                }
            }
        }
        (kind, _) => return Err(BenchError::ShapeMismatch(kind)),
    }
    debug_assert!(w.validate().is_ok());
    Ok(w)
}

fn cholesky(w: &mut Workload, d: &mut Durations, n: usize, tile_cost: f64) {
    let potrf = w.add_type("potrf");
    let trsm = w.add_type("trsm");
    let syrk = w.add_type("syrk");
    let gemm = w.add_type("gemm");
    let mut writer: Vec<Option<u32>> = vec![None; n * n];
    let mut task =
        |w: &mut Workload, ty: u32, cost: f64, reads: &[(usize, usize)], out: (usize, usize)| {
            let mut deps: Vec<u32> = reads
                .iter()
                .chain(std::iter::once(&out))
                .filter_map(|&(i, j)| writer[i * n + j])
                .collect();
            deps.sort_unstable();
            deps.dedup();
            let id = w.add_task(ty, cost, d.of(cost), &deps, None);
            writer[out.0 * n + out.1] = Some(id);
        };
    for k in 0..n {
        task(w, potrf, tile_cost / 3.0, &[], (k, k));
        for i in k + 1..n {
            task(w, trsm, tile_cost, &[(k, k)], (i, k));
        }
        for i in k + 1..n {
            task(w, syrk, tile_cost, &[(i, k)], (i, i));
            for j in k + 1..i {
                task(w, gemm, 2.0 * tile_cost, &[(i, k), (j, k)], (i, j));
            }
        }
    }
}

/// A chain of zero-cost barrier tasks. Barrier `s` depends on every task of
/// step `s - 1` and spawns step `s` together with barrier `s + 1`.
fn barrier_waves(
    w: &mut Workload,
    d: &mut Durations,
    label: &str,
    steps: usize,
    width: usize,
    cost: &mut dyn FnMut() -> f64,
) {
    let work = w.add_type(label);
    let barrier = w.add_type("barrier");
    let mut gate = w.add_task(barrier, 0.0, 0, &[], None);
    for s in 0..steps {
        let wave: Vec<u32> = (0..width)
            .map(|_| {
                let c = cost();
                w.add_task(work, c, d.of(c), &[], Some(gate))
            })
            .collect();
        if s + 1 < steps {
            gate = w.add_task(barrier, 0.0, 0, &wave, Some(gate));
        }
    }
}

/// Six chains, five of which continue into the second phase; the fifth
/// continuation is half as long as the others.
fn two_phase(w: &mut Workload, d: &mut Durations, alpha: usize, beta: usize, cost: f64) {
    let a = w.add_type("phase_alpha");
    let b = w.add_type("phase_beta");
    for chain in 0..6 {
        let mut prev: Option<u32> = None;
        for _ in 0..alpha {
            let deps: Vec<u32> = prev.into_iter().collect();
            prev = Some(w.add_task(a, cost, d.of(cost), &deps, prev));
        }
        let len = match chain {
            0..=3 => beta,
            4 => beta / 2,
            _ => 0,
        };
        for _ in 0..len {
            let deps: Vec<u32> = prev.into_iter().collect();
            prev = Some(w.add_task(b, cost, d.of(cost), &deps, prev));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cholesky_spec(tiles: usize) -> BenchmarkSpec {
        BenchmarkSpec::new(BenchmarkKind::CholeskyDag, Granularity::Coarse).with_shape(
            Shape::Cholesky {
                tiles,
                tile_cost: 3.0,
            },
        )
    }

    #[test]
    fn cholesky_four_tiles() {
        let w = generate(&cholesky_spec(4), 1).unwrap();
        assert_eq!(w.len(), 20);
        assert_eq!(w.count_of("potrf"), 4);
        assert_eq!(w.count_of("trsm"), 6);
        assert_eq!(w.count_of("syrk"), 6);
        assert_eq!(w.count_of("gemm"), 4);
    }

    /// Counts by enumerating the right-looking loop nest directly.
    fn brute_counts(n: usize) -> [usize; 4] {
        let mut c = [0; 4];
        for k in 0..n {
            c[0] += 1;
            for i in k + 1..n {
                c[1] += 1;
                c[2] += 1;
                for j in k + 1..n {
                    if j < i {
                        c[3] += 1;
                    }
                }
            }
        }
        c
    }

    #[test]
    fn cholesky_counts_match_closed_form() {
        for n in 1..=16 {
            let w = generate(&cholesky_spec(n), 0).unwrap();
            let brute = brute_counts(n);
            let closed = [
                n,
                n * (n - 1) / 2,
                n * (n - 1) / 2,
                n * (n - 1) * (n.saturating_sub(2)) / 6,
            ];
            assert_eq!(brute, closed, "n={n}");
            let got = ["potrf", "trsm", "syrk", "gemm"].map(|l| w.count_of(l));
            assert_eq!(got, closed, "n={n}");
            assert!(w.validate().is_ok());
        }
    }

    #[test]
    fn cholesky_dependencies_follow_tiles() {
        let w = generate(&cholesky_spec(2), 0).unwrap();
        // potrf(0), trsm(1,0), syrk(1,1), potrf(1)
        assert_eq!(w.deps(0), &[] as &[u32]);
        assert_eq!(w.deps(1), &[0]);
        assert_eq!(w.deps(2), &[1]);
        assert_eq!(w.deps(3), &[2]);
    }

    #[test]
    fn stream_waves() {
        let spec = BenchmarkSpec::new(BenchmarkKind::StreamLike, Granularity::Coarse).with_shape(
            Shape::Stream {
                waves: 3,
                width: 64,
                task_cost: 1.0,
            },
        );
        let w = generate(&spec, 0).unwrap();
        assert_eq!(w.count_of("stream"), 192);
        assert_eq!(w.count_of("barrier"), 3);
        let children = w.children();
        let gates: Vec<u32> = (0..w.len() as u32)
            .filter(|&i| w.types[w.task(i).task_type as usize] == "barrier")
            .collect();
        for &g in &gates {
            let stream = children[g as usize]
                .iter()
                .filter(|&&c| w.types[w.task(c).task_type as usize] == "stream")
                .count();
            assert_eq!(stream, 64);
        }
        for &g in &gates[1..] {
            assert_eq!(w.deps(g).len(), 64);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        for kind in BenchmarkKind::ALL {
            if kind == BenchmarkKind::FineGrainStress {
                continue;
            }
            let spec = BenchmarkSpec::new(kind, Granularity::Coarse);
            assert_eq!(generate(&spec, 7).unwrap(), generate(&spec, 7).unwrap());
            assert_ne!(generate(&spec, 7).unwrap(), generate(&spec, 8).unwrap());
        }
    }

    #[test]
    fn exact_mode_is_linear() {
        let spec = BenchmarkSpec::new(BenchmarkKind::GaussSeidelBarrier, Granularity::Coarse)
            .with_sigma(0.0);
        let w = generate(&spec, 3).unwrap();
        assert!(w.len() >= 25_600);
        for t in w.tasks() {
            assert_eq!(t.duration_ns, (1000.0 * t.cost).round() as u64);
        }
    }

    #[test]
    fn noise_has_unit_mean() {
        let spec = BenchmarkSpec::new(BenchmarkKind::StreamLike, Granularity::Coarse).with_shape(
            Shape::Stream {
                waves: 40,
                width: 1000,
                task_cost: 100.0,
            },
        );
        let w = generate(&spec, 11).unwrap();
        let stream: Vec<f64> = w
            .tasks()
            .iter()
            .filter(|t| t.cost > 0.0)
            .map(|t| t.duration_ns as f64 / (1000.0 * t.cost))
            .collect();
        let mean = stream.iter().sum::<f64>() / stream.len() as f64;
        assert!((mean - 1.0).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn fine_grain_has_a_million_tasks() {
        let w = generate(
            &BenchmarkSpec::new(BenchmarkKind::FineGrainStress, Granularity::Fine),
            0,
        )
        .unwrap();
        assert!(w.len() >= 1_000_000);
        assert!(w.tasks().iter().all(|t| (1.0..=10.0).contains(&t.cost)));
    }

    #[test]
    fn two_phase_shape() {
        let w = generate(
            &BenchmarkSpec::new(BenchmarkKind::TwoPhaseFig1, Granularity::Coarse),
            0,
        )
        .unwrap();
        assert_eq!(w.count_of("phase_alpha"), 240);
        assert_eq!(w.count_of("phase_beta"), 180);
    }

    #[test]
    fn rejects_bad_sizes() {
        let spec = cholesky_spec(0);
        assert_eq!(generate(&spec, 0), Err(BenchError::InvalidSize("tiles")));
        let spec = BenchmarkSpec::new(BenchmarkKind::StreamLike, Granularity::Coarse).with_shape(
            Shape::Cholesky {
                tiles: 2,
                tile_cost: 1.0,
            },
        );
        assert_eq!(
            generate(&spec, 0),
            Err(BenchError::ShapeMismatch(BenchmarkKind::StreamLike))
        );
    }

    #[test]
    fn names_round_trip() {
        for spec in suite() {
            assert_eq!(spec.name().parse::<BenchmarkSpec>().unwrap(), spec);
        }
        assert_eq!(
            "stream_like_fine"
                .parse::<BenchmarkSpec>()
                .unwrap()
                .granularity,
            Granularity::Fine
        );
        assert!("stream_like_medium".parse::<BenchmarkSpec>().is_err());
    }
}
