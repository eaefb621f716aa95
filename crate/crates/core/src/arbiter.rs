//! In-process CPU sharing arbiter for two runtime instances.
//!
//! Every CPU has an owner and exactly one holder. An owner may lend an
//! unused CPU to the shared pool; the peer may acquire pooled CPUs, and the
//! owner may reclaim a borrowed CPU, which the borrower hands back at its
//! next poll boundary. Each entry point counts as one call.

use std::io;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use thiserror::Error;

pub type RuntimeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SharingPolicy {
    /// Lend on the first empty poll, acquire whenever work is added.
    Lewi,
    /// Lend after `spin_budget` consecutive empty polls.
    Hybrid { spin_budget: u32 },
    /// Lend only above the predicted target; acquire once per prediction.
    Prediction,
}

impl SharingPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            SharingPolicy::Lewi => "lewi",
            SharingPolicy::Hybrid { .. } => "hybrid",
            SharingPolicy::Prediction => "prediction",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpuState {
    HeldByOwner,
    /// In the pool, available to either runtime. The owner stays the holder.
    Lent,
    /// Held by the peer of the owner.
    Borrowed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CpuEntry {
    pub owner: RuntimeId,
    pub holder: RuntimeId,
    pub state: CpuState,
    pub reclaim_pending: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CallCounters {
    pub lend: u64,
    pub acquire: u64,
    pub reclaim: u64,
    pub cpus_transferred: u64,
}

impl CallCounters {
    pub fn total(&self) -> u64 {
        self.lend + self.acquire + self.reclaim
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ArbiterError {
    #[error("runtime {runtime} does not hold cpu {cpu}")]
    NotHolder { runtime: RuntimeId, cpu: usize },
    #[error("cpu {0} is already lent")]
    AlreadyLent(usize),
    #[error("unknown cpu {0}")]
    UnknownCpu(usize),
}

#[derive(Debug)]
pub struct Arbiter {
    cpus: Vec<Mutex<CpuEntry>>,
    counters: Vec<Mutex<CallCounters>>,
    call_latency: Duration,
    burn_latency: bool,
}

impl Arbiter {
    pub const DEFAULT_CALL_LATENCY: Duration = Duration::from_micros(1);

    /// `owners[cpu]` is the runtime owning that CPU.
    pub fn new(owners: &[RuntimeId]) -> Self {
        let n_runtimes = owners.iter().copied().max().map_or(0, |m| m + 1).max(2);
        Self {
            cpus: owners
                .iter()
                .map(|&owner| {
                    Mutex::new(CpuEntry {
                        owner,
                        holder: owner,
                        state: CpuState::HeldByOwner,
                        reclaim_pending: false,
                    })
                })
                .collect(),
            counters: (0..n_runtimes)
                .map(|_| Mutex::new(CallCounters::default()))
                .collect(),
            call_latency: Self::DEFAULT_CALL_LATENCY,
            burn_latency: false,
        }
    }

    /// Splits `n_cpus` in two halves, the first owned by runtime 0.
    pub fn split(n_cpus: usize) -> Self {
        let owners: Vec<_> = (0..n_cpus).map(|c| usize::from(c >= n_cpus / 2)).collect();
        Self::new(&owners)
    }

    pub fn with_call_latency(mut self, latency: Duration) -> Self {
        self.call_latency = latency;
        self
    }

    /// Make each entry point spin for the call latency on the calling
    /// thread. Off by default; the virtual engine bills latency itself.
    pub fn burn_latency(mut self, burn: bool) -> Self {
        self.burn_latency = burn;
        self
    }

    pub fn call_latency(&self) -> Duration {
        self.call_latency
    }

    pub fn n_cpus(&self) -> usize {
        self.cpus.len()
    }

    pub fn entry(&self, cpu: usize) -> CpuEntry {
        *self.cpus[cpu].lock().unwrap()
    }

    pub fn counters(&self, runtime: RuntimeId) -> CallCounters {
        *self.counters[runtime].lock().unwrap()
    }

    pub fn total_calls(&self) -> u64 {
        (0..self.counters.len())
            .map(|r| self.counters(r).total())
            .sum()
    }

    fn burn(&self) {
        if self.burn_latency {
            let start = Instant::now();
            while start.elapsed() < self.call_latency {
                std::hint::spin_loop();
            }
        }
    }

    fn count(&self, runtime: RuntimeId, f: impl FnOnce(&mut CallCounters)) {
        f(&mut self.counters[runtime].lock().unwrap());
    }

    /// Puts a CPU held by `runtime` into the shared pool.
    pub fn lend_cpu(&self, runtime: RuntimeId, cpu: usize) -> Result<(), ArbiterError> {
        self.burn();
        let slot = self.cpus.get(cpu).ok_or(ArbiterError::UnknownCpu(cpu))?;
        let mut e = slot.lock().unwrap();
        if e.holder != runtime {
            return Err(ArbiterError::NotHolder { runtime, cpu });
        }
        if e.state == CpuState::Lent {
            return Err(ArbiterError::AlreadyLent(cpu));
        }
        e.state = CpuState::Lent;
        e.holder = e.owner;
        e.reclaim_pending = false;
        drop(e);
        self.count(runtime, |c| c.lend += 1);
        Ok(())
    }

    /// Like [`Arbiter::lend_cpu`] but not counted as a call. Used when a
    /// runtime shuts down and gives every CPU it holds back to the pool.
    pub fn release_cpu(&self, runtime: RuntimeId, cpu: usize) -> Result<(), ArbiterError> {
        let slot = self.cpus.get(cpu).ok_or(ArbiterError::UnknownCpu(cpu))?;
        let mut e = slot.lock().unwrap();
        if e.holder != runtime || e.state == CpuState::Lent {
            return Err(ArbiterError::NotHolder { runtime, cpu });
        }
        e.state = CpuState::Lent;
        e.holder = e.owner;
        e.reclaim_pending = false;
        Ok(())
    }

    /// Takes up to `count` pooled CPUs in one call, the caller's own CPUs
    /// first, then the peer's, lowest index first.
    pub fn acquire_cpus(&self, runtime: RuntimeId, count: usize) -> Vec<usize> {
        assert!(count >= 1, "acquire_cpus needs a positive count");
        self.burn();
        let mut acquired = Vec::new();
        for own_first in [true, false] {
            for (cpu, slot) in self.cpus.iter().enumerate() {
                if acquired.len() == count {
                    break;
                }
                let mut e = slot.lock().unwrap();
                if e.state != CpuState::Lent || (e.owner == runtime) != own_first {
                    continue;
                }
                e.holder = runtime;
                e.state = if e.owner == runtime {
                    CpuState::HeldByOwner
                } else {
                    CpuState::Borrowed
                };
                acquired.push(cpu);
            }
        }
        let moved = acquired.len() as u64;
        self.count(runtime, |c| {
            c.acquire += 1;
            c.cpus_transferred += moved;
        });
        acquired
    }

    /// Asks the borrower of `cpu` to hand it back. Returns whether a reclaim
    /// was issued; CPUs that are not borrowed are left untouched.
    pub fn reclaim(&self, owner: RuntimeId, cpu: usize) -> bool {
        let Some(slot) = self.cpus.get(cpu) else {
            return false;
        };
        let mut e = slot.lock().unwrap();
        if e.owner != owner || e.state != CpuState::Borrowed || e.reclaim_pending {
            return false;
        }
        self.burn();
        e.reclaim_pending = true;
        drop(e);
        self.count(owner, |c| c.reclaim += 1);
        true
    }

    pub fn reclaim_pending(&self, cpu: usize) -> bool {
        self.cpus[cpu].lock().unwrap().reclaim_pending
    }

    /// The borrower hands a reclaimed CPU back to its owner.
    pub fn vacate(&self, borrower: RuntimeId, cpu: usize) -> Result<RuntimeId, ArbiterError> {
        let mut e = self.cpus[cpu].lock().unwrap();
        if e.holder != borrower || e.state != CpuState::Borrowed {
            return Err(ArbiterError::NotHolder {
                runtime: borrower,
                cpu,
            });
        }
        e.holder = e.owner;
        e.state = CpuState::HeldByOwner;
        e.reclaim_pending = false;
        Ok(e.owner)
    }

    /// Pooled CPUs, as `(cpu, owner)`.
    pub fn lent_cpus(&self) -> Vec<(usize, RuntimeId)> {
        self.cpus
            .iter()
            .enumerate()
            .filter_map(|(i, s)| {
                let e = s.lock().unwrap();
                (e.state == CpuState::Lent).then_some((i, e.owner))
            })
            .collect()
    }

    /// CPUs owned by `owner` and currently borrowed by the peer.
    pub fn borrowed_from(&self, owner: RuntimeId) -> Vec<usize> {
        self.cpus
            .iter()
            .enumerate()
            .filter_map(|(i, s)| {
                let e = s.lock().unwrap();
                (e.owner == owner && e.state == CpuState::Borrowed).then_some(i)
            })
            .collect()
    }

    /// `runtime,lend_calls,acquire_calls,reclaim_calls,cpus_transferred`.
    pub fn write_report<W: io::Write>(&self, out: W, labels: &[&str]) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "runtime",
            "lend_calls",
            "acquire_calls",
            "reclaim_calls",
            "cpus_transferred",
        ])?;
        for r in 0..self.counters.len() {
            let c = self.counters(r);
            let label = labels
                .get(r)
                .map_or_else(|| r.to_string(), |l| l.to_string());
            w.write_record([
                label,
                c.lend.to_string(),
                c.acquire.to_string(),
                c.reclaim.to_string(),
                c.cpus_transferred.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
