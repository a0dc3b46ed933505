//! Slot-by-slot simulation of the queue dynamics.
//!
//! Event order within slot `t`: observe `Q(t)` -> decide the schedule ->
//! serve (one packet per scheduled nonempty queue, FCFS within a queue) ->
//! record departures -> append arrivals -> advance to `t+1`. Scheduling
//! decisions therefore never see the slot's own arrivals, and a file
//! arriving at the end of slot `t` that finishes in slot `t'` has delay
//! `t' - t`.
//!
//! A replication is a pure function of its inputs and seed: each flow draws
//! arrivals from its own counter-derived substream and tie-breaking uses a
//! dedicated substream, so runs are bit-reproducible and replications can
//! execute concurrently with no shared state.

mod stats;

pub use stats::{
    basta_distance, divergence_diagnostic, littles_law_residual, merge, CheckpointPoint,
    CheckpointSeries, ConfigFingerprint, Convergence, CycleStats, DivergenceDiagnostic, FlowStats,
    Histogram, SimStats, TRUNCATION_LADDER,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arrivals::{ArrivalSampler, ArrivalSpec};
use crate::model::{FlowId, NetworkSpec};
use crate::scheduling::{decide, PolicySpec, ScheduleDecision, SchedulingError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("horizon must exceed warmup, got horizon {horizon}, warmup {warmup}")]
    InvalidHorizon { horizon: u64, warmup: u64 },
    #[error("expected {want} per-flow arrival specs, got {got}")]
    ArrivalCountMismatch { got: usize, want: usize },
    #[error("statistics come from different configurations and cannot be merged")]
    ConfigMismatch,
    #[error("flow {flow} has no completed files")]
    NoCompletedFiles { flow: usize },
    #[error("queue histogram is empty")]
    EmptyHistogram,
    #[error("need at least 3 checkpoints, got {0}")]
    TooFewCheckpoints(usize),
    #[error("statistics contain {0} replication series; diagnose one at a time")]
    MultipleReplications(usize),
    #[error("flow {flow} out of range ({num_flows} flows)")]
    FlowOutOfRange { flow: usize, num_flows: usize },
    #[error(transparent)]
    Scheduling(#[from] SchedulingError),
}

/// One file: the batch of packets a flow received in a single slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileRecord {
    pub flow: FlowId,
    pub arrival_slot: u64,
    pub size: u64,
    pub remaining: u64,
    /// Set exactly when `remaining` reaches zero; the file's delay is
    /// `departure_slot - arrival_slot` (at least 1).
    pub departure_slot: Option<u64>,
}

/// Live simulation state: the slot counter, per-flow packet counts, and
/// per-flow FIFO lists of in-system files.
#[derive(Debug, Clone)]
pub struct SimState {
    slot: u64,
    queues: Vec<u64>,
    files: Vec<std::collections::VecDeque<FileRecord>>,
}

impl SimState {
    pub fn new(num_flows: usize) -> Self {
        SimState {
            slot: 0,
            queues: vec![0; num_flows],
            files: (0..num_flows).map(|_| Default::default()).collect(),
        }
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn queues(&self) -> &[u64] {
        &self.queues
    }

    /// Files currently in system on flow `f`.
    pub fn files_in_system(&self, f: usize) -> usize {
        self.files[f].len()
    }

    /// The packet counter must equal the remaining packets of the file list.
    pub fn is_consistent(&self) -> bool {
        self.queues.iter().enumerate().all(|(f, &q)| {
            q == self.files[f].iter().map(|r| r.remaining).sum::<u64>()
        })
    }

    /// Advances one slot: serves the scheduled nonempty queues (head file
    /// first), pushes completed files into `departed`, then appends this
    /// slot's arrivals as new files.
    pub fn step(
        &mut self,
        decision: &ScheduleDecision,
        arrivals: &[u64],
        departed: &mut Vec<FileRecord>,
    ) {
        let t = self.slot;
        for f in decision.chosen.flows() {
            let fi = f.0;
            if self.queues[fi] == 0 {
                continue; // offered service is wasted on an empty queue
            }
            self.queues[fi] -= 1;
            let head = self.files[fi].front_mut().expect("nonempty queue has a file");
            head.remaining -= 1;
            if head.remaining == 0 {
                let mut file = self.files[fi].pop_front().expect("head exists");
                file.departure_slot = Some(t);
                departed.push(file);
            }
        }
        for (fi, &a) in arrivals.iter().enumerate() {
            if a > 0 {
                self.queues[fi] += a;
                self.files[fi].push_back(FileRecord {
                    flow: FlowId(fi),
                    arrival_slot: t,
                    size: a,
                    remaining: a,
                    departure_slot: None,
                });
            }
        }
        self.slot = t + 1;
    }
}

/// Default running-mean checkpoint slots.
pub const DEFAULT_CHECKPOINTS: [u64; 4] = [10_000, 100_000, 1_000_000, 10_000_000];

/// Horizon, warmup, and collection knobs for one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub horizon: u64,
    /// Slots excluded from steady-state statistics; defaults to
    /// `max(10^4, horizon/100)` (a tenth of short runs).
    pub warmup: Option<u64>,
    /// Slots at which per-flow running means (from slot 0) are recorded;
    /// defaults to [`DEFAULT_CHECKPOINTS`] clipped to the horizon.
    pub checkpoints: Option<Vec<u64>>,
    /// Queue-moment exponent ladder; defaults to the policy's alphas
    /// together with 1.
    pub exponents: Option<Vec<f64>>,
}

impl RunConfig {
    pub fn new(horizon: u64) -> Self {
        RunConfig {
            horizon,
            warmup: None,
            checkpoints: None,
            exponents: None,
        }
    }

    pub fn with_warmup(mut self, warmup: u64) -> Self {
        self.warmup = Some(warmup);
        self
    }

    pub fn effective_warmup(&self) -> u64 {
        self.warmup.unwrap_or_else(|| {
            if self.horizon > 20_000 {
                10_000u64.max(self.horizon / 100)
            } else {
                self.horizon / 10
            }
        })
    }

    pub fn effective_checkpoints(&self) -> Vec<u64> {
        let mut cps = self
            .checkpoints
            .clone()
            .unwrap_or_else(|| DEFAULT_CHECKPOINTS.to_vec());
        cps.retain(|&c| c >= 1 && c <= self.horizon);
        cps.sort_unstable();
        cps.dedup();
        cps
    }

    fn effective_exponents(&self, policy: &PolicySpec, num_flows: usize) -> Vec<f64> {
        self.exponents.clone().unwrap_or_else(|| {
            let mut exps = vec![1.0];
            for f in 0..num_flows {
                exps.push(policy.alpha(f));
            }
            exps.sort_by(|a, b| a.partial_cmp(b).expect("alphas are finite"));
            exps.dedup();
            exps
        })
    }
}

/// Simulates one replication and returns its statistics. Deterministic in
/// all inputs including `seed`. Admissibility is not required; unstable
/// systems can be simulated deliberately.
pub fn run(
    network: &NetworkSpec,
    arrivals: &[ArrivalSpec],
    policy: &PolicySpec,
    cfg: &RunConfig,
    seed: u64,
) -> Result<SimStats, EngineError> {
    let num_flows = network.num_flows();
    if arrivals.len() != num_flows {
        return Err(EngineError::ArrivalCountMismatch {
            got: arrivals.len(),
            want: num_flows,
        });
    }
    policy.check(num_flows)?;
    let warmup = cfg.effective_warmup();
    if cfg.horizon == 0 || warmup >= cfg.horizon {
        return Err(EngineError::InvalidHorizon {
            horizon: cfg.horizon,
            warmup,
        });
    }
    let checkpoints = cfg.effective_checkpoints();
    let exponents = cfg.effective_exponents(policy, num_flows);
    let alphas: Vec<f64> = (0..num_flows).map(|f| policy.alpha(f)).collect();

    let fingerprint = ConfigFingerprint {
        network: network.clone(),
        arrivals: arrivals.to_vec(),
        policy: policy.clone(),
        horizon: cfg.horizon,
        warmup,
        checkpoints: checkpoints.clone(),
        exponents: exponents.clone(),
    };
    let mut stats = SimStats::empty(fingerprint);

    let samplers: Vec<ArrivalSampler> = arrivals.iter().map(ArrivalSpec::sampler).collect();
    let mut arrival_rngs: Vec<ChaCha8Rng> = (0..num_flows)
        .map(|f| substream(seed, f as u64 + 1))
        .collect();
    let mut tie_rng = substream(seed, 0);

    let mut state = SimState::new(num_flows);
    let mut arrivals_buf = vec![0u64; num_flows];
    let mut departed: Vec<FileRecord> = Vec::new();
    let mut sum_q_from_start = vec![0u128; num_flows];
    let mut next_checkpoint = 0usize;
    let mut last_empty_epoch: Option<u64> = None;
    let mut series = CheckpointSeries {
        seed,
        points: Vec::with_capacity(checkpoints.len()),
    };

    for t in 0..cfg.horizon {
        let collect = t >= warmup;
        let q = state.queues();

        if collect {
            if q.iter().all(|&v| v == 0) {
                if let Some(prev) = last_empty_epoch {
                    stats.cycles.record(t - prev);
                }
                last_empty_epoch = Some(t);
            }
            for f in 0..num_flows {
                let fs = &mut stats.per_flow[f];
                fs.sum_q += q[f] as u128;
                for (i, &e) in exponents.iter().enumerate() {
                    fs.sum_q_pow[i] += if e == 1.0 {
                        q[f] as f64
                    } else {
                        (q[f] as f64).powf(e)
                    };
                }
                for (i, &m) in TRUNCATION_LADDER.iter().enumerate() {
                    fs.sum_q_trunc[i] += q[f].min(m);
                }
                fs.sum_files_in_system += state.files_in_system(f) as u128;
                fs.time_hist.record(q[f]);
            }
        }

        for f in 0..num_flows {
            let a = samplers[f].sample(&mut arrival_rngs[f]);
            arrivals_buf[f] = a;
            sum_q_from_start[f] += q[f] as u128;
            stats.per_flow[f].packets_arrived += a;
            if a > 0 && collect {
                stats.per_flow[f].files_arrived += 1;
                stats.per_flow[f].arrival_hist.record(q[f]);
            }
        }

        let decision = decide(policy, state.queues(), network, &mut tie_rng);
        for f in 0..num_flows {
            if decision.serves(FlowId(f)) && state.queues()[f] > 0 {
                stats.per_flow[f].packets_served += 1;
            }
        }
        state.step(&decision, &arrivals_buf, &mut departed);

        for file in departed.drain(..) {
            if file.arrival_slot >= warmup {
                let delay = file.departure_slot.expect("departed file") - file.arrival_slot;
                let fs = &mut stats.per_flow[file.flow.0];
                fs.files_completed += 1;
                fs.sum_delay += delay as u128;
                for (i, &m) in TRUNCATION_LADDER.iter().enumerate() {
                    fs.sum_delay_trunc[i] += delay.min(m);
                }
            }
        }

        if next_checkpoint < checkpoints.len() && t + 1 == checkpoints[next_checkpoint] {
            debug_assert!(state.is_consistent());
            let slot = t + 1;
            series.points.push(CheckpointPoint {
                slot,
                mean_q: sum_q_from_start
                    .iter()
                    .map(|&s| s as f64 / slot as f64)
                    .collect(),
            });
            next_checkpoint += 1;
        }
    }

    stats.slots = cfg.horizon - warmup;
    for f in 0..num_flows {
        stats.per_flow[f].alpha = alphas[f];
        stats.per_flow[f].final_q = state.queues()[f];
    }
    stats.checkpoint_series.push(series);
    Ok(stats)
}

/// Derives an independent substream seed from the replication seed and a
/// stream index (splitmix64 finalizer).
fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    ChaCha8Rng::seed_from_u64(z)
}
