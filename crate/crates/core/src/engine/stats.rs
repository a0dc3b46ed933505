//! Mergeable simulation statistics and empirical consistency checks.
//!
//! All per-flow accumulators are plain sums over collected slots, so
//! merging the statistics of two replications equals the statistics of the
//! concatenated slot streams for every order-insensitive field. Checkpoint
//! series are kept per replication (tagged by seed) because running means
//! are order-sensitive.

use serde::Serialize;

use crate::arrivals::ArrivalSpec;
use crate::model::NetworkSpec;
use crate::scheduling::PolicySpec;

use super::EngineError;

/// Truncation levels for `E[min(Q, M)]` and `E[min(D, M)]`; these expose
/// diverging means without unbounded accumulators.
pub const TRUNCATION_LADDER: [u64; 5] = [10, 100, 1_000, 10_000, 100_000];

/// Queue-length histograms are exact up to this value; larger observations
/// land in one overflow bucket.
pub const HISTOGRAM_CAP: u64 = 1_000_000;

/// Everything that must match for two statistics objects to be mergeable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigFingerprint {
    pub network: NetworkSpec,
    pub arrivals: Vec<ArrivalSpec>,
    pub policy: PolicySpec,
    pub horizon: u64,
    pub warmup: u64,
    pub checkpoints: Vec<u64>,
    pub exponents: Vec<f64>,
}

/// Counts of observed queue lengths, capped with an overflow bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct Histogram {
    counts: Vec<u64>,
    overflow: u64,
    total: u64,
}

impl Histogram {
    pub fn record(&mut self, value: u64) {
        if value > HISTOGRAM_CAP {
            self.overflow += 1;
        } else {
            let idx = value as usize;
            if idx >= self.counts.len() {
                self.counts.resize(idx + 1, 0);
            }
            self.counts[idx] += 1;
        }
        self.total += 1;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn count(&self, value: u64) -> u64 {
        self.counts.get(value as usize).copied().unwrap_or(0)
    }

    fn absorb(&mut self, other: &Histogram) {
        if other.counts.len() > self.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (c, &o) in self.counts.iter_mut().zip(&other.counts) {
            *c += o;
        }
        self.overflow += other.overflow;
        self.total += other.total;
    }

    /// Sup-norm distance between the two empirical CDFs. Overflow mass is
    /// treated as lying above every in-range value.
    pub fn sup_distance(&self, other: &Histogram) -> f64 {
        let n = self.counts.len().max(other.counts.len());
        let (t1, t2) = (self.total as f64, other.total as f64);
        let mut acc1 = 0u64;
        let mut acc2 = 0u64;
        let mut worst = 0.0f64;
        for v in 0..n {
            acc1 += self.counts.get(v).copied().unwrap_or(0);
            acc2 += other.counts.get(v).copied().unwrap_or(0);
            worst = worst.max((acc1 as f64 / t1 - acc2 as f64 / t2).abs());
        }
        worst
    }
}

/// Per-flow accumulators over the collected (post-warmup) slots, plus
/// full-run conservation counters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowStats {
    /// The flow's policy exponent (1 unless Max-Weight-α).
    pub alpha: f64,
    pub sum_q: u128,
    /// One sum per ladder exponent: `sum_t Q_f(t)^e`.
    pub sum_q_pow: Vec<f64>,
    /// `sum_t min(Q_f(t), M)` per truncation level.
    pub sum_q_trunc: Vec<u64>,
    pub files_arrived: u64,
    pub files_completed: u64,
    pub sum_delay: u128,
    pub sum_delay_trunc: Vec<u64>,
    /// `sum_t L_f(t)`: files in system at slot starts.
    pub sum_files_in_system: u128,
    pub time_hist: Histogram,
    /// Queue length seen by arriving files (slot-start value of the
    /// arrival slot).
    pub arrival_hist: Histogram,
    /// Full-run packet counters: arrived = served + final_q exactly.
    pub packets_arrived: u64,
    pub packets_served: u64,
    pub final_q: u64,
}

impl FlowStats {
    fn empty(num_exponents: usize) -> Self {
        FlowStats {
            alpha: 1.0,
            sum_q: 0,
            sum_q_pow: vec![0.0; num_exponents],
            sum_q_trunc: vec![0; TRUNCATION_LADDER.len()],
            files_arrived: 0,
            files_completed: 0,
            sum_delay: 0,
            sum_delay_trunc: vec![0; TRUNCATION_LADDER.len()],
            sum_files_in_system: 0,
            time_hist: Histogram::default(),
            arrival_hist: Histogram::default(),
            packets_arrived: 0,
            packets_served: 0,
            final_q: 0,
        }
    }
}

/// Network-wide regeneration cycles: intervals between successive slots at
/// which every queue is empty at the slot start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct CycleStats {
    pub count: u64,
    pub sum_len: u128,
    pub sum_len_sq: u128,
}

impl CycleStats {
    pub(super) fn record(&mut self, len: u64) {
        self.count += 1;
        self.sum_len += len as u128;
        self.sum_len_sq += (len as u128) * (len as u128);
    }

    pub fn mean_len(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum_len as f64 / self.count as f64)
    }
}

/// Per-flow running means (from slot 0) recorded at the checkpoint slots.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointPoint {
    pub slot: u64,
    pub mean_q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointSeries {
    pub seed: u64,
    pub points: Vec<CheckpointPoint>,
}

/// Statistics of one replication, or the merge of several with identical
/// configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimStats {
    pub fingerprint: ConfigFingerprint,
    /// Collected slots (horizon minus warmup, summed over replications).
    pub slots: u64,
    pub per_flow: Vec<FlowStats>,
    pub cycles: CycleStats,
    pub checkpoint_series: Vec<CheckpointSeries>,
}

impl SimStats {
    pub fn empty(fingerprint: ConfigFingerprint) -> Self {
        let flows = fingerprint.network.num_flows();
        let exps = fingerprint.exponents.len();
        SimStats {
            fingerprint,
            slots: 0,
            per_flow: (0..flows).map(|_| FlowStats::empty(exps)).collect(),
            cycles: CycleStats::default(),
            checkpoint_series: Vec::new(),
        }
    }

    pub fn num_flows(&self) -> usize {
        self.per_flow.len()
    }

    fn check_flow(&self, f: usize) -> Result<(), EngineError> {
        if f >= self.per_flow.len() {
            return Err(EngineError::FlowOutOfRange {
                flow: f,
                num_flows: self.per_flow.len(),
            });
        }
        Ok(())
    }

    pub fn mean_q(&self, f: usize) -> f64 {
        self.per_flow[f].sum_q as f64 / self.slots as f64
    }

    pub fn total_mean_q(&self) -> f64 {
        (0..self.num_flows()).map(|f| self.mean_q(f)).sum()
    }

    /// Time-average of `Q_f^e` for a ladder exponent `e`.
    pub fn mean_q_pow(&self, f: usize, exponent: f64) -> Option<f64> {
        let idx = self
            .fingerprint
            .exponents
            .iter()
            .position(|&e| e == exponent)?;
        Some(self.per_flow[f].sum_q_pow[idx] / self.slots as f64)
    }

    /// Time-average of `Q_f^alpha_f` for the flow's own policy exponent.
    pub fn mean_q_alpha(&self, f: usize) -> f64 {
        self.mean_q_pow(f, self.per_flow[f].alpha)
            .expect("flow alpha is always on the exponent ladder")
    }

    /// `E[min(Q, M)]` estimate for ladder index `i`.
    pub fn trunc_mean_q(&self, f: usize, i: usize) -> f64 {
        self.per_flow[f].sum_q_trunc[i] as f64 / self.slots as f64
    }

    pub fn mean_delay(&self, f: usize) -> Option<f64> {
        let fs = &self.per_flow[f];
        (fs.files_completed > 0).then(|| fs.sum_delay as f64 / fs.files_completed as f64)
    }

    pub fn trunc_mean_delay(&self, f: usize, i: usize) -> Option<f64> {
        let fs = &self.per_flow[f];
        (fs.files_completed > 0)
            .then(|| fs.sum_delay_trunc[i] as f64 / fs.files_completed as f64)
    }

    pub fn mean_files_in_system(&self, f: usize) -> f64 {
        self.per_flow[f].sum_files_in_system as f64 / self.slots as f64
    }

    /// Empirical file-arrival probability.
    pub fn p_hat(&self, f: usize) -> f64 {
        self.per_flow[f].files_arrived as f64 / self.slots as f64
    }
}

/// Combines statistics of independent replications with identical
/// configuration. Associative and commutative on all accumulator fields;
/// checkpoint series are concatenated and sorted by seed.
pub fn merge(a: &SimStats, b: &SimStats) -> Result<SimStats, EngineError> {
    if a.fingerprint != b.fingerprint {
        return Err(EngineError::ConfigMismatch);
    }
    let mut out = a.clone();
    out.slots += b.slots;
    for (fa, fb) in out.per_flow.iter_mut().zip(&b.per_flow) {
        fa.sum_q += fb.sum_q;
        for (x, y) in fa.sum_q_pow.iter_mut().zip(&fb.sum_q_pow) {
            *x += y;
        }
        for (x, y) in fa.sum_q_trunc.iter_mut().zip(&fb.sum_q_trunc) {
            *x += y;
        }
        fa.files_arrived += fb.files_arrived;
        fa.files_completed += fb.files_completed;
        fa.sum_delay += fb.sum_delay;
        for (x, y) in fa.sum_delay_trunc.iter_mut().zip(&fb.sum_delay_trunc) {
            *x += y;
        }
        fa.sum_files_in_system += fb.sum_files_in_system;
        fa.time_hist.absorb(&fb.time_hist);
        fa.arrival_hist.absorb(&fb.arrival_hist);
        fa.packets_arrived += fb.packets_arrived;
        fa.packets_served += fb.packets_served;
        fa.final_q += fb.final_q;
    }
    out.cycles.count += b.cycles.count;
    out.cycles.sum_len += b.cycles.sum_len;
    out.cycles.sum_len_sq += b.cycles.sum_len_sq;
    out.checkpoint_series.extend(b.checkpoint_series.iter().cloned());
    out.checkpoint_series.sort_by_key(|s| s.seed);
    Ok(out)
}

/// Relative residual of the file-level identity `E[L_f] = p_f E[D_f]`:
/// `|L_bar - p_hat * D_bar| / max(L_bar, 1e-9)`. Only meaningful for
/// stable flows with completed files.
pub fn littles_law_residual(stats: &SimStats, f: usize) -> Result<f64, EngineError> {
    stats.check_flow(f)?;
    let fs = &stats.per_flow[f];
    if fs.files_completed == 0 || stats.slots == 0 {
        return Err(EngineError::NoCompletedFiles { flow: f });
    }
    let l_bar = stats.mean_files_in_system(f);
    let p_hat = stats.p_hat(f);
    let d_bar = fs.sum_delay as f64 / fs.files_completed as f64;
    Ok((l_bar - p_hat * d_bar).abs() / l_bar.max(1e-9))
}

/// Sup-norm distance between the time-stationary queue CDF and the CDF
/// seen by arriving files. Near zero in steady state (arrivals are
/// Bernoulli and independent of the pre-arrival queue).
pub fn basta_distance(stats: &SimStats, f: usize) -> Result<f64, EngineError> {
    stats.check_flow(f)?;
    let fs = &stats.per_flow[f];
    if fs.time_hist.is_empty() || fs.arrival_hist.is_empty() {
        return Err(EngineError::EmptyHistogram);
    }
    Ok(fs.time_hist.sup_distance(&fs.arrival_hist))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Convergence {
    Converging,
    Diverging,
    Inconclusive,
}

/// Growth classification of a flow's running mean across checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceDiagnostic {
    pub classification: Convergence,
    /// Consecutive checkpoint-mean ratios.
    pub ratios: Vec<f64>,
    pub checkpoint_means: Vec<f64>,
}

/// Classifies a single replication's running queue means for flow `f`:
/// diverging when every consecutive ratio is at least 1.5 and the overall
/// growth is at least 4x; converging when every ratio is within 10% of 1;
/// inconclusive otherwise.
pub fn divergence_diagnostic(stats: &SimStats, f: usize) -> Result<DivergenceDiagnostic, EngineError> {
    stats.check_flow(f)?;
    match stats.checkpoint_series.len() {
        0 => Err(EngineError::TooFewCheckpoints(0)),
        1 => diagnose_running_means(
            &stats.checkpoint_series[0]
                .points
                .iter()
                .map(|p| p.mean_q[f])
                .collect::<Vec<_>>(),
        ),
        n => Err(EngineError::MultipleReplications(n)),
    }
}

/// The classifier itself, applicable to any running-mean sequence.
pub fn diagnose_running_means(means: &[f64]) -> Result<DivergenceDiagnostic, EngineError> {
    if means.len() < 3 {
        return Err(EngineError::TooFewCheckpoints(means.len()));
    }
    const TINY: f64 = 1e-12;
    let ratios: Vec<f64> = means
        .windows(2)
        .map(|w| {
            if w[0] <= TINY {
                if w[1] <= TINY {
                    1.0
                } else {
                    f64::INFINITY
                }
            } else {
                w[1] / w[0]
            }
        })
        .collect();
    let first = means[0];
    let last = *means.last().expect("nonempty");
    let overall = if first <= TINY {
        if last <= TINY {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        last / first
    };
    let classification = if ratios.iter().all(|&r| r >= 1.5) && overall >= 4.0 {
        Convergence::Diverging
    } else if ratios.iter().all(|&r| (r - 1.0).abs() <= 0.1) {
        Convergence::Converging
    } else {
        Convergence::Inconclusive
    };
    Ok(DivergenceDiagnostic {
        classification,
        ratios,
        checkpoint_means: means.to_vec(),
    })
}
