//! Per-flow file-arrival processes.
//!
//! In each slot a flow receives a file with probability `file_prob`,
//! independently over time; the file size (in packets) is drawn from a
//! [`SizeDistribution`]. The slot's arrival count is therefore
//! `A = size * Bernoulli(file_prob)`, so moments factor as
//! `E[A^m] = file_prob * E[size^m]`.
//!
//! Zeta-distributed sizes, `P(size = k) = k^-(beta+1) / zeta(beta+1)`,
//! provide the heavy-tailed regime: the size variance is infinite exactly
//! when `beta <= 2`, while the mean stays finite for any `beta > 1`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// File-size law, supported on the positive integers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SizeDistribution {
    /// Every file has exactly `packets` packets.
    Constant { packets: u64 },
    /// Geometric on {1, 2, ...}: `P(size = k) = q * (1-q)^(k-1)`.
    Geometric { success_prob: f64 },
    /// Zeta with tail index `beta > 1`:
    /// `P(size = k) = k^-(beta+1) / zeta(beta+1)`.
    Zeta { tail_index: f64 },
}

/// A validated per-flow arrival process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalSpec {
    pub file_prob: f64,
    pub size: SizeDistribution,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArrivalError {
    #[error("file probability must lie in (0, 1], got {0}")]
    InvalidFileProb(f64),
    #[error("constant file size must be at least one packet")]
    InvalidConstant,
    #[error("geometric success probability must lie in (0, 1], got {0}")]
    InvalidGeometric(f64),
    #[error("zeta tail index must exceed 1 for a finite rate, got {0}")]
    InvalidTailIndex(f64),
}

impl ArrivalSpec {
    pub fn new(file_prob: f64, size: SizeDistribution) -> Result<Self, ArrivalError> {
        if !(file_prob > 0.0 && file_prob <= 1.0) {
            return Err(ArrivalError::InvalidFileProb(file_prob));
        }
        match size {
            SizeDistribution::Constant { packets } if packets == 0 => {
                return Err(ArrivalError::InvalidConstant)
            }
            SizeDistribution::Geometric { success_prob }
                if !(success_prob > 0.0 && success_prob <= 1.0) =>
            {
                return Err(ArrivalError::InvalidGeometric(success_prob))
            }
            SizeDistribution::Zeta { tail_index } if !(tail_index > 1.0) => {
                return Err(ArrivalError::InvalidTailIndex(tail_index))
            }
            _ => {}
        }
        Ok(ArrivalSpec { file_prob, size })
    }

    /// Validates a deserialized spec (serde does not run `new`).
    pub fn check(&self) -> Result<(), ArrivalError> {
        Self::new(self.file_prob, self.size.clone()).map(|_| ())
    }

    /// `E[A^m] = file_prob * E[size^m]`; `+inf` is a legal return for
    /// diverging moments (zeta sizes with `m >= beta`).
    pub fn moment(&self, m: f64) -> f64 {
        assert!(m > 0.0, "moment order must be positive");
        self.file_prob * self.size.moment(m)
    }

    /// Mean packets per slot, `lambda = E[A]`. Finite by construction.
    pub fn rate(&self) -> f64 {
        self.moment(1.0)
    }

    /// Heavy-tailed iff the second moment diverges.
    pub fn is_heavy_tailed(&self) -> bool {
        self.moment(2.0).is_infinite()
    }

    /// Prepares a sampler (for zeta sizes this builds the inverse-CDF
    /// table once; reuse the sampler across slots).
    pub fn sampler(&self) -> ArrivalSampler {
        ArrivalSampler::new(self)
    }

    /// Rescales the file probability so that the rate becomes `lambda`,
    /// keeping the size law. Fails if that would need `file_prob > 1`.
    pub fn with_rate(&self, lambda: f64) -> Result<Self, ArrivalError> {
        let mean_size = self.size.moment(1.0);
        ArrivalSpec::new(lambda / mean_size, self.size.clone())
    }
}

impl SizeDistribution {
    /// `E[size^m]` for real `m > 0`, possibly `+inf`.
    pub fn moment(&self, m: f64) -> f64 {
        match *self {
            SizeDistribution::Constant { packets } => (packets as f64).powf(m),
            SizeDistribution::Geometric { success_prob } => geometric_moment(success_prob, m),
            SizeDistribution::Zeta { tail_index } => {
                if m < tail_index {
                    zeta(tail_index + 1.0 - m) / zeta(tail_index + 1.0)
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

/// Riemann zeta on `s > 1`: partial sum to `N = 1e5` plus Euler-Maclaurin
/// tail terms. Relative error well below 1e-9 for every `s` used here.
/// Returns `+inf` for `s <= 1`, where the series diverges.
pub fn zeta(s: f64) -> f64 {
    if s <= 1.0 {
        return f64::INFINITY;
    }
    const N: u64 = 100_000;
    let mut sum = 0.0;
    for n in 1..=N {
        sum += (n as f64).powf(-s);
    }
    let nf = N as f64;
    // integral tail, endpoint correction (the sum already includes n = N),
    // first Bernoulli term
    sum + nf.powf(1.0 - s) / (s - 1.0) - 0.5 * nf.powf(-s) + s * nf.powf(-s - 1.0) / 12.0
}

/// `E[size^m]` for the geometric law on {1, 2, ...}: direct series
/// `q * sum_k k^m (1-q)^(k-1)`, summed until the tail is negligible.
fn geometric_moment(q: f64, m: f64) -> f64 {
    if q >= 1.0 {
        return 1.0;
    }
    let r = 1.0 - q;
    // terms peak near m / (-ln r); keep summing well past the peak
    let peak = (m / -r.ln()).ceil() as u64 + 1;
    let mut sum = 0.0;
    let mut r_pow = 1.0; // r^(k-1)
    let mut k = 1u64;
    loop {
        let term = (k as f64).powf(m) * r_pow;
        sum += term;
        if k > peak && term < sum * 1e-16 {
            break;
        }
        r_pow *= r;
        k += 1;
        if k > 100_000_000 {
            break; // unreachable for valid q; defuse any pathological input
        }
    }
    q * sum
}

const ZETA_TABLE_SIZE: usize = 1_000_000;

/// Inverse-CDF sampler for zeta sizes: exact table up to 1e6, analytic
/// power-law tail inversion beyond (the tail coefficient is anchored to
/// the table's end so the seam is continuous).
#[derive(Debug, Clone)]
struct ZetaTable {
    beta: f64,
    cdf: Vec<f64>,
    /// survival anchored at the table end: P(size > k) ~ tail_coeff * k^-beta
    tail_coeff: f64,
}

impl ZetaTable {
    fn new(beta: f64) -> Self {
        let z = zeta(beta + 1.0);
        let mut cdf = Vec::with_capacity(ZETA_TABLE_SIZE);
        let mut acc = 0.0;
        for k in 1..=ZETA_TABLE_SIZE {
            acc += (k as f64).powf(-(beta + 1.0)) / z;
            cdf.push(acc);
        }
        let survival = (1.0 - acc).max(0.0);
        let tail_coeff = survival * (ZETA_TABLE_SIZE as f64).powf(beta);
        ZetaTable { beta, cdf, tail_coeff }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.gen();
        let last = *self.cdf.last().expect("table is nonempty");
        if u < last {
            let idx = self.cdf.partition_point(|&c| c < u);
            return idx as u64 + 1;
        }
        // invert P(size > k) ~ tail_coeff * k^-beta for the residual mass
        let k = (self.tail_coeff / (1.0 - u)).powf(1.0 / self.beta).ceil();
        (k as u64).max(ZETA_TABLE_SIZE as u64 + 1)
    }
}

#[derive(Debug, Clone)]
enum SizeSampler {
    Constant(u64),
    Geometric { q: f64 },
    Zeta(ZetaTable),
}

/// Draws per-slot arrival counts for one flow.
#[derive(Debug, Clone)]
pub struct ArrivalSampler {
    file_prob: f64,
    size: SizeSampler,
}

impl ArrivalSampler {
    pub fn new(spec: &ArrivalSpec) -> Self {
        let size = match spec.size {
            SizeDistribution::Constant { packets } => SizeSampler::Constant(packets),
            SizeDistribution::Geometric { success_prob } => {
                SizeSampler::Geometric { q: success_prob }
            }
            SizeDistribution::Zeta { tail_index } => SizeSampler::Zeta(ZetaTable::new(tail_index)),
        };
        ArrivalSampler {
            file_prob: spec.file_prob,
            size,
        }
    }

    /// Packets arriving this slot: 0 with probability `1 - file_prob`,
    /// otherwise one size draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        if rng.gen::<f64>() >= self.file_prob {
            return 0;
        }
        match &self.size {
            SizeSampler::Constant(k) => *k,
            SizeSampler::Geometric { q } => {
                if *q >= 1.0 {
                    1
                } else {
                    let u: f64 = rng.gen();
                    let k = ((1.0 - u).ln() / (1.0 - q).ln()).ceil();
                    (k as u64).max(1)
                }
            }
            SizeSampler::Zeta(table) => table.sample(rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Independent zeta oracle: plain partial sum to 2e6 plus integral
    /// tail and midpoint correction. No shared code with `zeta`.
    fn zeta_ref(s: f64) -> f64 {
        const N: u64 = 2_000_000;
        let mut sum = 0.0;
        for n in (1..=N).rev() {
            sum += (n as f64).powf(-s);
        }
        let nf = N as f64;
        sum + nf.powf(1.0 - s) / (s - 1.0) - 0.5 * nf.powf(-s)
    }

    fn zeta_spec(beta: f64, p: f64) -> ArrivalSpec {
        ArrivalSpec::new(p, SizeDistribution::Zeta { tail_index: beta }).unwrap()
    }

    #[test]
    fn zeta_matches_independent_oracle() {
        for s in [1.1, 1.5, 2.0, 2.5, 3.0, 4.0, 6.0] {
            let got = zeta(s);
            let want = zeta_ref(s);
            assert!(
                ((got - want) / want).abs() < 1e-9,
                "zeta({s}): {got} vs {want}"
            );
        }
    }

    #[test]
    fn zeta_two_is_pi_squared_over_six() {
        let want = std::f64::consts::PI.powi(2) / 6.0;
        assert!((zeta(2.0) - want).abs() / want < 1e-10);
    }

    #[test]
    fn zeta_diverges_at_and_below_one() {
        assert!(zeta(1.0).is_infinite());
        assert!(zeta(0.5).is_infinite());
    }

    #[test]
    fn moment_constant_direct() {
        let spec = ArrivalSpec::new(0.5, SizeDistribution::Constant { packets: 2 }).unwrap();
        assert_eq!(spec.moment(2.0), 2.0);
    }

    #[test]
    fn moment_zeta_first_moment() {
        // E[size] for beta = 3 is zeta(3)/zeta(4) ~ 1.11063
        let spec = zeta_spec(3.0, 1.0);
        let want = zeta_ref(3.0) / zeta_ref(4.0);
        let got = spec.moment(1.0);
        assert!(((got - want) / want).abs() < 1e-9, "{got} vs {want}");
        assert!((got - 1.11063).abs() < 1e-5);
    }

    #[test]
    fn moment_zeta_diverges_at_tail_index() {
        let spec = zeta_spec(1.5, 1.0);
        assert!(spec.moment(2.0).is_infinite());
        assert!(spec.moment(1.5).is_infinite());
        assert!(spec.moment(1.4).is_finite());
    }

    #[test]
    fn moment_zeta_fractional_vs_series_oracle() {
        // direct pmf series with the reference zeta as normalizer
        let beta = 1.5;
        let m = 1.4;
        let z = zeta_ref(beta + 1.0);
        let mut want = 0.0;
        for k in 1..=10_000_000u64 {
            want += (k as f64).powf(m - beta - 1.0) / z;
        }
        // the truncated series is missing a ~N^(m-beta) tail; integral bound
        want += (10_000_000f64).powf(m - beta) / ((beta - m) * z);
        let got = zeta_spec(beta, 1.0).moment(m);
        assert!(((got - want) / want).abs() < 1e-6, "{got} vs {want}");
    }

    #[test]
    fn rate_examples() {
        let b = ArrivalSpec::new(0.3, SizeDistribution::Constant { packets: 1 }).unwrap();
        assert!((b.rate() - 0.3).abs() < 1e-15);

        let z = zeta_spec(1.5, 0.1);
        let want = 0.1 * zeta_ref(1.5) / zeta_ref(2.5);
        assert!(((z.rate() - want) / want).abs() < 1e-9);

        let g = ArrivalSpec::new(1.0, SizeDistribution::Geometric { success_prob: 0.5 }).unwrap();
        assert!((g.rate() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn geometric_moments_match_closed_forms() {
        // E[X] = 1/q, E[X^2] = (2-q)/q^2 for the geometric on {1,2,...}
        for q in [0.2, 0.5, 0.9, 1.0] {
            let d = SizeDistribution::Geometric { success_prob: q };
            assert!((d.moment(1.0) - 1.0 / q).abs() < 1e-10, "q={q}");
            let want2 = (2.0 - q) / (q * q);
            assert!((d.moment(2.0) - want2).abs() / want2 < 1e-10, "q={q}");
        }
    }

    #[test]
    fn heavy_tail_classification() {
        assert!(zeta_spec(1.5, 1.0).is_heavy_tailed());
        assert!(zeta_spec(2.0, 1.0).is_heavy_tailed()); // E[A^2] = zeta(1)/zeta(3)
        assert!(!zeta_spec(2.5, 1.0).is_heavy_tailed());
        let bern = ArrivalSpec::new(0.4, SizeDistribution::Constant { packets: 1 }).unwrap();
        assert!(!bern.is_heavy_tailed());
        let geo = ArrivalSpec::new(0.5, SizeDistribution::Geometric { success_prob: 0.1 }).unwrap();
        assert!(!geo.is_heavy_tailed());
    }

    #[test]
    fn heavy_tail_equals_infinite_second_moment() {
        let specs = [
            zeta_spec(1.2, 0.3),
            zeta_spec(1.9, 1.0),
            zeta_spec(2.1, 0.7),
            zeta_spec(3.5, 0.1),
            ArrivalSpec::new(0.9, SizeDistribution::Constant { packets: 7 }).unwrap(),
            ArrivalSpec::new(0.2, SizeDistribution::Geometric { success_prob: 0.3 }).unwrap(),
        ];
        for spec in &specs {
            assert_eq!(spec.is_heavy_tailed(), spec.moment(2.0).is_infinite());
        }
    }

    #[test]
    fn moments_are_monotone_in_order() {
        let specs = [
            zeta_spec(1.5, 0.5),
            zeta_spec(2.5, 1.0),
            ArrivalSpec::new(1.0, SizeDistribution::Constant { packets: 3 }).unwrap(),
            ArrivalSpec::new(0.8, SizeDistribution::Geometric { success_prob: 0.4 }).unwrap(),
        ];
        let orders = [0.1, 0.5, 1.0, 1.4, 2.0, 3.0];
        for spec in &specs {
            for w in orders.windows(2) {
                let (lo, hi) = (spec.moment(w[0]), spec.moment(w[1]));
                assert!(lo <= hi, "{spec:?}: E[A^{}]={lo} > E[A^{}]={hi}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn sample_constant_is_deterministic() {
        let spec = ArrivalSpec::new(1.0, SizeDistribution::Constant { packets: 3 }).unwrap();
        let sampler = spec.sampler();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_eq!(sampler.sample(&mut rng), 3);
        }
    }

    #[test]
    fn sample_file_probability_concentrates() {
        let spec = ArrivalSpec::new(0.25, SizeDistribution::Constant { packets: 5 }).unwrap();
        let sampler = spec.sampler();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 1_000_000u64;
        let nonzero = (0..n).filter(|_| sampler.sample(&mut rng) > 0).count() as f64;
        let p_hat = nonzero / n as f64;
        let sigma = (0.25 * 0.75 / n as f64).sqrt();
        assert!(
            (p_hat - 0.25).abs() <= 3.0 * sigma,
            "p_hat={p_hat}, 3sigma={}",
            3.0 * sigma
        );
    }

    #[test]
    fn zeta_sampler_mean_and_tail() {
        let beta = 1.5;
        let spec = zeta_spec(beta, 1.0);
        let sampler = spec.sampler();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 10_000_000u64;
        let mut sum = 0u64;
        let mut ge = [0u64; 3]; // counts of size >= 1, 10, 100
        for _ in 0..n {
            let s = sampler.sample(&mut rng);
            sum += s;
            for (i, k) in [1u64, 10, 100].iter().enumerate() {
                if s >= *k {
                    ge[i] += 1;
                }
            }
        }
        let mean = sum as f64 / n as f64;
        let want_mean = zeta_ref(beta) / zeta_ref(beta + 1.0);
        assert!(
            ((mean - want_mean) / want_mean).abs() < 0.05,
            "mean {mean} vs {want_mean}"
        );
        // analytic P(size >= k) from the reference zeta
        let z = zeta_ref(beta + 1.0);
        for (i, k) in [1u64, 10, 100].iter().enumerate() {
            let head: f64 = (1..*k).map(|j| (j as f64).powf(-(beta + 1.0))).sum();
            let want = (z - head) / z;
            let got = ge[i] as f64 / n as f64;
            let ratio = got / want;
            assert!(
                (0.9..=1.1).contains(&ratio),
                "k={k}: empirical {got} vs analytic {want}"
            );
        }
    }

    #[test]
    fn light_tailed_empirical_mean_within_five_sigma() {
        let spec = ArrivalSpec::new(0.7, SizeDistribution::Geometric { success_prob: 0.5 }).unwrap();
        let sampler = spec.sampler();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 10_000_000u64;
        let sum: u64 = (0..n).map(|_| sampler.sample(&mut rng)).sum();
        let mean = sum as f64 / n as f64;
        let rate = spec.rate();
        let var = spec.moment(2.0) - rate * rate;
        let sigma_mean = (var / n as f64).sqrt();
        assert!(
            (mean - rate).abs() <= 5.0 * sigma_mean,
            "mean {mean} vs rate {rate} (5 sigma = {})",
            5.0 * sigma_mean
        );
    }

    #[test]
    fn geometric_sampler_matches_mean() {
        let spec = ArrivalSpec::new(1.0, SizeDistribution::Geometric { success_prob: 0.25 }).unwrap();
        let sampler = spec.sampler();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1_000_000u64;
        let sum: u64 = (0..n).map(|_| sampler.sample(&mut rng)).sum();
        let mean = sum as f64 / n as f64;
        assert!((mean - 4.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(ArrivalSpec::new(0.0, SizeDistribution::Constant { packets: 1 }).is_err());
        assert!(ArrivalSpec::new(1.5, SizeDistribution::Constant { packets: 1 }).is_err());
        assert!(ArrivalSpec::new(0.5, SizeDistribution::Constant { packets: 0 }).is_err());
        assert!(ArrivalSpec::new(0.5, SizeDistribution::Geometric { success_prob: 0.0 }).is_err());
        assert!(ArrivalSpec::new(0.5, SizeDistribution::Zeta { tail_index: 1.0 }).is_err());
    }

    #[test]
    fn with_rate_rescales_file_probability() {
        let spec = zeta_spec(1.5, 0.1);
        let scaled = spec.with_rate(0.3).unwrap();
        assert!((scaled.rate() - 0.3).abs() < 1e-12);
        assert!(scaled.with_rate(10.0).is_err()); // would need file_prob > 1
    }

    #[test]
    fn arrival_json_schema() {
        let spec = zeta_spec(1.5, 0.1);
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(
            json,
            r#"{"file_prob":0.1,"size":{"kind":"zeta","tail_index":1.5}}"#
        );
        let back: ArrivalSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }
}
