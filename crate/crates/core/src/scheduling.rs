//! Scheduling policies: Max-Weight, Max-Weight-α, fixed priority.
//!
//! Max-Weight activates a feasible schedule maximizing `sum_f Q_f(t) s_f`;
//! Max-Weight-α maximizes `sum_f Q_f(t)^alpha_f s_f`. Ties are broken
//! uniformly at random in both cases. The priority baseline greedily serves
//! nonempty queues in a fixed order, restricted to the feasible schedules.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{FlowId, NetworkSpec, Schedule};

/// Relative tolerance for declaring floating-point weight ties.
const TIE_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySpec {
    MaxWeight,
    /// Per-flow exponents, all positive. With every `alpha_f = 1` this is
    /// decision-identical to [`PolicySpec::MaxWeight`] on the same random
    /// stream.
    MaxWeightAlpha { alphas: Vec<f64> },
    /// Fixed-priority baseline: `order[0]` is served first whenever feasible.
    Priority { order: Vec<usize> },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchedulingError {
    #[error("policy needs one alpha per flow: got {got}, network has {want}")]
    AlphaCountMismatch { got: usize, want: usize },
    #[error("alpha parameters must be positive and finite, got {0}")]
    InvalidAlpha(f64),
    #[error("priority order must be a permutation of the {0} flows")]
    InvalidPriorityOrder(usize),
}

impl PolicySpec {
    pub fn check(&self, num_flows: usize) -> Result<(), SchedulingError> {
        match self {
            PolicySpec::MaxWeight => Ok(()),
            PolicySpec::MaxWeightAlpha { alphas } => {
                if alphas.len() != num_flows {
                    return Err(SchedulingError::AlphaCountMismatch {
                        got: alphas.len(),
                        want: num_flows,
                    });
                }
                for &a in alphas {
                    if !(a > 0.0 && a.is_finite()) {
                        return Err(SchedulingError::InvalidAlpha(a));
                    }
                }
                Ok(())
            }
            PolicySpec::Priority { order } => {
                let mut seen = vec![false; num_flows];
                if order.len() != num_flows {
                    return Err(SchedulingError::InvalidPriorityOrder(num_flows));
                }
                for &f in order {
                    if f >= num_flows || seen[f] {
                        return Err(SchedulingError::InvalidPriorityOrder(num_flows));
                    }
                    seen[f] = true;
                }
                Ok(())
            }
        }
    }

    /// The queue-moment exponent this policy targets for flow `f`
    /// (1 except under Max-Weight-α).
    pub fn alpha(&self, f: usize) -> f64 {
        match self {
            PolicySpec::MaxWeightAlpha { alphas } => alphas[f],
            _ => 1.0,
        }
    }
}

/// The schedule activated in a slot; flow `f` is offered service iff
/// `serves(f)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleDecision {
    pub chosen: Schedule,
}

impl ScheduleDecision {
    pub fn serves(&self, f: FlowId) -> bool {
        self.chosen.contains(f)
    }
}

/// Weight of a schedule: `sum_{f in s} Q_f^alpha_f`, with `alpha_f = 1`
/// when `alphas` is `None`.
pub fn weight(queues: &[u64], s: Schedule, alphas: Option<&[f64]>) -> f64 {
    s.flows()
        .map(|f| match alphas {
            Some(a) => (queues[f.0] as f64).powf(a[f.0]),
            None => queues[f.0] as f64,
        })
        .sum()
}

fn weight_int(queues: &[u64], s: Schedule) -> u128 {
    s.flows().map(|f| queues[f.0] as u128).sum()
}

/// Picks the schedule this slot. The chosen schedule attains the maximum
/// weight; when several do, one of them is selected uniformly at random.
/// The random stream is consumed only when there is an actual tie.
pub fn decide<R: Rng + ?Sized>(
    policy: &PolicySpec,
    queues: &[u64],
    spec: &NetworkSpec,
    rng: &mut R,
) -> ScheduleDecision {
    debug_assert_eq!(queues.len(), spec.num_flows());
    let chosen = match policy {
        PolicySpec::MaxWeight => {
            let best = spec
                .schedules()
                .iter()
                .map(|&s| weight_int(queues, s))
                .max()
                .expect("validated networks have at least one schedule");
            pick_uniform(spec.schedules().iter().copied(), rng, |s| {
                weight_int(queues, s) == best
            })
        }
        PolicySpec::MaxWeightAlpha { alphas } => {
            // one powf per flow per slot; schedules then just sum
            let powed: Vec<f64> = queues
                .iter()
                .zip(alphas)
                .map(|(&q, &a)| {
                    if a == 1.0 {
                        q as f64
                    } else {
                        (q as f64).powf(a)
                    }
                })
                .collect();
            let weights: Vec<f64> = spec
                .schedules()
                .iter()
                .map(|s| s.flows().map(|f| powed[f.0]).sum())
                .collect();
            let best = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let tol = TIE_REL_TOL * best.abs();
            let idx = pick_uniform(0..weights.len(), rng, |i| best - weights[i] <= tol);
            spec.schedules()[idx]
        }
        PolicySpec::Priority { order } => {
            // Narrow the candidate schedules by each nonempty queue in
            // priority order; skip a flow only when no remaining candidate
            // can serve it.
            let mut candidates: Vec<Schedule> = spec.schedules().to_vec();
            for &f in order {
                if queues[f] == 0 {
                    continue;
                }
                let bit = 1u64 << f;
                if candidates.iter().any(|s| s.mask() & bit != 0) {
                    candidates.retain(|s| s.mask() & bit != 0);
                }
            }
            pick_uniform(candidates.into_iter(), rng, |_| true)
        }
    };
    ScheduleDecision { chosen }
}

/// Uniform choice among the items satisfying `keep`; consumes randomness
/// only when two or more qualify.
fn pick_uniform<T: Copy, R: Rng + ?Sized>(
    items: impl Iterator<Item = T>,
    rng: &mut R,
    keep: impl Fn(T) -> bool,
) -> T {
    let matching: Vec<T> = items.filter(|&x| keep(x)).collect();
    match matching.len() {
        0 => unreachable!("at least one candidate always qualifies"),
        1 => matching[0],
        n => matching[rng.gen_range(0..n)],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::preset;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fig3() -> NetworkSpec {
        NetworkSpec::validate("fig3", 3, vec![vec![0, 1], vec![2]]).unwrap()
    }

    fn parallel2() -> NetworkSpec {
        NetworkSpec::validate("p2", 2, vec![vec![0], vec![1]]).unwrap()
    }

    #[test]
    fn weight_sums_queue_lengths() {
        let s = Schedule::from_flows([0usize, 1]).unwrap();
        assert_eq!(weight(&[5, 3], s, None), 8.0);
    }

    #[test]
    fn weight_applies_exponents() {
        let s = Schedule::from_flows([0usize]).unwrap();
        let w = weight(&[9, 4], s, Some(&[0.5, 1.0]));
        assert!((w - 3.0).abs() < 1e-12);
    }

    #[test]
    fn weight_of_empty_queues_is_zero() {
        let s = Schedule::from_flows([0usize, 1]).unwrap();
        assert_eq!(weight(&[0, 0], s, None), 0.0);
        assert_eq!(weight(&[0, 0], s, Some(&[0.5, 2.0])), 0.0);
    }

    #[test]
    fn max_weight_strict_argmax() {
        let spec = fig3();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // weight({0,1}) = 5 < weight({2}) = 6
        let d = decide(&PolicySpec::MaxWeight, &[4, 1, 6], &spec, &mut rng);
        assert_eq!(d.chosen, spec.schedules()[1]);
        assert!(d.serves(FlowId(2)));
        assert!(!d.serves(FlowId(0)));
    }

    #[test]
    fn max_weight_ties_are_uniform() {
        let spec = parallel2();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let trials = 100_000;
        let mut first = 0u64;
        for _ in 0..trials {
            let d = decide(&PolicySpec::MaxWeight, &[2, 2], &spec, &mut rng);
            if d.serves(FlowId(0)) {
                first += 1;
            }
        }
        let p = first as f64 / trials as f64;
        let sigma = (0.25 / trials as f64).sqrt();
        assert!((p - 0.5).abs() <= 3.0 * sigma, "p={p}");
    }

    #[test]
    fn max_weight_alpha_exponent_arithmetic() {
        let spec = parallel2();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let policy = PolicySpec::MaxWeightAlpha {
            alphas: vec![0.5, 1.0],
        };
        // 9^0.5 = 3 < 4
        let d = decide(&policy, &[9, 4], &spec, &mut rng);
        assert!(d.serves(FlowId(1)));
    }

    #[test]
    fn alpha_one_matches_max_weight_exactly() {
        let (spec, _) = preset("fig3").unwrap();
        let policy_a = PolicySpec::MaxWeightAlpha {
            alphas: vec![1.0; 3],
        };
        let mut rng_q = ChaCha8Rng::seed_from_u64(42);
        let mut rng_mw = ChaCha8Rng::seed_from_u64(99);
        let mut rng_al = ChaCha8Rng::seed_from_u64(99);
        use rand::Rng;
        for _ in 0..5000 {
            let q: Vec<u64> = (0..3).map(|_| rng_q.gen_range(0..50)).collect();
            let a = decide(&PolicySpec::MaxWeight, &q, &spec, &mut rng_mw);
            let b = decide(&policy_a, &q, &spec, &mut rng_al);
            assert_eq!(a, b, "q={q:?}");
        }
    }

    #[test]
    fn chosen_schedule_maximizes_weight() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let f = rng.gen_range(2..6usize);
            let mut schedules: Vec<Vec<usize>> = (0..f).map(|i| vec![i]).collect();
            for _ in 0..rng.gen_range(0..4) {
                let members: Vec<usize> = (0..f).filter(|_| rng.gen_bool(0.5)).collect();
                if !members.is_empty() {
                    schedules.push(members);
                }
            }
            let spec = NetworkSpec::validate("rand", f, schedules).unwrap();
            let q: Vec<u64> = (0..f).map(|_| rng.gen_range(0..100)).collect();
            let d = decide(&PolicySpec::MaxWeight, &q, &spec, &mut rng);
            let w_star = weight(&q, d.chosen, None);
            for &s in spec.schedules() {
                assert!(w_star >= weight(&q, s, None));
            }
        }
    }

    #[test]
    fn argmax_set_is_scale_invariant() {
        use rand::Rng;
        let spec = fig3();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let max_set = |q: &[u64]| -> Vec<bool> {
            let best = spec
                .schedules()
                .iter()
                .map(|&t| weight_int(q, t))
                .max()
                .unwrap();
            spec.schedules()
                .iter()
                .map(|&s| weight_int(q, s) == best)
                .collect()
        };
        for _ in 0..500 {
            let q: Vec<u64> = (0..3).map(|_| rng.gen_range(0..20)).collect();
            for c in [2u64, 7, 100] {
                let scaled: Vec<u64> = q.iter().map(|&v| v * c).collect();
                assert_eq!(max_set(&q), max_set(&scaled), "q={q:?} c={c}");
            }
        }
    }

    #[test]
    fn parallel_max_weight_serves_longest_queue() {
        use rand::Rng;
        let (spec, _) = preset("parallel4").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let q: Vec<u64> = (0..4).map(|_| rng.gen_range(0..30)).collect();
            let d = decide(&PolicySpec::MaxWeight, &q, &spec, &mut rng);
            let served = d.chosen.flows().next().unwrap();
            let longest = *q.iter().max().unwrap();
            assert_eq!(q[served.0], longest);
        }
    }

    #[test]
    fn priority_serves_highest_nonempty_first() {
        let spec = fig3();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let policy = PolicySpec::Priority {
            order: vec![2, 1, 0],
        };
        // flow 2 nonempty -> its schedule wins regardless of weights
        let d = decide(&policy, &[50, 50, 1], &spec, &mut rng);
        assert!(d.serves(FlowId(2)));
        // flow 2 empty -> falls through to {0,1}
        let d = decide(&policy, &[50, 50, 0], &spec, &mut rng);
        assert!(d.serves(FlowId(0)) && d.serves(FlowId(1)));
    }

    #[test]
    fn all_zero_weights_pick_uniformly() {
        let spec = parallel2();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut first = 0u64;
        let trials = 20_000;
        for _ in 0..trials {
            let d = decide(&PolicySpec::MaxWeight, &[0, 0], &spec, &mut rng);
            if d.serves(FlowId(0)) {
                first += 1;
            }
        }
        let p = first as f64 / trials as f64;
        assert!((p - 0.5).abs() < 0.02, "p={p}");
    }

    #[test]
    fn policy_validation() {
        assert!(PolicySpec::MaxWeight.check(3).is_ok());
        assert!(PolicySpec::MaxWeightAlpha { alphas: vec![0.5, 1.0] }
            .check(2)
            .is_ok());
        assert!(PolicySpec::MaxWeightAlpha { alphas: vec![0.5] }
            .check(2)
            .is_err());
        assert!(PolicySpec::MaxWeightAlpha { alphas: vec![0.0, 1.0] }
            .check(2)
            .is_err());
        assert!(PolicySpec::Priority { order: vec![1, 0] }.check(2).is_ok());
        assert!(PolicySpec::Priority { order: vec![1, 1] }.check(2).is_err());
        assert!(PolicySpec::Priority { order: vec![1] }.check(2).is_err());
    }

    #[test]
    fn policy_json_schema() {
        let p = PolicySpec::MaxWeightAlpha {
            alphas: vec![0.4, 1.0],
        };
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, r#"{"kind":"max_weight_alpha","alphas":[0.4,1.0]}"#);
        assert_eq!(
            serde_json::to_string(&PolicySpec::MaxWeight).unwrap(),
            r#"{"kind":"max_weight"}"#
        );
        let back: PolicySpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }
}
