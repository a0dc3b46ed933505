//! Static analysis of a network/traffic pair.
//!
//! - [`traffic_intensity`]: the covering LP `min sum_s zeta_s` subject to
//!   `sum_s zeta_s * s >= lambda`, whose optimum is the traffic intensity
//!   `rho`; traffic is admissible iff `rho < 1`.
//! - [`covering_number`]: exact minimum number of schedules whose union is
//!   all flows (branch-and-bound with a greedy upper bound).
//! - [`fluid_solve`]: departure rates of the Max-Weight fluid model on
//!   partition-structured schedule sets, plus per-flow rate-instability
//!   thresholds.
//! - [`compute_h`] / [`theorem3_bound`] / [`bernoulli_bound`]: explicit
//!   moment-bound formulas for Max-Weight-α.
//! - [`classify_flows`]: per-flow delay-stability classification.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arrivals::ArrivalSpec;
use crate::model::{FlowId, NetworkSpec};
use crate::scheduling::{PolicySpec, SchedulingError};

const LP_EPS: f64 = 1e-9;
/// Feasibility slack for enumerated vertices; tight so that rates at the
/// 1e-9 scale are still resolved exactly.
const FEAS_EPS: f64 = 1e-12;
/// Use exhaustive basic-solution enumeration while the basis count stays
/// below this; larger instances go through the simplex.
const ENUMERATION_BASIS_CAP: u128 = 200_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("expected {want} per-flow values, got {got}")]
    RateCountMismatch { got: usize, want: usize },
    #[error("rates must be finite and nonnegative, got {0}")]
    InvalidRate(f64),
    #[error("instance too large for exact search ({schedules} schedules)")]
    InstanceTooLarge { schedules: usize },
    #[error("fluid-model linear system is singular")]
    SingularSystem,
    #[error("required arrival moment is infinite{}", .flow.map(|f| format!(" for flow {f}")).unwrap_or_default())]
    InfiniteMoment { flow: Option<usize> },
    #[error("traffic intensity must be below 1, got {0}")]
    RhoNotAdmissible(f64),
    #[error("alpha must be positive and finite, got {0}")]
    InvalidAlpha(f64),
    #[error("linear program solver failed: {0}")]
    LpFailure(&'static str),
    #[error(transparent)]
    Scheduling(#[from] SchedulingError),
}

/// Result of the traffic-intensity LP: the optimum `rho` and an optimal
/// schedule weighting `zeta` (one entry per schedule, `sum = rho`,
/// `sum_s zeta_s * s_f >= lambda_f`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrafficIntensity {
    pub rho: f64,
    pub zeta: Vec<f64>,
}

impl TrafficIntensity {
    pub fn admissible(&self) -> bool {
        self.rho < 1.0
    }
}

/// Traffic intensity of a rate vector (Definition: the minimal total
/// weight of a fractional schedule combination covering every rate).
/// `rho >= 1` is a legal, reportable outcome.
pub fn traffic_intensity(
    rates: &[f64],
    spec: &NetworkSpec,
) -> Result<TrafficIntensity, AnalysisError> {
    check_rates(rates, spec)?;
    let n = spec.schedules().len();
    let f = spec.num_flows();
    if binomial(n + f, f) <= ENUMERATION_BASIS_CAP {
        solve_lp_enumerate(rates, spec)
    } else {
        solve_lp_simplex(rates, spec)
    }
}

fn check_rates(rates: &[f64], spec: &NetworkSpec) -> Result<(), AnalysisError> {
    if rates.len() != spec.num_flows() {
        return Err(AnalysisError::RateCountMismatch {
            got: rates.len(),
            want: spec.num_flows(),
        });
    }
    for &r in rates {
        if !(r.is_finite() && r >= 0.0) {
            return Err(AnalysisError::InvalidRate(r));
        }
    }
    Ok(())
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k.min(n));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
        if acc > ENUMERATION_BASIS_CAP {
            return acc;
        }
    }
    acc
}

/// Exhaustive enumeration of basic solutions of the standard-form LP
/// `[A | -I] x = lambda, x >= 0`: every vertex corresponds to a choice of
/// `F` basis columns. Exact up to the linear-solve roundoff.
fn solve_lp_enumerate(
    rates: &[f64],
    spec: &NetworkSpec,
) -> Result<TrafficIntensity, AnalysisError> {
    let f = spec.num_flows();
    let n = spec.schedules().len();
    let ncols = n + f;
    let column = |j: usize, i: usize| -> f64 {
        if j < n {
            if spec.schedules()[j].contains(FlowId(i)) {
                1.0
            } else {
                0.0
            }
        } else if j - n == i {
            -1.0
        } else {
            0.0
        }
    };

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut basis: Vec<usize> = (0..f).collect();
    loop {
        // solve M_B u = lambda for this basis
        let mut m = vec![vec![0.0; f + 1]; f];
        for (bi, &j) in basis.iter().enumerate() {
            for i in 0..f {
                m[i][bi] = column(j, i);
            }
        }
        for i in 0..f {
            m[i][f] = rates[i];
        }
        if let Some(u) = gaussian_solve(&mut m) {
            if u.iter().all(|&v| v >= -FEAS_EPS) {
                let cost: f64 = basis
                    .iter()
                    .zip(&u)
                    .filter(|(&j, _)| j < n)
                    .map(|(_, &v)| v)
                    .sum();
                if best.as_ref().map_or(true, |(c, _)| cost < *c) {
                    let mut zeta = vec![0.0; n];
                    for (&j, &v) in basis.iter().zip(&u) {
                        if j < n {
                            zeta[j] = v.max(0.0);
                        }
                    }
                    best = Some((cost, zeta));
                }
            }
        }
        if !next_combination(&mut basis, ncols) {
            break;
        }
    }
    let (rho, zeta) = best.ok_or(AnalysisError::LpFailure("no basic feasible solution"))?;
    Ok(TrafficIntensity { rho, zeta })
}

/// Advances `indices` to the next k-combination of `0..n`; false when done.
fn next_combination(indices: &mut [usize], n: usize) -> bool {
    let k = indices.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if indices[i] < n - (k - i) {
            indices[i] += 1;
            for j in i + 1..k {
                indices[j] = indices[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Solves the square augmented system in place; `None` if singular.
fn gaussian_solve(m: &mut [Vec<f64>]) -> Option<Vec<f64>> {
    let n = m.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&a, &b| {
            m[a][col].abs().partial_cmp(&m[b][col].abs()).expect("no NaN")
        })?;
        if m[pivot][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, pivot);
        for row in 0..n {
            if row != col {
                let factor = m[row][col] / m[col][col];
                if factor != 0.0 {
                    for k in col..=n {
                        m[row][k] -= factor * m[col][k];
                    }
                }
            }
        }
    }
    Some((0..n).map(|i| m[i][n] / m[i][i]).collect())
}

/// Two-phase dense simplex with Bland's rule on the same standard form.
fn solve_lp_simplex(rates: &[f64], spec: &NetworkSpec) -> Result<TrafficIntensity, AnalysisError> {
    let f = spec.num_flows();
    let n = spec.schedules().len();
    let ncols = n + f + f; // schedules, surpluses, artificials
    let mut rows = vec![vec![0.0; ncols + 1]; f];
    for i in 0..f {
        for (j, s) in spec.schedules().iter().enumerate() {
            if s.contains(FlowId(i)) {
                rows[i][j] = 1.0;
            }
        }
        rows[i][n + i] = -1.0;
        rows[i][n + f + i] = 1.0;
        rows[i][ncols] = rates[i]; // rates >= 0, so artificials are feasible
    }
    let mut basis: Vec<usize> = (0..f).map(|i| n + f + i).collect();

    // phase 1: drive artificials to zero
    let phase1: Vec<f64> = (0..ncols).map(|j| if j >= n + f { 1.0 } else { 0.0 }).collect();
    let obj = simplex_iterate(&mut rows, &mut basis, &phase1, ncols)?;
    if obj > 1e-7 {
        return Err(AnalysisError::LpFailure("phase-1 optimum not zero"));
    }
    // pivot any lingering artificial out of the basis where possible
    for row in 0..f {
        if basis[row] >= n + f {
            if let Some(col) = (0..n + f).find(|&j| rows[row][j].abs() > LP_EPS) {
                pivot(&mut rows, &mut basis, row, col);
            }
        }
    }

    // phase 2: minimize the true cost over non-artificial columns
    let phase2: Vec<f64> = (0..ncols).map(|j| if j < n { 1.0 } else { 0.0 }).collect();
    let rho = simplex_iterate(&mut rows, &mut basis, &phase2, n + f)?;

    let mut zeta = vec![0.0; n];
    for (row, &var) in basis.iter().enumerate() {
        if var < n {
            zeta[var] = rows[row][ncols].max(0.0);
        }
    }
    Ok(TrafficIntensity { rho, zeta })
}

/// Runs Bland-rule pivots until no reduced cost is negative; columns at or
/// beyond `allowed` never enter. Returns the objective value.
fn simplex_iterate(
    rows: &mut [Vec<f64>],
    basis: &mut [usize],
    cost: &[f64],
    allowed: usize,
) -> Result<f64, AnalysisError> {
    let m = rows.len();
    let rhs = rows[0].len() - 1;
    loop {
        // reduced costs from scratch: r_j = c_j - c_B . column_j
        let mut entering = None;
        for j in 0..allowed {
            if basis.contains(&j) {
                continue;
            }
            let mut r = cost[j];
            for i in 0..m {
                r -= cost[basis[i]] * rows[i][j];
            }
            if r < -LP_EPS {
                entering = Some(j); // Bland: first (lowest-index) improving column
                break;
            }
        }
        let Some(col) = entering else {
            let obj = (0..m).map(|i| cost[basis[i]] * rows[i][rhs]).sum();
            return Ok(obj);
        };
        // ratio test, ties broken by lowest basic variable index (Bland)
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            if rows[i][col] > LP_EPS {
                let ratio = rows[i][rhs] / rows[i][col];
                let better = match leave {
                    None => true,
                    Some((li, lr)) => {
                        ratio < lr - LP_EPS
                            || ((ratio - lr).abs() <= LP_EPS && basis[i] < basis[li])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((row, _)) = leave else {
            return Err(AnalysisError::LpFailure("unbounded"));
        };
        pivot(rows, basis, row, col);
    }
}

fn pivot(rows: &mut [Vec<f64>], basis: &mut [usize], row: usize, col: usize) {
    let p = rows[row][col];
    for v in rows[row].iter_mut() {
        *v /= p;
    }
    let pivot_row = rows[row].clone();
    for (i, r) in rows.iter_mut().enumerate() {
        if i != row && r[col] != 0.0 {
            let factor = r[col];
            for (v, pv) in r.iter_mut().zip(&pivot_row) {
                *v -= factor * pv;
            }
        }
    }
    basis[row] = col;
}

/// Exact covering number `k*`: the least number of schedules whose union
/// is every flow. Branch-and-bound seeded with the greedy cover.
pub fn covering_number(spec: &NetworkSpec) -> Result<usize, AnalysisError> {
    if spec.schedules().len() > 10_000 {
        return Err(AnalysisError::InstanceTooLarge {
            schedules: spec.schedules().len(),
        });
    }
    let masks: Vec<u64> = spec.schedules().iter().map(|s| s.mask()).collect();
    let full: u64 = masks.iter().fold(0, |a, &m| a | m);
    let widest = masks.iter().map(|m| m.count_ones()).max().unwrap_or(1);

    // greedy upper bound
    let mut uncovered = full;
    let mut ub = 0usize;
    while uncovered != 0 {
        let pick = masks
            .iter()
            .max_by_key(|&&m| (m & uncovered).count_ones())
            .expect("nonempty schedule set");
        uncovered &= !pick;
        ub += 1;
    }

    let mut best = ub;
    branch_cover(&masks, full, 0, widest, &mut best);
    Ok(best)
}

fn branch_cover(masks: &[u64], uncovered: u64, depth: usize, widest: u32, best: &mut usize) {
    if uncovered == 0 {
        *best = (*best).min(depth);
        return;
    }
    let lower = (uncovered.count_ones() + widest - 1) / widest;
    if depth + lower as usize >= *best {
        return;
    }
    // branch on the uncovered flow with the fewest covering schedules
    let pivot_flow = (0..64)
        .filter(|&f| uncovered & (1 << f) != 0)
        .min_by_key(|&f| masks.iter().filter(|&&m| m & (1 << f) != 0).count())
        .expect("uncovered flow exists");
    let mut covering: Vec<u64> = masks
        .iter()
        .copied()
        .filter(|&m| m & (1 << pivot_flow) != 0)
        .collect();
    covering.sort_by_key(|&m| std::cmp::Reverse((m & uncovered).count_ones()));
    for m in covering {
        branch_cover(masks, uncovered & !m, depth + 1, widest, best);
    }
}

/// Maximum number of flows any single feasible schedule serves.
pub fn s_max(spec: &NetworkSpec) -> usize {
    spec.schedules()
        .iter()
        .map(|s| s.len())
        .max()
        .expect("validated networks have at least one schedule")
}

/// Fluid-model departure rates under Max-Weight during overload episodes.
///
/// Applicable only when the schedule set partitions the flows (each flow in
/// exactly one schedule), which covers the usual worked examples; otherwise
/// `applicable` is false and the vectors are empty. When applicable, the
/// rates solve: equal weight drift across schedules, equal service within a
/// schedule, and total service one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluidSolution {
    pub applicable: bool,
    /// Per-flow departure rate `mu_f`.
    pub departure_rates: Vec<f64>,
    /// `lambda_f > mu_f`: the fluid queue builds during overload.
    pub rate_unstable: Vec<bool>,
    /// Critical arrival rate for each flow, holding the other rates fixed
    /// (`lambda_f` above this makes the flow rate-unstable); `+inf` if the
    /// flow can never be rate-unstable this way.
    pub thresholds: Vec<f64>,
    /// Max absolute residual of the linear system at the returned rates.
    pub max_residual: f64,
}

impl FluidSolution {
    fn not_applicable() -> Self {
        FluidSolution {
            applicable: false,
            departure_rates: Vec::new(),
            rate_unstable: Vec::new(),
            thresholds: Vec::new(),
            max_residual: 0.0,
        }
    }
}

pub fn fluid_solve(rates: &[f64], spec: &NetworkSpec) -> Result<FluidSolution, AnalysisError> {
    check_rates(rates, spec)?;
    let f = spec.num_flows();
    let total_members: usize = spec.schedules().iter().map(|s| s.len()).sum();
    if total_members != f {
        // some flow sits in several schedules (or the union logic would have
        // rejected the spec); the drained-at-equal-rates system only makes
        // sense for partitions
        return Ok(FluidSolution::not_applicable());
    }

    let mu = solve_fluid_system(rates, spec)?;
    let max_residual = fluid_residual(rates, spec, &mu);

    let mut thresholds = vec![f64::INFINITY; f];
    let mut probe = rates.to_vec();
    for flow in 0..f {
        let saved = probe[flow];
        probe[flow] = 0.0;
        let mu_at_zero = solve_fluid_system(&probe, spec)?[flow];
        probe[flow] = 1.0;
        let slope = solve_fluid_system(&probe, spec)?[flow] - mu_at_zero;
        probe[flow] = saved;
        if 1.0 - slope > 1e-9 {
            thresholds[flow] = mu_at_zero / (1.0 - slope);
        }
    }

    let rate_unstable = rates.iter().zip(&mu).map(|(&l, &m)| l > m).collect();
    Ok(FluidSolution {
        applicable: true,
        departure_rates: mu,
        rate_unstable,
        thresholds,
        max_residual,
    })
}

/// Builds and solves the square system in the per-flow rates `mu_f`:
/// drift equality between schedule 0 and every other schedule, equal rates
/// within each schedule, and work conservation.
fn solve_fluid_system(rates: &[f64], spec: &NetworkSpec) -> Result<Vec<f64>, AnalysisError> {
    let f = spec.num_flows();
    let schedules = spec.schedules();
    let mut m: Vec<Vec<f64>> = Vec::with_capacity(f);

    let first: Vec<usize> = schedules[0].flows().map(|x| x.0).collect();
    for s in &schedules[1..] {
        // sum_{g in s0}(lambda_g - mu_g) = sum_{g in s}(lambda_g - mu_g)
        let mut row = vec![0.0; f + 1];
        let mut rhs = 0.0;
        for &g in &first {
            row[g] -= 1.0;
            rhs -= rates[g];
        }
        for g in s.flows() {
            row[g.0] += 1.0;
            rhs += rates[g.0];
        }
        row[f] = rhs;
        m.push(row);
    }
    for s in schedules {
        let members: Vec<usize> = s.flows().map(|x| x.0).collect();
        for pair in members.windows(2) {
            let mut row = vec![0.0; f + 1];
            row[pair[0]] = 1.0;
            row[pair[1]] = -1.0;
            m.push(row);
        }
    }
    let mut row = vec![0.0; f + 1];
    for s in schedules {
        let rep = s.flows().next().expect("schedules are nonempty");
        row[rep.0] = 1.0;
    }
    row[f] = 1.0;
    m.push(row);

    debug_assert_eq!(m.len(), f);
    gaussian_solve(&mut m).ok_or(AnalysisError::SingularSystem)
}

fn fluid_residual(rates: &[f64], spec: &NetworkSpec, mu: &[f64]) -> f64 {
    let schedules = spec.schedules();
    let drift = |i: usize| -> f64 {
        schedules[i]
            .flows()
            .map(|g| rates[g.0] - mu[g.0])
            .sum()
    };
    let mut worst = 0.0f64;
    for i in 1..schedules.len() {
        worst = worst.max((drift(0) - drift(i)).abs());
    }
    for s in schedules {
        let members: Vec<usize> = s.flows().map(|x| x.0).collect();
        for pair in members.windows(2) {
            worst = worst.max((mu[pair[0]] - mu[pair[1]]).abs());
        }
    }
    let conservation: f64 = schedules
        .iter()
        .map(|s| mu[s.flows().next().expect("nonempty").0])
        .sum();
    worst.max((conservation - 1.0).abs())
}

/// The explicit per-flow moment-bound term:
///
/// ```text
/// H = 2k*/(1-rho) * (m + 1)                              alpha <= 1
/// H = (2k*/(1-rho))^alpha * K^alpha + 2k*/(1-rho) * K    alpha > 1
/// K = 2^(alpha-1) * alpha * (m + 1)
/// ```
///
/// where `m = E[A^(alpha+1)]` must be finite and `rho < 1`.
pub fn compute_h(rho: f64, k_star: usize, alpha: f64, moment: f64) -> Result<f64, AnalysisError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(AnalysisError::InvalidAlpha(alpha));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(AnalysisError::RhoNotAdmissible(rho));
    }
    if !moment.is_finite() {
        return Err(AnalysisError::InfiniteMoment { flow: None });
    }
    let base = 2.0 * k_star as f64 / (1.0 - rho);
    if alpha <= 1.0 {
        Ok(base * (moment + 1.0))
    } else {
        let k = 2f64.powf(alpha - 1.0) * alpha * (moment + 1.0);
        Ok(base.powf(alpha) * k.powf(alpha) + base * k)
    }
}

/// Per-flow and total moment bounds: `sum_f E[Q_f^alpha_f] <= sum_f H_f`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub per_flow: Vec<f64>,
    pub total: f64,
}

pub fn theorem3_bound(
    spec: &NetworkSpec,
    arrivals: &[ArrivalSpec],
    alphas: &[f64],
    rho: f64,
) -> Result<BoundReport, AnalysisError> {
    if arrivals.len() != spec.num_flows() || alphas.len() != spec.num_flows() {
        return Err(AnalysisError::RateCountMismatch {
            got: arrivals.len().min(alphas.len()),
            want: spec.num_flows(),
        });
    }
    let k_star = covering_number(spec)?;
    let mut per_flow = Vec::with_capacity(arrivals.len());
    for (f, (spec_f, &alpha)) in arrivals.iter().zip(alphas).enumerate() {
        let m = spec_f.moment(alpha + 1.0);
        if !m.is_finite() {
            return Err(AnalysisError::InfiniteMoment { flow: Some(f) });
        }
        per_flow.push(compute_h(rho, k_star, alpha, m)?);
    }
    let total = per_flow.iter().sum();
    Ok(BoundReport { per_flow, total })
}

/// Mean-queue-sum bound for Bernoulli traffic under Max-Weight:
/// `2 * k* * S_max * (1 + rho) / (1 - rho)`.
pub fn bernoulli_bound(rho: f64, k_star: usize, s_max: usize) -> Result<f64, AnalysisError> {
    if !(0.0..1.0).contains(&rho) {
        return Err(AnalysisError::RhoNotAdmissible(rho));
    }
    Ok(2.0 * k_star as f64 * s_max as f64 * (1.0 + rho) / (1.0 - rho))
}

/// Delay-stability classification of one flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowClass {
    /// Heavy-tailed arrivals: delay unstable under any regenerative policy.
    HeavyTailUnstable,
    /// Light-tailed but conflicting with a heavy-tailed flow: delay
    /// unstable under Max-Weight.
    ConflictUnstable,
    /// Fluid departure rate below the arrival rate: queue builds during
    /// heavy-tailed overload episodes under Max-Weight.
    RateUnstable,
    /// No instability result applies (the converse direction is only
    /// conjectured, so this is not a stability claim).
    Undetermined,
}

impl FlowClass {
    pub fn is_unstable(self) -> bool {
        self != FlowClass::Undetermined
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowReport {
    pub id: usize,
    pub class: FlowClass,
    pub rate: f64,
    pub heavy_tailed: bool,
    /// Fluid departure rate, when the fluid model applies.
    pub mu: Option<f64>,
    /// Fluid rate-instability threshold, when the fluid model applies.
    pub threshold: Option<f64>,
    /// Per-flow Theorem-3 term, when every flow's required moment is finite.
    #[serde(rename = "H")]
    pub h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundSummary {
    pub theorem3_total: Option<f64>,
    pub bernoulli: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub rho: f64,
    pub admissible: bool,
    pub k_star: usize,
    pub s_max: usize,
    pub flows: Vec<FlowReport>,
    pub bounds: BoundSummary,
}

/// Classifies every flow for the given policy.
///
/// Heavy-tailed flows are delay unstable under any of the policies here.
/// Under Max-Weight, light-tailed flows conflicting with a heavy-tailed
/// flow are also unstable, and (when the fluid model applies) so are flows
/// whose rate exceeds their fluid departure rate. Everything else is
/// reported as undetermined; when the Theorem-3 moment condition holds, the
/// finite per-flow bound is attached.
pub fn classify_flows(
    spec: &NetworkSpec,
    arrivals: &[ArrivalSpec],
    policy: &PolicySpec,
) -> Result<StabilityReport, AnalysisError> {
    if arrivals.len() != spec.num_flows() {
        return Err(AnalysisError::RateCountMismatch {
            got: arrivals.len(),
            want: spec.num_flows(),
        });
    }
    policy.check(spec.num_flows())?;

    let rates: Vec<f64> = arrivals.iter().map(|a| a.rate()).collect();
    let heavy: Vec<bool> = arrivals.iter().map(|a| a.is_heavy_tailed()).collect();
    let intensity = traffic_intensity(&rates, spec)?;
    let k_star = covering_number(spec)?;
    let s_max_v = s_max(spec);
    let max_weight = matches!(policy, PolicySpec::MaxWeight);
    let fluid = if max_weight {
        fluid_solve(&rates, spec)?
    } else {
        FluidSolution::not_applicable()
    };

    let alphas: Vec<f64> = (0..spec.num_flows()).map(|f| policy.alpha(f)).collect();
    let theorem3 = if matches!(policy, PolicySpec::Priority { .. }) || !intensity.admissible() {
        None
    } else {
        theorem3_bound(spec, arrivals, &alphas, intensity.rho).ok()
    };
    let all_bernoulli = arrivals.iter().all(|a| {
        matches!(
            a.size,
            crate::arrivals::SizeDistribution::Constant { packets: 1 }
        )
    });
    let bernoulli = if max_weight && all_bernoulli && intensity.admissible() {
        Some(bernoulli_bound(intensity.rho, k_star, s_max_v)?)
    } else {
        None
    };

    let mut flows = Vec::with_capacity(spec.num_flows());
    for f in 0..spec.num_flows() {
        let class = if heavy[f] {
            FlowClass::HeavyTailUnstable
        } else if max_weight
            && (0..spec.num_flows())
                .any(|h| heavy[h] && spec.conflicts(FlowId(f), FlowId(h)).unwrap_or(false))
        {
            FlowClass::ConflictUnstable
        } else if fluid.applicable && fluid.rate_unstable[f] {
            FlowClass::RateUnstable
        } else {
            FlowClass::Undetermined
        };
        flows.push(FlowReport {
            id: f,
            class,
            rate: rates[f],
            heavy_tailed: heavy[f],
            mu: fluid.applicable.then(|| fluid.departure_rates[f]),
            threshold: fluid.applicable.then(|| fluid.thresholds[f]),
            h: theorem3.as_ref().map(|b| b.per_flow[f]),
        });
    }

    Ok(StabilityReport {
        rho: intensity.rho,
        admissible: intensity.admissible(),
        k_star,
        s_max: s_max_v,
        flows,
        bounds: BoundSummary {
            theorem3_total: theorem3.map(|b| b.total),
            bernoulli,
        },
    })
}
