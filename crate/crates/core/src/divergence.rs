//! KL divergences between reward distributions, kernels and models, the
//! weighted information value of an exploration measure, and trajectory
//! log-likelihood ratios. Natural log throughout; `+inf` is an ordinary
//! value here, signalling an absolute-continuity failure.

use crate::error::{Error, Result};
use crate::mdp::{Mdp, RewardDist};
use crate::simulator::Trajectory;

/// Nonnegative measure over the pair space in canonical order. Entries may
/// be `+inf` (used by the navigation-free bound).
#[derive(Clone, Debug, PartialEq)]
pub struct PairMeasure {
    values: Vec<f64>,
}

impl PairMeasure {
    pub fn zeros(n: usize) -> PairMeasure {
        PairMeasure { values: vec![0.0; n] }
    }

    pub fn from_values(values: Vec<f64>) -> Result<PairMeasure> {
        if values.iter().any(|&v| v.is_nan() || v < 0.0) {
            return Err(Error::Precondition("pair measure entries must be >= 0".into()));
        }
        Ok(PairMeasure { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, x: usize) -> f64 {
        self.values[x]
    }

    pub fn set(&mut self, x: usize, v: f64) {
        debug_assert!(v >= 0.0);
        self.values[x] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, t: f64) -> PairMeasure {
        PairMeasure { values: self.values.iter().map(|&v| v * t).collect() }
    }

    /// Total of `mu(x) * w(x)` with the `0 * inf = 0` convention.
    pub fn weighted_total(&self, weights: &[f64]) -> f64 {
        debug_assert_eq!(weights.len(), self.values.len());
        let mut acc = 0.0;
        for (&m, &w) in self.values.iter().zip(weights) {
            if m == 0.0 || w == 0.0 {
                continue;
            }
            acc += m * w;
        }
        acc
    }
}

/// Bernoulli KL with the usual boundary conventions.
pub fn kl_bernoulli(p: f64, q: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&q));
    if p == q {
        return 0.0;
    }
    if q == 0.0 {
        return if p == 0.0 { 0.0 } else { f64::INFINITY };
    }
    if q == 1.0 {
        return if p == 1.0 { 0.0 } else { f64::INFINITY };
    }
    let mut acc = 0.0;
    if p > 0.0 {
        acc += p * (p / q).ln();
    }
    if p < 1.0 {
        acc += (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
    }
    acc
}

/// `KL(N(m1, v1) || N(m2, v2))` for positive variances.
pub fn kl_gaussian(m1: f64, v1: f64, m2: f64, v2: f64) -> f64 {
    debug_assert!(v1 > 0.0 && v2 > 0.0);
    0.5 * ((v2 / v1).ln() + v1 / v2 + (m1 - m2) * (m1 - m2) / v2 - 1.0)
}

/// KL between reward distributions. Cross-kind comparisons are `+inf`
/// (zero-variance Gaussians were already normalized to point masses).
pub fn kl_reward(a: &RewardDist, b: &RewardDist) -> f64 {
    match (a, b) {
        (RewardDist::Bernoulli { mean: p }, RewardDist::Bernoulli { mean: q }) => {
            kl_bernoulli(*p, *q)
        }
        (RewardDist::Gaussian { mean: m1, var: v1 }, RewardDist::Gaussian { mean: m2, var: v2 }) => {
            kl_gaussian(*m1, *v1, *m2, *v2)
        }
        (RewardDist::Dirac { value: a }, RewardDist::Dirac { value: b }) => {
            if a == b {
                0.0
            } else {
                f64::INFINITY
            }
        }
        _ => f64::INFINITY,
    }
}

/// Categorical KL between probability rows; `+inf` when the support of `p`
/// is not contained in the support of `q`.
pub fn kl_kernel(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let mut acc = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return f64::INFINITY;
        }
        acc += pi * (pi / qi).ln();
    }
    acc
}

/// Per-pair divergence: kernel term plus reward term.
pub fn kl_pair(m1: &Mdp, m2: &Mdp, x: usize) -> Result<f64> {
    if !m1.same_pair_space(m2) {
        return Err(Error::PairSpaceMismatch);
    }
    Ok(kl_kernel(m1.kernel_row(x), m2.kernel_row(x)) + kl_reward(&m1.reward(x), &m2.reward(x)))
}

/// `sum_x mu(x) KL_x(m1 || m2)` with `0 * inf = 0`.
pub fn info_value(mu: &PairMeasure, m1: &Mdp, m2: &Mdp) -> Result<f64> {
    if !m1.same_pair_space(m2) {
        return Err(Error::PairSpaceMismatch);
    }
    if mu.len() != m1.num_pairs() {
        return Err(Error::PairSpaceMismatch);
    }
    let mut acc = 0.0;
    for x in 0..m1.num_pairs() {
        let m = mu.get(x);
        if m == 0.0 {
            continue;
        }
        let kl = kl_pair(m1, m2, x)?;
        if kl == 0.0 {
            continue;
        }
        acc += m * kl;
        if acc.is_infinite() {
            return Ok(f64::INFINITY);
        }
    }
    Ok(acc)
}

/// Log-likelihood ratio of a trajectory between two models.
#[derive(Clone, Copy, Debug)]
pub struct LogLikelihoodRatio {
    pub value: f64,
    /// Set when the alternative model assigns zero probability (or density)
    /// to an observed transition or reward; `value` is then `+inf`.
    pub support_violation: bool,
}

fn reward_log_density_ratio(a: &RewardDist, b: &RewardDist, r: f64) -> Option<f64> {
    match (a, b) {
        (RewardDist::Bernoulli { mean: p1 }, RewardDist::Bernoulli { mean: p2 }) => {
            let (f1, f2) = if r >= 0.5 { (*p1, *p2) } else { (1.0 - *p1, 1.0 - *p2) };
            if f2 == 0.0 {
                if f1 == 0.0 {
                    Some(0.0)
                } else {
                    None
                }
            } else if f1 == 0.0 {
                Some(f64::NEG_INFINITY)
            } else {
                Some((f1 / f2).ln())
            }
        }
        (RewardDist::Gaussian { mean: m1, var: v1 }, RewardDist::Gaussian { mean: m2, var: v2 }) => {
            let d1 = -(r - m1) * (r - m1) / (2.0 * v1) - 0.5 * (2.0 * std::f64::consts::PI * v1).ln();
            let d2 = -(r - m2) * (r - m2) / (2.0 * v2) - 0.5 * (2.0 * std::f64::consts::PI * v2).ln();
            Some(d1 - d2)
        }
        (RewardDist::Dirac { value: a }, RewardDist::Dirac { value: b }) => {
            if a == b {
                Some(0.0)
            } else {
                None
            }
        }
        _ => None,
    }
}

/// `sum_t [ln(p1(S_{t+1}|X_t)/p2(S_{t+1}|X_t)) + ln(rho1(R_t|X_t)/rho2(R_t|X_t))]`.
pub fn log_likelihood_ratio(traj: &Trajectory, m1: &Mdp, m2: &Mdp) -> Result<LogLikelihoodRatio> {
    if !m1.same_pair_space(m2) {
        return Err(Error::PairSpaceMismatch);
    }
    let mut value = 0.0;
    for step in &traj.steps {
        let p1 = m1.kernel_row(step.pair)[step.next_state];
        let p2 = m2.kernel_row(step.pair)[step.next_state];
        if p2 == 0.0 {
            return Ok(LogLikelihoodRatio { value: f64::INFINITY, support_violation: true });
        }
        value += (p1 / p2).ln();
        match reward_log_density_ratio(&m1.reward(step.pair), &m2.reward(step.pair), step.reward) {
            Some(v) => value += v,
            None => {
                return Ok(LogLikelihoodRatio { value: f64::INFINITY, support_violation: true })
            }
        }
    }
    Ok(LogLikelihoodRatio { value, support_violation: false })
}
