//! Confusing and alternative model tests, local modifications of single
//! pairs, the Switch property, the constructive certificate builder and the
//! unlikelihood-of-optimality solvers.
//!
//! Strict inequalities ("beats the optimal gain") are realized as closed
//! ones with a margin: infima are computed on closures, while constructed
//! certificates clear the target by [`tol::CERT_MARGIN`] so that they
//! survive the weak-optimality classification of the modified model.

use serde::Serialize;

use crate::divergence::{self, PairMeasure};
use crate::error::{Error, Result};
use crate::mdp::{
    self, DetPolicy, Mdp, OptimalSolution, PolicyEvaluation, RewardDist, SolveMethod,
};
use crate::tol;

fn solve(model: &Mdp) -> Result<OptimalSolution> {
    if mdp::det_policy_count(model) <= tol::ENUM_GUARD as u128 {
        mdp::solve_optimal(model, SolveMethod::Enumerate)
    } else {
        mdp::solve_optimal(model, SolveMethod::PolicyIteration)
    }
}

// ---------------------------------------------------------------------------
// Alternative / confusing membership

fn reward_dominates(base: &RewardDist, cand: &RewardDist) -> bool {
    match (base, cand) {
        (RewardDist::Bernoulli { mean: p }, RewardDist::Bernoulli { mean: q }) => {
            (*p == 0.0 || *q > 0.0) && (*p == 1.0 || *q < 1.0)
        }
        (RewardDist::Gaussian { .. }, RewardDist::Gaussian { .. }) => true,
        (RewardDist::Dirac { value: a }, RewardDist::Dirac { value: b }) => a == b,
        _ => false,
    }
}

fn kernel_dominates(base: &[f64], cand: &[f64]) -> bool {
    base.iter().zip(cand).all(|(&p, &q)| p == 0.0 || q > 0.0)
}

/// `cand >> base` pairwise: every transition and reward of the base model is
/// absolutely continuous with respect to the candidate's.
pub fn dominates(base: &Mdp, cand: &Mdp) -> Result<bool> {
    if !base.same_pair_space(cand) {
        return Err(Error::PairSpaceMismatch);
    }
    Ok((0..base.num_pairs()).all(|x| {
        kernel_dominates(base.kernel_row(x), cand.kernel_row(x))
            && reward_dominates(&base.reward(x), &cand.reward(x))
    }))
}

/// Do the two models share a gain-optimal policy?
///
/// Deterministic policies are enumerated outright. Randomized coverage uses
/// the shared weakly-optimal closure test: a common optimal randomized
/// policy exists iff some nonempty pair set inside
/// `wkopt(base) ∩ wkopt(cand)` is forward closed in both models.
pub fn share_optimal_policy(base: &Mdp, cand: &Mdp) -> Result<bool> {
    if !base.same_pair_space(cand) {
        return Err(Error::PairSpaceMismatch);
    }
    let opt_b = solve(base)?;
    let opt_c = solve(cand)?;

    // Maximal subset of the shared weakly optimal pairs that is forward
    // closed in both models, by iterative pruning.
    let mut keep: Vec<bool> = (0..base.num_pairs())
        .map(|x| opt_b.weakly_optimal[x] && opt_c.weakly_optimal[x])
        .collect();
    loop {
        let mut member_state = vec![false; base.num_states()];
        for x in 0..base.num_pairs() {
            if keep[x] {
                member_state[base.pair_state(x)] = true;
            }
        }
        let mut changed = false;
        for x in 0..base.num_pairs() {
            if !keep[x] {
                continue;
            }
            let leaves = |row: &[f64]| {
                row.iter().enumerate().any(|(s2, &p)| p > 0.0 && !member_state[s2])
            };
            if leaves(base.kernel_row(x)) || leaves(cand.kernel_row(x)) {
                keep[x] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(keep.iter().any(|&k| k))
}

/// Alternative model test: dominance plus empty intersection of optimal
/// policy sets.
pub fn is_alternative(base: &Mdp, cand: &Mdp) -> Result<bool> {
    Ok(dominates(base, cand)? && !share_optimal_policy(base, cand)?)
}

/// Confusing model test: alternative and exactly equal to the base on the
/// base's optimal pairs.
pub fn is_confusing(base: &Mdp, cand: &Mdp) -> Result<bool> {
    if !base.same_pair_space(cand) {
        return Err(Error::PairSpaceMismatch);
    }
    let opt_b = solve(base)?;
    for x in opt_b.optimal_pair_list() {
        if base.kernel_row(x) != cand.kernel_row(x) || base.reward(x) != cand.reward(x) {
            return Ok(false);
        }
    }
    is_alternative(base, cand)
}

// ---------------------------------------------------------------------------
// Local modifications

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ModFamily {
    /// Interpolate the kernel row towards the optimal policy's row.
    Switch,
    /// Keep the kernel row bit-identical; only the reward moves.
    RewardOnly,
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalModification {
    pub pair: usize,
    pub family: ModFamily,
    /// Switch interpolation parameter (zero for reward-only outcomes).
    pub epsilon: f64,
    pub kernel_row: Vec<f64>,
    pub reward: RewardDist,
    /// `KL` at the pair between the original and the modified model.
    pub kl_cost: f64,
    /// Set when the optimistic set was empty and the gain-maximizing
    /// fallback was applied instead.
    pub fallback: bool,
}

/// Quantities of the reference optimal policy used by the local thresholds.
struct StarContext {
    pi_star: DetPolicy,
    star_bias: Vec<f64>,
    star_eval: PolicyEvaluation,
}

impl StarContext {
    fn new(model: &Mdp, pi_star: DetPolicy) -> Result<StarContext> {
        let star_eval = mdp::policy_eval(model, &pi_star.to_policy(model))?;

        Ok(StarContext { star_bias: star_eval.bias.clone(), pi_star, star_eval })
    }

    fn mean_at(&self, model: &Mdp, s: usize) -> f64 {
        model.mean_reward(self.pi_star.pair_at(model, s))
    }

    fn kernel_at<'m>(&self, model: &'m Mdp, s: usize) -> &'m [f64] {
        model.kernel_row(self.pi_star.pair_at(model, s))
    }
}

/// Cheapest same-kind reward with mean at least `target`; `None` when the
/// family's range cannot reach it.
fn cheapest_reward_above(current: &RewardDist, target: f64) -> Option<(RewardDist, f64)> {
    if current.mean() >= target {
        return Some((*current, 0.0));
    }
    match *current {
        RewardDist::Bernoulli { mean } => {
            if target > 1.0 {
                None
            } else {
                Some((RewardDist::bernoulli(target), divergence::kl_bernoulli(mean, target)))
            }
        }
        RewardDist::Gaussian { mean, var } => Some((
            RewardDist::gaussian(target, var),
            (target - mean) * (target - mean) / (2.0 * var),
        )),
        RewardDist::Dirac { .. } => None,
    }
}

fn mix_rows(p: &[f64], q: &[f64], eps: f64) -> Vec<f64> {
    p.iter().zip(q).map(|(&a, &b)| (1.0 - eps) * a + eps * b).collect()
}

/// KL-cheapest element of the local optimistic set within the family, with
/// strictness margin `margin` on the threshold. `None` when the optimistic
/// set is empty within the family and the reward range.
fn optimistic_modification(
    model: &Mdp,
    ctx: &StarContext,
    x: usize,
    family: ModFamily,
    margin: f64,
) -> Option<LocalModification> {
    let s = model.pair_state(x);
    let p_a = model.kernel_row(x);
    let p_star = ctx.kernel_at(model, s);
    let bias_gap: f64 = p_star
        .iter()
        .zip(p_a)
        .zip(&ctx.star_bias)
        .map(|((&ps, &pa), &b)| (ps - pa) * b)
        .sum();
    let base_threshold = ctx.mean_at(model, s);

    let cost_at = |eps: f64| -> Option<(f64, RewardDist, Vec<f64>)> {
        let (kernel_cost, row) = if eps == 0.0 {
            (0.0, p_a.to_vec())
        } else {
            let row = mix_rows(p_a, p_star, eps);
            (divergence::kl_kernel(p_a, &row), row)
        };
        if kernel_cost.is_infinite() {
            return None;
        }
        let threshold = base_threshold + (1.0 - eps) * bias_gap + margin;
        let (reward, reward_cost) = cheapest_reward_above(&model.reward(x), threshold)?;
        Some((kernel_cost + reward_cost, reward, row))
    };

    match family {
        ModFamily::RewardOnly => {
            let (cost, reward, row) = cost_at(0.0)?;
            Some(LocalModification {
                pair: x,
                family: ModFamily::RewardOnly,
                epsilon: 0.0,
                kernel_row: row,
                reward,
                kl_cost: cost,
                fallback: false,
            })
        }
        ModFamily::Switch => {
            // One-dimensional search over the interpolation parameter; the
            // reward-only limit eps -> 0 is part of the family's closure.
            let grid = 400;
            let mut best: Option<(f64, f64)> = None; // (cost, eps)
            for i in 0..=grid {
                let eps = i as f64 / grid as f64;
                if let Some((cost, _, _)) = cost_at(eps) {
                    if best.map_or(true, |(c, _)| cost < c - 1e-15) {
                        best = Some((cost, eps));
                    }
                }
            }
            let (_, mut eps) = best?;
            // Golden-section refinement around the incumbent.
            let mut lo = (eps - 1.0 / grid as f64).max(0.0);
            let mut hi = (eps + 1.0 / grid as f64).min(1.0);
            for _ in 0..60 {
                let m1 = lo + (hi - lo) * 0.382;
                let m2 = lo + (hi - lo) * 0.618;
                let c1 = cost_at(m1).map_or(f64::INFINITY, |(c, _, _)| c);
                let c2 = cost_at(m2).map_or(f64::INFINITY, |(c, _, _)| c);
                if c1 <= c2 {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            eps = 0.5 * (lo + hi);
            // Snap to the boundary when the refinement ends next to it.
            if eps < 1e-9 {
                eps = 0.0;
            }
            let (cost, reward, row) = cost_at(eps)?;
            Some(LocalModification {
                pair: x,
                family: if eps == 0.0 { ModFamily::RewardOnly } else { ModFamily::Switch },
                epsilon: eps,
                kernel_row: row,
                reward,
                kl_cost: cost,
                fallback: false,
            })
        }
    }
}

/// The argmax branch: maximize the pair's contribution to the gain when the
/// optimistic set is empty (reward pushed to the top of its range).
fn fallback_modification(model: &Mdp, ctx: &StarContext, x: usize, family: ModFamily) -> LocalModification {
    let s = model.pair_state(x);
    let p_a = model.kernel_row(x);
    let p_star = ctx.kernel_at(model, s);
    let (eps, row) = match family {
        ModFamily::RewardOnly => (0.0, p_a.to_vec()),
        ModFamily::Switch => {
            // q . b is linear in eps; pick the better endpoint (eps in (0,1]).
            let qb = |row: &[f64]| -> f64 {
                row.iter().zip(&ctx.star_bias).map(|(&p, &b)| p * b).sum()
            };
            let full = mix_rows(p_a, p_star, 1.0);
            if qb(&full) >= qb(p_a) {
                (1.0, full)
            } else {
                (1e-6, mix_rows(p_a, p_star, 1e-6))
            }
        }
    };
    let reward = match model.reward(x) {
        RewardDist::Bernoulli { .. } => RewardDist::bernoulli(1.0),
        g @ RewardDist::Gaussian { .. } => g, // unbounded family: never needed
        d @ RewardDist::Dirac { .. } => d,
    };
    let kl_cost = divergence::kl_kernel(p_a, &row)
        + divergence::kl_reward(&model.reward(x), &reward);
    LocalModification { pair: x, family, epsilon: eps, kernel_row: row, reward, kl_cost, fallback: true }
}

/// Public entry: KL-cheapest optimistic modification of `x` relative to
/// `pi_star`, or `None` when the optimistic set is empty within the family
/// and the reward range (callers then use the flagged fallback branch).
pub fn local_modification(
    model: &Mdp,
    x: usize,
    pi_star: &DetPolicy,
    family: ModFamily,
) -> Result<Option<LocalModification>> {
    let opt = solve(model)?;
    if opt.optimal_pairs[x] {
        return Err(Error::OptimalPair(model.describe_pair(x)));
    }
    let ctx = StarContext::new(model, pi_star.clone())?;
    Ok(optimistic_modification(model, &ctx, x, family, tol::ZETA))
}

fn apply_modification(model: &Mdp, m: &LocalModification) -> Result<Mdp> {
    Ok(model.with_kernel_row(m.pair, m.kernel_row.clone())?.with_reward(m.pair, m.reward))
}

// ---------------------------------------------------------------------------
// Switch property

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SwitchVerdict {
    Holds,
    Fails,
    Undetermined,
}

#[derive(Clone, Debug)]
pub struct SwitchReport {
    pub verdict: SwitchVerdict,
    /// Chain-structure case that decided the verdict.
    pub case: String,
    /// Verified single-switch confusing model when the property holds.
    pub certificate: Option<Mdp>,
}

/// Decide whether a single kernel switch at `x = (s, pi(s))` towards an
/// optimal policy, plus a reward increase, yields a confusing model for the
/// one-state deviation policy rooted at `x`.
pub fn switch_holds(model: &Mdp, x: usize) -> Result<SwitchReport> {
    let opt = solve(model)?;
    let s = model.pair_state(x);
    let a_local = model.pair_action_local(x);
    let pi_star = opt
        .optimal_det_policies
        .iter()
        .find(|d| d.choice[s] != a_local)
        .cloned()
        .ok_or_else(|| {
            Error::Precondition(format!(
                "{} is played by every optimal policy",
                model.describe_pair(x)
            ))
        })?;
    let mut pi = pi_star.clone();
    pi.choice[s] = a_local;
    let pi_eval = mdp::policy_eval(model, &pi.to_policy(model))?;
    if pi_eval.gain.iter().all(|&g| g >= opt.gain - 1e-9) {
        return Err(Error::Precondition("deviation policy is gain optimal".into()));
    }
    let ctx = StarContext::new(model, pi_star)?;

    let star_recurrent: Vec<bool> = {
        let mut v = vec![false; model.num_states()];
        for class in &ctx.star_eval.recurrent_classes {
            for &st in class {
                v[st] = true;
            }
        }
        v
    };
    let pi_recurrent: Vec<bool> = {
        let mut v = vec![false; model.num_states()];
        for class in &pi_eval.recurrent_classes {
            for &st in class {
                v[st] = true;
            }
        }
        v
    };

    let (verdict, case) = if ctx.star_eval.is_unichain()
        && ctx.star_eval.is_recurrent_everywhere(model.num_states())
    {
        (SwitchVerdict::Holds, "ergodic".to_string())
    } else if ctx.star_eval.is_unichain() {
        if star_recurrent[s] {
            (SwitchVerdict::Holds, "unichain, state recurrent under pi*".to_string())
        } else {
            (SwitchVerdict::Fails, "unichain, state outside S(pi*, M)".to_string())
        }
    } else if pi_recurrent[s] && star_recurrent[s] {
        (SwitchVerdict::Holds, "multichain, state recurrent under both".to_string())
    } else if !star_recurrent[s] {
        (SwitchVerdict::Fails, "multichain, state outside S(pi*, M)".to_string())
    } else {
        (SwitchVerdict::Undetermined, "multichain, uncovered case".to_string())
    };

    if verdict != SwitchVerdict::Holds {
        return Ok(SwitchReport { verdict, case, certificate: None });
    }

    // Verify constructively inside the switch family. A mixture with
    // eps < 1 keeps the original support, so dominance is preserved; large
    // eps brings the reward threshold down to the optimal policy's mean.
    let p_a = model.kernel_row(x).to_vec();
    let p_star = ctx.kernel_at(model, s).to_vec();
    let bias_gap: f64 = p_star
        .iter()
        .zip(&p_a)
        .zip(&ctx.star_bias)
        .map(|((&ps, &pa), &b)| (ps - pa) * b)
        .sum();
    for eps in [0.999_999, 0.9, 0.5, 0.1, 1e-3, 1e-6] {
        let threshold = ctx.mean_at(model, s) + (1.0 - eps) * bias_gap + tol::CERT_MARGIN;
        let Some((reward, _)) = cheapest_reward_above(&model.reward(x), threshold) else {
            continue;
        };
        let row = mix_rows(&p_a, &p_star, eps);
        let cand = model.with_kernel_row(x, row)?.with_reward(x, reward);
        let cand_eval = mdp::policy_eval(&cand, &pi.to_policy(&cand))?;
        let lifted = best_class_gain(&cand_eval);
        if lifted > opt.gain && is_confusing(model, &cand)? {
            return Ok(SwitchReport { verdict, case, certificate: Some(cand) });
        }
    }
    Ok(SwitchReport {
        verdict: SwitchVerdict::Undetermined,
        case: format!("{case}; switch optimistic set empty in the reward range"),
        certificate: None,
    })
}

// ---------------------------------------------------------------------------
// Constructive confusing certificates

#[derive(Clone, Debug)]
pub struct ConfusingCertificate {
    pub modified: Mdp,
    /// Pairs where the certificate differs from the base model, in the
    /// order they were modified.
    pub modified_pairs: Vec<usize>,
    /// Per modified pair, `KL_x(base || modified)`.
    pub kl_costs: Vec<f64>,
    pub policy: DetPolicy,
    /// Best recurrent-class gain of the policy in the modified model.
    pub gain_achieved: f64,
    /// The base model's optimal gain the certificate had to beat.
    pub gain_target: f64,
    pub used_fallback: bool,
}

impl ConfusingCertificate {
    /// `sum_{x in modified} mu(x) KL_x(base || modified)`: an upper bound on
    /// the unlikelihood of optimality of the policy under `mu`.
    pub fn info_upper_bound(&self, mu: &PairMeasure) -> f64 {
        self.modified_pairs
            .iter()
            .zip(&self.kl_costs)
            .map(|(&x, &kl)| if mu.get(x) == 0.0 || kl == 0.0 { 0.0 } else { mu.get(x) * kl })
            .sum()
    }
}

#[derive(Clone, Debug)]
pub enum BuildOutcome {
    Certificate(ConfusingCertificate),
    /// The policy coincides with an optimal one on its recurrent states.
    ActuallyOptimal,
    /// The candidate pairs were exhausted without beating the optimal gain.
    UnconfusinglySuboptimal,
}

fn best_class_gain(eval: &PolicyEvaluation) -> f64 {
    (0..eval.recurrent_classes.len())
        .map(|c| eval.class_gain(c))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Construction of a confusing MDP for a deterministic policy: iteratively
/// apply the KL-cheapest local modification (weighted by `kappa`) over the
/// candidate pairs until the policy's gain beats the optimal gain, with
/// single-pair finishers preferred and ties broken by pair order.
pub fn build_confusing(model: &Mdp, pi: &DetPolicy, kappa: &PairMeasure) -> Result<BuildOutcome> {
    let opt = solve(model)?;
    let pi_star = opt
        .optimal_det_policies
        .first()
        .cloned()
        .ok_or_else(|| Error::Precondition("no optimal deterministic policy".into()))?;
    let ctx = StarContext::new(model, pi_star)?;
    let pi_eval = mdp::policy_eval(model, &pi.to_policy(model))?;

    let differs: Vec<bool> = (0..model.num_states())
        .map(|s| pi.choice[s] != ctx.pi_star.choice[s])
        .collect();
    let pi_recurrent = {
        let mut v = vec![false; model.num_states()];
        for class in &pi_eval.recurrent_classes {
            for &s in class {
                v[s] = true;
            }
        }
        v
    };
    let star_recurrent = {
        let mut v = vec![false; model.num_states()];
        for class in &ctx.star_eval.recurrent_classes {
            for &s in class {
                v[s] = true;
            }
        }
        v
    };

    if !(0..model.num_states()).any(|s| differs[s] && pi_recurrent[s]) {
        return Ok(BuildOutcome::ActuallyOptimal);
    }

    // Candidate pairs and the modification family used at each, following
    // the chain-structure case split. Pairs optimal in the base model are
    // never touched.
    let mut candidates: Vec<(usize, ModFamily)> = Vec::new();
    for s in 0..model.num_states() {
        if !pi_recurrent[s] {
            continue;
        }
        let x = pi.pair_at(model, s);
        if opt.optimal_pairs[x] {
            continue;
        }
        if differs[s] && star_recurrent[s] {
            candidates.push((x, ModFamily::Switch));
        } else if differs[s] || !star_recurrent[s] {
            // Reward-only both where the policies differ off the optimal
            // policy's recurrent states and where they agree outside them.
            candidates.push((x, ModFamily::RewardOnly));
        }
    }
    for &(x, _) in &candidates {
        let k = kappa.get(x);
        if !k.is_finite() || k <= 0.0 {
            return Err(Error::Precondition(format!(
                "kappa must be finite positive on candidate pair {}",
                model.describe_pair(x)
            )));
        }
    }

    let gain_target = opt.gain;
    let mut current = model.clone();
    let mut remaining = candidates;
    let mut modified_pairs = Vec::new();
    let mut kl_costs = Vec::new();
    let mut used_fallback = false;
    let mut achieved = best_class_gain(&pi_eval);

    while achieved < gain_target && !remaining.is_empty() {
        // Evaluate every remaining candidate modification of the current
        // iterate.
        let mods: Vec<(usize, LocalModification, f64)> = remaining
            .iter()
            .enumerate()
            .map(|(idx, &(x, family))| {
                let m = optimistic_modification(&current, &ctx, x, family, tol::CERT_MARGIN)
                    .unwrap_or_else(|| fallback_modification(&current, &ctx, x, family));
                let weighted = kappa.get(x) * m.kl_cost;
                (idx, m, weighted)
            })
            .collect();

        // Single-pair finishers: candidates at recurrent differing states
        // whose lone application already beats the target.
        let mut finishers = Vec::new();
        for (idx, m, w) in &mods {
            let (x, _) = remaining[*idx];
            let s = current.pair_state(x);
            if differs[s] && pi_recurrent[s] {
                let candidate = apply_modification(&current, m)?;
                let eval = mdp::policy_eval(&candidate, &pi.to_policy(&candidate))?;
                if best_class_gain(&eval) >= gain_target {
                    finishers.push((*idx, m.clone(), *w));
                }
            }
        }
        let pool = if finishers.is_empty() { mods } else { finishers };
        // argmin of kappa-weighted KL, ties by pair order.
        let chosen = pool
            .into_iter()
            .min_by(|a, b| {
                a.2.partial_cmp(&b.2)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(remaining[a.0].0.cmp(&remaining[b.0].0))
            })
            .expect("candidate pool is nonempty");
        let (idx, m, _) = chosen;
        used_fallback |= m.fallback;
        current = apply_modification(&current, &m)?;
        let x = remaining[idx].0;
        modified_pairs.push(x);
        kl_costs.push(divergence::kl_pair(model, &current, x)?);
        remaining.remove(idx);
        let eval = mdp::policy_eval(&current, &pi.to_policy(&current))?;
        achieved = best_class_gain(&eval);
    }

    if achieved < gain_target {
        return Ok(BuildOutcome::UnconfusinglySuboptimal);
    }
    // A fallback may have broken absolute continuity (e.g. a Bernoulli
    // clipped to one); only verified certificates are returned.
    if !is_confusing(model, &current)? {
        return Ok(BuildOutcome::UnconfusinglySuboptimal);
    }
    Ok(BuildOutcome::Certificate(ConfusingCertificate {
        modified: current,
        modified_pairs,
        kl_costs,
        policy: pi.clone(),
        gain_achieved: achieved,
        gain_target,
        used_fallback,
    }))
}

// ---------------------------------------------------------------------------
// Unlikelihood of optimality

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnlikelihoodMode {
    /// Exact reward-tilting solution for fixed-kernel reward classes.
    ExactFixedKernel,
    /// Upper bound from the constructive certificate.
    UpperBound,
}

/// Zero-weight Bernoulli pairs are tilted to this mean rather than all the
/// way to one, keeping witnesses absolutely continuous with finite KL.
const BERNOULLI_PIN: f64 = 1.0 - 1e-7;

/// Exact argmin of `mu kl(r, a) - lam nu a` over `a` for a Bernoulli mean,
/// i.e. the stationarity point of the forward KL: `(a - r) / (a(1-a)) = t`
/// with `t = lam nu / mu`.
fn bernoulli_forward_tilt(r: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return r;
    }
    let disc = (1.0 - t) * (1.0 - t) + 4.0 * t * r;
    let a = ((t - 1.0) + disc.sqrt()) / (2.0 * t);
    a.clamp(r, 1.0)
}

/// One recurrent-class reward-tilting problem:
/// `inf { sum mu(x) kl(r(x), a_x) : sum nu(x) mean(a_x) >= g_star }`
/// with `a_x` frozen on optimal pairs and on unmodifiable kinds.
struct ClassTilt<'m> {
    model: &'m Mdp,
    /// `(pair, nu)` for every pair of the class.
    members: Vec<(usize, f64)>,
    /// Free positions within `members`.
    free: Vec<usize>,
    mu: Vec<f64>, // aligned with members
}

impl ClassTilt<'_> {
    fn base_mean(&self) -> f64 {
        self.members.iter().map(|&(x, nu)| nu * self.model.mean_reward(x)).sum()
    }

    fn sup_mean(&self) -> f64 {
        let mut total = 0.0;
        for (i, &(x, nu)) in self.members.iter().enumerate() {
            let top = if self.free.contains(&i) {
                match self.model.reward(x) {
                    RewardDist::Bernoulli { .. } => 1.0,
                    RewardDist::Gaussian { .. } => f64::INFINITY,
                    RewardDist::Dirac { value } => value,
                }
            } else {
                self.model.mean_reward(x)
            };
            total += nu * top;
            if total.is_infinite() {
                return f64::INFINITY;
            }
        }
        total
    }

    /// Tilted mean of free pair `i` at multiplier `lam`. Pairs carrying no
    /// exploration mass are cost-free to move; Bernoulli means are pinned
    /// just below one so that the witness keeps absolute continuity.
    fn tilted_mean(&self, i: usize, lam: f64) -> f64 {
        let (x, nu) = self.members[i];
        let mu = self.mu[i];
        match self.model.reward(x) {
            RewardDist::Bernoulli { mean } => {
                if mu == 0.0 {
                    if lam > 0.0 {
                        BERNOULLI_PIN.max(mean)
                    } else {
                        mean
                    }
                } else {
                    bernoulli_forward_tilt(mean, lam * nu / mu)
                }
            }
            RewardDist::Gaussian { mean, var } => {
                if mu == 0.0 {
                    if lam > 0.0 {
                        f64::INFINITY
                    } else {
                        mean
                    }
                } else {
                    mean + lam * nu * var / mu
                }
            }
            RewardDist::Dirac { value } => value,
        }
    }

    fn constraint_value(&self, lam: f64) -> f64 {
        let mut total = 0.0;
        for (i, &(x, nu)) in self.members.iter().enumerate() {
            let mean = if self.free.contains(&i) {
                self.tilted_mean(i, lam)
            } else {
                self.model.mean_reward(x)
            };
            total += nu * mean;
            if total.is_infinite() {
                return total;
            }
        }
        total
    }

    fn cost_at(&self, lam: f64) -> (f64, Vec<(usize, RewardDist)>) {
        let mut cost = 0.0;
        let mut witness = Vec::new();
        for &i in &self.free {
            let (x, _) = self.members[i];
            let mu = self.mu[i];
            let mean = self.tilted_mean(i, lam);
            let new = match self.model.reward(x) {
                RewardDist::Bernoulli { mean: r } => {
                    let a = mean.min(1.0);
                    if mu > 0.0 {
                        cost += mu * divergence::kl_bernoulli(r, a);
                    }
                    RewardDist::bernoulli(a)
                }
                RewardDist::Gaussian { mean: r, var } => {
                    if mu > 0.0 {
                        cost += mu * (mean - r) * (mean - r) / (2.0 * var);
                    }
                    RewardDist::gaussian(mean, var)
                }
                d @ RewardDist::Dirac { .. } => d,
            };
            witness.push((x, new));
        }
        (cost, witness)
    }

    /// Solve by bisection on the multiplier; returns the optimal cost and
    /// the tilted rewards (a closure point: the class gain equals the
    /// target exactly).
    fn solve(&self, target: f64) -> (f64, Vec<(usize, RewardDist)>) {
        if self.base_mean() >= target {
            return (0.0, Vec::new());
        }
        let sup = self.sup_mean();
        if sup < target {
            return (f64::INFINITY, Vec::new());
        }
        // Zero-weight Gaussian pairs make the constraint free to satisfy.
        let has_free_lunch = self.free.iter().any(|&i| {
            self.mu[i] == 0.0
                && matches!(self.model.reward(self.members[i].0), RewardDist::Gaussian { .. })
        });
        if has_free_lunch {
            // Explicit witness: dump the missing mean on the free pair.
            let &i = self
                .free
                .iter()
                .find(|&&i| {
                    self.mu[i] == 0.0
                        && matches!(
                            self.model.reward(self.members[i].0),
                            RewardDist::Gaussian { .. }
                        )
                })
                .unwrap();
            let (x, nu) = self.members[i];
            let RewardDist::Gaussian { mean, var } = self.model.reward(x) else { unreachable!() };
            let needed = (target - self.base_mean()) / nu;
            return (0.0, vec![(x, RewardDist::gaussian(mean + needed, var))]);
        }

        let mut hi = 1.0;
        let mut expansions = 0;
        while self.constraint_value(hi) < target {
            hi *= 2.0;
            expansions += 1;
            if expansions > 240 {
                // The constraint is only reached with some mean pushed to
                // the very top of its range: the infimum diverges.
                return (f64::INFINITY, Vec::new());
            }
        }
        let mut lo = 0.0;
        while hi - lo > tol::BISECT * hi.max(1.0) {
            let mid = 0.5 * (lo + hi);
            if self.constraint_value(mid) >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        self.cost_at(hi)
    }
}

/// Exact unlikelihood witness: the reward-only confusing model achieving
/// the class infimum, per eligible recurrent class; the minimum over
/// classes is the unlikelihood.
pub(crate) fn unlikelihood_exact_with_witness(
    model: &Mdp,
    opt: &OptimalSolution,
    pi: &DetPolicy,
    mu: &PairMeasure,
) -> Result<(f64, Vec<(usize, RewardDist)>)> {
    unlikelihood_exact_restricted(model, opt, pi, mu, &|_| true)
}

/// As [`unlikelihood_exact_with_witness`], with rewards additionally frozen
/// outside the pairs accepted by `allowed` (used by the navigation-free
/// relaxation, which only modifies positive-gap pairs).
pub(crate) fn unlikelihood_exact_restricted(
    model: &Mdp,
    opt: &OptimalSolution,
    pi: &DetPolicy,
    mu: &PairMeasure,
    allowed: &dyn Fn(usize) -> bool,
) -> Result<(f64, Vec<(usize, RewardDist)>)> {
    let policy = pi.to_policy(model);
    let eval = mdp::policy_eval(model, &policy)?;
    let mut best = f64::INFINITY;
    let mut best_witness = Vec::new();
    let mut eligible = false;
    for c in 0..eval.recurrent_classes.len() {
        if eval.class_gain(c) >= opt.gain - 1e-12 {
            continue; // class already optimal; nothing to beat
        }
        eligible = true;
        let members = eval.pair_stationary(model, &policy, c);
        let free: Vec<usize> = members
            .iter()
            .enumerate()
            .filter(|(_, &(x, _))| {
                !opt.optimal_pairs[x]
                    && allowed(x)
                    && !matches!(model.reward(x), RewardDist::Dirac { .. })
            })
            .map(|(i, _)| i)
            .collect();
        let tilt = ClassTilt {
            model,
            mu: members.iter().map(|&(x, _)| mu.get(x)).collect(),
            members,
            free,
        };
        let (cost, witness) = tilt.solve(opt.gain);
        if cost < best {
            best = cost;
            best_witness = witness;
        }
    }
    if !eligible {
        return Err(Error::Precondition("policy is gain optimal".into()));
    }
    Ok((best, best_witness))
}

/// Unlikelihood of optimality `U(pi, mu, M)`.
///
/// `ExactFixedKernel` solves the reward-tilting dual per recurrent class of
/// the policy and returns the infimum (possibly `+inf` when the reward
/// ranges cannot beat the optimal gain). `UpperBound` reads the constructive
/// certificate's weighted KL total.
pub fn unlikelihood(
    model: &Mdp,
    pi: &DetPolicy,
    mu: &PairMeasure,
    mode: UnlikelihoodMode,
) -> Result<f64> {
    let opt = solve(model)?;
    match mode {
        UnlikelihoodMode::ExactFixedKernel => {
            let (value, _) = unlikelihood_exact_with_witness(model, &opt, pi, mu)?;
            Ok(value)
        }
        UnlikelihoodMode::UpperBound => {
            let mut kappa = mu.clone();
            for x in 0..kappa.len() {
                let v = kappa.get(x);
                if !v.is_finite() || v <= 0.0 {
                    kappa.set(x, 1e-9);
                }
            }
            match build_confusing(model, pi, &kappa)? {
                BuildOutcome::Certificate(cert) => Ok(cert.info_upper_bound(mu)),
                BuildOutcome::ActuallyOptimal => {
                    Err(Error::Precondition("policy is gain optimal".into()))
                }
                BuildOutcome::UnconfusinglySuboptimal => Ok(f64::INFINITY),
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Neighborhoods and local policy improvement

/// Policies differing from `pi` in at most `k` states, in lexicographic
/// order of their choice vectors.
pub fn neighborhood(pi: &DetPolicy, k: usize, model: &Mdp) -> Result<Vec<DetPolicy>> {
    let n = model.num_states();
    let mut size: u128 = 0;
    let mut out = Vec::new();
    let mut choice = vec![0usize; n];
    fn rec(
        model: &Mdp,
        pi: &DetPolicy,
        k: usize,
        s: usize,
        deviations: usize,
        choice: &mut Vec<usize>,
        out: &mut Vec<DetPolicy>,
        size: &mut u128,
    ) -> Result<()> {
        if s == model.num_states() {
            *size += 1;
            if *size > tol::ENUM_GUARD as u128 {
                return Err(Error::EnumerationGuard(*size));
            }
            out.push(DetPolicy::new(choice.clone()));
            return Ok(());
        }
        for a in 0..model.action_count(s) {
            let dev = deviations + usize::from(a != pi.choice[s]);
            if dev > k {
                continue;
            }
            choice[s] = a;
            rec(model, pi, k, s + 1, dev, choice, out, size)?;
        }
        Ok(())
    }
    rec(model, pi, k, 0, 0, &mut choice, &mut out, &mut size)?;
    Ok(out)
}

/// Smallest `k` such that every suboptimal deterministic policy has a
/// policy in its `k`-neighborhood with gain at least as large everywhere and
/// strictly larger somewhere. Brute force.
pub fn local_improvement_order(model: &Mdp) -> Result<usize> {
    let gains: Vec<(DetPolicy, Vec<f64>)> = {
        let mut v = Vec::new();
        for det in mdp::enumerate_det_policies(model)? {
            let eval = mdp::policy_eval(model, &det.to_policy(model))?;
            v.push((det, eval.gain));
        }
        v
    };
    let opt = solve(model)?;
    'order: for k in 1..=model.num_states() {
        for (det, gain) in &gains {
            if gain.iter().all(|&g| g >= opt.gain - 1e-9) {
                continue; // optimal policies need no improvement
            }
            let improving = neighborhood(det, k, model)?.into_iter().any(|other| {
                let other_gain = &gains
                    .iter()
                    .find(|(d, _)| d == &other)
                    .expect("neighborhood stays within the enumeration")
                    .1;
                let ge = other_gain.iter().zip(gain).all(|(&a, &b)| a >= b - 1e-12);
                let gt = other_gain.iter().zip(gain).any(|(&a, &b)| a > b + 1e-9);
                ge && gt
            });
            if !improving {
                continue 'order;
            }
        }
        return Ok(k);
    }
    Ok(model.num_states())
}
