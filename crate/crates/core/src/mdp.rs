//! Finite average-reward MDPs: model type, validation, policy evaluation
//! (gain, bias, recurrent structure), optimal solutions with Bellman gaps,
//! pair classification and diameter.
//!
//! Pairs are indexed in lexicographic `(state, action)` order and that index
//! is the canonical ordering for every vector over the pair space. Action
//! identifiers are globally unique, so a pair is equivalently addressed by
//! its action name.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph;
use crate::linalg;
use crate::par;
use crate::tol;

/// Reward distribution attached to a state-action pair.
///
/// A Gaussian with zero variance is normalized to a point mass at
/// construction, so `Gaussian` always carries `var > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RewardDist {
    Bernoulli { mean: f64 },
    Gaussian { mean: f64, var: f64 },
    Dirac { value: f64 },
}

impl RewardDist {
    pub fn bernoulli(mean: f64) -> Self {
        RewardDist::Bernoulli { mean }
    }

    pub fn gaussian(mean: f64, var: f64) -> Self {
        if var == 0.0 {
            RewardDist::Dirac { value: mean }
        } else {
            RewardDist::Gaussian { mean, var }
        }
    }

    pub fn dirac(value: f64) -> Self {
        RewardDist::Dirac { value }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            RewardDist::Bernoulli { mean } => mean,
            RewardDist::Gaussian { mean, .. } => mean,
            RewardDist::Dirac { value } => value,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            RewardDist::Bernoulli { mean } => mean * (1.0 - mean),
            RewardDist::Gaussian { var, .. } => var,
            RewardDist::Dirac { .. } => 0.0,
        }
    }

    /// Re-apply construction normalization (wire data bypasses constructors).
    fn normalized(self) -> Self {
        match self {
            RewardDist::Gaussian { mean, var } if var == 0.0 => RewardDist::Dirac { value: mean },
            other => other,
        }
    }

    fn parameter_issue(&self) -> Option<String> {
        match *self {
            RewardDist::Bernoulli { mean } => {
                if !mean.is_finite() || !(0.0..=1.0).contains(&mean) {
                    Some(format!("bernoulli mean {mean} outside [0, 1]"))
                } else {
                    None
                }
            }
            RewardDist::Gaussian { mean, var } => {
                if !mean.is_finite() || !var.is_finite() || var < 0.0 {
                    Some(format!("gaussian parameters ({mean}, {var}) invalid"))
                } else {
                    None
                }
            }
            RewardDist::Dirac { value } => {
                if !value.is_finite() {
                    Some(format!("dirac value {value} invalid"))
                } else {
                    None
                }
            }
        }
    }
}

/// Finite MDP over named states and globally unique named actions.
#[derive(Clone, Debug, PartialEq)]
pub struct Mdp {
    states: Vec<String>,
    actions: Vec<Vec<String>>,
    /// Dense transition rows, one per pair, over states.
    kernel: Vec<Vec<f64>>,
    rewards: Vec<RewardDist>,
    pair_state: Vec<usize>,
    pair_offset: Vec<usize>,
}

impl Mdp {
    /// Build a model from per-state action lists, dense kernel rows in
    /// canonical pair order and one reward per pair. Structural problems
    /// (shape mismatches, duplicate identifiers) are rejected here; numeric
    /// problems are reported by [`Mdp::validate`].
    pub fn new(
        states: Vec<String>,
        actions: Vec<Vec<String>>,
        kernel: Vec<Vec<f64>>,
        rewards: Vec<RewardDist>,
    ) -> Result<Mdp> {
        if states.is_empty() {
            return Err(Error::Model("no states".into()));
        }
        if actions.len() != states.len() {
            return Err(Error::Model("one action list per state required".into()));
        }
        let mut seen_states = BTreeSet::new();
        for s in &states {
            if !seen_states.insert(s.clone()) {
                return Err(Error::Model(format!("duplicate state id {s:?}")));
            }
        }
        let mut seen_actions = BTreeSet::new();
        for list in &actions {
            for a in list {
                if !seen_actions.insert(a.clone()) {
                    return Err(Error::Model(format!("duplicate action id {a:?}")));
                }
            }
        }
        let n_pairs: usize = actions.iter().map(|l| l.len()).sum();
        if kernel.len() != n_pairs || rewards.len() != n_pairs {
            return Err(Error::Model(format!(
                "expected {n_pairs} kernel rows and rewards, got {} and {}",
                kernel.len(),
                rewards.len()
            )));
        }
        for row in &kernel {
            if row.len() != states.len() {
                return Err(Error::Model("kernel row length != state count".into()));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Model("non-finite kernel entry".into()));
            }
        }
        let mut pair_state = Vec::with_capacity(n_pairs);
        let mut pair_offset = Vec::with_capacity(states.len());
        for (s, list) in actions.iter().enumerate() {
            pair_offset.push(pair_state.len());
            for _ in list {
                pair_state.push(s);
            }
        }
        let rewards = rewards.into_iter().map(RewardDist::normalized).collect();
        Ok(Mdp { states, actions, kernel, rewards, pair_state, pair_offset })
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_pairs(&self) -> usize {
        self.pair_state.len()
    }

    pub fn state_name(&self, s: usize) -> &str {
        &self.states[s]
    }

    pub fn state_names(&self) -> &[String] {
        &self.states
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    /// Pair indices rooted at state `s`.
    pub fn pairs_at(&self, s: usize) -> std::ops::Range<usize> {
        let lo = self.pair_offset[s];
        let hi = lo + self.actions[s].len();
        lo..hi
    }

    pub fn action_count(&self, s: usize) -> usize {
        self.actions[s].len()
    }

    pub fn pair_state(&self, x: usize) -> usize {
        self.pair_state[x]
    }

    /// Index of the pair's action within its state's action list.
    pub fn pair_action_local(&self, x: usize) -> usize {
        x - self.pair_offset[self.pair_state[x]]
    }

    pub fn pair_index(&self, s: usize, a_local: usize) -> usize {
        self.pair_offset[s] + a_local
    }

    /// Globally unique action name of the pair.
    pub fn action_name(&self, x: usize) -> &str {
        &self.actions[self.pair_state[x]][self.pair_action_local(x)]
    }

    pub fn pair_by_action(&self, action: &str) -> Option<usize> {
        (0..self.num_pairs()).find(|&x| self.action_name(x) == action)
    }

    pub fn describe_pair(&self, x: usize) -> String {
        format!("({}, {})", self.states[self.pair_state[x]], self.action_name(x))
    }

    pub fn kernel_row(&self, x: usize) -> &[f64] {
        &self.kernel[x]
    }

    pub fn reward(&self, x: usize) -> RewardDist {
        self.rewards[x]
    }

    /// Clone with pair `x`'s kernel row replaced.
    pub fn with_kernel_row(&self, x: usize, row: Vec<f64>) -> Result<Mdp> {
        if row.len() != self.num_states() {
            return Err(Error::Model("kernel row length != state count".into()));
        }
        let mut m = self.clone();
        m.kernel[x] = row;
        Ok(m)
    }

    /// Clone with pair `x`'s reward replaced.
    pub fn with_reward(&self, x: usize, reward: RewardDist) -> Mdp {
        let mut m = self.clone();
        m.rewards[x] = reward.normalized();
        m
    }

    /// Adjacency over states using every positive-probability transition.
    pub fn union_graph(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_states()];
        for x in 0..self.num_pairs() {
            let s = self.pair_state[x];
            for (s2, &p) in self.kernel[x].iter().enumerate() {
                if p > 0.0 && !adj[s].contains(&s2) {
                    adj[s].push(s2);
                }
            }
        }
        adj
    }

    pub fn mean_reward(&self, x: usize) -> f64 {
        self.rewards[x].mean()
    }

    /// Same state count and per-state action counts.
    pub fn same_pair_space(&self, other: &Mdp) -> bool {
        self.states == other.states && self.actions == other.actions
    }
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Clone, Debug, Serialize)]
pub struct ValidationIssue {
    /// Offending pair or state identifier.
    pub subject: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
    /// Reachability findings: reported, but communicating-ness is decided
    /// by [`is_communicating`] / [`diameter`], which carry their own error.
    pub warnings: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Check probability rows, reward parameters, empty action sets and
/// reachability (from the first state through the union graph). A valid
/// model passes all checks.
pub fn validate(model: &Mdp) -> ValidationReport {
    let mut issues = Vec::new();
    let mut warnings = Vec::new();
    for (s, list) in model.actions.iter().enumerate() {
        if list.is_empty() {
            issues.push(ValidationIssue {
                subject: model.states[s].clone(),
                message: format!("state {:?} has an empty action set", model.states[s]),
            });
        }
    }
    for x in 0..model.num_pairs() {
        let row = &model.kernel[x];
        for (s2, &p) in row.iter().enumerate() {
            if p < 0.0 {
                issues.push(ValidationIssue {
                    subject: model.action_name(x).to_string(),
                    message: format!(
                        "negative kernel entry {} -> {:?}: {p}",
                        model.describe_pair(x),
                        model.states[s2]
                    ),
                });
            }
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > tol::KERNEL_ROW {
            issues.push(ValidationIssue {
                subject: model.action_name(x).to_string(),
                message: format!("kernel row not stochastic at {}: sums to {sum}", model.describe_pair(x)),
            });
        }
        if let Some(detail) = model.rewards[x].parameter_issue() {
            issues.push(ValidationIssue {
                subject: model.action_name(x).to_string(),
                message: format!("reward at {}: {detail}", model.describe_pair(x)),
            });
        }
    }
    let reach = graph::reachable_from(&model.union_graph(), 0);
    for (s, seen) in reach.iter().enumerate() {
        if !seen {
            warnings.push(ValidationIssue {
                subject: model.states[s].clone(),
                message: format!("state {:?} unreachable from {:?}", model.states[s], model.states[0]),
            });
        }
    }
    ValidationReport { issues, warnings }
}

// ---------------------------------------------------------------------------
// Policies

/// Stationary randomized policy; one probability row per state over that
/// state's actions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    rows: Vec<Vec<f64>>,
}

impl Policy {
    pub fn new(rows: Vec<Vec<f64>>, model: &Mdp) -> Result<Policy> {
        if rows.len() != model.num_states() {
            return Err(Error::Model("one policy row per state required".into()));
        }
        for (s, row) in rows.iter().enumerate() {
            if row.len() != model.action_count(s) {
                return Err(Error::Model(format!(
                    "policy row at {:?} has wrong length",
                    model.states[s]
                )));
            }
            if row.iter().any(|&p| !p.is_finite() || p < 0.0) {
                return Err(Error::Model("negative or non-finite policy entry".into()));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > tol::POLICY_ROW {
                return Err(Error::Model(format!(
                    "policy row at {:?} sums to {sum}",
                    model.states[s]
                )));
            }
            if row.iter().all(|&p| p == 0.0) {
                return Err(Error::Model("empty policy support".into()));
            }
        }
        Ok(Policy { rows })
    }

    /// Uniform over the pairs selected by `keep`; states where nothing is
    /// kept fall back to uniform over all actions.
    pub fn uniform_over(model: &Mdp, keep: impl Fn(usize) -> bool) -> Policy {
        let mut rows = Vec::with_capacity(model.num_states());
        for s in 0..model.num_states() {
            let pairs: Vec<usize> = model.pairs_at(s).collect();
            let kept: Vec<usize> = pairs.iter().copied().filter(|&x| keep(x)).collect();
            let chosen = if kept.is_empty() { pairs } else { kept };
            let mut row = vec![0.0; model.action_count(s)];
            for &x in &chosen {
                row[model.pair_action_local(x)] = 1.0 / chosen.len() as f64;
            }
            rows.push(row);
        }
        Policy { rows }
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.rows[s]
    }

    pub fn prob(&self, s: usize, a_local: usize) -> f64 {
        self.rows[s][a_local]
    }
}

/// Deterministic policy: a local action index per state.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DetPolicy {
    pub choice: Vec<usize>,
}

impl DetPolicy {
    pub fn new(choice: Vec<usize>) -> DetPolicy {
        DetPolicy { choice }
    }

    pub fn to_policy(&self, model: &Mdp) -> Policy {
        let rows = (0..model.num_states())
            .map(|s| {
                let mut row = vec![0.0; model.action_count(s)];
                row[self.choice[s]] = 1.0;
                row
            })
            .collect();
        Policy { rows }
    }

    /// Pair played at state `s`.
    pub fn pair_at(&self, model: &Mdp, s: usize) -> usize {
        model.pair_index(s, self.choice[s])
    }

    pub fn describe(&self, model: &Mdp) -> String {
        (0..model.num_states())
            .map(|s| model.action_name(self.pair_at(model, s)).to_string())
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Number of deterministic policies.
pub fn det_policy_count(model: &Mdp) -> u128 {
    model
        .actions
        .iter()
        .map(|l| l.len() as u128)
        .product()
}

/// Lexicographic enumeration of all deterministic policies.
pub fn enumerate_det_policies(model: &Mdp) -> Result<DetPolicyIter> {
    let count = det_policy_count(model);
    if count > tol::ENUM_GUARD as u128 {
        return Err(Error::EnumerationGuard(count));
    }
    Ok(DetPolicyIter {
        sizes: model.actions.iter().map(|l| l.len()).collect(),
        next: Some(vec![0; model.num_states()]),
    })
}

pub struct DetPolicyIter {
    sizes: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl Iterator for DetPolicyIter {
    type Item = DetPolicy;

    fn next(&mut self) -> Option<DetPolicy> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        // Odometer with the last state moving fastest.
        let mut pos = self.sizes.len();
        loop {
            if pos == 0 {
                self.next = None;
                break;
            }
            pos -= 1;
            succ[pos] += 1;
            if succ[pos] < self.sizes[pos] {
                self.next = Some(succ);
                break;
            }
            succ[pos] = 0;
        }
        Some(DetPolicy { choice: current })
    }
}

/// Deterministic policy with index `i` in the lexicographic enumeration.
pub fn det_policy_by_index(model: &Mdp, mut i: u128) -> DetPolicy {
    let n = model.num_states();
    let mut choice = vec![0usize; n];
    for s in (0..n).rev() {
        let k = model.action_count(s) as u128;
        choice[s] = (i % k) as usize;
        i /= k;
    }
    DetPolicy { choice }
}

// ---------------------------------------------------------------------------
// Policy evaluation

/// Gain, bias and recurrent structure of a stationary policy.
///
/// The bias is normalized per recurrent class: the stationary-weighted mean
/// of the bias over each class is zero.
#[derive(Clone, Debug)]
pub struct PolicyEvaluation {
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
    /// Disjoint recurrent classes, each a sorted list of states.
    pub recurrent_classes: Vec<Vec<usize>>,
    /// Stationary distribution per class, aligned with `recurrent_classes`.
    pub class_stationary: Vec<Vec<f64>>,
    /// Recurrent pairs of the policy, sorted (the set `X_pi`).
    pub recurrent_pairs: Vec<usize>,
}

impl PolicyEvaluation {
    pub fn class_gain(&self, class: usize) -> f64 {
        self.gain[self.recurrent_classes[class][0]]
    }

    pub fn is_unichain(&self) -> bool {
        self.recurrent_classes.len() == 1
    }

    pub fn is_recurrent_everywhere(&self, n_states: usize) -> bool {
        self.recurrent_classes.iter().map(|c| c.len()).sum::<usize>() == n_states
    }

    /// Stationary measure of class `c` lifted to pairs: `nu(s) pi(a|s)`.
    pub fn pair_stationary(&self, model: &Mdp, policy: &Policy, class: usize) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for (i, &s) in self.recurrent_classes[class].iter().enumerate() {
            let nu = self.class_stationary[class][i];
            for x in model.pairs_at(s) {
                let p = policy.prob(s, model.pair_action_local(x));
                if p > 0.0 {
                    out.push((x, nu * p));
                }
            }
        }
        out
    }
}

/// Transition matrix and mean reward of the chain induced by `policy`.
fn induced_chain(model: &Mdp, policy: &Policy) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = model.num_states();
    let mut p = vec![vec![0.0; n]; n];
    let mut r = vec![0.0; n];
    for s in 0..n {
        for x in model.pairs_at(s) {
            let w = policy.prob(s, model.pair_action_local(x));
            if w == 0.0 {
                continue;
            }
            r[s] += w * model.mean_reward(x);
            for (s2, &q) in model.kernel_row(x).iter().enumerate() {
                p[s][s2] += w * q;
            }
        }
    }
    (p, r)
}

/// Evaluate a stationary policy: recurrent classes, stationary laws, gain
/// everywhere (via absorption for transient states) and bias from the
/// Poisson equation with per-class normalization.
pub fn policy_eval(model: &Mdp, policy: &Policy) -> Result<PolicyEvaluation> {
    let n = model.num_states();
    let (p, r) = induced_chain(model, policy);

    let adj: Vec<Vec<usize>> = (0..n)
        .map(|s| (0..n).filter(|&s2| p[s][s2] > 0.0).collect())
        .collect();
    let classes = graph::closed_sccs(&adj);
    if classes.is_empty() {
        return Err(Error::DegenerateChain("no recurrent class".into()));
    }

    // Stationary distribution per class: nu (P_c - I) = 0, sum nu = 1.
    let mut class_stationary = Vec::with_capacity(classes.len());
    for class in &classes {
        let k = class.len();
        let mut a = vec![vec![0.0; k]; k];
        let mut b = vec![0.0; k];
        for (j, &sj) in class.iter().enumerate() {
            for (i, &si) in class.iter().enumerate() {
                a[j][i] = p[si][sj] - if i == j { 1.0 } else { 0.0 };
            }
        }
        // Replace the last equation by the normalization.
        for v in a[k - 1].iter_mut() {
            *v = 1.0;
        }
        b[k - 1] = 1.0;
        let nu = linalg::solve(a, b)
            .ok_or_else(|| Error::DegenerateChain("stationary solve failed".into()))?;
        // Check nu P = nu.
        for (j, &sj) in class.iter().enumerate() {
            let back: f64 = class.iter().enumerate().map(|(i, &si)| nu[i] * p[si][sj]).sum();
            if (back - nu[j]).abs() > tol::STATIONARY {
                return Err(Error::DegenerateChain(format!(
                    "stationary residual {}",
                    (back - nu[j]).abs()
                )));
            }
        }
        class_stationary.push(nu);
    }

    // Gain on recurrent classes, then on transient states via absorption.
    let mut gain = vec![f64::NAN; n];
    let mut in_class = vec![usize::MAX; n];
    for (ci, class) in classes.iter().enumerate() {
        let g: f64 = class
            .iter()
            .enumerate()
            .map(|(i, &s)| class_stationary[ci][i] * r[s])
            .sum();
        for &s in class {
            gain[s] = g;
            in_class[s] = ci;
        }
    }
    let transient: Vec<usize> = (0..n).filter(|&s| in_class[s] == usize::MAX).collect();
    if !transient.is_empty() {
        let m = transient.len();
        let mut a = vec![vec![0.0; m]; m];
        let mut b = vec![0.0; m];
        for (i, &si) in transient.iter().enumerate() {
            for (j, &sj) in transient.iter().enumerate() {
                a[i][j] = if i == j { 1.0 } else { 0.0 } - p[si][sj];
            }
            for s2 in 0..n {
                if in_class[s2] != usize::MAX {
                    b[i] += p[si][s2] * gain[s2];
                }
            }
        }
        let gt = linalg::solve(a, b)
            .ok_or_else(|| Error::DegenerateChain("transient gain solve failed".into()))?;
        for (i, &s) in transient.iter().enumerate() {
            gain[s] = gt[i];
        }
    }

    // Bias per recurrent class: (I - P_c + 1 nu^T) b = r - g gives nu.b = 0.
    let mut bias = vec![f64::NAN; n];
    for (ci, class) in classes.iter().enumerate() {
        let k = class.len();
        let mut a = vec![vec![0.0; k]; k];
        let mut b = vec![0.0; k];
        for (i, &si) in class.iter().enumerate() {
            for (j, &sj) in class.iter().enumerate() {
                a[i][j] = if i == j { 1.0 } else { 0.0 } - p[si][sj] + class_stationary[ci][j];
            }
            b[i] = r[si] - gain[si];
        }
        let bc = linalg::solve(a, b)
            .ok_or_else(|| Error::DegenerateChain("bias solve failed".into()))?;
        for (i, &s) in class.iter().enumerate() {
            bias[s] = bc[i];
        }
    }
    if !transient.is_empty() {
        let m = transient.len();
        let mut a = vec![vec![0.0; m]; m];
        let mut b = vec![0.0; m];
        for (i, &si) in transient.iter().enumerate() {
            for (j, &sj) in transient.iter().enumerate() {
                a[i][j] = if i == j { 1.0 } else { 0.0 } - p[si][sj];
            }
            b[i] = r[si] - gain[si];
            for s2 in 0..n {
                if in_class[s2] != usize::MAX {
                    b[i] += p[si][s2] * bias[s2];
                }
            }
        }
        let bt = linalg::solve(a, b)
            .ok_or_else(|| Error::DegenerateChain("transient bias solve failed".into()))?;
        for (i, &s) in transient.iter().enumerate() {
            bias[s] = bt[i];
        }
    }

    // Poisson residual check.
    for s in 0..n {
        let pb: f64 = (0..n).map(|s2| p[s][s2] * bias[s2]).sum();
        let res = gain[s] + bias[s] - r[s] - pb;
        if res.abs() > tol::POISSON {
            return Err(Error::DegenerateChain(format!("poisson residual {res}")));
        }
    }

    let mut recurrent_pairs = Vec::new();
    for class in &classes {
        for &s in class {
            for x in model.pairs_at(s) {
                if policy.prob(s, model.pair_action_local(x)) > 0.0 {
                    recurrent_pairs.push(x);
                }
            }
        }
    }
    recurrent_pairs.sort_unstable();

    Ok(PolicyEvaluation {
        gain,
        bias,
        recurrent_classes: classes,
        class_stationary,
        recurrent_pairs,
    })
}

// ---------------------------------------------------------------------------
// Communicating test and diameter

/// True iff the union graph of positive-probability transitions is strongly
/// connected (equivalently, the diameter is finite).
pub fn is_communicating(model: &Mdp) -> bool {
    graph::is_strongly_connected(&model.union_graph())
}

/// Worst-case over ordered state pairs of the optimal expected hitting time,
/// by value iteration on the first-passage problem per target state.
pub fn diameter(model: &Mdp) -> Result<f64> {
    if !is_communicating(model) {
        return Err(Error::InfiniteDiameter);
    }
    let n = model.num_states();
    if n == 1 {
        return Ok(0.0); // max over the empty set of state pairs
    }
    let per_target = par::map_indexed(n, |target| hitting_times(model, target));
    let mut worst = 0.0f64;
    for (target, h) in per_target.iter().enumerate() {
        for (s, &v) in h.iter().enumerate() {
            if s != target {
                worst = worst.max(v);
            }
        }
    }
    Ok(worst)
}

/// Optimal expected hitting times to `target` from every state
/// (`0` at the target itself by convention of the restart).
pub(crate) fn hitting_times(model: &Mdp, target: usize) -> Vec<f64> {
    let n = model.num_states();
    let mut h = vec![0.0; n];
    let max_iter = 200_000;
    for _ in 0..max_iter {
        let mut next = vec![0.0; n];
        let mut change = 0.0f64;
        for s in 0..n {
            if s == target {
                continue;
            }
            let mut best = f64::INFINITY;
            for x in model.pairs_at(s) {
                let row = model.kernel_row(x);
                let mut v = 1.0;
                for (s2, &p) in row.iter().enumerate() {
                    if s2 != target {
                        v += p * h[s2];
                    }
                }
                best = best.min(v);
            }
            next[s] = best;
            change = change.max((next[s] - h[s]).abs());
        }
        h = next;
        if change < tol::HITTING {
            break;
        }
    }
    h
}

/// Greedy first action of a min-expected-hitting-time route to `target`,
/// ties broken by pair order.
pub(crate) fn routing_action(model: &Mdp, h: &[f64], s: usize, target: usize) -> usize {
    let mut best_pair = model.pairs_at(s).next().unwrap();
    let mut best_val = f64::INFINITY;
    for x in model.pairs_at(s) {
        let row = model.kernel_row(x);
        let mut v = 1.0;
        for (s2, &p) in row.iter().enumerate() {
            if s2 != target {
                v += p * h[s2];
            }
        }
        if v < best_val - 1e-12 {
            best_val = v;
            best_pair = x;
        }
    }
    best_pair
}

// ---------------------------------------------------------------------------
// Optimal solutions

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveMethod {
    Enumerate,
    PolicyIteration,
}

/// Optimal gain, bias, Bellman gaps and the pair classification.
#[derive(Clone, Debug)]
pub struct OptimalSolution {
    /// Optimal gain (constant over states for communicating models).
    pub gain: f64,
    /// Optimal bias vector `h*`.
    pub bias: Vec<f64>,
    /// Bellman gaps per pair, all `>= -1e-9`.
    pub gaps: Vec<f64>,
    /// Pairs with zero Bellman gap.
    pub weakly_optimal: Vec<bool>,
    /// Optimal pairs: recurrent pairs of the uniform weakly-optimal policy.
    pub optimal_pairs: Vec<bool>,
    pub span_bias: f64,
    /// All gain-optimal deterministic policies (enumeration path only; the
    /// policy-iteration path records the terminal policy).
    pub optimal_det_policies: Vec<DetPolicy>,
}

impl OptimalSolution {
    pub fn suboptimal_pairs(&self) -> Vec<usize> {
        (0..self.gaps.len()).filter(|&x| !self.weakly_optimal[x]).collect()
    }

    pub fn optimal_pair_list(&self) -> Vec<usize> {
        (0..self.gaps.len()).filter(|&x| self.optimal_pairs[x]).collect()
    }

    /// Weakly optimal pairs that are not optimal (transient under the
    /// uniform weakly-optimal policy).
    pub fn weak_only_pairs(&self) -> Vec<usize> {
        (0..self.gaps.len())
            .filter(|&x| self.weakly_optimal[x] && !self.optimal_pairs[x])
            .collect()
    }

    /// The model is optimally recurrent iff the optimal pairs span every
    /// state (equivalently, weakly optimal = optimal).
    pub fn is_optimally_recurrent(&self, model: &Mdp) -> bool {
        let mut covered = vec![false; model.num_states()];
        for x in 0..model.num_pairs() {
            if self.optimal_pairs[x] {
                covered[model.pair_state(x)] = true;
            }
        }
        covered.iter().all(|&c| c)
    }

    /// Uniform policy over weakly optimal actions.
    pub fn uniform_weakly_optimal_policy(&self, model: &Mdp) -> Policy {
        Policy::uniform_over(model, |x| self.weakly_optimal[x])
    }
}

fn gaps_from(model: &Mdp, gain: f64, bias: &[f64]) -> Vec<f64> {
    (0..model.num_pairs())
        .map(|x| {
            let s = model.pair_state(x);
            let pb: f64 = model
                .kernel_row(x)
                .iter()
                .zip(bias)
                .map(|(&p, &b)| p * b)
                .sum();
            gain + bias[s] - model.mean_reward(x) - pb
        })
        .collect()
}

fn classification(model: &Mdp, gain: f64, bias: &[f64]) -> Result<(Vec<f64>, Vec<bool>, Vec<bool>)> {
    let gaps = gaps_from(model, gain, bias);
    for (x, &d) in gaps.iter().enumerate() {
        if d < -tol::WKOPT {
            return Err(Error::DegenerateChain(format!(
                "negative Bellman gap {d} at {}",
                model.describe_pair(x)
            )));
        }
    }
    let weakly: Vec<bool> = gaps.iter().map(|&d| d <= tol::WKOPT).collect();
    for s in 0..model.num_states() {
        if !model.pairs_at(s).any(|x| weakly[x]) {
            return Err(Error::DegenerateChain(format!(
                "no weakly optimal action at {:?}",
                model.state_name(s)
            )));
        }
    }
    let uniform = Policy::uniform_over(model, |x| weakly[x]);
    let eval = policy_eval(model, &uniform)?;
    let mut optimal = vec![false; model.num_pairs()];
    for &x in &eval.recurrent_pairs {
        optimal[x] = true;
    }
    Ok((gaps, weakly, optimal))
}

/// Solve for the optimal gain/bias and classify pairs.
///
/// `Enumerate` brute-forces all deterministic policies (guarded); the bias
/// is the per-state maximum over gain-optimal deterministic policies.
/// `PolicyIteration` runs Howard improvement with gain-then-bias steps.
pub fn solve_optimal(model: &Mdp, method: SolveMethod) -> Result<OptimalSolution> {
    if !is_communicating(model) {
        return Err(Error::InfiniteDiameter);
    }
    match method {
        SolveMethod::Enumerate => solve_enumerate(model),
        SolveMethod::PolicyIteration => solve_policy_iteration(model),
    }
}

fn solve_enumerate(model: &Mdp) -> Result<OptimalSolution> {
    let count = det_policy_count(model);
    if count > tol::ENUM_GUARD as u128 {
        return Err(Error::EnumerationGuard(count));
    }
    let count = count as usize;

    let summaries = par::map_indexed(count, |i| {
        let det = det_policy_by_index(model, i as u128);
        let eval = policy_eval(model, &det.to_policy(model))?;
        let min = eval.gain.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = eval.gain.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok::<(f64, f64), Error>((min, max))
    });
    let mut g_star = f64::NEG_INFINITY;
    let mut summary = Vec::with_capacity(count);
    for s in summaries {
        let (min, max) = s?;
        g_star = g_star.max(max);
        summary.push(min);
    }

    let optimal_indices: Vec<usize> = (0..count)
        .filter(|&i| summary[i] >= g_star - 1e-9)
        .collect();
    if optimal_indices.is_empty() {
        return Err(Error::DegenerateChain("no gain-optimal deterministic policy".into()));
    }
    let evals = par::map_indexed(optimal_indices.len(), |j| {
        let det = det_policy_by_index(model, optimal_indices[j] as u128);
        let eval = policy_eval(model, &det.to_policy(model))?;
        Ok::<(DetPolicy, Vec<f64>), Error>((det, eval.bias))
    });
    let mut bias = vec![f64::NEG_INFINITY; model.num_states()];
    let mut optimal_det_policies = Vec::with_capacity(optimal_indices.len());
    for e in evals {
        let (det, b) = e?;
        for (s, &v) in b.iter().enumerate() {
            bias[s] = bias[s].max(v);
        }
        optimal_det_policies.push(det);
    }

    let span_bias = bias.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - bias.iter().cloned().fold(f64::INFINITY, f64::min);
    let (gaps, weakly_optimal, optimal_pairs) = classification(model, g_star, &bias)?;
    Ok(OptimalSolution {
        gain: g_star,
        bias,
        gaps,
        weakly_optimal,
        optimal_pairs,
        span_bias,
        optimal_det_policies,
    })
}

fn solve_policy_iteration(model: &Mdp) -> Result<OptimalSolution> {
    let n = model.num_states();
    let mut det = DetPolicy::new(vec![0; n]);
    let improvement_tol = 1e-10;
    let max_sweeps = 100_000;

    let mut eval = policy_eval(model, &det.to_policy(model))?;
    for _ in 0..max_sweeps {
        let mut changed = false;

        // Gain improvement.
        for s in 0..n {
            let current = det.pair_at(model, s);
            let pg = |x: usize| -> f64 {
                model.kernel_row(x).iter().zip(&eval.gain).map(|(&p, &g)| p * g).sum()
            };
            let cur_val = pg(current);
            let mut best = current;
            let mut best_val = cur_val;
            for x in model.pairs_at(s) {
                let v = pg(x);
                if v > best_val + improvement_tol {
                    best = x;
                    best_val = v;
                }
            }
            if best != current {
                det.choice[s] = model.pair_action_local(best);
                changed = true;
            }
        }

        if !changed {
            // Bias improvement among gain-preserving actions.
            for s in 0..n {
                let current = det.pair_at(model, s);
                let pg = |x: usize| -> f64 {
                    model.kernel_row(x).iter().zip(&eval.gain).map(|(&p, &g)| p * g).sum()
                };
                let ph = |x: usize| -> f64 {
                    model.mean_reward(x)
                        + model
                            .kernel_row(x)
                            .iter()
                            .zip(&eval.bias)
                            .map(|(&p, &b)| p * b)
                            .sum::<f64>()
                };
                let gain_ref = model.pairs_at(s).map(&pg).fold(f64::NEG_INFINITY, f64::max);
                let cur_val = ph(current);
                let mut best = current;
                let mut best_val = cur_val;
                for x in model.pairs_at(s) {
                    if pg(x) >= gain_ref - improvement_tol {
                        let v = ph(x);
                        if v > best_val + improvement_tol {
                            best = x;
                            best_val = v;
                        }
                    }
                }
                if best != current {
                    det.choice[s] = model.pair_action_local(best);
                    changed = true;
                }
            }
        }

        if !changed {
            let g_star = eval.gain.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let spread = g_star - eval.gain.iter().cloned().fold(f64::INFINITY, f64::min);
            if spread > 1e-8 {
                return Err(Error::DegenerateChain(format!(
                    "terminal policy gain not constant (spread {spread})"
                )));
            }
            let bias = eval.bias.clone();
            let span_bias = bias.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - bias.iter().cloned().fold(f64::INFINITY, f64::min);
            let (gaps, weakly_optimal, optimal_pairs) = classification(model, g_star, &bias)?;
            return Ok(OptimalSolution {
                gain: g_star,
                bias,
                gaps,
                weakly_optimal,
                optimal_pairs,
                span_bias,
                optimal_det_policies: vec![det],
            });
        }
        eval = policy_eval(model, &det.to_policy(model))?;
    }
    Err(Error::NotConverged(max_sweeps))
}

/// All gain-optimal deterministic policies (enumeration path).
pub fn gain_optimal_det_policies(model: &Mdp, gain: f64) -> Result<Vec<DetPolicy>> {
    let mut out = Vec::new();
    for det in enumerate_det_policies(model)? {
        let eval = policy_eval(model, &det.to_policy(model))?;
        if eval.gain.iter().all(|&g| g >= gain - 1e-9) {
            out.push(det);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// JSON wire format

/// Serialized form of a model.
///
/// `kernel` maps action ids to sparse rows over state ids (omitted states
/// carry probability zero); `rewards` maps action ids to distributions.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WireModel {
    pub states: Vec<String>,
    pub actions: BTreeMap<String, Vec<String>>,
    pub kernel: BTreeMap<String, BTreeMap<String, f64>>,
    pub rewards: BTreeMap<String, RewardDist>,
}

impl Mdp {
    pub fn from_wire(wire: &WireModel) -> Result<Mdp> {
        let states = wire.states.clone();
        let mut actions = Vec::with_capacity(states.len());
        for s in &states {
            actions.push(wire.actions.get(s).cloned().unwrap_or_default());
        }
        for key in wire.actions.keys() {
            if !states.iter().any(|s| s == key) {
                return Err(Error::Model(format!("actions listed for unknown state {key:?}")));
            }
        }
        let state_index: BTreeMap<&str, usize> =
            states.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut kernel = Vec::new();
        let mut rewards = Vec::new();
        for list in &actions {
            for a in list {
                let row_map = wire
                    .kernel
                    .get(a)
                    .ok_or_else(|| Error::Model(format!("missing kernel row for action {a:?}")))?;
                let mut row = vec![0.0; states.len()];
                for (sname, &p) in row_map {
                    let &i = state_index
                        .get(sname.as_str())
                        .ok_or_else(|| Error::Model(format!("kernel of {a:?} targets unknown state {sname:?}")))?;
                    row[i] = p;
                }
                kernel.push(row);
                let rd = wire
                    .rewards
                    .get(a)
                    .ok_or_else(|| Error::Model(format!("missing reward for action {a:?}")))?;
                rewards.push(*rd);
            }
        }
        Mdp::new(states, actions, kernel, rewards)
    }

    pub fn to_wire(&self) -> WireModel {
        let mut actions = BTreeMap::new();
        for (s, list) in self.actions.iter().enumerate() {
            actions.insert(self.states[s].clone(), list.clone());
        }
        let mut kernel = BTreeMap::new();
        let mut rewards = BTreeMap::new();
        for x in 0..self.num_pairs() {
            let mut row = BTreeMap::new();
            for (s2, &p) in self.kernel[x].iter().enumerate() {
                if p != 0.0 {
                    row.insert(self.states[s2].clone(), p);
                }
            }
            kernel.insert(self.action_name(x).to_string(), row);
            rewards.insert(self.action_name(x).to_string(), self.rewards[x]);
        }
        WireModel { states: self.states.clone(), actions, kernel, rewards }
    }

    pub fn from_json(text: &str) -> Result<Mdp> {
        let wire: WireModel =
            serde_json::from_str(text).map_err(|e| Error::Model(format!("json: {e}")))?;
        Mdp::from_wire(&wire)
    }

    pub fn to_json(&self, pretty: bool) -> String {
        let wire = self.to_wire();
        if pretty {
            serde_json::to_string_pretty(&wire).expect("wire model serializes")
        } else {
            serde_json::to_string(&wire).expect("wire model serializes")
        }
    }
}
