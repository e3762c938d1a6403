//! Closed pair sets, contractions (minors), the invariant-measure polytope
//! and the representation of contracted measures in the base model.

use crate::divergence::PairMeasure;
use crate::error::{Error, Result};
use crate::graph;
use crate::lp::{solve_lp, LpProblem, LpResult};
use crate::mdp::{self, Mdp, SolveMethod};
use crate::tol;

/// Diagnostics of a closedness check.
#[derive(Clone, Debug)]
pub struct ClosednessReport {
    pub closed: bool,
    /// Pairs whose kernel leaves the state set spanned by the candidate.
    pub forward_violations: Vec<usize>,
    /// States of the restriction that are transient under its uniform policy.
    pub transient_states: Vec<usize>,
}

/// A pair set is closed when (1) every member pair's kernel is supported in
/// the member states and (2) the restricted model has no transient states.
pub fn is_closed(model: &Mdp, pairs: &[usize]) -> ClosednessReport {
    if pairs.is_empty() {
        return ClosednessReport {
            closed: false,
            forward_violations: Vec::new(),
            transient_states: Vec::new(),
        };
    }
    let mut member_state = vec![false; model.num_states()];
    for &x in pairs {
        member_state[model.pair_state(x)] = true;
    }
    let mut forward_violations = Vec::new();
    for &x in pairs {
        let leaves = model
            .kernel_row(x)
            .iter()
            .enumerate()
            .any(|(s2, &p)| p > 0.0 && !member_state[s2]);
        if leaves {
            forward_violations.push(x);
        }
    }
    // Restriction graph under the uniform policy over the member pairs.
    let mut adj = vec![Vec::new(); model.num_states()];
    for &x in pairs {
        let s = model.pair_state(x);
        for (s2, &p) in model.kernel_row(x).iter().enumerate() {
            if p > 0.0 && member_state[s2] && !adj[s].contains(&s2) {
                adj[s].push(s2);
            }
        }
    }
    let closed_classes = graph::closed_sccs(&adj);
    let mut in_closed = vec![false; model.num_states()];
    for class in &closed_classes {
        // Ignore the artificial singleton components of non-member states.
        for &s in class {
            if member_state[s] {
                in_closed[s] = true;
            }
        }
    }
    let transient_states: Vec<usize> = (0..model.num_states())
        .filter(|&s| member_state[s] && !in_closed[s])
        .collect();
    ClosednessReport {
        closed: forward_violations.is_empty() && transient_states.is_empty(),
        forward_violations,
        transient_states,
    }
}

/// Communicating components of a closed pair set: the recurrent classes of
/// its uniform restriction, each a sorted state list, ordered by smallest
/// state.
pub fn communicating_components(model: &Mdp, pairs: &[usize]) -> Vec<Vec<usize>> {
    let mut member_state = vec![false; model.num_states()];
    for &x in pairs {
        member_state[model.pair_state(x)] = true;
    }
    let mut adj = vec![Vec::new(); model.num_states()];
    for &x in pairs {
        let s = model.pair_state(x);
        for (s2, &p) in model.kernel_row(x).iter().enumerate() {
            if p > 0.0 && member_state[s2] && !adj[s].contains(&s2) {
                adj[s].push(s2);
            }
        }
    }
    graph::closed_sccs(&adj)
        .into_iter()
        .filter(|class| class.iter().any(|&s| member_state[s]))
        .collect()
}

/// Base state -> contracted state index (components of the closed set merge;
/// every other state is a singleton). Contracted states are ordered by their
/// smallest base state.
pub fn component_map(model: &Mdp, pairs: &[usize]) -> Vec<usize> {
    let components = communicating_components(model, pairs);
    let mut comp_of = vec![usize::MAX; model.num_states()];
    for (ci, class) in components.iter().enumerate() {
        for &s in class {
            comp_of[s] = ci;
        }
    }
    let mut map = vec![usize::MAX; model.num_states()];
    let mut next = 0usize;
    let mut comp_slot = vec![usize::MAX; components.len()];
    for s in 0..model.num_states() {
        if comp_of[s] != usize::MAX {
            if comp_slot[comp_of[s]] == usize::MAX {
                comp_slot[comp_of[s]] = next;
                next += 1;
            }
            map[s] = comp_slot[comp_of[s]];
        } else {
            map[s] = next;
            next += 1;
        }
    }
    map
}

/// A contraction `M / X0` together with the canonical pair bijection.
#[derive(Clone, Debug)]
pub struct ContractedMdp {
    pub minor: Mdp,
    /// Base state -> minor state.
    pub state_map: Vec<usize>,
    /// Base pair -> minor pair (actions are globally unique).
    pub pair_to_minor: Vec<usize>,
    /// Minor pair -> base pair.
    pub minor_to_base: Vec<usize>,
    /// The contracted set, sorted.
    pub contracted_pairs: Vec<usize>,
}

/// Merge every communicating component of a closed pair set into a single
/// state. Rewards and pair identities are preserved; kernel masses are
/// summed over merged states. Merged states are named `[s1+s2]`.
pub fn contract(model: &Mdp, pairs: &[usize]) -> Result<ContractedMdp> {
    let check = is_closed(model, pairs);
    if !check.closed {
        return Err(Error::NotClosed);
    }
    let mut contracted_pairs = pairs.to_vec();
    contracted_pairs.sort_unstable();
    contracted_pairs.dedup();

    let state_map = component_map(model, &contracted_pairs);
    let n_minor = state_map.iter().max().map_or(0, |&m| m + 1);

    // Member lists per minor state, in base order.
    let mut members = vec![Vec::new(); n_minor];
    for s in 0..model.num_states() {
        members[state_map[s]].push(s);
    }
    let names: Vec<String> = members
        .iter()
        .map(|group| {
            let merged = group.iter().any(|&s| {
                model.pairs_at(s).any(|x| contracted_pairs.binary_search(&x).is_ok())
            });
            if merged {
                format!(
                    "[{}]",
                    group.iter().map(|&s| model.state_name(s)).collect::<Vec<_>>().join("+")
                )
            } else {
                model.state_name(group[0]).to_string()
            }
        })
        .collect();

    let mut actions = vec![Vec::new(); n_minor];
    let mut kernel = Vec::new();
    let mut rewards = Vec::new();
    let mut pair_to_minor = vec![usize::MAX; model.num_pairs()];
    let mut minor_to_base = Vec::with_capacity(model.num_pairs());
    for ms in 0..n_minor {
        for &s in &members[ms] {
            for x in model.pairs_at(s) {
                actions[ms].push(model.action_name(x).to_string());
                let mut row = vec![0.0; n_minor];
                for (s2, &p) in model.kernel_row(x).iter().enumerate() {
                    row[state_map[s2]] += p;
                }
                kernel.push(row);
                rewards.push(model.reward(x));
                pair_to_minor[x] = minor_to_base.len();
                minor_to_base.push(x);
            }
        }
    }
    let minor = Mdp::new(names, actions, kernel, rewards)?;
    Ok(ContractedMdp { minor, state_map, pair_to_minor, minor_to_base, contracted_pairs })
}

// ---------------------------------------------------------------------------
// Invariant-measure systems

/// Equality constraints of the invariant-measure polytope, expressed over
/// base pair indices: one row per (contracted) state demanding inflow equal
/// to outflow.
#[derive(Clone, Debug)]
pub struct InvariantSystem {
    /// One row per state; `rows[s][x] = p(s|x) - 1{x rooted at s}`.
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<String>,
}

impl InvariantSystem {
    pub fn residuals(&self, mu: &PairMeasure) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().zip(mu.values()).map(|(&c, &m)| c * m).sum())
            .collect()
    }
}

/// The system of `Phi(model)`.
pub fn invariant_system(model: &Mdp) -> InvariantSystem {
    let n = model.num_states();
    let mut rows = vec![vec![0.0; model.num_pairs()]; n];
    for x in 0..model.num_pairs() {
        for (s, &p) in model.kernel_row(x).iter().enumerate() {
            rows[s][x] += p;
        }
        rows[model.pair_state(x)][x] -= 1.0;
    }
    InvariantSystem {
        rows,
        labels: model.state_names().to_vec(),
    }
}

impl ContractedMdp {
    /// The system of `Phi(minor)`, re-indexed over base pairs.
    pub fn invariant_system(&self) -> InvariantSystem {
        let sys = invariant_system(&self.minor);
        let n_pairs = self.minor.num_pairs();
        let rows = sys
            .rows
            .iter()
            .map(|row| {
                let mut out = vec![0.0; n_pairs];
                for (minor_x, &c) in row.iter().enumerate() {
                    out[self.minor_to_base[minor_x]] = c;
                }
                out
            })
            .collect();
        InvariantSystem { rows, labels: sys.labels }
    }
}

/// Membership in the polytope described by `sys`, within `1e-9` per
/// equation. Requires a finite measure.
pub fn is_invariant(mu: &PairMeasure, sys: &InvariantSystem) -> bool {
    if !mu.all_finite() {
        return false;
    }
    sys.residuals(mu).iter().all(|r| r.abs() <= tol::INVARIANT)
}

// ---------------------------------------------------------------------------
// Representation of contracted invariant measures

/// Given `contracted_mu` invariant in `M / X0`, produce a measure invariant
/// in `M` that matches it exactly outside `X0`. Existence is guaranteed for
/// closed `X0`; the output minimizes the added mass on `X0`, making it
/// deterministic.
pub fn represent_in_base(
    model: &Mdp,
    contracted: &ContractedMdp,
    contracted_mu: &PairMeasure,
) -> Result<PairMeasure> {
    if contracted_mu.len() != model.num_pairs() {
        return Err(Error::PairSpaceMismatch);
    }
    if !contracted_mu.all_finite() {
        return Err(Error::Precondition("contracted measure must be finite".into()));
    }
    let sys = contracted.invariant_system();
    if !is_invariant(contracted_mu, &sys) {
        return Err(Error::Precondition("measure is not invariant in the minor".into()));
    }

    // Truncate to zero on the contracted set (loops of the minor).
    let mut truncated = contracted_mu.clone();
    for &x in &contracted.contracted_pairs {
        truncated.set(x, 0.0);
    }

    let set: Vec<usize> = contracted.contracted_pairs.clone();
    let mut member_state: Vec<usize> = set.iter().map(|&x| model.pair_state(x)).collect();
    member_state.sort_unstable();
    member_state.dedup();

    // Per-state imbalance of the truncated measure.
    let alpha: Vec<f64> = member_state
        .iter()
        .map(|&s| {
            let outflow: f64 = model
                .pairs_at(s)
                .map(|x| truncated.get(x))
                .sum();
            let inflow: f64 = (0..model.num_pairs())
                .map(|x| truncated.get(x) * model.kernel_row(x)[s])
                .sum();
            outflow - inflow
        })
        .collect();

    // Feasibility program: mass on the contracted pairs whose net flow at
    // each member state makes up the imbalance. Minimizing the total mass
    // picks a canonical solution.
    let mut problem = LpProblem::new(vec![1.0; set.len()]);
    for (si, &s) in member_state.iter().enumerate() {
        let mut row = vec![0.0; set.len()];
        for (j, &x) in set.iter().enumerate() {
            row[j] += model.kernel_row(x)[s];
            if model.pair_state(x) == s {
                row[j] -= 1.0;
            }
        }
        problem.push_eq(row, alpha[si]);
    }
    let x0 = match solve_lp(&problem) {
        LpResult::Optimal { x, .. } => x,
        LpResult::Infeasible => {
            return Err(Error::Lp(
                "representation program infeasible; this contradicts the closedness of the set"
                    .into(),
            ))
        }
        other => return Err(Error::Lp(format!("representation program: {other:?}"))),
    };
    let mut out = truncated;
    for (j, &x) in set.iter().enumerate() {
        out.set(x, x0[j].max(0.0));
    }

    let base_sys = invariant_system(model);
    if !is_invariant(&out, &base_sys) {
        return Err(Error::Lp("represented measure fails base invariance".into()));
    }
    Ok(out)
}

/// Convenience wrapper: contract by the optimal pairs of `model` and
/// represent `contracted_mu` there.
pub fn represent_contracted(model: &Mdp, contracted_mu: &PairMeasure) -> Result<PairMeasure> {
    let opt = crate::simulator::solve_for_simulation(model)?;
    let contracted = contract(model, &opt.optimal_pair_list())?;
    represent_in_base(model, &contracted, contracted_mu)
}

// ---------------------------------------------------------------------------
// Inevitable sets

/// A pair set is inevitable when every recurrent class of every gain-optimal
/// deterministic policy intersects it. Randomized optimal policies are not
/// enumerated; their recurrent classes are unions of deterministic
/// structures on this check's instances.
pub fn is_inevitable(model: &Mdp, pairs: &[usize]) -> Result<bool> {
    if pairs.is_empty() {
        return Ok(false);
    }
    let mut in_set = vec![false; model.num_pairs()];
    for &x in pairs {
        in_set[x] = true;
    }
    let opt = mdp::solve_optimal(model, SolveMethod::Enumerate)?;
    for det in &opt.optimal_det_policies {
        let eval = mdp::policy_eval(model, &det.to_policy(model))?;
        for class in &eval.recurrent_classes {
            let hit = class
                .iter()
                .any(|&s| in_set[det.pair_at(model, s)]);
            if !hit {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen;
    use crate::mdp::{policy_eval, solve_optimal, DetPolicy, RewardDist};
    use crate::rng::CounterRng;

    fn contraction_figure_model() -> Mdp {
        // Three states; state 1 has two actions. The closed set is
        // {section, dagger} spanning states {s1, s2}.
        Mdp::new(
            vec!["s1".into(), "s2".into(), "s3".into()],
            vec![
                vec!["star".into(), "section".into()],
                vec!["dagger".into()],
                vec!["ddagger".into()],
            ],
            vec![
                vec![0.6, 0.0, 0.4],
                vec![0.5, 0.5, 0.0],
                vec![0.7, 0.3, 0.0],
                vec![0.4, 0.4, 0.2],
            ],
            vec![
                RewardDist::bernoulli(0.1),
                RewardDist::bernoulli(0.2),
                RewardDist::bernoulli(0.3),
                RewardDist::bernoulli(0.4),
            ],
        )
        .unwrap()
    }

    #[test]
    fn optimal_pairs_are_closed() {
        let m = gen::two_state_nav();
        let opt = solve_optimal(&m, mdp::SolveMethod::Enumerate).unwrap();
        assert!(is_closed(&m, &opt.optimal_pair_list()).closed);
    }

    #[test]
    fn full_pair_space_is_closed_for_communicating_models() {
        let mut rng = CounterRng::new(31);
        for _ in 0..10 {
            let m = gen::random_communicating(&mut rng, 4, 3);
            let all: Vec<usize> = (0..m.num_pairs()).collect();
            assert!(is_closed(&m, &all).closed);
        }
    }

    #[test]
    fn leaving_pair_is_not_closed() {
        let m = gen::two_state_nav();
        let report = is_closed(&m, &[1]); // s1 -> s2 alone leaves {s1}
        assert!(!report.closed);
        assert_eq!(report.forward_violations, vec![1]);
    }

    #[test]
    fn contraction_merges_kernel_mass() {
        let m = contraction_figure_model();
        let closed = vec![1usize, 2]; // section, dagger
        assert!(is_closed(&m, &closed).closed);
        let c = contract(&m, &closed).unwrap();
        assert_eq!(c.minor.num_states(), 2);
        assert_eq!(c.minor.state_name(0), "[s1+s2]");
        assert_eq!(c.minor.state_name(1), "s3");
        let x = c.minor.pair_by_action("ddagger").unwrap();
        assert!((c.minor.kernel_row(x)[0] - 0.8).abs() < 1e-12);
        assert!((c.minor.kernel_row(x)[1] - 0.2).abs() < 1e-12);
        // Rewards ride along unchanged.
        assert_eq!(c.minor.reward(x), m.reward(3));
    }

    #[test]
    fn singleton_contraction_marks_merged_state() {
        let m = gen::two_state_nav();
        let c = contract(&m, &[0]).unwrap();
        assert_eq!(c.minor.num_states(), 2);
        assert_eq!(c.minor.state_name(0), "[s1]");
        assert_eq!(c.minor.num_pairs(), m.num_pairs());
    }

    #[test]
    fn ten_circle_contracts_to_six_states() {
        let m = gen::ten_circle();
        let opt = solve_optimal(&m, mdp::SolveMethod::Enumerate).unwrap();
        let c = contract(&m, &opt.optimal_pair_list()).unwrap();
        assert_eq!(c.minor.num_states(), 6);
    }

    #[test]
    fn contract_rejects_open_sets() {
        let m = gen::two_state_nav();
        assert!(matches!(contract(&m, &[1]), Err(Error::NotClosed)));
    }

    #[test]
    fn two_state_invariant_measures_balance_the_cycle() {
        let m = gen::two_state_nav();
        let sys = invariant_system(&m);
        let balanced = PairMeasure::from_values(vec![0.3, 0.7, 0.7]).unwrap();
        assert!(is_invariant(&balanced, &sys));
        let unbalanced = PairMeasure::from_values(vec![0.3, 0.7, 0.5]).unwrap();
        assert!(!is_invariant(&unbalanced, &sys));
        let zero = PairMeasure::zeros(3);
        assert!(is_invariant(&zero, &sys));
    }

    #[test]
    fn stationary_measures_are_invariant() {
        let mut rng = CounterRng::new(4);
        for _ in 0..10 {
            let m = gen::random_communicating(&mut rng, 4, 2);
            let sys = invariant_system(&m);
            let det = DetPolicy::new((0..m.num_states()).map(|_| 0).collect());
            let policy = det.to_policy(&m);
            let eval = policy_eval(&m, &policy).unwrap();
            let mut mu = PairMeasure::zeros(m.num_pairs());
            for c in 0..eval.recurrent_classes.len() {
                for (x, w) in eval.pair_stationary(&m, &policy, c) {
                    mu.set(x, mu.get(x) + w);
                }
            }
            assert!(is_invariant(&mu, &sys));
        }
    }

    #[test]
    fn lifted_invariant_measures_stay_invariant_in_minor() {
        let m = gen::two_state_nav();
        let opt = solve_optimal(&m, mdp::SolveMethod::Enumerate).unwrap();
        let c = contract(&m, &opt.optimal_pair_list()).unwrap();
        let minor_sys = c.invariant_system();
        let mu = PairMeasure::from_values(vec![0.4, 0.3, 0.3]).unwrap();
        assert!(is_invariant(&mu, &invariant_system(&m)));
        assert!(is_invariant(&mu, &minor_sys));
    }

    #[test]
    fn base_extreme_points_lift_to_the_minor_on_random_models() {
        let mut rng = CounterRng::new(808);
        let mut tested = 0;
        while tested < 20 {
            let m = gen::random_communicating(&mut rng, 4, 2);
            let opt = solve_optimal(&m, mdp::SolveMethod::Enumerate).unwrap();
            let optimal = opt.optimal_pair_list();
            if optimal.len() == m.num_pairs() {
                continue;
            }
            let c = contract(&m, &optimal).unwrap();
            // Random extreme point of Phi(M) on the unit-mass slice.
            let n = m.num_pairs();
            let mut prob = LpProblem::new((0..n).map(|_| rng.next_f64()).collect());
            for row in &invariant_system(&m).rows {
                prob.push_eq(row.clone(), 0.0);
            }
            prob.push_eq(vec![1.0; n], 1.0);
            let LpResult::Optimal { x, .. } = solve_lp(&prob) else {
                panic!("sampling the base polytope failed")
            };
            let mu =
                PairMeasure::from_values(x.into_iter().map(|v| v.max(0.0)).collect()).unwrap();
            assert!(is_invariant(&mu, &c.invariant_system()), "lift failed");
            tested += 1;
        }
    }

    #[test]
    fn representation_on_two_state() {
        let m = gen::two_state_nav();
        let opt = solve_optimal(&m, mdp::SolveMethod::Enumerate).unwrap();
        let c = contract(&m, &opt.optimal_pair_list()).unwrap();
        let mass = 2.5;
        let contracted_mu = PairMeasure::from_values(vec![0.0, mass, mass]).unwrap();
        assert!(is_invariant(&contracted_mu, &c.invariant_system()));
        let mu = represent_in_base(&m, &c, &contracted_mu).unwrap();
        assert_eq!(mu.get(1), mass);
        assert_eq!(mu.get(2), mass);
        assert!(mu.get(0) >= 0.0);
        assert!(is_invariant(&mu, &invariant_system(&m)));
    }

    #[test]
    fn representation_of_zero_is_zero() {
        let m = gen::two_state_nav();
        let mu = represent_contracted(&m, &PairMeasure::zeros(3)).unwrap();
        assert!(mu.values().iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn truncation_equality_on_random_models() {
        let mut rng = CounterRng::new(123);
        let mut tested = 0;
        while tested < 25 {
            let m = gen::random_communicating(&mut rng, 4, 2);
            let opt = solve_optimal(&m, mdp::SolveMethod::Enumerate).unwrap();
            let optimal = opt.optimal_pair_list();
            if optimal.len() == m.num_pairs() {
                continue; // nothing outside the contracted set
            }
            let c = contract(&m, &optimal).unwrap();
            // Random extreme point of Phi(minor) with unit total mass.
            let sys = c.invariant_system();
            let n = m.num_pairs();
            let mut prob = LpProblem::new((0..n).map(|_| rng.next_f64()).collect());
            for row in &sys.rows {
                prob.push_eq(row.clone(), 0.0);
            }
            prob.push_eq(vec![1.0; n], 1.0);
            let LpResult::Optimal { x, .. } = solve_lp(&prob) else {
                panic!("sampling the contracted polytope failed")
            };
            let contracted_mu = PairMeasure::from_values(
                x.iter().map(|&v| v.max(0.0)).collect(),
            )
            .unwrap();
            let mu = represent_in_base(&m, &c, &contracted_mu).unwrap();
            for x in 0..n {
                if !optimal.contains(&x) {
                    assert!(
                        (mu.get(x) - contracted_mu.get(x)).abs() <= 1e-9,
                        "truncation mismatch at pair {x}"
                    );
                }
            }
            tested += 1;
        }
    }

    #[test]
    fn inevitability_examples() {
        let m = gen::two_state_nav();
        let opt = solve_optimal(&m, mdp::SolveMethod::Enumerate).unwrap();
        assert!(is_inevitable(&m, &opt.optimal_pair_list()).unwrap());
        assert!(!is_inevitable(&m, &[]).unwrap());
        // The loop policy never plays s2 -> s1.
        assert!(!is_inevitable(&m, &[2]).unwrap());
    }
}
