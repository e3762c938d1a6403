//! Acceptance suite: every guarantee this crate makes, checked end to end
//! at its stated tolerance. One test per criterion; each prints a single
//! `criterion N: PASS ...` line (visible with `--nocapture`).

use std::time::Instant;

use mdplab_core::confusing::{self, UnlikelihoodMode};
use mdplab_core::divergence::{self, PairMeasure};
use mdplab_core::gen;
use mdplab_core::hardness::{self, ConfusingDecision, KnapsackInstance, RegretDecision, WidgetVariant};
use mdplab_core::lowerbound::{self, LbClass};
use mdplab_core::lp::{solve_lp, LpProblem, LpResult};
use mdplab_core::mdp::{self, DetPolicy, SolveMethod};
use mdplab_core::rng::CounterRng;
use mdplab_core::simulator::{self, Agent};
use mdplab_core::structure;

fn pass(criterion: usize, detail: &str) {
    println!("criterion {criterion}: PASS - {detail}");
}

/// Independent two-dimensional grid oracle for the two-state inner problem:
/// minimize `kl(1/3, a) + kl(2/3, b)` over `a + b >= 4/3`, coarse sweep then
/// local refinement at 1e-4 resolution.
fn grid_oracle_two_state() -> f64 {
    let eval = |a: f64, b: f64| -> f64 {
        if a + b < 4.0 / 3.0 {
            f64::INFINITY
        } else {
            divergence::kl_bernoulli(1.0 / 3.0, a) + divergence::kl_bernoulli(2.0 / 3.0, b)
        }
    };
    let mut best = f64::INFINITY;
    let mut arg = (0.5, 0.5);
    let coarse = 1000;
    for i in 0..=coarse {
        for j in 0..=coarse {
            let (a, b) = (i as f64 / coarse as f64, j as f64 / coarse as f64);
            let v = eval(a, b);
            if v < best {
                best = v;
                arg = (a, b);
            }
        }
    }
    for i in -15..=15 {
        for j in -15..=15 {
            let a = (arg.0 + i as f64 * 1e-4).clamp(0.0, 1.0);
            let b = (arg.1 + j as f64 * 1e-4).clamp(0.0, 1.0);
            best = best.min(eval(a, b));
        }
    }
    best
}

#[test]
fn criterion_01_two_state_navigation_example() {
    let start = Instant::now();
    let m = gen::two_state_nav();
    let report = lowerbound::lower_bound_general(&m, LbClass::FixedKernelRewards).unwrap();
    let elapsed = start.elapsed();
    let mu_move = report.mu.get(1);
    let mu_back = report.mu.get(2);
    assert!(report.converged, "cutting plane converged");
    assert!((mu_move - mu_back).abs() < 1e-6, "mu symmetric on the cycle");
    assert!((7.69..=7.72).contains(&mu_move), "mu(s1->s2) = {mu_move}");
    assert!((7.69..=7.72).contains(&mu_back), "mu(s2->s1) = {mu_back}");
    assert!((2.55..=2.60).contains(&report.value), "value = {}", report.value);
    assert!(elapsed.as_secs_f64() < 1.0, "runtime {elapsed:?}");
    // Cross-check the inner infimum against the independent grid oracle.
    let oracle = grid_oracle_two_state();
    let pi = DetPolicy::new(vec![1, 0]);
    let u = confusing::unlikelihood(&m, &pi, &report.mu, UnlikelihoodMode::ExactFixedKernel)
        .unwrap();
    assert!((u - mu_move * oracle).abs() < 2e-3, "u = {u}, grid = {}", mu_move * oracle);
    assert!((mu_move * oracle - 1.0).abs() < 2e-3, "binding constraint at the optimum");
    pass(
        1,
        &format!(
            "mu = {mu_move:.4}, value = {:.4}, grid oracle inf = {oracle:.6}, {:.0} ms",
            report.value,
            elapsed.as_secs_f64() * 1e3
        ),
    );
}

#[test]
fn criterion_02_navigation_free_comparison() {
    let m = gen::two_state_nav();
    let report = lowerbound::no_navigation_bound(&m).unwrap();
    let expect_mu = 1.0 / divergence::kl_bernoulli(1.0 / 3.0, 2.0 / 3.0);
    assert!((report.mu.get(1) - expect_mu).abs() < 1e-6, "mu(s1->s2) = {}", report.mu.get(1));
    assert!((expect_mu - 4.32809).abs() < 1e-5);
    let expect_value = 1.0 / std::f64::consts::LN_2;
    assert!((report.value - expect_value).abs() < 1e-6, "value = {}", report.value);
    let general = lowerbound::lower_bound_general(&m, LbClass::FixedKernelRewards).unwrap();
    assert!(report.value < general.value, "relaxation strictly below");
    pass(
        2,
        &format!("mu = {:.6}, value = {:.6} < general {:.6}", report.mu.get(1), report.value, general.value),
    );
}

#[test]
fn criterion_03_bandit_specialization() {
    let start = Instant::now();
    let mut rng = CounterRng::new(2026);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let arms = 2 + rng.next_index(5);
        let means: Vec<f64> = (0..arms).map(|_| 0.05 + 0.90 * rng.next_f64()).collect();
        let m = gen::bandit(&means);
        let general = lowerbound::lower_bound_general(&m, LbClass::FixedKernelRewards).unwrap();
        let closed = lowerbound::bandit_closed_form(&m).unwrap();
        let diff = (general.value - closed.value).abs();
        worst = worst.max(diff);
        assert!(diff < 1e-6, "bandit mismatch {diff} on means {means:?}");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "runtime {elapsed:?}");
    pass(3, &format!("100 bandits, worst |general - closed| = {worst:.2e}, {:.2} s", elapsed.as_secs_f64()));
}

#[test]
fn criterion_04_optimally_recurrent_specialization() {
    let mut rng = CounterRng::new(404);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let m = gen::random_ergodic(&mut rng, 3, 2);
        let closed = lowerbound::recurrent_closed_form(&m).unwrap();
        let general = lowerbound::lower_bound_general(&m, LbClass::Constructive).unwrap();
        let diff = (closed.value - general.value).abs();
        worst = worst.max(diff);
        assert!(
            diff < 1e-4,
            "ergodic mismatch: closed {} vs general {}",
            closed.value,
            general.value
        );
    }
    pass(4, &format!("20 ergodic instances, worst |closed - general| = {worst:.2e}"));
}

#[test]
fn criterion_05_switching_cost_invariance() {
    let means = [0.35, 0.6, 0.8];
    let values: Vec<f64> = [0.1, 1.0, 10.0]
        .iter()
        .map(|&lambda| {
            lowerbound::switching_bandit_bound(&gen::switching_bandit(&means, lambda))
                .unwrap()
                .value
        })
        .collect();
    assert!((values[0] - values[1]).abs() < 1e-8);
    assert!((values[1] - values[2]).abs() < 1e-8);
    pass(5, &format!("3-arm switching bandit, value = {:.6} for lambda in {{0.1, 1, 10}}", values[0]));
}

#[test]
fn criterion_06_contraction_removal() {
    let mut rng = CounterRng::new(660);
    let mut tested = 0;
    let mut worst: f64 = 0.0;
    while tested < 200 {
        let m = gen::random_communicating(&mut rng, 4, 2);
        let opt = mdp::solve_optimal(&m, SolveMethod::Enumerate).unwrap();
        let optimal = opt.optimal_pair_list();
        if optimal.len() == m.num_pairs() {
            continue; // nothing outside the contracted set to represent
        }
        let contracted = structure::contract(&m, &optimal).unwrap();
        // Sample an element of the contracted polytope with a random
        // objective over the unit-mass slice.
        let sys = contracted.invariant_system();
        let n = m.num_pairs();
        let mut problem = LpProblem::new((0..n).map(|_| rng.next_f64()).collect());
        for row in &sys.rows {
            problem.push_eq(row.clone(), 0.0);
        }
        problem.push_eq(vec![1.0; n], 1.0);
        let LpResult::Optimal { x, .. } = solve_lp(&problem) else {
            panic!("sampling the contracted polytope failed");
        };
        let sample =
            PairMeasure::from_values(x.into_iter().map(|v| v.max(0.0)).collect()).unwrap();
        let represented = structure::represent_in_base(&m, &contracted, &sample).unwrap();
        for pair in 0..n {
            if !optimal.contains(&pair) {
                let dev = (represented.get(pair) - sample.get(pair)).abs();
                worst = worst.max(dev);
                assert!(dev <= 1e-9, "truncation deviation {dev} at pair {pair}");
            }
        }
        let base_sys = structure::invariant_system(&m);
        assert!(structure::is_invariant(&represented, &base_sys));
        tested += 1;
    }
    pass(6, &format!("200 models, worst off-optimal truncation deviation = {worst:.2e}"));
}

#[test]
fn criterion_07_knapsack_reduction_equivalence() {
    let start = Instant::now();
    let mut rng = CounterRng::new(770);
    for trial in 0..50 {
        let n = 1 + rng.next_index(10);
        let values: Vec<u64> = (0..n).map(|_| 1 + rng.next_index(9) as u64).collect();
        let weights: Vec<u64> = (0..n).map(|_| 1 + rng.next_index(9) as u64).collect();
        let capacity = rng.next_index(30) as u64;
        let threshold = 1 + rng.next_index(30) as u64;
        let kp = KnapsackInstance::new(values, weights, capacity, threshold).unwrap();

        let feasible = hardness::kp_oracle(&kp).unwrap().is_some();
        let family = hardness::build_widget_family(kp.clone(), WidgetVariant::ConfusingModel).unwrap();
        let decision = hardness::decide_confusing_model(&family, family.alpha, family.beta).unwrap();
        assert_eq!(
            matches!(decision, ConfusingDecision::Yes { .. }),
            feasible,
            "trial {trial}: confusing-model vs knapsack oracle on {kp:?}"
        );

        let co = hardness::co_kp_answer(&kp).unwrap();
        let family = hardness::build_widget_family(kp.clone(), WidgetVariant::Regret).unwrap();
        let regret = hardness::decide_regret(&family, family.rho).unwrap();
        assert_eq!(
            matches!(regret, RegretDecision::Yes { .. }),
            co,
            "trial {trial}: regret vs co-knapsack on {kp:?}"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "runtime {elapsed:?}");
    pass(7, &format!("50 instances, both reductions exact, {:.2} s", elapsed.as_secs_f64()));
}

#[test]
fn criterion_08_widget_closed_forms() {
    let mut rng = CounterRng::new(880);
    let mut worst: f64 = 0.0;
    for trial in 0..6 {
        let n = 1 + rng.next_index(4); // up to four items
        let values: Vec<u64> = (0..n).map(|_| 1 + rng.next_index(9) as u64).collect();
        let weights: Vec<u64> = (0..n).map(|_| 1 + rng.next_index(9) as u64).collect();
        let kp = KnapsackInstance::new(values, weights, 5, 5).unwrap();
        for variant in [WidgetVariant::ConfusingModel, WidgetVariant::Regret] {
            let family = hardness::build_widget_family(kp.clone(), variant).unwrap();
            let mu = family.reference_measure();
            for mask in 0u32..(1 << n) {
                let subset: Vec<usize> = (1..=n).filter(|&k| mask & (1 << (k - 1)) != 0).collect();
                let model = family.model(&subset).unwrap();
                // Gain of the subset's cycle policy.
                let choice: Vec<usize> = (0..model.num_states())
                    .map(|s| usize::from(model.state_name(s) == "zero"))
                    .collect();
                let eval =
                    mdp::policy_eval(&model, &DetPolicy::new(choice).to_policy(&model)).unwrap();
                for &g in &eval.gain {
                    let dev = (g - family.subset_gain(&subset)).abs();
                    worst = worst.max(dev);
                    assert!(dev <= 1e-10, "trial {trial} {variant:?} gain deviation {dev}");
                }
                // Information value against the reference model.
                let direct = divergence::info_value(&mu, &family.reference, &model).unwrap();
                let dev = (direct - family.subset_info(&subset, &mu)).abs();
                worst = worst.max(dev);
                assert!(dev <= 1e-10, "trial {trial} {variant:?} info deviation {dev}");
            }
        }
    }
    pass(8, &format!("all subsets of 6 families (both variants), worst deviation = {worst:.2e}"));
}

#[test]
fn criterion_09_quasi_flow_identity() {
    let mut rng = CounterRng::new(990);
    let mut checked = 0;
    while checked < 1000 {
        let m = gen::random_communicating(&mut rng, 3, 2);
        // Random closed set: the recurrent pairs of a random policy, the
        // optimal pairs, or the full pair space.
        let closed = match rng.next_index(3) {
            0 => {
                let choice: Vec<usize> =
                    (0..m.num_states()).map(|s| rng.next_index(m.action_count(s))).collect();
                let eval =
                    mdp::policy_eval(&m, &DetPolicy::new(choice).to_policy(&m)).unwrap();
                eval.recurrent_pairs
            }
            1 => mdp::solve_optimal(&m, SolveMethod::Enumerate).unwrap().optimal_pair_list(),
            _ => (0..m.num_pairs()).collect(),
        };
        if !structure::is_closed(&m, &closed).closed {
            continue;
        }
        let s0 = rng.next_index(m.num_states());
        let horizon = 20 + rng.next_index(130);
        let traj = simulator::simulate(&m, &Agent::UniformRandom, s0, horizon, rng.next_u64())
            .unwrap();
        let max = simulator::quasi_flow_max_residual(&traj, &m, &closed).unwrap();
        assert_eq!(max, 0, "quasi-flow residual on trajectory {checked}");
        checked += 1;
    }
    pass(9, "1000 fuzzed trajectories, residual exactly 0 at every prefix");
}

#[test]
fn criterion_10_pseudo_regret_decomposition() {
    let mut rng = CounterRng::new(1010);
    let horizon = 10_000;
    let seeds: Vec<u64> = (0..32).map(|i| 5000 + i).collect();
    let mut worst_ratio: f64 = 0.0;
    for trial in 0..20 {
        let m = gen::random_communicating(&mut rng, 3, 2);
        let choice: Vec<usize> =
            (0..m.num_states()).map(|s| rng.next_index(m.action_count(s))).collect();
        let policy = DetPolicy::new(choice).to_policy(&m);
        let s0 = rng.next_index(m.num_states());
        let report = simulator::pseudo_regret_check(&m, &policy, s0, horizon, &seeds).unwrap();
        assert!(
            report.pass,
            "trial {trial}: |diff| {} > span {} + 3 SE {}",
            report.diff, report.span_bias, report.standard_error
        );
        if report.bound > 0.0 {
            worst_ratio = worst_ratio.max(report.diff / report.bound);
        }
    }
    pass(10, &format!("20 (model, policy) pairs at T = 10^4, worst diff/bound = {worst_ratio:.3}"));
}

#[test]
fn criterion_11_log_likelihood_expectation() {
    let m = gen::two_state_nav();
    // Perturbed alternative: cycle rewards lifted, kernel untouched.
    let alt = m
        .with_reward(1, mdplab_core::mdp::RewardDist::bernoulli(0.45))
        .with_reward(2, mdplab_core::mdp::RewardDist::bernoulli(0.60));
    let policy = DetPolicy::new(vec![1, 0]).to_policy(&m);
    let seeds: Vec<u64> = (0..10_000).collect();
    let report = simulator::log_likelihood_check(&m, &alt, &policy, 0, 200, &seeds).unwrap();
    assert!(
        report.pass,
        "|mean L - mean visit KL| = {} > 3 SE = {}",
        report.diff,
        3.0 * report.standard_error
    );
    pass(
        11,
        &format!(
            "10^4 runs: mean ratio {:.4} vs visit-KL {:.4}, diff {:.2e} <= 3 SE {:.2e}",
            report.mean_ratio,
            report.mean_visit_kl,
            report.diff,
            3.0 * report.standard_error
        ),
    );
}

#[test]
fn criterion_12_navigation_convergence() {
    let m = gen::two_state_nav();
    let lb = lowerbound::lower_bound_general(&m, LbClass::FixedKernelRewards).unwrap();
    let seeds: Vec<u64> = (0..40).collect();
    let agent = Agent::ForcedExplore { mu: &lb.mu, c: 2.0 };
    let points =
        simulator::navigation_distance(&m, &agent, 0, &[100, 1000, 10_000], &seeds).unwrap();
    let distances: Vec<f64> = points
        .iter()
        .map(|p| p.distance.expect("suboptimal pairs visited"))
        .collect();
    let inversions = distances.windows(2).filter(|w| w[1] > w[0] + 1e-12).count();
    assert!(inversions <= 1, "distances {distances:?} with {inversions} inversions");
    assert!(
        distances[distances.len() - 1] < 0.05,
        "final distance {} >= 0.05",
        distances[distances.len() - 1]
    );
    pass(
        12,
        &format!(
            "distances {:?} ({} inversion[s]), final < 0.05",
            distances.iter().map(|d| format!("{d:.4}")).collect::<Vec<_>>(),
            inversions
        ),
    );
}
