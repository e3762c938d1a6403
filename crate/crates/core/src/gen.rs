//! Model fixtures and random instance generators used by tests, benches and
//! the CLI examples.

use crate::mdp::{Mdp, RewardDist};
use crate::rng::CounterRng;

/// Two-state deterministic model with Bernoulli rewards: a loop at `s1`
/// scoring 2/3 in average and a two-step cycle through `s2` scoring 1/2.
/// Pairs in canonical order: `loop` (s1->s1), `move` (s1->s2), `back`
/// (s2->s1).
pub fn two_state_nav() -> Mdp {
    Mdp::new(
        vec!["s1".into(), "s2".into()],
        vec![vec!["loop".into(), "move".into()], vec!["back".into()]],
        vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]],
        vec![
            RewardDist::bernoulli(2.0 / 3.0),
            RewardDist::bernoulli(1.0 / 3.0),
            RewardDist::bernoulli(2.0 / 3.0),
        ],
    )
    .expect("fixture")
}

/// Smallest legal model: one state, one self-loop with a point reward.
pub fn single_loop(value: f64) -> Mdp {
    Mdp::new(
        vec!["s1".into()],
        vec![vec!["a1".into()]],
        vec![vec![1.0]],
        vec![RewardDist::dirac(value)],
    )
    .expect("fixture")
}

/// Two states, each with only a self-loop: not communicating.
pub fn disconnected_loops() -> Mdp {
    Mdp::new(
        vec!["s1".into(), "s2".into()],
        vec![vec!["a1".into()], vec!["a2".into()]],
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        vec![RewardDist::dirac(0.0), RewardDist::dirac(1.0)],
    )
    .expect("fixture")
}

/// State-less Bernoulli bandit with the given arm means.
pub fn bandit(means: &[f64]) -> Mdp {
    let actions: Vec<String> = (0..means.len()).map(|i| format!("arm{i}")).collect();
    Mdp::new(
        vec!["s".into()],
        vec![actions],
        means.iter().map(|_| vec![1.0]).collect(),
        means.iter().map(|&m| RewardDist::bernoulli(m)).collect(),
    )
    .expect("fixture")
}

/// Bernoulli bandit with switching costs: pair space `S x S`, self-loops
/// carry the arm rewards, off-diagonal moves are deterministic and pay a
/// fixed cost `lambda`.
pub fn switching_bandit(means: &[f64], lambda: f64) -> Mdp {
    let n = means.len();
    let states: Vec<String> = (0..n).map(|i| format!("arm{i}")).collect();
    let mut actions = Vec::with_capacity(n);
    let mut kernel = Vec::new();
    let mut rewards = Vec::new();
    for i in 0..n {
        let mut list = Vec::with_capacity(n);
        for j in 0..n {
            list.push(format!("go{i}to{j}"));
            let mut row = vec![0.0; n];
            row[j] = 1.0;
            kernel.push(row);
            rewards.push(if i == j {
                RewardDist::bernoulli(means[i])
            } else {
                RewardDist::dirac(-lambda)
            });
        }
        actions.push(list);
    }
    Mdp::new(states, actions, kernel, rewards).expect("fixture")
}

/// Ten-state model made of two disjoint five-cycles with Gaussian rewards:
/// the inner circle scores 2 per step, the outer circle 1, and the two
/// connecting actions score 0. States `i0..i4` then `o0..o4`; the choices
/// sit at `i0` (stay inner / jump out) and `o1` (stay outer / jump in).
pub fn ten_circle() -> Mdp {
    let mut states: Vec<String> = (0..5).map(|k| format!("i{k}")).collect();
    states.extend((0..5).map(|k| format!("o{k}")));
    let mut actions = vec![Vec::new(); 10];
    let mut kernel = Vec::new();
    let mut rewards = Vec::new();
    let push = |actions: &mut Vec<Vec<String>>,
                    kernel: &mut Vec<Vec<f64>>,
                    rewards: &mut Vec<RewardDist>,
                    s: usize,
                    name: String,
                    target: usize,
                    mean: f64| {
        actions[s].push(name);
        let mut row = vec![0.0; 10];
        row[target] = 1.0;
        kernel.push(row);
        rewards.push(RewardDist::gaussian(mean, 1.0));
    };
    for s in 0..10 {
        match s {
            0 => {
                push(&mut actions, &mut kernel, &mut rewards, 0, "i0-step".into(), 1, 2.0);
                push(&mut actions, &mut kernel, &mut rewards, 0, "i0-out".into(), 5, 0.0);
            }
            1..=4 => {
                let t = (s + 1) % 5;
                push(&mut actions, &mut kernel, &mut rewards, s, format!("i{s}-step"), t, 2.0);
            }
            6 => {
                push(&mut actions, &mut kernel, &mut rewards, 6, "o1-step".into(), 7, 1.0);
                push(&mut actions, &mut kernel, &mut rewards, 6, "o1-in".into(), 1, 0.0);
            }
            _ => {
                let k = s - 5;
                let t = 5 + (k + 1) % 5;
                push(&mut actions, &mut kernel, &mut rewards, s, format!("o{k}-step"), t, 1.0);
            }
        }
    }
    Mdp::new(states, actions, kernel, rewards).expect("fixture")
}

/// `n` states with `k` actions each, every action jumping uniformly over all
/// states; rewards are distinct point masses. Used for counting tests.
pub fn uniform_chain(n: usize, k: usize) -> Mdp {
    let states: Vec<String> = (0..n).map(|s| format!("s{s}")).collect();
    let actions: Vec<Vec<String>> =
        (0..n).map(|s| (0..k).map(|a| format!("s{s}a{a}")).collect()).collect();
    let mut kernel = Vec::new();
    let mut rewards = Vec::new();
    for s in 0..n {
        for a in 0..k {
            kernel.push(vec![1.0 / n as f64; n]);
            rewards.push(RewardDist::dirac(0.01 * ((s * k + a) as f64)));
        }
    }
    Mdp::new(states, actions, kernel, rewards).expect("fixture")
}

/// Random communicating model: a deterministic ring backbone guarantees
/// strong connectivity, the rest of each row is random. Bernoulli rewards
/// with means in `[0.05, 0.95]`.
pub fn random_communicating(rng: &mut CounterRng, max_states: usize, max_actions: usize) -> Mdp {
    let n = 2 + rng.next_index(max_states.saturating_sub(1).max(1));
    let states: Vec<String> = (0..n).map(|s| format!("s{s}")).collect();
    let mut actions = Vec::with_capacity(n);
    let mut kernel = Vec::new();
    let mut rewards = Vec::new();
    for s in 0..n {
        let k = 1 + rng.next_index(max_actions);
        actions.push((0..k).map(|a| format!("s{s}a{a}")).collect::<Vec<_>>());
        for a in 0..k {
            let mut row = vec![0.0; n];
            if a == 0 {
                // Ring step keeps the union graph strongly connected.
                row[(s + 1) % n] += 0.5;
            }
            let extra = 1 + rng.next_index(n);
            for _ in 0..extra {
                row[rng.next_index(n)] += rng.next_f64();
            }
            let sum: f64 = row.iter().sum();
            if sum == 0.0 {
                row[(s + 1) % n] = 1.0;
            } else {
                for v in row.iter_mut() {
                    *v /= sum;
                }
            }
            kernel.push(row);
            rewards.push(RewardDist::bernoulli(0.05 + 0.9 * rng.next_f64()));
        }
    }
    Mdp::new(states, actions, kernel, rewards).expect("generator")
}

/// Random ergodic model: every kernel row has full support, so every
/// stationary policy induces an irreducible aperiodic chain.
pub fn random_ergodic(rng: &mut CounterRng, n: usize, k: usize) -> Mdp {
    let states: Vec<String> = (0..n).map(|s| format!("s{s}")).collect();
    let actions: Vec<Vec<String>> =
        (0..n).map(|s| (0..k).map(|a| format!("s{s}a{a}")).collect()).collect();
    let mut kernel = Vec::new();
    let mut rewards = Vec::new();
    for _ in 0..n {
        for _ in 0..k {
            let mut row: Vec<f64> = (0..n).map(|_| 0.05 + rng.next_f64()).collect();
            let sum: f64 = row.iter().sum();
            for v in row.iter_mut() {
                *v /= sum;
            }
            kernel.push(row);
            rewards.push(RewardDist::bernoulli(0.05 + 0.9 * rng.next_f64()));
        }
    }
    Mdp::new(states, actions, kernel, rewards).expect("generator")
}
