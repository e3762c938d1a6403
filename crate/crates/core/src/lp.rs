//! Dense two-phase primal simplex with Bland's rule.
//!
//! Problems are stated as `min c.x` over `x >= 0` subject to equality rows
//! `a.x = b` and inequality rows `a.x >= b`. The pivoting rule is Bland's,
//! so the solver cannot cycle and its output is deterministic.

use crate::tol;

#[derive(Clone, Debug)]
pub struct LpProblem {
    /// Objective coefficients, one per variable.
    pub objective: Vec<f64>,
    /// Equality constraints `a.x = b`.
    pub eq: Vec<(Vec<f64>, f64)>,
    /// Inequality constraints `a.x >= b`.
    pub ge: Vec<(Vec<f64>, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpResult {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
    /// Iteration cap hit; does not occur with Bland's rule on well-posed
    /// input and is surfaced as a solver failure upstream.
    Stalled,
}

impl LpProblem {
    pub fn new(objective: Vec<f64>) -> Self {
        LpProblem { objective, eq: Vec::new(), ge: Vec::new() }
    }

    pub fn push_eq(&mut self, row: Vec<f64>, rhs: f64) {
        debug_assert_eq!(row.len(), self.objective.len());
        self.eq.push((row, rhs));
    }

    pub fn push_ge(&mut self, row: Vec<f64>, rhs: f64) {
        debug_assert_eq!(row.len(), self.objective.len());
        self.ge.push((row, rhs));
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>, // m rows, each n_total + 1 (rhs last)
    cost: Vec<f64>,      // n_total + 1 (objective value negated in last slot)
    basis: Vec<usize>,

    n_total: usize,
}

const MAX_PIVOTS: usize = 1_000_000;

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let piv = self.rows[row][col];
        for v in self.rows[row].iter_mut() {
            *v /= piv;
        }
        for r in 0..self.rows.len() {
            if r != row {
                let f = self.rows[r][col];
                if f != 0.0 {
                    for k in 0..=self.n_total {
                        let delta = f * self.rows[row][k];
                        self.rows[r][k] -= delta;
                    }
                }
            }
        }
        let f = self.cost[col];
        if f != 0.0 {
            for k in 0..=self.n_total {
                self.cost[k] -= f * self.rows[row][k];
            }
        }
        self.basis[row] = col;
    }

    /// Run simplex on the current cost row; columns `>= col_limit` never enter.
    fn run(&mut self, col_limit: usize) -> Option<bool> {
        for _ in 0..MAX_PIVOTS {
            // Bland: smallest improving column index.
            let entering = (0..col_limit).find(|&j| self.cost[j] < -tol::LP);
            let Some(col) = entering else {
                return Some(true);
            };
            let mut best: Option<(f64, usize, usize)> = None; // ratio, basis var, row
            for (r, row) in self.rows.iter().enumerate() {
                if row[col] > tol::LP {
                    let ratio = row[self.n_total] / row[col];
                    let key = (ratio, self.basis[r]);
                    match best {
                        None => best = Some((key.0, key.1, r)),
                        Some((br, bb, _)) => {
                            if ratio < br - tol::LP || (ratio < br + tol::LP && key.1 < bb) {
                                best = Some((key.0, key.1, r));
                            }
                        }
                    }
                }
            }
            match best {
                Some((_, _, row)) => self.pivot(row, col),
                None => return Some(false), // unbounded
            }
        }
        None
    }

    fn set_cost(&mut self, costs: &[f64]) {
        self.cost = vec![0.0; self.n_total + 1];
        self.cost[..costs.len()].copy_from_slice(costs);
        for r in 0..self.rows.len() {
            let b = self.basis[r];
            let f = self.cost[b];
            if f != 0.0 {
                for k in 0..=self.n_total {
                    self.cost[k] -= f * self.rows[r][k];
                }
            }
        }
    }
}

/// Solve the linear program. Infeasible and unbounded are signaled distinctly.
pub fn solve_lp(problem: &LpProblem) -> LpResult {
    let n = problem.objective.len();
    let n_surplus = problem.ge.len();
    let m = problem.eq.len() + problem.ge.len();
    let n_real = n + n_surplus;
    let n_total = n_real + m;

    let mut rows = Vec::with_capacity(m);
    for (i, (a, b)) in problem.eq.iter().chain(problem.ge.iter()).enumerate() {
        let mut row = vec![0.0; n_total + 1];
        row[..n].copy_from_slice(a);
        if i >= problem.eq.len() {
            row[n + (i - problem.eq.len())] = -1.0; // surplus
        }
        row[n_total] = *b;
        if row[n_total] < 0.0 {
            for v in row.iter_mut() {
                *v = -*v;
            }
        }
        row[n_real + i] = 1.0; // artificial
        rows.push(row);
    }

    let mut t = Tableau {
        rows,
        cost: vec![0.0; n_total + 1],
        basis: (n_real..n_real + m).collect(),

        n_total,
    };

    // Phase 1: minimize the sum of artificials.
    let mut phase1 = vec![0.0; n_total];
    for j in n_real..n_total {
        phase1[j] = 1.0;
    }
    t.set_cost(&phase1);
    match t.run(n_real) {
        None => return LpResult::Stalled,
        Some(false) => unreachable!("phase 1 objective is bounded below"),
        Some(true) => {}
    }
    let phase1_val = -t.cost[n_total];
    if phase1_val > 1e-7 {
        return LpResult::Infeasible;
    }
    // Drive remaining artificials out of the basis where possible.
    for r in 0..m {
        if t.basis[r] >= n_real {
            if let Some(col) = (0..n_real).find(|&j| t.rows[r][j].abs() > tol::LP) {
                t.pivot(r, col);
            }
            // Otherwise the row is redundant; the artificial stays basic at
            // value zero and can never re-enter with a positive value.
        }
    }

    // Phase 2.
    let mut phase2 = vec![0.0; n_total];
    phase2[..n].copy_from_slice(&problem.objective);
    t.set_cost(&phase2);
    match t.run(n_real) {
        None => LpResult::Stalled,
        Some(false) => LpResult::Unbounded,
        Some(true) => {
            let mut x = vec![0.0; n];
            for (r, &b) in t.basis.iter().enumerate() {
                if b < n {
                    x[b] = t.rows[r][n_total];
                }
            }
            let objective = problem.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
            LpResult::Optimal { x, objective }
        }
    }
}
