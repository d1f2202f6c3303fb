//! Bounded-variable revised primal simplex.
//!
//! Each row gets a logical variable `r_i = a_i·x` bounded by the row sense,
//! so the equality system is `[A | −I] (x, r) = 0` and the all-logical basis
//! is `−I`. The basis inverse is kept in product form and rebuilt
//! periodically. Phase 1 minimizes the total bound violation of basic
//! variables with costs recomputed every iteration.

use super::{LinearProgram, Sense};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    /// Reduced-cost optimality tolerance.
    pub optimality_tol: f64,
    /// Primal bound tolerance.
    pub feasibility_tol: f64,
    pub pivot_tol: f64,
    /// `None` picks a limit from the problem size.
    pub max_iters: Option<usize>,
    pub refactor_every: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            optimality_tol: 1e-7,
            feasibility_tol: 1e-9,
            pivot_tol: 1e-9,
            max_iters: None,
            refactor_every: 100,
            bland_after: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarState {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic with both bounds infinite, held at zero.
    Free,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    /// `d_j = c_j − yᵀa_j`, exactly zero for basic variables.
    pub reduced_costs: Vec<f64>,
    pub states: Vec<VarState>,
    /// One dual per row.
    pub duals: Vec<f64>,
    pub objective: f64,
    /// `Σ d_k·b_k` over structural and row variables, with `b_k` the bound
    /// selected by the sign of `d_k`.
    pub dual_objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic(usize),
    Lower,
    Upper,
    Free,
}

#[derive(Debug, Clone)]
struct Eta {
    row: usize,
    pivot: f64,
    others: Vec<(usize, f64)>,
}

struct Solver<'a> {
    opts: &'a SimplexOptions,
    n: usize,
    m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    lo: Vec<f64>,
    up: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    state: Vec<State>,
    head: Vec<usize>,
    etas: Vec<Eta>,
    /// Etas produced by the last refactorization; updates follow them.
    factor_len: usize,
}

pub fn solve(lp: &LinearProgram, opts: &SimplexOptions) -> SolveResult {
    let mut s = Solver::new(lp, opts);
    let (status, iterations) = s.run();
    log::debug!("simplex: {} vars, {} rows, {iterations} iterations, {status:?}", lp.num_vars(), lp.rows.len());
    s.result(lp, status, iterations)
}

impl<'a> Solver<'a> {
    fn new(lp: &LinearProgram, opts: &'a SimplexOptions) -> Self {
        let n = lp.num_vars();
        let m = lp.num_rows();
        let mut cols = vec![Vec::new(); n];
        for (i, row) in lp.rows.iter().enumerate() {
            for &(j, a) in &row.coeffs {
                if a != 0.0 {
                    cols[j].push((i, a));
                }
            }
        }
        for c in &mut cols {
            c.sort_by_key(|(i, _)| *i);
            c.dedup_by(|later, first| {
                if later.0 == first.0 {
                    first.1 += later.1;
                    true
                } else {
                    false
                }
            });
        }
        let mut lo = lp.lower.clone();
        let mut up = lp.upper.clone();
        for row in &lp.rows {
            let (l, u) = match row.sense {
                Sense::Ge => (row.rhs, f64::INFINITY),
                Sense::Le => (f64::NEG_INFINITY, row.rhs),
                Sense::Eq => (row.rhs, row.rhs),
            };
            lo.push(l);
            up.push(u);
        }
        let mut cost = lp.objective.clone();
        cost.resize(n + m, 0.0);
        let mut x = vec![0.0; n + m];
        let mut state = vec![State::Free; n + m];
        for j in 0..n {
            // Boxed columns start at the bound their cost favors.
            state[j] = if lo[j].is_finite() && up[j].is_finite() && cost[j] > 0.0 {
                x[j] = up[j];
                State::Upper
            } else if lo[j].is_finite() {
                x[j] = lo[j];
                State::Lower
            } else if up[j].is_finite() {
                x[j] = up[j];
                State::Upper
            } else {
                State::Free
            };
        }
        let head: Vec<usize> = (n..n + m).collect();
        for i in 0..m {
            state[n + i] = State::Basic(i);
        }
        let mut s = Solver {
            opts,
            n,
            m,
            cols,
            lo,
            up,
            cost,
            x,
            state,
            head,
            etas: Vec::new(),
            factor_len: 0,
        };
        s.recompute_basics();
        s
    }

    fn column(&self, j: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if j < self.n {
            for &(i, a) in &self.cols[j] {
                out[i] = a;
            }
        } else {
            out[j - self.n] = -1.0;
        }
    }

    fn dot_column(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            self.cols[j].iter().map(|&(i, a)| a * y[i]).sum()
        } else {
            -y[j - self.n]
        }
    }

    fn ftran(&self, v: &mut [f64]) {
        for x in v.iter_mut() {
            *x = -*x;
        }
        for eta in &self.etas {
            let yr = v[eta.row] / eta.pivot;
            v[eta.row] = yr;
            if yr != 0.0 {
                for &(i, a) in &eta.others {
                    v[i] -= a * yr;
                }
            }
        }
    }

    fn btran(&self, w: &mut [f64]) {
        for eta in self.etas.iter().rev() {
            let s: f64 = eta.others.iter().map(|&(i, a)| a * w[i]).sum();
            w[eta.row] = (w[eta.row] - s) / eta.pivot;
        }
        for x in w.iter_mut() {
            *x = -*x;
        }
    }

    fn push_eta(&mut self, row: usize, alpha: &[f64]) {
        let others = alpha
            .iter()
            .enumerate()
            .filter(|&(i, a)| i != row && *a != 0.0)
            .map(|(i, a)| (i, *a))
            .collect();
        self.etas.push(Eta {
            row,
            pivot: alpha[row],
            others,
        });
    }

    /// `x_B = B⁻¹(−N x_N)`.
    fn recompute_basics(&mut self) {
        let mut v = vec![0.0; self.m];
        for j in 0..self.n + self.m {
            if matches!(self.state[j], State::Basic(_)) || self.x[j] == 0.0 {
                continue;
            }
            if j < self.n {
                for &(i, a) in &self.cols[j] {
                    v[i] -= a * self.x[j];
                }
            } else {
                v[j - self.n] += self.x[j];
            }
        }
        self.ftran(&mut v);
        for (pos, &j) in self.head.iter().enumerate() {
            self.x[j] = v[pos];
        }
    }

    /// Rebuilds the eta file from the all-logical basis. A structural column
    /// that cannot be pivoted in is made nonbasic and the row's logical
    /// takes its place.
    fn reinvert(&mut self) {
        self.etas.clear();
        let mut owned = vec![false; self.m];
        let mut structurals = Vec::new();
        for &j in &self.head {
            if j >= self.n {
                owned[j - self.n] = true;
            } else {
                structurals.push(j);
            }
        }
        for (i, &own) in owned.iter().enumerate() {
            if own {
                self.head[i] = self.n + i;
                self.state[self.n + i] = State::Basic(i);
            }
        }
        structurals.sort_by_key(|&j| (self.cols[j].len(), j));
        let mut alpha = vec![0.0; self.m];
        for j in structurals {
            self.column(j, &mut alpha);
            self.ftran(&mut alpha);
            let mut best: Option<(usize, f64)> = None;
            for (i, a) in alpha.iter().enumerate() {
                if !owned[i] && best.is_none_or(|(_, b)| a.abs() > b) {
                    best = Some((i, a.abs()));
                }
            }
            match best {
                Some((r, mag)) if mag > self.opts.pivot_tol => {
                    self.push_eta(r, &alpha);
                    owned[r] = true;
                    self.head[r] = j;
                    self.state[j] = State::Basic(r);
                }
                _ => {
                    log::warn!("simplex: dropping dependent column {j} during refactorization");
                    self.make_nonbasic_near(j);
                }
            }
        }
        for (i, &own) in owned.iter().enumerate() {
            if !own {
                let l = self.n + i;
                self.head[i] = l;
                self.state[l] = State::Basic(i);
            }
        }
        self.factor_len = self.etas.len();
        self.recompute_basics();
    }

    fn make_nonbasic_near(&mut self, j: usize) {
        let (l, u, v) = (self.lo[j], self.up[j], self.x[j]);
        let (st, val) = match (l.is_finite(), u.is_finite()) {
            (true, true) if (v - l).abs() <= (u - v).abs() => (State::Lower, l),
            (true, true) => (State::Upper, u),
            (true, false) => (State::Lower, l),
            (false, true) => (State::Upper, u),
            (false, false) => (State::Free, 0.0),
        };
        self.state[j] = st;
        self.x[j] = val;
    }

    fn max_iters(&self) -> usize {
        self.opts
            .max_iters
            .unwrap_or_else(|| 10_000usize.max(50 * (self.n + self.m)))
    }

    /// Basic-variable costs: phase-1 violation gradient if any basic variable
    /// is out of bounds, else the true objective.
    fn basic_costs(&self) -> (Vec<f64>, bool) {
        let tol = self.opts.feasibility_tol;
        let mut cb = vec![0.0; self.m];
        let mut infeasible = false;
        for (pos, &j) in self.head.iter().enumerate() {
            if self.x[j] < self.lo[j] - tol {
                cb[pos] = 1.0;
                infeasible = true;
            } else if self.x[j] > self.up[j] + tol {
                cb[pos] = -1.0;
                infeasible = true;
            }
        }
        if !infeasible {
            for (pos, &j) in self.head.iter().enumerate() {
                cb[pos] = self.cost[j];
            }
        }
        (cb, infeasible)
    }

    fn run(&mut self) -> (SolveStatus, usize) {
        let limit = self.max_iters();
        let mut iters = 0;
        let mut degenerate_run = 0;
        let mut bland = false;
        let mut fresh = true;
        let mut alpha = vec![0.0; self.m];
        loop {
            let (mut y, phase1) = self.basic_costs();
            self.btran(&mut y);
            let entering = self.price(&y, phase1, bland);
            let Some((q, d)) = entering else {
                if !fresh {
                    self.reinvert();
                    fresh = true;
                    continue;
                }
                return (
                    if phase1 {
                        SolveStatus::Infeasible
                    } else {
                        SolveStatus::Optimal
                    },
                    iters,
                );
            };
            if iters >= limit {
                return (SolveStatus::IterationLimit, iters);
            }
            iters += 1;
            fresh = false;
            let dir = if d > 0.0 { 1.0 } else { -1.0 };
            self.column(q, &mut alpha);
            self.ftran(&mut alpha);

            let Some(step) = self.ratio_test(q, dir, &alpha) else {
                return (SolveStatus::Unbounded, iters);
            };
            let theta = step.theta;
            if theta > 0.0 {
                self.x[q] += dir * theta;
                for (pos, &j) in self.head.iter().enumerate() {
                    if alpha[pos] != 0.0 {
                        self.x[j] -= dir * theta * alpha[pos];
                    }
                }
            }
            match step.leaving {
                None => {
                    let (st, v) = if dir > 0.0 {
                        (State::Upper, self.up[q])
                    } else {
                        (State::Lower, self.lo[q])
                    };
                    self.state[q] = st;
                    self.x[q] = v;
                }
                Some((r, to_upper)) => {
                    let l = self.head[r];
                    if to_upper {
                        self.state[l] = State::Upper;
                        self.x[l] = self.up[l];
                    } else {
                        self.state[l] = State::Lower;
                        self.x[l] = self.lo[l];
                    }
                    self.head[r] = q;
                    self.state[q] = State::Basic(r);
                    self.push_eta(r, &alpha);
                    if self.etas.len() - self.factor_len >= self.opts.refactor_every {
                        self.reinvert();
                    }
                }
            }
            if theta <= 1e-12 {
                degenerate_run += 1;
                if degenerate_run >= self.opts.bland_after {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
                bland = false;
            }
        }
    }

    /// Dantzig pricing (largest |d|, lowest index on ties), or the lowest
    /// eligible index under Bland's rule.
    fn price(&self, y: &[f64], phase1: bool, bland: bool) -> Option<(usize, f64)> {
        let eps = self.opts.optimality_tol;
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.n + self.m {
            let st = self.state[j];
            if matches!(st, State::Basic(_)) || self.lo[j] == self.up[j] {
                continue;
            }
            let c = if phase1 { 0.0 } else { self.cost[j] };
            let d = c - self.dot_column(j, y);
            let eligible = match st {
                State::Lower => d > eps,
                State::Upper => d < -eps,
                State::Free => d.abs() > eps,
                State::Basic(_) => false,
            };
            if !eligible {
                continue;
            }
            if bland {
                return Some((j, d));
            }
            if best.is_none_or(|(_, bd)| d.abs() > bd.abs()) {
                best = Some((j, d));
            }
        }
        best
    }

    fn ratio_test(&self, q: usize, dir: f64, alpha: &[f64]) -> Option<Step> {
        let ftol = self.opts.feasibility_tol;
        let mut best: Option<(f64, usize, usize, bool)> = None;
        for (pos, &a) in alpha.iter().enumerate() {
            if a.abs() <= self.opts.pivot_tol {
                continue;
            }
            let j = self.head[pos];
            let rate = -dir * a;
            let (x, l, u) = (self.x[j], self.lo[j], self.up[j]);
            let limit = if rate < 0.0 {
                if x > u + ftol {
                    Some(((x - u) / -rate, true))
                } else if x >= l - ftol && l.is_finite() {
                    Some((((x - l).max(0.0)) / -rate, false))
                } else {
                    None
                }
            } else if x < l - ftol {
                Some(((l - x) / rate, false))
            } else if x <= u + ftol && u.is_finite() {
                Some((((u - x).max(0.0)) / rate, true))
            } else {
                None
            };
            if let Some((t, to_upper)) = limit {
                let better = match best {
                    None => true,
                    Some((bt, bj, _, _)) => t < bt - 1e-12 || (t <= bt + 1e-12 && j < bj),
                };
                if better {
                    best = Some((t, j, pos, to_upper));
                }
            }
        }
        let flip = self.up[q] - self.lo[q];
        match best {
            Some((t, _, pos, to_upper)) if t <= flip => Some(Step {
                theta: t,
                leaving: Some((pos, to_upper)),
            }),
            _ if flip.is_finite() => Some(Step {
                theta: flip,
                leaving: None,
            }),
            Some((t, _, pos, to_upper)) => Some(Step {
                theta: t,
                leaving: Some((pos, to_upper)),
            }),
            None => None,
        }
    }

    fn result(&mut self, lp: &LinearProgram, status: SolveStatus, iterations: usize) -> SolveResult {
        let nm = self.n + self.m;
        let mut y: Vec<f64> = self.head.iter().map(|&j| self.cost[j]).collect();
        self.btran(&mut y);
        let d: Vec<f64> = (0..nm)
            .map(|j| match self.state[j] {
                State::Basic(_) => 0.0,
                _ => self.cost[j] - self.dot_column(j, &y),
            })
            .collect();
        let eps = self.opts.optimality_tol;
        let mut dual_objective = 0.0;
        for (j, &dj) in d.iter().enumerate() {
            let b = if dj > eps {
                self.up[j]
            } else if dj < -eps {
                self.lo[j]
            } else {
                self.x[j]
            };
            if dj != 0.0 {
                dual_objective += dj * b;
            }
        }
        let mut x: Vec<f64> = self.x[..self.n].to_vec();
        for (j, v) in x.iter_mut().enumerate() {
            if *v < lp.lower[j] {
                *v = lp.lower[j];
            } else if *v > lp.upper[j] {
                *v = lp.upper[j];
            }
        }
        let states = self.state[..self.n]
            .iter()
            .map(|s| match s {
                State::Basic(_) => VarState::Basic,
                State::Lower => VarState::AtLower,
                State::Upper => VarState::AtUpper,
                State::Free => VarState::Free,
            })
            .collect();
        SolveResult {
            status,
            objective: lp.objective_value(&x),
            x,
            reduced_costs: d[..self.n].to_vec(),
            states,
            duals: y,
            dual_objective,
            iterations,
        }
    }
}

struct Step {
    theta: f64,
    /// Basis position leaving and whether it leaves at its upper bound;
    /// `None` is a bound flip of the entering variable.
    leaving: Option<(usize, bool)>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> SimplexOptions {
        SimplexOptions::default()
    }

    #[test]
    fn textbook_two_variable() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(3.0, 0.0, 1.0);
        let y = lp.add_var(2.0, 0.0, 1.0);
        lp.add_row(vec![(x, 1.0), (y, 1.0)], Sense::Le, 1.0);
        let r = solve(&lp, &opts());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.x[0] - 1.0).abs() < 1e-9 && r.x[1].abs() < 1e-9);
        assert!((r.objective - 3.0).abs() < 1e-9);
        // The vertex is degenerate; any dual-feasible price on y is valid.
        assert!(r.reduced_costs[1] <= 1e-9);
        assert!(r.reduced_costs[0] >= -1e-9);
        assert!((r.dual_objective - 3.0).abs() < 1e-9);
    }

    #[test]
    fn empty_lp() {
        let r = solve(&LinearProgram::new(), &opts());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn infeasible_detected() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(1.0, 0.0, 1.0);
        lp.add_row(vec![(x, 1.0)], Sense::Ge, 2.0);
        assert_eq!(solve(&lp, &opts()).status, SolveStatus::Infeasible);
    }

    #[test]
    fn needs_phase_one() {
        // max −x − y, x + y ≥ 1.5, x ≤ 1, y ≤ 1
        let mut lp = LinearProgram::new();
        let x = lp.add_var(-1.0, 0.0, 1.0);
        let y = lp.add_var(-2.0, 0.0, 1.0);
        lp.add_row(vec![(x, 1.0), (y, 1.0)], Sense::Ge, 1.5);
        let r = solve(&lp, &opts());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.x[0] - 1.0).abs() < 1e-9);
        assert!((r.x[1] - 0.5).abs() < 1e-9);
        assert!((r.objective + 2.0).abs() < 1e-9);
        assert!((r.dual_objective - r.objective).abs() < 1e-9);
    }

    #[test]
    fn equality_row() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(1.0, 0.0, 10.0);
        let y = lp.add_var(1.0, 0.0, 10.0);
        lp.add_row(vec![(x, 1.0), (y, 2.0)], Sense::Eq, 4.0);
        let r = solve(&lp, &opts());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 4.0).abs() < 1e-9);
        assert!(lp.max_violation(&r.x) < 1e-9);
    }

    #[test]
    fn many_pivots_with_refactorization() {
        // Assignment-like LP large enough to trigger several refactorizations.
        let n = 15;
        let mut lp = LinearProgram::new();
        for i in 0..n {
            for j in 0..n {
                lp.add_var(((i * 7 + j * 13) % 17) as f64 / 17.0, 0.0, 1.0);
            }
        }
        for i in 0..n {
            lp.add_row((0..n).map(|j| (i * n + j, 1.0)).collect(), Sense::Le, 1.0);
            lp.add_row((0..n).map(|j| (j * n + i, 1.0)).collect(), Sense::Le, 1.0);
        }
        let o = SimplexOptions {
            refactor_every: 7,
            ..opts()
        };
        let r = solve(&lp, &o);
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!(lp.max_violation(&r.x) < 1e-9);
        assert!((r.objective - r.dual_objective).abs() < 1e-7);
        let r2 = solve(&lp, &opts());
        assert!((r.objective - r2.objective).abs() < 1e-7);
    }
}
