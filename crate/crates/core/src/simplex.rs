//! Dense two-phase simplex for small linear programs
//! `min cᵀx  s.t.  A x (≤|=|≥) b,  x ≥ 0`.
//!
//! The basis inverse is kept as an explicit dense `m × m` matrix and updated
//! by elementary row operations on every pivot; the constraint columns are
//! stored sparsely. Entering variables are priced by the most negative
//! reduced cost with ties broken by the lowest index. After a run of
//! degenerate pivots the solver switches to Bland's rule (lowest-index
//! entering and leaving variables) until the objective moves again, which
//! rules out cycling. Every choice is index-ordered, so the returned vertex
//! is reproducible.

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("infeasible (phase-one optimum {0:e})")]
    Infeasible(f64),
    #[error("unbounded objective")]
    Unbounded,
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
    #[error("basis matrix became singular")]
    Singular,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, Default)]
pub struct LinearProgram {
    n_vars: usize,
    objective: Vec<f64>,
    constraints: Vec<Constraint>,
}

const OPT_TOL: f64 = 1e-11;
const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;
const DEGENERATE_STREAK: usize = 30;
/// Reduced costs below `-UNBOUNDED_TOL` with no blocking row signal a ray.
const UNBOUNDED_TOL: f64 = 1e-7;

impl LinearProgram {
    pub fn new(n_vars: usize) -> Self {
        Self { n_vars, objective: vec![0.0; n_vars], constraints: Vec::new() }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn n_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn set_objective(&mut self, var: usize, cost: f64) {
        self.objective[var] = cost;
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        debug_assert!(coeffs.iter().all(|&(j, _)| j < self.n_vars));
        self.constraints.push(Constraint { coeffs, relation, rhs });
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        Solver::new(self).run()
    }
}

struct Solver<'a> {
    lp: &'a LinearProgram,
    m: usize,
    /// Sparse columns: structural, then slack/surplus, then artificial.
    cols: Vec<Vec<(usize, f64)>>,
    n_struct: usize,
    first_artificial: usize,
    b: Vec<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    iterations: usize,
    since_refactor: usize,
    refactor_period: usize,
    max_iterations: usize,
}

impl<'a> Solver<'a> {
    fn new(lp: &'a LinearProgram) -> Self {
        let m = lp.constraints.len();
        let n_struct = lp.n_vars;
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_struct];
        let mut b = Vec::with_capacity(m);
        let mut signs = Vec::with_capacity(m);
        for (i, con) in lp.constraints.iter().enumerate() {
            let sign = if con.rhs < 0.0 { -1.0 } else { 1.0 };
            signs.push(sign);
            b.push(con.rhs * sign);
            for &(j, v) in &con.coeffs {
                if v != 0.0 {
                    cols[j].push((i, v * sign));
                }
            }
        }
        let mut basis = vec![usize::MAX; m];
        for (i, con) in lp.constraints.iter().enumerate() {
            let coef = match con.relation {
                Relation::Le => 1.0,
                Relation::Ge => -1.0,
                Relation::Eq => continue,
            } * signs[i];
            if coef > 0.0 {
                basis[i] = cols.len();
            }
            cols.push(vec![(i, coef)]);
        }
        let first_artificial = cols.len();
        for (i, slot) in basis.iter_mut().enumerate() {
            if *slot == usize::MAX {
                *slot = cols.len();
                cols.push(vec![(i, 1.0)]);
            }
        }
        let mut is_basic = vec![false; cols.len()];
        for &j in &basis {
            is_basic[j] = true;
        }
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        let n_total = cols.len();
        Self {
            lp,
            m,
            cols,
            n_struct,
            first_artificial,
            xb: b.clone(),
            b,
            basis,
            is_basic,
            binv,
            iterations: 0,
            since_refactor: 0,
            refactor_period: m.max(100),
            max_iterations: 50 * (m + n_total).max(100),
        }
    }

    fn run(mut self) -> Result<LpSolution, LpError> {
        if self.first_artificial < self.cols.len() {
            let mut cost = vec![0.0; self.cols.len()];
            for c in &mut cost[self.first_artificial..] {
                *c = 1.0;
            }
            self.optimize(&cost, self.cols.len())?;
            let infeasibility: f64 = self
                .basis
                .iter()
                .zip(&self.xb)
                .filter(|(&j, _)| j >= self.first_artificial)
                .map(|(_, &x)| x.max(0.0))
                .sum();
            let scale = self.b.iter().fold(1.0f64, |m, &x| m.max(x.abs()));
            if infeasibility > FEAS_TOL * scale {
                return Err(LpError::Infeasible(infeasibility));
            }
            self.evict_artificials();
        }
        let mut cost = vec![0.0; self.cols.len()];
        cost[..self.n_struct].copy_from_slice(&self.lp.objective);
        self.optimize(&cost, self.first_artificial)?;
        if self.since_refactor > 0 {
            self.refactor()?;
        }
        let mut x = vec![0.0; self.n_struct];
        for (&j, &v) in self.basis.iter().zip(&self.xb) {
            if j < self.n_struct {
                x[j] = v.max(0.0);
            }
        }
        let objective = x.iter().zip(&self.lp.objective).map(|(a, c)| a * c).sum();
        Ok(LpSolution { x, objective, iterations: self.iterations })
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (r, &j) in self.basis.iter().enumerate() {
            let c = cost[j];
            if c == 0.0 {
                continue;
            }
            for (yi, &bv) in y.iter_mut().zip(&self.binv[r * m..(r + 1) * m]) {
                *yi += c * bv;
            }
        }
        y
    }

    /// Primal simplex on the current basis; columns `>= n_allowed` never enter.
    fn optimize(&mut self, cost: &[f64], n_allowed: usize) -> Result<(), LpError> {
        let m = self.m;
        let mut y = self.duals(cost);
        let mut degenerate_run = 0usize;
        let mut alpha = vec![0.0; m];
        let mut rejected = vec![false; self.cols.len()];
        loop {
            if self.iterations >= self.max_iterations {
                return Err(LpError::IterationLimit(self.iterations));
            }
            let bland = degenerate_run >= DEGENERATE_STREAK;

            let mut entering = None;
            let mut best = -OPT_TOL;
            for j in 0..n_allowed {
                if self.is_basic[j] || rejected[j] {
                    continue;
                }
                let d = cost[j] - self.cols[j].iter().map(|&(i, v)| y[i] * v).sum::<f64>();
                if d < best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(q) = entering else { return Ok(()) };

            alpha.iter_mut().for_each(|a| *a = 0.0);
            for &(i, v) in &self.cols[q] {
                for (r, a) in alpha.iter_mut().enumerate() {
                    *a += self.binv[r * m + i] * v;
                }
            }

            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for r in 0..m {
                if alpha[r] <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.xb[r].max(0.0) / alpha[r];
                let Some(cur) = leave else {
                    leave = Some(r);
                    best_ratio = ratio;
                    continue;
                };
                let slack = 1e-12 * best_ratio.max(1.0);
                if ratio < best_ratio - slack {
                    leave = Some(r);
                    best_ratio = ratio;
                } else if ratio <= best_ratio + slack {
                    let wins = if bland { self.basis[r] < self.basis[cur] } else { alpha[r] > alpha[cur] };
                    if wins {
                        leave = Some(r);
                        best_ratio = best_ratio.min(ratio);
                    }
                }
            }
            let Some(r) = leave else {
                // A stale inverse can hide the blocking row; retry on a fresh one.
                if self.since_refactor > 0 {
                    self.refactor()?;
                    y = self.duals(cost);
                    continue;
                }
                let dq = cost[q] - self.cols[q].iter().map(|&(i, v)| y[i] * v).sum::<f64>();
                if dq < -UNBOUNDED_TOL {
                    return Err(LpError::Unbounded);
                }
                // Reduced cost at noise level with no pivot: not a real direction.
                rejected[q] = true;
                continue;
            };
            let theta = self.xb[r].max(0.0) / alpha[r];

            // Reduced cost of the entering column, for the dual update.
            let dq = cost[q] - self.cols[q].iter().map(|&(i, v)| y[i] * v).sum::<f64>();

            for (i, x) in self.xb.iter_mut().enumerate() {
                *x -= theta * alpha[i];
            }
            self.xb[r] = theta;

            let piv = alpha[r];
            let (head, tail) = self.binv.split_at_mut(r * m);
            let (prow, rest) = tail.split_at_mut(m);
            prow.iter_mut().for_each(|v| *v /= piv);
            for (i, row) in head.chunks_mut(m).enumerate() {
                let f = alpha[i];
                if f != 0.0 {
                    row.iter_mut().zip(prow.iter()).for_each(|(a, &p)| *a -= f * p);
                }
            }
            for (k, row) in rest.chunks_mut(m).enumerate() {
                let f = alpha[r + 1 + k];
                if f != 0.0 {
                    row.iter_mut().zip(prow.iter()).for_each(|(a, &p)| *a -= f * p);
                }
            }
            for (yi, &p) in y.iter_mut().zip(prow.iter()) {
                *yi += dq * p;
            }

            self.is_basic[self.basis[r]] = false;
            self.is_basic[q] = true;
            self.basis[r] = q;
            rejected.iter_mut().for_each(|x| *x = false);
            self.iterations += 1;
            self.since_refactor += 1;
            if theta <= 1e-13 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            if self.since_refactor >= self.refactor_period {
                self.refactor()?;
                y = self.duals(cost);
            }
        }
    }

    /// Pivots basic artificials (all at zero after phase one) out of the
    /// basis where a structural or slack column can replace them.
    fn evict_artificials(&mut self) {
        let m = self.m;
        for r in 0..m {
            if self.basis[r] < self.first_artificial {
                continue;
            }
            let row = &self.binv[r * m..(r + 1) * m];
            let replacement = (0..self.first_artificial).find(|&j| {
                !self.is_basic[j] && self.cols[j].iter().map(|&(i, v)| row[i] * v).sum::<f64>().abs() > PIVOT_TOL
            });
            let Some(q) = replacement else { continue };
            let mut alpha = vec![0.0; m];
            for &(i, v) in &self.cols[q] {
                for (k, a) in alpha.iter_mut().enumerate() {
                    *a += self.binv[k * m + i] * v;
                }
            }
            let theta = self.xb[r] / alpha[r];
            for (i, x) in self.xb.iter_mut().enumerate() {
                *x -= theta * alpha[i];
            }
            self.xb[r] = theta;
            let piv = alpha[r];
            let prow: Vec<f64> = self.binv[r * m..(r + 1) * m].iter().map(|v| v / piv).collect();
            for i in 0..m {
                if i == r {
                    self.binv[i * m..(i + 1) * m].copy_from_slice(&prow);
                } else if alpha[i] != 0.0 {
                    let f = alpha[i];
                    for (a, &p) in self.binv[i * m..(i + 1) * m].iter_mut().zip(&prow) {
                        *a -= f * p;
                    }
                }
            }
            self.is_basic[self.basis[r]] = false;
            self.is_basic[q] = true;
            self.basis[r] = q;
        }
    }

    /// Recomputes the basis inverse from scratch by Gauss–Jordan elimination
    /// with partial pivoting, then refreshes the basic solution.
    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for (c, &j) in self.basis.iter().enumerate() {
            for &(i, v) in &self.cols[j] {
                a[i * m + c] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let (p, pv) = (col..m)
                .map(|i| (i, a[i * m + col].abs()))
                .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pv < 1e-13 {
                return Err(LpError::Singular);
            }
            if p != col {
                for k in 0..m {
                    a.swap(p * m + k, col * m + k);
                    inv.swap(p * m + k, col * m + k);
                }
            }
            let d = a[col * m + col];
            for k in 0..m {
                a[col * m + k] /= d;
                inv[col * m + k] /= d;
            }
            let arow: Vec<f64> = a[col * m..(col + 1) * m].to_vec();
            let irow: Vec<f64> = inv[col * m..(col + 1) * m].to_vec();
            for i in 0..m {
                if i == col {
                    continue;
                }
                let f = a[i * m + col];
                if f == 0.0 {
                    continue;
                }
                for (x, &v) in a[i * m..(i + 1) * m].iter_mut().zip(&arow) {
                    *x -= f * v;
                }
                for (x, &v) in inv[i * m..(i + 1) * m].iter_mut().zip(&irow) {
                    *x -= f * v;
                }
            }
        }
        self.binv = inv;
        for r in 0..m {
            self.xb[r] = self.binv[r * m..(r + 1) * m].iter().zip(&self.b).map(|(x, y)| x * y).sum();
        }
        self.since_refactor = 0;
        Ok(())
    }
}
