//! Bounded-variable primal simplex (two-phase, Bland's rule).
//!
//! The solver never works with absolute variable values. Every column is
//! re-expressed as a distance `t_k ≥ 0` from an anchor bound (the lower bound
//! when finite, else the upper bound), slacks `w = b − Ax` are carried as
//! ordinary basic variables, and `x` is only reassembled at the very end.
//! Pricing depends on the basis alone and the ratio test on the distances
//! alone, so shifting an instance (`x̂ = x + s`) leaves the pivot sequence,
//! duals, reduced costs and basis statuses untouched. The only shifted
//! quantity the solver ever sees is the residual `b − A·anchor`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::milp::{LpRelaxation, MilpInstance, ShiftVector};

pub const FEAS_TOL: f64 = 1e-7;
pub const OPT_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const RATIO_TIE_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BasisStatus {
    AtLower,
    Basic,
    AtUpper,
    FreeNonbasic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpResult {
    pub status: LpStatus,
    pub x: Vec<f64>,
    /// `cᵀx + objective_constant`.
    pub objective: f64,
    /// Row multipliers, `y ≥ 0` for `Ax ≤ b`.
    pub duals: Vec<f64>,
    /// `σ = c + Aᵀy`; zero on basic columns.
    pub reduced_costs: Vec<f64>,
    pub basis_status: Vec<BasisStatus>,
    pub row_tight: Vec<bool>,
    /// Pivots plus bound flips over both phases.
    pub iterations: usize,
    /// Slack `b − Ax` per row, as tracked by the solver.
    pub slacks: Vec<f64>,
    /// Deterministic floating-point work estimate (multiply-adds).
    pub work: u64,
}

impl LpResult {
    fn empty(status: LpStatus, n: usize, m: usize, iterations: usize, work: u64) -> Self {
        LpResult {
            status,
            x: vec![0.0; n],
            objective: 0.0,
            duals: vec![0.0; m],
            reduced_costs: vec![0.0; n],
            basis_status: vec![BasisStatus::AtLower; n],
            row_tight: vec![false; m],
            iterations,
            slacks: vec![0.0; m],
            work,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Dense copy of the constraint data, reused across many bound changes.
#[derive(Debug, Clone)]
pub struct LpModel {
    m: usize,
    n: usize,
    /// Column-major `m × n`.
    a: Vec<f64>,
    /// Nonzero row indices per column.
    col_nz: Vec<Vec<usize>>,
    c: Vec<f64>,
    b: Vec<f64>,
    constant: f64,
    pub iteration_limit: usize,
}

impl LpModel {
    pub fn new(instance: &MilpInstance) -> Self {
        let (m, n) = (instance.n_cons, instance.n_vars);
        let mut a = vec![0.0; m * n];
        for &(i, j, v) in &instance.matrix {
            a[j * m + i] += v;
        }
        let col_nz = (0..n)
            .map(|j| (0..m).filter(|&i| a[j * m + i] != 0.0).collect())
            .collect();
        LpModel {
            m,
            n,
            a,
            col_nz,
            c: instance.objective.clone(),
            b: instance.rhs.clone(),
            constant: instance.objective_constant,
            iteration_limit: 50 * (n + m),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n
    }

    pub fn n_cons(&self) -> usize {
        self.m
    }

    fn col(&self, j: usize) -> &[f64] {
        &self.a[j * self.m..(j + 1) * self.m]
    }

    pub fn solve(&self, lower: &[f64], upper: &[f64]) -> Result<LpResult> {
        if lower.len() != self.n || upper.len() != self.n {
            return Err(Error::Dimension {
                what: "bound vectors",
                expected: self.n,
                got: lower.len().min(upper.len()),
            });
        }
        if self.n == 0 {
            return Err(Error::InvalidInstance("LP has no variables".into()));
        }
        if lower.iter().zip(upper).any(|(l, u)| l > u) {
            return Ok(LpResult::empty(LpStatus::Infeasible, self.n, self.m, 0, 0));
        }
        Simplex::new(self, lower, upper).run()
    }
}

/// Solves the LP relaxation of an instance.
pub fn solve_lp(problem: &LpRelaxation<'_>) -> Result<LpResult> {
    LpModel::new(problem.instance).solve(&problem.lower, &problem.upper)
}

/// Deviations between the LP relaxations of an instance and its shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftEquivalence {
    /// False when either relaxation is not optimal.
    pub applicable: bool,
    /// `max |x̂ − x − s|`.
    pub solution_dev: f64,
    pub objective_dev: f64,
    pub dual_dev: f64,
    pub reduced_cost_dev: f64,
    pub basis_mismatches: usize,
    pub iterations: (usize, usize),
    pub tol: f64,
}

impl ShiftEquivalence {
    pub fn passed(&self) -> bool {
        self.applicable
            && self.basis_mismatches == 0
            && self.solution_dev <= self.tol
            && self.objective_dev <= self.tol
            && self.dual_dev <= self.tol
            && self.reduced_cost_dev <= self.tol
    }
}

fn max_dev<'a>(pairs: impl Iterator<Item = (&'a f64, &'a f64)>) -> f64 {
    pairs.map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Solves the relaxations of `instance` and of its shift by `s` and compares them.
pub fn check_shift_equivalence(
    instance: &MilpInstance,
    s: &ShiftVector,
    tol: f64,
) -> Result<ShiftEquivalence> {
    let shifted = instance.shift(s)?;
    let a = solve_lp(&instance.lp_relaxation())?;
    let b = solve_lp(&shifted.lp_relaxation())?;
    if !a.is_optimal() || !b.is_optimal() {
        return Ok(ShiftEquivalence {
            applicable: false,
            solution_dev: f64::NAN,
            objective_dev: f64::NAN,
            dual_dev: f64::NAN,
            reduced_cost_dev: f64::NAN,
            basis_mismatches: 0,
            iterations: (a.iterations, b.iterations),
            tol,
        });
    }
    let solution_dev = (0..instance.n_vars)
        .map(|j| (b.x[j] - a.x[j] - s.0[j]).abs())
        .fold(0.0, f64::max);
    Ok(ShiftEquivalence {
        applicable: true,
        solution_dev,
        objective_dev: (a.objective - b.objective).abs(),
        dual_dev: max_dev(a.duals.iter().zip(&b.duals)),
        reduced_cost_dev: max_dev(a.reduced_costs.iter().zip(&b.reduced_costs)),
        basis_mismatches: a
            .basis_status
            .iter()
            .zip(&b.basis_status)
            .filter(|(x, y)| x != y)
            .count(),
        iterations: (a.iterations, b.iterations),
        tol,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Structural(usize),
    Slack(usize),
    Artificial(usize),
}

struct Simplex<'a> {
    model: &'a LpModel,
    m: usize,
    kinds: Vec<Kind>,
    /// `+1` when measured up from the lower bound, `−1` down from the upper.
    dir: Vec<f64>,
    anchor: Vec<f64>,
    range: Vec<f64>,
    free: Vec<bool>,
    cost: Vec<f64>,
    /// Current distance from the anchor for every variable.
    t: Vec<f64>,
    basic: Vec<usize>,
    /// Position in `basic`, or `usize::MAX` when nonbasic.
    pos: Vec<usize>,
    binv: Vec<f64>,
    resid: Vec<f64>,
    iterations: usize,
    pivots_since_refactor: usize,
    work: u64,
}

enum StepOutcome {
    Optimal,
    Unbounded,
    Moved,
}

impl<'a> Simplex<'a> {
    fn new(model: &'a LpModel, lower: &[f64], upper: &[f64]) -> Self {
        let (m, n) = (model.m, model.n);
        let mut kinds = Vec::with_capacity(n + 2 * m);
        let mut dir = Vec::with_capacity(n + 2 * m);
        let mut anchor = Vec::with_capacity(n + 2 * m);
        let mut range = Vec::with_capacity(n + 2 * m);
        let mut free = Vec::with_capacity(n + 2 * m);
        for j in 0..n {
            let (l, u) = (lower[j], upper[j]);
            kinds.push(Kind::Structural(j));
            if l.is_finite() {
                dir.push(1.0);
                anchor.push(l);
                range.push(if u.is_finite() { u - l } else { f64::INFINITY });
                free.push(false);
            } else if u.is_finite() {
                dir.push(-1.0);
                anchor.push(u);
                range.push(f64::INFINITY);
                free.push(false);
            } else {
                dir.push(1.0);
                anchor.push(0.0);
                range.push(f64::INFINITY);
                free.push(true);
            }
        }
        for i in 0..m {
            kinds.push(Kind::Slack(i));
            dir.push(1.0);
            anchor.push(0.0);
            range.push(f64::INFINITY);
            free.push(false);
        }

        // residual r = b − A·anchor
        let mut resid = model.b.clone();
        for j in 0..n {
            let a = anchor[j];
            if a != 0.0 {
                let col = model.col(j);
                for &i in &model.col_nz[j] {
                    resid[i] -= col[i] * a;
                }
            }
        }

        let mut t = vec![0.0; n + m];
        let mut basic = Vec::with_capacity(m);
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            if resid[i] >= -FEAS_TOL {
                basic.push(n + i);
                t[n + i] = resid[i];
                binv[i * m + i] = 1.0;
            } else {
                let k = kinds.len();
                kinds.push(Kind::Artificial(i));
                dir.push(1.0);
                anchor.push(0.0);
                range.push(f64::INFINITY);
                free.push(false);
                t.push(-resid[i]);
                basic.push(k);
                binv[i * m + i] = -1.0;
            }
        }
        let total = kinds.len();
        let mut pos = vec![usize::MAX; total];
        for (r, &k) in basic.iter().enumerate() {
            pos[k] = r;
        }
        let cost = vec![0.0; total];
        Simplex {
            model,
            m,
            kinds,
            dir,
            anchor,
            range,
            free,
            cost,
            t,
            basic,
            pos,
            binv,
            resid,
            iterations: 0,
            pivots_since_refactor: 0,
            work: 0,
        }
    }

    /// Column of variable `k` in distance space, scattered into `out`.
    fn column_into(&self, k: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        match self.kinds[k] {
            Kind::Structural(j) => {
                let col = self.model.col(j);
                let d = self.dir[k];
                for &i in &self.model.col_nz[j] {
                    out[i] = d * col[i];
                }
            }
            Kind::Slack(i) => out[i] = 1.0,
            Kind::Artificial(i) => out[i] = -1.0,
        }
    }

    /// `π·col_k` without materialising the column.
    fn pi_dot_col(&self, pi: &[f64], k: usize) -> f64 {
        match self.kinds[k] {
            Kind::Structural(j) => {
                let col = self.model.col(j);
                let mut acc = 0.0;
                for &i in &self.model.col_nz[j] {
                    acc += pi[i] * col[i];
                }
                self.dir[k] * acc
            }
            Kind::Slack(i) => pi[i],
            Kind::Artificial(i) => -pi[i],
        }
    }

    fn duals_pi(&self) -> Vec<f64> {
        let m = self.m;
        let mut pi = vec![0.0; m];
        for (r, &k) in self.basic.iter().enumerate() {
            let cb = self.cost[k];
            if cb != 0.0 {
                let row = &self.binv[r * m..(r + 1) * m];
                for (p, b) in pi.iter_mut().zip(row) {
                    *p += cb * b;
                }
            }
        }
        pi
    }

    fn reduced_cost(&self, pi: &[f64], k: usize) -> f64 {
        self.cost[k] - self.pi_dot_col(pi, k)
    }

    fn is_basic(&self, k: usize) -> bool {
        self.pos[k] != usize::MAX
    }

    fn run(mut self) -> Result<LpResult> {
        let n = self.model.n;
        let m = self.m;
        let has_artificials = self.kinds.len() > n + m;
        if has_artificials {
            for k in n + m..self.kinds.len() {
                self.cost[k] = 1.0;
            }
            match self.optimize()? {
                StepOutcome::Unbounded => {
                    return Err(Error::NotOptimal("phase one reported unbounded"));
                }
                _ => {}
            }
            let infeasibility: f64 = (n + m..self.kinds.len()).map(|k| self.t[k]).sum();
            if infeasibility > FEAS_TOL {
                return Ok(LpResult::empty(
                    LpStatus::Infeasible,
                    n,
                    m,
                    self.iterations,
                    self.work,
                ));
            }
            for k in n + m..self.kinds.len() {
                self.cost[k] = 0.0;
                self.range[k] = 0.0;
                self.t[k] = 0.0;
            }
        }
        for j in 0..n {
            self.cost[j] = self.dir[j] * self.model.c[j];
        }
        match self.optimize()? {
            StepOutcome::Unbounded => Ok(LpResult::empty(
                LpStatus::Unbounded,
                n,
                m,
                self.iterations,
                self.work,
            )),
            _ => Ok(self.extract()),
        }
    }

    fn optimize(&mut self) -> Result<StepOutcome> {
        loop {
            if self.iterations >= self.model.iteration_limit {
                return Err(Error::IterationLimit(self.model.iteration_limit));
            }
            match self.step() {
                StepOutcome::Moved => continue,
                other => return Ok(other),
            }
        }
    }

    fn step(&mut self) -> StepOutcome {
        let m = self.m;
        let total = self.kinds.len();
        let pi = self.duals_pi();
        self.work += (m * m) as u64;

        // Bland: lowest-index improving column
        let mut entering = None;
        for k in 0..total {
            if self.is_basic(k) {
                continue;
            }
            let d = self.reduced_cost(&pi, k);
            let at_zero = self.t[k] == 0.0;
            let movable_up = self.range[k] > 0.0 && (at_zero || self.free[k]);
            let movable_down = self.free[k] || (!at_zero && self.range[k].is_finite());
            if d < -OPT_TOL && movable_up {
                entering = Some((k, 1.0));
                break;
            }
            if d > OPT_TOL && movable_down {
                entering = Some((k, -1.0));
                break;
            }
        }
        self.work += (m * (total - m)) as u64;
        let Some((q, step_dir)) = entering else {
            return StepOutcome::Optimal;
        };

        let mut col = vec![0.0; m];
        self.column_into(q, &mut col);
        let mut alpha = vec![0.0; m];
        for r in 0..m {
            let row = &self.binv[r * m..(r + 1) * m];
            let mut acc = 0.0;
            for (b, c) in row.iter().zip(&col) {
                acc += b * c;
            }
            alpha[r] = acc;
        }
        self.work += (m * m) as u64;

        // basic t_B(r) moves by −θ·step_dir·α_r
        let mut best_theta = f64::INFINITY;
        let mut leave: Option<(usize, bool)> = None; // (row, leaves at upper end)
        for r in 0..m {
            let a = step_dir * alpha[r];
            let k = self.basic[r];
            let (limit, to_upper) = if a > PIVOT_TOL {
                if self.free[k] {
                    continue;
                }
                (self.t[k].max(0.0) / a, false)
            } else if a < -PIVOT_TOL {
                if !self.range[k].is_finite() {
                    continue;
                }
                ((self.range[k] - self.t[k]).max(0.0) / -a, true)
            } else {
                continue;
            };
            match leave {
                None => {
                    best_theta = limit;
                    leave = Some((r, to_upper));
                }
                Some((lr, _)) => {
                    let tie = (limit - best_theta).abs() <= RATIO_TIE_TOL * (1.0 + best_theta);
                    if tie {
                        // lowest variable index leaves among ties
                        if k < self.basic[lr] {
                            leave = Some((r, to_upper));
                        }
                        best_theta = best_theta.min(limit);
                    } else if limit < best_theta {
                        best_theta = limit;
                        leave = Some((r, to_upper));
                    }
                }
            }
        }
        self.work += m as u64;

        let flip = self.range[q];
        self.iterations += 1;
        if flip.is_finite() && flip <= best_theta + RATIO_TIE_TOL * (1.0 + best_theta) {
            // bound flip, basis unchanged
            let theta = flip;
            for r in 0..m {
                let k = self.basic[r];
                self.t[k] -= theta * step_dir * alpha[r];
            }
            self.t[q] = if step_dir > 0.0 { flip } else { 0.0 };
            return StepOutcome::Moved;
        }
        let Some((r_leave, to_upper)) = leave else {
            return StepOutcome::Unbounded;
        };
        let theta = best_theta;
        for r in 0..m {
            let k = self.basic[r];
            self.t[k] -= theta * step_dir * alpha[r];
        }
        let k_leave = self.basic[r_leave];
        self.t[k_leave] = if to_upper { self.range[k_leave] } else { 0.0 };
        self.t[q] += step_dir * theta;

        self.basic[r_leave] = q;
        self.pos[q] = r_leave;
        self.pos[k_leave] = usize::MAX;
        self.update_inverse(r_leave, &alpha);
        self.work += (m * m) as u64;

        self.pivots_since_refactor += 1;
        if self.pivots_since_refactor >= REFACTOR_EVERY {
            self.refactor();
        }
        StepOutcome::Moved
    }

    fn update_inverse(&mut self, r: usize, alpha: &[f64]) {
        let m = self.m;
        let piv = alpha[r];
        for c in 0..m {
            self.binv[r * m + c] /= piv;
        }
        for i in 0..m {
            if i == r || alpha[i] == 0.0 {
                continue;
            }
            let f = alpha[i];
            for c in 0..m {
                self.binv[i * m + c] -= f * self.binv[r * m + c];
            }
        }
    }

    /// Rebuilds `B⁻¹` by Gauss-Jordan elimination and recomputes the basic
    /// distances from the residual.
    fn refactor(&mut self) {
        let m = self.m;
        self.pivots_since_refactor = 0;
        let mut bmat = vec![0.0; m * m];
        let mut col = vec![0.0; m];
        for (r, &k) in self.basic.iter().enumerate() {
            self.column_into(k, &mut col);
            for i in 0..m {
                bmat[i * m + r] = col[i];
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let mut p = c;
            let mut best = bmat[c * m + c].abs();
            for i in c + 1..m {
                let v = bmat[i * m + c].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                // singular; keep the product-form inverse
                return;
            }
            if p != c {
                for x in 0..m {
                    bmat.swap(c * m + x, p * m + x);
                    inv.swap(c * m + x, p * m + x);
                }
            }
            let d = bmat[c * m + c];
            for x in 0..m {
                bmat[c * m + x] /= d;
                inv[c * m + x] /= d;
            }
            for i in 0..m {
                if i == c {
                    continue;
                }
                let f = bmat[i * m + c];
                if f == 0.0 {
                    continue;
                }
                for x in 0..m {
                    bmat[i * m + x] -= f * bmat[c * m + x];
                    inv[i * m + x] -= f * inv[c * m + x];
                }
            }
        }
        self.binv = inv;
        self.work += (2 * m * m * m) as u64;

        // t_B = B⁻¹ (r − Σ_N col_k t_k)
        let mut rhs = self.resid.clone();
        for k in 0..self.kinds.len() {
            if self.is_basic(k) || self.t[k] == 0.0 {
                continue;
            }
            self.column_into(k, &mut col);
            for i in 0..m {
                rhs[i] -= col[i] * self.t[k];
            }
        }
        for r in 0..m {
            let row = &self.binv[r * m..(r + 1) * m];
            let mut acc = 0.0;
            for (b, v) in row.iter().zip(&rhs) {
                acc += b * v;
            }
            let k = self.basic[r];
            self.t[k] = acc;
        }
    }

    fn extract(&self) -> LpResult {
        let (m, n) = (self.m, self.model.n);
        let pi = self.duals_pi();
        let mut x = vec![0.0; n];
        let mut basis_status = Vec::with_capacity(n);
        let mut reduced_costs = vec![0.0; n];
        for j in 0..n {
            x[j] = if self.free[j] {
                self.t[j]
            } else {
                self.anchor[j] + self.dir[j] * self.t[j]
            };
            let status = if self.is_basic(j) {
                BasisStatus::Basic
            } else if self.free[j] {
                BasisStatus::FreeNonbasic
            } else {
                let at_anchor = self.t[j] == 0.0;
                match (at_anchor, self.dir[j] > 0.0) {
                    (true, true) => BasisStatus::AtLower,
                    (true, false) => BasisStatus::AtUpper,
                    (false, _) => BasisStatus::AtUpper,
                }
            };
            if status != BasisStatus::Basic {
                let col = self.model.col(j);
                let mut acc = 0.0;
                for &i in &self.model.col_nz[j] {
                    acc += pi[i] * col[i];
                }
                reduced_costs[j] = self.model.c[j] - acc;
            }
            basis_status.push(status);
        }
        let duals: Vec<f64> = pi.iter().map(|p| if *p == 0.0 { 0.0 } else { -p }).collect();
        let mut slacks = vec![0.0; m];
        let mut row_tight = vec![false; m];
        for i in 0..m {
            let k = n + i;
            slacks[i] = self.t[k];
            row_tight[i] = !self.is_basic(k) || self.t[k] <= FEAS_TOL;
        }
        let mut objective = 0.0;
        for (c, v) in self.model.c.iter().zip(&x) {
            objective += c * v;
        }
        objective += self.model.constant;
        LpResult {
            status: LpStatus::Optimal,
            x,
            objective,
            duals,
            reduced_costs,
            basis_status,
            row_tight,
            iterations: self.iterations,
            slacks,
            work: self.work,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{lp_vertex_enum, DenseProblem};
    use proptest::prelude::*;

    fn e1() -> MilpInstance {
        let mut m = MilpInstance::new(2, 1);
        m.objective = vec![-2.0, -1.0];
        m.matrix = vec![(0, 0, 1.0), (0, 1, 1.0)];
        m.rhs = vec![1.0];
        m.upper = vec![1.0, 1.0];
        m
    }

    fn dense(m: &MilpInstance) -> DenseProblem {
        DenseProblem::from_triplets(&m.objective, &m.matrix, &m.rhs, &m.lower, &m.upper)
    }

    fn assert_certificate(inst: &MilpInstance, r: &LpResult) {
        assert!(r.is_optimal());
        let ax = inst.matrix_times(&r.x);
        for i in 0..inst.n_cons {
            assert!(ax[i] <= inst.rhs[i] + FEAS_TOL);
            assert!(r.duals[i] >= -FEAS_TOL);
            if !r.row_tight[i] {
                assert!(r.duals[i].abs() <= 1e-6);
            }
        }
        // σ = c + Aᵀy
        let mut aty = vec![0.0; inst.n_vars];
        for &(i, j, a) in &inst.matrix {
            aty[j] += a * r.duals[i];
        }
        for j in 0..inst.n_vars {
            assert!(r.x[j] >= inst.lower[j] - FEAS_TOL && r.x[j] <= inst.upper[j] + FEAS_TOL);
            let sigma = inst.objective[j] + aty[j];
            let fixed = inst.lower[j] == inst.upper[j];
            match r.basis_status[j] {
                _ if fixed => {}
                BasisStatus::Basic => {
                    assert_eq!(r.reduced_costs[j], 0.0);
                    assert!(sigma.abs() <= 1e-6, "basic column {j} has σ = {sigma}");
                }
                BasisStatus::AtLower => assert!(sigma >= -1e-6),
                BasisStatus::AtUpper => assert!(sigma <= 1e-6),
                BasisStatus::FreeNonbasic => assert!(sigma.abs() <= 1e-6),
            }
            if r.basis_status[j] != BasisStatus::Basic {
                assert!((r.reduced_costs[j] - sigma).abs() <= 1e-9);
            }
        }
        let obj = inst.objective_value(&r.x);
        assert!((obj - r.objective).abs() <= 1e-9 * (1.0 + r.objective.abs()));
    }

    #[test]
    fn e1_optimum_matches_vertex_enumeration() {
        let m = e1();
        let r = solve_lp(&m.lp_relaxation()).unwrap();
        let (oracle_obj, oracle_x) = lp_vertex_enum(&dense(&m)).unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert_eq!(r.x, vec![1.0, 0.0]);
        assert_eq!(r.objective, -2.0);
        assert!((oracle_obj - -2.0).abs() < 1e-12);
        assert!((oracle_x[0] - 1.0).abs() < 1e-12);
        assert_certificate(&m, &r);
    }

    #[test]
    fn empty_feasible_set_is_infeasible() {
        let mut m = MilpInstance::new(1, 2);
        m.matrix = vec![(0, 0, 1.0), (1, 0, -1.0)];
        m.rhs = vec![1.0, -2.0];
        m.upper = vec![10.0];
        let r = solve_lp(&m.lp_relaxation()).unwrap();
        assert_eq!(r.status, LpStatus::Infeasible);
        assert!(r.x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unbounded_ray_is_detected() {
        let mut m = MilpInstance::new(1, 0);
        m.objective = vec![-1.0];
        let r = solve_lp(&m.lp_relaxation()).unwrap();
        assert_eq!(r.status, LpStatus::Unbounded);
    }

    #[test]
    fn crossed_bounds_are_infeasible() {
        let m = e1();
        let r = LpModel::new(&m).solve(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(r.status, LpStatus::Infeasible);
    }

    #[test]
    fn upper_anchored_and_free_columns() {
        // min x0 − x1, x0 ∈ (−∞, 2], x1 free, x0 − x1 ≥ −3, x1 ≤ 4
        let mut m = MilpInstance::new(2, 2);
        m.objective = vec![1.0, -1.0];
        m.lower = vec![f64::NEG_INFINITY, f64::NEG_INFINITY];
        m.upper = vec![2.0, f64::INFINITY];
        m.matrix = vec![(0, 0, -1.0), (0, 1, 1.0), (1, 1, 1.0)];
        m.rhs = vec![3.0, 4.0];
        let r = solve_lp(&m.lp_relaxation()).unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.objective - -3.0).abs() < 1e-9);
        assert_certificate(&m, &r);
    }

    #[test]
    fn iteration_limit_is_a_distinct_error() {
        let m = e1();
        let mut model = LpModel::new(&m);
        model.iteration_limit = 0;
        assert!(matches!(
            model.solve(&m.lower, &m.upper),
            Err(Error::IterationLimit(0))
        ));
    }

    #[test]
    fn e1_shifted_solution_moves_by_s() {
        let m = e1();
        let shifted = m.shift(&ShiftVector(vec![1.0, 1.0])).unwrap();
        let r = solve_lp(&m.lp_relaxation()).unwrap();
        let rh = solve_lp(&shifted.lp_relaxation()).unwrap();
        assert_eq!(rh.x, vec![2.0, 1.0]);
        assert_eq!(rh.objective, -2.0);
        assert_eq!(r.duals, rh.duals);
        assert_eq!(r.reduced_costs, rh.reduced_costs);
        assert_eq!(r.basis_status, rh.basis_status);
    }

    #[test]
    fn equivalence_report_on_e1() {
        let r = check_shift_equivalence(&e1(), &ShiftVector(vec![1.0, 1.0]), 1e-6).unwrap();
        assert!(r.passed(), "{r:?}");
        let z = check_shift_equivalence(&e1(), &ShiftVector::zeros(2), 0.0).unwrap();
        assert!(z.passed());
        assert_eq!(z.solution_dev, 0.0);
        assert_eq!(z.dual_dev, 0.0);
    }

    #[test]
    fn equivalence_report_not_applicable_when_infeasible() {
        let mut m = MilpInstance::new(1, 2);
        m.matrix = vec![(0, 0, 1.0), (1, 0, -1.0)];
        m.rhs = vec![1.0, -2.0];
        m.upper = vec![10.0];
        let r = check_shift_equivalence(&m, &ShiftVector(vec![3.0]), 1e-6).unwrap();
        assert!(!r.applicable && !r.passed());
    }

    fn small_lp() -> impl Strategy<Value = (MilpInstance, Vec<f64>)> {
        (1usize..4, 0usize..4).prop_flat_map(|(n, m)| {
            (
                proptest::collection::vec(-5i32..=5, n),
                proptest::collection::vec(-4i32..=4, n * m),
                proptest::collection::vec(-3i32..=8, m),
                proptest::collection::vec(-3i32..=1, n),
                proptest::collection::vec(0i32..=4, n),
                proptest::collection::vec(-7i32..=7, n),
            )
                .prop_map(move |(c, a, b, l, w, s)| {
                    let mut inst = MilpInstance::new(n, m);
                    inst.objective = c.iter().map(|&v| v as f64).collect();
                    for (k, v) in a.iter().enumerate() {
                        if *v != 0 {
                            inst.matrix.push((k / n, k % n, *v as f64));
                        }
                    }
                    inst.rhs = b.iter().map(|&v| v as f64).collect();
                    inst.lower = l.iter().map(|&v| v as f64).collect();
                    inst.upper = l.iter().zip(&w).map(|(&l, &w)| (l + w) as f64).collect();
                    (inst, s.iter().map(|&v| v as f64).collect())
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn agrees_with_vertex_enumeration((inst, _s) in small_lp()) {
            let r = solve_lp(&inst.lp_relaxation()).unwrap();
            match lp_vertex_enum(&dense(&inst)) {
                None => prop_assert_eq!(r.status, LpStatus::Infeasible),
                Some((obj, _)) => {
                    prop_assert_eq!(r.status, LpStatus::Optimal);
                    prop_assert!((r.objective - obj).abs() <= 1e-7 * (1.0 + obj.abs()));
                    assert_certificate(&inst, &r);
                }
            }
        }

        #[test]
        fn shift_leaves_trajectory_untouched((inst, s) in small_lp()) {
            let s = ShiftVector(s);
            let shifted = inst.shift(&s).unwrap();
            let r = solve_lp(&inst.lp_relaxation()).unwrap();
            let rh = solve_lp(&shifted.lp_relaxation()).unwrap();
            prop_assert_eq!(r.status, rh.status);
            prop_assert_eq!(r.iterations, rh.iterations);
            if r.is_optimal() {
                prop_assert_eq!(&r.duals, &rh.duals);
                prop_assert_eq!(&r.reduced_costs, &rh.reduced_costs);
                prop_assert_eq!(&r.basis_status, &rh.basis_status);
                prop_assert_eq!(&r.row_tight, &rh.row_tight);
                prop_assert_eq!(&r.slacks, &rh.slacks);
                for j in 0..inst.n_vars {
                    prop_assert!((rh.x[j] - r.x[j] - s.0[j]).abs() <= 1e-12);
                }
                prop_assert!((r.objective - rh.objective).abs() <= 1e-12 * (1.0 + r.objective.abs()));
            }
        }

        #[test]
        fn deterministic((inst, _s) in small_lp()) {
            let a = solve_lp(&inst.lp_relaxation()).unwrap();
            let b = solve_lp(&inst.lp_relaxation()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
