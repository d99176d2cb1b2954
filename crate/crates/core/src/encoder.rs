//! Bipartite state encoding of a solved node, and the shift map that turns
//! the state of an instance into the state of its shifted copy without
//! solving anything.
//!
//! Normalizations (all centralized here so both paths agree):
//! - `bias = b_i / ‖a_i‖`, edge `coef = a_ij / ‖a_i‖`
//! - variable `coef = c_j / ‖c‖`, `obj_cos_sim = a_i·c / (‖a_i‖‖c‖)`
//! - `dualsol_val = y_i / (‖y‖ + 1)`, `reduced_cost = σ_j / (‖c‖ + 1)`
//! - `age = lp solves since last incumbent / (1 + total lp solves)`
//!
//! Zero norms are replaced by one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve_lp, BasisStatus, LpResult};
use crate::milp::{MilpInstance, ShiftVector};

pub const SCHEMA: &str = "bipartite-v1";
pub const CONS_FEATS: usize = 5;
pub const VAR_FEATS: usize = 19;
pub const EDGE_FEATS: usize = 1;

const FRAC_EPS: f64 = 1e-6;
const SNAP_EPS: f64 = 1e-9;

/// Column layout of the constraint feature matrix.
pub mod cons {
    pub const OBJ_COS_SIM: usize = 0;
    pub const BIAS: usize = 1;
    pub const IS_TIGHT: usize = 2;
    pub const DUALSOL_VAL: usize = 3;
    pub const AGE: usize = 4;
}

/// Column layout of the variable feature matrix.
pub mod var {
    pub const TYPE_BINARY: usize = 0;
    pub const TYPE_INTEGER: usize = 1;
    pub const TYPE_IMPL_INTEGER: usize = 2;
    pub const TYPE_CONTINUOUS: usize = 3;
    pub const COEF: usize = 4;
    pub const HAS_LB: usize = 5;
    pub const HAS_UB: usize = 6;
    pub const SOL_IS_AT_LB: usize = 7;
    pub const SOL_IS_AT_UB: usize = 8;
    pub const SOL_FRAC: usize = 9;
    pub const BASIS_LOWER: usize = 10;
    pub const BASIS_BASIC: usize = 11;
    pub const BASIS_UPPER: usize = 12;
    pub const BASIS_ZERO: usize = 13;
    pub const REDUCED_COST: usize = 14;
    pub const AGE: usize = 15;
    pub const SOL_VAL: usize = 16;
    pub const INC_VAL: usize = 17;
    pub const AVG_INC_VAL: usize = 18;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BipartiteState {
    pub n_cons: usize,
    pub n_vars: usize,
    /// Row-major `n_cons × 5`.
    pub cons_feats: Vec<f64>,
    /// Row-major `n_vars × 19`.
    pub var_feats: Vec<f64>,
    /// `(constraint, variable, normalized coefficient)`, sorted by row then column.
    pub edges: Vec<(usize, usize, f64)>,
    pub candidates: Vec<usize>,
    /// Whether the incumbent features hold real solution values.
    pub has_incumbent: bool,
}

impl BipartiteState {
    pub fn cons_row(&self, i: usize) -> &[f64] {
        &self.cons_feats[i * CONS_FEATS..(i + 1) * CONS_FEATS]
    }

    pub fn var_row(&self, j: usize) -> &[f64] {
        &self.var_feats[j * VAR_FEATS..(j + 1) * VAR_FEATS]
    }

    fn var_mut(&mut self, j: usize, f: usize) -> &mut f64 {
        &mut self.var_feats[j * VAR_FEATS + f]
    }

    /// Checks one-hot, boolean, range and index invariants.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if self.cons_feats.len() != self.n_cons * CONS_FEATS
            || self.var_feats.len() != self.n_vars * VAR_FEATS
        {
            return Err("feature matrix shape".into());
        }
        let is_bool = |v: f64| v == 0.0 || v == 1.0;
        for i in 0..self.n_cons {
            if !is_bool(self.cons_row(i)[cons::IS_TIGHT]) {
                return Err(format!("is_tight not boolean at row {i}"));
            }
        }
        for j in 0..self.n_vars {
            let r = self.var_row(j);
            let t: f64 = r[var::TYPE_BINARY..=var::TYPE_CONTINUOUS].iter().sum();
            let b: f64 = r[var::BASIS_LOWER..=var::BASIS_ZERO].iter().sum();
            if t != 1.0 || b != 1.0 {
                return Err(format!("one-hot block broken at variable {j}"));
            }
            for f in [var::HAS_LB, var::HAS_UB, var::SOL_IS_AT_LB, var::SOL_IS_AT_UB] {
                if !is_bool(r[f]) {
                    return Err(format!("feature {f} not boolean at variable {j}"));
                }
            }
            if !(0.0..1.0).contains(&r[var::SOL_FRAC]) {
                return Err(format!("sol_frac out of range at variable {j}"));
            }
        }
        for &(i, j, _) in &self.edges {
            if i >= self.n_cons || j >= self.n_vars {
                return Err(format!("edge ({i}, {j}) out of range"));
            }
        }
        if self.candidates.iter().any(|&j| j >= self.n_vars) {
            return Err("candidate out of range".into());
        }
        Ok(())
    }
}

/// Search-history inputs to the encoder.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EncodeContext {
    pub lp_solves_since_incumbent: usize,
    pub total_lp_solves: usize,
    pub incumbent: Option<Vec<f64>>,
    /// Sum of every incumbent found so far.
    pub incumbent_sum: Vec<f64>,
    pub incumbent_count: usize,
}

impl EncodeContext {
    pub fn record_incumbent(&mut self, x: &[f64]) {
        if self.incumbent_sum.len() != x.len() {
            self.incumbent_sum = vec![0.0; x.len()];
        }
        for (acc, v) in self.incumbent_sum.iter_mut().zip(x) {
            *acc += v;
        }
        self.incumbent_count += 1;
        self.incumbent = Some(x.to_vec());
        self.lp_solves_since_incumbent = 0;
    }

    pub fn record_lp_solve(&mut self) {
        self.total_lp_solves += 1;
        self.lp_solves_since_incumbent += 1;
    }

    fn age(&self) -> f64 {
        self.lp_solves_since_incumbent as f64 / (1.0 + self.total_lp_solves as f64)
    }

    /// The same history expressed in shifted coordinates.
    pub fn shifted(&self, s: &ShiftVector) -> EncodeContext {
        let mut out = self.clone();
        if let Some(inc) = &mut out.incumbent {
            for (v, d) in inc.iter_mut().zip(&s.0) {
                *v += d;
            }
        }
        let k = self.incumbent_count as f64;
        for (v, d) in out.incumbent_sum.iter_mut().zip(&s.0) {
            *v += k * d;
        }
        out
    }
}

fn nonzero_norm(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        1.0
    }
}

/// Fractional part snapped to zero within `SNAP_EPS` of an integer.
fn snapped_frac(x: f64) -> f64 {
    let f = x - x.floor();
    if f < SNAP_EPS || f > 1.0 - SNAP_EPS {
        0.0
    } else {
        f
    }
}

/// Integer variables with fractional LP value, in index order.
pub fn fractional_candidates(instance: &MilpInstance, x: &[f64]) -> Vec<usize> {
    (0..instance.n_vars)
        .filter(|&j| {
            if !instance.integer_mask[j] {
                return false;
            }
            let f = x[j] - x[j].floor();
            f > FRAC_EPS && f < 1.0 - FRAC_EPS
        })
        .collect()
}

fn type_slot(instance: &MilpInstance, lower: f64, upper: f64, j: usize) -> usize {
    if !instance.integer_mask[j] {
        var::TYPE_CONTINUOUS
    } else if lower == 0.0 && upper == 1.0 {
        var::TYPE_BINARY
    } else {
        var::TYPE_INTEGER
    }
}

/// Encodes the root LP of an instance.
pub fn encode_state(
    instance: &MilpInstance,
    lp: &LpResult,
    ctx: &EncodeContext,
) -> Result<BipartiteState> {
    encode_node_state(instance, &instance.lower, &instance.upper, lp, ctx)
}

/// Encodes a branch-and-bound node with local bounds `lower`/`upper`.
pub fn encode_node_state(
    instance: &MilpInstance,
    lower: &[f64],
    upper: &[f64],
    lp: &LpResult,
    ctx: &EncodeContext,
) -> Result<BipartiteState> {
    if !lp.is_optimal() {
        return Err(Error::NotOptimal("cannot encode a non-optimal node"));
    }
    let (m, n) = (instance.n_cons, instance.n_vars);
    if lp.x.len() != n || lp.duals.len() != m || lower.len() != n || upper.len() != n {
        return Err(Error::Dimension {
            what: "LP result",
            expected: n,
            got: lp.x.len(),
        });
    }
    let rows = instance.rows();
    let row_norm: Vec<f64> = instance.row_norms().into_iter().map(nonzero_norm).collect();
    let c_norm_raw = instance.objective.iter().map(|c| c * c).sum::<f64>().sqrt();
    let c_norm = nonzero_norm(c_norm_raw);
    let y_norm = lp.duals.iter().map(|y| y * y).sum::<f64>().sqrt();
    let age = ctx.age();

    let mut cons_feats = vec![0.0; m * CONS_FEATS];
    let mut edges = Vec::with_capacity(instance.matrix.len());
    for i in 0..m {
        let mut dot = 0.0;
        for &(j, a) in &rows[i] {
            dot += a * instance.objective[j];
            edges.push((i, j, a / row_norm[i]));
        }
        let f = &mut cons_feats[i * CONS_FEATS..(i + 1) * CONS_FEATS];
        f[cons::OBJ_COS_SIM] = if c_norm_raw > 0.0 {
            dot / (row_norm[i] * c_norm)
        } else {
            0.0
        };
        f[cons::BIAS] = instance.rhs[i] / row_norm[i];
        f[cons::IS_TIGHT] = if lp.row_tight[i] { 1.0 } else { 0.0 };
        f[cons::DUALSOL_VAL] = lp.duals[i] / (y_norm + 1.0);
        f[cons::AGE] = age;
    }

    let inc = ctx.incumbent.as_ref().filter(|v| v.len() == n);
    let mut var_feats = vec![0.0; n * VAR_FEATS];
    for j in 0..n {
        let f = &mut var_feats[j * VAR_FEATS..(j + 1) * VAR_FEATS];
        let x = lp.x[j];
        f[type_slot(instance, instance.lower[j], instance.upper[j], j)] = 1.0;
        f[var::COEF] = instance.objective[j] / c_norm;
        f[var::HAS_LB] = lower[j].is_finite() as u8 as f64;
        f[var::HAS_UB] = upper[j].is_finite() as u8 as f64;
        f[var::SOL_IS_AT_LB] = (lower[j].is_finite() && (x - lower[j]).abs() <= SNAP_EPS) as u8 as f64;
        f[var::SOL_IS_AT_UB] = (upper[j].is_finite() && (upper[j] - x).abs() <= SNAP_EPS) as u8 as f64;
        f[var::SOL_FRAC] = if instance.integer_mask[j] {
            snapped_frac(x)
        } else {
            0.0
        };
        let slot = match lp.basis_status[j] {
            BasisStatus::AtLower => var::BASIS_LOWER,
            BasisStatus::Basic => var::BASIS_BASIC,
            BasisStatus::AtUpper => var::BASIS_UPPER,
            BasisStatus::FreeNonbasic => var::BASIS_ZERO,
        };
        f[slot] = 1.0;
        f[var::REDUCED_COST] = lp.reduced_costs[j] / (c_norm + 1.0);
        f[var::AGE] = age;
        f[var::SOL_VAL] = x;
        if let Some(inc) = inc {
            f[var::INC_VAL] = inc[j];
            f[var::AVG_INC_VAL] = ctx.incumbent_sum[j] / ctx.incumbent_count as f64;
        }
    }

    Ok(BipartiteState {
        n_cons: m,
        n_vars: n,
        cons_feats,
        var_feats,
        edges,
        candidates: fractional_candidates(instance, &lp.x),
        has_incumbent: inc.is_some(),
    })
}

/// State of the shifted instance, derived from the original state alone.
///
/// Only `bias`, the variable type (binary ↔ integer), `sol_val` and the two
/// incumbent features change; everything else is copied.
pub fn derive_augmented_state(
    state: &BipartiteState,
    instance: &MilpInstance,
    s: &ShiftVector,
) -> Result<BipartiteState> {
    if state.n_vars != instance.n_vars || state.n_cons != instance.n_cons {
        return Err(Error::Dimension {
            what: "state vs instance",
            expected: instance.n_vars,
            got: state.n_vars,
        });
    }
    s.check(instance)?;
    let mut out = state.clone();
    if s.is_zero() {
        return Ok(out);
    }
    let rhs = instance.shifted_rhs(&s.0);
    let row_norm: Vec<f64> = instance.row_norms().into_iter().map(nonzero_norm).collect();
    for i in 0..instance.n_cons {
        out.cons_feats[i * CONS_FEATS + cons::BIAS] = rhs[i] / row_norm[i];
    }
    for j in 0..instance.n_vars {
        let d = s.0[j];
        if instance.integer_mask[j] {
            let slot = type_slot(instance, instance.lower[j] + d, instance.upper[j] + d, j);
            *out.var_mut(j, var::TYPE_BINARY) = 0.0;
            *out.var_mut(j, var::TYPE_INTEGER) = 0.0;
            *out.var_mut(j, slot) = 1.0;
        }
        *out.var_mut(j, var::SOL_VAL) += d;
        if state.has_incumbent {
            *out.var_mut(j, var::INC_VAL) += d;
            *out.var_mut(j, var::AVG_INC_VAL) += d;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationReport {
    pub applicable: bool,
    pub max_cons_dev: f64,
    pub max_var_dev: f64,
    pub max_edge_dev: f64,
    pub candidates_match: bool,
    pub tol: f64,
}

impl DeviationReport {
    pub fn max_dev(&self) -> f64 {
        self.max_cons_dev.max(self.max_var_dev).max(self.max_edge_dev)
    }

    pub fn passed(&self) -> bool {
        self.applicable && self.candidates_match && self.max_dev() <= self.tol
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Derived state vs a fresh encode of the shifted instance.
pub fn cross_check_augmented(
    instance: &MilpInstance,
    s: &ShiftVector,
    ctx: &EncodeContext,
    tol: f64,
) -> Result<DeviationReport> {
    let shifted = instance.shift(s)?;
    let lp = solve_lp(&instance.lp_relaxation())?;
    let lp_hat = solve_lp(&shifted.lp_relaxation())?;
    if !lp.is_optimal() || !lp_hat.is_optimal() {
        return Ok(DeviationReport {
            applicable: false,
            max_cons_dev: f64::NAN,
            max_var_dev: f64::NAN,
            max_edge_dev: f64::NAN,
            candidates_match: false,
            tol,
        });
    }
    let derived = derive_augmented_state(&encode_state(instance, &lp, ctx)?, instance, s)?;
    let fresh = encode_state(&shifted, &lp_hat, &ctx.shifted(s))?;
    let edge_dev = if derived.edges.len() == fresh.edges.len()
        && derived
            .edges
            .iter()
            .zip(&fresh.edges)
            .all(|(a, b)| a.0 == b.0 && a.1 == b.1)
    {
        derived
            .edges
            .iter()
            .zip(&fresh.edges)
            .map(|(a, b)| (a.2 - b.2).abs())
            .fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    Ok(DeviationReport {
        applicable: true,
        max_cons_dev: max_abs_diff(&derived.cons_feats, &fresh.cons_feats),
        max_var_dev: max_abs_diff(&derived.var_feats, &fresh.var_feats),
        max_edge_dev: edge_dev,
        candidates_match: derived.candidates == fresh.candidates,
        tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instgen::GenSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn row_345() -> MilpInstance {
        // min 3x₁ + 4x₂ s.t. 3x₁ + 4x₂ ≤ 5, x ∈ [0, 1]², integer
        let mut m = MilpInstance::new(2, 1);
        m.objective = vec![3.0, 4.0];
        m.matrix = vec![(0, 0, 3.0), (0, 1, 4.0)];
        m.rhs = vec![5.0];
        m.upper = vec![1.0, 1.0];
        m.integer_mask = vec![true, true];
        m
    }

    #[test]
    fn row_normalization_by_hand() {
        let m = row_345();
        let lp = solve_lp(&m.lp_relaxation()).unwrap();
        let st = encode_state(&m, &lp, &EncodeContext::default()).unwrap();
        assert_eq!(st.cons_row(0)[cons::BIAS], 1.0);
        assert_eq!(st.cons_row(0)[cons::OBJ_COS_SIM], 1.0);
        assert_eq!(st.edges, vec![(0, 0, 0.6), (0, 1, 0.8)]);
        // minimizing positive costs: both at lower bound
        for j in 0..2 {
            assert_eq!(st.var_row(j)[var::SOL_IS_AT_LB], 1.0);
            assert_eq!(st.var_row(j)[var::SOL_FRAC], 0.0);
            assert_eq!(st.var_row(j)[var::TYPE_BINARY], 1.0);
        }
        assert!(st.candidates.is_empty());
        st.check_invariants().unwrap();
    }

    #[test]
    fn shifted_bias_by_hand() {
        let m = row_345();
        let lp = solve_lp(&m.lp_relaxation()).unwrap();
        let st = encode_state(&m, &lp, &EncodeContext::default()).unwrap();
        let d = derive_augmented_state(&st, &m, &ShiftVector(vec![1.0, 1.0])).unwrap();
        assert!((d.cons_row(0)[cons::BIAS] - 2.4).abs() < 1e-15);
        // bounds become {1, 2}: binary → integer
        assert_eq!(d.var_row(0)[var::TYPE_BINARY], 0.0);
        assert_eq!(d.var_row(0)[var::TYPE_INTEGER], 1.0);
        assert_eq!(d.var_row(0)[var::SOL_VAL], 1.0);
        d.check_invariants().unwrap();
    }

    #[test]
    fn zero_shift_is_identity() {
        let m = row_345();
        let lp = solve_lp(&m.lp_relaxation()).unwrap();
        let st = encode_state(&m, &lp, &EncodeContext::default()).unwrap();
        assert_eq!(derive_augmented_state(&st, &m, &ShiftVector::zeros(2)).unwrap(), st);
        let r = cross_check_augmented(&m, &ShiftVector::zeros(2), &EncodeContext::default(), 0.0)
            .unwrap();
        assert!(r.passed());
        assert_eq!(r.max_dev(), 0.0);
    }

    #[test]
    fn integer_to_binary_flip() {
        let mut m = row_345();
        m.lower = vec![-1.0, 0.0];
        m.upper = vec![0.0, 1.0];
        let lp = solve_lp(&m.lp_relaxation()).unwrap();
        let st = encode_state(&m, &lp, &EncodeContext::default()).unwrap();
        assert_eq!(st.var_row(0)[var::TYPE_INTEGER], 1.0);
        let d = derive_augmented_state(&st, &m, &ShiftVector(vec![1.0, 0.0])).unwrap();
        assert_eq!(d.var_row(0)[var::TYPE_BINARY], 1.0);
    }

    #[test]
    fn incumbent_placeholders_are_not_shifted() {
        let m = row_345();
        let lp = solve_lp(&m.lp_relaxation()).unwrap();
        let st = encode_state(&m, &lp, &EncodeContext::default()).unwrap();
        let d = derive_augmented_state(&st, &m, &ShiftVector(vec![2.0, 3.0])).unwrap();
        assert_eq!(d.var_row(1)[var::INC_VAL], 0.0);

        let mut ctx = EncodeContext::default();
        ctx.record_lp_solve();
        ctx.record_incumbent(&[0.0, 1.0]);
        ctx.record_lp_solve();
        ctx.record_incumbent(&[1.0, 1.0]);
        ctx.record_lp_solve();
        let st = encode_state(&m, &lp, &ctx).unwrap();
        assert_eq!(st.var_row(0)[var::AVG_INC_VAL], 0.5);
        assert_eq!(st.var_row(0)[var::AGE], 1.0 / 4.0);
        let d = derive_augmented_state(&st, &m, &ShiftVector(vec![2.0, 3.0])).unwrap();
        assert_eq!(d.var_row(0)[var::INC_VAL], 3.0);
        assert_eq!(d.var_row(0)[var::AVG_INC_VAL], 2.5);
    }

    #[test]
    fn non_optimal_lp_is_rejected() {
        let m = row_345();
        let mut lp = solve_lp(&m.lp_relaxation()).unwrap();
        lp.status = crate::lp::LpStatus::Infeasible;
        assert!(encode_state(&m, &lp, &EncodeContext::default()).is_err());
    }

    #[test]
    fn derived_states_match_fresh_encodes_on_generated_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..8 {
            for spec in [
                GenSpec::set_cover(seed),
                GenSpec::comb_auction(seed),
                GenSpec::facility_location(seed),
                GenSpec::max_indep_set(seed),
            ] {
                let inst = spec.generate().unwrap();
                let s = crate::milp::sample_shift(&inst, 10.0, &mut rng).unwrap();
                let mut ctx = EncodeContext::default();
                ctx.record_lp_solve();
                if seed % 2 == 0 {
                    ctx.record_incumbent(&vec![1.0; inst.n_vars]);
                    ctx.record_lp_solve();
                }
                let r = cross_check_augmented(&inst, &s, &ctx, 1e-9).unwrap();
                assert!(r.passed(), "{}: {r:?}", inst.label);
            }
        }
    }
}
