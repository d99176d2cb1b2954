//! Per-pair check that an instance and its shift behave identically: LP
//! relaxation, encoded root state and the complete FSB search.

use serde::Serialize;

use crate::bnb::{solve_bnb, BnbConfig, BnbStatus, BranchingPolicy};
use crate::encoder::{cross_check_augmented, DeviationReport, EncodeContext};
use crate::error::Result;
use crate::lp::{check_shift_equivalence, ShiftEquivalence};
use crate::milp::{MilpInstance, ShiftVector};

#[derive(Debug, Clone, Serialize)]
pub struct PairReport {
    pub instance: String,
    pub lp: ShiftEquivalence,
    pub features: DeviationReport,
    pub fsb_root_match: bool,
    pub fsb_sequence_match: bool,
    pub fsb_nodes: (usize, usize),
    pub fsb_objective_dev: f64,
}

impl PairReport {
    pub fn passed(&self) -> bool {
        self.lp.passed()
            && self.features.passed()
            && self.fsb_root_match
            && self.fsb_sequence_match
            && self.fsb_nodes.0 == self.fsb_nodes.1
            && self.fsb_objective_dev <= self.lp.tol
    }

    /// Short description of the first failing check, if any.
    pub fn failure(&self) -> Option<String> {
        if !self.lp.applicable {
            Some("LP relaxation not optimal".into())
        } else if !self.lp.passed() {
            Some(format!(
                "LP: x {:.2e} obj {:.2e} duals {:.2e} rc {:.2e} basis {}",
                self.lp.solution_dev,
                self.lp.objective_dev,
                self.lp.dual_dev,
                self.lp.reduced_cost_dev,
                self.lp.basis_mismatches
            ))
        } else if !self.features.passed() {
            Some(format!("features: max dev {:.2e}", self.features.max_dev()))
        } else if !self.fsb_root_match {
            Some("FSB root decision differs".into())
        } else if !self.fsb_sequence_match || self.fsb_nodes.0 != self.fsb_nodes.1 {
            Some(format!("FSB search differs ({} vs {} nodes)", self.fsb_nodes.0, self.fsb_nodes.1))
        } else if !(self.fsb_objective_dev <= self.lp.tol) {
            Some(format!("FSB objective dev {:.2e}", self.fsb_objective_dev))
        } else {
            None
        }
    }
}

/// Runs every shift-equivalence check on `(instance, s)`. The FSB searches
/// use `config` with tracing forced on.
pub fn verify_pair(
    instance: &MilpInstance,
    s: &ShiftVector,
    tol: f64,
    config: &BnbConfig,
) -> Result<PairReport> {
    let lp = check_shift_equivalence(instance, s, tol)?;
    let features = cross_check_augmented(instance, s, &EncodeContext::default(), tol)?;
    let cfg = BnbConfig {
        trace: true,
        ..config.clone()
    };
    let shifted = instance.shift(s)?;
    let a = solve_bnb(instance, &BranchingPolicy::Fsb, &cfg)?;
    let b = solve_bnb(&shifted, &BranchingPolicy::Fsb, &cfg)?;
    let (sa, sb) = (a.branching_sequence(), b.branching_sequence());
    let fsb_objective_dev = match (a.status, b.status) {
        (BnbStatus::Infeasible, BnbStatus::Infeasible) => 0.0,
        _ if a.best_objective == b.best_objective => 0.0,
        _ => (a.best_objective - b.best_objective).abs(),
    };
    Ok(PairReport {
        instance: instance.label.clone(),
        lp,
        features,
        fsb_root_match: sa.first() == sb.first(),
        fsb_sequence_match: sa == sb && a.status == b.status,
        fsb_nodes: (a.nodes_processed, b.nodes_processed),
        fsb_objective_dev,
    })
}
