//! Branch-and-bound with pluggable branching rules.
//!
//! Nodes are processed best-bound first (or depth-first on request). Node
//! bounds are quantized to `1e-9` before ordering and equal keys fall back to
//! creation order, so two searches whose LP values agree to far below that
//! quantum visit nodes in the same order.
//!
//! Time can be measured on the wall clock or on a deterministic work clock
//! that counts the simplex and network multiply-adds; the latter makes
//! timing-dependent outputs reproducible byte for byte.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::Arc;
use std::time::Instant;

use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{encode_node_state, fractional_candidates, BipartiteState, EncodeContext};
use crate::error::{Error, Result};
use crate::gcnn::GcnnModel;
use crate::lp::{LpModel, LpResult, LpStatus};
use crate::milp::MilpInstance;
pub use crate::samples::Tightening;
use crate::samples::{node_bounds, ExpertSample};

/// Improvement assigned to an infeasible child.
pub const INFEASIBLE_GAIN: f64 = 1e8;
/// Floor applied to each child improvement in the score.
pub const SCORE_EPS: f64 = 1e-6;
/// Nodes whose bound is within this of the incumbent are pruned.
pub const PRUNE_TOL: f64 = 1e-9;
/// Work units counted as one second on the deterministic clock.
pub const WORK_PER_SECOND: f64 = 1e9;

const KEY_QUANTUM: f64 = 1e-9;
const SCORE_TIE_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeSelection {
    BestBound,
    DepthFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreRule {
    /// `max(Δ⁻, ε)·max(Δ⁺, ε)`
    Product,
    /// `Δ⁻ + Δ⁺`
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Clock {
    Wall,
    Work,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BnbLimits {
    /// Seconds on the configured clock.
    pub time: Option<f64>,
    pub nodes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnbConfig {
    pub limits: BnbLimits,
    pub node_selection: NodeSelection,
    pub score_rule: ScoreRule,
    pub clock: Clock,
    pub trace: bool,
}

impl Default for BnbConfig {
    fn default() -> Self {
        BnbConfig {
            limits: BnbLimits::default(),
            node_selection: NodeSelection::BestBound,
            score_rule: ScoreRule::Product,
            clock: Clock::Work,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnbNode {
    pub id: usize,
    /// Every tightening on the path from the root, oldest first.
    pub tightenings: Vec<Tightening>,
    /// LP objective of the parent; `-∞` at the root.
    pub parent_bound: f64,
    pub depth: usize,
    /// Branching variable, direction and fractional distance that created this node.
    branched: Option<(usize, bool, f64)>,
}

impl BnbNode {
    fn root() -> Self {
        BnbNode {
            id: 0,
            tightenings: Vec::new(),
            parent_bound: f64::NEG_INFINITY,
            depth: 0,
            branched: None,
        }
    }

    /// Materializes the node box.
    pub fn bounds(&self, instance: &MilpInstance) -> (Vec<f64>, Vec<f64>) {
        node_bounds(instance, &self.tightenings)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BnbStatus {
    OptimalProved,
    /// The search space was exhausted without a feasible point.
    Infeasible,
    TimeLimit,
    NodeLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub node: usize,
    pub depth: usize,
    pub lp_objective: f64,
    pub branch_var: Option<usize>,
    /// `(down child upper, up child lower)` on the branching variable.
    pub child_bounds: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnbResult {
    pub status: BnbStatus,
    /// Includes the objective constant; `+∞` without an incumbent.
    pub best_objective: f64,
    pub incumbent: Option<Vec<f64>>,
    pub nodes_processed: usize,
    pub wall_time: f64,
    pub work: u64,
    pub lp_solves: usize,
    pub trace: Option<Vec<TraceRecord>>,
}

impl BnbResult {
    /// Seconds on the requested clock.
    pub fn time(&self, clock: Clock) -> f64 {
        match clock {
            Clock::Wall => self.wall_time,
            Clock::Work => self.work as f64 / WORK_PER_SECOND,
        }
    }

    pub fn solved(&self) -> bool {
        matches!(self.status, BnbStatus::OptimalProved | BnbStatus::Infeasible)
    }

    /// Branching variables in node processing order.
    pub fn branching_sequence(&self) -> Vec<usize> {
        self.trace
            .iter()
            .flatten()
            .filter_map(|r| r.branch_var)
            .collect()
    }
}

/// Named branching rules. Shareable across threads; per-search state lives
/// in the brancher created for each search.
#[derive(Debug, Clone)]
pub enum BranchingPolicy {
    Fsb,
    MostFractional,
    Pseudocost,
    Random { seed: u64 },
    Learned(Arc<GcnnModel>),
}

impl BranchingPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            BranchingPolicy::Fsb => "fsb",
            BranchingPolicy::MostFractional => "mostfrac",
            BranchingPolicy::Pseudocost => "pseudocost",
            BranchingPolicy::Random { .. } => "random",
            BranchingPolicy::Learned(_) => "learned",
        }
    }

    fn brancher(&self, n_vars: usize) -> Brancher<'_> {
        match self {
            BranchingPolicy::Random { seed } => Brancher::Random(ChaCha8Rng::seed_from_u64(*seed)),
            BranchingPolicy::Pseudocost => Brancher::Pseudocost(Pseudocosts::new(n_vars)),
            BranchingPolicy::Fsb => Brancher::Fsb,
            BranchingPolicy::MostFractional => Brancher::MostFractional,
            BranchingPolicy::Learned(m) => Brancher::Learned(m),
        }
    }
}

#[derive(Debug, Clone)]
struct Pseudocosts {
    sum: [Vec<f64>; 2],
    count: [Vec<usize>; 2],
}

impl Pseudocosts {
    fn new(n: usize) -> Self {
        Pseudocosts {
            sum: [vec![0.0; n], vec![0.0; n]],
            count: [vec![0; n], vec![0; n]],
        }
    }

    fn observe(&mut self, var: usize, up: bool, unit_gain: f64) {
        let d = up as usize;
        self.sum[d][var] += unit_gain.max(0.0);
        self.count[d][var] += 1;
    }

    /// Per-unit estimate; unseen variables use the mean over seen ones (or 1).
    fn estimate(&self, var: usize, up: bool) -> f64 {
        let d = up as usize;
        if self.count[d][var] > 0 {
            return self.sum[d][var] / self.count[d][var] as f64;
        }
        let (s, c) = self.sum[d]
            .iter()
            .zip(&self.count[d])
            .filter(|(_, &c)| c > 0)
            .fold((0.0, 0usize), |(s, n), (v, &c)| (s + v / c as f64, n + 1));
        if c > 0 {
            s / c as f64
        } else {
            1.0
        }
    }
}

enum Brancher<'a> {
    Fsb,
    MostFractional,
    Pseudocost(Pseudocosts),
    Random(ChaCha8Rng),
    Learned(&'a GcnnModel),
}

/// Everything a rule may look at when choosing among candidates.
struct NodeView<'a> {
    instance: &'a MilpInstance,
    model: &'a LpModel,
    lower: &'a [f64],
    upper: &'a [f64],
    lp: &'a LpResult,
    candidates: &'a [usize],
    ctx: &'a EncodeContext,
    score_rule: ScoreRule,
}

/// First index of the maximum, treating values within a relative `1e-9` as tied.
pub fn argmax_lowest(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, &v) in values.iter().enumerate() {
        match best {
            None => best = Some(k),
            Some(b) => {
                let bv = values[b];
                if v > bv + SCORE_TIE_RTOL * bv.abs().max(1.0) {
                    best = Some(k);
                }
            }
        }
    }
    best
}

/// Child-minus-parent improvement of both children for every candidate.
pub fn child_gains(
    model: &LpModel,
    lower: &[f64],
    upper: &[f64],
    parent: &LpResult,
    candidates: &[usize],
    work: &mut u64,
) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(candidates.len());
    let mut up_bounds = upper.to_vec();
    let mut lo_bounds = lower.to_vec();
    for &j in candidates {
        let x = parent.x[j];
        let mut gain = |lo: &[f64], hi: &[f64]| -> Result<f64> {
            let r = model.solve(lo, hi)?;
            *work += r.work;
            match r.status {
                LpStatus::Optimal => Ok(r.objective - parent.objective),
                LpStatus::Infeasible => Ok(INFEASIBLE_GAIN),
                LpStatus::Unbounded => Err(Error::Bnb(format!(
                    "unbounded child LP on variable {j}"
                ))),
            }
        };
        up_bounds[j] = x.floor();
        let down = gain(lower, &up_bounds)?;
        up_bounds[j] = upper[j];
        lo_bounds[j] = x.ceil();
        let up = gain(&lo_bounds, upper)?;
        lo_bounds[j] = lower[j];
        out.push((down, up));
    }
    Ok(out)
}

pub fn combine_gains(down: f64, up: f64, rule: ScoreRule) -> f64 {
    match rule {
        ScoreRule::Product => down.max(SCORE_EPS) * up.max(SCORE_EPS),
        ScoreRule::Sum => down + up,
    }
}

/// Full strong branching scores at a solved node.
pub fn fsb_scores(
    model: &LpModel,
    lower: &[f64],
    upper: &[f64],
    parent: &LpResult,
    candidates: &[usize],
    rule: ScoreRule,
) -> Result<Vec<f64>> {
    let mut work = 0;
    Ok(child_gains(model, lower, upper, parent, candidates, &mut work)?
        .into_iter()
        .map(|(d, u)| combine_gains(d, u, rule))
        .collect())
}

impl Brancher<'_> {
    /// Returns an index into `view.candidates`.
    fn select(&mut self, view: &NodeView, work: &mut u64) -> Result<usize> {
        let k = view.candidates.len();
        if k == 1 {
            return Ok(0);
        }
        let pick = match self {
            Brancher::Fsb => {
                let gains = child_gains(
                    view.model,
                    view.lower,
                    view.upper,
                    view.lp,
                    view.candidates,
                    work,
                )?;
                let scores: Vec<f64> = gains
                    .iter()
                    .map(|&(d, u)| combine_gains(d, u, view.score_rule))
                    .collect();
                argmax_lowest(&scores)
            }
            Brancher::MostFractional => {
                let scores: Vec<f64> = view
                    .candidates
                    .iter()
                    .map(|&j| {
                        let f = view.lp.x[j] - view.lp.x[j].floor();
                        f.min(1.0 - f)
                    })
                    .collect();
                argmax_lowest(&scores)
            }
            Brancher::Pseudocost(pc) => {
                let scores: Vec<f64> = view
                    .candidates
                    .iter()
                    .map(|&j| {
                        let f = view.lp.x[j] - view.lp.x[j].floor();
                        combine_gains(
                            pc.estimate(j, false) * f,
                            pc.estimate(j, true) * (1.0 - f),
                            ScoreRule::Product,
                        )
                    })
                    .collect();
                argmax_lowest(&scores)
            }
            Brancher::Random(rng) => Some(rng.random_range(0..k)),
            Brancher::Learned(model) => {
                let state = encode_node_state(view.instance, view.lower, view.upper, view.lp, view.ctx)?;
                *work += model.flops(&state);
                let out = model.forward(&state)?;
                argmax_lowest(&out.logits)
            }
        };
        let pick = pick.ok_or_else(|| Error::Bnb("empty candidate list".into()))?;
        debug_assert!(pick < k);
        Ok(pick)
    }

    fn observe(&mut self, var: usize, up: bool, unit_gain: f64) {
        if let Brancher::Pseudocost(pc) = self {
            pc.observe(var, up, unit_gain);
        }
    }
}

/// Hook invoked at every branching node with the encoded state and the
/// chosen candidate index. Returning `false` stops the search.
pub type NodeObserver<'a> = dyn FnMut(&BnbNode, &BipartiteState, usize) -> bool + 'a;

fn node_key(bound: f64) -> i64 {
    if bound == f64::NEG_INFINITY {
        i64::MIN
    } else {
        (bound / KEY_QUANTUM).round() as i64
    }
}

pub fn solve_bnb(
    instance: &MilpInstance,
    policy: &BranchingPolicy,
    config: &BnbConfig,
) -> Result<BnbResult> {
    run_search(instance, policy, config, None)
}

/// Rounds integer variables of an integral LP point and re-checks it.
fn snap_incumbent(instance: &MilpInstance, x: &[f64]) -> Vec<f64> {
    let mut snapped = x.to_vec();
    for j in 0..instance.n_vars {
        if instance.integer_mask[j] {
            snapped[j] = snapped[j].round();
        }
    }
    if instance.max_violation(&snapped) <= 1e-6 {
        snapped
    } else {
        x.to_vec()
    }
}

fn run_search(
    instance: &MilpInstance,
    policy: &BranchingPolicy,
    config: &BnbConfig,
    mut observer: Option<&mut NodeObserver<'_>>,
) -> Result<BnbResult> {
    instance.validate().into_result()?;
    let start = Instant::now();
    let model = LpModel::new(instance);
    let mut brancher = policy.brancher(instance.n_vars);
    let mut ctx = EncodeContext::default();
    let mut work: u64 = 0;
    let mut incumbent: Option<Vec<f64>> = None;
    let mut best = f64::INFINITY;
    let mut nodes_processed = 0usize;
    let mut lp_solves = 0usize;
    let mut trace = config.trace.then(Vec::new);
    let mut next_id = 1usize;
    // (key, id) for best-bound, (Reverse(depth), id) style via key for DFS
    let mut open: BinaryHeap<Reverse<(i64, usize)>> = BinaryHeap::new();
    let mut store: Vec<Option<BnbNode>> = vec![Some(BnbNode::root())];
    open.push(Reverse((i64::MIN, 0)));

    let elapsed = |work: u64| match config.clock {
        Clock::Wall => start.elapsed().as_secs_f64(),
        Clock::Work => work as f64 / WORK_PER_SECOND,
    };
    let mut status = None;

    while let Some(Reverse((_, id))) = open.pop() {
        let node = store[id].take().expect("node stored once");
        if node.parent_bound >= best - PRUNE_TOL {
            continue;
        }
        if config.limits.nodes.is_some_and(|n| nodes_processed >= n) {
            status = Some(BnbStatus::NodeLimit);
            break;
        }
        if config.limits.time.is_some_and(|t| elapsed(work) >= t) {
            status = Some(BnbStatus::TimeLimit);
            break;
        }
        let (lower, upper) = node.bounds(instance);
        let lp = model
            .solve(&lower, &upper)
            .map_err(|e| Error::Bnb(format!("node {}: {e}", node.id)))?;
        work += lp.work;
        nodes_processed += 1;
        lp_solves += 1;
        ctx.record_lp_solve();

        let mut record = TraceRecord {
            node: node.id,
            depth: node.depth,
            lp_objective: lp.objective,
            branch_var: None,
            child_bounds: None,
        };
        match lp.status {
            LpStatus::Infeasible => {
                if let Some(t) = trace.as_mut() {
                    t.push(record);
                }
                continue;
            }
            LpStatus::Unbounded => {
                return Err(Error::Bnb(format!(
                    "node {}: LP relaxation is unbounded",
                    node.id
                )))
            }
            LpStatus::Optimal => {}
        }
        if let Some((var, up, dist)) = node.branched {
            brancher.observe(var, up, (lp.objective - node.parent_bound) / dist);
        }
        if lp.objective >= best - PRUNE_TOL {
            if let Some(t) = trace.as_mut() {
                t.push(record);
            }
            continue;
        }
        let candidates = fractional_candidates(instance, &lp.x);
        if candidates.is_empty() {
            let x = snap_incumbent(instance, &lp.x);
            let obj = instance.objective_value(&x);
            if obj < best {
                best = obj;
                ctx.record_incumbent(&x);
                incumbent = Some(x);
                debug!("{}: incumbent {obj} at node {}", instance.label, node.id);
            }
            if let Some(t) = trace.as_mut() {
                t.push(record);
            }
            continue;
        }

        let view = NodeView {
            instance,
            model: &model,
            lower: &lower,
            upper: &upper,
            lp: &lp,
            candidates: &candidates,
            ctx: &ctx,
            score_rule: config.score_rule,
        };
        let pick = brancher
            .select(&view, &mut work)
            .map_err(|e| Error::Bnb(format!("node {}: {e}", node.id)))?;
        let var = candidates[pick];
        if let Some(obs) = observer.as_mut() {
            let state = encode_node_state(instance, &lower, &upper, &lp, &ctx)?;
            if !obs(&node, &state, pick) {
                if let Some(t) = trace.as_mut() {
                    t.push(record);
                }
                status = Some(BnbStatus::NodeLimit);
                break;
            }
        }
        let x = lp.x[var];
        let (down_ub, up_lb) = (x.floor(), x.ceil());
        record.branch_var = Some(var);
        record.child_bounds = Some((down_ub, up_lb));
        if let Some(t) = trace.as_mut() {
            t.push(record);
        }
        for (up, t, dist) in [
            (false, Tightening { var, lower: lower[var], upper: down_ub }, x - down_ub),
            (true, Tightening { var, lower: up_lb, upper: upper[var] }, up_lb - x),
        ] {
            let mut tightenings = node.tightenings.clone();
            tightenings.push(t);
            let child = BnbNode {
                id: next_id,
                tightenings,
                parent_bound: lp.objective,
                depth: node.depth + 1,
                branched: Some((var, up, dist)),
            };
            let key = match config.node_selection {
                NodeSelection::BestBound => node_key(lp.objective),
                // deeper first, then down child first
                NodeSelection::DepthFirst => -(child.depth as i64),
            };
            open.push(Reverse((key, next_id)));
            store.push(Some(child));
            next_id += 1;
        }
    }

    let status = status.unwrap_or(if incumbent.is_some() {
        BnbStatus::OptimalProved
    } else {
        BnbStatus::Infeasible
    });
    Ok(BnbResult {
        status,
        best_objective: best,
        incumbent,
        nodes_processed,
        wall_time: start.elapsed().as_secs_f64(),
        work,
        lp_solves,
        trace,
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CollectReport {
    pub samples: Vec<ExpertSample>,
    /// Instances whose root relaxation is infeasible.
    pub skipped_infeasible: usize,
}

/// Runs FSB on each instance and records `(state, FSB choice)` at up to
/// `cap` branching nodes per instance.
pub fn collect_expert_samples(
    instances: &[MilpInstance],
    cap: usize,
    config: &BnbConfig,
) -> Result<CollectReport> {
    let mut report = CollectReport::default();
    for inst in instances {
        let root = crate::lp::solve_lp(&inst.lp_relaxation())?;
        if root.status == LpStatus::Infeasible {
            warn!("{}: root relaxation infeasible, skipped", inst.label);
            report.skipped_infeasible += 1;
            continue;
        }
        if cap == 0 {
            continue;
        }
        let mut taken = Vec::new();
        let mut obs = |node: &BnbNode, state: &BipartiteState, pick: usize| {
            taken.push(ExpertSample::new(
                &inst.label,
                node.depth,
                node.tightenings.clone(),
                state.clone(),
                pick,
            ));
            taken.len() < cap
        };
        run_search(inst, &BranchingPolicy::Fsb, config, Some(&mut obs))?;
        report.samples.extend(taken);
    }
    Ok(report)
}

/// Shifted geometric mean `exp(mean ln(v + shift)) − shift`.
pub fn sgm(values: &[f64], shift: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Config("shifted geometric mean of no values".into()));
    }
    let mut acc = 0.0;
    for &v in values {
        if !(v + shift > 0.0) {
            return Err(Error::Config(format!("value {v} + shift {shift} is not positive")));
        }
        acc += (v + shift).ln();
    }
    Ok((acc / values.len() as f64).exp() - shift)
}

pub const SGM_SHIFT_TIME: f64 = 1.0;
pub const SGM_SHIFT_NODES: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyMetrics {
    pub policy: String,
    pub level: String,
    /// `NaN` when nothing was solved.
    pub sgm_time_s: f64,
    pub sgm_nodes: f64,
    pub wins: usize,
    pub solved: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<PolicyMetrics>,
    /// `results[p][i]` for policy `p` and instance `i`.
    pub results: Vec<Vec<BnbResult>>,
}

impl MetricsReport {
    pub const SCHEMA: &'static str = "camlab-metrics-v1";
    pub const CSV_HEADER: &'static str = "policy,level,sgm_time_s,sgm_nodes,wins,solved";

    /// One row per policy. The wins column is left out when only one
    /// policy was run.
    pub fn to_csv(&self) -> String {
        let with_wins = self.rows.len() > 1;
        let mut out = if with_wins {
            String::from(Self::CSV_HEADER)
        } else {
            Self::CSV_HEADER.replace(",wins", "")
        };
        out.push('\n');
        for r in &self.rows {
            let wins = if with_wins { format!(",{}", r.wins) } else { String::new() };
            out.push_str(&format!(
                "{},{},{:.6},{:.3}{},{}\n",
                r.policy, r.level, r.sgm_time_s, r.sgm_nodes, wins, r.solved
            ));
        }
        out
    }

    /// Number of unsolved entries per policy, excluded from the means.
    pub fn unsolved(&self) -> Vec<(String, usize)> {
        self.rows
            .iter()
            .map(|r| (r.policy.clone(), r.total - r.solved))
            .collect()
    }
}

/// Maps `f` over `items` on up to `jobs` threads, keeping input order.
pub fn par_map<T: Sync, U: Send>(
    items: &[T],
    jobs: usize,
    f: impl Fn(&T) -> U + Sync,
) -> Vec<U> {
    let jobs = jobs.max(1).min(items.len().max(1));
    if jobs == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| {
                let f = &f;
                scope.spawn(move || c.iter().map(f).collect::<Vec<U>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

/// Solves every instance with every policy and aggregates the metrics.
pub fn compare_policies(
    instances: &[MilpInstance],
    policies: &[BranchingPolicy],
    config: &BnbConfig,
    level: &str,
    jobs: usize,
) -> Result<MetricsReport> {
    if instances.is_empty() || policies.is_empty() {
        return Err(Error::Config(
            "policy comparison needs at least one instance and one policy".into(),
        ));
    }
    let mut results = Vec::with_capacity(policies.len());
    for p in policies {
        let runs = par_map(instances, jobs, |inst| solve_bnb(inst, p, config));
        results.push(runs.into_iter().collect::<Result<Vec<_>>>()?);
    }
    let mut wins = vec![0usize; policies.len()];
    for i in 0..instances.len() {
        let times: Vec<Option<f64>> = results
            .iter()
            .map(|r| r[i].solved().then(|| r[i].time(config.clock)))
            .collect();
        let fastest = times.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
        for (p, t) in times.iter().enumerate() {
            if *t == Some(fastest) {
                wins[p] += 1;
            }
        }
    }
    let rows = policies
        .iter()
        .zip(&results)
        .zip(wins)
        .map(|((p, runs), w)| {
            let solved: Vec<&BnbResult> = runs.iter().filter(|r| r.solved()).collect();
            let times: Vec<f64> = solved.iter().map(|r| r.time(config.clock)).collect();
            let nodes: Vec<f64> = solved.iter().map(|r| r.nodes_processed as f64).collect();
            PolicyMetrics {
                policy: p.name().into(),
                level: level.into(),
                sgm_time_s: sgm(&times, SGM_SHIFT_TIME).unwrap_or(f64::NAN),
                sgm_nodes: sgm(&nodes, SGM_SHIFT_NODES).unwrap_or(f64::NAN),
                wins: w,
                solved: solved.len(),
                total: runs.len(),
            }
        })
        .collect();
    Ok(MetricsReport { rows, results })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcnn::HIDDEN;
    use crate::instgen::GenSpec;
    use crate::lp::solve_lp;
    use crate::milp::{sample_shift, ShiftVector};
    use crate::oracle::{binary_enum, lp_vertex_enum, DenseProblem};

    fn binary(c: &[f64], rows: &[(&[f64], f64)]) -> MilpInstance {
        let n = c.len();
        let mut m = MilpInstance::new(n, rows.len());
        m.objective = c.to_vec();
        for (i, (a, b)) in rows.iter().enumerate() {
            for (j, &v) in a.iter().enumerate() {
                if v != 0.0 {
                    m.matrix.push((i, j, v));
                }
            }
            m.rhs[i] = *b;
        }
        m.upper = vec![1.0; n];
        m.integer_mask = vec![true; n];
        m
    }

    fn e2() -> MilpInstance {
        binary(&[-2.0, -1.0], &[(&[2.0, 2.0], 3.0)])
    }

    fn e3() -> MilpInstance {
        binary(&[-1.0, -1.0, -4.0], &[(&[1.0, 1.0, 2.0], 2.0)])
    }

    fn all_policies() -> Vec<BranchingPolicy> {
        vec![
            BranchingPolicy::Fsb,
            BranchingPolicy::MostFractional,
            BranchingPolicy::Pseudocost,
            BranchingPolicy::Random { seed: 5 },
            BranchingPolicy::Learned(Arc::new(GcnnModel::init(HIDDEN, 1))),
        ]
    }

    fn dense(m: &MilpInstance) -> DenseProblem {
        DenseProblem::from_triplets(&m.objective, &m.matrix, &m.rhs, &m.lower, &m.upper)
    }

    #[test]
    fn e2_every_policy() {
        let m = e2();
        let (opt, _) = binary_enum(&dense(&m)).unwrap();
        assert_eq!(opt, -2.0);
        for p in all_policies() {
            let r = solve_bnb(&m, &p, &BnbConfig::default()).unwrap();
            assert_eq!(r.status, BnbStatus::OptimalProved);
            assert_eq!(r.best_objective, opt, "{}", p.name());
            assert_eq!(r.incumbent.unwrap(), vec![1.0, 0.0]);
        }
    }

    #[test]
    fn integral_root_needs_one_node() {
        let m = binary(&[1.0, 1.0], &[(&[-1.0, -1.0], -1.0)]);
        let r = solve_bnb(&m, &BranchingPolicy::Fsb, &BnbConfig::default()).unwrap();
        assert_eq!(r.status, BnbStatus::OptimalProved);
        assert_eq!(r.nodes_processed, 1);
        assert_eq!(r.best_objective, 1.0);
    }

    #[test]
    fn node_limit_status() {
        let m = e2();
        let cfg = BnbConfig {
            limits: BnbLimits { nodes: Some(1), time: None },
            ..BnbConfig::default()
        };
        let r = solve_bnb(&m, &BranchingPolicy::Fsb, &cfg).unwrap();
        assert_eq!(r.status, BnbStatus::NodeLimit);
        assert_eq!(r.nodes_processed, 1);
    }

    #[test]
    fn time_limit_status() {
        let inst = GenSpec::set_cover(1).generate().unwrap();
        let cfg = BnbConfig {
            limits: BnbLimits { nodes: None, time: Some(0.0) },
            ..BnbConfig::default()
        };
        let r = solve_bnb(&inst, &BranchingPolicy::Fsb, &cfg).unwrap();
        assert_eq!(r.status, BnbStatus::TimeLimit);
    }

    #[test]
    fn infeasible_milp() {
        // x₁ + x₂ = 1.5 has no binary solution
        let m = binary(&[1.0, 1.0], &[(&[1.0, 1.0], 1.5), (&[-1.0, -1.0], -1.5)]);
        let r = solve_bnb(&m, &BranchingPolicy::MostFractional, &BnbConfig::default()).unwrap();
        assert_eq!(r.status, BnbStatus::Infeasible);
        assert!(r.incumbent.is_none());
    }

    /// Child improvements by vertex enumeration on the dense problem.
    fn oracle_scores(m: &MilpInstance, x: &[f64], cands: &[usize]) -> Vec<f64> {
        let d = dense(m);
        let (parent, _) = lp_vertex_enum(&d).unwrap();
        cands
            .iter()
            .map(|&j| {
                let mut down = d.clone();
                down.u[j] = x[j].floor();
                let mut up = d.clone();
                up.l[j] = x[j].ceil();
                let g = |p: &DenseProblem| {
                    lp_vertex_enum(p).map_or(INFEASIBLE_GAIN, |(v, _)| v - parent)
                };
                g(&down).max(SCORE_EPS) * g(&up).max(SCORE_EPS)
            })
            .collect()
    }

    #[test]
    fn e3_root_is_integral() {
        let m = e3();
        let (opt, x) = binary_enum(&dense(&m)).unwrap();
        assert_eq!((opt, x), (-4.0, vec![0.0, 0.0, 1.0]));
        let r = solve_bnb(&m, &BranchingPolicy::Fsb, &BnbConfig { trace: true, ..Default::default() })
            .unwrap();
        assert_eq!(r.best_objective, opt);
        assert_eq!(r.nodes_processed, 1);
        assert!(r.branching_sequence().is_empty());
    }

    #[test]
    fn fsb_matches_brute_force_child_lps() {
        // capacity 2.5 leaves x₁ or x₂ at one half
        let mut m = e3();
        m.rhs[0] = 2.5;
        let lp = solve_lp(&m.lp_relaxation()).unwrap();
        let cands = fractional_candidates(&m, &lp.x);
        assert_eq!(cands.len(), 1);
        let model = LpModel::new(&m);
        let ours = fsb_scores(&model, &m.lower, &m.upper, &lp, &cands, ScoreRule::Product).unwrap();
        let theirs = oracle_scores(&m, &lp.x, &cands);
        for (a, b) in ours.iter().zip(&theirs) {
            assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{ours:?} vs {theirs:?}");
        }
        let r = solve_bnb(&m, &BranchingPolicy::Fsb, &BnbConfig { trace: true, ..Default::default() })
            .unwrap();
        assert_eq!(r.best_objective, binary_enum(&dense(&m)).unwrap().0);
        assert_eq!(r.branching_sequence().first(), Some(&cands[0]));
    }

    #[test]
    fn fsb_on_random_small_instances_matches_oracle() {
        for seed in 0..20 {
            let inst = crate::instgen::gen_set_cover(6, 8, 0.4, seed).unwrap();
            let lp = solve_lp(&inst.lp_relaxation()).unwrap();
            let cands = fractional_candidates(&inst, &lp.x);
            if cands.is_empty() {
                continue;
            }
            let model = LpModel::new(&inst);
            let ours =
                fsb_scores(&model, &inst.lower, &inst.upper, &lp, &cands, ScoreRule::Product).unwrap();
            let theirs = oracle_scores(&inst, &lp.x, &cands);
            for (a, b) in ours.iter().zip(&theirs) {
                assert!((a - b).abs() <= 1e-7 * (1.0 + b.abs()), "seed {seed}");
            }
        }
    }

    #[test]
    fn argmax_ties_take_lowest_index() {
        assert_eq!(argmax_lowest(&[1.0, 3.0, 3.0]), Some(1));
        assert_eq!(argmax_lowest(&[2.0, 2.0 + 1e-12, 1.0]), Some(0));
        assert_eq!(argmax_lowest(&[]), None);
    }

    #[test]
    fn every_policy_finds_enumeration_optimum() {
        let mut specs = Vec::new();
        for seed in 0..6 {
            specs.push(GenSpec::SetCover { rows: 10, cols: 12, density: 0.3, seed });
            specs.push(GenSpec::CombAuction { items: 6, bids: 12, seed });
            specs.push(GenSpec::MaxIndepSet { nodes: 12, edge_prob: 0.3, seed });
        }
        for spec in specs {
            let inst = spec.generate().unwrap();
            let (opt, _) = binary_enum(&dense(&inst)).unwrap();
            for p in all_policies() {
                let r = solve_bnb(&inst, &p, &BnbConfig::default()).unwrap();
                assert_eq!(r.status, BnbStatus::OptimalProved);
                assert!(
                    (r.best_objective - opt).abs() <= 1e-9 * (1.0 + opt.abs()),
                    "{} {}: {} vs {opt}",
                    inst.label,
                    p.name(),
                    r.best_objective
                );
                let x = r.incumbent.unwrap();
                assert!(inst.max_violation(&x) <= 1e-6);
            }
        }
    }

    #[test]
    fn monotone_bounds_along_paths() {
        let inst = GenSpec::set_cover(3).generate().unwrap();
        let cfg = BnbConfig { trace: true, ..Default::default() };
        let r = solve_bnb(&inst, &BranchingPolicy::MostFractional, &cfg).unwrap();
        assert!(r.trace.unwrap().iter().all(|t| t.lp_objective.is_finite() || t.branch_var.is_none()));
        // monotonicity checked through the observer on parent bounds
        let mut ok = true;
        let mut obs = |node: &BnbNode, _: &BipartiteState, _: usize| {
            let _ = node;
            true
        };
        let _ = run_search(&inst, &BranchingPolicy::MostFractional, &cfg, Some(&mut obs)).unwrap();
        let model = LpModel::new(&inst);
        let mut obs2 = |node: &BnbNode, _: &BipartiteState, _: usize| {
            let (l, u) = node.bounds(&inst);
            let v = model.solve(&l, &u).unwrap().objective;
            if v < node.parent_bound - 1e-9 {
                ok = false;
            }
            true
        };
        run_search(&inst, &BranchingPolicy::MostFractional, &cfg, Some(&mut obs2)).unwrap();
        assert!(ok);
    }

    #[test]
    fn shifted_instance_has_identical_fsb_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let cfg = BnbConfig { trace: true, ..Default::default() };
        for seed in 0..4 {
            for spec in [
                GenSpec::set_cover(seed),
                GenSpec::comb_auction(seed),
                GenSpec::facility_location(seed),
                GenSpec::max_indep_set(seed),
            ] {
                let inst = spec.generate().unwrap();
                let s = sample_shift(&inst, 10.0, &mut rng).unwrap();
                let a = solve_bnb(&inst, &BranchingPolicy::Fsb, &cfg).unwrap();
                let b = solve_bnb(&inst.shift(&s).unwrap(), &BranchingPolicy::Fsb, &cfg).unwrap();
                assert_eq!(a.branching_sequence(), b.branching_sequence(), "{}", inst.label);
                assert_eq!(a.nodes_processed, b.nodes_processed);
                assert!((a.best_objective - b.best_objective).abs() <= 1e-6);
                assert_eq!(a.work, b.work);
            }
        }
    }

    #[test]
    fn zero_shift_search_is_bitwise_identical() {
        let inst = GenSpec::comb_auction(2).generate().unwrap();
        let cfg = BnbConfig { trace: true, ..Default::default() };
        let a = solve_bnb(&inst, &BranchingPolicy::Fsb, &cfg).unwrap();
        let b = solve_bnb(&inst.shift(&ShiftVector::zeros(inst.n_vars)).unwrap(), &BranchingPolicy::Fsb, &cfg)
            .unwrap();
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn pseudocost_estimates() {
        let mut pc = Pseudocosts::new(3);
        assert_eq!(pc.estimate(0, true), 1.0);
        pc.observe(1, true, 4.0);
        pc.observe(1, true, 2.0);
        pc.observe(2, true, 1.0);
        assert_eq!(pc.estimate(1, true), 3.0);
        assert_eq!(pc.estimate(0, true), 2.0);
        assert_eq!(pc.estimate(0, false), 1.0);
    }

    #[test]
    fn collection_respects_cap_and_is_deterministic() {
        let insts: Vec<_> = (0..3).map(|s| GenSpec::set_cover(s).generate().unwrap()).collect();
        let a = collect_expert_samples(&insts, 4, &BnbConfig::default()).unwrap();
        let b = collect_expert_samples(&insts, 4, &BnbConfig::default()).unwrap();
        assert_eq!(a, b);
        for inst in &insts {
            assert!(a.samples.iter().filter(|s| s.instance == inst.label).count() <= 4);
        }
        assert!(!a.samples.is_empty());
        for s in &a.samples {
            s.validate().unwrap();
        }
        // the recorded action is what FSB picks at that state's root
        let first = &a.samples[0];
        assert_eq!(first.depth, 0);
        let inst = &insts.iter().find(|i| i.label == first.instance).unwrap();
        let lp = solve_lp(&inst.lp_relaxation()).unwrap();
        let scores = fsb_scores(
            &LpModel::new(inst),
            &inst.lower,
            &inst.upper,
            &lp,
            &first.candidates,
            ScoreRule::Product,
        )
        .unwrap();
        assert_eq!(argmax_lowest(&scores), Some(first.action));
    }

    #[test]
    fn root_solved_instance_contributes_nothing() {
        let m = binary(&[1.0, 1.0], &[(&[-1.0, -1.0], -1.0)]);
        let r = collect_expert_samples(&[m], 10, &BnbConfig::default()).unwrap();
        assert!(r.samples.is_empty());
        let mut bad = e2();
        bad.matrix.push((0, 0, 0.0));
        bad.rhs[0] = -1.0;
        let r = collect_expert_samples(&[bad], 10, &BnbConfig::default()).unwrap();
        assert_eq!(r.skipped_infeasible, 1);
    }

    #[test]
    fn sgm_values() {
        assert_eq!(sgm(&[1.0, 1.0], 1.0).unwrap(), 1.0);
        assert!((sgm(&[2.0, 8.0], 1.0).unwrap() - (27f64.sqrt() - 1.0)).abs() <= 1e-12);
        assert!(sgm(&[], 1.0).is_err());
        assert!(sgm(&[-2.0], 1.0).is_err());
    }

    #[test]
    fn comparison_wins_and_csv() {
        let insts: Vec<_> = (0..4).map(|s| GenSpec::set_cover(s).generate().unwrap()).collect();
        let pol = vec![BranchingPolicy::MostFractional, BranchingPolicy::MostFractional];
        let rep = compare_policies(&insts, &pol, &BnbConfig::default(), "easy", 1).unwrap();
        assert_eq!(rep.rows[0].sgm_nodes, rep.rows[1].sgm_nodes);
        assert_eq!(rep.rows[0].wins, 4);
        assert_eq!(rep.rows[1].wins, 4);
        let csv = rep.to_csv();
        assert!(csv.starts_with(MetricsReport::CSV_HEADER));
        assert_eq!(csv.lines().count(), 3);
        let single = compare_policies(&insts, &pol[..1], &BnbConfig::default(), "easy", 1).unwrap();
        assert!(single.to_csv().starts_with("policy,level,sgm_time_s,sgm_nodes,solved\n"));
        assert!(compare_policies(&insts, &[], &BnbConfig::default(), "easy", 1).is_err());
        let par = compare_policies(&insts, &pol, &BnbConfig::default(), "easy", 3).unwrap();
        assert_eq!(par.to_csv(), csv);
    }
}
