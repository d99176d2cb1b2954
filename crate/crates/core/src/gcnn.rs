//! Bipartite graph convolutional policy.
//!
//! Wiring: three two-layer embeddings (constraints 5→64→64, variables
//! 19→64→64, edges 1→64→64), one constraint-side half-convolution, then one
//! variable-side half-convolution that reads the updated constraints, a
//! candidate score head with a softmax restricted to candidates, and a
//! graph embedding from max+mean pooling of both node sets.
//!
//! A half-convolution computes `c'_i = f(c_i, Σ_j g(c_i, v_j, e_ij))`. The
//! first linear layer of `g` is split into three blocks so the per-edge cost
//! is one gather per endpoint instead of a 192-wide product.

use std::path::Path;
use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::encoder::{BipartiteState, CONS_FEATS, EDGE_FEATS, SCHEMA, VAR_FEATS};
use crate::error::{Error, Result};

pub const HIDDEN: usize = 64;
pub const MODEL_SCHEMA: &str = "camlab-gcnn-v1";

// tensor offsets; a linear layer is a weight followed by its bias
const CONS_EMBED: usize = 0;
const VAR_EMBED: usize = 4;
const EDGE_EMBED: usize = 8;
const CONV_C: usize = 12;
const CONV_V: usize = 22;
const SCORE: usize = 32;
const POOL_CONS: usize = 36;
const POOL_VAR: usize = 38;
const POOL_GRAPH: usize = 40;
const N_TENSORS: usize = 42;

fn layout(h: usize) -> Vec<(String, usize, usize)> {
    let mut out = Vec::with_capacity(N_TENSORS);
    let mut lin = |name: &str, i: usize, o: usize| {
        out.push((format!("{name}.weight"), i, o));
        out.push((format!("{name}.bias"), 1, o));
    };
    lin("cons_embed.0", CONS_FEATS, h);
    lin("cons_embed.1", h, h);
    lin("var_embed.0", VAR_FEATS, h);
    lin("var_embed.1", h, h);
    lin("edge_embed.0", EDGE_FEATS, h);
    lin("edge_embed.1", h, h);
    for side in ["conv_c", "conv_v"] {
        out.push((format!("{side}.g.0.cons"), h, h));
        out.push((format!("{side}.g.0.var"), h, h));
        out.push((format!("{side}.g.0.edge"), h, h));
        out.push((format!("{side}.g.0.bias"), 1, h));
        let mut lin = |name: &str, i: usize, o: usize| {
            out.push((format!("{side}.{name}.weight"), i, o));
            out.push((format!("{side}.{name}.bias"), 1, o));
        };
        lin("g.1", h, h);
        lin("f.0", 2 * h, h);
        lin("f.1", h, h);
    }
    let mut lin = |name: &str, i: usize, o: usize| {
        out.push((format!("{name}.weight"), i, o));
        out.push((format!("{name}.bias"), 1, o));
    };
    lin("score.0", h, h);
    lin("score.1", h, 1);
    lin("pool_cons", 2 * h, h);
    lin("pool_var", 2 * h, h);
    lin("pool_graph", 2 * h, h);
    debug_assert_eq!(out.len(), N_TENSORS);
    out
}

/// All network weights, in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnnParams {
    pub hidden: usize,
    pub names: Vec<String>,
    pub tensors: Vec<Tensor>,
}

/// Modified Gram–Schmidt on a Gaussian matrix: orthonormal columns when
/// `rows ≥ cols`, orthonormal rows otherwise.
fn orthogonal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let (n_vec, dim) = if rows >= cols { (cols, rows) } else { (rows, cols) };
    let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(n_vec);
    while vecs.len() < n_vec {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        for u in &vecs {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (a, b) in v.iter_mut().zip(u) {
                *a -= d * b;
            }
        }
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-8 {
            v.iter_mut().for_each(|a| *a /= n);
            vecs.push(v);
        }
    }
    let mut t = Tensor::zeros(rows, cols);
    for (k, v) in vecs.iter().enumerate() {
        for (d, &x) in v.iter().enumerate() {
            let (r, c) = if rows >= cols { (d, k) } else { (k, d) };
            t.data[r * cols + c] = x;
        }
    }
    t
}

impl GcnnParams {
    /// Orthogonal weights and zero biases.
    pub fn init(hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for (name, r, c) in layout(hidden) {
            let t = if name.ends_with("bias") {
                Tensor::zeros(r, c)
            } else {
                orthogonal(r, c, &mut rng)
            };
            names.push(name);
            tensors.push(t);
        }
        GcnnParams {
            hidden,
            names,
            tensors,
        }
    }

    pub fn zeros(hidden: usize) -> Self {
        let layout = layout(hidden);
        GcnnParams {
            hidden,
            names: layout.iter().map(|l| l.0.clone()).collect(),
            tensors: layout.iter().map(|l| Tensor::zeros(l.1, l.2)).collect(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    /// Registers every tensor as a leaf on `tape`.
    pub fn on_tape(&self, tape: &mut Tape) -> Vec<NodeId> {
        self.tensors.iter().map(|t| tape.leaf(t.clone())).collect()
    }

    /// Collects gradients for the leaves created by [`GcnnParams::on_tape`].
    pub fn gather_grads(&self, grads: &[Option<Tensor>], ids: &[NodeId]) -> Vec<Tensor> {
        ids.iter()
            .zip(&self.tensors)
            .map(|(&id, t)| {
                grads
                    .get(id)
                    .and_then(|g| g.clone())
                    .unwrap_or_else(|| Tensor::zeros(t.rows, t.cols))
            })
            .collect()
    }

    fn check_layout(&self) -> Result<()> {
        let expected = layout(self.hidden);
        if self.tensors.len() != expected.len() {
            return Err(Error::Shape(format!(
                "expected {} tensors, got {}",
                expected.len(),
                self.tensors.len()
            )));
        }
        for ((name, r, c), t) in expected.iter().zip(&self.tensors) {
            if (t.rows, t.cols) != (*r, *c) || t.data.len() != r * c {
                return Err(Error::Shape(format!(
                    "{name}: expected {r}x{c}, got {}x{}",
                    t.rows, t.cols
                )));
            }
        }
        Ok(())
    }
}

/// Per-feature affine standardization `(x − mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub cons_mean: Vec<f64>,
    pub cons_std: Vec<f64>,
    pub var_mean: Vec<f64>,
    pub var_std: Vec<f64>,
    pub edge_mean: Vec<f64>,
    pub edge_std: Vec<f64>,
}

impl Default for Standardization {
    fn default() -> Self {
        Standardization {
            cons_mean: vec![0.0; CONS_FEATS],
            cons_std: vec![1.0; CONS_FEATS],
            var_mean: vec![0.0; VAR_FEATS],
            var_std: vec![1.0; VAR_FEATS],
            edge_mean: vec![0.0; EDGE_FEATS],
            edge_std: vec![1.0; EDGE_FEATS],
        }
    }
}

fn mean_std<'a>(rows: impl Iterator<Item = &'a [f64]>, width: usize) -> (Vec<f64>, Vec<f64>) {
    let mut n = 0usize;
    let mut sum = vec![0.0; width];
    let mut sq = vec![0.0; width];
    for r in rows {
        n += 1;
        for k in 0..width {
            sum[k] += r[k];
            sq[k] += r[k] * r[k];
        }
    }
    if n == 0 {
        return (vec![0.0; width], vec![1.0; width]);
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
    let std = (0..width)
        .map(|k| {
            let var = (sq[k] / n as f64 - mean[k] * mean[k]).max(0.0);
            let s = var.sqrt();
            if s > 1e-12 {
                s
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}

impl Standardization {
    pub fn fit<'a>(states: impl Iterator<Item = &'a BipartiteState> + Clone) -> Self {
        let (cons_mean, cons_std) = mean_std(
            states.clone().flat_map(|s| s.cons_feats.chunks(CONS_FEATS)),
            CONS_FEATS,
        );
        let (var_mean, var_std) = mean_std(
            states.clone().flat_map(|s| s.var_feats.chunks(VAR_FEATS)),
            VAR_FEATS,
        );
        let edge_vals: Vec<f64> = states.flat_map(|s| s.edges.iter().map(|e| e.2)).collect();
        let (edge_mean, edge_std) = mean_std(edge_vals.chunks(1), EDGE_FEATS);
        Standardization {
            cons_mean,
            cons_std,
            var_mean,
            var_std,
            edge_mean,
            edge_std,
        }
    }

    fn apply(data: &[f64], width: usize, mean: &[f64], std: &[f64]) -> Vec<f64> {
        data.iter()
            .enumerate()
            .map(|(k, v)| (v - mean[k % width]) / std[k % width])
            .collect()
    }
}

/// A state converted to standardized tensors and index lists.
#[derive(Debug, Clone)]
pub struct PreparedState {
    cons: Tensor,
    vars: Tensor,
    edges: Tensor,
    edge_cons: Rc<Vec<usize>>,
    edge_vars: Rc<Vec<usize>>,
    candidates: Rc<Vec<usize>>,
}

impl PreparedState {
    pub fn n_candidates(&self) -> usize {
        self.candidates.len()
    }
}

/// Node handles of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardNodes {
    /// `k × 1` candidate logits.
    pub logits: NodeId,
    pub log_probs: NodeId,
    pub probs: NodeId,
    /// `1 × hidden`.
    pub graph: NodeId,
    pub normalized: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub graph_embedding: Vec<f64>,
    pub normalized_embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnnModel {
    pub params: GcnnParams,
    pub standardization: Standardization,
}

fn linear(tape: &mut Tape, p: &[NodeId], x: NodeId, k: usize) -> NodeId {
    let y = tape.matmul(x, p[k]);
    tape.add_row(y, p[k + 1])
}

fn mlp2(tape: &mut Tape, p: &[NodeId], x: NodeId, k: usize) -> NodeId {
    let h = linear(tape, p, x, k);
    let h = tape.relu(h);
    linear(tape, p, h, k + 2)
}

fn embed(tape: &mut Tape, p: &[NodeId], x: NodeId, k: usize) -> NodeId {
    let h = mlp2(tape, p, x, k);
    tape.relu(h)
}

/// `f(left, Σ g(left_i, right_j, e_ij))` aggregated onto `left` rows.
#[allow(clippy::too_many_arguments)]
fn half_conv(
    tape: &mut Tape,
    p: &[NodeId],
    k: usize,
    left: NodeId,
    right: NodeId,
    edges: NodeId,
    left_idx: &Rc<Vec<usize>>,
    right_idx: &Rc<Vec<usize>>,
) -> NodeId {
    let pl = tape.matmul(left, p[k]);
    let pr = tape.matmul(right, p[k + 1]);
    let pe = tape.matmul(edges, p[k + 2]);
    let gl = tape.gather(pl, left_idx.clone());
    let gr = tape.gather(pr, right_idx.clone());
    let h = tape.add(gl, gr);
    let h = tape.add(h, pe);
    let h = tape.add_row(h, p[k + 3]);
    let h = tape.relu(h);
    let msg = linear(tape, p, h, k + 4);
    let n_left = tape.value(left).rows;
    let agg = tape.scatter_add(msg, left_idx.clone(), n_left);
    let cat = tape.concat_cols(left, agg);
    mlp2(tape, p, cat, k + 6)
}

fn pool(tape: &mut Tape, p: &[NodeId], x: NodeId, k: usize) -> NodeId {
    let mx = tape.max_rows(x);
    let mn = tape.mean_rows(x);
    let cat = tape.concat_cols(mx, mn);
    let h = linear(tape, p, cat, k);
    tape.relu(h)
}

impl GcnnModel {
    pub fn new(params: GcnnParams, standardization: Standardization) -> Self {
        GcnnModel {
            params,
            standardization,
        }
    }

    /// Freshly initialized model with identity standardization.
    pub fn init(hidden: usize, seed: u64) -> Self {
        GcnnModel::new(GcnnParams::init(hidden, seed), Standardization::default())
    }

    pub fn prepare(&self, state: &BipartiteState) -> Result<PreparedState> {
        state.check_invariants().map_err(Error::Shape)?;
        if state.candidates.is_empty() {
            return Err(Error::Shape("empty candidate list".into()));
        }
        let st = &self.standardization;
        let cons = Standardization::apply(&state.cons_feats, CONS_FEATS, &st.cons_mean, &st.cons_std);
        let vars = Standardization::apply(&state.var_feats, VAR_FEATS, &st.var_mean, &st.var_std);
        let edge_raw: Vec<f64> = state.edges.iter().map(|e| e.2).collect();
        let edges = Standardization::apply(&edge_raw, EDGE_FEATS, &st.edge_mean, &st.edge_std);
        Ok(PreparedState {
            cons: Tensor::from_vec(state.n_cons, CONS_FEATS, cons),
            vars: Tensor::from_vec(state.n_vars, VAR_FEATS, vars),
            edges: Tensor::from_vec(state.edges.len(), EDGE_FEATS, edges),
            edge_cons: Rc::new(state.edges.iter().map(|e| e.0).collect()),
            edge_vars: Rc::new(state.edges.iter().map(|e| e.1).collect()),
            candidates: Rc::new(state.candidates.clone()),
        })
    }

    /// Records a forward pass on `tape` using parameter leaves `p`.
    pub fn forward_on_tape(&self, tape: &mut Tape, p: &[NodeId], x: &PreparedState) -> ForwardNodes {
        let c_in = tape.leaf(x.cons.clone());
        let v_in = tape.leaf(x.vars.clone());
        let e_in = tape.leaf(x.edges.clone());
        let c0 = embed(tape, p, c_in, CONS_EMBED);
        let v0 = embed(tape, p, v_in, VAR_EMBED);
        let e0 = embed(tape, p, e_in, EDGE_EMBED);
        let c1 = half_conv(tape, p, CONV_C, c0, v0, e0, &x.edge_cons, &x.edge_vars);
        let v1 = half_conv(tape, p, CONV_V, v0, c1, e0, &x.edge_vars, &x.edge_cons);

        let h = linear(tape, p, v1, SCORE);
        let h = tape.relu(h);
        let all = linear(tape, p, h, SCORE + 2);
        let logits = tape.gather(all, x.candidates.clone());
        let log_probs = tape.log_softmax(logits, false);
        let probs = tape.exp(log_probs);

        let pc = pool(tape, p, c1, POOL_CONS);
        let pv = pool(tape, p, v1, POOL_VAR);
        let cat = tape.concat_cols(pc, pv);
        let graph = linear(tape, p, cat, POOL_GRAPH);
        let normalized = tape.normalize_rows(graph);
        ForwardNodes {
            logits,
            log_probs,
            probs,
            graph,
            normalized,
        }
    }

    pub fn forward(&self, state: &BipartiteState) -> Result<PolicyOutput> {
        let x = self.prepare(state)?;
        let mut tape = Tape::new();
        let p = self.params.on_tape(&mut tape);
        let f = self.forward_on_tape(&mut tape, &p, &x);
        Ok(PolicyOutput {
            logits: tape.value(f.logits).data.clone(),
            probs: tape.value(f.probs).data.clone(),
            graph_embedding: tape.value(f.graph).data.clone(),
            normalized_embedding: tape.value(f.normalized).data.clone(),
        })
    }

    /// Multiply-add count of one forward pass, for the deterministic clock.
    pub fn flops(&self, state: &BipartiteState) -> u64 {
        let h = self.params.hidden as u64;
        let (m, n, e) = (state.n_cons as u64, state.n_vars as u64, state.edges.len() as u64);
        let embeds = m * (CONS_FEATS as u64 * h + h * h)
            + n * (VAR_FEATS as u64 * h + h * h)
            + e * (EDGE_FEATS as u64 * h + h * h);
        let convs = 2 * ((m + n + 2 * e) * h * h) + (m + n) * 3 * h * h;
        let head = n * (h * h + h) + 6 * h * h;
        embeds + convs + head
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        GcnnModel::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            schema: MODEL_SCHEMA.into(),
            feature_schema: SCHEMA.into(),
            hidden: self.params.hidden,
            standardization: self.standardization.clone(),
            tensors: self
                .params
                .names
                .iter()
                .zip(&self.params.tensors)
                .map(|(name, t)| NamedTensor {
                    name: name.clone(),
                    tensor: t.clone(),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.schema != MODEL_SCHEMA {
            return Err(Error::Schema {
                expected: MODEL_SCHEMA.into(),
                found: file.schema,
            });
        }
        if file.feature_schema != SCHEMA {
            return Err(Error::Schema {
                expected: SCHEMA.into(),
                found: file.feature_schema,
            });
        }
        let params = GcnnParams {
            hidden: file.hidden,
            names: file.tensors.iter().map(|t| t.name.clone()).collect(),
            tensors: file.tensors.into_iter().map(|t| t.tensor).collect(),
        };
        params.check_layout()?;
        let st = &file.standardization;
        if st.cons_mean.len() != CONS_FEATS
            || st.cons_std.len() != CONS_FEATS
            || st.var_mean.len() != VAR_FEATS
            || st.var_std.len() != VAR_FEATS
            || st.edge_mean.len() != EDGE_FEATS
            || st.edge_std.len() != EDGE_FEATS
        {
            return Err(Error::Shape("standardization widths".into()));
        }
        Ok(GcnnModel::new(params, file.standardization))
    }
}

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    #[serde(flatten)]
    tensor: Tensor,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema: String,
    feature_schema: String,
    hidden: usize,
    standardization: Standardization,
    tensors: Vec<NamedTensor>,
}
