//! Imitation training of the graph policy with the contrastive and
//! consistency terms on shifted copies of every sample.
//!
//! `L = L_sup + λ1·L_nce + λ2·L_aux` where `L_sup` is the mean cross-entropy
//! over originals and (optionally) their shifted partners, `L_nce` sums the
//! InfoNCE terms of the batch with temperature one, and `L_aux` sums the
//! squared distances between paired candidate distributions.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::bnb::{argmax_lowest, fsb_scores, ScoreRule};
use crate::encoder::derive_augmented_state;
use crate::error::{Error, Result};
use crate::gcnn::{GcnnModel, GcnnParams, PreparedState, Standardization};
use crate::lp::{LpModel, LpStatus};
use crate::milp::{sample_shift, MilpInstance};
use crate::samples::{node_bounds, ExpertSample, Tightening};

pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub augmentations_per_sample: usize,
    pub shift_magnitude: f64,
    /// Apply the supervised loss to shifted partners as well.
    pub sup_on_augmented: bool,
    pub val_fraction: f64,
    /// Fraction of shifted samples whose label is recomputed by FSB.
    pub label_check_fraction: f64,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda1: 0.05,
            lambda2: 0.01,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 16,
            max_epochs: 30,
            plateau_patience: 10,
            plateau_factor: 0.2,
            augmentations_per_sample: 0,
            shift_magnitude: 10.0,
            sup_on_augmented: true,
            val_fraction: 0.1,
            label_check_fraction: 0.05,
            hidden: crate::gcnn::HIDDEN,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Plain behavioral cloning: no shifted partners, no auxiliary terms.
    pub fn baseline() -> Self {
        TrainConfig {
            lambda1: 0.0,
            lambda2: 0.0,
            augmentations_per_sample: 0,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return bad("lambdas must be non-negative");
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return bad("plateau_factor must lie in (0, 1)");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if self.batch_size == 0 || self.hidden == 0 {
            return bad("batch_size and hidden must be positive");
        }
        if !(self.shift_magnitude > 0.0) {
            return bad("shift_magnitude must be positive");
        }
        if !(0.0..1.0).contains(&self.val_fraction) || !(0.0..=1.0).contains(&self.label_check_fraction)
        {
            return bad("fractions must lie in [0, 1)");
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment. Unknown keys are errors.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        TrainConfig::from_kv(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn p<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("cannot parse '{v}'"))
        }
        match key {
            "lambda1" => self.lambda1 = p(value)?,
            "lambda2" => self.lambda2 = p(value)?,
            "learning_rate" => self.learning_rate = p(value)?,
            "adam_beta1" => self.adam_beta1 = p(value)?,
            "adam_beta2" => self.adam_beta2 = p(value)?,
            "adam_eps" => self.adam_eps = p(value)?,
            "batch_size" => self.batch_size = p(value)?,
            "max_epochs" => self.max_epochs = p(value)?,
            "plateau_patience" => self.plateau_patience = p(value)?,
            "plateau_factor" => self.plateau_factor = p(value)?,
            "augmentations_per_sample" => self.augmentations_per_sample = p(value)?,
            "shift_magnitude" => self.shift_magnitude = p(value)?,
            "sup_on_augmented" => self.sup_on_augmented = p(value)?,
            "val_fraction" => self.val_fraction = p(value)?,
            "label_check_fraction" => self.label_check_fraction = p(value)?,
            "hidden" => self.hidden = p(value)?,
            "seed" => self.seed = p(value)?,
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        format!(
            "lambda1 = {}\nlambda2 = {}\nlearning_rate = {}\nadam_beta1 = {}\nadam_beta2 = {}\n\
             adam_eps = {}\nbatch_size = {}\nmax_epochs = {}\nplateau_patience = {}\n\
             plateau_factor = {}\naugmentations_per_sample = {}\nshift_magnitude = {}\n\
             sup_on_augmented = {}\nval_fraction = {}\nlabel_check_fraction = {}\nhidden = {}\nseed = {}\n",
            self.lambda1,
            self.lambda2,
            self.learning_rate,
            self.adam_beta1,
            self.adam_beta2,
            self.adam_eps,
            self.batch_size,
            self.max_epochs,
            self.plateau_patience,
            self.plateau_factor,
            self.augmentations_per_sample,
            self.shift_magnitude,
            self.sup_on_augmented,
            self.val_fraction,
            self.label_check_fraction,
            self.hidden,
            self.seed
        )
    }
}

/// `−ln p[action]`, with `p` floored at [`PROB_FLOOR`]. The flag reports
/// whether the floor was hit.
pub fn loss_sup(probs: &[f64], action: usize) -> Result<(f64, bool)> {
    let p = *probs
        .get(action)
        .ok_or_else(|| Error::Shape(format!("action {action} outside {} candidates", probs.len())))?;
    Ok((-(p.max(PROB_FLOOR)).ln(), p < PROB_FLOOR))
}

/// InfoNCE with temperature one, summed over the batch.
pub fn loss_infonce(g_ori: &[Vec<f64>], g_aug: &[Vec<f64>]) -> Result<f64> {
    if g_ori.len() != g_aug.len() || g_ori.is_empty() {
        return Err(Error::Shape("InfoNCE needs equal, non-empty batches".into()));
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut total = 0.0;
    for (i, o) in g_ori.iter().enumerate() {
        let sims: Vec<f64> = g_aug.iter().map(|a| dot(o, a)).collect();
        let mx = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + sims.iter().map(|s| (s - mx).exp()).sum::<f64>().ln();
        total += lse - sims[i];
    }
    Ok(total)
}

/// Summed squared distance between paired candidate distributions.
pub fn loss_aux(p_ori: &[Vec<f64>], p_aug: &[Vec<f64>]) -> Result<f64> {
    if p_ori.len() != p_aug.len() {
        return Err(Error::Shape("consistency loss needs paired batches".into()));
    }
    let mut total = 0.0;
    for (a, b) in p_ori.iter().zip(p_aug) {
        if a.len() != b.len() {
            return Err(Error::CandidateMismatch(a.len(), b.len()));
        }
        total += a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossComponents {
    pub sup: f64,
    pub nce: f64,
    pub aux: f64,
    pub total: f64,
}

impl LossComponents {
    pub fn combine(sup: f64, nce: f64, aux: f64, lambda1: f64, lambda2: f64) -> Self {
        LossComponents {
            sup,
            nce,
            aux,
            total: sup + lambda1 * nce + lambda2 * aux,
        }
    }
}

/// Weights of the three loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub sup: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub sup_on_augmented: bool,
}

impl From<&TrainConfig> for LossWeights {
    fn from(c: &TrainConfig) -> Self {
        LossWeights {
            sup: 1.0,
            lambda1: c.lambda1,
            lambda2: c.lambda2,
            sup_on_augmented: c.sup_on_augmented,
        }
    }
}

/// One training example: an original and, optionally, its shifted partner.
#[derive(Debug, Clone, Copy)]
pub struct BatchItem<'a> {
    pub original: &'a PreparedState,
    pub augmented: Option<&'a PreparedState>,
    pub action: usize,
}

fn build_loss(
    model: &GcnnModel,
    tape: &mut Tape,
    p: &[NodeId],
    batch: &[BatchItem],
    w: &LossWeights,
) -> Result<(NodeId, NodeId, NodeId, NodeId)> {
    if batch.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    let mut sup_terms = Vec::new();
    let mut ori_emb = Vec::new();
    let mut aug_emb = Vec::new();
    let mut aux_terms = Vec::new();
    for item in batch {
        let fo = model.forward_on_tape(tape, p, item.original);
        sup_terms.push(tape.pick(fo.log_probs, item.action));
        if let Some(aug) = item.augmented {
            if aug.n_candidates() != item.original.n_candidates() {
                return Err(Error::CandidateMismatch(
                    item.original.n_candidates(),
                    aug.n_candidates(),
                ));
            }
            let fa = model.forward_on_tape(tape, p, aug);
            if w.sup_on_augmented {
                sup_terms.push(tape.pick(fa.log_probs, item.action));
            }
            ori_emb.push(fo.normalized);
            aug_emb.push(fa.normalized);
            aux_terms.push(tape.sq_dist(fo.probs, fa.probs));
        }
    }
    let n = sup_terms.len() as f64;
    let sup = tape.weighted_sum(sup_terms.into_iter().map(|t| (t, -1.0 / n)).collect());
    let (nce, aux) = if ori_emb.is_empty() {
        let z = tape.leaf(Tensor::scalar(0.0));
        (z, z)
    } else {
        let go = tape.concat_rows(ori_emb);
        let ga = tape.concat_rows(aug_emb);
        let sims = tape.matmul_t(go, ga);
        let ls = tape.log_softmax(sims, true);
        let d = tape.diag_sum(ls);
        let nce = tape.weighted_sum(vec![(d, -1.0)]);
        let aux = tape.weighted_sum(aux_terms.into_iter().map(|t| (t, 1.0)).collect());
        (nce, aux)
    };
    let total = tape.weighted_sum(vec![(sup, w.sup), (nce, w.lambda1), (aux, w.lambda2)]);
    Ok((sup, nce, aux, total))
}

fn components(tape: &Tape, ids: (NodeId, NodeId, NodeId, NodeId)) -> LossComponents {
    let v = |id| tape.value(id).data[0];
    LossComponents {
        sup: v(ids.0),
        nce: v(ids.1),
        aux: v(ids.2),
        total: v(ids.3),
    }
}

/// Loss of a batch without gradients.
pub fn batch_loss(model: &GcnnModel, batch: &[BatchItem], w: &LossWeights) -> Result<LossComponents> {
    let mut tape = Tape::new();
    let p = model.params.on_tape(&mut tape);
    let ids = build_loss(model, &mut tape, &p, batch, w)?;
    Ok(components(&tape, ids))
}

/// Loss of a batch and its gradient with respect to every parameter tensor.
pub fn batch_loss_and_grad(
    model: &GcnnModel,
    batch: &[BatchItem],
    w: &LossWeights,
) -> Result<(LossComponents, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let p = model.params.on_tape(&mut tape);
    let ids = build_loss(model, &mut tape, &p, batch, w)?;
    let grads = tape.backward(ids.3);
    Ok((components(&tape, ids), model.params.gather_grads(&grads, &p)))
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &GcnnParams, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Tensor> = params
            .tensors
            .iter()
            .map(|t| Tensor::zeros(t.rows, t.cols))
            .collect();
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, params: &mut GcnnParams, grads: &[Tensor]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for ((p, g), (m, v)) in params
            .tensors
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for k in 0..p.data.len() {
                let gk = g.data[k];
                m.data[k] = self.beta1 * m.data[k] + (1.0 - self.beta1) * gk;
                v.data[k] = self.beta2 * v.data[k] + (1.0 - self.beta2) * gk * gk;
                let mh = m.data[k] / c1;
                let vh = v.data[k] / c2;
                p.data[k] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

/// Multiplies the learning rate by `factor` after `patience` epochs without
/// improvement of the monitored value.
#[derive(Debug, Clone)]
pub struct Plateau {
    pub patience: usize,
    pub factor: f64,
    best: f64,
    bad_epochs: usize,
}

impl Plateau {
    pub fn new(patience: usize, factor: f64) -> Self {
        Plateau {
            patience,
            factor,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Returns the new learning rate and whether `value` improved on the best.
    pub fn update(&mut self, value: f64, lr: f64) -> (f64, bool) {
        if value < self.best {
            self.best = value;
            self.bad_epochs = 0;
            return (lr, true);
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            self.bad_epochs = 0;
            return (lr * self.factor, false);
        }
        (lr, false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_sup: f64,
    pub l_nce: f64,
    pub l_aux: f64,
    pub val_acc1: f64,
    pub lr: f64,
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,l_sup,l_nce,l_aux,val_acc1,lr\n");
    for r in history {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.epoch, r.l_sup, r.l_nce, r.l_aux, r.val_acc1, r.lr
        );
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: GcnnModel,
    pub history: Vec<EpochRecord>,
    /// Epoch whose weights were kept (lowest validation loss).
    pub best_epoch: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_augmented: usize,
    pub labels_checked: usize,
    pub label_mismatches: usize,
}

/// Splits samples by instance label: roughly `fraction` of the instances go
/// to validation. Returns `(train, val)` indices.
pub fn split_by_instance(samples: &[ExpertSample], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut labels: Vec<&str> = Vec::new();
    for s in samples {
        if !labels.contains(&s.instance.as_str()) {
            labels.push(&s.instance);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_5417);
    labels.shuffle(&mut rng);
    let n_val = if labels.len() < 2 || fraction <= 0.0 {
        0
    } else {
        ((labels.len() as f64 * fraction).round() as usize).clamp(1, labels.len() - 1)
    };
    let val: Vec<&str> = labels[..n_val].to_vec();
    let (mut tr, mut va) = (Vec::new(), Vec::new());
    for (k, s) in samples.iter().enumerate() {
        if val.contains(&s.instance.as_str()) {
            va.push(k);
        } else {
            tr.push(k);
        }
    }
    (tr, va)
}

/// Shifted partners for each sample, generated once.
pub fn augment_samples(
    samples: &[ExpertSample],
    instances: &HashMap<String, MilpInstance>,
    per_sample: usize,
    magnitude: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<ExpertSample>>> {
    samples
        .iter()
        .map(|s| {
            let inst = instances
                .get(&s.instance)
                .ok_or_else(|| Error::Config(format!("instance '{}' not provided", s.instance)))?;
            (0..per_sample)
                .map(|_| {
                    let shift = sample_shift(inst, magnitude, rng)?;
                    let state = derive_augmented_state(&s.state, inst, &shift)?;
                    Ok(ExpertSample {
                        state,
                        shift: Some(shift),
                        ..s.clone()
                    })
                })
                .collect()
        })
        .collect()
}

/// Originals interleaved with their partners, all tagged with a shared
/// `pair_id`. With `per_sample == 0` the output equals the input.
pub fn augment_interleaved(
    samples: &[ExpertSample],
    instances: &HashMap<String, MilpInstance>,
    per_sample: usize,
    magnitude: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ExpertSample>> {
    if per_sample == 0 {
        return Ok(samples.to_vec());
    }
    let augmented = augment_samples(samples, instances, per_sample, magnitude, rng)?;
    let mut out = Vec::with_capacity(samples.len() * (1 + per_sample));
    for (i, (s, augs)) in samples.iter().zip(augmented).enumerate() {
        out.push(ExpertSample {
            pair_id: Some(i),
            ..s.clone()
        });
        out.extend(augs.into_iter().map(|a| ExpertSample {
            pair_id: Some(i),
            ..a
        }));
    }
    Ok(out)
}

/// Splits a sample list into originals and the partners attached to each.
/// Shifted samples must carry the `pair_id` of an original.
pub fn group_pairs(samples: &[ExpertSample]) -> Result<(Vec<ExpertSample>, Vec<Vec<ExpertSample>>)> {
    let mut originals = Vec::new();
    let mut by_id = HashMap::new();
    for s in samples.iter().filter(|s| s.shift.is_none()) {
        if let Some(id) = s.pair_id {
            if by_id.insert(id, originals.len()).is_some() {
                return Err(Error::Config(format!("pair id {id} used by two originals")));
            }
        }
        originals.push(s.clone());
    }
    let mut partners = vec![Vec::new(); originals.len()];
    for s in samples.iter().filter(|s| s.shift.is_some()) {
        let slot = s
            .pair_id
            .and_then(|id| by_id.get(&id))
            .ok_or_else(|| Error::Config(format!("shifted sample from {} has no original", s.instance)))?;
        partners[*slot].push(s.clone());
    }
    Ok((originals, partners))
}

/// Recomputes FSB on the shifted instance at the shifted node and compares
/// with the copied label.
pub fn check_transferred_label(
    sample: &ExpertSample,
    instance: &MilpInstance,
) -> Result<bool> {
    let Some(shift) = &sample.shift else {
        return Ok(true);
    };
    let shifted = instance.shift(shift)?;
    let tightenings: Vec<Tightening> = sample
        .tightenings
        .iter()
        .map(|t| Tightening {
            var: t.var,
            lower: t.lower + shift.0[t.var],
            upper: t.upper + shift.0[t.var],
        })
        .collect();
    let (lower, upper) = node_bounds(&shifted, &tightenings);
    let model = LpModel::new(&shifted);
    let lp = model.solve(&lower, &upper)?;
    if lp.status != LpStatus::Optimal {
        return Ok(false);
    }
    if crate::encoder::fractional_candidates(&shifted, &lp.x) != sample.candidates {
        return Ok(false);
    }
    let scores = fsb_scores(&model, &lower, &upper, &lp, &sample.candidates, ScoreRule::Product)?;
    Ok(argmax_lowest(&scores) == Some(sample.action))
}

/// Imitation accuracy `acc@k` for each `k`; ranks ties by lowest index.
pub fn eval_topk(model: &GcnnModel, samples: &[ExpertSample], ks: &[usize]) -> Result<Vec<(usize, f64)>> {
    let mut hits = vec![0usize; ks.len()];
    for s in samples {
        let probs = model.forward(&s.state)?.probs;
        let pa = probs[s.action];
        let rank = probs
            .iter()
            .enumerate()
            .filter(|&(k, &p)| p > pa || (p == pa && k < s.action))
            .count();
        for (h, &k) in hits.iter_mut().zip(ks) {
            if rank < k {
                *h += 1;
            }
        }
    }
    let n = samples.len().max(1) as f64;
    Ok(ks.iter().zip(hits).map(|(&k, h)| (k, h as f64 / n)).collect())
}

/// Expected `acc@1` of a uniformly random choice among candidates.
pub fn random_policy_acc1(samples: &[ExpertSample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples
        .iter()
        .map(|s| 1.0 / s.candidates.len() as f64)
        .sum::<f64>()
        / samples.len() as f64
}

fn mean_sup(model: &GcnnModel, items: &[PreparedState], actions: &[usize]) -> Result<f64> {
    if items.is_empty() {
        return Ok(f64::NAN);
    }
    let w = LossWeights {
        sup: 1.0,
        lambda1: 0.0,
        lambda2: 0.0,
        sup_on_augmented: false,
    };
    let mut total = 0.0;
    for chunk in items.iter().zip(actions).collect::<Vec<_>>().chunks(64) {
        let batch: Vec<BatchItem> = chunk
            .iter()
            .map(|(p, &a)| BatchItem {
                original: p,
                augmented: None,
                action: a,
            })
            .collect();
        total += batch_loss(model, &batch, &w)?.sup * batch.len() as f64;
    }
    Ok(total / items.len() as f64)
}

/// Trains a fresh model. `samples` may hold originals only, in which case
/// partners are generated from the config, or the output of
/// [`augment_interleaved`], whose partners are then used as given.
pub fn train(
    config: &TrainConfig,
    samples: &[ExpertSample],
    instances: &HashMap<String, MilpInstance>,
) -> Result<TrainReport> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::Config("no training samples".into()));
    }
    for s in samples {
        s.validate()?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (all_originals, given) = group_pairs(samples)?;
    let precomputed = given.iter().any(|v| !v.is_empty());
    let (train_idx, val_idx) = split_by_instance(&all_originals, config.val_fraction, config.seed);
    let val_set: Vec<ExpertSample> = val_idx.iter().map(|&k| all_originals[k].clone()).collect();

    let originals: Vec<ExpertSample> = train_idx.iter().map(|&k| all_originals[k].clone()).collect();
    let augmented = if precomputed {
        train_idx.iter().map(|&k| given[k].clone()).collect()
    } else {
        augment_samples(
            &originals,
            instances,
            config.augmentations_per_sample,
            config.shift_magnitude,
            &mut rng,
        )?
    };
    let n_augmented: usize = augmented.iter().map(Vec::len).sum();

    let mut labels_checked = 0;
    let mut label_mismatches = 0;
    if config.label_check_fraction > 0.0 {
        for (s, augs) in originals.iter().zip(&augmented) {
            for a in augs {
                if rng.random::<f64>() < config.label_check_fraction {
                    labels_checked += 1;
                    if !check_transferred_label(a, &instances[&s.instance])? {
                        label_mismatches += 1;
                        warn!("{}: shifted label differs from recomputed FSB", s.instance);
                    }
                }
            }
        }
    }

    let standardization = Standardization::fit(
        originals
            .iter()
            .chain(augmented.iter().flatten())
            .map(|s| &s.state),
    );
    let mut model = GcnnModel::new(GcnnParams::init(config.hidden, config.seed), standardization);
    let prep = |s: &ExpertSample| model.prepare(&s.state);
    let orig_prep: Vec<PreparedState> = originals.iter().map(prep).collect::<Result<_>>()?;
    let aug_prep: Vec<Vec<PreparedState>> = augmented
        .iter()
        .map(|v| v.iter().map(prep).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let val_prep: Vec<PreparedState> = val_set.iter().map(prep).collect::<Result<_>>()?;
    let val_actions: Vec<usize> = val_set.iter().map(|s| s.action).collect();
    let train_actions: Vec<usize> = originals.iter().map(|s| s.action).collect();

    // (original, partner) pairs seen once per epoch
    let mut pairs: Vec<(usize, Option<usize>)> = Vec::new();
    for (i, augs) in aug_prep.iter().enumerate() {
        if augs.is_empty() {
            pairs.push((i, None));
        } else {
            pairs.extend((0..augs.len()).map(|k| (i, Some(k))));
        }
    }

    let weights = LossWeights::from(config);
    let mut adam = Adam::new(
        &model.params,
        config.learning_rate,
        config.adam_beta1,
        config.adam_beta2,
        config.adam_eps,
    );
    let mut plateau = Plateau::new(config.plateau_patience, config.plateau_factor);
    let mut history = Vec::with_capacity(config.max_epochs);
    let mut best = (f64::INFINITY, model.params.clone(), 0usize);
    let mut batch_id = 0usize;

    for epoch in 1..=config.max_epochs {
        pairs.shuffle(&mut rng);
        let mut sums = [0.0; 3];
        let mut n_batches = 0usize;
        for chunk in pairs.chunks(config.batch_size) {
            let batch: Vec<BatchItem> = chunk
                .iter()
                .map(|&(i, k)| BatchItem {
                    original: &orig_prep[i],
                    augmented: k.map(|k| &aug_prep[i][k]),
                    action: train_actions[i],
                })
                .collect();
            let (loss, grads) = batch_loss_and_grad(&model, &batch, &weights)?;
            if !loss.total.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    batch: batch_id,
                    detail: format!("epoch {epoch}: {loss:?}"),
                });
            }
            adam.step(&mut model.params, &grads);
            sums[0] += loss.sup;
            sums[1] += loss.nce;
            sums[2] += loss.aux;
            n_batches += 1;
            batch_id += 1;
        }
        let nb = n_batches.max(1) as f64;
        let (monitor, val_acc1) = if val_prep.is_empty() {
            (mean_sup(&model, &orig_prep, &train_actions)?, f64::NAN)
        } else {
            let acc = eval_topk(&model, &val_set, &[1])?[0].1;
            (mean_sup(&model, &val_prep, &val_actions)?, acc)
        };
        let lr_used = adam.lr;
        let (new_lr, improved) = plateau.update(monitor, adam.lr);
        adam.lr = new_lr;
        if improved {
            best = (monitor, model.params.clone(), epoch);
        }
        history.push(EpochRecord {
            epoch,
            l_sup: sums[0] / nb,
            l_nce: sums[1] / nb,
            l_aux: sums[2] / nb,
            val_acc1,
            lr: lr_used,
        });
        info!(
            "epoch {epoch}: l_sup {:.4} l_nce {:.4} l_aux {:.5} val {:.4} acc1 {:.3} lr {:.1e}",
            sums[0] / nb,
            sums[1] / nb,
            sums[2] / nb,
            monitor,
            val_acc1,
            lr_used
        );
    }
    let best_epoch = best.2;
    if best_epoch > 0 {
        model.params = best.1;
    }
    Ok(TrainReport {
        model,
        history,
        best_epoch,
        n_train: originals.len(),
        n_val: val_set.len(),
        n_augmented,
        labels_checked,
        label_mismatches,
    })
}

/// Instances keyed by label.
pub fn index_instances(instances: &[MilpInstance]) -> HashMap<String, MilpInstance> {
    instances.iter().map(|i| (i.label.clone(), i.clone())).collect()
}

/// Sample counts per instance label, in label order.
pub fn samples_per_instance(samples: &[ExpertSample]) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for s in samples {
        *out.entry(s.instance.clone()).or_insert(0) += 1;
    }
    out
}
