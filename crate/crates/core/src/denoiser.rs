//! Denoisers predict clean tokens `p(z_0 | z_t, y)` from a corrupted
//! sequence. [`OracleDenoiser`] knows the answer and is used to test the
//! reverse chain exactly; [`TabularDenoiser`] is a small log-linear model
//! trained with the variational bound plus an auxiliary cross-entropy.

use std::fmt::Write as _;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::codebook::{header_usize, parse_header_fields, parse_row};
use crate::error::{param, Error, Result};
use crate::rng;
use crate::schedule::TransitionModel;
use crate::tokens::Condition;

/// One query to a denoiser: a (possibly partly masked) token slice with a
/// condition and segment-relative offset per position. Neighbour context ends
/// at the slice edges.
#[derive(Debug, Clone, Copy)]
pub struct DenoiseInput<'a> {
    pub states: &'a [usize],
    pub conditions: &'a [Condition],
    pub offsets: &'a [usize],
}

impl<'a> DenoiseInput<'a> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Contract for `p(z_0 | z_t, y)`: one probability row over the `K`
/// non-MASK tokens per input position. Implementations must be pure.
pub trait Denoiser {
    fn num_tokens(&self) -> usize;

    fn predict(&self, input: &DenoiseInput<'_>, t: usize) -> Result<Array2<f64>>;
}

/// Point mass on a known answer at every position.
#[derive(Debug, Clone)]
pub struct OracleDenoiser {
    truth: Vec<usize>,
    k: usize,
}

impl OracleDenoiser {
    pub fn new(truth: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&bad) = truth.iter().find(|&&s| s >= k) {
            return Err(param(format!("oracle truth token {bad} outside 0..{k}")));
        }
        Ok(Self { truth, k })
    }
}

impl Denoiser for OracleDenoiser {
    fn num_tokens(&self) -> usize {
        self.k
    }

    fn predict(&self, input: &DenoiseInput<'_>, _t: usize) -> Result<Array2<f64>> {
        if input.len() != self.truth.len() {
            return Err(param(format!(
                "oracle covers {} positions, got {}",
                self.truth.len(),
                input.len()
            )));
        }
        let mut out = Array2::zeros((input.len(), self.k));
        for (p, &tok) in self.truth.iter().enumerate() {
            out[[p, tok]] = 1.0;
        }
        Ok(out)
    }
}

/// Log-linear table model. Logits for a position are the sum of rows looked
/// up by the current state, the left neighbour and the right neighbour, each
/// taken from a shared base table plus, for non-null conditions, a
/// per-condition offset table. Tables are indexed by a diffusion-step bucket.
///
/// Neighbour states range over `0..K`, MASK (`K`) and the boundary sentinel
/// (`K + 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDenoiser {
    num_conditions: usize,
    buckets: usize,
    k: usize,
    steps: usize,
    params: Vec<f64>,
}

const MODEL_HEADER: &str = "motiondiff-tabular v1";

impl TabularDenoiser {
    /// Zero-initialized model for action ids `1..=num_conditions`.
    pub fn new(num_conditions: usize, buckets: usize, k: usize, steps: usize) -> Result<Self> {
        if k < 2 {
            return Err(param("tabular denoiser needs K >= 2"));
        }
        if buckets < 1 || steps < 1 || buckets > steps {
            return Err(param(format!(
                "need 1 <= buckets <= T, got B={buckets} T={steps}"
            )));
        }
        let n = (num_conditions + 1) * buckets * Self::rows_per_bucket(k) * k;
        Ok(Self {
            num_conditions,
            buckets,
            k,
            steps,
            params: vec![0.0; n],
        })
    }

    /// Fills every parameter with uniform noise on `[-scale, scale)`.
    pub fn randomize(&mut self, seed: u64, scale: f64) {
        let mut r = rng::root(seed);
        for p in &mut self.params {
            *p = r.random_range(-scale..scale);
        }
    }

    fn rows_per_bucket(k: usize) -> usize {
        (k + 1) + 2 * (k + 2)
    }

    pub fn num_conditions(&self) -> usize {
        self.num_conditions
    }

    pub fn buckets(&self) -> usize {
        self.buckets
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn sentinel(&self) -> usize {
        self.k + 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn bucket(&self, t: usize) -> usize {
        (((t.max(1) - 1) * self.buckets) / self.steps).min(self.buckets - 1)
    }

    fn row_offsets(
        &self,
        group: usize,
        bucket: usize,
        cur: usize,
        prev: usize,
        next: usize,
    ) -> [usize; 3] {
        let k = self.k;
        let base = (group * self.buckets + bucket) * Self::rows_per_bucket(k);
        [
            (base + cur) * k,
            (base + (k + 1) + prev) * k,
            (base + (k + 1) + (k + 2) + next) * k,
        ]
    }

    /// Table groups contributing for a condition: the base (0) and, for an
    /// action, its offset table.
    fn groups(&self, cond: Condition) -> Result<([usize; 2], usize)> {
        match cond {
            Condition::Null => Ok(([0, 0], 1)),
            Condition::Action(id) if (id as usize) <= self.num_conditions => {
                Ok(([0, id as usize], 2))
            }
            Condition::Action(id) => Err(param(format!(
                "condition {id} outside vocabulary 1..={}",
                self.num_conditions
            ))),
        }
    }

    fn context(&self, states: &[usize], p: usize) -> (usize, usize, usize) {
        let prev = if p == 0 {
            self.sentinel()
        } else {
            states[p - 1]
        };
        let next = states.get(p + 1).copied().unwrap_or(self.sentinel());
        (states[p], prev, next)
    }

    fn logits_into(
        &self,
        cond: Condition,
        t: usize,
        ctx: (usize, usize, usize),
        out: &mut [f64],
    ) -> Result<()> {
        let (groups, n) = self.groups(cond)?;
        out.iter_mut().for_each(|v| *v = 0.0);
        let b = self.bucket(t);
        for &g in &groups[..n] {
            for off in self.row_offsets(g, b, ctx.0, ctx.1, ctx.2) {
                for (o, w) in out.iter_mut().zip(&self.params[off..off + self.k]) {
                    *o += w;
                }
            }
        }
        Ok(())
    }

    fn scatter_grad(
        &self,
        cond: Condition,
        t: usize,
        ctx: (usize, usize, usize),
        dlogits: &[f64],
        grad: &mut [f64],
    ) {
        let (groups, n) = self
            .groups(cond)
            .expect("condition validated in forward pass");
        let b = self.bucket(t);
        for &g in &groups[..n] {
            for off in self.row_offsets(g, b, ctx.0, ctx.1, ctx.2) {
                for (gr, d) in grad[off..off + self.k].iter_mut().zip(dlogits) {
                    *gr += d;
                }
            }
        }
    }

    fn check_states(&self, states: &[usize]) -> Result<()> {
        match states.iter().find(|&&s| s > self.k) {
            Some(&bad) => Err(param(format!("state {bad} outside 0..={}", self.k))),
            None => Ok(()),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{MODEL_HEADER} V={} B={} K={} T={} mask={} boundary={}\n",
            self.num_conditions,
            self.buckets,
            self.k,
            self.steps,
            self.k,
            self.sentinel()
        );
        for row in self.params.chunks(self.k) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty model file".into()))?;
        let rest = header
            .strip_prefix(MODEL_HEADER)
            .ok_or_else(|| Error::Format(format!("bad model header: {header}")))?;
        let fields = parse_header_fields(rest)?;
        let v = header_usize(&fields, "V")?;
        let b = header_usize(&fields, "B")?;
        let k = header_usize(&fields, "K")?;
        let t = header_usize(&fields, "T")?;
        if header_usize(&fields, "mask")? != k || header_usize(&fields, "boundary")? != k + 1 {
            return Err(Error::Format("unsupported mask/boundary ids".into()));
        }
        let mut model = Self::new(v, b, k, t).map_err(|e| Error::Format(e.to_string()))?;
        let mut params = Vec::with_capacity(model.params.len());
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let row = parse_row(line)?;
            if row.len() != k {
                return Err(Error::Format(format!(
                    "model row has {} values, expected {k}",
                    row.len()
                )));
            }
            params.extend(row);
        }
        if params.len() != model.params.len() {
            return Err(Error::Format(format!(
                "model has {} parameters, expected {}",
                params.len(),
                model.params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Format("model parameters must be finite".into()));
        }
        model.params = params;
        Ok(model)
    }
}

impl Denoiser for TabularDenoiser {
    fn num_tokens(&self) -> usize {
        self.k
    }

    fn predict(&self, input: &DenoiseInput<'_>, t: usize) -> Result<Array2<f64>> {
        if input.conditions.len() != input.len() {
            return Err(param("one condition per position required"));
        }
        self.check_states(input.states)?;
        let mut out = Array2::zeros((input.len(), self.k));
        let mut logits = vec![0.0; self.k];
        for p in 0..input.len() {
            let ctx = self.context(input.states, p);
            self.logits_into(input.conditions[p], t, ctx, &mut logits)?;
            softmax_in_place(&mut logits);
            out.row_mut(p)
                .iter_mut()
                .zip(&logits)
                .for_each(|(o, v)| *o = *v);
        }
        Ok(out)
    }
}

pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        z += *x;
    }
    v.iter_mut().for_each(|x| *x /= z);
}

/// A clean training sequence with its condition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub condition: Condition,
    pub tokens: Vec<usize>,
}

/// Corruption drawn for one example: the step and the corrupted states, plus
/// the condition the model sees (possibly nulled).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorruptedExample {
    pub index: usize,
    pub condition: Condition,
    pub t: usize,
    pub z_t: Vec<usize>,
}

/// Draws `t ~ U{1..T}` and `z_t ~ q(z_t | z_0)` per example, replacing the
/// condition by null with probability `null_prob`.
pub fn corrupt_batch<R: RngCore + ?Sized>(
    batch: &[Example],
    indices: &[usize],
    transitions: &TransitionModel,
    null_prob: f64,
    rng: &mut R,
) -> Vec<CorruptedExample> {
    let k = transitions.num_tokens();
    let mut col = vec![0.0; k + 1];
    indices
        .iter()
        .map(|&index| {
            let ex = &batch[index];
            let t = rng.random_range(1..=transitions.steps());
            let drop: f64 = rng.random();
            let condition = if drop < null_prob {
                Condition::Null
            } else {
                ex.condition
            };
            let cum = transitions.cumulative(t);
            let z_t = ex
                .tokens
                .iter()
                .map(|&z0| {
                    for (i, c) in col.iter_mut().enumerate() {
                        *c = cum[[i, z0]];
                    }
                    rng::categorical(rng, &col)
                })
                .collect();
            CorruptedExample {
                index,
                condition,
                t,
                z_t,
            }
        })
        .collect()
}

/// Loss value, its two components and the gradient over model parameters.
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    pub vlb: f64,
    pub cross_entropy: f64,
    pub grad: Vec<f64>,
}

/// Deterministic loss for fixed corruptions, summed over positions and
/// averaged over sequences:
/// `KL(q(z_{t-1} | z_t, z_0) || p(z_{t-1} | z_t, y)) + lambda * -log p(z_0 | z_t, y)`.
/// At `t = 1` the posterior is a point mass and the KL reduces to the
/// reconstruction term `-log p(z_0 | z_1, y)`.
pub fn loss_for(
    model: &TabularDenoiser,
    batch: &[Example],
    corrupted: &[CorruptedExample],
    transitions: &TransitionModel,
    lambda: f64,
) -> Result<LossOutput> {
    let k = model.k;
    if transitions.num_tokens() != k {
        return Err(param("model and transition vocabularies differ"));
    }
    let positions: usize = corrupted.iter().map(|c| c.z_t.len()).sum();
    if positions == 0 {
        return Err(param("empty batch"));
    }
    let norm = 1.0 / corrupted.len() as f64;
    let mut grad = vec![0.0; model.params.len()];
    let mut vlb = 0.0;
    let mut ce = 0.0;
    let mut p = vec![0.0; k];
    let mut dp = vec![0.0; k];
    let mut dl = vec![0.0; k];
    let mut g = vec![0.0; k + 1];
    for c in corrupted {
        let z0s = &batch[c.index].tokens;
        model.check_states(&c.z_t)?;
        let t = c.t;
        for (pos, (&z0, &z_t)) in z0s.iter().zip(&c.z_t).enumerate() {
            let ctx = model.context(&c.z_t, pos);
            model.logits_into(c.condition, t, ctx, &mut p)?;
            softmax_in_place(&mut p);

            let target = transitions.posterior(z_t, z0, t)?;
            let (u, mass) = transitions.reverse_mixture_parts(z_t, t, &p)?;
            let mut kl = mass.ln();
            for m in 0..=k {
                if target[m] > 0.0 {
                    kl += target[m] * (target[m].ln() - u[m].ln());
                    g[m] = target[m] / u[m];
                } else {
                    g[m] = 0.0;
                }
            }
            vlb += kl;
            ce -= p[z0].ln();

            // d kl / d p_j = reach_j * (1/mass - (1/qbar_j) sum_m g_m Q_t[z_t, m] Qbar_{t-1}[m, j])
            let q_t = transitions.step(t).row(z_t);
            let cum_t = transitions.cumulative(t).row(z_t);
            let prev = transitions.cumulative(t - 1);
            dp.iter_mut().for_each(|v| *v = 0.0);
            for m in 0..=k {
                let w = g[m] * q_t[m];
                if w == 0.0 {
                    continue;
                }
                for (d, pr) in dp.iter_mut().zip(prev.row(m).iter()) {
                    *d += w * pr;
                }
            }
            for j in 0..k {
                dp[j] = if cum_t[j] >= crate::schedule::MIN_NORMALIZER {
                    1.0 / mass - dp[j] / cum_t[j]
                } else {
                    0.0
                };
            }
            let inner: f64 = p.iter().zip(&dp).map(|(a, b)| a * b).sum();
            for j in 0..k {
                let ce_grad = p[j] - if j == z0 { 1.0 } else { 0.0 };
                dl[j] = norm * (p[j] * (dp[j] - inner) + lambda * ce_grad);
            }
            model.scatter_grad(c.condition, t, ctx, &dl, &mut grad);
        }
    }
    let vlb = vlb * norm;
    let cross_entropy = ce * norm;
    Ok(LossOutput {
        loss: (vlb + lambda * cross_entropy).max(0.0),
        vlb,
        cross_entropy,
        grad,
    })
}

/// Draws corruptions for the whole batch and evaluates [`loss_for`].
pub fn loss<R: RngCore + ?Sized>(
    model: &TabularDenoiser,
    batch: &[Example],
    transitions: &TransitionModel,
    lambda: f64,
    rng: &mut R,
) -> Result<LossOutput> {
    if batch.is_empty() {
        return Err(param("empty batch"));
    }
    if lambda.is_nan() || lambda < 0.0 {
        return Err(param("lambda must be >= 0"));
    }
    let idx: Vec<usize> = (0..batch.len()).collect();
    let corrupted = corrupt_batch(batch, &idx, transitions, 0.0, rng);
    loss_for(model, batch, &corrupted, transitions, lambda)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub null_prob: f64,
    pub lambda: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 0.1,
            null_prob: 0.1,
            lambda: 5e-4,
            batch_size: 8,
            seed: 0,
        }
    }
}

/// Mini-batch gradient descent. Each epoch shuffles the examples, and every
/// batch draws fresh corruptions and null-condition dropout. Returns the mean
/// loss per epoch.
pub fn train(
    model: &mut TabularDenoiser,
    data: &[Example],
    transitions: &TransitionModel,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(param("empty dataset"));
    }
    if !(0.0..1.0).contains(&cfg.null_prob) && cfg.null_prob != 1.0 {
        return Err(param(format!(
            "null_prob must be in [0, 1], got {}",
            cfg.null_prob
        )));
    }
    if cfg.batch_size == 0 || cfg.learning_rate.is_nan() || cfg.learning_rate <= 0.0 {
        return Err(param("batch_size and learning_rate must be positive"));
    }
    let mut r = rng::root(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut r);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let corrupted = corrupt_batch(data, chunk, transitions, cfg.null_prob, &mut r);
            let out = loss_for(model, data, &corrupted, transitions, cfg.lambda)?;
            if !out.loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    loss: out.loss,
                });
            }
            for (w, g) in model.params.iter_mut().zip(&out.grad) {
                *w -= cfg.learning_rate * g;
            }
            total += out.loss;
            batches += 1;
        }
        let mean = total / batches as f64;
        if !mean.is_finite() || model.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Training { epoch, loss: mean });
        }
        log::debug!("epoch {epoch} loss {mean:.6}");
        curve.push(mean);
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::Codebook;
    use crate::schedule::NoiseSchedule;

    fn small_transitions(k: usize, steps: usize) -> TransitionModel {
        let ranks = Codebook::synthetic(k, 2, 2, 5).unwrap().distance_ranks();
        TransitionModel::dynamic(NoiseSchedule::linear(steps, 0.9, 1e-3).unwrap(), ranks, 0.5)
            .unwrap()
    }

    #[test]
    fn oracle_returns_point_mass() {
        let o = OracleDenoiser::new(vec![2, 0, 1], 3).unwrap();
        let states = [3, 1, 3];
        let conds = [Condition::Null; 3];
        let input = DenoiseInput {
            states: &states,
            conditions: &conds,
            offsets: &[0, 1, 2],
        };
        let p = o.predict(&input, 7).unwrap();
        assert_eq!(p.row(0).to_vec(), vec![0.0, 0.0, 1.0]);
        assert_eq!(p.row(1).to_vec(), vec![1.0, 0.0, 0.0]);
        assert!(OracleDenoiser::new(vec![3], 3).is_err());
    }

    #[test]
    fn predict_rows_are_normalized() {
        let mut m = TabularDenoiser::new(3, 5, 6, 20).unwrap();
        m.randomize(4, 3.0);
        let states = [6, 0, 6, 5, 2];
        let conds = [
            Condition::Action(1),
            Condition::Null,
            Condition::Action(3),
            Condition::Action(2),
            Condition::Null,
        ];
        let input = DenoiseInput {
            states: &states,
            conditions: &conds,
            offsets: &[0, 1, 2, 3, 4],
        };
        for t in 1..=20 {
            let p = m.predict(&input, t).unwrap();
            for row in p.rows() {
                assert!((row.sum() - 1.0).abs() < 1e-9);
            }
        }
        let bad = [Condition::Action(4); 5];
        let input = DenoiseInput {
            conditions: &bad,
            ..input
        };
        assert!(m.predict(&input, 1).is_err());
    }

    #[test]
    fn buckets_cover_steps() {
        let m = TabularDenoiser::new(1, 10, 3, 100).unwrap();
        assert_eq!(m.bucket(1), 0);
        assert_eq!(m.bucket(10), 0);
        assert_eq!(m.bucket(11), 1);
        assert_eq!(m.bucket(100), 9);
        let exact = TabularDenoiser::new(1, 100, 3, 100).unwrap();
        assert_eq!(exact.bucket(37), 36);
    }

    #[test]
    fn model_text_round_trip() {
        let mut m = TabularDenoiser::new(2, 3, 4, 9).unwrap();
        m.randomize(1, 1.0);
        let back = TabularDenoiser::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn oracle_limit_loss_is_zero() {
        // A model whose logits saturate on the truth regardless of context.
        let k = 3;
        let tm = small_transitions(k, 4);
        let data = vec![Example {
            condition: Condition::Null,
            tokens: vec![2, 2],
        }];
        let mut m = TabularDenoiser::new(0, 4, k, 4).unwrap();
        let rows = m.params.len() / k;
        for r in 0..rows {
            m.params[r * k + 2] = 200.0;
        }
        for seed in 0..20 {
            let out = loss(&m, &data, &tm, 5e-4, &mut rng::root(seed)).unwrap();
            assert!(out.loss < 1e-12, "loss {}", out.loss);
            assert!(out.loss >= 0.0);
        }
    }

    #[test]
    fn lambda_zero_is_pure_vlb() {
        let tm = small_transitions(4, 8);
        let data = vec![Example {
            condition: Condition::Action(1),
            tokens: vec![0, 1, 2],
        }];
        let mut m = TabularDenoiser::new(1, 4, 4, 8).unwrap();
        m.randomize(2, 1.0);
        let out = loss(&m, &data, &tm, 0.0, &mut rng::root(3)).unwrap();
        assert_eq!(out.loss, out.vlb.max(0.0));
        assert!(loss(&m, &[], &tm, 0.0, &mut rng::root(3)).is_err());
    }

    #[test]
    fn training_is_deterministic_and_improves() {
        let tm = small_transitions(4, 10);
        let data = vec![
            Example {
                condition: Condition::Action(1),
                tokens: vec![0, 1, 2, 3],
            },
            Example {
                condition: Condition::Action(2),
                tokens: vec![3, 2, 1, 0],
            },
        ];
        let cfg = TrainConfig {
            epochs: 150,
            batch_size: 2,
            seed: 9,
            ..TrainConfig::default()
        };
        let mut a = TabularDenoiser::new(2, 5, 4, 10).unwrap();
        let mut b = a.clone();
        let ca = train(&mut a, &data, &tm, &cfg).unwrap();
        let cb = train(&mut b, &data, &tm, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ca, cb);
        let head: f64 = ca[..20].iter().sum();
        let tail: f64 = ca[ca.len() - 20..].iter().sum();
        assert!(tail <= head);
    }

    #[test]
    fn full_dropout_leaves_conditions_unused() {
        let tm = small_transitions(4, 10);
        let data = vec![Example {
            condition: Condition::Action(1),
            tokens: vec![0, 1, 2, 3],
        }];
        let cfg = TrainConfig {
            epochs: 20,
            null_prob: 1.0,
            batch_size: 1,
            ..TrainConfig::default()
        };
        let mut m = TabularDenoiser::new(1, 5, 4, 10).unwrap();
        train(&mut m, &data, &tm, &cfg).unwrap();
        let states = [4, 4, 1, 4];
        let cond = [Condition::Action(1); 4];
        let unc = [Condition::Null; 4];
        let offs = [0, 1, 2, 3];
        for t in 1..=10 {
            let pc = m
                .predict(
                    &DenoiseInput {
                        states: &states,
                        conditions: &cond,
                        offsets: &offs,
                    },
                    t,
                )
                .unwrap();
            let pu = m
                .predict(
                    &DenoiseInput {
                        states: &states,
                        conditions: &unc,
                        offsets: &offs,
                    },
                    t,
                )
                .unwrap();
            assert_eq!(pc, pu);
        }
    }
}
