//! Noise schedules, per-step transition matrices over `K + 1` states (the
//! last one is MASK), cached cumulative products, forward corruption and the
//! exact posterior `q(z_{t-1} | z_t, z_0)`.
//!
//! Matrices are column-stochastic: `m[[i, j]] = P(next = i | prev = j)`.

use std::fmt::Write as _;

use ndarray::Array2;
use rand::RngCore;

use crate::codebook::RankMatrix;
use crate::error::{param, Error, Result};
use crate::rng;
use crate::tokens::TokenSequence;

/// Normalizers below this are treated as zero.
pub const MIN_NORMALIZER: f64 = 1e-300;

const RESIDUAL_SLACK: f64 = 1e-12;

/// Per-step keep/mask probabilities and their cumulative targets. Index `t`
/// runs over `0..=T`; index 0 is the identity step.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    alpha: Vec<f64>,
    gamma: Vec<f64>,
    alpha_bar: Vec<f64>,
    gamma_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// Linear cumulative ramps: `gamma_bar_t = gamma_max * t / T` and
    /// `alpha_bar_t = 1 - (1 - alpha_min) * t / T`, with per-step values
    /// recovered from consecutive ratios.
    pub fn linear(steps: usize, gamma_max: f64, alpha_min: f64) -> Result<Self> {
        if steps < 1 {
            return Err(param("schedule needs T >= 1"));
        }
        if !(gamma_max > 0.0 && gamma_max < 1.0) {
            return Err(param(format!(
                "gamma_max must be in (0, 1), got {gamma_max}"
            )));
        }
        if !(alpha_min > 0.0 && alpha_min < 1.0 - gamma_max) {
            return Err(param(format!(
                "alpha_min must be in (0, 1 - gamma_max), got {alpha_min}"
            )));
        }
        let tf = steps as f64;
        let mut alpha_bar = Vec::with_capacity(steps + 1);
        let mut gamma_bar = Vec::with_capacity(steps + 1);
        for t in 0..=steps {
            if t == steps {
                alpha_bar.push(alpha_min);
                gamma_bar.push(gamma_max);
            } else {
                let frac = t as f64 / tf;
                alpha_bar.push(1.0 - (1.0 - alpha_min) * frac);
                gamma_bar.push(gamma_max * frac);
            }
        }
        let mut alpha = vec![1.0];
        let mut gamma = vec![0.0];
        for t in 1..=steps {
            alpha.push(alpha_bar[t] / alpha_bar[t - 1]);
            gamma.push((gamma_bar[t] - gamma_bar[t - 1]) / (1.0 - gamma_bar[t - 1]));
        }
        for t in 1..=steps {
            let residual = 1.0 - alpha[t] - gamma[t];
            if residual < -RESIDUAL_SLACK {
                return Err(Error::Schedule {
                    t,
                    reason: format!("negative replacement mass {residual:e}"),
                });
            }
        }
        Ok(Self {
            alpha,
            gamma,
            alpha_bar,
            gamma_bar,
        })
    }

    /// Schedule from explicit per-step values (`alpha[0]` is step 1).
    pub fn from_steps(alpha: &[f64], gamma: &[f64]) -> Result<Self> {
        if alpha.is_empty() || alpha.len() != gamma.len() {
            return Err(param("alpha and gamma must be non-empty and equally long"));
        }
        let mut a = vec![1.0];
        let mut g = vec![0.0];
        let mut ab = vec![1.0];
        let mut gb = vec![0.0];
        for (i, (&at, &gt)) in alpha.iter().zip(gamma).enumerate() {
            let t = i + 1;
            if !(at > 0.0 && at <= 1.0) || !(0.0..1.0).contains(&gt) {
                return Err(Error::Schedule {
                    t,
                    reason: format!("alpha={at} gamma={gt} out of range"),
                });
            }
            if 1.0 - at - gt < -RESIDUAL_SLACK {
                return Err(Error::Schedule {
                    t,
                    reason: format!("alpha + gamma = {} exceeds 1", at + gt),
                });
            }
            a.push(at);
            g.push(gt);
            ab.push(ab[i] * at);
            gb.push(1.0 - (1.0 - gb[i]) * (1.0 - gt));
        }
        Ok(Self {
            alpha: a,
            gamma: g,
            alpha_bar: ab,
            gamma_bar: gb,
        })
    }

    pub fn steps(&self) -> usize {
        self.alpha.len() - 1
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t]
    }

    pub fn gamma(&self, t: usize) -> f64 {
        self.gamma[t]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn gamma_bar(&self, t: usize) -> f64 {
        self.gamma_bar[t]
    }

    /// Mass spread over token replacements at step `t`: `1 - alpha_t - gamma_t`.
    pub fn replace_mass(&self, t: usize) -> f64 {
        (1.0 - self.alpha[t] - self.gamma[t]).max(0.0)
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t < 1 || t > self.steps() {
            return Err(param(format!("step {t} outside 1..={}", self.steps())));
        }
        Ok(())
    }
}

/// How replacement mass is spread across tokens.
#[derive(Debug, Clone, PartialEq)]
pub enum TransitionKind {
    /// Equal mass `(1 - alpha_t - gamma_t) / K` to every token.
    Uniform,
    /// Softmax over distance ranks, `softmax_d(eta * t/T * d/K)`, so distant
    /// tokens gain mass as `t` grows.
    Dynamic { ranks: RankMatrix, eta: f64 },
}

/// Replacement mass per rank `d = 1..=K` at step `t` (index `d - 1`).
pub fn rank_masses(sched: &NoiseSchedule, t: usize, k: usize, eta: f64) -> Vec<f64> {
    let residual = sched.replace_mass(t);
    let scale = eta * t as f64 / sched.steps() as f64;
    let logits: Vec<f64> = (1..=k).map(|d| scale * d as f64 / k as f64).collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| residual * e / z).collect()
}

/// Uniform step matrix `Q_t`.
pub fn uniform_step_matrix(sched: &NoiseSchedule, t: usize, k: usize) -> Result<Array2<f64>> {
    sched.check_step(t)?;
    let beta = sched.replace_mass(t) / k as f64;
    let mut q = Array2::from_elem((k + 1, k + 1), beta);
    for j in 0..k {
        q[[j, j]] += sched.alpha(t);
        q[[k, j]] = sched.gamma(t);
        q[[j, k]] = 0.0;
    }
    q[[k, k]] = 1.0;
    Ok(q)
}

/// Distance-rank step matrix: entry `(i, j)` is
/// `alpha_t * [i == j] + beta(t, ranks[i][j])`. Every column holds the same
/// rank-mass vector permuted, so the softmax is evaluated once.
pub fn dynamic_step_matrix(
    sched: &NoiseSchedule,
    t: usize,
    ranks: &RankMatrix,
    eta: f64,
) -> Result<Array2<f64>> {
    sched.check_step(t)?;
    let k = ranks.len();
    let masses = rank_masses(sched, t, k, eta);
    let mut q = Array2::zeros((k + 1, k + 1));
    for i in 0..k {
        for j in 0..k {
            q[[i, j]] = masses[ranks.rank(i, j) - 1];
        }
    }
    for j in 0..k {
        q[[j, j]] += sched.alpha(t);
        q[[k, j]] = sched.gamma(t);
    }
    q[[k, k]] = 1.0;
    Ok(q)
}

/// Per-step matrices and their cumulative products for one configuration,
/// built once and immutable afterwards.
#[derive(Debug, Clone)]
pub struct TransitionModel {
    schedule: NoiseSchedule,
    kind: TransitionKind,
    k: usize,
    /// `steps[t - 1] = Q_t`.
    steps: Vec<Array2<f64>>,
    /// `cumulative[t] = Q_t ... Q_1`, with `cumulative[0] = I`.
    cumulative: Vec<Array2<f64>>,
}

impl TransitionModel {
    pub fn new(schedule: NoiseSchedule, kind: TransitionKind, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(param("transition model needs K >= 2"));
        }
        if let TransitionKind::Dynamic { ranks, eta } = &kind {
            if ranks.len() != k {
                return Err(param(format!(
                    "rank matrix is {0}x{0}, expected K={k}",
                    ranks.len()
                )));
            }
            if !eta.is_finite() {
                return Err(param("eta must be finite"));
            }
        }
        let t_max = schedule.steps();
        let mut steps = Vec::with_capacity(t_max);
        let mut cumulative = Vec::with_capacity(t_max + 1);
        cumulative.push(Array2::eye(k + 1));
        for t in 1..=t_max {
            let q = match &kind {
                TransitionKind::Uniform => uniform_step_matrix(&schedule, t, k)?,
                TransitionKind::Dynamic { ranks, eta } => {
                    dynamic_step_matrix(&schedule, t, ranks, *eta)?
                }
            };
            cumulative.push(q.dot(&cumulative[t - 1]));
            steps.push(q);
        }
        Ok(Self {
            schedule,
            kind,
            k,
            steps,
            cumulative,
        })
    }

    pub fn uniform(schedule: NoiseSchedule, k: usize) -> Result<Self> {
        Self::new(schedule, TransitionKind::Uniform, k)
    }

    pub fn dynamic(schedule: NoiseSchedule, ranks: RankMatrix, eta: f64) -> Result<Self> {
        let k = ranks.len();
        Self::new(schedule, TransitionKind::Dynamic { ranks, eta }, k)
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn kind(&self) -> &TransitionKind {
        &self.kind
    }

    pub fn num_tokens(&self) -> usize {
        self.k
    }

    pub fn mask(&self) -> usize {
        self.k
    }

    pub fn steps(&self) -> usize {
        self.schedule.steps()
    }

    /// `Q_t` for `t` in `1..=T`.
    pub fn step(&self, t: usize) -> &Array2<f64> {
        &self.steps[t - 1]
    }

    /// `Q_t ... Q_1` for `t` in `0..=T`.
    pub fn cumulative(&self, t: usize) -> &Array2<f64> {
        &self.cumulative[t]
    }

    /// Replacement mass per rank at step `t`.
    pub fn rank_masses(&self, t: usize) -> Vec<f64> {
        match &self.kind {
            TransitionKind::Uniform => {
                vec![self.schedule.replace_mass(t) / self.k as f64; self.k]
            }
            TransitionKind::Dynamic { eta, .. } => rank_masses(&self.schedule, t, self.k, *eta),
        }
    }

    /// Samples `z_t ~ q(z_t | z_0)` independently per position.
    pub fn forward_sample<R: RngCore + ?Sized>(
        &self,
        z0: &TokenSequence,
        t: usize,
        rng: &mut R,
    ) -> Result<TokenSequence> {
        z0.ensure_no_mask("forward_sample")?;
        if z0.num_tokens() != self.k {
            return Err(param("sequence vocabulary does not match transition model"));
        }
        if t > self.steps() {
            return Err(param(format!("step {t} outside 0..={}", self.steps())));
        }
        let mut out = z0.clone();
        let cum = self.cumulative(t);
        let mut col = vec![0.0; self.k + 1];
        for s in out.states_mut() {
            for (i, c) in col.iter_mut().enumerate() {
                *c = cum[[i, *s]];
            }
            *s = rng::categorical(rng, &col);
        }
        Ok(out)
    }

    /// `q(z_{t-1} | z_t, z_0)` over all `K + 1` states.
    pub fn posterior(&self, z_t: usize, z0: usize, t: usize) -> Result<Vec<f64>> {
        self.schedule.check_step(t)?;
        if z0 >= self.k || z_t > self.k {
            return Err(param(format!(
                "posterior needs z0 < K and z_t <= K, got z0={z0} z_t={z_t}"
            )));
        }
        let norm = self.cumulative(t)[[z_t, z0]];
        if norm < MIN_NORMALIZER {
            return Err(Error::Unreachable {
                t,
                detail: format!("state {z_t} cannot be reached from {z0}"),
            });
        }
        let q = self.step(t);
        let prev = self.cumulative(t - 1);
        let mut out: Vec<f64> = (0..=self.k).map(|m| q[[z_t, m]] * prev[[m, z0]]).collect();
        let sum: f64 = out.iter().sum();
        out.iter_mut().for_each(|v| *v /= sum);
        Ok(out)
    }

    /// Reverse distribution `p(z_{t-1} | z_t) = sum_k q(z_{t-1} | z_t, k) p0[k]`
    /// for a prediction `p0` over the `K` tokens. Candidates `k` from which
    /// `z_t` is unreachable carry no posterior and are dropped; the remaining
    /// weights are renormalized.
    pub fn reverse_mixture(&self, z_t: usize, t: usize, p0: &[f64]) -> Result<Vec<f64>> {
        let (mut out, _) = self.reverse_mixture_parts(z_t, t, p0)?;
        let sum: f64 = out.iter().sum();
        out.iter_mut().for_each(|v| *v /= sum);
        Ok(out)
    }

    /// Unnormalized mixture and the reachable prediction mass.
    pub(crate) fn reverse_mixture_parts(
        &self,
        z_t: usize,
        t: usize,
        p0: &[f64],
    ) -> Result<(Vec<f64>, f64)> {
        let k = self.k;
        let cum_t = self.cumulative(t).row(z_t);
        let mut weights = vec![0.0; k];
        let mut mass = 0.0;
        for j in 0..k {
            if cum_t[j] >= MIN_NORMALIZER {
                weights[j] = p0[j] / cum_t[j];
                mass += p0[j];
            }
        }
        if mass.is_nan() || mass <= 0.0 {
            return Err(Error::Unreachable {
                t,
                detail: format!("no predicted token can reach state {z_t}"),
            });
        }
        let q_row = self.step(t).row(z_t);
        let prev = self.cumulative(t - 1);
        let out = (0..=k)
            .map(|m| {
                if q_row[m] == 0.0 {
                    return 0.0;
                }
                let row = prev.row(m);
                let v: f64 = (0..k).map(|j| row[j] * weights[j]).sum();
                q_row[m] * v
            })
            .collect();
        Ok((out, mass))
    }

    pub fn audit(&self) -> Vec<AuditRow> {
        (1..=self.steps())
            .map(|t| {
                let masses = self.rank_masses(t);
                AuditRow {
                    t,
                    step_colsum_dev: max_colsum_dev(self.step(t)),
                    cum_colsum_dev: max_colsum_dev(self.cumulative(t)),
                    step_mask_row: mask_row_min(self.step(t), self.k),
                    cum_mask_row: mask_row_min(self.cumulative(t), self.k),
                    beta_min: masses.iter().cloned().fold(f64::INFINITY, f64::min),
                    beta_max: masses.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                }
            })
            .collect()
    }

    /// Fixed-width text rendering of [`TransitionModel::audit`].
    pub fn audit_table(&self) -> String {
        let mut s = format!(
            "{:>5} {:>12} {:>12} {:>14} {:>14} {:>14} {:>14}\n",
            "t", "q_colsum_dev", "qbar_dev", "q_mask_row", "qbar_mask_row", "beta_min", "beta_max"
        );
        for r in self.audit() {
            let _ = writeln!(
                s,
                "{:>5} {:>12.3e} {:>12.3e} {:>14.8e} {:>14.8e} {:>14.8e} {:>14.8e}",
                r.t,
                r.step_colsum_dev,
                r.cum_colsum_dev,
                r.step_mask_row,
                r.cum_mask_row,
                r.beta_min,
                r.beta_max
            );
        }
        s
    }
}

/// One line of the matrix audit.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditRow {
    pub t: usize,
    pub step_colsum_dev: f64,
    pub cum_colsum_dev: f64,
    pub step_mask_row: f64,
    pub cum_mask_row: f64,
    pub beta_min: f64,
    pub beta_max: f64,
}

/// Largest `|column sum - 1|`.
pub fn max_colsum_dev(m: &Array2<f64>) -> f64 {
    m.columns()
        .into_iter()
        .map(|c| (c.sum() - 1.0).abs())
        .fold(0.0, f64::max)
}

fn mask_row_min(m: &Array2<f64>, k: usize) -> f64 {
    (0..k).map(|j| m[[k, j]]).fold(f64::INFINITY, f64::min)
}
