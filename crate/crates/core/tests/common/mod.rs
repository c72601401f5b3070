//! Reference implementations used as test oracles. They are written from the
//! defining formulas with plain loops and nested `Vec`s and share no code
//! with the library beyond its public input types.
#![allow(dead_code)]

use motiondiff::denoiser::{
    corrupt_batch, loss_for, DenoiseInput, Denoiser, Example, TabularDenoiser,
};
use motiondiff::{rng, Codebook, Condition, NoiseSchedule, Result, TransitionModel};
use ndarray::Array2;
use rand::Rng;

/// Linear cumulative ramps and the per-step values they imply.
pub struct RefSchedule {
    pub steps: usize,
    pub alpha: Vec<f64>,
    pub gamma: Vec<f64>,
    pub alpha_bar: Vec<f64>,
    pub gamma_bar: Vec<f64>,
}

pub fn ref_schedule(steps: usize, gamma_max: f64, alpha_min: f64) -> RefSchedule {
    let tt = steps as f64;
    let alpha_bar: Vec<f64> = (0..=steps)
        .map(|t| 1.0 - (1.0 - alpha_min) * t as f64 / tt)
        .collect();
    let gamma_bar: Vec<f64> = (0..=steps).map(|t| gamma_max * t as f64 / tt).collect();
    let mut alpha = vec![1.0];
    let mut gamma = vec![0.0];
    for t in 1..=steps {
        alpha.push(alpha_bar[t] / alpha_bar[t - 1]);
        gamma.push((gamma_bar[t] - gamma_bar[t - 1]) / (1.0 - gamma_bar[t - 1]));
    }
    RefSchedule {
        steps,
        alpha,
        gamma,
        alpha_bar,
        gamma_bar,
    }
}

/// `ranks[i][j]`: 1-based position of entry `i` in entries sorted by distance
/// to entry `j`, ties by index.
pub fn ref_ranks(entries: &Array2<f64>) -> Vec<Vec<usize>> {
    let k = entries.nrows();
    let mut ranks = vec![vec![0; k]; k];
    for j in 0..k {
        let mut by_dist: Vec<(f64, usize)> = (0..k)
            .map(|i| {
                let d: f64 = (0..entries.ncols())
                    .map(|c| (entries[[i, c]] - entries[[j, c]]).powi(2))
                    .sum();
                (d, i)
            })
            .collect();
        by_dist.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (pos, (_, i)) in by_dist.into_iter().enumerate() {
            ranks[i][j] = pos + 1;
        }
    }
    ranks
}

/// `m[i][j] = P(next = i | prev = j)` over `K + 1` states. `ranks = None`
/// gives the uniform family.
pub fn ref_step(
    s: &RefSchedule,
    t: usize,
    k: usize,
    ranks: Option<(&[Vec<usize>], f64)>,
) -> Vec<Vec<f64>> {
    let resid = 1.0 - s.alpha[t] - s.gamma[t];
    let beta: Vec<f64> = match ranks {
        None => vec![resid / k as f64; k],
        Some((_, eta)) => {
            let w: Vec<f64> = (1..=k)
                .map(|d| (eta * t as f64 / s.steps as f64 * d as f64 / k as f64).exp())
                .collect();
            let z: f64 = w.iter().sum();
            w.iter().map(|x| resid * x / z).collect()
        }
    };
    let mut m = vec![vec![0.0; k + 1]; k + 1];
    for j in 0..k {
        for i in 0..k {
            let d = match ranks {
                None => 0,
                Some((r, _)) => r[i][j] - 1,
            };
            m[i][j] = beta[d] + if i == j { s.alpha[t] } else { 0.0 };
        }
        m[k][j] = s.gamma[t];
    }
    m[k][k] = 1.0;
    m
}

pub fn ref_product(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            out[i][j] = (0..n).map(|m| a[i][m] * b[m][j]).sum();
        }
    }
    out
}

/// Bayes by path enumeration: `P(z_{t-1} = m | z_t, z_0)` from the joint law
/// of `z_1..z_t` given `z_0`. Returns `None` when `z_t` has zero probability.
pub fn enumerate_posterior(
    steps: &[Vec<Vec<f64>>],
    z_t: usize,
    z0: usize,
    t: usize,
) -> Option<Vec<f64>> {
    let n = steps[1].len();
    let mut post = vec![0.0; n];
    // walk every path z_1..z_{t-1}; z_t is fixed
    let mut path = vec![0usize; t.saturating_sub(1)];
    loop {
        let mut p = 1.0;
        let mut prev = z0;
        for (s, &z) in path.iter().enumerate() {
            p *= steps[s + 1][z][prev];
            prev = z;
        }
        p *= steps[t][z_t][prev];
        post[prev] += p;
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == path.len() {
                let total: f64 = post.iter().sum();
                return (total > 0.0).then(|| post.iter().map(|v| v / total).collect());
            }
            path[pos] += 1;
            if path[pos] < n {
                break;
            }
            path[pos] = 0;
            pos += 1;
        }
    }
}

/// Exact `p(z_0 | z_t)` marginals when the data is a finite mixture of
/// sequences: the posterior weight of each candidate is its prior times the
/// product of per-position forward probabilities.
pub struct MixtureOracle {
    pub seqs: Vec<Vec<usize>>,
    pub prior: Vec<f64>,
    pub transitions: TransitionModel,
}

impl Denoiser for MixtureOracle {
    fn num_tokens(&self) -> usize {
        self.transitions.num_tokens()
    }

    fn predict(&self, input: &DenoiseInput<'_>, t: usize) -> Result<Array2<f64>> {
        let cum = self.transitions.cumulative(t);
        let logw: Vec<f64> = self
            .seqs
            .iter()
            .zip(&self.prior)
            .map(|(x, pi)| {
                pi.ln()
                    + x.iter()
                        .zip(input.states)
                        .map(|(&x0, &z)| cum[[z, x0]].ln())
                        .sum::<f64>()
            })
            .collect();
        let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = w.iter().sum();
        let mut out = Array2::zeros((input.len(), self.num_tokens()));
        for (x, wx) in self.seqs.iter().zip(&w) {
            for (p, &tok) in x.iter().enumerate() {
                out[[p, tok]] += wx / z;
            }
        }
        Ok(out)
    }
}

pub fn max_abs_diff(a: &Array2<f64>, b: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, row) in b.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            worst = worst.max((a[[i, j]] - v).abs());
        }
    }
    worst
}

/// One random gradient check: a small tabular model with random weights and
/// a fixed batch of corruptions. Returns the worst relative error over the
/// sampled coordinates and how many were checked. Relative errors use
/// `max(|analytic|, |numeric|, 1e-7)` as the denominator.
pub fn gradient_draw(seed: u64, fd_eps: f64) -> (f64, usize) {
    let mut r = rng::root(seed);
    let k = r.random_range(3..=6);
    let steps = r.random_range(2..=6);
    let v = r.random_range(1..=2);
    let buckets = r.random_range(1..=steps);
    let sched = NoiseSchedule::linear(steps, 0.8, 0.05).unwrap();
    let tm = if seed.is_multiple_of(2) {
        let cb = Codebook::synthetic(k, 2, 2, seed).unwrap();
        TransitionModel::dynamic(sched, cb.distance_ranks(), 0.5).unwrap()
    } else {
        TransitionModel::uniform(sched, k).unwrap()
    };
    let mut model = TabularDenoiser::new(v, buckets, k, steps).unwrap();
    model.randomize(seed ^ 0x5eed, 1.0);
    let batch: Vec<Example> = (0..3)
        .map(|_| Example {
            condition: Condition::Action(r.random_range(1..=v as u32)),
            tokens: (0..r.random_range(2..=5))
                .map(|_| r.random_range(0..k))
                .collect(),
        })
        .collect();
    let corrupted = corrupt_batch(&batch, &[0, 1, 2], &tm, 0.3, &mut r);
    let lambda = 0.3;
    let f = |m: &TabularDenoiser| {
        let o = loss_for(m, &batch, &corrupted, &tm, lambda).unwrap();
        o.vlb + lambda * o.cross_entropy
    };
    let analytic = loss_for(&model, &batch, &corrupted, &tm, lambda)
        .unwrap()
        .grad;
    let touched: Vec<usize> = (0..analytic.len())
        .filter(|&i| analytic[i] != 0.0)
        .collect();
    let mut picks: Vec<usize> = (0..30.min(touched.len()))
        .map(|_| touched[r.random_range(0..touched.len())])
        .collect();
    picks.extend((0..5).map(|_| r.random_range(0..analytic.len())));
    let mut worst: f64 = 0.0;
    for &i in &picks {
        let orig = model.params()[i];
        model.params_mut()[i] = orig + fd_eps;
        let up = f(&model);
        model.params_mut()[i] = orig - fd_eps;
        let down = f(&model);
        model.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * fd_eps);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-7);
        worst = worst.max(rel);
    }
    (worst, picks.len())
}
