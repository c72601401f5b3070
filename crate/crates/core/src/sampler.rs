//! Reverse-chain sampling.
//!
//! RNG contract: a plan carries one root seed and segment `i` draws from
//! `rng::substream(seed, i)` for every step, in both phases. Each reverse
//! step consumes exactly one uniform per position, so a segment's stream
//! advances identically whether the step ran jointly or in isolation. This
//! makes `T_s = T` reproduce per-segment [`generate_single`] bit for bit, and
//! makes a one-segment plan identical to [`generate_single`] for any `T_s`.

use ndarray::Array2;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::denoiser::{DenoiseInput, Denoiser};
use crate::error::{param, Error, Result};
use crate::rng::{self, Stream};
use crate::schedule::TransitionModel;
use crate::tokens::{Condition, TokenSequence};

/// Log-probabilities below this are clamped before guidance so that zero
/// unconditional mass does not produce infinities.
const LOG_FLOOR: f64 = -700.0;

/// Classifier-free guidance in log space,
/// `(s + 1) * log p_cond - s * log p_uncond`, renormalized per row.
/// Rows where the two inputs agree are returned unchanged, and `s = 0`
/// returns `cond` as is.
pub fn guided_log_probs(
    cond: &Array2<f64>,
    uncond: &Array2<f64>,
    scale: f64,
) -> Result<Array2<f64>> {
    if cond.dim() != uncond.dim() {
        return Err(param(format!(
            "guidance shapes differ: {:?} vs {:?}",
            cond.dim(),
            uncond.dim()
        )));
    }
    if scale.is_nan() || scale < 0.0 {
        return Err(param(format!("guidance scale must be >= 0, got {scale}")));
    }
    if scale == 0.0 {
        return Ok(cond.clone());
    }
    let mut out = cond.clone();
    for (mut row, u) in out.rows_mut().into_iter().zip(uncond.rows()) {
        if row.iter().zip(u.iter()).all(|(a, b)| a == b) {
            continue;
        }
        for (c, &un) in row.iter_mut().zip(u.iter()) {
            if *c == f64::NEG_INFINITY {
                continue;
            }
            *c += scale * (*c - un.max(LOG_FLOOR));
        }
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(param("guidance row has no finite mass"));
        }
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.iter_mut().for_each(|v| *v -= lse);
    }
    Ok(out)
}

/// Denoiser prediction with guidance applied (probability rows).
pub fn guided_prediction<D: Denoiser + ?Sized>(
    denoiser: &D,
    input: &DenoiseInput<'_>,
    t: usize,
    scale: f64,
) -> Result<Array2<f64>> {
    let cond = denoiser.predict(input, t)?;
    if scale == 0.0 {
        return Ok(cond);
    }
    let nulls = vec![Condition::Null; input.len()];
    let uncond = denoiser.predict(
        &DenoiseInput {
            conditions: &nulls,
            ..*input
        },
        t,
    )?;
    let mut guided =
        guided_log_probs(&cond.mapv(f64::ln), &uncond.mapv(f64::ln), scale)?.mapv(f64::exp);
    // exp(ln p) need not round-trip exactly; agreeing rows keep the original
    for ((mut g, c), u) in guided
        .rows_mut()
        .into_iter()
        .zip(cond.rows())
        .zip(uncond.rows())
    {
        if c == u {
            g.assign(&c);
        }
    }
    Ok(guided)
}

/// `p(z_{t-1} | z_t, y)` for every position of a slice.
fn reverse_distributions<D: Denoiser + ?Sized>(
    input: &DenoiseInput<'_>,
    t: usize,
    denoiser: &D,
    transitions: &TransitionModel,
    scale: f64,
    position_base: usize,
) -> Result<Vec<Vec<f64>>> {
    let p0 = guided_prediction(denoiser, input, t, scale)?;
    if p0.dim() != (input.len(), transitions.num_tokens()) {
        return Err(param("denoiser output shape does not match the vocabulary"));
    }
    input
        .states
        .iter()
        .enumerate()
        .map(|(p, &z_t)| {
            let row = p0.row(p);
            let row = row.as_slice().expect("prediction rows are contiguous");
            transitions
                .reverse_mixture(z_t, t, row)
                .map_err(|e| match e {
                    Error::Unreachable { t, detail } => Error::Unreachable {
                        t,
                        detail: format!("position {}: {detail}", position_base + p),
                    },
                    other => other,
                })
        })
        .collect()
}

fn check_step(transitions: &TransitionModel, t: usize) -> Result<()> {
    if t < 1 || t > transitions.steps() {
        return Err(param(format!(
            "step {t} outside 1..={}",
            transitions.steps()
        )));
    }
    Ok(())
}

/// One reverse step over the whole sequence, treated as a single context
/// window. Positions are sampled independently, in order, one uniform each.
pub fn reverse_step<D: Denoiser + ?Sized, R: RngCore + ?Sized>(
    z_t: &TokenSequence,
    t: usize,
    denoiser: &D,
    transitions: &TransitionModel,
    scale: f64,
    rng: &mut R,
) -> Result<TokenSequence> {
    check_step(transitions, t)?;
    let offsets = z_t.segment_offsets();
    let input = DenoiseInput {
        states: z_t.states(),
        conditions: z_t.conditions(),
        offsets: &offsets,
    };
    let dists = reverse_distributions(&input, t, denoiser, transitions, scale, 0)?;
    let mut out = z_t.clone();
    for (s, d) in out.states_mut().iter_mut().zip(&dists) {
        *s = rng::categorical(rng, d);
    }
    Ok(out)
}

fn ensure_unmasked(seq: &TokenSequence) -> Result<()> {
    match seq.states().iter().position(|&s| s == seq.mask()) {
        Some(p) => Err(Error::Sampling(format!(
            "MASK left at position {p} after the final step"
        ))),
        None => Ok(()),
    }
}

/// Samples one segment from the all-MASK prior through steps `T..=1`.
pub fn generate_single<D: Denoiser + ?Sized, R: RngCore + ?Sized>(
    denoiser: &D,
    transitions: &TransitionModel,
    condition: Condition,
    length: usize,
    scale: f64,
    rng: &mut R,
) -> Result<TokenSequence> {
    if denoiser.num_tokens() != transitions.num_tokens() {
        return Err(param("denoiser and transition vocabularies differ"));
    }
    let mut z = TokenSequence::masked(transitions.num_tokens(), &[(condition, length)])?;
    for t in (1..=transitions.steps()).rev() {
        z = reverse_step(&z, t, denoiser, transitions, scale, rng)?;
    }
    ensure_unmasked(&z)?;
    Ok(z)
}

/// Segments to generate together, with the two-phase switch step and the
/// guidance scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationPlan {
    pub segments: Vec<(Condition, usize)>,
    /// Last step of the joint phase is `independent_start + 1`; steps
    /// `independent_start..=1` run per segment.
    pub independent_start: usize,
    pub scale: f64,
    pub seed: u64,
}

impl GenerationPlan {
    pub fn validate(&self, steps: usize) -> Result<()> {
        if self.segments.is_empty() {
            return Err(param("plan needs at least one segment"));
        }
        if self.segments.iter().any(|s| s.1 == 0) {
            return Err(param("segment lengths must be >= 1"));
        }
        if self.independent_start > steps {
            return Err(param(format!(
                "independent_start {} exceeds T={steps}",
                self.independent_start
            )));
        }
        if self.scale.is_nan() || self.scale < 0.0 {
            return Err(param("guidance scale must be >= 0"));
        }
        Ok(())
    }

    /// Hex SHA-256 of the plan's canonical text form.
    pub fn digest(&self) -> String {
        let segs: Vec<String> = self
            .segments
            .iter()
            .map(|(c, l)| format!("{}:{l}", c.index()))
            .collect();
        let canon = format!(
            "segments={};ts={};s={:e};seed={}",
            segs.join(","),
            self.independent_start,
            self.scale,
            self.seed
        );
        hex::encode(Sha256::digest(canon.as_bytes()))
    }
}

/// Two-phase sampling: steps `T..=T_s+1` denoise the concatenated sequence
/// as one context (neighbours cross segment boundaries), steps `T_s..=1`
/// denoise each segment on its own with boundary sentinels at its edges.
pub fn generate_multi<D: Denoiser + ?Sized>(
    plan: &GenerationPlan,
    denoiser: &D,
    transitions: &TransitionModel,
) -> Result<TokenSequence> {
    let steps = transitions.steps();
    plan.validate(steps)?;
    if denoiser.num_tokens() != transitions.num_tokens() {
        return Err(param("denoiser and transition vocabularies differ"));
    }
    let mut z = TokenSequence::masked(transitions.num_tokens(), &plan.segments)?;
    let mut streams: Vec<Stream> = (0..plan.segments.len())
        .map(|i| rng::substream(plan.seed, i as u64))
        .collect();
    let offsets = z.segment_offsets();

    for t in ((plan.independent_start + 1)..=steps).rev() {
        let input = DenoiseInput {
            states: z.states(),
            conditions: z.conditions(),
            offsets: &offsets,
        };
        let dists = reverse_distributions(&input, t, denoiser, transitions, plan.scale, 0)?;
        let mut next = z.clone();
        for (i, stream) in streams.iter_mut().enumerate() {
            for p in z.segment_range(i) {
                next.states_mut()[p] = rng::categorical(stream, &dists[p]);
            }
        }
        z = next;
    }

    for t in (1..=plan.independent_start).rev() {
        let mut next = z.clone();
        for (i, stream) in streams.iter_mut().enumerate() {
            let r = z.segment_range(i);
            let input = DenoiseInput {
                states: &z.states()[r.clone()],
                conditions: &z.conditions()[r.clone()],
                offsets: &offsets[r.clone()],
            };
            let dists =
                reverse_distributions(&input, t, denoiser, transitions, plan.scale, r.start)?;
            for (p, d) in r.zip(&dists) {
                next.states_mut()[p] = rng::categorical(stream, d);
            }
        }
        z = next;
    }
    ensure_unmasked(&z)?;
    Ok(z)
}
