//! Subcommand bodies. Each returns the files it read and wrote plus a summary
//! for stdout; the dispatcher adds the manifest.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rand::Rng;
use serde_json::json;

use super::config::{KindName, RunConfig};
use super::files::{self, CorruptRecord, EvalRecord, TokenRecord};
use super::CliError;
use crate::codebook::{Codebook, UPSAMPLE};
use crate::denoiser::{self, Denoiser, Example, TabularDenoiser, TrainConfig};
use crate::error::Error;
use crate::metrics;
use crate::rng;
use crate::sampler::{self, GenerationPlan};
use crate::schedule::{NoiseSchedule, TransitionModel};
use crate::tokens::{Condition, TokenSequence};

pub struct Outcome {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub stdout: String,
}

type CmdResult = std::result::Result<Outcome, CliError>;

fn load_codebook(cfg: &RunConfig) -> std::result::Result<Codebook, CliError> {
    let cb = Codebook::from_text(&files::read_text(&cfg.paths.codebook)?)?;
    if cb.len() != cfg.codebook.k {
        return Err(CliError::Config(format!(
            "codebook file has K={} but codebook.k={}",
            cb.len(),
            cfg.codebook.k
        )));
    }
    Ok(cb)
}

fn load_dataset(cfg: &RunConfig, k: usize) -> std::result::Result<Vec<Example>, CliError> {
    let data: Vec<Example> = files::from_jsonl(&files::read_text(&cfg.paths.dataset)?, "dataset")?;
    for (i, ex) in data.iter().enumerate() {
        if let Some(&bad) = ex.tokens.iter().find(|&&s| s > k) {
            return Err(
                Error::Format(format!("dataset record {i}: token {bad} outside 0..={k}")).into(),
            );
        }
    }
    Ok(data)
}

fn load_model(cfg: &RunConfig, k: usize) -> std::result::Result<TabularDenoiser, CliError> {
    let model = TabularDenoiser::from_text(&files::read_text(&cfg.paths.model)?)?;
    let shape = (model.num_tokens(), model.steps());
    if shape != (k, cfg.schedule.steps) {
        return Err(CliError::Config(format!(
            "model has K={} T={}, config expects K={k} T={}",
            shape.0, shape.1, cfg.schedule.steps
        )));
    }
    Ok(model)
}

pub fn transitions(cfg: &RunConfig, cb: &Codebook, eta: f64) -> crate::Result<TransitionModel> {
    let s = &cfg.schedule;
    let sched = NoiseSchedule::linear(s.steps, s.gamma_max, s.alpha_min)?;
    match s.kind {
        KindName::Uniform => TransitionModel::uniform(sched, cb.len()),
        KindName::Dynamic => TransitionModel::dynamic(sched, cb.distance_ranks(), eta),
    }
}

pub fn make_codebook(cfg: &RunConfig, out: &Path) -> CmdResult {
    let c = &cfg.codebook;
    let cb = Codebook::synthetic(c.k, c.d, c.clusters, cfg.seed)?;
    files::write_atomic(out, cb.to_text().as_bytes())?;
    Ok(Outcome {
        inputs: vec![],
        outputs: vec![out.to_path_buf()],
        stdout: format!("codebook k={} d={} path={}\n", c.k, c.d, out.display()),
    })
}

/// Quantized sinusoids around the codebook's per-dimension mean and spread.
/// Condition `c` sets the frequency (`0.3 c` Hz) and per-dimension phases;
/// each sequence draws a phase shift and an amplitude factor.
pub fn synth_dataset(
    cb: &Codebook,
    conditions: usize,
    per_condition: usize,
    length: usize,
    fps: f64,
    seed: u64,
) -> crate::Result<Vec<Example>> {
    let mean = cb
        .entries()
        .mean_axis(Axis(0))
        .expect("codebook is non-empty");
    let std = cb.entries().std_axis(Axis(0), 0.0);
    let d = cb.dim();
    let frames = length * UPSAMPLE;
    let mut r = rng::root(seed);
    let mut out = Vec::with_capacity(conditions * per_condition);
    for c in 1..=conditions {
        let freq = 0.3 * c as f64;
        for _ in 0..per_condition {
            let shift = r.random_range(0.0..2.0 * PI);
            let amp = r.random_range(0.8..1.2);
            let x = Array2::from_shape_fn((frames, d), |(f, j)| {
                let phase = PI * (j * c) as f64 / d as f64;
                mean[j] + amp * std[j] * (2.0 * PI * freq * f as f64 / fps + phase + shift).sin()
            });
            let tokens = x
                .axis_chunks_iter(Axis(0), UPSAMPLE)
                .map(|block| {
                    cb.quantize(
                        block
                            .mean_axis(Axis(0))
                            .expect("block non-empty")
                            .as_slice()
                            .expect("contiguous"),
                    )
                })
                .collect::<crate::Result<Vec<usize>>>()?;
            out.push(Example {
                condition: Condition::Action(c as u32),
                tokens,
            });
        }
    }
    Ok(out)
}

pub fn make_dataset(cfg: &RunConfig, out: &Path) -> CmdResult {
    let cb = load_codebook(cfg)?;
    let d = &cfg.dataset;
    let data = synth_dataset(
        &cb,
        d.conditions,
        d.per_condition,
        d.length,
        cfg.metrics.fps,
        cfg.seed,
    )?;
    files::write_atomic(out, files::to_jsonl(&data).as_bytes())?;
    Ok(Outcome {
        inputs: vec![cfg.paths.codebook.clone()],
        outputs: vec![out.to_path_buf()],
        stdout: format!(
            "dataset records={} length={} path={}\n",
            data.len(),
            d.length,
            out.display()
        ),
    })
}

pub fn train(cfg: &RunConfig, out: &Path) -> CmdResult {
    let cb = load_codebook(cfg)?;
    let data = load_dataset(cfg, cb.len())?;
    if let Some(ex) = data
        .iter()
        .find(|e| e.condition.index() > cfg.dataset.conditions)
    {
        return Err(CliError::Config(format!(
            "dataset condition {} exceeds dataset.conditions={}",
            ex.condition.index(),
            cfg.dataset.conditions
        )));
    }
    let tm = transitions(cfg, &cb, cfg.schedule.eta_single)?;
    let t = &cfg.train;
    let mut model = TabularDenoiser::new(
        cfg.dataset.conditions,
        t.buckets,
        cb.len(),
        cfg.schedule.steps,
    )?;
    let tc = TrainConfig {
        epochs: t.epochs,
        learning_rate: t.learning_rate,
        null_prob: t.null_prob,
        lambda: t.lambda,
        batch_size: t.batch_size,
        seed: cfg.seed,
    };
    let curve = denoiser::train(&mut model, &data, &tm, &tc)?;
    files::write_atomic(out, model.to_text().as_bytes())?;
    let first = curve.first().copied().unwrap_or(f64::NAN);
    let last = curve.last().copied().unwrap_or(f64::NAN);
    Ok(Outcome {
        inputs: vec![cfg.paths.codebook.clone(), cfg.paths.dataset.clone()],
        outputs: vec![out.to_path_buf()],
        stdout: format!(
            "train epochs={} loss_first={first:.6} loss_last={last:.6} path={}\n",
            t.epochs,
            out.display()
        ),
    })
}

pub fn corrupt(cfg: &RunConfig, t: usize, out: &Path) -> CmdResult {
    if t > cfg.schedule.steps {
        return Err(CliError::Config(format!(
            "--t {t} exceeds schedule.steps={}",
            cfg.schedule.steps
        )));
    }
    let cb = load_codebook(cfg)?;
    let data = load_dataset(cfg, cb.len())?;
    let tm = transitions(cfg, &cb, cfg.schedule.eta_single)?;
    let mut r = rng::root(cfg.seed);
    let mut records = Vec::with_capacity(data.len());
    let (mut masked, mut total) = (0usize, 0usize);
    for (index, ex) in data.iter().enumerate() {
        let seq = TokenSequence::single(ex.tokens.clone(), cb.len(), ex.condition)?;
        let after = tm.forward_sample(&seq, t, &mut r)?;
        masked += after.mask_count();
        total += after.len();
        records.push(CorruptRecord {
            index,
            t,
            condition: ex.condition,
            before: ex.tokens.clone(),
            after: after.states().to_vec(),
        });
    }
    files::write_atomic(out, files::to_jsonl(&records).as_bytes())?;
    let frac = if total == 0 {
        0.0
    } else {
        masked as f64 / total as f64
    };
    Ok(Outcome {
        inputs: vec![cfg.paths.codebook.clone(), cfg.paths.dataset.clone()],
        outputs: vec![out.to_path_buf()],
        stdout: format!(
            "corrupt t={t} positions={total} mask_fraction={frac:.6} expected={:.6} path={}\n",
            tm.schedule().gamma_bar(t),
            out.display()
        ),
    })
}

pub fn generate(cfg: &RunConfig, out: &Path) -> CmdResult {
    let cb = load_codebook(cfg)?;
    let model = load_model(cfg, cb.len())?;
    let tm = transitions(cfg, &cb, cfg.schedule.eta_single)?;
    let p = &cfg.sampler;
    let cond = Condition::from(p.condition);
    let mut records = Vec::with_capacity(p.samples);
    for sample in 0..p.samples {
        let seed = cfg.seed.wrapping_add(sample as u64);
        let mut r = rng::substream(seed, 0);
        let seq = sampler::generate_single(&model, &tm, cond, p.length, p.scale_single, &mut r)?;
        records.push(TokenRecord {
            sample,
            seed,
            scale: p.scale_single,
            independent_start: None,
            plan_digest: None,
            segments: seq.segments(),
            boundaries: vec![],
            states: seq.states().to_vec(),
        });
    }
    files::write_atomic(out, files::to_jsonl(&records).as_bytes())?;
    Ok(Outcome {
        inputs: vec![cfg.paths.codebook.clone(), cfg.paths.model.clone()],
        outputs: vec![out.to_path_buf()],
        stdout: format!(
            "generate samples={} length={} path={}\n",
            p.samples,
            p.length,
            out.display()
        ),
    })
}

pub fn generate_multi(cfg: &RunConfig, out: &Path) -> CmdResult {
    let cb = load_codebook(cfg)?;
    let model = load_model(cfg, cb.len())?;
    let tm = transitions(cfg, &cb, cfg.schedule.eta_multi)?;
    let p = &cfg.sampler;
    let mut records = Vec::with_capacity(p.samples);
    for sample in 0..p.samples {
        let plan = GenerationPlan {
            segments: cfg.plan_segments(),
            independent_start: p.independent_start,
            scale: p.scale_multi,
            seed: cfg.seed.wrapping_add(sample as u64),
        };
        let seq = sampler::generate_multi(&plan, &model, &tm)?;
        records.push(TokenRecord {
            sample,
            seed: plan.seed,
            scale: plan.scale,
            independent_start: Some(plan.independent_start),
            plan_digest: Some(plan.digest()),
            segments: seq.segments(),
            boundaries: seq.interior_boundaries().to_vec(),
            states: seq.states().to_vec(),
        });
    }
    files::write_atomic(out, files::to_jsonl(&records).as_bytes())?;
    let bounds: Vec<String> = records[0]
        .boundaries
        .iter()
        .map(|b| b.to_string())
        .collect();
    Ok(Outcome {
        inputs: vec![cfg.paths.codebook.clone(), cfg.paths.model.clone()],
        outputs: vec![out.to_path_buf()],
        stdout: format!(
            "generate-multi samples={} segments={} token_boundaries={} path={}\n",
            p.samples,
            p.plan.len(),
            bounds.join(","),
            out.display()
        ),
    })
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn summary(metric: &str, values: &[f64], records: &mut Vec<EvalRecord>, stdout: &mut String) {
    if values.is_empty() {
        return;
    }
    let (mean, std) = mean_std(values);
    stdout.push_str(&format!(
        "{metric} mean={mean:.6} std={std:.6} n={}\n",
        values.len()
    ));
    records.push(EvalRecord {
        metric: format!("{metric}.summary"),
        sample: None,
        window: None,
        value: mean,
        params: json!({ "std": std, "count": values.len() }),
    });
}

pub fn evaluate(cfg: &RunConfig, out: &Path) -> CmdResult {
    let cb = load_codebook(cfg)?;
    let tokens: Vec<TokenRecord> =
        files::from_jsonl(&files::read_text(&cfg.paths.tokens)?, "tokens")?;
    if tokens.is_empty() {
        return Err(Error::Format("tokens file has no records".into()).into());
    }
    let m = &cfg.metrics;
    let mut inputs = vec![cfg.paths.codebook.clone(), cfg.paths.tokens.clone()];
    let mut records = Vec::new();
    let mut profiles = String::new();
    let (mut clip_vals, mut window_vals, mut features) = (vec![], vec![], vec![]);
    for rec in &tokens {
        let seq = rec.sequence(cb.len())?;
        let traj = cb.decode(&seq, m.fps)?;
        features.push(traj.mean_pooled());
        let frame_bounds: Vec<usize> = rec.boundaries.iter().map(|b| b * UPSAMPLE).collect();
        profiles.push_str(&format!("# sample {}\n", rec.sample));
        profiles.push_str(&metrics::profile_export(&traj, &frame_bounds));
        let params = json!({ "fps": m.fps, "eps": m.eps, "half_width": m.half_width });
        if traj.len() >= 5 {
            let r = metrics::jerk(&traj, 0..traj.len(), m.eps)?;
            clip_vals.push(r.total);
            records.push(EvalRecord {
                metric: "jerk_clip".into(),
                sample: Some(rec.sample),
                window: Some([0, traj.len()]),
                value: r.total,
                params: params.clone(),
            });
        }
        for (b, w) in frame_bounds.iter().zip(metrics::transition_windows(
            &frame_bounds,
            m.half_width,
            traj.len(),
        )) {
            if w.len() < 5 {
                log::warn!(
                    "sample {} boundary {b}: window {w:?} too short for jerk",
                    rec.sample
                );
                continue;
            }
            let r = metrics::jerk(&traj, w.clone(), m.eps)?;
            window_vals.push(r.total);
            let mut p = params.clone();
            p["boundary"] = json!(b);
            p["floored"] = json!(r.floored.iter().filter(|&&f| f).count());
            records.push(EvalRecord {
                metric: "jerk_transition".into(),
                sample: Some(rec.sample),
                window: Some([w.start, w.end]),
                value: r.total,
                params: p,
            });
        }
    }
    let mut stdout = String::new();
    summary("jerk_clip", &clip_vals, &mut records, &mut stdout);
    summary("jerk_transition", &window_vals, &mut records, &mut stdout);

    if features.len() >= 2 {
        let value = metrics::diversity(&features, m.diversity_pairs, &mut rng::root(cfg.seed))?;
        stdout.push_str(&format!("diversity value={value:.6}\n"));
        records.push(EvalRecord {
            metric: "diversity".into(),
            sample: None,
            window: None,
            value,
            params: json!({ "pairs": m.diversity_pairs }),
        });
    }
    if cfg.paths.dataset.exists() {
        let data = load_dataset(cfg, cb.len())?;
        let reference = data
            .iter()
            .map(|ex| {
                let seq = TokenSequence::single(ex.tokens.clone(), cb.len(), ex.condition)?;
                Ok(cb.decode(&seq, m.fps)?.mean_pooled())
            })
            .collect::<crate::Result<Vec<_>>>()?;
        let d = cb.dim();
        if features.len() > d && reference.len() > d {
            let value = metrics::frechet_lite(&features, &reference)?;
            stdout.push_str(&format!("frechet_lite value={value:.6}\n"));
            records.push(EvalRecord {
                metric: "frechet_lite".into(),
                sample: None,
                window: None,
                value,
                params: json!({ "generated": features.len(), "reference": reference.len() }),
            });
            inputs.push(cfg.paths.dataset.clone());
        } else {
            log::info!("frechet_lite skipped: needs more than {d} samples per set");
        }
    }

    let mut profile_path = out.as_os_str().to_owned();
    profile_path.push(".profile.txt");
    let profile_path = PathBuf::from(profile_path);
    files::write_atomic(out, files::to_jsonl(&records).as_bytes())?;
    files::write_atomic(&profile_path, profiles.as_bytes())?;
    stdout.push_str(&format!(
        "report records={} path={}\n",
        records.len(),
        out.display()
    ));
    Ok(Outcome {
        inputs,
        outputs: vec![out.to_path_buf(), profile_path],
        stdout,
    })
}

pub fn matrix_audit(cfg: &RunConfig, multi: bool, out: Option<&Path>) -> CmdResult {
    let cb = load_codebook(cfg)?;
    let eta = if multi {
        cfg.schedule.eta_multi
    } else {
        cfg.schedule.eta_single
    };
    let table = transitions(cfg, &cb, eta)?.audit_table();
    match out {
        Some(path) => {
            files::write_atomic(path, table.as_bytes())?;
            Ok(Outcome {
                inputs: vec![cfg.paths.codebook.clone()],
                outputs: vec![path.to_path_buf()],
                stdout: format!(
                    "matrix-audit rows={} path={}\n",
                    cfg.schedule.steps,
                    path.display()
                ),
            })
        }
        None => Ok(Outcome {
            inputs: vec![cfg.paths.codebook.clone()],
            outputs: vec![],
            stdout: table,
        }),
    }
}
