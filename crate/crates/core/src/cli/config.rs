//! Run configuration: defaults, TOML file, `MOTIONDIFF_*` environment
//! variables and `--set section.key=value` overrides, applied in that order.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::schedule::NoiseSchedule;
use crate::tokens::Condition;

pub const ENV_PREFIX: &str = "MOTIONDIFF_";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub codebook: CodebookConfig,
    pub schedule: ScheduleConfig,
    pub sampler: SamplerConfig,
    pub train: TrainSection,
    pub dataset: DatasetConfig,
    pub metrics: MetricsConfig,
    pub paths: PathsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodebookConfig {
    pub k: usize,
    pub d: usize,
    pub clusters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindName {
    Uniform,
    Dynamic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub gamma_max: f64,
    pub alpha_min: f64,
    pub kind: KindName,
    /// Rank-softmax scale for training, corruption and single generation.
    pub eta_single: f64,
    /// Rank-softmax scale for multi-segment generation.
    pub eta_multi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub scale_single: f64,
    pub scale_multi: f64,
    pub independent_start: usize,
    /// Condition and token length for `generate`.
    pub condition: u32,
    pub length: usize,
    /// Segment conditions and per-segment token length for `generate-multi`.
    pub plan: Vec<u32>,
    pub segment_length: usize,
    /// Sequences per generate call; sample `i` uses seed `seed + i`.
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub null_prob: f64,
    pub buckets: usize,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub conditions: usize,
    pub per_condition: usize,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub fps: f64,
    pub half_width: usize,
    pub eps: f64,
    pub diversity_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub codebook: PathBuf,
    pub dataset: PathBuf,
    pub model: PathBuf,
    pub tokens: PathBuf,
    pub corrupted: PathBuf,
    pub report: PathBuf,
}

impl Default for CodebookConfig {
    fn default() -> Self {
        Self {
            k: 32,
            d: 6,
            clusters: 4,
        }
    }
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            gamma_max: 0.9,
            alpha_min: 1e-4,
            kind: KindName::Dynamic,
            eta_single: 0.5,
            eta_multi: 0.25,
        }
    }
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            scale_single: 4.0,
            scale_multi: 2.0,
            independent_start: 90,
            condition: 1,
            length: 12,
            plan: vec![1, 2, 1, 2],
            segment_length: 12,
            samples: 1,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            lambda: 5e-4,
            learning_rate: 0.1,
            epochs: 200,
            null_prob: 0.1,
            buckets: 10,
            batch_size: 8,
        }
    }
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            conditions: 2,
            per_condition: 50,
            length: 12,
        }
    }
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            fps: 20.0,
            half_width: 40,
            eps: 1e-12,
            diversity_pairs: 100,
        }
    }
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            codebook: "codebook.txt".into(),
            dataset: "dataset.jsonl".into(),
            model: "model.txt".into(),
            tokens: "tokens.jsonl".into(),
            corrupted: "corrupted.jsonl".into(),
            report: "report.jsonl".into(),
        }
    }
}

/// Parses a single override value as a TOML literal, falling back to a bare
/// string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Sets `key` (`seed` or `section.key`) in `table`. Integers written over
/// float fields are widened.
pub fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<(), String> {
    let parts: Vec<&str> = key.split('.').collect();
    let (last, sections) = parts.split_last().ok_or("empty override key")?;
    let mut cur = table;
    for s in sections {
        cur = cur
            .entry(s.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| format!("override key {key}: {s} is not a section"))?;
    }
    let mut value = parse_value(raw);
    if let (Some(toml::Value::Float(_)), toml::Value::Integer(i)) = (cur.get(*last), &value) {
        value = toml::Value::Float(*i as f64);
    }
    if let (Some(toml::Value::String(_)), v) = (cur.get(*last), &value) {
        if !v.is_str() {
            value = toml::Value::String(raw.to_string());
        }
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Maps `MOTIONDIFF_TRAIN_LEARNING_RATE` to `train.learning_rate` and
/// `MOTIONDIFF_SEED` to `seed`.
pub fn env_key(var: &str) -> Option<String> {
    let rest = var.strip_prefix(ENV_PREFIX)?.to_ascii_lowercase();
    if rest == "seed" {
        return Some(rest);
    }
    let (section, key) = rest.split_once('_')?;
    Some(format!("{section}.{key}"))
}

impl RunConfig {
    /// Resolves defaults, then `file_text`, then `env`, then `sets`.
    pub fn resolve(
        file_text: Option<&str>,
        env: &[(String, String)],
        sets: &[String],
    ) -> Result<Self, String> {
        let mut table = toml::Table::try_from(RunConfig::default()).map_err(|e| e.to_string())?;
        if let Some(text) = file_text {
            let file: toml::Table = text
                .parse()
                .map_err(|e: toml::de::Error| e.message().to_string())?;
            merge(&mut table, file);
        }
        for (var, value) in env {
            let key =
                env_key(var).ok_or_else(|| format!("unrecognized environment override {var}"))?;
            apply_override(&mut table, &key, value)?;
        }
        for s in sets {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| format!("--set expects key=value, got {s:?}"))?;
            apply_override(&mut table, k.trim(), v.trim())?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| e.message().to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        let c = &self.codebook;
        check(c.k >= 2, "codebook.k must be >= 2")?;
        check(c.d >= 1, "codebook.d must be >= 1")?;
        check(c.clusters >= 1, "codebook.clusters must be >= 1")?;
        let s = &self.schedule;
        NoiseSchedule::linear(s.steps, s.gamma_max, s.alpha_min).map_err(|e| e.to_string())?;
        check(
            s.eta_single.is_finite() && s.eta_multi.is_finite(),
            "schedule.eta_* must be finite",
        )?;
        let p = &self.sampler;
        check(
            p.scale_single >= 0.0 && p.scale_multi >= 0.0,
            "sampler scales must be >= 0",
        )?;
        check(
            p.independent_start <= s.steps,
            "sampler.independent_start must be <= schedule.steps",
        )?;
        check(
            p.length >= 1 && p.segment_length >= 1,
            "sampler lengths must be >= 1",
        )?;
        check(
            !p.plan.is_empty(),
            "sampler.plan needs at least one segment",
        )?;
        check(p.samples >= 1, "sampler.samples must be >= 1")?;
        let v = self.dataset.conditions as u32;
        check(
            p.condition <= v && p.plan.iter().all(|&c| c <= v),
            "sampler conditions must be in 0..=dataset.conditions",
        )?;
        let t = &self.train;
        check(
            t.lambda >= 0.0 && t.lambda.is_finite(),
            "train.lambda must be >= 0",
        )?;
        check(
            t.learning_rate > 0.0 && t.learning_rate.is_finite(),
            "train.learning_rate must be > 0",
        )?;
        check(
            (0.0..=1.0).contains(&t.null_prob),
            "train.null_prob must be in [0, 1]",
        )?;
        check(
            t.buckets >= 1 && t.buckets <= s.steps,
            "train.buckets must be in 1..=schedule.steps",
        )?;
        check(t.batch_size >= 1, "train.batch_size must be >= 1")?;
        let d = &self.dataset;
        check(d.conditions >= 1, "dataset.conditions must be >= 1")?;
        check(
            d.per_condition >= 1 && d.length >= 2,
            "dataset needs per_condition >= 1 and length >= 2",
        )?;
        let m = &self.metrics;
        check(m.fps > 0.0 && m.fps.is_finite(), "metrics.fps must be > 0")?;
        check(m.eps > 0.0, "metrics.eps must be > 0")?;
        check(m.half_width >= 10, "metrics.half_width must be >= 10")?;
        check(
            m.diversity_pairs >= 1,
            "metrics.diversity_pairs must be >= 1",
        )?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the resolved configuration.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn plan_segments(&self) -> Vec<(Condition, usize)> {
        self.sampler
            .plan
            .iter()
            .map(|&c| (Condition::from(c), self.sampler.segment_length))
            .collect()
    }
}

fn check(ok: bool, msg: &str) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.to_string())
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => {
                base.insert(k, toml::Value::Float(i as f64));
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = RunConfig::resolve(None, &[], &[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.schedule.steps, 100);
        assert_eq!(cfg.sampler.independent_start, 90);
    }

    #[test]
    fn precedence_file_env_set() {
        let file = "seed = 3\n[train]\nepochs = 5\nlearning_rate = 1\n";
        let env = vec![("MOTIONDIFF_TRAIN_EPOCHS".to_string(), "7".to_string())];
        let cfg = RunConfig::resolve(Some(file), &env, &[]).unwrap();
        assert_eq!(
            (cfg.seed, cfg.train.epochs, cfg.train.learning_rate),
            (3, 7, 1.0)
        );
        let sets = vec![
            "train.epochs=9".to_string(),
            "schedule.kind=uniform".to_string(),
        ];
        let cfg = RunConfig::resolve(Some(file), &env, &sets).unwrap();
        assert_eq!(cfg.train.epochs, 9);
        assert_eq!(cfg.schedule.kind, KindName::Uniform);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::resolve(Some("[train]\nepoch = 3\n"), &[], &[]).is_err());
        assert!(RunConfig::resolve(None, &[], &["nope.x=1".into()]).is_err());
        let env = vec![("MOTIONDIFF_BOGUS".to_string(), "1".to_string())];
        assert!(RunConfig::resolve(None, &env, &[]).is_err());
    }

    #[test]
    fn module_constraints_rechecked() {
        assert!(RunConfig::resolve(None, &[], &["sampler.independent_start=101".into()]).is_err());
        assert!(RunConfig::resolve(None, &[], &["schedule.gamma_max=1.5".into()]).is_err());
        assert!(RunConfig::resolve(None, &[], &["codebook.k=1".into()]).is_err());
        assert!(RunConfig::resolve(None, &[], &["sampler.plan=[1, 3]".into()]).is_err());
    }

    #[test]
    fn env_key_mapping() {
        assert_eq!(env_key("MOTIONDIFF_SEED").as_deref(), Some("seed"));
        assert_eq!(
            env_key("MOTIONDIFF_SCHEDULE_GAMMA_MAX").as_deref(),
            Some("schedule.gamma_max")
        );
        assert_eq!(env_key("OTHER"), None);
    }

    #[test]
    fn digest_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.seed = 1;
        assert_ne!(a.digest(), b.digest());
    }
}
